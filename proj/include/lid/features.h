// include/lid/features.h

// Copyright 2026  The lidkit authors

// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#ifndef LID_FEATURES_H_
#define LID_FEATURES_H_

#include <cstdint>
#include <vector>

#include "lid/common.h"
#include "lid/io.h"

namespace lid {

struct DiagGmm;  // gmm.h; needed only by the warp estimator

// A T x D matrix of frame-level features, one frame per row.
struct FeatureMatrix {
  Matrix values;
  double frame_shift_s = 0.01;

  int NumRows() const { return static_cast<int>(values.rows()); }
  int NumCols() const { return static_cast<int>(values.cols()); }
};

// true = speech.  Always as long as the feature matrix it was derived from.
using VadMask = std::vector<uint8_t>;

struct FrontEndConfig {
  double frame_len_ms = 20.0;
  double frame_shift_ms = 10.0;
  double dither_amplitude = 1.0 / 32768.0;
  double preemphasis_coeff = 0.97;
  int num_mel_bins = 23;
  int num_cepstra = 7;
  double low_freq_hz = 20.0;
  double high_freq_hz = 3800.0;
  double vtln_warp = 1.0;
  bool use_energy = true;

  void Check(int sample_rate_hz) const;

  // The three front ends used by the recognizer: 7 static cepstra with
  // energy for the shifted-delta stream, 19 cepstra plus energy for the
  // 60-dim MFCC stream, and 40 untruncated coefficients over 40 bins for
  // the high-resolution stream feeding the network.
  static FrontEndConfig SdcStatic();
  static FrontEndConfig Mfcc60Static();
  static FrontEndConfig HighRes();
};

struct SdcConfig {
  int n_static = 7;     // N
  int delta_spread = 1; // d
  int block_shift = 3;  // P
  int num_blocks = 7;   // k

  int OutputDim() const { return n_static + n_static * num_blocks; }
};

struct VadOptions {
  double threshold_offset = 0.0;  // relative to mean log energy
  int context = 2;
  double proportion = 0.6;
};

// Mel filterbank over FFT power bins, optionally VTLN warped.  Warping is a
// piecewise-linear map of the filter edge frequencies; warp factor w moves a
// filter nominally at f toward w*f in the mid band, so audio whose spectrum is
// compressed by w is normalized by choosing warp w.  Warp 1.0 is a bit-exact
// identity.
class MelBanks {
 public:
  MelBanks(const FrontEndConfig &cfg, int sample_rate_hz, int fft_size);

  // bins x (fft_size/2 + 1)
  const Matrix &Weights() const { return weights_; }
  Vector Apply(const Vector &power_spectrum) const;

  static double MelScale(double hz);
  static double InverseMelScale(double mel);
  static double WarpFreq(double freq, double warp, double vtln_low,
                         double vtln_high, double low_freq, double high_freq);

 private:
  Matrix weights_;
};

// Cuts audio into frames of cfg.frame_len_ms every cfg.frame_shift_ms and
// applies seeded uniform dither, preemphasis, and a Hamming window.
// T = floor((num_samples - frame_len) / shift) + 1; audio shorter than one
// frame is an error.
Matrix FrameAndWindow(const AudioSegment &audio, const FrontEndConfig &cfg,
                      uint64_t seed);

// Windowed frames -> cepstra: power spectrum, warped mel filterbank, log,
// DCT-II (orthonormal), keep num_cepstra coefficients.  With use_energy the
// 0th coefficient is replaced by the log frame energy.
FeatureMatrix ComputeCepstra(const Matrix &frames, const FrontEndConfig &cfg,
                             int sample_rate_hz);

// FrameAndWindow + ComputeCepstra.
FeatureMatrix ComputeCepstra(const AudioSegment &audio, const FrontEndConfig &cfg,
                             uint64_t seed);

// Recomputes cepstra at every warp in the grid and returns the warp whose
// features score highest under warp_model (total log-likelihood).  Ties break
// toward the warp closest to 1.0, then toward the smaller warp.
double EstimateVtlnWarp(const AudioSegment &audio, const FrontEndConfig &cfg,
                        const DiagGmm &warp_model, const std::vector<double> &grid,
                        uint64_t seed);

std::vector<double> DefaultVtlnGrid();  // 0.80 .. 1.20 step 0.05

// Regression deltas with +/-window context and clamped edge indices.
// order 1 appends deltas, order 2 appends deltas and accelerations.
FeatureMatrix AddDeltas(const FeatureMatrix &feats, int order, int window);

// Shifted delta cepstra: per frame t and block i, c(t+i*P+d) - c(t+i*P-d)
// over the first n_static columns, indices clamped to [0, T-1], stacked after
// the static columns.
FeatureMatrix ComputeSdc(const FeatureMatrix &static_feats, const SdcConfig &cfg);

// Subtracts the per-dimension mean over a centered sliding window of
// window_s seconds (truncated at the edges).  Utterances shorter than the
// window get global mean subtraction.
FeatureMatrix SlidingCmn(const FeatureMatrix &feats, double window_s,
                         bool center = true);

// Energy VAD over column 0 (log energy).  A frame is candidate speech when
// its log energy exceeds the utterance mean plus threshold_offset; the final
// flag requires at least `proportion` of the frames in [t-context, t+context]
// (clipped to the utterance) to be candidates.
VadMask EnergyVad(const FeatureMatrix &feats, const VadOptions &opts);

// Rows of feats where mask is true.
FeatureMatrix SelectFrames(const FeatureMatrix &feats, const VadMask &mask);
Matrix SelectRows(const Matrix &mat, const VadMask &mask);

int NumFrames(std::size_t num_samples, const FrontEndConfig &cfg, int sample_rate_hz);

}  // namespace lid

#endif  // LID_FEATURES_H_
