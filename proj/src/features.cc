// src/features.cc

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

#include "lid/features.h"

#include <algorithm>
#include <cmath>
#include <mutex>
#include <random>

#include <fftw3.h>

#include "lid/gmm.h"

namespace lid {

namespace {

constexpr double kLogFloor = 1e-10;

int NextPowerOfTwo(int n) {
  int p = 1;
  while (p < n) p *= 2;
  return p;
}

// FFTW plan creation is not thread safe; executing a plan on its own buffers
// is.  Each thread builds its own instance.
class RealFft {
 public:
  explicit RealFft(int n) : n_(n) {
    in_ = fftw_alloc_real(n);
    out_ = fftw_alloc_complex(n / 2 + 1);
    std::lock_guard<std::mutex> lock(PlanMutex());
    plan_ = fftw_plan_dft_r2c_1d(n, in_, out_, FFTW_ESTIMATE);
  }

  ~RealFft() {
    {
      std::lock_guard<std::mutex> lock(PlanMutex());
      fftw_destroy_plan(plan_);
    }
    fftw_free(in_);
    fftw_free(out_);
  }

  RealFft(const RealFft &) = delete;
  RealFft &operator=(const RealFft &) = delete;

  // Zero pads the frame to the transform size and returns |X_k|^2 for
  // k = 0 .. n/2.
  Vector PowerSpectrum(const Eigen::Ref<const Vector> &frame) {
    LID_ASSERT(frame.size() <= n_);
    for (int i = 0; i < frame.size(); i++) in_[i] = frame[i];
    for (int i = static_cast<int>(frame.size()); i < n_; i++) in_[i] = 0.0;
    fftw_execute(plan_);
    Vector power(n_ / 2 + 1);
    for (int k = 0; k <= n_ / 2; k++)
      power[k] = out_[k][0] * out_[k][0] + out_[k][1] * out_[k][1];
    return power;
  }

 private:
  static std::mutex &PlanMutex() {
    static std::mutex mu;
    return mu;
  }

  int n_;
  double *in_;
  fftw_complex *out_;
  fftw_plan plan_;
};

int FrameLengthSamples(const FrontEndConfig &cfg, int sample_rate_hz) {
  return static_cast<int>(std::lround(cfg.frame_len_ms * 1e-3 * sample_rate_hz));
}

int FrameShiftSamples(const FrontEndConfig &cfg, int sample_rate_hz) {
  return static_cast<int>(std::lround(cfg.frame_shift_ms * 1e-3 * sample_rate_hz));
}

// Orthonormal DCT-II, rows x cols = num_ceps x num_bins.
Matrix DctMatrix(int num_ceps, int num_bins) {
  Matrix dct(num_ceps, num_bins);
  for (int k = 0; k < num_ceps; k++) {
    double norm = (k == 0) ? std::sqrt(1.0 / num_bins) : std::sqrt(2.0 / num_bins);
    for (int n = 0; n < num_bins; n++)
      dct(k, n) = norm * std::cos(M_PI * (n + 0.5) * k / num_bins);
  }
  return dct;
}

// T x (nfft/2+1) power spectra plus per frame log energies of the windowed
// frames.
void PowerSpectra(const Matrix &frames, int fft_size, Matrix *power,
                  Vector *log_energy) {
  const int num_frames = static_cast<int>(frames.rows());
  RealFft fft(fft_size);
  power->resize(num_frames, fft_size / 2 + 1);
  log_energy->resize(num_frames);
  for (int t = 0; t < num_frames; t++) {
    (*log_energy)[t] = std::log(std::max(frames.row(t).squaredNorm(), kLogFloor));
    power->row(t) = fft.PowerSpectrum(frames.row(t).transpose()).transpose();
  }
}

FeatureMatrix CepstraFromPower(const Matrix &power, const Vector &log_energy,
                               const FrontEndConfig &cfg, int sample_rate_hz,
                               int fft_size) {
  MelBanks banks(cfg, sample_rate_hz, fft_size);
  const int num_frames = static_cast<int>(power.rows());
  // log mel energies, then an orthonormal DCT-II truncated to num_cepstra.
  Matrix logmel = (power * banks.Weights().transpose()).cwiseMax(kLogFloor);
  logmel = logmel.array().log().matrix();
  Matrix dct = DctMatrix(cfg.num_cepstra, cfg.num_mel_bins);
  FeatureMatrix feats;
  feats.values = logmel * dct.transpose();
  feats.frame_shift_s = cfg.frame_shift_ms * 1e-3;
  if (cfg.use_energy) feats.values.col(0) = log_energy;
  LID_ASSERT(feats.values.allFinite());
  return feats;
}

}  // namespace

void FrontEndConfig::Check(int sample_rate_hz) const {
  if (frame_len_ms <= 0 || frame_shift_ms <= 0 || frame_shift_ms > frame_len_ms)
    LID_ERR << "bad frame length/shift: " << frame_len_ms << "/" << frame_shift_ms;
  if (num_cepstra < 1 || num_cepstra > num_mel_bins)
    LID_ERR << "num_cepstra " << num_cepstra << " out of range for "
            << num_mel_bins << " mel bins";
  if (low_freq_hz < 0 || high_freq_hz <= low_freq_hz ||
      high_freq_hz > sample_rate_hz / 2.0)
    LID_ERR << "bad mel frequency range [" << low_freq_hz << ", " << high_freq_hz
            << "] at sample rate " << sample_rate_hz;
}

FrontEndConfig FrontEndConfig::SdcStatic() {
  FrontEndConfig cfg;
  cfg.frame_len_ms = 20.0;
  cfg.num_cepstra = 7;
  cfg.use_energy = true;
  return cfg;
}

FrontEndConfig FrontEndConfig::Mfcc60Static() {
  FrontEndConfig cfg;
  cfg.frame_len_ms = 20.0;
  cfg.num_cepstra = 20;
  cfg.use_energy = true;
  return cfg;
}

FrontEndConfig FrontEndConfig::HighRes() {
  FrontEndConfig cfg;
  cfg.frame_len_ms = 25.0;
  cfg.num_mel_bins = 40;
  cfg.num_cepstra = 40;
  cfg.use_energy = false;
  return cfg;
}

double MelBanks::MelScale(double hz) { return 1127.0 * std::log1p(hz / 700.0); }

double MelBanks::InverseMelScale(double mel) {
  return 700.0 * (std::exp(mel / 1127.0) - 1.0);
}

double MelBanks::WarpFreq(double freq, double warp, double vtln_low,
                          double vtln_high, double low_freq, double high_freq) {
  if (warp == 1.0) return freq;  // identity must be bit exact
  if (freq < low_freq || freq > high_freq) return freq;
  LID_ASSERT(vtln_low > low_freq && vtln_high < high_freq);
  // Piecewise linear map taking [low_freq, high_freq] onto itself with
  // central slope `warp`, so a filter nominally at f reads from warp * f.
  // The knees are pulled inward just enough that the mapped band stays
  // inside [low_freq, high_freq] for the whole warp grid.
  double l = vtln_low * std::max(1.0, 1.0 / warp);
  double h = vtln_high * std::min(1.0, 1.0 / warp);
  double fl = warp * l;
  double fh = warp * h;
  LID_ASSERT(l > low_freq && h < high_freq && l < h);
  if (freq < l) {
    double scale_left = (fl - low_freq) / (l - low_freq);
    return low_freq + scale_left * (freq - low_freq);
  } else if (freq < h) {
    return warp * freq;
  } else {
    double scale_right = (high_freq - fh) / (high_freq - h);
    return high_freq + scale_right * (freq - high_freq);
  }
}

MelBanks::MelBanks(const FrontEndConfig &cfg, int sample_rate_hz, int fft_size) {
  cfg.Check(sample_rate_hz);
  const int num_fft_bins = fft_size / 2 + 1;
  const double mel_low = MelScale(cfg.low_freq_hz);
  const double mel_high = MelScale(cfg.high_freq_hz);
  const double mel_delta = (mel_high - mel_low) / (cfg.num_mel_bins + 1);
  const double bin_width_hz = static_cast<double>(sample_rate_hz) / fft_size;
  const double vtln_low = 100.0;
  const double vtln_high = cfg.high_freq_hz - 500.0;

  weights_ = Matrix::Zero(cfg.num_mel_bins, num_fft_bins);
  for (int m = 0; m < cfg.num_mel_bins; m++) {
    double left = mel_low + m * mel_delta;
    double center = left + mel_delta;
    double right = center + mel_delta;
    if (cfg.vtln_warp != 1.0) {
      left = MelScale(WarpFreq(InverseMelScale(left), cfg.vtln_warp, vtln_low,
                               vtln_high, cfg.low_freq_hz, cfg.high_freq_hz));
      center = MelScale(WarpFreq(InverseMelScale(center), cfg.vtln_warp, vtln_low,
                                 vtln_high, cfg.low_freq_hz, cfg.high_freq_hz));
      right = MelScale(WarpFreq(InverseMelScale(right), cfg.vtln_warp, vtln_low,
                                vtln_high, cfg.low_freq_hz, cfg.high_freq_hz));
    }
    for (int k = 0; k < num_fft_bins; k++) {
      double mel = MelScale(k * bin_width_hz);
      if (mel > left && mel < right)
        weights_(m, k) = (mel <= center) ? (mel - left) / (center - left)
                                         : (right - mel) / (right - center);
    }
  }
}

Vector MelBanks::Apply(const Vector &power_spectrum) const {
  LID_ASSERT(power_spectrum.size() == weights_.cols());
  return weights_ * power_spectrum;
}

int NumFrames(std::size_t num_samples, const FrontEndConfig &cfg,
              int sample_rate_hz) {
  const int frame_len = FrameLengthSamples(cfg, sample_rate_hz);
  const int shift = FrameShiftSamples(cfg, sample_rate_hz);
  if (num_samples < static_cast<std::size_t>(frame_len)) return 0;
  return static_cast<int>((num_samples - frame_len) / shift) + 1;
}

Matrix FrameAndWindow(const AudioSegment &audio, const FrontEndConfig &cfg,
                      uint64_t seed) {
  cfg.Check(audio.sample_rate_hz);
  const int frame_len = FrameLengthSamples(cfg, audio.sample_rate_hz);
  const int shift = FrameShiftSamples(cfg, audio.sample_rate_hz);
  const int num_frames = NumFrames(audio.samples.size(), cfg, audio.sample_rate_hz);
  if (num_frames < 1)
    LID_ERR << "audio too short for framing: " << audio.samples.size()
            << " samples, frame length " << frame_len;

  std::vector<double> wave(audio.samples);
  if (cfg.dither_amplitude != 0.0) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> uni(-cfg.dither_amplitude,
                                               cfg.dither_amplitude);
    for (double &s : wave) s += uni(rng);
  }

  Vector window(frame_len);
  for (int n = 0; n < frame_len; n++)
    window[n] = 0.54 - 0.46 * std::cos(2.0 * M_PI * n / (frame_len - 1));

  Matrix frames(num_frames, frame_len);
  for (int t = 0; t < num_frames; t++) {
    const double *src = wave.data() + static_cast<std::size_t>(t) * shift;
    // Preemphasis within the frame; the first sample has no left neighbor
    // and is scaled against itself.
    frames(t, 0) = (src[0] - cfg.preemphasis_coeff * src[0]) * window[0];
    for (int n = 1; n < frame_len; n++)
      frames(t, n) = (src[n] - cfg.preemphasis_coeff * src[n - 1]) * window[n];
  }
  return frames;
}

FeatureMatrix ComputeCepstra(const Matrix &frames, const FrontEndConfig &cfg,
                             int sample_rate_hz) {
  const int fft_size = NextPowerOfTwo(static_cast<int>(frames.cols()));
  Matrix power;
  Vector log_energy;
  PowerSpectra(frames, fft_size, &power, &log_energy);
  return CepstraFromPower(power, log_energy, cfg, sample_rate_hz, fft_size);
}

FeatureMatrix ComputeCepstra(const AudioSegment &audio, const FrontEndConfig &cfg,
                             uint64_t seed) {
  return ComputeCepstra(FrameAndWindow(audio, cfg, seed), cfg,
                        audio.sample_rate_hz);
}

std::vector<double> DefaultVtlnGrid() {
  std::vector<double> grid;
  for (int i = 0; i <= 8; i++) grid.push_back(0.80 + 0.05 * i);
  return grid;
}

double EstimateVtlnWarp(const AudioSegment &audio, const FrontEndConfig &cfg,
                        const DiagGmm &warp_model, const std::vector<double> &grid,
                        uint64_t seed) {
  if (grid.empty()) LID_ERR << "empty VTLN warp grid";
  // The framing and FFT do not depend on the warp, so they are done once and
  // only the filterbank onward is recomputed per grid point.
  Matrix frames = FrameAndWindow(audio, cfg, seed);
  const int fft_size = NextPowerOfTwo(static_cast<int>(frames.cols()));
  Matrix power;
  Vector log_energy;
  PowerSpectra(frames, fft_size, &power, &log_energy);

  double best_warp = grid[0];
  double best_loglike = -std::numeric_limits<double>::infinity();
  for (double warp : grid) {
    FrontEndConfig warped = cfg;
    warped.vtln_warp = warp;
    FeatureMatrix feats =
        CepstraFromPower(power, log_energy, warped, audio.sample_rate_hz, fft_size);
    double loglike = 0.0;
    for (int t = 0; t < feats.NumRows(); t++)
      loglike += warp_model.LogLikelihood(feats.values.row(t).transpose());
    bool better = loglike > best_loglike;
    if (loglike == best_loglike) {
      // Prefer the warp closest to the identity, then the smaller one.
      double d_new = std::abs(warp - 1.0), d_best = std::abs(best_warp - 1.0);
      better = d_new < d_best || (d_new == d_best && warp < best_warp);
    }
    if (better) {
      best_warp = warp;
      best_loglike = loglike;
    }
  }
  return best_warp;
}

FeatureMatrix AddDeltas(const FeatureMatrix &feats, int order, int window) {
  if (order < 1 || order > 2) LID_ERR << "delta order must be 1 or 2, got " << order;
  if (window < 1) LID_ERR << "delta window must be positive, got " << window;
  const int T = feats.NumRows();
  const int D = feats.NumCols();
  double denom = 0.0;
  for (int tau = 1; tau <= window; tau++) denom += 2.0 * tau * tau;

  auto deltas = [&](const Matrix &src) {
    Matrix out(T, D);
    for (int t = 0; t < T; t++) {
      Vector acc = Vector::Zero(D);
      for (int tau = 1; tau <= window; tau++) {
        int lo = std::max(0, t - tau);
        int hi = std::min(T - 1, t + tau);
        acc += tau * (src.row(hi) - src.row(lo)).transpose();
      }
      out.row(t) = acc.transpose() / denom;
    }
    return out;
  };

  Matrix d1 = deltas(feats.values);
  FeatureMatrix out;
  out.frame_shift_s = feats.frame_shift_s;
  if (order == 1) {
    out.values.resize(T, 2 * D);
    out.values << feats.values, d1;
  } else {
    Matrix d2 = deltas(d1);
    out.values.resize(T, 3 * D);
    out.values << feats.values, d1, d2;
  }
  return out;
}

FeatureMatrix ComputeSdc(const FeatureMatrix &static_feats, const SdcConfig &cfg) {
  const int T = static_feats.NumRows();
  const int N = cfg.n_static;
  if (static_feats.NumCols() < N)
    LID_ERR << "shifted delta input has " << static_feats.NumCols()
            << " columns, need at least " << N;
  FeatureMatrix out;
  out.frame_shift_s = static_feats.frame_shift_s;
  out.values.resize(T, cfg.OutputDim());
  out.values.leftCols(N) = static_feats.values.leftCols(N);
  for (int t = 0; t < T; t++) {
    for (int i = 0; i < cfg.num_blocks; i++) {
      int hi = std::clamp(t + i * cfg.block_shift + cfg.delta_spread, 0, T - 1);
      int lo = std::clamp(t + i * cfg.block_shift - cfg.delta_spread, 0, T - 1);
      out.values.block(t, N + i * N, 1, N) =
          static_feats.values.block(hi, 0, 1, N) -
          static_feats.values.block(lo, 0, 1, N);
    }
  }
  return out;
}

FeatureMatrix SlidingCmn(const FeatureMatrix &feats, double window_s, bool center) {
  const int T = feats.NumRows();
  if (T == 0) LID_ERR << "sliding CMN on empty feature matrix";
  const int W = std::max(1, static_cast<int>(std::lround(window_s / feats.frame_shift_s)));
  FeatureMatrix out;
  out.frame_shift_s = feats.frame_shift_s;
  out.values.resizeLike(feats.values);
  if (T < W && center) {
    RowVector mean = feats.values.colwise().mean();
    out.values = feats.values.rowwise() - mean;
    return out;
  }
  for (int t = 0; t < T; t++) {
    int lo, hi;  // inclusive window bounds, truncated at the edges
    if (center) {
      lo = std::max(0, t - (W - 1) / 2);
      hi = std::min(T - 1, t + W / 2);
    } else {
      lo = std::max(0, t - W + 1);
      hi = t;
    }
    RowVector mean =
        feats.values.middleRows(lo, hi - lo + 1).colwise().mean();
    out.values.row(t) = feats.values.row(t) - mean;
  }
  return out;
}

VadMask EnergyVad(const FeatureMatrix &feats, const VadOptions &opts) {
  const int T = feats.NumRows();
  if (T == 0) return {};
  if (opts.context < 0 || opts.proportion <= 0.0 || opts.proportion > 1.0)
    LID_ERR << "bad VAD options: context " << opts.context << ", proportion "
            << opts.proportion;
  const Vector energy = feats.values.col(0);
  const double threshold = energy.mean() + opts.threshold_offset;
  std::vector<uint8_t> candidate(T);
  for (int t = 0; t < T; t++) candidate[t] = energy[t] > threshold ? 1 : 0;
  VadMask mask(T);
  for (int t = 0; t < T; t++) {
    int lo = std::max(0, t - opts.context);
    int hi = std::min(T - 1, t + opts.context);
    int count = 0;
    for (int u = lo; u <= hi; u++) count += candidate[u];
    mask[t] = count >= opts.proportion * (hi - lo + 1) ? 1 : 0;
  }
  return mask;
}

Matrix SelectRows(const Matrix &mat, const VadMask &mask) {
  if (static_cast<int>(mask.size()) != mat.rows())
    LID_ERR << "VAD mask has " << mask.size() << " entries for " << mat.rows()
            << " frames";
  int kept = 0;
  for (uint8_t m : mask) kept += m ? 1 : 0;
  Matrix out(kept, mat.cols());
  int r = 0;
  for (int t = 0; t < mat.rows(); t++)
    if (mask[t]) out.row(r++) = mat.row(t);
  return out;
}

FeatureMatrix SelectFrames(const FeatureMatrix &feats, const VadMask &mask) {
  FeatureMatrix out;
  out.frame_shift_s = feats.frame_shift_s;
  out.values = SelectRows(feats.values, mask);
  return out;
}

}  // namespace lid
