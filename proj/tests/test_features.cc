// tests/test_features.cc

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

#include <cmath>
#include <random>
#include <vector>

#include "doctest.h"
#include "lid/features.h"
#include "lid/gmm.h"
#include "lid/synth.h"

using namespace lid;

namespace {

AudioSegment RandomAudio(int num_samples, uint64_t seed) {
  AudioSegment audio;
  audio.sample_rate_hz = 8000;
  audio.samples.resize(num_samples);
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> dist(-0.5, 0.5);
  for (auto &s : audio.samples) s = dist(rng);
  return audio;
}

}  // namespace

TEST_CASE("frame count follows the floor formula") {
  FrontEndConfig cfg;  // 20 ms window, 10 ms shift
  CHECK(NumFrames(8000, cfg, 8000) == 99);
  CHECK(NumFrames(160, cfg, 8000) == 1);
  CHECK(NumFrames(239, cfg, 8000) == 1);
  CHECK(NumFrames(240, cfg, 8000) == 2);
  CHECK(NumFrames(159, cfg, 8000) == 0);
  CHECK(NumFrames(0, cfg, 8000) == 0);
}

TEST_CASE("framing applies preemphasis then a Hamming window") {
  AudioSegment audio = RandomAudio(500, 4);
  FrontEndConfig cfg;
  cfg.dither_amplitude = 0.0;
  Matrix frames = FrameAndWindow(audio, cfg, 0);
  REQUIRE(frames.rows() == NumFrames(500, cfg, 8000));
  REQUIRE(frames.cols() == 160);

  const int t = 2;
  for (int n = 0; n < 160; n++) {
    const double w = 0.54 - 0.46 * std::cos(2.0 * M_PI * n / 159.0);
    const double x = audio.samples[t * 80 + n];
    const double prev = n == 0 ? x : audio.samples[t * 80 + n - 1];
    CHECK(frames(t, n) == doctest::Approx(w * (x - 0.97 * prev)).epsilon(1e-12));
  }
}

TEST_CASE("zero dither on all-zero audio yields all-zero frames") {
  AudioSegment audio;
  audio.samples.assign(1000, 0.0);
  FrontEndConfig cfg;
  cfg.dither_amplitude = 0.0;
  Matrix frames = FrameAndWindow(audio, cfg, 123);
  CHECK(frames.cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("dither is seeded and reproducible") {
  AudioSegment audio = RandomAudio(800, 9);
  FrontEndConfig cfg;
  Matrix a = FrameAndWindow(audio, cfg, 42);
  Matrix b = FrameAndWindow(audio, cfg, 42);
  Matrix c = FrameAndWindow(audio, cfg, 43);
  CHECK(a == b);
  CHECK(a != c);
}

TEST_CASE("front end presets have the documented dimensions") {
  AudioSegment audio = RandomAudio(4000, 2);

  FeatureMatrix sdc_static = ComputeCepstra(audio, FrontEndConfig::SdcStatic(), 1);
  CHECK(sdc_static.NumCols() == 7);

  FeatureMatrix mfcc = ComputeCepstra(audio, FrontEndConfig::Mfcc60Static(), 1);
  CHECK(mfcc.NumCols() == 20);
  CHECK(AddDeltas(mfcc, 2, 2).NumCols() == 60);

  FrontEndConfig hires = FrontEndConfig::HighRes();
  CHECK(hires.num_cepstra == 40);
  CHECK(hires.num_mel_bins == 40);
  CHECK(!hires.use_energy);
  FeatureMatrix hi = ComputeCepstra(audio, hires, 1);
  CHECK(hi.NumCols() == 40);
  // 25 ms window: fewer frames than the 20 ms streams.
  CHECK(hi.NumRows() == NumFrames(4000, hires, 8000));
  CHECK(hi.NumRows() < sdc_static.NumRows());
}

TEST_CASE("silence produces finite cepstra through the log floor") {
  AudioSegment audio;
  audio.samples.assign(2000, 0.0);
  FrontEndConfig cfg;
  cfg.dither_amplitude = 0.0;
  FeatureMatrix feats = ComputeCepstra(audio, cfg, 0);
  CHECK(feats.values.allFinite());
  // Energy column hits the floor exactly: log(1e-10).
  for (int t = 0; t < feats.NumRows(); t++)
    CHECK(feats.values(t, 0) == doctest::Approx(std::log(1e-10)));
}

TEST_CASE("energy column is the log squared norm of the windowed frame") {
  AudioSegment audio = RandomAudio(1200, 6);
  FrontEndConfig cfg;
  cfg.dither_amplitude = 0.0;
  Matrix frames = FrameAndWindow(audio, cfg, 0);
  FeatureMatrix feats = ComputeCepstra(audio, cfg, 0);
  REQUIRE(feats.NumRows() == frames.rows());
  for (int t = 0; t < frames.rows(); t++)
    CHECK(feats.values(t, 0) ==
          doctest::Approx(std::log(frames.row(t).squaredNorm())).epsilon(1e-10));
}

TEST_CASE("mel scale matches the analytic form") {
  CHECK(MelBanks::MelScale(700.0) == doctest::Approx(1127.0 * std::log(2.0)));
  CHECK(MelBanks::MelScale(0.0) == 0.0);
  for (double hz : {100.0, 1234.5, 3999.0})
    CHECK(MelBanks::InverseMelScale(MelBanks::MelScale(hz)) ==
          doctest::Approx(hz).epsilon(1e-10));
}

TEST_CASE("warp 1.0 is a bit-exact identity on filterbank weights") {
  FrontEndConfig cfg;
  MelBanks plain(cfg, 8000, 256);
  FrontEndConfig warped_cfg = cfg;
  warped_cfg.vtln_warp = 1.0;
  MelBanks warped(warped_cfg, 8000, 256);
  CHECK(plain.Weights() == warped.Weights());

  AudioSegment audio = RandomAudio(2000, 10);
  FeatureMatrix a = ComputeCepstra(audio, cfg, 3);
  FeatureMatrix b = ComputeCepstra(audio, warped_cfg, 3);
  CHECK(a.values == b.values);
}

TEST_CASE("the warp map fixes the band edges and scales the middle") {
  const double low = 20.0, high = 3800.0;
  const double vtln_low = 100.0, vtln_high = high - 500.0;
  for (double w : {0.85, 0.9, 1.0, 1.1, 1.2}) {
    CHECK(MelBanks::WarpFreq(low, w, vtln_low, vtln_high, low, high) ==
          doctest::Approx(low));
    CHECK(MelBanks::WarpFreq(high, w, vtln_low, vtln_high, low, high) ==
          doctest::Approx(high));
    CHECK(MelBanks::WarpFreq(2000.0, w, vtln_low, vtln_high, low, high) ==
          doctest::Approx(2000.0 * w));
    double prev = -1.0;
    for (double f = low; f <= high; f += 20.0) {
      double m = MelBanks::WarpFreq(f, w, vtln_low, vtln_high, low, high);
      CHECK(m > prev);
      prev = m;
    }
  }
}

TEST_CASE("a singleton grid always returns its only warp") {
  AudioSegment audio = RandomAudio(4000, 3);
  DiagGmm model;
  model.weights = Vector::Ones(1);
  model.means = Matrix::Zero(1, 7);
  model.vars = Matrix::Ones(1, 7);
  CHECK(EstimateVtlnWarp(audio, FrontEndConfig::SdcStatic(), model, {1.0}, 0) ==
        1.0);
}

namespace {

// A language over hand-picked low phone ids, so every formant (F3 at most
// 2250 + 17*31 = 2777 Hz) stays inside the linear VTLN band for all grid
// warps.  Phones near the band edges get clamped, partial warps, which
// biases recovery by a grid step.
SynthLanguageSpec LowBandSpec(const char *name, std::vector<int> ids) {
  SynthLanguageSpec s;
  s.language = name;
  for (int id : ids) {
    s.formants_hz.push_back({280.0 + 75.0 * (id / 8), 950.0 + 145.0 * (id % 8),
                             2250.0 + 17.0 * id});
    s.phone_ids.push_back(id);
    s.noise_levels.push_back(0.02);
  }
  const int K = static_cast<int>(ids.size());
  s.transitions = Matrix::Constant(K, K, 1.0 / (K - 1));
  s.transitions.diagonal().setZero();
  return s;
}

}  // namespace

TEST_CASE("warp estimation recovers a 0.9 construction warp from the grid") {
  std::vector<SynthLanguageSpec> specs = {
      LowBandSpec("aa", {0, 3, 9, 14, 17, 22, 28, 31}),
      LowBandSpec("bb", {1, 5, 8, 12, 19, 25, 27, 30})};
  const FrontEndConfig cfg = FrontEndConfig::SdcStatic();

  std::vector<Matrix> train;
  for (int lang = 0; lang < 2; lang++) {
    for (int i = 0; i < 4; i++) {
      RenderedUtterance utt =
          RenderUtterance(specs[lang], 10.0, 8000, 1000 + lang * 4 + i);
      AudioSegment audio;
      audio.samples = utt.samples;
      train.push_back(ComputeCepstra(audio, cfg, 50 + lang * 4 + i).values);
    }
  }
  UbmTrainOptions opts;
  opts.num_iters = 4;
  opts.seed = 7;
  DiagGmm warp_model = TrainDiagUbm(train, 16, opts);

  for (int probe = 0; probe < 2; probe++) {
    RenderedUtterance warped =
        RenderUtterance(specs[probe], 10.0, 8000, 2000 + probe, 0.9);
    AudioSegment audio;
    audio.samples = warped.samples;
    CHECK(EstimateVtlnWarp(audio, cfg, warp_model, DefaultVtlnGrid(),
                           99 + probe) == doctest::Approx(0.9));

    RenderedUtterance plain =
        RenderUtterance(specs[probe], 10.0, 8000, 3000 + probe);
    audio.samples = plain.samples;
    CHECK(EstimateVtlnWarp(audio, cfg, warp_model, DefaultVtlnGrid(),
                           99 + probe) == doctest::Approx(1.0));
  }
}

TEST_CASE("deltas of a constant signal are zero") {
  FeatureMatrix f;
  f.values = Matrix::Constant(12, 3, 4.2);
  FeatureMatrix out = AddDeltas(f, 2, 2);
  REQUIRE(out.NumCols() == 9);
  CHECK(out.values.rightCols(6).cwiseAbs().maxCoeff() == 0.0);
  CHECK(out.values.leftCols(3) == f.values);
}

TEST_CASE("deltas of a ramp match the clamped regression formula") {
  FeatureMatrix f;
  f.values.resize(5, 1);
  f.values << 0, 1, 2, 3, 4;
  FeatureMatrix out = AddDeltas(f, 2, 2);
  // delta(t) = sum_tau tau*(c[min(t+tau,4)] - c[max(t-tau,0)]) / (2*(1+4))
  const double expected_delta[5] = {0.5, 0.8, 1.0, 0.8, 0.5};
  const double expected_accel[5] = {0.13, 0.11, 0.0, -0.11, -0.13};
  for (int t = 0; t < 5; t++) {
    CHECK(out.values(t, 1) == doctest::Approx(expected_delta[t]));
    CHECK(out.values(t, 2) == doctest::Approx(expected_accel[t]));
  }
}

TEST_CASE("shifted delta output is 56 dimensional and copies statics") {
  FeatureMatrix f;
  f.values = Matrix::Constant(20, 7, 1.5);
  SdcConfig cfg;
  CHECK(cfg.OutputDim() == 56);
  FeatureMatrix out = ComputeSdc(f, cfg);
  REQUIRE(out.NumCols() == 56);
  CHECK(out.values.leftCols(7) == f.values);
  CHECK(out.values.rightCols(49).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("shifted deltas match a brute-force oracle") {
  std::mt19937_64 rng(13);
  std::normal_distribution<double> dist;
  FeatureMatrix f;
  f.values.resize(30, 7);
  for (int t = 0; t < 30; t++)
    for (int d = 0; d < 7; d++) f.values(t, d) = dist(rng);
  SdcConfig cfg;  // 7-1-3-7
  FeatureMatrix out = ComputeSdc(f, cfg);
  for (int t = 0; t < 30; t++) {
    for (int b = 0; b < 7; b++) {
      for (int d = 0; d < 7; d++) {
        int hi = std::min(29, std::max(0, t + b * 3 + 1));
        int lo = std::min(29, std::max(0, t + b * 3 - 1));
        CHECK(out.values(t, 7 + b * 7 + d) ==
              doctest::Approx(f.values(hi, d) - f.values(lo, d)).epsilon(1e-12));
      }
    }
  }
}

TEST_CASE("sliding CMN subtracts the global mean for short inputs") {
  std::mt19937_64 rng(3);
  std::normal_distribution<double> dist;
  FeatureMatrix f;
  f.values.resize(50, 4);  // 0.5 s, far below the 3 s window
  for (int t = 0; t < 50; t++)
    for (int d = 0; d < 4; d++) f.values(t, d) = dist(rng) + d;
  FeatureMatrix out = SlidingCmn(f, 3.0);
  for (int d = 0; d < 4; d++)
    CHECK(std::abs(out.values.col(d).mean()) < 1e-10);
}

TEST_CASE("a one-frame window cancels every frame exactly") {
  FeatureMatrix f;
  f.values = Matrix::Random(8, 3);
  FeatureMatrix out = SlidingCmn(f, 0.01);
  CHECK(out.values.cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("sliding CMN matches the naive windowed mean") {
  std::mt19937_64 rng(8);
  std::normal_distribution<double> dist;
  FeatureMatrix f;
  f.values.resize(600, 5);
  for (int t = 0; t < 600; t++)
    for (int d = 0; d < 5; d++) f.values(t, d) = dist(rng);
  FeatureMatrix out = SlidingCmn(f, 3.0);  // W = 300 frames
  const int W = 300;
  for (int t = 0; t < 600; t++) {
    int lo = std::max(0, t - (W - 1) / 2);
    int hi = std::min(599, t + W / 2);
    RowVector mean = RowVector::Zero(5);
    for (int u = lo; u <= hi; u++) mean += f.values.row(u);
    mean /= hi - lo + 1;
    for (int d = 0; d < 5; d++)
      CHECK(out.values(t, d) ==
            doctest::Approx(f.values(t, d) - mean[d]).epsilon(1e-10));
  }
}

TEST_CASE("VAD flags a loud burst and nothing else") {
  FeatureMatrix f;
  f.values = Matrix::Zero(100, 2);
  // Quiet floor at -10 with a 10-frame burst well above the mean.
  for (int t = 0; t < 100; t++) f.values(t, 0) = -10.0;
  for (int t = 40; t < 50; t++) f.values(t, 0) = 5.0;
  VadOptions opts;  // offset 0, context 2, proportion 0.6
  VadMask mask = EnergyVad(f, opts);
  // Hand rule: threshold is the mean; a frame is speech when >= 60% of its
  // +-2 window is above threshold, so the burst plus nothing else fires.
  for (int t = 0; t < 100; t++) {
    const bool expected = t >= 40 && t < 50;
    CHECK(static_cast<bool>(mask[t]) == expected);
  }
}

TEST_CASE("VAD with a positive offset rejects constant energy entirely") {
  FeatureMatrix f;
  f.values = Matrix::Constant(50, 1, 2.5);
  VadOptions opts;
  opts.threshold_offset = 0.1;
  VadMask mask = EnergyVad(f, opts);
  for (uint8_t m : mask) CHECK(m == 0);
}

TEST_CASE("proportion one with no context reduces to the raw threshold test") {
  std::mt19937_64 rng(21);
  FeatureMatrix f;
  f.values.resize(80, 1);
  std::normal_distribution<double> dist;
  for (int t = 0; t < 80; t++) f.values(t, 0) = dist(rng);
  VadOptions opts;
  opts.context = 0;
  opts.proportion = 1.0;
  VadMask mask = EnergyVad(f, opts);
  const double mean = f.values.col(0).mean();
  for (int t = 0; t < 80; t++)
    CHECK(static_cast<bool>(mask[t]) == (f.values(t, 0) > mean));
}

TEST_CASE("frame selection keeps masked rows in order") {
  FeatureMatrix f;
  f.values.resize(5, 2);
  f.values << 0, 0, 1, 1, 2, 2, 3, 3, 4, 4;
  VadMask mask = {1, 0, 1, 0, 1};
  FeatureMatrix out = SelectFrames(f, mask);
  REQUIRE(out.NumRows() == 3);
  CHECK(out.values(0, 0) == 0);
  CHECK(out.values(1, 0) == 2);
  CHECK(out.values(2, 0) == 4);
  VadMask bad = {1, 0};
  CHECK_THROWS_AS(SelectFrames(f, bad), Error);
}

TEST_CASE("front end config validation rejects bad setups") {
  FrontEndConfig cfg;
  cfg.high_freq_hz = 4100.0;  // above Nyquist for 8 kHz
  CHECK_THROWS_AS(cfg.Check(8000), Error);
  FrontEndConfig neg;
  neg.num_cepstra = 0;
  CHECK_THROWS_AS(neg.Check(8000), Error);
  FrontEndConfig more_ceps;
  more_ceps.num_cepstra = 30;  // more cepstra than mel bins
  more_ceps.num_mel_bins = 23;
  CHECK_THROWS_AS(more_ceps.Check(8000), Error);
}
