// src/synth.cc

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

#include "lid/synth.h"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <numeric>
#include <random>

namespace lid {

namespace {

constexpr double kFrameShiftS = 0.01;  // label frame rate
constexpr std::array<double, 3> kFormantAmps = {1.0, 0.7, 0.5};

std::array<double, 3> GridFormants(int phone_id) {
  // 8 x 8 grid in (F1, F2); F3 walks the whole inventory so every phone is
  // unique even when two share an (F1, F2) neighborhood after warping.
  int i = phone_id / 8;
  int j = phone_id % 8;
  return {280.0 + 75.0 * i, 950.0 + 145.0 * j, 2250.0 + 17.0 * phone_id};
}

}  // namespace

void SynthLanguageSpec::Check(int sample_rate_hz) const {
  const int kp = NumPhones();
  if (kp < 1) LID_ERR << "language " << language << " has no phones";
  if (static_cast<int>(phone_ids.size()) != kp ||
      static_cast<int>(noise_levels.size()) != kp ||
      transitions.rows() != kp || transitions.cols() != kp)
    LID_ERR << "language " << language << " has inconsistent spec shapes";
  const double nyquist = sample_rate_hz / 2.0;
  for (const auto &f : formants_hz)
    for (double hz : f)
      if (hz <= 0 || hz >= nyquist)
        LID_ERR << "language " << language << " formant " << hz
                << " Hz outside (0, " << nyquist << ")";
  for (int p = 0; p < kp; p++) {
    if (std::abs(transitions.row(p).sum() - 1.0) > 1e-8)
      LID_ERR << "language " << language << " transition row " << p
              << " sums to " << transitions.row(p).sum();
    if (transitions.row(p).minCoeff() < 0)
      LID_ERR << "language " << language << " has negative transition";
  }
  if (mean_duration_frames < 1.0)
    LID_ERR << "mean phone duration must be at least one frame";
}

std::vector<SynthLanguageSpec> DefaultLanguageSpecs(int num_languages,
                                                    uint64_t seed,
                                                    double noise_level) {
  if (num_languages < 2 || num_languages > kGlobalNumPhones)
    LID_ERR << "need between 2 and " << kGlobalNumPhones
            << " languages, got " << num_languages;
  std::vector<int> order(kGlobalNumPhones);
  std::iota(order.begin(), order.end(), 0);
  std::mt19937_64 rng(seed);
  std::shuffle(order.begin(), order.end(), rng);

  // Round-robin deal so every language gets the same inventory size and the
  // subsets are interleaved across the grid rather than clustered.
  const int per_language = kGlobalNumPhones / num_languages;
  std::vector<SynthLanguageSpec> specs(num_languages);
  for (int l = 0; l < num_languages; l++) {
    SynthLanguageSpec &spec = specs[l];
    spec.language = "lang" + std::to_string(l);
    for (int k = 0; k < per_language; k++) {
      int phone = order[k * num_languages + l];
      spec.phone_ids.push_back(phone);
      spec.formants_hz.push_back(GridFormants(phone));
      spec.noise_levels.push_back(noise_level);
    }
    spec.transitions = Matrix::Constant(per_language, per_language,
                                        1.0 / (per_language - 1));
    spec.transitions.diagonal().setZero();
  }
  return specs;
}

RenderedUtterance RenderUtterance(const SynthLanguageSpec &spec,
                                  double duration_s, int sample_rate_hz,
                                  uint64_t seed, double formant_scale) {
  spec.Check(sample_rate_hz);
  if (duration_s <= 0) LID_ERR << "non-positive duration " << duration_s;
  const double nyquist = sample_rate_hz / 2.0;
  for (const auto &f : spec.formants_hz)
    for (double hz : f)
      if (hz * formant_scale >= nyquist)
        LID_ERR << "scaled formant " << hz * formant_scale
                << " Hz at or above Nyquist " << nyquist;

  const int samples_per_frame =
      static_cast<int>(std::lround(kFrameShiftS * sample_rate_hz));
  const int num_frames = static_cast<int>(std::lround(duration_s / kFrameShiftS));
  const int num_samples = num_frames * samples_per_frame;

  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> phase(0.0, 2.0 * M_PI);
  std::normal_distribution<double> gauss(0.0, 1.0);
  std::uniform_int_distribution<int> start_phone(0, spec.NumPhones() - 1);
  // Geometric segment length with mean spec.mean_duration_frames: one frame
  // plus a geometric number of repeats.
  std::geometric_distribution<int> extra_frames(1.0 / spec.mean_duration_frames);

  RenderedUtterance utt;
  utt.samples.assign(num_samples, 0.0);
  utt.labels.assign(num_frames, 0);

  int phone = start_phone(rng);
  int frame = 0;
  while (frame < num_frames) {
    const int seg_frames = std::min(1 + extra_frames(rng), num_frames - frame);
    const auto &formants = spec.formants_hz[phone];
    const double noise = spec.noise_levels[phone];
    double phases[3];
    for (int k = 0; k < 3; k++) phases[k] = phase(rng);

    const int begin = frame * samples_per_frame;
    const int end = (frame + seg_frames) * samples_per_frame;
    for (int n = begin; n < end; n++) {
      double s = 0.0;
      for (int k = 0; k < 3; k++)
        s += kFormantAmps[k] *
             std::sin(2.0 * M_PI * formants[k] * formant_scale * n /
                          sample_rate_hz +
                      phases[k]);
      utt.samples[n] = s + noise * gauss(rng);
    }
    std::fill(utt.labels.begin() + frame, utt.labels.begin() + frame + seg_frames,
              spec.phone_ids[phone]);

    frame += seg_frames;
    // The next phone comes from the transition row; segment lengths already
    // model self-repetition, so rows built by DefaultLanguageSpecs have zero
    // diagonal.
    double u = std::uniform_real_distribution<double>(0.0, 1.0)(rng);
    double cum = 0.0;
    int next = spec.NumPhones() - 1;
    for (int q = 0; q < spec.NumPhones(); q++) {
      cum += spec.transitions(phone, q);
      if (u < cum) {
        next = q;
        break;
      }
    }
    phone = next;
  }

  double peak = 0.0;
  for (double s : utt.samples) peak = std::max(peak, std::abs(s));
  if (peak > 0) {
    const double gain = 0.5 / peak;
    for (double &s : utt.samples) s *= gain;
  }
  return utt;
}

Manifest SynthesizeCorpus(const std::vector<SynthLanguageSpec> &specs,
                          const SynthOptions &opts, const std::string &out_dir) {
  if (specs.size() < 2) LID_ERR << "need at least 2 language specs";
  if (opts.durations_s.empty()) LID_ERR << "no durations given";
  for (double d : opts.durations_s)
    if (d != 3.0 && d != 10.0 && d != 30.0)
      LID_ERR << "duration " << d << " s not in {3, 10, 30}";
  std::vector<int> counts = opts.utts_per_duration;
  if (counts.empty())
    counts.assign(opts.durations_s.size(), opts.utts_per_language);
  if (counts.size() != opts.durations_s.size())
    LID_ERR << "utts_per_duration has " << counts.size() << " entries for "
            << opts.durations_s.size() << " durations";
  for (const auto &spec : specs) spec.Check(opts.sample_rate_hz);

  namespace fs = std::filesystem;
  fs::create_directories(fs::path(out_dir) / "audio");
  fs::create_directories(fs::path(out_dir) / "labels");

  struct Job {
    const SynthLanguageSpec *spec;
    double duration_s;
    uint64_t seed;
    double warp;
    ManifestRow row;
    std::string label_path;
  };
  std::vector<Job> jobs;
  uint64_t index = 0;
  for (const auto &spec : specs) {
    for (std::size_t d = 0; d < opts.durations_s.size(); d++) {
      for (int i = 0; i < counts[d]; i++) {
        Job job;
        job.spec = &spec;
        job.duration_s = opts.durations_s[d];
        job.seed = opts.seed + index;
        job.warp = 1.0;
        if (opts.warp_jitter > 0) {
          // Drawn from its own stream so the audio RNG sequence is the same
          // with and without jitter.
          std::mt19937_64 wrng(job.seed ^ 0x9e3779b97f4a7c15ull);
          job.warp = std::uniform_real_distribution<double>(
              1.0 - opts.warp_jitter, 1.0 + opts.warp_jitter)(wrng);
        }
        char name[64];
        std::snprintf(name, sizeof(name), "%s_%02ds_%04d",
                      spec.language.c_str(),
                      static_cast<int>(opts.durations_s[d]), i);
        job.row.utt_id = name;
        job.row.path = (fs::path(out_dir) / "audio" / (job.row.utt_id + ".wav")).string();
        job.row.language = spec.language;
        job.row.duration_s = opts.durations_s[d];
        if (opts.warp_jitter > 0) job.row.vtln_warp = job.warp;
        job.label_path =
            (fs::path(out_dir) / "labels" / (job.row.utt_id + ".labels")).string();
        jobs.push_back(std::move(job));
        index++;
      }
    }
  }

  ParallelFor(static_cast<int>(jobs.size()), opts.jobs, [&](int j) {
    const Job &job = jobs[j];
    RenderedUtterance utt = RenderUtterance(*job.spec, job.duration_s,
                                            opts.sample_rate_hz, job.seed,
                                            job.warp);
    WriteWav(job.row.path, utt.samples, opts.sample_rate_hz);
    WriteLabels(job.label_path, utt.labels);
  });

  Manifest manifest;
  for (auto &job : jobs) manifest.rows.push_back(std::move(job.row));
  manifest.CheckUnique();
  return manifest;
}

}  // namespace lid
