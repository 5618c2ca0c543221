// include/lid/synth.h

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

#ifndef LID_SYNTH_H_
#define LID_SYNTH_H_

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "lid/common.h"
#include "lid/io.h"

namespace lid {

// One synthetic language: a set of "phones", each a formant triple rendered
// as three sinusoids plus noise.  Languages built by DefaultLanguageSpecs
// draw disjoint phone subsets from a shared 64-phone grid, so the corpus is
// separable in principle while all languages live in the same acoustic space.
struct SynthLanguageSpec {
  std::string language;
  std::vector<std::array<double, 3>> formants_hz;  // per phone
  std::vector<int> phone_ids;     // global label ids, parallel to formants_hz
  Matrix transitions;             // K_p x K_p, rows sum to 1
  double mean_duration_frames = 8.0;
  std::vector<double> noise_levels;  // per phone, relative to tone amplitude

  int NumPhones() const { return static_cast<int>(formants_hz.size()); }
  void Check(int sample_rate_hz) const;
};

struct SynthOptions {
  // Utterances per (language, duration) pair.  When utts_per_duration is set
  // it overrides utts_per_language with one count per entry of durations_s.
  int utts_per_language = 10;
  std::vector<int> utts_per_duration;
  std::vector<double> durations_s = {3.0, 10.0, 30.0};
  int sample_rate_hz = 8000;
  uint64_t seed = 0;
  // When positive, each utterance's formants are scaled by a factor drawn
  // uniformly from [1 - warp_jitter, 1 + warp_jitter], imitating vocal tract
  // length variation between speakers.  The factor is recorded in the
  // manifest's vtln_warp column.
  double warp_jitter = 0.0;
  int jobs = 1;
};

// Total size of the shared formant grid that DefaultLanguageSpecs carves up.
constexpr int kGlobalNumPhones = 64;

// Builds num_languages specs over disjoint subsets of the global phone grid.
// Each language receives floor(64 / num_languages) phones, dealt round robin
// from a seeded permutation, with uniform transitions to the other phones.
std::vector<SynthLanguageSpec> DefaultLanguageSpecs(int num_languages,
                                                    uint64_t seed,
                                                    double noise_level = 0.05);

struct RenderedUtterance {
  std::vector<double> samples;   // in [-0.5, 0.5]
  std::vector<int> labels;       // global phone id per 10 ms frame
};

// Markov walk over the language's phones with geometric segment durations
// (mean spec.mean_duration_frames); each segment is the sum of the phone's
// three formant sinusoids with random phase plus white noise.  formant_scale
// multiplies all frequencies before rendering.
RenderedUtterance RenderUtterance(const SynthLanguageSpec &spec,
                                  double duration_s, int sample_rate_hz,
                                  uint64_t seed, double formant_scale = 1.0);

// Renders the full corpus under out_dir (audio/<utt>.wav and
// labels/<utt>.labels) and returns its manifest.  Utterance seeds are
// opts.seed plus the global utterance index, so generation is reproducible
// and parallelizable.
Manifest SynthesizeCorpus(const std::vector<SynthLanguageSpec> &specs,
                          const SynthOptions &opts, const std::string &out_dir);

}  // namespace lid

#endif  // LID_SYNTH_H_
