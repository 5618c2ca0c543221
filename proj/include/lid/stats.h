// include/lid/stats.h

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

#ifndef LID_STATS_H_
#define LID_STATS_H_

#include <string>

#include "lid/common.h"
#include "lid/features.h"

namespace lid {

// Zeroth and first order occupancy statistics.  f holds F_c rows, or the
// centered form sum_t gamma_tc (y_t - mu_c) when centered is set.  The source
// of the posteriors (GMM components or network classes) is irrelevant here.
struct SuffStats {
  Vector n;   // M occupancies
  Matrix f;   // M x D
  bool centered = false;

  int NumClasses() const { return static_cast<int>(n.size()); }
  int Dim() const { return static_cast<int>(f.cols()); }
  void Check() const;
};

SuffStats ZeroStats(int num_classes, int dim, bool centered);

// Accumulates over frames with mask true only.  Posterior rows must sum to 1
// within 1e-6.  With means (M x D), the first-order sums are centered.
SuffStats AccumulateStats(const Matrix &posteriors, const Matrix &feats,
                          const VadMask &mask, const Matrix *means = nullptr);

// Elementwise sum; shapes and the centered flag must match.
SuffStats MergeStats(const SuffStats &a, const SuffStats &b);

// Zeroes entries below min_posterior and renormalizes each row.
Matrix PrunePosteriors(const Matrix &posteriors, double min_posterior = 1e-5);

void WriteStats(const std::string &path, const SuffStats &stats);
SuffStats ReadStats(const std::string &path);

}  // namespace lid

#endif  // LID_STATS_H_
