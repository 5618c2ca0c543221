// include/lid/ivector.h

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

#ifndef LID_IVECTOR_H_
#define LID_IVECTOR_H_

#include <cstdint>
#include <string>
#include <vector>

#include "lid/common.h"
#include "lid/features.h"
#include "lid/stats.h"

namespace lid {

class FullGmm;

// Per-class means, diagonal covariances and priors estimated from posterior-
// weighted moments; the anchor model of the total-variability extractor.
struct SupervisedGmm {
  Matrix means;  // M x D
  Matrix vars;   // M x D
  Vector priors;

  int NumClasses() const { return static_cast<int>(priors.size()); }
  int Dim() const { return static_cast<int>(means.cols()); }
  void Check() const;
};

// Weighted-moment estimate over aligned (posteriors, features, mask)
// utterances.  Classes with occupancy below 1 fall back to the global mean
// and variance.
SupervisedGmm InitSupervisedGmm(const std::vector<Matrix> &posteriors,
                                const std::vector<Matrix> &feats,
                                const std::vector<VadMask> &masks,
                                double variance_floor_factor = 1e-6);

// Anchor taken from a tandem UBM: full covariances diagonalized per class.
SupervisedGmm SupervisedGmmFromFull(const FullGmm &full);

// Total-variability model.  t_blocks[c] maps the R-dim factor into class c's
// mean offset; covariances stay fixed during training.
struct IvectorExtractor {
  std::vector<Matrix> t_blocks;  // M blocks of D x R
  Matrix means;                  // M x D
  Matrix vars;                   // M x D diagonal covariances

  int NumClasses() const { return static_cast<int>(t_blocks.size()); }
  int Dim() const { return static_cast<int>(means.cols()); }
  int Rank() const {
    return t_blocks.empty() ? 0 : static_cast<int>(t_blocks[0].cols());
  }
  void Check() const;
};

// Seeded Gaussian T initialization scaled to the anchor model's variances.
IvectorExtractor InitExtractor(const SupervisedGmm &gmm, int rank,
                               uint64_t seed);

// Posterior moments of the factor for one utterance's centered statistics.
struct IvectorPosterior {
  Vector mean;       // E[w]
  Matrix precision;  // L = I + sum_c N_c T_c' Sigma_c^-1 T_c
};

IvectorPosterior IvectorPosteriorMoments(const IvectorExtractor &ext,
                                         const SuffStats &stats);
Vector ExtractIvector(const IvectorExtractor &ext, const SuffStats &stats);

// Batch extraction, one row per utterance.
Matrix ExtractIvectors(const IvectorExtractor &ext,
                       const std::vector<SuffStats> &stats, int jobs = 1);

// One EM iteration over per-utterance centered statistics.  Returns the
// marginal log-likelihood (up to data-dependent constants) of the extractor
// as passed in; the sequence over repeated calls is non-decreasing.
double EmIteration(IvectorExtractor *ext, const std::vector<SuffStats> &stats,
                   int jobs = 1);

void WriteExtractor(const std::string &path, const IvectorExtractor &ext);
IvectorExtractor ReadExtractor(const std::string &path);

}  // namespace lid

#endif  // LID_IVECTOR_H_
