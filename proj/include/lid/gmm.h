// include/lid/gmm.h

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

#ifndef LID_GMM_H_
#define LID_GMM_H_

#include <cstdint>
#include <vector>

#include "lid/common.h"
#include "lid/io.h"

namespace lid {

// Diagonal-covariance GMM.  Rows of means/vars are components.
struct DiagGmm {
  Vector weights;  // M
  Matrix means;    // M x D
  Matrix vars;     // M x D

  int NumComponents() const { return static_cast<int>(weights.size()); }
  int Dim() const { return static_cast<int>(means.cols()); }
  void Check() const;

  // Per-component log(w_c) + log N(frame; mu_c, diag(vars_c)); T x M matrix
  // version for whole utterances.
  Vector ComponentLogLikes(const Vector &frame) const;
  Matrix ComponentLogLikes(const Matrix &frames) const;
  double LogLikelihood(const Vector &frame) const;  // log-sum-exp over components
};

// Full-covariance GMM sharing means and weights with the diagonal model it
// was derived from.  SetParams precomputes Cholesky factors; the model is
// immutable afterwards.
class FullGmm {
 public:
  void SetParams(Vector weights, Matrix means, std::vector<Matrix> covars);

  int NumComponents() const { return static_cast<int>(weights_.size()); }
  int Dim() const { return static_cast<int>(means_.cols()); }
  const Vector &weights() const { return weights_; }
  const Matrix &means() const { return means_; }
  const std::vector<Matrix> &covars() const { return covars_; }

  double ComponentLogLike(int c, const Vector &frame) const;
  Vector ComponentLogLikes(const Vector &frame) const;
  double LogLikelihood(const Vector &frame) const;

 private:
  Vector weights_;
  Matrix means_;
  std::vector<Matrix> covars_;
  std::vector<Matrix> inv_chol_;  // inverse Cholesky factor L^-1 per component
  Vector log_norm_;               // log w_c - 0.5 (D log 2pi + logdet)
};

struct UbmTrainOptions {
  int num_iters = 10;
  uint64_t seed = 0;
  double variance_floor_factor = 1e-6;  // times the global variance
  int jobs = 1;
};

// EM training from scratch: means are M distinct random frames, variances the
// global data variance, weights uniform.  Appends the total data
// log-likelihood per iteration (of the model entering that iteration) to
// loglikes when given; the sequence is non-decreasing.
DiagGmm TrainDiagUbm(const std::vector<Matrix> &data, int num_components,
                     const UbmTrainOptions &opts,
                     std::vector<double> *loglikes = nullptr);

// Further EM iterations on an existing model, for staged subset schedules.
// Returns per-iteration total log-likelihoods.
std::vector<double> RunDiagEm(DiagGmm *gmm, const std::vector<Matrix> &data,
                              int num_iters, const UbmTrainOptions &opts);

// One EM pass with fixed means and weights, re-estimating full covariances
// around the diagonal model's means.  Covariance eigenvalues are floored at
// 1e-4 times their mean; components with negligible occupancy keep the
// diagonal covariance.
FullGmm DiagToFull(const DiagGmm &diag, const std::vector<Matrix> &data,
                   int jobs = 1);

// Gaussian preselection: ranks components by diagonal log-likelihood, keeps
// top_n, renormalizes the full-covariance likelihoods over that set.  Pruned
// entries are exactly zero.
Vector TandemPosteriors(const DiagGmm &diag, const FullGmm &full,
                        const Vector &frame, int top_n);
Matrix TandemPosteriorMatrix(const DiagGmm &diag, const FullGmm &full,
                             const Matrix &frames, int top_n, int jobs = 1);

// Exact diagonal-model posteriors, one row per frame.
Matrix DiagPosteriorMatrix(const DiagGmm &gmm, const Matrix &frames);

void WriteGmms(const std::string &path, const DiagGmm &diag, const FullGmm &full);
void ReadGmms(const std::string &path, DiagGmm *diag, FullGmm *full);
void WriteDiagGmm(const std::string &path, const DiagGmm &gmm);
DiagGmm ReadDiagGmm(const std::string &path);

}  // namespace lid

#endif  // LID_GMM_H_
