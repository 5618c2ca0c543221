// include/lid/classifier.h

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

#ifndef LID_CLASSIFIER_H_
#define LID_CLASSIFIER_H_

#include <cstdint>
#include <string>
#include <vector>

#include "lid/common.h"

namespace lid {

// Multinomial logistic regression over i-vectors.  The last weight column is
// the bias; labels keep their first-appearance order.
struct LogRegModel {
  Matrix weights;  // K x (R + 1)
  std::vector<std::string> labels;

  int NumClasses() const { return static_cast<int>(labels.size()); }
  int Dim() const { return static_cast<int>(weights.cols()) - 1; }
  void Check() const;

  Vector PredictPosteriors(const Vector &ivector) const;
  Matrix PredictPosteriors(const Matrix &ivectors) const;  // one row per input
};

struct LogRegTrainOptions {
  double l2_lambda = 1e-3;
  int max_iters = 500;
  double tolerance = 1e-6;  // on the gradient Frobenius norm
  uint64_t seed = 0;        // reserved; training starts from zeros
};

// Full-batch gradient descent with backtracking line search on the
// L2-regularized multinomial cross-entropy (bias unregularized), starting
// from zero weights.  Deterministic.
LogRegModel TrainLogReg(const Matrix &ivectors,
                        const std::vector<std::string> &labels,
                        const LogRegTrainOptions &opts);

// Retrains over K+1 classes from the combined training set; the prior label
// order is preserved and the new language appended.  Upstream models are not
// involved at all.
LogRegModel AddLanguage(const LogRegModel &model, const Matrix &all_ivectors,
                        const std::vector<std::string> &all_labels,
                        const LogRegTrainOptions &opts);

// Mean cross-entropy plus L2 term and its weight gradient; exposed for
// finite-difference checks.  x1 carries a trailing all-ones column.
double LogRegObjective(const Matrix &weights, const Matrix &x1,
                       const std::vector<int> &classes, double l2_lambda,
                       Matrix *grad);

void WriteLogReg(const std::string &path, const LogRegModel &model);
LogRegModel ReadLogReg(const std::string &path);

}  // namespace lid

#endif  // LID_CLASSIFIER_H_
