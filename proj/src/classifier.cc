// src/classifier.cc

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

#include "lid/classifier.h"

#include <algorithm>
#include <cmath>

#include "lid/io.h"

namespace lid {

void LogRegModel::Check() const {
  if (NumClasses() < 2) LID_ERR << "need at least 2 classes";
  if (weights.rows() != NumClasses() || weights.cols() < 2)
    LID_ERR << "inconsistent classifier shapes";
  if (!weights.allFinite()) LID_ERR << "non-finite classifier weights";
  for (std::size_t i = 0; i < labels.size(); i++)
    for (std::size_t j = i + 1; j < labels.size(); j++)
      if (labels[i] == labels[j]) LID_ERR << "duplicate label " << labels[i];
}

Matrix LogRegModel::PredictPosteriors(const Matrix &ivectors) const {
  if (ivectors.cols() != Dim())
    LID_ERR << "i-vector dim " << ivectors.cols() << " vs classifier dim "
            << Dim();
  Matrix scores = ivectors * weights.leftCols(Dim()).transpose();
  scores.rowwise() += weights.col(Dim()).transpose();
  for (int i = 0; i < scores.rows(); i++) {
    const double mx = scores.row(i).maxCoeff();
    scores.row(i) = (scores.row(i).array() - mx).exp();
    scores.row(i) /= scores.row(i).sum();
  }
  return scores;
}

Vector LogRegModel::PredictPosteriors(const Vector &ivector) const {
  return PredictPosteriors(Matrix(ivector.transpose())).row(0).transpose();
}

double LogRegObjective(const Matrix &weights, const Matrix &x1,
                       const std::vector<int> &classes, double l2_lambda,
                       Matrix *grad) {
  const int n = static_cast<int>(x1.rows());
  const int k = static_cast<int>(weights.rows());
  const int cols = static_cast<int>(weights.cols());
  Matrix post = x1 * weights.transpose();  // N x K scores, then softmax
  double loss = 0.0;
  for (int i = 0; i < n; i++) {
    const double mx = post.row(i).maxCoeff();
    post.row(i) = (post.row(i).array() - mx).exp();
    const double sum = post.row(i).sum();
    post.row(i) /= sum;
    loss -= std::log(std::max(post(i, classes[i]), 1e-300));
  }
  loss /= n;
  // The bias column is excluded from the penalty.
  loss += 0.5 * l2_lambda * weights.leftCols(cols - 1).squaredNorm();
  if (grad) {
    Matrix delta = post;
    for (int i = 0; i < n; i++) delta(i, classes[i]) -= 1.0;
    grad->noalias() = delta.transpose() * x1 / n;
    grad->leftCols(cols - 1) += l2_lambda * weights.leftCols(cols - 1);
    LID_ASSERT(grad->rows() == k);
  }
  return loss;
}

namespace {

LogRegModel TrainWithLabelOrder(const Matrix &ivectors,
                                const std::vector<std::string> &labels,
                                const std::vector<std::string> &order,
                                const LogRegTrainOptions &opts) {
  const int n = static_cast<int>(ivectors.rows());
  const int k = static_cast<int>(order.size());
  const int r = static_cast<int>(ivectors.cols());
  if (n < k) LID_ERR << n << " examples cannot cover " << k << " classes";
  if (opts.l2_lambda < 0 || opts.max_iters < 1)
    LID_ERR << "bad training options";

  std::vector<int> classes(n);
  Vector counts = Vector::Zero(k);
  for (int i = 0; i < n; i++) {
    auto it = std::find(order.begin(), order.end(), labels[i]);
    if (it == order.end()) LID_ERR << "label " << labels[i] << " not in class list";
    classes[i] = static_cast<int>(it - order.begin());
    counts[classes[i]] += 1;
  }
  if (counts.minCoeff() < 1) LID_ERR << "a class has no training examples";

  Matrix x1(n, r + 1);
  x1.leftCols(r) = ivectors;
  x1.col(r).setOnes();

  LogRegModel model;
  model.labels = order;
  model.weights = Matrix::Zero(k, r + 1);

  Matrix grad(k, r + 1);
  double loss = LogRegObjective(model.weights, x1, classes, opts.l2_lambda, &grad);
  double step = 1.0;
  for (int iter = 0; iter < opts.max_iters; iter++) {
    const double gnorm = grad.norm();
    if (gnorm < opts.tolerance) break;
    // Backtracking line search with the Armijo condition; the accepted step
    // seeds the next iteration, growing again after a clean acceptance.
    const double slope = -grad.squaredNorm();
    double trial = step;
    for (;;) {
      Matrix cand = model.weights - trial * grad;
      const double cand_loss =
          LogRegObjective(cand, x1, classes, opts.l2_lambda, nullptr);
      if (cand_loss <= loss + 1e-4 * trial * slope) {
        model.weights = std::move(cand);
        loss = LogRegObjective(model.weights, x1, classes, opts.l2_lambda, &grad);
        step = trial * 2.0;
        break;
      }
      trial *= 0.5;
      if (trial < 1e-16)
        LID_NUMERIC_ERR << "line search failed at iteration " << iter
                        << " (gradient norm " << gnorm << ")";
    }
  }
  model.Check();
  return model;
}

std::vector<std::string> FirstAppearanceOrder(
    const std::vector<std::string> &labels) {
  std::vector<std::string> order;
  for (const std::string &l : labels)
    if (std::find(order.begin(), order.end(), l) == order.end())
      order.push_back(l);
  return order;
}

}  // namespace

LogRegModel TrainLogReg(const Matrix &ivectors,
                        const std::vector<std::string> &labels,
                        const LogRegTrainOptions &opts) {
  if (ivectors.rows() != static_cast<int>(labels.size()))
    LID_ERR << ivectors.rows() << " i-vectors for " << labels.size()
            << " labels";
  return TrainWithLabelOrder(ivectors, labels, FirstAppearanceOrder(labels),
                             opts);
}

LogRegModel AddLanguage(const LogRegModel &model, const Matrix &all_ivectors,
                        const std::vector<std::string> &all_labels,
                        const LogRegTrainOptions &opts) {
  model.Check();
  std::vector<std::string> fresh;
  for (const std::string &l : all_labels)
    if (std::find(model.labels.begin(), model.labels.end(), l) ==
            model.labels.end() &&
        std::find(fresh.begin(), fresh.end(), l) == fresh.end())
      fresh.push_back(l);
  if (fresh.size() != 1)
    LID_ERR << "expected exactly one new language, found " << fresh.size();

  std::vector<std::string> order = model.labels;
  order.push_back(fresh[0]);
  return TrainWithLabelOrder(all_ivectors, all_labels, order, opts);
}

void WriteLogReg(const std::string &path, const LogRegModel &model) {
  model.Check();
  ModelContainer c;
  c.SetMeta("kind", "logreg");
  std::string joined;
  for (const std::string &l : model.labels)
    joined += (joined.empty() ? "" : ",") + l;
  c.SetMeta("labels", joined);
  c.Add("weights", model.weights);
  WriteContainer(path, c);
}

LogRegModel ReadLogReg(const std::string &path) {
  ModelContainer c = ReadContainer(path);
  LogRegModel model;
  model.weights = c.GetMatrix("weights");
  std::string joined = c.GetMeta("labels");
  std::string token;
  for (char ch : joined + ",") {
    if (ch == ',') {
      if (!token.empty()) model.labels.push_back(token);
      token.clear();
    } else {
      token += ch;
    }
  }
  model.Check();
  return model;
}

}  // namespace lid
