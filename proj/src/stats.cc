// src/stats.cc

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

#include "lid/stats.h"

#include <cmath>

#include "lid/io.h"

namespace lid {

void SuffStats::Check() const {
  if (n.size() < 1 || f.rows() != n.size())
    LID_ERR << "inconsistent statistics shapes: " << n.size()
            << " occupancies, " << f.rows() << " first-order rows";
  if (n.minCoeff() < 0) LID_ERR << "negative occupancy";
  if (!n.allFinite() || !f.allFinite()) LID_ERR << "non-finite statistics";
}

SuffStats ZeroStats(int num_classes, int dim, bool centered) {
  SuffStats s;
  s.n = Vector::Zero(num_classes);
  s.f = Matrix::Zero(num_classes, dim);
  s.centered = centered;
  return s;
}

SuffStats AccumulateStats(const Matrix &posteriors, const Matrix &feats,
                          const VadMask &mask, const Matrix *means) {
  const int t_frames = static_cast<int>(feats.rows());
  if (posteriors.rows() != t_frames ||
      static_cast<int>(mask.size()) != t_frames)
    LID_ERR << "stream mismatch: " << posteriors.rows() << " posterior rows, "
            << t_frames << " feature rows, " << mask.size() << " mask entries";
  const int m = static_cast<int>(posteriors.cols());
  const int d = static_cast<int>(feats.cols());
  if (means && (means->rows() != m || means->cols() != d))
    LID_ERR << "means are " << means->rows() << "x" << means->cols()
            << ", expected " << m << "x" << d;
  for (int t = 0; t < t_frames; t++) {
    if (!mask[t]) continue;
    double sum = posteriors.row(t).sum();
    if (std::abs(sum - 1.0) > 1e-6)
      LID_ERR << "posterior row " << t << " sums to " << sum;
    if (posteriors.row(t).minCoeff() < 0)
      LID_ERR << "negative posterior at frame " << t;
  }

  SuffStats s = ZeroStats(m, d, means != nullptr);
  Matrix sel_post = SelectRows(posteriors, mask);
  Matrix sel_feats = SelectRows(feats, mask);
  s.n = sel_post.colwise().sum().transpose();
  s.f.noalias() = sel_post.transpose() * sel_feats;
  if (means) s.f -= s.n.asDiagonal() * (*means);
  return s;
}

SuffStats MergeStats(const SuffStats &a, const SuffStats &b) {
  if (a.NumClasses() != b.NumClasses() || a.Dim() != b.Dim())
    LID_ERR << "cannot merge statistics of different shapes";
  if (a.centered != b.centered)
    LID_ERR << "cannot merge centered with uncentered statistics";
  SuffStats out;
  out.n = a.n + b.n;
  out.f = a.f + b.f;
  out.centered = a.centered;
  return out;
}

Matrix PrunePosteriors(const Matrix &posteriors, double min_posterior) {
  Matrix out = (posteriors.array() < min_posterior).select(0.0, posteriors);
  for (int t = 0; t < out.rows(); t++) {
    double sum = out.row(t).sum();
    if (sum <= 0) {
      // Everything fell below the floor; fall back to the untouched row.
      out.row(t) = posteriors.row(t);
      sum = out.row(t).sum();
    }
    out.row(t) /= sum;
  }
  return out;
}

void WriteStats(const std::string &path, const SuffStats &stats) {
  ModelContainer c;
  c.SetMeta("kind", "suff_stats");
  c.SetMeta("centered", stats.centered ? "1" : "0");
  c.Add("n", stats.n);
  c.Add("f", stats.f);
  WriteContainer(path, c);
}

SuffStats ReadStats(const std::string &path) {
  ModelContainer c = ReadContainer(path);
  SuffStats s;
  s.n = c.GetVector("n");
  s.f = c.GetMatrix("f");
  s.centered = c.GetMeta("centered") == "1";
  s.Check();
  return s;
}

}  // namespace lid
