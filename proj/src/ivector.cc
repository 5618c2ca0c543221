// src/ivector.cc

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

#include "lid/ivector.h"

#include <cmath>
#include <random>

#include "lid/gmm.h"
#include "lid/io.h"

namespace lid {

void SupervisedGmm::Check() const {
  const int m = NumClasses();
  if (m < 1 || means.rows() != m || vars.rows() != m ||
      means.cols() != vars.cols())
    LID_ERR << "inconsistent supervised GMM shapes";
  if (vars.minCoeff() <= 0) LID_ERR << "non-positive class variance";
  if (std::abs(priors.sum() - 1.0) > 1e-8)
    LID_ERR << "class priors sum to " << priors.sum();
}

SupervisedGmm InitSupervisedGmm(const std::vector<Matrix> &posteriors,
                                const std::vector<Matrix> &feats,
                                const std::vector<VadMask> &masks,
                                double variance_floor_factor) {
  if (posteriors.empty() || posteriors.size() != feats.size() ||
      posteriors.size() != masks.size())
    LID_ERR << "need matching non-empty posterior/feature/mask lists";
  const int m = static_cast<int>(posteriors.front().cols());
  const int d = static_cast<int>(feats.front().cols());

  Vector n = Vector::Zero(m);
  Matrix first = Matrix::Zero(m, d);
  Matrix second = Matrix::Zero(m, d);
  Vector gsum = Vector::Zero(d), gsumsq = Vector::Zero(d);
  double gcount = 0.0;
  for (std::size_t u = 0; u < posteriors.size(); u++) {
    Matrix post = SelectRows(posteriors[u], masks[u]);
    Matrix x = SelectRows(feats[u], masks[u]);
    if (post.rows() != x.rows() || post.cols() != m || x.cols() != d)
      LID_ERR << "utterance " << u << " has misaligned streams";
    n += post.colwise().sum().transpose();
    first.noalias() += post.transpose() * x;
    second.noalias() += post.transpose() * x.cwiseAbs2();
    gsum += x.colwise().sum().transpose();
    gsumsq += x.array().square().matrix().colwise().sum().transpose();
    gcount += x.rows();
  }
  if (gcount == 0) LID_ERR << "no speech frames for supervised GMM";
  Vector gmean = gsum / gcount;
  Vector gvar = (gsumsq / gcount - gmean.cwiseAbs2()).cwiseMax(1e-20);
  Vector floor = variance_floor_factor * gvar;

  SupervisedGmm gmm;
  gmm.means.resize(m, d);
  gmm.vars.resize(m, d);
  gmm.priors = n / n.sum();
  for (int c = 0; c < m; c++) {
    if (n[c] < 1.0) {
      LID_WARN << "class " << c << " occupancy " << n[c]
               << "; using global moments";
      gmm.means.row(c) = gmean.transpose();
      gmm.vars.row(c) = gvar.transpose();
      continue;
    }
    Vector mu = first.row(c).transpose() / n[c];
    Vector var = second.row(c).transpose() / n[c] - mu.cwiseAbs2();
    gmm.means.row(c) = mu.transpose();
    gmm.vars.row(c) = var.cwiseMax(floor).transpose();
  }
  gmm.Check();
  return gmm;
}

SupervisedGmm SupervisedGmmFromFull(const FullGmm &full) {
  SupervisedGmm gmm;
  gmm.means = full.means();
  gmm.priors = full.weights();
  gmm.vars.resize(full.NumComponents(), full.Dim());
  for (int c = 0; c < full.NumComponents(); c++)
    gmm.vars.row(c) = full.covars()[c].diagonal().transpose();
  gmm.Check();
  return gmm;
}

void IvectorExtractor::Check() const {
  const int m = NumClasses();
  if (m < 1 || means.rows() != m || vars.rows() != m)
    LID_ERR << "inconsistent extractor shapes";
  const int d = Dim(), r = Rank();
  if (r < 1) LID_ERR << "extractor rank must be at least 1";
  for (const Matrix &t : t_blocks)
    if (t.rows() != d || t.cols() != r)
      LID_ERR << "total-variability block is not " << d << "x" << r;
  if (vars.minCoeff() <= 0) LID_ERR << "non-positive extractor variance";
}

IvectorExtractor InitExtractor(const SupervisedGmm &gmm, int rank,
                               uint64_t seed) {
  gmm.Check();
  if (rank < 1) LID_ERR << "rank must be at least 1, got " << rank;
  IvectorExtractor ext;
  ext.means = gmm.means;
  ext.vars = gmm.vars;
  const double scale = 0.1 * std::sqrt(gmm.vars.mean()) / std::sqrt(rank);
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> gauss(0.0, 1.0);
  for (int c = 0; c < gmm.NumClasses(); c++) {
    Matrix t(gmm.Dim(), rank);
    for (int i = 0; i < t.rows(); i++)
      for (int j = 0; j < t.cols(); j++) t(i, j) = scale * gauss(rng);
    ext.t_blocks.push_back(std::move(t));
  }
  ext.Check();
  return ext;
}

namespace {

struct Precomp {
  std::vector<Matrix> sigma_inv_t;  // Sigma_c^-1 T_c, D x R
  std::vector<Matrix> gram;         // T_c' Sigma_c^-1 T_c, R x R
};

Precomp Precompute(const IvectorExtractor &ext) {
  Precomp pre;
  for (int c = 0; c < ext.NumClasses(); c++) {
    Matrix sit =
        ext.vars.row(c).transpose().cwiseInverse().asDiagonal() * ext.t_blocks[c];
    pre.gram.push_back(ext.t_blocks[c].transpose() * sit);
    pre.sigma_inv_t.push_back(std::move(sit));
  }
  return pre;
}

void CheckStats(const IvectorExtractor &ext, const SuffStats &stats) {
  if (stats.NumClasses() != ext.NumClasses() || stats.Dim() != ext.Dim())
    LID_ERR << "statistics are " << stats.NumClasses() << "x" << stats.Dim()
            << ", extractor expects " << ext.NumClasses() << "x" << ext.Dim();
  if (!stats.centered) LID_ERR << "extractor requires centered statistics";
  if (stats.n.minCoeff() < 0) LID_ERR << "negative occupancy";
}

struct UttMoments {
  Vector w;
  Matrix eww;        // E[w w'] = L^-1 + w w'
  double objective;  // -0.5 logdet L + 0.5 lin' w
};

UttMoments Moments(const IvectorExtractor &ext, const Precomp &pre,
                   const SuffStats &stats) {
  const int r = ext.Rank();
  Matrix l = Matrix::Identity(r, r);
  Vector lin = Vector::Zero(r);
  for (int c = 0; c < ext.NumClasses(); c++) {
    if (stats.n[c] != 0.0) l.noalias() += stats.n[c] * pre.gram[c];
    lin.noalias() += pre.sigma_inv_t[c].transpose() * stats.f.row(c).transpose();
  }
  Eigen::LLT<Matrix> llt(l);
  if (llt.info() != Eigen::Success)
    LID_NUMERIC_ERR << "factor precision is not positive definite";
  UttMoments m;
  m.w = llt.solve(lin);
  m.eww = llt.solve(Matrix::Identity(r, r)) + m.w * m.w.transpose();
  const double logdet =
      2.0 * Matrix(llt.matrixL()).diagonal().array().log().sum();
  m.objective = -0.5 * logdet + 0.5 * lin.dot(m.w);
  return m;
}

}  // namespace

IvectorPosterior IvectorPosteriorMoments(const IvectorExtractor &ext,
                                         const SuffStats &stats) {
  CheckStats(ext, stats);
  Precomp pre = Precompute(ext);
  const int r = ext.Rank();
  IvectorPosterior post;
  post.precision = Matrix::Identity(r, r);
  Vector lin = Vector::Zero(r);
  for (int c = 0; c < ext.NumClasses(); c++) {
    if (stats.n[c] != 0.0)
      post.precision.noalias() += stats.n[c] * pre.gram[c];
    lin.noalias() += pre.sigma_inv_t[c].transpose() * stats.f.row(c).transpose();
  }
  post.mean = Eigen::LLT<Matrix>(post.precision).solve(lin);
  return post;
}

Vector ExtractIvector(const IvectorExtractor &ext, const SuffStats &stats) {
  return IvectorPosteriorMoments(ext, stats).mean;
}

Matrix ExtractIvectors(const IvectorExtractor &ext,
                       const std::vector<SuffStats> &stats, int jobs) {
  Precomp pre = Precompute(ext);
  Matrix out(stats.size(), ext.Rank());
  ParallelFor(static_cast<int>(stats.size()), jobs, [&](int u) {
    CheckStats(ext, stats[u]);
    out.row(u) = Moments(ext, pre, stats[u]).w.transpose();
  });
  return out;
}

double EmIteration(IvectorExtractor *ext, const std::vector<SuffStats> &stats,
                   int jobs) {
  if (stats.empty()) LID_ERR << "no statistics for EM";
  for (const SuffStats &s : stats) CheckStats(*ext, s);
  const int m = ext->NumClasses();
  const int d = ext->Dim();
  const int r = ext->Rank();
  Precomp pre = Precompute(*ext);

  std::vector<UttMoments> moments(stats.size());
  ParallelFor(static_cast<int>(stats.size()), jobs, [&](int u) {
    moments[u] = Moments(*ext, pre, stats[u]);
  });

  double objective = 0.0;
  std::vector<Matrix> a(m, Matrix::Zero(r, r));  // sum_u N_uc E[w w']
  std::vector<Matrix> b(m, Matrix::Zero(d, r));  // sum_u Fhat_uc E[w]'
  for (std::size_t u = 0; u < stats.size(); u++) {
    objective += moments[u].objective;
    for (int c = 0; c < m; c++) {
      if (stats[u].n[c] != 0.0) a[c].noalias() += stats[u].n[c] * moments[u].eww;
      b[c].noalias() +=
          stats[u].f.row(c).transpose() * moments[u].w.transpose();
    }
  }

  for (int c = 0; c < m; c++) {
    if (!(a[c].trace() > 0.0)) {
      LID_WARN << "class " << c << " has no factor statistics; keeping its "
               << "subspace";
      continue;
    }
    Eigen::LLT<Matrix> llt(a[c]);
    if (llt.info() != Eigen::Success) {
      const double ridge = 1e-8 * a[c].trace() / r;
      LID_WARN << "class " << c << " update matrix is singular; adding ridge "
               << ridge;
      Matrix damped = a[c] + ridge * Matrix::Identity(r, r);
      llt.compute(damped);
      if (llt.info() != Eigen::Success)
        LID_NUMERIC_ERR << "class " << c
                        << " update matrix not repairable by ridge";
    }
    // T_c solves T_c A_c = B_c; A_c is symmetric.
    ext->t_blocks[c] = llt.solve(b[c].transpose()).transpose();
  }
  return objective;
}

void WriteExtractor(const std::string &path, const IvectorExtractor &ext) {
  ext.Check();
  ModelContainer c;
  c.SetMeta("kind", "ivector_extractor");
  c.Add("means", ext.means);
  c.Add("vars", ext.vars);
  NamedTensor t;
  t.name = "t_blocks";
  t.dims = {static_cast<uint32_t>(ext.NumClasses()),
            static_cast<uint32_t>(ext.Dim()),
            static_cast<uint32_t>(ext.Rank())};
  for (const Matrix &block : ext.t_blocks)
    for (int i = 0; i < block.rows(); i++)
      for (int j = 0; j < block.cols(); j++) t.data.push_back(block(i, j));
  c.Add(std::move(t));
  WriteContainer(path, c);
}

IvectorExtractor ReadExtractor(const std::string &path) {
  ModelContainer c = ReadContainer(path);
  IvectorExtractor ext;
  ext.means = c.GetMatrix("means");
  ext.vars = c.GetMatrix("vars");
  const NamedTensor &t = c.Get("t_blocks");
  if (t.dims.size() != 3) LID_ERR << "t_blocks tensor has rank " << t.dims.size();
  const int m = t.dims[0], d = t.dims[1], r = t.dims[2];
  std::size_t k = 0;
  for (int cc = 0; cc < m; cc++) {
    Matrix block(d, r);
    for (int i = 0; i < d; i++)
      for (int j = 0; j < r; j++) block(i, j) = t.data[k++];
    ext.t_blocks.push_back(std::move(block));
  }
  ext.Check();
  return ext;
}

}  // namespace lid
