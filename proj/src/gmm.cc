// src/gmm.cc

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

#include "lid/gmm.h"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <random>

namespace lid {

namespace {

constexpr double kLog2Pi = 1.8378770664093453;
constexpr double kMinOccupancy = 1e-8;

// Log-sum-exp over a row, tolerating -inf entries.
double LogSumExp(const RowVector &row) {
  double mx = row.maxCoeff();
  if (!std::isfinite(mx)) return mx;
  return mx + std::log((row.array() - mx).exp().sum());
}

// E-step accumulators for one chunk of utterances.
struct DiagAccs {
  Vector counts;
  Matrix mean_acc;
  Matrix var_acc;
  double loglike = 0.0;

  void Resize(int m, int d) {
    counts = Vector::Zero(m);
    mean_acc = Matrix::Zero(m, d);
    var_acc = Matrix::Zero(m, d);
  }
  void Merge(const DiagAccs &o) {
    counts += o.counts;
    mean_acc += o.mean_acc;
    var_acc += o.var_acc;
    loglike += o.loglike;
  }
};

// Parallel map over fixed-size chunks of utterances with an ordered merge,
// so results do not depend on the number of jobs.
constexpr int kChunkUtts = 16;

template <class Acc, class Fn>
Acc ChunkedAccumulate(int num_utts, int jobs, int m, int d, const Fn &fn) {
  const int num_chunks = (num_utts + kChunkUtts - 1) / kChunkUtts;
  std::vector<Acc> partials(num_chunks);
  ParallelFor(num_chunks, jobs, [&](int chunk) {
    partials[chunk].Resize(m, d);
    const int begin = chunk * kChunkUtts;
    const int end = std::min(num_utts, begin + kChunkUtts);
    for (int u = begin; u < end; u++) fn(u, &partials[chunk]);
  });
  Acc total;
  total.Resize(m, d);
  for (const Acc &p : partials) total.Merge(p);
  return total;
}

Vector GlobalVariance(const std::vector<Matrix> &data, Vector *global_mean,
                      std::size_t *num_frames) {
  const int d = static_cast<int>(data.front().cols());
  Vector sum = Vector::Zero(d), sumsq = Vector::Zero(d);
  std::size_t n = 0;
  for (const Matrix &x : data) {
    if (x.cols() != d) LID_ERR << "mixed feature dims in UBM training data";
    sum += x.colwise().sum().transpose();
    sumsq += x.array().square().matrix().colwise().sum().transpose();
    n += x.rows();
  }
  if (n == 0) LID_ERR << "no frames in UBM training data";
  Vector mean = sum / static_cast<double>(n);
  Vector var = sumsq / static_cast<double>(n) - mean.cwiseAbs2();
  var = var.cwiseMax(1e-20);
  if (global_mean) *global_mean = mean;
  if (num_frames) *num_frames = n;
  return var;
}

}  // namespace

void DiagGmm::Check() const {
  const int m = NumComponents();
  if (m < 1 || means.rows() != m || vars.rows() != m ||
      means.cols() != vars.cols())
    LID_ERR << "inconsistent diagonal GMM shapes";
  if (std::abs(weights.sum() - 1.0) > 1e-10)
    LID_ERR << "GMM weights sum to " << weights.sum();
  if (weights.minCoeff() < 0) LID_ERR << "negative GMM weight";
  if (vars.minCoeff() <= 0) LID_ERR << "non-positive GMM variance";
  if (!means.allFinite() || !vars.allFinite())
    LID_ERR << "non-finite GMM parameters";
}

Matrix DiagGmm::ComponentLogLikes(const Matrix &frames) const {
  if (frames.cols() != Dim())
    LID_ERR << "frame dim " << frames.cols() << " vs model dim " << Dim();
  // log w_c + sum_d [ -0.5 log(2 pi s) - 0.5 (x - mu)^2 / s ]  expanded so the
  // frame-dependent part is two matrix products.
  Matrix inv_vars = vars.cwiseInverse();                       // M x D
  Matrix mean_invvar = means.cwiseProduct(inv_vars);           // M x D
  Vector gconst =
      weights.array().log().matrix() -
      0.5 * (vars.array().log() + kLog2Pi).matrix().rowwise().sum() -
      0.5 * means.cwiseProduct(mean_invvar).rowwise().sum();
  Matrix ll = frames * mean_invvar.transpose() -
              0.5 * frames.cwiseAbs2() * inv_vars.transpose();
  ll.rowwise() += gconst.transpose();
  return ll;
}

Vector DiagGmm::ComponentLogLikes(const Vector &frame) const {
  return ComponentLogLikes(Matrix(frame.transpose())).row(0).transpose();
}

double DiagGmm::LogLikelihood(const Vector &frame) const {
  return LogSumExp(ComponentLogLikes(frame).transpose());
}

namespace {

// One EM iteration; returns the total log-likelihood of the input model.
double DiagEmIteration(DiagGmm *gmm, const std::vector<Matrix> &data,
                       const Vector &var_floor, int jobs) {
  const int m = gmm->NumComponents();
  const int d = gmm->Dim();
  DiagAccs accs = ChunkedAccumulate<DiagAccs>(
      static_cast<int>(data.size()), jobs, m, d, [&](int u, DiagAccs *acc) {
        const Matrix &x = data[u];
        if (x.rows() == 0) return;
        Matrix ll = gmm->ComponentLogLikes(x);
        for (int t = 0; t < ll.rows(); t++) {
          double lse = LogSumExp(ll.row(t));
          acc->loglike += lse;
          ll.row(t) = (ll.row(t).array() - lse).exp();
        }
        acc->counts += ll.colwise().sum().transpose();
        acc->mean_acc.noalias() += ll.transpose() * x;
        acc->var_acc.noalias() += ll.transpose() * x.cwiseAbs2();
      });

  const double total = accs.counts.sum();
  if (total <= 0) LID_NUMERIC_ERR << "EM saw zero total occupancy";
  for (int c = 0; c < m; c++) {
    if (accs.counts[c] < kMinOccupancy) {
      LID_WARN << "component " << c << " has occupancy " << accs.counts[c]
               << "; keeping its previous parameters";
      gmm->weights[c] = accs.counts[c] / total;
      continue;
    }
    gmm->weights[c] = accs.counts[c] / total;
    Vector mu = accs.mean_acc.row(c).transpose() / accs.counts[c];
    Vector var = accs.var_acc.row(c).transpose() / accs.counts[c] -
                 mu.cwiseAbs2();
    gmm->means.row(c) = mu.transpose();
    gmm->vars.row(c) = var.cwiseMax(var_floor).transpose();
  }
  return accs.loglike;
}

}  // namespace

std::vector<double> RunDiagEm(DiagGmm *gmm, const std::vector<Matrix> &data,
                              int num_iters, const UbmTrainOptions &opts) {
  Vector global_var = GlobalVariance(data, nullptr, nullptr);
  Vector floor = opts.variance_floor_factor * global_var;
  std::vector<double> loglikes;
  for (int i = 0; i < num_iters; i++) {
    double ll = DiagEmIteration(gmm, data, floor, opts.jobs);
    loglikes.push_back(ll);
    LID_LOG << "UBM EM iteration " << i << " log-likelihood " << ll;
  }
  return loglikes;
}

DiagGmm TrainDiagUbm(const std::vector<Matrix> &data, int num_components,
                     const UbmTrainOptions &opts, std::vector<double> *loglikes) {
  if (data.empty()) LID_ERR << "empty UBM training data";
  if (num_components < 1) LID_ERR << "need at least one component";
  Vector global_mean;
  std::size_t num_frames = 0;
  Vector global_var = GlobalVariance(data, &global_mean, &num_frames);
  if (num_frames < static_cast<std::size_t>(num_components))
    LID_ERR << num_frames << " frames cannot seed " << num_components
            << " components";
  const int d = static_cast<int>(global_var.size());

  // Means are M distinct randomly chosen frames, variance the global
  // variance, weights uniform.
  std::vector<std::size_t> pick(num_frames > 0 ? num_frames : 0);
  std::iota(pick.begin(), pick.end(), 0);
  std::mt19937_64 rng(opts.seed);
  for (int c = 0; c < num_components; c++) {
    std::uniform_int_distribution<std::size_t> uni(c, num_frames - 1);
    std::swap(pick[c], pick[uni(rng)]);
  }

  DiagGmm gmm;
  gmm.weights = Vector::Constant(num_components, 1.0 / num_components);
  gmm.means.resize(num_components, d);
  gmm.vars = global_var.transpose().replicate(num_components, 1);
  for (int c = 0; c < num_components; c++) {
    std::size_t idx = pick[c];
    for (const Matrix &x : data) {
      if (idx < static_cast<std::size_t>(x.rows())) {
        gmm.means.row(c) = x.row(static_cast<int>(idx));
        break;
      }
      idx -= x.rows();
    }
  }

  std::vector<double> lls = RunDiagEm(&gmm, data, opts.num_iters, opts);
  if (loglikes) *loglikes = std::move(lls);
  gmm.Check();
  return gmm;
}

namespace {

struct FullAccs {
  Vector counts;
  Matrix first;                  // M x D
  std::vector<Matrix> scatter;   // M of D x D, sum of gamma * y y'
  void Resize(int m, int d) {
    counts = Vector::Zero(m);
    first = Matrix::Zero(m, d);
    scatter.assign(m, Matrix::Zero(d, d));
  }
  void Merge(const FullAccs &o) {
    counts += o.counts;
    first += o.first;
    for (std::size_t c = 0; c < scatter.size(); c++) scatter[c] += o.scatter[c];
  }
};

}  // namespace

FullGmm DiagToFull(const DiagGmm &diag, const std::vector<Matrix> &data,
                   int jobs) {
  diag.Check();
  const int m = diag.NumComponents();
  const int d = diag.Dim();
  FullAccs accs = ChunkedAccumulate<FullAccs>(
      static_cast<int>(data.size()), jobs, m, d, [&](int u, FullAccs *acc) {
        const Matrix &x = data[u];
        if (x.rows() == 0) return;
        Matrix gamma = DiagPosteriorMatrix(diag, x);
        acc->counts += gamma.colwise().sum().transpose();
        acc->first.noalias() += gamma.transpose() * x;
        for (int c = 0; c < m; c++)
          acc->scatter[c].noalias() +=
              x.transpose() * gamma.col(c).asDiagonal() * x;
      });

  std::vector<Matrix> covars(m);
  for (int c = 0; c < m; c++) {
    const double n_c = accs.counts[c];
    const Vector mu = diag.means.row(c).transpose();
    if (n_c < kMinOccupancy) {
      LID_WARN << "component " << c << " occupancy " << n_c
               << "; keeping diagonal covariance";
      covars[c] = diag.vars.row(c).asDiagonal();
      continue;
    }
    const Vector f = accs.first.row(c).transpose();
    Matrix sigma = (accs.scatter[c] - f * mu.transpose() - mu * f.transpose() +
                    n_c * mu * mu.transpose()) /
                   n_c;
    sigma = 0.5 * (sigma + sigma.transpose());
    Eigen::SelfAdjointEigenSolver<Matrix> eig(sigma);
    const double mean_eig = eig.eigenvalues().mean();
    if (!(mean_eig > 0)) {
      LID_WARN << "component " << c << " has degenerate scatter; keeping "
               << "diagonal covariance";
      covars[c] = diag.vars.row(c).asDiagonal();
      continue;
    }
    Vector floored = eig.eigenvalues().cwiseMax(1e-4 * mean_eig);
    covars[c] = eig.eigenvectors() * floored.asDiagonal() *
                eig.eigenvectors().transpose();
  }

  FullGmm full;
  full.SetParams(diag.weights, diag.means, std::move(covars));
  return full;
}

void FullGmm::SetParams(Vector weights, Matrix means,
                        std::vector<Matrix> covars) {
  const int m = static_cast<int>(weights.size());
  const int d = static_cast<int>(means.cols());
  if (means.rows() != m || static_cast<int>(covars.size()) != m)
    LID_ERR << "inconsistent full GMM shapes";
  weights_ = std::move(weights);
  means_ = std::move(means);
  covars_ = std::move(covars);
  inv_chol_.resize(m);
  log_norm_.resize(m);
  for (int c = 0; c < m; c++) {
    if (covars_[c].rows() != d || covars_[c].cols() != d)
      LID_ERR << "covariance " << c << " is not " << d << "x" << d;
    if ((covars_[c] - covars_[c].transpose()).cwiseAbs().maxCoeff() > 1e-10)
      LID_ERR << "covariance " << c << " is not symmetric";
    Eigen::LLT<Matrix> llt(covars_[c]);
    if (llt.info() != Eigen::Success)
      LID_NUMERIC_ERR << "covariance " << c << " is not positive definite";
    Matrix l = llt.matrixL();
    inv_chol_[c] = l.triangularView<Eigen::Lower>().solve(Matrix::Identity(d, d));
    double logdet = 2.0 * l.diagonal().array().log().sum();
    log_norm_[c] = std::log(weights_[c]) - 0.5 * (d * kLog2Pi + logdet);
  }
}

double FullGmm::ComponentLogLike(int c, const Vector &frame) const {
  if (frame.size() != Dim())
    LID_ERR << "frame dim " << frame.size() << " vs model dim " << Dim();
  Vector z = inv_chol_[c] * (frame - means_.row(c).transpose());
  return log_norm_[c] - 0.5 * z.squaredNorm();
}

Vector FullGmm::ComponentLogLikes(const Vector &frame) const {
  Vector ll(NumComponents());
  for (int c = 0; c < NumComponents(); c++) ll[c] = ComponentLogLike(c, frame);
  return ll;
}

double FullGmm::LogLikelihood(const Vector &frame) const {
  return LogSumExp(ComponentLogLikes(frame).transpose());
}

namespace {

void CheckCoherent(const DiagGmm &diag, const FullGmm &full) {
  if (diag.NumComponents() != full.NumComponents() || diag.Dim() != full.Dim())
    LID_ERR << "tandem models have different shapes";
  if ((diag.means - full.means()).cwiseAbs().maxCoeff() > 1e-9)
    LID_ERR << "tandem models do not share means";
}

Vector TandemPosteriorsChecked(const DiagGmm &diag, const FullGmm &full,
                               const Vector &frame, int top_n) {
  const int m = diag.NumComponents();
  Vector diag_ll = diag.ComponentLogLikes(frame);
  std::vector<int> order(m);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](int a, int b) { return diag_ll[a] > diag_ll[b]; });

  Vector selected_ll(top_n);
  for (int i = 0; i < top_n; i++)
    selected_ll[i] = full.ComponentLogLike(order[i], frame);
  double lse = LogSumExp(selected_ll.transpose());
  Vector post = Vector::Zero(m);
  for (int i = 0; i < top_n; i++)
    post[order[i]] = std::exp(selected_ll[i] - lse);
  return post;
}

}  // namespace

Vector TandemPosteriors(const DiagGmm &diag, const FullGmm &full,
                        const Vector &frame, int top_n) {
  CheckCoherent(diag, full);
  if (top_n < 1 || top_n > diag.NumComponents())
    LID_ERR << "top_n " << top_n << " out of range [1, "
            << diag.NumComponents() << "]";
  return TandemPosteriorsChecked(diag, full, frame, top_n);
}

Matrix TandemPosteriorMatrix(const DiagGmm &diag, const FullGmm &full,
                             const Matrix &frames, int top_n, int jobs) {
  CheckCoherent(diag, full);
  if (top_n < 1 || top_n > diag.NumComponents())
    LID_ERR << "top_n " << top_n << " out of range [1, "
            << diag.NumComponents() << "]";
  Matrix post(frames.rows(), diag.NumComponents());
  ParallelFor(static_cast<int>(frames.rows()), jobs, [&](int t) {
    post.row(t) =
        TandemPosteriorsChecked(diag, full, frames.row(t).transpose(), top_n)
            .transpose();
  });
  return post;
}

Matrix DiagPosteriorMatrix(const DiagGmm &gmm, const Matrix &frames) {
  Matrix ll = gmm.ComponentLogLikes(frames);
  for (int t = 0; t < ll.rows(); t++) {
    double lse = LogSumExp(ll.row(t));
    ll.row(t) = (ll.row(t).array() - lse).exp();
  }
  return ll;
}

void WriteDiagGmm(const std::string &path, const DiagGmm &gmm) {
  ModelContainer c;
  c.SetMeta("kind", "diag_gmm");
  c.Add("weights", gmm.weights);
  c.Add("means", gmm.means);
  c.Add("vars", gmm.vars);
  WriteContainer(path, c);
}

DiagGmm ReadDiagGmm(const std::string &path) {
  ModelContainer c = ReadContainer(path);
  DiagGmm gmm;
  gmm.weights = c.GetVector("weights");
  gmm.means = c.GetMatrix("means");
  gmm.vars = c.GetMatrix("vars");
  gmm.Check();
  return gmm;
}

void WriteGmms(const std::string &path, const DiagGmm &diag, const FullGmm &full) {
  CheckCoherent(diag, full);
  ModelContainer c;
  c.SetMeta("kind", "tandem_gmm");
  c.Add("weights", diag.weights);
  c.Add("means", diag.means);
  c.Add("vars", diag.vars);
  NamedTensor covars;
  covars.name = "full_covars";
  const int m = full.NumComponents(), d = full.Dim();
  covars.dims = {static_cast<uint32_t>(m), static_cast<uint32_t>(d),
                 static_cast<uint32_t>(d)};
  covars.data.reserve(static_cast<std::size_t>(m) * d * d);
  for (int cc = 0; cc < m; cc++)
    for (int i = 0; i < d; i++)
      for (int j = 0; j < d; j++) covars.data.push_back(full.covars()[cc](i, j));
  c.Add(std::move(covars));
  WriteContainer(path, c);
}

void ReadGmms(const std::string &path, DiagGmm *diag, FullGmm *full) {
  ModelContainer c = ReadContainer(path);
  diag->weights = c.GetVector("weights");
  diag->means = c.GetMatrix("means");
  diag->vars = c.GetMatrix("vars");
  diag->Check();
  const NamedTensor &covars = c.Get("full_covars");
  if (covars.dims.size() != 3)
    LID_ERR << "full_covars tensor has rank " << covars.dims.size();
  const int m = covars.dims[0], d = covars.dims[1];
  std::vector<Matrix> mats(m, Matrix(d, d));
  std::size_t k = 0;
  for (int cc = 0; cc < m; cc++)
    for (int i = 0; i < d; i++)
      for (int j = 0; j < d; j++) mats[cc](i, j) = covars.data[k++];
  full->SetParams(diag->weights, diag->means, std::move(mats));
}

}  // namespace lid
