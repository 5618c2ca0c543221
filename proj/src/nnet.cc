// src/nnet.cc

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

#include "lid/nnet.h"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "lid/io.h"

namespace lid {

TddnnConfig TddnnConfig::Default(int input_dim, int num_classes) {
  TddnnConfig cfg;
  cfg.input_dim = input_dim;
  cfg.num_classes = num_classes;
  cfg.splice_offsets = {{-2, -1, 0, 1, 2}, {-2, 1}, {0}, {-3, 3}, {-7, 2}, {0}};
  return cfg;
}

void TddnnConfig::Check() const {
  if (input_dim < 1 || num_classes < 2)
    LID_ERR << "bad network dims: input " << input_dim << ", classes "
            << num_classes;
  if (NumLayers() < 2) LID_ERR << "need at least 2 layers";
  if (pnorm_group_size < 1 || hidden_dim % pnorm_group_size != 0)
    LID_ERR << "hidden_dim " << hidden_dim << " not divisible by group size "
            << pnorm_group_size;
  if (pnorm_p < 1.0) LID_ERR << "pnorm_p must be at least 1, got " << pnorm_p;
  for (const auto &offs : splice_offsets) {
    if (offs.empty()) LID_ERR << "empty splice offset list";
    if (!std::is_sorted(offs.begin(), offs.end()))
      LID_ERR << "splice offsets must be sorted";
  }
}

int TddnnConfig::LeftContext() const {
  int left = 0;
  for (const auto &offs : splice_offsets) left += std::max(0, -offs.front());
  return left;
}

int TddnnConfig::RightContext() const {
  int right = 0;
  for (const auto &offs : splice_offsets) right += std::max(0, offs.back());
  return right;
}

int TddnnConfig::LayerInputDim(int layer) const {
  return layer == 0 ? input_dim : GroupsPerLayer();
}

int TddnnConfig::LayerOutputDim(int layer) const {
  return layer == NumLayers() - 1 ? num_classes : hidden_dim;
}

TddnnModel BuildTddnn(const TddnnConfig &cfg, uint64_t seed) {
  cfg.Check();
  TddnnModel model;
  model.cfg = cfg;
  std::mt19937_64 rng(seed);
  for (int l = 0; l < cfg.NumLayers(); l++) {
    const int in = cfg.LayerInputDim(l) *
                   static_cast<int>(cfg.splice_offsets[l].size());
    const int out = cfg.LayerOutputDim(l);
    const double a = std::sqrt(6.0 / (in + out));
    std::uniform_real_distribution<double> uni(-a, a);
    Matrix w(out, in);
    for (int i = 0; i < out; i++)
      for (int j = 0; j < in; j++) w(i, j) = uni(rng);
    model.weights.push_back(std::move(w));
    model.biases.push_back(Vector::Zero(out));
  }
  return model;
}

namespace {

struct LayerRange {
  int lo = 0, hi = 0;  // inclusive frame indices
  int Size() const { return hi - lo + 1; }
};

// ranges[l] = rows of layer activation o_l needed to produce output rows
// [begin, end) of an utterance with total frames; o_0 is the input.  Reads
// outside [0, total-1] are clamped (repeat padding), so the ranges are too.
std::vector<LayerRange> ComputeRanges(const TddnnConfig &cfg, int total,
                                      int begin, int end) {
  const int num_layers = cfg.NumLayers();
  std::vector<LayerRange> ranges(num_layers + 1);
  ranges[num_layers] = {begin, end - 1};
  for (int l = num_layers - 1; l >= 0; l--) {
    const auto &offs = cfg.splice_offsets[l];
    ranges[l].lo = std::clamp(ranges[l + 1].lo + offs.front(), 0, total - 1);
    ranges[l].hi = std::clamp(ranges[l + 1].hi + offs.back(), 0, total - 1);
  }
  return ranges;
}

struct ForwardPass {
  std::vector<LayerRange> ranges;
  std::vector<Matrix> activations;  // o_l blocks, rows = ranges[l]
  std::vector<Matrix> spliced;      // S_l per layer
  std::vector<Matrix> linear;       // Z_l per layer, rows = ranges[l+1]
};

Matrix Splice(const Matrix &act, const LayerRange &in_range,
              const LayerRange &out_range, const std::vector<int> &offs,
              int total) {
  const int dim = static_cast<int>(act.cols());
  Matrix s(out_range.Size(), dim * static_cast<int>(offs.size()));
  for (int r = 0; r < out_range.Size(); r++) {
    const int t = out_range.lo + r;
    for (std::size_t k = 0; k < offs.size(); k++) {
      const int src = std::clamp(t + offs[k], 0, total - 1) - in_range.lo;
      s.block(r, static_cast<int>(k) * dim, 1, dim) = act.row(src);
    }
  }
  return s;
}

Matrix PnormForward(const Matrix &z, int group_size, double p) {
  const int groups = static_cast<int>(z.cols()) / group_size;
  Matrix out(z.rows(), groups);
  if (p == 2.0) {
    for (int g = 0; g < groups; g++)
      out.col(g) = z.middleCols(g * group_size, group_size)
                       .rowwise()
                       .norm();
  } else {
    for (int g = 0; g < groups; g++)
      out.col(g) = z.middleCols(g * group_size, group_size)
                       .array()
                       .abs()
                       .pow(p)
                       .rowwise()
                       .sum()
                       .pow(1.0 / p);
  }
  return out;
}

// d loss / d z given the gradient at the group outputs.  dz_i =
// dy_g * sign(z_i) |z_i|^(p-1) / y_g^(p-1), zero where the group output is 0.
Matrix PnormBackward(const Matrix &z, const Matrix &y, const Matrix &dy,
                     int group_size, double p) {
  Matrix dz(z.rows(), z.cols());
  const int groups = static_cast<int>(y.cols());
  for (int g = 0; g < groups; g++) {
    auto zg = z.middleCols(g * group_size, group_size).array();
    auto yg = y.col(g).array();
    auto dyg = dy.col(g).array();
    Eigen::ArrayXd safe = (yg > 0).select(yg, 1.0);
    if (p == 2.0) {
      dz.middleCols(g * group_size, group_size) =
          (zg.colwise() * ((yg > 0).select(dyg / safe, 0.0))).matrix();
    } else {
      auto scale = (yg > 0).select(dyg / safe.pow(p - 1.0), 0.0);
      dz.middleCols(g * group_size, group_size) =
          (zg.sign() * zg.abs().pow(p - 1.0)).colwise() * scale;
    }
  }
  return dz;
}

void SoftmaxRows(Matrix *z) {
  for (int t = 0; t < z->rows(); t++) {
    const double mx = z->row(t).maxCoeff();
    z->row(t) = (z->row(t).array() - mx).exp();
    z->row(t) /= z->row(t).sum();
  }
}

ForwardPass RunForward(const TddnnModel &model, const Matrix &feats, int begin,
                       int end) {
  const TddnnConfig &cfg = model.cfg;
  const int total = static_cast<int>(feats.rows());
  const int num_layers = cfg.NumLayers();
  ForwardPass fp;
  fp.ranges = ComputeRanges(cfg, total, begin, end);
  fp.activations.resize(num_layers + 1);
  fp.spliced.resize(num_layers);
  fp.linear.resize(num_layers);
  fp.activations[0] =
      feats.middleRows(fp.ranges[0].lo, fp.ranges[0].Size());
  for (int l = 0; l < num_layers; l++) {
    fp.spliced[l] = Splice(fp.activations[l], fp.ranges[l], fp.ranges[l + 1],
                           cfg.splice_offsets[l], total);
    fp.linear[l] = fp.spliced[l] * model.weights[l].transpose();
    fp.linear[l].rowwise() += model.biases[l].transpose();
    if (l < num_layers - 1)
      fp.activations[l + 1] =
          PnormForward(fp.linear[l], cfg.pnorm_group_size, cfg.pnorm_p);
    else
      fp.activations[l + 1] = fp.linear[l];  // softmax applied by callers
  }
  return fp;
}

}  // namespace

Matrix TddnnModel::Forward(const Matrix &feats) const {
  if (feats.cols() != cfg.input_dim)
    LID_ERR << "input dim " << feats.cols() << " vs network input "
            << cfg.input_dim;
  if (feats.rows() < 1) LID_ERR << "empty input to network";
  ForwardPass fp = RunForward(*this, feats, 0, static_cast<int>(feats.rows()));
  Matrix post = fp.activations[cfg.NumLayers()];
  SoftmaxRows(&post);
  return post;
}

double ComputeLossAndGradient(const TddnnModel &model, const Matrix &feats,
                              const std::vector<int> &labels, int begin,
                              int end, std::vector<Matrix> *grad_weights,
                              std::vector<Vector> *grad_biases) {
  const TddnnConfig &cfg = model.cfg;
  const int total = static_cast<int>(feats.rows());
  const int num_layers = cfg.NumLayers();
  if (begin < 0 || end > total || begin >= end)
    LID_ERR << "bad frame range [" << begin << ", " << end << ") of " << total;
  if (static_cast<int>(labels.size()) != total)
    LID_ERR << labels.size() << " labels for " << total << " frames";

  ForwardPass fp = RunForward(model, feats, begin, end);
  const int batch = end - begin;

  Matrix post = fp.activations[num_layers];
  SoftmaxRows(&post);
  double loss = 0.0;
  Matrix dz = post;
  for (int r = 0; r < batch; r++) {
    const int label = labels[begin + r];
    if (label < 0 || label >= cfg.num_classes)
      LID_ERR << "label " << label << " out of range at frame " << begin + r;
    loss -= std::log(std::max(post(r, label), 1e-300));
    dz(r, label) -= 1.0;
  }
  loss /= batch;
  if (grad_weights == nullptr && grad_biases == nullptr) return loss;
  if (grad_weights == nullptr || grad_biases == nullptr)
    LID_ERR << "gradient outputs must both be given or both be null";
  dz /= batch;

  grad_weights->resize(num_layers);
  grad_biases->resize(num_layers);
  for (int l = num_layers - 1; l >= 0; l--) {
    (*grad_weights)[l].noalias() = dz.transpose() * fp.spliced[l];
    (*grad_biases)[l] = dz.colwise().sum().transpose();
    if (l == 0) break;
    Matrix ds = dz * model.weights[l];
    // Scatter the splice gradient back onto the previous layer's rows;
    // clamped reads at the edges accumulate.
    const auto &offs = cfg.splice_offsets[l];
    const int dim = cfg.LayerInputDim(l);
    Matrix dact = Matrix::Zero(fp.ranges[l].Size(), dim);
    for (int r = 0; r < fp.ranges[l + 1].Size(); r++) {
      const int t = fp.ranges[l + 1].lo + r;
      for (std::size_t k = 0; k < offs.size(); k++) {
        const int src = std::clamp(t + offs[k], 0, total - 1) - fp.ranges[l].lo;
        dact.row(src) += ds.block(r, static_cast<int>(k) * dim, 1, dim);
      }
    }
    dz = PnormBackward(fp.linear[l - 1], fp.activations[l], dact,
                       cfg.pnorm_group_size, cfg.pnorm_p);
  }
  return loss;
}

double LearningRateAtEpoch(const SgdSchedule &sched, int epoch) {
  if (sched.num_epochs <= 1) return sched.initial_lr;
  const double frac = static_cast<double>(epoch) / (sched.num_epochs - 1);
  return sched.initial_lr *
         std::pow(sched.final_lr / sched.initial_lr, frac);
}

void TrainSgd(TddnnModel *model, const std::vector<Matrix> &feats,
              const std::vector<std::vector<int>> &labels,
              const SgdSchedule &sched, NnetTrainLog *log) {
  if (feats.empty() || feats.size() != labels.size())
    LID_ERR << "need matching non-empty feature and label lists";
  if (sched.num_epochs < 1 || sched.minibatch_size < 1 ||
      sched.final_lr > sched.initial_lr || sched.final_lr <= 0)
    LID_ERR << "bad SGD schedule";
  for (std::size_t u = 0; u < feats.size(); u++)
    if (static_cast<std::size_t>(feats[u].rows()) != labels[u].size())
      LID_ERR << "utterance " << u << ": " << feats[u].rows() << " frames, "
              << labels[u].size() << " labels";

  std::mt19937_64 rng(sched.seed);
  std::vector<int> order(feats.size());
  std::iota(order.begin(), order.end(), 0);
  std::vector<Matrix> gw;
  std::vector<Vector> gb;

  for (int epoch = 0; epoch < sched.num_epochs; epoch++) {
    const double lr = LearningRateAtEpoch(sched, epoch);
    std::shuffle(order.begin(), order.end(), rng);
    double ce_sum = 0.0;
    std::size_t frames = 0;
    for (int u : order) {
      const int total = static_cast<int>(feats[u].rows());
      for (int begin = 0; begin < total; begin += sched.minibatch_size) {
        const int end = std::min(total, begin + sched.minibatch_size);
        const double loss = ComputeLossAndGradient(*model, feats[u], labels[u],
                                                   begin, end, &gw, &gb);
        for (int l = 0; l < model->cfg.NumLayers(); l++) {
          model->weights[l] -= lr * gw[l];
          model->biases[l] -= lr * gb[l];
        }
        ce_sum += loss * (end - begin);
        frames += end - begin;
      }
    }
    const double avg = ce_sum / frames;
    LID_LOG << "nnet epoch " << epoch << " lr " << lr << " cross-entropy "
            << avg;
    if (log) {
      log->epoch_lr.push_back(lr);
      log->epoch_cross_entropy.push_back(avg);
    }
  }
}

void WriteTddnn(const std::string &path, const TddnnModel &model) {
  ModelContainer c;
  c.SetMeta("kind", "tddnn");
  c.SetMeta("input_dim", std::to_string(model.cfg.input_dim));
  c.SetMeta("hidden_dim", std::to_string(model.cfg.hidden_dim));
  c.SetMeta("pnorm_group_size", std::to_string(model.cfg.pnorm_group_size));
  c.SetMeta("pnorm_p", std::to_string(model.cfg.pnorm_p));
  c.SetMeta("num_classes", std::to_string(model.cfg.num_classes));
  std::string splices;
  for (const auto &offs : model.cfg.splice_offsets) {
    if (!splices.empty()) splices += ";";
    for (std::size_t k = 0; k < offs.size(); k++)
      splices += (k ? "," : "") + std::to_string(offs[k]);
  }
  c.SetMeta("splice_offsets", splices);
  for (int l = 0; l < model.cfg.NumLayers(); l++) {
    c.Add("weights_" + std::to_string(l), model.weights[l]);
    c.Add("biases_" + std::to_string(l), model.biases[l]);
  }
  WriteContainer(path, c);
}

TddnnModel ReadTddnn(const std::string &path) {
  ModelContainer c = ReadContainer(path);
  TddnnModel model;
  model.cfg.input_dim = std::stoi(c.GetMeta("input_dim"));
  model.cfg.hidden_dim = std::stoi(c.GetMeta("hidden_dim"));
  model.cfg.pnorm_group_size = std::stoi(c.GetMeta("pnorm_group_size"));
  model.cfg.pnorm_p = std::stod(c.GetMeta("pnorm_p"));
  model.cfg.num_classes = std::stoi(c.GetMeta("num_classes"));
  std::string splices = c.GetMeta("splice_offsets");
  std::vector<int> current;
  model.cfg.splice_offsets.clear();
  std::string token;
  for (char ch : splices + ";") {
    if (ch == ',' || ch == ';') {
      if (!token.empty()) current.push_back(std::stoi(token));
      token.clear();
      if (ch == ';') {
        model.cfg.splice_offsets.push_back(current);
        current.clear();
      }
    } else {
      token += ch;
    }
  }
  model.cfg.Check();
  for (int l = 0; l < model.cfg.NumLayers(); l++) {
    model.weights.push_back(c.GetMatrix("weights_" + std::to_string(l)));
    model.biases.push_back(c.GetVector("biases_" + std::to_string(l)));
  }
  return model;
}

}  // namespace lid
