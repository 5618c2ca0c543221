// include/lid/nnet.h

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

#ifndef LID_NNET_H_
#define LID_NNET_H_

#include <cstdint>
#include <string>
#include <vector>

#include "lid/common.h"

namespace lid {

// Multisplice time-delay network: six affine layers, each splicing the
// previous layer's output at a fixed set of frame offsets, p-norm group
// activations in the hidden layers and a softmax output.
struct TddnnConfig {
  int input_dim = 40;
  int hidden_dim = 256;
  int pnorm_group_size = 8;
  double pnorm_p = 2.0;
  int num_classes = 64;
  // One offset list per layer.  Defaults: [-2..2], {-2,1}, {0}, {-3,3},
  // {-7,2}, {0}; total receptive field [t-14, t+8].
  std::vector<std::vector<int>> splice_offsets;

  static TddnnConfig Default(int input_dim, int num_classes);
  void Check() const;

  int NumLayers() const { return static_cast<int>(splice_offsets.size()); }
  int GroupsPerLayer() const { return hidden_dim / pnorm_group_size; }
  int LeftContext() const;
  int RightContext() const;
  // Per-frame input dim of layer l and output dim of its affine transform.
  int LayerInputDim(int layer) const;
  int LayerOutputDim(int layer) const;
};

struct TddnnModel {
  TddnnConfig cfg;
  std::vector<Matrix> weights;  // out_dim x (in_dim * num_offsets)
  std::vector<Vector> biases;

  // Posterior rows for every input frame; context beyond the utterance edge
  // is filled by repeating the first/last frame.
  Matrix Forward(const Matrix &feats) const;
};

TddnnModel BuildTddnn(const TddnnConfig &cfg, uint64_t seed);

struct SgdSchedule {
  double initial_lr = 0.0015;
  double final_lr = 0.00015;
  int num_epochs = 6;
  int minibatch_size = 128;
  uint64_t seed = 0;
};

struct NnetTrainLog {
  std::vector<double> epoch_lr;
  std::vector<double> epoch_cross_entropy;  // averaged over the epoch's frames
};

// Plain minibatch SGD on cross-entropy.  The learning rate decays
// geometrically from initial_lr to final_lr across epochs; minibatches are
// contiguous frame ranges of utterances visited in a seeded shuffled order,
// so training is deterministic.
void TrainSgd(TddnnModel *model, const std::vector<Matrix> &feats,
              const std::vector<std::vector<int>> &labels,
              const SgdSchedule &sched, NnetTrainLog *log = nullptr);

double LearningRateAtEpoch(const SgdSchedule &sched, int epoch);

// Average cross-entropy of output frames [begin, end) of one utterance and
// its parameter gradients.  Exposed for finite-difference checks; with both
// gradient outputs null only the loss is computed.
double ComputeLossAndGradient(const TddnnModel &model, const Matrix &feats,
                              const std::vector<int> &labels, int begin,
                              int end, std::vector<Matrix> *grad_weights,
                              std::vector<Vector> *grad_biases);

void WriteTddnn(const std::string &path, const TddnnModel &model);
TddnnModel ReadTddnn(const std::string &path);

}  // namespace lid

#endif  // LID_NNET_H_
