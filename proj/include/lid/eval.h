// include/lid/eval.h

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

#ifndef LID_EVAL_H_
#define LID_EVAL_H_

#include <map>
#include <string>
#include <vector>

#include "lid/common.h"

namespace lid {

struct Trial {
  std::string utt_id;
  std::string true_language;
  int duration_s = 0;  // 3, 10 or 30
  Vector posteriors;   // over the trial set's language list
};

struct TrialSet {
  std::vector<std::string> languages;
  std::vector<Trial> trials;

  void Check() const;
  std::vector<int> Durations() const;  // distinct, ascending
};

struct PairRates {
  double p_miss = 0.0;
  double p_fa = 0.0;
};

// Closed-set classification error in percent over trials of one duration;
// argmax ties go to the lowest language index.
double ErrorRate(const TrialSet &set, int duration_s);

// Detection rates for one (target, nontarget) pair: over trials of the two
// languages, decide target iff log p(target|x) - log p(nontarget|x) > 0.
PairRates PairwiseRates(const TrialSet &set, int duration_s,
                        const std::string &target,
                        const std::string &nontarget);

// NIST average detection cost in percent: unit costs, target prior 0.5,
// the nontarget half split evenly, per-target miss rates averaged over
// nontargets.  The table maps (target, nontarget) to rates and must cover
// all K(K-1) ordered pairs.
double CAvg(const std::map<std::pair<std::string, std::string>, PairRates> &pairs,
            const std::vector<std::string> &languages);

struct EvalReport {
  std::vector<std::string> languages;
  std::vector<int> durations;
  std::vector<double> error_rate;  // percent, parallel to durations
  std::vector<double> c_avg;       // percent
  std::vector<std::map<std::pair<std::string, std::string>, PairRates>>
      pair_rates;
};

EvalReport Evaluate(const TrialSet &set);

// Aligned text table, durations as columns, plus a machine-readable TSV.
std::string FormatReport(const EvalReport &report);
std::string ReportToTsv(const EvalReport &report);

// Score file: TSV with header utt_id, true_language, duration_s, then one
// posterior column per language.
void WriteTrials(const std::string &path, const TrialSet &set);
TrialSet ReadTrials(const std::string &path);

}  // namespace lid

#endif  // LID_EVAL_H_
