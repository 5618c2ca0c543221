// src/eval.cc

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

#include "lid/eval.h"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <set>
#include <sstream>

namespace lid {

void TrialSet::Check() const {
  if (languages.size() < 2) LID_ERR << "need at least 2 languages";
  for (const Trial &t : trials) {
    if (t.posteriors.size() != static_cast<int>(languages.size()))
      LID_ERR << "trial " << t.utt_id << " has " << t.posteriors.size()
              << " posteriors for " << languages.size() << " languages";
    if (std::abs(t.posteriors.sum() - 1.0) > 1e-8)
      LID_ERR << "trial " << t.utt_id << " posteriors sum to "
              << t.posteriors.sum();
    if (t.duration_s != 3 && t.duration_s != 10 && t.duration_s != 30)
      LID_ERR << "trial " << t.utt_id << " has duration " << t.duration_s;
    if (std::find(languages.begin(), languages.end(), t.true_language) ==
        languages.end())
      LID_ERR << "trial " << t.utt_id << " has unknown language "
              << t.true_language;
  }
}

std::vector<int> TrialSet::Durations() const {
  std::set<int> seen;
  for (const Trial &t : trials) seen.insert(t.duration_s);
  return {seen.begin(), seen.end()};
}

namespace {

int LanguageIndex(const std::vector<std::string> &languages,
                  const std::string &name) {
  auto it = std::find(languages.begin(), languages.end(), name);
  if (it == languages.end()) LID_ERR << "language " << name << " not in set";
  return static_cast<int>(it - languages.begin());
}

// Lowest index among maxima, so ties are deterministic.
int ArgmaxLowest(const Vector &v) {
  int best = 0;
  for (int i = 1; i < v.size(); i++)
    if (v[i] > v[best]) best = i;
  return best;
}

}  // namespace

double ErrorRate(const TrialSet &set, int duration_s) {
  int total = 0, wrong = 0;
  for (const Trial &t : set.trials) {
    if (t.duration_s != duration_s) continue;
    total++;
    const int decided = ArgmaxLowest(t.posteriors);
    if (set.languages[decided] != t.true_language) wrong++;
  }
  if (total == 0) LID_ERR << "no trials with duration " << duration_s;
  return 100.0 * wrong / total;
}

PairRates PairwiseRates(const TrialSet &set, int duration_s,
                        const std::string &target,
                        const std::string &nontarget) {
  const int ti = LanguageIndex(set.languages, target);
  const int ni = LanguageIndex(set.languages, nontarget);
  if (ti == ni) LID_ERR << "target equals nontarget: " << target;
  int n_target = 0, n_miss = 0, n_nontarget = 0, n_fa = 0;
  for (const Trial &t : set.trials) {
    if (t.duration_s != duration_s) continue;
    if (t.true_language != target && t.true_language != nontarget) continue;
    const double log_odds = std::log(std::max(t.posteriors[ti], 1e-300)) -
                            std::log(std::max(t.posteriors[ni], 1e-300));
    const bool decide_target = log_odds > 0;
    if (t.true_language == target) {
      n_target++;
      if (!decide_target) n_miss++;
    } else {
      n_nontarget++;
      if (decide_target) n_fa++;
    }
  }
  if (n_target == 0 || n_nontarget == 0)
    LID_ERR << "pair (" << target << ", " << nontarget
            << ") missing trials at duration " << duration_s;
  return {static_cast<double>(n_miss) / n_target,
          static_cast<double>(n_fa) / n_nontarget};
}

double CAvg(const std::map<std::pair<std::string, std::string>, PairRates> &pairs,
            const std::vector<std::string> &languages) {
  const int k = static_cast<int>(languages.size());
  if (k < 2) LID_ERR << "need at least 2 languages";
  const double c_miss = 1.0, c_fa = 1.0;
  const double p_target = 0.5;
  const double p_nontarget = 0.5 / (k - 1);
  double cost = 0.0;
  for (const std::string &target : languages) {
    double miss_sum = 0.0, fa_term = 0.0;
    for (const std::string &nontarget : languages) {
      if (nontarget == target) continue;
      auto it = pairs.find({target, nontarget});
      if (it == pairs.end())
        LID_ERR << "pair table missing (" << target << ", " << nontarget << ")";
      miss_sum += it->second.p_miss;
      fa_term += c_fa * p_nontarget * it->second.p_fa;
    }
    cost += c_miss * p_target * miss_sum / (k - 1) + fa_term;
  }
  return 100.0 * cost / k;
}

EvalReport Evaluate(const TrialSet &set) {
  set.Check();
  EvalReport report;
  report.languages = set.languages;
  for (int duration : set.Durations()) {
    report.durations.push_back(duration);
    report.error_rate.push_back(ErrorRate(set, duration));
    std::map<std::pair<std::string, std::string>, PairRates> pairs;
    for (const std::string &target : set.languages)
      for (const std::string &nontarget : set.languages)
        if (target != nontarget)
          pairs[{target, nontarget}] =
              PairwiseRates(set, duration, target, nontarget);
    report.c_avg.push_back(CAvg(pairs, set.languages));
    report.pair_rates.push_back(std::move(pairs));
  }
  return report;
}

std::string FormatReport(const EvalReport &report) {
  std::ostringstream out;
  char buf[64];
  out << "Test Segment Duration\n";
  out << "Measure  ";
  for (int d : report.durations) {
    char head[16];
    std::snprintf(head, sizeof(head), "%ds", d);
    std::snprintf(buf, sizeof(buf), "%10s", head);
    out << buf;
  }
  out << "\n";
  out << "ER (%)   ";
  for (double v : report.error_rate) {
    std::snprintf(buf, sizeof(buf), "%10.2f", v);
    out << buf;
  }
  out << "\n";
  out << "C_avg (%)";
  for (double v : report.c_avg) {
    std::snprintf(buf, sizeof(buf), "%10.2f", v);
    out << buf;
  }
  out << "\n";
  return out.str();
}

std::string ReportToTsv(const EvalReport &report) {
  std::ostringstream out;
  out << "measure";
  for (int d : report.durations) out << "\t" << d << "s";
  out << "\n";
  out.precision(17);
  out << "er_percent";
  for (double v : report.error_rate) out << "\t" << v;
  out << "\n";
  out << "c_avg_percent";
  for (double v : report.c_avg) out << "\t" << v;
  out << "\n";
  return out.str();
}

void WriteTrials(const std::string &path, const TrialSet &set) {
  set.Check();
  std::ofstream out(path, std::ios::binary);
  if (!out) LID_ERR << "cannot open " << path << " for writing";
  out.precision(17);
  out << "utt_id\ttrue_language\tduration_s";
  for (const std::string &l : set.languages) out << "\t" << l;
  out << "\n";
  for (const Trial &t : set.trials) {
    out << t.utt_id << "\t" << t.true_language << "\t" << t.duration_s;
    for (int i = 0; i < t.posteriors.size(); i++) out << "\t" << t.posteriors[i];
    out << "\n";
  }
  if (!out) LID_ERR << "failed writing " << path;
}

TrialSet ReadTrials(const std::string &path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) LID_ERR << "cannot open " << path;
  std::string line;
  if (!std::getline(in, line)) LID_ERR << path << " is empty";
  std::vector<std::string> header;
  {
    std::stringstream ss(line);
    std::string field;
    while (std::getline(ss, field, '\t')) header.push_back(field);
  }
  if (header.size() < 5 || header[0] != "utt_id" ||
      header[1] != "true_language" || header[2] != "duration_s")
    LID_ERR << path << " has an unexpected header";
  TrialSet set;
  set.languages.assign(header.begin() + 3, header.end());
  int line_no = 1;
  while (std::getline(in, line)) {
    line_no++;
    if (line.empty()) continue;
    std::stringstream ss(line);
    std::string field;
    std::vector<std::string> fields;
    while (std::getline(ss, field, '\t')) fields.push_back(field);
    if (fields.size() != header.size())
      LID_ERR << path << " line " << line_no << " has " << fields.size()
              << " fields, expected " << header.size();
    Trial t;
    t.utt_id = fields[0];
    t.true_language = fields[1];
    t.duration_s = std::stoi(fields[2]);
    t.posteriors.resize(static_cast<int>(set.languages.size()));
    for (std::size_t i = 0; i < set.languages.size(); i++)
      t.posteriors[static_cast<int>(i)] = std::stod(fields[3 + i]);
    set.trials.push_back(std::move(t));
  }
  set.Check();
  return set;
}

}  // namespace lid
