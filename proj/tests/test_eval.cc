// tests/test_eval.cc

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

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>

#include "doctest.h"
#include "lid/common.h"

namespace lid {
namespace {

Vector Post(std::initializer_list<double> values) {
  Vector v(static_cast<int>(values.size()));
  int i = 0;
  for (double x : values) v[i++] = x;
  return v;
}

Trial MakeTrial(const std::string &utt, const std::string &language,
                int duration, std::initializer_list<double> post) {
  Trial t;
  t.utt_id = utt;
  t.true_language = language;
  t.duration_s = duration;
  t.posteriors = Post(post);
  return t;
}

std::string TempPath(const std::string &stem) {
  return (std::filesystem::temp_directory_path() / stem).string();
}

TEST_CASE("error rate counts argmax mistakes in percent") {
  TrialSet set;
  set.languages = {"aa", "bb"};
  // 5 trials, one wrong: 20 percent.
  set.trials.push_back(MakeTrial("u0", "aa", 3, {0.9, 0.1}));
  set.trials.push_back(MakeTrial("u1", "aa", 3, {0.8, 0.2}));
  set.trials.push_back(MakeTrial("u2", "bb", 3, {0.3, 0.7}));
  set.trials.push_back(MakeTrial("u3", "bb", 3, {0.1, 0.9}));
  set.trials.push_back(MakeTrial("u4", "bb", 3, {0.6, 0.4}));
  CHECK(ErrorRate(set, 3) == 20.0);
  // A perfect duration coexists in the same set.
  set.trials.push_back(MakeTrial("u5", "aa", 10, {1.0, 0.0}));
  set.trials.push_back(MakeTrial("u6", "bb", 10, {0.0, 1.0}));
  CHECK(ErrorRate(set, 10) == 0.0);
  CHECK(ErrorRate(set, 3) == 20.0);
}

TEST_CASE("argmax ties resolve to the lowest language index") {
  TrialSet set;
  set.languages = {"aa", "bb"};
  set.trials.push_back(MakeTrial("u0", "aa", 3, {0.5, 0.5}));
  set.trials.push_back(MakeTrial("u1", "bb", 3, {0.5, 0.5}));
  // Both ties decide "aa": u0 is right, u1 is wrong.
  CHECK(ErrorRate(set, 3) == 50.0);
}

TEST_CASE("error rate requires trials at the requested duration") {
  TrialSet set;
  set.languages = {"aa", "bb"};
  set.trials.push_back(MakeTrial("u0", "aa", 3, {0.9, 0.1}));
  CHECK_THROWS_WITH_AS(ErrorRate(set, 30), doctest::Contains("duration"),
                       Error);
}

TEST_CASE("pairwise rates follow the log-odds rule with hand counts") {
  TrialSet set;
  set.languages = {"aa", "bb"};
  set.trials.push_back(MakeTrial("u0", "aa", 3, {0.9, 0.1}));
  set.trials.push_back(MakeTrial("u1", "aa", 3, {0.4, 0.6}));
  set.trials.push_back(MakeTrial("u2", "bb", 3, {0.7, 0.3}));
  set.trials.push_back(MakeTrial("u3", "bb", 3, {0.2, 0.8}));
  set.trials.push_back(MakeTrial("u4", "bb", 3, {0.5, 0.5}));
  // Target aa: u1 misses (1 of 2); u2 false-alarms, the u4 tie has log
  // odds exactly 0 so it stays with the nontarget (1 of 3).
  PairRates ab = PairwiseRates(set, 3, "aa", "bb");
  CHECK(ab.p_miss == 0.5);
  CHECK(ab.p_fa == doctest::Approx(1.0 / 3.0).epsilon(1e-15));
  // Target bb: u2 and the u4 tie miss (2 of 3); u1 false-alarms (1 of 2).
  PairRates ba = PairwiseRates(set, 3, "bb", "aa");
  CHECK(ba.p_miss == doctest::Approx(2.0 / 3.0).epsilon(1e-15));
  CHECK(ba.p_fa == 0.5);
}

TEST_CASE("pairwise rates reject degenerate pairs") {
  TrialSet set;
  set.languages = {"aa", "bb", "cc"};
  set.trials.push_back(MakeTrial("u0", "aa", 3, {0.8, 0.1, 0.1}));
  set.trials.push_back(MakeTrial("u1", "bb", 3, {0.1, 0.8, 0.1}));
  CHECK_THROWS_WITH_AS(PairwiseRates(set, 3, "aa", "aa"),
                       doctest::Contains("target equals nontarget"), Error);
  // No cc trials at this duration.
  CHECK_THROWS_WITH_AS(PairwiseRates(set, 3, "aa", "cc"),
                       doctest::Contains("missing trials"), Error);
  CHECK_THROWS_AS(PairwiseRates(set, 3, "dd", "aa"), Error);
}

TEST_CASE("average cost is zero for a perfect detector") {
  std::map<std::pair<std::string, std::string>, PairRates> pairs;
  std::vector<std::string> languages = {"aa", "bb", "cc"};
  for (const std::string &t : languages)
    for (const std::string &n : languages)
      if (t != n) pairs[{t, n}] = {0.0, 0.0};
  CHECK(CAvg(pairs, languages) == 0.0);
}

TEST_CASE("uniform rates give the closed-form average cost") {
  // With every pair at p_miss 0.1 and p_fa 0.2 the cost collapses to
  // 100 * (0.5 * 0.1 + 0.5 * 0.2) = 15 for any number of languages.
  for (int k : {2, 3, 5, 8}) {
    std::vector<std::string> languages;
    for (int i = 0; i < k; i++) languages.push_back("l" + std::to_string(i));
    std::map<std::pair<std::string, std::string>, PairRates> pairs;
    for (const std::string &t : languages)
      for (const std::string &n : languages)
        if (t != n) pairs[{t, n}] = {0.1, 0.2};
    CHECK(CAvg(pairs, languages) == doctest::Approx(15.0).epsilon(1e-12));
  }
}

TEST_CASE("average cost matches a brute-force oracle on random rates") {
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  std::vector<std::string> languages = {"aa", "bb", "cc", "dd"};
  const int k = 4;
  std::map<std::pair<std::string, std::string>, PairRates> pairs;
  for (const std::string &t : languages)
    for (const std::string &n : languages)
      if (t != n) pairs[{t, n}] = {unif(rng), unif(rng)};
  // Independent evaluation of the definition: unit costs, target prior
  // one half, the other half split across the k-1 nontargets.
  double oracle = 0.0;
  for (const std::string &t : languages) {
    for (const std::string &n : languages) {
      if (t == n) continue;
      oracle += 0.5 * pairs[{t, n}].p_miss / (k - 1);
      oracle += 0.5 / (k - 1) * pairs[{t, n}].p_fa;
    }
  }
  oracle = 100.0 * oracle / k;
  CHECK(CAvg(pairs, languages) == doctest::Approx(oracle).epsilon(1e-12));
}

TEST_CASE("raising any pair rate raises the average cost") {
  std::vector<std::string> languages = {"aa", "bb", "cc"};
  std::map<std::pair<std::string, std::string>, PairRates> pairs;
  for (const std::string &t : languages)
    for (const std::string &n : languages)
      if (t != n) pairs[{t, n}] = {0.1, 0.1};
  const double base = CAvg(pairs, languages);
  for (const std::string &t : languages) {
    for (const std::string &n : languages) {
      if (t == n) continue;
      auto bumped = pairs;
      bumped[{t, n}].p_miss += 0.05;
      CHECK(CAvg(bumped, languages) > base);
      bumped = pairs;
      bumped[{t, n}].p_fa += 0.05;
      CHECK(CAvg(bumped, languages) > base);
    }
  }
}

TEST_CASE("average cost checks the pair table and language count") {
  std::vector<std::string> languages = {"aa", "bb", "cc"};
  std::map<std::pair<std::string, std::string>, PairRates> pairs;
  for (const std::string &t : languages)
    for (const std::string &n : languages)
      if (t != n) pairs[{t, n}] = {0.1, 0.1};
  pairs.erase({"bb", "cc"});
  CHECK_THROWS_WITH_AS(CAvg(pairs, languages), doctest::Contains("missing"),
                       Error);
  CHECK_THROWS_WITH_AS(CAvg({}, {"aa"}), doctest::Contains("2 languages"),
                       Error);
}

TEST_CASE("evaluate agrees with per-duration hand evaluation") {
  std::mt19937_64 rng(13);
  std::uniform_real_distribution<double> unif(0.01, 1.0);
  TrialSet set;
  set.languages = {"aa", "bb", "cc"};
  int utt = 0;
  for (int duration : {3, 10}) {
    for (int lang = 0; lang < 3; lang++) {
      for (int i = 0; i < 10; i++) {
        Trial t;
        t.utt_id = "u" + std::to_string(utt++);
        t.true_language = set.languages[lang];
        t.duration_s = duration;
        t.posteriors.resize(3);
        for (int j = 0; j < 3; j++) t.posteriors[j] = unif(rng);
        t.posteriors /= t.posteriors.sum();
        set.trials.push_back(std::move(t));
      }
    }
  }
  EvalReport report = Evaluate(set);
  REQUIRE(report.durations == std::vector<int>{3, 10});
  REQUIRE(report.languages == set.languages);
  REQUIRE(report.error_rate.size() == 2);
  REQUIRE(report.c_avg.size() == 2);
  REQUIRE(report.pair_rates.size() == 2);
  for (int di = 0; di < 2; di++) {
    const int duration = report.durations[di];
    // Independent error count.
    int total = 0, wrong = 0;
    for (const Trial &t : set.trials) {
      if (t.duration_s != duration) continue;
      total++;
      int best = 0;
      for (int j = 1; j < 3; j++)
        if (t.posteriors[j] > t.posteriors[best]) best = j;
      if (set.languages[best] != t.true_language) wrong++;
    }
    CHECK(report.error_rate[di] == 100.0 * wrong / total);
    // Independent pair rates by direct counting.
    for (int ti = 0; ti < 3; ti++) {
      for (int ni = 0; ni < 3; ni++) {
        if (ti == ni) continue;
        int n_t = 0, miss = 0, n_n = 0, fa = 0;
        for (const Trial &t : set.trials) {
          if (t.duration_s != duration) continue;
          const bool decide =
              std::log(t.posteriors[ti]) - std::log(t.posteriors[ni]) > 0;
          if (t.true_language == set.languages[ti]) {
            n_t++;
            if (!decide) miss++;
          } else if (t.true_language == set.languages[ni]) {
            n_n++;
            if (decide) fa++;
          }
        }
        const PairRates &got =
            report.pair_rates[di].at({set.languages[ti], set.languages[ni]});
        CHECK(got.p_miss == static_cast<double>(miss) / n_t);
        CHECK(got.p_fa == static_cast<double>(fa) / n_n);
      }
    }
    CHECK(report.c_avg[di] ==
          doctest::Approx(CAvg(report.pair_rates[di], set.languages))
              .epsilon(1e-15));
  }
}

TEST_CASE("report formatting pins the aligned table layout") {
  EvalReport report;
  report.languages = {"aa", "bb"};
  report.durations = {3, 10, 30};
  report.error_rate = {12.98, 2.69, 0.42};
  report.c_avg = {7.73, 1.61, 0.24};
  const std::string expected =
      "Test Segment Duration\n"
      "Measure          3s       10s       30s\n"
      "ER (%)        12.98      2.69      0.42\n"
      "C_avg (%)      7.73      1.61      0.24\n";
  CHECK(FormatReport(report) == expected);
}

TEST_CASE("tsv report parses back to the same numbers") {
  EvalReport report;
  report.languages = {"aa", "bb"};
  report.durations = {3, 30};
  report.error_rate = {1.0 / 3.0, 0.1234567890123456789};
  report.c_avg = {2.0 / 7.0, 1e-14};
  std::istringstream in(ReportToTsv(report));
  std::string line;
  REQUIRE(std::getline(in, line));
  CHECK(line == "measure\t3s\t30s");
  REQUIRE(std::getline(in, line));
  {
    std::stringstream row(line);
    std::string label, a, b;
    std::getline(row, label, '\t');
    std::getline(row, a, '\t');
    std::getline(row, b, '\t');
    CHECK(label == "er_percent");
    // 17 significant digits round-trip doubles exactly.
    CHECK(std::stod(a) == report.error_rate[0]);
    CHECK(std::stod(b) == report.error_rate[1]);
  }
  REQUIRE(std::getline(in, line));
  {
    std::stringstream row(line);
    std::string label, a, b;
    std::getline(row, label, '\t');
    std::getline(row, a, '\t');
    std::getline(row, b, '\t');
    CHECK(label == "c_avg_percent");
    CHECK(std::stod(a) == report.c_avg[0]);
    CHECK(std::stod(b) == report.c_avg[1]);
  }
}

TEST_CASE("trial files round-trip bit-exactly") {
  std::mt19937_64 rng(17);
  std::uniform_real_distribution<double> unif(0.01, 1.0);
  TrialSet set;
  set.languages = {"aa", "bb", "cc"};
  for (int i = 0; i < 25; i++) {
    Trial t;
    t.utt_id = "utt_" + std::to_string(i);
    t.true_language = set.languages[i % 3];
    t.duration_s = std::vector<int>{3, 10, 30}[i % 3];
    t.posteriors.resize(3);
    for (int j = 0; j < 3; j++) t.posteriors[j] = unif(rng);
    t.posteriors /= t.posteriors.sum();
    set.trials.push_back(std::move(t));
  }
  const std::string path = TempPath("lid_test_trials.tsv");
  WriteTrials(path, set);
  TrialSet back = ReadTrials(path);
  REQUIRE(back.languages == set.languages);
  REQUIRE(back.trials.size() == set.trials.size());
  for (std::size_t i = 0; i < set.trials.size(); i++) {
    CHECK(back.trials[i].utt_id == set.trials[i].utt_id);
    CHECK(back.trials[i].true_language == set.trials[i].true_language);
    CHECK(back.trials[i].duration_s == set.trials[i].duration_s);
    REQUIRE(back.trials[i].posteriors.size() == 3);
    for (int j = 0; j < 3; j++)
      CHECK(back.trials[i].posteriors[j] == set.trials[i].posteriors[j]);
  }
  std::filesystem::remove(path);
}

TEST_CASE("trial files reject a mangled header and short rows") {
  const std::string path = TempPath("lid_test_trials_bad.tsv");
  {
    std::ofstream out(path);
    out << "utt_id\ttrue_language\taa\tbb\n";
  }
  CHECK_THROWS_WITH_AS(ReadTrials(path), doctest::Contains("header"), Error);
  {
    std::ofstream out(path);
    out << "utt_id\ttrue_language\tduration_s\taa\tbb\n";
    out << "u0\taa\t3\t0.5\n";
  }
  CHECK_THROWS_WITH_AS(ReadTrials(path), doctest::Contains("fields"), Error);
  std::filesystem::remove(path);
  CHECK_THROWS_AS(ReadTrials(path), Error);
}

TEST_CASE("trial sets validate posteriors, durations and labels") {
  TrialSet set;
  set.languages = {"aa"};
  CHECK_THROWS_WITH_AS(set.Check(), doctest::Contains("2 languages"), Error);
  set.languages = {"aa", "bb"};
  set.trials.push_back(MakeTrial("u0", "aa", 3, {0.9, 0.1}));
  CHECK_NOTHROW(set.Check());

  auto broken = set;
  broken.trials[0].posteriors = Post({0.5, 0.3, 0.2});
  CHECK_THROWS_WITH_AS(broken.Check(), doctest::Contains("posteriors"), Error);

  broken = set;
  broken.trials[0].posteriors = Post({0.8, 0.1});
  CHECK_THROWS_WITH_AS(broken.Check(), doctest::Contains("sum"), Error);

  broken = set;
  broken.trials[0].duration_s = 7;
  CHECK_THROWS_WITH_AS(broken.Check(), doctest::Contains("duration"), Error);

  broken = set;
  broken.trials[0].true_language = "zz";
  CHECK_THROWS_WITH_AS(broken.Check(), doctest::Contains("unknown language"),
                       Error);
}

TEST_CASE("durations come back distinct and ascending") {
  TrialSet set;
  set.languages = {"aa", "bb"};
  set.trials.push_back(MakeTrial("u0", "aa", 30, {0.9, 0.1}));
  set.trials.push_back(MakeTrial("u1", "aa", 3, {0.9, 0.1}));
  set.trials.push_back(MakeTrial("u2", "bb", 30, {0.1, 0.9}));
  set.trials.push_back(MakeTrial("u3", "bb", 10, {0.1, 0.9}));
  CHECK(set.Durations() == std::vector<int>{3, 10, 30});
}

}  // namespace
}  // namespace lid
