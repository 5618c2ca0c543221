// tests/test_stats.cc

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

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <random>
#include <vector>

#include "doctest.h"
#include "lid/stats.h"

using namespace lid;

namespace {

struct RandomInstance {
  Matrix posteriors;  // rows sum to 1
  Matrix feats;
  VadMask mask;
};

RandomInstance MakeInstance(int t, int m, int d, std::mt19937_64 &rng,
                            bool with_mask) {
  std::normal_distribution<double> gauss;
  std::bernoulli_distribution keep(0.7);
  RandomInstance inst;
  inst.posteriors.resize(t, m);
  inst.feats.resize(t, d);
  inst.mask.resize(t, 1);
  for (int i = 0; i < t; i++) {
    RowVector logits(m);
    for (int c = 0; c < m; c++) logits[c] = gauss(rng);
    RowVector p = (logits.array() - logits.maxCoeff()).exp();
    inst.posteriors.row(i) = p / p.sum();
    for (int j = 0; j < d; j++) inst.feats(i, j) = 2.0 * gauss(rng);
    if (with_mask) inst.mask[i] = keep(rng) ? 1 : 0;
  }
  return inst;
}

std::string TempPath(const char *name) {
  return (std::filesystem::temp_directory_path() / name).string();
}

}  // namespace

TEST_CASE("one-hot posteriors count and sum the assigned frames") {
  Matrix post = Matrix::Zero(5, 3);
  post(0, 1) = 1.0;
  post(1, 0) = 1.0;
  post(2, 1) = 1.0;
  post(3, 2) = 1.0;
  post(4, 1) = 1.0;
  Matrix feats(5, 2);
  feats << 1, 2, 3, 4, 5, 6, 7, 8, 9, 10;
  VadMask mask(5, 1);
  SuffStats s = AccumulateStats(post, feats, mask);
  CHECK(s.n[0] == 1.0);
  CHECK(s.n[1] == 3.0);
  CHECK(s.n[2] == 1.0);
  CHECK(s.f(0, 0) == 3.0);
  CHECK(s.f(1, 0) == 1.0 + 5.0 + 9.0);
  CHECK(s.f(1, 1) == 2.0 + 6.0 + 10.0);
  CHECK(s.f(2, 1) == 8.0);
  CHECK(!s.centered);
}

TEST_CASE("uniform posteriors spread mass evenly") {
  const int t = 12, m = 4, d = 3;
  Matrix post = Matrix::Constant(t, m, 1.0 / m);
  std::mt19937_64 rng(7);
  std::normal_distribution<double> gauss;
  Matrix feats(t, d);
  for (int i = 0; i < t; i++)
    for (int j = 0; j < d; j++) feats(i, j) = gauss(rng);
  VadMask mask(t, 1);
  SuffStats s = AccumulateStats(post, feats, mask);
  RowVector total = feats.colwise().sum();
  for (int c = 0; c < m; c++) {
    CHECK(s.n[c] == doctest::Approx(double(t) / m).epsilon(1e-12));
    for (int j = 0; j < d; j++)
      CHECK(s.f(c, j) == doctest::Approx(total[j] / m).epsilon(1e-12));
  }
}

TEST_CASE("accumulation matches a frame-by-frame oracle") {
  std::mt19937_64 rng(42);
  std::uniform_int_distribution<int> t_dist(1, 50), m_dist(1, 16), d_dist(1, 8);
  for (int inst = 0; inst < 100; inst++) {
    const int t = t_dist(rng), m = m_dist(rng), d = d_dist(rng);
    RandomInstance in = MakeInstance(t, m, d, rng, true);
    SuffStats s = AccumulateStats(in.posteriors, in.feats, in.mask);

    Vector n = Vector::Zero(m);
    Matrix f = Matrix::Zero(m, d);
    int kept = 0;
    for (int i = 0; i < t; i++) {
      if (!in.mask[i]) continue;
      kept++;
      for (int c = 0; c < m; c++) {
        n[c] += in.posteriors(i, c);
        for (int j = 0; j < d; j++)
          f(c, j) += in.posteriors(i, c) * in.feats(i, j);
      }
    }
    for (int c = 0; c < m; c++) {
      CHECK(std::abs(s.n[c] - n[c]) < 1e-10);
      for (int j = 0; j < d; j++) CHECK(std::abs(s.f(c, j) - f(c, j)) < 1e-10);
    }
    // Total occupancy equals the number of unmasked frames.
    CHECK(std::abs(s.n.sum() - kept) < 1e-6);
  }
}

TEST_CASE("centered statistics subtract occupancy-weighted means") {
  std::mt19937_64 rng(9);
  RandomInstance in = MakeInstance(30, 5, 4, rng, true);
  std::normal_distribution<double> gauss;
  Matrix means(5, 4);
  for (int c = 0; c < 5; c++)
    for (int j = 0; j < 4; j++) means(c, j) = gauss(rng);

  SuffStats plain = AccumulateStats(in.posteriors, in.feats, in.mask);
  SuffStats centered = AccumulateStats(in.posteriors, in.feats, in.mask, &means);
  CHECK(centered.centered);
  CHECK(centered.n == plain.n);
  for (int c = 0; c < 5; c++)
    for (int j = 0; j < 4; j++)
      CHECK(centered.f(c, j) ==
            doctest::Approx(plain.f(c, j) - plain.n[c] * means(c, j))
                .epsilon(1e-12));

  // Same thing frame by frame on the shifted features.
  Matrix f = Matrix::Zero(5, 4);
  for (int i = 0; i < 30; i++) {
    if (!in.mask[i]) continue;
    for (int c = 0; c < 5; c++)
      for (int j = 0; j < 4; j++)
        f(c, j) += in.posteriors(i, c) * (in.feats(i, j) - means(c, j));
  }
  for (int c = 0; c < 5; c++)
    for (int j = 0; j < 4; j++) CHECK(std::abs(centered.f(c, j) - f(c, j)) < 1e-10);
}

TEST_CASE("an all-false mask yields zero statistics") {
  std::mt19937_64 rng(10);
  RandomInstance in = MakeInstance(10, 3, 2, rng, false);
  VadMask off(10, 0);
  SuffStats s = AccumulateStats(in.posteriors, in.feats, off);
  CHECK(s.n.cwiseAbs().maxCoeff() == 0.0);
  CHECK(s.f.cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("merging is additive, commutative, and splits cleanly") {
  std::mt19937_64 rng(11);
  RandomInstance a = MakeInstance(25, 6, 5, rng, false);
  RandomInstance b = MakeInstance(15, 6, 5, rng, false);
  VadMask ma(25, 1), mb(15, 1);
  SuffStats sa = AccumulateStats(a.posteriors, a.feats, ma);
  SuffStats sb = AccumulateStats(b.posteriors, b.feats, mb);

  SuffStats ab = MergeStats(sa, sb);
  SuffStats ba = MergeStats(sb, sa);
  CHECK(ab.n == ba.n);
  CHECK(ab.f == ba.f);

  SuffStats zero = ZeroStats(6, 5, false);
  SuffStats same = MergeStats(sa, zero);
  CHECK(same.n == sa.n);
  CHECK(same.f == sa.f);

  // Accumulating the concatenation equals merging the parts.
  Matrix post(40, 6), feats(40, 5);
  post << a.posteriors, b.posteriors;
  feats << a.feats, b.feats;
  VadMask mall(40, 1);
  SuffStats whole = AccumulateStats(post, feats, mall);
  for (int c = 0; c < 6; c++) {
    CHECK(whole.n[c] == doctest::Approx(ab.n[c]).epsilon(1e-12));
    for (int j = 0; j < 5; j++)
      CHECK(whole.f(c, j) == doctest::Approx(ab.f(c, j)).epsilon(1e-12));
  }
}

TEST_CASE("merging mismatched statistics fails") {
  SuffStats a = ZeroStats(4, 3, false);
  CHECK_THROWS_AS(MergeStats(a, ZeroStats(5, 3, false)), Error);
  CHECK_THROWS_AS(MergeStats(a, ZeroStats(4, 2, false)), Error);
  CHECK_THROWS_AS(MergeStats(a, ZeroStats(4, 3, true)), Error);
}

TEST_CASE("bad posterior rows are rejected, but only when unmasked") {
  Matrix post = Matrix::Constant(3, 2, 0.5);
  Matrix feats = Matrix::Zero(3, 2);
  VadMask mask(3, 1);
  post(1, 0) = 0.8;  // row sums to 1.3
  CHECK_THROWS_WITH_AS(AccumulateStats(post, feats, mask),
                       doctest::Contains("sums to"), Error);
  mask[1] = 0;  // the offending row is masked out, so it never gets checked
  CHECK_NOTHROW(AccumulateStats(post, feats, mask));

  Matrix neg = Matrix::Constant(3, 2, 0.5);
  neg(0, 0) = -0.2;
  neg(0, 1) = 1.2;
  VadMask all(3, 1);
  CHECK_THROWS_WITH_AS(AccumulateStats(neg, feats, all),
                       doctest::Contains("negative"), Error);
}

TEST_CASE("shape mismatches are rejected") {
  Matrix post = Matrix::Constant(4, 2, 0.5);
  Matrix feats = Matrix::Zero(5, 3);
  VadMask mask(4, 1);
  CHECK_THROWS_AS(AccumulateStats(post, feats, mask), Error);
  Matrix feats4 = Matrix::Zero(4, 3);
  VadMask short_mask(3, 1);
  CHECK_THROWS_AS(AccumulateStats(post, feats4, short_mask), Error);
  Matrix means = Matrix::Zero(3, 3);  // wrong class count
  VadMask ok(4, 1);
  CHECK_THROWS_AS(AccumulateStats(post, feats4, ok, &means), Error);
}

TEST_CASE("pruning zeroes small posteriors and renormalizes") {
  Matrix post(2, 3);
  post << 1e-6, 0.6, 0.4 - 1e-6, 0.2, 0.3, 0.5;
  Matrix out = PrunePosteriors(post, 1e-5);
  CHECK(out(0, 0) == 0.0);
  CHECK(out(0, 1) == doctest::Approx(0.6 / (1.0 - 1e-6)).epsilon(1e-12));
  CHECK(out(0, 2) == doctest::Approx((0.4 - 1e-6) / (1.0 - 1e-6)).epsilon(1e-12));
  // Rows with nothing below the floor are untouched (up to renormalization).
  for (int c = 0; c < 3; c++)
    CHECK(out(1, c) == doctest::Approx(post(1, c)).epsilon(1e-12));
  for (int t = 0; t < 2; t++)
    CHECK(out.row(t).sum() == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("a fully pruned row falls back to the original posteriors") {
  Matrix post(1, 3);
  post << 0.4, 0.35, 0.25;
  Matrix out = PrunePosteriors(post, 0.5);  // every entry is below the floor
  CHECK(out(0, 0) == doctest::Approx(0.4).epsilon(1e-12));
  CHECK(out(0, 1) == doctest::Approx(0.35).epsilon(1e-12));
  CHECK(out(0, 2) == doctest::Approx(0.25).epsilon(1e-12));
}

TEST_CASE("pruned accumulation still conserves mass") {
  std::mt19937_64 rng(13);
  RandomInstance in = MakeInstance(40, 8, 3, rng, false);
  Matrix pruned = PrunePosteriors(in.posteriors, 1e-2);
  VadMask mask(40, 1);
  SuffStats s = AccumulateStats(pruned, in.feats, mask);
  CHECK(std::abs(s.n.sum() - 40.0) < 1e-6);
}

TEST_CASE("statistics files round-trip bit-exactly") {
  std::mt19937_64 rng(14);
  RandomInstance in = MakeInstance(20, 5, 6, rng, true);
  Matrix means = Matrix::Constant(5, 6, 0.3);
  SuffStats s = AccumulateStats(in.posteriors, in.feats, in.mask, &means);
  std::string path = TempPath("lid_test_stats.stt");
  WriteStats(path, s);
  SuffStats r = ReadStats(path);
  CHECK(r.n == s.n);
  CHECK(r.f == s.f);
  CHECK(r.centered == s.centered);

  s.centered = false;
  WriteStats(path, s);
  CHECK(!ReadStats(path).centered);
  std::remove(path.c_str());
}

TEST_CASE("statistics validation rejects malformed values") {
  SuffStats s = ZeroStats(3, 2, false);
  s.n[1] = -0.5;
  CHECK_THROWS_AS(s.Check(), Error);
  SuffStats nan = ZeroStats(3, 2, false);
  nan.f(0, 0) = std::nan("");
  CHECK_THROWS_AS(nan.Check(), Error);
  SuffStats shape = ZeroStats(3, 2, false);
  shape.f.conservativeResize(2, 2);
  CHECK_THROWS_AS(shape.Check(), Error);
}
