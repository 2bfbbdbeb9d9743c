// Copyright 2026 The transfer-tts Authors
//
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

#include <doctest.h>

#include <cmath>
#include <functional>
#include <numbers>
#include <random>

#include "test_util.hpp"
#include "tts/align.hpp"
#include "tts/error.hpp"

using tts::Mat;
using tts::testing::random_matrix;

namespace {

// Best total score over every composition of T frames into N positive runs.
double brute_force_best(const Mat& grid) {
  const int n = static_cast<int>(grid.rows());
  const int t = static_cast<int>(grid.cols());
  double best = -std::numeric_limits<double>::infinity();
  std::function<void(int, int, double)> rec = [&](int token, int frame, double score) {
    if (token == n - 1) {
      for (int f = frame; f < t; ++f) score += grid(token, f);
      best = std::max(best, score);
      return;
    }
    const int remaining = n - token - 1;
    for (int len = 1; frame + len + remaining <= t; ++len) {
      double s = score;
      for (int f = frame; f < frame + len; ++f) s += grid(token, f);
      rec(token + 1, frame + len, s);
    }
  };
  rec(0, 0, 0.0);
  return best;
}

}  // namespace

TEST_CASE("likelihood grid closed form and direct recomputation") {
  const Mat z = random_matrix(5, 4, 1);
  const Mat grid = tts::likelihood_grid(z, Mat::Ones(5, 4), z);
  for (int j = 0; j < 5; ++j) CHECK(grid(j, j) == doctest::Approx(-2.0 * std::log(2.0 * std::numbers::pi)));

  const Mat mean = random_matrix(3, 4, 2);
  const Mat std = (random_matrix(3, 4, 3).array().abs() + 0.2).matrix();
  const Mat g = tts::likelihood_grid(mean, std, z);
  for (int j = 0; j < 3; ++j) {
    for (int t = 0; t < 5; ++t) {
      double direct = 0.0;
      for (int c = 0; c < 4; ++c) {
        const double r = (z(t, c) - mean(j, c)) / std(j, c);
        direct += -0.5 * r * r - std::log(std(j, c)) - 0.5 * std::log(2.0 * std::numbers::pi);
      }
      CHECK(g(j, t) == doctest::Approx(direct).epsilon(1e-12));
    }
  }
  const Mat g2 = tts::likelihood_grid(z.topRows(2), 2.0 * Mat::Ones(2, 4), z);
  const Mat g1 = tts::likelihood_grid(z.topRows(2), Mat::Ones(2, 4), z);
  CHECK(g2(0, 0) < g1(0, 0));
  CHECK(g2(1, 1) < g1(1, 1));
  CHECK_THROWS(tts::likelihood_grid(mean, Mat::Zero(3, 4), z));
}

TEST_CASE("mas trivial cases") {
  const auto one = tts::mas(random_matrix(1, 5, 4));
  CHECK(one.assignment == std::vector<int>{0, 0, 0, 0, 0});
  const auto diag = tts::mas(random_matrix(3, 3, 5));
  CHECK(diag.assignment == std::vector<int>{0, 1, 2});
  CHECK_THROWS_AS(tts::mas(random_matrix(4, 3, 6)), tts::Error);
}

TEST_CASE("mas ties stay on the current token") {
  const auto a = tts::mas(Mat::Zero(2, 4));
  // Backtracking stays on the later token on ties, so it absorbs every frame but the first.
  CHECK(a.assignment == std::vector<int>{0, 1, 1, 1});
  CHECK(a == tts::mas(Mat::Zero(2, 4)));
}

TEST_CASE("mas matches exhaustive enumeration") {
  std::mt19937_64 rng(17);
  for (int n = 1; n <= 4; ++n) {
    for (int t = n; t <= 8; ++t) {
      for (int trial = 0; trial < 50; ++trial) {
        const Mat grid = random_matrix(n, t, rng());
        const auto a = tts::mas(grid);
        tts::check_alignment(a);
        CHECK(std::abs(tts::alignment_score(grid, a) - brute_force_best(grid)) < 1e-9);
      }
    }
  }
}

TEST_CASE("mas output is always a valid alignment and shift invariant") {
  std::mt19937_64 rng(23);
  for (int trial = 0; trial < 1000; ++trial) {
    std::uniform_int_distribution<int> nd(1, 6);
    const int n = nd(rng);
    std::uniform_int_distribution<int> td(n, 20);
    const Mat grid = random_matrix(n, td(rng), rng(), 3.0);
    const auto a = tts::mas(grid);
    CHECK_NOTHROW(tts::check_alignment(a));
    CHECK(a.n_tokens == n);
    if (trial % 10 == 0) CHECK(tts::mas((grid.array() + 7.25).matrix()) == a);
  }
}

TEST_CASE("durations and alignments convert both ways") {
  tts::Alignment a{{0, 0, 1, 2, 2, 2}, 3};
  CHECK(tts::alignment_to_durations(a, 3) == std::vector<int>{2, 1, 3});
  CHECK(tts::alignment_to_durations(tts::Alignment{{0, 0, 0, 0}, 1}, 1) == std::vector<int>{4});
  CHECK(tts::durations_to_alignment(std::vector<int>{2, 1, 3}) == a);
  std::mt19937_64 rng(5);
  for (int trial = 0; trial < 100; ++trial) {
    const Mat grid = random_matrix(3, 9, rng());
    const auto al = tts::mas(grid);
    const auto d = tts::alignment_to_durations(al, 3);
    CHECK(tts::durations_to_alignment(d) == al);
  }
  CHECK_THROWS(tts::check_alignment(tts::Alignment{{0, 2, 2}, 3}));
  CHECK_THROWS(tts::check_alignment(tts::Alignment{{1, 1, 2}, 3}));
  CHECK_THROWS(tts::check_alignment(tts::Alignment{{0, 1, 0}, 2}));
}

TEST_CASE("expand_prior repeats token statistics") {
  Mat mean(2, 2), log_std(2, 2);
  mean << 1, 2, 3, 4;
  log_std << 0.1, 0.2, 0.3, 0.4;
  tts::GaussianStats prior{tts::ad::constant(mean), tts::ad::constant(log_std)};
  const auto one = tts::expand_prior({tts::ad::constant(mean.topRows(1)), tts::ad::constant(log_std.topRows(1))},
                                     std::vector<int>{3});
  CHECK(one.rows() == 3);
  for (int r = 0; r < 3; ++r) CHECK(one.mean.value().row(r) == mean.row(0));
  const auto ab = tts::expand_prior(prior, std::vector<int>{2, 1});
  REQUIRE(ab.rows() == 3);
  CHECK(ab.mean.value().row(0) == mean.row(0));
  CHECK(ab.mean.value().row(1) == mean.row(0));
  CHECK(ab.mean.value().row(2) == mean.row(1));
  CHECK(ab.log_std.value().row(2) == log_std.row(1));
  CHECK_THROWS(tts::expand_prior(prior, std::vector<int>{0, 2}));
  CHECK(tts::expand_prior(prior, std::vector<int>{0, 2}, true).rows() == 2);
  CHECK_THROWS(tts::expand_prior(prior, std::vector<int>{0, 0}, true));
  CHECK_THROWS(tts::expand_prior(prior, std::vector<int>{1}));
}

TEST_CASE("mas then expand reproduces the frame count") {
  std::mt19937_64 rng(8);
  for (int trial = 0; trial < 50; ++trial) {
    const Mat mean = random_matrix(3, 2, rng());
    const Mat z = random_matrix(11, 2, rng());
    const auto a = tts::mas(tts::likelihood_grid(mean, Mat::Ones(3, 2), z));
    tts::GaussianStats prior{tts::ad::constant(mean), tts::ad::constant(Mat::Zero(3, 2))};
    CHECK(tts::expand_prior(prior, tts::alignment_to_durations(a, 3)).rows() == 11);
  }
}
