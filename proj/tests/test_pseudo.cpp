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

#include <algorithm>
#include <map>
#include <random>

#include "test_util.hpp"
#include "tts/error.hpp"
#include "tts/pseudo.hpp"

using tts::Mat;
using tts::testing::TempDir;

namespace {

tts::FrameFeatures features(Mat values) { return {std::move(values), "test", 100.0}; }

int brute_nearest(const Eigen::RowVectorXd& x, const Mat& centroids) {
  int best = 0;
  double best_d = std::numeric_limits<double>::infinity();
  for (int k = 0; k < centroids.rows(); ++k) {
    double d = 0.0;
    for (int j = 0; j < centroids.cols(); ++j) d += (x(j) - centroids(k, j)) * (x(j) - centroids(k, j));
    if (d < best_d) {
      best_d = d;
      best = k;
    }
  }
  return best;
}

}  // namespace

TEST_CASE("k=1 centroid is the mean") {
  Mat pts(2, 2);
  pts << 0, 0, 2, 0;
  std::vector<tts::FrameFeatures> corpus{features(pts)};
  const auto r = tts::train_codebook(corpus, {.k = 1, .seed = 0, .max_iters = 10, .tol = 1e-9});
  CHECK(r.codebook.centroids(0, 0) == doctest::Approx(1.0));
  CHECK(r.codebook.centroids(0, 1) == doctest::Approx(0.0));
}

TEST_CASE("k=2 on two distinct points recovers them with zero inertia") {
  Mat pts(2, 3);
  pts << 1, 2, 3, -4, 5, 6;
  std::vector<tts::FrameFeatures> corpus{features(pts)};
  const auto r = tts::train_codebook(corpus, {.k = 2, .seed = 7, .max_iters = 10, .tol = 1e-9});
  CHECK(r.inertia() == 0.0);
  Mat sorted = r.codebook.centroids;
  if (sorted(0, 0) > sorted(1, 0)) sorted.row(0).swap(sorted.row(1));
  CHECK(sorted.row(0) == pts.row(1));
  CHECK(sorted.row(1) == pts.row(0));
}

TEST_CASE("fewer distinct points than k is an error") {
  Mat pts(4, 2);
  pts << 1, 1, 1, 1, 2, 2, 2, 2;
  std::vector<tts::FrameFeatures> corpus{features(pts)};
  CHECK_THROWS_AS(tts::train_codebook(corpus, {.k = 3}), tts::Error);
  CHECK_THROWS(tts::train_codebook(corpus, {.k = 0}));
}

TEST_CASE("Lloyd inertia is non-increasing and converged centroids are cluster means") {
  std::vector<tts::FrameFeatures> corpus{features(tts::testing::random_matrix(300, 4, 11)),
                                         features(tts::testing::random_matrix(200, 4, 12, 3.0))};
  const auto r = tts::train_codebook(corpus, {.k = 6, .seed = 3, .max_iters = 200, .tol = 1e-10});
  REQUIRE(r.converged);
  for (std::size_t i = 1; i < r.inertia_history.size(); ++i) {
    CHECK(r.inertia_history[i] <= r.inertia_history[i - 1] * (1 + 1e-12));
  }
  Mat sums = Mat::Zero(6, 4);
  Eigen::VectorXd counts = Eigen::VectorXd::Zero(6);
  for (const auto& f : corpus) {
    const auto ids = tts::quantize(f, r.codebook);
    for (Eigen::Index t = 0; t < f.values.rows(); ++t) {
      sums.row(ids[t]) += f.values.row(t);
      counts(ids[t]) += 1;
    }
  }
  for (int k = 0; k < 6; ++k) {
    REQUIRE(counts(k) > 0);
    const Eigen::RowVectorXd mean = sums.row(k) / counts(k);
    CHECK((mean - r.codebook.centroids.row(k)).norm() <= 1e-6 * std::max(1.0, mean.norm()));
  }
}

TEST_CASE("k-means training is deterministic given the seed") {
  std::vector<tts::FrameFeatures> corpus{features(tts::testing::random_matrix(200, 3, 5))};
  const auto a = tts::train_codebook(corpus, {.k = 5, .seed = 9});
  const auto b = tts::train_codebook(corpus, {.k = 5, .seed = 9});
  CHECK(a.codebook.centroids == b.codebook.centroids);
  CHECK(a.inertia_history == b.inertia_history);
}

TEST_CASE("quantize: exact centroid, tie rule and brute-force oracle") {
  tts::Codebook cb;
  cb.centroids = tts::testing::random_matrix(10, 3, 21);
  Mat frames(1, 3);
  frames.row(0) = cb.centroids.row(5);
  CHECK(tts::quantize(features(frames), cb) == tts::FrameClusterIds{5});

  tts::Codebook tie;
  tie.centroids = Mat::Zero(8, 1);
  for (int k = 0; k < 8; ++k) tie.centroids(k, 0) = 100.0 + k;
  tie.centroids(2, 0) = -1.0;
  tie.centroids(7, 0) = 1.0;
  Mat zero = Mat::Zero(1, 1);
  CHECK(tts::quantize(features(zero), tie) == tts::FrameClusterIds{2});

  const Mat random = tts::testing::random_matrix(500, 3, 22, 1.5);
  const auto ids = tts::quantize(features(random), cb);
  for (Eigen::Index t = 0; t < random.rows(); ++t) CHECK(ids[t] == brute_nearest(random.row(t), cb.centroids));

  CHECK_THROWS_AS(tts::quantize(features(Mat::Zero(2, 4)), cb), tts::Error);
}

TEST_CASE("merge_runs and expand_runs") {
  const auto seq = tts::merge_runs(std::vector<int>{3, 3, 5, 5, 5, 2});
  CHECK(seq.tokens == std::vector<int>{3, 5, 2});
  CHECK(seq.durations == std::vector<int>{2, 3, 1});
  const auto seven = tts::merge_runs(std::vector<int>{7, 7, 7, 7, 7});
  CHECK(seven.tokens == std::vector<int>{7});
  CHECK(seven.durations == std::vector<int>{5});
  const auto empty = tts::merge_runs(std::vector<int>{});
  CHECK(empty.tokens.empty());
  CHECK(empty.durations.empty());
  CHECK(tts::expand_runs({{3, 5, 2}, {2, 3, 1}}) == tts::FrameClusterIds{3, 3, 5, 5, 5, 2});
  CHECK(tts::expand_runs({{7}, {1}}) == tts::FrameClusterIds{7});
  CHECK_THROWS(tts::expand_runs({{7, 8}, {1, 0}}));
}

TEST_CASE("merge/expand round trip on random sequences") {
  std::mt19937_64 rng(42);
  for (int i = 0; i < 1000; ++i) {
    std::uniform_int_distribution<int> len(0, 40), sym(0, 3);
    std::vector<int> ids(static_cast<std::size_t>(len(rng)));
    for (int& x : ids) x = sym(rng);
    const auto seq = tts::merge_runs(ids);
    for (std::size_t j = 1; j < seq.tokens.size(); ++j) CHECK(seq.tokens[j] != seq.tokens[j - 1]);
    int total = 0;
    for (int d : seq.durations) total += d;
    CHECK(total == static_cast<int>(ids.size()));
    CHECK(tts::expand_runs(seq) == ids);
  }
}

TEST_CASE("codebook files round trip bit-exactly") {
  TempDir dir("codebook");
  tts::Codebook cb;
  cb.centroids = tts::testing::random_matrix(4, 3, 8);
  cb.centroids(0, 0) = 1.0 / 3.0;
  cb.seed = 12;
  cb.provider_id = "builtin-mel";
  tts::save_codebook(dir / "cb.txt", cb);
  const auto loaded = tts::load_codebook(dir / "cb.txt");
  CHECK(loaded.centroids == cb.centroids);
  CHECK(loaded.seed == 12);
  CHECK(loaded.provider_id == "builtin-mel");
  CHECK(tts::codebook_hash(loaded) == tts::codebook_hash(cb));
  CHECK(tts::serialize_codebook(cb).rfind("PPCB1 k=4 dim=3 seed=12 provider=builtin-mel\n", 0) == 0);
  CHECK_THROWS_AS(tts::parse_codebook("PPCB2 k=1 dim=1 seed=0 provider=x\n1\n"), tts::Error);
  CHECK_THROWS_AS(tts::parse_codebook("PPCB1 k=2 dim=1 seed=0 provider=x\n1\n"), tts::Error);
  tts::Codebook other = cb;
  other.centroids(3, 2) += 1e-9;
  CHECK(tts::codebook_hash(other) != tts::codebook_hash(cb));
}

TEST_CASE("token dumps round trip") {
  TempDir dir("tokens");
  std::vector<tts::TokenRecord> recs = {{"a", {{1, 2}, {3, 4}}}, {"b", {{0}, {9}}}};
  tts::write_token_dump(dir / "t.jsonl", recs);
  const auto back = tts::read_token_dump(dir / "t.jsonl");
  REQUIRE(back.size() == 2);
  CHECK(back[0].id == "a");
  CHECK(back[0].sequence == recs[0].sequence);
  CHECK(back[1].sequence == recs[1].sequence);
}
