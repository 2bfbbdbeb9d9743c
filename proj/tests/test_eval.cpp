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
#include <fstream>
#include <random>

#include "test_util.hpp"
#include "tts/error.hpp"
#include "tts/eval.hpp"
#include "tts/train.hpp"

using tts::Mat;
using tts::Model;
using tts::PriorKind;
using tts::testing::micro_audio;
using tts::testing::micro_model;
using tts::testing::random_matrix;
using tts::testing::TempDir;

namespace {

// Textbook full-table edit distance.
int full_table_levenshtein(const std::vector<int>& a, const std::vector<int>& b) {
  std::vector<std::vector<int>> d(a.size() + 1, std::vector<int>(b.size() + 1));
  for (std::size_t i = 0; i <= a.size(); ++i) d[i][0] = static_cast<int>(i);
  for (std::size_t j = 0; j <= b.size(); ++j) d[0][j] = static_cast<int>(j);
  for (std::size_t i = 1; i <= a.size(); ++i) {
    for (std::size_t j = 1; j <= b.size(); ++j) {
      d[i][j] = std::min({d[i - 1][j] + 1, d[i][j - 1] + 1, d[i - 1][j - 1] + (a[i - 1] == b[j - 1] ? 0 : 1)});
    }
  }
  return d[a.size()][b.size()];
}

std::vector<int> random_sequence(std::mt19937_64& rng, int max_len, int alphabet) {
  std::uniform_int_distribution<int> len(0, max_len), sym(0, alphabet - 1);
  std::vector<int> out(static_cast<std::size_t>(len(rng)));
  for (int& x : out) x = sym(rng);
  return out;
}

}  // namespace

TEST_CASE("mel distance") {
  const auto audio = micro_audio();
  const tts::Waveform a = tts::render_synthetic("abc", 0, audio.sample_rate);
  const tts::Waveform b = tts::render_synthetic("de", 1, audio.sample_rate);
  CHECK(tts::mel_distance(a, a, audio) == 0.0);
  CHECK(tts::mel_distance(a, b, audio) == tts::mel_distance(b, a, audio));
  CHECK(tts::mel_distance(a, b, audio) > 0.0);
  const Mat ma = tts::compute_mel(a, audio).values, mb = tts::compute_mel(b, audio).values;
  const auto t = std::min(ma.rows(), mb.rows());
  const double direct = (ma.topRows(t) - mb.topRows(t)).cwiseAbs().mean();
  CHECK(tts::mel_distance(a, b, audio) == doctest::Approx(direct).epsilon(1e-12));
  CHECK_THROWS_AS(tts::mel_distance(tts::Waveform(), a, audio), tts::Error);
}

TEST_CASE("cosine similarity") {
  const Mat v = random_matrix(1, 6, 1);
  CHECK(tts::cosine_similarity(v, v) == doctest::Approx(1.0));
  CHECK(tts::cosine_similarity(v, -v) == doctest::Approx(-1.0));
  CHECK(tts::cosine_similarity(v, 3.0 * v) == doctest::Approx(1.0));
  CHECK(tts::cosine_similarity(v, Mat::Zero(1, 6)) == 0.0);
  const Mat w = random_matrix(1, 6, 2);
  CHECK(tts::cosine_similarity(v, w) == doctest::Approx(v.cwiseProduct(w).sum() / (v.norm() * w.norm())));
  CHECK_THROWS_AS(tts::cosine_similarity(v, Mat::Zero(1, 5)), tts::Error);
}

TEST_CASE("speaker similarity needs a multi-speaker model") {
  const auto audio = micro_audio();
  const tts::Waveform a = tts::render_synthetic("abc", 0, audio.sample_rate);
  Model single(micro_model(), PriorKind::kText, 1);
  CHECK_THROWS_AS(tts::speaker_similarity(a, a, single), tts::Error);
  Model multi(micro_model(true), PriorKind::kText, 1);
  tts::testing::jitter(multi, 2);
  CHECK(tts::speaker_similarity(a, a, multi) == doctest::Approx(1.0));
  const tts::Waveform b = tts::render_synthetic("abc", 3, audio.sample_rate);
  const double s = tts::speaker_similarity(a, b, multi);
  CHECK(s == doctest::Approx(tts::speaker_similarity(b, a, multi)));
  CHECK(s <= 1.0);
  CHECK(s >= -1.0);
}

TEST_CASE("levenshtein agrees with a full-table oracle and is a metric") {
  std::mt19937_64 rng(7);
  for (int trial = 0; trial < 500; ++trial) {
    const auto a = random_sequence(rng, 9, 4), b = random_sequence(rng, 9, 4), c = random_sequence(rng, 9, 4);
    const int ab = tts::levenshtein(a, b);
    CHECK(ab == full_table_levenshtein(a, b));
    CHECK(ab == tts::levenshtein(b, a));
    CHECK(tts::levenshtein(a, a) == 0);
    CHECK(tts::levenshtein(a, c) <= ab + tts::levenshtein(b, c));
    CHECK(ab <= static_cast<int>(std::max(a.size(), b.size())));
  }
  CHECK(tts::levenshtein(std::vector<int>{1, 2, 3}, std::vector<int>{}) == 3);
  CHECK(tts::levenshtein(std::vector<int>{1, 2, 3}, std::vector<int>{1, 3}) == 1);
}

TEST_CASE("sequence accuracy") {
  CHECK(tts::sequence_accuracy(std::vector<int>{1, 2, 3}, std::vector<int>{1, 2, 3}) == 1.0);
  CHECK(tts::sequence_accuracy(std::vector<int>{1, 2, 3}, std::vector<int>{4, 5, 6}) == 0.0);
  CHECK(tts::sequence_accuracy(std::vector<int>{1, 2, 3, 4}, std::vector<int>{1, 3, 4}) == doctest::Approx(0.75));
  CHECK_THROWS_AS(tts::sequence_accuracy(std::vector<int>{}, std::vector<int>{1}), tts::Error);
  CHECK_THROWS_AS(tts::sequence_accuracy(std::vector<int>{1}, std::vector<int>{}), tts::Error);
}

TEST_CASE("token round trip of a recording against its own tokens is perfect") {
  const auto audio = micro_audio();
  const tts::Waveform a = tts::render_synthetic("abcd", 0, audio.sample_rate);
  const tts::BuiltinMelProvider provider(audio);
  const tts::FrameFeatures f = provider.from_waveform(a);
  const auto cb = tts::train_codebook(std::vector<tts::FrameFeatures>{f}, {.k = 6, .seed = 3}).codebook;
  const auto expected = tts::tokenize_waveform(a, cb, provider);
  CHECK(expected == tts::merge_runs(tts::quantize(f, cb)));
  CHECK(tts::token_roundtrip_accuracy(a, expected, cb, provider) == 1.0);
  CHECK_THROWS_AS(tts::token_roundtrip_accuracy(tts::Waveform(), expected, cb, provider), tts::Error);
}

TEST_CASE("evaluate_manifest records per-entry errors and averages metrics") {
  TempDir dir("eval");
  const auto audio = micro_audio();
  tts::SyntheticCorpusOptions opts;
  opts.sample_rate = audio.sample_rate;
  const auto manifest = tts::generate_synthetic_corpus(4, 3, 1, dir / "c", opts);
  auto entries = tts::load_manifest(manifest);
  tts::ManifestEntry missing = entries.front();
  missing.id = "missing";
  missing.audio_path = "nowhere.wav";
  entries.push_back(missing);
  tts::ManifestEntry unlabeled = entries.front();
  unlabeled.id = "unlabeled";
  unlabeled.text.reset();
  entries.push_back(unlabeled);
  tts::write_manifest(manifest, entries);

  const tts::BuiltinMelProvider provider(audio);
  std::vector<tts::FrameFeatures> corpus;
  for (const auto& e : entries) {
    if (e.id != "missing") corpus.push_back(provider.provide(e, manifest));
  }
  const auto cb = tts::train_codebook(corpus, {.k = 8, .seed = 1}).codebook;
  tts::save_codebook(dir / "cb.txt", cb);
  std::ofstream(tts::feature_sidecar_path(dir / "cb.txt")) << provider.to_json().dump();

  Model model(micro_model(true), PriorKind::kText, 5);
  tts::EvalOptions eo;
  eo.codebook = dir / "cb.txt";
  eo.seed = 9;
  const auto report = tts::evaluate_manifest(model, manifest, eo);
  REQUIRE(report.utterances.size() == 4);
  CHECK_MESSAGE(report.errors == 1, report.to_json().dump());
  CHECK(report.utterances.back().id == "missing");
  CHECK(report.utterances.back().error.has_value());
  CHECK_FALSE(report.utterances.back().mel_l1.has_value());
  for (const char* key : {"mel_l1", "token_rtrip_acc", "secs_internal"}) {
    double sum = 0.0;
    int n = 0;
    for (const auto& u : report.utterances) {
      const auto& v = std::string(key) == "mel_l1" ? u.mel_l1
                      : std::string(key) == "token_rtrip_acc" ? u.token_rtrip_acc
                                                               : u.secs_internal;
      if (v) {
        sum += *v;
        ++n;
      }
    }
    CHECK(n == 3);
    CHECK(report.aggregate.at(key) == doctest::Approx(sum / n).epsilon(1e-14));
  }
  const auto again = tts::evaluate_manifest(model, manifest, eo);
  CHECK(again.to_json() == report.to_json());
  CHECK(report.to_json()["errors"] == 1);

  Model pseudo(micro_model(), PriorKind::kPseudo, 5);
  CHECK_THROWS_AS(tts::evaluate_manifest(pseudo, manifest, eo), tts::Error);
}
