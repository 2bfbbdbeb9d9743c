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
#include <numbers>

#include "test_util.hpp"
#include "tts/data.hpp"
#include "tts/error.hpp"
#include "tts/features.hpp"
#include "tts/wav.hpp"

using tts::testing::micro_audio;
using tts::testing::TempDir;

namespace {

tts::Waveform sine(int n, double freq, int sr) {
  tts::Waveform w(n);
  for (int i = 0; i < n; ++i) w(i) = 0.5 * std::sin(2.0 * std::numbers::pi * freq * i / sr);
  return w;
}

// Direct single-frame DFT magnitude with a periodic Hann window, centre padded.
double direct_bin(const tts::Waveform& w, int frame, int bin, const tts::AudioConfig& c) {
  double re = 0.0, im = 0.0;
  const int len = static_cast<int>(w.size());
  for (int i = 0; i < c.n_fft; ++i) {
    int src = frame * c.hop_length + i - c.n_fft / 2;
    if (src < 0) src = -src;
    if (src >= len) src = 2 * (len - 1) - src;
    const double win = 0.5 - 0.5 * std::cos(2.0 * std::numbers::pi * i / c.n_fft);
    re += win * w(src) * std::cos(2.0 * std::numbers::pi * bin * i / c.n_fft);
    im -= win * w(src) * std::sin(2.0 * std::numbers::pi * bin * i / c.n_fft);
  }
  return std::hypot(re, im);
}

}  // namespace

TEST_CASE("zero waveform gives zero magnitudes and floored mel") {
  const auto c = micro_audio();
  const auto spec = tts::compute_linear_spectrogram(tts::Waveform::Zero(1000), c);
  CHECK(spec.values.rows() == tts::frame_count(1000, c));
  CHECK(spec.values.cols() == c.n_bins());
  CHECK(spec.values.cwiseAbs().maxCoeff() == 0.0);
  const auto mel = tts::compute_mel(spec, c);
  CHECK((mel.values.array() == std::log(c.log_floor)).all());
}

TEST_CASE("bin-centred sine peaks at its bin") {
  const auto c = micro_audio();
  const int bin = 11;
  const double freq = static_cast<double>(bin) * c.sample_rate / c.n_fft;
  const auto spec = tts::compute_linear_spectrogram(sine(2000, freq, c.sample_rate), c);
  for (Eigen::Index t = 4; t < spec.values.rows() - 4; ++t) {
    Eigen::Index arg;
    spec.values.row(t).maxCoeff(&arg);
    CHECK(arg == bin);
  }
}

TEST_CASE("STFT matches a direct DFT oracle") {
  const auto c = micro_audio();
  const tts::Waveform w = tts::testing::random_matrix(777, 1, 4).col(0);
  const auto spec = tts::compute_linear_spectrogram(w, c);
  for (int t : {0, 3, static_cast<int>(spec.values.rows()) - 1}) {
    for (int k : {0, 1, 17, c.n_fft / 2}) CHECK(spec.values(t, k) == doctest::Approx(direct_bin(w, t, k, c)).epsilon(1e-9));
  }
}

TEST_CASE("frame count formula holds for many lengths") {
  auto c = micro_audio();
  std::mt19937 rng(3);
  std::uniform_int_distribution<int> len(c.win_length, 5000);
  for (int i = 0; i < 100; ++i) {
    const int n = len(rng);
    CHECK(tts::frame_count(n, c) == n / c.hop_length + 1);
    CHECK(tts::compute_linear_spectrogram(tts::Waveform::Zero(n), c).values.rows() == tts::frame_count(n, c));
  }
  CHECK_THROWS_AS(tts::compute_linear_spectrogram(tts::Waveform::Zero(c.win_length - 1), c), tts::Error);
}

TEST_CASE("spectrogram is deterministic") {
  const auto c = micro_audio();
  const tts::Waveform w = tts::render_synthetic("abc", 0, c.sample_rate);
  CHECK(tts::compute_mel(w, c).values == tts::compute_mel(w, c).values);
}

TEST_CASE("doubling magnitudes shifts mel by log 2") {
  const auto c = micro_audio();
  const auto spec = tts::compute_linear_spectrogram(tts::render_synthetic("ab", 1, c.sample_rate), c);
  tts::LinearSpectrogram doubled = spec;
  doubled.values *= 2.0;
  const auto a = tts::compute_mel(spec, c).values;
  const auto b = tts::compute_mel(doubled, c).values;
  const double floor = std::log(c.log_floor);
  int checked = 0;
  for (Eigen::Index i = 0; i < a.size(); ++i) {
    if (a.data()[i] > floor + 1.0) {
      CHECK(b.data()[i] - a.data()[i] == doctest::Approx(std::log(2.0)).epsilon(1e-12));
      ++checked;
    }
  }
  CHECK(checked > 100);
}

TEST_CASE("every mel filter has positive mass") {
  for (auto c : {micro_audio(), tts::AudioConfig{}}) {
    const tts::Mat fb = tts::mel_filterbank(c);
    CHECK(fb.rows() == c.n_bins());
    CHECK(fb.cols() == c.n_mels);
    CHECK((fb.colwise().sum().array() > 0.0).all());
    CHECK((fb.array() >= 0.0).all());
  }
}

TEST_CASE("audio config validation and json") {
  tts::AudioConfig c;
  c.n_mels = 0;
  CHECK_THROWS_AS(c.validate(), std::invalid_argument);
  c = micro_audio();
  c.win_length = c.n_fft * 2;
  CHECK_THROWS_AS(c.validate(), std::invalid_argument);
  nlohmann::json j = micro_audio();
  CHECK(j.get<tts::AudioConfig>() == micro_audio());
  j["bogus"] = 1;
  CHECK_THROWS(j.get<tts::AudioConfig>());
}

TEST_CASE("builtin provider normalises zero audio to constant rows") {
  const auto c = micro_audio();
  tts::BuiltinMelProvider raw(c);
  const auto zero = raw.from_waveform(tts::Waveform::Zero(900));
  const auto voiced = raw.from_waveform(tts::render_synthetic("abc", 0, c.sample_rate));
  tts::BuiltinMelProvider norm(c, tts::fit_normalization({zero, voiced}));
  const auto f = norm.from_waveform(tts::Waveform::Zero(900));
  CHECK(f.provider_id == "builtin-mel");
  CHECK(f.frame_rate_hz == doctest::Approx(c.frame_rate()));
  for (Eigen::Index t = 1; t < f.values.rows(); ++t) CHECK(f.values.row(t) == f.values.row(0));
  const auto restored = tts::BuiltinMelProvider::from_json(norm.to_json());
  CHECK(restored.from_waveform(tts::Waveform::Zero(900)).values == f.values);
}

TEST_CASE("fit_normalization standardises the corpus") {
  tts::FrameFeatures a{tts::testing::random_matrix(50, 3, 1, 2.0), "x", 1.0};
  tts::FrameFeatures b{tts::testing::random_matrix(30, 3, 2, 2.0).array() + 5.0, "x", 1.0};
  const auto n = tts::fit_normalization({a, b});
  tts::Mat all(80, 3);
  all << a.values, b.values;
  const tts::Mat z = (all.rowwise() - n.mean).array().rowwise() / n.stddev.array();
  CHECK(z.colwise().mean().cwiseAbs().maxCoeff() < 1e-12);
  const Eigen::RowVectorXd var = z.array().square().colwise().mean();
  CHECK((var.array() - 1.0).abs().maxCoeff() < 1e-12);
}

TEST_CASE("precomputed provider reads FTFX files and rejects dimension mismatches") {
  TempDir dir("ftfx");
  tts::write_ftfx(dir / "a.ftfx", {tts::testing::random_matrix(7, 16, 1), "x", 50.0});
  tts::write_ftfx(dir / "b.ftfx", {tts::testing::random_matrix(5, 8, 2), "x", 50.0});
  tts::PrecomputedProvider p(dir.path());
  const tts::ManifestEntry a{"a", "a.wav", std::nullopt, "s", 1.0};
  const tts::ManifestEntry b{"b", "b.wav", std::nullopt, "s", 1.0};
  const tts::ManifestEntry missing{"zz", "zz.wav", std::nullopt, "s", 1.0};
  const auto f = p.provide(a, dir / "m.jsonl");
  CHECK(f.values.rows() == 7);
  CHECK(f.values.cols() == 16);
  CHECK(f.frame_rate_hz == 50.0);
  CHECK(f.provider_id == "precomputed");
  CHECK_THROWS_WITH_AS(tts::provide_corpus(p, dir / "m.jsonl", {a, b}), doctest::Contains("dimension mismatch"),
                       tts::Error);
  CHECK_THROWS_AS(p.provide(missing, dir / "m.jsonl"), tts::Error);
}

TEST_CASE("WAV write/read round trip") {
  TempDir dir("wav");
  tts::Waveform w(5);
  w << 0.0, 0.5, -0.5, 1.5, -1.0;
  tts::write_wav(dir / "x.wav", w, 8000);
  const auto a = tts::read_wav(dir / "x.wav");
  CHECK(a.sample_rate == 8000);
  REQUIRE(a.samples.size() == 5);
  CHECK(a.samples(1) == doctest::Approx(0.5).epsilon(1e-4));
  CHECK(a.samples(3) == doctest::Approx(1.0).epsilon(1e-4));  // clipped
  CHECK(a.samples(4) == doctest::Approx(-1.0).epsilon(1e-4));
}
