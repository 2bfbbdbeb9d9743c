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

// Shared fixtures for the unit tests.

#pragma once

#include <atomic>
#include <cstdlib>
#include <filesystem>
#include <random>
#include <unistd.h>
#include <string>

#include "tts/model.hpp"

namespace tts::testing {

/// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    static std::atomic<int> counter{0};
    path_ = std::filesystem::temp_directory_path() /
            ("tts_test_" + tag + "_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

 private:
  std::filesystem::path path_;
};

inline AudioConfig micro_audio() {
  AudioConfig a;
  a.sample_rate = 8000;
  a.n_fft = 128;
  a.hop_length = 32;
  a.win_length = 128;
  a.n_mels = 16;
  return a;
}

inline ModelConfig micro_model(bool multi_speaker = false) {
  ModelConfig c;
  c.audio = micro_audio();
  c.latent_channels = 4;
  c.hidden_channels = 8;
  c.flow_hidden = 8;
  c.flow_blocks = 2;
  c.text_vocab = 33;
  c.pseudo_vocab = 16;
  c.multi_speaker = multi_speaker;
  c.speaker_dim = 4;
  return c;
}

inline Mat random_matrix(Eigen::Index rows, Eigen::Index cols, std::uint64_t seed, double scale = 1.0) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> dist(0.0, scale);
  Mat m(rows, cols);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = dist(rng);
  return m;
}

/// Sets every parameter to small random values so no layer is an identity.
inline void jitter(Model& model, std::uint64_t seed, double scale = 0.3) {
  std::uint64_t s = seed;
  for (auto& [_, p] : model.parameters()) {
    p.value = random_matrix(p.value.rows(), p.value.cols(), s++, scale);
  }
}

}  // namespace tts::testing
