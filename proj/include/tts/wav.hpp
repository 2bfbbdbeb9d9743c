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

// Mono PCM WAV reading and writing.

#pragma once

#include <Eigen/Dense>

#include <filesystem>

namespace tts {

using Waveform = Eigen::VectorXd;

struct Audio {
  int sample_rate = 0;
  Waveform samples;
};

/// Reads 16-bit PCM or 32-bit float mono WAV. Samples are scaled to [-1, 1].
Audio read_wav(const std::filesystem::path& path);

/// Writes 16-bit PCM mono; samples are clipped to [-1, 1].
void write_wav(const std::filesystem::path& path, const Waveform& samples, int sample_rate);

}  // namespace tts
