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

// Single-file model checkpoints.
//
// Layout (little-endian):
//   "TTSCKPT1"  u32 version  u32 header_len  header JSON
//   u32 param_count, then per parameter (sorted by name):
//   u32 name_len  name  u32 rows  u32 cols  rows*cols f32 (row-major)

#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>

#include "tts/model.hpp"

namespace tts {

inline constexpr std::uint32_t kCheckpointVersion = 1;

struct Checkpoint {
  ModelConfig config;
  PriorKind prior_kind = PriorKind::kPseudo;
  std::string stage;          // "pretrain", "finetune" or "baseline"
  std::string codebook_hash;  // empty when no codebook was involved
  std::uint64_t seed = 0;
  std::uint64_t iteration = 0;
  std::map<std::string, Mat> parameters;

  Model to_model() const;
};

Checkpoint make_checkpoint(const Model& model, std::string stage, std::string codebook_hash,
                           std::uint64_t seed, std::uint64_t iteration);

std::string serialize_checkpoint(const Checkpoint& ckpt);
Checkpoint parse_checkpoint(const std::string& bytes);

/// Writes to a temporary file in the same directory, then renames.
void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::filesystem::path& path);

/// Warning text when resuming pre-training with a different codebook.
std::optional<std::string> codebook_mismatch_warning(const Checkpoint& ckpt, const std::string& codebook_hash);

}  // namespace tts
