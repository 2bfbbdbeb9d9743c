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

// Declarative run configuration shared by the command-line tools.

#pragma once

#include <filesystem>
#include <optional>
#include <string>

#include <json.hpp>

#include "tts/model.hpp"
#include "tts/pseudo.hpp"
#include "tts/train.hpp"

namespace tts {

struct FeatureSettings {
  std::string provider = "builtin-mel";  // or "precomputed"
  bool normalize = true;                 // builtin-mel: standardise with corpus statistics
  std::optional<std::filesystem::path> features_dir;

  friend bool operator==(const FeatureSettings&, const FeatureSettings&) = default;
};

/// Sections: "model", "train", "feature", "codebook". Unknown keys are
/// rejected at every level.
struct RunConfigFile {
  ModelConfig model;
  TrainConfig train;
  FeatureSettings feature;
  KMeansOptions codebook;

  nlohmann::json to_json() const;
  static RunConfigFile from_json(const nlohmann::json& j);
  static RunConfigFile load(const std::filesystem::path& path);
};

void write_config_echo(const std::filesystem::path& path, const nlohmann::json& config);

}  // namespace tts
