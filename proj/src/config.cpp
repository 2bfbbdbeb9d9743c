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

#include "tts/config.hpp"

#include <fstream>
#include <stdexcept>

#include "tts/error.hpp"

namespace tts {

using nlohmann::json;

json RunConfigFile::to_json() const {
  json feat{{"provider", feature.provider}, {"normalize", feature.normalize}};
  if (feature.features_dir) feat["features_dir"] = feature.features_dir->string();
  return json{{"model", model},
              {"train", train},
              {"feature", feat},
              {"codebook",
               {{"k", codebook.k}, {"seed", codebook.seed}, {"max_iters", codebook.max_iters}, {"tol", codebook.tol}}}};
}

RunConfigFile RunConfigFile::from_json(const json& j) {
  if (!j.is_object()) throw std::invalid_argument("config: top level must be a JSON object");
  RunConfigFile c;
  for (const auto& [key, value] : j.items()) {
    if (key == "model") {
      c.model = value.get<ModelConfig>();
    } else if (key == "train") {
      c.train = value.get<TrainConfig>();
    } else if (key == "feature") {
      if (!value.is_object()) throw std::invalid_argument("config: `feature` must be an object");
      for (const auto& [fk, fv] : value.items()) {
        if (fk == "provider") c.feature.provider = fv.get<std::string>();
        else if (fk == "normalize") c.feature.normalize = fv.get<bool>();
        else if (fk == "features_dir") c.feature.features_dir = fv.get<std::string>();
        else throw std::invalid_argument("unknown key `feature." + fk + "`");
      }
      if (c.feature.provider != "builtin-mel" && c.feature.provider != "precomputed") {
        throw std::invalid_argument("feature.provider must be builtin-mel or precomputed");
      }
    } else if (key == "codebook") {
      if (!value.is_object()) throw std::invalid_argument("config: `codebook` must be an object");
      for (const auto& [ck, cv] : value.items()) {
        if (ck == "k") c.codebook.k = cv.get<int>();
        else if (ck == "seed") c.codebook.seed = cv.get<std::uint64_t>();
        else if (ck == "max_iters") c.codebook.max_iters = cv.get<int>();
        else if (ck == "tol") c.codebook.tol = cv.get<double>();
        else throw std::invalid_argument("unknown key `codebook." + ck + "`");
      }
    } else {
      throw std::invalid_argument("unknown config section `" + key + "`");
    }
  }
  return c;
}

RunConfigFile RunConfigFile::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open config `" + path.string() + "`");
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw Error("config `" + path.string() + "`: " + e.what());
  }
  try {
    return from_json(j);
  } catch (const json::exception& e) {
    throw std::invalid_argument("config `" + path.string() + "`: " + e.what());
  }
}

void write_config_echo(const std::filesystem::path& path, const json& config) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw Error("cannot write `" + path.string() + "`");
  out << config.dump(2) << '\n';
}

}  // namespace tts
