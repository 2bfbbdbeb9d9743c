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

#include "tts/checkpoint.hpp"

#include <cstring>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "tts/error.hpp"

namespace tts {
namespace {

constexpr char kMagic[8] = {'T', 'T', 'S', 'C', 'K', 'P', 'T', '1'};

void put_u32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

class Reader {
 public:
  explicit Reader(const std::string& bytes) : bytes_(bytes) {}

  std::uint32_t u32() {
    need(4);
    std::uint32_t v = 0;
    for (int i = 3; i >= 0; --i) v = (v << 8) | static_cast<unsigned char>(bytes_[pos_ + static_cast<std::size_t>(i)]);
    pos_ += 4;
    return v;
  }
  std::string str(std::size_t n) {
    need(n);
    std::string s = bytes_.substr(pos_, n);
    pos_ += n;
    return s;
  }
  float f32() {
    const std::uint32_t v = u32();
    float f;
    std::memcpy(&f, &v, 4);
    return f;
  }
  bool done() const { return pos_ == bytes_.size(); }

 private:
  void need(std::size_t n) const {
    if (pos_ + n > bytes_.size()) throw Error("checkpoint: truncated or corrupt file");
  }
  const std::string& bytes_;
  std::size_t pos_ = 0;
};

}  // namespace

Model Checkpoint::to_model() const {
  ParameterSet params;
  for (const auto& [name, value] : parameters) {
    ad::Parameter p;
    p.value = value;
    params.emplace(name, std::move(p));
  }
  // Reject checkpoints whose tensors do not match the architecture.
  Model reference(config, prior_kind, 0);
  for (const auto& [name, p] : reference.parameters()) {
    auto it = params.find(name);
    if (it == params.end()) throw Error("checkpoint: missing parameter `" + name + "`");
    if (it->second.value.rows() != p.value.rows() || it->second.value.cols() != p.value.cols()) {
      throw Error("checkpoint: parameter `" + name + "` has the wrong shape");
    }
  }
  if (params.size() != reference.parameters().size()) throw Error("checkpoint: unexpected extra parameters");
  return Model(config, prior_kind, std::move(params));
}

Checkpoint make_checkpoint(const Model& model, std::string stage, std::string codebook_hash,
                           std::uint64_t seed, std::uint64_t iteration) {
  Checkpoint c;
  c.config = model.config();
  c.prior_kind = model.prior_kind();
  c.stage = std::move(stage);
  c.codebook_hash = std::move(codebook_hash);
  c.seed = seed;
  c.iteration = iteration;
  for (const auto& [name, p] : model.parameters()) {
    // Stored as float32; keep the in-memory copy consistent with the file.
    c.parameters[name] = p.value.cast<float>().cast<double>();
  }
  return c;
}

std::string serialize_checkpoint(const Checkpoint& ckpt) {
  nlohmann::json header = {{"config", ckpt.config},
                           {"prior_encoder", to_string(ckpt.prior_kind)},
                           {"stage", ckpt.stage},
                           {"codebook_hash", ckpt.codebook_hash},
                           {"seed", ckpt.seed},
                           {"iteration", ckpt.iteration}};
  const std::string h = header.dump();
  std::string out(kMagic, sizeof kMagic);
  put_u32(out, kCheckpointVersion);
  put_u32(out, static_cast<std::uint32_t>(h.size()));
  out += h;
  put_u32(out, static_cast<std::uint32_t>(ckpt.parameters.size()));
  for (const auto& [name, m] : ckpt.parameters) {
    put_u32(out, static_cast<std::uint32_t>(name.size()));
    out += name;
    put_u32(out, static_cast<std::uint32_t>(m.rows()));
    put_u32(out, static_cast<std::uint32_t>(m.cols()));
    for (Eigen::Index r = 0; r < m.rows(); ++r) {
      for (Eigen::Index c = 0; c < m.cols(); ++c) {
        const float f = static_cast<float>(m(r, c));
        std::uint32_t v;
        std::memcpy(&v, &f, 4);
        put_u32(out, v);
      }
    }
  }
  return out;
}

Checkpoint parse_checkpoint(const std::string& bytes) {
  if (bytes.size() < sizeof kMagic || std::memcmp(bytes.data(), kMagic, sizeof kMagic) != 0) {
    throw Error("checkpoint: bad magic (not a TTSCKPT1 file)");
  }
  Reader r(bytes);
  r.str(sizeof kMagic);
  const std::uint32_t version = r.u32();
  if (version != kCheckpointVersion) {
    throw Error("checkpoint: version " + std::to_string(version) + " is not supported (expected " +
                std::to_string(kCheckpointVersion) + ")");
  }
  Checkpoint c;
  try {
    const auto header = nlohmann::json::parse(r.str(r.u32()));
    c.config = header.at("config").get<ModelConfig>();
    c.prior_kind = prior_kind_from_string(header.at("prior_encoder").get<std::string>());
    c.stage = header.at("stage").get<std::string>();
    c.codebook_hash = header.at("codebook_hash").get<std::string>();
    c.seed = header.at("seed").get<std::uint64_t>();
    c.iteration = header.at("iteration").get<std::uint64_t>();
  } catch (const nlohmann::json::exception& e) {
    throw Error(std::string("checkpoint: corrupt header (") + e.what() + ")");
  }
  const std::uint32_t count = r.u32();
  for (std::uint32_t i = 0; i < count; ++i) {
    std::string name = r.str(r.u32());
    const std::uint32_t rows = r.u32();
    const std::uint32_t cols = r.u32();
    Mat m(rows, cols);
    for (std::uint32_t a = 0; a < rows; ++a) {
      for (std::uint32_t b = 0; b < cols; ++b) m(a, b) = r.f32();
    }
    if (!m.allFinite()) throw Error("checkpoint: parameter `" + name + "` has non-finite values");
    c.parameters.emplace(std::move(name), std::move(m));
  }
  if (!r.done()) throw Error("checkpoint: trailing bytes after parameters");
  return c;
}

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt) {
  const std::string bytes = serialize_checkpoint(ckpt);
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error("cannot write checkpoint: " + tmp.string());
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw Error("failed writing checkpoint: " + tmp.string());
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) throw Error("cannot move checkpoint into place: " + ec.message());
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("checkpoint not found: " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_checkpoint(ss.str());
}

std::optional<std::string> codebook_mismatch_warning(const Checkpoint& ckpt, const std::string& codebook_hash) {
  if (ckpt.codebook_hash == codebook_hash) return std::nullopt;
  return "codebook hash " + codebook_hash + " differs from the checkpoint's " +
         (ckpt.codebook_hash.empty() ? std::string("(none)") : ckpt.codebook_hash) +
         "; pseudo-phoneme vocabularies may not match";
}

}  // namespace tts
