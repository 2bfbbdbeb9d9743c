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

// Flow-prior conditional VAE: posterior encoder, affine-coupling flow,
// waveform decoder, text / pseudo-text prior encoders, duration predictor
// and reference (speaker) encoder.

#pragma once

#include <atomic>
#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "tts/align.hpp"
#include "tts/features.hpp"
#include "tts/gaussian.hpp"

namespace tts {

using ParameterSet = std::map<std::string, ad::Parameter>;

struct ModelConfig {
  AudioConfig audio;
  int latent_channels = 32;
  int hidden_channels = 64;
  int flow_hidden = 64;
  int flow_blocks = 4;
  int flow_kernel = 3;
  int kernel_size = 3;
  int text_vocab = 33;
  int pseudo_vocab = 128;
  bool multi_speaker = false;
  int speaker_dim = 16;
  // Uniform init range of each coupling block's output layer; 0 starts the
  // flow at the identity.
  double flow_init_scale = 0.0;

  void validate() const;
  friend bool operator==(const ModelConfig&, const ModelConfig&) = default;
};

void to_json(nlohmann::json& j, const ModelConfig& c);
void from_json(const nlohmann::json& j, ModelConfig& c);

/// Which token stream feeds the prior: pseudo phonemes (pre-training) or
/// phonemes (fine-tuning, baseline, inference).
enum class PriorKind { kPseudo, kText };

std::string to_string(PriorKind kind);
PriorKind prior_kind_from_string(const std::string& s);

/// Resolves parameter names to graph leaves. Names outside `trainable`, or
/// every name when gradients are disabled, become constants.
class ParamBinder {
 public:
  /// All parameters trainable.
  explicit ParamBinder(ParameterSet& params);
  ParamBinder(ParameterSet& params, const std::set<std::string>& trainable);
  /// Inference: no gradients anywhere.
  static ParamBinder inference(ParameterSet& params);

  ad::Var operator()(const std::string& name);

 private:
  ParamBinder(ParameterSet& params, const std::set<std::string>* trainable, bool grad);

  ParameterSet* params_;
  const std::set<std::string>* trainable_;
  bool grad_;
  std::map<std::string, ad::Var> bound_;
};

struct PosteriorOutput {
  ad::Var z;  // [T x C]
  GaussianStats stats;
};

struct FlowLatent {
  ad::Var values;       // [T x C]
  ad::Var frame_logdet; // [T x 1], log-scales summed per frame
  ad::Var logdet;       // [1 x 1]
};

struct EncoderOutput {
  ad::Var hidden;  // [N x H]
  GaussianStats prior;
};

struct SynthesisOptions {
  double noise_scale = 0.667;
  double length_scale = 1.0;
  std::optional<Mat> reference_mel;
  std::uint64_t seed = 0;
};

struct SynthesisResult {
  Waveform waveform;
  std::vector<int> durations;
  Mat log_durations;  // [N x 1]
};

class Model {
 public:
  Model(ModelConfig config, PriorKind kind, std::uint64_t seed);
  /// Builds an uninitialised model whose parameters are filled in by the caller.
  Model(ModelConfig config, PriorKind kind, ParameterSet params);
  Model(const Model& other);
  Model(Model&& other) noexcept;
  Model& operator=(const Model&) = delete;

  const ModelConfig& config() const { return config_; }
  PriorKind prior_kind() const { return kind_; }
  ParameterSet& parameters() { return params_; }
  const ParameterSet& parameters() const { return params_; }
  std::vector<std::string> parameter_names() const;

  /// z = mean + std * eps, with eps supplied by the caller ([T x C]).
  PosteriorOutput posterior_encode(ParamBinder& p, const Mat& linear_spec, const Mat& eps) const;
  FlowLatent flow_forward(ParamBinder& p, const ad::Var& z, const std::optional<ad::Var>& speaker) const;
  FlowLatent flow_inverse(ParamBinder& p, const ad::Var& z_p, const std::optional<ad::Var>& speaker) const;
  EncoderOutput text_encode(ParamBinder& p, std::span<const int> phonemes) const;
  EncoderOutput pseudo_text_encode(ParamBinder& p, std::span<const int> pseudo_tokens) const;
  /// Dispatches to the encoder matching prior_kind().
  EncoderOutput encode_prior(ParamBinder& p, std::span<const int> tokens) const;
  ad::Var decode(ParamBinder& p, const ad::Var& z) const;
  /// Log-durations [N x 1]. Reads only `hidden`; there is no speaker input.
  ad::Var predict_durations(ParamBinder& p, const ad::Var& hidden) const;
  ad::Var reference_encode(ParamBinder& p, const Mat& mel) const;

  SynthesisResult synthesize(std::span<const int> phonemes, const SynthesisOptions& options);

  std::size_t decoder_evaluations() const { return decoder_evals_.load(); }
  void reset_decoder_evaluations() { decoder_evals_ = 0; }

 private:
  void init_parameters(std::uint64_t seed);
  ad::Var conv(ParamBinder& p, const std::string& name, const ad::Var& x, int kernel,
               ad::Padding padding = ad::Padding::kZero) const;
  ad::Var linear(ParamBinder& p, const std::string& name, const ad::Var& x) const;
  GaussianStats split_stats(const ad::Var& proj) const;
  void coupling(ParamBinder& p, int block, const ad::Var& x0, const std::optional<ad::Var>& speaker,
                ad::Var& shift, ad::Var& log_scale) const;

  ModelConfig config_;
  PriorKind kind_;
  ParameterSet params_;
  mutable std::atomic<std::size_t> decoder_evals_{0};
};

/// Parameter-name prefix (component) of a parameter name.
std::string component_of(const std::string& name);

/// eps ~ N(0, 1), [rows x cols], from a seeded generator.
Mat standard_normal(Eigen::Index rows, Eigen::Index cols, std::uint64_t seed);

std::uint64_t mix_seed(std::uint64_t a, std::uint64_t b);

}  // namespace tts
