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

// Pre-training and fine-tuning: parameter partitioning, per-step updates,
// the training loop and run-directory outputs.

#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "tts/checkpoint.hpp"
#include "tts/data.hpp"
#include "tts/losses.hpp"
#include "tts/model.hpp"
#include "tts/pseudo.hpp"

namespace tts {

enum class Stage { kPretrain, kFinetune };

std::string to_string(Stage stage);
Stage stage_from_string(const std::string& s);

struct ParameterPartition {
  std::set<std::string> frozen;
  std::set<std::string> finetuned;
  std::set<std::string> scratch;

  std::set<std::string> trainable() const;
};

/// Pre-training (and from-scratch baselines) train every parameter. Fine-tuning
/// freezes the posterior encoder, decoder and reference encoder, adapts the
/// flow, and learns the text encoder and duration predictor from scratch.
ParameterPartition partition_parameters(const ParameterSet& params, const ModelConfig& config,
                                        Stage stage, bool from_scratch = false);

struct LossWeights {
  double kl = 1.0;
  double duration = 1.0;
  double mel = 5.0;
  double adversarial = 1.0;
};

struct TrainConfig {
  Stage stage = Stage::kPretrain;
  bool from_scratch = false;  // fine-tune stage only: train a text model without pre-training
  int iterations = 1000;
  int batch_size = 4;
  double learning_rate = 2e-4;
  double beta1 = 0.8;
  double beta2 = 0.99;
  double adam_eps = 1e-9;
  double weight_decay = 0.01;
  double grad_clip = 0.0;  // global-norm clip; 0 disables
  std::uint64_t seed = 0;
  LossWeights weights;
  bool adversarial = false;
  int log_interval = 10;
  int checkpoint_interval = 0;  // 0: final checkpoint only
  bool log_wall_time = false;

  void validate() const;
  /// The objective includes the decoder (reconstruction) term.
  bool uses_decoder() const { return stage == Stage::kPretrain || from_scratch; }
};

void to_json(nlohmann::json& j, const TrainConfig& c);
void from_json(const nlohmann::json& j, TrainConfig& c);

struct TrainingExample {
  std::string id;
  std::string speaker_id;
  Mat linear_spec;  // posterior input
  Mat mel;          // reconstruction target / reference-encoder input
  std::vector<int> tokens;
};

TrainingExample make_example(std::string id, const Waveform& wave, std::vector<int> tokens,
                             const AudioConfig& audio, std::string speaker_id = {});

using Metrics = std::map<std::string, double>;

/// Decoupled-weight-decay Adam.
class AdamW {
 public:
  explicit AdamW(const TrainConfig& config);
  void step(ParameterSet& params, const std::set<std::string>& trainable);
  double learning_rate() const { return lr_; }
  std::uint64_t steps() const { return t_; }

 private:
  double lr_, beta1_, beta2_, eps_, weight_decay_, clip_;
  std::uint64_t t_ = 0;
  std::map<std::string, std::pair<Mat, Mat>> moments_;
};

/// Small LSGAN discriminator on log-mel frames, used only with
/// TrainConfig::adversarial.
class ToyDiscriminator {
 public:
  ToyDiscriminator(int n_mels, std::uint64_t seed, const TrainConfig& config);
  ad::Var score(ParamBinder& p, const ad::Var& mel) const;
  ParameterSet& parameters() { return params_; }
  AdamW& optimizer() { return opt_; }

 private:
  ParameterSet params_;
  AdamW opt_;
};

struct ObjectiveOptions {
  bool reconstruction = true;
  // The duration loss does not update the prior encoder. Switching this off
  // changes gradients only; loss values are identical.
  bool detach_duration_input = true;
  LossWeights weights;
  ToyDiscriminator* discriminator = nullptr;  // adds the generator adversarial term
};

struct BatchObjective {
  ad::Var total;
  double kld = 0.0;
  double duration = 0.0;
  std::optional<double> reconstruction;
  std::optional<double> adversarial;
  std::vector<Alignment> alignments;
  std::vector<ad::Var> generated_mels;
};

/// Frame-weighted batch objective, equal to a padded batch with masked
/// frames excluded. `seed` drives the reparameterisation noise per example.
BatchObjective compute_objective(const Model& model, ParamBinder& p,
                                 std::span<const TrainingExample* const> batch,
                                 const ObjectiveOptions& options, std::uint64_t seed);

/// Full objective (pre-training or from-scratch baseline); one update.
Metrics pretrain_step(Model& model, AdamW& optimizer, std::span<const TrainingExample* const> batch,
                      const TrainConfig& config, std::uint64_t seed,
                      ToyDiscriminator* discriminator = nullptr);

/// KLD + duration only; the decoder is never evaluated. Throws if any
/// gradient reaches a frozen parameter.
Metrics finetune_step(Model& model, AdamW& optimizer, const ParameterPartition& partition,
                      std::span<const TrainingExample* const> batch, const TrainConfig& config,
                      std::uint64_t seed);

/// KLD + duration of `examples` without updating anything.
Metrics validation_losses(Model& model, std::span<const TrainingExample> examples, std::uint64_t seed);

/// New text-prior model: posterior, decoder, flow and reference encoder are
/// copied from a pre-trained checkpoint; the text encoder and duration
/// predictor are freshly initialised from `seed`.
Model init_finetune_from_pretrained(const Checkpoint& ckpt, int text_vocab, std::uint64_t seed);

struct LoopCallbacks {
  std::function<void(int iteration, const Metrics&)> on_log;
  std::function<void(int iteration, const Model&)> on_checkpoint;
};

/// Seeded shuffled mini-batches for `config.iterations` steps.
std::vector<Metrics> train_loop(Model& model, std::span<const TrainingExample> examples,
                                const TrainConfig& config, const LoopCallbacks& callbacks = {});

struct RunInputs {
  std::filesystem::path manifest;
  std::optional<std::filesystem::path> codebook;      // pre-training
  std::optional<std::filesystem::path> features_dir;  // precomputed-provider codebooks
  std::optional<std::filesystem::path> tokens;        // optional token dump for pre-training
  std::optional<std::filesystem::path> init_checkpoint;
  std::optional<std::filesystem::path> lexicon;
  ModelConfig model;
};

struct RunResult {
  std::filesystem::path checkpoint;
  std::filesystem::path metrics_log;
  std::vector<Metrics> logged;
  std::vector<std::string> warnings;
};

/// Feature sidecar written next to a codebook (provider settings and
/// normalisation statistics).
std::filesystem::path feature_sidecar_path(const std::filesystem::path& codebook_path);

/// Pseudo-phoneme tokens for every entry, using the codebook's provider.
std::vector<TokenRecord> tokenize_corpus(const std::filesystem::path& manifest_path,
                                         const std::vector<ManifestEntry>& entries,
                                         const std::filesystem::path& codebook_path,
                                         const std::optional<std::filesystem::path>& features_dir = {});

/// End-to-end stage run: writes `<out_dir>/metrics.jsonl`, periodic
/// `ckpt_<iter>.ckpt` files and `<out_dir>/final.ckpt`.
RunResult run_training(const RunInputs& inputs, const TrainConfig& config,
                       const std::filesystem::path& out_dir);

std::string metrics_json_line(int iteration, const Metrics& metrics, double lr,
                              std::optional<double> wall_ms);

}  // namespace tts
