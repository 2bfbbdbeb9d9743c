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

#include "tts/train.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <random>
#include <sstream>
#include <stdexcept>

#include "tts/error.hpp"

namespace tts {
namespace {

using nlohmann::json;

const std::set<std::string>& known_components() {
  static const std::set<std::string> kComponents = {
      "posterior", "flow", "decoder", "text_encoder", "pseudo_text_encoder", "duration_predictor",
      "reference_encoder"};
  return kComponents;
}

bool finite(double x) { return std::isfinite(x); }

std::set<std::string> all_names(const ParameterSet& params) {
  std::set<std::string> names;
  for (const auto& [name, _] : params) names.insert(name);
  return names;
}

void zero_grads(ParameterSet& params) {
  for (auto& [_, param] : params) param.zero_grad();
}

}  // namespace

std::string to_string(Stage stage) { return stage == Stage::kPretrain ? "pretrain" : "finetune"; }

Stage stage_from_string(const std::string& s) {
  if (s == "pretrain") return Stage::kPretrain;
  if (s == "finetune") return Stage::kFinetune;
  throw std::invalid_argument("unknown stage `" + s + "` (expected pretrain or finetune)");
}

std::set<std::string> ParameterPartition::trainable() const {
  std::set<std::string> out = finetuned;
  out.insert(scratch.begin(), scratch.end());
  return out;
}

ParameterPartition partition_parameters(const ParameterSet& params, const ModelConfig& config,
                                        Stage stage, bool from_scratch) {
  ParameterPartition part;
  for (const auto& [name, _] : params) {
    const std::string component = component_of(name);
    if (!known_components().contains(component)) throw Error("partition: unknown parameter `" + name + "`");
    if (stage == Stage::kPretrain || from_scratch) {
      part.scratch.insert(name);
      continue;
    }
    if (component == "pseudo_text_encoder") {
      throw Error("partition: fine-tuned model still contains `" + name + "`");
    }
    if (component == "posterior" || component == "decoder" || component == "reference_encoder") {
      part.frozen.insert(name);
    } else if (component == "flow") {
      part.finetuned.insert(name);
    } else {
      part.scratch.insert(name);
    }
  }
  if (stage == Stage::kFinetune && !from_scratch && config.multi_speaker) {
    bool has_ref = false;
    for (const auto& name : part.frozen) has_ref |= component_of(name) == "reference_encoder";
    if (!has_ref) throw Error("partition: multi-speaker model has no reference encoder");
  }
  return part;
}

void TrainConfig::validate() const {
  if (iterations < 1) throw std::invalid_argument("train: iterations must be >= 1");
  if (batch_size < 1) throw std::invalid_argument("train: batch_size must be >= 1");
  if (!(learning_rate > 0.0)) throw std::invalid_argument("train: learning_rate must be positive");
  if (beta1 < 0.0 || beta1 >= 1.0 || beta2 < 0.0 || beta2 >= 1.0) {
    throw std::invalid_argument("train: betas must lie in [0, 1)");
  }
  if (!(adam_eps > 0.0) || weight_decay < 0.0 || grad_clip < 0.0) {
    throw std::invalid_argument("train: adam_eps must be positive, weight_decay and grad_clip >= 0");
  }
  if (log_interval < 1) throw std::invalid_argument("train: log_interval must be >= 1");
  if (checkpoint_interval < 0) throw std::invalid_argument("train: checkpoint_interval must be >= 0");
  if (from_scratch && stage != Stage::kFinetune) {
    throw std::invalid_argument("train: from_scratch applies to the finetune stage only");
  }
  if (weights.kl < 0.0 || weights.duration < 0.0 || weights.mel < 0.0 || weights.adversarial < 0.0) {
    throw std::invalid_argument("train: loss weights must be >= 0");
  }
}

void to_json(json& j, const TrainConfig& c) {
  j = json{{"stage", to_string(c.stage)},
           {"from_scratch", c.from_scratch},
           {"iterations", c.iterations},
           {"batch_size", c.batch_size},
           {"learning_rate", c.learning_rate},
           {"beta1", c.beta1},
           {"beta2", c.beta2},
           {"adam_eps", c.adam_eps},
           {"weight_decay", c.weight_decay},
           {"grad_clip", c.grad_clip},
           {"seed", c.seed},
           {"weights",
            {{"kl", c.weights.kl},
             {"duration", c.weights.duration},
             {"mel", c.weights.mel},
             {"adversarial", c.weights.adversarial}}},
           {"adversarial", c.adversarial},
           {"log_interval", c.log_interval},
           {"checkpoint_interval", c.checkpoint_interval},
           {"log_wall_time", c.log_wall_time}};
}

void from_json(const json& j, TrainConfig& c) {
  if (!j.is_object()) throw std::invalid_argument("train config must be a JSON object");
  for (const auto& [key, value] : j.items()) {
    if (key == "stage") c.stage = stage_from_string(value.get<std::string>());
    else if (key == "from_scratch") c.from_scratch = value.get<bool>();
    else if (key == "iterations") c.iterations = value.get<int>();
    else if (key == "batch_size") c.batch_size = value.get<int>();
    else if (key == "learning_rate") c.learning_rate = value.get<double>();
    else if (key == "beta1") c.beta1 = value.get<double>();
    else if (key == "beta2") c.beta2 = value.get<double>();
    else if (key == "adam_eps") c.adam_eps = value.get<double>();
    else if (key == "weight_decay") c.weight_decay = value.get<double>();
    else if (key == "grad_clip") c.grad_clip = value.get<double>();
    else if (key == "seed") c.seed = value.get<std::uint64_t>();
    else if (key == "adversarial") c.adversarial = value.get<bool>();
    else if (key == "log_interval") c.log_interval = value.get<int>();
    else if (key == "checkpoint_interval") c.checkpoint_interval = value.get<int>();
    else if (key == "log_wall_time") c.log_wall_time = value.get<bool>();
    else if (key == "weights") {
      if (!value.is_object()) throw std::invalid_argument("train.weights must be an object");
      for (const auto& [wk, wv] : value.items()) {
        if (wk == "kl") c.weights.kl = wv.get<double>();
        else if (wk == "duration") c.weights.duration = wv.get<double>();
        else if (wk == "mel") c.weights.mel = wv.get<double>();
        else if (wk == "adversarial") c.weights.adversarial = wv.get<double>();
        else throw std::invalid_argument("unknown key `train.weights." + wk + "`");
      }
    } else {
      throw std::invalid_argument("unknown key `train." + key + "`");
    }
  }
}

TrainingExample make_example(std::string id, const Waveform& wave, std::vector<int> tokens,
                             const AudioConfig& audio, std::string speaker_id) {
  if (tokens.empty()) throw Error("example `" + id + "`: no tokens");
  TrainingExample ex;
  ex.id = std::move(id);
  ex.speaker_id = std::move(speaker_id);
  LinearSpectrogram spec = compute_linear_spectrogram(wave, audio);
  ex.mel = compute_mel(spec, audio).values;
  ex.linear_spec = std::move(spec.values);
  ex.tokens = std::move(tokens);
  if (static_cast<Eigen::Index>(ex.tokens.size()) > ex.linear_spec.rows()) {
    throw Error("example `" + ex.id + "`: " + std::to_string(ex.tokens.size()) + " tokens but only " +
                std::to_string(ex.linear_spec.rows()) + " frames");
  }
  return ex;
}

// ---------------------------------------------------------------------------
// Optimiser

AdamW::AdamW(const TrainConfig& config)
    : lr_(config.learning_rate),
      beta1_(config.beta1),
      beta2_(config.beta2),
      eps_(config.adam_eps),
      weight_decay_(config.weight_decay),
      clip_(config.grad_clip) {}

void AdamW::step(ParameterSet& params, const std::set<std::string>& trainable) {
  ++t_;
  double factor = 1.0;
  if (clip_ > 0.0) {
    double sq = 0.0;
    for (const auto& name : trainable) sq += params.at(name).grad.squaredNorm();
    const double norm = std::sqrt(sq);
    if (norm > clip_) factor = clip_ / norm;
  }
  const double bc1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
  const double bc2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
  for (const auto& name : trainable) {
    ad::Parameter& param = params.at(name);
    auto [it, inserted] = moments_.try_emplace(name);
    auto& [m, v] = it->second;
    if (inserted) {
      m = Mat::Zero(param.value.rows(), param.value.cols());
      v = Mat::Zero(param.value.rows(), param.value.cols());
    }
    const Mat g = param.grad * factor;
    m = beta1_ * m + (1.0 - beta1_) * g;
    v = beta2_ * v + (1.0 - beta2_) * g.cwiseProduct(g);
    param.value *= 1.0 - lr_ * weight_decay_;
    param.value.array() -= lr_ * (m.array() / bc1) / ((v.array() / bc2).sqrt() + eps_);
  }
}

// ---------------------------------------------------------------------------
// Discriminator

ToyDiscriminator::ToyDiscriminator(int n_mels, std::uint64_t seed, const TrainConfig& config)
    : opt_(config) {
  constexpr int kHidden = 32;
  std::mt19937_64 rng(mix_seed(seed, 0xd15c));
  auto uniform = [&](int rows, int cols, double bound) {
    std::uniform_real_distribution<double> dist(-bound, bound);
    Mat m(rows, cols);
    for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = dist(rng);
    return m;
  };
  auto add = [&](const std::string& name, int in, int out) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(in));
    params_[name + ".w"].value = uniform(in, out, bound);
    params_[name + ".w"].zero_grad();
    params_[name + ".b"].value = uniform(1, out, bound);
    params_[name + ".b"].zero_grad();
  };
  add("disc.l0", n_mels, kHidden);
  add("disc.l1", kHidden, 1);
}

ad::Var ToyDiscriminator::score(ParamBinder& p, const ad::Var& mel) const {
  ad::Var h = ad::relu(ad::add_row(ad::matmul(mel, p("disc.l0.w")), p("disc.l0.b")));
  return ad::add_row(ad::matmul(h, p("disc.l1.w")), p("disc.l1.b"));
}

// ---------------------------------------------------------------------------
// Objective

BatchObjective compute_objective(const Model& model, ParamBinder& p,
                                 std::span<const TrainingExample* const> batch,
                                 const ObjectiveOptions& options, std::uint64_t seed) {
  if (batch.empty()) throw std::invalid_argument("objective: empty batch");
  const ModelConfig& cfg = model.config();
  double total_frames = 0.0;
  double total_tokens = 0.0;
  for (const TrainingExample* ex : batch) {
    total_frames += static_cast<double>(ex->linear_spec.rows());
    total_tokens += static_cast<double>(ex->tokens.size());
  }

  BatchObjective out;
  ad::Var kld_sum, dur_sum, recon_sum, adv_sum;
  auto accumulate = [](ad::Var& acc, const ad::Var& term) { acc = acc.defined() ? ad::add(acc, term) : term; };

  for (std::size_t i = 0; i < batch.size(); ++i) {
    const TrainingExample& ex = *batch[i];
    const auto frames = ex.linear_spec.rows();
    const double frame_w = static_cast<double>(frames) / total_frames;
    const double token_w = static_cast<double>(ex.tokens.size()) / total_tokens;

    const Mat eps = standard_normal(frames, cfg.latent_channels, mix_seed(seed, i));
    PosteriorOutput post = model.posterior_encode(p, ex.linear_spec, eps);
    std::optional<ad::Var> speaker;
    if (cfg.multi_speaker) speaker = model.reference_encode(p, ex.mel);
    FlowLatent z_p = model.flow_forward(p, post.z, speaker);
    EncoderOutput enc = model.encode_prior(p, ex.tokens);

    // Alignment is searched on values only; no gradient flows through it.
    Alignment align = mas(likelihood_grid(enc.prior.mean.value(), enc.prior.std_values(), z_p.values.value()));
    std::vector<int> durations = alignment_to_durations(align, static_cast<int>(ex.tokens.size()));
    GaussianStats frame_prior = expand_prior(enc.prior, durations);

    ad::Var kld = kld_prior_loss(post.stats, post.z, z_p, frame_prior);
    ad::Var logdur = model.predict_durations(
        p, options.detach_duration_input ? ad::constant(enc.hidden.value()) : enc.hidden);
    ad::Var dur = duration_loss(logdur, durations);
    accumulate(kld_sum, ad::scale(kld, frame_w));
    accumulate(dur_sum, ad::scale(dur, token_w));

    if (options.reconstruction) {
      ad::Var gen = model.decode(p, post.z);
      accumulate(recon_sum, ad::scale(reconstruction_loss(gen, ex.mel, cfg.audio), frame_w));
      if (options.discriminator) {
        const auto frontend = SpectralFrontend::get(cfg.audio);
        ad::Var gen_mel = frontend->log_mel(frontend->magnitude(gen));
        out.generated_mels.push_back(ad::constant(gen_mel.value()));
        ParamBinder dp = ParamBinder::inference(options.discriminator->parameters());
        ad::Var s = options.discriminator->score(dp, gen_mel);
        accumulate(adv_sum, ad::scale(ad::mean(ad::square(ad::add_scalar(s, -1.0))), frame_w));
      }
    }
    out.alignments.push_back(std::move(align));
  }

  out.kld = kld_sum.scalar();
  out.duration = dur_sum.scalar();
  ad::Var total = ad::add(ad::scale(kld_sum, options.weights.kl), ad::scale(dur_sum, options.weights.duration));
  if (recon_sum.defined()) {
    out.reconstruction = recon_sum.scalar();
    total = ad::add(total, ad::scale(recon_sum, options.weights.mel));
  }
  if (adv_sum.defined()) {
    out.adversarial = adv_sum.scalar();
    total = ad::add(total, ad::scale(adv_sum, options.weights.adversarial));
  }
  out.total = total;
  return out;
}

namespace {

std::string batch_ids(std::span<const TrainingExample* const> batch) {
  std::string ids;
  for (const TrainingExample* ex : batch) ids += (ids.empty() ? "" : ",") + ex->id;
  return ids;
}

Metrics objective_metrics(const BatchObjective& obj, std::span<const TrainingExample* const> batch,
                          double lr) {
  Metrics m{{"loss_total", obj.total.scalar()}, {"loss_kld", obj.kld}, {"loss_dur", obj.duration}, {"lr", lr}};
  if (obj.reconstruction) m["loss_recon"] = *obj.reconstruction;
  if (obj.adversarial) m["loss_adv"] = *obj.adversarial;
  for (const auto& [key, value] : m) {
    if (!finite(value)) {
      std::ostringstream msg;
      msg << "non-finite loss on batch [" << batch_ids(batch) << "]:";
      for (const auto& [k, v] : m) msg << ' ' << k << '=' << v;
      throw Error(msg.str());
    }
  }
  return m;
}

double update_discriminator(ToyDiscriminator& disc, std::span<const TrainingExample* const> batch,
                            const std::vector<ad::Var>& fakes) {
  zero_grads(disc.parameters());
  ParamBinder dp(disc.parameters());
  ad::Var loss;
  const double w = 1.0 / static_cast<double>(batch.size());
  for (std::size_t i = 0; i < batch.size(); ++i) {
    ad::Var real = disc.score(dp, ad::constant(batch[i]->mel));
    ad::Var fake = disc.score(dp, fakes[i]);
    ad::Var term = ad::add(ad::mean(ad::square(ad::add_scalar(real, -1.0))), ad::mean(ad::square(fake)));
    term = ad::scale(term, w);
    loss = loss.defined() ? ad::add(loss, term) : term;
  }
  ad::backward(loss);
  disc.optimizer().step(disc.parameters(), all_names(disc.parameters()));
  return loss.scalar();
}

}  // namespace

Metrics pretrain_step(Model& model, AdamW& optimizer, std::span<const TrainingExample* const> batch,
                      const TrainConfig& config, std::uint64_t seed, ToyDiscriminator* discriminator) {
  ParameterSet& params = model.parameters();
  zero_grads(params);
  ParamBinder p(params);
  ObjectiveOptions opts{.reconstruction = true, .weights = config.weights, .discriminator = discriminator};
  BatchObjective obj = compute_objective(model, p, batch, opts, seed);
  Metrics metrics = objective_metrics(obj, batch, optimizer.learning_rate());
  ad::backward(obj.total);
  optimizer.step(params, all_names(params));
  if (discriminator) metrics["loss_disc"] = update_discriminator(*discriminator, batch, obj.generated_mels);
  return metrics;
}

Metrics finetune_step(Model& model, AdamW& optimizer, const ParameterPartition& partition,
                      std::span<const TrainingExample* const> batch, const TrainConfig& config,
                      std::uint64_t seed) {
  ParameterSet& params = model.parameters();
  const std::set<std::string> trainable = partition.trainable();
  zero_grads(params);
  ParamBinder p(params, trainable);
  ObjectiveOptions opts{.reconstruction = false, .weights = config.weights, .discriminator = nullptr};
  BatchObjective obj = compute_objective(model, p, batch, opts, seed);
  Metrics metrics = objective_metrics(obj, batch, optimizer.learning_rate());
  ad::backward(obj.total);
  for (const auto& name : partition.frozen) {
    const Mat& g = params.at(name).grad;
    if (g.size() > 0 && g.cwiseAbs().maxCoeff() != 0.0) {
      throw Error("finetune: gradient reached frozen parameter `" + name + "`");
    }
  }
  optimizer.step(params, trainable);
  return metrics;
}

Metrics validation_losses(Model& model, std::span<const TrainingExample> examples, std::uint64_t seed) {
  if (examples.empty()) throw std::invalid_argument("validation: no examples");
  std::vector<const TrainingExample*> batch;
  for (const auto& ex : examples) batch.push_back(&ex);
  ParamBinder p = ParamBinder::inference(model.parameters());
  ObjectiveOptions opts{.reconstruction = false, .weights = {}, .discriminator = nullptr};
  BatchObjective obj = compute_objective(model, p, batch, opts, seed);
  return {{"loss_kld", obj.kld}, {"loss_dur", obj.duration}, {"loss_kld_dur", obj.kld + obj.duration}};
}

Model init_finetune_from_pretrained(const Checkpoint& ckpt, int text_vocab, std::uint64_t seed) {
  if (ckpt.stage != "pretrain") {
    throw Error("init_finetune: checkpoint stage is `" + ckpt.stage + "`, expected `pretrain`");
  }
  ModelConfig config = ckpt.config;
  config.text_vocab = text_vocab;
  config.validate();
  Model model(config, PriorKind::kText, seed);
  for (auto& [name, param] : model.parameters()) {
    const std::string component = component_of(name);
    if (component != "posterior" && component != "decoder" && component != "flow" &&
        component != "reference_encoder") {
      continue;
    }
    auto it = ckpt.parameters.find(name);
    if (it == ckpt.parameters.end()) throw Error("init_finetune: checkpoint lacks `" + name + "`");
    if (it->second.rows() != param.value.rows() || it->second.cols() != param.value.cols()) {
      throw Error("init_finetune: shape mismatch for `" + name + "`");
    }
    param.value = it->second;
  }
  return model;
}

std::vector<Metrics> train_loop(Model& model, std::span<const TrainingExample> examples,
                                const TrainConfig& config, const LoopCallbacks& callbacks) {
  config.validate();
  if (examples.empty()) throw Error("train: no training examples");
  const bool full = config.uses_decoder();
  if (config.stage == Stage::kPretrain && model.prior_kind() != PriorKind::kPseudo) {
    throw Error("train: pre-training needs a pseudo-phoneme model");
  }
  if (config.stage == Stage::kFinetune && model.prior_kind() != PriorKind::kText) {
    throw Error("train: fine-tuning needs a text model");
  }
  const ParameterPartition partition =
      partition_parameters(model.parameters(), model.config(), config.stage, config.from_scratch);
  AdamW optimizer(config);
  std::optional<ToyDiscriminator> disc;
  if (config.adversarial) {
    if (!full) throw Error("train: the adversarial term needs the decoder, which fine-tuning never runs");
    disc.emplace(model.config().audio.n_mels, config.seed, config);
  }

  // Epoch-wise seeded permutation; batches run across epoch boundaries.
  const std::size_t n = examples.size();
  std::vector<std::size_t> order;
  std::size_t cursor = 0;
  std::uint64_t epoch = 0;
  auto next = [&]() {
    if (cursor == order.size()) {
      order.resize(n);
      for (std::size_t i = 0; i < n; ++i) order[i] = i;
      std::mt19937_64 rng(mix_seed(config.seed, 0x5eed0000ULL + epoch++));
      for (std::size_t i = n; i > 1; --i) std::swap(order[i - 1], order[rng() % i]);
      cursor = 0;
    }
    return &examples[order[cursor++]];
  };

  std::vector<Metrics> logged;
  std::vector<const TrainingExample*> batch;
  for (int it = 1; it <= config.iterations; ++it) {
    batch.clear();
    for (int b = 0; b < config.batch_size; ++b) batch.push_back(next());
    const std::uint64_t step_seed = mix_seed(config.seed, static_cast<std::uint64_t>(it));
    Metrics m = full ? pretrain_step(model, optimizer, batch, config, step_seed, disc ? &*disc : nullptr)
                     : finetune_step(model, optimizer, partition, batch, config, step_seed);
    if (it % config.log_interval == 0) {
      logged.push_back(m);
      if (callbacks.on_log) callbacks.on_log(it, m);
    }
    if (config.checkpoint_interval > 0 && it % config.checkpoint_interval == 0 && callbacks.on_checkpoint) {
      callbacks.on_checkpoint(it, model);
    }
  }
  return logged;
}

std::string metrics_json_line(int iteration, const Metrics& metrics, double lr, std::optional<double> wall_ms) {
  nlohmann::ordered_json j;
  j["iter"] = iteration;
  for (const char* key : {"loss_total", "loss_kld", "loss_dur", "loss_recon", "loss_adv", "loss_disc"}) {
    if (auto it = metrics.find(key); it != metrics.end()) j[key] = it->second;
  }
  j["lr"] = lr;
  if (wall_ms) j["wall_ms"] = *wall_ms;
  return j.dump();
}

std::filesystem::path feature_sidecar_path(const std::filesystem::path& codebook_path) {
  std::filesystem::path p = codebook_path;
  p += ".features.json";
  return p;
}

std::vector<TokenRecord> tokenize_corpus(const std::filesystem::path& manifest_path,
                                         const std::vector<ManifestEntry>& entries,
                                         const std::filesystem::path& codebook_path,
                                         const std::optional<std::filesystem::path>& features_dir) {
  const Codebook codebook = load_codebook(codebook_path);
  std::unique_ptr<FeatureProvider> provider;
  if (codebook.provider_id == "builtin-mel") {
    const auto sidecar = feature_sidecar_path(codebook_path);
    std::ifstream in(sidecar);
    if (!in) throw Error("cannot open feature settings `" + sidecar.string() + "`");
    json j;
    try {
      in >> j;
    } catch (const json::exception& e) {
      throw Error("feature settings `" + sidecar.string() + "`: " + e.what());
    }
    provider = std::make_unique<BuiltinMelProvider>(BuiltinMelProvider::from_json(j));
  } else if (codebook.provider_id == "precomputed") {
    if (!features_dir) throw Error("codebook was built from precomputed features; a features directory is required");
    provider = std::make_unique<PrecomputedProvider>(*features_dir);
  } else {
    throw Error("codebook has unknown feature provider `" + codebook.provider_id + "`");
  }
  std::vector<TokenRecord> records;
  records.reserve(entries.size());
  for (const auto& entry : entries) {
    FrameFeatures f = provider->provide(entry, manifest_path);
    if (f.values.cols() != codebook.dim()) {
      throw Error("entry `" + entry.id + "`: feature dim " + std::to_string(f.values.cols()) +
                  " does not match codebook dim " + std::to_string(codebook.dim()));
    }
    records.push_back({entry.id, merge_runs(quantize(f, codebook))});
  }
  return records;
}

RunResult run_training(const RunInputs& inputs, const TrainConfig& config, const std::filesystem::path& out_dir) {
  config.validate();
  inputs.model.validate();
  const std::vector<ManifestEntry> all = load_manifest(inputs.manifest);
  if (all.empty()) throw Error("manifest `" + inputs.manifest.string() + "` is empty");

  RunResult result;
  std::optional<Model> model;
  std::string codebook_ref;
  std::string stage_name;
  std::vector<TrainingExample> examples;

  if (config.stage == Stage::kPretrain) {
    stage_name = "pretrain";
    std::map<std::string, PseudoPhonemeSequence> tokens;
    if (inputs.codebook) codebook_ref = codebook_hash(load_codebook(*inputs.codebook));
    if (inputs.tokens) {
      for (auto& rec : read_token_dump(*inputs.tokens)) tokens[rec.id] = std::move(rec.sequence);
    } else if (inputs.codebook) {
      for (auto& rec : tokenize_corpus(inputs.manifest, all, *inputs.codebook, inputs.features_dir)) {
        tokens[rec.id] = std::move(rec.sequence);
      }
    } else {
      throw Error("pretrain: a codebook or token dump is required");
    }
    if (inputs.init_checkpoint) {
      Checkpoint ckpt = load_checkpoint(*inputs.init_checkpoint);
      if (ckpt.stage != "pretrain") throw Error("pretrain: can only resume from a pretrain checkpoint");
      if (auto warning = codebook_mismatch_warning(ckpt, codebook_ref)) result.warnings.push_back(*warning);
      model.emplace(ckpt.to_model());
    } else {
      model.emplace(inputs.model, PriorKind::kPseudo, config.seed);
    }
    const AudioConfig& audio = model->config().audio;
    for (const auto& entry : all) {
      auto it = tokens.find(entry.id);
      if (it == tokens.end()) throw Error("pretrain: no pseudo-phoneme tokens for entry `" + entry.id + "`");
      for (int t : it->second.tokens) {
        if (t < 0 || t >= model->config().pseudo_vocab) {
          throw Error("pretrain: token " + std::to_string(t) + " of `" + entry.id + "` exceeds pseudo_vocab " +
                      std::to_string(model->config().pseudo_vocab));
        }
      }
      Audio a = load_entry_audio(entry, inputs.manifest, audio.sample_rate);
      examples.push_back(make_example(entry.id, a.samples, it->second.tokens, audio, entry.speaker_id));
    }
  } else {
    stage_name = config.from_scratch ? "baseline" : "finetune";
    std::vector<ManifestEntry> labeled;
    for (const auto& entry : all) {
      if (entry.labeled()) labeled.push_back(entry);
    }
    if (labeled.empty()) throw Error("finetune: manifest has no labeled entries (no `text` fields)");
    if (labeled.size() < all.size()) {
      result.warnings.push_back("finetune: skipped " + std::to_string(all.size() - labeled.size()) +
                                " unlabeled entries");
    }
    const Lexicon lexicon = inputs.lexicon ? Lexicon::from_file(*inputs.lexicon) : Lexicon::characters();
    if (config.from_scratch) {
      ModelConfig mc = inputs.model;
      mc.text_vocab = lexicon.size();
      model.emplace(mc, PriorKind::kText, config.seed);
    } else {
      if (!inputs.init_checkpoint) throw Error("finetune: an initial checkpoint is required unless training from scratch");
      const Checkpoint ckpt = load_checkpoint(*inputs.init_checkpoint);
      codebook_ref = ckpt.codebook_hash;
      model.emplace(init_finetune_from_pretrained(ckpt, lexicon.size(), config.seed));
    }
    const AudioConfig& audio = model->config().audio;
    for (const auto& entry : labeled) {
      Audio a = load_entry_audio(entry, inputs.manifest, audio.sample_rate);
      examples.push_back(make_example(entry.id, a.samples, text_to_phonemes(*entry.text, lexicon).tokens, audio,
                                      entry.speaker_id));
    }
  }

  std::filesystem::create_directories(out_dir);
  {
    nlohmann::ordered_json echo;
    echo["stage"] = stage_name;
    echo["manifest"] = inputs.manifest.string();
    if (inputs.codebook) echo["codebook"] = inputs.codebook->string();
    if (inputs.tokens) echo["tokens"] = inputs.tokens->string();
    if (inputs.init_checkpoint) echo["init_checkpoint"] = inputs.init_checkpoint->string();
    if (inputs.lexicon) echo["lexicon"] = inputs.lexicon->string();
    echo["model"] = json(model->config());
    echo["train"] = json(config);
    std::ofstream(out_dir / "config.json") << echo.dump(2) << '\n';
  }

  result.metrics_log = out_dir / "metrics.jsonl";
  std::ofstream log(result.metrics_log, std::ios::trunc);
  if (!log) throw Error("cannot write `" + result.metrics_log.string() + "`");
  const auto start = std::chrono::steady_clock::now();
  LoopCallbacks callbacks;
  callbacks.on_log = [&](int it, const Metrics& m) {
    std::optional<double> wall;
    if (config.log_wall_time) {
      wall = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count();
    }
    log << metrics_json_line(it, m, m.at("lr"), wall) << '\n';
    log.flush();
  };
  callbacks.on_checkpoint = [&](int it, const Model& m) {
    save_checkpoint(out_dir / ("ckpt_" + std::to_string(it) + ".ckpt"),
                    make_checkpoint(m, stage_name, codebook_ref, config.seed, static_cast<std::uint64_t>(it)));
  };
  result.logged = train_loop(*model, examples, config, callbacks);
  result.checkpoint = out_dir / "final.ckpt";
  save_checkpoint(result.checkpoint, make_checkpoint(*model, stage_name, codebook_ref, config.seed,
                                                     static_cast<std::uint64_t>(config.iterations)));
  return result;
}

}  // namespace tts
