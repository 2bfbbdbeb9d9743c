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

// transfer-tts: command-line entry point.
//
//   make-synthetic  write a synthetic corpus and manifest
//   codebook        k-means codebook over corpus frame features
//   tokenize        pseudo-phoneme token dump for a manifest
//   pretrain        pre-train on unlabeled speech + pseudo phonemes
//   finetune        fine-tune (or train from scratch) on labeled speech
//   synthesize      text to WAV
//   eval            objective metrics over a labeled manifest
//
// Exit codes: 0 success, 2 usage error, 1 runtime error.

#include <CLI11.hpp>

#include <cstdio>
#include <fstream>
#include <iostream>
#include <optional>
#include <set>
#include <stdexcept>
#include <string>

#include "tts/checkpoint.hpp"
#include "tts/config.hpp"
#include "tts/data.hpp"
#include "tts/error.hpp"
#include "tts/eval.hpp"
#include "tts/features.hpp"
#include "tts/pseudo.hpp"
#include "tts/train.hpp"
#include "tts/wav.hpp"

namespace {

namespace fs = std::filesystem;
using nlohmann::json;

struct UsageError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

struct SyntheticArgs {
  std::uint64_t seed = 0;
  int n_utts = 16;
  int n_speakers = 1;
  int sample_rate = 22050;
  bool unlabeled = false;
  std::vector<int> speakers;
  std::string out;
};

struct CodebookArgs {
  std::string manifest;
  std::string config;
  std::string out;
  int k = 128;
  std::uint64_t seed = 0;
  int max_iters = 100;
  std::string provider = "builtin-mel";
  std::string features_dir;
  bool no_normalize = false;
  std::set<std::string> given;  // options set on the command line; these override --config
};

struct TokenizeArgs {
  std::string manifest;
  std::string codebook;
  std::string features_dir;
  std::string out;
};

struct TrainArgs {
  std::string manifest;
  std::string config;
  std::string out;
  std::string codebook;
  std::string tokens;
  std::string features_dir;
  std::string init_ckpt;
  std::string lexicon;
  bool from_scratch = false;
  std::optional<int> iterations;
  std::optional<int> batch_size;
  std::optional<double> lr;
  std::optional<std::uint64_t> seed;
  std::optional<int> log_interval;
  std::optional<int> checkpoint_interval;
  bool adversarial = false;
};

struct SynthArgs {
  std::string ckpt;
  std::string text;
  std::string ref_wav;
  std::string lexicon;
  double noise_scale = 0.667;
  double length_scale = 1.0;
  std::uint64_t seed = 0;
  std::string out = "out.wav";
};

struct EvalArgs {
  std::string ckpt;
  std::string manifest;
  std::string codebook;
  std::string lexicon;
  std::string out;
  double noise_scale = 0.667;
  double length_scale = 1.0;
  std::uint64_t seed = 0;
};

std::optional<fs::path> opt_path(const std::string& s) {
  if (s.empty()) return std::nullopt;
  return fs::path(s);
}

fs::path echo_path(const fs::path& out) {
  fs::path p = out;
  p += ".config.json";
  return p;
}

tts::RunConfigFile load_config(const std::string& path) {
  return path.empty() ? tts::RunConfigFile{} : tts::RunConfigFile::load(path);
}

int cmd_make_synthetic(const SyntheticArgs& a) {
  tts::SyntheticCorpusOptions opts;
  opts.sample_rate = a.sample_rate;
  opts.labeled = !a.unlabeled;
  opts.speakers = a.speakers;
  const fs::path manifest = tts::generate_synthetic_corpus(a.seed, a.n_utts, a.n_speakers, a.out, opts);
  std::cout << "wrote " << manifest.string() << '\n';
  return 0;
}

int cmd_codebook(const CodebookArgs& a) {
  tts::RunConfigFile cfg = load_config(a.config);
  if (a.given.count("--k")) cfg.codebook.k = a.k;
  if (a.given.count("--seed")) cfg.codebook.seed = a.seed;
  if (a.given.count("--max-iters")) cfg.codebook.max_iters = a.max_iters;
  if (a.given.count("--provider")) cfg.feature.provider = a.provider;
  if (!a.features_dir.empty()) cfg.feature.features_dir = a.features_dir;
  if (a.no_normalize) cfg.feature.normalize = false;

  const auto entries = tts::load_manifest(a.manifest);
  if (entries.empty()) throw tts::Error("manifest is empty");
  std::vector<tts::FrameFeatures> corpus;
  std::optional<tts::BuiltinMelProvider> mel;
  if (cfg.feature.provider == "builtin-mel") {
    mel.emplace(cfg.model.audio);
    corpus = tts::provide_corpus(*mel, a.manifest, entries);
    if (cfg.feature.normalize) {
      const tts::FeatureNormalization norm = tts::fit_normalization(corpus);
      mel->set_normalization(norm);
      for (auto& f : corpus) {
        f.values = ((f.values.rowwise() - norm.mean).array().rowwise() / norm.stddev.array()).matrix();
      }
    }
  } else if (cfg.feature.provider == "precomputed") {
    if (!cfg.feature.features_dir) throw UsageError("--features-dir is required with the precomputed provider");
    corpus = tts::provide_corpus(tts::PrecomputedProvider(*cfg.feature.features_dir), a.manifest, entries);
  } else {
    throw UsageError("unknown provider `" + cfg.feature.provider + "`");
  }

  const tts::KMeansResult result = tts::train_codebook(corpus, cfg.codebook);
  tts::save_codebook(a.out, result.codebook);
  if (mel) tts::write_config_echo(tts::feature_sidecar_path(a.out), mel->to_json());
  json echo = cfg.to_json();
  echo["manifest"] = a.manifest;
  tts::write_config_echo(echo_path(a.out), echo);
  std::printf("k=%d dim=%d iterations=%d converged=%s inertia=%.6f\n", result.codebook.k(), result.codebook.dim(),
              result.iterations, result.converged ? "true" : "false", result.inertia());
  return 0;
}

int cmd_tokenize(const TokenizeArgs& a) {
  const auto entries = tts::load_manifest(a.manifest);
  const auto records = tts::tokenize_corpus(a.manifest, entries, a.codebook, opt_path(a.features_dir));
  tts::write_token_dump(a.out, records);
  std::cout << "wrote " << records.size() << " token records to " << a.out << '\n';
  return 0;
}

int cmd_train(const TrainArgs& a, tts::Stage stage) {
  tts::RunConfigFile cfg = load_config(a.config);
  tts::TrainConfig& tc = cfg.train;
  tc.stage = stage;
  if (a.iterations) tc.iterations = *a.iterations;
  if (a.batch_size) tc.batch_size = *a.batch_size;
  if (a.lr) tc.learning_rate = *a.lr;
  if (a.seed) tc.seed = *a.seed;
  if (a.log_interval) tc.log_interval = *a.log_interval;
  if (a.checkpoint_interval) tc.checkpoint_interval = *a.checkpoint_interval;
  if (a.adversarial) tc.adversarial = true;

  tts::RunInputs inputs;
  inputs.manifest = a.manifest;
  inputs.model = cfg.model;
  inputs.lexicon = opt_path(a.lexicon);
  inputs.init_checkpoint = opt_path(a.init_ckpt);
  inputs.features_dir = opt_path(a.features_dir);
  if (!inputs.features_dir && cfg.feature.features_dir) inputs.features_dir = cfg.feature.features_dir;
  if (stage == tts::Stage::kPretrain) {
    inputs.codebook = opt_path(a.codebook);
    inputs.tokens = opt_path(a.tokens);
    if (!inputs.codebook && !inputs.tokens) throw UsageError("pretrain needs --codebook or --tokens");
  } else {
    tc.from_scratch = a.from_scratch;
    if (a.from_scratch && !a.init_ckpt.empty()) throw UsageError("--init-ckpt and --from-scratch are exclusive");
    if (!a.from_scratch && a.init_ckpt.empty()) throw UsageError("finetune needs --init-ckpt or --from-scratch");
  }
  tc.validate();

  const tts::RunResult result = tts::run_training(inputs, tc, a.out);
  for (const auto& w : result.warnings) std::cerr << "warning: " << w << '\n';
  json echo = cfg.to_json();
  echo["manifest"] = a.manifest;
  if (inputs.codebook) echo["codebook"] = inputs.codebook->string();
  if (inputs.tokens) echo["tokens"] = inputs.tokens->string();
  if (inputs.init_checkpoint) echo["init_ckpt"] = inputs.init_checkpoint->string();
  if (inputs.lexicon) echo["lexicon"] = inputs.lexicon->string();
  tts::write_config_echo(fs::path(a.out) / "effective_config.json", echo);
  if (!result.logged.empty()) {
    const auto& last = result.logged.back();
    std::printf("final loss_total=%.6f loss_kld=%.6f loss_dur=%.6f\n", last.at("loss_total"), last.at("loss_kld"),
                last.at("loss_dur"));
  }
  std::cout << "checkpoint " << result.checkpoint.string() << '\n';
  return 0;
}

tts::Lexicon lexicon_for(const std::string& path) {
  return path.empty() ? tts::Lexicon::characters() : tts::Lexicon::from_file(path);
}

int cmd_synthesize(const SynthArgs& a) {
  if (a.text.empty()) throw UsageError("--text must not be empty");
  const tts::Checkpoint ckpt = tts::load_checkpoint(a.ckpt);
  tts::Model model = ckpt.to_model();
  if (model.prior_kind() != tts::PriorKind::kText) throw tts::Error("checkpoint has no text encoder");
  const tts::Lexicon lexicon = lexicon_for(a.lexicon);
  const tts::PhonemeSequence phonemes = tts::text_to_phonemes(a.text, lexicon);

  tts::SynthesisOptions opts;
  opts.noise_scale = a.noise_scale;
  opts.length_scale = a.length_scale;
  opts.seed = a.seed;
  const tts::AudioConfig& audio = model.config().audio;
  if (!a.ref_wav.empty()) {
    if (!model.config().multi_speaker) throw tts::Error("--ref-wav given for a single-speaker checkpoint");
    const tts::Audio ref = tts::read_wav(a.ref_wav);
    if (ref.sample_rate != audio.sample_rate) {
      throw tts::Error("reference sample rate " + std::to_string(ref.sample_rate) + " != model sample rate " +
                       std::to_string(audio.sample_rate));
    }
    opts.reference_mel = tts::compute_mel(ref.samples, audio).values;
  }
  const tts::SynthesisResult result = model.synthesize(phonemes.tokens, opts);
  tts::write_wav(a.out, result.waveform, audio.sample_rate);

  std::printf("%-6s %-6s %-8s %s\n", "index", "token", "frames", "log_duration");
  for (std::size_t i = 0; i < phonemes.tokens.size(); ++i) {
    std::string sym = lexicon.symbol(phonemes.tokens[i]);
    if (sym == " ") sym = "<sp>";
    std::printf("%-6zu %-6s %-8d %.4f\n", i, sym.c_str(), result.durations[i], result.log_durations(i, 0));
  }
  std::printf("samples=%lld seconds=%.3f\n", static_cast<long long>(result.waveform.size()),
              static_cast<double>(result.waveform.size()) / audio.sample_rate);
  return 0;
}

int cmd_eval(const EvalArgs& a) {
  const tts::Checkpoint ckpt = tts::load_checkpoint(a.ckpt);
  tts::Model model = ckpt.to_model();
  tts::EvalOptions opts;
  opts.codebook = opt_path(a.codebook);
  opts.lexicon = opt_path(a.lexicon);
  opts.noise_scale = a.noise_scale;
  opts.length_scale = a.length_scale;
  opts.seed = a.seed;
  const tts::EvalReport report = tts::evaluate_manifest(model, a.manifest, opts);
  tts::write_config_echo(a.out, report.to_json());
  for (const auto& [key, value] : report.aggregate) std::printf("%s=%.6f\n", key.c_str(), value);
  for (const auto& u : report.utterances) {
    if (u.error) std::fprintf(stderr, "error: %s: %s\n", u.id.c_str(), u.error->c_str());
  }
  return report.errors > 0 ? 1 : 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Transfer-learning TTS: pseudo-phoneme pre-training and text fine-tuning"};
  app.require_subcommand(1);
  app.option_defaults()->always_capture_default();

  SyntheticArgs syn;
  auto* c_syn = app.add_subcommand("make-synthetic", "Write a synthetic multi-speaker corpus");
  c_syn->add_option("--seed", syn.seed, "Random seed");
  c_syn->add_option("--n-utts", syn.n_utts, "Number of utterances")->check(CLI::PositiveNumber);
  c_syn->add_option("--n-speakers", syn.n_speakers, "Number of speakers")->check(CLI::PositiveNumber);
  c_syn->add_option("--sample-rate", syn.sample_rate, "Sample rate in Hz")->check(CLI::PositiveNumber);
  c_syn->add_option("--speakers", syn.speakers, "Explicit speaker profile indices");
  c_syn->add_flag("--unlabeled", syn.unlabeled, "Omit transcripts");
  c_syn->add_option("--out", syn.out, "Output directory")->required();

  CodebookArgs cb;
  auto* c_cb = app.add_subcommand("codebook", "Train a k-means codebook over frame features");
  c_cb->add_option("--manifest", cb.manifest, "Corpus manifest")->required();
  c_cb->add_option("--config", cb.config, "Run config JSON (model.audio sets the feature frontend)");
  c_cb->add_option("--k", cb.k, "Number of clusters")->check(CLI::PositiveNumber);
  c_cb->add_option("--seed", cb.seed, "k-means++ seed");
  c_cb->add_option("--max-iters", cb.max_iters, "Lloyd iteration cap")->check(CLI::PositiveNumber);
  c_cb->add_option("--provider", cb.provider, "Feature provider")->check(CLI::IsMember({"builtin-mel", "precomputed"}));
  c_cb->add_option("--features-dir", cb.features_dir, "Directory of <id>.ftfx files (precomputed provider)");
  c_cb->add_flag("--no-normalize", cb.no_normalize, "Skip per-dimension standardisation of builtin features");
  c_cb->add_option("--out", cb.out, "Codebook file")->required();

  TokenizeArgs tk;
  auto* c_tk = app.add_subcommand("tokenize", "Write pseudo-phoneme tokens for every manifest entry");
  c_tk->add_option("--manifest", tk.manifest, "Corpus manifest")->required();
  c_tk->add_option("--codebook", tk.codebook, "Codebook file")->required();
  c_tk->add_option("--features-dir", tk.features_dir, "Directory of <id>.ftfx files (precomputed provider)");
  c_tk->add_option("--out", tk.out, "Token JSON-lines file")->required();

  auto add_train_options = [](CLI::App* c, TrainArgs& t) {
    c->add_option("--manifest", t.manifest, "Corpus manifest")->required();
    c->add_option("--config", t.config, "Run config JSON");
    c->add_option("--out", t.out, "Run directory")->required();
    c->add_option("--init-ckpt", t.init_ckpt, "Checkpoint to start from");
    c->add_option("--iterations", t.iterations, "Training steps (overrides config)");
    c->add_option("--batch-size", t.batch_size, "Utterances per step (overrides config)");
    c->add_option("--lr", t.lr, "Learning rate (overrides config)");
    c->add_option("--seed", t.seed, "Seed (overrides config)");
    c->add_option("--log-interval", t.log_interval, "Steps between metric lines (overrides config)");
    c->add_option("--checkpoint-interval", t.checkpoint_interval, "Steps between checkpoints, 0 = final only");
  };
  TrainArgs pt;
  auto* c_pt = app.add_subcommand("pretrain", "Pre-train on unlabeled speech with pseudo phonemes");
  add_train_options(c_pt, pt);
  c_pt->add_option("--codebook", pt.codebook, "Codebook used to tokenize the corpus");
  c_pt->add_option("--tokens", pt.tokens, "Precomputed token dump");
  c_pt->add_option("--features-dir", pt.features_dir, "Directory of <id>.ftfx files (precomputed provider)");
  c_pt->add_flag("--adversarial", pt.adversarial, "Add the toy adversarial term");

  TrainArgs ft;
  auto* c_ft = app.add_subcommand("finetune", "Fine-tune on labeled speech");
  add_train_options(c_ft, ft);
  c_ft->add_option("--lexicon", ft.lexicon, "Token list, one per line (default: characters)");
  c_ft->add_flag("--from-scratch", ft.from_scratch, "Train every parameter without pre-training (baseline)");
  c_ft->add_flag("--adversarial", ft.adversarial, "Add the toy adversarial term (from-scratch only)");

  SynthArgs sy;
  auto* c_sy = app.add_subcommand("synthesize", "Synthesise a WAV from text");
  c_sy->add_option("--ckpt", sy.ckpt, "Fine-tuned checkpoint")->required();
  c_sy->add_option("--text", sy.text, "Input text")->required();
  c_sy->add_option("--ref-wav", sy.ref_wav, "Reference audio for the speaker (multi-speaker only)");
  c_sy->add_option("--lexicon", sy.lexicon, "Token list, one per line (default: characters)");
  c_sy->add_option("--noise-scale", sy.noise_scale, "Prior sampling temperature")->check(CLI::NonNegativeNumber);
  c_sy->add_option("--length-scale", sy.length_scale, "Duration multiplier")->check(CLI::PositiveNumber);
  c_sy->add_option("--seed", sy.seed, "Sampling seed");
  c_sy->add_option("--out", sy.out, "Output WAV path");

  EvalArgs ev;
  auto* c_ev = app.add_subcommand("eval", "Score a checkpoint against a labeled manifest");
  c_ev->add_option("--ckpt", ev.ckpt, "Checkpoint")->required();
  c_ev->add_option("--manifest", ev.manifest, "Labeled manifest")->required();
  c_ev->add_option("--codebook", ev.codebook, "Codebook for token round-trip accuracy");
  c_ev->add_option("--lexicon", ev.lexicon, "Token list, one per line (default: characters)");
  c_ev->add_option("--noise-scale", ev.noise_scale, "Prior sampling temperature")->check(CLI::NonNegativeNumber);
  c_ev->add_option("--length-scale", ev.length_scale, "Duration multiplier")->check(CLI::PositiveNumber);
  c_ev->add_option("--seed", ev.seed, "Sampling seed");
  c_ev->add_option("--out", ev.out, "Report JSON path")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  for (const char* name : {"--k", "--seed", "--max-iters", "--provider"}) {
    if (c_cb->count(name) > 0) cb.given.insert(name);
  }

  try {
    if (*c_syn) return cmd_make_synthetic(syn);
    if (*c_cb) return cmd_codebook(cb);
    if (*c_tk) return cmd_tokenize(tk);
    if (*c_pt) return cmd_train(pt, tts::Stage::kPretrain);
    if (*c_ft) return cmd_train(ft, tts::Stage::kFinetune);
    if (*c_sy) return cmd_synthesize(sy);
    if (*c_ev) return cmd_eval(ev);
  } catch (const UsageError& e) {
    std::cerr << "usage error: " << e.what() << '\n';
    return 2;
  } catch (const std::invalid_argument& e) {
    std::cerr << "invalid configuration: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 2;
}
