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

#include "tts/eval.hpp"

#include <algorithm>
#include <fstream>

#include "tts/error.hpp"
#include "tts/train.hpp"

namespace tts {

namespace {

// Generated audio shorter than one FFT frame is zero-padded so it can be analysed.
Waveform analysable(const Waveform& gen, const AudioConfig& audio) {
  if (gen.size() >= audio.n_fft) return gen;
  Waveform out = Waveform::Zero(audio.n_fft);
  out.head(gen.size()) = gen;
  return out;
}

}  // namespace

double mel_distance(const Waveform& ref, const Waveform& gen, const AudioConfig& audio) {
  if (ref.size() == 0 || gen.size() == 0) throw Error("mel_distance: empty waveform");
  const Mat a = compute_mel(ref, audio).values;
  const Mat b = compute_mel(analysable(gen, audio), audio).values;
  const Eigen::Index t = std::min(a.rows(), b.rows());
  return (a.topRows(t) - b.topRows(t)).cwiseAbs().mean();
}

double cosine_similarity(const Mat& a, const Mat& b) {
  if (a.size() != b.size() || a.size() == 0) throw Error("cosine_similarity: size mismatch");
  const double na = a.norm();
  const double nb = b.norm();
  if (na == 0.0 || nb == 0.0) return 0.0;
  const double c = a.reshaped().dot(b.reshaped()) / (na * nb);
  return std::clamp(c, -1.0, 1.0);
}

double speaker_similarity(const Waveform& ref, const Waveform& gen, Model& model) {
  if (!model.config().multi_speaker) throw Error("speaker_similarity: model is single-speaker");
  if (ref.size() == 0 || gen.size() == 0) throw Error("speaker_similarity: empty waveform");
  const AudioConfig& audio = model.config().audio;
  ParamBinder p = ParamBinder::inference(model.parameters());
  const Mat ea = model.reference_encode(p, compute_mel(ref, audio).values).value();
  const Mat eb = model.reference_encode(p, compute_mel(analysable(gen, audio), audio).values).value();
  return cosine_similarity(ea, eb);
}

int levenshtein(std::span<const int> a, std::span<const int> b) {
  std::vector<int> row(b.size() + 1);
  for (std::size_t j = 0; j <= b.size(); ++j) row[j] = static_cast<int>(j);
  for (std::size_t i = 1; i <= a.size(); ++i) {
    int diag = row[0];
    row[0] = static_cast<int>(i);
    for (std::size_t j = 1; j <= b.size(); ++j) {
      const int up = row[j];
      row[j] = std::min({row[j] + 1, row[j - 1] + 1, diag + (a[i - 1] == b[j - 1] ? 0 : 1)});
      diag = up;
    }
  }
  return row[b.size()];
}

double sequence_accuracy(std::span<const int> expected, std::span<const int> actual) {
  if (expected.empty() || actual.empty()) throw Error("token accuracy: empty token sequence");
  const double longest = static_cast<double>(std::max(expected.size(), actual.size()));
  return 1.0 - levenshtein(expected, actual) / longest;
}

PseudoPhonemeSequence tokenize_waveform(const Waveform& wave, const Codebook& codebook,
                                        const BuiltinMelProvider& provider) {
  FrameFeatures f = provider.from_waveform(wave);
  if (f.values.cols() != codebook.dim()) throw Error("tokenize: feature dim does not match codebook");
  return merge_runs(quantize(f, codebook));
}

double token_roundtrip_accuracy(const Waveform& gen, const PseudoPhonemeSequence& expected,
                                const Codebook& codebook, const BuiltinMelProvider& provider) {
  if (gen.size() == 0) throw Error("token accuracy: empty waveform");
  return sequence_accuracy(expected.tokens,
                           tokenize_waveform(analysable(gen, provider.config()), codebook, provider).tokens);
}

void aggregate_report(EvalReport& report) {
  std::map<std::string, std::pair<double, int>> acc;
  report.errors = 0;
  for (const auto& u : report.utterances) {
    if (u.error) ++report.errors;
    auto add = [&](const char* key, const std::optional<double>& v) {
      if (!v) return;
      acc[key].first += *v;
      acc[key].second += 1;
    };
    add("mel_l1", u.mel_l1);
    add("token_rtrip_acc", u.token_rtrip_acc);
    add("secs_internal", u.secs_internal);
  }
  report.aggregate.clear();
  for (const auto& [key, sum_count] : acc) report.aggregate[key] = sum_count.first / sum_count.second;
}

nlohmann::json EvalReport::to_json() const {
  nlohmann::json utts = nlohmann::json::array();
  for (const auto& u : utterances) {
    nlohmann::json j{{"id", u.id}};
    if (u.mel_l1) j["mel_l1"] = *u.mel_l1;
    if (u.token_rtrip_acc) j["token_rtrip_acc"] = *u.token_rtrip_acc;
    if (u.secs_internal) j["secs_internal"] = *u.secs_internal;
    if (u.error) j["error"] = *u.error;
    utts.push_back(std::move(j));
  }
  return {{"utterances", utts}, {"aggregate", aggregate}, {"errors", errors}};
}

EvalReport evaluate_manifest(Model& model, const std::filesystem::path& manifest, const EvalOptions& options) {
  if (model.prior_kind() != PriorKind::kText) throw Error("eval: checkpoint is not a text model");
  const auto entries = load_manifest(manifest);
  const Lexicon lexicon = options.lexicon ? Lexicon::from_file(*options.lexicon) : Lexicon::characters();
  const AudioConfig& audio = model.config().audio;

  std::optional<Codebook> codebook;
  std::optional<BuiltinMelProvider> provider;
  if (options.codebook) {
    codebook = load_codebook(*options.codebook);
    if (codebook->provider_id != "builtin-mel") throw Error("eval: token accuracy needs a builtin-mel codebook");
    std::ifstream in(feature_sidecar_path(*options.codebook));
    if (!in) throw Error("eval: missing feature settings next to the codebook");
    nlohmann::json j;
    in >> j;
    provider = BuiltinMelProvider::from_json(j);
    if (provider->config().sample_rate != audio.sample_rate) {
      throw Error("eval: codebook sample rate differs from the model's");
    }
  }

  EvalReport report;
  for (std::size_t index = 0; index < entries.size(); ++index) {
    const ManifestEntry& entry = entries[index];
    if (!entry.labeled()) continue;
    UtteranceEval u;
    u.id = entry.id;
    try {
      const Audio ref = load_entry_audio(entry, manifest, audio.sample_rate);
      SynthesisOptions so;
      so.noise_scale = options.noise_scale;
      so.length_scale = options.length_scale;
      so.seed = mix_seed(options.seed, index);
      if (model.config().multi_speaker) so.reference_mel = compute_mel(ref.samples, audio).values;
      const SynthesisResult gen = model.synthesize(text_to_phonemes(*entry.text, lexicon).tokens, so);
      u.mel_l1 = mel_distance(ref.samples, gen.waveform, audio);
      if (codebook) {
        u.token_rtrip_acc = token_roundtrip_accuracy(gen.waveform, tokenize_waveform(ref.samples, *codebook, *provider),
                                                     *codebook, *provider);
      }
      if (model.config().multi_speaker) u.secs_internal = speaker_similarity(ref.samples, gen.waveform, model);
    } catch (const std::exception& e) {
      u = UtteranceEval{};
      u.id = entry.id;
      u.error = e.what();
    }
    report.utterances.push_back(std::move(u));
  }
  aggregate_report(report);
  return report;
}

}  // namespace tts
