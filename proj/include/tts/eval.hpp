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

// Objective evaluation: mel distance, token round-trip accuracy and
// internal speaker similarity.

#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "tts/model.hpp"
#include "tts/pseudo.hpp"

namespace tts {

/// Mean absolute log-mel difference over the frames both signals cover.
double mel_distance(const Waveform& ref, const Waveform& gen, const AudioConfig& audio);

/// Cosine of two row vectors; 0 when either has zero norm.
double cosine_similarity(const Mat& a, const Mat& b);

/// Cosine of the model's reference-encoder embeddings of both signals.
double speaker_similarity(const Waveform& ref, const Waveform& gen, Model& model);

/// Unit-cost edit distance.
int levenshtein(std::span<const int> a, std::span<const int> b);

/// 1 - levenshtein(a, b) / max(|a|, |b|).
double sequence_accuracy(std::span<const int> expected, std::span<const int> actual);

/// Quantises `gen` with `codebook`, merges runs and scores the result
/// against `expected`.
double token_roundtrip_accuracy(const Waveform& gen, const PseudoPhonemeSequence& expected,
                                const Codebook& codebook, const BuiltinMelProvider& provider);

/// Pseudo-phoneme tokens of a waveform.
PseudoPhonemeSequence tokenize_waveform(const Waveform& wave, const Codebook& codebook,
                                        const BuiltinMelProvider& provider);

struct UtteranceEval {
  std::string id;
  std::optional<double> mel_l1;
  std::optional<double> token_rtrip_acc;
  std::optional<double> secs_internal;
  std::optional<std::string> error;
};

struct EvalReport {
  std::vector<UtteranceEval> utterances;
  std::map<std::string, double> aggregate;  // mean of each metric over utterances that have it
  int errors = 0;

  nlohmann::json to_json() const;
};

struct EvalOptions {
  std::optional<std::filesystem::path> codebook;  // enables token round-trip accuracy
  std::optional<std::filesystem::path> lexicon;
  double noise_scale = 0.667;
  double length_scale = 1.0;
  std::uint64_t seed = 0;
};

/// Synthesises every labeled manifest entry (with its own audio as the
/// reference on multi-speaker models) and scores it against the recording.
/// Per-entry failures are recorded in the report.
EvalReport evaluate_manifest(Model& model, const std::filesystem::path& manifest, const EvalOptions& options);

/// Recomputes the aggregate block from the per-utterance records.
void aggregate_report(EvalReport& report);

}  // namespace tts
