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

// Corpus manifests, the character-level text frontend and the synthetic
// speech corpus used for desk-scale experiments.

#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "tts/wav.hpp"

namespace tts {

struct ManifestEntry {
  std::string id;
  std::string audio_path;
  std::optional<std::string> text;  // absent => pre-training only
  std::string speaker_id;
  double duration_s = 0.0;

  bool labeled() const { return text.has_value(); }
  friend bool operator==(const ManifestEntry&, const ManifestEntry&) = default;
};

/// Parses a JSON-lines manifest. Errors name the offending line.
std::vector<ManifestEntry> load_manifest(const std::filesystem::path& path);
void write_manifest(const std::filesystem::path& path, const std::vector<ManifestEntry>& entries);

/// Relative audio paths are resolved against the manifest's directory.
std::filesystem::path resolve_audio_path(const std::filesystem::path& manifest_path,
                                         const ManifestEntry& entry);

struct PhonemeSequence {
  std::vector<int> tokens;
  std::string vocab_id;
};

/// Maps UTF-8 symbols to token ids. Lexicon files hold one token per line
/// (line number = id); `<space>` denotes ' ' and `<unk>` the unknown token.
class Lexicon {
 public:
  static Lexicon characters();
  static Lexicon from_file(const std::filesystem::path& path);

  int size() const { return static_cast<int>(symbols_.size()); }
  std::optional<int> find(std::string_view symbol) const;
  std::optional<int> unknown() const { return unknown_; }
  const std::string& id() const { return id_; }
  const std::string& symbol(int token) const { return symbols_.at(static_cast<std::size_t>(token)); }

 private:
  void add(std::string symbol);

  std::string id_;
  std::vector<std::string> symbols_;
  std::map<std::string, int, std::less<>> ids_;
  std::optional<int> unknown_;
};

/// Lowercases, collapses whitespace and maps each symbol through `lexicon`.
PhonemeSequence text_to_phonemes(std::string_view text, const Lexicon& lexicon);

struct SyntheticCorpusOptions {
  int sample_rate = 22050;
  bool labeled = true;
  // Speaker profile indices to draw from; empty => 0 .. n_speakers-1.
  std::vector<int> speakers;
  int min_words = 1;
  int max_words = 2;
  int min_letters = 2;
  int max_letters = 4;
};

/// Letters used by the synthetic voice; each has its own formant pattern
/// and duration. A space renders as a short pause.
std::string_view synthetic_alphabet();

/// Renders `text` in the voice of speaker profile `speaker`. Identical
/// arguments always yield identical samples.
Waveform render_synthetic(std::string_view text, int speaker, int sample_rate);

/// Random text drawn from the synthetic alphabet.
std::string random_synthetic_text(std::uint64_t seed, const SyntheticCorpusOptions& options);

/// Writes `n_utts` WAV files plus `manifest.jsonl` into `out_dir` and returns
/// the manifest path. Fully deterministic given the seed.
std::filesystem::path generate_synthetic_corpus(std::uint64_t seed, int n_utts, int n_speakers,
                                                const std::filesystem::path& out_dir,
                                                const SyntheticCorpusOptions& options = {});

}  // namespace tts
