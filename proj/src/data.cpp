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

#include "tts/data.hpp"

#include <array>
#include <cmath>
#include <fstream>
#include <numbers>
#include <random>
#include <set>

#include <json.hpp>

#include "tts/error.hpp"

namespace tts {
namespace {

using nlohmann::json;

std::string require_string(const json& obj, const char* key, std::size_t line) {
  auto it = obj.find(key);
  if (it == obj.end() || !it->is_string()) {
    throw Error("manifest line " + std::to_string(line) + ": missing required field `" + key + "`");
  }
  return it->get<std::string>();
}

// Splits UTF-8 into code point substrings; invalid bytes become single symbols.
std::vector<std::string> utf8_symbols(std::string_view s) {
  std::vector<std::string> out;
  std::size_t i = 0;
  while (i < s.size()) {
    const auto c = static_cast<unsigned char>(s[i]);
    std::size_t len = 1;
    if (c >= 0xf0) len = 4;
    else if (c >= 0xe0) len = 3;
    else if (c >= 0xc0) len = 2;
    len = std::min(len, s.size() - i);
    out.emplace_back(s.substr(i, len));
    i += len;
  }
  return out;
}

struct Letter {
  char symbol;
  std::array<double, 3> formants;  // Hz
  double duration_ms;
};

constexpr std::array<Letter, 12> kLetters{{
    {'a', {730, 1090, 2440}, 70},
    {'b', {270, 2290, 3010}, 60},
    {'c', {390, 1990, 2550}, 80},
    {'d', {530, 1840, 2480}, 50},
    {'e', {660, 1720, 2410}, 60},
    {'f', {520, 1190, 2390}, 70},
    {'g', {490, 1350, 1690}, 80},
    {'h', {570, 840, 2410}, 50},
    {'i', {440, 1020, 2240}, 60},
    {'j', {300, 870, 2240}, 70},
    {'k', {350, 1500, 2700}, 80},
    {'l', {800, 1400, 2000}, 50},
}};

constexpr double kPauseMs = 40.0;
constexpr double kEdgeSilenceMs = 30.0;
constexpr double kFadeMs = 5.0;

struct SpeakerProfile {
  double f0;
  double formant_scale;
};

SpeakerProfile speaker_profile(int speaker) {
  return {120.0 + 22.0 * speaker, 0.9 + 0.04 * speaker};
}

const Letter* find_letter(char c) {
  for (const auto& l : kLetters) {
    if (l.symbol == c) return &l;
  }
  return nullptr;
}

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

}  // namespace

std::vector<ManifestEntry> load_manifest(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("manifest not found: " + path.string());
  std::vector<ManifestEntry> entries;
  std::set<std::string> seen;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    json obj;
    try {
      obj = json::parse(line);
    } catch (const json::parse_error& e) {
      throw Error("manifest line " + std::to_string(line_no) + ": malformed JSON (" + e.what() + ")");
    }
    if (!obj.is_object()) throw Error("manifest line " + std::to_string(line_no) + ": expected an object");

    ManifestEntry e;
    e.id = require_string(obj, "id", line_no);
    e.audio_path = require_string(obj, "audio_path", line_no);
    e.speaker_id = require_string(obj, "speaker_id", line_no);
    auto dur = obj.find("duration_s");
    if (dur == obj.end() || !dur->is_number()) {
      throw Error("manifest line " + std::to_string(line_no) + ": missing required field `duration_s`");
    }
    e.duration_s = dur->get<double>();
    if (!(e.duration_s > 0.0)) {
      throw Error("manifest line " + std::to_string(line_no) + ": duration_s must be positive");
    }
    if (auto t = obj.find("text"); t != obj.end() && !t->is_null()) {
      if (!t->is_string()) throw Error("manifest line " + std::to_string(line_no) + ": `text` must be a string");
      e.text = t->get<std::string>();
    }
    if (!seen.insert(e.id).second) {
      throw Error("manifest line " + std::to_string(line_no) + ": duplicate id `" + e.id + "`");
    }
    entries.push_back(std::move(e));
  }
  return entries;
}

void write_manifest(const std::filesystem::path& path, const std::vector<ManifestEntry>& entries) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw Error("cannot write manifest: " + path.string());
  for (const auto& e : entries) {
    json obj = {{"id", e.id},
                {"audio_path", e.audio_path},
                {"speaker_id", e.speaker_id},
                {"duration_s", e.duration_s}};
    if (e.text) obj["text"] = *e.text;
    out << obj.dump() << '\n';
  }
  if (!out) throw Error("failed writing manifest: " + path.string());
}

std::filesystem::path resolve_audio_path(const std::filesystem::path& manifest_path,
                                         const ManifestEntry& entry) {
  std::filesystem::path p(entry.audio_path);
  if (p.is_absolute()) return p;
  return manifest_path.parent_path() / p;
}

void Lexicon::add(std::string symbol) {
  const int id = size();
  if (symbol == "<unk>") {
    unknown_ = id;
  } else {
    if (symbol == "<space>") symbol = " ";
    if (!ids_.emplace(symbol, id).second) throw Error("lexicon: duplicate symbol `" + symbol + "`");
  }
  symbols_.push_back(std::move(symbol));
}

Lexicon Lexicon::characters() {
  Lexicon lex;
  lex.id_ = "chars-v1";
  lex.add(" ");
  for (char c = 'a'; c <= 'z'; ++c) lex.add(std::string(1, c));
  for (char c : std::string_view("',.?!-")) lex.add(std::string(1, c));
  return lex;
}

Lexicon Lexicon::from_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("lexicon not found: " + path.string());
  Lexicon lex;
  lex.id_ = "file:" + path.filename().string();
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    lex.add(line);
  }
  if (lex.size() == 0) throw Error("lexicon is empty: " + path.string());
  return lex;
}

std::optional<int> Lexicon::find(std::string_view symbol) const {
  auto it = ids_.find(symbol);
  if (it == ids_.end()) return std::nullopt;
  return it->second;
}

PhonemeSequence text_to_phonemes(std::string_view text, const Lexicon& lexicon) {
  std::string norm;
  bool pending_space = false;
  for (char ch : text) {
    if (ch == ' ' || ch == '\t' || ch == '\n' || ch == '\r') {
      pending_space = !norm.empty();
      continue;
    }
    if (pending_space) norm.push_back(' ');
    pending_space = false;
    norm.push_back((ch >= 'A' && ch <= 'Z') ? static_cast<char>(ch - 'A' + 'a') : ch);
  }
  if (norm.empty()) throw Error("text is empty after normalization");

  PhonemeSequence seq;
  seq.vocab_id = lexicon.id();
  for (const auto& sym : utf8_symbols(norm)) {
    if (auto id = lexicon.find(sym)) {
      seq.tokens.push_back(*id);
    } else if (lexicon.unknown()) {
      seq.tokens.push_back(*lexicon.unknown());
    } else {
      throw Error("symbol `" + sym + "` is not covered by lexicon " + lexicon.id());
    }
  }
  return seq;
}

std::string_view synthetic_alphabet() { return "abcdefghijkl"; }

Waveform render_synthetic(std::string_view text, int speaker, int sample_rate) {
  if (sample_rate <= 0) throw std::invalid_argument("render_synthetic: sample_rate must be positive");
  const SpeakerProfile voice = speaker_profile(speaker);
  const double nyquist = 0.5 * sample_rate;
  auto samples_for = [&](double ms) {
    return static_cast<Eigen::Index>(std::lround(ms * sample_rate / 1000.0));
  };

  std::vector<double> out(static_cast<std::size_t>(samples_for(kEdgeSilenceMs)), 0.0);
  const Eigen::Index fade = std::max<Eigen::Index>(1, samples_for(kFadeMs));
  for (char c : text) {
    if (c == ' ') {
      out.resize(out.size() + static_cast<std::size_t>(samples_for(kPauseMs)), 0.0);
      continue;
    }
    const Letter* letter = find_letter(c);
    if (!letter) throw Error(std::string("render_synthetic: letter `") + c + "` not in alphabet");

    std::vector<double> amps;
    for (int h = 1; h * voice.f0 < nyquist - 100.0; ++h) {
      const double f = h * voice.f0;
      double a = 0.02;
      const std::array<double, 3> gains{1.0, 0.6, 0.3};
      const std::array<double, 3> widths{90.0, 110.0, 150.0};
      for (int k = 0; k < 3; ++k) {
        const double centre = letter->formants[k] * voice.formant_scale;
        const double bw = widths[k] * voice.formant_scale;
        a += gains[k] * std::exp(-0.5 * std::pow((f - centre) / bw, 2));
      }
      amps.push_back(a);
    }
    double norm = 0.0;
    for (double a : amps) norm += a;
    const double gain = 0.5 / norm;

    const Eigen::Index n = samples_for(letter->duration_ms);
    const std::size_t start = out.size();
    out.resize(start + static_cast<std::size_t>(n), 0.0);
    for (Eigen::Index i = 0; i < n; ++i) {
      const double t = static_cast<double>(start + static_cast<std::size_t>(i)) / sample_rate;
      double s = 0.0;
      for (std::size_t h = 0; h < amps.size(); ++h) {
        s += amps[h] * std::sin(2.0 * std::numbers::pi * static_cast<double>(h + 1) * voice.f0 * t);
      }
      double env = 1.0;
      const Eigen::Index edge = std::min(i, n - 1 - i);
      if (edge < fade) env = 0.5 - 0.5 * std::cos(std::numbers::pi * static_cast<double>(edge) / fade);
      out[start + static_cast<std::size_t>(i)] = gain * env * s;
    }
  }
  out.resize(out.size() + static_cast<std::size_t>(samples_for(kEdgeSilenceMs)), 0.0);
  return Eigen::Map<Waveform>(out.data(), static_cast<Eigen::Index>(out.size()));
}

std::string random_synthetic_text(std::uint64_t seed, const SyntheticCorpusOptions& options) {
  std::mt19937_64 rng(seed);
  const auto alphabet = synthetic_alphabet();
  std::uniform_int_distribution<int> n_words(options.min_words, options.max_words);
  std::uniform_int_distribution<int> n_letters(options.min_letters, options.max_letters);
  std::uniform_int_distribution<std::size_t> pick(0, alphabet.size() - 1);
  std::string text;
  const int words = n_words(rng);
  for (int w = 0; w < words; ++w) {
    if (w > 0) text.push_back(' ');
    const int letters = n_letters(rng);
    for (int l = 0; l < letters; ++l) text.push_back(alphabet[pick(rng)]);
  }
  return text;
}

std::filesystem::path generate_synthetic_corpus(std::uint64_t seed, int n_utts, int n_speakers,
                                                const std::filesystem::path& out_dir,
                                                const SyntheticCorpusOptions& options) {
  if (n_utts < 1) throw std::invalid_argument("generate_synthetic_corpus: n_utts must be >= 1");
  if (n_speakers < 1) throw std::invalid_argument("generate_synthetic_corpus: n_speakers must be >= 1");
  std::vector<int> speakers = options.speakers;
  if (speakers.empty()) {
    for (int s = 0; s < n_speakers; ++s) speakers.push_back(s);
  }
  if (static_cast<int>(speakers.size()) != n_speakers) {
    throw std::invalid_argument("generate_synthetic_corpus: speakers list must have n_speakers entries");
  }

  std::error_code ec;
  std::filesystem::create_directories(out_dir / "wavs", ec);
  if (ec) throw Error("cannot create corpus directory " + out_dir.string() + ": " + ec.message());

  std::vector<ManifestEntry> entries;
  for (int i = 0; i < n_utts; ++i) {
    const std::string text =
        random_synthetic_text(splitmix64(seed * 0x100000001b3ULL + static_cast<std::uint64_t>(i)), options);
    const int speaker = speakers[static_cast<std::size_t>(i % n_speakers)];
    const Waveform wav = render_synthetic(text, speaker, options.sample_rate);

    char id[32];
    std::snprintf(id, sizeof id, "utt%04d", i);
    ManifestEntry e;
    e.id = id;
    e.audio_path = "wavs/" + e.id + ".wav";
    e.speaker_id = "spk" + std::to_string(speaker);
    e.duration_s = static_cast<double>(wav.size()) / options.sample_rate;
    if (options.labeled) e.text = text;
    write_wav(out_dir / e.audio_path, wav, options.sample_rate);
    entries.push_back(std::move(e));
  }
  const auto manifest = out_dir / "manifest.jsonl";
  write_manifest(manifest, entries);
  return manifest;
}

}  // namespace tts
