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

// Audio frontend (STFT magnitude, log-mel) and frame-feature providers.

#pragma once

#include <filesystem>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "tts/autodiff.hpp"
#include "tts/data.hpp"
#include "tts/wav.hpp"

namespace tts {

using ad::Mat;

/// STFT and mel settings. Frames use centre padding (reflect, n_fft/2 on each
/// side), so frame_count(len) = floor(len / hop) + 1 for len >= win_length.
struct AudioConfig {
  int sample_rate = 22050;
  int n_fft = 1024;
  int hop_length = 256;
  int win_length = 1024;
  int n_mels = 80;
  double fmin = 0.0;
  double fmax = 0.0;  // 0 => Nyquist
  double log_floor = 1e-5;

  int n_bins() const { return n_fft / 2 + 1; }
  double frame_rate() const { return static_cast<double>(sample_rate) / hop_length; }
  std::string id() const;
  void validate() const;

  friend bool operator==(const AudioConfig&, const AudioConfig&) = default;
};

void to_json(nlohmann::json& j, const AudioConfig& c);
void from_json(const nlohmann::json& j, AudioConfig& c);

int frame_count(Eigen::Index num_samples, const AudioConfig& config);

struct LinearSpectrogram {
  Mat values;  // [frames x bins], magnitudes
  std::string config_id;
};

struct MelSpectrogram {
  Mat values;  // [frames x n_mels], natural log
  std::string config_id;
};

struct FrameFeatures {
  Mat values;  // [frames x dim]
  std::string provider_id;
  double frame_rate_hz = 0.0;
};

/// Precomputed DFT and mel matrices for one AudioConfig. The same graph ops
/// back both the plain frontend and the differentiable loss path.
class SpectralFrontend {
 public:
  explicit SpectralFrontend(const AudioConfig& config);

  /// Cached instance per config id.
  static std::shared_ptr<const SpectralFrontend> get(const AudioConfig& config);

  const AudioConfig& config() const { return config_; }
  const Mat& mel_basis() const { return mel_basis_; }  // [bins x n_mels]

  ad::Var magnitude(const ad::Var& wave) const;  // wave: [samples x 1]
  ad::Var log_mel(const ad::Var& magnitude) const;

 private:
  AudioConfig config_;
  ad::Var dft_cos_;
  ad::Var dft_sin_;
  ad::Var mel_basis_var_;
  Mat mel_basis_;
};

/// Triangular mel filters on the HTK mel scale, [bins x n_mels]. A filter
/// too narrow to cover any bin gets unit weight on its nearest bin.
Mat mel_filterbank(const AudioConfig& config);

LinearSpectrogram compute_linear_spectrogram(const Waveform& wave, const AudioConfig& config);
MelSpectrogram compute_mel(const LinearSpectrogram& spec, const AudioConfig& config);
MelSpectrogram compute_mel(const Waveform& wave, const AudioConfig& config);

struct FeatureNormalization {
  Eigen::RowVectorXd mean;
  Eigen::RowVectorXd stddev;
};

/// Per-dimension mean and standard deviation over every frame of a corpus.
FeatureNormalization fit_normalization(const std::vector<FrameFeatures>& corpus);

/// Stand-in interface for self-supervised frame representations.
class FeatureProvider {
 public:
  virtual ~FeatureProvider() = default;
  virtual std::string id() const = 0;
  virtual FrameFeatures provide(const ManifestEntry& entry,
                                const std::filesystem::path& manifest_path) const = 0;
};

/// Log-mel frames, optionally standardised with corpus statistics.
class BuiltinMelProvider : public FeatureProvider {
 public:
  explicit BuiltinMelProvider(AudioConfig config,
                              std::optional<FeatureNormalization> norm = std::nullopt);

  std::string id() const override { return "builtin-mel"; }
  FrameFeatures provide(const ManifestEntry& entry,
                        const std::filesystem::path& manifest_path) const override;
  FrameFeatures from_waveform(const Waveform& wave) const;
  FrameFeatures raw(const Waveform& wave) const;

  const AudioConfig& config() const { return config_; }
  const std::optional<FeatureNormalization>& normalization() const { return norm_; }
  void set_normalization(std::optional<FeatureNormalization> norm) { norm_ = std::move(norm); }

  nlohmann::json to_json() const;
  static BuiltinMelProvider from_json(const nlohmann::json& j);

 private:
  AudioConfig config_;
  std::optional<FeatureNormalization> norm_;
};

/// Loads `<dir>/<entry id>.ftfx` feature files.
class PrecomputedProvider : public FeatureProvider {
 public:
  explicit PrecomputedProvider(std::filesystem::path dir) : dir_(std::move(dir)) {}
  std::string id() const override { return "precomputed"; }
  FrameFeatures provide(const ManifestEntry& entry,
                        const std::filesystem::path& manifest_path) const override;

 private:
  std::filesystem::path dir_;
};

/// Features for every entry; all must share one dimension.
std::vector<FrameFeatures> provide_corpus(const FeatureProvider& provider,
                                          const std::filesystem::path& manifest_path,
                                          const std::vector<ManifestEntry>& entries);

/// FTFX container: "FTFX", u32 T, u32 D, f32 frame_rate, T*D f32 row-major (LE).
FrameFeatures read_ftfx(const std::filesystem::path& path);
void write_ftfx(const std::filesystem::path& path, const FrameFeatures& features);

Audio load_entry_audio(const ManifestEntry& entry, const std::filesystem::path& manifest_path,
                       int expected_sample_rate);

}  // namespace tts
