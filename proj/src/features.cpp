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

#include "tts/features.hpp"

#include <cmath>
#include <cstring>
#include <fstream>
#include <map>
#include <mutex>
#include <numbers>

#include "tts/error.hpp"

namespace tts {
namespace {

double hz_to_mel(double hz) { return 2595.0 * std::log10(1.0 + hz / 700.0); }
double mel_to_hz(double mel) { return 700.0 * (std::pow(10.0, mel / 2595.0) - 1.0); }

void put_u32(std::ostream& out, std::uint32_t v) {
  char b[4];
  for (int i = 0; i < 4; ++i) b[i] = static_cast<char>((v >> (8 * i)) & 0xff);
  out.write(b, 4);
}

std::uint32_t get_u32(std::istream& in) {
  unsigned char b[4];
  in.read(reinterpret_cast<char*>(b), 4);
  if (!in) throw Error("ftfx: truncated file");
  return static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
         (static_cast<std::uint32_t>(b[2]) << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
}

void put_f32(std::ostream& out, float f) {
  std::uint32_t v;
  std::memcpy(&v, &f, 4);
  put_u32(out, v);
}

float get_f32(std::istream& in) {
  const std::uint32_t v = get_u32(in);
  float f;
  std::memcpy(&f, &v, 4);
  return f;
}

}  // namespace

std::string AudioConfig::id() const {
  char buf[160];
  std::snprintf(buf, sizeof buf, "sr%d-fft%d-hop%d-win%d-mel%d-%g-%g", sample_rate, n_fft,
                hop_length, win_length, n_mels, fmin, fmax);
  return buf;
}

void AudioConfig::validate() const {
  if (sample_rate <= 0) throw std::invalid_argument("audio: sample_rate must be positive");
  if (n_fft < 2 || hop_length < 1) throw std::invalid_argument("audio: invalid n_fft/hop_length");
  if (win_length < 1 || win_length > n_fft) {
    throw std::invalid_argument("audio: win_length must be in [1, n_fft]");
  }
  if (n_mels < 1 || n_mels > n_bins()) {
    throw std::invalid_argument("audio: n_mels must be in [1, n_fft/2+1]");
  }
  const double top = fmax > 0.0 ? fmax : 0.5 * sample_rate;
  if (fmin < 0.0 || top <= fmin) throw std::invalid_argument("audio: invalid mel frequency range");
  if (!(log_floor > 0.0)) throw std::invalid_argument("audio: log_floor must be positive");
}

void to_json(nlohmann::json& j, const AudioConfig& c) {
  j = {{"sample_rate", c.sample_rate}, {"n_fft", c.n_fft},   {"hop_length", c.hop_length},
       {"win_length", c.win_length},   {"n_mels", c.n_mels}, {"fmin", c.fmin},
       {"fmax", c.fmax},               {"log_floor", c.log_floor}};
}

void from_json(const nlohmann::json& j, AudioConfig& c) {
  for (const auto& [key, value] : j.items()) {
    if (key == "sample_rate") c.sample_rate = value.get<int>();
    else if (key == "n_fft") c.n_fft = value.get<int>();
    else if (key == "hop_length") c.hop_length = value.get<int>();
    else if (key == "win_length") c.win_length = value.get<int>();
    else if (key == "n_mels") c.n_mels = value.get<int>();
    else if (key == "fmin") c.fmin = value.get<double>();
    else if (key == "fmax") c.fmax = value.get<double>();
    else if (key == "log_floor") c.log_floor = value.get<double>();
    else throw std::invalid_argument("audio config: unknown key `" + key + "`");
  }
}

int frame_count(Eigen::Index num_samples, const AudioConfig& config) {
  // Centre padding adds n_fft/2 on both sides: floor((len + 2*(n_fft/2) - n_fft) / hop) + 1.
  const Eigen::Index padded = num_samples + 2 * (config.n_fft / 2);
  return static_cast<int>((padded - config.n_fft) / config.hop_length + 1);
}

Mat mel_filterbank(const AudioConfig& config) {
  config.validate();
  const int bins = config.n_bins();
  const double top = config.fmax > 0.0 ? config.fmax : 0.5 * config.sample_rate;
  const double mel_lo = hz_to_mel(config.fmin);
  const double mel_hi = hz_to_mel(top);
  std::vector<double> edges(static_cast<std::size_t>(config.n_mels + 2));
  for (std::size_t i = 0; i < edges.size(); ++i) {
    edges[i] = mel_to_hz(mel_lo + (mel_hi - mel_lo) * static_cast<double>(i) / (config.n_mels + 1));
  }
  const double bin_hz = static_cast<double>(config.sample_rate) / config.n_fft;

  Mat fb = Mat::Zero(bins, config.n_mels);
  for (int m = 0; m < config.n_mels; ++m) {
    const double lo = edges[m], centre = edges[m + 1], hi = edges[m + 2];
    for (int k = 0; k < bins; ++k) {
      const double f = k * bin_hz;
      const double w = std::min((f - lo) / (centre - lo), (hi - f) / (hi - centre));
      if (w > 0.0) fb(k, m) = w;
    }
    if (fb.col(m).sum() <= 0.0) {
      const int nearest = std::clamp(static_cast<int>(std::lround(centre / bin_hz)), 0, bins - 1);
      fb(nearest, m) = 1.0;
    }
  }
  return fb;
}

SpectralFrontend::SpectralFrontend(const AudioConfig& config) : config_(config) {
  config_.validate();
  const int n = config_.n_fft;
  const int bins = config_.n_bins();
  const int offset = (n - config_.win_length) / 2;
  Mat c = Mat::Zero(n, bins);
  Mat s = Mat::Zero(n, bins);
  for (int i = 0; i < config_.win_length; ++i) {
    const double w = 0.5 - 0.5 * std::cos(2.0 * std::numbers::pi * i / config_.win_length);
    const int row = i + offset;
    for (int k = 0; k < bins; ++k) {
      // Reduce k*row mod n first to keep the phase argument small and exact.
      const double phase = 2.0 * std::numbers::pi *
                           static_cast<double>((static_cast<long long>(k) * row) % n) / n;
      c(row, k) = w * std::cos(phase);
      s(row, k) = -w * std::sin(phase);
    }
  }
  dft_cos_ = ad::constant(std::move(c));
  dft_sin_ = ad::constant(std::move(s));
  mel_basis_ = mel_filterbank(config_);
  mel_basis_var_ = ad::constant(mel_basis_);
}

std::shared_ptr<const SpectralFrontend> SpectralFrontend::get(const AudioConfig& config) {
  static std::mutex mu;
  static std::map<std::string, std::shared_ptr<const SpectralFrontend>> cache;
  std::lock_guard lock(mu);
  auto key = config.id() + "/" + std::to_string(config.log_floor);
  auto it = cache.find(key);
  if (it != cache.end()) return it->second;
  auto fe = std::make_shared<const SpectralFrontend>(config);
  cache.emplace(key, fe);
  return fe;
}

ad::Var SpectralFrontend::magnitude(const ad::Var& wave) const {
  const Eigen::Index len = wave.rows();
  if (wave.cols() != 1) throw std::invalid_argument("stft: waveform must be a column");
  if (len < config_.win_length || len <= config_.n_fft / 2) {
    throw Error("stft: waveform of " + std::to_string(len) + " samples is shorter than the window (" +
                std::to_string(config_.win_length) + ")");
  }
  const int frames = frame_count(len, config_);
  const int n = config_.n_fft;
  const int pad = n / 2;
  ad::IndexMat idx(frames, n);
  for (int t = 0; t < frames; ++t) {
    for (int i = 0; i < n; ++i) {
      Eigen::Index src = static_cast<Eigen::Index>(t) * config_.hop_length + i - pad;
      if (src < 0) src = -src;
      if (src >= len) src = 2 * (len - 1) - src;
      idx(t, i) = src;
    }
  }
  ad::Var framed = ad::gather(wave, idx);
  return ad::magnitude(ad::matmul(framed, dft_cos_), ad::matmul(framed, dft_sin_));
}

ad::Var SpectralFrontend::log_mel(const ad::Var& magnitude) const {
  return ad::log_floor(ad::matmul(magnitude, mel_basis_var_), config_.log_floor);
}

LinearSpectrogram compute_linear_spectrogram(const Waveform& wave, const AudioConfig& config) {
  auto fe = SpectralFrontend::get(config);
  return {fe->magnitude(ad::constant(wave)).value(), config.id()};
}

MelSpectrogram compute_mel(const LinearSpectrogram& spec, const AudioConfig& config) {
  auto fe = SpectralFrontend::get(config);
  if (spec.values.cols() != config.n_bins()) {
    throw std::invalid_argument("compute_mel: spectrogram has " + std::to_string(spec.values.cols()) +
                                " bins, config expects " + std::to_string(config.n_bins()));
  }
  return {fe->log_mel(ad::constant(spec.values)).value(), config.id()};
}

MelSpectrogram compute_mel(const Waveform& wave, const AudioConfig& config) {
  return compute_mel(compute_linear_spectrogram(wave, config), config);
}

FeatureNormalization fit_normalization(const std::vector<FrameFeatures>& corpus) {
  if (corpus.empty()) throw Error("fit_normalization: empty corpus");
  const Eigen::Index dim = corpus.front().values.cols();
  Eigen::RowVectorXd sum = Eigen::RowVectorXd::Zero(dim);
  Eigen::RowVectorXd sq = Eigen::RowVectorXd::Zero(dim);
  double count = 0.0;
  for (const auto& f : corpus) {
    if (f.values.cols() != dim) throw Error("fit_normalization: inconsistent feature dimension");
    sum += f.values.colwise().sum();
    sq += f.values.array().square().matrix().colwise().sum();
    count += static_cast<double>(f.values.rows());
  }
  FeatureNormalization norm;
  norm.mean = sum / count;
  Eigen::RowVectorXd var = (sq / count).array() - norm.mean.array().square();
  norm.stddev = var.unaryExpr([](double v) { return v > 1e-12 ? std::sqrt(v) : 1.0; });
  return norm;
}

Audio load_entry_audio(const ManifestEntry& entry, const std::filesystem::path& manifest_path,
                       int expected_sample_rate) {
  Audio audio = read_wav(resolve_audio_path(manifest_path, entry));
  if (audio.sample_rate != expected_sample_rate) {
    throw Error("entry " + entry.id + ": sample rate " + std::to_string(audio.sample_rate) +
                " does not match configured " + std::to_string(expected_sample_rate));
  }
  return audio;
}

BuiltinMelProvider::BuiltinMelProvider(AudioConfig config, std::optional<FeatureNormalization> norm)
    : config_(config), norm_(std::move(norm)) {
  config_.validate();
}

FrameFeatures BuiltinMelProvider::raw(const Waveform& wave) const {
  return {compute_mel(wave, config_).values, id(), config_.frame_rate()};
}

FrameFeatures BuiltinMelProvider::from_waveform(const Waveform& wave) const {
  FrameFeatures f = raw(wave);
  if (norm_) {
    if (norm_->mean.size() != f.values.cols()) throw Error("builtin-mel: normalization dimension mismatch");
    f.values = ((f.values.rowwise() - norm_->mean).array().rowwise() / norm_->stddev.array()).matrix();
  }
  return f;
}

FrameFeatures BuiltinMelProvider::provide(const ManifestEntry& entry,
                                          const std::filesystem::path& manifest_path) const {
  return from_waveform(load_entry_audio(entry, manifest_path, config_.sample_rate).samples);
}

nlohmann::json BuiltinMelProvider::to_json() const {
  nlohmann::json j;
  j["provider"] = id();
  j["audio"] = config_;
  if (norm_) {
    j["mean"] = std::vector<double>(norm_->mean.data(), norm_->mean.data() + norm_->mean.size());
    j["stddev"] = std::vector<double>(norm_->stddev.data(), norm_->stddev.data() + norm_->stddev.size());
  }
  return j;
}

BuiltinMelProvider BuiltinMelProvider::from_json(const nlohmann::json& j) {
  if (j.value("provider", std::string()) != "builtin-mel") {
    throw Error("feature sidecar does not describe the builtin-mel provider");
  }
  auto config = j.at("audio").get<AudioConfig>();
  std::optional<FeatureNormalization> norm;
  if (j.contains("mean")) {
    auto mean = j.at("mean").get<std::vector<double>>();
    auto sd = j.at("stddev").get<std::vector<double>>();
    if (mean.size() != sd.size()) throw Error("feature sidecar: mean/stddev size mismatch");
    FeatureNormalization n;
    n.mean = Eigen::Map<Eigen::RowVectorXd>(mean.data(), static_cast<Eigen::Index>(mean.size()));
    n.stddev = Eigen::Map<Eigen::RowVectorXd>(sd.data(), static_cast<Eigen::Index>(sd.size()));
    norm = std::move(n);
  }
  return BuiltinMelProvider(config, std::move(norm));
}

FrameFeatures PrecomputedProvider::provide(const ManifestEntry& entry,
                                           const std::filesystem::path&) const {
  const auto path = dir_ / (entry.id + ".ftfx");
  if (!std::filesystem::exists(path)) throw Error("precomputed features not found: " + path.string());
  FrameFeatures f = read_ftfx(path);
  f.provider_id = id();
  return f;
}

std::vector<FrameFeatures> provide_corpus(const FeatureProvider& provider,
                                          const std::filesystem::path& manifest_path,
                                          const std::vector<ManifestEntry>& entries) {
  std::vector<FrameFeatures> out;
  out.reserve(entries.size());
  for (const auto& e : entries) {
    FrameFeatures f = provider.provide(e, manifest_path);
    if (!out.empty() && f.values.cols() != out.front().values.cols()) {
      throw Error("feature dimension mismatch: entry " + e.id + " has " +
                  std::to_string(f.values.cols()) + ", corpus has " +
                  std::to_string(out.front().values.cols()));
    }
    out.push_back(std::move(f));
  }
  return out;
}

FrameFeatures read_ftfx(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open feature file: " + path.string());
  char magic[4];
  in.read(magic, 4);
  if (!in || std::memcmp(magic, "FTFX", 4) != 0) throw Error("bad FTFX magic: " + path.string());
  const std::uint32_t frames = get_u32(in);
  const std::uint32_t dim = get_u32(in);
  const float rate = get_f32(in);
  if (frames == 0 || dim == 0) throw Error("FTFX file has empty shape: " + path.string());
  FrameFeatures f;
  f.values.resize(frames, dim);
  for (std::uint32_t t = 0; t < frames; ++t) {
    for (std::uint32_t d = 0; d < dim; ++d) {
      const float v = get_f32(in);
      if (!std::isfinite(v)) throw Error("FTFX file contains non-finite values: " + path.string());
      f.values(t, d) = v;
    }
  }
  f.provider_id = "precomputed";
  f.frame_rate_hz = rate;
  return f;
}

void write_ftfx(const std::filesystem::path& path, const FrameFeatures& features) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot write feature file: " + path.string());
  out.write("FTFX", 4);
  put_u32(out, static_cast<std::uint32_t>(features.values.rows()));
  put_u32(out, static_cast<std::uint32_t>(features.values.cols()));
  put_f32(out, static_cast<float>(features.frame_rate_hz));
  for (Eigen::Index t = 0; t < features.values.rows(); ++t) {
    for (Eigen::Index d = 0; d < features.values.cols(); ++d) {
      put_f32(out, static_cast<float>(features.values(t, d)));
    }
  }
  if (!out) throw Error("failed writing feature file: " + path.string());
}

}  // namespace tts
