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

#include "tts/model.hpp"

#include <cmath>
#include <random>

#include "tts/error.hpp"

namespace tts {
namespace {

Mat uniform_init(Eigen::Index rows, Eigen::Index cols, double bound, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(-bound, bound);
  Mat m(rows, cols);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = u(rng);
  return m;
}

Mat normal_init(Eigen::Index rows, Eigen::Index cols, double stddev, std::mt19937_64& rng) {
  std::normal_distribution<double> n(0.0, stddev);
  Mat m(rows, cols);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = n(rng);
  return m;
}

class Initializer {
 public:
  Initializer(ParameterSet& params, std::uint64_t seed) : params_(params), rng_(seed) {}

  void conv(const std::string& name, int cin, int cout, int kernel, std::optional<double> bound = {}) {
    const double b = bound.value_or(1.0 / std::sqrt(static_cast<double>(cin * kernel)));
    put(name + ".w", b > 0 ? uniform_init(cin * kernel, cout, b, rng_) : Mat::Zero(cin * kernel, cout));
    put(name + ".b", b > 0 ? uniform_init(1, cout, b, rng_) : Mat::Zero(1, cout));
  }
  void linear(const std::string& name, int cin, int cout, std::optional<double> bound = {}) {
    conv(name, cin, cout, 1, bound);
  }
  void embedding(const std::string& name, int vocab, int dim) {
    put(name, normal_init(vocab, dim, 1.0, rng_));
  }

 private:
  void put(const std::string& name, Mat value) {
    ad::Parameter p;
    p.value = std::move(value);
    params_[name] = std::move(p);
  }

  ParameterSet& params_;
  std::mt19937_64 rng_;
};

void require_finite(const ad::Var& v, const std::string& where) {
  if (!v.value().allFinite()) throw Error("non-finite values in " + where);
}

std::vector<ad::Index> reversed_channels(int c) {
  std::vector<ad::Index> perm(static_cast<std::size_t>(c));
  for (int i = 0; i < c; ++i) perm[static_cast<std::size_t>(i)] = c - 1 - i;
  return perm;
}

}  // namespace

void ModelConfig::validate() const {
  audio.validate();
  if (latent_channels < 2 || latent_channels % 2 != 0) {
    throw std::invalid_argument("model: latent_channels must be even and >= 2");
  }
  if (flow_blocks < 1) throw std::invalid_argument("model: flow_blocks must be >= 1");
  if (hidden_channels < 1 || flow_hidden < 1) throw std::invalid_argument("model: hidden sizes must be positive");
  if (kernel_size < 1 || kernel_size % 2 == 0 || flow_kernel < 1 || flow_kernel % 2 == 0) {
    throw std::invalid_argument("model: kernel sizes must be odd");
  }
  if (text_vocab < 1 || pseudo_vocab < 1) throw std::invalid_argument("model: vocab sizes must be positive");
  if (multi_speaker && speaker_dim < 1) throw std::invalid_argument("model: speaker_dim must be positive");
  if (flow_init_scale < 0.0) throw std::invalid_argument("model: flow_init_scale must be >= 0");
}

void to_json(nlohmann::json& j, const ModelConfig& c) {
  j = {{"audio", c.audio},
       {"latent_channels", c.latent_channels},
       {"hidden_channels", c.hidden_channels},
       {"flow_hidden", c.flow_hidden},
       {"flow_blocks", c.flow_blocks},
       {"flow_kernel", c.flow_kernel},
       {"kernel_size", c.kernel_size},
       {"text_vocab", c.text_vocab},
       {"pseudo_vocab", c.pseudo_vocab},
       {"multi_speaker", c.multi_speaker},
       {"speaker_dim", c.speaker_dim},
       {"flow_init_scale", c.flow_init_scale}};
}

void from_json(const nlohmann::json& j, ModelConfig& c) {
  for (const auto& [key, value] : j.items()) {
    if (key == "audio") c.audio = value.get<AudioConfig>();
    else if (key == "latent_channels") c.latent_channels = value.get<int>();
    else if (key == "hidden_channels") c.hidden_channels = value.get<int>();
    else if (key == "flow_hidden") c.flow_hidden = value.get<int>();
    else if (key == "flow_blocks") c.flow_blocks = value.get<int>();
    else if (key == "flow_kernel") c.flow_kernel = value.get<int>();
    else if (key == "kernel_size") c.kernel_size = value.get<int>();
    else if (key == "text_vocab") c.text_vocab = value.get<int>();
    else if (key == "pseudo_vocab") c.pseudo_vocab = value.get<int>();
    else if (key == "multi_speaker") c.multi_speaker = value.get<bool>();
    else if (key == "speaker_dim") c.speaker_dim = value.get<int>();
    else if (key == "flow_init_scale") c.flow_init_scale = value.get<double>();
    else throw std::invalid_argument("model config: unknown key `" + key + "`");
  }
}

std::string to_string(PriorKind kind) { return kind == PriorKind::kPseudo ? "pseudo" : "text"; }

PriorKind prior_kind_from_string(const std::string& s) {
  if (s == "pseudo") return PriorKind::kPseudo;
  if (s == "text") return PriorKind::kText;
  throw Error("unknown prior encoder kind `" + s + "`");
}

std::string component_of(const std::string& name) { return name.substr(0, name.find('.')); }

std::uint64_t mix_seed(std::uint64_t a, std::uint64_t b) {
  std::uint64_t x = a ^ (b + 0x9e3779b97f4a7c15ULL + (a << 6) + (a >> 2));
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

Mat standard_normal(Eigen::Index rows, Eigen::Index cols, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  return normal_init(rows, cols, 1.0, rng);
}

ParamBinder::ParamBinder(ParameterSet& params) : ParamBinder(params, nullptr, true) {}

ParamBinder::ParamBinder(ParameterSet& params, const std::set<std::string>& trainable)
    : ParamBinder(params, &trainable, true) {}

ParamBinder::ParamBinder(ParameterSet& params, const std::set<std::string>* trainable, bool grad)
    : params_(&params), trainable_(trainable), grad_(grad) {}

ParamBinder ParamBinder::inference(ParameterSet& params) { return ParamBinder(params, nullptr, false); }

ad::Var ParamBinder::operator()(const std::string& name) {
  if (auto it = bound_.find(name); it != bound_.end()) return it->second;
  auto it = params_->find(name);
  if (it == params_->end()) throw Error("model has no parameter `" + name + "`");
  const bool train = grad_ && (trainable_ == nullptr || trainable_->count(name) > 0);
  ad::Var v = train ? ad::leaf(it->second) : ad::constant(it->second.value);
  bound_.emplace(name, v);
  return v;
}

Model::Model(ModelConfig config, PriorKind kind, std::uint64_t seed)
    : config_(std::move(config)), kind_(kind) {
  config_.validate();
  init_parameters(seed);
}

Model::Model(ModelConfig config, PriorKind kind, ParameterSet params)
    : config_(std::move(config)), kind_(kind), params_(std::move(params)) {
  config_.validate();
}

Model::Model(const Model& other)
    : config_(other.config_), kind_(other.kind_), params_(other.params_),
      decoder_evals_(other.decoder_evals_.load()) {}

Model::Model(Model&& other) noexcept
    : config_(std::move(other.config_)), kind_(other.kind_), params_(std::move(other.params_)),
      decoder_evals_(other.decoder_evals_.load()) {}

void Model::init_parameters(std::uint64_t seed) {
  const auto& c = config_;
  const int lat = c.latent_channels;
  const int half = lat / 2;
  const int h = c.hidden_channels;
  const int k = c.kernel_size;
  // One generator per component keeps a component's initial values
  // independent of which other components exist.
  auto init = [&](std::string_view component) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char ch : component) h = (h ^ ch) * 0x100000001b3ULL;
    return Initializer(params_, mix_seed(seed, h));
  };

  {
    auto in = init("posterior");
    in.conv("posterior.conv0", c.audio.n_bins(), h, k);
    in.conv("posterior.conv1", h, h, k);
    in.linear("posterior.proj", h, 2 * lat);
  }
  {
    auto in = init("flow");
    for (int b = 0; b < c.flow_blocks; ++b) {
      const std::string base = "flow." + std::to_string(b);
      in.linear(base + ".pre", half, c.flow_hidden);
      if (c.multi_speaker) in.linear(base + ".cond", c.speaker_dim, c.flow_hidden);
      in.conv(base + ".conv", c.flow_hidden, c.flow_hidden, c.flow_kernel);
      in.linear(base + ".post", c.flow_hidden, lat, c.flow_init_scale);
    }
  }
  {
    auto in = init("decoder");
    in.conv("decoder.conv0", lat, h, k);
    in.conv("decoder.conv1", h, h, k);
    in.linear("decoder.up", h, c.audio.hop_length);
  }
  if (kind_ == PriorKind::kText) {
    auto in = init("text_encoder");
    in.embedding("text_encoder.embed", c.text_vocab, h);
    for (int l = 0; l < 3; ++l) in.conv("text_encoder.conv" + std::to_string(l), h, h, k);
    in.linear("text_encoder.proj", h, 2 * lat);
  } else {
    auto in = init("pseudo_text_encoder");
    in.embedding("pseudo_text_encoder.embed", c.pseudo_vocab, h);
    in.conv("pseudo_text_encoder.conv0", h, h, k);
    in.conv("pseudo_text_encoder.conv1", h, h, k);
    in.linear("pseudo_text_encoder.proj", h, 2 * lat);
  }
  {
    auto in = init("duration_predictor");
    in.conv("duration_predictor.conv0", h, h, k);
    in.conv("duration_predictor.conv1", h, h, k);
    in.linear("duration_predictor.proj", h, 1);
  }
  if (c.multi_speaker) {
    auto in = init("reference_encoder");
    in.conv("reference_encoder.conv0", c.audio.n_mels, h, k);
    in.conv("reference_encoder.conv1", h, h, k);
    in.linear("reference_encoder.proj", h, c.speaker_dim);
  }
}

std::vector<std::string> Model::parameter_names() const {
  std::vector<std::string> names;
  for (const auto& [name, _] : params_) names.push_back(name);
  return names;
}

ad::Var Model::conv(ParamBinder& p, const std::string& name, const ad::Var& x, int kernel,
                    ad::Padding padding) const {
  ad::Var cols = kernel == 1 ? x : ad::im2col(x, kernel, 1, padding);
  return ad::add_row(ad::matmul(cols, p(name + ".w")), p(name + ".b"));
}

ad::Var Model::linear(ParamBinder& p, const std::string& name, const ad::Var& x) const {
  return conv(p, name, x, 1);
}

GaussianStats Model::split_stats(const ad::Var& proj) const {
  const int lat = config_.latent_channels;
  return {ad::slice_cols(proj, 0, lat),
          ad::clamp(ad::slice_cols(proj, lat, lat), kLogStdFloor, kLogStdCeil)};
}

PosteriorOutput Model::posterior_encode(ParamBinder& p, const Mat& linear_spec, const Mat& eps) const {
  if (linear_spec.rows() < 1) throw Error("posterior_encode: spectrogram has no frames");
  if (linear_spec.cols() != config_.audio.n_bins()) {
    throw Error("posterior_encode: expected " + std::to_string(config_.audio.n_bins()) + " bins, got " +
                std::to_string(linear_spec.cols()));
  }
  if (eps.rows() != linear_spec.rows() || eps.cols() != config_.latent_channels) {
    throw std::invalid_argument("posterior_encode: noise shape must be [frames x latent_channels]");
  }
  const int k = config_.kernel_size;
  ad::Var x = ad::constant(linear_spec.array().log1p().matrix());
  ad::Var h = ad::relu(conv(p, "posterior.conv0", x, k));
  h = ad::add(h, ad::relu(conv(p, "posterior.conv1", h, k)));
  GaussianStats stats = split_stats(linear(p, "posterior.proj", h));
  ad::Var z = ad::add(stats.mean, ad::mul(ad::exp(stats.log_std), ad::constant(eps)));
  return {z, stats};
}

void Model::coupling(ParamBinder& p, int block, const ad::Var& x0, const std::optional<ad::Var>& speaker,
                     ad::Var& shift, ad::Var& log_scale) const {
  const std::string base = "flow." + std::to_string(block);
  ad::Var h = linear(p, base + ".pre", x0);
  if (config_.multi_speaker) {
    if (!speaker) throw Error("flow: multi-speaker model requires a speaker embedding");
    h = ad::add_row(h, linear(p, base + ".cond", *speaker));
  } else if (speaker) {
    throw Error("flow: speaker embedding given to a single-speaker model");
  }
  h = ad::relu(h);
  h = ad::add(h, ad::relu(conv(p, base + ".conv", h, config_.flow_kernel)));
  ad::Var out = linear(p, base + ".post", h);
  const int half = config_.latent_channels / 2;
  shift = ad::slice_cols(out, 0, half);
  log_scale = ad::tanh(ad::slice_cols(out, half, half));
}

FlowLatent Model::flow_forward(ParamBinder& p, const ad::Var& z, const std::optional<ad::Var>& speaker) const {
  const int lat = config_.latent_channels;
  const int half = lat / 2;
  if (z.cols() != lat) throw Error("flow_forward: expected " + std::to_string(lat) + " channels");
  const auto flip = reversed_channels(lat);
  const Mat ones = Mat::Ones(half, 1);
  ad::Var x = z;
  ad::Var frame_logdet = ad::constant(Mat::Zero(z.rows(), 1));
  for (int b = 0; b < config_.flow_blocks; ++b) {
    ad::Var x0 = ad::slice_cols(x, 0, half);
    ad::Var x1 = ad::slice_cols(x, half, half);
    ad::Var shift, log_scale;
    coupling(p, b, x0, speaker, shift, log_scale);
    ad::Var y1 = ad::add(shift, ad::mul(x1, ad::exp(log_scale)));
    x = ad::permute_cols(ad::concat_cols(x0, y1), flip);
    frame_logdet = ad::add(frame_logdet, ad::matmul(log_scale, ad::constant(ones)));
    require_finite(x, "flow coupling block " + std::to_string(b));
  }
  return {x, frame_logdet, ad::sum(frame_logdet)};
}

FlowLatent Model::flow_inverse(ParamBinder& p, const ad::Var& z_p, const std::optional<ad::Var>& speaker) const {
  const int lat = config_.latent_channels;
  const int half = lat / 2;
  if (z_p.cols() != lat) throw Error("flow_inverse: expected " + std::to_string(lat) + " channels");
  const auto flip = reversed_channels(lat);
  const Mat ones = Mat::Ones(half, 1);
  ad::Var y = z_p;
  ad::Var frame_logdet = ad::constant(Mat::Zero(z_p.rows(), 1));
  for (int b = config_.flow_blocks - 1; b >= 0; --b) {
    ad::Var x = ad::permute_cols(y, flip);
    ad::Var x0 = ad::slice_cols(x, 0, half);
    ad::Var y1 = ad::slice_cols(x, half, half);
    ad::Var shift, log_scale;
    coupling(p, b, x0, speaker, shift, log_scale);
    ad::Var x1 = ad::mul(ad::sub(y1, shift), ad::exp(ad::scale(log_scale, -1.0)));
    y = ad::concat_cols(x0, x1);
    frame_logdet = ad::sub(frame_logdet, ad::matmul(log_scale, ad::constant(ones)));
    require_finite(y, "inverse flow coupling block " + std::to_string(b));
  }
  return {y, frame_logdet, ad::sum(frame_logdet)};
}

EncoderOutput Model::text_encode(ParamBinder& p, std::span<const int> phonemes) const {
  if (kind_ != PriorKind::kText) throw Error("text_encode: model has a pseudo-phoneme prior encoder");
  if (phonemes.empty()) throw Error("text_encode: empty phoneme sequence");
  std::vector<ad::Index> rows;
  for (int t : phonemes) {
    if (t < 0 || t >= config_.text_vocab) throw Error("text_encode: token " + std::to_string(t) + " out of vocabulary");
    rows.push_back(t);
  }
  ad::Var h = ad::gather_rows(p("text_encoder.embed"), rows);
  for (int l = 0; l < 3; ++l) {
    h = ad::add(h, ad::relu(conv(p, "text_encoder.conv" + std::to_string(l), h, config_.kernel_size)));
  }
  return {h, split_stats(linear(p, "text_encoder.proj", h))};
}

EncoderOutput Model::pseudo_text_encode(ParamBinder& p, std::span<const int> pseudo_tokens) const {
  if (kind_ != PriorKind::kPseudo) throw Error("pseudo_text_encode: model has a text prior encoder");
  if (pseudo_tokens.empty()) throw Error("pseudo_text_encode: empty token sequence");
  std::vector<ad::Index> rows;
  for (int t : pseudo_tokens) {
    if (t < 0 || t >= config_.pseudo_vocab) {
      throw Error("pseudo_text_encode: token " + std::to_string(t) + " outside [0, " +
                  std::to_string(config_.pseudo_vocab) + ")");
    }
    rows.push_back(t);
  }
  ad::Var e = ad::gather_rows(p("pseudo_text_encoder.embed"), rows);
  ad::Var h = ad::relu(conv(p, "pseudo_text_encoder.conv0", e, config_.kernel_size));
  h = conv(p, "pseudo_text_encoder.conv1", h, config_.kernel_size);
  return {h, split_stats(linear(p, "pseudo_text_encoder.proj", h))};
}

EncoderOutput Model::encode_prior(ParamBinder& p, std::span<const int> tokens) const {
  return kind_ == PriorKind::kText ? text_encode(p, tokens) : pseudo_text_encode(p, tokens);
}

ad::Var Model::decode(ParamBinder& p, const ad::Var& z) const {
  if (z.rows() < 1) throw Error("decode: latent has no frames");
  ++decoder_evals_;
  const int k = config_.kernel_size;
  ad::Var h = ad::relu(conv(p, "decoder.conv0", z, k));
  h = ad::add(h, ad::relu(conv(p, "decoder.conv1", h, k)));
  // Transposed convolution with kernel == stride == hop: each frame emits hop samples.
  ad::Var frames = linear(p, "decoder.up", h);
  const ad::Index t = frames.rows();
  const ad::Index hop = frames.cols();
  ad::IndexMat idx(t * hop, 1);
  for (ad::Index i = 0; i < t; ++i) {
    for (ad::Index j = 0; j < hop; ++j) idx(i * hop + j, 0) = i + j * t;
  }
  return ad::gather(frames, idx);
}

ad::Var Model::predict_durations(ParamBinder& p, const ad::Var& hidden) const {
  const int k = config_.kernel_size;
  ad::Var h = ad::relu(conv(p, "duration_predictor.conv0", hidden, k));
  h = ad::relu(conv(p, "duration_predictor.conv1", h, k));
  return linear(p, "duration_predictor.proj", h);
}

ad::Var Model::reference_encode(ParamBinder& p, const Mat& mel) const {
  if (!config_.multi_speaker) throw Error("reference_encode: model is single-speaker");
  if (mel.rows() < 1 || mel.cols() != config_.audio.n_mels) {
    throw Error("reference_encode: expected [frames x " + std::to_string(config_.audio.n_mels) + "] mel");
  }
  const int k = config_.kernel_size;
  // Circular padding: a sequence tiled in time yields the same pooled statistics.
  ad::Var h = ad::relu(conv(p, "reference_encoder.conv0", ad::constant(mel), k, ad::Padding::kCircular));
  h = ad::relu(conv(p, "reference_encoder.conv1", h, k, ad::Padding::kCircular));
  return linear(p, "reference_encoder.proj", ad::mean_rows(h));
}

SynthesisResult Model::synthesize(std::span<const int> phonemes, const SynthesisOptions& options) {
  if (phonemes.empty()) throw Error("synthesize: empty phoneme sequence");
  if (options.reference_mel && !config_.multi_speaker) {
    throw Error("synthesize: reference audio given to a single-speaker model");
  }
  if (options.noise_scale < 0.0 || !(options.length_scale > 0.0)) {
    throw std::invalid_argument("synthesize: noise_scale must be >= 0 and length_scale > 0");
  }
  ParamBinder p = ParamBinder::inference(params_);
  EncoderOutput enc = encode_prior(p, phonemes);
  ad::Var logdur = predict_durations(p, enc.hidden);

  SynthesisResult out;
  out.log_durations = logdur.value();
  for (ad::Index j = 0; j < logdur.rows(); ++j) {
    const double d = std::round(std::exp(logdur.value()(j, 0)) * options.length_scale);
    out.durations.push_back(std::max(1, static_cast<int>(std::min(d, 1e6))));
  }
  GaussianStats frames = expand_prior(enc.prior, out.durations, /*allow_zero=*/true);
  Mat eps = standard_normal(frames.rows(), frames.channels(), options.seed);
  Mat z_p = frames.mean.value() + (frames.std_values().array() * eps.array()).matrix() * options.noise_scale;

  std::optional<ad::Var> speaker;
  if (config_.multi_speaker) {
    speaker = options.reference_mel ? reference_encode(p, *options.reference_mel)
                                    : ad::constant(Mat::Zero(1, config_.speaker_dim));
  }
  FlowLatent z = flow_inverse(p, ad::constant(z_p), speaker);
  out.waveform = decode(p, z.values).value().col(0);
  return out;
}

}  // namespace tts
