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

#include "tts/losses.hpp"

#include <cmath>
#include <stdexcept>

#include "tts/error.hpp"

namespace tts {

ad::Var kld_prior_loss(const GaussianStats& posterior, const ad::Var& z, const FlowLatent& z_p,
                       const GaussianStats& frame_prior) {
  if (z.rows() != posterior.rows() || z.cols() != posterior.channels() ||
      z_p.values.rows() != frame_prior.rows() || z_p.values.cols() != frame_prior.channels() ||
      z.rows() != z_p.values.rows() || z.cols() != z_p.values.cols()) {
    throw Error("kld_prior_loss: shape mismatch between posterior, flow latent and prior");
  }
  const double n = static_cast<double>(z.rows() * z.cols());
  ad::Var log_q = gaussian_log_density(z, posterior);
  ad::Var log_p = gaussian_log_density(z_p.values, frame_prior);
  return ad::sub(ad::mean(ad::sub(log_q, log_p)), ad::scale(z_p.logdet, 1.0 / n));
}

ad::Var duration_loss(const ad::Var& predicted_log_durations, std::span<const int> target_durations) {
  if (predicted_log_durations.rows() != static_cast<ad::Index>(target_durations.size()) ||
      predicted_log_durations.cols() != 1) {
    throw Error("duration_loss: prediction and target lengths differ");
  }
  Mat target(predicted_log_durations.rows(), 1);
  for (std::size_t j = 0; j < target_durations.size(); ++j) {
    if (target_durations[j] < 1) throw Error("duration_loss: target durations must be >= 1");
    target(static_cast<ad::Index>(j), 0) = std::log(static_cast<double>(target_durations[j]));
  }
  return ad::mean(ad::square(ad::sub(predicted_log_durations, ad::constant(std::move(target)))));
}

ad::Var reconstruction_loss(const ad::Var& generated, const Mat& target_mel, const AudioConfig& audio) {
  auto fe = SpectralFrontend::get(audio);
  ad::Var mel = fe->log_mel(fe->magnitude(generated));
  const ad::Index frames = std::min(mel.rows(), target_mel.rows());
  if (frames < 1) throw Error("reconstruction_loss: no overlapping frames");
  if (target_mel.cols() != mel.cols()) throw Error("reconstruction_loss: mel bin count mismatch");
  ad::Var diff = ad::sub(ad::slice_rows(mel, 0, frames), ad::constant(target_mel.topRows(frames)));
  return ad::mean(ad::abs(diff));
}

}  // namespace tts
