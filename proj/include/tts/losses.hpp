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

// Training objectives. The prior-matching KLD serves both the phoneme prior
// (fine-tuning) and the pseudo-phoneme prior (pre-training); only the
// source of `frame_prior` differs.

#pragma once

#include <span>

#include "tts/features.hpp"
#include "tts/model.hpp"

namespace tts {

/// mean over frames and channels of
///   log N(z; post) - log N(z_p; frame_prior) - logdet / (T * C),
/// a single-sample Monte-Carlo estimate of KL(q(z|x) || p(z|c, A)).
ad::Var kld_prior_loss(const GaussianStats& posterior, const ad::Var& z, const FlowLatent& z_p,
                       const GaussianStats& frame_prior);

/// Mean squared error between predicted log-durations and log(targets).
ad::Var duration_loss(const ad::Var& predicted_log_durations, std::span<const int> target_durations);

/// L1 between the log-mel of `generated` and `target_mel` over the frames
/// both cover.
ad::Var reconstruction_loss(const ad::Var& generated, const Mat& target_mel, const AudioConfig& audio);

}  // namespace tts
