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

#pragma once

#include <cmath>
#include <numbers>

#include "tts/autodiff.hpp"

namespace tts {

/// Lower bound on every standard deviation produced by the model.
inline constexpr double kStdFloor = 1e-5;
inline const double kLogStdFloor = std::log(kStdFloor);
inline constexpr double kLogStdCeil = 10.0;
inline const double kHalfLog2Pi = 0.5 * std::log(2.0 * std::numbers::pi);

/// Diagonal Gaussian statistics per row (frame or token). The standard
/// deviation is carried in log space: std = exp(log_std).
struct GaussianStats {
  ad::Var mean;
  ad::Var log_std;

  ad::Index rows() const { return mean.rows(); }
  ad::Index channels() const { return mean.cols(); }
  ad::Mat std_values() const { return log_std.value().array().exp().matrix(); }
};

/// Elementwise log N(x; mean, exp(log_std)).
ad::Var gaussian_log_density(const ad::Var& x, const GaussianStats& stats);

}  // namespace tts
