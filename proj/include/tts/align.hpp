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

// Monotonic alignment search between token-level priors and frame latents.

#pragma once

#include <span>
#include <vector>

#include "tts/gaussian.hpp"

namespace tts {

using ad::Mat;

/// Hard monotonic alignment: assignment[t] is the token index of frame t.
struct Alignment {
  std::vector<int> assignment;
  int n_tokens = 0;

  int n_frames() const { return static_cast<int>(assignment.size()); }
  friend bool operator==(const Alignment&, const Alignment&) = default;
};

/// grid(j, t) = sum_c log N(z_p(t, c); mean(j, c), std(j, c)).
Mat likelihood_grid(const Mat& mean, const Mat& std, const Mat& z_p);

/// Viterbi-style DP: Q[j,t] = grid[j,t] + max(Q[j,t-1], Q[j-1,t-1]); on ties
/// the path stays on the current token. Requires N <= T.
Alignment mas(const Mat& grid);

/// Sum of grid entries along the alignment path.
double alignment_score(const Mat& grid, const Alignment& alignment);

/// Validates monotone, complete and surjective; throws on violation.
void check_alignment(const Alignment& alignment);

std::vector<int> alignment_to_durations(const Alignment& alignment, int n_tokens);
Alignment durations_to_alignment(std::span<const int> durations);

/// Repeats each token's statistics durations[j] times. With
/// `allow_zero` (inference) zero-duration tokens are dropped.
GaussianStats expand_prior(const GaussianStats& prior, std::span<const int> durations,
                           bool allow_zero = false);

}  // namespace tts
