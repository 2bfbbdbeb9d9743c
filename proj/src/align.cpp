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

#include "tts/align.hpp"

#include <limits>
#include <stdexcept>

#include "tts/error.hpp"

namespace tts {

ad::Var gaussian_log_density(const ad::Var& x, const GaussianStats& stats) {
  // -log s - 0.5 log 2pi - 0.5 ((x - m) / s)^2
  ad::Var standardized = ad::mul(ad::sub(x, stats.mean), ad::exp(ad::scale(stats.log_std, -1.0)));
  ad::Var quad = ad::scale(ad::square(standardized), -0.5);
  return ad::add_scalar(ad::sub(quad, stats.log_std), -kHalfLog2Pi);
}

Mat likelihood_grid(const Mat& mean, const Mat& std, const Mat& z_p) {
  if (mean.cols() != z_p.cols() || std.cols() != z_p.cols() || mean.rows() != std.rows()) {
    throw std::invalid_argument("likelihood_grid: channel dimensions do not match");
  }
  if ((std.array() <= 0.0).any()) throw std::invalid_argument("likelihood_grid: std must be positive");
  const Eigen::Index n = mean.rows(), t_frames = z_p.rows(), c = z_p.cols();
  Mat inv_var = std.array().square().inverse().matrix();
  // Expand the quadratic: sum_c [-(z^2 - 2 z m + m^2) / (2 s^2) - log s - 0.5 log 2pi].
  Eigen::VectorXd token_const(n);
  for (Eigen::Index j = 0; j < n; ++j) {
    token_const(j) = -std.row(j).array().log().sum() - c * kHalfLog2Pi -
                     0.5 * (mean.row(j).array().square() * inv_var.row(j).array()).sum();
  }
  Mat zz = z_p.array().square().matrix();
  Mat grid = -0.5 * (inv_var * zz.transpose()) +
             (mean.cwiseProduct(inv_var)) * z_p.transpose();
  grid.colwise() += token_const;
  (void)t_frames;
  return grid;
}

Alignment mas(const Mat& grid) {
  const auto n = static_cast<int>(grid.rows());
  const auto t_frames = static_cast<int>(grid.cols());
  if (n < 1) throw Error("mas: grid has no tokens");
  if (n > t_frames) {
    throw Error("mas: " + std::to_string(n) + " tokens cannot align to " + std::to_string(t_frames) +
                " frames");
  }
  constexpr double kNeg = -std::numeric_limits<double>::infinity();
  Mat q = Mat::Constant(n, t_frames, kNeg);
  q(0, 0) = grid(0, 0);
  for (int t = 1; t < t_frames; ++t) {
    // Token j is reachable at frame t only if j <= t and N-1-j <= T-1-t.
    const int lo = std::max(0, n - (t_frames - t));
    const int hi = std::min(n - 1, t);
    for (int j = lo; j <= hi; ++j) {
      const double stay = q(j, t - 1);
      const double advance = j > 0 ? q(j - 1, t - 1) : kNeg;
      q(j, t) = grid(j, t) + std::max(stay, advance);
    }
  }

  Alignment a;
  a.n_tokens = n;
  a.assignment.assign(static_cast<std::size_t>(t_frames), 0);
  int j = n - 1;
  for (int t = t_frames - 1; t >= 0; --t) {
    a.assignment[static_cast<std::size_t>(t)] = j;
    if (t == 0) break;
    if (j > 0 && q(j - 1, t - 1) > q(j, t - 1)) --j;
  }
  return a;
}

double alignment_score(const Mat& grid, const Alignment& alignment) {
  double s = 0.0;
  for (int t = 0; t < alignment.n_frames(); ++t) s += grid(alignment.assignment[static_cast<std::size_t>(t)], t);
  return s;
}

void check_alignment(const Alignment& a) {
  if (a.assignment.empty()) throw Error("alignment: no frames");
  if (a.assignment.front() != 0) throw Error("alignment: does not start at token 0");
  if (a.assignment.back() != a.n_tokens - 1) throw Error("alignment: does not end at the last token");
  for (std::size_t t = 1; t < a.assignment.size(); ++t) {
    const int step = a.assignment[t] - a.assignment[t - 1];
    if (step != 0 && step != 1) throw Error("alignment: not monotone with unit steps at frame " + std::to_string(t));
  }
}

std::vector<int> alignment_to_durations(const Alignment& alignment, int n_tokens) {
  std::vector<int> d(static_cast<std::size_t>(n_tokens), 0);
  for (int j : alignment.assignment) {
    if (j < 0 || j >= n_tokens) throw Error("alignment_to_durations: token index out of range");
    ++d[static_cast<std::size_t>(j)];
  }
  return d;
}

Alignment durations_to_alignment(std::span<const int> durations) {
  Alignment a;
  a.n_tokens = static_cast<int>(durations.size());
  for (std::size_t j = 0; j < durations.size(); ++j) {
    a.assignment.insert(a.assignment.end(), static_cast<std::size_t>(std::max(0, durations[j])),
                        static_cast<int>(j));
  }
  return a;
}

GaussianStats expand_prior(const GaussianStats& prior, std::span<const int> durations, bool allow_zero) {
  if (static_cast<ad::Index>(durations.size()) != prior.rows()) {
    throw std::invalid_argument("expand_prior: one duration per token required");
  }
  std::vector<ad::Index> rows;
  for (std::size_t j = 0; j < durations.size(); ++j) {
    const int d = durations[j];
    if (d < 0 || (d == 0 && !allow_zero)) {
      throw Error("expand_prior: invalid duration " + std::to_string(d) + " for token " + std::to_string(j));
    }
    rows.insert(rows.end(), static_cast<std::size_t>(d), static_cast<ad::Index>(j));
  }
  if (rows.empty()) throw Error("expand_prior: total duration is zero");
  return {ad::gather_rows(prior.mean, rows), ad::gather_rows(prior.log_std, rows)};
}

}  // namespace tts
