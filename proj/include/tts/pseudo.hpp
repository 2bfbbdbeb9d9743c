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

// Pseudo-phoneme discovery: a k-means codebook over frame features, frame
// quantisation, and run-length merging of consecutive cluster ids.

#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "tts/features.hpp"

namespace tts {

struct Codebook {
  Mat centroids;  // [k x dim]
  std::uint64_t seed = 0;
  std::string provider_id;

  int k() const { return static_cast<int>(centroids.rows()); }
  int dim() const { return static_cast<int>(centroids.cols()); }
};

struct KMeansOptions {
  int k = 128;
  std::uint64_t seed = 0;
  int max_iters = 100;
  double tol = 1e-6;  // max centroid shift (Euclidean) that counts as converged
};

struct KMeansResult {
  Codebook codebook;
  // Inertia after each assignment step; the last value belongs to the
  // returned centroids.
  std::vector<double> inertia_history;
  int iterations = 0;
  bool converged = false;

  double inertia() const { return inertia_history.back(); }
};

/// Lloyd's algorithm with seeded k-means++ initialisation. Empty clusters
/// are reseeded to the point farthest from its own centroid.
KMeansResult train_codebook(std::span<const FrameFeatures> corpus, const KMeansOptions& options);

using FrameClusterIds = std::vector<int>;

/// Nearest centroid in squared Euclidean distance; ties go to the lowest index.
FrameClusterIds quantize(const FrameFeatures& features, const Codebook& codebook);

struct PseudoPhonemeSequence {
  std::vector<int> tokens;
  std::vector<int> durations;

  friend bool operator==(const PseudoPhonemeSequence&, const PseudoPhonemeSequence&) = default;
};

PseudoPhonemeSequence merge_runs(std::span<const int> ids);
FrameClusterIds expand_runs(const PseudoPhonemeSequence& seq);

std::string serialize_codebook(const Codebook& codebook);
Codebook parse_codebook(const std::string& text);
void save_codebook(const std::filesystem::path& path, const Codebook& codebook);
Codebook load_codebook(const std::filesystem::path& path);
/// FNV-1a 64 of the serialised codebook, as 16 hex digits.
std::string codebook_hash(const Codebook& codebook);

struct TokenRecord {
  std::string id;
  PseudoPhonemeSequence sequence;
};

void write_token_dump(const std::filesystem::path& path, const std::vector<TokenRecord>& records);
std::vector<TokenRecord> read_token_dump(const std::filesystem::path& path);

}  // namespace tts
