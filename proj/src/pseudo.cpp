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

#include "tts/pseudo.hpp"

#include <cmath>
#include <fstream>
#include <limits>
#include <random>
#include <set>
#include <sstream>

#include <json.hpp>

#include "tts/error.hpp"

namespace tts {
namespace {

struct PointRef {
  const Mat* mat;
  Eigen::Index row;
  auto vec() const { return mat->row(row); }
};

double squared_distance(const Eigen::Ref<const Eigen::RowVectorXd>& a,
                        const Eigen::Ref<const Eigen::RowVectorXd>& b) {
  double d = 0.0;
  for (Eigen::Index i = 0; i < a.size(); ++i) {
    const double diff = a(i) - b(i);
    d += diff * diff;
  }
  return d;
}

// Returns (index, squared distance) of the nearest centroid, lowest index on ties.
std::pair<int, double> nearest(const Eigen::Ref<const Eigen::RowVectorXd>& x, const Mat& centroids) {
  int best = 0;
  double best_d = std::numeric_limits<double>::infinity();
  for (Eigen::Index c = 0; c < centroids.rows(); ++c) {
    const double d = squared_distance(x, centroids.row(c));
    if (d < best_d) {
      best_d = d;
      best = static_cast<int>(c);
    }
  }
  return {best, best_d};
}

std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

}  // namespace

KMeansResult train_codebook(std::span<const FrameFeatures> corpus, const KMeansOptions& options) {
  if (options.k < 1) throw std::invalid_argument("train_codebook: k must be >= 1");
  if (options.max_iters < 1) throw std::invalid_argument("train_codebook: max_iters must be >= 1");
  if (corpus.empty()) throw Error("train_codebook: empty feature corpus");

  const Eigen::Index dim = corpus.front().values.cols();
  std::vector<PointRef> points;
  for (const auto& f : corpus) {
    if (f.values.cols() != dim) throw Error("train_codebook: inconsistent feature dimension");
    for (Eigen::Index t = 0; t < f.values.rows(); ++t) points.push_back({&f.values, t});
  }
  const auto k = static_cast<std::size_t>(options.k);
  if (points.size() < k) {
    throw Error("train_codebook: " + std::to_string(points.size()) + " frames is fewer than k=" +
                std::to_string(options.k));
  }
  {
    std::set<std::vector<double>> distinct;
    for (const auto& p : points) {
      distinct.emplace(p.vec().begin(), p.vec().end());
      if (distinct.size() >= k) break;
    }
    if (distinct.size() < k) {
      throw Error("train_codebook: only " + std::to_string(distinct.size()) +
                  " distinct frames for k=" + std::to_string(options.k));
    }
  }

  // k-means++ seeding.
  std::mt19937_64 rng(options.seed);
  Mat centroids(options.k, dim);
  std::vector<double> d2(points.size(), std::numeric_limits<double>::infinity());
  std::uniform_int_distribution<std::size_t> first(0, points.size() - 1);
  centroids.row(0) = points[first(rng)].vec();
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  for (int c = 1; c < options.k; ++c) {
    double total = 0.0;
    for (std::size_t i = 0; i < points.size(); ++i) {
      d2[i] = std::min(d2[i], squared_distance(points[i].vec(), centroids.row(c - 1)));
      total += d2[i];
    }
    double target = unit(rng) * total;
    std::size_t pick = points.size() - 1;
    for (std::size_t i = 0; i < points.size(); ++i) {
      if (d2[i] <= 0.0) continue;
      target -= d2[i];
      if (target < 0.0) {
        pick = i;
        break;
      }
    }
    // Rounding can leave `pick` on an already chosen point; fall back to the farthest one.
    if (d2[pick] <= 0.0) {
      pick = static_cast<std::size_t>(std::max_element(d2.begin(), d2.end()) - d2.begin());
    }
    centroids.row(c) = points[pick].vec();
  }

  KMeansResult result;
  std::vector<int> assign(points.size());
  std::vector<double> dist(points.size());
  auto assign_all = [&] {
    double inertia = 0.0;
    for (std::size_t i = 0; i < points.size(); ++i) {
      auto [c, d] = nearest(points[i].vec(), centroids);
      assign[i] = c;
      dist[i] = d;
      inertia += d;
    }
    if (!result.inertia_history.empty()) {
      const double prev = result.inertia_history.back();
      if (inertia > prev + 1e-9 * std::max(1.0, prev)) {
        throw Error("train_codebook: inertia increased (" + format_double(prev) + " -> " +
                    format_double(inertia) + ")");
      }
    }
    result.inertia_history.push_back(inertia);
  };

  for (int it = 0; it < options.max_iters; ++it) {
    assign_all();
    Mat sums = Mat::Zero(options.k, dim);
    std::vector<std::size_t> counts(k, 0);
    for (std::size_t i = 0; i < points.size(); ++i) {
      sums.row(assign[i]) += points[i].vec();
      ++counts[static_cast<std::size_t>(assign[i])];
    }
    Mat next = centroids;
    std::vector<bool> taken(points.size(), false);
    for (int c = 0; c < options.k; ++c) {
      if (counts[static_cast<std::size_t>(c)] > 0) {
        next.row(c) = sums.row(c) / static_cast<double>(counts[static_cast<std::size_t>(c)]);
        continue;
      }
      std::size_t far = 0;
      double far_d = -1.0;
      for (std::size_t i = 0; i < points.size(); ++i) {
        if (!taken[i] && dist[i] > far_d) {
          far_d = dist[i];
          far = i;
        }
      }
      taken[far] = true;
      next.row(c) = points[far].vec();
    }
    const double shift = (next - centroids).rowwise().norm().maxCoeff();
    centroids = std::move(next);
    result.iterations = it + 1;
    if (shift < options.tol) {
      result.converged = true;
      break;
    }
  }
  assign_all();

  if (!centroids.allFinite()) throw Error("train_codebook: non-finite centroids");
  result.codebook.centroids = std::move(centroids);
  result.codebook.seed = options.seed;
  result.codebook.provider_id = corpus.front().provider_id;
  return result;
}

FrameClusterIds quantize(const FrameFeatures& features, const Codebook& codebook) {
  if (features.values.cols() != codebook.dim()) {
    throw Error("quantize: feature dim " + std::to_string(features.values.cols()) +
                " != codebook dim " + std::to_string(codebook.dim()));
  }
  FrameClusterIds ids(static_cast<std::size_t>(features.values.rows()));
  for (Eigen::Index t = 0; t < features.values.rows(); ++t) {
    ids[static_cast<std::size_t>(t)] = nearest(features.values.row(t), codebook.centroids).first;
  }
  return ids;
}

PseudoPhonemeSequence merge_runs(std::span<const int> ids) {
  PseudoPhonemeSequence seq;
  for (int id : ids) {
    if (!seq.tokens.empty() && seq.tokens.back() == id) {
      ++seq.durations.back();
    } else {
      seq.tokens.push_back(id);
      seq.durations.push_back(1);
    }
  }
  return seq;
}

FrameClusterIds expand_runs(const PseudoPhonemeSequence& seq) {
  if (seq.tokens.size() != seq.durations.size()) {
    throw Error("expand_runs: tokens and durations differ in length");
  }
  FrameClusterIds ids;
  for (std::size_t i = 0; i < seq.tokens.size(); ++i) {
    if (seq.durations[i] <= 0) throw Error("expand_runs: non-positive duration at position " + std::to_string(i));
    ids.insert(ids.end(), static_cast<std::size_t>(seq.durations[i]), seq.tokens[i]);
  }
  return ids;
}

std::string serialize_codebook(const Codebook& codebook) {
  std::ostringstream out;
  out << "PPCB1 k=" << codebook.k() << " dim=" << codebook.dim() << " seed=" << codebook.seed
      << " provider=" << codebook.provider_id << '\n';
  for (Eigen::Index r = 0; r < codebook.centroids.rows(); ++r) {
    for (Eigen::Index c = 0; c < codebook.centroids.cols(); ++c) {
      if (c > 0) out << ' ';
      out << format_double(codebook.centroids(r, c));
    }
    out << '\n';
  }
  return out.str();
}

Codebook parse_codebook(const std::string& text) {
  std::istringstream in(text);
  std::string header;
  if (!std::getline(in, header)) throw Error("codebook: empty file");
  std::istringstream hs(header);
  std::string magic, kf, df, sf, pf;
  hs >> magic >> kf >> df >> sf >> pf;
  if (magic != "PPCB1") throw Error("codebook: bad magic `" + magic + "`");
  auto field = [](const std::string& tok, const std::string& key) {
    if (tok.rfind(key + "=", 0) != 0) throw Error("codebook: expected `" + key + "=` in header");
    return tok.substr(key.size() + 1);
  };
  Codebook cb;
  int k = 0, dim = 0;
  try {
    k = std::stoi(field(kf, "k"));
    dim = std::stoi(field(df, "dim"));
    cb.seed = std::stoull(field(sf, "seed"));
  } catch (const std::logic_error&) {
    throw Error("codebook: malformed header `" + header + "`");
  }
  cb.provider_id = field(pf, "provider");
  if (k < 1 || dim < 1) throw Error("codebook: invalid shape in header");
  cb.centroids.resize(k, dim);
  for (int r = 0; r < k; ++r) {
    std::string line;
    if (!std::getline(in, line)) throw Error("codebook: expected " + std::to_string(k) + " centroid rows");
    std::istringstream ls(line);
    for (int c = 0; c < dim; ++c) {
      std::string tok;
      if (!(ls >> tok)) throw Error("codebook: row " + std::to_string(r) + " has too few values");
      cb.centroids(r, c) = std::strtod(tok.c_str(), nullptr);
    }
    std::string extra;
    if (ls >> extra) throw Error("codebook: row " + std::to_string(r) + " has too many values");
  }
  if (!cb.centroids.allFinite()) throw Error("codebook: non-finite centroid values");
  return cb;
}

void save_codebook(const std::filesystem::path& path, const Codebook& codebook) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot write codebook: " + path.string());
  out << serialize_codebook(codebook);
  if (!out) throw Error("failed writing codebook: " + path.string());
}

Codebook load_codebook(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("codebook not found: " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_codebook(ss.str());
}

std::string codebook_hash(const Codebook& codebook) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : serialize_codebook(codebook)) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

void write_token_dump(const std::filesystem::path& path, const std::vector<TokenRecord>& records) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot write token dump: " + path.string());
  for (const auto& r : records) {
    nlohmann::json j = {{"id", r.id}, {"tokens", r.sequence.tokens}, {"durations", r.sequence.durations}};
    out << j.dump() << '\n';
  }
  if (!out) throw Error("failed writing token dump: " + path.string());
}

std::vector<TokenRecord> read_token_dump(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("token dump not found: " + path.string());
  std::vector<TokenRecord> out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      auto j = nlohmann::json::parse(line);
      TokenRecord r;
      r.id = j.at("id").get<std::string>();
      r.sequence.tokens = j.at("tokens").get<std::vector<int>>();
      r.sequence.durations = j.at("durations").get<std::vector<int>>();
      out.push_back(std::move(r));
    } catch (const nlohmann::json::exception& e) {
      throw Error("token dump line " + std::to_string(line_no) + ": " + e.what());
    }
  }
  return out;
}

}  // namespace tts
