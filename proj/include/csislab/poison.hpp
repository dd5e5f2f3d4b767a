#pragma once

#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <limits>
#include <numeric>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include <nlohmann/json.hpp>

#include "csislab/common.hpp"
#include "csislab/hash_types.hpp"
#include "csislab/parallel.hpp"
#include "csislab/rng.hpp"

namespace csislab {

enum class Strategy { KModes, Random };

inline std::string_view to_string(Strategy s) { return s == Strategy::KModes ? "kmodes" : "random"; }

inline Strategy parse_strategy(std::string_view s) {
  if (s == "kmodes" || s == "k-modes") return Strategy::KModes;
  if (s == "random") return Strategy::Random;
  throw Error(ErrorCode::InvalidArgument, "unknown strategy '" + std::string(s) + "'");
}

struct KModesConfig {
  std::size_t k = 1;
  std::size_t restarts = 5;
  std::size_t max_iterations = 100;
  std::uint64_t seed = 0;
  unsigned workers = 1;
  bool refine = true;  // swap-based local search over input hashes after snapping
};

/// Diagnostics for one k-modes restart.
struct KModesRun {
  std::vector<std::uint64_t> trace;  // objective after each assignment step
  bool converged = false;
  std::size_t empty_repairs = 0;
  std::uint64_t raw_objective = 0;      // with the unsnapped modes
  std::uint64_t snapped_objective = 0;  // after snapping to input hashes
  std::uint64_t final_objective = 0;    // after refinement (equals snapped when off)
  std::size_t swaps = 0;
  std::vector<PerceptualHash> modes;
  std::vector<std::size_t> snapped_index;
  std::vector<std::size_t> final_index;
};

struct PoisonSet {
  std::vector<PerceptualHash> hashes;
  std::vector<std::size_t> source_index;  // into the scene hash list
  std::uint64_t objective = 0;            // sum of per-image min hamming distances
  Strategy strategy = Strategy::KModes;
  bool converged = true;                  // false flags a NonConvergence outcome
  std::size_t best_restart = 0;
  std::vector<KModesRun> runs;

  std::size_t size() const noexcept { return hashes.size(); }
};

struct ObjectiveReport {
  std::uint64_t total = 0;
  std::vector<int> per_image;  // min hamming distance of each scene hash
};

/// Sum over scene hashes of the distance to the nearest poison.
inline ObjectiveReport objective(std::span<const PerceptualHash> poisons, std::span<const PerceptualHash> scene) {
  require(!poisons.empty(), ErrorCode::EmptyInput, "objective needs at least one poison");
  ObjectiveReport r;
  r.per_image.resize(scene.size());
  for (std::size_t i = 0; i < scene.size(); ++i) {
    int best = std::numeric_limits<int>::max();
    for (const auto& p : poisons) best = std::min(best, hamming(p, scene[i]));
    r.per_image[i] = best;
    r.total += static_cast<std::uint64_t>(best);
  }
  return r;
}

inline ObjectiveReport objective(const PoisonSet& poisons, std::span<const PerceptualHash> scene) {
  return objective(poisons.hashes, scene);
}

/// Indices of the first occurrence of each distinct hash, in input order.
inline std::vector<std::size_t> distinct_indices(std::span<const PerceptualHash> hashes) {
  std::unordered_map<PerceptualHash, std::size_t, PerceptualHashHasher> seen;
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < hashes.size(); ++i)
    if (seen.emplace(hashes[i], i).second) out.push_back(i);
  return out;
}

namespace detail {

inline void check_population(std::span<const PerceptualHash> hashes, std::size_t k,
                             const std::vector<std::size_t>& distinct) {
  require(k >= 1, ErrorCode::InvalidArgument, "budget k must be at least 1");
  for (const auto& h : hashes)
    require(h.size() == hashes[0].size(), ErrorCode::LengthMismatch, "scene hashes differ in length");
  require(distinct.size() >= k, ErrorCode::InsufficientDistinctHashes,
          std::to_string(distinct.size()) + " distinct hashes for budget " + std::to_string(k));
}

inline int word_distance(std::span<const std::uint64_t> a, std::span<const std::uint64_t> b) {
  int d = 0;
  for (std::size_t w = 0; w < a.size(); ++w) d += std::popcount(a[w] ^ b[w]);
  return d;
}

// Each mode is replaced by the closest distinct input hash not already taken.
inline std::vector<std::size_t> snap_modes(std::span<const PerceptualHash> hashes,
                                           const std::vector<std::size_t>& distinct,
                                           const std::vector<PerceptualHash>& modes) {
  std::vector<char> taken(distinct.size(), 0);
  std::vector<std::size_t> out;
  for (const auto& m : modes) {
    int best = std::numeric_limits<int>::max();
    std::size_t best_j = 0;
    for (std::size_t j = 0; j < distinct.size(); ++j) {
      if (taken[j]) continue;
      const int d = word_distance(m.words(), hashes[distinct[j]].words());
      if (d < best) best = d, best_j = j;
    }
    taken[best_j] = 1;
    out.push_back(distinct[best_j]);
  }
  return out;
}

// Swap refinement: for each selected hash, try replacing it by another
// distinct input hash and keep the best swap that lowers the total. Small
// instances try every candidate; larger ones only the slot's own cluster.
inline constexpr std::size_t kFullSwapBudget = 20'000'000;

inline std::size_t refine_selection(std::span<const PerceptualHash> hashes, const std::vector<std::size_t>& distinct,
                                    std::vector<std::size_t>& chosen, std::size_t max_passes = 50) {
  const std::size_t n = hashes.size(), k = chosen.size();
  const bool full = k * distinct.size() * n <= kFullSwapBudget;
  std::vector<int> d1(n), d2(n);
  std::vector<std::size_t> near(n), second(n);
  auto rescan = [&](std::size_t i) {
    int a = std::numeric_limits<int>::max(), b = a;
    std::size_t ai = 0, bi = 0;
    for (std::size_t c = 0; c < k; ++c) {
      const int d = word_distance(hashes[i].words(), hashes[chosen[c]].words());
      if (d < a) b = a, bi = ai, a = d, ai = c;
      else if (d < b) b = d, bi = c;
    }
    d1[i] = a, d2[i] = b, near[i] = ai, second[i] = bi;
  };
  // After slot s changes only points that referenced s need a rescan; the
  // rest can only move the new hash into first or second place.
  auto update = [&](std::size_t s) {
    for (std::size_t i = 0; i < n; ++i) {
      if (near[i] == s || second[i] == s) {
        rescan(i);
        continue;
      }
      const int d = word_distance(hashes[i].words(), hashes[chosen[s]].words());
      if (d < d1[i]) d2[i] = d1[i], second[i] = near[i], d1[i] = d, near[i] = s;
      else if (d < d2[i]) d2[i] = d, second[i] = s;
    }
  };
  std::vector<char> in_set(hashes.size(), 0);
  for (auto c : chosen) in_set[c] = 1;
  std::size_t swaps = 0;
  for (std::size_t i = 0; i < n; ++i) rescan(i);
  for (std::size_t pass = 0; pass < max_passes; ++pass) {
    bool improved = false;
    for (std::size_t slot = 0; slot < k; ++slot) {
      std::int64_t best_delta = 0;
      std::size_t best_cand = 0;
      for (auto cand : distinct) {
        if (in_set[cand] || (!full && near[cand] != slot)) continue;
        std::int64_t delta = 0;
        for (std::size_t i = 0; i < n; ++i) {
          const int dc = word_distance(hashes[i].words(), hashes[cand].words());
          const int without = near[i] == slot ? d2[i] : d1[i];
          delta += std::min(dc, without) - d1[i];
        }
        if (delta < best_delta) best_delta = delta, best_cand = cand;
      }
      if (best_delta < 0) {
        in_set[chosen[slot]] = 0;
        in_set[best_cand] = 1;
        chosen[slot] = best_cand;
        ++swaps;
        improved = true;
        update(slot);
      }
    }
    if (!improved) break;
  }
  return swaps;
}

inline KModesRun kmodes_run(std::span<const PerceptualHash> hashes, const std::vector<std::size_t>& distinct,
                            const KModesConfig& cfg, std::size_t restart) {
  const std::size_t n = hashes.size(), k = cfg.k, bits = hashes[0].size();
  Rng rng = make_rng(cfg.seed, "kmodes", restart);

  // Random distinct input points as initial modes (partial Fisher-Yates).
  std::vector<std::size_t> pick = distinct;
  for (std::size_t i = 0; i < k; ++i) std::swap(pick[i], pick[i + uniform_index(rng, pick.size() - i)]);
  std::vector<PerceptualHash> modes;
  for (std::size_t i = 0; i < k; ++i) modes.push_back(hashes[pick[i]]);

  KModesRun run;
  std::vector<std::size_t> assign(n);
  std::vector<int> dist(n);
  std::vector<std::size_t> counts(k);
  std::vector<std::size_t> ones;
  for (std::size_t iter = 0; iter < cfg.max_iterations; ++iter) {
    std::uint64_t total = 0;
    std::fill(counts.begin(), counts.end(), 0);
    for (std::size_t i = 0; i < n; ++i) {
      int best = std::numeric_limits<int>::max();
      std::size_t best_c = 0;
      for (std::size_t c = 0; c < k; ++c) {
        const int d = word_distance(hashes[i].words(), modes[c].words());
        if (d < best) best = d, best_c = c;
      }
      assign[i] = best_c;
      dist[i] = best;
      ++counts[best_c];
      total += static_cast<std::uint64_t>(best);
    }
    run.trace.push_back(total);

    // Empty clusters take the point farthest from its current mode.
    bool repaired = false;
    for (std::size_t c = 0; c < k; ++c) {
      if (counts[c] != 0) continue;
      std::size_t far = 0;
      for (std::size_t i = 1; i < n; ++i)
        if (dist[i] > dist[far]) far = i;
      if (dist[far] == 0) break;
      --counts[assign[far]];
      modes[c] = hashes[far];
      assign[far] = c;
      dist[far] = 0;
      counts[c] = 1;
      ++run.empty_repairs;
      repaired = true;
    }

    // Per-bit majority; ties keep the previous bit.
    ones.assign(k * bits, 0);
    for (std::size_t i = 0; i < n; ++i) {
      const auto w = hashes[i].words();
      auto* row = ones.data() + assign[i] * bits;
      for (std::size_t b = 0; b < bits; ++b) row[b] += (w[b >> 6] >> (b & 63)) & 1ULL;
    }
    bool changed = false;
    for (std::size_t c = 0; c < k; ++c) {
      if (counts[c] == 0) continue;
      const auto* row = ones.data() + c * bits;
      PerceptualHash next = modes[c];
      for (std::size_t b = 0; b < bits; ++b) {
        if (2 * row[b] > counts[c]) next.set(b, true);
        else if (2 * row[b] < counts[c]) next.set(b, false);
      }
      if (next != modes[c]) {
        modes[c] = std::move(next);
        changed = true;
      }
    }
    if (!changed && !repaired) {
      run.converged = true;
      break;
    }
  }
  run.raw_objective = objective(modes, hashes).total;
  run.modes = modes;
  run.snapped_index = snap_modes(hashes, distinct, modes);
  std::vector<PerceptualHash> snapped;
  for (auto idx : run.snapped_index) snapped.push_back(hashes[idx]);
  run.snapped_objective = objective(snapped, hashes).total;
  run.final_index = run.snapped_index;
  run.final_objective = run.snapped_objective;
  if (cfg.refine) {
    run.swaps = refine_selection(hashes, distinct, run.final_index);
    std::vector<PerceptualHash> refined;
    for (auto idx : run.final_index) refined.push_back(hashes[idx]);
    run.final_objective = objective(refined, hashes).total;
  }
  return run;
}

}  // namespace detail

/// k-modes over binary codes, best of `restarts` by the final objective
/// (lower restart index on ties). Restart r depends only on (seed, r).
inline PoisonSet kmodes_select(std::span<const PerceptualHash> hashes, const KModesConfig& cfg) {
  require(!hashes.empty(), ErrorCode::InsufficientDistinctHashes, "no scene hashes");
  require(cfg.restarts >= 1, ErrorCode::InvalidArgument, "restarts must be at least 1");
  require(cfg.max_iterations >= 1, ErrorCode::InvalidArgument, "max_iterations must be at least 1");
  const auto distinct = distinct_indices(hashes);
  detail::check_population(hashes, cfg.k, distinct);

  std::vector<KModesRun> runs(cfg.restarts);
  parallel_for(cfg.restarts, cfg.workers, [&](std::size_t r) { runs[r] = detail::kmodes_run(hashes, distinct, cfg, r); });

  std::size_t best = 0;
  for (std::size_t r = 1; r < runs.size(); ++r)
    if (runs[r].final_objective < runs[best].final_objective) best = r;
  PoisonSet out;
  out.strategy = Strategy::KModes;
  out.best_restart = best;
  out.source_index = runs[best].final_index;
  for (auto idx : out.source_index) out.hashes.push_back(hashes[idx]);
  out.objective = runs[best].final_objective;
  out.converged = runs[best].converged;
  out.runs = std::move(runs);
  return out;
}

/// Uniform sample of k distinct scene hashes.
inline PoisonSet random_select(std::span<const PerceptualHash> hashes, std::size_t k, std::uint64_t seed) {
  auto distinct = distinct_indices(hashes);
  detail::check_population(hashes, k, distinct);
  Rng rng = make_rng(seed, "random-select");
  for (std::size_t i = 0; i < k; ++i) std::swap(distinct[i], distinct[i + uniform_index(rng, distinct.size() - i)]);
  PoisonSet out;
  out.strategy = Strategy::Random;
  out.source_index.assign(distinct.begin(), distinct.begin() + static_cast<std::ptrdiff_t>(k));
  for (auto idx : out.source_index) out.hashes.push_back(hashes[idx]);
  out.objective = objective(out.hashes, hashes).total;
  return out;
}

inline PoisonSet select_poisons(std::span<const PerceptualHash> hashes, Strategy strategy, KModesConfig cfg) {
  if (strategy == Strategy::KModes) return kmodes_select(hashes, cfg);
  return random_select(hashes, cfg.k, cfg.seed);
}

struct MarkovReport {
  double empirical_miss_rate = 0.0;   // P(min distance >= t)
  double expected_min_over_t = 0.0;   // E[min distance] / t
  bool holds = true;
};

/// Empirical instance of P(m >= t) <= E[m] / t. `t` is in the metric's units.
inline MarkovReport markov_bound_check(std::span<const PerceptualHash> poisons, std::span<const PerceptualHash> scene,
                                       double t, DistanceMetric metric = {}) {
  require(t > 0.0, ErrorCode::InvalidArgument, "t must be positive");
  require(!scene.empty(), ErrorCode::EmptyInput, "empty scene sample");
  const auto obj = objective(poisons, scene);
  const double n = static_cast<double>(scene[0].size());
  std::size_t misses = 0;
  double sum = 0.0;
  for (int d : obj.per_image) {
    const double v = metric.kind == DistanceKind::Hamming ? d : d / n;
    sum += v;
    if (v >= t) ++misses;
  }
  MarkovReport r;
  r.empirical_miss_rate = static_cast<double>(misses) / static_cast<double>(scene.size());
  r.expected_min_over_t = sum / static_cast<double>(scene.size()) / t;
  r.holds = r.empirical_miss_rate <= r.expected_min_over_t + 1e-12;
  return r;
}

// --------------------------------------------------------------------------
// Poison set file: one JSON object per line {"hash","source_index","strategy"}.

inline void save_poisons(const std::filesystem::path& path, const PoisonSet& set) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path);
  require(out.good(), ErrorCode::IoError, "cannot write " + path.string());
  for (std::size_t i = 0; i < set.size(); ++i) {
    nlohmann::ordered_json j;
    j["hash"] = set.hashes[i].to_hex();
    j["source_index"] = set.source_index[i];
    j["strategy"] = std::string(to_string(set.strategy));
    out << j.dump() << '\n';
  }
}

inline PoisonSet load_poisons(const std::filesystem::path& path) {
  std::ifstream in(path);
  require(in.good(), ErrorCode::IoError, "cannot read " + path.string());
  PoisonSet set;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto j = nlohmann::json::parse(line);
    set.hashes.push_back(PerceptualHash::from_hex(j.at("hash").get<std::string>()));
    set.source_index.push_back(j.at("source_index").get<std::size_t>());
    set.strategy = parse_strategy(j.at("strategy").get<std::string>());
  }
  require(!set.hashes.empty(), ErrorCode::EmptyInput, "no poisons in " + path.string());
  return set;
}

}  // namespace csislab
