#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "csislab/augment.hpp"
#include "csislab/common.hpp"
#include "csislab/hash_types.hpp"
#include "csislab/hasher.hpp"
#include "csislab/matcher.hpp"
#include "csislab/parallel.hpp"
#include "csislab/poison.hpp"
#include "csislab/rng.hpp"
#include "csislab/scene.hpp"
#include "csislab/transforms.hpp"

namespace csislab {

// ==========================================================================
// Metrics

/// Per-query min hamming distance to an arbitrary hash list.
inline std::vector<int> min_distances(std::span<const PerceptualHash> queries, std::span<const PerceptualHash> set,
                                      unsigned workers = 1) {
  require(!set.empty(), ErrorCode::EmptyDatabase, "empty hash set");
  std::vector<int> out(queries.size());
  parallel_for(queries.size(), workers, [&](std::size_t i) {
    int best = std::numeric_limits<int>::max();
    for (const auto& h : set) {
      best = std::min(best, hamming(queries[i], h));
      if (best == 0) break;
    }
    out[i] = best;
  });
  return out;
}

inline std::vector<int> elementwise_min(std::span<const int> a, std::span<const int> b) {
  require(a.size() == b.size(), ErrorCode::LengthMismatch, "profile sizes differ");
  std::vector<int> out(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) out[i] = std::min(a[i], b[i]);
  return out;
}

inline double surveillance_rate(std::span<const PerceptualHash> user, const HashDatabase& db, const MatchConfig& cfg,
                                unsigned workers = 1) {
  require(!user.empty(), ErrorCode::EmptyInput, "EmptyUserSet: no user images");
  cfg.validate(db.bits());
  return flagged_fraction(min_distances(user, db, workers), db.bits(), cfg);
}

/// Fraction of illicit stand-ins still flagged after one random variation
/// each (image i uses seed derive_seed(seed, "variation", i)).
inline double csis_detection_rate(std::span<const LumaImage> illicit, const HashDatabase& db,
                                  const VariationLevel& level, const MatchConfig& cfg, std::uint64_t seed,
                                  const Hasher& hasher, unsigned workers = 1) {
  require(!illicit.empty(), ErrorCode::EmptyInput, "no illicit images");
  std::vector<PerceptualHash> varied(illicit.size());
  parallel_for(illicit.size(), workers, [&](std::size_t i) {
    varied[i] = hasher(apply_variation(illicit[i], level, derive_seed(seed, "variation", i)));
  });
  return flagged_fraction(min_distances(varied, db, workers), db.bits(), cfg);
}

// ==========================================================================
// Reports

/// One report row. Empty optionals and strings print as empty CSV cells.
struct EvalRow {
  std::string report;
  std::string scenario;
  std::string hash_kind;
  std::optional<double> threshold;
  std::optional<int> hamming_threshold;
  std::optional<std::size_t> budget;
  std::optional<double> budget_fraction;
  std::string strategy;
  std::string ref_condition;
  std::string user_condition;
  std::string variation_level;
  std::optional<double> occlusion_fraction;
  std::string pair_mode;
  std::string seed;
  std::size_t n_seeds = 1;
  std::optional<double> surveillance_rate;
  std::optional<double> surveillance_std;
  std::optional<double> fpr;
  std::optional<double> fpr_std;
  std::optional<double> csis_detection_rate;
  std::optional<double> csis_detection_std;
  std::optional<double> pair_rate;
};

inline constexpr std::array<std::string_view, 22> kReportColumns{
    "report",        "scenario",           "hash_kind",          "threshold",        "hamming_threshold",
    "budget",        "budget_fraction",    "strategy",           "ref_condition",    "user_condition",
    "variation_level", "occlusion_fraction", "pair_mode",        "seed",             "n_seeds",
    "surveillance_rate", "surveillance_std", "fpr",              "fpr_std",          "csis_detection_rate",
    "csis_detection_std", "pair_rate"};

namespace detail {

inline std::string fmt(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.6f", v);
  return buf;
}

inline std::string cell(const std::optional<double>& v) { return v ? fmt(*v) : std::string(); }

template <typename T>
std::string cell_int(const std::optional<T>& v) {
  return v ? std::to_string(*v) : std::string();
}

inline std::vector<std::string> cells(const EvalRow& r) {
  return {r.report,
          r.scenario,
          r.hash_kind,
          cell(r.threshold),
          cell_int(r.hamming_threshold),
          cell_int(r.budget),
          cell(r.budget_fraction),
          r.strategy,
          r.ref_condition,
          r.user_condition,
          r.variation_level,
          cell(r.occlusion_fraction),
          r.pair_mode,
          r.seed,
          std::to_string(r.n_seeds),
          cell(r.surveillance_rate),
          cell(r.surveillance_std),
          cell(r.fpr),
          cell(r.fpr_std),
          cell(r.csis_detection_rate),
          cell(r.csis_detection_std),
          cell(r.pair_rate)};
}

inline double mean_of(const std::vector<double>& v) {
  double s = 0.0;
  for (double x : v) s += x;
  return s / static_cast<double>(v.size());
}

inline double stdev_of(const std::vector<double>& v) {
  if (v.size() < 2) return 0.0;
  const double m = mean_of(v);
  double s = 0.0;
  for (double x : v) s += (x - m) * (x - m);
  return std::sqrt(s / static_cast<double>(v.size() - 1));
}

}  // namespace detail

struct EvalReport {
  std::vector<EvalRow> rows;

  void append(const EvalReport& other) { rows.insert(rows.end(), other.rows.begin(), other.rows.end()); }

  /// Adds a "mean" row (sample stdev in the *_std columns) for every group of
  /// per-seed rows sharing all other key columns, in order of first appearance.
  void add_means() {
    std::vector<std::string> order;
    std::map<std::string, std::vector<const EvalRow*>> groups;
    for (const auto& r : rows) {
      if (r.seed == "mean") continue;
      auto key_cells = detail::cells(r);
      std::string key;
      for (std::size_t c = 0; c < 13; ++c) key += key_cells[c] + '\x1f';
      if (!groups.contains(key)) order.push_back(key);
      groups[key].push_back(&r);
    }
    std::vector<EvalRow> means;
    for (const auto& key : order) {
      const auto& g = groups[key];
      EvalRow m = *g.front();
      m.seed = "mean";
      m.n_seeds = g.size();
      auto agg = [&](std::optional<double> EvalRow::*field, std::optional<double> EvalRow::*std_field) {
        std::vector<double> v;
        for (const auto* r : g)
          if ((r->*field).has_value()) v.push_back(*(r->*field));
        if (v.empty()) return;
        m.*field = detail::mean_of(v);
        if (std_field) m.*std_field = detail::stdev_of(v);
      };
      agg(&EvalRow::surveillance_rate, &EvalRow::surveillance_std);
      agg(&EvalRow::fpr, &EvalRow::fpr_std);
      agg(&EvalRow::csis_detection_rate, &EvalRow::csis_detection_std);
      agg(&EvalRow::pair_rate, nullptr);
      means.push_back(std::move(m));
    }
    rows.insert(rows.end(), means.begin(), means.end());
  }

  std::string to_csv() const {
    std::ostringstream out;
    for (std::size_t c = 0; c < kReportColumns.size(); ++c) out << (c ? "," : "") << kReportColumns[c];
    out << '\n';
    for (const auto& r : rows) {
      const auto cs = detail::cells(r);
      for (std::size_t c = 0; c < cs.size(); ++c) out << (c ? "," : "") << cs[c];
      out << '\n';
    }
    return out.str();
  }

  nlohmann::ordered_json to_json() const {
    auto arr = nlohmann::ordered_json::array();
    for (const auto& r : rows) {
      const auto cs = detail::cells(r);
      nlohmann::ordered_json j;
      for (std::size_t c = 0; c < cs.size(); ++c) {
        if (cs[c].empty()) {
          j[std::string(kReportColumns[c])] = nullptr;
        } else {
          j[std::string(kReportColumns[c])] = cs[c];
        }
      }
      arr.push_back(std::move(j));
    }
    return arr;
  }

  /// Writes <stem>.csv and <stem>.json.
  void save(const std::filesystem::path& stem) const {
    if (stem.has_parent_path()) std::filesystem::create_directories(stem.parent_path());
    std::ofstream csv(stem.string() + ".csv", std::ios::binary);
    require(csv.good(), ErrorCode::IoError, "cannot write " + stem.string() + ".csv");
    csv << to_csv();
    std::ofstream js(stem.string() + ".json", std::ios::binary);
    js << to_json().dump(2) << '\n';
  }
};

// ==========================================================================
// Scenarios

/// Desk-scale defaults; `scaled(f)` multiplies every population size.
struct ScenarioSpec {
  std::string name = "scene-1";
  std::uint64_t scene_seed = 1;
  SceneConfig scene;
  std::size_t n_reference = 250;
  std::size_t n_augmented = 5000;
  std::size_t n_user = 500;
  std::size_t db_size = 2000;  // legitimate entries |C|
  std::size_t n_benign = 2000;
  std::size_t n_detection = 300;
  int corpus_size = 128;
  std::uint64_t corpus_seed = 7;
  HashFunctionSpec hash = HashFunctionSpec::pdq();
  AugmentationConfig augmentation;
  DistanceMetric metric;
  double target_fpr = 0.01;
  unsigned workers = 1;

  ScenarioSpec scaled(double factor) const {
    require(factor > 0.0, ErrorCode::InvalidArgument, "scale must be positive");
    ScenarioSpec s = *this;
    auto mul = [&](std::size_t v) { return std::max<std::size_t>(1, static_cast<std::size_t>(std::llround(v * factor))); };
    s.n_reference = mul(n_reference);
    s.n_augmented = std::max(mul(n_augmented), s.n_reference);
    s.n_user = mul(n_user);
    s.db_size = mul(db_size);
    s.n_benign = mul(n_benign);
    s.n_detection = std::min(mul(n_detection), s.db_size);
    return s;
  }
};

/// Scene-independent CSIS state: the legitimate database, benign corpus,
/// calibrated threshold and the illicit stand-ins used for detection.
struct CsisContext {
  Hasher hasher;
  std::vector<PerceptualHash> legit_hashes;
  HashDatabase legit_db;
  std::vector<LumaImage> detection_images;
  std::vector<PerceptualHash> benign_hashes;
  std::vector<int> benign_min_legit;
  Calibration calibration;

  MatchConfig calibrated(DistanceMetric metric) const { return {metric, calibration.threshold}; }
};

inline CsisContext build_context(const ScenarioSpec& spec) {
  CsisContext ctx{Hasher(spec.hash), {}, HashDatabase(spec.hash), {}, {}, {}, {}};
  const CorpusSpec illicit{CorpusRole::IllicitStandin, spec.db_size, spec.corpus_seed, spec.corpus_size,
                           spec.corpus_size};
  const CorpusSpec benign{CorpusRole::Benign, spec.n_benign, spec.corpus_seed, spec.corpus_size, spec.corpus_size};
  ctx.legit_hashes.resize(spec.db_size);
  ctx.detection_images.resize(std::min(spec.n_detection, spec.db_size));
  parallel_for(spec.db_size, spec.workers, [&](std::size_t i) {
    const LumaImage img = synth_corpus_image(illicit, i);
    ctx.legit_hashes[i] = ctx.hasher(img);
    if (i < ctx.detection_images.size()) ctx.detection_images[i] = img;
  });
  ctx.legit_db = db_build(ctx.legit_hashes, Provenance::Legitimate, spec.hash);
  ctx.benign_hashes.resize(spec.n_benign);
  parallel_for(spec.n_benign, spec.workers,
               [&](std::size_t i) { ctx.benign_hashes[i] = ctx.hasher(synth_corpus_image(benign, i)); });
  ctx.benign_min_legit = min_distances(ctx.benign_hashes, ctx.legit_db, spec.workers);
  ctx.calibration = calibrate_threshold(ctx.benign_min_legit, spec.hash.output_bits, spec.target_fpr, spec.metric);
  return ctx;
}

/// Hashed scene captures for one (condition, seed): the augmented reference
/// set the attacker clusters and the held-out user set.
struct SceneHashes {
  std::vector<PerceptualHash> reference;  // augmented
  std::vector<PerceptualHash> user;
  std::vector<LumaImage> user_images;     // kept only on request
};

inline SceneHashes scene_hashes(const ScenarioSpec& spec, const Hasher& hasher, const SceneCondition& condition,
                                std::uint64_t seed, bool keep_user_images = false) {
  const auto ds = synth_scene(spec.scene_seed, condition, spec.n_reference, spec.n_user, spec.scene, spec.workers,
                              derive_seed(seed, "captures/" + spec.name));
  SceneHashes out;
  AugmentationConfig aug = spec.augmentation;
  aug.target_count = std::max(spec.n_augmented, ds.reference.size());
  aug.seed = derive_seed(seed, "augment/" + spec.name + "/" + condition.label());
  out.reference.resize(aug.target_count);
  augment_visit(ds.reference, aug, [&](std::size_t i, const LumaImage& img) { out.reference[i] = hasher(img); },
                spec.workers);
  out.user.resize(ds.user.size());
  parallel_for(ds.user.size(), spec.workers, [&](std::size_t i) { out.user[i] = hasher(ds.user[i]); });
  if (keep_user_images) out.user_images = ds.user;
  return out;
}

// ==========================================================================
// Sweeps

struct SweepSpec {
  std::vector<double> thresholds;  // empty: every achievable threshold
  std::vector<double> budgets{0.01, 0.05, 0.10, 0.20};  // fractions of |C|
  std::vector<Strategy> strategies{Strategy::KModes, Strategy::Random};
  std::vector<std::uint64_t> seeds{1, 2, 3};
  std::size_t kmodes_restarts = 5;
  std::size_t kmodes_max_iterations = 100;
  double tradeoff_budget = 0.05;
  std::vector<double> occlusion_fractions{0.0, 0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9, 1.0};
  std::vector<SceneCondition> conditions{{ConditionKind::Base, 0},
                                         {ConditionKind::Lighting, 1},
                                         {ConditionKind::Layout, 1}};
  std::vector<Level> levels{Level::Low, Level::Medium, Level::High};
  std::size_t random_pairs = 100000;

  void validate() const {
    require(!seeds.empty() && !budgets.empty() && !strategies.empty(), ErrorCode::InvalidArgument,
            "sweep grids must be non-empty");
    require(std::is_sorted(thresholds.begin(), thresholds.end()), ErrorCode::InvalidArgument,
            "thresholds must be sorted");
    require(std::is_sorted(budgets.begin(), budgets.end()), ErrorCode::InvalidArgument, "budgets must be sorted");
    require(std::is_sorted(occlusion_fractions.begin(), occlusion_fractions.end()), ErrorCode::InvalidArgument,
            "occlusion fractions must be sorted");
  }
};

inline std::size_t budget_count(const ScenarioSpec& spec, double fraction) {
  return std::max<std::size_t>(1, static_cast<std::size_t>(std::llround(fraction * static_cast<double>(spec.db_size))));
}

inline PoisonSet choose_poisons(const ScenarioSpec& spec, const SweepSpec& sweep, std::span<const PerceptualHash> scene,
                                Strategy strategy, std::size_t k, std::uint64_t seed) {
  KModesConfig cfg;
  cfg.k = k;
  cfg.restarts = sweep.kmodes_restarts;
  cfg.max_iterations = sweep.kmodes_max_iterations;
  // Random draws share one seed across budgets, so smaller sets are prefixes
  // of larger ones.
  cfg.seed = strategy == Strategy::Random ? derive_seed(seed, "poison/" + spec.name)
                                          : derive_seed(seed, "poison/" + spec.name, k);
  cfg.workers = spec.workers;
  return select_poisons(scene, strategy, cfg);
}

/// Scene hashes and poison sets shared between reports of one sweep run.
/// Entries depend only on their key, so reuse leaves every report unchanged.
struct SweepCache {
  std::map<std::string, SceneHashes> scenes;
  std::map<std::string, PoisonSet> poisons;
};

inline const SceneHashes& cached_scene(SweepCache& cache, const ScenarioSpec& spec, const Hasher& hasher,
                                       const SceneCondition& condition, std::uint64_t seed) {
  const std::string key = condition.label() + "/" + std::to_string(seed);
  auto it = cache.scenes.find(key);
  if (it == cache.scenes.end()) it = cache.scenes.emplace(key, scene_hashes(spec, hasher, condition, seed)).first;
  return it->second;
}

inline const PoisonSet& cached_poisons(SweepCache& cache, const ScenarioSpec& spec, const SweepSpec& sweep,
                                       const SceneCondition& condition, std::span<const PerceptualHash> scene,
                                       Strategy strategy, std::size_t k, std::uint64_t seed) {
  const std::string key = condition.label() + "/" + std::string(to_string(strategy)) + "/" + std::to_string(k) + "/" +
                          std::to_string(seed);
  auto it = cache.poisons.find(key);
  if (it == cache.poisons.end())
    it = cache.poisons.emplace(key, choose_poisons(spec, sweep, scene, strategy, k, seed)).first;
  return it->second;
}

namespace detail {

inline EvalRow base_row(std::string report, const ScenarioSpec& spec, std::uint64_t seed) {
  EvalRow r;
  r.report = std::move(report);
  r.scenario = spec.name;
  r.hash_kind = std::string(to_string(spec.hash.kind));
  r.seed = std::to_string(seed);
  return r;
}

inline void set_threshold(EvalRow& r, const MatchConfig& cfg, std::size_t bits) {
  r.threshold = cfg.threshold;
  r.hamming_threshold = cfg.metric.kind == DistanceKind::Hamming
                            ? static_cast<int>(cfg.threshold)
                            : static_cast<int>(std::floor(cfg.threshold * static_cast<double>(bits) + 1e-9));
}

// Varied illicit hashes for one level and seed.
inline std::vector<PerceptualHash> varied_hashes(const CsisContext& ctx, Level level, std::uint64_t seed,
                                                 unsigned workers) {
  const auto vl = VariationLevel::of(level);
  std::vector<PerceptualHash> out(ctx.detection_images.size());
  const std::uint64_t s = derive_seed(seed, "detection/" + std::string(to_string(level)));
  parallel_for(out.size(), workers, [&](std::size_t i) {
    out[i] = ctx.hasher(apply_variation(ctx.detection_images[i], vl, derive_seed(s, "variation", i)));
  });
  return out;
}

}  // namespace detail

/// Surveillance and FPR per (budget, strategy, seed) at the calibrated threshold.
inline EvalReport budget_sweep(const ScenarioSpec& spec, const SweepSpec& sweep, const CsisContext& ctx,
                               SweepCache* shared = nullptr) {
  sweep.validate();
  SweepCache local;
  SweepCache& cache = shared ? *shared : local;
  EvalReport rep;
  const MatchConfig cfg = ctx.calibrated(spec.metric);
  const std::size_t bits = spec.hash.output_bits;
  for (auto seed : sweep.seeds) {
    const auto& sh = cached_scene(cache, spec, ctx.hasher, {}, seed);
    const auto user_legit = min_distances(sh.user, ctx.legit_db, spec.workers);
    for (double frac : sweep.budgets) {
      const std::size_t k = budget_count(spec, frac);
      for (auto strategy : sweep.strategies) {
        const auto& poisons = cached_poisons(cache, spec, sweep, {}, sh.reference, strategy, k, seed);
        const auto user = elementwise_min(user_legit, min_distances(sh.user, poisons.hashes, spec.workers));
        const auto benign =
            elementwise_min(ctx.benign_min_legit, min_distances(ctx.benign_hashes, poisons.hashes, spec.workers));
        auto row = detail::base_row("budget", spec, seed);
        detail::set_threshold(row, cfg, bits);
        row.budget = k;
        row.budget_fraction = frac;
        row.strategy = std::string(to_string(strategy));
        row.ref_condition = row.user_condition = "base";
        row.surveillance_rate = flagged_fraction(user, bits, cfg);
        row.fpr = flagged_fraction(benign, bits, cfg);
        rep.rows.push_back(std::move(row));
      }
    }
  }
  rep.add_means();
  return rep;
}

/// Surveillance, FPR and per-level detection at every threshold.
inline EvalReport tradeoff_sweep(const ScenarioSpec& spec, const SweepSpec& sweep, const CsisContext& ctx,
                                 SweepCache* shared = nullptr) {
  sweep.validate();
  SweepCache local;
  SweepCache& cache = shared ? *shared : local;
  EvalReport rep;
  const std::size_t bits = spec.hash.output_bits;
  const auto grid = sweep.thresholds.empty() ? threshold_grid(bits, spec.metric) : sweep.thresholds;
  const std::size_t k = budget_count(spec, sweep.tradeoff_budget);
  for (auto seed : sweep.seeds) {
    const auto& sh = cached_scene(cache, spec, ctx.hasher, {}, seed);
    const auto& poisons = cached_poisons(cache, spec, sweep, {}, sh.reference, Strategy::KModes, k, seed);
    const auto user = elementwise_min(min_distances(sh.user, ctx.legit_db, spec.workers),
                                      min_distances(sh.user, poisons.hashes, spec.workers));
    const auto benign =
        elementwise_min(ctx.benign_min_legit, min_distances(ctx.benign_hashes, poisons.hashes, spec.workers));
    std::vector<std::vector<int>> detect;
    for (auto level : sweep.levels) {
      const auto varied = detail::varied_hashes(ctx, level, seed, spec.workers);
      detect.push_back(elementwise_min(min_distances(varied, ctx.legit_db, spec.workers),
                                       min_distances(varied, poisons.hashes, spec.workers)));
    }
    for (double t : grid) {
      const MatchConfig cfg{spec.metric, t};
      cfg.validate(bits);
      const double surv = flagged_fraction(user, bits, cfg);
      const double fp = flagged_fraction(benign, bits, cfg);
      for (std::size_t l = 0; l < sweep.levels.size(); ++l) {
        auto row = detail::base_row("tradeoff", spec, seed);
        detail::set_threshold(row, cfg, bits);
        row.budget = k;
        row.budget_fraction = sweep.tradeoff_budget;
        row.strategy = "kmodes";
        row.ref_condition = row.user_condition = "base";
        row.variation_level = std::string(to_string(sweep.levels[l]));
        row.surveillance_rate = surv;
        row.fpr = fp;
        row.csis_detection_rate = flagged_fraction(detect[l], bits, cfg);
        rep.rows.push_back(std::move(row));
      }
    }
  }
  rep.add_means();
  return rep;
}

/// Poisons chosen under each reference condition, evaluated on every user
/// condition.
inline EvalReport cross_condition_matrix(const ScenarioSpec& spec, const SweepSpec& sweep, const CsisContext& ctx,
                                         SweepCache* shared = nullptr) {
  sweep.validate();
  SweepCache local;
  SweepCache& cache = shared ? *shared : local;
  require(sweep.conditions.size() >= 2, ErrorCode::InvalidArgument, "cross-condition needs at least two conditions");
  EvalReport rep;
  const MatchConfig cfg = ctx.calibrated(spec.metric);
  const std::size_t bits = spec.hash.output_bits;
  const std::size_t k = budget_count(spec, sweep.tradeoff_budget);
  for (auto seed : sweep.seeds) {
    std::vector<const SceneHashes*> per;
    for (const auto& c : sweep.conditions) per.push_back(&cached_scene(cache, spec, ctx.hasher, c, seed));
    std::vector<std::vector<int>> user_legit;
    for (const auto* p : per) user_legit.push_back(min_distances(p->user, ctx.legit_db, spec.workers));
    for (std::size_t r = 0; r < per.size(); ++r) {
      const auto& poisons =
          cached_poisons(cache, spec, sweep, sweep.conditions[r], per[r]->reference, Strategy::KModes, k, seed);
      const auto benign =
          elementwise_min(ctx.benign_min_legit, min_distances(ctx.benign_hashes, poisons.hashes, spec.workers));
      const double fp = flagged_fraction(benign, bits, cfg);
      for (std::size_t u = 0; u < per.size(); ++u) {
        const auto user = elementwise_min(user_legit[u], min_distances(per[u]->user, poisons.hashes, spec.workers));
        auto row = detail::base_row("cross", spec, seed);
        detail::set_threshold(row, cfg, bits);
        row.budget = k;
        row.budget_fraction = sweep.tradeoff_budget;
        row.strategy = "kmodes";
        row.ref_condition = sweep.conditions[r].label();
        row.user_condition = sweep.conditions[u].label();
        row.surveillance_rate = flagged_fraction(user, bits, cfg);
        row.fpr = fp;
        rep.rows.push_back(std::move(row));
      }
    }
  }
  rep.add_means();
  return rep;
}

/// Surveillance when one occluder covers a growing share of every user frame;
/// poisons come from the unoccluded scene. Without an explicit occluder each
/// seed draws one synthetic person.
inline EvalReport occlusion_curve(const ScenarioSpec& spec, const SweepSpec& sweep, const CsisContext& ctx,
                                  SweepCache* shared = nullptr, const LumaImage* occluder = nullptr) {
  sweep.validate();
  SweepCache local;
  SweepCache& cache = shared ? *shared : local;
  EvalReport rep;
  const MatchConfig cfg = ctx.calibrated(spec.metric);
  const std::size_t bits = spec.hash.output_bits;
  const std::size_t k = budget_count(spec, sweep.tradeoff_budget);
  for (auto seed : sweep.seeds) {
    const auto& sh = cached_scene(cache, spec, ctx.hasher, {}, seed);
    const auto& poisons = cached_poisons(cache, spec, sweep, {}, sh.reference, Strategy::KModes, k, seed);
    // User captures do not depend on the reference count, so one reference
    // frame is enough to regenerate them.
    const auto user_images = synth_scene(spec.scene_seed, {}, 1, spec.n_user, spec.scene, spec.workers,
                                         derive_seed(seed, "captures/" + spec.name))
                                 .user;
    const auto benign =
        elementwise_min(ctx.benign_min_legit, min_distances(ctx.benign_hashes, poisons.hashes, spec.workers));
    const double fp = flagged_fraction(benign, bits, cfg);
    const LumaImage person = occluder ? *occluder : synth_person(derive_seed(seed, "person"));
    for (double f : sweep.occlusion_fractions) {
      std::vector<PerceptualHash> occluded(user_images.size());
      parallel_for(occluded.size(), spec.workers, [&](std::size_t i) {
        occluded[i] = ctx.hasher(composite_foreground(user_images[i], person, f));
      });
      const auto user = elementwise_min(min_distances(occluded, ctx.legit_db, spec.workers),
                                        min_distances(occluded, poisons.hashes, spec.workers));
      auto row = detail::base_row("occlusion", spec, seed);
      detail::set_threshold(row, cfg, bits);
      row.budget = k;
      row.budget_fraction = sweep.tradeoff_budget;
      row.strategy = "kmodes";
      row.ref_condition = row.user_condition = "base";
      row.occlusion_fraction = f;
      row.surveillance_rate = flagged_fraction(user, bits, cfg);
      row.fpr = fp;
      rep.rows.push_back(std::move(row));
    }
  }
  rep.add_means();
  return rep;
}

/// Fraction of benign pairs within each threshold, for both pair sampling
/// modes.
inline EvalReport pairwise_report(const ScenarioSpec& spec, const SweepSpec& sweep, const CsisContext& ctx) {
  EvalReport rep;
  const std::uint64_t seed = sweep.seeds.empty() ? 0 : sweep.seeds.front();
  for (auto mode : {PairMode::AllPairs, PairMode::RandomPairs}) {
    const auto curve = pairwise_curve(ctx.benign_hashes, mode, sweep.random_pairs, seed, spec.metric);
    for (std::size_t k = 0; k < curve.curve.size(); ++k) {
      auto row = detail::base_row("pairwise", spec, seed);
      row.threshold = curve.curve[k].threshold;
      row.hamming_threshold = static_cast<int>(k);
      row.pair_mode = std::string(to_string(mode));
      row.pair_rate = curve.curve[k].rate;
      rep.rows.push_back(std::move(row));
    }
  }
  return rep;
}

}  // namespace csislab
