#pragma once

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "csislab/attack.hpp"
#include "csislab/common.hpp"
#include "csislab/eval.hpp"
#include "csislab/hash_types.hpp"
#include "csislab/poison.hpp"
#include "csislab/rng.hpp"
#include "csislab/scene.hpp"

namespace csislab {

// ==========================================================================
// Flat key=value settings

using Settings = std::map<std::string, std::string>;

namespace detail {

inline std::string trim(std::string_view s) {
  std::size_t a = 0, b = s.size();
  while (a < b && std::isspace(static_cast<unsigned char>(s[a]))) ++a;
  while (b > a && std::isspace(static_cast<unsigned char>(s[b - 1]))) --b;
  return std::string(s.substr(a, b - a));
}

inline std::vector<std::string> split_list(std::string_view s) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : s) {
    if (c == ',') {
      if (auto t = trim(cur); !t.empty()) out.push_back(t);
      cur.clear();
    } else {
      cur += c;
    }
  }
  if (auto t = trim(cur); !t.empty()) out.push_back(t);
  return out;
}

inline std::string fmt_double(double v) {
  char buf[64];
  const auto r = std::to_chars(buf, buf + sizeof buf, v);
  return {buf, r.ptr};
}

template <typename T>
std::string join(const std::vector<T>& v, auto&& fmt) {
  std::string out;
  for (std::size_t i = 0; i < v.size(); ++i) out += (i ? "," : "") + fmt(v[i]);
  return out;
}

}  // namespace detail

/// Parses a number, accepting "a/b" fractions such as 8/255.
inline double parse_number(std::string_view key, std::string_view text) {
  const std::string s = detail::trim(text);
  auto one = [&](std::string_view part) {
    double v = 0.0;
    const auto* end = part.data() + part.size();
    const auto [p, ec] = std::from_chars(part.data(), end, v);
    require(ec == std::errc() && p == end, ErrorCode::InvalidArgument,
            "InvalidConfig: " + std::string(key) + " = '" + s + "' is not a number");
    return v;
  };
  if (const auto slash = s.find('/'); slash != std::string::npos) {
    const double den = one(std::string_view(s).substr(slash + 1));
    require(den != 0.0, ErrorCode::InvalidArgument, "InvalidConfig: " + std::string(key) + " divides by zero");
    return one(std::string_view(s).substr(0, slash)) / den;
  }
  return one(s);
}

inline std::uint64_t parse_count(std::string_view key, std::string_view text) {
  const std::string s = detail::trim(text);
  std::uint64_t v = 0;
  const auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  require(ec == std::errc() && p == s.data() + s.size(), ErrorCode::InvalidArgument,
          "InvalidConfig: " + std::string(key) + " = '" + s + "' is not a non-negative integer");
  return v;
}

/// Reads `key = value` lines; '#' starts a comment.
inline Settings read_settings_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  require(in.good(), ErrorCode::IoError, "cannot read config " + path.string());
  Settings out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.resize(hash);
    const auto t = detail::trim(line);
    if (t.empty()) continue;
    const auto eq = t.find('=');
    require(eq != std::string::npos, ErrorCode::FormatError,
            path.string() + ":" + std::to_string(lineno) + ": expected key = value");
    out[detail::trim(std::string_view(t).substr(0, eq))] = detail::trim(std::string_view(t).substr(eq + 1));
  }
  return out;
}

inline std::string env_name(std::string_view key) {
  std::string out = "CSISLAB_";
  for (char c : key) out += (c == '.' || c == '-') ? '_' : static_cast<char>(std::toupper(static_cast<unsigned char>(c)));
  return out;
}

// ==========================================================================
// Run configuration

struct RunConfig {
  std::string name = "scene-1";
  std::uint64_t seed = 1;
  double scale = 1.0;
  unsigned workers = 1;
  std::filesystem::path out_dir = "out";

  HashFunctionSpec hash = HashFunctionSpec::pdq();
  DistanceMetric metric;
  double target_fpr = 0.01;
  std::optional<double> threshold;

  // Scenario.
  std::uint64_t scene_seed = 1;
  SceneCondition condition;
  std::size_t n_reference = 250;
  std::size_t n_augmented = 5000;
  std::size_t n_user = 500;
  std::size_t db_size = 2000;
  std::size_t n_benign = 2000;
  std::size_t n_detection = 300;
  std::uint64_t corpus_seed = 7;
  int corpus_size = 128;
  AugmentationConfig augmentation;

  // Poisoning and delivery.
  double budget = 0.05;
  Strategy strategy = Strategy::KModes;
  std::size_t restarts = 5;
  std::size_t max_iterations = 100;
  std::size_t pool_size = 0;  // 0 sizes the pool to the poison count
  AttackConfig attack;
  std::size_t candidates = 1;
  std::size_t max_crafted = 0;  // 0 crafts every poison

  SweepSpec sweep;
  std::vector<std::string> reports{"pairwise", "tradeoff", "budget", "cross", "occlusion"};

  // Optional user-supplied datasets; empty means synthetic.
  std::filesystem::path reference_dir, user_dir, illicit_dir, benign_dir, pool_dir;

  ScenarioSpec scenario() const {
    ScenarioSpec s;
    s.name = name;
    s.scene_seed = scene_seed;
    s.n_reference = n_reference;
    s.n_augmented = n_augmented;
    s.n_user = n_user;
    s.db_size = db_size;
    s.n_benign = n_benign;
    s.n_detection = n_detection;
    s.corpus_size = corpus_size;
    s.corpus_seed = corpus_seed;
    s.hash = hash;
    s.augmentation = augmentation;
    s.metric = metric;
    s.target_fpr = target_fpr;
    s.workers = workers;
    return scale == 1.0 ? s : s.scaled(scale);
  }

  std::size_t poison_count() const { return budget_count(scenario(), budget); }

  std::size_t effective_pool_size() const { return pool_size == 0 ? poison_count() : pool_size; }

  /// Throws InvalidArgument naming the offending field.
  void validate() const {
    auto bad = [](bool ok, const std::string& field, const std::string& why) {
      require(ok, ErrorCode::InvalidArgument, "InvalidConfig: " + field + ": " + why);
    };
    hash.validate();
    bad(scale > 0.0, "scale", "must be positive");
    bad(workers >= 1, "workers", "must be at least 1");
    bad(target_fpr >= 0.0 && target_fpr <= 1.0, "target_fpr", "must lie in [0, 1]");
    bad(budget > 0.0 && budget <= 1.0, "budget", "must lie in (0, 1]");
    bad(n_reference >= 1 && n_user >= 1 && db_size >= 1 && n_benign >= 1, "sizes", "populations must be non-empty");
    bad(n_augmented >= n_reference, "n_augmented", "must be at least n_reference");
    bad(corpus_size >= 32, "corpus_size", "must be at least 32");
    bad(restarts >= 1 && max_iterations >= 1, "kmodes", "restarts and max_iterations must be positive");
    bad(candidates >= 1, "attack.candidates", "must be at least 1");
    bad(pool_size == 0 || pool_size >= poison_count(), "pool_size",
        "delivery pool smaller than the poison count " + std::to_string(poison_count()));
    if (threshold) MatchConfig{metric, *threshold}.validate(hash.output_bits);
    attack.validate();
    sweep.validate();
    for (const auto& r : reports)
      bad(r == "pairwise" || r == "tradeoff" || r == "budget" || r == "cross" || r == "occlusion", "reports",
          "unknown report '" + r + "'");
    for (auto [field, dir] : {std::pair{"reference_dir", &reference_dir}, {"user_dir", &user_dir},
                              {"illicit_dir", &illicit_dir}, {"benign_dir", &benign_dir}, {"pool_dir", &pool_dir}})
      bad(dir->empty() || std::filesystem::is_directory(*dir), field, "no such directory '" + dir->string() + "'");
  }

  /// Canonical settings; every key the parser accepts appears once.
  Settings to_settings() const {
    using detail::fmt_double;
    auto num = [](std::uint64_t v) { return std::to_string(v); };
    Settings s;
    s["name"] = name;
    s["seed"] = num(seed);
    s["scale"] = fmt_double(scale);
    s["workers"] = num(workers);
    s["out_dir"] = out_dir.string();
    s["hash"] = std::string(to_string(hash.kind));
    s["hash_bits"] = num(hash.output_bits);
    s["hash_seed"] = num(hash.seed);
    s["metric"] = std::string(to_string(metric.kind));
    s["target_fpr"] = fmt_double(target_fpr);
    s["threshold"] = threshold ? fmt_double(*threshold) : "";
    s["scene_seed"] = num(scene_seed);
    s["condition"] = condition.label();
    s["n_reference"] = num(n_reference);
    s["n_augmented"] = num(n_augmented);
    s["n_user"] = num(n_user);
    s["db_size"] = num(db_size);
    s["n_benign"] = num(n_benign);
    s["n_detection"] = num(n_detection);
    s["corpus_seed"] = num(corpus_seed);
    s["corpus_size"] = num(static_cast<std::uint64_t>(corpus_size));
    s["aug.rotation"] = fmt_double(augmentation.rotation_deg);
    s["aug.translate"] = fmt_double(augmentation.translate_frac);
    s["aug.scale_min"] = fmt_double(augmentation.scale_min);
    s["aug.scale_max"] = fmt_double(augmentation.scale_max);
    s["aug.shear"] = fmt_double(augmentation.shear_deg);
    s["aug.perspective"] = fmt_double(augmentation.perspective_frac);
    s["budget"] = fmt_double(budget);
    s["strategy"] = std::string(to_string(strategy));
    s["kmodes.restarts"] = num(restarts);
    s["kmodes.max_iterations"] = num(max_iterations);
    s["pool_size"] = num(pool_size);
    s["attack.mode"] = std::string(to_string(attack.mode));
    s["attack.linf"] = fmt_double(attack.linf_budget);
    s["attack.sigma"] = fmt_double(attack.nes.sigma);
    s["attack.eta"] = fmt_double(attack.nes.eta);
    s["attack.pairs"] = num(attack.nes.pairs_per_step);
    s["attack.queries"] = num(attack.nes.total_queries);
    s["attack.pg_iterations"] = num(attack.pg.iterations);
    s["attack.pg_step"] = fmt_double(attack.pg.step_size);
    s["attack.candidates"] = num(candidates);
    s["attack.max_crafted"] = num(max_crafted);
    s["sweep.thresholds"] = detail::join(sweep.thresholds, fmt_double);
    s["sweep.budgets"] = detail::join(sweep.budgets, fmt_double);
    s["sweep.strategies"] = detail::join(sweep.strategies, [](Strategy v) { return std::string(to_string(v)); });
    s["sweep.seeds"] = detail::join(sweep.seeds, num);
    s["sweep.tradeoff_budget"] = fmt_double(sweep.tradeoff_budget);
    s["sweep.occlusion"] = detail::join(sweep.occlusion_fractions, fmt_double);
    s["sweep.conditions"] = detail::join(sweep.conditions, [](const SceneCondition& c) { return c.label(); });
    s["sweep.levels"] = detail::join(sweep.levels, [](Level l) { return std::string(to_string(l)); });
    s["sweep.random_pairs"] = num(sweep.random_pairs);
    s["sweep.reports"] = detail::join(reports, [](const std::string& r) { return r; });
    s["reference_dir"] = reference_dir.string();
    s["user_dir"] = user_dir.string();
    s["illicit_dir"] = illicit_dir.string();
    s["benign_dir"] = benign_dir.string();
    s["pool_dir"] = pool_dir.string();
    return s;
  }

  /// Applies settings over the current values; unknown keys are rejected.
  void apply(const Settings& settings) {
    for (const auto& [key, value] : settings) set(key, value);
  }

  void set(const std::string& key, const std::string& value) {
    auto d = [&] { return parse_number(key, value); };
    auto n = [&] { return parse_count(key, value); };
    auto doubles = [&] {
      std::vector<double> v;
      for (const auto& x : detail::split_list(value)) v.push_back(parse_number(key, x));
      return v;
    };
    try {
      if (key == "name") name = value;
      else if (key == "seed") seed = n();
      else if (key == "scale") scale = d();
      else if (key == "workers") workers = static_cast<unsigned>(n());
      else if (key == "out_dir") out_dir = value;
      else if (key == "hash") {
        hash.kind = parse_hash_kind(value);
        if (hash.kind == HashKind::Pdq) hash.output_bits = 256;
      } else if (key == "hash_bits") hash.output_bits = n();
      else if (key == "hash_seed") hash.seed = n();
      else if (key == "metric") metric.kind = parse_distance_kind(value);
      else if (key == "target_fpr") target_fpr = d();
      else if (key == "threshold") threshold = value.empty() ? std::nullopt : std::optional<double>(d());
      else if (key == "scene_seed") scene_seed = n();
      else if (key == "condition") condition = SceneCondition::parse(value);
      else if (key == "n_reference") n_reference = n();
      else if (key == "n_augmented") n_augmented = n();
      else if (key == "n_user") n_user = n();
      else if (key == "db_size") db_size = n();
      else if (key == "n_benign") n_benign = n();
      else if (key == "n_detection") n_detection = n();
      else if (key == "corpus_seed") corpus_seed = n();
      else if (key == "corpus_size") corpus_size = static_cast<int>(n());
      else if (key == "aug.rotation") augmentation.rotation_deg = d();
      else if (key == "aug.translate") augmentation.translate_frac = d();
      else if (key == "aug.scale_min") augmentation.scale_min = d();
      else if (key == "aug.scale_max") augmentation.scale_max = d();
      else if (key == "aug.shear") augmentation.shear_deg = d();
      else if (key == "aug.perspective") augmentation.perspective_frac = d();
      else if (key == "budget") budget = d();
      else if (key == "strategy") strategy = parse_strategy(value);
      else if (key == "kmodes.restarts") sweep.kmodes_restarts = restarts = n();
      else if (key == "kmodes.max_iterations") sweep.kmodes_max_iterations = max_iterations = n();
      else if (key == "pool_size") pool_size = n();
      else if (key == "attack.mode") attack.mode = parse_attack_mode(value);
      else if (key == "attack.linf") attack.linf_budget = d();
      else if (key == "attack.sigma") attack.nes.sigma = d();
      else if (key == "attack.eta") attack.nes.eta = d();
      else if (key == "attack.pairs") attack.nes.pairs_per_step = n();
      else if (key == "attack.queries") attack.nes.total_queries = n();
      else if (key == "attack.pg_iterations") attack.pg.iterations = n();
      else if (key == "attack.pg_step") attack.pg.step_size = d();
      else if (key == "attack.candidates") candidates = n();
      else if (key == "attack.max_crafted") max_crafted = n();
      else if (key == "sweep.thresholds") sweep.thresholds = doubles();
      else if (key == "sweep.budgets") sweep.budgets = doubles();
      else if (key == "sweep.strategies") {
        sweep.strategies.clear();
        for (const auto& x : detail::split_list(value)) sweep.strategies.push_back(parse_strategy(x));
      } else if (key == "sweep.seeds") {
        sweep.seeds.clear();
        for (const auto& x : detail::split_list(value)) sweep.seeds.push_back(parse_count(key, x));
      } else if (key == "sweep.tradeoff_budget") sweep.tradeoff_budget = d();
      else if (key == "sweep.occlusion") sweep.occlusion_fractions = doubles();
      else if (key == "sweep.conditions") {
        sweep.conditions.clear();
        for (const auto& x : detail::split_list(value)) sweep.conditions.push_back(SceneCondition::parse(x));
      } else if (key == "sweep.levels") {
        sweep.levels.clear();
        for (const auto& x : detail::split_list(value)) sweep.levels.push_back(parse_level(x));
      } else if (key == "sweep.random_pairs") sweep.random_pairs = n();
      else if (key == "sweep.reports") reports = detail::split_list(value);
      else if (key == "reference_dir") reference_dir = value;
      else if (key == "user_dir") user_dir = value;
      else if (key == "illicit_dir") illicit_dir = value;
      else if (key == "benign_dir") benign_dir = value;
      else if (key == "pool_dir") pool_dir = value;
      else throw Error(ErrorCode::InvalidArgument, "InvalidConfig: unknown key '" + key + "'");
    } catch (const std::invalid_argument&) {
      throw Error(ErrorCode::InvalidArgument, "InvalidConfig: " + key + " = '" + value + "'");
    } catch (const std::out_of_range&) {
      throw Error(ErrorCode::InvalidArgument, "InvalidConfig: " + key + " = '" + value + "'");
    }
  }

  /// key = value text in sorted key order.
  std::string serialize() const {
    std::string out;
    for (const auto& [k, v] : to_settings()) out += k + " = " + v + "\n";
    return out;
  }

  /// 16-hex-digit digest of the canonical settings, excluding keys that do
  /// not change results (worker count, output directory).
  std::string digest() const {
    auto s = to_settings();
    s.erase("workers");
    s.erase("out_dir");
    std::string text;
    for (const auto& [k, v] : s) text += k + '=' + v + '\n';
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(fnv1a64(text)));
    return buf;
  }
};

/// Resolution order, lowest first: defaults, config file, CSISLAB_* variables,
/// explicit overrides.
inline RunConfig resolve_config(const std::optional<std::filesystem::path>& file, const Settings& overrides,
                                const Settings& environment = {}) {
  RunConfig cfg;
  if (file) cfg.apply(read_settings_file(*file));
  cfg.apply(environment);
  cfg.apply(overrides);
  return cfg;
}

/// CSISLAB_* variables that map onto known keys.
inline Settings settings_from_env() {
  Settings out;
  for (const auto& [key, value] : RunConfig{}.to_settings()) {
    (void)value;
    if (const char* v = std::getenv(env_name(key).c_str())) out[key] = v;
  }
  return out;
}

}  // namespace csislab
