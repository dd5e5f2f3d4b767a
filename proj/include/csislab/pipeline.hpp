#pragma once

#include <chrono>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "csislab/attack.hpp"
#include "csislab/config.hpp"
#include "csislab/eval.hpp"
#include "csislab/image_io.hpp"
#include "csislab/matcher.hpp"
#include "csislab/poison.hpp"
#include "csislab/scene.hpp"

namespace csislab {

/// Receives one structured record per event.
using LogSink = std::function<void(const nlohmann::ordered_json&)>;

/// Writes each record as one JSON line on stderr.
inline LogSink stderr_log() {
  return [](const nlohmann::ordered_json& j) { std::cerr << j.dump() << '\n'; };
}

inline LogSink null_log() {
  return [](const nlohmann::ordered_json&) {};
}

inline const std::vector<std::string>& pipeline_stages() {
  static const std::vector<std::string> stages{"profile", "augment", "hash", "poison-select", "craft", "inject",
                                               "evaluate"};
  return stages;
}

/// Raised when a stage fails; carries the stage name and the underlying error.
class StageError : public std::runtime_error {
 public:
  StageError(std::string stage, ErrorCode code, const std::string& what)
      : std::runtime_error(stage + ": " + what), stage_(std::move(stage)), code_(code) {}

  const std::string& stage() const noexcept { return stage_; }
  ErrorCode code() const noexcept { return code_; }

  nlohmann::ordered_json record() const {
    nlohmann::ordered_json j;
    j["event"] = "error";
    j["stage"] = stage_;
    j["code"] = std::string(error_code_name(code_));
    j["message"] = what();
    return j;
  }

 private:
  std::string stage_;
  ErrorCode code_;
};

struct PipelineResult {
  std::filesystem::path run_dir;
  std::string digest;
  EvalReport report;
  bool dry_run = false;
};

// --------------------------------------------------------------------------
// Hash list files: one hex hash per line, optionally followed by a label.

inline void save_hash_list(const std::filesystem::path& path, std::span<const PerceptualHash> hashes,
                           std::span<const std::string> labels = {}) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path);
  require(out.good(), ErrorCode::IoError, "cannot write " + path.string());
  for (std::size_t i = 0; i < hashes.size(); ++i) {
    out << hashes[i].to_hex();
    if (i < labels.size()) out << ' ' << labels[i];
    out << '\n';
  }
}

inline std::vector<PerceptualHash> load_hash_list(const std::filesystem::path& path) {
  std::ifstream in(path);
  require(in.good(), ErrorCode::IoError, "cannot read " + path.string());
  std::vector<PerceptualHash> out;
  std::string line;
  while (std::getline(in, line)) {
    std::istringstream ss(line);
    std::string hex;
    if (!(ss >> hex) || hex.front() == '#') continue;
    out.push_back(PerceptualHash::from_hex(hex));
  }
  require(!out.empty(), ErrorCode::EmptyInput, "no hashes in " + path.string());
  return out;
}

namespace detail {

inline std::string indexed_name(std::string_view prefix, std::size_t i, std::string_view ext = ".png") {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%06zu", i);
  return std::string(prefix) + buf + std::string(ext);
}

inline nlohmann::ordered_json plan_json(const RunConfig& cfg) {
  nlohmann::ordered_json j;
  j["digest"] = cfg.digest();
  j["stages"] = pipeline_stages();
  const auto sc = cfg.scenario();
  j["sizes"] = {{"reference", sc.n_reference}, {"augmented", sc.n_augmented}, {"user", sc.n_user},
                {"database", sc.db_size},      {"benign", sc.n_benign},       {"poisons", cfg.poison_count()},
                {"pool", cfg.effective_pool_size()}};
  nlohmann::ordered_json settings;
  for (const auto& [k, v] : cfg.to_settings()) settings[k] = v;
  j["config"] = settings;
  return j;
}

template <typename Fn>
auto run_stage(const std::string& stage, const LogSink& log, Fn&& fn) {
  const auto t0 = std::chrono::steady_clock::now();
  log({{"event", "start"}, {"stage", stage}});
  try {
    if constexpr (std::is_void_v<decltype(fn())>) {
      fn();
      log({{"event", "done"}, {"stage", stage},
           {"seconds", std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count()}});
    } else {
      auto r = fn();
      log({{"event", "done"}, {"stage", stage},
           {"seconds", std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count()}});
      return r;
    }
  } catch (const Error& e) {
    throw StageError(stage, e.code(), e.what());
  } catch (const std::exception& e) {
    throw StageError(stage, ErrorCode::IoError, e.what());
  }
}

inline std::vector<LumaImage> corpus_or_synth(const std::filesystem::path& dir, const CorpusSpec& spec,
                                              unsigned workers) {
  if (!dir.empty()) return load_corpus(dir, spec);
  return synth_corpus(spec, workers);
}

}  // namespace detail

/// profile -> augment -> hash -> poison-select -> craft -> inject -> evaluate.
/// Artifacts land in <out_dir>/<digest>/; a dry run validates and writes only
/// the plan to stdout.
inline PipelineResult run_pipeline(const RunConfig& cfg, bool dry_run = false, const LogSink& log = stderr_log()) {
  try {
    cfg.validate();
  } catch (const Error& e) {
    throw StageError("validate", e.code(), e.what());
  }
  PipelineResult res;
  res.digest = cfg.digest();
  res.run_dir = cfg.out_dir / res.digest;
  res.dry_run = dry_run;
  if (dry_run) {
    std::cout << detail::plan_json(cfg).dump(2) << '\n';
    return res;
  }
  namespace fs = std::filesystem;
  const fs::path dir = res.run_dir;
  fs::create_directories(dir);
  {
    std::ofstream(dir / "config.txt") << cfg.serialize();
    std::ofstream(dir / "plan.json") << detail::plan_json(cfg).dump(2) << '\n';
  }
  const ScenarioSpec spec = cfg.scenario();
  const Hasher hasher(spec.hash);
  const unsigned workers = cfg.workers;

  // profile: reference and user captures of the target scene.
  SceneDataset scene = detail::run_stage("profile", log, [&] {
    SceneDataset ds;
    if (!cfg.reference_dir.empty()) {
      ds.reference = load_corpus(cfg.reference_dir, {CorpusRole::Benign, 0, 0});
      ds.user = cfg.user_dir.empty() ? ds.reference : load_corpus(cfg.user_dir, {CorpusRole::Benign, 0, 0});
    } else {
      ds = synth_scene(spec.scene_seed, cfg.condition, spec.n_reference, spec.n_user, spec.scene, workers,
                       derive_seed(cfg.seed, "captures/" + spec.name));
    }
    std::vector<ManifestRecord> manifest;
    for (std::size_t i = 0; i < ds.reference.size(); ++i) {
      const auto rel = "scene/reference/" + detail::indexed_name("ref_", i);
      save_png(dir / rel, ds.reference[i]);
      manifest.push_back({rel, "reference", cfg.condition.label(), "reference"});
    }
    for (std::size_t i = 0; i < ds.user.size(); ++i) {
      const auto rel = "scene/user/" + detail::indexed_name("user_", i);
      save_png(dir / rel, ds.user[i]);
      manifest.push_back({rel, "user", cfg.condition.label(), "user"});
    }
    write_manifest(dir / "scene/manifest.jsonl", manifest);
    return ds;
  });

  // augment: hashes of the augmented reference set.
  const auto augmented = detail::run_stage("augment", log, [&] {
    AugmentationConfig aug = spec.augmentation;
    aug.target_count = std::max(spec.n_augmented, scene.reference.size());
    aug.seed = derive_seed(cfg.seed, "augment/" + spec.name + "/" + cfg.condition.label());
    std::vector<PerceptualHash> out(aug.target_count);
    augment_visit(scene.reference, aug, [&](std::size_t i, const LumaImage& img) { out[i] = hasher(img); }, workers);
    save_hash_list(dir / "augment/reference_hashes.txt", out);
    return out;
  });

  // hash: user set, legitimate database, benign set, calibration.
  struct Hashed {
    std::vector<PerceptualHash> user, benign;
    HashDatabase legit{HashFunctionSpec::pdq()};
    Calibration calibration;
  };
  const Hashed hashed = detail::run_stage("hash", log, [&] {
    Hashed h;
    h.user.resize(scene.user.size());
    parallel_for(scene.user.size(), workers, [&](std::size_t i) { h.user[i] = hasher(scene.user[i]); });
    const auto illicit = detail::corpus_or_synth(
        cfg.illicit_dir, {CorpusRole::IllicitStandin, spec.db_size, spec.corpus_seed, spec.corpus_size, spec.corpus_size},
        workers);
    std::vector<PerceptualHash> legit(illicit.size());
    parallel_for(illicit.size(), workers, [&](std::size_t i) { legit[i] = hasher(illicit[i]); });
    h.legit = db_build(legit, Provenance::Legitimate, spec.hash);
    const auto benign = detail::corpus_or_synth(
        cfg.benign_dir, {CorpusRole::Benign, spec.n_benign, spec.corpus_seed, spec.corpus_size, spec.corpus_size},
        workers);
    h.benign.resize(benign.size());
    parallel_for(benign.size(), workers, [&](std::size_t i) { h.benign[i] = hasher(benign[i]); });
    const auto benign_min = min_distances(h.benign, h.legit, workers);
    if (cfg.threshold) {
      h.calibration.threshold = *cfg.threshold;
      const MatchConfig mc{spec.metric, *cfg.threshold};
      h.calibration.achieved_fpr = flagged_fraction(benign_min, spec.hash.output_bits, mc);
      h.calibration.curve = rate_curve(benign_min, spec.hash.output_bits, spec.metric);
    } else {
      h.calibration = calibrate_threshold(benign_min, spec.hash.output_bits, spec.target_fpr, spec.metric);
    }
    save_hash_list(dir / "hash/user_hashes.txt", h.user);
    save_hash_list(dir / "hash/benign_hashes.txt", h.benign);
    save_db(dir / "hash/legit.csdb", h.legit);
    nlohmann::ordered_json cal;
    cal["threshold"] = h.calibration.threshold;
    cal["achieved_fpr"] = h.calibration.achieved_fpr;
    std::ofstream(dir / "hash/calibration.json") << cal.dump(2) << '\n';
    return h;
  });
  const MatchConfig match{spec.metric, hashed.calibration.threshold};

  const auto poisons = detail::run_stage("poison-select", log, [&] {
    KModesConfig kc;
    kc.k = cfg.poison_count();
    kc.restarts = cfg.restarts;
    kc.max_iterations = cfg.max_iterations;
    kc.seed = derive_seed(cfg.seed, "poison/" + spec.name, kc.k);
    kc.workers = workers;
    auto set = select_poisons(augmented, cfg.strategy, kc);
    save_poisons(dir / "poison/poisons.jsonl", set);
    return set;
  });

  const auto crafted = detail::run_stage("craft", log, [&] {
    const std::size_t n_craft =
        cfg.max_crafted == 0 ? poisons.hashes.size() : std::min(cfg.max_crafted, poisons.hashes.size());
    const std::size_t pool_n = std::max(cfg.effective_pool_size(), n_craft);
    const auto pool = detail::corpus_or_synth(cfg.pool_dir, {CorpusRole::DeliveryPool, pool_n, spec.corpus_seed, 64, 64},
                                              workers);
    BatchConfig bc;
    bc.attack = cfg.attack;
    bc.attack.seed = derive_seed(cfg.seed, "craft");
    bc.candidates_per_poison = cfg.candidates;
    bc.workers = workers;
    const std::vector<PerceptualHash> targets(poisons.hashes.begin(),
                                              poisons.hashes.begin() + static_cast<std::ptrdiff_t>(n_craft));
    auto out = craft_batch(pool, targets, hasher, bc);
    fs::create_directories(dir / "craft");
    std::ofstream log_file(dir / "craft/results.jsonl");
    for (const auto& d : out) {
      save_png(dir / "craft" / detail::indexed_name("delivery_", d.poison_index), d.result.image);
      nlohmann::ordered_json j;
      j["poison"] = d.poison_index;
      j["source"] = d.source_index;
      j["target"] = d.target.to_hex();
      j["initial_distance"] = d.result.initial_distance;
      j["final_distance"] = d.result.final_distance;
      j["linf"] = d.result.linf_actual;
      j["queries"] = d.result.queries_used;
      log_file << j.dump() << '\n';
    }
    return out;
  });

  // inject: hashes of the delivery images as the curator computes them.
  const auto injected = detail::run_stage("inject", log, [&] {
    std::vector<PerceptualHash> delivered;
    for (const auto& d : crafted) delivered.push_back(hasher(d.result.image));
    HashDatabase db = hashed.legit;
    for (const auto& h : delivered) db.insert(h, Provenance::Poison);
    save_db(dir / "inject/db.csdb", db);
    save_hash_list(dir / "inject/delivered_hashes.txt", delivered);
    return db;
  });

  res.report = detail::run_stage("evaluate", log, [&] {
    EvalReport rep;
    const std::size_t bits = spec.hash.output_bits;
    const auto user_legit = min_distances(hashed.user, hashed.legit, workers);
    const auto benign_legit = min_distances(hashed.benign, hashed.legit, workers);
    auto add = [&](std::string report, const std::vector<int>& user, const std::vector<int>& benign) {
      auto row = detail::base_row(std::move(report), spec, cfg.seed);
      detail::set_threshold(row, match, bits);
      row.budget = poisons.hashes.size();
      row.budget_fraction = cfg.budget;
      row.strategy = std::string(to_string(poisons.strategy));
      row.ref_condition = row.user_condition = cfg.condition.label();
      row.surveillance_rate = flagged_fraction(user, bits, match);
      row.fpr = flagged_fraction(benign, bits, match);
      rep.rows.push_back(std::move(row));
    };
    add("pipeline-clean", user_legit, benign_legit);
    add("pipeline-ideal", elementwise_min(user_legit, min_distances(hashed.user, poisons.hashes, workers)),
        elementwise_min(benign_legit, min_distances(hashed.benign, poisons.hashes, workers)));
    add("pipeline-injected", min_distances(hashed.user, injected, workers),
        min_distances(hashed.benign, injected, workers));
    rep.save(dir / "eval/report");
    return rep;
  });
  log({{"event", "complete"}, {"run_dir", res.run_dir.string()}, {"digest", res.digest}});
  return res;
}

}  // namespace csislab
