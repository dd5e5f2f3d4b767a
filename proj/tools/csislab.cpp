#include <algorithm>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "csislab/csislab.hpp"

namespace fs = std::filesystem;
using namespace csislab;

namespace {

struct Globals {
  std::string config_file;
  std::vector<std::string> sets;
  std::optional<unsigned> workers;
  std::optional<std::uint64_t> seed;
  std::optional<double> scale;
  std::string out_dir;
  std::optional<std::string> hash_kind;
  std::optional<std::size_t> hash_bits;
  std::optional<std::uint64_t> hash_seed;
};

RunConfig resolve(const Globals& g, Settings extra = {}) {
  Settings flags;
  for (const auto& kv : g.sets) {
    const auto eq = kv.find('=');
    require(eq != std::string::npos, ErrorCode::InvalidArgument, "--set expects key=value, got '" + kv + "'");
    flags[detail::trim(std::string_view(kv).substr(0, eq))] = detail::trim(std::string_view(kv).substr(eq + 1));
  }
  if (g.workers) flags["workers"] = std::to_string(*g.workers);
  if (g.seed) flags["seed"] = std::to_string(*g.seed);
  if (g.scale) flags["scale"] = detail::fmt_double(*g.scale);
  if (!g.out_dir.empty()) flags["out_dir"] = g.out_dir;
  if (g.hash_kind) flags["hash"] = *g.hash_kind;
  if (g.hash_bits) flags["hash_bits"] = std::to_string(*g.hash_bits);
  if (g.hash_seed) flags["hash_seed"] = std::to_string(*g.hash_seed);
  for (auto& [k, v] : extra) flags[k] = v;
  std::optional<fs::path> file;
  if (!g.config_file.empty()) file = g.config_file;
  // Keys from the file and environment are applied before explicit flags;
  // "hash" is re-applied ahead of "hash_bits" so a kind switch cannot clobber
  // an explicit length.
  RunConfig cfg = resolve_config(file, {}, settings_from_env());
  if (auto it = flags.find("hash"); it != flags.end()) cfg.set("hash", it->second);
  for (const auto& [k, v] : flags)
    if (k != "hash") cfg.set(k, v);
  return cfg;
}

void log_event(const nlohmann::ordered_json& j) { std::cerr << j.dump() << '\n'; }

std::vector<fs::path> expand_images(const std::vector<std::string>& inputs) {
  std::vector<fs::path> out;
  for (const auto& in : inputs) {
    const fs::path p(in);
    if (fs::is_directory(p)) {
      std::vector<fs::path> files;
      for (const auto& e : fs::directory_iterator(p))
        if (e.is_regular_file() && is_image_path(e.path())) files.push_back(e.path());
      std::sort(files.begin(), files.end());
      out.insert(out.end(), files.begin(), files.end());
    } else {
      require(fs::exists(p), ErrorCode::IoError, "no such file: " + in);
      out.push_back(p);
    }
  }
  return out;
}

bool is_hash_list(const fs::path& p) { return p.extension() == ".txt"; }

// Hashes of image files/directories, or the contents of .txt hash lists.
std::vector<PerceptualHash> hashes_of(const std::vector<std::string>& inputs, const Hasher& hasher, unsigned workers) {
  std::vector<PerceptualHash> out;
  std::vector<std::string> images;
  for (const auto& in : inputs) {
    if (is_hash_list(in)) {
      auto h = load_hash_list(in);
      out.insert(out.end(), h.begin(), h.end());
    } else {
      images.push_back(in);
    }
  }
  const auto files = expand_images(images);
  std::vector<PerceptualHash> hs(files.size());
  parallel_for(files.size(), workers, [&](std::size_t i) { hs[i] = hasher(decode_file(files[i])); });
  out.insert(out.end(), hs.begin(), hs.end());
  require(!out.empty(), ErrorCode::EmptyInput, "no inputs");
  return out;
}

std::vector<LumaImage> images_of(const std::string& dir) {
  std::vector<LumaImage> out;
  for (const auto& f : expand_images({dir})) out.push_back(load_luma(f));
  require(!out.empty(), ErrorCode::InsufficientImages, "no decodable images in " + dir);
  return out;
}

void write_report(const EvalReport& rep, const fs::path& stem) {
  rep.save(stem);
  log_event({{"event", "report"}, {"path", stem.string() + ".csv"}, {"rows", rep.rows.size()}});
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"csislab: perceptual-hash scanning and surveillance-poisoning toolkit"};
  app.require_subcommand(1);
  Globals g;
  app.add_option("-c,--config", g.config_file, "key = value config file")->check(CLI::ExistingFile);
  app.add_option("--set", g.sets, "override a config key (key=value), repeatable");
  app.add_option("-w,--workers", g.workers, "worker threads");
  app.add_option("--seed", g.seed, "root seed");
  app.add_option("--scale", g.scale, "population scale factor");
  app.add_option("-o,--out", g.out_dir, "output directory");
  app.add_option("--hash", g.hash_kind, "pdq | surrogate");
  app.add_option("--bits", g.hash_bits, "surrogate output bits");
  app.add_option("--hash-seed", g.hash_seed, "surrogate projection seed");

  // hash
  auto* hash_cmd = app.add_subcommand("hash", "print hex hash and quality of images");
  std::vector<std::string> hash_inputs;
  hash_cmd->add_option("inputs", hash_inputs, "image files or directories")->required();

  // db
  auto* db_cmd = app.add_subcommand("db", "hash database tools");
  db_cmd->require_subcommand(1);
  auto* db_build_cmd = db_cmd->add_subcommand("build", "build a database from images or hash lists");
  std::vector<std::string> db_inputs;
  std::string db_out, db_tag = "legitimate";
  db_build_cmd->add_option("inputs", db_inputs, "image files, directories or .txt hash lists")->required();
  db_build_cmd->add_option("--db", db_out, "output database file")->required();
  db_build_cmd->add_option("--tag", db_tag, "legitimate | poison");
  auto* db_stats_cmd = db_cmd->add_subcommand("stats", "print database statistics");
  std::string db_stats_file;
  db_stats_cmd->add_option("db", db_stats_file)->required()->check(CLI::ExistingFile);
  auto* db_merge_cmd = db_cmd->add_subcommand("merge", "merge two databases");
  std::string merge_a, merge_b, merge_out;
  db_merge_cmd->add_option("a", merge_a)->required()->check(CLI::ExistingFile);
  db_merge_cmd->add_option("b", merge_b)->required()->check(CLI::ExistingFile);
  db_merge_cmd->add_option("--db", merge_out, "output database file")->required();

  // augment
  auto* aug_cmd = app.add_subcommand("augment", "augment a reference set");
  std::string aug_ref, aug_dest;
  std::optional<std::size_t> aug_count;
  bool aug_hashes_only = false;
  aug_cmd->add_option("--reference", aug_ref, "reference image directory")->required();
  aug_cmd->add_option("--count", aug_count, "augmented samples (default n_augmented)");
  aug_cmd->add_option("--dest", aug_dest, "output directory (images) or file (hashes)")->required();
  aug_cmd->add_flag("--hashes-only", aug_hashes_only, "write a hash list instead of images");

  // poison select
  auto* poison_cmd = app.add_subcommand("poison", "poison hash selection");
  poison_cmd->require_subcommand(1);
  auto* select_cmd = poison_cmd->add_subcommand("select", "select poison hashes from scene hashes");
  std::vector<std::string> select_inputs;
  std::optional<std::size_t> select_k;
  std::string select_out, select_strategy;
  select_cmd->add_option("inputs", select_inputs, "augmented scene hash lists, images or directories")->required();
  select_cmd->add_option("--k", select_k, "poison count (default budget x db_size)");
  select_cmd->add_option("--strategy", select_strategy, "kmodes | random");
  select_cmd->add_option("--poisons", select_out, "output poison file")->required();

  // craft
  auto* craft_cmd = app.add_subcommand("craft", "craft delivery images for poison hashes");
  std::string craft_poisons, craft_pool, craft_dest;
  std::optional<std::size_t> craft_limit;
  craft_cmd->add_option("--poisons", craft_poisons)->required()->check(CLI::ExistingFile);
  craft_cmd->add_option("--pool", craft_pool, "delivery pool image directory")->required();
  craft_cmd->add_option("--dest", craft_dest, "output directory")->required();
  craft_cmd->add_option("--limit", craft_limit, "craft only the first N poisons");

  // inject
  auto* inject_cmd = app.add_subcommand("inject", "add poison entries to a database");
  std::string inject_db, inject_deliveries, inject_poisons, inject_out;
  inject_cmd->add_option("--db", inject_db)->required()->check(CLI::ExistingFile);
  auto* deliveries_opt = inject_cmd->add_option("--deliveries", inject_deliveries, "delivery image directory");
  auto* poisons_opt = inject_cmd->add_option("--poisons", inject_poisons, "poison file (ideal injection)");
  deliveries_opt->excludes(poisons_opt);
  inject_cmd->add_option("--dest", inject_out, "output database file")->required();

  // eval
  auto* eval_cmd = app.add_subcommand("eval", "surveillance rate and FPR against a database");
  std::string eval_db, eval_calibrate_db;
  std::vector<std::string> eval_user, eval_benign;
  eval_cmd->add_option("--db", eval_db)->required()->check(CLI::ExistingFile);
  eval_cmd->add_option("--user", eval_user, "user images or hash lists")->required();
  eval_cmd->add_option("--benign", eval_benign, "benign images or hash lists")->required();
  eval_cmd->add_option("--calibrate-db", eval_calibrate_db, "database used for threshold calibration (default --db)");

  // sweep
  auto* sweep_cmd = app.add_subcommand("sweep", "run evaluation sweeps and write reports");
  std::string sweep_reports;
  sweep_cmd->add_option("--reports", sweep_reports, "comma list: pairwise,tradeoff,budget,cross,occlusion");

  // scene synth
  auto* scene_cmd = app.add_subcommand("scene", "synthetic scenes");
  scene_cmd->require_subcommand(1);
  auto* synth_cmd = scene_cmd->add_subcommand("synth", "render reference and user captures");
  std::string synth_dest;
  synth_cmd->add_option("--dest", synth_dest, "output directory")->required();

  // run
  auto* run_cmd = app.add_subcommand("run", "end-to-end pipeline");
  bool dry_run = false;
  run_cmd->add_flag("--dry-run", dry_run, "validate and print the plan only");

  // config
  auto* config_cmd = app.add_subcommand("config", "print the resolved configuration");

  CLI11_PARSE(app, argc, argv);

  try {
    Settings extra;
    if (!select_strategy.empty()) extra["strategy"] = select_strategy;
    if (!sweep_reports.empty()) extra["sweep.reports"] = sweep_reports;
    const RunConfig cfg = resolve(g, extra);
    const Hasher hasher(cfg.hash);
    const unsigned workers = cfg.workers;

    if (*config_cmd) {
      cfg.validate();
      std::cout << cfg.serialize();
    } else if (*hash_cmd) {
      const auto files = expand_images(hash_inputs);
      std::vector<PerceptualHash> hs(files.size());
      parallel_for(files.size(), workers, [&](std::size_t i) { hs[i] = hasher(decode_file(files[i])); });
      for (std::size_t i = 0; i < files.size(); ++i)
        std::cout << hs[i].to_hex() << ' ' << hs[i].quality() << ' ' << files[i].string() << '\n';
    } else if (*db_build_cmd) {
      const auto tag = db_tag == "poison" ? Provenance::Poison : Provenance::Legitimate;
      require(db_tag == "poison" || db_tag == "legitimate", ErrorCode::InvalidArgument, "tag must be legitimate or poison");
      const auto hs = hashes_of(db_inputs, hasher, workers);
      const auto db = db_build(hs, tag, cfg.hash);
      save_db(db_out, db);
      log_event({{"event", "db-built"}, {"path", db_out}, {"entries", db.size()}, {"duplicates", db.duplicates()}});
    } else if (*db_stats_cmd) {
      const auto db = load_db(db_stats_file);
      nlohmann::ordered_json j;
      j["kind"] = std::string(to_string(db.spec().kind));
      j["bits"] = db.bits();
      j["entries"] = db.size();
      j["duplicates"] = db.duplicates();
      j["poison_count"] = db.poison_count();
      j["poison_fraction"] = db.poison_fraction();
      std::cout << j.dump(2) << '\n';
    } else if (*db_merge_cmd) {
      const auto db = db_merge(load_db(merge_a), load_db(merge_b));
      save_db(merge_out, db);
      log_event({{"event", "db-merged"}, {"path", merge_out}, {"entries", db.size()}});
    } else if (*aug_cmd) {
      const auto reference = images_of(aug_ref);
      AugmentationConfig aug = cfg.augmentation;
      aug.target_count = aug_count.value_or(std::max(cfg.scenario().n_augmented, reference.size()));
      aug.seed = derive_seed(cfg.seed, "augment");
      if (aug_hashes_only) {
        std::vector<PerceptualHash> hs(aug.target_count);
        augment_visit(reference, aug, [&](std::size_t i, const LumaImage& img) { hs[i] = hasher(img); }, workers);
        save_hash_list(aug_dest, hs);
      } else {
        augment_visit(reference, aug, [&](std::size_t i, const LumaImage& img) {
          save_png(fs::path(aug_dest) / detail::indexed_name("aug_", i), img);
        }, workers);
      }
      log_event({{"event", "augmented"}, {"count", aug.target_count}, {"dest", aug_dest}});
    } else if (*select_cmd) {
      const auto hs = hashes_of(select_inputs, hasher, workers);
      KModesConfig kc;
      kc.k = select_k.value_or(cfg.poison_count());
      kc.restarts = cfg.restarts;
      kc.max_iterations = cfg.max_iterations;
      kc.seed = derive_seed(cfg.seed, "poison/" + cfg.name, kc.k);
      kc.workers = workers;
      const auto set = select_poisons(hs, cfg.strategy, kc);
      save_poisons(select_out, set);
      log_event({{"event", "poisons-selected"}, {"k", set.size()}, {"strategy", std::string(to_string(set.strategy))},
                 {"objective", set.objective}, {"path", select_out}});
    } else if (*craft_cmd) {
      auto set = load_poisons(craft_poisons);
      if (craft_limit && *craft_limit < set.hashes.size()) set.hashes.resize(*craft_limit);
      const auto pool = images_of(craft_pool);
      BatchConfig bc;
      bc.attack = cfg.attack;
      bc.attack.seed = derive_seed(cfg.seed, "craft");
      bc.candidates_per_poison = cfg.candidates;
      bc.workers = workers;
      const auto out = craft_batch(pool, set.hashes, hasher, bc);
      fs::create_directories(craft_dest);
      std::ofstream results(fs::path(craft_dest) / "results.jsonl");
      for (const auto& d : out) {
        save_png(fs::path(craft_dest) / detail::indexed_name("delivery_", d.poison_index), d.result.image);
        nlohmann::ordered_json j;
        j["source"] = d.source_index;
        j["target"] = d.target.to_hex();
        j["initial_distance"] = d.result.initial_distance;
        j["final_distance"] = d.result.final_distance;
        j["linf"] = d.result.linf_actual;
        j["queries"] = d.result.queries_used;
        results << j.dump() << '\n';
      }
      log_event({{"event", "crafted"}, {"count", out.size()}, {"dest", craft_dest}});
    } else if (*inject_cmd) {
      require(!inject_deliveries.empty() || !inject_poisons.empty(), ErrorCode::InvalidArgument,
              "inject needs --deliveries or --poisons");
      HashDatabase db = load_db(inject_db);
      const auto hs = inject_poisons.empty() ? hashes_of({inject_deliveries}, Hasher(db.spec()), workers)
                                             : load_poisons(inject_poisons).hashes;
      for (const auto& h : hs) db.insert(h, Provenance::Poison);
      save_db(inject_out, db);
      log_event({{"event", "injected"}, {"poisons", hs.size()}, {"entries", db.size()}, {"path", inject_out}});
    } else if (*eval_cmd) {
      const auto db = load_db(eval_db);
      const Hasher h(db.spec());
      const auto user = hashes_of(eval_user, h, workers);
      const auto benign = hashes_of(eval_benign, h, workers);
      double t = 0.0;
      if (cfg.threshold) {
        t = *cfg.threshold;
      } else {
        const auto cal_db = eval_calibrate_db.empty() ? db : load_db(eval_calibrate_db);
        t = calibrate_threshold(benign, cal_db, cfg.target_fpr, cfg.metric, workers).threshold;
      }
      const MatchConfig mc{cfg.metric, t};
      nlohmann::ordered_json j;
      j["threshold"] = t;
      j["surveillance_rate"] = surveillance_rate(user, db, mc, workers);
      j["fpr"] = fpr(benign, db, mc, workers);
      j["user"] = user.size();
      j["benign"] = benign.size();
      std::cout << j.dump(2) << '\n';
    } else if (*sweep_cmd) {
      cfg.validate();
      const auto spec = cfg.scenario();
      const fs::path dir = cfg.out_dir / cfg.digest() / "sweep";
      fs::create_directories(dir);
      std::ofstream(dir / "config.txt") << cfg.serialize();
      log_event({{"event", "start"}, {"stage", "context"}});
      const auto ctx = build_context(spec);
      log_event({{"event", "calibrated"}, {"threshold", ctx.calibration.threshold},
                 {"achieved_fpr", ctx.calibration.achieved_fpr}});
      SweepCache cache;
      for (const auto& r : cfg.reports) {
        log_event({{"event", "start"}, {"stage", r}});
        if (r == "pairwise") write_report(pairwise_report(spec, cfg.sweep, ctx), dir / "pairwise-curve");
        if (r == "tradeoff") write_report(tradeoff_sweep(spec, cfg.sweep, ctx, &cache), dir / "trade-off");
        if (r == "budget") write_report(budget_sweep(spec, cfg.sweep, ctx, &cache), dir / "budget-table");
        if (r == "cross") write_report(cross_condition_matrix(spec, cfg.sweep, ctx, &cache), dir / "cross-matrix");
        if (r == "occlusion") write_report(occlusion_curve(spec, cfg.sweep, ctx, &cache), dir / "occlusion");
      }
    } else if (*synth_cmd) {
      cfg.validate();
      const auto spec = cfg.scenario();
      const auto ds = synth_scene(spec.scene_seed, cfg.condition, spec.n_reference, spec.n_user, spec.scene, workers,
                                  derive_seed(cfg.seed, "captures/" + spec.name));
      std::vector<ManifestRecord> manifest;
      for (std::size_t i = 0; i < ds.reference.size(); ++i) {
        const auto rel = "reference/" + detail::indexed_name("ref_", i);
        save_png(fs::path(synth_dest) / rel, ds.reference[i]);
        manifest.push_back({rel, "reference", cfg.condition.label(), "reference"});
      }
      for (std::size_t i = 0; i < ds.user.size(); ++i) {
        const auto rel = "user/" + detail::indexed_name("user_", i);
        save_png(fs::path(synth_dest) / rel, ds.user[i]);
        manifest.push_back({rel, "user", cfg.condition.label(), "user"});
      }
      write_manifest(fs::path(synth_dest) / "manifest.jsonl", manifest);
      log_event({{"event", "scene"}, {"reference", ds.reference.size()}, {"user", ds.user.size()}, {"dest", synth_dest}});
    } else if (*run_cmd) {
      run_pipeline(cfg, dry_run, log_event);
    }
  } catch (const StageError& e) {
    log_event(e.record());
    return 3;
  } catch (const Error& e) {
    log_event({{"event", "error"}, {"code", std::string(error_code_name(e.code()))}, {"message", e.what()}});
    return 2;
  } catch (const std::exception& e) {
    log_event({{"event", "error"}, {"code", "Internal"}, {"message", e.what()}});
    return 2;
  }
  return 0;
}
