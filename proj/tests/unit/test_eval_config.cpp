#include <gtest/gtest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>

#include "csislab/csislab.hpp"
#include "oracles.hpp"

using namespace csislab;

namespace {

std::filesystem::path temp_dir() {
  const auto dir = std::filesystem::temp_directory_path() / "csislab-unit";
  std::filesystem::create_directories(dir);
  return dir;
}

ScenarioSpec tiny_spec() {
  ScenarioSpec s;
  s.n_reference = 8;
  s.n_augmented = 40;
  s.n_user = 12;
  s.db_size = 60;
  s.n_benign = 60;
  s.n_detection = 10;
  s.corpus_size = 96;
  s.scene.view_width = 96;
  s.scene.view_height = 72;
  s.scene.world_width = 288;
  s.scene.world_height = 192;
  s.target_fpr = 0.05;
  return s;
}

SweepSpec tiny_sweep() {
  SweepSpec w;
  w.seeds = {1, 2};
  w.budgets = {0.05, 0.2};
  w.kmodes_restarts = 2;
  w.kmodes_max_iterations = 10;
  w.occlusion_fractions = {0.0, 0.5, 1.0};
  w.levels = {Level::Low};
  w.random_pairs = 200;
  return w;
}

}  // namespace

TEST(Metrics, SurveillanceRateMatchesRecount) {
  Rng rng(61);
  const auto spec = HashFunctionSpec::surrogate(64, 0);
  std::vector<PerceptualHash> db_h, user;
  for (int i = 0; i < 30; ++i) db_h.push_back(oracle::random_hash(rng, 64));
  for (int i = 0; i < 80; ++i)
    user.push_back(oracle::flip_random(db_h[uniform_index(rng, 30)], static_cast<int>(uniform_index(rng, 30)), rng));
  const auto db = db_build(db_h, Provenance::Poison, spec);
  for (int t = 0; t <= 32; t += 4) {
    const MatchConfig cfg{{DistanceKind::Hamming}, static_cast<double>(t)};
    std::size_t n = 0;
    for (const auto& u : user) {
      int best = 99;
      for (const auto& e : db_h) best = std::min(best, oracle::hamming(u, e));
      n += best <= t;
    }
    EXPECT_DOUBLE_EQ(surveillance_rate(user, db, cfg), static_cast<double>(n) / user.size());
  }
  try {
    surveillance_rate(std::vector<PerceptualHash>{}, db, {{DistanceKind::Hamming}, 1});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::EmptyInput);
  }
}

TEST(Metrics, MinOfProfilesEqualsMergedDatabase) {
  Rng rng(62);
  const auto spec = HashFunctionSpec::surrogate(64, 0);
  std::vector<PerceptualHash> a, b, q;
  for (int i = 0; i < 20; ++i) a.push_back(oracle::random_hash(rng, 64)), b.push_back(oracle::random_hash(rng, 64));
  for (int i = 0; i < 50; ++i) q.push_back(oracle::random_hash(rng, 64));
  const auto merged = db_merge(db_build(a, Provenance::Legitimate, spec), db_build(b, Provenance::Poison, spec));
  EXPECT_EQ(elementwise_min(min_distances(q, a), min_distances(q, b)), min_distances(q, merged));
}

TEST(Metrics, RatesMonotoneInThreshold) {
  Rng rng(63);
  std::vector<int> mins(200);
  for (auto& m : mins) m = static_cast<int>(uniform_index(rng, 257));
  double prev = -1;
  for (int t = 0; t <= 256; ++t) {
    const double r = flagged_fraction(mins, 256, {{DistanceKind::Hamming}, static_cast<double>(t)});
    EXPECT_GE(r, prev);
    prev = r;
  }
}

TEST(Report, MeansUseSampleStdev) {
  EvalReport rep;
  for (int s = 1; s <= 3; ++s) {
    EvalRow r;
    r.report = "budget";
    r.scenario = "x";
    r.hash_kind = "pdq";
    r.seed = std::to_string(s);
    r.surveillance_rate = s * 0.1;
    r.fpr = 0.01;
    rep.rows.push_back(r);
  }
  rep.add_means();
  ASSERT_EQ(rep.rows.size(), 4u);
  const auto& m = rep.rows.back();
  EXPECT_EQ(m.seed, "mean");
  EXPECT_EQ(m.n_seeds, 3u);
  EXPECT_NEAR(*m.surveillance_rate, 0.2, 1e-12);
  EXPECT_NEAR(*m.surveillance_std, 0.1, 1e-12);
  EXPECT_NEAR(*m.fpr_std, 0.0, 1e-12);
  EXPECT_FALSE(m.csis_detection_rate.has_value());
}

TEST(Report, CsvShapeAndJsonAgree) {
  EvalReport rep;
  EvalRow r;
  r.report = "pairwise";
  r.scenario = "s";
  r.hash_kind = "pdq";
  r.seed = "1";
  r.threshold = 0.125;
  r.pair_rate = 1.0 / 3.0;
  rep.rows.push_back(r);
  const auto csv = rep.to_csv();
  const auto header = csv.substr(0, csv.find('\n'));
  EXPECT_EQ(std::count(header.begin(), header.end(), ','), 21);
  EXPECT_NE(csv.find("0.125000"), std::string::npos);
  EXPECT_NE(csv.find("0.333333"), std::string::npos);
  const auto js = rep.to_json();
  EXPECT_EQ(js[0]["pair_rate"], "0.333333");
  EXPECT_TRUE(js[0]["fpr"].is_null());
  rep.save(temp_dir() / "report");
  std::ifstream in(temp_dir() / "report.csv", std::ios::binary);
  EXPECT_EQ(std::string((std::istreambuf_iterator<char>(in)), {}), csv);
}

TEST(Sweeps, TinyScenarioInvariants) {
  const auto spec = tiny_spec();
  const auto sweep = tiny_sweep();
  const auto ctx = build_context(spec);
  EXPECT_LE(ctx.calibration.achieved_fpr, spec.target_fpr);

  const auto budget = budget_sweep(spec, sweep, ctx);
  // 2 seeds x 2 budgets x 2 strategies plus 4 mean rows.
  EXPECT_EQ(budget.rows.size(), 12u);
  for (const auto& r : budget.rows) {
    ASSERT_TRUE(r.surveillance_rate && r.fpr);
    EXPECT_GE(*r.surveillance_rate, 0.0);
    EXPECT_LE(*r.surveillance_rate, 1.0);
  }

  const auto trade = tradeoff_sweep(spec, sweep, ctx);
  double prev_s = -1, prev_f = -1;
  for (const auto& r : trade.rows) {
    if (r.seed != "1") continue;
    EXPECT_GE(*r.surveillance_rate, prev_s);
    EXPECT_GE(*r.fpr, prev_f);
    prev_s = *r.surveillance_rate;
    prev_f = *r.fpr;
  }

  const auto occ = occlusion_curve(spec, sweep, ctx);
  EXPECT_EQ(occ.rows.size(), 9u);
  const auto pairs = pairwise_report(spec, sweep, ctx);
  EXPECT_EQ(pairs.rows.size(), 2u * 257u);
}

TEST(Sweeps, ReportsAreDeterministic) {
  const auto spec = tiny_spec();
  auto sweep = tiny_sweep();
  sweep.seeds = {3};
  const auto a = budget_sweep(spec, sweep, build_context(spec));
  auto spec2 = spec;
  spec2.workers = 2;
  const auto b = budget_sweep(spec2, sweep, build_context(spec2));
  EXPECT_EQ(a.to_csv(), b.to_csv());
}

TEST(Sweeps, InvalidGridsRejected) {
  SweepSpec w;
  w.budgets = {0.2, 0.1};
  EXPECT_THROW(w.validate(), Error);
  w = {};
  w.seeds.clear();
  EXPECT_THROW(w.validate(), Error);
}

TEST(Config, SettingsRoundTrip) {
  RunConfig cfg;
  cfg.seed = 9;
  cfg.budget = 0.1;
  cfg.attack.linf_budget = 4.0 / 255.0;
  cfg.sweep.seeds = {4, 5};
  cfg.sweep.conditions = {{}, {ConditionKind::Layout, 2}};
  cfg.threshold = 0.3;
  RunConfig back;
  back.apply(cfg.to_settings());
  EXPECT_EQ(back.to_settings(), cfg.to_settings());
  EXPECT_EQ(back.digest(), cfg.digest());
  EXPECT_EQ(back.attack.linf_budget, cfg.attack.linf_budget);
}

TEST(Config, DigestIgnoresWorkersAndOutput) {
  RunConfig a, b;
  b.workers = 4;
  b.out_dir = "elsewhere";
  EXPECT_EQ(a.digest(), b.digest());
  b.seed = 2;
  EXPECT_NE(a.digest(), b.digest());
  EXPECT_EQ(a.digest().size(), 16u);
}

TEST(Config, PrecedenceFlagsOverEnvOverFile) {
  const auto file = temp_dir() / "run.cfg";
  std::ofstream(file) << "# comment\nseed = 3\nbudget = 0.1  # trailing\nname = from-file\n";
  const auto only_file = resolve_config(file, {});
  EXPECT_EQ(only_file.seed, 3u);
  EXPECT_EQ(only_file.name, "from-file");
  const auto with_env = resolve_config(file, {}, {{"seed", "4"}});
  EXPECT_EQ(with_env.seed, 4u);
  EXPECT_DOUBLE_EQ(with_env.budget, 0.1);
  const auto with_flag = resolve_config(file, {{"seed", "5"}}, {{"seed", "4"}});
  EXPECT_EQ(with_flag.seed, 5u);
}

TEST(Config, EnvironmentNames) {
  EXPECT_EQ(env_name("attack.linf"), "CSISLAB_ATTACK_LINF");
  EXPECT_EQ(env_name("kmodes.max_iterations"), "CSISLAB_KMODES_MAX_ITERATIONS");
  ::setenv("CSISLAB_TARGET_FPR", "0.02", 1);
  const auto env = settings_from_env();
  ::unsetenv("CSISLAB_TARGET_FPR");
  ASSERT_TRUE(env.contains("target_fpr"));
  EXPECT_EQ(env.at("target_fpr"), "0.02");
}

TEST(Config, FractionsAndErrors) {
  EXPECT_DOUBLE_EQ(parse_number("x", "8/255"), 8.0 / 255.0);
  EXPECT_DOUBLE_EQ(parse_number("x", " 0.5 "), 0.5);
  EXPECT_THROW(parse_number("x", "1/0"), Error);
  EXPECT_THROW(parse_number("x", "abc"), Error);
  EXPECT_THROW(parse_count("x", "-1"), Error);
  RunConfig cfg;
  try {
    cfg.set("no_such_key", "1");
    FAIL();
  } catch (const Error& e) {
    EXPECT_NE(std::string(e.what()).find("no_such_key"), std::string::npos);
  }
  cfg.budget = 0.0;
  try {
    cfg.validate();
    FAIL();
  } catch (const Error& e) {
    EXPECT_NE(std::string(e.what()).find("budget"), std::string::npos);
  }
  const auto bad = temp_dir() / "bad.cfg";
  std::ofstream(bad) << "seed 3\n";
  EXPECT_THROW(resolve_config(bad, {}), Error);
}

TEST(Pipeline, DryRunWritesNothing) {
  RunConfig cfg;
  cfg.out_dir = temp_dir() / "dry";
  std::filesystem::remove_all(cfg.out_dir);
  testing::internal::CaptureStdout();
  run_pipeline(cfg, true, null_log());
  const auto out = testing::internal::GetCapturedStdout();
  EXPECT_FALSE(std::filesystem::exists(cfg.out_dir));
  const auto plan = nlohmann::json::parse(out);
  EXPECT_EQ(plan["stages"].size(), pipeline_stages().size());
}

TEST(Pipeline, HashListRoundTrip) {
  Rng rng(64);
  std::vector<PerceptualHash> hs;
  for (int i = 0; i < 7; ++i) hs.push_back(oracle::random_hash(rng, 256));
  save_hash_list(temp_dir() / "hashes.txt", hs);
  EXPECT_EQ(load_hash_list(temp_dir() / "hashes.txt"), hs);
}
