#include <gtest/gtest.h>

#include <filesystem>

#include "csislab/csislab.hpp"
#include "oracles.hpp"

using namespace csislab;

namespace {

LumaImage ramp(int w, int h) {
  LumaImage img(w, h);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) img.at(x, y) = static_cast<float>((x + 2 * y) % 256) / 255.0f;
  return img;
}

}  // namespace

TEST(Transforms, IdentityWarpIsExact) {
  const auto img = ramp(40, 30);
  EXPECT_EQ(warp(img, Mat3::identity(), 40, 30), img);
  EXPECT_EQ(resize(img, 40, 30), img);
}

TEST(Transforms, RotationBy360IsIdentityUpToRounding) {
  const auto img = ramp(33, 33);
  EXPECT_LT(max_abs_diff(rotate(img, 360.0), img), 1e-4);
}

TEST(Transforms, HomographyMapsCorners) {
  Rng rng(51);
  for (int trial = 0; trial < 50; ++trial) {
    std::array<std::pair<double, double>, 4> from{{{0, 0}, {100, 0}, {100, 80}, {0, 80}}};
    auto to = from;
    for (auto& [x, y] : to) x += uniform(rng, -10, 10), y += uniform(rng, -10, 10);
    const auto h = homography_from_points(from, to);
    for (int i = 0; i < 4; ++i) {
      const auto [x, y] = h.apply(from[static_cast<std::size_t>(i)].first, from[static_cast<std::size_t>(i)].second);
      EXPECT_NEAR(x, to[static_cast<std::size_t>(i)].first, 1e-6);
      EXPECT_NEAR(y, to[static_cast<std::size_t>(i)].second, 1e-6);
    }
    const auto back = h.inverse();
    const auto [x, y] = back.apply(h.apply(37, 21).first, h.apply(37, 21).second);
    EXPECT_NEAR(x, 37, 1e-6);
    EXPECT_NEAR(y, 21, 1e-6);
  }
}

TEST(Transforms, BrightnessAndCrop) {
  const LumaImage grey(20, 10, 0.5f);
  EXPECT_NEAR(adjust_brightness(grey, 1.1).at(3, 3), 0.55f, 1e-6);
  EXPECT_NEAR(adjust_brightness(grey, 3.0).at(3, 3), 1.0f, 1e-6);
  const auto c = center_crop(ramp(100, 50), 0.5);
  EXPECT_EQ(c.width, 50);
  EXPECT_EQ(c.height, 25);
}

TEST(Variation, FactorsWithinLevelRanges) {
  for (auto level : {Level::Low, Level::Medium, Level::High}) {
    const auto vl = VariationLevel::of(level);
    for (std::uint64_t s = 0; s < 200; ++s) {
      const auto f = sample_variation(vl, s);
      EXPECT_TRUE(vl.brightness.contains(f.brightness));
      EXPECT_TRUE(vl.contrast.contains(f.contrast));
      EXPECT_TRUE(vl.saturation.contains(f.saturation));
      EXPECT_TRUE(vl.crop.contains(f.crop));
    }
  }
  const auto id = VariationLevel::of(Level::Identity);
  const auto img = ramp(64, 64);
  EXPECT_EQ(apply_variation(img, id, 3), img);
}

TEST(Occlusion, CoversRequestedArea) {
  const LumaImage scene(200, 100, 0.0f), person(50, 50, 1.0f);
  for (double f : {0.0, 0.1, 0.25, 0.5, 1.0}) {
    const auto out = composite_foreground(scene, person, f);
    double covered = 0;
    for (float p : out.pixels) covered += p > 0.5f;
    EXPECT_NEAR(covered / static_cast<double>(out.size()), f, 0.02);
  }
  EXPECT_THROW(composite_foreground(scene, person, 1.5), Error);
}

TEST(Augment, DeterministicAndIndexIndependent) {
  const std::vector<LumaImage> refs{ramp(64, 48), ramp(48, 64)};
  AugmentationConfig cfg;
  cfg.target_count = 12;
  cfg.seed = 5;
  const auto a = augment(refs, cfg);
  const auto b = augment(refs, cfg, 3);
  ASSERT_EQ(a.size(), 12u);
  EXPECT_EQ(a, b);
  EXPECT_EQ(a[0], refs[0]);
  EXPECT_EQ(a[1], refs[1]);
  EXPECT_EQ(augmented_sample(refs, cfg, 7), a[7]);
  cfg.seed = 6;
  EXPECT_NE(augmented_sample(refs, cfg, 7), a[7]);
  EXPECT_THROW(augment(std::span<const LumaImage>{}, cfg), Error);
}

TEST(Augment, IdentityConfigCopiesReferences) {
  const std::vector<LumaImage> refs{ramp(64, 48)};
  const auto out = augment(refs, AugmentationConfig::identity(4, 1));
  for (const auto& img : out) EXPECT_LT(max_abs_diff(img, refs[0]), 1e-5);
}

TEST(Scene, DeterministicCaptures) {
  const auto a = synth_scene(3, {}, 3, 2);
  const auto b = synth_scene(3, {}, 3, 2, {}, 2);
  EXPECT_EQ(a.reference, b.reference);
  EXPECT_EQ(a.user, b.user);
  EXPECT_EQ(a.reference[0].width, SceneConfig{}.view_width);
  for (const auto& img : a.reference)
    for (float p : img.pixels) ASSERT_TRUE(p >= 0.0f && p <= 1.0f);
}

TEST(Scene, SplitsAreDisjoint) {
  const auto ds = synth_scene(4, {}, 10, 10);
  for (const auto& r : ds.reference)
    for (const auto& u : ds.user) EXPECT_NE(r, u);
}

TEST(Scene, ConditionsChangeTheWorld) {
  const Hasher h;
  const auto base = synth_scene(5, {}, 1, 1);
  for (auto c : {SceneCondition{ConditionKind::Lighting, 1}, SceneCondition{ConditionKind::Layout, 1}}) {
    const auto other = synth_scene(5, c, 1, 1, {}, 1, 5);
    EXPECT_NE(other.reference[0], base.reference[0]) << c.label();
    EXPECT_EQ(SceneCondition::parse(c.label()), c);
  }
  EXPECT_THROW(SceneCondition::parse("weather-2"), Error);
}

TEST(Scene, CapturesOfOneSceneHashCloserThanOtherScenes) {
  const Hasher h;
  const auto a = synth_scene(6, {}, 20, 1), b = synth_scene(7, {}, 20, 1);
  double within = 0, across = 0;
  for (std::size_t i = 0; i < 20; ++i) {
    within += distance(h(a.reference[i]), h(a.reference[(i + 1) % 20]));
    across += distance(h(a.reference[i]), h(b.reference[i]));
  }
  EXPECT_LT(within, across);
}

TEST(Corpus, DeterministicAndRoleDependent) {
  const CorpusSpec spec{CorpusRole::IllicitStandin, 4, 2, 96, 80};
  const auto a = synth_corpus(spec), b = synth_corpus(spec, 2);
  EXPECT_EQ(a, b);
  EXPECT_EQ(a[0].width, 96);
  EXPECT_EQ(a[0].height, 80);
  EXPECT_NE(synth_corpus_image({CorpusRole::Benign, 4, 2, 96, 80}, 0), a[0]);
  EXPECT_EQ(parse_corpus_role(to_string(CorpusRole::DeliveryPool)), CorpusRole::DeliveryPool);
}

TEST(ImageIo, PngRoundTripIsLossless) {
  const auto dir = std::filesystem::temp_directory_path() / "csislab-unit";
  const auto img = quantize_8bit(ramp(70, 65));
  save_png(dir / "ramp.png", img);
  EXPECT_EQ(load_luma(dir / "ramp.png"), img);
}

TEST(ImageIo, DecodeFailureIsTyped) {
  const auto path = std::filesystem::temp_directory_path() / "csislab-unit" / "junk.png";
  std::filesystem::create_directories(path.parent_path());
  std::ofstream(path) << "not an image";
  try {
    decode_file(path);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::DecodeFailure);
  }
}

TEST(Manifest, RoundTrip) {
  const std::vector<ManifestRecord> recs{{"a.png", "scene", "base", "reference"},
                                         {"b/c.png", "scene", "layout-1", "user"}};
  const auto path = std::filesystem::temp_directory_path() / "csislab-unit" / "manifest.jsonl";
  write_manifest(path, recs);
  EXPECT_EQ(read_manifest(path), recs);
}
