#include <gtest/gtest.h>

#include <cmath>
#include <fstream>
#include <sstream>

#include "flowforge/datagen.hpp"
#include "flowforge/flo_io.hpp"
#include "flowforge/metrics.hpp"
#include "flowforge/warp.hpp"
#include "oracles.hpp"
#include "test_util.hpp"

using namespace flowforge;
using namespace flowforge::testing;

TEST(Datagen, StaticSceneIsIdentity) {
  SceneParams p;
  p.min_objects = p.max_objects = 0;
  p.background_weights = {1.0, 0.0, 0.0};
  const SampleRecord r = generate_sample(p, 3);
  EXPECT_EQ(r.i1, r.i2);
  EXPECT_TRUE((r.flow.grid().data() == 0.0f).all());
  EXPECT_TRUE((r.visibility.data() == 1.0f).all());
}

TEST(Datagen, FullFrameTranslation) {
  SceneParams p;
  p.height = 24;
  p.width = 32;
  Scene s = build_scene(p, 0);
  SceneObject obj;
  obj.shape = ShapeKind::Ellipse;
  obj.axis_a = obj.axis_b = 100.0;
  obj.motion = {16.0, 12.0, 2.0, 0.0, 0.0, 1.0};
  obj.texture.seed = 7;
  obj.texture.amplitude = {0.4, 0.4, 0.4};
  s.objects = {obj};
  const SampleRecord r = render_scene(s);
  for (int y = 0; y < 24; ++y) {
    for (int x = 0; x < 32; ++x) {
      EXPECT_FLOAT_EQ(r.flow.u(y, x), 2.0f);
      EXPECT_FLOAT_EQ(r.flow.v(y, x), 0.0f);
      EXPECT_EQ(r.visibility(y, x), x + 2 <= 31 ? 1.0f : 0.0f);
    }
  }
  const Gridf back = warp_forward(r.i2, r.flow).warped;
  float worst = 0.0f;
  for (int y = 0; y < 24; ++y)
    for (int x = 0; x < 30; ++x)
      for (int c = 0; c < 3; ++c) worst = std::max(worst, std::abs(back(y, x, c) - r.i1(y, x, c)));
  EXPECT_LT(worst, 0.02f);
}

TEST(Datagen, DeterministicPerSeedAndIndex) {
  const SceneParams p = scene_preset("complex");
  const SampleRecord a = generate_sample(p, 5), b = generate_sample(p, 5), c = generate_sample(p, 6);
  EXPECT_EQ(a.i1, b.i1);
  EXPECT_EQ(a.i2, b.i2);
  EXPECT_EQ(a.flow, b.flow);
  EXPECT_EQ(a.visibility, b.visibility);
  EXPECT_FALSE(a.i1 == c.i1);
}

TEST(Datagen, FlowMatchesRasterizationOracle) {
  for (const char* preset : {"simple", "complex", "sdhom"}) {
    SceneParams p = scene_preset(preset, 12, 16);
    p.max_rotation_deg = 20.0;
    p.max_scale_change = 0.2;
    for (std::uint64_t i = 0; i < 60; ++i) {
      const Scene s = build_scene(p, i);
      const SampleRecord r = render_scene(s);
      ASSERT_LT(oracle_flow_gap(s, r.flow), 1e-5) << preset << " " << i;
    }
  }
}

TEST(Datagen, PhotometricConsistencyOnVisiblePixels) {
  for (const char* preset : {"simple", "complex", "sdhom"}) {
    const SceneParams p = scene_preset(preset);
    double total = 0.0;
    for (std::uint64_t i = 0; i < 30; ++i) total += photometric_error(generate_sample(p, i));
    EXPECT_LT(total / 30, 0.02 + p.brightness_perturbation) << preset;
  }
}

TEST(Datagen, VisibilityMarksPixelsLeavingTheFrame) {
  const SceneParams p = scene_preset("simple");
  for (std::uint64_t i = 0; i < 20; ++i) {
    const SampleRecord r = generate_sample(p, i);
    for (int y = 0; y < r.flow.height(); ++y) {
      for (int x = 0; x < r.flow.width(); ++x) {
        const float px = x + r.flow.u(y, x), py = y + r.flow.v(y, x);
        if (px < 0 || py < 0 || px > r.flow.width() - 1 || py > r.flow.height() - 1) {
          EXPECT_EQ(r.visibility(y, x), 0.0f);
        }
        if (r.flow.u(y, x) == 0.0f && r.flow.v(y, x) == 0.0f && r.visibility(y, x) == 0.0f) {
          // static background can only be hidden by an object in I2
          EXPECT_FALSE(r.i1(y, x, 0) == r.i2(y, x, 0) && r.i1(y, x, 1) == r.i2(y, x, 1) && r.i1(y, x, 2) == r.i2(y, x, 2));
        }
      }
    }
  }
}

TEST(Datagen, SubPixelPresetHistogram) {
  const SceneParams p = scene_preset("sdhom");
  std::vector<FlowFieldf> flows;
  for (std::uint64_t i = 0; i < 200; ++i) flows.push_back(generate_sample(p, i).flow);
  const std::vector<double> edges{0.0, 0.25, 0.5, 1.0, 2.0, 4.0, 1e9};
  const Histogram h = nonzero_displacement_histogram(flows, edges);
  const double below_one = double(h.counts[0] + h.counts[1] + h.counts[2]) / h.total;
  EXPECT_GE(below_one, 0.6);
  // empirical CDF against the configured distribution at each interior edge
  std::int64_t cum = 0;
  for (std::size_t b = 0; b + 2 < edges.size(); ++b) {
    cum += h.counts[b];
    const double empirical = double(cum) / h.total;
    EXPECT_NEAR(empirical, p.displacement.cdf(edges[b + 1], p.height, p.width), 0.05) << "edge " << edges[b + 1];
  }
}

TEST(Datagen, CurriculumPair) {
  SceneParams base;
  base.seed = 9;
  const auto [simple, complex] = curriculum_pair(base);
  EXPECT_EQ(simple.max_rotation_deg, 0.0);
  EXPECT_GT(complex.brightness_perturbation, 0.0);
  EXPECT_GT(complex.max_rotation_deg, 0.0);
  EXPECT_EQ(simple.height, complex.height);
  EXPECT_EQ(simple.width, complex.width);
  EXPECT_NE(simple.seed, complex.seed);
  EXPECT_EQ(curriculum_pair(base).first.seed, simple.seed);
  EXPECT_GT(simple.displacement.median, complex.displacement.median);
  base.displacement.kind = DisplacementDist::Kind::Uniform;
  base.displacement.lo = 0.5;
  base.displacement.hi = 1.5;
  const auto uni = curriculum_pair(base).first.displacement;
  EXPECT_DOUBLE_EQ(uni.lo, 1.0);
  EXPECT_DOUBLE_EQ(uni.hi, 3.0);
}

TEST(Datagen, ParamsParseAndValidate) {
  SceneParams p = parse_scene_params({{"min_objects", "2"}, {"max_objects", "3"}, {"disp_median", "0.7"}});
  EXPECT_EQ(p.min_objects, 2);
  EXPECT_DOUBLE_EQ(p.displacement.median, 0.7);
  std::vector<std::pair<std::string, std::string>> lines;
  for (const auto& l : p.to_lines()) {
    const auto eq = l.find('=');
    lines.emplace_back(l.substr(0, eq), l.substr(eq + 1));
  }
  const SceneParams q = parse_scene_params(lines);
  EXPECT_EQ(q.to_lines(), p.to_lines());
  EXPECT_ERROR_CODE(parse_scene_params({{"colour", "red"}}), ErrorCode::BadParams);
  EXPECT_ERROR_CODE(parse_scene_params({{"min_objects", "x"}}), ErrorCode::BadParams);
  SceneParams bad;
  bad.background_weights = {0.5, 0.1, 0.1};
  EXPECT_ERROR_CODE(bad.validate(), ErrorCode::BadParams);
  bad = SceneParams{};
  bad.min_objects = 3;
  bad.max_objects = 2;
  EXPECT_ERROR_CODE(bad.validate(), ErrorCode::BadParams);
  EXPECT_ERROR_CODE(scene_preset("things"), ErrorCode::BadParams);
}

TEST(Datagen, DatasetOnDiskIsReproducible) {
  TempDir a("ds_a"), b("ds_b"), empty("ds_empty");
  const SceneParams p = scene_preset("complex", 24, 32, 3);
  const Manifest m = generate_dataset(p, 3, a.path());
  generate_dataset(p, 3, b.path());
  ASSERT_EQ(m.entries.size(), 3u);
  std::size_t files = 0;
  for (const auto& e : std::filesystem::directory_iterator(a.path())) {
    ++files;
    EXPECT_EQ(read_file(e.path()), read_file(b.path() / e.path().filename())) << e.path();
  }
  EXPECT_EQ(files, 3u * 4 + 1);
  const auto records = load_dataset(a.path());
  ASSERT_EQ(records.size(), 3u);
  EXPECT_EQ(records[1].flow, generate_sample(p, 1).flow);
  EXPECT_EQ(read_manifest(a.path()).params.to_lines(), p.to_lines());

  EXPECT_TRUE(generate_dataset(p, 0, empty.path()).entries.empty());
  EXPECT_TRUE(load_dataset(empty.path()).empty());
  std::size_t empty_files = 0;
  for ([[maybe_unused]] const auto& e : std::filesystem::directory_iterator(empty.path())) ++empty_files;
  EXPECT_EQ(empty_files, 1u);
}

TEST(Datagen, ManifestLineFormat) {
  TempDir dir("ds_fmt");
  generate_dataset(scene_preset("simple", 12, 16), 2, dir.path());
  std::ifstream in(dir.path() / kManifestName);
  std::string line;
  int records = 0;
  while (std::getline(in, line)) {
    if (line.rfind("#", 0) == 0) continue;
    std::stringstream ss(line);
    std::string field;
    std::vector<std::string> fields;
    while (std::getline(ss, field, '\t')) fields.push_back(field);
    ASSERT_EQ(fields.size(), 5u) << line;
    EXPECT_EQ(std::stoi(fields[0]), records);
    EXPECT_NE(fields[3].find(".flo"), std::string::npos);
    ++records;
  }
  EXPECT_EQ(records, 2);
}

TEST(Datagen, ValidationSplitIsAboutTenPercent) {
  int val = 0;
  for (std::uint64_t i = 0; i < 5000; ++i) val += is_validation_index(i);
  EXPECT_NEAR(val / 5000.0, 0.1, 0.02);
}
