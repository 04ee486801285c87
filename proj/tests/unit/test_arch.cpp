#include <gtest/gtest.h>

#include "arch_tables.hpp"
#include "flowforge/arch.hpp"
#include "flowforge/graph.hpp"
#include "test_util.hpp"

using namespace flowforge;
using namespace flowforge::testing;

namespace {

int audit(const Network& net, const std::vector<TableRow>& table, std::string* report) {
  const auto rows = net.trace(384, 512);
  int mismatches = std::abs(static_cast<int>(rows.size()) - static_cast<int>(table.size()));
  for (std::size_t i = 0; i < std::min(rows.size(), table.size()); ++i) {
    const auto& r = rows[i];
    const auto& t = table[i];
    const bool ok = r.name == t.name && r.kernel == t.kernel && r.stride == t.stride && r.in_channels == t.in_ch &&
                    r.out_channels == t.out_ch && r.in_width == t.in_w && r.in_height == t.in_h &&
                    r.out_width == t.out_w && r.out_height == t.out_h && r.inputs == t.inputs;
    if (!ok) {
      ++mismatches;
      *report += r.name + " ";
    }
  }
  return mismatches;
}

}  // namespace

TEST(Arch, SmallDisplacementUnitMatchesPublishedTable) {
  std::string report;
  EXPECT_EQ(audit(Network({UnitKind::SD, 1.0, 6}), sd_table(), &report), 0) << report;
}

TEST(Arch, FusionUnitMatchesPublishedTable) {
  std::string report;
  EXPECT_EQ(audit(Network({UnitKind::Fusion, 1.0, 11}), fusion_table(), &report), 0) << report;
}

TEST(Arch, SUnitGeometry) {
  const Network net({UnitKind::S, 1.0, 6});
  const auto rows = net.trace(384, 512);
  EXPECT_EQ(rows.front().kernel, 7);
  EXPECT_EQ(rows.front().out_width, 256);
  EXPECT_EQ(net.prediction_names(), (std::vector<std::string>{"pr6", "pr5", "pr4", "pr3", "pr2"}));
  EXPECT_EQ(net.final_prediction(), "pr2");
  const auto& last = rows.back();
  EXPECT_EQ(last.out_width, 128);
  EXPECT_EQ(last.out_height, 96);
  // FlowNet-style decoder: pr5 sees upconv5 + pr6 + conv5_1
  for (const auto& r : rows) {
    if (r.name == "pr5") {
      EXPECT_EQ(r.in_channels, 512 + 2 + 512);
    }
  }
}

TEST(Arch, ParameterCountIsExactEnumeration) {
  for (auto kind : {UnitKind::S, UnitKind::SD}) {
    const Network net({kind, 0.5, 6});
    ParameterSet<float> p;
    net.add_parameters(p, "x/");
    EXPECT_EQ(p.count(), net.parameter_count());
  }
}

TEST(Arch, MultiplierScalesParametersQuadratically) {
  for (auto kind : {UnitKind::S, UnitKind::SD}) {
    const double p1 = Network({kind, 1.0, 6}).parameter_count();
    const double p38 = Network({kind, 0.375, 6}).parameter_count();
    EXPECT_GE(p38 / p1, 0.12);
    EXPECT_LE(p38 / p1, 0.17);
  }
}

TEST(Arch, ScaledChannelsRoundsHalfUp) {
  EXPECT_EQ(scaled_channels(64, 0.125), 8);
  EXPECT_EQ(scaled_channels(2, 0.25), 1);
  EXPECT_EQ(scaled_channels(6, 0.25), 2);
  EXPECT_EQ(scaled_channels(3, 0.01), 1);
}

TEST(Arch, RejectsUnsupportedInputs) {
  EXPECT_ERROR_CODE(Network({UnitKind::SD, 1.0, 8}), ErrorCode::BadSpec);
  EXPECT_ERROR_CODE(Network({UnitKind::Fusion, 1.0, 6}), ErrorCode::BadSpec);
  EXPECT_ERROR_CODE(Network({UnitKind::S, 0.0, 6}), ErrorCode::BadSpec);
  EXPECT_NO_THROW(Network({UnitKind::S, 1.0, 12}));
}

TEST(Arch, ForwardProducesEveryPredictionAtTracedSize) {
  for (auto kind : {UnitKind::S, UnitKind::SD}) {
    const Network net({kind, 0.125, 6, 48, 64});
    ParameterSet<float> p;
    net.add_parameters(p, "n/");
    init_parameters(p, 3);
    std::mt19937 rng(1);
    Graph<float> g;
    const auto preds = net.forward(g, p, "n/", static_cast<GradientSet<float>*>(nullptr), g.constant(random_tensor<float>({2, 48, 64, 6}, rng, 0.0, 1.0)));
    const auto rows = net.trace(48, 64);
    for (const auto& r : rows) {
      if (!preds.count(r.name)) continue;
      const auto& v = g.value(preds.at(r.name));
      EXPECT_EQ(v.shape(), (Shape{2, r.out_height, r.out_width, 2})) << r.name;
      EXPECT_TRUE(v.data().isFinite().all());
    }
    EXPECT_EQ(preds.size(), 5u);
  }
}

TEST(Arch, InitIsSeededFanInUniform) {
  const Network net({UnitKind::S, 0.25, 6});
  ParameterSet<float> a, b, c;
  for (auto* p : {&a, &b, &c}) net.add_parameters(*p, "n/");
  init_parameters(a, 7);
  init_parameters(b, 7);
  init_parameters(c, 8);
  EXPECT_EQ(parameter_hash(a), parameter_hash(b));
  EXPECT_NE(parameter_hash(a), parameter_hash(c));
  for (const auto& p : a) {
    if (p.dims.size() == 1) {
      EXPECT_TRUE((p.value.data() == 0.0f).all()) << p.name;
    } else if (p.name.find("upconv") == std::string::npos) {
      const double bound = std::sqrt(2.0 / 1.01) * std::sqrt(3.0 / (p.dims[0] * p.dims[1] * p.dims[2]));
      EXPECT_LE(p.value.data().abs().maxCoeff(), bound + 1e-6) << p.name;
      EXPECT_GT(p.value.data().abs().maxCoeff(), 0.5 * bound) << p.name;
    }
  }
}
