#include <gtest/gtest.h>

#include <cmath>

#include "flowforge/adam.hpp"
#include "flowforge/checkpoint.hpp"
#include "test_util.hpp"

using namespace flowforge;
using namespace flowforge::testing;

namespace {

ParameterSet<float> sample_params(std::uint32_t seed) {
  std::mt19937 rng(seed);
  ParameterSet<float> p;
  p.add("net0/conv1.weight", {3, 3, 2, 4});
  p.add("net0/conv1.bias", {4});
  p.add("fusion/pr0.weight", {1, 1, 4, 2});
  for (auto& x : p) x.value = random_tensor<float>(x.value.shape(), rng);
  return p;
}

}  // namespace

TEST(Adam, FirstStepMovesByLearningRate) {
  ParameterSet<double> p;
  p.add("w", {3});
  p[0].value.data() << 1.0, -2.0, 0.5;
  GradientSet<double> g = zero_gradients(p);
  g[0].data() << 0.3, -4.0, 0.0;
  AdamState<double> st(p);
  adam_step(p, g, st, 0.01);
  EXPECT_NEAR(p[0].value.data()[0], 1.0 - 0.01, 1e-9);
  EXPECT_NEAR(p[0].value.data()[1], -2.0 + 0.01, 1e-9);
  EXPECT_EQ(p[0].value.data()[2], 0.5);
  EXPECT_EQ(st.steps[0], 1);
}

TEST(Adam, MatchesReferenceRecursion) {
  ParameterSet<double> p;
  p.add("w", {1});
  p[0].value.data()[0] = 2.0;
  AdamState<double> st(p);
  double x = 2.0, m = 0.0, v = 0.0;
  for (int t = 1; t <= 25; ++t) {
    GradientSet<double> g = zero_gradients(p);
    g[0].data()[0] = 2.0 * p[0].value.data()[0];
    const double gr = 2.0 * x;
    m = 0.9 * m + 0.1 * gr;
    v = 0.999 * v + 0.001 * gr * gr;
    x -= 0.05 * (m / (1 - std::pow(0.9, t))) / (std::sqrt(v / (1 - std::pow(0.999, t))) + 1e-8);
    adam_step(p, g, st, 0.05);
    EXPECT_NEAR(p[0].value.data()[0], x, 1e-12);
  }
}

TEST(Adam, InactiveParametersKeepValueAndState) {
  ParameterSet<double> p;
  p.add("a", {1});
  p.add("b", {1});
  GradientSet<double> g = zero_gradients(p);
  g[0].data()[0] = 1.0;
  g[1].data()[0] = 1.0;
  AdamState<double> st(p);
  adam_step(p, g, st, 0.1, {}, {true, false});
  EXPECT_EQ(p[1].value.data()[0], 0.0);
  EXPECT_EQ(st.steps[1], 0);
  EXPECT_EQ(st.m[1].data()[0], 0.0);
  EXPECT_NE(p[0].value.data()[0], 0.0);
}

TEST(Checkpoint, RoundTripIsBitExact) {
  const ParameterSet<float> p = sample_params(1);
  const Bytes b = encode_checkpoint(p);
  EXPECT_EQ(std::string(b.begin(), b.begin() + 4), "FFCK");
  const ParameterSet<float> q = decode_checkpoint(b);
  ASSERT_EQ(q.size(), p.size());
  for (std::size_t i = 0; i < p.size(); ++i) {
    EXPECT_EQ(q[i].name, p[i].name);
    EXPECT_EQ(q[i].dims, p[i].dims);
  }
  EXPECT_EQ(parameter_hash(q), parameter_hash(p));
  EXPECT_EQ(encode_checkpoint(q), b);
}

TEST(Checkpoint, RejectsCorruptInput) {
  const Bytes b = encode_checkpoint(sample_params(2));
  for (std::size_t cut : {std::size_t{0}, std::size_t{3}, std::size_t{10}, b.size() - 1})
    EXPECT_ERROR_CODE(decode_checkpoint(std::span(b).first(cut)), ErrorCode::Truncated);
  Bytes bad = b;
  bad[0] = 'X';
  EXPECT_ERROR_CODE(decode_checkpoint(bad), ErrorCode::BadMagic);
  Bytes extra = b;
  extra.push_back(0);
  EXPECT_THROW(decode_checkpoint(extra), Error);
}

TEST(Checkpoint, AssignRequiresMatchingDims) {
  ParameterSet<float> target = sample_params(3);
  const ParameterSet<float> loaded = sample_params(4);
  assign_parameters(target, loaded);
  EXPECT_EQ(parameter_hash(target), parameter_hash(loaded));
  ParameterSet<float> other;
  other.add("net0/conv1.weight", {3, 3, 2, 5});
  EXPECT_ERROR_CODE(assign_parameters(target, other), ErrorCode::DimMismatch);
}

TEST(Parameters, HashSeesSingleBitChange) {
  ParameterSet<float> p = sample_params(5);
  const auto h = parameter_hash(p);
  p[1].value.data()[2] = std::nextafter(p[1].value.data()[2], 10.0f);
  EXPECT_NE(parameter_hash(p), h);
}
