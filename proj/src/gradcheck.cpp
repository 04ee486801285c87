#include "flowforge/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <type_traits>

#include "flowforge/loss.hpp"
#include "flowforge/ops.hpp"
#include "flowforge/rng.hpp"
#include "flowforge/stack.hpp"

namespace flowforge {

namespace {

constexpr double kThreshold = 1e-3;
constexpr double kAdjointThreshold = 1e-5;
constexpr double kDenominatorFloor = 1e-3;

template <typename S>
Tensor<S> random_tensor(Rng& rng, Shape shape, double lo, double hi) {
  Tensor<S> t(shape);
  for (Eigen::Index i = 0; i < t.size(); ++i) t.data()[i] = static_cast<S>(rng.uniform(lo, hi));
  return t;
}

template <typename S>
double probe(const Tensor<S>& y, const Tensor<S>& r) {
  return (y.data().template cast<double>() * r.data().template cast<double>()).sum();
}

/// Compares analytic float gradients of <build(inputs), r> with central
/// differences. Perturbed inputs are float values; the oracle evaluates the
/// same expression in double so its own rounding stays far below tolerance.
template <typename F>
double fd_error(const F& build, std::vector<Tensor<float>> inputs, const std::vector<bool>& checked, double step, Rng& rng,
                bool flip) {
  Graph<float> g;
  std::vector<Var> vars;
  for (std::size_t i = 0; i < inputs.size(); ++i) {
    vars.push_back(checked[i] ? g.variable(inputs[i]) : g.constant(inputs[i]));
  }
  const Var y = build(g, vars);
  Tensor<float> r = random_tensor<float>(rng, g.value(y).shape(), -1.0, 1.0);
  if (r.size() == 1) r.data()[0] = 1.0f;
  const Var loss = dot(g, y, r);
  g.backward(loss);
  const Tensor<double> r64 = r.cast<double>();

  auto evaluate = [&](const std::vector<Tensor<float>>& in) {
    Graph<double> h;
    std::vector<Var> v;
    for (const auto& t : in) v.push_back(h.constant(t.cast<double>()));
    return probe(h.value(build(h, v)), r64);
  };

  double max_diff = 0.0;
  double max_num = 0.0;
  for (std::size_t i = 0; i < inputs.size(); ++i) {
    if (!checked[i]) continue;
    Tensor<float> analytic = g.grad(vars[i]);
    if (flip) analytic.data() = -analytic.data();
    for (Eigen::Index j = 0; j < inputs[i].size(); ++j) {
      const float saved = inputs[i].data()[j];
      const float hi = static_cast<float>(saved + step);
      const float lo = static_cast<float>(saved - step);
      inputs[i].data()[j] = hi;
      const double up = evaluate(inputs);
      inputs[i].data()[j] = lo;
      const double down = evaluate(inputs);
      inputs[i].data()[j] = saved;
      const double numeric = (up - down) / (static_cast<double>(hi) - static_cast<double>(lo));
      max_diff = std::max(max_diff, std::abs(static_cast<double>(analytic.data()[j]) - numeric));
      max_num = std::max(max_num, std::abs(numeric));
    }
  }
  return max_diff / std::max(max_num, kDenominatorFloor);
}

CheckResult finish(std::string op, double err, double threshold, int trials) {
  return {std::move(op), err, threshold, trials, err < threshold};
}

/// Flow whose sample points stay >= 0.05 from integer coordinates; about
/// one pixel in ten points well outside the image.
Tensor<float> warp_test_flow(Rng& rng, int h, int w) {
  Tensor<float> flow({1, h, w, 2});
  auto off_integer = [&](double lo, double hi) {
    const double base = std::floor(rng.uniform(lo, hi));
    return base + rng.uniform(0.05, 0.95);
  };
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      if (rng.uniform() < 0.1) {
        flow(0, y, x, 0) = static_cast<float>(rng.uniform() < 0.5 ? -x - 1.5 : w - x + 0.5);
        flow(0, y, x, 1) = static_cast<float>(rng.uniform(-1.0, 1.0));
        continue;
      }
      const double p = w > 1 ? off_integer(0.0, w - 1.0) : 0.0;
      const double q = h > 1 ? off_integer(0.0, h - 1.0) : 0.0;
      flow(0, y, x, 0) = static_cast<float>(p - x);
      flow(0, y, x, 1) = static_cast<float>(q - y);
    }
  }
  return flow;
}

}  // namespace

std::vector<std::string> gradcheck_ops() {
  return {"warp",         "conv2d",    "upconv2d",  "leaky_relu",   "brightness_error",
          "magnitude",    "loss_exp1", "loss_exp0.4", "conv_adjoint", "stack"};
}

CheckResult check_warp(const GradcheckOptions& opts) {
  Rng rng(mix64(opts.seed, 101));
  double worst = 0.0;
  for (int t = 0; t < opts.trials; ++t) {
    const int h = rng.between(2, 8), w = rng.between(2, 8), c = rng.between(1, 3);
    std::vector<Tensor<float>> in{random_tensor<float>(rng, {1, h, w, c}, 0.0, 1.0), warp_test_flow(rng, h, w)};
    const auto build = [](auto& g, const std::vector<Var>& v) { return warp(g, v[0], v[1]); };
    worst = std::max(worst, fd_error(build, in, {true, true}, 1e-2, rng, opts.broken.count("warp") > 0));
  }
  return finish("warp", worst, kThreshold, opts.trials);
}

CheckResult check_conv2d(const GradcheckOptions& opts) {
  Rng rng(mix64(opts.seed, 102));
  double worst = 0.0;
  for (int t = 0; t < opts.trials; ++t) {
    const int k = 1 + 2 * rng.between(0, 2), stride = rng.between(1, 2);
    const int h = rng.between(k, 8), w = rng.between(k, 8), cin = rng.between(1, 4), cout = rng.between(1, 4);
    std::vector<Tensor<float>> in{random_tensor<float>(rng, {1, h, w, cin}, -1.0, 1.0),
                                  random_tensor<float>(rng, {k, k, cin, cout}, -1.0, 1.0),
                                  random_tensor<float>(rng, {1, 1, 1, cout}, -1.0, 1.0)};
    const auto build = [=](auto& g, const std::vector<Var>& v) {
      return conv2d(g, v[0], v[1], v[2], stride, k / 2);
    };
    worst = std::max(worst, fd_error(build, in, {true, true, true}, 1e-2, rng, opts.broken.count("conv2d") > 0));
  }
  return finish("conv2d", worst, kThreshold, opts.trials);
}

CheckResult check_upconv2d(const GradcheckOptions& opts) {
  Rng rng(mix64(opts.seed, 103));
  double worst = 0.0;
  for (int t = 0; t < opts.trials; ++t) {
    const int h = rng.between(1, 4), w = rng.between(1, 4), cin = rng.between(1, 4), cout = rng.between(1, 4);
    std::vector<Tensor<float>> in{random_tensor<float>(rng, {1, h, w, cin}, -1.0, 1.0),
                                  random_tensor<float>(rng, {4, 4, cout, cin}, -1.0, 1.0),
                                  random_tensor<float>(rng, {1, 1, 1, cout}, -1.0, 1.0)};
    const auto build = [](auto& g, const std::vector<Var>& v) {
      return upconv2d(g, v[0], v[1], v[2], 2, 1);
    };
    worst = std::max(worst, fd_error(build, in, {true, true, true}, 1e-2, rng, opts.broken.count("upconv2d") > 0));
  }
  return finish("upconv2d", worst, kThreshold, opts.trials);
}

CheckResult check_leaky_relu(const GradcheckOptions& opts) {
  Rng rng(mix64(opts.seed, 104));
  double worst = 0.0;
  for (int t = 0; t < opts.trials; ++t) {
    Tensor<float> x = random_tensor<float>(rng, {1, rng.between(1, 8), rng.between(1, 8), rng.between(1, 4)}, -1.0, 1.0);
    for (Eigen::Index i = 0; i < x.size(); ++i) {
      if (std::abs(x.data()[i]) < 0.05f) x.data()[i] = x.data()[i] < 0 ? -0.5f : 0.5f;
    }
    const auto build = [](auto& g, const std::vector<Var>& v) {
      using S = typename std::decay_t<decltype(g.value(v[0]))>::value_type;
      return leaky_relu(g, v[0], S(0.1));
    };
    worst = std::max(worst, fd_error(build, {x}, {true}, 1e-2, rng, opts.broken.count("leaky_relu") > 0));
  }
  return finish("leaky_relu", worst, kThreshold, opts.trials);
}

CheckResult check_brightness_error(const GradcheckOptions& opts) {
  Rng rng(mix64(opts.seed, 105));
  double worst = 0.0;
  for (int t = 0; t < opts.trials; ++t) {
    const Shape s{1, rng.between(1, 8), rng.between(1, 8), rng.between(1, 3)};
    const bool squared = t % 2 == 1;
    std::vector<Tensor<float>> in{random_tensor<float>(rng, s, 0.0, 1.0), random_tensor<float>(rng, s, 0.0, 1.0)};
    for (Eigen::Index i = 0; i < in[0].size(); ++i) in[1].data()[i] = in[0].data()[i] + (rng.uniform() < 0.5 ? -0.3f : 0.3f);
    const auto build = [=](auto& g, const std::vector<Var>& v) {
      return brightness_error(g, v[0], v[1], squared);
    };
    worst = std::max(worst, fd_error(build, in, {true, true}, 1e-3, rng, opts.broken.count("brightness_error") > 0));
  }
  return finish("brightness_error", worst, kThreshold, opts.trials);
}

CheckResult check_magnitude(const GradcheckOptions& opts) {
  Rng rng(mix64(opts.seed, 106));
  double worst = 0.0;
  for (int t = 0; t < opts.trials; ++t) {
    Tensor<float> f = random_tensor<float>(rng, {1, rng.between(1, 8), rng.between(1, 8), 2}, 0.2, 2.0);
    for (Eigen::Index i = 0; i < f.size(); ++i) {
      if (rng.uniform() < 0.5) f.data()[i] = -f.data()[i];
    }
    const auto build = [](auto& g, const std::vector<Var>& v) { return magnitude(g, v[0]); };
    worst = std::max(worst, fd_error(build, {f}, {true}, 1e-3, rng, opts.broken.count("magnitude") > 0));
  }
  return finish("magnitude", worst, kThreshold, opts.trials);
}

CheckResult check_loss(const GradcheckOptions& opts, double exponent) {
  const std::string name = exponent == 1.0 ? "loss_exp1" : "loss_exp0.4";
  Rng rng(mix64(opts.seed, exponent == 1.0 ? 107 : 108));
  double worst = 0.0;
  for (int t = 0; t < opts.trials; ++t) {
    const int h = rng.between(1, 3), w = rng.between(1, 3);
    std::vector<Tensor<float>> in{random_tensor<float>(rng, {1, h, w, 2}, -2.0, 2.0),
                                  random_tensor<float>(rng, {1, 2 * h, 2 * w, 2}, -2.0, 2.0),
                                  random_tensor<float>(rng, {1, 4 * h, 4 * w, 2}, -2.0, 2.0)};
    // keep every predicted vector >= 0.05 from its target, away from the
    // kink of |d|^alpha at d = 0
    for (int k = 0; k < 2; ++k) {
      Tensor<float>& pred = in[k];
      const Shape ps = pred.shape();
      const Gridf target = downsample_to(in[2].item(0), ps.h, ps.w);
      for (int y = 0; y < ps.h; ++y) {
        for (int x = 0; x < ps.w; ++x) {
          const double du = pred(0, y, x, 0) - target(y, x, 0), dv = pred(0, y, x, 1) - target(y, x, 1);
          if (std::hypot(du, dv) < 0.05) pred(0, y, x, 0) = target(y, x, 0) + (du < 0 ? -0.1f : 0.1f);
        }
      }
    }
    LossSpec spec;
    spec.scale_weights = {{"pr3", 0.5}, {"pr2", 1.0}};
    spec.error_exponent = exponent;
    const Tensor<float> truth = in[2];
    const Tensor<double> truth64 = truth.cast<double>();
    const auto build = [=](auto& g, const std::vector<Var>& v) {
      if constexpr (std::is_same_v<std::decay_t<decltype(g)>, Graph<float>>) {
        return multiscale_epe_loss(g, {{"pr3", v[0]}, {"pr2", v[1]}}, truth, spec);
      } else {
        return multiscale_epe_loss(g, {{"pr3", v[0]}, {"pr2", v[1]}}, truth64, spec);
      }
    };
    worst = std::max(worst, fd_error(build, in, {true, true, false}, 1e-3, rng, opts.broken.count(name) > 0));
  }
  return finish(name, worst, kThreshold, opts.trials);
}

CheckResult check_conv_adjoint(const GradcheckOptions& opts) {
  Rng rng(mix64(opts.seed, 109));
  double worst = 0.0;
  for (int t = 0; t < opts.trials; ++t) {
    const int h = 2 * rng.between(1, 4), w = 2 * rng.between(1, 4), a = rng.between(1, 4), b = rng.between(1, 4);
    const auto x = random_tensor<double>(rng, {1, h, w, a}, -1.0, 1.0);
    const auto y = random_tensor<double>(rng, {1, h / 2, w / 2, b}, -1.0, 1.0);
    const auto weight = random_tensor<double>(rng, {4, 4, a, b}, -1.0, 1.0);
    Graph<double> g;
    const Var wv = g.constant(weight);
    const Var conv_bias = g.constant(Tensor<double>({1, 1, 1, b}));
    const Var up_bias = g.constant(Tensor<double>({1, 1, 1, a}));
    const Var cx = conv2d(g, g.constant(x), wv, conv_bias, 2, 1);
    const Var uy = upconv2d(g, g.constant(y), wv, up_bias, 2, 1);
    double lhs = probe(g.value(cx), y);
    const double rhs = probe(g.value(uy), x);
    if (opts.broken.count("conv_adjoint")) lhs = -lhs;
    worst = std::max(worst, std::abs(lhs - rhs) / std::max(std::abs(lhs), 1e-12));
  }
  return finish("conv_adjoint", worst, kAdjointThreshold, opts.trials);
}

CheckResult check_stack(const GradcheckOptions& opts) {
  Rng rng(mix64(opts.seed, 110));
  const StackSpec spec = parse_stack_spec("S+W+S@0.0625", 12, 16);
  const int trials = 2;
  const int entries_per_unit = 12;
  double worst = 0.0;
  for (int t = 0; t < trials; ++t) {
    auto params = make_stack_parameters<double>(spec, mix64(opts.seed, 200 + t));
    for (auto& p : params) {
      if (p.dims.size() == 1) {
        for (Eigen::Index i = 0; i < p.value.size(); ++i) p.value.data()[i] = rng.uniform(-0.1, 0.1);
      }
    }
    const auto i1 = random_tensor<double>(rng, {1, 12, 16, 3}, 0.0, 1.0);
    const auto i2 = random_tensor<double>(rng, {1, 12, 16, 3}, 0.0, 1.0);
    const auto truth = random_tensor<double>(rng, {1, 12, 16, 2}, -2.0, 2.0);

    auto run = [&](GradientSet<double>* grads) {
      Graph<double> g;
      const auto out = forward_stack(g, spec, params, grads, g.constant(i1), g.constant(i2));
      std::vector<Var> terms;
      for (const auto& preds : out.predictions) {
        LossSpec ls;
        for (const auto& [name, v] : preds) ls.scale_weights[name] = 1.0;
        terms.push_back(multiscale_epe_loss(g, preds, truth, ls));
      }
      const Var loss = sum_scalars(g, std::span<const Var>(terms));
      if (grads) g.backward(loss);
      return static_cast<double>(g.value(loss).data()[0]);
    };

    GradientSet<double> grads = zero_gradients(params);
    run(&grads);
    if (opts.broken.count("stack")) {
      for (auto& gr : grads) gr.data() = -gr.data();
    }

    double max_diff = 0.0, max_num = 0.0;
    const double step = 1e-6;
    for (std::size_t unit = 0; unit < 2; ++unit) {
      const std::string prefix = spec.prefix(unit);
      std::vector<std::size_t> owned;
      for (std::size_t i = 0; i < params.size(); ++i) {
        if (params[i].name.rfind(prefix, 0) == 0) owned.push_back(i);
      }
      for (int e = 0; e < entries_per_unit; ++e) {
        const std::size_t pi = owned[rng.below(owned.size())];
        const Eigen::Index j = static_cast<Eigen::Index>(rng.below(static_cast<std::uint64_t>(params[pi].value.size())));
        double& slot = params[pi].value.data()[j];
        const double saved = slot;
        slot = saved + step;
        const double up = run(nullptr);
        slot = saved - step;
        const double down = run(nullptr);
        slot = saved;
        const double numeric = (up - down) / (2.0 * step);
        max_diff = std::max(max_diff, std::abs(grads[pi].data()[j] - numeric));
        max_num = std::max(max_num, std::abs(numeric));
      }
    }
    worst = std::max(worst, max_diff / std::max(max_num, kDenominatorFloor));
  }
  return finish("stack", worst, kThreshold, trials);
}

std::vector<CheckResult> run_gradcheck_suite(const GradcheckOptions& opts) {
  GradcheckOptions small = opts;
  small.trials = std::max(1, std::min(opts.trials, 50));
  return {check_warp(opts),         check_conv2d(small),       check_upconv2d(small),
          check_leaky_relu(small),  check_brightness_error(small), check_magnitude(small),
          check_loss(small, 1.0),   check_loss(small, 0.4),    check_conv_adjoint(opts),
          check_stack(opts)};
}

}  // namespace flowforge
