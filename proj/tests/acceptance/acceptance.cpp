// Acceptance suite: one PASS/FAIL line per criterion.
//   flowforge_acceptance                 criteria 1-9
//   flowforge_acceptance --criteria 10   one soft trend experiment
#include <CLI11.hpp>

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <functional>
#include <iostream>
#include <random>
#include <sstream>

#include "arch_tables.hpp"
#include "flowforge/arch.hpp"
#include "flowforge/checkpoint.hpp"
#include "flowforge/datagen.hpp"
#include "flowforge/flo_io.hpp"
#include "flowforge/flow_color.hpp"
#include "flowforge/gradcheck.hpp"
#include "flowforge/metrics.hpp"
#include "flowforge/schedule.hpp"
#include "flowforge/stack.hpp"
#include "oracles.hpp"
#include "random_data.hpp"

using namespace flowforge;
using namespace flowforge::testing;

namespace {

using Tensorf = Tensor<float>;

struct Verdict {
  bool pass = true;
  std::ostringstream detail;

  void require(bool ok, const std::string& what) {
    if (!ok) {
      pass = false;
      detail << " [failed: " << what << "]";
    }
  }
};

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

std::string sci(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.3g", v);
  return buf;
}

// ---------------------------------------------------------------- hard gates

Verdict warp_gradients() {
  Verdict v;
  const auto t0 = Clock::now();
  const CheckResult r = check_warp({200, 1, {}});
  const double t = seconds_since(t0);
  v.detail << "max rel err " << sci(r.max_rel_error) << " over " << r.trials << " pairs, " << sci(t) << " s";
  v.require(r.max_rel_error < 1e-3, "rel err < 1e-3");
  v.require(t < 10.0, "runtime < 10 s");
  return v;
}

Verdict warp_identity_and_outside() {
  Verdict v;
  std::mt19937 rng(2);
  int identity_bad = 0, outside_bad = 0, checked = 0;
  for (int t = 0; t < 50; ++t) {
    const int h = 2 + t % 7, w = 3 + t % 5;
    const Tensorf img = random_tensor<float>({1, h, w, 3}, rng, 0.0, 1.0);
    {
      Graph<float> g;
      const Tensorf out = g.value(warp(g, g.constant(img), g.constant(Tensorf({1, h, w, 2}))));
      if (std::memcmp(out.data().data(), img.data().data(), sizeof(float) * img.size()) != 0) ++identity_bad;
    }
    // half the pixels point outside the frame
    Tensorf flow = random_tensor<float>({1, h, w, 2}, rng, -0.4, 0.4);
    std::vector<bool> out_px(h * w);
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x)
        if ((out_px[y * w + x] = (x + y) % 2 == 0)) flow(0, y, x, (x + t) % 2) = (t % 3 == 0 ? -1.0f : 1.0f) * (w + h + 0.5f);
    Graph<float> g;
    const Var vi = g.variable(img), vf = g.variable(flow);
    const Var y = warp(g, vi, vf);
    const Tensorf r = random_tensor<float>(g.value(y).shape(), rng);
    g.backward(dot(g, y, r));
    // every inside sample point lies within [0, w-1] x [0, h-1]; the image
    // gradient may only come from inside pixels
    Tensorf only_inside = r;
    for (int yy = 0; yy < h; ++yy)
      for (int xx = 0; xx < w; ++xx)
        if (out_px[yy * w + xx]) {
          ++checked;
          for (int c = 0; c < 3; ++c) {
            if (g.value(y)(0, yy, xx, c) != 0.0f) ++outside_bad;
            only_inside(0, yy, xx, c) = 0.0f;
          }
          if (g.grad(vf)(0, yy, xx, 0) != 0.0f || g.grad(vf)(0, yy, xx, 1) != 0.0f) ++outside_bad;
        }
    Graph<float> h2;
    const Var vi2 = h2.variable(img);
    h2.backward(dot(h2, warp(h2, vi2, h2.constant(flow)), only_inside));
    if (!(h2.grad(vi2).data() == g.grad(vi).data()).all()) ++outside_bad;
  }
  v.detail << "identity mismatches " << identity_bad << "/50, outside violations " << outside_bad << " over " << checked
           << " outside pixels";
  v.require(identity_bad == 0, "warp(I, 0) == I bit-exactly");
  v.require(outside_bad == 0, "outside pixels and gradients exactly 0");
  return v;
}

int audit(const Network& net, const std::vector<TableRow>& table) {
  const auto rows = net.trace(384, 512);
  int bad = std::abs(static_cast<int>(rows.size()) - static_cast<int>(table.size()));
  for (std::size_t i = 0; i < std::min(rows.size(), table.size()); ++i) {
    const auto& r = rows[i];
    const auto& t = table[i];
    bad += !(r.name == t.name && r.kernel == t.kernel && r.stride == t.stride && r.in_channels == t.in_ch &&
             r.out_channels == t.out_ch && r.in_width == t.in_w && r.in_height == t.in_h && r.out_width == t.out_w &&
             r.out_height == t.out_h && r.inputs == t.inputs);
  }
  return bad;
}

Verdict table_audits() {
  Verdict v;
  const int sd = audit(Network({UnitKind::SD, 1.0, 6}), sd_table());
  const int fu = audit(Network({UnitKind::Fusion, 1.0, 11}), fusion_table());
  v.detail << "SD unit " << sd_table().size() << " rows, " << sd << " discrepancies; fusion unit " << fusion_table().size()
           << " rows, " << fu << " discrepancies";
  v.require(sd == 0 && fu == 0, "zero discrepancies");
  return v;
}

Verdict operator_suite() {
  Verdict v;
  const GradcheckOptions opts{200, 1, {}};
  const auto t0 = Clock::now();
  std::vector<CheckResult> results{check_conv2d(opts),        check_upconv2d(opts),   check_leaky_relu(opts),
                                   check_loss(opts, 1.0),     check_loss(opts, 0.4),  check_stack(opts),
                                   check_conv_adjoint(opts)};
  const double t = seconds_since(t0);
  for (const auto& r : results) {
    v.detail << r.op << " " << sci(r.max_rel_error) << ", ";
    const double limit = r.op == "conv_adjoint" ? 1e-5 : 1e-3;
    v.require(r.max_rel_error < limit, r.op + " < " + sci(limit));
  }
  v.detail << sci(t) << " s";
  v.require(t < 60.0, "runtime < 60 s");
  return v;
}

Verdict multiplier_scaling() {
  Verdict v;
  for (auto kind : {UnitKind::S, UnitKind::SD}) {
    const double full = Network({kind, 1.0, 6}).parameter_count();
    const double ratio = Network({kind, 0.375, 6}).parameter_count() / full;
    v.detail << to_string(kind) << " " << static_cast<long long>(full) << " weights, ratio " << sci(ratio) << "; ";
    v.require(ratio >= 0.12 && ratio <= 0.17, to_string(kind) + " ratio in [0.12, 0.17]");
  }
  const double two = 2.0 * Network({UnitKind::S, 0.375, 6}).parameter_count();
  v.detail << "two S units at 3/8: " << sci(two) << " weights";
  return v;
}

Verdict round_trips() {
  Verdict v;
  std::mt19937 rng(6);
  int flo_bad = 0;
  for (int t = 0; t < 20; ++t) {
    FlowFieldf f = random_flow(1 + t % 9, 1 + (t * 7) % 13, rng, 50.0);
    f.u(0, 0) = t % 2 ? -0.0f : 1e30f;
    const Bytes bytes = write_flo(f);
    const FlowFieldf back = read_flo(bytes);
    if (write_flo(back) != bytes ||
        std::memcmp(back.grid().data().data(), f.grid().data().data(), sizeof(float) * f.grid().data().size()) != 0) {
      ++flo_bad;
    }
  }
  const auto spec = parse_stack_spec("S+W+S|D|F@0.125");
  const auto params = make_stack_parameters<float>(spec, 6);
  const Bytes ck = encode_checkpoint(params);
  const bool ck_ok = encode_checkpoint(decode_checkpoint(ck)) == ck &&
                     parameter_hash(decode_checkpoint(ck)) == parameter_hash(params);
  const Bytes sck = encode_stack_checkpoint(spec, params);
  const auto [spec2, params2] = decode_stack_checkpoint(sck);
  const bool sck_ok = encode_stack_checkpoint(spec2, params2) == sck;
  const Gridf white = colorize_flow(FlowFieldf(7, 5));
  const bool white_ok = (white.data() == 1.0f).all();
  v.detail << ".flo mismatches " << flo_bad << "/20, checkpoint " << (ck_ok ? "exact" : "differs") << ", stack checkpoint "
           << (sck_ok ? "exact" : "differs") << ", zero flow " << (white_ok ? "white" : "not white");
  v.require(flo_bad == 0 && ck_ok && sck_ok && white_ok, "bit-exact round trips and white zero");
  return v;
}

Verdict datagen_consistency() {
  Verdict v;
  for (const char* preset : {"simple", "complex", "sdhom"}) {
    SceneParams p = scene_preset(preset);
    // brightness perturbation deliberately breaks constancy; judge the geometry
    p.brightness_perturbation = 0.0;
    double total = 0.0;
    for (std::uint64_t i = 0; i < 100; ++i) total += photometric_error(generate_sample(p, i));
    v.detail << preset << " photometric " << sci(total / 100) << ", ";
    v.require(total / 100 < 0.02, std::string(preset) + " photometric < 0.02");
  }
  double gap = 0.0;
  for (const char* preset : {"simple", "complex", "sdhom"}) {
    const SceneParams p = scene_preset(preset, 12, 16);
    for (std::uint64_t i = 0; i < 100; ++i) {
      const Scene s = build_scene(p, i);
      gap = std::max(gap, oracle_flow_gap(s, render_scene(s).flow));
    }
  }
  v.detail << "16x12 oracle max gap " << sci(gap) << " px";
  v.require(gap < 1e-5, "rasterization oracle agrees to float precision");
  return v;
}

Verdict metrics_oracles() {
  Verdict v;
  std::mt19937 rng(8);
  double worst = 0.0;
  for (int t = 0; t < 50; ++t) {
    const int h = 1 + t % 11, w = 1 + (t * 5) % 17;
    const FlowFieldf a = random_flow(h, w, rng, 8.0), b = random_flow(h, w, rng, 8.0);
    worst = std::max(worst, std::abs(epe(a, b) - brute_epe(a, b)) / std::max(brute_epe(a, b), 1e-12));
    const double fl = brute_fl(a, b);
    worst = std::max(worst, std::abs(fl_all(a, b) - fl) / std::max(fl, 1e-12));
  }
  auto one = [](float u, float v) {
    FlowFieldf f(1, 1);
    f.u(0, 0) = u;
    f.v(0, 0) = v;
    return f;
  };
  // (estimate, truth, outlier?)
  const std::vector<std::tuple<FlowFieldf, FlowFieldf, bool>> cases{
      {one(13, 0), one(10, 0), true},     // 3 px and 30%
      {one(12.9f, 0), one(10, 0), false}, // under 3 px
      {one(104, 0), one(100, 0), false},  // 4 px but 4%
      {one(105, 0), one(100, 0), true},   // 5 px and exactly 5%
      {one(3, 0), one(0, 0), true},       // zero truth
      {one(0, 2.9f), one(0, 0), false},
  };
  int case_bad = 0;
  for (const auto& [e, g, outlier] : cases) case_bad += (fl_all(e, g) == 1.0) != outlier;
  v.detail << "max rel deviation " << sci(worst) << " on 50 pairs, " << case_bad << "/" << cases.size()
           << " constructed cases wrong";
  v.require(worst < 1e-6 && case_bad == 0, "oracle equivalence");
  return v;
}

Verdict schedule_shape() {
  Verdict v;
  const LrSchedule s = s_short(1.0);
  const std::vector<std::pair<std::int64_t, double>> expected{{0, 1e-4}, {300000, 5e-5}, {400000, 2.5e-5}, {500000, 1.25e-5}};
  bool exact = s.total_iters == 600000 && s.segments == expected;
  for (std::int64_t it : {0, 299999, 300000, 399999, 400000, 500000, 599999}) {
    const double want = it < 300000 ? 1e-4 : 1e-4 / std::pow(2.0, 1 + (it - 300000) / 100000);
    exact = exact && s.lr_at(it) == want;
  }
  bool monotone = true;
  for (double scale : {1.0, 0.005}) {
    for (const auto& sch : {s_short(scale), s_long(scale), s_fine(scale)}) {
      for (std::size_t i = 1; i < sch.segments.size(); ++i) monotone = monotone && sch.segments[i].second <= sch.segments[i - 1].second;
    }
  }
  const CurriculumSpec ft = ft_sd_curriculum(0.005, 8);
  const auto& mix = ft.stages.at(0).mixture;
  bool mixture = mix.size() == 2 && mix.at(kComplexDataset) == 2 && mix.at(kSdhomDataset) == 6;
  MixtureSampler sampler({{kComplexDataset, 37}, {kSdhomDataset, 91}}, 4);
  for (int b = 0; b < 200; ++b) {
    int c = 0, d = 0;
    for (const auto& [id, pos] : sampler.next_batch(mix)) (id == kComplexDataset ? c : d)++;
    mixture = mixture && c == 2 && d == 6;
  }
  v.detail << "s_short(1) " << (exact ? "exact" : "wrong") << ", schedules " << (monotone ? "non-increasing" : "increase")
           << ", fine-tuning batches " << (mixture ? "2+6 in all 200" : "wrong mixture");
  v.require(exact && monotone && mixture, "schedule shape");
  return v;
}

// ---------------------------------------------------------------- soft trends

constexpr int kSamples = 8000;

std::vector<SampleRecord> make_records(const std::string& preset, std::uint64_t seed) {
  const SceneParams p = scene_preset(preset, 48, 64, seed);
  std::vector<SampleRecord> out;
  out.reserve(kSamples);
  for (int i = 0; i < kSamples; ++i) out.push_back(generate_sample(p, i));
  return out;
}

double zero_flow_epe(const std::vector<SampleRecord>& recs) {
  double s = 0.0;
  for (const auto& r : recs) s += epe(FlowFieldf(r.flow.height(), r.flow.width()), r.flow);
  return s / recs.size();
}

TrainOptions quiet(std::uint64_t seed, const std::string& tag) {
  TrainOptions o;
  o.seed = seed;
  o.on_log = [tag](const LogRow& r) {
    std::cerr << "  " << tag << " iter " << r.iter << " loss " << sci(r.train_loss) << " val " << sci(r.val_epe) << "\n";
  };
  return o;
}

const std::vector<std::uint64_t> kSeeds{1, 2, 3};

Verdict stacking_trend() {
  Verdict v;
  const auto boot_spec = parse_stack_spec("S@0.125");
  const auto stack_spec = parse_stack_spec("S+W+S@0.125");
  int wins = 0;
  for (auto seed : kSeeds) {
    auto [simple_train, val] = split_validation(make_records(kSimpleDataset, seed));
    auto complex_train = split_validation(make_records(kComplexDataset, seed)).first;
    const TrainData data{{{kSimpleDataset, simple_train}, {kComplexDataset, complex_train}}, val};
    // bootstrap on simple then complex; the second unit on simple with S_long
    const auto boot = train_stack(boot_spec, TrainPolicy{}, curriculum(StagePlan::SimpleThenComplex, 0.005, 8), data,
                                  quiet(seed, "S seed " + std::to_string(seed)));
    const auto cur = single_stage(kSimpleDataset, s_long(0.005), 8);
    TrainPolicy frozen;
    frozen.trainable = {false, true};
    frozen.freeze_until = 0;
    TrainOptions o = quiet(seed, "S+W+S seed " + std::to_string(seed));
    o.warm_start = &boot.params;
    const auto stacked = train_stack(stack_spec, frozen, cur, data, o);
    const double e1 = evaluate_epe(boot_spec, boot.params, val);
    const double e2 = evaluate_epe(stack_spec, stacked.params, val);
    const bool win = e2 <= 0.97 * e1;
    wins += win;
    v.detail << "seed " << seed << ": S " << sci(e1) << " -> S+W+S " << sci(e2) << " (zero flow " << sci(zero_flow_epe(val))
             << ")" << (win ? " win; " : "; ");
  }
  v.detail << wins << "/3 seeds improve by >= 3%";
  v.require(wins >= 2, ">= 2 of 3 seeds");
  return v;
}

double subpixel_epe(const StackSpec& spec, const ParameterSet<float>& params, const std::vector<SampleRecord>& recs,
                    bool moving_only) {
  double s = 0.0;
  int n = 0;
  for (const auto& r : recs) {
    Gridf mask(r.flow.height(), r.flow.width(), 1);
    int count = 0;
    for (int y = 0; y < mask.height(); ++y)
      for (int x = 0; x < mask.width(); ++x) {
        const double m = std::hypot(r.flow.u(y, x), r.flow.v(y, x));
        mask(y, x) = m < 1.0 && (!moving_only || m > 0.0) ? 1.0f : 0.0f;
        count += mask(y, x) > 0;
      }
    if (count == 0) continue;
    s += epe(predict_flow(spec, params, r.i1, r.i2), r.flow, mask);
    ++n;
  }
  return n ? s / n : 0.0;
}

Verdict small_displacement_trend() {
  Verdict v;
  const auto spec = parse_stack_spec("D@0.125");
  int wins = 0;
  for (auto seed : kSeeds) {
    auto [train, val] = split_validation(make_records(kSdhomDataset, seed));
    const TrainData data{{{kSdhomDataset, train}}, val};
    const auto cur = single_stage(kSdhomDataset, s_long(0.005), 8);
    double all[2], moving[2];
    for (int k = 0; k < 2; ++k) {
      TrainPolicy p;
      p.error_exponent = k == 0 ? 1.0 : 0.4;
      const auto res = train_stack(spec, p, cur, data, quiet(seed, "D x^" + sci(p.error_exponent) + " seed " + std::to_string(seed)));
      all[k] = subpixel_epe(spec, res.params, val, false);
      moving[k] = subpixel_epe(spec, res.params, val, true);
    }
    const bool win = all[1] <= all[0];
    wins += win;
    v.detail << "seed " << seed << ": |gt|<1 EPE x^1 " << sci(all[0]) << " vs x^0.4 " << sci(all[1]) << " (moving only "
             << sci(moving[0]) << " vs " << sci(moving[1]) << ")" << (win ? " win; " : "; ");
  }
  v.detail << wins << "/3 seeds";
  v.require(wins >= 2, ">= 2 of 3 seeds");
  return v;
}

Verdict curriculum_harness() {
  Verdict v;
  auto [simple_train, simple_val] = split_validation(make_records(kSimpleDataset, 1));
  auto [complex_train, complex_val] = split_validation(make_records(kComplexDataset, 1));
  const TrainData data{{{kSimpleDataset, simple_train}, {kComplexDataset, complex_train}}, complex_val};
  const auto spec = parse_stack_spec("S@0.125");
  std::ostringstream table;
  table << "  plan                 iters  val_epe_complex  val_epe_simple\n";
  int ran = 0;
  for (auto plan : {StagePlan::SimpleOnly, StagePlan::ComplexOnly, StagePlan::Mixed, StagePlan::SimpleThenComplex}) {
    const auto cur = curriculum(plan, 0.005, 8);
    const auto res = train_stack(spec, TrainPolicy{}, cur, data, quiet(1, to_string(plan)));
    const double ec = evaluate_epe(spec, res.params, complex_val);
    const double es = evaluate_epe(spec, res.params, simple_val);
    char line[128];
    std::snprintf(line, sizeof line, "  %-20s %6lld  %15.4f  %14.4f\n", to_string(plan).c_str(),
                  static_cast<long long>(cur.total_iters()), ec, es);
    table << line;
    ran += std::isfinite(ec) && std::isfinite(es);
  }
  char zero[96];
  std::snprintf(zero, sizeof zero, "  %-20s %6s  %15.4f  %14.4f\n", "zero_flow", "-", zero_flow_epe(complex_val),
                zero_flow_epe(simple_val));
  table << zero;
  std::cout << table.str();
  v.detail << ran << "/4 plans trained and evaluated (ordering reported, not gated)";
  v.require(ran == 4, "all four plans");
  return v;
}

const std::map<int, std::pair<std::string, std::function<Verdict()>>>& criteria() {
  static const std::map<int, std::pair<std::string, std::function<Verdict()>>> all{
      {1, {"warp gradient check", warp_gradients}},
      {2, {"warp identity and zero outside", warp_identity_and_outside}},
      {3, {"layer table audits", table_audits}},
      {4, {"operator gradient suite", operator_suite}},
      {5, {"channel multiplier scaling", multiplier_scaling}},
      {6, {"format round trips", round_trips}},
      {7, {"datagen ground truth", datagen_consistency}},
      {8, {"metric oracles", metrics_oracles}},
      {9, {"schedule shape", schedule_shape}},
      {10, {"stacking with warping trend", stacking_trend}},
      {11, {"small displacement loss trend", small_displacement_trend}},
      {12, {"curriculum harness", curriculum_harness}},
  };
  return all;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"flowforge acceptance suite"};
  std::vector<int> selected;
  app.add_option("--criteria", selected, "Criterion numbers (default 1-9)")->delimiter(',')->check(CLI::Range(1, 12));
  CLI11_PARSE(app, argc, argv);
  if (selected.empty()) selected = {1, 2, 3, 4, 5, 6, 7, 8, 9};

  int failed = 0;
  for (int id : selected) {
    const auto& [name, run] = criteria().at(id);
    const auto t0 = Clock::now();
    Verdict v;
    try {
      v = run();
    } catch (const std::exception& e) {
      v.pass = false;
      v.detail << "threw " << e.what();
    }
    std::printf("criterion %2d %s: %s -- %s (%.1f s)\n", id, v.pass ? "PASS" : "FAIL", name.c_str(), v.detail.str().c_str(),
                seconds_since(t0));
    std::fflush(stdout);
    failed += !v.pass;
  }
  return failed == 0 ? 0 : 1;
}
