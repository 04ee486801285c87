#include "flowforge/cli.hpp"

#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>

#include "flowforge/flow_color.hpp"
#include "flowforge/gradcheck.hpp"
#include "flowforge/image_io.hpp"
#include "flowforge/metrics.hpp"
#include "flowforge/stack.hpp"

namespace flowforge {

namespace fs = std::filesystem;

namespace {

[[noreturn]] void config_error(const std::string& what) { throw Error(ErrorCode::ConfigError, what); }

std::pair<std::string, std::string> split_pair(const std::string& text, const std::string& what) {
  const auto eq = text.find('=');
  if (eq == std::string::npos || eq == 0) config_error(what + " must be KEY=VALUE, got '" + text + "'");
  return {text.substr(0, eq), text.substr(eq + 1)};
}

/// Turns `--config FILE` into flags placed ahead of the explicit ones, so
/// later (explicit) values win.
std::vector<std::string> expand_config(const std::vector<std::string>& args) {
  if (args.empty()) return args;
  std::vector<std::string> out{args.front()};
  std::vector<std::string> from_file;
  std::vector<std::string> rest;
  for (std::size_t i = 1; i < args.size(); ++i) {
    std::string path;
    if (args[i] == "--config") {
      if (i + 1 >= args.size()) config_error("--config needs a file");
      path = args[++i];
    } else if (args[i].rfind("--config=", 0) == 0) {
      path = args[i].substr(9);
    } else {
      rest.push_back(args[i]);
      continue;
    }
    std::ifstream in(path);
    if (!in) config_error("cannot read config file " + path);
    std::string line;
    while (std::getline(in, line)) {
      const auto first = line.find_first_not_of(" \t\r");
      if (first == std::string::npos || line[first] == '#') continue;
      const auto last = line.find_last_not_of(" \t\r");
      line = line.substr(first, last - first + 1);
      auto [key, value] = split_pair(line, "config line");
      while (!key.empty() && (key.back() == ' ' || key.back() == '\t')) key.pop_back();
      const auto vstart = value.find_first_not_of(" \t");
      value = vstart == std::string::npos ? "" : value.substr(vstart);
      if (value == "true") {
        from_file.push_back("--" + key);
      } else if (value != "false") {
        from_file.push_back("--" + key + "=" + value);
      }
    }
  }
  out.insert(out.end(), from_file.begin(), from_file.end());
  out.insert(out.end(), rest.begin(), rest.end());
  return out;
}

std::vector<std::size_t> parse_index_list(const std::string& text, const std::string& what) {
  std::vector<std::size_t> out;
  if (text.empty()) return out;
  std::stringstream in(text);
  std::string item;
  while (std::getline(in, item, ',')) {
    try {
      std::size_t used = 0;
      const long v = std::stol(item, &used);
      if (used != item.size() || v < 0) throw std::invalid_argument(item);
      out.push_back(static_cast<std::size_t>(v));
    } catch (const std::logic_error&) {
      config_error(what + ": '" + item + "' is not a unit index");
    }
  }
  return out;
}

void require_dir(const std::string& dir) {
  if (!fs::exists(fs::path(dir) / kManifestName)) config_error("no dataset manifest in " + dir);
}

void require_file(const std::string& path, const std::string& what) {
  if (!fs::is_regular_file(path)) config_error(what + " not found: " + path);
}

std::string fmt(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.6g", v);
  return buf;
}

// ---------------------------------------------------------------- datagen

struct DatagenArgs {
  std::string out;
  std::size_t count = 100;
  std::string preset;
  std::uint64_t seed = 1;
  int height = 48;
  int width = 64;
  std::vector<std::string> set;
};

int cmd_datagen(const DatagenArgs& a, std::ostream& out) {
  SceneParams params = a.preset.empty() ? SceneParams{} : scene_preset(a.preset, a.height, a.width, a.seed);
  params.height = a.height;
  params.width = a.width;
  params.seed = a.seed;
  std::vector<std::pair<std::string, std::string>> extra;
  for (const auto& s : a.set) extra.push_back(split_pair(s, "--set"));
  try {
    params = parse_scene_params(extra, params);
    params.validate();
  } catch (const Error& e) {
    config_error(e.what());
  }
  const Manifest manifest = generate_dataset(params, a.count, a.out);
  out << "records=" << manifest.entries.size() << "\n";
  out << "out=" << a.out << "\n";
  if (manifest.entries.empty()) return kExitOk;

  std::vector<FlowFieldf> flows;
  for (const auto& e : manifest.entries) flows.push_back(load_flo(fs::path(a.out) / e.flow));
  const std::vector<double> edges{0.0, 0.25, 0.5, 1.0, 2.0, 4.0, 8.0, 16.0, 1e9};
  const Histogram h = nonzero_displacement_histogram(flows, edges);
  out << "# displacement histogram over moving pixels (" << h.total << " px)\n";
  for (std::size_t b = 0; b < h.counts.size(); ++b) {
    const double frac = h.total ? static_cast<double>(h.counts[b]) / static_cast<double>(h.total) : 0.0;
    const std::string hi = b + 2 == edges.size() ? "inf" : fmt(edges[b + 1]);
    out << "bin[" << fmt(edges[b]) << "," << hi << ")=" << fmt(frac) << "\n";
  }
  return kExitOk;
}

// ---------------------------------------------------------------- train

struct TrainArgs {
  std::vector<std::string> data;
  std::string spec = "S@0.125";
  std::string schedule = "s_short:0.005";
  std::string plan;
  double scale = 0.005;
  std::int64_t iters = 0;
  double lr = 1e-4;
  int batch = 8;
  std::uint64_t seed = 1;
  std::string out;
  std::string log;
  std::string init;
  std::string freeze;
  std::string loss_on;
  bool no_warp_grad = false;
  bool no_residual = false;
  std::int64_t freeze_until = -1;
  double exponent = 1.0;
  std::int64_t log_interval = 0;
};

CurriculumSpec build_curriculum(const TrainArgs& a, const std::map<std::string, std::string>& dirs) {
  if (!a.plan.empty()) {
    if (a.iters > 0) config_error("--iters applies to single-schedule runs, not --plan");
    if (a.plan == "ft_sd") return ft_sd_curriculum(a.scale, a.batch);
    return curriculum(parse_plan(a.plan), a.scale, a.batch);
  }
  if (dirs.size() != 1) config_error("single-schedule training takes exactly one --data directory");
  LrSchedule schedule;
  if (a.iters > 0) {
    schedule.name = "constant";
    schedule.total_iters = a.iters;
    schedule.segments = {{0, a.lr}};
    schedule.validate();
  } else {
    schedule = parse_schedule(a.schedule);
  }
  return single_stage(dirs.begin()->first, schedule, a.batch);
}

int cmd_train(const TrainArgs& a, std::ostream& out) {
  if (a.out.empty()) config_error("--out checkpoint path is required");
  if (a.data.empty()) config_error("at least one --data directory is required");
  std::map<std::string, std::string> dirs;
  for (const auto& d : a.data) {
    const auto eq = d.find('=');
    const std::string id = eq == std::string::npos ? "train" : d.substr(0, eq);
    const std::string dir = eq == std::string::npos ? d : d.substr(eq + 1);
    require_dir(dir);
    if (!dirs.emplace(id, dir).second) config_error("dataset id '" + id + "' given twice");
  }
  if (!a.init.empty()) require_file(a.init, "initial checkpoint");

  const CurriculumSpec plan = build_curriculum(a, dirs);
  TrainData data;
  int height = 0, width = 0;
  for (const auto& [id, dir] : dirs) {
    auto [train, val] = split_validation(load_dataset(dir));
    for (const auto* set : {&train, &val}) {
      for (const auto& r : *set) {
        if (height == 0) {
          height = r.i1.height();
          width = r.i1.width();
        } else if (r.i1.height() != height || r.i1.width() != width) {
          config_error("datasets differ in resolution");
        }
      }
    }
    data.train[id] = std::move(train);
    data.validation.insert(data.validation.end(), val.begin(), val.end());
  }
  if (height == 0) config_error("datasets are empty");
  const StackSpec spec = parse_stack_spec(a.spec, height, width);

  TrainPolicy policy;
  const std::size_t units = spec.unit_count();
  for (std::size_t k : parse_index_list(a.freeze, "--freeze")) {
    if (k >= units) config_error("--freeze names unit " + std::to_string(k) + " absent from the stack");
    if (policy.trainable.empty()) policy.trainable.assign(units, true);
    policy.trainable[k] = false;
  }
  for (std::size_t k : parse_index_list(a.loss_on, "--loss-on")) {
    if (k >= units) config_error("--loss-on names unit " + std::to_string(k) + " absent from the stack");
    if (policy.intermediate_losses.size() < units) policy.intermediate_losses.resize(units, false);
    policy.intermediate_losses[k] = true;
  }
  policy.warp_grad = !a.no_warp_grad;
  policy.residual = !a.no_residual;
  if (a.freeze_until >= 0) policy.freeze_until = a.freeze_until;
  policy.error_exponent = a.exponent;

  std::optional<ParameterSet<float>> warm;
  TrainOptions options;
  options.seed = a.seed;
  options.log_interval = a.log_interval;
  if (!a.init.empty()) {
    warm = decode_stack_checkpoint(read_file(a.init)).second;
    options.warm_start = &*warm;
  }
  options.on_log = [&out](const LogRow& r) {
    out << "iter=" << r.iter << " lr=" << fmt(r.lr) << " train_loss=" << fmt(r.train_loss) << " val_epe=" << fmt(r.val_epe)
        << "\n";
  };
  const TrainResult result = train_stack(spec, policy, plan, data, options);
  write_file(a.out, encode_stack_checkpoint(spec, result.params));
  const std::string log_path = a.log.empty() ? a.out + ".csv" : a.log;
  write_log_csv(log_path, result.log);
  out << "checkpoint=" << a.out << "\n";
  out << "log=" << log_path << "\n";
  out << "final_val_epe=" << fmt(result.final_val_epe) << "\n";
  return kExitOk;
}

// ---------------------------------------------------------------- eval

struct EvalArgs {
  std::string checkpoint;
  std::string data;
  std::string split = "val";
  bool oracle = false;
};

int cmd_eval(const EvalArgs& a, std::ostream& out) {
  if (!a.oracle) {
    if (a.checkpoint.empty()) config_error("--checkpoint is required (or --oracle)");
    require_file(a.checkpoint, "checkpoint");
  }
  if (a.data.empty()) config_error("--data is required");
  require_dir(a.data);
  if (a.split != "val" && a.split != "all") config_error("--split must be val or all");

  auto records = load_dataset(a.data);
  if (a.split == "val") records = split_validation(std::move(records)).second;
  if (records.empty()) config_error("no records in the selected split");
  std::optional<std::pair<StackSpec, ParameterSet<float>>> model;
  if (!a.oracle) model = decode_stack_checkpoint(read_file(a.checkpoint));

  double epe_sum = 0.0, fl_sum = 0.0;
  for (const auto& r : records) {
    const FlowFieldf estimate = model ? predict_flow(model->first, model->second, r.i1, r.i2) : r.flow;
    epe_sum += epe(estimate, r.flow);
    fl_sum += fl_all(estimate, r.flow);
  }
  const double n = static_cast<double>(records.size());
  out << "samples=" << records.size() << "\n";
  out << "epe=" << fmt(epe_sum / n) << "\n";
  out << "fl_all=" << fmt(fl_sum / n) << "\n";
  return kExitOk;
}

// ---------------------------------------------------------------- viz

struct VizArgs {
  std::string flo;
  std::string out;
  std::string truth;
  std::optional<double> max_mag;
};

int cmd_viz(const VizArgs& a, std::ostream& out) {
  require_file(a.flo, "flow file");
  if (a.out.empty()) config_error("--out is required");
  if (!a.truth.empty()) require_file(a.truth, "ground-truth flow file");
  if (a.max_mag && !(*a.max_mag > 0.0)) config_error("--max-mag must be positive");
  const FlowFieldf flow = load_flo(a.flo);
  std::optional<float> max;
  if (a.max_mag) max = static_cast<float>(*a.max_mag);
  if (a.truth.empty()) {
    save_pnm(a.out, colorize_flow(flow, max));
  } else {
    const FlowFieldf truth = load_flo(a.truth);
    if (truth.height() != flow.height() || truth.width() != flow.width()) config_error("flow and truth differ in size");
    if (!max) {
      const float m = std::max(flow_magnitude(flow).data().maxCoeff(), flow_magnitude(truth).data().maxCoeff());
      max = m > 0.0f ? m : 1.0f;
    }
    const Gridf left = colorize_flow(flow, max);
    const Gridf right = colorize_flow(truth, max);
    Gridf both(flow.height(), 2 * flow.width(), 3);
    for (int y = 0; y < flow.height(); ++y) {
      for (int x = 0; x < flow.width(); ++x) {
        for (int c = 0; c < 3; ++c) {
          both(y, x, c) = left(y, x, c);
          both(y, x + flow.width(), c) = right(y, x, c);
        }
      }
    }
    save_pnm(a.out, both);
  }
  out << "wrote=" << a.out << "\n";
  return kExitOk;
}

// ---------------------------------------------------------------- gradcheck

struct GradcheckArgs {
  int trials = 200;
  std::uint64_t seed = 1;
  std::vector<std::string> broken;
};

int cmd_gradcheck(const GradcheckArgs& a, std::ostream& out, std::ostream& err) {
  if (a.trials < 1) config_error("--trials must be >= 1");
  GradcheckOptions opts;
  opts.trials = a.trials;
  opts.seed = a.seed;
  const auto known = gradcheck_ops();
  for (const auto& b : a.broken) {
    if (std::find(known.begin(), known.end(), b) == known.end()) config_error("--break: unknown operator '" + b + "'");
    opts.broken.insert(b);
  }
  bool ok = true;
  for (const auto& r : run_gradcheck_suite(opts)) {
    char line[160];
    std::snprintf(line, sizeof line, "%-16s max_rel_error=%.3e threshold=%.0e trials=%d %s\n", r.op.c_str(),
                  r.max_rel_error, r.threshold, r.trials, r.passed ? "ok" : "FAIL");
    out << line;
    if (!r.passed) {
      err << "gradient check failed: " << r.op << "\n";
      ok = false;
    }
  }
  return ok ? kExitOk : kExitFailure;
}

int exit_code_for(ErrorCode code) {
  switch (code) {
    case ErrorCode::ConfigError:
    case ErrorCode::BadSpec:
    case ErrorCode::BadPlan:
    case ErrorCode::BadScale:
      return kExitConfig;
    default:
      return kExitFailure;
  }
}

}  // namespace

int run_cli(const std::vector<std::string>& raw_args, std::ostream& out, std::ostream& err) {
  CLI::App app{"flowforge: optical-flow learning toolkit", "flowforge"};
  app.require_subcommand(1);
  app.option_defaults()->multi_option_policy(CLI::MultiOptionPolicy::TakeLast);
  std::function<int()> action;

  DatagenArgs dg;
  auto* datagen = app.add_subcommand("datagen", "Generate a synthetic dataset");
  datagen->add_option("--out", dg.out, "Output directory")->required();
  datagen->add_option("--count", dg.count, "Number of samples");
  datagen->add_option("--preset", dg.preset, "sdhom, simple or complex");
  datagen->add_option("--seed", dg.seed, "Scene seed");
  datagen->add_option("--height", dg.height, "Frame height");
  datagen->add_option("--width", dg.width, "Frame width");
  datagen->add_option("--set", dg.set, "Scene parameter KEY=VALUE")->multi_option_policy(CLI::MultiOptionPolicy::TakeAll);
  datagen->callback([&] { action = [&] { return cmd_datagen(dg, out); }; });

  TrainArgs tr;
  auto* train = app.add_subcommand("train", "Train a network stack");
  train->add_option("--data", tr.data, "Dataset directory, optionally ID=DIR")
      ->multi_option_policy(CLI::MultiOptionPolicy::TakeAll);
  train->add_option("--spec", tr.spec, "Stack spec, e.g. S+W+S@0.125");
  train->add_option("--schedule", tr.schedule, "NAME:SCALE or explicit:TOTAL:ITER=LR,...");
  train->add_option("--plan", tr.plan, "simple_only, complex_only, mixed, simple_then_complex or ft_sd");
  train->add_option("--scale", tr.scale, "Schedule scale for --plan");
  train->add_option("--iters", tr.iters, "Constant-rate run of this many iterations");
  train->add_option("--lr", tr.lr, "Learning rate for --iters");
  train->add_option("--batch", tr.batch, "Batch size");
  train->add_option("--seed", tr.seed, "Training seed");
  train->add_option("--out", tr.out, "Checkpoint path");
  train->add_option("--log", tr.log, "Metric CSV path (default: <out>.csv)");
  train->add_option("--init", tr.init, "Checkpoint to copy matching parameters from");
  train->add_option("--freeze", tr.freeze, "Comma-separated units kept fixed");
  train->add_option("--loss-on", tr.loss_on, "Comma-separated units with an intermediate loss");
  train->add_flag("--no-warp-grad", tr.no_warp_grad, "Stop gradients through the warp's flow input");
  train->add_flag("--no-residual", tr.no_residual, "Refinement units predict absolute flow");
  train->add_option("--freeze-until", tr.freeze_until, "Iteration at which earlier units start training");
  train->add_option("--exponent", tr.exponent, "Endpoint-error exponent in (0,1]");
  train->add_option("--log-interval", tr.log_interval, "Iterations between log rows");
  train->callback([&] { action = [&] { return cmd_train(tr, out); }; });

  EvalArgs ev;
  auto* eval = app.add_subcommand("eval", "Evaluate a checkpoint");
  eval->add_option("--checkpoint", ev.checkpoint, "Stack checkpoint");
  eval->add_option("--data", ev.data, "Dataset directory");
  eval->add_option("--split", ev.split, "val or all");
  eval->add_flag("--oracle", ev.oracle, "Score the ground truth itself");
  eval->callback([&] { action = [&] { return cmd_eval(ev, out); }; });

  VizArgs vz;
  auto* viz = app.add_subcommand("viz", "Colorize a .flo file");
  viz->add_option("--flo", vz.flo, "Flow file")->required();
  viz->add_option("--out", vz.out, "Output PPM")->required();
  viz->add_option("--truth", vz.truth, "Ground-truth flow shown on the right");
  viz->add_option("--max-mag", vz.max_mag, "Magnitude mapped to full saturation");
  viz->callback([&] { action = [&] { return cmd_viz(vz, out); }; });

  GradcheckArgs gc;
  auto* gradcheck = app.add_subcommand("gradcheck", "Finite-difference gradient checks");
  gradcheck->add_option("--trials", gc.trials, "Random trials per operator");
  gradcheck->add_option("--seed", gc.seed, "Seed");
  gradcheck->add_option("--break", gc.broken, "Flip the sign of an operator's gradient (self-test)")
      ->multi_option_policy(CLI::MultiOptionPolicy::TakeAll);
  gradcheck->callback([&] { action = [&] { return cmd_gradcheck(gc, out, err); }; });

  try {
    std::vector<std::string> args = expand_config(raw_args);
    std::reverse(args.begin(), args.end());
    app.parse(args);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const Error& e) {
    err << "error: " << e.what() << "\n";
    return exit_code_for(e.code());
  }

  try {
    return action();
  } catch (const Error& e) {
    err << "error: " << e.what() << "\n";
    return exit_code_for(e.code());
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitFailure;
  }
}

}  // namespace flowforge
