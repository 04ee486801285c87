#include "flowforge/stack.hpp"

#include <cctype>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <thread>

#include "flowforge/adam.hpp"
#include "flowforge/checkpoint.hpp"
#include "flowforge/metrics.hpp"

namespace flowforge {

namespace {

[[noreturn]] void bad_spec(const std::string& text, const std::string& why) {
  throw Error(ErrorCode::BadSpec, "stack spec '" + text + "': " + why);
}

struct Cursor {
  const std::string& s;
  std::size_t at = 0;
  bool done() const { return at >= s.size(); }
  char peek() const { return done() ? '\0' : s[at]; }
  bool eat(const std::string& token) {
    if (s.compare(at, token.size(), token) != 0) return false;
    at += token.size();
    return true;
  }
};

double parse_multiplier(Cursor& c, const std::string& text) {
  const std::size_t start = c.at;
  while (!c.done() && (std::isdigit(static_cast<unsigned char>(c.peek())) || c.peek() == '.' || c.peek() == '/')) ++c.at;
  const std::string num = text.substr(start, c.at - start);
  try {
    const auto slash = num.find('/');
    std::size_t used = 0;
    double v = 0.0;
    if (slash == std::string::npos) {
      v = std::stod(num, &used);
      if (used != num.size()) throw std::invalid_argument(num);
    } else {
      v = std::stod(num.substr(0, slash)) / std::stod(num.substr(slash + 1));
    }
    if (!(v > 0.0 && v <= 1.0)) bad_spec(text, "multiplier " + num + " outside (0,1]");
    return v;
  } catch (const std::logic_error&) {
    bad_spec(text, "malformed multiplier '" + num + "'");
  }
}

}  // namespace

std::vector<UnitSpec> StackSpec::units() const {
  std::vector<UnitSpec> out;
  for (const auto& b : branches) {
    for (const auto& u : b) out.push_back(u.unit);
  }
  if (fusion) out.push_back(*fusion);
  return out;
}

std::size_t StackSpec::unit_count() const { return units().size(); }

std::string StackSpec::prefix(std::size_t k) const {
  std::size_t i = 0;
  for (const auto& b : branches) {
    for (const auto& u : b) {
      if (i == k) return u.share_label.empty() ? "net" + std::to_string(k) + "/" : "shared_" + u.share_label + "/";
      ++i;
    }
  }
  if (fusion && i == k) return "fusion/";
  throw Error(ErrorCode::BadSpec, "unit index out of range");
}

StackSpec parse_stack_spec(const std::string& raw, int height, int width) {
  std::string text;
  for (char ch : raw) {
    if (!std::isspace(static_cast<unsigned char>(ch))) text += ch;
  }
  if (text.empty()) bad_spec(raw, "empty");
  if (height < 1 || width < 1) bad_spec(text, "resolution must be positive");

  // A single '@m' at the very end applies to every unit.
  std::optional<double> global;
  std::string body = text;
  const auto at = text.find('@');
  if (at != std::string::npos && text.find('@', at + 1) == std::string::npos &&
      text.find_first_not_of("0123456789./", at + 1) == std::string::npos) {
    Cursor c{text, at + 1};
    global = parse_multiplier(c, text);
    body = text.substr(0, at);
  }

  StackSpec spec;
  spec.text = text;
  spec.height = height;
  spec.width = width;

  std::vector<std::string> pieces;
  std::size_t start = 0;
  while (true) {
    const auto bar = body.find('|', start);
    pieces.push_back(body.substr(start, bar - start));
    if (bar == std::string::npos) break;
    start = bar + 1;
  }

  std::map<std::string, UnitSpec> shared;
  for (std::size_t p = 0; p < pieces.size(); ++p) {
    const std::string& piece = pieces[p];
    if (piece.empty()) bad_spec(text, "empty branch");
    if (piece[0] == 'F') {
      if (p + 1 != pieces.size()) bad_spec(text, "fusion must come last");
      if (spec.branches.size() != 2) bad_spec(text, "fusion needs exactly two branches before it");
      Cursor c{piece, 1};
      double m = global.value_or(1.0);
      if (c.eat("@")) m = parse_multiplier(c, piece);
      if (!c.done()) bad_spec(text, "unexpected text after F");
      spec.fusion = UnitSpec{UnitKind::Fusion, m, 11, height, width};
      spec.fusion->validate();
      break;
    }
    std::vector<StackUnit> branch;
    Cursor c{piece};
    bool warp_link = false;
    while (true) {
      const char letter = c.peek();
      if (letter == 'C') {
        bad_spec(text, "'C' units need the correlation layer, which this toolkit does not implement");
      }
      if (letter != 'S' && letter != 'D') bad_spec(text, std::string("expected S or D, got '") + letter + "'");
      ++c.at;
      StackUnit u;
      u.warp_link = warp_link;
      u.unit.kind = letter == 'S' ? UnitKind::S : UnitKind::SD;
      u.unit.channel_multiplier = global.value_or(1.0);
      u.unit.height = height;
      u.unit.width = width;
      if (c.eat("@")) u.unit.channel_multiplier = parse_multiplier(c, piece);
      if (c.eat("#")) {
        const std::size_t s0 = c.at;
        while (!c.done() && std::isalnum(static_cast<unsigned char>(c.peek()))) ++c.at;
        u.share_label = piece.substr(s0, c.at - s0);
        if (u.share_label.empty()) bad_spec(text, "empty share label");
      }
      if (branch.empty()) {
        u.unit.input_channels = 6;
      } else {
        if (u.unit.kind == UnitKind::SD) bad_spec(text, "D units take the image pair only and cannot refine");
        u.unit.input_channels = u.warp_link ? 12 : 8;
      }
      u.unit.validate();
      if (!u.share_label.empty()) {
        auto [it, fresh] = shared.emplace(u.share_label, u.unit);
        if (!fresh && (it->second.kind != u.unit.kind || it->second.channel_multiplier != u.unit.channel_multiplier ||
                       it->second.input_channels != u.unit.input_channels)) {
          bad_spec(text, "units sharing '" + u.share_label + "' differ in kind, multiplier or inputs");
        }
      }
      branch.push_back(u);
      if (c.done()) break;
      warp_link = c.eat("+W+");
    }
    spec.branches.push_back(std::move(branch));
  }
  if (spec.branches.empty()) bad_spec(text, "no units");
  if (!spec.fusion && spec.branches.size() != 1) bad_spec(text, "several branches need a trailing F to fuse them");
  return spec;
}

void TrainPolicy::validate(std::size_t units) const {
  if (!trainable.empty() && trainable.size() != units) {
    throw Error(ErrorCode::ConfigError, "policy lists " + std::to_string(trainable.size()) + " trainable flags for " +
                                            std::to_string(units) + " units");
  }
  if (intermediate_losses.size() > units) {
    throw Error(ErrorCode::ConfigError, "policy places a loss on a unit absent from the stack");
  }
  if (!trainable.empty() && std::find(trainable.begin(), trainable.end(), true) == trainable.end()) {
    throw Error(ErrorCode::ConfigError, "policy must leave at least one unit trainable");
  }
  if (freeze_until && *freeze_until < 0) throw Error(ErrorCode::ConfigError, "freeze_until must be >= 0");
  if (!(error_exponent > 0.0 && error_exponent <= 1.0)) throw Error(ErrorCode::ConfigError, "error exponent must lie in (0,1]");
}

std::pair<std::vector<SampleRecord>, std::vector<SampleRecord>> split_validation(std::vector<SampleRecord> records) {
  std::vector<SampleRecord> train, val;
  for (auto& r : records) (is_validation_index(r.index) ? val : train).push_back(std::move(r));
  return {std::move(train), std::move(val)};
}

int worker_threads() {
  if (const char* env = std::getenv("FLOWFORGE_THREADS")) {
    const int n = std::atoi(env);
    if (n >= 1) return n;
  }
  return 1;
}

namespace {

LossSpec unit_loss(const std::map<std::string, Var>& preds, double exponent) {
  LossSpec spec;
  for (const auto& [name, v] : preds) spec.scale_weights[name] = 1.0;
  spec.error_exponent = exponent;
  return spec;
}

struct ItemResult {
  GradientSet<float> grads;
  double loss = 0.0;
};

/// Runs `count` jobs on up to worker_threads() threads; job i writes slot i.
void parallel_for(std::size_t count, const std::function<void(std::size_t)>& job) {
  const std::size_t threads = std::min<std::size_t>(count, static_cast<std::size_t>(worker_threads()));
  if (threads <= 1) {
    for (std::size_t i = 0; i < count; ++i) job(i);
    return;
  }
  std::vector<std::thread> pool;
  std::vector<std::exception_ptr> errors(threads);
  for (std::size_t t = 0; t < threads; ++t) {
    pool.emplace_back([&, t] {
      try {
        for (std::size_t i = t; i < count; i += threads) job(i);
      } catch (...) {
        errors[t] = std::current_exception();
      }
    });
  }
  for (auto& th : pool) th.join();
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
}

}  // namespace

FlowFieldf predict_flow(const StackSpec& spec, const ParameterSet<float>& params, const Gridf& i1, const Gridf& i2,
                        bool residual) {
  Graph<float> g;
  const Var a = g.constant(Tensor<float>::from_grid(i1));
  const Var b = g.constant(Tensor<float>::from_grid(i2));
  ForwardOptions opts;
  opts.residual = residual;
  const auto out = forward_stack<float>(g, spec, params, nullptr, a, b, opts);
  return FlowFieldf(g.value(out.final_flow()).item(0));
}

double evaluate_epe(const StackSpec& spec, const ParameterSet<float>& params, const std::vector<SampleRecord>& records,
                    bool residual) {
  if (records.empty()) throw Error(ErrorCode::EmptyMask, "no records to evaluate");
  std::vector<double> per(records.size());
  parallel_for(records.size(), [&](std::size_t i) {
    per[i] = epe(predict_flow(spec, params, records[i].i1, records[i].i2, residual), records[i].flow);
  });
  double sum = 0.0;
  for (double v : per) sum += v;
  return sum / static_cast<double>(records.size());
}

TrainResult train_stack(const StackSpec& spec, const TrainPolicy& policy, const CurriculumSpec& curriculum,
                        const TrainData& data, const TrainOptions& options) {
  const std::size_t units = spec.unit_count();
  policy.validate(units);
  curriculum.validate();
  std::map<std::string, std::size_t> sizes;
  for (const auto& [id, recs] : data.train) sizes[id] = recs.size();
  for (const auto& stage : curriculum.stages) {
    for (const auto& [id, n] : stage.mixture) {
      if (n > 0 && sizes[id] == 0) throw Error(ErrorCode::ConfigError, "no training records for dataset '" + id + "'");
    }
  }

  TrainResult result;
  result.params = make_stack_parameters<float>(spec, mix64(options.seed, 0x5eed));
  if (options.warm_start) {
    for (auto& p : result.params) {
      const auto i = options.warm_start->find(p.name);
      if (i && (*options.warm_start)[*i].dims == p.dims) p.value = (*options.warm_start)[*i].value;
    }
  }
  auto& params = result.params;

  // Parameter index -> units that use it.
  std::vector<std::vector<std::size_t>> owners(params.size());
  for (std::size_t k = 0; k < units; ++k) {
    const std::string prefix = spec.prefix(k);
    for (std::size_t i = 0; i < params.size(); ++i) {
      if (params[i].name.rfind(prefix, 0) == 0) owners[i].push_back(k);
    }
  }

  const std::int64_t total = curriculum.total_iters();
  const std::int64_t freeze_until = policy.freeze_until.value_or(total * 2 / 3);
  const std::int64_t log_every = options.log_interval > 0 ? options.log_interval : std::max<std::int64_t>(1, total / 10);
  auto trainable = [&](std::size_t k) { return policy.trainable.empty() || policy.trainable[k]; };
  auto has_loss = [&](std::size_t k) {
    return k + 1 == units || (k < policy.intermediate_losses.size() && policy.intermediate_losses[k]);
  };

  AdamState<float> adam(params);
  MixtureSampler sampler(sizes, mix64(options.seed, 0xba7c4));
  std::int64_t iter = 0;
  double loss_sum = 0.0;
  std::int64_t loss_count = 0;

  for (const auto& stage : curriculum.stages) {
    for (std::int64_t t = 0; t < stage.schedule.total_iters; ++t) {
      const double lr = stage.schedule.lr_at(t);
      std::vector<bool> active(units);
      for (std::size_t k = 0; k < units; ++k) active[k] = trainable(k) && (k + 1 == units || iter >= freeze_until);

      const auto batch = sampler.next_batch(stage.mixture);
      std::vector<ItemResult> items(batch.size());
      parallel_for(batch.size(), [&](std::size_t b) {
        const SampleRecord& rec = data.train.at(batch[b].first)[batch[b].second];
        ItemResult& item = items[b];
        item.grads = zero_gradients(params);
        Graph<float> g;
        const Var i1 = g.constant(Tensor<float>::from_grid(rec.i1));
        const Var i2 = g.constant(Tensor<float>::from_grid(rec.i2));
        ForwardOptions opts;
        opts.warp_grad = policy.warp_grad;
        opts.residual = policy.residual;
        opts.trainable = active;
        const auto out = forward_stack(g, spec, params, &item.grads, i1, i2, opts);
        const auto truth = Tensor<float>::from_grid(rec.flow.grid());
        std::vector<Var> terms;
        for (std::size_t k = 0; k < units; ++k) {
          if (has_loss(k)) {
            terms.push_back(multiscale_epe_loss(g, out.predictions[k], truth, unit_loss(out.predictions[k], policy.error_exponent)));
          }
        }
        const Var loss = sum_scalars(g, std::span<const Var>(terms));
        item.loss = g.value(loss).data()[0];
        g.backward(loss);
      });

      GradientSet<float> grads = zero_gradients(params);
      double batch_loss = 0.0;
      const float inv = 1.0f / static_cast<float>(items.size());
      for (const auto& item : items) {
        for (std::size_t i = 0; i < grads.size(); ++i) grads[i].data() += item.grads[i].data();
        batch_loss += item.loss;
      }
      for (auto& gr : grads) gr.data() *= inv;
      std::vector<bool> update(params.size());
      for (std::size_t i = 0; i < params.size(); ++i) {
        for (std::size_t k : owners[i]) update[i] = update[i] || active[k];
      }
      adam_step(params, grads, adam, lr, {}, update);

      ++iter;
      loss_sum += batch_loss / static_cast<double>(items.size());
      ++loss_count;
      if (iter % log_every == 0 || iter == total) {
        LogRow row{iter, lr, loss_sum / static_cast<double>(loss_count), 0.0};
        row.val_epe = data.validation.empty() ? std::nan("") : evaluate_epe(spec, params, data.validation, policy.residual);
        loss_sum = 0.0;
        loss_count = 0;
        result.log.push_back(row);
        if (options.on_log) options.on_log(row);
      }
    }
  }
  result.final_val_epe = result.log.empty() ? std::nan("") : result.log.back().val_epe;
  return result;
}

void write_log_csv(const std::filesystem::path& path, const std::vector<LogRow>& log) {
  std::ofstream out(path);
  if (!out) throw Error(ErrorCode::IoError, "cannot write " + path.string());
  out << "iter,lr,train_loss,val_epe\n";
  for (const auto& r : log) {
    char line[160];
    std::snprintf(line, sizeof line, "%lld,%.9g,%.9g,%.9g\n", static_cast<long long>(r.iter), r.lr, r.train_loss, r.val_epe);
    out << line;
  }
}

Bytes encode_stack_checkpoint(const StackSpec& spec, const ParameterSet<float>& params) {
  const std::string header =
      "flowforge-stack " + spec.text + " " + std::to_string(spec.width) + "x" + std::to_string(spec.height) + "\n";
  Bytes out(header.begin(), header.end());
  const Bytes body = encode_checkpoint(params);
  out.insert(out.end(), body.begin(), body.end());
  return out;
}

std::pair<StackSpec, ParameterSet<float>> decode_stack_checkpoint(std::span<const std::uint8_t> bytes) {
  const std::string tag = "flowforge-stack ";
  std::size_t nl = 0;
  while (nl < bytes.size() && bytes[nl] != '\n') ++nl;
  const std::string header(bytes.begin(), bytes.begin() + static_cast<std::ptrdiff_t>(nl));
  if (nl == bytes.size() || header.rfind(tag, 0) != 0) throw Error(ErrorCode::BadMagic, "not a stack checkpoint");
  const auto space = header.rfind(' ');
  const std::string text = header.substr(tag.size(), space - tag.size());
  int w = 0, h = 0;
  if (std::sscanf(header.c_str() + space + 1, "%dx%d", &w, &h) != 2) throw Error(ErrorCode::BadMagic, "bad stack header");
  StackSpec spec = parse_stack_spec(text, h, w);
  ParameterSet<float> params = decode_checkpoint(bytes.subspan(nl + 1));
  ParameterSet<float> expected = make_stack_parameters<float>(spec, 0);
  assign_parameters(expected, params);
  return {std::move(spec), std::move(expected)};
}

}  // namespace flowforge
