#include "flowforge/schedule.hpp"

#include <cmath>
#include <cstdio>
#include <numeric>
#include <sstream>

#include "flowforge/error.hpp"

namespace flowforge {

namespace {

std::int64_t scaled(double base, double scale) { return static_cast<std::int64_t>(std::llround(base * scale)); }

/// Constant `lr` until `plateau`, then halved every `step` until `total`.
LrSchedule halving(const char* name, double scale, double total, double plateau, double step, double lr) {
  if (!(scale > 0.0) || scale > 1.0) throw Error(ErrorCode::BadScale, "schedule scale must lie in (0,1]");
  LrSchedule s;
  s.name = name;
  s.total_iters = scaled(total, scale);
  const std::int64_t first = scaled(plateau, scale);
  const std::int64_t every = scaled(step, scale);
  if (every < 1 || first < 1) throw Error(ErrorCode::BadScale, "schedule scale too small for its breakpoints");
  s.segments.emplace_back(0, lr);
  for (std::int64_t at = first; at < s.total_iters; at += every) {
    lr *= 0.5;
    s.segments.emplace_back(at, lr);
  }
  return s;
}

}  // namespace

double LrSchedule::lr_at(std::int64_t iter) const {
  double lr = segments.front().second;
  for (const auto& [start, value] : segments) {
    if (iter >= start) lr = value;
  }
  return lr;
}

std::vector<std::int64_t> LrSchedule::breakpoints() const {
  std::vector<std::int64_t> out;
  for (std::size_t i = 1; i < segments.size(); ++i) out.push_back(segments[i].first);
  return out;
}

void LrSchedule::validate() const {
  if (segments.empty() || segments.front().first != 0) {
    throw Error(ErrorCode::BadScale, "schedule must start at iteration 0");
  }
  for (std::size_t i = 0; i < segments.size(); ++i) {
    if (!(segments[i].second > 0.0)) throw Error(ErrorCode::BadScale, "learning rates must be positive");
    if (segments[i].first >= total_iters) throw Error(ErrorCode::BadScale, "segment starts past the schedule end");
    if (i > 0 && segments[i].first <= segments[i - 1].first) {
      throw Error(ErrorCode::BadScale, "segment starts must ascend");
    }
  }
}

LrSchedule s_short(double scale) { return halving("s_short", scale, 600e3, 300e3, 100e3, 1e-4); }

// Breakpoints for S_long and S_fine are read off the plotted shape
// (plateau, then repeated halving); they are defaults, not published values.
LrSchedule s_long(double scale) { return halving("s_long", scale, 1.2e6, 600e3, 200e3, 1e-4); }

LrSchedule s_fine(double scale) { return halving("s_fine", scale, 500e3, 200e3, 100e3, 1e-5); }

LrSchedule parse_schedule(const std::string& text) {
  const auto colon = text.find(':');
  const std::string name = text.substr(0, colon);
  const std::string rest = colon == std::string::npos ? "1" : text.substr(colon + 1);
  try {
    if (name == "s_short") return s_short(std::stod(rest));
    if (name == "s_long") return s_long(std::stod(rest));
    if (name == "s_fine") return s_fine(std::stod(rest));
    if (name == "explicit") {
      const auto colon2 = rest.find(':');
      if (colon2 == std::string::npos) throw Error(ErrorCode::BadScale, "explicit schedule needs TOTAL:breakpoints");
      LrSchedule s;
      s.name = "explicit";
      s.total_iters = std::stoll(rest.substr(0, colon2));
      std::stringstream list(rest.substr(colon2 + 1));
      std::string item;
      while (std::getline(list, item, ',')) {
        const auto eq = item.find('=');
        if (eq == std::string::npos) throw Error(ErrorCode::BadScale, "breakpoint must be ITER=LR: " + item);
        s.segments.emplace_back(std::stoll(item.substr(0, eq)), std::stod(item.substr(eq + 1)));
      }
      s.validate();
      return s;
    }
  } catch (const std::logic_error&) {
    throw Error(ErrorCode::BadScale, "malformed schedule '" + text + "'");
  }
  throw Error(ErrorCode::BadScale, "unknown schedule '" + name + "'");
}

std::string format_schedule(const LrSchedule& schedule) {
  std::ostringstream out;
  out << "explicit:" << schedule.total_iters << ":";
  for (std::size_t i = 0; i < schedule.segments.size(); ++i) {
    char buf[48];
    std::snprintf(buf, sizeof buf, "%.17g", schedule.segments[i].second);
    out << (i ? "," : "") << schedule.segments[i].first << "=" << buf;
  }
  return out.str();
}

std::int64_t CurriculumSpec::total_iters() const {
  std::int64_t total = 0;
  for (const auto& s : stages) total += s.schedule.total_iters;
  return total;
}

void CurriculumSpec::validate() const {
  if (batch_size < 1) throw Error(ErrorCode::BadPlan, "batch size must be positive");
  if (stages.empty()) throw Error(ErrorCode::BadPlan, "curriculum has no stages");
  for (const auto& stage : stages) {
    stage.schedule.validate();
    int sum = 0;
    for (const auto& [id, n] : stage.mixture) {
      if (n < 0) throw Error(ErrorCode::BadPlan, "negative mixture count for " + id);
      sum += n;
    }
    if (sum != batch_size) throw Error(ErrorCode::BadPlan, "mixture counts must sum to the batch size");
  }
}

StagePlan parse_plan(const std::string& id) {
  if (id == "simple_then_complex") return StagePlan::SimpleThenComplex;
  if (id == "complex_only") return StagePlan::ComplexOnly;
  if (id == "mixed") return StagePlan::Mixed;
  if (id == "simple_only") return StagePlan::SimpleOnly;
  throw Error(ErrorCode::BadPlan, "unknown stage plan '" + id + "'");
}

std::string to_string(StagePlan plan) {
  switch (plan) {
    case StagePlan::SimpleThenComplex: return "simple_then_complex";
    case StagePlan::ComplexOnly: return "complex_only";
    case StagePlan::Mixed: return "mixed";
    case StagePlan::SimpleOnly: return "simple_only";
  }
  return "unknown";
}

CurriculumSpec single_stage(const std::string& dataset, LrSchedule schedule, int batch_size) {
  CurriculumSpec spec{dataset, batch_size, {{{{dataset, batch_size}}, std::move(schedule)}}};
  spec.validate();
  return spec;
}

CurriculumSpec curriculum(StagePlan plan, double scale, int batch_size) {
  CurriculumSpec spec;
  spec.plan = to_string(plan);
  spec.batch_size = batch_size;
  switch (plan) {
    case StagePlan::SimpleThenComplex:
      spec.stages.push_back({{{kSimpleDataset, batch_size}}, s_long(scale)});
      spec.stages.push_back({{{kComplexDataset, batch_size}}, s_fine(scale)});
      break;
    case StagePlan::ComplexOnly:
      spec.stages.push_back({{{kComplexDataset, batch_size}}, s_long(scale)});
      break;
    case StagePlan::Mixed:
      spec.stages.push_back(
          {{{kSimpleDataset, batch_size / 2}, {kComplexDataset, batch_size - batch_size / 2}}, s_long(scale)});
      break;
    case StagePlan::SimpleOnly:
      spec.stages.push_back({{{kSimpleDataset, batch_size}}, s_long(scale)});
      break;
  }
  spec.validate();
  return spec;
}

CurriculumSpec ft_sd_curriculum(double scale, int batch_size) {
  CurriculumSpec spec;
  spec.plan = "ft_sd";
  spec.batch_size = batch_size;
  spec.stages.push_back({{{kComplexDataset, batch_size / 4}, {kSdhomDataset, batch_size - batch_size / 4}},
                         s_fine(scale)});
  spec.validate();
  return spec;
}

MixtureSampler::MixtureSampler(std::map<std::string, std::size_t> dataset_sizes, std::uint64_t seed)
    : sizes_(std::move(dataset_sizes)), rng_(seed) {}

std::vector<std::pair<std::string, std::size_t>> MixtureSampler::next_batch(const std::map<std::string, int>& mixture) {
  std::vector<std::pair<std::string, std::size_t>> batch;
  for (const auto& [id, count] : mixture) {
    if (count == 0) continue;
    const auto size_it = sizes_.find(id);
    if (size_it == sizes_.end() || size_it->second == 0) {
      throw Error(ErrorCode::ConfigError, "mixture references missing or empty dataset '" + id + "'");
    }
    Cursor& cur = cursors_[id];
    for (int k = 0; k < count; ++k) {
      if (cur.next == cur.order.size()) {
        cur.order.resize(size_it->second);
        std::iota(cur.order.begin(), cur.order.end(), std::size_t{0});
        for (std::size_t i = cur.order.size(); i > 1; --i) std::swap(cur.order[i - 1], cur.order[rng_.below(i)]);
        cur.next = 0;
      }
      batch.emplace_back(id, cur.order[cur.next++]);
    }
  }
  return batch;
}

}  // namespace flowforge
