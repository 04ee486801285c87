#ifndef FLOWFORGE_SCHEDULE_HPP
#define FLOWFORGE_SCHEDULE_HPP

#include <cstdint>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "flowforge/rng.hpp"

namespace flowforge {

/// Piecewise-constant learning rate: segments[i] = (start iteration, lr).
struct LrSchedule {
  std::string name;
  std::vector<std::pair<std::int64_t, double>> segments;
  std::int64_t total_iters = 0;

  double lr_at(std::int64_t iter) const;
  /// Segment starts after the first.
  std::vector<std::int64_t> breakpoints() const;
  void validate() const;
};

/// 1e-4 for the first half of 600k iterations, then halved every 100k.
LrSchedule s_short(double scale = 1.0);
/// 1e-4 for the first half of 1.2M iterations, then halved every 200k.
LrSchedule s_long(double scale = 1.0);
/// 1e-5 for the first 200k of 500k iterations, then halved every 100k.
LrSchedule s_fine(double scale = 1.0);

/// "s_short:0.005", "s_long:1", or "explicit:TOTAL:0=1e-4,3000=5e-5".
LrSchedule parse_schedule(const std::string& text);
std::string format_schedule(const LrSchedule& schedule);

struct CurriculumStage {
  /// dataset id -> samples per batch.
  std::map<std::string, int> mixture;
  LrSchedule schedule;
};

struct CurriculumSpec {
  std::string plan;
  int batch_size = 8;
  std::vector<CurriculumStage> stages;

  std::int64_t total_iters() const;
  void validate() const;
};

enum class StagePlan { SimpleThenComplex, ComplexOnly, Mixed, SimpleOnly };

StagePlan parse_plan(const std::string& id);
std::string to_string(StagePlan plan);

inline constexpr const char* kSimpleDataset = "simple";
inline constexpr const char* kComplexDataset = "complex";
inline constexpr const char* kSdhomDataset = "sdhom";

/// Dataset curricula: simple_then_complex = [(simple, S_long), (complex, S_fine)],
/// mixed = one S_long stage drawing half of every batch from each set,
/// simple_only / complex_only = one S_long stage.
CurriculumSpec curriculum(StagePlan plan, double scale, int batch_size = 8);

/// Small-displacement fine-tuning: S_fine with batch_size/4 complex and the
/// rest sdhom samples per batch (2 + 6 at batch 8).
CurriculumSpec ft_sd_curriculum(double scale, int batch_size = 8);

/// Single-stage curriculum over one dataset.
CurriculumSpec single_stage(const std::string& dataset, LrSchedule schedule, int batch_size);

/// Draws batches with exactly the configured per-dataset counts. Each dataset
/// is visited in a seeded shuffled order, reshuffled per epoch.
class MixtureSampler {
 public:
  MixtureSampler(std::map<std::string, std::size_t> dataset_sizes, std::uint64_t seed);

  /// (dataset id, record position) pairs, grouped by dataset id in map order.
  std::vector<std::pair<std::string, std::size_t>> next_batch(const std::map<std::string, int>& mixture);

 private:
  struct Cursor {
    std::vector<std::size_t> order;
    std::size_t next = 0;
  };
  std::map<std::string, std::size_t> sizes_;
  std::map<std::string, Cursor> cursors_;
  Rng rng_;
};

}  // namespace flowforge

#endif  // FLOWFORGE_SCHEDULE_HPP
