#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "spikesplit/arch.hpp"
#include "spikesplit/energy.hpp"
#include "spikesplit/network.hpp"
#include "spikesplit/planner.hpp"
#include "spikesplit/tables.hpp"

namespace spikesplit::cli {

enum ExitCode : int { kOk = 0, kFailure = 1, kUsage = 2, kInfeasible = 3, kProtocol = 4 };

/// Thrown for bad user input that should map to kUsage.
class UsageError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

enum class Format { text, tsv };

struct CompressOptions {
  std::string arch = "resnet50";
  std::size_t timesteps = 2;
  std::optional<std::filesystem::path> candidates;  // default: <data>/<arch>_candidates.tsv
  std::size_t element_bytes = 1;
};

/// One row per candidate: split, T, original, compressed, baseline_bytes, spike_bytes, ratio.
Table compress_report(const CompressOptions& opts);

struct EnergyOptions {
  std::string arch = "resnet50";
  std::size_t timesteps = 2;
  std::optional<std::filesystem::path> fr_file;  // default: <data>/<arch>_energy.tsv
  std::optional<std::size_t> measure_samples;    // measure fr instead of reading a file
  std::uint64_t seed = 1;
  bool computed_flops = false;                   // ignore tabulated GFLOPs
  std::string baseline_profile = "45nm";
  std::vector<std::string> profiles;             // default: every profile
  std::optional<std::filesystem::path> profiles_file;
};

std::vector<EnergyReport> energy_reports(const EnergyOptions& opts);
Table energy_table(const std::vector<EnergyReport>& reports, bool exact);

struct PlanOptions {
  std::string arch = "resnet50";
  std::optional<std::filesystem::path> candidates;
  double max_drop = 2.0;
  Objective objective = Objective::max_ratio;
  std::optional<std::filesystem::path> fr_file;
  std::string baseline_profile = "45nm";
  std::string profile = "45nm";
  std::optional<std::filesystem::path> profiles_file;
};

SplitPlan make_plan(const PlanOptions& opts);
/// split, feasible, compressed, T, ratio, accuracy_drop, spike_bytes, edge_energy_mj; global row last.
Table plan_table(const SplitPlan& plan);
std::string format_plan(const SplitPlan& plan);

struct ModelOptions {
  std::string arch = "toy";
  std::size_t split = 1;
  std::size_t timesteps = 2;
  std::uint64_t seed = 1;
  std::optional<std::filesystem::path> checkpoint;
  std::optional<Shape3> bottleneck;  // inserted at `split` unless loaded from a checkpoint
};

/// The weights both halves agree on: a checkpoint or a seeded random model.
Model build_model(const ModelOptions& opts);

/// Entry point shared by main() and the tests. argv[0] is the program name.
int run(const std::vector<std::string>& argv, std::ostream& out, std::ostream& err);

}  // namespace spikesplit::cli
