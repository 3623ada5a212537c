#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "spikesplit/arch.hpp"
#include "spikesplit/bottleneck.hpp"
#include "spikesplit/energy.hpp"

namespace spikesplit {

/// One bottleneck configuration evaluated at one split point.
struct CandidateConfig {
  std::size_t split = 0;
  std::size_t timesteps = 2;
  Shape3 original;
  Shape3 compressed;
  double accuracy_drop = 0;  // percentage points
  CompressionRatio ratio;
  std::uint64_t spike_bytes = 0;
  std::optional<double> edge_energy_mj;

  /// Derives ratio and spike bytes from the shapes; validates drop >= 0.
  static CandidateConfig from_shapes(std::size_t split, Shape3 original, Shape3 compressed, std::size_t timesteps,
                                     double accuracy_drop);

  friend bool operator==(const CandidateConfig&, const CandidateConfig&) = default;
};

/// Strict preference used for selection: higher ratio, then lower edge energy
/// (missing counts as +inf), then fewer spike bytes, then a fixed ordering over
/// the remaining fields so that any two distinct candidates are ranked.
bool better_candidate(const CandidateConfig& a, const CandidateConfig& b);

struct PointSelection {
  std::size_t split = 0;
  std::optional<CandidateConfig> chosen;  // empty: infeasible point
  std::size_t considered = 0;
  std::size_t feasible = 0;
  std::string diagnostic;

  bool is_feasible() const { return chosen.has_value(); }
};

/// Best candidate with accuracy_drop <= max_drop. Candidates must share one
/// split point; an empty list throws std::invalid_argument.
PointSelection select_per_point(std::span<const CandidateConfig> candidates, double max_drop = 2.0);

enum class Objective { max_ratio, min_energy };
std::string_view to_string(Objective o);
/// Accepts "max_ratio"/"max-ratio" and "min_energy"/"min-energy".
Objective parse_objective(std::string_view text);

struct SplitPlan {
  std::string arch_name;
  Objective objective = Objective::max_ratio;
  double max_drop = 2.0;
  std::vector<PointSelection> points;  // ascending split
  std::optional<CandidateConfig> global;
  std::vector<std::string> diagnostics;

  bool feasible() const { return global.has_value(); }
};

/// Per-point selection over every split with candidates, then a global pick:
/// max_ratio ranks with better_candidate; min_energy needs edge energies and
/// ranks by energy, then better_candidate. Ties on everything fall to the lower split.
SplitPlan plan_network(const ArchitectureSpec& arch, std::span<const CandidateConfig> candidates, Objective objective,
                       double max_drop = 2.0);

/// Reads the columns split, T, original, compressed, accuracy_drop. When the
/// printed columns baseline_bytes, spike_bytes or ratio are present they are
/// checked against the values derived from the shapes.
std::vector<CandidateConfig> parse_candidates(std::string_view text);
std::vector<CandidateConfig> load_candidates(const std::filesystem::path& path);

/// Sets edge_energy_mj to the spike energy of each candidate's split on `profile`.
void attach_edge_energy(std::vector<CandidateConfig>& candidates, const ArchitectureSpec& arch,
                        std::span<const FiringRateRow> rates, const HardwareProfile& baseline,
                        const HardwareProfile& profile);

}  // namespace spikesplit
