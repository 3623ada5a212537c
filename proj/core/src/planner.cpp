#include "spikesplit/planner.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <stdexcept>
#include <tuple>

#include "spikesplit/error.hpp"
#include "spikesplit/tables.hpp"

namespace spikesplit {

namespace {

double energy_or_inf(const CandidateConfig& c) {
  return c.edge_energy_mj.value_or(std::numeric_limits<double>::infinity());
}

auto tail_key(const CandidateConfig& c) {
  return std::make_tuple(c.compressed.c, c.compressed.h, c.compressed.w, c.accuracy_drop, c.timesteps, c.split,
                         c.original.c, c.original.h, c.original.w);
}

}  // namespace

CandidateConfig CandidateConfig::from_shapes(std::size_t split, Shape3 original, Shape3 compressed,
                                             std::size_t timesteps, double accuracy_drop) {
  if (!(accuracy_drop >= 0.0) || !std::isfinite(accuracy_drop)) {
    throw ValueError("accuracy drop must be a finite value >= 0");
  }
  if (timesteps < 1) throw ValueError("timesteps must be >= 1");
  if (compressed.numel() > original.numel()) throw ShapeError("compressed feature is larger than the original");
  CandidateConfig c;
  c.split = split;
  c.timesteps = timesteps;
  c.original = original;
  c.compressed = compressed;
  c.accuracy_drop = accuracy_drop;
  c.ratio = compression_ratio(original, compressed);
  c.spike_bytes = (static_cast<std::uint64_t>(compressed.numel()) * timesteps + 7) / 8;
  return c;
}

bool better_candidate(const CandidateConfig& a, const CandidateConfig& b) {
  if (b.ratio < a.ratio) return true;
  if (a.ratio < b.ratio) return false;
  const double ea = energy_or_inf(a);
  const double eb = energy_or_inf(b);
  if (ea != eb) return ea < eb;
  if (a.spike_bytes != b.spike_bytes) return a.spike_bytes < b.spike_bytes;
  return tail_key(a) < tail_key(b);
}

PointSelection select_per_point(std::span<const CandidateConfig> candidates, double max_drop) {
  if (candidates.empty()) throw std::invalid_argument("select_per_point needs at least one candidate");
  PointSelection sel;
  sel.split = candidates.front().split;
  sel.considered = candidates.size();
  for (const auto& c : candidates) {
    if (c.split != sel.split) throw std::invalid_argument("candidates span several split points");
    if (c.accuracy_drop > max_drop) continue;
    ++sel.feasible;
    if (!sel.chosen || better_candidate(c, *sel.chosen)) sel.chosen = c;
  }
  if (!sel.chosen) {
    double best_drop = std::numeric_limits<double>::infinity();
    for (const auto& c : candidates) best_drop = std::min(best_drop, c.accuracy_drop);
    sel.diagnostic = "split " + std::to_string(sel.split) + ": infeasible, lowest drop " +
                     format_fixed(best_drop, 2) + "% exceeds " + format_fixed(max_drop, 2) + "%";
  }
  return sel;
}

std::string_view to_string(Objective o) {
  return o == Objective::max_ratio ? "max_ratio" : "min_energy";
}

Objective parse_objective(std::string_view text) {
  if (text == "max_ratio" || text == "max-ratio") return Objective::max_ratio;
  if (text == "min_energy" || text == "min-energy") return Objective::min_energy;
  throw std::invalid_argument("unknown objective '" + std::string(text) + "'");
}

SplitPlan plan_network(const ArchitectureSpec& arch, std::span<const CandidateConfig> candidates, Objective objective,
                       double max_drop) {
  if (!(max_drop >= 0.0)) throw ValueError("max_drop must be >= 0");
  std::map<std::size_t, std::vector<CandidateConfig>> by_split;
  for (const auto& c : candidates) {
    arch.check_split(c.split);
    if (c.original != arch.split_shape(c.split)) {
      throw ShapeError("candidate at split " + std::to_string(c.split) + " has original " + to_string(c.original) +
                       " but " + arch.name + " emits " + to_string(arch.split_shape(c.split)));
    }
    if (objective == Objective::min_energy && !c.edge_energy_mj) {
      throw std::invalid_argument("min_energy objective needs edge energy for every candidate (split " +
                                  std::to_string(c.split) + ")");
    }
    by_split[c.split].push_back(c);
  }

  SplitPlan plan;
  plan.arch_name = arch.name;
  plan.objective = objective;
  plan.max_drop = max_drop;
  for (const auto& [split, group] : by_split) {
    PointSelection sel = select_per_point(group, max_drop);
    if (!sel.is_feasible()) plan.diagnostics.push_back(sel.diagnostic);
    plan.points.push_back(std::move(sel));
  }
  if (by_split.empty()) plan.diagnostics.emplace_back("no candidates supplied");

  for (const auto& sel : plan.points) {
    if (!sel.chosen) continue;
    const CandidateConfig& c = *sel.chosen;
    if (!plan.global) {
      plan.global = c;
      continue;
    }
    const CandidateConfig& g = *plan.global;
    bool take = false;
    if (objective == Objective::max_ratio) {
      take = better_candidate(c, g);
    } else if (*c.edge_energy_mj != *g.edge_energy_mj) {
      take = *c.edge_energy_mj < *g.edge_energy_mj;
    } else {
      take = better_candidate(c, g);
    }
    if (take) plan.global = c;
  }
  if (!plan.global && !plan.points.empty()) {
    plan.diagnostics.push_back("every split point is infeasible at max drop " + format_fixed(max_drop, 2) + "%");
  }
  return plan;
}

std::vector<CandidateConfig> parse_candidates(std::string_view text) {
  const Table t = parse_tsv(text);
  const std::size_t split_col = t.column("split");
  const std::size_t t_col = t.column("T");
  const std::size_t orig_col = t.column("original");
  const std::size_t comp_col = t.column("compressed");
  const std::size_t drop_col = t.column("accuracy_drop");
  std::vector<CandidateConfig> out;
  for (const auto& row : t.rows) {
    auto c = CandidateConfig::from_shapes(parse_uint(row[split_col]), parse_shape3(row[orig_col]),
                                          parse_shape3(row[comp_col]), parse_uint(row[t_col]),
                                          parse_double(row[drop_col]));
    const std::string where = "candidate split " + row[split_col] + " " + row[comp_col];
    if (t.has_column("ratio") && parse_uint(row[t.column("ratio")]) != c.ratio.rounded()) {
      throw ValueError(where + ": printed ratio " + row[t.column("ratio")] + " != derived " +
                       std::to_string(c.ratio.rounded()));
    }
    if (t.has_column("spike_bytes") && parse_uint(row[t.column("spike_bytes")]) != c.spike_bytes) {
      throw ValueError(where + ": printed spike bytes " + row[t.column("spike_bytes")] + " != derived " +
                       std::to_string(c.spike_bytes));
    }
    if (t.has_column("baseline_bytes") && parse_uint(row[t.column("baseline_bytes")]) != c.compressed.numel()) {
      throw ValueError(where + ": printed baseline bytes " + row[t.column("baseline_bytes")] + " != derived " +
                       std::to_string(c.compressed.numel()));
    }
    out.push_back(std::move(c));
  }
  return out;
}

std::vector<CandidateConfig> load_candidates(const std::filesystem::path& path) {
  return parse_candidates(read_text_file(path));
}

void attach_edge_energy(std::vector<CandidateConfig>& candidates, const ArchitectureSpec& arch,
                        std::span<const FiringRateRow> rates, const HardwareProfile& baseline,
                        const HardwareProfile& profile) {
  for (auto& c : candidates) {
    const auto it = std::find_if(rates.begin(), rates.end(), [&](const FiringRateRow& r) { return r.split == c.split; });
    if (it == rates.end()) throw std::invalid_argument("no firing rate for split " + std::to_string(c.split));
    EnergyInputs in;
    in.split = c.split;
    in.firing_rate = it->fr;
    in.timesteps = c.timesteps;
    in.gflops = it->gflops;
    const HardwareProfile profiles[] = {profile};
    c.edge_energy_mj = energy_report(arch, in, baseline, profiles).spike.front().e_spike_mj;
  }
}

}  // namespace spikesplit
