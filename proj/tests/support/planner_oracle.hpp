#pragma once

#include <algorithm>
#include <limits>
#include <optional>
#include <tuple>
#include <vector>

#include "paper_tables.hpp"
#include "spikesplit/planner.hpp"
#include "spikesplit/random.hpp"
#include "spikesplit/tables.hpp"

namespace spikesplit::oracle {

__extension__ using U128 = unsigned __int128;

// Brute-force reference: filter by drop, then narrow the feasible set one criterion at a time.
inline std::optional<CandidateConfig> oracle_pick(const std::vector<CandidateConfig>& all, double max_drop,
                                                  bool energy_first) {
  std::vector<CandidateConfig> s;
  for (const auto& c : all) {
    if (c.accuracy_drop <= max_drop) s.push_back(c);
  }
  if (s.empty()) return std::nullopt;
  auto energy = [](const CandidateConfig& c) {
    return c.edge_energy_mj.value_or(std::numeric_limits<double>::infinity());
  };
  auto keep_min = [&s](auto key) {
    auto best = key(s.front());
    for (const auto& c : s) best = std::min(best, key(c));
    std::erase_if(s, [&](const CandidateConfig& c) { return key(c) != best; });
  };
  if (energy_first) keep_min(energy);
  // Highest ratio: a/b >= every other c/d, compared by cross multiplication.
  {
    CandidateConfig best = s.front();
    for (const auto& c : s) {
      if (U128(c.ratio.numerator) * best.ratio.denominator > U128(best.ratio.numerator) * c.ratio.denominator) {
        best = c;
      }
    }
    std::erase_if(s, [&](const CandidateConfig& c) {
      return U128(c.ratio.numerator) * best.ratio.denominator != U128(best.ratio.numerator) * c.ratio.denominator;
    });
  }
  keep_min(energy);
  keep_min([](const CandidateConfig& c) { return c.spike_bytes; });
  keep_min([](const CandidateConfig& c) {
    return std::make_tuple(c.compressed.c, c.compressed.h, c.compressed.w, c.accuracy_drop, c.timesteps, c.split,
                           c.original.c, c.original.h, c.original.w);
  });
  return s.front();
}

inline std::vector<CandidateConfig> table_candidates(const std::vector<paper::CompressionRow>& rows) {
  std::vector<CandidateConfig> out;
  for (const auto& r : rows) {
    out.push_back(CandidateConfig::from_shapes(r.split, parse_shape3(r.original), parse_shape3(r.compressed), 2,
                                               r.accuracy_drop));
  }
  return out;
}

inline std::vector<CandidateConfig> random_candidates(const ArchitectureSpec& arch, Rng& rng, bool with_energy) {
  std::vector<CandidateConfig> out;
  const std::size_t n = rng.range(1, 24);
  const std::size_t splits = rng.range(1, 4);
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t split = rng.range(1, splits);
    const Shape3 o = arch.split_shape(split);
    const Shape3 c{o.c >> rng.range(0, 6), o.h >> rng.range(0, 1), o.w >> rng.range(0, 1)};
    const double drop = static_cast<double>(rng.range(0, 300)) / 100.0;
    auto cand = CandidateConfig::from_shapes(split, o, c, rng.range(1, 3), drop);
    if (with_energy) cand.edge_energy_mj = static_cast<double>(rng.range(1, 5)) * 0.01;
    out.push_back(cand);
  }
  return out;
}

}  // namespace spikesplit::oracle
