#include <gtest/gtest.h>

#include <algorithm>
#include <limits>

#include "paper_tables.hpp"
#include "planner_oracle.hpp"
#include "spikesplit/error.hpp"
#include "spikesplit/planner.hpp"
#include "spikesplit/random.hpp"

namespace spikesplit {
namespace {

using oracle::oracle_pick;
using oracle::random_candidates;
using oracle::table_candidates;

TEST(Planner, PrefersHigherRatio) {
  const auto a = CandidateConfig::from_shapes(16, {2048, 4, 4}, {8, 4, 4}, 2, 0.16);
  const auto b = CandidateConfig::from_shapes(16, {2048, 4, 4}, {16, 4, 4}, 2, 0.9);
  const std::vector<CandidateConfig> both{b, a};
  const auto sel = select_per_point(both);
  ASSERT_TRUE(sel.chosen);
  EXPECT_EQ(sel.chosen->compressed, (Shape3{8, 4, 4}));
  EXPECT_EQ(sel.chosen->ratio.rounded(), 256u);
  EXPECT_EQ(sel.considered, 2u);
  EXPECT_EQ(sel.feasible, 2u);
}

TEST(Planner, SingleCandidateReturnedUnchanged) {
  auto c = CandidateConfig::from_shapes(3, {256, 32, 32}, {16, 32, 32}, 2, 0.09);
  c.edge_energy_mj = 0.09;
  const auto sel = select_per_point(std::vector<CandidateConfig>{c});
  ASSERT_TRUE(sel.chosen);
  EXPECT_EQ(*sel.chosen, c);
}

TEST(Planner, InfeasiblePointIsAResult) {
  const auto c = CandidateConfig::from_shapes(12, {1024, 7, 7}, {32, 7, 7}, 2, 2.04);
  const auto sel = select_per_point(std::vector<CandidateConfig>{c}, 2.0);
  EXPECT_FALSE(sel.is_feasible());
  EXPECT_EQ(sel.feasible, 0u);
  EXPECT_NE(sel.diagnostic.find("2.04"), std::string::npos) << sel.diagnostic;
  EXPECT_THROW(select_per_point(std::vector<CandidateConfig>{}), std::invalid_argument);
}

TEST(Planner, TieBreakChain) {
  auto a = CandidateConfig::from_shapes(1, {64, 8, 8}, {16, 8, 8}, 2, 0.5);
  auto b = CandidateConfig::from_shapes(1, {64, 8, 8}, {4, 16, 16}, 2, 0.5);  // same ratio and bytes
  a.edge_energy_mj = 0.2;
  b.edge_energy_mj = 0.1;
  EXPECT_TRUE(better_candidate(b, a));
  b.edge_energy_mj.reset();
  EXPECT_TRUE(better_candidate(a, b));  // missing energy counts as +inf
  a.edge_energy_mj.reset();
  auto c = CandidateConfig::from_shapes(1, {64, 8, 8}, {16, 8, 8}, 1, 0.5);  // fewer spike bytes
  EXPECT_TRUE(better_candidate(c, a));
  EXPECT_FALSE(better_candidate(a, a));
  EXPECT_NE(better_candidate(a, b), better_candidate(b, a));
}

TEST(Planner, PrintedResnetMaxRatio) {
  const auto arch = build_arch("resnet50");
  const auto cands = table_candidates(paper::kResnetCompression);
  const auto plan = plan_network(arch, cands, Objective::max_ratio, 2.0);
  ASSERT_TRUE(plan.feasible());
  EXPECT_EQ(plan.global->split, 16u);
  EXPECT_EQ(plan.global->ratio.rounded(), 256u);
  EXPECT_DOUBLE_EQ(plan.global->accuracy_drop, 0.16);
  EXPECT_EQ(plan.points.size(), 16u);
}

TEST(Planner, PrintedMobilenetRejectsSplit12) {
  const auto arch = build_arch("mobilenetv1");
  const auto cands = table_candidates(paper::kMobilenetCompression);
  const auto plan = plan_network(arch, cands, Objective::max_ratio, 2.0);
  ASSERT_EQ(plan.points.size(), 13u);
  for (const auto& p : plan.points) {
    if (p.split == 12) {
      EXPECT_FALSE(p.is_feasible());
    } else {
      ASSERT_TRUE(p.is_feasible()) << p.split;
      EXPECT_LE(p.chosen->accuracy_drop, 2.0);
    }
  }
  EXPECT_EQ(plan.global->split, 13u);
  EXPECT_EQ(plan.global->ratio.rounded(), 174u);
  EXPECT_EQ(plan.diagnostics.size(), 1u);
}

TEST(Planner, PrintedResnetMinEnergy) {
  const auto arch = build_arch("resnet50");
  auto cands = table_candidates(paper::kResnetCompression);
  std::vector<FiringRateRow> rates;
  for (const auto& r : paper::kResnetEnergy) rates.push_back({r.split, r.gflops, r.fr});
  const auto profiles = default_profiles();
  attach_edge_energy(cands, arch, rates, profiles[0], profiles[0]);
  const auto plan = plan_network(arch, cands, Objective::min_energy, 2.0);
  ASSERT_TRUE(plan.feasible());
  EXPECT_EQ(plan.global->split, 1u);
  EXPECT_DOUBLE_EQ(plan.global->accuracy_drop, 0.67);

  auto no_energy = table_candidates(paper::kResnetCompression);
  EXPECT_THROW(plan_network(arch, no_energy, Objective::min_energy), std::invalid_argument);
}

TEST(Planner, AllInfeasibleGivesEmptyPlan) {
  const auto arch = build_arch("resnet50");
  const auto cands = table_candidates(paper::kResnetCompression);
  const auto plan = plan_network(arch, cands, Objective::max_ratio, 0.05);
  EXPECT_FALSE(plan.feasible());
  EXPECT_EQ(plan.points.size(), 16u);
  EXPECT_FALSE(plan.diagnostics.empty());
}

TEST(Planner, MatchesBruteForceOracle) {
  const auto arch = build_arch("resnet50");
  Rng rng(2024);
  for (int set = 0; set < 100; ++set) {
    const bool with_energy = set % 2 == 1;
    const auto cands = random_candidates(arch, rng, with_energy);
    const double max_drop = static_cast<double>(rng.range(0, 300)) / 100.0;
    const auto plan = plan_network(arch, cands, Objective::max_ratio, max_drop);
    EXPECT_EQ(plan.global, oracle_pick(cands, max_drop, false)) << "set " << set;
    for (const auto& p : plan.points) {
      std::vector<CandidateConfig> at;
      std::copy_if(cands.begin(), cands.end(), std::back_inserter(at),
                   [&](const CandidateConfig& c) { return c.split == p.split; });
      EXPECT_EQ(p.chosen, oracle_pick(at, max_drop, false)) << "set " << set << " split " << p.split;
      EXPECT_EQ(select_per_point(at, max_drop).chosen, p.chosen);
    }
    if (with_energy) {
      // min_energy picks among the per-point winners, which are themselves chosen by ratio.
      std::vector<CandidateConfig> winners;
      for (std::size_t split = 1; split <= arch.num_splits(); ++split) {
        std::vector<CandidateConfig> at;
        std::copy_if(cands.begin(), cands.end(), std::back_inserter(at),
                     [&](const CandidateConfig& c) { return c.split == split; });
        if (auto w = oracle_pick(at, max_drop, false)) winners.push_back(*w);
      }
      const auto e = plan_network(arch, cands, Objective::min_energy, max_drop);
      EXPECT_EQ(e.global, oracle_pick(winners, max_drop, true)) << "set " << set;
    }
  }
}

TEST(Planner, OrderInvariance) {
  const auto arch = build_arch("resnet50");
  Rng rng(77);
  for (int set = 0; set < 50; ++set) {
    auto cands = random_candidates(arch, rng, true);
    const auto ref = plan_network(arch, cands, Objective::max_ratio, 1.5);
    const auto ref_e = plan_network(arch, cands, Objective::min_energy, 1.5);
    for (int k = 0; k < 5; ++k) {
      std::shuffle(cands.begin(), cands.end(), rng.engine());
      const auto p = plan_network(arch, cands, Objective::max_ratio, 1.5);
      const auto e = plan_network(arch, cands, Objective::min_energy, 1.5);
      ASSERT_EQ(p.global, ref.global);
      ASSERT_EQ(e.global, ref_e.global);
      ASSERT_EQ(p.points.size(), ref.points.size());
      for (std::size_t i = 0; i < p.points.size(); ++i) ASSERT_EQ(p.points[i].chosen, ref.points[i].chosen);
    }
  }
}

TEST(Planner, RaisingMaxDropNeverLowersRatio) {
  const auto arch = build_arch("resnet50");
  Rng rng(99);
  for (int set = 0; set < 50; ++set) {
    const auto cands = random_candidates(arch, rng, false);
    std::optional<CompressionRatio> prev;
    for (double d = 0.0; d <= 3.0; d += 0.1) {
      const auto plan = plan_network(arch, cands, Objective::max_ratio, d);
      if (prev) {
        ASSERT_TRUE(plan.global);
        EXPECT_FALSE(plan.global->ratio < *prev);
      }
      if (plan.global) prev = plan.global->ratio;
    }
  }
}

TEST(Planner, ShippedCandidateFilesMatchTables) {
  const auto r = load_candidates(data_dir() / "resnet50_candidates.tsv");
  const auto m = load_candidates(data_dir() / "mobilenetv1_candidates.tsv");
  EXPECT_EQ(r, table_candidates(paper::kResnetCompression));
  EXPECT_EQ(m, table_candidates(paper::kMobilenetCompression));
}

TEST(Planner, ParseChecksPrintedColumns) {
  const std::string header = "split\tT\toriginal\tcompressed\tratio\taccuracy_drop\n";
  EXPECT_NO_THROW(parse_candidates(header + "16\t2\t2048x4x4\t8x4x4\t256\t0.16\n"));
  EXPECT_THROW(parse_candidates(header + "16\t2\t2048x4x4\t8x4x4\t128\t0.16\n"), ValueError);
  EXPECT_THROW(parse_candidates(header + "16\t2\t2048x4x4\t8x4x4\t256\t-1\n"), ValueError);
  EXPECT_THROW(parse_objective("fastest"), std::invalid_argument);
  EXPECT_EQ(parse_objective("min-energy"), Objective::min_energy);
  EXPECT_EQ(parse_objective("max_ratio"), Objective::max_ratio);
}

TEST(Planner, RejectsCandidatesForWrongArchitecture) {
  const auto arch = build_arch("mobilenetv1");
  const auto cands = table_candidates(paper::kResnetCompression);
  EXPECT_ANY_THROW(plan_network(arch, cands, Objective::max_ratio));
}

}  // namespace
}  // namespace spikesplit
