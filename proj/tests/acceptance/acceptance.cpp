// Acceptance runner: one PASS/FAIL line per criterion.
//
//   acceptance                 run every criterion
//   acceptance --criterion N   run criterion N only

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstring>
#include <functional>
#include <iostream>
#include <memory>
#include <sstream>

#include <CLI11.hpp>

#include "cli.hpp"
#include "grad_oracle.hpp"
#include "paper_tables.hpp"
#include "planner_oracle.hpp"
#include "spikesplit/arch.hpp"
#include "spikesplit/bottleneck.hpp"
#include "spikesplit/dataset.hpp"
#include "spikesplit/network.hpp"
#include "spikesplit/random.hpp"
#include "spikesplit/tables.hpp"
#include "spikesplit/trainer.hpp"
#include "spikesplit/transport.hpp"
#include "spikesplit/wire.hpp"

namespace spikesplit {
namespace {

struct Outcome {
  bool pass = true;
  std::string summary;
};

/// Collects failures with their context; prints each as an indented detail line.
class Checker {
 public:
  bool check(bool ok, const std::string& what) {
    ++checks_;
    if (!ok) {
      ++failures_;
      if (failures_ <= kMaxPrinted) std::cout << "    mismatch: " << what << "\n";
    }
    return ok;
  }
  std::size_t checks() const { return checks_; }
  std::size_t failures() const { return failures_; }
  bool ok() const { return failures_ == 0; }

 private:
  static constexpr std::size_t kMaxPrinted = 40;
  std::size_t checks_ = 0;
  std::size_t failures_ = 0;
};

Table run_cli_tsv(const std::vector<std::string>& args) {
  std::vector<std::string> argv{"spikesplit"};
  argv.insert(argv.end(), args.begin(), args.end());
  argv.insert(argv.end(), {"--format", "tsv"});
  std::ostringstream out, err;
  const int code = cli::run(argv, out, err);
  if (code != cli::kOk) throw std::runtime_error("spikesplit " + args.front() + " exited " + std::to_string(code) +
                                                 ": " + err.str());
  return parse_tsv(out.str());
}

double rel_error(double got, double want) {
  return std::abs(got - want) / std::abs(want);
}

Tensor random_images(const Shape3& in, std::size_t n, std::uint64_t seed) {
  Rng rng(seed);
  Tensor t({n, in.c, in.h, in.w});
  for (auto& v : t.values()) v = rng.uniform();
  return t;
}

Outcome compression_tables() {
  Checker ck;
  std::size_t exact_rows = 0, rows = 0;
  const std::pair<const char*, const std::vector<paper::CompressionRow>*> cases[] = {
      {"resnet50", &paper::kResnetCompression}, {"mobilenetv1", &paper::kMobilenetCompression}};
  for (const auto& [arch, expected] : cases) {
    const Table t = run_cli_tsv({"compress-report", "--arch", arch});
    ck.check(t.rows.size() == expected->size(), std::string(arch) + " row count " + std::to_string(t.rows.size()));
    for (std::size_t i = 0; i < std::min(t.rows.size(), expected->size()); ++i) {
      const auto& row = t.rows[i];
      const auto& want = (*expected)[i];
      const std::string where = std::string(arch) + " split " + std::to_string(want.split) + ": ";
      bool exact = true;
      auto cell = [&](const char* col, std::uint64_t value) {
        exact &= ck.check(parse_uint(row[t.column(col)]) == value,
                          where + col + " " + row[t.column(col)] + " != " + std::to_string(value));
      };
      cell("split", want.split);
      cell("baseline_bytes", want.baseline_bytes);
      cell("spike_bytes", want.spike_bytes);
      cell("ratio", want.ratio);
      exact &= ck.check(row[t.column("original")] == want.original && row[t.column("compressed")] == want.compressed,
                        where + "shapes " + row[t.column("original")] + " -> " + row[t.column("compressed")]);
      ++rows;
      exact_rows += exact ? 1 : 0;
    }
  }
  ck.check(rows == 29, "expected 29 rows, saw " + std::to_string(rows));
  return {ck.ok(), std::to_string(exact_rows) + "/29 rows exact"};
}

/// Decimal places a printed table value carries.
int printed_decimals(double v) {
  for (int d = 0; d < 8; ++d) {
    const double scaled = v * std::pow(10.0, d);
    if (std::abs(scaled - std::round(scaled)) < 1e-6) return d;
  }
  return 8;
}

/// Whether `paper_value` could come from some inputs that round to the printed
/// GFLOPs and firing rate. Diagnostic only; it does not relax the 2% bound.
bool explained_by_rounding(double paper_value, double gflops, double fr, double scale, bool uses_fr) {
  const double gh = 0.5 * std::pow(10.0, -printed_decimals(gflops));
  const double fh = 0.5 * std::pow(10.0, -printed_decimals(fr));
  const double lo = (gflops - gh) * (uses_fr ? fr - fh : 1.0) * scale;
  const double hi = (gflops + gh) * (uses_fr ? fr + fh : 1.0) * scale;
  const double ph = 0.5 * std::pow(10.0, -printed_decimals(paper_value));
  return paper_value + ph >= lo && paper_value - ph <= hi;
}

Outcome energy_tables() {
  Checker ck;
  const std::pair<const char*, const std::vector<paper::EnergyRow>*> cases[] = {
      {"resnet50", &paper::kResnetEnergy}, {"mobilenetv1", &paper::kMobilenetEnergy}};
  double worst_ratio = 0, worst_energy = 0;
  std::size_t ratio_fail = 0, energy_fail = 0, cells = 0, explained = 0;
  for (const auto& [arch, expected] : cases) {
    const Table t = run_cli_tsv({"energy-report", "--arch", arch});
    ck.check(t.rows.size() == expected->size(), std::string(arch) + " row count");
    for (std::size_t i = 0; i < std::min(t.rows.size(), expected->size()); ++i) {
      const auto& row = t.rows[i];
      const auto& want = (*expected)[i];
      const std::string where = std::string(arch) + " split " + std::to_string(want.split) + " ";
      auto cell = [&](const char* col, double paper_value, bool is_ratio, double scale = 0, bool uses_fr = false) {
        const double got = parse_double(row[t.column(col)]);
        const double err = rel_error(got, paper_value);
        ++cells;
        double& worst = is_ratio ? worst_ratio : worst_energy;
        worst = std::max(worst, err);
        std::ostringstream msg;
        msg << where << col << " " << got << " vs " << paper_value << " (" << format_fixed(100 * err, 2) << "%)";
        if (!is_ratio && err > 0.02 && explained_by_rounding(paper_value, want.gflops, want.fr, scale, uses_fr)) {
          ++explained;
          msg << ", within the printed input precision";
        }
        if (!ck.check(err <= 0.02, msg.str())) ++(is_ratio ? ratio_fail : energy_fail);
      };
      // mJ per GOP: 4.6 pJ MAC, 0.9 pJ AC, 77 fJ ROLLS AC; spike energy scales with fr * T.
      const double T = parse_double(row[t.column("T")]);
      cell("e_baseline_45nm_mj", want.e_baseline_mj, false, 4.6);
      cell("e_spike_45nm_mj", want.e_spike_45nm_mj, false, 0.9 * T, true);
      cell("e_spike_rolls_mj", want.e_spike_rolls_mj, false, 0.077 * T, true);
      cell("ratio_45nm", want.ratio_45nm, true);
      cell("ratio_rolls", want.ratio_rolls, true);
    }
  }
  std::ostringstream s;
  s << cells - ratio_fail - energy_fail << "/" << cells << " cells within 2%; ratios worst "
    << format_fixed(100 * worst_ratio, 2) << "% (" << ratio_fail << " over), energies worst "
    << format_fixed(100 * worst_energy, 2) << "% (" << energy_fail << " over, " << explained
    << " of them within the printed input precision)";
  return {ck.ok(), s.str()};
}

Outcome flops_recomputation() {
  Checker ck;
  double worst = 0;
  const std::pair<const char*, const std::vector<paper::EnergyRow>*> cases[] = {
      {"resnet50", &paper::kResnetEnergy}, {"mobilenetv1", &paper::kMobilenetEnergy}};
  for (const auto& [name, rows] : cases) {
    const ArchitectureSpec arch = build_arch(name);
    ck.check(arch.num_splits() == rows->size(), std::string(name) + " split count");
    std::uint64_t prev = 0;
    for (const auto& row : *rows) {
      const std::uint64_t flops = prefix_flops(arch, row.split);
      const double err = rel_error(static_cast<double>(flops) * 1e-9, row.gflops);
      worst = std::max(worst, err);
      ck.check(err <= 0.15, std::string(name) + " split " + std::to_string(row.split) + ": " +
                                format_fixed(static_cast<double>(flops) * 1e-9, 4) + " GFLOPs vs " +
                                format_fixed(row.gflops, 2));
      ck.check(flops > prev, std::string(name) + " split " + std::to_string(row.split) + " not strictly increasing");
      prev = flops;
    }
  }
  return {ck.ok(), "29 split points, worst relative error " + format_fixed(100 * worst, 2) + "%, monotone"};
}

Outcome packing_and_wire() {
  Checker ck;
  Rng rng(4242);
  constexpr int kCases = 1000;
  for (int i = 0; i < kCases; ++i) {
    const Shape5 shape{rng.range(1, 4), rng.range(1, 3), rng.range(1, 9), rng.range(1, 7), rng.range(1, 7)};
    const double density = rng.uniform();
    Tensor bits({shape.t, shape.b, shape.c, shape.h, shape.w});
    for (auto& v : bits.values()) v = rng.uniform() < density ? 1.0 : 0.0;
    const SpikeTensor packed = SpikeTensor::pack(bits);
    ck.check(packed.bytes().size() == (shape.numel() + 7) / 8, "packed size, case " + std::to_string(i));
    const Tensor unpacked = packed.unpack();
    ck.check(std::ranges::equal(unpacked.values(), bits.values()), "pack/unpack, case " + std::to_string(i));
    const SpikeTensor again = SpikeTensor::from_bytes(shape, {packed.bytes().begin(), packed.bytes().end()});
    ck.check(again == packed, "from_bytes, case " + std::to_string(i));
  }
  for (int i = 0; i < kCases; ++i) {
    const Shape5 shape{rng.range(1, 8), 1, rng.range(1, 64), rng.range(1, 8), rng.range(1, 8)};
    SpikeTensor s(shape);
    for (std::size_t k = 0; k < s.numel(); ++k) s.set(k, rng.uniform() < 0.3);
    const auto frame = SpikeFrame::from_spikes(static_cast<std::uint16_t>(rng.range(0, 65535)), rng.range(1, 255), s);
    const auto bytes = serialize(frame);
    ck.check(bytes.size() == 19 + s.bytes().size() + 4, "frame size, case " + std::to_string(i));
    const SpikeFrame back = deserialize(bytes);
    ck.check(back == frame && back.spikes() == s, "serialize/deserialize, case " + std::to_string(i));
  }

  // ResNet split 16 with the 8x4x4 encoder output at T = 2.
  const ArchitectureSpec arch = build_arch("resnet50");
  Model model = Model::build(arch, 16);
  model.insert_bottleneck(16, make_bottleneck(arch.split_shape(16), {8, 4, 4}, 2), 17);
  model.calibrate_statistics(random_images(arch.input, 4, 5), 2);
  const Tensor spikes = model.run_edge(random_images(arch.input, 1, 6), 2, 16);
  const auto frame = SpikeFrame::from_spikes(arch.id, 16, SpikeTensor::pack(spikes));
  const auto wire = serialize(frame);
  ck.check(frame.payload.size() == 32, "resnet split 16 payload " + std::to_string(frame.payload.size()) + " bytes");
  ck.check(wire.size() == 19 + 32 + 4, "resnet split 16 frame " + std::to_string(wire.size()) + " bytes");
  return {ck.ok(), std::to_string(2 * kCases) + " round trips, resnet split 16 payload " +
                       std::to_string(frame.payload.size()) + " B"};
}

Outcome partition_transparency() {
  Checker ck;
  std::size_t compared = 0;
  constexpr std::size_t kImages = 2;
  for (const char* name : {"resnet50", "mobilenetv1"}) {
    const ArchitectureSpec arch = build_arch(name);
    auto model = std::make_shared<Model>(Model::build(arch, 99));
    model->calibrate_statistics(random_images(arch.input, 8, 100), 2);
    CloudServer server;
    for (std::size_t split = 1; split <= arch.num_splits(); ++split) server.add_model(model, split);
    server.start();
    EdgeClient client({"127.0.0.1", server.port()});
    std::vector<std::vector<float>> reference;
    for (std::size_t i = 0; i < kImages; ++i) {
      reference.push_back(local_logits(*model, random_images(arch.input, 1, 200 + i), 2));
    }
    for (std::size_t split = 1; split <= arch.num_splits(); ++split) {
      for (std::size_t i = 0; i < kImages; ++i) {
        const auto remote = edge_infer(client, *model, split, random_images(arch.input, 1, 200 + i), 2);
        const bool same = remote.size() == reference[i].size() &&
                          std::memcmp(remote.data(), reference[i].data(), remote.size() * sizeof(float)) == 0;
        ck.check(same, std::string(name) + " split " + std::to_string(split) + " image " + std::to_string(i));
        ++compared;
      }
    }
    server.stop();
  }
  return {ck.ok(), std::to_string(compared - ck.failures()) + "/" + std::to_string(compared) +
                       " split/image pairs bit-exact"};
}

Outcome gradient_oracle() {
  Checker ck;
  std::size_t usable = 0;
  double worst = 0;
  std::size_t params = 0;
  for (std::uint64_t seed = 1; usable < 20 && seed < 200; ++seed) {
    const auto r = oracle::run_grad_check(seed);
    if (!r.usable) continue;
    ++usable;
    params = r.parameters;
    worst = std::max(worst, r.rel_error);
    ck.check(r.rel_error <= 1e-5, "seed " + std::to_string(seed) + " relative error " + format_exact(r.rel_error));
    ck.check(r.parameters <= 200, "parameter count " + std::to_string(r.parameters));
  }
  ck.check(usable >= 20, "only " + std::to_string(usable) + " usable seeds");
  std::ostringstream s;
  s << usable << " seeds, " << params << " parameters, T=2, worst relative error " << worst;
  return {ck.ok(), s.str()};
}

Outcome trainability() {
  Checker ck;
  const ArchitectureSpec arch = build_arch("toy");
  double min_step1 = 1, worst_drop = -100;
  constexpr std::uint64_t kSeeds = 5;
  for (std::uint64_t seed = 1; seed <= kSeeds; ++seed) {
    BlobTaskSpec task;
    task.seed = seed;
    const Dataset data = make_blob_dataset(task);
    TwoStepConfig cfg;
    cfg.step1.epochs = 30;
    cfg.step1.shuffle_seed = seed + 1;
    cfg.step2 = cfg.step1;
    cfg.split = 1;
    cfg.bottleneck_out = arch.split_shape(1);
    cfg.bottleneck_seed = seed + 2;
    const TwoStepResult r = train_two_step(Model::build(arch, seed), data, cfg);
    double best1 = 0;
    for (const auto& e : r.step1.epochs) best1 = std::max(best1, e.accuracy);
    const double a1 = r.step1.last().accuracy;
    const double drop = accuracy_drop(a1, r.step2.last().accuracy);
    min_step1 = std::min(min_step1, best1);
    worst_drop = std::max(worst_drop, drop);
    const std::string where = "seed " + std::to_string(seed) + ": ";
    ck.check(compression_ratio(arch.split_shape(1), cfg.bottleneck_out).rounded() == 1, where + "ratio not 1");
    ck.check(r.model.bottleneck().has_value(), where + "no bottleneck after step 2");
    ck.check(best1 >= 0.9, where + "step 1 peaked at " + format_fixed(100 * best1, 2) + "%");
    ck.check(drop <= 2.0, where + "step 2 dropped " + format_fixed(drop, 2) + " points");
  }
  std::ostringstream s;
  s << kSeeds << " seeds, step 1 min " << format_fixed(100 * min_step1, 2) << "%, step 2 worst drop "
    << format_fixed(worst_drop, 2) << " points";
  return {ck.ok(), s.str()};
}

Outcome planner_fidelity() {
  Checker ck;
  const Table resnet = run_cli_tsv({"plan", "--arch", "resnet50", "--max-drop", "2", "--objective", "max_ratio"});
  std::size_t globals = 0;
  for (const auto& row : resnet.rows) {
    if (row[resnet.column("global")] != "1") continue;
    ++globals;
    ck.check(row[resnet.column("split")] == "16" && row[resnet.column("ratio")] == "256",
             "resnet picked split " + row[resnet.column("split")] + " ratio " + row[resnet.column("ratio")]);
  }
  ck.check(globals == 1, "resnet global rows " + std::to_string(globals));

  const Table mobile = run_cli_tsv({"plan", "--arch", "mobilenetv1", "--max-drop", "2"});
  bool saw12 = false;
  for (const auto& row : mobile.rows) {
    if (row[mobile.column("split")] != "12") continue;
    saw12 = true;
    ck.check(row[mobile.column("feasible")] == "0", "mobilenet split 12 accepted");
  }
  ck.check(saw12, "mobilenet split 12 missing");

  const ArchitectureSpec arch = build_arch("resnet50");
  Rng rng(8);
  constexpr int kSets = 100;
  for (int set = 0; set < kSets; ++set) {
    const bool with_energy = set % 2 == 1;
    const auto cands = oracle::random_candidates(arch, rng, with_energy);
    const double max_drop = static_cast<double>(rng.range(0, 300)) / 100.0;
    const auto plan = plan_network(arch, cands, Objective::max_ratio, max_drop);
    ck.check(plan.global == oracle::oracle_pick(cands, max_drop, false), "max_ratio set " + std::to_string(set));
    if (!with_energy) continue;
    std::vector<CandidateConfig> winners;
    for (std::size_t split = 1; split <= arch.num_splits(); ++split) {
      std::vector<CandidateConfig> at;
      for (const auto& c : cands) {
        if (c.split == split) at.push_back(c);
      }
      if (auto w = oracle::oracle_pick(at, max_drop, false)) winners.push_back(*w);
    }
    const auto e = plan_network(arch, cands, Objective::min_energy, max_drop);
    ck.check(e.global == oracle::oracle_pick(winners, max_drop, true), "min_energy set " + std::to_string(set));
  }
  return {ck.ok(), "resnet 16/256, mobilenet split 12 rejected, " + std::to_string(kSets) + " oracle sets"};
}

struct Criterion {
  const char* title;
  double budget_s;  // 0: no runtime bound
  std::function<Outcome()> run;
};

const std::vector<Criterion>& criteria() {
  static const std::vector<Criterion> all{
      {"compression tables", 1, compression_tables},
      {"energy tables", 1, energy_tables},
      {"flops recomputation", 0, flops_recomputation},
      {"packing and wire", 0, packing_and_wire},
      {"partition transparency", 120, partition_transparency},
      {"gradient oracle", 60, gradient_oracle},
      {"trainability", 300, trainability},
      {"planner fidelity", 0, planner_fidelity},
  };
  return all;
}

bool run_criterion(std::size_t n) {
  const Criterion& c = criteria().at(n - 1);
  const auto start = std::chrono::steady_clock::now();
  Outcome o;
  try {
    o = c.run();
  } catch (const std::exception& e) {
    o = {false, std::string("exception: ") + e.what()};
  }
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  std::string timing = format_fixed(secs, 2) + " s";
  if (c.budget_s > 0) {
    timing += " < " + format_fixed(c.budget_s, 0) + " s";
    if (secs >= c.budget_s) {
      o.pass = false;
      timing += " exceeded";
    }
  }
  std::cout << (o.pass ? "PASS" : "FAIL") << " criterion " << n << " " << c.title << ": " << o.summary << " ["
            << timing << "]" << std::endl;
  return o.pass;
}

}  // namespace
}  // namespace spikesplit

int main(int argc, char** argv) {
  CLI::App app{"Acceptance criteria runner"};
  std::size_t only = 0;
  app.add_option("--criterion", only, "Run one criterion (1-8)")->check(CLI::Range(1, 8));
  CLI11_PARSE(app, argc, argv);

  bool all_pass = true;
  const std::size_t count = spikesplit::criteria().size();
  for (std::size_t n = 1; n <= count; ++n) {
    if (only != 0 && n != only) continue;
    all_pass = spikesplit::run_criterion(n) && all_pass;
  }
  return all_pass ? 0 : 1;
}
