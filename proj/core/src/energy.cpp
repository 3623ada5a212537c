#include "spikesplit/energy.hpp"

#include <cmath>
#include <fstream>
#include <limits>
#include <sstream>

#include "spikesplit/error.hpp"
#include "spikesplit/network.hpp"
#include "spikesplit/random.hpp"
#include "spikesplit/tables.hpp"

namespace spikesplit {

void HardwareProfile::validate() const {
  if (name.empty()) throw std::invalid_argument("hardware profile without a name");
  if (!(e_ac > 0) || !std::isfinite(e_ac)) throw std::invalid_argument(name + ": e_ac must be positive");
  if (e_mac && (!(*e_mac > 0) || !std::isfinite(*e_mac))) {
    throw std::invalid_argument(name + ": e_mac must be positive");
  }
}

std::vector<HardwareProfile> default_profiles() {
  return {{"45nm", 4.6e-12, 0.9e-12}, {"rolls", std::nullopt, 77e-15}};
}

std::vector<HardwareProfile> parse_profiles(std::string_view text) {
  const Table table = parse_tsv(text);
  const std::size_t name_col = table.column("name");
  const std::size_t mac_col = table.column("e_mac_j");
  const std::size_t ac_col = table.column("e_ac_j");
  std::vector<HardwareProfile> out;
  for (const auto& row : table.rows) {
    HardwareProfile p;
    p.name = row[name_col];
    if (row[mac_col] != "-") p.e_mac = parse_double(row[mac_col]);
    p.e_ac = parse_double(row[ac_col]);
    p.validate();
    out.push_back(std::move(p));
  }
  if (out.empty()) throw std::invalid_argument("profile file lists no profiles");
  return out;
}

std::vector<HardwareProfile> load_profiles(const std::filesystem::path& path) {
  return parse_profiles(read_text_file(path));
}

const HardwareProfile& find_profile(std::span<const HardwareProfile> profiles, std::string_view name) {
  for (const auto& p : profiles) {
    if (p.name == name) return p;
  }
  throw std::invalid_argument("unknown hardware profile '" + std::string(name) + "'");
}

std::vector<FiringRateRow> parse_firing_rates(std::string_view text) {
  const Table table = parse_tsv(text);
  const std::size_t split_col = table.column("split");
  const std::size_t fr_col = table.column("fr");
  const bool has_flops = table.has_column("gflops");
  std::vector<FiringRateRow> out;
  for (const auto& row : table.rows) {
    FiringRateRow r;
    r.split = parse_uint(row[split_col]);
    r.fr = parse_double(row[fr_col]);
    if (!(r.fr >= 0.0 && r.fr <= 1.0)) throw ValueError("firing rate outside [0, 1] at split " + row[split_col]);
    if (has_flops) r.gflops = parse_double(row[table.column("gflops")]);
    out.push_back(r);
  }
  return out;
}

std::vector<FiringRateRow> load_firing_rates(const std::filesystem::path& path) {
  return parse_firing_rates(read_text_file(path));
}

double measure_firing_rate(std::span<const SpikeTensor> layer_records) {
  if (layer_records.empty()) throw ValueError("firing rate needs at least one layer record");
  double sum = 0;
  for (const auto& r : layer_records) {
    if (r.numel() == 0) throw ValueError("empty spike record");
    sum += static_cast<double>(r.count_ones()) / static_cast<double>(r.numel());
  }
  return sum / static_cast<double>(layer_records.size());
}

double measure_model_firing_rate(const Model& model, std::size_t split, std::size_t timesteps, std::size_t samples,
                                 std::uint64_t seed) {
  if (samples == 0) throw ValueError("firing rate needs at least one sample");
  const Shape3 in = model.arch().input;
  Rng rng(seed);
  Tensor batch({samples, in.c, in.h, in.w});
  for (auto& v : batch.values()) v = rng.uniform();
  SpikeRecorder records;
  model.run_edge(batch, timesteps, split, &records);
  return measure_firing_rate(records);
}

double syops(double fr, std::size_t timesteps, double flops) {
  if (!(fr >= 0.0 && fr <= 1.0)) throw ValueError("firing rate must lie in [0, 1], got " + std::to_string(fr));
  if (timesteps < 1) throw ValueError("timesteps must be >= 1");
  if (!(flops >= 0.0)) throw ValueError("flops must be non-negative");
  return fr * static_cast<double>(timesteps) * flops;
}

std::string_view to_string(Provenance p) {
  switch (p) {
    case Provenance::measured: return "measured";
    case Provenance::tabulated: return "tabulated";
    case Provenance::computed: return "computed";
  }
  return "?";
}

const ProfileEnergy& EnergyReport::for_profile(std::string_view name) const {
  for (const auto& p : spike) {
    if (p.profile == name) return p;
  }
  throw std::invalid_argument("report has no profile '" + std::string(name) + "'");
}

EnergyReport energy_report(const ArchitectureSpec& arch, const EnergyInputs& in, const HardwareProfile& baseline,
                           std::span<const HardwareProfile> spike_profiles) {
  arch.check_split(in.split);
  baseline.validate();
  if (!baseline.e_mac) throw std::invalid_argument("baseline profile '" + baseline.name + "' has no MAC energy");

  EnergyReport r;
  r.split_point = in.split;
  r.timesteps = in.timesteps;
  r.firing_rate = in.firing_rate;
  r.fr_source = in.fr_source;
  if (in.gflops) {
    r.gflops = *in.gflops;
    r.flops_source = Provenance::tabulated;
  } else {
    r.gflops = static_cast<double>(prefix_flops(arch, in.split)) * 1e-9;
    r.flops_source = Provenance::computed;
  }
  r.gsyops = syops(in.firing_rate, in.timesteps, r.gflops);
  r.baseline_profile = baseline.name;
  // GOPs * J/op * 1e9 -> J; * 1e3 -> mJ.
  r.e_baseline_mj = r.gflops * *baseline.e_mac * 1e12;
  for (const auto& p : spike_profiles) {
    p.validate();
    ProfileEnergy e;
    e.profile = p.name;
    e.e_spike_mj = r.gsyops * p.e_ac * 1e12;
    e.ratio = e.e_spike_mj > 0 ? r.e_baseline_mj / e.e_spike_mj : std::numeric_limits<double>::infinity();
    r.spike.push_back(std::move(e));
  }
  return r;
}

}  // namespace spikesplit
