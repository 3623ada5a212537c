#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "spikesplit/arch.hpp"
#include "spikesplit/spike.hpp"

namespace spikesplit {

class Model;

/// Per-operation energy of a compute substrate, in joules.
struct HardwareProfile {
  std::string name;
  std::optional<double> e_mac;  // absent for spike-only substrates (ROLLS)
  double e_ac = 0;

  void validate() const;
};

/// 45nm CMOS (4.6 pJ/MAC, 0.9 pJ/AC) and the ROLLS chip (77 fJ/SyOP).
std::vector<HardwareProfile> default_profiles();
/// Tab-separated "name e_mac_j e_ac_j" rows; "-" marks a missing MAC cost.
std::vector<HardwareProfile> parse_profiles(std::string_view text);
std::vector<HardwareProfile> load_profiles(const std::filesystem::path& path);
/// Throws std::invalid_argument for unknown names.
const HardwareProfile& find_profile(std::span<const HardwareProfile> profiles, std::string_view name);

/// Mean over layers of each layer's mean spike probability (per neuron, per timestep).
double measure_firing_rate(std::span<const SpikeTensor> layer_records);

/// Firing rate of the edge half of `model` at `split` under `samples` uniform random images.
double measure_model_firing_rate(const Model& model, std::size_t split, std::size_t timesteps, std::size_t samples,
                                 std::uint64_t seed);

/// fr * T * flops.
double syops(double fr, std::size_t timesteps, double flops);

enum class Provenance { measured, tabulated, computed };
std::string_view to_string(Provenance p);

struct ProfileEnergy {
  std::string profile;
  double e_spike_mj = 0;
  double ratio = 0;  // e_baseline / e_spike; +inf when the spike energy is zero
};

struct EnergyReport {
  std::size_t split_point = 0;
  double gflops = 0;
  Provenance flops_source = Provenance::computed;
  double firing_rate = 0;
  Provenance fr_source = Provenance::tabulated;
  std::size_t timesteps = 0;
  double gsyops = 0;
  std::string baseline_profile;
  double e_baseline_mj = 0;
  std::vector<ProfileEnergy> spike;

  const ProfileEnergy& for_profile(std::string_view name) const;
};

struct EnergyInputs {
  std::size_t split = 0;
  double firing_rate = 0;
  Provenance fr_source = Provenance::tabulated;
  std::size_t timesteps = 2;
  /// Overrides prefix_flops (used to feed printed GFLOPs back in).
  std::optional<double> gflops;
};

/// One row of a firing-rate file: split, optional printed GFLOPs, fr.
struct FiringRateRow {
  std::size_t split = 0;
  std::optional<double> gflops;
  double fr = 0;
};

/// Columns "split", "fr" and optionally "gflops".
std::vector<FiringRateRow> parse_firing_rates(std::string_view text);
std::vector<FiringRateRow> load_firing_rates(const std::filesystem::path& path);

/// Baseline energy = prefix MACs on `baseline` (its e_mac); spike energy = SyOPs * e_ac for each profile.
EnergyReport energy_report(const ArchitectureSpec& arch, const EnergyInputs& in, const HardwareProfile& baseline,
                           std::span<const HardwareProfile> spike_profiles);

}  // namespace spikesplit
