#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"

#include "fascicle/geometry.hpp"
#include "fascicle/macro_bidomain.hpp"

namespace fasc {

inline constexpr const char* kToolVersion = "0.1.0";

std::uint64_t fnv1a64(std::string_view s);
std::string hash_hex(std::uint64_t h);

/// Config file: JSON with a top-level schema_version (currently 1) and one
/// section per subcommand. The raw bytes are kept for hashing so identical
/// files always yield identical manifests.
struct ParsedConfig {
  nlohmann::json j;
  std::string raw;
  std::uint64_t hash = 0;
};
ParsedConfig load_config(const std::string& path);

CellParams parse_cell_params(const nlohmann::json& cell);
MacroMesh parse_mesh(const nlohmann::json& scenario);
StimulusSpec parse_stimulus(const nlohmann::json& stim);
/// Fills everything except the model, which the caller loads separately.
ScenarioConfig parse_scenario(const nlohmann::json& scenario,
                              const EffectiveModel& model);

/// Canonical coefficient set used by the verify suites and the examples;
/// matches what cmd_cell produces for the default cell within a few percent.
EffectiveModel default_model();

/// The shared pulse scenario: interval run from rest with a localized
/// extracellular pulse strong enough to nucleate a depolarization front.
ScenarioConfig standard_pulse_scenario(const EffectiveModel& model);

void write_energy_csv(const std::vector<EnergyRecord>& records,
                      const std::string& path);
void write_macro_snapshot_csv(const MacroMesh& mesh, const MacroState& s,
                              const std::string& path);
void write_ladder_snapshot_csv(const std::vector<double>& x, const MacroState& s,
                               const std::string& path);
/// Legacy VTK structured points; visualization only.
void write_macro_vtk(const MacroMesh& mesh, const MacroState& s,
                     const std::string& path);

/// Written with status "running" before any other output; finalize() stamps
/// the wall time and the terminal status, so interrupted runs stay marked.
class RunManifest {
 public:
  RunManifest(const std::string& out_dir, const std::string& subcommand,
              const ParsedConfig& cfg);
  void add_output(const std::string& name);
  void finalize(const std::string& status);

 private:
  void write(const std::string& status, double wall_s) const;
  std::string path_;
  std::string subcommand_;
  std::string hash_;
  std::vector<std::string> outputs_;
  double t0_ = 0.0;
};

}  // namespace fasc
