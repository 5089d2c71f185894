#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "aeflow/bank.hpp"
#include "aeflow/coeff.hpp"
#include "aeflow/flow.hpp"
#include "aeflow/stability.hpp"
#include "json.hpp"

namespace aeflow {

inline constexpr int kExitOk = 0;
inline constexpr int kExitValidation = 2;
inline constexpr int kExitAssertion = 3;

struct PresetConfig {
  std::string name;
  int d = 3;
  int m = 0;  // 0: dimension default of the preset
  double beta = 51.0;
  std::optional<int> level;  // regularisation level of example_sec6
  std::vector<double> a, sigma, v;
  std::string path;              // user_grid CSV
  std::optional<int> mollify;    // kernel mollification level applied on top
  int quadrature_order = 0;
};

/// Builds the field named by a preset config. Throws ValidationError naming the
/// offending config path.
FieldPtr build_field(const PresetConfig& preset);
/// Field at regularisation level n (example_sec6: explicit form; others: mollified).
FieldPtr build_field_at_level(const PresetConfig& preset, int level);

struct GridConfig {
  std::string kind = "lattice";  // lattice | shell | points
  std::vector<double> lower, upper;
  std::int64_t per_axis = 0;
  double exclude_radius = 0.0;
  double r_in = 0.0, r_out = 0.0;  // shell, and an optional restriction of a lattice
  std::size_t count = 0;
  std::uint64_t seed = 0;
  std::vector<std::vector<double>> points;
};

PointSet build_grid(const GridConfig& grid, int dim);

struct ExperimentConfig {
  std::string pipeline;  // optional in the file; must match the subcommand when present
  PresetConfig preset;
  double horizon = 1.0, dt = 1e-3;
  GridConfig grid;
  double escape_radius = 0.0;
  double n_radius = 2.0, radius = 10.0;  // truncation N, R
  std::vector<double> deltas;
  std::vector<std::uint64_t> seeds;
  Scheme scheme = Scheme::euler_maruyama;
  std::int64_t save_every = 0;
  int workers = 1;
  nlohmann::ordered_json params = nlohmann::ordered_json::object();  // pipeline block
  std::string source_text;
  std::filesystem::path source_dir;

  FlowOptions flow_options() const;
};

/// Parses and validates a JSON config. Errors are ValidationError with a field path.
ExperimentConfig parse_config(const std::string& text, const std::filesystem::path& source_dir = {});
ExperimentConfig load_config(const std::filesystem::path& path);

FunctionBank parse_bank(const nlohmann::ordered_json& list, int dim, const std::string& where);

struct RunResult {
  int status = kExitOk;
  std::string message;
  std::vector<std::string> outputs;  // paths relative to the output directory
  nlohmann::ordered_json summary = nlohmann::ordered_json::object();
};

/// Runs one pipeline (simulate, jacobian-check, stability, transport, invariant,
/// verify-conditions), writing CSV data and manifest.json into `out_dir`. The summary
/// table is echoed to `log`.
RunResult run(const std::string& pipeline, const ExperimentConfig& config, const std::filesystem::path& out_dir,
              std::ostream& log);

const std::vector<std::string>& pipelines();

}  // namespace aeflow
