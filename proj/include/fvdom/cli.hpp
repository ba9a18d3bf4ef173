#pragma once

#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include "fvdom/io.hpp"
#include "fvdom/streamer.hpp"

namespace fvdom {

// Exit codes of cli_main.
inline constexpr int kExitOk = 0;
inline constexpr int kExitUsage = 1;
inline constexpr int kExitRuntime = 2;

// args[0] is the program name.
int cli_main(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);
int cli_main(int argc, char** argv);

// Boundary file for solve-poisson / run-convdiff: one `patch = kind` line per patch with kind
// `dirichlet <value>`, `dirichlet linear <a>,<bx>,<by>,<bz>`, `neumann` or `wall`; the key
// `default` sets the condition of unlisted patches (neumann otherwise).
BoundarySpec parse_boundary_config(const KeyValueConfig& cfg, const std::vector<std::string>& patch_names);

// Velocity table file: `threshold c1 c2` per line, descending thresholds, `-inf` allowed as
// the fallback threshold, `#` comments.
std::vector<VelocityBand> load_velocity_table(const std::filesystem::path& path);

struct StreamerRun {
  StreamerConfig model;
  std::string mesh;        // mesh file; empty when box_cells > 0
  int box_cells = 0;       // generated box with box_cells^3 hexahedra
  double box_length = 0.5;
  int workers = 1;
  int steps = 0;
  int cadence = 0;         // snapshot every `cadence` steps, 0 = none
  std::filesystem::path out = ".";
  std::string transport = "threads";
};

// Reads the run-streamer keys (see README); relative paths resolve against `base`.
StreamerRun parse_streamer_run(const KeyValueConfig& cfg, const std::filesystem::path& base);

}  // namespace fvdom
