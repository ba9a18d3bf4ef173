#pragma once

#include <array>
#include <cstdint>
#include <iosfwd>
#include <string>

#include "fvdom/mesh.hpp"

namespace fvdom {

// Structured box split into six tetrahedra per hexahedron (Kuhn split along the main
// diagonal), written as MSH 2.2 with one named physical group per side.
struct BoxSpec {
  Vec3 lo{0.0, 0.0, 0.0};
  Vec3 hi{1.0, 1.0, 1.0};
  int nx = 4;
  int ny = 4;
  int nz = 4;
  // Interior node perturbation as a fraction of the local spacing; boundary planes stay flat.
  double jitter = 0.0;
  std::uint64_t seed = 12345;
  // Physical names for the x-min, x-max, y-min, y-max, z-min, z-max sides.
  std::array<std::string, 6> side_names{"in", "out", "front", "back", "bottom", "upper"};
};

BoxSpec unit_cube(int n, double jitter = 0.0);

// Box with the potential-drive naming used by the streamer model: inlet at x-min,
// outlet at x-max, lateral elsewhere.
BoxSpec streamer_box(Vec3 lo, Vec3 hi, int nx, int ny, int nz);

void write_box_msh(const BoxSpec& spec, std::ostream& out);

Mesh generate_box(const BoxSpec& spec);

}  // namespace fvdom
