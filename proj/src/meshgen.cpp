#include "fvdom/meshgen.hpp"

#include <algorithm>
#include <iomanip>
#include <map>
#include <ostream>
#include <random>
#include <sstream>
#include <vector>

#include "fvdom/errors.hpp"

namespace fvdom {

BoxSpec unit_cube(int n, double jitter) {
  BoxSpec s;
  s.nx = s.ny = s.nz = n;
  s.jitter = jitter;
  return s;
}

BoxSpec streamer_box(Vec3 lo, Vec3 hi, int nx, int ny, int nz) {
  BoxSpec s;
  s.lo = lo;
  s.hi = hi;
  s.nx = nx;
  s.ny = ny;
  s.nz = nz;
  s.side_names = {"inlet", "outlet", "lateral", "lateral", "lateral", "lateral"};
  return s;
}

void write_box_msh(const BoxSpec& spec, std::ostream& out) {
  if (spec.nx < 1 || spec.ny < 1 || spec.nz < 1) throw MeshError("box resolution must be >= 1");
  if (!(spec.hi.x > spec.lo.x && spec.hi.y > spec.lo.y && spec.hi.z > spec.lo.z)) {
    throw MeshError("box extent must be positive");
  }
  const int nx = spec.nx, ny = spec.ny, nz = spec.nz;
  const auto node_id = [&](int i, int j, int k) -> Index {
    return (static_cast<Index>(k) * (ny + 1) + j) * (nx + 1) + i;
  };
  const Vec3 h{(spec.hi.x - spec.lo.x) / nx, (spec.hi.y - spec.lo.y) / ny,
               (spec.hi.z - spec.lo.z) / nz};

  std::mt19937_64 rng(spec.seed);
  std::uniform_real_distribution<double> unit(-1.0, 1.0);
  std::vector<Vec3> pos;
  std::vector<std::array<int, 3>> grid;
  pos.reserve(static_cast<std::size_t>(nx + 1) * (ny + 1) * (nz + 1));
  for (int k = 0; k <= nz; ++k) {
    for (int j = 0; j <= ny; ++j) {
      for (int i = 0; i <= nx; ++i) {
        Vec3 p{spec.lo.x + i * h.x, spec.lo.y + j * h.y, spec.lo.z + k * h.z};
        const double dx = unit(rng), dy = unit(rng), dz = unit(rng);
        if (spec.jitter > 0.0) {
          if (i > 0 && i < nx) p.x += spec.jitter * h.x * dx;
          if (j > 0 && j < ny) p.y += spec.jitter * h.y * dy;
          if (k > 0 && k < nz) p.z += spec.jitter * h.z * dz;
        }
        if (i == nx) p.x = spec.hi.x;
        if (j == ny) p.y = spec.hi.y;
        if (k == nz) p.z = spec.hi.z;
        pos.push_back(p);
        grid.push_back({i, j, k});
      }
    }
  }

  // Kuhn split: one tetrahedron per axis permutation, all sharing the main diagonal.
  constexpr std::array<std::array<int, 3>, 6> kPerms{
      {{0, 1, 2}, {0, 2, 1}, {1, 0, 2}, {1, 2, 0}, {2, 0, 1}, {2, 1, 0}}};
  std::vector<std::array<Index, 4>> tets;
  tets.reserve(static_cast<std::size_t>(nx) * ny * nz * 6);
  for (int k = 0; k < nz; ++k) {
    for (int j = 0; j < ny; ++j) {
      for (int i = 0; i < nx; ++i) {
        for (const auto& perm : kPerms) {
          std::array<int, 3> c{i, j, k};
          std::array<Index, 4> t{};
          t[0] = node_id(c[0], c[1], c[2]);
          for (int s = 0; s < 3; ++s) {
            ++c[perm[s]];
            t[s + 1] = node_id(c[0], c[1], c[2]);
          }
          // Jitter must not flip a tetrahedron relative to the unperturbed lattice.
          auto signed_volume = [&](auto&& at) { return dot(cross(at(1) - at(0), at(2) - at(0)), at(3) - at(0)); };
          const double lattice = signed_volume([&](int q) {
            const auto& g = grid[t[q]];
            return Vec3{double(g[0]), double(g[1]), double(g[2])};
          });
          const double actual = signed_volume([&](int q) { return pos[t[q]]; });
          if (!(actual * lattice > 0.0)) {
            throw MeshError("jitter " + std::to_string(spec.jitter) + " inverts a tetrahedron in cell (" +
                            std::to_string(i) + "," + std::to_string(j) + "," + std::to_string(k) +
                            "); use a smaller jitter or another seed");
          }
          tets.push_back(t);
        }
      }
    }
  }

  // Boundary triangles: faces referenced by exactly one tetrahedron.
  std::map<std::array<Index, 3>, int> count;
  for (const auto& t : tets) {
    for (int skip = 0; skip < 4; ++skip) {
      std::array<Index, 3> f{};
      int m = 0;
      for (int q = 0; q < 4; ++q) {
        if (q != skip) f[m++] = t[q];
      }
      std::sort(f.begin(), f.end());
      ++count[f];
    }
  }

  std::vector<std::string> names;
  std::array<int, 6> side_tag{};
  for (int s = 0; s < 6; ++s) {
    const auto it = std::find(names.begin(), names.end(), spec.side_names[s]);
    if (it == names.end()) {
      names.push_back(spec.side_names[s]);
      side_tag[s] = static_cast<int>(names.size());
    } else {
      side_tag[s] = static_cast<int>(it - names.begin()) + 1;
    }
  }
  const std::array<int, 3> upper{nx, ny, nz};
  struct Tri {
    std::array<Index, 3> nodes;
    int tag;
  };
  std::vector<Tri> tris;
  for (const auto& [f, n] : count) {
    if (n != 1) continue;
    int side = -1;
    for (int axis = 0; axis < 3 && side < 0; ++axis) {
      const int v = grid[f[0]][axis];
      if (grid[f[1]][axis] == v && grid[f[2]][axis] == v) {
        if (v == 0) side = 2 * axis;
        if (v == upper[axis]) side = 2 * axis + 1;
      }
    }
    if (side < 0) throw MeshError("box generator produced an unclassified boundary face");
    tris.push_back({f, side_tag[side]});
  }

  out << "$MeshFormat\n2.2 0 8\n$EndMeshFormat\n";
  out << "$PhysicalNames\n" << names.size() << "\n";
  for (std::size_t i = 0; i < names.size(); ++i) {
    out << 2 << ' ' << i + 1 << " \"" << names[i] << "\"\n";
  }
  out << "$EndPhysicalNames\n";
  out << "$Nodes\n" << pos.size() << "\n" << std::setprecision(17);
  for (std::size_t n = 0; n < pos.size(); ++n) {
    out << n + 1 << ' ' << pos[n].x << ' ' << pos[n].y << ' ' << pos[n].z << "\n";
  }
  out << "$EndNodes\n";
  out << "$Elements\n" << tris.size() + tets.size() << "\n";
  std::size_t id = 1;
  for (const auto& t : tris) {
    out << id++ << " 2 2 " << t.tag << ' ' << t.tag << ' ' << t.nodes[0] + 1 << ' '
        << t.nodes[1] + 1 << ' ' << t.nodes[2] + 1 << "\n";
  }
  for (const auto& t : tets) {
    out << id++ << " 4 2 100 100 " << t[0] + 1 << ' ' << t[1] + 1 << ' ' << t[2] + 1 << ' '
        << t[3] + 1 << "\n";
  }
  out << "$EndElements\n";
}

Mesh generate_box(const BoxSpec& spec) {
  std::stringstream ss;
  write_box_msh(spec, ss);
  return read_mesh(ss);
}

}  // namespace fvdom
