#pragma once

#include <functional>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "fvdom/exchange.hpp"
#include "fvdom/fv_ops.hpp"
#include "fvdom/mesh.hpp"
#include "fvdom/meshgen.hpp"
#include "fvdom/partition.hpp"

namespace fvdom::testing {

inline const char* kSingleTetMsh = R"($MeshFormat
2.2 0 8
$EndMeshFormat
$PhysicalNames
1
2 7 "skin"
$EndPhysicalNames
$Nodes
4
1 0 0 0
2 1 0 0
3 0 1 0
4 0 0 1
$EndNodes
$Elements
5
1 2 2 7 7 1 2 3
2 2 2 7 7 1 2 4
3 2 2 7 7 1 3 4
4 2 2 7 7 2 3 4
5 4 2 1 1 1 2 3 4
$EndElements
)";

inline const char* kTwoTetMsh = R"($MeshFormat
2.2 0 8
$EndMeshFormat
$Nodes
5
1 0 0 0
2 1 0 0
3 0 1 0
4 0 0 1
5 1 1 1
$EndNodes
$Elements
2
1 4 2 1 1 1 2 3 4
2 4 2 1 1 2 3 4 5
$EndElements
)";

inline Mesh mesh_from(const std::string& text) {
  std::istringstream in(text);
  return read_mesh(in);
}

struct Distributed {
  PartitionMap map;
  std::vector<LocalDomain> domains;
  std::vector<CommPlan> plans;
};

inline Distributed distribute(const Mesh& mesh, int parts) {
  Distributed d;
  d.map = partition_mesh(mesh, parts);
  d.domains = build_local_domains(mesh, d.map);
  d.plans = build_comm_plans(d.domains);
  return d;
}

// Runs fn on every partition (threads + in-process transport).
inline void on_partitions(const Distributed& dist,
                          const std::function<void(const Partition&)>& fn) {
  run_workers(static_cast<int>(dist.domains.size()), [&](Transport& t) {
    const Partition part{dist.domains[t.rank()], dist.plans[t.rank()], t};
    fn(part);
  });
}

// Affine field a + b.x
struct Linear {
  double a = 0.0;
  Vec3 b;
  double operator()(const Vec3& x) const { return a + dot(b, x); }
};

// Fills all slots (cells and ghosts) with f evaluated at the slot centres.
template <class F>
CellField sample(const LocalDomain& d, F&& f) {
  CellField u(d, 1);
  for (Index s = 0; s < d.slot_count(); ++s) u(s) = f(d.slot_center[s]);
  return u;
}

inline std::mt19937_64 rng(std::uint64_t seed = 2024) { return std::mt19937_64(seed); }

}  // namespace fvdom::testing
