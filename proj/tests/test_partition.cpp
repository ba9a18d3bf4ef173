#include <algorithm>
#include <map>
#include <set>
#include <sstream>

#include "doctest.h"
#include "fvdom/errors.hpp"
#include "test_support.hpp"

using namespace fvdom;
using namespace fvdom::testing;

namespace {

// Halo of partition p by definition: foreign cells sharing a node with an owned cell.
std::set<Index> brute_force_halo(const Mesh& m, const PartitionMap& map, int p) {
  std::set<Index> owned_nodes;
  for (const auto& c : m.cells) {
    if (map.cell_owner[c.id] == p) owned_nodes.insert(c.nodes.begin(), c.nodes.end());
  }
  std::set<Index> halo;
  for (const auto& c : m.cells) {
    if (map.cell_owner[c.id] == p) continue;
    for (Index n : c.nodes) {
      if (owned_nodes.count(n)) {
        halo.insert(c.id);
        break;
      }
    }
  }
  return halo;
}

std::set<Index> brute_force_haloghost(const Mesh& m, const PartitionMap& map, int p) {
  std::set<Index> owned_nodes;
  for (const auto& c : m.cells) {
    if (map.cell_owner[c.id] == p) owned_nodes.insert(c.nodes.begin(), c.nodes.end());
  }
  const std::set<Index> halo = brute_force_halo(m, map, p);
  std::set<Index> out;
  for (const auto& f : m.faces) {
    if (!f.is_boundary() || !halo.count(f.left)) continue;
    for (Index n : f.nodes) {
      if (owned_nodes.count(n)) {
        out.insert(f.id);
        break;
      }
    }
  }
  return out;
}

}  // namespace

TEST_CASE("a single partition owns every cell and has no halo") {
  const Mesh m = generate_box(unit_cube(3));
  const Distributed d = distribute(m, 1);
  CHECK(std::all_of(d.map.cell_owner.begin(), d.map.cell_owner.end(), [](int o) { return o == 0; }));
  const LocalDomain& dom = d.domains[0];
  CHECK(dom.n_inner == static_cast<Index>(m.cells.size()));
  CHECK(dom.n_halo == 0);
  CHECK(dom.n_haloghost == 0);
  CHECK(dom.n_ghost == m.boundary_face_count());
  CHECK(d.plans[0].neighbors.empty());
  const PartitionStats s = partition_stats(d.domains, d.plans);
  REQUIRE(s.rows.size() == 1);
  CHECK(s.rows[0].inner == static_cast<Index>(m.cells.size()));
  CHECK(s.rows[0].halo == 0);
  CHECK(s.rows[0].neighbors == 0);
}

TEST_CASE("two tetrahedra split into one cell each and exchange it") {
  const Mesh m = mesh_from(kTwoTetMsh);
  const Distributed d = distribute(m, 2);
  CHECK(d.map.cell_owner[0] != d.map.cell_owner[1]);
  for (int p = 0; p < 2; ++p) {
    const LocalDomain& dom = d.domains[p];
    CHECK(dom.n_inner == 1);
    CHECK(dom.n_halo == 1);
    CHECK(dom.n_ghost == 3);
    CHECK(dom.n_haloghost == 3);  // every boundary face of the other cell touches a shared node
    const CommPlan& plan = d.plans[p];
    REQUIRE(plan.neighbors == std::vector<int>{1 - p});
    REQUIRE(plan.send_cells[0].size() == 1);
    CHECK(dom.slot_global[plan.send_cells[0][0]] == dom.slot_global[0]);
    CHECK(dom.slot_global[plan.recv_cells[0][0]] != dom.slot_global[0]);
  }
}

TEST_CASE("invalid partition counts are rejected") {
  const Mesh m = mesh_from(kTwoTetMsh);
  CHECK_THROWS_AS(partition_mesh(m, 3), PartitionError);
  CHECK_THROWS_AS(partition_mesh(m, 0), PartitionError);
}

TEST_CASE("unit cube with four partitions is balanced and deterministic") {
  const Mesh m = generate_box(unit_cube(10));
  REQUIRE(m.cells.size() == 6000);
  const PartitionMap a = partition_mesh(m, 4);
  const PartitionMap b = partition_mesh(m, 4);
  CHECK(a.cell_owner == b.cell_owner);
  std::vector<Index> count(4, 0);
  for (int o : a.cell_owner) {
    REQUIRE(o >= 0);
    REQUIRE(o < 4);
    ++count[o];
  }
  const double mean = 6000.0 / 4.0;
  const Index max = *std::max_element(count.begin(), count.end());
  CHECK(static_cast<double>(max) / mean <= 1.10);
  CHECK(*std::min_element(count.begin(), count.end()) > 0);
}

TEST_CASE("balance holds across partition counts on jittered meshes") {
  const Mesh m = generate_box(unit_cube(8, 0.2));
  for (int k : {2, 3, 5, 8}) {
    CAPTURE(k);
    const PartitionMap map = partition_mesh(m, k);
    std::vector<Index> count(k, 0);
    for (int o : map.cell_owner) ++count[o];
    const double mean = static_cast<double>(m.cells.size()) / k;
    CHECK(static_cast<double>(*std::max_element(count.begin(), count.end())) / mean <= 1.10);
  }
}

TEST_CASE("halo and haloghost sets equal the brute-force node-sharing definition") {
  for (int k : {2, 4, 7}) {
    CAPTURE(k);
    const Mesh m = generate_box(unit_cube(5, 0.15));
    const Distributed d = distribute(m, k);
    std::set<Index> all_inner;
    for (int p = 0; p < k; ++p) {
      const LocalDomain& dom = d.domains[p];
      std::set<Index> inner, halo, ghost, haloghost;
      for (Index s = 0; s < dom.n_inner; ++s) {
        inner.insert(dom.slot_global[s]);
        CHECK(d.map.cell_owner[dom.slot_global[s]] == p);
      }
      for (Index s = dom.halo_begin(); s < dom.ghost_begin(); ++s) halo.insert(dom.slot_global[s]);
      for (Index s = dom.ghost_begin(); s < dom.haloghost_begin(); ++s) ghost.insert(dom.slot_global[s]);
      for (Index s = dom.haloghost_begin(); s < dom.slot_count(); ++s) haloghost.insert(dom.slot_global[s]);
      CHECK(halo == brute_force_halo(m, d.map, p));
      CHECK(haloghost == brute_force_haloghost(m, d.map, p));
      std::set<Index> expected_ghost;
      for (const auto& f : m.faces) {
        if (f.is_boundary() && d.map.cell_owner[f.left] == p) expected_ghost.insert(f.id);
      }
      CHECK(ghost == expected_ghost);
      for (Index g : inner) {
        CHECK(halo.count(g) == 0);
        CHECK(all_inner.insert(g).second);
      }
      // Every halo owner is a registered neighbour.
      const auto& nb = d.plans[p].neighbors;
      for (Index s = dom.halo_begin(); s < dom.ghost_begin(); ++s) {
        CHECK(std::binary_search(nb.begin(), nb.end(), dom.cell_owner[s]));
      }
    }
    CHECK(all_inner.size() == m.cells.size());
  }
}

TEST_CASE("communication plans are symmetric and matched by global id") {
  const Mesh m = generate_box(unit_cube(6, 0.1));
  const int k = 4;
  const Distributed d = distribute(m, k);
  for (int p = 0; p < k; ++p) {
    const CommPlan& pp = d.plans[p];
    CHECK(std::is_sorted(pp.neighbors.begin(), pp.neighbors.end()));
    for (std::size_t i = 0; i < pp.neighbors.size(); ++i) {
      const int q = pp.neighbors[i];
      const CommPlan& pq = d.plans[q];
      const auto it = std::find(pq.neighbors.begin(), pq.neighbors.end(), p);
      REQUIRE(it != pq.neighbors.end());
      const std::size_t j = static_cast<std::size_t>(it - pq.neighbors.begin());
      REQUIRE(pp.send_cells[i].size() == pq.recv_cells[j].size());
      REQUIRE(pp.send_ghosts[i].size() == pq.recv_ghosts[j].size());
      Index last = -1;
      for (std::size_t e = 0; e < pp.send_cells[i].size(); ++e) {
        const Index g = d.domains[p].slot_global[pp.send_cells[i][e]];
        CHECK(g == d.domains[q].slot_global[pq.recv_cells[j][e]]);
        CHECK(pp.send_cells[i][e] < d.domains[p].n_inner);
        CHECK(g > last);
        last = g;
      }
      for (std::size_t e = 0; e < pp.send_ghosts[i].size(); ++e) {
        CHECK(d.domains[p].slot_global[pp.send_ghosts[i][e]] ==
              d.domains[q].slot_global[pq.recv_ghosts[j][e]]);
      }
    }
  }
  const PartitionStats s = partition_stats(d.domains, d.plans);
  for (const auto& row : s.rows) CHECK(row.neighbors >= 1);
  Index max_inner = 0;
  for (const auto& row : s.rows) max_inner = std::max(max_inner, row.inner);
  CHECK(s.rows[s.max_row].inner == max_inner);
  std::ostringstream csv;
  write_partition_stats_csv(s, csv);
  CHECK(csv.str().rfind("Partition,Inner,Halo,Neigh.,Max\n", 0) == 0);
}

TEST_CASE("a boundary node stencil mixes all four slot classes") {
  const Mesh m = generate_box(unit_cube(4));
  const Distributed d = distribute(m, 4);
  bool found = false;
  for (const LocalDomain& dom : d.domains) {
    for (Index n = 0; n < dom.node_count() && !found; ++n) {
      std::set<SlotClass> classes;
      for (Index e = dom.node_stencil.begin(n); e < dom.node_stencil.end(n); ++e) {
        classes.insert(dom.slot_class(dom.node_stencil.slots[e]));
      }
      found = classes.size() == 4;
    }
  }
  CHECK(found);
}

TEST_CASE("node stencils list exactly the cells and ghosts around each node") {
  const Mesh m = generate_box(unit_cube(4, 0.2));
  const Distributed d = distribute(m, 3);
  for (const LocalDomain& dom : d.domains) {
    REQUIRE(dom.node_stencil.rows() == dom.node_count());
    for (Index n = 0; n < dom.node_count(); ++n) {
      const Index g = dom.node_global[n];
      std::vector<Index> expected;
      for (Index c : m.node_to_cells[g]) expected.push_back(dom.cell_slot.at(c));
      for (Index f : m.node_to_boundary_faces[g]) expected.push_back(dom.ghost_slot.at(f));
      std::vector<Index> got(dom.node_stencil.slots.begin() + dom.node_stencil.begin(n),
                             dom.node_stencil.slots.begin() + dom.node_stencil.end(n));
      CHECK(got == expected);
    }
  }
}

TEST_CASE("local domains are identical for identical inputs") {
  const Mesh m = generate_box(unit_cube(5, 0.1));
  const Distributed a = distribute(m, 4);
  const Distributed b = distribute(m, 4);
  for (int p = 0; p < 4; ++p) {
    CHECK(a.domains[p].slot_global == b.domains[p].slot_global);
    CHECK(a.domains[p].node_global == b.domains[p].node_global);
    CHECK(a.domains[p].node_stencil.slots == b.domains[p].node_stencil.slots);
    CHECK(a.domains[p].cell_stencil.slots == b.domains[p].cell_stencil.slots);
    CHECK(a.plans[p].send_cells == b.plans[p].send_cells);
  }
}

TEST_CASE("mean inner cells per partition strictly decrease as K doubles") {
  const Mesh m = generate_box(unit_cube(6));
  double previous = 1e300;
  for (int k : {1, 2, 4, 8, 16}) {
    const Distributed d = distribute(m, k);
    double sum = 0.0;
    for (const auto& dom : d.domains) sum += static_cast<double>(dom.n_inner);
    const double mean = sum / k;
    CHECK(mean < previous);
    previous = mean;
  }
}
