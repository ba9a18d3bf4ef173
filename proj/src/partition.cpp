#include "fvdom/partition.hpp"

#include <algorithm>
#include <limits>
#include <ostream>
#include <queue>
#include <set>

#include "fvdom/errors.hpp"

namespace fvdom {

namespace {

std::vector<std::vector<Index>> face_graph(const Mesh& mesh) {
  std::vector<std::vector<Index>> adj(mesh.cells.size());
  for (const auto& f : mesh.faces) {
    if (f.is_boundary()) continue;
    adj[f.left].push_back(f.right);
    adj[f.right].push_back(f.left);
  }
  for (auto& a : adj) std::sort(a.begin(), a.end());
  return adj;
}

std::vector<Index> farthest_point_seeds(const Mesh& mesh, int parts) {
  const Index n = static_cast<Index>(mesh.cells.size());
  const auto& c = mesh.cells;
  // First seed: the cell farthest from cell 0.
  std::vector<double> dist(n);
  for (Index i = 0; i < n; ++i) dist[i] = norm(c[i].centroid - c[0].centroid);
  std::vector<Index> seeds;
  seeds.push_back(std::max_element(dist.begin(), dist.end()) - dist.begin());
  for (Index i = 0; i < n; ++i) dist[i] = norm(c[i].centroid - c[seeds[0]].centroid);
  while (static_cast<int>(seeds.size()) < parts) {
    const Index next = std::max_element(dist.begin(), dist.end()) - dist.begin();
    seeds.push_back(next);
    for (Index i = 0; i < n; ++i) {
      dist[i] = std::min(dist[i], norm(c[i].centroid - c[next].centroid));
    }
  }
  return seeds;
}

}  // namespace

PartitionMap partition_mesh(const Mesh& mesh, int parts) {
  const Index n = static_cast<Index>(mesh.cells.size());
  if (parts < 1) throw PartitionError("partition count must be >= 1");
  if (parts > n) {
    throw PartitionError("partition count " + std::to_string(parts) + " exceeds cell count " +
                         std::to_string(n));
  }
  PartitionMap map;
  map.parts = parts;
  map.cell_owner.assign(n, parts == 1 ? 0 : -1);
  if (parts == 1) return map;

  const auto adj = face_graph(mesh);
  const auto seeds = farthest_point_seeds(mesh, parts);
  std::vector<Index> target(parts, n / parts);
  for (int p = 0; p < n % parts; ++p) ++target[p];
  std::vector<Index> size(parts, 0);

  using Entry = std::pair<double, Index>;
  std::vector<std::priority_queue<Entry, std::vector<Entry>, std::greater<>>> frontier(parts);
  auto& owner = map.cell_owner;
  auto assign = [&](Index cell, int p) {
    owner[cell] = p;
    ++size[p];
    for (Index nb : adj[cell]) {
      if (owner[nb] < 0) {
        frontier[p].emplace(norm(mesh.cells[nb].centroid - mesh.cells[seeds[p]].centroid), nb);
      }
    }
  };
  for (int p = 0; p < parts; ++p) assign(seeds[p], p);

  Index assigned = parts;
  while (assigned < n) {
    int best = -1;
    double best_fill = std::numeric_limits<double>::infinity();
    for (int p = 0; p < parts; ++p) {
      while (!frontier[p].empty() && owner[frontier[p].top().second] >= 0) frontier[p].pop();
      if (frontier[p].empty() || size[p] >= target[p]) continue;
      const double fill = static_cast<double>(size[p]) / static_cast<double>(target[p]);
      if (fill < best_fill) {
        best_fill = fill;
        best = p;
      }
    }
    if (best < 0) break;
    const Index cell = frontier[best].top().second;
    frontier[best].pop();
    assign(cell, best);
    ++assigned;
  }

  // Leftovers (enclosed regions or full neighbours): attach to the smallest adjacent part.
  while (assigned < n) {
    bool progress = false;
    for (Index i = 0; i < n; ++i) {
      if (owner[i] >= 0) continue;
      int best = -1;
      for (Index nb : adj[i]) {
        const int q = owner[nb];
        if (q >= 0 && (best < 0 || size[q] < size[best])) best = q;
      }
      if (best >= 0) {
        owner[i] = best;
        ++size[best];
        ++assigned;
        progress = true;
      }
    }
    if (!progress) {
      // Disconnected component without assigned neighbours.
      for (Index i = 0; i < n; ++i) {
        if (owner[i] >= 0) continue;
        const int p = static_cast<int>(std::min_element(size.begin(), size.end()) - size.begin());
        owner[i] = p;
        ++size[p];
        ++assigned;
        break;
      }
    }
  }

  auto neighbours_in = [&](Index cell, int p) {
    return std::count_if(adj[cell].begin(), adj[cell].end(),
                         [&](Index nb) { return owner[nb] == p; });
  };

  // Balancing: move boundary cells from overfull parts into underfull adjacent parts.
  for (int pass = 0; pass < 200; ++pass) {
    bool moved = false;
    for (Index i = 0; i < n; ++i) {
      const int p = owner[i];
      if (size[p] <= target[p] || size[p] <= 1) continue;
      int best = -1;
      long best_gain = std::numeric_limits<long>::min();
      for (Index nb : adj[i]) {
        const int q = owner[nb];
        if (q == p || size[q] >= target[q]) continue;
        const long gain = neighbours_in(i, q) - neighbours_in(i, p);
        if (gain > best_gain) {
          best_gain = gain;
          best = q;
        }
      }
      if (best >= 0) {
        owner[i] = best;
        --size[p];
        ++size[best];
        moved = true;
      }
    }
    if (!moved) break;
  }

  // Cut refinement: strictly improving moves that keep every part within 5% of its target.
  for (int pass = 0; pass < 4; ++pass) {
    bool moved = false;
    for (Index i = 0; i < n; ++i) {
      const int p = owner[i];
      if (size[p] <= 1 || static_cast<double>(size[p] - 1) < 0.95 * static_cast<double>(target[p])) {
        continue;
      }
      const long own = neighbours_in(i, p);
      int best = -1;
      long best_gain = 0;
      for (Index nb : adj[i]) {
        const int q = owner[nb];
        if (q == p || static_cast<double>(size[q] + 1) > 1.05 * static_cast<double>(target[q])) {
          continue;
        }
        const long gain = neighbours_in(i, q) - own;
        if (gain > best_gain) {
          best_gain = gain;
          best = q;
        }
      }
      if (best >= 0) {
        owner[i] = best;
        --size[p];
        ++size[best];
        moved = true;
      }
    }
    if (!moved) break;
  }

  for (int p = 0; p < parts; ++p) {
    if (size[p] == 0) throw PartitionError("partition " + std::to_string(p) + " ended up empty");
  }
  return map;
}

SlotClass LocalDomain::slot_class(Index slot) const {
  if (slot < halo_begin()) return SlotClass::Inner;
  if (slot < ghost_begin()) return SlotClass::Halo;
  if (slot < haloghost_begin()) return SlotClass::Ghost;
  return SlotClass::HaloGhost;
}

int LocalDomain::find_patch(const std::string& name) const {
  for (std::size_t i = 0; i < patch_names.size(); ++i) {
    if (patch_names[i] == name) return static_cast<int>(i);
  }
  return kNoPatch;
}

std::vector<LocalDomain> build_local_domains(const Mesh& mesh, const PartitionMap& map) {
  const Index n = static_cast<Index>(mesh.cells.size());
  if (static_cast<Index>(map.cell_owner.size()) != n) {
    throw PartitionError("partition map size does not match the mesh cell count");
  }
  for (int o : map.cell_owner) {
    if (o < 0 || o >= map.parts) throw PartitionError("partition map has an invalid owner " + std::to_string(o));
  }

  std::vector<std::vector<Index>> inner(map.parts);
  for (Index c = 0; c < n; ++c) inner[map.cell_owner[c]].push_back(c);

  std::vector<LocalDomain> domains(map.parts);
  for (int p = 0; p < map.parts; ++p) {
    LocalDomain& d = domains[p];
    d.partition = p;
    d.parts = map.parts;
    for (const auto& patch : mesh.patches) d.patch_names.push_back(patch.name);
    if (inner[p].empty()) throw PartitionError("partition " + std::to_string(p) + " has no cells");

    std::set<Index> halo;
    std::set<Index> nodes;
    std::set<Index> faces;
    for (Index c : inner[p]) {
      for (Index nb : mesh.cell_to_cells_by_node[c]) {
        if (map.cell_owner[nb] != p) halo.insert(nb);
      }
      for (Index v : mesh.cells[c].nodes) nodes.insert(v);
      for (Index f : mesh.cells[c].faces) faces.insert(f);
    }
    std::set<Index> ghosts;
    std::set<Index> haloghosts;
    for (Index v : nodes) {
      for (Index f : mesh.node_to_boundary_faces[v]) {
        if (map.cell_owner[mesh.faces[f].left] == p) {
          ghosts.insert(f);
        } else {
          haloghosts.insert(f);
        }
      }
    }

    d.n_inner = static_cast<Index>(inner[p].size());
    d.n_halo = static_cast<Index>(halo.size());
    d.n_ghost = static_cast<Index>(ghosts.size());
    d.n_haloghost = static_cast<Index>(haloghosts.size());
    const Index total = d.slot_count();
    d.slot_global.reserve(total);
    d.slot_center.reserve(total);
    auto add_cell = [&](Index c) {
      d.cell_slot.emplace(c, static_cast<Index>(d.slot_global.size()));
      d.slot_global.push_back(c);
      d.slot_center.push_back(mesh.cells[c].centroid);
      d.cell_volume.push_back(mesh.cells[c].volume);
      d.cell_owner.push_back(map.cell_owner[c]);
    };
    for (Index c : inner[p]) add_cell(c);
    for (Index c : halo) add_cell(c);
    auto add_ghost = [&](Index f) {
      d.ghost_slot.emplace(f, static_cast<Index>(d.slot_global.size()));
      d.slot_global.push_back(f);
      d.slot_center.push_back(mesh.ghost_center(f));
      d.ghost_owner.push_back(d.cell_slot.at(mesh.faces[f].left));
      d.ghost_patch.push_back(mesh.faces[f].patch);
    };
    for (Index f : ghosts) add_ghost(f);
    for (Index f : haloghosts) add_ghost(f);

    std::unordered_map<Index, Index> node_local;
    for (Index v : nodes) {
      node_local.emplace(v, static_cast<Index>(d.node_global.size()));
      d.node_global.push_back(v);
      d.node_position.push_back(mesh.nodes[v].position);
    }

    std::unordered_map<Index, Index> face_local;
    for (Index f : faces) {
      const Face& gf = mesh.faces[f];
      const DiamondCell& dm = mesh.diamonds[f];
      LocalFace lf;
      lf.global_id = f;
      lf.nodes = {node_local.at(dm.node_a), node_local.at(dm.node_b), node_local.at(dm.node_c)};
      lf.left = d.cell_slot.at(gf.left);
      lf.boundary = gf.is_boundary();
      lf.right = lf.boundary ? d.ghost_slot.at(f) : d.cell_slot.at(gf.right);
      lf.patch = gf.patch;
      lf.normal = gf.normal;
      lf.area = gf.area;
      lf.midpoint = gf.midpoint;
      lf.diamond_volume = dm.volume;
      lf.normal_brdl = dm.normal_brdl;
      lf.normal_alcr = dm.normal_alcr;
      face_local.emplace(f, static_cast<Index>(d.faces.size()));
      d.faces.push_back(lf);
    }

    for (Index c : inner[p]) {
      std::array<Index, 4> fl{};
      std::array<Index, 4> nl{};
      for (int k = 0; k < 4; ++k) {
        fl[k] = face_local.at(mesh.cells[c].faces[k]);
        nl[k] = node_local.at(mesh.cells[c].nodes[k]);
      }
      d.cell_faces.push_back(fl);
      d.cell_nodes.push_back(nl);
    }

    for (Index v : nodes) {
      for (Index c : mesh.node_to_cells[v]) d.node_stencil.slots.push_back(d.cell_slot.at(c));
      for (Index f : mesh.node_to_boundary_faces[v]) d.node_stencil.slots.push_back(d.ghost_slot.at(f));
      d.node_stencil.offsets.push_back(static_cast<Index>(d.node_stencil.slots.size()));
    }

    for (Index c : inner[p]) {
      for (Index nb : mesh.cell_to_cells_by_node[c]) d.cell_stencil.slots.push_back(d.cell_slot.at(nb));
      std::vector<Index> gf;
      for (Index v : mesh.cells[c].nodes) {
        for (Index f : mesh.node_to_boundary_faces[v]) gf.push_back(f);
      }
      std::sort(gf.begin(), gf.end());
      gf.erase(std::unique(gf.begin(), gf.end()), gf.end());
      for (Index f : gf) d.cell_stencil.slots.push_back(d.ghost_slot.at(f));
      d.cell_stencil.offsets.push_back(static_cast<Index>(d.cell_stencil.slots.size()));
    }
  }
  return domains;
}

std::vector<CommPlan> build_comm_plans(const std::vector<LocalDomain>& domains) {
  const int parts = static_cast<int>(domains.size());
  // recv[p][q]: halo (and haloghost) slots of p owned by q.
  std::vector<std::vector<std::vector<Index>>> recv_cells(parts, std::vector<std::vector<Index>>(parts));
  std::vector<std::vector<std::vector<Index>>> recv_ghosts(parts, std::vector<std::vector<Index>>(parts));
  for (int p = 0; p < parts; ++p) {
    const LocalDomain& d = domains[p];
    for (Index s = d.halo_begin(); s < d.ghost_begin(); ++s) {
      recv_cells[p][d.cell_owner[s]].push_back(s);
    }
    for (Index s = d.haloghost_begin(); s < d.slot_count(); ++s) {
      const Index owner_slot = d.ghost_owner[s - d.ghost_begin()];
      recv_ghosts[p][d.cell_owner[owner_slot]].push_back(s);
    }
  }

  std::vector<CommPlan> plans(parts);
  for (int p = 0; p < parts; ++p) {
    CommPlan& plan = plans[p];
    plan.partition = p;
    const LocalDomain& d = domains[p];
    for (int q = 0; q < parts; ++q) {
      if (q == p) continue;
      const bool receives = !recv_cells[p][q].empty() || !recv_ghosts[p][q].empty();
      const bool sends = !recv_cells[q][p].empty() || !recv_ghosts[q][p].empty();
      if (!receives && !sends) continue;
      if (recv_cells[p][q].empty() != recv_cells[q][p].empty()) {
        throw PartitionError("asymmetric halo relation between partitions " + std::to_string(p) +
                             " and " + std::to_string(q));
      }
      plan.neighbors.push_back(q);
      plan.recv_cells.push_back(recv_cells[p][q]);
      plan.recv_ghosts.push_back(recv_ghosts[p][q]);
      const LocalDomain& other = domains[q];
      std::vector<Index> send;
      for (Index s : recv_cells[q][p]) {
        const auto it = d.cell_slot.find(other.slot_global[s]);
        if (it == d.cell_slot.end() || it->second >= d.n_inner) {
          throw PartitionError("partition " + std::to_string(q) + " expects cell " +
                               std::to_string(other.slot_global[s]) + " from partition " +
                               std::to_string(p) + " which does not own it");
        }
        send.push_back(it->second);
      }
      plan.send_cells.push_back(std::move(send));
      std::vector<Index> send_g;
      for (Index s : recv_ghosts[q][p]) {
        const auto it = d.ghost_slot.find(other.slot_global[s]);
        if (it == d.ghost_slot.end() || it->second >= d.haloghost_begin()) {
          throw PartitionError("partition " + std::to_string(q) + " expects ghost of face " +
                               std::to_string(other.slot_global[s]) + " from partition " +
                               std::to_string(p) + " which does not own it");
        }
        send_g.push_back(it->second);
      }
      plan.send_ghosts.push_back(std::move(send_g));
    }
  }
  return plans;
}

PartitionStats partition_stats(const std::vector<LocalDomain>& domains,
                               const std::vector<CommPlan>& plans) {
  PartitionStats stats;
  for (std::size_t p = 0; p < domains.size(); ++p) {
    PartitionStatsRow row;
    row.partition = static_cast<int>(p);
    row.inner = domains[p].n_inner;
    row.halo = domains[p].n_halo;
    row.neighbors = static_cast<int>(plans[p].neighbors.size());
    if (!stats.rows.empty() && row.inner > stats.rows[stats.max_row].inner) {
      stats.max_row = row.partition;
    }
    stats.rows.push_back(row);
  }
  return stats;
}

void write_partition_stats_csv(const PartitionStats& stats, std::ostream& out) {
  out << "Partition,Inner,Halo,Neigh.,Max\n";
  for (const auto& r : stats.rows) {
    out << r.partition << ',' << r.inner << ',' << r.halo << ',' << r.neighbors << ','
        << (r.partition == stats.max_row ? 1 : 0) << '\n';
  }
}

}  // namespace fvdom
