#pragma once

#include <array>
#include <cstdint>
#include <iosfwd>
#include <string>
#include <unordered_map>
#include <vector>

#include "fvdom/mesh.hpp"

namespace fvdom {

struct PartitionMap {
  int parts = 1;
  std::vector<int> cell_owner;
};

// Greedy graph growing over the face-adjacency graph from farthest-point seeds, followed
// by balancing and cut-reducing boundary moves. Deterministic.
PartitionMap partition_mesh(const Mesh& mesh, int parts);

enum class SlotClass : std::uint8_t { Inner, Halo, Ghost, HaloGhost };

// Compressed adjacency: entries of row r are slots[offsets[r] .. offsets[r+1]).
struct Stencil {
  std::vector<Index> offsets{0};
  std::vector<Index> slots;

  Index rows() const { return static_cast<Index>(offsets.size()) - 1; }
  Index begin(Index r) const { return offsets[r]; }
  Index end(Index r) const { return offsets[r + 1]; }
};

struct LocalFace {
  Index global_id = 0;
  std::array<Index, 3> nodes{};  // local node ids in diamond order A, B, C
  Index left = 0;                // slot
  Index right = 0;               // slot; a ghost or haloghost slot on boundary faces
  bool boundary = false;
  int patch = kNoPatch;
  Vec3 normal;
  double area = 0.0;
  Vec3 midpoint;
  double diamond_volume = 0.0;
  Vec3 normal_brdl;
  Vec3 normal_alcr;
};

// One partition's view of the mesh. Per-cell data lives in "slots" laid out as
// [inner | halo | ghost | haloghost]. Ghost slots are mirror cells of boundary faces whose
// left cell is inner; haloghost slots are those of boundary faces owned by halo cells and
// touching a local node.
struct LocalDomain {
  int partition = 0;
  int parts = 1;
  Index n_inner = 0;
  Index n_halo = 0;
  Index n_ghost = 0;
  Index n_haloghost = 0;

  std::vector<Index> slot_global;  // global cell id (inner/halo) or boundary face id
  std::vector<Vec3> slot_center;
  std::vector<double> cell_volume;  // inner and halo slots
  std::vector<int> cell_owner;      // inner and halo slots
  std::vector<Index> ghost_owner;   // per ghost/haloghost (offset from ghost_begin()): owning cell slot
  std::vector<int> ghost_patch;     // per ghost/haloghost

  std::vector<Index> node_global;
  std::vector<Vec3> node_position;

  std::vector<LocalFace> faces;  // every face of an inner cell, by global id
  std::vector<std::array<Index, 4>> cell_faces;  // per inner cell, local face ids
  std::vector<std::array<Index, 4>> cell_nodes;  // per inner cell, local node ids

  // Per local node: surrounding cells (by global id) then boundary ghosts (by face id).
  Stencil node_stencil;
  // Per inner cell: cells sharing a node (by global id) then ghosts touching a node.
  Stencil cell_stencil;

  std::vector<std::string> patch_names;
  std::unordered_map<Index, Index> cell_slot;   // global cell id -> slot
  std::unordered_map<Index, Index> ghost_slot;  // global boundary face id -> slot

  Index halo_begin() const { return n_inner; }
  Index ghost_begin() const { return n_inner + n_halo; }
  Index haloghost_begin() const { return n_inner + n_halo + n_ghost; }
  Index slot_count() const { return n_inner + n_halo + n_ghost + n_haloghost; }
  Index node_count() const { return static_cast<Index>(node_global.size()); }
  SlotClass slot_class(Index slot) const;
  bool is_cell(Index slot) const { return slot < ghost_begin(); }
  int find_patch(const std::string& name) const;
};

std::vector<LocalDomain> build_local_domains(const Mesh& mesh, const PartitionMap& map);

// Matched, ordered send/recv lists between neighbouring partitions.
struct CommPlan {
  int partition = 0;
  std::vector<int> neighbors;                    // ascending
  std::vector<std::vector<Index>> send_cells;    // per neighbor: inner slots, by global id
  std::vector<std::vector<Index>> recv_cells;    // per neighbor: halo slots, by global id
  std::vector<std::vector<Index>> send_ghosts;   // per neighbor: ghost slots, by face id
  std::vector<std::vector<Index>> recv_ghosts;   // per neighbor: haloghost slots, by face id
};

std::vector<CommPlan> build_comm_plans(const std::vector<LocalDomain>& domains);

struct PartitionStatsRow {
  int partition = 0;
  Index inner = 0;
  Index halo = 0;
  int neighbors = 0;
};

struct PartitionStats {
  std::vector<PartitionStatsRow> rows;
  int max_row = 0;  // partition with the most inner cells
};

PartitionStats partition_stats(const std::vector<LocalDomain>& domains,
                               const std::vector<CommPlan>& plans);

// CSV with columns Partition,Inner,Halo,Neigh.,Max
void write_partition_stats_csv(const PartitionStats& stats, std::ostream& out);

}  // namespace fvdom
