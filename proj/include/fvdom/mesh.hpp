#pragma once

#include <array>
#include <iosfwd>
#include <string>
#include <vector>

#include "fvdom/vec3.hpp"

namespace fvdom {

inline constexpr Index kBoundary = -1;
inline constexpr int kNoPatch = -1;

struct Node {
  Index id = 0;
  Vec3 position;
};

struct Cell {
  Index id = 0;
  std::array<Index, 4> nodes{};
  std::array<Index, 4> faces{};
  Vec3 centroid;
  double volume = 0.0;
};

// Triangular face. The normal points from `left` to `right` (outward for boundary faces).
struct Face {
  Index id = 0;
  std::array<Index, 3> nodes{};
  Index left = 0;
  Index right = kBoundary;
  Vec3 normal;
  double area = 0.0;
  Vec3 midpoint;
  int patch = kNoPatch;

  bool is_boundary() const { return right == kBoundary; }
};

// Bipyramid around a triangular face with apexes at the left centroid (L) and the right
// centroid or boundary ghost point (R). Face nodes are A, B, C; the fourth node D of the
// general quadrilateral-based diamond coincides with C.
struct DiamondCell {
  Index face = 0;
  Index node_a = 0;
  Index node_b = 0;
  Index node_c = 0;
  Vec3 left_point;
  Vec3 right_point;
  double volume = 0.0;
  Vec3 normal_brdl;  // area-scaled
  Vec3 normal_alcr;  // area-scaled
};

struct BoundaryPatch {
  std::string name;
  int physical_tag = 0;
  std::vector<Index> faces;
};

// Boundary triangle as read from a mesh file, before matching against cell faces.
struct BoundaryTriangle {
  std::array<Index, 3> nodes{};
  int physical_tag = 0;
};

struct Mesh {
  std::vector<Node> nodes;
  std::vector<Cell> cells;
  std::vector<Face> faces;
  std::vector<DiamondCell> diamonds;  // one per face, indexed by face id
  std::vector<BoundaryPatch> patches;

  std::vector<std::vector<Index>> node_to_cells;
  std::vector<std::vector<Index>> node_to_boundary_faces;
  std::vector<std::vector<Index>> cell_to_cells_by_node;

  // Parser output consumed by build_connectivity.
  std::vector<BoundaryTriangle> boundary_triangles;
  std::vector<std::pair<int, std::string>> physical_names;

  Index boundary_face_count() const;
  int find_patch(const std::string& name) const;  // kNoPatch if absent
  double total_volume() const;

  // Mirror image of the left centroid of a boundary face across the face plane.
  Vec3 ghost_center(Index face) const;
};

// gmsh MSH 2.2 ASCII: tetrahedra (type 4) and boundary triangles (type 2).
Mesh parse_msh(std::istream& in);

// Deduplicates cell faces, attaches boundary patches and builds adjacency lists.
void build_connectivity(Mesh& mesh);

// Volumes, centroids, face normals/areas/midpoints.
void compute_geometry(Mesh& mesh);

void build_diamonds(Mesh& mesh);

// parse_msh + build_connectivity + compute_geometry + build_diamonds.
Mesh load_mesh(const std::string& path);
Mesh read_mesh(std::istream& in);

}  // namespace fvdom
