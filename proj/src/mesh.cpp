#include "fvdom/mesh.hpp"

#include <algorithm>
#include <fstream>
#include <istream>
#include <map>
#include <sstream>
#include <unordered_map>

#include "fvdom/errors.hpp"

namespace fvdom {

namespace {

// Local face k of a tetrahedron is the triangle opposite local node k.
constexpr std::array<std::array<int, 3>, 4> kTetFaces{{{1, 2, 3}, {0, 2, 3}, {0, 1, 3}, {0, 1, 2}}};

using Triple = std::array<Index, 3>;

Triple sorted_triple(Index a, Index b, Index c) {
  Triple t{a, b, c};
  std::sort(t.begin(), t.end());
  return t;
}

struct TripleHash {
  std::size_t operator()(const Triple& t) const noexcept {
    std::size_t h = static_cast<std::size_t>(t[0]);
    h = h * 1000003u ^ static_cast<std::size_t>(t[1]);
    h = h * 1000003u ^ static_cast<std::size_t>(t[2]);
    return h;
  }
};

class LineReader {
 public:
  explicit LineReader(std::istream& in) : in_(in) {}

  bool next(std::string& line) {
    while (std::getline(in_, line)) {
      ++number_;
      if (!line.empty() && line.back() == '\r') line.pop_back();
      if (line.find_first_not_of(" \t") != std::string::npos) return true;
    }
    return false;
  }

  std::string expect(const std::string& section) {
    std::string line;
    if (!next(line)) throw MeshError(section + ": unexpected end of file");
    return line;
  }

  std::size_t line_number() const { return number_; }

 private:
  std::istream& in_;
  std::size_t number_ = 0;
};

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t");
  return s.substr(b, e - b + 1);
}

long long parse_count(const std::string& line, const std::string& section) {
  std::istringstream ss(line);
  long long n = -1;
  if (!(ss >> n) || n < 0) throw MeshError(section + ": invalid entry count '" + line + "'");
  return n;
}

void read_mesh_format(LineReader& reader) {
  const std::string line = reader.expect("$MeshFormat");
  std::istringstream ss(line);
  std::string version;
  int file_type = -1;
  int data_size = 0;
  if (!(ss >> version >> file_type >> data_size)) {
    throw MeshError("$MeshFormat: malformed header '" + line + "'");
  }
  if (version.rfind("2.", 0) != 0) {
    throw MeshError("$MeshFormat: unsupported MSH version " + version +
                    " (only ASCII 2.2 is supported)");
  }
  if (file_type != 0) throw MeshError("$MeshFormat: binary MSH files are not supported");
  if (trim(reader.expect("$MeshFormat")) != "$EndMeshFormat") {
    throw MeshError("$MeshFormat: missing $EndMeshFormat");
  }
}

void read_physical_names(LineReader& reader, Mesh& mesh) {
  const long long n = parse_count(reader.expect("$PhysicalNames"), "$PhysicalNames");
  for (long long i = 0; i < n; ++i) {
    const std::string line = reader.expect("$PhysicalNames");
    if (trim(line) == "$EndPhysicalNames") {
      throw MeshError("$PhysicalNames: expected " + std::to_string(n) + " entries, found " +
                      std::to_string(i));
    }
    std::istringstream ss(line);
    int dim = 0;
    int tag = 0;
    if (!(ss >> dim >> tag)) throw MeshError("$PhysicalNames: malformed entry '" + line + "'");
    std::string rest;
    std::getline(ss, rest);
    rest = trim(rest);
    if (rest.size() >= 2 && rest.front() == '"' && rest.back() == '"') {
      rest = rest.substr(1, rest.size() - 2);
    }
    if (dim == 2) mesh.physical_names.emplace_back(tag, rest);
  }
  if (trim(reader.expect("$PhysicalNames")) != "$EndPhysicalNames") {
    throw MeshError("$PhysicalNames: entry count mismatch (missing $EndPhysicalNames)");
  }
}

void read_nodes(LineReader& reader, Mesh& mesh, std::unordered_map<long long, Index>& ids) {
  const long long n = parse_count(reader.expect("$Nodes"), "$Nodes");
  mesh.nodes.reserve(static_cast<std::size_t>(n));
  for (long long i = 0; i < n; ++i) {
    const std::string line = reader.expect("$Nodes");
    if (trim(line) == "$EndNodes") {
      throw MeshError("$Nodes: expected " + std::to_string(n) + " entries, found " +
                      std::to_string(i));
    }
    std::istringstream ss(line);
    long long file_id = 0;
    Vec3 p;
    if (!(ss >> file_id >> p.x >> p.y >> p.z)) {
      throw MeshError("$Nodes: malformed entry '" + line + "'");
    }
    if (!is_finite(p)) throw MeshError("$Nodes: non-finite coordinates for node " + std::to_string(file_id));
    const Index dense = static_cast<Index>(mesh.nodes.size());
    if (!ids.emplace(file_id, dense).second) {
      throw MeshError("$Nodes: duplicate node id " + std::to_string(file_id));
    }
    mesh.nodes.push_back({dense, p});
  }
  if (trim(reader.expect("$Nodes")) != "$EndNodes") {
    throw MeshError("$Nodes: entry count mismatch (missing $EndNodes)");
  }
}

void read_elements(LineReader& reader, Mesh& mesh,
                   const std::unordered_map<long long, Index>& ids) {
  const long long n = parse_count(reader.expect("$Elements"), "$Elements");
  auto node_index = [&](long long file_id, long long element) {
    const auto it = ids.find(file_id);
    if (it == ids.end()) {
      throw MeshError("$Elements: element " + std::to_string(element) +
                      " references missing node " + std::to_string(file_id));
    }
    return it->second;
  };
  for (long long i = 0; i < n; ++i) {
    const std::string line = reader.expect("$Elements");
    if (trim(line) == "$EndElements") {
      throw MeshError("$Elements: expected " + std::to_string(n) + " entries, found " +
                      std::to_string(i));
    }
    std::istringstream ss(line);
    long long id = 0;
    int type = 0;
    int ntags = 0;
    if (!(ss >> id >> type >> ntags) || ntags < 0) {
      throw MeshError("$Elements: malformed entry '" + line + "'");
    }
    std::vector<long long> tags(static_cast<std::size_t>(ntags));
    for (auto& t : tags) {
      if (!(ss >> t)) throw MeshError("$Elements: malformed tags in '" + line + "'");
    }
    const int physical = ntags > 0 ? static_cast<int>(tags[0]) : 0;
    if (type == 4) {
      std::array<long long, 4> raw{};
      for (auto& r : raw) {
        if (!(ss >> r)) throw MeshError("$Elements: tetrahedron " + std::to_string(id) + " has fewer than 4 nodes");
      }
      Cell c;
      c.id = static_cast<Index>(mesh.cells.size());
      for (int k = 0; k < 4; ++k) c.nodes[k] = node_index(raw[k], id);
      const auto& p = mesh.nodes;
      double v = signed_tet_volume(p[c.nodes[0]].position, p[c.nodes[1]].position,
                                   p[c.nodes[2]].position, p[c.nodes[3]].position);
      if (v < 0.0) {
        std::swap(c.nodes[2], c.nodes[3]);
        v = -v;
      }
      if (!(v > 0.0)) {
        throw MeshError("$Elements: tetrahedron " + std::to_string(id) +
                        " has non-positive volume");
      }
      mesh.cells.push_back(c);
    } else if (type == 2) {
      std::array<long long, 3> raw{};
      for (auto& r : raw) {
        if (!(ss >> r)) throw MeshError("$Elements: triangle " + std::to_string(id) + " has fewer than 3 nodes");
      }
      BoundaryTriangle t;
      for (int k = 0; k < 3; ++k) t.nodes[k] = node_index(raw[k], id);
      t.physical_tag = physical;
      mesh.boundary_triangles.push_back(t);
    } else {
      throw MeshError("$Elements: unsupported element type " + std::to_string(type) +
                      " (element " + std::to_string(id) + "); only triangles (2) and tetrahedra (4)");
    }
  }
  if (trim(reader.expect("$Elements")) != "$EndElements") {
    throw MeshError("$Elements: entry count mismatch (missing $EndElements)");
  }
}

void skip_section(LineReader& reader, const std::string& header) {
  const std::string end = "$End" + header.substr(1);
  std::string line;
  while (reader.next(line)) {
    if (trim(line) == end) return;
  }
  throw MeshError(header + ": missing " + end);
}

}  // namespace

Index Mesh::boundary_face_count() const {
  return std::count_if(faces.begin(), faces.end(), [](const Face& f) { return f.is_boundary(); });
}

int Mesh::find_patch(const std::string& name) const {
  for (std::size_t i = 0; i < patches.size(); ++i) {
    if (patches[i].name == name) return static_cast<int>(i);
  }
  return kNoPatch;
}

double Mesh::total_volume() const {
  double v = 0.0;
  for (const auto& c : cells) v += c.volume;
  return v;
}

Vec3 Mesh::ghost_center(Index face) const {
  const Face& f = faces[face];
  const Vec3& l = cells[f.left].centroid;
  return l + 2.0 * dot(f.midpoint - l, f.normal) * f.normal;
}

Mesh parse_msh(std::istream& in) {
  Mesh mesh;
  LineReader reader(in);
  std::unordered_map<long long, Index> ids;
  bool have_format = false;
  bool have_nodes = false;
  bool have_elements = false;
  std::string line;
  while (reader.next(line)) {
    const std::string header = trim(line);
    if (header == "$MeshFormat") {
      read_mesh_format(reader);
      have_format = true;
    } else if (header == "$PhysicalNames") {
      read_physical_names(reader, mesh);
    } else if (header == "$Nodes") {
      read_nodes(reader, mesh, ids);
      have_nodes = true;
    } else if (header == "$Elements") {
      if (!have_nodes) throw MeshError("$Elements: section appears before $Nodes");
      read_elements(reader, mesh, ids);
      have_elements = true;
    } else if (header.size() > 1 && header[0] == '$' && header.rfind("$End", 0) != 0) {
      skip_section(reader, header);
    } else {
      throw MeshError("unexpected line " + std::to_string(reader.line_number()) + ": '" + header + "'");
    }
  }
  if (!have_format) throw MeshError("$MeshFormat: section missing");
  if (!have_nodes) throw MeshError("$Nodes: section missing");
  if (!have_elements) throw MeshError("$Elements: section missing");
  if (mesh.cells.empty()) throw MeshError("$Elements: no tetrahedra found");
  return mesh;
}

void build_connectivity(Mesh& mesh) {
  mesh.faces.clear();
  mesh.patches.clear();
  std::unordered_map<Triple, Index, TripleHash> lookup;
  lookup.reserve(mesh.cells.size() * 3);

  for (auto& cell : mesh.cells) {
    for (int k = 0; k < 4; ++k) {
      const auto& lf = kTetFaces[k];
      const Triple key = sorted_triple(cell.nodes[lf[0]], cell.nodes[lf[1]], cell.nodes[lf[2]]);
      auto [it, inserted] = lookup.emplace(key, static_cast<Index>(mesh.faces.size()));
      if (inserted) {
        Face f;
        f.id = it->second;
        f.nodes = key;
        f.left = cell.id;
        mesh.faces.push_back(f);
      } else {
        Face& f = mesh.faces[it->second];
        if (f.right != kBoundary || f.left == cell.id) {
          throw MeshError("non-manifold face (" + std::to_string(key[0]) + "," +
                          std::to_string(key[1]) + "," + std::to_string(key[2]) +
                          ") shared by more than two cells");
        }
        f.right = cell.id;
      }
      cell.faces[k] = it->second;
    }
  }

  // Patches ordered by physical tag.
  std::map<int, std::string> names;
  for (const auto& [tag, name] : mesh.physical_names) names[tag] = name;
  std::map<int, int> patch_of_tag;
  for (const auto& tri : mesh.boundary_triangles) patch_of_tag.emplace(tri.physical_tag, 0);
  for (auto& [tag, index] : patch_of_tag) {
    index = static_cast<int>(mesh.patches.size());
    BoundaryPatch p;
    p.physical_tag = tag;
    const auto it = names.find(tag);
    p.name = it != names.end() ? it->second : "patch_" + std::to_string(tag);
    mesh.patches.push_back(p);
  }
  for (const auto& tri : mesh.boundary_triangles) {
    const Triple key = sorted_triple(tri.nodes[0], tri.nodes[1], tri.nodes[2]);
    const auto it = lookup.find(key);
    if (it == lookup.end() || !mesh.faces[it->second].is_boundary()) {
      throw MeshError("boundary triangle (" + std::to_string(key[0]) + "," + std::to_string(key[1]) +
                      "," + std::to_string(key[2]) + ") does not lie on the domain boundary");
    }
    mesh.faces[it->second].patch = patch_of_tag.at(tri.physical_tag);
  }
  for (const auto& f : mesh.faces) {
    if (f.is_boundary() && f.patch != kNoPatch) mesh.patches[f.patch].faces.push_back(f.id);
  }

  const std::size_t n_nodes = mesh.nodes.size();
  mesh.node_to_cells.assign(n_nodes, {});
  mesh.node_to_boundary_faces.assign(n_nodes, {});
  for (const auto& cell : mesh.cells) {
    for (Index n : cell.nodes) mesh.node_to_cells[n].push_back(cell.id);
  }
  for (const auto& f : mesh.faces) {
    if (!f.is_boundary()) continue;
    for (Index n : f.nodes) mesh.node_to_boundary_faces[n].push_back(f.id);
  }

  mesh.cell_to_cells_by_node.assign(mesh.cells.size(), {});
  for (const auto& cell : mesh.cells) {
    auto& out = mesh.cell_to_cells_by_node[cell.id];
    for (Index n : cell.nodes) {
      for (Index c : mesh.node_to_cells[n]) {
        if (c != cell.id) out.push_back(c);
      }
    }
    std::sort(out.begin(), out.end());
    out.erase(std::unique(out.begin(), out.end()), out.end());
  }
}

void compute_geometry(Mesh& mesh) {
  const auto pos = [&](Index n) -> const Vec3& { return mesh.nodes[n].position; };
  for (auto& cell : mesh.cells) {
    const Vec3 &a = pos(cell.nodes[0]), &b = pos(cell.nodes[1]), &c = pos(cell.nodes[2]),
               &d = pos(cell.nodes[3]);
    cell.volume = std::abs(signed_tet_volume(a, b, c, d));
    if (!(cell.volume > 0.0)) {
      throw MeshError("degenerate cell " + std::to_string(cell.id) + " (zero volume)");
    }
    cell.centroid = 0.25 * (a + b + c + d);
  }
  for (auto& f : mesh.faces) {
    const Vec3 &a = pos(f.nodes[0]), &b = pos(f.nodes[1]), &c = pos(f.nodes[2]);
    Vec3 av = triangle_area_vector(a, b, c);
    f.area = norm(av);
    if (!(f.area > 0.0)) throw MeshError("degenerate face " + std::to_string(f.id) + " (zero area)");
    f.midpoint = (1.0 / 3.0) * (a + b + c);
    if (dot(av, f.midpoint - mesh.cells[f.left].centroid) < 0.0) av = -av;
    f.normal = (1.0 / f.area) * av;
  }
}

void build_diamonds(Mesh& mesh) {
  mesh.diamonds.assign(mesh.faces.size(), {});
  for (const auto& f : mesh.faces) {
    DiamondCell& d = mesh.diamonds[f.id];
    d.face = f.id;
    d.node_a = f.nodes[0];
    d.node_b = f.nodes[1];
    d.node_c = f.nodes[2];
    // A, B, C counter-clockwise seen from R, i.e. (A - C) x (B - C) along the L->R normal.
    if (dot(triangle_area_vector(mesh.nodes[d.node_a].position, mesh.nodes[d.node_b].position,
                                 mesh.nodes[d.node_c].position),
            f.normal) < 0.0) {
      std::swap(d.node_a, d.node_b);
    }
    d.left_point = mesh.cells[f.left].centroid;
    d.right_point = f.is_boundary() ? mesh.ghost_center(f.id) : mesh.cells[f.right].centroid;
    const Vec3& a = mesh.nodes[d.node_a].position;
    const Vec3& b = mesh.nodes[d.node_b].position;
    const Vec3& c = mesh.nodes[d.node_c].position;
    const Vec3& l = d.left_point;
    const Vec3& r = d.right_point;
    // Quadrilaterals B-R-C-L and A-L-C-R, each split into two triangles.
    d.normal_brdl = triangle_area_vector(b, r, c) + triangle_area_vector(b, c, l);
    d.normal_alcr = triangle_area_vector(a, l, c) + triangle_area_vector(a, c, r);
    d.volume = f.area * dot(r - l, f.normal) / 3.0;
    if (!(d.volume > 0.0)) {
      throw MeshError("non-positive diamond volume at face " + std::to_string(f.id));
    }
  }
}

Mesh read_mesh(std::istream& in) {
  Mesh mesh = parse_msh(in);
  build_connectivity(mesh);
  compute_geometry(mesh);
  build_diamonds(mesh);
  return mesh;
}

Mesh load_mesh(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw MeshError("cannot open mesh file '" + path + "'");
  return read_mesh(in);
}

}  // namespace fvdom
