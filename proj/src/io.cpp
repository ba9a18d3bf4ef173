#include "fvdom/io.hpp"

#include <openssl/evp.h>
#include <openssl/opensslv.h>

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>
#include <boost/version.hpp>
#include <fstream>
#include <iomanip>
#include <json.hpp>
#include <limits>
#include <sstream>

#include "fvdom/errors.hpp"

#ifndef FVDOM_VERSION
#define FVDOM_VERSION "0.0.0"
#endif

namespace fvdom {

namespace fs = std::filesystem;

namespace {

constexpr int kVtkTetra = 10;

std::ofstream open_for_write(const fs::path& path) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open '" + path.string() + "' for writing");
  return out;
}

void check_written(std::ostream& out, const fs::path& path) {
  out.flush();
  if (!out) throw std::runtime_error("write to '" + path.string() + "' failed");
}

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

}  // namespace

// ---- VTK -------------------------------------------------------------------------------

void write_vtu(const LocalDomain& d, int partition, const std::vector<NamedField>& fields, std::ostream& out) {
  for (const NamedField& f : fields) {
    if (!f.field || f.field->slots() < d.n_inner) {
      throw std::invalid_argument("field '" + f.name + "' does not cover the inner cells");
    }
  }
  // Compact numbering of the nodes touched by inner cells.
  std::vector<Index> point_of(d.node_count(), -1);
  std::vector<Index> points;
  for (Index c = 0; c < d.n_inner; ++c) {
    for (Index n : d.cell_nodes[c]) {
      if (point_of[n] < 0) {
        point_of[n] = static_cast<Index>(points.size());
        points.push_back(n);
      }
    }
  }

  out << std::setprecision(std::numeric_limits<double>::max_digits10);
  out << "<?xml version=\"1.0\"?>\n"
      << "<VTKFile type=\"UnstructuredGrid\" version=\"1.0\" byte_order=\"LittleEndian\" "
         "header_type=\"UInt64\">\n"
      << "  <UnstructuredGrid>\n"
      << "    <Piece NumberOfPoints=\"" << points.size() << "\" NumberOfCells=\"" << d.n_inner << "\">\n"
      << "      <Points>\n"
      << "        <DataArray type=\"Float64\" NumberOfComponents=\"3\" format=\"ascii\">\n";
  for (Index n : points) {
    const Vec3& p = d.node_position[n];
    out << "          " << p.x << ' ' << p.y << ' ' << p.z << '\n';
  }
  out << "        </DataArray>\n      </Points>\n      <Cells>\n"
      << "        <DataArray type=\"Int64\" Name=\"connectivity\" format=\"ascii\">\n";
  for (Index c = 0; c < d.n_inner; ++c) {
    const auto& cn = d.cell_nodes[c];
    out << "          " << point_of[cn[0]] << ' ' << point_of[cn[1]] << ' ' << point_of[cn[2]] << ' '
        << point_of[cn[3]] << '\n';
  }
  out << "        </DataArray>\n"
      << "        <DataArray type=\"Int64\" Name=\"offsets\" format=\"ascii\">\n";
  for (Index c = 0; c < d.n_inner; ++c) out << "          " << 4 * (c + 1) << '\n';
  out << "        </DataArray>\n"
      << "        <DataArray type=\"UInt8\" Name=\"types\" format=\"ascii\">\n";
  for (Index c = 0; c < d.n_inner; ++c) out << "          " << kVtkTetra << '\n';
  out << "        </DataArray>\n      </Cells>\n      <CellData>\n";

  out << "        <DataArray type=\"Int64\" Name=\"GlobalId\" format=\"ascii\">\n";
  for (Index c = 0; c < d.n_inner; ++c) out << "          " << d.slot_global[c] << '\n';
  out << "        </DataArray>\n"
      << "        <DataArray type=\"Int32\" Name=\"Partition\" format=\"ascii\">\n";
  for (Index c = 0; c < d.n_inner; ++c) out << "          " << partition << '\n';
  out << "        </DataArray>\n";
  for (const NamedField& f : fields) {
    const int comps = f.field->components;
    out << "        <DataArray type=\"Float64\" Name=\"" << f.name << "\" NumberOfComponents=\"" << comps
        << "\" format=\"ascii\">\n";
    for (Index c = 0; c < d.n_inner; ++c) {
      out << "         ";
      for (int k = 0; k < comps; ++k) out << ' ' << (*f.field)(c, k);
      out << '\n';
    }
    out << "        </DataArray>\n";
  }
  out << "      </CellData>\n    </Piece>\n  </UnstructuredGrid>\n</VTKFile>\n";
}

void write_vtu(const LocalDomain& d, int partition, const std::vector<NamedField>& fields, const fs::path& path) {
  std::ofstream out = open_for_write(path);
  write_vtu(d, partition, fields, out);
  check_written(out, path);
}

void write_pvtu(const std::vector<std::string>& pieces, const std::vector<PvtuArray>& arrays, std::ostream& out) {
  out << "<?xml version=\"1.0\"?>\n"
      << "<VTKFile type=\"PUnstructuredGrid\" version=\"1.0\" byte_order=\"LittleEndian\" "
         "header_type=\"UInt64\">\n"
      << "  <PUnstructuredGrid GhostLevel=\"0\">\n"
      << "    <PPoints>\n      <PDataArray type=\"Float64\" NumberOfComponents=\"3\"/>\n    </PPoints>\n"
      << "    <PCellData>\n"
      << "      <PDataArray type=\"Int64\" Name=\"GlobalId\"/>\n"
      << "      <PDataArray type=\"Int32\" Name=\"Partition\"/>\n";
  for (const PvtuArray& a : arrays) {
    out << "      <PDataArray type=\"Float64\" Name=\"" << a.name << "\" NumberOfComponents=\"" << a.components
        << "\"/>\n";
  }
  out << "    </PCellData>\n";
  for (const std::string& p : pieces) out << "    <Piece Source=\"" << p << "\"/>\n";
  out << "  </PUnstructuredGrid>\n</VTKFile>\n";
}

fs::path write_snapshot(const LocalDomain& d, int rank, int parts, const std::vector<NamedField>& fields,
                        const fs::path& dir, const std::string& stem) {
  if (parts == 1) {
    const fs::path path = dir / (stem + ".vtu");
    write_vtu(d, rank, fields, path);
    return path;
  }
  const auto piece = [&](int r) { return stem + "_p" + std::to_string(r) + ".vtu"; };
  write_vtu(d, rank, fields, dir / piece(rank));
  const fs::path index = dir / (stem + ".pvtu");
  if (rank == 0) {
    std::vector<std::string> pieces;
    for (int r = 0; r < parts; ++r) pieces.push_back(piece(r));
    std::vector<PvtuArray> arrays;
    for (const NamedField& f : fields) arrays.push_back({f.name, f.field->components});
    std::ofstream out = open_for_write(index);
    write_pvtu(pieces, arrays, out);
    check_written(out, index);
  }
  return index;
}

// ---- configuration ---------------------------------------------------------------------

KeyValueConfig KeyValueConfig::parse(const std::string& text) {
  namespace pt = boost::property_tree;
  pt::ptree tree;
  std::istringstream in(text);
  try {
    pt::read_ini(in, tree);
  } catch (const pt::ini_parser_error& e) {
    throw ConfigError("config line " + std::to_string(e.line()) + ": " + e.message());
  }
  KeyValueConfig out;
  out.text_ = text;
  for (const auto& [key, node] : tree) {
    if (!node.empty()) throw ConfigError("config: sections are not supported ('[" + key + "]')");
    out.entries_[key] = trim(node.data());
  }
  return out;
}

KeyValueConfig KeyValueConfig::load(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file '" + path.string() + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  try {
    return parse(ss.str());
  } catch (const ConfigError& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
}

bool KeyValueConfig::has(const std::string& key) const {
  used_.insert(key);
  return entries_.count(key) > 0;
}

const std::string& KeyValueConfig::raw(const std::string& key) const {
  used_.insert(key);
  const auto it = entries_.find(key);
  if (it == entries_.end()) throw ConfigError("config: missing key '" + key + "'");
  return it->second;
}

std::string KeyValueConfig::get_string(const std::string& key) const { return raw(key); }

std::string KeyValueConfig::get_string(const std::string& key, const std::string& fallback) const {
  return has(key) ? raw(key) : fallback;
}

double KeyValueConfig::get_double(const std::string& key) const {
  const std::string& s = raw(key);
  std::size_t used = 0;
  double v = 0.0;
  try {
    v = std::stod(s, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (used == 0 || used != s.size()) throw ConfigError("config: '" + key + "' is not a number: '" + s + "'");
  return v;
}

double KeyValueConfig::get_double(const std::string& key, double fallback) const {
  return has(key) ? get_double(key) : fallback;
}

int KeyValueConfig::get_int(const std::string& key, int fallback) const {
  if (!has(key)) return fallback;
  const double v = get_double(key);
  if (v != static_cast<double>(static_cast<int>(v))) {
    throw ConfigError("config: '" + key + "' must be an integer");
  }
  return static_cast<int>(v);
}

bool KeyValueConfig::get_bool(const std::string& key, bool fallback) const {
  if (!has(key)) return fallback;
  const std::string& s = raw(key);
  if (s == "true" || s == "1" || s == "yes" || s == "on") return true;
  if (s == "false" || s == "0" || s == "no" || s == "off") return false;
  throw ConfigError("config: '" + key + "' must be a boolean, got '" + s + "'");
}

Vec3 KeyValueConfig::get_vec3(const std::string& key, const Vec3& fallback) const {
  if (!has(key)) return fallback;
  const std::vector<double> v = get_list(key);
  if (v.size() != 3) throw ConfigError("config: '" + key + "' needs three comma-separated numbers");
  return {v[0], v[1], v[2]};
}

std::vector<double> KeyValueConfig::get_list(const std::string& key) const {
  try {
    return parse_number_list(raw(key));
  } catch (const ConfigError& e) {
    throw ConfigError("config: '" + key + "': " + e.what());
  }
}

void KeyValueConfig::reject_unused() const {
  std::string unknown;
  for (const auto& [k, v] : entries_) {
    if (!used_.count(k)) unknown += (unknown.empty() ? "" : ", ") + k;
  }
  if (!unknown.empty()) throw ConfigError("config: unknown keys: " + unknown);
}

std::vector<double> parse_number_list(const std::string& text) {
  std::vector<double> out;
  std::string item;
  std::istringstream in(text);
  while (std::getline(in, item, ',')) {
    const std::string t = trim(item);
    std::size_t used = 0;
    double v = 0.0;
    try {
      v = std::stod(t, &used);
    } catch (const std::exception&) {
      used = 0;
    }
    if (used == 0 || used != t.size()) throw ConfigError("not a number: '" + t + "'");
    out.push_back(v);
  }
  return out;
}

// ---- manifest --------------------------------------------------------------------------

std::string sha256_hex(const std::string& bytes) {
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (EVP_Digest(bytes.data(), bytes.size(), digest, &len, EVP_sha256(), nullptr) != 1) {
    throw std::runtime_error("SHA-256 computation failed");
  }
  std::ostringstream out;
  out << std::hex << std::setfill('0');
  for (unsigned int i = 0; i < len; ++i) out << std::setw(2) << static_cast<int>(digest[i]);
  return out.str();
}

std::string sha256_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open '" + path.string() + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return sha256_hex(ss.str());
}

std::string version_string() { return FVDOM_VERSION; }

void write_manifest(const Manifest& m, const fs::path& path) {
  nlohmann::ordered_json j;
  j["command"] = m.command;
  j["arguments"] = m.arguments;
  j["config_sha256"] = m.config_sha256;
  j["mesh_source"] = m.mesh_source;
  j["mesh_sha256"] = m.mesh_sha256;
  j["workers"] = m.workers;
  j["outputs"] = m.outputs;
  j["versions"] = {
      {"fvdom", version_string()},
      {"compiler", __VERSION__},
      {"boost", BOOST_LIB_VERSION},
      {"openssl", OPENSSL_VERSION_TEXT},
      {"nlohmann_json", std::to_string(NLOHMANN_JSON_VERSION_MAJOR) + "." +
                            std::to_string(NLOHMANN_JSON_VERSION_MINOR) + "." +
                            std::to_string(NLOHMANN_JSON_VERSION_PATCH)},
  };
  std::ofstream out = open_for_write(path);
  out << j.dump(2) << '\n';
  check_written(out, path);
}

}  // namespace fvdom
