#pragma once

#include <filesystem>
#include <iosfwd>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "fvdom/fields.hpp"
#include "fvdom/partition.hpp"

namespace fvdom {

// ---- VTK XML output ------------------------------------------------------------------

struct NamedField {
  std::string name;
  const CellField* field = nullptr;
};

// UnstructuredGrid piece with the inner cells of `domain` as tetrahedra, ASCII float64
// cell data (one array per field, plus GlobalId and Partition).
void write_vtu(const LocalDomain& domain, int partition, const std::vector<NamedField>& fields,
               std::ostream& out);
void write_vtu(const LocalDomain& domain, int partition, const std::vector<NamedField>& fields,
               const std::filesystem::path& path);

struct PvtuArray {
  std::string name;
  int components = 1;
};

// Parallel index referencing the piece files (paths relative to the index).
void write_pvtu(const std::vector<std::string>& pieces, const std::vector<PvtuArray>& arrays,
                std::ostream& out);

// Writes `<stem>.vtu` when parts == 1, otherwise `<stem>_p<rank>.vtu` on every rank and
// `<stem>.pvtu` on rank 0. Returns the path a viewer should open.
std::filesystem::path write_snapshot(const LocalDomain& domain, int rank, int parts,
                                     const std::vector<NamedField>& fields,
                                     const std::filesystem::path& dir, const std::string& stem);

// ---- key = value configuration -------------------------------------------------------

// Flat `key = value` file; `#` and `;` start comment lines. Lookups record the key so that
// unknown (misspelt) keys can be reported afterwards.
class KeyValueConfig {
 public:
  static KeyValueConfig parse(const std::string& text);
  static KeyValueConfig load(const std::filesystem::path& path);

  bool has(const std::string& key) const;
  std::string get_string(const std::string& key) const;
  std::string get_string(const std::string& key, const std::string& fallback) const;
  double get_double(const std::string& key) const;
  double get_double(const std::string& key, double fallback) const;
  int get_int(const std::string& key, int fallback) const;
  bool get_bool(const std::string& key, bool fallback) const;
  Vec3 get_vec3(const std::string& key, const Vec3& fallback) const;
  std::vector<double> get_list(const std::string& key) const;

  const std::map<std::string, std::string>& entries() const { return entries_; }
  const std::string& text() const { return text_; }
  // Throws ConfigError naming every key that was never looked up.
  void reject_unused() const;

 private:
  const std::string& raw(const std::string& key) const;

  std::map<std::string, std::string> entries_;
  std::string text_;
  mutable std::set<std::string> used_;
};

std::vector<double> parse_number_list(const std::string& text);

// ---- run manifest ----------------------------------------------------------------------

std::string sha256_hex(const std::string& bytes);
std::string sha256_file(const std::filesystem::path& path);

struct Manifest {
  std::string command;
  std::vector<std::string> arguments;
  std::string config_sha256;
  std::string mesh_sha256;
  std::string mesh_source;
  int workers = 1;
  std::map<std::string, std::string> outputs;
};

// JSON with the fields above plus library/compiler versions.
void write_manifest(const Manifest& m, const std::filesystem::path& path);

std::string version_string();

}  // namespace fvdom
