#pragma once

#include <stdexcept>
#include <string>

namespace fvdom {

// Malformed or geometrically invalid mesh input.
class MeshError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class PartitionError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Failure while moving data between partitions; carries the partition that observed it.
// Secondary errors are consequences of a failure elsewhere (abort, peer hang-up).
class TransportError : public std::runtime_error {
 public:
  TransportError(int partition, const std::string& what, bool secondary = false)
      : std::runtime_error("partition " + std::to_string(partition) + ": " + what),
        partition_(partition),
        secondary_(secondary) {}
  int partition() const noexcept { return partition_; }
  bool secondary() const noexcept { return secondary_; }

 private:
  int partition_;
  bool secondary_;
};

class NumericalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class SolverError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace fvdom
