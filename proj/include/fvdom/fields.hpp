#pragma once

#include <span>
#include <vector>

#include "fvdom/partition.hpp"

namespace fvdom {

// Per-slot values with a fixed number of components, laid out slot-major.
struct CellField {
  int components = 1;
  std::vector<double> values;

  CellField() = default;
  CellField(Index slots, int comps, double init = 0.0)
      : components(comps), values(static_cast<std::size_t>(slots) * comps, init) {}
  CellField(const LocalDomain& d, int comps = 1, double init = 0.0)
      : CellField(d.slot_count(), comps, init) {}

  Index slots() const { return static_cast<Index>(values.size()) / components; }
  double& operator()(Index slot, int c = 0) { return values[slot * components + c]; }
  double operator()(Index slot, int c = 0) const { return values[slot * components + c]; }
  Vec3 vec(Index slot) const {
    return {values[slot * components], values[slot * components + 1], values[slot * components + 2]};
  }
  void set_vec(Index slot, const Vec3& v) {
    values[slot * components] = v.x;
    values[slot * components + 1] = v.y;
    values[slot * components + 2] = v.z;
  }
};

struct NodeField {
  std::vector<double> values;
};

// Per-local-face 3-vectors.
struct FaceVectors {
  std::vector<Vec3> values;
};

}  // namespace fvdom
