#include "fvdom/fv_ops.hpp"

#include <algorithm>
#include <array>
#include <chrono>
#include <cmath>
#include <limits>

#include "fvdom/errors.hpp"

namespace fvdom {

namespace {

double now_seconds() {
  return std::chrono::duration<double>(std::chrono::steady_clock::now().time_since_epoch()).count();
}

// Solves the 4x4 system m x = rhs by Gaussian elimination with partial pivoting.
bool solve4(std::array<std::array<double, 4>, 4> m, std::array<double, 4>& x) {
  double scale = 0.0;
  for (const auto& row : m) {
    for (double v : row) scale = std::max(scale, std::abs(v));
  }
  for (int col = 0; col < 4; ++col) {
    int piv = col;
    for (int r = col + 1; r < 4; ++r) {
      if (std::abs(m[r][col]) > std::abs(m[piv][col])) piv = r;
    }
    if (std::abs(m[piv][col]) <= 1e-13 * scale) return false;
    std::swap(m[piv], m[col]);
    std::swap(x[piv], x[col]);
    for (int r = col + 1; r < 4; ++r) {
      const double f = m[r][col] / m[col][col];
      for (int c = col; c < 4; ++c) m[r][c] -= f * m[col][c];
      x[r] -= f * x[col];
    }
  }
  for (int r = 3; r >= 0; --r) {
    for (int c = r + 1; c < 4; ++c) x[r] -= m[r][c] * x[c];
    x[r] /= m[r][r];
  }
  return true;
}

int sign_for(const LocalFace& f, Index cell) { return f.left == cell ? 1 : -1; }

CellField accumulate(const LocalDomain& d, const std::vector<double>& face_flux) {
  CellField out(d, 1);
  for (Index i = 0; i < d.n_inner; ++i) {
    double acc = 0.0;
    for (Index lf : d.cell_faces[i]) acc += sign_for(d.faces[lf], i) * face_flux[lf];
    out(i) = acc;
  }
  return out;
}

bool is_wall(const BoundarySpec* bc, const LocalFace& f) {
  return bc && f.boundary && bc->at(f.patch).kind == BoundaryKind::Wall;
}

std::vector<double> convective_face_flux(const LocalDomain& d, const CellField& u, const CellField& v,
                                         const CellField& grad, const CellField& psi,
                                         const BoundarySpec* bc) {
  std::vector<double> flux(d.faces.size(), 0.0);
  for (std::size_t k = 0; k < d.faces.size(); ++k) {
    const LocalFace& f = d.faces[k];
    if (is_wall(bc, f)) continue;
    const Vec3 vface = 0.5 * (v.vec(f.left) + v.vec(f.right));
    const double vn = dot(vface, f.normal);
    double uface = 0.0;
    if (f.boundary) {
      uface = vn >= 0.0 ? u(f.left) : u(f.right);
    } else {
      const Index up = vn >= 0.0 ? f.left : f.right;
      uface = u(up) + psi(up) * dot(grad.vec(up), f.midpoint - d.slot_center[up]);
    }
    flux[k] = uface * vn * f.area;
  }
  return flux;
}

std::vector<double> diffusive_face_flux(const LocalDomain& d, const FaceVectors& fg,
                                        std::span<const double> face_d, double constant_d,
                                        const BoundarySpec* bc) {
  std::vector<double> flux(d.faces.size(), 0.0);
  for (std::size_t k = 0; k < d.faces.size(); ++k) {
    const LocalFace& f = d.faces[k];
    if (is_wall(bc, f)) continue;
    const double dk = face_d.empty() ? constant_d : face_d[k];
    if (dk < 0.0) throw NumericalError("negative diffusivity at face " + std::to_string(f.global_id));
    flux[k] = dk * dot(fg.values[k], f.normal) * f.area;
  }
  return flux;
}

double outflow_from(const LocalDomain& d, const std::vector<double>& conv, const std::vector<double>& diff) {
  double out = 0.0;
  for (std::size_t k = 0; k < d.faces.size(); ++k) {
    if (d.faces[k].boundary) out += conv[k] - diff[k];
  }
  return out;
}

}  // namespace

double least_squares_weight(const Vec3& offset) { return 1.0 / norm(offset); }

GradStencilCoeffs build_gradient_coeffs(const LocalDomain& d) {
  GradStencilCoeffs out;
  out.coeff.resize(d.cell_stencil.slots.size());
  out.det.resize(d.n_inner);
  for (Index i = 0; i < d.n_inner; ++i) {
    const Vec3& xi = d.slot_center[i];
    double m[3][3] = {};
    for (Index e = d.cell_stencil.begin(i); e < d.cell_stencil.end(i); ++e) {
      const Vec3 dx = d.slot_center[d.cell_stencil.slots[e]] - xi;
      const double w = least_squares_weight(dx);
      for (int a = 0; a < 3; ++a) {
        for (int b = 0; b < 3; ++b) m[a][b] += w * dx[a] * dx[b];
      }
    }
    // Cofactors (symmetric matrix) and determinant.
    const double c00 = m[1][1] * m[2][2] - m[1][2] * m[2][1];
    const double c01 = m[1][2] * m[2][0] - m[1][0] * m[2][2];
    const double c02 = m[1][0] * m[2][1] - m[1][1] * m[2][0];
    const double c11 = m[0][0] * m[2][2] - m[0][2] * m[2][0];
    const double c12 = m[0][2] * m[1][0] - m[0][0] * m[1][2];
    const double c22 = m[0][0] * m[1][1] - m[0][1] * m[1][0];
    const double det = m[0][0] * c00 + m[0][1] * c01 + m[0][2] * c02;
    const double trace = m[0][0] + m[1][1] + m[2][2];
    if (!(std::abs(det) >= 1e-14 * trace * trace * trace)) {
      throw NumericalError("degenerate gradient stencil at cell " + std::to_string(d.slot_global[i]));
    }
    out.det[i] = det;
    for (Index e = d.cell_stencil.begin(i); e < d.cell_stencil.end(i); ++e) {
      const Vec3 dx = d.slot_center[d.cell_stencil.slots[e]] - xi;
      const double w = least_squares_weight(dx) / det;
      out.coeff[e] = {w * (c00 * dx.x + c01 * dx.y + c02 * dx.z),
                      w * (c01 * dx.x + c11 * dx.y + c12 * dx.z),
                      w * (c02 * dx.x + c12 * dx.y + c22 * dx.z)};
    }
  }
  return out;
}

NodeLSWeights build_node_weights(const LocalDomain& d) {
  NodeLSWeights out;
  out.alpha.resize(d.node_stencil.slots.size());
  for (Index n = 0; n < d.node_count(); ++n) {
    const Index b = d.node_stencil.begin(n), e = d.node_stencil.end(n);
    if (b == e) throw NumericalError("node " + std::to_string(d.node_global[n]) + " has an empty stencil");
    const Vec3& xn = d.node_position[n];
    double h = 0.0;
    for (Index k = b; k < e; ++k) h = std::max(h, norm(d.slot_center[d.node_stencil.slots[k]] - xn));
    auto basis = [&](Index k) {
      const Vec3 dx = (1.0 / h) * (d.slot_center[d.node_stencil.slots[k]] - xn);
      return std::array<double, 4>{1.0, dx.x, dx.y, dx.z};
    };
    std::array<std::array<double, 4>, 4> m{};
    for (Index k = b; k < e; ++k) {
      const auto p = basis(k);
      const double w = least_squares_weight(d.slot_center[d.node_stencil.slots[k]] - xn);
      for (int r = 0; r < 4; ++r) {
        for (int c = 0; c < 4; ++c) m[r][c] += w * p[r] * p[c];
      }
    }
    std::array<double, 4> y{1.0, 0.0, 0.0, 0.0};
    if (!solve4(m, y)) {
      throw NumericalError("degenerate interpolation stencil at node " + std::to_string(d.node_global[n]));
    }
    for (Index k = b; k < e; ++k) {
      const auto p = basis(k);
      const double w = least_squares_weight(d.slot_center[d.node_stencil.slots[k]] - xn);
      out.alpha[k] = w * (y[0] * p[0] + y[1] * p[1] + y[2] * p[2] + y[3] * p[3]);
    }
  }
  return out;
}

BoundarySpec BoundarySpec::from_names(const std::vector<std::string>& patch_names,
                                      const std::map<std::string, BoundaryCondition>& conditions,
                                      const BoundaryCondition& fallback) {
  BoundarySpec spec;
  spec.by_patch.assign(patch_names.size(), fallback);
  spec.unnamed = fallback;
  for (const auto& [name, cond] : conditions) {
    const auto it = std::find(patch_names.begin(), patch_names.end(), name);
    if (it == patch_names.end()) throw ConfigError("unknown boundary patch '" + name + "'");
    spec.by_patch[it - patch_names.begin()] = cond;
  }
  return spec;
}

BoundarySpec BoundarySpec::all(const std::vector<std::string>& patch_names, const BoundaryCondition& bc) {
  BoundarySpec spec;
  spec.by_patch.assign(patch_names.size(), bc);
  spec.unnamed = bc;
  return spec;
}

Vec3 boundary_projection(const LocalDomain& d, const LocalFace& f) {
  const Vec3& l = d.slot_center[f.left];
  return l + dot(f.midpoint - l, f.normal) * f.normal;
}

void apply_boundary(const LocalDomain& d, const BoundarySpec& bc, CellField& u) {
  for (const LocalFace& f : d.faces) {
    if (!f.boundary) continue;
    const BoundaryCondition& cond = bc.at(f.patch);
    for (int c = 0; c < u.components; ++c) {
      if (cond.kind == BoundaryKind::Dirichlet) {
        u(f.right, c) = 2.0 * cond.value(boundary_projection(d, f)) - u(f.left, c);
      } else {
        u(f.right, c) = u(f.left, c);
      }
    }
  }
}

void cell_gradient(const LocalDomain& d, const CellField& u, const GradStencilCoeffs& coeffs,
                   CellField& grad) {
  if (u.components != 1 || grad.components != 3) {
    throw NumericalError("cell_gradient expects a scalar field and a 3-component output");
  }
  for (Index i = 0; i < d.n_inner; ++i) {
    const double ui = u(i);
    Vec3 g;
    for (Index e = d.cell_stencil.begin(i); e < d.cell_stencil.end(i); ++e) {
      g += (u(d.cell_stencil.slots[e]) - ui) * coeffs.coeff[e];
    }
    grad.set_vec(i, g);
  }
}

CellField cell_gradient(const LocalDomain& d, const CellField& u, const GradStencilCoeffs& coeffs) {
  CellField grad(d, 3);
  cell_gradient(d, u, coeffs, grad);
  return grad;
}

NodeField node_interpolate(const LocalDomain& d, const CellField& u, const NodeLSWeights& weights) {
  NodeField out;
  out.values.resize(d.node_count());
  for (Index n = 0; n < d.node_count(); ++n) {
    double acc = 0.0;
    for (Index k = d.node_stencil.begin(n); k < d.node_stencil.end(n); ++k) {
      acc += weights.alpha[k] * u(d.node_stencil.slots[k]);
    }
    out.values[n] = acc;
  }
  return out;
}

FaceVectors face_gradient(const LocalDomain& d, const CellField& u, const NodeField& nodes) {
  FaceVectors out;
  out.values.resize(d.faces.size());
  for (std::size_t k = 0; k < d.faces.size(); ++k) {
    const LocalFace& f = d.faces[k];
    const double ua = nodes.values[f.nodes[0]];
    const double ub = nodes.values[f.nodes[1]];
    const double uc = nodes.values[f.nodes[2]];
    const Vec3 g = (ua - uc) * f.normal_brdl + (ub - uc) * f.normal_alcr +
                   ((u(f.right) - u(f.left)) * f.area) * f.normal;
    out.values[k] = (1.0 / (3.0 * f.diamond_volume)) * g;
  }
  return out;
}

CellField barth_jespersen(const LocalDomain& d, const CellField& u, const CellField& grad) {
  CellField psi(d, 1, 1.0);
  for (Index i = 0; i < d.n_inner; ++i) {
    const double ui = u(i);
    double umax = ui, umin = ui;
    for (Index lf : d.cell_faces[i]) {
      const LocalFace& f = d.faces[lf];
      const double un = u(f.left == i ? f.right : f.left);
      umax = std::max(umax, un);
      umin = std::min(umin, un);
    }
    const Vec3 g = grad.vec(i);
    double p = 1.0;
    for (Index lf : d.cell_faces[i]) {
      const double delta = dot(g, d.faces[lf].midpoint - d.slot_center[i]);
      if (delta > 0.0) {
        p = std::min(p, std::min(1.0, (umax - ui) / delta));
      } else if (delta < 0.0) {
        p = std::min(p, std::min(1.0, (umin - ui) / delta));
      }
    }
    psi(i) = std::max(0.0, p);
  }
  return psi;
}

CellField convective_flux(const LocalDomain& d, const CellField& u, const CellField& velocity,
                          const CellField& grad, const CellField& psi, const BoundarySpec* bc) {
  return accumulate(d, convective_face_flux(d, u, velocity, grad, psi, bc));
}

CellField diffusive_flux(const LocalDomain& d, const FaceVectors& face_grad, double diffusivity,
                         const BoundarySpec* bc) {
  if (diffusivity < 0.0) throw NumericalError("negative diffusivity");
  return accumulate(d, diffusive_face_flux(d, face_grad, {}, diffusivity, bc));
}

CellField diffusive_flux(const LocalDomain& d, const FaceVectors& face_grad,
                         std::span<const double> face_diffusivity, const BoundarySpec* bc) {
  if (face_diffusivity.size() != d.faces.size()) throw NumericalError("per-face diffusivity size mismatch");
  return accumulate(d, diffusive_face_flux(d, face_grad, face_diffusivity, 0.0, bc));
}

std::vector<double> face_average(const LocalDomain& d, const CellField& cell_values) {
  std::vector<double> out(d.faces.size());
  for (std::size_t k = 0; k < d.faces.size(); ++k) {
    out[k] = 0.5 * (cell_values(d.faces[k].left) + cell_values(d.faces[k].right));
  }
  return out;
}

double boundary_outflow(const LocalDomain& d, const CellField& u, const CellField& velocity,
                        const FaceVectors& face_grad, std::span<const double> face_diffusivity,
                        const BoundarySpec* bc) {
  CellField zero_grad(d, 3);
  CellField psi(d, 1, 0.0);
  const auto conv = convective_face_flux(d, u, velocity, zero_grad, psi, bc);
  const auto diff = diffusive_face_flux(d, face_grad, face_diffusivity, 0.0, bc);
  return outflow_from(d, conv, diff);
}

PhaseScope::PhaseScope(double* slot) : slot_(slot), start_(slot ? now_seconds() : 0.0) {}

PhaseScope::~PhaseScope() {
  if (slot_) *slot_ += now_seconds() - start_;
}

void synchronize(const Partition& part, const BoundarySpec* bc, CellField& u, PhaseTimers* timers) {
  if (bc) apply_boundary(part.domain, *bc, u);
  PhaseScope scope(timers ? &timers->communications : nullptr);
  CellField* f = &u;
  const std::span<CellField* const> fields(&f, 1);
  exchange_halo(part.domain, part.plan, part.transport, fields);
  exchange_haloghost(part.domain, part.plan, part.transport, fields);
}

ConvectionDiffusion::ConvectionDiffusion(const Partition& part, BoundarySpec bc)
    : part_(part),
      bc_(std::move(bc)),
      grad_coeffs_(build_gradient_coeffs(part.domain)),
      node_weights_(build_node_weights(part.domain)),
      grad_(part.domain, 3),
      psi_(part.domain, 1, 1.0) {}

CellField ConvectionDiffusion::residual(CellField& u, const CellField& velocity, double diffusivity,
                                        const CellField* source) {
  if (diffusivity < 0.0) throw NumericalError("negative diffusivity");
  const std::vector<double> face_d(part_.domain.faces.size(), diffusivity);
  return evaluate(u, velocity, face_d, source);
}

CellField ConvectionDiffusion::residual(CellField& u, const CellField& velocity,
                                        std::span<const double> face_diffusivity, const CellField* source) {
  if (face_diffusivity.size() != part_.domain.faces.size()) {
    throw NumericalError("per-face diffusivity size mismatch");
  }
  return evaluate(u, velocity, face_diffusivity, source);
}

CellField ConvectionDiffusion::evaluate(CellField& u, const CellField& velocity,
                                        std::span<const double> face_d, const CellField* source) {
  const LocalDomain& d = part_.domain;
  synchronize(part_, &bc_, u, &timers_);
  {
    PhaseScope scope(&timers_.cell_grad);
    cell_gradient(d, u, grad_coeffs_, grad_);
  }
  {
    PhaseScope scope(&timers_.communications);
    exchange_halo(d, part_.plan, part_.transport, grad_);
  }
  {
    PhaseScope scope(&timers_.fluxes);
    psi_ = barth_jespersen(d, u, grad_);
  }
  {
    PhaseScope scope(&timers_.communications);
    exchange_halo(d, part_.plan, part_.transport, psi_);
  }
  NodeField nodes;
  {
    PhaseScope scope(&timers_.least_square);
    nodes = node_interpolate(d, u, node_weights_);
  }
  FaceVectors fg;
  {
    PhaseScope scope(&timers_.face_grad);
    fg = face_gradient(d, u, nodes);
  }
  PhaseScope scope(&timers_.fluxes);
  const auto conv = convective_face_flux(d, u, velocity, grad_, psi_, &bc_);
  const auto diff = diffusive_face_flux(d, fg, face_d, 0.0, &bc_);
  CellField out(d, 1);
  for (Index i = 0; i < d.n_inner; ++i) {
    double c = 0.0, s = 0.0;
    for (Index lf : d.cell_faces[i]) {
      const int sg = sign_for(d.faces[lf], i);
      c += sg * conv[lf];
      s += sg * diff[lf];
    }
    out(i) = (-c + s) / d.cell_volume[i] + (source ? (*source)(i) : 0.0);
  }
  // Boundary faces always belong to an inner cell, so each is counted by exactly one partition.
  last_outflow_ = 0.0;
  for (std::size_t k = 0; k < d.faces.size(); ++k) {
    if (d.faces[k].boundary) last_outflow_ += conv[k] - diff[k];
  }
  return out;
}

FieldSet rk3_step(const FieldSet& un, double dt, const std::function<FieldSet(FieldSet&)>& residual) {
  if (!(dt > 0.0)) throw NumericalError("time step must be positive");
  FieldSet stage = un;
  for (int k = 0; k < 3; ++k) {
    const FieldSet r = residual(stage);
    if (r.size() != un.size()) throw NumericalError("residual returned a different number of fields");
    FieldSet next = un;
    for (std::size_t f = 0; f < un.size(); ++f) {
      auto& v = next[f].values;
      const auto& rv = r[f].values;
      if (rv.size() != v.size()) throw NumericalError("residual field size mismatch");
      for (std::size_t i = 0; i < v.size(); ++i) {
        v[i] += kRk3Alpha[k] * dt * rv[i];
        if (!std::isfinite(v[i])) {
          throw NumericalError("non-finite value after Runge-Kutta stage " + std::to_string(k + 1));
        }
      }
    }
    stage = std::move(next);
  }
  return stage;
}

CellField rk3_step(const CellField& un, double dt, const std::function<CellField(CellField&)>& residual) {
  FieldSet set{un};
  auto out = rk3_step(set, dt, [&](FieldSet& s) { return FieldSet{residual(s[0])}; });
  return std::move(out[0]);
}

double advisory_dt(const Partition& part, const CellField& velocity, double cfl) {
  const LocalDomain& d = part.domain;
  double local = std::numeric_limits<double>::infinity();
  for (Index i = 0; i < d.n_inner; ++i) {
    double rate = 0.0;
    for (Index lf : d.cell_faces[i]) {
      const LocalFace& f = d.faces[lf];
      const Vec3 vface = 0.5 * (velocity.vec(f.left) + velocity.vec(f.right));
      rate += std::abs(dot(vface, f.normal)) * f.area;
    }
    if (rate > 0.0) local = std::min(local, d.cell_volume[i] / rate);
  }
  return cfl * -allreduce_max(part.transport, -local);
}

}  // namespace fvdom
