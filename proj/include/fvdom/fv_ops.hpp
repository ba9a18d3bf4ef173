#pragma once

#include <array>
#include <functional>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "fvdom/exchange.hpp"
#include "fvdom/fields.hpp"
#include "fvdom/partition.hpp"

namespace fvdom {

// Least-squares gradient coefficients: for inner cell i with stencil entries j,
// grad u_i = sum_j coeff[j] * (u_j - u_i). Entries align with LocalDomain::cell_stencil.
struct GradStencilCoeffs {
  std::vector<Vec3> coeff;
  std::vector<double> det;  // determinant of each cell's 3x3 normal matrix
};

// Node interpolation weights aligned with LocalDomain::node_stencil; sum to one per node.
struct NodeLSWeights {
  std::vector<double> alpha;
};

// Inverse-distance weighted least squares, shared by the gradient and node fits.
double least_squares_weight(const Vec3& offset);

GradStencilCoeffs build_gradient_coeffs(const LocalDomain& domain);
NodeLSWeights build_node_weights(const LocalDomain& domain);

enum class BoundaryKind { Neumann, Dirichlet, Wall };

// Per-patch boundary treatment. Dirichlet ghosts mirror the boundary value g:
// u_ghost = 2 g(p) - u_L, p being the projection of the left centroid onto the face plane.
// Wall behaves like Neumann for reconstruction and blocks every face flux.
struct BoundaryCondition {
  BoundaryKind kind = BoundaryKind::Neumann;
  std::function<double(const Vec3&)> value;

  static BoundaryCondition neumann() { return {}; }
  static BoundaryCondition wall() { return {BoundaryKind::Wall, {}}; }
  static BoundaryCondition dirichlet(double v) {
    return {BoundaryKind::Dirichlet, [v](const Vec3&) { return v; }};
  }
  static BoundaryCondition dirichlet(std::function<double(const Vec3&)> fn) {
    return {BoundaryKind::Dirichlet, std::move(fn)};
  }
};

struct BoundarySpec {
  std::vector<BoundaryCondition> by_patch;
  BoundaryCondition unnamed;  // faces without a physical group

  const BoundaryCondition& at(int patch) const {
    return patch >= 0 && patch < static_cast<int>(by_patch.size()) ? by_patch[patch] : unnamed;
  }

  // Every patch gets `fallback` unless named in `conditions`; unknown names are errors.
  static BoundarySpec from_names(const std::vector<std::string>& patch_names,
                                 const std::map<std::string, BoundaryCondition>& conditions,
                                 const BoundaryCondition& fallback = BoundaryCondition::neumann());
  static BoundarySpec all(const std::vector<std::string>& patch_names, const BoundaryCondition& bc);
};

// Foot of the perpendicular from the left centroid onto a boundary face plane.
Vec3 boundary_projection(const LocalDomain& domain, const LocalFace& face);

// Fills the ghost slots owned by this partition (not haloghost) for every component.
void apply_boundary(const LocalDomain& domain, const BoundarySpec& bc, CellField& u);

// Least-squares gradient of scalar u on inner cells; `grad` has 3 components.
void cell_gradient(const LocalDomain& domain, const CellField& u, const GradStencilCoeffs& coeffs,
                   CellField& grad);
CellField cell_gradient(const LocalDomain& domain, const CellField& u, const GradStencilCoeffs& coeffs);

NodeField node_interpolate(const LocalDomain& domain, const CellField& u, const NodeLSWeights& weights);

// Diamond-cell gradient on every local face; boundary faces use the ghost slot as R.
FaceVectors face_gradient(const LocalDomain& domain, const CellField& u, const NodeField& nodes);

CellField barth_jespersen(const LocalDomain& domain, const CellField& u, const CellField& grad);

// MUSCL upwind convective residual sum_j u_ij (V_ij . n_ij)|sigma_ij| per inner cell.
CellField convective_flux(const LocalDomain& domain, const CellField& u, const CellField& velocity,
                          const CellField& grad, const CellField& psi,
                          const BoundarySpec* bc = nullptr);

// Diffusive residual sum_j D (grad u_ij . n_ij)|sigma_ij| per inner cell.
CellField diffusive_flux(const LocalDomain& domain, const FaceVectors& face_grad, double diffusivity,
                         const BoundarySpec* bc = nullptr);
CellField diffusive_flux(const LocalDomain& domain, const FaceVectors& face_grad,
                         std::span<const double> face_diffusivity, const BoundarySpec* bc = nullptr);

// Face values of a cell-centred coefficient: mean of the two adjacent slots.
std::vector<double> face_average(const LocalDomain& domain, const CellField& cell_values);

// Sum over boundary faces of the outward convective + diffusive flux (for bookkeeping).
double boundary_outflow(const LocalDomain& domain, const CellField& u, const CellField& velocity,
                        const FaceVectors& face_grad, std::span<const double> face_diffusivity,
                        const BoundarySpec* bc = nullptr);

// Wall-clock accumulators matching the per-part timing columns of the benchmark tables.
struct PhaseTimers {
  double cell_grad = 0.0;
  double face_grad = 0.0;
  double fluxes = 0.0;
  double least_square = 0.0;
  double solver = 0.0;
  double communications = 0.0;
};

// Scoped accumulation into one PhaseTimers member.
class PhaseScope {
 public:
  explicit PhaseScope(double* slot);
  ~PhaseScope();
  PhaseScope(const PhaseScope&) = delete;
  PhaseScope& operator=(const PhaseScope&) = delete;

 private:
  double* slot_;
  double start_;
};

// Distributed context for one partition.
struct Partition {
  const LocalDomain& domain;
  const CommPlan& plan;
  Transport& transport;
};

// Ghost fill plus halo and haloghost exchange; `bc` may be null when ghosts are preset.
void synchronize(const Partition& part, const BoundarySpec* bc, CellField& u, PhaseTimers* timers = nullptr);

// Convection-diffusion operator du/dt = -Rez_conv/mu + Rez_dissip/mu + S for one partition.
class ConvectionDiffusion {
 public:
  ConvectionDiffusion(const Partition& part, BoundarySpec bc);

  const GradStencilCoeffs& gradient_coeffs() const { return grad_coeffs_; }
  const NodeLSWeights& node_weights() const { return node_weights_; }
  const BoundarySpec& boundary() const { return bc_; }
  PhaseTimers& timers() { return timers_; }
  const PhaseTimers& timers() const { return timers_; }

  // `velocity` must already have consistent halo/ghost slots (see synchronize()).
  // `u` is synchronized in place. `source` is read on inner slots; may be empty.
  CellField residual(CellField& u, const CellField& velocity, double diffusivity,
                     const CellField* source);
  CellField residual(CellField& u, const CellField& velocity, std::span<const double> face_diffusivity,
                     const CellField* source);

  // Boundary outflow evaluated during the last residual() call (sum over inner-owned faces).
  double last_boundary_outflow() const { return last_outflow_; }
  const CellField& last_gradient() const { return grad_; }
  const CellField& last_limiter() const { return psi_; }

 private:
  CellField evaluate(CellField& u, const CellField& velocity, std::span<const double> face_d,
                     const CellField* source);

  Partition part_;
  BoundarySpec bc_;
  GradStencilCoeffs grad_coeffs_;
  NodeLSWeights node_weights_;
  PhaseTimers timers_;
  CellField grad_;
  CellField psi_;
  double last_outflow_ = 0.0;
};

inline constexpr std::array<double, 3> kRk3Alpha{0.5, 0.5, 1.0};

using FieldSet = std::vector<CellField>;

// u(k) = u(n) + alpha_k dt R(u(k-1)), k = 1..3, u(n+1) = u(3). The residual callback receives
// the stage state by reference so it can refresh halos before evaluating.
FieldSet rk3_step(const FieldSet& un, double dt, const std::function<FieldSet(FieldSet&)>& residual);
CellField rk3_step(const CellField& un, double dt, const std::function<CellField(CellField&)>& residual);

// Advisory explicit time step CFL * min_i mu_i / sum_faces |V_ij . n_ij| |sigma_ij| (collective).
double advisory_dt(const Partition& part, const CellField& velocity, double cfl = 0.5);

}  // namespace fvdom
