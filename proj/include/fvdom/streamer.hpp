#pragma once

#include <memory>
#include <string>
#include <vector>

#include "fvdom/fv_ops.hpp"
#include "fvdom/linear_system.hpp"

namespace fvdom {

// Drift coefficients (C1, C2) used when E/N is strictly above `threshold`.
struct VelocityBand {
  double threshold = 0.0;
  double c1 = 0.0;
  double c2 = 0.0;
};

// Placeholder drift table in the Morrow-Lowke form, bands in descending threshold order.
std::vector<VelocityBand> default_velocity_table();

// CGS-mixed units: cm, V/cm, cm^-3, s.
struct PhysicalConstants {
  double gas_density = 2.5e19;             // N, cm^-3
  double elementary_charge = 1.602176634e-19;  // C
  double permittivity = 8.8541878128e-14;  // F/cm
  std::vector<VelocityBand> velocity_table = default_velocity_table();

  void validate() const;
  // (C1, C2) for the first band whose threshold is exceeded; the last band is the fallback.
  const VelocityBand& band(double e_over_n) const;
};

// alpha/N in cm^2 as a function of |E|/N (V cm^2).
double ionization_ratio(double e_over_n);

// v_e = -[C1 |E|/N + C2] E/|E|, zero for |E| < 1e-30.
Vec3 electron_velocity(const Vec3& e_field, const PhysicalConstants& constants);

// Magnitude of D_e = -[0.3341e9 (|E|/N)^0.54069] v_e/|E|, zero for |E| < 1e-30.
double electron_diffusion(const Vec3& e_field, const Vec3& velocity, const PhysicalConstants& constants);

// Gaussian electron source switched on for start <= t < start + duration.
struct PlasmaSpot {
  Vec3 center;
  double amplitude = 1e25;
  double width = 0.005;
  double start = 1.26e-8;
  double duration = 0.5e-9;

  bool active(double t) const { return t >= start && t < start + duration; }
  double value(const Vec3& x) const;
};

std::vector<PlasmaSpot> default_spots();
double spot_source(const std::vector<PlasmaSpot>& spots, const Vec3& x, double t);

struct StreamerConfig {
  PhysicalConstants constants;
  Vec3 pulse_center{0.2, 0.25, 0.25};
  double pulse_sigma = 0.01;
  double pulse_peak = 1e16;
  double background = 1e12;
  std::string inlet_patch = "inlet";
  std::string outlet_patch = "outlet";
  double inlet_voltage = 12500.0;
  double outlet_voltage = 0.0;
  std::vector<PlasmaSpot> spots = default_spots();
  bool ionization = true;       // false forces S_e = 0 (spots still apply)
  bool zero_flux_electrons = false;  // block every boundary flux of n_e
  double dt = 8.2e-13;
  SolverConfig solver;

  void validate() const;
};

double initial_density(const StreamerConfig& config, const Vec3& x);

struct StreamerDiagnostics {
  int step = 0;
  double time = 0.0;
  double electrons = 0.0;          // integral of n_e
  double net_charge = 0.0;         // integral of n_p - n_e
  double boundary_outflow = 0.0;   // n_e flux leaving through the boundary, final stage
  Index negative_cells = 0;        // inner cells with n_e < 0
  int solver_iterations = 0;       // summed over the stages of the step
  double solver_residual = 0.0;    // worst stage residual
  double max_field = 0.0;          // max |E|
};

// One partition of the coupled electron/ion/potential system. All members that touch
// other partitions are collective.
class StreamerModel {
 public:
  StreamerModel(const Partition& part, StreamerConfig config);

  const StreamerConfig& config() const { return config_; }
  const Partition& partition() const { return part_; }

  // Gaussian pulse for n_e, n_p = n_e, t = 0, then a first field solve.
  void initialize();

  // Advances n_e and n_p by one RK3 step of config.dt.
  StreamerDiagnostics step();

  // Poisson solve for the given densities followed by E, v_e, D_e and the source term.
  void update_field(const CellField& ne, const CellField& np, double t);

  StreamerDiagnostics diagnostics() const;

  double time() const { return time_; }
  int steps() const { return steps_; }
  CellField& electrons() { return ne_; }
  CellField& ions() { return np_; }
  const CellField& potential() const { return v_; }
  const CellField& field() const { return e_; }
  const CellField& velocity() const { return ve_; }
  const CellField& source() const { return se_; }
  const std::vector<double>& face_diffusion() const { return face_d_; }
  const std::vector<std::string>& warnings() const { return warnings_; }

  // Per-part accumulated timings (transport operator plus field solve).
  PhaseTimers timers() const;

 private:
  FieldSet stage_residual(FieldSet& stage, double t);

  Partition part_;
  StreamerConfig config_;
  BoundarySpec potential_bc_;
  BoundarySpec neutral_bc_;
  ConvectionDiffusion transport_;
  PoissonSystem poisson_;
  std::unique_ptr<Preconditioner> preconditioner_;

  CellField ne_, np_, v_, e_, ve_, de_, se_;
  std::vector<double> face_d_;
  double time_ = 0.0;
  int steps_ = 0;
  int stage_iterations_ = 0;
  double stage_residual_ = 0.0;
  double last_outflow_ = 0.0;
  PhaseTimers own_timers_;
  std::vector<std::string> warnings_;
};

}  // namespace fvdom
