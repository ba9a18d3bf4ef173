#include "fvdom/streamer.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

#include "fvdom/errors.hpp"

namespace fvdom {

namespace {

constexpr double kFieldFloor = 1e-30;

void add_timers(PhaseTimers& into, const PhaseTimers& t) {
  into.cell_grad += t.cell_grad;
  into.face_grad += t.face_grad;
  into.fluxes += t.fluxes;
  into.least_square += t.least_square;
  into.solver += t.solver;
  into.communications += t.communications;
}

}  // namespace

std::vector<VelocityBand> default_velocity_table() {
  return {
      {2e-15, 7.4e21, 7.1e6},
      {1e-16, 1.03e22, 1.3e6},
      {2.6e-17, 7.2973e21, 1.63e6},
      {-std::numeric_limits<double>::infinity(), 6.87e22, 3.38e4},
  };
}

void PhysicalConstants::validate() const {
  if (!(gas_density > 0.0)) throw ConfigError("gas density must be positive");
  if (!(permittivity > 0.0)) throw ConfigError("permittivity must be positive");
  if (!(elementary_charge > 0.0)) throw ConfigError("elementary charge must be positive");
  if (velocity_table.empty()) throw ConfigError("velocity table is empty");
  for (std::size_t i = 1; i < velocity_table.size(); ++i) {
    if (!(velocity_table[i].threshold < velocity_table[i - 1].threshold)) {
      throw ConfigError("velocity table thresholds must be strictly descending");
    }
  }
}

const VelocityBand& PhysicalConstants::band(double e_over_n) const {
  for (const VelocityBand& b : velocity_table) {
    if (e_over_n > b.threshold) return b;
  }
  return velocity_table.back();
}

double ionization_ratio(double e_over_n) {
  if (e_over_n < 0.0 || std::isnan(e_over_n)) throw NumericalError("ionization ratio needs |E|/N >= 0");
  if (e_over_n == 0.0) return 0.0;
  if (e_over_n > 1.5e-15) return 2e-16 * std::exp(-7.248e-15 / e_over_n);
  return 6.669e-17 * std::exp(-5.593e-15 / e_over_n);
}

Vec3 electron_velocity(const Vec3& e_field, const PhysicalConstants& c) {
  const double mag = norm(e_field);
  if (mag < kFieldFloor) return {};
  const double en = mag / c.gas_density;
  const VelocityBand& b = c.band(en);
  return (-(b.c1 * en + b.c2) / mag) * e_field;
}

double electron_diffusion(const Vec3& e_field, const Vec3& velocity, const PhysicalConstants& c) {
  const double mag = norm(e_field);
  if (mag < kFieldFloor) return 0.0;
  const double en = mag / c.gas_density;
  return 0.3341e9 * std::pow(en, 0.54069) * norm(velocity) / mag;
}

double PlasmaSpot::value(const Vec3& x) const {
  const Vec3 d = x - center;
  return amplitude * std::exp(-dot(d, d) / (width * width));
}

std::vector<PlasmaSpot> default_spots() {
  PlasmaSpot a;
  a.center = {0.3, 0.25, 0.28};
  PlasmaSpot b;
  b.center = {0.31, 0.25, 0.22};
  return {a, b};
}

double spot_source(const std::vector<PlasmaSpot>& spots, const Vec3& x, double t) {
  double s = 0.0;
  for (const PlasmaSpot& p : spots) {
    if (p.active(t)) s += p.value(x);
  }
  return s;
}

void StreamerConfig::validate() const {
  constants.validate();
  solver.validate();
  if (!(pulse_sigma > 0.0)) throw ConfigError("pulse sigma must be positive");
  if (!(dt > 0.0)) throw ConfigError("time step must be positive");
  for (const PlasmaSpot& s : spots) {
    if (!(s.duration > 0.0)) throw ConfigError("plasma spot duration must be positive");
    if (!(s.width > 0.0)) throw ConfigError("plasma spot width must be positive");
  }
}

double initial_density(const StreamerConfig& c, const Vec3& x) {
  const Vec3 d = x - c.pulse_center;
  return c.pulse_peak * std::exp(-dot(d, d) / (c.pulse_sigma * c.pulse_sigma)) + c.background;
}

// ---------------------------------------------------------------------------------------

StreamerModel::StreamerModel(const Partition& part, StreamerConfig config)
    : part_(part),
      config_((config.validate(), std::move(config))),
      potential_bc_(BoundarySpec::from_names(
          part.domain.patch_names,
          {{config_.inlet_patch, BoundaryCondition::dirichlet(config_.inlet_voltage)},
           {config_.outlet_patch, BoundaryCondition::dirichlet(config_.outlet_voltage)}})),
      neutral_bc_(BoundarySpec::all(part.domain.patch_names, config_.zero_flux_electrons
                                                                 ? BoundaryCondition::wall()
                                                                 : BoundaryCondition::neumann())),
      transport_(part, neutral_bc_),
      ne_(part.domain, 1),
      np_(part.domain, 1),
      v_(part.domain, 1),
      e_(part.domain, 3),
      ve_(part.domain, 3),
      de_(part.domain, 1),
      se_(part.domain, 1) {
  {
    PhaseScope scope(&own_timers_.solver);
    poisson_ = assemble_poisson(part.domain, transport_.node_weights(), potential_bc_);
    preconditioner_ = make_preconditioner(config_.solver.preconditioner, poisson_.matrix);
  }
  face_d_.assign(part.domain.faces.size(), 0.0);
}

void StreamerModel::initialize() {
  const LocalDomain& d = part_.domain;
  for (Index s = 0; s < d.slot_count(); ++s) {
    ne_(s) = initial_density(config_, d.slot_center[s]);
    np_(s) = ne_(s);
  }
  std::fill(v_.values.begin(), v_.values.end(), 0.0);
  time_ = 0.0;
  steps_ = 0;
  last_outflow_ = 0.0;

  // Bounding box check of the pulse centre (collective).
  std::vector<double> box(6, -std::numeric_limits<double>::infinity());
  for (const Vec3& p : d.node_position) {
    for (int a = 0; a < 3; ++a) {
      box[a] = std::max(box[a], -p[a]);
      box[3 + a] = std::max(box[3 + a], p[a]);
    }
  }
  for (double& b : box) b = allreduce_max(part_.transport, b);
  for (int a = 0; a < 3; ++a) {
    const double c = config_.pulse_center[a];
    if (c < -box[a] || c > box[3 + a]) {
      std::ostringstream msg;
      msg << "pulse centre coordinate " << a << " = " << c << " lies outside the mesh bounds ["
          << -box[a] << ", " << box[3 + a] << "]";
      warnings_.push_back(msg.str());
    }
  }
  stage_iterations_ = 0;
  stage_residual_ = 0.0;
  update_field(ne_, np_, time_);
}

void StreamerModel::update_field(const CellField& ne, const CellField& np, double t) {
  const LocalDomain& d = part_.domain;
  const PhysicalConstants& c = config_.constants;
  const double scale = -c.elementary_charge / c.permittivity;
  std::vector<double> b(d.n_inner), x0(v_.values.begin(), v_.values.begin() + d.n_inner);
  for (Index i = 0; i < d.n_inner; ++i) b[i] = scale * (np(i) - ne(i)) - poisson_.shift[i];
  {
    PhaseScope scope(&own_timers_.solver);
    const SolveResult r = fgmres(part_, poisson_.matrix, *preconditioner_, b, config_.solver, x0);
    if (!r.converged) {
      std::ostringstream msg;
      msg << "potential solve at t = " << t << " s: " << r.message;
      require_converged(SolveResult{r.x, r.iterations, r.relative_residual, r.history, false, msg.str()});
    }
    stage_iterations_ += r.iterations;
    stage_residual_ = std::max(stage_residual_, r.relative_residual);
    std::copy(r.x.begin(), r.x.end(), v_.values.begin());
  }
  synchronize(part_, &potential_bc_, v_, &own_timers_);
  {
    PhaseScope scope(&own_timers_.cell_grad);
    cell_gradient(d, v_, transport_.gradient_coeffs(), e_);
    for (Index i = 0; i < d.n_inner; ++i) e_.set_vec(i, -e_.vec(i));
  }
  synchronize(part_, &neutral_bc_, e_, &own_timers_);
  PhaseScope scope(&own_timers_.fluxes);
  for (Index s = 0; s < d.slot_count(); ++s) {
    const Vec3 ef = e_.vec(s);
    const Vec3 v = electron_velocity(ef, c);
    ve_.set_vec(s, v);
    de_(s) = electron_diffusion(ef, v, c);
  }
  face_d_ = face_average(d, de_);
  std::fill(se_.values.begin(), se_.values.end(), 0.0);
  for (Index i = 0; i < d.n_inner; ++i) {
    double s = 0.0;
    if (config_.ionization) {
      const double alpha = ionization_ratio(norm(e_.vec(i)) / c.gas_density) * c.gas_density;
      s = alpha * norm(ve_.vec(i)) * ne(i);
    }
    se_(i) = s + spot_source(config_.spots, d.slot_center[i], t);
  }
}

FieldSet StreamerModel::stage_residual(FieldSet& stage, double t) {
  update_field(stage[0], stage[1], t);
  FieldSet r;
  r.push_back(transport_.residual(stage[0], ve_, face_d_, &se_));
  CellField dnp(part_.domain, 1);
  std::copy(se_.values.begin(), se_.values.begin() + part_.domain.n_inner, dnp.values.begin());
  r.push_back(std::move(dnp));
  return r;
}

StreamerDiagnostics StreamerModel::step() {
  const double dt = config_.dt;
  // Stage states approximate t, t + dt/2 and t + dt/2.
  const double stage_time[3] = {time_, time_ + 0.5 * dt, time_ + 0.5 * dt};
  int k = 0;
  stage_iterations_ = 0;
  stage_residual_ = 0.0;
  FieldSet out = rk3_step(FieldSet{ne_, np_}, dt, [&](FieldSet& s) { return stage_residual(s, stage_time[k++]); });
  last_outflow_ = transport_.last_boundary_outflow();
  ne_ = std::move(out[0]);
  np_ = std::move(out[1]);
  time_ += dt;
  ++steps_;
  return diagnostics();
}

StreamerDiagnostics StreamerModel::diagnostics() const {
  const LocalDomain& d = part_.domain;
  std::vector<double> sums(4, 0.0);
  double emax = 0.0;
  for (Index i = 0; i < d.n_inner; ++i) {
    sums[0] += d.cell_volume[i] * ne_(i);
    sums[1] += d.cell_volume[i] * (np_(i) - ne_(i));
    if (ne_(i) < 0.0) sums[2] += 1.0;
    emax = std::max(emax, norm(e_.vec(i)));
  }
  sums[3] = last_outflow_;
  allreduce_sum(part_.transport, sums);
  StreamerDiagnostics out;
  out.step = steps_;
  out.time = time_;
  out.electrons = sums[0];
  out.net_charge = sums[1];
  out.negative_cells = static_cast<Index>(sums[2]);
  out.boundary_outflow = sums[3];
  out.solver_iterations = stage_iterations_;
  out.solver_residual = stage_residual_;
  out.max_field = allreduce_max(part_.transport, emax);
  return out;
}

PhaseTimers StreamerModel::timers() const {
  PhaseTimers t = own_timers_;
  add_timers(t, transport_.timers());
  return t;
}

}  // namespace fvdom
