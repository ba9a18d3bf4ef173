#include <doctest.h>

#include <cmath>
#include <random>
#include <vector>

#include "fvdom/errors.hpp"
#include "fvdom/streamer.hpp"
#include "test_support.hpp"

using namespace fvdom;
using namespace fvdom::testing;

namespace {

// Independent transcripts of the coefficient formulas.
double alpha_oracle(double en) {
  if (en == 0.0) return 0.0;
  if (en > 1.5e-15) return 2e-16 * std::exp(-7.248e-15 / en);
  return 6.669e-17 * std::exp(-5.593e-15 / en);
}

Mesh plate_box(int n) { return generate_box(streamer_box({0, 0, 0}, {0.5, 0.5, 0.5}, n, n, n)); }

StreamerConfig quiet_config() {
  StreamerConfig c;
  c.spots.clear();
  c.solver.tol = 1e-12;
  return c;
}

}  // namespace

TEST_CASE("ionization ratio branches") {
  CHECK(ionization_ratio(2e-15) == doctest::Approx(2e-16 * std::exp(-7.248e-15 / 2e-15)).epsilon(1e-15));
  CHECK(ionization_ratio(1e-15) == doctest::Approx(6.669e-17 * std::exp(-5.593e-15 / 1e-15)).epsilon(1e-15));
  // Strict inequality: the threshold itself uses the lower branch.
  CHECK(ionization_ratio(1.5e-15) == doctest::Approx(6.669e-17 * std::exp(-5.593 / 1.5)).epsilon(1e-14));
  CHECK(ionization_ratio(std::nextafter(1.5e-15, 1.0)) ==
        doctest::Approx(2e-16 * std::exp(-7.248 / 1.5)).epsilon(1e-12));
  CHECK(ionization_ratio(0.0) == 0.0);
  CHECK_THROWS_AS(ionization_ratio(-1e-20), NumericalError);
}

TEST_CASE("ionization ratio matches transcript on random samples") {
  auto gen = rng(77);
  std::uniform_real_distribution<double> expo(-19.0, -13.0);
  double worst = 0.0;
  for (int i = 0; i < 1000000; ++i) {
    const double en = std::pow(10.0, expo(gen));
    const double ref = alpha_oracle(en);
    const double got = ionization_ratio(en);
    if (ref > 0.0) worst = std::max(worst, std::abs(got - ref) / ref);
    else CHECK(got == 0.0);
  }
  CHECK(worst <= 1e-14);
}

TEST_CASE("electron velocity") {
  PhysicalConstants c;
  CHECK(norm(electron_velocity({0, 0, 0}, c)) == 0.0);
  CHECK(norm(electron_velocity({1e-31, 0, 0}, c)) == 0.0);

  // E/N = 4e-16 falls in the (1e-16, 2e-15] band.
  const Vec3 v = electron_velocity({1e4, 0, 0}, c);
  const double expected = -(1.03e22 * (1e4 / 2.5e19) + 1.3e6);
  CHECK(v.x == doctest::Approx(expected).epsilon(1e-14));
  CHECK(v.y == 0.0);
  CHECK(v.z == 0.0);

  // Pinned custom table.
  c.velocity_table = {{1e-16, 2.0e22, 1.0e6}, {-1.0, 5.0e21, 2.0e5}};
  const Vec3 e{3e3, -4e3, 0.0};  // |E| = 5e3, E/N = 2e-16
  const Vec3 w = electron_velocity(e, c);
  const double speed = 2.0e22 * 2e-16 + 1.0e6;
  CHECK(w.x == doctest::Approx(-speed * 0.6).epsilon(1e-14));
  CHECK(w.y == doctest::Approx(speed * 0.8).epsilon(1e-14));
  CHECK(dot(w, e) < 0.0);

  c.velocity_table = {{1e-16, 1, 1}, {1e-15, 1, 1}};
  CHECK_THROWS_AS(c.validate(), ConfigError);
}

TEST_CASE("velocity bands use the first exceeded threshold") {
  PhysicalConstants c;
  CHECK(c.band(3e-15).c1 == 7.4e21);
  CHECK(c.band(2e-15).c1 == 1.03e22);
  CHECK(c.band(1e-16).c1 == 7.2973e21);
  CHECK(c.band(2.6e-17).c1 == 6.87e22);
  CHECK(c.band(0.0).c2 == 3.38e4);
}

TEST_CASE("electron diffusion") {
  PhysicalConstants c;
  CHECK(electron_diffusion({0, 0, 0}, {0, 0, 0}, c) == 0.0);
  auto gen = rng(5);
  std::uniform_real_distribution<double> comp(-5e4, 5e4);
  for (int i = 0; i < 200; ++i) {
    const Vec3 e{comp(gen), comp(gen), comp(gen)};
    const Vec3 v = electron_velocity(e, c);
    const double mag = std::sqrt(e.x * e.x + e.y * e.y + e.z * e.z);
    const double vmag = std::sqrt(v.x * v.x + v.y * v.y + v.z * v.z);
    const double ref = 0.3341e9 * std::pow(mag / 2.5e19, 0.54069) * vmag / mag;
    CHECK(electron_diffusion(e, v, c) == doctest::Approx(ref).epsilon(1e-13));
  }
}

TEST_CASE("initial density") {
  const StreamerConfig c;
  CHECK(initial_density(c, {0.2, 0.25, 0.25}) == doctest::Approx(1e16 + 1e12).epsilon(1e-15));
  const double far = initial_density(c, {0.2 + 10 * 0.01, 0.25, 0.25});
  CHECK(std::abs(far - 1e12) / 1e12 <= 1e-6);
  const Vec3 x{0.21, 0.24, 0.26};
  CHECK(initial_density(c, x) == doctest::Approx(1e16 * std::exp(-3e-4 / 1e-4) + 1e12).epsilon(1e-14));
}

TEST_CASE("plasma spot timing and amplitude") {
  const auto spots = default_spots();
  REQUIRE(spots.size() == 2);
  const Vec3 x1{0.3, 0.25, 0.28};
  CHECK(spot_source(spots, x1, 1.25e-8) == 0.0);
  CHECK(spot_source(spots, x1, 1.26e-8) == doctest::Approx(1e25 + 1e25 * std::exp(-(1e-4 + 36e-4) / 25e-6)));
  CHECK(spot_source(spots, x1, 1.26e-8 + 0.5e-9) == 0.0);
  CHECK(spot_source(spots, x1, 1.32e-8) == 0.0);
  CHECK(spots[0].value(x1) == 1e25);
  CHECK(spots[1].value({0.31, 0.25, 0.22}) == 1e25);
  const Vec3 off{0.3 + 0.005, 0.25, 0.28};
  CHECK(spots[0].value(off) == doctest::Approx(1e25 * std::exp(-1.0)));

  StreamerConfig c;
  c.spots[0].duration = 0.0;
  CHECK_THROWS_AS(c.validate(), ConfigError);
}

TEST_CASE("streamer setup rejects meshes without the drive patches") {
  const Distributed dist = distribute(generate_box(unit_cube(3)), 1);
  on_partitions(dist, [](const Partition& part) {
    CHECK_THROWS_AS(StreamerModel(part, StreamerConfig{}), ConfigError);
  });
}

TEST_CASE("zero net charge gives the plate field") {
  const Distributed dist = distribute(plate_box(8), 2);
  on_partitions(dist, [](const Partition& part) {
    StreamerModel model(part, quiet_config());
    model.initialize();
    const StreamerDiagnostics diag = model.diagnostics();
    CHECK(diag.net_charge == 0.0);
    CHECK(diag.solver_iterations > 0);

    const LocalDomain& d = part.domain;
    double worst = 0.0;
    for (Index i = 0; i < d.n_inner; ++i) {
      const Vec3 e = model.field().vec(i);
      worst = std::max(worst, norm(e - Vec3{25000.0, 0, 0}) / 25000.0);
      // Potential is linear between the plates.
      CHECK(model.potential()(i) == doctest::Approx(12500.0 * (1.0 - d.slot_center[i].x / 0.5)).epsilon(1e-6));
    }
    CHECK(worst <= 0.05);

    // Ghost values: Dirichlet mirror for V, copy of the owner for E.
    for (Index g = d.ghost_begin(); g < d.haloghost_begin(); ++g) {
      const Index owner = d.ghost_owner[g - d.ghost_begin()];
      const std::string& name = d.patch_names[d.ghost_patch[g - d.ghost_begin()]];
      if (name == "inlet") CHECK(model.potential()(g) == doctest::Approx(25000.0 - model.potential()(owner)));
      else if (name == "outlet") CHECK(model.potential()(g) == doctest::Approx(-model.potential()(owner)));
      else CHECK(model.potential()(g) == model.potential()(owner));
      CHECK(model.field().vec(g) == model.field().vec(owner));
    }
  });
}

TEST_CASE("positive net charge raises the potential between grounded plates") {
  const Distributed dist = distribute(plate_box(8), 1);
  on_partitions(dist, [](const Partition& part) {
    StreamerConfig c = quiet_config();
    c.inlet_voltage = 0.0;
    StreamerModel model(part, c);
    model.initialize();
    const LocalDomain& d = part.domain;
    CellField np = model.ions();
    const Vec3 blob{0.25, 0.25, 0.25};
    for (Index s = 0; s < d.slot_count(); ++s) {
      const Vec3 r = d.slot_center[s] - blob;
      np(s) += 1e10 * std::exp(-dot(r, r) / 0.01);
    }
    model.update_field(model.electrons(), np, 0.0);
    Index peak = 0;
    for (Index i = 0; i < d.n_inner; ++i) {
      CHECK(model.potential()(i) > 0.0);
      if (model.potential()(i) > model.potential()(peak)) peak = i;
    }
    CHECK(norm(d.slot_center[peak] - blob) < 0.15);
  });
}

TEST_CASE("source term follows the ionization law") {
  const Distributed dist = distribute(plate_box(6), 1);
  on_partitions(dist, [](const Partition& part) {
    StreamerModel model(part, quiet_config());
    model.initialize();
    const LocalDomain& d = part.domain;
    const double n = model.config().constants.gas_density;
    for (Index i = 0; i < d.n_inner; ++i) {
      const double emag = norm(model.field().vec(i));
      const double speed = norm(model.velocity().vec(i));
      const double expected = alpha_oracle(emag / n) * n * speed * model.electrons()(i);
      CHECK(model.source()(i) == doctest::Approx(expected).epsilon(1e-13));
    }
  });
}

TEST_CASE("electron count is conserved with blocked boundaries and no source") {
  const Distributed dist = distribute(plate_box(6), 2);
  on_partitions(dist, [](const Partition& part) {
    StreamerConfig c = quiet_config();
    c.ionization = false;
    c.zero_flux_electrons = true;
    StreamerModel model(part, c);
    model.initialize();
    double before = model.diagnostics().electrons;
    double worst = 0.0;
    for (int s = 0; s < 100; ++s) {
      const StreamerDiagnostics diag = model.step();
      worst = std::max(worst, std::abs(diag.electrons - before) / before);
      before = diag.electrons;
      CHECK(diag.boundary_outflow == 0.0);
    }
    CHECK(worst <= 1e-10);
  });
}

TEST_CASE("net charge changes by the boundary outflow") {
  const Distributed dist = distribute(plate_box(6), 2);
  on_partitions(dist, [](const Partition& part) {
    StreamerConfig c = quiet_config();
    // Pulse sitting on the inlet plane: a uniform background alone would drift in through
    // the outlet as fast as it leaves through the inlet, leaving no net flux to audit.
    c.pulse_center = {0.0, 0.25, 0.25};
    c.pulse_sigma = 0.1;
    StreamerModel model(part, c);
    model.initialize();
    double charge = model.diagnostics().net_charge;
    double worst = 0.0;
    double largest = 0.0;
    for (int s = 0; s < 20; ++s) {
      const StreamerDiagnostics diag = model.step();
      const double change = diag.net_charge - charge;
      const double expected = c.dt * diag.boundary_outflow;
      worst = std::max(worst, std::abs(change - expected) / std::abs(expected));
      largest = std::max(largest, std::abs(expected));
      charge = diag.net_charge;
    }
    CHECK(largest > 0.0);
    CHECK(worst <= 1e-8);
  });
}

TEST_CASE("streamer steps are deterministic and stay positive") {
  const Mesh mesh = plate_box(6);
  std::vector<std::vector<StreamerDiagnostics>> runs(2);
  for (auto& run : runs) {
    const Distributed dist = distribute(mesh, 2);
    std::vector<StreamerDiagnostics> out;
    on_partitions(dist, [&](const Partition& part) {
      StreamerModel model(part, StreamerConfig{});
      model.initialize();
      std::vector<StreamerDiagnostics> local;
      for (int s = 0; s < 10; ++s) local.push_back(model.step());
      if (part.transport.rank() == 0) out = local;
      const PhaseTimers t = model.timers();
      CHECK(t.solver > 0.0);
      CHECK(t.fluxes > 0.0);
    });
    run = out;
  }
  REQUIRE(runs[0].size() == 10);
  for (std::size_t s = 0; s < runs[0].size(); ++s) {
    const auto& a = runs[0][s];
    const auto& b = runs[1][s];
    CHECK(a.electrons == b.electrons);
    CHECK(a.net_charge == b.net_charge);
    CHECK(a.boundary_outflow == b.boundary_outflow);
    CHECK(a.max_field == b.max_field);
    CHECK(a.solver_iterations == b.solver_iterations);
    CHECK(a.negative_cells == 0);
    CHECK(a.time == doctest::Approx((s + 1) * 8.2e-13));
  }
}

TEST_CASE("pulse centre outside the mesh produces a warning") {
  const Distributed dist = distribute(plate_box(4), 1);
  on_partitions(dist, [](const Partition& part) {
    StreamerConfig c = quiet_config();
    c.pulse_center = {2.0, 0.25, 0.25};
    StreamerModel model(part, c);
    model.initialize();
    CHECK(model.warnings().size() == 1);
  });
}
