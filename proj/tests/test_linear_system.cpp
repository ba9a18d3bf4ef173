#include <algorithm>
#include <atomic>
#include <cmath>
#include <mutex>
#include <map>
#include <sstream>

#include "doctest.h"
#include "fvdom/errors.hpp"
#include "fvdom/linear_system.hpp"
#include "test_support.hpp"

using namespace fvdom;
using namespace fvdom::testing;

namespace {

BoundarySpec annex_bc(const LocalDomain& d) {
  return BoundarySpec::from_names(d.patch_names, {{"in", BoundaryCondition::dirichlet(10.0)},
                                                  {"out", BoundaryCondition::dirichlet(0.0)}});
}

// Identity or scaled-diagonal matrix on the inner rows of a domain.
SparseMatrix diagonal_matrix(const LocalDomain& d, const std::function<double(Index)>& diag) {
  SparseMatrix a;
  for (Index i = 0; i < d.n_inner; ++i) {
    a.row_global.push_back(d.slot_global[i]);
    a.cols.push_back(d.slot_global[i]);
    a.local_cols.push_back(i);
    a.values.push_back(diag(d.slot_global[i]));
    a.offsets.push_back(static_cast<Index>(a.cols.size()));
  }
  return a;
}

// Deterministic pseudo-random value for a (row, column) pair.
double hashed(Index r, Index c) {
  std::uint64_t x = static_cast<std::uint64_t>(r) * 0x9E3779B97F4A7C15ull ^ static_cast<std::uint64_t>(c + 17) * 0xC2B2AE3D27D4EB4Full;
  x ^= x >> 31;
  x *= 0xBF58476D1CE4E5B9ull;
  x ^= x >> 29;
  return static_cast<double>(x % 2000001) / 1e6 - 1.0;
}

// Same pattern as `a`, random off-diagonal entries and a dominant diagonal.
SparseMatrix randomize(SparseMatrix a) {
  for (Index r = 0; r < a.rows(); ++r) {
    double off = 0.0;
    Index diag = -1;
    for (Index e = a.offsets[r]; e < a.offsets[r + 1]; ++e) {
      if (a.cols[e] == a.row_global[r]) {
        diag = e;
        continue;
      }
      a.values[e] = hashed(a.row_global[r], a.cols[e]);
      off += std::abs(a.values[e]);
    }
    a.values[diag] = off + 1.0 + std::abs(hashed(a.row_global[r], -1));
  }
  return a;
}

std::vector<double> inner_values(const LocalDomain& d, const std::function<double(Index, const Vec3&)>& f) {
  std::vector<double> v(d.n_inner);
  for (Index i = 0; i < d.n_inner; ++i) v[i] = f(d.slot_global[i], d.slot_center[i]);
  return v;
}

// Matrix-free reference: applies ghost filling, node interpolation, diamond gradients and
// face fluxes (zero on non-Dirichlet boundary faces) to the inner values `x`.
std::vector<double> operator_oracle(const LocalDomain& d, const BoundarySpec& bc, const std::vector<double>& x) {
  CellField u(d);
  std::copy(x.begin(), x.end(), u.values.begin());
  apply_boundary(d, bc, u);
  const FaceVectors fg = face_gradient(d, u, node_interpolate(d, u, build_node_weights(d)));
  std::vector<double> dk(d.faces.size(), 1.0);
  for (std::size_t k = 0; k < d.faces.size(); ++k) {
    if (d.faces[k].boundary && bc.at(d.faces[k].patch).kind != BoundaryKind::Dirichlet) dk[k] = 0.0;
  }
  const CellField r = diffusive_flux(d, fg, dk);
  std::vector<double> out(d.n_inner);
  for (Index i = 0; i < d.n_inner; ++i) out[i] = r(i) / d.cell_volume[i];
  return out;
}

std::vector<std::vector<double>> dense(const GlobalMatrix& g) {
  std::vector<std::vector<double>> m(g.size, std::vector<double>(g.size, 0.0));
  for (Index r = 0; r < g.size; ++r) {
    for (Index e = g.offsets[r]; e < g.offsets[r + 1]; ++e) m[r][g.cols[e]] += g.values[e];
  }
  return m;
}

GlobalMatrix gathered_poisson(const Mesh& m, int k, const std::function<BoundarySpec(const LocalDomain&)>& bcf,
                              std::vector<double>* shift = nullptr) {
  const Distributed d = distribute(m, k);
  GlobalMatrix out;
  on_partitions(d, [&](const Partition& p) {
    const PoissonSystem sys = assemble_poisson(p.domain, build_node_weights(p.domain), bcf(p.domain));
    GlobalMatrix g = gather_matrix(p.transport, sys.matrix);
    auto s = gather_vector(p.transport, sys.matrix, sys.shift);
    if (p.transport.rank() == 0) {
      out = std::move(g);
      if (shift) *shift = std::move(s);
    }
  });
  return out;
}

}  // namespace

TEST_CASE("assembled rows agree with the matrix-free operator") {
  const Mesh m = generate_box(unit_cube(4, 0.25));
  const Distributed d = distribute(m, 1);
  const LocalDomain& dom = d.domains[0];
  const BoundarySpec bc = BoundarySpec::from_names(
      dom.patch_names, {{"in", BoundaryCondition::dirichlet([](const Vec3& x) { return 1.0 + x.y; })},
                        {"upper", BoundaryCondition::dirichlet(-2.0)}});
  const PoissonSystem sys = assemble_poisson(dom, build_node_weights(dom), bc);
  auto gen = rng(9);
  std::uniform_real_distribution<double> dist(-1.0, 1.0);
  for (int trial = 0; trial < 3; ++trial) {
    std::vector<double> x(dom.n_inner);
    for (double& v : x) v = dist(gen);
    const auto ref = operator_oracle(dom, bc, x);
    std::vector<double> ax(dom.n_inner);
    on_partitions(d, [&](const Partition& p) { spmv(p, sys.matrix, x, ax); });
    for (Index i = 0; i < dom.n_inner; ++i) {
      CHECK(ax[i] + sys.shift[i] == doctest::Approx(ref[i]).epsilon(1e-11).scale(1.0));
    }
  }
}

TEST_CASE("two-tetra matrix equals the dense diamond-formula oracle") {
  const Mesh m = mesh_from(kTwoTetMsh);
  const Distributed d = distribute(m, 1);
  const LocalDomain& dom = d.domains[0];
  const BoundarySpec neumann;  // unnamed faces default to zero flux
  const NodeLSWeights w = build_node_weights(dom);
  const PoissonSystem sys = assemble_poisson(dom, w, neumann);
  // Node value coefficients per cell: ghosts mirror their owner.
  auto node_coeffs = [&](Index node) {
    std::array<double, 2> c{0.0, 0.0};
    for (Index e = dom.node_stencil.begin(node); e < dom.node_stencil.end(node); ++e) {
      Index s = dom.node_stencil.slots[e];
      if (!dom.is_cell(s)) s = dom.ghost_owner[s - dom.ghost_begin()];
      c[dom.slot_global[s]] += w.alpha[e];
    }
    return c;
  };
  double oracle[2][2] = {};
  for (const Face& f : m.faces) {
    if (f.is_boundary()) continue;
    const DiamondCell& dm = m.diamonds[f.id];
    const double k = 1.0 / (3.0 * dm.volume);
    const double ta = dot(dm.normal_brdl, f.normal) * f.area;
    const double tb = dot(dm.normal_alcr, f.normal) * f.area;
    const double tr = f.area * f.area;
    // Local node ids coincide with global ids on a single partition.
    const auto pa = node_coeffs(dm.node_a), pb = node_coeffs(dm.node_b), pc = node_coeffs(dm.node_c);
    double flux[2];
    for (int j = 0; j < 2; ++j) {
      flux[j] = k * (ta * pa[j] - ta * pc[j] + tb * pb[j] - tb * pc[j] + tr * (j == f.right) - tr * (j == f.left));
    }
    for (int j = 0; j < 2; ++j) {
      oracle[f.left][j] += flux[j] / m.cells[f.left].volume;
      oracle[f.right][j] -= flux[j] / m.cells[f.right].volume;
    }
  }
  REQUIRE(sys.matrix.rows() == 2);
  for (Index r = 0; r < 2; ++r) {
    REQUIRE(sys.matrix.offsets[r + 1] - sys.matrix.offsets[r] == 2);
    for (Index e = sys.matrix.offsets[r]; e < sys.matrix.offsets[r + 1]; ++e) {
      CHECK(sys.matrix.values[e] == doctest::Approx(oracle[r][sys.matrix.cols[e]]).epsilon(1e-13));
    }
    CHECK(sys.shift[r] == 0.0);
  }
  // Rows of a pure-Neumann operator annihilate constants.
  CHECK(std::abs(oracle[0][0] + oracle[0][1]) < 1e-12 * std::abs(oracle[0][0]));
}

TEST_CASE("pure Neumann cube has constants in its null space") {
  const Mesh m = generate_box(unit_cube(5, 0.2));
  const GlobalMatrix g = gathered_poisson(m, 2, [](const LocalDomain& d) {
    return BoundarySpec::all(d.patch_names, BoundaryCondition::neumann());
  });
  const std::vector<double> ones(g.size, 1.0);
  const auto y = multiply(g, ones);
  double anorm = 0.0;
  for (double v : g.values) anorm = std::max(anorm, std::abs(v));
  for (double v : y) CHECK(std::abs(v) <= 1e-10 * anorm);
}

TEST_CASE("linear potential satisfies the assembled Dirichlet system exactly") {
  const Mesh m = generate_box(unit_cube(5, 0.25));
  std::vector<double> shift;
  const GlobalMatrix g = gathered_poisson(m, 3, annex_bc, &shift);
  std::vector<double> exact(g.size);
  for (const Cell& c : m.cells) exact[c.id] = 10.0 * (1.0 - c.centroid.x);
  const auto y = multiply(g, exact);
  double scale = 0.0;
  for (Index r = 0; r < g.size; ++r) scale = std::max(scale, std::abs(shift[r]));
  for (Index r = 0; r < g.size; ++r) CHECK(std::abs(y[r] + shift[r]) <= 1e-10 * scale);
}

TEST_CASE("gathered matrix and spmv are identical for every partition count") {
  const Mesh m = generate_box(unit_cube(6, 0.2));
  const GlobalMatrix serial = gathered_poisson(m, 1, annex_bc);
  std::vector<double> x(m.cells.size());
  for (std::size_t i = 0; i < x.size(); ++i) x[i] = hashed(static_cast<Index>(i), 3);
  for (int k : {2, 4, 8}) {
    CAPTURE(k);
    const GlobalMatrix g = gathered_poisson(m, k, annex_bc);
    REQUIRE(g.size == serial.size);
    CHECK(g.offsets == serial.offsets);
    CHECK(g.cols == serial.cols);
    double diff = 0.0;
    for (std::size_t e = 0; e < g.values.size(); ++e) diff = std::max(diff, std::abs(g.values[e] - serial.values[e]));
    CHECK(diff <= 1e-13);
    const Distributed d = distribute(m, k);
    std::vector<double> y(m.cells.size(), std::nan(""));
    on_partitions(d, [&](const Partition& p) {
      const PoissonSystem sys = assemble_poisson(p.domain, build_node_weights(p.domain), annex_bc(p.domain));
      const SparseMatrix a = randomize(sys.matrix);
      const auto xl = inner_values(p.domain, [&](Index gid, const Vec3&) { return x[gid]; });
      std::vector<double> yl(p.domain.n_inner);
      spmv(p, a, xl, yl);
      for (Index i = 0; i < p.domain.n_inner; ++i) y[p.domain.slot_global[i]] = yl[i];
    });
    // Random values on the same pattern, checked against the serial gathered product.
    std::vector<double> yref;
    const Distributed d1 = distribute(m, 1);
    on_partitions(d1, [&](const Partition& p) {
      const PoissonSystem sys = assemble_poisson(p.domain, build_node_weights(p.domain), annex_bc(p.domain));
      yref.resize(p.domain.n_inner);
      spmv(p, randomize(sys.matrix), x, yref);
    });
    double dy = 0.0;
    for (std::size_t i = 0; i < y.size(); ++i) dy = std::max(dy, std::abs(y[i] - yref[i]));
    CHECK(dy <= 1e-13);
  }
}

TEST_CASE("spmv trivial cases and dimension checks") {
  const Mesh m = generate_box(unit_cube(3));
  const Distributed d = distribute(m, 2);
  std::atomic<int> bad{0};
  on_partitions(d, [&](const Partition& p) {
    const SparseMatrix id = diagonal_matrix(p.domain, [](Index) { return 1.0; });
    const auto x = inner_values(p.domain, [](Index g, const Vec3&) { return 0.5 * g; });
    std::vector<double> y(x.size());
    spmv(p, id, x, y);
    if (y != x) ++bad;
    std::vector<double> zero(x.size(), 0.0);
    spmv(p, id, zero, y);
    if (std::any_of(y.begin(), y.end(), [](double v) { return v != 0.0; })) ++bad;
    std::vector<double> short_y(x.size() + 1);
    try {
      spmv(p, id, x, short_y);
      ++bad;
    } catch (const SolverError&) {
    }
  });
  CHECK(bad == 0);
}

TEST_CASE("FGMRES trivial systems") {
  const Mesh m = generate_box(unit_cube(3));
  const Distributed d = distribute(m, 2);
  std::atomic<int> bad{0};
  on_partitions(d, [&](const Partition& p) {
    const auto b = inner_values(p.domain, [](Index g, const Vec3&) { return 1.0 + g % 5; });
    SolverConfig cfg;
    cfg.preconditioner = PreconditionerKind::None;
    const SparseMatrix id = diagonal_matrix(p.domain, [](Index) { return 1.0; });
    const SolveResult r = fgmres(p, id, b, cfg);
    if (!r.converged || r.iterations != 1) ++bad;
    for (std::size_t i = 0; i < b.size(); ++i) {
      if (std::abs(r.x[i] - b[i]) > 1e-14) ++bad;
    }
    // Jacobi inverts a diagonal matrix exactly.
    cfg.preconditioner = PreconditionerKind::Jacobi;
    const SparseMatrix diag = diagonal_matrix(p.domain, [](Index g) { return 1.0 + 0.25 * g; });
    const SolveResult rj = fgmres(p, diag, b, cfg);
    if (!rj.converged || rj.iterations != 1) ++bad;
    for (std::size_t i = 0; i < b.size(); ++i) {
      if (std::abs(rj.x[i] * (1.0 + 0.25 * p.domain.slot_global[i]) - b[i]) > 1e-12) ++bad;
    }
    // Zero right-hand side.
    const SolveResult rz = fgmres(p, diag, std::vector<double>(b.size(), 0.0), cfg);
    if (!rz.converged || rz.iterations != 0) ++bad;
  });
  CHECK(bad == 0);
}

TEST_CASE("preconditioners apply the expected operators") {
  const Mesh m = generate_box(unit_cube(3, 0.2));
  const Distributed d = distribute(m, 1);
  const LocalDomain& dom = d.domains[0];
  const PoissonSystem sys = assemble_poisson(dom, build_node_weights(dom), annex_bc(dom));
  const std::vector<double> r = inner_values(dom, [](Index g, const Vec3&) { return std::sin(0.3 * g); });
  std::vector<double> z(r.size());
  make_preconditioner(PreconditionerKind::None, sys.matrix)->apply(r, z);
  CHECK(z == r);
  make_preconditioner(PreconditionerKind::Jacobi, sys.matrix)->apply(r, z);
  for (Index i = 0; i < dom.n_inner; ++i) CHECK(z[i] == doctest::Approx(r[i] / sys.matrix.diagonal(i)));
  // Zero fill on a single block: the factors reproduce A on its own pattern.
  std::vector<double> z2(r.size());
  make_preconditioner(PreconditionerKind::Ilu0, sys.matrix)->apply(r, z);
  make_preconditioner(PreconditionerKind::BlockJacobi, sys.matrix)->apply(r, z2);
  CHECK(z == z2);
  CHECK(parse_preconditioner("ilu0") == PreconditionerKind::Ilu0);
  CHECK(to_string(PreconditionerKind::BlockJacobi) == "block-jacobi");
  CHECK_THROWS_AS(parse_preconditioner("gamg"), ConfigError);
  SparseMatrix broken = diagonal_matrix(dom, [](Index) { return 1.0; });
  broken.values[0] = 0.0;
  CHECK_THROWS_AS(make_preconditioner(PreconditionerKind::Jacobi, broken), SolverError);
  CHECK_THROWS_AS(make_preconditioner(PreconditionerKind::Ilu0, broken), SolverError);
}

TEST_CASE("random diagonally dominant systems match the dense direct solve") {
  const Mesh m = generate_box(unit_cube(4, 0.2));
  for (int k : {1, 3}) {
    for (auto pc : {PreconditionerKind::None, PreconditionerKind::Jacobi, PreconditionerKind::Ilu0}) {
      CAPTURE(k);
      CAPTURE(to_string(pc));
      const Distributed d = distribute(m, k);
      std::vector<double> x(m.cells.size()), ref;
      on_partitions(d, [&](const Partition& p) {
        const PoissonSystem sys = assemble_poisson(p.domain, build_node_weights(p.domain), annex_bc(p.domain));
        const SparseMatrix a = randomize(sys.matrix);
        const auto b = inner_values(p.domain, [](Index g, const Vec3& c) { return std::cos(g) + c.z; });
        SolverConfig cfg;
        cfg.preconditioner = pc;
        cfg.restart = 10;
        const SolveResult r = require_converged(fgmres(p, a, b, cfg));
        CHECK(r.relative_residual <= 1e-10);
        for (Index i = 0; i < p.domain.n_inner; ++i) x[p.domain.slot_global[i]] = r.x[i];
        const GlobalMatrix g = gather_matrix(p.transport, a);
        const auto bg = gather_vector(p.transport, a, b);
        if (p.transport.rank() == 0) ref = direct_dense(g, bg);
      });
      double diff = 0.0;
      for (std::size_t i = 0; i < x.size(); ++i) diff = std::max(diff, std::abs(x[i] - ref[i]));
      CHECK(diff <= 1e-8);
    }
  }
}

TEST_CASE("preconditioner strength orders the iteration counts") {
  const Mesh m = generate_box(unit_cube(8, 0.25));
  const Distributed d = distribute(m, 1);
  std::map<PreconditionerKind, int> iters;
  on_partitions(d, [&](const Partition& p) {
    const PoissonSystem sys = assemble_poisson(p.domain, build_node_weights(p.domain), annex_bc(p.domain));
    std::vector<double> b(sys.shift.size());
    for (std::size_t i = 0; i < b.size(); ++i) b[i] = -sys.shift[i];
    for (auto pc : {PreconditionerKind::None, PreconditionerKind::Jacobi, PreconditionerKind::Ilu0}) {
      SolverConfig cfg;
      cfg.preconditioner = pc;
      iters[pc] = require_converged(fgmres(p, sys.matrix, b, cfg)).iterations;
    }
  });
  MESSAGE("iterations none/jacobi/ilu0: ", iters[PreconditionerKind::None], "/",
          iters[PreconditionerKind::Jacobi], "/", iters[PreconditionerKind::Ilu0]);
  CHECK(iters[PreconditionerKind::Ilu0] <= iters[PreconditionerKind::Jacobi]);
  CHECK(iters[PreconditionerKind::Jacobi] <= iters[PreconditionerKind::None]);
}

TEST_CASE("non-convergence is reported with its history") {
  const Mesh m = generate_box(unit_cube(5, 0.2));
  const Distributed d = distribute(m, 1);
  on_partitions(d, [&](const Partition& p) {
    const PoissonSystem sys = assemble_poisson(p.domain, build_node_weights(p.domain), annex_bc(p.domain));
    std::vector<double> b(sys.shift.size());
    for (std::size_t i = 0; i < b.size(); ++i) b[i] = -sys.shift[i];
    SolverConfig cfg;
    cfg.preconditioner = PreconditionerKind::None;
    cfg.max_iter = 3;
    const SolveResult r = fgmres(p, sys.matrix, b, cfg);
    CHECK_FALSE(r.converged);
    CHECK(r.iterations == 3);
    CHECK(r.history.size() == 3);
    CHECK(r.relative_residual > cfg.tol);
    CHECK_THROWS_WITH_AS(require_converged(r), doctest::Contains("residual history"), SolverError);
  });
  SolverConfig bad;
  bad.tol = 0.0;
  CHECK_THROWS_AS(bad.validate(), ConfigError);
  bad.tol = 1e-8;
  bad.restart = 0;
  CHECK_THROWS_AS(bad.validate(), ConfigError);
  CHECK(parse_solver("direct-dense") == SolverMethod::DirectDense);
  CHECK_THROWS_AS(parse_solver("mumps"), ConfigError);
}

TEST_CASE("dense direct solver") {
  GlobalMatrix one;
  one.size = 1;
  one.offsets = {0, 1};
  one.cols = {0};
  one.values = {2.0};
  CHECK(direct_dense(one, std::vector<double>{4.0}) == std::vector<double>{2.0});

  GlobalMatrix id;
  id.size = 3;
  id.offsets = {0, 1, 2, 3};
  id.cols = {0, 1, 2};
  id.values = {1.0, 1.0, 1.0};
  CHECK(direct_dense(id, std::vector<double>{1, 2, 3}) == std::vector<double>{1, 2, 3});

  GlobalMatrix singular;
  singular.size = 2;
  singular.offsets = {0, 2, 4};
  singular.cols = {0, 1, 0, 1};
  singular.values = {1.0, 2.0, 2.0, 4.0};
  CHECK_THROWS_AS(direct_dense(singular, std::vector<double>{1, 1}), SolverError);

  GlobalMatrix huge;
  huge.size = kDirectDenseLimit + 1;
  CHECK_THROWS_AS(direct_dense(huge, std::vector<double>(huge.size)), SolverError);
}

TEST_CASE("direct and iterative solutions of the cube problem agree") {
  const Mesh m = generate_box(unit_cube(5, 0.2));
  const Distributed d = distribute(m, 2);
  std::atomic<int> bad{0};
  on_partitions(d, [&](const Partition& p) {
    const PoissonSystem sys = assemble_poisson(p.domain, build_node_weights(p.domain),
                                               BoundarySpec::from_names(p.domain.patch_names,
                                                   {{"in", BoundaryCondition::dirichlet(1.0)},
                                                    {"back", BoundaryCondition::dirichlet(-1.0)}}));
    std::vector<double> b(sys.shift.size());
    for (std::size_t i = 0; i < b.size(); ++i) b[i] = std::sin(3.0 * p.domain.slot_center[i].y) - sys.shift[i];
    SolverConfig cfg;
    const SolveResult it = require_converged(solve(p, sys.matrix, b, cfg));
    cfg.method = SolverMethod::DirectDense;
    const SolveResult dd = solve(p, sys.matrix, b, cfg);
    if (dd.relative_residual > 1e-10) ++bad;
    for (std::size_t i = 0; i < b.size(); ++i) {
      if (std::abs(it.x[i] - dd.x[i]) > 1e-8) ++bad;
    }
  });
  CHECK(bad == 0);
}

TEST_CASE("Poisson rows carry a tetrahedral-scale number of nonzeros") {
  const Mesh m = generate_box(unit_cube(10, 0.2));
  const GlobalMatrix g = gathered_poisson(m, 4, annex_bc);
  const double per_row = static_cast<double>(g.nonzeros()) / static_cast<double>(g.size);
  MESSAGE("nonzeros per row: ", per_row);
  CHECK(per_row >= 40.0);
  CHECK(per_row <= 120.0);
}

TEST_CASE("MatrixMarket export") {
  GlobalMatrix g;
  g.size = 2;
  g.offsets = {0, 2, 3};
  g.cols = {0, 1, 1};
  g.values = {4.0, -1.5, 0.25};
  std::ostringstream out;
  write_matrix_market(g, out);
  CHECK(out.str() == "%%MatrixMarket matrix coordinate real general\n2 2 3\n1 1 4\n1 2 -1.5\n2 2 0.25\n");
}

TEST_CASE("linear potential solution is unchanged by node renumbering") {
  std::stringstream ss;
  write_box_msh(unit_cube(4, 0.2), ss);
  const std::string text = ss.str();
  // Reverse node numbering in both the node and element sections.
  const std::size_t n_nodes = generate_box(unit_cube(4, 0.2)).nodes.size();
  std::istringstream in(text);
  std::ostringstream out;
  std::string line;
  int section = 0;
  while (std::getline(in, line)) {
    if (line == "$Nodes") section = 1;
    else if (line == "$Elements") section = 2;
    else if (line.rfind("$End", 0) == 0) section = 0;
    std::istringstream ls(line);
    std::vector<std::string> tok;
    for (std::string t; ls >> t;) tok.push_back(t);
    auto flip = [&](const std::string& s) { return std::to_string(n_nodes + 1 - std::stoul(s)); };
    if (section == 1 && tok.size() == 4) {
      tok[0] = flip(tok[0]);
    } else if (section == 2 && tok.size() > 3) {
      const std::size_t first = 3 + std::stoul(tok[2]);
      for (std::size_t i = first; i < tok.size(); ++i) tok[i] = flip(tok[i]);
    }
    for (std::size_t i = 0; i < tok.size(); ++i) out << (i ? " " : "") << tok[i];
    if (tok.empty()) out << line;
    out << '\n';
  }
  auto solve_cube = [](const Mesh& mesh) {
    const Distributed d = distribute(mesh, 2);
    std::vector<double> x(mesh.cells.size());
    on_partitions(d, [&](const Partition& p) {
      const PoissonSystem sys = assemble_poisson(p.domain, build_node_weights(p.domain), annex_bc(p.domain));
      std::vector<double> b(sys.shift.size());
      for (std::size_t i = 0; i < b.size(); ++i) b[i] = -sys.shift[i];
      const SolveResult r = require_converged(fgmres(p, sys.matrix, b, SolverConfig{}));
      for (Index i = 0; i < p.domain.n_inner; ++i) x[p.domain.slot_global[i]] = r.x[i];
    });
    return x;
  };
  const Mesh a = mesh_from(text);
  const Mesh b = mesh_from(out.str());
  REQUIRE(a.cells.size() == b.cells.size());
  const auto xa = solve_cube(a), xb = solve_cube(b);
  for (std::size_t c = 0; c < xa.size(); ++c) {
    CHECK(norm(a.cells[c].centroid - b.cells[c].centroid) < 1e-14);
    CHECK(std::abs(xa[c] - xb[c]) <= 1e-8);
  }
}
