#include "fvdom/bench.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <ostream>

#include "fvdom/errors.hpp"
#include "fvdom/exchange.hpp"

namespace fvdom {

namespace {

double now() {
  return std::chrono::duration<double>(std::chrono::steady_clock::now().time_since_epoch()).count();
}

struct Decomposition {
  std::vector<LocalDomain> domains;
  std::vector<CommPlan> plans;
};

Decomposition decompose(const Mesh& mesh, int parts) {
  Decomposition d;
  d.domains = build_local_domains(mesh, partition_mesh(mesh, parts));
  d.plans = build_comm_plans(d.domains);
  return d;
}

void launch(int workers, bool sockets, const WorkerFn& fn) {
  if (sockets) run_workers_socket(workers, fn);
  else run_workers(workers, fn);
}

// Runs fn warmup + iterations times; each timed window closes with a barrier so that it
// measures wall time of the whole collective step even when workers share cores. Returns
// the per-iteration maxima over ranks of the timed iterations (identical on every rank).
template <class F>
std::vector<double> time_collective(Transport& t, int warmup, int iterations, F&& fn) {
  std::vector<double> out;
  for (int it = 0; it < warmup + iterations; ++it) {
    barrier(t);
    const double start = now();
    fn();
    barrier(t);
    const double elapsed = allreduce_max(t, now() - start);
    if (it >= warmup) out.push_back(elapsed);
  }
  return out;
}

double linear_data(const Vec3& x) { return 10.0 * (1.0 - x.x); }

}  // namespace

double median(std::vector<double> values) {
  if (values.empty()) return 0.0;
  std::sort(values.begin(), values.end());
  const std::size_t n = values.size();
  return n % 2 ? values[n / 2] : 0.5 * (values[n / 2 - 1] + values[n / 2]);
}

std::vector<OperatorTiming> bench_operators(const Mesh& mesh, const BenchSettings& s) {
  if (s.iterations < 1 || s.warmup < 0) throw ConfigError("bench needs iterations >= 1 and warmup >= 0");
  std::vector<OperatorTiming> rows;
  for (int k : s.workers) {
    if (k < 1) throw ConfigError("worker counts must be >= 1");
    const Decomposition dec = decompose(mesh, k);
    OperatorTiming row;
    row.workers = k;
    launch(k, s.sockets, [&](Transport& t) {
      const LocalDomain& d = dec.domains[t.rank()];
      const CommPlan& plan = dec.plans[t.rank()];
      const GradStencilCoeffs coeffs = build_gradient_coeffs(d);
      const NodeLSWeights weights = build_node_weights(d);
      CellField u(d, 1);
      for (Index i = 0; i < d.slot_count(); ++i) {
        const Vec3& x = d.slot_center[i];
        u(i) = std::sin(3.0 * x.x) + x.y * x.z;
      }
      CellField grad(d, 3);
      NodeField nodes = node_interpolate(d, u, weights);

      const auto cg = time_collective(t, s.warmup, s.iterations, [&] { cell_gradient(d, u, coeffs, grad); });
      const auto ls = time_collective(t, s.warmup, s.iterations, [&] { nodes = node_interpolate(d, u, weights); });
      const auto fg = time_collective(t, s.warmup, s.iterations, [&] { (void)face_gradient(d, u, nodes); });
      const auto hx = time_collective(t, s.warmup, s.iterations, [&] { exchange_halo(d, plan, t, u); });

      double payload = 0.0;
      for (const auto& cells : plan.send_cells) payload += static_cast<double>(cells.size());
      payload = allreduce_max(t, payload);
      if (t.rank() == 0) {
        row.cell_gradient = median(cg);
        row.ls_interpolation = median(ls);
        row.face_gradient = median(fg);
        row.halo_exchange = median(hx);
        row.halo_payload = payload;
      }
    });
    rows.push_back(row);
  }
  const auto base = std::find_if(rows.begin(), rows.end(), [](const OperatorTiming& r) { return r.workers == 1; });
  for (OperatorTiming& r : rows) {
    if (base == rows.end()) {
      r.speedup_cell_gradient = r.speedup_face_gradient = r.speedup_ls_interpolation = std::nan("");
      continue;
    }
    r.speedup_cell_gradient = base->cell_gradient / r.cell_gradient;
    r.speedup_face_gradient = base->face_gradient / r.face_gradient;
    r.speedup_ls_interpolation = base->ls_interpolation / r.ls_interpolation;
  }
  return rows;
}

void write_operator_csv(const std::vector<OperatorTiming>& rows, std::ostream& out) {
  out << "workers,cell_gradient_s,face_gradient_s,ls_interpolation_s,halo_exchange_s,halo_payload_doubles,"
         "speedup_cell_gradient,speedup_face_gradient,speedup_ls_interpolation\n";
  for (const OperatorTiming& r : rows) {
    out << r.workers << ',' << r.cell_gradient << ',' << r.face_gradient << ',' << r.ls_interpolation << ','
        << r.halo_exchange << ',' << r.halo_payload << ',' << r.speedup_cell_gradient << ','
        << r.speedup_face_gradient << ',' << r.speedup_ls_interpolation << '\n';
  }
}

std::vector<SolveTiming> bench_assembly_and_solve(const Mesh& mesh, const std::vector<int>& workers,
                                                  const std::vector<PreconditionerKind>& preconditioners,
                                                  const SolverConfig& solver) {
  std::vector<SolveTiming> rows;
  GlobalMatrix reference;
  bool have_reference = false;
  std::vector<int> sweep = workers;
  // The single-worker matrix is the invariance reference even when 1 is not in the sweep.
  if (std::find(sweep.begin(), sweep.end(), 1) == sweep.end()) sweep.insert(sweep.begin(), 1);

  for (int k : sweep) {
    const bool report = std::find(workers.begin(), workers.end(), k) != workers.end();
    const Decomposition dec = decompose(mesh, k);
    std::vector<SolveTiming> local_rows;
    run_workers(k, [&](Transport& t) {
      const LocalDomain& d = dec.domains[t.rank()];
      const Partition part{d, dec.plans[t.rank()], t};
      const BoundarySpec bc = BoundarySpec::all(d.patch_names, BoundaryCondition::dirichlet(linear_data));
      const NodeLSWeights weights = build_node_weights(d);

      barrier(t);
      double start = now();
      const PoissonSystem sys = assemble_poisson(d, weights, bc);
      const double assembly = allreduce_max(t, now() - start);

      const GlobalMatrix g = gather_matrix(t, sys.matrix);
      double mismatch = 0.0;
      if (t.rank() == 0) {
        if (!have_reference) {
          reference = g;
          have_reference = true;
        } else if (g.offsets != reference.offsets || g.cols != reference.cols) {
          mismatch = 1.0;
        } else {
          double scale = 0.0;
          for (double v : reference.values) scale = std::max(scale, std::abs(v));
          for (std::size_t i = 0; i < g.values.size(); ++i) {
            if (std::abs(g.values[i] - reference.values[i]) > 1e-12 * scale) mismatch = 1.0;
          }
        }
      }
      if (allreduce_max(t, mismatch) > 0.0) {
        throw NumericalError("assembled matrix at " + std::to_string(k) +
                             " workers differs from the single-worker matrix");
      }
      const double nnz = allreduce_sum(t, static_cast<double>(sys.matrix.nonzeros()));
      const double nrows = allreduce_sum(t, static_cast<double>(sys.matrix.rows()));

      std::vector<double> b(sys.shift.size());
      for (std::size_t i = 0; i < b.size(); ++i) b[i] = -sys.shift[i];
      for (PreconditionerKind kind : preconditioners) {
        barrier(t);
        start = now();
        const auto pc = make_preconditioner(kind, sys.matrix);
        const SolveResult r = fgmres(part, sys.matrix, *pc, b, solver);
        const double elapsed = allreduce_max(t, now() - start);
        double err = 0.0;
        for (Index i = 0; i < d.n_inner; ++i) err = std::max(err, std::abs(r.x[i] - linear_data(d.slot_center[i])));
        err = allreduce_max(t, err);
        if (t.rank() == 0) {
          SolveTiming row;
          row.workers = k;
          row.preconditioner = to_string(kind);
          row.assembly = assembly;
          row.solve = elapsed;
          row.iterations = r.iterations;
          row.relative_residual = r.relative_residual;
          row.max_error = err;
          row.rows = static_cast<Index>(nrows);
          row.nonzeros = static_cast<Index>(nnz);
          row.nonzeros_per_row = nnz / nrows;
          local_rows.push_back(row);
        }
      }
    });
    if (report) rows.insert(rows.end(), local_rows.begin(), local_rows.end());
  }
  return rows;
}

void write_solve_csv(const std::vector<SolveTiming>& rows, std::ostream& out) {
  out << "workers,preconditioner,assembly_s,solve_s,iterations,relative_residual,max_error,rows,nonzeros,"
         "nonzeros_per_row\n";
  for (const SolveTiming& r : rows) {
    out << r.workers << ',' << r.preconditioner << ',' << r.assembly << ',' << r.solve << ',' << r.iterations
        << ',' << r.relative_residual << ',' << r.max_error << ',' << r.rows << ',' << r.nonzeros << ','
        << r.nonzeros_per_row << '\n';
  }
}

}  // namespace fvdom
