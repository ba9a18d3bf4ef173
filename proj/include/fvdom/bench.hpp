#pragma once

#include <iosfwd>
#include <string>
#include <vector>

#include "fvdom/linear_system.hpp"
#include "fvdom/mesh.hpp"

namespace fvdom {

struct BenchSettings {
  std::vector<int> workers{1, 2, 4};
  int iterations = 20;  // timed repetitions, median reported
  int warmup = 3;
  bool sockets = false;  // socketpair transport instead of in-process mailboxes
};

// Median seconds per call (maximum over workers of each repetition).
struct OperatorTiming {
  int workers = 1;
  double cell_gradient = 0.0;
  double face_gradient = 0.0;
  double ls_interpolation = 0.0;
  double halo_exchange = 0.0;
  double halo_payload = 0.0;  // largest per-worker send volume in doubles
  double speedup_cell_gradient = 1.0;
  double speedup_face_gradient = 1.0;
  double speedup_ls_interpolation = 1.0;
};

std::vector<OperatorTiming> bench_operators(const Mesh& mesh, const BenchSettings& settings);
void write_operator_csv(const std::vector<OperatorTiming>& rows, std::ostream& out);

struct SolveTiming {
  int workers = 1;
  std::string preconditioner;
  double assembly = 0.0;  // seconds, max over workers
  double solve = 0.0;
  int iterations = 0;
  double relative_residual = 0.0;
  double max_error = 0.0;  // against the linear boundary data
  Index rows = 0;
  Index nonzeros = 0;
  double nonzeros_per_row = 0.0;
};

// Poisson problem with Dirichlet data 10(1 - x) on every boundary patch. The gathered
// matrix at each worker count is checked against the single-worker one before timing;
// a mismatch throws NumericalError.
std::vector<SolveTiming> bench_assembly_and_solve(const Mesh& mesh, const std::vector<int>& workers,
                                                  const std::vector<PreconditionerKind>& preconditioners,
                                                  const SolverConfig& solver);
void write_solve_csv(const std::vector<SolveTiming>& rows, std::ostream& out);

double median(std::vector<double> values);

}  // namespace fvdom
