#pragma once

#include <functional>
#include <iosfwd>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "fvdom/fv_ops.hpp"

namespace fvdom {

// One partition's row block of a global sparse matrix. Rows are the inner cells in slot
// order; columns are global cell ids (ascending, unique per row) with the matching local
// slot (inner or halo) resolved once at assembly time.
struct SparseMatrix {
  std::vector<Index> row_global;  // global id of each local row
  std::vector<Index> offsets{0};
  std::vector<Index> cols;        // global column ids
  std::vector<Index> local_cols;  // slot of each column in the owning LocalDomain
  std::vector<double> values;

  Index rows() const { return static_cast<Index>(offsets.size()) - 1; }
  Index nonzeros() const { return static_cast<Index>(values.size()); }
  double diagonal(Index row) const;
};

// Discrete Laplacian rows (1/mu_i) sum_faces grad P_ij . n_ij |sigma_ij| with the diamond
// gradient, node values expanded through the least-squares weights and ghost values
// eliminated through the boundary relations. Solving A P = f - shift gives the cell values.
struct PoissonSystem {
  SparseMatrix matrix;
  std::vector<double> shift;  // per local row
};

PoissonSystem assemble_poisson(const LocalDomain& domain, const NodeLSWeights& weights,
                               const BoundarySpec& bc);

// y = A x on inner rows; x holds inner values and is halo-exchanged internally (collective).
class DistributedOperator {
 public:
  DistributedOperator(const Partition& part, const SparseMatrix& matrix);
  void apply(std::span<const double> x, std::span<double> y);
  const SparseMatrix& matrix() const { return matrix_; }
  const Partition& partition() const { return part_; }

 private:
  Partition part_;
  const SparseMatrix& matrix_;
  CellField scratch_;
};

void spmv(const Partition& part, const SparseMatrix& a, std::span<const double> x, std::span<double> y);

// Global dot product: ordered local sum followed by the deterministic reduction.
double dot(Transport& t, std::span<const double> a, std::span<const double> b);

enum class PreconditionerKind { None, Jacobi, BlockJacobi, Ilu0 };
PreconditionerKind parse_preconditioner(const std::string& name);
std::string to_string(PreconditionerKind kind);

// z = M^-1 r on the local row block.
class Preconditioner {
 public:
  virtual ~Preconditioner() = default;
  virtual void apply(std::span<const double> r, std::span<double> z) const = 0;
};

// Jacobi uses the diagonal; block-jacobi and ilu0 both factor the partition's own row
// block with zero fill and ignore couplings to other partitions.
std::unique_ptr<Preconditioner> make_preconditioner(PreconditionerKind kind, const SparseMatrix& a);

enum class SolverMethod { Fgmres, DirectDense };
SolverMethod parse_solver(const std::string& name);

struct SolverConfig {
  SolverMethod method = SolverMethod::Fgmres;
  PreconditionerKind preconditioner = PreconditionerKind::Ilu0;
  int restart = 30;
  double tol = 1e-10;
  int max_iter = 5000;

  void validate() const;
};

struct SolveResult {
  std::vector<double> x;  // inner block
  int iterations = 0;
  double relative_residual = 0.0;  // recomputed as |b - A x| / |b|
  std::vector<double> history;     // Arnoldi estimate per iteration
  bool converged = false;
  std::string message;
};

// Right-preconditioned flexible GMRES(m) with modified Gram-Schmidt (collective).
SolveResult fgmres(const Partition& part, const SparseMatrix& a, std::span<const double> b,
                   const SolverConfig& config, std::span<const double> x0 = {});
// Same with a preconditioner built once by the caller (config.preconditioner is ignored).
SolveResult fgmres(const Partition& part, const SparseMatrix& a, const Preconditioner& pc,
                   std::span<const double> b, const SolverConfig& config, std::span<const double> x0 = {});

// Throws SolverError describing the failure when `r` did not converge.
const SolveResult& require_converged(const SolveResult& r);

// Whole matrix in global row order.
struct GlobalMatrix {
  Index size = 0;
  std::vector<Index> offsets{0};
  std::vector<Index> cols;
  std::vector<double> values;

  Index nonzeros() const { return static_cast<Index>(values.size()); }
};

// Collective; the result is complete on rank 0 and empty elsewhere.
GlobalMatrix gather_matrix(Transport& t, const SparseMatrix& a);
// Collective; rank 0 receives the full vector indexed by global row.
std::vector<double> gather_vector(Transport& t, const SparseMatrix& a, std::span<const double> local);

std::vector<double> multiply(const GlobalMatrix& a, std::span<const double> x);

inline constexpr Index kDirectDenseLimit = 20000;

// Dense LU with partial pivoting. Throws SolverError on oversize or singular systems.
std::vector<double> direct_dense(const GlobalMatrix& a, std::span<const double> b);

// Gathers A and b on rank 0, solves densely and scatters the inner block back (collective).
SolveResult solve_direct(const Partition& part, const SparseMatrix& a, std::span<const double> b);

// Dispatches on config.method.
SolveResult solve(const Partition& part, const SparseMatrix& a, std::span<const double> b,
                  const SolverConfig& config);

void write_matrix_market(const GlobalMatrix& a, std::ostream& out);

}  // namespace fvdom
