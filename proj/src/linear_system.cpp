#include "fvdom/linear_system.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <limits>
#include <ostream>
#include <sstream>

#include "fvdom/errors.hpp"

namespace fvdom {

double SparseMatrix::diagonal(Index row) const {
  const Index g = row_global[row];
  const auto b = cols.begin() + offsets[row], e = cols.begin() + offsets[row + 1];
  const auto it = std::lower_bound(b, e, g);
  return it != e && *it == g ? values[it - cols.begin()] : 0.0;
}

// ---------------------------------------------------------------------------------------
// Assembly

namespace {

struct RowBuilder {
  struct Entry {
    Index col;
    Index slot;
    double value;
  };
  std::vector<Entry> entries;
  double shift = 0.0;
};

}  // namespace

PoissonSystem assemble_poisson(const LocalDomain& d, const NodeLSWeights& weights,
                               const BoundarySpec& bc) {
  if (weights.alpha.size() != d.node_stencil.slots.size()) {
    throw SolverError("node weights do not match the domain's node stencils");
  }
  PoissonSystem sys;
  SparseMatrix& a = sys.matrix;
  a.row_global.assign(d.slot_global.begin(), d.slot_global.begin() + d.n_inner);
  sys.shift.assign(d.n_inner, 0.0);

  RowBuilder row;
  auto add_cell = [&](Index slot, double c) { row.entries.push_back({d.slot_global[slot], slot, c}); };
  // Ghost values are affine in their owner cell: u_g = s u_owner + 2 g(p) [Dirichlet].
  auto add_slot = [&](Index slot, double c) {
    if (d.is_cell(slot)) {
      add_cell(slot, c);
      return;
    }
    const Index g = slot - d.ghost_begin();
    const Index owner = d.ghost_owner[g];
    const BoundaryCondition& cond = bc.at(d.ghost_patch[g]);
    if (cond.kind == BoundaryKind::Dirichlet) {
      const Vec3 p = 0.5 * (d.slot_center[owner] + d.slot_center[slot]);
      add_cell(owner, -c);
      row.shift += 2.0 * c * cond.value(p);
    } else {
      add_cell(owner, c);
    }
  };
  auto add_node = [&](Index node, double c) {
    for (Index e = d.node_stencil.begin(node); e < d.node_stencil.end(node); ++e) {
      add_slot(d.node_stencil.slots[e], c * weights.alpha[e]);
    }
  };

  for (Index i = 0; i < d.n_inner; ++i) {
    row.entries.clear();
    row.shift = 0.0;
    for (Index lf : d.cell_faces[i]) {
      const LocalFace& f = d.faces[lf];
      if (f.boundary && bc.at(f.patch).kind != BoundaryKind::Dirichlet) continue;
      const double sign = f.left == i ? 1.0 : -1.0;
      const double scale = sign * f.area / (3.0 * f.diamond_volume * d.cell_volume[i]);
      const double ca = dot(f.normal_brdl, f.normal) * scale;
      const double cb = dot(f.normal_alcr, f.normal) * scale;
      const double cr = f.area * scale;
      add_node(f.nodes[0], ca);
      add_node(f.nodes[1], cb);
      add_node(f.nodes[2], -ca - cb);
      add_slot(f.right, cr);
      add_slot(f.left, -cr);
    }
    std::stable_sort(row.entries.begin(), row.entries.end(),
                     [](const auto& x, const auto& y) { return x.col < y.col; });
    for (std::size_t e = 0; e < row.entries.size();) {
      const Index col = row.entries[e].col;
      double v = 0.0;
      const Index slot = row.entries[e].slot;
      for (; e < row.entries.size() && row.entries[e].col == col; ++e) {
        if (row.entries[e].slot != slot) {
          throw SolverError("column " + std::to_string(col) + " maps to two local slots");
        }
        v += row.entries[e].value;
      }
      a.cols.push_back(col);
      a.local_cols.push_back(slot);
      a.values.push_back(v);
    }
    a.offsets.push_back(static_cast<Index>(a.cols.size()));
    sys.shift[i] = row.shift;
    if (a.diagonal(i) == 0.0) {
      throw SolverError("zero diagonal in row of cell " + std::to_string(d.slot_global[i]));
    }
  }
  return sys;
}

// ---------------------------------------------------------------------------------------
// Products

DistributedOperator::DistributedOperator(const Partition& part, const SparseMatrix& matrix)
    : part_(part), matrix_(matrix), scratch_(part.domain, 1) {
  if (matrix.rows() != part.domain.n_inner) {
    throw SolverError("matrix has " + std::to_string(matrix.rows()) + " rows, partition has " +
                      std::to_string(part.domain.n_inner) + " inner cells");
  }
}

void DistributedOperator::apply(std::span<const double> x, std::span<double> y) {
  const Index n = matrix_.rows();
  if (static_cast<Index>(x.size()) != n || static_cast<Index>(y.size()) != n) {
    throw SolverError("spmv dimension mismatch: rows " + std::to_string(n) + ", x " +
                      std::to_string(x.size()) + ", y " + std::to_string(y.size()));
  }
  std::copy(x.begin(), x.end(), scratch_.values.begin());
  exchange_halo(part_.domain, part_.plan, part_.transport, scratch_);
  for (Index r = 0; r < n; ++r) {
    double s = 0.0;
    for (Index e = matrix_.offsets[r]; e < matrix_.offsets[r + 1]; ++e) {
      s += matrix_.values[e] * scratch_(matrix_.local_cols[e]);
    }
    y[r] = s;
  }
}

void spmv(const Partition& part, const SparseMatrix& a, std::span<const double> x, std::span<double> y) {
  DistributedOperator op(part, a);
  op.apply(x, y);
}

double dot(Transport& t, std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return allreduce_sum(t, s);
}

// ---------------------------------------------------------------------------------------
// Preconditioners

PreconditionerKind parse_preconditioner(const std::string& name) {
  if (name == "none") return PreconditionerKind::None;
  if (name == "jacobi") return PreconditionerKind::Jacobi;
  if (name == "block-jacobi") return PreconditionerKind::BlockJacobi;
  if (name == "ilu0") return PreconditionerKind::Ilu0;
  throw ConfigError("unknown preconditioner '" + name + "' (none, jacobi, block-jacobi, ilu0)");
}

std::string to_string(PreconditionerKind kind) {
  switch (kind) {
    case PreconditionerKind::None: return "none";
    case PreconditionerKind::Jacobi: return "jacobi";
    case PreconditionerKind::BlockJacobi: return "block-jacobi";
    case PreconditionerKind::Ilu0: return "ilu0";
  }
  return "?";
}

namespace {

class IdentityPreconditioner final : public Preconditioner {
 public:
  void apply(std::span<const double> r, std::span<double> z) const override {
    std::copy(r.begin(), r.end(), z.begin());
  }
};

class JacobiPreconditioner final : public Preconditioner {
 public:
  explicit JacobiPreconditioner(const SparseMatrix& a) : inv_(a.rows()) {
    for (Index r = 0; r < a.rows(); ++r) {
      const double d = a.diagonal(r);
      if (d == 0.0) throw SolverError("jacobi: zero diagonal in row of cell " + std::to_string(a.row_global[r]));
      inv_[r] = 1.0 / d;
    }
  }
  void apply(std::span<const double> r, std::span<double> z) const override {
    for (std::size_t i = 0; i < inv_.size(); ++i) z[i] = inv_[i] * r[i];
  }

 private:
  std::vector<double> inv_;
};

// Zero-fill incomplete LU of the partition's diagonal block.
class Ilu0Preconditioner final : public Preconditioner {
 public:
  explicit Ilu0Preconditioner(const SparseMatrix& a) {
    const Index n = a.rows();
    offsets_.assign(1, 0);
    for (Index r = 0; r < n; ++r) {
      std::vector<std::pair<Index, double>> row;
      for (Index e = a.offsets[r]; e < a.offsets[r + 1]; ++e) {
        if (a.local_cols[e] < n) row.emplace_back(a.local_cols[e], a.values[e]);
      }
      std::sort(row.begin(), row.end());
      for (const auto& [c, v] : row) {
        cols_.push_back(c);
        values_.push_back(v);
      }
      offsets_.push_back(static_cast<Index>(cols_.size()));
    }
    diag_.assign(n, -1);
    for (Index r = 0; r < n; ++r) {
      for (Index e = offsets_[r]; e < offsets_[r + 1]; ++e) {
        if (cols_[e] == r) diag_[r] = e;
      }
      if (diag_[r] < 0) throw SolverError("ilu0: missing diagonal in row of cell " + std::to_string(a.row_global[r]));
    }
    std::vector<Index> where(n, -1);
    for (Index i = 0; i < n; ++i) {
      for (Index e = offsets_[i]; e < offsets_[i + 1]; ++e) where[cols_[e]] = e;
      for (Index e = offsets_[i]; e < diag_[i]; ++e) {
        const Index k = cols_[e];
        const double pivot = values_[diag_[k]];
        if (pivot == 0.0) throw SolverError("ilu0: zero pivot in row of cell " + std::to_string(a.row_global[k]));
        values_[e] /= pivot;
        const double lik = values_[e];
        for (Index f = diag_[k] + 1; f < offsets_[k + 1]; ++f) {
          const Index j = where[cols_[f]];
          if (j >= 0) values_[j] -= lik * values_[f];
        }
      }
      for (Index e = offsets_[i]; e < offsets_[i + 1]; ++e) where[cols_[e]] = -1;
      if (values_[diag_[i]] == 0.0) {
        throw SolverError("ilu0: zero pivot in row of cell " + std::to_string(a.row_global[i]));
      }
    }
  }

  void apply(std::span<const double> r, std::span<double> z) const override {
    const Index n = static_cast<Index>(diag_.size());
    for (Index i = 0; i < n; ++i) {
      double s = r[i];
      for (Index e = offsets_[i]; e < diag_[i]; ++e) s -= values_[e] * z[cols_[e]];
      z[i] = s;
    }
    for (Index i = n - 1; i >= 0; --i) {
      double s = z[i];
      for (Index e = diag_[i] + 1; e < offsets_[i + 1]; ++e) s -= values_[e] * z[cols_[e]];
      z[i] = s / values_[diag_[i]];
    }
  }

 private:
  std::vector<Index> offsets_;
  std::vector<Index> cols_;
  std::vector<double> values_;
  std::vector<Index> diag_;
};

}  // namespace

std::unique_ptr<Preconditioner> make_preconditioner(PreconditionerKind kind, const SparseMatrix& a) {
  switch (kind) {
    case PreconditionerKind::None: return std::make_unique<IdentityPreconditioner>();
    case PreconditionerKind::Jacobi: return std::make_unique<JacobiPreconditioner>(a);
    case PreconditionerKind::BlockJacobi:
    case PreconditionerKind::Ilu0: return std::make_unique<Ilu0Preconditioner>(a);
  }
  throw ConfigError("unknown preconditioner");
}

// ---------------------------------------------------------------------------------------
// FGMRES

SolverMethod parse_solver(const std::string& name) {
  if (name == "fgmres") return SolverMethod::Fgmres;
  if (name == "direct-dense") return SolverMethod::DirectDense;
  throw ConfigError("unknown solver '" + name + "' (fgmres, direct-dense)");
}

void SolverConfig::validate() const {
  if (!(tol > 0.0)) throw ConfigError("solver tolerance must be positive");
  if (restart < 1) throw ConfigError("restart length must be >= 1");
  if (max_iter < 1) throw ConfigError("max_iter must be >= 1");
}

namespace {

double norm2(Transport& t, std::span<const double> v) { return std::sqrt(dot(t, v, v)); }

void residual(DistributedOperator& op, std::span<const double> b, std::span<const double> x,
              std::span<double> r) {
  op.apply(x, r);
  for (std::size_t i = 0; i < r.size(); ++i) r[i] = b[i] - r[i];
}

}  // namespace

SolveResult fgmres(const Partition& part, const SparseMatrix& a, std::span<const double> b,
                   const SolverConfig& config, std::span<const double> x0) {
  config.validate();
  const auto pc = make_preconditioner(config.preconditioner, a);
  return fgmres(part, a, *pc, b, config, x0);
}

SolveResult fgmres(const Partition& part, const SparseMatrix& a, const Preconditioner& pc,
                   std::span<const double> b, const SolverConfig& config, std::span<const double> x0) {
  config.validate();
  Transport& t = part.transport;
  DistributedOperator op(part, a);
  const std::size_t n = static_cast<std::size_t>(a.rows());
  if (b.size() != n) throw SolverError("right-hand side size does not match the matrix rows");
  if (!x0.empty() && x0.size() != n) throw SolverError("initial guess size does not match the matrix rows");

  SolveResult out;
  out.x.assign(n, 0.0);
  if (!x0.empty()) std::copy(x0.begin(), x0.end(), out.x.begin());
  const double bnorm = norm2(t, b);
  if (bnorm == 0.0) {
    std::fill(out.x.begin(), out.x.end(), 0.0);
    out.converged = true;
    return out;
  }
  const double target = config.tol * bnorm;
  const int m = config.restart;

  std::vector<double> r(n);
  std::vector<std::vector<double>> v(m + 1, std::vector<double>(n));
  std::vector<std::vector<double>> z(m, std::vector<double>(n));
  std::vector<std::vector<double>> h(m + 1, std::vector<double>(m, 0.0));
  std::vector<double> cs(m), sn(m), g(m + 1);
  std::vector<double> w(n);

  residual(op, b, out.x, r);
  double beta = norm2(t, r);
  bool breakdown = false;
  while (beta > target && out.iterations < config.max_iter && !breakdown) {
    for (std::size_t i = 0; i < n; ++i) v[0][i] = r[i] / beta;
    std::fill(g.begin(), g.end(), 0.0);
    g[0] = beta;
    int j = 0;
    for (; j < m && out.iterations < config.max_iter; ++j) {
      pc.apply(v[j], z[j]);
      op.apply(z[j], w);
      const double wnorm0 = norm2(t, w);
      for (int i = 0; i <= j; ++i) {
        h[i][j] = dot(t, w, v[i]);
        for (std::size_t k = 0; k < n; ++k) w[k] -= h[i][j] * v[i][k];
      }
      h[j + 1][j] = norm2(t, w);
      const double sub = h[j + 1][j];
      for (int i = 0; i < j; ++i) {
        const double tmp = cs[i] * h[i][j] + sn[i] * h[i + 1][j];
        h[i + 1][j] = -sn[i] * h[i][j] + cs[i] * h[i + 1][j];
        h[i][j] = tmp;
      }
      const double rho = std::hypot(h[j][j], h[j + 1][j]);
      if (rho == 0.0) {
        breakdown = true;
        break;
      }
      cs[j] = h[j][j] / rho;
      sn[j] = h[j + 1][j] / rho;
      h[j][j] = rho;
      h[j + 1][j] = 0.0;
      g[j + 1] = -sn[j] * g[j];
      g[j] = cs[j] * g[j];
      ++out.iterations;
      out.history.push_back(std::abs(g[j + 1]) / bnorm);
      if (sub <= 1e-14 * wnorm0) {
        // Invariant subspace: the Krylov space cannot grow further.
        breakdown = true;
        ++j;
        break;
      }
      for (std::size_t k = 0; k < n; ++k) v[j + 1][k] = w[k] / sub;
      if (std::abs(g[j + 1]) <= target) {
        ++j;
        break;
      }
    }
    // Back substitution for the j x j triangular system, then x += Z y.
    std::vector<double> y(j, 0.0);
    for (int i = j - 1; i >= 0; --i) {
      double s = g[i];
      for (int k = i + 1; k < j; ++k) s -= h[i][k] * y[k];
      y[i] = s / h[i][i];
    }
    for (int i = 0; i < j; ++i) {
      for (std::size_t k = 0; k < n; ++k) out.x[k] += y[i] * z[i][k];
    }
    residual(op, b, out.x, r);
    beta = norm2(t, r);
  }
  out.relative_residual = beta / bnorm;
  out.converged = beta <= target;
  if (!out.converged) {
    std::ostringstream msg;
    msg << (breakdown ? "FGMRES breakdown (zero Arnoldi norm)" : "FGMRES reached max_iter")
        << " after " << out.iterations << " iterations; relative residual " << out.relative_residual;
    out.message = msg.str();
  }
  return out;
}

const SolveResult& require_converged(const SolveResult& r) {
  if (r.converged) return r;
  std::ostringstream msg;
  msg << r.message << "; residual history:";
  const std::size_t n = r.history.size();
  const std::size_t step = std::max<std::size_t>(1, n / 10);
  for (std::size_t i = 0; i < n; i += step) msg << ' ' << i + 1 << ':' << r.history[i];
  if (n > 0) msg << ' ' << n << ':' << r.history.back();
  throw SolverError(msg.str());
}

// ---------------------------------------------------------------------------------------
// Gathering and the dense oracle

GlobalMatrix gather_matrix(Transport& t, const SparseMatrix& a) {
  // Packed as: rows, then per row: global id, count, (column, value)*.
  std::vector<double> packed;
  packed.push_back(static_cast<double>(a.rows()));
  for (Index r = 0; r < a.rows(); ++r) {
    packed.push_back(static_cast<double>(a.row_global[r]));
    packed.push_back(static_cast<double>(a.offsets[r + 1] - a.offsets[r]));
    for (Index e = a.offsets[r]; e < a.offsets[r + 1]; ++e) {
      packed.push_back(static_cast<double>(a.cols[e]));
      packed.push_back(a.values[e]);
    }
  }
  const auto all = gather_to_root(t, packed);
  GlobalMatrix g;
  if (t.rank() != 0) return g;
  struct Row {
    std::vector<Index> cols;
    std::vector<double> values;
    bool seen = false;
  };
  std::vector<Row> rows;
  for (const auto& buf : all) {
    std::size_t p = 0;
    const Index nrows = static_cast<Index>(buf.at(p++));
    for (Index r = 0; r < nrows; ++r) {
      const Index gid = static_cast<Index>(buf.at(p++));
      const Index count = static_cast<Index>(buf.at(p++));
      if (gid >= static_cast<Index>(rows.size())) rows.resize(gid + 1);
      Row& row = rows[gid];
      if (row.seen) throw SolverError("row " + std::to_string(gid) + " owned by two partitions");
      row.seen = true;
      for (Index e = 0; e < count; ++e) {
        row.cols.push_back(static_cast<Index>(buf.at(p++)));
        row.values.push_back(buf.at(p++));
      }
    }
  }
  g.size = static_cast<Index>(rows.size());
  for (Index r = 0; r < g.size; ++r) {
    if (!rows[r].seen) throw SolverError("row " + std::to_string(r) + " missing from every partition");
    g.cols.insert(g.cols.end(), rows[r].cols.begin(), rows[r].cols.end());
    g.values.insert(g.values.end(), rows[r].values.begin(), rows[r].values.end());
    g.offsets.push_back(static_cast<Index>(g.cols.size()));
  }
  for (Index c : g.cols) {
    if (c < 0 || c >= g.size) throw SolverError("column " + std::to_string(c) + " outside the gathered matrix");
  }
  return g;
}

std::vector<double> gather_vector(Transport& t, const SparseMatrix& a, std::span<const double> local) {
  std::vector<double> packed;
  packed.reserve(2 * local.size());
  for (Index r = 0; r < a.rows(); ++r) {
    packed.push_back(static_cast<double>(a.row_global[r]));
    packed.push_back(local[r]);
  }
  const auto all = gather_to_root(t, packed);
  std::vector<double> out;
  if (t.rank() != 0) return out;
  std::size_t total = 0;
  for (const auto& buf : all) total += buf.size() / 2;
  out.assign(total, 0.0);
  for (const auto& buf : all) {
    for (std::size_t p = 0; p + 1 < buf.size(); p += 2) out.at(static_cast<std::size_t>(buf[p])) = buf[p + 1];
  }
  return out;
}

std::vector<double> multiply(const GlobalMatrix& a, std::span<const double> x) {
  std::vector<double> y(a.size, 0.0);
  for (Index r = 0; r < a.size; ++r) {
    double s = 0.0;
    for (Index e = a.offsets[r]; e < a.offsets[r + 1]; ++e) s += a.values[e] * x[a.cols[e]];
    y[r] = s;
  }
  return y;
}

std::vector<double> direct_dense(const GlobalMatrix& a, std::span<const double> b) {
  const Index n = a.size;
  if (n > kDirectDenseLimit) {
    throw SolverError("direct-dense solver limited to " + std::to_string(kDirectDenseLimit) +
                      " unknowns, system has " + std::to_string(n));
  }
  if (static_cast<Index>(b.size()) != n) throw SolverError("right-hand side size does not match the matrix");
  const std::size_t un = static_cast<std::size_t>(n);
  std::vector<double> m(un * un, 0.0);
  double scale = 0.0;
  for (Index r = 0; r < n; ++r) {
    for (Index e = a.offsets[r]; e < a.offsets[r + 1]; ++e) {
      m[r * un + a.cols[e]] += a.values[e];
      scale = std::max(scale, std::abs(a.values[e]));
    }
  }
  std::vector<double> x(b.begin(), b.end());
  const double tiny = static_cast<double>(n) * std::numeric_limits<double>::epsilon() * scale;
  for (std::size_t k = 0; k < un; ++k) {
    std::size_t p = k;
    for (std::size_t i = k + 1; i < un; ++i) {
      if (std::abs(m[i * un + k]) > std::abs(m[p * un + k])) p = i;
    }
    if (!(std::abs(m[p * un + k]) > tiny)) {
      throw SolverError("singular matrix (pivot " + std::to_string(k) + ")");
    }
    if (p != k) {
      std::swap_ranges(m.begin() + k * un, m.begin() + (k + 1) * un, m.begin() + p * un);
      std::swap(x[k], x[p]);
    }
    const double piv = m[k * un + k];
    for (std::size_t i = k + 1; i < un; ++i) {
      const double f = m[i * un + k] / piv;
      if (f == 0.0) continue;
      m[i * un + k] = 0.0;
      for (std::size_t j = k + 1; j < un; ++j) m[i * un + j] -= f * m[k * un + j];
      x[i] -= f * x[k];
    }
  }
  for (std::size_t k = un; k-- > 0;) {
    double s = x[k];
    for (std::size_t j = k + 1; j < un; ++j) s -= m[k * un + j] * x[j];
    x[k] = s / m[k * un + k];
  }
  return x;
}

SolveResult solve_direct(const Partition& part, const SparseMatrix& a, std::span<const double> b) {
  Transport& t = part.transport;
  const GlobalMatrix g = gather_matrix(t, a);
  const std::vector<double> bg = gather_vector(t, a, b);
  std::vector<double> full;
  if (t.rank() == 0) {
    // A failure on the root must not leave the other ranks waiting.
    std::string error;
    try {
      full = direct_dense(g, bg);
    } catch (const SolverError& e) {
      error = e.what();
    }
    std::vector<double> status{error.empty() ? 1.0 : 0.0};
    for (int r = 1; r < t.size(); ++r) t.send(r, kTagBroadcast, status);
    if (!error.empty()) throw SolverError(error);
    for (int r = 1; r < t.size(); ++r) t.send(r, kTagBroadcast, full);
  } else {
    if (t.recv(0, kTagBroadcast).at(0) == 0.0) throw SolverError("direct solve failed on partition 0");
    full = t.recv(0, kTagBroadcast);
  }
  SolveResult out;
  out.x.resize(a.rows());
  for (Index r = 0; r < a.rows(); ++r) out.x[r] = full.at(a.row_global[r]);
  DistributedOperator op(part, a);
  std::vector<double> res(a.rows());
  residual(op, b, out.x, res);
  const double bnorm = norm2(t, b);
  const double rnorm = norm2(t, res);
  out.relative_residual = bnorm > 0.0 ? rnorm / bnorm : rnorm;
  out.iterations = 1;
  out.converged = true;
  return out;
}

SolveResult solve(const Partition& part, const SparseMatrix& a, std::span<const double> b,
                  const SolverConfig& config) {
  config.validate();
  if (config.method == SolverMethod::DirectDense) return solve_direct(part, a, b);
  return fgmres(part, a, b, config);
}

void write_matrix_market(const GlobalMatrix& a, std::ostream& out) {
  out << "%%MatrixMarket matrix coordinate real general\n";
  out << a.size << ' ' << a.size << ' ' << a.nonzeros() << '\n';
  out << std::setprecision(17);
  for (Index r = 0; r < a.size; ++r) {
    for (Index e = a.offsets[r]; e < a.offsets[r + 1]; ++e) {
      out << r + 1 << ' ' << a.cols[e] + 1 << ' ' << a.values[e] << '\n';
    }
  }
}

}  // namespace fvdom
