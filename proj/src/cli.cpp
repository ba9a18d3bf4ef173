#include "fvdom/cli.hpp"

#include <CLI11.hpp>
#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <limits>
#include <mutex>
#include <sstream>

#include "fvdom/bench.hpp"
#include "fvdom/errors.hpp"
#include "fvdom/exchange.hpp"
#include "fvdom/meshgen.hpp"

namespace fvdom {

namespace fs = std::filesystem;

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return {};
  return s.substr(b, s.find_last_not_of(" \t\r\n") - b + 1);
}

std::ofstream open_output(const fs::path& path) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open '" + path.string() + "' for writing");
  out << std::setprecision(std::numeric_limits<double>::max_digits10);
  return out;
}

// Arguments after the program name, one per line.
std::string joined(const std::vector<std::string>& args) {
  std::string s;
  for (std::size_t i = 1; i < args.size(); ++i) s += args[i] + '\n';
  return s;
}

void launch(const std::string& transport, int workers, const WorkerFn& fn) {
  if (workers < 1) throw ConfigError("worker count must be >= 1");
  if (transport == "threads") run_workers(workers, fn);
  else if (transport == "sockets") run_workers_socket(workers, fn);
  else throw ConfigError("unknown transport '" + transport + "' (threads, sockets)");
}

struct Decomposed {
  std::vector<LocalDomain> domains;
  std::vector<CommPlan> plans;
};

Decomposed decompose(const Mesh& mesh, int parts) {
  Decomposed d;
  d.domains = build_local_domains(mesh, partition_mesh(mesh, parts));
  d.plans = build_comm_plans(d.domains);
  return d;
}

std::string step_stem(const std::string& prefix, int step) {
  std::ostringstream s;
  s << prefix << '_' << std::setw(6) << std::setfill('0') << step;
  return s.str();
}

// Accumulates the shared summary of a run from rank 0.
struct Report {
  std::mutex mutex;
  std::map<std::string, std::string> outputs;
  void add(const std::string& key, const fs::path& p) {
    std::lock_guard<std::mutex> lock(mutex);
    outputs[key] = p.string();
  }
};

SolverConfig solver_from(const std::string& method, const std::string& pc, double tol, int restart, int max_iter) {
  SolverConfig c;
  c.method = parse_solver(method);
  c.preconditioner = parse_preconditioner(pc);
  c.tol = tol;
  c.restart = restart;
  c.max_iter = max_iter;
  c.validate();
  return c;
}

struct LinearField {
  double a = 0.0;
  Vec3 b;
  double operator()(const Vec3& x) const { return a + dot(b, x); }
};

LinearField parse_linear(const std::string& text) {
  const std::vector<double> v = parse_number_list(text);
  if (v.size() != 4) throw ConfigError("a linear field needs a,bx,by,bz");
  return {v[0], {v[1], v[2], v[3]}};
}

BoundaryCondition parse_condition(const std::string& key, const std::string& text) {
  std::istringstream in(text);
  std::string kind;
  in >> kind;
  std::string rest;
  std::getline(in, rest);
  rest = trim(rest);
  if (kind == "neumann" && rest.empty()) return BoundaryCondition::neumann();
  if (kind == "wall" && rest.empty()) return BoundaryCondition::wall();
  if (kind == "dirichlet") {
    if (rest.rfind("linear", 0) == 0) {
      return BoundaryCondition::dirichlet(std::function<double(const Vec3&)>(parse_linear(trim(rest.substr(6)))));
    }
    const std::vector<double> v = parse_number_list(rest);
    if (v.size() == 1) return BoundaryCondition::dirichlet(v[0]);
  }
  throw ConfigError("boundary '" + key + "': cannot parse '" + text + "'");
}

// ---- subcommands ---------------------------------------------------------------------

struct Common {
  std::string mesh;
  int workers = 1;
  std::string transport = "threads";
  std::string out = ".";
};

void add_common(CLI::App* app, Common& c, bool parallel = true) {
  app->add_option("--mesh", c.mesh, "MSH 2.2 ASCII mesh file")->required();
  if (parallel) {
    app->add_option("-k,--workers", c.workers, "Number of partitions / workers")->check(CLI::PositiveNumber);
    app->add_option("--transport", c.transport, "Worker transport: threads or sockets")
        ->check(CLI::IsMember({"threads", "sockets"}));
  }
  app->add_option("--out", c.out, "Output directory (manifest.json is always written)");
}

Manifest manifest_for(const std::string& command, const std::vector<std::string>& args, const Common& c,
                      const std::string& extra_config = {}) {
  Manifest m;
  m.command = command;
  m.arguments = args;
  m.config_sha256 = sha256_hex(joined(args) + extra_config);
  if (!c.mesh.empty()) {
    m.mesh_source = c.mesh;
    m.mesh_sha256 = sha256_file(c.mesh);
  }
  m.workers = c.workers;
  return m;
}

struct GenBoxArgs {
  int n = 8;
  int nx = 0, ny = 0, nz = 0;
  std::vector<double> lo{0, 0, 0};
  std::vector<double> hi{1, 1, 1};
  double jitter = 0.0;
  std::uint64_t seed = 12345;
  bool streamer = false;
  std::string out;
};

int run_gen_box(const GenBoxArgs& a, const std::vector<std::string>& args, std::ostream& out) {
  if (a.lo.size() != 3 || a.hi.size() != 3) throw ConfigError("--lo and --hi need three values");
  const Vec3 lo{a.lo[0], a.lo[1], a.lo[2]};
  const Vec3 hi{a.hi[0], a.hi[1], a.hi[2]};
  const int nx = a.nx > 0 ? a.nx : a.n, ny = a.ny > 0 ? a.ny : a.n, nz = a.nz > 0 ? a.nz : a.n;
  BoxSpec spec = a.streamer ? streamer_box(lo, hi, nx, ny, nz) : unit_cube(a.n, a.jitter);
  spec.lo = lo;
  spec.hi = hi;
  spec.nx = nx;
  spec.ny = ny;
  spec.nz = nz;
  spec.jitter = a.jitter;
  spec.seed = a.seed;
  std::ostringstream text;
  write_box_msh(spec, text);
  {
    std::ofstream f = open_output(a.out);
    f << text.str();
    if (!f) throw std::runtime_error("write to '" + a.out + "' failed");
  }
  Manifest m;
  m.command = "gen-box";
  m.arguments = args;
  m.config_sha256 = sha256_hex(joined(args));
  m.mesh_source = a.out;
  m.mesh_sha256 = sha256_hex(text.str());
  m.outputs["mesh"] = a.out;
  write_manifest(m, a.out + ".manifest.json");
  out << "wrote " << a.out << " (" << 6LL * nx * ny * nz << " tetrahedra)\n";
  return kExitOk;
}

struct PartitionArgs {
  Common common;
  int parts = 2;
  bool stats = false;
};

int run_partition(const PartitionArgs& a, const std::vector<std::string>& args, std::ostream& out) {
  const Mesh mesh = load_mesh(a.common.mesh);
  const Decomposed dec = decompose(mesh, a.parts);
  const PartitionStats stats = partition_stats(dec.domains, dec.plans);
  if (a.stats) write_partition_stats_csv(stats, out);
  const fs::path dir = a.common.out;
  fs::create_directories(dir);
  {
    std::ofstream csv = open_output(dir / "partition_stats.csv");
    write_partition_stats_csv(stats, csv);
  }
  fs::path view;
  for (int r = 0; r < a.parts; ++r) view = write_snapshot(dec.domains[r], r, a.parts, {}, dir, "partition");
  Common c = a.common;
  c.workers = a.parts;
  Manifest m = manifest_for("partition", args, c);
  m.outputs["stats"] = (dir / "partition_stats.csv").string();
  m.outputs["view"] = view.string();
  write_manifest(m, dir / "manifest.json");
  return kExitOk;
}

struct PoissonArgs {
  Common common;
  std::string bc;
  std::string method = "fgmres";
  std::string pc = "ilu0";
  double tol = 1e-10;
  int restart = 30;
  int max_iter = 5000;
  std::string exact;
  std::string matrix_market;
};

int run_solve_poisson(const PoissonArgs& a, const std::vector<std::string>& args, std::ostream& out) {
  const SolverConfig solver = solver_from(a.method, a.pc, a.tol, a.restart, a.max_iter);
  const KeyValueConfig bc_cfg = KeyValueConfig::load(a.bc);
  const bool have_exact = !a.exact.empty();
  const LinearField exact = have_exact ? parse_linear(a.exact) : LinearField{};
  const Mesh mesh = load_mesh(a.common.mesh);
  const Decomposed dec = decompose(mesh, a.common.workers);
  const fs::path dir = a.common.out;
  fs::create_directories(dir);
  Report report;

  launch(a.common.transport, a.common.workers, [&](Transport& t) {
    const LocalDomain& d = dec.domains[t.rank()];
    const Partition part{d, dec.plans[t.rank()], t};
    const BoundarySpec bc = parse_boundary_config(bc_cfg, d.patch_names);
    const NodeLSWeights weights = build_node_weights(d);
    const PoissonSystem sys = assemble_poisson(d, weights, bc);
    if (!a.matrix_market.empty()) {
      const GlobalMatrix g = gather_matrix(t, sys.matrix);
      if (t.rank() == 0) {
        std::ofstream mm = open_output(a.matrix_market);
        write_matrix_market(g, mm);
        report.add("matrix", a.matrix_market);
      }
    }
    std::vector<double> b(sys.shift.size());
    for (std::size_t i = 0; i < b.size(); ++i) b[i] = -sys.shift[i];
    const SolveResult r = require_converged(solve(part, sys.matrix, b, solver));

    CellField p(d, 1), err(d, 1);
    double max_err = 0.0;
    for (Index i = 0; i < d.n_inner; ++i) {
      p(i) = r.x[i];
      if (have_exact) {
        err(i) = r.x[i] - exact(d.slot_center[i]);
        max_err = std::max(max_err, std::abs(err(i)));
      }
    }
    max_err = allreduce_max(t, max_err);
    const double nnz = allreduce_sum(t, static_cast<double>(sys.matrix.nonzeros()));
    const double rows = allreduce_sum(t, static_cast<double>(sys.matrix.rows()));
    std::vector<NamedField> fields{{"P", &p}};
    if (have_exact) fields.push_back({"error", &err});
    const fs::path view = write_snapshot(d, t.rank(), t.size(), fields, dir, "poisson");
    if (t.rank() == 0) {
      report.add("solution", view);
      out << "cells " << static_cast<Index>(rows) << "\n"
          << "nonzeros " << static_cast<Index>(nnz) << " (" << nnz / rows << " per row)\n"
          << "iterations " << r.iterations << "\n"
          << "relative_residual " << r.relative_residual << "\n";
      if (have_exact) out << "max_error " << max_err << "\n";
    }
  });
  Manifest m = manifest_for("solve-poisson", args, a.common, bc_cfg.text());
  m.outputs = report.outputs;
  write_manifest(m, dir / "manifest.json");
  return kExitOk;
}

struct ConvDiffArgs {
  Common common;
  std::string bc;
  std::vector<double> velocity{1.0, 0.0, 0.0};
  double diffusivity = 0.0;
  std::vector<double> center{0.5, 0.5, 0.5};
  double sigma = 0.1;
  int steps = 10;
  double dt = 0.0;
  double cfl = 0.5;
  int cadence = 0;
};

int run_convdiff(const ConvDiffArgs& a, const std::vector<std::string>& args, std::ostream& out) {
  if (a.velocity.size() != 3 || a.center.size() != 3) throw ConfigError("--velocity and --center need 3 values");
  if (a.diffusivity < 0.0) throw ConfigError("--diffusivity must be >= 0");
  if (a.steps < 0 || a.cadence < 0) throw ConfigError("--steps and --cadence must be >= 0");
  KeyValueConfig bc_cfg;
  if (!a.bc.empty()) bc_cfg = KeyValueConfig::load(a.bc);
  const Vec3 vel{a.velocity[0], a.velocity[1], a.velocity[2]};
  const Vec3 c0{a.center[0], a.center[1], a.center[2]};
  const Mesh mesh = load_mesh(a.common.mesh);
  const Decomposed dec = decompose(mesh, a.common.workers);
  const fs::path dir = a.common.out;
  fs::create_directories(dir);
  Report report;

  launch(a.common.transport, a.common.workers, [&](Transport& t) {
    const LocalDomain& d = dec.domains[t.rank()];
    const Partition part{d, dec.plans[t.rank()], t};
    const BoundarySpec bc = parse_boundary_config(bc_cfg, d.patch_names);
    ConvectionDiffusion op(part, bc);
    CellField u(d, 1), v(d, 3);
    for (Index s = 0; s < d.slot_count(); ++s) {
      const Vec3 r = d.slot_center[s] - c0;
      u(s) = std::exp(-dot(r, r) / (a.sigma * a.sigma));
      v.set_vec(s, vel);
    }
    double dt = a.dt;
    if (dt <= 0.0) dt = advisory_dt(part, v, a.cfl);
    if (!std::isfinite(dt) || dt <= 0.0) throw ConfigError("no advisory time step for zero velocity; pass --dt");

    std::ofstream csv;
    if (t.rank() == 0) {
      csv = open_output(dir / "diagnostics.csv");
      csv << "step,time,mass,min,max,boundary_outflow\n";
    }
    double outflow = 0.0;
    const auto record = [&](int step) {
      std::vector<double> sums{0.0, outflow};
      double lo = std::numeric_limits<double>::infinity(), hi = -lo;
      for (Index i = 0; i < d.n_inner; ++i) {
        sums[0] += d.cell_volume[i] * u(i);
        lo = std::min(lo, u(i));
        hi = std::max(hi, u(i));
      }
      allreduce_sum(t, sums);
      lo = -allreduce_max(t, -lo);
      hi = allreduce_max(t, hi);
      if (t.rank() == 0) {
        csv << step << ',' << step * dt << ',' << sums[0] << ',' << lo << ',' << hi << ',' << sums[1] << '\n';
      }
    };
    record(0);
    for (int s = 1; s <= a.steps; ++s) {
      u = rk3_step(u, dt, [&](CellField& w) { return op.residual(w, v, a.diffusivity, nullptr); });
      outflow = op.last_boundary_outflow();
      record(s);
      if (a.cadence > 0 && s % a.cadence == 0) {
        write_snapshot(d, t.rank(), t.size(), {{"u", &u}}, dir, step_stem("convdiff", s));
      }
    }
    const fs::path view = write_snapshot(d, t.rank(), t.size(), {{"u", &u}}, dir, "convdiff_final");
    if (t.rank() == 0) {
      report.add("diagnostics", dir / "diagnostics.csv");
      report.add("final", view);
      out << "dt " << dt << "\nsteps " << a.steps << "\n";
    }
  });
  Manifest m = manifest_for("run-convdiff", args, a.common, bc_cfg.text());
  m.outputs = report.outputs;
  write_manifest(m, dir / "manifest.json");
  return kExitOk;
}

int run_streamer(const std::string& config_path, const std::vector<std::string>& args, std::ostream& out,
                 std::ostream& err) {
  const KeyValueConfig cfg = KeyValueConfig::load(config_path);
  const StreamerRun run = parse_streamer_run(cfg, fs::path(config_path).parent_path());
  cfg.reject_unused();

  Mesh mesh;
  std::string mesh_hash;
  if (run.box_cells > 0) {
    const BoxSpec spec = streamer_box({0, 0, 0}, {run.box_length, run.box_length, run.box_length}, run.box_cells,
                                      run.box_cells, run.box_cells);
    std::ostringstream text;
    write_box_msh(spec, text);
    mesh_hash = sha256_hex(text.str());
    std::istringstream in(text.str());
    mesh = read_mesh(in);
  } else {
    mesh = load_mesh(run.mesh);
    mesh_hash = sha256_file(run.mesh);
  }
  const Decomposed dec = decompose(mesh, run.workers);
  fs::create_directories(run.out);
  Report report;

  launch(run.transport, run.workers, [&](Transport& t) {
    const LocalDomain& d = dec.domains[t.rank()];
    const Partition part{d, dec.plans[t.rank()], t};
    StreamerModel model(part, run.model);
    model.initialize();
    const bool root = t.rank() == 0;
    if (root) {
      for (const std::string& w : model.warnings()) err << "warning: " << w << '\n';
    }
    std::ofstream csv;
    if (root) {
      csv = open_output(run.out / "diagnostics.csv");
      csv << "step,time,electrons,net_charge,boundary_outflow,negative_cells,solver_iterations,"
             "solver_residual,max_field\n";
    }
    const auto record = [&](const StreamerDiagnostics& g) {
      if (!root) return;
      csv << g.step << ',' << g.time << ',' << g.electrons << ',' << g.net_charge << ',' << g.boundary_outflow
          << ',' << g.negative_cells << ',' << g.solver_iterations << ',' << g.solver_residual << ','
          << g.max_field << '\n';
      if (g.negative_cells > 0) {
        err << "warning: step " << g.step << ": " << g.negative_cells << " cells with n_e < 0\n";
      }
    };
    record(model.diagnostics());
    int snapshots = 0;
    for (int s = 1; s <= run.steps; ++s) {
      record(model.step());
      if (run.cadence > 0 && s % run.cadence == 0) {
        CellField net(d, 1);
        for (Index i = 0; i < d.n_inner; ++i) net(i) = model.ions()(i) - model.electrons()(i);
        const fs::path view = write_snapshot(d, t.rank(), t.size(),
                                             {{"n_e", &model.electrons()},
                                              {"n_p", &model.ions()},
                                              {"net_charge", &net},
                                              {"V", &model.potential()},
                                              {"E", &model.field()}},
                                             run.out, step_stem("streamer", s));
        if (root) report.add("snapshot_" + std::to_string(++snapshots), view);
      }
    }
    const PhaseTimers pt = model.timers();
    const std::vector<double> mine{pt.cell_grad, pt.face_grad, pt.fluxes, pt.least_square, pt.solver,
                                   pt.communications};
    const auto all = gather_to_root(t, mine);
    if (root) {
      std::ofstream tcsv = open_output(run.out / "timings.csv");
      tcsv << "part,Cell Grad.,Face Grad.,Fluxes,Least square,Solver,Communications\n";
      for (std::size_t p = 0; p < all.size(); ++p) {
        tcsv << p;
        for (double v : all[p]) tcsv << ',' << v;
        tcsv << '\n';
      }
      report.add("diagnostics", run.out / "diagnostics.csv");
      report.add("timings", run.out / "timings.csv");
      out << "steps " << run.steps << "\nsnapshots " << snapshots << "\ntime " << model.time() << "\n";
    }
  });

  Manifest m;
  m.command = "run-streamer";
  m.arguments = args;
  m.config_sha256 = sha256_hex(cfg.text());
  m.mesh_source = run.box_cells > 0 ? "generated box " + std::to_string(run.box_cells) : run.mesh;
  m.mesh_sha256 = mesh_hash;
  m.workers = run.workers;
  m.outputs = report.outputs;
  write_manifest(m, run.out / "manifest.json");
  return kExitOk;
}

struct BenchArgs {
  Common common;
  int box = 0;
  double jitter = 0.0;
  std::vector<int> workers{1, 2, 4};
  int iterations = 20;
  int warmup = 3;
  bool solve = false;
  std::vector<std::string> pcs{"none", "jacobi", "ilu0"};
  double tol = 1e-10;
};

int run_bench(const BenchArgs& a, const std::vector<std::string>& args, std::ostream& out) {
  if (a.common.mesh.empty() == (a.box <= 0)) throw ConfigError("bench needs exactly one of --mesh or --box");
  Mesh mesh;
  std::string mesh_hash;
  if (a.box > 0) {
    std::ostringstream text;
    write_box_msh(unit_cube(a.box, a.jitter), text);
    mesh_hash = sha256_hex(text.str());
    std::istringstream in(text.str());
    mesh = read_mesh(in);
  } else {
    mesh = load_mesh(a.common.mesh);
    mesh_hash = sha256_file(a.common.mesh);
  }
  const fs::path dir = a.common.out;
  fs::create_directories(dir);
  BenchSettings s;
  s.workers = a.workers;
  s.iterations = a.iterations;
  s.warmup = a.warmup;
  s.sockets = a.common.transport == "sockets";

  out << "mesh cells " << mesh.cells.size() << "; workers are in-process "
      << (s.sockets ? "threads over sockets" : "threads") << " on " << std::thread::hardware_concurrency()
      << " hardware threads\n";
  const auto ops = bench_operators(mesh, s);
  {
    std::ofstream csv = open_output(dir / "operators.csv");
    write_operator_csv(ops, csv);
  }
  write_operator_csv(ops, out);
  Manifest m;
  m.command = "bench";
  m.arguments = args;
  m.config_sha256 = sha256_hex(joined(args));
  m.mesh_source = a.box > 0 ? "generated unit cube " + std::to_string(a.box) : a.common.mesh;
  m.mesh_sha256 = mesh_hash;
  m.workers = *std::max_element(a.workers.begin(), a.workers.end());
  m.outputs["operators"] = (dir / "operators.csv").string();
  if (a.solve) {
    std::vector<PreconditionerKind> kinds;
    for (const std::string& p : a.pcs) kinds.push_back(parse_preconditioner(p));
    SolverConfig solver;
    solver.tol = a.tol;
    const auto rows = bench_assembly_and_solve(mesh, a.workers, kinds, solver);
    std::ofstream csv = open_output(dir / "solve.csv");
    write_solve_csv(rows, csv);
    write_solve_csv(rows, out);
    m.outputs["solve"] = (dir / "solve.csv").string();
  }
  write_manifest(m, dir / "manifest.json");
  return kExitOk;
}

}  // namespace

// ---- public helpers ------------------------------------------------------------------

BoundarySpec parse_boundary_config(const KeyValueConfig& cfg, const std::vector<std::string>& patch_names) {
  const BoundaryCondition fallback =
      cfg.has("default") ? parse_condition("default", cfg.get_string("default")) : BoundaryCondition::neumann();
  std::map<std::string, BoundaryCondition> conditions;
  for (const auto& [key, value] : cfg.entries()) {
    if (key == "default") continue;
    conditions[key] = parse_condition(key, value);
  }
  return BoundarySpec::from_names(patch_names, conditions, fallback);
}

std::vector<VelocityBand> load_velocity_table(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open velocity table '" + path.string() + "'");
  std::vector<VelocityBand> table;
  std::string line;
  int number = 0;
  while (std::getline(in, line)) {
    ++number;
    line = trim(line.substr(0, line.find('#')));
    if (line.empty()) continue;
    std::istringstream row(line);
    std::string threshold;
    VelocityBand b;
    if (!(row >> threshold >> b.c1 >> b.c2) || !(row >> std::ws).eof()) {
      throw ConfigError(path.string() + ":" + std::to_string(number) + ": expected 'threshold c1 c2'");
    }
    b.threshold = threshold == "-inf" ? -std::numeric_limits<double>::infinity() : std::stod(threshold);
    table.push_back(b);
  }
  PhysicalConstants check;
  check.velocity_table = table;
  check.validate();
  return table;
}

StreamerRun parse_streamer_run(const KeyValueConfig& cfg, const fs::path& base) {
  const auto resolve = [&](const std::string& p) { return fs::path(p).is_absolute() ? fs::path(p) : base / p; };
  StreamerRun r;
  StreamerConfig& m = r.model;
  if (cfg.has("mesh") == cfg.has("box")) throw ConfigError("config: set exactly one of 'mesh' or 'box'");
  if (cfg.has("mesh")) r.mesh = resolve(cfg.get_string("mesh")).string();
  r.box_cells = cfg.get_int("box", 0);
  r.box_length = cfg.get_double("box_length", r.box_length);
  r.workers = cfg.get_int("workers", default_worker_count(1));
  r.transport = cfg.get_string("transport", r.transport);
  r.out = resolve(cfg.get_string("out", "streamer_out"));
  r.cadence = cfg.get_int("cadence", 0);

  m.dt = cfg.get_double("dt", m.dt);
  if (cfg.has("steps") && cfg.has("t_end")) throw ConfigError("config: set only one of 'steps' or 't_end'");
  if (cfg.has("t_end")) r.steps = static_cast<int>(std::llround(cfg.get_double("t_end") / m.dt));
  else r.steps = cfg.get_int("steps", 10);
  if (r.steps < 0 || r.cadence < 0) throw ConfigError("config: steps and cadence must be >= 0");

  m.constants.gas_density = cfg.get_double("gas_density", m.constants.gas_density);
  if (cfg.has("velocity_table")) m.constants.velocity_table = load_velocity_table(resolve(cfg.get_string("velocity_table")));
  m.inlet_patch = cfg.get_string("inlet_patch", m.inlet_patch);
  m.outlet_patch = cfg.get_string("outlet_patch", m.outlet_patch);
  m.inlet_voltage = cfg.get_double("inlet_voltage", m.inlet_voltage);
  m.outlet_voltage = cfg.get_double("outlet_voltage", m.outlet_voltage);
  m.pulse_center = cfg.get_vec3("pulse_center", m.pulse_center);
  m.pulse_sigma = cfg.get_double("pulse_sigma", m.pulse_sigma);
  m.pulse_peak = cfg.get_double("pulse_peak", m.pulse_peak);
  m.background = cfg.get_double("background", m.background);
  m.ionization = cfg.get_bool("ionization", m.ionization);
  m.zero_flux_electrons = cfg.get_bool("zero_flux_electrons", m.zero_flux_electrons);

  const std::string spots = cfg.get_string("spots", "default");
  if (spots == "none") {
    m.spots.clear();
  } else if (spots != "default") {
    const std::vector<double> c = cfg.get_list("spots");
    if (c.empty() || c.size() % 3 != 0) throw ConfigError("config: 'spots' needs x,y,z triples, 'default' or 'none'");
    m.spots.clear();
    for (std::size_t i = 0; i < c.size(); i += 3) {
      PlasmaSpot p;
      p.center = {c[i], c[i + 1], c[i + 2]};
      m.spots.push_back(p);
    }
  }
  for (PlasmaSpot& p : m.spots) {
    p.amplitude = cfg.get_double("spot_amplitude", p.amplitude);
    p.width = cfg.get_double("spot_width", p.width);
    p.start = cfg.get_double("spot_start", p.start);
    p.duration = cfg.get_double("spot_duration", p.duration);
  }
  // Keys read above only when spots exist still count as known.
  for (const char* k : {"spot_amplitude", "spot_width", "spot_start", "spot_duration"}) (void)cfg.has(k);

  const std::string method = cfg.get_string("solver", "fgmres");
  if (method != "fgmres") throw ConfigError("config: run-streamer supports solver = fgmres only");
  m.solver = solver_from(method, cfg.get_string("pc", "ilu0"), cfg.get_double("tol", m.solver.tol),
                         cfg.get_int("restart", m.solver.restart), cfg.get_int("max_iter", m.solver.max_iter));
  m.validate();
  return r;
}

int cli_main(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"fvdom: parallel unstructured finite-volume toolkit"};
  app.set_version_flag("--version", version_string());
  app.require_subcommand(1);

  GenBoxArgs gen;
  auto* gen_cmd = app.add_subcommand("gen-box", "Write a structured tetrahedral box mesh (MSH 2.2)");
  gen_cmd->add_option("--n", gen.n, "Cells per direction")->check(CLI::PositiveNumber);
  gen_cmd->add_option("--nx", gen.nx, "Cells along x (overrides --n)");
  gen_cmd->add_option("--ny", gen.ny, "Cells along y (overrides --n)");
  gen_cmd->add_option("--nz", gen.nz, "Cells along z (overrides --n)");
  gen_cmd->add_option("--lo", gen.lo, "Lower corner x,y,z")->delimiter(',');
  gen_cmd->add_option("--hi", gen.hi, "Upper corner x,y,z")->delimiter(',');
  gen_cmd->add_option("--jitter", gen.jitter, "Interior node perturbation (fraction of spacing)");
  gen_cmd->add_option("--seed", gen.seed, "Jitter seed");
  gen_cmd->add_flag("--streamer", gen.streamer, "Name the sides inlet/outlet/lateral");
  gen_cmd->add_option("--out", gen.out, "Output .msh path")->required();

  PartitionArgs part;
  auto* part_cmd = app.add_subcommand("partition", "Partition a mesh and report per-partition statistics");
  add_common(part_cmd, part.common, false);
  part_cmd->add_option("--parts", part.parts, "Number of partitions")->check(CLI::PositiveNumber);
  part_cmd->add_flag("--stats", part.stats, "Print the statistics CSV to stdout");

  PoissonArgs poisson;
  poisson.common.workers = default_worker_count(1);
  auto* poisson_cmd = app.add_subcommand("solve-poisson", "Assemble and solve the Poisson problem");
  add_common(poisson_cmd, poisson.common);
  poisson_cmd->add_option("--bc", poisson.bc, "Boundary condition file (key = value)")->required();
  poisson_cmd->add_option("--solver", poisson.method, "fgmres or direct-dense");
  poisson_cmd->add_option("--pc", poisson.pc, "none, jacobi, block-jacobi or ilu0");
  poisson_cmd->add_option("--tol", poisson.tol, "Relative residual tolerance");
  poisson_cmd->add_option("--restart", poisson.restart, "FGMRES restart length");
  poisson_cmd->add_option("--max-iter", poisson.max_iter, "Iteration limit");
  poisson_cmd->add_option("--exact-linear", poisson.exact, "Report max error against a,bx,by,bz");
  poisson_cmd->add_option("--matrix-market", poisson.matrix_market, "Write the gathered matrix here");

  ConvDiffArgs convdiff;
  convdiff.common.workers = default_worker_count(1);
  auto* convdiff_cmd = app.add_subcommand("run-convdiff", "Advect and diffuse a Gaussian blob with RK3");
  add_common(convdiff_cmd, convdiff.common);
  convdiff_cmd->add_option("--bc", convdiff.bc, "Boundary condition file (default: neumann everywhere)");
  convdiff_cmd->add_option("--velocity", convdiff.velocity, "Constant velocity vx,vy,vz")->delimiter(',');
  convdiff_cmd->add_option("--diffusivity", convdiff.diffusivity, "Constant diffusivity");
  convdiff_cmd->add_option("--center", convdiff.center, "Blob centre x,y,z")->delimiter(',');
  convdiff_cmd->add_option("--sigma", convdiff.sigma, "Blob width");
  convdiff_cmd->add_option("--steps", convdiff.steps, "Number of steps");
  convdiff_cmd->add_option("--dt", convdiff.dt, "Time step (default: advisory CFL step)");
  convdiff_cmd->add_option("--cfl", convdiff.cfl, "CFL number for the advisory step");
  convdiff_cmd->add_option("--cadence", convdiff.cadence, "Snapshot every N steps (0: final only)");

  std::string streamer_config;
  auto* streamer_cmd = app.add_subcommand("run-streamer", "Run the streamer discharge model");
  streamer_cmd->add_option("--config", streamer_config, "key = value run configuration")->required();

  BenchArgs bench;
  auto* bench_cmd = app.add_subcommand("bench", "Time the FV operators (and optionally the Poisson solve)");
  bench_cmd->add_option("--mesh", bench.common.mesh, "MSH 2.2 mesh file");
  bench_cmd->add_option("--box", bench.box, "Generate a unit cube with N^3 hexahedra instead");
  bench_cmd->add_option("--jitter", bench.jitter, "Jitter for --box");
  bench_cmd->add_option("--workers", bench.workers, "Worker counts, e.g. 1,2,4")->delimiter(',');
  bench_cmd->add_option("--iterations", bench.iterations, "Timed repetitions (median reported)");
  bench_cmd->add_option("--warmup", bench.warmup, "Untimed warm-up repetitions");
  bench_cmd->add_option("--transport", bench.common.transport, "threads or sockets")
      ->check(CLI::IsMember({"threads", "sockets"}));
  bench_cmd->add_flag("--solve", bench.solve, "Also time assembly and preconditioned solves");
  bench_cmd->add_option("--pc", bench.pcs, "Preconditioners for --solve")->delimiter(',');
  bench_cmd->add_option("--tol", bench.tol, "Solver tolerance for --solve");
  bench_cmd->add_option("--out", bench.common.out, "Output directory");

  std::vector<std::string> reversed(args.begin() + (args.empty() ? 0 : 1), args.end());
  std::reverse(reversed.begin(), reversed.end());
  try {
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitUsage;
  }

  try {
    if (*gen_cmd) return run_gen_box(gen, args, out);
    if (*part_cmd) return run_partition(part, args, out);
    if (*poisson_cmd) return run_solve_poisson(poisson, args, out);
    if (*convdiff_cmd) return run_convdiff(convdiff, args, out);
    if (*streamer_cmd) return run_streamer(streamer_config, args, out, err);
    if (*bench_cmd) return run_bench(bench, args, out);
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kExitRuntime;
  }
  return kExitUsage;
}

int cli_main(int argc, char** argv) {
  return cli_main(std::vector<std::string>(argv, argv + argc), std::cout, std::cerr);
}

}  // namespace fvdom
