#include "coopeig/runner.hpp"

#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <json.hpp>
#include <memory>
#include <sstream>

#include "coopeig/detail.hpp"
#include "coopeig/expr.hpp"
#include "coopeig/sde.hpp"
#include "coopeig/stability.hpp"

namespace coopeig {

namespace {

using json = nlohmann::ordered_json;

struct ConfigError : ValidationError {
  explicit ConfigError(const std::string& what) : ValidationError("cli.run", what) {}
};

void reject_unknown(const json& obj, const std::string& where,
                    std::initializer_list<const char*> known) {
  for (auto it = obj.begin(); it != obj.end(); ++it) {
    bool ok = false;
    for (const char* k : known) ok = ok || it.key() == k;
    if (!ok) throw ConfigError("unknown key '" + it.key() + "' in " + where);
  }
}

const json& require(const json& obj, const char* key, const std::string& where) {
  auto it = obj.find(key);
  if (it == obj.end()) throw ConfigError("missing key '" + std::string(key) + "' in " + where);
  return *it;
}

Point parse_point(const json& arr, int dim, const std::string& where) {
  if (!arr.is_array() || static_cast<int>(arr.size()) != dim)
    throw ConfigError(where + " must be an array of " + std::to_string(dim) + " numbers");
  Point p{0, 0};
  for (int d = 0; d < dim; ++d) p[d] = arr[static_cast<std::size_t>(d)].get<double>();
  return p;
}

Shape parse_shape(const json& obj, int dim, const std::string& where) {
  std::string kind = require(obj, "shape", where).get<std::string>();
  if (kind == "ball") {
    reject_unknown(obj, where, {"shape", "radius", "center", "regimes"});
    Point center{0, 0};
    if (obj.contains("center")) center = parse_point(obj["center"], dim, where + ".center");
    return Shape::ball(center, require(obj, "radius", where).get<double>());
  }
  if (kind == "box") {
    reject_unknown(obj, where, {"shape", "lo", "hi", "regimes"});
    return Shape::make_box(parse_point(require(obj, "lo", where), dim, where + ".lo"),
                           parse_point(require(obj, "hi", where), dim, where + ".hi"));
  }
  throw ConfigError(where + ".shape must be 'ball' or 'box'");
}

RegionSpec parse_region(const json& obj, int dim, int regimes, const std::string& where) {
  RegionSpec region;
  region.shapes.push_back(parse_shape(obj, dim, where));
  if (obj.contains("regimes")) {
    for (const auto& k : obj["regimes"]) {
      int v = k.get<int>();
      if (v < 1 || v > regimes) throw ConfigError(where + ".regimes out of range");
      region.regimes.push_back(v);
    }
    if (region.regimes.empty()) throw ConfigError(where + ".regimes must be nonempty");
  } else {
    for (int k = 1; k <= regimes; ++k) region.regimes.push_back(k);
  }
  return region;
}

struct ExprOracle {
  std::shared_ptr<const Expr> expr;
  double operator()(const Point& x, int k) const { return expr->eval(x.data(), 2, k); }
};

std::shared_ptr<const Expr> parse_expr(const json& j, int dim, const std::string& where) {
  if (!j.is_string()) throw ConfigError(where + " must be an expression string");
  try {
    auto e = std::make_shared<Expr>(Expr::parse(j.get<std::string>()));
    if (e->max_var() > dim)
      throw ConfigError(where + " references x" + std::to_string(e->max_var()) +
                        " beyond dimension " + std::to_string(dim));
    return e;
  } catch (const SyntaxError& err) {
    throw ConfigError(where + ": " + err.what());
  }
}

// Expression list with one entry per regime (or a single shared entry).
std::vector<std::shared_ptr<const Expr>> parse_per_regime(const json& j, int dim,
                                                          int regimes,
                                                          const std::string& where) {
  if (!j.is_array() || (j.size() != 1 && static_cast<int>(j.size()) != regimes))
    throw ConfigError(where + " must list 1 or " + std::to_string(regimes) +
                      " expressions");
  std::vector<std::shared_ptr<const Expr>> out;
  for (std::size_t i = 0; i < j.size(); ++i)
    out.push_back(parse_expr(j[i], dim, where + "[" + std::to_string(i) + "]"));
  while (static_cast<int>(out.size()) < regimes) out.push_back(out.front());
  return out;
}

struct ParsedProblem {
  ProblemSpec spec;
};

ParsedProblem parse_problem(const json& problem) {
  reject_unknown(problem, "problem",
                 {"dim", "regimes", "window", "diffusion", "drift", "potential", "rates"});
  ParsedProblem out;
  ProblemSpec& spec = out.spec;
  spec.dim = require(problem, "dim", "problem").get<int>();
  if (spec.dim != 1 && spec.dim != 2) throw ConfigError("problem.dim must be 1 or 2");
  spec.regimes = require(problem, "regimes", "problem").get<int>();
  if (spec.regimes < 1) throw ConfigError("problem.regimes must be >= 1");

  const json& window = require(problem, "window", "problem");
  Shape wshape = parse_shape(window, spec.dim, "problem.window");
  spec.window = wshape.bounding_box(spec.dim);

  // Diffusion entries per regime: [a11] in 1d, [a11, a22, a12] in 2d.
  const json& diff = require(problem, "diffusion", "problem");
  if (!diff.is_array() || (diff.size() != 1 && static_cast<int>(diff.size()) != spec.regimes))
    throw ConfigError("problem.diffusion must list 1 or N regime entries");
  int need = spec.dim == 1 ? 1 : 3;
  std::vector<std::vector<std::shared_ptr<const Expr>>> a_exprs;
  for (const auto& entry : diff) {
    if (!entry.is_array() || static_cast<int>(entry.size()) != need)
      throw ConfigError("problem.diffusion entries need " + std::to_string(need) +
                        " expressions");
    std::vector<std::shared_ptr<const Expr>> comps;
    for (const auto& e : entry) comps.push_back(parse_expr(e, spec.dim, "problem.diffusion"));
    a_exprs.push_back(comps);
  }
  while (static_cast<int>(a_exprs.size()) < spec.regimes) a_exprs.push_back(a_exprs.front());

  const json& drift = require(problem, "drift", "problem");
  if (!drift.is_array() || (drift.size() != 1 && static_cast<int>(drift.size()) != spec.regimes))
    throw ConfigError("problem.drift must list 1 or N regime entries");
  std::vector<std::vector<std::shared_ptr<const Expr>>> b_exprs;
  for (const auto& entry : drift) {
    if (!entry.is_array() || static_cast<int>(entry.size()) != spec.dim)
      throw ConfigError("problem.drift entries need dim expressions");
    std::vector<std::shared_ptr<const Expr>> comps;
    for (const auto& e : entry) comps.push_back(parse_expr(e, spec.dim, "problem.drift"));
    b_exprs.push_back(comps);
  }
  while (static_cast<int>(b_exprs.size()) < spec.regimes) b_exprs.push_back(b_exprs.front());

  auto c_exprs = parse_per_regime(require(problem, "potential", "problem"), spec.dim,
                                  spec.regimes, "problem.potential");

  std::map<std::pair<int, int>, std::shared_ptr<const Expr>> rate_exprs;
  if (problem.contains("rates")) {
    for (auto it = problem["rates"].begin(); it != problem["rates"].end(); ++it) {
      int i = 0, j = 0;
      if (std::sscanf(it.key().c_str(), "%d->%d", &i, &j) != 2 || i == j || i < 1 ||
          j < 1 || i > spec.regimes || j > spec.regimes)
        throw ConfigError("problem.rates key '" + it.key() + "' is not 'i->j'");
      rate_exprs[{i, j}] = parse_expr(it.value(), spec.dim, "problem.rates." + it.key());
    }
  }

  int dim = spec.dim;
  spec.diffusion = [a_exprs, dim](const Point& x, int k) {
    const auto& comps = a_exprs[static_cast<std::size_t>(k - 1)];
    SymMat a;
    a.a11 = comps[0]->eval(x.data(), dim, k);
    if (dim == 2) {
      a.a22 = comps[1]->eval(x.data(), dim, k);
      a.a12 = comps[2]->eval(x.data(), dim, k);
    } else {
      a.a22 = a.a11;
      a.a12 = 0.0;
    }
    return a;
  };
  spec.drift = [b_exprs, dim](const Point& x, int k) {
    const auto& comps = b_exprs[static_cast<std::size_t>(k - 1)];
    Point b{0, 0};
    for (int d = 0; d < dim; ++d) b[d] = comps[static_cast<std::size_t>(d)]->eval(x.data(), dim, k);
    return b;
  };
  spec.potential = [c_exprs, dim](const Point& x, int k) {
    return c_exprs[static_cast<std::size_t>(k - 1)]->eval(x.data(), dim, k);
  };
  spec.rates = [rate_exprs, dim](const Point& x, int i, int j) {
    auto it = rate_exprs.find({i, j});
    return it == rate_exprs.end() ? 0.0 : it->second->eval(x.data(), dim, i);
  };
  return out;
}

struct Numerics {
  double h = 0.05;
  std::vector<double> radii{4, 8, 16};
  double tol = 1e-10;
  int sample_density = 16;
  std::uint64_t seed = 1;
};

Numerics parse_numerics(const json& cfg) {
  Numerics n;
  if (!cfg.contains("numerics")) return n;
  const json& j = cfg["numerics"];
  reject_unknown(j, "numerics", {"h", "radii", "tol", "sample_density", "seed"});
  if (j.contains("h")) n.h = j["h"].get<double>();
  if (j.contains("tol")) n.tol = j["tol"].get<double>();
  if (j.contains("sample_density")) n.sample_density = j["sample_density"].get<int>();
  if (j.contains("seed")) n.seed = j["seed"].get<std::uint64_t>();
  if (j.contains("radii")) {
    n.radii.clear();
    for (const auto& r : j["radii"]) n.radii.push_back(r.get<double>());
  }
  return n;
}

std::string iso_timestamp() {
  auto now = std::chrono::system_clock::now();
  std::time_t t = std::chrono::system_clock::to_time_t(now);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", std::gmtime(&t));
  return buf;
}

std::string csv_eigenfunction(const GridFn& f) {
  const Grid& g = *f.grid;
  std::ostringstream out;
  out.precision(17);
  out << (g.dim == 2 ? "x1,x2,regime,value\n" : "x1,regime,value\n");
  for (auto [node, k] : g.rows) {
    Point x = g.coord(node);
    out << x[0];
    if (g.dim == 2) out << "," << x[1];
    out << "," << k << "," << f.at(node, k) << "\n";
  }
  return out.str();
}

std::string csv_lambda_table(const PrincipalLimit& lim) {
  std::ostringstream out;
  out.precision(17);
  out << "radius,lambda,bracket_lo,bracket_hi\n";
  for (std::size_t i = 0; i < lim.radii.size(); ++i)
    out << lim.radii[i] << "," << lim.lambdas[i] << ","
        << lim.lambdas[i] - lim.bracket_widths[i] / 2 << ","
        << lim.lambdas[i] + lim.bracket_widths[i] / 2 << "\n";
  return out.str();
}

json verdict_json(const Verdict& v) {
  json out;
  out["classification"] = to_string(v.cls);
  out["radii"] = v.radii;
  out["evidence"] = v.evidence;
  if (!v.gap_probe.empty()) out["uniqueness_gap"] = v.gap_probe;
  out["extrapolated"] = v.extrapolated;
  out["threshold"] = v.threshold;
  return out;
}

struct TaskContext {
  ProblemSpec spec;
  Numerics num;
  int threads = 1;
  json report;
  std::map<std::string, std::string> csv;
};

SimConfig sim_config_from(const json& task, const TaskContext& ctx,
                          const std::string& where) {
  SimConfig cfg;
  cfg.seed = ctx.num.seed;
  cfg.threads = ctx.threads;
  if (task.contains("x0")) cfg.x0 = parse_point(task["x0"], ctx.spec.dim, where + ".x0");
  if (task.contains("k0")) cfg.k0 = task["k0"].get<int>();
  if (cfg.k0 < 1 || cfg.k0 > ctx.spec.regimes) throw ConfigError(where + ".k0 out of range");
  if (task.contains("dt")) cfg.dt = task["dt"].get<double>();
  if (task.contains("t_max")) cfg.t_max = task["t_max"].get<double>();
  if (task.contains("n_paths")) cfg.n_paths = task["n_paths"].get<int>();
  cfg.cap_radius = 0.95 * std::min(std::fabs(ctx.spec.window.hi[0]),
                                   std::fabs(ctx.spec.window.lo[0]));
  if (task.contains("cap_radius")) cfg.cap_radius = task["cap_radius"].get<double>();
  return cfg;
}

void run_eig(TaskContext& ctx, const json& task) {
  reject_unknown(task, "task", {"type", "radius", "export_matrix"});
  double radius = require(task, "radius", "task").get<double>();
  auto grid = std::make_shared<Grid>(
      build_grid(ctx.spec, RegionSpec::ball_all(radius, ctx.spec.regimes), ctx.num.h));
  DiscreteOperator op = assemble(ctx.spec, grid, true, true);
  if (task.contains("export_matrix") && task["export_matrix"].get<bool>()) {
    std::ostringstream mm;
    mm << "%%MatrixMarket matrix coordinate real general\n";
    mm << op.A.rows() << " " << op.A.cols() << " " << op.A.nonZeros() << "\n";
    mm.precision(17);
    for (int col = 0; col < op.A.outerSize(); ++col)
      for (SpMat::InnerIterator it(op.A, col); it; ++it)
        mm << it.row() + 1 << " " << it.col() + 1 << " " << it.value() << "\n";
    ctx.csv["operator.mtx"] = mm.str();
  }
  EigenPair pair = principal_eigenpair(op, ctx.num.tol);
  json& res = ctx.report["results"];
  res["radius"] = radius;
  res["lambda"] = pair.lambda;
  res["bracket_lo"] = pair.bracket_lo;
  res["bracket_hi"] = pair.bracket_hi;
  res["bracket_width"] = pair.bracket_width();
  res["iterations"] = pair.iterations;
  res["converged"] = pair.converged;
  res["rows"] = op.A.rows();
  ctx.csv["eigenfunction.csv"] = csv_eigenfunction(pair.psi);
}

void run_lambda_star(TaskContext& ctx, const json& task) {
  reject_unknown(task, "task", {"type"});
  SpectrumOptions opt;
  opt.tol = ctx.num.tol;
  PrincipalLimit lim = lambda_star(ctx.spec, ctx.num.radii, ctx.num.h, opt);
  json& res = ctx.report["results"];
  res["radii"] = lim.radii;
  res["lambdas"] = lim.lambdas;
  res["bracket_widths"] = lim.bracket_widths;
  res["lambda_star"] = lim.lambda_star;
  res["lambda_star_uncertainty"] = lim.uncertainty;
  res["converged"] = lim.converged;
  res["extrapolated"] = lim.extrapolated;
  // Flatness of psi on the inner window, for the constant-eigenfunction case.
  double wmin = std::numeric_limits<double>::infinity(), wmax = 0.0;
  const Grid& g = *lim.last_grid;
  for (int r : g.window_rows(lim.window_radius)) {
    auto [node, k] = g.rows[static_cast<std::size_t>(r)];
    double v = lim.psi_star().at(node, k);
    wmin = std::min(wmin, v);
    wmax = std::max(wmax, v);
  }
  res["psi_window_spread"] = wmax / wmin - 1.0;
  res["window_radius"] = lim.window_radius;
  ctx.csv["lambda_table.csv"] = csv_lambda_table(lim);
  ctx.csv["psi_star.csv"] = csv_eigenfunction(lim.psi_star());
}

void run_twist(TaskContext& ctx, const json& task) {
  reject_unknown(task, "task", {"type", "phi"});
  double radius = ctx.num.radii.back();
  auto grid = std::make_shared<Grid>(
      build_grid(ctx.spec, RegionSpec::ball_all(radius, ctx.spec.regimes), ctx.num.h));
  DiscreteOperator op = assemble(ctx.spec, grid, true, true);
  EigenPair pair = principal_eigenpair(op, ctx.num.tol);
  TwistedProblem tp = twist(ctx.spec, pair.psi, pair.lambda, grid);

  std::function<double(const Point&, int)> phi = [](const Point& x, int) {
    return 1.0 + 0.5 * std::exp(-x[0] * x[0] - x[1] * x[1]);
  };
  if (task.contains("phi")) {
    auto exprs = parse_per_regime(task["phi"], ctx.spec.dim, ctx.spec.regimes, "task.phi");
    int dim = ctx.spec.dim;
    phi = [exprs, dim](const Point& x, int k) {
      return exprs[static_cast<std::size_t>(k - 1)]->eval(x.data(), dim, k);
    };
  }
  ProductIdentityReport coarse = product_identity_residual(ctx.spec, tp, phi);

  auto grid2 = std::make_shared<Grid>(build_grid(
      ctx.spec, RegionSpec::ball_all(radius, ctx.spec.regimes), ctx.num.h / 2));
  DiscreteOperator op2 = assemble(ctx.spec, grid2, true, true);
  EigenPair pair2 = principal_eigenpair(op2, ctx.num.tol);
  TwistedProblem tp2 = twist(ctx.spec, pair2.psi, pair2.lambda, grid2);
  ProductIdentityReport fine = product_identity_residual(ctx.spec, tp2, phi);

  json& res = ctx.report["results"];
  res["lambda"] = pair.lambda;
  res["bracket_width"] = pair.bracket_width();
  res["identity_residual_max"] = coarse.max_residual;
  res["identity_residual_mean"] = coarse.mean_residual;
  res["identity_residual_max_half_h"] = fine.max_residual;
  res["residual_ratio"] =
      fine.max_residual > 0 ? coarse.max_residual / fine.max_residual : 0.0;
  res["twisted_row_sum_max"] = coarse.max_row_sum;
  res["rows_checked"] = coarse.rows_checked;
}

void run_perturb(TaskContext& ctx, const json& task) {
  reject_unknown(task, "task", {"type", "bump", "support_radius", "t_grid"});
  PerturbationSpec pert;
  auto exprs = parse_per_regime(require(task, "bump", "task"), ctx.spec.dim,
                                ctx.spec.regimes, "task.bump");
  int dim = ctx.spec.dim;
  pert.bump = [exprs, dim](const Point& x, int k) {
    return exprs[static_cast<std::size_t>(k - 1)]->eval(x.data(), dim, k);
  };
  pert.support_radius = require(task, "support_radius", "task").get<double>();
  for (const auto& t : require(task, "t_grid", "task")) pert.t_grid.push_back(t.get<double>());

  SpectrumOptions opt;
  opt.tol = ctx.num.tol;
  MonotonicityReport rep = perturbation_sweep(ctx.spec, pert, ctx.num.radii, ctx.num.h, opt);
  json& res = ctx.report["results"];
  json pts = json::array();
  for (const auto& p : rep.points) {
    json q;
    q["t"] = p.t;
    q["lambda_star"] = p.lambda;
    q["uncertainty"] = p.uncertainty;
    pts.push_back(q);
  }
  res["sweep"] = pts;
  res["lambda_at_zero"] = rep.lambda_at_zero;
  res["gap_tol"] = rep.gap_tol;
  res["right_monotone"] = rep.right_monotone;
  res["strictly_monotone"] = rep.strictly_monotone;
  res["min_right_gap"] = rep.min_right_gap;
  res["min_left_gap"] = rep.min_left_gap;
  res["concavity_defect"] = rep.concavity_defect;
}

void run_diagnose(TaskContext& ctx, const json& task) {
  reject_unknown(task, "task",
                 {"type", "C", "targets", "window_radius", "lyapunov", "exp_stability"});
  double C = task.contains("C") ? task["C"].get<double>() : 1.0;
  StabilityOptions opt;
  opt.eig_tol = ctx.num.tol;
  if (task.contains("window_radius"))
    opt.window_radius = task["window_radius"].get<double>();
  json& res = ctx.report["results"];
  res["regularity"] = verdict_json(
      regularity_test(ctx.spec, C, ctx.num.radii, ctx.num.h, opt));
  if (task.contains("targets")) {
    json arr = json::array();
    int idx = 0;
    for (const auto& t : task["targets"]) {
      RegionSpec target = parse_region(t, ctx.spec.dim, ctx.spec.regimes,
                                       "task.targets[" + std::to_string(idx) + "]");
      json entry;
      entry["target"] = t;
      entry["recurrence"] =
          verdict_json(recurrence_test(ctx.spec, target, ctx.num.radii, ctx.num.h, opt));
      arr.push_back(entry);
      ++idx;
    }
    res["targets"] = arr;
  }
  if (task.contains("lyapunov")) {
    const json& ly = task["lyapunov"];
    reject_unknown(ly, "task.lyapunov", {"D", "D1", "K"});
    LyapunovCertificate cert = lyapunov_construct(
        ctx.spec,
        parse_region(require(ly, "D", "task.lyapunov"), ctx.spec.dim, ctx.spec.regimes,
                     "task.lyapunov.D"),
        parse_region(require(ly, "D1", "task.lyapunov"), ctx.spec.dim, ctx.spec.regimes,
                     "task.lyapunov.D1"),
        parse_region(require(ly, "K", "task.lyapunov"), ctx.spec.dim, ctx.spec.regimes,
                     "task.lyapunov.K"),
        ctx.num.h, opt);
    json c;
    c["valid"] = cert.valid;
    c["delta1"] = cert.delta1;
    c["delta2"] = cert.delta2;
    c["residual"] = cert.residual;
    c["residual_tol"] = cert.resid_tol;
    c["lambda_inner"] = cert.lambda_inner;
    c["lambda_outer"] = cert.lambda_outer;
    res["lyapunov"] = c;
  }
  if (task.contains("exp_stability")) {
    const json& es = task["exp_stability"];
    reject_unknown(es, "task.exp_stability", {"bump", "support_radius"});
    PerturbationSpec pert;
    auto exprs = parse_per_regime(require(es, "bump", "task.exp_stability"),
                                  ctx.spec.dim, ctx.spec.regimes,
                                  "task.exp_stability.bump");
    int dim = ctx.spec.dim;
    pert.bump = [exprs, dim](const Point& x, int k) {
      return exprs[static_cast<std::size_t>(k - 1)]->eval(x.data(), dim, k);
    };
    pert.support_radius =
        require(es, "support_radius", "task.exp_stability").get<double>();
    pert.t_grid = {-1.0, 0.0, 1.0};
    SpectrumOptions sopt;
    sopt.tol = ctx.num.tol;
    PrincipalLimit principal = lambda_star(ctx.spec, ctx.num.radii, ctx.num.h, sopt);
    ExpStabilityReport rep =
        exp_stability_test(ctx.spec, principal, pert, ctx.num.radii, ctx.num.h, opt);
    json e;
    e["classification"] = to_string(rep.verdict.cls);
    e["gap_limit"] = rep.gap_limit;
    e["gap_largest_radius"] = rep.gap_largest;
    e["gap_tol"] = rep.gap_tol;
    e["certificate_valid"] = rep.certificate.valid;
    e["certificate_residual"] = rep.certificate.residual;
    e["certificate_residual_tol"] = rep.certificate.resid_tol;
    e["twisted_regularity"] = to_string(rep.twisted_regularity.cls);
    res["exp_stability"] = e;
  }
}

void run_simulate(TaskContext& ctx, const json& task) {
  reject_unknown(task, "task",
                 {"type", "x0", "k0", "dt", "t_max", "n_paths", "cap_radius",
                  "functional", "dump_paths"});
  SimConfig cfg = sim_config_from(task, ctx, "task");
  if (task.contains("dump_paths")) cfg.dump_first = task["dump_paths"].get<int>();
  Functional fn = Functional::terminal(1.0);
  if (task.contains("functional")) {
    const json& f = task["functional"];
    std::string kind = require(f, "kind", "task.functional").get<std::string>();
    if (kind == "terminal") {
      reject_unknown(f, "task.functional", {"kind", "T"});
      fn = Functional::terminal(require(f, "T", "task.functional").get<double>());
    } else if (kind == "hit") {
      reject_unknown(f, "task.functional", {"kind", "target"});
      fn = Functional::hit(parse_region(require(f, "target", "task.functional"),
                                        ctx.spec.dim, ctx.spec.regimes,
                                        "task.functional.target"));
    } else {
      throw ConfigError("task.functional.kind must be 'terminal' or 'hit'");
    }
  }
  TrajectoryBatch batch = simulate(ctx.spec, cfg, fn);
  json& res = ctx.report["results"];
  res["n_paths"] = batch.total();
  res["n_terminal"] = batch.n_terminal;
  res["n_hit"] = batch.n_hit;
  res["n_censored"] = batch.n_censored;
  res["n_exploded"] = batch.n_exploded;
  double mean_t = 0.0, mean_x = 0.0, var_x = 0.0;
  for (const auto& p : batch.paths) {
    mean_t += p.t_end;
    mean_x += p.x_end[0];
  }
  mean_t /= batch.total();
  mean_x /= batch.total();
  for (const auto& p : batch.paths) var_x += (p.x_end[0] - mean_x) * (p.x_end[0] - mean_x);
  var_x /= std::max(1, batch.total() - 1);
  res["mean_t_end"] = mean_t;
  res["mean_x1_end"] = mean_x;
  res["var_x1_end"] = var_x;
  res["var_x1_se"] = var_x * std::sqrt(2.0 / std::max(1, batch.total() - 1));
  std::array<double, kMaxRegimes> occ{};
  for (const auto& p : batch.paths)
    for (int k = 0; k < ctx.spec.regimes; ++k) occ[static_cast<std::size_t>(k)] += p.occupation[static_cast<std::size_t>(k)];
  json occj = json::array();
  for (int k = 0; k < ctx.spec.regimes; ++k)
    occj.push_back(occ[static_cast<std::size_t>(k)] / (mean_t * batch.total()));
  res["occupation_fraction"] = occj;
  json jumps = json::array();
  for (int i = 0; i < ctx.spec.regimes; ++i) {
    json row = json::array();
    for (int j = 0; j < ctx.spec.regimes; ++j)
      row.push_back(batch.jump_counts[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)]);
    jumps.push_back(row);
  }
  res["jump_counts"] = jumps;
  for (std::size_t p = 0; p < batch.dumps.size(); ++p) {
    std::ostringstream out;
    out.precision(17);
    out << (ctx.spec.dim == 2 ? "t,x1,x2,regime\n" : "t,x1,regime\n");
    for (const auto& row : batch.dumps[p]) {
      out << row[0] << "," << row[1];
      if (ctx.spec.dim == 2) out << "," << row[2];
      out << "," << static_cast<int>(row[3]) << "\n";
    }
    ctx.csv["path_" + std::to_string(p) + ".csv"] = out.str();
  }
}

void run_check_fk(TaskContext& ctx, const json& task) {
  reject_unknown(task, "task",
                 {"type", "x0", "k0", "dt", "t_max", "n_paths", "cap_radius", "T", "g",
                  "radius"});
  SimConfig cfg = sim_config_from(task, ctx, "task");
  double T = require(task, "T", "task").get<double>();
  double radius = task.contains("radius") ? task["radius"].get<double>()
                                          : ctx.num.radii.back();
  auto g_exprs = parse_per_regime(require(task, "g", "task"), ctx.spec.dim,
                                  ctx.spec.regimes, "task.g");
  int dim = ctx.spec.dim;
  auto g_fn = [g_exprs, dim](const Point& x, int k) {
    return g_exprs[static_cast<std::size_t>(k - 1)]->eval(x.data(), dim, k);
  };
  auto grid = std::make_shared<Grid>(
      build_grid(ctx.spec, RegionSpec::ball_all(radius, ctx.spec.regimes), ctx.num.h));
  DiscreteOperator op = assemble(ctx.spec, grid, true, true);
  EigenPair pair = principal_eigenpair(op, ctx.num.tol);
  TwistedProblem tp = twist(ctx.spec, pair.psi, pair.lambda, grid);
  cfg.cap_radius = std::min(cfg.cap_radius, 0.95 * radius);
  TwoSidedCheck check = feynman_kac_check(ctx.spec, pair.psi, pair.lambda, tp, g_fn, T, cfg);
  json& res = ctx.report["results"];
  res["lambda"] = pair.lambda;
  res["T"] = T;
  res["lhs"] = check.lhs;
  res["lhs_se"] = check.lhs_se;
  res["rhs"] = check.rhs;
  res["rhs_se"] = check.rhs_se;
  res["z"] = check.z;
  res["lhs_dt_halved"] = check.lhs_half;
  res["rhs_dt_halved"] = check.rhs_half;
  res["bias_ok"] = check.bias_ok;
  res["passed"] = check.passed;
}

void run_check_hitting(TaskContext& ctx, const json& task) {
  reject_unknown(task, "task",
                 {"type", "x0", "k0", "dt", "t_max", "n_paths", "cap_radius",
                  "ball_radius"});
  SimConfig cfg = sim_config_from(task, ctx, "task");
  double ball_radius = require(task, "ball_radius", "task").get<double>();
  SpectrumOptions opt;
  opt.tol = ctx.num.tol;
  PrincipalLimit lim = lambda_star(ctx.spec, ctx.num.radii, ctx.num.h, opt);
  cfg.cap_radius = std::min(cfg.cap_radius, 0.95 * ctx.num.radii.back());
  HittingCheck check = hitting_representation_check(ctx.spec, lim, ball_radius, cfg);
  json& res = ctx.report["results"];
  res["lambda_star"] = lim.lambda_star;
  res["lambda_star_uncertainty"] = lim.uncertainty;
  res["estimate"] = check.estimate;
  res["se"] = check.se;
  res["reference"] = check.reference;
  res["rel_deviation"] = check.rel_deviation;
  res["censored_fraction"] = check.censored_fraction;
  res["exploded_fraction"] = check.exploded_fraction;
  res["passed"] = check.passed;
}

}  // namespace

RunResult run_config_json(const std::string& config_json, int threads,
                          long long seed_override) {
  RunResult result;
  json cfg;
  TaskContext ctx;
  std::string task_type;
  try {
    cfg = json::parse(config_json);
    reject_unknown(cfg, "config", {"problem", "task", "numerics", "output"});
    ParsedProblem prob = parse_problem(require(cfg, "problem", "config"));
    ctx.spec = prob.spec;
    ctx.num = parse_numerics(cfg);
    if (seed_override >= 0) ctx.num.seed = static_cast<std::uint64_t>(seed_override);
    ctx.threads = std::max(1, threads);
    const json& task = require(cfg, "task", "config");
    task_type = require(task, "type", "task").get<std::string>();
    if (cfg.contains("output"))
      reject_unknown(cfg["output"], "output", {"dir", "formats"});

    ValidationReport vr = validate(ctx.spec, ctx.num.sample_density);
    if (!vr.passed) {
      const Violation& v = vr.violations.front();
      result.exit_code = 2;
      result.message = "model.validate: violation (" + v.detail + ") at x=(" +
                       std::to_string(v.x[0]) +
                       (ctx.spec.dim == 2 ? "," + std::to_string(v.x[1]) : "") +
                       "), regime " + std::to_string(v.regime_i);
      return result;
    }

    // Thread count is intentionally absent: reports from the same config and
    // seed are byte-identical at any thread count, timestamp aside.
    ctx.report["coopeig_version"] = "0.1.0";
    ctx.report["task"] = task_type;
    ctx.report["timestamp"] = iso_timestamp();
    ctx.report["seed"] = ctx.num.seed;
    ctx.report["status"] = "ok";
    json tol;
    tol["eig_tol"] = ctx.num.tol;
    tol["sample_density"] = ctx.num.sample_density;
    tol["h"] = ctx.num.h;
    tol["rate_edge_tol"] = kRateEdgeTol;
    tol["ellipticity_tol"] = kEllipticityTol;
    ctx.report["tolerances"] = tol;
    ctx.report["results"] = json::object();

    if (task_type == "eig") run_eig(ctx, task);
    else if (task_type == "lambda-star") run_lambda_star(ctx, task);
    else if (task_type == "twist") run_twist(ctx, task);
    else if (task_type == "perturb") run_perturb(ctx, task);
    else if (task_type == "diagnose") run_diagnose(ctx, task);
    else if (task_type == "simulate") run_simulate(ctx, task);
    else if (task_type == "check-fk") run_check_fk(ctx, task);
    else if (task_type == "check-hitting") run_check_hitting(ctx, task);
    else throw ConfigError("unknown task.type '" + task_type + "'");

    result.report_json = ctx.report.dump(2) + "\n";
    result.csv_files = std::move(ctx.csv);
    result.message = "ok";
    return result;
  } catch (const Error& err) {
    if (err.kind() == Error::Kind::Validation) {
      result.exit_code = 2;
      result.message = err.what();
      result.report_json.clear();
      result.csv_files.clear();
      return result;
    }
    // Numerical failure: partial report with the error recorded.
    result.exit_code = 3;
    result.message = err.what();
    ctx.report["status"] = "numerical-failure";
    ctx.report["error"] = err.what();
    result.report_json = ctx.report.dump(2) + "\n";
    result.csv_files = std::move(ctx.csv);
    return result;
  } catch (const json::exception& err) {
    result.exit_code = 2;
    result.message = std::string("cli.run: config parse error: ") + err.what();
    return result;
  }
}

RunResult run_config_file(const std::string& config_path, int threads,
                          long long seed_override) {
  std::ifstream in(config_path);
  if (!in) {
    RunResult r;
    r.exit_code = 2;
    r.message = "cli.run: cannot read config file " + config_path;
    return r;
  }
  std::ostringstream buf;
  buf << in.rdbuf();
  return run_config_json(buf.str(), threads, seed_override);
}

namespace detail {

ProblemSpec parse_problem_block(const std::string& problem_json) {
  try {
    json block = json::parse(problem_json);
    return parse_problem(block).spec;
  } catch (const json::exception& err) {
    throw ValidationError("model.parse", err.what());
  }
}

}  // namespace detail

void write_outputs(const RunResult& result, const std::string& out_dir) {
  if (result.exit_code == 2) return;
  std::filesystem::create_directories(out_dir);
  {
    std::ofstream out(out_dir + "/report.json", std::ios::binary);
    out << result.report_json;
  }
  for (const auto& [name, content] : result.csv_files) {
    std::ofstream out(out_dir + "/" + name, std::ios::binary);
    out << content;
  }
}

}  // namespace coopeig
