#include "coopeig/stability.hpp"

#include <algorithm>
#include <cmath>

namespace coopeig {

const char* to_string(Classification c) {
  switch (c) {
    case Classification::Regular: return "regular";
    case Classification::NotRegular: return "not-regular";
    case Classification::Recurrent: return "recurrent";
    case Classification::Transient: return "transient";
    case Classification::ExpStable: return "exp-stable";
    case Classification::Inconclusive: return "inconclusive";
  }
  return "?";
}

namespace {

double window_radius_or_default(const StabilityOptions& opt,
                                const std::vector<double>& radii) {
  return opt.window_radius > 0.0 ? opt.window_radius : radii.front() / 2.0;
}

bool aitken_limit(const std::vector<double>& seq, double& out) {
  std::size_t n = seq.size();
  if (n < 3) return false;
  double d1 = seq[n - 2] - seq[n - 3];
  double d2 = seq[n - 1] - seq[n - 2];
  if (d1 == 0.0 || d2 == 0.0) return false;
  double rho = d2 / d1;
  if (rho <= 0.01 || rho >= 0.95) return false;
  out = seq[n - 1] + d2 * rho / (1.0 - rho);
  return true;
}

}  // namespace

Verdict regularity_test(const ProblemSpec& spec_generator, double C,
                        const std::vector<double>& radii, double h,
                        const StabilityOptions& opt) {
  if (C <= 0.0)
    throw ValidationError("stability.regularity_test", "C must be positive");
  Verdict verdict;
  verdict.radii = radii;
  verdict.threshold = opt.reg_tol;
  double window = window_radius_or_default(opt, radii);

  for (double radius : radii) {
    auto grid = std::make_shared<Grid>(build_grid(
        spec_generator, RegionSpec::ball_all(radius, spec_generator.regimes), h));
    DiscreteOperator op = assemble(spec_generator, grid, false, true);
    op.add_to_diagonal(-C);
    GridFn u = solve_dirichlet(
        op, [](const Point&, int) { return 1.0; },
        [](const Point&, int) { return 0.0; });
    double wmax = 0.0;
    for (int r : grid->window_rows(window)) {
      auto [node, k] = grid->rows[static_cast<std::size_t>(r)];
      wmax = std::max(wmax, u.at(node, k));
    }
    verdict.evidence.push_back(wmax);
  }

  double last = verdict.evidence.back();
  verdict.extrapolated = last;
  aitken_limit(verdict.evidence, verdict.extrapolated);
  std::size_t n = verdict.evidence.size();
  double prev = n >= 2 ? verdict.evidence[n - 2] : last;
  if (last <= opt.reg_tol)
    verdict.cls = Classification::Regular;
  else if (last > 10.0 * opt.reg_tol && prev > 10.0 * opt.reg_tol &&
           std::fabs(last - prev) <= 0.1 * last)
    verdict.cls = Classification::NotRegular;
  else
    verdict.cls = Classification::Inconclusive;
  return verdict;
}

Verdict recurrence_test(const ProblemSpec& spec_generator, const RegionSpec& target,
                        const std::vector<double>& radii, double h,
                        const StabilityOptions& opt) {
  Verdict verdict;
  verdict.radii = radii;
  verdict.threshold = opt.hit_tol;
  double window = window_radius_or_default(opt, radii);
  Box target_box = target.bounding_box(spec_generator.dim);
  for (int d = 0; d < spec_generator.dim; ++d)
    if (target_box.lo[d] < -radii.front() || target_box.hi[d] > radii.front())
      throw ValidationError("stability.recurrence_test",
                            "target must sit inside the smallest radius");

  for (double radius : radii) {
    auto grid = std::make_shared<Grid>(build_grid_exterior(
        spec_generator, RegionSpec::ball_all(radius, spec_generator.regimes), target, h));
    DiscreteOperator op = assemble(spec_generator, grid, false, true);
    DirichletSolver solver(op);
    // Boundary data keyed off the slot tag: hole slots 1, outer slots the
    // variant value.
    auto data = [&](double outer_value) {
      return [grid, outer_value](const Point& x, int k) {
        // Recover the slot to read its tag.
        int i = static_cast<int>(std::llround(x[0] / grid->h));
        int j = grid->dim == 2 ? static_cast<int>(std::llround(x[1] / grid->h)) : 0;
        int s = grid->slot(grid->node_linear(i, j), k);
        return grid->tag[static_cast<std::size_t>(s)] == Grid::BoundaryTag::Hole
                   ? 1.0
                   : outer_value;
      };
    };
    auto zero = [](const Point&, int) { return 0.0; };
    GridFn u0 = solver.solve(data(0.0), zero);
    GridFn u1 = solver.solve(data(1.0), zero);
    double wmin = std::numeric_limits<double>::infinity();
    double gap = 0.0;
    for (int r : grid->window_rows(window)) {
      auto [node, k] = grid->rows[static_cast<std::size_t>(r)];
      wmin = std::min(wmin, u0.at(node, k));
      gap = std::max(gap, u1.at(node, k) - u0.at(node, k));
    }
    verdict.evidence.push_back(wmin);
    verdict.gap_probe.push_back(gap);
  }

  double last = verdict.evidence.back();
  std::size_t n = verdict.evidence.size();
  double prev = n >= 2 ? verdict.evidence[n - 2] : last;
  verdict.extrapolated = last;
  double extrap = last;
  // Hitting probabilities lie in [u_last, 1]; Aitken may overshoot when the
  // approach is faster than geometric, so project into that interval.
  if (aitken_limit(verdict.evidence, extrap))
    verdict.extrapolated = std::clamp(extrap, std::min(last, 1.0), 1.0);
  if (verdict.extrapolated >= 1.0 - opt.hit_tol)
    verdict.cls = Classification::Recurrent;
  else if (last <= 1.0 - 10.0 * opt.hit_tol && std::fabs(last - prev) <= opt.hit_tol)
    verdict.cls = Classification::Transient;
  else
    verdict.cls = Classification::Inconclusive;
  return verdict;
}

namespace {

// Verifies Ltw V <= source_term - delta V with the exact ratio transform.
// Bounded-domain form: source_term = delta2 1_K, delta2 = max_K V.
// Whole-space form:    source_term = kappa0 1_K, kappa0 absorbing K rows.
LyapunovCertificate finish_certificate(const DiscreteOperator& op_generator,
                                       const GridFn& psi_inner, GridFn V,
                                       double delta, bool whole_space,
                                       const std::function<bool(const Point&, int)>& in_K,
                                       double scale_hint) {
  const Grid& g = *op_generator.grid;
  LyapunovCertificate cert;
  cert.grid = op_generator.grid;
  cert.delta1 = delta;

  // Rescale to V >= 1 over interior slots; the inequality is scale invariant.
  double vmin = std::numeric_limits<double>::infinity();
  double vmax = 0.0;
  for (auto [node, k] : g.rows) {
    vmin = std::min(vmin, V.at(node, k));
    vmax = std::max(vmax, V.at(node, k));
  }
  if (!(vmin > 0.0))
    throw NumericError("stability.lyapunov", "ratio Lyapunov candidate not positive");
  for (double& v : V.v) v /= vmin;
  vmax /= vmin;

  Eigen::VectorXd twisted_v = twisted_apply(op_generator, psi_inner, V);
  cert.resid_tol = 1e-8 * scale_hint * (1.0 + vmax);

  double source = 0.0;
  for (int r = 0; r < g.n_rows(); ++r) {
    auto [node, k] = g.rows[static_cast<std::size_t>(r)];
    if (!in_K(g.coord(node), k)) continue;
    double candidate = whole_space ? twisted_v[r] + delta * V.at(node, k)
                                   : V.at(node, k);
    source = std::max(source, candidate);
  }
  source = std::max(source, 0.0);
  (whole_space ? cert.kappa0 : cert.delta2) = source;

  double residual = 0.0;
  for (int r = 0; r < g.n_rows(); ++r) {
    auto [node, k] = g.rows[static_cast<std::size_t>(r)];
    double bound = in_K(g.coord(node), k) ? source : 0.0;
    residual = std::max(residual, twisted_v[r] + delta * V.at(node, k) - bound);
  }
  cert.residual = std::max(residual, 0.0);
  cert.valid = cert.residual <= cert.resid_tol;
  cert.V = std::move(V);
  return cert;
}

}  // namespace

LyapunovCertificate lyapunov_construct(const ProblemSpec& spec, const RegionSpec& D,
                                       const RegionSpec& D1, const RegionSpec& K,
                                       double h, const StabilityOptions& opt) {
  auto grid_d = std::make_shared<Grid>(build_grid(spec, D, h));
  auto grid_d1 = std::make_shared<Grid>(build_grid(spec, D1, h));

  DiscreteOperator op_d = assemble(spec, grid_d, true, true);
  EigenPair inner = principal_eigenpair(op_d, opt.eig_tol);

  ProblemSpec dented = spec;
  auto pot = spec.potential;
  RegionSpec k_region = K;
  int dim = spec.dim;
  dented.potential = [pot, k_region, dim](const Point& x, int k) {
    return pot(x, k) - (k_region.contains(x, dim, k) ? 1.0 : 0.0);
  };
  DiscreteOperator op_d1 = assemble(dented, grid_d1, true, true);
  EigenPair outer = principal_eigenpair(op_d1, opt.eig_tol);

  double delta1 = outer.lambda - inner.lambda;
  double unc = inner.bracket_width() + outer.bracket_width();
  if (delta1 <= unc)
    throw NumericError("stability.lyapunov_construct",
                       "GapNonpositive: lambda(D1, c - 1_K) - lambda(D) = " +
                           std::to_string(delta1) +
                           " does not exceed solver uncertainty; refine h or "
                           "enlarge D1");

  // V = Psi_{D1} / Psi_D at interior slots of the D grid. Both grids share
  // the lattice, so transfer by integer node index.
  GridFn V(*grid_d, 0.0);
  for (auto [node, k] : grid_d->rows) {
    auto idx = grid_d->node_index(node);
    if (!grid_d1->node_in_box(idx[0], idx[1]))
      throw NumericError("stability.lyapunov_construct", "D1 does not cover D");
    double denom = inner.psi.at(node, k);
    double numer = outer.psi.at(grid_d1->node_linear(idx[0], idx[1]), k);
    if (!(numer > 0.0))
      throw NumericError("stability.lyapunov_construct",
                         "D1 eigenfunction vanishes inside D; D1 must contain "
                         "the closure of D");
    V.at(node, k) = numer / denom;
  }

  DiscreteOperator op_gen = assemble(spec, grid_d, false, true);
  auto in_K = [k_region, dim](const Point& x, int k) {
    return k_region.contains(x, dim, k);
  };
  double scale = 1.0 + std::fabs(inner.lambda) + std::fabs(outer.lambda);
  LyapunovCertificate cert =
      finish_certificate(op_gen, inner.psi, std::move(V), delta1, false, in_K, scale);
  cert.lambda_inner = inner.lambda;
  cert.lambda_outer = outer.lambda;
  return cert;
}

ExpStabilityReport exp_stability_test(const ProblemSpec& spec,
                                      const PrincipalLimit& principal,
                                      const PerturbationSpec& pert,
                                      const std::vector<double>& radii, double h,
                                      const StabilityOptions& opt) {
  ExpStabilityReport report;

  ProblemSpec lowered = spec;
  auto pot = spec.potential;
  auto bump = pert.bump;
  lowered.potential = [pot, bump](const Point& x, int k) {
    return pot(x, k) - bump(x, k);
  };
  SpectrumOptions sopt;
  sopt.tol = opt.eig_tol;
  PrincipalLimit perturbed = lambda_star(lowered, radii, h, sopt);

  report.gap_limit = perturbed.lambda_star - principal.lambda_star;
  report.gap_largest = perturbed.lambdas.back() - principal.lambdas.back();
  report.gap_tol = perturbed.uncertainty + principal.uncertainty;

  double delta = std::min(report.gap_limit, report.gap_largest) - report.gap_tol;
  if (delta <= 0.0) {
    report.certificate.gap_nonpositive = true;
    report.verdict.cls = Classification::Inconclusive;
    report.verdict.threshold = report.gap_tol;
    return report;
  }

  const Grid& g = *principal.last_grid;
  if (perturbed.last_grid->n_slots() != g.n_slots())
    throw NumericError("stability.exp_stability_test", "grid mismatch");
  GridFn V(g, 0.0);
  for (auto [node, k] : g.rows)
    V.at(node, k) = perturbed.psi_star().at(node, k) / principal.psi_star().at(node, k);

  DiscreteOperator op_gen = assemble(spec, principal.last_grid, false, true);
  double support = pert.support_radius;
  int dim = spec.dim;
  auto in_B = [support, dim](const Point& x, int) {
    double r2 = x[0] * x[0] + (dim == 2 ? x[1] * x[1] : 0.0);
    return r2 <= support * support * (1 + 1e-12);
  };
  double scale = 1.0 + std::fabs(principal.lambdas.back()) +
                 std::fabs(perturbed.lambdas.back());
  report.certificate = finish_certificate(op_gen, principal.psi_star(), std::move(V),
                                          delta, true, in_B, scale);
  report.certificate.lambda_inner = principal.lambdas.back();
  report.certificate.lambda_outer = perturbed.lambdas.back();

  // Regularity of the twisted generator, run inside the data window.
  TwistedProblem tp = twist(spec, principal.psi_star(), principal.lambda_star,
                            principal.last_grid);
  ProblemSpec twisted_spec = tp.to_problem_spec();
  std::vector<double> tw_radii;
  for (double r : radii) tw_radii.push_back(0.8 * r);
  StabilityOptions reg_opt = opt;
  report.twisted_regularity = regularity_test(twisted_spec, 1.0, tw_radii, h, reg_opt);

  bool stable = report.certificate.valid &&
                report.twisted_regularity.cls == Classification::Regular;
  report.verdict.cls = stable ? Classification::ExpStable : Classification::Inconclusive;
  report.verdict.radii = radii;
  report.verdict.threshold = report.gap_tol;
  report.verdict.evidence = {report.gap_limit, report.gap_largest};
  return report;
}

}  // namespace coopeig
