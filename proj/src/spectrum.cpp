#include "coopeig/spectrum.hpp"

#include <algorithm>
#include <cmath>

namespace coopeig {

namespace {

void check_radii(const ProblemSpec& spec, const std::vector<double>& radii) {
  if (radii.size() < 2)
    throw ValidationError("spectrum.lambda_star", "need at least two radii");
  for (std::size_t i = 1; i < radii.size(); ++i)
    if (radii[i] <= radii[i - 1])
      throw ValidationError("spectrum.lambda_star", "radii must increase");
  Point corner{radii.back(), spec.dim == 2 ? radii.back() : 0.0};
  Point corner2{-radii.back(), spec.dim == 2 ? -radii.back() : 0.0};
  if (!spec.window.contains(corner, spec.dim, 1e-9) ||
      !spec.window.contains(corner2, spec.dim, 1e-9))
    throw ValidationError("spectrum.lambda_star", "largest radius exceeds window");
}

// Aitken delta-squared step, gated on monotone contraction-like differences.
bool aitken(const std::vector<double>& seq, double& out) {
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

PrincipalLimit lambda_star(const ProblemSpec& spec, const std::vector<double>& radii,
                           double h, const SpectrumOptions& opt) {
  check_radii(spec, radii);
  PrincipalLimit res;
  res.radii = radii;
  res.window_radius = radii.front() / 2.0;

  for (double radius : radii) {
    auto grid = std::make_shared<Grid>(
        build_grid(spec, RegionSpec::ball_all(radius, spec.regimes), h));
    auto op = std::make_shared<DiscreteOperator>(assemble(spec, grid, true, true));
    EigenPair pair = principal_eigenpair(*op, opt.tol, opt.max_iter);
    if (!res.lambdas.empty()) {
      double slack = 2.0 * opt.tol * (1.0 + std::fabs(res.lambdas.back()));
      if (pair.lambda >= res.lambdas.back() + slack)
        throw NumericError("spectrum.lambda_star",
                           "NotDecreasing: lambda rose from " +
                               std::to_string(res.lambdas.back()) + " to " +
                               std::to_string(pair.lambda) +
                               " under domain growth (discretization artifact)");
    }
    res.lambdas.push_back(pair.lambda);
    res.bracket_widths.push_back(pair.bracket_width());
    res.last_pair = std::move(pair);
    res.last_grid = grid;
    res.last_op = op;
  }

  std::size_t n = res.lambdas.size();
  double last = res.lambdas[n - 1], prev = res.lambdas[n - 2];
  res.converged = std::fabs(last - prev) <= opt.conv_rtol * (1.0 + std::fabs(last));
  double extrap = 0.0;
  if (aitken(res.lambdas, extrap) && extrap <= last) {
    res.lambda_star = extrap;
    res.extrapolated = true;
  } else {
    res.lambda_star = last;
  }
  res.uncertainty = std::fabs(last - prev) + res.bracket_widths.back();
  return res;
}

GridFn eigenfunction_at(const ProblemSpec& spec, double lambda,
                        const std::vector<double>& radii, double h,
                        const SpectrumOptions& opt) {
  (void)opt;
  check_radii(spec, radii);
  GridFn result;
  for (double radius : radii) {
    auto grid = std::make_shared<Grid>(
        build_grid(spec, RegionSpec::ball_all(radius, spec.regimes), h));
    DiscreteOperator op = assemble(spec, grid, true, true);
    op.add_to_diagonal(lambda);

    // Unit source cell in the annulus [0.75 R, 0.9 R] along the first axis.
    double center = 0.825 * radius;
    double cell = std::max(2.0 * h, 0.02 * radius);
    auto source = [&](const Point& x, int) {
      double d = std::fabs(x[0] - center);
      if (spec.dim == 2) d = std::max(d, std::fabs(x[1]));
      return d <= cell ? 1.0 : 0.0;
    };
    GridFn u;
    try {
      u = solve_dirichlet(op, [](const Point&, int) { return 0.0; }, source);
    } catch (const NumericError& err) {
      throw NumericError("spectrum.eigenfunction_at",
                         std::string("ResolventNotPositive: ") + err.what());
    }
    double min_interior = std::numeric_limits<double>::infinity();
    for (auto [node, k] : grid->rows)
      min_interior = std::min(min_interior, u.at(node, k));
    if (!(min_interior > 0.0))
      throw NumericError("spectrum.eigenfunction_at",
                         "ResolventNotPositive: lambda=" + std::to_string(lambda) +
                             " is not below the Dirichlet value on radius " +
                             std::to_string(radius));
    // Renormalize at the origin: min over regimes = 1.
    int n0 = grid->normalization_node();
    double ref = std::numeric_limits<double>::infinity();
    for (int k = 1; k <= spec.regimes; ++k)
      if (grid->row_of[grid->slot(n0, k)] >= 0) ref = std::min(ref, u.at(n0, k));
    for (double& v : u.v) v /= ref;
    result = std::move(u);
  }
  return result;
}

MonotonicityReport perturbation_sweep(const ProblemSpec& spec,
                                      const PerturbationSpec& pert,
                                      const std::vector<double>& radii, double h,
                                      const SpectrumOptions& opt) {
  if (pert.support_radius >= radii.front())
    throw ValidationError("spectrum.perturbation_sweep",
                          "bump support must fit inside the smallest radius");
  std::vector<double> grid_t = pert.t_grid;
  std::sort(grid_t.begin(), grid_t.end());
  bool has_zero = false, has_pos = false, has_neg = false;
  for (double t : grid_t) {
    has_zero = has_zero || t == 0.0;
    has_pos = has_pos || t > 0.0;
    has_neg = has_neg || t < 0.0;
  }
  if (!has_zero || !has_pos || !has_neg)
    throw ValidationError("spectrum.perturbation_sweep",
                          "t grid must contain 0 and both signs");

  MonotonicityReport report;
  double unc_zero = 0.0;
  for (double t : grid_t) {
    ProblemSpec mod = spec;
    auto pot = spec.potential;
    auto bump = pert.bump;
    mod.potential = [pot, bump, t](const Point& x, int k) {
      return pot(x, k) + t * bump(x, k);
    };
    PrincipalLimit lim = lambda_star(mod, radii, h, opt);
    report.points.push_back({t, lim.lambda_star, lim.uncertainty});
    if (t == 0.0) {
      report.lambda_at_zero = lim.lambda_star;
      unc_zero = lim.uncertainty;
    }
  }

  report.gap_tol = unc_zero;
  for (const SweepPoint& p : report.points)
    report.gap_tol = std::max(report.gap_tol, unc_zero + p.uncertainty);

  report.min_right_gap = std::numeric_limits<double>::infinity();
  report.min_left_gap = std::numeric_limits<double>::infinity();
  bool right = true, strict = true;
  for (const SweepPoint& p : report.points) {
    if (p.t > 0.0) {
      double gap = report.lambda_at_zero - p.lambda;
      report.min_right_gap = std::min(report.min_right_gap, gap);
      right = right && gap > report.gap_tol;
    } else if (p.t < 0.0) {
      double gap = p.lambda - report.lambda_at_zero;
      report.min_left_gap = std::min(report.min_left_gap, gap);
      strict = strict && gap > report.gap_tol;
    }
  }
  report.right_monotone = right;
  report.strictly_monotone = strict;

  for (std::size_t i = 1; i + 1 < report.points.size(); ++i) {
    const auto& a = report.points[i - 1];
    const auto& b = report.points[i];
    const auto& c = report.points[i + 1];
    double w = (b.t - a.t) / (c.t - a.t);
    double chord = (1.0 - w) * a.lambda + w * c.lambda;
    report.concavity_defect = std::max(report.concavity_defect, chord - b.lambda);
  }
  return report;
}

}  // namespace coopeig
