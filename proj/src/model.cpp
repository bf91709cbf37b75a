#include "coopeig/model.hpp"

#include <cmath>

namespace coopeig {

namespace {

std::vector<Point> window_lattice(const ProblemSpec& spec, int density) {
  if (density < 2)
    throw ValidationError("model.validate", "sample_density must be at least 2");
  std::vector<Point> pts;
  int ny = spec.dim == 2 ? density : 1;
  for (int i = 0; i < density; ++i) {
    for (int j = 0; j < ny; ++j) {
      Point p{0, 0};
      p[0] = spec.window.lo[0] +
             (spec.window.hi[0] - spec.window.lo[0]) * i / double(density - 1);
      if (spec.dim == 2)
        p[1] = spec.window.lo[1] +
               (spec.window.hi[1] - spec.window.lo[1]) * j / double(density - 1);
      pts.push_back(p);
    }
  }
  return pts;
}

}  // namespace

ValidationReport validate(const ProblemSpec& spec, int sample_density) {
  if (spec.dim != 1 && spec.dim != 2)
    throw ValidationError("model.validate", "dimension must be 1 or 2");
  if (spec.regimes < 1)
    throw ValidationError("model.validate", "at least one regime required");
  ValidationReport report;
  auto pts = window_lattice(spec, sample_density);
  report.samples = static_cast<int>(pts.size()) * spec.regimes;

  auto flag = [&](Violation v) { report.violations.push_back(std::move(v)); };

  for (const Point& x : pts) {
    for (int k = 1; k <= spec.regimes; ++k) {
      try {
        SymMat a = spec.diffusion(x, k);
        if (!std::isfinite(a.a11) || !std::isfinite(a.a22) || !std::isfinite(a.a12)) {
          flag({Violation::Kind::OracleFailure, x, k, 0, 0.0, "diffusion non-finite"});
        } else if (a.min_eigenvalue(spec.dim) < kEllipticityTol) {
          flag({Violation::Kind::Ellipticity, x, k, 0, a.min_eigenvalue(spec.dim),
                "diffusion matrix not uniformly elliptic"});
        }
        Point b = spec.drift(x, k);
        for (int d = 0; d < spec.dim; ++d)
          if (!std::isfinite(b[d]))
            flag({Violation::Kind::OracleFailure, x, k, 0, b[d], "drift non-finite"});
        double c = spec.potential(x, k);
        if (!std::isfinite(c))
          flag({Violation::Kind::OracleFailure, x, k, 0, c, "potential non-finite"});
        for (int j = 1; j <= spec.regimes; ++j) {
          if (j == k) continue;
          double m = spec.rates(x, k, j);
          if (!std::isfinite(m))
            flag({Violation::Kind::OracleFailure, x, k, j, m, "rate non-finite"});
          else if (m < 0.0)
            flag({Violation::Kind::Cooperativity, x, k, j, m, "negative switch rate"});
        }
      } catch (const Error& err) {
        flag({Violation::Kind::OracleFailure, x, k, 0, 0.0, err.what()});
      }
    }
  }
  report.passed = report.violations.empty();
  return report;
}

void validate_or_throw(const ProblemSpec& spec, int sample_density) {
  ValidationReport r = validate(spec, sample_density);
  if (r.passed) return;
  const Violation& v = r.violations.front();
  std::string what;
  switch (v.kind) {
    case Violation::Kind::OracleFailure: what = "OracleFailure: "; break;
    case Violation::Kind::Cooperativity: what = "CooperativityViolation: "; break;
    case Violation::Kind::Ellipticity: what = "EllipticityViolation: "; break;
  }
  what += v.detail + " at x=(" + std::to_string(v.x[0]);
  if (spec.dim == 2) what += ", " + std::to_string(v.x[1]);
  what += "), regime " + std::to_string(v.regime_i);
  if (v.regime_j > 0) what += "->" + std::to_string(v.regime_j);
  throw ValidationError("model.validate", what);
}

IrreducibilityResult irreducibility_check(const ProblemSpec& spec, int sample_density) {
  const int n = spec.regimes;
  IrreducibilityResult res;
  res.edges.assign(n, std::vector<bool>(n, false));
  auto pts = window_lattice(spec, sample_density);
  for (const Point& x : pts)
    for (int i = 1; i <= n; ++i)
      for (int j = 1; j <= n; ++j) {
        if (i == j || res.edges[i - 1][j - 1]) continue;
        double m = spec.rates(x, i, j);
        if (!std::isfinite(m))
          throw ValidationError("model.irreducibility_check", "rate oracle non-finite");
        if (m > kRateEdgeTol) res.edges[i - 1][j - 1] = true;
      }

  auto reach = [&](bool forward) {
    std::vector<bool> seen(n, false);
    std::vector<int> stack{0};
    seen[0] = true;
    while (!stack.empty()) {
      int u = stack.back();
      stack.pop_back();
      for (int v = 0; v < n; ++v) {
        bool edge = forward ? res.edges[u][v] : res.edges[v][u];
        if (edge && !seen[v]) {
          seen[v] = true;
          stack.push_back(v);
        }
      }
    }
    return seen;
  };

  auto fwd = reach(true);
  auto bwd = reach(false);
  bool strong = true;
  for (int v = 0; v < n; ++v) strong = strong && fwd[v] && bwd[v];
  res.irreducible = strong;
  if (!strong) {
    // Partition with no cross edge set1 -> set2. If some regime is not
    // forward-reachable from regime 1, nothing leaves the reachable set.
    // Otherwise nothing leaves the complement of the backward-reachable set.
    bool all_fwd = true;
    for (int v = 0; v < n; ++v) all_fwd = all_fwd && fwd[v];
    for (int v = 0; v < n; ++v) {
      bool in_set1 = all_fwd ? !bwd[v] : fwd[v];
      (in_set1 ? res.set1 : res.set2).push_back(v + 1);
    }
  }
  return res;
}

}  // namespace coopeig
