#pragma once

#include <array>
#include <cmath>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "coopeig/errors.hpp"

namespace coopeig {

// Spatial dimension is 1 or 2; points always carry two slots, the unused
// one is zero.
using Point = std::array<double, 2>;

// Symmetric diffusion matrix; a12 is ignored in one dimension.
struct SymMat {
  double a11 = 1.0;
  double a22 = 1.0;
  double a12 = 0.0;

  double min_eigenvalue(int dim) const {
    if (dim == 1) return a11;
    double tr = a11 + a22;
    double det = a11 * a22 - a12 * a12;
    double disc = std::sqrt(std::max(0.0, tr * tr - 4.0 * det));
    return 0.5 * (tr - disc);
  }
};

struct Box {
  Point lo{0, 0};
  Point hi{0, 0};
  bool contains(const Point& x, int dim, double tol = 0.0) const {
    for (int i = 0; i < dim; ++i)
      if (x[i] < lo[i] - tol || x[i] > hi[i] + tol) return false;
    return true;
  }
};

// A shape is either an axis-aligned box or a closed ball.
struct Shape {
  enum class Kind { Ball, Box } kind = Kind::Ball;
  Point center{0, 0};
  double radius = 1.0;
  Box box;

  static Shape ball(Point center, double radius) {
    Shape s;
    s.kind = Kind::Ball;
    s.center = center;
    s.radius = radius;
    return s;
  }
  static Shape make_box(Point lo, Point hi) {
    Shape s;
    s.kind = Kind::Box;
    s.box = {lo, hi};
    return s;
  }

  bool contains(const Point& x, int dim, double tol = 1e-12) const {
    if (kind == Kind::Box) return box.contains(x, dim, tol);
    double r2 = 0.0;
    for (int i = 0; i < dim; ++i) {
      double d = x[i] - center[i];
      r2 += d * d;
    }
    double r = radius * (1.0 + 1e-12) + tol;
    return r2 <= r * r;
  }

  Box bounding_box(int dim) const {
    if (kind == Kind::Box) return box;
    Box b;
    for (int i = 0; i < dim; ++i) {
      b.lo[i] = center[i] - radius;
      b.hi[i] = center[i] + radius;
    }
    return b;
  }
};

// A union of per-regime shapes; `regimes` lists the participating regime
// indices (1-based). A single shape is shared by all listed regimes.
struct RegionSpec {
  std::vector<Shape> shapes;  // size 1 or regimes.size()
  std::vector<int> regimes;

  static RegionSpec ball_all(double radius, int n_regimes, Point center = {0, 0}) {
    RegionSpec r;
    r.shapes.push_back(Shape::ball(center, radius));
    for (int k = 1; k <= n_regimes; ++k) r.regimes.push_back(k);
    return r;
  }
  static RegionSpec box_all(Point lo, Point hi, int n_regimes) {
    RegionSpec r;
    r.shapes.push_back(Shape::make_box(lo, hi));
    for (int k = 1; k <= n_regimes; ++k) r.regimes.push_back(k);
    return r;
  }

  bool has_regime(int k) const {
    for (int r : regimes)
      if (r == k) return true;
    return false;
  }
  const Shape& shape_for(int k) const {
    if (shapes.size() == 1) return shapes.front();
    for (std::size_t i = 0; i < regimes.size(); ++i)
      if (regimes[i] == k) return shapes[i];
    throw ValidationError("model.region", "regime " + std::to_string(k) + " not in region");
  }
  bool contains(const Point& x, int dim, int k) const {
    return has_regime(k) && shape_for(k).contains(x, dim);
  }
  Box bounding_box(int dim) const {
    Box b = shapes.front().bounding_box(dim);
    for (std::size_t i = 1; i < shapes.size(); ++i) {
      Box o = shapes[i].bounding_box(dim);
      for (int d = 0; d < dim; ++d) {
        b.lo[d] = std::min(b.lo[d], o.lo[d]);
        b.hi[d] = std::max(b.hi[d], o.hi[d]);
      }
    }
    return b;
  }
};

// Continuous problem data. Coefficients are oracles: pure functions of the
// spatial point and the 1-based regime index. Off-diagonal switch rates must
// be nonnegative; the diagonal is never stored and is reconstructed as minus
// the off-diagonal row sum. The window bounds all numerical work.
struct ProblemSpec {
  int dim = 1;
  int regimes = 1;
  std::function<SymMat(const Point&, int)> diffusion;
  std::function<Point(const Point&, int)> drift;
  std::function<double(const Point&, int)> potential;
  std::function<double(const Point&, int, int)> rates;  // (x, i, j), i != j
  Box window;

  double total_rate(const Point& x, int i) const {
    double s = 0.0;
    for (int j = 1; j <= regimes; ++j)
      if (j != i) s += rates(x, i, j);
    return s;
  }
};

struct Violation {
  enum class Kind { OracleFailure, Cooperativity, Ellipticity } kind;
  Point x;
  int regime_i = 0;
  int regime_j = 0;
  double value = 0.0;
  std::string detail;
};

struct ValidationReport {
  bool passed = false;
  int samples = 0;
  std::vector<Violation> violations;
};

struct IrreducibilityResult {
  bool irreducible = false;
  // Witnessing partition when reducible: no rate edge from set1 into set2.
  std::vector<int> set1, set2;
  // Sampled adjacency: edge[i][j] true when m_ij > tol_rate somewhere.
  std::vector<std::vector<bool>> edges;
};

inline constexpr double kRateEdgeTol = 1e-12;
inline constexpr double kEllipticityTol = 1e-10;

// Samples every oracle on a lattice of `sample_density` points per axis over
// the window and collects cooperativity / ellipticity / finiteness
// violations. Passes iff none are found.
ValidationReport validate(const ProblemSpec& spec, int sample_density);

// Throws ValidationError describing the first violation, if any.
void validate_or_throw(const ProblemSpec& spec, int sample_density);

// Directed graph on regimes with an edge i->j when m_ij exceeds kRateEdgeTol
// at some sampled window point; irreducible iff strongly connected.
IrreducibilityResult irreducibility_check(const ProblemSpec& spec, int sample_density);

}  // namespace coopeig
