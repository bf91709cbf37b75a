#pragma once

// Shared test fixtures: canonical problems and independent oracles. The
// oracles here are intentionally separate from the library solver paths.

#include <Eigen/Dense>
#include <cmath>
#include <functional>

#include "coopeig/assemble.hpp"
#include "coopeig/model.hpp"

namespace testutil {

using coopeig::Point;
using coopeig::ProblemSpec;
using coopeig::SymMat;

inline ProblemSpec base_spec(int dim, int regimes, double window_halfwidth) {
  ProblemSpec s;
  s.dim = dim;
  s.regimes = regimes;
  s.diffusion = [](const Point&, int) { return SymMat{1.0, 1.0, 0.0}; };
  s.drift = [](const Point&, int) { return Point{0.0, 0.0}; };
  s.potential = [](const Point&, int) { return 0.0; };
  s.rates = [](const Point&, int, int) { return 1.0; };
  s.window.lo = {-window_halfwidth, -window_halfwidth};
  s.window.hi = {window_halfwidth, window_halfwidth};
  return s;
}

// Free coupled Laplacian: N=2, a=I, b=0, c=0, m12=m21=1.
inline ProblemSpec coupled_laplacian(double window = 40.0) {
  return base_spec(1, 2, window);
}

// One-dimensional Ornstein-Uhlenbeck drift b=-x in every regime.
inline ProblemSpec ou_spec(int regimes = 1, double window = 40.0) {
  ProblemSpec s = base_spec(1, regimes, window);
  s.drift = [](const Point& x, int) { return Point{-x[0], 0.0}; };
  return s;
}

// Example with reducible switching: regime 1 drifts outward by sign(x) and
// can only leave to regime 2 outside |x|>2; regime 2 is OU and never returns.
inline ProblemSpec reducible_example(double delta = 1.0, double window = 40.0) {
  ProblemSpec s = base_spec(1, 2, window);
  s.drift = [](const Point& x, int k) {
    return Point{k == 1 ? (x[0] > 0 ? 1.0 : (x[0] < 0 ? -1.0 : 0.0)) : -x[0], 0.0};
  };
  s.rates = [delta](const Point& x, int i, int j) {
    if (i == 1 && j == 2) return std::fabs(x[0]) > 2.0 ? delta : 0.0;
    return 0.0;
  };
  return s;
}

// Dense Perron oracle: eigenvalue of A with the largest real part, negated.
// Valid for irreducible Metzler matrices (the Perron root of A + s0 I).
inline double dense_principal_eigenvalue(const coopeig::SpMat& A) {
  Eigen::MatrixXd dense(A);
  Eigen::EigenSolver<Eigen::MatrixXd> es(dense);
  double best = -std::numeric_limits<double>::infinity();
  for (int i = 0; i < dense.rows(); ++i)
    best = std::max(best, es.eigenvalues()[i].real());
  return -best;
}

// Deterministic xorshift-style generator for reproducible random fixtures.
struct Rng {
  std::uint64_t state;
  explicit Rng(std::uint64_t seed) : state(seed ^ 0x9e3779b97f4a7c15ULL) {}
  std::uint64_t next() {
    std::uint64_t z = (state += 0x9e3779b97f4a7c15ULL);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  }
  double uniform(double lo = 0.0, double hi = 1.0) {
    return lo + (hi - lo) * (static_cast<double>(next() >> 11) * 0x1.0p-53);
  }
  int uniform_int(int lo, int hi) {  // inclusive
    return lo + static_cast<int>(next() % static_cast<std::uint64_t>(hi - lo + 1));
  }
};

// Random cooperative problem with bounded smooth coefficients and an
// irreducible ring of switch rates.
inline ProblemSpec random_cooperative(Rng& rng, int regimes, double window = 10.0) {
  ProblemSpec s = base_spec(1, regimes, window);
  std::vector<double> diff, drift_amp, pot_amp, pot_freq;
  for (int k = 0; k < regimes; ++k) {
    diff.push_back(rng.uniform(0.5, 2.0));
    drift_amp.push_back(rng.uniform(-1.0, 1.0));
    pot_amp.push_back(rng.uniform(-1.0, 1.0));
    pot_freq.push_back(rng.uniform(0.5, 2.0));
  }
  std::vector<std::vector<double>> m(regimes, std::vector<double>(regimes, 0.0));
  for (int i = 0; i < regimes; ++i)
    for (int j = 0; j < regimes; ++j)
      if (i != j) m[i][j] = rng.uniform(0.0, 2.0);
  for (int i = 0; i < regimes; ++i) m[i][(i + 1) % regimes] += 0.1;  // ring
  s.diffusion = [diff](const Point&, int k) {
    return SymMat{diff[k - 1], diff[k - 1], 0.0};
  };
  s.drift = [drift_amp](const Point& x, int k) {
    return Point{drift_amp[k - 1] * std::tanh(x[0]), 0.0};
  };
  s.potential = [pot_amp, pot_freq](const Point& x, int k) {
    return pot_amp[k - 1] * std::cos(pot_freq[k - 1] * x[0]);
  };
  s.rates = [m](const Point&, int i, int j) { return m[i - 1][j - 1]; };
  return s;
}

}  // namespace testutil
