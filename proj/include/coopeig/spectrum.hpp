#pragma once

#include "coopeig/eigensolve.hpp"

namespace coopeig {

// Nested-domain approximation of the principal eigenvalue on the whole
// space: Dirichlet eigenvalues over growing balls decrease strictly towards
// the generalized value, which is estimated by Aitken extrapolation when the
// sequence contracts stably.
struct PrincipalLimit {
  std::vector<double> radii;
  std::vector<double> lambdas;
  std::vector<double> bracket_widths;
  double lambda_star = 0.0;
  // |lambda_last - lambda_prev| + final bracket width; monotonicity verdicts
  // downstream require gaps above this level.
  double uncertainty = 0.0;
  bool converged = false;
  bool extrapolated = false;
  EigenPair last_pair;             // eigenpair on the largest ball
  std::shared_ptr<const Grid> last_grid;
  std::shared_ptr<const DiscreteOperator> last_op;
  double window_radius = 0.0;      // inner comparison window (smallest radius / 2)

  const GridFn& psi_star() const { return last_pair.psi; }
};

struct SpectrumOptions {
  double tol = 1e-10;          // eigensolver tolerance
  double conv_rtol = 1e-3;     // |l_n - l_{n+1}| <= conv_rtol (1+|l_n|) declares convergence
  int max_iter = 100000;
};

PrincipalLimit lambda_star(const ProblemSpec& spec, const std::vector<double>& radii,
                           double h, const SpectrumOptions& opt = {});

// Positive eigenfunction at a prescribed lambda <= lambda_star via the
// resolvent construction: a unit source on a small cell in the annulus
// [0.75 R, 0.9 R], solved on each ball and renormalized at the origin.
// Throws ResolventNotPositive when lambda is too close to (or above) the
// principal value for the radius.
GridFn eigenfunction_at(const ProblemSpec& spec, double lambda,
                        const std::vector<double>& radii, double h,
                        const SpectrumOptions& opt = {});

struct PerturbationSpec {
  std::function<double(const Point&, int)> bump;  // >= 0, compactly supported
  double support_radius = 1.0;
  std::vector<double> t_grid;  // must contain 0 and both signs
};

struct SweepPoint {
  double t = 0.0;
  double lambda = 0.0;
  double uncertainty = 0.0;
};

struct MonotonicityReport {
  std::vector<SweepPoint> points;  // sorted by t
  double lambda_at_zero = 0.0;
  double gap_tol = 0.0;
  bool right_monotone = false;      // lambda(c + t h) < lambda(c) - gap for t > 0
  bool strictly_monotone = false;   // lambda(c - t h) > lambda(c) + gap for t > 0
  double min_right_gap = 0.0;
  double min_left_gap = 0.0;
  double concavity_defect = 0.0;    // max positive deviation below chords
};

MonotonicityReport perturbation_sweep(const ProblemSpec& spec,
                                      const PerturbationSpec& pert,
                                      const std::vector<double>& radii, double h,
                                      const SpectrumOptions& opt = {});

}  // namespace coopeig
