#pragma once

#include "coopeig/spectrum.hpp"
#include "coopeig/twist.hpp"

namespace coopeig {

enum class Classification {
  Regular,
  NotRegular,
  Recurrent,
  Transient,
  ExpStable,
  Inconclusive,
};

const char* to_string(Classification c);

// Radius-indexed diagnostic evidence behind a three-valued verdict. The
// underlying dichotomies are asymptotic in the radius, so any verdict keeps
// its thresholds and raw sequences for inspection.
struct Verdict {
  Classification cls = Classification::Inconclusive;
  std::vector<double> radii;
  std::vector<double> evidence;   // window max (regularity) / window min (recurrence)
  std::vector<double> gap_probe;  // recurrence only: two-boundary-data gap
  double extrapolated = 0.0;
  double threshold = 0.0;
};

struct StabilityOptions {
  double reg_tol = 1e-3;
  double hit_tol = 1e-2;
  double window_radius = 0.0;  // 0: radii.front()/2
  double eig_tol = 1e-10;
};

// Solves L u = C u on growing balls with u = 1 on the boundary; the window
// maximum decays to zero exactly when the operator is regular
// (non-explosion). Requires a generator: the potential is ignored.
Verdict regularity_test(const ProblemSpec& spec_generator, double C,
                        const std::vector<double>& radii, double h,
                        const StabilityOptions& opt = {});

// Hitting probability of target = D x S1 before leaving the ball of radius
// R, for growing R; recurrent iff the window minimum tends to 1. A second
// solve with outer data 1 probes uniqueness of bounded exterior solutions.
Verdict recurrence_test(const ProblemSpec& spec_generator, const RegionSpec& target,
                        const std::vector<double>& radii, double h,
                        const StabilityOptions& opt = {});

struct LyapunovCertificate {
  GridFn V;  // >= 1 on interior slots
  double delta1 = 0.0;  // decay rate (eigenvalue gap)
  double delta2 = 0.0;  // source bound on K
  double kappa0 = 0.0;  // source bound for the whole-space variant
  double residual = 0.0;
  double resid_tol = 0.0;
  bool valid = false;
  bool gap_nonpositive = false;
  double lambda_inner = 0.0;   // eigenvalue on D (resp. the base potential)
  double lambda_outer = 0.0;   // eigenvalue on D1 with c - 1_K (resp. c - h)
  std::shared_ptr<const Grid> grid;
};

// Lyapunov function for the twisted operator on a bounded domain:
// V = Psi_{D1} / Psi_D with the D1 eigenproblem run at potential c - 1_K,
// rescaled to V >= 1. Checks Ltw V <= -delta1 V + delta2 1_K at every
// interior node via the exact ratio transform. Throws GapNonpositive when
// the discrete eigenvalue gap closes.
LyapunovCertificate lyapunov_construct(const ProblemSpec& spec, const RegionSpec& D,
                                       const RegionSpec& D1, const RegionSpec& K,
                                       double h, const StabilityOptions& opt = {});

struct ExpStabilityReport {
  Verdict verdict;
  LyapunovCertificate certificate;
  Verdict twisted_regularity;
  double gap_limit = 0.0;      // lambda*(c-h) - lambda*(c), extrapolated
  double gap_largest = 0.0;    // same gap on the largest ball
  double gap_tol = 0.0;
};

// Certificate for the twisted operator at the principal pair: V = Psi_h /
// Psi* built from the perturbed potential c - h on the largest ball, checked
// as Ltw V <= kappa0 1_B - delta V, plus a regularity test of the twisted
// generator. Verdict ExpStable only when both hold; a closing gap yields
// Inconclusive.
ExpStabilityReport exp_stability_test(const ProblemSpec& spec,
                                      const PrincipalLimit& principal,
                                      const PerturbationSpec& pert,
                                      const std::vector<double>& radii, double h,
                                      const StabilityOptions& opt = {});

}  // namespace coopeig
