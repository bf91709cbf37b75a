#pragma once

#include <array>
#include <optional>

#include "coopeig/spectrum.hpp"
#include "coopeig/twist.hpp"

namespace coopeig {

// Path simulation of the regime-switching diffusion
//   dX = b(X,S) dt + sigma(X,S) dW,  sigma = sqrt(2 a),
// with per-step switching: a jump occurs with probability
// 1 - exp(-total_rate dt) and the destination is drawn proportionally to the
// off-diagonal rates, both evaluated at the pre-step state. Paths are
// deterministic functions of (seed, path index) via counter-based streams,
// so results are identical at any thread count.

inline constexpr int kMaxRegimes = 8;  // occupation/jump bookkeeping bound

struct SimConfig {
  double dt = 1e-3;
  double t_max = 50.0;
  int n_paths = 10000;
  std::uint64_t seed = 1;
  double cap_radius = 1e6;  // |X| beyond this flags the path exploded
  Point x0{0, 0};
  int k0 = 1;
  int threads = 1;
  std::vector<double> checkpoints;   // times at which to record the running
                                     // potential integral (sorted)
  int dump_first = 0;                // record full trajectories for p < dump_first
  // Common-random-number pairing for refinement checks: a run at dt with
  // coarse_of_pair consumes the stream exactly like a run at dt/2, combining
  // Gaussian pairs, so the two share their Brownian path and the dt-halving
  // shift is measured with only O(dt) noise.
  bool coarse_of_pair = false;
};

enum class PathStatus : std::uint8_t { Terminal, Hit, Censored, Exploded };

struct PathResult {
  PathStatus status = PathStatus::Censored;
  double t_end = 0.0;
  Point x_end{0, 0};
  int s_end = 1;
  double int_c = 0.0;  // integral of the potential along the path
  std::array<double, kMaxRegimes> occupation{};  // time per regime
  std::vector<double> checkpoint_int_c;          // aligned with cfg.checkpoints
};

struct Functional {
  enum class Kind { Terminal, Hit } kind = Kind::Terminal;
  double T = 1.0;
  RegionSpec target;

  static Functional terminal(double T) {
    Functional f;
    f.kind = Kind::Terminal;
    f.T = T;
    return f;
  }
  static Functional hit(RegionSpec target) {
    Functional f;
    f.kind = Kind::Hit;
    f.target = std::move(target);
    return f;
  }
};

struct TrajectoryBatch {
  std::vector<PathResult> paths;
  int n_terminal = 0, n_hit = 0, n_censored = 0, n_exploded = 0;
  std::array<std::array<std::uint64_t, kMaxRegimes>, kMaxRegimes> jump_counts{};
  // Optional trajectory dumps: per path, rows of (t, x1[, x2], regime).
  std::vector<std::vector<std::array<double, 4>>> dumps;

  int total() const { return static_cast<int>(paths.size()); }
};

TrajectoryBatch simulate(const ProblemSpec& spec, const SimConfig& cfg,
                         const Functional& functional);

// Same stepping with the twisted drift and rates (fields interpolated
// multilinearly from the grid of the twisted problem).
TrajectoryBatch twisted_simulate(const TwistedProblem& tp, const SimConfig& cfg,
                                 const Functional& functional);

struct CostEstimate {
  double T = 0.0;
  double value = 0.0;  // (1/T) log E exp(int c)
  double se = 0.0;     // batch-means standard error
  double max_weight_share = 0.0;
};

struct RiskSensitiveReport {
  std::vector<CostEstimate> estimates;  // one per requested horizon
  double slope_trend = 0.0;             // last minus first estimate
};

// Long-run exponential growth rate of E[exp int c] via log-sum-exp across
// paths, with batch-means standard errors. Throws EffectiveSampleCollapse
// when a single path carries more than 99% of the total weight.
RiskSensitiveReport risk_sensitive_cost(const ProblemSpec& spec, const SimConfig& cfg,
                                        const Point& x, int k,
                                        const std::vector<double>& T_list);

struct TwoSidedCheck {
  double lhs = 0.0, lhs_se = 0.0;
  double rhs = 0.0, rhs_se = 0.0;
  double z = 0.0;
  double lhs_half = 0.0, rhs_half = 0.0;  // dt-halved estimates
  bool bias_ok = false;                   // halving moved each side < 1 SE
  bool passed = false;                    // |z| <= 3 and bias_ok
};

// Two independent Monte Carlo routes to the same expectation: the
// exponential-weighted base process versus the twisted process,
//   E[ e^{int (c+lambda)} g Psi (X_T,S_T) ] = Psi(x,k) Etw[ g(X_T,S_T); T < explosion ].
TwoSidedCheck feynman_kac_check(const ProblemSpec& spec, const GridFn& psi,
                                double lambda, const TwistedProblem& tp,
                                const std::function<double(const Point&, int)>& g,
                                double T, const SimConfig& cfg);

struct HittingCheck {
  double estimate = 0.0;
  double se = 0.0;
  double reference = 0.0;  // PDE-side value of psi* at the start point
  double rel_deviation = 0.0;
  double censored_fraction = 0.0;
  double exploded_fraction = 0.0;
  bool passed = false;
};

// Stochastic representation of the principal eigenfunction:
//   psi*(x,k) = E[ e^{int_0^tau (c + lambda*)} psi*(X_tau,S_tau); tau < inf ],
// tau the hitting time of the ball (the same exponent as the finite-horizon
// identity above; the eigen-relation L psi + (c+lambda)psi = 0 drives both).
// Throws CensoringTooHigh when more than 10% of paths are censored by the
// horizon.
HittingCheck hitting_representation_check(const ProblemSpec& spec,
                                          const PrincipalLimit& principal,
                                          double ball_radius, const SimConfig& cfg);

}  // namespace coopeig
