#include "coopeig/sde.hpp"

#include <atomic>
#include <cmath>
#include <mutex>
#include <thread>

namespace coopeig {

namespace {

// Counter-based streams keyed by (seed, path): one substream for Gaussian
// increments, one for switching events, so event decisions never shift the
// diffusion noise. Everything is a pure function of the key, independent of
// threading. Normal draws use Box-Muller.
class PathRng {
public:
  PathRng(std::uint64_t seed, std::uint64_t path)
      : state_n_(mix(seed ^ mix(path + 0x633221e553ca11abULL))),
        state_u_(mix(~seed ^ mix(path + 0x9d2c5680cafe1234ULL))) {}

  double uniform_event() {  // in (0,1]
    return to_unit(next(state_u_));
  }
  double normal() {
    if (have_spare_) {
      have_spare_ = false;
      return spare_;
    }
    double u1 = to_unit(next(state_n_));
    double u2 = to_unit(next(state_n_));
    double r = std::sqrt(-2.0 * std::log(u1));
    double a = 2.0 * M_PI * u2;
    spare_ = r * std::sin(a);
    have_spare_ = true;
    return r * std::cos(a);
  }

private:
  static double to_unit(std::uint64_t z) {
    return (static_cast<double>(z >> 11) + 1.0) * 0x1.0p-53;
  }
  static std::uint64_t mix(std::uint64_t z) {
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  }
  static std::uint64_t next(std::uint64_t& state) {
    std::uint64_t z = (state += 0x9e3779b97f4a7c15ULL);
    return mix(z);
  }
  std::uint64_t state_n_, state_u_;
  bool have_spare_ = false;
  double spare_ = 0.0;
};

struct Sqrt2a {
  // Symmetric square root of 2a for a 2x2 SPD matrix (scalar in 1d).
  double s11, s22, s12;
};

Sqrt2a diffusion_sqrt(const SymMat& a, int dim) {
  if (dim == 1) return {std::sqrt(2.0 * a.a11), 0.0, 0.0};
  double m11 = 2.0 * a.a11, m22 = 2.0 * a.a22, m12 = 2.0 * a.a12;
  double det = m11 * m22 - m12 * m12;
  if (det < 0.0) det = 0.0;
  double s = std::sqrt(det);
  double t = std::sqrt(m11 + m22 + 2.0 * s);
  return {(m11 + s) / t, (m22 + s) / t, m12 / t};
}

// Work chunk granularity; shared-state blocks (jump counters) are sized to
// the same stride so no two workers ever touch one block.
constexpr int kPathChunk = 64;

template <class Fn>
void parallel_paths(int n_paths, int threads, Fn&& body) {
  threads = std::max(1, threads);
  if (threads == 1 || n_paths < 2 * threads) {
    for (int p = 0; p < n_paths; ++p) body(p);
    return;
  }
  std::atomic<int> cursor{0};
  std::mutex err_mutex;
  std::exception_ptr first_error;
  auto worker = [&]() {
    try {
      for (;;) {
        int p = cursor.fetch_add(kPathChunk);
        if (p >= n_paths) return;
        int hi = std::min(p + kPathChunk, n_paths);
        for (; p < hi; ++p) body(p);
      }
    } catch (...) {
      std::lock_guard<std::mutex> lock(err_mutex);
      if (!first_error) first_error = std::current_exception();
    }
  };
  std::vector<std::thread> pool;
  for (int t = 0; t < threads; ++t) pool.emplace_back(worker);
  for (auto& t : pool) t.join();
  if (first_error) std::rethrow_exception(first_error);
}

TrajectoryBatch run_simulation(const ProblemSpec& spec, const SimConfig& cfg,
                               const Functional& functional) {
  if (cfg.dt <= 0.0) throw ValidationError("sde.simulate", "dt must be positive");
  if (spec.regimes > kMaxRegimes)
    throw ValidationError("sde.simulate", "at most 8 regimes supported by the simulator");
  const int N = spec.regimes;
  const int dim = spec.dim;
  const bool hitting = functional.kind == Functional::Kind::Hit;
  const double horizon = hitting ? cfg.t_max : std::min(functional.T, cfg.t_max);
  std::vector<double> checkpoints = cfg.checkpoints;

  TrajectoryBatch batch;
  batch.paths.resize(static_cast<std::size_t>(cfg.n_paths));
  batch.dumps.resize(static_cast<std::size_t>(std::min(cfg.dump_first, cfg.n_paths)));
  std::vector<std::array<std::array<std::uint64_t, kMaxRegimes>, kMaxRegimes>>
      jumps_by_path_block;  // one block per work chunk, merged in order
  jumps_by_path_block.resize(static_cast<std::size_t>(cfg.n_paths) / kPathChunk + 1);

  parallel_paths(cfg.n_paths, cfg.threads, [&](int p) {
    PathRng rng(cfg.seed, static_cast<std::uint64_t>(p));
    PathResult& out = batch.paths[static_cast<std::size_t>(p)];
    auto& jumps = jumps_by_path_block[static_cast<std::size_t>(p) / kPathChunk];
    Point x = cfg.x0;
    int k = cfg.k0;
    double t = 0.0;
    double int_c = 0.0;
    std::size_t next_checkpoint = 0;
    out.checkpoint_int_c.assign(checkpoints.size(), 0.0);
    std::vector<std::array<double, 4>>* dump =
        p < cfg.dump_first ? &batch.dumps[static_cast<std::size_t>(p)] : nullptr;
    if (dump) dump->push_back({t, x[0], x[1], static_cast<double>(k)});

    out.status = PathStatus::Censored;
    while (t < horizon - 1e-12) {
      double step = std::min(cfg.dt, horizon - t);
      // Rates, drift, diffusion frozen at the pre-step state.
      double total_rate = 0.0;
      double cdf[kMaxRegimes];
      for (int j = 1; j <= N; ++j) {
        if (j != k) total_rate += spec.rates(x, k, j);
        cdf[j - 1] = total_rate;
      }
      if (cfg.dt * total_rate > 0.1)
        throw NumericError("sde.simulate",
                           "RateBoundExceeded: dt * total switch rate = " +
                               std::to_string(cfg.dt * total_rate) +
                               " > 0.1; shrink dt");
      int_c += spec.potential(x, k) * step;
      out.occupation[static_cast<std::size_t>(k - 1)] += step;

      Point b = spec.drift(x, k);
      Sqrt2a s = diffusion_sqrt(spec.diffusion(x, k), dim);
      double sq = std::sqrt(step);
      // Draw layout matches a dt/2 run when coarse_of_pair is set: Gaussian
      // pairs are combined and the second half-step's event draws discarded,
      // so both refinement levels ride the same streams.
      double z1, z2 = 0.0, u_switch, u_dest;
      if (cfg.coarse_of_pair) {
        double a1 = rng.normal();
        double a2 = dim == 2 ? rng.normal() : 0.0;
        double b1 = rng.normal();
        double b2 = dim == 2 ? rng.normal() : 0.0;
        z1 = (a1 + b1) * M_SQRT1_2;
        z2 = (a2 + b2) * M_SQRT1_2;
        u_switch = rng.uniform_event();
        u_dest = rng.uniform_event();
        rng.uniform_event();
        rng.uniform_event();
      } else {
        z1 = rng.normal();
        z2 = dim == 2 ? rng.normal() : 0.0;
        u_switch = rng.uniform_event();
        u_dest = rng.uniform_event();
      }
      x[0] += b[0] * step + sq * (s.s11 * z1 + s.s12 * z2);
      if (dim == 2) x[1] += b[1] * step + sq * (s.s12 * z1 + s.s22 * z2);

      if (total_rate > 0.0 && u_switch < -std::expm1(-total_rate * step)) {
        double pick = u_dest * total_rate;
        int j_new = k;
        for (int j = 1; j <= N; ++j)
          if (j != k && pick <= cdf[j - 1] + 1e-300) { j_new = j; break; }
        if (j_new != k) {
          ++jumps[static_cast<std::size_t>(k - 1)][static_cast<std::size_t>(j_new - 1)];
          k = j_new;
        }
      }
      t += step;

      while (next_checkpoint < checkpoints.size() &&
             t >= checkpoints[next_checkpoint] - 1e-12) {
        out.checkpoint_int_c[next_checkpoint] = int_c;
        ++next_checkpoint;
      }
      if (dump) dump->push_back({t, x[0], x[1], static_cast<double>(k)});

      double r2 = x[0] * x[0] + (dim == 2 ? x[1] * x[1] : 0.0);
      if (r2 > cfg.cap_radius * cfg.cap_radius) {
        out.status = PathStatus::Exploded;
        break;
      }
      if (hitting && functional.target.contains(x, dim, k)) {
        out.status = PathStatus::Hit;
        break;
      }
    }
    if (out.status == PathStatus::Censored && !hitting && t >= functional.T - 1e-12)
      out.status = PathStatus::Terminal;
    out.t_end = t;
    out.x_end = x;
    out.s_end = k;
    out.int_c = int_c;
    while (next_checkpoint < checkpoints.size())
      out.checkpoint_int_c[next_checkpoint++] = int_c;
  });

  for (const auto& block : jumps_by_path_block)
    for (int i = 0; i < kMaxRegimes; ++i)
      for (int j = 0; j < kMaxRegimes; ++j)
        batch.jump_counts[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)] +=
            block[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)];
  for (const PathResult& p : batch.paths) {
    switch (p.status) {
      case PathStatus::Terminal: ++batch.n_terminal; break;
      case PathStatus::Hit: ++batch.n_hit; break;
      case PathStatus::Censored: ++batch.n_censored; break;
      case PathStatus::Exploded: ++batch.n_exploded; break;
    }
  }
  return batch;
}

double sample_mean(const std::vector<double>& v) {
  double s = 0.0;
  for (double x : v) s += x;
  return v.empty() ? 0.0 : s / static_cast<double>(v.size());
}

double sample_se(const std::vector<double>& v, double mean) {
  if (v.size() < 2) return 0.0;
  double ss = 0.0;
  for (double x : v) ss += (x - mean) * (x - mean);
  return std::sqrt(ss / (static_cast<double>(v.size()) - 1.0) /
                   static_cast<double>(v.size()));
}

}  // namespace

TrajectoryBatch simulate(const ProblemSpec& spec, const SimConfig& cfg,
                         const Functional& functional) {
  return run_simulation(spec, cfg, functional);
}

TrajectoryBatch twisted_simulate(const TwistedProblem& tp, const SimConfig& cfg,
                                 const Functional& functional) {
  return run_simulation(tp.to_problem_spec(), cfg, functional);
}

RiskSensitiveReport risk_sensitive_cost(const ProblemSpec& spec, const SimConfig& cfg,
                                        const Point& x, int k,
                                        const std::vector<double>& T_list) {
  if (T_list.empty())
    throw ValidationError("sde.risk_sensitive_cost", "empty horizon list");
  std::vector<double> sorted = T_list;
  std::sort(sorted.begin(), sorted.end());
  SimConfig run = cfg;
  run.x0 = x;
  run.k0 = k;
  run.checkpoints = sorted;
  TrajectoryBatch batch = simulate(spec, run, Functional::terminal(sorted.back()));

  RiskSensitiveReport report;
  const int B = 32;  // batch count for batch-means errors
  for (std::size_t ti = 0; ti < sorted.size(); ++ti) {
    double T = sorted[ti];
    std::vector<double> w(batch.paths.size());
    double wmax = -std::numeric_limits<double>::infinity();
    for (std::size_t p = 0; p < batch.paths.size(); ++p) {
      w[p] = batch.paths[p].checkpoint_int_c[ti];
      wmax = std::max(wmax, w[p]);
    }
    double sum_exp = 0.0;
    for (double v : w) sum_exp += std::exp(v - wmax);
    CostEstimate est;
    est.T = T;
    est.value = (wmax + std::log(sum_exp / static_cast<double>(w.size()))) / T;
    est.max_weight_share = 1.0 / sum_exp;
    if (est.max_weight_share > 0.99)
      throw NumericError("sde.risk_sensitive_cost",
                         "EffectiveSampleCollapse: one path carries " +
                             std::to_string(100.0 * est.max_weight_share) +
                             "% of the exponential weight");
    // Batch means in fixed path order.
    std::vector<double> batch_vals;
    std::size_t per = w.size() / B;
    if (per >= 2) {
      for (int b = 0; b < B; ++b) {
        double bmax = -std::numeric_limits<double>::infinity();
        for (std::size_t p = b * per; p < (b + 1) * per; ++p) bmax = std::max(bmax, w[p]);
        double bsum = 0.0;
        for (std::size_t p = b * per; p < (b + 1) * per; ++p) bsum += std::exp(w[p] - bmax);
        batch_vals.push_back((bmax + std::log(bsum / static_cast<double>(per))) / T);
      }
      double bm = sample_mean(batch_vals);
      est.se = sample_se(batch_vals, bm);  // sd of batch means / sqrt(B)
    }
    report.estimates.push_back(est);
  }
  report.slope_trend = report.estimates.back().value - report.estimates.front().value;
  return report;
}

namespace {

struct McSide {
  double mean = 0.0;
  double se = 0.0;
};

McSide weighted_terminal_side(const ProblemSpec& spec, const SimConfig& cfg, double T,
                              double lambda, const GridFn& psi,
                              const std::function<double(const Point&, int)>& g) {
  TrajectoryBatch batch = simulate(spec, cfg, Functional::terminal(T));
  std::vector<double> vals(batch.paths.size(), 0.0);
  for (std::size_t p = 0; p < batch.paths.size(); ++p) {
    const PathResult& pr = batch.paths[p];
    if (pr.status != PathStatus::Terminal) continue;  // exploded: weight 0
    double gv = g(pr.x_end, pr.s_end);
    if (gv == 0.0) continue;
    vals[p] = std::exp(pr.int_c + lambda * T) * gv * psi.interpolate(pr.x_end, pr.s_end);
  }
  McSide side;
  side.mean = sample_mean(vals);
  side.se = sample_se(vals, side.mean);
  return side;
}

McSide twisted_terminal_side(const TwistedProblem& tp, const SimConfig& cfg, double T,
                             const std::function<double(const Point&, int)>& g) {
  TrajectoryBatch batch = twisted_simulate(tp, cfg, Functional::terminal(T));
  std::vector<double> vals(batch.paths.size(), 0.0);
  for (std::size_t p = 0; p < batch.paths.size(); ++p) {
    const PathResult& pr = batch.paths[p];
    if (pr.status != PathStatus::Terminal) continue;  // T >= explosion: excluded
    vals[p] = g(pr.x_end, pr.s_end);
  }
  McSide side;
  side.mean = sample_mean(vals);
  side.se = sample_se(vals, side.mean);
  return side;
}

}  // namespace

TwoSidedCheck feynman_kac_check(const ProblemSpec& spec, const GridFn& psi,
                                double lambda, const TwistedProblem& tp,
                                const std::function<double(const Point&, int)>& g,
                                double T, const SimConfig& cfg) {
  // The two sides use independent streams; each side's dt run is paired with
  // its dt/2 run through common random numbers, so the halving shift is the
  // discretization bias, not resampling noise.
  SimConfig lhs_cfg = cfg;
  SimConfig rhs_cfg = cfg;
  rhs_cfg.seed = cfg.seed ^ 0x5bd1e995babb1e5ULL;
  lhs_cfg.coarse_of_pair = true;
  rhs_cfg.coarse_of_pair = true;

  double psi_start = psi.interpolate(cfg.x0, cfg.k0);
  McSide lhs = weighted_terminal_side(spec, lhs_cfg, T, lambda, psi, g);
  McSide rhs_raw = twisted_terminal_side(tp, rhs_cfg, T, g);

  TwoSidedCheck check;
  check.lhs = lhs.mean;
  check.lhs_se = lhs.se;
  check.rhs = psi_start * rhs_raw.mean;
  check.rhs_se = psi_start * rhs_raw.se;
  double denom = std::sqrt(check.lhs_se * check.lhs_se + check.rhs_se * check.rhs_se);
  check.z = denom > 0.0 ? (check.lhs - check.rhs) / denom : 0.0;

  SimConfig lhs_half = lhs_cfg, rhs_half = rhs_cfg;
  lhs_half.dt = cfg.dt / 2.0;
  lhs_half.coarse_of_pair = false;
  rhs_half.dt = cfg.dt / 2.0;
  rhs_half.coarse_of_pair = false;
  check.lhs_half = weighted_terminal_side(spec, lhs_half, T, lambda, psi, g).mean;
  check.rhs_half = psi_start * twisted_terminal_side(tp, rhs_half, T, g).mean;
  check.bias_ok = std::fabs(check.lhs - check.lhs_half) < std::max(check.lhs_se, 1e-300) &&
                  std::fabs(check.rhs - check.rhs_half) < std::max(check.rhs_se, 1e-300);
  check.passed = std::fabs(check.z) <= 3.0 && check.bias_ok;
  return check;
}

HittingCheck hitting_representation_check(const ProblemSpec& spec,
                                          const PrincipalLimit& principal,
                                          double ball_radius, const SimConfig& cfg) {
  const GridFn& psi = principal.psi_star();
  double lambda = principal.lambda_star;
  TrajectoryBatch batch =
      simulate(spec, cfg, Functional::hit(RegionSpec::ball_all(ball_radius, spec.regimes)));

  HittingCheck check;
  check.censored_fraction =
      static_cast<double>(batch.n_censored) / static_cast<double>(batch.total());
  check.exploded_fraction =
      static_cast<double>(batch.n_exploded) / static_cast<double>(batch.total());
  if (check.censored_fraction > 0.10)
    throw NumericError("sde.hitting_representation_check",
                       "CensoringTooHigh: " +
                           std::to_string(100.0 * check.censored_fraction) +
                           "% of paths never hit the ball before t_max; raise "
                           "t_max or the problem is not recurrent");

  std::vector<double> vals(batch.paths.size(), 0.0);
  for (std::size_t p = 0; p < batch.paths.size(); ++p) {
    const PathResult& pr = batch.paths[p];
    if (pr.status != PathStatus::Hit) continue;  // tau = infinity contributes 0
    // Weight exp(int (c + lambda*)): the eigen-relation L psi + (c+lambda)psi
    // = 0 makes exactly this functional a martingale up to the hitting time.
    vals[p] = std::exp(pr.int_c + lambda * pr.t_end) *
              psi.interpolate(pr.x_end, pr.s_end);
  }
  check.estimate = sample_mean(vals);
  check.se = sample_se(vals, check.estimate);
  check.reference = psi.interpolate(cfg.x0, cfg.k0);
  check.rel_deviation = std::fabs(check.estimate - check.reference) /
                        std::max(std::fabs(check.reference), 1e-300);
  check.passed = check.rel_deviation <=
                     std::max(3.0 * check.se / std::max(check.reference, 1e-300), 0.05) &&
                 check.censored_fraction <= 0.01;
  return check;
}

}  // namespace coopeig
