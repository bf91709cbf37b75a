#include "coopeig/twist.hpp"

#include <cmath>

namespace coopeig {

namespace {

constexpr double kPsiFloor = 1e-300;

}  // namespace

TwistedProblem twist(const ProblemSpec& spec, const GridFn& psi, double lambda,
                     std::shared_ptr<const Grid> grid) {
  const Grid& g = *grid;
  TwistedProblem tp;
  tp.base = spec;
  tp.grid = grid;
  tp.psi = psi;
  tp.psi.grid = grid.get();
  tp.psi.owner = grid;
  tp.lambda = lambda;
  tp.log_psi = GridFn(grid, 0.0);
  tp.node_valid.assign(static_cast<std::size_t>(g.n_slots()), 0);
  for (auto& f : tp.drift_correction) f = GridFn(grid, 0.0);

  for (auto [node, k] : g.rows)
    if (!(psi.at(node, k) > 0.0))
      throw NumericError("twist.twist",
                         "NonpositivePsi: psi is not positive at an interior node");

  for (int node = 0; node < g.n_nodes(); ++node)
    for (int k = 1; k <= g.n_regimes; ++k)
      if (psi.at(node, k) > 0.0) tp.log_psi.at(node, k) = std::log(psi.at(node, k));

  // Gradient of log psi: central where both neighbors carry positive psi,
  // one-sided at the data-window edge, invalid within one cell of a zero.
  for (int node = 0; node < g.n_nodes(); ++node) {
    auto idx = g.node_index(node);
    for (int k = 1; k <= g.n_regimes; ++k) {
      if (!(psi.at(node, k) > 0.0)) continue;
      bool ok = true;
      Point grad{0, 0};
      for (int d = 0; d < g.dim && ok; ++d) {
        int di = d == 0 ? 1 : 0, dj = d == 0 ? 0 : 1;
        bool has_fwd = g.node_in_box(idx[0] + di, idx[1] + dj);
        bool has_bwd = g.node_in_box(idx[0] - di, idx[1] - dj);
        int fwd = has_fwd ? g.node_linear(idx[0] + di, idx[1] + dj) : -1;
        int bwd = has_bwd ? g.node_linear(idx[0] - di, idx[1] - dj) : -1;
        bool fwd_pos = has_fwd && psi.at(fwd, k) > 0.0;
        bool bwd_pos = has_bwd && psi.at(bwd, k) > 0.0;
        // Adjacency to a vanishing psi slot puts the node in the band.
        if ((has_fwd && !fwd_pos) || (has_bwd && !bwd_pos)) { ok = false; break; }
        if (fwd_pos && bwd_pos)
          grad[d] = (tp.log_psi.at(fwd, k) - tp.log_psi.at(bwd, k)) / (2.0 * g.h);
        else if (fwd_pos)
          grad[d] = (tp.log_psi.at(fwd, k) - tp.log_psi.at(node, k)) / g.h;
        else if (bwd_pos)
          grad[d] = (tp.log_psi.at(node, k) - tp.log_psi.at(bwd, k)) / g.h;
        else
          ok = false;
      }
      if (!ok) continue;
      tp.node_valid[static_cast<std::size_t>(g.slot(node, k))] = 1;
      SymMat a = spec.diffusion(g.coord(node), k);
      tp.drift_correction[0].at(node, k) =
          2.0 * (a.a11 * grad[0] + (g.dim == 2 ? a.a12 * grad[1] : 0.0));
      if (g.dim == 2)
        tp.drift_correction[1].at(node, k) = 2.0 * (a.a12 * grad[0] + a.a22 * grad[1]);
    }
  }

  // Constant extension of psi and the drift correction across the band, so
  // interpolation near the rim sees bounded fields.
  tp.psi_filled = tp.psi;
  std::vector<std::uint8_t> have = tp.node_valid;
  std::vector<std::uint8_t> have_psi(static_cast<std::size_t>(g.n_slots()));
  for (int s = 0; s < g.n_slots(); ++s)
    have_psi[static_cast<std::size_t>(s)] = tp.psi.v[static_cast<std::size_t>(s)] > 0.0;
  for (int pass = 0; pass < std::max(g.nx(), g.ny()); ++pass) {
    bool changed = false;
    for (int node = 0; node < g.n_nodes(); ++node) {
      auto idx = g.node_index(node);
      for (int k = 1; k <= g.n_regimes; ++k) {
        int s = g.slot(node, k);
        auto pull = [&](std::vector<std::uint8_t>& mask, auto&& copy_from) {
          if (mask[static_cast<std::size_t>(s)]) return;
          const int di[4] = {1, -1, 0, 0};
          const int dj[4] = {0, 0, 1, -1};
          for (int q = 0; q < (g.dim == 2 ? 4 : 2); ++q) {
            if (!g.node_in_box(idx[0] + di[q], idx[1] + dj[q])) continue;
            int nb = g.node_linear(idx[0] + di[q], idx[1] + dj[q]);
            if (mask[static_cast<std::size_t>(g.slot(nb, k))]) {
              copy_from(nb);
              mask[static_cast<std::size_t>(s)] = 1;
              changed = true;
              return;
            }
          }
        };
        pull(have, [&](int nb) {
          tp.drift_correction[0].at(node, k) = tp.drift_correction[0].at(nb, k);
          if (g.dim == 2)
            tp.drift_correction[1].at(node, k) = tp.drift_correction[1].at(nb, k);
        });
        pull(have_psi, [&](int nb) { tp.psi_filled.at(node, k) = tp.psi_filled.at(nb, k); });
      }
    }
    if (!changed) break;
  }
  for (double& v : tp.psi_filled.v)
    if (!(v > 0.0)) v = 1.0;  // unreachable exterior corners
  return tp;
}

Point TwistedProblem::drift_at(const Point& x, int k) const {
  Point b = base.drift(x, k);
  b[0] += drift_correction[0].interpolate(x, k);
  if (base.dim == 2) b[1] += drift_correction[1].interpolate(x, k);
  return b;
}

double TwistedProblem::rate_at(const Point& x, int i, int j) const {
  double m = base.rates(x, i, j);
  if (m == 0.0) return 0.0;
  double pi = std::max(psi_filled.interpolate(x, i), kPsiFloor);
  double pj = psi_filled.interpolate(x, j);
  return m * pj / pi;
}

ProblemSpec TwistedProblem::to_problem_spec() const {
  ProblemSpec s = base;
  // Capture by value: the returned spec must outlive this object only if the
  // caller copies the grids; share them through shared_ptr-owned fields.
  auto self = std::make_shared<TwistedProblem>(*this);
  self->psi.grid = self->grid.get();
  self->log_psi.grid = self->grid.get();
  self->psi_filled.grid = self->grid.get();
  for (auto& f : self->drift_correction) f.grid = self->grid.get();
  s.drift = [self](const Point& x, int k) { return self->drift_at(x, k); };
  s.rates = [self](const Point& x, int i, int j) { return self->rate_at(x, i, j); };
  s.potential = [](const Point&, int) { return 0.0; };
  return s;
}

Eigen::VectorXd twisted_apply(const DiscreteOperator& op, const GridFn& psi,
                              const GridFn& phi) {
  const Grid& g = *op.grid;
  const int n = g.n_rows();
  Eigen::VectorXd psi_row(n), phi_row(n);
  for (int r = 0; r < n; ++r) {
    auto [node, k] = g.rows[static_cast<std::size_t>(r)];
    psi_row[r] = psi.at(node, k);
    phi_row[r] = phi.at(node, k);
  }
  Eigen::VectorXd y = Eigen::VectorXd::Zero(n);
  for (int col = 0; col < op.A.outerSize(); ++col) {
    auto [cnode, ck] = g.rows[static_cast<std::size_t>(col)];
    double psi_c = psi.at(cnode, ck);
    double phi_c = phi.at(cnode, ck);
    for (SpMat::InnerIterator it(op.A, col); it; ++it) {
      int r = static_cast<int>(it.row());
      if (r == col) continue;
      y[r] += it.value() * (psi_c / psi_row[r]) * (phi_c - phi_row[r]);
    }
  }
  for (int bcol = 0; bcol < op.bnd.outerSize(); ++bcol) {
    auto [bnode, bk] = g.bcols[static_cast<std::size_t>(bcol)];
    double psi_c = psi.at(bnode, bk);
    if (psi_c == 0.0) continue;
    double phi_c = phi.at(bnode, bk);
    for (SpMat::InnerIterator it(op.bnd, bcol); it; ++it) {
      int r = static_cast<int>(it.row());
      y[r] += it.value() * (psi_c / psi_row[r]) * (phi_c - phi_row[r]);
    }
  }
  return y;
}

ProductIdentityReport product_identity_residual(
    const ProblemSpec& spec, const TwistedProblem& tp,
    const std::function<double(const Point&, int)>& phi, double window_radius) {
  const Grid& g = *tp.grid;
  DiscreteOperator base_op = assemble(spec, tp.grid, false);
  DiscreteOperator tw_op = assemble(tp.to_problem_spec(), tp.grid, false);

  GridFn phi_fn(g, 0.0), prod(g, 0.0);
  phi_fn.fill_from(phi);
  for (int node = 0; node < g.n_nodes(); ++node)
    for (int k = 1; k <= g.n_regimes; ++k)
      prod.at(node, k) = phi_fn.at(node, k) * tp.psi.at(node, k);

  Eigen::VectorXd l_prod = base_op.apply(prod);
  Eigen::VectorXd l_psi = base_op.apply(tp.psi);
  Eigen::VectorXd lt_phi = tw_op.apply(phi_fn);
  Eigen::VectorXd row_sums =
      tw_op.A * Eigen::VectorXd::Ones(g.n_rows()) +
      tw_op.bnd * Eigen::VectorXd::Ones(g.n_bcols());

  ProductIdentityReport rep;
  double sum = 0.0;
  for (int r = 0; r < g.n_rows(); ++r) {
    auto [node, k] = g.rows[static_cast<std::size_t>(r)];
    if (!tp.valid_at(node, k)) continue;
    if (window_radius > 0.0) {
      Point x = g.coord(node);
      double d2 = x[0] * x[0] + (g.dim == 2 ? x[1] * x[1] : 0.0);
      if (d2 > window_radius * window_radius) continue;
    }
    double residual = l_prod[r] - phi_fn.at(node, k) * l_psi[r] -
                      tp.psi.at(node, k) * lt_phi[r];
    rep.max_residual = std::max(rep.max_residual, std::fabs(residual));
    sum += std::fabs(residual);
    rep.max_row_sum = std::max(rep.max_row_sum, std::fabs(row_sums[r]));
    ++rep.rows_checked;
  }
  if (rep.rows_checked > 0) rep.mean_residual = sum / rep.rows_checked;
  return rep;
}

}  // namespace coopeig
