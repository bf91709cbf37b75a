#pragma once

#include <Eigen/Sparse>
#include <functional>
#include <memory>
#include <string>

#include "coopeig/grid.hpp"

namespace coopeig {

using SpMat = Eigen::SparseMatrix<double>;

// Finite-difference block operator over the interior rows of a grid.
//
// Row layout follows Grid::rows. Second derivatives use centered
// differences; in two dimensions a nonzero mixed coefficient a12 is
// discretized with the sign-adapted corner stencil, which keeps all
// off-diagonal entries nonnegative exactly when |a12| <= min(a11, a22).
// Drift uses first-order upwind differences (forward taken at a tie), and
// regime coupling puts +m_kj at the same node in regime j with the
// compensating diagonal. The resulting matrix is Metzler whenever
// `metzler_ok` holds; couplings into Dirichlet data slots live in `bnd`.
struct DiscreteOperator {
  std::shared_ptr<const Grid> grid;
  SpMat A;    // interior x interior
  SpMat bnd;  // interior x boundary columns
  double shift_s0 = 0.0;  // max |A_rr| + 1, recorded for the Perron reduction
  bool metzler_ok = true;
  double min_offdiag = 0.0;
  bool include_potential = false;

  // y = A u_int + bnd u_bnd for a full grid function.
  Eigen::VectorXd apply(const GridFn& u) const;

  Eigen::VectorXd interior_values(const GridFn& u) const;
  Eigen::VectorXd boundary_values(const GridFn& u) const;
  GridFn to_grid_fn(const Eigen::VectorXd& interior, double boundary_fill = 0.0) const;

  // Adds kappa to every diagonal entry (the exact c -> c + kappa shift).
  void add_to_diagonal(double kappa);
};

DiscreteOperator assemble(const ProblemSpec& spec, std::shared_ptr<const Grid> grid,
                          bool include_potential, bool require_metzler = false);

// Solves A u = -f with u = g on boundary slots by sparse LU, with iterative
// refinement until the residual max-norm is at most 1e-10 (1 + |f| + |g|).
GridFn solve_dirichlet(const DiscreteOperator& op,
                       const std::function<double(const Point&, int)>& boundary_data,
                       const std::function<double(const Point&, int)>& rhs);

// Reusable factorization for repeated solves against the same matrix.
class DirichletSolver {
public:
  explicit DirichletSolver(const DiscreteOperator& op);
  GridFn solve(const std::function<double(const Point&, int)>& boundary_data,
               const std::function<double(const Point&, int)>& rhs) const;

private:
  const DiscreteOperator& op_;
  Eigen::SparseLU<SpMat> lu_;
};

// Coordinate text export, 1-based "row col value" lines.
void export_matrix_market(const DiscreteOperator& op, const std::string& path);

}  // namespace coopeig
