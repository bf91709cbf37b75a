#pragma once

#include "coopeig/assemble.hpp"

namespace coopeig {

// Principal Dirichlet eigenpair of the discrete operator, sign convention
// A psi = -lambda psi. The bracket [lo, hi] is a certified Collatz-Wielandt
// interval for lambda: with B = A + s0 I entrywise nonnegative and
// irreducible, any positive vector v gives
//   min_r (Bv)_r / v_r <= perron(B) <= max_r (Bv)_r / v_r,
// and lambda = s0 - perron(B).
struct EigenPair {
  double lambda = 0.0;
  GridFn psi;  // positive at interior slots, 0 at Dirichlet slots
  double bracket_lo = 0.0;
  double bracket_hi = 0.0;
  int iterations = 0;
  int normalization_node = -1;
  bool converged = false;

  double bracket_width() const { return bracket_hi - bracket_lo; }
};

// Inverse iteration on (sigma I - A), sigma = s0 + current upper bracket,
// refreshing the factorization whenever the bracket has halved. Started from
// the all-ones vector; positivity is preserved because (sigma I - A) is a
// nonsingular M-matrix. Convergence when hi - lo <= tol (1 + |lambda|).
// On max_iter exhaustion the best bracket is returned with converged=false.
EigenPair principal_eigenpair(const DiscreteOperator& op, double tol = 1e-10,
                              int max_iter = 100000);

struct UniquenessReport {
  double max_rel_deviation = 0.0;
  bool passed = false;
};

// Restarts the iteration from `trials` random positive vectors and reports
// the largest sup-norm deviation between renormalized eigenvectors.
UniquenessReport uniqueness_probe(const DiscreteOperator& op, const EigenPair& pair,
                                  int trials, std::uint64_t seed = 7);

// Strong connectivity of the directed graph of positive off-diagonals.
bool discrete_irreducible(const SpMat& A);

}  // namespace coopeig
