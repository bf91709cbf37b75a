#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <fstream>
#include <memory>

#include "coopeig/assemble.hpp"
#include "helpers.hpp"

using namespace coopeig;

namespace {

std::shared_ptr<Grid> make_grid(const ProblemSpec& s, double radius, double h) {
  return std::make_shared<Grid>(build_grid(s, RegionSpec::ball_all(radius, s.regimes), h));
}

double zero_fn(const Point&, int) { return 0.0; }

}  // namespace

TEST_CASE("1d second-difference row stencil") {
  ProblemSpec s = testutil::base_spec(1, 1, 5.0);
  double h = 0.5;
  auto g = make_grid(s, 1.0, h);
  DiscreteOperator op = assemble(s, g, false);
  // Row at x=0 couples to x=+-0.5 with 1/h^2 and itself with -2/h^2.
  int row = g->row_of[g->slot(g->node_linear(0), 1)];
  CHECK(op.A.coeff(row, row) == doctest::Approx(-2.0 / (h * h)));
  int left = g->row_of[g->slot(g->node_linear(-1), 1)];
  int right = g->row_of[g->slot(g->node_linear(1), 1)];
  CHECK(op.A.coeff(row, left) == doctest::Approx(1.0 / (h * h)));
  CHECK(op.A.coeff(row, right) == doctest::Approx(1.0 / (h * h)));
  CHECK(op.metzler_ok);
}

TEST_CASE("positive drift uses the forward difference") {
  ProblemSpec s = testutil::base_spec(1, 1, 5.0);
  s.drift = [](const Point&, int) { return Point{2.0, 0.0}; };
  double h = 0.5;
  auto g = make_grid(s, 1.0, h);
  DiscreteOperator op = assemble(s, g, false);
  int row = g->row_of[g->slot(g->node_linear(0), 1)];
  int left = g->row_of[g->slot(g->node_linear(-1), 1)];
  int right = g->row_of[g->slot(g->node_linear(1), 1)];
  // Diffusion part plus [0, -2/h, +2/h].
  CHECK(op.A.coeff(row, left) == doctest::Approx(1.0 / (h * h)));
  CHECK(op.A.coeff(row, right) == doctest::Approx(1.0 / (h * h) + 2.0 / h));
  CHECK(op.A.coeff(row, row) == doctest::Approx(-2.0 / (h * h) - 2.0 / h));
}

TEST_CASE("symmetric coupling adds off-block entries and diagonal compensation") {
  ProblemSpec s = testutil::coupled_laplacian();
  double h = 0.5;
  auto g = make_grid(s, 1.0, h);
  DiscreteOperator op = assemble(s, g, false);
  int row1 = g->row_of[g->slot(g->node_linear(0), 1)];
  int row2 = g->row_of[g->slot(g->node_linear(0), 2)];
  CHECK(op.A.coeff(row1, row2) == 1.0);
  CHECK(op.A.coeff(row2, row1) == 1.0);
  CHECK(op.A.coeff(row1, row1) == doctest::Approx(-2.0 / (h * h) - 1.0));
}

TEST_CASE("assemble is linear in the potential: c + kappa shifts the diagonal") {
  testutil::Rng rng(5);
  ProblemSpec s = testutil::random_cooperative(rng, 2);
  auto g = make_grid(s, 2.0, 0.25);
  DiscreteOperator base = assemble(s, g, true);
  double kappa = 0.7;
  ProblemSpec shifted = s;
  auto pot = s.potential;
  shifted.potential = [pot, kappa](const Point& x, int k) { return pot(x, k) + kappa; };
  DiscreteOperator shifted_op = assemble(shifted, g, true);
  SpMat diff = shifted_op.A - base.A;
  for (int col = 0; col < diff.outerSize(); ++col)
    for (SpMat::InnerIterator it(diff, col); it; ++it) {
      if (it.row() == it.col())
        CHECK(it.value() == doctest::Approx(kappa).epsilon(1e-13));
      else
        CHECK(it.value() == 0.0);
    }
}

TEST_CASE("mixed derivative keeps the Metzler pattern iff |a12| <= min(a11,a22)") {
  ProblemSpec s = testutil::base_spec(2, 1, 5.0);
  s.diffusion = [](const Point&, int) { return SymMat{1.0, 2.0, 0.8}; };
  auto g = make_grid(s, 1.5, 0.25);
  CHECK(assemble(s, g, false).metzler_ok);

  s.diffusion = [](const Point&, int) { return SymMat{1.0, 2.0, -0.9}; };
  CHECK(assemble(s, g, false).metzler_ok);

  s.diffusion = [](const Point&, int) { return SymMat{1.0, 2.0, 1.2}; };
  DiscreteOperator bad = assemble(s, g, false);
  CHECK(!bad.metzler_ok);
  CHECK_THROWS_WITH_AS(assemble(s, g, false, true),
                       doctest::Contains("MixedTermPositivityFailure"), NumericError);
}

TEST_CASE("mixed stencil is consistent: exact on quadratics") {
  ProblemSpec s = testutil::base_spec(2, 1, 5.0);
  s.diffusion = [](const Point&, int) { return SymMat{2.0, 3.0, 0.5}; };
  auto g = make_grid(s, 1.5, 0.25);
  DiscreteOperator op = assemble(s, g, false);
  GridFn q(*g);
  q.fill_from([](const Point& x, int) {
    return 0.5 * x[0] * x[0] + x[0] * x[1] - 0.25 * x[1] * x[1];
  });
  // tr(a D2 q) = 2*0.5*2 + 3*(-0.5) + 2*0.5*1 = 2 - 1.5 + 1 = 1.5 everywhere.
  Eigen::VectorXd y = op.apply(q);
  for (int r = 0; r < y.size(); ++r) CHECK(y[r] == doctest::Approx(1.5).epsilon(1e-9));
}

TEST_CASE("solve_dirichlet with zero data returns zero") {
  ProblemSpec s = testutil::coupled_laplacian();
  auto g = make_grid(s, 1.0, 0.1);
  DiscreteOperator op = assemble(s, g, false);
  GridFn u = solve_dirichlet(op, zero_fn, zero_fn);
  for (double v : u.v) CHECK(v == 0.0);
}

TEST_CASE("1d Poisson solution matches the closed form at second order") {
  ProblemSpec s = testutil::base_spec(1, 1, 5.0);
  auto err_at = [&](double h) {
    auto g = make_grid(s, 1.0, h);
    DiscreteOperator op = assemble(s, g, false);
    GridFn u = solve_dirichlet(op, zero_fn, [](const Point&, int) { return 1.0; });
    double err = 0.0;
    for (auto [node, k] : g->rows) {
      double x = g->coord(node)[0];
      err = std::max(err, std::fabs(u.at(node, k) - 0.5 * (1.0 - x * x)));
    }
    return err;
  };
  // u'' = -1 with the boundary lying exactly on lattice nodes: the discrete
  // solution is exact up to roundoff, so check smallness instead of rate.
  CHECK(err_at(1.0 / 64) < 1e-10);
}

TEST_CASE("Poisson with off-lattice boundary converges at first order or better") {
  ProblemSpec s = testutil::base_spec(1, 1, 5.0);
  // Radius 1 is on-lattice for these h, so use an incommensurate radius.
  double radius = 0.937;
  auto err_at = [&](double h) {
    auto g = std::make_shared<Grid>(
        build_grid(s, RegionSpec::ball_all(radius, 1), h));
    DiscreteOperator op = assemble(s, g, false);
    GridFn u = solve_dirichlet(
        op, [&](const Point& x, int) { return 0.5 * (radius * radius - x[0] * x[0]); },
        [](const Point&, int) { return 1.0; });
    double err = 0.0;
    for (auto [node, k] : g->rows) {
      double x = g->coord(node)[0];
      err = std::max(err,
                     std::fabs(u.at(node, k) - 0.5 * (radius * radius - x * x)));
    }
    return err;
  };
  // Exact boundary data supplied on the rasterized rim: interior scheme is
  // exact for quadratics, so the error is dominated by roundoff again.
  CHECK(err_at(1.0 / 32) < 1e-10);
}

TEST_CASE("drift problem converges under h-halving") {
  ProblemSpec s = testutil::base_spec(1, 1, 5.0);
  s.drift = [](const Point&, int) { return Point{2.0, 0.0}; };
  // u'' + 2u' = -1 on (-1,1), u(+-1)=0; closed form below.
  auto exact = [](double x) {
    double c2 = 1.0 / (std::exp(-2.0) - std::exp(2.0));
    double c1 = -0.5 - c2 * std::exp(2.0);
    return c1 + c2 * std::exp(-2.0 * x) - 0.5 * x;
  };
  auto err_at = [&](double h) {
    auto g = make_grid(s, 1.0, h);
    DiscreteOperator op = assemble(s, g, false);
    GridFn u = solve_dirichlet(op, zero_fn, [](const Point&, int) { return 1.0; });
    double err = 0.0;
    for (auto [node, k] : g->rows)
      err = std::max(err, std::fabs(u.at(node, k) - exact(g->coord(node)[0])));
    return err;
  };
  double e1 = err_at(1.0 / 32), e2 = err_at(1.0 / 64);
  CHECK(e2 < e1);
  CHECK(e1 / e2 > 1.7);  // at least first order from the upwind term
}

TEST_CASE("discrete maximum principle on random Metzler instances") {
  testutil::Rng rng(17);
  for (int trial = 0; trial < 10; ++trial) {
    ProblemSpec s = testutil::random_cooperative(rng, rng.uniform_int(1, 3));
    // Nonpositive potential keeps row sums nonpositive.
    auto pot = s.potential;
    s.potential = [pot](const Point& x, int k) { return -std::fabs(pot(x, k)) - 0.1; };
    auto g = make_grid(s, 2.0, 0.25);
    DiscreteOperator op = assemble(s, g, true, true);
    double fscale = rng.uniform(0.1, 2.0);
    double gscale = rng.uniform(0.1, 1.0);
    GridFn u = solve_dirichlet(
        op, [&](const Point& x, int k) { return -gscale * (1.0 + 0.1 * x[0] * k); },
        [&](const Point& x, int k) { return -fscale * (1.0 + std::cos(x[0] + k)); });
    // f <= 0, g <= 0 => u <= 0 everywhere.
    for (auto [node, k] : g->rows) CHECK(u.at(node, k) <= 1e-12);
  }
}

TEST_CASE("positive source with positive eigenvalue shift gives positive solution") {
  ProblemSpec s = testutil::coupled_laplacian();
  auto g = make_grid(s, 1.0, 0.1);
  DiscreteOperator op = assemble(s, g, false);
  // lambda_D of the Dirichlet Laplacian on (-1,1) is ~pi^2/4 > 0, so the
  // resolvent of A at 0 is positivity preserving.
  GridFn u = solve_dirichlet(op, zero_fn, [](const Point& x, int) {
    return x[0] > 0.2 && x[0] < 0.6 ? 1.0 : 0.0;
  });
  for (auto [node, k] : g->rows) CHECK(u.at(node, k) > 0.0);
}

TEST_CASE("matrix market export writes 1-based coordinate lines") {
  ProblemSpec s = testutil::base_spec(1, 1, 5.0);
  auto g = make_grid(s, 1.0, 0.5);
  DiscreteOperator op = assemble(s, g, false);
  std::string path = "mm_test_out.mtx";
  export_matrix_market(op, path);
  std::ifstream in(path);
  std::string header;
  std::getline(in, header);
  CHECK(header == "%%MatrixMarket matrix coordinate real general");
  int rows, cols, nnz;
  in >> rows >> cols >> nnz;
  CHECK(rows == op.A.rows());
  CHECK(nnz == op.A.nonZeros());
  int r, c;
  double v;
  int count = 0;
  double diag_sum = 0.0;
  while (in >> r >> c >> v) {
    CHECK(r >= 1);
    CHECK(c >= 1);
    if (r == c) diag_sum += v;
    ++count;
  }
  CHECK(count == nnz);
  CHECK(diag_sum == doctest::Approx(-3 * 2.0 / 0.25));
  std::remove(path.c_str());
}
