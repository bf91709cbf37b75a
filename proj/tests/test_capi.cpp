#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstring>
#include <filesystem>

#include "coopeig/coopeig.h"

namespace {

const char* kProblem = R"({
  "dim": 1, "regimes": 2,
  "window": {"shape": "box", "lo": [-40], "hi": [40]},
  "diffusion": [["1"]],
  "drift": [["0"]],
  "potential": ["0"],
  "rates": {"1->2": "1", "2->1": "1"}
})";

}  // namespace

TEST_CASE("version string") {
  CHECK(std::strcmp(coopeig_version(), "0.1.0") == 0);
}

TEST_CASE("problem handle lifecycle and validation") {
  coopeig_problem* p = coopeig_problem_create(kProblem);
  REQUIRE(p != nullptr);
  int ok = 0;
  CHECK(coopeig_problem_validate(p, 8, &ok) == COOPEIG_OK);
  CHECK(ok == 1);
  int irr = 0;
  CHECK(coopeig_problem_irreducible(p, 8, &irr) == COOPEIG_OK);
  CHECK(irr == 1);
  coopeig_problem_free(p);
}

TEST_CASE("bad problem json yields null handle and an error message") {
  coopeig_problem* p = coopeig_problem_create("{\"dim\": 1}");
  CHECK(p == nullptr);
  CHECK(std::strlen(coopeig_last_error()) > 0);
}

TEST_CASE("dirichlet eigenvalue through the C surface") {
  coopeig_problem* p = coopeig_problem_create(kProblem);
  REQUIRE(p != nullptr);
  double lambda = 0, lo = 0, hi = 0;
  REQUIRE(coopeig_problem_dirichlet_eig(p, 1.0, 0.005, 1e-10, &lambda, &lo, &hi) ==
          COOPEIG_OK);
  double exact = M_PI * M_PI / 4.0;
  CHECK(std::fabs(lambda - exact) / exact < 1e-3);
  CHECK(lo <= lambda);
  CHECK(lambda <= hi);
  coopeig_problem_free(p);
}

TEST_CASE("lambda_star through the C surface") {
  coopeig_problem* p = coopeig_problem_create(kProblem);
  REQUIRE(p != nullptr);
  double radii[3] = {4, 8, 16};
  double ls = 1, unc = 0;
  REQUIRE(coopeig_problem_lambda_star(p, radii, 3, 0.1, 1e-10, &ls, &unc) == COOPEIG_OK);
  CHECK(std::fabs(ls) <= 2e-2);
  CHECK(unc > 0);
  coopeig_problem_free(p);
}

TEST_CASE("validation errors map to COOPEIG_EVALIDATION") {
  coopeig_problem* p = coopeig_problem_create(kProblem);
  REQUIRE(p != nullptr);
  double radii[1] = {4};
  double ls = 0;
  CHECK(coopeig_problem_lambda_star(p, radii, 1, 0.1, 1e-10, &ls, nullptr) ==
        COOPEIG_EVALIDATION);
  coopeig_problem_free(p);
}

TEST_CASE("run_json writes outputs and returns the report") {
  std::string cfg = std::string("{\"problem\": ") + kProblem +
                    R"(, "task": {"type": "eig", "radius": 1.0},
                        "numerics": {"h": 0.02}})";
  std::string dir = "capi_out_test";
  std::filesystem::remove_all(dir);
  char* report = nullptr;
  coopeig_status st = coopeig_run_json(cfg.c_str(), dir.c_str(), 1, -1, &report);
  CHECK(st == COOPEIG_OK);
  REQUIRE(report != nullptr);
  CHECK(std::strstr(report, "\"task\": \"eig\"") != nullptr);
  CHECK(std::filesystem::exists(dir + "/report.json"));
  CHECK(std::filesystem::exists(dir + "/eigenfunction.csv"));
  coopeig_string_free(report);
  std::filesystem::remove_all(dir);
}

TEST_CASE("run_json propagates config errors without writing files") {
  std::string dir = "capi_out_err";
  std::filesystem::remove_all(dir);
  char* report = nullptr;
  coopeig_status st = coopeig_run_json("{\"task\": {}}", dir.c_str(), 1, -1, &report);
  CHECK(st == COOPEIG_EVALIDATION);
  CHECK(!std::filesystem::exists(dir + "/report.json"));
  CHECK(std::strlen(coopeig_last_error()) > 0);
  coopeig_string_free(report);
}
