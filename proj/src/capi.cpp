#include "coopeig/coopeig.h"

#include <cstring>
#include <memory>
#include <string>

#include "coopeig/detail.hpp"
#include "coopeig/runner.hpp"
#include "coopeig/spectrum.hpp"

namespace {

thread_local std::string g_last_error;

char* dup_string(const std::string& s) {
  char* out = static_cast<char*>(std::malloc(s.size() + 1));
  if (out) std::memcpy(out, s.c_str(), s.size() + 1);
  return out;
}

coopeig_status record_error(coopeig_status code, const std::string& message) {
  g_last_error = message;
  return code;
}

coopeig_status from_exception() {
  try {
    throw;
  } catch (const coopeig::Error& err) {
    return record_error(err.kind() == coopeig::Error::Kind::Validation
                            ? COOPEIG_EVALIDATION
                            : COOPEIG_ENUMERIC,
                        err.what());
  } catch (const std::exception& err) {
    return record_error(COOPEIG_EINTERNAL, err.what());
  } catch (...) {
    return record_error(COOPEIG_EINTERNAL, "unknown error");
  }
}

coopeig_status run_common(const coopeig::RunResult& result, const char* out_dir,
                          char** report_json_out) {
  if (report_json_out) *report_json_out = dup_string(result.report_json);
  if (result.exit_code != 2)
    coopeig::write_outputs(result, out_dir ? out_dir : ".");
  if (result.exit_code == 0) return COOPEIG_OK;
  return record_error(result.exit_code == 2 ? COOPEIG_EVALIDATION : COOPEIG_ENUMERIC,
                      result.message);
}

}  // namespace

struct coopeig_problem {
  std::string problem_json;
};

extern "C" {

const char* coopeig_version(void) { return "0.1.0"; }

const char* coopeig_last_error(void) { return g_last_error.c_str(); }

void coopeig_string_free(char* s) { std::free(s); }

coopeig_status coopeig_run_file(const char* config_path, const char* out_dir,
                                int threads, long long seed,
                                char** report_json_out) {
  if (!config_path) return record_error(COOPEIG_EVALIDATION, "null config path");
  try {
    coopeig::RunResult result =
        coopeig::run_config_file(config_path, threads > 0 ? threads : 1, seed);
    return run_common(result, out_dir, report_json_out);
  } catch (...) {
    return from_exception();
  }
}

coopeig_status coopeig_run_json(const char* config_json, const char* out_dir,
                                int threads, long long seed,
                                char** report_json_out) {
  if (!config_json) return record_error(COOPEIG_EVALIDATION, "null config");
  try {
    coopeig::RunResult result =
        coopeig::run_config_json(config_json, threads > 0 ? threads : 1, seed);
    return run_common(result, out_dir, report_json_out);
  } catch (...) {
    return from_exception();
  }
}

coopeig_problem* coopeig_problem_create(const char* problem_json) {
  if (!problem_json) {
    record_error(COOPEIG_EVALIDATION, "null problem json");
    return nullptr;
  }
  try {
    auto handle = std::make_unique<coopeig_problem>();
    handle->problem_json = problem_json;
    // Parse eagerly so schema errors surface at creation time.
    coopeig::detail::parse_problem_block(handle->problem_json);
    return handle.release();
  } catch (const std::exception& err) {
    record_error(COOPEIG_EVALIDATION, err.what());
    return nullptr;
  }
}

void coopeig_problem_free(coopeig_problem* p) { delete p; }

}  // extern "C"

namespace {

coopeig::ProblemSpec spec_from_handle(const coopeig_problem* p) {
  return coopeig::detail::parse_problem_block(p->problem_json);
}

}  // namespace

extern "C" {

coopeig_status coopeig_problem_validate(coopeig_problem* p, int sample_density,
                                        int* out_ok) {
  if (!p || !out_ok) return record_error(COOPEIG_EVALIDATION, "null argument");
  try {
    coopeig::ProblemSpec spec = spec_from_handle(p);
    coopeig::ValidationReport report = coopeig::validate(spec, sample_density);
    *out_ok = report.passed ? 1 : 0;
    return COOPEIG_OK;
  } catch (...) {
    return from_exception();
  }
}

coopeig_status coopeig_problem_irreducible(coopeig_problem* p, int sample_density,
                                           int* out_irreducible) {
  if (!p || !out_irreducible) return record_error(COOPEIG_EVALIDATION, "null argument");
  try {
    coopeig::ProblemSpec spec = spec_from_handle(p);
    *out_irreducible =
        coopeig::irreducibility_check(spec, sample_density).irreducible ? 1 : 0;
    return COOPEIG_OK;
  } catch (...) {
    return from_exception();
  }
}

coopeig_status coopeig_problem_dirichlet_eig(coopeig_problem* p, double radius,
                                             double h, double tol, double* out_lambda,
                                             double* out_lo, double* out_hi) {
  if (!p || !out_lambda) return record_error(COOPEIG_EVALIDATION, "null argument");
  try {
    coopeig::ProblemSpec spec = spec_from_handle(p);
    auto grid = std::make_shared<coopeig::Grid>(coopeig::build_grid(
        spec, coopeig::RegionSpec::ball_all(radius, spec.regimes), h));
    coopeig::DiscreteOperator op = coopeig::assemble(spec, grid, true, true);
    coopeig::EigenPair pair = coopeig::principal_eigenpair(op, tol);
    *out_lambda = pair.lambda;
    if (out_lo) *out_lo = pair.bracket_lo;
    if (out_hi) *out_hi = pair.bracket_hi;
    return COOPEIG_OK;
  } catch (...) {
    return from_exception();
  }
}

coopeig_status coopeig_problem_lambda_star(coopeig_problem* p, const double* radii,
                                           int n_radii, double h, double tol,
                                           double* out_lambda_star,
                                           double* out_uncertainty) {
  if (!p || !radii || n_radii < 2 || !out_lambda_star)
    return record_error(COOPEIG_EVALIDATION, "null or short argument");
  try {
    coopeig::ProblemSpec spec = spec_from_handle(p);
    std::vector<double> rs(radii, radii + n_radii);
    coopeig::SpectrumOptions opt;
    opt.tol = tol;
    coopeig::PrincipalLimit lim = coopeig::lambda_star(spec, rs, h, opt);
    *out_lambda_star = lim.lambda_star;
    if (out_uncertainty) *out_uncertainty = lim.uncertainty;
    return COOPEIG_OK;
  } catch (...) {
    return from_exception();
  }
}

}  // extern "C"
