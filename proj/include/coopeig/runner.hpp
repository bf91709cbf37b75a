#pragma once

#include <map>
#include <string>

namespace coopeig {

// Batch entry point behind the CLI and the C API. Parses a strict JSON
// config (unknown keys rejected), validates the problem, executes one task
// and renders a deterministic report: same config and seed give byte
// identical output except for the timestamp field.
struct RunResult {
  int exit_code = 0;  // 0 ok, 2 validation failure, 3 numerical failure
  std::string report_json;                       // empty on exit 2
  std::map<std::string, std::string> csv_files;  // name -> content
  std::string message;                           // human-readable status
};

RunResult run_config_json(const std::string& config_json, int threads = 1,
                          long long seed_override = -1);
RunResult run_config_file(const std::string& config_path, int threads = 1,
                          long long seed_override = -1);

// Writes report.json and CSV tables into out_dir (created if needed). No-op
// for exit code 2.
void write_outputs(const RunResult& result, const std::string& out_dir);

}  // namespace coopeig
