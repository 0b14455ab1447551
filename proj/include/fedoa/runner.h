/*
 * Copyright 2026 The FedOA Simulator Authors.
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     https://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#ifndef FEDOA_RUNNER_H_
#define FEDOA_RUNNER_H_

#include <cstddef>
#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include "fedoa/experiment_file.h"
#include "fedoa/metrics.h"

namespace fedoa {

struct PointResult {
  std::string name;
  std::filesystem::path dir;
  RunReport report;
};

// Runs every sweep point of `file` and writes, per point, under
// out_dir/<point name>/: report.json, traces.csv, trajectory.csv,
// config.toml and adapters/{global,client_<id>}.json. Progress and wall-clock
// timings go to `log`. Throws IoError on filesystem failures.
std::vector<PointResult> run_sweep(const ExperimentFile& file,
                                   const std::filesystem::path& out_dir,
                                   std::size_t threads, std::ostream& log);

// Reads and parses an experiment file. Throws IoError or ConfigError.
ExperimentFile load_experiment(const std::filesystem::path& path);

// Pretty-printed report.json text (2-space indent, trailing newline).
std::string render_report(const RunReport& report);

}  // namespace fedoa

#endif  // FEDOA_RUNNER_H_
