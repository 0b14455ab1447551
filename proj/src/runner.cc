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

#include "fedoa/runner.h"

#include <fstream>
#include <ostream>
#include <sstream>

#include "fedoa/errors.h"
#include "fedoa/experiment.h"

namespace fedoa {
namespace {

namespace fs = std::filesystem;

void write_file(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  out << text;
  out.flush();
  if (!out) throw IoError("failed writing " + path.string());
}

void make_dirs(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw IoError("cannot create " + dir.string() + ": " + ec.message());
}

}  // namespace

std::string render_report(const RunReport& report) {
  return to_json(report).dump(2) + "\n";
}

ExperimentFile load_experiment(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot read config " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_experiment(buf.str());
}

std::vector<PointResult> run_sweep(const ExperimentFile& file,
                                   const fs::path& out_dir,
                                   std::size_t threads, std::ostream& log) {
  std::vector<PointResult> results;
  for (SweepPoint& point : expand_sweep(file)) {
    const ExperimentFile& cfg = point.config;
    const World world = build_world(cfg.model, cfg.layout, cfg.fed.seed);
    FinalAdapters final;
    RunReport report = run_experiment(cfg.fed, world, threads, &final);
    report.config = to_json(cfg);

    const fs::path dir = out_dir / point.name;
    make_dirs(dir / "adapters");
    write_file(dir / "report.json", render_report(report));
    std::ostringstream traces, trajectory;
    write_traces_csv(traces, report);
    write_trajectory_csv(trajectory, report);
    write_file(dir / "traces.csv", traces.str());
    write_file(dir / "trajectory.csv", trajectory.str());
    write_file(dir / "config.toml", serialize_experiment(cfg));
    write_file(dir / "adapters" / "global.json",
               adapter_to_json(final.global, world.model.encoder).dump() + "\n");
    for (std::size_t c = 0; c < final.personalized.size(); ++c) {
      write_file(dir / "adapters" / ("client_" + std::to_string(c) + ".json"),
                 adapter_to_json(final.personalized[c], world.model.encoder)
                         .dump() +
                     "\n");
    }

    log << point.name << ": ";
    if (report.personalized) {
      log << "personalized intra-OOD acc "
          << format_double(report.personalized->mean_accuracy) << ", ";
    }
    log << "global held-out acc " << format_double(report.global.heldout.accuracy)
        << ", worst-case OOD risk " << format_double(report.worst_case_ood_risk)
        << ", " << report.wall_clock_seconds << " s\n";
    results.push_back({point.name, dir, std::move(report)});
  }
  return results;
}

}  // namespace fedoa
