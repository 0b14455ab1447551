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

#ifndef FEDOA_EXPERIMENT_FILE_H_
#define FEDOA_EXPERIMENT_FILE_H_

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "fedoa/experiment.h"
#include "fedoa/fed_protocol.h"
#include "json.hpp"

namespace fedoa {

struct SweepLists {
  std::vector<double> lambdas;
  std::vector<DistanceKind> kinds;
  std::vector<Baseline> baselines;
  std::vector<std::uint64_t> seeds;

  bool empty() const {
    return lambdas.empty() && kinds.empty() && baselines.empty() &&
           seeds.empty();
  }
};

// Parsed experiment configuration. Defaults reproduce the reference setup:
// 6 clients, T = 20, K = 2, batch 32, lambda = 0.5, LoRA rank 8.
struct ExperimentFile {
  FedConfig fed;
  ModelSpec model;
  LayoutSpec layout;
  std::string output_dir = "out";
  SweepLists sweep;

  ExperimentFile() {
    fed.eta_l = 0.1;
    fed.eta_g = 0.05;
    fed.seed = 1;
  }
};

// Sectioned key = value text ([experiment], [federation], [data], [model],
// [sweep]). Unknown sections or keys, duplicates, and type mismatches throw
// ConfigError naming the line.
ExperimentFile parse_experiment(std::string_view text);

// Every key, in canonical order. parse_experiment(serialize_experiment(f))
// reproduces f.
std::string serialize_experiment(const ExperimentFile& file);

nlohmann::json to_json(const ExperimentFile& file);

struct SweepPoint {
  std::string name;       // used as the output subdirectory
  ExperimentFile config;  // single run, sweep lists cleared
};

// Cartesian product baselines x kinds x lambdas x seeds; an empty list keeps
// the base value.
std::vector<SweepPoint> expand_sweep(const ExperimentFile& file);

}  // namespace fedoa

#endif  // FEDOA_EXPERIMENT_FILE_H_
