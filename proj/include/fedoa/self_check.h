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

#ifndef FEDOA_SELF_CHECK_H_
#define FEDOA_SELF_CHECK_H_

#include <functional>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "fedoa/experiment.h"
#include "fedoa/experiment_file.h"
#include "fedoa/nn_core.h"
#include "fedoa/regularizers.h"
#include "fedoa/rng.h"

namespace fedoa {

// A small random backward-pass problem: encoder d=6 -> h=4, rank 2, batch 8,
// random nonzero A and B, and reference features from a second adapter.
struct GradInstance {
  Model model;
  LoraAdapter adapter;
  std::vector<Vector> inputs;
  std::vector<int> labels;
  std::vector<Vector> z_ref;  // empty when reg.lambda == 0
  RegSpec reg;

  Batch batch() const;
};

GradInstance random_grad_instance(Rng& rng, std::size_t layers,
                                  Activation act, const RegSpec& reg);

// Small federation used by the protocol checks (6 clients, tiny model).
ExperimentFile small_experiment();

struct CheckResult {
  std::string name;
  bool passed = false;
  std::string detail;
};

// Replaceable pieces, so tests can confirm that a broken implementation is
// caught.
struct CheckHooks {
  std::function<Vector(std::span<const double>, std::span<const double>,
                       DistanceKind)>
      distance_grad = [](std::span<const double> a, std::span<const double> b,
                         DistanceKind k) { return fedoa::distance_grad(a, b, k); };
};

std::vector<CheckResult> run_self_checks(const CheckHooks& hooks = {});

// Prints one line per check; returns true iff all passed.
bool print_check_table(const std::vector<CheckResult>& results,
                       std::ostream& out);

}  // namespace fedoa

#endif  // FEDOA_SELF_CHECK_H_
