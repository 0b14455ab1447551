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

#ifndef FEDOA_METRICS_H_
#define FEDOA_METRICS_H_

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "fedoa/data_synth.h"
#include "fedoa/fed_protocol.h"
#include "fedoa/nn_core.h"
#include "fedoa/regularizers.h"
#include "json.hpp"

namespace fedoa {

struct RiskAccuracy {
  double risk = 0.0;
  double accuracy = 0.0;
};

// Mean logistic loss and sign accuracy (logit >= 0 predicts +1).
RiskAccuracy empirical_risk(const Model& model, const LoraAdapter& adapter,
                            const Dataset& data);

// An adapter paired with the environment it is tested on.
struct OodProbe {
  const LoraAdapter* adapter = nullptr;
  const Dataset* env = nullptr;
};

// Largest empirical risk over the probes.
double worst_case_ood(const Model& model, std::span<const OodProbe> probes);

// Mean over samples of D(Phi_e(x), Phi_g(x)).
double mean_feature_distance(const FrozenEncoder& enc,
                             const LoraAdapter& phi_e,
                             const LoraAdapter& phi_g, const Dataset& data,
                             DistanceKind kind);

struct Theorem4Inputs {
  double L = 0.0;      // smoothness of local risks in adapter parameters
  double sigma = 0.0;  // bound on mini-batch gradient norms
  double G = 0.0;      // local-vs-global gradient diversity
  double M = 0.0;      // personalized-to-global parameter distance
};

// State to probe. Probe points are Gaussian perturbations of radius
// `radius` around the global adapter; each pair is evaluated on one
// randomly chosen client with full-batch gradients.
struct ProbeContext {
  const Model* model = nullptr;
  std::span<const Dataset> client_data;
  std::span<const double> alpha;  // client weights; renormalized
  const LoraAdapter* global = nullptr;
  std::span<const LoraAdapter> personalized;
  std::size_t n_pairs = 100;
  double radius = 0.1;
  std::size_t batch_size = 32;
};

// Throws ConfigError when fewer than two probe pairs or no clients are
// available.
Theorem4Inputs estimate_theorem4_inputs(const ProbeContext& ctx, Rng& rng);

struct ClientEval {
  std::size_t client_id = 0;
  std::string env_id;
  RiskAccuracy result;
};

struct PersonalizedEval {
  std::vector<ClientEval> intra_ood;  // personalized adapter on own OOD env
  double mean_accuracy = 0.0;
  double mean_risk = 0.0;
};

struct GlobalEval {
  RiskAccuracy heldout;               // inter-client OOD
  std::vector<ClientEval> intra_ood;  // global adapter on each OOD env
};

inline constexpr int kReportSchemaVersion = 1;

struct RunReport {
  nlohmann::json config;  // echo of the configuration that produced the run
  std::uint64_t seed = 0;
  Baseline baseline = Baseline::kFedOA;
  std::vector<RoundTrace> rounds;
  std::optional<PersonalizedEval> personalized;
  GlobalEval global;
  // Mean over clients of the feature distance between personalized and
  // global adapters on intra-OOD inputs, one entry per round.
  std::vector<double> feature_distance;
  double worst_case_ood_risk = 0.0;
  std::uint64_t bytes_communicated = 0;
  double wall_clock_seconds = 0.0;  // not part of the JSON document
};

// Deterministic JSON document (wall-clock time excluded).
nlohmann::json to_json(const RunReport& report);

// CSV rows: round,client_id,risk,grad_norm_sq,feat_dist.
void write_traces_csv(std::ostream& out, const RunReport& report);

// CSV rows: round,feature_distance,global_risk,bytes.
void write_trajectory_csv(std::ostream& out, const RunReport& report);

// Fixed 17-significant-digit rendering used by every CSV writer.
std::string format_double(double v);

}  // namespace fedoa

#endif  // FEDOA_METRICS_H_
