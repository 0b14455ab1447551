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

#ifndef FEDOA_FED_PROTOCOL_H_
#define FEDOA_FED_PROTOCOL_H_

#include <cstddef>
#include <cstdint>
#include <memory>
#include <optional>
#include <span>
#include <string_view>
#include <vector>

#include "fedoa/data_synth.h"
#include "fedoa/nn_core.h"
#include "fedoa/regularizers.h"
#include "fedoa/rng.h"
#include "json.hpp"

namespace fedoa {

enum class Baseline {
  kFedOA,      // personalized (feature-regularized) + global paths
  kFedIT,      // global path only
  kLocalOnly,  // personalized SGD only, no communication
  kProx,       // personalized with parameter proximal term + global path
  kFinetune,   // FedIT rounds, then local tuning from the global adapter
};

std::string_view to_string(Baseline b);
Baseline parse_baseline(std::string_view name);

bool has_personalized_path(Baseline b);
bool has_global_path(Baseline b);

struct FedConfig {
  std::size_t rounds = 20;        // T
  std::size_t local_steps = 2;    // K
  std::size_t local_epochs = 0;   // when > 0, K = epochs * ceil(n / batch)
  double eta_l = 0.05;
  double eta_g = 0.05;
  RegSpec reg{DistanceKind::kL2Sq, 0.5};
  std::vector<double> alpha;      // empty: proportional to |S_e|
  double sample_frac = 1.0;
  std::size_t batch_size = 32;
  std::size_t global_steps = 1;
  bool global_full_batch = true;
  Baseline baseline = Baseline::kFedOA;
  std::uint64_t seed = 0;

  // Throws ConfigError on invalid values.
  void validate() const;
  // Personalized steps per round for a client holding n samples.
  std::size_t steps_for(std::size_t n) const;
};

struct Model {
  FrozenEncoder encoder;
  FixedHead head;
};

struct ClientState {
  std::size_t client_id = 0;
  LoraAdapter personalized;
  std::shared_ptr<const Dataset> data;
  Rng rng;         // personalized-path mini-batches
  Rng global_rng;  // global-path mini-batches when not full batch
};

struct ServerState {
  std::size_t round = 0;
  LoraAdapter global;
  Rng rng;  // client sampling
};

// Per-client entry of one round. For personalized baselines, risk and
// grad_norm_sq are the full-batch local risk and squared risk-gradient norm
// at the round-start personalized adapter, and feat_dist is the mean feature
// distance between the updated personalized adapter and the broadcast global
// adapter on local data. For FedIT they describe the broadcast global
// adapter and feat_dist is absent.
struct ClientTrace {
  std::size_t client_id = 0;
  double risk = 0.0;
  double grad_norm_sq = 0.0;
  std::optional<double> feat_dist;
};

struct RoundTrace {
  std::size_t round = 0;
  std::vector<ClientTrace> clients;  // sorted by client id
  double global_risk = 0.0;          // alpha-weighted risk of the new global
  std::uint64_t bytes = 0;           // communicated this round
};

struct ClientUpdate {
  LoraAdapter personalized;
  std::optional<LoraAdapter> global;  // absent for local-only
  ClientTrace trace;
  std::vector<double> step_losses;    // personalized objective per step
};

// One client's work in a round: K personalized steps regularized toward the
// broadcast snapshot, then the global path from the snapshot. Advances the
// client's RNG streams but does not store the new personalized adapter.
// Throws DivergenceError on non-finite losses or gradients.
ClientUpdate client_update(ClientState& client,
                           const LoraAdapter& global_snapshot,
                           const FedConfig& cfg, const Model& model,
                           std::size_t round);

struct WeightedAdapter {
  const LoraAdapter* adapter = nullptr;
  double weight = 0.0;
};

// Weighted mean of each factor. Weights are renormalized to sum to one.
// Identical inputs give back the input exactly.
LoraAdapter aggregate(std::span<const WeightedAdapter> updates);

// Client ids selected for a round: ceil(sample_frac * n) drawn without
// replacement by a Fisher-Yates pass over the sorted ids, returned sorted.
std::vector<std::size_t> sample_clients(std::span<const std::size_t> ids,
                                        double sample_frac, Rng& rng);

// One communication round. Mutates the server and the sampled clients.
// Results do not depend on client order or on `threads`.
RoundTrace run_round(ServerState& server, std::vector<ClientState>& clients,
                     const FedConfig& cfg, const Model& model,
                     std::size_t threads = 1);

struct StepSizeBounds {
  double eta_l_max = 0.0;
  double eta_g_max = 0.0;
};

// eta_l <= 1 / (8 sqrt(3(1+3T)T(1+2K)K) lambda sigma L),
// eta_g <= 1 / (2 sqrt(6(1+3T)T) L).
StepSizeBounds theorem4_stepsizes(double L, double sigma, double lambda,
                                  std::size_t K, std::size_t T);

// Bytes one round moves: down- and upload of the adapter per sampled client.
std::uint64_t round_bytes(std::size_t sampled_clients,
                          std::size_t adapter_params);

// Client aggregation weights over all clients (cfg.alpha or |S_e|).
std::vector<double> client_weights(const FedConfig& cfg,
                                   const std::vector<ClientState>& clients);

// Checkpoint document: one object per adapted layer with layer_index (the
// encoder layer), rank, scale, and A, B as nested row arrays.
nlohmann::json adapter_to_json(const LoraAdapter& ad, const FrozenEncoder& enc);
// Throws ShapeError if the document does not fit `enc`.
LoraAdapter adapter_from_json(const nlohmann::json& doc,
                              const FrozenEncoder& enc);

}  // namespace fedoa

#endif  // FEDOA_FED_PROTOCOL_H_
