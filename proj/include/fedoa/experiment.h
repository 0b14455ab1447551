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

#ifndef FEDOA_EXPERIMENT_H_
#define FEDOA_EXPERIMENT_H_

#include <cstddef>
#include <cstdint>
#include <vector>

#include "fedoa/data_synth.h"
#include "fedoa/fed_protocol.h"
#include "fedoa/metrics.h"
#include "fedoa/nn_core.h"

namespace fedoa {

struct ModelSpec {
  std::size_t hidden_dim = 16;  // width of every layer, so h = hidden_dim
  std::size_t layers = 2;
  Activation activation = Activation::kTanh;
  std::size_t rank = 8;
  double lora_scale = 1.0;

  void validate() const;
};

struct LayoutSpec {
  std::size_t n_clients = 6;
  double beta_lo = 0.6;
  double beta_hi = 0.9;
  double heldout_beta = -0.9;
  EnvDims dims;
  EnvSizes sizes;
};

// Everything fixed by the experiment seed: label mechanism, backbone, head,
// initial adapter and all datasets. Independent of the training config, so
// baselines and sweep points built from one seed share the same world.
struct World {
  InvariantMechanism mechanism;
  FederationLayout layout;
  Model model;
  LoraAdapter initial_adapter;
  std::vector<Dataset> train;           // per client
  std::vector<Dataset> intra_ood_test;  // per client, flipped beta
  Dataset heldout_test;
};

World build_world(const ModelSpec& model_spec, const LayoutSpec& layout_spec,
                  std::uint64_t seed);

// Clients and server at round 0, with the streams derived from cfg.seed.
std::vector<ClientState> initial_clients(const World& world,
                                         const FedConfig& cfg);
ServerState initial_server(const World& world, const FedConfig& cfg);

struct FinalAdapters {
  LoraAdapter global;
  std::vector<LoraAdapter> personalized;  // by client id; empty for FedIT
};

// Runs cfg.rounds rounds under cfg.baseline and evaluates the result. When
// `final` is given it receives the adapters at the end of the run.
RunReport run_experiment(const FedConfig& cfg, const World& world,
                         std::size_t threads = 1,
                         FinalAdapters* final = nullptr);

}  // namespace fedoa

#endif  // FEDOA_EXPERIMENT_H_
