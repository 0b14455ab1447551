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

#include "fedoa/experiment.h"

#include <algorithm>
#include <chrono>
#include <memory>
#include <string>
#include <utility>

#include "fedoa/errors.h"

namespace fedoa {
namespace {

constexpr std::uint64_t kHeldoutStreamIndex = 1u << 20;

nlohmann::json echo(const FedConfig& cfg) {
  return {{"rounds", cfg.rounds},
          {"local_steps", cfg.local_steps},
          {"local_epochs", cfg.local_epochs},
          {"eta_l", cfg.eta_l},
          {"eta_g", cfg.eta_g},
          {"lambda", cfg.reg.lambda},
          {"distance", std::string(to_string(cfg.reg.kind))},
          {"alpha", cfg.alpha},
          {"sample_frac", cfg.sample_frac},
          {"batch_size", cfg.batch_size},
          {"global_steps", cfg.global_steps},
          {"global_full_batch", cfg.global_full_batch},
          {"baseline", std::string(to_string(cfg.baseline))},
          {"seed", cfg.seed}};
}

double mean_personalized_distance(const World& world,
                                  const std::vector<ClientState>& clients,
                                  const LoraAdapter& global,
                                  DistanceKind kind) {
  double s = 0.0;
  for (const auto& c : clients) {
    s += mean_feature_distance(world.model.encoder, c.personalized, global,
                               world.intra_ood_test[c.client_id], kind);
  }
  return s / static_cast<double>(clients.size());
}

}  // namespace

void ModelSpec::validate() const {
  if (hidden_dim < 1 || layers < 1) {
    throw ConfigError("model needs hidden_dim >= 1 and layers >= 1");
  }
  if (rank < 1) throw ConfigError("LoRA rank must be >= 1");
  if (!(lora_scale > 0.0)) throw ConfigError("lora_scale must be positive");
}

World build_world(const ModelSpec& model_spec, const LayoutSpec& layout_spec,
                  std::uint64_t seed) {
  model_spec.validate();
  FederationLayout layout =
      make_layout(layout_spec.n_clients, layout_spec.beta_lo,
                  layout_spec.beta_hi, layout_spec.heldout_beta,
                  layout_spec.dims, layout_spec.sizes);
  Rng mech_rng = make_stream(seed, Stream::kMechanism);
  InvariantMechanism mechanism =
      InvariantMechanism::draw(layout_spec.dims.d_inv, mech_rng);

  Rng backbone_rng = make_stream(seed, Stream::kBackbone);
  const std::size_t input_dim = layout_spec.dims.d_inv + layout_spec.dims.d_spu;
  FrozenEncoder enc = random_encoder(
      input_dim,
      std::vector<std::size_t>(model_spec.layers, model_spec.hidden_dim),
      model_spec.activation, backbone_rng);
  FixedHead head = random_head(enc.feature_dim(), backbone_rng);

  Rng adapter_rng = make_stream(seed, Stream::kAdapterInit);
  LoraAdapter initial = init_adapter(enc, model_spec.rank,
                                     model_spec.lora_scale, adapter_rng);

  World w{std::move(mechanism), std::move(layout),
          Model{std::move(enc), std::move(head)}, std::move(initial), {}, {},
          {}};
  for (std::size_t c = 0; c < w.layout.train_envs.size(); ++c) {
    Rng train_rng = make_stream(seed, Stream::kEnvData, 2 * c);
    const EnvSpec& env = w.layout.train_envs[c];
    w.train.push_back(sample_env(env, w.mechanism, env.n_train, train_rng));
    Rng test_rng = make_stream(seed, Stream::kEnvData, 2 * c + 1);
    const EnvSpec& ood = w.layout.intra_ood[c];
    w.intra_ood_test.push_back(sample_env(ood, w.mechanism, ood.n_test, test_rng));
  }
  Rng heldout_rng = make_stream(seed, Stream::kEnvData, kHeldoutStreamIndex);
  w.heldout_test = sample_env(w.layout.heldout_env, w.mechanism,
                              w.layout.heldout_env.n_test, heldout_rng);
  return w;
}

std::vector<ClientState> initial_clients(const World& world,
                                         const FedConfig& cfg) {
  std::vector<ClientState> clients;
  for (std::size_t c = 0; c < world.train.size(); ++c) {
    ClientState s;
    s.client_id = c;
    s.personalized = world.initial_adapter;
    // Non-owning handle; the world outlives the run.
    s.data = std::shared_ptr<const Dataset>(std::shared_ptr<const Dataset>{},
                                            &world.train[c]);
    s.rng = make_stream(cfg.seed, Stream::kClient, 2 * c);
    s.global_rng = make_stream(cfg.seed, Stream::kClient, 2 * c + 1);
    clients.push_back(std::move(s));
  }
  return clients;
}

ServerState initial_server(const World& world, const FedConfig& cfg) {
  return ServerState{0, world.initial_adapter,
                     make_stream(cfg.seed, Stream::kServer)};
}

RunReport run_experiment(const FedConfig& cfg, const World& world,
                         std::size_t threads, FinalAdapters* final) {
  cfg.validate();
  const auto started = std::chrono::steady_clock::now();
  std::vector<ClientState> clients = initial_clients(world, cfg);
  ServerState server = initial_server(world, cfg);

  RunReport report;
  report.config = echo(cfg);
  report.seed = cfg.seed;
  report.baseline = cfg.baseline;

  const bool personalized = has_personalized_path(cfg.baseline);
  for (std::size_t t = 0; t < cfg.rounds; ++t) {
    report.rounds.push_back(run_round(server, clients, cfg, world.model, threads));
    report.bytes_communicated += report.rounds.back().bytes;
    if (personalized) {
      report.feature_distance.push_back(mean_personalized_distance(
          world, clients, server.global, cfg.reg.kind));
    }
  }

  bool evaluate_personalized = personalized;
  if (cfg.baseline == Baseline::kFinetune) {
    // Local tuning from the final global adapter: K steps per client for
    // each of T rounds, no communication.
    FedConfig local = cfg;
    local.baseline = Baseline::kLocalOnly;
    local.sample_frac = 1.0;
    for (auto& c : clients) c.personalized = server.global;
    for (std::size_t t = 0; t < cfg.rounds; ++t) {
      report.rounds.push_back(run_round(server, clients, local, world.model, threads));
      report.feature_distance.push_back(mean_personalized_distance(
          world, clients, server.global, cfg.reg.kind));
    }
    evaluate_personalized = true;
  }

  std::vector<OodProbe> probes;
  report.global.heldout =
      empirical_risk(world.model, server.global, world.heldout_test);
  probes.push_back({&server.global, &world.heldout_test});
  for (const auto& c : clients) {
    const Dataset& env = world.intra_ood_test[c.client_id];
    report.global.intra_ood.push_back(
        {c.client_id, env.env_id, empirical_risk(world.model, server.global, env)});
    probes.push_back({&server.global, &env});
  }
  if (evaluate_personalized) {
    PersonalizedEval eval;
    for (const auto& c : clients) {
      const Dataset& env = world.intra_ood_test[c.client_id];
      eval.intra_ood.push_back(
          {c.client_id, env.env_id, empirical_risk(world.model, c.personalized, env)});
      eval.mean_accuracy += eval.intra_ood.back().result.accuracy;
      eval.mean_risk += eval.intra_ood.back().result.risk;
      probes.push_back({&c.personalized, &env});
    }
    const double n = static_cast<double>(clients.size());
    eval.mean_accuracy /= n;
    eval.mean_risk /= n;
    report.personalized = std::move(eval);
  }
  report.worst_case_ood_risk = worst_case_ood(world.model, probes);
  if (final != nullptr) {
    final->global = server.global;
    final->personalized.clear();
    if (evaluate_personalized) {
      final->personalized.resize(clients.size());
      for (const auto& c : clients) {
        final->personalized[c.client_id] = c.personalized;
      }
    }
  }
  report.wall_clock_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - started)
          .count();
  return report;
}

}  // namespace fedoa
