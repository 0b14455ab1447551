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

#include "fedoa/metrics.h"

#include <algorithm>
#include <cmath>
#include <random>
#include <sstream>

#include "fedoa/errors.h"
#include "fedoa/experiment.h"
#include "gtest/gtest.h"

namespace fedoa {
namespace {

World SmallWorld(std::uint64_t seed, std::size_t n_clients = 4) {
  ModelSpec model;
  model.hidden_dim = 6;
  model.rank = 2;
  LayoutSpec layout;
  layout.n_clients = n_clients;
  layout.sizes.n_train = 64;
  layout.sizes.n_test = 32;
  return build_world(model, layout, seed);
}

FedConfig SmallConfig(Baseline b = Baseline::kFedOA) {
  FedConfig cfg;
  cfg.rounds = 4;
  cfg.local_steps = 3;
  cfg.batch_size = 16;
  cfg.eta_l = 0.1;
  cfg.eta_g = 0.05;
  cfg.baseline = b;
  cfg.seed = 21;
  return cfg;
}

LoraAdapter Jitter(const LoraAdapter& ad, std::uint64_t seed, double size) {
  Rng rng(seed);
  std::normal_distribution<double> normal(0.0, size);
  LoraAdapter out = ad;
  for (auto& p : out.layers) {
    for (double& v : p.a.data()) v += normal(rng);
    for (double& v : p.b.data()) v += normal(rng);
  }
  return out;
}

// 2 -> 2 identity layer with head (1, 0).
Model IdentityModel() {
  EncoderLayer layer{Matrix(2, 2, {1, 0, 0, 1}), {0, 0}, Activation::kIdentity,
                     true};
  return Model{FrozenEncoder({layer}), FixedHead({1, 0})};
}

// Adapter whose delta is c * e1 e1^T on the identity model, so the logit of
// x is (1 + c) x_0.
LoraAdapter Rigged(const Model& m, double c) {
  LoraAdapter ad = zero_adapter(m.encoder, 1);
  ad.layers[0].a(0, 0) = 1.0;
  ad.layers[0].b(0, 0) = c;
  return ad;
}

Dataset OnePoint(Vector x, int y, std::string id = "e") {
  Dataset d;
  d.xs = {std::move(x)};
  d.ys = {y};
  d.env_id = std::move(id);
  return d;
}

// Duplicate forward pass and loss, written against the raw layer data.
RiskAccuracy ReferenceRisk(const Model& m, const LoraAdapter& ad,
                           const Dataset& d) {
  double loss = 0.0;
  std::size_t hits = 0;
  for (std::size_t i = 0; i < d.size(); ++i) {
    Vector u = d.xs[i];
    std::size_t slot = 0;
    for (const auto& layer : m.encoder.layers()) {
      Vector next(layer.weight.rows());
      for (std::size_t r = 0; r < layer.weight.rows(); ++r) {
        double s = layer.bias[r];
        for (std::size_t c = 0; c < layer.weight.cols(); ++c) {
          double w = layer.weight(r, c);
          if (layer.adapted) {
            const auto& p = ad.layers[slot];
            for (std::size_t k = 0; k < p.a.rows(); ++k) {
              w += ad.scale * p.b(r, k) * p.a(k, c);
            }
          }
          s += w * u[c];
        }
        next[r] = layer.activation == Activation::kTanh ? std::tanh(s)
                  : layer.activation == Activation::kRelu ? std::max(s, 0.0)
                                                          : s;
      }
      if (layer.adapted) ++slot;
      u = next;
    }
    double logit = 0.0;
    for (std::size_t k = 0; k < u.size(); ++k) logit += m.head.weights()[k] * u[k];
    loss += std::log1p(std::exp(-d.ys[i] * logit));
    hits += (logit >= 0 ? 1 : -1) == d.ys[i];
  }
  return {loss / d.size(), static_cast<double>(hits) / d.size()};
}

TEST(EmpiricalRiskTest, ConfidentCorrectPredictions) {
  const Model m = IdentityModel();
  Dataset d;
  for (int i = 0; i < 10; ++i) {
    const int y = i % 2 ? 1 : -1;
    d.xs.push_back({y * (40.0 + i), 0.3});
    d.ys.push_back(y);
  }
  const RiskAccuracy r = empirical_risk(m, zero_adapter(m.encoder, 1), d);
  EXPECT_LE(r.risk, 1e-15);
  EXPECT_EQ(r.accuracy, 1.0);
}

TEST(EmpiricalRiskTest, RandomPredictorIsAtChance) {
  Rng rng(1);
  const FrozenEncoder enc = random_encoder(4, {4}, Activation::kTanh, rng);
  const Model m{enc, random_head(4, rng)};
  std::normal_distribution<double> normal(0.0, 1.0);
  Dataset d;
  const std::size_t n = 10000;
  for (std::size_t i = 0; i < n; ++i) {
    d.xs.push_back({normal(rng), normal(rng), normal(rng), normal(rng)});
    d.ys.push_back(i % 2 ? 1 : -1);
  }
  const RiskAccuracy r = empirical_risk(m, zero_adapter(enc, 2), d);
  EXPECT_NEAR(r.accuracy, 0.5, 3.0 / std::sqrt(n));
}

TEST(EmpiricalRiskTest, MatchesReferenceImplementation) {
  const World world = SmallWorld(2);
  const LoraAdapter ad = Jitter(world.initial_adapter, 3, 0.4);
  for (const Dataset& d : world.intra_ood_test) {
    const RiskAccuracy got = empirical_risk(world.model, ad, d);
    const RiskAccuracy want = ReferenceRisk(world.model, ad, d);
    EXPECT_NEAR(got.risk, want.risk, 1e-12);
    EXPECT_EQ(got.accuracy, want.accuracy);
  }
}

TEST(EmpiricalRiskTest, EmptyDatasetRejected) {
  const Model m = IdentityModel();
  EXPECT_THROW(empirical_risk(m, zero_adapter(m.encoder, 1), Dataset{}),
               ShapeError);
}

TEST(WorstCaseOodTest, RiggedAdapters) {
  const Model m = IdentityModel();
  const Dataset env = OnePoint({1, 0}, 1);
  const LoraAdapter a0 = Rigged(m, 0.0), a1 = Rigged(m, 1.0), a2 = Rigged(m, -3.0);
  const OodProbe one[] = {{&a1, &env}};
  EXPECT_NEAR(worst_case_ood(m, one), std::log1p(std::exp(-2.0)), 1e-15);
  const OodProbe three[] = {{&a0, &env}, {&a1, &env}, {&a2, &env}};
  EXPECT_NEAR(worst_case_ood(m, three), std::log1p(std::exp(2.0)), 1e-15);
  const OodProbe dup[] = {{&a0, &env}, {&a1, &env}, {&a2, &env},
                          {&a0, &env}, {&a1, &env}, {&a2, &env}};
  EXPECT_EQ(worst_case_ood(m, dup), worst_case_ood(m, three));
  EXPECT_THROW(worst_case_ood(m, std::span<const OodProbe>{}), ShapeError);
}

TEST(FeatureDistanceTest, SelfDistanceIsZero) {
  const World world = SmallWorld(4);
  const LoraAdapter ad = Jitter(world.initial_adapter, 5, 0.3);
  for (DistanceKind kind :
       {DistanceKind::kL2Sq, DistanceKind::kCosine, DistanceKind::kPearson}) {
    EXPECT_NEAR(mean_feature_distance(world.model.encoder, ad, ad,
                                      world.train[0], kind),
                0.0, 1e-12);
  }
}

TEST(FeatureDistanceTest, ClosedFormOnLinearLayer) {
  Rng rng(6);
  const FrozenEncoder enc = random_encoder(5, {4}, Activation::kIdentity, rng);
  LoraAdapter g = zero_adapter(enc, 2, 0.8);
  g = Jitter(g, 7, 0.5);
  LoraAdapter e = g;
  Matrix dB(4, 2);
  std::normal_distribution<double> normal(0.0, 0.5);
  for (double& v : dB.data()) v = normal(rng);
  add_scaled(e.layers[0].b, dB, 1.0);

  Dataset d;
  for (int i = 0; i < 50; ++i) {
    Vector x(5);
    for (double& v : x) v = normal(rng);
    d.xs.push_back(x);
    d.ys.push_back(1);
  }
  double want = 0.0;
  const Matrix& a = g.layers[0].a;
  for (const Vector& u : d.xs) {
    for (std::size_t i = 0; i < 4; ++i) {
      double v = 0.0;
      for (std::size_t k = 0; k < 2; ++k) {
        for (std::size_t j = 0; j < 5; ++j) v += 0.8 * dB(i, k) * a(k, j) * u[j];
      }
      want += v * v;
    }
  }
  want /= d.size();
  EXPECT_NEAR(mean_feature_distance(enc, e, g, d, DistanceKind::kL2Sq), want,
              1e-12);
}

TEST(FeatureDistanceTest, ShuffleInvariant) {
  const World world = SmallWorld(8);
  const LoraAdapter e = Jitter(world.initial_adapter, 9, 0.3);
  const LoraAdapter g = Jitter(world.initial_adapter, 10, 0.3);
  Dataset shuffled = world.train[1];
  std::vector<std::size_t> perm(shuffled.size());
  for (std::size_t i = 0; i < perm.size(); ++i) perm[i] = i;
  Rng rng(11);
  std::shuffle(perm.begin(), perm.end(), rng);
  Dataset copy = shuffled;
  for (std::size_t i = 0; i < perm.size(); ++i) {
    shuffled.xs[i] = copy.xs[perm[i]];
    shuffled.ys[i] = copy.ys[perm[i]];
  }
  for (DistanceKind kind :
       {DistanceKind::kL2Sq, DistanceKind::kCosine, DistanceKind::kPearson}) {
    EXPECT_NEAR(
        mean_feature_distance(world.model.encoder, e, g, world.train[1], kind),
        mean_feature_distance(world.model.encoder, e, g, shuffled, kind),
        1e-13);
  }
}

TEST(FeatureDistanceTest, DegenerateFeaturesPropagate) {
  const Model m = IdentityModel();
  const Dataset d = OnePoint({0, 0}, 1);
  const LoraAdapter ad = zero_adapter(m.encoder, 1);
  EXPECT_THROW(mean_feature_distance(m.encoder, ad, ad, d, DistanceKind::kCosine),
               DegenerateInputError);
}

ProbeContext Context(const World& w, const LoraAdapter& global,
                     std::span<const LoraAdapter> personalized,
                     std::span<const double> alpha) {
  ProbeContext ctx;
  ctx.model = &w.model;
  ctx.client_data = w.train;
  ctx.alpha = alpha;
  ctx.global = &global;
  ctx.personalized = personalized;
  return ctx;
}

TEST(Theorem4InputsTest, IdenticalClientsHaveNoDiversity) {
  World world = SmallWorld(12);
  for (auto& d : world.train) d = world.train[0];
  const LoraAdapter g = Jitter(world.initial_adapter, 13, 0.3);
  const std::vector<LoraAdapter> pers(4, g);
  const std::vector<double> alpha(4, 0.25);
  Rng rng(1);
  const Theorem4Inputs in =
      estimate_theorem4_inputs(Context(world, g, pers, alpha), rng);
  EXPECT_LE(in.G, 1e-10);
  EXPECT_GT(in.L, 0.0);
  EXPECT_GT(in.sigma, 0.0);
}

TEST(Theorem4InputsTest, DefaultInitHasZeroDistance) {
  const World world = SmallWorld(14);
  FedConfig cfg = SmallConfig();
  const auto clients = initial_clients(world, cfg);
  std::vector<LoraAdapter> pers;
  for (const auto& c : clients) pers.push_back(c.personalized);
  const std::vector<double> alpha = client_weights(cfg, clients);
  Rng rng(2);
  const Theorem4Inputs in = estimate_theorem4_inputs(
      Context(world, world.initial_adapter, pers, alpha), rng);
  EXPECT_EQ(in.M, 0.0);
  EXPECT_GE(in.G, 0.0);
}

TEST(Theorem4InputsTest, StableAcrossDisjointProbeSets) {
  const World world = SmallWorld(15);
  FinalAdapters fin;
  run_experiment(SmallConfig(), world, 1, &fin);
  const std::vector<double> alpha(4, 0.25);
  const ProbeContext ctx = Context(world, fin.global, fin.personalized, alpha);
  Rng r1 = make_stream(1, Stream::kProbe, 0);
  Rng r2 = make_stream(1, Stream::kProbe, 1);
  const Theorem4Inputs a = estimate_theorem4_inputs(ctx, r1);
  const Theorem4Inputs b = estimate_theorem4_inputs(ctx, r2);
  EXPECT_NEAR(a.L, b.L, 0.2 * std::max(a.L, b.L));
  EXPECT_NEAR(a.sigma, b.sigma, 0.2 * std::max(a.sigma, b.sigma));
  EXPECT_EQ(a.G, b.G);
  EXPECT_EQ(a.M, b.M);
  EXPECT_GT(a.M, 0.0);
}

TEST(Theorem4InputsTest, InsufficientSamples) {
  const World world = SmallWorld(16);
  const std::vector<double> alpha(4, 0.25);
  const std::vector<LoraAdapter> pers(4, world.initial_adapter);
  ProbeContext ctx = Context(world, world.initial_adapter, pers, alpha);
  ctx.n_pairs = 1;
  Rng rng(3);
  EXPECT_THROW(estimate_theorem4_inputs(ctx, rng), ConfigError);
  ctx.n_pairs = 10;
  ctx.client_data = {};
  EXPECT_THROW(estimate_theorem4_inputs(ctx, rng), ConfigError);
}

// Full participation, full-batch global path, eta_g under the bound: the
// global training risk never goes up.
TEST(ConvergenceTest, FedItGlobalRiskNonIncreasing) {
  const World world = SmallWorld(17);
  FedConfig cfg = SmallConfig(Baseline::kFedIT);
  cfg.rounds = 20;
  const auto clients = initial_clients(world, cfg);
  std::vector<LoraAdapter> pers;
  for (const auto& c : clients) pers.push_back(c.personalized);
  const std::vector<double> alpha = client_weights(cfg, clients);
  Rng rng(4);
  const Theorem4Inputs in = estimate_theorem4_inputs(
      Context(world, world.initial_adapter, pers, alpha), rng);
  cfg.eta_g = 0.9 * theorem4_stepsizes(in.L, in.sigma, cfg.reg.lambda,
                                       cfg.local_steps, cfg.rounds)
                        .eta_g_max;
  const RunReport r = run_experiment(cfg, world);
  int violations = 0;
  for (std::size_t t = 1; t < r.rounds.size(); ++t) {
    violations += r.rounds[t].global_risk > r.rounds[t - 1].global_risk;
  }
  EXPECT_EQ(violations, 0);
  EXPECT_LT(r.rounds.back().global_risk, r.rounds.front().global_risk);
}

TEST(ReportTest, WorstCaseDominatesMean) {
  for (Baseline b : {Baseline::kFedOA, Baseline::kFedIT, Baseline::kLocalOnly,
                     Baseline::kProx, Baseline::kFinetune}) {
    const World world = SmallWorld(18);
    const RunReport r = run_experiment(SmallConfig(b), world);
    double global_mean = r.global.heldout.risk;
    for (const auto& e : r.global.intra_ood) global_mean += e.result.risk;
    global_mean /= static_cast<double>(r.global.intra_ood.size() + 1);
    EXPECT_GE(r.worst_case_ood_risk, global_mean);
    if (r.personalized) {
      EXPECT_GE(r.worst_case_ood_risk, r.personalized->mean_risk);
    }
  }
}

TEST(ReportTest, JsonDocument) {
  const World world = SmallWorld(19);
  const FedConfig cfg = SmallConfig();
  const RunReport r = run_experiment(cfg, world);
  EXPECT_EQ(r.feature_distance.size(), cfg.rounds);
  const nlohmann::json doc = to_json(r);
  EXPECT_EQ(doc["schema_version"], kReportSchemaVersion);
  EXPECT_EQ(doc["baseline"], "fedoa");
  EXPECT_FALSE(doc.contains("wall_clock_seconds"));
  EXPECT_EQ(doc["feature_distance"].size(), cfg.rounds);
  EXPECT_EQ(doc["config"]["rounds"], cfg.rounds);
  const double acc = doc["personalized"]["mean_accuracy"];
  EXPECT_GE(acc, 0.0);
  EXPECT_LE(acc, 1.0);
  for (const auto& e : r.personalized->intra_ood) {
    EXPECT_GE(e.result.accuracy, 0.0);
    EXPECT_LE(e.result.accuracy, 1.0);
  }
  // Rerun gives the same document.
  EXPECT_EQ(to_json(run_experiment(cfg, world)).dump(), doc.dump());
}

TEST(ReportTest, CsvExports) {
  const World world = SmallWorld(20);
  FedConfig cfg = SmallConfig(Baseline::kFedIT);
  cfg.rounds = 2;
  const RunReport r = run_experiment(cfg, world);
  std::ostringstream traces, traj;
  write_traces_csv(traces, r);
  write_trajectory_csv(traj, r);
  std::istringstream tin(traces.str());
  std::string line;
  std::getline(tin, line);
  EXPECT_EQ(line, "round,client_id,risk,grad_norm_sq,feat_dist");
  int rows = 0;
  while (std::getline(tin, line)) ++rows;
  EXPECT_EQ(rows, 2 * 4);
  EXPECT_EQ(traj.str().substr(0, traj.str().find('\n')),
            "round,feature_distance,global_risk,bytes");
  EXPECT_EQ(format_double(0.1), "0.10000000000000001");
  EXPECT_EQ(format_double(2.0), "2");
}

}  // namespace
}  // namespace fedoa
