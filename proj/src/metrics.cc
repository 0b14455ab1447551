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
#include <cstdio>
#include <limits>
#include <numeric>
#include <ostream>
#include <random>

#include "fedoa/errors.h"

namespace fedoa {
namespace {

using nlohmann::json;

// Adapter with every entry replaced by `radius / sqrt(P)` times a standard
// normal draw, P the parameter count.
LoraAdapter gaussian_direction(const LoraAdapter& like, double radius,
                               Rng& rng) {
  std::normal_distribution<double> normal(0.0, 1.0);
  LoraAdapter d = like;
  const double s =
      radius / std::sqrt(static_cast<double>(like.parameter_count()));
  for (auto& p : d.layers) {
    for (double& v : p.a.data()) v = s * normal(rng);
    for (double& v : p.b.data()) v = s * normal(rng);
  }
  return d;
}

double grad_distance(const GradBundle& a, const GradBundle& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.layers.size(); ++i) {
    const auto pa = a.layers[i].a.data(), qa = b.layers[i].a.data();
    for (std::size_t j = 0; j < pa.size(); ++j) s += (pa[j] - qa[j]) * (pa[j] - qa[j]);
    const auto pb = a.layers[i].b.data(), qb = b.layers[i].b.data();
    for (std::size_t j = 0; j < pb.size(); ++j) s += (pb[j] - qb[j]) * (pb[j] - qb[j]);
  }
  return std::sqrt(s);
}

json to_json(const RiskAccuracy& r) {
  return {{"risk", r.risk}, {"accuracy", r.accuracy}};
}

json to_json(const std::vector<ClientEval>& evals) {
  json arr = json::array();
  for (const auto& e : evals) {
    arr.push_back({{"client_id", e.client_id},
                   {"env_id", e.env_id},
                   {"risk", e.result.risk},
                   {"accuracy", e.result.accuracy}});
  }
  return arr;
}

}  // namespace

RiskAccuracy empirical_risk(const Model& model, const LoraAdapter& adapter,
                            const Dataset& data) {
  if (data.empty()) throw ShapeError("empirical_risk: empty dataset");
  const MaterializedEncoder m(model.encoder, adapter);
  double loss = 0.0;
  std::size_t hits = 0;
  for (std::size_t i = 0; i < data.size(); ++i) {
    const double logit = predict(model.head, m.encode(data.xs[i]));
    loss += logistic_loss(logit, data.ys[i]);
    if ((logit >= 0.0 ? 1 : -1) == data.ys[i]) ++hits;
  }
  const double n = static_cast<double>(data.size());
  return {loss / n, static_cast<double>(hits) / n};
}

double worst_case_ood(const Model& model, std::span<const OodProbe> probes) {
  if (probes.empty()) throw ShapeError("worst_case_ood: no environments");
  double worst = -std::numeric_limits<double>::infinity();
  for (const auto& p : probes) {
    worst = std::max(worst, empirical_risk(model, *p.adapter, *p.env).risk);
  }
  return worst;
}

double mean_feature_distance(const FrozenEncoder& enc,
                             const LoraAdapter& phi_e,
                             const LoraAdapter& phi_g, const Dataset& data,
                             DistanceKind kind) {
  if (data.empty()) throw ShapeError("mean_feature_distance: empty dataset");
  const MaterializedEncoder pe(enc, phi_e);
  const MaterializedEncoder pg(enc, phi_g);
  double s = 0.0;
  for (const auto& x : data.xs) s += distance(pe.encode(x), pg.encode(x), kind);
  return s / static_cast<double>(data.size());
}

Theorem4Inputs estimate_theorem4_inputs(const ProbeContext& ctx, Rng& rng) {
  if (ctx.model == nullptr || ctx.global == nullptr) {
    throw ConfigError("estimate_theorem4_inputs: model and global required");
  }
  if (ctx.client_data.empty() || ctx.n_pairs < 2) {
    throw ConfigError("estimate_theorem4_inputs: insufficient samples (need "
                      "clients and at least two probe pairs)");
  }
  if (!ctx.alpha.empty() && ctx.alpha.size() != ctx.client_data.size()) {
    throw ShapeError("estimate_theorem4_inputs: one alpha per client");
  }
  const Model& model = *ctx.model;
  const RegSpec none{};
  std::uniform_int_distribution<std::size_t> pick_client(
      0, ctx.client_data.size() - 1);

  Theorem4Inputs out;
  for (std::size_t p = 0; p < ctx.n_pairs; ++p) {
    const Dataset& data = ctx.client_data[pick_client(rng)];
    const LoraAdapter u = axpy_params(
        *ctx.global, gaussian_direction(*ctx.global, ctx.radius, rng), 1.0);
    const LoraAdapter v = axpy_params(
        *ctx.global, gaussian_direction(*ctx.global, ctx.radius, rng), 1.0);
    const Batch full = data.as_batch();
    const GradBundle gu = backward(model.encoder, u, model.head, full, none).grads;
    const GradBundle gv = backward(model.encoder, v, model.head, full, none).grads;
    const double dphi = std::sqrt(parameter_distance_squared(u, v));
    if (dphi > 0.0) out.L = std::max(out.L, grad_distance(gu, gv) / dphi);

    std::vector<std::size_t> idx(data.size());
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    std::shuffle(idx.begin(), idx.end(), rng);
    idx.resize(std::min(ctx.batch_size, idx.size()));
    const GradBundle gb =
        backward(model.encoder, u, model.head, data.select(idx), none).grads;
    out.sigma = std::max(out.sigma, std::sqrt(gb.squared_norm()));
  }

  // Diversity at the global adapter: || grad R_e - sum_e alpha_e grad R_e ||.
  std::vector<GradBundle> local;
  std::vector<double> w;
  double wsum = 0.0;
  for (std::size_t c = 0; c < ctx.client_data.size(); ++c) {
    local.push_back(backward(model.encoder, *ctx.global, model.head,
                             ctx.client_data[c].as_batch(), none)
                        .grads);
    w.push_back(ctx.alpha.empty()
                    ? static_cast<double>(ctx.client_data[c].size())
                    : ctx.alpha[c]);
    wsum += w.back();
  }
  GradBundle mean = zero_grads(*ctx.global);
  for (std::size_t c = 0; c < local.size(); ++c) {
    for (std::size_t l = 0; l < mean.layers.size(); ++l) {
      add_scaled(mean.layers[l].a, local[c].layers[l].a, w[c] / wsum);
      add_scaled(mean.layers[l].b, local[c].layers[l].b, w[c] / wsum);
    }
  }
  for (const auto& g : local) out.G = std::max(out.G, grad_distance(g, mean));

  for (const auto& phi_e : ctx.personalized) {
    out.M = std::max(out.M,
                     std::sqrt(parameter_distance_squared(phi_e, *ctx.global)));
  }
  return out;
}

std::string format_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

json to_json(const RunReport& report) {
  json rounds = json::array();
  for (const auto& r : report.rounds) {
    json clients = json::array();
    for (const auto& c : r.clients) {
      json entry = {{"client_id", c.client_id},
                    {"risk", c.risk},
                    {"grad_norm_sq", c.grad_norm_sq}};
      entry["feat_dist"] = c.feat_dist ? json(*c.feat_dist) : json(nullptr);
      clients.push_back(std::move(entry));
    }
    rounds.push_back({{"round", r.round},
                      {"clients", std::move(clients)},
                      {"global_risk", r.global_risk},
                      {"bytes", r.bytes}});
  }
  json doc;
  doc["schema_version"] = kReportSchemaVersion;
  doc["config"] = report.config;
  doc["seed"] = report.seed;
  doc["baseline"] = std::string(to_string(report.baseline));
  doc["rounds"] = std::move(rounds);
  if (report.personalized) {
    doc["personalized"] = {
        {"intra_ood", to_json(report.personalized->intra_ood)},
        {"mean_accuracy", report.personalized->mean_accuracy},
        {"mean_risk", report.personalized->mean_risk}};
    doc["feature_distance"] = report.feature_distance;
  } else {
    doc["personalized"] = nullptr;
    doc["feature_distance"] = nullptr;
  }
  doc["global"] = {{"heldout", to_json(report.global.heldout)},
                   {"intra_ood", to_json(report.global.intra_ood)}};
  doc["worst_case_ood_risk"] = report.worst_case_ood_risk;
  doc["bytes_communicated"] = report.bytes_communicated;
  return doc;
}

void write_traces_csv(std::ostream& out, const RunReport& report) {
  out << "round,client_id,risk,grad_norm_sq,feat_dist\n";
  for (const auto& r : report.rounds) {
    for (const auto& c : r.clients) {
      out << r.round << ',' << c.client_id << ',' << format_double(c.risk)
          << ',' << format_double(c.grad_norm_sq) << ','
          << (c.feat_dist ? format_double(*c.feat_dist) : std::string())
          << '\n';
    }
  }
}

void write_trajectory_csv(std::ostream& out, const RunReport& report) {
  out << "round,feature_distance,global_risk,bytes\n";
  for (std::size_t i = 0; i < report.rounds.size(); ++i) {
    const auto& r = report.rounds[i];
    out << r.round << ','
        << (i < report.feature_distance.size()
                ? format_double(report.feature_distance[i])
                : std::string())
        << ',' << format_double(r.global_risk) << ',' << r.bytes << '\n';
  }
}

}  // namespace fedoa
