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

#include "fedoa/fed_protocol.h"

#include <algorithm>
#include <cmath>
#include <future>
#include <numeric>
#include <string>
#include <utility>

#include "fedoa/errors.h"

namespace fedoa {
namespace {

// Sequential passes over a shuffled permutation of the local data. A fresh
// permutation is drawn at construction and whenever a pass is exhausted.
class BatchCursor {
 public:
  BatchCursor(std::size_t n, std::size_t batch_size, Rng& rng)
      : perm_(n), batch_size_(std::min(batch_size, n)), rng_(rng) {
    reshuffle();
  }

  std::vector<std::size_t> next() {
    if (pos_ + batch_size_ > perm_.size()) reshuffle();
    std::vector<std::size_t> out(perm_.begin() + pos_,
                                 perm_.begin() + pos_ + batch_size_);
    pos_ += batch_size_;
    return out;
  }

 private:
  void reshuffle() {
    std::iota(perm_.begin(), perm_.end(), std::size_t{0});
    fisher_yates(perm_);
    pos_ = 0;
  }

  void fisher_yates(std::vector<std::size_t>& v) {
    for (std::size_t i = v.size(); i > 1; --i) {
      std::uniform_int_distribution<std::size_t> pick(0, i - 1);
      std::swap(v[i - 1], v[pick(rng_)]);
    }
  }

  std::vector<std::size_t> perm_;
  std::size_t batch_size_;
  std::size_t pos_ = 0;
  Rng& rng_;
};

std::vector<Vector> encode_all(const MaterializedEncoder& m, const Batch& b) {
  std::vector<Vector> out;
  out.reserve(b.size());
  for (const auto& s : b) out.push_back(m.encode(s.x));
  return out;
}

double mean_distance(const MaterializedEncoder& p, const MaterializedEncoder& g,
                     const Dataset& data, DistanceKind kind) {
  double s = 0.0;
  for (const auto& x : data.xs) s += distance(p.encode(x), g.encode(x), kind);
  return s / static_cast<double>(data.size());
}

void check_step(const LossAndGrad& lg, std::size_t round, std::size_t client,
                std::size_t step) {
  if (!std::isfinite(lg.loss)) {
    throw DivergenceError(round, client, step, "non-finite loss");
  }
  if (!all_finite(lg.grads)) {
    throw DivergenceError(round, client, step, "non-finite gradient");
  }
}

// Runs `fn` on a value, converting numeric failures into DivergenceError.
template <typename Fn>
auto guarded(std::size_t round, std::size_t client, std::size_t step, Fn&& fn) {
  try {
    return fn();
  } catch (const DivergenceError&) {
    throw;
  } catch (const NumericError& e) {
    throw DivergenceError(round, client, step, e.what());
  }
}

// Gradient of lambda * ||phi_e - phi_g||^2 added onto `grads`.
void add_prox_gradient(GradBundle& grads, const LoraAdapter& phi_e,
                       const LoraAdapter& phi_g, double lambda) {
  for (std::size_t i = 0; i < grads.layers.size(); ++i) {
    add_scaled(grads.layers[i].a, phi_e.layers[i].a, 2.0 * lambda);
    add_scaled(grads.layers[i].a, phi_g.layers[i].a, -2.0 * lambda);
    add_scaled(grads.layers[i].b, phi_e.layers[i].b, 2.0 * lambda);
    add_scaled(grads.layers[i].b, phi_g.layers[i].b, -2.0 * lambda);
  }
}

}  // namespace

std::string_view to_string(Baseline b) {
  switch (b) {
    case Baseline::kFedOA:
      return "fedoa";
    case Baseline::kFedIT:
      return "fedit";
    case Baseline::kLocalOnly:
      return "local_only";
    case Baseline::kProx:
      return "prox";
    case Baseline::kFinetune:
      return "finetune";
  }
  return "unknown";
}

Baseline parse_baseline(std::string_view name) {
  if (name == "fedoa") return Baseline::kFedOA;
  if (name == "fedit") return Baseline::kFedIT;
  if (name == "local_only") return Baseline::kLocalOnly;
  if (name == "prox") return Baseline::kProx;
  if (name == "finetune") return Baseline::kFinetune;
  throw ConfigError("unknown baseline '" + std::string(name) + "'");
}

bool has_personalized_path(Baseline b) {
  return b == Baseline::kFedOA || b == Baseline::kLocalOnly ||
         b == Baseline::kProx;
}

bool has_global_path(Baseline b) { return b != Baseline::kLocalOnly; }

void FedConfig::validate() const {
  if (rounds < 1) throw ConfigError("rounds (T) must be >= 1");
  if (local_steps < 1 && local_epochs < 1) {
    throw ConfigError("local_steps (K) must be >= 1");
  }
  if (!(eta_l >= 0.0) || !std::isfinite(eta_l) || !(eta_g >= 0.0) ||
      !std::isfinite(eta_g)) {
    throw ConfigError("step sizes must be finite and non-negative");
  }
  reg.validate();
  if (!(sample_frac > 0.0 && sample_frac <= 1.0)) {
    throw ConfigError("sample_frac must lie in (0, 1]");
  }
  if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
  if (global_steps < 1) throw ConfigError("global_steps must be >= 1");
  for (double a : alpha) {
    if (!(a >= 0.0) || !std::isfinite(a)) {
      throw ConfigError("alpha weights must be finite and >= 0");
    }
  }
}

std::size_t FedConfig::steps_for(std::size_t n) const {
  if (local_epochs == 0) return local_steps;
  const std::size_t per_epoch = (n + batch_size - 1) / batch_size;
  return local_epochs * per_epoch;
}

ClientUpdate client_update(ClientState& client,
                           const LoraAdapter& global_snapshot,
                           const FedConfig& cfg, const Model& model,
                           std::size_t round) {
  if (!client.data || client.data->empty()) {
    throw ShapeError("client " + std::to_string(client.client_id) +
                     " has no data");
  }
  const Dataset& data = *client.data;
  const std::size_t id = client.client_id;
  const FrozenEncoder& enc = model.encoder;
  const Batch full = data.as_batch();
  const RegSpec no_reg{cfg.reg.kind, 0.0};

  ClientUpdate out;
  out.trace.client_id = id;

  if (has_personalized_path(cfg.baseline)) {
    LoraAdapter phi = client.personalized;
    guarded(round, id, 0, [&] {
      LossAndGrad start = backward(enc, phi, model.head, full, no_reg);
      check_step(start, round, id, 0);
      out.trace.risk = start.loss;
      out.trace.grad_norm_sq = start.grads.squared_norm();
      return 0;
    });

    const bool feature_reg =
        cfg.baseline == Baseline::kFedOA && cfg.reg.active();
    const bool prox_reg = cfg.baseline == Baseline::kProx && cfg.reg.active();
    std::optional<MaterializedEncoder> reference;
    if (feature_reg) reference.emplace(enc, global_snapshot);

    BatchCursor cursor(data.size(), cfg.batch_size, client.rng);
    const std::size_t steps = cfg.steps_for(data.size());
    out.step_losses.reserve(steps);
    for (std::size_t k = 1; k <= steps; ++k) {
      const Batch batch = data.select(cursor.next());
      LossAndGrad lg = guarded(round, id, k, [&] {
        if (feature_reg) {
          const std::vector<Vector> z_ref = encode_all(*reference, batch);
          return backward(enc, phi, model.head, batch, cfg.reg, z_ref);
        }
        return backward(enc, phi, model.head, batch, no_reg);
      });
      if (prox_reg) {
        lg.loss += cfg.reg.lambda *
                   parameter_distance_squared(phi, global_snapshot);
        add_prox_gradient(lg.grads, phi, global_snapshot, cfg.reg.lambda);
      }
      check_step(lg, round, id, k);
      phi = axpy_params(std::move(phi), lg.grads, -cfg.eta_l);
      if (!all_finite(phi)) {
        throw DivergenceError(round, id, k, "non-finite adapter");
      }
      out.step_losses.push_back(lg.loss);
    }
    out.trace.feat_dist = guarded(round, id, steps, [&] {
      return mean_distance(MaterializedEncoder(enc, phi),
                           MaterializedEncoder(enc, global_snapshot), data,
                           cfg.reg.kind);
    });
    out.personalized = std::move(phi);
  } else {
    out.personalized = client.personalized;
  }

  if (has_global_path(cfg.baseline)) {
    LoraAdapter phi_g = global_snapshot;
    std::optional<BatchCursor> cursor;
    if (!cfg.global_full_batch) {
      cursor.emplace(data.size(), cfg.batch_size, client.global_rng);
    }
    for (std::size_t k = 1; k <= cfg.global_steps; ++k) {
      const Batch batch = cursor ? data.select(cursor->next()) : full;
      LossAndGrad lg = guarded(round, id, k, [&] {
        return backward(enc, phi_g, model.head, batch, no_reg);
      });
      check_step(lg, round, id, k);
      if (!has_personalized_path(cfg.baseline) && k == 1) {
        out.trace.risk = lg.loss;
        out.trace.grad_norm_sq = lg.grads.squared_norm();
      }
      phi_g = axpy_params(std::move(phi_g), lg.grads, -cfg.eta_g);
      if (!all_finite(phi_g)) {
        throw DivergenceError(round, id, k, "non-finite global adapter");
      }
    }
    out.global = std::move(phi_g);
  }
  return out;
}

LoraAdapter aggregate(std::span<const WeightedAdapter> updates) {
  if (updates.empty()) throw ShapeError("aggregate: no updates");
  double total = 0.0;
  for (const auto& u : updates) {
    if (u.adapter == nullptr) throw ShapeError("aggregate: null adapter");
    if (!(u.weight >= 0.0) || !std::isfinite(u.weight)) {
      throw ConfigError("aggregate: weights must be finite and >= 0");
    }
    total += u.weight;
  }
  if (!(total > 0.0)) throw ConfigError("aggregate: weights sum to zero");

  // phi_0 + sum_i w_i (phi_i - phi_0) equals sum_i w_i phi_i when the weights
  // sum to one, and returns phi_0 exactly when all inputs agree.
  const LoraAdapter& anchor = *updates.front().adapter;
  LoraAdapter out = anchor;
  for (std::size_t i = 1; i < updates.size(); ++i) {
    const LoraAdapter& u = *updates[i].adapter;
    if (u.layers.size() != anchor.layers.size() || u.scale != anchor.scale) {
      throw ShapeError("aggregate: adapters differ in structure");
    }
    const double w = updates[i].weight / total;
    for (std::size_t l = 0; l < out.layers.size(); ++l) {
      const FactorPair& src = u.layers[l];
      const FactorPair& base = anchor.layers[l];
      FactorPair& dst = out.layers[l];
      if (!src.a.same_shape(base.a) || !src.b.same_shape(base.b)) {
        throw ShapeError("aggregate: factor shapes differ in slot " +
                         std::to_string(l));
      }
      auto accumulate = [w](Matrix& d, const Matrix& s, const Matrix& b) {
        auto dd = d.data();
        auto sd = s.data();
        auto bd = b.data();
        for (std::size_t j = 0; j < dd.size(); ++j) dd[j] += w * (sd[j] - bd[j]);
      };
      accumulate(dst.a, src.a, base.a);
      accumulate(dst.b, src.b, base.b);
    }
  }
  return out;
}

std::vector<std::size_t> sample_clients(std::span<const std::size_t> ids,
                                        double sample_frac, Rng& rng) {
  if (ids.empty()) throw ConfigError("sample_clients: no clients");
  if (!(sample_frac > 0.0 && sample_frac <= 1.0)) {
    throw ConfigError("sample_frac must lie in (0, 1]");
  }
  std::vector<std::size_t> pool(ids.begin(), ids.end());
  std::sort(pool.begin(), pool.end());
  const double raw = sample_frac * static_cast<double>(pool.size());
  std::size_t m = static_cast<std::size_t>(std::ceil(raw - 1e-9));
  m = std::clamp<std::size_t>(m, 1, pool.size());
  for (std::size_t i = 0; i < m; ++i) {
    std::uniform_int_distribution<std::size_t> pick(i, pool.size() - 1);
    std::swap(pool[i], pool[pick(rng)]);
  }
  pool.resize(m);
  std::sort(pool.begin(), pool.end());
  return pool;
}

std::vector<double> client_weights(const FedConfig& cfg,
                                   const std::vector<ClientState>& clients) {
  std::vector<double> w(clients.size(), 0.0);
  for (const auto& c : clients) {
    if (c.client_id >= clients.size()) {
      throw ConfigError("client ids must be 0..n-1");
    }
    if (!cfg.alpha.empty()) {
      if (cfg.alpha.size() != clients.size()) {
        throw ConfigError("alpha must list one weight per client");
      }
      w[c.client_id] = cfg.alpha[c.client_id];
    } else {
      w[c.client_id] = static_cast<double>(c.data ? c.data->size() : 0);
    }
  }
  return w;
}

RoundTrace run_round(ServerState& server, std::vector<ClientState>& clients,
                     const FedConfig& cfg, const Model& model,
                     std::size_t threads) {
  cfg.validate();
  const std::vector<double> weights = client_weights(cfg, clients);
  std::vector<std::size_t> slot(clients.size());
  std::vector<std::size_t> ids;
  for (std::size_t i = 0; i < clients.size(); ++i) {
    slot[clients[i].client_id] = i;
    ids.push_back(clients[i].client_id);
  }
  const std::vector<std::size_t> selected =
      sample_clients(ids, cfg.sample_frac, server.rng);

  const LoraAdapter snapshot = server.global;
  const std::size_t round = server.round;
  std::vector<ClientUpdate> updates(selected.size());
  auto work = [&](std::size_t j) {
    updates[j] =
        client_update(clients[slot[selected[j]]], snapshot, cfg, model, round);
  };
  if (threads <= 1 || selected.size() <= 1) {
    for (std::size_t j = 0; j < selected.size(); ++j) work(j);
  } else {
    std::vector<std::future<void>> pending;
    std::size_t next = 0;
    auto worker = [&, stride = threads](std::size_t first) {
      for (std::size_t j = first; j < selected.size(); j += stride) work(j);
    };
    for (std::size_t t = 0; t < threads && next < selected.size(); ++t, ++next) {
      pending.push_back(std::async(std::launch::async, worker, t));
    }
    for (auto& f : pending) f.get();
  }

  RoundTrace trace;
  trace.round = round;
  for (std::size_t j = 0; j < selected.size(); ++j) {
    ClientState& c = clients[slot[selected[j]]];
    c.personalized = std::move(updates[j].personalized);
    trace.clients.push_back(updates[j].trace);
  }

  if (has_global_path(cfg.baseline)) {
    std::vector<WeightedAdapter> parts;
    for (std::size_t j = 0; j < selected.size(); ++j) {
      parts.push_back({&*updates[j].global, weights[selected[j]]});
    }
    server.global = aggregate(parts);
    trace.bytes = round_bytes(selected.size(), snapshot.parameter_count());
  }
  server.round += 1;

  // alpha-weighted full-batch risk of the current global adapter
  const MaterializedEncoder g(model.encoder, server.global);
  double wsum = 0.0;
  double risk = 0.0;
  for (const auto& c : clients) {
    double r = 0.0;
    for (std::size_t i = 0; i < c.data->size(); ++i) {
      r += logistic_loss(predict(model.head, g.encode(c.data->xs[i])),
                         c.data->ys[i]);
    }
    risk += weights[c.client_id] * r / static_cast<double>(c.data->size());
    wsum += weights[c.client_id];
  }
  trace.global_risk = wsum > 0.0 ? risk / wsum : 0.0;
  return trace;
}

StepSizeBounds theorem4_stepsizes(double L, double sigma, double lambda,
                                  std::size_t K, std::size_t T) {
  if (!(L > 0.0) || !(sigma > 0.0) || !(lambda > 0.0) || K == 0 || T == 0) {
    throw ConfigError("theorem4_stepsizes: all inputs must be positive");
  }
  const double t = static_cast<double>(T);
  const double k = static_cast<double>(K);
  StepSizeBounds b;
  b.eta_l_max = 1.0 / (8.0 * std::sqrt(3.0 * (1.0 + 3.0 * t) * t *
                                       (1.0 + 2.0 * k) * k) *
                       lambda * sigma * L);
  b.eta_g_max = 1.0 / (2.0 * std::sqrt(6.0 * (1.0 + 3.0 * t) * t) * L);
  return b;
}

std::uint64_t round_bytes(std::size_t sampled_clients,
                          std::size_t adapter_params) {
  return static_cast<std::uint64_t>(sampled_clients) * 2u *
         static_cast<std::uint64_t>(adapter_params) * 8u;
}

namespace {

nlohmann::json matrix_rows(const Matrix& m) {
  nlohmann::json rows = nlohmann::json::array();
  for (std::size_t r = 0; r < m.rows(); ++r) {
    const auto row = m.row(r);
    rows.push_back(std::vector<double>(row.begin(), row.end()));
  }
  return rows;
}

Matrix matrix_from_rows(const nlohmann::json& rows, std::size_t n_rows,
                        std::size_t n_cols) {
  if (!rows.is_array() || rows.size() != n_rows) {
    throw ShapeError("checkpoint matrix has wrong row count");
  }
  std::vector<double> data;
  data.reserve(n_rows * n_cols);
  for (const auto& row : rows) {
    if (!row.is_array() || row.size() != n_cols) {
      throw ShapeError("checkpoint matrix has wrong column count");
    }
    for (const auto& v : row) data.push_back(v.get<double>());
  }
  return Matrix(n_rows, n_cols, std::move(data));
}

}  // namespace

nlohmann::json adapter_to_json(const LoraAdapter& ad, const FrozenEncoder& enc) {
  check_adapter_shape(enc, ad);
  nlohmann::json doc = nlohmann::json::array();
  for (std::size_t i = 0; i < ad.layers.size(); ++i) {
    doc.push_back({{"layer_index", enc.adapted_layers()[i]},
                   {"rank", ad.rank()},
                   {"scale", ad.scale},
                   {"A", matrix_rows(ad.layers[i].a)},
                   {"B", matrix_rows(ad.layers[i].b)}});
  }
  return doc;
}

LoraAdapter adapter_from_json(const nlohmann::json& doc,
                              const FrozenEncoder& enc) {
  const auto& slots = enc.adapted_layers();
  if (!doc.is_array() || doc.size() != slots.size()) {
    throw ShapeError("checkpoint must list one entry per adapted layer");
  }
  LoraAdapter ad;
  try {
    for (std::size_t i = 0; i < slots.size(); ++i) {
      const auto& entry = doc[i];
      if (entry.at("layer_index").get<std::size_t>() != slots[i]) {
        throw ShapeError("checkpoint layer_index does not match encoder");
      }
      const auto rank = entry.at("rank").get<std::size_t>();
      ad.scale = entry.at("scale").get<double>();
      const Matrix& w = enc.layers()[slots[i]].weight;
      ad.layers.push_back({matrix_from_rows(entry.at("A"), rank, w.cols()),
                           matrix_from_rows(entry.at("B"), w.rows(), rank)});
    }
  } catch (const nlohmann::json::exception& e) {
    throw ShapeError(std::string("malformed checkpoint: ") + e.what());
  }
  check_adapter_shape(enc, ad);
  return ad;
}

}  // namespace fedoa
