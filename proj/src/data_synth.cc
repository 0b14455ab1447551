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

#include "fedoa/data_synth.h"

#include <cmath>
#include <cstdio>
#include <ostream>
#include <random>
#include <set>

#include "fedoa/errors.h"

namespace fedoa {

void EnvSpec::validate() const {
  if (d_inv < 1) throw ConfigError("env " + env_id + ": d_inv must be >= 1");
  if (n_train < 1 || n_test < 1) {
    throw ConfigError("env " + env_id + ": n_train and n_test must be >= 1");
  }
  if (!(beta >= -1.0 && beta <= 1.0)) {
    throw ConfigError("env " + env_id + ": beta must lie in [-1, 1]");
  }
  if (!(label_noise >= 0.0) || !std::isfinite(label_noise)) {
    throw ConfigError("env " + env_id + ": label_noise must be >= 0");
  }
}

InvariantMechanism InvariantMechanism::draw(std::size_t d_inv, Rng& rng) {
  if (d_inv < 1) throw ConfigError("d_inv must be >= 1");
  std::normal_distribution<double> normal(0.0, 1.0);
  Vector w(d_inv);
  double norm = 0.0;
  while (norm == 0.0) {
    for (double& v : w) v = normal(rng);
    norm = std::sqrt(squared_norm(w));
  }
  for (double& v : w) v /= norm;
  return {std::move(w)};
}

int InvariantMechanism::label(std::span<const double> z, double noise) const {
  return dot(w_inv, z) + noise >= 0.0 ? 1 : -1;
}

Batch Dataset::as_batch() const {
  Batch b;
  b.reserve(xs.size());
  for (std::size_t i = 0; i < xs.size(); ++i) b.push_back({xs[i], ys[i]});
  return b;
}

Batch Dataset::select(const std::vector<std::size_t>& indices) const {
  Batch b;
  b.reserve(indices.size());
  for (std::size_t i : indices) b.push_back({xs.at(i), ys.at(i)});
  return b;
}

Dataset sample_env(const EnvSpec& spec, const InvariantMechanism& mech,
                   std::size_t n, Rng& rng) {
  spec.validate();
  if (n < 1) throw ConfigError("sample_env: n must be >= 1");
  if (mech.w_inv.size() != spec.d_inv) {
    throw ShapeError("sample_env: mechanism dimension differs from d_inv");
  }
  std::normal_distribution<double> normal(0.0, 1.0);
  Dataset data;
  data.env_id = spec.env_id;
  data.xs.reserve(n);
  data.ys.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    Vector x(spec.input_dim());
    for (std::size_t k = 0; k < spec.d_inv; ++k) x[k] = normal(rng);
    const double eps = spec.label_noise * normal(rng);
    const int y = mech.label(std::span<const double>(x).first(spec.d_inv), eps);
    for (std::size_t k = 0; k < spec.d_spu; ++k) {
      x[spec.d_inv + k] = y * spec.beta + normal(rng);
    }
    data.xs.push_back(std::move(x));
    data.ys.push_back(y);
  }
  return data;
}

FederationLayout make_layout(std::size_t n_clients, double beta_lo,
                             double beta_hi, double heldout_beta,
                             const EnvDims& dims, const EnvSizes& sizes) {
  if (n_clients < 2) throw ConfigError("make_layout: need at least 2 clients");
  if (!(beta_lo <= beta_hi)) {
    throw ConfigError("make_layout: beta range must satisfy lo <= hi");
  }
  auto env = [&](std::string id, double beta) {
    EnvSpec e;
    e.env_id = std::move(id);
    e.beta = beta;
    e.d_inv = dims.d_inv;
    e.d_spu = dims.d_spu;
    e.label_noise = dims.label_noise;
    e.n_train = sizes.n_train;
    e.n_test = sizes.n_test;
    e.validate();
    return e;
  };
  FederationLayout layout;
  const double span = beta_hi - beta_lo;
  for (std::size_t c = 0; c < n_clients; ++c) {
    const double t = static_cast<double>(c) / static_cast<double>(n_clients - 1);
    const double beta = c + 1 == n_clients ? beta_hi : beta_lo + t * span;
    layout.train_envs.push_back(env("client_" + std::to_string(c), beta));
    layout.intra_ood.push_back(
        env("client_" + std::to_string(c) + "_ood", -beta));
  }
  layout.heldout_env = env("heldout", heldout_beta);
  return layout;
}

double bayes_invariant_accuracy(const EnvSpec& spec,
                                const InvariantMechanism& mech,
                                std::size_t n_mc, Rng& rng) {
  if (n_mc < 1000) throw ConfigError("bayes_invariant_accuracy: n_mc >= 1000");
  spec.validate();
  if (mech.w_inv.size() != spec.d_inv) {
    throw ShapeError("bayes_invariant_accuracy: mechanism dimension mismatch");
  }
  std::normal_distribution<double> normal(0.0, 1.0);
  std::size_t hits = 0;
  Vector z(spec.d_inv);
  for (std::size_t i = 0; i < n_mc; ++i) {
    for (double& v : z) v = normal(rng);
    const int y = mech.label(z, spec.label_noise * normal(rng));
    if (mech.label(z, 0.0) == y) ++hits;
  }
  return static_cast<double>(hits) / static_cast<double>(n_mc);
}

void write_csv(std::ostream& out, const Dataset& data) {
  const std::size_t d = data.dim();
  for (std::size_t k = 0; k < d; ++k) out << "x_" << k << ',';
  out << "y,env_id\n";
  char buf[32];
  for (std::size_t i = 0; i < data.size(); ++i) {
    for (double v : data.xs[i]) {
      std::snprintf(buf, sizeof buf, "%.17g", v);
      out << buf << ',';
    }
    out << data.ys[i] << ',' << data.env_id << '\n';
  }
}

}  // namespace fedoa
