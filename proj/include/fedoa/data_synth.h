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

#ifndef FEDOA_DATA_SYNTH_H_
#define FEDOA_DATA_SYNTH_H_

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "fedoa/matrix.h"
#include "fedoa/nn_core.h"
#include "fedoa/rng.h"

namespace fedoa {

// One environment: label from an invariant block z, plus a spurious block s
// whose correlation with the label is set by beta.
struct EnvSpec {
  std::string env_id;
  double beta = 0.0;         // spurious strength in [-1, 1]
  std::size_t d_inv = 5;
  std::size_t d_spu = 5;
  double label_noise = 0.25;  // sigma_y
  std::size_t n_train = 1000;
  std::size_t n_test = 200;

  // Throws ConfigError on out-of-range fields.
  void validate() const;
  std::size_t input_dim() const { return d_inv + d_spu; }
};

// Label rule shared by every environment of one experiment: the unit vector
// w_inv with y = sign(w_inv . z + noise).
struct InvariantMechanism {
  Vector w_inv;

  static InvariantMechanism draw(std::size_t d_inv, Rng& rng);
  // +1 when w_inv . z + noise >= 0, else -1.
  int label(std::span<const double> z, double noise) const;
};

struct Dataset {
  std::vector<Vector> xs;
  std::vector<int> ys;
  std::string env_id;

  std::size_t size() const { return xs.size(); }
  bool empty() const { return xs.empty(); }
  std::size_t dim() const { return xs.empty() ? 0 : xs.front().size(); }
  Batch as_batch() const;
  Batch select(const std::vector<std::size_t>& indices) const;
};

// x = concat(z, s), z ~ N(0, I), y = sign(w_inv . z + N(0, sigma_y^2)),
// s = y * beta * 1 + N(0, I).
Dataset sample_env(const EnvSpec& spec, const InvariantMechanism& mech,
                   std::size_t n, Rng& rng);

struct EnvDims {
  std::size_t d_inv = 5;
  std::size_t d_spu = 5;
  double label_noise = 0.25;
};

struct EnvSizes {
  std::size_t n_train = 1000;
  std::size_t n_test = 200;
};

struct FederationLayout {
  std::vector<EnvSpec> train_envs;  // one per client
  EnvSpec heldout_env;              // inter-client OOD
  std::vector<EnvSpec> intra_ood;   // per client, beta flipped
};

// Client betas evenly spaced over [beta_lo, beta_hi]; the held-out env uses
// heldout_beta; intra-client OOD envs flip each client's beta.
FederationLayout make_layout(std::size_t n_clients, double beta_lo,
                             double beta_hi, double heldout_beta,
                             const EnvDims& dims, const EnvSizes& sizes);

// Monte-Carlo accuracy of sign(w_inv . z) against freshly sampled labels.
// Requires n_mc >= 1000.
double bayes_invariant_accuracy(const EnvSpec& spec,
                                const InvariantMechanism& mech,
                                std::size_t n_mc, Rng& rng);

// Header x_0..x_{d-1},y,env_id; values with 17 significant digits.
void write_csv(std::ostream& out, const Dataset& data);

}  // namespace fedoa

#endif  // FEDOA_DATA_SYNTH_H_
