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

#ifndef FEDOA_NN_CORE_H_
#define FEDOA_NN_CORE_H_

#include <cstddef>
#include <span>
#include <string_view>
#include <vector>

#include "fedoa/matrix.h"
#include "fedoa/regularizers.h"
#include "fedoa/rng.h"

namespace fedoa {

enum class Activation { kTanh, kRelu, kIdentity };

std::string_view to_string(Activation act);
// Accepts "tanh", "relu", "identity". Throws ConfigError otherwise.
Activation parse_activation(std::string_view name);

struct EncoderLayer {
  Matrix weight;  // d_out x d_in
  Vector bias;    // d_out
  Activation activation = Activation::kTanh;
  bool adapted = true;
};

// Pretrained backbone. Weights are fixed at construction and only exposed
// through const accessors.
class FrozenEncoder {
 public:
  // Throws ShapeError if layer dimensions do not chain or `layers` is empty.
  explicit FrozenEncoder(std::vector<EncoderLayer> layers);

  std::size_t input_dim() const { return layers_.front().weight.cols(); }
  std::size_t feature_dim() const { return layers_.back().weight.rows(); }
  const std::vector<EncoderLayer>& layers() const { return layers_; }
  // Encoder layer index of every adapted layer, in order.
  const std::vector<std::size_t>& adapted_layers() const { return adapted_; }

  friend bool operator==(const FrozenEncoder&, const FrozenEncoder&);

 private:
  std::vector<EncoderLayer> layers_;
  std::vector<std::size_t> adapted_;
};

bool operator==(const EncoderLayer& a, const EncoderLayer& b);

// Frozen linear read-out, logit = w . z.
class FixedHead {
 public:
  explicit FixedHead(Vector weights);

  std::size_t dim() const { return weights_.size(); }
  const Vector& weights() const { return weights_; }

  friend bool operator==(const FixedHead&, const FixedHead&) = default;

 private:
  Vector weights_;
};

// Low-rank factors of one adapted layer; delta W = scale * b * a.
struct FactorPair {
  Matrix a;  // r x d_in
  Matrix b;  // d_out x r

  friend bool operator==(const FactorPair&, const FactorPair&) = default;
};

struct LoraAdapter {
  std::vector<FactorPair> layers;  // one per adapted encoder layer
  double scale = 1.0;

  std::size_t rank() const {
    return layers.empty() ? 0 : layers.front().a.rows();
  }
  std::size_t parameter_count() const;
  // Materialized delta W of adapter slot `i`.
  Matrix delta(std::size_t i) const;

  friend bool operator==(const LoraAdapter&, const LoraAdapter&) = default;
};

// Gradient with respect to every factor of a LoraAdapter.
struct GradBundle {
  std::vector<FactorPair> layers;

  double squared_norm() const;
};

// A zeroed adapter or gradient shaped for `enc` at the given rank.
LoraAdapter zero_adapter(const FrozenEncoder& enc, std::size_t rank,
                         double scale = 1.0);
GradBundle zero_grads(const LoraAdapter& like);

// A ~ U(-1/sqrt(d_in), 1/sqrt(d_in)), B = 0, so the initial delta is zero.
// Throws ShapeError if rank exceeds min(d_in, d_out) of some adapted layer.
LoraAdapter init_adapter(const FrozenEncoder& enc, std::size_t rank,
                         double scale, Rng& rng);

// Gaussian weights scaled by 1/sqrt(fan_in), zero biases. `widths` lists the
// output width of every layer; all layers use `act` and are adapted.
FrozenEncoder random_encoder(std::size_t input_dim,
                             const std::vector<std::size_t>& widths,
                             Activation act, Rng& rng);
FixedHead random_head(std::size_t dim, Rng& rng);

// Throws ShapeError if `ad` does not fit `enc` (slot count, dims, rank).
void check_adapter_shape(const FrozenEncoder& enc, const LoraAdapter& ad);

// Encoder with an adapter's deltas folded into the weights. Cheaper than
// encode() when many inputs go through the same adapter. Holds references;
// `enc` must outlive it.
class MaterializedEncoder {
 public:
  MaterializedEncoder(const FrozenEncoder& enc, const LoraAdapter& ad);

  Vector encode(std::span<const double> x) const;
  const FrozenEncoder& encoder() const { return enc_; }
  const Matrix& weight(std::size_t layer) const { return weights_[layer]; }

 private:
  const FrozenEncoder& enc_;
  std::vector<Matrix> weights_;  // one per encoder layer
};

// Features z = Phi(x) with delta weights applied to adapted layers.
Vector encode(const FrozenEncoder& enc, const LoraAdapter& ad,
              std::span<const double> x);

double predict(const FixedHead& head, std::span<const double> z);

// log(1 + exp(-y * logit)) for y in {-1, +1}, stable for large |logit|.
double logistic_loss(double logit, int label);
// Derivative of logistic_loss with respect to the logit.
double logistic_loss_grad(double logit, int label);

struct LabeledInput {
  std::span<const double> x;
  int y = 1;
};
using Batch = std::vector<LabeledInput>;

struct LossAndGrad {
  double loss = 0.0;
  GradBundle grads;
};

// Mean over the batch of logistic loss plus reg.lambda * D(Phi(x), z_ref).
// `z_ref` holds one constant reference feature per sample and must be given
// exactly when reg.active().
LossAndGrad backward(const FrozenEncoder& enc, const LoraAdapter& ad,
                     const FixedHead& head, const Batch& batch,
                     const RegSpec& reg, std::span<const Vector> z_ref = {});

// Only the objective value of backward(), without gradients.
double objective(const FrozenEncoder& enc, const LoraAdapter& ad,
                 const FixedHead& head, const Batch& batch, const RegSpec& reg,
                 std::span<const Vector> z_ref = {});

enum class FdEntries { kAll, kAOnly, kBOnly };

// Worst relative error between backward() gradients and central differences
// over the selected adapter entries. The relative denominator is
// max(|analytic|, |numeric|, 1e-8).
double fd_check(const FrozenEncoder& enc, const LoraAdapter& ad,
                const FixedHead& head, const Batch& batch, const RegSpec& reg,
                std::span<const Vector> z_ref, double step,
                FdEntries entries = FdEntries::kAll);

// dst + coeff * src, factor by factor. coeff == 0 returns dst untouched.
LoraAdapter axpy_params(LoraAdapter dst, const GradBundle& src, double coeff);
LoraAdapter axpy_params(LoraAdapter dst, const LoraAdapter& src, double coeff);

// Squared Euclidean norm of all factors of a - b.
double parameter_distance_squared(const LoraAdapter& a, const LoraAdapter& b);

bool all_finite(const LoraAdapter& ad);
bool all_finite(const GradBundle& g);

}  // namespace fedoa

#endif  // FEDOA_NN_CORE_H_
