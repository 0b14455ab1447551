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

#include "fedoa/nn_core.h"

#include <algorithm>
#include <cmath>
#include <random>
#include <string>
#include <utility>

#include "fedoa/errors.h"

namespace fedoa {
namespace {

double activate(Activation act, double v) {
  switch (act) {
    case Activation::kTanh:
      return std::tanh(v);
    case Activation::kRelu:
      return v > 0.0 ? v : 0.0;
    case Activation::kIdentity:
      return v;
  }
  return v;
}

// Derivative expressed through the pre-activation and the output.
double activate_grad(Activation act, double pre, double out) {
  switch (act) {
    case Activation::kTanh:
      return 1.0 - out * out;
    case Activation::kRelu:
      return pre > 0.0 ? 1.0 : 0.0;
    case Activation::kIdentity:
      return 1.0;
  }
  return 1.0;
}

void check_finite_vector(const Vector& v, const char* what) {
  for (double x : v) {
    if (!std::isfinite(x)) throw NumericError(std::string(what) + " is not finite");
  }
}

// Per-sample forward cache: inputs[l] feeds layer l, pre[l] and out[l] are
// its pre-activation and activation.
struct ForwardCache {
  std::vector<Vector> inputs;
  std::vector<Vector> pre;
  Vector features;
};

ForwardCache forward_cached(const MaterializedEncoder& m,
                            std::span<const double> x) {
  const auto& layers = m.encoder().layers();
  ForwardCache cache;
  cache.inputs.reserve(layers.size());
  cache.pre.reserve(layers.size());
  Vector u(x.begin(), x.end());
  for (std::size_t l = 0; l < layers.size(); ++l) {
    Vector pre = matvec(m.weight(l), u);
    for (std::size_t i = 0; i < pre.size(); ++i) pre[i] += layers[l].bias[i];
    Vector out(pre.size());
    for (std::size_t i = 0; i < pre.size(); ++i) {
      out[i] = activate(layers[l].activation, pre[i]);
    }
    cache.inputs.push_back(std::move(u));
    cache.pre.push_back(std::move(pre));
    u = std::move(out);
  }
  cache.features = std::move(u);
  return cache;
}

void check_batch(const FrozenEncoder& enc, const FixedHead& head,
                 const Batch& batch, const RegSpec& reg,
                 std::span<const Vector> z_ref) {
  if (batch.empty()) throw ShapeError("backward: empty batch");
  if (head.dim() != enc.feature_dim()) {
    throw ShapeError("head dimension does not match encoder features");
  }
  for (const auto& s : batch) {
    if (s.x.size() != enc.input_dim()) {
      throw ShapeError("input length " + std::to_string(s.x.size()) +
                       " does not match encoder input " +
                       std::to_string(enc.input_dim()));
    }
    if (s.y != 1 && s.y != -1) throw ShapeError("labels must be -1 or +1");
  }
  reg.validate();
  if (reg.active()) {
    if (z_ref.size() != batch.size()) {
      throw ShapeError("reference features required for every sample when "
                       "lambda > 0");
    }
    for (const auto& z : z_ref) {
      if (z.size() != enc.feature_dim()) {
        throw ShapeError("reference feature length mismatch");
      }
    }
  } else if (!z_ref.empty()) {
    throw ShapeError("reference features given but lambda == 0");
  }
}

void check_same_layout(const std::vector<FactorPair>& a,
                       const std::vector<FactorPair>& b) {
  if (a.size() != b.size()) throw ShapeError("adapter slot counts differ");
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (!a[i].a.same_shape(b[i].a) || !a[i].b.same_shape(b[i].b)) {
      throw ShapeError("adapter factor shapes differ in slot " +
                       std::to_string(i));
    }
  }
}

}  // namespace

std::string_view to_string(Activation act) {
  switch (act) {
    case Activation::kTanh:
      return "tanh";
    case Activation::kRelu:
      return "relu";
    case Activation::kIdentity:
      return "identity";
  }
  return "unknown";
}

Activation parse_activation(std::string_view name) {
  if (name == "tanh") return Activation::kTanh;
  if (name == "relu") return Activation::kRelu;
  if (name == "identity") return Activation::kIdentity;
  throw ConfigError("unknown activation '" + std::string(name) + "'");
}

FrozenEncoder::FrozenEncoder(std::vector<EncoderLayer> layers)
    : layers_(std::move(layers)) {
  if (layers_.empty()) throw ShapeError("encoder needs at least one layer");
  for (std::size_t l = 0; l < layers_.size(); ++l) {
    const auto& layer = layers_[l];
    if (layer.weight.rows() == 0 || layer.weight.cols() == 0) {
      throw ShapeError("encoder layer " + std::to_string(l) + " is empty");
    }
    if (layer.bias.size() != layer.weight.rows()) {
      throw ShapeError("encoder layer " + std::to_string(l) +
                       " bias length mismatch");
    }
    if (l > 0 && layer.weight.cols() != layers_[l - 1].weight.rows()) {
      throw ShapeError("encoder layer " + std::to_string(l) +
                       " input does not chain with previous output");
    }
    if (!layer.weight.all_finite()) {
      throw NumericError("encoder weights must be finite");
    }
    if (layer.adapted) adapted_.push_back(l);
  }
}

bool operator==(const EncoderLayer& a, const EncoderLayer& b) {
  return a.weight == b.weight && a.bias == b.bias &&
         a.activation == b.activation && a.adapted == b.adapted;
}

bool operator==(const FrozenEncoder& a, const FrozenEncoder& b) {
  return a.layers_ == b.layers_;
}

FixedHead::FixedHead(Vector weights) : weights_(std::move(weights)) {
  if (weights_.empty()) throw ShapeError("head must have at least one weight");
}

std::size_t LoraAdapter::parameter_count() const {
  std::size_t n = 0;
  for (const auto& p : layers) n += p.a.size() + p.b.size();
  return n;
}

Matrix LoraAdapter::delta(std::size_t i) const {
  Matrix d = matmul(layers.at(i).b, layers.at(i).a);
  if (scale != 1.0) {
    for (double& v : d.data()) v *= scale;
  }
  return d;
}

double GradBundle::squared_norm() const {
  double s = 0.0;
  for (const auto& p : layers) {
    s += frobenius_squared(p.a) + frobenius_squared(p.b);
  }
  return s;
}

LoraAdapter zero_adapter(const FrozenEncoder& enc, std::size_t rank,
                         double scale) {
  LoraAdapter ad;
  ad.scale = scale;
  for (std::size_t l : enc.adapted_layers()) {
    const Matrix& w = enc.layers()[l].weight;
    ad.layers.push_back({Matrix(rank, w.cols()), Matrix(w.rows(), rank)});
  }
  return ad;
}

GradBundle zero_grads(const LoraAdapter& like) {
  GradBundle g;
  for (const auto& p : like.layers) {
    g.layers.push_back({Matrix(p.a.rows(), p.a.cols()),
                        Matrix(p.b.rows(), p.b.cols())});
  }
  return g;
}

LoraAdapter init_adapter(const FrozenEncoder& enc, std::size_t rank,
                         double scale, Rng& rng) {
  LoraAdapter ad = zero_adapter(enc, rank, scale);
  check_adapter_shape(enc, ad);
  for (auto& p : ad.layers) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(p.a.cols()));
    std::uniform_real_distribution<double> dist(-bound, bound);
    for (double& v : p.a.data()) v = dist(rng);
  }
  return ad;
}

FrozenEncoder random_encoder(std::size_t input_dim,
                             const std::vector<std::size_t>& widths,
                             Activation act, Rng& rng) {
  std::vector<EncoderLayer> layers;
  std::normal_distribution<double> normal(0.0, 1.0);
  std::size_t fan_in = input_dim;
  for (std::size_t width : widths) {
    EncoderLayer layer;
    layer.weight = Matrix(width, fan_in);
    const double s = 1.0 / std::sqrt(static_cast<double>(fan_in));
    for (double& v : layer.weight.data()) v = s * normal(rng);
    layer.bias.assign(width, 0.0);
    layer.activation = act;
    layer.adapted = true;
    layers.push_back(std::move(layer));
    fan_in = width;
  }
  return FrozenEncoder(std::move(layers));
}

FixedHead random_head(std::size_t dim, Rng& rng) {
  std::normal_distribution<double> normal(0.0, 1.0);
  Vector w(dim);
  const double s = 1.0 / std::sqrt(static_cast<double>(dim));
  for (double& v : w) v = s * normal(rng);
  return FixedHead(std::move(w));
}

void check_adapter_shape(const FrozenEncoder& enc, const LoraAdapter& ad) {
  const auto& slots = enc.adapted_layers();
  if (ad.layers.size() != slots.size()) {
    throw ShapeError("adapter has " + std::to_string(ad.layers.size()) +
                     " slots, encoder has " + std::to_string(slots.size()) +
                     " adapted layers");
  }
  if (!(ad.scale > 0.0) || !std::isfinite(ad.scale)) {
    throw ShapeError("adapter scale must be positive and finite");
  }
  const std::size_t r = ad.rank();
  for (std::size_t i = 0; i < slots.size(); ++i) {
    const Matrix& w = enc.layers()[slots[i]].weight;
    const FactorPair& p = ad.layers[i];
    if (r == 0 || r > std::min(w.rows(), w.cols())) {
      throw ShapeError("adapter rank " + std::to_string(r) +
                       " invalid for layer " + std::to_string(slots[i]));
    }
    if (p.a.rows() != r || p.a.cols() != w.cols() || p.b.rows() != w.rows() ||
        p.b.cols() != r) {
      throw ShapeError("adapter slot " + std::to_string(i) +
                       " does not match encoder layer " +
                       std::to_string(slots[i]));
    }
  }
}

MaterializedEncoder::MaterializedEncoder(const FrozenEncoder& enc,
                                         const LoraAdapter& ad)
    : enc_(enc) {
  check_adapter_shape(enc, ad);
  weights_.reserve(enc.layers().size());
  for (const auto& layer : enc.layers()) weights_.push_back(layer.weight);
  const auto& slots = enc.adapted_layers();
  for (std::size_t i = 0; i < slots.size(); ++i) {
    add_scaled(weights_[slots[i]], ad.delta(i), 1.0);
  }
}

Vector MaterializedEncoder::encode(std::span<const double> x) const {
  if (x.size() != enc_.input_dim()) {
    throw ShapeError("encode: input length " + std::to_string(x.size()) +
                     ", expected " + std::to_string(enc_.input_dim()));
  }
  const auto& layers = enc_.layers();
  Vector u(x.begin(), x.end());
  for (std::size_t l = 0; l < layers.size(); ++l) {
    Vector v = matvec(weights_[l], u);
    for (std::size_t i = 0; i < v.size(); ++i) {
      v[i] = activate(layers[l].activation, v[i] + layers[l].bias[i]);
    }
    u = std::move(v);
  }
  check_finite_vector(u, "encoded feature");
  return u;
}

Vector encode(const FrozenEncoder& enc, const LoraAdapter& ad,
              std::span<const double> x) {
  return MaterializedEncoder(enc, ad).encode(x);
}

double predict(const FixedHead& head, std::span<const double> z) {
  if (z.size() != head.dim()) {
    throw ShapeError("predict: feature length " + std::to_string(z.size()) +
                     ", head expects " + std::to_string(head.dim()));
  }
  return dot(head.weights(), z);
}

double logistic_loss(double logit, int label) {
  const double m = static_cast<double>(label) * logit;
  if (m > 0.0) return std::log1p(std::exp(-m));
  return -m + std::log1p(std::exp(m));
}

double logistic_loss_grad(double logit, int label) {
  const double y = static_cast<double>(label);
  const double m = y * logit;
  // sigmoid(-m) without overflow
  const double s = m >= 0.0 ? std::exp(-m) / (1.0 + std::exp(-m))
                            : 1.0 / (1.0 + std::exp(m));
  return -y * s;
}

double objective(const FrozenEncoder& enc, const LoraAdapter& ad,
                 const FixedHead& head, const Batch& batch, const RegSpec& reg,
                 std::span<const Vector> z_ref) {
  check_batch(enc, head, batch, reg, z_ref);
  const MaterializedEncoder m(enc, ad);
  double total = 0.0;
  for (std::size_t i = 0; i < batch.size(); ++i) {
    const Vector z = m.encode(batch[i].x);
    total += logistic_loss(predict(head, z), batch[i].y);
    if (reg.active()) total += reg.lambda * distance(z, z_ref[i], reg.kind);
  }
  const double loss = total / static_cast<double>(batch.size());
  if (!std::isfinite(loss)) throw NumericError("objective is not finite");
  return loss;
}

LossAndGrad backward(const FrozenEncoder& enc, const LoraAdapter& ad,
                     const FixedHead& head, const Batch& batch,
                     const RegSpec& reg, std::span<const Vector> z_ref) {
  check_batch(enc, head, batch, reg, z_ref);
  const MaterializedEncoder m(enc, ad);
  const auto& layers = enc.layers();
  const auto& slots = enc.adapted_layers();

  // dW accumulators indexed by encoder layer; only adapted ones are used.
  std::vector<Matrix> dw(layers.size());
  for (std::size_t l : slots) {
    dw[l] = Matrix(layers[l].weight.rows(), layers[l].weight.cols());
  }
  const std::size_t first_adapted = slots.empty() ? layers.size() : slots[0];

  double total = 0.0;
  for (std::size_t i = 0; i < batch.size(); ++i) {
    ForwardCache cache = forward_cached(m, batch[i].x);
    const Vector& z = cache.features;
    check_finite_vector(z, "encoded feature");
    const double logit = predict(head, z);
    total += logistic_loss(logit, batch[i].y);

    // g = d loss_i / d z
    Vector g(z.size());
    const double dlogit = logistic_loss_grad(logit, batch[i].y);
    for (std::size_t k = 0; k < g.size(); ++k) g[k] = dlogit * head.weights()[k];
    if (reg.active()) {
      total += reg.lambda * distance(z, z_ref[i], reg.kind);
      const Vector dg = distance_grad(z, z_ref[i], reg.kind);
      for (std::size_t k = 0; k < g.size(); ++k) g[k] += reg.lambda * dg[k];
    }

    Vector u_out = z;
    for (std::size_t l = layers.size(); l-- > first_adapted;) {
      const Vector& pre = cache.pre[l];
      const Vector& in = cache.inputs[l];
      for (std::size_t k = 0; k < g.size(); ++k) {
        g[k] *= activate_grad(layers[l].activation, pre[k], u_out[k]);
      }
      if (layers[l].adapted) {
        Matrix& acc = dw[l];
        for (std::size_t r = 0; r < acc.rows(); ++r) {
          const double gr = g[r];
          if (gr == 0.0) continue;
          for (std::size_t c = 0; c < acc.cols(); ++c) acc(r, c) += gr * in[c];
        }
      }
      if (l == first_adapted) break;
      const Matrix& w = m.weight(l);
      Vector g_in(w.cols(), 0.0);
      for (std::size_t r = 0; r < w.rows(); ++r) {
        const double gr = g[r];
        for (std::size_t c = 0; c < w.cols(); ++c) g_in[c] += w(r, c) * gr;
      }
      g = std::move(g_in);
      u_out = in;
    }
  }

  const double inv_n = 1.0 / static_cast<double>(batch.size());
  LossAndGrad result;
  result.loss = total * inv_n;
  if (!std::isfinite(result.loss)) throw NumericError("loss is not finite");
  result.grads.layers.reserve(slots.size());
  for (std::size_t i = 0; i < slots.size(); ++i) {
    Matrix& w_grad = dw[slots[i]];
    for (double& v : w_grad.data()) v *= inv_n;
    const FactorPair& f = ad.layers[i];
    // dA = s * B^T dW, dB = s * dW A^T
    Matrix da = matmul_tn(f.b, w_grad);
    Matrix db = matmul_nt(w_grad, f.a);
    if (ad.scale != 1.0) {
      for (double& v : da.data()) v *= ad.scale;
      for (double& v : db.data()) v *= ad.scale;
    }
    result.grads.layers.push_back({std::move(da), std::move(db)});
  }
  if (!all_finite(result.grads)) throw NumericError("gradient is not finite");
  return result;
}

double fd_check(const FrozenEncoder& enc, const LoraAdapter& ad,
                const FixedHead& head, const Batch& batch, const RegSpec& reg,
                std::span<const Vector> z_ref, double step,
                FdEntries entries) {
  if (!(step > 0.0)) throw ConfigError("fd_check: step must be positive");
  const LossAndGrad analytic = backward(enc, ad, head, batch, reg, z_ref);
  double worst = 0.0;
  LoraAdapter probe = ad;
  auto check_factor = [&](Matrix& param, const Matrix& grad) {
    auto values = param.data();
    auto g = grad.data();
    for (std::size_t j = 0; j < values.size(); ++j) {
      const double saved = values[j];
      values[j] = saved + step;
      const double plus = objective(enc, probe, head, batch, reg, z_ref);
      values[j] = saved - step;
      const double minus = objective(enc, probe, head, batch, reg, z_ref);
      values[j] = saved;
      const double numeric = (plus - minus) / (2.0 * step);
      const double denom =
          std::max({std::abs(g[j]), std::abs(numeric), 1e-8});
      worst = std::max(worst, std::abs(g[j] - numeric) / denom);
    }
  };
  for (std::size_t i = 0; i < probe.layers.size(); ++i) {
    if (entries != FdEntries::kBOnly) {
      check_factor(probe.layers[i].a, analytic.grads.layers[i].a);
    }
    if (entries != FdEntries::kAOnly) {
      check_factor(probe.layers[i].b, analytic.grads.layers[i].b);
    }
  }
  return worst;
}

LoraAdapter axpy_params(LoraAdapter dst, const GradBundle& src, double coeff) {
  check_same_layout(dst.layers, src.layers);
  if (coeff == 0.0) return dst;
  for (std::size_t i = 0; i < dst.layers.size(); ++i) {
    add_scaled(dst.layers[i].a, src.layers[i].a, coeff);
    add_scaled(dst.layers[i].b, src.layers[i].b, coeff);
  }
  return dst;
}

LoraAdapter axpy_params(LoraAdapter dst, const LoraAdapter& src, double coeff) {
  check_same_layout(dst.layers, src.layers);
  if (coeff == 0.0) return dst;
  for (std::size_t i = 0; i < dst.layers.size(); ++i) {
    add_scaled(dst.layers[i].a, src.layers[i].a, coeff);
    add_scaled(dst.layers[i].b, src.layers[i].b, coeff);
  }
  return dst;
}

double parameter_distance_squared(const LoraAdapter& a, const LoraAdapter& b) {
  check_same_layout(a.layers, b.layers);
  double s = 0.0;
  for (std::size_t i = 0; i < a.layers.size(); ++i) {
    const auto pa = a.layers[i].a.data(), qa = b.layers[i].a.data();
    for (std::size_t j = 0; j < pa.size(); ++j) s += (pa[j] - qa[j]) * (pa[j] - qa[j]);
    const auto pb = a.layers[i].b.data(), qb = b.layers[i].b.data();
    for (std::size_t j = 0; j < pb.size(); ++j) s += (pb[j] - qb[j]) * (pb[j] - qb[j]);
  }
  return s;
}

bool all_finite(const LoraAdapter& ad) {
  for (const auto& p : ad.layers) {
    if (!p.a.all_finite() || !p.b.all_finite()) return false;
  }
  return std::isfinite(ad.scale);
}

bool all_finite(const GradBundle& g) {
  for (const auto& p : g.layers) {
    if (!p.a.all_finite() || !p.b.all_finite()) return false;
  }
  return true;
}

}  // namespace fedoa
