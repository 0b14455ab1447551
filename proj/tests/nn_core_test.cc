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

#include <cmath>
#include <random>

#include "fedoa/errors.h"
#include "fedoa/self_check.h"
#include "gtest/gtest.h"

namespace fedoa {
namespace {

Vector RandomVector(std::size_t n, Rng& rng) {
  std::normal_distribution<double> normal(0.0, 1.0);
  Vector v(n);
  for (double& x : v) x = normal(rng);
  return v;
}

void FillNormal(Matrix& m, Rng& rng) {
  std::normal_distribution<double> normal(0.0, 0.5);
  for (double& v : m.data()) v = normal(rng);
}

// Straightforward forward pass written independently of MaterializedEncoder:
// builds W0 + s*B*A entry by entry.
Vector ReferenceEncode(const FrozenEncoder& enc, const LoraAdapter& ad,
                       const Vector& x) {
  Vector u = x;
  std::size_t slot = 0;
  for (const auto& layer : enc.layers()) {
    const Matrix& w0 = layer.weight;
    Vector next(w0.rows());
    for (std::size_t i = 0; i < w0.rows(); ++i) {
      double s = layer.bias[i];
      for (std::size_t j = 0; j < w0.cols(); ++j) {
        double w = w0(i, j);
        if (layer.adapted) {
          const FactorPair& p = ad.layers[slot];
          for (std::size_t k = 0; k < p.a.rows(); ++k) {
            w += ad.scale * p.b(i, k) * p.a(k, j);
          }
        }
        s += w * u[j];
      }
      switch (layer.activation) {
        case Activation::kTanh: next[i] = std::tanh(s); break;
        case Activation::kRelu: next[i] = s > 0 ? s : 0; break;
        case Activation::kIdentity: next[i] = s; break;
      }
    }
    if (layer.adapted) ++slot;
    u = std::move(next);
  }
  return u;
}

// Central differences on objective(), independent of fd_check.
GradBundle NumericGrad(const GradInstance& inst, double step) {
  LoraAdapter probe = inst.adapter;
  GradBundle g = zero_grads(probe);
  const Batch batch = inst.batch();
  for (std::size_t l = 0; l < probe.layers.size(); ++l) {
    for (int f = 0; f < 2; ++f) {
      Matrix& param = f == 0 ? probe.layers[l].a : probe.layers[l].b;
      Matrix& out = f == 0 ? g.layers[l].a : g.layers[l].b;
      for (std::size_t j = 0; j < param.size(); ++j) {
        const double saved = param.data()[j];
        param.data()[j] = saved + step;
        const double plus = objective(inst.model.encoder, probe, inst.model.head,
                                      batch, inst.reg, inst.z_ref);
        param.data()[j] = saved - step;
        const double minus = objective(inst.model.encoder, probe,
                                       inst.model.head, batch, inst.reg,
                                       inst.z_ref);
        param.data()[j] = saved;
        out.data()[j] = (plus - minus) / (2 * step);
      }
    }
  }
  return g;
}

FrozenEncoder IdentityEncoder() {
  EncoderLayer layer;
  layer.weight = Matrix(2, 2, {1, 0, 0, 1});
  layer.bias = {0, 0};
  layer.activation = Activation::kIdentity;
  return FrozenEncoder({layer});
}

TEST(EncodeTest, ZeroAdapterGivesBackboneOutput) {
  Rng rng(1);
  const FrozenEncoder enc = random_encoder(6, {5, 4}, Activation::kTanh, rng);
  const LoraAdapter ad = init_adapter(enc, 2, 1.0, rng);  // B = 0
  const LoraAdapter none = zero_adapter(enc, 2);
  for (int i = 0; i < 5; ++i) {
    const Vector x = RandomVector(6, rng);
    EXPECT_EQ(encode(enc, ad, x), encode(enc, none, x));
  }
}

TEST(EncodeTest, IdentityLayer) {
  const FrozenEncoder enc = IdentityEncoder();
  const LoraAdapter ad = zero_adapter(enc, 1);
  EXPECT_EQ(encode(enc, ad, Vector{1, 2}), (Vector{1, 2}));
}

TEST(EncodeTest, MatchesReferenceImplementation) {
  Rng rng(7);
  for (Activation act :
       {Activation::kTanh, Activation::kRelu, Activation::kIdentity}) {
    const FrozenEncoder enc = random_encoder(6, {5, 4}, act, rng);
    LoraAdapter ad = zero_adapter(enc, 2, 0.7);
    for (auto& p : ad.layers) {
      FillNormal(p.a, rng);
      FillNormal(p.b, rng);
    }
    for (int i = 0; i < 10; ++i) {
      const Vector x = RandomVector(6, rng);
      const Vector got = encode(enc, ad, x);
      const Vector want = ReferenceEncode(enc, ad, x);
      ASSERT_EQ(got.size(), 4u);
      for (std::size_t k = 0; k < 4; ++k) EXPECT_NEAR(got[k], want[k], 1e-12);
    }
  }
}

TEST(EncodeTest, RejectsWrongInputLength) {
  const FrozenEncoder enc = IdentityEncoder();
  EXPECT_THROW(encode(enc, zero_adapter(enc, 1), Vector{1, 2, 3}), ShapeError);
}

TEST(EncodeTest, RejectsMismatchedAdapter) {
  Rng rng(2);
  const FrozenEncoder enc = random_encoder(6, {4}, Activation::kTanh, rng);
  const FrozenEncoder other = random_encoder(5, {4}, Activation::kTanh, rng);
  EXPECT_THROW(encode(enc, zero_adapter(other, 2), Vector(6, 0.0)), ShapeError);
}

TEST(EncodeTest, RankAboveLayerDimsRejected) {
  Rng rng(3);
  const FrozenEncoder enc = random_encoder(6, {4}, Activation::kTanh, rng);
  EXPECT_THROW(init_adapter(enc, 5, 1.0, rng), ShapeError);
}

TEST(EncodeTest, NonFiniteFeatureIsNumericError) {
  const FrozenEncoder enc = IdentityEncoder();
  LoraAdapter ad = zero_adapter(enc, 1);
  ad.layers[0].a(0, 0) = 1e200;
  ad.layers[0].b(0, 0) = 1e200;
  EXPECT_THROW(encode(enc, ad, Vector{1, 0}), NumericError);
}

TEST(EncoderTest, LayersMustChain) {
  EncoderLayer a{Matrix(3, 2), Vector(3, 0.0), Activation::kTanh, true};
  EncoderLayer b{Matrix(2, 4), Vector(2, 0.0), Activation::kTanh, true};
  EXPECT_THROW(FrozenEncoder({a, b}), ShapeError);
}

TEST(PredictTest, Examples) {
  const FixedHead head({1, 0, 0});
  EXPECT_EQ(predict(head, Vector{3, 5, 7}), 3.0);
  EXPECT_EQ(predict(head, Vector{0, 0, 0}), 0.0);
  EXPECT_THROW(predict(head, Vector{1, 2}), ShapeError);
}

TEST(PredictTest, MatchesDotProduct) {
  Rng rng(9);
  for (int i = 0; i < 10; ++i) {
    const Vector w = RandomVector(8, rng);
    const Vector z = RandomVector(8, rng);
    double want = 0.0;
    for (std::size_t k = 0; k < 8; ++k) want += w[k] * z[k];
    EXPECT_NEAR(predict(FixedHead(w), z), want, 1e-15);
  }
}

TEST(LossTest, Examples) {
  EXPECT_NEAR(logistic_loss(0.0, 1), std::log(2.0), 1e-15);
  EXPECT_NEAR(logistic_loss(0.0, -1), 0.693147, 1e-6);
  EXPECT_LE(logistic_loss(40.0, 1), 1e-15);
  EXPECT_NEAR(logistic_loss(1.5, -1), std::log(1.0 + std::exp(1.5)), 1e-15);
}

TEST(LossTest, FiniteForHugeLogits) {
  for (double logit : {1e6, -1e6, 1e3, -1e3}) {
    for (int y : {1, -1}) {
      EXPECT_TRUE(std::isfinite(logistic_loss(logit, y)));
      EXPECT_TRUE(std::isfinite(logistic_loss_grad(logit, y)));
    }
  }
  EXPECT_NEAR(logistic_loss(-1e6, 1), 1e6, 1e-6);
}

TEST(BackwardTest, ZeroBGivesZeroAGradient) {
  Rng rng(4);
  EncoderLayer layer{Matrix(4, 6), Vector(4, 0.0), Activation::kIdentity, true};
  FillNormal(layer.weight, rng);
  const FrozenEncoder enc({layer});
  const FixedHead head(RandomVector(4, rng));
  const LoraAdapter ad = init_adapter(enc, 2, 1.0, rng);
  std::vector<Vector> xs;
  Batch batch;
  for (int i = 0; i < 8; ++i) xs.push_back(RandomVector(6, rng));
  for (int i = 0; i < 8; ++i) batch.push_back({xs[i], i % 2 ? 1 : -1});
  const LossAndGrad lg = backward(enc, ad, head, batch, RegSpec{});
  for (double v : lg.grads.layers[0].a.data()) EXPECT_EQ(v, 0.0);
  EXPECT_GT(frobenius_squared(lg.grads.layers[0].b), 0.0);
  // Only dA entries: perturbing A with B = 0 leaves the loss unchanged.
  EXPECT_LE(fd_check(enc, ad, head, batch, RegSpec{}, {}, 1e-5,
                     FdEntries::kAOnly),
            1e-8);
}

TEST(BackwardTest, RegularizerVanishesAtOwnFeatures) {
  Rng rng(5);
  GradInstance inst = random_grad_instance(rng, 2, Activation::kTanh, {});
  const Batch batch = inst.batch();
  std::vector<Vector> self_ref;
  for (const auto& x : inst.inputs) {
    self_ref.push_back(encode(inst.model.encoder, inst.adapter, x));
  }
  for (DistanceKind kind :
       {DistanceKind::kL2Sq, DistanceKind::kCosine, DistanceKind::kPearson}) {
    const LossAndGrad plain = backward(inst.model.encoder, inst.adapter,
                                       inst.model.head, batch, RegSpec{});
    const LossAndGrad reg =
        backward(inst.model.encoder, inst.adapter, inst.model.head, batch,
                 RegSpec{kind, 0.5}, self_ref);
    EXPECT_NEAR(reg.loss, plain.loss, 1e-15);
    for (std::size_t l = 0; l < plain.grads.layers.size(); ++l) {
      for (std::size_t j = 0; j < plain.grads.layers[l].a.size(); ++j) {
        EXPECT_NEAR(reg.grads.layers[l].a.data()[j],
                    plain.grads.layers[l].a.data()[j], 1e-14);
      }
      for (std::size_t j = 0; j < plain.grads.layers[l].b.size(); ++j) {
        EXPECT_NEAR(reg.grads.layers[l].b.data()[j],
                    plain.grads.layers[l].b.data()[j], 1e-14);
      }
    }
  }
}

TEST(BackwardTest, MatchesIndependentFiniteDifferences) {
  Rng rng(6);
  const GradInstance inst = random_grad_instance(
      rng, 1, Activation::kTanh, {DistanceKind::kL2Sq, 0.5});
  const LossAndGrad lg = backward(inst.model.encoder, inst.adapter,
                                  inst.model.head, inst.batch(), inst.reg,
                                  inst.z_ref);
  const GradBundle num = NumericGrad(inst, 1e-5);
  double worst = 0.0;
  for (std::size_t l = 0; l < num.layers.size(); ++l) {
    for (int f = 0; f < 2; ++f) {
      const auto a = f == 0 ? lg.grads.layers[l].a.data() : lg.grads.layers[l].b.data();
      const auto n = f == 0 ? num.layers[l].a.data() : num.layers[l].b.data();
      for (std::size_t j = 0; j < a.size(); ++j) {
        const double denom = std::max({std::abs(a[j]), std::abs(n[j]), 1e-8});
        worst = std::max(worst, std::abs(a[j] - n[j]) / denom);
      }
    }
  }
  EXPECT_LT(worst, 1e-4);
}

TEST(BackwardTest, ReferenceFeaturesRequiredIffLambdaPositive) {
  Rng rng(8);
  const GradInstance inst = random_grad_instance(
      rng, 1, Activation::kTanh, {DistanceKind::kL2Sq, 0.5});
  EXPECT_THROW(backward(inst.model.encoder, inst.adapter, inst.model.head,
                        inst.batch(), inst.reg),
               ShapeError);
  EXPECT_THROW(backward(inst.model.encoder, inst.adapter, inst.model.head,
                        inst.batch(), RegSpec{}, inst.z_ref),
               ShapeError);
  EXPECT_THROW(backward(inst.model.encoder, inst.adapter, inst.model.head,
                        Batch{}, RegSpec{}),
               ShapeError);
}

TEST(BackwardTest, NonFiniteLossIsNumericError) {
  const FrozenEncoder enc = IdentityEncoder();
  const FixedHead head({1, 0});
  const LoraAdapter ad = zero_adapter(enc, 1);
  const Vector x{std::numeric_limits<double>::infinity(), 0};
  EXPECT_THROW(backward(enc, ad, head, Batch{{x, 1}}, RegSpec{}), NumericError);
}

// Gradient correctness across layer counts, activations, lambdas and kinds.
TEST(FdCheckTest, SeededSuite) {
  Rng rng(10);
  int n = 0;
  for (DistanceKind kind :
       {DistanceKind::kL2Sq, DistanceKind::kCosine, DistanceKind::kPearson}) {
    for (std::size_t layers : {1, 2}) {
      for (Activation act : {Activation::kTanh, Activation::kIdentity}) {
        for (double lambda : {0.0, 0.5, 2.0}) {
          const GradInstance inst =
              random_grad_instance(rng, layers, act, {kind, lambda});
          EXPECT_LT(fd_check(inst.model.encoder, inst.adapter, inst.model.head,
                             inst.batch(), inst.reg, inst.z_ref, 1e-5),
                    1e-4)
              << "kind " << to_string(kind) << " layers " << layers
              << " lambda " << lambda;
          ++n;
        }
      }
    }
  }
  EXPECT_GE(n, 20);
}

// Central differences carry O(h^2) truncation error, so the coarse step is
// held to 100x the accepted fine-step bound and to the h^2 growth rate.
TEST(FdCheckTest, StepScaling) {
  Rng rng(12);
  for (int i = 0; i < 10; ++i) {
    const GradInstance inst = random_grad_instance(
        rng, 1, Activation::kTanh, {DistanceKind::kL2Sq, 0.5});
    const auto run = [&](double step) {
      return fd_check(inst.model.encoder, inst.adapter, inst.model.head,
                      inst.batch(), inst.reg, inst.z_ref, step);
    };
    const double fine = run(1e-5);
    const double coarse = run(1e-3);
    EXPECT_LT(fine, 1e-4);
    EXPECT_LT(coarse, 100 * 1e-4);
    EXPECT_LT(coarse, 1e5 * std::max(fine, 1e-12));
  }
  const GradInstance inst = random_grad_instance(rng, 1, Activation::kTanh, {});
  EXPECT_THROW(fd_check(inst.model.encoder, inst.adapter, inst.model.head,
                        inst.batch(), inst.reg, inst.z_ref, 0.0),
               ConfigError);
}

TEST(AxpyTest, Examples) {
  Rng rng(13);
  const FrozenEncoder enc = random_encoder(6, {4}, Activation::kTanh, rng);
  LoraAdapter dst = zero_adapter(enc, 2);
  LoraAdapter src = zero_adapter(enc, 2);
  for (auto* ad : {&dst, &src}) {
    for (auto& p : ad->layers) {
      FillNormal(p.a, rng);
      FillNormal(p.b, rng);
    }
  }
  EXPECT_EQ(axpy_params(dst, src, 0.0), dst);
  EXPECT_EQ(axpy_params(zero_adapter(enc, 2), src, 1.0), src);
  const LoraAdapter back = axpy_params(axpy_params(dst, src, 0.3), src, -0.3);
  for (std::size_t j = 0; j < dst.layers[0].a.size(); ++j) {
    EXPECT_NEAR(back.layers[0].a.data()[j], dst.layers[0].a.data()[j], 1e-15);
  }
  EXPECT_THROW(axpy_params(dst, zero_adapter(enc, 1), 1.0), ShapeError);
}

TEST(AdapterTest, DeltaIsLinearInB) {
  Rng rng(14);
  const FrozenEncoder enc = random_encoder(6, {5}, Activation::kTanh, rng);
  LoraAdapter ad = zero_adapter(enc, 3);
  FillNormal(ad.layers[0].a, rng);
  FillNormal(ad.layers[0].b, rng);
  LoraAdapter scaled = ad;
  for (double& v : scaled.layers[0].b.data()) v *= -2.5;
  const Matrix d = ad.delta(0);
  const Matrix ds = scaled.delta(0);
  for (std::size_t j = 0; j < d.size(); ++j) {
    EXPECT_NEAR(ds.data()[j], -2.5 * d.data()[j], 1e-14);
  }
}

TEST(AdapterTest, InitHasZeroBAndBoundedA) {
  Rng rng(15);
  const FrozenEncoder enc = random_encoder(10, {16, 16}, Activation::kTanh, rng);
  const LoraAdapter ad = init_adapter(enc, 8, 1.0, rng);
  EXPECT_EQ(ad.parameter_count(), (8 * 10 + 16 * 8) + (8 * 16 + 16 * 8));
  for (std::size_t l = 0; l < ad.layers.size(); ++l) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(ad.layers[l].a.cols()));
    for (double v : ad.layers[l].a.data()) EXPECT_LE(std::abs(v), bound);
    for (double v : ad.layers[l].b.data()) EXPECT_EQ(v, 0.0);
  }
}

TEST(FrozennessTest, BackwardAndAxpyLeaveBackboneUntouched) {
  Rng rng(16);
  GradInstance inst = random_grad_instance(
      rng, 2, Activation::kTanh, {DistanceKind::kCosine, 2.0});
  const FrozenEncoder enc_before = inst.model.encoder;
  const FixedHead head_before = inst.model.head;
  LoraAdapter ad = inst.adapter;
  for (int i = 0; i < 20; ++i) {
    const LossAndGrad lg = backward(inst.model.encoder, ad, inst.model.head,
                                    inst.batch(), inst.reg, inst.z_ref);
    ad = axpy_params(std::move(ad), lg.grads, -0.05);
  }
  EXPECT_TRUE(inst.model.encoder == enc_before);
  EXPECT_TRUE(inst.model.head == head_before);
}

}  // namespace
}  // namespace fedoa
