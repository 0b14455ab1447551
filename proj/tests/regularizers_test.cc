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

#include "fedoa/regularizers.h"

#include <cmath>
#include <random>

#include "fedoa/errors.h"
#include "fedoa/rng.h"
#include "gtest/gtest.h"

namespace fedoa {
namespace {

constexpr DistanceKind kAllKinds[] = {DistanceKind::kL2Sq,
                                      DistanceKind::kCosine,
                                      DistanceKind::kPearson};

Vector RandomVector(std::size_t n, Rng& rng) {
  std::normal_distribution<double> normal(0.0, 1.0);
  Vector v(n);
  for (double& x : v) x = normal(rng);
  return v;
}

TEST(DistanceTest, Examples) {
  EXPECT_EQ(distance(Vector{1, 0}, Vector{0, 1}, DistanceKind::kL2Sq), 2.0);
  EXPECT_NEAR(distance(Vector{2, 0}, Vector{1, 0}, DistanceKind::kCosine), 0.0,
              1e-15);
  EXPECT_NEAR(distance(Vector{1, 0}, Vector{0, 1}, DistanceKind::kCosine), 1.0,
              1e-15);
  EXPECT_NEAR(distance(Vector{1, 0}, Vector{-1, 0}, DistanceKind::kCosine), 2.0,
              1e-15);
  EXPECT_NEAR(distance(Vector{1, 2, 3}, Vector{3, 2, 1}, DistanceKind::kPearson),
              2.0, 1e-15);
}

TEST(DistanceTest, SelfDistanceIsZero) {
  Rng rng(1);
  for (DistanceKind kind : kAllKinds) {
    for (int i = 0; i < 20; ++i) {
      const Vector a = RandomVector(7, rng);
      EXPECT_NEAR(distance(a, a, kind), 0.0, 1e-12) << to_string(kind);
    }
  }
}

TEST(DistanceTest, DegenerateInputs) {
  EXPECT_THROW(distance(Vector{0, 0}, Vector{1, 0}, DistanceKind::kCosine),
               DegenerateInputError);
  EXPECT_THROW(distance(Vector{1, 0}, Vector{0, 0}, DistanceKind::kCosine),
               DegenerateInputError);
  EXPECT_THROW(distance(Vector{2, 2, 2}, Vector{1, 2, 3}, DistanceKind::kPearson),
               DegenerateInputError);
  EXPECT_THROW(distance_grad(Vector{1, 2, 3}, Vector{5, 5, 5},
                             DistanceKind::kPearson),
               DegenerateInputError);
  EXPECT_THROW(distance_grad(Vector{0, 0}, Vector{1, 0}, DistanceKind::kCosine),
               DegenerateInputError);
}

TEST(DistanceTest, ShapeErrors) {
  for (DistanceKind kind : kAllKinds) {
    EXPECT_THROW(distance(Vector{1, 2}, Vector{1, 2, 3}, kind), ShapeError);
    EXPECT_THROW(distance(Vector{}, Vector{}, kind), ShapeError);
    EXPECT_THROW(distance_grad(Vector{1}, Vector{1, 2}, kind), ShapeError);
  }
}

TEST(DistanceTest, NonNegative) {
  Rng rng(2);
  for (DistanceKind kind : kAllKinds) {
    for (int i = 0; i < 50; ++i) {
      EXPECT_GE(distance(RandomVector(5, rng), RandomVector(5, rng), kind), 0.0);
    }
  }
}

TEST(DistanceTest, L2SymmetricAndMatchesSumOfSquares) {
  Rng rng(3);
  for (int i = 0; i < 20; ++i) {
    const Vector a = RandomVector(6, rng);
    const Vector b = RandomVector(6, rng);
    double want = 0.0;
    for (std::size_t k = 0; k < 6; ++k) want += (a[k] - b[k]) * (a[k] - b[k]);
    EXPECT_NEAR(distance(a, b, DistanceKind::kL2Sq), want, 1e-13);
    EXPECT_EQ(distance(a, b, DistanceKind::kL2Sq),
              distance(b, a, DistanceKind::kL2Sq));
  }
}

TEST(DistanceTest, CosineScaleInvariance) {
  Rng rng(4);
  for (double c : {1e-3, 0.5, 1.0, 7.0, 1e4}) {
    const Vector a = RandomVector(6, rng);
    Vector ca = a;
    for (double& v : ca) v *= c;
    EXPECT_NEAR(distance(ca, a, DistanceKind::kCosine), 0.0, 1e-12);
  }
}

TEST(DistanceTest, PearsonAffineInvariance) {
  Rng rng(5);
  for (double c : {0.01, 1.0, 3.0, 100.0}) {
    for (double m : {-50.0, 0.0, 2.5}) {
      const Vector a = RandomVector(6, rng);
      Vector t = a;
      for (double& v : t) v = c * v + m;
      EXPECT_NEAR(distance(t, a, DistanceKind::kPearson), 0.0, 1e-12);
    }
  }
}

TEST(DistanceGradTest, Examples) {
  EXPECT_EQ(distance_grad(Vector{3, 1}, Vector{1, 1}, DistanceKind::kL2Sq),
            (Vector{4, 0}));
  EXPECT_EQ(distance_grad(Vector{1, 2}, Vector{1, 2}, DistanceKind::kL2Sq),
            (Vector{0, 0}));
  // On the unit circle the cosine gradient is tangential.
  const Vector g = distance_grad(Vector{1, 0}, Vector{0, 1}, DistanceKind::kCosine);
  EXPECT_NEAR(g[0], 0.0, 1e-15);
  EXPECT_NEAR(g[1], -1.0, 1e-15);
}

TEST(DistanceGradTest, MatchesFiniteDifferences) {
  Rng rng(6);
  const double h = 1e-6;
  for (DistanceKind kind : kAllKinds) {
    for (int draw = 0; draw < 25; ++draw) {
      const Vector zp = RandomVector(6, rng);
      const Vector zg = RandomVector(6, rng);
      const Vector grad = distance_grad(zp, zg, kind);
      double worst = 0.0;
      for (std::size_t k = 0; k < zp.size(); ++k) {
        Vector plus = zp, minus = zp;
        plus[k] += h;
        minus[k] -= h;
        const double num =
            (distance(plus, zg, kind) - distance(minus, zg, kind)) / (2 * h);
        const double denom = std::max({std::abs(num), std::abs(grad[k]), 1e-8});
        worst = std::max(worst, std::abs(num - grad[k]) / denom);
      }
      EXPECT_LT(worst, 1e-5) << to_string(kind) << " draw " << draw;
    }
  }
}

TEST(RegSpecTest, Validation) {
  EXPECT_NO_THROW((RegSpec{DistanceKind::kL2Sq, 0.0}).validate());
  EXPECT_THROW((RegSpec{DistanceKind::kL2Sq, -0.1}).validate(), ConfigError);
  EXPECT_THROW((RegSpec{DistanceKind::kL2Sq, std::nan("")}).validate(),
               ConfigError);
  EXPECT_FALSE((RegSpec{DistanceKind::kCosine, 0.0}).active());
  EXPECT_TRUE((RegSpec{DistanceKind::kCosine, 0.1}).active());
}

TEST(RegSpecTest, KindNamesRoundTrip) {
  for (DistanceKind kind : kAllKinds) {
    EXPECT_EQ(parse_distance_kind(to_string(kind)), kind);
  }
  EXPECT_THROW(parse_distance_kind("manhattan"), ConfigError);
}

}  // namespace
}  // namespace fedoa
