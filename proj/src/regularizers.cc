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

#include <algorithm>
#include <cmath>
#include <string>

#include "fedoa/errors.h"

namespace fedoa {
namespace {

void check_pair(std::span<const double> zp, std::span<const double> zg) {
  if (zp.empty() || zp.size() != zg.size()) {
    throw ShapeError("distance: feature vectors must be non-empty and equal "
                     "length (got " + std::to_string(zp.size()) + " and " +
                     std::to_string(zg.size()) + ")");
  }
}

double checked_norm(std::span<const double> v, const char* which) {
  const double n = std::sqrt(squared_norm(v));
  if (n == 0.0) {
    throw DegenerateInputError(std::string("cosine distance: ") + which +
                               " has zero norm");
  }
  return n;
}

// Centered copy of v. A vector whose spread is at rounding level relative to
// its magnitude counts as constant.
Vector centered(std::span<const double> v, const char* which) {
  double mean = 0.0;
  double max_abs = 0.0;
  for (double x : v) {
    mean += x;
    max_abs = std::max(max_abs, std::abs(x));
  }
  mean /= static_cast<double>(v.size());
  Vector c(v.begin(), v.end());
  for (double& x : c) x -= mean;
  const double spread = std::sqrt(squared_norm(c));
  if (spread <= 1e-12 * max_abs * std::sqrt(static_cast<double>(v.size())) ||
      spread == 0.0) {
    throw DegenerateInputError(std::string("pearson distance: ") + which +
                               " has zero variance");
  }
  return c;
}

}  // namespace

std::string_view to_string(DistanceKind kind) {
  switch (kind) {
    case DistanceKind::kL2Sq:
      return "l2sq";
    case DistanceKind::kCosine:
      return "cosine";
    case DistanceKind::kPearson:
      return "pearson";
  }
  return "unknown";
}

DistanceKind parse_distance_kind(std::string_view name) {
  if (name == "l2sq") return DistanceKind::kL2Sq;
  if (name == "cosine") return DistanceKind::kCosine;
  if (name == "pearson") return DistanceKind::kPearson;
  throw ConfigError("unknown distance kind '" + std::string(name) +
                    "' (expected l2sq, cosine or pearson)");
}

void RegSpec::validate() const {
  if (!std::isfinite(lambda) || lambda < 0.0) {
    throw ConfigError("regularizer lambda must be finite and >= 0");
  }
}

double distance(std::span<const double> zp, std::span<const double> zg,
                DistanceKind kind) {
  check_pair(zp, zg);
  switch (kind) {
    case DistanceKind::kL2Sq: {
      double s = 0.0;
      for (std::size_t i = 0; i < zp.size(); ++i) {
        const double d = zp[i] - zg[i];
        s += d * d;
      }
      return s;
    }
    case DistanceKind::kCosine: {
      const double np = checked_norm(zp, "first argument");
      const double ng = checked_norm(zg, "second argument");
      return std::max(0.0, 1.0 - dot(zp, zg) / (np * ng));
    }
    case DistanceKind::kPearson: {
      const Vector pc = centered(zp, "first argument");
      const Vector gc = centered(zg, "second argument");
      const double corr =
          dot(pc, gc) / std::sqrt(squared_norm(pc) * squared_norm(gc));
      return std::max(0.0, 1.0 - corr);
    }
  }
  throw ConfigError("distance: unknown kind");
}

Vector distance_grad(std::span<const double> zp, std::span<const double> zg,
                     DistanceKind kind) {
  check_pair(zp, zg);
  Vector g(zp.size());
  switch (kind) {
    case DistanceKind::kL2Sq:
      for (std::size_t i = 0; i < zp.size(); ++i) g[i] = 2.0 * (zp[i] - zg[i]);
      return g;
    case DistanceKind::kCosine: {
      // d/dp [p.g / (|p||g|)] = g / (|p||g|) - (p.g) p / (|p|^3 |g|)
      const double np = checked_norm(zp, "first argument");
      const double ng = checked_norm(zg, "second argument");
      const double cos = dot(zp, zg) / (np * ng);
      for (std::size_t i = 0; i < zp.size(); ++i) {
        g[i] = -(zg[i] / (np * ng) - cos * zp[i] / (np * np));
      }
      return g;
    }
    case DistanceKind::kPearson: {
      // Centering is a symmetric projection and both centered vectors already
      // lie in its range, so the cosine formula on centered vectors applies.
      const Vector pc = centered(zp, "first argument");
      const Vector gc = centered(zg, "second argument");
      const double np = std::sqrt(squared_norm(pc));
      const double ng = std::sqrt(squared_norm(gc));
      const double corr = dot(pc, gc) / (np * ng);
      for (std::size_t i = 0; i < zp.size(); ++i) {
        g[i] = -(gc[i] / (np * ng) - corr * pc[i] / (np * np));
      }
      return g;
    }
  }
  throw ConfigError("distance_grad: unknown kind");
}

}  // namespace fedoa
