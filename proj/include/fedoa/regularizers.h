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

#ifndef FEDOA_REGULARIZERS_H_
#define FEDOA_REGULARIZERS_H_

#include <span>
#include <string>
#include <string_view>

#include "fedoa/matrix.h"

namespace fedoa {

// Feature distance D(zp, zg) used by the personalization regularizer.
enum class DistanceKind {
  kL2Sq,     // ||zp - zg||^2
  kCosine,   // 1 - cos(zp, zg)
  kPearson,  // 1 - corr(zp, zg), population moments
};

std::string_view to_string(DistanceKind kind);
// Accepts "l2sq", "cosine", "pearson". Throws ConfigError otherwise.
DistanceKind parse_distance_kind(std::string_view name);

// Regularizer strength and distance. lambda == 0 disables the term.
struct RegSpec {
  DistanceKind kind = DistanceKind::kL2Sq;
  double lambda = 0.0;

  // Throws ConfigError when lambda is negative or non-finite.
  void validate() const;
  bool active() const { return lambda > 0.0; }
};

// Throws ShapeError on unequal or empty inputs and DegenerateInputError when
// cosine sees a zero vector or pearson sees a constant vector.
double distance(std::span<const double> zp, std::span<const double> zg,
                DistanceKind kind);

// Gradient of distance() with respect to zp, zg held constant.
Vector distance_grad(std::span<const double> zp, std::span<const double> zg,
                     DistanceKind kind);

}  // namespace fedoa

#endif  // FEDOA_REGULARIZERS_H_
