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

#ifndef FEDOA_RNG_H_
#define FEDOA_RNG_H_

#include <cstdint>
#include <random>

namespace fedoa {

using Rng = std::mt19937_64;

// Named substreams of one experiment seed. Each consumer of randomness draws
// from its own stream so adding draws in one place never shifts another.
enum class Stream : std::uint32_t {
  kMechanism = 1,
  kBackbone = 2,
  kAdapterInit = 3,
  kEnvData = 4,
  kServer = 5,
  kClient = 6,
  kProbe = 7,
};

inline Rng make_stream(std::uint64_t seed, Stream stream,
                       std::uint64_t index = 0) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed),
                    static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(stream),
                    static_cast<std::uint32_t>(index),
                    static_cast<std::uint32_t>(index >> 32)};
  return Rng(seq);
}

}  // namespace fedoa

#endif  // FEDOA_RNG_H_
