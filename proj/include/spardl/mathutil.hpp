/*
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#pragma once

#include <cstdint>

namespace spardl {

constexpr bool is_power_of_two(std::int64_t x) {
  return x > 0 && (x & (x - 1)) == 0;
}

/// Smallest t with 2^t >= x (x >= 1). ceil_log2(1) == 0.
constexpr int ceil_log2(std::int64_t x) {
  int t = 0;
  std::int64_t v = 1;
  while (v < x) {
    v <<= 1;
    ++t;
  }
  return t;
}

/// log2 of an exact power of two.
constexpr int exact_log2(std::int64_t x) {
  int t = 0;
  while (x > 1) {
    x >>= 1;
    ++t;
  }
  return t;
}

}  // namespace spardl
