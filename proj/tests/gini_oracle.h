/*
 * Copyright 2026 The Prunex Authors.
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

#ifndef PRUNEX_TESTS_GINI_ORACLE_H_
#define PRUNEX_TESTS_GINI_ORACLE_H_

#include <cmath>
#include <vector>

namespace prunex::test {

// O(d^2) mean absolute difference of |v| over twice the mean of |v|.
inline double PairwiseGini(const std::vector<double>& v) {
  const double d = static_cast<double>(v.size());
  double diff = 0.0, total = 0.0;
  for (double a : v) {
    total += std::abs(a);
    for (double b : v) diff += std::abs(std::abs(a) - std::abs(b));
  }
  return diff / (2.0 * d * total);
}

}  // namespace prunex::test

#endif  // PRUNEX_TESTS_GINI_ORACLE_H_
