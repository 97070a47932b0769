// Copyright 2026 The SemID Lab Authors. All Rights Reserved.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "semid/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include "semid/errors.hpp"

namespace semid {

double clip_prediction(double p) { return std::clamp(p, kPredictionClip, 1.0 - kPredictionClip); }

double normalized_entropy(std::span<const double> predictions, std::span<const double> labels) {
  if (predictions.size() != labels.size()) throw DimensionError("NE: predictions and labels differ in length");
  const std::size_t n = labels.size();
  if (n == 0) throw MetricError("NE: empty example set");
  std::vector<double> terms(n);
  double positives = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double p = clip_prediction(predictions[i]);
    const double y = labels[i];
    positives += y;
    terms[i] = -(y * std::log(p) + (1.0 - y) * std::log(1.0 - p));
  }
  const double base = positives / static_cast<double>(n);
  if (base <= 0.0 || base >= 1.0) {
    throw MetricError("NE: undefined for a single-class set (" + std::to_string(n) + " examples)");
  }
  std::sort(terms.begin(), terms.end());
  double sum = 0.0;
  for (double t : terms) sum += t;
  const double entropy = -(base * std::log(base) + (1.0 - base) * std::log(1.0 - base));
  return (sum / static_cast<double>(n)) / entropy;
}

}  // namespace semid
