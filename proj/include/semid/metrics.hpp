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

#pragma once

#include <span>

namespace semid {

inline constexpr double kPredictionClip = 1e-7;

// Mean cross-entropy of the predictions over the entropy of the label mean.
// Per-example terms are summed in sorted order, so the result does not depend
// on example order. Throws MetricError for empty or single-class input.
double normalized_entropy(std::span<const double> predictions, std::span<const double> labels);

double clip_prediction(double p);

}  // namespace semid
