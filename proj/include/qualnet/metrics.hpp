// Copyright (c) 2026 The QualNet Authors
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

#include <array>
#include <span>
#include <vector>

#include "json.hpp"

namespace qualnet {

// 1-based ranks; tied values share the mean of the ranks they span.
std::vector<double> average_ranks(std::span<const double> x);

// Pearson product-moment correlation. Throws ShapeError on a length mismatch
// and DataError for fewer than 3 points or a zero-variance input.
double pcc(std::span<const double> x, std::span<const double> y);

// Spearman rank-order correlation: Pearson correlation of average ranks.
double srocc(std::span<const double> x, std::span<const double> y);

double median(std::vector<double> values);

struct LinearFit {
  double slope = 0.0;
  double intercept = 0.0;
  double sse = 0.0;
};

LinearFit fit_linear(std::span<const double> x, std::span<const double> y);

// q(x) = b1 * (1/2 - 1 / (1 + exp(b2 * (x - b3)))) + b4 * x + b5
struct LogisticParams {
  std::array<double, 5> beta{};
  double sse = 0.0;
  int iterations = 0;

  double operator()(double x) const;
};

void to_json(nlohmann::json& j, const LogisticParams& p);

// Damped least squares (Levenberg-Marquardt). Starts from b4, b5 of the linear
// fit, b1 = range(mos), b3 = median(pred), b2 = 1 / std(pred); stops when the
// relative SSE change drops below 1e-10 or after 500 iterations. If that
// solution is worse than the linear fit, a second run starts from the linear
// model (b1 = 0), so the result never has a larger SSE than the line.
LogisticParams fit_logistic(std::span<const double> pred, std::span<const double> mos);

}  // namespace qualnet
