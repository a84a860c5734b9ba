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

#include "qualnet/metrics.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include "qualnet/errors.hpp"

namespace qualnet {

namespace {

constexpr int kMaxIterations = 500;
constexpr double kRelativeTolerance = 1e-10;

void check_pair(std::span<const double> x, std::span<const double> y, std::size_t min_len) {
  if (x.size() != y.size()) {
    throw ShapeError("metric inputs differ in length: " + std::to_string(x.size()) + " vs " +
                     std::to_string(y.size()));
  }
  if (x.size() < min_len) {
    throw DataError("need at least " + std::to_string(min_len) + " points, got " +
                    std::to_string(x.size()));
  }
  for (std::size_t i = 0; i < x.size(); ++i) {
    if (!std::isfinite(x[i]) || !std::isfinite(y[i])) throw DataError("non-finite metric input");
  }
}

// Stable logistic 1 / (1 + exp(z)).
double inv_one_plus_exp(double z) {
  if (z > 0.0) {
    const double e = std::exp(-z);
    return e / (1.0 + e);
  }
  return 1.0 / (1.0 + std::exp(z));
}

double sse_of(const std::array<double, 5>& b, std::span<const double> x,
              std::span<const double> y) {
  LogisticParams p;
  p.beta = b;
  double sse = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double r = p(x[i]) - y[i];
    sse += r * r;
  }
  return sse;
}

LogisticParams levenberg_marquardt(std::array<double, 5> beta, std::span<const double> x,
                                   std::span<const double> y) {
  using Mat5 = Eigen::Matrix<double, 5, 5>;
  using Vec5 = Eigen::Matrix<double, 5, 1>;
  double sse = sse_of(beta, x, y);
  double mu = 1e-3;
  int it = 0;
  for (; it < kMaxIterations; ++it) {
    Mat5 jtj = Mat5::Zero();
    Vec5 jtr = Vec5::Zero();
    for (std::size_t i = 0; i < x.size(); ++i) {
      const double d = x[i] - beta[2];
      const double s = inv_one_plus_exp(beta[1] * d);
      const double ds = s * (1.0 - s);
      Vec5 j;
      j << 0.5 - s, beta[0] * ds * d, -beta[0] * ds * beta[1], x[i], 1.0;
      const double r = beta[0] * (0.5 - s) + beta[3] * x[i] + beta[4] - y[i];
      jtj.noalias() += j * j.transpose();
      jtr.noalias() += j * r;
    }
    bool accepted = false;
    double new_sse = sse;
    while (mu < 1e16) {
      Mat5 a = jtj;
      for (int k = 0; k < 5; ++k) a(k, k) += mu * std::max(jtj(k, k), 1e-12);
      const Vec5 step = a.ldlt().solve(-jtr);
      std::array<double, 5> trial = beta;
      for (int k = 0; k < 5; ++k) trial[static_cast<std::size_t>(k)] += step(k);
      new_sse = sse_of(trial, x, y);
      if (std::isfinite(new_sse) && new_sse <= sse) {
        beta = trial;
        mu = std::max(mu / 3.0, 1e-12);
        accepted = true;
        break;
      }
      mu *= 4.0;
    }
    if (!accepted) break;
    const double change = (sse - new_sse) / std::max(sse, 1e-300);
    sse = new_sse;
    if (change < kRelativeTolerance) {
      ++it;
      break;
    }
  }
  LogisticParams out;
  out.beta = beta;
  out.sse = sse;
  out.iterations = it;
  return out;
}

}  // namespace

std::vector<double> average_ranks(std::span<const double> x) {
  std::vector<std::size_t> order(x.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](auto a, auto b) { return x[a] < x[b]; });
  std::vector<double> ranks(x.size());
  std::size_t i = 0;
  while (i < order.size()) {
    std::size_t j = i + 1;
    while (j < order.size() && x[order[j]] == x[order[i]]) ++j;
    // Positions i..j-1 hold ties; their 1-based ranks average to (i + j + 1) / 2.
    const double rank = 0.5 * static_cast<double>(i + j + 1);
    for (std::size_t k = i; k < j; ++k) ranks[order[k]] = rank;
    i = j;
  }
  return ranks;
}

double pcc(std::span<const double> x, std::span<const double> y) {
  check_pair(x, y, 3);
  const double n = static_cast<double>(x.size());
  const double mx = std::accumulate(x.begin(), x.end(), 0.0) / n;
  const double my = std::accumulate(y.begin(), y.end(), 0.0) / n;
  double sxy = 0.0;
  double sxx = 0.0;
  double syy = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double dx = x[i] - mx;
    const double dy = y[i] - my;
    sxy += dx * dy;
    sxx += dx * dx;
    syy += dy * dy;
  }
  if (sxx == 0.0 || syy == 0.0) throw DataError("correlation of a constant vector is undefined");
  return std::clamp(sxy / std::sqrt(sxx * syy), -1.0, 1.0);
}

double srocc(std::span<const double> x, std::span<const double> y) {
  check_pair(x, y, 3);
  const auto rx = average_ranks(x);
  const auto ry = average_ranks(y);
  return pcc(rx, ry);
}

double median(std::vector<double> values) {
  if (values.empty()) throw DataError("median of an empty list");
  std::sort(values.begin(), values.end());
  const std::size_t n = values.size();
  return n % 2 == 1 ? values[n / 2] : 0.5 * (values[n / 2 - 1] + values[n / 2]);
}

LinearFit fit_linear(std::span<const double> x, std::span<const double> y) {
  check_pair(x, y, 2);
  const double n = static_cast<double>(x.size());
  const double mx = std::accumulate(x.begin(), x.end(), 0.0) / n;
  const double my = std::accumulate(y.begin(), y.end(), 0.0) / n;
  double sxy = 0.0;
  double sxx = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxy += (x[i] - mx) * (y[i] - my);
    sxx += (x[i] - mx) * (x[i] - mx);
  }
  LinearFit f;
  f.slope = sxx > 0.0 ? sxy / sxx : 0.0;
  f.intercept = my - f.slope * mx;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double r = f.slope * x[i] + f.intercept - y[i];
    f.sse += r * r;
  }
  return f;
}

double LogisticParams::operator()(double x) const {
  return beta[0] * (0.5 - inv_one_plus_exp(beta[1] * (x - beta[2]))) + beta[3] * x + beta[4];
}

void to_json(nlohmann::json& j, const LogisticParams& p) {
  j = nlohmann::json{{"beta", p.beta}, {"sse", p.sse}, {"iterations", p.iterations}};
}

LogisticParams fit_logistic(std::span<const double> pred, std::span<const double> mos) {
  check_pair(pred, mos, 6);
  const auto line = fit_linear(pred, mos);
  const double n = static_cast<double>(pred.size());
  const double mean = std::accumulate(pred.begin(), pred.end(), 0.0) / n;
  double var = 0.0;
  for (double v : pred) var += (v - mean) * (v - mean);
  const double sd = std::sqrt(var / n);
  if (!(sd > 0.0)) throw DataError("cannot fit a logistic to constant predictions");
  const auto [lo, hi] = std::minmax_element(mos.begin(), mos.end());
  const double b2 = 1.0 / sd;
  const double b3 = median(std::vector<double>(pred.begin(), pred.end()));

  auto best = levenberg_marquardt({*hi - *lo, b2, b3, line.slope, line.intercept}, pred, mos);
  if (best.sse > line.sse) {
    auto from_line = levenberg_marquardt({0.0, b2, b3, line.slope, line.intercept}, pred, mos);
    if (from_line.sse < best.sse) best = from_line;
  }
  for (double b : best.beta) {
    if (!std::isfinite(b)) throw DataError("logistic fit diverged");
  }
  return best;
}

}  // namespace qualnet
