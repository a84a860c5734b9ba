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

#include <gtest/gtest.h>

#include <cmath>
#include <random>
#include <vector>

#include "qualnet/errors.hpp"

namespace qualnet {
namespace {

// Rank by counting: 1 + (number below) + (ties - 1) / 2.
std::vector<double> brute_ranks(const std::vector<double>& x) {
  std::vector<double> r(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    double below = 0.0;
    double equal = 0.0;
    for (double v : x) {
      below += v < x[i] ? 1.0 : 0.0;
      equal += v == x[i] ? 1.0 : 0.0;
    }
    r[i] = 1.0 + below + (equal - 1.0) / 2.0;
  }
  return r;
}

double brute_pearson(const std::vector<double>& x, const std::vector<double>& y) {
  long double mx = 0, my = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    mx += x[i];
    my += y[i];
  }
  mx /= x.size();
  my /= y.size();
  long double sxy = 0, sxx = 0, syy = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxy += (x[i] - mx) * (y[i] - my);
    sxx += (x[i] - mx) * (x[i] - mx);
    syy += (y[i] - my) * (y[i] - my);
  }
  return static_cast<double>(sxy / std::sqrt(sxx * syy));
}

std::vector<double> tied_vector(std::mt19937_64& rng, std::size_t n) {
  std::uniform_int_distribution<int> coarse(0, 9);
  std::vector<double> v(n);
  for (auto& e : v) e = coarse(rng) * 0.5;
  return v;
}

TEST(Metrics, RanksMatchCountingOracle) {
  std::mt19937_64 rng(1);
  for (int trial = 0; trial < 100; ++trial) {
    const auto x = tied_vector(rng, 3 + trial % 40);
    const auto got = average_ranks(x);
    const auto want = brute_ranks(x);
    for (std::size_t i = 0; i < x.size(); ++i) EXPECT_EQ(got[i], want[i]);
  }
}

TEST(Metrics, CorrelationsMatchOracleOnRandomVectors) {
  std::mt19937_64 rng(2);
  std::normal_distribution<double> normal;
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t n = 3 + trial % 60;
    std::vector<double> x, y;
    if (trial % 2 == 0) {
      x = tied_vector(rng, n);
      y = tied_vector(rng, n);
    } else {
      for (std::size_t i = 0; i < n; ++i) {
        x.push_back(normal(rng));
        y.push_back(0.5 * x.back() + normal(rng));
      }
    }
    bool constant = true;
    for (std::size_t i = 1; i < n; ++i) constant = constant && x[i] == x[0] && y[i] == y[0];
    if (constant) continue;
    try {
      EXPECT_NEAR(pcc(x, y), brute_pearson(x, y), 1e-12);
      EXPECT_NEAR(srocc(x, y), brute_pearson(brute_ranks(x), brute_ranks(y)), 1e-12);
    } catch (const DataError&) {
      // one side constant; covered by the dedicated test below
    }
  }
}

TEST(Metrics, WorkedExamples) {
  EXPECT_NEAR(srocc(std::vector<double>{1, 2, 3, 4}, std::vector<double>{1, 3, 2, 4}), 0.8, 1e-12);
  EXPECT_NEAR(pcc(std::vector<double>{1, 2, 3}, std::vector<double>{1, 2, 4}), 0.98198050606, 1e-10);
  EXPECT_NEAR(srocc(std::vector<double>{1, 2, 3}, std::vector<double>{3, 2, 1}), -1.0, 1e-15);
}

TEST(Metrics, RejectsShortAndConstantInput) {
  const std::vector<double> two{1, 2};
  EXPECT_THROW(pcc(two, two), DataError);
  EXPECT_THROW(srocc(two, two), DataError);
  const std::vector<double> flat{5, 5, 5, 5};
  const std::vector<double> ramp{1, 2, 3, 4};
  EXPECT_THROW(pcc(flat, ramp), DataError);
  EXPECT_THROW(srocc(ramp, flat), DataError);
  EXPECT_THROW(pcc(ramp, std::vector<double>{1, 2, 3}), ShapeError);
  EXPECT_THROW(pcc(ramp, std::vector<double>{1, 2, NAN, 4}), DataError);
}

TEST(Metrics, InvarianceAndSymmetry) {
  std::mt19937_64 rng(3);
  std::normal_distribution<double> normal;
  for (int trial = 0; trial < 20; ++trial) {
    std::vector<double> x(30), y(30);
    for (std::size_t i = 0; i < x.size(); ++i) {
      x[i] = normal(rng);
      y[i] = x[i] + normal(rng);
    }
    std::vector<double> affine(x.size()), monotone(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) {
      affine[i] = 3.0 * x[i] - 7.0;
      monotone[i] = std::exp(x[i]);
    }
    EXPECT_NEAR(pcc(x, y), pcc(y, x), 1e-15);
    EXPECT_NEAR(srocc(x, y), srocc(y, x), 1e-15);
    EXPECT_NEAR(pcc(affine, y), pcc(x, y), 1e-12);
    EXPECT_NEAR(srocc(monotone, y), srocc(x, y), 1e-15);
    const double r = pcc(x, y);
    EXPECT_LE(std::abs(r), 1.0);
  }
}

TEST(Metrics, Median) {
  EXPECT_EQ(median({3, 1, 2}), 2.0);
  EXPECT_EQ(median({4, 1, 2, 3}), 2.5);
  EXPECT_THROW(median({}), DataError);
}

TEST(Logistic, FitsLinearDataExactly) {
  std::vector<double> x, y;
  for (int i = 0; i < 20; ++i) {
    x.push_back(i * 0.37);
    y.push_back(2.5 * x.back() - 1.0);
  }
  EXPECT_LE(fit_logistic(x, y).sse, 1e-8);
}

TEST(Logistic, NeverWorseThanBestLine) {
  std::mt19937_64 rng(4);
  std::normal_distribution<double> normal;
  std::uniform_real_distribution<double> uni(0.0, 100.0);
  for (int trial = 0; trial < 50; ++trial) {
    const std::size_t n = 6 + trial % 30;
    std::vector<double> x(n), y(n);
    for (std::size_t i = 0; i < n; ++i) {
      x[i] = uni(rng);
      const double shape = trial % 3 == 0 ? x[i] : (trial % 3 == 1 ? std::tanh((x[i] - 50) / 10) * 40 : x[i] * x[i] / 100);
      y[i] = shape + 5.0 * normal(rng);
    }
    const auto line = fit_linear(x, y);
    const auto fit = fit_logistic(x, y);
    EXPECT_LE(fit.sse, line.sse * (1.0 + 1e-9) + 1e-12) << "dataset " << trial;
  }
}

TEST(Logistic, NoiselessLogisticRemapsToUnitCorrelation) {
  LogisticParams truth;
  truth.beta = {60.0, 0.15, 40.0, 0.05, 30.0};
  std::vector<double> x, y;
  for (int i = 0; i < 40; ++i) {
    x.push_back(i * 2.0 + 1.0);
    y.push_back(truth(x.back()));
  }
  const auto fit = fit_logistic(x, y);
  std::vector<double> mapped;
  for (double v : x) mapped.push_back(fit(v));
  EXPECT_NEAR(pcc(mapped, y), 1.0, 1e-6);
  EXPECT_LE(fit.sse, 1e-6);
}

TEST(Logistic, NeedsSixDistinctPoints) {
  const std::vector<double> five{1, 2, 3, 4, 5};
  EXPECT_THROW(fit_logistic(five, five), DataError);
  const std::vector<double> flat{2, 2, 2, 2, 2, 2};
  const std::vector<double> ramp{1, 2, 3, 4, 5, 6};
  EXPECT_THROW(fit_logistic(flat, ramp), DataError);
}

}  // namespace
}  // namespace qualnet
