#include <gtest/gtest.h>

#include "mulann/proxy.hpp"

using namespace mulann;

namespace {

Tensor gaussian(std::size_t n, std::size_t d, double shift, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> g(0.0, 1.0);
  Tensor t(Shape{n, d});
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t k = 0; k < d; ++k) t.values[i * d + k] = g(rng) + (k == 0 ? shift : 0.0);
  return t;
}

double mean_d(double shift, int reps) {
  double s = 0;
  for (int r = 0; r < reps; ++r) {
    ProxyOptions o;
    o.seed = static_cast<std::uint64_t>(r);
    s += proxy_divergence(gaussian(200, 4, 0.0, 10 + r), gaussian(200, 4, shift, 20 + r), o).divergence;
  }
  return s / reps;
}

TEST(Proxy, SameDistributionNearZero) {
  // Resampling oracle: two draws from one Gaussian are indistinguishable, so
  // the held-out error sits at 1/2 up to Monte Carlo noise.
  double worst = 0, mean = 0;
  for (int r = 0; r < 5; ++r) {
    ProxyOptions o;
    o.seed = static_cast<std::uint64_t>(r);
    const auto res = proxy_divergence(gaussian(300, 3, 0, 100 + r), gaussian(300, 3, 0, 200 + r), o);
    EXPECT_GE(res.divergence, 0.0);
    worst = std::max(worst, res.divergence);
    mean += res.divergence / 5;
  }
  EXPECT_LT(mean, 0.2);
  EXPECT_LT(worst, 0.4);
}

TEST(Proxy, SeparableSetsNearTwo) {
  const auto res = proxy_divergence(gaussian(200, 2, -10, 1), gaussian(200, 2, 10, 2));
  EXPECT_GT(res.divergence, 1.95);
  EXPECT_LE(res.divergence, 2.0);
  EXPECT_LT(res.heldout_error, 0.0125);
}

TEST(Proxy, MonotoneInShift) {
  const double shifts[] = {0.0, 0.5, 1.0, 2.0, 4.0};
  std::vector<double> d;
  for (double s : shifts) d.push_back(mean_d(s, 3));
  for (std::size_t i = 1; i < d.size(); ++i) EXPECT_GE(d[i], d[i - 1] - 0.05) << "shift " << shifts[i];
  EXPECT_GT(d.back(), d.front() + 1.0);
}

TEST(Proxy, Deterministic) {
  const Tensor a = gaussian(100, 3, 0, 1), b = gaussian(100, 3, 1, 2);
  EXPECT_EQ(proxy_divergence(a, b).divergence, proxy_divergence(a, b).divergence);
}

TEST(Proxy, RejectsSmallOrMismatchedSets) {
  EXPECT_THROW(proxy_divergence(gaussian(19, 2, 0, 1), gaussian(50, 2, 0, 2)), std::invalid_argument);
  EXPECT_THROW(proxy_divergence(gaussian(50, 2, 0, 1), gaussian(19, 2, 0, 2)), std::invalid_argument);
  EXPECT_NO_THROW(proxy_divergence(gaussian(20, 2, 0, 1), gaussian(20, 2, 0, 2)));
  EXPECT_THROW(proxy_divergence(gaussian(50, 2, 0, 1), gaussian(50, 3, 0, 2)), ShapeError);
}

}  // namespace
