#include <cmath>
#include <random>

#include "doctest.h"
#include "shelflife/kernels.hpp"

namespace k = shelflife::kernels;

namespace {

k::AftDesign random_design(std::size_t n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> z(0.0, 1.0);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  k::AftDesign d;
  for (std::size_t i = 0; i < n; ++i) {
    const double v = z(rng), s = z(rng);
    d.push_back({1.0, v, s, v * s}, std::log(0.1 + 50.0 * u(rng)), u(rng) < 0.5);
  }
  return d;
}

}  // namespace

TEST_SUITE("kernels") {
  TEST_CASE("parallel AFT matches serial") {
    const auto d = random_design(20000, 3);
    const std::array<double, 4> th{2.0, 0.3, -0.2, 0.1};
    const auto a = k::weibull_aft_serial(d, th, -0.2);
    const auto b = k::weibull_aft_parallel(d, th, -0.2);
    CHECK(b.loglik == doctest::Approx(a.loglik).epsilon(1e-12));
    for (int i = 0; i < 5; ++i) {
      CHECK(b.grad[i] == doctest::Approx(a.grad[i]).epsilon(1e-10));
      for (int j = 0; j < 5; ++j) CHECK(b.hess[i][j] == doctest::Approx(a.hess[i][j]).epsilon(1e-10));
    }
  }

  TEST_CASE("AFT derivatives match finite differences") {
    const auto d = random_design(300, 5);
    std::array<double, 4> th{1.5, 0.2, 0.1, -0.05};
    const double lk = 0.3;
    const auto base = k::weibull_aft_serial(d, th, lk);
    const double h = 1e-6;
    for (int i = 0; i < 5; ++i) {
      auto tp = th, tm = th;
      double kp = lk, km = lk;
      if (i < 4) {
        tp[i] += h;
        tm[i] -= h;
      } else {
        kp += h;
        km -= h;
      }
      const auto p = k::weibull_aft_serial(d, tp, kp), m = k::weibull_aft_serial(d, tm, km);
      CHECK(base.grad[i] == doctest::Approx((p.loglik - m.loglik) / (2 * h)).epsilon(1e-5));
      for (int j = 0; j < 5; ++j) {
        CHECK(base.hess[i][j] == doctest::Approx((p.grad[j] - m.grad[j]) / (2 * h)).epsilon(1e-4));
      }
    }
  }

  TEST_CASE("pairwise distances") {
    std::mt19937_64 rng(1);
    std::normal_distribution<double> z;
    const std::size_t n = 157, dim = 5;
    std::vector<double> p(n * dim);
    for (double& x : p) x = z(rng);
    std::vector<double> a(n * n), b(n * n);
    k::pairwise_euclidean_serial(p, n, dim, a);
    k::pairwise_euclidean_parallel(p, n, dim, b);
    for (std::size_t i = 0; i < n * n; ++i) CHECK(a[i] == doctest::Approx(b[i]));
    double ref = 0;
    for (std::size_t c = 0; c < dim; ++c) ref += (p[3 * dim + c] - p[7 * dim + c]) * (p[3 * dim + c] - p[7 * dim + c]);
    CHECK(a[3 * n + 7] == doctest::Approx(std::sqrt(ref)));
    CHECK(a[5 * n + 5] == 0.0);
  }

  TEST_CASE("power sums") {
    const auto d = random_design(10000, 9);
    const auto a = k::weibull_power_sums_serial(d.log_t, 0.7, 1.5);
    const auto b = k::weibull_power_sums_parallel(d.log_t, 0.7, 1.5);
    CHECK(b.sum_pow == doctest::Approx(a.sum_pow).epsilon(1e-12));
    CHECK(b.sum_pow_log == doctest::Approx(a.sum_pow_log).epsilon(1e-12));
    CHECK(b.sum_pow_log2 == doctest::Approx(a.sum_pow_log2).epsilon(1e-12));
    double ref = 0;
    for (double lt : d.log_t) ref += std::exp(0.7 * (lt - 1.5));
    CHECK(a.sum_pow == doctest::Approx(ref).epsilon(1e-12));
  }
}
