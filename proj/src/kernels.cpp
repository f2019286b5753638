#include "shelflife/kernels.hpp"

#include <algorithm>
#include <cmath>

#include <omp.h>

namespace shelflife::kernels {

namespace {

// Fixed block size so the parallel reductions sum partials in the same
// order whatever the thread count.
constexpr std::size_t kBlock = 1024;

void accumulate_row(const AftDesign& design, std::size_t i, const std::array<double, 4>& theta,
                    double kappa, double log_kappa, bool with_hessian, AftDerivatives& acc) {
  const auto& x = design.x[i];
  const double eta = theta[0] * x[0] + theta[1] * x[1] + theta[2] * x[2] + theta[3] * x[3];
  const double z = kappa * (design.log_t[i] - eta);
  const double w = std::exp(z);
  const double delta = design.event[i] ? 1.0 : 0.0;

  // event: log kappa + z - log t - w ; censored: -w
  acc.loglik += delta * (log_kappa + z - design.log_t[i]) - w;

  const double gx = kappa * (w - delta);
  for (int a = 0; a < 4; ++a) acc.grad[a] += gx * x[a];
  acc.grad[4] += delta * (1.0 + z) - w * z;

  if (!with_hessian) return;
  const double hxx = -kappa * kappa * w;
  const double hxk = kappa * (w - delta + w * z);
  for (int a = 0; a < 4; ++a) {
    for (int b = a; b < 4; ++b) acc.hess[a][b] += hxx * x[a] * x[b];
    acc.hess[a][4] += hxk * x[a];
  }
  acc.hess[4][4] += delta * z - w * z * (z + 1.0);
}

void symmetrize(AftDerivatives& d) {
  for (int a = 0; a < 5; ++a) {
    for (int b = 0; b < a; ++b) d.hess[a][b] = d.hess[b][a];
  }
}

void merge(AftDerivatives& into, const AftDerivatives& part) {
  into.loglik += part.loglik;
  for (int a = 0; a < 5; ++a) {
    into.grad[a] += part.grad[a];
    for (int b = 0; b < 5; ++b) into.hess[a][b] += part.hess[a][b];
  }
}

}  // namespace

AftDerivatives weibull_aft_serial(const AftDesign& design, const std::array<double, 4>& theta,
                                  double log_kappa, bool with_hessian) {
  const double kappa = std::exp(log_kappa);
  AftDerivatives acc;
  for (std::size_t i = 0; i < design.size(); ++i) {
    accumulate_row(design, i, theta, kappa, log_kappa, with_hessian, acc);
  }
  symmetrize(acc);
  return acc;
}

AftDerivatives weibull_aft_parallel(const AftDesign& design, const std::array<double, 4>& theta,
                                    double log_kappa, bool with_hessian) {
  const double kappa = std::exp(log_kappa);
  const std::size_t n = design.size();
  const std::size_t blocks = (n + kBlock - 1) / kBlock;
  std::vector<AftDerivatives> partial(blocks);

#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t b = 0; b < static_cast<std::ptrdiff_t>(blocks); ++b) {
    const std::size_t lo = static_cast<std::size_t>(b) * kBlock;
    const std::size_t hi = std::min(n, lo + kBlock);
    AftDerivatives acc;
    for (std::size_t i = lo; i < hi; ++i) {
      accumulate_row(design, i, theta, kappa, log_kappa, with_hessian, acc);
    }
    partial[static_cast<std::size_t>(b)] = acc;
  }

  AftDerivatives total;
  for (const auto& p : partial) merge(total, p);
  symmetrize(total);
  return total;
}

AftDerivatives weibull_aft(const AftDesign& design, const std::array<double, 4>& theta,
                           double log_kappa, bool with_hessian) {
  return design.size() >= kParallelThreshold
             ? weibull_aft_parallel(design, theta, log_kappa, with_hessian)
             : weibull_aft_serial(design, theta, log_kappa, with_hessian);
}

void pairwise_euclidean_serial(std::span<const double> points, std::size_t n, std::size_t d,
                               std::span<double> out) {
  for (std::size_t i = 0; i < n; ++i) {
    out[i * n + i] = 0.0;
    for (std::size_t j = i + 1; j < n; ++j) {
      double acc = 0.0;
      for (std::size_t k = 0; k < d; ++k) {
        const double diff = points[i * d + k] - points[j * d + k];
        acc += diff * diff;
      }
      out[i * n + j] = out[j * n + i] = std::sqrt(acc);
    }
  }
}

void pairwise_euclidean_parallel(std::span<const double> points, std::size_t n, std::size_t d,
                                 std::span<double> out) {
#pragma omp parallel for schedule(dynamic, 16)
  for (std::ptrdiff_t ii = 0; ii < static_cast<std::ptrdiff_t>(n); ++ii) {
    const std::size_t i = static_cast<std::size_t>(ii);
    for (std::size_t j = 0; j < n; ++j) {
      double acc = 0.0;
      for (std::size_t k = 0; k < d; ++k) {
        const double diff = points[i * d + k] - points[j * d + k];
        acc += diff * diff;
      }
      out[i * n + j] = std::sqrt(acc);
    }
  }
}

WeibullSums weibull_power_sums_serial(std::span<const double> log_t, double kappa, double shift) {
  WeibullSums s;
  for (double lt : log_t) {
    const double p = std::exp(kappa * (lt - shift));
    s.sum_pow += p;
    s.sum_pow_log += p * lt;
    s.sum_pow_log2 += p * lt * lt;
  }
  return s;
}

WeibullSums weibull_power_sums_parallel(std::span<const double> log_t, double kappa, double shift) {
  const std::size_t n = log_t.size();
  const std::size_t blocks = (n + kBlock - 1) / kBlock;
  std::vector<WeibullSums> partial(blocks);
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t b = 0; b < static_cast<std::ptrdiff_t>(blocks); ++b) {
    const std::size_t lo = static_cast<std::size_t>(b) * kBlock;
    const std::size_t hi = std::min(n, lo + kBlock);
    partial[static_cast<std::size_t>(b)] = weibull_power_sums_serial(log_t.subspan(lo, hi - lo), kappa, shift);
  }
  WeibullSums total;
  for (const auto& p : partial) {
    total.sum_pow += p.sum_pow;
    total.sum_pow_log += p.sum_pow_log;
    total.sum_pow_log2 += p.sum_pow_log2;
  }
  return total;
}

WeibullSums weibull_power_sums(std::span<const double> log_t, double kappa, double shift) {
  return log_t.size() >= kParallelThreshold ? weibull_power_sums_parallel(log_t, kappa, shift)
                                            : weibull_power_sums_serial(log_t, kappa, shift);
}

}  // namespace shelflife::kernels
