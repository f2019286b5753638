#pragma once

// Data-parallel inner loops. Each kernel has a serial reference version
// and an OpenMP version; the serial one is kept for testing and for the
// kernel benchmark. Callers normally go through the dispatching wrapper,
// which picks the parallel path above `kParallelThreshold` rows.

#include <array>
#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

namespace shelflife::kernels {

inline constexpr std::size_t kParallelThreshold = 4096;

/// Survival rows for the Weibull accelerated-failure-time likelihood in
/// structure-of-arrays form. Row i has covariate vector x[i] (intercept
/// first), log duration log_t[i] and event flag event[i] (1 = observed
/// supersession, 0 = right-censored).
struct AftDesign {
  std::vector<std::array<double, 4>> x;
  std::vector<double> log_t;
  std::vector<std::uint8_t> event;

  std::size_t size() const { return log_t.size(); }
  void reserve(std::size_t n) {
    x.reserve(n);
    log_t.reserve(n);
    event.reserve(n);
  }
  void push_back(const std::array<double, 4>& xi, double log_duration, bool is_event) {
    x.push_back(xi);
    log_t.push_back(log_duration);
    event.push_back(is_event ? 1 : 0);
  }
};

/// Log-likelihood and derivatives in (theta_0..theta_3, log kappa).
struct AftDerivatives {
  double loglik = 0.0;
  std::array<double, 5> grad{};
  std::array<std::array<double, 5>, 5> hess{};
};

/// tau_i = exp(theta . x_i), kappa = exp(log_kappa).
AftDerivatives weibull_aft_serial(const AftDesign& design, const std::array<double, 4>& theta,
                                  double log_kappa, bool with_hessian = true);
AftDerivatives weibull_aft_parallel(const AftDesign& design, const std::array<double, 4>& theta,
                                    double log_kappa, bool with_hessian = true);
AftDerivatives weibull_aft(const AftDesign& design, const std::array<double, 4>& theta,
                           double log_kappa, bool with_hessian = true);

/// Dense Euclidean distance matrix of n row-major points of dimension d.
/// `out` must hold n * n values.
void pairwise_euclidean_serial(std::span<const double> points, std::size_t n, std::size_t d,
                               std::span<double> out);
void pairwise_euclidean_parallel(std::span<const double> points, std::size_t n, std::size_t d,
                                 std::span<double> out);

/// Weibull log-survival sum  -sum (t_i / tau)^kappa  over durations, and the
/// matching log-density sum over the event subset. Used by the profile
/// likelihood of the no-covariate fit.
struct WeibullSums {
  double sum_pow = 0.0;        // sum t_i^kappa (scaled by exp(-kappa * shift))
  double sum_pow_log = 0.0;    // sum t_i^kappa log t_i (same scaling)
  double sum_pow_log2 = 0.0;   // sum t_i^kappa (log t_i)^2 (same scaling)
};
WeibullSums weibull_power_sums_serial(std::span<const double> log_t, double kappa, double shift);
WeibullSums weibull_power_sums_parallel(std::span<const double> log_t, double kappa, double shift);
WeibullSums weibull_power_sums(std::span<const double> log_t, double kappa, double shift);

}  // namespace shelflife::kernels
