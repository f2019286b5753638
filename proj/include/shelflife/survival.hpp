#pragma once

// Censored parametric survival fits, AIC comparison, log-normal hazard
// analysis, the Weibull AFT decay surface and the tau floor.

#include <array>
#include <map>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "json.hpp"
#include "shelflife/kernels.hpp"
#include "shelflife/signals.hpp"

namespace shelflife {

class FitError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline constexpr double kKappaMin = 0.05;
inline constexpr double kKappaMax = 20.0;

enum class Family { exponential, weibull, lognormal };
const char* to_string(Family family);
Family family_from_string(const std::string& s);
inline constexpr std::array<Family, 3> kAllFamilies{Family::exponential, Family::weibull, Family::lognormal};

// Distribution functions. All throw std::domain_error for t < 0 or
// non-positive scale/shape parameters.
double exponential_sf(double t, double tau);
double exponential_pdf(double t, double tau);
double weibull_sf(double t, double tau, double kappa);
double weibull_pdf(double t, double tau, double kappa);
double weibull_hazard(double t, double tau, double kappa);
double lognormal_sf(double t, double mu, double s);
double lognormal_pdf(double t, double mu, double s);
double lognormal_hazard(double t, double mu, double s);

/// Durations with event flags (1 = supersession, 0 = right-censored).
/// Reinforcement and terminal-censored records both enter as censored.
struct SurvivalData {
  std::vector<double> t;
  std::vector<std::uint8_t> event;

  std::size_t size() const { return t.size(); }
  std::size_t n_events() const;
  void push_back(double duration, bool is_event) {
    t.push_back(duration);
    event.push_back(is_event ? 1 : 0);
  }
};

SurvivalData survival_data(std::span<const LifetimeRecord> records, double min_duration = 1e-3);

struct ParamFit {
  Family family = Family::weibull;
  double tau = 0.0;    // exponential, weibull
  double kappa = 1.0;  // weibull
  double mu = 0.0;     // lognormal
  double s = 1.0;      // lognormal
  double loglik = 0.0;
  std::size_t n_events = 0;
  std::size_t n_censored = 0;
  double aic = 0.0;
  bool converged = true;
  int iterations = 0;

  int n_params() const { return family == Family::exponential ? 1 : 2; }
};

struct FitOptions {
  std::size_t min_obs = 5;
  double min_duration = 1e-3;
  int max_iter = 100;
  double tol = 1e-8;
  // Adds -(log kappa)^2 / 2 to the Weibull objective.
  bool kappa_prior = false;
};

/// Censored maximum-likelihood fit. Throws FitError when there are fewer
/// than min_obs records or, for two-parameter families, no events.
ParamFit fit_parametric(const SurvivalData& data, Family family, const FitOptions& options = {});
ParamFit fit_parametric(std::span<const LifetimeRecord> records, Family family, const FitOptions& options = {});

/// Censored log-likelihood of `data` under the fitted parameters.
double log_likelihood(const SurvivalData& data, const ParamFit& fit);

struct AicComparison {
  std::vector<ParamFit> ranked;                            // ascending AIC
  std::vector<std::pair<Family, std::string>> failures;    // families that could not be fitted
};

AicComparison compare_aic(const SurvivalData& data, std::span<const Family> families = kAllFamilies,
                          const FitOptions& options = {});

struct HazardPeak {
  double t_peak = 0.0;
  double hazard_at_peak = 0.0;
  std::optional<bool> decreasing_at_reference;
};

/// Golden-section search for argmax of the log-normal hazard over log t in
/// [1e-6, 1e8] days.
HazardPeak lognormal_hazard_peak(double mu, double s, std::optional<double> reference_age = std::nullopt);

/// Standardization of the two surface covariates. The interaction column
/// is the product of the standardized velocity and volatility.
struct CovariateTransform {
  double v_mean = 0.0, v_sd = 1.0;
  double s_mean = 0.0, s_sd = 1.0;
  bool v_constant = false, s_constant = false;

  std::array<double, 4> row(double v, double sigma) const;
  /// Standardized coefficients to raw (1, v, sigma, v*sigma) coefficients.
  std::array<double, 4> to_raw(const std::array<double, 4>& theta_std) const;
  static CovariateTransform fit(std::span<const LifetimeRecord> records);
};

struct SurfaceFit {
  std::array<double, 4> theta_std{};  // standardized covariates
  std::array<double, 4> theta_raw{};  // raw (1, v, sigma, v*sigma)
  double kappa = 1.0;
  double loglik = 0.0;
  double objective = 0.0;  // loglik minus penalties
  std::size_t n_records = 0;
  std::size_t n_events = 0;
  bool converged = false;
  int iterations = 0;
  CovariateTransform transform;

  double tau(double v, double sigma) const;
};

struct SurfaceOptions {
  std::size_t min_records = 10;
  std::size_t min_events = 2;
  int max_iter = 500;
  double grad_tol = 1e-6;  // on the per-record mean gradient
  double min_duration = 1e-3;
  std::optional<double> kappa_init;
  bool kappa_prior = false;
};

/// Weibull AFT fit of tau = exp(theta . (1, v, sigma, v*sigma)) and a
/// shared shape kappa, with covariates standardized internally.
SurfaceFit fit_surface(std::span<const LifetimeRecord> records, const SurfaceOptions& options = {});

/// Shrinkage fit used below the top level. Maximizes
///   loglik(theta, kappa) - lambda * |theta - theta_parent|^2
///                        - lambda_kappa * (log kappa - log kappa_parent)^2
/// in the parent's standardized coordinates. kappa stays fixed at
/// kappa_parent unless `free_kappa` is set.
struct PenalizedSpec {
  CovariateTransform transform;
  std::array<double, 4> theta_parent{};
  double kappa_parent = 1.0;
  double lambda = 1.0;
  bool free_kappa = false;
  double lambda_kappa = 1.0;
  int max_iter = 500;
  double grad_tol = 1e-6;
  double min_duration = 1e-3;
};

SurfaceFit fit_surface_penalized(std::span<const LifetimeRecord> records, const PenalizedSpec& spec);

/// Builds the AFT design in the given standardized coordinates.
kernels::AftDesign aft_design(std::span<const LifetimeRecord> records, const CovariateTransform& transform,
                              double min_duration = 1e-3);

/// Median of the gaps, or `fallback` when there are none.
double median_gap(std::vector<double> gaps, double fallback);

/// Median consecutive-observation gap pooled over concepts whose predicate
/// is in `predicates`, restricted to edges with the given context.
double tau_floor(const EdgeStore& store, std::span<const std::string> predicates, const std::string& context,
                 double min_duration = 1e-3);

/// All (cluster, context) floors in one pass. `cluster_of` maps predicate
/// to cluster id; predicates absent from the map are ignored.
std::map<std::pair<int, std::string>, double> tau_floors(const EdgeStore& store,
                                                         const std::map<std::string, int>& cluster_of,
                                                         double min_duration = 1e-3);

nlohmann::ordered_json to_json(const ParamFit& fit);
nlohmann::ordered_json to_json(const SurfaceFit& fit);

}  // namespace shelflife
