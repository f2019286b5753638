#include "shelflife/survival.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>

#include <Eigen/Dense>

namespace shelflife {

namespace {

constexpr double kLogSqrt2Pi = 0.91893853320467274178;

void require(bool ok, const char* what) {
  if (!ok) throw std::domain_error(what);
}

// log of the standard normal upper tail.
double log_norm_sf(double z) {
  if (z < 30.0) return std::log(0.5 * std::erfc(z / std::numbers::sqrt2));
  const double z2 = z * z;
  return -0.5 * z2 - std::log(z) - kLogSqrt2Pi + std::log1p(-1.0 / z2 + 3.0 / (z2 * z2));
}

// Inverse Mills ratio phi(z) / (1 - Phi(z)).
double mills(double z) {
  return std::exp(-0.5 * z * z - kLogSqrt2Pi - log_norm_sf(z));
}

}  // namespace

const char* to_string(Family family) {
  switch (family) {
    case Family::exponential: return "exponential";
    case Family::weibull: return "weibull";
    case Family::lognormal: return "lognormal";
  }
  return "weibull";
}

Family family_from_string(const std::string& s) {
  if (s == "exponential") return Family::exponential;
  if (s == "weibull") return Family::weibull;
  if (s == "lognormal") return Family::lognormal;
  throw ConfigError("unknown distribution family '" + s + "'");
}

double exponential_sf(double t, double tau) {
  require(t >= 0.0 && tau > 0.0, "exponential_sf: need t >= 0, tau > 0");
  return std::exp(-t / tau);
}

double exponential_pdf(double t, double tau) {
  require(t >= 0.0 && tau > 0.0, "exponential_pdf: need t >= 0, tau > 0");
  return std::exp(-t / tau) / tau;
}

double weibull_sf(double t, double tau, double kappa) {
  require(t >= 0.0 && tau > 0.0 && kappa > 0.0, "weibull_sf: need t >= 0, tau > 0, kappa > 0");
  return std::exp(-std::pow(t / tau, kappa));
}

double weibull_pdf(double t, double tau, double kappa) {
  require(t >= 0.0 && tau > 0.0 && kappa > 0.0, "weibull_pdf: need t >= 0, tau > 0, kappa > 0");
  if (t == 0.0) {
    if (kappa < 1.0) return std::numeric_limits<double>::infinity();
    return kappa == 1.0 ? 1.0 / tau : 0.0;
  }
  const double r = t / tau;
  return kappa / tau * std::pow(r, kappa - 1.0) * std::exp(-std::pow(r, kappa));
}

double weibull_hazard(double t, double tau, double kappa) {
  require(t >= 0.0 && tau > 0.0 && kappa > 0.0, "weibull_hazard: need t >= 0, tau > 0, kappa > 0");
  if (t == 0.0) {
    if (kappa < 1.0) return std::numeric_limits<double>::infinity();
    return kappa == 1.0 ? 1.0 / tau : 0.0;
  }
  return kappa / tau * std::pow(t / tau, kappa - 1.0);
}

double lognormal_sf(double t, double mu, double s) {
  require(t >= 0.0 && s > 0.0, "lognormal_sf: need t >= 0, s > 0");
  if (t == 0.0) return 1.0;
  return 0.5 * std::erfc((std::log(t) - mu) / (s * std::numbers::sqrt2));
}

double lognormal_pdf(double t, double mu, double s) {
  require(t >= 0.0 && s > 0.0, "lognormal_pdf: need t >= 0, s > 0");
  if (t == 0.0) return 0.0;
  const double z = (std::log(t) - mu) / s;
  return std::exp(-0.5 * z * z - kLogSqrt2Pi) / (s * t);
}

double lognormal_hazard(double t, double mu, double s) {
  require(t >= 0.0 && s > 0.0, "lognormal_hazard: need t >= 0, s > 0");
  if (t == 0.0) return 0.0;
  const double z = (std::log(t) - mu) / s;
  return mills(z) / (s * t);
}

std::size_t SurvivalData::n_events() const {
  return static_cast<std::size_t>(std::count(event.begin(), event.end(), std::uint8_t{1}));
}

SurvivalData survival_data(std::span<const LifetimeRecord> records, double min_duration) {
  SurvivalData d;
  d.t.reserve(records.size());
  d.event.reserve(records.size());
  for (const auto& r : records) d.push_back(std::max(r.duration, min_duration), r.event == Event::superseded);
  return d;
}

// ---------------------------------------------------------------------------
// No-covariate fits

namespace {

struct Prepared {
  std::vector<double> log_t;
  std::vector<std::uint8_t> event;
  double sum_t = 0.0;
  double sum_event_log_t = 0.0;
  std::size_t d = 0;
};

Prepared prepare(const SurvivalData& data, const FitOptions& options, Family family) {
  if (data.t.size() != data.event.size()) throw FitError("duration and event vectors differ in length");
  if (data.size() < std::max<std::size_t>(options.min_obs, 1)) {
    throw FitError("insufficient records: " + std::to_string(data.size()) + " < " +
                   std::to_string(options.min_obs));
  }
  Prepared p;
  p.log_t.reserve(data.size());
  p.event = data.event;
  for (std::size_t i = 0; i < data.size(); ++i) {
    const double t = data.t[i];
    if (!(t >= 0.0) || !std::isfinite(t)) throw FitError("durations must be finite and non-negative");
    const double tc = std::max(t, options.min_duration);
    p.log_t.push_back(std::log(tc));
    p.sum_t += tc;
    if (data.event[i]) {
      p.sum_event_log_t += std::log(tc);
      ++p.d;
    }
  }
  if (p.d == 0) {
    throw FitError(std::string("all censored: cannot fit ") + to_string(family) + " without events");
  }
  return p;
}

void finish(ParamFit& fit, std::size_t n) {
  fit.n_censored = n - fit.n_events;
  fit.aic = 2.0 * fit.n_params() - 2.0 * fit.loglik;
}

ParamFit fit_exponential(const Prepared& p) {
  ParamFit fit;
  fit.family = Family::exponential;
  fit.tau = p.sum_t / static_cast<double>(p.d);
  fit.n_events = p.d;
  fit.loglik = -static_cast<double>(p.d) * std::log(fit.tau) - p.sum_t / fit.tau;
  finish(fit, p.log_t.size());
  return fit;
}

// d loglik / d kappa for the profile likelihood, and its derivative.
struct ProfileEval {
  double score = 0.0;
  double slope = 0.0;
  double log_tau = 0.0;
  double loglik = 0.0;
};

ProfileEval weibull_profile(const Prepared& p, double shift, double kappa, bool prior) {
  const auto s = kernels::weibull_power_sums(p.log_t, kappa, shift);
  const double d = static_cast<double>(p.d);
  const double b = s.sum_pow_log / s.sum_pow;
  const double c = s.sum_pow_log2 / s.sum_pow;
  ProfileEval e;
  e.score = d / kappa - d * b + p.sum_event_log_t;
  e.slope = -d / (kappa * kappa) - d * (c - b * b);
  // tau^kappa = sum t^kappa / d
  const double log_a = kappa * shift + std::log(s.sum_pow);
  e.log_tau = (log_a - std::log(d)) / kappa;
  e.loglik = d * std::log(kappa) - d * (log_a - std::log(d)) + (kappa - 1.0) * p.sum_event_log_t - d;
  if (prior) {
    const double lk = std::log(kappa);
    e.score += -lk / kappa;
    e.slope += -(1.0 - lk) / (kappa * kappa);
  }
  return e;
}

ParamFit fit_weibull(const Prepared& p, const FitOptions& options) {
  const double shift = *std::max_element(p.log_t.begin(), p.log_t.end());
  double lo = kKappaMin, hi = kKappaMax;
  double kappa = 1.0;
  ParamFit fit;
  fit.family = Family::weibull;
  fit.converged = false;

  ProfileEval e = weibull_profile(p, shift, kappa, options.kappa_prior);
  const ProfileEval at_lo = weibull_profile(p, shift, lo, options.kappa_prior);
  const ProfileEval at_hi = weibull_profile(p, shift, hi, options.kappa_prior);
  if (at_lo.score <= 0.0) {
    kappa = lo;
    e = at_lo;
    fit.converged = true;
  } else if (at_hi.score >= 0.0) {
    kappa = hi;
    e = at_hi;
    fit.converged = true;
  }

  // Safeguarded Newton: the score is decreasing in kappa, keep a sign bracket.
  for (int it = 0; !fit.converged && it < options.max_iter; ++it) {
    fit.iterations = it + 1;
    if (e.score > 0.0) lo = kappa;
    else hi = kappa;
    double next = kappa - e.score / e.slope;
    if (!(e.slope < 0.0) || !(next > lo && next < hi)) next = 0.5 * (lo + hi);
    const double step = next - kappa;
    kappa = next;
    e = weibull_profile(p, shift, kappa, options.kappa_prior);
    if (std::abs(step) < options.tol || e.score == 0.0) fit.converged = true;
  }

  fit.kappa = kappa;
  fit.tau = std::exp(e.log_tau);
  fit.n_events = p.d;
  fit.loglik = e.loglik;
  finish(fit, p.log_t.size());
  return fit;
}

struct LnEval {
  double value = 0.0;
  double g_mu = 0.0, g_eta = 0.0;
  double h_mm = 0.0, h_me = 0.0, h_ee = 0.0;
};

LnEval lognormal_eval(const Prepared& p, double mu, double eta) {
  const double s = std::exp(eta);
  LnEval e;
  for (std::size_t i = 0; i < p.log_t.size(); ++i) {
    const double z = (p.log_t[i] - mu) / s;
    if (p.event[i]) {
      e.value += -p.log_t[i] - eta - kLogSqrt2Pi - 0.5 * z * z;
      e.g_mu += z / s;
      e.g_eta += -1.0 + z * z;
      e.h_mm += -1.0 / (s * s);
      e.h_me += -2.0 * z / s;
      e.h_ee += -2.0 * z * z;
    } else {
      const double lam = mills(z);
      const double dlam = lam * (lam - z);
      e.value += log_norm_sf(z);
      e.g_mu += lam / s;
      e.g_eta += lam * z;
      e.h_mm += -dlam / (s * s);
      e.h_me += -(dlam * z + lam) / s;
      e.h_ee += -z * (dlam * z + lam);
    }
  }
  return e;
}

ParamFit fit_lognormal(const Prepared& p, const FitOptions& options) {
  double m = 0.0;
  for (std::size_t i = 0; i < p.log_t.size(); ++i) {
    if (p.event[i]) m += p.log_t[i];
  }
  m /= static_cast<double>(p.d);
  double v = 0.0;
  for (std::size_t i = 0; i < p.log_t.size(); ++i) {
    if (p.event[i]) v += (p.log_t[i] - m) * (p.log_t[i] - m);
  }
  double sd = p.d > 1 ? std::sqrt(v / static_cast<double>(p.d - 1)) : 1.0;
  if (!(sd > 1e-6)) sd = 1.0;

  double mu = m, eta = std::log(sd);
  LnEval e = lognormal_eval(p, mu, eta);
  ParamFit fit;
  fit.family = Family::lognormal;
  fit.converged = false;
  const int max_iter = std::max(options.max_iter, 200);
  for (int it = 0; it < max_iter; ++it) {
    fit.iterations = it + 1;
    const double n = static_cast<double>(p.log_t.size());
    if (std::max(std::abs(e.g_mu), std::abs(e.g_eta)) / n < 1e-10) {
      fit.converged = true;
      break;
    }
    Eigen::Matrix2d a;
    a << -e.h_mm, -e.h_me, -e.h_me, -e.h_ee;
    Eigen::Vector2d g(e.g_mu, e.g_eta);
    Eigen::Vector2d dir;
    Eigen::LLT<Eigen::Matrix2d> llt(a);
    if (llt.info() == Eigen::Success) dir = llt.solve(g);
    else dir = g / (1.0 + g.norm());

    double step = 1.0;
    bool moved = false;
    for (int k = 0; k < 60; ++k, step *= 0.5) {
      const double nmu = mu + step * dir[0];
      const double neta = std::clamp(eta + step * dir[1], -20.0, 10.0);
      LnEval ne = lognormal_eval(p, nmu, neta);
      if (std::isfinite(ne.value) && ne.value >= e.value) {
        const double change = std::max(std::abs(nmu - mu), std::abs(neta - eta));
        mu = nmu;
        eta = neta;
        e = ne;
        moved = true;
        if (change < options.tol) fit.converged = true;
        break;
      }
    }
    if (!moved || fit.converged) {
      fit.converged = fit.converged || std::max(std::abs(e.g_mu), std::abs(e.g_eta)) / n < 1e-6;
      break;
    }
  }
  fit.mu = mu;
  fit.s = std::exp(eta);
  fit.n_events = p.d;
  fit.loglik = e.value;
  finish(fit, p.log_t.size());
  return fit;
}

}  // namespace

ParamFit fit_parametric(const SurvivalData& data, Family family, const FitOptions& options) {
  const Prepared p = prepare(data, options, family);
  switch (family) {
    case Family::exponential: return fit_exponential(p);
    case Family::weibull: return fit_weibull(p, options);
    case Family::lognormal: return fit_lognormal(p, options);
  }
  throw FitError("unknown family");
}

ParamFit fit_parametric(std::span<const LifetimeRecord> records, Family family, const FitOptions& options) {
  return fit_parametric(survival_data(records, options.min_duration), family, options);
}

double log_likelihood(const SurvivalData& data, const ParamFit& fit) {
  double ll = 0.0;
  for (std::size_t i = 0; i < data.size(); ++i) {
    const double t = data.t[i];
    const bool ev = data.event[i] != 0;
    switch (fit.family) {
      case Family::exponential:
        ll += ev ? -std::log(fit.tau) - t / fit.tau : -t / fit.tau;
        break;
      case Family::weibull: {
        const double w = std::pow(t / fit.tau, fit.kappa);
        ll += ev ? std::log(fit.kappa / fit.tau) + (fit.kappa - 1.0) * std::log(t / fit.tau) - w : -w;
        break;
      }
      case Family::lognormal: {
        const double z = (std::log(t) - fit.mu) / fit.s;
        ll += ev ? -std::log(t * fit.s) - kLogSqrt2Pi - 0.5 * z * z : log_norm_sf(z);
        break;
      }
    }
  }
  return ll;
}

AicComparison compare_aic(const SurvivalData& data, std::span<const Family> families, const FitOptions& options) {
  AicComparison out;
  for (Family f : families) {
    try {
      out.ranked.push_back(fit_parametric(data, f, options));
    } catch (const FitError& err) {
      out.failures.emplace_back(f, err.what());
    }
  }
  std::stable_sort(out.ranked.begin(), out.ranked.end(),
                   [](const ParamFit& a, const ParamFit& b) { return a.aic < b.aic; });
  return out;
}

HazardPeak lognormal_hazard_peak(double mu, double s, std::optional<double> reference_age) {
  require(s > 0.0, "lognormal_hazard_peak: need s > 0");
  // log h as a function of u = log t
  auto log_h = [&](double u) {
    const double z = (u - mu) / s;
    return -0.5 * z * z - kLogSqrt2Pi - log_norm_sf(z) - std::log(s) - u;
  };
  const double inv_phi = (std::sqrt(5.0) - 1.0) / 2.0;
  double a = std::log(1e-6), b = std::log(1e8);
  double c = b - inv_phi * (b - a);
  double d = a + inv_phi * (b - a);
  double fc = log_h(c), fd = log_h(d);
  while (b - a > 1e-10) {
    if (fc > fd) {
      b = d;
      d = c;
      fd = fc;
      c = b - inv_phi * (b - a);
      fc = log_h(c);
    } else {
      a = c;
      c = d;
      fc = fd;
      d = a + inv_phi * (b - a);
      fd = log_h(d);
    }
  }
  HazardPeak peak;
  const double u = 0.5 * (a + b);
  peak.t_peak = std::exp(u);
  peak.hazard_at_peak = std::exp(log_h(u));
  if (reference_age) {
    require(*reference_age > 0.0, "lognormal_hazard_peak: reference age must be positive");
    // d log h / d log t = -1 - z/s + lambda(z)/s
    const double z = (std::log(*reference_age) - mu) / s;
    peak.decreasing_at_reference = (-1.0 - z / s + mills(z) / s) < 0.0;
  }
  return peak;
}

// ---------------------------------------------------------------------------
// Decay surface

std::array<double, 4> CovariateTransform::row(double v, double sigma) const {
  const double zv = v_constant ? 0.0 : (v - v_mean) / v_sd;
  const double zs = s_constant ? 0.0 : (sigma - s_mean) / s_sd;
  return {1.0, zv, zs, zv * zs};
}

std::array<double, 4> CovariateTransform::to_raw(const std::array<double, 4>& t) const {
  const double t1 = v_constant ? 0.0 : t[1];
  const double t2 = s_constant ? 0.0 : t[2];
  const double t3 = (v_constant || s_constant) ? 0.0 : t[3];
  const double sv = v_constant ? 1.0 : v_sd;
  const double ss = s_constant ? 1.0 : s_sd;
  const double mv = v_constant ? 0.0 : v_mean;
  const double ms = s_constant ? 0.0 : s_mean;
  const double c3 = t3 / (sv * ss);
  return {
      t[0] - t1 * mv / sv - t2 * ms / ss + c3 * mv * ms,
      t1 / sv - c3 * ms,
      t2 / ss - c3 * mv,
      c3,
  };
}

CovariateTransform CovariateTransform::fit(std::span<const LifetimeRecord> records) {
  CovariateTransform tr;
  if (records.empty()) {
    tr.v_constant = tr.s_constant = true;
    return tr;
  }
  const double n = static_cast<double>(records.size());
  double sv = 0.0, ss = 0.0;
  for (const auto& r : records) {
    sv += r.velocity;
    ss += r.volatility;
  }
  tr.v_mean = sv / n;
  tr.s_mean = ss / n;
  double vv = 0.0, vs = 0.0;
  for (const auto& r : records) {
    vv += (r.velocity - tr.v_mean) * (r.velocity - tr.v_mean);
    vs += (r.volatility - tr.s_mean) * (r.volatility - tr.s_mean);
  }
  tr.v_sd = std::sqrt(vv / n);
  tr.s_sd = std::sqrt(vs / n);
  tr.v_constant = !(tr.v_sd > 1e-12 * (1.0 + std::abs(tr.v_mean)));
  tr.s_constant = !(tr.s_sd > 1e-12 * (1.0 + std::abs(tr.s_mean)));
  if (tr.v_constant) tr.v_sd = 1.0;
  if (tr.s_constant) tr.s_sd = 1.0;
  return tr;
}

double SurfaceFit::tau(double v, double sigma) const {
  const auto x = transform.row(v, sigma);
  return std::exp(theta_std[0] * x[0] + theta_std[1] * x[1] + theta_std[2] * x[2] + theta_std[3] * x[3]);
}

kernels::AftDesign aft_design(std::span<const LifetimeRecord> records, const CovariateTransform& transform,
                              double min_duration) {
  kernels::AftDesign design;
  design.reserve(records.size());
  for (const auto& r : records) {
    design.push_back(transform.row(r.velocity, r.volatility), std::log(std::max(r.duration, min_duration)),
                     r.event == Event::superseded);
  }
  return design;
}

namespace {

struct SurfaceProblem {
  const kernels::AftDesign* design = nullptr;
  std::array<bool, 5> active{};  // theta_0..3, log kappa
  std::array<double, 4> theta_anchor{};
  double lambda = 0.0;
  double eta_anchor = 0.0;
  double lambda_eta = 0.0;
  bool kappa_prior = false;
  int max_iter = 500;
  double grad_tol = 1e-6;
};

struct Objective {
  double value = 0.0;
  double loglik = 0.0;
  Eigen::Matrix<double, 5, 1> grad;
  Eigen::Matrix<double, 5, 5> hess;
};

Objective evaluate(const SurfaceProblem& pb, const std::array<double, 4>& theta, double eta) {
  const auto d = kernels::weibull_aft(*pb.design, theta, eta, true);
  Objective o;
  o.loglik = d.loglik;
  o.value = d.loglik;
  for (int a = 0; a < 5; ++a) {
    o.grad[a] = d.grad[a];
    for (int b = 0; b < 5; ++b) o.hess(a, b) = d.hess[a][b];
  }
  if (pb.lambda > 0.0) {
    for (int a = 0; a < 4; ++a) {
      const double diff = theta[a] - pb.theta_anchor[a];
      o.value -= pb.lambda * diff * diff;
      o.grad[a] -= 2.0 * pb.lambda * diff;
      o.hess(a, a) -= 2.0 * pb.lambda;
    }
  }
  if (pb.lambda_eta > 0.0) {
    const double diff = eta - pb.eta_anchor;
    o.value -= pb.lambda_eta * diff * diff;
    o.grad[4] -= 2.0 * pb.lambda_eta * diff;
    o.hess(4, 4) -= 2.0 * pb.lambda_eta;
  }
  if (pb.kappa_prior) {
    o.value -= 0.5 * eta * eta;
    o.grad[4] -= eta;
    o.hess(4, 4) -= 1.0;
  }
  return o;
}

struct SolveResult {
  std::array<double, 4> theta{};
  double eta = 0.0;
  Objective obj;
  bool converged = false;
  int iterations = 0;
};

// Damped Newton ascent with backtracking. Falls back to a scaled gradient
// step when the negated Hessian is not positive definite.
SolveResult maximize(const SurfaceProblem& pb, std::array<double, 4> theta, double eta) {
  const double eta_lo = std::log(kKappaMin), eta_hi = std::log(kKappaMax);
  const double n = static_cast<double>(std::max<std::size_t>(pb.design->size(), 1));
  eta = std::clamp(eta, eta_lo, eta_hi);
  SolveResult res;
  Objective cur = evaluate(pb, theta, eta);

  auto free_set = [&](const Objective& o) {
    std::array<bool, 5> f = pb.active;
    // A shape at its bound with the gradient pushing outward is held fixed.
    if (f[4] && ((eta <= eta_lo && o.grad[4] < 0.0) || (eta >= eta_hi && o.grad[4] > 0.0))) f[4] = false;
    return f;
  };

  for (int it = 0; it < pb.max_iter; ++it) {
    res.iterations = it + 1;
    const auto f = free_set(cur);
    std::vector<int> idx;
    for (int a = 0; a < 5; ++a) {
      if (f[a]) idx.push_back(a);
    }
    double gmax = 0.0;
    for (int a : idx) gmax = std::max(gmax, std::abs(cur.grad[a]));
    if (gmax / n < pb.grad_tol) {
      res.converged = true;
      break;
    }
    const int m = static_cast<int>(idx.size());
    Eigen::MatrixXd a(m, m);
    Eigen::VectorXd g(m);
    for (int i = 0; i < m; ++i) {
      g[i] = cur.grad[idx[i]];
      for (int j = 0; j < m; ++j) a(i, j) = -cur.hess(idx[i], idx[j]);
    }
    Eigen::VectorXd dir;
    Eigen::LLT<Eigen::MatrixXd> llt(a);
    if (llt.info() == Eigen::Success) {
      dir = llt.solve(g);
    } else {
      double mu = 1e-6 * (1.0 + a.diagonal().cwiseAbs().maxCoeff());
      for (int k = 0; k < 40; ++k, mu *= 10.0) {
        Eigen::MatrixXd shifted = a + mu * Eigen::MatrixXd::Identity(m, m);
        Eigen::LLT<Eigen::MatrixXd> l2(shifted);
        if (l2.info() == Eigen::Success) {
          dir = l2.solve(g);
          break;
        }
      }
      if (dir.size() == 0) dir = g / (1.0 + g.norm());
    }

    double step = 1.0;
    bool moved = false;
    for (int k = 0; k < 60; ++k, step *= 0.5) {
      std::array<double, 4> nt = theta;
      double ne = eta;
      for (int i = 0; i < m; ++i) {
        if (idx[i] < 4) nt[idx[i]] += step * dir[i];
        else ne = std::clamp(eta + step * dir[i], eta_lo, eta_hi);
      }
      Objective cand = evaluate(pb, nt, ne);
      if (std::isfinite(cand.value) && cand.value >= cur.value) {
        theta = nt;
        eta = ne;
        const bool stalled = cand.value - cur.value <= 1e-15 * (1.0 + std::abs(cur.value));
        cur = cand;
        moved = !stalled;
        break;
      }
    }
    if (!moved) {
      // No ascent available at machine precision; accept if near-stationary.
      double gm = 0.0;
      for (int i = 0; i < 5; ++i) {
        if (free_set(cur)[i]) gm = std::max(gm, std::abs(cur.grad[i]));
      }
      res.converged = gm / n < 1e3 * pb.grad_tol;
      break;
    }
  }
  res.theta = theta;
  res.eta = eta;
  res.obj = cur;
  return res;
}

}  // namespace

SurfaceFit fit_surface(std::span<const LifetimeRecord> records, const SurfaceOptions& options) {
  if (records.size() < options.min_records) {
    throw FitError("surface fit needs at least " + std::to_string(options.min_records) + " records, got " +
                   std::to_string(records.size()));
  }
  const SurvivalData data = survival_data(records, options.min_duration);
  const std::size_t events = data.n_events();
  if (events == 0) throw FitError("all censored: cannot fit the decay surface without events");
  if (events < options.min_events) {
    throw FitError("surface fit needs at least " + std::to_string(options.min_events) + " events, got " +
                   std::to_string(events));
  }

  FitOptions fo;
  fo.min_obs = 1;
  fo.min_duration = options.min_duration;
  fo.kappa_prior = options.kappa_prior;
  const ParamFit base = fit_parametric(data, Family::weibull, fo);

  SurfaceFit out;
  out.transform = CovariateTransform::fit(records);
  const auto design = aft_design(records, out.transform, options.min_duration);

  SurfaceProblem pb;
  pb.design = &design;
  pb.active = {true, !out.transform.v_constant, !out.transform.s_constant,
               !out.transform.v_constant && !out.transform.s_constant, true};
  pb.kappa_prior = options.kappa_prior;
  pb.max_iter = options.max_iter;
  pb.grad_tol = options.grad_tol;

  const double kappa0 = options.kappa_init.value_or(base.kappa);
  const auto res = maximize(pb, {std::log(base.tau), 0.0, 0.0, 0.0}, std::log(kappa0));

  out.theta_std = res.theta;
  out.theta_raw = out.transform.to_raw(res.theta);
  out.kappa = std::exp(res.eta);
  out.loglik = res.obj.loglik;
  out.objective = res.obj.value;
  out.n_records = records.size();
  out.n_events = events;
  out.converged = res.converged;
  out.iterations = res.iterations;
  return out;
}

SurfaceFit fit_surface_penalized(std::span<const LifetimeRecord> records, const PenalizedSpec& spec) {
  if (!(spec.lambda >= 0.0) || !(spec.lambda_kappa >= 0.0)) throw ConfigError("shrinkage weights must be >= 0");
  if (!(spec.kappa_parent > 0.0)) throw ConfigError("parent kappa must be positive");
  const auto design = aft_design(records, spec.transform, spec.min_duration);

  SurfaceProblem pb;
  pb.design = &design;
  const auto& tr = spec.transform;
  pb.active = {true, !tr.v_constant, !tr.s_constant, !tr.v_constant && !tr.s_constant, spec.free_kappa};
  pb.theta_anchor = spec.theta_parent;
  pb.lambda = spec.lambda;
  pb.eta_anchor = std::log(spec.kappa_parent);
  pb.lambda_eta = spec.free_kappa ? spec.lambda_kappa : 0.0;
  pb.max_iter = spec.max_iter;
  pb.grad_tol = spec.grad_tol;

  const auto res = maximize(pb, spec.theta_parent, std::log(spec.kappa_parent));
  SurfaceFit out;
  out.transform = tr;
  out.theta_std = res.theta;
  out.theta_raw = tr.to_raw(res.theta);
  out.kappa = std::exp(res.eta);
  out.loglik = res.obj.loglik;
  out.objective = res.obj.value;
  out.n_records = records.size();
  for (auto e : design.event) out.n_events += e;
  out.converged = res.converged;
  out.iterations = res.iterations;
  return out;
}

// ---------------------------------------------------------------------------
// Tau floor

double median_gap(std::vector<double> gaps, double fallback) {
  if (gaps.empty()) return fallback;
  const std::size_t mid = gaps.size() / 2;
  std::nth_element(gaps.begin(), gaps.begin() + static_cast<std::ptrdiff_t>(mid), gaps.end());
  const double hi = gaps[mid];
  if (gaps.size() % 2 == 1) return hi;
  const double lo = *std::max_element(gaps.begin(), gaps.begin() + static_cast<std::ptrdiff_t>(mid));
  return 0.5 * (lo + hi);
}

namespace {

void collect_gaps(const History& h, const std::string& context, std::vector<double>& out) {
  for (std::size_t i = 1; i < h.size(); ++i) {
    if (h[i - 1]->context == context && h[i]->context == context) out.push_back(h[i]->t - h[i - 1]->t);
  }
}

}  // namespace

double tau_floor(const EdgeStore& store, std::span<const std::string> predicates, const std::string& context,
                 double min_duration) {
  std::vector<double> gaps;
  for (const auto& [subject, predicate] : store.concepts()) {
    if (std::find(predicates.begin(), predicates.end(), predicate) == predicates.end()) continue;
    collect_gaps(store.concept_history(subject, predicate), context, gaps);
  }
  return median_gap(std::move(gaps), min_duration);
}

std::map<std::pair<int, std::string>, double> tau_floors(const EdgeStore& store,
                                                         const std::map<std::string, int>& cluster_of,
                                                         double min_duration) {
  std::map<std::pair<int, std::string>, std::vector<double>> gaps;
  for (const auto& [subject, predicate] : store.concepts()) {
    auto it = cluster_of.find(predicate);
    if (it == cluster_of.end()) continue;
    const History h = store.concept_history(subject, predicate);
    for (std::size_t i = 1; i < h.size(); ++i) {
      if (h[i - 1]->context != h[i]->context) continue;
      gaps[{it->second, h[i]->context}].push_back(h[i]->t - h[i - 1]->t);
    }
    if (h.size() == 1) gaps.try_emplace({it->second, h[0]->context});
  }
  std::map<std::pair<int, std::string>, double> out;
  for (auto& [key, g] : gaps) out[key] = median_gap(std::move(g), min_duration);
  return out;
}

nlohmann::ordered_json to_json(const ParamFit& fit) {
  nlohmann::ordered_json j;
  j["family"] = to_string(fit.family);
  nlohmann::ordered_json params;
  switch (fit.family) {
    case Family::exponential: params["tau"] = fit.tau; break;
    case Family::weibull:
      params["tau"] = fit.tau;
      params["kappa"] = fit.kappa;
      break;
    case Family::lognormal:
      params["mu"] = fit.mu;
      params["s"] = fit.s;
      break;
  }
  j["params"] = params;
  j["loglik"] = fit.loglik;
  j["aic"] = fit.aic;
  j["n_events"] = fit.n_events;
  j["n_censored"] = fit.n_censored;
  j["converged"] = fit.converged;
  return j;
}

nlohmann::ordered_json to_json(const SurfaceFit& fit) {
  nlohmann::ordered_json j;
  j["family"] = "weibull_aft";
  j["theta_raw"] = fit.theta_raw;
  j["theta_std"] = fit.theta_std;
  j["kappa"] = fit.kappa;
  j["loglik"] = fit.loglik;
  j["n_records"] = fit.n_records;
  j["n_events"] = fit.n_events;
  j["n_censored"] = fit.n_records - fit.n_events;
  j["converged"] = fit.converged;
  j["iterations"] = fit.iterations;
  j["transform"] = {{"v_mean", fit.transform.v_mean},   {"v_sd", fit.transform.v_sd},
                    {"s_mean", fit.transform.s_mean},   {"s_sd", fit.transform.s_sd},
                    {"v_constant", fit.transform.v_constant}, {"s_constant", fit.transform.s_constant}};
  return j;
}

}  // namespace shelflife
