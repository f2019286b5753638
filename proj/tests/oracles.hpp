#pragma once

// Test-side reference implementations. Written from the textbook formulas,
// deliberately without touching the library's own helpers.

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>
#include <vector>

#include "shelflife/kg.hpp"
#include "shelflife/survival.hpp"

namespace oracle {

inline long double weibull_log_pdf(long double t, long double tau, long double k) {
  const long double z = t / tau;
  return std::log(k / tau) + (k - 1) * std::log(z) - std::pow(z, k);
}
inline long double weibull_log_sf(long double t, long double tau, long double k) { return -std::pow(t / tau, k); }

inline long double lognormal_log_pdf(long double t, long double mu, long double s) {
  const long double z = (std::log(t) - mu) / s;
  return -std::log(t * s * std::sqrt(2.0L * 3.14159265358979323846L)) - z * z / 2;
}
inline long double lognormal_log_sf(long double t, long double mu, long double s) {
  return std::log(0.5L * std::erfc((std::log(t) - mu) / (s * std::sqrt(2.0L))));
}

/// Censored log-likelihood, one record at a time.
inline double loglik(const shelflife::SurvivalData& d, const shelflife::ParamFit& f) {
  long double ll = 0;
  for (std::size_t i = 0; i < d.size(); ++i) {
    const long double t = d.t[i];
    const bool ev = d.event[i] != 0;
    switch (f.family) {
      case shelflife::Family::exponential:
        ll += ev ? weibull_log_pdf(t, f.tau, 1) : weibull_log_sf(t, f.tau, 1);
        break;
      case shelflife::Family::weibull:
        ll += ev ? weibull_log_pdf(t, f.tau, f.kappa) : weibull_log_sf(t, f.tau, f.kappa);
        break;
      case shelflife::Family::lognormal:
        ll += ev ? lognormal_log_pdf(t, f.mu, f.s) : lognormal_log_sf(t, f.mu, f.s);
        break;
    }
  }
  return static_cast<double>(ll);
}

/// Binary-gain DCG@k of a ranking.
inline double dcg(const std::vector<shelflife::EdgeId>& ranked, const std::set<shelflife::EdgeId>& rel, std::size_t k) {
  double s = 0;
  for (std::size_t i = 0; i < std::min(k, ranked.size()); ++i) {
    if (rel.contains(ranked[i])) s += 1.0 / std::log2(static_cast<double>(i) + 2.0);
  }
  return s;
}

/// NDCG@k with the ideal found by trying every ordering of the ranked list
/// (relevant items missing from the list still count toward the ideal, so
/// those are appended before permuting).
inline double ndcg_bruteforce(const std::vector<shelflife::EdgeId>& ranked, const std::set<shelflife::EdgeId>& rel,
                              std::size_t k) {
  std::vector<shelflife::EdgeId> pool = ranked;
  for (auto r : rel) {
    if (std::find(pool.begin(), pool.end(), r) == pool.end()) pool.push_back(r);
  }
  std::sort(pool.begin(), pool.end());
  double best = 0;
  do {
    best = std::max(best, dcg(pool, rel, k));
  } while (std::next_permutation(pool.begin(), pool.end()));
  return best > 0 ? dcg(ranked, rel, k) / best : 0.0;
}

inline double precision_at(const std::vector<shelflife::EdgeId>& ranked, const std::set<shelflife::EdgeId>& rel,
                           std::size_t k) {
  std::size_t hit = 0;
  for (std::size_t i = 0; i < std::min(k, ranked.size()); ++i) hit += rel.contains(ranked[i]);
  return static_cast<double>(hit) / static_cast<double>(k);
}

inline double reciprocal_rank(const std::vector<shelflife::EdgeId>& ranked, const std::set<shelflife::EdgeId>& rel) {
  for (std::size_t i = 0; i < ranked.size(); ++i) {
    if (rel.contains(ranked[i])) return 1.0 / static_cast<double>(i + 1);
  }
  return 0.0;
}

/// Pair-counting ARI straight from the definition.
inline double ari_pairs(const std::vector<int>& a, const std::vector<int>& b) {
  const std::size_t n = a.size();
  double both = 0, in_a = 0, in_b = 0, pairs = 0;
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i + 1; j < n; ++j) {
      const bool sa = a[i] == a[j], sb = b[i] == b[j];
      both += sa && sb;
      in_a += sa;
      in_b += sb;
      pairs += 1;
    }
  }
  const double expected = in_a * in_b / pairs;
  const double maxv = 0.5 * (in_a + in_b);
  return maxv == expected ? 1.0 : (both - expected) / (maxv - expected);
}

}  // namespace oracle
