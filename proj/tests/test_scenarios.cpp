// End-to-end checks on the default synthetic corpus (seed 42).

#include <algorithm>
#include <cmath>
#include <map>
#include <set>

#include "doctest.h"
#include "helpers.hpp"
#include "shelflife/clustering.hpp"
#include "shelflife/hierarchy.hpp"
#include "shelflife/signals.hpp"
#include "shelflife/survival.hpp"
#include "shelflife/synthgen.hpp"

using namespace shelflife;

namespace {

struct Corpus {
  Generated gen;
  std::vector<LifetimeRecord> records;
  PredicateSignalTable signals;
  ProfileSet profiles;
  ClusterModel density;
};

const Corpus& corpus() {
  static const Corpus c = [] {
    Corpus x;
    x.gen = generate(GenConfig::defaults());
    x.records = extract_lifetimes(x.gen.store);
    x.signals = predicate_signals(x.gen.store, x.records);
    x.profiles = build_profiles(x.signals, x.gen.store.window_or_throw().length(), 5);
    x.density = cluster_density(x.profiles);
    return x;
  }();
  return c;
}

int planted_id(const GroundTruth& t, const std::string& name) {
  const auto it = std::find(t.cluster_names.begin(), t.cluster_names.end(), name);
  REQUIRE(it != t.cluster_names.end());
  return static_cast<int>(it - t.cluster_names.begin());
}

std::vector<std::string> planted_predicates(const GroundTruth& t, const std::string& name) {
  const int k = planted_id(t, name);
  std::vector<std::string> out;
  for (const auto& [p, c] : t.predicate_cluster) {
    if (c == k) out.push_back(p);
  }
  return out;
}

}  // namespace

TEST_SUITE("scenarios") {
  TEST_CASE("default corpus size") {
    const auto& c = corpus();
    CHECK(c.gen.store.size() >= 50000);
    CHECK(c.gen.store.size() <= 250000);
    CHECK(c.gen.truth.predicate_cluster.size() == 20);
    CHECK(c.gen.truth.n_entities >= 205);
    CHECK(c.gen.truth.n_entities <= 325);
    CHECK(c.profiles.profiles.size() == 20);

    testing::TempDir dir("scenario");
    dump(c.gen, dir.file("edges.jsonl"), dir.file("truth.json"));
    CHECK(load_edges(dir.file("edges.jsonl")).size() == c.gen.truth.n_edges);
  }

  TEST_CASE("default corpus signal levels") {
    const auto& c = corpus();
    for (const auto& p : planted_predicates(c.gen.truth, "volatile_measurements")) {
      CAPTURE(p);
      CHECK(c.signals.signals.at(p).velocity >= 0.4);
      CHECK(c.signals.signals.at(p).velocity <= 1.2);
    }
    for (const auto& p : planted_predicates(c.gen.truth, "permanent_facts")) {
      CAPTURE(p);
      CHECK(c.signals.signals.at(p).velocity == doctest::Approx(0.01).epsilon(0.5));
      CHECK(c.signals.signals.at(p).volatility == doctest::Approx(0.02).epsilon(0.5));
    }
  }

  TEST_CASE("supersession rate follows the planted event log") {
    const auto& c = corpus();
    std::size_t sup = 0, cens = 0;
    for (const auto& r : c.records) {
      sup += r.event == Event::superseded;
      cens += r.event == Event::censored;
    }
    const double planted = static_cast<double>(c.gen.truth.supersessions.size());
    const double planted_rate = planted / (planted + static_cast<double>(c.gen.truth.concepts.size()));
    const double rate = static_cast<double>(sup) / static_cast<double>(sup + cens);
    CHECK(rate == doctest::Approx(planted_rate).epsilon(0.1));
  }

  TEST_CASE("default corpus clusters") {
    const auto& c = corpus();
    const auto [a, b] = aligned_labels(c.density.labels, c.gen.truth.predicate_cluster);
    CHECK(c.density.n_clusters() == 4);
    CHECK(adjusted_rand_index(a, b) == doctest::Approx(1.0));
    CHECK(normalized_mutual_info(a, b) == doctest::Approx(1.0));

    const auto dp = cluster_dpmixture(c.profiles);
    const auto [x, y] = aligned_labels(dp.labels, c.gen.truth.predicate_cluster);
    CHECK(dp.n_clusters() >= 4);
    CHECK(dp.n_clusters() <= 10);
    CHECK(adjusted_rand_index(x, y) >= 0.8);
  }

  TEST_CASE("default corpus decay fits") {
    const auto& c = corpus();
    const auto assignment = effective_assignment(c.density, c.profiles);
    const auto model = fit_hierarchy(c.gen.store, c.records, c.density, assignment);
    for (const auto& [k, node] : model.clusters) {
      CAPTURE(k);
      CHECK(node.theta[2] < 0.0);
    }
    const std::string perm = planted_predicates(c.gen.truth, "permanent_facts").front();
    const int k = assignment.at(perm);
    std::vector<LifetimeRecord> rs;
    double v = 0, s = 0;
    for (const auto& r : c.records) {
      if (assignment.at(r.predicate) != k) continue;
      rs.push_back(r);
      v += r.velocity;
      s += r.volatility;
    }
    v /= static_cast<double>(rs.size());
    s /= static_cast<double>(rs.size());
    CHECK(effective_tau(model.clusters.at(k), v, s) > 800.0);
    CHECK(fit_parametric(survival_data(rs), Family::weibull).kappa < 1.0);
  }

  TEST_CASE("held-out predicate cold-starts into its planted cluster") {
    auto cfg = testing::small_config(42, 20);
    cfg.predicates_per_cluster = 6;
    const auto g = generate(cfg);
    const auto recs = extract_lifetimes(g.store);
    const auto sig = predicate_signals(g.store, recs);
    const double span = g.store.window_or_throw().length();
    for (std::size_t i = 0; i < cfg.clusters.size(); ++i) {
      // drop one predicate per planted cluster in turn
      std::string held;
      for (const auto& [p, k] : g.truth.predicate_cluster) {
        if (k == static_cast<int>(i)) held = p;
      }
      PredicateSignalTable rest = sig;
      rest.signals.erase(held);
      const auto profiles = build_profiles(rest, span, 5);
      const auto model = cluster_density(profiles);
      REQUIRE(model.n_clusters() == cfg.clusters.size());
      // fitted id of the planted cluster, by majority over the kept predicates
      std::map<int, int> votes;
      for (const auto& [p, k] : model.labels) {
        if (g.truth.predicate_cluster.at(p) == static_cast<int>(i)) votes[k]++;
      }
      const int want = std::max_element(votes.begin(), votes.end(), [](auto& l, auto& r) {
                         return l.second < r.second;
                       })->first;
      CAPTURE(held);
      CHECK(assign_cold_start(model, raw_features(sig.signals.at(held), span)) == want);
    }
  }
}
