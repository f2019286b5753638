#include <cmath>

#include "doctest.h"
#include "helpers.hpp"
#include "shelflife/hierarchy.hpp"
#include "shelflife/signals.hpp"

using namespace shelflife;

namespace {

struct Fitted {
  Generated g;
  std::vector<LifetimeRecord> recs;
  ProfileSet prof;
  ClusterModel clusters;
  std::map<std::string, int> assignment;
};

const Fitted& fitted() {
  static const Fitted f = [] {
    Fitted x;
    x.g = generate(testing::small_config(5, 4));
    x.recs = extract_lifetimes(x.g.store);
    x.prof = build_profiles(predicate_signals(x.g.store, x.recs), x.g.store.window_or_throw().length(), 5,
                            x.g.truth.predicate_embeddings);
    x.clusters = cluster_density(x.prof);
    x.assignment = effective_assignment(x.clusters, x.prof);
    return x;
  }();
  return f;
}

double dist2(const DecayParams& a, const DecayParams& b) {
  double d = 0;
  for (int i = 0; i < 4; ++i) d += std::pow(a.theta_std[i] - b.theta_std[i], 2);
  return d;
}

}  // namespace

TEST_SUITE("hierarchy") {
  TEST_CASE("three levels with parents and floors") {
    const auto& f = fitted();
    const auto m = fit_hierarchy(f.g.store, f.recs, f.clusters, f.assignment);
    CHECK(m.clusters.size() == f.clusters.n_clusters());
    CHECK_FALSE(m.contexts.empty());
    CHECK_FALSE(m.entities.empty());
    for (const auto& [k, c] : m.clusters) {
      CHECK(c.tau_floor == 0.0);
      CHECK(c.kappa >= kKappaMin);
      CHECK(c.kappa <= kKappaMax);
    }
    for (const auto& [key, c] : m.contexts) {
      REQUIRE(c.parent.has_value());
      CHECK(c.parent->level == Level::cluster);
      CHECK(c.parent->cluster == key.first);
      CHECK(c.kappa == doctest::Approx(m.clusters.at(key.first).kappa));
      CHECK(c.tau_floor > 0.0);
    }
    for (const auto& [key, e] : m.entities) {
      REQUIRE(e.parent.has_value());
      CHECK(e.parent->level == Level::context);
      const auto& parent = m.contexts.at({std::get<0>(key), std::get<1>(key)});
      if (e.n_records < m.options.min_entity_records) {
        CHECK(e.inherited);
        CHECK(e.theta_std == parent.theta_std);
      }
    }
  }

  TEST_CASE("more shrinkage pulls contexts closer to their cluster") {
    const auto& f = fitted();
    std::map<ContextKey, double> prev;
    for (double lambda : {0.01, 1.0, 100.0, 1e5}) {
      HierarchyOptions o;
      o.lambda_context = lambda;
      const auto m = fit_hierarchy(f.g.store, f.recs, f.clusters, f.assignment, o);
      for (const auto& [key, c] : m.contexts) {
        if (c.inherited) continue;
        const double d = dist2(c, m.clusters.at(key.first));
        if (prev.contains(key)) CHECK(d <= prev[key] * (1 + 1e-6) + 1e-12);
        prev[key] = d;
      }
    }
    for (const auto& [key, d] : prev) CHECK(d < 1e-3);
  }

  TEST_CASE("resolution is total") {
    const auto& f = fitted();
    const auto m = fit_hierarchy(f.g.store, f.recs, f.clusters, f.assignment);
    const std::vector<std::optional<std::string>> ctxs{std::nullopt, std::string("icu"), std::string("nowhere")};
    const std::vector<std::optional<std::string>> ents{std::nullopt, std::string("ent_0000"), std::string("ghost")};
    std::vector<std::string> preds{"never_seen"};
    for (const auto& [p, k] : m.predicate_cluster) preds.push_back(p);
    for (const auto& p : preds) {
      for (const auto& c : ctxs) {
        for (const auto& e : ents) {
          for (Level lv : {Level::cluster, Level::context, Level::entity}) {
            const auto r = resolve_params(m, p, c, e, lv);
            CHECK(static_cast<int>(r.level) <= static_cast<int>(lv));
            CHECK(m.clusters.contains(r.cluster));
            const double tau = effective_tau(r.params, 0.1, 0.2);
            CHECK(std::isfinite(tau));
            CHECK(tau > 0.0);
          }
        }
      }
    }
    const auto unknown = resolve_params(m, "never_seen");
    CHECK(unknown.cold_start);
    const auto& emb = f.g.truth.predicate_embeddings.begin()->second;
    ColdStartHint hint;
    hint.embedding = emb;
    CHECK(resolve_params(m, "never_seen", std::nullopt, std::nullopt, Level::entity, hint).cold_start);
  }

  TEST_CASE("snapshot round trip") {
    const auto& f = fitted();
    const auto m = fit_hierarchy(f.g.store, f.recs, f.clusters, f.assignment);
    const auto j = to_json(m);
    const auto back = hierarchy_from_json(nlohmann::json::parse(j.dump()));
    CHECK(to_json(back).dump() == j.dump());
    for (const auto& [p, k] : m.predicate_cluster) {
      const auto a = resolve_params(m, p, std::string("icu"), std::string("ent_0001"));
      const auto b = resolve_params(back, p, std::string("icu"), std::string("ent_0001"));
      CHECK(effective_tau(a.params, 0.3, 0.4) == effective_tau(b.params, 0.3, 0.4));
    }
    auto broken = nlohmann::json::parse(j.dump());
    broken.erase("clusters");
    CHECK_THROWS_AS(hierarchy_from_json(broken), DataError);
  }

  TEST_CASE("effective tau floor and clamp") {
    DecayParams p;
    p.theta = {std::log(10.0), 1.0, 0.0, 0.0};
    CHECK(effective_tau(p, 0.0, 0.0) == doctest::Approx(10.0));
    CHECK(effective_tau(p, 1.0, 0.0) == doctest::Approx(10.0 * std::exp(1.0)));
    p.tau_floor = 50.0;
    CHECK(effective_tau(p, 0.0, 0.0) == 50.0);
    p.theta = {1e6, 0, 0, 0};
    CHECK(std::isfinite(effective_tau(p, 0, 0)));
  }

  TEST_CASE("no cluster at all is a data error") {
    const auto& f = fitted();
    CHECK_THROWS_AS(fit_hierarchy(f.g.store, f.recs, f.clusters, {}), DataError);
  }
}
