#include <algorithm>
#include <map>
#include <cmath>

#include "doctest.h"
#include "helpers.hpp"
#include "shelflife/hierarchy.hpp"
#include "shelflife/retrieval.hpp"
#include "shelflife/signals.hpp"

using namespace shelflife;
using testing::make_edge;

namespace {

HierarchyModel flat_model(const std::map<std::string, double>& tau, double kappa = 1.0) {
  HierarchyModel m;
  int k = 0;
  for (const auto& [p, t] : tau) {
    DecayParams d;
    d.theta = {std::log(t), 0, 0, 0};
    d.kappa = kappa;
    m.clusters[k] = d;
    m.predicate_cluster[p] = k++;
  }
  return m;
}

std::vector<Edge> base_edges() {
  return {make_edge(0, "a", "bp", 10, {1, 0}), make_edge(1, "a", "bp", 20, {0, 1}), make_edge(2, "a", "gene", 5, {1, 1}),
          make_edge(3, "b", "bp", 15, {1, 0}), make_edge(4, "a", "tx", 18, {0.5, 0.5})};
}

std::vector<EdgeId> ids(const RankedResult& r) {
  std::vector<EdgeId> out;
  for (const auto& it : r.items) out.push_back(it.edge_id);
  return out;
}

}  // namespace

TEST_SUITE("retrieval") {
  TEST_CASE("score is sim^alpha times freshness^beta") {
    const EdgeStore s(base_edges(), Window{0, 100});
    const auto m = flat_model({{"bp", 4}, {"gene", 3000}, {"tx", 90}});
    TableSimilarity sim;
    sim.by_predicate = {{"bp", 0.7}, {"gene", 0.5}, {"tx", 0.8}};
    Scorer sc;
    sc.model = &m;
    sc.similarity = &sim;
    Query q;
    q.predicate = "status";
    q.t_q = 30;
    q.alpha = 2.0;
    q.beta = 0.5;
    q.method = Method::level1;
    for (const auto& it : rank(s, q, sc).items) {
      const Edge& e = s.edge(it.edge_id);
      const double tau = e.predicate == "bp" ? 4 : e.predicate == "gene" ? 3000 : 90;
      const double fresh = std::exp(-(30 - e.t) / tau);
      CHECK(it.freshness == doctest::Approx(fresh));
      CHECK(it.score == doctest::Approx(std::pow(sim.similarity(e, q), 2.0) * std::pow(fresh, 0.5)));
      CHECK(*it.tau_eff == doctest::Approx(tau));
      CHECK(it.age == doctest::Approx(30 - e.t));
    }
  }

  TEST_CASE("future edges never appear and do not change the past") {
    auto edges = base_edges();
    const EdgeStore before(edges, Window{0, 100});
    edges.push_back(make_edge(5, "a", "bp", 40, {9, 9}));
    edges.push_back(make_edge(6, "a", "tx", 35, {0, 0}));
    const EdgeStore after(edges, Window{0, 100});
    const auto m = flat_model({{"bp", 4}, {"gene", 3000}, {"tx", 90}});
    Scorer sc;
    sc.model = &m;
    sc.uniform = {30, 20};
    for (Method meth : kAllMethods) {
      Query q;
      q.subject = "a";
      q.predicate = "bp";
      q.t_q = 21;
      q.method = meth;
      const auto a = rank(before, q, sc), b = rank(after, q, sc);
      CHECK(ids(a) == ids(b));
      for (std::size_t i = 0; i < a.items.size(); ++i) CHECK(a.items[i].score == b.items[i].score);
      for (const auto& it : b.items) CHECK(after.edge(it.edge_id).t <= 21);
    }
    Query q;
    q.predicate = "bp";
    q.t_q = 12;
    CHECK_THROWS_AS(score_edge(after, after.edge(5), q, sc), DataError);
  }

  TEST_CASE("ordering is invariant to a common power of the score") {
    const EdgeStore s(base_edges(), Window{0, 100});
    const auto m = flat_model({{"bp", 4}, {"gene", 3000}, {"tx", 90}}, 0.7);
    TableSimilarity sim;
    sim.by_predicate = {{"bp", 0.9}, {"gene", 0.3}, {"tx", 0.6}};
    Scorer sc;
    sc.model = &m;
    sc.similarity = &sim;
    Query q;
    q.predicate = "x";
    q.t_q = 25;
    q.method = Method::level123;
    const auto base = ids(rank(s, q, sc));
    for (double c : {0.3, 2.0, 5.0}) {
      q.alpha = c;
      q.beta = c;
      CHECK(ids(rank(s, q, sc)) == base);
    }
    // with beta = 0 every decay method collapses to the similarity order
    q.alpha = 1;
    q.beta = 0;
    sc.uniform = {10, 7};
    q.method = Method::none;
    const auto plain = ids(rank(s, q, sc));
    for (Method meth : kAllMethods) {
      q.method = meth;
      CHECK(ids(rank(s, q, sc)) == plain);
    }
  }

  TEST_CASE("ties go to newer edges, then lower ids") {
    const EdgeStore s({make_edge(5, "a", "p", 3, {0}), make_edge(2, "a", "p", 3, {0}), make_edge(9, "a", "p", 7, {0})},
                      Window{0, 10});
    Scorer sc;
    Query q;
    q.predicate = "p";
    q.t_q = 10;
    q.method = Method::none;
    CHECK(ids(rank(s, q, sc)) == std::vector<EdgeId>{9, 2, 5});
  }

  TEST_CASE("similarity backends") {
    Edge e = make_edge(0, "a", "p", 0, {1, 0});
    Query q;
    q.predicate = "p";
    CHECK(semantic_sim(e, q) == 1.0);
    q.subject = "b";
    CHECK(semantic_sim(e, q) == 0.0);
    q.embedding = std::vector<double>{1, 1};
    CHECK(semantic_sim(e, q) == doctest::Approx(std::sqrt(0.5)));
    q.embedding = std::vector<double>{-1, 0};
    CHECK(semantic_sim(e, q) == 0.0);
    TableSimilarity t;
    t.by_edge[0] = 0.25;
    t.by_predicate["p"] = 0.5;
    t.fallback = 0.1;
    CHECK(t.similarity(e, q) == 0.25);
    e.id = 1;
    CHECK(t.similarity(e, q) == 0.5);
    e.predicate = "z";
    CHECK(t.similarity(e, q) == 0.1);
  }

  TEST_CASE("uniform baselines") {
    std::vector<LifetimeRecord> rs(4);
    const double d[] = {2, 4, 9, 100};
    const Event ev[] = {Event::superseded, Event::superseded, Event::superseded, Event::censored};
    for (int i = 0; i < 4; ++i) rs[i].duration = d[i], rs[i].event = ev[i];
    const auto u = uniform_baseline(rs);
    CHECK(u.tau == doctest::Approx(5.0));
    CHECK(u.half_life == doctest::Approx(4.0));
    rs.resize(0);
    CHECK_THROWS_AS(uniform_baseline(rs), DataError);
  }

  TEST_CASE("query errors") {
    const EdgeStore s(base_edges(), Window{0, 100});
    Scorer sc;
    Query q;
    q.predicate = "bp";
    q.t_q = 101;
    q.method = Method::none;
    CHECK_THROWS_AS(rank(s, q, sc), ConfigError);
    q.t_q = 50;
    q.method = Method::level12;
    CHECK_THROWS_AS(rank(s, q, sc), ConfigError);
    q.method = Method::none;
    q.alpha = -1;
    CHECK_THROWS_AS(rank(s, q, sc), ConfigError);
    CHECK_THROWS_AS(method_from_string("fast"), ConfigError);
    for (Method m : kAllMethods) CHECK(method_from_string(to_string(m)) == m);
  }

  TEST_CASE("covariates use only the past") {
    const EdgeStore s(base_edges(), Window{0, 100});
    const auto c = covariates_at(s, "a", "bp", 15);
    CHECK(c.volatility_imputed);
    const auto c2 = covariates_at(s, "a", "bp", 20);
    CHECK_FALSE(c2.volatility_imputed);
    CHECK(c2.volatility == doctest::Approx(std::sqrt(2.0)));
    CHECK(c2.velocity == doctest::Approx(2.0 / 10.0));
  }


  TEST_CASE("clinical timeline") {
    auto edge = [](EdgeId id, const char* pred, double t) { return make_edge(id, "patient_a", pred, t, {}); };
    const EdgeStore s({edge(1, "blood_pressure", 100), edge(2, "blood_pressure", 104), edge(3, "blood_pressure", 108),
                       edge(4, "braf_status", 50), edge(5, "treatment", 80), edge(6, "treatment", 200)},
                      Window{0, 365});
    const auto m = flat_model({{"blood_pressure", 4}, {"braf_status", 3847}, {"treatment", 98}});
    TableSimilarity sim;
    sim.by_predicate = {{"treatment", 0.8}, {"blood_pressure", 0.7}, {"braf_status", 0.5}};
    Scorer sc;
    sc.model = &m;
    sc.similarity = &sim;
    Query q;
    q.subject = "patient_a";
    q.predicate = "status";
    q.t_q = 210;
    q.method = Method::level1;

    const auto r = rank(s, q, sc);
    std::map<EdgeId, ScoredEdge> by;
    for (const auto& it : r.items) by[it.edge_id] = it;
    CHECK(by.at(6).freshness == doctest::Approx(0.90).epsilon(0.01));
    CHECK(by.at(6).score == doctest::Approx(0.722).epsilon(0.005 / 0.722));
    CHECK(by.at(4).score == doctest::Approx(0.477).epsilon(0.005 / 0.477));
    CHECK(ids(r) == std::vector<EdgeId>{6, 4, 5, 3, 2, 1});

    q.method = Method::uniform_exp;
    sc.uniform.tau = 90;
    const auto u = rank(s, q, sc);
    std::map<EdgeId, double> us;
    for (const auto& it : u.items) us[it.edge_id] = it.score;
    for (EdgeId bp : {1, 2, 3}) CHECK(us.at(4) < us.at(bp));
    CHECK(us.at(4) == doctest::Approx(0.5 * std::exp(-160.0 / 90.0)));

    q.method = Method::level1;
    q.t_q = 105;
    const auto h = rank(s, q, sc);
    const auto hid = ids(h);
    CHECK(std::find(hid.begin(), hid.end(), EdgeId{6}) == hid.end());
    for (const auto& it : h.items) {
      if (s.edge(it.edge_id).predicate == "treatment") {
        CHECK(it.edge_id == 5);
        break;
      }
    }
  }
}
