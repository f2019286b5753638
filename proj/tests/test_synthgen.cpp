#include "doctest.h"
#include "helpers.hpp"
#include "shelflife/synthgen.hpp"

using namespace shelflife;

TEST_SUITE("synthgen") {
  TEST_CASE("seeded generation is reproducible") {
    const auto a = generate(testing::small_config(1));
    const auto b = generate(testing::small_config(1));
    const auto c = generate(testing::small_config(2));
    REQUIRE(a.store.size() == b.store.size());
    for (EdgeId i = 0; i < a.store.size(); ++i) {
      CHECK(a.store.edge(i).t == b.store.edge(i).t);
      CHECK(a.store.edge(i).value.embedding == b.store.edge(i).value.embedding);
    }
    CHECK(to_json(a.truth).dump() == to_json(b.truth).dump());
    CHECK(to_json(a.truth).dump() != to_json(c.truth).dump());
  }

  TEST_CASE("planted structure") {
    const auto cfg = testing::small_config(3);
    const auto g = generate(cfg);
    CHECK(g.truth.predicate_cluster.size() == cfg.clusters.size() * cfg.predicates_per_cluster);
    CHECK(g.truth.cluster_names.size() == cfg.clusters.size());
    CHECK(g.truth.window.start == 0.0);
    CHECK(g.truth.window.end == cfg.window);
    CHECK(g.truth.n_edges == g.store.size());
    for (const auto& e : g.store.edges()) {
      CHECK(e.t >= 0.0);
      CHECK(e.t <= cfg.window);
      CHECK(e.value.embedding.size() == cfg.embed_dim);
      CHECK_FALSE(e.context.empty());
    }
    for (const auto& s : g.truth.supersessions) CHECK(s.t_end >= s.t_start);
    for (const auto& c : g.truth.concepts) {
      CHECK(c.tau > 0.0);
      CHECK(c.context.size() > 0);
    }
  }

  TEST_CASE("config round trip and validation") {
    auto cfg = GenConfig::defaults();
    const auto back = gen_config_from_json(nlohmann::json::parse(to_json(cfg).dump()));
    CHECK(to_json(back).dump() == to_json(cfg).dump());
    CHECK(to_json(gen_config_from_json(nlohmann::json::object())).dump() == to_json(cfg).dump());
    cfg.window = -1;
    CHECK_THROWS_AS(cfg.validate(), ConfigError);
    cfg = GenConfig::defaults();
    cfg.clusters[0].contexts.clear();
    CHECK_THROWS_AS(generate(cfg), ConfigError);
    CHECK_THROWS_AS(gen_config_from_json(nlohmann::json{{"window", "long"}}), ConfigError);
  }

  TEST_CASE("truth round trip through files") {
    testing::TempDir dir("gen");
    const auto g = generate(testing::small_config(4));
    dump(g, dir.file("e.jsonl"), dir.file("t.json"));
    const auto t = load_ground_truth(dir.file("t.json"));
    CHECK(to_json(t).dump() == to_json(g.truth).dump());
    const auto s = load_edges(dir.file("e.jsonl"), LoadOptions{g.truth.window});
    CHECK(s.size() == g.store.size());
  }


  TEST_CASE("unit shape gives exponential lifetimes with mean tau") {
    auto cfg = testing::small_config(11, 20);
    cfg.sigma_entity = 0.0;
    for (auto& cl : cfg.clusters) {
      cl.tau_base = 5.0;
      cl.kappa = 1.0;
      for (auto& ctx : cl.contexts) ctx.tau_multiplier = 1.0;
      cl.follow_up.reset();
    }
    const auto g = generate(cfg);
    double sum = 0;
    for (const auto& e : g.truth.supersessions) sum += e.t_end - e.t_start;
    const double n = static_cast<double>(g.truth.supersessions.size());
    REQUIRE(n > 10000);
    CHECK(sum / n == doctest::Approx(5.0).epsilon(0.02));
  }
}
