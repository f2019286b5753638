#include <fstream>

#include "doctest.h"
#include "helpers.hpp"
#include "shelflife/kg.hpp"

using namespace shelflife;
using testing::make_edge;

TEST_SUITE("kg") {
  TEST_CASE("store indexes concepts in time order") {
    const EdgeStore s({make_edge(0, "a", "p", 5, {1}), make_edge(1, "a", "p", 2, {0}), make_edge(2, "b", "p", 1, {3}),
                       make_edge(3, "a", "q", 3, {2})});
    const auto h = s.concept_history("a", "p");
    REQUIRE(h.size() == 2);
    CHECK(h[0]->id == 1);
    CHECK(h[1]->id == 0);
    CHECK(s.concept_history("zz", "p").empty());
    CHECK(s.concepts().size() == 3);
    CHECK(s.predicates() == std::vector<std::string>{"p", "q"});
    CHECK(s.window()->start == 1.0);
    CHECK(s.window()->end == 5.0);
    CHECK(s.subject_edges("a").size() == 3);
  }

  TEST_CASE("store rejects bad edges") {
    CHECK_THROWS_AS(EdgeStore({make_edge(0, "a", "p", 1, {1}), make_edge(0, "a", "p", 2, {1})}), DataError);
    CHECK_THROWS_AS(EdgeStore({make_edge(0, "a", "p", 1, {1}), make_edge(1, "a", "p", 2, {1, 2})}), DataError);
    CHECK_THROWS_AS(EdgeStore({make_edge(0, "a", "p", NAN, {1})}), DataError);
    CHECK_THROWS_AS(EdgeStore({make_edge(0, "a", "p", 10, {1})}, Window{0, 5}), DataError);
    CHECK_THROWS_AS(EdgeStore().window_or_throw(), DataError);
    CHECK_THROWS_AS(EdgeStore({make_edge(0, "a", "p", 1, {1})}).edge(7), DataError);
  }

  TEST_CASE("distance metrics") {
    const std::vector<double> a{3, 0}, b{0, 4}, z{0, 0};
    CHECK(embed_distance(a, b) == doctest::Approx(5.0));
    CHECK(embed_distance(a, b, Metric::cosine) == doctest::Approx(1.0));
    CHECK(embed_distance(a, a, Metric::cosine) == doctest::Approx(0.0));
    CHECK(embed_distance(z, z, Metric::cosine) == 0.0);
    CHECK(embed_distance(z, a, Metric::cosine) == 1.0);
    CHECK_THROWS_AS(embed_distance(a, std::vector<double>{1.0}), DataError);
  }

  TEST_CASE("jsonl round trip") {
    testing::TempDir dir("kg");
    auto e1 = make_edge(0, "a", "p", 1.25, {0.5, -1}, "icu");
    auto e2 = make_edge(1, "b", "q", 3.0, {1e-300, 2});
    e2.entity = "org";
    e2.value.kind = ValueKind::numeric;
    const EdgeStore s({e1, e2});
    write_edges(s, dir.file("e.jsonl"));
    const EdgeStore r = load_edges(dir.file("e.jsonl"));
    REQUIRE(r.size() == 2);
    for (EdgeId id : {0u, 1u}) {
      const Edge &x = s.edge(id), &y = r.edge(id);
      CHECK(x.subject == y.subject);
      CHECK(x.predicate == y.predicate);
      CHECK(x.value.raw == y.value.raw);
      CHECK(x.value.kind == y.value.kind);
      CHECK(x.value.embedding == y.value.embedding);
      CHECK(x.t == y.t);
      CHECK(x.context == y.context);
      CHECK(x.entity == y.entity);
    }
    LoadOptions lo;
    lo.window = Window{0, 10};
    CHECK(load_edges(dir.file("e.jsonl"), lo).window()->end == 10.0);
  }

  TEST_CASE("jsonl errors carry line numbers") {
    testing::TempDir dir("kg");
    auto write = [&](const std::string& body) {
      std::ofstream(dir.file("bad.jsonl")) << body;
      return dir.file("bad.jsonl");
    };
    const std::string ok =
        R"({"subject":"a","predicate":"p","value_kind":"numeric","value":"1","embedding":[1],"t":0})";
    auto line_of = [&](const std::string& body) {
      try {
        load_edges(write(body));
      } catch (const DataError& e) {
        return e.line();
      }
      return std::size_t{0};
    };
    CHECK(line_of(ok + "\n\n{not json}\n") == 3);
    CHECK(line_of(ok + "\n" + R"({"subject":"a","value_kind":"numeric","value":"1","embedding":[1],"t":0})") == 2);
    CHECK(line_of(ok + "\n" + R"({"subject":"a","predicate":"p","value_kind":"odd","value":"1","embedding":[1],"t":0})") ==
          2);
    CHECK(line_of(ok + "\n" + R"({"subject":"a","predicate":"p","value_kind":"numeric","value":"1","embedding":[1,2],"t":0})") ==
          2);
    CHECK(line_of(ok + "\n" + R"({"subject":"a","predicate":"p","value_kind":"numeric","value":"1","embedding":[1],"t":"x"})") ==
          2);
    CHECK_THROWS_AS(load_edges(dir.file("missing.jsonl")), DataError);
  }
}
