#include <cstdlib>
#include <fstream>
#include <sstream>
#include <sys/wait.h>

#include "doctest.h"
#include "helpers.hpp"
#include "shelflife/pipeline.hpp"

using namespace shelflife;

namespace {

PipelineConfig small_pipeline(const testing::TempDir& dir) {
  PipelineConfig c;
  c.generator = testing::small_config(8, 3);
  c.edges_path = dir.file("data/edges.jsonl");
  c.truth_path = dir.file("data/truth.json");
  c.predicate_embeddings_path = dir.file("data/emb.json");
  c.out_dir = dir.file("out");
  c.n_queries = 40;
  c.sweep_epsilons = {0.3, 0.5};
  return c;
}

nlohmann::json read_json(const std::string& path) {
  std::ifstream in(path);
  return nlohmann::json::parse(in);
}

int run_cli(const std::string& args, const std::string& env = {}) {
  const std::string cmd = env + (env.empty() ? "" : " ") + SHELFLIFE_CLI_PATH + " " + args + " >/dev/null 2>&1";
  const int rc = std::system(cmd.c_str());
  return WIFEXITED(rc) ? WEXITSTATUS(rc) : -1;
}

void write_config(const std::string& path, const PipelineConfig& c) { std::ofstream(path) << to_json(c).dump(2); }

}  // namespace

TEST_SUITE("pipeline") {
  TEST_CASE("config parsing") {
    const auto def = pipeline_config_from_json(nlohmann::json::object());
    CHECK(to_json(def).dump() == to_json(PipelineConfig{}).dump());
    const auto back = pipeline_config_from_json(nlohmann::json::parse(to_json(def).dump()));
    CHECK(to_json(back).dump() == to_json(def).dump());

    const auto c = pipeline_config_from_json(nlohmann::json::parse(R"({
      "extract": {"epsilon": 0.4, "epsilon_overrides": {"bp": 0.1}, "velocity_window": 30},
      "clustering": {"method": "dpmixture", "max_components": 6},
      "hierarchy": {"lambda_context": 2.5},
      "window": [0, 400],
      "min_obs": 7})"));
    CHECK(c.extract.default_epsilon == 0.4);
    CHECK(c.extract.epsilon.at("bp") == 0.1);
    CHECK(*c.extract.velocity_window == 30);
    CHECK(c.cluster_method == ClusterMethod::dpmixture);
    CHECK(c.mixture.max_components == 6);
    CHECK(c.hierarchy.lambda_context == 2.5);
    CHECK(c.hierarchy.min_obs == 7);
    CHECK(c.window->end == 400);

    CHECK_THROWS_AS(pipeline_config_from_json(nlohmann::json{{"bogus", 1}}), ConfigError);
    CHECK_THROWS_AS(pipeline_config_from_json(nlohmann::json::parse(R"({"extract": {"eps": 1}})")), ConfigError);
    CHECK_THROWS_AS(pipeline_config_from_json(nlohmann::json::parse(R"({"extract": {"epsilon": "x"}})")),
                    ConfigError);
    CHECK_THROWS_AS(pipeline_config_from_json(nlohmann::json::parse(R"({"retrieval": {"alpha": -1}})")), ConfigError);
    CHECK_THROWS_AS(pipeline_config_from_json(nlohmann::json::parse(R"({"window": [5, 1]})")), ConfigError);
    CHECK_THROWS_AS(pipeline_config_from_json(nlohmann::json::parse(R"({"clustering": {"method": "knn"}})")),
                    ConfigError);
    CHECK_THROWS_AS(load_pipeline_config("/nonexistent/config.json"), ConfigError);
  }

  TEST_CASE("stages chain through files") {
    testing::TempDir dir("pipe");
    const auto c = small_pipeline(dir);
    CHECK_THROWS_AS(run_extract(c), MissingArtifact);
    run_generate(c);
    CHECK_THROWS_AS(run_cluster(c), MissingArtifact);
    run_extract(c);
    CHECK_THROWS_AS(run_fit(c), MissingArtifact);
    run_cluster(c);
    CHECK_THROWS_AS(run_evaluate(c), MissingArtifact);
    run_fit(c);
    run_evaluate(c);
    run_sweep(c);
    std::ostringstream text;
    run_report(c, text);
    CHECK(text.str().find("Temporal clusters") != std::string::npos);
    CHECK(text.str().find("Retrieval benchmark") != std::string::npos);

    const std::string echoed = to_json(c).dump();
    for (const char* f : {"signals.json", "clusters.json", "cluster_model.json", "model.json", "fit_report.json",
                          "benchmark.json", "sweep.json"}) {
      CAPTURE(f);
      CHECK(read_json(c.artifact(f))["config"] == nlohmann::json::parse(echoed));
    }
    for (const char* f : {"lifetimes.csv", "clusters.csv", "benchmark.csv", "curves.tsv", "sweep.csv"}) {
      CAPTURE(f);
      std::ifstream in(c.artifact(f));
      std::string first;
      std::getline(in, first);
      CHECK(first == "# config: " + echoed);
    }
    const auto clusters = read_json(c.artifact("clusters.json"));
    CHECK(clusters.contains("agreement"));
    CHECK(read_json(c.artifact("fit_report.json"))["clusters"].size() == clusters["n_clusters"].get<std::size_t>());

    // the snapshot answers queries
    QueryRequest req;
    req.subject = "ent_0000";
    req.predicate = "pred_00";
    req.t_q = 1000;
    req.top = 3;
    const auto out = run_query(c, req);
    CHECK(out["results"].size() <= 3);
    for (const auto& r : out["results"]) CHECK(r["t"].get<double>() <= 1000.0);

    // idempotent: a second run writes the same bytes
    auto slurp = [](const std::string& p) {
      std::ifstream in(p);
      return std::string(std::istreambuf_iterator<char>(in), {});
    };
    const std::string model = slurp(c.artifact("model.json"));
    const std::string bench = slurp(c.artifact("benchmark.csv"));
    run_fit(c);
    run_evaluate(c);
    CHECK(slurp(c.artifact("model.json")) == model);
    CHECK(slurp(c.artifact("benchmark.csv")) == bench);
  }

  TEST_CASE("similarity table file") {
    testing::TempDir dir("sim");
    std::ofstream(dir.file("t.json")) << R"({"edges": {"3": 0.9}, "predicates": {"bp": 0.4}, "fallback": 0.1})";
    const auto t = load_similarity_table(dir.file("t.json"));
    CHECK(t.by_edge.at(3) == 0.9);
    CHECK(t.by_predicate.at("bp") == 0.4);
    CHECK(t.fallback == 0.1);
    std::ofstream(dir.file("bad.json")) << R"({"predicates": {"bp": 1.5}})";
    CHECK_THROWS_AS(load_similarity_table(dir.file("bad.json")), DataError);
    CHECK_THROWS_AS(load_similarity_table(dir.file("none.json")), DataError);
  }

  TEST_CASE("cli exit codes") {
    testing::TempDir dir("cli");
    auto c = small_pipeline(dir);
    const std::string cfg = dir.file("cfg.json");
    write_config(cfg, c);
    CHECK(run_cli("--config " + cfg + " fit") == 3);  // nothing generated yet
    CHECK(run_cli("--config " + cfg + " generate") == 0);
    CHECK(run_cli("generate", "SHELFLIFE_CONFIG=" + cfg) == 0);
    CHECK(run_cli("--config " + cfg + " extract") == 0);
    CHECK(run_cli("--config " + cfg + " --epsilon -1 extract") == 2);
    CHECK(run_cli("--config " + dir.file("missing.json") + " extract") == 2);
    CHECK(run_cli("--config " + cfg + " frobnicate") == 2);
    CHECK(run_cli("--config " + cfg + " query --predicate pred_00") == 2);  // --at is required

    std::ofstream(dir.file("bad.json")) << R"({"nope": true})";
    CHECK(run_cli("--config " + dir.file("bad.json") + " extract") == 2);

    // a mixture stopped after one sweep is flagged, but its artifacts are still written
    c.cluster_method = ClusterMethod::dpmixture;
    c.mixture.max_iter = 1;
    write_config(cfg, c);
    CHECK(run_cli("--config " + cfg + " cluster") == 4);
    CHECK(read_json(c.artifact("clusters.json"))["converged"] == false);

    CHECK(run_cli("--config " + cfg + " query --predicate pred_00 --at 1e9") == 2);
    CHECK(run_cli("--config " + cfg + " query --predicate pred_00 --at 100 --method level1") == 3);  // no model yet
    CHECK(run_cli("--config " + cfg + " query --predicate pred_00 --at 100 --method none --out " +
                  dir.file("q.json")) == 0);
    CHECK(read_json(dir.file("q.json"))["method"] == "none");
  }

  TEST_CASE("default corpus through the command line") {
    testing::TempDir dir("full");
    PipelineConfig c;
    c.edges_path = dir.file("data/edges.jsonl");
    c.truth_path = dir.file("data/truth.json");
    c.predicate_embeddings_path = dir.file("data/emb.json");
    c.out_dir = dir.file("out");
    write_config(dir.file("cfg.json"), c);
    const std::string cfg = "--config " + dir.file("cfg.json");

    auto slurp = [](const std::string& p) {
      std::ifstream in(p);
      return std::string(std::istreambuf_iterator<char>(in), {});
    };
    REQUIRE(run_cli("generate --seed 42 " + cfg) == 0);
    const std::string first = slurp(c.edges_path);
    REQUIRE(run_cli("generate --seed 42 " + cfg) == 0);
    CHECK(slurp(c.edges_path) == first);

    for (const char* cmd : {"extract", "cluster", "fit", "report"}) {
      CAPTURE(cmd);
      REQUIRE(run_cli(std::string(cmd) + " " + cfg) == 0);
    }
    CHECK(read_json(c.artifact("clusters.json"))["n_clusters"] == 4);
    const std::string report = slurp(c.artifact("report.txt"));
    CHECK(report.find("ARI 1.000") != std::string::npos);

    REQUIRE(run_cli("query --predicate pred_00 --at 300 --out " + dir.file("q.json") + " " + cfg) == 0);
    const auto q = read_json(dir.file("q.json"));
    CHECK(!q["results"].empty());
    for (const auto& r : q["results"]) CHECK(r["t"].get<double>() <= 300.0);
  }
}
