// shelflife: command-line driver for the decay pipeline.

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include "CLI11.hpp"
#include "shelflife/pipeline.hpp"
#include "shelflife/survival.hpp"

namespace {

constexpr int kExitOk = 0;
constexpr int kExitConfig = 2;
constexpr int kExitData = 3;
constexpr int kExitNotConverged = 4;

struct Overrides {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::optional<double> epsilon;
  std::optional<std::string> cluster_method;
  std::optional<std::string> out_dir;
  std::optional<std::string> edges;
  std::optional<double> lambda_context;
  std::optional<double> lambda_entity;
  std::optional<double> alpha;
  std::optional<double> beta;
  std::optional<std::size_t> n_queries;
};

shelflife::PipelineConfig resolve_config(const Overrides& o) {
  using shelflife::PipelineConfig;
  std::string path = o.config;
  if (path.empty()) {
    if (const char* env = std::getenv(shelflife::kConfigEnvVar); env && *env) path = env;
  }
  PipelineConfig c = path.empty() ? PipelineConfig{} : shelflife::load_pipeline_config(path);
  if (o.seed) {
    c.generator.seed = *o.seed;
    c.mixture.seed = *o.seed;
    c.query_seed = *o.seed;
  }
  if (o.epsilon) c.extract.default_epsilon = *o.epsilon;
  if (o.cluster_method) c.cluster_method = shelflife::cluster_method_from_string(*o.cluster_method);
  if (o.out_dir) c.out_dir = *o.out_dir;
  if (o.edges) c.edges_path = *o.edges;
  if (o.lambda_context) c.hierarchy.lambda_context = *o.lambda_context;
  if (o.lambda_entity) c.hierarchy.lambda_entity = *o.lambda_entity;
  if (o.alpha) c.alpha = *o.alpha;
  if (o.beta) c.beta = *o.beta;
  if (o.n_queries) c.n_queries = *o.n_queries;
  c.validate();
  return c;
}

int finish(const shelflife::StageOutcome& out) {
  for (const auto& w : out.written) std::cerr << "wrote " << w << '\n';
  for (const auto& n : out.notes) std::cerr << n << '\n';
  if (!out.converged) {
    std::cerr << "warning: some fits did not converge; artifacts are flagged\n";
    return kExitNotConverged;
  }
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Shelf-life estimation and time-aware retrieval over knowledge-graph edges"};
  app.require_subcommand(1);
  app.fallthrough();

  Overrides o;
  app.add_option("--config", o.config,
                 std::string("JSON config file (default: $") + shelflife::kConfigEnvVar + ", then built-in defaults)");
  app.add_option("--seed", o.seed, "seed for generation, mixture clustering and query sampling");
  app.add_option("--epsilon", o.epsilon, "default supersession threshold");
  app.add_option("--cluster-method", o.cluster_method, "density or dpmixture");
  app.add_option("--out-dir", o.out_dir, "artifact directory");
  app.add_option("--edges", o.edges, "edge JSONL path");
  app.add_option("--lambda-context", o.lambda_context, "context-level shrinkage strength");
  app.add_option("--lambda-entity", o.lambda_entity, "entity-level shrinkage strength");
  app.add_option("--alpha", o.alpha, "similarity exponent");
  app.add_option("--beta", o.beta, "freshness exponent");
  app.add_option("--n-queries", o.n_queries, "benchmark query count");

  auto* gen = app.add_subcommand("generate", "write a synthetic edge stream and its ground truth");
  auto* ext = app.add_subcommand("extract", "lifetime records and predicate signals");
  auto* clu = app.add_subcommand("cluster", "group predicates by temporal profile");
  auto* fit = app.add_subcommand("fit", "fit the decay hierarchy and write the model snapshot");
  auto* eva = app.add_subcommand("evaluate", "retrieval benchmark and survival curves");
  auto* rep = app.add_subcommand("report", "print the consolidated tables");
  auto* swp = app.add_subcommand("sweep", "threshold sensitivity");
  auto* qry = app.add_subcommand("query", "rank edges for one query");

  shelflife::QueryRequest req;
  std::string method = "level123";
  std::optional<std::string> out_path;
  qry->add_option("--subject", req.subject, "restrict to one subject");
  qry->add_option("--predicate", req.predicate, "query predicate")->required();
  qry->add_option("--at", req.t_q, "query time in days")->required();
  qry->add_option("--method", method, "none, uniform_exp, uniform_halflife, level1, level12 or level123");
  qry->add_option("--top", req.top, "keep the first N results");
  qry->add_option("--similarity-table", req.similarity_table, "JSON table of fixed similarities");
  qry->add_option("--out", out_path, "write JSON here instead of stdout");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? kExitOk : kExitConfig;
  }

  try {
    const shelflife::PipelineConfig c = resolve_config(o);
    if (*gen) return finish(shelflife::run_generate(c));
    if (*ext) return finish(shelflife::run_extract(c));
    if (*clu) return finish(shelflife::run_cluster(c));
    if (*fit) return finish(shelflife::run_fit(c));
    if (*eva) return finish(shelflife::run_evaluate(c));
    if (*swp) return finish(shelflife::run_sweep(c));
    if (*rep) return finish(shelflife::run_report(c, std::cout));
    if (*qry) {
      req.method = shelflife::method_from_string(method);
      const auto j = shelflife::run_query(c, req);
      if (out_path) {
        std::ofstream f(*out_path);
        if (!f) throw shelflife::DataError("cannot write '" + *out_path + "'");
        f << j.dump(2) << '\n';
      } else {
        std::cout << j.dump(2) << '\n';
      }
      return kExitOk;
    }
  } catch (const shelflife::ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const shelflife::DataError& e) {
    std::cerr << "data error: " << e.what() << '\n';
    return kExitData;
  } catch (const shelflife::FitError& e) {
    std::cerr << "fit error: " << e.what() << '\n';
    return kExitData;
  } catch (const std::filesystem::filesystem_error& e) {
    std::cerr << "io error: " << e.what() << '\n';
    return kExitData;
  } catch (const nlohmann::json::exception& e) {
    std::cerr << "data error: " << e.what() << '\n';
    return kExitData;
  }
  return kExitOk;
}
