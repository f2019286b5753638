#pragma once

// Configuration and the command stages run by the CLI. Stages hand data
// to each other through files under the output directory.

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "shelflife/clustering.hpp"
#include "shelflife/hierarchy.hpp"
#include "shelflife/retrieval.hpp"
#include "shelflife/signals.hpp"
#include "shelflife/synthgen.hpp"

namespace shelflife {

/// Environment variable naming the default config file.
inline constexpr const char* kConfigEnvVar = "SHELFLIFE_CONFIG";

struct PipelineConfig {
  std::string edges_path = "data/edges.jsonl";
  std::string truth_path = "data/truth.json";  // optional input for agreement scores
  std::string predicate_embeddings_path = "data/predicate_embeddings.json";  // optional
  std::string out_dir = "out";
  std::optional<Window> window;  // unset: span of the loaded edges

  GenConfig generator = GenConfig::defaults();
  ExtractOptions extract;
  ClusterMethod cluster_method = ClusterMethod::density;
  DensityOptions density;
  MixtureOptions mixture;
  std::size_t min_obs = 5;
  HierarchyOptions hierarchy;
  double alpha = 1.0;
  double beta = 1.0;
  std::size_t n_queries = 200;
  std::uint64_t query_seed = 42;
  std::vector<double> sweep_epsilons{0.1, 0.25, 0.3, 0.5, 0.75, 1.0};

  /// Throws ConfigError.
  void validate() const;
  std::string artifact(const std::string& name) const;
};

nlohmann::ordered_json to_json(const PipelineConfig& config);
/// Missing keys keep their defaults; unknown keys are a ConfigError.
PipelineConfig pipeline_config_from_json(const nlohmann::json& j);
PipelineConfig load_pipeline_config(const std::string& path);

/// An input produced by an earlier command is missing.
class MissingArtifact : public DataError {
 public:
  MissingArtifact(const std::string& path, const std::string& command)
      : DataError("missing " + path + ": run `shelflife " + command + "` first") {}
};

struct StageOutcome {
  std::vector<std::string> written;
  bool converged = true;
  std::vector<std::string> notes;
};

StageOutcome run_generate(const PipelineConfig& config);
StageOutcome run_extract(const PipelineConfig& config);
StageOutcome run_cluster(const PipelineConfig& config);
StageOutcome run_fit(const PipelineConfig& config);
StageOutcome run_evaluate(const PipelineConfig& config);
StageOutcome run_sweep(const PipelineConfig& config);
/// Writes the text report to `out` and to the output directory.
StageOutcome run_report(const PipelineConfig& config, std::ostream& out);

struct QueryRequest {
  std::optional<std::string> subject;
  std::string predicate;
  double t_q = 0.0;
  Method method = Method::level123;
  std::optional<std::size_t> top;
  // JSON {"edges": {"<id>": sim}, "predicates": {"<name>": sim}, "fallback": x}
  std::optional<std::string> similarity_table;
};

nlohmann::ordered_json run_query(const PipelineConfig& config, const QueryRequest& request);

/// Reads a similarity table file into the table backend.
TableSimilarity load_similarity_table(const std::string& path);

}  // namespace shelflife
