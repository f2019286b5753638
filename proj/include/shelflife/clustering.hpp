#pragma once

// Predicate profiles and the two clustering backends (density hierarchy
// and truncated Dirichlet-process mixture), agreement metrics, and
// cold-start assignment.

#include <array>
#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"
#include "shelflife/signals.hpp"

namespace shelflife {

inline constexpr std::size_t kProfileDim = 5;
using Features = std::array<double, kProfileDim>;

inline constexpr std::array<const char*, kProfileDim> kFeatureNames{"velocity", "volatility", "log_mean_lifetime",
                                                                    "rho", "sup_rate"};

struct Standardization {
  Features mean{};
  Features sd{};  // 0 for constant features; those map to z = 0

  Features apply(const Features& raw) const;
};

struct PredicateProfile {
  std::string predicate;
  Features raw{};
  Features z{};
  std::optional<std::vector<double>> embedding;  // predicate-name embedding
};

struct ProfileSet {
  std::vector<PredicateProfile> profiles;  // sorted by predicate
  Standardization standardization;
  std::vector<std::string> excluded;  // fewer than min_obs records

  std::vector<double> matrix() const;  // row-major n x 5 standardized features
};

/// Raw feature vector of one predicate. A predicate without supersessions
/// gets log(window_length) for its lifetime feature.
Features raw_features(const PredicateSignals& s, double window_length);

/// Throws DataError when fewer than two predicates are eligible.
ProfileSet build_profiles(const PredicateSignalTable& signals, double window_length, std::size_t min_obs = 5,
                          const std::map<std::string, std::vector<double>>& embeddings = {});

enum class ClusterMethod { density, dpmixture };
const char* to_string(ClusterMethod m);
ClusterMethod cluster_method_from_string(const std::string& s);

struct ClusterModel {
  ClusterMethod method = ClusterMethod::density;
  std::map<std::string, int> labels;  // -1 = noise
  std::vector<Features> centroids;    // standardized space, indexed by cluster id
  std::vector<std::size_t> sizes;
  std::map<int, std::vector<double>> embedding_centroids;
  Standardization standardization;
  bool converged = true;
  bool all_noise = false;

  std::size_t n_clusters() const { return centroids.size(); }
};

struct DensityOptions {
  std::size_t min_cluster_size = 3;
  std::size_t min_samples = 2;
};

struct MixtureOptions {
  std::size_t max_components = 10;
  double weight_concentration = 1.0;
  std::uint64_t seed = 42;
  int max_iter = 500;
  double tol = 1e-6;
  double reg_covar = 1e-6;
  // Multiplies the per-dimension data variance in the covariance prior.
  // Unset: max_components^(-2/d).
  std::optional<double> covariance_prior_scale;
};

/// Flat labels from the density hierarchy over row-major points.
std::vector<int> density_labels(std::span<const double> points, std::size_t n, std::size_t d,
                                const DensityOptions& options = {});

struct MixtureResult {
  std::vector<int> labels;
  std::vector<double> weights;  // kept components, relabelled order
  bool converged = false;
  int iterations = 0;
};

MixtureResult mixture_labels(std::span<const double> points, std::size_t n, std::size_t d,
                             const MixtureOptions& options = {});

ClusterModel cluster_density(const ProfileSet& profiles, const DensityOptions& options = {});
ClusterModel cluster_dpmixture(const ProfileSet& profiles, const MixtureOptions& options = {});

double adjusted_rand_index(std::span<const int> a, std::span<const int> b);
double normalized_mutual_info(std::span<const int> a, std::span<const int> b);
/// Mean silhouette over non-noise points. Throws DataError with fewer than
/// two clusters.
double silhouette(std::span<const double> points, std::size_t n, std::size_t d, std::span<const int> labels);

/// Nearest centroid in standardized space; ties go to the lower id.
int assign_cold_start(const ClusterModel& model, const Features& raw_features);
/// Nearest predicate-embedding centroid.
int assign_cold_start_embedding(const ClusterModel& model, std::span<const double> embedding);
/// Uses the profile when present, the embedding otherwise.
int assign_cold_start(const ClusterModel& model, const std::optional<Features>& raw_features,
                      const std::optional<std::vector<double>>& embedding);

/// Label vectors aligned on the predicates both maps contain.
std::pair<std::vector<int>, std::vector<int>> aligned_labels(const std::map<std::string, int>& a,
                                                             const std::map<std::string, int>& b);

/// A non-empty `comment` goes on a leading '#' line.
void write_cluster_csv(const ClusterModel& model, const ProfileSet& profiles, const std::string& path,
                       const std::string& comment = {});
nlohmann::ordered_json cluster_summary_json(const ClusterModel& model, const ProfileSet& profiles);

nlohmann::ordered_json to_json(const ClusterModel& model);
ClusterModel cluster_model_from_json(const nlohmann::json& j);

}  // namespace shelflife
