#pragma once

#include <filesystem>
#include <random>
#include <string>
#include <vector>

#include "shelflife/kg.hpp"

namespace testing {

inline shelflife::Edge make_edge(shelflife::EdgeId id, const std::string& subject, const std::string& predicate,
                                 double t, std::vector<double> emb, const std::string& context = "",
                                 const std::string& raw = "") {
  shelflife::Edge e;
  e.id = id;
  e.subject = subject;
  e.predicate = predicate;
  e.t = t;
  e.value.raw = raw.empty() ? predicate + "@" + std::to_string(t) : raw;
  e.value.embedding = std::move(emb);
  e.context = context;
  e.entity = subject;
  return e;
}

/// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    std::random_device rd;
    path_ = std::filesystem::temp_directory_path() / ("shelflife_" + tag + "_" + std::to_string(rd()));
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  std::string file(const std::string& name) const { return (path_ / name).string(); }
  const std::filesystem::path& path() const { return path_; }

 private:
  std::filesystem::path path_;
};

}  // namespace testing

#include "shelflife/synthgen.hpp"

namespace testing {

/// Default clusters with few entities, for tests that need a quick corpus.
inline shelflife::GenConfig small_config(std::uint64_t seed = 7, std::size_t entities = 3) {
  auto c = shelflife::GenConfig::defaults();
  c.entities_min = entities;
  c.entities_max = entities;
  c.seed = seed;
  return c;
}

}  // namespace testing
