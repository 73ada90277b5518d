#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include "cberl/ad.hpp"

namespace cberl {

/// Versioned binary blob: magic, version, kind, embedded config JSON, then a
/// named float64 tensor table.
struct Checkpoint {
  std::string kind;
  std::uint32_t version = 1;
  std::string config_json = "{}";
  std::vector<std::pair<std::string, Mat>> tensors;

  void put(const std::string& name, Mat m);
  const Mat& get(const std::string& name) const;
  bool has(const std::string& name) const;

  void put_params(const ad::ParamSet& ps, const std::string& prefix);
  /// Copies matching tensors into an already-shaped ParamSet.
  void load_params(ad::ParamSet& ps, const std::string& prefix) const;

  void save(const std::filesystem::path& path) const;
  static Checkpoint load(const std::filesystem::path& path);
};

}  // namespace cberl
