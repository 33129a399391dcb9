#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "hkq/features.hpp"
#include "hkq/hk_model.hpp"

namespace hkq {

struct TableEntry {
  HkParams params;
  std::vector<double> mean_features;
};

// Nearest-neighbor lookup table over standardized feature space; the
// conventional-method baseline and an independent oracle for the regressor.
struct FeatureTable {
  std::vector<TableEntry> grid;
  std::vector<double> standardize_mean;
  std::vector<double> standardize_stddev;
  std::string schema_id;
  std::vector<std::string> feature_names;
  std::size_t n_per_point = 0;
  std::size_t reps = 0;
  std::uint64_t seed = 0;

  void validate() const;
};

// Averages extracted features over `reps` fresh sets of n_per_point samples
// at every (α, k) grid node; standardization is computed across entries.
FeatureTable build_table(const std::vector<double>& alpha_grid, const std::vector<double>& k_grid,
                         std::size_t n_per_point, const FeatureSchema& schema, std::uint64_t seed,
                         std::size_t reps = 10, std::size_t threads = 1);

// Entry minimizing Euclidean distance in standardized feature space; ties
// break toward smaller α, then smaller k.
HkParams table_estimate(const FeatureTable& table, const FeatureVector& features);

// CSV (alpha, k, then feature columns) plus a JSON sidecar at path + ".json"
// holding standardization and metadata.
void write_table(const FeatureTable& table, const std::string& path);
FeatureTable read_table(const std::string& path);

}  // namespace hkq
