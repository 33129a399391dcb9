#pragma once

#include <array>
#include <cstddef>
#include <iosfwd>
#include <string>
#include <vector>

#include "hkq/bnn.hpp"

namespace hkq {

// Prediction tensor [sets × realizations × weight-draws × targets];
// predicted_variances (σ̂², same layout) may be empty when only the
// procedural decomposition is wanted.
struct PredictionGrid {
  static constexpr std::size_t kTargets = BnnModel::kTargets;

  std::size_t sets = 0;
  std::size_t realizations = 0;
  std::size_t draws = 0;
  std::vector<double> values;
  std::vector<double> predicted_variances;

  std::size_t index(std::size_t s, std::size_t r, std::size_t d, std::size_t t) const {
    return ((s * realizations + r) * draws + d) * kTargets + t;
  }
  double value(std::size_t s, std::size_t r, std::size_t d, std::size_t t) const {
    return values[index(s, r, d, t)];
  }
  bool has_variances() const { return !predicted_variances.empty(); }
  void validate() const;
};

// Reshape inference draws into a grid of `sets` blocks of `realizations`
// consecutive inputs each.
PredictionGrid prediction_grid_from_draws(const InferenceDraws& draws, std::size_t sets,
                                          std::size_t realizations);

enum class DecompositionMethod { procedural, eq3 };
const char* method_name(DecompositionMethod method);

struct UncertaintyComponents {
  double epistemic = 0.0;
  double aleatoric = 0.0;
  double total = 0.0;
};

struct UncertaintyReport {
  DecompositionMethod method;
  // rows[set][target], targets ordered [log10_alpha, k], stddev units.
  std::vector<std::array<UncertaintyComponents, PredictionGrid::kTargets>> rows;
};

// Epistemic = mean over realizations of the stddev over draws; aleatoric =
// stddev over realizations of the mean over draws; total = pooled stddev.
// Population variances throughout, so the law of total variance is exact.
UncertaintyReport decompose_procedural(const PredictionGrid& grid);

// Moment form, realizations and draws pooled as the Monte-Carlo population:
// epistemic² = Var(ŷ), aleatoric² = E(σ̂²), total² = their sum.
UncertaintyReport decompose_eq3(const PredictionGrid& grid);

// Columns: set_id, target, method, epistemic, aleatoric, total.
void write_uncertainty_csv(std::ostream& os, const std::vector<UncertaintyReport>& reports);

}  // namespace hkq
