#include <cmath>
#include <cstdio>
#include <ostream>

#include "hkq/stats.hpp"
#include "hkq/uncertainty.hpp"

namespace hkq {
namespace {

const char* kTargetNames[PredictionGrid::kTargets] = {"log10_alpha", "k"};

std::string fmt17(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

}  // namespace

void PredictionGrid::validate() const {
  require(sets >= 1 && realizations >= 1 && draws >= 1, errc::dimension,
          "prediction grid has an empty axis");
  const std::size_t expected = sets * realizations * draws * kTargets;
  require(values.size() == expected, errc::dimension, "prediction grid value count mismatch");
  for (double v : values)
    require(std::isfinite(v), errc::degenerate_input, "non-finite prediction value");
  if (has_variances()) {
    require(predicted_variances.size() == expected, errc::dimension,
            "predicted variance count mismatch");
    for (double v : predicted_variances)
      require(std::isfinite(v) && v > 0.0, errc::degenerate_input,
              "predicted variances must be positive");
  }
}

PredictionGrid prediction_grid_from_draws(const InferenceDraws& draws, std::size_t sets,
                                          std::size_t realizations) {
  require(sets >= 1 && realizations >= 1, errc::dimension, "grid axes must be >= 1");
  require(draws.inputs == sets * realizations, errc::dimension,
          "input count does not factor into sets x realizations");
  PredictionGrid grid;
  grid.sets = sets;
  grid.realizations = realizations;
  grid.draws = draws.draws;
  // InferenceDraws already orders values [input × draw × target] with inputs
  // grouped by set, so the layouts coincide.
  grid.values = draws.means;
  grid.predicted_variances = draws.variances;
  grid.validate();
  return grid;
}

const char* method_name(DecompositionMethod method) {
  return method == DecompositionMethod::procedural ? "procedural" : "eq3";
}

UncertaintyReport decompose_procedural(const PredictionGrid& grid) {
  grid.validate();
  require(grid.realizations >= 2, errc::dimension,
          "procedural decomposition needs >= 2 realizations");
  require(grid.draws >= 2, errc::dimension, "procedural decomposition needs >= 2 draws");

  UncertaintyReport report{DecompositionMethod::procedural, {}};
  report.rows.resize(grid.sets);
  std::vector<double> draw_values(grid.draws);
  std::vector<double> realization_means(grid.realizations);
  std::vector<double> pooled(grid.realizations * grid.draws);

  for (std::size_t s = 0; s < grid.sets; ++s) {
    for (std::size_t t = 0; t < PredictionGrid::kTargets; ++t) {
      double stddev_sum = 0.0;
      for (std::size_t r = 0; r < grid.realizations; ++r) {
        for (std::size_t d = 0; d < grid.draws; ++d) {
          draw_values[d] = grid.value(s, r, d, t);
          pooled[r * grid.draws + d] = draw_values[d];
        }
        realization_means[r] = mean(draw_values);
        stddev_sum += population_stddev(draw_values);
      }
      UncertaintyComponents& c = report.rows[s][t];
      c.epistemic = stddev_sum / static_cast<double>(grid.realizations);
      c.aleatoric = population_stddev(realization_means);
      c.total = population_stddev(pooled);
    }
  }
  return report;
}

UncertaintyReport decompose_eq3(const PredictionGrid& grid) {
  grid.validate();
  require(grid.has_variances(), errc::configuration,
          "eq3 decomposition needs predicted variances");
  require(grid.realizations * grid.draws >= 2, errc::dimension,
          "eq3 decomposition needs >= 2 pooled draws");

  UncertaintyReport report{DecompositionMethod::eq3, {}};
  report.rows.resize(grid.sets);
  std::vector<double> pooled(grid.realizations * grid.draws);

  for (std::size_t s = 0; s < grid.sets; ++s) {
    for (std::size_t t = 0; t < PredictionGrid::kTargets; ++t) {
      double var_sum = 0.0;
      for (std::size_t r = 0; r < grid.realizations; ++r) {
        for (std::size_t d = 0; d < grid.draws; ++d) {
          pooled[r * grid.draws + d] = grid.value(s, r, d, t);
          var_sum += grid.predicted_variances[grid.index(s, r, d, t)];
        }
      }
      const double epistemic_var = population_variance(pooled);
      const double aleatoric_var = var_sum / static_cast<double>(pooled.size());
      UncertaintyComponents& c = report.rows[s][t];
      c.epistemic = std::sqrt(epistemic_var);
      c.aleatoric = std::sqrt(aleatoric_var);
      c.total = std::sqrt(epistemic_var + aleatoric_var);
    }
  }
  return report;
}

void write_uncertainty_csv(std::ostream& os, const std::vector<UncertaintyReport>& reports) {
  os << "set_id,target,method,epistemic,aleatoric,total\n";
  for (const UncertaintyReport& report : reports) {
    for (std::size_t s = 0; s < report.rows.size(); ++s) {
      for (std::size_t t = 0; t < PredictionGrid::kTargets; ++t) {
        const UncertaintyComponents& c = report.rows[s][t];
        os << s << ',' << kTargetNames[t] << ',' << method_name(report.method) << ','
           << fmt17(c.epistemic) << ',' << fmt17(c.aleatoric) << ',' << fmt17(c.total) << '\n';
      }
    }
  }
}

}  // namespace hkq
