#pragma once

#include <array>
#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "hkq/bnn.hpp"
#include "hkq/hk_model.hpp"
#include "hkq/uncertainty.hpp"

namespace hkq {

struct ExperimentConfig {
  std::size_t n_alpha = 31;
  std::size_t n_k = 11;
  std::size_t realizations = 10;
  std::size_t samples_per_set = 1000;
  std::size_t draws = 50;
  std::vector<std::optional<double>> snr_levels = {std::nullopt, 40.0, 30.0, 20.0};
  double log_alpha_min = -0.3;
  double log_alpha_max = 1.3;
  double k_min = 0.0;
  double k_max = 1.25;
  std::uint64_t seed = 0;

  void validate() const;
};

// Clean (noiseless) sets for the whole grid; noise variants are derived
// per SNR level downstream. Point p = ia * n_k + ik owns clean_sets
// [p * realizations, (p+1) * realizations).
struct TestGrid {
  std::vector<double> log10_alphas;  // drawn uniformly, sorted ascending
  std::vector<double> ks;            // evenly spaced
  std::vector<EnvelopeSet> clean_sets;
};

TestGrid build_test_grid(const ExperimentConfig& config, std::size_t threads = 1);

double rmse(const std::vector<double>& predictions, const std::vector<double>& labels);

struct PearsonResult {
  double r;
  double p;  // two-sided, Student-t with n-2 dof
};

PearsonResult pearson(const std::vector<double>& x, const std::vector<double>& y);

struct CorrelationStat {
  double r = 0.0;
  double p = 1.0;
  bool weak = false;  // diagnostic flag: |r| < 0.1
};

struct TargetSummary {
  double rmse = 0.0;
  CorrelationStat error_vs_epistemic;
  CorrelationStat error_vs_aleatoric;
  CorrelationStat error_vs_total;
  double median_epistemic = 0.0;
  double median_aleatoric = 0.0;
  double median_total = 0.0;
};

struct LevelSummary {
  std::optional<double> snr_db;
  std::array<TargetSummary, BnnModel::kTargets> targets;
};

struct ExperimentRow {
  std::size_t point = 0;
  double log10_alpha = 0.0;
  double k = 0.0;
  std::optional<double> snr_db;
  std::array<double, BnnModel::kTargets> prediction{};
  std::array<double, BnnModel::kTargets> error{};  // |mean prediction - truth|
  std::array<UncertaintyComponents, BnnModel::kTargets> procedural{};
  std::array<UncertaintyComponents, BnnModel::kTargets> eq3{};
};

struct ExperimentReport {
  ExperimentConfig config;
  std::string schema_id;
  std::string error_definition =
      "abs(mean prediction over realizations and draws - truth) per target";
  std::vector<ExperimentRow> rows;  // level-major, then point
  std::vector<LevelSummary> summary;
};

// Per level and parameter point: predict `draws` weight samples over
// `realizations` feature vectors, decompose, correlate error with each
// uncertainty component across points.
ExperimentReport run_experiment(const ExperimentConfig& config, const BnnModel& model,
                                const FeatureSchema& schema, std::size_t threads = 1);

struct EnvelopePoint {
  double center;
  double min_error;
};

// Equal-width bins over the uncertainty range; per-bin minimum error, empty
// bins omitted.
std::vector<EnvelopePoint> lower_envelope(const std::vector<double>& errors,
                                          const std::vector<double>& uncertainties,
                                          std::size_t n_bins);

void write_experiment_csv(const ExperimentReport& report, std::ostream& os);
void write_summary_json(const ExperimentReport& report, std::ostream& os);

}  // namespace hkq
