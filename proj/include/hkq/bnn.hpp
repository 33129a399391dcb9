#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "hkq/features.hpp"

namespace hkq {

// Row-major matrix with rows = fan-out, cols = fan-in (z = W h + b).
struct Matrix {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> data;

  Matrix() = default;
  Matrix(std::size_t r, std::size_t c, double fill = 0.0) : rows(r), cols(c), data(r * c, fill) {}
  double& at(std::size_t r, std::size_t c) { return data[r * cols + c]; }
  double at(std::size_t r, std::size_t c) const { return data[r * cols + c]; }
  std::size_t size() const { return data.size(); }
};

// One mean-field layer: every weight/bias is Normal(mean, softplus(rho)²).
struct VariationalDense {
  Matrix weight_mean;
  Matrix weight_rho;
  std::vector<double> bias_mean;
  std::vector<double> bias_rho;

  std::size_t fan_in() const { return weight_mean.cols; }
  std::size_t fan_out() const { return weight_mean.rows; }
  std::size_t parameter_count() const { return 2 * weight_mean.size() + 2 * bias_mean.size(); }
};

struct Normalization {
  std::vector<double> mean;
  std::vector<double> stddev;

  static Normalization identity(std::size_t n) {
    return {std::vector<double>(n, 0.0), std::vector<double>(n, 1.0)};
  }
};

// Hidden layers use a softplus ramp; the last layer is linear and emits
// [mean_0, mean_1, logvar_0, logvar_1] for the targets [log10_alpha, k].
struct BnnModel {
  static constexpr std::size_t kTargets = 2;
  static constexpr double kLogVarClamp = 10.0;

  std::vector<VariationalDense> layers;
  std::string schema_id;
  Normalization input_norm;
  Normalization target_norm;
  double prior_stddev = 1.0;

  std::vector<std::size_t> widths() const;
  std::size_t parameter_count() const;
  // Canonical flat order: per layer weight_mean, weight_rho (row-major),
  // bias_mean, bias_rho. This is also the file layout.
  std::vector<double> parameters() const;
  void set_parameters(const std::vector<double>& flat);
  void validate() const;
};

struct TrainConfig {
  std::size_t steps = 20000;
  std::size_t batch_size = 128;
  double learning_rate = 1e-3;
  double kl_weight = 1.0;
  std::size_t mc_samples = 1;
  std::uint64_t seed = 0;
  std::size_t log_every = 2000;

  void validate() const;
};

struct TrainLogEntry {
  std::size_t step;
  double loss;
};

struct Dataset {
  FeatureSchema schema;
  std::vector<FeatureVector> features;
  std::vector<std::array<double, BnnModel::kTargets>> targets;

  void validate() const;
};

// [inputs × draws × targets], row-major. Variances are the de-normalized
// heteroscedastic head outputs σ̂².
struct InferenceDraws {
  std::size_t inputs = 0;
  std::size_t draws = 0;
  std::vector<double> means;
  std::vector<double> variances;

  std::size_t index(std::size_t i, std::size_t d, std::size_t t) const {
    return (i * draws + d) * BnnModel::kTargets + t;
  }
  double mean_at(std::size_t i, std::size_t d, std::size_t t) const { return means[index(i, d, t)]; }
  double variance_at(std::size_t i, std::size_t d, std::size_t t) const {
    return variances[index(i, d, t)];
  }
};

BnnModel init_model(const FeatureSchema& schema, const std::vector<std::size_t>& hidden_widths,
                    double prior_stddev, std::uint64_t seed);
// Width-level variant for models whose input is not a schema-shaped feature
// vector (small test fixtures); schema_id tags compatible inputs.
BnnModel init_model_dims(std::size_t input_width, const std::vector<std::size_t>& hidden_widths,
                         double prior_stddev, std::uint64_t seed,
                         const std::string& schema_id = "raw");

struct ElboResult {
  double loss;
  std::vector<double> gradient;  // same flat order as BnnModel::parameters()
};

// Monte-Carlo ELBO: mean over mc_samples and batch of the heteroscedastic
// Gaussian NLL (summed over targets) plus kl_weight * KL(q ‖ prior) /
// dataset_size. Inputs/targets are normalized with the model's stored norms.
ElboResult elbo_loss(const BnnModel& model, const std::vector<FeatureVector>& features,
                     const std::vector<std::array<double, BnnModel::kTargets>>& targets,
                     std::size_t mc_samples, double kl_weight, std::size_t dataset_size,
                     std::uint64_t seed);

// Closed-form KL(q ‖ N(0, prior²)) summed over all weights and biases.
double kl_divergence(const BnnModel& model);

// Adam on the ELBO; normalization statistics are computed from the dataset
// and stored in the returned model.
std::pair<BnnModel, std::vector<TrainLogEntry>> train(BnnModel model, const Dataset& dataset,
                                                      const TrainConfig& config);
// Default architecture (hidden 64-64, prior stddev 1).
std::pair<BnnModel, std::vector<TrainLogEntry>> train(const Dataset& dataset,
                                                      const TrainConfig& config);

// One weight draw per d ∈ [0, s) shared by all inputs; draw seeds derive from
// (seed, d), so results are independent of input batching.
InferenceDraws predict_mc(const BnnModel& model, const std::vector<FeatureVector>& features,
                          std::size_t s, std::uint64_t seed);

void save_model(const BnnModel& model, const std::string& path);
BnnModel load_model(const std::string& path);

}  // namespace hkq
