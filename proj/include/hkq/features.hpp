#pragma once

#include <string>
#include <vector>

#include "hkq/errors.hpp"
#include "hkq/hk_model.hpp"

namespace hkq {

// Which envelope statistics form the input vector. Layout (fixed by id):
// for each ν in moment_orders: snr, skewness, kurtosis of A^ν; then the log
// moments (U, X) if enabled.
struct FeatureSchema {
  std::vector<double> moment_orders;
  bool include_log_moments = true;
  std::string id;

  void validate() const;
  std::size_t length() const;
  // Column labels in vector order, e.g. snr_nu0.72, skew_nu0.72, ...
  std::vector<std::string> feature_names() const;

  std::string to_json() const;
  static FeatureSchema from_json(const std::string& text);
};

// ν ∈ {0.72, 0.88, 1.0} + log moments: 11 features.
FeatureSchema default_schema();

struct FeatureVector {
  std::vector<double> values;
  std::string schema_id;
};

struct MomentStats {
  double snr;
  double skewness;
  double kurtosis;
};

// Pointwise SNR, skewness and kurtosis of A^ν with population moments
// (kurtosis is non-excess). Needs ≥ 8 samples and nonzero variance.
MomentStats moment_stats(const std::vector<double>& amplitudes, double nu);

struct LogMoments {
  double U;  // mean(ln I) - ln(mean I), ≤ 0 by Jensen
  double X;  // mean(I ln I)/mean(I) - mean(ln I)
};

// Log moments of intensity I = A²; zero amplitudes are floored at the
// smallest positive double before the log so set size is preserved.
LogMoments log_moments(const std::vector<double>& amplitudes);

FeatureVector extract_features(const EnvelopeSet& set, const FeatureSchema& schema);

}  // namespace hkq
