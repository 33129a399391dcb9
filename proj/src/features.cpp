#include <cmath>
#include <limits>
#include <sstream>

#include "hkq/features.hpp"
#include "json.hpp"

namespace hkq {
namespace {

constexpr std::size_t kMinSamples = 8;

void check_sample_count(std::size_t n) {
  if (n < kMinSamples) {
    std::ostringstream os;
    os << "need at least " << kMinSamples << " samples, got " << n;
    raise(errc::insufficient_data, os.str());
  }
}

}  // namespace

void FeatureSchema::validate() const {
  require(!moment_orders.empty(), errc::configuration, "schema needs at least one moment order");
  for (double nu : moment_orders)
    require(std::isfinite(nu) && nu > 0.0 && nu <= 4.0, errc::configuration,
            "moment order must lie in (0, 4]");
  require(!id.empty(), errc::configuration, "schema id must be set");
}

std::size_t FeatureSchema::length() const {
  return 3 * moment_orders.size() + (include_log_moments ? 2 : 0);
}

std::vector<std::string> FeatureSchema::feature_names() const {
  std::vector<std::string> names;
  names.reserve(length());
  for (double nu : moment_orders) {
    std::ostringstream os;
    os << "nu" << nu;
    names.push_back("snr_" + os.str());
    names.push_back("skew_" + os.str());
    names.push_back("kurt_" + os.str());
  }
  if (include_log_moments) {
    names.push_back("log_u");
    names.push_back("log_x");
  }
  return names;
}

std::string FeatureSchema::to_json() const {
  nlohmann::ordered_json j;
  j["id"] = id;
  j["moment_orders"] = moment_orders;
  j["include_log_moments"] = include_log_moments;
  return j.dump();
}

FeatureSchema FeatureSchema::from_json(const std::string& text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    raise(errc::format, std::string("bad schema JSON: ") + e.what());
  }
  FeatureSchema schema;
  try {
    schema.id = j.at("id").get<std::string>();
    schema.moment_orders = j.at("moment_orders").get<std::vector<double>>();
    schema.include_log_moments = j.at("include_log_moments").get<bool>();
  } catch (const nlohmann::json::exception& e) {
    raise(errc::format, std::string("bad schema JSON: ") + e.what());
  }
  schema.validate();
  return schema;
}

FeatureSchema default_schema() {
  return FeatureSchema{{0.72, 0.88, 1.0}, true, "env-stats-v1"};
}

namespace {

bool all_equal(const std::vector<double>& x) {
  for (double v : x)
    if (v != x.front()) return false;
  return true;
}

}  // namespace

MomentStats moment_stats(const std::vector<double>& amplitudes, double nu) {
  check_sample_count(amplitudes.size());
  require(std::isfinite(nu) && nu > 0.0, errc::parameter_domain, "moment order must be positive");
  // Detected structurally: summation rounding can leave a spurious variance
  // of order 1e-32 on constant input, which would turn into garbage ratios.
  require(!all_equal(amplitudes), errc::degenerate_input,
          "constant samples have no envelope statistics");

  const double n = static_cast<double>(amplitudes.size());
  std::vector<double> m(amplitudes.size());
  double mean = 0.0;
  for (std::size_t i = 0; i < amplitudes.size(); ++i) {
    require(amplitudes[i] >= 0.0, errc::parameter_domain, "amplitudes must be non-negative");
    m[i] = std::pow(amplitudes[i], nu);
    mean += m[i];
  }
  mean /= n;

  double m2 = 0.0, m3 = 0.0, m4 = 0.0;
  for (double v : m) {
    const double d = v - mean;
    const double d2 = d * d;
    m2 += d2;
    m3 += d2 * d;
    m4 += d2 * d2;
  }
  m2 /= n;
  m3 /= n;
  m4 /= n;
  require(m2 > 0.0, errc::degenerate_input, "constant samples have no envelope statistics");

  const double sd = std::sqrt(m2);
  return {mean / sd, m3 / (m2 * sd), m4 / (m2 * m2)};
}

LogMoments log_moments(const std::vector<double>& amplitudes) {
  check_sample_count(amplitudes.size());
  const double n = static_cast<double>(amplitudes.size());
  const double floor = std::numeric_limits<double>::denorm_min();

  double mean_i = 0.0, mean_log = 0.0, mean_ilog = 0.0;
  for (double a : amplitudes) {
    require(a >= 0.0, errc::parameter_domain, "amplitudes must be non-negative");
    const double intensity = std::max(a * a, floor);
    const double log_i = std::log(intensity);
    mean_i += intensity;
    mean_log += log_i;
    mean_ilog += intensity * log_i;
  }
  mean_i /= n;
  mean_log /= n;
  mean_ilog /= n;

  // U = E[ln(I/mu)], X = E[(I/mu) ln(I/mu)] with mu = E[I]; both scale-free.
  // For Rayleigh envelopes (I exponential) U -> -gamma_Euler and X -> 1-gamma_Euler.
  if (all_equal(amplitudes)) return {0.0, 0.0};
  const double log_mu = std::log(mean_i);
  // Jensen gives U <= 0 exactly; the min guards against summation rounding.
  return {std::min(0.0, mean_log - log_mu), mean_ilog / mean_i - log_mu};
}

FeatureVector extract_features(const EnvelopeSet& set, const FeatureSchema& schema) {
  schema.validate();
  FeatureVector out;
  out.schema_id = schema.id;
  out.values.reserve(schema.length());
  for (double nu : schema.moment_orders) {
    MomentStats stats{};
    try {
      stats = moment_stats(set.samples, nu);
    } catch (const Error& e) {
      std::ostringstream os;
      os << "moment stats at nu=" << nu << ": " << e.message();
      raise(e.code(), os.str());
    }
    out.values.push_back(stats.snr);
    out.values.push_back(stats.skewness);
    out.values.push_back(stats.kurtosis);
  }
  if (schema.include_log_moments) {
    LogMoments lm{};
    try {
      lm = log_moments(set.samples);
    } catch (const Error& e) {
      raise(e.code(), std::string("log moments: ") + e.message());
    }
    out.values.push_back(lm.U);
    out.values.push_back(lm.X);
  }
  for (double v : out.values)
    require(std::isfinite(v), errc::degenerate_input, "non-finite feature value");
  return out;
}

}  // namespace hkq
