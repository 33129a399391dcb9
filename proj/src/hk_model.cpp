#include "hkq/hk_model.hpp"

#include <cmath>

#include "hkq/rng.hpp"

namespace hkq {

void EnvelopeSet::validate() const {
  require(!samples.empty(), errc::empty_set, "envelope set has no samples");
  for (std::size_t i = 0; i < samples.size(); ++i) {
    require(std::isfinite(samples[i]) && samples[i] >= 0.0, errc::parameter_domain,
            "amplitude " + std::to_string(i) + " is negative or non-finite");
  }
  if (source == SetSource::simulated) {
    require(truth.has_value() && seed.has_value(), errc::configuration,
            "simulated set must record truth and seed");
  }
}

double EnvelopeSet::mean_power() const {
  require(!samples.empty(), errc::empty_set, "mean power of empty set");
  double s = 0.0;
  for (double a : samples) s += a * a;
  return s / static_cast<double>(samples.size());
}

std::vector<double> sample_gamma(double shape, double scale, std::size_t n, std::uint64_t seed) {
  require(shape > 0.0, errc::parameter_domain, "gamma shape must be positive");
  require(scale > 0.0, errc::parameter_domain, "gamma scale must be positive");
  require(n >= 1, errc::empty_set, "gamma sample count must be at least 1");
  Rng rng(seed);
  std::vector<double> out(n);
  for (auto& v : out) v = scale * rng.gamma(shape);
  return out;
}

EnvelopeSet sample_hk(const HkParams& params, std::size_t n, std::uint64_t seed) {
  params.validate();
  require(n >= 1, errc::empty_set, "envelope sample count must be at least 1");
  Rng rng(seed);
  const double eps = params.coherent_amplitude();
  EnvelopeSet set;
  set.samples.resize(n);
  for (auto& a : set.samples) {
    const double z = rng.gamma(params.alpha);
    const double s = params.sigma * std::sqrt(z / params.alpha);
    const double re = eps + rng.normal() * s;
    const double im = rng.normal() * s;
    a = std::sqrt(re * re + im * im);
  }
  set.truth = params;
  set.seed = seed;
  set.source = SetSource::simulated;
  return set;
}

double second_moment(const HkParams& params) {
  params.validate();
  return 2.0 * params.k * params.sigma * params.sigma + 2.0 * params.sigma * params.sigma;
}

double rayleigh_noise_sigma(double mean_power, double snr_db) {
  require(mean_power > 0.0, errc::degenerate_input, "set power must be positive");
  require(std::isfinite(snr_db), errc::parameter_domain, "snr_db must be finite");
  return std::sqrt(mean_power / (2.0 * std::pow(10.0, snr_db / 10.0)));
}

EnvelopeSet add_rayleigh_noise(const EnvelopeSet& set, double snr_db, std::uint64_t seed) {
  set.validate();
  const double sigma_n = rayleigh_noise_sigma(set.mean_power(), snr_db);
  Rng rng(seed);
  EnvelopeSet out = set;
  for (auto& a : out.samples) {
    const double r = rng.rayleigh(sigma_n);
    const double theta = 2.0 * M_PI * rng.uniform();
    const double re = a + r * std::cos(theta);
    const double im = r * std::sin(theta);
    a = std::sqrt(re * re + im * im);
  }
  out.snr_db = snr_db;
  return out;
}

}  // namespace hkq
