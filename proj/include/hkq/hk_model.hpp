#pragma once

#include <cmath>
#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "hkq/errors.hpp"

namespace hkq {

// Homodyned-K parameters: clustering alpha, coherent-to-diffuse ratio k,
// diffuse scale sigma. The coherent amplitude is derived as sqrt(2k)*sigma so
// the sampler, the density, and the second-moment law share one
// parameterization; sigma is a pure amplitude scale.
struct HkParams {
  double alpha = 1.0;
  double k = 0.0;
  double sigma = 1.0;

  void validate() const {
    require(alpha > 0.0 && std::isfinite(alpha), errc::parameter_domain, "alpha must be positive");
    require(k >= 0.0 && std::isfinite(k), errc::parameter_domain, "k must be non-negative");
    require(sigma > 0.0 && std::isfinite(sigma), errc::parameter_domain, "sigma must be positive");
  }
  double coherent_amplitude() const { return std::sqrt(2.0 * k) * sigma; }
};

enum class SetSource { simulated, ingested };

// One realization of envelope amplitudes plus provenance.
struct EnvelopeSet {
  std::vector<double> samples;
  std::optional<HkParams> truth;
  std::optional<std::uint64_t> seed;
  std::optional<double> snr_db;
  SetSource source = SetSource::simulated;

  void validate() const;
  // Empirical E[A^2].
  double mean_power() const;
};

// n i.i.d. Gamma(shape, scale) draws, deterministic for a fixed seed.
std::vector<double> sample_gamma(double shape, double scale, std::size_t n, std::uint64_t seed);

// n Homodyned-K envelope draws:
//   a_i = sqrt((sqrt(2k)*sigma + X_i*sigma*sqrt(Z_i/alpha))^2 + (Y_i*sigma*sqrt(Z_i/alpha))^2)
// with X,Y standard normal and Z ~ Gamma(alpha, 1).
EnvelopeSet sample_hk(const HkParams& params, std::size_t n, std::uint64_t seed);

// Closed-form E[A^2] = 2*k*sigma^2 + 2*sigma^2, used as a moment oracle.
double second_moment(const HkParams& params);

// Rayleigh scale giving the requested SNR for a set of the given power:
// SNR = 10*log10(power / (2*sigma_N^2))  =>  sigma_N = sqrt(power / (2*10^(SNR/10))).
double rayleigh_noise_sigma(double mean_power, double snr_db);

// Contaminates each amplitude with circularly-phased Rayleigh noise at the
// requested SNR relative to the set's empirical power:
// a -> |a + r*exp(i*theta)|, r ~ Rayleigh(sigma_N), theta ~ U[0, 2pi).
EnvelopeSet add_rayleigh_noise(const EnvelopeSet& set, double snr_db, std::uint64_t seed);

// Homodyned-K density evaluated through its compound form: a Rice density
// with per-component variance sigma^2*z/alpha mixed over z ~ Gamma(alpha, 1).
// The mixing integral is computed on fixed-count trapezoid nodes in log z
// over a range adapted to the integrand's peak; every evaluation is verified
// by doubling the node count and an Error(numerical_accuracy) carries the
// residual if the two disagree.
class HkPdf {
 public:
  explicit HkPdf(const HkParams& params, int nodes = 64, double tolerance = 1e-4);

  // Density at amplitude a >= 0, convergence-checked.
  double operator()(double a) const;

  // Single quadrature pass with an explicit node count, no convergence check.
  double density_unchecked(double a, int nodes) const;

  const HkParams& params() const { return params_; }

  // Piecewise-linear CDF lookup table built by per-cell Gauss-Legendre
  // integration of the density, with geometric refinement around the
  // coherent amplitude where the density may have an integrable singularity.
  struct CdfTable {
    std::vector<double> knots;
    std::vector<double> cdf;
    double operator()(double a) const;
  };
  CdfTable cdf_table(double a_max, int cells = 4096) const;

 private:
  HkParams params_;
  int nodes_;
  double tol_;
};

// One-shot convenience wrapper around HkPdf.
double evaluate_pdf(const HkParams& params, double a);

// Direct evaluation of the density as the truncated oscillatory integral
//   a * int_0^umax u J0(u*eps) J0(u*a) (1 + u^2 sigma^2 / (2 alpha))^(-alpha) du
// (composite Simpson). Slowly converging; kept as an independent cross-check
// of the compound-form quadrature at moderate alpha.
double evaluate_pdf_bessel_integral(const HkParams& params, double a, double u_max, int panels);

}  // namespace hkq
