#include <algorithm>
#include <cmath>
#include <sstream>

#include "hkq/hk_model.hpp"

namespace hkq {
namespace {

// ln(exp(-x) * I0(x)) via the Abramowitz & Stegun 9.8.1/9.8.2 polynomial
// approximations of the modified Bessel function I0 (|error| < 2e-7).
double log_i0e(double x) {
  x = std::fabs(x);
  if (x < 3.75) {
    const double t = (x / 3.75) * (x / 3.75);
    const double i0 =
        1.0 + t * (3.5156229 +
                   t * (3.0899424 +
                        t * (1.2067492 + t * (0.2659732 + t * (0.0360768 + t * 0.0045813)))));
    return std::log(i0) - x;
  }
  const double t = 3.75 / x;
  const double p =
      0.39894228 +
      t * (0.01328592 +
           t * (0.00225319 +
                t * (-0.00157565 +
                     t * (0.00916281 +
                          t * (-0.02057706 +
                               t * (0.02635537 + t * (-0.01647633 + t * 0.00392377)))))));
  return std::log(p) - 0.5 * std::log(x);
}

// Log integrand of the compound mixture in u = ln z (sigma normalized to 1):
//   gamma weight with Jacobian: alpha*u - e^u - lgamma(alpha)
//   Rice kernel:                ln a + ln alpha - u - c*e^{-u} + log_i0e(a*eps*alpha*e^{-u})
// where c = (a - eps)^2 * alpha / 2.
struct LogIntegrand {
  double alpha, eps, a, lga, c;

  LogIntegrand(double alpha_, double eps_, double a_)
      : alpha(alpha_), eps(eps_), a(a_), lga(std::lgamma(alpha_)), c(0.5 * (a_ - eps_) * (a_ - eps_) * alpha_) {}

  double operator()(double u) const {
    const double z = std::exp(u);
    const double inv = std::exp(-u);
    double v = alpha * u - z - lga + std::log(a) + std::log(alpha) - u;
    if (c > 0.0) v -= c * inv;
    if (eps > 0.0) v += log_i0e(a * eps * alpha * inv);
    return std::isnan(v) ? -std::numeric_limits<double>::infinity() : v;
  }
};

struct PeakRange {
  double lo, hi, fmax;
};

// Locates the integrand's peak from the analytic saddle of its dominant
// exponential terms and expands outward until the log value drops 46 below
// the maximum (relative mass ~1e-20).
PeakRange find_range(const LogIntegrand& f) {
  const double u0 = std::log(0.5 * (f.alpha + std::sqrt(f.alpha * f.alpha + 4.0 * f.c)));
  const double curv = std::exp(u0) + f.c * std::exp(-u0);
  const double w0 = std::clamp(1.0 / std::sqrt(std::max(curv, 1e-16)), 1e-8, 1.0);

  double umax = u0, fmax = f(u0);
  for (int j = -16; j <= 16; ++j) {
    const double u = u0 + 0.5 * w0 * static_cast<double>(j);
    const double v = f(u);
    if (v > fmax) {
      fmax = v;
      umax = u;
    }
  }

  constexpr double kDrop = 46.0;
  auto expand = [&](double dir) {
    double step = std::max(w0, 0.25);
    double u = umax;
    for (;;) {
      const double u2 = u + dir * step;
      if (f(u2) < fmax - kDrop) {
        double lo = u, hi = u2;
        for (int it = 0; it < 30; ++it) {
          const double mid = 0.5 * (lo + hi);
          (f(mid) < fmax - kDrop ? hi : lo) = mid;
        }
        return hi;
      }
      u = u2;
      step *= 1.6;
      if (std::fabs(u - umax) > 800.0) return u;
    }
  };
  return {expand(-1.0), expand(+1.0), fmax};
}

double trapezoid(const LogIntegrand& f, const PeakRange& r, int nodes) {
  const double h = (r.hi - r.lo) / static_cast<double>(nodes - 1);
  double s = 0.5 * (std::exp(f(r.lo) - r.fmax) + std::exp(f(r.hi) - r.fmax));
  for (int i = 1; i < nodes - 1; ++i) s += std::exp(f(r.lo + h * static_cast<double>(i)) - r.fmax);
  return s * h * std::exp(r.fmax);
}

}  // namespace

HkPdf::HkPdf(const HkParams& params, int nodes, double tolerance)
    : params_(params), nodes_(nodes), tol_(tolerance) {
  params_.validate();
  require(nodes_ >= 8, errc::configuration, "node count too small");
  require(tol_ > 0.0, errc::configuration, "tolerance must be positive");
}

double HkPdf::density_unchecked(double a, int nodes) const {
  require(a >= 0.0, errc::parameter_domain, "amplitude must be non-negative");
  if (a == 0.0) return 0.0;
  // sigma is a pure scale: pdf(a; sigma) = pdf(a/sigma; 1) / sigma.
  const double as = a / params_.sigma;
  const LogIntegrand f(params_.alpha, std::sqrt(2.0 * params_.k), as);
  const double v = trapezoid(f, find_range(f), nodes);
  return v / params_.sigma;
}

double HkPdf::operator()(double a) const {
  const double coarse = density_unchecked(a, nodes_);
  const double fine = density_unchecked(a, 2 * nodes_);
  const double residual = std::fabs(fine - coarse);
  if (residual > tol_ * std::max(std::fabs(fine), 1e-295)) {
    std::ostringstream os;
    os << "density quadrature did not converge at a=" << a << " (alpha=" << params_.alpha
       << ", k=" << params_.k << "): residual " << residual << " vs value " << fine;
    raise(errc::numerical_accuracy, os.str());
  }
  return fine;
}

double evaluate_pdf(const HkParams& params, double a) { return HkPdf(params)(a); }

double HkPdf::CdfTable::operator()(double a) const {
  if (knots.empty() || a <= knots.front()) return 0.0;
  if (a >= knots.back()) return cdf.back();
  const auto it = std::upper_bound(knots.begin(), knots.end(), a);
  const auto i = static_cast<std::size_t>(it - knots.begin());
  const double x0 = knots[i - 1], x1 = knots[i];
  const double t = (a - x0) / (x1 - x0);
  return cdf[i - 1] * (1.0 - t) + cdf[i] * t;
}

HkPdf::CdfTable HkPdf::cdf_table(double a_max, int cells) const {
  require(a_max > 0.0, errc::parameter_domain, "a_max must be positive");
  require(cells >= 16, errc::configuration, "cell count too small");

  std::vector<double> knots;
  knots.reserve(static_cast<std::size_t>(cells) + 96);
  for (int i = 0; i <= cells; ++i)
    knots.push_back(a_max * static_cast<double>(i) / static_cast<double>(cells));

  // The density may carry an integrable singularity at a = eps when alpha is
  // small; grade the mesh geometrically toward it so the cell quadrature
  // captures the log-type spike.
  const double eps = params_.coherent_amplitude();
  if (params_.k > 0.0 && params_.alpha < 2.0 && eps < a_max) {
    const double base = a_max / static_cast<double>(cells);
    double d = base;
    while (d > 1e-12 * std::max(1.0, eps)) {
      d *= 0.5;
      if (eps - d > 0.0) knots.push_back(eps - d);
      knots.push_back(eps + d);
    }
    std::sort(knots.begin(), knots.end());
    knots.erase(std::unique(knots.begin(), knots.end()), knots.end());
  }

  // 4-point Gauss-Legendre per cell.
  static constexpr double kX[2] = {0.3399810435848563, 0.8611363115940526};
  static constexpr double kW[2] = {0.6521451548625461, 0.3478548451374538};

  CdfTable table;
  table.knots = knots;
  table.cdf.resize(knots.size());
  table.cdf[0] = 0.0;
  double acc = 0.0;
  for (std::size_t i = 1; i < knots.size(); ++i) {
    const double half = 0.5 * (knots[i] - knots[i - 1]);
    const double mid = 0.5 * (knots[i] + knots[i - 1]);
    double cell = 0.0;
    for (int j = 0; j < 2; ++j) {
      cell += kW[j] * ((*this)(mid - half * kX[j]) + (*this)(mid + half * kX[j]));
    }
    acc += cell * half;
    table.cdf[i] = acc;
  }
  return table;
}

double evaluate_pdf_bessel_integral(const HkParams& params, double a, double u_max, int panels) {
  params.validate();
  require(a >= 0.0, errc::parameter_domain, "amplitude must be non-negative");
  require(u_max > 0.0 && panels >= 1, errc::configuration, "bad truncation parameters");
  if (a == 0.0) return 0.0;
  const double as = a / params.sigma;
  const double eps = std::sqrt(2.0 * params.k);
  const auto integrand = [&](double u) {
    return u * std::cyl_bessel_j(0.0, u * eps) * std::cyl_bessel_j(0.0, u * as) *
           std::pow(1.0 + u * u / (2.0 * params.alpha), -params.alpha);
  };
  const int n = 2 * panels;
  const double h = u_max / static_cast<double>(n);
  double s = integrand(0.0) + integrand(u_max);
  for (int i = 1; i < n; ++i) s += integrand(h * static_cast<double>(i)) * (i % 2 ? 4.0 : 2.0);
  return as * s * h / 3.0 / params.sigma;
}

}  // namespace hkq
