#include "chartsample/distributions.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <vector>

#include <boost/math/distributions/chi_squared.hpp>
#include <boost/math/distributions/fisher_f.hpp>
#include <boost/math/distributions/students_t.hpp>
#include <boost/math/quadrature/gauss.hpp>
#include <boost/math/special_functions/gamma.hpp>

#include "chartsample/errors.hpp"

namespace chartsample::stats {

namespace bm = boost::math;

double f_sf(double f, double df1, double df2) {
  if (!(df1 > 0 && df2 > 0)) throw ArgumentError("F distribution needs positive degrees of freedom");
  if (std::isnan(f)) return std::numeric_limits<double>::quiet_NaN();
  if (f <= 0) return 1.0;
  if (std::isinf(f)) return 0.0;
  return bm::cdf(bm::complement(bm::fisher_f_distribution<double>(df1, df2), f));
}

double t_quantile(double p, double df) {
  if (!(df > 0)) throw ArgumentError("t distribution needs positive degrees of freedom");
  return bm::quantile(bm::students_t_distribution<double>(df), p);
}

namespace {

constexpr double kInvSqrt2 = 0.70710678118654752440;
constexpr double kInvSqrt2Pi = 0.39894228040143267794;
constexpr int kInnerPieces = 12;
constexpr int kOuterPieces = 16;

double phi(double z) { return kInvSqrt2Pi * std::exp(-0.5 * z * z); }

/// Composite 30-point Gauss-Legendre over equal pieces. The integrands here
/// are smooth, so a fixed rule is both faster and steadier than adaptive
/// refinement against a relative tolerance.
template <typename F>
double composite_gauss(F f, double lo, double hi, int pieces) {
  const double width = (hi - lo) / pieces;
  double total = 0.0;
  for (int p = 0; p < pieces; ++p) {
    const double a = lo + p * width;
    total += bm::quadrature::gauss<double, 30>::integrate(f, a, a + width);
  }
  return total;
}

/// Gauss-Legendre nodes over [-9, 9] (phi is below 1e-17 outside) with
/// phi(z) folded into the weights and Phi(z) cached.
struct InnerRule {
  std::vector<double> z, weight, cdf;

  InnerRule() {
    const auto& abscissa = bm::quadrature::gauss<double, 30>::abscissa();
    const auto& weights = bm::quadrature::gauss<double, 30>::weights();
    const double width = 18.0 / kInnerPieces;
    auto add = [&](double x, double w) {
      z.push_back(x);
      weight.push_back(w * phi(x));
      cdf.push_back(0.5 * std::erfc(-x * kInvSqrt2));
    };
    for (int p = 0; p < kInnerPieces; ++p) {
      const double mid = -9.0 + (p + 0.5) * width, half = 0.5 * width;
      for (std::size_t i = 0; i < abscissa.size(); ++i) {
        if (abscissa[i] == 0.0) {
          add(mid, half * weights[i]);
        } else {
          add(mid - half * abscissa[i], half * weights[i]);
          add(mid + half * abscissa[i], half * weights[i]);
        }
      }
    }
  }
};

/// P(range of k standard normals <= w).
double normal_range_cdf(double w, std::size_t k) {
  if (w <= 0) return 0.0;
  static const InnerRule rule;
  const double km1 = static_cast<double>(k - 1);
  double value = 0.0;
  for (std::size_t i = 0; i < rule.z.size(); ++i) {
    const double inner = rule.cdf[i] - 0.5 * std::erfc(-(rule.z[i] - w) * kInvSqrt2);  // Phi(z) - Phi(z - w)
    if (inner > 0.0) value += rule.weight[i] * std::pow(inner, km1);
  }
  return std::min(1.0, static_cast<double>(k) * value);
}

}  // namespace

double studentized_range_cdf(double q, std::size_t k, double df) {
  if (k < 2) throw ArgumentError("studentized range needs at least two means");
  if (std::isnan(q)) return std::numeric_limits<double>::quiet_NaN();
  if (q <= 0) return 0.0;
  if (std::isinf(q)) return 1.0;
  if (df <= 0 || std::isinf(df)) return normal_range_cdf(q, k);

  // Q = W / S with S = sqrt(chi2_df / df); integrate over the density of S.
  const bm::chi_squared_distribution<double> chi(df);
  const double s_lo = std::sqrt(bm::quantile(chi, 1e-20) / df);
  const double s_hi = std::sqrt(bm::quantile(bm::complement(chi, 1e-20)) / df);
  const double log_norm = std::log(2.0) + 0.5 * df * std::log(0.5 * df) - bm::lgamma(0.5 * df);
  auto density = [&](double s) {
    if (s <= 0) return 0.0;
    return std::exp(log_norm + (df - 1.0) * std::log(s) - 0.5 * df * s * s);
  };
  auto integrand = [&](double s) { return density(s) * normal_range_cdf(q * s, k); };
  const double value = composite_gauss(integrand, s_lo, s_hi, kOuterPieces);
  return std::clamp(value, 0.0, 1.0);
}

double studentized_range_sf(double q, std::size_t k, double df) { return 1.0 - studentized_range_cdf(q, k, df); }

}  // namespace chartsample::stats
