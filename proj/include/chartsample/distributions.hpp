#pragma once

#include <cstddef>

namespace chartsample::stats {

/// Upper tail P(F > f) of the F distribution.
double f_sf(double f, double df1, double df2);

/// Quantile of Student's t distribution.
double t_quantile(double p, double df);

/// P(Q <= q) for the studentized range of k means with df error degrees of
/// freedom (df <= 0 means infinite). Evaluated by composite Gauss-Legendre
/// quadrature.
double studentized_range_cdf(double q, std::size_t k, double df);
double studentized_range_sf(double q, std::size_t k, double df);

}  // namespace chartsample::stats
