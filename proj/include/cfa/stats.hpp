#pragma once

namespace cfa {

// Standard normal density.
double normal_pdf(double x);

// Standard normal CDF, accurate to ~1e-15 over the useful range.
double normal_cdf(double x);

// Inverse of the standard normal CDF (quantile function).
// Rational-approximation implementation (Wichura's PPND16 scheme),
// absolute error below 1e-13 for p in (0, 1). Throws std::domain_error
// for p outside (0, 1).
double inverse_normal_cdf(double p);

}  // namespace cfa
