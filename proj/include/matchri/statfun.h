#pragma once

namespace matchri::statfun {

/// Standard normal CDF.
double norm_cdf(double x);

/// Inverse of norm_cdf on (0, 1). Throws ConfigError outside the open interval.
double norm_quantile(double u);

/// Regularized lower incomplete gamma P(a, z) for a > 0, z >= 0.
/// Series expansion for z < a + 1, Lentz continued fraction otherwise.
double reg_lower_gamma(double a, double z);

/// Chi-squared CDF with `dof` degrees of freedom.
double chi2_cdf(double x, int dof);

/// Chi-squared quantile: bracketing, bisection, then Newton polishing.
double chi2_quantile(double u, int dof);

/// x -> (Q^{-1}(Phi(x); dof) - dof) / sqrt(2 dof). Maps a standard normal draw
/// to a centered, unit-variance chi-squared draw (monotone in x).
double chi2_transform(double x, int dof);

}  // namespace matchri::statfun
