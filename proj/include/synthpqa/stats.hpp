#pragma once

namespace synthpqa::stats {

/// Regularized incomplete beta I_x(a, b), continued-fraction evaluation.
/// Requires a > 0, b > 0, 0 <= x <= 1.
double incomplete_beta(double a, double b, double x);

/// Student's t cumulative distribution with `df` degrees of freedom.
double student_t_cdf(double t, double df);

/// Two-sided tail probability P(|T| >= |t|).
double student_t_two_sided_p(double t, double df);

}  // namespace synthpqa::stats
