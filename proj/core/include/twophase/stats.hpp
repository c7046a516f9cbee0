#pragma once

#include "twophase/rng.hpp"

namespace twophase::stats {

double inv_logit(double x);
double normal_cdf(double x);
double normal_quantile(double p);
/// Quantile of Student's t with `df` degrees of freedom.
double t_quantile(double df, double p);
/// Upper tail Pr(X > stat) for X ~ chi-square(df).
double chisq_upper_tail(double stat, double df);
double chisq_quantile(double p, double df);

double draw_normal(Rng& rng);
double draw_uniform(Rng& rng);
/// Draws from chi-square(df).
double draw_chisq(double df, Rng& rng);

/// N(mean, 1) truncated to (lower, +inf).
double draw_truncated_normal_above(double mean, double lower, Rng& rng);
/// N(mean, 1) truncated to (-inf, upper).
double draw_truncated_normal_below(double mean, double upper, Rng& rng);

}  // namespace twophase::stats
