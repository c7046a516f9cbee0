#include "twophase/stats.hpp"

#include <boost/math/distributions/chi_squared.hpp>
#include <boost/math/distributions/normal.hpp>
#include <boost/math/distributions/students_t.hpp>
#include <boost/math/special_functions/gamma.hpp>
#include <cmath>
#include <limits>

namespace twophase::stats {

double inv_logit(double x) {
  if (x >= 0) {
    return 1.0 / (1.0 + std::exp(-x));
  }
  const double e = std::exp(x);
  return e / (1.0 + e);
}

double normal_cdf(double x) { return 0.5 * std::erfc(-x / std::sqrt(2.0)); }

double normal_quantile(double p) {
  return boost::math::quantile(boost::math::normal_distribution<double>(), p);
}

double t_quantile(double df, double p) {
  return boost::math::quantile(boost::math::students_t_distribution<double>(df),
                               p);
}

double chisq_upper_tail(double stat, double df) {
  if (stat <= 0) return 1.0;
  return boost::math::gamma_q(df / 2.0, stat / 2.0);
}

double chisq_quantile(double p, double df) {
  return boost::math::quantile(
      boost::math::chi_squared_distribution<double>(df), p);
}

double draw_normal(Rng& rng) {
  return std::normal_distribution<double>(0.0, 1.0)(rng);
}

double draw_uniform(Rng& rng) {
  return std::uniform_real_distribution<double>(0.0, 1.0)(rng);
}

double draw_chisq(double df, Rng& rng) {
  return 2.0 * std::gamma_distribution<double>(df / 2.0, 1.0)(rng);
}

namespace {

// Standard normal truncated to (a, inf).
double std_truncated_above(double a, Rng& rng) {
  if (a < 0.45) {
    for (;;) {
      const double z = draw_normal(rng);
      if (z > a) return z;
    }
  }
  // Exponential proposal with the optimal rate (Robert 1995).
  const double rate = 0.5 * (a + std::sqrt(a * a + 4.0));
  for (;;) {
    const double z = a - std::log(draw_uniform(rng)) / rate;
    const double d = z - rate;
    if (draw_uniform(rng) <= std::exp(-0.5 * d * d)) return z;
  }
}

}  // namespace

double draw_truncated_normal_above(double mean, double lower, Rng& rng) {
  return mean + std_truncated_above(lower - mean, rng);
}

double draw_truncated_normal_below(double mean, double upper, Rng& rng) {
  return mean - std_truncated_above(mean - upper, rng);
}

}  // namespace twophase::stats
