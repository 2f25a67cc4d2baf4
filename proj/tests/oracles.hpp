#pragma once

// Independent reference computations used only by the tests.

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <numbers>
#include <vector>

#include <boost/math/quadrature/gauss_kronrod.hpp>

namespace oracle {

inline double gk(const std::function<double(double)>& f, double a, double b) {
  return boost::math::quadrature::gauss_kronrod<double, 61>::integrate(f, a, b, 20, 1e-13);
}

inline double normal_pdf(double x, double mu, double s) {
  const double z = (x - mu) / s;
  return std::exp(-0.5 * z * z) / (s * std::sqrt(2 * std::numbers::pi));
}

// E{p(y | G) |G|^{2k}}, |G|^2 ~ Exp(1), p = N(y; |G|^2, sigma^2)
inline double pr_complex_moment(double y, double s2, int k) {
  const double s = std::sqrt(s2);
  auto f = [&](double u) { return std::exp(-u) * std::pow(u, k) * normal_pdf(y, u, s); };
  const double lo = std::max(0.0, y - 14 * s), hi = std::max(lo + 1.0, y + 14 * s);
  double v = gk(f, lo, hi);
  if (lo > 0) v += gk(f, 0.0, lo);
  return v + gk(f, hi, std::numeric_limits<double>::infinity());
}

// E{p(y | G) G^{2k}}, G ~ N(0, 1), p = N(y; G^2, sigma^2)
inline double pr_real_moment(double y, double s2, int k) {
  const double s = std::sqrt(s2);
  auto f = [&](double g) { return 2 * normal_pdf(g, 0, 1) * std::pow(g, 2 * k) * normal_pdf(y, g * g, s); };
  const double r = std::sqrt(std::max(0.0, y));
  const double lo = std::sqrt(std::max(0.0, y - 14 * s)), hi = std::sqrt(std::max(0.0, y + 14 * s)) + 1e-3;
  double v = 0;
  if (lo > 0) v += gk(f, 0.0, lo);
  v += gk(f, lo, std::max(r, lo + 1e-9)) + gk(f, std::max(r, lo + 1e-9), hi);
  return v + gk(f, hi, std::numeric_limits<double>::infinity());
}

struct RunningMean {
  double n = 0, m = 0, s = 0;
  void add(double x) {
    n += 1;
    const double d = x - m;
    m += d / n;
    s += d * (x - m);
  }
  double mean() const { return m; }
  double stderr_() const { return std::sqrt(s / (n - 1) / n); }
};

// one-sample Kolmogorov-Smirnov p-value (asymptotic law with the Stephens correction)
inline double ks_pvalue(std::vector<double> sample, const std::function<double(double)>& cdf) {
  std::sort(sample.begin(), sample.end());
  const double n = static_cast<double>(sample.size());
  double dmax = 0;
  for (std::size_t i = 0; i < sample.size(); ++i) {
    const double f = cdf(sample[i]);
    dmax = std::max({dmax, (static_cast<double>(i) + 1) / n - f, f - static_cast<double>(i) / n});
  }
  const double t = (std::sqrt(n) + 0.12 + 0.11 / std::sqrt(n)) * dmax;
  double p = 0;
  for (int k = 1; k <= 100; ++k) p += 2 * ((k % 2) ? 1 : -1) * std::exp(-2.0 * k * k * t * t);
  return std::clamp(p, 0.0, 1.0);
}

}  // namespace oracle
