#include "weakrec/rmt.hpp"

#include <algorithm>
#include <cmath>

namespace weakrec::rmt {

namespace {

constexpr double kPole = 1e-12;
constexpr double kPoleMass = 1e-9;
constexpr double kTol = 1e-10;
constexpr int kMaxBisect = 200;

double hi_limit(double tau) { return tau + 1e6 * (1.0 + std::abs(tau)); }

// smallest h > lo (by doubling the step) with f(h) > 0
template <class F>
double expand_bracket(F&& f, double lo, double tau, const char* what) {
  double step = 1.0 + std::abs(lo);
  double hi = lo + step;
  while (!(f(hi) > 0.0)) {
    step *= 2.0;
    hi = lo + step;
    if (hi > hi_limit(tau)) throw Error(std::string(what) + ": bracket expansion exceeded lambda_hi");
  }
  return hi;
}

// f(lo) <= 0 < f(hi)
template <class F>
double bisect(F&& f, double lo, double hi) {
  for (int it = 0; it < kMaxBisect && hi - lo > kTol; ++it) {
    const double mid = 0.5 * (lo + hi);
    if (f(mid) > 0.0)
      hi = mid;
    else
      lo = mid;
  }
  return 0.5 * (lo + hi);
}

}  // namespace

SpectralFunctions::SpectralFunctions(ZLaw law, double delta) : law_(std::move(law)), delta_(delta) {
  if (!(delta > 0)) throw Error("spectral functions: delta must be positive");
  if (law_.z.empty()) throw Error("spectral functions: empty law");
}

template <class F>
double SpectralFunctions::sum(double lambda, bool g2, F&& f) const {
  if (lambda < law_.tau) throw DomainError("lambda must not be below tau");
  const auto& w = g2 ? law_.w_g2 : law_.w;
  double acc = 0.0, excluded = 0.0;
  for (std::size_t k = 0; k < law_.z.size(); ++k) {
    const double gap = lambda - law_.z[k];
    if (std::abs(gap) < kPole) {
      excluded += law_.w[k];
      continue;
    }
    acc += w[k] * f(law_.z[k], gap);
  }
  if (excluded > kPoleMass) throw DomainError("lambda sits on an atom of Z (weight " + std::to_string(excluded) + ")");
  return acc;
}

double SpectralFunctions::psi(double lambda) const {
  return lambda * (1.0 / delta_ + sum(lambda, false, [](double z, double g) { return z / g; }));
}

double SpectralFunctions::phi(double lambda) const {
  return lambda * sum(lambda, true, [](double z, double g) { return z / g; });
}

double SpectralFunctions::psi_prime(double lambda) const {
  return 1.0 / delta_ - sum(lambda, false, [](double z, double g) { return z * z / (g * g); });
}

double SpectralFunctions::phi_prime(double lambda) const {
  return -sum(lambda, true, [](double z, double g) { return z * z / (g * g); });
}

double SpectralFunctions::lambda_bar() const {
  if (have_lambda_bar_) return lambda_bar_;
  const double tau = law_.tau;
  const bool atom_at_tau = law_.tau_mass > kPoleMass;
  double lb;
  if (!atom_at_tau && psi_prime(tau) >= 0.0) {
    lb = tau;
  } else {
    auto f = [&](double l) { return l <= tau ? -kInf : psi_prime(l); };
    const double hi = expand_bracket(f, tau, tau, "lambda_bar");
    lb = bisect(f, tau, hi);
  }
  lambda_bar_ = lb;
  have_lambda_bar_ = true;
  return lb;
}

double SpectralFunctions::zeta(double lambda) const { return psi(std::max(lambda, lambda_bar())); }

OverlapPrediction solve_fixed_point(const SpectralFunctions& sf) {
  OverlapPrediction out;
  const ZLaw& law = sf.law();
  if (law.all_zero) {
    out.warnings.push_back("P(Z = 0) = 1: no spectral information");
    return out;
  }
  if (!(law.tau > 0.0)) {
    out.warnings.push_back("Z has no positive support: spectral estimator is uninformative");
    return out;
  }
  const double lb = sf.lambda_bar();
  out.lambda_bar = lb;
  if (lb == law.tau && law.tau_mass <= kPoleMass)
    out.warnings.push_back("psi' does not diverge at tau; lambda_bar is on the boundary");
  const double psi_lb = sf.psi(lb);
  out.lam2 = psi_lb;
  auto g = [&](double l) { return sf.psi(l) - sf.phi(l); };
  if (g(lb) >= 0.0) {
    out.lambda_star = lb;
    out.lam1 = psi_lb;
    return out;
  }
  const double hi = expand_bracket(g, lb, law.tau, "fixed point");
  const double ls = bisect(g, lb, hi);
  out.lambda_star = ls;
  out.lam1 = sf.psi(ls);
  const double dpsi = sf.psi_prime(ls);
  if (dpsi > 0.0) {
    const double r = dpsi / (dpsi - sf.phi_prime(ls));
    out.rho2 = std::clamp(r, 0.0, 1.0);
    out.informative = out.rho2 > 0.0;
  } else {
    out.lam1 = psi_lb;
  }
  return out;
}

OverlapPrediction predict(const Preprocessor& t, double delta) {
  return solve_fixed_point(SpectralFunctions(zlaw(t), delta));
}

double spike_map(const SpectralLaw& law) {
  if (!(law.alpha_star > law.h.tau)) throw Error("spike map: alpha_star lies inside the support of H");
  const SpectralFunctions sf(law.h, law.delta);
  if (sf.psi_prime(law.alpha_star) > 0.0) return sf.psi(law.alpha_star);
  return sf.psi(sf.lambda_bar());
}

}  // namespace weakrec::rmt
