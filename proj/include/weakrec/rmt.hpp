#pragma once

#include <string>
#include <vector>

#include "weakrec/preprocess.hpp"

// Asymptotic spectrum of D_n in the unit-variance normalization (rows with O(1) scalar
// products). D_n built from rows of variance 1/d is smaller by a factor d.
namespace weakrec::rmt {

struct DomainError : Error {
  using Error::Error;
};

class SpectralFunctions {
 public:
  SpectralFunctions(ZLaw law, double delta);

  const ZLaw& law() const { return law_; }
  double delta() const { return delta_; }
  double tau() const { return law_.tau; }

  double psi(double lambda) const;
  double phi(double lambda) const;
  double psi_prime(double lambda) const;
  double phi_prime(double lambda) const;

  // argmin of psi over [tau, inf)
  double lambda_bar() const;
  double zeta(double lambda) const;

 private:
  template <class F>
  double sum(double lambda, bool g2, F&& f) const;

  ZLaw law_;
  double delta_;
  mutable double lambda_bar_ = -1.0;
  mutable bool have_lambda_bar_ = false;
};

struct OverlapPrediction {
  double lambda_bar = 0.0;
  double lambda_star = 0.0;
  double rho2 = 0.0;
  double lam1 = 0.0;
  double lam2 = 0.0;
  bool informative = false;
  std::vector<std::string> warnings;
};

OverlapPrediction solve_fixed_point(const SpectralFunctions& sf);
OverlapPrediction predict(const Preprocessor& t, double delta);

struct SpectralLaw {
  ZLaw h;
  double alpha_star = 0.0;
  double delta = 0.0;
};

// limit of the top eigenvalue of (1/n) U M U^*
double spike_map(const SpectralLaw& law);

}  // namespace weakrec::rmt
