#pragma once

#include <functional>
#include <vector>

#include "weakrec/common.hpp"

namespace weakrec::quad {

struct Rule {
  std::vector<double> x;
  std::vector<double> w;
  std::size_t size() const { return x.size(); }
};

Rule gauss_legendre(int n);                      // on [-1, 1]
Rule gauss_legendre(int n, double a, double b);
Rule gauss_hermite(int n);                       // weight: standard normal density
Rule gauss_laguerre(int n);                      // weight: exp(-x) on [0, inf)

// Gauss-Legendre panels between consecutive breakpoints, no panel wider than max_width.
Rule composite(const std::vector<double>& breaks, double max_width, int nodes_per_panel);

// Geometric panels on [a, b] graded toward `a` (ratio > 1 grows panel widths away from a).
void append_graded(Rule& rule, double a, double b, double first_width, double ratio,
                   int nodes_per_panel);

struct QuadratureError : Error {
  double achieved;
  QuadratureError(const std::string& what, double achieved_error)
      : Error(what), achieved(achieved_error) {}
};

struct Piece {
  double value = 0.0, err = 0.0, l1 = 0.0;
};

// one adaptive Gauss-Kronrod pass; no convergence check
Piece gk31(const std::function<double(double)>& f, double a, double b, double rel_tol);
// throws QuadratureError when err > fail_tol * l1
void check_error(double err, double l1, double fail_tol);

// Adaptive Gauss-Kronrod. Throws QuadratureError when the estimated relative error exceeds
// `fail_tol` (relative to the L1 norm of the integrand).
double integrate(const std::function<double(double)>& f, double a, double b,
                 double rel_tol = 1e-8, double fail_tol = 1e-6);

double integrate(const std::function<double(double)>& f, const std::vector<double>& breaks,
                 double rel_tol = 1e-8, double fail_tol = 1e-6);

}  // namespace weakrec::quad
