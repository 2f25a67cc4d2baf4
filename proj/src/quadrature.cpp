#include "weakrec/quadrature.hpp"

#include <algorithm>
#include <cmath>

#include <boost/math/quadrature/gauss_kronrod.hpp>

namespace weakrec::quad {

namespace {

// Golub-Welsch: nodes are eigenvalues of the Jacobi matrix, weights mu0 * (first component)^2
Rule golub_welsch(const Eigen::VectorXd& diag, const Eigen::VectorXd& offdiag, double mu0) {
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es;
  es.computeFromTridiagonal(diag, offdiag, Eigen::ComputeEigenvectors);
  if (es.info() != Eigen::Success) throw Error("Golub-Welsch eigensolve failed");
  const auto n = diag.size();
  Rule r;
  r.x.resize(n);
  r.w.resize(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    r.x[i] = es.eigenvalues()(i);
    const double v = es.eigenvectors()(0, i);
    r.w[i] = mu0 * v * v;
  }
  return r;
}

}  // namespace

Rule gauss_legendre(int n) {
  if (n < 1) throw Error("gauss_legendre: n must be >= 1");
  if (n == 1) return Rule{{0.0}, {2.0}};
  Eigen::VectorXd a = Eigen::VectorXd::Zero(n), b(n - 1);
  for (int k = 1; k < n; ++k) b(k - 1) = k / std::sqrt(4.0 * k * k - 1.0);
  Rule r = golub_welsch(a, b, 2.0);
  // polish nodes with Newton on the Legendre recurrence; weights from P'_n
  for (int i = 0; i < n; ++i) {
    double x = r.x[i], dp = 1.0;
    for (int it = 0; it < 4; ++it) {
      double p0 = 1.0, p1 = x;
      for (int k = 2; k <= n; ++k) {
        const double p2 = ((2.0 * k - 1.0) * x * p1 - (k - 1.0) * p0) / k;
        p0 = p1;
        p1 = p2;
      }
      dp = n * (x * p1 - p0) / (x * x - 1.0);
      const double dx = p1 / dp;
      x -= dx;
      if (std::abs(dx) < 1e-16) break;
    }
    r.x[i] = x;
    r.w[i] = 2.0 / ((1.0 - x * x) * dp * dp);
  }
  return r;
}

Rule gauss_legendre(int n, double a, double b) {
  Rule r = gauss_legendre(n);
  const double h = 0.5 * (b - a), c = 0.5 * (a + b);
  for (std::size_t i = 0; i < r.size(); ++i) {
    r.x[i] = c + h * r.x[i];
    r.w[i] *= h;
  }
  return r;
}

Rule gauss_hermite(int n) {
  if (n < 1) throw Error("gauss_hermite: n must be >= 1");
  Eigen::VectorXd a = Eigen::VectorXd::Zero(n), b(std::max(n - 1, 0));
  for (int k = 1; k < n; ++k) b(k - 1) = std::sqrt(static_cast<double>(k));
  return golub_welsch(a, b, 1.0);
}

Rule gauss_laguerre(int n) {
  if (n < 1) throw Error("gauss_laguerre: n must be >= 1");
  Eigen::VectorXd a(n), b(std::max(n - 1, 0));
  for (int k = 0; k < n; ++k) a(k) = 2.0 * k + 1.0;
  for (int k = 1; k < n; ++k) b(k - 1) = k;
  return golub_welsch(a, b, 1.0);
}

Rule composite(const std::vector<double>& breaks, double max_width, int nodes_per_panel) {
  Rule out;
  const Rule base = gauss_legendre(nodes_per_panel);
  for (std::size_t s = 0; s + 1 < breaks.size(); ++s) {
    const double a = breaks[s], b = breaks[s + 1];
    if (!(b > a)) continue;
    const int panels = std::max(1, static_cast<int>(std::ceil((b - a) / max_width)));
    const double h = (b - a) / panels;
    for (int p = 0; p < panels; ++p) {
      const double lo = a + p * h, c = lo + 0.5 * h;
      for (std::size_t i = 0; i < base.size(); ++i) {
        out.x.push_back(c + 0.5 * h * base.x[i]);
        out.w.push_back(0.5 * h * base.w[i]);
      }
    }
  }
  return out;
}

void append_graded(Rule& rule, double a, double b, double first_width, double ratio,
                   int nodes_per_panel) {
  const Rule base = gauss_legendre(nodes_per_panel);
  const double dir = b > a ? 1.0 : -1.0;
  double lo = a, h = first_width;
  while (dir * (b - lo) > 0) {
    double hi = lo + dir * h;
    if (dir * (hi - b) > 0 || dir * (b - hi) < 0.5 * h) hi = b;
    const double c = 0.5 * (lo + hi), hw = 0.5 * std::abs(hi - lo);
    for (std::size_t i = 0; i < base.size(); ++i) {
      rule.x.push_back(c + hw * base.x[i]);
      rule.w.push_back(hw * base.w[i]);
    }
    lo = hi;
    h *= ratio;
  }
}

Piece gk31(const std::function<double(double)>& f, double a, double b, double rel_tol) {
  Piece p;
  if (a == b) return p;
  p.value = boost::math::quadrature::gauss_kronrod<double, 31>::integrate(f, a, b, 20, rel_tol, &p.err, &p.l1);
  if (!std::isfinite(p.value)) throw QuadratureError("quadrature produced a non-finite value", p.err);
  return p;
}

void check_error(double err, double l1, double fail_tol) {
  if (l1 > 0 && err > fail_tol * l1 && err > 1e-300)
    throw QuadratureError("adaptive quadrature did not converge: relative error " + std::to_string(err / l1),
                          err / l1);
}

double integrate(const std::function<double(double)>& f, double a, double b, double rel_tol,
                 double fail_tol) {
  const Piece p = gk31(f, a, b, rel_tol);
  check_error(p.err, p.l1, fail_tol);
  return p.value;
}

// the error budget is shared across pieces, so near-empty tail pieces do not fail on their own
double integrate(const std::function<double(double)>& f, const std::vector<double>& breaks,
                 double rel_tol, double fail_tol) {
  double s = 0.0, err = 0.0, l1 = 0.0;
  for (std::size_t i = 0; i + 1 < breaks.size(); ++i) {
    const Piece p = gk31(f, breaks[i], breaks[i + 1], rel_tol);
    s += p.value;
    err += p.err;
    l1 += p.l1;
  }
  check_error(err, l1, fail_tol);
  return s;
}

}  // namespace weakrec::quad
