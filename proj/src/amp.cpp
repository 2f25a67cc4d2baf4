#include "weakrec/amp.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <numbers>

#include "weakrec/dense.hpp"
#include "weakrec/kernels.hpp"

namespace weakrec::amp {

namespace {

constexpr int kHermiteNodes = 96;
constexpr double kBandSigmas = 9.0;
constexpr double kTail = 12.0;

double normal_pdf(double x) { return std::exp(-0.5 * x * x) / std::sqrt(2.0 * std::numbers::pi); }

void check_channel(const Channel& ch) {
  if (ch.field() != Field::Real) throw Error("amp: real field only");
  if (ch.kind() == ChannelKind::PhaseRetrieval && ch.sigma2() < kSigma2Floor)
    throw Error("amp: sigma2 must be at least 1e-3 (p(y|g) has to be differentiable)");
}

}  // namespace

GampFunctions::GampFunctions(std::shared_ptr<const Marginals> mg)
    : mg_(std::move(mg)), hermite_(quad::gauss_hermite(kHermiteNodes)) {
  check_channel(mg_->channel());
}

quad::Rule GampFunctions::gaussian_rule(double y, double c, double s) const {
  const Channel& ch = mg_->channel();
  if (ch.kind() != ChannelKind::PhaseRetrieval) {
    quad::Rule r = hermite_;
    for (auto& v : r.x) v = c + s * v;
    return r;
  }
  // p(y|g) lives where |g^2 - y| is within a few sigma; outside that band it is below exp(-40)
  const double sig = ch.sigma();
  const double top = y + kBandSigmas * sig;
  quad::Rule r;
  if (top <= 0.0) return r;
  const double hi = std::sqrt(top), lo = std::sqrt(std::max(0.0, y - kBandSigmas * sig));
  std::vector<std::pair<double, double>> bands;
  if (lo == 0.0)
    bands = {{-hi, hi}};
  else
    bands = {{-hi, -lo}, {lo, hi}};
  const double ga = c - kTail * s, gb = c + kTail * s;
  const quad::Rule gl = quad::gauss_legendre(8);
  const double root = std::sqrt(sig);
  for (auto [a, b] : bands) {
    a = std::max(a, ga);
    b = std::min(b, gb);
    double g = a;
    while (g < b) {
      // half a standard deviation of the peak in g, and of the Gaussian weight
      const double far = std::max(std::abs(g), std::abs(std::min(b, g + 0.5 * s)));
      const double width = std::min(0.5 * s, sig / (2.0 * far + root));
      const double e = std::min(b, g + width);
      const double half = 0.5 * (e - g), mid = 0.5 * (e + g);
      for (std::size_t k = 0; k < gl.size(); ++k) {
        const double gk = mid + half * gl.x[k];
        const double xi = (gk - c) / s;
        r.x.push_back(gk);
        r.w.push_back(half * gl.w[k] * normal_pdf(xi) / s);
      }
      g = e;
    }
  }
  return r;
}

GampFunctions::Moments GampFunctions::moments(double x, double y, double qbar, bool second) const {
  const Channel& ch = mg_->channel();
  const quad::Rule r = gaussian_rule(y, qbar * x, std::sqrt(qbar));
  Moments m;
  for (std::size_t k = 0; k < r.size(); ++k) {
    m.s0 += r.w[k] * ch.density(y, r.x[k]);
    m.s1 += r.w[k] * ch.grad_density(y, r.x[k], 1);
    if (second) m.s2 += r.w[k] * ch.grad_density(y, r.x[k], 2);
  }
  return m;
}

double GampFunctions::F(double x, double y, double qbar) const {
  if (!(qbar > 0.0 && qbar <= 1.0)) throw Error("F: qbar must be in (0, 1]");
  const Moments m = moments(x, y, qbar, false);
  if (m.s0 < 1e-300) {
    saturated_.fetch_add(1);
    return 0.0;
  }
  return m.s1 / m.s0;
}

double GampFunctions::G(double x, double y, double qbar) const {
  if (!(qbar > 0.0 && qbar <= 1.0)) throw Error("G: qbar must be in (0, 1]");
  const Moments m = moments(x, y, qbar, true);
  if (m.s0 < 1e-300) {
    saturated_.fetch_add(1);
    return 0.0;
  }
  const double f = m.s1 / m.s0;
  return m.s2 / m.s0 - f * f;
}

double GampFunctions::h(double q, double rel_tol) const {
  if (!(q >= 0.0 && q < 1.0)) throw Error("h: q must be in [0, 1)");
  if (q == 0.0) {
    // E_G0 collapses: (E dp(y|G))^2 / E p(y|G)
    return mg_->integrate(
        [&](double y) {
          const double m0 = mg_->m0(y);
          if (m0 < 1e-300) return 0.0;
          const double m1 = mg_->m1(y);
          return m1 * m1 / m0;
        },
        rel_tol);
  }
  const double sq = std::sqrt(q);
  return mg_->integrate(
      [&](double y) {
        // x = sqrt(q) G0 / (1 - q) puts F's argument at sqrt(q) G0 + sqrt(1 - q) G1
        double acc = 0.0;
        for (std::size_t k = 0; k < hermite_.size(); ++k) {
          const Moments m = moments(sq * hermite_.x[k] / (1.0 - q), y, 1.0 - q, false);
          if (m.s0 >= 1e-300) acc += hermite_.w[k] * m.s1 * m.s1 / m.s0;
        }
        return acc;
      },
      rel_tol);
}

namespace {

// int dy E_W{ fn(W, y) } with W ~ N(0, var), Gauss-Hermite in W
template <class Fn>
double integrate_w(const GampFunctions& fn, double var, double rel_tol, Fn&& inner) {
  static const quad::Rule gh = quad::gauss_hermite(kHermiteNodes);
  const double sd = std::sqrt(var);
  return fn.marginals().integrate(
      [&](double y) {
        double acc = 0.0;
        for (std::size_t k = 0; k < gh.size(); ++k) acc += gh.w[k] * inner(sd * gh.x[k], y);
        return acc;
      },
      rel_tol);
}

}  // namespace

double onsager(const GampFunctions& fn, double delta, double mu, double rel_tol) {
  if (!(mu > 0.0)) {
    // W = 0 and Y ~ m0: E F'(0, Y; 1) = int E d2p(y|G) dy
    return delta * fn.marginals().integrate(
                       [&](double y) { return fn.marginals().m0(y) * fn.F_prime(0.0, y, 1.0); }, rel_tol);
  }
  const double qbar = 1.0 / (1.0 + mu);
  const double var = mu * mu + mu;
  // G0 | W ~ N(a W, b^2)
  const double a = mu / var, b = std::sqrt(1.0 - mu * mu / var);
  const Channel& ch = fn.channel();
  const double e = integrate_w(fn, var, rel_tol, [&](double w, double y) {
    const quad::Rule r = fn.gaussian_rule(y, a * w, b);
    double pc = 0.0;
    for (std::size_t k = 0; k < r.size(); ++k) pc += r.w[k] * ch.density(y, r.x[k]);
    if (pc == 0.0) return 0.0;
    return pc * fn.F_prime(w, y, qbar);
  });
  return delta * e;
}

std::vector<SEState> state_evolution(const GampFunctions& fn, double delta, double mu0, int t_max, bool with_b,
                                     double rel_tol) {
  if (!(mu0 >= 0.0)) throw Error("state evolution: mu0 must be >= 0");
  if (t_max < 0) throw Error("state evolution: t_max must be >= 0");
  std::vector<SEState> out;
  double mu = mu0;
  for (int t = 0; t <= t_max; ++t) {
    SEState s;
    s.mu = mu;
    s.q = mu / (1.0 + mu);
    if (with_b) s.b = onsager(fn, delta, mu);
    out.push_back(s);
    if (t < t_max) mu = delta * fn.h(s.q, rel_tol);
  }
  return out;
}

std::vector<SEState> state_evolution_general(const GampFunctions& fn, double delta, double mu0, double tau0_2,
                                             int t_max, double rel_tol) {
  if (!(tau0_2 > 0.0)) throw Error("state evolution: tau0^2 must be positive");
  const Channel& ch = fn.channel();
  std::vector<SEState> out;
  double mu = mu0, tau2 = tau0_2;
  // started on tau^2 = mu, the recursion has to stay there
  const bool on_diagonal = std::abs(tau0_2 - mu0) <= 1e-12 * std::max(1.0, mu0);
  for (int t = 0; t <= t_max; ++t) {
    SEState s;
    s.mu = mu;
    s.q = mu / (1.0 + mu);
    s.tau2 = tau2;
    out.push_back(s);
    if (on_diagonal && std::abs(tau2 - mu) > 1e-10 * std::max(1.0, mu))
      throw Error("state evolution: tau^2 = " + std::to_string(tau2) + " departs from mu = " + std::to_string(mu));
    if (t == t_max) break;
    const double qbar = 1.0 - s.q;
    // W = mu X0 + tau G; X0 | W ~ N(a W, b^2)
    const double var = mu * mu + tau2;
    const double a = mu / var, b = std::sqrt(tau2 / var);
    // both integrals use the same y and W nodes
    const double num = integrate_w(fn, var, rel_tol, [&](double w, double y) {
      const quad::Rule r = fn.gaussian_rule(y, a * w, b);
      double p1 = 0.0;
      for (std::size_t j = 0; j < r.size(); ++j) p1 += r.w[j] * ch.grad_density(y, r.x[j], 1);
      return p1 * fn.F(w, y, qbar);
    });
    const double den = integrate_w(fn, var, rel_tol, [&](double w, double y) {
      const quad::Rule r = fn.gaussian_rule(y, a * w, b);
      double p0 = 0.0;
      for (std::size_t j = 0; j < r.size(); ++j) p0 += r.w[j] * ch.density(y, r.x[j]);
      const double f = fn.F(w, y, qbar);
      return p0 * f * f;
    });
    mu = delta * num;
    tau2 = delta * den;
  }
  return out;
}

Eigen::VectorXd calibrated_init(const Eigen::VectorXd& x, double mu0, Rng& rng) {
  const Eigen::Index d = x.size();
  const double dd = static_cast<double>(d);
  if (std::abs(x.squaredNorm() - dd) > 1e-8 * dd) throw Error("calibrated_init: ||x||^2 must equal d");
  std::normal_distribution<double> nd;
  Eigen::VectorXd g(d);
  for (Eigen::Index i = 0; i < d; ++i) g(i) = nd(rng);
  g -= (g.dot(x) / dd) * x;
  g *= std::sqrt(dd) / g.norm();
  return mu0 * x + std::sqrt(mu0) * g;
}

AmpResult amp_run(const RowMat<double>& a, const Eigen::VectorXd& y, const Eigen::VectorXd& x,
                  const GampFunctions& fn, const std::vector<SEState>& se, const Eigen::VectorXd& z0, int t_max,
                  const AmpOptions& opt) {
  const Eigen::Index n = a.rows(), d = a.cols();
  if (y.size() != n || x.size() != d || z0.size() != d) throw Error("amp_run: dimension mismatch");
  if (static_cast<int>(se.size()) < t_max + 1) throw Error("amp_run: state evolution track too short");
  if (opt.onsager == OnsagerMode::StateEvolution)
    for (int t = 0; t < t_max; ++t)
      if (std::isnan(se[static_cast<std::size_t>(t)].b))
        throw Error("amp_run: state evolution track carries no Onsager coefficients");
  const long before = fn.saturations();
  const double dd = static_cast<double>(d);
  const double delta = static_cast<double>(n) / dd;
  const auto rows = kernels::rows(a, n);

  AmpResult res;
  AmpState& st = res.state;
  st.z = z0;
  st.zhat = Eigen::VectorXd::Zero(n);
  Eigen::VectorXd fprev = Eigen::VectorXd::Zero(n), fcur(n), fder(n), az(n), atf(d);

  auto record = [&](int t, double b, bool have_zhat) {
    AmpRecord r;
    r.t = t;
    r.mu_se = se[static_cast<std::size_t>(t)].mu;
    r.q_se = se[static_cast<std::size_t>(t)].q;
    r.overlap_emp = x.dot(st.z) / dd;
    r.znorm_emp = st.z.squaredNorm() / dd;
    if (have_zhat) r.zhat_norm = st.zhat.squaredNorm() / static_cast<double>(n);
    r.b = b;
    res.trajectory.push_back(r);
  };

  for (int t = 0; t <= t_max; ++t) {
    st.t = t;
    kernels::matvec_omp<double>(rows, st.z, az);
    st.zhat = az - fprev;
    if (t == t_max) {
      record(t, 0.0, true);
      break;
    }
    const double qbar = 1.0 - se[static_cast<std::size_t>(t)].q;
    const bool need_der = opt.onsager == OnsagerMode::Empirical;
#pragma omp parallel for schedule(static)
    for (Eigen::Index i = 0; i < n; ++i) {
      fcur(i) = fn.F(st.zhat(i), y(i), qbar);
      if (need_der) fder(i) = fn.F_prime(st.zhat(i), y(i), qbar);
    }
    double b = 0.0;
    if (opt.onsager == OnsagerMode::StateEvolution)
      b = se[static_cast<std::size_t>(t)].b;
    else if (opt.onsager == OnsagerMode::Empirical)
      b = delta * fder.mean();
    st.b = b;
    record(t, b, true);
    kernels::adjoint_omp<double>(rows, fcur, atf);
    st.z = atf - b * st.z;
    fprev = fcur;
    if (!std::isfinite(st.z.norm()) || st.z.norm() > opt.divergence * std::sqrt(dd)) {
      res.diverged = true;
      st.t = t + 1;
      AmpRecord r;
      r.t = t + 1;
      r.mu_se = se[static_cast<std::size_t>(t + 1)].mu;
      r.q_se = se[static_cast<std::size_t>(t + 1)].q;
      r.overlap_emp = x.dot(st.z) / dd;
      r.znorm_emp = st.z.squaredNorm() / dd;
      res.trajectory.push_back(r);
      res.warnings.push_back("AMP diverged at t = " + std::to_string(t + 1));
      break;
    }
  }
  const long sat = fn.saturations() - before;
  if (sat > 0) res.warnings.push_back(std::to_string(sat) + " evaluations of F saturated (E p < 1e-300)");
  return res;
}

void write_trajectory_csv(const std::string& path, const std::vector<AmpRecord>& rows) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write " + path);
  out << "t,mu_SE,q_SE,overlap_emp,znorm_emp\n" << std::setprecision(12);
  for (const auto& r : rows)
    out << r.t << ',' << r.mu_se << ',' << r.q_se << ',' << r.overlap_emp << ',' << r.znorm_emp << '\n';
}

LinearizedModel linearized_top_eig(const RowMat<double>& a, const Eigen::VectorXd& y, const Marginals& mg,
                                   double delta_u, bool require_real) {
  check_channel(mg.channel());
  const Eigen::Index n = a.rows(), d = a.cols();
  if (y.size() != n) throw Error("linearized_top_eig: dimension mismatch");
  if (n + d > 8192) throw Error("linearized_top_eig: n + d must not exceed 8192");
  LinearizedModel lm;
  lm.J.resize(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const double m0 = mg.m0(y(i));
    lm.J(i) = m0 > 1e-300 ? mg.excess(y(i)) / m0 : 0.0;
  }
  Eigen::MatrixXd L(n + d, n + d);
  const Eigen::MatrixXd ad = a;
  const Eigen::MatrixXd atj = ad.transpose() * lm.J.asDiagonal();
  L.topLeftCorner(d, d) = atj * ad;
  L.topRightCorner(d, n) = -(atj * lm.J.asDiagonal());
  L.bottomLeftCorner(n, d) = ad;
  L.bottomRightCorner(n, n) = -Eigen::MatrixXd(lm.J.asDiagonal());
  lm.eigenvalues = dense::eigenvalues(L);
  lm.top_eig = -kInf;
  for (Eigen::Index k = 0; k < lm.eigenvalues.size(); ++k) {
    const cplx ev = lm.eigenvalues(k);
    lm.top_eig = std::max(lm.top_eig, ev.real());
    lm.max_imag = std::max(lm.max_imag, std::abs(ev.imag()));
    if (std::abs(ev.imag()) <= 1e-8 * std::max(1.0, std::abs(ev.real()))) continue;
    lm.real_spectrum = false;
    if (require_real)
      throw Error("linearized_top_eig: eigenvalue " + std::to_string(ev.real()) + " + " +
                  std::to_string(ev.imag()) + "i of L_n is not real");
  }

  const double delta = static_cast<double>(n) / static_cast<double>(d);
  lm.alpha_bar = std::sqrt(delta / delta_u);
  Eigen::VectorXd w(n);
  for (Eigen::Index i = 0; i < n; ++i) w(i) = lm.J(i) / (lm.J(i) + lm.alpha_bar);
  lm.dstar_top = dense::top_eigs<double>(dense::weighted_gram<double>(a, n, w, 1.0), 1, false).values(0);
  return lm;
}

}  // namespace weakrec::amp
