#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <memory>

#include "oracles.hpp"
#include "weakrec/amp.hpp"
#include "weakrec/preprocess.hpp"
#include "weakrec/sensing.hpp"
#include "weakrec/thresholds.hpp"

using namespace weakrec;
using namespace weakrec::amp;

namespace {
std::shared_ptr<const Marginals> real_pr(double s2) {
  return std::make_shared<const Marginals>(Channel::phase_retrieval(Field::Real, s2));
}

// F by adaptive quadrature in g, independent of the peak-following rule
double F_oracle(double x, double y, double qbar, double s2) {
  const double c = qbar * x, s = std::sqrt(qbar), sig = std::sqrt(s2);
  auto p = [&](double g) { return oracle::normal_pdf(y, g * g, sig); };
  auto dp = [&](double g) { return p(g) * 2 * g * (y - g * g) / s2; };
  double num = 0, den = 0;
  const double lo = c - 12 * s, hi = c + 12 * s;
  std::vector<double> br{lo};
  if (y > 0)
    for (double r : {-std::sqrt(y), std::sqrt(y)})
      if (r > lo && r < hi) br.push_back(r);
  br.push_back(hi);
  std::sort(br.begin(), br.end());
  for (std::size_t i = 0; i + 1 < br.size(); ++i) {
    num += oracle::gk([&](double g) { return oracle::normal_pdf(g, c, s) * dp(g); }, br[i], br[i + 1]);
    den += oracle::gk([&](double g) { return oracle::normal_pdf(g, c, s) * p(g); }, br[i], br[i + 1]);
  }
  return num / den;
}
}  // namespace

TEST_CASE("channel requirements") {
  CHECK_THROWS_AS(GampFunctions(std::make_shared<const Marginals>(Channel::phase_retrieval(Field::Complex, 0.3))), Error);
  CHECK_THROWS_AS(GampFunctions(real_pr(1e-4)), Error);
}

TEST_CASE("F(0, y; 1) = 0 and G(0, y; 1) = T*/(1 - T*)") {
  const auto mg = real_pr(0.3);
  const GampFunctions fn(mg);
  for (double y : {-0.5, 0.1, 0.8, 1.5, 4.0}) {
    CHECK(std::abs(fn.F(0.0, y, 1.0)) < 1e-12);
    const double t = t_star(*mg, y);
    CHECK(fn.G(0.0, y, 1.0) == doctest::Approx(t / (1 - t)).epsilon(1e-7));
  }
}

TEST_CASE("F against adaptive quadrature") {
  for (double s2 : {0.01, 0.1, 0.5}) {
    const GampFunctions fn(real_pr(s2));
    for (double x : {-1.0, 0.4, 2.0})
      for (double y : {0.2, 1.2, 3.0})
        for (double qb : {0.3, 0.7, 1.0}) CHECK(fn.F(x, y, qb) == doctest::Approx(F_oracle(x, y, qb, s2)).epsilon(1e-6));
  }
}

TEST_CASE("F against Monte Carlo at (0.4, 1.2, 0.7)") {
  const double s2 = 0.5, x = 0.4, y = 1.2, qb = 0.7;
  const GampFunctions fn(real_pr(s2));
  const Channel& ch = fn.channel();
  Rng rng = make_rng(71);
  std::normal_distribution<double> nd;
  oracle::RunningMean num, den;
  std::vector<double> a, b;
  for (int i = 0; i < 1000000; ++i) {
    const double g = qb * x + std::sqrt(qb) * nd(rng);
    num.add(ch.grad_density(y, g, 1));
    den.add(ch.density(y, g));
  }
  const double mc = num.mean() / den.mean();
  const double tol = 3 * std::abs(mc) * (num.stderr_() / std::abs(num.mean()) + den.stderr_() / den.mean());
  MESSAGE("F " << fn.F(x, y, qb) << " Monte Carlo " << mc << " +- " << tol / 3);
  CHECK(std::abs(fn.F(x, y, qb) - mc) < tol);
}

TEST_CASE("F' is qbar G and matches central differences") {
  const GampFunctions fn(real_pr(0.2));
  const double h = 1e-5;
  for (double x : {-0.7, 0.3, 1.1}) {
    const double fd = (fn.F(x + h, 0.9, 0.6) - fn.F(x - h, 0.9, 0.6)) / (2 * h);
    CHECK(fn.F_prime(x, 0.9, 0.6) == doctest::Approx(fd).epsilon(1e-5));
  }
}

TEST_CASE("h(0) = 0, local slope delta/delta_u, contraction below threshold") {
  const auto mg = real_pr(0.3);
  const GampFunctions fn(mg);
  const double du = thresholds::delta_u(*mg);
  CHECK(std::abs(fn.h(0.0)) < 1e-12);
  for (double r : {0.7, 1.5}) {
    const double delta = r * du;
    const auto se = state_evolution(fn, delta, 1e-4, 1);
    const double slope = se[1].mu / se[0].q;
    CHECK(std::abs(slope / r - 1) < 0.01);
  }
  const auto se = state_evolution(fn, 0.7 * du, 0.01, 30);
  for (std::size_t t = 1; t < se.size(); ++t) CHECK(se[t].mu < se[t - 1].mu);
  CHECK(se.back().mu < 1e-5);
  const auto up = state_evolution(fn, 1.5 * du, 0.01, 30);
  CHECK(up.back().mu > 0.1);
}

TEST_CASE("non-even channel: mu = 0 is not a fixed point") {
  ChannelTable t;
  for (int i = 0; i <= 60; ++i) t.g.push_back(-3.0 + 0.1 * i);
  for (int j = 0; j <= 200; ++j) t.y.push_back(-6.0 + 0.06 * j);
  t.p = Eigen::MatrixXd(t.g.size(), t.y.size());
  for (std::size_t i = 0; i < t.g.size(); ++i)
    for (std::size_t j = 0; j < t.y.size(); ++j)
      t.p(Eigen::Index(i), Eigen::Index(j)) = oracle::normal_pdf(t.y[j], t.g[i], 0.7);
  const auto mg = std::make_shared<const Marginals>(Channel::custom(Field::Real, t));
  const GampFunctions fn(mg);
  CHECK(fn.h(0.0) > 0.1);
  CHECK(state_evolution(fn, 0.5, 0.0, 1)[1].mu > 0.05);
}

TEST_CASE("general recursion keeps tau^2 = mu") {
  const GampFunctions fn(real_pr(0.3));
  const auto g = state_evolution_general(fn, 1.2, 0.2, 0.2, 6);
  const auto s = state_evolution(fn, 1.2, 0.2, 6);
  for (std::size_t t = 0; t < g.size(); ++t) {
    CHECK(std::abs(g[t].tau2 - g[t].mu) < 1e-10 * std::max(1.0, g[t].mu));
    CHECK(g[t].mu == doctest::Approx(s[t].mu).epsilon(1e-7));
  }
  // off the diagonal both tracks run freely
  const auto off = state_evolution_general(fn, 1.2, 0.2, 0.5, 3);
  CHECK(off.size() == 4);
}

TEST_CASE("Onsager coefficient by quadrature matches the Nishimori identity") {
  const GampFunctions fn(real_pr(0.3));
  for (double mu : {0.0, 0.3, 1.5}) {
    const double delta = 1.3;
    const double next = delta * fn.h(mu / (1 + mu));
    CHECK(onsager(fn, delta, mu) == doctest::Approx(-next / (1 + mu)).epsilon(1e-5));
  }
}

TEST_CASE("calibrated initialization") {
  Rng rng = make_rng(72);
  const auto x = sample_signal<double>(1000, rng);
  const auto z = calibrated_init(x, 0.3, rng);
  CHECK(x.dot(z) / 1000 == doctest::Approx(0.3).epsilon(1e-12));
  CHECK(z.squaredNorm() / 1000 == doctest::Approx(0.09 + 0.3).epsilon(1e-12));
}

TEST_CASE("AMP tracks state evolution; without Onsager it does not") {
  const auto mg = real_pr(0.3);
  const GampFunctions fn(mg);
  const double du = thresholds::delta_u(*mg);
  const int d = 4096;
  const double delta = 1.5 * du;
  const long n = std::lround(delta * d);
  Rng rng = make_rng(73);
  const auto x = sample_signal<double>(d, rng);
  const auto e = RealGaussian::sample(n, d, rng);
  const auto m = measure<double>(e.apply(x), mg->channel(), rng);
  const auto z0 = calibrated_init(x, 0.5, rng);
  const auto se = state_evolution(fn, delta, 0.5, 6, true);
  const auto r = amp_run(e.matrix(), m.y, x, fn, se, z0, 6);
  CHECK_FALSE(r.diverged);
  for (const auto& rec : r.trajectory) {
    CHECK(std::abs(rec.overlap_emp - rec.mu_se) < 0.06);
    CHECK(std::abs(rec.znorm_emp - (rec.mu_se * rec.mu_se + rec.mu_se)) < 0.1);
  }
  AmpOptions emp;
  emp.onsager = OnsagerMode::Empirical;
  const auto re = amp_run(e.matrix(), m.y, x, fn, se, z0, 3, emp);
  CHECK(std::abs(re.trajectory[3].overlap_emp - r.trajectory[3].overlap_emp) < 0.05);
  AmpOptions off;
  off.onsager = OnsagerMode::Off;
  const auto ro = amp_run(e.matrix(), m.y, x, fn, se, z0, 3, off);
  const auto& t3 = ro.trajectory[3];
  const double gap = std::max(std::abs(t3.overlap_emp - t3.mu_se), std::abs(t3.znorm_emp - (t3.mu_se * t3.mu_se + t3.mu_se)));
  CHECK(gap > 0.1);

  const auto path = (std::filesystem::temp_directory_path() / "weakrec_traj.csv").string();
  write_trajectory_csv(path, r.trajectory);
  std::ifstream in(path);
  std::string header;
  std::getline(in, header);
  CHECK(header == "t,mu_SE,q_SE,overlap_emp,znorm_emp");
  std::filesystem::remove(path);
}

TEST_CASE("linearized operator at d = 256") {
  const auto mg = real_pr(0.3);
  const double du = thresholds::delta_u(*mg);
  const int d = 256;
  const long n = std::lround(1.5 * du * d);
  Rng rng = make_rng(74);
  const auto x = sample_signal<double>(d, rng);
  const auto e = RealGaussian::sample(n, d, rng);
  const auto m = measure<double>(e.apply(x), mg->channel(), rng);
  const auto lm = linearized_top_eig(e.matrix(), m.y, *mg, du, false);
  MESSAGE("top " << lm.top_eig << " max imag " << lm.max_imag << " D* top " << lm.dstar_top);
  CHECK(lm.eigenvalues.size() == n + d);
  if (lm.real_spectrum)
    CHECK_NOTHROW(linearized_top_eig(e.matrix(), m.y, *mg, du));
  else
    CHECK_THROWS_AS(linearized_top_eig(e.matrix(), m.y, *mg, du), Error);
  // L_n factors through an n-dimensional space
  int zeros = 0;
  for (Eigen::Index i = 0; i < lm.eigenvalues.size(); ++i)
    if (std::abs(lm.eigenvalues(i)) < 1e-8) ++zeros;
  CHECK(zeros >= d);
  for (Eigen::Index i = 0; i < n; ++i) {
    const double t = t_star(*mg, m.y(i));
    CHECK(lm.J(i) == doctest::Approx(t / (1 - t)).epsilon(1e-9));
  }
  // a nonzero real eigenvalue alpha of L_n makes sum_i j_i / (j_i + alpha) a_i a_i^T have eigenvalue 1
  double alpha = -1e300;
  for (Eigen::Index i = 0; i < lm.eigenvalues.size(); ++i)
    if (std::abs(lm.eigenvalues(i).imag()) < 1e-10) alpha = std::max(alpha, lm.eigenvalues(i).real());
  REQUIRE(alpha > 1e-6);
  const Eigen::MatrixXd a = e.matrix();
  const Eigen::VectorXd w = lm.J.array() / (lm.J.array() + alpha);
  const Eigen::MatrixXd dstar = a.transpose() * w.asDiagonal() * a;
  const Eigen::VectorXd ev = Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd>(dstar).eigenvalues();
  CHECK((ev.array() - 1.0).abs().minCoeff() < 1e-6);
}
