#include <doctest.h>

#include <cmath>
#include <memory>
#include <random>

#include "weakrec/dense.hpp"
#include "weakrec/preprocess.hpp"
#include "weakrec/rmt.hpp"
#include "weakrec/sensing.hpp"
#include "weakrec/spectral.hpp"

using namespace weakrec;
using namespace weakrec::spectral;

namespace {
template <class S>
Operator<S> diag_op(const Eigen::VectorXd& e) {
  return [e](const Vec<S>& v, Vec<S>& out) { out = e.cast<S>().cwiseProduct(v); };
}
}  // namespace

TEST_CASE_TEMPLATE("apply_D matches dense materialization", S, double, cplx) {
  Rng rng = make_rng(51);
  const auto e = GaussianEnsemble<S>::sample(128, 64, rng);
  const Eigen::VectorXd t = Eigen::VectorXd::Random(128);
  const Vec<S> v = Vec<S>::Random(64), w = Vec<S>::Random(64);
  const auto dm = dense::weighted_gram<S>(e.matrix(), 128, t, 1.0 / 128);
  CHECK((apply_D<S>(e.matrix(), 128, t, v) - dm * v).norm() < 1e-10);
  const Vec<S> lin = apply_D<S>(e.matrix(), 128, t, Vec<S>(2.0 * v + 3.0 * w));
  CHECK((lin - 2.0 * apply_D<S>(e.matrix(), 128, t, v) - 3.0 * apply_D<S>(e.matrix(), 128, t, w)).norm() < 1e-12);
  WeightedGram<S> g(e.matrix(), 128, t, 2.0);
  Vec<S> o;
  g.apply(0, v, o);
  CHECK((o - 2.0 * dm * v).norm() < 1e-10);
}

TEST_CASE("Wishart mean") {
  Rng rng = make_rng(52);
  const int d = 400;
  const auto e = ComplexGaussian::sample(d, d, rng);
  const Eigen::VectorXcd v = random_unit<cplx>(d, rng);
  // (1/n) A^*A has mean I/d in the 1/d-variance convention, so scale by d
  const double q = v.dot(apply_D<cplx>(e.matrix(), d, Eigen::VectorXd::Ones(d), v, d)).real();
  CHECK(std::abs(q - 1.0) < 5 * std::sqrt(2.0 / d));
}

TEST_CASE("power method on diagonal operators") {
  Rng rng = make_rng(53);
  Eigen::VectorXd e(3);
  e << 3, 1, 0.5;
  PowerOptions po;
  const auto r = power_method<double>(diag_op<double>(e), 3, po, rng);
  CHECK(r.converged);
  CHECK(r.eigval == doctest::Approx(3.0).epsilon(1e-6));
  CHECK(std::abs(r.xhat(0)) == doctest::Approx(1.0).epsilon(1e-6));
  CHECK(std::abs(r.xhat.norm() - 1) < 1e-12);

  Eigen::VectorXd f(2);
  f << 2, -5;
  const auto wrong = power_method<double>(diag_op<double>(f), 2, po, rng);
  CHECK(wrong.eigval == doctest::Approx(-5.0).epsilon(1e-6));
  po.shift = 6;
  const auto right = power_method<double>(diag_op<double>(f), 2, po, rng);
  CHECK(right.eigval == doctest::Approx(2.0).epsilon(1e-6));
  CHECK(right.shift == 6.0);
  CHECK(std::abs(right.xhat(0)) == doctest::Approx(1.0).epsilon(1e-6));

  Eigen::VectorXd g(2);
  g << 1, 0.5;
  po.shift = 0;
  po.max_iter = 5;  // shorter than the stopping lag
  CHECK_FALSE(power_method<double>(diag_op<double>(g), 2, po, rng).converged);
}

TEST_CASE("deflation and lanczos find the second eigenvalue") {
  Rng rng = make_rng(54);
  Eigen::VectorXd e = Eigen::VectorXd::LinSpaced(200, -1, 1);
  e(17) = 3.0;
  e(50) = 2.0;
  PowerOptions po;
  po.shift = 2;
  const auto top = power_method<double>(diag_op<double>(e), 200, po, rng);
  const auto sec = power_method_deflated<double>(diag_op<double>(e), top.xhat, po, rng);
  CHECK(sec.eigval == doctest::Approx(2.0).epsilon(1e-5));
  LanczosOptions lo;
  lo.nev = 2;
  const auto l = lanczos<double>(diag_op<double>(e), 200, lo, rng);
  CHECK(l.converged);
  CHECK(l.eigval == doctest::Approx(3.0).epsilon(1e-9));
  CHECK(l.eigval2 == doctest::Approx(2.0).epsilon(1e-9));
}

TEST_CASE("overlap") {
  Rng rng = make_rng(55);
  const Eigen::VectorXcd x = random_unit<cplx>(30, rng);
  CHECK(overlap<cplx>(x, x) == doctest::Approx(1.0).epsilon(1e-14));
  CHECK(overlap<cplx>(Eigen::VectorXcd(x * std::polar(1.0, 1.234)), x) == doctest::Approx(1.0).epsilon(1e-14));
  Eigen::VectorXd a = Eigen::VectorXd::Zero(4), b = Eigen::VectorXd::Zero(4);
  a(0) = 1;
  b(1) = 2;
  CHECK(overlap<double>(a, b) == 0.0);
  CHECK_THROWS_AS(overlap<double>(Eigen::VectorXd::Zero(4), b), Error);
}

TEST_CASE("solvers agree on a Gaussian instance, shift invariance") {
  Rng rng = make_rng(56);
  const int d = 300, n = 1200;
  const auto x = sample_signal<cplx>(d, rng);
  const auto e = ComplexGaussian::sample(n, d, rng);
  const auto mg = std::make_shared<const Marginals>(Channel::phase_retrieval(Field::Complex, 0.0));
  const auto m = measure<cplx>(e.apply(x), mg->channel(), rng);
  const Preprocessor t(PreprocessSpec::parse("optimal-pr:4"), mg);
  const Eigen::VectorXd w = t.apply(m.y);
  const WeightedGram<cplx> g(e.matrix(), n, w, d);
  PowerOptions po;
  po.tol = 1e-12;
  po.max_iter = 100000;
  po.shift = 3;
  const auto p1 = power_method<cplx>(g.op(0), d, po, rng);
  po.shift = 6;
  const auto p2 = power_method<cplx>(g.op(0), d, po, rng);
  const auto de = dense_top<cplx>(e.matrix(), n, w, d);
  LanczosOptions lo;
  lo.nev = 2;
  lo.tol = 1e-10;
  const auto la = lanczos<cplx>(g.op(0), d, lo, rng);
  CHECK(p1.converged);
  CHECK(p2.converged);
  CHECK(std::abs(overlap<cplx>(p1.xhat, x) - overlap<cplx>(p2.xhat, x)) < 1e-6);
  CHECK(std::abs(overlap<cplx>(de.xhat, x) - overlap<cplx>(la.xhat, x)) < 1e-6);
  CHECK(std::abs(overlap<cplx>(de.xhat, x) - overlap<cplx>(p1.xhat, x)) < 1e-5);
  CHECK(la.eigval == doctest::Approx(de.eigval).epsilon(1e-9));
  CHECK(la.eigval2 == doctest::Approx(de.eigval2).epsilon(1e-8));
}

TEST_CASE("block lanczos equals per-operator lanczos") {
  Rng rng = make_rng(57);
  const int d = 150, n = 450;
  const auto e = RealGaussian::sample(n, d, rng);
  Eigen::MatrixXd w(n, 2);
  w.col(0) = Eigen::VectorXd::Random(n);
  w.col(1) = Eigen::VectorXd::Random(n).cwiseAbs();
  const WeightedGram<double> g(e.matrix(), n, w, d);
  LanczosOptions lo;
  lo.nev = 2;
  lo.tol = 1e-10;
  const auto blk = lanczos<double>(g.block(), 2, d, lo, rng);
  for (int j = 0; j < 2; ++j) {
    const auto de = dense_top<double>(e.matrix(), n, w.col(j), d);
    CHECK(blk[static_cast<std::size_t>(j)].eigval == doctest::Approx(de.eigval).epsilon(1e-9));
    CHECK(blk[static_cast<std::size_t>(j)].eigval2 == doctest::Approx(de.eigval2).epsilon(1e-8));
  }
}

TEST_CASE("determinism") {
  auto run = [] {
    Rng rng = make_rng(58);
    const auto e = RealGaussian::sample(200, 50, rng);
    Eigen::VectorXd w(200);
    std::normal_distribution<double> nd;
    for (auto& v : w) v = nd(rng);
    const WeightedGram<double> g(e.matrix(), 200, w, 50);
    PowerOptions po;
    po.shift = 5;
    return power_method<double>(g.op(0), 50, po, rng).xhat;
  };
  CHECK((run() - run()).norm() == 0.0);
}

TEST_CASE("clamped optimal-pr with shift 100 at delta = 6 matches the prediction") {
  Rng rng = make_rng(59);
  const int d = 4096, n = 6 * d;
  const auto x = sample_signal<cplx>(d, rng);
  const auto e = ComplexGaussian::sample(n, d, rng);
  const auto mg = std::make_shared<const Marginals>(Channel::phase_retrieval(Field::Complex, 0.0));
  const auto m = measure<cplx>(e.apply(x), mg->channel(), rng);
  const Preprocessor t(PreprocessSpec::parse("optimal-clamped:40"), mg);
  const WeightedGram<cplx> g(e.matrix(), n, t.apply(m.y), d);
  PowerOptions po;
  po.shift = 100;
  const auto r = power_method<cplx>(g.op(0), d, po, rng);
  const double ov = overlap<cplx>(r.xhat, x);
  const auto p = rmt::predict(t, 6.0);
  MESSAGE("overlap^2 " << ov * ov << " predicted " << p.rho2 << " iterations " << r.iters);
  CHECK(std::abs(ov * ov - p.rho2) < 0.05);
}
