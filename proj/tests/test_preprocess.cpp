#include <doctest.h>

#include <cmath>
#include <memory>

#include "oracles.hpp"
#include "weakrec/preprocess.hpp"
#include "weakrec/rmt.hpp"
#include "weakrec/thresholds.hpp"

using namespace weakrec;

namespace {
std::shared_ptr<const Marginals> pr(Field f, double s2) {
  return std::make_shared<const Marginals>(Channel::phase_retrieval(f, s2));
}
}  // namespace

TEST_CASE("T* in the noiseless complex case") {
  const auto mg = pr(Field::Complex, 0.0);
  for (double y : {0.2, 0.7, 1.0, 3.0, 40.0}) CHECK(t_star(*mg, y) == doctest::Approx(1 - 1 / y).epsilon(1e-12));
  CHECK(t_star(*mg, 1.0) == doctest::Approx(0.0).epsilon(1e-15));
}

TEST_CASE("T* against a Monte Carlo ratio of marginals") {
  const Channel ch = Channel::phase_retrieval(Field::Complex, 0.25);
  const auto mg = pr(Field::Complex, 0.25);
  Rng rng = make_rng(31);
  std::exponential_distribution<double> ex(1.0);
  oracle::RunningMean a, b;
  for (int i = 0; i < 1000000; ++i) {
    const double u = ex(rng);
    const double p = ch.density(2.0, std::sqrt(u));
    a.add(p);
    b.add(p * u);
  }
  const double mc = 1 - a.mean() / b.mean();
  // delta method: relative errors of the two means add at most linearly
  const double tol = 3 * (a.stderr_() / a.mean() + b.stderr_() / b.mean()) * (1 - mc);
  CHECK(std::abs(t_star(*mg, 2.0) - mc) < tol);
  CHECK(t_star(*mg, 2.0) == doctest::Approx(1 - oracle::pr_complex_moment(2.0, 0.25, 0) /
                                                    oracle::pr_complex_moment(2.0, 0.25, 1)).epsilon(1e-9));
}

TEST_CASE("T*_delta moment identities") {
  const auto mg = pr(Field::Complex, 0.04);
  const double du = thresholds::delta_u(*mg);
  const double delta = 2.0;
  PreprocessSpec s;
  s.kind = PreprocessKind::OptimalDelta;
  s.delta = delta;
  const Preprocessor t(s, mg, du);
  auto z = [&](double y) { return t(y); };
  const double e1 = mg->integrate([&](double y) {
    const double v = z(y);
    return mg->m0(y) * v * v / ((1 - v) * (1 - v));
  }, 1e-10);
  const double e2 = mg->integrate([&](double y) {
    const double v = z(y);
    return mg->excess(y) * v / (1 - v);
  }, 1e-10);
  CHECK(std::abs(e1 - 1 / delta) < 1e-6);
  CHECK(std::abs(e2 - 1 / std::sqrt(delta * du)) < 1e-6);
  for (double y : {-0.2, 0.3, 1.0, 2.0, 5.0})
    CHECK(std::abs(t_star_delta(*mg, du * (1 + 1e-12), du, y) - t_star(*mg, y)) < 1e-9);
  CHECK_THROWS_WITH_AS(t_star_delta(*mg, 0.9 * du, du, 1.0), doctest::Contains("below spectral threshold"), Error);
}

TEST_CASE("optimal-pr closed form") {
  CHECK(t_star_pr(Field::Complex, 4.0, 1.0) == 0.0);
  CHECK(t_star_pr(Field::Complex, 4.0, 0.0) == doctest::Approx(-1.0));
  CHECK(t_star_pr(Field::Complex, 4.0, -3.0) == doctest::Approx(-1.0));
  CHECK(t_star_pr(Field::Complex, 4.0, 1e12) == doctest::Approx(1.0).epsilon(1e-9));
  CHECK(t_star_pr(Field::Real, 2.0, 0.0) == doctest::Approx(-1.0));
  double prev = -10;
  for (double y = 0; y < 50; y += 0.5) {
    const double v = t_star_pr(Field::Complex, 2.5, y);
    CHECK(v >= prev);
    CHECK(v < 1.0);
    CHECK(v >= -1 / (std::sqrt(2.5) - 1) - 1e-12);
    prev = v;
  }
}

TEST_CASE("clamp, positive part, trimming, subset") {
  const auto mg = pr(Field::Complex, 0.0);
  const Preprocessor c(PreprocessSpec::parse("optimal-clamped:40"), mg);
  const Preprocessor base(PreprocessSpec::parse("optimal-pr:1.001"), mg);
  for (double y : {0.0, 0.5, 0.999, 1.0, 3.0}) CHECK(c(y) == doctest::Approx(std::max(base(y), -40.0)));
  const Preprocessor pos(PreprocessSpec::parse("optimal-pr-positive:2"), mg);
  CHECK(pos(0.2) == 0.0);
  CHECK(pos(3.0) == doctest::Approx(t_star_pr(Field::Complex, 2.0, 3.0)));
  const Preprocessor sub(PreprocessSpec::parse("subset:2"), mg);
  CHECK(sub(1.9) == 0.0);
  CHECK(sub(2.1) == 1.0);
  const Preprocessor tr(PreprocessSpec::parse("trimming:5.25"), mg);
  CHECK(tr(5.0) == 5.0);
  CHECK(tr(6.0) == 0.0);
  CHECK(sub.nonnegative());
  CHECK(tr.bound() >= 5.25);
}

TEST_CASE("spec parsing and labels") {
  CHECK(PreprocessSpec::parse("trimming:5.25").t == 5.25);
  CHECK(PreprocessSpec::parse("optimal-clamped").M == 40.0);
  CHECK(PreprocessSpec::parse(PreprocessSpec::parse("subset:2").label()).t == 2.0);
  CHECK_THROWS_AS(PreprocessSpec::parse("bogus"), Error);
}

TEST_CASE("law of Z") {
  const auto mg = pr(Field::Complex, 0.0);
  const Preprocessor sub(PreprocessSpec::parse("subset:2"), mg);
  const ZLaw zs = zlaw(sub);
  CHECK(zs.expect([](double z) { return z; }) == doctest::Approx(std::exp(-2.0)).epsilon(1e-8));
  // Monte Carlo cross-check of P(Y > t)
  Rng rng = make_rng(32);
  std::exponential_distribution<double> ex(1.0);
  oracle::RunningMean m;
  for (int i = 0; i < 200000; ++i) m.add(ex(rng) > 2.0 ? 1.0 : 0.0);
  CHECK(std::abs(m.mean() - zs.expect([](double z) { return z; })) < 3 * m.stderr_());

  const auto mgn = pr(Field::Complex, 0.1);
  const Preprocessor tr(PreprocessSpec::parse("trimming:5.25"), mgn);
  const ZLaw zt = zlaw(tr);
  const double lhs = zt.expect_g2([](double z) { return z; }) - zt.expect([](double z) { return z; });
  const double rhs = mgn->integrate([&](double y) { return tr(y) * mgn->excess(y); }, 1e-10, {5.25});
  CHECK(lhs == doctest::Approx(rhs).epsilon(1e-6));
  double total = 0;
  for (double w : zt.w) total += w;
  CHECK(std::abs(total - 1) < 1e-6);

  const Preprocessor opr(PreprocessSpec::parse("optimal-pr:4"), mg);
  CHECK(zlaw(opr).tau == 1.0);
}

TEST_CASE("tau is positive for the optimal family and Z is not a.s. zero") {
  const auto mg = pr(Field::Real, 0.2);
  const double du = thresholds::delta_u(*mg);
  for (const char* s : {"optimal", "optimal-pr:2", "optimal-pr-positive:2", "optimal-clamped:40"}) {
    const ZLaw z = zlaw(Preprocessor(PreprocessSpec::parse(s), mg));
    CHECK(z.tau > 0);
    CHECK_FALSE(z.all_zero);
  }
  PreprocessSpec d;
  d.kind = PreprocessKind::OptimalDelta;
  d.delta = 2 * du;
  CHECK(zlaw(Preprocessor(d, mg, du)).tau > 0);
}

TEST_CASE("nonnegative preprocessing cannot reach delta_u") {
  const auto mg = pr(Field::Complex, 0.0);
  // at delta slightly above delta_u = 1 only signed preprocessing is informative
  for (const char* s : {"subset:2", "trimming:5.25", "optimal-pr-positive:1.05"}) {
    const auto p = rmt::predict(Preprocessor(PreprocessSpec::parse(s), mg), 1.05);
    CHECK_FALSE(p.informative);
  }
  CHECK(rmt::predict(Preprocessor(PreprocessSpec::parse("optimal-pr:1.05"), mg), 1.05).informative);
}

TEST_CASE("custom table") {
  const auto mg = pr(Field::Complex, 0.0);
  PreprocessSpec s;
  s.kind = PreprocessKind::Custom;
  s.table_y = {0.0, 1.0, 2.0};
  s.table_t = {-1e7, 0.0, 1.0};
  const Preprocessor t(s, mg);
  CHECK(t(0.0) == -1e6);
  CHECK(t(1.5) == doctest::Approx(0.5));
}
