#include <doctest.h>

#include "weakrec/kernels.hpp"
#include "weakrec/sensing.hpp"

using namespace weakrec;

TEST_CASE_TEMPLATE("kernels agree with dense algebra", S, double, cplx) {
  Rng rng = make_rng(21);
  const Eigen::Index n = 301, d = 57;
  const auto e = GaussianEnsemble<S>::sample(n, d, rng);
  const auto a = kernels::rows<S>(e.matrix(), n);
  const Eigen::VectorXd w = Eigen::VectorXd::Random(n);
  const Vec<S> v = Vec<S>::Random(d);
  const Vec<S> u = Vec<S>::Random(n);
  const Vec<S> ref = e.matrix().adjoint() * (w.cast<S>().asDiagonal() * (e.matrix() * v)) / double(n);

  Vec<S> o1, o2;
  kernels::weighted_gram_serial<S>(a, w, v, o1);
  kernels::weighted_gram_omp<S>(a, w, v, o2);
  CHECK((o1 - ref).norm() < 1e-12 * ref.norm());
  CHECK((o2 - ref).norm() < 1e-12 * ref.norm());

  kernels::matvec_serial<S>(a, v, o1);
  kernels::matvec_omp<S>(a, v, o2);
  CHECK((o1 - e.matrix() * v).norm() < 1e-12 * o1.norm());
  CHECK((o2 - o1).norm() < 1e-13 * o1.norm());

  kernels::adjoint_serial<S>(a, u, o1);
  kernels::adjoint_omp<S>(a, u, o2);
  const Vec<S> aref = e.matrix().adjoint() * u;
  CHECK((o1 - aref).norm() < 1e-12 * aref.norm());
  CHECK((o2 - aref).norm() < 1e-12 * aref.norm());

  Eigen::MatrixXd W(n, 3);
  W << w, Eigen::VectorXd::Ones(n), -w;
  Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic> V(d, 3), B1, B2;
  V << v, v, v;
  kernels::weighted_gram_block_serial<S>(a, W, V, B1);
  kernels::weighted_gram_block_omp<S>(a, W, V, B2);
  CHECK((B1.col(0) - ref).norm() < 1e-12 * ref.norm());
  CHECK((B1.col(2) + ref).norm() < 1e-12 * ref.norm());
  CHECK((B2 - B1).norm() < 1e-12 * B1.norm());
}

TEST_CASE("leading-row view") {
  Rng rng = make_rng(22);
  const auto e = RealGaussian::sample(40, 9, rng);
  const auto a = kernels::rows<double>(e.matrix(), 25);
  CHECK(a.rows() == 25);
  CHECK(a(24, 8) == e.matrix()(24, 8));
}
