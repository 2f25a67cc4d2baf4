#include "weakrec/kernels.hpp"

#include <algorithm>
#include <vector>

namespace weakrec::kernels {

namespace {

template <class Scalar>
using Mat = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;

constexpr Eigen::Index kMaxBlocks = 64;
constexpr Eigen::Index kChunk = 8;

Eigen::Index block_count(Eigen::Index n) { return std::max<Eigen::Index>(1, std::min(kMaxBlocks, n / kChunk)); }

Eigen::Index block_begin(Eigen::Index b, Eigen::Index nb, Eigen::Index n) { return (n * b) / nb; }

template <class Scalar>
void fused_rows(const ConstRows<Scalar>& a, Eigen::Index r0, Eigen::Index r1, const Eigen::MatrixXd& w,
                const Mat<Scalar>& v, double inv_n, Mat<Scalar>& acc) {
  Mat<Scalar> s;
  for (Eigen::Index r = r0; r < r1; r += kChunk) {
    const Eigen::Index m = std::min(kChunk, r1 - r);
    const auto chunk = a.middleRows(r, m);
    s.noalias() = chunk * v;
    s.array() *= (w.middleRows(r, m).array() * inv_n).template cast<Scalar>();
    acc.noalias() += chunk.adjoint() * s;
  }
}

}  // namespace

template <class Scalar>
void weighted_gram_serial(const ConstRows<Scalar>& a, const Eigen::VectorXd& w, const Vec<Scalar>& v,
                          Vec<Scalar>& out) {
  Vec<Scalar> t = a * v;
  for (Eigen::Index i = 0; i < t.size(); ++i) t(i) *= w(i) / static_cast<double>(a.rows());
  out = a.adjoint() * t;
}

template <class Scalar>
void weighted_gram_block_serial(const ConstRows<Scalar>& a, const Eigen::MatrixXd& w, const Mat<Scalar>& v,
                                Mat<Scalar>& out) {
  out.resize(a.cols(), v.cols());
  for (Eigen::Index j = 0; j < v.cols(); ++j) {
    Vec<Scalar> col;
    weighted_gram_serial<Scalar>(a, w.col(j), v.col(j), col);
    out.col(j) = col;
  }
}

template <class Scalar>
void weighted_gram_block_omp(const ConstRows<Scalar>& a, const Eigen::MatrixXd& w, const Mat<Scalar>& v,
                             Mat<Scalar>& out) {
  const Eigen::Index n = a.rows(), d = a.cols(), k = v.cols();
  const Eigen::Index nb = block_count(n);
  const double inv_n = 1.0 / static_cast<double>(n);
  std::vector<Mat<Scalar>> partial(static_cast<std::size_t>(nb));
#pragma omp parallel for schedule(static)
  for (Eigen::Index b = 0; b < nb; ++b) {
    auto& acc = partial[static_cast<std::size_t>(b)];
    acc = Mat<Scalar>::Zero(d, k);
    fused_rows<Scalar>(a, block_begin(b, nb, n), block_begin(b + 1, nb, n), w, v, inv_n, acc);
  }
  out = std::move(partial[0]);
  for (Eigen::Index b = 1; b < nb; ++b) out += partial[static_cast<std::size_t>(b)];
}

template <class Scalar>
void weighted_gram_omp(const ConstRows<Scalar>& a, const Eigen::VectorXd& w, const Vec<Scalar>& v,
                       Vec<Scalar>& out) {
  Mat<Scalar> res;
  weighted_gram_block_omp<Scalar>(a, w, Mat<Scalar>(v), res);
  out = res.col(0);
}

template <class Scalar>
void matvec_serial(const ConstRows<Scalar>& a, const Vec<Scalar>& v, Vec<Scalar>& out) {
  out = a * v;
}

template <class Scalar>
void matvec_omp(const ConstRows<Scalar>& a, const Vec<Scalar>& v, Vec<Scalar>& out) {
  const Eigen::Index n = a.rows();
  out.resize(n);
#pragma omp parallel for schedule(static)
  for (Eigen::Index i = 0; i < n; ++i) out(i) = (a.row(i) * v).value();
}

template <class Scalar>
void adjoint_serial(const ConstRows<Scalar>& a, const Vec<Scalar>& u, Vec<Scalar>& out) {
  out = a.adjoint() * u;
}

template <class Scalar>
void adjoint_omp(const ConstRows<Scalar>& a, const Vec<Scalar>& u, Vec<Scalar>& out) {
  const Eigen::Index n = a.rows(), d = a.cols();
  const Eigen::Index nb = block_count(n);
  std::vector<Vec<Scalar>> partial(static_cast<std::size_t>(nb));
#pragma omp parallel for schedule(static)
  for (Eigen::Index b = 0; b < nb; ++b) {
    const Eigen::Index r0 = block_begin(b, nb, n), r1 = block_begin(b + 1, nb, n);
    partial[static_cast<std::size_t>(b)].noalias() = a.middleRows(r0, r1 - r0).adjoint() * u.segment(r0, r1 - r0);
  }
  out = Vec<Scalar>::Zero(d);
  for (const auto& p : partial) out += p;
}

#define WEAKREC_KERNELS(S)                                                                               \
  template void weighted_gram_serial<S>(const ConstRows<S>&, const Eigen::VectorXd&, const Vec<S>&, Vec<S>&); \
  template void weighted_gram_omp<S>(const ConstRows<S>&, const Eigen::VectorXd&, const Vec<S>&, Vec<S>&);    \
  template void weighted_gram_block_serial<S>(const ConstRows<S>&, const Eigen::MatrixXd&, const Mat<S>&,     \
                                              Mat<S>&);                                                       \
  template void weighted_gram_block_omp<S>(const ConstRows<S>&, const Eigen::MatrixXd&, const Mat<S>&,        \
                                           Mat<S>&);                                                          \
  template void matvec_serial<S>(const ConstRows<S>&, const Vec<S>&, Vec<S>&);                               \
  template void matvec_omp<S>(const ConstRows<S>&, const Vec<S>&, Vec<S>&);                                  \
  template void adjoint_serial<S>(const ConstRows<S>&, const Vec<S>&, Vec<S>&);                              \
  template void adjoint_omp<S>(const ConstRows<S>&, const Vec<S>&, Vec<S>&);

WEAKREC_KERNELS(double)
WEAKREC_KERNELS(cplx)

#undef WEAKREC_KERNELS

}  // namespace weakrec::kernels
