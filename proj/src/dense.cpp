#include "weakrec/dense.hpp"

#include <cblas.h>
#include <lapacke.h>

#include <cmath>
#include <vector>

namespace weakrec::dense {

namespace {

// C += sign * B^* B, B row-major k x d (upper triangle of row-major C)
void rank_update(const RowMat<double>& b, double sign, RowMat<double>& c) {
  cblas_dsyrk(CblasRowMajor, CblasUpper, CblasTrans, static_cast<int>(c.rows()), static_cast<int>(b.rows()), sign,
              b.data(), static_cast<int>(b.cols()), 1.0, c.data(), static_cast<int>(c.cols()));
}

void rank_update(const RowMat<cplx>& b, double sign, RowMat<cplx>& c) {
  cblas_zherk(CblasRowMajor, CblasUpper, CblasConjTrans, static_cast<int>(c.rows()), static_cast<int>(b.rows()), sign,
              b.data(), static_cast<int>(b.cols()), 1.0, c.data(), static_cast<int>(c.cols()));
}

int syevr_top(Mat<double>& h, int k, bool vectors, Eigen::VectorXd& w, Mat<double>& z) {
  const int d = static_cast<int>(h.rows());
  int found = 0;
  std::vector<int> support(2 * static_cast<std::size_t>(k));
  w.resize(d);
  if (vectors) z.resize(d, k);
  return LAPACKE_dsyevr(LAPACK_COL_MAJOR, vectors ? 'V' : 'N', 'I', 'U', d, h.data(), d, 0.0, 0.0, d - k + 1, d,
                        0.0, &found, w.data(), vectors ? z.data() : nullptr, d, support.data());
}

int syevr_top(Mat<cplx>& h, int k, bool vectors, Eigen::VectorXd& w, Mat<cplx>& z) {
  const int d = static_cast<int>(h.rows());
  int found = 0;
  std::vector<int> support(2 * static_cast<std::size_t>(k));
  w.resize(d);
  if (vectors) z.resize(d, k);
  return LAPACKE_zheevr(LAPACK_COL_MAJOR, vectors ? 'V' : 'N', 'I', 'U', d,
                        reinterpret_cast<lapack_complex_double*>(h.data()), d, 0.0, 0.0, d - k + 1, d, 0.0, &found,
                        w.data(), vectors ? reinterpret_cast<lapack_complex_double*>(z.data()) : nullptr, d,
                        support.data());
}

}  // namespace

template <class Scalar>
Mat<Scalar> weighted_gram(const RowMat<Scalar>& a, Eigen::Index n, const Eigen::VectorXd& w, double scale) {
  if (n > a.rows() || w.size() != n) throw Error("weighted_gram: dimension mismatch");
  const Eigen::Index d = a.cols();
  // split w into its positive and negative parts so each half is a plain rank-k update
  RowMat<Scalar> c = RowMat<Scalar>::Zero(d, d);
  for (double sign : {1.0, -1.0}) {
    std::vector<Eigen::Index> idx;
    for (Eigen::Index i = 0; i < n; ++i)
      if (sign * w(i) > 0) idx.push_back(i);
    if (idx.empty()) continue;
    RowMat<Scalar> b(static_cast<Eigen::Index>(idx.size()), d);
    for (std::size_t k = 0; k < idx.size(); ++k)
      b.row(static_cast<Eigen::Index>(k)) = std::sqrt(sign * w(idx[k]) * scale) * a.row(idx[k]);
    rank_update(b, sign, c);
  }
  Mat<Scalar> out = c.template triangularView<Eigen::Upper>();
  out.template triangularView<Eigen::StrictlyLower>() = out.adjoint();
  return out;
}

template <class Scalar>
TopEigs<Scalar> top_eigs(Mat<Scalar> h, int k, bool vectors) {
  const int d = static_cast<int>(h.rows());
  if (h.cols() != d) throw Error("top_eigs: matrix must be square");
  if (k < 1 || k > d) throw Error("top_eigs: k out of range");
  Eigen::VectorXd w;
  Mat<Scalar> z;
  if (int info = syevr_top(h, k, vectors, w, z); info != 0)
    throw Error("top_eigs: LAPACK returned " + std::to_string(info));
  TopEigs<Scalar> out;
  out.values.resize(k);
  if (vectors) out.vectors.resize(d, k);
  for (int j = 0; j < k; ++j) {
    out.values(j) = w(k - 1 - j);
    if (vectors) out.vectors.col(j) = z.col(k - 1 - j);
  }
  return out;
}

Eigen::VectorXcd eigenvalues(const Eigen::MatrixXd& m) {
  Eigen::EigenSolver<Eigen::MatrixXd> es(m, false);
  if (es.info() != Eigen::Success) throw Error("eigenvalues: QR iteration did not converge");
  return es.eigenvalues();
}

template Mat<double> weighted_gram<double>(const RowMat<double>&, Eigen::Index, const Eigen::VectorXd&, double);
template Mat<cplx> weighted_gram<cplx>(const RowMat<cplx>&, Eigen::Index, const Eigen::VectorXd&, double);
template TopEigs<double> top_eigs<double>(Mat<double>, int, bool);
template TopEigs<cplx> top_eigs<cplx>(Mat<cplx>, int, bool);

}  // namespace weakrec::dense
