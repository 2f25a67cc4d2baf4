#pragma once

#include "weakrec/common.hpp"

// Data-parallel inner loops. Every kernel has a plain serial reference and an OpenMP
// version; the OpenMP versions sum over a fixed row partition, so results do not
// depend on the thread count.
namespace weakrec::kernels {

template <class Scalar>
using ConstRows = Eigen::Map<const RowMat<Scalar>>;

// out = (1/n) A^* diag(w) A v
template <class Scalar>
void weighted_gram_serial(const ConstRows<Scalar>& a, const Eigen::VectorXd& w, const Vec<Scalar>& v,
                          Vec<Scalar>& out);
template <class Scalar>
void weighted_gram_omp(const ConstRows<Scalar>& a, const Eigen::VectorXd& w, const Vec<Scalar>& v,
                       Vec<Scalar>& out);

// Column j of `out` is (1/n) A^* diag(W.col(j)) A V.col(j); A is streamed once.
template <class Scalar>
void weighted_gram_block_serial(const ConstRows<Scalar>& a, const Eigen::MatrixXd& w,
                                const Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>& v,
                                Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>& out);
template <class Scalar>
void weighted_gram_block_omp(const ConstRows<Scalar>& a, const Eigen::MatrixXd& w,
                             const Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>& v,
                             Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>& out);

// out = A v
template <class Scalar>
void matvec_serial(const ConstRows<Scalar>& a, const Vec<Scalar>& v, Vec<Scalar>& out);
template <class Scalar>
void matvec_omp(const ConstRows<Scalar>& a, const Vec<Scalar>& v, Vec<Scalar>& out);

// out = A^* u
template <class Scalar>
void adjoint_serial(const ConstRows<Scalar>& a, const Vec<Scalar>& u, Vec<Scalar>& out);
template <class Scalar>
void adjoint_omp(const ConstRows<Scalar>& a, const Vec<Scalar>& u, Vec<Scalar>& out);

template <class Scalar>
ConstRows<Scalar> rows(const RowMat<Scalar>& a, Eigen::Index n) {
  return ConstRows<Scalar>(a.data(), n, a.cols());
}

}  // namespace weakrec::kernels
