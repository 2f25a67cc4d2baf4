#pragma once

#include "weakrec/common.hpp"

// Dense helpers for oracle-sized problems (BLAS/LAPACK backed).
namespace weakrec::dense {

template <class Scalar>
using Mat = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;

// scale * A^* diag(w) A for the first `n` rows of A.
template <class Scalar>
Mat<Scalar> weighted_gram(const RowMat<Scalar>& a, Eigen::Index n, const Eigen::VectorXd& w, double scale);

template <class Scalar>
struct TopEigs {
  Eigen::VectorXd values;  // descending
  Mat<Scalar> vectors;     // column j belongs to values(j); empty when not requested
};

// k largest eigenvalues of a Hermitian matrix (upper triangle referenced).
template <class Scalar>
TopEigs<Scalar> top_eigs(Mat<Scalar> h, int k, bool vectors);

// All eigenvalues of a general real square matrix.
Eigen::VectorXcd eigenvalues(const Eigen::MatrixXd& m);

}  // namespace weakrec::dense
