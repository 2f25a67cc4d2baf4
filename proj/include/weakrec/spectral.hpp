#pragma once

#include <functional>
#include <limits>
#include <vector>

#include "weakrec/common.hpp"
#include "weakrec/kernels.hpp"

namespace weakrec::spectral {

template <class Scalar>
using Mat = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;

template <class Scalar>
using Operator = std::function<void(const Vec<Scalar>&, Vec<Scalar>&)>;

// Applies several Hermitian operators at once: column j of `v` goes to operator `ops[j]`.
template <class Scalar>
using BlockOperator = std::function<void(const std::vector<int>& ops, const Mat<Scalar>& v, Mat<Scalar>& out)>;

template <class Scalar>
struct SpectralEstimate {
  Vec<Scalar> xhat;
  double eigval = 0.0;  // unshifted
  double eigval2 = std::numeric_limits<double>::quiet_NaN();
  int iters = 0;
  bool converged = false;
  double shift = 0.0;
};

// scale * (1/n) A^* diag(t) A v over the first n rows of A
template <class Scalar>
Vec<Scalar> apply_D(const RowMat<Scalar>& a, Eigen::Index n, const Eigen::VectorXd& t, const Vec<Scalar>& v,
                    double scale = 1.0);

// The same operator family for several weight vectors sharing one sensing matrix; A is
// streamed once per block application.
template <class Scalar>
class WeightedGram {
 public:
  // weights: n x k, one column per operator; `scale` multiplies every operator
  WeightedGram(const RowMat<Scalar>& a, Eigen::Index n, Eigen::MatrixXd weights, double scale = 1.0);

  int count() const { return static_cast<int>(w_.cols()); }
  Eigen::Index dim() const { return a_.cols(); }
  void apply(int op, const Vec<Scalar>& v, Vec<Scalar>& out) const;
  void apply_block(const std::vector<int>& ops, const Mat<Scalar>& v, Mat<Scalar>& out) const;
  Operator<Scalar> op(int j) const;
  BlockOperator<Scalar> block() const;

 private:
  kernels::ConstRows<Scalar> a_;
  Eigen::MatrixXd w_;
};

struct PowerOptions {
  double shift = 0.0;
  double tol = 1e-7;  // stop once |<v_T, v_{T-10}>| > 1 - tol
  int max_iter = 10000;
};

template <class Scalar>
SpectralEstimate<Scalar> power_method(const Operator<Scalar>& op, Eigen::Index d, const PowerOptions& opt, Rng& rng);

// power iteration restricted to the orthogonal complement of `against`
template <class Scalar>
SpectralEstimate<Scalar> power_method_deflated(const Operator<Scalar>& op, const Vec<Scalar>& against,
                                               const PowerOptions& opt, Rng& rng);

struct LanczosOptions {
  int nev = 1;          // 1: top pair; 2: also the second eigenvalue
  int max_dim = 1500;   // Krylov dimension cap
  double tol = 1e-7;    // residual relative to the spectral radius estimate
  int check_every = 5;
};

// Lanczos with full reorthogonalization, run in lockstep for several operators.
template <class Scalar>
std::vector<SpectralEstimate<Scalar>> lanczos(const BlockOperator<Scalar>& op, int count, Eigen::Index d,
                                              const LanczosOptions& opt, Rng& rng);

template <class Scalar>
SpectralEstimate<Scalar> lanczos(const Operator<Scalar>& op, Eigen::Index d, const LanczosOptions& opt, Rng& rng);

// top eigenpairs by dense factorization (oracle sizes)
template <class Scalar>
SpectralEstimate<Scalar> dense_top(const RowMat<Scalar>& a, Eigen::Index n, const Eigen::VectorXd& t, double scale);

template <class Scalar>
double overlap(const Vec<Scalar>& xhat, const Vec<Scalar>& x);

template <class Scalar>
Vec<Scalar> random_unit(Eigen::Index d, Rng& rng);

}  // namespace weakrec::spectral
