#include "weakrec/spectral.hpp"

#include <lapacke.h>

#include <algorithm>
#include <cmath>
#include <deque>

#include "weakrec/dense.hpp"

namespace weakrec::spectral {

namespace {

template <class Scalar>
double real_dot(const Vec<Scalar>& a, const Vec<Scalar>& b) {
  return std::real(a.dot(b));
}

struct Ritz {
  double theta = 0.0;
  double theta2 = std::numeric_limits<double>::quiet_NaN();
  double radius = 0.0;
  double resid = kInf;  // of the least converged wanted pair
  Eigen::VectorXd s;    // top Ritz vector in Krylov coordinates
};

// extreme Ritz values of the k x k tridiagonal (alpha, beta)
Ritz tridiagonal_ritz(const std::vector<double>& alpha, const std::vector<double>& beta, int nev) {
  const int k = static_cast<int>(alpha.size());
  const int want = std::min(nev, k);
  Ritz r;
  std::vector<double> dd(alpha), ee(beta.begin(), beta.begin() + (k - 1)), w(k);
  ee.push_back(0.0);
  Eigen::MatrixXd z(k, want);
  std::vector<int> support(2 * static_cast<std::size_t>(want));
  int found = 0;
  int info = LAPACKE_dstevr(LAPACK_COL_MAJOR, 'V', 'I', k, dd.data(), ee.data(), 0.0, 0.0, k - want + 1, k, 0.0,
                            &found, w.data(), z.data(), k, support.data());
  if (info != 0) throw Error("lanczos: tridiagonal eigensolve failed");
  r.theta = w[want - 1];
  r.s = z.col(want - 1);
  r.resid = std::abs(beta[k - 1] * z(k - 1, want - 1));
  if (want >= 2) {
    r.theta2 = w[want - 2];
    r.resid = std::max(r.resid, std::abs(beta[k - 1] * z(k - 1, want - 2)));
  }
  std::vector<double> d2(alpha), e2(beta.begin(), beta.begin() + (k - 1)), w2(k);
  e2.push_back(0.0);
  info = LAPACKE_dstevr(LAPACK_COL_MAJOR, 'N', 'I', k, d2.data(), e2.data(), 0.0, 0.0, 1, 1, 0.0, &found, w2.data(),
                        nullptr, k, support.data());
  if (info != 0) throw Error("lanczos: tridiagonal eigensolve failed");
  r.radius = std::max(std::abs(r.theta), std::abs(w2[0]));
  return r;
}

template <class Scalar>
struct LanczosRun {
  Mat<Scalar> q;  // d x (max_dim + 1)
  std::vector<double> alpha, beta;
  int k = 0;  // basis vectors in use
  bool done = false;
  Ritz ritz;
};

}  // namespace

template <class Scalar>
Vec<Scalar> random_unit(Eigen::Index d, Rng& rng) {
  std::normal_distribution<double> n01;
  Vec<Scalar> v(d);
  for (Eigen::Index i = 0; i < d; ++i) {
    if constexpr (is_complex_v<Scalar>) {
      const double re = n01(rng);
      const double im = n01(rng);
      v(i) = Scalar(re, im);
    } else {
      v(i) = n01(rng);
    }
  }
  return v / v.norm();
}

template <class Scalar>
Vec<Scalar> apply_D(const RowMat<Scalar>& a, Eigen::Index n, const Eigen::VectorXd& t, const Vec<Scalar>& v,
                    double scale) {
  if (n > a.rows() || t.size() != n || v.size() != a.cols()) throw Error("apply_D: dimension mismatch");
  Vec<Scalar> out;
  kernels::weighted_gram_omp<Scalar>(kernels::rows(a, n), t * scale, v, out);
  return out;
}

template <class Scalar>
WeightedGram<Scalar>::WeightedGram(const RowMat<Scalar>& a, Eigen::Index n, Eigen::MatrixXd weights, double scale)
    : a_(kernels::rows(a, n)), w_(std::move(weights)) {
  if (n > a.rows() || w_.rows() != n) throw Error("weighted gram: dimension mismatch");
  w_ *= scale;
}

template <class Scalar>
void WeightedGram<Scalar>::apply(int op, const Vec<Scalar>& v, Vec<Scalar>& out) const {
  kernels::weighted_gram_omp<Scalar>(a_, w_.col(op), v, out);
}

template <class Scalar>
void WeightedGram<Scalar>::apply_block(const std::vector<int>& ops, const Mat<Scalar>& v, Mat<Scalar>& out) const {
  Eigen::MatrixXd w(w_.rows(), static_cast<Eigen::Index>(ops.size()));
  for (std::size_t j = 0; j < ops.size(); ++j) w.col(static_cast<Eigen::Index>(j)) = w_.col(ops[j]);
  kernels::weighted_gram_block_omp<Scalar>(a_, w, v, out);
}

template <class Scalar>
Operator<Scalar> WeightedGram<Scalar>::op(int j) const {
  return [this, j](const Vec<Scalar>& v, Vec<Scalar>& out) { apply(j, v, out); };
}

template <class Scalar>
BlockOperator<Scalar> WeightedGram<Scalar>::block() const {
  return [this](const std::vector<int>& ops, const Mat<Scalar>& v, Mat<Scalar>& out) { apply_block(ops, v, out); };
}

template <class Scalar>
static SpectralEstimate<Scalar> power_impl(const Operator<Scalar>& op, Vec<Scalar> v, const PowerOptions& opt,
                                           const Vec<Scalar>* against) {
  constexpr int kLag = 10;
  auto project = [&](Vec<Scalar>& u) {
    if (against) u -= against->dot(u) * (*against);
  };
  project(v);
  v /= v.norm();
  std::deque<Vec<Scalar>> history;
  history.push_back(v);
  SpectralEstimate<Scalar> est;
  est.shift = opt.shift;
  Vec<Scalar> w;
  int it = 0;
  while (it < opt.max_iter) {
    op(v, w);
    w += opt.shift * v;
    project(w);
    const double nrm = w.norm();
    if (!(nrm > 0.0)) throw Error("power method: iterate vanished (operator annihilates the start vector)");
    v = w / nrm;
    ++it;
    history.push_back(v);
    if (static_cast<int>(history.size()) > kLag + 1) history.pop_front();
    if (it >= kLag && std::abs(history.front().dot(v)) > 1.0 - opt.tol) {
      est.converged = true;
      break;
    }
  }
  op(v, w);
  est.xhat = v;
  est.eigval = real_dot(v, w);
  est.iters = it;
  return est;
}

template <class Scalar>
SpectralEstimate<Scalar> power_method(const Operator<Scalar>& op, Eigen::Index d, const PowerOptions& opt, Rng& rng) {
  return power_impl<Scalar>(op, random_unit<Scalar>(d, rng), opt, nullptr);
}

template <class Scalar>
SpectralEstimate<Scalar> power_method_deflated(const Operator<Scalar>& op, const Vec<Scalar>& against,
                                               const PowerOptions& opt, Rng& rng) {
  const Vec<Scalar> u = against / against.norm();
  return power_impl<Scalar>(op, random_unit<Scalar>(u.size(), rng), opt, &u);
}

template <class Scalar>
std::vector<SpectralEstimate<Scalar>> lanczos(const BlockOperator<Scalar>& op, int count, Eigen::Index d,
                                              const LanczosOptions& opt, Rng& rng) {
  if (count < 1) throw Error("lanczos: need at least one operator");
  const int max_dim = static_cast<int>(std::min<Eigen::Index>(opt.max_dim, d));
  std::vector<LanczosRun<Scalar>> runs(static_cast<std::size_t>(count));
  for (auto& r : runs) {
    r.q.resize(d, max_dim + 1);
    r.q.col(0) = random_unit<Scalar>(d, rng);
    r.k = 1;
  }
  Mat<Scalar> v, w;
  while (true) {
    std::vector<int> active;
    for (int j = 0; j < count; ++j)
      if (!runs[static_cast<std::size_t>(j)].done) active.push_back(j);
    if (active.empty()) break;
    v.resize(d, static_cast<Eigen::Index>(active.size()));
    for (std::size_t c = 0; c < active.size(); ++c) {
      const auto& r = runs[static_cast<std::size_t>(active[c])];
      v.col(static_cast<Eigen::Index>(c)) = r.q.col(r.k - 1);
    }
    op(active, v, w);
    for (std::size_t c = 0; c < active.size(); ++c) {
      auto& r = runs[static_cast<std::size_t>(active[c])];
      const int j = r.k - 1;
      Vec<Scalar> u = w.col(static_cast<Eigen::Index>(c));
      const double a = real_dot<Scalar>(r.q.col(j), u);
      r.alpha.push_back(a);
      // two passes of classical Gram-Schmidt against the whole basis
      for (int pass = 0; pass < 2; ++pass) {
        const Vec<Scalar> coef = r.q.leftCols(r.k).adjoint() * u;
        u.noalias() -= r.q.leftCols(r.k) * coef;
      }
      const double b = u.norm();
      r.beta.push_back(b);
      const int dim = static_cast<int>(r.alpha.size());
      const bool full = dim >= max_dim;
      const bool check = full || dim % opt.check_every == 0 || dim == 1;
      if (check || b == 0.0) {
        r.ritz = tridiagonal_ritz(r.alpha, r.beta, opt.nev);
        const bool invariant = b <= 1e-14 * std::max(1.0, r.ritz.radius);
        if (dim >= opt.nev && (invariant || r.ritz.resid <= opt.tol * std::max(r.ritz.radius, 1e-300))) {
          r.done = true;
        } else if (full || invariant) {
          r.done = true;
        }
      }
      if (!r.done) {
        r.q.col(r.k) = u / b;
        ++r.k;
      }
    }
  }
  std::vector<SpectralEstimate<Scalar>> out(static_cast<std::size_t>(count));
  for (int j = 0; j < count; ++j) {
    auto& r = runs[static_cast<std::size_t>(j)];
    auto& e = out[static_cast<std::size_t>(j)];
    const int dim = static_cast<int>(r.alpha.size());
    e.xhat = r.q.leftCols(dim) * r.ritz.s.template cast<Scalar>();
    e.xhat /= e.xhat.norm();
    e.eigval = r.ritz.theta;
    e.eigval2 = r.ritz.theta2;
    e.iters = dim;
    e.converged = r.ritz.resid <= opt.tol * std::max(r.ritz.radius, 1e-300) ||
                  r.beta.back() <= 1e-14 * std::max(1.0, r.ritz.radius);
    r.q.resize(0, 0);
  }
  return out;
}

template <class Scalar>
SpectralEstimate<Scalar> lanczos(const Operator<Scalar>& op, Eigen::Index d, const LanczosOptions& opt, Rng& rng) {
  BlockOperator<Scalar> block = [&op](const std::vector<int>&, const Mat<Scalar>& v, Mat<Scalar>& out) {
    Vec<Scalar> tmp;
    op(v.col(0), tmp);
    out = tmp;
  };
  return lanczos<Scalar>(block, 1, d, opt, rng).front();
}

template <class Scalar>
SpectralEstimate<Scalar> dense_top(const RowMat<Scalar>& a, Eigen::Index n, const Eigen::VectorXd& t, double scale) {
  auto eig = dense::top_eigs<Scalar>(dense::weighted_gram<Scalar>(a, n, t, scale / static_cast<double>(n)), 2, true);
  SpectralEstimate<Scalar> e;
  e.xhat = eig.vectors.col(0);
  e.eigval = eig.values(0);
  e.eigval2 = eig.values(1);
  e.converged = true;
  return e;
}

template <class Scalar>
double overlap(const Vec<Scalar>& xhat, const Vec<Scalar>& x) {
  const double a = xhat.norm(), b = x.norm();
  if (!(a > 0) || !(b > 0)) throw Error("overlap: zero vector");
  return std::min(1.0, std::abs(xhat.dot(x)) / (a * b));
}

#define WEAKREC_SPECTRAL(S)                                                                                       \
  template Vec<S> random_unit<S>(Eigen::Index, Rng&);                                                             \
  template Vec<S> apply_D<S>(const RowMat<S>&, Eigen::Index, const Eigen::VectorXd&, const Vec<S>&, double);     \
  template class WeightedGram<S>;                                                                                 \
  template SpectralEstimate<S> power_method<S>(const Operator<S>&, Eigen::Index, const PowerOptions&, Rng&);      \
  template SpectralEstimate<S> power_method_deflated<S>(const Operator<S>&, const Vec<S>&, const PowerOptions&,   \
                                                        Rng&);                                                    \
  template std::vector<SpectralEstimate<S>> lanczos<S>(const BlockOperator<S>&, int, Eigen::Index,                \
                                                       const LanczosOptions&, Rng&);                              \
  template SpectralEstimate<S> lanczos<S>(const Operator<S>&, Eigen::Index, const LanczosOptions&, Rng&);         \
  template SpectralEstimate<S> dense_top<S>(const RowMat<S>&, Eigen::Index, const Eigen::VectorXd&, double);     \
  template double overlap<S>(const Vec<S>&, const Vec<S>&);

WEAKREC_SPECTRAL(double)
WEAKREC_SPECTRAL(cplx)

#undef WEAKREC_SPECTRAL

}  // namespace weakrec::spectral
