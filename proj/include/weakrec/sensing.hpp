#pragma once

#include <memory>
#include <string>
#include <vector>

#include "weakrec/channel.hpp"
#include "weakrec/common.hpp"

namespace weakrec {

// Uniform on the sphere of radius sqrt(d): Gaussian draw, rescaled.
template <class Scalar>
Vec<Scalar> sample_signal(Eigen::Index d, Rng& rng);

// Rows i.i.d. with entries of variance 1/d (circularly symmetric in the complex case).
template <class Scalar>
class GaussianEnsemble {
 public:
  GaussianEnsemble() = default;
  explicit GaussianEnsemble(RowMat<Scalar> a) : a_(std::move(a)) {}
  static GaussianEnsemble sample(Eigen::Index n, Eigen::Index d, Rng& rng);

  Eigen::Index n() const { return a_.rows(); }
  Eigen::Index d() const { return a_.cols(); }
  const RowMat<Scalar>& matrix() const { return a_; }
  auto row(Eigen::Index i) const { return a_.row(i); }

  Vec<Scalar> apply(const Vec<Scalar>& x) const { return a_ * x; }
  Vec<Scalar> adjoint(const Vec<Scalar>& w) const { return a_.adjoint() * w; }

 private:
  RowMat<Scalar> a_;
};

using RealGaussian = GaussianEnsemble<double>;
using ComplexGaussian = GaussianEnsemble<cplx>;

// Coded diffraction patterns: L views, each a 2-D unitary DFT of the masked image.
// Row (l, k1, k2) is (1/sqrt d) * mask_l(t1,t2) * exp(-i 2 pi (k1 t1/d1 + k2 t2/d2)).
class CdpEnsemble {
 public:
  static CdpEnsemble sample(int L, int d1, int d2, Rng& rng);
  CdpEnsemble(int d1, int d2, std::vector<Eigen::VectorXcd> masks);
  ~CdpEnsemble();
  CdpEnsemble(CdpEnsemble&&) noexcept;
  CdpEnsemble& operator=(CdpEnsemble&&) noexcept;
  CdpEnsemble(const CdpEnsemble&) = delete;
  CdpEnsemble& operator=(const CdpEnsemble&) = delete;

  int views() const { return static_cast<int>(masks_.size()); }
  int d1() const { return d1_; }
  int d2() const { return d2_; }
  Eigen::Index d() const { return static_cast<Eigen::Index>(d1_) * d2_; }
  Eigen::Index n() const { return views() * d(); }
  const Eigen::VectorXcd& mask(int l) const { return masks_[static_cast<std::size_t>(l)]; }

  Eigen::VectorXcd apply(const Eigen::VectorXcd& x) const;
  Eigen::VectorXcd adjoint(const Eigen::VectorXcd& w) const;
  Eigen::VectorXcd row(Eigen::Index r) const;
  // explicit n x d matrix; small sizes only
  Eigen::MatrixXcd dense() const;

 private:
  struct Plans;
  int d1_ = 0, d2_ = 0;
  std::vector<Eigen::VectorXcd> masks_;
  std::unique_ptr<Plans> plans_;
};

struct MeasurementSet {
  Eigen::VectorXd y;
  Eigen::VectorXd g_abs;  // |<x, a_i>| (real field: signed <x, a_i>)
};

template <class Scalar>
MeasurementSet measure(const Vec<Scalar>& ax, const Channel& ch, Rng& rng);

// 8-bit binary greymap
struct GrayImage {
  int width = 0;
  int height = 0;
  std::vector<unsigned char> pixels;  // row-major
};

GrayImage read_pgm(const std::string& path);
void write_pgm(const std::string& path, const GrayImage& img);
GrayImage synthetic_gradient(int width, int height);

// row-major pixels rescaled so that ||x||^2 = d
Eigen::VectorXcd image_to_signal(const GrayImage& img);
// real part of each entry mapped linearly onto [0, 255]
GrayImage signal_to_image(const Eigen::VectorXcd& x, int width, int height);

}  // namespace weakrec
