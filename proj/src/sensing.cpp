#include "weakrec/sensing.hpp"

#include <fftw3.h>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <mutex>
#include <numbers>

namespace weakrec {

namespace {

std::mutex& fftw_planner_mutex() {
  static std::mutex m;
  return m;
}

template <class Scalar>
Scalar draw(std::normal_distribution<double>& n01, Rng& rng, double sd) {
  if constexpr (is_complex_v<Scalar>) {
    const double s = sd / std::numbers::sqrt2;
    const double re = n01(rng);
    const double im = n01(rng);
    return {s * re, s * im};
  } else {
    return sd * n01(rng);
  }
}

}  // namespace

template <class Scalar>
Vec<Scalar> sample_signal(Eigen::Index d, Rng& rng) {
  if (d < 1) throw Error("sample_signal: d must be >= 1");
  std::normal_distribution<double> n01;
  Vec<Scalar> x(d);
  for (Eigen::Index i = 0; i < d; ++i) x(i) = draw<Scalar>(n01, rng, 1.0);
  x *= std::sqrt(static_cast<double>(d)) / x.norm();
  return x;
}

template <class Scalar>
GaussianEnsemble<Scalar> GaussianEnsemble<Scalar>::sample(Eigen::Index n, Eigen::Index d, Rng& rng) {
  if (n < 1 || d < 1) throw Error("gaussian ensemble: n and d must be >= 1");
  std::normal_distribution<double> n01;
  const double sd = 1.0 / std::sqrt(static_cast<double>(d));
  RowMat<Scalar> a(n, d);
  Scalar* p = a.data();
  for (Eigen::Index k = 0; k < n * d; ++k) p[k] = draw<Scalar>(n01, rng, sd);
  return GaussianEnsemble(std::move(a));
}

template <class Scalar>
MeasurementSet measure(const Vec<Scalar>& ax, const Channel& ch, Rng& rng) {
  MeasurementSet m;
  const auto n = ax.size();
  m.y.resize(n);
  m.g_abs.resize(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    double g;
    if constexpr (is_complex_v<Scalar>) {
      g = std::abs(ax(i));
    } else {
      g = ax(i);
    }
    m.g_abs(i) = g;
    m.y(i) = ch.sample(g, rng);
  }
  return m;
}

template Vec<double> sample_signal<double>(Eigen::Index, Rng&);
template Vec<cplx> sample_signal<cplx>(Eigen::Index, Rng&);
template class GaussianEnsemble<double>;
template class GaussianEnsemble<cplx>;
template MeasurementSet measure<double>(const Vec<double>&, const Channel&, Rng&);
template MeasurementSet measure<cplx>(const Vec<cplx>&, const Channel&, Rng&);

// ---------------------------------------------------------------------------

struct CdpEnsemble::Plans {
  fftw_plan fwd = nullptr;
  fftw_plan bwd = nullptr;
  ~Plans() {
    std::lock_guard lock(fftw_planner_mutex());
    if (fwd) fftw_destroy_plan(fwd);
    if (bwd) fftw_destroy_plan(bwd);
  }
};

CdpEnsemble CdpEnsemble::sample(int L, int d1, int d2, Rng& rng) {
  if (L < 1) throw Error("cdp: L must be >= 1");
  if (d1 < 1 || d2 < 1) throw Error("cdp: image dimensions must be >= 1");
  std::uniform_int_distribution<int> pick(0, 3);
  static const cplx alphabet[4] = {{1, 0}, {-1, 0}, {0, 1}, {0, -1}};
  std::vector<Eigen::VectorXcd> masks;
  const Eigen::Index d = static_cast<Eigen::Index>(d1) * d2;
  for (int l = 0; l < L; ++l) {
    Eigen::VectorXcd m(d);
    for (Eigen::Index t = 0; t < d; ++t) m(t) = alphabet[pick(rng)];
    masks.push_back(std::move(m));
  }
  return CdpEnsemble(d1, d2, std::move(masks));
}

CdpEnsemble::CdpEnsemble(int d1, int d2, std::vector<Eigen::VectorXcd> masks)
    : d1_(d1), d2_(d2), masks_(std::move(masks)), plans_(std::make_unique<Plans>()) {
  for (const auto& m : masks_)
    if (m.size() != d()) throw Error("cdp: mask length must equal d1*d2");
  std::lock_guard lock(fftw_planner_mutex());
  Eigen::VectorXcd scratch(d());
  auto* buf = reinterpret_cast<fftw_complex*>(scratch.data());
  const unsigned flags = FFTW_ESTIMATE | FFTW_UNALIGNED;
  plans_->fwd = fftw_plan_dft_2d(d1_, d2_, buf, buf, FFTW_FORWARD, flags);
  plans_->bwd = fftw_plan_dft_2d(d1_, d2_, buf, buf, FFTW_BACKWARD, flags);
  if (!plans_->fwd || !plans_->bwd) throw Error("cdp: FFTW planning failed");
}

CdpEnsemble::~CdpEnsemble() = default;
CdpEnsemble::CdpEnsemble(CdpEnsemble&&) noexcept = default;
CdpEnsemble& CdpEnsemble::operator=(CdpEnsemble&&) noexcept = default;

Eigen::VectorXcd CdpEnsemble::apply(const Eigen::VectorXcd& x) const {
  if (x.size() != d()) throw Error("cdp apply: dimension mismatch");
  const Eigen::Index dd = d();
  const double scale = 1.0 / std::sqrt(static_cast<double>(dd));
  Eigen::VectorXcd out(n());
  for (int l = 0; l < views(); ++l) {
    auto view = out.segment(l * dd, dd);
    view = masks_[static_cast<std::size_t>(l)].cwiseProduct(x);
    auto* buf = reinterpret_cast<fftw_complex*>(view.data());
    fftw_execute_dft(plans_->fwd, buf, buf);
    view *= scale;
  }
  return out;
}

Eigen::VectorXcd CdpEnsemble::adjoint(const Eigen::VectorXcd& w) const {
  if (w.size() != n()) throw Error("cdp adjoint: dimension mismatch");
  const Eigen::Index dd = d();
  const double scale = 1.0 / std::sqrt(static_cast<double>(dd));
  Eigen::VectorXcd out = Eigen::VectorXcd::Zero(dd), tmp(dd);
  for (int l = 0; l < views(); ++l) {
    tmp = w.segment(l * dd, dd);
    auto* buf = reinterpret_cast<fftw_complex*>(tmp.data());
    fftw_execute_dft(plans_->bwd, buf, buf);
    out += masks_[static_cast<std::size_t>(l)].conjugate().cwiseProduct(tmp) * scale;
  }
  return out;
}

Eigen::VectorXcd CdpEnsemble::row(Eigen::Index r) const {
  if (r < 0 || r >= n()) throw Error("cdp row: index out of range");
  const Eigen::Index dd = d();
  const int l = static_cast<int>(r / dd);
  const Eigen::Index k = r % dd;
  const Eigen::Index k1 = k / d2_, k2 = k % d2_;
  const double scale = 1.0 / std::sqrt(static_cast<double>(dd));
  Eigen::VectorXcd a(dd);
  for (Eigen::Index t1 = 0; t1 < d1_; ++t1)
    for (Eigen::Index t2 = 0; t2 < d2_; ++t2) {
      // reduce the phase index first so large images keep full precision
      const double ph = -2.0 * std::numbers::pi *
                        (static_cast<double>((k1 * t1) % d1_) / d1_ + static_cast<double>((k2 * t2) % d2_) / d2_);
      a(t1 * d2_ + t2) = masks_[static_cast<std::size_t>(l)](t1 * d2_ + t2) * std::polar(scale, ph);
    }
  return a;
}

Eigen::MatrixXcd CdpEnsemble::dense() const {
  if (d() > 4096) throw Error("cdp dense: only materialized for d <= 4096");
  Eigen::MatrixXcd a(n(), d());
  for (Eigen::Index r = 0; r < n(); ++r) a.row(r) = row(r).transpose();
  return a;
}

// ---------------------------------------------------------------------------

GrayImage read_pgm(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open image '" + path + "'");
  auto token = [&]() {
    std::string t;
    char c;
    while (in.get(c)) {
      if (c == '#') {
        std::string rest;
        std::getline(in, rest);
        continue;
      }
      if (std::isspace(static_cast<unsigned char>(c))) {
        if (!t.empty()) break;
        continue;
      }
      t.push_back(c);
    }
    return t;
  };
  if (token() != "P5") throw Error("'" + path + "' is not a binary PGM (P5)");
  GrayImage img;
  int maxval = 0;
  try {
    img.width = std::stoi(token());
    img.height = std::stoi(token());
    maxval = std::stoi(token());
  } catch (const std::exception&) {
    throw Error("'" + path + "': malformed PGM header");
  }
  if (img.width < 1 || img.height < 1 || maxval < 1 || maxval > 255)
    throw Error("'" + path + "': unsupported PGM (need 8-bit greyscale)");
  img.pixels.resize(static_cast<std::size_t>(img.width) * img.height);
  in.read(reinterpret_cast<char*>(img.pixels.data()), static_cast<std::streamsize>(img.pixels.size()));
  if (in.gcount() != static_cast<std::streamsize>(img.pixels.size()))
    throw Error("'" + path + "': truncated pixel data");
  return img;
}

void write_pgm(const std::string& path, const GrayImage& img) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write image '" + path + "'");
  out << "P5\n" << img.width << ' ' << img.height << "\n255\n";
  out.write(reinterpret_cast<const char*>(img.pixels.data()), static_cast<std::streamsize>(img.pixels.size()));
}

GrayImage synthetic_gradient(int width, int height) {
  GrayImage img{width, height, {}};
  img.pixels.resize(static_cast<std::size_t>(width) * height);
  const double cx = 0.62 * width, cy = 0.38 * height, r = 0.22 * std::min(width, height);
  for (int i = 0; i < height; ++i)
    for (int j = 0; j < width; ++j) {
      double v = 40.0 + 150.0 * (i + j) / static_cast<double>(width + height - 2);
      if (std::hypot(j - cx, i - cy) < r) v += 60.0;
      img.pixels[static_cast<std::size_t>(i) * width + j] = static_cast<unsigned char>(std::clamp(v, 0.0, 255.0));
    }
  return img;
}

Eigen::VectorXcd image_to_signal(const GrayImage& img) {
  const Eigen::Index d = static_cast<Eigen::Index>(img.pixels.size());
  Eigen::VectorXcd x(d);
  for (Eigen::Index i = 0; i < d; ++i) x(i) = static_cast<double>(img.pixels[static_cast<std::size_t>(i)]);
  const double nrm = x.norm();
  if (nrm == 0) throw Error("image is identically zero");
  return x * (std::sqrt(static_cast<double>(d)) / nrm);
}

GrayImage signal_to_image(const Eigen::VectorXcd& x, int width, int height) {
  if (x.size() != static_cast<Eigen::Index>(width) * height) throw Error("signal_to_image: size mismatch");
  GrayImage img{width, height, std::vector<unsigned char>(static_cast<std::size_t>(x.size()))};
  const Eigen::VectorXd re = x.real();
  const double lo = re.minCoeff(), hi = re.maxCoeff();
  const double span = hi > lo ? hi - lo : 1.0;
  for (Eigen::Index i = 0; i < x.size(); ++i)
    img.pixels[static_cast<std::size_t>(i)] =
        static_cast<unsigned char>(std::lround(255.0 * (re(i) - lo) / span));
  return img;
}

}  // namespace weakrec
