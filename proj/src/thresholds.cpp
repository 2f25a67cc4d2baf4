#include "weakrec/thresholds.hpp"

#include <cblas.h>

#include <algorithm>
#include <boost/math/special_functions/bessel.hpp>
#include <cmath>
#include <numbers>

namespace weakrec::thresholds {

namespace {

constexpr std::size_t kMaxNodes = 10000;
constexpr double kBandSigmas = 12.0;

double log_one_minus(Field f, double m) {
  return f == Field::Complex ? std::log1p(-m) : 0.5 * std::log1p(-m * m);
}

// exp(-x) I0(x), x >= 0
double i0e(double x) {
  if (x <= 700.0) return boost::math::cyl_bessel_i(0, x) * std::exp(-x);
  const double r = 1.0 / (8.0 * x);
  return (1.0 + r * (1.0 + 4.5 * r * (1.0 + 25.0 / 3.0 * r))) / std::sqrt(2.0 * std::numbers::pi * x);
}

void append_panels(std::vector<double>& x, std::vector<double>& w, double a, double b, double width) {
  const quad::Rule r = quad::composite({a, b}, width, 8);
  x.insert(x.end(), r.x.begin(), r.x.end());
  w.insert(w.end(), r.w.begin(), r.w.end());
}

}  // namespace

OverlapFunctional::OverlapFunctional(std::shared_ptr<const Marginals> mg) : mg_(std::move(mg)) {
  const Channel& ch = mg_->channel();
  field_ = ch.field();
  if (ch.degenerate()) {
    analytic_ = true;
    return;
  }
  const bool pr = ch.kind() == ChannelKind::PhaseRetrieval;
  const double s = ch.sigma();
  const double band = pr ? kBandSigmas * s : kInf;

  // nodes in |G|^2 (complex) or G (real)
  if (field_ == Field::Complex) {
    const double zmax = pr ? mg_->hi() + 10.0 * s : 40.0;
    append_panels(x_, wleb_, 0.0, zmax, pr ? std::min(0.25, 1.5 * s) : 0.1);
    for (std::size_t i = 0; i < x_.size(); ++i) w_.push_back(wleb_[i] * std::exp(-x_[i]));
  } else {
    std::vector<double> pos, pw;
    if (pr) {
      const double gmax = std::sqrt(mg_->hi() + 10.0 * s);
      double lo = 0.0;
      while (lo < gmax) {
        const double h = std::min(0.25, 1.5 * s / (2.0 * std::max(lo, 0.5)));
        const double hi = std::min(gmax, lo + h);
        append_panels(pos, pw, lo, hi, hi - lo);
        lo = hi;
      }
    } else {
      append_panels(pos, pw, 0.0, 9.0, ch.kind() == ChannelKind::GapExample ? 0.125 : 0.05);
    }
    for (std::size_t i = pos.size(); i-- > 0;) {
      x_.push_back(-pos[i]);
      wleb_.push_back(pw[i]);
    }
    x_.insert(x_.end(), pos.begin(), pos.end());
    wleb_.insert(wleb_.end(), pw.begin(), pw.end());
    for (std::size_t i = 0; i < x_.size(); ++i)
      w_.push_back(wleb_[i] * std::exp(-0.5 * x_[i] * x_[i]) / std::sqrt(2.0 * std::numbers::pi));
  }
  mirrored_ = field_ == Field::Real && ch.even() && x_.size() % 2 == 0;
  if (x_.size() > kMaxNodes)
    throw Error("f(m): noise level too small for the tabulated overlap functional (" + std::to_string(x_.size()) +
                " nodes); use sigma2 = 0 for the noiseless limit");

  // y-grid and the table k_ij = int p(y|x_i) p(y|x_j) / m0(y) dy
  std::vector<double> yx, yw;
  if (pr) {
    const auto& br = mg_->breaks();
    for (std::size_t i = 0; i + 1 < br.size(); ++i) append_panels(yx, yw, br[i], br[i + 1], std::min(0.25, 1.5 * s));
  } else {
    const quad::Rule r = mg_->grid();
    yx = r.x;
    yw = r.w;
  }
  std::vector<double> m0(yx.size());
  double m0max = 0.0;
  for (std::size_t l = 0; l < yx.size(); ++l) {
    m0[l] = mg_->m0(yx[l]);
    m0max = std::max(m0max, m0[l]);
  }
  std::vector<std::size_t> keep;
  for (std::size_t l = 0; l < yx.size(); ++l)
    if (m0[l] > 1e-14 * m0max && m0[l] > 1e-300) keep.push_back(l);
  const Eigen::Index ny = static_cast<Eigen::Index>(keep.size()), nx = static_cast<Eigen::Index>(x_.size());
  Eigen::MatrixXd p(ny, nx);
  for (Eigen::Index j = 0; j < nx; ++j) {
    const double g = field_ == Field::Complex ? std::sqrt(x_[static_cast<std::size_t>(j)]) : x_[static_cast<std::size_t>(j)];
    for (Eigen::Index l = 0; l < ny; ++l) {
      const std::size_t ll = keep[static_cast<std::size_t>(l)];
      p(l, j) = ch.density(yx[ll], g) * std::sqrt(yw[ll] / m0[ll]);
    }
  }
  k_.setZero(nx, nx);
  cblas_dsyrk(CblasColMajor, CblasLower, CblasTrans, static_cast<int>(nx), static_cast<int>(ny), 1.0, p.data(),
              static_cast<int>(ny), 0.0, k_.data(), static_cast<int>(nx));
  k_.triangularView<Eigen::StrictlyUpper>() = k_.transpose();

  // column ranges where k is not negligible
  ranges_.resize(x_.size());
  band_half_.resize(x_.size(), kInf);
  for (std::size_t i = 0; i < x_.size(); ++i) {
    auto idx = [&](double v) { return static_cast<int>(std::lower_bound(x_.begin(), x_.end(), v) - x_.begin()); };
    if (!std::isfinite(band)) {
      ranges_[i].push_back({0, static_cast<int>(nx)});
      continue;
    }
    if (field_ == Field::Complex) {
      ranges_[i].push_back({idx(x_[i] - band), idx(std::nextafter(x_[i] + band, kInf))});
      band_half_[i] = band;
    } else {
      const double g2 = x_[i] * x_[i];
      const double lo = std::sqrt(std::max(0.0, g2 - band)), hi = std::sqrt(g2 + band);
      if (lo == 0.0) {
        ranges_[i].push_back({idx(-hi), idx(std::nextafter(hi, kInf))});
      } else {
        ranges_[i].push_back({idx(-hi), idx(std::nextafter(-lo, kInf))});
        ranges_[i].push_back({idx(lo), idx(std::nextafter(hi, kInf))});
      }
      band_half_[i] = 0.5 * (hi - lo);
    }
  }
}

double OverlapFunctional::f_grid(double m) const {
  const bool cplx_field = field_ == Field::Complex;
  const double om = cplx_field ? 1.0 - m : 1.0 - m * m;
  double total = 0.0;
  const Eigen::Map<const Eigen::ArrayXd> xs(x_.data(), static_cast<Eigen::Index>(x_.size()));
  const Eigen::Map<const Eigen::ArrayXd> ws(wleb_.data(), static_cast<Eigen::Index>(wleb_.size()));
  const double norm = 1.0 / std::sqrt(2.0 * std::numbers::pi * om);
  // partner nodes farther than this from the conditional mean have exp() < e^-700
  const double reach = std::sqrt(1400.0 * om);
  for (std::size_t i = mirrored_ ? x_.size() / 2 : 0; i < x_.size(); ++i) {
    const double xi = x_[i];
    const auto ii = static_cast<Eigen::Index>(i);
    double lo_x, hi_x;
    if (cplx_field) {
      const double r = std::sqrt(m * xi);
      lo_x = std::max(r - reach / std::sqrt(2.0), 0.0);
      lo_x *= lo_x;
      hi_x = r + reach / std::sqrt(2.0);
      hi_x *= hi_x;
    } else {
      lo_x = m * xi - reach;
      hi_x = m * xi + reach;
    }
    const int wb = static_cast<int>(std::lower_bound(x_.begin(), x_.end(), lo_x) - x_.begin());
    const int we = static_cast<int>(std::upper_bound(x_.begin(), x_.end(), hi_x) - x_.begin());
    double acc = 0.0, mass = 0.0;
    for (auto [b, e] : ranges_[i]) {
      b = std::max(b, wb);
      e = std::min(e, we);
      if (b >= e) continue;
      if (!cplx_field) {
        // k_ is symmetric: read column i so the band is contiguous
        const Eigen::ArrayXd ex = (xs.segment(b, e - b) - m * xi).square() * (-0.5 / om);
        const Eigen::ArrayXd c = ws.segment(b, e - b) * (ex > -700.0).select(ex.exp() * norm, 0.0);
        mass += c.sum();
        acc += (c * k_.col(ii).segment(b, e - b).array()).sum();
        continue;
      }
      for (int j = b; j < e; ++j) {
        const double xj = x_[static_cast<std::size_t>(j)];
        const double d = std::sqrt(xj) - std::sqrt(m * xi);
        const double ex = -d * d / om;
        if (ex < -700.0) continue;
        const double kern = std::exp(ex) * i0e(2.0 * std::sqrt(m * xi * xj) / om) / om;
        const double c = wleb_[static_cast<std::size_t>(j)] * kern;
        mass += c;
        acc += c * k_(ii, j);
      }
    }
    // conditional spread of the partner node; when it fits inside the band, renormalize so
    // that narrow kernels keep unit mass on a grid coarser than themselves
    const double spread = cplx_field ? std::sqrt(om * (om + 2.0 * m * xi)) : std::sqrt(om);
    if (mass > 0 && (!std::isfinite(band_half_[i]) || 6.0 * spread < band_half_[i])) acc /= mass;
    total += w_[i] * acc;
  }
  return mirrored_ ? 2.0 * total : total;
}

double OverlapFunctional::f(double m) const {
  if (field_ == Field::Complex) {
    if (!(m >= 0.0 && m < 1.0)) throw Error("f(m): complex field needs m in [0, 1)");
  } else if (!(m > -1.0 && m < 1.0)) {
    throw Error("f(m): real field needs m in (-1, 1)");
  }
  if (m == 0.0) return 1.0;
  if (analytic_) return field_ == Field::Complex ? 1.0 / (1.0 - m) : 1.0 / (1.0 - m * m);
  return f_grid(m);
}

std::vector<double> OverlapFunctional::f(const std::vector<double>& ms) const {
  std::vector<double> out(ms.size());
  const long n = static_cast<long>(ms.size());
#pragma omp parallel for schedule(dynamic, 4)
  for (long i = 0; i < n; ++i) out[static_cast<std::size_t>(i)] = f(ms[static_cast<std::size_t>(i)]);
  return out;
}

double f_of_m(const Marginals& mg, double m) {
  return OverlapFunctional(std::make_shared<const Marginals>(mg)).f(m);
}

std::vector<double> m_grid() {
  constexpr int half = 1000;
  constexpr double edge = 1e-6;
  std::vector<double> m;
  m.reserve(2 * half);
  for (int k = 0; k < half; ++k) m.push_back(edge * std::pow(0.5 / edge, k / static_cast<double>(half - 1)));
  for (int k = half - 1; k >= 0; --k) {
    const double v = 1.0 - edge * std::pow(0.5 / edge, k / static_cast<double>(half - 1));
    if (v > m.back()) m.push_back(v);
  }
  while (m.size() < 2 * half) m.insert(m.end() - 1, 0.5 * (m[m.size() - 2] + m.back()));
  return m;
}

double delta_l_from(Field field, const std::vector<double>& m, const std::vector<double>& f, bool* sentinel,
                    std::vector<std::string>* warnings) {
  if (m.size() != f.size() || m.empty()) throw Error("delta_l: m and f tables differ in length");
  std::vector<double> lf(f.size()), lm(m.size());
  for (std::size_t k = 0; k < m.size(); ++k) {
    if (!(f[k] > 0) || !std::isfinite(f[k])) throw Error("delta_l: f(m) is not positive and finite on the grid");
    lf[k] = std::log(f[k]);
    lm[k] = log_one_minus(field, m[k]);
  }
  auto ok = [&](double delta) {
    for (std::size_t k = 0; k < m.size(); ++k)
      if (m[k] != 0.0 && delta * lf[k] + lm[k] >= 0.0) return false;
    return true;
  };
  if (sentinel) *sentinel = false;
  if (ok(kDeltaLCap)) {
    if (sentinel) *sentinel = true;
    if (warnings) warnings->push_back("F_delta(m) < 0 on the whole grid up to delta = 1e4; delta_l reported as 1e4");
    return kDeltaLCap;
  }
  double lo = 0.0, hi = kDeltaLCap;
  for (int it = 0; it < 200 && hi - lo > 1e-10; ++it) {
    const double mid = 0.5 * (lo + hi);
    if (ok(mid))
      lo = mid;
    else
      hi = mid;
  }
  const double dl = 0.5 * (lo + hi);
  if (warnings) {
    if (dl > 1e-3 && !ok(dl - 1e-3)) warnings->push_back("delta_l predicate fails just below delta_l (non-monotone)");
    if (ok(dl + 1e-3)) warnings->push_back("delta_l predicate holds just above delta_l (non-monotone)");
  }
  return dl;
}

namespace {

std::vector<double> signed_grid(const Marginals& mg) {
  std::vector<double> m = m_grid();
  if (mg.field() == Field::Real && !mg.channel().even()) {
    std::vector<double> neg;
    for (auto it = m.rbegin(); it != m.rend(); ++it) neg.push_back(-*it);
    neg.insert(neg.end(), m.begin(), m.end());
    m = std::move(neg);
  }
  return m;
}

void truncation_warning(const Marginals& mg, std::vector<std::string>* warnings) {
  if (!warnings) return;
  const Channel& ch = mg.channel();
  if (ch.kind() == ChannelKind::PhaseRetrieval && !ch.degenerate())
    warnings->push_back("f(m) integrates y over the truncated support [" + std::to_string(mg.lo()) + ", " +
                        std::to_string(mg.hi()) + "]; the untruncated f diverges as m -> 1");
}

}  // namespace

double delta_l(const Marginals& mg, std::vector<std::string>* warnings) {
  if (mg.channel().degenerate()) return mg.field() == Field::Complex ? 1.0 : 0.5;
  const OverlapFunctional fn(std::make_shared<const Marginals>(mg));
  const std::vector<double> m = signed_grid(mg);
  truncation_warning(mg, warnings);
  return delta_l_from(mg.field(), m, fn.f(m), nullptr, warnings);
}

double delta_u(const Marginals& mg) {
  if (mg.channel().degenerate()) return mg.field() == Field::Complex ? 1.0 : 0.5;
  double m0max = 0.0;
  for (double y : mg.grid().x) m0max = std::max(m0max, mg.m0(y));
  const double cutoff = 1e-14 * m0max;
  auto h = [&](double y) {
    const double m0 = mg.m0(y);
    if (!(m0 > cutoff) || !(m0 > 1e-300)) return 0.0;
    const double e = mg.excess(y);
    return e * e / m0;
  };
  const double integral = mg.integrate(h, 1e-10);
  if (integral < 1e-14) return kInf;
  return 1.0 / integral;
}

ThresholdReport compute(const Marginals& mg) {
  ThresholdReport r;
  r.field = mg.field();
  r.sigma2 = mg.channel().sigma2();
  r.delta_u = delta_u(mg);
  if (!std::isfinite(r.delta_u)) r.warnings.push_back("E{p(y|G)(|G|^2 - 1)} vanishes: delta_u is infinite");

  r.m = signed_grid(mg);
  std::vector<double> f;
  if (mg.channel().degenerate()) {
    const OverlapFunctional fn(std::make_shared<const Marginals>(mg));
    f = fn.f(r.m);
    r.delta_l = mg.field() == Field::Complex ? 1.0 : 0.5;
  } else {
    const OverlapFunctional fn(std::make_shared<const Marginals>(mg));
    f = fn.f(r.m);
    truncation_warning(mg, &r.warnings);
    r.delta_l = delta_l_from(mg.field(), r.m, f, &r.delta_l_sentinel, &r.warnings);
  }
  r.F.resize(r.m.size());
  for (std::size_t k = 0; k < r.m.size(); ++k) r.F[k] = r.delta_l * std::log(f[k]) + log_one_minus(r.field, r.m[k]);

  const quad::Rule g = mg.grid();
  const std::size_t stride = std::max<std::size_t>(1, g.size() / 400);
  for (std::size_t k = 0; k < g.size(); k += stride) {
    const double y = g.x[k];
    const double m0 = mg.m0(y);
    const double e = mg.excess(y);
    r.y.push_back(y);
    r.integrand.push_back(m0 > 1e-300 ? e * e / m0 : 0.0);
  }
  return r;
}

}  // namespace weakrec::thresholds
