#include "weakrec/channel.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <numbers>
#include <sstream>

namespace weakrec {

namespace {

constexpr double kInvSqrt2Pi = 0.3989422804014327;

double normal_pdf(double x, double mean, double sd) {
  const double u = (x - mean) / sd;
  return kInvSqrt2Pi / sd * std::exp(-0.5 * u * u);
}

// exp(-y + s^2/2) * erfc((s - y/s)/sqrt 2), stable for very negative y
double pr_tail_product(double y, double s) {
  const double a = (s - y / s) / std::numbers::sqrt2;
  if (a < 25.0) return std::exp(-y + 0.5 * s * s) * std::erfc(a);
  const double ia2 = 1.0 / (a * a);
  const double erfcx = (1.0 - 0.5 * ia2 + 0.75 * ia2 * ia2 - 1.875 * ia2 * ia2 * ia2) /
                       (a * std::sqrt(std::numbers::pi));
  return erfcx * std::exp(-0.5 * y * y / (s * s));
}

double tanh2_d(double a, double g, int order) {
  const double t = std::tanh(a * g);
  const double s = 1.0 - t * t;
  if (order == 0) return t * t;
  if (order == 1) return 2.0 * a * t * s;
  return 2.0 * a * a * s * (s - 2.0 * t * t);
}

}  // namespace

std::string to_string(ChannelKind k) {
  switch (k) {
    case ChannelKind::PhaseRetrieval: return "phase-retrieval";
    case ChannelKind::GapExample: return "gap-example";
    case ChannelKind::CustomTable: return "custom-table";
  }
  return "?";
}

double gap_H(double a) {
  static const quad::Rule gh = quad::gauss_hermite(128);
  double s = 0.0;
  for (std::size_t k = 0; k < gh.size(); ++k) {
    const double g = gh.x[k];
    s += gh.w[k] * tanh2_d(a, g, 0) * (g * g - 1.0);
  }
  return s;
}

GapConstants solve_gap_constants() {
  double peak = 0.01, best = -kInf;
  for (int i = 1; i <= 1000; ++i) {
    const double a = 0.01 * i;
    const double h = gap_H(a);
    if (h > best) {
      best = h;
      peak = a;
    }
  }
  const double a1 = 0.5 * peak;
  const double target = gap_H(a1);
  double lo = peak, hi = 10.0;
  if (!(gap_H(hi) < target)) throw Error("gap-example: no bracketing root above the peak");
  for (int it = 0; it < 200 && hi - lo > 1e-15; ++it) {
    const double mid = 0.5 * (lo + hi);
    (gap_H(mid) > target ? lo : hi) = mid;
  }
  return {a1, 0.5 * (lo + hi), peak};
}

ChannelTable read_channel_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open channel table '" + path + "'");
  std::string line;
  std::map<std::pair<double, double>, double> cells;
  std::vector<double> gs, ys;
  bool header_checked = false;
  while (std::getline(in, line)) {
    if (line.empty() || line[0] == '#') continue;
    std::replace(line.begin(), line.end(), ',', ' ');
    std::istringstream ss(line);
    double g, y, p;
    if (!(ss >> g >> y >> p)) {
      if (!header_checked) {
        header_checked = true;
        continue;
      }
      throw Error("channel table: malformed row '" + line + "'");
    }
    header_checked = true;
    if (p < 0 || !std::isfinite(p)) throw Error("channel table: density must be finite and >= 0");
    cells[{g, y}] = p;
    gs.push_back(g);
    ys.push_back(y);
  }
  auto uniq = [](std::vector<double> v) {
    std::sort(v.begin(), v.end());
    v.erase(std::unique(v.begin(), v.end()), v.end());
    return v;
  };
  ChannelTable t;
  t.g = uniq(gs);
  t.y = uniq(ys);
  if (t.g.empty() || t.y.size() < 2) throw Error("channel table: need >= 1 g row and >= 2 y points");
  if (cells.size() != t.g.size() * t.y.size())
    throw Error("channel table: grid is not rectangular");
  t.p.resize(static_cast<Eigen::Index>(t.g.size()), static_cast<Eigen::Index>(t.y.size()));
  for (std::size_t i = 0; i < t.g.size(); ++i)
    for (std::size_t j = 0; j < t.y.size(); ++j) {
      auto it = cells.find({t.g[i], t.y[j]});
      if (it == cells.end()) throw Error("channel table: grid is not rectangular");
      t.p(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = it->second;
    }
  return t;
}

Channel Channel::phase_retrieval(Field field, double sigma2) {
  if (!(sigma2 >= 0) || !std::isfinite(sigma2)) throw Error("sigma2 must be finite and >= 0");
  Channel c;
  c.kind_ = ChannelKind::PhaseRetrieval;
  c.field_ = field;
  c.sigma2_ = sigma2;
  c.sigma_ = std::sqrt(sigma2);
  return c;
}

Channel Channel::gap_example() {
  const auto k = solve_gap_constants();
  return gap_example(k.a1, k.a2);
}

Channel Channel::gap_example(double a1, double a2) {
  if (!(a2 > a1 && a1 > 0)) throw Error("gap-example needs 0 < a1 < a2");
  Channel c;
  c.kind_ = ChannelKind::GapExample;
  c.field_ = Field::Real;
  c.a1_ = a1;
  c.a2_ = a2;
  return c;
}

Channel Channel::custom(Field field, ChannelTable table) {
  const auto ng = table.g.size(), ny = table.y.size();
  if (ny < 2 || ng < 1 || table.p.rows() != static_cast<Eigen::Index>(ng) ||
      table.p.cols() != static_cast<Eigen::Index>(ny))
    throw Error("channel table: inconsistent dimensions");
  if (!std::is_sorted(table.g.begin(), table.g.end()) || !std::is_sorted(table.y.begin(), table.y.end()))
    throw Error("channel table: grids must be ascending");
  if (field == Field::Complex && table.g.front() < 0)
    throw Error("channel table: complex channels are indexed by |g| >= 0");
  for (std::size_t i = 0; i < ng; ++i) {
    double mass = 0.0;
    for (std::size_t j = 0; j + 1 < ny; ++j)
      mass += 0.5 * (table.y[j + 1] - table.y[j]) *
              (table.p(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) +
               table.p(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j + 1)));
    if (!(mass > 0)) throw Error("channel table: a row has zero mass");
    table.p.row(static_cast<Eigen::Index>(i)) /= mass;
  }
  Channel c;
  c.kind_ = ChannelKind::CustomTable;
  c.field_ = field;
  c.table_ = std::make_shared<const ChannelTable>(std::move(table));
  return c;
}

bool Channel::even() const {
  if (kind_ != ChannelKind::CustomTable) return true;
  if (field_ == Field::Complex) return true;
  const auto& g = table_->g;
  for (std::size_t i = 0; i < g.size(); ++i) {
    const std::size_t j = g.size() - 1 - i;
    if (std::abs(g[i] + g[j]) > 1e-12) return false;
    if ((table_->p.row(static_cast<Eigen::Index>(i)) - table_->p.row(static_cast<Eigen::Index>(j)))
            .cwiseAbs()
            .maxCoeff() > 1e-12)
      return false;
  }
  return true;
}

double Channel::table_density(double y, double g) const {
  const auto& t = *table_;
  if (y < t.y.front() || y > t.y.back()) return 0.0;
  auto jt = std::upper_bound(t.y.begin(), t.y.end(), y);
  std::size_t j = std::min<std::size_t>(std::max<std::ptrdiff_t>(jt - t.y.begin() - 1, 0), t.y.size() - 2);
  const double fy = (y - t.y[j]) / (t.y[j + 1] - t.y[j]);
  auto row_at = [&](std::size_t i) {
    const auto ii = static_cast<Eigen::Index>(i);
    return (1 - fy) * t.p(ii, static_cast<Eigen::Index>(j)) + fy * t.p(ii, static_cast<Eigen::Index>(j + 1));
  };
  if (t.g.size() == 1 || g <= t.g.front()) return row_at(0);
  if (g >= t.g.back()) return row_at(t.g.size() - 1);
  auto it = std::upper_bound(t.g.begin(), t.g.end(), g);
  const std::size_t i = static_cast<std::size_t>(it - t.g.begin()) - 1;
  const double fg = (g - t.g[i]) / (t.g[i + 1] - t.g[i]);
  return (1 - fg) * row_at(i) + fg * row_at(i + 1);
}

double Channel::density(double y, double g) const {
  switch (kind_) {
    case ChannelKind::PhaseRetrieval:
      if (sigma2_ == 0.0) throw Error("degenerate channel: use closed-form marginals");
      return normal_pdf(y, g * g, sigma_);
    case ChannelKind::GapExample: {
      const double q = tanh2_d(a2_, g, 0) - tanh2_d(a1_, g, 0);
      if (y >= 1.0 && y <= 2.0) return q;
      if (y >= -2.0 && y <= -1.0) return 1.0 - q;
      return 0.0;
    }
    case ChannelKind::CustomTable: return table_density(y, g);
  }
  return 0.0;
}

double Channel::grad_density(double y, double g, int order) const {
  if (order != 1 && order != 2) throw Error("grad_density: order must be 1 or 2");
  switch (kind_) {
    case ChannelKind::PhaseRetrieval: {
      const double p = density(y, g);
      const double u = y - g * g;
      const double d1 = 2.0 * g * u / sigma2_;
      if (order == 1) return p * d1;
      return p * (d1 * d1 + (2.0 * u - 4.0 * g * g) / sigma2_);
    }
    case ChannelKind::GapExample: {
      const double dq = tanh2_d(a2_, g, order) - tanh2_d(a1_, g, order);
      if (y >= 1.0 && y <= 2.0) return dq;
      if (y >= -2.0 && y <= -1.0) return -dq;
      return 0.0;
    }
    case ChannelKind::CustomTable: {
      const double h = 1e-5;
      if (order == 1) return (table_density(y, g + h) - table_density(y, g - h)) / (2 * h);
      return (table_density(y, g + h) - 2 * table_density(y, g) + table_density(y, g - h)) / (h * h);
    }
  }
  return 0.0;
}

double Channel::sample(double g, Rng& rng) const {
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  switch (kind_) {
    case ChannelKind::PhaseRetrieval: {
      if (sigma2_ == 0.0) return g * g;
      std::normal_distribution<double> n01;
      return g * g + sigma_ * n01(rng);
    }
    case ChannelKind::GapExample: {
      const double q = tanh2_d(a2_, g, 0) - tanh2_d(a1_, g, 0);
      const double u = unif(rng), v = unif(rng);
      return u < q ? 1.0 + v : -2.0 + v;
    }
    case ChannelKind::CustomTable: {
      const auto& t = *table_;
      std::size_t row = 0;
      if (t.g.size() > 1 && g > t.g.front()) {
        if (g >= t.g.back()) {
          row = t.g.size() - 1;
        } else {
          const auto it = std::upper_bound(t.g.begin(), t.g.end(), g);
          const std::size_t i = static_cast<std::size_t>(it - t.g.begin()) - 1;
          const double fg = (g - t.g[i]) / (t.g[i + 1] - t.g[i]);
          row = unif(rng) < fg ? i + 1 : i;
        }
      }
      const auto r = static_cast<Eigen::Index>(row);
      // inverse CDF of the piecewise-linear row
      double u = unif(rng), acc = 0.0;
      for (std::size_t j = 0; j + 1 < t.y.size(); ++j) {
        const double h = t.y[j + 1] - t.y[j];
        const double p0 = t.p(r, static_cast<Eigen::Index>(j)), p1 = t.p(r, static_cast<Eigen::Index>(j + 1));
        const double m = 0.5 * h * (p0 + p1);
        if (u <= acc + m || j + 2 == t.y.size()) {
          const double need = std::clamp(u - acc, 0.0, m);
          const double slope = (p1 - p0) / h;
          double x;
          if (std::abs(slope) < 1e-14) {
            x = p0 > 0 ? need / p0 : 0.5 * h;
          } else {
            x = (-p0 + std::sqrt(std::max(p0 * p0 + 2.0 * slope * need, 0.0))) / slope;
          }
          return t.y[j] + std::clamp(x, 0.0, h);
        }
        acc += m;
      }
      return t.y.back();
    }
  }
  return 0.0;
}

std::vector<double> Channel::y_breakpoints() const {
  switch (kind_) {
    case ChannelKind::PhaseRetrieval: {
      const double s = sigma_;
      if (field_ == Field::Complex) {
        if (s == 0.0) return {0.0, 34.0};
        return {-10.0 * s, 10.0 * s, 34.0 + 10.0 * s + sigma2_};
      }
      if (s == 0.0) return {0.0, 1.0, 70.0};
      return {-10.0 * s, 10.0 * s, 70.0 + 10.0 * s + sigma2_};
    }
    case ChannelKind::GapExample: return {-2.0, -1.0, 1.0, 2.0};
    case ChannelKind::CustomTable: return table_->y;
  }
  return {};
}

// ---------------------------------------------------------------------------

Marginals::Marginals(Channel ch)
    : ch_(std::move(ch)),
      breaks_(ch_.y_breakpoints()),
      hermite_(quad::gauss_hermite(128)),
      laguerre_(quad::gauss_laguerre(128)) {}

double Marginals::real_pr_moment(double y, int which) const {
  // 2 * int_0^inf phi(g) N(y; g^2, s^2) h(g) dg, h in {1, g^2, g^2 - 1}
  const double s = ch_.sigma();
  if (y > 30.0 * s) {
    // v = g^2 = y + s t: the noise kernel becomes N(0, 1) in t and the rest is smooth
    auto f = [&](double t) {
      const double v = y + s * t;
      const double base = normal_pdf(t, 0.0, 1.0) * std::exp(-0.5 * v) * kInvSqrt2Pi / std::sqrt(v);
      if (which == 0) return base;
      if (which == 2) return base * v;
      return base * (v - 1.0);
    };
    return quad::integrate(f, std::vector<double>{-12.0, 0.0, 12.0}, 1e-11, 1e-6);
  }
  const double c = std::sqrt(std::max(y, 0.0));
  const double w = s / (2.0 * std::max(c, std::sqrt(s)));
  const double b0 = std::max(0.0, c - 12.0 * w), b1 = c + 12.0 * w;
  const double b2 = std::max(b1 + 1.0, 13.0);
  auto f = [&](double g) {
    const double base = 2.0 * normal_pdf(g, 0.0, 1.0) * normal_pdf(y, g * g, s);
    if (which == 0) return base;
    if (which == 2) return base * g * g;
    return base * (g * g - 1.0);
  };
  std::vector<double> br{0.0};
  if (b0 > 0) br.push_back(b0);
  br.push_back(b1);
  br.push_back(b2);
  return quad::integrate(f, br, 1e-11, 1e-6);
}

double Marginals::generic_moment(double y, int which) const {
  double acc = 0.0;
  if (ch_.field() == Field::Complex) {
    for (std::size_t k = 0; k < laguerre_.size(); ++k) {
      const double z = laguerre_.x[k];
      const double p = ch_.density(y, std::sqrt(z));
      acc += laguerre_.w[k] * p * (which == 0 ? 1.0 : which == 2 ? z : z - 1.0);
    }
    return acc;
  }
  for (std::size_t k = 0; k < hermite_.size(); ++k) {
    const double g = hermite_.x[k];
    if (which == 1) {
      acc += hermite_.w[k] * ch_.grad_density(y, g, 1);
      continue;
    }
    const double p = ch_.density(y, g);
    acc += hermite_.w[k] * p * (which == 0 ? 1.0 : which == 2 ? g * g : g * g - 1.0);
  }
  return acc;
}

double Marginals::m0(double y) const {
  if (ch_.kind() == ChannelKind::PhaseRetrieval) {
    const double s = ch_.sigma();
    if (ch_.field() == Field::Complex) {
      if (s == 0.0) return y >= 0 ? std::exp(-y) : 0.0;
      return 0.5 * pr_tail_product(y, s);
    }
    if (s == 0.0) return y > 0 ? std::exp(-0.5 * y) * kInvSqrt2Pi / std::sqrt(y) : 0.0;
    return real_pr_moment(y, 0);
  }
  return generic_moment(y, 0);
}

double Marginals::excess(double y) const {
  if (ch_.kind() == ChannelKind::PhaseRetrieval) {
    const double s = ch_.sigma(), s2 = ch_.sigma2();
    if (ch_.field() == Field::Complex) {
      if (s == 0.0) return y >= 0 ? (y - 1.0) * std::exp(-y) : 0.0;
      return s * kInvSqrt2Pi * std::exp(-0.5 * y * y / s2) +
             0.5 * (y - 1.0 - s2) * pr_tail_product(y, s);
    }
    if (s == 0.0) return (y - 1.0) * m0(y);
    return real_pr_moment(y, 3);
  }
  return generic_moment(y, 3);
}

double Marginals::m2(double y) const {
  if (ch_.kind() == ChannelKind::PhaseRetrieval && ch_.field() == Field::Real && ch_.sigma() > 0)
    return real_pr_moment(y, 2);
  if (ch_.kind() == ChannelKind::PhaseRetrieval) return m0(y) + excess(y);
  return generic_moment(y, 2);
}

double Marginals::m1(double y) const {
  if (ch_.field() != Field::Real) throw Error("m1 is defined for the real field only");
  if (ch_.even()) return 0.0;
  return generic_moment(y, 1);
}

quad::Rule Marginals::grid(const std::vector<double>& extra_breaks) const {
  std::vector<double> br = breaks_;
  for (double b : extra_breaks)
    if (b > lo() && b < hi()) br.push_back(b);
  std::sort(br.begin(), br.end());
  br.erase(std::unique(br.begin(), br.end()), br.end());

  const bool pr = ch_.kind() == ChannelKind::PhaseRetrieval;
  const double s = ch_.sigma();
  quad::Rule out;
  for (std::size_t i = 0; i + 1 < br.size(); ++i) {
    const double a = br[i], b = br[i + 1];
    quad::Rule seg;
    if (ch_.kind() == ChannelKind::GapExample) {
      seg = quad::composite({a, b}, b - a, 4);
    } else if (pr && ch_.field() == Field::Real && s == 0.0 && a == 0.0) {
      // y = u^2 removes the 1/sqrt(y) singularity at the origin
      quad::Rule u = quad::composite({0.0, std::sqrt(b)}, 0.05, 8);
      for (std::size_t k = 0; k < u.size(); ++k) {
        seg.x.push_back(u.x[k] * u.x[k]);
        seg.w.push_back(2.0 * u.x[k] * u.w[k]);
      }
    } else {
      double width = 0.25;
      if (pr && s > 0 && b <= 10.0 * s + 1e-12) width = std::min(0.25, 0.5 * s);
      seg = quad::composite({a, b}, width, 8);
    }
    out.x.insert(out.x.end(), seg.x.begin(), seg.x.end());
    out.w.insert(out.w.end(), seg.w.begin(), seg.w.end());
  }
  return out;
}

double Marginals::integrate(const std::function<double(double)>& h, double rel_tol,
                            const std::vector<double>& extra_breaks) const {
  std::vector<double> br = breaks_;
  for (double b : extra_breaks)
    if (b > lo() && b < hi()) br.push_back(b);
  std::sort(br.begin(), br.end());
  br.erase(std::unique(br.begin(), br.end()), br.end());
  // real PR: m0 ~ y^(-1/2) above the noise scale, so integrate in u = sqrt(y) there
  const bool sqrt_y = ch_.kind() == ChannelKind::PhaseRetrieval && ch_.field() == Field::Real;
  double total = 0.0, err = 0.0, l1 = 0.0;
  for (std::size_t i = 0; i + 1 < br.size(); ++i) {
    const double a = br[i], b = br[i + 1];
    const quad::Piece p = sqrt_y && a >= 0.0
                              ? quad::gk31([&](double u) { return 2.0 * u * h(u * u); }, std::sqrt(a), std::sqrt(b), rel_tol)
                              : quad::gk31(h, a, b, rel_tol);
    total += p.value;
    err += p.err;
    l1 += p.l1;
  }
  quad::check_error(err, l1, 1e-6);
  return total;
}

}  // namespace weakrec
