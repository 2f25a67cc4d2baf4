#include "weakrec/preprocess.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

namespace weakrec {

namespace {

constexpr double kClip = 1e6;

struct KindName {
  PreprocessKind kind;
  const char* name;
};

constexpr KindName kKindNames[] = {
    {PreprocessKind::Optimal, "optimal"},
    {PreprocessKind::OptimalDelta, "optimal-delta"},
    {PreprocessKind::OptimalPr, "optimal-pr"},
    {PreprocessKind::OptimalPrPositive, "optimal-pr-positive"},
    {PreprocessKind::OptimalClamped, "optimal-clamped"},
    {PreprocessKind::Trimming, "trimming"},
    {PreprocessKind::Subset, "subset"},
    {PreprocessKind::Custom, "custom"},
};

bool pr_family(PreprocessKind k) {
  return k == PreprocessKind::OptimalPr || k == PreprocessKind::OptimalPrPositive ||
         k == PreprocessKind::OptimalClamped;
}

double pr_scale(Field f) { return f == Field::Complex ? 1.0 : 2.0; }

std::string fmt(double v) {
  std::ostringstream os;
  os << v;
  return os.str();
}

}  // namespace

std::string to_string(PreprocessKind k) {
  for (const auto& kn : kKindNames)
    if (kn.kind == k) return kn.name;
  return "?";
}

PreprocessKind parse_preprocess_kind(const std::string& s) {
  for (const auto& kn : kKindNames)
    if (s == kn.name) return kn.kind;
  throw Error("unknown preprocessing '" + s +
              "' (expected optimal, optimal-delta, optimal-pr, optimal-pr-positive, optimal-clamped, trimming, "
              "subset or custom)");
}

PreprocessSpec PreprocessSpec::parse(const std::string& text) {
  const auto colon = text.find(':');
  const std::string name = text.substr(0, colon);
  const std::string arg = colon == std::string::npos ? "" : text.substr(colon + 1);
  if (name == "custom") {
    if (arg.empty()) throw Error("custom preprocessing needs a table: custom:<path.csv>");
    return read_custom_preprocess_csv(arg);
  }
  PreprocessSpec s;
  s.kind = parse_preprocess_kind(name);
  if (arg.empty()) return s;
  double v = 0.0;
  try {
    std::size_t used = 0;
    v = std::stod(arg, &used);
    if (used != arg.size()) throw std::invalid_argument(arg);
  } catch (const std::exception&) {
    throw Error("preprocessing '" + text + "': parameter is not a number");
  }
  switch (s.kind) {
    case PreprocessKind::OptimalDelta:
    case PreprocessKind::OptimalPr:
    case PreprocessKind::OptimalPrPositive: s.delta = v; break;
    case PreprocessKind::OptimalClamped: s.M = v; break;
    case PreprocessKind::Trimming:
    case PreprocessKind::Subset: s.t = v; break;
    default: throw Error("preprocessing '" + name + "' takes no parameter");
  }
  return s;
}

std::string PreprocessSpec::label() const {
  switch (kind) {
    case PreprocessKind::OptimalDelta:
    case PreprocessKind::OptimalPr:
    case PreprocessKind::OptimalPrPositive: return delta > 0 ? to_string(kind) + ":" + fmt(delta) : to_string(kind);
    case PreprocessKind::OptimalClamped: return to_string(kind) + ":" + fmt(M);
    case PreprocessKind::Trimming:
    case PreprocessKind::Subset: return t > 0 ? to_string(kind) + ":" + fmt(t) : to_string(kind);
    default: return to_string(kind);
  }
}

PreprocessSpec read_custom_preprocess_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open preprocessing table '" + path + "'");
  PreprocessSpec s;
  s.kind = PreprocessKind::Custom;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty() || line[0] == '#') continue;
    std::replace(line.begin(), line.end(), ',', ' ');
    std::istringstream ls(line);
    double y, t;
    if (!(ls >> y >> t)) {
      if (s.table_y.empty()) continue;  // header
      throw Error(path + ":" + std::to_string(lineno) + ": expected 'y,T'");
    }
    if (!s.table_y.empty() && y <= s.table_y.back())
      throw Error(path + ":" + std::to_string(lineno) + ": y must be strictly increasing");
    s.table_y.push_back(y);
    s.table_t.push_back(std::clamp(t, -kClip, kClip));
  }
  if (s.table_y.size() < 2) throw Error("preprocessing table '" + path + "' needs at least two rows");
  return s;
}

double t_star_pr(Field field, double delta, double y) {
  const double c = std::sqrt(pr_scale(field) * delta);
  if (!(c > 1.0))
    throw Error(field == Field::Complex ? "optimal-pr needs delta > 1" : "optimal-pr needs delta > 1/2 (real)");
  const double yp = std::max(y, 0.0);
  return (yp - 1.0) / (yp + c - 1.0);
}

double t_star(const Marginals& mg, double y) {
  const double m2 = mg.m2(y);
  if (!(m2 > 0.0)) return 0.0;
  return std::max(1.0 - mg.m0(y) / m2, -kClip);
}

double t_star_delta(const Marginals& mg, double delta, double delta_u, double y) {
  if (!(delta > delta_u)) throw Error("optimal-delta: delta is below spectral threshold");
  const double t = t_star(mg, y);
  const double sd = std::sqrt(delta), su = std::sqrt(delta_u);
  return su * t / (sd - (sd - su) * t);
}

Preprocessor::Preprocessor(PreprocessSpec spec, std::shared_ptr<const Marginals> marginals,
                           std::optional<double> delta_u)
    : spec_(std::move(spec)), marginals_(std::move(marginals)) {
  if (!marginals_) throw Error("preprocessor: marginals required");
  const Field f = marginals_->field();
  if (pr_family(spec_.kind)) {
    pr_delta_ = spec_.delta > 0 ? spec_.delta : (f == Field::Complex ? 1.001 : 0.5005);
    t_star_pr(f, pr_delta_, 1.0);  // validates
  }
  switch (spec_.kind) {
    case PreprocessKind::OptimalDelta:
      if (!delta_u) throw Error("optimal-delta needs the spectral threshold delta_u");
      if (!std::isfinite(*delta_u)) throw Error("optimal-delta: delta_u is infinite for this channel");
      delta_u_ = *delta_u;
      if (!(spec_.delta > delta_u_)) throw Error("optimal-delta: delta is below spectral threshold");
      break;
    case PreprocessKind::OptimalClamped:
      if (!(spec_.M > 0)) throw Error("optimal-clamped needs M > 0");
      break;
    case PreprocessKind::Trimming:
      if (spec_.t == 0.0) spec_.t = f == Field::Complex ? 5.25 : 7.0;
      if (!(spec_.t > 0)) throw Error("trimming needs t > 0");
      break;
    case PreprocessKind::Subset:
      if (spec_.t == 0.0) spec_.t = 2.0;
      if (!(spec_.t > 0)) throw Error("subset needs t > 0");
      break;
    case PreprocessKind::Custom:
      if (spec_.table_y.size() < 2 || spec_.table_y.size() != spec_.table_t.size())
        throw Error("custom preprocessing: malformed table");
      for (double& t : spec_.table_t) t = std::clamp(t, -kClip, kClip);
      break;
    default: break;
  }
}

double Preprocessor::t_star(double y) const { return weakrec::t_star(*marginals_, y); }

double Preprocessor::operator()(double y) const {
  const Field f = marginals_->field();
  switch (spec_.kind) {
    case PreprocessKind::Optimal: return t_star(y);
    case PreprocessKind::OptimalDelta: return t_star_delta(*marginals_, spec_.delta, delta_u_, y);
    case PreprocessKind::OptimalPr: return t_star_pr(f, pr_delta_, y);
    case PreprocessKind::OptimalPrPositive: return std::max(t_star_pr(f, pr_delta_, y), 0.0);
    case PreprocessKind::OptimalClamped: return std::max(t_star_pr(f, pr_delta_, y), -spec_.M);
    case PreprocessKind::Trimming: return y <= spec_.t ? y : 0.0;
    case PreprocessKind::Subset: return y > spec_.t ? 1.0 : 0.0;
    case PreprocessKind::Custom: {
      const auto& ys = spec_.table_y;
      const auto& ts = spec_.table_t;
      if (y <= ys.front()) return ts.front();
      if (y >= ys.back()) return ts.back();
      const auto it = std::upper_bound(ys.begin(), ys.end(), y);
      const std::size_t k = static_cast<std::size_t>(it - ys.begin());
      const double u = (y - ys[k - 1]) / (ys[k] - ys[k - 1]);
      return (1.0 - u) * ts[k - 1] + u * ts[k];
    }
  }
  return 0.0;
}

Eigen::VectorXd Preprocessor::apply(const Eigen::VectorXd& y) const {
  Eigen::VectorXd out(y.size());
  for (Eigen::Index i = 0; i < y.size(); ++i) out(i) = (*this)(y(i));
  return out;
}

std::optional<double> Preprocessor::analytic_sup() const {
  const bool pr = marginals_->channel().kind() == ChannelKind::PhaseRetrieval;
  switch (spec_.kind) {
    case PreprocessKind::OptimalPr:
    case PreprocessKind::OptimalPrPositive:
    case PreprocessKind::OptimalClamped: return 1.0;
    case PreprocessKind::Subset: return 1.0;
    case PreprocessKind::Trimming:
      if (pr) return spec_.t;
      return std::nullopt;
    case PreprocessKind::Optimal:
    case PreprocessKind::OptimalDelta:
      if (pr) return 1.0;
      return std::nullopt;
    default: return std::nullopt;
  }
}

double Preprocessor::bound() const {
  const Field f = marginals_->field();
  switch (spec_.kind) {
    case PreprocessKind::OptimalPr: return std::max(1.0, 1.0 / (std::sqrt(pr_scale(f) * pr_delta_) - 1.0));
    case PreprocessKind::OptimalPrPositive: return 1.0;
    case PreprocessKind::OptimalClamped:
      return std::max(1.0, std::min(spec_.M, 1.0 / (std::sqrt(pr_scale(f) * pr_delta_) - 1.0)));
    case PreprocessKind::Subset: return 1.0;
    case PreprocessKind::Trimming: return std::max(spec_.t, std::abs(std::min(0.0, marginals_->lo())));
    default: break;
  }
  double b = 0.0;
  const quad::Rule g = marginals_->grid();
  for (double y : g.x) b = std::max(b, std::abs((*this)(y)));
  return b;
}

bool Preprocessor::nonnegative() const {
  switch (spec_.kind) {
    case PreprocessKind::OptimalPrPositive:
    case PreprocessKind::Subset: return true;
    case PreprocessKind::Trimming: return marginals_->lo() >= 0.0;
    default: return false;
  }
}

// ---------------------------------------------------------------------------

double ZLaw::expect(const std::function<double(double)>& f) const {
  double acc = 0.0;
  for (std::size_t k = 0; k < z.size(); ++k) acc += w[k] * f(z[k]);
  return acc;
}

double ZLaw::expect_g2(const std::function<double(double)>& f) const {
  double acc = 0.0;
  for (std::size_t k = 0; k < z.size(); ++k) acc += w_g2[k] * f(z[k]);
  return acc;
}

ZLaw ZLaw::atoms(std::vector<double> z, std::vector<double> w) {
  if (z.empty() || z.size() != w.size()) throw Error("zlaw: atoms and weights must match");
  ZLaw law;
  law.z = std::move(z);
  law.w = std::move(w);
  law.w_g2 = law.w;
  law.tau = *std::max_element(law.z.begin(), law.z.end());
  law.all_zero = true;
  for (std::size_t k = 0; k < law.z.size(); ++k) {
    if (std::abs(law.z[k] - law.tau) < 1e-12) law.tau_mass += law.w[k];
    if (std::abs(law.z[k]) >= 1e-12 && law.w[k] > 0) law.all_zero = false;
  }
  return law;
}

ZLaw zlaw(const Preprocessor& t) {
  const Marginals& mg = t.marginals();
  const Channel& ch = mg.channel();
  const PreprocessSpec& s = t.spec();

  std::vector<double> extra;
  bool refine_origin = false;
  switch (s.kind) {
    case PreprocessKind::OptimalPr:
    case PreprocessKind::OptimalPrPositive:
    case PreprocessKind::OptimalClamped: {
      refine_origin = true;
      if (s.kind == PreprocessKind::OptimalClamped) {
        const double c = std::sqrt((ch.field() == Field::Complex ? 1.0 : 2.0) * t.pr_delta());
        extra.push_back((1.0 - s.M * (c - 1.0)) / (1.0 + s.M));
      }
      break;
    }
    case PreprocessKind::Optimal:
    case PreprocessKind::OptimalDelta: refine_origin = ch.kind() == ChannelKind::PhaseRetrieval; break;
    case PreprocessKind::Trimming:
    case PreprocessKind::Subset: extra.push_back(s.t); break;
    case PreprocessKind::Custom: extra = s.table_y; break;
  }
  refine_origin = refine_origin && mg.lo() <= 0.0 && mg.hi() > 1.0;
  if (refine_origin) {
    extra.push_back(0.0);
    extra.push_back(1.0);
  }
  quad::Rule rule = mg.grid(extra);
  if (refine_origin) {
    quad::Rule kept;
    for (std::size_t k = 0; k < rule.size(); ++k)
      if (rule.x[k] <= 0.0 || rule.x[k] >= 1.0) {
        kept.x.push_back(rule.x[k]);
        kept.w.push_back(rule.w[k]);
      }
    const bool sqrt_origin = ch.kind() == ChannelKind::PhaseRetrieval && ch.field() == Field::Real && ch.sigma() == 0;
    if (sqrt_origin) {
      quad::Rule u;
      quad::append_graded(u, 0.0, 1.0, 1e-4, 1.3, 8);
      for (std::size_t k = 0; k < u.size(); ++k) {
        kept.x.push_back(u.x[k] * u.x[k]);
        kept.w.push_back(2.0 * u.x[k] * u.w[k]);
      }
    } else {
      quad::append_graded(kept, 0.0, 1.0, 1e-6, 1.3, 8);
    }
    rule = std::move(kept);
  }

  ZLaw law;
  law.z.reserve(rule.size());
  law.w.reserve(rule.size());
  law.w_g2.reserve(rule.size());
  double total = 0.0;
  for (std::size_t k = 0; k < rule.size(); ++k) {
    const double y = rule.x[k];
    const double m0 = mg.m0(y);
    if (m0 <= 0.0) continue;
    law.z.push_back(t(y));
    law.w.push_back(rule.w[k] * m0);
    law.w_g2.push_back(rule.w[k] * mg.m2(y));
    total += rule.w[k] * m0;
  }
  if (std::abs(total - 1.0) > 1e-6)
    throw quad::QuadratureError("zlaw: total weight " + std::to_string(total) + " deviates from 1",
                                std::abs(total - 1.0));
  if (law.z.empty()) throw Error("zlaw: empty support");

  const double zmax = *std::max_element(law.z.begin(), law.z.end());
  const auto sup = t.analytic_sup();
  law.tau = sup ? std::max(*sup, zmax) : zmax;
  law.all_zero = true;
  for (std::size_t k = 0; k < law.z.size(); ++k) {
    if (std::abs(law.z[k] - law.tau) < 1e-12) law.tau_mass += law.w[k];
    if (std::abs(law.z[k]) >= 1e-12) law.all_zero = false;
  }
  return law;
}

}  // namespace weakrec
