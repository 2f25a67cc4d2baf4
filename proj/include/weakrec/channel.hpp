#pragma once

#include <functional>
#include <memory>
#include <string>
#include <utility>
#include <vector>

#include "weakrec/common.hpp"
#include "weakrec/quadrature.hpp"

namespace weakrec {

enum class ChannelKind { PhaseRetrieval, GapExample, CustomTable };

std::string to_string(ChannelKind k);

// p(y | g) tabulated on a rectangular (g, y) grid; linear in y between grid points and
// linear in g between rows. For complex channels the g column holds |g|.
struct ChannelTable {
  std::vector<double> g;
  std::vector<double> y;
  Eigen::MatrixXd p;  // rows: g, cols: y
};

ChannelTable read_channel_csv(const std::string& path);

// E{tanh^2(aG)(G^2 - 1)}, G standard normal
double gap_H(double a);

struct GapConstants {
  double a1;
  double a2;
  double peak;
};

// a1 = half the maximiser of gap_H over (0, 10]; a2 > peak with gap_H(a2) = gap_H(a1)
GapConstants solve_gap_constants();

class Channel {
 public:
  static Channel phase_retrieval(Field field, double sigma2);
  static Channel gap_example();
  static Channel gap_example(double a1, double a2);
  static Channel custom(Field field, ChannelTable table);

  ChannelKind kind() const { return kind_; }
  Field field() const { return field_; }
  double sigma2() const { return sigma2_; }
  double sigma() const { return sigma_; }
  bool degenerate() const { return kind_ == ChannelKind::PhaseRetrieval && sigma2_ == 0.0; }
  // p(y|g) = p(y|-g)
  bool even() const;
  double gap_a1() const { return a1_; }
  double gap_a2() const { return a2_; }
  const ChannelTable* table() const { return table_.get(); }

  // g is the real scalar product (real field) or its modulus (complex field)
  double density(double y, double g) const;
  double density(double y, cplx g) const { return density(y, std::abs(g)); }
  // derivative in g, order 1 or 2; finite differences for tables
  double grad_density(double y, double g, int order) const;
  double sample(double g, Rng& rng) const;
  double sample(cplx g, Rng& rng) const { return sample(std::abs(g), rng); }

  // y-range outside of which the marginal density is negligible, plus interior kinks
  std::vector<double> y_breakpoints() const;

 private:
  Channel() = default;
  double table_density(double y, double g) const;

  ChannelKind kind_ = ChannelKind::PhaseRetrieval;
  Field field_ = Field::Complex;
  double sigma2_ = 0.0;
  double sigma_ = 0.0;
  double a1_ = 0.0, a2_ = 0.0;
  std::shared_ptr<const ChannelTable> table_;
};

// Gaussian-averaged marginals of a channel:
//   m0(y) = E p(y|G), m2(y) = E p(y|G)|G|^2, m1(y) = E d/dg p(y|G) (real field)
class Marginals {
 public:
  explicit Marginals(Channel ch);

  const Channel& channel() const { return ch_; }
  Field field() const { return ch_.field(); }

  double m0(double y) const;
  double m2(double y) const;
  double m1(double y) const;
  // m2 - m0 = E p(y|G)(|G|^2 - 1), evaluated without cancellation where possible
  double excess(double y) const;

  double lo() const { return breaks_.front(); }
  double hi() const { return breaks_.back(); }
  const std::vector<double>& breaks() const { return breaks_; }

  // Composite Gauss-Legendre rule over [lo, hi] refined around the channel's kinks
  // and around any extra breakpoints.
  quad::Rule grid(const std::vector<double>& extra_breaks = {}) const;

  // Adaptive integral of h over [lo, hi] (relative tolerance 1e-8 by default).
  double integrate(const std::function<double(double)>& h, double rel_tol = 1e-8,
                   const std::vector<double>& extra_breaks = {}) const;

 private:
  double real_pr_moment(double y, int which) const;
  double generic_moment(double y, int which) const;

  Channel ch_;
  std::vector<double> breaks_;
  quad::Rule hermite_;
  quad::Rule laguerre_;
};

}  // namespace weakrec
