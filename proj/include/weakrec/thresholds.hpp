#pragma once

#include <memory>
#include <string>
#include <vector>

#include "weakrec/channel.hpp"

namespace weakrec::thresholds {

// f(m) = int E{p(y|G1) p(y|G2)} / E{p(y|G)} dy for G1, G2 with correlation m.
// The y-integral is tabulated once on a grid of |G|^2 (complex) or G (real) nodes;
// each m then costs one pass over a band of node pairs.
class OverlapFunctional {
 public:
  explicit OverlapFunctional(std::shared_ptr<const Marginals> mg);

  Field field() const { return field_; }
  bool analytic() const { return analytic_; }
  // complex: m in [0, 1); real: m in (-1, 1)
  double f(double m) const;
  std::vector<double> f(const std::vector<double>& ms) const;
  std::size_t nodes() const { return x_.size(); }

 private:
  double f_grid(double m) const;

  std::shared_ptr<const Marginals> mg_;
  Field field_;
  bool analytic_ = false;
  bool mirrored_ = false;  // real field, even channel: rows i and n-1-i contribute equally
  std::vector<double> x_, w_, wleb_;  // nodes, density weights, plain weights
  Eigen::MatrixXd k_;
  std::vector<std::vector<std::pair<int, int>>> ranges_;  // per row: [begin, end) column ranges
  std::vector<double> band_half_;                          // kernel normalization threshold per row (inf: always)
};

double f_of_m(const Marginals& mg, double m);

// 2000 points in (0, 1 - 1e-6], geometric near both ends
std::vector<double> m_grid();

struct ThresholdReport {
  double delta_l = 0.0;
  double delta_u = 0.0;
  Field field = Field::Complex;
  double sigma2 = 0.0;
  bool delta_l_sentinel = false;
  // F at delta_l on the m-grid
  std::vector<double> m;
  std::vector<double> F;
  // delta_u integrand (E{p(|G|^2 - 1)})^2 / E{p} on a y-grid
  std::vector<double> y;
  std::vector<double> integrand;
  std::vector<std::string> warnings;
};

inline constexpr double kDeltaLCap = 1e4;

double delta_u(const Marginals& mg);
// sup{delta : F_delta(m) < 0 on the grid}; kDeltaLCap when never violated
double delta_l(const Marginals& mg, std::vector<std::string>* warnings = nullptr);
// delta_l from tabulated f values
double delta_l_from(Field field, const std::vector<double>& m, const std::vector<double>& f, bool* sentinel = nullptr,
                    std::vector<std::string>* warnings = nullptr);

ThresholdReport compute(const Marginals& mg);

}  // namespace weakrec::thresholds
