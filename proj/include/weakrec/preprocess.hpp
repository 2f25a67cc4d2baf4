#pragma once

#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "weakrec/channel.hpp"
#include "weakrec/common.hpp"

namespace weakrec {

enum class PreprocessKind {
  Optimal,            // T*(y) = 1 - m0(y)/m2(y)
  OptimalDelta,       // T*_delta, needs delta and delta_u
  OptimalPr,          // (y+ - 1)/(y+ + sqrt(c delta) - 1), c = 1 complex, 2 real
  OptimalPrPositive,  // max(OptimalPr, 0)
  OptimalClamped,     // max(OptimalPr, -M)
  Trimming,           // y for y <= t, else 0
  Subset,             // 1 for y > t, else 0
  Custom,             // piecewise-linear (y, T) table
};

std::string to_string(PreprocessKind k);
PreprocessKind parse_preprocess_kind(const std::string& s);

struct PreprocessSpec {
  PreprocessKind kind = PreprocessKind::OptimalPr;
  double delta = 0.0;  // optimal-delta: target ratio; optimal-pr family: the design ratio (0 = default)
  double t = 0.0;
  double M = 40.0;
  std::vector<double> table_y, table_t;  // custom

  // "optimal-pr", "optimal-pr:1.5", "trimming:5.25", "subset:2", "optimal-clamped:40", ...
  static PreprocessSpec parse(const std::string& text);
  std::string label() const;
};

PreprocessSpec read_custom_preprocess_csv(const std::string& path);

double t_star_pr(Field field, double delta, double y);

// A preprocessing function bound to a channel. Evaluation is pure.
class Preprocessor {
 public:
  // delta_u is required for optimal-delta only.
  Preprocessor(PreprocessSpec spec, std::shared_ptr<const Marginals> marginals,
               std::optional<double> delta_u = std::nullopt);

  const PreprocessSpec& spec() const { return spec_; }
  const Marginals& marginals() const { return *marginals_; }
  Field field() const { return marginals_->field(); }

  double operator()(double y) const;
  Eigen::VectorXd apply(const Eigen::VectorXd& y) const;

  // design ratio actually used by the optimal-pr family
  double pr_delta() const { return pr_delta_; }
  // closed-form supremum of T over the channel's output range, when known
  std::optional<double> analytic_sup() const;
  // |T(y)| <= bound for every y
  double bound() const;
  bool nonnegative() const;

 private:
  double t_star(double y) const;

  PreprocessSpec spec_;
  std::shared_ptr<const Marginals> marginals_;
  double delta_u_ = 0.0;
  double pr_delta_ = 0.0;
};

// T*(y) from the marginals; 0 where m2(y) = 0.
double t_star(const Marginals& mg, double y);
// sqrt(delta_u) T*(y) / (sqrt(delta) - (sqrt(delta) - sqrt(delta_u)) T*(y)), delta > delta_u
double t_star_delta(const Marginals& mg, double delta, double delta_u, double y);

// Law of Z = T(Y) on a quadrature grid: atoms z_k with weights w_k m0(y_k) and
// |G|^2-weights w_k m2(y_k).
struct ZLaw {
  std::vector<double> z;
  std::vector<double> w;
  std::vector<double> w_g2;
  double tau = 0.0;          // supremum of the support
  double tau_mass = 0.0;     // weight of atoms within 1e-12 of tau
  bool all_zero = false;     // P(Z = 0) = 1

  double expect(const std::function<double(double)>& f) const;
  double expect_g2(const std::function<double(double)>& f) const;
  // plain discrete law, |G|^2 weights equal to the weights
  static ZLaw atoms(std::vector<double> z, std::vector<double> w);
};

ZLaw zlaw(const Preprocessor& t);

}  // namespace weakrec
