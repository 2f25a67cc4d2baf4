#pragma once

#include <atomic>
#include <limits>
#include <memory>
#include <string>
#include <vector>

#include "weakrec/channel.hpp"
#include "weakrec/common.hpp"
#include "weakrec/quadrature.hpp"

// Message passing for real-valued generalized linear models, its state evolution, and
// the linearization around the uninformative fixed point.
namespace weakrec::amp {

inline constexpr double kSigma2Floor = 1e-3;

struct SEState {
  double mu = 0.0;
  double q = 0.0;
  double tau2 = std::numeric_limits<double>::quiet_NaN();
  double b = std::numeric_limits<double>::quiet_NaN();  // Onsager coefficient at this step
};

// F(x, y; qbar) = E dp(y | qbar x + sqrt(qbar) G) / E p(y | ...), and
// G(x, y; qbar) = E d2p / E p - F^2.
class GampFunctions {
 public:
  explicit GampFunctions(std::shared_ptr<const Marginals> mg);

  const Marginals& marginals() const { return *mg_; }
  const Channel& channel() const { return mg_->channel(); }

  double F(double x, double y, double qbar) const;
  double G(double x, double y, double qbar) const;
  // dF/dx = qbar G
  double F_prime(double x, double y, double qbar) const { return qbar * G(x, y, qbar); }

  // h(q) of the state evolution
  double h(double q, double rel_tol = 1e-9) const;

  // E{ sum_k w_k fn(c + s xi_k) } rule for g -> p(y|g) smoothed by N(c, s^2):
  // Gauss-Hermite for smooth channels, peak-following panels for phase retrieval.
  quad::Rule gaussian_rule(double y, double c, double s) const;

  long saturations() const { return saturated_.load(); }

 private:
  struct Moments {
    double s0 = 0, s1 = 0, s2 = 0;
  };
  Moments moments(double x, double y, double qbar, bool second) const;

  std::shared_ptr<const Marginals> mg_;
  quad::Rule hermite_;
  mutable std::atomic<long> saturated_{0};
};

// mu_{t+1} = delta h(q_t), q_t = mu_t / (1 + mu_t); entries 0..t_max.
// With `onsager`, b_t is filled by quadrature for every step.
std::vector<SEState> state_evolution(const GampFunctions& fn, double delta, double mu0, int t_max,
                                     bool onsager = false, double rel_tol = 1e-9);

// The (mu, tau^2) recursion for f_t = F(., .; 1 - q_t) with q_t = mu_t / (1 + mu_t).
std::vector<SEState> state_evolution_general(const GampFunctions& fn, double delta, double mu0, double tau0_2,
                                             int t_max, double rel_tol = 1e-9);

// delta E{f_t'(mu G0 + sqrt(mu) G1; Y)}, Y ~ p(.|G0), with f_t = F(., .; 1/(1 + mu))
double onsager(const GampFunctions& fn, double delta, double mu, double rel_tol = 1e-7);

struct AmpState {
  Eigen::VectorXd z;     // length d
  Eigen::VectorXd zhat;  // length n
  int t = 0;
  double b = 0.0;
};

enum class OnsagerMode { StateEvolution, Empirical, Off };

struct AmpOptions {
  OnsagerMode onsager = OnsagerMode::StateEvolution;
  double divergence = 1e6;  // abort once ||z|| > divergence * sqrt(d)
};

struct AmpRecord {
  int t = 0;
  double mu_se = 0.0;
  double q_se = 0.0;
  double overlap_emp = 0.0;  // <x, z^t>/d
  double znorm_emp = 0.0;    // ||z^t||^2/d
  double zhat_norm = std::numeric_limits<double>::quiet_NaN();  // ||zhat^t||^2/n
  double b = 0.0;
};

struct AmpResult {
  std::vector<AmpRecord> trajectory;
  AmpState state;
  bool diverged = false;
  std::vector<std::string> warnings;
};

// z0 with <x, z0>/d = mu0 and ||z0||^2/d = mu0^2 + mu0 exactly (Gaussian direction, projected
// off x and rescaled)
Eigen::VectorXd calibrated_init(const Eigen::VectorXd& x, double mu0, Rng& rng);

// `se` must cover t = 0..t_max; its b fields are used in StateEvolution mode.
AmpResult amp_run(const RowMat<double>& a, const Eigen::VectorXd& y, const Eigen::VectorXd& x,
                  const GampFunctions& fn, const std::vector<SEState>& se, const Eigen::VectorXd& z0, int t_max,
                  const AmpOptions& opt = {});

void write_trajectory_csv(const std::string& path, const std::vector<AmpRecord>& rows);

struct LinearizedModel {
  Eigen::VectorXd J;             // j_i = T*(y_i) / (1 - T*(y_i))
  double top_eig = 0.0;          // largest real part among eigenvalues of L_n
  double max_imag = 0.0;         // largest |imag| among eigenvalues of L_n
  bool real_spectrum = true;     // every |imag| <= 1e-8 max(1, |real|)
  Eigen::VectorXcd eigenvalues;  // of L_n
  double alpha_bar = 0.0;        // sqrt(delta / delta_u)
  double dstar_top = 0.0;        // top eigenvalue of D*_n(alpha_bar)
};

// L_n = [[A^T J A, -A^T J^2], [A, -J]], dense, n + d <= 8192.
// A non-real eigenvalue throws unless require_real is false, in which case it is only flagged.
LinearizedModel linearized_top_eig(const RowMat<double>& a, const Eigen::VectorXd& y, const Marginals& mg,
                                   double delta_u, bool require_real = true);

}  // namespace weakrec::amp
