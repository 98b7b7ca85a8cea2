#pragma once

#include "emv/identify.hpp"
#include "emv/macro.hpp"
#include "emv/panel.hpp"

#include <Eigen/Dense>

#include <optional>
#include <string>
#include <vector>

namespace emv {

enum class ProcessKind { fixed, iid_normal, ar1 };

std::string to_string(ProcessKind kind);
ProcessKind process_kind_from_string(const std::string& name);

/// Stochastic model for the vintage effects. iid: V_v ~ N(0, sigma2_V).
/// ar1: V_v ~ N(rho V_{v-1}, sigma2_V), started from the stationary law
/// N(0, sigma2_V / (1 - rho^2)).
struct VintageProcess {
  ProcessKind kind = ProcessKind::fixed;
  double sigma2_V = 0.0;
  double rho = 0.0;
};

/// How the exogenous block is identified while the vintage effects are
/// treated as random: either a nonparametric factor plus a constraint, or a
/// covariate regression.
struct ExogenousHandling {
  std::optional<ConstraintSpec> constraint;
  std::optional<MacroPanel> macro;

  static ExogenousHandling nonparametric(ConstraintSpec spec) {
    ExogenousHandling h;
    h.constraint = std::move(spec);
    return h;
  }
  static ExogenousHandling covariates(MacroPanel m) {
    ExogenousHandling h;
    h.macro = std::move(m);
    return h;
  }
};

/// Per-vintage shrinkage on the process scale. With the other vintages held
/// at their predictions, `shrunk` is the weighted average
/// factor * fixed + (1 - factor) * prior_mean.
struct ShrinkageEntry {
  int vintage = 0;
  int cells = 0;        // observed cells of this vintage
  double fixed = 0.0;   // fixed-effect estimate given the other vintages
  double shrunk = 0.0;  // random-effect prediction
  double prior_mean = 0.0; // process mean of this vintage given its neighbours
  double ratio = 1.0;   // |shrunk - prior_mean| / |fixed - prior_mean|
  double factor = 1.0;  // weight on the fixed-effect estimate
};

struct RandomEffectsFit {
  Decomposition decomposition;  // vintage block holds the shrunk effects
  Decomposition fixed_effects;  // same identification, vintage as fixed effects
  VintageProcess process;
  double sigma2_e = 0.0;
  double reml_deviance = 0.0; // -2 log restricted likelihood at the optimum
  bool complete_shrinkage = false;
  std::vector<ShrinkageEntry> shrinkage;
  std::vector<std::string> covariate_names; // covariate handling only
  Eigen::VectorXd macro_coefficients;
  ResponseTransform transform;
  Eigen::VectorXd raw_vintage;        // process-scale predictions, before recentering
  Eigen::VectorXd prediction_variance; // Var(V - V_hat) per vintage
};

/// Profiled restricted likelihood for the vintage variance components.
/// Evaluations cost one q x q Cholesky (q = number of vintages).
class RemlProblem {
public:
  RemlProblem(const PanelGrid& grid, const ResponseTransform& g, const ExogenousHandling& h);

  /// -2 log restricted likelihood with the residual variance profiled out,
  /// at variance ratio eta = sigma2_V / sigma2_e. eta = 0 is allowed.
  double deviance(ProcessKind kind, double eta, double rho) const;

  struct Solution {
    Eigen::VectorXd fixed; // intercept, age contrasts, time contrasts or covariates
    Eigen::VectorXd random; // one per vintage
    double sigma2_e = 0.0;
    Eigen::MatrixXd smoother; // maps fixed-effect vintage estimates to shrunk ones
    Eigen::VectorXd prediction_variance;
  };
  Solution solve(ProcessKind kind, double eta, double rho) const;

  /// Minimum-norm fixed-effect vintage estimates K^+ b.
  Eigen::VectorXd fixed_vintage_effects() const;

  const Levels& levels() const noexcept { return levels_; }
  Eigen::Index observations() const noexcept { return n_; }
  Eigen::Index fixed_rank() const noexcept { return p_; }
  const Eigen::MatrixXd& fixed_design() const noexcept { return X_; }
  const Eigen::MatrixXd& random_design() const noexcept { return Z_; }
  const Eigen::VectorXd& response() const noexcept { return y_; }
  const Eigen::VectorXd& weights() const noexcept { return w_; }
  bool macro_exogenous() const noexcept { return macro_; }
  const std::vector<int>& vintage_cells() const noexcept { return cells_; }

  /// Correlation matrix of the vintage process (unit innovation variance).
  Eigen::MatrixXd process_covariance(ProcessKind kind, double rho) const;

private:
  Levels levels_;
  bool macro_ = false;
  Eigen::Index n_ = 0, p_ = 0, q_ = 0;
  Eigen::MatrixXd X_, Z_;
  Eigen::VectorXd y_, w_;
  Eigen::LLT<Eigen::MatrixXd> xtwx_;
  double logdet_xtwx_ = 0.0;
  double logdet_w_ = 0.0;
  Eigen::MatrixXd xtwz_;
  Eigen::VectorXd xtwy_;
  Eigen::MatrixXd K_; // Z' W Z - Z' W X (X' W X)^-1 X' W Z
  Eigen::VectorXd b_; // Z' W y - Z' W X (X' W X)^-1 X' W y
  double ymy_ = 0.0;
  std::vector<int> cells_;
  std::vector<std::string> covariate_names_;
  friend RandomEffectsFit assemble_fit(const RemlProblem&, const ExogenousHandling&, ProcessKind,
                                       double, double, const ResponseTransform&);
};

struct RemlSearch {
  double log_eta_min = -18.0; // ln(sigma2_V / sigma2_e) search range
  double log_eta_max = 14.0;
  double rho_step = 0.05;     // coarse grid step on [-0.95, 0.95]
};

/// Random-effects refit of the vintage block with REML variance components.
/// Needs at least 8 observed vintages.
RandomEffectsFit fit_random_effects(const PanelGrid& grid, const ResponseTransform& g,
                                    ProcessKind kind, const ExogenousHandling& handling,
                                    const RemlSearch& search = {});

/// Penalized fit at fixed variance parameters (no REML search).
RandomEffectsFit penalized_fit(const PanelGrid& grid, const ResponseTransform& g,
                               ProcessKind kind, const ExogenousHandling& handling,
                               double variance_ratio, double rho);

struct VintagePrediction {
  int vintage = 0;
  double mean = 0.0;
  double se = 0.0;
};

/// Predictions for the `horizon` vintages after the last fitted one.
std::vector<VintagePrediction> predict_new_vintages(const RandomEffectsFit& fit, int horizon);

} // namespace emv
