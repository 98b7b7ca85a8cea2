#pragma once

#include "emv/design.hpp"
#include "emv/estimator.hpp"

#include <Eigen/Dense>

#include <string>
#include <utility>
#include <vector>

namespace emv {

enum class ConstraintKind {
  minimum_norm,              // native representation of the fit, recentred
  last_two_vintages_equal,   // SAS-style default
  first_last_vintages_equal, // R-style default
  intrinsic,                 // orthogonal to the null direction
  vintage_trend_zero,        // OLS slope of vintage effects over C_V is zero
  maturity_slope,            // OLS slope of maturity effects beyond A* equals k
  match_parametric,          // exogenous drift matches a reference series
  generator,                 // ground truth from the synthetic generator
  covariate_identified,      // identified by macro covariates, no c-shift needed
};

std::string to_string(ConstraintKind kind);
ConstraintKind constraint_kind_from_string(const std::string& name);

struct ConstraintSpec {
  ConstraintKind kind = ConstraintKind::intrinsic;
  double k = 0.0;              // maturity_slope: target slope per month of age
  int a_star = 60;             // maturity_slope: ages strictly above this count
  int window = 18;             // vintage_trend_zero: most recent vintages used
  std::vector<int> vintage_set; // vintage_trend_zero: explicit C_V (overrides window)
  std::vector<std::pair<int, double>> reference; // match_parametric: (time, effect)

  static ConstraintSpec intrinsic_spec() { return {}; }
  static ConstraintSpec maturity_slope_spec(double k, int a_star) {
    ConstraintSpec s;
    s.kind = ConstraintKind::maturity_slope;
    s.k = k;
    s.a_star = a_star;
    return s;
  }
  static ConstraintSpec vintage_trend_spec(int window) {
    ConstraintSpec s;
    s.kind = ConstraintKind::vintage_trend_zero;
    s.window = window;
    return s;
  }
  static ConstraintSpec of_kind(ConstraintKind kind) {
    ConstraintSpec s;
    s.kind = kind;
    return s;
  }
};

/// Intercept plus zero-mean maturity, exogenous and vintage effects, tagged
/// with the constraint that singles it out of its equivalence class.
struct Decomposition {
  Levels levels;
  double intercept = 0.0;
  Eigen::VectorXd maturity;
  Eigen::VectorXd exogenous;
  Eigen::VectorXd vintage;
  // Standard errors under the tagged constraint; empty when unavailable.
  Eigen::VectorXd maturity_se;
  Eigen::VectorXd exogenous_se;
  Eigen::VectorXd vintage_se;
  ConstraintSpec constraint;
  double gamma_applied = 0.0; // shift along c relative to the minimum-norm fit

  Eigen::VectorXd packed() const;
  static Decomposition from_packed(const Levels& levels, const Eigen::VectorXd& beta);
  bool has_se() const noexcept { return maturity_se.size() > 0; }

  /// Linear predictor at an observed layout cell.
  double theta(int a, int t) const;
};

/// The constraint as d^T beta = target on the packed layout.
struct LinearFunctional {
  Eigen::VectorXd d;
  double target = 0.0;
};

LinearFunctional constraint_functional(const ConstraintSpec& spec, const Levels& levels);

/// Recentred minimum-norm estimate with standard errors.
Decomposition minimum_norm_decomposition(const FitResult& fit, const EmvDesign& design);

/// Shift the fit along c so that d^T beta = target:
///   gamma = (target - d^T beta) / (d^T c).
/// Throws DomainError("constraint does not resolve EMV nonidentifiability")
/// when |d^T c| <= 1e-12 |d| |c|.
Decomposition apply_functional(const FitResult& fit, const EmvDesign& design,
                               const LinearFunctional& f, const ConstraintSpec& tag);

Decomposition apply_constraint(const FitResult& fit, const EmvDesign& design,
                               const ConstraintSpec& spec);

/// Re-identify an existing decomposition. Standard errors are dropped since
/// they depend on the sampling distribution of the source fit.
Decomposition apply_constraint(const Decomposition& base, const ConstraintSpec& spec);

/// (I - c c^T / c^T c) beta.
Eigen::VectorXd project_out(const Eigen::VectorXd& beta, const Eigen::VectorXd& c);

Decomposition intrinsic(const FitResult& fit, const EmvDesign& design);
Decomposition intrinsic(const Decomposition& d);

/// One maturity-slope decomposition per k, in input order.
std::vector<Decomposition> constraint_sweep(const FitResult& fit, const EmvDesign& design,
                                            int a_star, const std::vector<double>& ks);

/// gamma with d2 = d1 + gamma c blockwise (within 1e-8); throws
/// DomainError("decompositions are not c-equivalent") otherwise.
double drift_report(const Decomposition& d1, const Decomposition& d2);

/// OLS slope of ys on xs.
double ols_slope(const std::vector<double>& xs, const std::vector<double>& ys);

} // namespace emv
