#pragma once

#include "emv/design.hpp"
#include "emv/estimator.hpp"
#include "emv/identify.hpp"
#include "emv/panel.hpp"

#include <Eigen/Dense>

#include <istream>
#include <optional>
#include <string>
#include <vector>

namespace emv {

/// Time-indexed macroeconomic covariates. Rows beyond the fitting window
/// carry scenario values for forecasting; NaN marks a missing value.
struct MacroPanel {
  std::vector<int> times; // strictly increasing
  std::vector<std::string> names;
  Eigen::MatrixXd values; // times.size() x names.size()

  std::optional<Eigen::Index> row_of(int t) const;
  std::optional<Eigen::Index> column_of(const std::string& name) const;
  std::vector<double> column(const std::string& name) const;

  /// Append a realized column (same length as `times`).
  MacroPanel with_column(const std::string& name, const std::vector<double>& col) const;
  /// Keep only the named columns, in the given order.
  MacroPanel select(const std::vector<std::string>& names) const;
};

MacroPanel load_macro(std::istream& in);
MacroPanel load_macro_file(const std::string& path);
MacroPanel load_macro_text(const std::string& text);
std::string macro_to_csv(const MacroPanel& macro);

// Realized-column helpers. Values that cannot be formed (before the start of
// the series, log of a nonpositive number) come out as NaN.
MacroPanel add_lag(const MacroPanel& m, const std::string& source, int lag, const std::string& name);
MacroPanel add_log(const MacroPanel& m, const std::string& source, const std::string& name);
MacroPanel add_difference(const MacroPanel& m, const std::string& source, int lag,
                          const std::string& name);
MacroPanel add_moving_average(const MacroPanel& m, const std::string& source, int window,
                              const std::string& name);

/// Additive model with the exogenous factor replaced by a covariate
/// regression: theta = b0 + M(a) + V(v) + sum_j x_tj b_j.
struct SemiparametricFit {
  Levels levels; // ages, times and vintages of the fitted grid
  ResponseTransform transform;
  double intercept = 0.0;
  Eigen::VectorXd maturity; // zero mean
  Eigen::VectorXd vintage;  // zero mean
  std::vector<std::string> covariate_names;
  Eigen::VectorXd macro_coefficients;
  Eigen::VectorXd implied_time_effects; // sum_j x_tj b_j for each fitted time
  Eigen::VectorXd fitted;
  double residual_ss = 0.0;
  double r_squared = 0.0;
  Eigen::Index rank = 0;
  Eigen::Index dof = 0;
  double sigma2 = 0.0;
  /// R^2 of a linear time trend regressed on the covariates (with intercept).
  double collinearity_diagnostic = 0.0;
  std::vector<std::string> warnings;
};

/// Throws DomainError listing dependent columns when [1, x] is rank
/// deficient on the fitted times. A covariate set that (nearly) reproduces a
/// time trend is fitted anyway and flagged through the diagnostic (warning
/// at R^2 >= 0.95).
SemiparametricFit fit_semiparametric(const PanelGrid& grid, const MacroPanel& macros,
                                     const ResponseTransform& g = {});

/// Shift a nonparametric fit along c so that its exogenous series has the
/// same OLS slope on t as the semiparametric implied time effects.
Decomposition comparable_nonparametric(const FitResult& np_fit, const EmvDesign& design,
                                       const SemiparametricFit& semi);

} // namespace emv
