#pragma once

#include "emv/identify.hpp"
#include "emv/macro.hpp"
#include "emv/panel.hpp"
#include "emv/vintage_effects.hpp"

#include <Eigen/Dense>

#include <map>
#include <optional>
#include <string>
#include <vector>

namespace emv {

enum class MaturityTail { hold_last, straight_line };
enum class VintageMode { recent_level, ar1_process, business_override };

std::string to_string(MaturityTail m);
std::string to_string(VintageMode m);
MaturityTail maturity_tail_from_string(const std::string& s);
VintageMode vintage_mode_from_string(const std::string& s);

struct ForecastSpec {
  int horizon = 12; // months after the last fitted time; 0 returns the fitted cells
  MaturityTail maturity_tail = MaturityTail::hold_last;
  int a_star = 60;  // straight-line tail uses ages strictly above this
  std::optional<int> max_age; // forecast ages up to this (default: last fitted age)
  VintageMode vintage_mode = VintageMode::recent_level;
  int window = 3;   // recent-level: number of most recent fitted vintages averaged
  std::map<int, double> override_values; // business-override: new vintage -> effect
  std::optional<MacroPanel> macro_future; // covariate rows for t > T
  bool original_scale = false; // also report g^-1(theta)
};

struct ForecastCell {
  int age = 0;
  int time = 0;
  int vintage = 0;
  double theta = 0.0;
  std::optional<double> y;
  bool new_vintage = false;
  bool extrapolated_age = false;
};

struct Forecast {
  ForecastSpec spec;
  ResponseTransform transform;
  std::vector<ForecastCell> cells; // ordered by time, then age
};

/// Straight-line fit to the maturity effects above a_star, evaluated at
/// `target_ages`; hold_last returns the effect at the last fitted age.
Eigen::VectorXd extrapolate_maturity(const Decomposition& d, MaturityTail mode, int a_star,
                                     const std::vector<int>& target_ages);

/// Forecast from a semiparametric (covariate) fit.
Forecast forecast(const SemiparametricFit& fit, const ForecastSpec& spec);

/// Forecast from a random-effects fit with covariate handling. macro_future
/// must carry the fitted times as well, to undo the centring of E. A
/// nonparametric E has no model for future times, so such fits are refused.
Forecast forecast(const RandomEffectsFit& fit, const ForecastSpec& spec);

std::string forecast_to_csv(const Forecast& f);

} // namespace emv
