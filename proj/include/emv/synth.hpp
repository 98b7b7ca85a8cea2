#pragma once

#include "emv/identify.hpp"
#include "emv/macro.hpp"
#include "emv/panel.hpp"

#include <cstdint>
#include <map>
#include <optional>
#include <vector>

namespace emv {

/// Saturating maturity curve amplitude * (1 - exp(-a / tau)), optionally
/// with a linear tail slope * max(0, a - tail_start).
struct MaturityShape {
  double amplitude = 1.0;
  double tau = 6.0;
  double tail_slope = 0.0;
  int tail_start = 0;

  double operator()(int a) const;
};

struct ExogenousSource {
  enum class Kind { default_cycle, explicit_series, macro_driven };
  Kind kind = Kind::default_cycle;
  std::vector<double> series;       // explicit_series: one value per time 1..T+horizon
  std::vector<double> coefficients; // macro_driven: one per generated covariate (defaults if empty)
};

struct VintageSource {
  enum class Kind { explicit_values, iid, ar1 };
  Kind kind = Kind::iid;
  std::map<int, double> values; // explicit_values; missing vintages get 0
  double sigma2 = 0.0155;       // iid variance / AR(1) innovation variance
  double rho = 0.0;
};

enum class MissingPattern { rectangular, bottom_left_triangle, random };

struct GeneratorSpec {
  int A = 24;
  int T = 84;
  double intercept = -4.0;
  MaturityShape maturity;
  ExogenousSource exogenous;
  VintageSource vintage;
  double noise_sd = 0.05;
  MissingPattern missing = MissingPattern::bottom_left_triangle;
  double missing_p = 0.0; // random pattern: per-cell drop probability
  int horizon = 0;        // extra months of ground truth beyond T
  std::uint64_t seed = 1;
};

struct FutureCell {
  int age = 0;
  int time = 0;
  double theta = 0.0;
};

struct SyntheticPanel {
  PanelGrid grid;
  Decomposition truth;   // zero-mean blocks over the observed levels
  std::vector<double> theta; // noiseless linear predictor per observed cell
  std::optional<MacroPanel> macro; // covers 1..T+horizon when macro driven
  std::vector<FutureCell> future;  // ages 0..A, times T+1..T+horizon
  std::map<int, double> raw_vintage; // uncentred vintage effects, all generated vintages
};

/// Two default covariates: a recession bump near month 60 and a slow cycle.
MacroPanel default_macro_covariates(int last_time);

/// Default non-macro exogenous series: recession bump near month 60 plus a
/// small cycle.
double default_exogenous(int t);

SyntheticPanel generate(const GeneratorSpec& spec);

/// Observed-cell count of the bottom-left-triangle pattern, by direct
/// enumeration of cells with vintage >= 1.
std::size_t triangle_cell_count(int A, int T);

} // namespace emv
