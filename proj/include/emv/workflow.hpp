#pragma once

#include "emv/design.hpp"
#include "emv/estimator.hpp"
#include "emv/forecast.hpp"
#include "emv/identify.hpp"
#include "emv/macro.hpp"
#include "emv/panel.hpp"
#include "emv/vintage_effects.hpp"

#include <optional>
#include <string>
#include <vector>

// Pipelines shared by the command line and the HTTP service, so that both
// produce the same bytes for the same inputs.
namespace emv {

struct PanelFit {
  PanelGrid grid;
  ResponseTransform transform;
  EmvDesign design;
  FitResult fit;
};

PanelFit fit_panel(const PanelGrid& grid, const ResponseTransform& g);

Decomposition identified(const PanelFit& pf, const ConstraintSpec& spec);
std::string decomposition_json(const PanelFit& pf, const ConstraintSpec& spec);

std::vector<Decomposition> sweep(const PanelFit& pf, const std::vector<double>& ks, int a_star);
std::string sweep_json(const PanelFit& pf, const std::vector<double>& ks, int a_star);

struct MacroFit {
  SemiparametricFit semi;
  Decomposition comparable;
};
MacroFit fit_macro(const PanelFit& pf, const MacroPanel& macro);
std::string macro_fit_json(const MacroFit& mf);

/// Semiparametric forecast, or a random-effects one (covariate handling)
/// when `process` is given.
Forecast run_forecast(const PanelFit& pf, const MacroPanel& macro, ForecastSpec spec,
                      std::optional<ProcessKind> process = std::nullopt);
std::string forecast_json(const Forecast& f);

} // namespace emv
