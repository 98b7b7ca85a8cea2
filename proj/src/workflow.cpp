#include "emv/workflow.hpp"

#include "emv/error.hpp"
#include "emv/serialize.hpp"

namespace emv {

PanelFit fit_panel(const PanelGrid& grid, const ResponseTransform& g) {
  PanelFit pf;
  pf.grid = grid;
  pf.transform = g;
  pf.design = build_design(grid);
  pf.fit = fit_linear(pf.design, grid, g);
  return pf;
}

Decomposition identified(const PanelFit& pf, const ConstraintSpec& spec) {
  if (spec.kind == ConstraintKind::minimum_norm)
    return minimum_norm_decomposition(pf.fit, pf.design);
  return apply_constraint(pf.fit, pf.design, spec);
}

std::string decomposition_json(const PanelFit& pf, const ConstraintSpec& spec) {
  return dump(to_json(identified(pf, spec)));
}

std::vector<Decomposition> sweep(const PanelFit& pf, const std::vector<double>& ks, int a_star) {
  return constraint_sweep(pf.fit, pf.design, a_star, ks);
}

std::string sweep_json(const PanelFit& pf, const std::vector<double>& ks, int a_star) {
  return dump(sweep_report(ks, a_star, sweep(pf, ks, a_star)));
}

MacroFit fit_macro(const PanelFit& pf, const MacroPanel& macro) {
  MacroFit mf;
  mf.semi = fit_semiparametric(pf.grid, macro, pf.transform);
  mf.comparable = comparable_nonparametric(pf.fit, pf.design, mf.semi);
  return mf;
}

std::string macro_fit_json(const MacroFit& mf) {
  return dump(macro_report(mf.semi, mf.comparable));
}

Forecast run_forecast(const PanelFit& pf, const MacroPanel& macro, ForecastSpec spec,
                      std::optional<ProcessKind> process) {
  spec.macro_future = macro;
  if (process) {
    const auto re =
        fit_random_effects(pf.grid, pf.transform, *process, ExogenousHandling::covariates(macro));
    return forecast(re, spec);
  }
  return forecast(fit_semiparametric(pf.grid, macro, pf.transform), spec);
}

std::string forecast_json(const Forecast& f) { return dump(to_json(f)); }

} // namespace emv
