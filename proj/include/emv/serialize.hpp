#pragma once

#include "emv/design.hpp"
#include "emv/estimator.hpp"
#include "emv/forecast.hpp"
#include "emv/identify.hpp"
#include "emv/macro.hpp"
#include "emv/synth.hpp"
#include "emv/vintage_effects.hpp"

#include <json.hpp>

#include <optional>
#include <string>
#include <vector>

namespace emv {

using json = nlohmann::ordered_json;

/// Pretty-printed JSON with a trailing newline. Every JSON artifact (CLI
/// files, service bodies) goes through here so the two agree byte for byte.
std::string dump(const json& j);

json to_json(const ConstraintSpec& spec);
ConstraintSpec constraint_from_json(const json& j);

/// Constraint from loose fields, as given on the command line or in a query
/// string. `vintages` is an explicit C_V and overrides `window`.
struct ConstraintFields {
  std::string kind = "intrinsic";
  double k = 0.0;
  int a_star = 60;
  int window = 18;
  std::vector<int> vintages;
};
ConstraintSpec constraint_from_fields(const ConstraintFields& f);

json to_json(const Decomposition& d);
Decomposition decomposition_from_json(const json& j);

/// Diagnostics of a fit plus its minimum-norm decomposition.
json fit_report(const FitResult& fit, const EmvDesign& design);

json sweep_report(const std::vector<double>& ks, int a_star,
                  const std::vector<Decomposition>& decompositions);

json to_json(const SemiparametricFit& fit);
/// Semiparametric fit next to the nonparametric fit shifted to match it.
json macro_report(const SemiparametricFit& semi, const Decomposition& comparable);

json to_json(const RandomEffectsFit& fit);
json to_json(const ForecastSpec& spec);
json to_json(const Forecast& f);
json truth_report(const GeneratorSpec& spec, const SyntheticPanel& panel);

/// Long-format CSV of a decomposition: block,index,effect,se.
std::string decomposition_to_csv(const Decomposition& d);

} // namespace emv
