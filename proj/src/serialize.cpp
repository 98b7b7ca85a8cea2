#include "emv/serialize.hpp"

#include "emv/csv.hpp"
#include "emv/error.hpp"

#include <cmath>

namespace emv {

namespace {

json transform_json(const ResponseTransform& g) {
  return {{"kind", to_string(g.kind)}, {"epsilon", g.epsilon}};
}

json number(double x) {
  if (!std::isfinite(x))
    return nullptr;
  return x;
}

json block(const char* key, const std::vector<int>& index, const Eigen::VectorXd& effect,
           const Eigen::VectorXd& se) {
  json arr = json::array();
  for (std::size_t i = 0; i < index.size(); ++i) {
    const auto ii = static_cast<Eigen::Index>(i);
    json e = {{key, index[i]}, {"effect", number(effect(ii))}};
    if (se.size() > 0)
      e["se"] = number(se(ii));
    arr.push_back(std::move(e));
  }
  return arr;
}

void read_block(const json& arr, const char* key, std::vector<int>& index, Eigen::VectorXd& effect,
                Eigen::VectorXd& se) {
  if (!arr.is_array() || arr.empty())
    throw InputError(std::string("decomposition JSON: block of '") + key + "' entries missing");
  const auto n = static_cast<Eigen::Index>(arr.size());
  index.clear();
  effect.resize(n);
  bool with_se = arr.front().contains("se");
  se.resize(with_se ? n : 0);
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto& e = arr[static_cast<std::size_t>(i)];
    index.push_back(e.at(key).get<int>());
    effect(i) = e.at("effect").is_null() ? std::nan("") : e.at("effect").get<double>();
    if (with_se)
      se(i) = e.at("se").is_null() ? std::nan("") : e.at("se").get<double>();
  }
}

json named_values(const char* key, const std::vector<int>& index, const Eigen::VectorXd& v) {
  json arr = json::array();
  for (std::size_t i = 0; i < index.size(); ++i)
    arr.push_back({{key, index[i]}, {"effect", number(v(static_cast<Eigen::Index>(i)))}});
  return arr;
}

json covariates(const std::vector<std::string>& names, const Eigen::VectorXd& coef) {
  json arr = json::array();
  for (std::size_t i = 0; i < names.size(); ++i)
    arr.push_back({{"name", names[i]}, {"coefficient", number(coef(static_cast<Eigen::Index>(i)))}});
  return arr;
}

} // namespace

std::string dump(const json& j) { return j.dump(2) + "\n"; }

json to_json(const ConstraintSpec& spec) {
  json j = {{"kind", to_string(spec.kind)}};
  switch (spec.kind) {
  case ConstraintKind::maturity_slope:
    j["k"] = spec.k;
    j["a_star"] = spec.a_star;
    break;
  case ConstraintKind::vintage_trend_zero:
    if (spec.vintage_set.empty())
      j["window"] = spec.window;
    else
      j["vintages"] = spec.vintage_set;
    break;
  case ConstraintKind::match_parametric: {
    json ref = json::array();
    for (const auto& [t, e] : spec.reference)
      ref.push_back({{"time", t}, {"effect", number(e)}});
    j["reference"] = std::move(ref);
    break;
  }
  default:
    break;
  }
  return j;
}

ConstraintSpec constraint_from_json(const json& j) {
  ConstraintSpec s = ConstraintSpec::of_kind(constraint_kind_from_string(j.at("kind").get<std::string>()));
  if (j.contains("k"))
    s.k = j["k"].get<double>();
  if (j.contains("a_star"))
    s.a_star = j["a_star"].get<int>();
  if (j.contains("window"))
    s.window = j["window"].get<int>();
  if (j.contains("vintages"))
    s.vintage_set = j["vintages"].get<std::vector<int>>();
  if (j.contains("reference"))
    for (const auto& r : j["reference"])
      s.reference.emplace_back(r.at("time").get<int>(), r.at("effect").get<double>());
  return s;
}

ConstraintSpec constraint_from_fields(const ConstraintFields& f) {
  ConstraintSpec s = ConstraintSpec::of_kind(constraint_kind_from_string(f.kind));
  s.k = f.k;
  s.a_star = f.a_star;
  s.window = f.window;
  s.vintage_set = f.vintages;
  if (s.kind == ConstraintKind::vintage_trend_zero && f.vintages.empty() && f.window < 2)
    throw InputError("vintage-trend-zero needs a window of at least 2 vintages");
  return s;
}

json to_json(const Decomposition& d) {
  json j;
  j["constraint"] = to_json(d.constraint);
  j["gamma"] = number(d.gamma_applied);
  j["intercept"] = number(d.intercept);
  const Eigen::VectorXd none;
  j["maturity"] = block("age", d.levels.ages, d.maturity, d.has_se() ? d.maturity_se : none);
  j["exogenous"] = block("time", d.levels.times, d.exogenous, d.has_se() ? d.exogenous_se : none);
  j["vintage"] = block("vintage", d.levels.vintages, d.vintage, d.has_se() ? d.vintage_se : none);
  return j;
}

Decomposition decomposition_from_json(const json& j) {
  try {
    Decomposition d;
    d.constraint = constraint_from_json(j.at("constraint"));
    d.gamma_applied = j.value("gamma", 0.0);
    d.intercept = j.at("intercept").get<double>();
    read_block(j.at("maturity"), "age", d.levels.ages, d.maturity, d.maturity_se);
    read_block(j.at("exogenous"), "time", d.levels.times, d.exogenous, d.exogenous_se);
    read_block(j.at("vintage"), "vintage", d.levels.vintages, d.vintage, d.vintage_se);
    if (d.maturity_se.size() == 0 || d.exogenous_se.size() == 0 || d.vintage_se.size() == 0) {
      d.maturity_se.resize(0);
      d.exogenous_se.resize(0);
      d.vintage_se.resize(0);
    }
    return d;
  } catch (const json::exception& e) {
    throw InputError(std::string("decomposition JSON: ") + e.what());
  }
}

json fit_report(const FitResult& fit, const EmvDesign& design) {
  json j;
  j["transform"] = transform_json(fit.transform);
  j["diagnostics"] = {{"observations", fit.fitted.size()},
                      {"parameters", design.X.cols()},
                      {"rank", fit.rank},
                      {"dof", fit.dof},
                      {"residual_ss", number(fit.residual_ss)},
                      {"r_squared", number(fit.r_squared)},
                      {"sigma2", number(fit.sigma2)},
                      {"iterations", fit.iterations},
                      {"extra_null_directions", design.extra_null_directions.cols()}};
  j["minimum_norm"] = to_json(minimum_norm_decomposition(fit, design));
  return j;
}

json sweep_report(const std::vector<double>& ks, int a_star,
                  const std::vector<Decomposition>& decompositions) {
  json arr = json::array();
  for (std::size_t i = 0; i < decompositions.size(); ++i)
    arr.push_back({{"k", ks[i]}, {"decomposition", to_json(decompositions[i])}});
  return {{"a_star", a_star}, {"sweep", std::move(arr)}};
}

json to_json(const SemiparametricFit& fit) {
  json j;
  j["transform"] = transform_json(fit.transform);
  j["intercept"] = number(fit.intercept);
  j["covariates"] = covariates(fit.covariate_names, fit.macro_coefficients);
  j["maturity"] = named_values("age", fit.levels.ages, fit.maturity);
  j["implied_exogenous"] = named_values("time", fit.levels.times, fit.implied_time_effects);
  j["vintage"] = named_values("vintage", fit.levels.vintages, fit.vintage);
  j["diagnostics"] = {{"observations", fit.fitted.size()},
                      {"rank", fit.rank},
                      {"dof", fit.dof},
                      {"residual_ss", number(fit.residual_ss)},
                      {"r_squared", number(fit.r_squared)},
                      {"sigma2", number(fit.sigma2)},
                      {"collinearity_diagnostic", number(fit.collinearity_diagnostic)}};
  j["warnings"] = fit.warnings;
  return j;
}

json macro_report(const SemiparametricFit& semi, const Decomposition& comparable) {
  return {{"semiparametric", to_json(semi)}, {"comparable_nonparametric", to_json(comparable)}};
}

json to_json(const RandomEffectsFit& fit) {
  json j;
  j["transform"] = transform_json(fit.transform);
  j["process"] = {{"kind", to_string(fit.process.kind)},
                  {"sigma2_V", number(fit.process.sigma2_V)},
                  {"rho", number(fit.process.rho)}};
  j["sigma2_e"] = number(fit.sigma2_e);
  j["reml_deviance"] = number(fit.reml_deviance);
  j["complete_shrinkage"] = fit.complete_shrinkage;
  if (!fit.covariate_names.empty())
    j["covariates"] = covariates(fit.covariate_names, fit.macro_coefficients);
  j["decomposition"] = to_json(fit.decomposition);
  j["fixed_effects"] = to_json(fit.fixed_effects);
  json sh = json::array();
  for (const auto& e : fit.shrinkage)
    sh.push_back({{"vintage", e.vintage},
                  {"cells", e.cells},
                  {"fixed", number(e.fixed)},
                  {"shrunk", number(e.shrunk)},
                  {"prior_mean", number(e.prior_mean)},
                  {"ratio", number(e.ratio)},
                  {"factor", number(e.factor)}});
  j["shrinkage"] = std::move(sh);
  return j;
}

json to_json(const ForecastSpec& spec) {
  json j = {{"horizon", spec.horizon},
            {"maturity_tail", to_string(spec.maturity_tail)},
            {"a_star", spec.a_star},
            {"vintage_mode", to_string(spec.vintage_mode)},
            {"window", spec.window},
            {"original_scale", spec.original_scale}};
  j["max_age"] = spec.max_age ? json(*spec.max_age) : json(nullptr);
  json ov = json::array();
  for (const auto& [v, x] : spec.override_values)
    ov.push_back({{"vintage", v}, {"effect", number(x)}});
  j["override_values"] = std::move(ov);
  if (spec.macro_future && !spec.macro_future->times.empty())
    j["macro"] = {{"covariates", spec.macro_future->names},
                  {"first_time", spec.macro_future->times.front()},
                  {"last_time", spec.macro_future->times.back()}};
  return j;
}

json to_json(const Forecast& f) {
  json cells = json::array();
  for (const auto& c : f.cells) {
    json e = {{"age", c.age}, {"time", c.time}, {"vintage", c.vintage}, {"theta_hat", number(c.theta)}};
    if (c.y)
      e["y_hat"] = number(*c.y);
    e["new_vintage"] = c.new_vintage;
    e["extrapolated_age"] = c.extrapolated_age;
    cells.push_back(std::move(e));
  }
  return {{"spec", to_json(f.spec)}, {"transform", transform_json(f.transform)}, {"cells", std::move(cells)}};
}

json truth_report(const GeneratorSpec& spec, const SyntheticPanel& panel) {
  static const char* missing[] = {"rectangular", "bottom-left-triangle", "random"};
  static const char* vsrc[] = {"explicit", "iid", "ar1"};
  static const char* esrc[] = {"default-cycle", "explicit", "macro-driven"};
  json gen = {{"A", spec.A},
              {"T", spec.T},
              {"intercept", spec.intercept},
              {"maturity", {{"amplitude", spec.maturity.amplitude},
                            {"tau", spec.maturity.tau},
                            {"tail_slope", spec.maturity.tail_slope},
                            {"tail_start", spec.maturity.tail_start}}},
              {"exogenous", esrc[static_cast<int>(spec.exogenous.kind)]},
              {"vintage", {{"kind", vsrc[static_cast<int>(spec.vintage.kind)]},
                           {"sigma2", spec.vintage.sigma2},
                           {"rho", spec.vintage.rho}}},
              {"noise_sd", spec.noise_sd},
              {"missing", missing[static_cast<int>(spec.missing)]},
              {"missing_p", spec.missing_p},
              {"horizon", spec.horizon},
              {"seed", spec.seed}};
  json raw = json::array();
  for (const auto& [v, x] : panel.raw_vintage)
    raw.push_back({{"vintage", v}, {"effect", number(x)}});
  return {{"generator", std::move(gen)}, {"truth", to_json(panel.truth)}, {"raw_vintage", std::move(raw)}};
}

std::string decomposition_to_csv(const Decomposition& d) {
  std::string s = "block,index,effect,se\n";
  auto rows = [&](const char* name, const std::vector<int>& index, const Eigen::VectorXd& e,
                  const Eigen::VectorXd& se) {
    for (std::size_t i = 0; i < index.size(); ++i) {
      const auto ii = static_cast<Eigen::Index>(i);
      s += std::string(name) + "," + std::to_string(index[i]) + "," + csv::format_double(e(ii)) +
           "," + (se.size() ? csv::format_double(se(ii)) : std::string()) + "\n";
    }
  };
  s += "intercept,," + csv::format_double(d.intercept) + ",\n";
  rows("maturity", d.levels.ages, d.maturity, d.maturity_se);
  rows("exogenous", d.levels.times, d.exogenous, d.exogenous_se);
  rows("vintage", d.levels.vintages, d.vintage, d.vintage_se);
  return s;
}

} // namespace emv
