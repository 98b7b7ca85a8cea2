#include "emv/synth.hpp"

#include "emv/design.hpp"
#include "emv/error.hpp"

#include <cmath>
#include <numbers>
#include <random>

namespace emv {

double MaturityShape::operator()(int a) const {
  double m = amplitude * (1.0 - std::exp(-a / tau));
  if (a > tail_start)
    m += tail_slope * (a - tail_start);
  return m;
}

double default_exogenous(int t) {
  const double bump = std::exp(-0.5 * std::pow((t - 60.0) / 6.0, 2));
  return 0.25 * bump + 0.05 * std::sin(2.0 * std::numbers::pi * t / 36.0);
}

MacroPanel default_macro_covariates(int last_time) {
  MacroPanel m;
  for (int t = 1; t <= last_time; ++t)
    m.times.push_back(t);
  std::vector<double> bump, cycle;
  for (int t = 1; t <= last_time; ++t) {
    bump.push_back(std::exp(-0.5 * std::pow((t - 60.0) / 6.0, 2)));
    cycle.push_back(std::sin(2.0 * std::numbers::pi * t / 48.0));
  }
  m.values.resize(last_time, 0);
  return m.with_column("recession", bump).with_column("cycle", cycle);
}

std::size_t triangle_cell_count(int A, int T) {
  std::size_t n = 0;
  for (int a = 0; a <= A; ++a)
    for (int t = 1; t <= T; ++t)
      if (vintage_of(a, t) >= 1)
        ++n;
  return n;
}

SyntheticPanel generate(const GeneratorSpec& spec) {
  if (spec.A < 1 || spec.T < 2)
    throw DomainError("generator needs A >= 1 and T >= 2");
  if (spec.noise_sd < 0.0 || spec.vintage.sigma2 < 0.0)
    throw DomainError("variance parameters must be nonnegative");
  if (std::abs(spec.vintage.rho) >= 1.0)
    throw DomainError("AR(1) coefficient must satisfy |rho| < 1");
  if (spec.horizon < 0)
    throw DomainError("horizon must be nonnegative");
  if (spec.maturity.tau <= 0.0)
    throw DomainError("maturity timescale must be positive");
  if (spec.missing_p < 0.0 || spec.missing_p >= 1.0)
    throw DomainError("missing probability must lie in [0, 1)");

  const int last_time = spec.T + spec.horizon;
  std::mt19937_64 rng(spec.seed);
  std::normal_distribution<double> normal(0.0, 1.0);

  SyntheticPanel out;

  // Exogenous effects for t = 1..last_time.
  std::vector<double> exo(static_cast<std::size_t>(last_time) + 1, 0.0);
  switch (spec.exogenous.kind) {
  case ExogenousSource::Kind::default_cycle:
    for (int t = 1; t <= last_time; ++t)
      exo[t] = default_exogenous(t);
    break;
  case ExogenousSource::Kind::explicit_series:
    if (spec.exogenous.series.size() < static_cast<std::size_t>(last_time))
      throw DomainError("explicit exogenous series must cover times 1..T+horizon");
    for (int t = 1; t <= last_time; ++t)
      exo[t] = spec.exogenous.series[static_cast<std::size_t>(t - 1)];
    break;
  case ExogenousSource::Kind::macro_driven: {
    auto macro = default_macro_covariates(last_time);
    std::vector<double> coef = spec.exogenous.coefficients;
    if (coef.empty())
      coef = {0.4, 0.1};
    if (coef.size() != macro.names.size())
      throw DomainError("macro-driven generator expects one coefficient per covariate");
    for (int t = 1; t <= last_time; ++t)
      for (std::size_t j = 0; j < coef.size(); ++j)
        exo[t] += coef[j] * macro.values(t - 1, static_cast<Eigen::Index>(j));
    out.macro = std::move(macro);
    break;
  }
  }

  // Vintage effects for every vintage any generated cell can touch.
  const int v_min = 1 - spec.A;
  const int v_max = last_time;
  const auto& vs = spec.vintage;
  double prev = 0.0;
  for (int v = v_min; v <= v_max; ++v) {
    double x = 0.0;
    switch (vs.kind) {
    case VintageSource::Kind::explicit_values: {
      auto it = vs.values.find(v);
      x = it == vs.values.end() ? 0.0 : it->second;
      break;
    }
    case VintageSource::Kind::iid:
      x = std::sqrt(vs.sigma2) * normal(rng);
      break;
    case VintageSource::Kind::ar1:
      if (v == v_min)
        x = std::sqrt(vs.sigma2 / (1.0 - vs.rho * vs.rho)) * normal(rng);
      else
        x = vs.rho * prev + std::sqrt(vs.sigma2) * normal(rng);
      break;
    }
    out.raw_vintage[v] = x;
    prev = x;
  }

  auto raw_theta = [&](int a, int t) {
    return spec.intercept + spec.maturity(a) + exo[t] + out.raw_vintage.at(vintage_of(a, t));
  };

  // Observation pattern and noise, in (age, time) order.
  std::bernoulli_distribution drop(spec.missing_p);
  std::vector<Observation> obs;
  for (int a = 0; a <= spec.A; ++a)
    for (int t = 1; t <= spec.T; ++t) {
      bool keep = true;
      if (spec.missing == MissingPattern::bottom_left_triangle)
        keep = vintage_of(a, t) >= 1;
      else if (spec.missing == MissingPattern::random)
        keep = !drop(rng);
      if (!keep)
        continue;
      const double theta = raw_theta(a, t);
      const double y = theta + spec.noise_sd * normal(rng);
      obs.push_back({a, t, y, 1.0});
      out.theta.push_back(theta);
    }
  if (obs.size() < 4)
    throw DomainError("generator produced fewer than four observed cells");
  out.grid = PanelGrid::from_observations(obs);

  // Ground truth over observed levels with zero-mean blocks.
  const Levels lv = levels_of(out.grid);
  Eigen::VectorXd beta = Eigen::VectorXd::Zero(lv.size());
  beta(0) = spec.intercept;
  for (std::size_t i = 0; i < lv.ages.size(); ++i)
    beta(lv.maturity_offset() + static_cast<Eigen::Index>(i)) = spec.maturity(lv.ages[i]);
  for (std::size_t i = 0; i < lv.times.size(); ++i)
    beta(lv.exogenous_offset() + static_cast<Eigen::Index>(i)) = exo[lv.times[i]];
  for (std::size_t i = 0; i < lv.vintages.size(); ++i)
    beta(lv.vintage_offset() + static_cast<Eigen::Index>(i)) = out.raw_vintage.at(lv.vintages[i]);
  out.truth = Decomposition::from_packed(lv, recenter(lv, beta));
  out.truth.constraint = ConstraintSpec::of_kind(ConstraintKind::generator);

  for (int t = spec.T + 1; t <= last_time; ++t)
    for (int a = 0; a <= spec.A; ++a)
      out.future.push_back({a, t, raw_theta(a, t)});
  return out;
}

} // namespace emv
