#include "emv/forecast.hpp"

#include "emv/csv.hpp"
#include "emv/error.hpp"

#include <algorithm>
#include <cmath>
#include <functional>

namespace emv {

std::string to_string(MaturityTail m) {
  return m == MaturityTail::hold_last ? "hold-last" : "straight-line";
}

std::string to_string(VintageMode m) {
  switch (m) {
  case VintageMode::recent_level:
    return "recent-level";
  case VintageMode::ar1_process:
    return "ar1-process";
  case VintageMode::business_override:
    return "business-override";
  }
  return "recent-level";
}

MaturityTail maturity_tail_from_string(const std::string& s) {
  if (s == "hold-last")
    return MaturityTail::hold_last;
  if (s == "straight-line")
    return MaturityTail::straight_line;
  throw InputError("unknown maturity tail '" + s + "' (hold-last, straight-line)");
}

VintageMode vintage_mode_from_string(const std::string& s) {
  if (s == "recent-level")
    return VintageMode::recent_level;
  if (s == "ar1-process")
    return VintageMode::ar1_process;
  if (s == "business-override")
    return VintageMode::business_override;
  throw InputError("unknown vintage mode '" + s +
                   "' (recent-level, ar1-process, business-override)");
}

Eigen::VectorXd extrapolate_maturity(const Decomposition& d, MaturityTail mode, int a_star,
                                     const std::vector<int>& target_ages) {
  const auto& ages = d.levels.ages;
  Eigen::VectorXd out(static_cast<Eigen::Index>(target_ages.size()));
  if (mode == MaturityTail::hold_last) {
    out.setConstant(d.maturity(d.maturity.size() - 1));
    return out;
  }
  if (a_star >= ages.back())
    throw DomainError("maturity tail: A* must be below the last fitted age " +
                      std::to_string(ages.back()));
  std::vector<double> xs, ys;
  for (std::size_t i = 0; i < ages.size(); ++i)
    if (ages[i] > a_star) {
      xs.push_back(ages[i]);
      ys.push_back(d.maturity(static_cast<Eigen::Index>(i)));
    }
  if (xs.size() < 2)
    throw DomainError("maturity tail: insufficient tail points above A* = " +
                      std::to_string(a_star));
  const double slope = ols_slope(xs, ys);
  double mx = 0.0, my = 0.0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    mx += xs[i];
    my += ys[i];
  }
  mx /= static_cast<double>(xs.size());
  my /= static_cast<double>(xs.size());
  for (std::size_t i = 0; i < target_ages.size(); ++i)
    out(static_cast<Eigen::Index>(i)) = my + slope * (target_ages[i] - mx);
  return out;
}

namespace {

// What the forecaster needs from either kind of fit.
struct Structure {
  Decomposition d; // levels, intercept, maturity, vintage; exogenous for fitted times
  std::function<double(int)> future_exogenous;
  const RandomEffectsFit* re = nullptr;
};

std::function<double(int)> covariate_exogenous(const ForecastSpec& spec,
                                               const std::vector<std::string>& names,
                                               const Eigen::VectorXd& coef, double shift) {
  if (!spec.macro_future)
    throw DomainError("forecast needs future covariate rows (macro panel)");
  const MacroPanel m = spec.macro_future->select(names);
  return [m, coef, shift](int t) {
    const auto r = m.row_of(t);
    if (!r)
      throw DomainError("macro panel lacks forecast time " + std::to_string(t));
    const Eigen::VectorXd x = m.values.row(*r).transpose();
    if (!x.allFinite())
      throw DomainError("missing covariate value at forecast time " + std::to_string(t));
    return x.dot(coef) - shift;
  };
}

Forecast run(const Structure& st, const ForecastSpec& spec, const ResponseTransform& g) {
  const Levels& lv = st.d.levels;
  if (spec.horizon < 0)
    throw InputError("forecast horizon must be nonnegative");
  if (spec.vintage_mode == VintageMode::recent_level && spec.window < 1)
    throw DomainError("recent-level vintage mode needs a nonempty C_V window");

  Forecast f;
  f.spec = spec;
  f.transform = g;
  const int last_age = lv.ages.back();
  const int max_age = spec.max_age.value_or(last_age);
  if (max_age < lv.ages.front())
    throw InputError("forecast max age is below the first fitted age");

  std::vector<int> tail_ages;
  for (int a = last_age + 1; a <= max_age; ++a)
    tail_ages.push_back(a);
  const Eigen::VectorXd tail =
      tail_ages.empty() ? Eigen::VectorXd()
                        : extrapolate_maturity(st.d, spec.maturity_tail, spec.a_star, tail_ages);
  auto maturity = [&](int a, bool& extrapolated) {
    if (auto c = lv.age_column(a)) {
      extrapolated = false;
      return st.d.maturity(*c - lv.maturity_offset());
    }
    if (a > last_age) {
      extrapolated = true;
      return tail(a - last_age - 1);
    }
    throw DomainError("age " + std::to_string(a) + " has no fitted maturity effect");
  };

  const int last_v = lv.vintages.back();
  std::vector<VintagePrediction> preds;
  double recent = 0.0;
  if (spec.vintage_mode == VintageMode::recent_level) {
    const auto nv = static_cast<Eigen::Index>(lv.vintages.size());
    const Eigen::Index k = std::min<Eigen::Index>(spec.window, nv);
    recent = st.d.vintage.tail(k).mean();
  }
  auto vintage = [&](int v, bool& fresh) {
    if (auto c = lv.vintage_column(v)) {
      fresh = false;
      return st.d.vintage(*c - lv.vintage_offset());
    }
    if (v < last_v)
      throw DomainError("vintage " + std::to_string(v) + " has no fitted effect");
    fresh = true;
    switch (spec.vintage_mode) {
    case VintageMode::recent_level:
      return recent;
    case VintageMode::business_override: {
      auto it = spec.override_values.find(v);
      if (it == spec.override_values.end())
        throw DomainError("no override value for vintage " + std::to_string(v));
      return it->second;
    }
    case VintageMode::ar1_process:
      if (!st.re)
        throw DomainError("ar1-process vintage mode needs a random-effects fit");
      if (preds.size() < static_cast<std::size_t>(v - last_v))
        preds = predict_new_vintages(*st.re, v - last_v);
      return preds[static_cast<std::size_t>(v - last_v - 1)].mean;
    }
    return recent;
  };

  auto emit = [&](int a, int t, double e) {
    ForecastCell c;
    c.age = a;
    c.time = t;
    c.vintage = vintage_of(a, t);
    c.theta = st.d.intercept + maturity(a, c.extrapolated_age) + e + vintage(c.vintage, c.new_vintage);
    if (spec.original_scale)
      c.y = g.inverse(c.theta);
    f.cells.push_back(c);
  };

  if (spec.horizon == 0) {
    for (std::size_t j = 0; j < lv.times.size(); ++j) {
      const double e = st.d.exogenous(static_cast<Eigen::Index>(j));
      for (int a : lv.ages)
        if (lv.vintage_column(vintage_of(a, lv.times[j])))
          emit(a, lv.times[j], e);
    }
    return f;
  }
  const int last_t = lv.times.back();
  for (int t = last_t + 1; t <= last_t + spec.horizon; ++t) {
    const double e = st.future_exogenous(t);
    for (int a = lv.ages.front(); a <= max_age; ++a)
      if (lv.age_column(a) || a > last_age)
        emit(a, t, e);
  }
  return f;
}

} // namespace

Forecast forecast(const SemiparametricFit& fit, const ForecastSpec& spec) {
  Structure st;
  st.d.levels = fit.levels;
  st.d.intercept = fit.intercept;
  st.d.maturity = fit.maturity;
  st.d.vintage = fit.vintage;
  st.d.exogenous = fit.implied_time_effects;
  if (spec.horizon > 0)
    st.future_exogenous =
        covariate_exogenous(spec, fit.covariate_names, fit.macro_coefficients, 0.0);
  return run(st, spec, fit.transform);
}

Forecast forecast(const RandomEffectsFit& fit, const ForecastSpec& spec) {
  Structure st;
  st.d = fit.decomposition;
  st.re = &fit;
  if (spec.horizon > 0) {
    if (fit.covariate_names.empty())
      throw DomainError("forecast needs a covariate model for future exogenous effects; "
                        "refit the vintage effects with a macro panel");
    // E was recentred after fitting; recover the shift at the first fitted time.
    const int t0 = fit.decomposition.levels.times.front();
    auto raw = covariate_exogenous(spec, fit.covariate_names, fit.macro_coefficients, 0.0);
    const double shift = raw(t0) - fit.decomposition.exogenous(0);
    st.future_exogenous = [raw, shift](int t) { return raw(t) - shift; };
  }
  return run(st, spec, fit.transform);
}

std::string forecast_to_csv(const Forecast& f) {
  std::string s = f.spec.original_scale ? "age,time,vintage,theta_hat,y_hat\n"
                                        : "age,time,vintage,theta_hat\n";
  for (const auto& c : f.cells) {
    s += std::to_string(c.age) + "," + std::to_string(c.time) + "," + std::to_string(c.vintage) +
         "," + csv::format_double(c.theta);
    if (f.spec.original_scale)
      s += "," + csv::format_double(c.y.value_or(std::nan("")));
    s += "\n";
  }
  return s;
}

} // namespace emv
