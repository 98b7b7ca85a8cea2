#include "emv/frailty.hpp"

#include "emv/csv.hpp"
#include "emv/error.hpp"

#include <boost/math/distributions/normal.hpp>

#include <algorithm>
#include <cmath>

namespace emv {

namespace {

constexpr double kMaxHazard = 1.0 - 1e-12;
constexpr double kNodeRange = 8.5; // standard-normal nodes on [-8.5, 8.5]

std::string quantile_label(double q) {
  const double pct = q * 100.0;
  if (std::abs(pct - std::round(pct)) < 1e-9)
    return "q" + std::to_string(static_cast<int>(std::lround(pct)));
  return "q" + csv::format_double(pct);
}

} // namespace

double normal_quantile(double p) {
  if (!(p > 0.0 && p < 1.0))
    throw InputError("normal quantile needs 0 < p < 1");
  return boost::math::quantile(boost::math::normal_distribution<double>(), p);
}

void validate(const FrailtyScenario& s) {
  if (!(s.h0 > 0.0) || !std::isfinite(s.h0))
    throw InputError("frailty scenario: h0 must be positive");
  if (!(s.tau > 0.0) || !std::isfinite(s.tau))
    throw InputError("frailty scenario: tau must be positive");
  if (!(s.omega >= 0.0) || !std::isfinite(s.omega))
    throw InputError("frailty scenario: omega must be nonnegative");
  if (s.horizon < 1)
    throw InputError("frailty scenario: horizon must be at least 1 month");
  if (s.nodes < 1000)
    throw InputError("frailty scenario: at least 1000 quadrature nodes");
  for (std::size_t i = 0; i < s.quantiles.size(); ++i) {
    const double q = s.quantiles[i];
    if (!(q > 0.0 && q < 1.0) || (i > 0 && !(q > s.quantiles[i - 1])))
      throw InputError("frailty scenario: quantiles must be strictly increasing in (0, 1)");
  }
}

double account_hazard(const FrailtyScenario& s, double z, int age) {
  const double h = z * s.h0 * (1.0 - std::exp(-static_cast<double>(age) / s.tau));
  return std::min(h, kMaxHazard);
}

FrailtyCurves simulate_vintage_hazard(const FrailtyScenario& s) {
  validate(s);
  FrailtyCurves out;
  out.scenario = s;
  const auto na = static_cast<std::size_t>(s.horizon) + 1;
  for (int a = 0; a <= s.horizon; ++a)
    out.ages.push_back(a);

  for (double q : s.quantiles) {
    const double z = s.omega > 0.0 ? std::exp(s.omega * normal_quantile(q)) : 1.0;
    out.frailty_at_quantile.push_back(z);
    std::vector<double> h(na);
    for (std::size_t a = 0; a < na; ++a)
      h[a] = account_hazard(s, z, static_cast<int>(a));
    out.account_hazard.push_back(std::move(h));
  }

  const double mean_z = std::exp(0.5 * s.omega * s.omega);
  out.population_mean_hazard.resize(na);
  for (std::size_t a = 0; a < na; ++a)
    out.population_mean_hazard[a] =
        s.h0 * mean_z * (1.0 - std::exp(-static_cast<double>(a) / s.tau));

  out.vintage_hazard.resize(na);
  if (s.omega == 0.0) {
    // Single atom at z = 1: the vintage is one account type.
    for (std::size_t a = 0; a < na; ++a)
      out.vintage_hazard[a] = account_hazard(s, 1.0, static_cast<int>(a));
    return out;
  }

  // Trapezoid rule in x = log(z) / omega against the normal density; the
  // integrand is smooth with gaussian tails, so the rule converges fast.
  const auto m = static_cast<std::size_t>(s.nodes);
  const double step = 2.0 * kNodeRange / static_cast<double>(m - 1);
  std::vector<double> z(m), logw(m), logS(m, 0.0);
  for (std::size_t i = 0; i < m; ++i) {
    const double x = -kNodeRange + step * static_cast<double>(i);
    z[i] = std::exp(s.omega * x);
    logw[i] = -0.5 * x * x + ((i == 0 || i + 1 == m) ? std::log(0.5) : 0.0);
  }
  std::vector<double> lw(m);
  for (std::size_t a = 0; a < na; ++a) {
    double top = -INFINITY;
    for (std::size_t i = 0; i < m; ++i) {
      lw[i] = logw[i] + logS[i];
      top = std::max(top, lw[i]);
    }
    double num = 0.0, den = 0.0;
    for (std::size_t i = 0; i < m; ++i) {
      const double h = account_hazard(s, z[i], static_cast<int>(a));
      const double wi = std::exp(lw[i] - top);
      num += wi * h;
      den += wi;
      logS[i] += std::log1p(-h);
    }
    out.vintage_hazard[a] = num / den;
  }
  return out;
}

std::string frailty_to_csv(const FrailtyCurves& c) {
  std::string s = "age";
  for (double q : c.scenario.quantiles)
    s += "," + quantile_label(q);
  s += ",vintage_log_hazard,vintage_hazard\n";
  for (std::size_t a = 1; a < c.ages.size(); ++a) {
    s += std::to_string(c.ages[a]);
    for (const auto& h : c.account_hazard)
      s += "," + csv::format_double(std::log(h[a]));
    s += "," + csv::format_double(std::log(c.vintage_hazard[a]));
    s += "," + csv::format_double(c.vintage_hazard[a]) + "\n";
  }
  return s;
}

} // namespace emv
