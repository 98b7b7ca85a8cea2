#pragma once

#include <string>
#include <vector>

namespace emv {

/// Account hazard z * h0 * (1 - exp(-a / tau)) with lognormal frailty
/// z = exp(omega * N(0, 1)).
struct FrailtyScenario {
  double h0 = 0.02;   // plateau hazard per month
  double tau = 6.0;   // rise timescale, months
  double omega = 0.8; // log-scale sd of the frailty multiplier
  std::vector<double> quantiles{0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9};
  int horizon = 120;  // months
  int nodes = 2001;   // quadrature nodes over the frailty law
};

struct FrailtyCurves {
  FrailtyScenario scenario;
  std::vector<int> ages; // 0..horizon
  std::vector<double> frailty_at_quantile;
  std::vector<std::vector<double>> account_hazard; // [quantile][age]
  std::vector<double> vintage_hazard;              // [age]
  std::vector<double> population_mean_hazard;      // h0 E[z] (1 - exp(-a/tau))
};

void validate(const FrailtyScenario& s);

/// Discrete-time hazard of one account, clipped below 1.
double account_hazard(const FrailtyScenario& s, double z, int age);

FrailtyCurves simulate_vintage_hazard(const FrailtyScenario& s);

/// age, q10..q90 log-hazards, vintage log-hazard, vintage hazard. Age 0
/// (zero hazard) is left out so every number is finite.
std::string frailty_to_csv(const FrailtyCurves& c);

/// Standard normal quantile function.
double normal_quantile(double p);

} // namespace emv
