#include "emv/error.hpp"
#include "emv/synth.hpp"
#include "emv/vintage_effects.hpp"

#include <doctest.h>

#include <algorithm>
#include <cmath>

using namespace emv;

namespace {

SyntheticPanel re_panel(VintageSource::Kind vk, double rho, std::uint64_t seed, int A = 12,
                        int T = 60) {
  GeneratorSpec s;
  s.A = A;
  s.T = T;
  s.noise_sd = 0.05;
  s.seed = seed;
  s.exogenous.kind = ExogenousSource::Kind::macro_driven;
  s.vintage.kind = vk;
  s.vintage.rho = rho;
  return generate(s);
}

// Dense n x n restricted likelihood with unit weights, up to the constant n - p.
double dense_deviance(const RemlProblem& prob, ProcessKind kind, double eta, double rho) {
  const auto& X = prob.fixed_design();
  const auto& Z = prob.random_design();
  const auto& y = prob.response();
  const auto n = X.rows(), p = X.cols();
  const Eigen::MatrixXd R = prob.process_covariance(kind, rho);
  const Eigen::MatrixXd H = Eigen::MatrixXd::Identity(n, n) + eta * Z * R * Z.transpose();
  Eigen::LLT<Eigen::MatrixXd> hl(H);
  const Eigen::MatrixXd XtHiX = X.transpose() * hl.solve(X);
  Eigen::LLT<Eigen::MatrixXd> xl(XtHiX);
  const Eigen::VectorXd Hiy = hl.solve(y);
  const Eigen::VectorXd g = X.transpose() * Hiy;
  const double ypy = y.dot(Hiy) - g.dot(xl.solve(g));
  const double dof = static_cast<double>(n - p);
  auto logdet = [](const Eigen::LLT<Eigen::MatrixXd>& l) {
    return 2.0 * l.matrixL().toDenseMatrix().diagonal().array().log().sum();
  };
  return dof * std::log(ypy / dof) + logdet(hl) + logdet(xl) + dof;
}

// Henderson BLUP of the vintage effects by generalized least squares.
Eigen::VectorXd dense_blup(const RemlProblem& prob, ProcessKind kind, double eta, double rho) {
  const auto& X = prob.fixed_design();
  const auto& Z = prob.random_design();
  const auto& y = prob.response();
  const auto n = X.rows();
  const Eigen::MatrixXd R = prob.process_covariance(kind, rho);
  const Eigen::MatrixXd H = Eigen::MatrixXd::Identity(n, n) + eta * Z * R * Z.transpose();
  Eigen::LLT<Eigen::MatrixXd> hl(H);
  const Eigen::MatrixXd HiX = hl.solve(X);
  const Eigen::VectorXd beta = (X.transpose() * HiX).llt().solve(HiX.transpose() * y);
  return eta * R * Z.transpose() * hl.solve(y - X * beta);
}

} // namespace

TEST_CASE("process names") {
  CHECK(process_kind_from_string("iid") == ProcessKind::iid_normal);
  CHECK(process_kind_from_string("ar1") == ProcessKind::ar1);
  CHECK(process_kind_from_string(to_string(ProcessKind::fixed)) == ProcessKind::fixed);
  CHECK_THROWS_AS(process_kind_from_string("garch"), InputError);
}

TEST_CASE("restricted deviance agrees with the dense formula") {
  const auto p = re_panel(VintageSource::Kind::ar1, 0.6, 3, 8, 30);
  const RemlProblem prob(p.grid, {}, ExogenousHandling::covariates(*p.macro));
  CHECK(prob.macro_exogenous());
  for (double eta : {0.01, 0.5, 3.0, 40.0}) {
    CHECK(prob.deviance(ProcessKind::iid_normal, eta, 0.0) ==
          doctest::Approx(dense_deviance(prob, ProcessKind::iid_normal, eta, 0.0)).epsilon(1e-9));
    for (double rho : {-0.5, 0.3, 0.9})
      CHECK(prob.deviance(ProcessKind::ar1, eta, rho) ==
            doctest::Approx(dense_deviance(prob, ProcessKind::ar1, eta, rho)).epsilon(1e-9));
  }
  CHECK(prob.deviance(ProcessKind::iid_normal, 0.0, 0.0) ==
        doctest::Approx(dense_deviance(prob, ProcessKind::iid_normal, 0.0, 0.0)).epsilon(1e-9));
}

TEST_CASE("penalized solution equals the generalized least squares BLUP") {
  const auto p = re_panel(VintageSource::Kind::ar1, 0.6, 5, 8, 30);
  const RemlProblem prob(p.grid, {}, ExogenousHandling::covariates(*p.macro));
  for (auto [kind, rho] : {std::pair{ProcessKind::iid_normal, 0.0}, {ProcessKind::ar1, 0.7}}) {
    const auto sol = prob.solve(kind, 2.0, rho);
    const Eigen::VectorXd ref = dense_blup(prob, kind, 2.0, rho);
    CHECK((sol.random - ref).cwiseAbs().maxCoeff() <= 1e-9);
  }
}

TEST_CASE("a very large variance ratio reproduces the fixed-effect fit") {
  const auto p = re_panel(VintageSource::Kind::iid, 0.0, 7);
  const auto fit = penalized_fit(p.grid, {}, ProcessKind::iid_normal,
                                 ExogenousHandling::covariates(*p.macro), 1e9, 0.0);
  CHECK((fit.decomposition.vintage - fit.fixed_effects.vintage).cwiseAbs().maxCoeff() <= 1e-6);
  CHECK((fit.decomposition.maturity - fit.fixed_effects.maturity).cwiseAbs().maxCoeff() <= 1e-6);
  CHECK(fit.decomposition.constraint.kind == ConstraintKind::covariate_identified);
}

TEST_CASE("zero variance ratio is complete shrinkage") {
  const auto p = re_panel(VintageSource::Kind::iid, 0.0, 7);
  const auto fit = penalized_fit(p.grid, {}, ProcessKind::iid_normal,
                                 ExogenousHandling::covariates(*p.macro), 0.0, 0.0);
  CHECK(fit.complete_shrinkage);
  CHECK(fit.decomposition.vintage.cwiseAbs().maxCoeff() <= 1e-12);
  CHECK(fit.process.sigma2_V == 0.0);
}

TEST_CASE("shrunk effects lie between the prior mean and the fixed estimate") {
  const auto p = re_panel(VintageSource::Kind::ar1, 0.8, 11);
  for (auto kind : {ProcessKind::iid_normal, ProcessKind::ar1}) {
    const auto fit =
        fit_random_effects(p.grid, {}, kind, ExogenousHandling::covariates(*p.macro));
    for (const auto& e : fit.shrinkage) {
      CHECK(e.factor >= 0.0);
      CHECK(e.factor <= 1.0);
      CHECK(std::abs(e.shrunk - e.prior_mean) <= std::abs(e.fixed - e.prior_mean) + 1e-8);
      CHECK(e.shrunk ==
            doctest::Approx(e.factor * e.fixed + (1.0 - e.factor) * e.prior_mean).epsilon(1e-9));
    }
    CHECK(fit.sigma2_e > 0.0);
  }
}

TEST_CASE("REML optimum is no worse than nearby points") {
  const auto p = re_panel(VintageSource::Kind::ar1, 0.8, 13);
  const auto h = ExogenousHandling::covariates(*p.macro);
  const auto fit = fit_random_effects(p.grid, {}, ProcessKind::ar1, h);
  const RemlProblem prob(p.grid, {}, h);
  const double eta = fit.process.sigma2_V / fit.sigma2_e;
  CHECK(fit.reml_deviance == doctest::Approx(prob.deviance(ProcessKind::ar1, eta, fit.process.rho)));
  for (double dl : {-0.2, 0.2})
    for (double dr : {-0.03, 0.0, 0.03}) {
      const double r = std::clamp(fit.process.rho + dr, -0.95, 0.95);
      CHECK(prob.deviance(ProcessKind::ar1, eta * std::exp(dl), r) >= fit.reml_deviance - 1e-8);
    }
}

TEST_CASE("nonparametric handling carries the constraint") {
  const auto p = re_panel(VintageSource::Kind::iid, 0.0, 17);
  const auto spec = ConstraintSpec::maturity_slope_spec(0.0, 6);
  const auto fit = fit_random_effects(p.grid, {}, ProcessKind::iid_normal,
                                      ExogenousHandling::nonparametric(spec));
  CHECK(fit.decomposition.constraint.kind == ConstraintKind::maturity_slope);
  CHECK(fit.fixed_effects.constraint.kind == ConstraintKind::maturity_slope);
  CHECK(fit.macro_coefficients.size() == 0);
  CHECK_THROWS_AS(fit_random_effects(p.grid, {}, ProcessKind::iid_normal,
                                     ExogenousHandling::nonparametric(
                                         ConstraintSpec::of_kind(ConstraintKind::minimum_norm))),
                  DomainError);
}

TEST_CASE("new-vintage predictions") {
  const auto p = re_panel(VintageSource::Kind::ar1, 0.8, 19);
  auto fit = fit_random_effects(p.grid, {}, ProcessKind::ar1,
                                ExogenousHandling::covariates(*p.macro));
  const auto pred = predict_new_vintages(fit, 3);
  REQUIRE(pred.size() == 3);
  const double rho = fit.process.rho, s2 = fit.process.sigma2_V;
  const auto q = fit.raw_vintage.size();
  const double ubar = fit.raw_vintage.mean();
  const double pv = fit.prediction_variance(q - 1);
  for (int h = 1; h <= 3; ++h) {
    const auto& e = pred[static_cast<std::size_t>(h - 1)];
    CHECK(e.vintage == fit.decomposition.levels.vintages.back() + h);
    CHECK(e.mean == doctest::Approx(std::pow(rho, h) * fit.raw_vintage(q - 1) - ubar));
    double var = pv;
    for (int k = 0; k < h; ++k)
      var = rho * rho * var + s2;
    CHECK(e.se == doctest::Approx(std::sqrt(var)));
  }

  fit.process.kind = ProcessKind::iid_normal;
  const auto iid = predict_new_vintages(fit, 2);
  CHECK(iid[1].mean == doctest::Approx(-ubar));
  CHECK(iid[1].se == doctest::Approx(std::sqrt(s2)));

  fit.process.kind = ProcessKind::fixed;
  CHECK_THROWS_WITH_AS(predict_new_vintages(fit, 1),
                       "prediction requires a stochastic vintage process", DomainError);
}

TEST_CASE("invalid inputs") {
  const auto p = re_panel(VintageSource::Kind::iid, 0.0, 23);
  const auto h = ExogenousHandling::covariates(*p.macro);
  CHECK_THROWS_AS(fit_random_effects(p.grid, {}, ProcessKind::fixed, h), DomainError);
  CHECK_THROWS_AS(penalized_fit(p.grid, {}, ProcessKind::iid_normal, h, -1.0, 0.0), InputError);
  CHECK_THROWS_AS(RemlProblem(p.grid, {}, ExogenousHandling{}), DomainError);

  const auto small = re_panel(VintageSource::Kind::iid, 0.0, 23, 2, 5);
  CHECK_THROWS_AS(fit_random_effects(small.grid, {}, ProcessKind::iid_normal,
                                     ExogenousHandling::covariates(*small.macro)),
                  DomainError);
}
