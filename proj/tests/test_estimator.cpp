#include "emv/design.hpp"
#include "emv/error.hpp"
#include "emv/estimator.hpp"
#include "emv/synth.hpp"

#include <doctest.h>

#include <cmath>
#include <random>

using namespace emv;

namespace {

SyntheticPanel small_panel(std::uint64_t seed, double noise) {
  GeneratorSpec s;
  s.A = 8;
  s.T = 20;
  s.seed = seed;
  s.noise_sd = noise;
  return generate(s);
}

// Minimum-norm weighted LS by complete orthogonal decomposition.
Eigen::VectorXd cod_solution(const Eigen::MatrixXd& X, const Eigen::VectorXd& y,
                             const Eigen::VectorXd& w) {
  const Eigen::VectorXd sw = w.cwiseSqrt();
  Eigen::CompleteOrthogonalDecomposition<Eigen::MatrixXd> cod(sw.asDiagonal() * X);
  cod.setThreshold(1e-10);
  return cod.solve(sw.cwiseProduct(y));
}

} // namespace

TEST_CASE("minimum-norm solution agrees with an orthogonal-decomposition oracle") {
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> u(0.5, 2.0);
  const auto p = small_panel(1, 0.05);
  const auto d = build_design(p.grid);
  const auto n = d.X.rows();
  Eigen::VectorXd y(n), w(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    y(i) = p.grid.cells()[static_cast<std::size_t>(i)].value;
    w(i) = u(rng);
  }
  const auto sol = solve_min_norm(d.X, y, w);
  const Eigen::VectorXd ref = cod_solution(d.X, y, w);
  CHECK((sol.beta - ref).cwiseAbs().maxCoeff() <= 1e-9);
  CHECK(sol.rank == d.X.cols() - 4);
  // Minimum norm: no component along the null space.
  CHECK(std::abs(sol.beta.dot(d.c)) <= 1e-9 * d.c.norm());

  // Normal equations.
  const Eigen::MatrixXd XtW = d.X.transpose() * w.asDiagonal();
  const Eigen::VectorXd r = XtW * d.X * sol.beta - XtW * y;
  CHECK(r.norm() <= 1e-8 * (XtW * y).norm());

  // F F^T is the pseudo-inverse of X'WX.
  Eigen::CompleteOrthogonalDecomposition<Eigen::MatrixXd> cod(XtW * d.X);
  cod.setThreshold(1e-10);
  const Eigen::MatrixXd pinv = cod.pseudoInverse();
  CHECK((sol.cov_factor * sol.cov_factor.transpose() - pinv).cwiseAbs().maxCoeff() <=
        1e-8 * pinv.cwiseAbs().maxCoeff());
}

TEST_CASE("fit_linear diagnostics match direct formulas") {
  const auto p = small_panel(2, 0.05);
  const auto d = build_design(p.grid);
  const auto f = fit_linear(d, p.grid);
  const Eigen::VectorXd resid = f.response - f.fitted;
  CHECK(f.residual_ss == doctest::Approx(resid.squaredNorm()).epsilon(1e-12));
  const double tss = (f.response.array() - f.response.mean()).square().sum();
  CHECK(f.r_squared == doctest::Approx(1.0 - resid.squaredNorm() / tss).epsilon(1e-12));
  CHECK(f.dof == d.X.rows() - f.rank);
  CHECK(f.sigma2 == doctest::Approx(resid.squaredNorm() / f.dof).epsilon(1e-12));
  CHECK(f.iterations == 1);
}

TEST_CASE("noiseless data are reproduced exactly") {
  const auto p = small_panel(3, 0.0);
  const auto d = build_design(p.grid);
  const auto f = fit_linear(d, p.grid);
  for (std::size_t i = 0; i < p.theta.size(); ++i)
    CHECK(f.fitted(static_cast<Eigen::Index>(i)) == doctest::Approx(p.theta[i]).epsilon(1e-10));
}

TEST_CASE("standard errors only for estimable functions") {
  const auto p = small_panel(4, 0.05);
  const auto d = build_design(p.grid);
  const auto f = fit_linear(d, p.grid);
  // A fitted cell value is estimable; its SE is sqrt(sigma2 x' (X'X)^+ x).
  const Eigen::VectorXd x = d.X.row(5).transpose();
  Eigen::CompleteOrthogonalDecomposition<Eigen::MatrixXd> cod(d.X.transpose() * d.X);
  cod.setThreshold(1e-10);
  const double ref = std::sqrt(f.sigma2 * x.dot(cod.pseudoInverse() * x));
  CHECK(estimable_se(f, x) == doctest::Approx(ref).epsilon(1e-8));
  CHECK_THROWS_WITH_AS(estimable_se(f, d.c), "function not estimable: component along null direction",
                       DomainError);
  // A first difference of maturity effects is not estimable.
  Eigen::VectorXd l = Eigen::VectorXd::Zero(d.X.cols());
  l(2) = 1.0;
  l(1) = -1.0;
  CHECK_THROWS_AS(estimable_se(f, l), DomainError);
  // A second difference is.
  l(1) = 1.0;
  l(2) = -2.0;
  l(3) = 1.0;
  CHECK(estimable_se(f, l) > 0.0);
}

TEST_CASE("gaussian IRLS is the linear fit") {
  const auto p = small_panel(5, 0.05);
  const auto d = build_design(p.grid);
  const auto lin = fit_linear(d, p.grid);
  const auto glm = fit_glm(d, p.grid, GlmFamily::gaussian_identity);
  CHECK((lin.beta - glm.beta).cwiseAbs().maxCoeff() <= 1e-10);
  CHECK(glm.residual_ss == doctest::Approx(lin.residual_ss).epsilon(1e-10));
}

TEST_CASE("poisson IRLS recovers log-means from expected counts") {
  const auto p = small_panel(6, 0.0);
  std::vector<Observation> obs;
  for (std::size_t i = 0; i < p.theta.size(); ++i) {
    const auto& o = p.grid.cells()[i];
    obs.push_back({o.age, o.time, 1e4 * std::exp(p.theta[i]), 1.0});
  }
  const auto g = PanelGrid::from_observations(obs);
  const auto d = build_design(g);
  const Eigen::VectorXd off = Eigen::VectorXd::Constant(d.X.rows(), std::log(1e4));
  const auto f = fit_glm(d, g, GlmFamily::poisson_log, off);
  for (std::size_t i = 0; i < p.theta.size(); ++i)
    CHECK(f.fitted(static_cast<Eigen::Index>(i)) == doctest::Approx(p.theta[i]).epsilon(1e-8));
  CHECK(f.residual_ss <= 1e-8);
  CHECK(f.transform.kind == TransformKind::log);
}

TEST_CASE("binomial IRLS recovers logits from exact proportions") {
  std::vector<Observation> obs;
  std::vector<double> eta;
  for (int a = 0; a <= 4; ++a)
    for (int t = 1; t <= 6; ++t) {
      const double e = -2.0 + 0.3 * a - 0.1 * t + 0.05 * (t - a) * (t - a) / 10.0;
      eta.push_back(e);
      obs.push_back({a, t, 1.0 / (1.0 + std::exp(-e)), 500.0});
    }
  const auto g = PanelGrid::from_observations(obs);
  const auto d = build_design(g);
  const auto f = fit_glm(d, g, GlmFamily::binomial_logit);
  for (std::size_t i = 0; i < eta.size(); ++i)
    CHECK(f.fitted(static_cast<Eigen::Index>(i)) == doctest::Approx(eta[i]).epsilon(1e-8));
}

TEST_CASE("IRLS deviance trace decreases and separation is reported") {
  std::mt19937_64 rng(8);
  const auto p = small_panel(7, 0.0);
  std::vector<Observation> obs;
  for (std::size_t i = 0; i < p.theta.size(); ++i) {
    const auto& o = p.grid.cells()[i];
    std::poisson_distribution<int> pois(50.0 * std::exp(p.theta[i] + 4.0));
    obs.push_back({o.age, o.time, static_cast<double>(pois(rng)), 1.0});
  }
  const auto g = PanelGrid::from_observations(obs);
  const auto d = build_design(g);
  Eigen::VectorXd y(d.X.rows());
  for (Eigen::Index i = 0; i < y.size(); ++i)
    y(i) = g.cells()[static_cast<std::size_t>(i)].value;
  const auto r = irls(d.X, y, Eigen::VectorXd::Ones(y.size()), Eigen::VectorXd::Zero(y.size()),
                      GlmFamily::poisson_log);
  for (std::size_t i = 1; i < r.deviance_trace.size(); ++i)
    CHECK(r.deviance_trace[i] <= r.deviance_trace[i - 1] * (1 + 1e-12));
  CHECK(r.iterations <= 50);

  // An age of certain success drives its effect to infinity.
  std::vector<Observation> sep;
  for (int a = 0; a <= 2; ++a)
    for (int t = 1; t <= 3; ++t)
      sep.push_back({a, t, a == 2 ? 1.0 : 0.3, 20.0});
  const auto sg = PanelGrid::from_observations(sep);
  CHECK_THROWS_AS(fit_glm(build_design(sg), sg, GlmFamily::binomial_logit), GlmError);
}

TEST_CASE("invalid GLM responses") {
  const auto g = PanelGrid::from_observations(
      {{0, 1, -1.0, 1.0}, {0, 2, 1.0, 1.0}, {1, 2, 1.0, 1.0}, {1, 3, 2.0, 1.0}});
  CHECK_THROWS_AS(fit_glm(build_design(g), g, GlmFamily::poisson_log), DomainError);
  const auto h = PanelGrid::from_observations(
      {{0, 1, 1.5, 1.0}, {0, 2, 0.5, 1.0}, {1, 2, 0.5, 1.0}, {1, 3, 0.5, 1.0}});
  CHECK_THROWS_AS(fit_glm(build_design(h), h, GlmFamily::binomial_logit), DomainError);
}
