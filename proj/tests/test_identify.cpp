#include "emv/design.hpp"
#include "emv/error.hpp"
#include "emv/estimator.hpp"
#include "emv/identify.hpp"
#include "emv/synth.hpp"

#include <doctest.h>

#include <cmath>

using namespace emv;

namespace {

struct Fixture {
  SyntheticPanel p;
  EmvDesign d;
  FitResult f;
  explicit Fixture(std::uint64_t seed = 1, double noise = 0.05, int A = 12, int T = 40) {
    GeneratorSpec s;
    s.A = A;
    s.T = T;
    s.seed = seed;
    s.noise_sd = noise;
    p = generate(s);
    d = build_design(p.grid);
    f = fit_linear(d, p.grid);
  }
};

double slope_of(const std::vector<int>& xs, const Eigen::VectorXd& ys, int lo) {
  double n = 0, mx = 0, my = 0;
  for (std::size_t i = 0; i < xs.size(); ++i)
    if (xs[i] > lo) {
      n += 1;
      mx += xs[i];
      my += ys(static_cast<Eigen::Index>(i));
    }
  mx /= n;
  my /= n;
  double sxy = 0, sxx = 0;
  for (std::size_t i = 0; i < xs.size(); ++i)
    if (xs[i] > lo) {
      sxy += (xs[i] - mx) * (ys(static_cast<Eigen::Index>(i)) - my);
      sxx += (xs[i] - mx) * (xs[i] - mx);
    }
  return sxy / sxx;
}

} // namespace

TEST_CASE("constraint names round trip") {
  for (auto k : {ConstraintKind::minimum_norm, ConstraintKind::last_two_vintages_equal,
                 ConstraintKind::first_last_vintages_equal, ConstraintKind::intrinsic,
                 ConstraintKind::vintage_trend_zero, ConstraintKind::maturity_slope,
                 ConstraintKind::match_parametric, ConstraintKind::generator,
                 ConstraintKind::covariate_identified})
    CHECK(constraint_kind_from_string(to_string(k)) == k);
  CHECK(to_string(ConstraintKind::maturity_slope) == "maturity-slope-k");
  CHECK_THROWS_AS(constraint_kind_from_string("pls"), InputError);
}

TEST_CASE("each constraint meets its functional and keeps the fitted values") {
  Fixture fx;
  const auto& lv = fx.d.levels;

  const auto slope = apply_constraint(fx.f, fx.d, ConstraintSpec::maturity_slope_spec(-0.01, 6));
  CHECK(slope_of(lv.ages, slope.maturity, 6) == doctest::Approx(-0.01).epsilon(1e-12));

  auto spec = ConstraintSpec::vintage_trend_spec(10);
  const auto trend = apply_constraint(fx.f, fx.d, spec);
  const int cut = lv.vintages[lv.vintages.size() - 11];
  CHECK(std::abs(slope_of(lv.vintages, trend.vintage, cut)) <= 1e-12);

  spec.vintage_set = {5, 9, 14, 20};
  const auto explicit_set = apply_constraint(fx.f, fx.d, spec);
  Eigen::VectorXd sub(4);
  std::vector<int> xs{5, 9, 14, 20};
  for (int i = 0; i < 4; ++i)
    sub(i) = explicit_set.vintage(*lv.vintage_column(xs[i]) - lv.vintage_offset());
  CHECK(std::abs(slope_of(xs, sub, -1000)) <= 1e-12);

  const auto l2 = apply_constraint(fx.f, fx.d, ConstraintSpec::of_kind(ConstraintKind::last_two_vintages_equal));
  const auto nv = l2.vintage.size();
  CHECK(l2.vintage(nv - 1) == doctest::Approx(l2.vintage(nv - 2)).epsilon(1e-12));
  const auto fl = apply_constraint(fx.f, fx.d, ConstraintSpec::of_kind(ConstraintKind::first_last_vintages_equal));
  CHECK(fl.vintage(nv - 1) == doctest::Approx(fl.vintage(0)).epsilon(1e-12));

  const auto in = intrinsic(fx.f, fx.d);
  CHECK(std::abs(in.packed().dot(fx.d.c)) <= 1e-12 * fx.d.c.norm() * in.packed().norm());

  for (const auto* dec : {&slope, &trend, &explicit_set, &l2, &fl, &in}) {
    CHECK((predict_rows(fx.d, dec->packed()) - fx.f.fitted).cwiseAbs().maxCoeff() <= 1e-9);
    CHECK(std::abs(dec->maturity.sum()) <= 1e-10);
    CHECK(std::abs(dec->exogenous.sum()) <= 1e-10);
    CHECK(std::abs(dec->vintage.sum()) <= 1e-10);
  }
}

TEST_CASE("match-parametric aligns the exogenous drift with the reference") {
  Fixture fx;
  ConstraintSpec s = ConstraintSpec::of_kind(ConstraintKind::match_parametric);
  for (int t : fx.d.levels.times)
    s.reference.emplace_back(t, 0.004 * t + 0.1 * std::sin(t / 5.0));
  const auto m = apply_constraint(fx.f, fx.d, s);
  Eigen::VectorXd ref(static_cast<Eigen::Index>(s.reference.size()));
  for (std::size_t i = 0; i < s.reference.size(); ++i)
    ref(static_cast<Eigen::Index>(i)) = s.reference[i].second;
  CHECK(slope_of(fx.d.levels.times, m.exogenous, -1) ==
        doctest::Approx(slope_of(fx.d.levels.times, ref, -1)).epsilon(1e-12));

  s.reference.pop_back();
  CHECK_THROWS_AS(apply_constraint(fx.f, fx.d, s), DomainError);
}

TEST_CASE("standard errors follow the linear map of the constraint") {
  Fixture fx(3, 0.05, 6, 14);
  const auto& lv = fx.d.levels;
  const auto P = lv.size();
  // R: recentring as a matrix; A: shift along c solving d'(b + g c) = k.
  Eigen::MatrixXd R(P, P);
  for (Eigen::Index j = 0; j < P; ++j)
    R.col(j) = recenter(lv, Eigen::VectorXd::Unit(P, j));
  const auto spec = ConstraintSpec::maturity_slope_spec(0.02, 2);
  const auto func = constraint_functional(spec, lv);
  const Eigen::MatrixXd A =
      Eigen::MatrixXd::Identity(P, P) - fx.d.c * func.d.transpose() / func.d.dot(fx.d.c);
  Eigen::CompleteOrthogonalDecomposition<Eigen::MatrixXd> cod(fx.d.X.transpose() * fx.d.X);
  cod.setThreshold(1e-10);
  const Eigen::MatrixXd cov = fx.f.sigma2 * A * R * cod.pseudoInverse() * R.transpose() * A.transpose();
  const auto dec = apply_constraint(fx.f, fx.d, spec);
  REQUIRE(dec.has_se());
  for (Eigen::Index i = 0; i < dec.maturity.size(); ++i)
    CHECK(dec.maturity_se(i) == doctest::Approx(std::sqrt(cov(1 + i, 1 + i))).epsilon(1e-7));
  const auto off = lv.vintage_offset();
  for (Eigen::Index i = 0; i < dec.vintage.size(); ++i)
    CHECK(dec.vintage_se(i) == doctest::Approx(std::sqrt(cov(off + i, off + i))).epsilon(1e-7));
}

TEST_CASE("non-identifying functionals and bad parameters are refused") {
  Fixture fx(2, 0.05, 4, 4);
  // On this layout c has a zero intercept entry only if abar + vbar = tbar; use
  // a functional that reads the alias direction instead.
  LinearFunctional f;
  f.d = Eigen::VectorXd::Zero(fx.d.levels.size());
  f.d.segment(1, static_cast<Eigen::Index>(fx.d.levels.ages.size())).setOnes();
  CHECK_THROWS_WITH_AS(apply_functional(fx.f, fx.d, f, ConstraintSpec::intrinsic_spec()),
                       "constraint does not resolve EMV nonidentifiability", DomainError);
  CHECK_THROWS_AS(apply_constraint(fx.f, fx.d, ConstraintSpec::maturity_slope_spec(0.0, 4)), DomainError);
  CHECK_THROWS_AS(apply_constraint(fx.f, fx.d, ConstraintSpec::of_kind(ConstraintKind::generator)),
                  DomainError);
  CHECK_THROWS_AS(apply_constraint(fx.f, fx.d, ConstraintSpec::vintage_trend_spec(0)), DomainError);
}

TEST_CASE("drift report recovers injected shifts and rejects other differences") {
  Fixture fx;
  const auto base = intrinsic(fx.f, fx.d);
  for (double g : {-1.0, -0.1, 0.1, 1.0}) {
    const auto shifted = Decomposition::from_packed(fx.d.levels, base.packed() + g * fx.d.c);
    CHECK(drift_report(base, shifted) == doctest::Approx(g).epsilon(1e-13));
  }
  Eigen::VectorXd b = base.packed();
  b(3) += 0.01;
  CHECK_THROWS_AS(drift_report(base, Decomposition::from_packed(fx.d.levels, b)), DomainError);
}

TEST_CASE("re-identifying a decomposition matches identifying the fit") {
  Fixture fx;
  const auto mn = minimum_norm_decomposition(fx.f, fx.d);
  const auto spec = ConstraintSpec::vintage_trend_spec(18);
  const auto a = apply_constraint(fx.f, fx.d, spec);
  const auto b = apply_constraint(mn, spec);
  CHECK((a.packed() - b.packed()).cwiseAbs().maxCoeff() <= 1e-12);
  CHECK_FALSE(b.has_se());
  CHECK(b.gamma_applied == doctest::Approx(a.gamma_applied).epsilon(1e-10));
}

TEST_CASE("sweep gives one c-equivalent decomposition per slope") {
  Fixture fx;
  const std::vector<double> ks{0.0, -0.01, -0.02};
  const auto ds = constraint_sweep(fx.f, fx.d, 6, ks);
  REQUIRE(ds.size() == 3);
  for (std::size_t i = 0; i < 3; ++i)
    CHECK(slope_of(fx.d.levels.ages, ds[i].maturity, 6) == doctest::Approx(ks[i]).epsilon(1e-12));
  // Maturity slopes differ by k, so the c-shift between two sweeps is the k
  // difference divided by the slope of c's maturity block (one per month).
  CHECK(drift_report(ds[0], ds[1]) == doctest::Approx(-0.01).epsilon(1e-10));
  CHECK_THROWS_AS(constraint_sweep(fx.f, fx.d, 6, {}), DomainError);
}

TEST_CASE("theta reconstructs a cell from the blocks") {
  Fixture fx(4, 0.0);
  const auto in = intrinsic(fx.f, fx.d);
  for (std::size_t i = 0; i < fx.p.theta.size(); i += 17) {
    const auto& o = fx.p.grid.cells()[i];
    CHECK(in.theta(o.age, o.time) == doctest::Approx(fx.p.theta[i]).epsilon(1e-10));
  }
  CHECK_THROWS_AS(in.theta(500, 1), DomainError);
}

TEST_CASE("ordinary least-squares slope") {
  CHECK(ols_slope({1, 2, 3}, {2, 4, 6}) == doctest::Approx(2.0));
  CHECK_THROWS_AS(ols_slope({1}, {2}), DomainError);
  CHECK_THROWS_AS(ols_slope({1, 1}, {2, 3}), DomainError);
}
