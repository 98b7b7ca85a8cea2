#include "emv/design.hpp"
#include "emv/error.hpp"
#include "emv/synth.hpp"

#include <doctest.h>

#include <algorithm>
#include <random>

using namespace emv;

namespace {

PanelGrid rectangle(int A, int T) {
  std::vector<Observation> obs;
  for (int a = 0; a <= A; ++a)
    for (int t = 1; t <= T; ++t)
      obs.push_back({a, t, 0.1 * a - 0.05 * t, 1.0});
  return PanelGrid::from_observations(obs);
}

} // namespace

TEST_CASE("3x3 rectangle: layout, rank and hand-computed null vector") {
  const auto d = build_design(rectangle(2, 3));
  CHECK(d.levels.ages == std::vector<int>{0, 1, 2});
  CHECK(d.levels.times == std::vector<int>{1, 2, 3});
  CHECK(d.levels.vintages == std::vector<int>{-1, 0, 1, 2, 3});
  CHECK(d.X.rows() == 9);
  CHECK(d.X.cols() == 12);
  CHECK(d.rank == 8); // three alias directions plus c
  CHECK(d.extra_null_directions.cols() == 0);

  // abar = 1, tbar = 2, vbar = 1: intercept entry 1 + 1 - 2 = 0.
  Eigen::VectorXd c(12);
  c << 0, -1, 0, 1, 1, 0, -1, -2, -1, 0, 1, 2;
  CHECK((d.c - c).cwiseAbs().maxCoeff() == doctest::Approx(0.0));
  CHECK((d.X * d.c).cwiseAbs().maxCoeff() <= 1e-12);
  CHECK((null_vector(d) - d.c).norm() == 0.0);
}

TEST_CASE("each row has exactly one indicator per block") {
  const auto d = build_design(rectangle(3, 4));
  for (Eigen::Index i = 0; i < d.X.rows(); ++i) {
    const auto& o = d.rows[static_cast<std::size_t>(i)];
    CHECK(d.X(i, 0) == 1.0);
    CHECK(d.X.row(i).sum() == 4.0);
    CHECK(d.X(i, *d.levels.age_column(o.age)) == 1.0);
    CHECK(d.X(i, *d.levels.time_column(o.time)) == 1.0);
    CHECK(d.X(i, *d.levels.vintage_column(o.time - o.age)) == 1.0);
  }
}

TEST_CASE("triangle layout: nonzero intercept entry in c, still annihilated") {
  GeneratorSpec s;
  s.A = 6;
  s.T = 10;
  const auto p = generate(s);
  const auto d = build_design(p.grid);
  double abar = 0, tbar = 0, vbar = 0;
  for (int a : d.levels.ages)
    abar += a;
  for (int t : d.levels.times)
    tbar += t;
  for (int v : d.levels.vintages)
    vbar += v;
  abar /= d.levels.ages.size();
  tbar /= d.levels.times.size();
  vbar /= d.levels.vintages.size();
  CHECK(d.c(0) == doctest::Approx(abar + vbar - tbar));
  CHECK(d.c(0) != doctest::Approx(0.0));
  CHECK((d.X * d.c).cwiseAbs().maxCoeff() <= 1e-12 * d.X.cwiseAbs().maxCoeff());
  CHECK(d.rank == d.X.cols() - 4);
}

TEST_CASE("alias directions are null directions of X") {
  const auto d = build_design(rectangle(3, 5));
  const Eigen::MatrixXd al = alias_directions(d.levels);
  CHECK(al.cols() == 3);
  CHECK((d.X * al).cwiseAbs().maxCoeff() <= 1e-12);
  // Independent of c.
  Eigen::MatrixXd all(d.X.cols(), 4);
  all << al, d.c;
  CHECK(Eigen::FullPivLU<Eigen::MatrixXd>(all).rank() == 4);
}

TEST_CASE("recenter keeps X beta and zeroes block means") {
  std::mt19937_64 rng(5);
  std::normal_distribution<double> n(0.0, 1.0);
  const auto d = build_design(rectangle(4, 6));
  Eigen::VectorXd b(d.X.cols());
  for (Eigen::Index i = 0; i < b.size(); ++i)
    b(i) = n(rng);
  const Eigen::VectorXd r = recenter(d.levels, b);
  CHECK((d.X * r - d.X * b).cwiseAbs().maxCoeff() <= 1e-12);
  const auto na = static_cast<Eigen::Index>(d.levels.ages.size());
  const auto nt = static_cast<Eigen::Index>(d.levels.times.size());
  const auto nv = static_cast<Eigen::Index>(d.levels.vintages.size());
  CHECK(std::abs(r.segment(1, na).sum()) <= 1e-12);
  CHECK(std::abs(r.segment(1 + na, nt).sum()) <= 1e-12);
  CHECK(std::abs(r.segment(1 + na + nt, nv).sum()) <= 1e-12);
  CHECK_THROWS_AS(recenter(d.levels, Eigen::VectorXd::Zero(3)), DomainError);
}

TEST_CASE("too few cells for a decomposition") {
  const auto g = PanelGrid::from_observations({{0, 1, 1.0, 1.0}, {1, 2, 2.0, 1.0}, {0, 2, 0.0, 1.0}});
  CHECK_THROWS_WITH_AS(build_design(g), "insufficient data for EMV decomposition", DomainError);
}

TEST_CASE("disconnected layouts report additional null directions") {
  // Two blocks of cells sharing no age, time or vintage.
  std::vector<Observation> obs;
  for (int a = 0; a <= 1; ++a)
    for (int t = 1; t <= 2; ++t)
      obs.push_back({a, t, 0.0, 1.0});
  for (int a = 10; a <= 11; ++a)
    for (int t = 30; t <= 31; ++t)
      obs.push_back({a, t, 0.0, 1.0});
  const auto d = build_design(PanelGrid::from_observations(obs));
  CHECK(d.extra_null_directions.cols() > 0);
  CHECK((d.X * d.extra_null_directions).cwiseAbs().maxCoeff() <= 1e-10);
  CHECK(d.rank == d.X.cols() - 4 - d.extra_null_directions.cols());
  // Orthogonal to c.
  CHECK((d.extra_null_directions.transpose() * d.c).cwiseAbs().maxCoeff() <= 1e-10);
}

TEST_CASE("design csv has one named column per parameter") {
  const auto d = build_design(rectangle(1, 2));
  const auto s = design_to_csv(d);
  const auto header = s.substr(0, s.find('\n'));
  CHECK(std::count(header.begin(), header.end(), ',') + 1 == d.X.cols() + 2);
  CHECK(std::count(s.begin(), s.end(), '\n') == d.X.rows() + 1);
}
