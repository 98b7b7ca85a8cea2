#include "emv/csv.hpp"
#include "emv/error.hpp"
#include "emv/panel.hpp"

#include <doctest.h>

#include <cmath>
#include <limits>
#include <random>

using namespace emv;

TEST_CASE("vintage index is calendar time minus age") {
  CHECK(vintage_of(0, 5) == 5);
  CHECK(vintage_of(3, 5) == 2);
  CHECK(vintage_of(7, 5) == -2);
}

TEST_CASE("panel csv loads by header name, weight optional") {
  const auto g = load_panel_text("time,value,age\n1,0.5,0\n2,0.25,1\n");
  CHECK(g.observed_count() == 2);
  CHECK(g.max_age() == 1);
  CHECK(g.max_time() == 2);
  CHECK(g.value(1, 2) == 0.25);
  CHECK(g.weight(1, 2) == 1.0);
  CHECK_FALSE(g.observed(0, 2));

  const auto w = load_panel_text("age,time,value,weight\n0,1,1.5,4\n");
  CHECK(w.weight(0, 1) == 4.0);
}

TEST_CASE("cells come out ordered by age then time") {
  const auto g = load_panel_text("age,time,value\n1,3,0\n0,2,0\n1,2,0\n0,1,0\n");
  std::vector<std::pair<int, int>> order;
  for (const auto& o : g.cells())
    order.emplace_back(o.age, o.time);
  CHECK(order == std::vector<std::pair<int, int>>{{0, 1}, {0, 2}, {1, 2}, {1, 3}});
}

TEST_CASE("malformed panels are rejected with the offending cell or line") {
  CHECK_THROWS_WITH_AS(load_panel_text(""), "no observations", InputError);
  CHECK_THROWS_WITH_AS(load_panel_text("age,time,value\n"), "no observations", InputError);
  CHECK_THROWS_WITH_AS(load_panel_text("age,time,value\n0,1,x\n"),
                       "line 2: non-numeric value 'x'", InputError);
  CHECK_THROWS_WITH_AS(load_panel_text("age,time,value\n0,1,1\n0,1,2\n"),
                       "duplicate cell (age=0, time=1)", InputError);
  CHECK_THROWS_AS(load_panel_text("age,time,value\n-1,1,1\n"), InputError);
  CHECK_THROWS_AS(load_panel_text("age,time,value\n0,0,1\n"), InputError);
  CHECK_THROWS_AS(load_panel_text("age,time,value,weight\n0,1,1,0\n"), InputError);
  CHECK_THROWS_AS(load_panel_text("age,value\n0,1\n"), InputError);
  CHECK_THROWS_AS(load_panel_file("/nonexistent/panel.csv"), InputError);
}

TEST_CASE("panel csv round trip is exact") {
  std::mt19937_64 rng(3);
  std::normal_distribution<double> n(0.0, 1.0);
  std::vector<Observation> obs;
  for (int a = 0; a <= 4; ++a)
    for (int t = 1; t <= 6; ++t)
      obs.push_back({a, t, n(rng) * 1e-3 + 1.0 / 3.0, 1.0 + (a + t) % 3});
  const auto g = PanelGrid::from_observations(obs);
  CHECK(load_panel_text(panel_to_csv(g)) == g);
}

TEST_CASE("shortest round-trip number formatting") {
  for (double x : {0.1, 1.0 / 3.0, -2.5e-300, 123456789.125, 0.0})
    CHECK(csv::parse_double(csv::format_double(x)).value() == x);
  CHECK(csv::format_double(0.1) == "0.1");
  CHECK_FALSE(csv::parse_double("1.5x").has_value());
  CHECK(csv::parse_int("42").value() == 42);
  CHECK_THROWS_AS(csv::require_int("4.2", "k"), InputError);
}

TEST_CASE("transforms and their inverses") {
  ResponseTransform id;
  CHECK(id.apply(-3.0) == -3.0);

  ResponseTransform lg{TransformKind::log};
  CHECK(lg.apply(std::exp(1.5)) == doctest::Approx(1.5).epsilon(1e-15));
  CHECK(lg.inverse(lg.apply(0.02)) == doctest::Approx(0.02).epsilon(1e-14));
  CHECK(lg.apply(0.0) == doctest::Approx(std::log(1e-9))); // clipped at epsilon

  ResponseTransform lt{TransformKind::logit};
  CHECK(lt.apply(0.5) == doctest::Approx(0.0));
  CHECK(lt.apply(0.2) == doctest::Approx(std::log(0.25)).epsilon(1e-14));
  CHECK(lt.inverse(lt.apply(0.03)) == doctest::Approx(0.03).epsilon(1e-14));
  CHECK(std::isfinite(lt.apply(1.0)));

  CHECK(transform_from_string(to_string(TransformKind::logit)) == TransformKind::logit);
  CHECK_THROWS_AS(transform_from_string("sqrt"), InputError);
}

TEST_CASE("transforming a panel names the cell that leaves the domain") {
  const auto g = load_panel_text("age,time,value\n0,1,0.5\n1,2,-0.1\n");
  CHECK_THROWS_AS(transform_response(g, {TransformKind::log}), DomainError);
  try {
    transform_response(g, {TransformKind::log});
  } catch (const DomainError& e) {
    CHECK(std::string(e.what()).find("age=1, time=2") != std::string::npos);
  }
  const auto ok = transform_response(load_panel_text("age,time,value\n0,1,0.25\n"), {TransformKind::logit});
  CHECK(ok.value(0, 1) == doctest::Approx(std::log(1.0 / 3.0)));
}
