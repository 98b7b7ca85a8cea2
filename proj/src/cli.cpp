#include "emv/cli.hpp"

#include "emv/chart.hpp"
#include "emv/csv.hpp"
#include "emv/error.hpp"
#include "emv/frailty.hpp"
#include "emv/serialize.hpp"
#include "emv/service.hpp"
#include "emv/synth.hpp"
#include "emv/workflow.hpp"

#include <CLI11.hpp>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <map>

namespace emv {

namespace fs = std::filesystem;

namespace {

struct Options {
  std::string out_dir;
  std::string panel;
  std::string macro;
  std::string input;
  std::string transform = "identity";
  double epsilon = 1e-9;
  std::string family = "gaussian";
  ConstraintFields constraint;
  std::vector<double> ks{0.0, -0.01, -0.02};
  std::string process = "ar1";

  // forecast
  int horizon = 12;
  int forecast_window = 3;
  std::string tail = "hold-last";
  int max_age = -1;
  std::string vintage_mode = "recent-level";
  std::vector<std::string> overrides;
  bool original_scale = false;
  bool random_effects = false;

  // frailty
  FrailtyScenario frailty;

  // generate
  GeneratorSpec gen;
  std::string missing = "bottom-left-triangle";
  std::string vintage_kind = "iid";
  std::string exogenous = "default";

  // serve
  std::string host = "127.0.0.1";
  int port = 8080;
};

class Writer {
public:
  Writer(std::string dir, std::ostream& log) : dir_(std::move(dir)), log_(log) {
    if (!dir_.empty())
      fs::create_directories(dir_);
  }
  void write(const std::string& name, const std::string& content) {
    const fs::path p = dir_.empty() ? fs::path(name) : fs::path(dir_) / name;
    std::ofstream f(p, std::ios::binary);
    if (!f)
      throw InputError("cannot write " + p.string());
    f << content;
    log_ << "wrote " << p.string() << "\n";
  }
  void chart(const std::string& stem, const std::string& title,
             const std::vector<ChartPanel>& panels) {
    write(stem + ".svg", render_svg(title, panels));
    write(stem + "_chart.csv", chart_csv(panels));
  }

private:
  std::string dir_;
  std::ostream& log_;
};

ResponseTransform transform_of(const Options& o) {
  ResponseTransform g;
  g.kind = transform_from_string(o.transform);
  g.epsilon = o.epsilon;
  return g;
}

std::string read_file(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f)
    throw InputError("cannot open " + path);
  return {std::istreambuf_iterator<char>(f), std::istreambuf_iterator<char>()};
}

PanelFit panel_fit(const Options& o) {
  const auto grid = load_panel_file(o.panel);
  const auto g = transform_of(o);
  if (o.family == "gaussian")
    return fit_panel(grid, g);
  PanelFit pf;
  pf.grid = grid;
  pf.design = build_design(grid);
  if (o.family == "poisson")
    pf.fit = fit_glm(pf.design, grid, GlmFamily::poisson_log);
  else if (o.family == "binomial")
    pf.fit = fit_glm(pf.design, grid, GlmFamily::binomial_logit);
  else
    throw InputError("unknown family '" + o.family + "' (gaussian, poisson, binomial)");
  pf.transform = pf.fit.transform;
  return pf;
}

void add_transform(CLI::App* app, Options& o) {
  app->add_option("--transform", o.transform, "Response transform: identity, log, logit")
      ->check(CLI::IsMember({"identity", "log", "logit"}));
  app->add_option("--epsilon", o.epsilon, "Clipping margin for log/logit");
}

void add_constraint(CLI::App* app, Options& o) {
  app->add_option("--kind", o.constraint.kind, "Constraint kind");
  app->add_option("--k", o.constraint.k, "Maturity slope per month beyond A*");
  app->add_option("--a-star", o.constraint.a_star, "Age threshold A*");
  app->add_option("--window", o.constraint.window, "Most recent vintages in C_V");
  app->add_option("--vintages", o.constraint.vintages, "Explicit C_V (comma separated)")
      ->delimiter(',');
}

int cmd_fit(const Options& o, Writer& w) {
  const auto pf = panel_fit(o);
  const auto spec = constraint_from_fields(o.constraint);
  const auto d = identified(pf, spec);
  auto report = fit_report(pf.fit, pf.design);
  report["decomposition"] = to_json(d);
  w.write("fit.json", dump(report));
  w.write("decomposition.json", dump(to_json(d)));
  w.write("decomposition.csv", decomposition_to_csv(d));
  w.chart("decomposition", "EMV decomposition (" + to_string(spec.kind) + ")",
          decomposition_panels({{to_string(spec.kind), d}}));
  return 0;
}

int cmd_identify(const Options& o, Writer& w) {
  const auto spec = constraint_from_fields(o.constraint);
  Decomposition d;
  if (!o.panel.empty()) {
    d = identified(panel_fit(o), spec);
  } else if (!o.input.empty()) {
    json j;
    try {
      j = json::parse(read_file(o.input));
    } catch (const json::exception& e) {
      throw InputError(o.input + ": " + e.what());
    }
    if (j.contains("minimum_norm"))
      j = j["minimum_norm"];
    d = apply_constraint(decomposition_from_json(j), spec);
  } else {
    throw InputError("identify needs --panel or --input");
  }
  w.write("decomposition.json", dump(to_json(d)));
  w.write("decomposition.csv", decomposition_to_csv(d));
  w.chart("decomposition", "EMV decomposition (" + to_string(spec.kind) + ")",
          decomposition_panels({{to_string(spec.kind), d}}));
  return 0;
}

int cmd_sweep(const Options& o, Writer& w) {
  const auto pf = panel_fit(o);
  const auto ds = sweep(pf, o.ks, o.constraint.a_star);
  w.write("sweep.json", dump(sweep_report(o.ks, o.constraint.a_star, ds)));
  std::vector<std::pair<std::string, Decomposition>> items;
  for (std::size_t i = 0; i < ds.size(); ++i)
    items.emplace_back("k=" + csv::format_double(o.ks[i]), ds[i]);
  w.chart("sweep", "Maturity-slope sweep beyond A*=" + std::to_string(o.constraint.a_star),
          decomposition_panels(items));
  return 0;
}

int cmd_fit_macro(const Options& o, Writer& w, std::ostream& err) {
  const auto pf = panel_fit(o);
  const auto mf = fit_macro(pf, load_macro_file(o.macro));
  w.write("macro_fit.json", macro_fit_json(mf));
  for (const auto& warning : mf.semi.warnings)
    err << "warning: " << warning << "\n";

  // Exogenous panel: implied parametric series against the shifted
  // nonparametric series with +/- 2 SE bands.
  const auto& d = mf.comparable;
  const auto& lv = d.levels;
  Series implied{"parametric", {}, {}, "solid"}, np{"nonparametric", {}, {}, "dashed"};
  Series lo{"nonparametric -2se", {}, {}, "dotted"}, hi{"nonparametric +2se", {}, {}, "dotted"};
  for (std::size_t j = 0; j < lv.times.size(); ++j) {
    const auto jj = static_cast<Eigen::Index>(j);
    const double t = lv.times[j];
    implied.x.push_back(t);
    implied.y.push_back(mf.semi.implied_time_effects(jj));
    np.x.push_back(t);
    np.y.push_back(d.exogenous(jj));
    if (d.has_se()) {
      lo.x.push_back(t);
      lo.y.push_back(d.exogenous(jj) - 2 * d.exogenous_se(jj));
      hi.x.push_back(t);
      hi.y.push_back(d.exogenous(jj) + 2 * d.exogenous_se(jj));
    }
  }
  ChartPanel e{"Exogenous", "calendar time t", "effect", {implied, np}};
  if (d.has_se()) {
    e.series.push_back(lo);
    e.series.push_back(hi);
  }
  Series sm{"parametric", {}, {}, "solid"}, nm{"nonparametric", {}, {}, "dashed"};
  for (std::size_t i = 0; i < lv.ages.size(); ++i) {
    sm.x.push_back(lv.ages[i]);
    sm.y.push_back(mf.semi.maturity(static_cast<Eigen::Index>(i)));
    nm.x.push_back(lv.ages[i]);
    nm.y.push_back(d.maturity(static_cast<Eigen::Index>(i)));
  }
  Series sv{"parametric", {}, {}, "solid"}, nv{"nonparametric", {}, {}, "dashed"};
  for (std::size_t i = 0; i < lv.vintages.size(); ++i) {
    sv.x.push_back(lv.vintages[i]);
    sv.y.push_back(mf.semi.vintage(static_cast<Eigen::Index>(i)));
    nv.x.push_back(lv.vintages[i]);
    nv.y.push_back(d.vintage(static_cast<Eigen::Index>(i)));
  }
  w.chart("macro_fit", "Semiparametric and comparable nonparametric fits",
          {e, {"Maturity", "age a", "effect", {sm, nm}}, {"Vintage", "vintage v", "effect", {sv, nv}}});
  return 0;
}

int cmd_fit_re(const Options& o, Writer& w) {
  const auto grid = load_panel_file(o.panel);
  const auto kind = process_kind_from_string(o.process);
  const auto handling = o.macro.empty()
                            ? ExogenousHandling::nonparametric(constraint_from_fields(o.constraint))
                            : ExogenousHandling::covariates(load_macro_file(o.macro));
  const auto fit = fit_random_effects(grid, transform_of(o), kind, handling);
  w.write("re_fit.json", dump(to_json(fit)));
  Series fixed{"fixed effects", {}, {}, "dashed"}, shrunk{to_string(kind) + " random effects", {}, {}, "solid"};
  for (const auto& e : fit.shrinkage) {
    fixed.x.push_back(e.vintage);
    fixed.y.push_back(e.fixed);
    shrunk.x.push_back(e.vintage);
    shrunk.y.push_back(e.shrunk);
  }
  w.chart("re_fit", "Vintage effects: fixed against shrunk",
          {{"Vintage", "vintage v", "effect", {fixed, shrunk}}});
  return 0;
}

int cmd_forecast(const Options& o, Writer& w) {
  const auto pf = panel_fit(o);
  ForecastSpec spec;
  spec.horizon = o.horizon;
  spec.maturity_tail = maturity_tail_from_string(o.tail);
  spec.a_star = o.constraint.a_star;
  if (o.max_age >= 0)
    spec.max_age = o.max_age;
  spec.vintage_mode = vintage_mode_from_string(o.vintage_mode);
  spec.window = o.forecast_window;
  spec.original_scale = o.original_scale;
  for (const auto& ov : o.overrides) {
    const auto eq = ov.find('=');
    if (eq == std::string::npos)
      throw InputError("override '" + ov + "' is not of the form vintage=effect");
    spec.override_values[csv::require_int(ov.substr(0, eq), "override vintage")] =
        csv::require_double(ov.substr(eq + 1), "override effect");
  }
  std::optional<ProcessKind> process;
  if (o.random_effects)
    process = process_kind_from_string(o.process);
  const auto f = run_forecast(pf, load_macro_file(o.macro), spec, process);
  w.write("forecast.csv", forecast_to_csv(f));
  w.write("forecast.json", forecast_json(f));
  return 0;
}

int cmd_frailty(const Options& o, Writer& w) {
  const auto c = simulate_vintage_hazard(o.frailty);
  w.write("frailty.csv", frailty_to_csv(c));
  ChartPanel p{"Log-hazard by age", "age a (months)", "log hazard", {}};
  for (std::size_t q = 0; q < c.account_hazard.size(); ++q) {
    Series s{"account q" + csv::format_double(c.scenario.quantiles[q] * 100), {}, {}, "dotted"};
    for (std::size_t a = 1; a < c.ages.size(); ++a) {
      s.x.push_back(c.ages[a]);
      s.y.push_back(std::log(c.account_hazard[q][a]));
    }
    p.series.push_back(std::move(s));
  }
  Series v{"vintage", {}, {}, "solid"};
  for (std::size_t a = 1; a < c.ages.size(); ++a) {
    v.x.push_back(c.ages[a]);
    v.y.push_back(std::log(c.vintage_hazard[a]));
  }
  p.series.push_back(std::move(v));
  w.chart("frailty", "Account and vintage hazards under lognormal frailty", {p});
  return 0;
}

int cmd_generate(Options o, Writer& w) {
  auto& g = o.gen;
  if (o.missing == "rectangular")
    g.missing = MissingPattern::rectangular;
  else if (o.missing == "bottom-left-triangle")
    g.missing = MissingPattern::bottom_left_triangle;
  else
    g.missing = MissingPattern::random;
  g.vintage.kind = o.vintage_kind == "ar1" ? VintageSource::Kind::ar1 : VintageSource::Kind::iid;
  g.exogenous.kind = o.exogenous == "macro" ? ExogenousSource::Kind::macro_driven
                                            : ExogenousSource::Kind::default_cycle;
  const auto p = generate(g);
  w.write("panel.csv", panel_to_csv(p.grid));
  w.write("truth.json", dump(truth_report(g, p)));
  if (p.macro)
    w.write("macro.csv", macro_to_csv(*p.macro));
  if (!p.future.empty()) {
    std::string s = "age,time,vintage,theta\n";
    for (const auto& c : p.future)
      s += std::to_string(c.age) + "," + std::to_string(c.time) + "," +
           std::to_string(vintage_of(c.age, c.time)) + "," + csv::format_double(c.theta) + "\n";
    w.write("future.csv", s);
  }
  return 0;
}

} // namespace

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  Options o;
  if (const char* env = std::getenv("EMV_OUT_DIR"))
    o.out_dir = env;

  CLI::App app{"EMV decomposition of vintage panel data", "emv"};
  app.require_subcommand(1);

  auto* fit = app.add_subcommand("fit", "Fit the additive model and identify it");
  fit->add_option("--panel", o.panel, "Panel CSV")->required()->check(CLI::ExistingFile);
  fit->add_option("--family", o.family, "gaussian (default), poisson or binomial");
  add_transform(fit, o);
  add_constraint(fit, o);

  auto* identify = app.add_subcommand("identify", "Re-constrain a saved fit");
  identify->add_option("--input", o.input, "fit.json or decomposition JSON")->check(CLI::ExistingFile);
  identify->add_option("--panel", o.panel, "Panel CSV (refit, keeps standard errors)")
      ->check(CLI::ExistingFile);
  add_transform(identify, o);
  add_constraint(identify, o);

  auto* sw = app.add_subcommand("sweep", "Maturity-slope constraint sweep");
  sw->add_option("--panel", o.panel, "Panel CSV")->required()->check(CLI::ExistingFile);
  sw->add_option("--k", o.ks, "Slopes (comma separated)")->delimiter(',');
  sw->add_option("--a-star", o.constraint.a_star, "Age threshold A*");
  add_transform(sw, o);

  auto* fm = app.add_subcommand("fit-macro", "Covariate model for the exogenous factor");
  fm->add_option("--panel", o.panel, "Panel CSV")->required()->check(CLI::ExistingFile);
  fm->add_option("--macro", o.macro, "Macro CSV")->required()->check(CLI::ExistingFile);
  add_transform(fm, o);

  auto* re = app.add_subcommand("fit-re", "Random vintage effects");
  re->add_option("--panel", o.panel, "Panel CSV")->required()->check(CLI::ExistingFile);
  re->add_option("--process", o.process, "iid or ar1")->check(CLI::IsMember({"iid", "ar1"}));
  re->add_option("--macro", o.macro, "Macro CSV (covariate exogenous handling)")
      ->check(CLI::ExistingFile);
  add_transform(re, o);
  add_constraint(re, o);

  auto* fc = app.add_subcommand("forecast", "Forecast from a covariate fit");
  fc->add_option("--panel", o.panel, "Panel CSV")->required()->check(CLI::ExistingFile);
  fc->add_option("--macro", o.macro, "Macro CSV with forecast rows")->required()->check(CLI::ExistingFile);
  fc->add_option("--horizon", o.horizon, "Months beyond the last fitted time");
  fc->add_option("--tail", o.tail, "Maturity tail: hold-last or straight-line");
  fc->add_option("--a-star", o.constraint.a_star, "Straight-line tail uses ages above this");
  fc->add_option("--max-age", o.max_age, "Forecast ages up to this");
  fc->add_option("--vintage-mode", o.vintage_mode, "recent-level, ar1-process or business-override");
  fc->add_option("--window", o.forecast_window, "Recent-level window (vintages)");
  fc->add_option("--override", o.overrides, "New-vintage effect, vintage=effect")->delimiter(',');
  fc->add_flag("--original-scale", o.original_scale, "Also report g^-1(theta)");
  fc->add_flag("--random-effects", o.random_effects, "Refit vintage effects as random");
  fc->add_option("--process", o.process, "iid or ar1 (with --random-effects)");
  add_transform(fc, o);

  auto* fr = app.add_subcommand("simulate-frailty", "Vintage hazard under frailty");
  fr->add_option("--h0", o.frailty.h0, "Plateau hazard per month");
  fr->add_option("--tau", o.frailty.tau, "Rise timescale (months)");
  fr->add_option("--omega", o.frailty.omega, "Log-scale sd of frailty");
  fr->add_option("--horizon", o.frailty.horizon, "Months");
  fr->add_option("--quantiles", o.frailty.quantiles, "Account quantiles")->delimiter(',');

  auto* gen = app.add_subcommand("generate", "Synthetic panel with known truth");
  gen->add_option("--A", o.gen.A, "Maximum age");
  gen->add_option("--T", o.gen.T, "Last calendar time");
  gen->add_option("--intercept", o.gen.intercept, "Intercept");
  gen->add_option("--amplitude", o.gen.maturity.amplitude, "Maturity amplitude");
  gen->add_option("--tau", o.gen.maturity.tau, "Maturity rise timescale");
  gen->add_option("--tail-slope", o.gen.maturity.tail_slope, "Maturity tail slope");
  gen->add_option("--tail-start", o.gen.maturity.tail_start, "Age where the tail slope starts");
  gen->add_option("--exogenous", o.exogenous, "default or macro")
      ->check(CLI::IsMember({"default", "macro"}));
  gen->add_option("--vintage-process", o.vintage_kind, "iid or ar1")
      ->check(CLI::IsMember({"iid", "ar1"}));
  gen->add_option("--sigma2-v", o.gen.vintage.sigma2, "Vintage (innovation) variance");
  gen->add_option("--rho", o.gen.vintage.rho, "AR(1) coefficient");
  gen->add_option("--noise-sd", o.gen.noise_sd, "Observation noise sd");
  gen->add_option("--missing", o.missing, "rectangular, bottom-left-triangle or random")
      ->check(CLI::IsMember({"rectangular", "bottom-left-triangle", "random"}));
  gen->add_option("--missing-p", o.gen.missing_p, "Drop probability for random pattern");
  gen->add_option("--horizon", o.gen.horizon, "Months of future truth");
  gen->add_option("--seed", o.gen.seed, "Seed");

  auto* serve = app.add_subcommand("serve", "Start the HTTP service");
  serve->add_option("--host", o.host, "Bind address");
  serve->add_option("--port", o.port, "Port");

  for (auto* sub : app.get_subcommands({}))
    if (sub != serve)
      sub->add_option("--out", o.out_dir, "Output directory (default $EMV_OUT_DIR or .)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return 0;
  } catch (const CLI::ParseError& e) {
    err << "usage error: " << e.what() << "\n" << "run 'emv --help' for usage\n";
    return 2;
  }

  try {
    Writer w(o.out_dir, out);
    if (*fit)
      return cmd_fit(o, w);
    if (*identify)
      return cmd_identify(o, w);
    if (*sw)
      return cmd_sweep(o, w);
    if (*fm)
      return cmd_fit_macro(o, w, err);
    if (*re)
      return cmd_fit_re(o, w);
    if (*fc)
      return cmd_forecast(o, w);
    if (*fr)
      return cmd_frailty(o, w);
    if (*gen)
      return cmd_generate(o, w);
    if (*serve) {
      Service svc;
      out << "listening on " << o.host << ":" << o.port << "\n" << std::flush;
      if (!svc.listen(o.host, o.port)) {
        err << "error: cannot bind " << o.host << ":" << o.port << "\n";
        return 1;
      }
      return 0;
    }
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return 1;
  }
  return 2;
}

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  std::vector<const char*> argv{"emv"};
  for (const auto& a : args)
    argv.push_back(a.c_str());
  return run_cli(static_cast<int>(argv.size()), argv.data(), out, err);
}

} // namespace emv
