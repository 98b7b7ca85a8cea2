#include "emv/macro.hpp"

#include "emv/csv.hpp"
#include "emv/error.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <set>
#include <sstream>

namespace emv {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

// Residual of `col` after least-squares projection onto the columns of `basis`.
double residual_norm(const Eigen::MatrixXd& basis, const Eigen::VectorXd& col) {
  if (basis.cols() == 0)
    return col.norm();
  Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(basis);
  const Eigen::VectorXd coef = qr.solve(col);
  return (col - basis * coef).norm();
}

} // namespace

std::optional<Eigen::Index> MacroPanel::row_of(int t) const {
  auto it = std::lower_bound(times.begin(), times.end(), t);
  if (it == times.end() || *it != t)
    return std::nullopt;
  return static_cast<Eigen::Index>(it - times.begin());
}

std::optional<Eigen::Index> MacroPanel::column_of(const std::string& name) const {
  auto it = std::find(names.begin(), names.end(), name);
  if (it == names.end())
    return std::nullopt;
  return static_cast<Eigen::Index>(it - names.begin());
}

std::vector<double> MacroPanel::column(const std::string& name) const {
  auto j = column_of(name);
  if (!j)
    throw DomainError("unknown covariate '" + name + "'");
  std::vector<double> out(times.size());
  for (std::size_t i = 0; i < times.size(); ++i)
    out[i] = values(static_cast<Eigen::Index>(i), *j);
  return out;
}

MacroPanel MacroPanel::with_column(const std::string& name, const std::vector<double>& col) const {
  if (col.size() != times.size())
    throw DomainError("covariate column length does not match the time index");
  if (column_of(name))
    throw DomainError("covariate name '" + name + "' is already used");
  MacroPanel out = *this;
  out.names.push_back(name);
  out.values.conservativeResize(static_cast<Eigen::Index>(times.size()),
                                static_cast<Eigen::Index>(out.names.size()));
  for (std::size_t i = 0; i < col.size(); ++i)
    out.values(static_cast<Eigen::Index>(i), out.values.cols() - 1) = col[i];
  return out;
}

MacroPanel MacroPanel::select(const std::vector<std::string>& keep) const {
  MacroPanel out;
  out.times = times;
  out.values.resize(static_cast<Eigen::Index>(times.size()), 0);
  for (const auto& name : keep)
    out = out.with_column(name, column(name));
  return out;
}

MacroPanel load_macro(std::istream& in) {
  auto table = csv::read(in);
  if (table.header.empty() || table.header.front() != "time")
    throw InputError("macro header must be time,<name1>,<name2>,...");
  std::set<std::string> seen;
  for (std::size_t j = 1; j < table.header.size(); ++j) {
    if (table.header[j].empty())
      throw InputError("empty covariate name in macro header");
    if (!seen.insert(table.header[j]).second)
      throw InputError("duplicate covariate name '" + table.header[j] + "'");
  }
  if (table.rows.empty())
    throw InputError("macro file has no rows");

  std::vector<std::pair<int, std::size_t>> order;
  for (std::size_t r = 0; r < table.rows.size(); ++r) {
    const auto& row = table.rows[r];
    const auto line = std::to_string(table.lines[r]);
    if (row.size() != table.header.size())
      throw InputError("line " + line + ": expected " + std::to_string(table.header.size()) +
                       " fields, found " + std::to_string(row.size()));
    auto t = csv::parse_int(row[0]);
    if (!t)
      throw InputError("line " + line + ": time must be an integer");
    order.emplace_back(static_cast<int>(*t), r);
  }
  std::sort(order.begin(), order.end());
  for (std::size_t i = 1; i < order.size(); ++i)
    if (order[i].first == order[i - 1].first)
      throw InputError("duplicate macro time " + std::to_string(order[i].first));

  MacroPanel m;
  m.names.assign(table.header.begin() + 1, table.header.end());
  m.values.resize(static_cast<Eigen::Index>(order.size()), static_cast<Eigen::Index>(m.names.size()));
  for (std::size_t i = 0; i < order.size(); ++i) {
    m.times.push_back(order[i].first);
    const auto& row = table.rows[order[i].second];
    for (std::size_t j = 1; j < row.size(); ++j) {
      double x = kNaN;
      if (!row[j].empty() && row[j] != "NA" && row[j] != "nan") {
        auto v = csv::parse_double(row[j]);
        if (!v)
          throw InputError("line " + std::to_string(table.lines[order[i].second]) +
                           ": non-numeric value '" + row[j] + "'");
        x = *v;
      }
      m.values(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j - 1)) = x;
    }
  }
  return m;
}

MacroPanel load_macro_file(const std::string& path) {
  std::ifstream in(path);
  if (!in)
    throw InputError("cannot open macro file '" + path + "'");
  return load_macro(in);
}

MacroPanel load_macro_text(const std::string& text) {
  std::istringstream in(text);
  return load_macro(in);
}

std::string macro_to_csv(const MacroPanel& m) {
  std::string out = "time";
  for (const auto& n : m.names)
    out += "," + n;
  out += '\n';
  for (std::size_t i = 0; i < m.times.size(); ++i) {
    out += std::to_string(m.times[i]);
    for (Eigen::Index j = 0; j < m.values.cols(); ++j) {
      out += ',';
      const double x = m.values(static_cast<Eigen::Index>(i), j);
      if (!std::isnan(x))
        out += csv::format_double(x);
    }
    out += '\n';
  }
  return out;
}

MacroPanel add_lag(const MacroPanel& m, const std::string& source, int lag, const std::string& name) {
  const auto x = m.column(source);
  std::vector<double> out(x.size(), kNaN);
  for (std::size_t i = 0; i < x.size(); ++i)
    if (auto r = m.row_of(m.times[i] - lag))
      out[i] = x[static_cast<std::size_t>(*r)];
  return m.with_column(name, out);
}

MacroPanel add_log(const MacroPanel& m, const std::string& source, const std::string& name) {
  auto x = m.column(source);
  for (auto& v : x)
    v = v > 0.0 ? std::log(v) : kNaN;
  return m.with_column(name, x);
}

MacroPanel add_difference(const MacroPanel& m, const std::string& source, int lag,
                          const std::string& name) {
  const auto x = m.column(source);
  std::vector<double> out(x.size(), kNaN);
  for (std::size_t i = 0; i < x.size(); ++i)
    if (auto r = m.row_of(m.times[i] - lag))
      out[i] = x[i] - x[static_cast<std::size_t>(*r)];
  return m.with_column(name, out);
}

MacroPanel add_moving_average(const MacroPanel& m, const std::string& source, int window,
                              const std::string& name) {
  if (window < 1)
    throw DomainError("moving-average window must be positive");
  const auto x = m.column(source);
  std::vector<double> out(x.size(), kNaN);
  for (std::size_t i = 0; i < x.size(); ++i) {
    double sum = 0.0;
    int count = 0;
    for (int k = 0; k < window; ++k)
      if (auto r = m.row_of(m.times[i] - k)) {
        sum += x[static_cast<std::size_t>(*r)];
        ++count;
      }
    if (count == window)
      out[i] = sum / window;
  }
  return m.with_column(name, out);
}

SemiparametricFit fit_semiparametric(const PanelGrid& grid, const MacroPanel& macros,
                                     const ResponseTransform& g) {
  if (grid.observed_count() < 4)
    throw DomainError("insufficient data for EMV decomposition");
  const PanelGrid tg = transform_response(grid, g);
  const Levels lv = levels_of(tg);
  const auto J = static_cast<Eigen::Index>(macros.names.size());
  if (J == 0)
    throw DomainError("macro panel has no covariates");

  const auto nt = static_cast<Eigen::Index>(lv.times.size());
  Eigen::MatrixXd xt(nt, J);
  for (Eigen::Index i = 0; i < nt; ++i) {
    const int t = lv.times[static_cast<std::size_t>(i)];
    auto r = macros.row_of(t);
    if (!r)
      throw DomainError("macro panel lacks time " + std::to_string(t));
    for (Eigen::Index j = 0; j < J; ++j) {
      const double x = macros.values(*r, j);
      if (!std::isfinite(x))
        throw DomainError("missing covariate '" + macros.names[static_cast<std::size_t>(j)] +
                          "' at time " + std::to_string(t));
      xt(i, j) = x;
    }
  }

  // Greedy column screen of [1, x].
  {
    Eigen::MatrixXd basis = Eigen::MatrixXd::Ones(nt, 1);
    std::vector<std::string> dependent;
    for (Eigen::Index j = 0; j < J; ++j) {
      const Eigen::VectorXd col = xt.col(j);
      const double scale = std::max(col.norm(), 1e-300);
      if (residual_norm(basis, col) <= 1e-10 * scale) {
        dependent.push_back(macros.names[static_cast<std::size_t>(j)]);
      } else {
        basis.conservativeResize(Eigen::NoChange, basis.cols() + 1);
        basis.col(basis.cols() - 1) = col;
      }
    }
    if (!dependent.empty()) {
      std::string list;
      for (const auto& d : dependent)
        list += (list.empty() ? "" : ", ") + d;
      throw DomainError("covariate matrix is rank-deficient; dependent columns: " + list);
    }
  }

  SemiparametricFit fit;
  fit.levels = lv;
  fit.transform = g;
  fit.covariate_names = macros.names;

  // Collinearity of a linear time trend with the covariates.
  {
    Eigen::MatrixXd Z(nt, J + 1);
    Z.col(0).setOnes();
    Z.rightCols(J) = xt;
    Eigen::VectorXd tt(nt);
    for (Eigen::Index i = 0; i < nt; ++i)
      tt(i) = lv.times[static_cast<std::size_t>(i)];
    const auto sol = solve_min_norm(Z, tt, Eigen::VectorXd::Ones(nt));
    const double tss = (tt.array() - tt.mean()).square().sum();
    const double rss = (tt - Z * sol.beta).squaredNorm();
    fit.collinearity_diagnostic = tss > 0.0 ? std::clamp(1.0 - rss / tss, 0.0, 1.0) : 0.0;
    if (fit.collinearity_diagnostic >= 0.95)
      fit.warnings.push_back(
          "covariates closely reproduce a linear time trend (R^2 = " +
          csv::format_double(fit.collinearity_diagnostic) +
          "); maturity/vintage drift is then poorly identified and estimates need the same care "
          "as a nonparametric fit");
  }

  const auto na = static_cast<Eigen::Index>(lv.ages.size());
  const auto nv = static_cast<Eigen::Index>(lv.vintages.size());
  const auto n = static_cast<Eigen::Index>(tg.observed_count());
  const Eigen::Index p = 1 + na + nv + J;
  Eigen::MatrixXd X = Eigen::MatrixXd::Zero(n, p);
  Eigen::VectorXd y(n), w(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto& o = tg.cells()[static_cast<std::size_t>(i)];
    X(i, 0) = 1.0;
    X(i, *lv.age_column(o.age)) = 1.0;
    X(i, 1 + na + (*lv.vintage_column(vintage_of(o.age, o.time)) - lv.vintage_offset())) = 1.0;
    const Eigen::Index trow = *lv.time_column(o.time) - lv.exogenous_offset();
    X.block(i, 1 + na + nv, 1, J) = xt.row(trow);
    y(i) = o.value;
    w(i) = o.weight;
  }

  const auto sol = solve_min_norm(X, y, w);
  fit.rank = sol.rank;
  if (sol.rank < p - 2)
    fit.warnings.push_back("semiparametric design is rank-deficient (rank " +
                           std::to_string(sol.rank) + " of " + std::to_string(p - 2) +
                           "); reporting the minimum-norm solution");

  fit.intercept = sol.beta(0);
  fit.maturity = sol.beta.segment(1, na);
  fit.vintage = sol.beta.segment(1 + na, nv);
  fit.macro_coefficients = sol.beta.tail(J);
  const double mm = fit.maturity.mean();
  const double vm = fit.vintage.mean();
  fit.maturity.array() -= mm;
  fit.vintage.array() -= vm;
  fit.intercept += mm + vm;
  fit.implied_time_effects = xt * fit.macro_coefficients;

  fit.fitted = X * sol.beta;
  const Eigen::VectorXd resid = y - fit.fitted;
  fit.residual_ss = (w.array() * resid.array().square()).sum();
  const double ybar = w.dot(y) / w.sum();
  const double tss = (w.array() * (y.array() - ybar).square()).sum();
  fit.r_squared = tss > 0.0 ? std::clamp(1.0 - fit.residual_ss / tss, 0.0, 1.0) : 1.0;
  fit.dof = n - fit.rank;
  fit.sigma2 = fit.dof > 0 ? fit.residual_ss / static_cast<double>(fit.dof) : 0.0;
  return fit;
}

Decomposition comparable_nonparametric(const FitResult& np_fit, const EmvDesign& design,
                                       const SemiparametricFit& semi) {
  if (semi.levels.times != design.levels.times)
    throw DomainError("time index mismatch between the nonparametric and semiparametric fits");
  ConstraintSpec spec;
  spec.kind = ConstraintKind::match_parametric;
  for (std::size_t i = 0; i < semi.levels.times.size(); ++i)
    spec.reference.emplace_back(semi.levels.times[i],
                                semi.implied_time_effects(static_cast<Eigen::Index>(i)));
  return apply_constraint(np_fit, design, spec);
}

} // namespace emv
