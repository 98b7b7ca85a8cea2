#include "emv/identify.hpp"

#include "emv/csv.hpp"
#include "emv/error.hpp"

#include <algorithm>
#include <cmath>
#include <map>

namespace emv {

namespace {

struct KindName {
  ConstraintKind kind;
  const char* name;
};

constexpr KindName kKindNames[] = {
    {ConstraintKind::minimum_norm, "minimum-norm"},
    {ConstraintKind::last_two_vintages_equal, "last-two-vintages-equal"},
    {ConstraintKind::first_last_vintages_equal, "first-last-vintages-equal"},
    {ConstraintKind::intrinsic, "intrinsic"},
    {ConstraintKind::vintage_trend_zero, "vintage-trend-zero"},
    {ConstraintKind::maturity_slope, "maturity-slope-k"},
    {ConstraintKind::match_parametric, "match-parametric"},
    {ConstraintKind::generator, "generator"},
    {ConstraintKind::covariate_identified, "covariate-identified"},
};

// d with d^T beta = OLS slope of the selected block entries on their index.
void slope_functional(Eigen::VectorXd& d, Eigen::Index offset, const std::vector<int>& index,
                      const std::vector<std::size_t>& members) {
  double mean = 0.0;
  for (auto m : members)
    mean += index[m];
  mean /= static_cast<double>(members.size());
  double sxx = 0.0;
  for (auto m : members)
    sxx += (index[m] - mean) * (index[m] - mean);
  for (auto m : members)
    d(offset + static_cast<Eigen::Index>(m)) = (index[m] - mean) / sxx;
}

Eigen::VectorXd block_se(const Eigen::MatrixXd& G, double sigma) {
  return sigma * G.rowwise().norm();
}

void attach_se(Decomposition& out, const Eigen::MatrixXd& G, double sigma2) {
  const Eigen::VectorXd se = block_se(G, std::sqrt(sigma2));
  const auto& lv = out.levels;
  out.maturity_se = se.segment(lv.maturity_offset(), static_cast<Eigen::Index>(lv.ages.size()));
  out.exogenous_se = se.segment(lv.exogenous_offset(), static_cast<Eigen::Index>(lv.times.size()));
  out.vintage_se = se.segment(lv.vintage_offset(), static_cast<Eigen::Index>(lv.vintages.size()));
}

// recenter() applied to each column of the covariance factor.
Eigen::MatrixXd recentred_factor(const Levels& levels, const Eigen::MatrixXd& F) {
  Eigen::MatrixXd out(F.rows(), F.cols());
  for (Eigen::Index j = 0; j < F.cols(); ++j)
    out.col(j) = recenter(levels, F.col(j));
  return out;
}

void check_fit(const FitResult& fit, const EmvDesign& design) {
  if (!(fit.levels == design.levels) || fit.beta.size() != design.levels.size())
    throw DomainError("fit and design have different level layouts");
}

double shift_for(const LinearFunctional& f, const Eigen::VectorXd& beta, const Eigen::VectorXd& c) {
  const double dc = f.d.dot(c);
  if (std::abs(dc) <= 1e-12 * f.d.norm() * c.norm())
    throw DomainError("constraint does not resolve EMV nonidentifiability");
  return (f.target - f.d.dot(beta)) / dc;
}

} // namespace

std::string to_string(ConstraintKind kind) {
  for (const auto& kn : kKindNames)
    if (kn.kind == kind)
      return kn.name;
  return "unknown";
}

ConstraintKind constraint_kind_from_string(const std::string& name) {
  for (const auto& kn : kKindNames)
    if (name == kn.name)
      return kn.kind;
  if (name == "maturity-slope")
    return ConstraintKind::maturity_slope;
  throw InputError("unknown constraint kind '" + name + "'");
}

Eigen::VectorXd Decomposition::packed() const {
  Eigen::VectorXd b(levels.size());
  b(0) = intercept;
  b.segment(levels.maturity_offset(), maturity.size()) = maturity;
  b.segment(levels.exogenous_offset(), exogenous.size()) = exogenous;
  b.segment(levels.vintage_offset(), vintage.size()) = vintage;
  return b;
}

Decomposition Decomposition::from_packed(const Levels& levels, const Eigen::VectorXd& beta) {
  if (beta.size() != levels.size())
    throw DomainError("parameter vector does not match the level layout");
  Decomposition d;
  d.levels = levels;
  d.intercept = beta(0);
  d.maturity = beta.segment(levels.maturity_offset(), static_cast<Eigen::Index>(levels.ages.size()));
  d.exogenous = beta.segment(levels.exogenous_offset(), static_cast<Eigen::Index>(levels.times.size()));
  d.vintage = beta.segment(levels.vintage_offset(), static_cast<Eigen::Index>(levels.vintages.size()));
  return d;
}

double Decomposition::theta(int a, int t) const {
  auto ac = levels.age_column(a);
  auto tc = levels.time_column(t);
  auto vc = levels.vintage_column(vintage_of(a, t));
  if (!ac || !tc || !vc)
    throw DomainError("cell (age=" + std::to_string(a) + ", time=" + std::to_string(t) +
                      ") is outside the fitted layout");
  return intercept + maturity(*ac - levels.maturity_offset()) +
         exogenous(*tc - levels.exogenous_offset()) + vintage(*vc - levels.vintage_offset());
}

double ols_slope(const std::vector<double>& xs, const std::vector<double>& ys) {
  if (xs.size() != ys.size() || xs.size() < 2)
    throw DomainError("slope needs at least two points");
  double mx = 0.0, my = 0.0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    mx += xs[i];
    my += ys[i];
  }
  mx /= static_cast<double>(xs.size());
  my /= static_cast<double>(ys.size());
  double sxy = 0.0, sxx = 0.0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    sxy += (xs[i] - mx) * (ys[i] - my);
    sxx += (xs[i] - mx) * (xs[i] - mx);
  }
  if (sxx <= 0.0)
    throw DomainError("slope needs at least two distinct x values");
  return sxy / sxx;
}

LinearFunctional constraint_functional(const ConstraintSpec& spec, const Levels& levels) {
  LinearFunctional f;
  f.d = Eigen::VectorXd::Zero(levels.size());
  const auto voff = levels.vintage_offset();
  const auto nv = levels.vintages.size();

  switch (spec.kind) {
  case ConstraintKind::last_two_vintages_equal:
    if (nv < 2)
      throw DomainError("need at least two vintages for a pairwise vintage constraint");
    f.d(voff + static_cast<Eigen::Index>(nv) - 1) = 1.0;
    f.d(voff + static_cast<Eigen::Index>(nv) - 2) = -1.0;
    break;
  case ConstraintKind::first_last_vintages_equal:
    if (nv < 2)
      throw DomainError("need at least two vintages for a pairwise vintage constraint");
    f.d(voff + static_cast<Eigen::Index>(nv) - 1) = 1.0;
    f.d(voff) = -1.0;
    break;
  case ConstraintKind::intrinsic:
    f.d = null_vector_for(levels);
    break;
  case ConstraintKind::vintage_trend_zero: {
    std::vector<std::size_t> members;
    if (!spec.vintage_set.empty()) {
      for (std::size_t i = 0; i < nv; ++i)
        if (std::find(spec.vintage_set.begin(), spec.vintage_set.end(), levels.vintages[i]) !=
            spec.vintage_set.end())
          members.push_back(i);
    } else {
      if (spec.window < 0)
        throw DomainError("vintage window must be positive");
      const auto w = std::min<std::size_t>(static_cast<std::size_t>(spec.window), nv);
      for (std::size_t i = nv - w; i < nv; ++i)
        members.push_back(i);
    }
    if (members.size() < 2)
      throw DomainError("vintage trend constraint needs at least two vintages in C_V");
    slope_functional(f.d, voff, levels.vintages, members);
    break;
  }
  case ConstraintKind::maturity_slope: {
    std::vector<std::size_t> members;
    for (std::size_t i = 0; i < levels.ages.size(); ++i)
      if (levels.ages[i] > spec.a_star)
        members.push_back(i);
    if (members.size() < 2)
      throw DomainError("maturity slope constraint needs at least two ages above A* = " +
                        std::to_string(spec.a_star));
    slope_functional(f.d, levels.maturity_offset(), levels.ages, members);
    f.target = spec.k;
    break;
  }
  case ConstraintKind::match_parametric: {
    std::map<int, double> ref(spec.reference.begin(), spec.reference.end());
    if (ref.size() != spec.reference.size())
      throw DomainError("time index mismatch: duplicate times in reference series");
    std::vector<double> ts, es;
    for (int t : levels.times) {
      auto it = ref.find(t);
      if (it == ref.end())
        throw DomainError("time index mismatch: reference series lacks time " + std::to_string(t));
      ts.push_back(t);
      es.push_back(it->second);
    }
    if (ts.size() < 2)
      throw DomainError("need at least two times to match an exogenous drift");
    std::vector<std::size_t> members(levels.times.size());
    for (std::size_t i = 0; i < members.size(); ++i)
      members[i] = i;
    slope_functional(f.d, levels.exogenous_offset(), levels.times, members);
    f.target = ols_slope(ts, es);
    break;
  }
  case ConstraintKind::minimum_norm:
  case ConstraintKind::generator:
  case ConstraintKind::covariate_identified:
    throw DomainError("'" + to_string(spec.kind) + "' is a provenance tag, not a constraint");
  }
  return f;
}

Decomposition minimum_norm_decomposition(const FitResult& fit, const EmvDesign& design) {
  check_fit(fit, design);
  auto out = Decomposition::from_packed(design.levels, recenter(design.levels, fit.beta));
  out.constraint = ConstraintSpec::of_kind(ConstraintKind::minimum_norm);
  if (fit.cov_factor.size() > 0)
    attach_se(out, recentred_factor(design.levels, fit.cov_factor), fit.sigma2);
  return out;
}

Decomposition apply_functional(const FitResult& fit, const EmvDesign& design,
                               const LinearFunctional& f, const ConstraintSpec& tag) {
  check_fit(fit, design);
  const Eigen::VectorXd& c = design.c;
  const Eigen::VectorXd base = recenter(design.levels, fit.beta);
  const double gamma = shift_for(f, base, c);

  auto out = Decomposition::from_packed(design.levels, base + gamma * c);
  out.constraint = tag;
  out.gamma_applied = gamma;
  if (fit.cov_factor.size() > 0) {
    const Eigen::MatrixXd RF = recentred_factor(design.levels, fit.cov_factor);
    const Eigen::MatrixXd G = RF - c * ((f.d.transpose() * RF) / f.d.dot(c));
    attach_se(out, G, fit.sigma2);
  }
  return out;
}

Decomposition apply_constraint(const FitResult& fit, const EmvDesign& design,
                               const ConstraintSpec& spec) {
  if (spec.kind == ConstraintKind::minimum_norm)
    return minimum_norm_decomposition(fit, design);
  return apply_functional(fit, design, constraint_functional(spec, design.levels), spec);
}

Decomposition apply_constraint(const Decomposition& base, const ConstraintSpec& spec) {
  const Eigen::VectorXd c = null_vector_for(base.levels);
  const Eigen::VectorXd b = recenter(base.levels, base.packed());
  const double gamma = shift_for(constraint_functional(spec, base.levels), b, c);
  auto out = Decomposition::from_packed(base.levels, b + gamma * c);
  out.constraint = spec;
  out.gamma_applied = base.gamma_applied + gamma;
  return out;
}

Eigen::VectorXd project_out(const Eigen::VectorXd& beta, const Eigen::VectorXd& c) {
  return beta - c * (c.dot(beta) / c.dot(c));
}

Decomposition intrinsic(const FitResult& fit, const EmvDesign& design) {
  return apply_constraint(fit, design, ConstraintSpec::intrinsic_spec());
}

Decomposition intrinsic(const Decomposition& d) {
  return apply_constraint(d, ConstraintSpec::intrinsic_spec());
}

std::vector<Decomposition> constraint_sweep(const FitResult& fit, const EmvDesign& design,
                                            int a_star, const std::vector<double>& ks) {
  if (ks.empty())
    throw DomainError("constraint sweep needs at least one k");
  std::vector<Decomposition> out;
  out.reserve(ks.size());
  for (double k : ks)
    out.push_back(apply_constraint(fit, design, ConstraintSpec::maturity_slope_spec(k, a_star)));
  return out;
}

double drift_report(const Decomposition& d1, const Decomposition& d2) {
  if (!(d1.levels == d2.levels))
    throw DomainError("decompositions are not c-equivalent: different level layouts");
  const Eigen::VectorXd c = null_vector_for(d1.levels);
  const Eigen::VectorXd b1 = d1.packed();
  const Eigen::VectorXd b2 = d2.packed();
  const Eigen::VectorXd diff = b2 - b1;
  const double gamma = c.dot(diff) / c.dot(c);
  const double scale = std::max({1.0, b1.cwiseAbs().maxCoeff(), b2.cwiseAbs().maxCoeff()});
  const double err = (diff - gamma * c).cwiseAbs().maxCoeff();
  if (err > 1e-8 * scale)
    throw DomainError("decompositions are not c-equivalent (residual " + csv::format_double(err) +
                      ")");
  return gamma;
}

} // namespace emv
