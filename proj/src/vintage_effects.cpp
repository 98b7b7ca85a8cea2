#include "emv/vintage_effects.hpp"

#include "emv/csv.hpp"
#include "emv/design.hpp"
#include "emv/error.hpp"
#include "emv/estimator.hpp"

#include <cmath>
#include <limits>

namespace emv {

namespace {

constexpr double kInvPhi = 0.6180339887498949;

double logdet_llt(const Eigen::LLT<Eigen::MatrixXd>& llt) {
  return 2.0 * llt.matrixLLT().diagonal().array().log().sum();
}

template <class F>
double golden_min(F&& f, double lo, double hi, double tol, double& fmin) {
  double a = lo, b = hi;
  double x1 = b - kInvPhi * (b - a);
  double x2 = a + kInvPhi * (b - a);
  double f1 = f(x1), f2 = f(x2);
  while (b - a > tol) {
    if (f1 <= f2) {
      b = x2;
      x2 = x1;
      f2 = f1;
      x1 = b - kInvPhi * (b - a);
      f1 = f(x1);
    } else {
      a = x1;
      x1 = x2;
      f1 = f2;
      x2 = a + kInvPhi * (b - a);
      f2 = f(x2);
    }
  }
  if (f1 <= f2) {
    fmin = f1;
    return x1;
  }
  fmin = f2;
  return x2;
}

struct TracePoint {
  double log_eta, rho, deviance;
};

std::string format_trace(const std::vector<TracePoint>& trace) {
  std::string s;
  const std::size_t start = trace.size() > 10 ? trace.size() - 10 : 0;
  for (std::size_t i = start; i < trace.size(); ++i)
    s += " (log_eta=" + csv::format_double(trace[i].log_eta) +
         ", rho=" + csv::format_double(trace[i].rho) +
         ", -2logL=" + csv::format_double(trace[i].deviance) + ")";
  return s;
}

} // namespace

std::string to_string(ProcessKind kind) {
  switch (kind) {
  case ProcessKind::fixed:
    return "fixed";
  case ProcessKind::iid_normal:
    return "iid-normal";
  case ProcessKind::ar1:
    return "ar1";
  }
  return "fixed";
}

ProcessKind process_kind_from_string(const std::string& name) {
  if (name == "fixed")
    return ProcessKind::fixed;
  if (name == "iid" || name == "iid-normal")
    return ProcessKind::iid_normal;
  if (name == "ar1")
    return ProcessKind::ar1;
  throw InputError("unknown vintage process '" + name + "'");
}

RemlProblem::RemlProblem(const PanelGrid& grid, const ResponseTransform& g,
                         const ExogenousHandling& h) {
  if (h.constraint.has_value() == h.macro.has_value())
    throw DomainError("random-effects fit needs exactly one exogenous handling: a constraint "
                      "for nonparametric E or a macro panel");
  if (h.constraint && (h.constraint->kind == ConstraintKind::minimum_norm ||
                       h.constraint->kind == ConstraintKind::generator ||
                       h.constraint->kind == ConstraintKind::covariate_identified))
    throw DomainError("nonparametric exogenous handling needs an identifying constraint");
  macro_ = h.macro.has_value();

  const PanelGrid tg = transform_response(grid, g);
  levels_ = levels_of(tg);
  if (levels_.vintages.size() < 8)
    throw DomainError("random vintage effects need at least 8 observed vintages");

  const auto na = static_cast<Eigen::Index>(levels_.ages.size());
  const auto nt = static_cast<Eigen::Index>(levels_.times.size());
  q_ = static_cast<Eigen::Index>(levels_.vintages.size());
  n_ = static_cast<Eigen::Index>(tg.observed_count());

  Eigen::Index J = 0;
  if (macro_) {
    J = static_cast<Eigen::Index>(h.macro->names.size());
    if (J == 0)
      throw DomainError("macro panel has no covariates");
    covariate_names_ = h.macro->names;
  }
  p_ = 1 + (na - 1) + (macro_ ? J : nt - 1);

  X_ = Eigen::MatrixXd::Zero(n_, p_);
  Z_ = Eigen::MatrixXd::Zero(n_, q_);
  y_.resize(n_);
  w_.resize(n_);
  cells_.assign(static_cast<std::size_t>(q_), 0);
  for (Eigen::Index i = 0; i < n_; ++i) {
    const auto& o = tg.cells()[static_cast<std::size_t>(i)];
    X_(i, 0) = 1.0;
    const auto ai = *levels_.age_column(o.age) - levels_.maturity_offset();
    if (ai > 0)
      X_(i, ai) = 1.0;
    if (macro_) {
      auto r = h.macro->row_of(o.time);
      if (!r)
        throw DomainError("macro panel lacks time " + std::to_string(o.time));
      for (Eigen::Index j = 0; j < J; ++j) {
        const double x = h.macro->values(*r, j);
        if (!std::isfinite(x))
          throw DomainError("missing covariate '" + h.macro->names[static_cast<std::size_t>(j)] +
                            "' at time " + std::to_string(o.time));
        X_(i, na + j) = x;
      }
    } else {
      const auto ti = *levels_.time_column(o.time) - levels_.exogenous_offset();
      if (ti > 0)
        X_(i, na - 1 + ti) = 1.0;
    }
    const auto vi = *levels_.vintage_column(vintage_of(o.age, o.time)) - levels_.vintage_offset();
    Z_(i, vi) = 1.0;
    ++cells_[static_cast<std::size_t>(vi)];
    y_(i) = o.value;
    w_(i) = o.weight;
  }

  const Eigen::MatrixXd WX = w_.asDiagonal() * X_;
  const Eigen::MatrixXd WZ = w_.asDiagonal() * Z_;
  const Eigen::MatrixXd xtwx = X_.transpose() * WX;
  xtwx_.compute(xtwx);
  const double dmax = xtwx.diagonal().maxCoeff();
  if (xtwx_.info() != Eigen::Success ||
      xtwx_.matrixLLT().diagonal().minCoeff() <= 1e-7 * std::sqrt(dmax))
    throw DomainError("fixed-effect design is rank-deficient (covariates collinear with "
                      "maturity effects?)");
  logdet_xtwx_ = logdet_llt(xtwx_);
  logdet_w_ = w_.array().log().sum();
  xtwz_ = X_.transpose() * WZ;
  xtwy_ = WX.transpose() * y_;
  const Eigen::MatrixXd ztwz = Z_.transpose() * WZ;
  const Eigen::VectorXd ztwy = WZ.transpose() * y_;
  const double ytwy = y_.dot(w_.cwiseProduct(y_));

  const Eigen::MatrixXd sol_z = xtwx_.solve(xtwz_);
  const Eigen::VectorXd sol_y = xtwx_.solve(xtwy_);
  K_ = ztwz - xtwz_.transpose() * sol_z;
  K_ = 0.5 * (K_ + K_.transpose()).eval();
  b_ = ztwy - xtwz_.transpose() * sol_y;
  ymy_ = ytwy - xtwy_.dot(sol_y);
}

Eigen::MatrixXd RemlProblem::process_covariance(ProcessKind kind, double rho) const {
  if (kind != ProcessKind::ar1)
    return Eigen::MatrixXd::Identity(q_, q_);
  if (std::abs(rho) >= 1.0)
    throw DomainError("AR(1) coefficient must satisfy |rho| < 1");
  Eigen::MatrixXd R(q_, q_);
  const double scale = 1.0 / (1.0 - rho * rho);
  for (Eigen::Index i = 0; i < q_; ++i)
    for (Eigen::Index j = 0; j < q_; ++j) {
      const int gap = std::abs(levels_.vintages[static_cast<std::size_t>(i)] -
                               levels_.vintages[static_cast<std::size_t>(j)]);
      R(i, j) = scale * std::pow(rho, gap);
    }
  return R;
}

double RemlProblem::deviance(ProcessKind kind, double eta, double rho) const {
  const auto dof = static_cast<double>(n_ - p_);
  if (eta <= 0.0)
    return dof * std::log(ymy_ / dof) + logdet_xtwx_ - logdet_w_ + dof;

  const Eigen::MatrixXd R = process_covariance(kind, rho);
  Eigen::LLT<Eigen::MatrixXd> rllt(R);
  const double logdet_r = logdet_llt(rllt);
  const Eigen::MatrixXd Rinv = rllt.solve(Eigen::MatrixXd::Identity(q_, q_));
  Eigen::LLT<Eigen::MatrixXd> allt(K_ + Rinv / eta);
  if (allt.info() != Eigen::Success)
    return std::numeric_limits<double>::quiet_NaN();
  const double ypy = ymy_ - b_.dot(allt.solve(b_));
  if (!(ypy > 0.0))
    return std::numeric_limits<double>::quiet_NaN();
  return dof * std::log(ypy / dof) + static_cast<double>(q_) * std::log(eta) + logdet_r +
         logdet_xtwx_ + logdet_llt(allt) - logdet_w_ + dof;
}

RemlProblem::Solution RemlProblem::solve(ProcessKind kind, double eta, double rho) const {
  Solution s;
  const auto dof = static_cast<double>(n_ - p_);
  if (eta <= 0.0) {
    s.random = Eigen::VectorXd::Zero(q_);
    s.smoother = Eigen::MatrixXd::Zero(q_, q_);
    s.sigma2_e = ymy_ / dof;
    s.prediction_variance = Eigen::VectorXd::Zero(q_);
  } else {
    const Eigen::MatrixXd R = process_covariance(kind, rho);
    const Eigen::MatrixXd Rinv = R.llt().solve(Eigen::MatrixXd::Identity(q_, q_));
    Eigen::LLT<Eigen::MatrixXd> allt(K_ + Rinv / eta);
    if (allt.info() != Eigen::Success)
      throw DomainError("penalized normal equations are not positive definite");
    s.random = allt.solve(b_);
    s.smoother = allt.solve(K_);
    s.sigma2_e = (ymy_ - b_.dot(s.random)) / dof;
    s.prediction_variance =
        s.sigma2_e * allt.solve(Eigen::MatrixXd::Identity(q_, q_)).diagonal();
  }
  s.fixed = xtwx_.solve(xtwy_ - xtwz_ * s.random);
  return s;
}

Eigen::VectorXd RemlProblem::fixed_vintage_effects() const {
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(K_);
  const auto& ev = es.eigenvalues();
  const double cutoff = 1e-10 * ev.cwiseAbs().maxCoeff();
  Eigen::VectorXd inv = Eigen::VectorXd::Zero(ev.size());
  for (Eigen::Index i = 0; i < ev.size(); ++i)
    if (ev(i) > cutoff)
      inv(i) = 1.0 / ev(i);
  return es.eigenvectors() * inv.asDiagonal() * (es.eigenvectors().transpose() * b_);
}

namespace {

Eigen::VectorXd full_layout(const Levels& lv, const MacroPanel* macro,
                            const Eigen::VectorXd& fixed, const Eigen::VectorXd& random) {
  const auto na = static_cast<Eigen::Index>(lv.ages.size());
  const auto nt = static_cast<Eigen::Index>(lv.times.size());
  Eigen::VectorXd beta = Eigen::VectorXd::Zero(lv.size());
  beta(0) = fixed(0);
  for (Eigen::Index i = 1; i < na; ++i)
    beta(lv.maturity_offset() + i) = fixed(i);
  if (macro) {
    const Eigen::VectorXd coef = fixed.tail(fixed.size() - na);
    for (Eigen::Index j = 0; j < nt; ++j) {
      const auto r = *macro->row_of(lv.times[static_cast<std::size_t>(j)]);
      beta(lv.exogenous_offset() + j) = macro->values.row(r).dot(coef);
    }
  } else {
    for (Eigen::Index j = 1; j < nt; ++j)
      beta(lv.exogenous_offset() + j) = fixed(na - 1 + j);
  }
  beta.segment(lv.vintage_offset(), random.size()) = random;
  return recenter(lv, beta);
}

} // namespace

RandomEffectsFit assemble_fit(const RemlProblem& prob, const ExogenousHandling& h,
                              ProcessKind kind, double eta, double rho,
                              const ResponseTransform& g) {
  const auto sol = prob.solve(kind, eta, rho);
  const Levels& lv = prob.levels_;
  const MacroPanel* macro = prob.macro_ ? &*h.macro : nullptr;

  RandomEffectsFit fit;
  fit.transform = g;
  fit.process = {kind, eta * sol.sigma2_e, kind == ProcessKind::ar1 ? rho : 0.0};
  fit.sigma2_e = sol.sigma2_e;
  fit.reml_deviance = prob.deviance(kind, eta, rho);
  fit.complete_shrinkage = eta <= 0.0;
  fit.raw_vintage = sol.random;
  fit.prediction_variance = sol.prediction_variance;

  const Eigen::VectorXd u_fixed = prob.fixed_vintage_effects();
  const Eigen::VectorXd beta_fixed =
      prob.xtwx_.solve(prob.xtwy_ - prob.xtwz_ * u_fixed);
  auto shrunk = Decomposition::from_packed(lv, full_layout(lv, macro, sol.fixed, sol.random));
  auto fixed = Decomposition::from_packed(lv, full_layout(lv, macro, beta_fixed, u_fixed));
  if (macro) {
    fit.covariate_names = prob.covariate_names_;
    fit.macro_coefficients = sol.fixed.tail(sol.fixed.size() - static_cast<Eigen::Index>(lv.ages.size()));
    const auto tag = ConstraintSpec::of_kind(ConstraintKind::covariate_identified);
    shrunk.constraint = tag;
    fixed.constraint = tag;
    fit.decomposition = std::move(shrunk);
    fit.fixed_effects = std::move(fixed);
  } else {
    fit.decomposition = apply_constraint(shrunk, *h.constraint);
    fit.fixed_effects = apply_constraint(fixed, *h.constraint);
    fit.decomposition.gamma_applied = 0.0;
    fit.fixed_effects.gamma_applied = 0.0;
  }

  // Row i of (K + Q / eta) u = b makes u_i a convex combination of the
  // fixed-effect estimate of vintage i given the others at their predictions
  // and the prior mean of V_i given its neighbours, with weight
  // K_ii / (K_ii + Q_ii / eta). Both are reported on the process scale.
  const Eigen::Index q = prob.q_;
  const Eigen::MatrixXd Q =
      prob.process_covariance(kind, rho).llt().solve(Eigen::MatrixXd::Identity(q, q));
  const Eigen::VectorXd& u = sol.random;
  fit.shrinkage.resize(static_cast<std::size_t>(q));
  for (Eigen::Index i = 0; i < q; ++i) {
    auto& e = fit.shrinkage[static_cast<std::size_t>(i)];
    const double kii = prob.K_(i, i);
    e.vintage = lv.vintages[static_cast<std::size_t>(i)];
    e.cells = prob.cells_[static_cast<std::size_t>(i)];
    e.fixed = kii > 0.0 ? (prob.b_(i) - prob.K_.row(i).dot(u) + kii * u(i)) / kii : 0.0;
    e.shrunk = u(i);
    e.prior_mean = -(Q.row(i).dot(u) - Q(i, i) * u(i)) / Q(i, i);
    e.factor = eta > 0.0 ? kii / (kii + Q(i, i) / eta) : 0.0;
    const double denom = std::abs(e.fixed - e.prior_mean);
    e.ratio = denom > 0.0 ? std::abs(e.shrunk - e.prior_mean) / denom : e.factor;
  }
  return fit;
}

namespace {

struct Optimum {
  double eta = 0.0;
  double rho = 0.0;
  double deviance = 0.0;
};

class Searcher {
public:
  Searcher(const RemlProblem& prob, ProcessKind kind, const RemlSearch& search)
      : prob_(prob), kind_(kind), search_(search) {}

  double eval(double log_eta, double rho) {
    const double d = prob_.deviance(kind_, std::exp(log_eta), rho);
    trace_.push_back({log_eta, rho, d});
    if (!std::isfinite(d))
      throw DomainError("REML criterion is not finite; evaluations:" + format_trace(trace_));
    return d;
  }

  // Best log eta at fixed rho: coarse grid, then golden section.
  std::pair<double, double> profile(double rho) {
    const int steps = 64;
    const double lo = search_.log_eta_min, hi = search_.log_eta_max;
    const double h = (hi - lo) / steps;
    int best = 0;
    double best_dev = std::numeric_limits<double>::infinity();
    for (int i = 0; i <= steps; ++i) {
      const double d = eval(lo + h * i, rho);
      if (d < best_dev) {
        best_dev = d;
        best = i;
      }
    }
    const double a = lo + h * std::max(0, best - 1);
    const double b = lo + h * std::min(steps, best + 1);
    double fmin = 0.0;
    const double x = golden_min([&](double le) { return eval(le, rho); }, a, b, 1e-7, fmin);
    if (fmin < best_dev)
      return {x, fmin};
    return {lo + h * best, best_dev};
  }

  Optimum run() {
    Optimum opt;
    if (kind_ == ProcessKind::iid_normal) {
      const auto [le, d] = profile(0.0);
      opt = {std::exp(le), 0.0, d};
    } else {
      const double rmax = 0.95;
      const int steps = static_cast<int>(std::lround(2 * rmax / search_.rho_step));
      const double h = 2 * rmax / steps;
      double best_rho = 0.0;
      double best_dev = std::numeric_limits<double>::infinity();
      for (int i = 0; i <= steps; ++i) {
        const double r = -rmax + h * i;
        const double d = profile(r).second;
        if (d < best_dev) {
          best_dev = d;
          best_rho = r;
        }
      }
      const double a = std::max(-rmax, best_rho - h);
      const double b = std::min(rmax, best_rho + h);
      double fmin = 0.0;
      const double r = golden_min([&](double rr) { return profile(rr).second; }, a, b, 1e-5, fmin);
      if (fmin > best_dev)
        opt.rho = best_rho;
      else
        opt.rho = r;
      const auto [le, d] = profile(opt.rho);
      opt.eta = std::exp(le);
      opt.deviance = d;
    }
    // The boundary sigma2_V = 0 is a legitimate optimum (complete shrinkage).
    const double d0 = prob_.deviance(kind_, 0.0, opt.rho);
    if (std::isfinite(d0) && d0 <= opt.deviance + 1e-9 &&
        std::log(opt.eta) <= search_.log_eta_min + 1.0) {
      opt.eta = 0.0;
      opt.deviance = d0;
    }
    return opt;
  }

private:
  const RemlProblem& prob_;
  ProcessKind kind_;
  RemlSearch search_;
  std::vector<TracePoint> trace_;
};

void require_random(ProcessKind kind) {
  if (kind == ProcessKind::fixed)
    throw DomainError("fixed vintage effects are fitted by the linear estimator, not REML");
}

} // namespace

RandomEffectsFit fit_random_effects(const PanelGrid& grid, const ResponseTransform& g,
                                    ProcessKind kind, const ExogenousHandling& handling,
                                    const RemlSearch& search) {
  require_random(kind);
  if (!(search.log_eta_min < search.log_eta_max) || !(search.rho_step > 0.0))
    throw InputError("invalid REML search range");
  RemlProblem prob(grid, g, handling);
  Searcher s(prob, kind, search);
  const auto opt = s.run();
  return assemble_fit(prob, handling, kind, opt.eta, opt.rho, g);
}

RandomEffectsFit penalized_fit(const PanelGrid& grid, const ResponseTransform& g,
                               ProcessKind kind, const ExogenousHandling& handling,
                               double variance_ratio, double rho) {
  require_random(kind);
  if (!(variance_ratio >= 0.0) || !std::isfinite(variance_ratio))
    throw InputError("variance ratio must be finite and nonnegative");
  RemlProblem prob(grid, g, handling);
  return assemble_fit(prob, handling, kind, variance_ratio, rho, g);
}

std::vector<VintagePrediction> predict_new_vintages(const RandomEffectsFit& fit, int horizon) {
  if (fit.process.kind == ProcessKind::fixed)
    throw DomainError("prediction requires a stochastic vintage process");
  if (horizon < 1)
    throw InputError("prediction horizon must be at least 1");
  const auto& lv = fit.decomposition.levels;
  const Eigen::VectorXd& u = fit.raw_vintage;
  const double ubar = u.mean();

  // The reported vintage block is the centered process plus a line in v
  // (zero for covariate handling); extend that line.
  std::vector<double> vs, gap;
  for (Eigen::Index i = 0; i < u.size(); ++i) {
    vs.push_back(lv.vintages[static_cast<std::size_t>(i)]);
    gap.push_back(fit.decomposition.vintage(i) - (u(i) - ubar));
  }
  const double slope = ols_slope(vs, gap);
  double vmean = 0.0, gmean = 0.0;
  for (std::size_t i = 0; i < vs.size(); ++i) {
    vmean += vs[i];
    gmean += gap[i];
  }
  vmean /= static_cast<double>(vs.size());
  gmean /= static_cast<double>(vs.size());

  const int last = lv.vintages.back();
  const double u_last = u(u.size() - 1);
  const double pv_last = fit.prediction_variance.size() ? fit.prediction_variance(u.size() - 1) : 0.0;
  const double s2 = fit.process.sigma2_V;
  const double rho = fit.process.kind == ProcessKind::ar1 ? fit.process.rho : 0.0;

  std::vector<VintagePrediction> out;
  for (int h = 1; h <= horizon; ++h) {
    const int v = last + h;
    const double rh = std::pow(rho, h);
    double var = 0.0;
    if (fit.process.kind == ProcessKind::ar1)
      var = s2 * (1.0 - rh * rh) / (1.0 - rho * rho) + rh * rh * pv_last;
    else
      var = s2;
    out.push_back({v, gmean + slope * (v - vmean) + rh * u_last - ubar, std::sqrt(var)});
  }
  return out;
}

} // namespace emv
