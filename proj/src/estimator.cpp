#include "emv/estimator.hpp"

#include "emv/csv.hpp"

#include <algorithm>
#include <cmath>

namespace emv {

namespace {

void check_alignment(const EmvDesign& design, const PanelGrid& grid) {
  const auto& cells = grid.cells();
  if (cells.size() != design.rows.size())
    throw DomainError("design/grid shape mismatch: " + std::to_string(design.rows.size()) +
                      " design rows vs " + std::to_string(cells.size()) + " observed cells");
  for (std::size_t i = 0; i < cells.size(); ++i)
    if (cells[i].age != design.rows[i].age || cells[i].time != design.rows[i].time)
      throw DomainError("design/grid shape mismatch at row " + std::to_string(i));
}

double weighted_r2(const Eigen::VectorXd& y, const Eigen::VectorXd& w, double rss) {
  const double ybar = w.dot(y) / w.sum();
  const double tss = (w.array() * (y.array() - ybar).square()).sum();
  if (tss <= 0.0)
    return rss <= 0.0 ? 1.0 : 0.0;
  return std::clamp(1.0 - rss / tss, 0.0, 1.0);
}

struct FamilyOps {
  GlmFamily family;

  double mean(double eta) const {
    switch (family) {
    case GlmFamily::gaussian_identity:
      return eta;
    case GlmFamily::poisson_log:
      return std::exp(std::min(eta, 700.0));
    case GlmFamily::binomial_logit:
      return 1.0 / (1.0 + std::exp(-eta));
    }
    return eta;
  }

  // d mu / d eta
  double mu_eta(double mu) const {
    switch (family) {
    case GlmFamily::gaussian_identity:
      return 1.0;
    case GlmFamily::poisson_log:
      return mu;
    case GlmFamily::binomial_logit:
      return mu * (1.0 - mu);
    }
    return 1.0;
  }

  double variance(double mu) const {
    switch (family) {
    case GlmFamily::gaussian_identity:
      return 1.0;
    case GlmFamily::poisson_log:
      return mu;
    case GlmFamily::binomial_logit:
      return mu * (1.0 - mu);
    }
    return 1.0;
  }

  // A fitted mean this close to the edge of its range means some
  // coefficient is running off to infinity even though the deviance has
  // settled.
  bool pinned(double y, double mu) const {
    switch (family) {
    case GlmFamily::gaussian_identity:
      return false;
    case GlmFamily::poisson_log:
      return y == 0.0 && mu < 1e-9;
    case GlmFamily::binomial_logit:
      return (y == 0.0 && mu < 1e-9) || (y == 1.0 && mu > 1.0 - 1e-9);
    }
    return false;
  }

  double link(double mu) const {
    switch (family) {
    case GlmFamily::gaussian_identity:
      return mu;
    case GlmFamily::poisson_log:
      return std::log(mu);
    case GlmFamily::binomial_logit:
      return std::log(mu / (1.0 - mu));
    }
    return mu;
  }

  static double ylogy(double y, double mu) { return y > 0.0 ? y * std::log(y / mu) : 0.0; }

  double unit_deviance(double y, double mu) const {
    switch (family) {
    case GlmFamily::gaussian_identity:
      return (y - mu) * (y - mu);
    case GlmFamily::poisson_log:
      return 2.0 * (ylogy(y, mu) - (y - mu));
    case GlmFamily::binomial_logit:
      return 2.0 * (ylogy(y, mu) + ylogy(1.0 - y, 1.0 - mu));
    }
    return 0.0;
  }

  double deviance(const Eigen::VectorXd& y, const Eigen::VectorXd& mu,
                  const Eigen::VectorXd& w) const {
    double d = 0.0;
    for (Eigen::Index i = 0; i < y.size(); ++i)
      d += w(i) * unit_deviance(y(i), mu(i));
    return d;
  }

  double initial_mean(double y, double w) const {
    switch (family) {
    case GlmFamily::gaussian_identity:
      return y;
    case GlmFamily::poisson_log:
      return y + 0.1;
    case GlmFamily::binomial_logit:
      return (w * y + 0.5) / (w + 1.0);
    }
    return y;
  }
};

} // namespace

MinNormSolution solve_min_norm(const Eigen::MatrixXd& X, const Eigen::VectorXd& y,
                               const Eigen::VectorXd& w) {
  const Eigen::VectorXd sw = w.array().sqrt();
  const Eigen::MatrixXd Xw = sw.asDiagonal() * X;
  const Eigen::VectorXd yw = sw.cwiseProduct(y);

  Eigen::BDCSVD<Eigen::MatrixXd> svd(Xw, Eigen::ComputeThinU | Eigen::ComputeThinV);
  const auto& sv = svd.singularValues();
  if (sv.size() == 0 || !(sv(0) > 0.0))
    throw DomainError("numerically zero design matrix");
  const double cutoff = 1e-10 * sv(0);
  Eigen::Index r = 0;
  while (r < sv.size() && sv(r) > cutoff)
    ++r;

  MinNormSolution out;
  out.rank = r;
  out.cov_factor = svd.matrixV().leftCols(r) * sv.head(r).cwiseInverse().asDiagonal();
  out.beta = out.cov_factor * (svd.matrixU().leftCols(r).transpose() * yw);
  return out;
}

Eigen::VectorXd predict_rows(const EmvDesign& design, const Eigen::VectorXd& beta) {
  if (beta.size() != design.X.cols())
    throw DomainError("parameter vector does not match the design layout");
  return design.X * beta;
}

FitResult fit_linear(const EmvDesign& design, const PanelGrid& grid, const ResponseTransform& g) {
  check_alignment(design, grid);
  const PanelGrid tg = transform_response(grid, g);
  const auto n = static_cast<Eigen::Index>(tg.observed_count());

  FitResult fit;
  fit.levels = design.levels;
  fit.transform = g;
  fit.response.resize(n);
  fit.weights.resize(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto& o = tg.cells()[static_cast<std::size_t>(i)];
    fit.response(i) = o.value;
    fit.weights(i) = o.weight;
  }

  auto sol = solve_min_norm(design.X, fit.response, fit.weights);
  fit.beta = std::move(sol.beta);
  fit.cov_factor = std::move(sol.cov_factor);
  fit.rank = sol.rank;
  fit.fitted = design.X * fit.beta;
  const Eigen::VectorXd resid = fit.response - fit.fitted;
  fit.residual_ss = (fit.weights.array() * resid.array().square()).sum();
  fit.r_squared = weighted_r2(fit.response, fit.weights, fit.residual_ss);
  fit.dof = n - fit.rank;
  fit.sigma2 = fit.dof > 0 ? fit.residual_ss / static_cast<double>(fit.dof) : 0.0;
  return fit;
}

IrlsResult irls(const Eigen::MatrixXd& X, const Eigen::VectorXd& y, const Eigen::VectorXd& w,
                const Eigen::VectorXd& offset, GlmFamily family) {
  const FamilyOps ops{family};
  const Eigen::Index n = X.rows();
  if (y.size() != n || w.size() != n || offset.size() != n)
    throw DomainError("response, weight and offset lengths must match the model matrix");

  Eigen::VectorXd mu(n), eta(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    mu(i) = ops.initial_mean(y(i), w(i));
    eta(i) = ops.link(mu(i));
  }
  double dev_old = ops.deviance(y, mu, w);

  IrlsResult res;
  Eigen::VectorXd z(n), ww(n);
  for (int iter = 1; iter <= 50; ++iter) {
    for (Eigen::Index i = 0; i < n; ++i) {
      const double d = ops.mu_eta(mu(i));
      z(i) = eta(i) - offset(i) + (y(i) - mu(i)) / d;
      ww(i) = w(i) * d * d / ops.variance(mu(i));
    }
    if (!ww.allFinite() || !z.allFinite())
      throw GlmError("IRLS produced non-finite working weights", res.deviance_trace);

    res.solution = solve_min_norm(X, z, ww);
    if (res.solution.beta.norm() > 1e6)
      throw GlmError("IRLS diverged (|beta| > 1e6): likely separation", res.deviance_trace);

    const Eigen::VectorXd eta_old = eta;
    eta = X * res.solution.beta + offset;
    for (Eigen::Index i = 0; i < n; ++i)
      mu(i) = ops.mean(eta(i));
    const double dev = ops.deviance(y, mu, w);
    res.deviance_trace.push_back(dev);
    res.iterations = iter;
    if (!std::isfinite(dev))
      throw GlmError("IRLS deviance is not finite", res.deviance_trace);
    // With very large counts the deviance carries roundoff well above the
    // relative tolerance, so a settled linear predictor also counts.
    const double step = (eta - eta_old).cwiseAbs().maxCoeff();
    if (std::abs(dev - dev_old) / (std::abs(dev) + 0.1) < 1e-10 ||
        step <= 1e-10 * (1.0 + eta_old.cwiseAbs().maxCoeff())) {
      for (Eigen::Index i = 0; i < n; ++i)
        if (ops.pinned(y(i), mu(i)))
          throw GlmError("IRLS fitted mean at the boundary for observation " +
                             std::to_string(i) + ": likely separation",
                         res.deviance_trace);
      res.eta = eta;
      res.deviance = dev;
      break;
    }
    dev_old = dev;
    if (iter == 50) {
      std::string trace;
      for (double d : res.deviance_trace)
        trace += (trace.empty() ? "" : ", ") + csv::format_double(d);
      throw GlmError("IRLS did not converge in 50 iterations; deviance trace: " + trace,
                     res.deviance_trace);
    }
  }

  // Null model: intercept plus offset.
  Eigen::VectorXd mu0(n);
  if (family == GlmFamily::poisson_log) {
    const double rate = w.dot(y) / w.dot(offset.array().exp().matrix());
    mu0 = rate * offset.array().exp();
  } else if (family == GlmFamily::gaussian_identity) {
    const double m = w.dot(y - offset) / w.sum();
    mu0 = offset.array() + m;
  } else {
    mu0.setConstant(w.dot(y) / w.sum());
    mu0 = mu0.cwiseMax(1e-300).cwiseMin(1.0 - 1e-16);
  }
  res.null_deviance = ops.deviance(y, mu0, w);
  return res;
}

FitResult fit_glm(const EmvDesign& design, const PanelGrid& grid, GlmFamily family,
                  const std::optional<Eigen::VectorXd>& offset) {
  check_alignment(design, grid);
  const auto n = static_cast<Eigen::Index>(grid.observed_count());

  FitResult fit;
  fit.levels = design.levels;
  fit.response.resize(n);
  fit.weights.resize(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto& o = grid.cells()[static_cast<std::size_t>(i)];
    if (family == GlmFamily::poisson_log && o.value < 0.0)
      throw DomainError("poisson counts must be nonnegative (age=" + std::to_string(o.age) +
                        ", time=" + std::to_string(o.time) + ")");
    if (family == GlmFamily::binomial_logit && (o.value < 0.0 || o.value > 1.0))
      throw DomainError("binomial successes exceed trials (age=" + std::to_string(o.age) +
                        ", time=" + std::to_string(o.time) + ")");
    fit.response(i) = o.value;
    fit.weights(i) = o.weight;
  }
  Eigen::VectorXd off = Eigen::VectorXd::Zero(n);
  if (offset) {
    if (offset->size() != n)
      throw DomainError("offset must have one entry per observed cell");
    off = *offset;
  }
  if (family == GlmFamily::poisson_log)
    fit.transform.kind = TransformKind::log;
  else if (family == GlmFamily::binomial_logit)
    fit.transform.kind = TransformKind::logit;

  auto res = irls(design.X, fit.response, fit.weights, off, family);
  fit.beta = res.solution.beta;
  fit.cov_factor = res.solution.cov_factor;
  fit.rank = res.solution.rank;
  fit.fitted = design.X * fit.beta;
  fit.residual_ss = res.deviance;
  fit.iterations = res.iterations;
  fit.dof = n - fit.rank;
  if (family == GlmFamily::gaussian_identity) {
    fit.r_squared = weighted_r2(fit.response, fit.weights, fit.residual_ss);
    fit.sigma2 = fit.dof > 0 ? fit.residual_ss / static_cast<double>(fit.dof) : 0.0;
  } else {
    fit.r_squared = res.null_deviance > 0.0
                        ? std::clamp(1.0 - res.deviance / res.null_deviance, 0.0, 1.0)
                        : 1.0;
    fit.sigma2 = 1.0;
  }
  return fit;
}

double estimable_se(const FitResult& fit, const Eigen::VectorXd& l) {
  if (l.size() != fit.beta.size())
    throw DomainError("contrast length does not match the parameter layout");
  const Eigen::MatrixXd basis = fit.cov_factor.colwise().normalized();
  const Eigen::VectorXd resid = l - basis * (basis.transpose() * l);
  if (resid.norm() > 1e-8 * std::max(1.0, l.norm()))
    throw DomainError("function not estimable: component along null direction");
  return std::sqrt(fit.sigma2) * (fit.cov_factor.transpose() * l).norm();
}

} // namespace emv
