#pragma once

#include "emv/design.hpp"
#include "emv/error.hpp"
#include "emv/panel.hpp"

#include <Eigen/Dense>

#include <optional>
#include <vector>

namespace emv {

/// Minimum-norm least-squares fit of the additive model.
struct FitResult {
  Levels levels;
  ResponseTransform transform;
  Eigen::VectorXd beta;     // minimum-norm solution in the design layout
  Eigen::VectorXd fitted;   // linear predictor per design row
  Eigen::VectorXd response; // transformed response per design row
  Eigen::VectorXd weights;  // prior weights per design row
  double residual_ss = 0.0; // weighted; deviance for GLM fits
  double r_squared = 0.0;
  Eigen::Index rank = 0;
  Eigen::Index dof = 0; // residual degrees of freedom, n - rank
  double sigma2 = 0.0;  // dispersion; fixed at 1 for poisson/binomial
  /// F with Cov(beta_hat) = sigma2 * F F^T (F = V_r S_r^{-1}); its columns
  /// span the row space of X.
  Eigen::MatrixXd cov_factor;
  int iterations = 1;
};

/// Weighted minimum-norm solve of min ||W^{1/2}(y - X b)||. Singular values
/// below 1e-10 sigma_max are discarded.
struct MinNormSolution {
  Eigen::VectorXd beta;
  Eigen::MatrixXd cov_factor;
  Eigen::Index rank = 0;
};
MinNormSolution solve_min_norm(const Eigen::MatrixXd& X, const Eigen::VectorXd& y,
                               const Eigen::VectorXd& w);

/// Least squares on g(Y) with the grid's weights.
FitResult fit_linear(const EmvDesign& design, const PanelGrid& grid,
                     const ResponseTransform& g = {});

enum class GlmFamily { gaussian_identity, poisson_log, binomial_logit };

/// IRLS failure; `deviance_trace` holds the deviance after each iteration.
class GlmError : public DomainError {
public:
  GlmError(const std::string& what, std::vector<double> trace)
      : DomainError(what), deviance_trace(std::move(trace)) {}
  std::vector<double> deviance_trace;
};

struct IrlsResult {
  MinNormSolution solution;
  Eigen::VectorXd eta;
  double deviance = 0.0;
  double null_deviance = 0.0;
  int iterations = 0;
  std::vector<double> deviance_trace;
};

/// Iteratively reweighted least squares on an arbitrary model matrix.
/// poisson: y are counts, w prior weights. binomial: y are proportions in
/// [0, 1], w the number of trials. Converges when the relative deviance
/// change drops below 1e-10; gives up after 50 iterations.
IrlsResult irls(const Eigen::MatrixXd& X, const Eigen::VectorXd& y, const Eigen::VectorXd& w,
                const Eigen::VectorXd& offset, GlmFamily family);

/// GLM fit of the additive model. The grid holds raw responses (counts for
/// poisson, proportions for binomial with trial counts as weights). The
/// offset, when given, has one entry per observed cell in grid order.
FitResult fit_glm(const EmvDesign& design, const PanelGrid& grid, GlmFamily family,
                  const std::optional<Eigen::VectorXd>& offset = std::nullopt);

/// Standard error of l^T beta_hat. Throws DomainError("function not
/// estimable: component along null direction") unless l lies in the row
/// space of X (tolerance 1e-8 relative).
double estimable_se(const FitResult& fit, const Eigen::VectorXd& l);

/// Predictor for every design row from any parameter vector in the layout.
Eigen::VectorXd predict_rows(const EmvDesign& design, const Eigen::VectorXd& beta);

} // namespace emv
