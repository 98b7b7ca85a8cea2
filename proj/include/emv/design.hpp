#pragma once

#include "emv/panel.hpp"

#include <Eigen/Dense>

#include <optional>
#include <string>
#include <vector>

namespace emv {

/// Observed factor levels and the parameter layout built on them:
/// [intercept | maturity (one per age) | exogenous (one per time) |
///  vintage (one per vintage)].
struct Levels {
  std::vector<int> ages;
  std::vector<int> times;
  std::vector<int> vintages;

  Eigen::Index size() const noexcept {
    return 1 + static_cast<Eigen::Index>(ages.size() + times.size() + vintages.size());
  }
  Eigen::Index maturity_offset() const noexcept { return 1; }
  Eigen::Index exogenous_offset() const noexcept {
    return 1 + static_cast<Eigen::Index>(ages.size());
  }
  Eigen::Index vintage_offset() const noexcept {
    return 1 + static_cast<Eigen::Index>(ages.size() + times.size());
  }

  std::optional<Eigen::Index> age_column(int a) const;
  std::optional<Eigen::Index> time_column(int t) const;
  std::optional<Eigen::Index> vintage_column(int v) const;

  bool operator==(const Levels&) const = default;
};

struct Centering {
  double age_mean = 0.0;
  double time_mean = 0.0;
  double vintage_mean = 0.0;
};

/// Model matrix of the additive maturity/exogenous/vintage specification,
/// with its structural null direction.
struct EmvDesign {
  Levels levels;
  std::vector<Observation> rows; // source cell of each row of X
  Eigen::MatrixXd X;
  Eigen::VectorXd c;
  Centering centering;
  Eigen::Index rank = 0;
  /// Null directions of X beyond the three intercept aliases and c; only
  /// non-empty when missingness disconnects the layout.
  Eigen::MatrixXd extra_null_directions;
};

/// Raises DomainError("insufficient data for EMV decomposition") below four
/// observed cells.
EmvDesign build_design(const PanelGrid& grid);

Levels levels_of(const PanelGrid& grid);

/// Null direction for a layout:
///   (abar + vbar - tbar; a - abar; -(t - tbar); v - vbar)
/// Each effect block sums to zero. The intercept entry vanishes whenever the
/// level means satisfy vbar = tbar - abar (e.g. complete rectangles).
Eigen::VectorXd null_vector_for(const Levels& levels);

/// The design's null vector, checked numerically against X. Throws
/// ConsistencyError if |Xc|_inf exceeds 1e-10 |X|_inf.
Eigen::VectorXd null_vector(const EmvDesign& design);

/// The three intercept/factor alias directions (one per effect block).
Eigen::MatrixXd alias_directions(const Levels& levels);

/// Map an arbitrary parameter vector to the equivalent one whose effect
/// blocks each sum to zero; block means move into the intercept.
Eigen::VectorXd recenter(const Levels& levels, const Eigen::VectorXd& beta);

/// Dense CSV dump of X with named columns, for external checking.
std::string design_to_csv(const EmvDesign& design);

} // namespace emv
