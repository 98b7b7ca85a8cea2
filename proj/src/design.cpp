#include "emv/design.hpp"

#include "emv/csv.hpp"
#include "emv/error.hpp"

#include <algorithm>
#include <numeric>
#include <set>

namespace emv {

namespace {

std::optional<Eigen::Index> find_level(const std::vector<int>& levels, int x,
                                       Eigen::Index offset) {
  auto it = std::lower_bound(levels.begin(), levels.end(), x);
  if (it == levels.end() || *it != x)
    return std::nullopt;
  return offset + static_cast<Eigen::Index>(it - levels.begin());
}

double mean_of(const std::vector<int>& xs) {
  if (xs.empty())
    return 0.0;
  return std::accumulate(xs.begin(), xs.end(), 0.0) / static_cast<double>(xs.size());
}

Centering centering_of(const Levels& levels) {
  return {mean_of(levels.ages), mean_of(levels.times), mean_of(levels.vintages)};
}

} // namespace

std::optional<Eigen::Index> Levels::age_column(int a) const {
  return find_level(ages, a, maturity_offset());
}
std::optional<Eigen::Index> Levels::time_column(int t) const {
  return find_level(times, t, exogenous_offset());
}
std::optional<Eigen::Index> Levels::vintage_column(int v) const {
  return find_level(vintages, v, vintage_offset());
}

Levels levels_of(const PanelGrid& grid) {
  std::set<int> ages, times, vintages;
  for (const auto& o : grid.cells()) {
    ages.insert(o.age);
    times.insert(o.time);
    vintages.insert(vintage_of(o.age, o.time));
  }
  return {{ages.begin(), ages.end()},
          {times.begin(), times.end()},
          {vintages.begin(), vintages.end()}};
}

Eigen::VectorXd null_vector_for(const Levels& levels) {
  const auto m = centering_of(levels);
  Eigen::VectorXd c = Eigen::VectorXd::Zero(levels.size());
  c(0) = m.age_mean + m.vintage_mean - m.time_mean;
  auto off = levels.maturity_offset();
  for (std::size_t i = 0; i < levels.ages.size(); ++i)
    c(off + static_cast<Eigen::Index>(i)) = levels.ages[i] - m.age_mean;
  off = levels.exogenous_offset();
  for (std::size_t i = 0; i < levels.times.size(); ++i)
    c(off + static_cast<Eigen::Index>(i)) = -(levels.times[i] - m.time_mean);
  off = levels.vintage_offset();
  for (std::size_t i = 0; i < levels.vintages.size(); ++i)
    c(off + static_cast<Eigen::Index>(i)) = levels.vintages[i] - m.vintage_mean;
  return c;
}

Eigen::MatrixXd alias_directions(const Levels& levels) {
  Eigen::MatrixXd n = Eigen::MatrixXd::Zero(levels.size(), 3);
  n.row(0).setOnes();
  const auto na = static_cast<Eigen::Index>(levels.ages.size());
  const auto nt = static_cast<Eigen::Index>(levels.times.size());
  const auto nv = static_cast<Eigen::Index>(levels.vintages.size());
  n.col(0).segment(levels.maturity_offset(), na).setConstant(-1.0);
  n.col(1).segment(levels.exogenous_offset(), nt).setConstant(-1.0);
  n.col(2).segment(levels.vintage_offset(), nv).setConstant(-1.0);
  return n;
}

Eigen::VectorXd recenter(const Levels& levels, const Eigen::VectorXd& beta) {
  if (beta.size() != levels.size())
    throw DomainError("parameter vector does not match the level layout");
  Eigen::VectorXd out = beta;
  auto shift_block = [&](Eigen::Index off, std::size_t n) {
    if (n == 0)
      return;
    auto block = out.segment(off, static_cast<Eigen::Index>(n));
    double m = block.mean();
    block.array() -= m;
    out(0) += m;
  };
  shift_block(levels.maturity_offset(), levels.ages.size());
  shift_block(levels.exogenous_offset(), levels.times.size());
  shift_block(levels.vintage_offset(), levels.vintages.size());
  return out;
}

EmvDesign build_design(const PanelGrid& grid) {
  if (grid.observed_count() < 4)
    throw DomainError("insufficient data for EMV decomposition");

  EmvDesign d;
  d.levels = levels_of(grid);
  d.rows = grid.cells();
  d.centering = centering_of(d.levels);

  const auto n = static_cast<Eigen::Index>(d.rows.size());
  const auto p = d.levels.size();
  d.X = Eigen::MatrixXd::Zero(n, p);
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto& o = d.rows[static_cast<std::size_t>(i)];
    d.X(i, 0) = 1.0;
    d.X(i, *d.levels.age_column(o.age)) = 1.0;
    d.X(i, *d.levels.time_column(o.time)) = 1.0;
    d.X(i, *d.levels.vintage_column(vintage_of(o.age, o.time))) = 1.0;
  }
  d.c = null_vector_for(d.levels);

  Eigen::BDCSVD<Eigen::MatrixXd> svd(d.X, Eigen::ComputeFullV);
  const auto& sv = svd.singularValues();
  const double cutoff = 1e-8 * sv(0);
  d.rank = 0;
  for (Eigen::Index i = 0; i < sv.size(); ++i)
    if (sv(i) > cutoff)
      ++d.rank;

  const Eigen::Index nullity = p - d.rank;
  Eigen::MatrixXd structural(p, 4);
  structural << alias_directions(d.levels), d.c;
  Eigen::ColPivHouseholderQR<Eigen::MatrixXd> sqr(structural);
  sqr.setThreshold(1e-10);
  const Eigen::Index structural_rank = sqr.rank();
  if (nullity > structural_rank) {
    Eigen::MatrixXd q = sqr.householderQ() * Eigen::MatrixXd::Identity(p, structural_rank);
    Eigen::MatrixXd null_basis = svd.matrixV().rightCols(nullity);
    Eigen::MatrixXd residual = null_basis - q * (q.transpose() * null_basis);
    Eigen::JacobiSVD<Eigen::MatrixXd> rsvd(residual, Eigen::ComputeThinU);
    d.extra_null_directions = rsvd.matrixU().leftCols(nullity - structural_rank);
  } else {
    d.extra_null_directions.resize(p, 0);
  }

  null_vector(d);
  return d;
}

Eigen::VectorXd null_vector(const EmvDesign& design) {
  const double scale = design.X.cwiseAbs().maxCoeff();
  const double err = (design.X * design.c).cwiseAbs().maxCoeff();
  if (err > 1e-10 * scale)
    throw ConsistencyError("null vector check failed: |Xc|_inf = " + csv::format_double(err));
  return design.c;
}

std::string design_to_csv(const EmvDesign& design) {
  std::string out = "age,time,intercept";
  for (int a : design.levels.ages)
    out += ",M" + std::to_string(a);
  for (int t : design.levels.times)
    out += ",E" + std::to_string(t);
  for (int v : design.levels.vintages)
    out += ",V" + std::to_string(v);
  out += '\n';
  for (Eigen::Index i = 0; i < design.X.rows(); ++i) {
    const auto& o = design.rows[static_cast<std::size_t>(i)];
    out += std::to_string(o.age) + ',' + std::to_string(o.time);
    for (Eigen::Index j = 0; j < design.X.cols(); ++j) {
      out += ',';
      out += csv::format_double(design.X(i, j));
    }
    out += '\n';
  }
  return out;
}

} // namespace emv
