#pragma once

#include <cstddef>
#include <istream>
#include <string>
#include <vector>

namespace emv {

/// Vintage (origination period) of a cell observed at age `a` and time `t`.
/// Vintages that originated before the first observed period are <= 0.
constexpr int vintage_of(int a, int t) noexcept { return t - a; }

struct Observation {
  int age = 0;
  int time = 1;
  double value = 0.0;
  double weight = 1.0;
};

/// Age x time array of a vintage-aggregated response.
///
/// Ages run 0..max_age (rows), times 1..max_time (columns). Any cell may be
/// missing; the usual shape has the bottom-left triangle missing because the
/// oldest ages are only reached late in the observation window. The grid is
/// immutable once built.
class PanelGrid {
public:
  PanelGrid() = default;

  /// Build from long-format observations. Rejects duplicates, negative ages,
  /// times < 1, non-finite values and non-positive weights.
  static PanelGrid from_observations(const std::vector<Observation>& obs);

  int max_age() const noexcept { return max_age_; }
  int max_time() const noexcept { return max_time_; }

  bool observed(int a, int t) const;
  double value(int a, int t) const;
  double weight(int a, int t) const;

  std::size_t observed_count() const noexcept { return cells_.size(); }

  /// Observed cells ordered by age, then time.
  const std::vector<Observation>& cells() const noexcept { return cells_; }

  bool operator==(const PanelGrid& other) const;

private:
  std::size_t index(int a, int t) const;

  int max_age_ = -1;
  int max_time_ = 0;
  std::vector<double> values_;
  std::vector<double> weights_;
  std::vector<char> mask_;
  std::vector<Observation> cells_;
};

enum class TransformKind { identity, log, logit };

struct ResponseTransform {
  TransformKind kind = TransformKind::identity;
  double epsilon = 1e-9;

  double apply(double y) const;
  double inverse(double theta) const;
};

std::string to_string(TransformKind kind);
TransformKind transform_from_string(const std::string& name);

/// Cellwise g(clip(y)); mask and weights are carried over unchanged.
PanelGrid transform_response(const PanelGrid& grid, const ResponseTransform& g);

/// Parse long-format CSV with header `age,time,value[,weight]`.
PanelGrid load_panel(std::istream& in);
PanelGrid load_panel_file(const std::string& path);
PanelGrid load_panel_text(const std::string& text);

/// Long-format CSV; values written in shortest round-trip form so that
/// reloading reproduces the grid bit for bit.
std::string panel_to_csv(const PanelGrid& grid);

} // namespace emv
