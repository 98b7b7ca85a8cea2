#include "emv/panel.hpp"

#include "emv/csv.hpp"
#include "emv/error.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

namespace emv {

namespace {

std::string cell_name(int a, int t) {
  return "(age=" + std::to_string(a) + ", time=" + std::to_string(t) + ")";
}

} // namespace

PanelGrid PanelGrid::from_observations(const std::vector<Observation>& obs) {
  if (obs.empty())
    throw InputError("no observations");

  PanelGrid grid;
  for (const auto& o : obs) {
    if (o.age < 0)
      throw InputError("negative age at " + cell_name(o.age, o.time));
    if (o.time < 1)
      throw InputError("time must be >= 1 at " + cell_name(o.age, o.time));
    if (!std::isfinite(o.value))
      throw InputError("non-finite value at " + cell_name(o.age, o.time));
    if (!std::isfinite(o.weight) || o.weight <= 0.0)
      throw InputError("weight must be positive at " + cell_name(o.age, o.time));
    grid.max_age_ = std::max(grid.max_age_, o.age);
    grid.max_time_ = std::max(grid.max_time_, o.time);
  }

  const auto n = static_cast<std::size_t>(grid.max_age_ + 1) *
                 static_cast<std::size_t>(grid.max_time_);
  grid.values_.assign(n, 0.0);
  grid.weights_.assign(n, 0.0);
  grid.mask_.assign(n, 0);
  for (const auto& o : obs) {
    auto i = grid.index(o.age, o.time);
    if (grid.mask_[i])
      throw InputError("duplicate cell " + cell_name(o.age, o.time));
    grid.mask_[i] = 1;
    grid.values_[i] = o.value;
    grid.weights_[i] = o.weight;
  }

  grid.cells_.reserve(obs.size());
  for (int a = 0; a <= grid.max_age_; ++a)
    for (int t = 1; t <= grid.max_time_; ++t) {
      auto i = grid.index(a, t);
      if (grid.mask_[i])
        grid.cells_.push_back({a, t, grid.values_[i], grid.weights_[i]});
    }
  return grid;
}

std::size_t PanelGrid::index(int a, int t) const {
  return static_cast<std::size_t>(a) * static_cast<std::size_t>(max_time_) +
         static_cast<std::size_t>(t - 1);
}

bool PanelGrid::observed(int a, int t) const {
  if (a < 0 || a > max_age_ || t < 1 || t > max_time_)
    return false;
  return mask_[index(a, t)] != 0;
}

double PanelGrid::value(int a, int t) const {
  if (!observed(a, t))
    throw DomainError("cell " + cell_name(a, t) + " is not observed");
  return values_[index(a, t)];
}

double PanelGrid::weight(int a, int t) const {
  if (!observed(a, t))
    throw DomainError("cell " + cell_name(a, t) + " is not observed");
  return weights_[index(a, t)];
}

bool PanelGrid::operator==(const PanelGrid& other) const {
  if (max_age_ != other.max_age_ || max_time_ != other.max_time_ ||
      cells_.size() != other.cells_.size())
    return false;
  for (std::size_t i = 0; i < cells_.size(); ++i) {
    const auto& x = cells_[i];
    const auto& y = other.cells_[i];
    if (x.age != y.age || x.time != y.time || x.value != y.value || x.weight != y.weight)
      return false;
  }
  return true;
}

double ResponseTransform::apply(double y) const {
  switch (kind) {
  case TransformKind::identity:
    return y;
  case TransformKind::log:
    return std::log(std::max(y, epsilon));
  case TransformKind::logit: {
    double p = std::clamp(y, epsilon, 1.0 - epsilon);
    return std::log(p / (1.0 - p));
  }
  }
  return y;
}

double ResponseTransform::inverse(double theta) const {
  switch (kind) {
  case TransformKind::identity:
    return theta;
  case TransformKind::log:
    return std::exp(theta);
  case TransformKind::logit:
    return 1.0 / (1.0 + std::exp(-theta));
  }
  return theta;
}

std::string to_string(TransformKind kind) {
  switch (kind) {
  case TransformKind::identity:
    return "identity";
  case TransformKind::log:
    return "log";
  case TransformKind::logit:
    return "logit";
  }
  return "identity";
}

TransformKind transform_from_string(const std::string& name) {
  if (name == "identity")
    return TransformKind::identity;
  if (name == "log")
    return TransformKind::log;
  if (name == "logit")
    return TransformKind::logit;
  throw InputError("unknown response transform '" + name + "'");
}

PanelGrid transform_response(const PanelGrid& grid, const ResponseTransform& g) {
  if (g.kind == TransformKind::identity)
    return grid;
  if (!(g.epsilon > 0.0) || g.epsilon >= 0.5)
    throw DomainError("transform epsilon must lie in (0, 0.5)");

  std::vector<Observation> out;
  out.reserve(grid.observed_count());
  for (auto o : grid.cells()) {
    bool ok = g.kind == TransformKind::log
                  ? o.value > -g.epsilon
                  : (o.value > -g.epsilon && o.value < 1.0 + g.epsilon);
    if (!ok)
      throw DomainError("value " + csv::format_double(o.value) + " at " +
                        cell_name(o.age, o.time) + " is outside the domain of the " +
                        to_string(g.kind) + " transform");
    o.value = g.apply(o.value);
    out.push_back(o);
  }
  return PanelGrid::from_observations(out);
}

PanelGrid load_panel(std::istream& in) {
  auto table = csv::read(in);
  if (table.header.empty())
    throw InputError("no observations");

  auto age_col = table.column("age");
  auto time_col = table.column("time");
  auto value_col = table.column("value");
  auto weight_col = table.column("weight");
  if (!age_col || !time_col || !value_col)
    throw InputError("panel header must be age,time,value[,weight]");
  for (const auto& name : table.header)
    if (name != "age" && name != "time" && name != "value" && name != "weight")
      throw InputError("unexpected panel column '" + name + "'");

  std::vector<Observation> obs;
  obs.reserve(table.rows.size());
  for (std::size_t r = 0; r < table.rows.size(); ++r) {
    const auto& row = table.rows[r];
    const auto line = std::to_string(table.lines[r]);
    if (row.size() != table.header.size())
      throw InputError("line " + line + ": expected " + std::to_string(table.header.size()) +
                       " fields, found " + std::to_string(row.size()));
    auto age = csv::parse_int(row[*age_col]);
    auto time = csv::parse_int(row[*time_col]);
    if (!age || !time)
      throw InputError("line " + line + ": age and time must be integers");
    auto value = csv::parse_double(row[*value_col]);
    if (!value)
      throw InputError("line " + line + ": non-numeric value '" + row[*value_col] + "'");
    double weight = 1.0;
    if (weight_col) {
      auto w = csv::parse_double(row[*weight_col]);
      if (!w)
        throw InputError("line " + line + ": non-numeric weight '" + row[*weight_col] + "'");
      weight = *w;
    }
    obs.push_back({static_cast<int>(*age), static_cast<int>(*time), *value, weight});
  }
  return PanelGrid::from_observations(obs);
}

PanelGrid load_panel_file(const std::string& path) {
  std::ifstream in(path);
  if (!in)
    throw InputError("cannot open panel file '" + path + "'");
  return load_panel(in);
}

PanelGrid load_panel_text(const std::string& text) {
  std::istringstream in(text);
  return load_panel(in);
}

std::string panel_to_csv(const PanelGrid& grid) {
  std::string out = "age,time,value,weight\n";
  for (const auto& o : grid.cells()) {
    out += std::to_string(o.age);
    out += ',';
    out += std::to_string(o.time);
    out += ',';
    out += csv::format_double(o.value);
    out += ',';
    out += csv::format_double(o.weight);
    out += '\n';
  }
  return out;
}

} // namespace emv
