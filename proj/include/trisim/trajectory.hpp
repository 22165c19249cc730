#ifndef TRISIM_TRAJECTORY_HPP
#define TRISIM_TRAJECTORY_HPP

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "trisim/error.hpp"

namespace trisim {

/// Uniformly sampled time series: row k holds the species values at
/// times[k] = k * sample_interval.
class Trajectory {
 public:
  Trajectory() = default;
  Trajectory(std::vector<std::string> species, double sample_interval)
      : species_(std::move(species)), interval_(sample_interval) {}

  const std::vector<std::string>& species_names() const noexcept { return species_; }
  double sample_interval() const noexcept { return interval_; }
  std::size_t n_species() const noexcept { return species_.size(); }
  std::size_t size() const noexcept { return times_.size(); }
  bool empty() const noexcept { return times_.empty(); }

  const std::vector<double>& times() const noexcept { return times_; }
  double time(std::size_t k) const { return times_[k]; }

  std::span<const double> row(std::size_t k) const {
    return {values_.data() + k * species_.size(), species_.size()};
  }
  double value(std::size_t k, std::size_t species) const { return values_[k * species_.size() + species]; }

  void append(double t, std::span<const double> row) {
    times_.push_back(t);
    values_.insert(values_.end(), row.begin(), row.end());
  }

  std::size_t species_index(const std::string& name) const {
    auto it = std::find(species_.begin(), species_.end(), name);
    if (it == species_.end()) throw ValidationError("unknown species '" + name + "'");
    return static_cast<std::size_t>(it - species_.begin());
  }

  std::vector<double> column(std::size_t species) const {
    std::vector<double> out(size());
    for (std::size_t k = 0; k < size(); ++k) out[k] = value(k, species);
    return out;
  }
  std::vector<double> column(const std::string& name) const { return column(species_index(name)); }

  friend bool operator==(const Trajectory&, const Trajectory&) = default;

 private:
  std::vector<std::string> species_;
  double interval_ = 0.0;
  std::vector<double> times_;
  std::vector<double> values_;
};

/// Number of grid points k * interval with k * interval <= horizon (k >= 0).
inline std::size_t grid_points(double horizon, double interval) {
  return static_cast<std::size_t>(std::floor(horizon / interval + 1e-9)) + 1;
}

}  // namespace trisim

#endif  // TRISIM_TRAJECTORY_HPP
