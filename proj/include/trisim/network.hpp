#ifndef TRISIM_NETWORK_HPP
#define TRISIM_NETWORK_HPP

#include <algorithm>
#include <cstddef>
#include <cstdint>
#include <set>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "trisim/expr.hpp"
#include "trisim/model.hpp"

namespace trisim {

/// For each channel (reactions in model order, then influxes), the channels
/// whose propensity may change when it fires, itself included.
struct DependencyGraph {
  std::vector<std::string> channel_names;
  std::vector<std::vector<std::size_t>> dependents;
};

namespace detail {

// Species a channel's propensity depends on: the rate's species plus the
// consumed species (feasibility of firing).
inline std::set<std::string> channel_reads(const ModelSpec& m, const Reaction& r) {
  std::set<std::string> reads;
  for (const auto& s : free_symbols(r.rate))
    if (m.find_species(s)) reads.insert(s);
  for (const auto& t : r.consumed) reads.insert(t.species);
  return reads;
}

inline std::set<std::string> channel_changes(const Reaction& r) {
  std::set<std::string> changed;
  for (const auto* side : {&r.consumed, &r.produced})
    for (const auto& t : *side)
      if (r.net_change(t.species) != 0) changed.insert(t.species);
  return changed;
}

}  // namespace detail

inline DependencyGraph build_dependency_graph(const ModelSpec& m) {
  const std::size_t nr = m.reactions.size();
  const std::size_t nc = nr + m.influxes.size();
  std::vector<std::set<std::string>> reads(nc), changes(nc);
  DependencyGraph g;
  for (std::size_t i = 0; i < nr; ++i) {
    reads[i] = detail::channel_reads(m, m.reactions[i]);
    changes[i] = detail::channel_changes(m.reactions[i]);
    g.channel_names.push_back(m.reactions[i].name);
  }
  for (std::size_t i = 0; i < m.influxes.size(); ++i) {
    changes[nr + i] = {m.influxes[i].species};
    g.channel_names.push_back("influx_" + m.influxes[i].species);
  }
  g.dependents.resize(nc);
  for (std::size_t i = 0; i < nc; ++i) {
    g.dependents[i].push_back(i);
    for (std::size_t j = 0; j < nc; ++j) {
      if (j == i) continue;
      const bool hit = std::any_of(changes[i].begin(), changes[i].end(),
                                   [&](const std::string& s) { return reads[j].count(s) > 0; });
      if (hit) g.dependents[i].push_back(j);
    }
  }
  return g;
}

/// Index-based form of a ModelSpec used by the engines' inner loops.
class CompiledNetwork {
 public:
  struct Channel {
    std::string name;
    CompiledExpr rate;
    std::vector<std::pair<std::size_t, double>> requires_;  // (species, copies needed)
    std::vector<std::pair<std::size_t, double>> delta;      // net change per species
  };

  explicit CompiledNetwork(const ModelSpec& m) : n_species_(m.species.size()), graph_(build_dependency_graph(m)) {
    const auto slots = m.species_slots();
    const Bindings params = m.param_bindings();
    for (const auto& r : m.reactions) {
      Channel c;
      c.name = r.name;
      c.rate = CompiledExpr(r.rate, slots, params);
      for (const auto& t : r.consumed) c.requires_.emplace_back(m.species_index(t.species), t.count);
      std::set<std::string> touched;
      for (const auto* side : {&r.consumed, &r.produced})
        for (const auto& t : *side) touched.insert(t.species);
      for (const auto& s : touched)
        if (const int net = r.net_change(s); net != 0) c.delta.emplace_back(m.species_index(s), net);
      channels_.push_back(std::move(c));
      const auto reads = detail::channel_reads(m, r);
      const auto changes = detail::channel_changes(r);
      self_dependent_.push_back(std::any_of(changes.begin(), changes.end(),
                                            [&](const std::string& s) { return reads.count(s) > 0; }));
    }
    n_reactions_ = channels_.size();
    for (const auto& f : m.influxes) {
      Channel c;
      c.name = "influx_" + f.species;
      c.rate = CompiledExpr(f.rate, slots, params);
      c.delta.emplace_back(m.species_index(f.species), 1.0);
      channels_.push_back(std::move(c));
      self_dependent_.push_back(free_symbols(f.rate).count(f.species) > 0);
    }
    req_off_.push_back(0);
    delta_off_.push_back(0);
    for (const auto& c : channels_) {
      rates_.push_back(c.rate);
      for (const auto& [sp, need] : c.requires_) req_.push_back({static_cast<std::uint32_t>(sp), need});
      for (const auto& [sp, d] : c.delta) delta_.push_back({static_cast<std::uint32_t>(sp), d});
      req_off_.push_back(static_cast<std::uint32_t>(req_.size()));
      delta_off_.push_back(static_cast<std::uint32_t>(delta_.size()));
    }
  }

  std::size_t n_species() const noexcept { return n_species_; }
  std::size_t n_channels() const noexcept { return channels_.size(); }
  std::size_t n_reactions() const noexcept { return n_reactions_; }
  const Channel& channel(std::size_t i) const { return channels_[i]; }
  const DependencyGraph& graph() const noexcept { return graph_; }
  /// Whether firing channel i can change its own propensity.
  bool self_dependent(std::size_t i) const { return self_dependent_[i]; }

  /// Signed rate law (no clamping, no feasibility check).
  double rate(std::size_t i, std::span<const double> state) const { return rates_[i](state); }

  bool feasible(std::size_t i, std::span<const double> state) const {
    for (std::uint32_t k = req_off_[i]; k < req_off_[i + 1]; ++k)
      if (state[req_[k].species] < req_[k].amount) return false;
    return true;
  }

  /// Stochastic propensity: zero when the channel cannot fire, else max(0, rate).
  double propensity(std::size_t i, std::span<const double> state) const {
    if (!feasible(i, state)) return 0.0;
    const double a = rates_[i](state);
    return a > 0.0 ? a : 0.0;
  }

  void fire(std::size_t i, std::span<double> state) const {
    for (std::uint32_t k = delta_off_[i]; k < delta_off_[i + 1]; ++k) state[delta_[k].species] += delta_[k].amount;
  }

 private:
  std::size_t n_species_;
  std::size_t n_reactions_ = 0;
  struct Term {
    std::uint32_t species;
    double amount;
  };

  std::vector<Channel> channels_;
  std::vector<bool> self_dependent_;
  std::vector<CompiledExpr> rates_;
  std::vector<Term> req_, delta_;
  std::vector<std::uint32_t> req_off_, delta_off_;
  DependencyGraph graph_;
};

}  // namespace trisim

#endif  // TRISIM_NETWORK_HPP
