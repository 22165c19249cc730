#ifndef TRISIM_ABM_HPP
#define TRISIM_ABM_HPP

// Discrete-time agent-based runtime. Agents are statechart instances whose
// rate-triggered transitions read only aggregate population counts
// ("TotalTumour", ...) and parameters. Within one step every rate is read
// from the step's starting snapshot, each agent fires each enabled
// transition at most once with probability 1 - exp(-rate * dt), and kill
// messages remove uniformly chosen living targets.
//
// Agents in the same class and state are exchangeable, so the engine stores
// counts per (class, state) and draws the number of agents firing each
// transition as a binomial count. This has the same law as looping over
// agents one by one.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "trisim/error.hpp"
#include "trisim/expr.hpp"
#include "trisim/rng.hpp"
#include "trisim/trajectory.hpp"

namespace trisim {

enum class EffectKind { die, clone, spawn, send_kill };

struct Effect {
  EffectKind kind = EffectKind::die;
  std::string target;  // spawn / send_kill: target class
  int count = 1;

  static Effect die() { return {EffectKind::die, {}, 1}; }
  static Effect clone() { return {EffectKind::clone, {}, 1}; }
  static Effect spawn(std::string cls, int n = 1) { return {EffectKind::spawn, std::move(cls), n}; }
  static Effect send_kill(std::string cls) { return {EffectKind::send_kill, std::move(cls), 1}; }
};

/// Rate-triggered transition. When on_negative is set this is a branch
/// transition: |rate| is the intensity and the sign picks `effect` (rate > 0)
/// or `*on_negative` (rate < 0).
struct AbmTransition {
  std::string name;
  std::string from_state;
  Expr rate;
  Effect effect;
  std::optional<Effect> on_negative;

  bool is_branch() const noexcept { return on_negative.has_value(); }
};

struct AgentClass {
  std::string name;
  std::string species;       // column name in trajectories
  std::string total_symbol;  // aggregate count symbol usable in rates
  std::vector<std::string> states;
  std::string initial_state;
  std::optional<std::string> terminal_state;
  std::vector<AbmTransition> transitions;

  std::size_t state_index(const std::string& s) const {
    auto it = std::find(states.begin(), states.end(), s);
    if (it == states.end()) throw ValidationError("class '" + name + "' has no state '" + s + "'");
    return static_cast<std::size_t>(it - states.begin());
  }
  bool is_terminal(std::size_t state) const { return terminal_state && states[state] == *terminal_state; }
};

struct AbmInflux {
  std::string agent_class;
  Expr rate;
};

struct AbmConfig {
  double dt = 0.1;
  double horizon = 100.0;
  std::uint64_t seed = 0;
};

struct AbmDiagnostics {
  std::uint64_t clamped_negative_rates = 0;  // non-branch rates evaluated < 0
  std::uint64_t dissipated_kills = 0;        // messages that hit an already dying agent
  friend bool operator==(const AbmDiagnostics&, const AbmDiagnostics&) = default;
};

struct AbmWorld {
  std::vector<AgentClass> classes;
  Bindings params;
  /// populations[c][s]: living agents of class c in state s (terminal states stay 0).
  std::vector<std::vector<std::int64_t>> populations;
  std::vector<AbmInflux> influxes;
  AbmConfig config;
  double time = 0.0;
  AbmDiagnostics diagnostics;

  std::size_t class_index(const std::string& name) const {
    for (std::size_t i = 0; i < classes.size(); ++i)
      if (classes[i].name == name) return i;
    throw ValidationError("unknown agent class '" + name + "'");
  }

  std::int64_t total(std::size_t c) const {
    std::int64_t n = 0;
    for (std::size_t s = 0; s < populations[c].size(); ++s)
      if (!classes[c].is_terminal(s)) n += populations[c][s];
    return n;
  }
  std::int64_t total(const std::string& cls) const { return total(class_index(cls)); }

  /// Puts `count` agents of class `cls` into its initial state.
  void add_agents(const std::string& cls, std::int64_t count) {
    const std::size_t c = class_index(cls);
    populations[c][classes[c].state_index(classes[c].initial_state)] += count;
  }
};

/// Checks world invariants; throws ValidationError.
inline void validate(const AbmWorld& w) {
  if (!(w.config.dt > 0.0)) throw ValidationError("dt must be positive");
  if (!(w.config.horizon >= 0.0)) throw ValidationError("horizon must be nonnegative");
  if (w.populations.size() != w.classes.size()) throw ValidationError("populations do not match classes");
  std::set<std::string> symbols;
  for (const auto& [name, v] : w.params) symbols.insert(name);
  std::set<std::string> names;
  for (const auto& c : w.classes) {
    if (!names.insert(c.name).second) throw ValidationError("duplicate agent class '" + c.name + "'");
    if (!symbols.insert(c.total_symbol).second)
      throw ValidationError("aggregate symbol '" + c.total_symbol + "' clashes with another symbol");
  }
  for (std::size_t ci = 0; ci < w.classes.size(); ++ci) {
    const AgentClass& c = w.classes[ci];
    if (w.populations[ci].size() != c.states.size())
      throw ValidationError("population vector of '" + c.name + "' does not match its states");
    const std::size_t init = c.state_index(c.initial_state);
    if (c.is_terminal(init)) throw ValidationError("initial state of '" + c.name + "' is terminal");
    if (c.terminal_state) c.state_index(*c.terminal_state);
    for (std::size_t s = 0; s < c.states.size(); ++s) {
      if (w.populations[ci][s] < 0) throw ValidationError("negative population in '" + c.name + "'");
      if (c.is_terminal(s) && w.populations[ci][s] != 0)
        throw ValidationError("agents of '" + c.name + "' stored in the terminal state");
    }
    for (const auto& t : c.transitions) {
      if (c.is_terminal(c.state_index(t.from_state)))
        throw ValidationError("transition '" + t.name + "' leaves the terminal state of '" + c.name + "'");
      for (const auto& sym : free_symbols(t.rate))
        if (!symbols.count(sym)) throw ValidationError("unknown symbol '" + sym + "' in transition '" + t.name + "'");
      std::vector<const Effect*> effects{&t.effect};
      if (t.on_negative) effects.push_back(&*t.on_negative);
      for (const Effect* e : effects) {
        if (e->count < 0) throw ValidationError("negative effect count in '" + t.name + "'");
        if (e->kind == EffectKind::die && !c.terminal_state)
          throw ValidationError("class '" + c.name + "' cannot die: no terminal state");
        if (e->kind == EffectKind::spawn || e->kind == EffectKind::send_kill) {
          const AgentClass& target = w.classes[w.class_index(e->target)];
          if (e->kind == EffectKind::send_kill && !target.terminal_state)
            throw ValidationError("class '" + target.name + "' cannot be killed: no terminal state");
        }
      }
    }
  }
  for (const auto& f : w.influxes) {
    w.class_index(f.agent_class);
    for (const auto& sym : free_symbols(f.rate))
      if (!symbols.count(sym)) throw ValidationError("unknown symbol '" + sym + "' in influx rate");
  }
}

/// Compiled stepping program for one world layout.
class AbmStepper {
 public:
  explicit AbmStepper(const AbmWorld& w) {
    validate(w);
    std::map<std::string, std::size_t, std::less<>> slots;
    for (std::size_t c = 0; c < w.classes.size(); ++c) {
      slots[w.classes[c].total_symbol] = c;
      initial_.push_back(w.classes[c].state_index(w.classes[c].initial_state));
    }
    for (std::size_t c = 0; c < w.classes.size(); ++c) {
      const AgentClass& cls = w.classes[c];
      for (const auto& t : cls.transitions) {
        Compiled ct;
        ct.cls = c;
        ct.state = cls.state_index(t.from_state);
        ct.rate = CompiledExpr(t.rate, slots, w.params);
        ct.positive = resolve(w, c, t.effect);
        ct.negative = t.on_negative ? std::optional<Target>(resolve(w, c, *t.on_negative)) : std::nullopt;
        transitions_.push_back(std::move(ct));
      }
    }
    for (const auto& f : w.influxes)
      influxes_.push_back({w.class_index(f.agent_class), CompiledExpr(f.rate, slots, w.params)});
  }

  void step(AbmWorld& w, Rng& rng) const {
    const std::size_t nc = w.classes.size();
    const double dt = w.config.dt;
    std::vector<double> totals(nc);
    for (std::size_t c = 0; c < nc; ++c) totals[c] = static_cast<double>(w.total(c));

    // Per (class, state): summed death intensity; per class: arrivals and incoming kill messages.
    std::vector<std::vector<double>> death_intensity(nc);
    for (std::size_t c = 0; c < nc; ++c) death_intensity[c].assign(w.populations[c].size(), 0.0);
    std::vector<std::int64_t> arrivals(nc, 0), messages(nc, 0);

    for (const Compiled& t : transitions_) {
      const std::int64_t n = w.populations[t.cls][t.state];
      if (n == 0) continue;
      double r = t.rate(totals);
      const Target* effect = &t.positive;
      if (t.negative) {
        if (r < 0.0) {
          effect = &*t.negative;
          r = -r;
        }
      } else if (r < 0.0) {
        ++w.diagnostics.clamped_negative_rates;
        r = 0.0;
      }
      if (r == 0.0) continue;
      if (effect->kind == EffectKind::die) {
        death_intensity[t.cls][t.state] += r;
        continue;
      }
      const std::int64_t fired = rng.binomial(n, -std::expm1(-r * dt));
      const std::int64_t amount = fired * effect->count;
      if (effect->kind == EffectKind::send_kill) {
        messages[effect->cls] += amount;
      } else {
        arrivals[effect->cls] += amount;
      }
    }

    // Own deaths: an agent dies if any of its death transitions fires.
    std::vector<std::vector<std::int64_t>> deaths(nc);
    for (std::size_t c = 0; c < nc; ++c) {
      deaths[c].assign(w.populations[c].size(), 0);
      for (std::size_t s = 0; s < w.populations[c].size(); ++s)
        if (death_intensity[c][s] > 0.0)
          deaths[c][s] = rng.binomial(w.populations[c][s], -std::expm1(-death_intensity[c][s] * dt));
    }

    // Kill messages pick uniform living targets; hits on dying agents dissipate.
    for (std::size_t c = 0; c < nc; ++c) {
      if (messages[c] == 0) continue;
      const auto living = static_cast<std::int64_t>(totals[c]);
      std::int64_t marked = 0;
      for (auto d : deaths[c]) marked += d;
      for (std::int64_t k = 0; k < messages[c]; ++k) {
        if (marked >= living) {
          w.diagnostics.dissipated_kills += static_cast<std::uint64_t>(messages[c] - k);
          break;
        }
        const double u = rng.uniform() * static_cast<double>(living);
        if (u < static_cast<double>(marked)) {
          ++w.diagnostics.dissipated_kills;
          continue;
        }
        double rest = u - static_cast<double>(marked);
        std::size_t s = 0;
        for (; s + 1 < deaths[c].size(); ++s) {
          const auto unmarked = static_cast<double>(w.populations[c][s] - deaths[c][s]);
          if (rest < unmarked) break;
          rest -= unmarked;
        }
        while (w.populations[c][s] - deaths[c][s] == 0) --s;  // rounding guard
        ++deaths[c][s];
        ++marked;
      }
    }

    for (std::size_t c = 0; c < nc; ++c) {
      for (std::size_t s = 0; s < deaths[c].size(); ++s) w.populations[c][s] -= deaths[c][s];
      w.populations[c][initial_[c]] += arrivals[c];
    }
    for (const auto& f : influxes_) {
      const double rate = std::max(0.0, f.rate(totals));
      w.populations[f.cls][initial_[f.cls]] += rng.poisson(rate * dt);
    }
    w.time += dt;
  }

 private:
  struct Target {
    EffectKind kind;
    std::size_t cls;
    int count;
  };
  struct Compiled {
    std::size_t cls = 0;
    std::size_t state = 0;
    CompiledExpr rate;
    Target positive{};
    std::optional<Target> negative;
  };
  struct Influx {
    std::size_t cls;
    CompiledExpr rate;
  };

  static Target resolve(const AbmWorld& w, std::size_t own, const Effect& e) {
    switch (e.kind) {
      case EffectKind::die: return {e.kind, own, 1};
      case EffectKind::clone: return {e.kind, own, e.count};
      case EffectKind::spawn:
      case EffectKind::send_kill: return {e.kind, w.class_index(e.target), e.count};
    }
    return {e.kind, own, e.count};
  }

  std::vector<Compiled> transitions_;
  std::vector<Influx> influxes_;
  std::vector<std::size_t> initial_;
};

/// One synchronous step; returns the advanced world.
inline AbmWorld abm_step(AbmWorld w, Rng& rng) {
  AbmStepper(w).step(w, rng);
  return w;
}

namespace detail {
inline std::vector<double> abm_row(const AbmWorld& w) {
  std::vector<double> row;
  for (std::size_t c = 0; c < w.classes.size(); ++c) row.push_back(static_cast<double>(w.total(c)));
  return row;
}
}  // namespace detail

/// Runs the world to its horizon with RNG seeded from config.seed. The
/// trajectory has one column per agent class (named by its species) on the
/// dt grid; a trailing partial step is dropped.
inline Trajectory simulate_abm(AbmWorld w, AbmDiagnostics* diagnostics = nullptr) {
  const AbmStepper stepper(w);
  Rng rng(w.config.seed);
  std::vector<std::string> names;
  for (const auto& c : w.classes) names.push_back(c.species);
  Trajectory traj(names, w.config.dt);
  const std::size_t n = grid_points(w.config.horizon, w.config.dt);
  const double t0 = w.time;
  traj.append(t0, detail::abm_row(w));
  for (std::size_t k = 1; k < n; ++k) {
    stepper.step(w, rng);
    traj.append(t0 + static_cast<double>(k) * w.config.dt, detail::abm_row(w));
  }
  if (diagnostics) *diagnostics = w.diagnostics;
  return traj;
}

}  // namespace trisim

#endif  // TRISIM_ABM_HPP
