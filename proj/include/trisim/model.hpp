#ifndef TRISIM_MODEL_HPP
#define TRISIM_MODEL_HPP

// Reaction-network models: the single description that the ODE, SSA and
// ABM engines all consume.
//
// Model file format (line oriented, '#' starts a comment):
//
//   species <name> = <number>
//   param <name> = <number>
//   reaction <name>: <side> -> <side> [; <modifier>, ...] @ <expr>
//   influx <species> @ <expr>
//   horizon <days>
//   sample <days>
//
// A side is a '+'-separated list of terms "<species>", "<n> <species>" or
// "<n>*<species>", or empty for no species. Modifiers are species the rate
// reads but the reaction does not change.

#include <algorithm>
#include <charconv>
#include <cmath>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "trisim/error.hpp"
#include "trisim/expr.hpp"

namespace trisim {

struct SpeciesDecl {
  std::string name;
  double initial = 0.0;
  friend bool operator==(const SpeciesDecl&, const SpeciesDecl&) = default;
};

struct Parameter {
  std::string name;
  double value = 0.0;
  friend bool operator==(const Parameter&, const Parameter&) = default;
};

struct StoichTerm {
  std::string species;
  int count = 1;
  friend bool operator==(const StoichTerm&, const StoichTerm&) = default;
};

struct Reaction {
  std::string name;
  std::vector<StoichTerm> consumed;
  std::vector<StoichTerm> produced;
  std::vector<std::string> modifiers;
  Expr rate;

  /// produced - consumed for one species.
  int net_change(std::string_view species) const {
    int net = 0;
    for (const auto& t : produced)
      if (t.species == species) net += t.count;
    for (const auto& t : consumed)
      if (t.species == species) net -= t.count;
    return net;
  }

  friend bool operator==(const Reaction&, const Reaction&) = default;
};

/// Constant-rate arrival stream of one species (treatment terms).
struct InfluxEvent {
  std::string species;
  Expr rate;
  friend bool operator==(const InfluxEvent&, const InfluxEvent&) = default;
};

struct ModelSpec {
  std::vector<SpeciesDecl> species;
  std::vector<Parameter> params;
  std::vector<Reaction> reactions;
  std::vector<InfluxEvent> influxes;
  double horizon = 100.0;
  double sample_interval = 0.1;

  std::optional<std::size_t> find_species(std::string_view name) const {
    for (std::size_t i = 0; i < species.size(); ++i)
      if (species[i].name == name) return i;
    return std::nullopt;
  }

  std::size_t species_index(std::string_view name) const {
    if (auto i = find_species(name)) return *i;
    throw ValidationError("unknown species '" + std::string(name) + "'");
  }

  std::optional<std::size_t> find_param(std::string_view name) const {
    for (std::size_t i = 0; i < params.size(); ++i)
      if (params[i].name == name) return i;
    return std::nullopt;
  }

  double param(std::string_view name) const {
    if (auto i = find_param(name)) return params[*i].value;
    throw ValidationError("unknown parameter '" + std::string(name) + "'");
  }

  std::vector<std::string> species_names() const {
    std::vector<std::string> out;
    for (const auto& s : species) out.push_back(s.name);
    return out;
  }

  std::vector<double> initial_state() const {
    std::vector<double> out;
    for (const auto& s : species) out.push_back(s.initial);
    return out;
  }

  Bindings param_bindings() const {
    Bindings b;
    for (const auto& p : params) b[p.name] = p.value;
    return b;
  }

  /// Slot map for compiling rate laws over the species vector.
  std::map<std::string, std::size_t, std::less<>> species_slots() const {
    std::map<std::string, std::size_t, std::less<>> slots;
    for (std::size_t i = 0; i < species.size(); ++i) slots[species[i].name] = i;
    return slots;
  }

  friend bool operator==(const ModelSpec&, const ModelSpec&) = default;
};

namespace detail {

inline std::string_view trim(std::string_view s) {
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
  return s;
}

inline bool is_identifier(std::string_view s) {
  if (s.empty() || !(std::isalpha(static_cast<unsigned char>(s[0])) || s[0] == '_')) return false;
  return std::all_of(s.begin(), s.end(),
                     [](char c) { return std::isalnum(static_cast<unsigned char>(c)) || c == '_'; });
}

inline double parse_real(std::string_view s, std::size_t line) {
  s = trim(s);
  double v = 0.0;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (s.empty() || ec != std::errc() || ptr != s.data() + s.size() || !std::isfinite(v))
    throw ModelError("malformed number '" + std::string(s) + "'", line);
  return v;
}

inline std::string parse_identifier(std::string_view s, std::size_t line) {
  s = trim(s);
  if (!is_identifier(s)) throw ModelError("malformed identifier '" + std::string(s) + "'", line);
  return std::string(s);
}

inline std::vector<StoichTerm> parse_side(std::string_view side, std::size_t line) {
  std::vector<StoichTerm> terms;
  side = trim(side);
  if (side.empty()) return terms;
  std::size_t start = 0;
  for (;;) {
    const std::size_t plus = side.find('+', start);
    std::string_view term = trim(side.substr(start, plus == std::string_view::npos ? plus : plus - start));
    if (term.empty()) throw ModelError("empty stoichiometry term", line);
    int count = 1;
    if (std::isdigit(static_cast<unsigned char>(term[0]))) {
      auto [ptr, ec] = std::from_chars(term.data(), term.data() + term.size(), count);
      if (ec != std::errc() || count < 0) throw ModelError("malformed stoichiometry", line);
      term = trim(term.substr(static_cast<std::size_t>(ptr - term.data())));
      if (!term.empty() && term[0] == '*') term = trim(term.substr(1));
    }
    const std::string name = parse_identifier(term, line);
    auto it = std::find_if(terms.begin(), terms.end(), [&](const StoichTerm& t) { return t.species == name; });
    if (it != terms.end()) {
      it->count += count;
    } else if (count > 0) {
      terms.push_back({name, count});
    }
    if (plus == std::string_view::npos) break;
    start = plus + 1;
  }
  return terms;
}

inline Expr parse_rate(std::string_view text, std::size_t line) {
  try {
    return parse_expr(text);
  } catch (const ParseError& e) {
    throw ModelError(std::string("bad rate expression: ") + e.what(), line);
  }
}

inline void validate_model(const ModelSpec& m, const std::vector<std::size_t>& reaction_lines,
                           const std::vector<std::size_t>& influx_lines) {
  auto line_of = [](const std::vector<std::size_t>& lines, std::size_t i) -> std::size_t {
    return i < lines.size() ? lines[i] : 0;
  };
  std::set<std::string> names;
  for (const auto& s : m.species) {
    if (!is_identifier(s.name)) throw ModelError("invalid species name '" + s.name + "'");
    if (!names.insert(s.name).second) throw ModelError("duplicate species '" + s.name + "'");
    if (!(s.initial >= 0.0) || !std::isfinite(s.initial))
      throw ModelError("species '" + s.name + "' has a negative or non-finite initial value");
  }
  for (const auto& p : m.params) {
    if (!is_identifier(p.name)) throw ModelError("invalid parameter name '" + p.name + "'");
    if (!names.insert(p.name).second) throw ModelError("duplicate symbol '" + p.name + "'");
    if (!std::isfinite(p.value)) throw ModelError("parameter '" + p.name + "' is not finite");
  }
  if (!(m.horizon > 0.0)) throw ModelError("horizon must be positive");
  if (!(m.sample_interval > 0.0)) throw ModelError("sample interval must be positive");

  std::set<std::string> reaction_names;
  for (std::size_t i = 0; i < m.reactions.size(); ++i) {
    const Reaction& r = m.reactions[i];
    const std::size_t line = line_of(reaction_lines, i);
    if (!reaction_names.insert(r.name).second) throw ModelError("duplicate reaction '" + r.name + "'", line);
    if (r.consumed.empty() && r.produced.empty())
      throw ModelError("reaction '" + r.name + "' changes no species", line);
    std::set<std::string> touched;
    for (const auto* side : {&r.consumed, &r.produced})
      for (const auto& t : *side) {
        if (!m.find_species(t.species))
          throw ModelError("reaction '" + r.name + "' uses unknown species '" + t.species + "'", line);
        touched.insert(t.species);
      }
    for (const auto& mod : r.modifiers) {
      if (!m.find_species(mod))
        throw ModelError("reaction '" + r.name + "' has unknown modifier '" + mod + "'", line);
      touched.insert(mod);
    }
    if (r.rate.empty()) throw ModelError("reaction '" + r.name + "' has no rate", line);
    for (const auto& sym : free_symbols(r.rate)) {
      if (m.find_species(sym)) {
        if (!touched.count(sym))
          throw ModelError("rate of '" + r.name + "' reads species '" + sym +
                               "' that is neither a reactant, product nor modifier",
                           line);
      } else if (!m.find_param(sym)) {
        throw ModelError("unknown symbol '" + sym + "' in rate of '" + r.name + "'", line);
      }
    }
  }
  const Bindings params = m.param_bindings();
  for (std::size_t i = 0; i < m.influxes.size(); ++i) {
    const InfluxEvent& f = m.influxes[i];
    const std::size_t line = line_of(influx_lines, i);
    if (!m.find_species(f.species)) throw ModelError("influx into unknown species '" + f.species + "'", line);
    for (const auto& sym : free_symbols(f.rate))
      if (!m.find_param(sym))
        throw ModelError("influx rate must be constant; unknown or non-parameter symbol '" + sym + "'", line);
    double v = 0.0;
    try {
      v = eval_expr(f.rate, params);
    } catch (const EvalError& e) {
      throw ModelError(std::string("influx rate: ") + e.what(), line);
    }
    if (v < 0.0) throw ModelError("influx rate into '" + f.species + "' is negative", line);
  }
}

}  // namespace detail

/// Checks every ModelSpec invariant; throws ModelError naming the problem.
inline void validate(const ModelSpec& m) { detail::validate_model(m, {}, {}); }

inline ModelSpec load_model(std::string_view text) {
  ModelSpec m;
  std::vector<std::size_t> reaction_lines, influx_lines;
  std::set<std::string> seen;
  bool have_horizon = false, have_sample = false;
  std::size_t line_no = 0;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    const std::size_t nl = text.find('\n', pos);
    std::string_view line = text.substr(pos, nl == std::string_view::npos ? std::string_view::npos : nl - pos);
    pos = nl == std::string_view::npos ? text.size() + 1 : nl + 1;
    ++line_no;
    if (auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
    line = detail::trim(line);
    if (line.empty()) continue;

    const std::size_t sp = line.find_first_of(" \t");
    const std::string_view keyword = line.substr(0, sp);
    const std::string_view rest = sp == std::string_view::npos ? std::string_view{} : detail::trim(line.substr(sp));

    if (keyword == "species" || keyword == "param") {
      const std::size_t eq = rest.find('=');
      if (eq == std::string_view::npos) throw ModelError("expected '<name> = <number>'", line_no);
      const std::string name = detail::parse_identifier(rest.substr(0, eq), line_no);
      const double value = detail::parse_real(rest.substr(eq + 1), line_no);
      if (!seen.insert(name).second) throw ModelError("duplicate symbol '" + name + "'", line_no);
      if (keyword == "species") {
        if (value < 0.0) throw ModelError("species '" + name + "' has a negative initial value", line_no);
        m.species.push_back({name, value});
      } else {
        m.params.push_back({name, value});
      }
    } else if (keyword == "reaction") {
      const std::size_t colon = rest.find(':');
      const std::size_t at = rest.find('@');
      if (colon == std::string_view::npos || at == std::string_view::npos || at < colon)
        throw ModelError("expected 'reaction <name>: <side> -> <side> @ <expr>'", line_no);
      Reaction r;
      r.name = detail::parse_identifier(rest.substr(0, colon), line_no);
      std::string_view body = rest.substr(colon + 1, at - colon - 1);
      std::string_view mods;
      if (auto semi = body.find(';'); semi != std::string_view::npos) {
        mods = body.substr(semi + 1);
        body = body.substr(0, semi);
      }
      const std::size_t arrow = body.find("->");
      if (arrow == std::string_view::npos) throw ModelError("reaction is missing '->'", line_no);
      r.consumed = detail::parse_side(body.substr(0, arrow), line_no);
      r.produced = detail::parse_side(body.substr(arrow + 2), line_no);
      std::string mod_text(mods);
      std::replace(mod_text.begin(), mod_text.end(), ',', ' ');
      std::istringstream ms(mod_text);
      for (std::string tok; ms >> tok;) {
        const std::string name = detail::parse_identifier(tok, line_no);
        if (std::find(r.modifiers.begin(), r.modifiers.end(), name) == r.modifiers.end())
          r.modifiers.push_back(name);
      }
      r.rate = detail::parse_rate(rest.substr(at + 1), line_no);
      m.reactions.push_back(std::move(r));
      reaction_lines.push_back(line_no);
    } else if (keyword == "influx") {
      const std::size_t at = rest.find('@');
      if (at == std::string_view::npos) throw ModelError("expected 'influx <species> @ <expr>'", line_no);
      InfluxEvent f;
      f.species = detail::parse_identifier(rest.substr(0, at), line_no);
      f.rate = detail::parse_rate(rest.substr(at + 1), line_no);
      m.influxes.push_back(std::move(f));
      influx_lines.push_back(line_no);
    } else if (keyword == "horizon" || keyword == "sample") {
      const double v = detail::parse_real(rest, line_no);
      if (!(v > 0.0)) throw ModelError(std::string(keyword) + " must be positive", line_no);
      bool& flag = keyword == "horizon" ? have_horizon : have_sample;
      if (flag) throw ModelError("duplicate '" + std::string(keyword) + "'", line_no);
      flag = true;
      (keyword == "horizon" ? m.horizon : m.sample_interval) = v;
    } else {
      throw ModelError("unknown directive '" + std::string(keyword) + "'", line_no);
    }
  }
  detail::validate_model(m, reaction_lines, influx_lines);
  return m;
}

/// Canonical text form; load_model(save_model(m)) == m.
inline std::string save_model(const ModelSpec& m) {
  auto side = [](const std::vector<StoichTerm>& terms) {
    std::string out;
    for (std::size_t i = 0; i < terms.size(); ++i) {
      if (i) out += " + ";
      if (terms[i].count != 1) out += std::to_string(terms[i].count) + " ";
      out += terms[i].species;
    }
    return out;
  };
  std::string out;
  for (const auto& s : m.species) out += "species " + s.name + " = " + detail::format_number(s.initial) + "\n";
  for (const auto& p : m.params) out += "param " + p.name + " = " + detail::format_number(p.value) + "\n";
  for (const auto& r : m.reactions) {
    out += "reaction " + r.name + ": " + side(r.consumed) + " -> " + side(r.produced);
    if (!r.modifiers.empty()) {
      out += " ;";
      for (std::size_t i = 0; i < r.modifiers.size(); ++i) out += (i ? ", " : " ") + r.modifiers[i];
    }
    out += " @ " + render(r.rate) + "\n";
  }
  for (const auto& f : m.influxes) out += "influx " + f.species + " @ " + render(f.rate) + "\n";
  out += "horizon " + detail::format_number(m.horizon) + "\n";
  out += "sample " + detail::format_number(m.sample_interval) + "\n";
  return out;
}

/// Species values plus parameters, for evaluating rate laws by name.
inline Bindings bindings_for(const ModelSpec& m, std::span<const double> state) {
  if (state.size() != m.species.size()) throw ValidationError("state size does not match species count");
  Bindings b = m.param_bindings();
  for (std::size_t i = 0; i < m.species.size(); ++i) b[m.species[i].name] = state[i];
  return b;
}

/// Signed rate law of a reaction at a state.
inline double rate_law(const ModelSpec& m, const Reaction& r, std::span<const double> state) {
  return eval_expr(r.rate, bindings_for(m, state));
}

/// Stochastic propensity: the rate law clamped at zero.
inline double propensity(const ModelSpec& m, const Reaction& r, std::span<const double> state) {
  return std::max(0.0, rate_law(m, r, state));
}

inline std::vector<double> apply_reaction(const ModelSpec& m, const Reaction& r, std::span<const double> state) {
  std::vector<double> next(state.begin(), state.end());
  for (const auto& t : r.consumed) {
    const std::size_t i = m.species_index(t.species);
    if (next[i] < t.count)
      throw ValidationError("reaction '" + r.name + "' needs " + std::to_string(t.count) + " of '" + t.species +
                            "' but only " + detail::format_number(next[i]) + " present");
    next[i] -= t.count;
  }
  for (const auto& t : r.produced) next[m.species_index(t.species)] += t.count;
  return next;
}

/// Deterministic right-hand side: sum over reactions of (produced - consumed)
/// times the unclamped rate law, plus influxes.
inline std::vector<double> ode_rhs(const ModelSpec& m, std::span<const double> state) {
  const Bindings b = bindings_for(m, state);
  std::vector<double> dydt(m.species.size(), 0.0);
  for (const auto& r : m.reactions) {
    const double rate = eval_expr(r.rate, b);
    for (const auto& t : r.consumed) dydt[m.species_index(t.species)] -= t.count * rate;
    for (const auto& t : r.produced) dydt[m.species_index(t.species)] += t.count * rate;
  }
  for (const auto& f : m.influxes) dydt[m.species_index(f.species)] += eval_expr(f.rate, b);
  return dydt;
}

/// Applies name=value overrides to parameters or species initial values.
inline void apply_overrides(ModelSpec& m, const std::map<std::string, double>& overrides) {
  for (const auto& [name, value] : overrides) {
    if (auto p = m.find_param(name)) {
      m.params[*p].value = value;
    } else if (auto s = m.find_species(name)) {
      if (value < 0.0) throw ValidationError("initial value of '" + name + "' must be nonnegative");
      m.species[*s].initial = value;
    } else {
      throw ValidationError("override '" + name + "' names no parameter or species");
    }
  }
  validate(m);
}

}  // namespace trisim

#endif  // TRISIM_MODEL_HPP
