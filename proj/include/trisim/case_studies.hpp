#ifndef TRISIM_CASE_STUDIES_HPP
#define TRISIM_CASE_STUDIES_HPP

// Built-in tumour-immune models. Each is one reaction network (used by the
// ODE and SSA engines) plus an agent world whose per-agent rates, multiplied
// by the acting population, reproduce the network's rate laws.
//
// Initial populations are not published with the parameter sets; the
// defaults here (case 1: T=100, E=5; cases 2-3: T=1e4, E=I=S=10) are
// configuration and can be overridden like any parameter.

#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "trisim/abm.hpp"
#include "trisim/error.hpp"
#include "trisim/model.hpp"

namespace trisim {

struct CaseStudyId {
  enum class Kind { growth_demo, case1, case2, case3 };
  Kind kind = Kind::case1;
  int scenario = 1;  // case1 only, 1..4

  static CaseStudyId growth_demo() { return {Kind::growth_demo, 1}; }
  static CaseStudyId case1(int scenario = 1) {
    if (scenario < 1 || scenario > 4) throw ValidationError("case 1 scenario must be 1..4");
    return {Kind::case1, scenario};
  }
  static CaseStudyId case2() { return {Kind::case2, 1}; }
  static CaseStudyId case3() { return {Kind::case3, 1}; }

  /// Parses "growth_demo", "case1", "case2", "case3".
  static CaseStudyId parse(std::string_view name, std::optional<int> scenario = std::nullopt) {
    if (scenario && name != "case1") throw ValidationError("a scenario is only valid for case1");
    if (name == "growth_demo") return growth_demo();
    if (name == "case1") return case1(scenario.value_or(1));
    if (name == "case2") return case2();
    if (name == "case3") return case3();
    throw ValidationError("unknown case study '" + std::string(name) + "'");
  }

  std::string name() const {
    switch (kind) {
      case Kind::growth_demo: return "growth_demo";
      case Kind::case1: return "case1";
      case Kind::case2: return "case2";
      case Kind::case3: return "case3";
    }
    return {};
  }

  friend bool operator==(const CaseStudyId&, const CaseStudyId&) = default;
};

inline std::vector<std::string> builtin_model_names() { return {"growth_demo", "case1", "case2", "case3"}; }

namespace detail {

// Tumour growth with power-law proliferation and death,
// dT/dt = T * (a*T^alpha - b*T^beta). alpha = 0, beta = 1 and b = 0.002*a
// give logistic growth with carrying capacity 500.
inline constexpr std::string_view kGrowthDemo = R"(# Tumour growth demo: proliferation a*T^alpha, death b*T^beta per cell
species T = 100
param a = 1.636
param b = 0.003272
param alpha = 0
param beta = 1
reaction proliferation: T -> 2 T @ a*T*T^alpha
reaction death: T -> @ b*T*T^beta
horizon 100
sample 0.1
)";

// Tumour / generic effector cells. Parameters are scenario 1; see
// kCase1Scenarios for b, d, s of the other scenarios.
inline constexpr std::string_view kCase1 = R"(# Case 1: tumour cells (T) and generic effector cells (E)
species T = 100
species E = 5
param a = 1.636
param b = 0.002
param n = 1
param p = 1.131
param g = 20.19
param m = 0.00311
param d = 0.1908
param s = 0.318
reaction tumour_birth: T -> 2 T @ a*T
reaction tumour_death: 2 T -> T @ a*b*T^2
reaction tumour_killed_by_effector: T + E -> E @ n*T*E
reaction effector_proliferation: E -> 2 E ; T @ p*T*E/(g + T)
reaction effector_killed_by_tumour: T + E -> T @ m*T*E
reaction effector_death: E -> @ d*E
influx E @ s
horizon 100
sample 0.1
)";

struct Case1Scenario {
  double b, d, s;
};
inline constexpr Case1Scenario kCase1Scenarios[4] = {
    {0.002, 0.1908, 0.318}, {0.004, 2.0, 0.318}, {0.002, 0.3743, 0.1181}, {0.002, 0.3743, 0.0}};

// Tumour / effector / IL-2. Tumour growth is a*T*(1 - b*T), split into a
// birth and a density-dependent death reaction.
inline constexpr std::string_view kCase2 = R"(# Case 2: tumour cells (T), effector cells (E), IL-2 (I)
species T = 10000
species E = 10
species I = 10
param a = 0.18
param b = 1e-9
param c = 0.05
param aa = 1
param g2 = 100000
param s1 = 0
param s2 = 0
param mu2 = 0.03
param p1 = 0.1245
param g1 = 20000000
param p2 = 5
param g3 = 1000
param mu3 = 10
reaction effector_recruitment: -> E ; T @ c*T
reaction effector_proliferation: E -> 2 E ; I @ p1*E*I/(g1 + I)
reaction effector_death: E -> @ mu2*E
reaction tumour_birth: T -> 2 T @ a*T
reaction tumour_death: 2 T -> T @ a*b*T^2
reaction tumour_killed_by_effector: T + E -> E @ aa*T*E/(g2 + T)
reaction il2_production: -> I ; E, T @ p2*E*T/(g3 + T)
reaction il2_decay: I -> @ mu3*I
influx E @ s1
influx I @ s2
horizon 600
sample 0.1
)";

// Tumour / effector / IL-2 / TGF-beta. K is the tumour carrying capacity.
inline constexpr std::string_view kCase3 = R"(# Case 3: tumour cells (T), effector cells (E), IL-2 (I), TGF-beta (S)
species T = 10000
species E = 10
species I = 10
species S = 10
param a = 0.18
param aa = 1
param alpha = 0.001
param c = 0.035
param g1 = 20000000
param g2 = 100000
param g3 = 20000000
param g4 = 1000
param gamma = 10
param mu1 = 0.03
param mu2 = 10
param mu3 = 10
param p1 = 0.1245
param p2 = 0.27
param p3 = 5
param p4 = 2.84
param q1 = 10
param q2 = 0.1121
param theta = 1000000
param K = 1000000000
reaction effector_recruitment: -> E ; T, S @ c*T/(1 + gamma*S)
reaction effector_death: E -> @ mu1*E
reaction effector_proliferation: E -> 2 E ; I, S @ p1*I*E/(g1 + I)*(p1 - q1*S/(q2 + S))
reaction tumour_growth: T -> 2 T @ a*T
reaction tumour_death: 2 T -> T @ a*T^2/K
reaction tumour_killed_by_effector: T + E -> E @ aa*T*E/(g2 + T)
reaction tumour_growth_by_tgf: T -> 2 T ; S @ p2*S*T/(g3 + S)
reaction il2_production: -> I ; E, T, S @ p3*E*T/((g4 + T)*(1 + alpha*S))
reaction il2_decay: I -> @ mu2*I
reaction tgf_production: -> S ; T @ p4*T^2/(theta^2 + T^2)
reaction tgf_decay: S -> @ mu3*S
horizon 600
sample 0.1
)";

inline AgentClass make_class(std::string name, std::string species, std::string total) {
  AgentClass c;
  c.name = std::move(name);
  c.species = std::move(species);
  c.total_symbol = std::move(total);
  c.states = {"alive", "dead"};
  c.initial_state = "alive";
  c.terminal_state = "dead";
  return c;
}

inline AbmTransition transition(std::string name, std::string_view rate, Effect effect,
                                std::optional<Effect> on_negative = std::nullopt) {
  return {std::move(name), "alive", parse_expr(rate), std::move(effect), std::move(on_negative)};
}

}  // namespace detail

/// Model text of a built-in case (case 1 with its scenario-1 parameters).
inline std::string_view builtin_model_text(CaseStudyId::Kind kind) {
  switch (kind) {
    case CaseStudyId::Kind::growth_demo: return detail::kGrowthDemo;
    case CaseStudyId::Kind::case1: return detail::kCase1;
    case CaseStudyId::Kind::case2: return detail::kCase2;
    case CaseStudyId::Kind::case3: return detail::kCase3;
  }
  throw ValidationError("unknown case study");
}

/// Fully parameterised built-in model; overrides name parameters or species
/// (initial values).
inline ModelSpec builtin_model(CaseStudyId id, const std::map<std::string, double>& overrides = {}) {
  ModelSpec m = load_model(builtin_model_text(id.kind));
  if (id.kind == CaseStudyId::Kind::case1) {
    if (id.scenario < 1 || id.scenario > 4) throw ValidationError("case 1 scenario must be 1..4");
    const auto& sc = detail::kCase1Scenarios[id.scenario - 1];
    apply_overrides(m, {{"b", sc.b}, {"d", sc.d}, {"s", sc.s}});
  }
  apply_overrides(m, overrides);
  return m;
}

/// Agent world for a built-in case. Per-agent rates are the network's rate
/// laws divided by the population that carries the behaviour.
inline AbmWorld build_world(CaseStudyId id, const std::map<std::string, double>& overrides = {}) {
  using detail::make_class;
  using detail::transition;
  const ModelSpec m = builtin_model(id, overrides);

  AbmWorld w;
  w.params = m.param_bindings();
  w.config.dt = 0.1;
  w.config.horizon = m.horizon;

  AgentClass tumour = make_class("Tumour", "T", "TotalTumour");
  AgentClass effector = make_class("Effector", "E", "TotalEffector");
  AgentClass il2 = make_class("IL2", "I", "TotalIL2");
  AgentClass tgf = make_class("TGF", "S", "TotalTGF");

  switch (id.kind) {
    case CaseStudyId::Kind::growth_demo:
      tumour.transitions = {transition("growth", "a*TotalTumour^alpha - b*TotalTumour^beta", Effect::clone(),
                                       Effect::die())};
      w.classes = {tumour};
      break;
    case CaseStudyId::Kind::case1:
      tumour.transitions = {
          transition("growth", "a*(1 - b*TotalTumour)", Effect::clone(), Effect::die()),
          transition("dieKilledByEffector", "n*TotalEffector", Effect::die()),
          transition("causeEffectorDamage", "m*TotalEffector", Effect::send_kill("Effector")),
      };
      effector.transitions = {
          transition("reproduce", "p*TotalTumour/(g + TotalTumour)", Effect::clone()),
          transition("diePerAge", "d", Effect::die()),
      };
      w.classes = {tumour, effector};
      w.influxes = {{"Effector", parse_expr("s")}};
      break;
    case CaseStudyId::Kind::case2:
      tumour.transitions = {
          transition("growth", "a*(1 - b*TotalTumour)", Effect::clone(), Effect::die()),
          transition("induceRecruitment", "c", Effect::spawn("Effector")),
      };
      effector.transitions = {
          transition("reproduce", "p1*TotalIL2/(g1 + TotalIL2)", Effect::clone()),
          transition("die", "mu2", Effect::die()),
          transition("killTumour", "aa*TotalTumour/(g2 + TotalTumour)", Effect::send_kill("Tumour")),
          transition("produceIL2", "p2*TotalTumour/(g3 + TotalTumour)", Effect::spawn("IL2")),
      };
      il2.transitions = {transition("loss", "mu3", Effect::die())};
      w.classes = {tumour, effector, il2};
      w.influxes = {{"Effector", parse_expr("s1")}, {"IL2", parse_expr("s2")}};
      break;
    case CaseStudyId::Kind::case3:
      tumour.transitions = {
          transition("growth", "a*(1 - TotalTumour/K)", Effect::clone(), Effect::die()),
          transition("growthStimulatedByTGF", "p2*TotalTGF/(g3 + TotalTGF)", Effect::clone()),
          transition("produceTGF", "p4*TotalTumour/(theta^2 + TotalTumour^2)", Effect::spawn("TGF")),
          transition("effectorRecruitment", "c/(1 + gamma*TotalTGF)", Effect::spawn("Effector")),
      };
      effector.transitions = {
          transition("reproduce", "p1*TotalIL2/(g1 + TotalIL2)*(p1 - q1*TotalTGF/(q2 + TotalTGF))",
                     Effect::clone()),
          transition("die", "mu1", Effect::die()),
          transition("produceIL2", "p3*TotalTumour/((g4 + TotalTumour)*(1 + alpha*TotalTGF))", Effect::spawn("IL2")),
          transition("killTumour", "aa*TotalTumour/(g2 + TotalTumour)", Effect::send_kill("Tumour")),
      };
      il2.transitions = {transition("loss", "mu2", Effect::die())};
      tgf.transitions = {transition("loss", "mu3", Effect::die())};
      w.classes = {tumour, effector, il2, tgf};
      break;
  }

  for (const auto& c : w.classes) {
    std::vector<std::int64_t> pop(c.states.size(), 0);
    const double initial = m.species[m.species_index(c.species)].initial;
    if (initial != std::floor(initial))
      throw ValidationError("agent worlds need integer initial counts; '" + c.species + "' is fractional");
    pop[c.state_index(c.initial_state)] = static_cast<std::int64_t>(initial);
    w.populations.push_back(std::move(pop));
  }
  validate(w);
  return w;
}

}  // namespace trisim

#endif  // TRISIM_CASE_STUDIES_HPP
