#include <cmath>
#include <fstream>
#include <random>
#include <sstream>
#include <string>

#include <gtest/gtest.h>

#include "hand_odes.hpp"
#include "trisim/case_studies.hpp"
#include "trisim/model.hpp"
#include "trisim/network.hpp"

using namespace trisim;

namespace {

const Reaction& reaction(const ModelSpec& m, const std::string& name) {
  for (const auto& r : m.reactions)
    if (r.name == name) return r;
  throw std::runtime_error("no reaction " + name);
}

std::string read_file(const std::string& path) {
  std::ifstream in(path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace

TEST(LoadModel, Minimal) {
  const ModelSpec m = load_model(R"(species T = 100
param a = 1.636
param b = 0.002
reaction birth: T -> 2 T @ a*T*(1-b*T)
)");
  EXPECT_EQ(m.species.size(), 1u);
  EXPECT_EQ(m.params.size(), 2u);
  ASSERT_EQ(m.reactions.size(), 1u);
  EXPECT_EQ(m.reactions[0].consumed, (std::vector<StoichTerm>{{"T", 1}}));
  EXPECT_EQ(m.reactions[0].produced, (std::vector<StoichTerm>{{"T", 2}}));
  EXPECT_EQ(m.species[0].initial, 100.0);
}

TEST(LoadModel, UnknownSymbolNamesSymbolAndLine) {
  try {
    load_model("species T = 1\nparam a = 2\n\nreaction r: T -> @ a*X\n");
    FAIL();
  } catch (const ModelError& e) {
    EXPECT_EQ(e.line(), 4u);
    EXPECT_NE(std::string(e.what()).find("'X'"), std::string::npos);
  }
}

TEST(LoadModel, Errors) {
  EXPECT_THROW(load_model("species T = 1\nspecies T = 2\n"), ModelError);
  EXPECT_THROW(load_model("species T = 1\nparam T = 2\n"), ModelError);
  EXPECT_THROW(load_model("species T = -1\n"), ModelError);
  EXPECT_THROW(load_model("species T = 1\nreaction r T -> @ T\n"), ModelError);
  EXPECT_THROW(load_model("species T = 1\nreaction r: T @ T\n"), ModelError);
  EXPECT_THROW(load_model("species T = 1\nreaction r: -> @ 1\n"), ModelError);
  EXPECT_THROW(load_model("species T = 1\nspecies E = 1\nreaction r: T -> @ T*E\n"), ModelError);
  EXPECT_THROW(load_model("species T = 1\nfoo 3\n"), ModelError);
  EXPECT_THROW(load_model("species T = 1\nhorizon 0\n"), ModelError);
  EXPECT_THROW(load_model("species T = 1\ninflux T @ T\n"), ModelError);
  EXPECT_THROW(load_model("species T = 1\nparam s = -1\ninflux T @ s\n"), ModelError);
  try {
    load_model("species T = 1\n\nparam a = 1x\n");
    FAIL();
  } catch (const ModelError& e) {
    EXPECT_EQ(e.line(), 3u);
  }
}

TEST(LoadModel, ModifiersAndMultiplicities) {
  const ModelSpec m = load_model("species T = 1\nspecies E = 1\nreaction r: 2*T + E -> 3 E ; T @ T*E\n");
  const auto& r = m.reactions[0];
  EXPECT_EQ(r.consumed, (std::vector<StoichTerm>{{"T", 2}, {"E", 1}}));
  EXPECT_EQ(r.produced, (std::vector<StoichTerm>{{"E", 3}}));
  EXPECT_EQ(r.modifiers, (std::vector<std::string>{"T"}));
}

TEST(LoadModel, Case2Shape) {
  const ModelSpec m = builtin_model(CaseStudyId::case2());
  EXPECT_EQ(m.species.size(), 3u);
  EXPECT_EQ(m.params.size(), 13u);
  EXPECT_EQ(m.reactions.size(), 8u);
  EXPECT_EQ(m.influxes.size(), 2u);
  const auto& prolif = reaction(m, "effector_proliferation");
  EXPECT_EQ(prolif.modifiers, (std::vector<std::string>{"I"}));
  EXPECT_EQ(prolif.produced, (std::vector<StoichTerm>{{"E", 2}}));
  EXPECT_EQ(m.horizon, 600.0);
}

TEST(SaveModel, RoundTripsBuiltins) {
  for (const auto& id : {CaseStudyId::growth_demo(), CaseStudyId::case1(1), CaseStudyId::case1(3),
                         CaseStudyId::case2(), CaseStudyId::case3()}) {
    const ModelSpec m = builtin_model(id);
    EXPECT_EQ(load_model(save_model(m)), m) << id.name();
  }
}

TEST(ModelFiles, MatchBuiltins) {
  for (const auto& name : builtin_model_names()) {
    const ModelSpec from_file = load_model(read_file(std::string(TRISIM_MODELS_DIR) + "/" + name + ".model"));
    EXPECT_EQ(from_file, builtin_model(CaseStudyId::parse(name))) << name;
  }
}

TEST(Propensity, TumourDeathCase1) {
  const ModelSpec m = builtin_model(CaseStudyId::case1(1));
  const std::vector<double> x{100, 5};
  EXPECT_NEAR(propensity(m, reaction(m, "tumour_death"), x), 32.72, 1e-10);
}

TEST(Propensity, ZeroWhenConsumedFactorAbsent) {
  const ModelSpec m = builtin_model(CaseStudyId::case1(1));
  const std::vector<double> x{50, 0};
  for (const char* r : {"tumour_killed_by_effector", "effector_proliferation", "effector_killed_by_tumour",
                        "effector_death"})
    EXPECT_EQ(propensity(m, reaction(m, r), x), 0.0) << r;
}

TEST(Propensity, NegativeRateClamped) {
  const ModelSpec m = builtin_model(CaseStudyId::case3());
  const auto& r = reaction(m, "effector_proliferation");
  const std::vector<double> x{1e4, 10, 100, 1000};
  EXPECT_LT(rate_law(m, r, x), 0.0);
  EXPECT_EQ(propensity(m, r, x), 0.0);
}

TEST(ApplyReaction, Examples) {
  const ModelSpec m = builtin_model(CaseStudyId::case1(1));
  EXPECT_EQ(apply_reaction(m, reaction(m, "tumour_killed_by_effector"), std::vector<double>{5, 2}),
            (std::vector<double>{4, 2}));
  const ModelSpec influx = load_model("species E = 0\nreaction supply: -> E @ 1\n");
  EXPECT_EQ(apply_reaction(influx, influx.reactions[0], std::vector<double>{0}), (std::vector<double>{1}));
  EXPECT_THROW(apply_reaction(m, reaction(m, "tumour_death"), std::vector<double>{1, 3}), ValidationError);
}

TEST(ApplyReaction, LeavesOtherSpecies) {
  const ModelSpec m = builtin_model(CaseStudyId::case3());
  const std::vector<double> x{100, 100, 100, 100};
  for (const auto& r : m.reactions) {
    const auto y = apply_reaction(m, r, x);
    for (std::size_t i = 0; i < x.size(); ++i)
      if (r.net_change(m.species[i].name) == 0) {
        EXPECT_EQ(y[i], x[i]) << r.name;
      }
  }
}

TEST(OdeRhs, Case1Scenario1) {
  const ModelSpec m = builtin_model(CaseStudyId::case1(1));
  const auto d = ode_rhs(m, std::vector<double>{10, 5});
  EXPECT_NEAR(d[0], -33.9672, 1e-4);
  EXPECT_NEAR(d[1], 1.08164, 1e-4);
}

TEST(OdeRhs, ZeroStateNoInflux) {
  for (const auto& id : {CaseStudyId::growth_demo(), CaseStudyId::case2(), CaseStudyId::case3()}) {
    const ModelSpec m = builtin_model(id);
    const auto d = ode_rhs(m, std::vector<double>(m.species.size(), 0.0));
    for (double v : d) EXPECT_EQ(v, 0.0) << id.name();
  }
}

TEST(OdeRhs, Case2NoTumour) {
  const ModelSpec m = builtin_model(CaseStudyId::case2());
  const std::vector<double> x{0, 40, 250};
  const auto d = ode_rhs(m, x);
  EXPECT_EQ(d[m.species_index("T")], 0.0);
  EXPECT_DOUBLE_EQ(d[m.species_index("I")], -m.param("mu3") * 250);
}

TEST(OdeRhs, MatchesHandCodedSystems) {
  std::mt19937_64 gen(11);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (const auto& id : {CaseStudyId::growth_demo(), CaseStudyId::case1(1), CaseStudyId::case1(2),
                         CaseStudyId::case1(3), CaseStudyId::case1(4), CaseStudyId::case2(), CaseStudyId::case3()}) {
    const ModelSpec m = builtin_model(id);
    for (int k = 0; k < 100; ++k) {
      std::vector<double> x(m.species.size());
      for (double& v : x) v = std::pow(10.0, 6.0 * u(gen));
      const auto got = ode_rhs(m, x);
      const auto want = hand::rhs(id.name(), m, x);
      for (std::size_t i = 0; i < x.size(); ++i) {
        double scale = 0.0;
        for (const auto& r : m.reactions) scale = std::max(scale, std::abs(rate_law(m, r, x)));
        EXPECT_NEAR(got[i], want[i], 1e-12 * std::max(scale, 1.0)) << id.name() << " species " << i;
      }
    }
  }
}

TEST(Overrides, ParamsAndInitials) {
  ModelSpec m = builtin_model(CaseStudyId::case2(), {{"T", 500}, {"b", 2e-9}});
  EXPECT_EQ(m.species[m.species_index("T")].initial, 500.0);
  EXPECT_EQ(m.param("b"), 2e-9);
  EXPECT_THROW(builtin_model(CaseStudyId::case2(), {{"nope", 1}}), ValidationError);
  EXPECT_THROW(builtin_model(CaseStudyId::case2(), {{"E", -1}}), ValidationError);
}

TEST(CaseStudies, Case1Scenarios) {
  const ModelSpec m = builtin_model(CaseStudyId::case1(2));
  EXPECT_EQ(m.param("b"), 0.004);
  EXPECT_EQ(m.param("d"), 2.0);
  EXPECT_EQ(m.param("s"), 0.318);
  EXPECT_EQ(m.param("a"), 1.636);
  EXPECT_EQ(m.param("g"), 20.19);
  EXPECT_EQ(m.param("m"), 0.00311);
  EXPECT_EQ(m.param("n"), 1.0);
  EXPECT_EQ(m.param("p"), 1.131);
  EXPECT_EQ(m.horizon, 100.0);
  EXPECT_EQ(builtin_model(CaseStudyId::case1(3)).param("s"), 0.1181);
  EXPECT_EQ(builtin_model(CaseStudyId::case1(4)).param("s"), 0.0);
  EXPECT_THROW(CaseStudyId::case1(5), ValidationError);
  EXPECT_THROW(CaseStudyId::parse("case2", 2), ValidationError);
  EXPECT_THROW(CaseStudyId::parse("case9"), ValidationError);
}

TEST(CaseStudies, Case2Parameters) {
  const ModelSpec m = builtin_model(CaseStudyId::case2());
  const std::map<std::string, double> want{{"a", 0.18},  {"b", 1e-9},   {"c", 0.05},  {"aa", 1},     {"g2", 1e5},
                                           {"s1", 0},    {"s2", 0},     {"mu2", 0.03}, {"p1", 0.1245}, {"g1", 2e7},
                                           {"p2", 5},    {"g3", 1000},  {"mu3", 10}};
  for (const auto& [k, v] : want) EXPECT_EQ(m.param(k), v) << k;
  EXPECT_EQ(m.horizon, 600.0);
}

TEST(CaseStudies, Case3Parameters) {
  const ModelSpec m = builtin_model(CaseStudyId::case3());
  EXPECT_EQ(m.params.size(), 20u);
  const std::map<std::string, double> want{{"p4", 2.84}, {"theta", 1e6}, {"q1", 10},     {"q2", 0.1121},
                                           {"gamma", 10}, {"alpha", 0.001}, {"K", 1e9}, {"mu3", 10}};
  for (const auto& [k, v] : want) EXPECT_EQ(m.param(k), v) << k;
  EXPECT_EQ(builtin_model(CaseStudyId::case3(), {{"K", 1e10}}).param("K"), 1e10);
}

TEST(DependencyGraph, SingleDeath) {
  const auto g = build_dependency_graph(load_model("species X = 5\nparam mu = 1\nreaction death: X -> @ mu*X\n"));
  ASSERT_EQ(g.dependents.size(), 1u);
  EXPECT_EQ(g.dependents[0], (std::vector<std::size_t>{0}));
}

TEST(DependencyGraph, Case1TumourBirth) {
  const ModelSpec m = builtin_model(CaseStudyId::case1(1));
  const auto g = build_dependency_graph(m);
  std::set<std::string> hit;
  for (std::size_t j : g.dependents[0]) hit.insert(g.channel_names[j]);
  EXPECT_EQ(hit, (std::set<std::string>{"tumour_birth", "tumour_death", "tumour_killed_by_effector",
                                        "effector_proliferation", "effector_killed_by_tumour"}));
}

TEST(DependencyGraph, DisjointReactionsSelfOnly) {
  const auto g = build_dependency_graph(
      load_model("species A = 1\nspecies B = 1\nreaction a: A -> @ A\nreaction b: -> B @ 2\n"));
  EXPECT_EQ(g.dependents[0], (std::vector<std::size_t>{0}));
  EXPECT_EQ(g.dependents[1], (std::vector<std::size_t>{1}));
}

TEST(DependencyGraph, MatchesSymbolIntersection) {
  for (const auto& id : {CaseStudyId::case1(1), CaseStudyId::case2(), CaseStudyId::case3()}) {
    const ModelSpec m = builtin_model(id);
    const auto g = build_dependency_graph(m);
    for (std::size_t i = 0; i < m.reactions.size(); ++i) {
      std::set<std::string> changed;
      for (const auto& s : m.species)
        if (m.reactions[i].net_change(s.name) != 0) changed.insert(s.name);
      for (std::size_t j = 0; j < m.reactions.size(); ++j) {
        const auto syms = free_symbols(m.reactions[j].rate);
        const bool overlap = std::any_of(changed.begin(), changed.end(), [&](auto& s) { return syms.count(s); });
        const bool listed = std::count(g.dependents[i].begin(), g.dependents[i].end(), j) > 0;
        EXPECT_EQ(listed, overlap || i == j) << id.name() << " " << i << "->" << j;
      }
    }
  }
}
