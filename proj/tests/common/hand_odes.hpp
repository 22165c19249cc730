#ifndef TRISIM_TESTS_HAND_ODES_HPP
#define TRISIM_TESTS_HAND_ODES_HPP

#include <cmath>
#include <string>
#include <vector>

#include "trisim/model.hpp"

// The case-study ODE systems written out term by term, independent of the
// reaction network. Case 2 tumour growth uses a*T*(1 - b*T).
namespace hand {

inline std::vector<double> case1(const trisim::ModelSpec& m, double T, double E) {
  const double a = m.param("a"), b = m.param("b"), n = m.param("n"), p = m.param("p"), g = m.param("g"),
               mm = m.param("m"), d = m.param("d"), s = m.param("s");
  return {a * T * (1 - b * T) - n * T * E, p * T * E / (g + T) - mm * T * E - d * E + s};
}

// Order T, E, I.
inline std::vector<double> case2(const trisim::ModelSpec& m, double T, double E, double I) {
  const double a = m.param("a"), b = m.param("b"), c = m.param("c"), aa = m.param("aa"), g2 = m.param("g2"),
               s1 = m.param("s1"), s2 = m.param("s2"), mu2 = m.param("mu2"), p1 = m.param("p1"),
               g1 = m.param("g1"), p2 = m.param("p2"), g3 = m.param("g3"), mu3 = m.param("mu3");
  const double dT = a * T * (1 - b * T) - aa * E * T / (g2 + T);
  const double dE = c * T - mu2 * E + p1 * E * I / (g1 + I) + s1;
  const double dI = p2 * E * T / (g3 + T) - mu3 * I + s2;
  return {dT, dE, dI};
}

// Order T, E, I, S.
inline std::vector<double> case3(const trisim::ModelSpec& m, double T, double E, double I, double S) {
  const double a = m.param("a"), aa = m.param("aa"), alpha = m.param("alpha"), c = m.param("c"),
               g1 = m.param("g1"), g2 = m.param("g2"), g3 = m.param("g3"), g4 = m.param("g4"),
               gamma = m.param("gamma"), mu1 = m.param("mu1"), mu2 = m.param("mu2"), mu3 = m.param("mu3"),
               p1 = m.param("p1"), p2 = m.param("p2"), p3 = m.param("p3"), p4 = m.param("p4"), q1 = m.param("q1"),
               q2 = m.param("q2"), theta = m.param("theta"), K = m.param("K");
  const double dT = a * T * (1 - T / K) - aa * E * T / (g2 + T) + p2 * S * T / (g3 + S);
  const double dE = c * T / (1 + gamma * S) - mu1 * E + (p1 * E * I / (g1 + I)) * (p1 - q1 * S / (q2 + S));
  const double dI = p3 * E * T / ((g4 + T) * (1 + alpha * S)) - mu2 * I;
  const double dS = p4 * T * T / (theta * theta + T * T) - mu3 * S;
  return {dT, dE, dI, dS};
}

// Growth demo with per-cell proliferation a*T^alpha and death b*T^beta.
inline std::vector<double> growth_demo(const trisim::ModelSpec& m, double T) {
  const double a = m.param("a"), b = m.param("b"), alpha = m.param("alpha"), beta = m.param("beta");
  return {T * (a * std::pow(T, alpha) - b * std::pow(T, beta))};
}

// Evaluates the hand-coded system for state x given in the model's species order.
inline std::vector<double> rhs(const std::string& case_name, const trisim::ModelSpec& m, const std::vector<double>& x) {
  auto at = [&](const char* s) { return x[m.species_index(s)]; };
  std::vector<double> out;
  std::vector<std::string> order;
  if (case_name == "case1") {
    out = case1(m, at("T"), at("E"));
    order = {"T", "E"};
  } else if (case_name == "case2") {
    out = case2(m, at("T"), at("E"), at("I"));
    order = {"T", "E", "I"};
  } else if (case_name == "case3") {
    out = case3(m, at("T"), at("E"), at("I"), at("S"));
    order = {"T", "E", "I", "S"};
  } else {
    out = growth_demo(m, at("T"));
    order = {"T"};
  }
  std::vector<double> r(x.size());
  for (std::size_t i = 0; i < order.size(); ++i) r[m.species_index(order[i])] = out[i];
  return r;
}

}  // namespace hand

#endif  // TRISIM_TESTS_HAND_ODES_HPP
