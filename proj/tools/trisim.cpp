#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "trisim/trisim.hpp"

namespace fs = std::filesystem;
using namespace trisim;

namespace {

std::map<std::string, double> parse_assignments(const std::vector<std::string>& items, const char* flag) {
  std::map<std::string, double> out;
  for (const auto& item : items) {
    const auto eq = item.find('=');
    if (eq == std::string::npos || eq == 0)
      throw ValidationError(std::string(flag) + " expects key=value, got '" + item + "'");
    const std::string key = item.substr(0, eq), val = item.substr(eq + 1);
    std::size_t used = 0;
    double v = 0.0;
    try {
      v = std::stod(val, &used);
    } catch (const std::exception&) {
      used = 0;
    }
    if (used == 0 || used != val.size()) throw ValidationError("bad number in " + std::string(flag) + " " + item);
    out[key] = v;
  }
  return out;
}

ModelSource model_source(const std::string& model, std::optional<int> scenario) {
  for (const auto& n : builtin_model_names())
    if (n == model) return ModelSource::from_builtin(CaseStudyId::parse(model, scenario));
  if (scenario) throw ValidationError("--scenario only applies to the built-in case1");
  if (!fs::exists(model)) throw ValidationError("'" + model + "' is neither a built-in model nor a file");
  return ModelSource::from_file(model);
}

struct ModelArgs {
  std::string model;
  std::optional<int> scenario;
  std::vector<std::string> sets;
  std::optional<double> horizon;
  std::optional<double> dt;

  void add(CLI::App* app) {
    app->add_option("--model,-m", model, "built-in name (see list-models) or model file")->required();
    app->add_option("--scenario", scenario, "case1 scenario 1..4");
    app->add_option("--set", sets, "override a parameter or initial value, key=value")->allow_extra_args(false);
    app->add_option("--horizon", horizon, "simulated days");
    app->add_option("--dt", dt, "sample interval in days (also the abm step)");
  }
};

struct ExtremaArgs {
  std::string kind = "maxima";
  std::size_t window = 5;
  double min_separation = 20.0;

  void add(CLI::App* app) {
    app->add_option("--kind", kind, "maxima or minima")->capture_default_str();
    app->add_option("--window", window, "moving-average window (odd)")->capture_default_str();
    app->add_option("--min-sep", min_separation, "minimum days between extrema")->capture_default_str();
  }
  ExtremaOptions options() const { return {window, min_separation}; }
};

void write_output(const std::string& out, const std::string& text) {
  if (out.empty() || out == "-") {
    std::cout << text;
    return;
  }
  std::ofstream f(out, std::ios::binary);
  if (!f) throw Error("cannot write '" + out + "'");
  f << text;
}

nlohmann::ordered_json fit_json(const FitResult& fit) {
  nlohmann::ordered_json j;
  for (std::size_t i = 0; i < fit.names.size(); ++i) j["params"][fit.names[i]] = fit.values[static_cast<Eigen::Index>(i)];
  j["residual_ss"] = fit.residual_ss;
  j["iterations"] = fit.iterations;
  j["converged"] = fit.converged;
  j["message"] = fit.message;
  return j;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"trisim: ODE, Gillespie and agent-based tumour-immune simulations"};
  app.require_subcommand(1);

  auto* list = app.add_subcommand("list-models", "list built-in models");

  ModelArgs run_model;
  std::string run_engine_name = "ode", run_out;
  std::uint64_t run_seed = 0;
  auto* run = app.add_subcommand("run", "simulate one trajectory and write CSV");
  run_model.add(run);
  run->add_option("--engine,-e", run_engine_name, "ode, ssa-direct, ssa-nrm or abm")->capture_default_str();
  run->add_option("--seed", run_seed, "RNG seed")->capture_default_str();
  run->add_option("--out,-o", run_out, "CSV file (default stdout)");

  ModelArgs ens_model;
  std::string ens_engine_name = "ssa-nrm", ens_out;
  std::size_t ens_runs = 1, ens_jobs = 0;
  std::uint64_t ens_seed = 0;
  auto* ens = app.add_subcommand("ensemble", "run seeded replicates into a directory");
  ens_model.add(ens);
  ens->add_option("--engine,-e", ens_engine_name, "ode, ssa-direct, ssa-nrm or abm")->capture_default_str();
  ens->add_option("--runs,-n", ens_runs, "number of runs")->capture_default_str();
  ens->add_option("--seed", ens_seed, "base seed; run i uses seed + i")->capture_default_str();
  ens->add_option("--out,-o", ens_out, "output directory")->required();
  ens->add_option("--jobs,-j", ens_jobs, "worker threads (default TRISIM_JOBS or CPU count)");

  std::string cmp_a, cmp_b, cmp_species = "T", cmp_family = "parab_up", cmp_out, cmp_label_a = "A", cmp_label_b = "B";
  std::optional<double> cmp_by_time;
  double cmp_threshold = 0.0;
  std::vector<double> cmp_slices;
  std::vector<std::string> cmp_init;
  ExtremaArgs cmp_extrema;
  auto* cmp = app.add_subcommand("compare", "two-stage comparison of two ensemble directories");
  cmp->add_option("dir_a", cmp_a, "first ensemble directory")->required()->check(CLI::ExistingDirectory);
  cmp->add_option("dir_b", cmp_b, "second ensemble directory")->required()->check(CLI::ExistingDirectory);
  cmp->add_option("--species,-s", cmp_species, "species column")->capture_default_str();
  cmp->add_option("--family,-f", cmp_family, "reciprocal5, parab_up, parab_down, parab_zero, parab_anchored:<c0>")
      ->capture_default_str();
  cmp_extrema.add(cmp);
  cmp->add_option("--init", cmp_init, "initial parameter values, name=value (default: from data)");
  cmp->add_option("--by-time", cmp_by_time, "extinction deadline in days (default horizon)");
  cmp->add_option("--threshold", cmp_threshold, "extinction threshold")->capture_default_str();
  cmp->add_option("--slice", cmp_slices, "times for rank-sum tests of the raw values");
  cmp->add_option("--label-a", cmp_label_a)->capture_default_str();
  cmp->add_option("--label-b", cmp_label_b)->capture_default_str();
  cmp->add_option("--out,-o", cmp_out, "JSON report file (default stdout)");

  std::string fit_in, fit_species = "T", fit_family = "parab_up", fit_out;
  std::vector<std::string> fit_init;
  ExtremaArgs fit_extrema;
  auto* fit = app.add_subcommand("fit", "fit a curve family to one trajectory's extrema");
  fit->add_option("input", fit_in, "trajectory CSV")->required()->check(CLI::ExistingFile);
  fit->add_option("--species,-s", fit_species)->capture_default_str();
  fit->add_option("--family,-f", fit_family)->capture_default_str();
  fit_extrema.add(fit);
  fit->add_option("--init", fit_init, "initial parameter values, name=value (default: from data)");
  fit->add_option("--out,-o", fit_out, "JSON file (default stdout)");

  std::string ext_in, ext_species = "T", ext_out;
  ExtremaArgs ext_extrema;
  auto* ext = app.add_subcommand("extrema", "local extrema of one trajectory as CSV");
  ext->add_option("input", ext_in, "trajectory CSV")->required()->check(CLI::ExistingFile);
  ext->add_option("--species,-s", ext_species)->capture_default_str();
  ext_extrema.add(ext);
  ext->add_option("--out,-o", ext_out, "CSV file (default stdout)");

  ModelArgs exp_model;
  std::string exp_out;
  auto* exp = app.add_subcommand("export-model", "print the resolved model file");
  exp_model.add(exp);
  exp->add_option("--out,-o", exp_out, "model file (default stdout)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 1;
  }

  auto spec_from = [](const ModelArgs& a) {
    EnsembleSpec s;
    s.model = model_source(a.model, a.scenario);
    s.overrides = parse_assignments(a.sets, "--set");
    s.horizon = a.horizon;
    s.dt = a.dt;
    return s;
  };

  try {
    if (*list) {
      for (const auto& n : builtin_model_names()) {
        if (n == "case1") {
          for (int sc = 1; sc <= 4; ++sc) std::cout << "case1 --scenario " << sc << '\n';
        } else {
          std::cout << n << '\n';
        }
      }
    } else if (*run) {
      EnsembleSpec s = spec_from(run_model);
      s.engine = parse_engine(run_engine_name);
      const ModelSpec m = resolve_model(s);
      const Trajectory tr = run_engine(s, m, run_seed);
      if (run_out.empty() || run_out == "-") {
        write_csv(std::cout, tr);
      } else {
        write_csv(fs::path(run_out), tr);
      }
    } else if (*ens) {
      EnsembleSpec s = spec_from(ens_model);
      s.engine = parse_engine(ens_engine_name);
      s.n_runs = ens_runs;
      s.base_seed = ens_seed;
      s.jobs = ens_jobs;
      s.out_dir = ens_out;
      const auto res = run_ensemble(s);
      std::cout << "wrote " << res.run_files.size() << " runs, mean.csv and manifest.json to " << ens_out << " in "
                << res.wall_seconds << " s\n";
    } else if (*cmp) {
      CompareOptions opt;
      opt.kind = parse_extrema_kind(cmp_extrema.kind);
      opt.extrema = cmp_extrema.options();
      opt.init = parse_assignments(cmp_init, "--init");
      opt.time_slices = cmp_slices;
      opt.extinction_threshold = cmp_threshold;
      opt.extinction_by = cmp_by_time;
      opt.label_a = cmp_label_a;
      opt.label_b = cmp_label_b;
      const auto rep = two_stage_compare(load_ensemble(cmp_a), load_ensemble(cmp_b), cmp_species,
                                         CurveFamily::parse(cmp_family), opt);
      write_output(cmp_out, rep.to_json().dump(2) + "\n");
    } else if (*fit) {
      const auto family = CurveFamily::parse(fit_family);
      const auto pts = detect_extrema(read_csv(fit_in), fit_species, parse_extrema_kind(fit_extrema.kind),
                                      fit_extrema.options())
                           .points;
      auto init = parse_assignments(fit_init, "--init");
      if (init.empty()) init = default_init(family, pts);
      const auto res = fit_curve(family, pts, init);
      auto j = fit_json(res);
      j["family"] = family.name();
      j["n_points"] = pts.size();
      write_output(fit_out, j.dump(2) + "\n");
      if (!res.converged) return 2;
    } else if (*ext) {
      const auto seq = detect_extrema(read_csv(ext_in), ext_species, parse_extrema_kind(ext_extrema.kind),
                                      ext_extrema.options());
      std::string text = "t," + ext_species + "\n";
      for (const auto& p : seq.points) text += detail::format_number(p.time) + "," + detail::format_number(p.value) + "\n";
      write_output(ext_out, text);
    } else if (*exp) {
      write_output(exp_out, save_model(resolve_model(spec_from(exp_model))));
    }
  } catch (const ValidationError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  } catch (const ModelError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  } catch (const ParseError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  }
  return 0;
}
