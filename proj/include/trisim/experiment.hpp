#ifndef TRISIM_EXPERIMENT_HPP
#define TRISIM_EXPERIMENT_HPP

#include <algorithm>
#include <atomic>
#include <charconv>
#include <chrono>
#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <map>
#include <mutex>
#include <optional>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <json.hpp>
#include <openssl/evp.h>

#include "trisim/abm.hpp"
#include "trisim/case_studies.hpp"
#include "trisim/error.hpp"
#include "trisim/model.hpp"
#include "trisim/ode.hpp"
#include "trisim/ssa.hpp"
#include "trisim/trajectory.hpp"

namespace trisim {

enum class Engine { ode, ssa_direct, ssa_nrm, abm };

inline std::string to_string(Engine e) {
  switch (e) {
    case Engine::ode: return "ode";
    case Engine::ssa_direct: return "ssa-direct";
    case Engine::ssa_nrm: return "ssa-nrm";
    case Engine::abm: return "abm";
  }
  return {};
}

inline Engine parse_engine(std::string_view s) {
  if (s == "ode") return Engine::ode;
  if (s == "ssa-direct") return Engine::ssa_direct;
  if (s == "ssa-nrm" || s == "ssa") return Engine::ssa_nrm;
  if (s == "abm") return Engine::abm;
  throw ValidationError("unknown engine '" + std::string(s) + "' (expected ode, ssa-direct, ssa-nrm or abm)");
}

/// Where the model comes from: a built-in case study or a model file.
struct ModelSource {
  std::optional<CaseStudyId> builtin;
  std::filesystem::path file;

  static ModelSource from_builtin(CaseStudyId id) { return {id, {}}; }
  static ModelSource from_file(std::filesystem::path p) { return {std::nullopt, std::move(p)}; }

  std::string describe() const {
    if (builtin) {
      std::string s = builtin->name();
      if (builtin->kind == CaseStudyId::Kind::case1) s += ":" + std::to_string(builtin->scenario);
      return s;
    }
    return file.string();
  }
};

struct EnsembleSpec {
  ModelSource model;
  Engine engine = Engine::ssa_nrm;
  std::size_t n_runs = 1;
  std::uint64_t base_seed = 0;
  std::map<std::string, double> overrides;
  std::optional<double> horizon;
  /// Sample interval; also the agent step for the abm engine.
  std::optional<double> dt;
  std::filesystem::path out_dir;
  /// 0: TRISIM_JOBS, else the number of hardware threads.
  std::size_t jobs = 0;
  IntegratorConfig integrator;
  std::uint64_t max_internal_steps = 1'000'000;
};

struct EnsembleResult {
  std::vector<std::filesystem::path> run_files;
  std::filesystem::path mean_file;
  std::filesystem::path manifest_file;
  std::string model_hash;
  double wall_seconds = 0.0;
};

inline std::string read_text_file(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw ValidationError("cannot read '" + p.string() + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

/// SHA-256 of the canonical text of the model, hex encoded.
inline std::string model_hash(const ModelSpec& m) {
  const std::string text = save_model(m);
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (EVP_Digest(text.data(), text.size(), digest, &len, EVP_sha256(), nullptr) != 1)
    throw Error("SHA-256 computation failed");
  static constexpr char hex[] = "0123456789abcdef";
  std::string out;
  for (unsigned int i = 0; i < len; ++i) {
    out += hex[digest[i] >> 4];
    out += hex[digest[i] & 0xf];
  }
  return out;
}

/// The fully resolved model an ensemble runs.
inline ModelSpec resolve_model(const EnsembleSpec& spec) {
  ModelSpec m = spec.model.builtin ? builtin_model(*spec.model.builtin, spec.overrides) : [&] {
    ModelSpec loaded = load_model(read_text_file(spec.model.file));
    apply_overrides(loaded, spec.overrides);
    return loaded;
  }();
  if (spec.horizon) m.horizon = *spec.horizon;
  if (spec.dt) m.sample_interval = *spec.dt;
  validate(m);
  return m;
}

inline std::size_t default_jobs() {
  if (const char* env = std::getenv("TRISIM_JOBS")) {
    std::size_t v = 0;
    const std::string_view s(env);
    const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc() || ptr != s.data() + s.size() || v == 0)
      throw ValidationError("TRISIM_JOBS must be a positive integer");
    return v;
  }
  return std::max(1u, std::thread::hardware_concurrency());
}

/// One run of the given engine; seed is used by the stochastic engines.
inline Trajectory run_engine(const EnsembleSpec& spec, const ModelSpec& m, std::uint64_t seed) {
  switch (spec.engine) {
    case Engine::ode: return integrate(m, spec.integrator);
    case Engine::ssa_direct:
    case Engine::ssa_nrm: {
      SsaConfig c;
      c.method = spec.engine == Engine::ssa_direct ? SsaMethod::direct : SsaMethod::next_reaction;
      c.seed = seed;
      c.max_internal_steps = spec.max_internal_steps;
      return simulate_ssa(m, c);
    }
    case Engine::abm: {
      if (!spec.model.builtin) throw ValidationError("the abm engine needs a built-in case study");
      AbmWorld w = build_world(*spec.model.builtin, spec.overrides);
      w.config.horizon = m.horizon;
      w.config.dt = m.sample_interval;
      w.config.seed = seed;
      return simulate_abm(std::move(w));
    }
  }
  throw ValidationError("unknown engine");
}

// CSV: header "t,<species...>", time with 6 significant digits, values in
// shortest round-trip form.
inline void write_csv(std::ostream& out, const Trajectory& tr) {
  out << 't';
  for (const auto& s : tr.species_names()) out << ',' << s;
  out << '\n';
  char buf[64];
  for (std::size_t k = 0; k < tr.size(); ++k) {
    std::snprintf(buf, sizeof buf, "%.6g", tr.time(k));
    out << buf;
    for (std::size_t s = 0; s < tr.n_species(); ++s) {
      const auto res = std::to_chars(buf, buf + sizeof buf, tr.value(k, s));
      out << ',' << std::string_view(buf, static_cast<std::size_t>(res.ptr - buf));
    }
    out << '\n';
  }
}

inline void write_csv(const std::filesystem::path& p, const Trajectory& tr) {
  std::ofstream out(p, std::ios::binary);
  if (!out) throw Error("cannot write '" + p.string() + "'");
  write_csv(out, tr);
  if (!out) throw Error("write failed for '" + p.string() + "'");
}

inline Trajectory read_csv(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw ValidationError("cannot read '" + p.string() + "'");
  std::string line;
  if (!std::getline(in, line)) throw ValidationError("'" + p.string() + "' is empty");
  std::vector<std::string> names;
  {
    std::stringstream ss(line);
    std::string cell;
    std::getline(ss, cell, ',');
    if (cell != "t") throw ValidationError("'" + p.string() + "': first column must be 't'");
    while (std::getline(ss, cell, ',')) names.push_back(cell);
  }
  std::vector<std::vector<double>> rows;
  std::vector<double> times;
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    std::vector<double> vals;
    const char* b = line.data();
    const char* e = b + line.size();
    while (b <= e) {
      const char* comma = std::find(b, e, ',');
      double v = 0.0;
      const auto [ptr, ec] = std::from_chars(b, comma, v);
      if (ec != std::errc() || ptr != comma)
        throw ValidationError("'" + p.string() + "' line " + std::to_string(lineno) + ": bad number");
      vals.push_back(v);
      b = comma + 1;
    }
    if (vals.size() != names.size() + 1)
      throw ValidationError("'" + p.string() + "' line " + std::to_string(lineno) + ": wrong number of columns");
    times.push_back(vals[0]);
    rows.emplace_back(vals.begin() + 1, vals.end());
  }
  const double interval = times.size() > 1 ? times[1] - times[0] : 1.0;
  Trajectory tr(names, interval);
  for (std::size_t k = 0; k < rows.size(); ++k) tr.append(times[k], rows[k]);
  return tr;
}

/// Pointwise arithmetic mean of equally shaped trajectories, summed in run order.
inline Trajectory ensemble_mean(const std::vector<Trajectory>& runs) {
  if (runs.empty()) throw ValidationError("mean of an empty ensemble");
  const auto& first = runs.front();
  Trajectory mean(first.species_names(), first.sample_interval());
  std::vector<double> row(first.n_species());
  for (std::size_t k = 0; k < first.size(); ++k) {
    std::fill(row.begin(), row.end(), 0.0);
    for (const auto& r : runs) {
      if (r.size() != first.size() || r.n_species() != first.n_species())
        throw ValidationError("ensemble runs differ in shape");
      for (std::size_t s = 0; s < row.size(); ++s) row[s] += r.value(k, s);
    }
    for (double& v : row) v /= static_cast<double>(runs.size());
    mean.append(first.time(k), row);
  }
  return mean;
}

inline std::string run_file_name(std::size_t i) { return "run_" + std::to_string(i) + ".csv"; }

/// Runs every replicate (seed = base_seed + i), writes run_<i>.csv, mean.csv
/// and manifest.json. On any failure the outputs written so far are removed.
inline EnsembleResult run_ensemble(const EnsembleSpec& spec) {
  namespace fs = std::filesystem;
  if (spec.n_runs < 1) throw ValidationError("n_runs must be at least 1");
  if (spec.engine == Engine::ode && spec.n_runs != 1)
    throw ValidationError("the ode engine is deterministic; n_runs must be 1");
  if (spec.out_dir.empty()) throw ValidationError("an output directory is required");
  const ModelSpec m = resolve_model(spec);
  if (spec.engine == Engine::abm && !spec.model.builtin)
    throw ValidationError("the abm engine needs a built-in case study");
  const std::size_t jobs = std::min(spec.jobs ? spec.jobs : default_jobs(), spec.n_runs);

  const bool created_dir = !fs::exists(spec.out_dir);
  fs::create_directories(spec.out_dir);
  EnsembleResult result;
  for (std::size_t i = 0; i < spec.n_runs; ++i) result.run_files.push_back(spec.out_dir / run_file_name(i));
  result.mean_file = spec.out_dir / "mean.csv";
  result.manifest_file = spec.out_dir / "manifest.json";
  result.model_hash = model_hash(m);

  auto cleanup = [&] {
    std::error_code ec;
    for (const auto& f : result.run_files) fs::remove(f, ec);
    fs::remove(result.mean_file, ec);
    fs::remove(result.manifest_file, ec);
    if (created_dir) fs::remove(spec.out_dir, ec);
  };

  const auto t0 = std::chrono::steady_clock::now();
  std::vector<std::optional<Trajectory>> runs(spec.n_runs);
  std::atomic<std::size_t> next{0};
  std::atomic<bool> failed{false};
  std::mutex err_mu;
  std::optional<std::size_t> failed_run;
  std::string failure;

  auto worker = [&] {
    for (;;) {
      const std::size_t i = next.fetch_add(1);
      if (i >= spec.n_runs || failed.load()) return;
      try {
        Trajectory tr = run_engine(spec, m, spec.base_seed + i);
        write_csv(result.run_files[i], tr);
        runs[i] = std::move(tr);
      } catch (const std::exception& e) {
        std::lock_guard lock(err_mu);
        if (!failed_run || i < *failed_run) {
          failed_run = i;
          failure = e.what();
        }
        failed.store(true);
      }
    }
  };
  std::vector<std::thread> pool;
  for (std::size_t j = 1; j < jobs; ++j) pool.emplace_back(worker);
  worker();
  for (auto& th : pool) th.join();

  if (failed_run) {
    cleanup();
    throw SimulationError("run " + std::to_string(*failed_run) + " (seed " +
                              std::to_string(spec.base_seed + *failed_run) + ") failed: " + failure,
                          0.0);
  }

  try {
    std::vector<Trajectory> all;
    all.reserve(runs.size());
    for (auto& r : runs) all.push_back(std::move(*r));
    write_csv(result.mean_file, ensemble_mean(all));
    result.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();

    nlohmann::ordered_json j;
    j["model"] = {{"source", spec.model.describe()}, {"hash_sha256", result.model_hash}, {"text", save_model(m)}};
    j["engine"] = to_string(spec.engine);
    nlohmann::ordered_json cfg;
    cfg["n_runs"] = spec.n_runs;
    cfg["base_seed"] = spec.base_seed;
    cfg["horizon"] = m.horizon;
    cfg["sample_interval"] = m.sample_interval;
    if (spec.engine == Engine::abm) cfg["dt"] = m.sample_interval;
    if (spec.engine == Engine::ode) {
      cfg["rtol"] = spec.integrator.rtol;
      cfg["atol"] = spec.integrator.atol;
    }
    if (spec.engine == Engine::ssa_direct || spec.engine == Engine::ssa_nrm)
      cfg["max_internal_steps_per_interval"] = spec.max_internal_steps;
    cfg["overrides"] = spec.overrides;
    cfg["jobs"] = jobs;
    j["config"] = cfg;
    std::vector<std::uint64_t> seeds;
    for (std::size_t i = 0; i < spec.n_runs; ++i) seeds.push_back(spec.base_seed + i);
    j["seeds"] = seeds;
    j["species"] = m.species_names();
    std::vector<std::string> files;
    for (std::size_t i = 0; i < spec.n_runs; ++i) files.push_back(run_file_name(i));
    j["runs"] = files;
    j["mean"] = "mean.csv";
    j["wall_time_seconds"] = result.wall_seconds;
    std::ofstream out(result.manifest_file, std::ios::binary);
    out << j.dump(2) << '\n';
    if (!out) throw Error("cannot write manifest");
  } catch (...) {
    cleanup();
    throw;
  }
  return result;
}

/// Loads the run trajectories listed in a manifest directory.
inline std::vector<Trajectory> load_ensemble(const std::filesystem::path& dir) {
  const auto manifest = nlohmann::json::parse(read_text_file(dir / "manifest.json"), nullptr, false);
  if (manifest.is_discarded() || !manifest.contains("runs"))
    throw ValidationError("'" + (dir / "manifest.json").string() + "' is not a valid manifest");
  std::vector<Trajectory> runs;
  for (const auto& f : manifest["runs"]) runs.push_back(read_csv(dir / f.get<std::string>()));
  return runs;
}

}  // namespace trisim

#endif  // TRISIM_EXPERIMENT_HPP
