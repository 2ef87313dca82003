#pragma once

// ptstab command line: simulate | verify | decay-rate | certify.
// Exit codes: 0 success/certified, 1 input error, 2 numerical failure,
// 3 hypothesis or certificate failure.

#include <algorithm>
#include <atomic>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "ptstab/blowup.hpp"
#include "ptstab/decay.hpp"
#include "ptstab/error.hpp"
#include "ptstab/sim.hpp"
#include "ptstab/systems.hpp"

namespace ptstab::cli {

enum ExitCode : int { kOk = 0, kInputError = 1, kNumericalFailure = 2, kNotCertified = 3 };

/// Thrown for bad flags, files or config fields; maps to exit 1.
class InputError : public Error {
 public:
  using Error::Error;
};

namespace detail {

namespace fs = std::filesystem;
using nlohmann::json;

inline std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InputError("cannot open '" + path + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

/// Parses JSON, reporting line and column on syntax errors.
inline json parse_json(const std::string& text, const std::string& where) {
  try {
    return json::parse(text);
  } catch (const json::parse_error& e) {
    std::size_t line = 1, col = 1;
    for (std::size_t i = 0; i + 1 < e.byte && i < text.size(); ++i) {
      if (text[i] == '\n') {
        ++line;
        col = 1;
      } else {
        ++col;
      }
    }
    throw InputError(where + ":" + std::to_string(line) + ":" + std::to_string(col) + ": malformed JSON");
  }
}

inline json read_json(const std::string& path) { return parse_json(read_file(path), path); }

// file path, or inline JSON when the argument starts with '{'
inline json json_arg(const std::string& arg, const std::string& where) {
  const auto first = arg.find_first_not_of(" \t\n");
  if (first != std::string::npos && arg[first] == '{') return parse_json(arg, where);
  return read_json(arg);
}

inline void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out || !(out << text) || !out.flush()) throw InputError("cannot write '" + path.string() + "'");
}

inline fs::path prepare_out(const std::string& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec || !fs::is_directory(dir)) throw InputError("output directory '" + dir + "' is not writable");
  return fs::path(dir);
}

inline std::string fmt(double v) {
  std::ostringstream ss;
  ss << std::setprecision(10) << v;
  return ss.str();
}

// --- simulate

struct RunConfig {
  std::string name;
  std::string preset;
  TimeHorizon horizon{5.0};
  json overrides = json::object();  // x0, params, integrator
};

struct GlobalOptions {
  std::string out = ".";
  std::string format = "csv";
};

struct SimulateOptions {
  std::vector<std::string> presets;
  std::string config;
  std::optional<double> T, Tbar;
  std::size_t max_rows = 20000;
  unsigned jobs = 1;
};

inline RunConfig run_config_from_json(const json& j, const SimulateOptions& o, const std::string& where) {
  if (!j.is_object()) throw InputError(where + ": run config must be a JSON object");
  if (j.empty()) throw InputError(where + ": empty config");
  static const char* known[] = {"name", "preset", "T", "Tbar", "x0", "params", "integrator"};
  for (const auto& [key, _] : j.items()) {
    if (std::find(std::begin(known), std::end(known), key) == std::end(known)) {
      throw InputError(where + ": unknown field '" + key + "'");
    }
  }
  auto field = [&](const char* key, auto fallback) {
    try {
      return j.contains(key) ? j.at(key).get<decltype(fallback)>() : fallback;
    } catch (const json::exception& e) {
      throw InputError(where + ": field '" + key + "': " + e.what());
    }
  };
  RunConfig rc;
  rc.preset = field("preset", std::string());
  if (rc.preset.empty()) throw InputError(where + ": field 'preset' is required");
  rc.name = field("name", rc.preset);
  const double T = o.T.value_or(field("T", 5.0));
  const std::optional<double> Tbar = o.Tbar ? o.Tbar : (j.contains("Tbar") ? std::optional(field("Tbar", 0.0)) : std::nullopt);
  try {
    rc.horizon = Tbar ? TimeHorizon(T, *Tbar) : TimeHorizon(T);
  } catch (const DomainError& e) {
    throw InputError(where + ": " + e.what());
  }
  for (const char* key : {"x0", "params", "integrator"}) {
    if (j.contains(key)) rc.overrides[key] = j.at(key);
  }
  return rc;
}

inline std::vector<RunConfig> collect_runs(const SimulateOptions& o) {
  std::vector<RunConfig> runs;
  if (!o.config.empty()) {
    const json cfg = read_json(o.config);
    if (cfg.is_object() && cfg.contains("runs")) {
      if (!cfg.at("runs").is_array() || cfg.at("runs").empty()) throw InputError(o.config + ": 'runs' must be a non-empty array");
      for (std::size_t i = 0; i < cfg.at("runs").size(); ++i) {
        runs.push_back(run_config_from_json(cfg.at("runs")[i], o, o.config + ": runs[" + std::to_string(i) + "]"));
      }
    } else {
      runs.push_back(run_config_from_json(cfg, o, o.config));
    }
  }
  for (const auto& p : o.presets) runs.push_back(run_config_from_json(json{{"preset", p}}, o, "--preset " + p));
  if (runs.empty()) throw InputError("simulate: give --preset or --config");
  for (std::size_t i = 0; i < runs.size(); ++i) {
    for (std::size_t k = 0; k < i; ++k) {
      if (runs[i].name == runs[k].name) throw InputError("duplicate run name '" + runs[i].name + "'");
    }
  }
  return runs;
}

struct RunOutcome {
  int code = kOk;
  std::string message;
};

inline json trajectory_json(const Trajectory& tr, std::size_t max_rows) {
  json cols = json::object();
  const auto names = tr.column_names();
  const auto idx = thinned_indices(tr.size(), max_rows);
  for (const auto& name : names) {
    std::vector<double> v;
    v.reserve(idx.size());
    if (name == "t") {
      for (auto i : idx) v.push_back(tr.times[i]);
    } else {
      const auto full = tr.signal(name);
      for (auto i : idx) v.push_back(full[i]);
    }
    cols[name] = std::move(v);
  }
  return {{"columns", names}, {"data", cols}};
}

inline RunOutcome execute_run(const RunConfig& rc, const SimulateOptions& o, const GlobalOptions& g, const fs::path& out) {
  RunOutcome res;
  std::ostringstream msg;
  try {
    Preset p = make_preset(rc.preset, rc.horizon, rc.overrides);
    const Trajectory tr = integrate(p.system, p.horizon, p.x0, p.options);
    const std::string stem = rc.name;
    if (g.format == "json") {
      write_text(out / (stem + ".json"), trajectory_json(tr, o.max_rows).dump() + "\n");
    } else {
      std::ostringstream csv;
      write_csv(csv, tr, o.max_rows);
      write_text(out / (stem + ".csv"), csv.str());
    }
    json meta = meta_json(tr);
    meta["name"] = rc.name;
    meta["preset"] = rc.preset;
    meta["config"] = p.config;
    meta["max_rows"] = o.max_rows;
    write_text(out / (stem + ".meta.json"), meta.dump(2) + "\n");
    write_text(out / (stem + ".metrics.json"), to_json_value(terminal_metrics(tr)).dump(2) + "\n");
    json figure = p.figure;
    figure["data"] = stem + (g.format == "json" ? ".json" : ".csv");
    write_text(out / (stem + ".figure.json"), figure.dump(2) + "\n");
    msg << rc.name << ": " << tr.stats.steps << " steps to t=" << fmt(tr.stats.final_time) << ", |x(end)| = "
        << fmt(tr.states.back().lpNorm<Eigen::Infinity>()) << "\n";
  } catch (const NonFiniteState& e) {
    res.code = kNumericalFailure;
    msg << rc.name << ": non-finite state at t=" << fmt(e.time()) << ": " << e.what() << "\n";
  } catch (const ConvergenceFailure& e) {
    res.code = kNumericalFailure;
    msg << rc.name << ": " << e.what() << "\n";
  } catch (const nlohmann::json::exception& e) {
    res.code = kInputError;
    msg << rc.name << ": config: " << e.what() << "\n";
  } catch (const Error& e) {
    res.code = kInputError;
    msg << rc.name << ": " << e.what() << "\n";
  }
  res.message = msg.str();
  return res;
}

inline int cmd_simulate(const SimulateOptions& o, const GlobalOptions& g, std::ostream& out, std::ostream& err) {
  const auto runs = collect_runs(o);
  const auto dir = prepare_out(g.out);
  std::vector<RunOutcome> results(runs.size());
  const unsigned jobs = std::max(1u, std::min<unsigned>(o.jobs, static_cast<unsigned>(runs.size())));
  if (jobs == 1) {
    for (std::size_t i = 0; i < runs.size(); ++i) results[i] = execute_run(runs[i], o, g, dir);
  } else {
    std::atomic<std::size_t> next{0};
    std::vector<std::thread> pool;
    for (unsigned w = 0; w < jobs; ++w) {
      pool.emplace_back([&] {
        std::size_t i;
        while ((i = next++) < runs.size()) results[i] = execute_run(runs[i], o, g, dir);
      });
    }
    for (auto& t : pool) t.join();
  }
  int code = kOk;
  for (const auto& r : results) {
    (r.code == kOk ? out : err) << r.message;
    code = std::max(code, r.code);
  }
  return code;
}

// --- verify

inline int cmd_verify(const std::string& spec_path, const std::string& preset, std::optional<double> T,
                      const GlobalOptions& g, std::ostream& out) {
  InterconnectionSpec spec;
  if (!preset.empty()) {
    if (!spec_path.empty()) throw InputError("verify: give a spec file or --preset, not both");
    const TimeHorizon h(T.value_or(5.0));
    if (preset == "example1") {
      spec = example1_interconnection(h.Tbar);
    } else if (preset == "example2-paper") {
      spec = example2_interconnection(Example2Params::reference(h.Tbar));
    } else if (preset == "example2-soft") {
      spec = example2_interconnection(Example2Params::soft(h.Tbar));
    } else {
      throw InputError("verify: no interconnection for preset '" + preset + "'");
    }
  } else {
    if (spec_path.empty()) throw InputError("verify: spec file required");
    try {
      spec = interconnection_from_json(read_json(spec_path));
    } catch (const nlohmann::json::exception& e) {
      throw InputError(spec_path + ": " + e.what());
    }
  }
  const auto report = check_theorem_conditions(spec);
  const json j = to_json_value(report);
  write_text(prepare_out(g.out) / "theorem_report.json", j.dump(2) + "\n");
  if (g.format == "json") {
    out << j.dump(2) << "\n";
  } else {
    out << "theorem " << to_string(report.theorem) << " (" << to_string(spec.topology) << ")\n";
    std::size_t width = 10;
    for (const auto& h : report.hypotheses) width = std::max(width, h.name.size());
    for (const auto& h : report.hypotheses) {
      out << "  " << std::left << std::setw(static_cast<int>(width)) << h.name << "  " << (h.pass ? "pass" : "FAIL")
          << "  " << h.detail << "\n";
    }
    out << "verdict: " << j.at("verdict").get<std::string>() << "\n";
  }
  return report.certified ? kOk : kNotCertified;
}

// --- decay-rate

inline GainMatrix gains_from_json(const nlohmann::json& j) {
  if (j.is_object() && j.contains("A")) return GainMatrix::from_matrix(ptstab::detail::matrix_from_json(j.at("A")));
  return gain_matrix_from_json(j);
}

inline int cmd_decay_rate(const std::string& path, const GlobalOptions& g, std::ostream& out) {
  GainMatrix gains = [&] {
    const json j = json_arg(path, "matrix");
    try {
      return gains_from_json(j);
    } catch (const nlohmann::json::exception& e) {
      throw InputError(path + ": " + e.what());
    }
  }();
  DecayRateResult r;
  try {
    r = weighted_decay_rate(gains);
  } catch (const NotDiagonallyStable& e) {
    json j = {{"verdict", "NotDiagonallyStable"}, {"reason", e.what()}};
    write_text(prepare_out(g.out) / "decay_rate.json", j.dump(2) + "\n");
    if (g.format == "json") {
      out << j.dump(2) << "\n";
    } else {
      out << "not diagonally stable: " << e.what() << "\n";
    }
    return kNotCertified;
  }
  const double bisect = bisection_decay_rate(gains);
  json j = to_json_value(r);
  j["verdict"] = "DiagonallyStable";
  j["bisection_delta"] = bisect;
  j["route_difference"] = std::abs(bisect - r.delta);
  write_text(prepare_out(g.out) / "decay_rate.json", j.dump(2) + "\n");
  if (g.format == "json") {
    out << j.dump(2) << "\n";
  } else {
    out << "delta      " << fmt(r.delta) << "\n";
    out << "q         ";
    for (Eigen::Index i = 0; i < r.q.size(); ++i) out << " " << fmt(r.q(i));
    out << "\nslack      " << fmt(r.slack) << "\n";
    out << "bisection  " << fmt(bisect) << "  (|diff| " << fmt(std::abs(bisect - r.delta)) << ")\n";
  }
  return kOk;
}

// --- certify

struct CertifyOptions {
  std::string csv;
  std::string signal;
  std::string rate;  // file path or inline JSON
  std::optional<double> T, Tbar;
  double onset = 0.0;
  bool search_onset = false;
};

inline int cmd_certify(const CertifyOptions& o, const GlobalOptions& g, std::ostream& out) {
  std::ifstream in(o.csv, std::ios::binary);
  if (!in) throw InputError("cannot open '" + o.csv + "'");
  const Table tab = read_csv(in);

  // horizon: flags win, then the simulate metadata next to the CSV
  std::optional<double> T = o.T, Tbar = o.Tbar;
  fs::path meta_path = fs::path(o.csv);
  meta_path.replace_extension(".meta.json");
  if ((!T || !Tbar) && fs::exists(meta_path)) {
    const json meta = read_json(meta_path.string());
    try {
      if (!T) T = meta.at("horizon").at("T").get<double>();
      if (!Tbar) Tbar = meta.at("horizon").at("Tbar").get<double>();
    } catch (const json::exception& e) {
      throw InputError(meta_path.string() + ": " + e.what());
    }
  }
  if (!T) throw InputError("certify: horizon unknown; pass --T or keep " + meta_path.filename().string() + " beside the CSV");
  const TimeHorizon horizon = Tbar ? TimeHorizon(*T, *Tbar) : TimeHorizon(*T);

  json rate_json = json_arg(o.rate, "--rate");
  if (!rate_json.is_object()) throw InputError("--rate must be a JSON object");
  if (!rate_json.contains("T")) rate_json["T"] = horizon.Tbar;
  BlowUpFunction rate = [&] {
    try {
      return blowup_from_json(rate_json);
    } catch (const json::exception& e) {
      throw InputError("--rate: " + std::string(e.what()));
    }
  }();

  const auto& values = tab.column(o.signal);
  const auto report = certify_pt_exp(tab.column("t"), values, rate, horizon, {o.onset, o.search_onset});
  json j = to_json_value(report);
  j["signal"] = o.signal;
  j["source"] = o.csv;
  write_text(prepare_out(g.out) / ("certificate_" + o.signal + ".json"), j.dump(2) + "\n");
  if (g.format == "json") {
    out << j.dump(2) << "\n";
  } else {
    out << o.signal << ": " << j.at("verdict").get<std::string>() << " (c = " << fmt(report.scale())
        << ", onset t = " << fmt(report.onset) << ", p0 = " << fmt(report.p0) << ")\n";
    if (report.first_violation) out << "first violation at t = " << fmt(report.times[*report.first_violation]) << "\n";
  }
  return report.certified ? kOk : kNotCertified;
}

}  // namespace detail

/// Runs the CLI on argv-style arguments (program name excluded).
inline int run_cli(const std::vector<std::string>& args, std::ostream& out = std::cout, std::ostream& err = std::cerr) {
  CLI::App app{"Prescribed-time stability toolkit"};
  app.require_subcommand(1);
  detail::GlobalOptions g;
  app.add_option("--out", g.out, "output directory")->capture_default_str();
  app.add_option("--format", g.format, "trajectory/report format")->check(CLI::IsMember({"csv", "json"}))->capture_default_str();

  detail::SimulateOptions sim;
  auto* simulate = app.add_subcommand("simulate", "integrate a preset closed loop and write CSV/JSON artifacts");
  simulate->add_option("--preset", sim.presets, "preset name (repeatable)")->check(CLI::IsMember(preset_names()));
  simulate->add_option("--config", sim.config, "JSON run config, or {\"runs\": [...]}");
  simulate->add_option("--T", sim.T, "prescribed time");
  simulate->add_option("--Tbar", sim.Tbar, "blow-up horizon of the presets' phi (default 1.01 T)");
  simulate->add_option("--max-rows", sim.max_rows, "thin the written trajectory to at most this many rows (0 = all)")->capture_default_str();
  simulate->add_option("--jobs", sim.jobs, "runs to execute concurrently")->check(CLI::PositiveNumber)->capture_default_str();

  std::string spec_path, verify_preset;
  std::optional<double> verify_T;
  auto* verify = app.add_subcommand("verify", "check theorem hypotheses for an interconnection spec");
  verify->add_option("spec", spec_path, "interconnection spec JSON");
  verify->add_option("--preset", verify_preset, "use a built-in example instead of a file");
  verify->add_option("--T", verify_T, "prescribed time for --preset");

  std::string matrix_path;
  auto* decay = app.add_subcommand("decay-rate", "weighted decay rate of a gain matrix");
  decay->add_option("matrix", matrix_path, "JSON file or inline {\"a\": [...], \"b\": [[...]]} / {\"A\": [[...]]}")->required();

  detail::CertifyOptions cert;
  auto* certify = app.add_subcommand("certify", "certify a trajectory column as prescribed-time exponentially convergent");
  certify->add_option("csv", cert.csv, "trajectory CSV written by simulate")->required();
  certify->add_option("--signal", cert.signal, "column to certify")->required();
  certify->add_option("--rate", cert.rate, "blow-up function: JSON file or inline JSON")->required();
  certify->add_option("--T", cert.T, "prescribed time (default: from the .meta.json beside the CSV)");
  certify->add_option("--Tbar", cert.Tbar, "horizon of the data");
  certify->add_option("--onset", cert.onset, "start of the exponential bound")->capture_default_str();
  certify->add_flag("--search-onset", cert.search_onset, "retry with onsets 0.1 T ... 0.9 T");

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kOk;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return kOk;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n";
    return kInputError;
  }

  try {
    if (simulate->parsed()) return detail::cmd_simulate(sim, g, out, err);
    if (verify->parsed()) return detail::cmd_verify(spec_path, verify_preset, verify_T, g, out);
    if (decay->parsed()) return detail::cmd_decay_rate(matrix_path, g, out);
    if (certify->parsed()) return detail::cmd_certify(cert, g, out);
  } catch (const NonFiniteState& e) {
    err << "error: non-finite state at t=" << e.time() << ": " << e.what() << "\n";
    return kNumericalFailure;
  } catch (const ConvergenceFailure& e) {
    err << "error: " << e.what() << "\n";
    return kNumericalFailure;
  } catch (const NotDiagonallyStable& e) {
    err << "error: " << e.what() << "\n";
    return kNotCertified;
  } catch (const NotHurwitz& e) {
    err << "error: " << e.what() << "\n";
    return kNotCertified;
  } catch (const Error& e) {
    err << "error: " << e.what() << "\n";
    return kInputError;
  } catch (const nlohmann::json::exception& e) {
    err << "error: " << e.what() << "\n";
    return kInputError;
  }
  return kInputError;
}

}  // namespace ptstab::cli
