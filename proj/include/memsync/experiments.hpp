/**
 * Copyright 2026 The memsync Authors
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

// Experiment orchestration behind the memsync CLI: JSON configuration,
// analytic / sweep / simulate / fig2 commands, CSV tables and the SVG chart.

#pragma once

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <type_traits>
#include <limits>
#include <utility>
#include <vector>

#include "json.hpp"
#include "memsync/binary_chain.hpp"
#include "memsync/core_model.hpp"
#include "memsync/monte_carlo.hpp"
#include "memsync/number_resolved.hpp"

namespace memsync::experiments {

using json = nlohmann::json;

enum class Command { kAnalytic, kSimulate, kFig2, kSweep };

inline std::string to_string(Command c) {
  switch (c) {
    case Command::kAnalytic: return "analytic";
    case Command::kSimulate: return "simulate";
    case Command::kFig2: return "fig2";
    case Command::kSweep: return "sweep";
  }
  return "?";
}

inline std::optional<Command> parse_command(std::string_view s) {
  if (s == "analytic") return Command::kAnalytic;
  if (s == "simulate") return Command::kSimulate;
  if (s == "fig2") return Command::kFig2;
  if (s == "sweep") return Command::kSweep;
  return std::nullopt;
}

inline std::optional<DenominatorMode> parse_denominator_mode(std::string_view s) {
  if (s == "normalized") return DenominatorMode::kNormalized;
  if (s == "paper_literal") return DenominatorMode::kPaperLiteral;
  if (s == "per_mode") return DenominatorMode::kPerMode;
  return std::nullopt;
}

inline std::optional<DecoherenceMode> parse_decoherence_mode(std::string_view s) {
  if (s == "exact") return DecoherenceMode::kExact;
  if (s == "linearized") return DecoherenceMode::kLinearized;
  return std::nullopt;
}

struct SweepSpec {
  std::string key;
  std::vector<double> values;
};

struct Fig2Spec {
  int n_from = 2;
  int n_to = 12;
  double eta_postselected = 0.75;    ///< eta_s = eta_r for the postselected series
  double eta_unpostselected = 0.99;  ///< eta_s = eta_r for the unpostselected series
};

struct ExperimentConfig {
  std::optional<Command> mode;
  std::string preset;
  SystemParams params;
  std::optional<DecoherenceMode> decoherence;  ///< unset: linearized, except simulate -> exact
  double theta = 0.9;
  FidelityKind fidelity_kind = FidelityKind::kPostselected;
  DenominatorMode denominator_mode = DenominatorMode::kNormalized;
  SimConfig sim;
  std::optional<SweepSpec> sweep;
  Fig2Spec fig2;
  std::string out_dir = "out";
};

/// Parameter set of the multiphoton waiting-time comparison: d = 0,
/// 1 GHz pumping, 50% heralding, fidelity threshold 0.9, B = 1000 and
/// 75% storage / retrieval for the postselected series.
inline void apply_fig2_preset(ExperimentConfig& cfg) {
  cfg.preset = "fig2";
  cfg.params.source.h = 0.5;
  cfg.params.source.d = 0.0;
  cfg.params.pump_rate = 1e9;
  cfg.params.memory.B = 1000.0;
  cfg.params.memory.eta_s = 0.75;
  cfg.params.memory.eta_r = 0.75;
  cfg.theta = 0.9;
  cfg.fidelity_kind = FidelityKind::kPostselected;
  cfg.fig2 = Fig2Spec{};
}

namespace detail {

inline std::string join(const std::string& path, const std::string& key) {
  return path.empty() ? key : path + "." + key;
}

inline void reject_unknown(const json& obj, const std::string& path,
                           std::initializer_list<std::string_view> allowed) {
  for (auto it = obj.begin(); it != obj.end(); ++it) {
    bool ok = false;
    for (auto a : allowed) ok = ok || it.key() == a;
    if (!ok) throw ConfigError(join(path, it.key()), "unknown key");
  }
}

inline const json* find(const json& obj, const char* key) {
  auto it = obj.find(key);
  return it == obj.end() ? nullptr : &*it;
}

inline const json& section(const json& obj, const std::string& path, const char* key) {
  static const json empty = json::object();
  const json* v = find(obj, key);
  if (!v) return empty;
  if (!v->is_object()) throw ConfigError(join(path, key), "expected an object");
  return *v;
}

inline void read(const json& obj, const std::string& path, const char* key, double& out) {
  if (const json* v = find(obj, key)) {
    if (!v->is_number()) throw ConfigError(join(path, key), "expected a number");
    out = v->get<double>();
  }
}

template <class Int>
inline void read_int(const json& obj, const std::string& path, const char* key, Int& out) {
  if (const json* v = find(obj, key)) {
    if (!v->is_number_integer()) throw ConfigError(join(path, key), "expected an integer");
    if constexpr (std::is_unsigned_v<Int>) {
      if (v->is_number_unsigned())
        out = v->get<Int>();
      else if (v->get<long long>() >= 0)
        out = static_cast<Int>(v->get<long long>());
      else
        throw ConfigError(join(path, key), "must be non-negative");
    } else {
      out = v->get<Int>();
    }
  }
}

inline std::optional<std::string> read_string(const json& obj, const std::string& path,
                                              const char* key) {
  if (const json* v = find(obj, key)) {
    if (!v->is_string()) throw ConfigError(join(path, key), "expected a string");
    return v->get<std::string>();
  }
  return std::nullopt;
}

inline void check(bool ok, const std::string& path, const std::string& what) {
  if (!ok) throw ConfigError(path, what);
}

inline bool is_sweep_key(std::string_view k) {
  for (auto a : {"source.p", "source.h", "source.d", "memory.eta_s", "memory.eta_r", "memory.B",
                 "N", "pump_rate", "n_max"})
    if (k == a) return true;
  return false;
}

}  // namespace detail

/// Validated configuration from a JSON document. Every key is optional; an
/// empty document (or only whitespace) yields the documented defaults.
inline ExperimentConfig parse_config(std::string_view text) {
  using namespace detail;
  json doc;
  bool blank = true;
  for (char ch : text) blank = blank && std::isspace(static_cast<unsigned char>(ch));
  if (blank) {
    doc = json::object();
  } else {
    try {
      doc = json::parse(text.begin(), text.end());
    } catch (const json::parse_error& e) {
      throw ConfigError("<document>", std::string("malformed JSON: ") + e.what());
    }
  }
  if (!doc.is_object()) throw ConfigError("<document>", "top level must be an object");

  reject_unknown(doc, "", {"mode", "preset", "N", "pump_rate", "n_max", "herald_form", "theta",
                           "fidelity_kind", "denominator_mode", "decoherence", "source", "memory",
                           "sim", "sweep", "fig2", "output"});

  ExperimentConfig cfg;
  if (auto preset = read_string(doc, "", "preset")) {
    if (*preset != "fig2") throw ConfigError("preset", "unknown preset '" + *preset + "'");
    apply_fig2_preset(cfg);
  }
  if (auto m = read_string(doc, "", "mode")) {
    cfg.mode = parse_command(*m);
    check(cfg.mode.has_value(), "mode", "expected analytic|simulate|fig2|sweep");
  }

  SystemParams& sp = cfg.params;
  read_int(doc, "", "N", sp.N);
  check(sp.N >= 1, "N", "must be >= 1");
  read(doc, "", "pump_rate", sp.pump_rate);
  check(sp.pump_rate > 0.0 && std::isfinite(sp.pump_rate), "pump_rate", "must be positive");
  read_int(doc, "", "n_max", sp.n_max);
  check(sp.n_max >= 1, "n_max", "must be >= 1");
  if (auto f = read_string(doc, "", "herald_form")) {
    check(*f == "exact" || *f == "linear_dark", "herald_form", "expected exact|linear_dark");
    sp.herald_form = *f == "exact" ? HeraldForm::kExact : HeraldForm::kLinearDark;
  }
  read(doc, "", "theta", cfg.theta);
  check(cfg.theta > 0.0 && cfg.theta <= 1.0, "theta", "must lie in (0, 1]");
  if (auto k = read_string(doc, "", "fidelity_kind")) {
    check(*k == "postselected" || *k == "unpostselected", "fidelity_kind",
          "expected postselected|unpostselected");
    cfg.fidelity_kind =
        *k == "postselected" ? FidelityKind::kPostselected : FidelityKind::kUnpostselected;
  }
  if (auto m = read_string(doc, "", "denominator_mode")) {
    auto mode = parse_denominator_mode(*m);
    check(mode.has_value(), "denominator_mode", "expected normalized|paper_literal|per_mode");
    cfg.denominator_mode = *mode;
  }
  if (auto m = read_string(doc, "", "decoherence")) {
    cfg.decoherence = parse_decoherence_mode(*m);
    check(cfg.decoherence.has_value(), "decoherence", "expected exact|linearized");
  }

  const json& src = section(doc, "", "source");
  reject_unknown(src, "source", {"p", "h", "d"});
  read(src, "source", "p", sp.source.p);
  read(src, "source", "h", sp.source.h);
  read(src, "source", "d", sp.source.d);
  check(sp.source.p >= 0.0 && sp.source.p < 1.0, "source.p", "must lie in [0, 1)");
  check(sp.source.h >= 0.0 && sp.source.h <= 1.0, "source.h", "must lie in [0, 1]");
  check(sp.source.d >= 0.0 && sp.source.d < 1.0, "source.d", "must lie in [0, 1)");

  const json& mem = section(doc, "", "memory");
  reject_unknown(mem, "memory", {"eta_s", "eta_r", "B"});
  read(mem, "memory", "eta_s", sp.memory.eta_s);
  read(mem, "memory", "eta_r", sp.memory.eta_r);
  read(mem, "memory", "B", sp.memory.B);
  check(sp.memory.eta_s >= 0.0 && sp.memory.eta_s <= 1.0, "memory.eta_s", "must lie in [0, 1]");
  check(sp.memory.eta_r >= 0.0 && sp.memory.eta_r <= 1.0, "memory.eta_r", "must lie in [0, 1]");
  check(sp.memory.B >= 1.0, "memory.B", "must be >= 1");

  const json& sim = section(doc, "", "sim");
  reject_unknown(sim, "sim", {"steps", "seed", "replicas", "warmup_steps", "threads"});
  read_int(sim, "sim", "steps", cfg.sim.steps);
  read_int(sim, "sim", "seed", cfg.sim.seed);
  read_int(sim, "sim", "replicas", cfg.sim.replicas);
  read_int(sim, "sim", "threads", cfg.sim.threads);
  if (find(sim, "warmup_steps")) {
    long w = 0;
    read_int(sim, "sim", "warmup_steps", w);
    check(w >= 0, "sim.warmup_steps", "must be >= 0");
    cfg.sim.warmup_steps = w;
  }
  check(cfg.sim.steps >= 1, "sim.steps", "must be >= 1");
  check(cfg.sim.replicas >= 1, "sim.replicas", "must be >= 1");
  check(cfg.sim.threads >= 1, "sim.threads", "must be >= 1");
  check(!cfg.sim.warmup_steps || *cfg.sim.warmup_steps < cfg.sim.steps, "sim.warmup_steps",
        "must be smaller than sim.steps");

  if (const json* sw = find(doc, "sweep")) {
    check(sw->is_object(), "sweep", "expected an object");
    reject_unknown(*sw, "sweep", {"key", "values", "from", "to", "points", "log"});
    SweepSpec spec;
    auto key = read_string(*sw, "sweep", "key");
    check(key.has_value(), "sweep.key", "required");
    check(is_sweep_key(*key), "sweep.key", "not a sweepable parameter: " + *key);
    spec.key = *key;
    if (const json* vals = find(*sw, "values")) {
      check(vals->is_array() && !vals->empty(), "sweep.values", "expected a non-empty array");
      for (const json& v : *vals) {
        check(v.is_number(), "sweep.values", "expected numbers");
        spec.values.push_back(v.get<double>());
      }
    } else {
      double from = 0, to = 0;
      int points = 0;
      check(find(*sw, "from") && find(*sw, "to") && find(*sw, "points"), "sweep",
            "give either values or from/to/points");
      read(*sw, "sweep", "from", from);
      read(*sw, "sweep", "to", to);
      read_int(*sw, "sweep", "points", points);
      check(points >= 2, "sweep.points", "must be >= 2");
      bool log = false;
      if (const json* l = find(*sw, "log")) {
        check(l->is_boolean(), "sweep.log", "expected a boolean");
        log = l->get<bool>();
      }
      if (log) check(from > 0.0 && to > 0.0, "sweep.from", "log sweeps need positive bounds");
      for (int i = 0; i < points; ++i) {
        const double t = static_cast<double>(i) / (points - 1);
        spec.values.push_back(log ? from * std::pow(to / from, t) : from + (to - from) * t);
      }
    }
    cfg.sweep = std::move(spec);
  }

  const json& fig = section(doc, "", "fig2");
  reject_unknown(fig, "fig2", {"n_from", "n_to", "eta_postselected", "eta_unpostselected"});
  read_int(fig, "fig2", "n_from", cfg.fig2.n_from);
  read_int(fig, "fig2", "n_to", cfg.fig2.n_to);
  read(fig, "fig2", "eta_postselected", cfg.fig2.eta_postselected);
  read(fig, "fig2", "eta_unpostselected", cfg.fig2.eta_unpostselected);
  check(cfg.fig2.n_from >= 1, "fig2.n_from", "must be >= 1");
  check(cfg.fig2.n_to >= cfg.fig2.n_from, "fig2.n_to", "must be >= fig2.n_from");
  check(cfg.fig2.eta_postselected >= 0.0 && cfg.fig2.eta_postselected <= 1.0,
        "fig2.eta_postselected", "must lie in [0, 1]");
  check(cfg.fig2.eta_unpostselected >= 0.0 && cfg.fig2.eta_unpostselected <= 1.0,
        "fig2.eta_unpostselected", "must lie in [0, 1]");

  const json& out = section(doc, "", "output");
  reject_unknown(out, "output", {"dir"});
  if (auto dir = read_string(out, "output", "dir")) cfg.out_dir = *dir;
  return cfg;
}

/// Full-precision scientific notation; nan / inf spelled out.
inline std::string format_number(double x) {
  if (std::isnan(x)) return "nan";
  if (std::isinf(x)) return x > 0 ? "inf" : "-inf";
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17e", x);
  return buf;
}

class CsvTable {
 public:
  explicit CsvTable(std::vector<std::string> header) : header_(std::move(header)) {}

  void add_row(std::vector<std::string> row) {
    if (row.size() != header_.size()) throw InvalidArgument("CsvTable: row width mismatch");
    rows_.push_back(std::move(row));
  }
  std::size_t rows() const noexcept { return rows_.size(); }
  const std::vector<std::string>& header() const noexcept { return header_; }
  const std::vector<std::string>& row(std::size_t i) const { return rows_.at(i); }

  std::string str() const {
    std::string s;
    auto emit = [&](const std::vector<std::string>& cells) {
      for (std::size_t i = 0; i < cells.size(); ++i) {
        if (i) s += ',';
        s += escape(cells[i]);
      }
      s += '\n';
    };
    emit(header_);
    for (const auto& r : rows_) emit(r);
    return s;
  }

 private:
  static std::string escape(const std::string& cell) {
    if (cell.find_first_of(",\"\n") == std::string::npos) return cell;
    std::string out = "\"";
    for (char ch : cell) {
      if (ch == '"') out += '"';
      out += ch;
    }
    return out + "\"";
  }

  std::vector<std::string> header_;
  std::vector<std::vector<std::string>> rows_;
};

struct CellError {
  std::string cell;
  std::string message;
};

struct CommandOutput {
  std::vector<std::pair<std::string, std::string>> files;  ///< (file name, contents)
  std::vector<CellError> errors;
};

/// Parameters with the decoherence mode resolved for the given command.
inline SystemParams effective_params(const ExperimentConfig& cfg, Command cmd) {
  SystemParams p = cfg.params;
  p.memory.decoherence = cfg.decoherence.value_or(
      cmd == Command::kSimulate ? DecoherenceMode::kExact : DecoherenceMode::kLinearized);
  return p;
}

inline const std::vector<std::string>& analytic_columns() {
  static const std::vector<std::string> cols = {
      "N", "p", "h", "d", "eta_s", "eta_r", "B", "pump_rate", "n_max", "decoherence",
      "denominator_mode", "q", "Y", "V", "R", "r", "s", "b", "P", "p_sync", "c_sync",
      "c_sync_closed_form", "waiting_time", "c_resolved", "P_resolved", "p_less", "p_geq", "F",
      "F_tilde", "F_no_mem", "c_no_mem", "waiting_time_resolved", "waiting_time_no_mem",
      "truncation_residual", "p_sync_deficit", "error"};
  return cols;
}

/// One analytic row. Failures are confined to the affected cells, which are
/// written as nan, and collected into `errors` under `cell_prefix`.
inline std::vector<std::string> analytic_row(const SystemParams& p, DenominatorMode mode,
                                             const std::string& cell_prefix,
                                             std::vector<CellError>& errors) {
  const double nan = std::numeric_limits<double>::quiet_NaN();
  std::vector<std::string> row = {
      std::to_string(p.N), format_number(p.source.p), format_number(p.source.h),
      format_number(p.source.d), format_number(p.memory.eta_s), format_number(p.memory.eta_r),
      format_number(p.memory.B), format_number(p.pump_rate), std::to_string(p.n_max),
      to_string(p.memory.decoherence), to_string(mode)};
  std::string row_errors;
  auto note = [&](const std::string& what, const std::string& msg) {
    errors.push_back({cell_prefix + what, msg});
    if (!row_errors.empty()) row_errors += "; ";
    row_errors += what + ": " + msg;
  };

  std::vector<double> bin(15, nan);
  try {
    const SyncReport s = coincidence_closed_form(p);
    bin = {s.q,      s.Y,      s.V,      s.R,      s.rates.r,
           s.rates.s, s.rates.b, s.P,    s.p_sync, s.c_sync,
           s.c_sync_closed_form, s.waiting_time, nan, nan, nan};
  } catch (const Error& e) {
    note("binary", e.what());
  }
  for (int i = 0; i < 12; ++i) row.push_back(format_number(bin[i]));

  std::vector<double> res(12, nan);
  try {
    const FidelityReport f = evaluate_resolved(p, mode);
    res = {f.c,
           f.P,
           f.p_less,
           f.p_geq,
           f.F.value_or(nan),
           f.F_tilde.value_or(nan),
           f.F_no_mem,
           f.c_no_mem,
           f.waiting_time,
           f.waiting_time_no_mem,
           f.truncation_residual,
           f.p_sync.deficit};
    if (!f.F) note("F", "undefined (R*Y = 0)");
    if (!f.F_tilde) note("F_tilde", "undefined: denominator not positive in mode " + to_string(mode));
  } catch (const Error& e) {
    note("resolved", e.what());
  }
  for (double v : res) row.push_back(format_number(v));
  row.push_back(row_errors);
  return row;
}

inline CommandOutput cmd_analytic(const ExperimentConfig& cfg) {
  CommandOutput out;
  CsvTable t(analytic_columns());
  t.add_row(analytic_row(effective_params(cfg, Command::kAnalytic), cfg.denominator_mode, "",
                         out.errors));
  out.files.emplace_back("analytic.csv", t.str());
  return out;
}

inline void set_sweep_value(SystemParams& p, const std::string& key, double v) {
  if (key == "source.p") p.source.p = v;
  else if (key == "source.h") p.source.h = v;
  else if (key == "source.d") p.source.d = v;
  else if (key == "memory.eta_s") p.memory.eta_s = v;
  else if (key == "memory.eta_r") p.memory.eta_r = v;
  else if (key == "memory.B") p.memory.B = v;
  else if (key == "N") p.N = static_cast<int>(std::lround(v));
  else if (key == "pump_rate") p.pump_rate = v;
  else if (key == "n_max") p.n_max = static_cast<int>(std::lround(v));
  else throw ConfigError("sweep.key", "not a sweepable parameter: " + key);
}

inline CommandOutput cmd_sweep(const ExperimentConfig& cfg) {
  if (!cfg.sweep) throw ConfigError("sweep", "the sweep command needs a sweep section");
  CommandOutput out;
  std::vector<std::string> cols = {"sweep_key", "sweep_value"};
  for (const auto& c : analytic_columns()) cols.push_back(c);
  CsvTable t(cols);
  const SystemParams base = effective_params(cfg, Command::kSweep);
  for (std::size_t i = 0; i < cfg.sweep->values.size(); ++i) {
    const double v = cfg.sweep->values[i];
    SystemParams p = base;
    set_sweep_value(p, cfg.sweep->key, v);
    std::vector<std::string> row = {cfg.sweep->key, format_number(v)};
    const std::string prefix = "sweep[" + std::to_string(i) + "].";
    try {
      validate(p);
      for (auto& cell : analytic_row(p, cfg.denominator_mode, prefix, out.errors))
        row.push_back(std::move(cell));
    } catch (const InvalidArgument& e) {
      out.errors.push_back({prefix + "params", e.what()});
      for (std::size_t k = 0; k + 1 < analytic_columns().size(); ++k) row.push_back("nan");
      row.push_back(std::string("params: ") + e.what());
    }
    t.add_row(std::move(row));
  }
  out.files.emplace_back("sweep.csv", t.str());
  return out;
}

inline CommandOutput cmd_simulate(const ExperimentConfig& cfg) {
  CommandOutput out;
  const SystemParams p = effective_params(cfg, Command::kSimulate);
  const SimStats stats = run_simulation(p, cfg.sim);

  CsvTable reps({"replica", "counted_steps", "charged_unit_steps", "believed_unit_steps",
                 "heralds", "readout_events", "memory_readouts", "exact_coincidences",
                 "geqN_coincidences", "delivered_photons", "available_photons",
                 "conservation_violations"});
  for (std::size_t i = 0; i < stats.replicas.size(); ++i) {
    const ReplicaCounts& c = stats.replicas[i];
    reps.add_row({std::to_string(i), std::to_string(c.counted_steps),
                  std::to_string(c.charged_unit_steps), std::to_string(c.believed_unit_steps),
                  std::to_string(c.heralds), std::to_string(c.readout_events),
                  std::to_string(c.memory_readouts), std::to_string(c.exact_coincidences),
                  std::to_string(c.geqN_coincidences), std::to_string(c.delivered_photons),
                  std::to_string(c.available_photons), std::to_string(c.conservation_violations)});
  }

  CsvTable table({"quantity", "analytic", "simulated", "stderr", "rel_deviation", "z", "flag"});
  try {
    const SyncReport rep = coincidence_closed_form(p);
    const FidelityReport fid = evaluate_resolved(p, cfg.denominator_mode);
    for (const Discrepancy& d : compare_to_analytic(stats, p, rep, fid)) {
      const bool green = std::isfinite(d.z) && std::abs(d.z) <= 3.0;
      table.add_row({d.quantity, format_number(d.analytic), format_number(d.simulated),
                     format_number(d.std_error), format_number(d.rel_deviation),
                     format_number(d.z), green ? "green" : "red"});
    }
  } catch (const Error& e) {
    out.errors.push_back({"analytic", e.what()});
  }
  out.files.emplace_back("simulate.csv", table.str());
  out.files.emplace_back("simulate_replicas.csv", reps.str());
  return out;
}

struct Fig2Row {
  int N = 0;
  std::string series;
  double eta_s = 0.0;
  double eta_r = 0.0;
  double p_theta = std::numeric_limits<double>::quiet_NaN();
  double q = std::numeric_limits<double>::quiet_NaN();
  double fidelity = std::numeric_limits<double>::quiet_NaN();
  double c = std::numeric_limits<double>::quiet_NaN();
  double waiting_time = std::numeric_limits<double>::quiet_NaN();
  std::string error;
};

inline const char* kSeriesUnsync = "unsynchronized";
inline const char* kSeriesPost = "sync_postselected";
inline const char* kSeriesUnpost = "sync_unpostselected";

/// Unsynchronized sources at the fidelity threshold: p_h(1) = theta, c = (q theta)^N.
inline Fig2Row fig2_unsync_row(const SystemParams& base, double theta, int N) {
  Fig2Row row;
  row.N = N;
  row.series = kSeriesUnsync;
  SystemParams p = base;
  p.N = N;
  p.source.p = threshold_p_unsync(p.source.h, theta);
  row.p_theta = p.source.p;
  row.q = herald_prob(p.source);
  row.fidelity = fidelity_no_memory(heralded_dist(p.source, p.n_max, p.herald_form));
  row.c = std::pow(row.q * row.fidelity, N);
  row.waiting_time = waiting_time(row.c, p.pump_rate);
  return row;
}

inline Fig2Row fig2_sync_row(const SystemParams& base, double theta, int N, double eta,
                             FidelityKind kind, DenominatorMode mode) {
  Fig2Row row;
  row.N = N;
  row.series = kind == FidelityKind::kPostselected ? kSeriesPost : kSeriesUnpost;
  row.eta_s = row.eta_r = eta;
  SystemParams p = base;
  p.N = N;
  p.memory.eta_s = p.memory.eta_r = eta;
  const ThresholdResult t = threshold_p_sync(p, theta, kind, mode);
  row.p_theta = t.p;
  row.q = t.report.q;
  row.fidelity = t.fidelity;
  row.c = t.report.c;
  row.waiting_time = t.report.waiting_time;
  return row;
}

inline std::vector<Fig2Row> fig2_rows(const ExperimentConfig& cfg) {
  const SystemParams base = effective_params(cfg, Command::kFig2);
  if (base.source.d != 0.0) throw ConfigError("source.d", "fig2 assumes d = 0");
  std::vector<Fig2Row> rows;
  for (int N = cfg.fig2.n_from; N <= cfg.fig2.n_to; ++N) {
    auto guarded = [&](const char* series, double eta, auto&& fn) {
      try {
        rows.push_back(fn());
      } catch (const Error& e) {
        Fig2Row r;
        r.N = N;
        r.series = series;
        r.eta_s = r.eta_r = eta;
        r.error = e.what();
        rows.push_back(std::move(r));
      }
    };
    guarded(kSeriesUnsync, 0.0, [&] { return fig2_unsync_row(base, cfg.theta, N); });
    guarded(kSeriesPost, cfg.fig2.eta_postselected, [&] {
      return fig2_sync_row(base, cfg.theta, N, cfg.fig2.eta_postselected,
                           FidelityKind::kPostselected, cfg.denominator_mode);
    });
    guarded(kSeriesUnpost, cfg.fig2.eta_unpostselected, [&] {
      return fig2_sync_row(base, cfg.theta, N, cfg.fig2.eta_unpostselected,
                           FidelityKind::kUnpostselected, cfg.denominator_mode);
    });
  }
  return rows;
}

/// "230 ns", "12.3 us", "4.5 s", "29.6 years", ...
inline std::string human_duration(double seconds) {
  if (!std::isfinite(seconds)) return "inf";
  struct Unit {
    double scale;
    const char* name;
  };
  static const Unit units[] = {{1e-9, "ns"},   {1e-6, "us"},   {1e-3, "ms"},
                               {1.0, "s"},     {3600.0, "h"},  {86400.0, "days"},
                               {3.15576e7, "years"}};
  const Unit* u = &units[0];
  for (const Unit& cand : units)
    if (seconds >= cand.scale) u = &cand;
  if (u->scale == 86400.0 && seconds >= 3.15576e7) u = &units[6];
  char buf[48];
  std::snprintf(buf, sizeof buf, "%.3g %s", seconds / u->scale, u->name);
  return buf;
}

/// Grouped log-scale bar chart of waiting time against N.
inline std::string render_fig2_svg(const std::vector<Fig2Row>& rows) {
  const double width = 960, height = 540;
  const double left = 90, right = 170, top = 40, bottom = 60;
  const double plot_w = width - left - right, plot_h = height - top - bottom;

  int n_lo = rows.empty() ? 1 : rows.front().N, n_hi = n_lo;
  for (const Fig2Row& r : rows) {
    n_lo = std::min(n_lo, r.N);
    n_hi = std::max(n_hi, r.N);
  }
  double lo = 0, hi = 0;
  bool any = false;
  for (const Fig2Row& r : rows) {
    if (!(r.waiting_time > 0.0) || !std::isfinite(r.waiting_time)) continue;
    const double e = std::log10(r.waiting_time);
    lo = any ? std::min(lo, e) : e;
    hi = any ? std::max(hi, e) : e;
    any = true;
  }
  const int dec_lo = static_cast<int>(std::floor(lo)) - 1;
  const int dec_hi = static_cast<int>(std::ceil(hi)) + 1;
  auto y_of = [&](double e) { return top + plot_h * (dec_hi - e) / (dec_hi - dec_lo); };

  std::ostringstream s;
  char buf[256];
  auto fmt = [&](const char* f, auto... args) {
    std::snprintf(buf, sizeof buf, f, args...);
    s << buf;
  };
  fmt("<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"%.0f\" height=\"%.0f\" "
      "viewBox=\"0 0 %.0f %.0f\" font-family=\"sans-serif\" font-size=\"12\">\n",
      width, height, width, height);
  s << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  fmt("<text x=\"%.1f\" y=\"22\" text-anchor=\"middle\" font-size=\"15\">Multiphoton waiting "
      "times</text>\n",
      left + plot_w / 2);

  for (int dec = dec_lo; dec <= dec_hi; ++dec) {
    const double y = y_of(dec);
    fmt("<line x1=\"%.1f\" y1=\"%.1f\" x2=\"%.1f\" y2=\"%.1f\" stroke=\"#ddd\"/>\n", left, y,
        left + plot_w, y);
    fmt("<text x=\"%.1f\" y=\"%.1f\" text-anchor=\"end\">1e%d s</text>\n", left - 6, y + 4, dec);
  }
  struct Ref {
    double seconds;
    const char* label;
  };
  for (const Ref ref : {Ref{1e-6, "1 us"}, Ref{1e-3, "1 ms"}, Ref{1.0, "1 s"},
                        Ref{3600.0, "1 hour"}, Ref{3.15576e7, "1 year"}}) {
    const double e = std::log10(ref.seconds);
    if (e < dec_lo || e > dec_hi) continue;
    const double y = y_of(e);
    fmt("<line x1=\"%.1f\" y1=\"%.1f\" x2=\"%.1f\" y2=\"%.1f\" stroke=\"#888\" "
        "stroke-dasharray=\"4 3\"/>\n",
        left, y, left + plot_w, y);
    fmt("<text x=\"%.1f\" y=\"%.1f\" fill=\"#555\">%s</text>\n", left + plot_w + 4, y + 4,
        ref.label);
  }

  const int groups = n_hi - n_lo + 1;
  const double group_w = plot_w / groups;
  const double bar_w = group_w / 4;
  struct Series {
    const char* name;
    const char* color;
    const char* label;
  };
  const Series series[] = {{kSeriesUnsync, "#3b6fd8", "unsynchronized"},
                           {kSeriesPost, "#d83b3b", "synchronized, postselected"},
                           {kSeriesUnpost, "#3ba04a", "synchronized, unpostselected"}};
  for (const Fig2Row& r : rows) {
    int si = 0;
    while (si < 3 && r.series != series[si].name) ++si;
    if (si == 3) continue;
    const double x = left + (r.N - n_lo) * group_w + bar_w * (0.5 + si);
    if (!(r.waiting_time > 0.0) || !std::isfinite(r.waiting_time)) {
      fmt("<text x=\"%.1f\" y=\"%.1f\" text-anchor=\"middle\" fill=\"%s\">n/a</text>\n",
          x + bar_w / 2, top + plot_h - 4, series[si].color);
      continue;
    }
    const double y = y_of(std::log10(r.waiting_time));
    fmt("<rect x=\"%.1f\" y=\"%.1f\" width=\"%.1f\" height=\"%.1f\" fill=\"%s\">"
        "<title>N=%d %s: %s</title></rect>\n",
        x, y, bar_w, top + plot_h - y, series[si].color, r.N, series[si].label,
        human_duration(r.waiting_time).c_str());
  }
  for (int N = n_lo; N <= n_hi; ++N)
    fmt("<text x=\"%.1f\" y=\"%.1f\" text-anchor=\"middle\">%d</text>\n",
        left + (N - n_lo + 0.5) * group_w, top + plot_h + 18, N);
  fmt("<text x=\"%.1f\" y=\"%.1f\" text-anchor=\"middle\">number of photons N</text>\n",
      left + plot_w / 2, height - 14);
  fmt("<text x=\"20\" y=\"%.1f\" text-anchor=\"middle\" transform=\"rotate(-90 20 %.1f)\">"
      "waiting time</text>\n",
      top + plot_h / 2, top + plot_h / 2);
  fmt("<rect x=\"%.1f\" y=\"%.1f\" width=\"%.1f\" height=\"%.1f\" fill=\"none\" "
      "stroke=\"black\"/>\n",
      left, top, plot_w, plot_h);
  for (int i = 0; i < 3; ++i) {
    const double y = top + 10 + 18 * i;
    fmt("<rect x=\"%.1f\" y=\"%.1f\" width=\"12\" height=\"12\" fill=\"%s\"/>\n",
        left + 10, y, series[i].color);
    fmt("<text x=\"%.1f\" y=\"%.1f\">%s</text>\n", left + 28, y + 10, series[i].label);
  }
  s << "</svg>\n";
  return s.str();
}

inline CommandOutput cmd_fig2(const ExperimentConfig& cfg) {
  CommandOutput out;
  const std::vector<Fig2Row> rows = fig2_rows(cfg);
  CsvTable t({"N", "series", "eta_s", "eta_r", "p_theta", "q", "fidelity", "c", "waiting_time",
              "waiting_time_human", "error"});
  for (const Fig2Row& r : rows) {
    t.add_row({std::to_string(r.N), r.series, format_number(r.eta_s), format_number(r.eta_r),
               format_number(r.p_theta), format_number(r.q), format_number(r.fidelity),
               format_number(r.c), format_number(r.waiting_time),
               r.error.empty() ? human_duration(r.waiting_time) : "", r.error});
    if (!r.error.empty())
      out.errors.push_back({"fig2[N=" + std::to_string(r.N) + "," + r.series + "]", r.error});
  }
  out.files.emplace_back("fig2.csv", t.str());
  out.files.emplace_back("fig2.svg", render_fig2_svg(rows));
  return out;
}

inline CommandOutput run_command(Command cmd, const ExperimentConfig& cfg) {
  if (cfg.mode && *cfg.mode != cmd)
    throw ConfigError("mode", "config is for '" + to_string(*cfg.mode) + "', command is '" +
                                  to_string(cmd) + "'");
  switch (cmd) {
    case Command::kAnalytic: return cmd_analytic(cfg);
    case Command::kSimulate: return cmd_simulate(cfg);
    case Command::kFig2: return cmd_fig2(cfg);
    case Command::kSweep: return cmd_sweep(cfg);
  }
  throw InvalidArgument("unknown command");
}

/// Machine-readable error summary for the diagnostic stream.
inline std::string error_summary(const std::vector<CellError>& errors) {
  json j = json::object();
  j["errors"] = json::array();
  for (const CellError& e : errors) j["errors"].push_back({{"cell", e.cell}, {"message", e.message}});
  return j.dump();
}

}  // namespace memsync::experiments
