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

// Discrete-event simulation of N source-memory units under the
// store-on-herald / clean-before-store / serendipitous-bypass protocol.
// Serves as an independent check on the mean-field analytics.

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <limits>
#include <optional>
#include <random>
#include <string>
#include <thread>
#include <vector>

#include "memsync/binary_chain.hpp"
#include "memsync/core_model.hpp"
#include "memsync/number_resolved.hpp"

namespace memsync {

struct SimConfig {
  long steps = 1'000'000;
  std::uint64_t seed = 1;
  int replicas = 16;
  std::optional<long> warmup_steps;  ///< defaults to 10 B
  int threads = 1;                   ///< replicas run on up to this many threads
};

/// Raw counters of one replica, accumulated after warmup.
struct ReplicaCounts {
  long counted_steps = 0;
  long charged_unit_steps = 0;   ///< units with >= 1 stored photon at end of pulse
  long believed_unit_steps = 0;  ///< units the controller believes charged
  long heralds = 0;
  long readout_events = 0;
  long memory_readouts = 0;  ///< units actually read from memory during readouts
  long exact_coincidences = 0;
  long geqN_coincidences = 0;
  long delivered_photons = 0;
  long available_photons = 0;  ///< stored + fresh photons at readout time
  long conservation_violations = 0;
};

struct Estimate {
  double mean = 0.0;
  double std_error = std::numeric_limits<double>::quiet_NaN();  ///< NaN with < 2 replicas
};

struct SimStats {
  SystemParams params;
  std::vector<ReplicaCounts> replicas;

  Estimate occupancy_actual;  ///< per unit, per pulse
  Estimate occupancy_believed;
  Estimate herald_rate;  ///< per unit, per pulse
  Estimate readout_rate;  ///< per pulse
  Estimate exact_rate;
  Estimate geqN_rate;

  long readout_events = 0;
  long exact_coincidences = 0;
  long geqN_coincidences = 0;
  long memory_readouts = 0;
  long conservation_violations = 0;
};

namespace detail {

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

/// mt19937_64 with library-independent variate generation, so a given
/// (seed, stream) produces the same numbers on every standard library.
class Rng {
 public:
  Rng(std::uint64_t seed, std::uint64_t stream)
      : engine_(splitmix64(seed ^ splitmix64(stream + 0x5851f42d4c957f2dULL))) {}

  /// Uniform on [0, 1).
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }
  bool bernoulli(double p) { return uniform() < p; }

  /// P(n) = (1-p) p^n
  int geometric(double p) {
    if (p <= 0.0) return 0;
    const double u = 1.0 - uniform();  // (0, 1]
    return static_cast<int>(std::floor(std::log(u) / std::log(p)));
  }

  int binomial(int n, double s) {
    if (s >= 1.0) return n;
    if (s <= 0.0) return 0;
    int k = 0;
    for (int i = 0; i < n; ++i) k += bernoulli(s) ? 1 : 0;
    return k;
  }

  /// Index drawn from `w`; the unrepresented remainder maps to w.size().
  int categorical(const std::vector<double>& w) {
    double u = uniform();
    for (std::size_t i = 0; i < w.size(); ++i) {
      if (u < w[i]) return static_cast<int>(i);
      u -= w[i];
    }
    return static_cast<int>(w.size());
  }

 private:
  std::mt19937_64 engine_;
};

inline Estimate estimate(const std::vector<double>& xs) {
  Estimate e;
  if (xs.empty()) return e;
  double sum = 0.0;
  for (double x : xs) sum += x;
  e.mean = sum / static_cast<double>(xs.size());
  if (xs.size() >= 2) {
    double ss = 0.0;
    for (double x : xs) ss += (x - e.mean) * (x - e.mean);
    e.std_error = std::sqrt(ss / static_cast<double>(xs.size() - 1) / static_cast<double>(xs.size()));
  }
  return e;
}

inline long resolved_warmup(const SystemParams& params, const SimConfig& cfg) {
  if (cfg.warmup_steps) return *cfg.warmup_steps;
  return static_cast<long>(std::min(10.0 * params.memory.B, 1e18));
}

inline ReplicaCounts run_replica(const SystemParams& params, long steps, long warmup,
                                 std::uint64_t seed, std::uint64_t replica) {
  const int N = params.N;
  const SourceParams& src = params.source;
  const MemoryParams& mem = params.memory;
  const double keep = 1.0 - decoherence_step_prob(mem);

  Rng rng(seed, replica);
  std::vector<int> stored(N, 0);
  std::vector<char> believed(N, 0);
  std::vector<int> fresh(N, 0);
  std::vector<char> click(N, 0);
  ReplicaCounts c;

  for (long t = 0; t < steps; ++t) {
    const bool counting = t >= warmup;
    bool any_click = false;
    bool ready = true;
    for (int i = 0; i < N; ++i) {
      fresh[i] = rng.geometric(src.p);
      click[i] = rng.bernoulli(click_given_n(src, fresh[i])) ? 1 : 0;
      stored[i] = rng.binomial(stored[i], keep);
      any_click = any_click || click[i];
      ready = ready && (believed[i] || click[i]);
      if (counting && click[i]) ++c.heralds;
    }

    if (ready && any_click) {
      // Heralding units bypass their memories; the rest are read out and reset.
      long total = 0, available = 0;
      bool all_single = true;
      for (int i = 0; i < N; ++i) {
        int delivered;
        if (click[i]) {
          delivered = fresh[i];
          available += fresh[i];
        } else {
          delivered = rng.binomial(stored[i], mem.eta_r);
          available += stored[i];
          stored[i] = 0;
          believed[i] = 0;
          if (counting) ++c.memory_readouts;
        }
        total += delivered;
        all_single = all_single && delivered == 1;
      }
      if (counting) {
        ++c.readout_events;
        if (all_single) ++c.exact_coincidences;
        if (total >= N) ++c.geqN_coincidences;
        c.delivered_photons += total;
        c.available_photons += available;
        if (total > available) ++c.conservation_violations;
      }
    } else {
      for (int i = 0; i < N; ++i) {
        if (!click[i]) continue;
        stored[i] = rng.binomial(fresh[i], mem.eta_s);
        believed[i] = 1;
      }
    }

    if (counting) {
      ++c.counted_steps;
      for (int i = 0; i < N; ++i) {
        c.charged_unit_steps += stored[i] > 0 ? 1 : 0;
        c.believed_unit_steps += believed[i] ? 1 : 0;
      }
    }
  }
  return c;
}

}  // namespace detail

inline void validate(const SystemParams& params, const SimConfig& cfg) {
  validate(params);
  const long warmup = detail::resolved_warmup(params, cfg);
  if (cfg.replicas < 1) throw InvalidArgument("sim.replicas must be >= 1");
  if (cfg.threads < 1) throw InvalidArgument("sim.threads must be >= 1");
  if (warmup < 0) throw InvalidArgument("sim.warmup_steps must be >= 0");
  if (!(cfg.steps > warmup))
    throw InvalidArgument("sim.steps must exceed sim.warmup_steps (" + std::to_string(warmup) + ")");
}

/// Runs cfg.replicas independent replicas. Replica i always draws from stream
/// i of cfg.seed, so the result does not depend on cfg.threads.
inline SimStats run_simulation(const SystemParams& params, const SimConfig& cfg) {
  validate(params, cfg);
  const long warmup = detail::resolved_warmup(params, cfg);

  SimStats out;
  out.params = params;
  out.replicas.resize(static_cast<std::size_t>(cfg.replicas));
  const int workers = std::min(cfg.threads, cfg.replicas);
  auto work = [&](int worker) {
    for (int r = worker; r < cfg.replicas; r += workers)
      out.replicas[static_cast<std::size_t>(r)] =
          detail::run_replica(params, cfg.steps, warmup, cfg.seed, static_cast<std::uint64_t>(r));
  };
  if (workers == 1) {
    work(0);
  } else {
    std::vector<std::thread> pool;
    for (int w = 0; w < workers; ++w) pool.emplace_back(work, w);
    for (auto& th : pool) th.join();
  }

  std::vector<double> occ, bel, her, ro, ex, ge;
  const double N = params.N;
  for (const ReplicaCounts& c : out.replicas) {
    const double n = static_cast<double>(c.counted_steps);
    occ.push_back(c.charged_unit_steps / (n * N));
    bel.push_back(c.believed_unit_steps / (n * N));
    her.push_back(c.heralds / (n * N));
    ro.push_back(c.readout_events / n);
    ex.push_back(c.exact_coincidences / n);
    ge.push_back(c.geqN_coincidences / n);
    out.readout_events += c.readout_events;
    out.exact_coincidences += c.exact_coincidences;
    out.geqN_coincidences += c.geqN_coincidences;
    out.memory_readouts += c.memory_readouts;
    out.conservation_violations += c.conservation_violations;
  }
  out.occupancy_actual = detail::estimate(occ);
  out.occupancy_believed = detail::estimate(bel);
  out.herald_rate = detail::estimate(her);
  out.readout_rate = detail::estimate(ro);
  out.exact_rate = detail::estimate(ex);
  out.geqN_rate = detail::estimate(ge);
  return out;
}

/// Transition counts of a single memory driven by independent herald (q) and
/// readout-readiness (R) events, for direct comparison with the resolved
/// transfer matrix. Row dim() collects transitions past the truncation.
struct TransitionCounts {
  std::size_t dim = 0;
  std::vector<long> counts;  ///< (dim + 1) x dim, row-major, [to][from]
  std::vector<long> visits;  ///< per prior state

  long at(std::size_t to, std::size_t from) const { return counts[to * dim + from]; }
};

inline TransitionCounts simulate_single_memory(double q, double R, const MemoryParams& memory,
                                               const ProbDist& p_h, long steps,
                                               std::uint64_t seed) {
  if (!detail::is_probability(q) || !detail::is_probability(R))
    throw InvalidArgument("simulate_single_memory: q and R must lie in [0, 1]");
  validate(memory);
  const double keep = 1.0 - decoherence_step_prob(memory);
  const std::size_t dim = p_h.size();
  TransitionCounts tc;
  tc.dim = dim;
  tc.counts.assign((dim + 1) * dim, 0);
  tc.visits.assign(dim, 0);

  detail::Rng rng(seed, 0);
  int state = 0;
  for (long t = 0; t < steps; ++t) {
    const bool herald = rng.bernoulli(q);
    const bool readout_ready = rng.bernoulli(R);
    int next;
    if (herald && !readout_ready) {
      const int n = rng.categorical(p_h.weights);
      next = n >= static_cast<int>(dim) ? static_cast<int>(dim) : rng.binomial(n, memory.eta_s);
    } else if (readout_ready && !herald) {
      next = 0;
    } else {
      next = rng.binomial(state, keep);
    }
    ++tc.visits[static_cast<std::size_t>(state)];
    ++tc.counts[static_cast<std::size_t>(next) * dim + static_cast<std::size_t>(state)];
    // Past-truncation draws restart from vacuum; they are counted in the overflow row.
    state = next >= static_cast<int>(dim) ? 0 : next;
  }
  return tc;
}

struct Discrepancy {
  std::string quantity;
  double analytic = 0.0;
  double simulated = 0.0;
  double std_error = 0.0;
  double rel_deviation = 0.0;  ///< (simulated - analytic) / analytic
  double z = 0.0;              ///< (simulated - analytic) / stderr
};

/// Physical parameters only; numerical choices (decoherence mode,
/// truncation) may legitimately differ between the two sides.
inline std::string fingerprint(const SystemParams& p) {
  char buf[256];
  std::snprintf(buf, sizeof buf, "N=%d p=%.17g h=%.17g d=%.17g eta_s=%.17g eta_r=%.17g B=%.17g",
                p.N, p.source.p, p.source.h, p.source.d, p.memory.eta_s, p.memory.eta_r,
                p.memory.B);
  return buf;
}

namespace detail {

inline Discrepancy discrepancy(std::string name, double analytic, const Estimate& sim) {
  Discrepancy d;
  d.quantity = std::move(name);
  d.analytic = analytic;
  d.simulated = sim.mean;
  d.std_error = sim.std_error;
  const double diff = sim.mean - analytic;
  d.rel_deviation = diff == 0.0 ? 0.0 : diff / analytic;
  d.z = diff == 0.0 ? 0.0 : diff / sim.std_error;
  return d;
}

}  // namespace detail

/// Relative deviation and z-score of each simulated quantity against its
/// mean-field counterpart.
inline std::vector<Discrepancy> compare_to_analytic(const SimStats& stats,
                                                    const SystemParams& analytic_params,
                                                    const SyncReport& report,
                                                    const FidelityReport& fid) {
  if (fingerprint(stats.params) != fingerprint(analytic_params))
    throw InvalidArgument("compare_to_analytic: parameter fingerprints differ (" +
                          fingerprint(stats.params) + " vs " + fingerprint(analytic_params) + ")");
  return {
      detail::discrepancy("occupancy_P", report.P, stats.occupancy_actual),
      detail::discrepancy("occupancy_resolved", fid.P, stats.occupancy_actual),
      detail::discrepancy("believed_V", report.V, stats.occupancy_believed),
      detail::discrepancy("herald_q", report.q, stats.herald_rate),
      detail::discrepancy("readout_RY", report.R * report.Y, stats.readout_rate),
      detail::discrepancy("coincidence_c", fid.c, stats.exact_rate),
      detail::discrepancy("geqN_p_geq", fid.p_geq, stats.geqN_rate),
  };
}

}  // namespace memsync
