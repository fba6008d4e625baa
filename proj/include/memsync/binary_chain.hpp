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

// Binary-occupancy model of a single source-memory unit: charging rate r,
// loss rate s, stationary occupancy P, and the N-fold coincidence probability
// both through P and through the closed-form rational expression.

#pragma once

#include <array>
#include <cmath>
#include <limits>

#include "memsync/core_model.hpp"
#include "memsync/readout_belief.hpp"

namespace memsync {

struct ChainRates {
  double r = 0.0;  ///< empty -> charged per pulse
  double s = 0.0;  ///< charged -> empty per pulse
  double b = 0.0;  ///< decoherence per pulse
};

/// r = q eta_s (1-R)
/// s = b[(1-R)(1-q) + Rq] + (1-q)R + q(1-R)(1-eta_s)
inline ChainRates chain_rates(double q, double R, const MemoryParams& memory) {
  if (!detail::is_probability(q) || !detail::is_probability(R))
    throw InvalidArgument("chain_rates: q and R must lie in [0, 1]");
  validate(memory);
  ChainRates c;
  c.b = decoherence_step_prob(memory);
  c.r = q * memory.eta_s * (1.0 - R);
  c.s = c.b * ((1.0 - R) * (1.0 - q) + R * q) + (1.0 - q) * R +
        q * (1.0 - R) * (1.0 - memory.eta_s);
  return c;
}

/// Column-stochastic transfer matrix on [empty, charged].
inline std::array<std::array<double, 2>, 2> binary_transfer(const ChainRates& c) {
  return {{{1.0 - c.r, c.s}, {c.r, 1.0 - c.s}}};
}

inline double steady_occupancy(const ChainRates& c) {
  if (c.r + c.s <= 0.0)
    throw DegenerateChain("charge chain has r = s = 0; no unique steady state");
  return c.r / (c.r + c.s);
}

struct SyncReport {
  double q = 0.0;
  double Y = 0.0;
  double R = 0.0;
  double V = 0.0;
  ChainRates rates;
  double P = 0.0;
  double p_sync = 0.0;
  double c_sync = 0.0;              ///< via P, with the (q-d)^N dark-count prefactor
  double c_sync_closed_form = 0.0;  ///< the rational closed form, B-based
  double waiting_time = 0.0;        ///< seconds, +inf if c_sync == 0
  bool multiple_roots = false;
};

/// Per-unit enhancement 1 + (1-R)(1-q) eta B / (1 + (B-1)[R((1-q)-q) + q]).
inline double closed_form_unit_factor(double q, double R, double eta, double B) {
  return 1.0 + (1.0 - R) * (1.0 - q) * eta * B /
                   (1.0 + (B - 1.0) * (R * ((1.0 - q) - q) + q));
}

/// Expected seconds between coincidences. c == 0 yields +infinity.
inline double waiting_time(double c, double pump_rate) {
  if (!(pump_rate > 0.0)) throw InvalidArgument("waiting_time: pump_rate must be positive");
  if (!(c >= 0.0 && c <= 1.0)) throw InvalidArgument("waiting_time: c must lie in [0, 1]");
  if (c == 0.0) return std::numeric_limits<double>::infinity();
  return 1.0 / (pump_rate * c);
}

/// Evaluates both coincidence routes at a given (q, R). Used directly when
/// the readiness R is imposed rather than solved for.
inline SyncReport coincidence_at(const SystemParams& params, double q, double R) {
  validate(params);
  const MemoryParams& m = params.memory;
  const int N = params.N;
  SyncReport rep;
  rep.q = q;
  rep.R = R;
  rep.rates = chain_rates(q, R, m);
  rep.P = steady_occupancy(rep.rates);
  rep.p_sync = q + (1.0 - q) * m.eta_r * rep.P;

  const double d = params.source.d;
  const double dark_scale = q > 0.0 ? (q - d) / q : 0.0;
  rep.c_sync = std::pow(dark_scale * rep.p_sync, N);
  rep.c_sync_closed_form =
      std::pow(q - d, N) * std::pow(closed_form_unit_factor(q, R, m.eta(), m.B), N);
  rep.waiting_time = waiting_time(rep.c_sync, params.pump_rate);
  return rep;
}

/// Full binary-model pipeline: q, belief solution, rates, P, c_sync.
inline SyncReport coincidence_closed_form(const SystemParams& params) {
  validate(params);
  const double q = herald_prob(params.source);
  const BeliefSolution belief = solve_belief(q, params.N);
  SyncReport rep = coincidence_at(params, q, belief.R);
  rep.Y = belief.Y;
  rep.V = belief.V;
  rep.multiple_roots = belief.multiple_roots;

  if (params.memory.decoherence == DecoherenceMode::kLinearized && rep.c_sync > 0.0) {
    const double rel = std::abs(rep.c_sync_closed_form - rep.c_sync) / rep.c_sync;
    if (rel > 1e-9)
      throw SolverFailure("closed-form and occupancy routes disagree (relative error " +
                          std::to_string(rel) + ")");
  }
  return rep;
}

/// (q eta B)^N
inline double small_rate_limit(const SystemParams& params) {
  const double q = herald_prob(params.source);
  return std::pow(q * params.memory.eta() * params.memory.B, params.N);
}

}  // namespace memsync
