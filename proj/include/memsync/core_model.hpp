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

// Parameter types, truncated photon-number distributions and the elementary
// probability maps (thermal emission, herald click, binomial loss,
// per-pulse decoherence) that the chain and resolved models are built from.

#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <numeric>
#include <string>
#include <vector>

#include "memsync/error.hpp"

namespace memsync {

enum class DecoherenceMode {
  kLinearized,  ///< b = 1/B
  kExact,       ///< b = 1 - exp(-1/B)
};

/// Herald conditional P(click | n). kExact normalizes for any d; kLinearDark
/// uses (1-d)(1 - (1-h)^n + d), which normalizes only to O(d^2). Both
/// coincide at d = 0.
enum class HeraldForm { kExact, kLinearDark };

struct SourceParams {
  double p = 0.01;  ///< thermal emission parameter
  double h = 0.5;   ///< herald detector efficiency
  double d = 0.0;   ///< dark-count probability per pulse
};

struct MemoryParams {
  double eta_s = 0.75;
  double eta_r = 0.75;
  double B = 1000.0;  ///< time-bandwidth product
  DecoherenceMode decoherence = DecoherenceMode::kLinearized;

  double eta() const noexcept { return eta_s * eta_r; }
};

struct SystemParams {
  int N = 2;
  double pump_rate = 1e9;  ///< Hz
  SourceParams source;
  MemoryParams memory;
  int n_max = 8;
  HeraldForm herald_form = HeraldForm::kExact;
};

namespace detail {

inline bool is_probability(double x) noexcept { return x >= 0.0 && x <= 1.0; }

inline void require(bool ok, const std::string& what) {
  if (!ok) throw InvalidArgument(what);
}

/// Binomial pmf C(k,n) s^n (1-s)^(k-n); exact zeros at s = 0 and s = 1.
inline double binomial_pmf(int k, int n, double s) {
  if (n < 0 || n > k) return 0.0;
  if (s == 0.0) return n == 0 ? 1.0 : 0.0;
  if (s == 1.0) return n == k ? 1.0 : 0.0;
  double coeff = 1.0;
  for (int i = 1; i <= n; ++i) coeff = coeff * (k - n + i) / i;
  return coeff * std::pow(s, n) * std::pow(1.0 - s, k - n);
}

}  // namespace detail

inline void validate(const SourceParams& s) {
  detail::require(s.p >= 0.0 && s.p < 1.0, "source.p must lie in [0, 1)");
  detail::require(detail::is_probability(s.h), "source.h must lie in [0, 1]");
  detail::require(s.d >= 0.0 && s.d < 1.0, "source.d must lie in [0, 1)");
}

inline void validate(const MemoryParams& m) {
  detail::require(detail::is_probability(m.eta_s), "memory.eta_s must lie in [0, 1]");
  detail::require(detail::is_probability(m.eta_r), "memory.eta_r must lie in [0, 1]");
  detail::require(m.B >= 1.0, "memory.B must be >= 1");
}

inline void validate(const SystemParams& sys) {
  detail::require(sys.N >= 1, "N must be >= 1");
  detail::require(sys.pump_rate > 0.0 && std::isfinite(sys.pump_rate),
                  "pump_rate must be positive");
  detail::require(sys.n_max >= 1, "n_max must be >= 1");
  validate(sys.source);
  validate(sys.memory);
}

/// Truncated photon-number distribution on n = 0..n_max.
///
/// `deficit` is the probability mass known to lie beyond the truncation. It is
/// carried along by every map in the library and never folded back silently;
/// call normalize() to renormalize explicitly.
struct ProbDist {
  std::vector<double> weights;
  double deficit = 0.0;

  ProbDist() = default;
  explicit ProbDist(std::vector<double> w, double def = 0.0)
      : weights(std::move(w)), deficit(def) {}

  std::size_t size() const noexcept { return weights.size(); }
  int n_max() const noexcept { return static_cast<int>(weights.size()) - 1; }
  double operator[](std::size_t n) const { return n < weights.size() ? weights[n] : 0.0; }

  double total() const { return std::accumulate(weights.begin(), weights.end(), 0.0); }
  bool normalized() const { return std::abs(total() - 1.0) <= 1e-9; }

  void normalize() {
    const double t = total();
    if (t <= 0.0) throw InvalidArgument("cannot normalize a distribution with zero mass");
    for (double& w : weights) w /= t;
    deficit = 0.0;
  }

  static ProbDist delta(int n, int n_max) {
    std::vector<double> w(static_cast<std::size_t>(n_max) + 1, 0.0);
    w.at(static_cast<std::size_t>(n)) = 1.0;
    return ProbDist(std::move(w));
  }
};

/// p_source(n) = (1-p) p^n for n <= n_max; deficit p^(n_max+1).
inline ProbDist thermal_dist(double p, int n_max) {
  detail::require(p >= 0.0 && p < 1.0, "thermal parameter p must lie in [0, 1)");
  detail::require(n_max >= 0, "n_max must be >= 0");
  std::vector<double> w(static_cast<std::size_t>(n_max) + 1);
  double pn = 1.0;
  for (auto& x : w) {
    x = (1.0 - p) * pn;
    pn *= p;
  }
  return ProbDist(std::move(w), pn);
}

/// P(click | n photons) with the exact no-click complement.
inline double click_given_n(const SourceParams& s, int n) {
  return 1.0 - (1.0 - s.d) * std::pow(1.0 - s.h, n);
}

/// Herald click probability q per pulse, 1 - (1-d)(1-p)/(1-p(1-h)), written
/// over a common denominator so small p and d do not cancel.
inline double herald_prob(const SourceParams& s) {
  validate(s);
  return (s.p * s.h + s.d * (1.0 - s.p)) / (1.0 - s.p * (1.0 - s.h));
}

/// Photon-number distribution sent toward the memory given a herald click.
inline ProbDist heralded_dist(const SourceParams& s, int n_max,
                              HeraldForm form = HeraldForm::kExact) {
  const double q = herald_prob(s);
  if (q <= 0.0)
    throw UndefinedConditional("herald probability is zero (p = 0 and d = 0); p_h is undefined");
  const ProbDist src = thermal_dist(s.p, n_max);
  std::vector<double> w(src.size());
  for (std::size_t n = 0; n < w.size(); ++n) {
    const int k = static_cast<int>(n);
    const double click = form == HeraldForm::kExact
                             ? click_given_n(s, k)
                             : (1.0 - s.d) * (1.0 - std::pow(1.0 - s.h, k) + s.d);
    w[n] = src.weights[n] * click / q;
  }
  double deficit;
  if (form == HeraldForm::kExact) {
    // Closed-form tail: sum_{n>n_max} (1-p) p^n [1 - (1-d)(1-h)^n].
    const double ph = s.p * (1.0 - s.h);
    const double tail = std::pow(s.p, n_max + 1) -
                        (1.0 - s.d) * (1.0 - s.p) * std::pow(ph, n_max + 1) / (1.0 - ph);
    deficit = std::max(0.0, tail / q);
  } else {
    // The literal form sums to 1 - d^2/q; the shortfall is reported as deficit.
    deficit = std::max(0.0, 1.0 - std::accumulate(w.begin(), w.end(), 0.0));
  }
  return ProbDist(std::move(w), deficit);
}

/// Independent per-photon survival with probability `survival`.
inline ProbDist binomial_loss(const ProbDist& dist, double survival) {
  detail::require(detail::is_probability(survival), "survival probability must lie in [0, 1]");
  std::vector<double> out(dist.size(), 0.0);
  for (std::size_t k = 0; k < dist.size(); ++k) {
    const double wk = dist.weights[k];
    if (wk == 0.0) continue;
    for (std::size_t n = 0; n <= k; ++n)
      out[n] += wk * detail::binomial_pmf(static_cast<int>(k), static_cast<int>(n), survival);
  }
  return ProbDist(std::move(out), dist.deficit);
}

/// Per-pulse decoherence probability b.
inline double decoherence_step_prob(const MemoryParams& m) {
  detail::require(m.B >= 1.0, "memory.B must be >= 1");
  if (std::isinf(m.B)) return 0.0;
  return m.decoherence == DecoherenceMode::kExact ? -std::expm1(-1.0 / m.B) : 1.0 / m.B;
}

inline std::string to_string(DecoherenceMode m) {
  return m == DecoherenceMode::kExact ? "exact" : "linearized";
}

}  // namespace memsync
