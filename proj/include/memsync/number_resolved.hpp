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

// Photon-number-resolved memory model. The charge state of a memory is a
// truncated distribution over stored photon number; one pulse maps it through
// a column-stochastic matrix made of decoherence, readout and storage terms.
// From the stationary charge state follow the retrieved and per-unit output
// distributions, the N-fold coincidence probability and the fidelities.

#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <optional>
#include <string>
#include <vector>

#include "memsync/binary_chain.hpp"
#include "memsync/core_model.hpp"
#include "memsync/readout_belief.hpp"

namespace memsync {

/// Square matrix, row j = next occupation, column k = prior occupation.
class TransferMatrix {
 public:
  TransferMatrix() = default;
  explicit TransferMatrix(std::size_t dim) : dim_(dim), data_(dim * dim, 0.0) {}

  std::size_t dim() const noexcept { return dim_; }
  double& at(std::size_t j, std::size_t k) { return data_[j * dim_ + k]; }
  double at(std::size_t j, std::size_t k) const { return data_[j * dim_ + k]; }

  double column_sum(std::size_t k) const {
    double s = 0.0;
    for (std::size_t j = 0; j < dim_; ++j) s += at(j, k);
    return s;
  }

  /// Largest per-column mass lost to truncation of the storage term.
  double truncation_residual() const {
    double worst = 0.0;
    for (std::size_t k = 0; k < dim_; ++k) worst = std::max(worst, 1.0 - column_sum(k));
    return worst;
  }

  std::vector<double> apply(const std::vector<double>& x) const {
    std::vector<double> y(dim_, 0.0);
    for (std::size_t j = 0; j < dim_; ++j) {
      double acc = 0.0;
      for (std::size_t k = 0; k < dim_; ++k) acc += at(j, k) * x[k];
      y[j] = acc;
    }
    return y;
  }

 private:
  std::size_t dim_ = 0;
  std::vector<double> data_;
};

/// T[j][k] = [k>=j] b^(k-j) (1-b)^j C(k,j) [(1-R)(1-q) + Rq]
///         + (1-q) R [j=0]
///         + q (1-R) p_s(j),          p_s = binomial_loss(p_h, eta_s)
inline TransferMatrix build_transfer_matrix(double q, double R, const MemoryParams& memory,
                                            const ProbDist& p_h) {
  if (!detail::is_probability(q) || !detail::is_probability(R))
    throw InvalidArgument("build_transfer_matrix: q and R must lie in [0, 1]");
  validate(memory);
  const double b = decoherence_step_prob(memory);
  const ProbDist p_s = binomial_loss(p_h, memory.eta_s);
  const double hold = (1.0 - R) * (1.0 - q) + R * q;
  const double readout = (1.0 - q) * R;
  const double store = q * (1.0 - R);

  TransferMatrix T(p_h.size());
  for (std::size_t k = 0; k < T.dim(); ++k) {
    for (std::size_t j = 0; j <= k; ++j)
      T.at(j, k) += hold * detail::binomial_pmf(static_cast<int>(k), static_cast<int>(j), 1.0 - b);
    T.at(0, k) += readout;
    for (std::size_t j = 0; j < T.dim(); ++j) T.at(j, k) += store * p_s.weights[j];
  }
  return T;
}

namespace detail {

/// Number of closed communicating classes of the chain's transition graph.
inline int closed_class_count(const TransferMatrix& T) {
  const std::size_t n = T.dim();
  // reach[a][c]: c reachable from a (a -> c means T(c, a) > 0).
  std::vector<std::vector<char>> reach(n, std::vector<char>(n, 0));
  for (std::size_t a = 0; a < n; ++a) {
    reach[a][a] = 1;
    for (std::size_t c = 0; c < n; ++c)
      if (T.at(c, a) > 0.0) reach[a][c] = 1;
  }
  for (std::size_t m = 0; m < n; ++m)
    for (std::size_t a = 0; a < n; ++a)
      if (reach[a][m])
        for (std::size_t c = 0; c < n; ++c)
          if (reach[m][c]) reach[a][c] = 1;

  // A state is in a closed class iff everything it reaches reaches it back.
  std::vector<char> counted(n, 0);
  int classes = 0;
  for (std::size_t a = 0; a < n; ++a) {
    bool closed = true;
    for (std::size_t c = 0; c < n && closed; ++c)
      if (reach[a][c] && !reach[c][a]) closed = false;
    if (!closed || counted[a]) continue;
    ++classes;
    for (std::size_t c = 0; c < n; ++c)
      if (reach[a][c]) counted[c] = 1;
  }
  return classes;
}

}  // namespace detail

struct SteadyStateOptions {
  double tol = 1e-13;
  int max_squarings = 80;  ///< T^(2^80) is far past any mixing time in double precision
};

/// Power iteration by repeated squaring: M = T^(2^s), rescaled every step.
/// Once the chain has mixed, every column of M is proportional to the
/// stationary vector, so the spread between normalized columns is the
/// convergence measure. Renormalizing conditions storage mass lost to
/// truncation (see TransferMatrix::truncation_residual) away rather than
/// accumulating it.
inline ProbDist steady_state(const TransferMatrix& T, SteadyStateOptions opt = {}) {
  if (T.dim() == 0) throw InvalidArgument("steady_state: empty matrix");
  for (std::size_t k = 0; k < T.dim(); ++k) {
    const double s = T.column_sum(k);
    if (!(s > 0.0 && s <= 1.0 + 1e-9))
      throw InvalidArgument("steady_state: matrix is not (sub-)column-stochastic");
  }
  if (detail::closed_class_count(T) != 1)
    throw DegenerateChain("transfer matrix has more than one closed class; steady state is not unique");

  const std::size_t n = T.dim();
  TransferMatrix M = T;
  std::vector<double> x(n);
  double residual = 0.0;
  for (int step = 0; step <= opt.max_squarings; ++step) {
    // x: normalized column with the largest mass (column 0 may carry little
    // weight when vacuum is transient).
    std::size_t best = 0;
    for (std::size_t k = 1; k < n; ++k)
      if (M.column_sum(k) > M.column_sum(best)) best = k;
    const double norm = M.column_sum(best);
    for (std::size_t j = 0; j < n; ++j) x[j] = M.at(j, best) / norm;

    residual = 0.0;
    for (std::size_t k = 0; k < n; ++k) {
      const double cs = M.column_sum(k);
      for (std::size_t j = 0; j < n; ++j)
        residual = std::max(residual, std::abs(M.at(j, k) / cs - x[j]));
    }
    if (residual <= opt.tol) return ProbDist(std::move(x));
    if (step == opt.max_squarings) break;

    TransferMatrix sq(n);
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t m = 0; m < n; ++m) {
        const double a = M.at(i, m);
        if (a == 0.0) continue;
        for (std::size_t k = 0; k < n; ++k) sq.at(i, k) += a * M.at(m, k);
      }
    double scale = 0.0;
    for (std::size_t k = 0; k < n; ++k) scale = std::max(scale, sq.column_sum(k));
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t k = 0; k < n; ++k) sq.at(i, k) /= scale;
    M = std::move(sq);
  }
  throw NonConvergence("steady_state: power iteration did not converge", residual);
}

inline ProbDist retrieved_dist(const ProbDist& x_s, double eta_r) {
  return binomial_loss(x_s, eta_r);
}

/// p_sync(n) = q p_h(n) + (1-q) p_r(n)
inline ProbDist sync_output_dist(double q, const ProbDist& p_h, const ProbDist& p_r) {
  if (!detail::is_probability(q)) throw InvalidArgument("sync_output_dist: q must lie in [0, 1]");
  if (p_h.size() != p_r.size())
    throw InvalidArgument("sync_output_dist: p_h and p_r must share a support");
  std::vector<double> w(p_h.size());
  for (std::size_t n = 0; n < w.size(); ++n) w[n] = q * p_h.weights[n] + (1.0 - q) * p_r.weights[n];
  return ProbDist(std::move(w), q * p_h.deficit + (1.0 - q) * p_r.deficit);
}

inline double coincidence_exact(const ProbDist& p_sync, int N) {
  if (N < 1) throw InvalidArgument("coincidence_exact: N must be >= 1");
  return std::pow(p_sync[1], N);
}

/// Distribution of the total photon number over N independent units.
inline std::vector<double> self_convolution(const ProbDist& dist, int N) {
  if (N < 1) throw InvalidArgument("self_convolution: N must be >= 1");
  std::vector<double> acc{1.0};
  for (int unit = 0; unit < N; ++unit) {
    std::vector<double> next(acc.size() + dist.size() - 1, 0.0);
    for (std::size_t a = 0; a < acc.size(); ++a) {
      if (acc[a] == 0.0) continue;
      for (std::size_t n = 0; n < dist.size(); ++n) next[a + n] += acc[a] * dist.weights[n];
    }
    acc = std::move(next);
  }
  return acc;
}

/// Probability that fewer than N photons emerge in total.
inline double prob_fewer_than(const ProbDist& p_sync, int N) {
  const std::vector<double> total = self_convolution(p_sync, N);
  double s = 0.0;
  for (int j = 0; j < N && j < static_cast<int>(total.size()); ++j) s += total[j];
  return s;
}

/// Probability that N or more photons emerge in total, summed directly over
/// the tail of the represented support (no 1 - p_<N cancellation).
inline double prob_at_least(const ProbDist& p_sync, int N) {
  const std::vector<double> total = self_convolution(p_sync, N);
  double s = 0.0;
  for (std::size_t j = static_cast<std::size_t>(N); j < total.size(); ++j) s += total[j];
  return s;
}

/// (c / (R Y))^(1/N)
inline double fidelity_unpostselected(double c, double R, double Y, int N) {
  if (N < 1) throw InvalidArgument("fidelity_unpostselected: N must be >= 1");
  const double denom = R * Y;
  if (!(denom > 0.0)) throw UndefinedFidelity("fidelity_unpostselected: R*Y is zero");
  return std::pow(c / denom, 1.0 / N);
}

/// Normalized fidelity of N unsynchronized heralded sources: p_h(1).
inline double fidelity_no_memory(const ProbDist& p_h) { return p_h[1]; }

enum class DenominatorMode {
  kPaperLiteral,  ///< q - p_<N
  kNormalized,    ///< 1 - p_<N, evaluated as the direct tail p_>=N
  kPerMode,       ///< (1 - p_sync(0))^N: at least one photon in every mode
};

inline std::string to_string(DenominatorMode m) {
  switch (m) {
    case DenominatorMode::kPaperLiteral: return "paper_literal";
    case DenominatorMode::kNormalized: return "normalized";
    case DenominatorMode::kPerMode: return "per_mode";
  }
  return "?";
}

/// Postselected fidelity from (c, p_<N) alone. kPerMode needs p_sync(0) and
/// is only available through the ProbDist overload.
inline double fidelity_postselected(double c, double p_less, double q, int N,
                                    DenominatorMode mode = DenominatorMode::kNormalized) {
  if (N < 1) throw InvalidArgument("fidelity_postselected: N must be >= 1");
  double denom = 0.0;
  switch (mode) {
    case DenominatorMode::kPaperLiteral: denom = q - p_less; break;
    case DenominatorMode::kNormalized: denom = 1.0 - p_less; break;
    default: throw InvalidArgument("fidelity_postselected: per_mode needs the output distribution");
  }
  if (!(denom > 0.0))
    throw UndefinedFidelity("fidelity_postselected: denominator " + std::to_string(denom) +
                            " is not positive in mode " + to_string(mode));
  return std::pow(c / denom, 1.0 / N);
}

inline double fidelity_postselected(double c, const ProbDist& p_sync, double q, int N,
                                    DenominatorMode mode = DenominatorMode::kNormalized) {
  if (N < 1) throw InvalidArgument("fidelity_postselected: N must be >= 1");
  double denom = 0.0;
  switch (mode) {
    case DenominatorMode::kPaperLiteral: denom = q - prob_fewer_than(p_sync, N); break;
    case DenominatorMode::kNormalized: denom = prob_at_least(p_sync, N); break;
    case DenominatorMode::kPerMode: denom = std::pow(1.0 - p_sync[0], N); break;
  }
  if (!(denom > 0.0))
    throw UndefinedFidelity("fidelity_postselected: denominator " + std::to_string(denom) +
                            " is not positive in mode " + to_string(mode));
  return std::pow(c / denom, 1.0 / N);
}

struct FidelityReport {
  double q = 0.0;
  BeliefSolution belief;
  ProbDist p_h;
  ProbDist x_s;
  ProbDist p_r;
  ProbDist p_sync;
  double truncation_residual = 0.0;  ///< worst column deficit of the transfer matrix
  double P = 0.0;                    ///< 1 - x_s(0)
  double c = 0.0;
  double p_less = 0.0;
  double p_geq = 0.0;
  std::optional<double> F;
  std::optional<double> F_tilde;
  double F_no_mem = 0.0;
  double c_no_mem = 0.0;
  double waiting_time = 0.0;
  double waiting_time_no_mem = 0.0;
  DenominatorMode denominator_mode = DenominatorMode::kNormalized;
};

/// Full resolved pipeline at params.source.p.
inline FidelityReport evaluate_resolved(const SystemParams& params,
                                        DenominatorMode mode = DenominatorMode::kNormalized,
                                        SteadyStateOptions ss = {}) {
  validate(params);
  FidelityReport rep;
  rep.denominator_mode = mode;
  rep.q = herald_prob(params.source);
  rep.belief = solve_belief(rep.q, params.N);
  rep.p_h = heralded_dist(params.source, params.n_max, params.herald_form);
  const TransferMatrix T = build_transfer_matrix(rep.q, rep.belief.R, params.memory, rep.p_h);
  rep.truncation_residual = T.truncation_residual();
  rep.x_s = steady_state(T, ss);
  rep.P = 1.0 - rep.x_s[0];
  rep.p_r = retrieved_dist(rep.x_s, params.memory.eta_r);
  rep.p_sync = sync_output_dist(rep.q, rep.p_h, rep.p_r);
  rep.c = coincidence_exact(rep.p_sync, params.N);
  rep.p_less = prob_fewer_than(rep.p_sync, params.N);
  rep.p_geq = prob_at_least(rep.p_sync, params.N);
  try {
    rep.F = fidelity_unpostselected(rep.c, rep.belief.R, rep.belief.Y, params.N);
  } catch (const UndefinedFidelity&) {
  }
  try {
    rep.F_tilde = fidelity_postselected(rep.c, rep.p_sync, rep.q, params.N, mode);
  } catch (const UndefinedFidelity&) {
  }
  rep.F_no_mem = fidelity_no_memory(rep.p_h);
  rep.c_no_mem = std::pow(rep.q * rep.F_no_mem, params.N);
  rep.waiting_time = waiting_time(rep.c, params.pump_rate);
  rep.waiting_time_no_mem = waiting_time(rep.c_no_mem, params.pump_rate);
  return rep;
}

/// Largest p with (1-p)(1-p(1-h)) = theta, i.e. p_h(1) = theta at d = 0.
/// Evaluated as 2(1-theta) / ((2-h) + sqrt((2-h)^2 - 4(1-h)(1-theta))), the
/// cancellation-free form of the minus-branch root, which is also finite at h = 1.
inline double threshold_p_unsync(double h, double theta) {
  if (!(h >= 0.0 && h <= 1.0)) throw InvalidArgument("threshold_p_unsync: h must lie in [0, 1]");
  if (!(theta > 0.0 && theta <= 1.0))
    throw InvalidArgument("threshold_p_unsync: theta must lie in (0, 1]");
  const double a = 2.0 - h;
  const double disc = a * a - 4.0 * (1.0 - h) * (1.0 - theta);
  return 2.0 * (1.0 - theta) / (a + std::sqrt(disc));
}

enum class FidelityKind { kPostselected, kUnpostselected };

inline std::string to_string(FidelityKind k) {
  return k == FidelityKind::kPostselected ? "postselected" : "unpostselected";
}

struct ThresholdOptions {
  double p_lo = 1e-7;
  double p_hi = 0.5;
  int grid_points = 64;  ///< log-spaced scan on [p_lo, p_hi]
  double rel_tol = 1e-12;
  SteadyStateOptions steady;
};

struct ThresholdResult {
  double p = 0.0;
  double fidelity = 0.0;
  int crossings = 0;          ///< downward crossings of theta seen on the scan
  bool non_monotone = false;  ///< fidelity increased somewhere on the scan
  FidelityReport report;      ///< pipeline evaluated at p
};

namespace detail {

inline std::optional<double> chosen_fidelity(const FidelityReport& r, FidelityKind kind) {
  return kind == FidelityKind::kPostselected ? r.F_tilde : r.F;
}

}  // namespace detail

/// Largest p in (p_lo, p_hi) at which the chosen fidelity equals theta.
///
/// Each candidate p re-runs the whole pipeline. A log-spaced scan locates
/// every place where the fidelity drops through theta; the last one is
/// refined by bisection. Points where the fidelity is undefined count as
/// below theta.
inline ThresholdResult threshold_p_sync(SystemParams params, double theta, FidelityKind kind,
                                        DenominatorMode mode = DenominatorMode::kNormalized,
                                        ThresholdOptions opt = {}) {
  if (!(theta > 0.0 && theta <= 1.0))
    throw InvalidArgument("threshold_p_sync: theta must lie in (0, 1]");
  if (!(opt.p_lo > 0.0 && opt.p_lo < opt.p_hi && opt.p_hi < 1.0) || opt.grid_points < 2)
    throw InvalidArgument("threshold_p_sync: invalid scan range");

  auto eval = [&](double p) {
    params.source.p = p;
    FidelityReport r = evaluate_resolved(params, mode, opt.steady);
    const std::optional<double> f = detail::chosen_fidelity(r, kind);
    return std::pair{f.value_or(-1.0), std::move(r)};
  };

  std::vector<double> ps(static_cast<std::size_t>(opt.grid_points));
  std::vector<double> fs(ps.size());
  const double ratio = std::log(opt.p_hi / opt.p_lo);
  for (std::size_t i = 0; i < ps.size(); ++i) {
    ps[i] = opt.p_lo * std::exp(ratio * static_cast<double>(i) / (ps.size() - 1));
    fs[i] = eval(ps[i]).first;
  }

  ThresholdResult res;
  std::optional<std::size_t> last;
  for (std::size_t i = 0; i + 1 < ps.size(); ++i) {
    if (fs[i + 1] > fs[i] && fs[i] >= 0.0) res.non_monotone = true;
    if (fs[i] >= theta && fs[i + 1] < theta) {
      ++res.crossings;
      last = i;
    }
  }
  if (!last) {
    if (fs.back() >= theta)
      throw NoSolution("threshold_p_sync: " + to_string(kind) + " fidelity is still >= theta at p_hi");
    throw NoSolution("threshold_p_sync: " + to_string(kind) + " fidelity (mode " + to_string(mode) +
                     ") never reaches theta on the scanned range");
  }

  double lo = ps[*last], hi = ps[*last + 1];
  while (hi - lo > opt.rel_tol * hi) {
    const double mid = 0.5 * (lo + hi);
    if (mid <= lo || mid >= hi) break;
    if (eval(mid).first >= theta)
      lo = mid;
    else
      hi = mid;
  }
  auto [f, rep] = eval(lo);
  res.p = lo;
  res.fidelity = f;
  res.report = std::move(rep);
  return res;
}

}  // namespace memsync
