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

// Controller belief model. The controller sees only herald clicks and its own
// readouts, never decoherence, so its belief that a memory is charged follows
// a two-state chain driven by q and the readout-readiness probability R.
// Closing R = Y^(N-1) with Y = q + (1-q) V yields a polynomial in Y.

#pragma once

#include <array>
#include <cmath>
#include <string>

#include "memsync/error.hpp"

namespace memsync {

/// Column-stochastic 2x2 belief transfer matrix acting on [1-V, V].
struct BeliefMatrix {
  double w = 0.0;  ///< believed empty -> believed charged
  double z = 0.0;  ///< believed charged -> believed empty

  std::array<std::array<double, 2>, 2> entries() const {
    return {{{1.0 - w, z}, {w, 1.0 - z}}};
  }

  /// Stationary believed-charged probability; requires w + z > 0.
  double steady_charged() const {
    if (w + z <= 0.0) throw DegenerateChain("belief chain has w = z = 0; no unique steady state");
    return w / (w + z);
  }
};

inline BeliefMatrix belief_transfer(double q, double R) {
  if (!(q >= 0.0 && q <= 1.0) || !(R >= 0.0 && R <= 1.0))
    throw InvalidArgument("belief_transfer: q and R must lie in [0, 1]");
  return {(1.0 - R) * q, (1.0 - q) * R};
}

struct BeliefSolution {
  double Y = 0.0;  ///< probability a unit is believed to provide a photon
  double V = 0.0;  ///< steady believed-charged probability
  double R = 0.0;  ///< readout readiness, Y^(N-1)
  double w = 0.0;
  double z = 0.0;
  double residual = 0.0;        ///< |consistency polynomial| at Y
  bool multiple_roots = false;  ///< more than one sign change seen on [q, 1]
};

/// (1-2q) Y^N + q^2 Y^(N-1) + q Y - q
inline double consistency_polynomial(double q, int N, double Y) {
  return (1.0 - 2.0 * q) * std::pow(Y, N) + q * q * std::pow(Y, N - 1) + q * Y - q;
}

namespace detail {

inline double consistency_derivative(double q, int N, double Y) {
  double d = (1.0 - 2.0 * q) * N * std::pow(Y, N - 1) + q;
  if (N >= 2) d += q * q * (N - 1) * std::pow(Y, N - 2);
  return d;
}

inline BeliefSolution finish_belief(double q, int N, double Y, bool multiple) {
  BeliefSolution s;
  s.Y = Y;
  s.R = std::pow(Y, N - 1);
  s.V = (Y - q) / (1.0 - q);
  s.w = (1.0 - s.R) * q;
  s.z = (1.0 - q) * s.R;
  s.residual = std::abs(consistency_polynomial(q, N, Y));
  s.multiple_roots = multiple;
  return s;
}

}  // namespace detail

/// Root of the consistency polynomial on [q, 1]: bisection on the bracket,
/// then one Newton polish that is kept only if it stays inside the bracket
/// and lowers the residual. With several sign changes the smallest root is
/// taken and `multiple_roots` is set.
inline BeliefSolution solve_belief(double q, int N, double tol = 1e-12) {
  if (!(q >= 0.0 && q < 1.0)) throw InvalidArgument("solve_belief: q must lie in [0, 1)");
  if (N < 1) throw InvalidArgument("solve_belief: N must be >= 1");
  if (!(tol > 0.0)) throw InvalidArgument("solve_belief: tol must be positive");

  auto f = [&](double y) { return consistency_polynomial(q, N, y); };

  // f(q) = q(1-q)(q^(N-1) - 1) <= 0 and f(1) = (1-q)^2 > 0. For N = 1 the
  // polynomial is (1-q)(Y-q), but rounding can hide the sign change.
  if (N == 1 || f(q) == 0.0) return detail::finish_belief(q, N, q, false);

  constexpr int kScan = 256;
  int sign_changes = 0;
  double lo = q, hi = 1.0;
  bool found = false;
  double prev_y = q, prev_f = f(q);
  for (int i = 1; i <= kScan; ++i) {
    const double y = q + (1.0 - q) * i / kScan;
    const double fy = f(y);
    if ((prev_f < 0.0) != (fy < 0.0)) {
      ++sign_changes;
      if (!found) {
        lo = prev_y;
        hi = y;
        found = true;
      }
    }
    prev_y = y;
    prev_f = fy;
  }
  if (!found)
    throw SolverFailure("consistency polynomial has no sign change on [q, 1] (q=" +
                        std::to_string(q) + ", N=" + std::to_string(N) + ")");

  double flo = f(lo);
  for (int it = 0; it < 2000; ++it) {
    const double mid = 0.5 * (lo + hi);
    if (mid <= lo || mid >= hi) break;
    const double fm = f(mid);
    if (fm == 0.0) {
      lo = hi = mid;
      break;
    }
    if ((fm < 0.0) == (flo < 0.0)) {
      lo = mid;
      flo = fm;
    } else {
      hi = mid;
    }
  }
  double y = 0.5 * (lo + hi);
  const double df = detail::consistency_derivative(q, N, y);
  if (df != 0.0) {
    const double polished = y - f(y) / df;
    if (polished >= lo && polished <= hi && std::abs(f(polished)) < std::abs(f(y))) y = polished;
  }

  BeliefSolution s = detail::finish_belief(q, N, y, sign_changes > 1);
  if (s.residual > tol)
    throw SolverFailure("consistency polynomial residual " + std::to_string(s.residual) +
                        " exceeds tolerance");
  return s;
}

}  // namespace memsync
