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

// Test-only reference computations, deliberately independent of the
// library's algorithms.

#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <functional>
#include <vector>

#include "memsync/core_model.hpp"
#include "memsync/number_resolved.hpp"

namespace memsync::oracle {

/// p_<N by explicit enumeration of every vector s of N non-negative integers
/// with sum j < N, multiplying p_sync(s_l) over the modes.
inline double prob_fewer_than_enumerated(const ProbDist& p_sync, int N) {
  double total = 0.0;
  std::vector<int> s(static_cast<std::size_t>(N), 0);
  std::function<void(int, int)> rec = [&](int mode, int remaining) {
    if (mode == N - 1) {
      s[static_cast<std::size_t>(mode)] = remaining;
      double prod = 1.0;
      for (int v : s) prod *= p_sync[static_cast<std::size_t>(v)];
      total += prod;
      return;
    }
    for (int v = 0; v <= remaining; ++v) {
      s[static_cast<std::size_t>(mode)] = v;
      rec(mode + 1, remaining - v);
    }
  };
  for (int j = 0; j < N; ++j) rec(0, j);
  return total;
}

/// Stationary vector from a direct solve of (T - I) x = 0 with sum(x) = 1
/// (one equation replaced by the normalization).
inline std::vector<double> steady_state_direct(const TransferMatrix& T) {
  const auto n = static_cast<Eigen::Index>(T.dim());
  Eigen::MatrixXd A(n, n);
  // Columns of a truncated matrix may sum to slightly below 1; rescale to
  // match the conditioning applied by power iteration.
  for (Eigen::Index k = 0; k < n; ++k) {
    const double cs = T.column_sum(static_cast<std::size_t>(k));
    for (Eigen::Index j = 0; j < n; ++j)
      A(j, k) = T.at(static_cast<std::size_t>(j), static_cast<std::size_t>(k)) / cs - (j == k ? 1.0 : 0.0);
  }
  Eigen::VectorXd rhs = Eigen::VectorXd::Zero(n);
  A.row(n - 1).setOnes();
  rhs(n - 1) = 1.0;
  const Eigen::VectorXd x = A.fullPivLu().solve(rhs);
  return std::vector<double>(x.data(), x.data() + n);
}

/// Exact protocol readout rate for N = 2. Belief states: 0 or 1 units
/// believed charged. 0 -> 1 w.p. 2q(1-q); 1 -> 0 w.p. q(1-q) (the other unit
/// heralds alone); readouts happen from 0 w.p. q^2 and from 1 w.p. q.
/// Stationary (1/3, 2/3), so the rate is q(2+q)/3 and each unit is believed
/// charged a third of the time.
inline double two_unit_readout_rate(double q) { return q * (2.0 + q) / 3.0; }
inline double two_unit_believed_occupancy() { return 1.0 / 3.0; }

}  // namespace memsync::oracle
