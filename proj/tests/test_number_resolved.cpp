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

#include <gtest/gtest.h>

#include <cmath>
#include <limits>
#include <random>

#include "memsync/binary_chain.hpp"
#include "memsync/number_resolved.hpp"
#include "oracles.hpp"

using namespace memsync;

namespace {

MemoryParams memory(double eta_s, double eta_r, double B) {
  MemoryParams m;
  m.eta_s = eta_s;
  m.eta_r = eta_r;
  m.B = B;
  return m;
}

ProbDist random_dist(std::mt19937_64& gen, int n_max) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::vector<double> w(static_cast<std::size_t>(n_max) + 1);
  double tot = 0;
  for (double& x : w) tot += (x = u(gen));
  for (double& x : w) x /= tot;
  return ProbDist(w);
}

}  // namespace

TEST(TransferMatrix, NothingHappensGivesIdentity) {
  const ProbDist p_h({0, 0.9, 0.09, 0.01});
  const TransferMatrix T =
      build_transfer_matrix(0.0, 0.0, memory(0.7, 0.7, std::numeric_limits<double>::infinity()), p_h);
  for (std::size_t j = 0; j < T.dim(); ++j)
    for (std::size_t k = 0; k < T.dim(); ++k) EXPECT_EQ(T.at(j, k), j == k ? 1.0 : 0.0);
  EXPECT_THROW(steady_state(T), DegenerateChain);
}

TEST(TransferMatrix, ReadoutErases) {
  const ProbDist p_h({0, 0.9, 0.09, 0.01});
  const TransferMatrix T = build_transfer_matrix(0.0, 1.0, memory(0.7, 0.7, 30), p_h);
  for (std::size_t k = 0; k < T.dim(); ++k)
    for (std::size_t j = 0; j < T.dim(); ++j) EXPECT_NEAR(T.at(j, k), j == 0 ? 1.0 : 0.0, 1e-15);
}

TEST(TransferMatrix, ColumnStochasticUpToTrackedTruncation) {
  const SourceParams src{0.2, 0.5, 0.0};
  for (int n_max : {2, 4, 8}) {
    const ProbDist p_h = heralded_dist(src, n_max);
    const TransferMatrix T = build_transfer_matrix(0.1, 0.3, memory(0.75, 0.75, 100), p_h);
    const ProbDist p_s = binomial_loss(p_h, 0.75);
    for (std::size_t k = 0; k < T.dim(); ++k) {
      EXPECT_NEAR(T.column_sum(k), 1.0 - 0.1 * 0.7 * (1.0 - p_s.total()), 1e-14);
      EXPECT_LE(T.column_sum(k), 1.0 + 1e-12);
    }
    EXPECT_NEAR(T.truncation_residual(), 0.1 * 0.7 * p_h.deficit, 1e-14);
  }
  const TransferMatrix T = build_transfer_matrix(0.1, 0.3, memory(0.75, 0.75, 100),
                                                 heralded_dist(src, 30));
  for (std::size_t k = 0; k < T.dim(); ++k) EXPECT_NEAR(T.column_sum(k), 1.0, 1e-9);
}

TEST(SteadyState, EmbedsBinaryChain) {
  const ProbDist p_h({0.0, 1.0});
  for (double q : {0.001, 0.05, 0.3})
    for (double R : {0.0, 0.01, 0.5})
      for (double eta_s : {0.4, 1.0}) {
        const MemoryParams m = memory(eta_s, 0.8, 250);
        const ProbDist x = steady_state(build_transfer_matrix(q, R, m, p_h));
        EXPECT_NEAR(x.weights[1], steady_occupancy(chain_rates(q, R, m)), 1e-10);
      }
}

TEST(SteadyState, PowerIterationMatchesDirectSolve) {
  for (double p : {1e-4, 0.02, 0.2})
    for (double R : {0.0, 0.003, 0.4}) {
      const SourceParams src{p, 0.5, 0.0};
      const ProbDist p_h = heralded_dist(src, 8);
      const TransferMatrix T =
          build_transfer_matrix(herald_prob(src), R, memory(0.75, 0.9, 1000), p_h);
      const ProbDist x = steady_state(T);
      EXPECT_TRUE(x.normalized());
      const std::vector<double> direct = oracle::steady_state_direct(T);
      for (std::size_t n = 0; n < direct.size(); ++n) EXPECT_NEAR(x.weights[n], direct[n], 1e-10);
      // Residual in the renormalized (conditioned) sense.
      const std::vector<double> y = T.apply(x.weights);
      double tot = 0;
      for (double v : y) tot += v;
      for (std::size_t n = 0; n < y.size(); ++n) EXPECT_LE(std::abs(y[n] / tot - x.weights[n]), 1e-10);
    }
}

TEST(SteadyState, IterationCapRaisesWithResidual) {
  const ProbDist p_h({0.0, 1.0});
  const TransferMatrix T = build_transfer_matrix(1e-4, 0.0, memory(1.0, 1.0, 1e6), p_h);
  try {
    steady_state(T, {1e-13, 3});
    FAIL() << "expected NonConvergence";
  } catch (const NonConvergence& e) {
    EXPECT_GT(e.residual(), 1e-13);
  }
}

TEST(RetrievedDist, InheritsBinomialLoss) {
  const ProbDist x({0, 0, 1});
  const ProbDist r = retrieved_dist(x, 0.5);
  EXPECT_DOUBLE_EQ(r.weights[0], 0.25);
  EXPECT_DOUBLE_EQ(r.weights[1], 0.5);
  EXPECT_DOUBLE_EQ(retrieved_dist(x, 0.0).weights[0], 1.0);
  EXPECT_DOUBLE_EQ(retrieved_dist(x, 1.0).weights[2], 1.0);
}

TEST(SyncOutputDist, Mixture) {
  const ProbDist ph({0, 1, 0}), pr({1, 0, 0});
  const ProbDist a = sync_output_dist(0.5, ph, pr);
  EXPECT_DOUBLE_EQ(a.weights[0], 0.5);
  EXPECT_DOUBLE_EQ(a.weights[1], 0.5);
  EXPECT_DOUBLE_EQ(a.weights[2], 0.0);
  EXPECT_EQ(sync_output_dist(1.0, ph, pr).weights, ph.weights);
  EXPECT_EQ(sync_output_dist(0.0, ph, pr).weights, pr.weights);
  EXPECT_THROW(sync_output_dist(0.5, ph, ProbDist({1.0})), InvalidArgument);
}

TEST(CoincidenceExact, Examples) {
  EXPECT_EQ(coincidence_exact(ProbDist({0, 1}), 7), 1.0);
  EXPECT_DOUBLE_EQ(coincidence_exact(ProbDist({0.5, 0.5}), 3), 0.125);
}

TEST(CoincidenceExact, ApproachesBinaryModelAtSmallP) {
  for (int N : {2, 4}) {
    SystemParams sp;
    sp.N = N;
    sp.source = {1e-6, 1.0, 0.0};
    sp.memory = memory(0.75, 0.75, 1000);
    const FidelityReport f = evaluate_resolved(sp);
    const SyncReport b = coincidence_closed_form(sp);
    // Multi-photon terms enter at relative order p.
    EXPECT_LT(std::abs(f.c / b.c_sync - 1.0), 1e-4) << N;
  }
}

TEST(ProbFewerThan, Examples) {
  EXPECT_EQ(prob_fewer_than(ProbDist({1.0, 0.0, 0.0}), 5), 1.0);
  EXPECT_DOUBLE_EQ(prob_fewer_than(ProbDist({0.3, 0.7}), 1), 0.3);
  EXPECT_NEAR(prob_fewer_than(ProbDist({0.5, 0.3, 0.2}), 2), 0.55, 1e-15);
  EXPECT_NEAR(oracle::prob_fewer_than_enumerated(ProbDist({0.5, 0.3, 0.2}), 2), 0.55, 1e-15);
}

TEST(ProbFewerThan, ConvolutionMatchesEnumeration) {
  std::mt19937_64 gen(2024);
  for (int N = 1; N <= 4; ++N)
    for (int n_max = 1; n_max <= 5; ++n_max)
      for (int trial = 0; trial < 5; ++trial) {
        const ProbDist d = random_dist(gen, n_max);
        EXPECT_NEAR(prob_fewer_than(d, N), oracle::prob_fewer_than_enumerated(d, N), 1e-12);
        EXPECT_NEAR(prob_fewer_than(d, N) + prob_at_least(d, N), 1.0, 1e-12);
      }
}

TEST(FidelityUnpostselected, Examples) {
  EXPECT_DOUBLE_EQ(fidelity_unpostselected(0.06, 0.2, 0.3, 4), 1.0);
  EXPECT_THROW(fidelity_unpostselected(0.1, 0.0, 0.5, 2), UndefinedFidelity);
  EXPECT_NEAR(fidelity_no_memory(heralded_dist({0.1, 1.0, 0.0}, 8)), 0.9, 1e-15);
  const double p_theta = 0.06821789367236468;
  EXPECT_NEAR(fidelity_no_memory(heralded_dist({p_theta, 0.5, 0.0}, 8)), 0.9, 1e-14);
}

TEST(FidelityUnpostselected, MemorylessSystemIsHeraldedSinglePhoton) {
  SystemParams sp;
  sp.N = 5;
  sp.source = {0.07, 0.6, 0.0};
  const FidelityReport f = evaluate_resolved(sp);
  EXPECT_EQ(f.F_no_mem, heralded_dist(sp.source, sp.n_max)[1]);
}

TEST(FidelityPostselected, Examples) {
  EXPECT_DOUBLE_EQ(fidelity_postselected(0.3, 0.7, 0.1, 3, DenominatorMode::kNormalized), 1.0);
  const ProbDist d({0.2, 0.8});
  const double c = coincidence_exact(d, 1);
  const double pl = prob_fewer_than(d, 1);
  EXPECT_DOUBLE_EQ(c, 0.8);
  EXPECT_DOUBLE_EQ(pl, 0.2);
  EXPECT_DOUBLE_EQ(fidelity_postselected(c, pl, 0.5, 1), 1.0);
  EXPECT_DOUBLE_EQ(fidelity_postselected(c, d, 0.5, 1), 1.0);
  try {
    fidelity_postselected(0.01, 0.5, 0.01, 2, DenominatorMode::kPaperLiteral);
    FAIL() << "expected UndefinedFidelity";
  } catch (const UndefinedFidelity& e) {
    EXPECT_NE(std::string(e.what()).find("paper_literal"), std::string::npos);
  }
}

TEST(FidelityPostselected, PerModeDenominator) {
  const ProbDist d({0.5, 0.4, 0.1});
  const double c = coincidence_exact(d, 2);
  EXPECT_NEAR(fidelity_postselected(c, d, 0.1, 2, DenominatorMode::kPerMode), 0.4 / 0.5, 1e-15);
  EXPECT_THROW(fidelity_postselected(c, 0.3, 0.1, 2, DenominatorMode::kPerMode), InvalidArgument);
}

TEST(Fidelity, MonotoneInPAndRetrieval) {
  SystemParams sp;
  sp.N = 6;
  sp.source.h = 0.5;
  sp.memory = memory(0.75, 0.75, 1000);
  double prev = 2.0;
  for (double p = 1e-5; p < 0.3; p *= 2) {
    sp.source.p = p;
    const FidelityReport f = evaluate_resolved(sp);
    ASSERT_TRUE(f.F_tilde.has_value());
    EXPECT_LE(*f.F_tilde, prev + 1e-12) << p;
    EXPECT_LE(*f.F_tilde, 1.0);
    prev = *f.F_tilde;
  }
  sp.source.p = 0.02;
  double prev_c = 0;
  for (double er : {0.0, 0.3, 0.6, 0.9, 1.0}) {
    sp.memory.eta_r = er;
    const double c = evaluate_resolved(sp).c;
    EXPECT_GE(c, prev_c);
    prev_c = c;
  }
}

TEST(Reduction, SinglePhotonInputMatchesBinaryModel) {
  const ProbDist p_h({0.0, 1.0});
  for (double q : {1e-4, 0.02, 0.3})
    for (double R : {0.0, 0.1, 0.7})
      for (double es : {0.5, 1.0}) {
        const MemoryParams m = memory(es, 0.8, 400);
        const ProbDist x = steady_state(build_transfer_matrix(q, R, m, p_h));
        const ProbDist ps = sync_output_dist(q, p_h, retrieved_dist(x, m.eta_r));
        SystemParams sp;
        sp.memory = m;
        const SyncReport b = coincidence_at(sp, q, R);
        EXPECT_NEAR(ps.weights[1], b.p_sync, 1e-12);
      }
}

TEST(ThresholdUnsync, Examples) {
  EXPECT_EQ(threshold_p_unsync(0.5, 1.0), 0.0);
  for (double th : {0.5, 0.9, 0.99}) EXPECT_NEAR(threshold_p_unsync(1.0, th), 1.0 - th, 1e-15);
  EXPECT_NEAR(threshold_p_unsync(0.5, 0.9), 0.06821789367236468, 1e-15);
  EXPECT_THROW(threshold_p_unsync(0.5, 1.1), InvalidArgument);
}

TEST(ThresholdUnsync, SatisfiesQuadratic) {
  for (double h = 0.0; h <= 1.0; h += 0.05)
    for (double th = 0.05; th <= 1.0; th += 0.05) {
      const double p = threshold_p_unsync(h, th);
      EXPECT_NEAR((1 - p) * (1 - p * (1 - h)), th, 1e-12);
      // minus branch: the smaller root, which lies in [0, 1)
      EXPECT_GE(p, 0.0);
      EXPECT_LT(p, 1.0);
    }
}

TEST(ThresholdSync, MemorylessSingleUnitReducesToUnsync) {
  SystemParams sp;
  sp.N = 1;
  sp.source.h = 0.5;
  sp.memory = memory(1.0, 1.0, 1e12);
  for (double th : {0.8, 0.9, 0.95}) {
    const ThresholdResult r = threshold_p_sync(sp, th, FidelityKind::kUnpostselected);
    EXPECT_NEAR(r.p, threshold_p_unsync(0.5, th), 1e-10);
    EXPECT_NEAR(r.fidelity, th, 1e-9);
  }
}

TEST(ThresholdSync, ShrinksAsThetaGrows) {
  // The p -> 0 limit of the postselected fidelity is below 1 here (about
  // 0.997), so theta stays under it.
  SystemParams sp;
  sp.N = 3;
  sp.memory = memory(0.75, 0.75, 1000);
  double prev = 1.0;
  for (double th : {0.9, 0.95, 0.99}) {
    ThresholdOptions opt;
    opt.p_lo = 1e-9;
    const ThresholdResult r = threshold_p_sync(sp, th, FidelityKind::kPostselected,
                                               DenominatorMode::kNormalized, opt);
    EXPECT_LT(r.p, prev);
    EXPECT_NEAR(r.fidelity, th, 1e-9);
    prev = r.p;
  }
  EXPECT_LT(prev, 2e-4);
}

TEST(ThresholdSync, PaperLiteralHasNoSolution) {
  SystemParams sp;
  sp.N = 4;
  EXPECT_THROW(threshold_p_sync(sp, 0.9, FidelityKind::kPostselected,
                                DenominatorMode::kPaperLiteral),
               NoSolution);
}

TEST(ThresholdSync, UnpostselectedTakesLargestCrossing) {
  // F rises from below theta at small p, peaks, then falls.
  SystemParams sp;
  sp.N = 12;
  sp.source.h = 0.5;
  sp.memory = memory(0.99, 0.99, 1000);
  const ThresholdResult r = threshold_p_sync(sp, 0.9, FidelityKind::kUnpostselected);
  EXPECT_TRUE(r.non_monotone);
  EXPECT_NEAR(r.fidelity, 0.9, 1e-9);
  sp.source.p = r.p * 1.01;
  EXPECT_LT(*evaluate_resolved(sp).F, 0.9);
  sp.source.p = r.p * 0.99;
  EXPECT_GT(*evaluate_resolved(sp).F, 0.9);
}
