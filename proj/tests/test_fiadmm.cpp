// Copyright 2026 The fairmf Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "fairmf/fiadmm.hpp"

#include <cmath>
#include <vector>

#include <gtest/gtest.h>

#include "fairmf/io.hpp"
#include "support/oracles.hpp"
#include "support/synthetic.hpp"
#include "support/tempfile.hpp"

namespace fairmf {
namespace {

using testing::TempDir;

struct Fixture {
  SparseBinaryMatrix m;
  RegWeights w;
  HyperParams hp;
  AdmmState st;
};

Fixture make_fixture(std::uint64_t seed = 1, Real lambda_f = 2.0,
                     Real rho = 50.0, Real gamma = 0.02) {
  Fixture f;
  f.m = synthetic::zipf_matrix(24, 16, 2, 8, 0.9, seed);
  f.hp.d = 5;
  f.hp.lambda_f = lambda_f;
  f.hp.rho = rho;
  f.hp.gamma = gamma;
  f.hp.seed = seed;
  f.w = frequency_weights(f.m, f.hp.lambda2, f.hp.eta, f.hp.alpha0);
  f.st.u = init_factors(f.m.n_users, f.hp.d, 0.4, seed + 10);
  f.st.v = init_factors(f.m.n_items, f.hp.d, 0.4, seed + 20);
  f.st.s = init_factors(1, f.hp.d, 0.7, seed + 30).row(0).transpose();
  f.st.w = init_factors(1, f.hp.d, 0.3, seed + 40).row(0).transpose();
  f.st.g_u = gramian(f.st.u);
  f.st.g_v = gramian(f.st.v);
  f.st.g_u_fresh = true;
  f.st.g_v_fresh = true;
  return f;
}

TEST(FairnessRegulariser, MatchesDenseFormula) {
  const auto f = make_fixture();
  const Vector t = f.st.u.colwise().mean().transpose();
  const Real want = 0.5 * (f.st.v * t).squaredNorm();
  EXPECT_LT(oracle::rel_diff(fairness_regulariser(f.st.u, f.st.v), want),
            1e-12);
  EXPECT_THROW(fairness_regulariser(f.st.u, FactorMatrix(3, f.hp.d + 1)),
               std::invalid_argument);
}

TEST(AugmentedLagrangian, SumsObjectiveAndPenalties) {
  const auto f = make_fixture();
  const Vector t = f.st.u.colwise().mean().transpose();
  const Real want =
      oracle::dense_ials_loss(f.m, f.st.u, f.st.v, f.w, f.hp.alpha0) +
      0.5 * f.hp.lambda_f * (f.st.v * f.st.s).squaredNorm() +
      0.5 * f.hp.rho * (t - f.st.s + f.st.w).squaredNorm() -
      0.5 * f.hp.rho * f.st.w.squaredNorm();
  const Real got = augmented_lagrangian(f.m, f.st, f.w, f.hp);
  EXPECT_LT(oracle::rel_diff(got, want), 1e-12);
}

TEST(UpdateV, SolvesEveryItemSystemWithFairnessTerm) {
  const auto f = make_fixture(3);
  const FactorMatrix v1 = update_v(f.m, f.st, f.w, f.hp);
  for (int j = 0; j < f.m.n_items; ++j) {
    const Vector want = oracle::dense_item_solve(
        f.m, f.st.u, f.w, f.hp.alpha0, j, f.hp.lambda_f, &f.st.s);
    EXPECT_LT((v1.row(j).transpose() - want).norm(),
              1e-10 * std::max(1.0, want.norm()))
        << "item " << j;
  }
}

TEST(UpdateV, IsTheExactBlockMinimizer) {
  auto f = make_fixture(7);
  f.st.v = update_v(f.m, f.st, f.w, f.hp);
  const Real at_min = augmented_lagrangian(f.m, f.st, f.w, f.hp);
  std::mt19937_64 gen(5);
  for (int trial = 0; trial < 5; ++trial) {
    AdmmState pert = f.st;
    const int j = static_cast<int>(uniform_index(gen, pert.v.rows()));
    const int c = static_cast<int>(uniform_index(gen, pert.v.cols()));
    pert.v(j, c) += 1e-3;
    EXPECT_GT(augmented_lagrangian(f.m, pert, f.w, f.hp), at_min);
  }
}

TEST(UpdateV, LambdaFZeroReducesToPlainItemSolve) {
  auto f = make_fixture(11, /*lambda_f=*/0.0);
  const FactorMatrix a = update_v(f.m, f.st, f.w, f.hp);
  const FactorMatrix b = update_items_ials(f.m, f.st.u, f.w, f.hp.alpha0);
  EXPECT_EQ((a - b).cwiseAbs().maxCoeff(), 0.0);
}

TEST(UpdateV, RequiresFreshUserGramian) {
  auto f = make_fixture();
  f.st.g_u_fresh = false;
  EXPECT_THROW(update_v(f.m, f.st, f.w, f.hp), std::logic_error);
}

TEST(GradU, MatchesDenseGradient) {
  const auto f = make_fixture(13);
  const FactorMatrix got = grad_u(f.m, f.st, f.w, f.hp);
  const FactorMatrix want =
      oracle::dense_grad_u(f.m, f.st.u, f.st.v, f.w, f.hp.alpha0);
  EXPECT_LT((got - want).cwiseAbs().maxCoeff(), 1e-10);
}

TEST(GradU, MatchesFiniteDifferences) {
  const auto f = make_fixture(17);
  const FactorMatrix g = grad_u(f.m, f.st, f.w, f.hp);
  std::mt19937_64 gen(3);
  const Real eps = 1e-6;
  for (int trial = 0; trial < 12; ++trial) {
    const int i = static_cast<int>(uniform_index(gen, f.st.u.rows()));
    const int c = static_cast<int>(uniform_index(gen, f.st.u.cols()));
    FactorMatrix up = f.st.u, down = f.st.u;
    up(i, c) += eps;
    down(i, c) -= eps;
    const Real fd = (ials_loss(f.m, up, f.st.v, f.w, f.hp.alpha0) -
                     ials_loss(f.m, down, f.st.v, f.w, f.hp.alpha0)) /
                    (2 * eps);
    EXPECT_LT(oracle::rel_diff(g(i, c), fd), 1e-6)
        << "coordinate (" << i << ", " << c << ")";
  }
}

TEST(ProxMap, MatchesDenseSolve) {
  const auto f = make_fixture(19);
  const FactorMatrix got =
      prox_map(f.st.u, f.st.s, f.st.w, f.hp.rho, f.hp.gamma);
  const FactorMatrix want =
      oracle::dense_prox(f.st.u, f.st.s, f.st.w, f.hp.rho, f.hp.gamma);
  EXPECT_LT((got - want).cwiseAbs().maxCoeff(), 1e-10);
}

TEST(ProxMap, SatisfiesStationarity) {
  // At the prox point: (1/gamma)(X - Ut) + (rho/n) 1 (t(X) - s + w)^T = 0.
  const auto f = make_fixture(23);
  const FactorMatrix x =
      prox_map(f.st.u, f.st.s, f.st.w, f.hp.rho, f.hp.gamma);
  const Real n = static_cast<Real>(x.rows());
  const Vector t = x.colwise().mean().transpose();
  const FactorMatrix resid =
      (1.0 / f.hp.gamma) * (x - f.st.u) +
      (f.hp.rho / n) * Vector::Ones(x.rows()) * (t - f.st.s + f.st.w).transpose();
  EXPECT_LT(resid.cwiseAbs().maxCoeff(), 1e-9);
}

TEST(ProxMap, RhoZeroIsIdentity) {
  const auto f = make_fixture(29);
  const FactorMatrix got = prox_map(f.st.u, f.st.s, f.st.w, 0.0, f.hp.gamma);
  EXPECT_EQ((got - f.st.u).cwiseAbs().maxCoeff(), 0.0);
  EXPECT_THROW(prox_map(f.st.u, f.st.s, f.st.w, -1.0, f.hp.gamma),
               std::invalid_argument);
}

TEST(UpdateS, SatisfiesNormalEquations) {
  const auto f = make_fixture(31);
  const Vector s1 = update_s(f.st, f.hp);
  const Vector t = f.st.u.colwise().mean().transpose();
  const Vector resid = f.hp.lambda_f * (f.st.g_v * s1) + f.hp.rho * s1 -
                       f.hp.rho * (t + f.st.w);
  EXPECT_LT(resid.cwiseAbs().maxCoeff(), 1e-9);
}

TEST(UpdateS, MinimizesItsBlock) {
  auto f = make_fixture(37);
  f.st.s = update_s(f.st, f.hp);
  const Real at_min = augmented_lagrangian(f.m, f.st, f.w, f.hp);
  std::mt19937_64 gen(11);
  for (int trial = 0; trial < 5; ++trial) {
    AdmmState pert = f.st;
    pert.s[static_cast<Eigen::Index>(uniform_index(
        gen, static_cast<std::size_t>(pert.s.size())))] += 1e-3;
    EXPECT_GT(augmented_lagrangian(f.m, pert, f.w, f.hp), at_min);
  }
}

TEST(UpdateS, LambdaFZeroShortCircuitsToMeanPlusDual) {
  auto f = make_fixture(41, /*lambda_f=*/0.0);
  f.st.g_v_fresh = false;  // the shortcut must not touch the Gramian
  const Vector s1 = update_s(f.st, f.hp);
  const Vector t = mean_user_vector(f.st.u);
  EXPECT_EQ((s1 - (t + f.st.w)).cwiseAbs().maxCoeff(), 0.0);
}

TEST(UpdateW, AscendsByTheViolation) {
  auto f = make_fixture(43);
  f.st.s = update_s(f.st, f.hp);
  const Vector w1 = update_w(f.st);
  const Vector t = mean_user_vector(f.st.u);
  EXPECT_EQ((w1 - (f.st.w + t - f.st.s)).cwiseAbs().maxCoeff(), 0.0);
}

TEST(TrainFiadmm, FirstEpochDecomposesIntoPublishedSteps) {
  const auto m = synthetic::zipf_matrix(20, 14, 2, 7, 1.0, 53);
  HyperParams hp;
  hp.d = 4;
  hp.lambda_f = 1.5;
  hp.rho = 40.0;
  hp.gamma = 0.02;
  hp.t_train = 1;
  hp.seed = 6;
  const auto r = train_fiadmm(m, hp);

  const RegWeights w = frequency_weights(m, hp.lambda2, hp.eta, hp.alpha0);
  AdmmState st;
  st.u = init_factors(m.n_users, hp.d, hp.sigma, derive_seed(hp.seed, 1));
  st.v = init_factors(m.n_items, hp.d, hp.sigma, derive_seed(hp.seed, 2));
  st.s = mean_user_vector(st.u);
  st.w = Vector::Zero(hp.d);
  st.g_u = gramian(st.u);
  st.g_u_fresh = true;
  st.v = update_v(m, st, w, hp);
  st.g_v = gramian(st.v);
  st.g_v_fresh = true;
  st.u = update_u(m, st, w, hp);
  st.s = update_s(st, hp);
  st.w = update_w(st);

  EXPECT_EQ((r.state.u - st.u).cwiseAbs().maxCoeff(), 0.0);
  EXPECT_EQ((r.state.v - st.v).cwiseAbs().maxCoeff(), 0.0);
  EXPECT_EQ((r.state.s - st.s).cwiseAbs().maxCoeff(), 0.0);
  EXPECT_EQ((r.state.w - st.w).cwiseAbs().maxCoeff(), 0.0);
}

TEST(TrainFiadmm, TraceInvariantsHold) {
  const auto m = synthetic::zipf_matrix(30, 18, 2, 8, 0.9, 59);
  HyperParams hp;
  hp.d = 5;
  hp.lambda_f = 1.0;
  hp.rho = 60.0;
  hp.gamma = 0.02;
  hp.t_train = 8;
  hp.seed = 9;
  const RegWeights w = frequency_weights(m, hp.lambda2, hp.eta, hp.alpha0);

  std::vector<AdmmState> snaps;
  AdmmOptions opts;
  opts.on_epoch = [&](const AdmmState& st, const EpochRow& row) {
    EXPECT_EQ(st.epoch, row.epoch);
    snaps.push_back(st);
  };
  const auto r = train_fiadmm(m, hp, opts);

  ASSERT_EQ(r.trace.size(), static_cast<std::size_t>(hp.t_train + 1));
  ASSERT_EQ(snaps.size(), r.trace.size());
  for (std::size_t e = 0; e < r.trace.size(); ++e) {
    const EpochRow& row = r.trace[e];
    EXPECT_EQ(row.epoch, static_cast<int>(e));
    // The dual step is w += t - s, so dw and the violation are one number.
    EXPECT_EQ(row.dw, row.violation);
    // The recorded objective is L_rho at the recorded state.
    const Real want = augmented_lagrangian(m, snaps[e], w, hp);
    EXPECT_LT(oracle::rel_diff(row.l_rho, want), 1e-11) << "epoch " << e;
    const Real loss_want =
        oracle::dense_ials_loss(m, snaps[e].u, snaps[e].v, w, hp.alpha0);
    EXPECT_LT(oracle::rel_diff(row.loss, loss_want), 1e-11);
    const Real rf_want = fairness_regulariser(snaps[e].u, snaps[e].v);
    EXPECT_LT(oracle::rel_diff(row.r_f, rf_want), 1e-10);
  }
  // Start state: s = t exactly, so the initial violation is zero.
  EXPECT_EQ(r.trace[0].violation, 0.0);
  EXPECT_EQ(r.trace[0].du, 0.0);
  // Difference norms are consistent with the snapshots.
  for (std::size_t e = 1; e < snaps.size(); ++e) {
    EXPECT_LT(oracle::rel_diff(r.trace[e].du,
                               (snaps[e].u - snaps[e - 1].u).norm()),
              1e-12);
    EXPECT_LT(oracle::rel_diff(r.trace[e].dv,
                               (snaps[e].v - snaps[e - 1].v).norm()),
              1e-12);
  }
}

TEST(TrainFiadmm, ObjectiveDescendsInAStableRegime) {
  const auto m = synthetic::zipf_matrix(40, 24, 3, 10, 1.0, 61);
  HyperParams hp;
  hp.d = 6;
  hp.lambda_f = 0.5;
  hp.rho = 200.0;
  hp.gamma = 0.005;
  hp.t_train = 30;
  hp.seed = 12;
  const auto r = train_fiadmm(m, hp);
  for (std::size_t e = 1; e < r.trace.size(); ++e) {
    EXPECT_LE(r.trace[e].l_rho,
              r.trace[e - 1].l_rho + 1e-8 * std::abs(r.trace[e - 1].l_rho))
        << "epoch " << e;
  }
  EXPECT_LT(r.trace.back().l_rho, r.trace.front().l_rho);
  // The constraint violation collapses as the dual stabilizes.
  EXPECT_LT(r.trace.back().violation, 0.05 * (r.trace[1].violation + 1e-12));
}

TEST(TrainFiadmm, DeterministicAcrossRunsAndThreads) {
  const auto m = synthetic::zipf_matrix(50, 25, 3, 9, 1.0, 67);
  HyperParams hp;
  hp.d = 5;
  hp.lambda_f = 1.0;
  hp.rho = 100.0;
  hp.gamma = 0.01;
  hp.t_train = 5;
  hp.seed = 15;
  ExecPolicy one, four;
  one.threads = 1;
  four.threads = 4;
  const auto a = train_fiadmm(m, hp, {one, {}});
  const auto b = train_fiadmm(m, hp, {four, {}});
  EXPECT_EQ((a.state.u - b.state.u).cwiseAbs().maxCoeff(), 0.0);
  EXPECT_EQ((a.state.v - b.state.v).cwiseAbs().maxCoeff(), 0.0);
  EXPECT_EQ((a.state.s - b.state.s).cwiseAbs().maxCoeff(), 0.0);
  for (std::size_t e = 0; e < a.trace.size(); ++e) {
    EXPECT_EQ(a.trace[e].l_rho, b.trace[e].l_rho);
  }

  ExecPolicy det;
  det.deterministic = true;
  const auto c = train_fiadmm(m, hp, {det, {}});
  EXPECT_LT((a.state.u - c.state.u).cwiseAbs().maxCoeff(), 1e-8);
  EXPECT_LT(oracle::rel_diff(a.trace.back().l_rho, c.trace.back().l_rho),
            1e-9);
}

TEST(TrainFiadmm, DivergenceFailsLoudly) {
  const auto m = synthetic::zipf_matrix(30, 20, 3, 9, 1.0, 71);
  HyperParams hp;
  hp.d = 6;
  hp.lambda_f = 1.0;
  hp.rho = 100.0;
  hp.gamma = 1e9;  // absurd step size: the U iterate blows up
  hp.t_train = 400;
  hp.seed = 18;
  try {
    train_fiadmm(m, hp);
    FAIL() << "expected DivergenceError";
  } catch (const DivergenceError& e) {
    EXPECT_GE(e.epoch(), 1);
    EXPECT_FALSE(e.variable().empty());
  }
}

TEST(FoldIn, FreezesItemsAndRunsUserUpdatesOnly) {
  const auto m = synthetic::zipf_matrix(40, 20, 3, 9, 1.0, 73);
  HyperParams hp;
  hp.d = 5;
  hp.lambda_f = 1.0;
  hp.rho = 80.0;
  hp.gamma = 0.02;
  hp.t_train = 10;
  hp.t_fold = 12;
  hp.seed = 21;
  const auto trained = train_fiadmm(m, hp);

  const auto m_new = synthetic::zipf_matrix(15, 20, 2, 8, 1.0, 79);
  const auto r = fold_in(trained.state.v, m_new, hp);
  ASSERT_EQ(r.trace.size(), static_cast<std::size_t>(hp.t_fold + 1));
  ASSERT_EQ(r.u.rows(), m_new.n_users);
  for (const auto& row : r.trace) {
    EXPECT_EQ(row.dv, 0.0);  // items never move during fold-in
    EXPECT_EQ(row.dw, row.violation);
    EXPECT_TRUE(std::isfinite(row.l_rho));
  }
  // The user step makes progress on the fold-in objective.
  EXPECT_LT(r.trace.back().l_rho, r.trace.front().l_rho);

  // Determinism in the seed.
  const auto r2 = fold_in(trained.state.v, m_new, hp);
  EXPECT_EQ((r.u - r2.u).cwiseAbs().maxCoeff(), 0.0);
}

TEST(FoldIn, ValidatesShapes) {
  HyperParams hp;
  hp.d = 4;
  const auto m = synthetic::zipf_matrix(5, 6, 1, 3, 1.0, 83);
  EXPECT_THROW(fold_in(FactorMatrix::Zero(7, 4), m, hp),
               std::invalid_argument);
  EXPECT_THROW(fold_in(FactorMatrix::Zero(6, 3), m, hp),
               std::invalid_argument);
}

TEST(TraceIo, CsvAndJsonRoundTrip) {
  const auto m = synthetic::zipf_matrix(20, 12, 2, 6, 1.0, 89);
  HyperParams hp;
  hp.d = 4;
  hp.lambda_f = 1.0;
  hp.rho = 50.0;
  hp.t_train = 3;
  const auto r = train_fiadmm(m, hp);

  TempDir dir;
  save_trace_csv(dir.file("trace.csv"), r.trace);
  std::ifstream in(dir.file("trace.csv"));
  std::string header;
  std::getline(in, header);
  EXPECT_EQ(header, "epoch,l_rho,dv,du,ds,dw,violation,loss,r_f");
  int data_rows = 0;
  for (std::string line; std::getline(in, line);) {
    if (!line.empty()) ++data_rows;
  }
  EXPECT_EQ(data_rows, static_cast<int>(r.trace.size()));

  const EpochTrace back = trace_from_json(trace_to_json(r.trace));
  ASSERT_EQ(back.size(), r.trace.size());
  for (std::size_t e = 0; e < back.size(); ++e) {
    EXPECT_EQ(back[e].epoch, r.trace[e].epoch);
    EXPECT_EQ(back[e].l_rho, r.trace[e].l_rho);
    EXPECT_EQ(back[e].violation, r.trace[e].violation);
  }
}

TEST(CheckpointIo, RoundTripsAdmmState) {
  const auto m = synthetic::zipf_matrix(18, 10, 2, 6, 1.0, 97);
  HyperParams hp;
  hp.d = 4;
  hp.lambda_f = 0.8;
  hp.rho = 40.0;
  hp.t_train = 2;
  const auto r = train_fiadmm(m, hp);

  TempDir dir;
  Checkpoint ck;
  ck.solver = "fiadmm";
  ck.hp = hp;
  ck.u = r.state.u;
  ck.v = r.state.v;
  ck.s = r.state.s;
  ck.w = r.state.w;
  ck.trace = r.trace;
  save_checkpoint(dir.path().string(), ck);
  const Checkpoint back = load_checkpoint(dir.path().string());
  EXPECT_EQ(back.solver, "fiadmm");
  EXPECT_EQ(back.hp.d, hp.d);
  EXPECT_EQ(back.hp.lambda_f, hp.lambda_f);
  EXPECT_EQ((back.u - r.state.u).cwiseAbs().maxCoeff(), 0.0);
  EXPECT_EQ((back.v - r.state.v).cwiseAbs().maxCoeff(), 0.0);
  EXPECT_EQ((back.s - r.state.s).cwiseAbs().maxCoeff(), 0.0);
  EXPECT_EQ((back.w - r.state.w).cwiseAbs().maxCoeff(), 0.0);
  ASSERT_EQ(back.trace.size(), r.trace.size());
  EXPECT_EQ(back.trace.back().l_rho, r.trace.back().l_rho);
}

}  // namespace
}  // namespace fairmf
