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

#include "fairmf/factor_model.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <vector>

#include <gtest/gtest.h>

#include "support/oracles.hpp"
#include "support/synthetic.hpp"
#include "support/tempfile.hpp"

namespace fairmf {
namespace {

using testing::TempDir;

TEST(InitFactors, MatchesRequestedMoments) {
  const int n = 2000, d = 16;
  const Real sigma = 0.1;
  const auto f = init_factors(n, d, sigma, 7);
  const Real mean = f.mean();
  const Real var = (f.array() - mean).square().sum() / (n * d - 1);
  const Real want_sd = sigma / std::sqrt(static_cast<Real>(d));
  // 5-sigma bands on the sample moments of n*d draws.
  EXPECT_NEAR(mean, 0.0, 5.0 * want_sd / std::sqrt(Real(n * d)));
  EXPECT_NEAR(std::sqrt(var), want_sd, 0.05 * want_sd);
}

TEST(InitFactors, DeterministicInSeed) {
  const auto a = init_factors(50, 8, 0.1, 3);
  const auto b = init_factors(50, 8, 0.1, 3);
  const auto c = init_factors(50, 8, 0.1, 4);
  EXPECT_EQ((a - b).cwiseAbs().maxCoeff(), 0.0);
  EXPECT_GT((a - c).cwiseAbs().maxCoeff(), 0.0);
}

TEST(InitFactors, RejectsBadArguments) {
  EXPECT_THROW(init_factors(-1, 4, 0.1, 0), std::invalid_argument);
  EXPECT_THROW(init_factors(4, 0, 0.1, 0), std::invalid_argument);
  EXPECT_THROW(init_factors(4, 4, 0.0, 0), std::invalid_argument);
}

TEST(Gramian, MatchesDenseProduct) {
  const auto f = init_factors(777, 12, 0.3, 1);  // not a chunk multiple
  const Matrix want = f.transpose() * f;
  const Matrix got = gramian(f);
  EXPECT_LT((got - want).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(Gramian, IdenticalAcrossThreadCounts) {
  const auto f = init_factors(3000, 8, 0.2, 5);
  ExecPolicy one, four;
  one.threads = 1;
  four.threads = 4;
  const Matrix a = gramian(f, one);
  const Matrix b = gramian(f, four);
  // Fixed chunking joined in chunk order: bitwise equal at any thread count.
  EXPECT_EQ((a - b).cwiseAbs().maxCoeff(), 0.0);

  ExecPolicy det;
  det.deterministic = true;
  const Matrix c = gramian(f, det);
  EXPECT_LT((a - c).cwiseAbs().maxCoeff(), 1e-10 * a.cwiseAbs().maxCoeff());
}

TEST(MeanUserVector, MatchesColumnMeans) {
  const auto f = init_factors(511, 9, 0.4, 2);
  const Vector want = f.colwise().mean().transpose();
  const Vector got = mean_user_vector(f);
  EXPECT_LT((got - want).cwiseAbs().maxCoeff(), 1e-13);
  EXPECT_THROW(mean_user_vector(FactorMatrix(0, 4)), std::invalid_argument);
}

TEST(FrequencyWeights, FollowsTheFormula) {
  const auto m = synthetic::zipf_matrix(30, 20, 2, 8, 1.0, 4);
  const Real lambda2 = 3e-3, eta = 0.7, alpha0 = 0.2;
  const auto w = frequency_weights(m, lambda2, eta, alpha0);
  ASSERT_EQ(w.lambda_u.size(), m.n_users);
  ASSERT_EQ(w.lambda_v.size(), m.n_items);
  for (int u = 0; u < m.n_users; ++u) {
    const Real want =
        lambda2 * std::pow(m.row_degree(u) + alpha0 * m.n_items, eta);
    EXPECT_DOUBLE_EQ(w.lambda_u[u], want);
  }
  for (int j = 0; j < m.n_items; ++j) {
    const Real want =
        lambda2 * std::pow(m.col_degree(j) + alpha0 * m.n_users, eta);
    EXPECT_DOUBLE_EQ(w.lambda_v[j], want);
  }
}

TEST(FrequencyWeights, EtaZeroIsUniform) {
  const auto m = synthetic::zipf_matrix(10, 8, 1, 5, 1.0, 6);
  const auto w = frequency_weights(m, 0.01, 0.0, 0.3);
  EXPECT_DOUBLE_EQ(w.lambda_u.minCoeff(), 0.01);
  EXPECT_DOUBLE_EQ(w.lambda_u.maxCoeff(), 0.01);
  EXPECT_DOUBLE_EQ(w.lambda_v.maxCoeff(), 0.01);
  EXPECT_THROW(frequency_weights(m, 0.0, 1.0, 0.1), std::invalid_argument);
}

// Reference route: full sort of all eligible ids under the same total order.
std::vector<int> brute_topk(const Vector& u, const FactorMatrix& v, int k,
                            const std::vector<int>& exclude) {
  const Vector scores = v * u;
  std::vector<int> ids;
  for (int j = 0; j < v.rows(); ++j) {
    if (!std::count(exclude.begin(), exclude.end(), j)) ids.push_back(j);
  }
  std::sort(ids.begin(), ids.end(), [&](int a, int b) {
    if (scores[a] != scores[b]) return scores[a] > scores[b];
    return a < b;
  });
  if (static_cast<int>(ids.size()) > k) ids.resize(k);
  return ids;
}

TEST(ScoreTopk, MatchesFullSort) {
  const auto v = init_factors(40, 6, 1.0, 8);
  const Vector u = init_factors(1, 6, 1.0, 9).row(0).transpose();
  const std::vector<int> exclude = {3, 7, 20, 39};
  const auto got = score_topk(u, v, 10, exclude);
  const auto want = brute_topk(u, v, 10, exclude);
  EXPECT_EQ(got, want);
  for (int j : exclude) {
    EXPECT_EQ(std::count(got.begin(), got.end(), j), 0);
  }
}

TEST(ScoreTopk, BreaksTiesByLowestId) {
  // All item rows identical: every score ties, so ranking is by id.
  FactorMatrix v(5, 3);
  for (int j = 0; j < 5; ++j) v.row(j) << 1.0, 2.0, 3.0;
  const Vector u = Vector::Ones(3);
  const std::vector<int> exclude = {1};
  const auto got = score_topk(u, v, 3, exclude);
  EXPECT_EQ(got, (std::vector<int>{0, 2, 3}));
}

TEST(ScoreTopk, TruncatesToEligibleCount) {
  const auto v = init_factors(4, 3, 1.0, 1);
  const Vector u = Vector::Ones(3);
  const std::vector<int> exclude = {0, 2};
  const auto got = score_topk(u, v, 10, exclude);
  EXPECT_EQ(got.size(), 2u);
  EXPECT_THROW(score_topk(u, v, 0, {}), std::invalid_argument);
  EXPECT_THROW(score_topk(Vector::Ones(2), v, 1, {}), std::invalid_argument);
}

TEST(FactorIo, RoundTripsBitExactly) {
  TempDir dir;
  const auto f = init_factors(23, 7, 0.5, 11);
  const auto path = dir.file("f.fmf1");
  save_factors(path, f);
  const auto back = load_factors(path);
  ASSERT_EQ(back.rows(), f.rows());
  ASSERT_EQ(back.cols(), f.cols());
  EXPECT_EQ((back - f).cwiseAbs().maxCoeff(), 0.0);
}

TEST(FactorIo, RejectsCorruptFiles) {
  TempDir dir;
  const auto f = init_factors(6, 4, 0.5, 1);
  const auto path = dir.file("f.fmf1");
  save_factors(path, f);
  std::ifstream in(path, std::ios::binary);
  std::string bytes((std::istreambuf_iterator<char>(in)),
                    std::istreambuf_iterator<char>());
  dir.write("trunc.fmf1", bytes.substr(0, bytes.size() - 5));
  std::string magic = bytes;
  magic[1] = 'X';
  dir.write("magic.fmf1", magic);
  EXPECT_THROW(load_factors(dir.file("trunc.fmf1")), std::runtime_error);
  EXPECT_THROW(load_factors(dir.file("magic.fmf1")), std::runtime_error);
  EXPECT_THROW(load_factors(dir.file("absent.fmf1")), std::runtime_error);
}

}  // namespace
}  // namespace fairmf
