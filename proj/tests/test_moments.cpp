#include <gtest/gtest.h>

#include "hjrobust/moments.hpp"

using namespace hjrobust;

namespace {

ModelData panel_data(Index T, Index N, Index K, unsigned seed) {
  std::srand(seed);
  MatrixXd r = (MatrixXd::Random(T, N) * 0.05).array() + 1.01;
  MatrixXd g = MatrixXd::Random(T, K) * 0.04;
  return make_model_data(r, g);
}

}  // namespace

TEST(Moments, TwoPeriodHandExample) {
  MatrixXd r(2, 1);
  r << 1, 1;
  MatrixXd g(2, 1);
  g << -1, 1;
  const MomentSet m = compute_moments(r, augment(g));
  EXPECT_DOUBLE_EQ(m.Q_r(0, 0), 1.0);
  EXPECT_DOUBLE_EQ(m.q_GT(0, 0), 1.0);
  EXPECT_DOUBLE_EQ(m.q_GT(0, 1), 0.0);
}

TEST(Moments, ConstantReturns) {
  VectorXd c(3);
  c << 1.01, 0.99, 1.2;
  MatrixXd r = c.transpose().replicate(6, 1);
  const MomentSet m = compute_moments(r, augment(MatrixXd::Random(6, 2)));
  EXPECT_LT((m.q_GT.col(0) - c).norm(), 1e-14);
  EXPECT_LT((m.Q_r - c * c.transpose()).norm(), 1e-14);
}

TEST(Moments, MatchesLoopSum) {
  const ModelData d = panel_data(5, 3, 2, 1);
  const MomentSet m = compute_moments(d);
  MatrixXd q = MatrixXd::Zero(3, 3), qr = MatrixXd::Zero(3, 3), qg = MatrixXd::Zero(3, 3);
  for (Index t = 0; t < 5; ++t)
    for (Index i = 0; i < 3; ++i)
      for (Index j = 0; j < 3; ++j) {
        q(i, j) += d.returns(t, i) * d.G()(t, j) / 5.0;
        qr(i, j) += d.returns(t, i) * d.returns(t, j) / 5.0;
        qg(i, j) += d.G()(t, i) * d.G()(t, j) / 5.0;
      }
  EXPECT_LT((m.q_GT - q).cwiseAbs().maxCoeff(), 1e-12);
  EXPECT_LT((m.Q_r - qr).cwiseAbs().maxCoeff(), 1e-12);
  EXPECT_LT((m.Q_G - qg).cwiseAbs().maxCoeff(), 1e-12);
  EXPECT_LT((m.q_GT.col(0) - d.returns.colwise().mean().transpose()).norm(), 1e-14);
}

TEST(Moments, ZeroThetaGivesOnes) {
  const ModelData d = panel_data(30, 4, 2, 2);
  const PricingErrors e = pricing_errors(d, VectorXd::Zero(3));
  EXPECT_TRUE(e.mean_error.isApprox(VectorXd::Ones(4)));
}

TEST(Moments, ExactlyIdentifiedPricesExactly) {
  const ModelData d = panel_data(40, 3, 2, 3);
  const MomentSet m = compute_moments(d);
  const VectorXd theta = m.q_GT.lu().solve(VectorXd::Ones(3));
  EXPECT_LT(pricing_errors(d, theta).mean_error.cwiseAbs().maxCoeff(), 1e-10);
  EXPECT_LT(mean_pricing_error(m, theta).cwiseAbs().maxCoeff(), 1e-10);
}

TEST(Moments, MeanErrorIsColumnMeanAndMatchesMoments) {
  const ModelData d = panel_data(60, 5, 2, 4);
  const VectorXd theta = VectorXd::Random(3);
  const PricingErrors e = pricing_errors(d, theta);
  EXPECT_LT((e.mean_error - e.per_period.colwise().mean().transpose()).cwiseAbs().maxCoeff(), 1e-10);
  EXPECT_LT((e.mean_error - mean_pricing_error(compute_moments(d), theta)).cwiseAbs().maxCoeff(), 1e-10);
}

TEST(Moments, PricingErrorsAreAffineInTheta) {
  const ModelData d = panel_data(40, 4, 2, 5);
  const VectorXd a = VectorXd::Random(3), b = VectorXd::Random(3);
  const MatrixXd mix = pricing_errors(d, 0.3 * a + 0.7 * b).per_period;
  const MatrixXd lin = 0.3 * pricing_errors(d, a).per_period + 0.7 * pricing_errors(d, b).per_period;
  EXPECT_LT((mix - lin).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(Moments, ErrorCovarianceHandCases) {
  MatrixXd e(2, 1);
  e << 1, -1;
  EXPECT_DOUBLE_EQ(error_covariance(e)(0, 0), 1.0);
  VectorXd v(3);
  v << 0.5, -2, 1;
  EXPECT_LT((error_covariance(v.transpose().replicate(7, 1)) - v * v.transpose()).norm(), 1e-14);
}

TEST(Moments, ErrorCovarianceMatchesLoop) {
  const MatrixXd e = MatrixXd::Random(20, 4);
  const MatrixXd S = error_covariance(e);
  MatrixXd loop = MatrixXd::Zero(4, 4);
  for (Index t = 0; t < 20; ++t) loop += e.row(t).transpose() * e.row(t) / 20.0;
  EXPECT_LT((S - loop).cwiseAbs().maxCoeff(), 1e-12);
  EXPECT_EQ((S - S.transpose()).norm(), 0.0);
  EXPECT_GE(Eigen::SelfAdjointEigenSolver<MatrixXd>(S).eigenvalues().minCoeff(), -1e-12);
}

TEST(Moments, CubeMatchesDirectComputation) {
  const ModelData d = panel_data(80, 6, 3, 6);
  const ErrorMomentCube cube(d);
  for (int k = 0; k < 5; ++k) {
    const VectorXd theta = VectorXd::Random(4) * 20;
    const PricingErrors e = pricing_errors(d, theta);
    const MatrixXd S = error_covariance(e.per_period);
    EXPECT_LT((cube.covariance(theta) - S).cwiseAbs().maxCoeff(), 1e-9 * (1 + S.cwiseAbs().maxCoeff()));
    EXPECT_LT((cube.mean_error(theta) - e.mean_error).cwiseAbs().maxCoeff(), 1e-12);
    const double hj = e.mean_error.dot(compute_moments(d).Q_r.ldlt().solve(e.mean_error));
    EXPECT_NEAR(cube.hj_objective(theta), hj, 1e-9 * (1 + hj));
  }
}

TEST(Moments, PermutationEquivariance) {
  const ModelData d = panel_data(50, 4, 2, 7);
  const std::vector<Index> perm = {2, 0, 3, 1};
  const ModelData p = select_assets(d, perm);
  const MomentSet m = compute_moments(d), mp = compute_moments(p);
  for (Index i = 0; i < 4; ++i) {
    EXPECT_TRUE(mp.q_GT.row(i).isApprox(m.q_GT.row(perm[i])));
    for (Index j = 0; j < 4; ++j) EXPECT_DOUBLE_EQ(mp.Q_r(i, j), m.Q_r(perm[i], perm[j]));
  }
}

TEST(Moments, DimensionMismatchErrors) {
  const ModelData d = panel_data(10, 3, 1, 8);
  EXPECT_THROW(pricing_errors(d, VectorXd::Zero(3)), Error);
  EXPECT_THROW(make_model_data(MatrixXd::Ones(10, 2), MatrixXd::Ones(9, 1)), Error);
}
