#include <gtest/gtest.h>

#include <cmath>
#include <limits>
#include <vector>

#include "support.hpp"

using autosgp::LbfgsConfig;
using autosgp::minimize;
using autosgp::Termination;

TEST(Lbfgs, ConvexQuadratic) {
  Eigen::Vector3d c(1, 2, 3);
  auto f = [&](const Eigen::VectorXd& x, Eigen::VectorXd& g) {
    g = x - c;
    return 0.5 * g.squaredNorm();
  };
  const auto res = minimize(f, Eigen::VectorXd::Zero(3));
  EXPECT_EQ(res.termination, Termination::GradTol);
  EXPECT_LT((res.x_final - c).norm(), 1e-8);
  EXPECT_LE(res.iterations, 10);
  EXPECT_EQ(res.restarts_used, 0);
}

TEST(Lbfgs, IllConditionedQuadratic) {
  Eigen::VectorXd d(4);
  d << 1.0, 10.0, 100.0, 1000.0;
  auto f = [&](const Eigen::VectorXd& x, Eigen::VectorXd& g) {
    g = d.cwiseProduct(x - Eigen::VectorXd::Ones(4));
    return 0.5 * (x - Eigen::VectorXd::Ones(4)).dot(g);
  };
  const auto res = minimize(f, Eigen::VectorXd::Zero(4));
  EXPECT_EQ(res.termination, Termination::GradTol);
  EXPECT_LT((res.x_final - Eigen::VectorXd::Ones(4)).norm(), 1e-6);
}

TEST(Lbfgs, Rosenbrock) {
  auto f = [](const Eigen::VectorXd& x, Eigen::VectorXd& g) {
    const double a = 1.0 - x[0], b = x[1] - x[0] * x[0];
    g.resize(2);
    g[0] = -2.0 * a - 400.0 * x[0] * b;
    g[1] = 200.0 * b;
    return a * a + 100.0 * b * b;
  };
  LbfgsConfig cfg;
  cfg.max_iterations = 200;
  const auto res = minimize(f, Eigen::Vector2d(-1.2, 1.0), cfg);
  EXPECT_LT(res.f_final, 1e-8);
  EXPECT_LT((res.x_final - Eigen::Vector2d(1.0, 1.0)).norm(), 1e-3);
}

TEST(Lbfgs, RecoversFromNaNRegion) {
  auto f = [](const Eigen::VectorXd& x, Eigen::VectorXd& g) {
    if (x.norm() > 3.0) return std::numeric_limits<double>::quiet_NaN();
    g = x;
    return 0.5 * x.squaredNorm();
  };
  const Eigen::VectorXd x0 = Eigen::Vector2d(2.9, 0.0);
  const auto res = minimize(f, x0);
  EXPECT_TRUE(res.termination == Termination::GradTol || res.termination == Termination::MaxIters);
  EXPECT_TRUE(std::isfinite(res.f_final));
  EXPECT_LE(res.f_final, 0.5 * 2.9 * 2.9);
  EXPECT_GE(res.restarts_used, 0);
}

TEST(Lbfgs, ExhaustsRestarts) {
  // Every step away from the start is non-finite.
  Eigen::VectorXd start = Eigen::VectorXd::Constant(1, 1.0);
  auto f = [&](const Eigen::VectorXd& x, Eigen::VectorXd& g) {
    g = Eigen::VectorXd::Constant(1, 1.0);
    return x == start ? 1.0 : std::numeric_limits<double>::infinity();
  };
  LbfgsConfig cfg;
  cfg.max_restarts = 3;
  const auto res = minimize(f, start, cfg);
  EXPECT_EQ(res.termination, Termination::RestartsExhausted);
  EXPECT_EQ(res.restarts_used, 3);
  EXPECT_EQ(res.x_final, start);
  EXPECT_EQ(res.f_final, 1.0);
}

TEST(Lbfgs, InvalidStart) {
  auto f = [](const Eigen::VectorXd&, Eigen::VectorXd& g) {
    g = Eigen::VectorXd::Zero(1);
    return std::numeric_limits<double>::quiet_NaN();
  };
  EXPECT_THROW(minimize(f, Eigen::VectorXd::Zero(1)), autosgp::InvalidStart);
}

TEST(Lbfgs, MonotoneAndDeterministic) {
  auto f = [](const Eigen::VectorXd& x, Eigen::VectorXd& g) {
    g.resize(2);
    const double v = std::pow(x[0] - 0.3, 4) + std::pow(x[1] + 0.7, 2) + 0.5 * x[0] * x[1];
    g[0] = 4 * std::pow(x[0] - 0.3, 3) + 0.5 * x[1];
    g[1] = 2 * (x[1] + 0.7) + 0.5 * x[0];
    return v;
  };
  LbfgsConfig cfg;
  std::vector<double> finals;
  for (int iters = 1; iters <= 12; ++iters) {
    cfg.max_iterations = iters;
    finals.push_back(minimize(f, Eigen::Vector2d(2.0, 2.0), cfg).f_final);
  }
  for (std::size_t i = 1; i < finals.size(); ++i) EXPECT_LE(finals[i], finals[i - 1]);
  cfg.max_iterations = 100;
  const auto a = minimize(f, Eigen::Vector2d(2.0, 2.0), cfg);
  const auto b = minimize(f, Eigen::Vector2d(2.0, 2.0), cfg);
  EXPECT_EQ(a.x_final, b.x_final);
  EXPECT_EQ(a.iterations, b.iterations);
  EXPECT_EQ(a.evaluations, b.evaluations);
}

TEST(Lbfgs, FunctionToleranceStopsFlatProgress) {
  auto f = [](const Eigen::VectorXd& x, Eigen::VectorXd& g) {
    g = 1e-3 * x.array().sinh().matrix();
    return 1e-3 * (x.array().cosh().sum());
  };
  LbfgsConfig cfg;
  cfg.grad_tol = 1e-14;
  cfg.f_rel_tol = 1e-6;
  const auto res = minimize(f, Eigen::VectorXd::Constant(2, 1.0), cfg);
  EXPECT_EQ(res.termination, Termination::FunctionTol);
}

TEST(Lbfgs, ConfigValidation) {
  auto f = [](const Eigen::VectorXd& x, Eigen::VectorXd& g) {
    g = x;
    return 0.5 * x.squaredNorm();
  };
  LbfgsConfig cfg;
  cfg.c1 = 0.95;
  EXPECT_THROW(minimize(f, Eigen::VectorXd::Ones(1), cfg), std::invalid_argument);
  cfg = {};
  cfg.memory_pairs = 0;
  EXPECT_THROW(minimize(f, Eigen::VectorXd::Ones(1), cfg), std::invalid_argument);
}
