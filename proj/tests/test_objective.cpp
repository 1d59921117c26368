#include <cmath>

#include <gtest/gtest.h>

#include "ip2rsnn/objective.hpp"

using namespace ip2rsnn;

namespace {
const PeriodSchedule kOne{1, 1, 1};
}

TEST(BaseLoss, MsePerfectAndHand) {
  Mat y(1, 2), t = Mat::Zero(1, 2);
  y << 1, 0;
  const PeriodSchedule one_step{1, 0, 0};
  EXPECT_DOUBLE_EQ(base_loss(y, t, LossKind::mse, one_step), 0.5);
  EXPECT_EQ(base_loss(t, t, LossKind::mse, one_step), 0.0);
}

TEST(BaseLoss, UniformLogitsGiveLn2) {
  // 3 steps: fixation correct throughout, uniform logits in the response step
  Mat y = Mat::Zero(3, 3), t = Mat::Zero(3, 3);
  y.col(0).head(2).setOnes();
  t.col(0).head(2).setOnes();
  t(2, 1) = 1.0;
  EXPECT_NEAR(base_loss(y, t, LossKind::ce, kOne), std::log(2.0), 1e-15);
}

TEST(BaseLoss, ShapeMismatchThrows) {
  EXPECT_ANY_THROW(base_loss(Mat::Zero(3, 3), Mat::Zero(3, 2), LossKind::mse, kOne));
}

TEST(Homeostatic, Examples) {
  EXPECT_EQ(homeostatic_loss(Mat::Zero(4, 3), {0.0}), 0.0);
  EXPECT_DOUBLE_EQ(homeostatic_loss(Mat::Ones(4, 3), {0.0}), 1.0);
  Mat h = Mat::Constant(5, 2, 0.2);
  EXPECT_NEAR(homeostatic_loss(h, {0.04}), 0.0, 1e-15);
  EXPECT_GE(homeostatic_loss(h, {0.5}), 0.0);
}

TEST(Regularizer, Examples) {
  Mat w(2, 2);
  w << 1, -1, 1, -1;
  EXPECT_EQ(weight_regularizer(Mat::Zero(3, 3)), 0.0);
  EXPECT_DOUBLE_EQ(weight_regularizer(w), 1.0);
  EXPECT_DOUBLE_EQ(weight_regularizer(Mat(3.0 * w)), 9.0);
}

TEST(TotalLoss, Examples) {
  const LossTerms unit{1, 1, 1, 1, 1};
  EXPECT_EQ(total_loss(unit, {0, 0, 0, 0}).total, 1.0);
  EXPECT_NEAR(total_loss(unit, {0.1, 0.2, 0.3, 0.4}).total, 2.0, 1e-15);
  EXPECT_NEAR(total_loss(unit, LossWeights{}).total, 1.0 + 0.0005 + 0.001 + 0.0001 + 0.1, 1e-15);
}

TEST(TotalLoss, AffineInEachTerm) {
  const LossWeights w;
  LossTerms t{0.3, 0.2, 0.7, 1.1, 0.9};
  const double a = total_loss(t, w).total;
  t.reg_rec += 1.0;
  EXPECT_NEAR(total_loss(t, w).total - a, w.lambda_rec, 1e-15);
}

TEST(HomeostaticTarget, Update) {
  EXPECT_EQ(HomeostaticTarget{}.sigma_h_sq, 0.0);
  const Mat h = Mat::Constant(3, 4, 0.2);
  const auto tg = update_homeostatic_target({}, std::span<const Mat>(&h, 1));
  EXPECT_NEAR(tg.sigma_h_sq, 0.04, 1e-15);
  EXPECT_EQ(update_homeostatic_target(tg, std::span<const Mat>(&h, 1)).sigma_h_sq, tg.sigma_h_sq);
}
