#include <gtest/gtest.h>

#include "ip2rsnn/tasks.hpp"

using namespace ip2rsnn;

namespace {
const PeriodSchedule kSch = PeriodSchedule::from_dt(10.0);
}

TEST(Schedule, FromDt) {
  EXPECT_EQ(kSch.stimulus_steps, 50u);
  EXPECT_EQ(kSch.delay_steps, 100u);
  EXPECT_EQ(kSch.response_steps, 50u);
  EXPECT_EQ(PeriodSchedule::from_dt(20.0).total(), 100u);
  EXPECT_THROW(PeriodSchedule::from_dt(300.0), std::invalid_argument);
  EXPECT_THROW(PeriodSchedule::from_dt(0.0), std::invalid_argument);
  EXPECT_EQ(kSch.period_of(49), PeriodSchedule::Period::stimulus);
  EXPECT_EQ(kSch.period_of(50), PeriodSchedule::Period::delay);
  EXPECT_EQ(kSch.period_of(150), PeriodSchedule::Period::response);
}

TEST(Dms, ShapesAndFixation) {
  const auto task = generate_task(TaskFamily::dms, 0, kSch, 1);
  ASSERT_EQ(task.trials.size(), 2u);
  EXPECT_EQ(task.loss, LossKind::ce);
  for (const auto& tr : task.trials) {
    EXPECT_EQ(tr.input.rows(), 200);
    EXPECT_EQ(tr.input.cols(), 11);
    EXPECT_EQ(tr.target.rows(), 200);
    EXPECT_EQ(tr.target.cols(), 3);
    for (int t = 0; t < 200; ++t) {
      EXPECT_EQ(tr.input(t, 0), t < 150 ? 1.0 : 0.0);
      EXPECT_EQ(tr.target(t, 0), t < 150 ? 1.0 : 0.0);
    }
    // stimulus only during the stimulus period
    EXPECT_TRUE(tr.input.block(50, 1, 150, 10).isZero());
    EXPECT_FALSE(tr.input.block(0, 1, 50, 10).isZero());
    // one-hot label in the response period
    EXPECT_EQ(tr.target(160, 1 + tr.label), 1.0);
    EXPECT_EQ(tr.target.row(160).tail(2).sum(), 1.0);
    EXPECT_TRUE(tr.target.block(0, 1, 150, 2).isZero());
  }
  EXPECT_NE(task.trials[0].label, task.trials[1].label);
}

TEST(CdDms, ContextChannelAndCueSwap) {
  const auto task = generate_task(TaskFamily::cd_dms, 3, kSch, 2);
  ASSERT_EQ(task.trials.size(), 4u);
  for (const auto& tr : task.trials) {
    EXPECT_EQ(tr.input.cols(), 12);
    EXPECT_EQ(tr.input(10, 11), static_cast<double>(tr.cue));
    EXPECT_EQ(tr.input(60, 11), 0.0);
  }
  for (const auto& a : task.trials)
    for (const auto& b : task.trials)
      if (a.prototype == b.prototype && a.cue != b.cue) {
        EXPECT_EQ(a.target(170, 1), b.target(170, 2));
        EXPECT_EQ(a.target(170, 2), b.target(170, 1));
        EXPECT_EQ(a.input.leftCols(11), b.input.leftCols(11));
      }
}

TEST(GngDr, GoAndNoGo) {
  for (auto fam : {TaskFamily::gng_dr_2, TaskFamily::gng_dr_4}) {
    const auto d = fam == TaskFamily::gng_dr_2 ? 2 : 4;
    const auto task = generate_task(fam, 5, kSch, 3);
    EXPECT_EQ(task.loss, LossKind::mse);
    ASSERT_EQ(task.trials.size(), 2u);
    for (const auto& tr : task.trials) {
      EXPECT_EQ(tr.input.rows(), 200);
      EXPECT_EQ(tr.input.cols(), 1 + d);
      EXPECT_EQ(tr.target.cols(), 1 + d);
      const Mat resp = tr.target.block(150, 1, 50, d);
      if (tr.go) {
        for (int t = 0; t < 50; ++t) EXPECT_EQ(resp.row(t), tr.input.block(0, 1, 1, d));
      } else {
        EXPECT_TRUE(resp.isZero());
      }
    }
    EXPECT_TRUE(task.trials[0].go != task.trials[1].go);
  }
}

TEST(Sampler, DeterministicAndInRange) {
  const Vec a = stimulus_sampler(TaskFamily::dms, 7, 0, 99, 10);
  EXPECT_EQ(a, stimulus_sampler(TaskFamily::dms, 7, 0, 99, 10));
  EXPECT_NE(a, stimulus_sampler(TaskFamily::dms, 8, 0, 99, 10));
  EXPECT_NE(a, stimulus_sampler(TaskFamily::dms, 7, 1, 99, 10));
  EXPECT_NE(a, stimulus_sampler(TaskFamily::dms, 7, 0, 98, 10));
  for (std::size_t i = 0; i < 50; ++i) {
    const Vec v = stimulus_sampler(TaskFamily::gng_dr_4, i, i % 2, 5, 4);
    EXPECT_TRUE((v.array() >= 0.0).all() && (v.array() <= 1.0).all());
  }
}

TEST(Generate, Deterministic) {
  const auto a = generate_task(TaskFamily::cd_dms, 4, kSch, 11);
  const auto b = generate_task(TaskFamily::cd_dms, 4, kSch, 11);
  for (std::size_t k = 0; k < a.trials.size(); ++k) {
    EXPECT_EQ(a.trials[k].input, b.trials[k].input);
    EXPECT_EQ(a.trials[k].target, b.trials[k].target);
  }
}
