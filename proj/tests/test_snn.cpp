#include <gtest/gtest.h>

#include <cmath>

#include "ip2rsnn/snn.hpp"

using namespace ip2rsnn;

namespace {

NetworkConfig quiet(std::size_t n, std::size_t dendrites = 0) {
  NetworkConfig c;
  c.n_neurons = n;
  c.n_dendrites = dendrites;
  c.noise_enabled = false;
  return c;
}

// Point network with dense weights.
NetworkWeights point_weights(const Mat& w_in, const Mat& w_rec, const Mat& w_out) {
  NetworkWeights w;
  w.w_in = {w_in};
  w.w_rec = {w_rec};
  w.w_out = w_out;
  w.in_mask = {Mat::Ones(w_in.rows(), w_in.cols())};
  w.rec_mask = {Mat::Ones(w_rec.rows(), w_rec.cols())};
  return w;
}

IntrinsicProperties props(std::size_t n, double tau_s, double theta, std::size_t nd = 0, double tau_d = 0.0) {
  IntrinsicProperties p;
  p.tau_d = Mat::Constant(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(nd), tau_d);
  p.tau_s = Vec::Constant(static_cast<Eigen::Index>(n), tau_s);
  p.theta = Vec::Constant(static_cast<Eigen::Index>(n), theta);
  return p;
}

Vec v1(double x) { return Vec::Constant(1, x); }

}  // namespace

TEST(InitState, ZeroFields) {
  const auto s = init_state(quiet(4, 2));
  EXPECT_TRUE(s.v.isZero());
  EXPECT_TRUE(s.v_d.isZero());
  EXPECT_EQ(s.v_d.cols(), 2);
  EXPECT_TRUE(s.noise.isZero());
  EXPECT_TRUE(s.spikes.isZero());
  EXPECT_TRUE(s.trace.isZero());
}

TEST(InitState, ResetPotential) {
  auto c = quiet(1);
  c.v_reset = -0.2;
  EXPECT_EQ(init_state(c).v[0], -0.2);
}

TEST(InitState, Deterministic) {
  const auto a = init_state(quiet(5, 2));
  const auto b = init_state(quiet(5, 2));
  EXPECT_EQ(a.v, b.v);
  EXPECT_EQ(a.v_d, b.v_d);
}

TEST(Noise, HandValue) {
  NetworkConfig c;
  EXPECT_NEAR(noise_step(v1(0.2), v1(1.0), c)[0], 0.15, 1e-15);
}

TEST(Noise, ZeroAmplitudeDecays) {
  NetworkConfig c;
  c.a_noise = 0.0;
  EXPECT_EQ(noise_step(v1(0.7), v1(3.0), c)[0], 0.5 * 0.7);
}

TEST(Noise, ShapeMismatchThrows) {
  NetworkConfig c;
  EXPECT_THROW(noise_step(Vec::Zero(2), Vec::Zero(3), c), ShapeError);
}

TEST(Dendrite, HoldWhenDecayIsOne) {
  const auto c = quiet(1, 1);
  const auto w = point_weights(Mat::Constant(1, 1, 5.0), Mat::Zero(1, 1), Mat::Ones(1, 1));
  const Mat vd = Mat::Constant(1, 1, 0.3);
  EXPECT_EQ(dendrite_step(vd, v1(1.0), v1(0.0), w, props(1, 0.5, 1.0, 1, 1.0), c)(0, 0), 0.3);
}

TEST(Dendrite, ZeroDrive) {
  const auto c = quiet(1, 1);
  const auto w = point_weights(Mat::Constant(1, 1, 5.0), Mat::Constant(1, 1, 2.0), Mat::Ones(1, 1));
  EXPECT_EQ(dendrite_step(Mat::Zero(1, 1), v1(0.0), v1(0.0), w, props(1, 0.5, 1.0, 1, 0.0), c)(0, 0), 0.0);
}

TEST(Dendrite, HandValue) {
  const auto c = quiet(1, 1);
  // branch input = 1 * 2 = 2
  const auto w = point_weights(Mat::Constant(1, 1, 1.0), Mat::Zero(1, 1), Mat::Ones(1, 1));
  EXPECT_DOUBLE_EQ(dendrite_step(Mat::Ones(1, 1), v1(2.0), v1(0.0), w, props(1, 0.5, 1.0, 1, 0.5), c)(0, 0), 1.5);
}

TEST(Soma, PureHold) {
  EXPECT_EQ(soma_step(v1(0.37), v1(9.0), v1(0.0), props(1, 1.0, 1.0), quiet(1))[0], 0.37);
}

TEST(Soma, Memoryless) {
  EXPECT_EQ(soma_step(v1(0.37), v1(0.8), v1(0.0), props(1, 0.0, 1.0), quiet(1))[0], 0.8);
}

TEST(Soma, HandValueNoiseOutside) {
  EXPECT_DOUBLE_EQ(soma_step(v1(0.4), v1(1.0), v1(0.1), props(1, 0.5, 1.0), quiet(1))[0], 0.8);
}

TEST(Soma, NoiseInsideIsScaled) {
  auto c = quiet(1);
  c.noise_placement = NoisePlacement::inside;
  EXPECT_DOUBLE_EQ(soma_step(v1(0.4), v1(1.0), v1(0.1), props(1, 0.5, 1.0), c)[0], 0.2 + 0.5 * 1.1);
}

TEST(Spike, AboveThreshold) {
  const auto [s, v] = spike_and_reset(v1(0.6), props(1, 0.5, 0.5), quiet(1));
  EXPECT_EQ(s[0], 1.0);
  EXPECT_EQ(v[0], 0.0);
}

TEST(Spike, ThresholdIsInclusive) {
  const auto [s, v] = spike_and_reset(v1(0.5), props(1, 0.5, 0.5), quiet(1));
  EXPECT_EQ(s[0], 1.0);
  EXPECT_EQ(v[0], 0.0);
}

TEST(Spike, SubthresholdUnchanged) {
  const auto [s, v] = spike_and_reset(v1(0.49), props(1, 0.5, 0.5), quiet(1));
  EXPECT_EQ(s[0], 0.0);
  EXPECT_EQ(v[0], 0.49);
}

TEST(Spike, SmoothModeSoftReset) {
  const auto [s, v] = spike_and_reset(v1(0.5), props(1, 0.5, 0.5), quiet(1), DifferentiationMode::smooth());
  EXPECT_DOUBLE_EQ(s[0], 0.5);
  EXPECT_DOUBLE_EQ(v[0], 0.25);
}

TEST(Trace, HandValue) {
  NetworkConfig c;
  EXPECT_DOUBLE_EQ(trace_step(v1(0.0), v1(1.0), c)[0], 0.99);
}

TEST(Trace, DecayWithoutSpike) {
  NetworkConfig c;
  EXPECT_DOUBLE_EQ(trace_step(v1(0.8), v1(0.0), c)[0], 0.01 * 0.8);
}

TEST(Trace, FixedPoint) {
  NetworkConfig c;
  EXPECT_DOUBLE_EQ(trace_step(v1(1.0), v1(1.0), c)[0], 1.0);
}

TEST(Readout, Cases) {
  auto w = point_weights(Mat::Zero(2, 1), Mat::Zero(2, 2), Mat::Identity(2, 2));
  EXPECT_TRUE(readout(Vec::Zero(2), w).isZero());
  const Vec t = (Vec(2) << 0.3, -0.7).finished();
  EXPECT_EQ(readout(t, w), t);
  w.w_out = (Mat(1, 2) << 1.0, 2.0).finished();
  EXPECT_DOUBLE_EQ(readout((Vec(2) << 0.5, 0.25).finished(), w)[0], 1.0);
}

TEST(Readout, ShapeMismatchThrows) {
  const auto w = point_weights(Mat::Zero(2, 1), Mat::Zero(2, 2), Mat::Identity(2, 2));
  EXPECT_THROW(readout(Vec::Zero(3), w), ShapeError);
}

TEST(Forward, DeadNetwork) {
  const auto c = quiet(3);
  const auto w = point_weights(Mat::Zero(3, 2), Mat::Zero(3, 3), Mat::Ones(2, 3));
  const auto rec = forward_trial(w, props(3, 0.9, 1.0), c, Mat::Ones(20, 2));
  EXPECT_TRUE(rec.spikes.isZero());
  EXPECT_TRUE(rec.y.isZero());
}

TEST(Forward, SameSeedBitIdentical) {
  NetworkConfig c;
  c.n_neurons = 6;
  const auto w = init_weights(c, 3, 2, 5, {3.0, 1.0, 1.0});
  IntrinsicProperties p = props(6, 0.9, 0.5, 2, 0.8);
  ForwardOptions o;
  o.noise_seed = 99;
  const Mat x = Mat::Ones(40, 3);
  const auto a = forward_trial(w, p, c, x, o);
  const auto b = forward_trial(w, p, c, x, o);
  EXPECT_EQ(a.v, b.v);
  EXPECT_EQ(a.y, b.y);
  EXPECT_EQ(a.noise, b.noise);
  EXPECT_FALSE(a.noise.isZero());
  o.noise_seed = 100;
  EXPECT_NE(forward_trial(w, p, c, x, o).noise, a.noise);
}

// tau_s = 0, theta = 0.5, drive 1: the soma crosses threshold every step; the
// trace picks the spike train up one step later.
TEST(Forward, SingleNeuronConstantDrive) {
  const auto c = quiet(1);
  const auto w = point_weights(Mat::Ones(1, 1), Mat::Zero(1, 1), Mat::Ones(1, 1));
  const auto rec = forward_trial(w, props(1, 0.0, 0.5), c, Mat::Ones(6, 1));
  for (int t = 0; t < 6; ++t) EXPECT_EQ(rec.spikes(t, 0), 1.0) << t;
  EXPECT_EQ(rec.trace(0, 0), 0.0);
  double tr = 0.0;
  for (int t = 1; t < 6; ++t) {
    tr = 0.01 * tr + 0.99;
    EXPECT_DOUBLE_EQ(rec.trace(t, 0), tr);
  }
}

TEST(Forward, SilencedNeuronKeepsIntegrating) {
  const auto c = quiet(2);
  const auto w = point_weights(Mat::Ones(2, 1), Mat::Zero(2, 2), Mat::Ones(1, 2));
  ForwardOptions o;
  o.silenced = (Vec(2) << 1.0, 0.0).finished();
  const auto rec = forward_trial(w, props(2, 0.0, 0.5), c, Mat::Ones(5, 1), o);
  EXPECT_TRUE(rec.spikes.col(0).isZero());
  EXPECT_TRUE(rec.trace.col(0).isZero());
  EXPECT_EQ(rec.spikes_raw.col(0), rec.spikes_raw.col(1));
  EXPECT_EQ(rec.v_pre.col(0), rec.v_pre.col(1));
}

TEST(Forward, DendriticSumsBranches) {
  auto c = quiet(1, 2);
  NetworkWeights w;
  w.w_in = {Mat::Constant(1, 2, 0.0), Mat::Constant(1, 2, 0.0)};
  w.w_in[0](0, 0) = 1.0;
  w.w_in[1](0, 1) = 2.0;
  w.in_mask = {(Mat(1, 2) << 1, 0).finished(), (Mat(1, 2) << 0, 1).finished()};
  w.w_rec = {Mat::Zero(1, 1), Mat::Zero(1, 1)};
  w.rec_mask = {Mat::Ones(1, 1), Mat::Zero(1, 1)};
  w.w_out = Mat::Ones(1, 1);
  auto p = props(1, 0.0, 100.0, 2, 0.5);
  const auto rec = forward_trial(w, p, c, Mat::Ones(2, 2));
  // step 0: branches 0.5, 1.0 -> drive 1.5; step 1: 0.75, 1.5 -> 2.25
  EXPECT_DOUBLE_EQ(rec.drive(0, 0), 1.5);
  EXPECT_DOUBLE_EQ(rec.drive(1, 0), 2.25);
}

TEST(Weights, BranchOwnershipIsExclusive) {
  NetworkConfig c;
  c.n_neurons = 10;
  c.n_dendrites = 3;
  const auto w = init_weights(c, 4, 2, 1);
  EXPECT_NO_THROW(w.validate());
  Mat cover = Mat::Zero(10, 4);
  for (const auto& m : w.in_mask) cover += m;
  EXPECT_TRUE((cover.array() == 1.0).all());
  EXPECT_TRUE(w.dense_rec().diagonal().isZero());
  auto bad = w;
  bad.in_mask[0](0, 0) = 1.0;
  bad.in_mask[1](0, 0) = 1.0;
  bad.in_mask[2](0, 0) = 0.0;
  EXPECT_THROW(bad.validate(), std::invalid_argument);
}

TEST(Properties, RejectsOutOfRangeDecay) {
  auto p = props(2, 0.5, 1.0);
  p.tau_s[1] = 1.2;
  EXPECT_THROW(p.validate(), std::invalid_argument);
}
