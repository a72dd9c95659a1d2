#include <gtest/gtest.h>

#include <cmath>
#include <vector>

#include "proxdist/radio.hpp"
#include "proxdist/rng.hpp"

using namespace proxdist;

namespace {

RadioParams lin(double tx, double n) {
  RadioParams p;
  p.tx_ref = tx;
  p.n_exponent = n;
  return p;
}

RadioParams friis(double p_t, double lambda) {
  RadioParams p;
  p.p_t = p_t;
  p.g_t = p.g_r = 0.0;
  p.sys_loss = 1.0;
  p.lambda_m = lambda;
  return p;
}

// Noiseless samples from the log-distance law.
std::vector<RadioSample> eq1_samples(double tx, double n, std::size_t count, std::uint64_t seed) {
  Rng rng(seed, 0);
  std::vector<RadioSample> out;
  for (std::size_t i = 0; i < count; ++i) {
    const double d = rng.uniform(0.5, 6.0);
    out.push_back({tx - 10.0 * n * std::log10(d), d});
  }
  return out;
}

}  // namespace

TEST(LinearApprox, Examples) {
  EXPECT_NEAR(linear_approx_distance(lin(-50, 2), -50), 1.0, 1e-9);
  EXPECT_NEAR(linear_approx_distance(lin(-40, 2), -60), 10.0, 1e-9);
  EXPECT_NEAR(linear_approx_distance(lin(-40, 3), -70), 10.0, 1e-9);
}

TEST(LinearApprox, StrictlyDecreasingInRssi) {
  Rng rng(31, 0);
  for (int i = 0; i < 200; ++i) {
    const auto p = lin(rng.uniform(-80, -20), rng.uniform(1, 6));
    double prev = linear_approx_distance(p, -120.0);
    for (double r = -119.5; r <= 0.0; r += 0.5) {
      const double d = linear_approx_distance(p, r);
      ASSERT_LT(d, prev);
      prev = d;
    }
  }
}

TEST(PathLoss, Examples) {
  RadioParams p;
  p.p_t = 0;
  EXPECT_NEAR(path_loss_attenuation(p, -41), 0.0, 1e-9);
  p.p_t = 12;
  EXPECT_NEAR(path_loss_attenuation(p, -60), 31.0, 1e-9);
  p.p_t = -10;
  EXPECT_NEAR(path_loss_attenuation(p, -31), -20.0, 1e-9);
}

TEST(Friis, Examples) {
  const double four_pi = 4.0 * std::acos(-1.0);
  EXPECT_NEAR(friis_received_power(friis(0, four_pi), 1.0), 0.0, 1e-9);
  const auto ble = friis(0, 0.12237);
  EXPECT_NEAR(friis_received_power(ble, 1.0), -40.23, 0.02);
  for (double d : {0.3, 1.0, 2.5, 7.0}) {
    EXPECT_NEAR(friis_received_power(ble, d) - friis_received_power(ble, 2 * d), 20 * std::log10(2.0), 1e-9);
  }
  EXPECT_THROW(friis_received_power(ble, 0.0), Error);
  EXPECT_THROW(friis_received_power(ble, -1.0), Error);
}

TEST(Friis, Inversion) {
  const auto ble = friis(0, 0.12237);
  for (double d : {0.5, 1.2, 4.5}) EXPECT_NEAR(friis_distance(ble, friis_received_power(ble, d)), d, 1e-9);
  EXPECT_NEAR(friis_distance(ble, friis_received_power(ble, 1.0)), 1.0, 1e-9);
  EXPECT_GT(friis_distance(ble, -70), friis_distance(ble, -60));
}

TEST(Friis, RoundTripOverRandomDraws) {
  Rng rng(32, 0);
  for (int i = 0; i < 1000; ++i) {
    RadioParams p;
    p.p_t = rng.uniform(-20, 20);
    p.g_t = rng.uniform(-5, 10);
    p.g_r = rng.uniform(-5, 10);
    p.lambda_m = rng.uniform(0.05, 0.5);
    p.sys_loss = rng.uniform(1, 10);
    const double d = rng.uniform(0.1, 20);
    EXPECT_NEAR(friis_distance(p, friis_received_power(p, d)), d, 1e-9 * std::max(1.0, d));
  }
}

TEST(FitParams, RecoversLinearExponent) {
  const auto data = eq1_samples(-45, 2, 500, 33);
  SearchSpace space;
  space.iterations = 2000;
  space.seed = 5;
  const auto fit = fit_params(data, RadioModel::LinearApprox, space);
  EXPECT_NEAR(fit.params.n_exponent, 2.0, 0.05);
  EXPECT_NEAR(fit.params.tx_ref, -45.0, 0.5);
  EXPECT_LE(fit.loss, 1e-3);
}

TEST(FitParams, OnePairOneIteration) {
  const std::vector<RadioSample> data = {{-60.0, 1.8}};
  SearchSpace space;
  space.iterations = 1;
  space.refine = false;
  space.seed = 9;
  const auto fit = fit_params(data, RadioModel::LinearApprox, space);
  // The only candidate is the first draw of stream (seed, 0).
  Rng rng(9, 0);
  const double tx = rng.uniform(space.tx_ref->low, space.tx_ref->high);
  const double n = rng.uniform(space.n_exponent->low, space.n_exponent->high);
  EXPECT_EQ(fit.params.tx_ref, tx);
  EXPECT_EQ(fit.params.n_exponent, n);
  EXPECT_DOUBLE_EQ(fit.loss, std::abs(1.8 - linear_approx_distance(fit.params, -60.0)));
}

TEST(FitParams, Deterministic) {
  const auto data = eq1_samples(-50, 2.5, 100, 34);
  SearchSpace space;
  space.iterations = 300;
  space.seed = 77;
  const auto a = fit_params(data, RadioModel::Friis, space, {}, 1);
  const auto b = fit_params(data, RadioModel::Friis, space, {}, 3);
  EXPECT_EQ(a.params, b.params);
  EXPECT_EQ(a.loss, b.loss);
  EXPECT_EQ(a.trace, b.trace);
}

TEST(FitParams, BestSoFarNonIncreasing) {
  const auto data = eq1_samples(-50, 2.5, 100, 35);
  SearchSpace space;
  space.refine = false;
  space.seed = 3;
  double prev = std::numeric_limits<double>::infinity();
  for (std::size_t it : {1, 5, 20, 100, 400}) {
    space.iterations = it;
    const auto fit = fit_params(data, RadioModel::LinearApprox, space);
    EXPECT_LE(fit.loss, prev);
    prev = fit.loss;
    for (std::size_t i = 1; i < fit.trace.size(); ++i) EXPECT_LE(fit.trace[i], fit.trace[i - 1]);
  }
}

TEST(FitParams, RefinementNeverWorsens) {
  const auto data = eq1_samples(-50, 2.5, 100, 36);
  SearchSpace space;
  space.iterations = 50;
  const auto fit = fit_params(data, RadioModel::Friis, space);
  EXPECT_LE(fit.loss, fit.sample_loss);
}

TEST(FitParams, Errors) {
  SearchSpace space;
  EXPECT_THROW(fit_params({}, RadioModel::LinearApprox, space), Error);
  const std::vector<RadioSample> data = {{-60.0, 1.8}};
  space.iterations = 0;
  EXPECT_THROW(fit_params(data, RadioModel::LinearApprox, space), Error);
  space.iterations = 10;
  space.n_exponent = Bounds{3, 3};
  EXPECT_THROW(fit_params(data, RadioModel::LinearApprox, space), Error);
}

TEST(RadioParams, Validate) {
  RadioParams p;
  EXPECT_NO_THROW(validate(p));
  p.n_exponent = 0;
  EXPECT_THROW(validate(p), Error);
  p = {};
  p.sys_loss = 0.5;
  EXPECT_THROW(validate(p), Error);
  p = {};
  p.lambda_m = 0;
  EXPECT_THROW(validate(p), Error);
}
