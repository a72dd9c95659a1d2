#pragma once

// Radio-propagation baselines: log-distance ("linear approximation") model,
// path-loss attenuation, and the Friis free-space equation, plus a seeded
// parameter search that minimises mean absolute distance error.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numbers>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "proxdist/error.hpp"
#include "proxdist/parallel.hpp"
#include "proxdist/rng.hpp"

namespace proxdist {

struct RadioParams {
  double tx_ref = -59.0;     // dBm measured at 1 m
  double n_exponent = 2.0;   // path-loss exponent
  double p_t = 0.0;          // transmit power, dBm
  double g_t = 0.0;          // dBi
  double g_r = 0.0;          // dBi
  double lambda_m = 0.1224;  // carrier wavelength, m (2.45 GHz)
  double sys_loss = 1.0;     // other losses, linear, >= 1

  bool operator==(const RadioParams&) const = default;
};

inline void validate(const RadioParams& p) {
  if (!(p.n_exponent > 0.0)) fail(ErrorCode::BadConfig, "radio n_exponent must be > 0");
  if (!(p.lambda_m > 0.0)) fail(ErrorCode::BadConfig, "radio lambda_m must be > 0");
  if (!(p.sys_loss >= 1.0)) fail(ErrorCode::BadConfig, "radio sys_loss must be >= 1");
}

inline double linear_approx_distance(const RadioParams& p, double rssi) {
  return std::pow(10.0, (p.tx_ref - rssi) / (10.0 * p.n_exponent));
}

// 41 is a fixed calibration constant of the attenuation formula.
inline double path_loss_attenuation(const RadioParams& p, double rssi) { return p.p_t - 41.0 - rssi; }

inline double friis_received_power(const RadioParams& p, double d) {
  if (!(d > 0.0)) fail(ErrorCode::NonPositiveDistance, std::to_string(d));
  return p.p_t + p.g_t + p.g_r + 20.0 * std::log10(p.lambda_m) -
         20.0 * std::log10(4.0 * std::numbers::pi * d) - 10.0 * std::log10(p.sys_loss);
}

inline double friis_distance(const RadioParams& p, double p_r) {
  const double budget = p.p_t + p.g_t + p.g_r - 10.0 * std::log10(p.sys_loss) - p_r;
  return p.lambda_m / (4.0 * std::numbers::pi) * std::pow(10.0, budget / 20.0);
}

// ---------------------------------------------------------------------------
// Parameter search

enum class RadioModel { LinearApprox, Friis };

struct Bounds {
  double low = 0.0;
  double high = 1.0;

  bool operator==(const Bounds&) const = default;
};

// A parameter with no bounds keeps its value from the base RadioParams.
// LinearApprox searches tx_ref/n_exponent; Friis searches p_t/g_t/g_r/sys_loss
// and lambda_m when given bounds.
struct SearchSpace {
  std::optional<Bounds> tx_ref = Bounds{-80.0, -20.0};
  std::optional<Bounds> n_exponent = Bounds{1.0, 6.0};
  std::optional<Bounds> p_t = Bounds{-20.0, 20.0};
  std::optional<Bounds> g_t = Bounds{-5.0, 10.0};
  std::optional<Bounds> g_r = Bounds{-5.0, 10.0};
  std::optional<Bounds> lambda_m;
  std::optional<Bounds> sys_loss = Bounds{1.0, 10.0};
  std::size_t iterations = 2000;
  std::uint64_t seed = 0;
  bool refine = true;

  bool operator==(const SearchSpace&) const = default;
};

struct RadioSample {
  double rssi = 0.0;      // event mean RSSI, dBm
  double distance = 0.0;  // true distance, m
};

struct RadioFit {
  RadioParams params;
  double loss = 0.0;          // mean |d - d'| at params
  double sample_loss = 0.0;   // best loss of the random phase alone
  std::vector<double> trace;  // best-so-far loss after each random sample
};

inline double predict_distance(RadioModel model, const RadioParams& p, double rssi) {
  return model == RadioModel::LinearApprox ? linear_approx_distance(p, rssi) : friis_distance(p, rssi);
}

inline double radio_loss(RadioModel model, const RadioParams& p, std::span<const RadioSample> data) {
  double sum = 0.0;
  for (const auto& s : data) sum += std::abs(s.distance - predict_distance(model, p, s.rssi));
  const double loss = sum / static_cast<double>(data.size());
  return std::isfinite(loss) ? loss : std::numeric_limits<double>::infinity();
}

namespace detail {

struct Coordinate {
  double RadioParams::*field;
  Bounds bounds;
};

inline std::vector<Coordinate> searched_coordinates(RadioModel model, const SearchSpace& s) {
  std::vector<Coordinate> out;
  auto add = [&](double RadioParams::*f, const std::optional<Bounds>& b) {
    if (b) out.push_back({f, *b});
  };
  if (model == RadioModel::LinearApprox) {
    add(&RadioParams::tx_ref, s.tx_ref);
    add(&RadioParams::n_exponent, s.n_exponent);
  } else {
    add(&RadioParams::p_t, s.p_t);
    add(&RadioParams::g_t, s.g_t);
    add(&RadioParams::g_r, s.g_r);
    add(&RadioParams::lambda_m, s.lambda_m);
    add(&RadioParams::sys_loss, s.sys_loss);
  }
  return out;
}

// Golden-section minimisation of f on [a, b]; returns the best point seen.
template <typename F>
std::pair<double, double> golden_section(F&& f, double a, double b, int iterations) {
  const double inv_phi = (std::sqrt(5.0) - 1.0) / 2.0;
  double c = b - inv_phi * (b - a);
  double d = a + inv_phi * (b - a);
  double fc = f(c);
  double fd = f(d);
  for (int i = 0; i < iterations; ++i) {
    if (fc <= fd) {
      b = d;
      d = c;
      fd = fc;
      c = b - inv_phi * (b - a);
      fc = f(c);
    } else {
      a = c;
      c = d;
      fc = fd;
      d = a + inv_phi * (b - a);
      fd = f(d);
    }
  }
  return fc <= fd ? std::pair{c, fc} : std::pair{d, fd};
}

}  // namespace detail

inline RadioFit fit_params(std::span<const RadioSample> data, RadioModel model, const SearchSpace& space,
                           const RadioParams& base = {}, std::size_t jobs = 1) {
  if (data.empty()) fail(ErrorCode::EmptyDataset, "fit_params needs at least one sample");
  if (space.iterations < 1) fail(ErrorCode::BadSearchSpace, "iterations must be >= 1");
  const auto coords = detail::searched_coordinates(model, space);
  for (const auto& c : coords) {
    if (!(c.bounds.low < c.bounds.high)) fail(ErrorCode::BadSearchSpace, "bounds must satisfy low < high");
  }

  // Random phase: candidate i is drawn from its own stream, so the first m
  // candidates are the same for every iteration count >= m.
  std::vector<RadioParams> candidates(space.iterations, base);
  std::vector<double> losses(space.iterations);
  parallel_for(space.iterations, jobs, [&](std::size_t i) {
    Rng rng(space.seed, i);
    for (const auto& c : coords) candidates[i].*c.field = rng.uniform(c.bounds.low, c.bounds.high);
    losses[i] = radio_loss(model, candidates[i], data);
  });

  RadioFit fit;
  fit.trace.reserve(space.iterations);
  std::size_t best = 0;
  for (std::size_t i = 0; i < space.iterations; ++i) {
    if (losses[i] < losses[best]) best = i;
    fit.trace.push_back(losses[best]);
  }
  fit.params = candidates[best];
  fit.loss = losses[best];
  fit.sample_loss = losses[best];
  if (!space.refine || coords.empty()) return fit;

  // Coordinate-wise golden-section refinement in a shrinking window.
  double window = 0.1;
  for (int sweep = 0; sweep < 60 && window > 1e-9; ++sweep) {
    bool improved = false;
    for (const auto& c : coords) {
      const double span = c.bounds.high - c.bounds.low;
      const double x0 = fit.params.*c.field;
      const double lo = std::max(c.bounds.low, x0 - window * span);
      const double hi = std::min(c.bounds.high, x0 + window * span);
      RadioParams trial = fit.params;
      auto f = [&](double x) {
        trial.*c.field = x;
        return radio_loss(model, trial, data);
      };
      const auto [x, fx] = detail::golden_section(f, lo, hi, 48);
      if (fx < fit.loss) {
        fit.params.*c.field = x;
        fit.loss = fx;
        improved = true;
      }
    }
    if (!improved) window *= 0.5;
  }
  return fit;
}

}  // namespace proxdist
