#pragma once

// Deterministic synthetic contact-event corpus with a planted distance signal.
//
// Each event holds one distance class. Looks start every step_size seconds and
// last 4 s; inside a look, RSSI samples follow the log-distance law
//   rssi = tx_ref - 10 n log10(d) + offset(context) + N(0, sigma)
// and IMU streams are baseline + noise, plus an optional distance-dependent
// drift on one channel.

#include <array>
#include <cmath>
#include <cstdio>
#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "proxdist/corpus.hpp"
#include "proxdist/error.hpp"
#include "proxdist/parallel.hpp"
#include "proxdist/rng.hpp"

namespace proxdist {

struct ImuNoise {
  std::vector<double> baseline;  // per channel
  double noise = 0.1;            // standard deviation per sample

  bool operator==(const ImuNoise&) const = default;
};

struct ImuDrift {
  bool enabled = false;
  SensorKind sensor = SensorKind::Altitude;
  std::size_t channel = 0;
  double per_meter = 1.0;  // added to the channel mean per metre of distance

  bool operator==(const ImuDrift&) const = default;
};

struct GeneratorSpec {
  std::size_t n_events = 200;  // per (grain, class)
  std::vector<int> step_sizes = {10, 20, 30, 40, 50, 60, 70, 80, 90, 100, 110, 120, 130, 140, 150};
  std::size_t looks = 5;
  std::size_t rssi_per_look = 20;
  std::size_t imu_per_look = 5;
  double look_seconds = 4.0;

  double tx_ref = -45.0;
  double n_exponent = 2.0;
  double shadowing_sigma = 4.0;
  // context field name -> level -> dB offset; levels missing here get 0
  std::map<std::string, std::map<std::string, double>> offsets = {
      {"tx_model", {{"galaxy_s9", -3.0}, {"iphone_8", 0.0}, {"pixel_3", 3.0}}},
      {"rx_model", {{"galaxy_s9", 3.0}, {"iphone_8", -3.0}, {"pixel_3", 0.0}}},
  };
  std::array<std::vector<std::string>, kContextFieldCount> vocab = {{
      {"galaxy_s9", "iphone_8", "pixel_3"},
      {"galaxy_s9", "iphone_8", "pixel_3"},
      {"high", "low"},
      {"facing", "side", "turned"},
      {"facing", "side", "turned"},
      {"bag", "hand", "pocket"},
      {"bag", "hand", "pocket"},
  }};

  std::map<SensorKind, ImuNoise> imu = {
      {SensorKind::Accelerometer, {{0.0, 0.0, 1.0}, 0.05}},
      {SensorKind::Gyroscope, {{0.0, 0.0, 0.0}, 0.2}},
      {SensorKind::Magnetometer, {{20.0, -5.0, 40.0}, 3.0}},
      {SensorKind::Attitude, {{0.0, 0.0, 0.0}, 0.3}},
      {SensorKind::Gravity, {{0.0, 0.0, 9.81}, 0.1}},
      {SensorKind::Altitude, {{100.0}, 0.5}},
      {SensorKind::Heading, {{180.0}, 20.0}},
  };
  ImuDrift drift;
  bool shuffle_labels = false;  // keys get classes independent of the signal

  std::vector<double> classes = {1.2, 1.8, 3.0, 4.5};
  std::uint64_t seed = 7;

  bool operator==(const GeneratorSpec&) const = default;
};

inline void validate(const GeneratorSpec& s) {
  auto bad = [](const std::string& m) { fail(ErrorCode::BadSpec, m); };
  if (s.n_events < 1) bad("n_events must be >= 1");
  if (s.step_sizes.empty()) bad("step_sizes must be non-empty");
  for (int st : s.step_sizes) {
    if (!valid_step_size(st)) bad("step size outside {10,...,150}: " + std::to_string(st));
  }
  if (s.looks < 1 || s.rssi_per_look < 1) bad("each event needs at least one look with RSSI");
  if (!(s.look_seconds > 0.0)) bad("look_seconds must be > 0");
  if (!(s.shadowing_sigma >= 0.0)) bad("shadowing_sigma must be >= 0");
  if (!(s.n_exponent > 0.0)) bad("n_exponent must be > 0");
  if (s.classes.empty()) bad("classes must be non-empty");
  for (double d : s.classes) {
    if (!distance_class_index(d)) bad("class outside {1.2, 1.8, 3.0, 4.5}");
  }
  for (const auto& v : s.vocab) {
    if (v.empty()) bad("every context field needs at least one level");
  }
  for (const auto& [field, levels] : s.offsets) {
    bool known = false;
    for (auto n : kContextFieldNames) known = known || n == field;
    if (!known) bad("offset for unknown context field " + field);
  }
  for (const auto& [kind, m] : s.imu) {
    if (kind == SensorKind::Bluetooth || kind == SensorKind::Other) bad("imu entries must be IMU sensors");
    if (m.baseline.size() != channel_count(kind)) bad("imu baseline arity for " + std::string(sensor_name(kind)));
    if (!(m.noise >= 0.0)) bad("imu noise must be >= 0");
  }
  if (s.drift.enabled) {
    auto it = s.imu.find(s.drift.sensor);
    if (it == s.imu.end() || s.drift.channel >= it->second.baseline.size()) bad("drift names a sensor channel that is not generated");
  }
}

inline double context_offset(const GeneratorSpec& s, const DeviceContext& ctx) {
  double total = 0.0;
  for (std::size_t f = 0; f < kContextFieldCount; ++f) {
    auto fit = s.offsets.find(std::string(kContextFieldNames[f]));
    if (fit == s.offsets.end()) continue;
    auto lit = fit->second.find(context_field(ctx, f));
    if (lit != fit->second.end()) total += lit->second;
  }
  return total;
}

struct SyntheticCorpus {
  std::vector<Event> events;
  KeyTable keys;
};

namespace detail {

inline double quantize(double v, double step) { return std::round(v / step) * step; }

}  // namespace detail

// Events are named <prefix><grain>_<distance-class>_<index>.
inline SyntheticCorpus generate(const GeneratorSpec& spec, const std::string& id_prefix = "ev_",
                                std::size_t jobs = 1) {
  validate(spec);
  const std::array<Grain, 2> grains = {Grain::Fine, Grain::Coarse};
  const std::size_t per_grain = spec.classes.size() * spec.n_events;
  const std::size_t total = grains.size() * per_grain;
  SyntheticCorpus out;
  out.events.resize(total);
  std::vector<KeyEntry> entries(total);

  parallel_for(total, jobs, [&](std::size_t j) {
    Rng rng(spec.seed, j);
    const Grain grain = grains[j / per_grain];
    const std::size_t cls = (j % per_grain) / spec.n_events;
    const std::size_t idx = j % spec.n_events;
    const double d = spec.classes[cls];

    Event ev;
    char name[96];
    std::snprintf(name, sizeof(name), "%s_%zu_%04zu", std::string(grain_name(grain)).c_str(), cls, idx);
    ev.id = id_prefix + name;
    for (std::size_t f = 0; f < kContextFieldCount; ++f) {
      const auto& levels = spec.vocab[f];
      context_field(ev.context, f) = levels[static_cast<std::size_t>(rng.below(levels.size()))];
    }
    ev.step_size = spec.step_sizes[static_cast<std::size_t>(rng.below(spec.step_sizes.size()))];
    const double mean_rssi = spec.tx_ref - 10.0 * spec.n_exponent * std::log10(d) + context_offset(spec, ev.context);

    for (std::size_t look = 0; look < spec.looks; ++look) {
      const double start = static_cast<double>(look) * static_cast<double>(ev.step_size);
      auto stamp = [&] { return detail::quantize(start + spec.look_seconds * rng.uniform(), 1e-3); };
      for (std::size_t k = 0; k < spec.rssi_per_look; ++k) {
        Reading r;
        r.timestamp = stamp();
        r.kind = SensorKind::Bluetooth;
        r.values = {spec.shadowing_sigma > 0.0 ? rng.normal(mean_rssi, spec.shadowing_sigma) : mean_rssi};
        ev.readings.push_back(std::move(r));
      }
      for (const auto& [kind, model] : spec.imu) {
        for (std::size_t k = 0; k < spec.imu_per_look; ++k) {
          Reading r;
          r.timestamp = stamp();
          r.kind = kind;
          for (std::size_t c = 0; c < model.baseline.size(); ++c) {
            double v = model.baseline[c] + (model.noise > 0.0 ? rng.normal(0.0, model.noise) : 0.0);
            if (spec.drift.enabled && spec.drift.sensor == kind && spec.drift.channel == c) v += spec.drift.per_meter * d;
            r.values.push_back(detail::quantize(v, 1e-6));
          }
          ev.readings.push_back(std::move(r));
        }
      }
    }
    std::stable_sort(ev.readings.begin(), ev.readings.end(),
                     [](const Reading& a, const Reading& b) { return a.timestamp < b.timestamp; });
    double label = d;
    if (spec.shuffle_labels) label = kDistanceClasses[static_cast<std::size_t>(rng.below(kDistanceClasses.size()))];
    entries[j] = {label, ev.step_size, grain};
    out.events[j] = std::move(ev);
  });

  for (std::size_t j = 0; j < total; ++j) out.keys.entries.emplace(out.events[j].id, entries[j]);
  return out;
}

struct SyntheticSplits {
  SyntheticCorpus train, dev, test;
};

// Three independent draws with sub-seeds derived from spec.seed.
inline SyntheticSplits generate_splits(const GeneratorSpec& spec, std::size_t jobs = 1) {
  SyntheticSplits s;
  auto draw = [&](std::uint64_t label, const std::string& prefix) {
    GeneratorSpec g = spec;
    g.seed = derive_seed(spec.seed, label);
    return generate(g, prefix, jobs);
  };
  s.train = draw(1, "train_");
  s.dev = draw(2, "dev_");
  s.test = draw(3, "test_");
  return s;
}

}  // namespace proxdist
