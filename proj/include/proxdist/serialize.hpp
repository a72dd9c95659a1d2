#pragma once

// JSON forms of the configuration structs. Readers start from the struct's
// defaults, so absent keys keep their default value; unknown keys are
// rejected.

#include <optional>
#include <set>
#include <string>

#include <json.hpp>

#include "proxdist/corpus.hpp"
#include "proxdist/ensemble.hpp"
#include "proxdist/error.hpp"
#include "proxdist/features.hpp"
#include "proxdist/radio.hpp"
#include "proxdist/scoring.hpp"
#include "proxdist/synth.hpp"

namespace proxdist {

using nlohmann::json;

class JsonReader {
 public:
  JsonReader(const json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) fail(ErrorCode::BadConfig, where() + " must be an object");
  }

  template <typename T>
  void get(const char* key, T& out) {
    if (!j_.contains(key)) return;
    seen_.insert(key);
    try {
      out = j_.at(key).get<T>();
    } catch (const json::exception& e) {
      fail(ErrorCode::BadConfig, where(key) + ": " + e.what());
    }
  }

  // Hands the sub-document to `read` when present.
  template <typename Fn>
  void with(const char* key, Fn&& read) {
    if (!j_.contains(key)) return;
    seen_.insert(key);
    read(j_.at(key), where(key));
  }

  void finish() const {
    for (const auto& [k, v] : j_.items()) {
      if (!seen_.count(k)) fail(ErrorCode::BadConfig, "unknown key " + where(k.c_str()));
    }
  }

  std::string where(const char* key = nullptr) const {
    if (!key) return path_.empty() ? "<root>" : path_;
    return path_.empty() ? key : path_ + "." + key;
  }

 private:
  const json& j_;
  std::string path_;
  std::set<std::string> seen_;
};

inline SensorKind sensor_from_json_key(const std::string& name, const std::string& where) {
  auto k = sensor_from_name(name);
  if (!k) fail(ErrorCode::BadConfig, where + ": unknown sensor " + name);
  return *k;
}

// ---------------------------------------------------------------------------
// Radio

inline json to_json(const RadioParams& p) {
  return {{"tx_ref", p.tx_ref}, {"n_exponent", p.n_exponent}, {"p_t", p.p_t},          {"g_t", p.g_t},
          {"g_r", p.g_r},       {"lambda_m", p.lambda_m},     {"sys_loss", p.sys_loss}};
}

inline RadioParams radio_params_from_json(const json& j, const std::string& path, RadioParams p = {}) {
  JsonReader r(j, path);
  r.get("tx_ref", p.tx_ref);
  r.get("n_exponent", p.n_exponent);
  r.get("p_t", p.p_t);
  r.get("g_t", p.g_t);
  r.get("g_r", p.g_r);
  r.get("lambda_m", p.lambda_m);
  r.get("sys_loss", p.sys_loss);
  r.finish();
  return p;
}

inline json bounds_to_json(const std::optional<Bounds>& b) {
  if (!b) return nullptr;
  return json::array({b->low, b->high});
}

inline std::optional<Bounds> bounds_from_json(const json& j, const std::string& where) {
  if (j.is_null()) return std::nullopt;
  if (!j.is_array() || j.size() != 2 || !j[0].is_number() || !j[1].is_number()) {
    fail(ErrorCode::BadConfig, where + " must be [low, high] or null");
  }
  return Bounds{j[0].get<double>(), j[1].get<double>()};
}

inline json to_json(const SearchSpace& s) {
  return {{"tx_ref", bounds_to_json(s.tx_ref)}, {"n_exponent", bounds_to_json(s.n_exponent)},
          {"p_t", bounds_to_json(s.p_t)},       {"g_t", bounds_to_json(s.g_t)},
          {"g_r", bounds_to_json(s.g_r)},       {"lambda_m", bounds_to_json(s.lambda_m)},
          {"sys_loss", bounds_to_json(s.sys_loss)}, {"iterations", s.iterations},
          {"seed", s.seed},                     {"refine", s.refine}};
}

inline SearchSpace search_space_from_json(const json& j, const std::string& path, SearchSpace s = {}) {
  JsonReader r(j, path);
  auto b = [&](const char* key, std::optional<Bounds>& out) {
    r.with(key, [&](const json& v, const std::string& w) { out = bounds_from_json(v, w); });
  };
  b("tx_ref", s.tx_ref);
  b("n_exponent", s.n_exponent);
  b("p_t", s.p_t);
  b("g_t", s.g_t);
  b("g_r", s.g_r);
  b("lambda_m", s.lambda_m);
  b("sys_loss", s.sys_loss);
  r.get("iterations", s.iterations);
  r.get("seed", s.seed);
  r.get("refine", s.refine);
  r.finish();
  return s;
}

// ---------------------------------------------------------------------------
// Features

inline json feature_config_to_json(const FeatureConfig& f) {
  json imu = json::object();
  for (const auto& [kind, flags] : f.imu_sensors) {
    imu[std::string(sensor_name(kind))] = {{"min", flags.min}, {"mean", flags.mean}, {"max", flags.max}};
  }
  return {{"use_ble_minmeanmax", f.use_ble_minmeanmax},
          {"ble_percentiles", f.ble_percentiles},
          {"use_categoricals", f.use_categoricals},
          {"imu_sensors", imu},
          {"use_magnitude", f.use_magnitude},
          {"use_linear_approx_distance", f.use_linear_approx_distance},
          {"use_path_loss", f.use_path_loss},
          {"use_friis_distance", f.use_friis_distance},
          {"radio_params", to_json(f.radio_params)}};
}

inline FeatureConfig feature_config_from_json(const json& j, const std::string& path = "features",
                                              FeatureConfig f = {}) {
  JsonReader r(j, path);
  r.get("use_ble_minmeanmax", f.use_ble_minmeanmax);
  r.get("ble_percentiles", f.ble_percentiles);
  r.get("use_categoricals", f.use_categoricals);
  r.with("imu_sensors", [&](const json& v, const std::string& w) {
    if (!v.is_object()) fail(ErrorCode::BadConfig, w + " must be an object");
    f.imu_sensors.clear();
    for (const auto& [name, flags_json] : v.items()) {
      StatFlags flags;
      JsonReader fr(flags_json, w + "." + name);
      fr.get("min", flags.min);
      fr.get("mean", flags.mean);
      fr.get("max", flags.max);
      fr.finish();
      f.imu_sensors[sensor_from_json_key(name, w)] = flags;
    }
  });
  r.get("use_magnitude", f.use_magnitude);
  r.get("use_linear_approx_distance", f.use_linear_approx_distance);
  r.get("use_path_loss", f.use_path_loss);
  r.get("use_friis_distance", f.use_friis_distance);
  r.with("radio_params",
         [&](const json& v, const std::string& w) { f.radio_params = radio_params_from_json(v, w, f.radio_params); });
  r.finish();
  validate(f);
  return f;
}

// ---------------------------------------------------------------------------
// Scoring

inline json to_json(const CostWeights& w) { return {{"w_miss", w.w_miss}, {"w_fa", w.w_fa}}; }

inline CostWeights cost_weights_from_json(const json& j, const std::string& path, CostWeights w = {}) {
  JsonReader r(j, path);
  r.get("w_miss", w.w_miss);
  r.get("w_fa", w.w_fa);
  r.finish();
  if (!(w.w_miss > 0.0 && w.w_fa > 0.0)) fail(ErrorCode::BadConfig, path + ": weights must be positive");
  return w;
}

// ---------------------------------------------------------------------------
// Models. Seeds are not part of the document: they derive from the
// experiment's master seed.

inline json to_json(const ExtraTreesHyperparams& hp) {
  return {{"n_trees", hp.n_trees},
          {"k_features", hp.k_features ? json(*hp.k_features) : json(nullptr)},
          {"min_samples_split", hp.min_samples_split},
          {"max_depth", hp.max_depth ? json(*hp.max_depth) : json(nullptr)},
          {"bootstrap", hp.bootstrap}};
}

inline ExtraTreesHyperparams extra_trees_from_json(const json& j, const std::string& path,
                                                   ExtraTreesHyperparams hp = {}) {
  JsonReader r(j, path);
  r.get("n_trees", hp.n_trees);
  auto opt = [&](const char* key, std::optional<std::size_t>& out) {
    r.with(key, [&](const json& v, const std::string& w) {
      if (v.is_null()) out.reset();
      else if (v.is_number_unsigned()) out = v.get<std::size_t>();
      else fail(ErrorCode::BadConfig, w + " must be a non-negative integer or null");
    });
  };
  opt("k_features", hp.k_features);
  r.get("min_samples_split", hp.min_samples_split);
  opt("max_depth", hp.max_depth);
  r.get("bootstrap", hp.bootstrap);
  r.finish();
  return hp;
}

inline json to_json(const GbmHyperparams& hp) {
  return {{"n_rounds", hp.n_rounds},
          {"learning_rate", hp.learning_rate},
          {"max_depth", hp.max_depth},
          {"min_samples_leaf", hp.min_samples_leaf},
          {"subsample", hp.subsample}};
}

inline GbmHyperparams gbm_from_json(const json& j, const std::string& path, GbmHyperparams hp = {}) {
  JsonReader r(j, path);
  r.get("n_rounds", hp.n_rounds);
  r.get("learning_rate", hp.learning_rate);
  r.get("max_depth", hp.max_depth);
  r.get("min_samples_leaf", hp.min_samples_leaf);
  r.get("subsample", hp.subsample);
  r.finish();
  return hp;
}

// ---------------------------------------------------------------------------
// Generator

inline json to_json(const GeneratorSpec& s) {
  json offsets = json::object();
  for (const auto& [field, levels] : s.offsets) offsets[field] = levels;
  json vocab = json::object();
  for (std::size_t f = 0; f < kContextFieldCount; ++f) vocab[std::string(kContextFieldNames[f])] = s.vocab[f];
  json imu = json::object();
  for (const auto& [kind, m] : s.imu) imu[std::string(sensor_name(kind))] = {{"baseline", m.baseline}, {"noise", m.noise}};
  return {{"n_events", s.n_events},
          {"step_sizes", s.step_sizes},
          {"looks", s.looks},
          {"rssi_per_look", s.rssi_per_look},
          {"imu_per_look", s.imu_per_look},
          {"look_seconds", s.look_seconds},
          {"tx_ref", s.tx_ref},
          {"n_exponent", s.n_exponent},
          {"shadowing_sigma", s.shadowing_sigma},
          {"offsets", offsets},
          {"vocab", vocab},
          {"imu", imu},
          {"drift",
           {{"enabled", s.drift.enabled},
            {"sensor", sensor_name(s.drift.sensor)},
            {"channel", s.drift.channel},
            {"per_meter", s.drift.per_meter}}},
          {"shuffle_labels", s.shuffle_labels},
          {"classes", s.classes},
          {"seed", s.seed}};
}

inline GeneratorSpec generator_spec_from_json(const json& j, const std::string& path = "synthetic",
                                              GeneratorSpec s = {}) {
  JsonReader r(j, path);
  r.get("n_events", s.n_events);
  r.get("step_sizes", s.step_sizes);
  r.get("looks", s.looks);
  r.get("rssi_per_look", s.rssi_per_look);
  r.get("imu_per_look", s.imu_per_look);
  r.get("look_seconds", s.look_seconds);
  r.get("tx_ref", s.tx_ref);
  r.get("n_exponent", s.n_exponent);
  r.get("shadowing_sigma", s.shadowing_sigma);
  r.get("offsets", s.offsets);
  r.with("vocab", [&](const json& v, const std::string& w) {
    JsonReader vr(v, w);
    for (std::size_t f = 0; f < kContextFieldCount; ++f) vr.get(std::string(kContextFieldNames[f]).c_str(), s.vocab[f]);
    vr.finish();
  });
  r.with("imu", [&](const json& v, const std::string& w) {
    if (!v.is_object()) fail(ErrorCode::BadConfig, w + " must be an object");
    s.imu.clear();
    for (const auto& [name, m] : v.items()) {
      ImuNoise noise;
      JsonReader mr(m, w + "." + name);
      mr.get("baseline", noise.baseline);
      mr.get("noise", noise.noise);
      mr.finish();
      s.imu[sensor_from_json_key(name, w)] = noise;
    }
  });
  r.with("drift", [&](const json& v, const std::string& w) {
    JsonReader dr(v, w);
    dr.get("enabled", s.drift.enabled);
    std::string sensor(sensor_name(s.drift.sensor));
    dr.get("sensor", sensor);
    s.drift.sensor = sensor_from_json_key(sensor, w);
    dr.get("channel", s.drift.channel);
    dr.get("per_meter", s.drift.per_meter);
    dr.finish();
  });
  r.get("shuffle_labels", s.shuffle_labels);
  r.get("classes", s.classes);
  r.get("seed", s.seed);
  r.finish();
  validate(s);
  return s;
}

}  // namespace proxdist
