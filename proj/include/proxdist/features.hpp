#pragma once

// Event -> fixed-schema feature vector: RSSI summaries and percentiles,
// radio-model scalars on the mean RSSI, per-sensor IMU summaries, and
// orthonormal polynomial contrasts of the device-context categoricals.

#include <algorithm>
#include <array>
#include <cmath>
#include <map>
#include <set>
#include <span>
#include <string>
#include <vector>

#include "proxdist/corpus.hpp"
#include "proxdist/error.hpp"
#include "proxdist/matrix.hpp"
#include "proxdist/radio.hpp"
#include "proxdist/text.hpp"

namespace proxdist {

// ---------------------------------------------------------------------------
// Summary statistics

struct Summary {
  double min = 0.0;
  double mean = 0.0;
  double max = 0.0;

  bool operator==(const Summary&) const = default;
};

inline Summary summarize(std::span<const double> values) {
  if (values.empty()) fail(ErrorCode::EmptySeries, "summarize");
  Summary s{values[0], 0.0, values[0]};
  double sum = 0.0;
  for (double v : values) {
    s.min = std::min(s.min, v);
    s.max = std::max(s.max, v);
    sum += v;
  }
  s.mean = sum / static_cast<double>(values.size());
  return s;
}

// Linear-interpolation percentile of an ascending-sorted series.
inline double percentile_sorted(std::span<const double> sorted, double p) {
  if (sorted.empty()) fail(ErrorCode::EmptySeries, "percentile");
  if (!(p >= 0.0 && p <= 100.0)) fail(ErrorCode::BadPercent, text::format_double(p));
  const double h = static_cast<double>(sorted.size() - 1) * p / 100.0;
  const auto lo = static_cast<std::size_t>(std::floor(h));
  if (lo + 1 >= sorted.size()) return sorted[sorted.size() - 1];
  return sorted[lo] + (h - static_cast<double>(lo)) * (sorted[lo + 1] - sorted[lo]);
}

inline double percentile(std::span<const double> values, double p) {
  std::vector<double> sorted(values.begin(), values.end());
  std::sort(sorted.begin(), sorted.end());
  return percentile_sorted(sorted, p);
}

// ---------------------------------------------------------------------------
// Polynomial contrasts

struct ContrastMatrix {
  std::size_t levels = 0;  // k rows; k - 1 columns
  std::vector<double> data;

  std::size_t columns() const { return levels == 0 ? 0 : levels - 1; }
  double at(std::size_t row, std::size_t col) const { return data[row * columns() + col]; }
};

// Orthonormal polynomial trends over equally spaced scores 1..k. Column j is
// the degree-(j+1) monomial made orthogonal to the constant and to all lower
// degrees (modified Gram-Schmidt, applied twice), scaled to unit norm, with
// the sign that keeps its leading coefficient positive.
inline ContrastMatrix polynomial_contrasts(std::size_t k) {
  ContrastMatrix m;
  m.levels = k;
  if (k <= 1) return m;
  const double centre = (static_cast<double>(k) + 1.0) / 2.0;
  // Centred, scaled scores span the same polynomial spaces as 1..k and keep
  // high powers well conditioned.
  std::vector<double> x(k);
  for (std::size_t i = 0; i < k; ++i) x[i] = (static_cast<double>(i + 1) - centre) / centre;

  std::vector<std::vector<double>> basis;
  basis.emplace_back(k, 1.0 / std::sqrt(static_cast<double>(k)));
  for (std::size_t degree = 1; degree < k; ++degree) {
    std::vector<double> v(k);
    for (std::size_t i = 0; i < k; ++i) v[i] = std::pow(x[i], static_cast<double>(degree));
    for (int pass = 0; pass < 2; ++pass) {
      for (const auto& b : basis) {
        double dot = 0.0;
        for (std::size_t i = 0; i < k; ++i) dot += v[i] * b[i];
        for (std::size_t i = 0; i < k; ++i) v[i] -= dot * b[i];
      }
    }
    double norm = 0.0;
    for (double e : v) norm += e * e;
    norm = std::sqrt(norm);
    for (double& e : v) e /= norm;
    basis.push_back(std::move(v));
  }
  m.data.assign(k * (k - 1), 0.0);
  for (std::size_t row = 0; row < k; ++row) {
    for (std::size_t col = 0; col + 1 < k; ++col) m.data[row * (k - 1) + col] = basis[col + 1][row];
  }
  return m;
}

// ---------------------------------------------------------------------------
// Category vocabulary

struct CategoryVocabulary {
  std::array<std::vector<std::string>, kContextFieldCount> levels;  // lexicographic
  std::array<ContrastMatrix, kContextFieldCount> contrasts;

  bool operator==(const CategoryVocabulary& o) const { return levels == o.levels; }

  static CategoryVocabulary from_levels(std::array<std::vector<std::string>, kContextFieldCount> lv) {
    CategoryVocabulary v;
    for (std::size_t f = 0; f < kContextFieldCount; ++f) {
      std::sort(lv[f].begin(), lv[f].end());
      lv[f].erase(std::unique(lv[f].begin(), lv[f].end()), lv[f].end());
      if (lv[f].empty()) fail(ErrorCode::BadConfig, "vocabulary field " + std::string(kContextFieldNames[f]) + " has no levels");
      v.contrasts[f] = polynomial_contrasts(lv[f].size());
    }
    v.levels = std::move(lv);
    return v;
  }

  // Index of `level` in field f, or -1 when unseen.
  long index_of(std::size_t f, const std::string& level) const {
    const auto& l = levels[f];
    const auto it = std::lower_bound(l.begin(), l.end(), level);
    if (it == l.end() || *it != level) return -1;
    return static_cast<long>(it - l.begin());
  }
};

template <typename EventRange, typename Project>
CategoryVocabulary fit_vocabulary(const EventRange& events, Project&& context_of) {
  std::array<std::vector<std::string>, kContextFieldCount> lv;
  for (const auto& e : events) {
    const DeviceContext& ctx = context_of(e);
    for (std::size_t f = 0; f < kContextFieldCount; ++f) lv[f].push_back(context_field(ctx, f));
  }
  return CategoryVocabulary::from_levels(std::move(lv));
}

inline CategoryVocabulary fit_vocabulary(const std::vector<Event>& events) {
  return fit_vocabulary(events, [](const Event& e) -> const DeviceContext& { return e.context; });
}

struct EncodedContext {
  std::vector<std::string> names;
  std::vector<double> values;
  std::size_t unseen = 0;  // fields whose level was not in the vocabulary
};

inline std::vector<std::string> context_feature_names(const CategoryVocabulary& vocab) {
  std::vector<std::string> names;
  for (std::size_t f = 0; f < kContextFieldCount; ++f) {
    for (std::size_t c = 0; c < vocab.contrasts[f].columns(); ++c) {
      names.push_back("cat:" + std::string(kContextFieldNames[f]) + ":poly" + std::to_string(c + 1));
    }
  }
  return names;
}

// Unseen levels encode as the all-zeros row (the mean of the contrast space).
inline EncodedContext encode_context(const DeviceContext& ctx, const CategoryVocabulary& vocab) {
  EncodedContext out;
  out.names = context_feature_names(vocab);
  for (std::size_t f = 0; f < kContextFieldCount; ++f) {
    const auto& cm = vocab.contrasts[f];
    const long idx = vocab.index_of(f, context_field(ctx, f));
    if (idx < 0) ++out.unseen;
    for (std::size_t c = 0; c < cm.columns(); ++c) {
      out.values.push_back(idx < 0 ? 0.0 : cm.at(static_cast<std::size_t>(idx), c));
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Feature configuration

struct StatFlags {
  bool min = true;
  bool mean = true;
  bool max = true;

  bool operator==(const StatFlags&) const = default;
};

struct FeatureConfig {
  bool use_ble_minmeanmax = true;
  std::vector<double> ble_percentiles = {10, 25, 50, 75, 90};
  bool use_categoricals = true;
  std::map<SensorKind, StatFlags> imu_sensors = {
      {SensorKind::Accelerometer, {}}, {SensorKind::Gyroscope, {}}, {SensorKind::Magnetometer, {}},
      {SensorKind::Attitude, {}},      {SensorKind::Gravity, {}},   {SensorKind::Altitude, {}},
      {SensorKind::Heading, {}}};
  bool use_magnitude = true;  // |v| summaries for 3-channel sensors
  bool use_linear_approx_distance = true;
  bool use_path_loss = true;
  bool use_friis_distance = true;
  RadioParams radio_params;

  bool operator==(const FeatureConfig&) const = default;
};

inline void validate(const FeatureConfig& cfg) {
  const auto& p = cfg.ble_percentiles;
  for (std::size_t i = 0; i < p.size(); ++i) {
    if (!(p[i] > 0.0 && p[i] < 100.0)) fail(ErrorCode::BadConfig, "percentile outside (0,100): " + text::format_double(p[i]));
    if (i > 0 && !(p[i - 1] < p[i])) fail(ErrorCode::BadConfig, "percentile list must be sorted and duplicate-free");
  }
  for (const auto& [kind, flags] : cfg.imu_sensors) {
    if (kind == SensorKind::Bluetooth || kind == SensorKind::Other) {
      fail(ErrorCode::BadConfig, "imu_sensors may only name IMU sensors");
    }
  }
  validate(cfg.radio_params);
}

inline std::vector<std::string> feature_schema(const FeatureConfig& cfg, const CategoryVocabulary& vocab) {
  std::vector<std::string> names;
  if (cfg.use_ble_minmeanmax) {
    names.insert(names.end(), {"ble:min", "ble:mean", "ble:max"});
  }
  for (double p : cfg.ble_percentiles) names.push_back("ble:p" + text::format_double(p));
  if (cfg.use_linear_approx_distance) names.push_back("radio:linear_distance");
  if (cfg.use_path_loss) names.push_back("radio:path_loss");
  if (cfg.use_friis_distance) names.push_back("radio:friis_distance");
  for (const auto& [kind, flags] : cfg.imu_sensors) {
    const std::string prefix(sensor_name(kind));
    auto channels = channel_names(kind);
    if (channels.size() > 1 && cfg.use_magnitude) channels.push_back("mag");
    for (const auto& ch : channels) {
      if (flags.min) names.push_back(prefix + ":" + ch + ":min");
      if (flags.mean) names.push_back(prefix + ":" + ch + ":mean");
      if (flags.max) names.push_back(prefix + ":" + ch + ":max");
    }
    names.push_back(prefix + ":present");
  }
  if (cfg.use_categoricals) {
    auto cat = context_feature_names(vocab);
    names.insert(names.end(), cat.begin(), cat.end());
  }
  return names;
}

struct FeatureVector {
  std::vector<std::string> schema;
  std::vector<double> values;
  std::size_t unseen_categories = 0;
};

inline FeatureVector extract(const Event& event, const FeatureConfig& cfg, const CategoryVocabulary& vocab) {
  FeatureVector fv;
  fv.schema = feature_schema(cfg, vocab);
  auto& out = fv.values;
  out.reserve(fv.schema.size());

  std::vector<double> rssi;
  for (const auto& r : event.readings) {
    if (r.kind == SensorKind::Bluetooth) rssi.push_back(r.values[0]);
  }
  std::sort(rssi.begin(), rssi.end());
  const Summary ble = summarize(rssi);
  if (cfg.use_ble_minmeanmax) out.insert(out.end(), {ble.min, ble.mean, ble.max});
  for (double p : cfg.ble_percentiles) out.push_back(percentile_sorted(rssi, p));
  if (cfg.use_linear_approx_distance) out.push_back(linear_approx_distance(cfg.radio_params, ble.mean));
  if (cfg.use_path_loss) out.push_back(path_loss_attenuation(cfg.radio_params, ble.mean));
  if (cfg.use_friis_distance) out.push_back(friis_distance(cfg.radio_params, ble.mean));

  for (const auto& [kind, flags] : cfg.imu_sensors) {
    const std::size_t n_ch = channel_count(kind);
    const bool with_mag = n_ch > 1 && cfg.use_magnitude;
    std::vector<std::vector<double>> series(n_ch + (with_mag ? 1 : 0));
    for (const auto& r : event.readings) {
      if (r.kind != kind) continue;
      double sq = 0.0;
      for (std::size_t c = 0; c < n_ch; ++c) {
        series[c].push_back(r.values[c]);
        sq += r.values[c] * r.values[c];
      }
      if (with_mag) series[n_ch].push_back(std::sqrt(sq));
    }
    const bool present = !series[0].empty();
    for (const auto& s : series) {
      const Summary sm = present ? summarize(s) : Summary{};
      if (flags.min) out.push_back(sm.min);
      if (flags.mean) out.push_back(sm.mean);
      if (flags.max) out.push_back(sm.max);
    }
    out.push_back(present ? 1.0 : 0.0);
  }

  if (cfg.use_categoricals) {
    auto enc = encode_context(event.context, vocab);
    out.insert(out.end(), enc.values.begin(), enc.values.end());
    fv.unseen_categories = enc.unseen;
  }

  for (std::size_t i = 0; i < out.size(); ++i) {
    if (!std::isfinite(out[i])) fail(ErrorCode::NonFiniteFeature, event.id + ": " + fv.schema[i]);
  }
  return fv;
}

// Feature matrix for a batch of events, rows in input order.
template <typename EventRange, typename Project>
Matrix extract_matrix(const EventRange& events, Project&& event_of, const FeatureConfig& cfg,
                      const CategoryVocabulary& vocab, std::size_t* unseen = nullptr) {
  Matrix m(feature_schema(cfg, vocab), 0);
  m.data.reserve(m.cols() * events.size());
  for (const auto& e : events) {
    const auto fv = extract(event_of(e), cfg, vocab);
    if (unseen) *unseen += fv.unseen_categories;
    m.append_row(fv.values);
  }
  return m;
}

// CSV with header `id,<schema...>` and one row per event.
inline std::string matrix_to_csv(const Matrix& m, const std::vector<std::string>& ids) {
  if (ids.size() != m.rows) fail(ErrorCode::ShapeMismatch, "one id per row required");
  std::string out = "id";
  for (const auto& n : m.schema) out += "," + n;
  out += '\n';
  for (std::size_t r = 0; r < m.rows; ++r) {
    out += ids[r];
    for (double v : m.row(r)) out += "," + text::format_double(v);
    out += '\n';
  }
  return out;
}

}  // namespace proxdist
