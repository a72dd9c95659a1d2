#pragma once

// Experimental protocol: one model per grain, hyperparameters chosen on
// train -> dev, the winner refit on train + dev and scored on test with the
// fine and coarse predictions merged into one table.

#include <algorithm>
#include <array>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "proxdist/corpus.hpp"
#include "proxdist/ensemble.hpp"
#include "proxdist/error.hpp"
#include "proxdist/features.hpp"
#include "proxdist/radio.hpp"
#include "proxdist/rng.hpp"
#include "proxdist/scoring.hpp"
#include "proxdist/serialize.hpp"
#include "proxdist/synth.hpp"

namespace proxdist {

struct SplitPaths {
  std::string events;  // directory of event .csv files
  std::string keys;    // key .tsv

  bool operator==(const SplitPaths&) const = default;
};

struct AblationGroup {
  std::string name;
  std::vector<std::string> prefixes;  // feature-name prefixes removed together

  bool operator==(const AblationGroup&) const = default;
};

inline std::vector<AblationGroup> default_ablation_groups() {
  return {{"bluetooth", {"ble:"}},
          {"radio", {"radio:"}},
          {"categorical", {"cat:"}},
          {"Accelerometer", {"Accelerometer:"}},
          {"Gyroscope", {"Gyroscope:"}},
          {"Magnetometer", {"Magnetometer:"}},
          {"Attitude", {"Attitude:"}},
          {"Gravity", {"Gravity:"}},
          {"Altitude", {"Altitude:"}},
          {"Heading", {"Heading:"}}};
}

struct ExperimentConfig {
  // Either a synthetic corpus or three on-disk splits.
  std::optional<GeneratorSpec> synthetic = GeneratorSpec{};
  SplitPaths train, dev, test;
  bool strict_parsing = true;
  std::map<std::string, std::string> header_aliases;

  FeatureConfig features;
  bool fit_radio = true;  // fit radio parameters on the training split
  SearchSpace radio_search = [] {
    SearchSpace s;
    s.iterations = 300;
    return s;
  }();

  ModelSpec model;
  HyperGrid grid = {{"max_depth", {0, 16}}, {"min_samples_split", {2, 5}}};
  CostWeights weights;
  std::uint64_t seed = 7;
  std::vector<AblationGroup> ablation_groups = default_ablation_groups();
  std::vector<std::string> exclude_prefixes;  // features dropped before training
  std::size_t importance_repeats = 20;
  std::string output_dir;
  std::size_t jobs = 1;

  bool operator==(const ExperimentConfig&) const = default;
};

inline void validate(const ExperimentConfig& cfg) {
  if (!cfg.synthetic) {
    for (const auto* sp : {&cfg.train, &cfg.dev, &cfg.test}) {
      if (sp->events.empty() || sp->keys.empty()) fail(ErrorCode::BadConfig, "corpus paths required when no synthetic spec is given");
    }
  } else {
    validate(*cfg.synthetic);
  }
  validate(cfg.features);
  std::vector<std::string> names;
  for (const auto& g : cfg.ablation_groups) names.push_back(g.name);
  std::sort(names.begin(), names.end());
  if (std::adjacent_find(names.begin(), names.end()) != names.end()) fail(ErrorCode::BadConfig, "ablation group names must be unique");
  if (cfg.importance_repeats < 1) fail(ErrorCode::BadConfig, "importance_repeats must be >= 1");
  if (!(cfg.weights.w_miss > 0.0 && cfg.weights.w_fa > 0.0)) fail(ErrorCode::BadConfig, "cost weights must be positive");
}

// ---------------------------------------------------------------------------
// Data

struct ExperimentData {
  LabeledDataset train, dev, test;
  KeyTable test_keys;
};

inline LabeledDataset load_split(const SplitPaths& paths, const ParseOptions& opts, KeyTable* keys_out = nullptr,
                                 ParseLog* log = nullptr) {
  const auto events = load_events(paths.events, opts, log);
  auto keys = parse_key(read_file(paths.keys));
  auto ds = join(events, keys);
  if (keys_out) *keys_out = std::move(keys);
  return ds;
}

inline ExperimentData load_data(const ExperimentConfig& cfg, ParseLog* log = nullptr) {
  ExperimentData data;
  if (cfg.synthetic) {
    auto s = generate_splits(*cfg.synthetic, cfg.jobs);
    data.train = join(s.train.events, s.train.keys);
    data.dev = join(s.dev.events, s.dev.keys);
    data.test = join(s.test.events, s.test.keys);
    data.test_keys = std::move(s.test.keys);
    return data;
  }
  ParseOptions opts{cfg.strict_parsing, cfg.header_aliases};
  data.train = load_split(cfg.train, opts, nullptr, log);
  data.dev = load_split(cfg.dev, opts, nullptr, log);
  data.test = load_split(cfg.test, opts, &data.test_keys, log);
  return data;
}

// ---------------------------------------------------------------------------
// Features per split

inline bool excluded(const std::string& name, const std::vector<std::string>& prefixes) {
  return std::any_of(prefixes.begin(), prefixes.end(),
                     [&](const std::string& p) { return name.compare(0, p.size(), p) == 0; });
}

struct GrainMatrix {
  Matrix X;
  std::vector<double> y;
  std::vector<std::string> ids;
};

inline GrainMatrix grain_matrix(const LabeledDataset& ds, Grain grain, const FeatureConfig& features,
                                const CategoryVocabulary& vocab, const std::vector<std::string>& exclude) {
  std::vector<const LabeledEvent*> items;
  for (const auto& it : ds.items) {
    if (it.grain == grain) items.push_back(&it);
  }
  GrainMatrix gm;
  Matrix full = extract_matrix(items, [](const LabeledEvent* e) -> const Event& { return e->event; }, features, vocab);
  gm.X = full.select_columns([&](const std::string& n) { return !excluded(n, exclude); });
  for (const auto* it : items) {
    gm.y.push_back(it->distance);
    gm.ids.push_back(it->event.id);
  }
  return gm;
}

// Mean nDCF over the standard conditions belonging to `grain`.
inline Metric grain_metric(Grain grain, const CostWeights& w) {
  return [grain, w](std::span<const double> pred, std::span<const double> truth) {
    double sum = 0.0;
    std::size_t n = 0;
    for (const auto& c : kStandardConditions) {
      if (c.grain != grain) continue;
      const auto r = miss_fa(pred, truth, c.threshold_d);
      sum += ndcf(r.p_miss, r.p_fa, w);
      ++n;
    }
    return sum / static_cast<double>(n);
  };
}

// Fits linear-approximation and Friis parameters on the training split's
// (mean RSSI, distance) pairs and writes them into the feature config.
inline RadioParams fit_radio_params(const LabeledDataset& train, const RadioParams& base, const SearchSpace& space,
                                    std::size_t jobs = 1) {
  std::vector<RadioSample> samples;
  for (const auto& it : train.items) {
    double sum = 0.0;
    std::size_t n = 0;
    for (const auto& r : it.event.readings) {
      if (r.kind != SensorKind::Bluetooth) continue;
      sum += r.values[0];
      ++n;
    }
    samples.push_back({sum / static_cast<double>(n), it.distance});
  }
  RadioParams params = base;
  const auto lin = fit_params(samples, RadioModel::LinearApprox, space, params, jobs);
  params.tx_ref = lin.params.tx_ref;
  params.n_exponent = lin.params.n_exponent;
  SearchSpace friis_space = space;
  friis_space.seed = derive_seed(space.seed, 1);
  const auto fr = fit_params(samples, RadioModel::Friis, friis_space, params, jobs);
  params.p_t = fr.params.p_t;
  params.g_t = fr.params.g_t;
  params.g_r = fr.params.g_r;
  params.lambda_m = fr.params.lambda_m;
  params.sys_loss = fr.params.sys_loss;
  return params;
}

// ---------------------------------------------------------------------------
// Protocol

struct GrainRun {
  Grain grain = Grain::Fine;
  GridResult grid;
  ModelSpec chosen;
  TreeEnsembleModel model;
  GrainMatrix test;
};

struct ExperimentResult {
  NdcfReport report;
  std::map<std::string, double> predictions;
  std::array<GrainRun, 2> grains;
  CategoryVocabulary vocab;
  FeatureConfig features;  // with fitted radio parameters
  std::vector<std::string> exclude_prefixes;
  std::size_t unseen_categories = 0;
};

inline ModelSpec seeded_spec(const ExperimentConfig& cfg, Grain grain) {
  ModelSpec spec = cfg.model;
  const auto s = derive_seed(cfg.seed, 100 + static_cast<std::uint64_t>(grain));
  spec.extra_trees.seed = s;
  spec.gbm.seed = s;
  return spec;
}

inline ExperimentResult run_experiment(const ExperimentConfig& cfg, const ExperimentData& data) {
  validate(cfg);
  ExperimentResult res;
  res.exclude_prefixes = cfg.exclude_prefixes;
  // Vocabulary and radio fits see the training split only.
  res.vocab = fit_vocabulary(data.train.items, [](const LabeledEvent& e) -> const DeviceContext& { return e.event.context; });
  res.features = cfg.features;
  if (cfg.fit_radio) {
    SearchSpace space = cfg.radio_search;
    space.seed = derive_seed(cfg.seed, 1);
    res.features.radio_params = fit_radio_params(data.train, cfg.features.radio_params, space, cfg.jobs);
  }

  for (Grain grain : {Grain::Fine, Grain::Coarse}) {
    auto& run = res.grains[static_cast<std::size_t>(grain)];
    run.grain = grain;
    auto train = grain_matrix(data.train, grain, res.features, res.vocab, cfg.exclude_prefixes);
    auto dev = grain_matrix(data.dev, grain, res.features, res.vocab, cfg.exclude_prefixes);
    run.test = grain_matrix(data.test, grain, res.features, res.vocab, cfg.exclude_prefixes);
    for (const auto* gm : {&train, &dev, &run.test}) {
      if (gm->X.rows == 0) fail(ErrorCode::EmptyGrain, "no " + std::string(grain_name(grain)) + " events in a split");
    }
    if (train.X.cols() == 0) fail(ErrorCode::BadConfig, "every feature is excluded");

    const ModelSpec base = seeded_spec(cfg, grain);
    const auto metric = grain_metric(grain, cfg.weights);
    run.grid = grid_search(base, cfg.grid, train.X, train.y, dev.X, dev.y, metric, cfg.jobs);
    run.chosen = apply_point(base, run.grid.best);

    Matrix X_all = train.X;
    X_all.append(dev.X);
    std::vector<double> y_all = train.y;
    y_all.insert(y_all.end(), dev.y.begin(), dev.y.end());
    run.model = fit_model(run.chosen, X_all, y_all, cfg.jobs);
    const auto pred = predict(run.model, run.test.X, cfg.jobs);
    for (std::size_t i = 0; i < pred.size(); ++i) {
      if (!res.predictions.emplace(run.test.ids[i], pred[i]).second) fail(ErrorCode::DuplicateId, run.test.ids[i]);
    }
  }
  res.report = evaluate(res.predictions, data.test_keys, cfg.weights);
  return res;
}

// ---------------------------------------------------------------------------
// Saved model bundle: both grain models plus everything needed to featurise.

inline constexpr std::string_view kBundleFormat = "proxdist-model";

inline std::vector<std::uint8_t> save_bundle(const ExperimentResult& res) {
  nlohmann::json j;
  j["format"] = kBundleFormat;
  j["version"] = kModelFormatVersion;
  j["features"] = feature_config_to_json(res.features);
  nlohmann::json levels = nlohmann::json::object();
  for (std::size_t f = 0; f < kContextFieldCount; ++f) levels[std::string(kContextFieldNames[f])] = res.vocab.levels[f];
  j["vocabulary"] = levels;
  j["exclude_prefixes"] = res.exclude_prefixes;
  j["models"] = {{"fine", model_to_json(res.grains[0].model)}, {"coarse", model_to_json(res.grains[1].model)}};
  return nlohmann::json::to_cbor(j);
}

struct ModelBundle {
  FeatureConfig features;
  CategoryVocabulary vocab;
  std::vector<std::string> exclude_prefixes;
  std::array<TreeEnsembleModel, 2> models;  // indexed by Grain
};

inline ModelBundle load_bundle(std::span<const std::uint8_t> bytes) {
  nlohmann::json j;
  try {
    j = nlohmann::json::from_cbor(bytes.begin(), bytes.end());
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCode::BadModel, e.what());
  }
  if (j.value("format", std::string()) != kBundleFormat) fail(ErrorCode::BadModel, "not a model bundle");
  if (j.value("version", 0) != kModelFormatVersion) fail(ErrorCode::BadModel, "unsupported bundle version");
  try {
    ModelBundle b;
    b.features = feature_config_from_json(j.at("features"));
    std::array<std::vector<std::string>, kContextFieldCount> levels;
    for (std::size_t f = 0; f < kContextFieldCount; ++f) {
      levels[f] = j.at("vocabulary").at(std::string(kContextFieldNames[f])).get<std::vector<std::string>>();
    }
    b.vocab = CategoryVocabulary::from_levels(levels);
    b.exclude_prefixes = j.at("exclude_prefixes").get<std::vector<std::string>>();
    b.models[0] = model_from_json(j.at("models").at("fine"));
    b.models[1] = model_from_json(j.at("models").at("coarse"));
    return b;
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCode::BadModel, e.what());
  }
}

// Predicts every event in `ds`, choosing the model by the event's grain.
inline std::map<std::string, double> predict_dataset(const ModelBundle& b, const LabeledDataset& ds,
                                                     std::size_t jobs = 1) {
  std::map<std::string, double> out;
  for (Grain grain : {Grain::Fine, Grain::Coarse}) {
    const auto gm = grain_matrix(ds, grain, b.features, b.vocab, b.exclude_prefixes);
    if (gm.X.rows == 0) continue;
    const auto pred = predict(b.models[static_cast<std::size_t>(grain)], gm.X, jobs);
    for (std::size_t i = 0; i < pred.size(); ++i) out[gm.ids[i]] = pred[i];
  }
  return out;
}

// ---------------------------------------------------------------------------
// Ablation

struct AblationEntry {
  std::string group;
  double score = 0.0;
  double delta = 0.0;  // ablated - baseline
};

struct AblationResult {
  double baseline_score = 0.0;
  NdcfReport baseline;
  std::vector<AblationEntry> groups;
};

// Retrains the full protocol once per removed group.
inline AblationResult run_ablation(const ExperimentConfig& cfg, const ExperimentData& data) {
  if (cfg.ablation_groups.empty()) fail(ErrorCode::EmptyGrid, "no ablation groups configured");
  AblationResult out;
  out.baseline = run_experiment(cfg, data).report;
  out.baseline_score = out.baseline.average_ndcf;
  for (const auto& g : cfg.ablation_groups) {
    ExperimentConfig c = cfg;
    c.exclude_prefixes.insert(c.exclude_prefixes.end(), g.prefixes.begin(), g.prefixes.end());
    const double score = run_experiment(c, data).report.average_ndcf;
    out.groups.push_back({g.name, score, score - out.baseline_score});
  }
  return out;
}

inline std::string ablation_to_csv(const AblationResult& r) {
  std::string out = "group,score,delta\n";
  out += "baseline," + text::format_double(r.baseline_score) + ",0\n";
  for (const auto& g : r.groups) {
    out += g.group + "," + text::format_double(g.score) + "," + text::format_double(g.delta) + "\n";
  }
  return out;
}

// ---------------------------------------------------------------------------
// Permutation importance

// importance[f] = mean over repeats of metric(X with column f shuffled) -
// metric(X). Repeat r of feature f draws from stream (derive(seed, f), r).
inline std::vector<double> permutation_importance(const TreeEnsembleModel& model, const Matrix& X,
                                                  std::span<const double> y, const Metric& metric,
                                                  std::size_t repeats, std::uint64_t seed, std::size_t jobs = 1) {
  check_schema(model, X);
  if (repeats < 1) fail(ErrorCode::BadConfig, "repeats must be >= 1");
  if (y.size() != X.rows) fail(ErrorCode::ShapeMismatch, "one label per row required");
  const double baseline = metric(predict(model, X), y);
  std::vector<double> importance(X.cols(), 0.0);
  parallel_for(X.cols(), jobs, [&](std::size_t f) {
    Matrix Xp = X;
    std::vector<double> column(X.rows);
    for (std::size_t r = 0; r < X.rows; ++r) column[r] = X.at(r, f);
    double total = 0.0;
    for (std::size_t rep = 0; rep < repeats; ++rep) {
      Rng rng(derive_seed(seed, f), rep);
      std::vector<double> shuffled = column;
      rng.shuffle(shuffled);
      for (std::size_t r = 0; r < X.rows; ++r) Xp.at(r, f) = shuffled[r];
      total += metric(predict(model, Xp), y) - baseline;
    }
    importance[f] = total / static_cast<double>(repeats);
  });
  return importance;
}

struct ImportanceRow {
  Grain grain = Grain::Fine;
  std::string feature;
  double importance = 0.0;
};

inline std::vector<ImportanceRow> experiment_importance(const ExperimentConfig& cfg, const ExperimentResult& res) {
  std::vector<ImportanceRow> rows;
  for (const auto& run : res.grains) {
    const auto imp = permutation_importance(run.model, run.test.X, run.test.y, grain_metric(run.grain, cfg.weights),
                                            cfg.importance_repeats,
                                            derive_seed(cfg.seed, 200 + static_cast<std::uint64_t>(run.grain)), cfg.jobs);
    for (std::size_t f = 0; f < imp.size(); ++f) rows.push_back({run.grain, run.test.X.schema[f], imp[f]});
  }
  return rows;
}

inline std::string importance_to_csv(const std::vector<ImportanceRow>& rows) {
  std::string out = "grain,feature,importance\n";
  for (const auto& r : rows) {
    out += std::string(grain_name(r.grain)) + "," + r.feature + "," + text::format_double(r.importance) + "\n";
  }
  return out;
}

}  // namespace proxdist
