#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <unistd.h>

#include "proxdist/config.hpp"
#include "proxdist/pipeline.hpp"

using namespace proxdist;

namespace {

ExperimentConfig small_config(std::size_t n_events = 30) {
  ExperimentConfig c;
  c.synthetic->n_events = n_events;
  c.synthetic->looks = 3;
  c.synthetic->rssi_per_look = 10;
  c.synthetic->imu_per_look = 3;
  c.radio_search.iterations = 60;
  c.model.extra_trees.n_trees = 40;
  c.grid = {{"min_samples_split", {2, 8}}};
  c.importance_repeats = 3;
  return c;
}

std::string report_bytes(const NdcfReport& r) { return report_to_json(r).dump(); }

}  // namespace

TEST(Pipeline, DeterministicAcrossRunsAndJobs) {
  auto cfg = small_config();
  const auto data = load_data(cfg);
  const auto a = run_experiment(cfg, data);
  cfg.jobs = 3;
  const auto b = run_experiment(cfg, load_data(cfg));
  EXPECT_EQ(write_predictions(a.predictions), write_predictions(b.predictions));
  EXPECT_EQ(report_bytes(a.report), report_bytes(b.report));
  EXPECT_EQ(save_bundle(a), save_bundle(b));
}

TEST(Pipeline, StrongSignalScoresWell) {
  auto cfg = small_config(80);
  cfg.synthetic->looks = 5;
  cfg.synthetic->rssi_per_look = 20;
  const auto res = run_experiment(cfg, load_data(cfg));
  EXPECT_LE(res.report.average_ndcf, 0.15);
}

TEST(Pipeline, PredictionTableCoversEveryTestIdOnce) {
  const auto cfg = small_config(10);
  const auto data = load_data(cfg);
  const auto res = run_experiment(cfg, data);
  ASSERT_EQ(res.predictions.size(), data.test_keys.entries.size());
  for (const auto& [id, e] : data.test_keys.entries) EXPECT_EQ(res.predictions.count(id), 1u) << id;
  for (const auto& [id, d] : res.predictions) EXPECT_TRUE(distance_class_index(d).has_value());
}

TEST(Pipeline, VocabularyAndRadioSeeTrainOnly) {
  const auto cfg = small_config(10);
  auto data = load_data(cfg);
  for (auto* split : {&data.dev, &data.test}) {
    for (auto& it : split->items) it.event.context.tx_model = "dev_only_phone";
  }
  const auto res = run_experiment(cfg, data);
  const auto train_only =
      fit_vocabulary(data.train.items, [](const LabeledEvent& e) -> const DeviceContext& { return e.event.context; });
  EXPECT_EQ(res.vocab, train_only);
  const auto& tx = res.vocab.levels[0];
  EXPECT_EQ(std::find(tx.begin(), tx.end(), "dev_only_phone"), tx.end());

  // Corrupting dev/test RSSI must not move the radio fit.
  auto noisy = data;
  for (auto* split : {&noisy.dev, &noisy.test}) {
    for (auto& it : split->items) {
      for (auto& r : it.event.readings) {
        if (r.kind == SensorKind::Bluetooth) r.values[0] -= 30.0;
      }
    }
  }
  EXPECT_EQ(run_experiment(cfg, noisy).features.radio_params, res.features.radio_params);
}

TEST(Pipeline, RandomLabelsMatchAnalyticExpectation) {
  auto cfg = small_config(60);
  cfg.synthetic->shuffle_labels = true;
  const auto data = load_data(cfg);
  const auto res = run_experiment(cfg, data);
  // For predictions independent of the truth, P(predict contact | truth) = q
  // whatever the truth, so E[nDCF] = w_miss (1 - q) + w_fa q per condition.
  double expected = 0.0;
  for (const auto& c : kStandardConditions) {
    std::size_t n = 0, pc = 0;
    for (const auto& [id, e] : data.test_keys.entries) {
      if (e.grain != c.grain) continue;
      ++n;
      pc += is_contact(res.predictions.at(id), c.threshold_d);
    }
    const double q = static_cast<double>(pc) / static_cast<double>(n);
    expected += (cfg.weights.w_miss * (1.0 - q) + cfg.weights.w_fa * q) / 4.0;
  }
  EXPECT_DOUBLE_EQ(expected, 1.0);  // default unit weights
  EXPECT_NEAR(res.report.average_ndcf, expected, 0.1);
}

TEST(Pipeline, ShadowingMonotone) {
  double prev = -1.0;
  for (double sigma : {0.0, 4.0, 12.0, 40.0}) {
    auto cfg = small_config(40);
    cfg.synthetic->shadowing_sigma = sigma;
    cfg.synthetic->imu.clear();  // RSSI is then the only signal
    const double s = run_experiment(cfg, load_data(cfg)).report.average_ndcf;
    EXPECT_GE(s, prev) << "sigma " << sigma;
    prev = s;
  }
}

TEST(Pipeline, EmptyGrain) {
  const auto cfg = small_config(5);
  auto data = load_data(cfg);
  std::erase_if(data.dev.items, [](const LabeledEvent& e) { return e.grain == Grain::Coarse; });
  try {
    run_experiment(cfg, data);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::EmptyGrain);
  }
}

TEST(Pipeline, ExcludingEverythingIsAConfigError) {
  auto cfg = small_config(5);
  cfg.exclude_prefixes = {""};
  try {
    run_experiment(cfg, load_data(cfg));
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::BadConfig);
  }
}

TEST(Pipeline, ExclusionRemovesColumns) {
  auto cfg = small_config(5);
  cfg.exclude_prefixes = {"ble:", "radio:"};
  const auto res = run_experiment(cfg, load_data(cfg));
  for (const auto& name : res.grains[0].model.schema) {
    EXPECT_FALSE(name.rfind("ble:", 0) == 0 || name.rfind("radio:", 0) == 0) << name;
  }
}

TEST(Bundle, RoundTripPredictsIdentically) {
  const auto cfg = small_config(10);
  const auto data = load_data(cfg);
  const auto res = run_experiment(cfg, data);
  const auto bytes = save_bundle(res);
  const auto b = load_bundle(bytes);
  EXPECT_EQ(b.vocab, res.vocab);
  EXPECT_EQ(b.features, res.features);
  EXPECT_EQ(predict_dataset(b, data.test), res.predictions);

  auto broken = bytes;
  broken.resize(broken.size() / 2);
  EXPECT_THROW(load_bundle(broken), Error);
  const auto not_bundle = nlohmann::json::to_cbor(nlohmann::json{{"format", "other"}});
  EXPECT_THROW(load_bundle(not_bundle), Error);
}

TEST(Ablation, BaselineMatchesRunExperiment) {
  auto cfg = small_config(10);
  cfg.ablation_groups = {{"Magnetometer", {"Magnetometer:"}}, {"categorical", {"cat:"}}};
  const auto data = load_data(cfg);
  const auto ab = run_ablation(cfg, data);
  EXPECT_EQ(report_bytes(ab.baseline), report_bytes(run_experiment(cfg, data).report));
  ASSERT_EQ(ab.groups.size(), 2u);
  EXPECT_EQ(ab.groups[0].group, "Magnetometer");
  for (const auto& g : ab.groups) EXPECT_DOUBLE_EQ(g.delta, g.score - ab.baseline_score);
  const auto csv = ablation_to_csv(ab);
  EXPECT_EQ(csv.rfind("group,score,delta\nbaseline,", 0), 0u);
  EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 4);
}

TEST(Ablation, ZeroGroupsIsAnError) {
  auto cfg = small_config(5);
  cfg.ablation_groups.clear();
  try {
    run_ablation(cfg, load_data(cfg));
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::EmptyGrid);
  }
}

TEST(Importance, LabelFeatureDominatesAndConstantIsZero) {
  Rng rng(71, 0);
  Matrix X;
  X.schema = {"noise", "label", "constant"};
  std::vector<double> y;
  for (int i = 0; i < 200; ++i) {
    const std::size_t cls = rng.below(4);
    X.append_row(std::vector<double>{rng.normal(0.0, 1.0), static_cast<double>(cls), 5.0});
    y.push_back(kDistanceClasses[cls]);
  }
  ExtraTreesHyperparams hp;
  hp.n_trees = 30;
  hp.seed = 3;
  const auto model = fit_extra_trees(X, y, hp);
  const auto imp = permutation_importance(model, X, y, grain_metric(Grain::Fine, {}), 5, 9);
  ASSERT_EQ(imp.size(), 3u);
  EXPECT_GT(imp[1], imp[0]);
  EXPECT_GT(imp[1], 0.3);
  EXPECT_EQ(imp[2], 0.0);
  EXPECT_EQ(imp, permutation_importance(model, X, y, grain_metric(Grain::Fine, {}), 5, 9, 3));
}

TEST(Importance, Errors) {
  Matrix X;
  X.schema = {"a"};
  X.append_row(std::vector<double>{1.0});
  X.append_row(std::vector<double>{2.0});
  const std::vector<double> y = {1.2, 4.5};
  ExtraTreesHyperparams hp;
  hp.n_trees = 2;
  const auto model = fit_extra_trees(X, y, hp);
  EXPECT_THROW(permutation_importance(model, X, y, grain_metric(Grain::Fine, {}), 0, 1), Error);
  Matrix other = X;
  other.schema = {"b"};
  try {
    permutation_importance(model, other, y, grain_metric(Grain::Fine, {}), 1, 1);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::SchemaMismatch);
  }
}

TEST(Importance, StableAcrossSeedsOnSyntheticCorpus) {
  auto cfg = small_config(200);  // the end-to-end corpus size
  cfg.synthetic->looks = 5;
  cfg.synthetic->rssi_per_look = 20;
  cfg.model.extra_trees.n_trees = 60;
  cfg.grid = {{"min_samples_split", {2}}};
  const auto res = run_experiment(cfg, load_data(cfg));
  for (const auto& run : res.grains) {
    const auto metric = grain_metric(run.grain, cfg.weights);
    const auto a = permutation_importance(run.model, run.test.X, run.test.y, metric, 20, 1);
    const auto b = permutation_importance(run.model, run.test.X, run.test.y, metric, 20, 2);
    const double top = *std::max_element(a.begin(), a.end());
    ASSERT_GT(top, 0.0);
    std::size_t checked = 0;
    for (std::size_t f = 0; f < a.size(); ++f) {
      if (a[f] < 0.25 * top) continue;  // relative error is meaningless near zero
      ++checked;
      EXPECT_NEAR(b[f], a[f], 0.2 * a[f]) << run.test.X.schema[f];
    }
    EXPECT_GE(checked, 1u);
  }
}

TEST(Importance, ExperimentRowsCoverBothGrains) {
  const auto cfg = small_config(10);
  const auto res = run_experiment(cfg, load_data(cfg));
  const auto rows = experiment_importance(cfg, res);
  EXPECT_EQ(rows.size(), res.grains[0].test.X.cols() + res.grains[1].test.X.cols());
  const auto csv = importance_to_csv(rows);
  EXPECT_EQ(csv.rfind("grain,feature,importance\nfine,", 0), 0u);
}

TEST(Pipeline, OnDiskCorpusMatchesInMemory) {
  auto cfg = small_config(5);
  const auto splits = generate_splits(*cfg.synthetic);
  const auto dir = std::filesystem::temp_directory_path() / ("proxdist_pipe_" + std::to_string(::getpid()));
  std::filesystem::remove_all(dir);
  auto put = [&](const SyntheticCorpus& c, const char* name, SplitPaths& sp) {
    save_events(dir / name, c.events);
    write_file(dir / (std::string(name) + ".tsv"), write_key(c.keys));
    sp = {(dir / name).string(), (dir / (std::string(name) + ".tsv")).string()};
  };
  ExperimentConfig disk = cfg;
  disk.synthetic.reset();
  put(splits.train, "train", disk.train);
  put(splits.dev, "dev", disk.dev);
  put(splits.test, "test", disk.test);
  const auto a = run_experiment(cfg, load_data(cfg));
  const auto b = run_experiment(disk, load_data(disk));
  std::filesystem::remove_all(dir);
  EXPECT_EQ(write_predictions(a.predictions), write_predictions(b.predictions));
}
