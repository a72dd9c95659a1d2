#include <gtest/gtest.h>

#include "proxdist/config.hpp"
#include "support.hpp"

using namespace proxdist;

namespace {

ErrorCode code_of(auto&& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.code();
  }
  ADD_FAILURE() << "no error raised";
  return ErrorCode::Io;
}

}  // namespace

TEST(Config, DefaultsRoundTrip) {
  const ExperimentConfig def;
  const auto j = to_json(def);
  EXPECT_EQ(experiment_config_from_json(j), def);
  EXPECT_EQ(to_json(experiment_config_from_json(j)), j);
  EXPECT_EQ(experiment_config_from_json(json::object()), def);
}

TEST(Config, NonDefaultRoundTrip) {
  ExperimentConfig c;
  c.synthetic->shadowing_sigma = 12.0;
  c.synthetic->drift.enabled = true;
  c.seed = 99;
  c.exclude_prefixes = {"ble:"};
  c.grid = {{"n_trees", {10, 20}}};
  c.weights = {2.0, 0.5};
  c.importance_repeats = 3;
  EXPECT_EQ(experiment_config_from_json(to_json(c)), c);
}

TEST(Config, UnknownKeysRejected) {
  EXPECT_EQ(code_of([] { experiment_config_from_json(json{{"sede", 3}}); }), ErrorCode::BadConfig);
  EXPECT_EQ(code_of([] { experiment_config_from_json(json{{"model", {{"extra_trees", {{"trees", 3}}}}}}); }),
            ErrorCode::BadConfig);
  EXPECT_EQ(code_of([] { experiment_config_from_json(json{{"seed", "seven"}}); }), ErrorCode::BadConfig);
  EXPECT_EQ(code_of([] { experiment_config_from_json(json{{"model", {{"grid", {{"colour", {1}}}}}}}); }),
            ErrorCode::BadHyperparams);
}

TEST(Config, Overrides) {
  const auto lc = resolve_config(json::object(), {"seed=11", "model.extra_trees.n_trees=33", "synthetic.shadowing_sigma=0",
                                                  "exclude_prefixes=[\"ble:\"]", "output_dir=runs/a"});
  EXPECT_EQ(lc.config.seed, 11u);
  EXPECT_EQ(lc.config.model.extra_trees.n_trees, 33u);
  EXPECT_EQ(lc.config.synthetic->shadowing_sigma, 0.0);
  EXPECT_EQ(lc.config.exclude_prefixes, std::vector<std::string>{"ble:"});
  EXPECT_EQ(lc.config.output_dir, "runs/a");
  EXPECT_EQ(lc.resolved, to_json(lc.config));
}

TEST(Config, OverridesIntoOpenMaps) {
  const auto lc = resolve_config(json::object(), {"model.grid.n_trees=[5,10]", "synthetic.offsets.tx_power.high=2.5",
                                                  "corpus.header_aliases.Tx_Model=TXDevice"});
  EXPECT_EQ(lc.config.grid.at("n_trees"), (std::vector<double>{5, 10}));
  EXPECT_EQ(lc.config.synthetic->offsets.at("tx_power").at("high"), 2.5);
  EXPECT_EQ(lc.config.header_aliases.at("Tx_Model"), "TXDevice");
}

TEST(Config, BadOverrides) {
  EXPECT_EQ(code_of([] { resolve_config(json::object(), {"seed"}); }), ErrorCode::BadConfig);
  EXPECT_EQ(code_of([] { resolve_config(json::object(), {"nope.x=1"}); }), ErrorCode::BadConfig);
  EXPECT_EQ(code_of([] { resolve_config(json::object(), {"seed.x=1"}); }), ErrorCode::BadConfig);
  EXPECT_EQ(code_of([] { resolve_config(json::object(), {"synthetic.n_events=0"}); }), ErrorCode::BadSpec);
  EXPECT_EQ(code_of([] { resolve_config(json::object(), {"weights.w_miss=0"}); }), ErrorCode::BadConfig);
}

TEST(Config, OverrideRevivesNullSynthetic) {
  const auto lc = resolve_config(json{{"synthetic", nullptr},
                                      {"corpus",
                                       {{"train", {{"events", "a"}, {"keys", "a.tsv"}}},
                                        {"dev", {{"events", "b"}, {"keys", "b.tsv"}}},
                                        {"test", {{"events", "c"}, {"keys", "c.tsv"}}}}}},
                                 {"synthetic.seed=3"});
  ASSERT_TRUE(lc.config.synthetic.has_value());
  EXPECT_EQ(lc.config.synthetic->seed, 3u);
}

TEST(Config, CorpusPathsRequiredWithoutSynthetic) {
  EXPECT_EQ(code_of([] { experiment_config_from_json(json{{"synthetic", nullptr}}); }), ErrorCode::BadConfig);
}

TEST(Config, HashIgnoresJobsAndOutputDir) {
  const auto a = resolve_config(json::object(), {});
  const auto b = resolve_config(json::object(), {"jobs=8", "output_dir=elsewhere"});
  const auto c = resolve_config(json::object(), {"seed=8"});
  EXPECT_EQ(config_hash(a.resolved), config_hash(b.resolved));
  EXPECT_NE(config_hash(a.resolved), config_hash(c.resolved));
  EXPECT_EQ(config_hash(a.resolved).size(), 16u);
}

TEST(Config, LoadFromFile) {
  testsupport::TempDir dir("config");
  EXPECT_EQ(code_of([&] { load_config(dir.path() / "missing.json", {}); }), ErrorCode::Io);

  write_file(dir.path() / "broken.json", "{ not json");
  EXPECT_EQ(code_of([&] { load_config(dir.path() / "broken.json", {}); }), ErrorCode::BadConfig);

  write_file(dir.path() / "sub" / "c.json", R"({"synthetic": null, "corpus": {
    "train": {"events": "data/train", "keys": "data/train.tsv"},
    "dev": {"events": "data/dev", "keys": "/abs/dev.tsv"},
    "test": {"events": "data/test", "keys": "data/test.tsv"}}})");
  const auto lc = load_config(dir.path() / "sub" / "c.json", {"seed=5"});
  EXPECT_EQ(lc.config.seed, 5u);
  EXPECT_EQ(lc.config.train.events, (dir.path() / "sub" / "data" / "train").lexically_normal().string());
  EXPECT_EQ(lc.config.dev.keys, "/abs/dev.tsv");
}
