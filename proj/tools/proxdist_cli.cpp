// proxdist: distance-class estimation from BLE RSSI and IMU logs.
//
// Exit status: 0 success, 1 usage/config error, 2 data error, 3 internal error.

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "proxdist/config.hpp"
#include "proxdist/pipeline.hpp"
#include "proxdist/radio.hpp"
#include "proxdist/scoring.hpp"
#include "proxdist/synth.hpp"

namespace fs = std::filesystem;
using namespace proxdist;

namespace {

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct Common {
  std::string config;
  std::vector<std::string> sets;
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> jobs;
  std::string out;
  int verbosity = 0;
};

void add_common(CLI::App* app, Common& c, bool config_required = true) {
  auto* opt = app->add_option("--config", c.config, "Experiment-config JSON document");
  if (config_required) opt->required();
  app->add_option("--set", c.sets, "Override a config value: dotted.key=value (repeatable)");
  app->add_option("--seed", c.seed, "Override the master seed");
  app->add_option("--jobs", c.jobs, "Worker-thread bound (0 = all cores)");
  app->add_option("--out", c.out, "Output directory (overrides output_dir)");
  app->add_flag("-v,--verbose", c.verbosity, "More diagnostics on standard error");
}

LoadedConfig resolve(const Common& c) {
  if (!c.config.empty() && !fs::exists(c.config)) throw UsageError("config file not found: " + c.config);
  std::vector<std::string> sets = c.sets;
  if (c.seed) sets.push_back("seed=" + std::to_string(*c.seed));
  if (c.jobs) sets.push_back("jobs=" + std::to_string(*c.jobs));
  if (!c.out.empty()) sets.push_back("output_dir=" + nlohmann::json(c.out).dump());
  LoadedConfig lc = c.config.empty() ? resolve_config(nlohmann::json::object(), sets) : load_config(c.config, sets);
  if (lc.config.output_dir.empty()) lc.config.output_dir = "out";
  std::cout << "config_hash=" << config_hash(lc.resolved) << " seed=" << lc.config.seed << "\n";
  return lc;
}

fs::path out_dir(const ExperimentConfig& cfg) {
  fs::path p(cfg.output_dir);
  fs::create_directories(p);
  return p;
}

void write_json(const fs::path& p, const nlohmann::json& j) { write_file(p, j.dump(2) + "\n"); }

void write_bytes(const fs::path& p, const std::vector<std::uint8_t>& bytes) {
  write_file(p, std::string_view(reinterpret_cast<const char*>(bytes.data()), bytes.size()));
}

std::string run_log(const LoadedConfig& lc, const ExperimentResult* res) {
  std::string log = "config_hash " + config_hash(lc.resolved) + "\n";
  log += "seed " + std::to_string(lc.config.seed) + "\n";
  log += "grid " + nlohmann::json(lc.config.grid).dump() + "\n";
  if (res) {
    for (const auto& run : res->grains) {
      log += std::string(grain_name(run.grain)) + " selected " + nlohmann::json(run.grid.best).dump() + "\n";
      for (const auto& row : run.grid.table) {
        log += std::string(grain_name(run.grain)) + " dev " + nlohmann::json(row.point).dump() + " " +
               text::format_double(row.score) + "\n";
      }
    }
    log += "radio_params " + to_json(res->features.radio_params).dump() + "\n";
    log += "unseen_test_categories " + std::to_string(res->unseen_categories) + "\n";
    log += "average_ndcf " + text::format_double(res->report.average_ndcf) + "\n";
  }
  return log;
}

const SplitPaths& split_paths(const ExperimentConfig& cfg, const std::string& split) {
  if (split == "train") return cfg.train;
  if (split == "dev") return cfg.dev;
  if (split == "test") return cfg.test;
  throw UsageError("--split must be train, dev or test");
}

const LabeledDataset& split_data(const ExperimentData& d, const std::string& split) {
  if (split == "train") return d.train;
  if (split == "dev") return d.dev;
  if (split == "test") return d.test;
  throw UsageError("--split must be train, dev or test");
}

// ---------------------------------------------------------------------------

int cmd_gen(const Common& c) {
  const auto lc = resolve(c);
  if (!lc.config.synthetic) throw UsageError("gen needs a `synthetic` section in the config");
  const auto dir = out_dir(lc.config);
  const auto splits = generate_splits(*lc.config.synthetic, lc.config.jobs);
  ExperimentConfig on_disk = lc.config;
  on_disk.synthetic.reset();
  on_disk.output_dir.clear();
  for (auto [name, corpus, paths] : {std::tuple{"train", &splits.train, &on_disk.train},
                                     std::tuple{"dev", &splits.dev, &on_disk.dev},
                                     std::tuple{"test", &splits.test, &on_disk.test}}) {
    save_events(dir / name / "events", corpus->events);
    write_file(dir / name / "keys.tsv", write_key(corpus->keys));
    paths->events = std::string(name) + "/events";
    paths->keys = std::string(name) + "/keys.tsv";
    std::cout << name << ": " << corpus->events.size() << " events\n";
  }
  write_json(dir / "config.json", to_json(on_disk));
  std::cout << "wrote " << (dir / "config.json").string() << "\n";
  return 0;
}

int cmd_extract(const Common& c, const std::string& split) {
  const auto lc = resolve(c);
  const auto& cfg = lc.config;
  const auto data = load_data(cfg);
  auto vocab = fit_vocabulary(data.train.items, [](const LabeledEvent& e) -> const DeviceContext& { return e.event.context; });
  FeatureConfig features = cfg.features;
  if (cfg.fit_radio) {
    SearchSpace space = cfg.radio_search;
    space.seed = derive_seed(cfg.seed, 1);
    features.radio_params = fit_radio_params(data.train, cfg.features.radio_params, space, cfg.jobs);
  }
  const auto& ds = split_data(data, split);
  Matrix m = extract_matrix(ds.items, [](const LabeledEvent& e) -> const Event& { return e.event; }, features, vocab);
  m = m.select_columns([&](const std::string& n) { return !excluded(n, cfg.exclude_prefixes); });
  std::vector<std::string> ids;
  for (const auto& it : ds.items) ids.push_back(it.event.id);
  const auto path = out_dir(cfg) / ("features_" + split + ".csv");
  write_file(path, matrix_to_csv(m, ids));
  std::cout << "wrote " << path.string() << " (" << m.rows << " x " << m.cols() << ")\n";
  return 0;
}

int cmd_fit_radio(const Common& c) {
  const auto lc = resolve(c);
  const auto& cfg = lc.config;
  const auto data = load_data(cfg);
  std::vector<RadioSample> samples;
  for (const auto& it : data.train.items) {
    std::vector<double> rssi;
    for (const auto& r : it.event.readings) {
      if (r.kind == SensorKind::Bluetooth) rssi.push_back(r.values[0]);
    }
    samples.push_back({summarize(rssi).mean, it.distance});
  }
  SearchSpace space = cfg.radio_search;
  space.seed = derive_seed(cfg.seed, 1);
  const auto lin = fit_params(samples, RadioModel::LinearApprox, space, cfg.features.radio_params, cfg.jobs);
  SearchSpace friis_space = space;
  friis_space.seed = derive_seed(space.seed, 1);
  const auto fr = fit_params(samples, RadioModel::Friis, friis_space, cfg.features.radio_params, cfg.jobs);
  const RadioParams merged = fit_radio_params(data.train, cfg.features.radio_params, space, cfg.jobs);

  nlohmann::json doc = {{"linear_approx", {{"params", to_json(lin.params)}, {"loss", lin.loss}}},
                        {"friis", {{"params", to_json(fr.params)}, {"loss", fr.loss}}},
                        {"radio_params", to_json(merged)}};
  const auto dir = out_dir(cfg);
  write_json(dir / "radio.json", doc);
  // Frozen config: the fitted parameters become fixed feature inputs.
  nlohmann::json frozen = lc.resolved;
  frozen["features"]["radio_params"] = to_json(merged);
  frozen["radio"]["fit"] = false;
  frozen["output_dir"] = "";
  write_json(dir / "config.frozen.json", frozen);
  std::printf("linear_approx  tx_ref=%.3f n=%.4f  mean|d-d'|=%.4f m\n", lin.params.tx_ref, lin.params.n_exponent, lin.loss);
  std::printf("friis          p_t=%.3f g_t=%.3f g_r=%.3f L=%.3f  mean|d-d'|=%.4f m\n", fr.params.p_t, fr.params.g_t,
              fr.params.g_r, fr.params.sys_loss, fr.loss);
  return 0;
}

int cmd_train(const Common& c) {
  const auto lc = resolve(c);
  const auto& cfg = lc.config;
  const auto data = load_data(cfg);
  const auto res = run_experiment(cfg, data);
  const auto dir = out_dir(cfg);
  write_file(dir / "predictions.tsv", write_predictions(res.predictions));
  write_json(dir / "report.json", report_to_json(res.report));
  write_bytes(dir / "model.bin", save_bundle(res));
  write_file(dir / "run.log", run_log(lc, &res));
  write_json(dir / "config.resolved.json", lc.resolved);
  std::cout << report_to_text(res.report);
  return 0;
}

int cmd_predict(const Common& c, const std::string& model_path, const std::string& split) {
  const auto lc = resolve(c);
  const auto& cfg = lc.config;
  const auto bytes = read_file(model_path);
  const auto bundle = load_bundle(std::span(reinterpret_cast<const std::uint8_t*>(bytes.data()), bytes.size()));
  LabeledDataset ds;
  if (cfg.synthetic) {
    ds = split_data(load_data(cfg), split);
  } else {
    ds = load_split(split_paths(cfg, split), ParseOptions{cfg.strict_parsing, cfg.header_aliases});
  }
  const auto preds = predict_dataset(bundle, ds, cfg.jobs);
  const auto path = out_dir(cfg) / "predictions.tsv";
  write_file(path, write_predictions(preds));
  std::cout << "wrote " << path.string() << " (" << preds.size() << " predictions)\n";
  return 0;
}

int cmd_score(const Common& c, const std::string& pred_path, const std::string& keys_path) {
  const auto lc = resolve(c);
  const auto preds = parse_predictions(read_file(pred_path));
  const auto keys = parse_key(read_file(keys_path));
  const auto report = evaluate(preds, keys, lc.config.weights);
  std::cout << report_to_text(report);
  if (!c.out.empty()) write_json(out_dir(lc.config) / "report.json", report_to_json(report));
  return 0;
}

int cmd_ablate(const Common& c) {
  const auto lc = resolve(c);
  const auto& cfg = lc.config;
  const auto data = load_data(cfg);
  const auto result = run_ablation(cfg, data);
  const auto dir = out_dir(cfg);
  write_file(dir / "ablation.csv", ablation_to_csv(result));
  write_json(dir / "report.json", report_to_json(result.baseline));
  write_file(dir / "run.log", run_log(lc, nullptr));
  std::printf("%-16s %8s %8s\n", "group", "nDCF", "delta");
  std::printf("%-16s %8.4f %8s\n", "baseline", result.baseline_score, "-");
  for (const auto& g : result.groups) std::printf("%-16s %8.4f %+8.4f\n", g.group.c_str(), g.score, g.delta);
  return 0;
}

int cmd_importance(const Common& c) {
  const auto lc = resolve(c);
  const auto& cfg = lc.config;
  const auto data = load_data(cfg);
  const auto res = run_experiment(cfg, data);
  auto rows = experiment_importance(cfg, res);
  const auto dir = out_dir(cfg);
  write_file(dir / "importance.csv", importance_to_csv(rows));
  write_json(dir / "report.json", report_to_json(res.report));
  std::stable_sort(rows.begin(), rows.end(), [](const ImportanceRow& a, const ImportanceRow& b) { return a.importance > b.importance; });
  for (std::size_t i = 0; i < std::min<std::size_t>(rows.size(), 15); ++i) {
    std::printf("%-7s %-28s %+.4f\n", std::string(grain_name(rows[i].grain)).c_str(), rows[i].feature.c_str(), rows[i].importance);
  }
  return 0;
}

// Horizontal bar chart of label -> value as a standalone SVG.
std::string bar_chart_svg(const std::string& title, const std::vector<std::pair<std::string, double>>& bars) {
  const int row_h = 22, label_w = 220, plot_w = 420, top = 40;
  const int height = top + row_h * static_cast<int>(bars.size()) + 20;
  double lim = 1e-12;
  for (const auto& [l, v] : bars) lim = std::max(lim, std::abs(v));
  std::string svg = "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" + std::to_string(label_w + plot_w + 90) +
                    "\" height=\"" + std::to_string(height) + "\" font-family=\"sans-serif\" font-size=\"12\">\n";
  svg += "<text x=\"10\" y=\"20\" font-size=\"14\">" + title + "</text>\n";
  const double zero = label_w + plot_w / 2.0;
  svg += "<line x1=\"" + text::format_double(zero) + "\" y1=\"" + std::to_string(top - 5) + "\" x2=\"" +
         text::format_double(zero) + "\" y2=\"" + std::to_string(height - 15) + "\" stroke=\"#333\"/>\n";
  for (std::size_t i = 0; i < bars.size(); ++i) {
    const auto& [label, v] = bars[i];
    const int y = top + row_h * static_cast<int>(i);
    const double w = std::abs(v) / lim * (plot_w / 2.0 - 5);
    const double x = v >= 0 ? zero : zero - w;
    char val[32];
    std::snprintf(val, sizeof(val), "%+.4f", v);
    svg += "<text x=\"10\" y=\"" + std::to_string(y + 14) + "\">" + label + "</text>\n";
    svg += "<rect x=\"" + text::format_double(x) + "\" y=\"" + std::to_string(y + 3) + "\" width=\"" +
           text::format_double(w) + "\" height=\"" + std::to_string(row_h - 6) + "\" fill=\"" +
           (v >= 0 ? "#c0392b" : "#2e86c1") + "\"/>\n";
    svg += "<text x=\"" + std::to_string(label_w + plot_w + 5) + "\" y=\"" + std::to_string(y + 14) + "\">" + val + "</text>\n";
  }
  svg += "</svg>\n";
  return svg;
}

int cmd_report(const Common& c, const std::vector<std::string>& runs) {
  const auto lc = resolve(c);
  if (runs.empty()) throw UsageError("report needs at least one --runs directory");
  std::string table, csv = "run,fine_1.2,fine_1.8,fine_3.0,coarse_1.8,average\n";
  char buf[256];
  std::snprintf(buf, sizeof(buf), "%-24s %9s %9s %9s %11s %9s\n", "run", "fine 1.2", "fine 1.8", "fine 3.0",
                "coarse 1.8", "average");
  table += buf;
  std::vector<std::pair<std::string, double>> ranking;
  for (const auto& r : runs) {
    const fs::path dir(r);
    const auto report = report_from_json(nlohmann::json::parse(read_file(dir / "report.json")));
    std::string name = dir.filename().string();
    if (name.empty()) name = dir.parent_path().filename().string();
    const auto& cs = report.conditions;
    std::snprintf(buf, sizeof(buf), "%-24s %9.3f %9.3f %9.3f %11.3f %9.3f\n", name.c_str(), cs[0].ndcf, cs[1].ndcf,
                  cs[2].ndcf, cs[3].ndcf, report.average_ndcf);
    table += buf;
    csv += name;
    for (const auto& s : cs) csv += "," + text::format_double(s.ndcf);
    csv += "," + text::format_double(report.average_ndcf) + "\n";
    ranking.emplace_back(name, report.average_ndcf);

    if (fs::exists(dir / "ablation.csv")) {
      std::vector<std::pair<std::string, double>> bars;
      const auto lines = text::lines(read_file(dir / "ablation.csv"));
      for (std::size_t i = 2; i < lines.size(); ++i) {
        const auto cols = text::split(lines[i], ',');
        if (cols.size() == 3) bars.emplace_back(std::string(cols[0]), text::parse_double(cols[2]).value_or(0.0));
      }
      write_file(out_dir(lc.config) / (name + "_ablation.svg"), bar_chart_svg("Ablation: nDCF change when a group is removed (" + name + ")", bars));
    }
    if (fs::exists(dir / "importance.csv")) {
      std::vector<std::pair<std::string, double>> bars;
      const auto lines = text::lines(read_file(dir / "importance.csv"));
      for (std::size_t i = 1; i < lines.size(); ++i) {
        const auto cols = text::split(lines[i], ',');
        if (cols.size() == 3) bars.emplace_back(std::string(cols[0]) + " " + std::string(cols[1]), text::parse_double(cols[2]).value_or(0.0));
      }
      std::stable_sort(bars.begin(), bars.end(), [](const auto& a, const auto& b) { return a.second > b.second; });
      if (bars.size() > 20) bars.resize(20);
      write_file(out_dir(lc.config) / (name + "_importance.svg"), bar_chart_svg("Permutation importance (" + name + ")", bars));
    }
  }
  // Feature-set comparison: runs ordered by average nDCF.
  std::stable_sort(ranking.begin(), ranking.end(), [](const auto& a, const auto& b) { return a.second < b.second; });
  table += "\nfeature set / run            nDCF\n";
  for (const auto& [name, v] : ranking) {
    std::snprintf(buf, sizeof(buf), "%-28s %.3f\n", name.c_str(), v);
    table += buf;
  }
  const auto dir = out_dir(lc.config);
  write_file(dir / "report_table.txt", table);
  write_file(dir / "report_table.csv", csv);
  std::cout << table;
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"proxdist: estimate phone-to-phone distance class from BLE RSSI and IMU logs", "proxdist"};
  app.require_subcommand(1);
  Common common;
  std::string split = "test", model_path, pred_path, keys_path;
  std::vector<std::string> runs;

  auto* gen = app.add_subcommand("gen", "Generate a synthetic train/dev/test corpus");
  add_common(gen, common);
  auto* extract = app.add_subcommand("extract", "Export a split's feature matrix as CSV");
  add_common(extract, common);
  extract->add_option("--split", split, "train, dev or test")->capture_default_str();
  auto* fit_radio = app.add_subcommand("fit-radio", "Fit radio-propagation parameters on the training split");
  add_common(fit_radio, common);
  auto* train = app.add_subcommand("train", "Grid search, refit on train+dev, predict and score test");
  add_common(train, common);
  auto* predict_cmd = app.add_subcommand("predict", "Predict distance classes with a saved model");
  add_common(predict_cmd, common);
  predict_cmd->add_option("--model", model_path, "model.bin written by train")->required();
  predict_cmd->add_option("--split", split, "train, dev or test")->capture_default_str();
  auto* score = app.add_subcommand("score", "Score a prediction TSV against a key file");
  add_common(score, common, false);
  score->add_option("--pred", pred_path, "Prediction TSV (id, distance)")->required();
  score->add_option("--keys", keys_path, "Key TSV (id, distance, step_size, grain)")->required();
  auto* ablate = app.add_subcommand("ablate", "Retrain with each ablation group removed");
  add_common(ablate, common);
  auto* importance = app.add_subcommand("importance", "Permutation feature importance on the test split");
  add_common(importance, common);
  auto* report = app.add_subcommand("report", "Tabulate stored runs and render charts");
  add_common(report, common, false);
  report->add_option("--runs", runs, "Run directories containing report.json")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 1;
  }

  try {
    if (*gen) return cmd_gen(common);
    if (*extract) return cmd_extract(common, split);
    if (*fit_radio) return cmd_fit_radio(common);
    if (*train) return cmd_train(common);
    if (*predict_cmd) return cmd_predict(common, model_path, split);
    if (*score) return cmd_score(common, pred_path, keys_path);
    if (*ablate) return cmd_ablate(common);
    if (*importance) return cmd_importance(common);
    if (*report) return cmd_report(common, runs);
  } catch (const UsageError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return is_config_error(e.code()) ? 1 : 2;
  } catch (const std::exception& e) {
    std::cerr << "internal error: " << e.what() << "\n";
    return 3;
  }
  return 1;
}
