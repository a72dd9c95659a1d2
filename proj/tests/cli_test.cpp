#include <gtest/gtest.h>

#include <sys/wait.h>

#include <array>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <string>

#include "proxdist/corpus.hpp"
#include "proxdist/scoring.hpp"
#include "support.hpp"

namespace fs = std::filesystem;

namespace {

struct Run {
  int status = -1;
  std::string out;  // stdout and stderr interleaved
};

Run run(const std::string& args) {
  const std::string cmd = std::string(PROXDIST_CLI) + " " + args + " 2>&1";
  Run r;
  FILE* p = ::popen(cmd.c_str(), "r");
  if (!p) return r;
  std::array<char, 4096> buf;
  std::size_t n;
  while ((n = std::fread(buf.data(), 1, buf.size(), p)) > 0) r.out.append(buf.data(), n);
  const int st = ::pclose(p);
  r.status = WIFEXITED(st) ? WEXITSTATUS(st) : -1;
  return r;
}

std::string q(const fs::path& p) { return "'" + p.string() + "'"; }

std::string small_config() { return q(fs::path(PROXDIST_EXAMPLES) / "small.json"); }

}  // namespace

class HelpSnapshot : public ::testing::TestWithParam<std::string> {};

TEST_P(HelpSnapshot, MatchesStoredText) {
  const std::string sub = GetParam();
  const auto r = run(sub.empty() ? "--help" : sub + " --help");
  EXPECT_EQ(r.status, 0);
  const fs::path file = fs::path(PROXDIST_SNAPSHOTS) / ((sub.empty() ? "main" : sub) + ".txt");
  if (std::getenv("PROXDIST_UPDATE_SNAPSHOTS")) proxdist::write_file(file, r.out);
  ASSERT_TRUE(fs::exists(file)) << "missing snapshot " << file << "; rerun with PROXDIST_UPDATE_SNAPSHOTS=1";
  EXPECT_EQ(r.out, proxdist::read_file(file));
}

INSTANTIATE_TEST_SUITE_P(Cli, HelpSnapshot,
                         ::testing::Values("", "gen", "extract", "fit-radio", "train", "predict", "score", "ablate",
                                           "importance", "report"),
                         [](const auto& info) {
                           std::string n = info.param.empty() ? "main" : info.param;
                           for (auto& c : n) {
                             if (c == '-') c = '_';
                           }
                           return n;
                         });

TEST(Cli, MissingConfigIsAUsageError) {
  const auto r = run("train --config /definitely/not/here.json");
  EXPECT_EQ(r.status, 1);
  EXPECT_NE(r.out.find("/definitely/not/here.json"), std::string::npos);
}

TEST(Cli, UnknownFlagAndBadOverride) {
  EXPECT_EQ(run("train --bogus").status, 1);
  EXPECT_EQ(run("gen --config " + small_config() + " --set nonsense.key=1").status, 1);
  EXPECT_EQ(run("").status, 1);
}

TEST(Cli, BadDataIsExitTwo) {
  testsupport::TempDir dir("cli_bad");
  proxdist::write_file(dir.path() / "pred.tsv", "id\tdistance\na\t1.2\n");
  proxdist::write_file(dir.path() / "keys.tsv", "id\tdistance\tstep_size\tgrain\na\t1.2\t10\tfine\nb\t3.0\t10\tcoarse\n");
  const auto r = run("score --pred " + q(dir.path() / "pred.tsv") + " --keys " + q(dir.path() / "keys.tsv"));
  EXPECT_EQ(r.status, 2);
  EXPECT_NE(r.out.find("MissingPrediction"), std::string::npos);
}

TEST(Cli, ScoreOfTruthIsZero) {
  testsupport::TempDir dir("cli_score");
  const std::string keys = "id\tdistance\tstep_size\tgrain\na\t1.2\t10\tfine\nb\t3.0\t20\tfine\nc\t1.8\t10\tcoarse\nd\t4.5\t30\tcoarse\n";
  proxdist::write_file(dir.path() / "keys.tsv", keys);
  proxdist::write_file(dir.path() / "pred.tsv", "id\tdistance\na\t1.2\nb\t3.0\nc\t1.8\nd\t4.5\n");
  const auto r = run("score --pred " + q(dir.path() / "pred.tsv") + " --keys " + q(dir.path() / "keys.tsv"));
  EXPECT_EQ(r.status, 0) << r.out;
  EXPECT_NE(r.out.find("average nDCF 0.000"), std::string::npos) << r.out;
}

TEST(Cli, GenTrainPredictScore) {
  testsupport::TempDir dir("cli_e2e");
  const auto corpus = dir.path() / "corpus";
  auto g = run("gen --config " + small_config() + " --out " + q(corpus));
  ASSERT_EQ(g.status, 0) << g.out;
  EXPECT_NE(g.out.find("config_hash="), std::string::npos);
  ASSERT_TRUE(fs::exists(corpus / "config.json"));
  ASSERT_TRUE(fs::exists(corpus / "test" / "keys.tsv"));

  const auto runs = dir.path() / "run";
  auto t = run("train --config " + q(corpus / "config.json") + " --out " + q(runs));
  ASSERT_EQ(t.status, 0) << t.out;
  for (const char* f : {"predictions.tsv", "report.json", "model.bin", "run.log"}) {
    EXPECT_TRUE(fs::exists(runs / f)) << f;
  }
  const auto report = proxdist::report_from_json(nlohmann::json::parse(proxdist::read_file(runs / "report.json")));
  EXPECT_LE(report.average_ndcf, 0.15);

  auto s = run("score --pred " + q(runs / "predictions.tsv") + " --keys " + q(corpus / "test" / "keys.tsv"));
  ASSERT_EQ(s.status, 0) << s.out;
  EXPECT_NE(s.out.find("average nDCF"), std::string::npos);

  const auto pred_dir = dir.path() / "pred";
  auto p = run("predict --config " + q(corpus / "config.json") + " --model " + q(runs / "model.bin") +
               " --split test --out " + q(pred_dir));
  ASSERT_EQ(p.status, 0) << p.out;
  EXPECT_EQ(proxdist::read_file(pred_dir / "predictions.tsv"), proxdist::read_file(runs / "predictions.tsv"));
}

TEST(Cli, TrainIsIdempotent) {
  testsupport::TempDir dir("cli_idem");
  const auto a = dir.path() / "a", b = dir.path() / "b";
  ASSERT_EQ(run("train --config " + small_config() + " --out " + q(a)).status, 0);
  ASSERT_EQ(run("train --config " + small_config() + " --jobs 2 --out " + q(b)).status, 0);
  for (const char* f : {"predictions.tsv", "report.json", "model.bin"}) {
    EXPECT_EQ(proxdist::read_file(a / f), proxdist::read_file(b / f)) << f;
  }
}

TEST(Cli, AblateImportanceReport) {
  testsupport::TempDir dir("cli_ablate");
  const auto out = dir.path() / "small";
  const std::string common = "--config " + small_config() + " --out " + q(out) +
                             " --set 'ablation_groups=[{\"name\":\"noise\",\"prefixes\":[\"Magnetometer:\"]}]'";
  auto a = run("ablate " + common);
  ASSERT_EQ(a.status, 0) << a.out;
  const auto csv = proxdist::read_file(out / "ablation.csv");
  EXPECT_EQ(csv.rfind("group,score,delta\nbaseline,", 0), 0u);
  EXPECT_NE(csv.find("\nnoise,"), std::string::npos);

  auto i = run("importance " + common);
  ASSERT_EQ(i.status, 0) << i.out;
  EXPECT_EQ(proxdist::read_file(out / "importance.csv").rfind("grain,feature,importance\n", 0), 0u);

  const auto rep = dir.path() / "report";
  auto r = run("report --runs " + q(out) + " --out " + q(rep));
  ASSERT_EQ(r.status, 0) << r.out;
  EXPECT_TRUE(fs::exists(rep / "report_table.txt"));
  EXPECT_TRUE(fs::exists(rep / "small_ablation.svg"));
  EXPECT_TRUE(fs::exists(rep / "small_importance.svg"));
}

TEST(Cli, ExtractAndFitRadio) {
  testsupport::TempDir dir("cli_extract");
  const auto out = dir.path() / "x";
  auto e = run("extract --config " + small_config() + " --split dev --out " + q(out));
  ASSERT_EQ(e.status, 0) << e.out;
  const auto csv = proxdist::read_file(out / "features_dev.csv");
  EXPECT_EQ(csv.rfind("id,", 0), 0u);
  EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 1 + 8 * 40);

  auto f = run("fit-radio --config " + small_config() + " --out " + q(out));
  ASSERT_EQ(f.status, 0) << f.out;
  EXPECT_TRUE(fs::exists(out / "radio.json"));
  auto frozen = run("train --config " + q(out / "config.frozen.json") + " --out " + q(dir.path() / "frozen"));
  EXPECT_EQ(frozen.status, 0) << frozen.out;
}
