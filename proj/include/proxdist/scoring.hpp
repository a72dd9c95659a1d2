#pragma once

// Miss / false-alarm rates and the normalised decision cost over the four
// standard evaluation conditions. A distance counts as "contact" when it is
// <= the condition threshold.

#include <array>
#include <cstdio>
#include <map>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "proxdist/corpus.hpp"
#include "proxdist/error.hpp"
#include "proxdist/text.hpp"

namespace proxdist {

struct EvalCondition {
  Grain grain = Grain::Fine;
  double threshold_d = 1.2;

  bool operator==(const EvalCondition&) const = default;
};

inline constexpr std::array<EvalCondition, 4> kStandardConditions = {
    EvalCondition{Grain::Fine, 1.2}, EvalCondition{Grain::Fine, 1.8}, EvalCondition{Grain::Fine, 3.0},
    EvalCondition{Grain::Coarse, 1.8}};

inline std::string condition_label(const EvalCondition& c) {
  return std::string(grain_name(c.grain)) + "@" + text::format_double(c.threshold_d);
}

struct CostWeights {
  double w_miss = 1.0;
  double w_fa = 1.0;

  bool operator==(const CostWeights&) const = default;
};

struct MissFa {
  double p_miss = 0.0;
  double p_fa = 0.0;
  std::size_t n_contact = 0;
  std::size_t n_noncontact = 0;
  // set when a denominator was empty and the rate was defined as 0
  bool empty_contact = false;
  bool empty_noncontact = false;
};

inline bool is_contact(double distance, double threshold) { return distance <= threshold + 1e-12; }

inline MissFa miss_fa(std::span<const double> pred, std::span<const double> truth, double d_threshold) {
  if (pred.size() != truth.size()) fail(ErrorCode::LengthMismatch, "pred and truth differ in length");
  if (pred.empty()) fail(ErrorCode::EmptyInput, "miss_fa needs at least one pair");
  MissFa r;
  std::size_t misses = 0, false_alarms = 0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const bool t = is_contact(truth[i], d_threshold);
    const bool p = is_contact(pred[i], d_threshold);
    if (t) {
      ++r.n_contact;
      if (!p) ++misses;
    } else {
      ++r.n_noncontact;
      if (p) ++false_alarms;
    }
  }
  r.empty_contact = r.n_contact == 0;
  r.empty_noncontact = r.n_noncontact == 0;
  r.p_miss = r.empty_contact ? 0.0 : static_cast<double>(misses) / static_cast<double>(r.n_contact);
  r.p_fa = r.empty_noncontact ? 0.0 : static_cast<double>(false_alarms) / static_cast<double>(r.n_noncontact);
  return r;
}

inline double ndcf(double p_miss, double p_fa, const CostWeights& w = {}) {
  return w.w_miss * p_miss + w.w_fa * p_fa;
}

struct ConditionScore {
  EvalCondition condition;
  double p_miss = 0.0;
  double p_fa = 0.0;
  double ndcf = 0.0;
  std::size_t n_contact = 0;
  std::size_t n_noncontact = 0;
  std::vector<std::string> warnings;
};

struct NdcfReport {
  std::array<ConditionScore, 4> conditions;
  double average_ndcf = 0.0;
};

// Scores an id -> distance prediction table against the keys. Every key id
// must be predicted; extra predictions are ignored.
inline NdcfReport evaluate(const std::map<std::string, double>& predictions, const KeyTable& keys,
                           const CostWeights& w = {}) {
  if (!(w.w_miss > 0.0 && w.w_fa > 0.0)) fail(ErrorCode::BadConfig, "cost weights must be positive");
  std::array<std::vector<double>, 2> pred, truth;  // indexed by grain
  for (const auto& [id, entry] : keys.entries) {
    auto it = predictions.find(id);
    if (it == predictions.end()) fail(ErrorCode::MissingPrediction, id);
    const auto g = static_cast<std::size_t>(entry.grain);
    pred[g].push_back(it->second);
    truth[g].push_back(entry.distance);
  }
  NdcfReport report;
  double sum = 0.0;
  for (std::size_t i = 0; i < kStandardConditions.size(); ++i) {
    const auto& cond = kStandardConditions[i];
    auto& cs = report.conditions[i];
    cs.condition = cond;
    const auto g = static_cast<std::size_t>(cond.grain);
    if (pred[g].empty()) {
      cs.warnings.push_back("no " + std::string(grain_name(cond.grain)) + " events");
    } else {
      const auto r = miss_fa(pred[g], truth[g], cond.threshold_d);
      cs.p_miss = r.p_miss;
      cs.p_fa = r.p_fa;
      cs.n_contact = r.n_contact;
      cs.n_noncontact = r.n_noncontact;
      if (r.empty_contact) cs.warnings.push_back("no contact events; p_miss set to 0");
      if (r.empty_noncontact) cs.warnings.push_back("no non-contact events; p_fa set to 0");
    }
    cs.ndcf = ndcf(cs.p_miss, cs.p_fa, w);
    sum += cs.ndcf;
  }
  report.average_ndcf = sum / static_cast<double>(kStandardConditions.size());
  return report;
}

inline nlohmann::json report_to_json(const NdcfReport& r) {
  nlohmann::json j;
  j["average_ndcf"] = r.average_ndcf;
  auto& arr = j["conditions"] = nlohmann::json::array();
  for (const auto& c : r.conditions) {
    arr.push_back({{"grain", grain_name(c.condition.grain)},
                   {"threshold_d", c.condition.threshold_d},
                   {"p_miss", c.p_miss},
                   {"p_fa", c.p_fa},
                   {"ndcf", c.ndcf},
                   {"n_contact", c.n_contact},
                   {"n_noncontact", c.n_noncontact},
                   {"warnings", c.warnings}});
  }
  return j;
}

inline NdcfReport report_from_json(const nlohmann::json& j) {
  NdcfReport r;
  r.average_ndcf = j.at("average_ndcf").get<double>();
  const auto& arr = j.at("conditions");
  if (arr.size() != 4) fail(ErrorCode::BadConfig, "report must list exactly four conditions");
  for (std::size_t i = 0; i < 4; ++i) {
    const auto& c = arr[i];
    auto& cs = r.conditions[i];
    const auto g = grain_from_name(c.at("grain").get<std::string>());
    if (!g) fail(ErrorCode::BadConfig, "bad grain in report");
    cs.condition = {*g, c.at("threshold_d").get<double>()};
    cs.p_miss = c.at("p_miss").get<double>();
    cs.p_fa = c.at("p_fa").get<double>();
    cs.ndcf = c.at("ndcf").get<double>();
    cs.n_contact = c.at("n_contact").get<std::size_t>();
    cs.n_noncontact = c.at("n_noncontact").get<std::size_t>();
    cs.warnings = c.value("warnings", std::vector<std::string>{});
  }
  return r;
}

// Aligned text table: one row per condition plus the average.
inline std::string report_to_text(const NdcfReport& r) {
  std::string out;
  char buf[160];
  std::snprintf(buf, sizeof(buf), "%-12s %9s %8s %8s %8s %8s\n", "condition", "threshold", "p_miss", "p_fa",
                "nDCF", "n");
  out += buf;
  for (const auto& c : r.conditions) {
    std::snprintf(buf, sizeof(buf), "%-12s %8.1fm %8.3f %8.3f %8.3f %8zu\n",
                  std::string(grain_name(c.condition.grain)).c_str(), c.condition.threshold_d, c.p_miss, c.p_fa,
                  c.ndcf, c.n_contact + c.n_noncontact);
    out += buf;
  }
  std::snprintf(buf, sizeof(buf), "average nDCF %.3f\n", r.average_ndcf);
  out += buf;
  return out;
}

// ---------------------------------------------------------------------------
// Prediction files: TSV `id<TAB>distance` with a header row.

inline std::string write_predictions(const std::map<std::string, double>& preds) {
  std::string out = "id\tdistance\n";
  for (const auto& [id, d] : preds) out += id + "\t" + text::format_double(d) + "\n";
  return out;
}

inline std::map<std::string, double> parse_predictions(std::string_view in) {
  std::map<std::string, double> preds;
  const auto all = text::lines(in);
  for (std::size_t n = 0; n < all.size(); ++n) {
    if (text::trim(all[n]).empty()) continue;
    const auto cols = text::split(all[n], '\t');
    if (n == 0 && cols.size() == 2 && text::trim(cols[0]) == "id") continue;
    const auto d = cols.size() == 2 ? text::parse_double(cols[1]) : std::nullopt;
    if (!d) fail(ErrorCode::MalformedRow, "prediction line " + std::to_string(n + 1));
    const std::string id(text::trim(cols[0]));
    if (!preds.emplace(id, *d).second) fail(ErrorCode::DuplicateId, id);
  }
  return preds;
}

}  // namespace proxdist
