#pragma once

// The experiment-config document: a single JSON file, optionally patched by
// dotted-key overrides (`model.extra_trees.n_trees=100`).

#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "proxdist/corpus.hpp"
#include "proxdist/error.hpp"
#include "proxdist/pipeline.hpp"
#include "proxdist/serialize.hpp"

namespace proxdist {

inline json to_json(const ExperimentConfig& c) {
  auto split = [](const SplitPaths& s) { return json{{"events", s.events}, {"keys", s.keys}}; };
  json groups = json::array();
  for (const auto& g : c.ablation_groups) groups.push_back({{"name", g.name}, {"prefixes", g.prefixes}});
  return {{"synthetic", c.synthetic ? to_json(*c.synthetic) : json(nullptr)},
          {"corpus",
           {{"train", split(c.train)},
            {"dev", split(c.dev)},
            {"test", split(c.test)},
            {"strict", c.strict_parsing},
            {"header_aliases", c.header_aliases}}},
          {"features", feature_config_to_json(c.features)},
          {"radio", {{"fit", c.fit_radio}, {"search", to_json(c.radio_search)}}},
          {"model",
           {{"kind", model_kind_name(c.model.kind)},
            {"extra_trees", to_json(c.model.extra_trees)},
            {"gbm", to_json(c.model.gbm)},
            {"grid", c.grid}}},
          {"weights", to_json(c.weights)},
          {"seed", c.seed},
          {"ablation_groups", groups},
          {"exclude_prefixes", c.exclude_prefixes},
          {"importance_repeats", c.importance_repeats},
          {"output_dir", c.output_dir},
          {"jobs", c.jobs}};
}

inline ExperimentConfig experiment_config_from_json(const json& j) {
  ExperimentConfig c;
  JsonReader r(j, "");
  r.with("synthetic", [&](const json& v, const std::string& w) {
    if (v.is_null()) c.synthetic.reset();
    else c.synthetic = generator_spec_from_json(v, w);
  });
  r.with("corpus", [&](const json& v, const std::string& w) {
    JsonReader cr(v, w);
    auto split = [&](const char* key, SplitPaths& s) {
      cr.with(key, [&](const json& sv, const std::string& sw) {
        JsonReader sr(sv, sw);
        sr.get("events", s.events);
        sr.get("keys", s.keys);
        sr.finish();
      });
    };
    split("train", c.train);
    split("dev", c.dev);
    split("test", c.test);
    cr.get("strict", c.strict_parsing);
    cr.get("header_aliases", c.header_aliases);
    cr.finish();
  });
  r.with("features", [&](const json& v, const std::string& w) { c.features = feature_config_from_json(v, w); });
  r.with("radio", [&](const json& v, const std::string& w) {
    JsonReader rr(v, w);
    rr.get("fit", c.fit_radio);
    rr.with("search", [&](const json& sv, const std::string& sw) {
      c.radio_search = search_space_from_json(sv, sw, c.radio_search);
    });
    rr.finish();
  });
  r.with("model", [&](const json& v, const std::string& w) {
    JsonReader mr(v, w);
    std::string kind(model_kind_name(c.model.kind));
    mr.get("kind", kind);
    c.model.kind = model_kind_from_name(kind);
    mr.with("extra_trees", [&](const json& ev, const std::string& ew) {
      c.model.extra_trees = extra_trees_from_json(ev, ew, c.model.extra_trees);
    });
    mr.with("gbm", [&](const json& gv, const std::string& gw) { c.model.gbm = gbm_from_json(gv, gw, c.model.gbm); });
    mr.get("grid", c.grid);
    mr.finish();
  });
  r.with("weights", [&](const json& v, const std::string& w) { c.weights = cost_weights_from_json(v, w); });
  r.get("seed", c.seed);
  r.with("ablation_groups", [&](const json& v, const std::string& w) {
    if (!v.is_array()) fail(ErrorCode::BadConfig, w + " must be an array");
    c.ablation_groups.clear();
    for (std::size_t i = 0; i < v.size(); ++i) {
      AblationGroup g;
      JsonReader gr(v[i], w + "[" + std::to_string(i) + "]");
      gr.get("name", g.name);
      gr.get("prefixes", g.prefixes);
      gr.finish();
      c.ablation_groups.push_back(std::move(g));
    }
  });
  r.get("exclude_prefixes", c.exclude_prefixes);
  r.get("importance_repeats", c.importance_repeats);
  r.get("output_dir", c.output_dir);
  r.get("jobs", c.jobs);
  r.finish();
  // grid names must be known to the chosen model family
  for (const auto& p : grid_points(c.grid)) (void)apply_point(c.model, p);
  validate(c);
  return c;
}

// Maps whose keys are user-chosen; overrides may add new keys beneath them.
inline bool is_open_map(std::string_view path) {
  static const std::vector<std::string_view> open = {"model.grid", "synthetic.offsets", "synthetic.imu",
                                                     "features.imu_sensors", "corpus.header_aliases"};
  for (auto o : open) {
    if (path == o) return true;
    if (path.size() > o.size() && path.substr(0, o.size()) == o && path[o.size()] == '.' &&
        o == "synthetic.offsets") {
      return true;  // offsets.<field> is itself an open map of levels
    }
  }
  return false;
}

// Applies `key=value`; value is parsed as JSON, falling back to a string.
inline void apply_override(json& doc, std::string_view assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string_view::npos || eq == 0) fail(ErrorCode::BadConfig, "override must look like key=value: " + std::string(assignment));
  const std::string key(text::trim(assignment.substr(0, eq)));
  const std::string raw(text::trim(assignment.substr(eq + 1)));
  json value;
  try {
    value = json::parse(raw);
  } catch (const json::exception&) {
    value = raw;
  }
  json* node = &doc;
  std::string path;
  const auto parts = text::split(key, '.');
  for (std::size_t i = 0; i < parts.size(); ++i) {
    const std::string part(parts[i]);
    if (part.empty()) fail(ErrorCode::BadConfig, "empty segment in override key " + key);
    if (node->is_null() && path == "synthetic") *node = to_json(GeneratorSpec{});
    if (!node->is_object()) fail(ErrorCode::BadConfig, "override key " + key + " descends into a non-object");
    const bool last = i + 1 == parts.size();
    if (!node->contains(part)) {
      if (!is_open_map(path)) fail(ErrorCode::BadConfig, "unknown config key: " + key);
      (*node)[part] = last ? value : json::object();
    }
    path = path.empty() ? part : path + "." + part;
    node = &(*node)[part];
  }
  *node = value;
}

struct LoadedConfig {
  ExperimentConfig config;
  json resolved;  // canonical document after defaults and overrides
};

inline LoadedConfig resolve_config(const json& user, const std::vector<std::string>& overrides) {
  // Parse once to reject unknown keys and fill defaults, then patch the
  // canonical form so overrides can only touch keys that exist.
  json doc = to_json(experiment_config_from_json(user));
  for (const auto& o : overrides) apply_override(doc, o);
  LoadedConfig out;
  out.config = experiment_config_from_json(doc);
  out.resolved = to_json(out.config);
  return out;
}

inline LoadedConfig load_config(const std::filesystem::path& path, const std::vector<std::string>& overrides) {
  if (!std::filesystem::exists(path)) fail(ErrorCode::Io, "config file not found: " + path.string());
  json user;
  try {
    user = json::parse(read_file(path));
  } catch (const json::exception& e) {
    fail(ErrorCode::BadConfig, path.string() + ": " + e.what());
  }
  // Relative corpus paths resolve against the config file's directory.
  LoadedConfig lc = resolve_config(user, overrides);
  const auto base = path.has_parent_path() ? path.parent_path() : std::filesystem::path(".");
  for (auto* sp : {&lc.config.train, &lc.config.dev, &lc.config.test}) {
    for (auto* s : {&sp->events, &sp->keys}) {
      if (!s->empty() && std::filesystem::path(*s).is_relative()) *s = (base / *s).lexically_normal().string();
    }
  }
  return lc;
}

// FNV-1a over the canonical document, ignoring keys that cannot change results.
inline std::string config_hash(const json& resolved) {
  json h = resolved;
  h.erase("jobs");
  h.erase("output_dir");
  const std::string s = h.dump();
  std::uint64_t x = 0xcbf29ce484222325ULL;
  for (unsigned char c : s) {
    x ^= c;
    x *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(x));
  return buf;
}

}  // namespace proxdist
