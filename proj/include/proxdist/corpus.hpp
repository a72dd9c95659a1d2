#pragma once

// Contact-event files, key files, and the join between them.
//
// Event file grammar (UTF-8, LF or CRLF):
//   #<Key>,<Value>                              header line; Key = [A-Za-z_][A-Za-z0-9_.-]*
//   <timestamp>,<SensorKind>,<v1>[,<v2>,<v3>]   data line; timestamp in decimal seconds
//   any other line starting with '#', or blank  ignored
//
// Key file grammar: TSV with header `id distance step_size grain`.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "proxdist/error.hpp"
#include "proxdist/text.hpp"

namespace proxdist {

// ---------------------------------------------------------------------------
// Sensors

enum class SensorKind {
  Bluetooth,
  Accelerometer,
  Gyroscope,
  Magnetometer,
  Attitude,
  Gravity,
  Altitude,
  Heading,
  Other,  // unrecognised sensor name; kept but never featurised
};

inline constexpr std::array<SensorKind, 8> kKnownSensors = {
    SensorKind::Bluetooth, SensorKind::Accelerometer, SensorKind::Gyroscope,
    SensorKind::Magnetometer, SensorKind::Attitude, SensorKind::Gravity,
    SensorKind::Altitude, SensorKind::Heading};

inline std::string_view sensor_name(SensorKind k) {
  switch (k) {
    case SensorKind::Bluetooth: return "Bluetooth";
    case SensorKind::Accelerometer: return "Accelerometer";
    case SensorKind::Gyroscope: return "Gyroscope";
    case SensorKind::Magnetometer: return "Magnetometer";
    case SensorKind::Attitude: return "Attitude";
    case SensorKind::Gravity: return "Gravity";
    case SensorKind::Altitude: return "Altitude";
    case SensorKind::Heading: return "Heading";
    case SensorKind::Other: return "Other";
  }
  return "Other";
}

inline std::optional<SensorKind> sensor_from_name(std::string_view name) {
  for (auto k : kKnownSensors) {
    if (sensor_name(k) == name) return k;
  }
  return std::nullopt;
}

inline std::size_t channel_count(SensorKind k) {
  switch (k) {
    case SensorKind::Bluetooth:
    case SensorKind::Altitude:
    case SensorKind::Heading:
      return 1;
    case SensorKind::Other:
      return 0;  // inferred per line
    default:
      return 3;
  }
}

inline std::vector<std::string> channel_names(SensorKind k) {
  switch (k) {
    case SensorKind::Bluetooth: return {"rssi"};
    case SensorKind::Attitude: return {"roll", "pitch", "yaw"};
    case SensorKind::Altitude:
    case SensorKind::Heading: return {"value"};
    case SensorKind::Other: return {};
    default: return {"x", "y", "z"};
  }
}

struct Reading {
  double timestamp = 0.0;
  SensorKind kind = SensorKind::Bluetooth;
  std::string other_name;  // only for SensorKind::Other
  std::vector<double> values;

  bool operator==(const Reading&) const = default;
};

// ---------------------------------------------------------------------------
// Events

struct DeviceContext {
  std::string tx_model;
  std::string rx_model;
  std::string tx_power;
  std::string tx_pose;
  std::string rx_pose;
  std::string tx_carry;
  std::string rx_carry;

  bool operator==(const DeviceContext&) const = default;
};

inline constexpr std::size_t kContextFieldCount = 7;

inline constexpr std::array<std::string_view, kContextFieldCount> kContextFieldNames = {
    "tx_model", "rx_model", "tx_power", "tx_pose", "rx_pose", "tx_carry", "rx_carry"};

// Header keys in the same order as kContextFieldNames.
inline constexpr std::array<std::string_view, kContextFieldCount> kContextHeaderKeys = {
    "TXDevice", "RXDevice", "TXPower", "TXPose", "RXPose", "TXCarry", "RXCarry"};

inline constexpr std::string_view kStepSizeHeader = "StepSize";

inline const std::string& context_field(const DeviceContext& c, std::size_t i) {
  switch (i) {
    case 0: return c.tx_model;
    case 1: return c.rx_model;
    case 2: return c.tx_power;
    case 3: return c.tx_pose;
    case 4: return c.rx_pose;
    case 5: return c.tx_carry;
    default: return c.rx_carry;
  }
}

inline std::string& context_field(DeviceContext& c, std::size_t i) {
  return const_cast<std::string&>(context_field(static_cast<const DeviceContext&>(c), i));
}

struct Event {
  std::string id;
  DeviceContext context;
  int step_size = 10;
  std::vector<Reading> readings;
  std::map<std::string, std::string> extra_headers;  // unknown keys, unused downstream

  bool operator==(const Event&) const = default;
};

inline bool valid_step_size(int s) { return s >= 10 && s <= 150 && s % 10 == 0; }

struct ParseOptions {
  // Lenient mode skips malformed data lines and records a warning instead of
  // throwing. Missing headers and events without RSSI are always errors.
  bool strict = true;
  // alias -> canonical header key, applied before lookup
  std::map<std::string, std::string> header_aliases;
};

struct ParseLog {
  std::vector<std::string> warnings;
};

namespace detail {

inline bool is_header_line(std::string_view line, std::string_view& key, std::string_view& value) {
  if (line.size() < 2 || line[0] != '#') return false;
  const char c0 = line[1];
  if (!((c0 >= 'A' && c0 <= 'Z') || (c0 >= 'a' && c0 <= 'z') || c0 == '_')) return false;
  const auto comma = line.find(',');
  if (comma == std::string_view::npos) return false;
  for (std::size_t i = 2; i < comma; ++i) {
    const char c = line[i];
    const bool ok = (c >= 'A' && c <= 'Z') || (c >= 'a' && c <= 'z') || (c >= '0' && c <= '9') ||
                    c == '_' || c == '.' || c == '-';
    if (!ok) return false;
  }
  key = line.substr(1, comma - 1);
  value = text::trim(line.substr(comma + 1));
  return true;
}

// Timestamps at or beyond this many seconds are taken to be absolute epochs.
inline constexpr double kEpochThreshold = 1.0e6;

}  // namespace detail

inline Event parse_event(std::string_view text_in, std::string id, const ParseOptions& opts = {},
                         ParseLog* log = nullptr) {
  Event ev;
  ev.id = std::move(id);
  std::map<std::string, std::string> headers;

  auto problem = [&](ErrorCode code, std::size_t line_no, const std::string& what) {
    const std::string msg = ev.id + ":" + std::to_string(line_no) + ": " + what;
    if (opts.strict) fail(code, msg);
    if (log) log->warnings.push_back(std::string(to_string(code)) + ": " + msg);
  };

  const auto all = text::lines(text_in);
  for (std::size_t n = 0; n < all.size(); ++n) {
    const std::size_t line_no = n + 1;
    const auto line = text::trim(all[n]);
    if (line.empty()) continue;
    std::string_view key, value;
    if (detail::is_header_line(line, key, value)) {
      std::string k(key);
      if (auto it = opts.header_aliases.find(k); it != opts.header_aliases.end()) k = it->second;
      headers[k] = std::string(value);
      continue;
    }
    if (line.front() == '#') continue;  // comment

    const auto fields = text::split(line, ',');
    const auto ts = fields.size() >= 3 ? text::parse_double(fields[0]) : std::nullopt;
    const auto name = fields.size() >= 3 ? text::trim(fields[1]) : std::string_view{};
    if (!ts || !std::isfinite(*ts) || name.empty()) {
      problem(ErrorCode::MalformedLine, line_no, "line matches neither header nor data grammar");
      continue;
    }
    Reading r;
    r.timestamp = *ts;
    if (auto kind = sensor_from_name(name)) {
      r.kind = *kind;
    } else {
      r.kind = SensorKind::Other;
      r.other_name = std::string(name);
    }
    bool bad_value = false;
    for (std::size_t f = 2; f < fields.size(); ++f) {
      auto v = text::parse_double(fields[f]);
      if (!v || !std::isfinite(*v)) {
        bad_value = true;
        break;
      }
      r.values.push_back(*v);
    }
    if (bad_value) {
      problem(ErrorCode::MalformedLine, line_no, "non-numeric sensor value");
      continue;
    }
    const std::size_t want = channel_count(r.kind);
    if (want != 0 && r.values.size() != want) {
      problem(ErrorCode::ChannelArity, line_no,
              std::string(sensor_name(r.kind)) + " expects " + std::to_string(want) +
                  " values, got " + std::to_string(r.values.size()));
      continue;
    }
    ev.readings.push_back(std::move(r));
  }

  // Lenient mode leaves a missing context field empty (an unseen level at
  // encoding time) and a missing StepSize at 10.
  auto missing = [&](std::string_view key) {
    if (opts.strict) fail(ErrorCode::MissingHeaderField, ev.id + ": " + std::string(key));
    if (log) log->warnings.push_back("MissingHeaderField: " + ev.id + ": " + std::string(key));
  };
  for (std::size_t i = 0; i < kContextFieldCount; ++i) {
    auto it = headers.find(std::string(kContextHeaderKeys[i]));
    if (it == headers.end()) {
      missing(kContextHeaderKeys[i]);
      continue;
    }
    context_field(ev.context, i) = it->second;
    headers.erase(it);
  }
  if (auto it = headers.find(std::string(kStepSizeHeader)); it == headers.end()) {
    missing(kStepSizeHeader);
  } else {
    const auto step = text::parse_double(it->second);
    if (!step || *step != std::floor(*step) || !valid_step_size(static_cast<int>(*step))) {
      fail(ErrorCode::BadHeaderValue, ev.id + ": StepSize=" + it->second);
    }
    ev.step_size = static_cast<int>(*step);
    headers.erase(it);
  }
  ev.extra_headers = std::move(headers);

  std::stable_sort(ev.readings.begin(), ev.readings.end(),
                   [](const Reading& a, const Reading& b) { return a.timestamp < b.timestamp; });
  if (!ev.readings.empty()) {
    const double first = ev.readings.front().timestamp;
    if (first < 0.0 || first >= detail::kEpochThreshold) {
      for (auto& r : ev.readings) r.timestamp -= first;
    }
  }
  const bool has_rssi = std::any_of(ev.readings.begin(), ev.readings.end(),
                                    [](const Reading& r) { return r.kind == SensorKind::Bluetooth; });
  if (!has_rssi) fail(ErrorCode::NoBluetooth, ev.id);
  return ev;
}

inline std::string write_event(const Event& ev) {
  std::string out;
  for (std::size_t i = 0; i < kContextFieldCount; ++i) {
    out += '#';
    out += kContextHeaderKeys[i];
    out += ',';
    out += context_field(ev.context, i);
    out += '\n';
  }
  out += "#StepSize," + std::to_string(ev.step_size) + "\n";
  for (const auto& [k, v] : ev.extra_headers) out += "#" + k + "," + v + "\n";
  for (const auto& r : ev.readings) {
    out += text::format_double(r.timestamp);
    out += ',';
    out += r.kind == SensorKind::Other ? std::string_view(r.other_name) : sensor_name(r.kind);
    for (double v : r.values) {
      out += ',';
      out += text::format_double(v);
    }
    out += '\n';
  }
  return out;
}

// ---------------------------------------------------------------------------
// Keys

inline constexpr std::array<double, 4> kDistanceClasses = {1.2, 1.8, 3.0, 4.5};

inline std::optional<std::size_t> distance_class_index(double d) {
  for (std::size_t i = 0; i < kDistanceClasses.size(); ++i) {
    if (std::abs(kDistanceClasses[i] - d) <= 1e-9) return i;
  }
  return std::nullopt;
}

enum class Grain { Fine, Coarse };

inline std::string_view grain_name(Grain g) { return g == Grain::Fine ? "fine" : "coarse"; }

inline std::optional<Grain> grain_from_name(std::string_view s) {
  const auto l = text::to_lower(text::trim(s));
  if (l == "fine") return Grain::Fine;
  if (l == "coarse") return Grain::Coarse;
  return std::nullopt;
}

struct KeyEntry {
  double distance = 1.2;
  int step_size = 10;
  Grain grain = Grain::Fine;

  bool operator==(const KeyEntry&) const = default;
};

struct KeyTable {
  std::map<std::string, KeyEntry> entries;

  std::size_t size() const { return entries.size(); }
  bool operator==(const KeyTable&) const = default;
};

inline KeyTable parse_key(std::string_view text_in) {
  KeyTable table;
  const auto all = text::lines(text_in);
  bool seen_header = false;
  for (std::size_t n = 0; n < all.size(); ++n) {
    const std::size_t line_no = n + 1;
    const auto line = all[n];
    if (text::trim(line).empty()) continue;
    const auto cols = text::split(line, '\t');
    if (!seen_header) {
      if (cols.size() != 4 || text::trim(cols[0]) != "id" || text::trim(cols[1]) != "distance" ||
          text::trim(cols[2]) != "step_size" || text::trim(cols[3]) != "grain") {
        fail(ErrorCode::MalformedRow, "line " + std::to_string(line_no) + ": expected header id/distance/step_size/grain");
      }
      seen_header = true;
      continue;
    }
    if (cols.size() != 4) fail(ErrorCode::MalformedRow, "line " + std::to_string(line_no));
    const std::string id(text::trim(cols[0]));
    const auto dist = text::parse_double(cols[1]);
    const auto step = text::parse_double(cols[2]);
    const auto grain = grain_from_name(cols[3]);
    if (id.empty() || !dist || !step || !grain || *step <= 0 || *step != std::floor(*step)) {
      fail(ErrorCode::MalformedRow, "line " + std::to_string(line_no));
    }
    const auto cls = distance_class_index(*dist);
    if (!cls) fail(ErrorCode::BadDistance, std::string(text::trim(cols[1])));
    KeyEntry e{kDistanceClasses[*cls], static_cast<int>(*step), *grain};
    if (!table.entries.emplace(id, e).second) fail(ErrorCode::DuplicateId, id);
  }
  if (!seen_header) fail(ErrorCode::MalformedRow, "missing header row");
  return table;
}

inline std::string write_key(const KeyTable& keys) {
  std::string out = "id\tdistance\tstep_size\tgrain\n";
  for (const auto& [id, e] : keys.entries) {
    out += id + "\t" + text::format_double(e.distance) + "\t" + std::to_string(e.step_size) + "\t" +
           std::string(grain_name(e.grain)) + "\n";
  }
  return out;
}

// ---------------------------------------------------------------------------
// Join

struct LabeledEvent {
  Event event;
  double distance = 1.2;
  Grain grain = Grain::Fine;
};

struct LabeledDataset {
  std::vector<LabeledEvent> items;        // sorted by event id
  std::vector<std::string> orphan_events;  // events without a key
  std::vector<std::string> orphan_keys;    // keys without an event
};

inline LabeledDataset join(const std::vector<Event>& events, const KeyTable& keys) {
  LabeledDataset ds;
  std::set<std::string> event_ids;
  for (const auto& ev : events) {
    event_ids.insert(ev.id);
    auto it = keys.entries.find(ev.id);
    if (it == keys.entries.end()) {
      ds.orphan_events.push_back(ev.id);
      continue;
    }
    ds.items.push_back({ev, it->second.distance, it->second.grain});
  }
  for (const auto& [id, e] : keys.entries) {
    if (!event_ids.count(id)) ds.orphan_keys.push_back(id);
  }
  std::stable_sort(ds.items.begin(), ds.items.end(),
                   [](const LabeledEvent& a, const LabeledEvent& b) { return a.event.id < b.event.id; });
  std::sort(ds.orphan_events.begin(), ds.orphan_events.end());
  return ds;
}

// ---------------------------------------------------------------------------
// Filesystem helpers

inline std::string read_file(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) fail(ErrorCode::Io, "cannot open " + p.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline void write_file(const std::filesystem::path& p, std::string_view contents) {
  if (p.has_parent_path()) std::filesystem::create_directories(p.parent_path());
  std::ofstream out(p, std::ios::binary);
  if (!out) fail(ErrorCode::Io, "cannot write " + p.string());
  out.write(contents.data(), static_cast<std::streamsize>(contents.size()));
  if (!out) fail(ErrorCode::Io, "short write to " + p.string());
}

// Loads every *.csv in `dir` (sorted by file name); ids are file stems.
inline std::vector<Event> load_events(const std::filesystem::path& dir, const ParseOptions& opts = {},
                                      ParseLog* log = nullptr) {
  if (!std::filesystem::is_directory(dir)) fail(ErrorCode::Io, "not a directory: " + dir.string());
  std::vector<std::filesystem::path> files;
  for (const auto& entry : std::filesystem::directory_iterator(dir)) {
    if (entry.is_regular_file() && entry.path().extension() == ".csv") files.push_back(entry.path());
  }
  std::sort(files.begin(), files.end());
  std::vector<Event> events;
  events.reserve(files.size());
  for (const auto& f : files) events.push_back(parse_event(read_file(f), f.stem().string(), opts, log));
  return events;
}

inline void save_events(const std::filesystem::path& dir, const std::vector<Event>& events) {
  std::filesystem::create_directories(dir);
  for (const auto& ev : events) write_file(dir / (ev.id + ".csv"), write_event(ev));
}

}  // namespace proxdist
