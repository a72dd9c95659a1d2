#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "proxdist/corpus.hpp"
#include "proxdist/rng.hpp"

namespace testsupport {

// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    static int counter = 0;
    path_ = std::filesystem::temp_directory_path() /
            ("proxdist_" + tag + "_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const std::filesystem::path& path() const { return path_; }

 private:
  std::filesystem::path path_;
};

inline const char* kHeader =
    "#TXDevice,pixel_3\n"
    "#RXDevice,iphone_8\n"
    "#TXPower,high\n"
    "#TXPose,facing\n"
    "#RXPose,side\n"
    "#TXCarry,hand\n"
    "#RXCarry,pocket\n"
    "#StepSize,20\n";

inline proxdist::DeviceContext sample_context() {
  return {"pixel_3", "iphone_8", "high", "facing", "side", "hand", "pocket"};
}

// A random event that satisfies every corpus invariant.
inline proxdist::Event random_event(proxdist::Rng& rng, const std::string& id) {
  using namespace proxdist;
  static const std::vector<std::string> words = {"a", "b", "galaxy_s9", "x-1", "pocket", "Z"};
  Event ev;
  ev.id = id;
  for (std::size_t f = 0; f < kContextFieldCount; ++f) context_field(ev.context, f) = words[rng.below(words.size())];
  ev.step_size = 10 * static_cast<int>(1 + rng.below(15));
  const std::size_t n = 1 + rng.below(40);
  double t = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    Reading r;
    t += rng.uniform() < 0.2 ? 0.0 : rng.uniform(0.0, 2.0);
    r.timestamp = t;
    r.kind = i == 0 ? SensorKind::Bluetooth : kKnownSensors[rng.below(kKnownSensors.size())];
    for (std::size_t c = 0; c < channel_count(r.kind); ++c) r.values.push_back(rng.normal(0.0, 50.0));
    ev.readings.push_back(std::move(r));
  }
  std::stable_sort(ev.readings.begin(), ev.readings.end(),
                   [](const Reading& a, const Reading& b) { return a.timestamp < b.timestamp; });
  return ev;
}

}  // namespace testsupport
