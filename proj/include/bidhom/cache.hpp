#pragma once

#include <cstdint>
#include <optional>
#include <string>

#include "bidhom/cell_problems.hpp"

namespace bidhom {

/// Content-addressed effective-tensor cache: one plain-text file per entry
/// under a cache directory, written atomically (temp + rename). Entries from
/// other tool versions or with damaged payloads are ignored.
class TensorCache {
public:
  explicit TensorCache(std::string dir) : dir_(std::move(dir)) {}

  static std::uint64_t fnv1a(const std::string& bytes);
  static std::string serialize(const EffectiveTensors& t);
  static std::optional<EffectiveTensors> deserialize(const std::string& text);

  std::string entry_path(std::uint64_t key) const;
  /// nullopt on miss, stale version, or corruption (the caller logs a warning
  /// for corrupt entries via `corrupt`).
  std::optional<EffectiveTensors> load(std::uint64_t key, bool* corrupt = nullptr) const;
  void store(std::uint64_t key, const EffectiveTensors& t) const;

  const std::string& dir() const { return dir_; }

private:
  std::string dir_;
};

inline constexpr const char* kToolVersion = "bidhom-1";

}  // namespace bidhom
