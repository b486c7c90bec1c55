#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace koala::cli {

inline constexpr const char* kArtifactVersion = "0.1.0";

// Sidecar "<output>.manifest.json" written next to every output file. The
// creation time lives here and nowhere else, so outputs stay byte-stable.
struct RunManifest {
  std::string subcommand;
  std::map<std::string, std::string> flags;
  std::optional<std::uint64_t> seed;
  std::vector<std::filesystem::path> inputs;

  void write_for(const std::filesystem::path& output) const;
};

}  // namespace koala::cli
