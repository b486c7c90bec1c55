#include "manifest.hpp"

#include <chrono>
#include <ctime>
#include <fstream>
#include <json.hpp>

#include "koala/errors.hpp"
#include "koala/fixtures.hpp"

namespace koala::cli {

namespace {

std::string utc_now() {
  const auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

}  // namespace

void RunManifest::write_for(const std::filesystem::path& output) const {
  nlohmann::ordered_json j;
  j["artifact_version"] = kArtifactVersion;
  j["subcommand"] = subcommand;
  j["flags"] = flags;
  j["seed"] = seed ? nlohmann::json(*seed) : nlohmann::json(nullptr);
  auto& in = j["inputs"] = nlohmann::json::array();
  for (const auto& p : inputs) {
    in.push_back({{"path", p.string()}, {"fnv1a64", hex64(fnv1a64_file(p))}});
  }
  j["output"] = {{"path", output.string()}, {"fnv1a64", hex64(fnv1a64_file(output))}};
  j["created_utc"] = utc_now();

  const auto path = output.string() + ".manifest.json";
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path);
  out << j.dump(2) << '\n';
}

}  // namespace koala::cli
