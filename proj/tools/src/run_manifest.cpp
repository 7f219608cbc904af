#include "run_manifest.hpp"

#include <chrono>
#include <fstream>
#include <random>

#include "dfetrack/error.hpp"
#include "dfetrack/parallel.hpp"
#include "dfetrack/version.hpp"

namespace dfetrack::cli {

SeedChoice choose_seed(const std::optional<std::uint64_t>& flag) {
  if (flag) return {*flag, false};
  std::random_device rd;
  const std::uint64_t hi = rd(), lo = rd();
  return {(hi << 32) ^ lo, true};
}

nlohmann::json RunManifest::to_json() const {
  const auto now = std::chrono::system_clock::now().time_since_epoch();
  return {{"command", command},
          {"config", config},
          {"seed", seed.value},
          {"seed_source", seed.from_entropy ? "entropy" : "flag"},
          {"outputs", outputs},
          {"threads", worker_count()},
          {"unix_time", std::chrono::duration_cast<std::chrono::seconds>(now).count()},
          {"versions", build_info()}};
}

void RunManifest::write(const std::filesystem::path& path) const {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream f(path);
  if (!f) throw IoError("cannot write " + path.string());
  f << to_json().dump(2) << "\n";
  if (!f) throw IoError("failed writing " + path.string());
}

}  // namespace dfetrack::cli
