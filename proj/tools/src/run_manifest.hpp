#pragma once

#include <cstdint>
#include <filesystem>
#include <nlohmann/json.hpp>
#include <optional>
#include <string>

namespace dfetrack::cli {

// The seed a run uses: the --seed value, or fresh entropy when absent.
struct SeedChoice {
  std::uint64_t value = 0;
  bool from_entropy = false;
};

SeedChoice choose_seed(const std::optional<std::uint64_t>& flag);

// Config echo plus tool and library versions, written as JSON.
struct RunManifest {
  std::string command;
  nlohmann::json config = nlohmann::json::object();
  nlohmann::json outputs = nlohmann::json::array();
  SeedChoice seed;

  nlohmann::json to_json() const;
  void write(const std::filesystem::path& path) const;
};

}  // namespace dfetrack::cli
