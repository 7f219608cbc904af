#include <fmt/format.h>

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>

#include "dfetrack/cae.hpp"
#include "dfetrack/error.hpp"

namespace dfetrack::cae {
namespace {

constexpr std::size_t kMagicSize = 8;
constexpr int kFormatVersion = 1;

void put_u64(std::string& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

std::uint64_t get_u64(const unsigned char* p) {
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(p[i]) << (8 * i);
  return v;
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

struct Parsed {
  nlohmann::json header;
  std::size_t payload_offset = 0;
};

Parsed parse_header(const std::string& bytes, const std::filesystem::path& path) {
  if (bytes.size() < kMagicSize + 8) throw FormatError(path.string() + ": truncated weights file");
  if (bytes.compare(0, 6, std::string(kWeightsMagic, 6)) != 0) {
    throw FormatError(path.string() + ": not a weights file (bad magic)");
  }
  if (bytes.compare(0, kMagicSize, kWeightsMagic) != 0) {
    throw FormatError(fmt::format("{}: unsupported weights format version '{}'", path.string(),
                                  bytes.substr(6, 2)));
  }
  const auto* raw = reinterpret_cast<const unsigned char*>(bytes.data());
  const std::uint64_t len = get_u64(raw + kMagicSize);
  if (len > bytes.size() - kMagicSize - 8) throw FormatError(path.string() + ": truncated header");
  Parsed p;
  try {
    p.header = nlohmann::json::parse(bytes.substr(kMagicSize + 8, len));
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(path.string() + ": malformed header: " + e.what());
  }
  p.payload_offset = kMagicSize + 8 + len;
  return p;
}

std::vector<int> shape_of(const nlohmann::json& t) { return t.at("shape").get<std::vector<int>>(); }

std::string shape_str(const std::vector<int>& s) { return fmt::format("[{}]", fmt::join(s, ", ")); }

}  // namespace

void save_model(const CaeModel& model, const std::filesystem::path& path,
                const nlohmann::json& training_metadata) {
  nlohmann::json tensors = nlohmann::json::array();
  for (const auto& p : model.params()) {
    tensors.push_back({{"name", p.name}, {"shape", p.shape}, {"trainable", p.trainable}});
  }
  const nlohmann::json header = {{"format_version", kFormatVersion},
                                 {"config", model.config().to_json()},
                                 {"seed", model.config().seed},
                                 {"tensors", tensors},
                                 {"training", training_metadata}};
  const std::string text = header.dump();

  std::string out(kWeightsMagic, kMagicSize);
  put_u64(out, text.size());
  out += text;
  for (const auto& p : model.params()) {
    for (double v : p.values) {
      const auto bits = std::bit_cast<std::uint32_t>(static_cast<float>(v));
      for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((bits >> (8 * i)) & 0xff));
    }
  }
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw IoError("cannot write " + path.string());
  f.write(out.data(), static_cast<std::streamsize>(out.size()));
  if (!f) throw IoError("failed writing " + path.string());
}

nlohmann::json read_model_header(const std::filesystem::path& path) {
  return parse_header(read_file(path), path).header;
}

CaeModel load_model(const std::filesystem::path& path, const CaeConfig* expected) {
  const std::string bytes = read_file(path);
  const Parsed parsed = parse_header(bytes, path);
  const auto& header = parsed.header;

  CaeModel model;
  nlohmann::json stored;
  try {
    if (header.at("format_version").get<int>() != kFormatVersion) {
      throw FormatError(fmt::format("{}: unsupported format version {}", path.string(),
                                    header.at("format_version").dump()));
    }
    model = CaeModel(CaeConfig::from_json(header.at("config")));
    stored = header.at("tensors");
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(path.string() + ": incomplete header: " + e.what());
  }

  const auto& params = model.params();
  if (expected) {
    const CaeModel reference(*expected);
    const auto& want = reference.params();
    for (std::size_t i = 0; i < std::max(want.size(), stored.size()); ++i) {
      if (i >= stored.size()) throw ShapeError(path.string() + ": missing layer tensor " + want[i].name);
      const std::string name = stored[i].at("name").get<std::string>();
      if (i >= want.size()) throw ShapeError(path.string() + ": unexpected layer tensor " + name);
      if (name != want[i].name || shape_of(stored[i]) != want[i].shape) {
        throw ShapeError(fmt::format("{}: layer {} has shape {}, expected {} {}", path.string(), name,
                                     shape_str(shape_of(stored[i])), want[i].name, shape_str(want[i].shape)));
      }
    }
  }
  if (stored.size() != params.size()) {
    throw ShapeError(fmt::format("{}: {} tensors stored, config implies {}", path.string(), stored.size(),
                                 params.size()));
  }
  std::size_t total = 0;
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (stored[i].at("name").get<std::string>() != params[i].name || shape_of(stored[i]) != params[i].shape) {
      throw ShapeError(fmt::format("{}: layer {} does not match the stored config", path.string(),
                                   stored[i].at("name").get<std::string>()));
    }
    total += params[i].size();
  }
  if (bytes.size() - parsed.payload_offset != total * 4) {
    throw FormatError(fmt::format("{}: payload holds {} bytes, expected {}", path.string(),
                                  bytes.size() - parsed.payload_offset, total * 4));
  }
  const auto* raw = reinterpret_cast<const unsigned char*>(bytes.data()) + parsed.payload_offset;
  for (auto& p : model.params()) {
    for (double& v : p.values) {
      std::uint32_t bits = 0;
      for (int i = 0; i < 4; ++i) bits |= static_cast<std::uint32_t>(raw[i]) << (8 * i);
      raw += 4;
      v = static_cast<double>(std::bit_cast<float>(bits));
    }
  }
  for (const auto& p : model.params()) {
    if (p.name.ends_with("running_var")) {
      for (double v : p.values) {
        if (!(v > 0.0)) throw FormatError(path.string() + ": non-positive running variance in " + p.name);
      }
    }
  }
  return model;
}

}  // namespace dfetrack::cae
