#include "dfetrack/version.hpp"

#include <Eigen/Core>
#include <fmt/format.h>
#include <png.h>

namespace dfetrack {

nlohmann::json build_info() {
  return {{"dfetrack", DFETRACK_VERSION},
          {"eigen", fmt::format("{}.{}.{}", EIGEN_WORLD_VERSION, EIGEN_MAJOR_VERSION, EIGEN_MINOR_VERSION)},
          {"libpng", png_get_libpng_ver(nullptr)},
          {"nlohmann_json", fmt::format("{}.{}.{}", NLOHMANN_JSON_VERSION_MAJOR, NLOHMANN_JSON_VERSION_MINOR,
                                        NLOHMANN_JSON_VERSION_PATCH)},
          {"fmt", FMT_VERSION},
          {"compiler", __VERSION__}};
}

}  // namespace dfetrack
