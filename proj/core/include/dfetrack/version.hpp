#pragma once

#include <nlohmann/json.hpp>

namespace dfetrack {

// Library version plus the versions of the libraries it was built against.
nlohmann::json build_info();

}  // namespace dfetrack
