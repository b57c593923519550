#pragma once

#include <string_view>

namespace metacot {

std::string_view version();

}  // namespace metacot
