#pragma once

#include <string_view>

namespace metacot::resources {

/// Default 21-task registry (line-oriented, see taxonomy.hpp).
std::string_view bundled_registry();
/// Default English instruction lexicon (see instruction_compiler.hpp).
std::string_view bundled_lexicon();

}  // namespace metacot::resources
