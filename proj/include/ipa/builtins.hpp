#pragma once

#include <string>
#include <string_view>
#include <vector>

#include "ipa/program.hpp"

namespace ipa {

// workqueue, qsortmt, numerikernel, racer, httpish
std::vector<std::string> builtin_names();
std::string_view builtin_source(std::string_view name);
Program builtin(std::string_view name);

}  // namespace ipa
