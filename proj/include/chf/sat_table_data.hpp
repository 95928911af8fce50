#pragma once

#include <string_view>

namespace chf {

/// The embedded saturation-property table as CSV text.
std::string_view sat_table_csv();

}  // namespace chf
