#pragma once

#include <functional>
#include <string>

namespace dirinet {

using WarningSink = std::function<void(const std::string&)>;

// Replaces the process-wide warning sink; returns the previous one.
// The default sink writes "warning: <msg>" to stderr.
WarningSink set_warning_sink(WarningSink sink);

void warn(const std::string& message);

}  // namespace dirinet
