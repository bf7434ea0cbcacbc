#pragma once

#include <chrono>
#include <string>
#include <string_view>

namespace trajcast {

using TimePoint = std::chrono::sys_seconds;

/// Accepts `YYYY-MM-DD`, `YYYY-MM-DDTHH:MM[:SS][Z]` and the same with a space
/// separator. All times are UTC.
TimePoint parse_utc(std::string_view text);
/// `YYYY-MM-DDTHH:MM:SSZ`
std::string format_utc(TimePoint t);
/// `YYYYMMDD`, used in file names.
std::string format_compact_date(TimePoint t);

inline TimePoint add_hours(TimePoint t, long hours) { return t + std::chrono::hours(hours); }

}  // namespace trajcast
