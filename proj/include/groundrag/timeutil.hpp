#pragma once

#include <chrono>
#include <string>

namespace groundrag {

using Clock = std::chrono::system_clock;
using TimePoint = Clock::time_point;

// "YYYY-MM-DDTHH:MM:SS.mmmZ"; lexicographic order equals chronological order.
std::string format_utc(TimePoint tp);
std::string now_utc();

}  // namespace groundrag
