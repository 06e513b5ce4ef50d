#pragma once

#include <chrono>
#include <compare>
#include <cstdio>
#include <cstdlib>
#include <string>

#include "eyelab/error.hpp"

namespace eyelab {

// Calendar date stored as days since 1970-01-01. Comparisons and day
// arithmetic are integer operations; no time zones are involved.
struct Date {
    int days = 0;

    auto operator<=>(const Date&) const = default;

    Date plus_days(int n) const { return Date{days + n}; }
};

// Days from a to b (positive when b is later).
inline int days_between(Date a, Date b) { return b.days - a.days; }

// Parses strict ISO-8601 "YYYY-MM-DD". Rejects impossible dates.
inline Date parse_date(const std::string& s, const std::string& context = "date") {
    auto fail = [&]() -> Date { throw DataError(context + ": expected YYYY-MM-DD, got '" + s + "'"); };
    if (s.size() != 10 || s[4] != '-' || s[7] != '-') return fail();
    for (std::size_t i : {0u, 1u, 2u, 3u, 5u, 6u, 8u, 9u}) {
        if (s[i] < '0' || s[i] > '9') return fail();
    }
    const int y = std::atoi(s.substr(0, 4).c_str());
    const unsigned m = static_cast<unsigned>(std::atoi(s.substr(5, 2).c_str()));
    const unsigned d = static_cast<unsigned>(std::atoi(s.substr(8, 2).c_str()));
    const std::chrono::year_month_day ymd{std::chrono::year{y}, std::chrono::month{m}, std::chrono::day{d}};
    if (!ymd.ok()) return fail();
    const std::chrono::sys_days sd{ymd};
    return Date{static_cast<int>(sd.time_since_epoch().count())};
}

inline std::string format_date(Date date) {
    const std::chrono::sys_days sd{std::chrono::days{date.days}};
    const std::chrono::year_month_day ymd{sd};
    char buf[16];
    std::snprintf(buf, sizeof buf, "%04d-%02u-%02u", static_cast<int>(ymd.year()), static_cast<unsigned>(ymd.month()),
                  static_cast<unsigned>(ymd.day()));
    return buf;
}

}  // namespace eyelab
