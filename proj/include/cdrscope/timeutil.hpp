#pragma once

#include <cstdint>
#include <optional>
#include <string>

namespace cdrscope {

struct CivilDate {
    int year;
    int month;  // 1..12
    int day;    // 1..31
};

// Howard Hinnant's algorithms; valid over the whole int64 range we use.
int64_t days_from_civil(int y, int m, int d);
CivilDate civil_from_days(int64_t z);

// 0 = Monday ... 6 = Sunday, for a day number relative to 1970-01-01.
inline int weekday_from_days(int64_t z) {
    return static_cast<int>(z >= -3 ? (z + 3) % 7 : (z + 4) % 7 + 6);
}

// "YYYY-MM-DDTHH:MM:SSZ" -> UTC epoch seconds. Rejects anything else.
std::optional<int64_t> parse_rfc3339_utc(const std::string& s);
std::string format_rfc3339_utc(int64_t epoch_s);

// Calendar fields of an epoch instant shifted by a fixed UTC offset.
struct LocalFields {
    int64_t day_number;  // days since 1970-01-01, local
    int year, month, day;
    int weekday;  // 0 = Monday
    int hour, minute, second;
};
LocalFields local_fields(int64_t epoch_s, int32_t utc_offset_s);

}  // namespace cdrscope
