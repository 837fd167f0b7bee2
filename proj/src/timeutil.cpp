#include "cdrscope/timeutil.hpp"

#include <cstdio>

namespace cdrscope {

int64_t days_from_civil(int y, int m, int d) {
    y -= m <= 2;
    const int64_t era = (y >= 0 ? y : y - 399) / 400;
    const unsigned yoe = static_cast<unsigned>(y - era * 400);
    const unsigned doy = (153u * (m + (m > 2 ? -3 : 9)) + 2) / 5 + d - 1;
    const unsigned doe = yoe * 365 + yoe / 4 - yoe / 100 + doy;
    return era * 146097 + static_cast<int64_t>(doe) - 719468;
}

CivilDate civil_from_days(int64_t z) {
    z += 719468;
    const int64_t era = (z >= 0 ? z : z - 146096) / 146097;
    const unsigned doe = static_cast<unsigned>(z - era * 146097);
    const unsigned yoe = (doe - doe / 1460 + doe / 36524 - doe / 146096) / 365;
    const int64_t y = static_cast<int64_t>(yoe) + era * 400;
    const unsigned doy = doe - (365 * yoe + yoe / 4 - yoe / 100);
    const unsigned mp = (5 * doy + 2) / 153;
    const unsigned d = doy - (153 * mp + 2) / 5 + 1;
    const unsigned m = mp + (mp < 10 ? 3 : -9);
    return {static_cast<int>(y + (m <= 2)), static_cast<int>(m), static_cast<int>(d)};
}

std::optional<int64_t> parse_rfc3339_utc(const std::string& s) {
    // Fixed layout: YYYY-MM-DDTHH:MM:SSZ
    if (s.size() != 20 || s[4] != '-' || s[7] != '-' || s[10] != 'T' || s[13] != ':' ||
        s[16] != ':' || s[19] != 'Z')
        return std::nullopt;
    auto num = [&](int pos, int len, int& out) {
        out = 0;
        for (int i = 0; i < len; ++i) {
            char c = s[pos + i];
            if (c < '0' || c > '9') return false;
            out = out * 10 + (c - '0');
        }
        return true;
    };
    int y, mo, d, h, mi, se;
    if (!num(0, 4, y) || !num(5, 2, mo) || !num(8, 2, d) || !num(11, 2, h) || !num(14, 2, mi) ||
        !num(17, 2, se))
        return std::nullopt;
    if (mo < 1 || mo > 12 || d < 1 || d > 31 || h > 23 || mi > 59 || se > 59) return std::nullopt;
    int64_t dn = days_from_civil(y, mo, d);
    CivilDate rt = civil_from_days(dn);
    if (rt.year != y || rt.month != mo || rt.day != d) return std::nullopt;  // e.g. Feb 30
    return dn * 86400 + h * 3600 + mi * 60 + se;
}

std::string format_rfc3339_utc(int64_t epoch_s) {
    int64_t days = epoch_s / 86400;
    int64_t rem = epoch_s % 86400;
    if (rem < 0) {
        rem += 86400;
        --days;
    }
    CivilDate cd = civil_from_days(days);
    char buf[24];
    std::snprintf(buf, sizeof buf, "%04d-%02d-%02dT%02d:%02d:%02dZ", cd.year, cd.month, cd.day,
                  static_cast<int>(rem / 3600), static_cast<int>(rem / 60 % 60),
                  static_cast<int>(rem % 60));
    return std::string(buf);
}

LocalFields local_fields(int64_t epoch_s, int32_t utc_offset_s) {
    int64_t local = epoch_s + utc_offset_s;
    int64_t days = local / 86400;
    int64_t rem = local % 86400;
    if (rem < 0) {
        rem += 86400;
        --days;
    }
    CivilDate cd = civil_from_days(days);
    LocalFields f;
    f.day_number = days;
    f.year = cd.year;
    f.month = cd.month;
    f.day = cd.day;
    f.weekday = weekday_from_days(days);
    f.hour = static_cast<int>(rem / 3600);
    f.minute = static_cast<int>(rem / 60 % 60);
    f.second = static_cast<int>(rem % 60);
    return f;
}

}  // namespace cdrscope
