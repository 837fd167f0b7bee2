#include "cdrscope/dataset.hpp"

#include <algorithm>
#include <charconv>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <stdexcept>

#include "cdrscope/csv.hpp"
#include "cdrscope/rng.hpp"
#include "json.hpp"

namespace cdrscope {

namespace {

bool parse_u32(const std::string& s, uint32_t& out) {
    auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), out);
    return ec == std::errc() && p == s.data() + s.size();
}

bool parse_i32(const std::string& s, int32_t& out) {
    auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), out);
    return ec == std::errc() && p == s.data() + s.size();
}

bool parse_f64(const std::string& s, double& out) {
    char* end = nullptr;
    out = std::strtod(s.c_str(), &end);
    return end == s.c_str() + s.size() && !s.empty();
}

void expect_header(CsvReader& r, const std::vector<std::string>& expected) {
    std::vector<std::string> row;
    if (!r.next_row(row) || row != expected) {
        std::string want;
        for (size_t i = 0; i < expected.size(); ++i) want += (i ? "," : "") + expected[i];
        throw std::runtime_error(r.path() + ": header mismatch, expected `" + want + "`");
    }
}

}  // namespace

Dataset parse_dataset(const std::string& events_path, const std::string& users_path,
                      const std::string& towers_path, const DatasetConfig& config,
                      double max_reject_frac) {
    Dataset ds;
    ds.config = config;

    {
        CsvReader r(users_path);
        expect_header(r, {"user_id", "age", "gender", "district_id", "default"});
        std::vector<std::string> row;
        while (r.next_row(row)) {
            if (row.size() != 5) throw std::runtime_error(users_path + ": bad user row");
            UserRecord u;
            u.id = ds.user_names.intern(row[0]);
            if (u.id != ds.users.size())
                throw std::runtime_error(users_path + ": duplicate user_id " + row[0]);
            int32_t age;
            if (!parse_i32(row[1], age)) throw std::runtime_error(users_path + ": bad age");
            u.age = age;
            u.gender = row[2] == "M"   ? Gender::Male
                       : row[2] == "F" ? Gender::Female
                                       : Gender::Other;
            if (!parse_u32(row[3], u.district))
                throw std::runtime_error(users_path + ": bad district_id");
            if (row[4] != "0" && row[4] != "1")
                throw std::runtime_error(users_path + ": default must be 0 or 1");
            u.defaulted = row[4] == "1";
            ds.users.push_back(u);
        }
        ds.n_internal = static_cast<NodeId>(ds.users.size());
    }

    {
        CsvReader r(towers_path);
        expect_header(r, {"tower_id", "x_km", "y_km"});
        std::vector<std::string> row;
        while (r.next_row(row)) {
            if (row.size() != 3) throw std::runtime_error(towers_path + ": bad tower row");
            NodeId id = ds.tower_names.intern(row[0]);
            if (id != ds.towers.size())
                throw std::runtime_error(towers_path + ": duplicate tower_id " + row[0]);
            TowerRecord t;
            if (!parse_f64(row[1], t.x_km) || !parse_f64(row[2], t.y_km) ||
                !std::isfinite(t.x_km) || !std::isfinite(t.y_km))
                throw std::runtime_error(towers_path + ": bad coordinates for " + row[0]);
            ds.towers.push_back(t);
        }
    }

    {
        CsvReader r(events_path);
        expect_header(r, {"timestamp", "caller_id", "callee_id", "kind", "duration_s", "tower_id"});
        std::vector<std::string> row;
        ParseStats& st = ds.stats;
        while (r.next_row(row)) {
            ++st.event_rows_read;
            if (row.size() != 6) {
                ++st.rejected_malformed;
                continue;
            }
            auto ts = parse_rfc3339_utc(row[0]);
            uint32_t dur;
            bool kind_call = row[3] == "CALL";
            bool kind_sms = row[3] == "SMS";
            if (!ts || (!kind_call && !kind_sms) || !parse_u32(row[4], dur) || row[1].empty() ||
                row[2].empty()) {
                ++st.rejected_malformed;
                continue;
            }
            if (row[1] == row[2]) {
                ++st.rejected_self_loop;
                continue;
            }
            if (*ts < config.observation_start || *ts >= config.observation_end) {
                ++st.rejected_out_of_window;
                continue;
            }
            CdrEvent e;
            e.timestamp = *ts;
            e.caller = ds.user_names.intern(row[1]);
            e.callee = ds.user_names.intern(row[2]);
            e.kind = kind_call ? EventKind::Call : EventKind::Message;
            e.duration_s = kind_call ? dur : 0;
            NodeId tw = ds.tower_names.lookup(row[5]);
            if (tw == kInvalidNode) {
                e.tower = -1;
                ++st.unknown_tower_events;
            } else {
                e.tower = static_cast<int32_t>(tw);
            }
            e.external = !ds.is_internal(e.caller) || !ds.is_internal(e.callee);
            if (e.external) ++st.external_events;
            ds.events.push_back(e);
            ++st.events_kept;
        }
        if (st.event_rows_read > 0 &&
            double(st.rejected_total()) > max_reject_frac * double(st.event_rows_read)) {
            throw std::runtime_error(
                events_path + ": " + std::to_string(st.rejected_total()) + " of " +
                std::to_string(st.event_rows_read) + " rows rejected (malformed=" +
                std::to_string(st.rejected_malformed) + ", self_loop=" +
                std::to_string(st.rejected_self_loop) + ", out_of_window=" +
                std::to_string(st.rejected_out_of_window) + "), above the abort threshold");
        }
    }

    std::sort(ds.events.begin(), ds.events.end(), [](const CdrEvent& a, const CdrEvent& b) {
        if (a.timestamp != b.timestamp) return a.timestamp < b.timestamp;
        if (a.caller != b.caller) return a.caller < b.caller;
        if (a.callee != b.callee) return a.callee < b.callee;
        return a.kind < b.kind;
    });
    return ds;
}

void write_dataset(const Dataset& ds, const std::string& dir) {
    std::filesystem::create_directories(dir);
    {
        CsvWriter w(dir + "/users.csv");
        w.raw_line("user_id,age,gender,district_id,default");
        for (NodeId u = 0; u < ds.n_internal; ++u) {
            const UserRecord& rec = ds.users[u];
            const char* g = rec.gender == Gender::Male     ? "M"
                            : rec.gender == Gender::Female ? "F"
                                                           : "O";
            w.row({ds.user_names.name(u), std::to_string(rec.age), g,
                   std::to_string(rec.district), rec.defaulted ? "1" : "0"});
        }
    }
    {
        CsvWriter w(dir + "/towers.csv");
        w.raw_line("tower_id,x_km,y_km");
        char buf[64];
        for (size_t t = 0; t < ds.towers.size(); ++t) {
            std::snprintf(buf, sizeof buf, "%.6f", ds.towers[t].x_km);
            std::string x = buf;
            std::snprintf(buf, sizeof buf, "%.6f", ds.towers[t].y_km);
            w.row({ds.tower_names.name(static_cast<NodeId>(t)), x, buf});
        }
    }
    {
        CsvWriter w(dir + "/events.csv");
        w.raw_line("timestamp,caller_id,callee_id,kind,duration_s,tower_id");
        for (const CdrEvent& e : ds.events) {
            w.row({format_rfc3339_utc(e.timestamp), ds.user_names.name(e.caller),
                   ds.user_names.name(e.callee), e.kind == EventKind::Call ? "CALL" : "SMS",
                   std::to_string(e.duration_s),
                   e.tower >= 0 ? ds.tower_names.name(static_cast<NodeId>(e.tower)) : "unknown"});
        }
    }
}

DatasetConfig dataset_config_from_json_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open dataset config: " + path);
    nlohmann::json j;
    in >> j;
    DatasetConfig cfg;
    auto start = parse_rfc3339_utc(j.at("observation_start").get<std::string>());
    auto end = parse_rfc3339_utc(j.at("observation_end").get<std::string>());
    if (!start || !end || *end <= *start)
        throw std::runtime_error(path + ": invalid observation window");
    cfg.observation_start = *start;
    cfg.observation_end = *end;
    cfg.utc_offset_s = j.value("utc_offset_hours", 0) * 3600;
    cfg.business_start_hour = j.value("business_start_hour", 8);
    cfg.business_end_hour = j.value("business_end_hour", 18);
    return cfg;
}

void write_dataset_config(const DatasetConfig& cfg, const std::string& path) {
    nlohmann::json j;
    j["observation_start"] = format_rfc3339_utc(cfg.observation_start);
    j["observation_end"] = format_rfc3339_utc(cfg.observation_end);
    j["utc_offset_hours"] = cfg.utc_offset_s / 3600;
    j["business_start_hour"] = cfg.business_start_hour;
    j["business_end_hour"] = cfg.business_end_hour;
    std::ofstream out(path);
    out << j.dump(2) << "\n";
}

Split split_train_test(const Dataset& ds, double fraction, uint64_t seed) {
    if (!(fraction > 0.0 && fraction < 1.0))
        throw std::invalid_argument("split fraction must be in (0,1)");
    Split sp;
    std::vector<NodeId> cls[2];
    for (NodeId u = 0; u < ds.n_internal; ++u) cls[ds.users[u].defaulted ? 1 : 0].push_back(u);
    for (int c = 0; c < 2; ++c) {
        if (cls[c].size() < 2) {
            sp.warnings.push_back(std::string("class ") + (c ? "1" : "0") + " has " +
                                  std::to_string(cls[c].size()) +
                                  " members; stratification not possible for it");
        }
        Rng rng = Rng::derive(seed, 0x53504c49u, c);  // stream key for splitting
        rng.shuffle(cls[c]);
        size_t n_train = static_cast<size_t>(std::llround(fraction * double(cls[c].size())));
        for (size_t i = 0; i < cls[c].size(); ++i)
            (i < n_train ? sp.train_ids : sp.test_ids).push_back(cls[c][i]);
    }
    std::sort(sp.train_ids.begin(), sp.train_ids.end());
    std::sort(sp.test_ids.begin(), sp.test_ids.end());
    return sp;
}

// ---- window taxonomy ------------------------------------------------------

const char* window_tag_name(WindowTag t) {
    switch (t) {
        case WindowTag::Total: return "Total";
        case WindowTag::Month: return "Month";
        case WindowTag::Week: return "Week";
        case WindowTag::Day: return "Day";
        case WindowTag::DayOfWeek: return "DayOfWeek";
        case WindowTag::HourOfDay: return "HourOfDay";
        case WindowTag::Business: return "Office";
        case WindowTag::NonBusiness: return "Rest";
        case WindowTag::Weekend: return "Weekend";
        case WindowTag::Weekday: return "Weekday";
    }
    return "?";
}

WindowSet::WindowSet(const DatasetConfig& cfg) : cfg_(cfg) {
    LocalFields first = local_fields(cfg.observation_start, cfg.utc_offset_s);
    LocalFields last = local_fields(cfg.observation_end - 1, cfg.utc_offset_s);
    day0_ = first.day_number;
    n_days_ = static_cast<int>(last.day_number - first.day_number) + 1;
    week0_ = day0_ - first.weekday;  // Monday on/before start
    n_weeks_ = static_cast<int>((last.day_number - week0_) / 7) + 1;

    // month buckets keyed by (year, month)
    month_day0_.clear();
    {
        int y = first.year, m = first.month;
        for (;;) {
            month_day0_.push_back(days_from_civil(y, m, 1));
            if (y == last.year && m == last.month) break;
            if (++m == 13) {
                m = 1;
                ++y;
            }
        }
    }
    n_months_ = static_cast<int>(month_day0_.size());

    auto day_key = [&](int64_t dn) {
        CivilDate cd = civil_from_days(dn);
        char buf[16];
        std::snprintf(buf, sizeof buf, "%04d%02d%02d", cd.year, cd.month, cd.day);
        return std::string(buf);
    };
    auto epoch_of_local_day = [&](int64_t dn) { return dn * 86400 - cfg.utc_offset_s; };

    static const char* dow_names[7] = {"Mon", "Tue", "Wed", "Thu", "Fri", "Sat", "Sun"};

    windows_.clear();
    idx_total_ = static_cast<int>(windows_.size());
    windows_.push_back({WindowTag::Total, "", cfg.observation_start, cfg.observation_end});
    idx_month_ = static_cast<int>(windows_.size());
    for (int m = 0; m < n_months_; ++m) {
        CivilDate cd = civil_from_days(month_day0_[m]);
        char buf[8];
        std::snprintf(buf, sizeof buf, "%04d%02d", cd.year, cd.month);
        int64_t end = m + 1 < n_months_ ? epoch_of_local_day(month_day0_[m + 1])
                                        : cfg.observation_end;
        windows_.push_back({WindowTag::Month, buf, epoch_of_local_day(month_day0_[m]), end});
    }
    idx_week_ = static_cast<int>(windows_.size());
    for (int w = 0; w < n_weeks_; ++w) {
        int64_t dn = week0_ + 7 * w;
        windows_.push_back({WindowTag::Week, day_key(dn), epoch_of_local_day(dn),
                            epoch_of_local_day(dn + 7)});
    }
    idx_day_ = static_cast<int>(windows_.size());
    for (int d = 0; d < n_days_; ++d) {
        windows_.push_back({WindowTag::Day, day_key(day0_ + d), epoch_of_local_day(day0_ + d),
                            epoch_of_local_day(day0_ + d + 1)});
    }
    idx_dow_ = static_cast<int>(windows_.size());
    for (int d = 0; d < 7; ++d) windows_.push_back({WindowTag::DayOfWeek, dow_names[d]});
    idx_hod_ = static_cast<int>(windows_.size());
    for (int h = 0; h < 24; ++h)
        windows_.push_back({WindowTag::HourOfDay, "h" + std::to_string(h)});
    idx_bus_ = static_cast<int>(windows_.size());
    windows_.push_back({WindowTag::Business, ""});
    idx_nonbus_ = static_cast<int>(windows_.size());
    windows_.push_back({WindowTag::NonBusiness, ""});
    idx_wknd_ = static_cast<int>(windows_.size());
    windows_.push_back({WindowTag::Weekend, ""});
    idx_wkday_ = static_cast<int>(windows_.size());
    windows_.push_back({WindowTag::Weekday, ""});
}

EventCalendar WindowSet::calendar(int64_t epoch_s) const {
    LocalFields f = local_fields(epoch_s, cfg_.utc_offset_s);
    EventCalendar c;
    c.day_idx = static_cast<int32_t>(f.day_number - day0_);
    c.week_idx = static_cast<int32_t>((f.day_number - week0_) / 7);
    c.month_idx = n_months_ - 1;
    for (int m = 0; m + 1 < n_months_; ++m) {
        if (f.day_number < month_day0_[m + 1]) {
            c.month_idx = m;
            break;
        }
    }
    c.dow = static_cast<uint8_t>(f.weekday);
    c.hour = static_cast<uint8_t>(f.hour);
    c.weekend = f.weekday >= 5;
    c.business = !c.weekend && f.hour >= cfg_.business_start_hour &&
                 f.hour < cfg_.business_end_hour;
    return c;
}

void WindowSet::window_indices(const EventCalendar& c, int out[8]) const {
    out[0] = idx_total_;
    out[1] = idx_month_ + c.month_idx;
    out[2] = idx_week_ + c.week_idx;
    out[3] = idx_day_ + c.day_idx;
    out[4] = idx_dow_ + c.dow;
    out[5] = idx_hod_ + c.hour;
    out[6] = c.business ? idx_bus_ : idx_nonbus_;
    out[7] = c.weekend ? idx_wknd_ : idx_wkday_;
}

}  // namespace cdrscope
