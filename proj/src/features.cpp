#include "cdrscope/features.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstring>
#include <fstream>
#include <limits>
#include <stdexcept>
#include <unordered_map>
#include <unordered_set>

#include "json.hpp"

namespace cdrscope {

namespace {

const char* kDowNames[7] = {"Mon", "Tue", "Wed", "Thu", "Fri", "Sat", "Sun"};

const char* dir_token(Direction d) {
    switch (d) {
        case Direction::In: return "In";
        case Direction::Out: return "Out";
        case Direction::InOut: return "InOut";
        case Direction::None: return "";
    }
    return "";
}

const char* kind_token(KindAxis k) {
    switch (k) {
        case KindAxis::Voice: return "Voice";
        case KindAxis::Data: return "Data";
        case KindAxis::All: return "All";
        case KindAxis::None: return "";
    }
    return "";
}

std::string window_token(const Window& w) {
    switch (w.tag) {
        case WindowTag::Total: return "Total";
        case WindowTag::Month: return "Month" + w.key;
        case WindowTag::Week: return "Week" + w.key;
        case WindowTag::Day: return "Day" + w.key;
        case WindowTag::DayOfWeek: return w.key;
        case WindowTag::HourOfDay: return w.key;
        case WindowTag::Business: return "Office";
        case WindowTag::NonBusiness: return "Rest";
        case WindowTag::Weekend: return "Weekend";
        case WindowTag::Weekday: return "Weekday";
    }
    return "?";
}

// Event indices per internal user, time-ordered (the event log is sorted).
struct UserEventIndex {
    std::vector<std::vector<uint32_t>> out;  // user is the caller
    std::vector<std::vector<uint32_t>> in;   // user is the callee
};

UserEventIndex index_events(const Dataset& ds) {
    UserEventIndex idx;
    idx.out.resize(ds.n_internal);
    idx.in.resize(ds.n_internal);
    for (uint32_t i = 0; i < ds.events.size(); ++i) {
        const CdrEvent& e = ds.events[i];
        if (ds.is_internal(e.caller)) idx.out[e.caller].push_back(i);
        if (ds.is_internal(e.callee)) idx.in[e.callee].push_back(i);
    }
    return idx;
}

constexpr size_t kDirs = 3;   // In, Out, InOut
constexpr size_t kKinds = 3;  // Voice, Data, All

size_t cell_of(size_t window, size_t dir, size_t kind) {
    return (window * kDirs + dir) * kKinds + kind;
}

FeatureColumn make_column(FeatureGroup g, std::string stat, std::string window, KindAxis k,
                          Direction d, size_t n) {
    FeatureColumn c;
    c.spec = FeatureSpec{g, std::move(stat), std::move(window), k, d};
    c.values.assign(n, 0.0);
    return c;
}

double median_of(std::vector<double>& v) {
    if (v.empty()) return 0.0;
    std::sort(v.begin(), v.end());
    size_t m = v.size() / 2;
    if (v.size() % 2 == 1) return v[m];
    return 0.5 * (v[m - 1] + v[m]);
}

// ---- smallest enclosing circle --------------------------------------------

struct Circle {
    double cx = 0.0, cy = 0.0, r = 0.0;
};

bool in_circle(const Circle& c, double x, double y) {
    double dx = x - c.cx, dy = y - c.cy;
    return std::sqrt(dx * dx + dy * dy) <= c.r * (1.0 + 1e-12) + 1e-12;
}

Circle circle_two(double ax, double ay, double bx, double by) {
    Circle c;
    c.cx = 0.5 * (ax + bx);
    c.cy = 0.5 * (ay + by);
    c.r = 0.5 * std::hypot(ax - bx, ay - by);
    return c;
}

Circle circle_three(double ax, double ay, double bx, double by, double cx, double cy) {
    double d = 2.0 * (ax * (by - cy) + bx * (cy - ay) + cx * (ay - by));
    double scale = std::max({std::abs(ax), std::abs(ay), std::abs(bx), std::abs(by),
                             std::abs(cx), std::abs(cy), 1.0});
    if (std::abs(d) < 1e-12 * scale * scale) {
        // collinear: the widest pair circle covers the middle point
        Circle best;
        best.r = -1.0;
        for (auto [px, py, qx, qy] : {std::array<double, 4>{ax, ay, bx, by},
                                      std::array<double, 4>{ax, ay, cx, cy},
                                      std::array<double, 4>{bx, by, cx, cy}}) {
            Circle t = circle_two(px, py, qx, qy);
            if (t.r > best.r) best = t;
        }
        return best;
    }
    double a2 = ax * ax + ay * ay, b2 = bx * bx + by * by, c2 = cx * cx + cy * cy;
    Circle out;
    out.cx = (a2 * (by - cy) + b2 * (cy - ay) + c2 * (ay - by)) / d;
    out.cy = (a2 * (cx - bx) + b2 * (ax - cx) + c2 * (bx - ax)) / d;
    out.r = std::hypot(ax - out.cx, ay - out.cy);
    return out;
}

// Deterministic incremental min-enclosing circle; input order is fixed by
// the caller (sorted, deduplicated points).
Circle min_enclosing_circle(const std::vector<std::pair<double, double>>& pts) {
    if (pts.empty()) return {};
    Circle c{pts[0].first, pts[0].second, 0.0};
    for (size_t i = 1; i < pts.size(); ++i) {
        if (in_circle(c, pts[i].first, pts[i].second)) continue;
        c = Circle{pts[i].first, pts[i].second, 0.0};
        for (size_t j = 0; j < i; ++j) {
            if (in_circle(c, pts[j].first, pts[j].second)) continue;
            c = circle_two(pts[i].first, pts[i].second, pts[j].first, pts[j].second);
            for (size_t k = 0; k < j; ++k) {
                if (in_circle(c, pts[k].first, pts[k].second)) continue;
                c = circle_three(pts[i].first, pts[i].second, pts[j].first, pts[j].second,
                                 pts[k].first, pts[k].second);
            }
        }
    }
    return c;
}

}  // namespace

const char* feature_group_name(FeatureGroup g) {
    switch (g) {
        case FeatureGroup::Network: return "NETWORK";
        case FeatureGroup::Consumption: return "CONSUMPTION";
        case FeatureGroup::Correspondent: return "CORRESPONDENT";
        case FeatureGroup::Reciprocated: return "RECIPROCATED";
        case FeatureGroup::Mobility: return "MOBILITY";
        case FeatureGroup::Location: return "LOCATION";
    }
    return "?";
}

std::string FeatureSpec::name() const {
    return stat + window + kind_token(kind) + dir_token(dir);
}

// ---- consumption -----------------------------------------------------------

std::vector<FeatureColumn> extract_consumption(const Dataset& ds, const WindowSet& ws) {
    const size_t n = ds.n_internal;
    const size_t n_cells = ws.size() * kDirs * kKinds;

    std::vector<FeatureColumn> cols;
    std::vector<int32_t> idx_count(n_cells, -1), idx_gap(n_cells, -1), idx_durt(n_cells, -1),
        idx_durm(n_cells, -1);
    for (size_t w = 0; w < ws.size(); ++w) {
        std::string tok = window_token(ws.windows()[w]);
        for (size_t d = 0; d < kDirs; ++d) {
            for (size_t k = 0; k < kKinds; ++k) {
                size_t cell = cell_of(w, d, k);
                idx_count[cell] = int32_t(cols.size());
                cols.push_back(make_column(FeatureGroup::Consumption, "count", tok,
                                           KindAxis(k), Direction(d), n));
                idx_gap[cell] = int32_t(cols.size());
                cols.push_back(make_column(FeatureGroup::Consumption, "gapMean", tok,
                                           KindAxis(k), Direction(d), n));
                if (KindAxis(k) == KindAxis::Voice) {
                    idx_durt[cell] = int32_t(cols.size());
                    cols.push_back(make_column(FeatureGroup::Consumption, "durTotal", tok,
                                               KindAxis(k), Direction(d), n));
                    idx_durm[cell] = int32_t(cols.size());
                    cols.push_back(make_column(FeatureGroup::Consumption, "durMean", tok,
                                               KindAxis(k), Direction(d), n));
                }
            }
        }
    }

    UserEventIndex idx = index_events(ds);
    std::vector<uint64_t> cnt(n_cells, 0), dur(n_cells, 0);
    std::vector<int64_t> tmin(n_cells, 0), tmax(n_cells, 0);
    std::vector<uint32_t> touched;
    int win[8];

    auto add_event = [&](const CdrEvent& e, size_t dir0) {
        EventCalendar cal = ws.calendar(e.timestamp);
        ws.window_indices(cal, win);
        size_t kind0 = e.kind == EventKind::Call ? 0 : 1;
        for (int wi = 0; wi < 8; ++wi) {
            for (size_t d : {dir0, size_t(Direction::InOut)}) {
                for (size_t k : {kind0, size_t(KindAxis::All)}) {
                    size_t cell = cell_of(size_t(win[wi]), d, k);
                    if (cnt[cell] == 0) {
                        touched.push_back(uint32_t(cell));
                        tmin[cell] = tmax[cell] = e.timestamp;
                    } else {
                        tmin[cell] = std::min(tmin[cell], e.timestamp);
                        tmax[cell] = std::max(tmax[cell], e.timestamp);
                    }
                    ++cnt[cell];
                    if (k == size_t(KindAxis::Voice)) dur[cell] += e.duration_s;
                }
            }
        }
    };

    for (uint32_t u = 0; u < n; ++u) {
        for (uint32_t i : idx.out[u]) add_event(ds.events[i], size_t(Direction::Out));
        for (uint32_t i : idx.in[u]) add_event(ds.events[i], size_t(Direction::In));
        for (uint32_t cell : touched) {
            uint64_t c = cnt[cell];
            cols[idx_count[cell]].values[u] = double(c);
            if (c >= 2)
                cols[idx_gap[cell]].values[u] = double(tmax[cell] - tmin[cell]) / double(c - 1);
            if (idx_durt[cell] >= 0) {
                cols[idx_durt[cell]].values[u] = double(dur[cell]);
                cols[idx_durm[cell]].values[u] = double(dur[cell]) / double(c);
            }
            cnt[cell] = 0;
            dur[cell] = 0;
        }
        touched.clear();
    }
    return cols;
}

// ---- correspondent ---------------------------------------------------------

std::vector<FeatureColumn> extract_correspondent(const Dataset& ds, const WindowSet& ws,
                                                 const FeatureExtractOptions& opt) {
    const size_t n = ds.n_internal;
    const size_t n_cells = ws.size() * kDirs * kKinds;

    std::vector<FeatureColumn> cols;
    std::vector<int32_t> idx_uniq(n_cells, -1);
    for (size_t w = 0; w < ws.size(); ++w) {
        std::string tok = window_token(ws.windows()[w]);
        for (size_t d = 0; d < kDirs; ++d) {
            for (size_t k = 0; k < kKinds; ++k) {
                idx_uniq[cell_of(w, d, k)] = int32_t(cols.size());
                cols.push_back(make_column(FeatureGroup::Correspondent, "uniqCorr", tok,
                                           KindAxis(k), Direction(d), n));
            }
        }
    }
    size_t idx_reg_voice = cols.size();
    cols.push_back(make_column(FeatureGroup::Correspondent, "regCorr", "Total",
                               KindAxis::Voice, Direction::InOut, n));
    size_t idx_reg_data = cols.size();
    cols.push_back(make_column(FeatureGroup::Correspondent, "regCorr", "Total",
                               KindAxis::Data, Direction::InOut, n));
    size_t idx_pct_msg = cols.size();
    cols.push_back(make_column(FeatureGroup::Correspondent, "pctMsg", "Total", KindAxis::All,
                               Direction::In, n));

    const double weeks = ds.observation_days() / 7.0;
    const size_t total_win = size_t(ws.total_index());

    UserEventIndex idx = index_events(ds);
    std::vector<uint64_t> tuples;
    int win[8];

    auto add_event = [&](const CdrEvent& e, size_t dir0, NodeId other) {
        EventCalendar cal = ws.calendar(e.timestamp);
        ws.window_indices(cal, win);
        size_t kind0 = e.kind == EventKind::Call ? 0 : 1;
        for (int wi = 0; wi < 8; ++wi) {
            for (size_t d : {dir0, size_t(Direction::InOut)}) {
                for (size_t k : {kind0, size_t(KindAxis::All)}) {
                    tuples.push_back((uint64_t(win[wi]) << 36) | (uint64_t(d) << 34) |
                                     (uint64_t(k) << 32) | uint64_t(other));
                }
            }
        }
    };

    for (uint32_t u = 0; u < n; ++u) {
        tuples.clear();
        uint64_t msgs_in = 0, events_in = 0;
        for (uint32_t i : idx.out[u])
            add_event(ds.events[i], size_t(Direction::Out), ds.events[i].callee);
        for (uint32_t i : idx.in[u]) {
            const CdrEvent& e = ds.events[i];
            add_event(e, size_t(Direction::In), e.caller);
            ++events_in;
            if (e.kind == EventKind::Message) ++msgs_in;
        }
        std::sort(tuples.begin(), tuples.end());

        uint64_t reg_voice = 0, reg_data = 0;
        for (size_t i = 0; i < tuples.size();) {
            size_t j = i;
            while (j < tuples.size() && tuples[j] == tuples[i]) ++j;
            uint64_t t = tuples[i];
            size_t w = size_t(t >> 36), d = size_t((t >> 34) & 3), k = size_t((t >> 32) & 3);
            cols[idx_uniq[cell_of(w, d, k)]].values[u] += 1.0;
            if (w == total_win && d == size_t(Direction::InOut)) {
                double per_week = double(j - i) / weeks;
                if (k == size_t(KindAxis::Voice) &&
                    per_week >= opt.regular_calls_per_week - 1e-9)
                    ++reg_voice;
                if (k == size_t(KindAxis::Data) &&
                    per_week >= opt.regular_msgs_per_week - 1e-9)
                    ++reg_data;
            }
            i = j;
        }
        cols[idx_reg_voice].values[u] = double(reg_voice);
        cols[idx_reg_data].values[u] = double(reg_data);
        if (events_in > 0) cols[idx_pct_msg].values[u] = double(msgs_in) / double(events_in);
    }
    return cols;
}

// ---- reciprocated ----------------------------------------------------------

std::vector<FeatureColumn> extract_reciprocated(const Dataset& ds, const WindowSet& ws,
                                                const FeatureExtractOptions& opt) {
    if (opt.reciprocated_buckets < 1 || 24 % opt.reciprocated_buckets != 0)
        throw std::invalid_argument("reciprocated_buckets must divide 24");
    if (opt.response_window_s <= 0)
        throw std::invalid_argument("response window must be positive");

    const size_t n = ds.n_internal;
    const int buckets = opt.reciprocated_buckets;
    const int bucket_hours = 24 / buckets;

    std::vector<FeatureColumn> cols;
    // cell (dow, bucket, kind) -> column
    std::vector<size_t> idx_cell(size_t(7) * buckets * 2);
    for (int dow = 0; dow < 7; ++dow) {
        for (int b = 0; b < buckets; ++b) {
            std::string tok =
                std::string(kDowNames[dow]) + "h" + std::to_string(b * bucket_hours);
            for (int k = 0; k < 2; ++k) {
                idx_cell[(size_t(dow) * buckets + b) * 2 + k] = cols.size();
                cols.push_back(make_column(FeatureGroup::Reciprocated, "recipCount", tok,
                                           KindAxis(k), Direction::In, n));
            }
        }
    }
    size_t idx_total[2], idx_median[2];
    for (int k = 0; k < 2; ++k) {
        idx_total[k] = cols.size();
        cols.push_back(make_column(FeatureGroup::Reciprocated, "recipCount", "Total",
                                   KindAxis(k), Direction::In, n));
        idx_median[k] = cols.size();
        cols.push_back(make_column(FeatureGroup::Reciprocated, "recipMedian", "Total",
                                   KindAxis(k), Direction::In, n));
    }

    UserEventIndex idx = index_events(ds);
    // outgoing events keyed by (party, kind), times ascending
    std::vector<std::tuple<NodeId, uint8_t, int64_t>> outs;
    std::vector<double> gaps[2];

    for (uint32_t u = 0; u < n; ++u) {
        outs.clear();
        gaps[0].clear();
        gaps[1].clear();
        for (uint32_t i : idx.out[u]) {
            const CdrEvent& e = ds.events[i];
            outs.emplace_back(e.callee, uint8_t(e.kind), e.timestamp);
        }
        std::sort(outs.begin(), outs.end());

        for (uint32_t i : idx.in[u]) {
            const CdrEvent& e = ds.events[i];
            auto it = std::lower_bound(
                outs.begin(), outs.end(),
                std::make_tuple(e.caller, uint8_t(e.kind), e.timestamp));
            if (it == outs.end() || std::get<0>(*it) != e.caller ||
                std::get<1>(*it) != uint8_t(e.kind))
                continue;
            int64_t gap = std::get<2>(*it) - e.timestamp;
            if (gap > opt.response_window_s) continue;
            size_t k = size_t(e.kind == EventKind::Call ? 0 : 1);
            EventCalendar cal = ws.calendar(e.timestamp);
            size_t cell = (size_t(cal.dow) * buckets + cal.hour / bucket_hours) * 2 + k;
            cols[idx_cell[cell]].values[u] += 1.0;
            cols[idx_total[k]].values[u] += 1.0;
            gaps[k].push_back(double(gap));
        }
        for (int k = 0; k < 2; ++k) cols[idx_median[k]].values[u] = median_of(gaps[k]);
    }
    return cols;
}

// ---- mobility --------------------------------------------------------------

std::vector<FeatureColumn> extract_mobility(const Dataset& ds, const WindowSet& ws) {
    const size_t n = ds.n_internal;
    std::vector<FeatureColumn> cols;
    size_t idx_radius = cols.size();
    cols.push_back(make_column(FeatureGroup::Mobility, "meanDailyRadius", "", KindAxis::None,
                               Direction::None, n));
    size_t idx_dist0 = cols.size();
    for (int d = 0; d < 7; ++d)
        cols.push_back(make_column(FeatureGroup::Mobility, "dayDist", kDowNames[d],
                                   KindAxis::None, Direction::None, n));
    size_t idx_popular = cols.size();
    cols.push_back(make_column(FeatureGroup::Mobility, "numPopularTowers", "", KindAxis::None,
                               Direction::None, n));
    size_t idx_uniq_week = cols.size();
    cols.push_back(make_column(FeatureGroup::Mobility, "uniqTowersPerWeek", "", KindAxis::None,
                               Direction::None, n));

    UserEventIndex idx = index_events(ds);
    std::vector<std::pair<double, double>> day_pts;
    std::vector<std::pair<int32_t, int32_t>> week_towers;  // (week_idx, tower)
    std::unordered_map<int32_t, uint64_t> tower_counts;

    for (uint32_t u = 0; u < n; ++u) {
        double radius_sum = 0.0;
        uint64_t active_days = 0;
        double dow_dist[7] = {};
        uint64_t dow_days[7] = {};
        week_towers.clear();
        tower_counts.clear();

        int32_t cur_day = -1;
        uint8_t cur_dow = 0;
        double day_travel = 0.0, px = 0.0, py = 0.0;
        bool have_prev = false;
        day_pts.clear();

        auto close_day = [&]() {
            if (cur_day < 0) return;
            std::sort(day_pts.begin(), day_pts.end());
            day_pts.erase(std::unique(day_pts.begin(), day_pts.end()), day_pts.end());
            radius_sum += min_enclosing_circle(day_pts).r;
            ++active_days;
            dow_dist[cur_dow] += day_travel;
            ++dow_days[cur_dow];
            day_pts.clear();
            day_travel = 0.0;
            have_prev = false;
        };

        for (uint32_t i : idx.out[u]) {
            const CdrEvent& e = ds.events[i];
            if (e.tower < 0) continue;
            const TowerRecord& t = ds.towers[e.tower];
            EventCalendar cal = ws.calendar(e.timestamp);
            if (cal.day_idx != cur_day) {
                close_day();
                cur_day = cal.day_idx;
                cur_dow = cal.dow;
            }
            day_pts.emplace_back(t.x_km, t.y_km);
            if (have_prev) day_travel += std::hypot(t.x_km - px, t.y_km - py);
            px = t.x_km;
            py = t.y_km;
            have_prev = true;
            week_towers.emplace_back(cal.week_idx, e.tower);
            ++tower_counts[e.tower];
        }
        close_day();

        if (active_days > 0) cols[idx_radius].values[u] = radius_sum / double(active_days);
        for (int d = 0; d < 7; ++d)
            if (dow_days[d] > 0)
                cols[idx_dist0 + d].values[u] = dow_dist[d] / double(dow_days[d]);

        if (!tower_counts.empty()) {
            std::vector<std::pair<uint64_t, int32_t>> by_count;
            uint64_t total = 0;
            for (auto& [tid, c] : tower_counts) {
                by_count.emplace_back(c, tid);
                total += c;
            }
            std::sort(by_count.begin(), by_count.end(), [](const auto& a, const auto& b) {
                return a.first != b.first ? a.first > b.first : a.second < b.second;
            });
            uint64_t cum = 0, popular = 0;
            for (auto& [c, tid] : by_count) {
                cum += c;
                ++popular;
                if (cum * 10 >= total * 9) break;
            }
            cols[idx_popular].values[u] = double(popular);

            std::sort(week_towers.begin(), week_towers.end());
            week_towers.erase(std::unique(week_towers.begin(), week_towers.end()),
                              week_towers.end());
            uint64_t distinct_sum = week_towers.size();
            uint64_t active_weeks = 0;
            for (size_t i = 0; i < week_towers.size();) {
                size_t j = i;
                while (j < week_towers.size() &&
                       week_towers[j].first == week_towers[i].first)
                    ++j;
                ++active_weeks;
                i = j;
            }
            cols[idx_uniq_week].values[u] = double(distinct_sum) / double(active_weeks);
        }
    }
    return cols;
}

// ---- location --------------------------------------------------------------

std::vector<FeatureColumn> extract_location(const Dataset& ds,
                                            const std::vector<NodeId>& train_ids,
                                            const FeatureExtractOptions& opt) {
    const size_t n = ds.n_internal;
    if (train_ids.empty()) throw std::invalid_argument("empty train set");
    std::vector<uint8_t> is_train(n, 0);
    uint64_t train_defaults = 0;
    for (NodeId u : train_ids) {
        if (u >= n) throw std::invalid_argument("train id out of range");
        is_train[u] = 1;
        if (ds.users[u].defaulted) ++train_defaults;
    }
    double global_rate = double(train_defaults) / double(train_ids.size());

    UserEventIndex idx = index_events(ds);

    // per-user located record counts per tower, and top-2 towers
    std::vector<int32_t> top1(n, -1), top2(n, -1);
    std::unordered_map<int32_t, std::pair<uint64_t, uint64_t>> tower_users;  // users, defaulters
    std::unordered_map<int32_t, uint64_t> counts;
    for (uint32_t u = 0; u < n; ++u) {
        counts.clear();
        for (uint32_t i : idx.out[u]) {
            const CdrEvent& e = ds.events[i];
            if (e.tower >= 0) ++counts[e.tower];
        }
        std::vector<std::pair<uint64_t, int32_t>> by_count;
        by_count.reserve(counts.size());
        for (auto& [tid, c] : counts) by_count.emplace_back(c, tid);
        std::sort(by_count.begin(), by_count.end(), [](const auto& a, const auto& b) {
            return a.first != b.first ? a.first > b.first : a.second < b.second;
        });
        if (!by_count.empty()) top1[u] = by_count[0].second;
        if (by_count.size() > 1) top2[u] = by_count[1].second;
        if (is_train[u]) {
            for (auto& [tid, c] : counts) {
                auto& tu = tower_users[tid];
                ++tu.first;
                if (ds.users[u].defaulted) ++tu.second;
            }
        }
    }

    auto tower_pd = [&](int32_t tid) {
        if (tid < 0) return global_rate;
        auto it = tower_users.find(tid);
        if (it == tower_users.end() || it->second.first == 0) return global_rate;
        return double(it->second.second) / double(it->second.first);
    };

    std::vector<FeatureColumn> cols;
    cols.push_back(make_column(FeatureGroup::Location, "towerPdTop1", "", KindAxis::None,
                               Direction::None, n));
    cols.push_back(make_column(FeatureGroup::Location, "towerPdTop2", "", KindAxis::None,
                               Direction::None, n));
    for (uint32_t u = 0; u < n; ++u) {
        cols[0].values[u] = tower_pd(top1[u]);
        cols[1].values[u] = tower_pd(top2[u]);
    }

    if (opt.location_one_hot) {
        // one column per tower that is some train user's top tower
        std::vector<int32_t> hot;
        for (NodeId u : train_ids)
            if (top1[u] >= 0) hot.push_back(top1[u]);
        std::sort(hot.begin(), hot.end());
        hot.erase(std::unique(hot.begin(), hot.end()), hot.end());
        for (int32_t tid : hot) {
            FeatureColumn c = make_column(FeatureGroup::Location,
                                          "towerTop1Is" + ds.tower_names.name(NodeId(tid)),
                                          "", KindAxis::None, Direction::None, n);
            for (uint32_t u = 0; u < n; ++u) c.values[u] = top1[u] == tid ? 1.0 : 0.0;
            cols.push_back(std::move(c));
        }
    }
    return cols;
}

// ---- network ---------------------------------------------------------------

std::vector<FeatureColumn> extract_network(const Dataset& ds, const WeightedDigraph& g,
                                           const CentralityResult& cent,
                                           const ReciprocityResult& recip,
                                           const CommunityCover& cover) {
    const size_t n = ds.n_internal;
    std::vector<FeatureColumn> cols;
    for (const char* stat :
         {"degreeTotal", "recipWeighted", "harmonicCent", "commSizeRank", "commSize"})
        cols.push_back(
            make_column(FeatureGroup::Network, stat, "", KindAxis::None, Direction::None, n));

    // label -> (size, size rank); rank 1 is the largest community
    std::unordered_map<NodeId, std::pair<size_t, size_t>> by_label;
    {
        std::vector<std::pair<size_t, NodeId>> order;  // (size, label)
        order.reserve(cover.communities.size());
        for (const Community& c : cover.communities)
            order.emplace_back(c.members.size(), c.label);
        std::sort(order.begin(), order.end(), [](const auto& a, const auto& b) {
            return a.first != b.first ? a.first > b.first : a.second < b.second;
        });
        for (size_t i = 0; i < order.size(); ++i)
            by_label[order[i].second] = {order[i].first, i + 1};
    }

    for (uint32_t u = 0; u < n; ++u) {
        if (u < g.node_count()) {
            cols[0].values[u] = double(g.out_degree(u) + g.in_degree(u));
            if (u < recip.r.size() && !std::isnan(recip.r[u]))
                cols[1].values[u] = recip.r[u];
            if (u < cent.c_h.size()) cols[2].values[u] = cent.c_h[u];
        }
        if (u < cover.node_labels.size() && !cover.node_labels[u].empty()) {
            size_t best_size = 0, best_rank = 0;
            for (NodeId label : cover.node_labels[u]) {
                auto it = by_label.find(label);
                if (it == by_label.end()) continue;
                auto [size, rank] = it->second;
                if (size > best_size || (size == best_size && rank < best_rank)) {
                    best_size = size;
                    best_rank = rank;
                }
            }
            cols[3].values[u] = double(best_rank);
            cols[4].values[u] = double(best_size);
        }
    }
    return cols;
}

// ---- assembly --------------------------------------------------------------

namespace {

FeatureMatrix assemble_impl(std::vector<FeatureColumn> columns, size_t n,
                            std::vector<uint8_t> y, std::vector<uint8_t> in_train,
                            int business_start, int business_end) {
    size_t n_train = 0;
    for (uint8_t t : in_train) n_train += t;
    if (n_train == 0) throw std::invalid_argument("empty train set");

    std::vector<size_t> order(columns.size());
    for (size_t i = 0; i < order.size(); ++i) order[i] = i;
    std::vector<std::string> col_names(columns.size());
    for (size_t i = 0; i < columns.size(); ++i) {
        if (columns[i].values.size() != n)
            throw std::invalid_argument("column length mismatch: " + columns[i].spec.name());
        col_names[i] = columns[i].spec.name();
    }
    std::sort(order.begin(), order.end(), [&](size_t a, size_t b) {
        uint8_t ga = uint8_t(columns[a].spec.group), gb = uint8_t(columns[b].spec.group);
        if (ga != gb) return ga < gb;
        return col_names[a] < col_names[b];
    });
    for (size_t i = 1; i < order.size(); ++i)
        if (col_names[order[i - 1]] == col_names[order[i]])
            throw std::invalid_argument("duplicate feature name: " + col_names[order[i]]);

    FeatureMatrix fm;
    fm.n = uint32_t(n);
    fm.y = std::move(y);
    fm.in_train = std::move(in_train);
    fm.business_start_hour = business_start;
    fm.business_end_hour = business_end;

    std::vector<size_t> kept;
    for (size_t i : order) {
        const std::vector<double>& v = columns[i].values;
        double lo = std::numeric_limits<double>::infinity(), hi = -lo;
        double sum = 0.0;
        for (size_t r = 0; r < n; ++r) {
            if (!fm.in_train[r]) continue;
            lo = std::min(lo, v[r]);
            hi = std::max(hi, v[r]);
            sum += v[r];
        }
        if (lo == hi) {
            fm.dropped.push_back(col_names[i]);
            continue;
        }
        double mean = sum / double(n_train);
        double ss = 0.0;
        for (size_t r = 0; r < n; ++r) {
            if (!fm.in_train[r]) continue;
            double d = v[r] - mean;
            ss += d * d;
        }
        double var = ss / double(n_train);
        if (var <= 0.0) {
            fm.dropped.push_back(col_names[i]);
            continue;
        }
        kept.push_back(i);
        fm.mu.push_back(mean);
        fm.sigma.push_back(std::sqrt(var));
    }

    fm.p = uint32_t(kept.size());
    fm.x.assign(size_t(fm.n) * fm.p, 0.0);
    fm.specs.reserve(fm.p);
    fm.names.reserve(fm.p);
    for (uint32_t c = 0; c < fm.p; ++c) {
        const FeatureColumn& col = columns[kept[c]];
        fm.specs.push_back(col.spec);
        fm.names.push_back(col_names[kept[c]]);
        double mu = fm.mu[c], sd = fm.sigma[c];
        for (uint32_t r = 0; r < fm.n; ++r)
            fm.x[size_t(r) * fm.p + c] = (col.values[r] - mu) / sd;
    }
    return fm;
}

}  // namespace

FeatureMatrix assemble_and_normalize(std::vector<FeatureColumn> columns, const Dataset& ds,
                                     const std::vector<NodeId>& train_ids) {
    std::vector<uint8_t> y(ds.n_internal, 0), in_train(ds.n_internal, 0);
    for (uint32_t u = 0; u < ds.n_internal; ++u) y[u] = ds.users[u].defaulted ? 1 : 0;
    for (NodeId u : train_ids) {
        if (u >= ds.n_internal) throw std::invalid_argument("train id out of range");
        in_train[u] = 1;
    }
    return assemble_impl(std::move(columns), ds.n_internal, std::move(y), std::move(in_train),
                         ds.config.business_start_hour, ds.config.business_end_hour);
}

std::vector<uint32_t> FeatureMatrix::train_rows() const {
    std::vector<uint32_t> rows;
    for (uint32_t r = 0; r < n; ++r)
        if (in_train[r]) rows.push_back(r);
    return rows;
}

std::vector<uint32_t> FeatureMatrix::test_rows() const {
    std::vector<uint32_t> rows;
    for (uint32_t r = 0; r < n; ++r)
        if (!in_train[r]) rows.push_back(r);
    return rows;
}

std::map<std::string, uint32_t> FeatureMatrix::group_counts() const {
    std::map<std::string, uint32_t> counts;
    for (const FeatureSpec& s : specs) ++counts[feature_group_name(s.group)];
    return counts;
}

int64_t FeatureMatrix::column_index(const std::string& name) const {
    for (uint32_t c = 0; c < p; ++c)
        if (names[c] == name) return int64_t(c);
    return -1;
}

FeatureMatrix subset_columns(const FeatureMatrix& fm, const std::vector<uint32_t>& keep) {
    FeatureMatrix out;
    out.n = fm.n;
    out.p = uint32_t(keep.size());
    out.y = fm.y;
    out.in_train = fm.in_train;
    out.business_start_hour = fm.business_start_hour;
    out.business_end_hour = fm.business_end_hour;
    out.x.resize(size_t(out.n) * out.p);
    for (uint32_t c = 0; c < out.p; ++c) {
        uint32_t src = keep[c];
        if (src >= fm.p) throw std::invalid_argument("column index out of range");
        out.specs.push_back(fm.specs[src]);
        out.names.push_back(fm.names[src]);
        out.mu.push_back(fm.mu[src]);
        out.sigma.push_back(fm.sigma[src]);
        for (uint32_t r = 0; r < out.n; ++r)
            out.x[size_t(r) * out.p + c] = fm.at(r, src);
    }
    return out;
}

std::vector<uint32_t> columns_in_group(const FeatureMatrix& fm, FeatureGroup g) {
    std::vector<uint32_t> cols;
    for (uint32_t c = 0; c < fm.p; ++c)
        if (fm.specs[c].group == g) cols.push_back(c);
    return cols;
}

std::vector<uint32_t> columns_not_in_group(const FeatureMatrix& fm, FeatureGroup g) {
    std::vector<uint32_t> cols;
    for (uint32_t c = 0; c < fm.p; ++c)
        if (fm.specs[c].group != g) cols.push_back(c);
    return cols;
}

// ---- point-biserial --------------------------------------------------------

double point_biserial(const std::vector<double>& column, const std::vector<uint8_t>& y) {
    if (column.size() != y.size()) throw std::invalid_argument("length mismatch");
    size_t n = y.size(), n1 = 0;
    for (uint8_t v : y) n1 += v ? 1 : 0;
    size_t n0 = n - n1;
    if (n1 == 0 || n0 == 0) throw std::invalid_argument("labels must contain both classes");

    double s1 = 0.0, s0 = 0.0, sum = 0.0;
    for (size_t i = 0; i < n; ++i) {
        sum += column[i];
        (y[i] ? s1 : s0) += column[i];
    }
    double mean = sum / double(n);
    double ss = 0.0;
    for (double v : column) {
        double d = v - mean;
        ss += d * d;
    }
    double sn = std::sqrt(ss / double(n));
    if (sn == 0.0) return 0.0;
    double m1 = s1 / double(n1), m0 = s0 / double(n0);
    return (m1 - m0) / sn * std::sqrt(double(n1) * double(n0) / (double(n) * double(n)));
}

std::vector<std::pair<std::string, double>> rank_point_biserial(const FeatureMatrix& fm,
                                                                bool train_only) {
    std::vector<uint32_t> rows;
    for (uint32_t r = 0; r < fm.n; ++r)
        if (!train_only || fm.in_train[r]) rows.push_back(r);
    std::vector<uint8_t> y;
    y.reserve(rows.size());
    for (uint32_t r : rows) y.push_back(fm.y[r]);

    std::vector<std::pair<std::string, double>> out;
    out.reserve(fm.p);
    std::vector<double> col(rows.size());
    for (uint32_t c = 0; c < fm.p; ++c) {
        for (size_t i = 0; i < rows.size(); ++i) col[i] = fm.at(rows[i], c);
        out.emplace_back(fm.names[c], point_biserial(col, y));
    }
    std::sort(out.begin(), out.end(), [](const auto& a, const auto& b) {
        double fa = std::abs(a.second), fb = std::abs(b.second);
        if (fa != fb) return fa > fb;
        return a.first < b.first;
    });
    return out;
}

// ---- aggregation -----------------------------------------------------------

namespace {

bool all_digits(const std::string& s, size_t from, size_t len) {
    if (s.size() != from + len) return false;
    for (size_t i = from; i < from + len; ++i)
        if (!std::isdigit(static_cast<unsigned char>(s[i]))) return false;
    return true;
}

int dow_of_date_token(const std::string& s, size_t from) {
    int y = std::stoi(s.substr(from, 4));
    int m = std::stoi(s.substr(from + 4, 2));
    int d = std::stoi(s.substr(from + 6, 2));
    return weekday_from_days(days_from_civil(y, m, d));
}

// Window-token rewrite for the aggregated matrix; identity when the token
// does not belong to a collapsible family.
std::string aggregate_token(const FeatureSpec& spec, int business_start, int business_end) {
    const std::string& w = spec.window;
    if (spec.group == FeatureGroup::Consumption || spec.group == FeatureGroup::Correspondent) {
        if (w.rfind("Day", 0) == 0 && all_digits(w, 3, 8))
            return dow_of_date_token(w, 3) >= 5 ? "AggWeekend" : "AggWeekday";
        if (w.rfind("Week", 0) == 0 && all_digits(w, 4, 8)) return "AggWeek";
        if (w.rfind("Month", 0) == 0 && all_digits(w, 5, 6)) return "AggMonth";
        if (w.size() >= 2 && w[0] == 'h' && all_digits(w, 1, w.size() - 1)) {
            int h = std::stoi(w.substr(1));
            return h >= business_start && h < business_end ? "AggOffice" : "AggOffhours";
        }
    }
    if (spec.group == FeatureGroup::Reciprocated) {
        for (const char* dow : kDowNames) {
            std::string prefix = std::string(dow) + "h";
            if (w.rfind(prefix, 0) == 0 && all_digits(w, prefix.size(), w.size() - prefix.size()))
                return std::string("Agg") + dow;
        }
    }
    return w;
}

}  // namespace

FeatureMatrix aggregate_features(const FeatureMatrix& fm) {
    // family key -> (column spec, member columns)
    std::map<std::string, std::pair<FeatureSpec, std::vector<uint32_t>>> families;
    for (uint32_t c = 0; c < fm.p; ++c) {
        FeatureSpec spec = fm.specs[c];
        spec.window = aggregate_token(spec, fm.business_start_hour, fm.business_end_hour);
        std::string key = std::string(feature_group_name(spec.group)) + "|" + spec.name();
        auto it = families.try_emplace(key, spec, std::vector<uint32_t>{}).first;
        it->second.second.push_back(c);
    }

    std::vector<FeatureColumn> columns;
    columns.reserve(families.size());
    for (auto& [key, fam] : families) {
        FeatureColumn col;
        col.spec = fam.first;
        col.values.assign(fm.n, 0.0);
        double inv = 1.0 / double(fam.second.size());
        for (uint32_t src : fam.second)
            for (uint32_t r = 0; r < fm.n; ++r) col.values[r] += fm.raw(r, src) * inv;
        columns.push_back(std::move(col));
    }
    return assemble_impl(std::move(columns), fm.n, fm.y, fm.in_train, fm.business_start_hour,
                         fm.business_end_hour);
}

// ---- persistence -----------------------------------------------------------

namespace {
constexpr char kMagic[8] = {'C', 'D', 'R', 'F', 'E', 'A', 'T', '1'};
}

void save_feature_matrix(const FeatureMatrix& fm, const std::string& bin_path,
                         const std::string& json_path) {
    std::ofstream bin(bin_path, std::ios::binary);
    if (!bin) throw std::runtime_error("cannot open for writing: " + bin_path);
    bin.write(kMagic, sizeof kMagic);
    uint32_t dims[2] = {fm.n, fm.p};
    bin.write(reinterpret_cast<const char*>(dims), sizeof dims);
    bin.write(reinterpret_cast<const char*>(fm.x.data()),
              std::streamsize(fm.x.size() * sizeof(double)));
    if (!bin) throw std::runtime_error("short write: " + bin_path);

    nlohmann::json j;
    j["n"] = fm.n;
    j["p"] = fm.p;
    j["business_start_hour"] = fm.business_start_hour;
    j["business_end_hour"] = fm.business_end_hour;
    j["dropped"] = fm.dropped;
    j["y"] = fm.y;
    j["in_train"] = fm.in_train;
    j["mu"] = fm.mu;
    j["sigma"] = fm.sigma;
    auto& cols = j["columns"] = nlohmann::json::array();
    for (uint32_t c = 0; c < fm.p; ++c) {
        const FeatureSpec& s = fm.specs[c];
        cols.push_back({{"group", feature_group_name(s.group)},
                        {"stat", s.stat},
                        {"window", s.window},
                        {"kind", kind_token(s.kind)},
                        {"dir", dir_token(s.dir)}});
    }
    std::ofstream js(json_path);
    if (!js) throw std::runtime_error("cannot open for writing: " + json_path);
    js << j.dump(2) << "\n";
}

FeatureMatrix load_feature_matrix(const std::string& bin_path, const std::string& json_path) {
    std::ifstream js(json_path);
    if (!js) throw std::runtime_error("cannot open: " + json_path);
    nlohmann::json j = nlohmann::json::parse(js);

    FeatureMatrix fm;
    fm.n = j.at("n").get<uint32_t>();
    fm.p = j.at("p").get<uint32_t>();
    fm.business_start_hour = j.at("business_start_hour").get<int>();
    fm.business_end_hour = j.at("business_end_hour").get<int>();
    fm.dropped = j.at("dropped").get<std::vector<std::string>>();
    fm.y = j.at("y").get<std::vector<uint8_t>>();
    fm.in_train = j.at("in_train").get<std::vector<uint8_t>>();
    fm.mu = j.at("mu").get<std::vector<double>>();
    fm.sigma = j.at("sigma").get<std::vector<double>>();

    auto group_of = [](const std::string& s) {
        for (int g = 0; g < kFeatureGroupCount; ++g)
            if (s == feature_group_name(FeatureGroup(g))) return FeatureGroup(g);
        throw std::runtime_error("unknown feature group: " + s);
    };
    auto kind_of = [](const std::string& s) {
        if (s == "Voice") return KindAxis::Voice;
        if (s == "Data") return KindAxis::Data;
        if (s == "All") return KindAxis::All;
        if (s.empty()) return KindAxis::None;
        throw std::runtime_error("unknown kind: " + s);
    };
    auto dir_of = [](const std::string& s) {
        if (s == "In") return Direction::In;
        if (s == "Out") return Direction::Out;
        if (s == "InOut") return Direction::InOut;
        if (s.empty()) return Direction::None;
        throw std::runtime_error("unknown direction: " + s);
    };
    for (const auto& c : j.at("columns")) {
        FeatureSpec s;
        s.group = group_of(c.at("group").get<std::string>());
        s.stat = c.at("stat").get<std::string>();
        s.window = c.at("window").get<std::string>();
        s.kind = kind_of(c.at("kind").get<std::string>());
        s.dir = dir_of(c.at("dir").get<std::string>());
        fm.specs.push_back(s);
        fm.names.push_back(s.name());
    }
    if (fm.specs.size() != fm.p || fm.y.size() != fm.n || fm.in_train.size() != fm.n ||
        fm.mu.size() != fm.p || fm.sigma.size() != fm.p)
        throw std::runtime_error("inconsistent feature sidecar: " + json_path);

    std::ifstream bin(bin_path, std::ios::binary);
    if (!bin) throw std::runtime_error("cannot open: " + bin_path);
    char magic[8];
    uint32_t dims[2];
    bin.read(magic, sizeof magic);
    bin.read(reinterpret_cast<char*>(dims), sizeof dims);
    if (!bin || std::memcmp(magic, kMagic, sizeof kMagic) != 0 || dims[0] != fm.n ||
        dims[1] != fm.p)
        throw std::runtime_error("feature binary does not match sidecar: " + bin_path);
    fm.x.resize(size_t(fm.n) * fm.p);
    bin.read(reinterpret_cast<char*>(fm.x.data()),
             std::streamsize(fm.x.size() * sizeof(double)));
    if (!bin) throw std::runtime_error("short read: " + bin_path);
    return fm;
}

}  // namespace cdrscope
