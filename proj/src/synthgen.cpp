#include "cdrscope/synthgen.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <unordered_set>
#include <vector>

#include "cdrscope/rng.hpp"
#include "cdrscope/timeutil.hpp"
#include "json.hpp"

namespace cdrscope {

namespace {

// derived-stream key namespaces; dyad streams embed the lower node id
constexpr uint64_t kKeyDefaulters = 1;
constexpr uint64_t kKeyTowers = 2;
constexpr uint64_t kKeyUser = 3;
constexpr uint64_t kKeyCommunity = 4;
constexpr uint64_t kKeyExtraDyads = 5;
constexpr uint64_t kKeyExternals = 6;
constexpr uint64_t kKeyHoliday = 8;
constexpr uint64_t kKeyDyadWeight = 0xD0000000ull;
constexpr uint64_t kKeyDyadEvents = 0xE00000000ull;

void validate(const GenConfig& c) {
    auto fail = [](const std::string& msg) {
        throw std::invalid_argument("infeasible generator config: " + msg);
    };
    if (c.n_users < 4) fail("need at least 4 users");
    if (c.n_districts < 1) fail("need at least one district");
    if (c.n_towers < c.n_districts) fail("every district needs a tower");
    if (!(c.default_rate > 0.0 && c.default_rate < 1.0)) fail("default_rate outside (0, 1)");
    if (c.community_min < 2) fail("community_min below 2");
    if (c.community_max < c.community_min) fail("community_max below community_min");
    if (c.community_max > c.n_users) fail("community size exceeds the user count");
    if (!(c.community_edge_p >= 0.0 && c.community_edge_p <= 1.0))
        fail("community_edge_p outside [0, 1]");
    if (c.extra_degree < 0.0) fail("negative extra_degree");
    if (c.external_contacts < 0.0) fail("negative external_contacts");
    if (!(c.dyad_rate_sigma > 0.0)) fail("dyad_rate_sigma must be positive");
    if (!(c.daily_calls_target > 0.0)) fail("daily_calls_target must be positive");
    if (!(c.message_fraction >= 0.0 && c.message_fraction < 1.0))
        fail("message_fraction outside [0, 1)");
    if (!(c.mean_call_duration_s >= 1.0)) fail("mean_call_duration_s below 1");
    if (c.observation_end <= c.observation_start) fail("empty observation window");
    if (c.holiday_start < c.observation_start || c.holiday_end > c.observation_end ||
        c.holiday_end <= c.holiday_start)
        fail("holiday window outside the observation window");
    if (!(c.holiday_contact_boost > 0.0)) fail("holiday_contact_boost must be positive");
    if (!(c.defaulter_tower_bias >= 0.0 && c.defaulter_tower_bias <= 1.0))
        fail("defaulter_tower_bias outside [0, 1]");
}

int64_t floor_div(int64_t a, int64_t b) {
    int64_t q = a / b;
    return (a % b != 0 && ((a % b < 0) != (b < 0))) ? q - 1 : q;
}

struct Mobility {
    int32_t home = 0;
    int32_t work = 0;
};

}  // namespace

Dataset generate(const GenConfig& cfg) {
    validate(cfg);
    const uint32_t n = cfg.n_users;

    Dataset ds;
    ds.config.observation_start = cfg.observation_start;
    ds.config.observation_end = cfg.observation_end;
    ds.config.utc_offset_s = cfg.utc_offset_s;
    ds.config.business_start_hour = cfg.business_start_hour;
    ds.config.business_end_hour = cfg.business_end_hour;

    // exactly ceil(rate * n) defaulters; the epsilon keeps inexact products
    // like 0.05 * 100 from ceiling one unit too high
    size_t k = size_t(std::ceil(cfg.default_rate * double(n) - 1e-9));
    k = std::clamp<size_t>(k, 1, n - 1);
    std::vector<uint32_t> order(n);
    for (uint32_t u = 0; u < n; ++u) order[u] = u;
    {
        Rng rng = Rng::derive(cfg.seed, kKeyDefaulters);
        rng.shuffle(order);
    }
    std::vector<uint8_t> defaulted(n, 0);
    for (size_t i = 0; i < k; ++i) defaulted[order[i]] = 1;

    // towers on a 50 km square; tower t serves district t % n_districts and
    // tower d is district d's hotspot
    {
        Rng rng = Rng::derive(cfg.seed, kKeyTowers);
        for (uint32_t t = 0; t < cfg.n_towers; ++t) {
            ds.tower_names.intern("t" + std::to_string(t));
            TowerRecord tr;
            tr.x_km = rng.uniform(0.0, 50.0);
            tr.y_km = rng.uniform(0.0, 50.0);
            ds.towers.push_back(tr);
        }
    }

    std::vector<Mobility> anchors(n);
    for (uint32_t u = 0; u < n; ++u) {
        ds.user_names.intern("u" + std::to_string(u));
        Rng rng = Rng::derive(cfg.seed, kKeyUser, u);
        UserRecord rec;
        rec.id = u;
        rec.age = 18 + int(rng.bounded(53));
        double g = rng.uniform01();
        rec.gender = g < 0.49 ? Gender::Male : (g < 0.98 ? Gender::Female : Gender::Other);
        rec.district = uint32_t(rng.bounded(cfg.n_districts));
        rec.defaulted = defaulted[u] != 0;

        // home tower inside the district; defaulters lean on the hotspot
        uint32_t in_district = (cfg.n_towers - rec.district + cfg.n_districts - 1) /
                               cfg.n_districts;
        uint32_t slot = uint32_t(rng.bounded(in_district));
        if (rec.defaulted && rng.uniform01() < cfg.defaulter_tower_bias) slot = 0;
        anchors[u].home = int32_t(rec.district + slot * cfg.n_districts);
        anchors[u].work = int32_t(rng.bounded(cfg.n_towers));
        ds.users.push_back(rec);
    }
    ds.n_internal = n;

    // ---- dyad list: planted groups, random fill, external contacts --------
    std::vector<std::pair<NodeId, NodeId>> dyads;
    std::unordered_set<uint64_t> seen;
    auto add_dyad = [&](NodeId a, NodeId b) {
        if (a == b) return;
        if (a > b) std::swap(a, b);
        uint64_t key = (uint64_t(a) << 32) | b;
        if (seen.insert(key).second) dyads.emplace_back(a, b);
    };

    for (uint32_t ci = 0; ci < cfg.community_count; ++ci) {
        Rng rng = Rng::derive(cfg.seed, kKeyCommunity, ci);
        uint32_t size =
            cfg.community_min + uint32_t(rng.bounded(cfg.community_max - cfg.community_min + 1));
        std::vector<NodeId> members;
        std::unordered_set<NodeId> picked;
        while (members.size() < size) {
            NodeId u = NodeId(rng.bounded(n));
            if (picked.insert(u).second) members.push_back(u);
        }
        for (size_t i = 0; i < members.size(); ++i)
            for (size_t j = i + 1; j < members.size(); ++j)
                if (rng.uniform01() < cfg.community_edge_p) add_dyad(members[i], members[j]);
    }
    {
        Rng rng = Rng::derive(cfg.seed, kKeyExtraDyads);
        size_t extra = size_t(std::llround(cfg.extra_degree * double(n) / 2.0));
        for (size_t i = 0; i < extra; ++i)
            add_dyad(NodeId(rng.bounded(n)), NodeId(rng.bounded(n)));
    }

    // shared pool of out-of-carrier contacts, interned on first use
    const uint32_t pool_size = std::max(1u, n / 2);
    std::vector<NodeId> pool_node(pool_size, kInvalidNode);
    auto external_node = [&](uint32_t slot) {
        if (pool_node[slot] == kInvalidNode)
            pool_node[slot] = ds.user_names.intern("x" + std::to_string(slot));
        return pool_node[slot];
    };
    for (uint32_t u = 0; u < n; ++u) {
        Rng rng = Rng::derive(cfg.seed, kKeyExternals, u);
        uint64_t m = rng.poisson(cfg.external_contacts);
        for (uint64_t j = 0; j < m; ++j) add_dyad(u, external_node(uint32_t(rng.bounded(pool_size))));
    }

    // ---- dyad weights, calibrated to the daily voice-call target ----------
    const double days = double(cfg.observation_end - cfg.observation_start) / 86400.0;
    std::vector<double> weight(dyads.size());
    double w_eff = 0.0;  // internal-external dyads put half their calls on a user
    for (size_t d = 0; d < dyads.size(); ++d) {
        Rng rng = Rng::derive(cfg.seed, kKeyDyadWeight + dyads[d].first, dyads[d].second);
        weight[d] = std::exp(rng.normal(0.0, cfg.dyad_rate_sigma));
        w_eff += dyads[d].second < n ? weight[d] : 0.5 * weight[d];
    }
    if (!(w_eff > 0.0))
        throw std::invalid_argument("infeasible generator config: no dyads were produced");
    const double scale =
        cfg.daily_calls_target * double(n) / (w_eff * (1.0 - cfg.message_fraction));

    // tower for a caller at a local time: work anchor during business hours,
    // home otherwise, with occasional excursions
    auto tower_of = [&](NodeId caller, int64_t ts, Rng& rng) -> int32_t {
        if (caller >= n) {  // externals sit on a fixed pseudo-home
            return int32_t((uint64_t(caller) * 2654435761ull) % cfg.n_towers);
        }
        if (rng.uniform01() < 0.05) return int32_t(rng.bounded(cfg.n_towers));
        int64_t local = ts + cfg.utc_offset_s;
        int64_t day = floor_div(local, 86400);
        int hour = int((local - day * 86400) / 3600);
        int dow = int((day + 3) % 7);  // 1970-01-01 is a Thursday; 0 = Monday
        bool business = dow < 5 && hour >= cfg.business_start_hour &&
                        hour < cfg.business_end_hour;
        return business ? anchors[caller].work : anchors[caller].home;
    };

    const int64_t span = cfg.observation_end - cfg.observation_start;
    auto emit_event = [&](Rng& rng, NodeId a, NodeId b, int64_t ts) {
        CdrEvent ev;
        ev.timestamp = ts;
        bool a_calls = rng.uniform01() < 0.5;
        ev.caller = a_calls ? a : b;
        ev.callee = a_calls ? b : a;
        if (rng.uniform01() < cfg.message_fraction) {
            ev.kind = EventKind::Message;
            ev.duration_s = 0;
        } else {
            ev.kind = EventKind::Call;
            double extra = rng.exponential(1.0 / std::max(1.0, cfg.mean_call_duration_s - 1.0));
            ev.duration_s = 1 + uint32_t(std::min(extra, 14399.0));
        }
        ev.tower = tower_of(ev.caller, ts, rng);
        ev.external = ev.caller >= n || ev.callee >= n;
        ds.events.push_back(ev);
    };

    std::vector<std::vector<NodeId>> partners(n);
    for (size_t d = 0; d < dyads.size(); ++d) {
        auto [a, b] = dyads[d];
        if (a < n) partners[a].push_back(b);
        if (b < n) partners[b].push_back(a);

        Rng rng = Rng::derive(cfg.seed, kKeyDyadEvents + a, b);
        uint64_t count = rng.poisson(scale * weight[d] * days);
        count = std::min<uint64_t>(count, 200000);
        for (uint64_t i = 0; i < count; ++i)
            emit_event(rng, a, b, cfg.observation_start + int64_t(rng.bounded(uint64_t(span))));
    }

    // ---- planted holiday effect -------------------------------------------
    // baseline: unique correspondents per user inside the holiday window
    std::vector<std::unordered_set<NodeId>> holiday_corr(n);
    for (const CdrEvent& ev : ds.events) {
        if (ev.timestamp < cfg.holiday_start || ev.timestamp >= cfg.holiday_end) continue;
        if (ev.caller < n) holiday_corr[ev.caller].insert(ev.callee);
        if (ev.callee < n) holiday_corr[ev.callee].insert(ev.caller);
    }
    double mean_base = 0.0;
    for (uint32_t u = 0; u < n; ++u) mean_base += double(holiday_corr[u].size());
    mean_base /= double(n);
    const double extra_mean = (cfg.holiday_contact_boost - 1.0) * std::max(mean_base, 1.0);

    // paying users meet extra unique contacts; defaulters spend the same
    // number of extra events on correspondents they already reached during
    // the holiday, keeping holiday event counts class-neutral while unique
    // counts separate
    const int64_t holiday_span = cfg.holiday_end - cfg.holiday_start;
    for (uint32_t u = 0; u < n; ++u) {
        Rng rng = Rng::derive(cfg.seed, kKeyHoliday, u);
        uint64_t extras = rng.poisson(extra_mean);
        if (extras == 0) continue;
        if (defaulted[u]) {
            std::vector<NodeId> targets(holiday_corr[u].begin(), holiday_corr[u].end());
            std::sort(targets.begin(), targets.end());
            if (targets.empty()) {
                if (partners[u].empty()) continue;
                targets.push_back(partners[u][rng.bounded(partners[u].size())]);
            }
            for (uint64_t j = 0; j < extras; ++j) {
                NodeId p = targets[rng.bounded(targets.size())];
                int64_t ts = cfg.holiday_start + int64_t(rng.bounded(uint64_t(holiday_span)));
                emit_event(rng, u, p, ts);
            }
        } else {
            for (uint64_t j = 0; j < extras; ++j) {
                NodeId fresh = ds.user_names.intern("h" + std::to_string(u) + "_" +
                                                    std::to_string(j));
                int64_t ts = cfg.holiday_start + int64_t(rng.bounded(uint64_t(holiday_span)));
                emit_event(rng, u, fresh, ts);
            }
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

// ---------------------------------------------------------------------------
// Config JSON

GenConfig gen_config_from_json(const std::string& text) {
    nlohmann::json j = nlohmann::json::parse(text);
    if (!j.is_object()) throw std::invalid_argument("generator config must be a JSON object");
    GenConfig c;
    auto epoch = [](const nlohmann::json& v, const char* key) {
        auto ts = parse_rfc3339_utc(v.get<std::string>());
        if (!ts) throw std::invalid_argument(std::string("bad timestamp for ") + key);
        return *ts;
    };
    for (const auto& [key, v] : j.items()) {
        if (key == "n_users") c.n_users = v.get<uint32_t>();
        else if (key == "n_districts") c.n_districts = v.get<uint32_t>();
        else if (key == "n_towers") c.n_towers = v.get<uint32_t>();
        else if (key == "default_rate") c.default_rate = v.get<double>();
        else if (key == "community_count") c.community_count = v.get<uint32_t>();
        else if (key == "community_min") c.community_min = v.get<uint32_t>();
        else if (key == "community_max") c.community_max = v.get<uint32_t>();
        else if (key == "community_edge_p") c.community_edge_p = v.get<double>();
        else if (key == "extra_degree") c.extra_degree = v.get<double>();
        else if (key == "external_contacts") c.external_contacts = v.get<double>();
        else if (key == "dyad_rate_sigma") c.dyad_rate_sigma = v.get<double>();
        else if (key == "daily_calls_target") c.daily_calls_target = v.get<double>();
        else if (key == "message_fraction") c.message_fraction = v.get<double>();
        else if (key == "mean_call_duration_s") c.mean_call_duration_s = v.get<double>();
        else if (key == "observation_start") c.observation_start = epoch(v, key.c_str());
        else if (key == "observation_end") c.observation_end = epoch(v, key.c_str());
        else if (key == "utc_offset_s") c.utc_offset_s = v.get<int32_t>();
        else if (key == "business_start_hour") c.business_start_hour = v.get<int>();
        else if (key == "business_end_hour") c.business_end_hour = v.get<int>();
        else if (key == "holiday_start") c.holiday_start = epoch(v, key.c_str());
        else if (key == "holiday_end") c.holiday_end = epoch(v, key.c_str());
        else if (key == "holiday_contact_boost") c.holiday_contact_boost = v.get<double>();
        else if (key == "defaulter_tower_bias") c.defaulter_tower_bias = v.get<double>();
        else if (key == "seed") c.seed = v.get<uint64_t>();
        else throw std::invalid_argument("unknown key in generator config: " + key);
    }
    return c;
}

GenConfig gen_config_from_json_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open generator config: " + path);
    std::stringstream ss;
    ss << in.rdbuf();
    return gen_config_from_json(ss.str());
}

std::string gen_config_json(const GenConfig& c) {
    nlohmann::json j;
    j["n_users"] = c.n_users;
    j["n_districts"] = c.n_districts;
    j["n_towers"] = c.n_towers;
    j["default_rate"] = c.default_rate;
    j["community_count"] = c.community_count;
    j["community_min"] = c.community_min;
    j["community_max"] = c.community_max;
    j["community_edge_p"] = c.community_edge_p;
    j["extra_degree"] = c.extra_degree;
    j["external_contacts"] = c.external_contacts;
    j["dyad_rate_sigma"] = c.dyad_rate_sigma;
    j["daily_calls_target"] = c.daily_calls_target;
    j["message_fraction"] = c.message_fraction;
    j["mean_call_duration_s"] = c.mean_call_duration_s;
    j["observation_start"] = format_rfc3339_utc(c.observation_start);
    j["observation_end"] = format_rfc3339_utc(c.observation_end);
    j["utc_offset_s"] = c.utc_offset_s;
    j["business_start_hour"] = c.business_start_hour;
    j["business_end_hour"] = c.business_end_hour;
    j["holiday_start"] = format_rfc3339_utc(c.holiday_start);
    j["holiday_end"] = format_rfc3339_utc(c.holiday_end);
    j["holiday_contact_boost"] = c.holiday_contact_boost;
    j["defaulter_tower_bias"] = c.defaulter_tower_bias;
    j["seed"] = c.seed;
    return j.dump(2);
}

}  // namespace cdrscope
