#pragma once

#include <cstdint>
#include <string>

#include "cdrscope/dataset.hpp"

namespace cdrscope {

struct GenConfig {
    uint32_t n_users = 5000;
    uint32_t n_districts = 12;
    uint32_t n_towers = 120;
    double default_rate = 0.02;

    // overlapping planted groups wire most internal dyads
    uint32_t community_count = 400;
    uint32_t community_min = 6;
    uint32_t community_max = 30;
    double community_edge_p = 0.25;  // wiring probability inside a group
    double extra_degree = 2.0;       // additional random internal dyads per user
    double external_contacts = 0.8;  // mean out-of-carrier dyads per user

    double dyad_rate_sigma = 2.0;     // log-normal spread of dyad activity
    double daily_calls_target = 5.3;  // outgoing voice calls per user per day
    double message_fraction = 0.35;
    double mean_call_duration_s = 110.0;

    int64_t observation_start = 1475280000;  // 2016-10-01T00:00:00Z
    int64_t observation_end = 1483228800;    // 2017-01-01T00:00:00Z
    int32_t utc_offset_s = 0;
    int business_start_hour = 8;
    int business_end_hour = 18;

    int64_t holiday_start = 1482537600;  // 2016-12-24T00:00:00Z
    int64_t holiday_end = 1482796800;    // 2016-12-27T00:00:00Z, exclusive
    // multiplier on unique holiday correspondents for paying users; 1 plants
    // nothing
    double holiday_contact_boost = 3.0;

    double defaulter_tower_bias = 0.25;  // pull toward the district hotspot tower
    uint64_t seed = 1;
};

// Flat JSON object; unknown keys are rejected, absent keys keep defaults.
// Timestamps are RFC 3339 strings.
GenConfig gen_config_from_json_file(const std::string& path);
GenConfig gen_config_from_json(const std::string& text);
std::string gen_config_json(const GenConfig& cfg);

// Deterministic synthetic event log with planted ground truth: exactly
// ceil(default_rate * n_users) defaulters, heavy-tailed dyad activity,
// two-anchor mobility, a mild defaulter surplus on hotspot towers, and extra
// unique holiday correspondents for paying users (defaulters spend the same
// extra holiday events on partners they already know, so only the
// unique-correspondent counts separate the classes).
Dataset generate(const GenConfig& cfg);

}  // namespace cdrscope
