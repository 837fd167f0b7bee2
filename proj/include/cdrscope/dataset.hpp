#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <unordered_map>
#include <vector>

#include "cdrscope/timeutil.hpp"

namespace cdrscope {

using NodeId = uint32_t;
constexpr NodeId kInvalidNode = 0xffffffffu;

enum class EventKind : uint8_t { Call, Message };
enum class Gender : uint8_t { Male, Female, Other };

struct CdrEvent {
    int64_t timestamp = 0;  // UTC epoch seconds
    NodeId caller = kInvalidNode;
    NodeId callee = kInvalidNode;
    EventKind kind = EventKind::Call;
    uint32_t duration_s = 0;      // 0 for messages
    int32_t tower = -1;           // index into Dataset::towers, -1 if unknown
    bool external = false;        // either endpoint is not in the users file
};

struct UserRecord {
    NodeId id = kInvalidNode;
    int age = 0;
    Gender gender = Gender::Other;
    uint32_t district = 0;
    bool defaulted = false;
};

struct TowerRecord {
    double x_km = 0.0;
    double y_km = 0.0;
};

// Fixed-offset local time plus the declared observation interval.
struct DatasetConfig {
    int64_t observation_start = 0;
    int64_t observation_end = 0;  // exclusive
    int32_t utc_offset_s = 0;
    int business_start_hour = 8;   // Monday-Friday
    int business_end_hour = 18;    // exclusive
};

// Maps external string identifiers to dense indices. Internal (labeled)
// users occupy [0, n_internal); external contacts are appended after them.
class Interner {
public:
    NodeId intern(const std::string& name) {
        auto it = index_.find(name);
        if (it != index_.end()) return it->second;
        NodeId id = static_cast<NodeId>(names_.size());
        names_.push_back(name);
        index_.emplace(names_.back(), id);
        return id;
    }
    NodeId lookup(const std::string& name) const {
        auto it = index_.find(name);
        return it == index_.end() ? kInvalidNode : it->second;
    }
    const std::string& name(NodeId id) const { return names_[id]; }
    size_t size() const { return names_.size(); }

private:
    std::vector<std::string> names_;
    std::unordered_map<std::string, NodeId> index_;
};

struct ParseStats {
    uint64_t event_rows_read = 0;
    uint64_t events_kept = 0;
    uint64_t rejected_self_loop = 0;
    uint64_t rejected_malformed = 0;
    uint64_t rejected_out_of_window = 0;
    uint64_t external_events = 0;
    uint64_t unknown_tower_events = 0;

    uint64_t rejected_total() const {
        return rejected_self_loop + rejected_malformed + rejected_out_of_window;
    }
};

struct Dataset {
    DatasetConfig config;
    std::vector<CdrEvent> events;  // sorted by (timestamp, caller, callee, kind)
    std::vector<UserRecord> users;  // [0, n_internal), indexed by NodeId
    std::vector<TowerRecord> towers;
    Interner user_names;   // internal users first, then external contacts
    Interner tower_names;
    NodeId n_internal = 0;
    ParseStats stats;

    bool is_internal(NodeId u) const { return u < n_internal; }
    size_t node_count() const { return user_names.size(); }
    double observation_days() const {
        return double(config.observation_end - config.observation_start) / 86400.0;
    }
};

// Reads the three CSV files, validates against `config`, and keeps rows from
// unknown users as external contacts. Aborts if more than `max_reject_frac`
// of the event rows are malformed.
Dataset parse_dataset(const std::string& events_path, const std::string& users_path,
                      const std::string& towers_path, const DatasetConfig& config,
                      double max_reject_frac = 0.01);

// Inverse of parse_dataset for the retained rows.
void write_dataset(const Dataset& ds, const std::string& dir);

DatasetConfig dataset_config_from_json_file(const std::string& path);
void write_dataset_config(const DatasetConfig& cfg, const std::string& path);

struct Split {
    std::vector<NodeId> train_ids;  // sorted
    std::vector<NodeId> test_ids;   // sorted
    std::vector<std::string> warnings;
};

// User-level split stratified by default status. Classes with fewer than two
// members cannot be stratified; they land on one side and a warning is added.
Split split_train_test(const Dataset& ds, double fraction, uint64_t seed);

// ---- time-window taxonomy ----------------------------------------------

enum class WindowTag : uint8_t {
    Total,
    Month,
    Week,        // Monday-started calendar weeks
    Day,
    DayOfWeek,
    HourOfDay,
    Business,    // Mon-Fri business hours
    NonBusiness,
    Weekend,
    Weekday,
};

const char* window_tag_name(WindowTag t);

struct Window {
    WindowTag tag;
    std::string key;        // e.g. "20161224" (day or week start), "Mon", "h14"
    int64_t start_epoch = 0;  // UTC epoch bounds for calendar windows, 0 otherwise
    int64_t end_epoch = 0;
};

// Derived calendar fields cached once per event.
struct EventCalendar {
    int32_t day_idx;    // calendar day index from observation start (local)
    int32_t week_idx;
    int32_t month_idx;
    uint8_t dow;        // 0 = Monday
    uint8_t hour;
    bool business;
    bool weekend;
};

// Enumerates every concrete window of the taxonomy over the observation
// interval, and maps events onto them.
class WindowSet {
public:
    WindowSet(const DatasetConfig& cfg);

    const std::vector<Window>& windows() const { return windows_; }
    size_t size() const { return windows_.size(); }
    int n_days() const { return n_days_; }
    int n_weeks() const { return n_weeks_; }
    int n_months() const { return n_months_; }
    double n_week_span() const { return n_days_ / 7.0; }

    EventCalendar calendar(int64_t epoch_s) const;

    // Window indices an event falls into (8 of them: one per taxonomy family;
    // business/non-business and weekend/weekday are complementary pairs).
    void window_indices(const EventCalendar& c, int out[8]) const;

    int total_index() const { return idx_total_; }
    int day_index(int day_idx) const { return idx_day_ + day_idx; }
    int week_index(int week_idx) const { return idx_week_ + week_idx; }

private:
    DatasetConfig cfg_;
    std::vector<Window> windows_;
    int n_days_, n_weeks_, n_months_;
    int64_t day0_;  // local day number of observation start
    int64_t week0_; // local day number of the Monday on/before day0_
    std::vector<int64_t> month_day0_;  // local day number where each month bucket starts
    int idx_total_, idx_month_, idx_week_, idx_day_, idx_dow_, idx_hod_, idx_bus_, idx_nonbus_,
        idx_wknd_, idx_wkday_;
};

}  // namespace cdrscope
