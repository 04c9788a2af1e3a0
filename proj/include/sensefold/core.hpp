#pragma once

#include <array>
#include <compare>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <stdexcept>
#include <string>
#include <string_view>

#include <json.hpp>

namespace sensefold {

/// Base class for all errors raised by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Invalid configuration or parameters (maps to CLI exit code 2).
class ConfigError : public Error {
public:
    using Error::Error;
};

/// Input data that violates a contract (malformed logs, unknown participants, ...).
class DataError : public Error {
public:
    using Error::Error;
};

// ---------------------------------------------------------------------------
// Activity taxonomy

enum class ActivityClass : std::uint8_t {
    Sleeping,
    Studying,
    Eating,
    WatchingSomething,
    OnlineCommSocialMedia,
    AttendingClass,
    Working,
    Resting,
    Reading,
    Walking,
    Sport,
    Shopping,
};

inline constexpr std::size_t kNumActivities = 12;

const std::array<ActivityClass, kNumActivities>& all_activities();
std::string_view to_string(ActivityClass c);
std::optional<ActivityClass> activity_from_string(std::string_view name);

constexpr std::size_t index_of(ActivityClass c) { return static_cast<std::size_t>(c); }

/// Lowercases and trims ASCII whitespace; the canonical form used for label matching.
std::string normalize_label(std::string_view raw);

/// Country identifier: non-empty, characters restricted to [A-Z0-9_].
class CountryCode {
public:
    CountryCode() = default;
    explicit CountryCode(std::string code);

    const std::string& str() const { return code_; }
    bool empty() const { return code_.empty(); }

    auto operator<=>(const CountryCode&) const = default;

private:
    std::string code_;
};

struct Participant {
    std::string id;
    CountryCode country;

    auto operator<=>(const Participant&) const = default;
};

/// Hourly self-report. Timestamps are UTC epoch milliseconds; calendar features
/// are derived from local time via `local_offset_min`.
struct SelfReport {
    std::string participant;
    std::int64_t timestamp_ms = 0;
    int local_offset_min = 0;
    std::string raw_activity;

    auto operator<=>(const SelfReport&) const = default;
};

inline constexpr int kMaxLocalOffsetMin = 840;

enum class DayPeriod : std::uint8_t { Morning, Noon, Afternoon, Evening, Night };

inline constexpr std::size_t kNumDayPeriods = 5;

std::string_view to_string(DayPeriod p);

/// Raw label -> class merge map plus an explicit drop set. Labels are stored normalized.
class Taxonomy {
public:
    Taxonomy() = default;
    Taxonomy(std::map<std::string, ActivityClass> merge, std::set<std::string> drop);

    static Taxonomy from_json(const nlohmann::json& j);
    static Taxonomy load(const std::filesystem::path& path);
    static const Taxonomy& default_taxonomy();

    nlohmann::json to_json() const;

    std::optional<ActivityClass> map(std::string_view raw) const;
    bool is_dropped(std::string_view raw) const;
    bool is_known(std::string_view raw) const;

    const std::map<std::string, ActivityClass>& merge_map() const { return merge_; }
    const std::set<std::string>& drop_set() const { return drop_; }

private:
    void validate() const;

    std::map<std::string, ActivityClass> merge_;
    std::set<std::string> drop_;
};

std::optional<ActivityClass> map_raw_activity(std::string_view raw, const Taxonomy& tax);

// ---------------------------------------------------------------------------
// Calendar helpers. All of them operate on local time.

std::int64_t local_minute_of_day(std::int64_t timestamp_ms, int local_offset_min);
int local_hour(std::int64_t timestamp_ms, int local_offset_min);
DayPeriod day_period_for_hour(int hour);
DayPeriod day_period(std::int64_t timestamp_ms, int local_offset_min);
/// 0 = Monday ... 6 = Sunday.
int local_weekday(std::int64_t timestamp_ms, int local_offset_min);
bool is_weekend(std::int64_t timestamp_ms, int local_offset_min);

inline constexpr std::int64_t kMsPerMinute = 60'000;
inline constexpr std::int64_t kMsPerHour = 3'600'000;
inline constexpr std::int64_t kMsPerDay = 86'400'000;

}  // namespace sensefold
