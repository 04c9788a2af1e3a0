#include "sensefold/core.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>

namespace sensefold {

namespace {

constexpr std::array<std::string_view, kNumActivities> kActivityNames = {
    "Sleeping", "Studying", "Eating",  "WatchingSomething", "OnlineCommSocialMedia", "AttendingClass",
    "Working",  "Resting",  "Reading", "Walking",           "Sport",                 "Shopping",
};

std::int64_t floor_div(std::int64_t a, std::int64_t b) {
    std::int64_t q = a / b;
    if ((a % b != 0) && ((a < 0) != (b < 0))) --q;
    return q;
}

std::int64_t local_ms(std::int64_t timestamp_ms, int local_offset_min) {
    return timestamp_ms + static_cast<std::int64_t>(local_offset_min) * kMsPerMinute;
}

}  // namespace

const std::array<ActivityClass, kNumActivities>& all_activities() {
    static const std::array<ActivityClass, kNumActivities> all = [] {
        std::array<ActivityClass, kNumActivities> a{};
        for (std::size_t i = 0; i < kNumActivities; ++i) a[i] = static_cast<ActivityClass>(i);
        return a;
    }();
    return all;
}

std::string_view to_string(ActivityClass c) { return kActivityNames.at(index_of(c)); }

std::optional<ActivityClass> activity_from_string(std::string_view name) {
    for (std::size_t i = 0; i < kNumActivities; ++i)
        if (kActivityNames[i] == name) return static_cast<ActivityClass>(i);
    return std::nullopt;
}

std::string normalize_label(std::string_view raw) {
    auto is_space = [](unsigned char c) { return std::isspace(c) != 0; };
    while (!raw.empty() && is_space(static_cast<unsigned char>(raw.front()))) raw.remove_prefix(1);
    while (!raw.empty() && is_space(static_cast<unsigned char>(raw.back()))) raw.remove_suffix(1);
    std::string out(raw);
    std::transform(out.begin(), out.end(), out.begin(),
                   [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
    return out;
}

CountryCode::CountryCode(std::string code) : code_(std::move(code)) {
    if (code_.empty()) throw DataError("country code must be non-empty");
    for (char c : code_) {
        const bool ok = (c >= 'A' && c <= 'Z') || (c >= '0' && c <= '9') || c == '_';
        if (!ok) throw DataError("country code '" + code_ + "' must be uppercase ASCII");
    }
}

std::string_view to_string(DayPeriod p) {
    switch (p) {
        case DayPeriod::Morning: return "morning";
        case DayPeriod::Noon: return "noon";
        case DayPeriod::Afternoon: return "afternoon";
        case DayPeriod::Evening: return "evening";
        case DayPeriod::Night: return "night";
    }
    return "?";
}

// ---------------------------------------------------------------------------

Taxonomy::Taxonomy(std::map<std::string, ActivityClass> merge, std::set<std::string> drop) {
    for (auto& [k, v] : merge) merge_.emplace(normalize_label(k), v);
    for (const auto& d : drop) drop_.insert(normalize_label(d));
    validate();
}

void Taxonomy::validate() const {
    for (const auto& d : drop_)
        if (merge_.contains(d)) throw ConfigError("taxonomy label '" + d + "' is both merged and dropped");
    std::array<bool, kNumActivities> reached{};
    for (const auto& [_, c] : merge_) reached[index_of(c)] = true;
    for (std::size_t i = 0; i < kNumActivities; ++i)
        if (!reached[i])
            throw ConfigError("taxonomy leaves class " + std::string(kActivityNames[i]) + " unreachable");
}

Taxonomy Taxonomy::from_json(const nlohmann::json& j) {
    if (!j.is_object() || !j.contains("merge") || !j.at("merge").is_object())
        throw ConfigError("taxonomy JSON needs a \"merge\" object");
    std::map<std::string, ActivityClass> merge;
    for (const auto& [raw, cls] : j.at("merge").items()) {
        if (!cls.is_string()) throw ConfigError("taxonomy class for '" + raw + "' must be a string");
        auto c = activity_from_string(cls.get<std::string>());
        if (!c) throw ConfigError("unknown activity class '" + cls.get<std::string>() + "'");
        merge.emplace(raw, *c);
    }
    std::set<std::string> drop;
    if (j.contains("drop")) {
        if (!j.at("drop").is_array()) throw ConfigError("taxonomy \"drop\" must be an array");
        for (const auto& d : j.at("drop")) drop.insert(d.get<std::string>());
    }
    return Taxonomy(std::move(merge), std::move(drop));
}

Taxonomy Taxonomy::load(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open taxonomy file " + path.string());
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError("taxonomy file " + path.string() + ": " + e.what());
    }
    return from_json(j);
}

const Taxonomy& Taxonomy::default_taxonomy() {
    static const Taxonomy tax = [] {
        using A = ActivityClass;
        std::map<std::string, ActivityClass> merge = {
            {"sleeping", A::Sleeping},
            {"studying", A::Studying},
            {"eating", A::Eating},
            {"cooking", A::Eating},
            {"watching something", A::WatchingSomething},
            {"social media", A::OnlineCommSocialMedia},
            {"internet chatting", A::OnlineCommSocialMedia},
            {"attending class", A::AttendingClass},
            {"working", A::Working},
            {"resting", A::Resting},
            {"reading", A::Reading},
            {"walking", A::Walking},
            {"sport", A::Sport},
            {"shopping", A::Shopping},
        };
        std::set<std::string> drop = {
            "personal care", "household care", "games",           "hobbies", "listening to music",
            "movie",         "theatre",        "concert",         "movie, theatre, concert",
            "free-time study", "nothing special", "other",        "social life",
        };
        return Taxonomy(std::move(merge), std::move(drop));
    }();
    return tax;
}

nlohmann::json Taxonomy::to_json() const {
    nlohmann::json merge = nlohmann::json::object();
    for (const auto& [raw, c] : merge_) merge[raw] = std::string(to_string(c));
    return {{"merge", merge}, {"drop", drop_}};
}

std::optional<ActivityClass> Taxonomy::map(std::string_view raw) const {
    auto it = merge_.find(normalize_label(raw));
    if (it == merge_.end()) return std::nullopt;
    return it->second;
}

bool Taxonomy::is_dropped(std::string_view raw) const { return drop_.contains(normalize_label(raw)); }

bool Taxonomy::is_known(std::string_view raw) const {
    const auto n = normalize_label(raw);
    return merge_.contains(n) || drop_.contains(n);
}

std::optional<ActivityClass> map_raw_activity(std::string_view raw, const Taxonomy& tax) { return tax.map(raw); }

// ---------------------------------------------------------------------------

std::int64_t local_minute_of_day(std::int64_t timestamp_ms, int local_offset_min) {
    const std::int64_t ms = local_ms(timestamp_ms, local_offset_min);
    const std::int64_t ms_of_day = ms - floor_div(ms, kMsPerDay) * kMsPerDay;
    return ms_of_day / kMsPerMinute;
}

int local_hour(std::int64_t timestamp_ms, int local_offset_min) {
    return static_cast<int>(local_minute_of_day(timestamp_ms, local_offset_min) / 60);
}

DayPeriod day_period_for_hour(int hour) {
    if (hour >= 6 && hour < 10) return DayPeriod::Morning;
    if (hour >= 10 && hour < 14) return DayPeriod::Noon;
    if (hour >= 14 && hour < 18) return DayPeriod::Afternoon;
    if (hour >= 18 && hour < 22) return DayPeriod::Evening;
    return DayPeriod::Night;
}

DayPeriod day_period(std::int64_t timestamp_ms, int local_offset_min) {
    return day_period_for_hour(local_hour(timestamp_ms, local_offset_min));
}

int local_weekday(std::int64_t timestamp_ms, int local_offset_min) {
    const std::int64_t day = floor_div(local_ms(timestamp_ms, local_offset_min), kMsPerDay);
    // 1970-01-01 was a Thursday (index 3).
    std::int64_t w = (day + 3) % 7;
    if (w < 0) w += 7;
    return static_cast<int>(w);
}

bool is_weekend(std::int64_t timestamp_ms, int local_offset_min) {
    return local_weekday(timestamp_ms, local_offset_min) >= 5;
}

}  // namespace sensefold
