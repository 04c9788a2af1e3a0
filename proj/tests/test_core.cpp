#include <gtest/gtest.h>

#include "sensefold/core.hpp"

using namespace sensefold;

namespace {

constexpr std::int64_t kMonday = 1672617600000;  // 2023-01-02 00:00 UTC

std::int64_t at_utc(int day, int hour, int minute = 0) {
    return kMonday + day * kMsPerDay + hour * kMsPerHour + minute * kMsPerMinute;
}

}  // namespace

TEST(Taxonomy, MergesCookingIntoEating) {
    EXPECT_EQ(map_raw_activity("cooking", Taxonomy::default_taxonomy()), ActivityClass::Eating);
}

TEST(Taxonomy, IdentityLabel) {
    EXPECT_EQ(map_raw_activity("sleeping", Taxonomy::default_taxonomy()), ActivityClass::Sleeping);
}

TEST(Taxonomy, DroppedLabelsMapToNothing) {
    const auto& tax = Taxonomy::default_taxonomy();
    for (const char* raw : {"personal care", "household care", "games", "other", "nothing special"}) {
        EXPECT_FALSE(map_raw_activity(raw, tax)) << raw;
        EXPECT_TRUE(tax.is_dropped(raw)) << raw;
    }
}

TEST(Taxonomy, UnknownLabelIsAbsentButNotDropped) {
    const auto& tax = Taxonomy::default_taxonomy();
    EXPECT_FALSE(map_raw_activity("juggling", tax));
    EXPECT_FALSE(tax.is_dropped("juggling"));
    EXPECT_FALSE(tax.is_known("juggling"));
}

TEST(Taxonomy, MatchingIsCaseAndWhitespaceInsensitive) {
    EXPECT_EQ(map_raw_activity("  Cooking\t", Taxonomy::default_taxonomy()), ActivityClass::Eating);
    EXPECT_EQ(normalize_label("  Social MEDIA "), "social media");
}

TEST(Taxonomy, EveryClassIsReachable) {
    std::set<ActivityClass> reached;
    for (const auto& [_, c] : Taxonomy::default_taxonomy().merge_map()) reached.insert(c);
    EXPECT_EQ(reached.size(), kNumActivities);
}

TEST(Taxonomy, JsonRoundTrip) {
    const auto& tax = Taxonomy::default_taxonomy();
    const auto back = Taxonomy::from_json(tax.to_json());
    EXPECT_EQ(back.merge_map(), tax.merge_map());
    EXPECT_EQ(back.drop_set(), tax.drop_set());
}

TEST(Taxonomy, RejectsLabelBothMergedAndDropped) {
    auto j = Taxonomy::default_taxonomy().to_json();
    j["drop"].push_back("cooking");
    EXPECT_THROW(Taxonomy::from_json(j), ConfigError);
}

TEST(Taxonomy, RejectsUnreachableClass) {
    auto j = Taxonomy::default_taxonomy().to_json();
    for (auto it = j["merge"].begin(); it != j["merge"].end();)
        it = it.value() == "Shopping" ? j["merge"].erase(it) : std::next(it);
    EXPECT_THROW(Taxonomy::from_json(j), ConfigError);
}

TEST(Taxonomy, RejectsUnknownClassName) {
    nlohmann::json j = Taxonomy::default_taxonomy().to_json();
    j["merge"]["napping"] = "Napping";
    EXPECT_THROW(Taxonomy::from_json(j), ConfigError);
}

TEST(Activity, NamesRoundTrip) {
    for (auto c : all_activities()) EXPECT_EQ(activity_from_string(to_string(c)), c);
    EXPECT_FALSE(activity_from_string("Napping"));
}

TEST(CountryCodeTest, ValidatesCharacters) {
    EXPECT_NO_THROW(CountryCode("SYN_A"));
    EXPECT_NO_THROW(CountryCode("IT2"));
    EXPECT_THROW(CountryCode(""), DataError);
    EXPECT_THROW(CountryCode("it"), DataError);
    EXPECT_THROW(CountryCode("A-B"), DataError);
}

TEST(Calendar, DayPeriodBoundaries) {
    EXPECT_EQ(day_period(at_utc(0, 9), 0), DayPeriod::Morning);
    EXPECT_EQ(day_period(at_utc(0, 13, 59), 0), DayPeriod::Noon);
    EXPECT_EQ(day_period(at_utc(0, 5), 0), DayPeriod::Night);
    EXPECT_EQ(day_period(at_utc(0, 14), 0), DayPeriod::Afternoon);
    EXPECT_EQ(day_period(at_utc(0, 21, 59), 0), DayPeriod::Evening);
    EXPECT_EQ(day_period(at_utc(0, 22), 0), DayPeriod::Night);
}

TEST(Calendar, DayPeriodOverAllHours) {
    for (int h = 0; h < 24; ++h) {
        DayPeriod want = DayPeriod::Night;
        if (h >= 6 && h < 10) want = DayPeriod::Morning;
        else if (h >= 10 && h < 14) want = DayPeriod::Noon;
        else if (h >= 14 && h < 18) want = DayPeriod::Afternoon;
        else if (h >= 18 && h < 22) want = DayPeriod::Evening;
        EXPECT_EQ(day_period_for_hour(h), want) << h;
    }
}

TEST(Calendar, LocalOffsetShiftsHour) {
    EXPECT_EQ(local_hour(at_utc(0, 8), 60), 9);
    EXPECT_EQ(local_hour(at_utc(0, 0, 30), -60), 23);
    EXPECT_EQ(local_minute_of_day(at_utc(0, 23, 30), 60), 30);
}

TEST(Calendar, Weekend) {
    EXPECT_TRUE(is_weekend(at_utc(5, 12), 0));    // Saturday
    EXPECT_FALSE(is_weekend(at_utc(2, 12), 0));   // Wednesday
    EXPECT_EQ(local_weekday(at_utc(6, 12), 0), 6);
}

TEST(Calendar, LocalDayGovernsWeekend) {
    // Friday 23:59 local at UTC-2 is already Saturday in UTC
    const auto t = at_utc(5, 1, 59);
    EXPECT_EQ(local_weekday(t, -120), 4);
    EXPECT_FALSE(is_weekend(t, -120));
    EXPECT_TRUE(is_weekend(t, 0));
}

TEST(Calendar, NegativeEpochTimesStayConsistent) {
    const std::int64_t t = -kMsPerHour;  // 1969-12-31 23:00 UTC, a Wednesday
    EXPECT_EQ(local_hour(t, 0), 23);
    EXPECT_EQ(local_weekday(t, 0), 2);
}
