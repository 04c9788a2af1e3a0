#include <gtest/gtest.h>

#include <filesystem>
#include <sstream>

#include "sensefold/ingestion.hpp"

using namespace sensefold;

namespace {

ParseResult<SensorEvent> parse_events(const std::string& text, double max_bad = 0.01) {
    std::istringstream in(text);
    return parse_event_log(in, ParseOptions{max_bad});
}

ParseResult<SelfReport> parse_reports(const std::string& text) {
    std::istringstream in(text);
    return parse_self_reports(in);
}

SensorEvent steps(const std::string& pid, std::int64_t t, std::int64_t count) {
    return {pid, t, StepsCounterSample{count}};
}

}  // namespace

TEST(EventLog, ParsesStepsCounterLine) {
    const auto r = parse_events(R"({"pid":"p1","t":1000,"kind":"steps_counter","count":500})");
    ASSERT_EQ(r.records.size(), 1u);
    EXPECT_EQ(r.records[0].participant, "p1");
    EXPECT_EQ(r.records[0].timestamp_ms, 1000);
    ASSERT_EQ(r.records[0].kind(), EventKind::StepsCounter);
    EXPECT_EQ(std::get<StepsCounterSample>(r.records[0].payload).count, 500);
}

TEST(EventLog, EmptyStream) {
    const auto r = parse_events("");
    EXPECT_TRUE(r.records.empty());
    EXPECT_TRUE(r.malformed.empty());
}

TEST(EventLog, NegativeTimestampIsMalformed) {
    std::string text;
    for (int i = 0; i < 200; ++i) text += R"({"pid":"p1","t":)" + std::to_string(1000 + i) + R"(,"kind":"steps_detected"})" "\n";
    text += R"({"pid":"p1","t":-5,"kind":"steps_detected"})" "\n";
    const auto r = parse_events(text);
    EXPECT_EQ(r.records.size(), 200u);
    ASSERT_EQ(r.malformed.size(), 1u);
    EXPECT_EQ(r.malformed[0].line, 201u);
}

TEST(EventLog, TooManyMalformedLinesIsAnError) {
    std::string text = R"({"pid":"p1","t":1000,"kind":"steps_detected"})" "\nnot json\n";
    EXPECT_THROW(parse_events(text), DataError);
    EXPECT_NO_THROW(parse_events(text, 0.6));
}

TEST(EventLog, RejectsOutOfRangeFields) {
    const char* bad[] = {
        R"({"pid":"p1","t":10,"kind":"bluetooth","bt_kind":"le","device":"d","rssi":5})",
        R"({"pid":"p1","t":10,"kind":"teleport"})",
        R"({"pid":"","t":10,"kind":"steps_detected"})",
        R"({"pid":"p1","t":10,"kind":"app","category":"x","start":20,"end":10})",
    };
    for (const char* line : bad) {
        EXPECT_THROW(event_from_json(nlohmann::json::parse(line)), DataError) << line;
    }
}

TEST(EventLog, EveryKindRoundTrips) {
    const std::vector<SensorEvent> events = {
        {"p", 1, LocationSample{45.1, 9.2, 120}},
        {"p", 2, BluetoothScan{BluetoothKind::Classic, "dev", -70}},
        {"p", 3, WifiScan{true, "ap", -50}},
        {"p", 4, CellularScan{CellTech::WCDMA, "cell", -90}},
        {"p", 5, NotificationEvent{NotificationAction::Removed, "k", true}},
        {"p", 6, ProximitySample{5}},
        {"p", 7, SimpleActivitySample{SimpleActivity::OnBicycle}},
        {"p", 8, StepsCounterSample{77}},
        {"p", 9, StepsDetectedEvent{}},
        {"p", 10, ScreenEvent{ScreenAction::PresenceEnd}},
        {"p", 11, AppUsageInterval{"social", 11, 99}},
    };
    std::ostringstream out;
    write_event_log(out, events);
    const auto back = parse_events(out.str());
    EXPECT_EQ(back.records, events);
}

TEST(Reports, ParsesSchemaExample) {
    const auto r = parse_reports(R"({"pid":"p1","t":3600000,"offset_min":60,"activity":"studying"})");
    ASSERT_EQ(r.records.size(), 1u);
    EXPECT_EQ(r.records[0].participant, "p1");
    EXPECT_EQ(r.records[0].timestamp_ms, 3600000);
    EXPECT_EQ(r.records[0].local_offset_min, 60);
    EXPECT_EQ(r.records[0].raw_activity, "studying");
}

TEST(Reports, DuplicateKeyDroppedAndCounted) {
    const auto r = parse_reports(
        R"({"pid":"p1","t":3600000,"offset_min":0,"activity":"studying"})" "\n"
        R"({"pid":"p1","t":3600000,"offset_min":0,"activity":"eating"})" "\n");
    ASSERT_EQ(r.records.size(), 1u);
    EXPECT_EQ(r.records[0].raw_activity, "studying");
    EXPECT_EQ(r.duplicates, 1u);
}

TEST(Reports, UnknownActivityKept) {
    const auto r = parse_reports(R"({"pid":"p1","t":3600000,"offset_min":0,"activity":"juggling"})");
    ASSERT_EQ(r.records.size(), 1u);
    EXPECT_EQ(r.records[0].raw_activity, "juggling");
}

TEST(Reports, OffsetOutOfRangeIsMalformed) {
    EXPECT_THROW(report_from_json(nlohmann::json::parse(R"({"pid":"p1","t":1,"offset_min":900,"activity":"x"})")),
                 DataError);
}

TEST(Corpus, GroupsAndSortsEventsPerParticipant) {
    std::vector<Participant> ps = {{"b", CountryCode("X")}, {"a", CountryCode("X")}};
    std::vector<SensorEvent> ev = {steps("b", 30, 3), steps("a", 20, 2), steps("b", 10, 1), steps("a", 5, 0)};
    const auto c = build_corpus(ev, {}, ps);
    ASSERT_EQ(c.participants().size(), 2u);
    EXPECT_EQ(c.participants()[0].id, "a");
    const auto& a = c.streams("a").steps_counter;
    const auto& b = c.streams("b").steps_counter;
    ASSERT_EQ(a.size(), 2u);
    ASSERT_EQ(b.size(), 2u);
    EXPECT_EQ(a[0].t, 5);
    EXPECT_EQ(a[1].t, 20);
    EXPECT_EQ(b[0].t, 10);
    EXPECT_EQ(b[1].t, 30);
    EXPECT_EQ(c.event_count(), 4u);
}

TEST(Corpus, UnknownParticipantNamed) {
    std::vector<Participant> ps = {{"a", CountryCode("X")}};
    std::vector<SelfReport> rs = {{"ghost", 3600000, 0, "eating"}};
    try {
        build_corpus({}, rs, ps);
        FAIL() << "expected DataError";
    } catch (const DataError& e) {
        EXPECT_NE(std::string(e.what()).find("ghost"), std::string::npos);
    }
}

TEST(Corpus, NoReportsIsValid) {
    std::vector<Participant> ps = {{"a", CountryCode("X")}};
    const auto c = build_corpus({steps("a", 1, 1)}, {}, ps);
    EXPECT_TRUE(c.reports().empty());
    EXPECT_TRUE(c.reports_of("a").empty());
}

TEST(Corpus, EventsReconstructCanonicalOrder) {
    std::vector<Participant> ps = {{"a", CountryCode("X")}, {"b", CountryCode("Y")}};
    std::vector<SensorEvent> ev = {
        {"b", 5, ScreenEvent{ScreenAction::On}}, {"a", 9, WifiScan{false, "w", -40}}, steps("a", 3, 1),
        {"a", 3, AppUsageInterval{"tools", 1, 4}}};
    const auto c = build_corpus(ev, {}, ps);
    auto sorted = ev;
    std::sort(sorted.begin(), sorted.end());
    EXPECT_EQ(c.events(), sorted);
}

TEST(Corpus, StatsCountLabels) {
    std::vector<Participant> ps = {{"a", CountryCode("X")}};
    std::vector<SelfReport> rs = {{"a", 3600000, 0, "Cooking"}, {"a", 7200000, 0, "games"}, {"a", 10800000, 0, "zzz"}};
    const auto st = build_corpus({}, rs, ps).stats(Taxonomy::default_taxonomy());
    EXPECT_EQ(st.reports, 3u);
    EXPECT_EQ(st.dropped_labels, 1u);
    EXPECT_EQ(st.unknown_labels, 1u);
    EXPECT_EQ(st.reports_per_country.at("X"), 3u);
}

TEST(CorpusDir, WriteReadRoundTripWithGzip) {
    const auto dir = std::filesystem::temp_directory_path() / "sensefold_corpus_rt";
    std::filesystem::remove_all(dir);
    std::vector<Participant> ps = {{"a", CountryCode("X")}, {"b", CountryCode("Y")}};
    std::vector<SensorEvent> ev = {steps("a", 10, 5), {"b", 20, ProximitySample{3}}};
    std::vector<SelfReport> rs = {{"a", 3600000, 60, "eating"}, {"b", 7200000, -120, "reading"}};
    const auto c = build_corpus(ev, rs, ps);
    for (bool gz : {false, true}) {
        std::filesystem::remove_all(dir);
        write_corpus_dir(dir, c, gz);
        auto files = read_corpus_dir(dir);
        EXPECT_EQ(files.malformed, 0u);
        const auto back = build_corpus(std::move(files.events), std::move(files.reports), std::move(files.participants));
        EXPECT_EQ(back.participants(), c.participants());
        EXPECT_EQ(back.events(), c.events());
        EXPECT_TRUE(std::equal(back.reports().begin(), back.reports().end(), c.reports().begin(), c.reports().end()));
    }
    std::filesystem::remove_all(dir);
}
