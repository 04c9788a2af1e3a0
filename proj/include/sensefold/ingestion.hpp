#pragma once

#include <array>
#include <cstdint>
#include <iosfwd>
#include <map>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <variant>
#include <vector>

#include "sensefold/core.hpp"

namespace sensefold {

// ---------------------------------------------------------------------------
// Sensor event payloads

struct LocationSample {
    double lat = 0, lon = 0, alt = 0;
    auto operator<=>(const LocationSample&) const = default;
};

enum class BluetoothKind : std::uint8_t { LE, Classic };

struct BluetoothScan {
    BluetoothKind kind = BluetoothKind::LE;
    std::string device_hash;
    double rssi = 0;
    auto operator<=>(const BluetoothScan&) const = default;
};

struct WifiScan {
    bool connected = false;
    std::string device_hash;
    double rssi = 0;
    auto operator<=>(const WifiScan&) const = default;
};

enum class CellTech : std::uint8_t { GSM, WCDMA, LTE };

struct CellularScan {
    CellTech tech = CellTech::LTE;
    std::string cell_hash;
    double signal = 0;
    auto operator<=>(const CellularScan&) const = default;
};

enum class NotificationAction : std::uint8_t { Posted, Removed };

struct NotificationEvent {
    NotificationAction action = NotificationAction::Posted;
    std::string key_hash;
    bool is_duplicate = false;
    auto operator<=>(const NotificationEvent&) const = default;
};

struct ProximitySample {
    double value = 0;
    auto operator<=>(const ProximitySample&) const = default;
};

enum class SimpleActivity : std::uint8_t { Still, InVehicle, OnBicycle, OnFoot, Running, Tilting, Walking, Other };

inline constexpr std::size_t kNumSimpleActivities = 8;

struct SimpleActivitySample {
    SimpleActivity label = SimpleActivity::Still;
    auto operator<=>(const SimpleActivitySample&) const = default;
};

struct StepsCounterSample {
    std::int64_t count = 0;
    auto operator<=>(const StepsCounterSample&) const = default;
};

struct StepsDetectedEvent {
    auto operator<=>(const StepsDetectedEvent&) const = default;
};

enum class ScreenAction : std::uint8_t { On, Off, Touch, PresenceStart, PresenceEnd };

struct ScreenEvent {
    ScreenAction action = ScreenAction::On;
    auto operator<=>(const ScreenEvent&) const = default;
};

/// Closed usage interval of one app category, [start_ms, end_ms].
struct AppUsageInterval {
    std::string category;
    std::int64_t start_ms = 0;
    std::int64_t end_ms = 0;
    auto operator<=>(const AppUsageInterval&) const = default;
};

using EventPayload =
    std::variant<LocationSample, BluetoothScan, WifiScan, CellularScan, NotificationEvent, ProximitySample,
                 SimpleActivitySample, StepsCounterSample, StepsDetectedEvent, ScreenEvent, AppUsageInterval>;

/// Event kinds, in payload-variant order.
enum class EventKind : std::uint8_t {
    Location,
    Bluetooth,
    Wifi,
    Cellular,
    Notification,
    Proximity,
    SimpleActivity,
    StepsCounter,
    StepsDetected,
    Screen,
    App,
};

inline constexpr std::size_t kNumEventKinds = 11;

std::string_view to_string(EventKind k);
std::string_view to_string(SimpleActivity a);
std::string_view to_string(CellTech t);

struct SensorEvent {
    std::string participant;
    std::int64_t timestamp_ms = 0;
    EventPayload payload;

    EventKind kind() const { return static_cast<EventKind>(payload.index()); }
    auto operator<=>(const SensorEvent&) const = default;
};

// ---------------------------------------------------------------------------
// JSONL parsing

struct MalformedLine {
    std::size_t line = 0;  // 1-based
    std::string reason;
};

struct ParseOptions {
    /// Parsing fails when the malformed share of non-blank lines exceeds this.
    double max_malformed_fraction = 0.01;
};

template <typename Record>
struct ParseResult {
    std::vector<Record> records;
    std::vector<MalformedLine> malformed;
    std::size_t duplicates = 0;
    std::size_t lines = 0;  // non-blank lines seen
};

ParseResult<SensorEvent> parse_event_log(std::istream& in, const ParseOptions& opts = {});
ParseResult<SelfReport> parse_self_reports(std::istream& in, const ParseOptions& opts = {});
std::vector<Participant> parse_participants(std::istream& in);

/// Single-record codecs; `event_from_json` throws DataError on schema violations.
nlohmann::json event_to_json(const SensorEvent& e);
SensorEvent event_from_json(const nlohmann::json& j);
nlohmann::json report_to_json(const SelfReport& r);
SelfReport report_from_json(const nlohmann::json& j);

void write_event_log(std::ostream& out, std::span<const SensorEvent> events);
void write_self_reports(std::ostream& out, std::span<const SelfReport> reports);
void write_participants(std::ostream& out, std::span<const Participant> participants);

// ---------------------------------------------------------------------------
// Corpus

/// Identifier strings (device, cell, notification key, app category) interned to dense ids.
using SymbolId = std::uint32_t;

struct TimedLocation {
    std::int64_t t;
    double lat, lon, alt;
};

/// One radio reading: Bluetooth, WiFi (with connection flag) or cellular.
struct TimedRssi {
    std::int64_t t;
    SymbolId device;
    double rssi;
    bool connected;
};

struct TimedNotification {
    std::int64_t t;
    NotificationAction action;
    SymbolId key;
    bool duplicate;
};

struct TimedValue {
    std::int64_t t;
    double value;
};

struct TimedActivity {
    std::int64_t t;
    SimpleActivity label;
};

struct TimedCount {
    std::int64_t t;
    std::int64_t count;
};

struct TimedScreen {
    std::int64_t t;
    ScreenAction action;
};

struct AppSpan {
    std::int64_t t;
    std::int64_t start;
    std::int64_t end;
    SymbolId category;
};

/// Per-participant, per-modality time-sorted streams.
struct ParticipantStreams {
    std::vector<TimedLocation> location;
    std::array<std::vector<TimedRssi>, 2> bluetooth;  // indexed by BluetoothKind
    std::vector<TimedRssi> wifi;
    std::array<std::vector<TimedRssi>, 3> cellular;  // indexed by CellTech
    std::vector<TimedNotification> notifications;
    std::vector<TimedValue> proximity;
    std::vector<TimedActivity> activity;
    std::vector<TimedCount> steps_counter;
    std::vector<std::int64_t> steps_detected;
    std::vector<TimedScreen> screen;
    std::vector<AppSpan> apps;  // sorted by start
    std::int64_t longest_app_span = 0;
};

struct CorpusStats {
    std::map<std::string, std::size_t> reports_per_country;
    std::map<std::string, std::size_t> events_per_kind;
    std::map<std::string, std::size_t> reports_per_label;  // normalized raw label
    std::size_t participants = 0;
    std::size_t events = 0;
    std::size_t reports = 0;
    std::size_t dropped_labels = 0;  // in the taxonomy drop set
    std::size_t unknown_labels = 0;  // neither merged nor dropped
    std::size_t duplicate_reports = 0;
};

class Corpus {
public:
    const std::vector<Participant>& participants() const { return participants_; }
    const Participant& participant(std::string_view id) const;
    bool has_participant(std::string_view id) const;

    /// All reports sorted by (participant, timestamp).
    std::span<const SelfReport> reports() const { return reports_; }
    std::span<const SelfReport> reports_of(std::string_view id) const;

    const ParticipantStreams& streams(std::string_view id) const;
    const ParticipantStreams& streams(std::size_t participant_index) const { return streams_[participant_index]; }
    std::size_t participant_index(std::string_view id) const;

    const std::string& symbol(SymbolId id) const { return symbols_[id]; }
    std::size_t symbol_count() const { return symbols_.size(); }

    std::size_t event_count() const { return event_count_; }
    /// Reconstructs the canonical event list, sorted by (participant, timestamp, payload).
    std::vector<SensorEvent> events() const;

    CorpusStats stats(const Taxonomy& tax) const;
    std::size_t duplicate_reports() const { return duplicate_reports_; }

    friend Corpus build_corpus(std::vector<SensorEvent> events, std::vector<SelfReport> reports,
                               std::vector<Participant> participants);

private:
    SymbolId intern(const std::string& s);

    std::vector<Participant> participants_;  // sorted by id
    std::unordered_map<std::string, std::size_t> participant_index_;
    std::vector<SelfReport> reports_;
    std::vector<std::pair<std::size_t, std::size_t>> report_ranges_;  // per participant [begin, end)
    std::vector<ParticipantStreams> streams_;
    std::vector<std::string> symbols_;
    std::unordered_map<std::string, SymbolId> symbol_ids_;
    std::size_t event_count_ = 0;
    std::size_t duplicate_reports_ = 0;
};

/// Sorts, deduplicates reports by (participant, timestamp) and indexes events per participant.
/// Throws DataError when an event or report names an unknown participant.
Corpus build_corpus(std::vector<SensorEvent> events, std::vector<SelfReport> reports,
                    std::vector<Participant> participants);

/// Corpus directory layout: one sub-directory per country holding participants.jsonl,
/// events.jsonl and reports.jsonl (each optionally gzip-compressed with a .gz suffix).
struct CorpusFiles {
    std::vector<SensorEvent> events;
    std::vector<SelfReport> reports;
    std::vector<Participant> participants;
    std::size_t malformed = 0;
    std::size_t duplicates = 0;
};

CorpusFiles read_corpus_dir(const std::filesystem::path& dir, const ParseOptions& opts = {});
void write_corpus_dir(const std::filesystem::path& dir, const Corpus& corpus, bool gzip = false);

}  // namespace sensefold
