#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "sensefold/core.hpp"
#include "sensefold/ingestion.hpp"

namespace sensefold {

// ---------------------------------------------------------------------------
// Feature registry

struct FeatureDescriptor {
    std::string name;
    std::string modality;  // group: location, bluetooth, wifi, cellular, ...
    std::string sensor;    // missingness unit: bluetooth_le, cellular_gsm, ...
    std::string unit;
    int levels = 0;                 // > 0 for integer-coded categorical features
    bool zero_when_absent = false;  // counts that read 0 rather than missing on an empty slice

    bool operator==(const FeatureDescriptor&) const = default;
};

class FeatureRegistry {
public:
    FeatureRegistry() = default;
    explicit FeatureRegistry(std::vector<FeatureDescriptor> features);

    /// The full 108-feature layout.
    static const FeatureRegistry& default_registry();

    std::size_t size() const { return features_.size(); }
    const FeatureDescriptor& operator[](std::size_t i) const { return features_[i]; }
    const std::vector<FeatureDescriptor>& features() const { return features_; }
    std::optional<std::size_t> find(std::string_view name) const;
    std::size_t index_of(std::string_view name) const;

    /// Ordered list of distinct sensor names.
    std::vector<std::string> sensors() const;

    /// Stable hash over the ordered feature names; models refuse data with another fingerprint.
    std::string fingerprint() const;

    FeatureRegistry subset(std::span<const std::size_t> keep) const;

    nlohmann::json to_json() const;
    static FeatureRegistry from_json(const nlohmann::json& j);

    bool operator==(const FeatureRegistry& o) const { return features_ == o.features_; }

private:
    std::vector<FeatureDescriptor> features_;
};

/// Store categories from the app feature block, in registry order ("not-found" last).
const std::vector<std::string>& app_categories();

/// Column offsets into the default registry.
namespace layout {
inline constexpr std::size_t kLocation = 0;
inline constexpr std::size_t kBluetoothLE = 3;
inline constexpr std::size_t kBluetoothClassic = 8;
inline constexpr std::size_t kWifi = 13;
inline constexpr std::size_t kCellular = 19;  // GSM, WCDMA, LTE blocks of 5
inline constexpr std::size_t kNotifications = 34;
inline constexpr std::size_t kProximity = 38;
inline constexpr std::size_t kActivity = 42;
inline constexpr std::size_t kSteps = 50;
inline constexpr std::size_t kScreen = 52;
inline constexpr std::size_t kApp = 61;
inline constexpr std::size_t kTime = 105;
inline constexpr std::size_t kTotal = 108;
}  // namespace layout

// ---------------------------------------------------------------------------
// Feature vectors and datasets

struct FeatureVector {
    std::vector<double> values;
    std::vector<std::uint8_t> missing;  // 1 = missing; aligned with values

    explicit FeatureVector(std::size_t n = 0) : values(n, 0.0), missing(n, 1) {}

    std::size_t size() const { return values.size(); }
    bool is_missing(std::size_t i) const { return missing[i] != 0; }
    void set(std::size_t i, double v) {
        values[i] = v;
        missing[i] = 0;
    }
    void set(std::size_t i, std::optional<double> v) {
        if (v) set(i, *v);
    }
    bool operator==(const FeatureVector&) const = default;
};

struct Example {
    FeatureVector features;
    ActivityClass label = ActivityClass::Sleeping;
    std::string participant;
    CountryCode country;
    std::int64_t timestamp_ms = 0;

    bool operator==(const Example&) const = default;
};

struct Dataset {
    FeatureRegistry registry;
    std::vector<Example> examples;

    std::size_t size() const { return examples.size(); }
    bool empty() const { return examples.empty(); }

    std::vector<CountryCode> countries() const;  // sorted, distinct
    std::vector<std::string> participants() const;
    std::vector<std::size_t> indices_of_country(const CountryCode& c) const;
    Dataset subset(std::span<const std::size_t> indices) const;
    bool has_missing() const;
    /// Sort by (participant, timestamp), the canonical persisted order.
    void canonicalize();
};

// ---------------------------------------------------------------------------
// Windows

struct WindowGuard {
    double min_width_min = 5.0;
    double max_width_min = 25.0;
};

struct TimeWindow {
    std::int64_t start_ms = 0;  // inclusive
    std::int64_t end_ms = 0;    // exclusive
    std::string participant;
    std::int64_t anchor_ms = 0;

    std::int64_t width_ms() const { return end_ms - start_ms; }
    bool contains(std::int64_t t) const { return t >= start_ms && t < end_ms; }
};

/// Window of `width_min` minutes centred on the report. Throws ConfigError outside the guard.
TimeWindow window_for(const SelfReport& report, double width_min, const WindowGuard& guard = {});

/// Zero-copy views of one participant's streams restricted to a window.
/// App intervals overlapping the window are copied and clipped to it.
struct EventSlices {
    std::span<const TimedLocation> location;
    std::array<std::span<const TimedRssi>, 2> bluetooth;
    std::span<const TimedRssi> wifi;
    std::array<std::span<const TimedRssi>, 3> cellular;
    std::span<const TimedNotification> notifications;
    std::span<const TimedValue> proximity;
    std::span<const TimedActivity> activity;
    std::span<const TimedCount> steps_counter;
    std::span<const std::int64_t> steps_detected;
    std::span<const TimedScreen> screen;
    std::vector<AppSpan> apps;

    std::size_t total() const;
};

EventSlices slice_events(const Corpus& corpus, std::string_view participant, const TimeWindow& window);
EventSlices slice_events(const ParticipantStreams& streams, const TimeWindow& window);

// ---------------------------------------------------------------------------
// Per-modality statistics

struct GeoPoint {
    double lat = 0, lon = 0;
};

inline constexpr double kEarthRadiusKm = 6371.0;

double great_circle_km(GeoPoint a, GeoPoint b);
/// Root-mean-square great-circle distance to the lat/lon centroid; nullopt for no points.
std::optional<double> radius_of_gyration(std::span<const GeoPoint> points);

struct ScreenStats {
    std::size_t touch_count = 0;
    std::size_t episode_count = 0;
    std::size_t on_events = 0;
    std::optional<double> presence_s;
    std::optional<double> total_s;
    std::optional<double> mean_s, min_s, max_s, std_s;
};

ScreenStats screen_episode_stats(std::span<const TimedScreen> events, const TimeWindow& window);

struct StepsStats {
    std::optional<double> steps_counter;
    std::size_t steps_detected = 0;
};

StepsStats steps_features(std::span<const TimedCount> counter, std::size_t detected_events);

struct RssiStats {
    double device_count = 0, mean = 0, std = 0, min = 0, max = 0;
};

std::optional<RssiStats> rssi_stats(std::span<const TimedRssi> readings);

/// Seconds spent per simple-activity label under zero-order hold to the next sample or window end.
std::array<double, kNumSimpleActivities> simple_activity_time(std::span<const TimedActivity> samples,
                                                              const TimeWindow& window);

// ---------------------------------------------------------------------------
// Extraction

struct FeaturizeOptions {
    double width_min = 20.0;
    WindowGuard guard;
    int jobs = 1;
};

/// Builds feature vectors for reports of one corpus; caches the app-category lookup.
class Featurizer {
public:
    Featurizer(const Corpus& corpus, const Taxonomy& taxonomy, FeaturizeOptions opts = {});

    /// Feature vector for the window around `report` (label not consulted).
    FeatureVector features(const SelfReport& report) const;
    /// nullopt when the report's label does not map to a target class.
    std::optional<Example> extract(const SelfReport& report) const;

    const FeaturizeOptions& options() const { return opts_; }

private:
    const Corpus& corpus_;
    const Taxonomy& taxonomy_;
    FeaturizeOptions opts_;
    std::vector<std::size_t> app_column_;  // symbol id -> app feature column
};

std::optional<Example> extract_features(const Corpus& corpus, const SelfReport& report, const Taxonomy& taxonomy,
                                        double width_min);

/// Featurizes every report; output canonicalized by (participant, timestamp).
Dataset featurize_corpus(const Corpus& corpus, const Taxonomy& taxonomy, const FeaturizeOptions& opts = {});

// ---------------------------------------------------------------------------
// CSV persistence: registry columns, then label, pid, country, t. Missing cells are empty.
// Lines starting with '#' are comments.

void write_dataset_csv(std::ostream& out, const Dataset& ds, std::string_view header_comment = {});
Dataset read_dataset_csv(std::istream& in, const FeatureRegistry* registry_hint = nullptr);
Dataset load_dataset(const std::filesystem::path& csv_path);

}  // namespace sensefold
