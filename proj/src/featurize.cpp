#include "sensefold/featurize.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <istream>
#include <numbers>
#include <ostream>
#include <sstream>
#include <unordered_map>

#include "sensefold/util.hpp"

namespace sensefold {

using nlohmann::json;

// ---------------------------------------------------------------------------
// Registry

const std::vector<std::string>& app_categories() {
    // Play Store categories. "word" folds into not-found so the block stays at 44 columns.
    static const std::vector<std::string> cats = {
        "action",        "adventure",        "arcade",           "art & design",
        "auto & vehicles", "beauty",         "board",            "books & reference",
        "business",      "card",             "casino",           "casual",
        "comics",        "communication",    "dating",           "education",
        "entertainment", "finance",          "food & drink",     "health & fitness",
        "house",         "lifestyle",        "maps & navigation", "medical",
        "music",         "news & magazines", "parenting",        "personalization",
        "photography",   "productivity",     "puzzle",           "racing",
        "role-playing",  "shopping",         "simulation",       "social",
        "sports",        "strategy",         "tools",            "travel",
        "trivia",        "video players & editors", "weather",   "not-found",
    };
    return cats;
}

FeatureRegistry::FeatureRegistry(std::vector<FeatureDescriptor> features) : features_(std::move(features)) {
    for (std::size_t i = 0; i < features_.size(); ++i)
        for (std::size_t j = i + 1; j < features_.size(); ++j)
            if (features_[i].name == features_[j].name)
                throw ConfigError("duplicate feature name '" + features_[i].name + "'");
}

const FeatureRegistry& FeatureRegistry::default_registry() {
    static const FeatureRegistry reg = [] {
        std::vector<FeatureDescriptor> f;
        auto add = [&f](std::string name, std::string modality, std::string sensor, std::string unit,
                        bool zero_when_absent = false, int levels = 0) {
            f.push_back({std::move(name), std::move(modality), std::move(sensor), std::move(unit), levels,
                         zero_when_absent});
        };
        add("location_radius_of_gyration", "location", "location", "km");
        add("location_distance_traveled", "location", "location", "km");
        add("location_altitude", "location", "location", "m");
        auto radio = [&add](const std::string& prefix, const std::string& modality, const std::string& stat_name) {
            add(prefix + "_num_of_devices", modality, prefix, "count");
            add(prefix + "_mean_" + stat_name, modality, prefix, "dBm");
            add(prefix + "_std_" + stat_name, modality, prefix, "dBm");
            add(prefix + "_min_" + stat_name, modality, prefix, "dBm");
            add(prefix + "_max_" + stat_name, modality, prefix, "dBm");
        };
        radio("bluetooth_le", "bluetooth", "rssi");
        radio("bluetooth_normal", "bluetooth", "rssi");
        add("wifi_connected", "wifi", "wifi", "bool");
        radio("wifi", "wifi", "rssi");
        radio("cellular_gsm", "cellular", "signal");
        radio("cellular_wcdma", "cellular", "signal");
        radio("cellular_lte", "cellular", "signal");
        add("notifications_posted", "notifications", "notifications", "count", true);
        add("notifications_posted_wo_dups", "notifications", "notifications", "count", true);
        add("notifications_removed", "notifications", "notifications", "count", true);
        add("notifications_removed_wo_dups", "notifications", "notifications", "count", true);
        for (const char* s : {"mean", "std", "min", "max"})
            add(std::string("proximity_") + s, "proximity", "proximity", "cm");
        for (const char* s : {"still", "invehicle", "onbicycle", "onfoot", "running", "tilting", "walking", "other"})
            add(std::string("activity_") + s, "activity", "activity", "s");
        add("steps_counter", "steps", "steps", "count");
        add("steps_detected", "steps", "steps", "count", true);
        add("touch_events", "screen", "screen", "count", true);
        add("user_presence_time", "screen", "screen", "s");
        add("screen_num_of_episodes", "screen", "screen", "count", true);
        add("screen_time_per_episode", "screen", "screen", "s");
        add("screen_min_episode", "screen", "screen", "s");
        add("screen_max_episode", "screen", "screen", "s");
        add("screen_std_episode", "screen", "screen", "s");
        add("screen_time_total", "screen", "screen", "s");
        add("screen_on_events", "screen", "screen", "count", true);
        for (const auto& c : app_categories()) add("app_" + c, "app", "app", "s");
        add("hour_of_day", "time", "time", "h");
        add("day_period", "time", "time", "category", false, static_cast<int>(kNumDayPeriods));
        add("weekend", "time", "time", "bool", false, 2);
        return FeatureRegistry(std::move(f));
    }();
    return reg;
}

std::optional<std::size_t> FeatureRegistry::find(std::string_view name) const {
    for (std::size_t i = 0; i < features_.size(); ++i)
        if (features_[i].name == name) return i;
    return std::nullopt;
}

std::size_t FeatureRegistry::index_of(std::string_view name) const {
    if (auto i = find(name)) return *i;
    throw ConfigError("unknown feature '" + std::string(name) + "'");
}

std::vector<std::string> FeatureRegistry::sensors() const {
    std::vector<std::string> out;
    for (const auto& f : features_)
        if (std::find(out.begin(), out.end(), f.sensor) == out.end()) out.push_back(f.sensor);
    return out;
}

std::string FeatureRegistry::fingerprint() const {
    std::string joined;
    for (const auto& f : features_) {
        joined += f.name;
        joined += '\n';
    }
    return hex64(fnv1a64(joined));
}

FeatureRegistry FeatureRegistry::subset(std::span<const std::size_t> keep) const {
    std::vector<FeatureDescriptor> f;
    f.reserve(keep.size());
    for (auto i : keep) f.push_back(features_.at(i));
    return FeatureRegistry(std::move(f));
}

json FeatureRegistry::to_json() const {
    json arr = json::array();
    for (std::size_t i = 0; i < features_.size(); ++i) {
        const auto& f = features_[i];
        arr.push_back({{"index", i},
                       {"name", f.name},
                       {"modality", f.modality},
                       {"sensor", f.sensor},
                       {"unit", f.unit},
                       {"levels", f.levels},
                       {"zero_when_absent", f.zero_when_absent}});
    }
    return {{"fingerprint", fingerprint()}, {"features", arr}};
}

FeatureRegistry FeatureRegistry::from_json(const json& j) {
    std::vector<FeatureDescriptor> f;
    for (const auto& e : j.at("features")) {
        f.push_back({e.at("name").get<std::string>(), e.at("modality").get<std::string>(),
                     e.at("sensor").get<std::string>(), e.value("unit", std::string{}), e.value("levels", 0),
                     e.value("zero_when_absent", false)});
    }
    return FeatureRegistry(std::move(f));
}

// ---------------------------------------------------------------------------
// Dataset

std::vector<CountryCode> Dataset::countries() const {
    std::vector<CountryCode> out;
    for (const auto& e : examples) out.push_back(e.country);
    std::sort(out.begin(), out.end());
    out.erase(std::unique(out.begin(), out.end()), out.end());
    return out;
}

std::vector<std::string> Dataset::participants() const {
    std::vector<std::string> out;
    for (const auto& e : examples) out.push_back(e.participant);
    std::sort(out.begin(), out.end());
    out.erase(std::unique(out.begin(), out.end()), out.end());
    return out;
}

std::vector<std::size_t> Dataset::indices_of_country(const CountryCode& c) const {
    std::vector<std::size_t> out;
    for (std::size_t i = 0; i < examples.size(); ++i)
        if (examples[i].country == c) out.push_back(i);
    return out;
}

Dataset Dataset::subset(std::span<const std::size_t> indices) const {
    Dataset out{registry, {}};
    out.examples.reserve(indices.size());
    for (auto i : indices) out.examples.push_back(examples.at(i));
    return out;
}

bool Dataset::has_missing() const {
    for (const auto& e : examples)
        for (auto m : e.features.missing)
            if (m) return true;
    return false;
}

void Dataset::canonicalize() {
    std::stable_sort(examples.begin(), examples.end(), [](const Example& a, const Example& b) {
        return std::tie(a.participant, a.timestamp_ms) < std::tie(b.participant, b.timestamp_ms);
    });
}

// ---------------------------------------------------------------------------
// Windows and slicing

TimeWindow window_for(const SelfReport& report, double width_min, const WindowGuard& guard) {
    if (!(width_min >= guard.min_width_min && width_min <= guard.max_width_min))
        throw ConfigError("window width " + format_double(width_min) + " min outside [" +
                          format_double(guard.min_width_min) + ", " + format_double(guard.max_width_min) + "]");
    const auto width = static_cast<std::int64_t>(std::llround(width_min * static_cast<double>(kMsPerMinute)));
    TimeWindow w;
    w.start_ms = report.timestamp_ms - width / 2;
    w.end_ms = w.start_ms + width;
    w.participant = report.participant;
    w.anchor_ms = report.timestamp_ms;
    return w;
}

namespace {

template <typename T>
std::span<const T> time_range(const std::vector<T>& v, const TimeWindow& w) {
    auto lo = std::lower_bound(v.begin(), v.end(), w.start_ms, [](const T& x, std::int64_t t) { return x.t < t; });
    auto hi = std::lower_bound(lo, v.end(), w.end_ms, [](const T& x, std::int64_t t) { return x.t < t; });
    return {lo, hi};
}

std::span<const std::int64_t> time_range(const std::vector<std::int64_t>& v, const TimeWindow& w) {
    auto lo = std::lower_bound(v.begin(), v.end(), w.start_ms);
    auto hi = std::lower_bound(lo, v.end(), w.end_ms);
    return {lo, hi};
}

}  // namespace

std::size_t EventSlices::total() const {
    std::size_t n = location.size() + wifi.size() + notifications.size() + proximity.size() + activity.size() +
                    steps_counter.size() + steps_detected.size() + screen.size() + apps.size();
    for (const auto& b : bluetooth) n += b.size();
    for (const auto& c : cellular) n += c.size();
    return n;
}

EventSlices slice_events(const ParticipantStreams& s, const TimeWindow& w) {
    EventSlices out;
    out.location = time_range(s.location, w);
    for (std::size_t k = 0; k < 2; ++k) out.bluetooth[k] = time_range(s.bluetooth[k], w);
    out.wifi = time_range(s.wifi, w);
    for (std::size_t k = 0; k < 3; ++k) out.cellular[k] = time_range(s.cellular[k], w);
    out.notifications = time_range(s.notifications, w);
    out.proximity = time_range(s.proximity, w);
    out.activity = time_range(s.activity, w);
    out.steps_counter = time_range(s.steps_counter, w);
    out.steps_detected = time_range(s.steps_detected, w);
    out.screen = time_range(s.screen, w);

    // Intervals starting up to the longest span before the window may still overlap it.
    const std::int64_t from = w.start_ms - s.longest_app_span;
    auto it = std::lower_bound(s.apps.begin(), s.apps.end(), from,
                               [](const AppSpan& a, std::int64_t t) { return a.start < t; });
    for (; it != s.apps.end() && it->start < w.end_ms; ++it) {
        const bool overlaps = it->end > w.start_ms || (it->start == it->end && it->start >= w.start_ms);
        if (!overlaps) continue;
        AppSpan clipped = *it;
        clipped.start = std::max(clipped.start, w.start_ms);
        clipped.end = std::min(clipped.end, w.end_ms);
        out.apps.push_back(clipped);
    }
    return out;
}

EventSlices slice_events(const Corpus& corpus, std::string_view participant, const TimeWindow& window) {
    return slice_events(corpus.streams(participant), window);
}

// ---------------------------------------------------------------------------
// Statistics

double great_circle_km(GeoPoint a, GeoPoint b) {
    constexpr double rad = std::numbers::pi / 180.0;
    const double dlat = (b.lat - a.lat) * rad;
    const double dlon = (b.lon - a.lon) * rad;
    const double h = std::sin(dlat / 2) * std::sin(dlat / 2) +
                     std::cos(a.lat * rad) * std::cos(b.lat * rad) * std::sin(dlon / 2) * std::sin(dlon / 2);
    return 2.0 * kEarthRadiusKm * std::asin(std::min(1.0, std::sqrt(h)));
}

std::optional<double> radius_of_gyration(std::span<const GeoPoint> points) {
    if (points.empty()) return std::nullopt;
    GeoPoint c;
    for (const auto& p : points) {
        c.lat += p.lat;
        c.lon += p.lon;
    }
    c.lat /= static_cast<double>(points.size());
    c.lon /= static_cast<double>(points.size());
    double sq = 0;
    for (const auto& p : points) {
        const double d = great_circle_km(p, c);
        sq += d * d;
    }
    return std::sqrt(sq / static_cast<double>(points.size()));
}

namespace {

struct Moments {
    double mean = 0, std = 0, min = 0, max = 0;
};

// Population moments; `values` must be non-empty.
Moments moments(std::span<const double> values) {
    Moments m;
    m.min = m.max = values.front();
    double sum = 0;
    for (double v : values) {
        sum += v;
        m.min = std::min(m.min, v);
        m.max = std::max(m.max, v);
    }
    m.mean = sum / static_cast<double>(values.size());
    double ss = 0;
    for (double v : values) ss += (v - m.mean) * (v - m.mean);
    m.std = std::sqrt(ss / static_cast<double>(values.size()));
    return m;
}

// Sums [start, end) spans opened by `open` and closed by `close`; spans crossing the window edges are clipped.
std::vector<double> spans_seconds(std::span<const TimedScreen> events, const TimeWindow& w, ScreenAction open,
                                  ScreenAction close, std::size_t* open_events = nullptr) {
    enum class State { Unknown, Open, Closed } state = State::Unknown;
    std::int64_t started = 0;
    std::vector<double> spans;
    for (const auto& e : events) {
        if (e.action == open) {
            if (open_events) ++*open_events;
            if (state != State::Open) {
                started = e.t;
                state = State::Open;
            }
        } else if (e.action == close) {
            if (state == State::Open)
                spans.push_back(static_cast<double>(e.t - started) / 1000.0);
            else if (state == State::Unknown)
                spans.push_back(static_cast<double>(e.t - w.start_ms) / 1000.0);
            state = State::Closed;
        }
    }
    if (state == State::Open) spans.push_back(static_cast<double>(w.end_ms - started) / 1000.0);
    return spans;
}

}  // namespace

ScreenStats screen_episode_stats(std::span<const TimedScreen> events, const TimeWindow& window) {
    ScreenStats st;
    if (events.empty()) return st;
    for (const auto& e : events)
        if (e.action == ScreenAction::Touch) ++st.touch_count;

    const auto episodes = spans_seconds(events, window, ScreenAction::On, ScreenAction::Off, &st.on_events);
    const auto presence = spans_seconds(events, window, ScreenAction::PresenceStart, ScreenAction::PresenceEnd);

    double presence_total = 0;
    for (double p : presence) presence_total += p;
    st.presence_s = presence_total;

    st.episode_count = episodes.size();
    double total = 0;
    for (double d : episodes) total += d;
    st.total_s = total;
    if (!episodes.empty()) {
        const auto m = moments(episodes);
        st.mean_s = m.mean;
        st.min_s = m.min;
        st.max_s = m.max;
        st.std_s = m.std;
    }
    return st;
}

StepsStats steps_features(std::span<const TimedCount> counter, std::size_t detected_events) {
    StepsStats st;
    st.steps_detected = detected_events;
    if (counter.size() >= 2) {
        std::int64_t steps = 0;
        for (std::size_t i = 1; i < counter.size(); ++i) {
            const std::int64_t delta = counter[i].count - counter[i - 1].count;
            steps += delta >= 0 ? delta : counter[i].count;  // counter reset on reboot
        }
        st.steps_counter = static_cast<double>(steps);
    }
    return st;
}

std::optional<RssiStats> rssi_stats(std::span<const TimedRssi> readings) {
    if (readings.empty()) return std::nullopt;
    std::vector<SymbolId> devices;
    std::vector<double> values;
    devices.reserve(readings.size());
    values.reserve(readings.size());
    for (const auto& r : readings) {
        devices.push_back(r.device);
        values.push_back(r.rssi);
    }
    std::sort(devices.begin(), devices.end());
    const auto distinct = std::unique(devices.begin(), devices.end()) - devices.begin();
    const auto m = moments(values);
    return RssiStats{static_cast<double>(distinct), m.mean, m.std, m.min, m.max};
}

std::array<double, kNumSimpleActivities> simple_activity_time(std::span<const TimedActivity> samples,
                                                              const TimeWindow& window) {
    std::array<double, kNumSimpleActivities> secs{};
    for (std::size_t i = 0; i < samples.size(); ++i) {
        const std::int64_t until = i + 1 < samples.size() ? samples[i + 1].t : window.end_ms;
        secs[static_cast<std::size_t>(samples[i].label)] += static_cast<double>(until - samples[i].t) / 1000.0;
    }
    return secs;
}

// ---------------------------------------------------------------------------
// Extraction

namespace {

std::size_t distinct_keys(std::span<const TimedNotification> events, NotificationAction action, std::size_t* raw) {
    std::vector<SymbolId> keys;
    for (const auto& e : events) {
        if (e.action != action) continue;
        keys.push_back(e.key);
    }
    *raw = keys.size();
    std::sort(keys.begin(), keys.end());
    return static_cast<std::size_t>(std::unique(keys.begin(), keys.end()) - keys.begin());
}

void put_rssi(FeatureVector& fv, std::size_t offset, std::span<const TimedRssi> readings) {
    if (auto st = rssi_stats(readings)) {
        fv.set(offset + 0, st->device_count);
        fv.set(offset + 1, st->mean);
        fv.set(offset + 2, st->std);
        fv.set(offset + 3, st->min);
        fv.set(offset + 4, st->max);
    }
}

}  // namespace

Featurizer::Featurizer(const Corpus& corpus, const Taxonomy& taxonomy, FeaturizeOptions opts)
    : corpus_(corpus), taxonomy_(taxonomy), opts_(opts) {
    if (!(opts_.width_min >= opts_.guard.min_width_min && opts_.width_min <= opts_.guard.max_width_min))
        throw ConfigError("window width " + format_double(opts_.width_min) + " min outside [" +
                          format_double(opts_.guard.min_width_min) + ", " + format_double(opts_.guard.max_width_min) +
                          "]");
    const auto& cats = app_categories();
    std::unordered_map<std::string, std::size_t> col;
    for (std::size_t i = 0; i < cats.size(); ++i) col.emplace(cats[i], layout::kApp + i);
    const std::size_t not_found = layout::kApp + cats.size() - 1;
    app_column_.resize(corpus.symbol_count(), not_found);
    for (std::size_t s = 0; s < corpus.symbol_count(); ++s) {
        auto it = col.find(normalize_label(corpus.symbol(static_cast<SymbolId>(s))));
        if (it != col.end()) app_column_[s] = it->second;
    }
}

FeatureVector Featurizer::features(const SelfReport& report) const {
    using namespace layout;
    const TimeWindow w = window_for(report, opts_.width_min, opts_.guard);
    const EventSlices sl = slice_events(corpus_.streams(report.participant), w);
    FeatureVector fv(kTotal);

    if (!sl.location.empty()) {
        std::vector<GeoPoint> pts;
        pts.reserve(sl.location.size());
        double alt = 0, dist = 0;
        for (std::size_t i = 0; i < sl.location.size(); ++i) {
            pts.push_back({sl.location[i].lat, sl.location[i].lon});
            alt += sl.location[i].alt;
            if (i > 0) dist += great_circle_km(pts[i - 1], pts[i]);
        }
        fv.set(kLocation + 0, radius_of_gyration(pts));
        fv.set(kLocation + 1, dist);
        fv.set(kLocation + 2, alt / static_cast<double>(pts.size()));
    }

    put_rssi(fv, kBluetoothLE, sl.bluetooth[0]);
    put_rssi(fv, kBluetoothClassic, sl.bluetooth[1]);
    if (!sl.wifi.empty()) {
        const bool connected = std::any_of(sl.wifi.begin(), sl.wifi.end(), [](const TimedRssi& r) { return r.connected; });
        fv.set(kWifi, connected ? 1.0 : 0.0);
        put_rssi(fv, kWifi + 1, sl.wifi);
    }
    for (std::size_t k = 0; k < 3; ++k) put_rssi(fv, kCellular + 5 * k, sl.cellular[k]);

    std::size_t posted = 0, removed = 0;
    const std::size_t posted_distinct = distinct_keys(sl.notifications, NotificationAction::Posted, &posted);
    const std::size_t removed_distinct = distinct_keys(sl.notifications, NotificationAction::Removed, &removed);
    fv.set(kNotifications + 0, static_cast<double>(posted));
    fv.set(kNotifications + 1, static_cast<double>(posted_distinct));
    fv.set(kNotifications + 2, static_cast<double>(removed));
    fv.set(kNotifications + 3, static_cast<double>(removed_distinct));

    if (!sl.proximity.empty()) {
        std::vector<double> v;
        v.reserve(sl.proximity.size());
        for (const auto& p : sl.proximity) v.push_back(p.value);
        const auto m = moments(v);
        fv.set(kProximity + 0, m.mean);
        fv.set(kProximity + 1, m.std);
        fv.set(kProximity + 2, m.min);
        fv.set(kProximity + 3, m.max);
    }

    if (!sl.activity.empty()) {
        const auto secs = simple_activity_time(sl.activity, w);
        for (std::size_t k = 0; k < kNumSimpleActivities; ++k) fv.set(kActivity + k, secs[k]);
    }

    const auto steps = steps_features(sl.steps_counter, sl.steps_detected.size());
    fv.set(kSteps + 0, steps.steps_counter);
    fv.set(kSteps + 1, static_cast<double>(steps.steps_detected));

    const auto scr = screen_episode_stats(sl.screen, w);
    fv.set(kScreen + 0, static_cast<double>(scr.touch_count));
    fv.set(kScreen + 1, scr.presence_s);
    fv.set(kScreen + 2, static_cast<double>(scr.episode_count));
    fv.set(kScreen + 3, scr.mean_s);
    fv.set(kScreen + 4, scr.min_s);
    fv.set(kScreen + 5, scr.max_s);
    fv.set(kScreen + 6, scr.std_s);
    fv.set(kScreen + 7, scr.total_s);
    fv.set(kScreen + 8, static_cast<double>(scr.on_events));

    if (!sl.apps.empty()) {
        for (std::size_t k = 0; k < app_categories().size(); ++k) fv.set(kApp + k, 0.0);
        for (const auto& a : sl.apps) fv.values[app_column_[a.category]] += static_cast<double>(a.end - a.start) / 1000.0;
    }

    const int hour = local_hour(report.timestamp_ms, report.local_offset_min);
    fv.set(kTime + 0, static_cast<double>(hour));
    fv.set(kTime + 1, static_cast<double>(day_period_for_hour(hour)));
    fv.set(kTime + 2, is_weekend(report.timestamp_ms, report.local_offset_min) ? 1.0 : 0.0);
    return fv;
}

std::optional<Example> Featurizer::extract(const SelfReport& report) const {
    const auto label = taxonomy_.map(report.raw_activity);
    if (!label) return std::nullopt;
    return Example{features(report), *label, report.participant, corpus_.participant(report.participant).country,
                   report.timestamp_ms};
}

std::optional<Example> extract_features(const Corpus& corpus, const SelfReport& report, const Taxonomy& taxonomy,
                                        double width_min) {
    FeaturizeOptions opts;
    opts.width_min = width_min;
    return Featurizer(corpus, taxonomy, opts).extract(report);
}

Dataset featurize_corpus(const Corpus& corpus, const Taxonomy& taxonomy, const FeaturizeOptions& opts) {
    const Featurizer fz(corpus, taxonomy, opts);
    const auto reports = corpus.reports();
    std::vector<std::optional<Example>> out(reports.size());
    const std::size_t chunk = 1024;
    const std::size_t chunks = (reports.size() + chunk - 1) / chunk;
    parallel_for(chunks, opts.jobs, [&](std::size_t c) {
        const std::size_t end = std::min(reports.size(), (c + 1) * chunk);
        for (std::size_t i = c * chunk; i < end; ++i) out[i] = fz.extract(reports[i]);
    });
    Dataset ds{FeatureRegistry::default_registry(), {}};
    ds.examples.reserve(reports.size());
    for (auto& e : out)
        if (e) ds.examples.push_back(std::move(*e));
    ds.canonicalize();
    return ds;
}

// ---------------------------------------------------------------------------
// CSV

void write_dataset_csv(std::ostream& out, const Dataset& ds, std::string_view header_comment) {
    if (!header_comment.empty()) out << "# " << header_comment << '\n';
    for (const auto& f : ds.registry.features()) out << f.name << ',';
    out << "label,pid,country,t\n";
    std::string line;
    for (const auto& e : ds.examples) {
        line.clear();
        for (std::size_t i = 0; i < e.features.size(); ++i) {
            if (!e.features.is_missing(i)) line += format_double(e.features.values[i]);
            line += ',';
        }
        line += to_string(e.label);
        line += ',';
        line += e.participant;
        line += ',';
        line += e.country.str();
        line += ',';
        line += std::to_string(e.timestamp_ms);
        line += '\n';
        out << line;
    }
}

namespace {

std::vector<std::string_view> split_csv(std::string_view line) {
    std::vector<std::string_view> out;
    std::size_t start = 0;
    while (true) {
        const auto comma = line.find(',', start);
        if (comma == std::string_view::npos) {
            out.push_back(line.substr(start));
            break;
        }
        out.push_back(line.substr(start, comma - start));
        start = comma + 1;
    }
    return out;
}

double parse_double(std::string_view s, std::size_t lineno) {
    double v = 0;
    auto res = std::from_chars(s.data(), s.data() + s.size(), v);
    if (res.ec != std::errc{} || res.ptr != s.data() + s.size())
        throw DataError("line " + std::to_string(lineno) + ": bad number '" + std::string(s) + "'");
    return v;
}

}  // namespace

Dataset read_dataset_csv(std::istream& in, const FeatureRegistry* registry_hint) {
    std::string line;
    std::size_t lineno = 0;
    std::vector<std::string_view> cells;
    std::string header;
    while (std::getline(in, line)) {
        ++lineno;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty() || line[0] == '#') continue;
        header = line;
        break;
    }
    if (header.empty()) throw DataError("feature CSV has no header");
    const auto names = split_csv(header);
    if (names.size() < 4 || names[names.size() - 4] != "label" || names[names.size() - 3] != "pid" ||
        names[names.size() - 2] != "country" || names.back() != "t")
        throw DataError("feature CSV header must end with label,pid,country,t");
    const std::size_t nf = names.size() - 4;

    Dataset ds;
    if (registry_hint) {
        if (registry_hint->size() != nf) throw DataError("registry sidecar does not match CSV header");
        for (std::size_t i = 0; i < nf; ++i)
            if ((*registry_hint)[i].name != names[i]) throw DataError("registry sidecar does not match CSV header");
        ds.registry = *registry_hint;
    } else {
        const auto& def = FeatureRegistry::default_registry();
        std::vector<FeatureDescriptor> f;
        for (std::size_t i = 0; i < nf; ++i) {
            if (auto k = def.find(names[i]))
                f.push_back(def[*k]);
            else
                f.push_back({std::string(names[i]), "other", "other", "", 0, false});
        }
        ds.registry = FeatureRegistry(std::move(f));
    }

    while (std::getline(in, line)) {
        ++lineno;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty() || line[0] == '#') continue;
        cells = split_csv(line);
        if (cells.size() != names.size())
            throw DataError("line " + std::to_string(lineno) + ": expected " + std::to_string(names.size()) + " cells");
        Example e;
        e.features = FeatureVector(nf);
        for (std::size_t i = 0; i < nf; ++i)
            if (!cells[i].empty()) e.features.set(i, parse_double(cells[i], lineno));
        auto label = activity_from_string(cells[nf]);
        if (!label) throw DataError("line " + std::to_string(lineno) + ": unknown label '" + std::string(cells[nf]) + "'");
        e.label = *label;
        e.participant = std::string(cells[nf + 1]);
        e.country = CountryCode(std::string(cells[nf + 2]));
        const auto ts = cells[nf + 3];
        auto res = std::from_chars(ts.data(), ts.data() + ts.size(), e.timestamp_ms);
        if (res.ec != std::errc{} || res.ptr != ts.data() + ts.size())
            throw DataError("line " + std::to_string(lineno) + ": bad timestamp '" + std::string(ts) + "'");
        ds.examples.push_back(std::move(e));
    }
    return ds;
}

Dataset load_dataset(const std::filesystem::path& csv_path) {
    std::istringstream in(read_text_file(csv_path));
    const auto sidecar = csv_path.parent_path() / "registry.json";
    if (std::filesystem::exists(sidecar)) {
        const auto reg = FeatureRegistry::from_json(json::parse(read_text_file(sidecar)));
        // The sidecar only applies when it describes this CSV.
        try {
            return read_dataset_csv(in, &reg);
        } catch (const DataError&) {
            in.clear();
            in.str(read_text_file(csv_path));
        }
    }
    return read_dataset_csv(in, nullptr);
}

}  // namespace sensefold
