#include "sensefold/ingestion.hpp"

#include <algorithm>
#include <cmath>
#include <istream>
#include <ostream>
#include <set>
#include <sstream>

#include "sensefold/util.hpp"

namespace sensefold {

using nlohmann::json;

namespace {

constexpr std::array<std::string_view, kNumEventKinds> kKindNames = {
    "location",       "bluetooth",     "wifi",           "cellular", "notification", "proximity",
    "activity",       "steps_counter", "steps_detected", "screen",   "app",
};

constexpr std::array<std::string_view, kNumSimpleActivities> kSimpleNames = {
    "still", "in_vehicle", "on_bicycle", "on_foot", "running", "tilting", "walking", "other",
};

constexpr std::array<std::string_view, 3> kTechNames = {"gsm", "wcdma", "lte"};
constexpr std::array<std::string_view, 2> kBtNames = {"le", "classic"};
constexpr std::array<std::string_view, 2> kNotificationNames = {"posted", "removed"};
constexpr std::array<std::string_view, 5> kScreenNames = {"on", "off", "touch", "presence_start", "presence_end"};

template <std::size_t N>
std::size_t lookup(const std::array<std::string_view, N>& names, std::string_view value, std::string_view field) {
    for (std::size_t i = 0; i < N; ++i)
        if (names[i] == value) return i;
    throw DataError("unknown " + std::string(field) + " '" + std::string(value) + "'");
}

const json& field(const json& j, const char* name) {
    auto it = j.find(name);
    if (it == j.end()) throw DataError(std::string("missing field '") + name + "'");
    return *it;
}

std::string get_string(const json& j, const char* name) {
    const json& v = field(j, name);
    if (!v.is_string()) throw DataError(std::string("field '") + name + "' must be a string");
    return v.get<std::string>();
}

std::int64_t get_int(const json& j, const char* name) {
    const json& v = field(j, name);
    if (!v.is_number_integer()) throw DataError(std::string("field '") + name + "' must be an integer");
    return v.get<std::int64_t>();
}

double get_real(const json& j, const char* name) {
    const json& v = field(j, name);
    if (!v.is_number()) throw DataError(std::string("field '") + name + "' must be a number");
    const double d = v.get<double>();
    if (!std::isfinite(d)) throw DataError(std::string("field '") + name + "' must be finite");
    return d;
}

bool get_bool(const json& j, const char* name) {
    const json& v = field(j, name);
    if (!v.is_boolean()) throw DataError(std::string("field '") + name + "' must be a boolean");
    return v.get<bool>();
}

double get_signal(const json& j, const char* name) {
    const double v = get_real(j, name);
    if (v > 0) throw DataError(std::string("field '") + name + "' must be <= 0 dBm");
    return v;
}

template <typename Record, typename Decode>
ParseResult<Record> parse_lines(std::istream& in, const ParseOptions& opts, Decode decode) {
    ParseResult<Record> result;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        ++result.lines;
        try {
            result.records.push_back(decode(json::parse(line)));
        } catch (const json::exception& e) {
            result.malformed.push_back({lineno, e.what()});
        } catch (const DataError& e) {
            result.malformed.push_back({lineno, e.what()});
        }
    }
    if (result.lines > 0) {
        const double frac = static_cast<double>(result.malformed.size()) / static_cast<double>(result.lines);
        if (frac > opts.max_malformed_fraction) {
            const auto& first = result.malformed.front();
            throw DataError(std::to_string(result.malformed.size()) + " of " + std::to_string(result.lines) +
                            " lines malformed (first at line " + std::to_string(first.line) + ": " + first.reason +
                            ")");
        }
    }
    return result;
}

}  // namespace

std::string_view to_string(EventKind k) { return kKindNames.at(static_cast<std::size_t>(k)); }
std::string_view to_string(SimpleActivity a) { return kSimpleNames.at(static_cast<std::size_t>(a)); }
std::string_view to_string(CellTech t) { return kTechNames.at(static_cast<std::size_t>(t)); }

// ---------------------------------------------------------------------------

json event_to_json(const SensorEvent& e) {
    json j = {{"pid", e.participant}, {"t", e.timestamp_ms}, {"kind", std::string(to_string(e.kind()))}};
    std::visit(
        [&j](const auto& p) {
            using T = std::decay_t<decltype(p)>;
            if constexpr (std::is_same_v<T, LocationSample>) {
                j["lat"] = p.lat;
                j["lon"] = p.lon;
                j["alt"] = p.alt;
            } else if constexpr (std::is_same_v<T, BluetoothScan>) {
                j["bt_kind"] = kBtNames[static_cast<std::size_t>(p.kind)];
                j["device"] = p.device_hash;
                j["rssi"] = p.rssi;
            } else if constexpr (std::is_same_v<T, WifiScan>) {
                j["connected"] = p.connected;
                j["device"] = p.device_hash;
                j["rssi"] = p.rssi;
            } else if constexpr (std::is_same_v<T, CellularScan>) {
                j["tech"] = kTechNames[static_cast<std::size_t>(p.tech)];
                j["cell"] = p.cell_hash;
                j["signal"] = p.signal;
            } else if constexpr (std::is_same_v<T, NotificationEvent>) {
                j["action"] = kNotificationNames[static_cast<std::size_t>(p.action)];
                j["key"] = p.key_hash;
                j["duplicate"] = p.is_duplicate;
            } else if constexpr (std::is_same_v<T, ProximitySample>) {
                j["value"] = p.value;
            } else if constexpr (std::is_same_v<T, SimpleActivitySample>) {
                j["label"] = kSimpleNames[static_cast<std::size_t>(p.label)];
            } else if constexpr (std::is_same_v<T, StepsCounterSample>) {
                j["count"] = p.count;
            } else if constexpr (std::is_same_v<T, StepsDetectedEvent>) {
            } else if constexpr (std::is_same_v<T, ScreenEvent>) {
                j["action"] = kScreenNames[static_cast<std::size_t>(p.action)];
            } else if constexpr (std::is_same_v<T, AppUsageInterval>) {
                j["category"] = p.category;
                j["start"] = p.start_ms;
                j["end"] = p.end_ms;
            }
        },
        e.payload);
    return j;
}

SensorEvent event_from_json(const json& j) {
    if (!j.is_object()) throw DataError("record is not a JSON object");
    SensorEvent e;
    e.participant = get_string(j, "pid");
    if (e.participant.empty()) throw DataError("empty pid");
    e.timestamp_ms = get_int(j, "t");
    if (e.timestamp_ms <= 0) throw DataError("timestamp must be positive");
    const auto kind = static_cast<EventKind>(lookup(kKindNames, get_string(j, "kind"), "kind"));
    switch (kind) {
        case EventKind::Location:
            e.payload = LocationSample{get_real(j, "lat"), get_real(j, "lon"), get_real(j, "alt")};
            break;
        case EventKind::Bluetooth:
            e.payload = BluetoothScan{static_cast<BluetoothKind>(lookup(kBtNames, get_string(j, "bt_kind"), "bt_kind")),
                                      get_string(j, "device"), get_signal(j, "rssi")};
            break;
        case EventKind::Wifi:
            e.payload = WifiScan{get_bool(j, "connected"), get_string(j, "device"), get_signal(j, "rssi")};
            break;
        case EventKind::Cellular:
            e.payload = CellularScan{static_cast<CellTech>(lookup(kTechNames, get_string(j, "tech"), "tech")),
                                     get_string(j, "cell"), get_signal(j, "signal")};
            break;
        case EventKind::Notification:
            e.payload = NotificationEvent{
                static_cast<NotificationAction>(lookup(kNotificationNames, get_string(j, "action"), "action")),
                get_string(j, "key"), j.contains("duplicate") ? get_bool(j, "duplicate") : false};
            break;
        case EventKind::Proximity:
            e.payload = ProximitySample{get_real(j, "value")};
            break;
        case EventKind::SimpleActivity:
            e.payload = SimpleActivitySample{
                static_cast<SimpleActivity>(lookup(kSimpleNames, get_string(j, "label"), "activity label"))};
            break;
        case EventKind::StepsCounter: {
            const auto count = get_int(j, "count");
            if (count < 0) throw DataError("steps count must be non-negative");
            e.payload = StepsCounterSample{count};
            break;
        }
        case EventKind::StepsDetected:
            e.payload = StepsDetectedEvent{};
            break;
        case EventKind::Screen:
            e.payload = ScreenEvent{static_cast<ScreenAction>(lookup(kScreenNames, get_string(j, "action"), "action"))};
            break;
        case EventKind::App: {
            AppUsageInterval a{get_string(j, "category"), get_int(j, "start"), get_int(j, "end")};
            if (a.start_ms <= 0) throw DataError("app interval start must be positive");
            if (a.end_ms < a.start_ms) throw DataError("app interval ends before it starts");
            e.payload = std::move(a);
            break;
        }
    }
    return e;
}

json report_to_json(const SelfReport& r) {
    return {{"pid", r.participant}, {"t", r.timestamp_ms}, {"offset_min", r.local_offset_min},
            {"activity", r.raw_activity}};
}

SelfReport report_from_json(const json& j) {
    if (!j.is_object()) throw DataError("record is not a JSON object");
    SelfReport r;
    r.participant = get_string(j, "pid");
    if (r.participant.empty()) throw DataError("empty pid");
    r.timestamp_ms = get_int(j, "t");
    if (r.timestamp_ms <= 0) throw DataError("timestamp must be positive");
    const auto offset = get_int(j, "offset_min");
    if (offset < -kMaxLocalOffsetMin || offset > kMaxLocalOffsetMin)
        throw DataError("offset_min out of [-840, 840]");
    r.local_offset_min = static_cast<int>(offset);
    r.raw_activity = get_string(j, "activity");
    if (normalize_label(r.raw_activity).empty()) throw DataError("empty activity label");
    return r;
}

ParseResult<SensorEvent> parse_event_log(std::istream& in, const ParseOptions& opts) {
    return parse_lines<SensorEvent>(in, opts, [](const json& j) { return event_from_json(j); });
}

ParseResult<SelfReport> parse_self_reports(std::istream& in, const ParseOptions& opts) {
    auto result = parse_lines<SelfReport>(in, opts, [](const json& j) { return report_from_json(j); });
    std::set<std::pair<std::string, std::int64_t>> seen;
    std::vector<SelfReport> kept;
    kept.reserve(result.records.size());
    for (auto& r : result.records) {
        if (seen.emplace(r.participant, r.timestamp_ms).second)
            kept.push_back(std::move(r));
        else
            ++result.duplicates;
    }
    result.records = std::move(kept);
    return result;
}

std::vector<Participant> parse_participants(std::istream& in) {
    auto result = parse_lines<Participant>(in, ParseOptions{0.0}, [](const json& j) {
        Participant p{get_string(j, "pid"), CountryCode(get_string(j, "country"))};
        if (p.id.empty()) throw DataError("empty pid");
        return p;
    });
    return std::move(result.records);
}

void write_event_log(std::ostream& out, std::span<const SensorEvent> events) {
    for (const auto& e : events) out << event_to_json(e).dump() << '\n';
}

void write_self_reports(std::ostream& out, std::span<const SelfReport> reports) {
    for (const auto& r : reports) out << report_to_json(r).dump() << '\n';
}

void write_participants(std::ostream& out, std::span<const Participant> participants) {
    for (const auto& p : participants) out << json{{"pid", p.id}, {"country", p.country.str()}}.dump() << '\n';
}

// ---------------------------------------------------------------------------
// Corpus

SymbolId Corpus::intern(const std::string& s) {
    auto [it, inserted] = symbol_ids_.try_emplace(s, static_cast<SymbolId>(symbols_.size()));
    if (inserted) symbols_.push_back(s);
    return it->second;
}

std::size_t Corpus::participant_index(std::string_view id) const {
    auto it = participant_index_.find(std::string(id));
    if (it == participant_index_.end()) throw DataError("unknown participant '" + std::string(id) + "'");
    return it->second;
}

bool Corpus::has_participant(std::string_view id) const { return participant_index_.contains(std::string(id)); }

const Participant& Corpus::participant(std::string_view id) const { return participants_[participant_index(id)]; }

std::span<const SelfReport> Corpus::reports_of(std::string_view id) const {
    const auto [b, e] = report_ranges_[participant_index(id)];
    return std::span<const SelfReport>(reports_).subspan(b, e - b);
}

const ParticipantStreams& Corpus::streams(std::string_view id) const { return streams_[participant_index(id)]; }

std::vector<SensorEvent> Corpus::events() const {
    std::vector<SensorEvent> out;
    out.reserve(event_count_);
    for (std::size_t p = 0; p < participants_.size(); ++p) {
        const auto& pid = participants_[p].id;
        const auto& s = streams_[p];
        for (const auto& x : s.location) out.push_back({pid, x.t, LocationSample{x.lat, x.lon, x.alt}});
        for (std::size_t k = 0; k < 2; ++k)
            for (const auto& x : s.bluetooth[k])
                out.push_back({pid, x.t, BluetoothScan{static_cast<BluetoothKind>(k), symbols_[x.device], x.rssi}});
        for (const auto& x : s.wifi) out.push_back({pid, x.t, WifiScan{x.connected, symbols_[x.device], x.rssi}});
        for (std::size_t k = 0; k < 3; ++k)
            for (const auto& x : s.cellular[k])
                out.push_back({pid, x.t, CellularScan{static_cast<CellTech>(k), symbols_[x.device], x.rssi}});
        for (const auto& x : s.notifications)
            out.push_back({pid, x.t, NotificationEvent{x.action, symbols_[x.key], x.duplicate}});
        for (const auto& x : s.proximity) out.push_back({pid, x.t, ProximitySample{x.value}});
        for (const auto& x : s.activity) out.push_back({pid, x.t, SimpleActivitySample{x.label}});
        for (const auto& x : s.steps_counter) out.push_back({pid, x.t, StepsCounterSample{x.count}});
        for (auto t : s.steps_detected) out.push_back({pid, t, StepsDetectedEvent{}});
        for (const auto& x : s.screen) out.push_back({pid, x.t, ScreenEvent{x.action}});
        for (const auto& x : s.apps) out.push_back({pid, x.t, AppUsageInterval{symbols_[x.category], x.start, x.end}});
    }
    std::sort(out.begin(), out.end());
    return out;
}

CorpusStats Corpus::stats(const Taxonomy& tax) const {
    CorpusStats st;
    st.participants = participants_.size();
    st.events = event_count_;
    st.reports = reports_.size();
    st.duplicate_reports = duplicate_reports_;
    for (std::size_t p = 0; p < participants_.size(); ++p) {
        const auto& s = streams_[p];
        auto add = [&st](EventKind k, std::size_t n) {
            if (n) st.events_per_kind[std::string(to_string(k))] += n;
        };
        add(EventKind::Location, s.location.size());
        add(EventKind::Bluetooth, s.bluetooth[0].size() + s.bluetooth[1].size());
        add(EventKind::Wifi, s.wifi.size());
        add(EventKind::Cellular, s.cellular[0].size() + s.cellular[1].size() + s.cellular[2].size());
        add(EventKind::Notification, s.notifications.size());
        add(EventKind::Proximity, s.proximity.size());
        add(EventKind::SimpleActivity, s.activity.size());
        add(EventKind::StepsCounter, s.steps_counter.size());
        add(EventKind::StepsDetected, s.steps_detected.size());
        add(EventKind::Screen, s.screen.size());
        add(EventKind::App, s.apps.size());
        const auto [b, e] = report_ranges_[p];
        st.reports_per_country[participants_[p].country.str()] += e - b;
        for (std::size_t i = b; i < e; ++i) {
            const auto label = normalize_label(reports_[i].raw_activity);
            ++st.reports_per_label[label];
            if (tax.is_dropped(label))
                ++st.dropped_labels;
            else if (!tax.map(label))
                ++st.unknown_labels;
        }
    }
    return st;
}

Corpus build_corpus(std::vector<SensorEvent> events, std::vector<SelfReport> reports,
                    std::vector<Participant> participants) {
    Corpus c;

    std::sort(participants.begin(), participants.end());
    participants.erase(std::unique(participants.begin(), participants.end()), participants.end());
    for (std::size_t i = 1; i < participants.size(); ++i)
        if (participants[i].id == participants[i - 1].id)
            throw DataError("participant '" + participants[i].id + "' listed with two countries");
    c.participants_ = std::move(participants);
    for (std::size_t i = 0; i < c.participants_.size(); ++i) c.participant_index_.emplace(c.participants_[i].id, i);
    c.streams_.resize(c.participants_.size());

    if (!std::is_sorted(events.begin(), events.end())) std::sort(events.begin(), events.end());
    c.event_count_ = events.size();
    for (const auto& e : events) {
        auto it = c.participant_index_.find(e.participant);
        if (it == c.participant_index_.end())
            throw DataError("event references unknown participant '" + e.participant + "'");
        auto& s = c.streams_[it->second];
        const std::int64_t t = e.timestamp_ms;
        std::visit(
            [&](const auto& p) {
                using T = std::decay_t<decltype(p)>;
                if constexpr (std::is_same_v<T, LocationSample>) {
                    s.location.push_back({t, p.lat, p.lon, p.alt});
                } else if constexpr (std::is_same_v<T, BluetoothScan>) {
                    s.bluetooth[static_cast<std::size_t>(p.kind)].push_back({t, c.intern(p.device_hash), p.rssi, false});
                } else if constexpr (std::is_same_v<T, WifiScan>) {
                    s.wifi.push_back({t, c.intern(p.device_hash), p.rssi, p.connected});
                } else if constexpr (std::is_same_v<T, CellularScan>) {
                    s.cellular[static_cast<std::size_t>(p.tech)].push_back({t, c.intern(p.cell_hash), p.signal, false});
                } else if constexpr (std::is_same_v<T, NotificationEvent>) {
                    s.notifications.push_back({t, p.action, c.intern(p.key_hash), p.is_duplicate});
                } else if constexpr (std::is_same_v<T, ProximitySample>) {
                    s.proximity.push_back({t, p.value});
                } else if constexpr (std::is_same_v<T, SimpleActivitySample>) {
                    s.activity.push_back({t, p.label});
                } else if constexpr (std::is_same_v<T, StepsCounterSample>) {
                    s.steps_counter.push_back({t, p.count});
                } else if constexpr (std::is_same_v<T, StepsDetectedEvent>) {
                    s.steps_detected.push_back(t);
                } else if constexpr (std::is_same_v<T, ScreenEvent>) {
                    s.screen.push_back({t, p.action});
                } else if constexpr (std::is_same_v<T, AppUsageInterval>) {
                    s.apps.push_back({t, p.start_ms, p.end_ms, c.intern(p.category)});
                    s.longest_app_span = std::max(s.longest_app_span, p.end_ms - p.start_ms);
                }
            },
            e.payload);
    }
    for (auto& s : c.streams_)
        std::stable_sort(s.apps.begin(), s.apps.end(), [](const AppSpan& a, const AppSpan& b) {
            return std::tie(a.start, a.end) < std::tie(b.start, b.end);
        });

    for (const auto& r : reports)
        if (!c.participant_index_.contains(r.participant))
            throw DataError("report references unknown participant '" + r.participant + "'");
    std::sort(reports.begin(), reports.end());
    std::vector<SelfReport> kept;
    kept.reserve(reports.size());
    for (auto& r : reports) {
        if (!kept.empty() && kept.back().participant == r.participant && kept.back().timestamp_ms == r.timestamp_ms) {
            ++c.duplicate_reports_;
            continue;
        }
        kept.push_back(std::move(r));
    }
    c.reports_ = std::move(kept);
    c.report_ranges_.assign(c.participants_.size(), {0, 0});
    for (std::size_t i = 0; i < c.reports_.size();) {
        const std::size_t p = c.participant_index_.at(c.reports_[i].participant);
        std::size_t j = i;
        while (j < c.reports_.size() && c.reports_[j].participant == c.reports_[i].participant) ++j;
        c.report_ranges_[p] = {i, j};
        i = j;
    }
    return c;
}

// ---------------------------------------------------------------------------
// Corpus directories

namespace {

std::optional<std::filesystem::path> find_log(const std::filesystem::path& dir, const std::string& stem) {
    for (const char* ext : {".jsonl", ".jsonl.gz"}) {
        auto p = dir / (stem + ext);
        if (std::filesystem::exists(p)) return p;
    }
    return std::nullopt;
}

void read_country_dir(const std::filesystem::path& dir, const ParseOptions& opts, CorpusFiles& out,
                      std::optional<CountryCode> implied_country) {
    std::set<std::string> pids;
    if (auto f = find_log(dir, "events")) {
        std::istringstream in(read_text_file(*f));
        auto res = parse_event_log(in, opts);
        out.malformed += res.malformed.size();
        for (auto& e : res.records) {
            pids.insert(e.participant);
            out.events.push_back(std::move(e));
        }
    }
    if (auto f = find_log(dir, "reports")) {
        std::istringstream in(read_text_file(*f));
        auto res = parse_self_reports(in, opts);
        out.malformed += res.malformed.size();
        out.duplicates += res.duplicates;
        for (auto& r : res.records) {
            pids.insert(r.participant);
            out.reports.push_back(std::move(r));
        }
    }
    if (auto f = find_log(dir, "participants")) {
        std::istringstream in(read_text_file(*f));
        for (auto& p : parse_participants(in)) out.participants.push_back(std::move(p));
    } else if (implied_country) {
        for (const auto& pid : pids) out.participants.push_back({pid, *implied_country});
    } else {
        throw DataError("no participants file in " + dir.string());
    }
}

}  // namespace

CorpusFiles read_corpus_dir(const std::filesystem::path& dir, const ParseOptions& opts) {
    if (!std::filesystem::is_directory(dir)) throw DataError("corpus directory " + dir.string() + " not found");
    CorpusFiles out;
    std::vector<std::filesystem::path> subdirs;
    for (const auto& entry : std::filesystem::directory_iterator(dir))
        if (entry.is_directory()) subdirs.push_back(entry.path());
    std::sort(subdirs.begin(), subdirs.end());
    if (find_log(dir, "reports") || find_log(dir, "events")) read_country_dir(dir, opts, out, std::nullopt);
    for (const auto& sub : subdirs) read_country_dir(sub, opts, out, CountryCode(sub.filename().string()));
    return out;
}

void write_corpus_dir(const std::filesystem::path& dir, const Corpus& corpus, bool gzip) {
    std::map<std::string, std::vector<Participant>> by_country;
    for (const auto& p : corpus.participants()) by_country[p.country.str()].push_back(p);
    const auto all_events = corpus.events();
    const std::string ext = gzip ? ".jsonl.gz" : ".jsonl";
    for (const auto& [country, members] : by_country) {
        std::set<std::string> ids;
        for (const auto& p : members) ids.insert(p.id);
        std::ostringstream ps, es, rs;
        write_participants(ps, members);
        for (const auto& e : all_events)
            if (ids.contains(e.participant)) es << event_to_json(e).dump() << '\n';
        for (const auto& p : members) write_self_reports(rs, corpus.reports_of(p.id));
        const auto sub = dir / country;
        write_text_file(sub / ("participants" + ext), ps.str());
        write_text_file(sub / ("events" + ext), es.str());
        write_text_file(sub / ("reports" + ext), rs.str());
    }
}

}  // namespace sensefold
