#include "sensefold/synthgen.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <set>

#include "sensefold/util.hpp"

namespace sensefold {

using nlohmann::json;

std::string_view to_string(SynthSensor s) {
    static constexpr std::array<std::string_view, kNumSynthSensors> names = {
        "location", "bluetooth_le", "bluetooth_classic", "wifi",     "cellular_gsm",
        "cellular_wcdma", "cellular_lte", "proximity", "activity", "steps_counter"};
    return names[static_cast<std::size_t>(s)];
}

namespace {

constexpr double kPi = 3.14159265358979323846;

using A = ActivityClass;

constexpr std::size_t ix(ActivityClass a) { return index_of(a); }

double circular_diff(double a, double b) {
    double d = std::fmod(a - b, 24.0);
    if (d > 12) d -= 24;
    if (d < -12) d += 24;
    return d;
}

// Scalar emission fields, in serialization order.
struct ScalarField {
    const char* name;
    double EmissionParams::*member;
    double lo, hi;  // clamp range after scaling
};

constexpr double kInf = 1e300;

const std::array<ScalarField, 16>& scalar_fields() {
    static const std::array<ScalarField, 16> fields = {{
        {"steps_per_min", &EmissionParams::steps_per_min, 0, kInf},
        {"screen_episodes_per_min", &EmissionParams::screen_episodes_per_min, 0, kInf},
        {"screen_episode_min", &EmissionParams::screen_episode_min, 0.05, 20},
        {"touches_per_min", &EmissionParams::touches_per_min, 0, kInf},
        {"notifications_per_min", &EmissionParams::notifications_per_min, 0, kInf},
        {"notification_removal", &EmissionParams::notification_removal, 0, 1},
        {"proximity_near", &EmissionParams::proximity_near, 0, 1},
        {"wifi_devices", &EmissionParams::wifi_devices, 0, kInf},
        {"wifi_rssi", &EmissionParams::wifi_rssi, -100, -25},
        {"wifi_connected", &EmissionParams::wifi_connected, 0, 1},
        {"bt_le_devices", &EmissionParams::bt_le_devices, 0, kInf},
        {"bt_classic_devices", &EmissionParams::bt_classic_devices, 0, kInf},
        {"bt_rssi", &EmissionParams::bt_rssi, -100, -25},
        {"cell_towers", &EmissionParams::cell_towers, 1, kInf},
        {"cell_signal", &EmissionParams::cell_signal, -120, -50},
        {"speed_kmh", &EmissionParams::speed_kmh, 0, kInf},
    }};
    return fields;
}

void clamp_fields(EmissionParams& e) {
    for (const auto& f : scalar_fields()) e.*f.member = std::clamp(e.*f.member, f.lo, f.hi);
}

EmissionParams emission(double steps, double eps, double ep_min, double touches, double notif, double removal,
                        double near, double wifi_n, double wifi_rssi, double wifi_conn, double ble_n, double btc_n,
                        double bt_rssi, double towers, double cell, double speed,
                        std::array<double, kNumSimpleActivities> simple,
                        std::vector<std::pair<std::string, double>> apps) {
    EmissionParams e;
    e.steps_per_min = steps;
    e.screen_episodes_per_min = eps;
    e.screen_episode_min = ep_min;
    e.touches_per_min = touches;
    e.notifications_per_min = notif;
    e.notification_removal = removal;
    e.proximity_near = near;
    e.wifi_devices = wifi_n;
    e.wifi_rssi = wifi_rssi;
    e.wifi_connected = wifi_conn;
    e.bt_le_devices = ble_n;
    e.bt_classic_devices = btc_n;
    e.bt_rssi = bt_rssi;
    e.cell_towers = towers;
    e.cell_signal = cell;
    e.speed_kmh = speed;
    e.simple = simple;
    e.apps = std::move(apps);
    return e;
}

CountryProfile make_base_profile() {
    CountryProfile p;
    auto curve = [&](A a, std::vector<Bump> bumps, double weekend) {
        p.curves[ix(a)] = {std::move(bumps), 0.0, weekend};
    };
    curve(A::Sleeping, {{3.5, 1.25, 12.0}}, 1.1);
    curve(A::Studying, {{10.5, 0.75, 1.5}, {16.0, 1, 2.0}, {21.0, 0.75, 1.2}}, 0.6);
    curve(A::Eating, {{8.0, 0.35, 1.2}, {13.0, 0.4, 2.5}, {20.0, 0.4, 2.5}}, 1.0);
    curve(A::WatchingSomething, {{21.5, 0.75, 2.0}, {15.0, 1, 0.4}}, 1.4);
    curve(A::OnlineCommSocialMedia, {{23.0, 0.75, 1.2}, {14.0, 1.5, 0.6}}, 1.1);
    curve(A::AttendingClass, {{9.5, 0.6, 2.5}, {14.5, 0.6, 2.0}}, 0.1);
    curve(A::Working, {{11.0, 1, 1.0}, {16.5, 0.75, 1.0}}, 0.4);
    curve(A::Resting, {{15.0, 0.75, 0.8}, {22.0, 0.75, 0.8}}, 1.3);
    curve(A::Reading, {{18.5, 1, 0.6}, {23.0, 0.5, 0.4}}, 1.2);
    curve(A::Walking, {{8.5, 0.4, 0.8}, {12.5, 0.4, 0.7}, {18.0, 0.5, 0.9}}, 1.0);
    curve(A::Sport, {{18.5, 0.6, 0.9}, {7.0, 0.4, 0.3}}, 1.3);
    curve(A::Shopping, {{17.5, 0.75, 0.6}, {11.0, 0.5, 0.3}}, 2.0);

    // simple labels: still, in_vehicle, on_bicycle, on_foot, running, tilting, walking, other
    auto& em = p.emissions;
    em[ix(A::Sleeping)] = emission(0.127, 0.0156, 0.816, 5.15, 0.0763, 0.08, 0.87, 3.56, -50.6, 0.97, 1.24, 0.328, -64.2, 1.08, -81.7, 0.0221,
        {0.81, 0, 0, 0.0004, 0, 0.0025, 0.0001, 0.0004},
        {{"social", 1}, {"communication", 1}, {"tools", 1}, {"music", 0.25}});
    em[ix(A::Studying)] = emission(0.99, 0.14, 2.27, 15.8, 0.305, 0.33, 0.26, 6.99, -58.6, 0.87, 2.78, 0.912, -72.2, 1.92, -87.7, 0.199,
        {0.64, 0, 0, 0.0025, 0, 0.0064, 0.0016, 0.0009},
        {{"education", 4}, {"productivity", 2.25}, {"books & reference", 0.49}, {"communication", 1}, {"social", 1}});
    em[ix(A::Eating)] = emission(2.03, 0.191, 3.26, 26.1, 0.415, 0.33, 0.35, 5.13, -62.6, 0.69, 3.78, 1.31, -68.2, 1.92, -85.7, 0.354,
        {0.562, 0, 0, 0.0064, 0, 0.01, 0.0025, 0.0004},
        {{"food & drink", 2.25}, {"social", 2.25}, {"video players & editors", 1}, {"communication", 1}});
    em[ix(A::WatchingSomething)] = emission(0.507, 0.0623, 13, 5.15, 0.212, 0.23, 0.18, 5.13, -54.6, 0.93, 1.93, 2.05, -62.2, 1.56, -83.7, 0.0885,
        {0.722, 0, 0, 0.0009, 0, 0.0064, 0.0004, 0.0004},
        {{"video players & editors", 6.25}, {"entertainment", 4}, {"social", 1}});
    em[ix(A::OnlineCommSocialMedia)] = emission(1.14, 0.471, 5.8, 63.1, 1.22, 0.64, 0.18, 5.13, -58.6, 0.87, 2.78, 0.912, -70.2, 1.92, -85.7, 0.199,
        {0.64, 0, 0, 0.0025, 0, 0.01, 0.0009, 0.0004},
        {{"communication", 6.25}, {"social", 6.25}, {"dating", 0.09}});
    em[ix(A::AttendingClass)] = emission(1.14, 0.0623, 1.45, 11.6, 0.212, 0.23, 0.45, 17.3, -74.6, 0.48, 7.72, 0.912, -80.2, 3.01, -93.7, 0.354,
        {0.672, 0, 0, 0.0036, 0, 0.0036, 0.0016, 0.0004},
        {{"education", 4}, {"productivity", 1}, {"communication", 1}, {"social", 0.64}});
    em[ix(A::Working)] = emission(2.03, 0.14, 3.26, 20.6, 0.542, 0.44, 0.35, 11.6, -68.6, 0.79, 4.94, 1.54, -74.2, 2.55, -89.7, 0.553,
        {0.608, 0.0004, 0, 0.0064, 0, 0.0036, 0.0016, 0.0004},
        {{"business", 4}, {"productivity", 4}, {"communication", 2.25}, {"tools", 1}});
    em[ix(A::Resting)] = emission(0.792, 0.14, 5.8, 15.8, 0.305, 0.33, 0.45, 3.56, -54.6, 0.93, 1.93, 0.912, -66.2, 1.56, -83.7, 0.0885,
        {0.722, 0, 0, 0.0016, 0, 0.0049, 0.0004, 0.0004},
        {{"social", 2.25}, {"entertainment", 1}, {"music", 1}, {"casual", 1}, {"puzzle", 0.64}});
    em[ix(A::Reading)] = emission(0.507, 0.0477, 9.06, 5.15, 0.136, 0.23, 0.35, 3.56, -56.6, 0.87, 1.24, 0.584, -68.2, 1.56, -83.7, 0.0885,
        {0.722, 0, 0, 0.0009, 0, 0.0081, 0.0001, 0.0004},
        {{"books & reference", 4}, {"news & magazines", 4}, {"social", 0.64}});
    em[ix(A::Walking)] = emission(19.8, 0.191, 0.816, 11.6, 0.415, 0.23, 0.73, 11.6, -84.6, 0.11, 4.94, 1.31, -82.2, 3.25, -95.7, 19.9,
        {0.09, 0.0009, 0.0001, 0.0625, 0.0004, 0.0025, 0.102, 0.0004},
        {{"maps & navigation", 2.25}, {"music", 4}, {"communication", 1}, {"social", 0.64}});
    em[ix(A::Sport)] = emission(12.7, 0.0623, 1.45, 6.52, 0.212, 0.14, 0.65, 6.99, -78.6, 0.22, 3.78, 2.33, -70.2, 2.55, -93.7, 27.1,
        {0.122, 0, 0.0025, 0.0225, 0.04, 0.0025, 0.0324, 0.0004},
        {{"health & fitness", 6.25}, {"music", 4}, {"sports", 1}});
    em[ix(A::Shopping)] = emission(9.7, 0.164, 1.45, 13.6, 0.415, 0.23, 0.55, 20.5, -82.6, 0.07, 11.1, 1.79, -82.2, 3.51, -95.7, 3.19,
        {0.203, 0.0025, 0, 0.04, 0, 0.0025, 0.0529, 0.0004},
        {{"shopping", 6.25}, {"finance", 0.64}, {"maps & navigation", 0.64}, {"social", 0.64}});

    for (auto& row : p.mixing) row.fill(0.2);
    auto mix = [&](A a, std::vector<std::pair<A, double>> others) {
        p.mixing[ix(a)][ix(a)] = 2.0;
        for (auto [b, w] : others) p.mixing[ix(a)][ix(b)] = w;
    };
    mix(A::Sleeping, {{A::Resting, 0.6}});
    mix(A::Studying, {{A::Reading, 1}, {A::AttendingClass, 1}, {A::Working, 0.6}});
    mix(A::Eating, {{A::OnlineCommSocialMedia, 0.8}, {A::Resting, 0.6}, {A::WatchingSomething, 0.6}});
    mix(A::WatchingSomething, {{A::Resting, 1}, {A::OnlineCommSocialMedia, 0.8}});
    mix(A::OnlineCommSocialMedia, {{A::WatchingSomething, 0.8}, {A::Resting, 0.8}, {A::Eating, 0.4}});
    mix(A::AttendingClass, {{A::Studying, 1.2}, {A::Working, 0.6}});
    mix(A::Working, {{A::Studying, 1}, {A::AttendingClass, 0.6}, {A::OnlineCommSocialMedia, 0.6}});
    mix(A::Resting, {{A::WatchingSomething, 1}, {A::OnlineCommSocialMedia, 1}, {A::Sleeping, 0.6}, {A::Reading, 0.6}});
    mix(A::Reading, {{A::Studying, 1}, {A::Resting, 1}});
    mix(A::Walking, {{A::Shopping, 1}, {A::Sport, 0.8}});
    mix(A::Sport, {{A::Walking, 1.2}});
    mix(A::Shopping, {{A::Walking, 1.2}});

    p.presence = {0.8, 0.6, 0.35, 0.75, 0.08, 0.4, 0.85, 0.7, 0.9, 0.7};
    return p;
}

json emission_to_json(const EmissionParams& e) {
    json j;
    for (const auto& f : scalar_fields()) j[f.name] = e.*f.member;
    j["simple"] = e.simple;
    json apps = json::array();
    for (const auto& [c, w] : e.apps) apps.push_back({c, w});
    j["apps"] = apps;
    return j;
}

EmissionParams emission_from_json(const json& j) {
    EmissionParams e;
    for (const auto& f : scalar_fields()) e.*f.member = j.at(f.name).get<double>();
    e.simple = j.at("simple").get<std::array<double, kNumSimpleActivities>>();
    for (const auto& a : j.at("apps")) e.apps.emplace_back(a.at(0).get<std::string>(), a.at(1).get<double>());
    return e;
}

}  // namespace

ClassDistribution CountryProfile::hour_distribution(double hour, bool weekend, double offset_h) const {
    ClassDistribution d{};
    double total = 0;
    for (std::size_t a = 0; a < kNumActivities; ++a) {
        const auto& c = curves[a];
        double v = baseline;
        for (const auto& b : c.bumps) {
            const double x = circular_diff(hour - offset_h - c.phase_h, b.center_h);
            v += b.height * std::exp(-x * x / (2 * b.width_h * b.width_h));
        }
        if (weekend) v *= c.weekend_factor;
        d[a] = v;
        total += v;
    }
    for (auto& v : d) v /= total;
    return d;
}

json CountryProfile::to_json() const {
    json curves_j = json::object(), em_j = json::object(), mix_j = json::object(), pres_j = json::object();
    for (std::size_t a = 0; a < kNumActivities; ++a) {
        const auto name = std::string(sensefold::to_string(all_activities()[a]));
        json bumps = json::array();
        for (const auto& b : curves[a].bumps) bumps.push_back({b.center_h, b.width_h, b.height});
        curves_j[name] = {{"bumps", bumps}, {"phase_h", curves[a].phase_h}, {"weekend_factor", curves[a].weekend_factor}};
        em_j[name] = emission_to_json(emissions[a]);
        mix_j[name] = mixing[a];
    }
    for (std::size_t s = 0; s < kNumSynthSensors; ++s)
        pres_j[std::string(sensefold::to_string(static_cast<SynthSensor>(s)))] = presence[s];
    return {{"baseline", baseline}, {"curves", curves_j}, {"emissions", em_j}, {"mixing", mix_j}, {"presence", pres_j}};
}

CountryProfile CountryProfile::from_json(const json& j) {
    CountryProfile p;
    try {
        p.baseline = j.at("baseline").get<double>();
        for (std::size_t a = 0; a < kNumActivities; ++a) {
            const auto name = std::string(sensefold::to_string(all_activities()[a]));
            const auto& c = j.at("curves").at(name);
            for (const auto& b : c.at("bumps"))
                p.curves[a].bumps.push_back({b.at(0).get<double>(), b.at(1).get<double>(), b.at(2).get<double>()});
            p.curves[a].phase_h = c.value("phase_h", 0.0);
            p.curves[a].weekend_factor = c.value("weekend_factor", 1.0);
            p.emissions[a] = emission_from_json(j.at("emissions").at(name));
            p.mixing[a] = j.at("mixing").at(name).get<std::array<double, kNumActivities>>();
        }
        for (std::size_t s = 0; s < kNumSynthSensors; ++s)
            p.presence[s] = j.at("presence").at(std::string(sensefold::to_string(static_cast<SynthSensor>(s)))).get<double>();
    } catch (const json::exception& e) {
        throw ConfigError(std::string("invalid country profile: ") + e.what());
    }
    if (!(p.baseline >= 0)) throw ConfigError("profile baseline must be non-negative");
    for (const auto& c : p.curves)
        for (const auto& b : c.bumps)
            if (!(b.height >= 0) || !(b.width_h > 0)) throw ConfigError("profile bumps need height >= 0 and width > 0");
    for (double pr : p.presence)
        if (!(pr >= 0 && pr <= 1)) throw ConfigError("sensor presence must lie in [0, 1]");
    for (const auto& row : p.mixing) {
        double total = 0;
        for (double w : row) {
            if (!(w >= 0) || !std::isfinite(w)) throw ConfigError("mixing weights must be finite and >= 0");
            total += w;
        }
        if (!(total > 0)) throw ConfigError("every activity needs a positive mixing weight");
    }
    return p;
}

const CountryProfile& CountryProfile::base() {
    static const CountryProfile p = make_base_profile();
    return p;
}

CountryProfile shift_profile(const CountryProfile& profile, double delta, std::uint64_t seed) {
    if (!(delta >= 0) || !std::isfinite(delta)) throw ConfigError("shift delta must be finite and >= 0");
    CountryProfile out = profile;
    Rng rng(seed);
    std::uniform_real_distribution<double> sym(-1.0, 1.0), mag(0.75, 1.0);
    std::bernoulli_distribution coin(0.5);
    // one offset for the whole routine; meals only ever move later
    const double v = (coin(rng) ? 1.0 : -1.0) * mag(rng);
    for (std::size_t a = 0; a < kNumActivities; ++a)
        out.curves[a].phase_h += delta * 2.0 * (all_activities()[a] == ActivityClass::Eating ? std::abs(v) : v);
    const double base = 1.0 + delta;
    for (auto& row : out.mixing)
        for (auto& w : row) w *= std::pow(base, sym(rng));
    return out;
}

double hourly_kl_divergence(const CountryProfile& p, const CountryProfile& q) {
    double acc = 0;
    for (int h = 0; h < 24; ++h) {
        const auto a = p.hour_distribution(h, false), b = q.hour_distribution(h, false);
        for (std::size_t c = 0; c < kNumActivities; ++c)
            if (a[c] > 0) acc += a[c] * std::log(a[c] / b[c]);
    }
    return acc / 24.0;
}

// ---------------------------------------------------------------------------
// Config

void GeneratorConfig::validate() const {
    if (!(delta >= 0) || !std::isfinite(delta)) throw ConfigError("delta must be finite and >= 0");
    if (!(idiosyncrasy >= 0) || !std::isfinite(idiosyncrasy)) throw ConfigError("idiosyncrasy must be finite and >= 0");
    if (!(dropped_label_rate >= 0 && dropped_label_rate < 1)) throw ConfigError("dropped_label_rate must lie in [0, 1)");
    if (start_ms <= 0) throw ConfigError("start_ms must be positive");
    if (countries.empty()) throw ConfigError("generator config lists no countries");
    std::set<std::string> names{"base"};
    for (const auto& p : profiles) {
        if (!names.insert(p.name).second) throw ConfigError("duplicate profile name '" + p.name + "'");
        if (!(p.scale >= 0) || !std::isfinite(p.scale)) throw ConfigError("profile scale must be finite and >= 0");
    }
    for (const auto& p : profiles)
        if (!names.count(p.parent)) throw ConfigError("profile '" + p.name + "' has unknown parent '" + p.parent + "'");
    std::set<CountryCode> codes;
    for (const auto& c : countries) {
        if (!codes.insert(c.code).second) throw ConfigError("duplicate country " + c.code.str());
        if (!names.count(c.profile)) throw ConfigError("country " + c.code.str() + " uses unknown profile '" + c.profile + "'");
        if (c.participants == 0 || c.days == 0 || c.reports_per_day == 0)
            throw ConfigError("country " + c.code.str() + ": participants, days and reports_per_day must be positive");
        if (c.reports_per_day > 24) throw ConfigError("country " + c.code.str() + ": at most 24 reports per day");
        if (!(c.scale >= 0) || !std::isfinite(c.scale)) throw ConfigError("country scale must be finite and >= 0");
        if (std::abs(c.utc_offset_min) > kMaxLocalOffsetMin) throw ConfigError("utc_offset_min out of range");
    }
    for (const auto& c : countries) (void)country_profile(c);  // detects cycles
}

CountryProfile GeneratorConfig::country_profile(const CountrySpec& c) const {
    std::vector<const ProfileSpec*> chain;
    std::string name = c.profile;
    while (name != "base") {
        auto it = std::find_if(profiles.begin(), profiles.end(), [&](const ProfileSpec& p) { return p.name == name; });
        if (it == profiles.end()) throw ConfigError("unknown profile '" + name + "'");
        if (std::find(chain.begin(), chain.end(), &*it) != chain.end())
            throw ConfigError("profile chain through '" + name + "' is cyclic");
        chain.push_back(&*it);
        name = it->parent;
    }
    CountryProfile p = base_profile ? *base_profile : CountryProfile::base();
    for (auto it = chain.rbegin(); it != chain.rend(); ++it)
        p = shift_profile(p, delta * (*it)->scale, derive_seed(seed, fnv1a64("profile:" + (*it)->name)));
    return shift_profile(p, delta * c.scale, derive_seed(seed, fnv1a64("country:" + c.code.str())));
}

json GeneratorConfig::to_json() const {
    json profs = json::array(), cs = json::array();
    for (const auto& p : profiles) profs.push_back({{"name", p.name}, {"parent", p.parent}, {"scale", p.scale}});
    for (const auto& c : countries)
        cs.push_back({{"code", c.code.str()},
                      {"profile", c.profile},
                      {"scale", c.scale},
                      {"participants", c.participants},
                      {"days", c.days},
                      {"reports_per_day", c.reports_per_day},
                      {"utc_offset_min", c.utc_offset_min}});
    json j{{"seed", seed},
           {"delta", delta},
           {"idiosyncrasy", idiosyncrasy},
           {"start_ms", start_ms},
           {"dropped_label_rate", dropped_label_rate},
           {"profiles", profs},
           {"countries", cs}};
    if (base_profile) j["base_profile"] = base_profile->to_json();
    return j;
}

GeneratorConfig GeneratorConfig::from_json(const json& j) {
    GeneratorConfig cfg;
    try {
        cfg.seed = j.value("seed", cfg.seed);
        cfg.delta = j.value("delta", cfg.delta);
        cfg.idiosyncrasy = j.value("idiosyncrasy", cfg.idiosyncrasy);
        cfg.start_ms = j.value("start_ms", cfg.start_ms);
        cfg.dropped_label_rate = j.value("dropped_label_rate", cfg.dropped_label_rate);
        if (j.contains("profiles"))
            for (const auto& p : j.at("profiles"))
                cfg.profiles.push_back({p.at("name").get<std::string>(), p.value("parent", std::string("base")),
                                        p.value("scale", 1.0)});
        for (const auto& c : j.at("countries")) {
            CountrySpec s;
            s.code = CountryCode(c.at("code").get<std::string>());
            s.profile = c.value("profile", s.profile);
            s.scale = c.value("scale", s.scale);
            s.participants = c.value("participants", s.participants);
            s.days = c.value("days", s.days);
            s.reports_per_day = c.value("reports_per_day", s.reports_per_day);
            s.utc_offset_min = c.value("utc_offset_min", s.utc_offset_min);
            cfg.countries.push_back(std::move(s));
        }
        if (j.contains("base_profile")) cfg.base_profile = CountryProfile::from_json(j.at("base_profile"));
    } catch (const json::exception& e) {
        throw ConfigError(std::string("invalid generator config: ") + e.what());
    }
    cfg.validate();
    return cfg;
}

GeneratorConfig GeneratorConfig::load(const std::filesystem::path& path) {
    if (!std::filesystem::exists(path)) throw ConfigError("generator config not found: " + path.string());
    try {
        return from_json(json::parse(read_text_file(path)));
    } catch (const json::parse_error& e) {
        throw ConfigError("cannot parse " + path.string() + ": " + e.what());
    }
}

GeneratorConfig GeneratorConfig::five_countries() {
    GeneratorConfig cfg;
    cfg.seed = 1;
    cfg.delta = 1.0;
    cfg.idiosyncrasy = 1.0;
    cfg.profiles = {{"north", "base", 6.0}, {"south", "north", 6.0}};
    const std::array<std::pair<const char*, const char*>, 5> countries = {
        {{"SYN_A", "north"}, {"SYN_B", "north"}, {"SYN_C", "north"}, {"SYN_D", "south"}, {"SYN_E", "south"}}};
    const std::array<int, 5> offsets = {60, 60, 120, 480, 420};
    for (std::size_t i = 0; i < countries.size(); ++i) {
        CountrySpec c;
        c.code = CountryCode(countries[i].first);
        c.profile = countries[i].second;
        c.utc_offset_min = offsets[i];
        cfg.countries.push_back(std::move(c));
    }
    return cfg;
}

// ---------------------------------------------------------------------------
// Generation

namespace {

const std::array<std::vector<std::string>, kNumActivities>& raw_labels() {
    static const std::array<std::vector<std::string>, kNumActivities> labels = {{
        {"sleeping"},
        {"studying"},
        {"eating", "cooking"},
        {"watching something"},
        {"social media", "internet chatting"},
        {"attending class"},
        {"working"},
        {"resting"},
        {"reading"},
        {"walking"},
        {"sport"},
        {"shopping"},
    }};
    return labels;
}

const std::array<std::string, 4> kDroppedLabels = {"personal care", "household care", "other", "nothing special"};

struct Traits {
    double phase_h = 0;
    std::array<double, kNumActivities> activity_phase{};
    std::array<EmissionParams, kNumActivities> emissions;
    std::array<std::array<double, kNumActivities>, kNumActivities> mixing{};
    std::array<double, kNumSynthSensors> presence{};
    double home_lat = 0, home_lon = 0, home_alt = 0;
    double wifi_offset = 0, bt_offset = 0, cell_offset = 0;
    std::int64_t steps_counter = 0;
};

Traits make_traits(const CountryProfile& profile, double sigma, Rng& rng) {
    std::normal_distribution<double> z(0.0, 1.0);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    Traits t;
    t.phase_h = sigma * z(rng);
    for (auto& p : t.activity_phase) p = sigma * 0.5 * z(rng);
    t.emissions = profile.emissions;
    for (auto& e : t.emissions) {
        for (const auto& f : scalar_fields()) {
            const double g = z(rng);
            e.*f.member *= std::exp(sigma * 0.6 * g);
        }
        for (auto& s : e.simple) s *= std::exp(sigma * 0.6 * z(rng));
        for (auto& [cat, w] : e.apps) w *= std::exp(sigma * 0.8 * z(rng));
        clamp_fields(e);
    }
    t.mixing = profile.mixing;
    for (auto& row : t.mixing)
        for (auto& w : row) w *= std::exp(sigma * 1.2 * z(rng));
    for (std::size_t s = 0; s < kNumSynthSensors; ++s)
        t.presence[s] = std::clamp(profile.presence[s] + sigma * 0.05 * z(rng), 0.0, 1.0);
    t.home_lat = 45.0 + 0.05 * z(rng);
    t.home_lon = 10.0 + 0.05 * z(rng);
    t.home_alt = 150.0 + sigma * 120.0 * z(rng);
    t.wifi_offset = sigma * 6.0 * z(rng);
    t.bt_offset = sigma * 5.0 * z(rng);
    t.cell_offset = sigma * 6.0 * z(rng);
    t.steps_counter = 1000 + static_cast<std::int64_t>(u(rng) * 4000);
    return t;
}

template <typename W>
std::size_t pick_weighted(const W& weights, double total, Rng& rng) {
    std::uniform_real_distribution<double> u(0.0, total);
    double x = u(rng), acc = 0;
    std::size_t i = 0;
    for (; i + 1 < weights.size(); ++i) {
        acc += weights[i];
        if (x < acc) break;
    }
    return i;
}

std::size_t sample_class(const ClassDistribution& d, Rng& rng) { return pick_weighted(d, 1.0, rng); }

class WindowEmitter {
public:
    WindowEmitter(const std::string& pid, Traits& traits, Rng& rng, std::vector<SensorEvent>& out)
        : pid_(pid), tr_(traits), rng_(rng), out_(out) {}

    void emit(std::int64_t t, const EmissionParams& e) {
        w0_ = t - kHalfSpan;
        w1_ = t + kHalfSpan;
        const bool loc = present(SynthSensor::Location), ble = present(SynthSensor::BluetoothLE),
                   btc = present(SynthSensor::BluetoothClassic), wifi = present(SynthSensor::Wifi),
                   gsm = present(SynthSensor::CellGSM), wcdma = present(SynthSensor::CellWCDMA),
                   lte = present(SynthSensor::CellLTE), prox = present(SynthSensor::Proximity),
                   act = present(SynthSensor::Activity), counter = present(SynthSensor::StepsCounter);
        if (loc) location(e);
        if (ble) radio_bt(BluetoothKind::LE, e.bt_le_devices, e);
        if (btc) radio_bt(BluetoothKind::Classic, e.bt_classic_devices, e);
        if (wifi) radio_wifi(e);
        if (gsm) cellular(CellTech::GSM, e, 4.0);
        if (wcdma) cellular(CellTech::WCDMA, e, 2.0);
        if (lte) cellular(CellTech::LTE, e, 0.0);
        notifications(e);
        if (prox) proximity(e);
        if (act) activity(e);
        steps(e, counter);
        screen(e);
    }

private:
    static constexpr std::int64_t kHalfSpan = 12 * kMsPerMinute + 30'000;
    static constexpr double kSpanMin = 25.0;

    bool present(SynthSensor s) { return unit() < tr_.presence[static_cast<std::size_t>(s)]; }
    double unit() { return std::uniform_real_distribution<double>(0.0, 1.0)(rng_); }
    double normal(double m, double s) { return std::normal_distribution<double>(m, s)(rng_); }
    std::size_t poisson(double mean) {
        if (mean <= 0) return 0;
        return static_cast<std::size_t>(std::poisson_distribution<long>(mean)(rng_));
    }
    std::int64_t uniform_time(std::int64_t a, std::int64_t b) {
        return a + static_cast<std::int64_t>(unit() * static_cast<double>(b - a));
    }
    void push(std::int64_t t, EventPayload p) { out_.push_back(SensorEvent{pid_, t, std::move(p)}); }

    void location(const EmissionParams& e) {
        double lat = tr_.home_lat + normal(0, 0.002), lon = tr_.home_lon + normal(0, 0.002);
        const double heading = unit() * 2 * kPi;
        constexpr int kSamples = 10;
        const double step_km = e.speed_kmh * (kSpanMin / kSamples) / 60.0;
        for (int i = 0; i < kSamples; ++i) {
            const std::int64_t t = w0_ + static_cast<std::int64_t>((i + unit()) * kSpanMin / kSamples * kMsPerMinute);
            const double h = heading + normal(0, 0.5);
            lat += step_km * std::cos(h) / 111.2;
            lon += step_km * std::sin(h) / (111.2 * std::cos(lat * kPi / 180));
            push(t, LocationSample{lat + normal(0, 0.0002), lon + normal(0, 0.0002), tr_.home_alt + normal(0, 2.0)});
        }
    }

    std::vector<int> devices(double mean, int pool) {
        const std::size_t n = std::max<std::size_t>(1, poisson(mean));
        std::vector<int> ids;
        while (ids.size() < n && ids.size() < static_cast<std::size_t>(pool)) {
            const int id = static_cast<int>(unit() * pool);
            if (std::find(ids.begin(), ids.end(), id) == ids.end()) ids.push_back(id);
        }
        return ids;
    }

    void radio_bt(BluetoothKind kind, double mean_devices, const EmissionParams& e) {
        const auto ids = devices(mean_devices, 300);
        const std::string prefix = kind == BluetoothKind::LE ? "ble-" : "btc-";
        std::vector<double> level;
        for (std::size_t k = 0; k < ids.size(); ++k) level.push_back(e.bt_rssi + tr_.bt_offset + normal(0, 5));
        for (int s = 0; s < 5; ++s) {
            const std::int64_t t = w0_ + static_cast<std::int64_t>((s + unit()) * 5.0 * kMsPerMinute);
            for (std::size_t k = 0; k < ids.size(); ++k) {
                if (s > 0 && unit() > 0.75) continue;
                const double r = std::clamp(normal(level[k], 3), -110.0, -20.0);
                push(t, BluetoothScan{kind, prefix + std::to_string(ids[k]), r});
            }
        }
    }

    void radio_wifi(const EmissionParams& e) {
        const auto ids = devices(e.wifi_devices, 500);
        const bool connected = unit() < e.wifi_connected;
        std::vector<double> level;
        for (std::size_t k = 0; k < ids.size(); ++k) level.push_back(e.wifi_rssi + tr_.wifi_offset + normal(0, 5));
        for (int s = 0; s < 8; ++s) {
            const std::int64_t t = w0_ + static_cast<std::int64_t>((s + unit()) * (kSpanMin / 8) * kMsPerMinute);
            for (std::size_t k = 0; k < ids.size(); ++k) {
                if (s > 0 && unit() > 0.75) continue;
                const double r = std::clamp(normal(level[k], 3), -110.0, -20.0);
                push(t, WifiScan{connected && k == 0, "wifi-" + std::to_string(ids[k]), r});
            }
        }
    }

    void cellular(CellTech tech, const EmissionParams& e, double tech_offset) {
        const std::size_t towers = 1 + poisson(e.cell_towers - 1);
        static constexpr std::array<const char*, 3> prefix = {"gsm-", "wcdma-", "lte-"};
        std::vector<int> ids;
        std::vector<double> level;
        for (std::size_t k = 0; k < towers; ++k) {
            ids.push_back(static_cast<int>(unit() * 200));
            level.push_back(e.cell_signal + tr_.cell_offset + tech_offset + normal(0, 4));
        }
        for (int s = 0; s < 5; ++s) {
            const std::int64_t t = w0_ + static_cast<std::int64_t>((s + unit()) * 5.0 * kMsPerMinute);
            for (std::size_t k = 0; k < towers; ++k) {
                const double sig = std::clamp(normal(level[k], 2), -130.0, -40.0);
                push(t, CellularScan{tech, prefix[static_cast<std::size_t>(tech)] + std::to_string(ids[k]), sig});
            }
        }
    }

    void notifications(const EmissionParams& e) {
        const std::size_t n = poisson(e.notifications_per_min * kSpanMin);
        int next_key = 0;
        for (std::size_t i = 0; i < n; ++i) {
            const std::int64_t t = uniform_time(w0_, w1_);
            const bool dup = next_key > 0 && unit() < 0.25;
            const int key = dup ? static_cast<int>(unit() * next_key) : next_key++;
            const std::string k = "k" + std::to_string(key);
            push(t, NotificationEvent{NotificationAction::Posted, k, dup});
            if (unit() < e.notification_removal) push(uniform_time(t, w1_), NotificationEvent{NotificationAction::Removed, k, false});
        }
    }

    void proximity(const EmissionParams& e) {
        for (int s = 0; s < 10; ++s) {
            const std::int64_t t = w0_ + static_cast<std::int64_t>((s + unit()) * 2.5 * kMsPerMinute);
            push(t, ProximitySample{unit() < e.proximity_near ? 0.0 : 5.0});
        }
    }

    void activity(const EmissionParams& e) {
        const double total = std::accumulate(e.simple.begin(), e.simple.end(), 0.0);
        if (total <= 0) return;
        std::size_t label = pick_weighted(e.simple, total, rng_);
        for (int s = 0; s < 12; ++s) {
            const std::int64_t t = w0_ + static_cast<std::int64_t>((s + unit() * 0.5) * 2.0 * kMsPerMinute);
            if (s > 0 && unit() < 0.5) label = pick_weighted(e.simple, total, rng_);
            push(t, SimpleActivitySample{static_cast<SimpleActivity>(label)});
        }
    }

    void steps(const EmissionParams& e, bool counter) {
        const std::size_t n = poisson(e.steps_per_min * kSpanMin);
        std::vector<std::int64_t> times(n);
        for (auto& t : times) t = uniform_time(w0_, w1_);
        std::sort(times.begin(), times.end());
        for (auto t : times) push(t, StepsDetectedEvent{});
        if (unit() < 0.02) tr_.steps_counter = static_cast<std::int64_t>(unit() * 50);  // reboot
        if (counter) {
            for (int s = 0; s < 5; ++s) {
                const std::int64_t t = w0_ + static_cast<std::int64_t>((s + unit()) * 5.0 * kMsPerMinute);
                const auto before = std::lower_bound(times.begin(), times.end(), t) - times.begin();
                push(t, StepsCounterSample{tr_.steps_counter + before});
            }
        }
        tr_.steps_counter += static_cast<std::int64_t>(n) + static_cast<std::int64_t>(poisson(300));
    }

    void screen(const EmissionParams& e) {
        if (e.screen_episodes_per_min <= 0) return;
        std::exponential_distribution<double> gap(e.screen_episodes_per_min);
        std::lognormal_distribution<double> length(std::log(e.screen_episode_min), 0.7);
        double total_w = 0;
        for (const auto& [c, w] : e.apps) total_w += w;
        double at = static_cast<double>(w0_) - 5.0 * kMsPerMinute + gap(rng_) * kMsPerMinute;
        while (at < static_cast<double>(w1_)) {
            const double dur_min = std::min(length(rng_), 20.0);
            const auto on = static_cast<std::int64_t>(at);
            const auto off = on + std::max<std::int64_t>(1000, static_cast<std::int64_t>(dur_min * kMsPerMinute));
            push(on, ScreenEvent{ScreenAction::On});
            const bool presence = unit() < 0.9;
            if (presence) push(on + static_cast<std::int64_t>(unit() * 5000), ScreenEvent{ScreenAction::PresenceStart});
            const std::size_t touches = poisson(e.touches_per_min * dur_min);
            for (std::size_t i = 0; i < touches; ++i) push(uniform_time(on, off), ScreenEvent{ScreenAction::Touch});
            if (total_w > 0) {
                const std::size_t spans = 1 + poisson(dur_min / 3.0);
                std::vector<std::int64_t> cuts{on, off};
                for (std::size_t i = 1; i < spans; ++i) cuts.push_back(uniform_time(on, off));
                std::sort(cuts.begin(), cuts.end());
                for (std::size_t i = 0; i + 1 < cuts.size(); ++i) {
                    std::vector<double> w;
                    for (const auto& [c, x] : e.apps) w.push_back(x);
                    const auto& cat = e.apps[pick_weighted(w, total_w, rng_)].first;
                    push(cuts[i], AppUsageInterval{cat, cuts[i], cuts[i + 1]});
                }
            }
            if (presence) push(off, ScreenEvent{ScreenAction::PresenceEnd});
            push(off, ScreenEvent{ScreenAction::Off});
            at = static_cast<double>(off) + gap(rng_) * kMsPerMinute;
        }
    }

    const std::string& pid_;
    Traits& tr_;
    Rng& rng_;
    std::vector<SensorEvent>& out_;
    std::int64_t w0_ = 0, w1_ = 0;
};

struct ParticipantOutput {
    std::vector<SensorEvent> events;
    std::vector<SelfReport> reports;
};

ParticipantOutput generate_participant(const GeneratorConfig& cfg, const CountrySpec& country,
                                       const CountryProfile& profile, const std::string& pid) {
    Rng rng(derive_seed(cfg.seed, fnv1a64("participant:" + pid)));
    Traits tr = make_traits(profile, cfg.idiosyncrasy, rng);
    CountryProfile own = profile;
    for (std::size_t a = 0; a < kNumActivities; ++a) own.curves[a].phase_h += tr.activity_phase[a];

    ParticipantOutput out;
    WindowEmitter emitter(pid, tr, rng, out.events);
    std::vector<int> hours(24);
    for (std::size_t d = 0; d < country.days; ++d) {
        const std::int64_t local_midnight = cfg.start_ms + static_cast<std::int64_t>(d) * kMsPerDay;
        const bool weekend = (d % 7) >= 5;  // start_ms is a Monday
        std::iota(hours.begin(), hours.end(), 0);
        std::shuffle(hours.begin(), hours.end(), rng);
        std::vector<int> chosen(hours.begin(), hours.begin() + static_cast<std::ptrdiff_t>(country.reports_per_day));
        std::sort(chosen.begin(), chosen.end());
        for (int h : chosen) {
            const std::int64_t jitter =
                static_cast<std::int64_t>((std::uniform_real_distribution<double>(-5.0, 5.0)(rng)) * kMsPerMinute);
            const std::int64_t local = local_midnight + h * kMsPerHour + jitter;
            const std::int64_t utc = local - static_cast<std::int64_t>(country.utc_offset_min) * kMsPerMinute;
            const double local_hour = static_cast<double>(h) + static_cast<double>(jitter) / kMsPerHour;
            const auto dist = own.hour_distribution(local_hour, weekend, tr.phase_h);
            const std::size_t a = sample_class(dist, rng);
            const auto& labels = raw_labels()[a];
            std::string raw = labels[std::min(labels.size() - 1, static_cast<std::size_t>(
                                                                     std::uniform_real_distribution<double>(0, 1)(rng) *
                                                                     static_cast<double>(labels.size())))];
            if (std::uniform_real_distribution<double>(0, 1)(rng) < cfg.dropped_label_rate)
                raw = kDroppedLabels[static_cast<std::size_t>(std::uniform_real_distribution<double>(0, 1)(rng) *
                                                              kDroppedLabels.size()) %
                                     kDroppedLabels.size()];
            out.reports.push_back(SelfReport{pid, utc, country.utc_offset_min, raw});
            const auto& row = tr.mixing[a];
            emitter.emit(utc, tr.emissions[pick_weighted(row, std::accumulate(row.begin(), row.end(), 0.0), rng)]);
        }
    }
    std::sort(out.events.begin(), out.events.end(), [](const SensorEvent& x, const SensorEvent& y) {
        if (x.timestamp_ms != y.timestamp_ms) return x.timestamp_ms < y.timestamp_ms;
        return x.payload < y.payload;
    });
    return out;
}

std::string participant_id(const CountryCode& c, std::size_t i) {
    std::string n = std::to_string(i + 1);
    if (n.size() < 3) n.insert(0, 3 - n.size(), '0');
    return c.str() + "-p" + n;
}

}  // namespace

CorpusFiles generate_files(const GeneratorConfig& cfg, int jobs) {
    cfg.validate();
    struct Job {
        std::size_t country;
        std::string pid;
    };
    std::vector<Job> work;
    std::vector<CountryProfile> profiles;
    CorpusFiles files;
    for (std::size_t c = 0; c < cfg.countries.size(); ++c) {
        profiles.push_back(cfg.country_profile(cfg.countries[c]));
        for (std::size_t i = 0; i < cfg.countries[c].participants; ++i) {
            work.push_back({c, participant_id(cfg.countries[c].code, i)});
            files.participants.push_back({work.back().pid, cfg.countries[c].code});
        }
    }
    std::sort(work.begin(), work.end(), [](const Job& a, const Job& b) { return a.pid < b.pid; });
    std::sort(files.participants.begin(), files.participants.end());
    for (std::size_t i = 1; i < files.participants.size(); ++i)
        if (files.participants[i].id == files.participants[i - 1].id)
            throw ConfigError("participant id collision: " + files.participants[i].id);

    std::vector<ParticipantOutput> outputs(work.size());
    parallel_for(work.size(), jobs, [&](std::size_t i) {
        outputs[i] = generate_participant(cfg, cfg.countries[work[i].country], profiles[work[i].country], work[i].pid);
    });
    std::size_t n_events = 0, n_reports = 0;
    for (const auto& o : outputs) {
        n_events += o.events.size();
        n_reports += o.reports.size();
    }
    files.events.reserve(n_events);
    files.reports.reserve(n_reports);
    for (auto& o : outputs) {
        std::move(o.events.begin(), o.events.end(), std::back_inserter(files.events));
        std::move(o.reports.begin(), o.reports.end(), std::back_inserter(files.reports));
        o = {};
    }
    return files;
}

Corpus generate_corpus(const GeneratorConfig& cfg, int jobs) {
    auto files = generate_files(cfg, jobs);
    return build_corpus(std::move(files.events), std::move(files.reports), std::move(files.participants));
}

}  // namespace sensefold
