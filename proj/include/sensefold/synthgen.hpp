#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "sensefold/ingestion.hpp"
#include "sensefold/metrics.hpp"

namespace sensefold {

/// Circular Gaussian bump on the 24 h clock.
struct Bump {
    double center_h = 12;
    double width_h = 1;
    double height = 1;
    bool operator==(const Bump&) const = default;
};

struct ActivityCurve {
    std::vector<Bump> bumps;
    double phase_h = 0;          // added to every bump center; for Eating this is the meal-time offset
    double weekend_factor = 1;   // propensity multiplier on Saturdays and Sundays
    bool operator==(const ActivityCurve&) const = default;
};

/// What a window of one activity looks like to the phone.
struct EmissionParams {
    double steps_per_min = 0;
    double screen_episodes_per_min = 0;
    double screen_episode_min = 1;  // median episode length (log-normal)
    double touches_per_min = 0;     // while the screen is on
    double notifications_per_min = 0;
    double notification_removal = 0;  // probability
    double proximity_near = 0;        // probability
    double wifi_devices = 0;
    double wifi_rssi = -60;
    double wifi_connected = 0;  // probability
    double bt_le_devices = 0;
    double bt_classic_devices = 0;
    double bt_rssi = -70;
    double cell_towers = 1;
    double cell_signal = -90;
    double speed_kmh = 0;
    std::array<double, kNumSimpleActivities> simple{};       // simple-activity label weights
    std::vector<std::pair<std::string, double>> apps;        // app category weights
    bool operator==(const EmissionParams&) const = default;
};

/// Sensors whose presence in a window is drawn independently.
enum class SynthSensor : std::uint8_t {
    Location,
    BluetoothLE,
    BluetoothClassic,
    Wifi,
    CellGSM,
    CellWCDMA,
    CellLTE,
    Proximity,
    Activity,
    StepsCounter,
};
inline constexpr std::size_t kNumSynthSensors = 10;
std::string_view to_string(SynthSensor s);

struct CountryProfile {
    std::array<ActivityCurve, kNumActivities> curves;
    double baseline = 0.005;  // propensity floor for every activity
    std::array<EmissionParams, kNumActivities> emissions;
    /// mixing[a][b]: weight with which a window of activity a looks like activity b.
    std::array<std::array<double, kNumActivities>, kNumActivities> mixing{};
    std::array<double, kNumSynthSensors> presence{};

    /// Activity distribution at a local hour; `offset_h` delays the whole routine.
    ClassDistribution hour_distribution(double hour, bool weekend, double offset_h = 0) const;

    nlohmann::json to_json() const;
    static CountryProfile from_json(const nlohmann::json& j);
    static const CountryProfile& base();

    bool operator==(const CountryProfile&) const = default;
};

/// Rotates the whole routine by delta * 2 h * v, with |v| uniform in [0.75, 1] and a random sign
/// (Eating only moves later), then multiplies every mixing weight by (1 + delta)^u, u uniform in [-1, 1].
CountryProfile shift_profile(const CountryProfile& profile, double delta, std::uint64_t seed);

/// Mean over the 24 weekday hours of KL(p(.|h) || q(.|h)).
double hourly_kl_divergence(const CountryProfile& p, const CountryProfile& q);

struct ProfileSpec {
    std::string name;
    std::string parent = "base";
    double scale = 1.0;  // shift applied = delta * scale
};

struct CountrySpec {
    CountryCode code;
    std::string profile = "base";
    double scale = 0.2;
    std::size_t participants = 20;
    std::size_t days = 14;
    std::size_t reports_per_day = 8;
    int utc_offset_min = 0;
};

struct GeneratorConfig {
    std::uint64_t seed = 1;
    double delta = 1.0;         // global shift multiplier
    double idiosyncrasy = 0.5;  // participant jitter scale (sigma_p)
    std::int64_t start_ms = 1672617600000;  // Monday 2023-01-02 00:00 UTC
    double dropped_label_rate = 0.02;
    std::vector<ProfileSpec> profiles;
    std::vector<CountrySpec> countries;
    std::optional<CountryProfile> base_profile;

    void validate() const;
    /// Resolves the shift chain base -> named profiles -> country.
    CountryProfile country_profile(const CountrySpec& c) const;

    nlohmann::json to_json() const;
    static GeneratorConfig from_json(const nlohmann::json& j);
    static GeneratorConfig load(const std::filesystem::path& path);

    /// Five countries in two clusters (SYN_A..SYN_C and SYN_D..SYN_E).
    static GeneratorConfig five_countries();
};

/// Raw events, reports and participants in ingestion form, canonically sorted.
CorpusFiles generate_files(const GeneratorConfig& cfg, int jobs = 1);
Corpus generate_corpus(const GeneratorConfig& cfg, int jobs = 1);

}  // namespace sensefold
