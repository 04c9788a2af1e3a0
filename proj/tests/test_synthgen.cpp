#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>

#include "sensefold/featurize.hpp"
#include "sensefold/synthgen.hpp"

using namespace sensefold;

namespace {

GeneratorConfig small_config(std::size_t participants = 3, std::size_t days = 2) {
    auto cfg = GeneratorConfig::five_countries();
    for (auto& c : cfg.countries) {
        c.participants = participants;
        c.days = days;
    }
    return cfg;
}

// Kolmogorov limiting distribution with the small-sample correction.
double ks_pvalue(double d, std::size_t n, std::size_t m) {
    const double ne = static_cast<double>(n) * static_cast<double>(m) / static_cast<double>(n + m);
    const double lambda = (std::sqrt(ne) + 0.12 + 0.11 / std::sqrt(ne)) * d;
    if (lambda < 0.2) return 1.0;
    double sum = 0, sign = 1;
    for (int k = 1; k <= 200; ++k) {
        sum += sign * std::exp(-2.0 * k * k * lambda * lambda);
        sign = -sign;
    }
    return std::clamp(2.0 * sum, 0.0, 1.0);
}

double ks_statistic(std::vector<double> a, std::vector<double> b) {
    std::sort(a.begin(), a.end());
    std::sort(b.begin(), b.end());
    std::size_t i = 0, j = 0;
    double d = 0;
    while (i < a.size() && j < b.size()) {
        const double x = std::min(a[i], b[j]);
        while (i < a.size() && a[i] == x) ++i;
        while (j < b.size() && b[j] == x) ++j;
        d = std::max(d, std::abs(static_cast<double>(i) / static_cast<double>(a.size()) -
                                 static_cast<double>(j) / static_cast<double>(b.size())));
    }
    return d;
}

}  // namespace

// ---------------------------------------------------------------------------
// Profiles

TEST(Profile, HourDistributionsAreDistributions) {
    const auto& p = CountryProfile::base();
    for (double h = 0; h < 24; h += 0.5) {
        for (bool weekend : {false, true}) {
            const auto d = p.hour_distribution(h, weekend);
            double s = 0;
            for (double v : d) {
                EXPECT_GE(v, 0.0);
                s += v;
            }
            EXPECT_NEAR(s, 1.0, 1e-12);
        }
    }
}

TEST(Profile, JsonRoundTrip) {
    const auto shifted = shift_profile(CountryProfile::base(), 0.7, 3);
    EXPECT_EQ(CountryProfile::from_json(nlohmann::json::parse(shifted.to_json().dump())), shifted);
}

TEST(Shift, ZeroDeltaIsIdentity) {
    for (std::uint64_t seed : {1u, 2u, 99u}) EXPECT_EQ(shift_profile(CountryProfile::base(), 0.0, seed), CountryProfile::base());
}

TEST(Shift, EatingPeakMovesLater) {
    const auto& base = CountryProfile::base();
    auto peak = [](const CountryProfile& p) {
        // evening meal peak
        double best = -1, at = 0;
        for (double h = 16; h < 24; h += 0.05) {
            const double v = p.hour_distribution(h, false)[index_of(ActivityClass::Eating)];
            if (v > best) best = v, at = h;
        }
        return at;
    };
    for (std::uint64_t seed = 1; seed <= 10; ++seed) {
        const auto s = shift_profile(base, 0.5, seed);
        EXPECT_GT(s.curves[index_of(ActivityClass::Eating)].phase_h, base.curves[index_of(ActivityClass::Eating)].phase_h);
        EXPECT_GT(peak(s), peak(base)) << seed;
    }
}

TEST(Shift, DivergenceGrowsWithDelta) {
    const auto& base = CountryProfile::base();
    for (std::uint64_t seed = 1; seed <= 20; ++seed) {
        double last = -1;
        for (double delta : {0.0, 0.25, 0.5, 1.0}) {
            const double kl = hourly_kl_divergence(base, shift_profile(base, delta, seed));
            EXPECT_GE(kl, last) << seed << " " << delta;
            last = kl;
        }
    }
    EXPECT_DOUBLE_EQ(hourly_kl_divergence(base, base), 0.0);
}

TEST(Shift, MixingWeightsStayInBand) {
    const auto& base = CountryProfile::base();
    const double delta = 0.5;
    const auto s = shift_profile(base, delta, 4);
    for (std::size_t a = 0; a < kNumActivities; ++a)
        for (std::size_t b = 0; b < kNumActivities; ++b) {
            const double r = s.mixing[a][b] / base.mixing[a][b];
            EXPECT_GE(r, 1.0 / (1.0 + delta) - 1e-12);
            EXPECT_LE(r, 1.0 + delta + 1e-12);
        }
}

// ---------------------------------------------------------------------------
// Config

TEST(Config, JsonRoundTripAndShippedFile) {
    const auto cfg = GeneratorConfig::five_countries();
    EXPECT_EQ(GeneratorConfig::from_json(nlohmann::json::parse(cfg.to_json().dump())).to_json(), cfg.to_json());
    const auto shipped = GeneratorConfig::load(std::filesystem::path(SENSEFOLD_CONFIG_DIR) / "five_countries.json");
    EXPECT_EQ(shipped.to_json(), cfg.to_json());
}

TEST(Config, ValidationRejectsBadValues) {
    auto bad = GeneratorConfig::five_countries();
    bad.delta = -1;
    EXPECT_THROW(bad.validate(), ConfigError);
    bad = GeneratorConfig::five_countries();
    bad.idiosyncrasy = std::nan("");
    EXPECT_THROW(bad.validate(), ConfigError);
    bad = GeneratorConfig::five_countries();
    bad.countries[1].profile = "nowhere";
    EXPECT_THROW(bad.validate(), ConfigError);
    bad = GeneratorConfig::five_countries();
    bad.countries[0].participants = 0;
    EXPECT_THROW(bad.validate(), ConfigError);
    bad = GeneratorConfig::five_countries();
    bad.countries.push_back(bad.countries[0]);
    EXPECT_THROW(bad.validate(), ConfigError);
}

TEST(Config, TwoClusters) {
    const auto cfg = GeneratorConfig::five_countries();
    std::vector<CountryProfile> prof;
    for (const auto& c : cfg.countries) prof.push_back(cfg.country_profile(c));
    double within = 0, across = 0;
    int nw = 0, na = 0;
    for (std::size_t i = 0; i < prof.size(); ++i)
        for (std::size_t j = 0; j < prof.size(); ++j) {
            if (i == j) continue;
            const bool same = cfg.countries[i].profile == cfg.countries[j].profile;
            (same ? within : across) += hourly_kl_divergence(prof[i], prof[j]);
            ++(same ? nw : na);
        }
    EXPECT_LT(within / nw, across / na);
}

// ---------------------------------------------------------------------------
// Generation

TEST(Generate, DeterministicAndSeedSensitive) {
    const auto cfg = small_config(2, 1);
    const auto a = generate_files(cfg), b = generate_files(cfg, 3);
    EXPECT_EQ(a.events, b.events);
    EXPECT_EQ(a.reports.size(), b.reports.size());
    EXPECT_TRUE(std::equal(a.reports.begin(), a.reports.end(), b.reports.begin(), b.reports.end()));
    auto other = cfg;
    other.seed = 2;
    EXPECT_NE(generate_files(other).events, a.events);
}

TEST(Generate, ReportCountFollowsConfig) {
    auto cfg = small_config(3, 2);
    cfg.countries[1].reports_per_day = 5;
    const auto files = generate_files(cfg);
    std::size_t expected = 0;
    for (const auto& c : cfg.countries) expected += c.participants * c.days * c.reports_per_day;
    EXPECT_EQ(files.reports.size(), expected);
    EXPECT_EQ(files.participants.size(), 15u);
}

TEST(Generate, PassesIngestionWithoutMalformedRecords) {
    const auto cfg = small_config(2, 2);
    const auto dir = std::filesystem::temp_directory_path() / "sensefold_synth_ingest";
    std::filesystem::remove_all(dir);
    const auto corpus = generate_corpus(cfg);
    write_corpus_dir(dir, corpus, false);
    auto files = read_corpus_dir(dir);
    EXPECT_EQ(files.malformed, 0u);
    const auto back = build_corpus(std::move(files.events), std::move(files.reports), std::move(files.participants));
    EXPECT_EQ(back.events(), corpus.events());
    std::filesystem::remove_all(dir);
}

TEST(Generate, WalkingWindowsCarryMoreSteps) {
    auto cfg = small_config(20, 14);
    cfg.countries.resize(2);
    const auto ds = featurize_corpus(generate_corpus(cfg), Taxonomy::default_taxonomy());
    const auto col = ds.registry.index_of("steps_detected");
    std::vector<double> walk, study;
    for (const auto& e : ds.examples) {
        const auto v = e.features.values[col];
        if (e.label == ActivityClass::Walking && walk.size() < 1000) walk.push_back(v);
        if (e.label == ActivityClass::Studying && study.size() < 1000) study.push_back(v);
    }
    ASSERT_GE(walk.size(), 100u);
    ASSERT_GE(study.size(), 100u);
    std::vector<double> all = walk;
    all.insert(all.end(), study.begin(), study.end());
    std::vector<std::uint8_t> member(all.size(), 0);
    std::fill(member.begin(), member.begin() + static_cast<std::ptrdiff_t>(walk.size()), 1);
    const auto r = anova_f(all, member);
    double mw = 0, ms = 0;
    for (double v : walk) mw += v;
    for (double v : study) ms += v;
    EXPECT_GT(mw / static_cast<double>(walk.size()), ms / static_cast<double>(study.size()));
    EXPECT_LT(r.p, 0.01);
}

TEST(Generate, NullShiftCountriesAreIndistinguishable) {
    GeneratorConfig cfg;
    cfg.seed = 5;
    cfg.delta = 0;
    cfg.idiosyncrasy = 0;
    for (auto [code, offset] : {std::pair{"NUL_A", 60}, std::pair{"NUL_B", 480}}) {
        CountrySpec c;
        c.code = CountryCode(code);
        c.participants = 19;
        c.utc_offset_min = offset;
        cfg.countries.push_back(c);
    }
    const auto ds = featurize_corpus(generate_corpus(cfg), Taxonomy::default_taxonomy());
    std::array<std::vector<std::size_t>, 2> rows{ds.indices_of_country(CountryCode("NUL_A")),
                                                 ds.indices_of_country(CountryCode("NUL_B"))};
    for (auto& r : rows) {
        ASSERT_GE(r.size(), 2000u);
        r.resize(2000);
    }
    const double alpha = 0.01 / static_cast<double>(ds.registry.size());
    for (std::size_t f = 0; f < ds.registry.size(); ++f) {
        std::array<std::vector<double>, 2> v;
        for (int k = 0; k < 2; ++k)
            for (auto r : rows[k])
                if (!ds.examples[r].features.missing[f]) v[k].push_back(ds.examples[r].features.values[f]);
        if (v[0].size() < 20 || v[1].size() < 20) continue;
        const double p = ks_pvalue(ks_statistic(v[0], v[1]), v[0].size(), v[1].size());
        EXPECT_GT(p, alpha) << ds.registry[f].name;
    }
}
