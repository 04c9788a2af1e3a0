#pragma once

#include <array>
#include <cstdint>
#include <iosfwd>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "sensefold/featurize.hpp"
#include "sensefold/ingestion.hpp"
#include "sensefold/metrics.hpp"
#include "sensefold/models.hpp"

namespace sensefold {

// ---------------------------------------------------------------------------
// Splits

enum class SplitKind : std::uint8_t { PopulationLevel, Hybrid };

std::string_view to_string(SplitKind k);
/// Accepts "population" / "population-level" and "hybrid".
std::optional<SplitKind> split_kind_from_string(std::string_view s);

struct SplitPlan {
    SplitKind kind = SplitKind::PopulationLevel;
    std::vector<std::size_t> train;  // dataset row indices, ascending
    std::vector<std::size_t> test;
    std::uint64_t seed = 0;
    double ratio = 0.7;
};

/// Participant-disjoint split over `rows`. Participants are added in a seeded shuffled order until
/// the train share reaches `ratio`; up to 200 shuffles are tried and the first whose per-class train
/// shares all lie within 5 pp of `ratio` wins (else the one with the smallest worst deviation).
SplitPlan split_population_level(const Dataset& ds, std::span<const std::size_t> rows, double ratio,
                                 std::uint64_t seed);
SplitPlan split_population_level(const Dataset& ds, double ratio, std::uint64_t seed);

/// Per participant and class, round(ratio * n) examples (at least one) go to train.
SplitPlan split_hybrid(const Dataset& ds, std::span<const std::size_t> rows, double ratio, std::uint64_t seed);
SplitPlan split_hybrid(const Dataset& ds, double ratio, std::uint64_t seed);

SplitPlan make_split(SplitKind kind, const Dataset& ds, std::span<const std::size_t> rows, double ratio,
                     std::uint64_t seed);

/// Reduces every country among `rows` to the smallest country's count by seeded sampling without
/// replacement. Countries already at the minimum keep all their rows. Result is ascending.
std::vector<std::size_t> downsample_equal(const Dataset& ds, std::span<const std::size_t> rows, std::uint64_t seed);
Dataset downsample_equal(const Dataset& ds, std::uint64_t seed);

// ---------------------------------------------------------------------------
// Experiments

enum class Approach : std::uint8_t { CountrySpecific, AgnosticP1, AgnosticP2, MultiCountry };

std::string_view to_string(Approach a);
/// Accepts "country-specific", "agnostic-p1", "agnostic-p2", "multi-country".
std::optional<Approach> approach_from_string(std::string_view s);

struct MetricSummary {
    std::vector<double> f1, auroc;  // per run
    double f1_mean = 0, f1_std = 0;
    double auroc_mean = 0, auroc_std = 0;

    /// Mean and population standard deviation of the stored runs.
    static MetricSummary from_runs(std::vector<double> f1, std::vector<double> auroc);
};

struct ExperimentCell {
    Approach approach = Approach::CountrySpecific;
    bool downsampled = false;
    SplitKind personalization = SplitKind::Hybrid;
    ModelKind model = ModelKind::RandomForest;
    std::vector<CountryCode> train_countries;
    std::optional<CountryCode> test_country;

    /// Short tag: CS, P1, P2, MC-w/o-DS or MC-w/DS.
    std::string tag() const;
};

struct ExperimentResult {
    ExperimentCell cell;
    MetricSummary metrics;
    bool skipped = false;
    std::string skip_reason;
};

struct ExperimentConfig {
    std::vector<ModelKind> models{ModelKind::RandomForest};
    std::vector<SplitKind> personalization{SplitKind::PopulationLevel, SplitKind::Hybrid};
    ModelParams params;
    std::size_t repetitions = 10;
    std::uint64_t seed = 0;
    double ratio = 0.7;
    int jobs = 1;

    nlohmann::json to_json() const;
};

/// Seeds for repetition `run` under a master seed.
struct RunSeeds {
    std::uint64_t split, model, downsample;
};
RunSeeds run_seeds(std::uint64_t master, std::size_t run);

/// Runs every cell for the configured repetitions. Cells that cannot be evaluated (too few
/// participants, single-class test sets) come back marked skipped. Output order follows `cells`.
std::vector<ExperimentResult> run_cells(const Dataset& ds, std::span<const ExperimentCell> cells,
                                        const ExperimentConfig& cfg);

std::vector<ExperimentResult> run_country_specific(const Dataset& ds, const ExperimentConfig& cfg);
ExperimentResult run_agnostic_phase1(const Dataset& ds, const CountryCode& source, const CountryCode& target,
                                     SplitKind personalization, ModelKind model, const ExperimentConfig& cfg);
/// All ordered (source, target) pairs; population-level cells train one model per source and run.
std::vector<ExperimentResult> run_agnostic_phase1_matrix(const Dataset& ds, const ExperimentConfig& cfg);
ExperimentResult run_agnostic_phase2(const Dataset& ds, const CountryCode& held_out, SplitKind personalization,
                                     ModelKind model, const ExperimentConfig& cfg);
ExperimentResult run_multi_country(const Dataset& ds, bool downsampled, SplitKind personalization, ModelKind model,
                                   const ExperimentConfig& cfg);

/// One row per cell and run plus one aggregate row per cell.
void write_results_csv(std::ostream& out, std::span<const ExperimentResult> results, std::string_view header_comment);
nlohmann::json results_summary_json(std::span<const ExperimentResult> results, const ExperimentConfig& cfg);

// ---------------------------------------------------------------------------
// Analyses

using ActivityRanking = std::array<std::vector<AnovaResult>, kNumActivities>;

/// For each activity, features of `country` ranked by one-vs-rest F among those with p < alpha.
ActivityRanking top_features(const Dataset& ds, const CountryCode& country, std::size_t k = 3, double alpha = 0.05);

using HourHistogram = std::array<double, 24>;
/// Normalized local-hour histogram per (country, class); cells without reports are omitted.
std::map<std::pair<CountryCode, ActivityClass>, HourHistogram> hourly_density(const Corpus& corpus,
                                                                             const Taxonomy& taxonomy);

/// Sums a per-feature importance vector by registry modality, in registry order of first appearance.
std::vector<std::pair<std::string, double>> importance_by_modality(const FeatureRegistry& registry,
                                                                   std::span<const double> importance);

}  // namespace sensefold
