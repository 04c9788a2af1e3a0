#include "sensefold/evaluate.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <ostream>
#include <unordered_map>

#include "sensefold/util.hpp"

namespace sensefold {

using nlohmann::json;

std::string_view to_string(SplitKind k) { return k == SplitKind::Hybrid ? "hybrid" : "population"; }

std::optional<SplitKind> split_kind_from_string(std::string_view s) {
    if (s == "hybrid") return SplitKind::Hybrid;
    if (s == "population" || s == "population-level") return SplitKind::PopulationLevel;
    return std::nullopt;
}

namespace {

std::vector<std::size_t> all_rows(const Dataset& ds) {
    std::vector<std::size_t> rows(ds.size());
    std::iota(rows.begin(), rows.end(), std::size_t{0});
    return rows;
}

/// Rows grouped by participant id, groups in id order, rows in input order.
std::vector<std::vector<std::size_t>> group_by_participant(const Dataset& ds, std::span<const std::size_t> rows) {
    std::map<std::string_view, std::vector<std::size_t>> groups;
    for (auto r : rows) groups[ds.examples.at(r).participant].push_back(r);
    std::vector<std::vector<std::size_t>> out;
    out.reserve(groups.size());
    for (auto& [id, g] : groups) out.push_back(std::move(g));
    return out;
}

void validate_ratio(double ratio) {
    if (!(ratio > 0 && ratio < 1)) throw ConfigError("split ratio must lie in (0, 1)");
}

}  // namespace

SplitPlan split_population_level(const Dataset& ds, std::span<const std::size_t> rows, double ratio,
                                 std::uint64_t seed) {
    validate_ratio(ratio);
    const auto groups = group_by_participant(ds, rows);
    if (groups.size() < 2) throw ConfigError("population-level split needs at least 2 participants");

    std::vector<std::array<std::size_t, kNumActivities>> per_class(groups.size());
    std::array<std::size_t, kNumActivities> class_total{};
    for (std::size_t g = 0; g < groups.size(); ++g)
        for (auto r : groups[g]) {
            ++per_class[g][index_of(ds.examples[r].label)];
            ++class_total[index_of(ds.examples[r].label)];
        }
    const double total = static_cast<double>(rows.size());

    constexpr std::size_t kCandidates = 200;
    constexpr double kTolerance = 0.05;
    std::vector<std::size_t> order(groups.size()), best_order;
    std::size_t best_cut = 0;
    double best_dev = std::numeric_limits<double>::infinity();
    for (std::size_t cand = 0; cand < kCandidates; ++cand) {
        std::iota(order.begin(), order.end(), std::size_t{0});
        Rng rng(derive_seed(seed, cand));
        std::shuffle(order.begin(), order.end(), rng);
        std::size_t cut = 0, train = 0;
        std::array<std::size_t, kNumActivities> train_class{};
        while (cut + 1 < order.size() && static_cast<double>(train) < ratio * total - 1e-9) {
            train += groups[order[cut]].size();
            for (std::size_t c = 0; c < kNumActivities; ++c) train_class[c] += per_class[order[cut]][c];
            ++cut;
        }
        double dev = 0;
        for (std::size_t c = 0; c < kNumActivities; ++c)
            if (class_total[c] > 0)
                dev = std::max(dev, std::abs(static_cast<double>(train_class[c]) / static_cast<double>(class_total[c]) -
                                             ratio));
        if (dev < best_dev) {
            best_dev = dev;
            best_order = order;
            best_cut = cut;
        }
        if (dev <= kTolerance) break;
    }

    SplitPlan plan{SplitKind::PopulationLevel, {}, {}, seed, ratio};
    for (std::size_t i = 0; i < best_order.size(); ++i) {
        auto& dst = i < best_cut ? plan.train : plan.test;
        dst.insert(dst.end(), groups[best_order[i]].begin(), groups[best_order[i]].end());
    }
    std::sort(plan.train.begin(), plan.train.end());
    std::sort(plan.test.begin(), plan.test.end());
    return plan;
}

SplitPlan split_population_level(const Dataset& ds, double ratio, std::uint64_t seed) {
    return split_population_level(ds, all_rows(ds), ratio, seed);
}

SplitPlan split_hybrid(const Dataset& ds, std::span<const std::size_t> rows, double ratio, std::uint64_t seed) {
    validate_ratio(ratio);
    SplitPlan plan{SplitKind::Hybrid, {}, {}, seed, ratio};
    Rng rng(seed);
    for (const auto& group : group_by_participant(ds, rows)) {
        std::array<std::vector<std::size_t>, kNumActivities> by_class;
        for (auto r : group) by_class[index_of(ds.examples[r].label)].push_back(r);
        for (auto& cls : by_class) {
            if (cls.empty()) continue;
            std::shuffle(cls.begin(), cls.end(), rng);
            const std::size_t n = cls.size();
            const auto n_train = std::clamp<std::size_t>(
                static_cast<std::size_t>(std::floor(ratio * static_cast<double>(n) + 0.5)), 1, n);
            plan.train.insert(plan.train.end(), cls.begin(), cls.begin() + static_cast<std::ptrdiff_t>(n_train));
            plan.test.insert(plan.test.end(), cls.begin() + static_cast<std::ptrdiff_t>(n_train), cls.end());
        }
    }
    std::sort(plan.train.begin(), plan.train.end());
    std::sort(plan.test.begin(), plan.test.end());
    return plan;
}

SplitPlan split_hybrid(const Dataset& ds, double ratio, std::uint64_t seed) {
    return split_hybrid(ds, all_rows(ds), ratio, seed);
}

SplitPlan make_split(SplitKind kind, const Dataset& ds, std::span<const std::size_t> rows, double ratio,
                     std::uint64_t seed) {
    return kind == SplitKind::Hybrid ? split_hybrid(ds, rows, ratio, seed)
                                     : split_population_level(ds, rows, ratio, seed);
}

std::vector<std::size_t> downsample_equal(const Dataset& ds, std::span<const std::size_t> rows, std::uint64_t seed) {
    std::map<CountryCode, std::vector<std::size_t>> by_country;
    for (auto r : rows) by_country[ds.examples.at(r).country].push_back(r);
    if (by_country.empty()) return {};
    std::size_t target = std::numeric_limits<std::size_t>::max();
    for (const auto& [c, v] : by_country) target = std::min(target, v.size());

    std::vector<std::size_t> out;
    std::size_t k = 0;
    for (auto& [c, v] : by_country) {
        if (v.size() > target) {
            Rng rng(derive_seed(seed, k));
            for (std::size_t i = 0; i < target; ++i) {
                std::uniform_int_distribution<std::size_t> pick(i, v.size() - 1);
                std::swap(v[i], v[pick(rng)]);
            }
            v.resize(target);
        }
        out.insert(out.end(), v.begin(), v.end());
        ++k;
    }
    std::sort(out.begin(), out.end());
    return out;
}

Dataset downsample_equal(const Dataset& ds, std::uint64_t seed) { return ds.subset(downsample_equal(ds, all_rows(ds), seed)); }

// ---------------------------------------------------------------------------
// Experiments

std::string_view to_string(Approach a) {
    switch (a) {
        case Approach::CountrySpecific: return "country-specific";
        case Approach::AgnosticP1: return "agnostic-p1";
        case Approach::AgnosticP2: return "agnostic-p2";
        case Approach::MultiCountry: return "multi-country";
    }
    return "?";
}

std::optional<Approach> approach_from_string(std::string_view s) {
    for (auto a : {Approach::CountrySpecific, Approach::AgnosticP1, Approach::AgnosticP2, Approach::MultiCountry})
        if (to_string(a) == s) return a;
    return std::nullopt;
}

MetricSummary MetricSummary::from_runs(std::vector<double> f1, std::vector<double> auroc) {
    MetricSummary m;
    auto stats = [](const std::vector<double>& v, double& mean, double& sd) {
        if (v.empty()) return;
        mean = std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
        double ss = 0;
        for (double x : v) ss += (x - mean) * (x - mean);
        sd = std::sqrt(ss / static_cast<double>(v.size()));
    };
    stats(f1, m.f1_mean, m.f1_std);
    stats(auroc, m.auroc_mean, m.auroc_std);
    m.f1 = std::move(f1);
    m.auroc = std::move(auroc);
    return m;
}

std::string ExperimentCell::tag() const {
    switch (approach) {
        case Approach::CountrySpecific: return "CS";
        case Approach::AgnosticP1: return "P1";
        case Approach::AgnosticP2: return "P2";
        case Approach::MultiCountry: return downsampled ? "MC-w/DS" : "MC-w/o-DS";
    }
    return "?";
}

json ExperimentConfig::to_json() const {
    json models_j = json::array(), pers_j = json::array();
    for (auto m : models) models_j.push_back(std::string(to_string(m)));
    for (auto p : personalization) pers_j.push_back(std::string(to_string(p)));
    return {{"models", models_j},  {"personalization", pers_j}, {"params", params.to_json()},
            {"repetitions", repetitions}, {"seed", seed}, {"ratio", ratio}};
}

RunSeeds run_seeds(std::uint64_t master, std::size_t run) {
    const auto rs = derive_seed(master, run);
    return {derive_seed(rs, 0), derive_seed(rs, 1), derive_seed(rs, 2)};
}

namespace {

struct RunOutcome {
    double f1 = 0, auroc = 0;
    std::string error;
};

std::vector<std::size_t> rows_of(const Dataset& ds, std::span<const CountryCode> countries) {
    std::vector<std::size_t> rows;
    for (std::size_t i = 0; i < ds.size(); ++i)
        if (std::find(countries.begin(), countries.end(), ds.examples[i].country) != countries.end()) rows.push_back(i);
    return rows;
}

std::vector<std::size_t> merged(std::vector<std::size_t> a, std::span<const std::size_t> b) {
    a.insert(a.end(), b.begin(), b.end());
    std::sort(a.begin(), a.end());
    return a;
}

struct TrainTest {
    std::vector<std::size_t> train, test;
};

TrainTest plan_cell(const Dataset& ds, const ExperimentCell& cell, const RunSeeds& seeds, double ratio) {
    const auto train_rows = rows_of(ds, cell.train_countries);
    switch (cell.approach) {
        case Approach::CountrySpecific: {
            auto plan = make_split(cell.personalization, ds, train_rows, ratio, seeds.split);
            return {std::move(plan.train), std::move(plan.test)};
        }
        case Approach::AgnosticP1:
        case Approach::AgnosticP2: {
            if (!cell.test_country) throw ConfigError("agnostic cell without a test country");
            const auto target_rows = rows_of(ds, std::span<const CountryCode>(&*cell.test_country, 1));
            if (target_rows.empty()) throw ConfigError("test country " + cell.test_country->str() + " has no examples");
            auto source = cell.approach == Approach::AgnosticP2 ? downsample_equal(ds, train_rows, seeds.downsample)
                                                                : train_rows;
            if (source.empty()) throw ConfigError("no training examples");
            if (cell.personalization == SplitKind::PopulationLevel) return {std::move(source), target_rows};
            auto h = split_hybrid(ds, target_rows, ratio, seeds.split);
            return {merged(std::move(source), h.train), std::move(h.test)};
        }
        case Approach::MultiCountry: {
            const auto pool = cell.downsampled ? downsample_equal(ds, train_rows, seeds.downsample) : train_rows;
            auto plan = make_split(cell.personalization, ds, pool, ratio, seeds.split);
            return {std::move(plan.train), std::move(plan.test)};
        }
    }
    throw ConfigError("unknown approach");
}

RunOutcome score(const TrainedModel& model, const Dataset& ds, std::span<const std::size_t> test) {
    if (test.empty()) throw ConfigError("empty test set");
    const auto dm = make_design_matrix(ds, test);
    const auto proba = predict_proba(model, dm);
    const auto pred = predict(model, dm);
    return {weighted_f1(dm.y, pred), weighted_auroc(dm.y, proba), {}};
}

RunOutcome run_one(const Dataset& ds, const ExperimentCell& cell, const ExperimentConfig& cfg, std::size_t run) {
    try {
        const auto seeds = run_seeds(cfg.seed, run);
        const auto tt = plan_cell(ds, cell, seeds, cfg.ratio);
        const auto model = train_model(cell.model, make_design_matrix(ds, tt.train), cfg.params, seeds.model);
        return score(model, ds, tt.test);
    } catch (const Error& e) {
        return {0, 0, e.what()};
    }
}

ExperimentResult assemble(const ExperimentCell& cell, std::span<const RunOutcome> runs) {
    ExperimentResult res{cell, {}, false, {}};
    std::vector<double> f1, auroc;
    for (const auto& r : runs) {
        if (!r.error.empty()) {
            res.skipped = true;
            res.skip_reason = r.error;
            break;
        }
        f1.push_back(r.f1);
        auroc.push_back(r.auroc);
    }
    if (!res.skipped) res.metrics = MetricSummary::from_runs(std::move(f1), std::move(auroc));
    return res;
}

ExperimentConfig single_threaded_models(ExperimentConfig cfg) {
    cfg.params.forest.jobs = 1;
    if (cfg.repetitions == 0) throw ConfigError("repetitions must be >= 1");
    return cfg;
}

}  // namespace

std::vector<ExperimentResult> run_cells(const Dataset& ds, std::span<const ExperimentCell> cells,
                                        const ExperimentConfig& config) {
    const auto cfg = single_threaded_models(config);
    const std::size_t reps = cfg.repetitions;
    std::vector<RunOutcome> outcomes(cells.size() * reps);
    parallel_for(outcomes.size(), cfg.jobs,
                 [&](std::size_t j) { outcomes[j] = run_one(ds, cells[j / reps], cfg, j % reps); });
    std::vector<ExperimentResult> out;
    out.reserve(cells.size());
    for (std::size_t c = 0; c < cells.size(); ++c)
        out.push_back(assemble(cells[c], std::span<const RunOutcome>(outcomes).subspan(c * reps, reps)));
    return out;
}

std::vector<ExperimentResult> run_country_specific(const Dataset& ds, const ExperimentConfig& cfg) {
    std::vector<ExperimentCell> cells;
    for (const auto& c : ds.countries())
        for (auto p : cfg.personalization)
            for (auto m : cfg.models) cells.push_back({Approach::CountrySpecific, false, p, m, {c}, c});
    return run_cells(ds, cells, cfg);
}

ExperimentResult run_agnostic_phase1(const Dataset& ds, const CountryCode& source, const CountryCode& target,
                                     SplitKind personalization, ModelKind model, const ExperimentConfig& cfg) {
    if (source == target) throw ConfigError("agnostic phase I needs distinct source and target countries");
    const ExperimentCell cell{Approach::AgnosticP1, false, personalization, model, {source}, target};
    return run_cells(ds, std::span<const ExperimentCell>(&cell, 1), cfg).front();
}

std::vector<ExperimentResult> run_agnostic_phase1_matrix(const Dataset& ds, const ExperimentConfig& config) {
    const auto cfg = single_threaded_models(config);
    const auto countries = ds.countries();
    const std::size_t reps = cfg.repetitions;
    std::vector<ExperimentCell> cells;
    for (auto p : cfg.personalization)
        for (auto m : cfg.models)
            for (const auto& s : countries)
                for (const auto& t : countries)
                    if (s != t) cells.push_back({Approach::AgnosticP1, false, p, m, {s}, t});

    // Population-level cells share one model per (model kind, source, run).
    struct SharedJob {
        ModelKind model;
        CountryCode source;
        std::size_t run;
    };
    std::vector<SharedJob> shared;
    for (auto m : cfg.models)
        for (const auto& s : countries)
            for (std::size_t r = 0; r < reps; ++r) shared.push_back({m, s, r});

    std::vector<RunOutcome> outcomes(cells.size() * reps);
    std::vector<std::size_t> hybrid_jobs;
    for (std::size_t j = 0; j < outcomes.size(); ++j)
        if (cells[j / reps].personalization == SplitKind::Hybrid) hybrid_jobs.push_back(j);

    const bool any_population =
        std::find(cfg.personalization.begin(), cfg.personalization.end(), SplitKind::PopulationLevel) !=
        cfg.personalization.end();
    const std::size_t shared_count = any_population ? shared.size() : 0;
    parallel_for(shared_count + hybrid_jobs.size(), cfg.jobs, [&](std::size_t j) {
        if (j >= shared_count) {
            const auto job = hybrid_jobs[j - shared_count];
            outcomes[job] = run_one(ds, cells[job / reps], cfg, job % reps);
            return;
        }
        const auto& sj = shared[j];
        std::vector<std::size_t> cell_ids;
        for (std::size_t c = 0; c < cells.size(); ++c)
            if (cells[c].personalization == SplitKind::PopulationLevel && cells[c].model == sj.model &&
                cells[c].train_countries.front() == sj.source)
                cell_ids.push_back(c);
        try {
            const auto seeds = run_seeds(cfg.seed, sj.run);
            const auto train = rows_of(ds, std::span<const CountryCode>(&sj.source, 1));
            const auto model = train_model(sj.model, make_design_matrix(ds, train), cfg.params, seeds.model);
            for (auto c : cell_ids) {
                try {
                    outcomes[c * reps + sj.run] =
                        score(model, ds, rows_of(ds, std::span<const CountryCode>(&*cells[c].test_country, 1)));
                } catch (const Error& e) {
                    outcomes[c * reps + sj.run] = {0, 0, e.what()};
                }
            }
        } catch (const Error& e) {
            for (auto c : cell_ids) outcomes[c * reps + sj.run] = {0, 0, e.what()};
        }
    });

    std::vector<ExperimentResult> out;
    for (std::size_t c = 0; c < cells.size(); ++c)
        out.push_back(assemble(cells[c], std::span<const RunOutcome>(outcomes).subspan(c * reps, reps)));
    return out;
}

ExperimentResult run_agnostic_phase2(const Dataset& ds, const CountryCode& held_out, SplitKind personalization,
                                     ModelKind model, const ExperimentConfig& cfg) {
    const auto countries = ds.countries();
    if (countries.size() < 3) throw ConfigError("agnostic phase II needs at least 3 countries");
    if (std::find(countries.begin(), countries.end(), held_out) == countries.end())
        throw ConfigError("country " + held_out.str() + " is not in the dataset");
    ExperimentCell cell{Approach::AgnosticP2, true, personalization, model, {}, held_out};
    for (const auto& c : countries)
        if (c != held_out) cell.train_countries.push_back(c);
    return run_cells(ds, std::span<const ExperimentCell>(&cell, 1), cfg).front();
}

ExperimentResult run_multi_country(const Dataset& ds, bool downsampled, SplitKind personalization, ModelKind model,
                                   const ExperimentConfig& cfg) {
    const ExperimentCell cell{Approach::MultiCountry, downsampled, personalization, model, ds.countries(), std::nullopt};
    return run_cells(ds, std::span<const ExperimentCell>(&cell, 1), cfg).front();
}

namespace {

std::string join_countries(const std::vector<CountryCode>& cs) {
    std::string s;
    for (const auto& c : cs) {
        if (!s.empty()) s += ';';
        s += c.str();
    }
    return s;
}

std::string csv_safe(std::string s) {
    for (auto& ch : s)
        if (ch == ',' || ch == '\n' || ch == '\r' || ch == '"') ch = ' ';
    return s;
}

}  // namespace

void write_results_csv(std::ostream& out, std::span<const ExperimentResult> results, std::string_view header_comment) {
    if (!header_comment.empty()) out << "# " << header_comment << '\n';
    out << "row,approach,personalization,model,train_countries,test_country,run,f1,auroc,f1_std,auroc_std,status\n";
    for (const auto& r : results) {
        const auto& c = r.cell;
        const std::string prefix = c.tag() + ',' + std::string(to_string(c.personalization)) + ',' +
                                   std::string(to_string(c.model)) + ',' + join_countries(c.train_countries) + ',' +
                                   (c.test_country ? c.test_country->str() : std::string()) + ',';
        if (r.skipped) {
            out << "aggregate," << prefix << ",,,,,skipped: " << csv_safe(r.skip_reason) << '\n';
            continue;
        }
        for (std::size_t i = 0; i < r.metrics.f1.size(); ++i)
            out << "run," << prefix << i << ',' << format_double(r.metrics.f1[i]) << ','
                << format_double(r.metrics.auroc[i]) << ",,,ok\n";
        out << "aggregate," << prefix << ',' << format_double(r.metrics.f1_mean) << ','
            << format_double(r.metrics.auroc_mean) << ',' << format_double(r.metrics.f1_std) << ','
            << format_double(r.metrics.auroc_std) << ",ok\n";
    }
}

json results_summary_json(std::span<const ExperimentResult> results, const ExperimentConfig& cfg) {
    json cells = json::array();
    for (const auto& r : results) {
        json countries = json::array();
        for (const auto& c : r.cell.train_countries) countries.push_back(c.str());
        json j{{"tag", r.cell.tag()},
               {"approach", std::string(to_string(r.cell.approach))},
               {"downsampled", r.cell.downsampled},
               {"personalization", std::string(to_string(r.cell.personalization))},
               {"model", std::string(to_string(r.cell.model))},
               {"train_countries", countries},
               {"test_country", r.cell.test_country ? json(r.cell.test_country->str()) : json(nullptr)},
               {"skipped", r.skipped}};
        if (r.skipped) {
            j["reason"] = r.skip_reason;
        } else {
            j["runs"] = r.metrics.f1.size();
            j["f1"] = {{"mean", r.metrics.f1_mean}, {"std", r.metrics.f1_std}, {"values", r.metrics.f1}};
            j["auroc"] = {{"mean", r.metrics.auroc_mean}, {"std", r.metrics.auroc_std}, {"values", r.metrics.auroc}};
        }
        cells.push_back(std::move(j));
    }
    return {{"config", cfg.to_json()}, {"cells", cells}};
}

// ---------------------------------------------------------------------------
// Analyses

ActivityRanking top_features(const Dataset& ds, const CountryCode& country, std::size_t k, double alpha) {
    const auto rows = ds.indices_of_country(country);
    if (rows.empty()) throw ConfigError("country " + country.str() + " is not in the dataset");
    ActivityRanking out;
    std::vector<double> values;
    std::vector<std::uint8_t> member;
    for (std::size_t a = 0; a < kNumActivities; ++a) {
        auto& ranked = out[a];
        for (std::size_t f = 0; f < ds.registry.size(); ++f) {
            values.clear();
            member.clear();
            for (auto r : rows) {
                const auto& e = ds.examples[r];
                if (e.features.is_missing(f)) continue;
                values.push_back(e.features.values[f]);
                member.push_back(index_of(e.label) == a ? 1 : 0);
            }
            AnovaResult res;
            try {
                res = anova_f(values, member);
            } catch (const ConfigError&) {
                continue;
            }
            if (!(res.p < alpha) || std::isnan(res.f)) continue;
            res.feature = ds.registry[f].name;
            ranked.push_back(std::move(res));
        }
        std::stable_sort(ranked.begin(), ranked.end(), [](const AnovaResult& x, const AnovaResult& y) { return x.f > y.f; });
        if (ranked.size() > k) ranked.resize(k);
    }
    return out;
}

std::map<std::pair<CountryCode, ActivityClass>, HourHistogram> hourly_density(const Corpus& corpus,
                                                                             const Taxonomy& taxonomy) {
    std::map<std::pair<CountryCode, ActivityClass>, HourHistogram> out;
    for (const auto& r : corpus.reports()) {
        const auto label = taxonomy.map(r.raw_activity);
        if (!label) continue;
        auto& h = out[{corpus.participant(r.participant).country, *label}];
        h[static_cast<std::size_t>(local_hour(r.timestamp_ms, r.local_offset_min))] += 1.0;
    }
    for (auto& [key, h] : out) {
        const double total = std::accumulate(h.begin(), h.end(), 0.0);
        for (auto& v : h) v /= total;
    }
    return out;
}

std::vector<std::pair<std::string, double>> importance_by_modality(const FeatureRegistry& registry,
                                                                   std::span<const double> importance) {
    if (importance.size() != registry.size()) throw ConfigError("importance vector does not match the registry");
    std::vector<std::pair<std::string, double>> out;
    for (std::size_t i = 0; i < registry.size(); ++i) {
        auto it = std::find_if(out.begin(), out.end(), [&](const auto& p) { return p.first == registry[i].modality; });
        if (it == out.end()) {
            out.emplace_back(registry[i].modality, 0.0);
            it = out.end() - 1;
        }
        it->second += importance[i];
    }
    return out;
}

}  // namespace sensefold
