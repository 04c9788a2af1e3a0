#include <algorithm>
#include <chrono>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>
#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

#include "sensefold/evaluate.hpp"
#include "sensefold/featurize.hpp"
#include "sensefold/impute.hpp"
#include "sensefold/synthgen.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace sensefold;

namespace {

struct Options {
    int jobs = 1;

    // generate
    std::string config;
    std::string out_dir;
    bool gzip = false;
    std::optional<std::uint64_t> seed;

    // featurize
    std::string corpus;
    std::string taxonomy;
    double window = 20.0;
    std::string out;

    // experiment
    std::string features;
    std::string approach = "country-specific";
    std::string model = "rf";
    std::string personalization = "both";
    bool downsample = false;
    std::string test_country;
    std::string source_country;
    std::size_t reps = 10;
    double ratio = 0.7;
    bool no_impute = false;
    double drop_threshold = 0.70;
    bool per_country_drop = false;
    std::size_t k_neighbors = 5;
    std::string params;
    std::string summary;
    std::string model_out;

    // analyze
    std::string kind;
    std::size_t top_k = 3;
    double alpha = 0.05;
    std::string country;
    std::string model_in;
    std::string registry;
};

std::string config_hash(const json& j) { return hex64(fnv1a64(j.dump())); }

std::string header(const json& provenance) {
    return "sensefold config-hash=" + config_hash(provenance);
}

void write_output(const std::string& path, const std::string& content) {
    if (path.empty() || path == "-") {
        std::cout << content;
        return;
    }
    write_text_file(path, content);
    spdlog::info("wrote {}", path);
}

void require_file(const std::string& path, std::string_view what) {
    if (path.empty()) throw ConfigError(std::string(what) + " path is required");
    if (!fs::exists(path)) throw ConfigError(std::string(what) + " not found: " + path);
}

const Taxonomy& taxonomy_for(const Options& o, std::optional<Taxonomy>& storage) {
    if (o.taxonomy.empty()) return Taxonomy::default_taxonomy();
    require_file(o.taxonomy, "taxonomy");
    storage = Taxonomy::load(o.taxonomy);
    return *storage;
}

Corpus load_corpus(const std::string& dir) {
    if (dir.empty()) throw ConfigError("--corpus is required");
    if (!fs::is_directory(dir)) throw ConfigError("corpus directory not found: " + dir);
    auto files = read_corpus_dir(dir);
    if (files.malformed) spdlog::warn("{} malformed lines skipped", files.malformed);
    return build_corpus(std::move(files.events), std::move(files.reports), std::move(files.participants));
}

// ---------------------------------------------------------------------------

int cmd_generate(const Options& o) {
    require_file(o.config, "generator config");
    if (o.out_dir.empty()) throw ConfigError("--out is required");
    auto cfg = GeneratorConfig::load(o.config);
    if (o.seed) cfg.seed = *o.seed;
    const json prov{{"command", "generate"}, {"generator", cfg.to_json()}};
    const auto t0 = std::chrono::steady_clock::now();
    const auto corpus = generate_corpus(cfg, o.jobs);
    write_corpus_dir(o.out_dir, corpus, o.gzip);
    write_text_file(fs::path(o.out_dir) / "manifest.json",
                    json{{"config_hash", config_hash(prov)}, {"config", prov}}.dump(2) + "\n");
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    std::cout << "generated " << corpus.participants().size() << " participants, " << corpus.reports().size()
              << " reports, " << corpus.event_count() << " events in " << format_double(std::round(secs * 100) / 100)
              << " s\n";
    return 0;
}

int cmd_featurize(const Options& o) {
    std::optional<Taxonomy> tax_storage;
    const auto& tax = taxonomy_for(o, tax_storage);
    FeaturizeOptions fo;
    fo.width_min = o.window;
    fo.jobs = o.jobs;
    if (!(o.window >= fo.guard.min_width_min && o.window <= fo.guard.max_width_min))
        throw ConfigError("window width " + format_double(o.window) + " min outside [" +
                          format_double(fo.guard.min_width_min) + ", " + format_double(fo.guard.max_width_min) + "]");
    const auto corpus = load_corpus(o.corpus);
    const auto ds = featurize_corpus(corpus, tax, fo);

    const json prov{{"command", "featurize"}, {"window_min", o.window}, {"taxonomy", tax.to_json()}};
    const auto hdr = header(prov);
    std::ostringstream csv;
    write_dataset_csv(csv, ds, hdr);
    const fs::path out = o.out.empty() ? fs::path("features.csv") : fs::path(o.out);
    write_text_file(out, csv.str());
    auto reg = ds.registry.to_json();
    reg["config_hash"] = config_hash(prov);
    write_text_file(out.parent_path() / "registry.json", reg.dump(2) + "\n");

    const auto miss = modality_missingness(ds);
    std::cout << "# " << hdr << "\nsensor,missing_fraction\n";
    for (const auto& [sensor, frac] : miss.sensor_fraction) std::cout << sensor << ',' << format_double(frac) << '\n';
    std::cout << "examples," << ds.size() << '\n';
    return 0;
}

std::vector<ModelKind> parse_models(const std::string& list) {
    std::vector<ModelKind> out;
    std::stringstream ss(list);
    for (std::string item; std::getline(ss, item, ',');) {
        auto m = model_kind_from_string(item);
        if (!m) throw ConfigError("unknown model '" + item + "'");
        out.push_back(*m);
    }
    if (out.empty()) throw ConfigError("--model lists no models");
    return out;
}

std::vector<SplitKind> parse_personalization(const std::string& s) {
    if (s == "both") return {SplitKind::PopulationLevel, SplitKind::Hybrid};
    auto k = split_kind_from_string(s);
    if (!k) throw ConfigError("unknown personalization '" + s + "'");
    return {*k};
}

Dataset prepare_features(const Options& o) {
    require_file(o.features, "features");
    auto ds = load_dataset(o.features);
    if (o.no_impute) return ds;
    ds = drop_high_missing(ds, o.drop_threshold, o.per_country_drop);
    return knn_impute(ds, {o.k_neighbors, o.jobs});
}

std::vector<ExperimentResult> run_selected(const Dataset& ds, const Options& o, const ExperimentConfig& ec) {
    const auto approach = approach_from_string(o.approach);
    const bool all = o.approach == "all";
    if (!approach && !all) throw ConfigError("unknown approach '" + o.approach + "'");
    const auto countries = ds.countries();
    auto known = [&](const std::string& c) {
        CountryCode code(c);
        if (std::find(countries.begin(), countries.end(), code) == countries.end())
            throw ConfigError("country " + c + " is not in the features");
        return code;
    };

    std::vector<ExperimentResult> out;
    auto append = [&](std::vector<ExperimentResult> rs) {
        for (auto& r : rs) out.push_back(std::move(r));
    };
    auto per_cell = [&](auto&& fn) {
        for (auto p : ec.personalization)
            for (auto m : ec.models) out.push_back(fn(p, m));
    };

    if (all || *approach == Approach::CountrySpecific) append(run_country_specific(ds, ec));
    if (all || *approach == Approach::AgnosticP1) {
        if (!all && !o.source_country.empty() && !o.test_country.empty()) {
            const auto s = known(o.source_country), t = known(o.test_country);
            per_cell([&](SplitKind p, ModelKind m) { return run_agnostic_phase1(ds, s, t, p, m, ec); });
        } else {
            append(run_agnostic_phase1_matrix(ds, ec));
        }
    }
    if (all || *approach == Approach::AgnosticP2) {
        std::vector<CountryCode> held = countries;
        if (!all && !o.test_country.empty()) held = {known(o.test_country)};
        for (const auto& c : held)
            per_cell([&](SplitKind p, ModelKind m) { return run_agnostic_phase2(ds, c, p, m, ec); });
    }
    if (all || *approach == Approach::MultiCountry) {
        std::vector<bool> variants = all ? std::vector<bool>{false, true} : std::vector<bool>{o.downsample};
        for (bool d : variants)
            per_cell([&](SplitKind p, ModelKind m) { return run_multi_country(ds, d, p, m, ec); });
    }
    return out;
}

void print_table(const std::vector<ExperimentResult>& results) {
    std::cout << "tag,personalization,model,train,test,f1,auroc\n";
    auto cell = [](double m, double s) {
        std::ostringstream os;
        os.setf(std::ios::fixed);
        os.precision(3);
        os << m << " (" << s << ")";
        return os.str();
    };
    for (const auto& r : results) {
        std::string train;
        for (const auto& c : r.cell.train_countries) train += (train.empty() ? "" : "+") + c.str();
        std::cout << r.cell.tag() << ',' << to_string(r.cell.personalization) << ',' << to_string(r.cell.model) << ','
                  << train << ',' << (r.cell.test_country ? r.cell.test_country->str() : "") << ',';
        if (r.skipped)
            std::cout << "skipped,skipped\n";
        else
            std::cout << cell(r.metrics.f1_mean, r.metrics.f1_std) << ',' << cell(r.metrics.auroc_mean, r.metrics.auroc_std)
                      << '\n';
    }
}

int cmd_experiment(const Options& o) {
    if (o.reps < 1) throw ConfigError("--reps must be at least 1");
    if (!(o.ratio > 0 && o.ratio < 1)) throw ConfigError("--ratio must lie in (0, 1)");
    ExperimentConfig ec;
    ec.models = parse_models(o.model);
    ec.personalization = parse_personalization(o.personalization);
    ec.repetitions = o.reps;
    ec.seed = o.seed.value_or(0);
    ec.ratio = o.ratio;
    ec.jobs = o.jobs;
    if (!o.params.empty()) {
        require_file(o.params, "model params");
        try {
            ec.params = ModelParams::from_json(json::parse(read_text_file(o.params)));
        } catch (const json::parse_error& e) {
            throw ConfigError("cannot parse " + o.params + ": " + e.what());
        }
    }

    const auto ds = prepare_features(o);
    json prov{{"command", "experiment"},
              {"approach", o.approach},
              {"downsample", o.downsample},
              {"test_country", o.test_country},
              {"source_country", o.source_country},
              {"impute", !o.no_impute},
              {"drop_threshold", o.drop_threshold},
              {"per_country_drop", o.per_country_drop},
              {"k", o.k_neighbors},
              {"experiment", ec.to_json()}};
    const auto hdr = header(prov);
    spdlog::info("running {} on {} examples ({})", o.approach, ds.size(), hdr);
    const auto results = run_selected(ds, o, ec);

    std::ostringstream csv;
    write_results_csv(csv, results, hdr);
    write_output(o.out.empty() ? "results.csv" : o.out, csv.str());
    if (!o.summary.empty()) {
        auto sj = results_summary_json(results, ec);
        sj["config_hash"] = config_hash(prov);
        write_output(o.summary, sj.dump(2) + "\n");
    }
    if (!o.model_out.empty()) {
        // trained on every example of the dataset with the first run's model seed
        const auto model = train_model(ec.models.front(), make_design_matrix(ds), ec.params, run_seeds(ec.seed, 0).model);
        auto mj = model.to_json();
        mj["config_hash"] = config_hash(prov);
        mj["registry"] = ds.registry.to_json();
        write_text_file(o.model_out, mj.dump());
        spdlog::info("wrote {}", o.model_out);
    }
    std::cout << "# " << hdr << '\n';
    print_table(results);
    return 0;
}

int analyze_anova(const Options& o) {
    require_file(o.features, "features");
    const auto ds = load_dataset(o.features);
    std::vector<CountryCode> countries = ds.countries();
    if (!o.country.empty()) countries = {CountryCode(o.country)};
    const json prov{{"command", "analyze"}, {"kind", "anova"}, {"k", o.top_k}, {"alpha", o.alpha}, {"country", o.country}};
    std::ostringstream os;
    os << "# " << header(prov) << "\ncountry,activity,rank,feature,f,p\n";
    for (const auto& c : countries) {
        const auto ranking = top_features(ds, c, o.top_k, o.alpha);
        for (std::size_t a = 0; a < kNumActivities; ++a)
            for (std::size_t r = 0; r < ranking[a].size(); ++r)
                os << c.str() << ',' << to_string(all_activities()[a]) << ',' << r + 1 << ',' << ranking[a][r].feature
                   << ',' << format_double(ranking[a][r].f) << ',' << format_double(ranking[a][r].p) << '\n';
    }
    write_output(o.out, os.str());
    return 0;
}

int analyze_importance(const Options& o) {
    require_file(o.model_in, "model");
    json mj;
    try {
        mj = json::parse(read_text_file(o.model_in));
    } catch (const json::parse_error& e) {
        throw ConfigError("cannot parse model file " + o.model_in + ": " + e.what());
    }
    const auto model = TrainedModel::from_json(mj);
    FeatureRegistry registry;
    if (!o.registry.empty()) {
        require_file(o.registry, "registry");
        registry = FeatureRegistry::from_json(json::parse(read_text_file(o.registry)));
    } else if (mj.contains("registry")) {
        registry = FeatureRegistry::from_json(mj.at("registry"));
    } else {
        registry = FeatureRegistry::default_registry();
    }
    if (registry.fingerprint() != model.fingerprint())
        throw ConfigError("registry does not match the model's feature layout");
    const auto imp = gini_importance(model);

    const json prov{{"command", "analyze"}, {"kind", "importance"}, {"model_hash", hex64(fnv1a64(mj.dump()))}};
    std::ostringstream os;
    os << "# " << header(prov) << "\nlevel,name,modality,importance\n";
    for (std::size_t i = 0; i < imp.size(); ++i)
        os << "feature," << registry[i].name << ',' << registry[i].modality << ',' << format_double(imp[i]) << '\n';
    for (const auto& [mod, v] : importance_by_modality(registry, imp))
        os << "modality," << mod << ',' << mod << ',' << format_double(v) << '\n';
    write_output(o.out, os.str());
    return 0;
}

int analyze_density(const Options& o) {
    std::optional<Taxonomy> tax_storage;
    const auto& tax = taxonomy_for(o, tax_storage);
    const auto corpus = load_corpus(o.corpus);
    const auto dens = hourly_density(corpus, tax);
    const json prov{{"command", "analyze"}, {"kind", "density"}, {"taxonomy", tax.to_json()}};
    std::ostringstream os;
    os << "# " << header(prov) << "\ncountry,activity,hour,density\n";
    for (const auto& [key, hist] : dens)
        for (std::size_t h = 0; h < hist.size(); ++h)
            os << key.first.str() << ',' << to_string(key.second) << ',' << h << ',' << format_double(hist[h]) << '\n';
    write_output(o.out, os.str());
    return 0;
}

int cmd_analyze(const Options& o) {
    if (o.kind == "anova") return analyze_anova(o);
    if (o.kind == "importance") return analyze_importance(o);
    if (o.kind == "density") return analyze_density(o);
    throw ConfigError("unknown analysis '" + o.kind + "' (anova, importance, density)");
}

void setup_logging() {
    auto logger = spdlog::stderr_color_mt("sensefold");
    spdlog::set_default_logger(logger);
    spdlog::set_pattern("[%l] %v");
    spdlog::set_level(spdlog::level::warn);
    if (const char* env = std::getenv("SENSEFOLD_LOG")) {
        const auto lvl = spdlog::level::from_str(env);
        if (lvl == spdlog::level::off && std::string_view(env) != "off")
            spdlog::warn("SENSEFOLD_LOG={} not recognized", env);
        else
            spdlog::set_level(lvl);
    }
}

}  // namespace

int main(int argc, char** argv) {
    setup_logging();
    Options o;
    CLI::App app{"sensefold: multi-country smartphone activity inference pipeline"};
    app.require_subcommand(1);
    app.add_option("--jobs", o.jobs, "worker threads")->check(CLI::Range(1, 256));

    auto* gen = app.add_subcommand("generate", "generate a synthetic corpus");
    gen->add_option("--config", o.config, "generator config JSON");
    gen->add_option("--out", o.out_dir, "output directory");
    gen->add_option("--seed", o.seed, "override the config seed");
    gen->add_flag("--gzip", o.gzip, "gzip the JSONL files");
    gen->add_option("--jobs", o.jobs)->check(CLI::Range(1, 256));

    auto* feat = app.add_subcommand("featurize", "extract the feature matrix around self-reports");
    feat->add_option("--corpus", o.corpus, "corpus directory");
    feat->add_option("--window", o.window, "window width in minutes");
    feat->add_option("--taxonomy", o.taxonomy, "taxonomy JSON");
    feat->add_option("--out", o.out, "features CSV (registry.json is written beside it)");
    feat->add_option("--jobs", o.jobs)->check(CLI::Range(1, 256));

    auto* exp = app.add_subcommand("experiment", "run generalization experiments");
    exp->add_option("--features", o.features, "features CSV");
    exp->add_option("--approach", o.approach, "country-specific, agnostic-p1, agnostic-p2, multi-country or all");
    exp->add_option("--model", o.model, "comma list of majority, stratified, rf, adaboost, mlp");
    exp->add_option("--personalization", o.personalization, "population, hybrid or both");
    exp->add_flag("--downsample", o.downsample, "equalize country sizes (multi-country)");
    exp->add_option("--test-country", o.test_country);
    exp->add_option("--source-country", o.source_country, "phase I source (with --test-country)");
    exp->add_option("--reps", o.reps, "repetitions");
    exp->add_option("--seed", o.seed, "master seed");
    exp->add_option("--ratio", o.ratio, "train share");
    exp->add_flag("--no-impute", o.no_impute, "use features as given");
    exp->add_option("--drop-threshold", o.drop_threshold, "sensor missingness drop threshold");
    exp->add_flag("--per-country-drop", o.per_country_drop);
    exp->add_option("--k", o.k_neighbors, "kNN imputation neighbours");
    exp->add_option("--params", o.params, "model parameters JSON");
    exp->add_option("--out", o.out, "results CSV");
    exp->add_option("--summary", o.summary, "summary JSON");
    exp->add_option("--model-out", o.model_out, "train the first model on all rows and save it");
    exp->add_option("--jobs", o.jobs)->check(CLI::Range(1, 256));

    auto* ana = app.add_subcommand("analyze", "ANOVA tables, importances and hourly densities");
    ana->add_option("kind", o.kind, "anova, importance or density")->required();
    ana->add_option("--features", o.features);
    ana->add_option("--corpus", o.corpus);
    ana->add_option("--taxonomy", o.taxonomy);
    ana->add_option("--k", o.top_k, "features per activity");
    ana->add_option("--alpha", o.alpha);
    ana->add_option("--country", o.country);
    ana->add_option("--model-in", o.model_in);
    ana->add_option("--registry", o.registry);
    ana->add_option("--out", o.out, "output CSV (stdout when omitted)");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? 0 : 2;
    }

    try {
        if (gen->parsed()) return cmd_generate(o);
        if (feat->parsed()) return cmd_featurize(o);
        if (exp->parsed()) return cmd_experiment(o);
        if (ana->parsed()) return cmd_analyze(o);
    } catch (const ConfigError& e) {
        spdlog::error("{}", e.what());
        return 2;
    } catch (const std::exception& e) {
        spdlog::error("{}", e.what());
        return 1;
    }
    return 2;
}
