#include "sensefold/impute.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>

#include "sensefold/util.hpp"

namespace sensefold {

double MissingnessReport::fraction(std::string_view sensor) const {
    for (const auto& [name, f] : sensor_fraction)
        if (name == sensor) return f;
    throw ConfigError("no sensor '" + std::string(sensor) + "' in missingness report");
}

namespace {

struct SensorColumns {
    std::string sensor;
    std::vector<std::size_t> columns;  // features that can be missing
};

std::vector<SensorColumns> sensor_columns(const FeatureRegistry& reg) {
    std::vector<SensorColumns> out;
    for (const auto& s : reg.sensors()) out.push_back({s, {}});
    for (std::size_t i = 0; i < reg.size(); ++i) {
        if (reg[i].zero_when_absent) continue;
        for (auto& sc : out)
            if (sc.sensor == reg[i].sensor) sc.columns.push_back(i);
    }
    return out;
}

MissingnessReport missingness_over(const Dataset& ds, std::span<const std::size_t> rows) {
    if (rows.empty()) throw DataError("missingness of an empty dataset is undefined");
    MissingnessReport rep;
    const auto n = static_cast<double>(rows.size());
    rep.feature_fraction.assign(ds.registry.size(), 0.0);
    for (auto r : rows) {
        const auto& fv = ds.examples[r].features;
        for (std::size_t i = 0; i < fv.size(); ++i) rep.feature_fraction[i] += fv.missing[i] ? 1.0 : 0.0;
    }
    for (auto& f : rep.feature_fraction) f /= n;
    for (const auto& sc : sensor_columns(ds.registry)) {
        double absent = 0;
        if (!sc.columns.empty()) {
            for (auto r : rows) {
                const auto& fv = ds.examples[r].features;
                const bool all_missing =
                    std::all_of(sc.columns.begin(), sc.columns.end(), [&](std::size_t c) { return fv.is_missing(c); });
                absent += all_missing ? 1.0 : 0.0;
            }
        }
        rep.sensor_fraction.emplace_back(sc.sensor, absent / n);
    }
    return rep;
}

}  // namespace

MissingnessReport modality_missingness(const Dataset& ds) {
    std::vector<std::size_t> rows(ds.size());
    for (std::size_t i = 0; i < rows.size(); ++i) rows[i] = i;
    return missingness_over(ds, rows);
}

Dataset drop_high_missing(const Dataset& ds, double threshold, bool per_country) {
    std::vector<std::string> dropped;
    auto collect = [&](const MissingnessReport& rep) {
        for (const auto& [sensor, f] : rep.sensor_fraction)
            if (f > threshold && std::find(dropped.begin(), dropped.end(), sensor) == dropped.end())
                dropped.push_back(sensor);
    };
    if (per_country) {
        for (const auto& c : ds.countries()) collect(missingness_over(ds, ds.indices_of_country(c)));
    } else {
        collect(modality_missingness(ds));
    }
    if (dropped.empty()) return ds;

    std::vector<std::size_t> keep;
    for (std::size_t i = 0; i < ds.registry.size(); ++i)
        if (std::find(dropped.begin(), dropped.end(), ds.registry[i].sensor) == dropped.end()) keep.push_back(i);

    Dataset out{ds.registry.subset(keep), {}};
    out.examples.reserve(ds.size());
    for (const auto& e : ds.examples) {
        Example x = e;
        x.features = FeatureVector(keep.size());
        for (std::size_t j = 0; j < keep.size(); ++j) {
            x.features.values[j] = e.features.values[keep[j]];
            x.features.missing[j] = e.features.missing[keep[j]];
        }
        out.examples.push_back(std::move(x));
    }
    return out;
}

MaskedMatrix knn_impute_matrix(const MaskedMatrix& m, std::size_t k) {
    if (k == 0) throw ConfigError("kNN imputation needs k >= 1");
    for (std::size_t c = 0; c < m.cols; ++c) {
        bool observed = false;
        for (std::size_t r = 0; r < m.rows && !observed; ++r) observed = !m.is_missing(r, c);
        if (!observed && m.rows > 0) throw DataError("column " + std::to_string(c) + " is never observed");
    }

    MaskedMatrix out = m;
    // zero-filled values and 0/1 presence, so the distance loop has no branches
    std::vector<double> val(m.rows * m.cols), present(m.rows * m.cols);
    for (std::size_t i = 0; i < val.size(); ++i) {
        present[i] = m.missing[i] ? 0.0 : 1.0;
        val[i] = m.missing[i] ? 0.0 : m.values[i];
    }
    std::vector<std::pair<double, std::size_t>> order;
    order.reserve(m.rows);
    const double total_cols = static_cast<double>(m.cols);
    const std::size_t head = std::max<std::size_t>(64, 8 * k);

    for (std::size_t r = 0; r < m.rows; ++r) {
        bool any_missing = false;
        for (std::size_t c = 0; c < m.cols && !any_missing; ++c) any_missing = m.is_missing(r, c);
        if (!any_missing) continue;

        const double* vr = &val[r * m.cols];
        const double* pr = &present[r * m.cols];
        order.clear();
        for (std::size_t o = 0; o < m.rows; ++o) {
            if (o == r) continue;
            const double* vo = &val[o * m.cols];
            const double* po = &present[o * m.cols];
            double ss = 0, shared = 0;
            for (std::size_t c = 0; c < m.cols; ++c) {
                const double both = pr[c] * po[c];
                const double d = (vr[c] - vo[c]) * both;
                ss += d * d;
                shared += both;
            }
            const double dist = shared == 0 ? std::numeric_limits<double>::infinity()
                                            : std::sqrt(total_cols / shared * ss);
            order.emplace_back(dist, o);
        }
        // neighbours are usually found near the front; sort the rest only when needed
        std::size_t sorted = std::min(head, order.size());
        std::partial_sort(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(sorted), order.end());

        for (std::size_t c = 0; c < m.cols; ++c) {
            if (!m.is_missing(r, c)) continue;
            double sum = 0;
            std::size_t used = 0;
            for (std::size_t i = 0; i < order.size() && used < k; ++i) {
                if (i == sorted) {
                    std::sort(order.begin() + static_cast<std::ptrdiff_t>(sorted), order.end());
                    sorted = order.size();
                }
                const std::size_t o = order[i].second;
                if (m.is_missing(o, c)) continue;
                sum += m.at(o, c);
                ++used;
            }
            out.at(r, c) = sum / static_cast<double>(used);
        }
    }
    std::fill(out.missing.begin(), out.missing.end(), 0);
    return out;
}

Dataset knn_impute(const Dataset& ds, const KnnImputeOptions& opts) {
    Dataset out = ds;
    const auto countries = ds.countries();
    parallel_for(countries.size(), opts.jobs, [&](std::size_t ci) {
        const auto rows = ds.indices_of_country(countries[ci]);
        MaskedMatrix m;
        m.rows = rows.size();
        m.cols = ds.registry.size();
        m.values.resize(m.rows * m.cols);
        m.missing.resize(m.rows * m.cols);
        for (std::size_t i = 0; i < rows.size(); ++i) {
            const auto& fv = ds.examples[rows[i]].features;
            std::copy(fv.values.begin(), fv.values.end(), m.values.begin() + static_cast<std::ptrdiff_t>(i * m.cols));
            std::copy(fv.missing.begin(), fv.missing.end(), m.missing.begin() + static_cast<std::ptrdiff_t>(i * m.cols));
        }
        for (std::size_t c = 0; c < m.cols; ++c) {
            bool observed = false;
            for (std::size_t r = 0; r < m.rows && !observed; ++r) observed = !m.is_missing(r, c);
            if (!observed)
                throw DataError("feature '" + ds.registry[c].name + "' is missing in every row of partition " +
                                countries[ci].str());
        }
        const auto imputed = knn_impute_matrix(m, opts.k);
        for (std::size_t i = 0; i < rows.size(); ++i) {
            auto& fv = out.examples[rows[i]].features;
            std::copy_n(imputed.values.begin() + static_cast<std::ptrdiff_t>(i * m.cols), m.cols, fv.values.begin());
            std::fill(fv.missing.begin(), fv.missing.end(), 0);
        }
    });
    return out;
}

}  // namespace sensefold
