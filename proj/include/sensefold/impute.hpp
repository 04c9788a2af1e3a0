#pragma once

#include <span>
#include <string>
#include <utility>
#include <vector>

#include "sensefold/featurize.hpp"

namespace sensefold {

struct MissingnessReport {
    /// Per sensor (registry order): share of examples where every feature of that sensor that can be
    /// missing is missing. Sensors made only of zero-when-absent counts report 0.
    std::vector<std::pair<std::string, double>> sensor_fraction;
    std::vector<double> feature_fraction;  // aligned with the registry

    double fraction(std::string_view sensor) const;
};

MissingnessReport modality_missingness(const Dataset& ds);

/// Removes every feature of sensors whose missing share is strictly above `threshold`.
/// With `per_country` the share is computed within each country and a sensor is dropped when any
/// country exceeds the threshold.
Dataset drop_high_missing(const Dataset& ds, double threshold = 0.70, bool per_country = false);

struct KnnImputeOptions {
    std::size_t k = 5;
    int jobs = 1;
};

/// Dense row-major matrix with a missing mask, the unit kNN imputation works on.
struct MaskedMatrix {
    std::size_t rows = 0, cols = 0;
    std::vector<double> values;
    std::vector<std::uint8_t> missing;

    double& at(std::size_t r, std::size_t c) { return values[r * cols + c]; }
    double at(std::size_t r, std::size_t c) const { return values[r * cols + c]; }
    bool is_missing(std::size_t r, std::size_t c) const { return missing[r * cols + c] != 0; }
};

/// Fills each missing cell with the unweighted mean of that column over the k nearest rows that
/// observe it. Distance: Euclidean over co-observed columns scaled by sqrt(cols / co-observed);
/// ties go to the lower row index. Throws DataError naming the column when it is never observed.
MaskedMatrix knn_impute_matrix(const MaskedMatrix& m, std::size_t k);

/// Imputes each country partition independently; the result has no missing cells.
Dataset knn_impute(const Dataset& ds, const KnnImputeOptions& opts = {});

}  // namespace sensefold
