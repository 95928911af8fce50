#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "chf/correlations.hpp"
#include "chf/matrix.hpp"
#include "chf/record.hpp"

namespace chf {

/// Closed acceptance ranges for dryout records; defaults follow the
/// correlation validity envelope, plus the outlet-quality threshold that
/// marks the dryout regime.
struct FilterCriteria {
    double d_min_m = ValidityRanges::d_min_m;
    double d_max_m = ValidityRanges::d_max_m;
    double l_min_m = ValidityRanges::l_min_m;
    double l_max_m = ValidityRanges::l_max_m;
    double p_min_mpa = ValidityRanges::p_min_mpa;
    double p_max_mpa = ValidityRanges::p_max_mpa;
    double g_min = ValidityRanges::g_min;
    double g_max = ValidityRanges::g_max;
    double min_outlet_quality = 0.2;

    void validate() const;
};

/// Per-criterion rejection tallies; a record failing several criteria
/// increments each of them, so the per-criterion counts can exceed removed.
struct FilterCounts {
    std::size_t kept = 0;
    std::size_t removed = 0;
    std::size_t by_diameter = 0;
    std::size_t by_heated_length = 0;
    std::size_t by_pressure = 0;
    std::size_t by_mass_flux = 0;
    std::size_t by_outlet_quality = 0;
};

/// Keep records with every parameter inside its closed range and outlet
/// quality at or above the threshold; input order preserved.
std::vector<ChfRecord> filter_do(const std::vector<ChfRecord>& records,
                                 const FilterCriteria& criteria = {},
                                 FilterCounts* counts = nullptr);

/// Whether a record sits in the boiling-water-reactor pressure window
/// [6.9, 7.2] MPa.
bool bwr_window(const ChfRecord& record);

/// Keep records in the boiling-water-reactor pressure window [6.9, 7.2] MPa.
std::vector<ChfRecord> bwr_filter(const std::vector<ChfRecord>& records);

/// Disjoint index lists into a frozen record array.
struct DatasetSplit {
    std::vector<std::size_t> train_idx;
    std::vector<std::size_t> val_idx;
    std::vector<std::size_t> test_idx;
    std::uint64_t seed = 0;
    double f_train = 0.8;
    double f_val = 0.1;
    double f_test = 0.1;
};

/// Seeded shuffle then contiguous slicing. Validation and test sizes are
/// round(fraction * n); train takes the remainder, so the limited scenario
/// nests inside the plentiful one.
DatasetSplit shuffle_split(std::size_t n_records, double f_train, double f_val,
                           double f_test, std::uint64_t seed);

/// Truncate the training partition to its first n entries, leaving the
/// validation and test partitions untouched.
DatasetSplit limit_train(const DatasetSplit& split, std::size_t n = 9);

std::string split_to_json(const DatasetSplit& split);
void write_split_json(const std::string& path, const DatasetSplit& split);

/// Parse a split previously produced by split_to_json. The origin string is
/// used in error messages.
DatasetSplit split_from_json(const std::string& text, const std::string& origin = "split");
DatasetSplit read_split_json(const std::string& path);

/// Whether standardization statistics come from all records or only the
/// training partition.
enum class ScalerScope { Full, TrainOnly };

std::string_view to_string(ScalerScope scope);
ScalerScope scaler_scope_from_string(std::string_view name);

/// Z-score statistics for the feature block and the regression target.
struct StandardScaler {
    std::vector<std::string> feature_names;
    std::vector<double> means;
    std::vector<double> stds;
    double target_mean = 0.0;
    double target_std = 1.0;
    ScalerScope scope = ScalerScope::Full;

    Matrix transform(const Matrix& x) const;
    Matrix inverse_transform(const Matrix& x) const;
    std::vector<double> transform_target(const std::vector<double>& y) const;
    std::vector<double> inverse_transform_target(const std::vector<double>& y) const;

    /// De-standardize a single predicted mean.
    double inverse_target_mean(double standardized) const;
    /// De-standardize a predictive standard deviation (affine scale only).
    double inverse_target_std(double standardized) const;

    std::string to_json() const;
    static StandardScaler from_json(const std::string& text, const std::string& origin);
};

/// Fit Z-score statistics on x and y, over all rows or the split's
/// training rows. Population standard deviations (divisor n).
StandardScaler fit_scaler(const Matrix& x, const std::vector<double>& y,
                          const std::vector<std::string>& feature_names,
                          ScalerScope scope, const DatasetSplit* split = nullptr);

/// The model input block: D, L, P, G, dh_sub as one row per record.
Matrix features_from_records(const std::vector<ChfRecord>& records);
const std::vector<std::string>& feature_names();
std::vector<double> target_from_records(const std::vector<ChfRecord>& records);

/// CSV ingest with the exact header
/// d_m,l_m,p_mpa,g_kg_m2_s,dh_sub_kj_kg,t_in_c,x_e_out,chf_kw_m2
/// (t_in_c may be empty). Warnings and the row count go to log when given.
std::vector<ChfRecord> load_records_csv(const std::string& path,
                                        std::ostream* log = nullptr);
std::vector<ChfRecord> records_from_csv_text(const std::string& text,
                                             const std::string& origin,
                                             std::ostream* log = nullptr);
void write_records_csv(const std::string& path, const std::vector<ChfRecord>& records);

/// Draw records uniformly inside the filter envelope, price them with the
/// base correlation through the heat balance, and perturb the flux by a
/// relative Gaussian noise term. Draws whose outlet quality falls below
/// the dryout threshold are rejected and redrawn.
std::vector<ChfRecord> synth_generate(std::size_t n, std::uint64_t seed,
                                      BaseModelKind base, double noise_rel);

}  // namespace chf
