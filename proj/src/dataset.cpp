#include "chf/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <ostream>

#include "chf/csv.hpp"
#include "chf/errors.hpp"
#include "chf/properties.hpp"
#include "chf/rng.hpp"
#include "json.hpp"

namespace chf {

namespace {

constexpr const char* kRecordHeader[] = {"d_m",          "l_m",    "p_mpa",
                                         "g_kg_m2_s",    "dh_sub_kj_kg", "t_in_c",
                                         "x_e_out",      "chf_kw_m2"};
constexpr std::size_t kRecordCols = 8;

void check_ordered(const char* name, double lo, double hi) {
    if (!(lo < hi)) {
        throw ValidationError(std::string("filter range ") + name + " must have lower < upper, got [" +
                              format_double(lo) + ", " + format_double(hi) + "]");
    }
}

bool in_closed(double v, double lo, double hi) { return v >= lo && v <= hi; }

void require_positive_finite(double v, const char* field, std::size_t row,
                             const std::string& origin) {
    if (!std::isfinite(v) || v <= 0.0) {
        throw ValidationError(origin + ": row " + std::to_string(row) + ": " + field +
                              " must be finite and strictly positive, got " +
                              format_double(v));
    }
}

void require_finite(double v, const char* field, std::size_t row,
                    const std::string& origin) {
    if (!std::isfinite(v)) {
        throw ValidationError(origin + ": row " + std::to_string(row) + ": " + field +
                              " must be finite, got " + format_double(v));
    }
}

}  // namespace

void FilterCriteria::validate() const {
    check_ordered("diameter", d_min_m, d_max_m);
    check_ordered("heated_length", l_min_m, l_max_m);
    check_ordered("pressure", p_min_mpa, p_max_mpa);
    check_ordered("mass_flux", g_min, g_max);
    if (!std::isfinite(min_outlet_quality)) {
        throw ValidationError("min_outlet_quality must be finite");
    }
}

std::vector<ChfRecord> filter_do(const std::vector<ChfRecord>& records,
                                 const FilterCriteria& criteria, FilterCounts* counts) {
    criteria.validate();
    FilterCounts local;
    std::vector<ChfRecord> kept;
    kept.reserve(records.size());
    for (const ChfRecord& r : records) {
        bool ok = true;
        if (!in_closed(r.d_m, criteria.d_min_m, criteria.d_max_m)) {
            ++local.by_diameter;
            ok = false;
        }
        if (!in_closed(r.l_m, criteria.l_min_m, criteria.l_max_m)) {
            ++local.by_heated_length;
            ok = false;
        }
        if (!in_closed(r.p_mpa, criteria.p_min_mpa, criteria.p_max_mpa)) {
            ++local.by_pressure;
            ok = false;
        }
        if (!in_closed(r.g_kg_m2_s, criteria.g_min, criteria.g_max)) {
            ++local.by_mass_flux;
            ok = false;
        }
        if (!(r.x_e_out >= criteria.min_outlet_quality)) {
            ++local.by_outlet_quality;
            ok = false;
        }
        if (ok) {
            kept.push_back(r);
        } else {
            ++local.removed;
        }
    }
    local.kept = kept.size();
    if (counts != nullptr) *counts = local;
    return kept;
}

bool bwr_window(const ChfRecord& record) {
    return record.p_mpa >= 6.9 && record.p_mpa <= 7.2;
}

std::vector<ChfRecord> bwr_filter(const std::vector<ChfRecord>& records) {
    std::vector<ChfRecord> kept;
    for (const ChfRecord& r : records) {
        if (bwr_window(r)) kept.push_back(r);
    }
    return kept;
}

DatasetSplit shuffle_split(std::size_t n_records, double f_train, double f_val,
                           double f_test, std::uint64_t seed) {
    if (n_records < 10) {
        throw ValidationError("shuffle_split needs at least 10 records, got " +
                              std::to_string(n_records));
    }
    for (double f : {f_train, f_val, f_test}) {
        if (!(f > 0.0 && f < 1.0)) {
            throw ValidationError("split fractions must lie in (0, 1), got " +
                                  format_double(f));
        }
    }
    if (std::abs(f_train + f_val + f_test - 1.0) > 1e-9) {
        throw ValidationError("split fractions must sum to 1, got " +
                              format_double(f_train + f_val + f_test));
    }

    double n = static_cast<double>(n_records);
    auto n_val = static_cast<std::size_t>(std::llround(f_val * n));
    auto n_test = static_cast<std::size_t>(std::llround(f_test * n));
    if (n_val + n_test >= n_records) {
        throw ValidationError("split leaves no training records (" +
                              std::to_string(n_val) + " val + " + std::to_string(n_test) +
                              " test of " + std::to_string(n_records) + ")");
    }
    std::size_t n_train = n_records - n_val - n_test;

    std::vector<std::size_t> perm = shuffled_indices(n_records, seed);
    DatasetSplit split;
    split.seed = seed;
    split.f_train = f_train;
    split.f_val = f_val;
    split.f_test = f_test;
    split.train_idx.assign(perm.begin(), perm.begin() + static_cast<long>(n_train));
    split.val_idx.assign(perm.begin() + static_cast<long>(n_train),
                         perm.begin() + static_cast<long>(n_train + n_val));
    split.test_idx.assign(perm.begin() + static_cast<long>(n_train + n_val), perm.end());
    return split;
}

DatasetSplit limit_train(const DatasetSplit& split, std::size_t n) {
    if (n == 0) {
        throw ValidationError("limited training partition must be nonempty");
    }
    if (n > split.train_idx.size()) {
        throw ValidationError("cannot limit training partition to " + std::to_string(n) +
                              " points; it holds " + std::to_string(split.train_idx.size()));
    }
    DatasetSplit out = split;
    out.train_idx.resize(n);
    return out;
}

std::string split_to_json(const DatasetSplit& split) {
    nlohmann::ordered_json j;
    j["seed"] = split.seed;
    j["fractions"] = {{"train", split.f_train}, {"val", split.f_val},
                      {"test", split.f_test}};
    j["train_idx"] = split.train_idx;
    j["val_idx"] = split.val_idx;
    j["test_idx"] = split.test_idx;
    return j.dump(2);
}

void write_split_json(const std::string& path, const DatasetSplit& split) {
    write_text_file(path, split_to_json(split) + "\n");
}

DatasetSplit split_from_json(const std::string& text, const std::string& origin) {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(text);
    } catch (const nlohmann::json::exception& e) {
        throw SchemaError(origin + ": " + e.what());
    }
    DatasetSplit split;
    try {
        split.seed = j.at("seed").get<std::uint64_t>();
        split.f_train = j.at("fractions").at("train").get<double>();
        split.f_val = j.at("fractions").at("val").get<double>();
        split.f_test = j.at("fractions").at("test").get<double>();
        split.train_idx = j.at("train_idx").get<std::vector<std::size_t>>();
        split.val_idx = j.at("val_idx").get<std::vector<std::size_t>>();
        split.test_idx = j.at("test_idx").get<std::vector<std::size_t>>();
    } catch (const nlohmann::json::exception& e) {
        throw SchemaError(origin + ": " + e.what());
    }
    return split;
}

DatasetSplit read_split_json(const std::string& path) {
    return split_from_json(read_text_file(path), path);
}

std::string_view to_string(ScalerScope scope) {
    return scope == ScalerScope::Full ? "full" : "train_only";
}

ScalerScope scaler_scope_from_string(std::string_view name) {
    if (name == "full") return ScalerScope::Full;
    if (name == "train_only") return ScalerScope::TrainOnly;
    throw ValidationError("unknown scaler scope '" + std::string(name) +
                          "'; expected full or train_only");
}

Matrix StandardScaler::transform(const Matrix& x) const {
    if (x.cols() != means.size()) {
        throw ValidationError("scaler fitted on " + std::to_string(means.size()) +
                              " features, got " + std::to_string(x.cols()));
    }
    Matrix out(x.rows(), x.cols());
    for (std::size_t i = 0; i < x.rows(); ++i) {
        for (std::size_t j = 0; j < x.cols(); ++j) {
            out(i, j) = (x(i, j) - means[j]) / stds[j];
        }
    }
    return out;
}

Matrix StandardScaler::inverse_transform(const Matrix& x) const {
    if (x.cols() != means.size()) {
        throw ValidationError("scaler fitted on " + std::to_string(means.size()) +
                              " features, got " + std::to_string(x.cols()));
    }
    Matrix out(x.rows(), x.cols());
    for (std::size_t i = 0; i < x.rows(); ++i) {
        for (std::size_t j = 0; j < x.cols(); ++j) {
            out(i, j) = x(i, j) * stds[j] + means[j];
        }
    }
    return out;
}

std::vector<double> StandardScaler::transform_target(const std::vector<double>& y) const {
    std::vector<double> out(y.size());
    for (std::size_t i = 0; i < y.size(); ++i) out[i] = (y[i] - target_mean) / target_std;
    return out;
}

std::vector<double> StandardScaler::inverse_transform_target(
    const std::vector<double>& y) const {
    std::vector<double> out(y.size());
    for (std::size_t i = 0; i < y.size(); ++i) out[i] = y[i] * target_std + target_mean;
    return out;
}

double StandardScaler::inverse_target_mean(double standardized) const {
    return standardized * target_std + target_mean;
}

double StandardScaler::inverse_target_std(double standardized) const {
    return standardized * target_std;
}

std::string StandardScaler::to_json() const {
    nlohmann::ordered_json j;
    j["feature_names"] = feature_names;
    j["means"] = means;
    j["stds"] = stds;
    j["target_mean"] = target_mean;
    j["target_std"] = target_std;
    j["scope"] = std::string(to_string(scope));
    return j.dump(2);
}

StandardScaler StandardScaler::from_json(const std::string& text,
                                         const std::string& origin) {
    try {
        nlohmann::json j = nlohmann::json::parse(text);
        StandardScaler s;
        s.feature_names = j.at("feature_names").get<std::vector<std::string>>();
        s.means = j.at("means").get<std::vector<double>>();
        s.stds = j.at("stds").get<std::vector<double>>();
        s.target_mean = j.at("target_mean").get<double>();
        s.target_std = j.at("target_std").get<double>();
        s.scope = scaler_scope_from_string(j.at("scope").get<std::string>());
        if (s.means.size() != s.feature_names.size() ||
            s.stds.size() != s.feature_names.size()) {
            throw SchemaError(origin + ": scaler arrays disagree in length");
        }
        for (double sd : s.stds) {
            if (!(sd > 0.0)) throw SchemaError(origin + ": scaler std must be positive");
        }
        if (!(s.target_std > 0.0)) {
            throw SchemaError(origin + ": scaler target std must be positive");
        }
        return s;
    } catch (const nlohmann::json::exception& e) {
        throw SchemaError(origin + ": " + e.what());
    }
}

StandardScaler fit_scaler(const Matrix& x, const std::vector<double>& y,
                          const std::vector<std::string>& feature_names,
                          ScalerScope scope, const DatasetSplit* split) {
    if (x.cols() != feature_names.size()) {
        throw ValidationError("fit_scaler: " + std::to_string(x.cols()) +
                              " feature columns vs " +
                              std::to_string(feature_names.size()) + " names");
    }
    if (x.rows() != y.size()) {
        throw ValidationError("fit_scaler: " + std::to_string(x.rows()) +
                              " feature rows vs " + std::to_string(y.size()) + " targets");
    }
    std::vector<std::size_t> rows;
    if (scope == ScalerScope::TrainOnly) {
        if (split == nullptr) {
            throw ValidationError("fit_scaler: scope train_only requires a split");
        }
        rows = split->train_idx;
        for (std::size_t r : rows) {
            if (r >= x.rows()) {
                throw ValidationError("fit_scaler: split index " + std::to_string(r) +
                                      " out of range for " + std::to_string(x.rows()) +
                                      " rows");
            }
        }
    } else {
        rows.resize(x.rows());
        std::iota(rows.begin(), rows.end(), 0);
    }
    if (rows.empty()) throw ValidationError("fit_scaler: no rows in scope");

    StandardScaler s;
    s.feature_names = feature_names;
    s.scope = scope;
    double n = static_cast<double>(rows.size());

    s.means.resize(x.cols());
    s.stds.resize(x.cols());
    for (std::size_t j = 0; j < x.cols(); ++j) {
        double sum = 0.0;
        for (std::size_t r : rows) sum += x(r, j);
        double mean = sum / n;
        double ss = 0.0;
        for (std::size_t r : rows) ss += (x(r, j) - mean) * (x(r, j) - mean);
        double sd = std::sqrt(ss / n);
        if (!(sd > 0.0)) {
            throw ValidationError("fit_scaler: feature '" + feature_names[j] +
                                  "' has zero variance in scope " +
                                  std::string(to_string(scope)));
        }
        s.means[j] = mean;
        s.stds[j] = sd;
    }

    double t_sum = 0.0;
    for (std::size_t r : rows) t_sum += y[r];
    s.target_mean = t_sum / n;
    double t_ss = 0.0;
    for (std::size_t r : rows) t_ss += (y[r] - s.target_mean) * (y[r] - s.target_mean);
    s.target_std = std::sqrt(t_ss / n);
    if (!(s.target_std > 0.0)) {
        throw ValidationError("fit_scaler: target has zero variance in scope " +
                              std::string(to_string(scope)));
    }
    return s;
}

const std::vector<std::string>& feature_names() {
    static const std::vector<std::string> names = {"d_m", "l_m", "p_mpa", "g_kg_m2_s",
                                                   "dh_sub_kj_kg"};
    return names;
}

Matrix features_from_records(const std::vector<ChfRecord>& records) {
    Matrix x(records.size(), 5);
    for (std::size_t i = 0; i < records.size(); ++i) {
        x(i, 0) = records[i].d_m;
        x(i, 1) = records[i].l_m;
        x(i, 2) = records[i].p_mpa;
        x(i, 3) = records[i].g_kg_m2_s;
        x(i, 4) = records[i].dh_sub_kj_kg;
    }
    return x;
}

std::vector<double> target_from_records(const std::vector<ChfRecord>& records) {
    std::vector<double> y(records.size());
    for (std::size_t i = 0; i < records.size(); ++i) y[i] = records[i].chf_kw_m2;
    return y;
}

std::vector<ChfRecord> records_from_csv_text(const std::string& text,
                                             const std::string& origin,
                                             std::ostream* log) {
    CsvTable table = parse_csv(text, origin);
    if (table.header.size() != kRecordCols) {
        throw SchemaError(origin + ": expected " + std::to_string(kRecordCols) +
                          " columns, got " + std::to_string(table.header.size()));
    }
    for (std::size_t c = 0; c < kRecordCols; ++c) {
        if (table.header[c] != kRecordHeader[c]) {
            throw SchemaError(origin + ": column " + std::to_string(c) + " must be '" +
                              kRecordHeader[c] + "', got '" + table.header[c] + "'");
        }
    }

    std::vector<ChfRecord> records;
    records.reserve(table.rows.size());
    for (std::size_t i = 0; i < table.rows.size(); ++i) {
        const auto& row = table.rows[i];
        std::size_t rown = i + 1;
        ChfRecord r;
        r.d_m = parse_cell(row[0], rown, "d_m", origin);
        r.l_m = parse_cell(row[1], rown, "l_m", origin);
        r.p_mpa = parse_cell(row[2], rown, "p_mpa", origin);
        r.g_kg_m2_s = parse_cell(row[3], rown, "g_kg_m2_s", origin);
        r.dh_sub_kj_kg = parse_cell(row[4], rown, "dh_sub_kj_kg", origin);
        if (!row[5].empty()) {
            r.t_in_c = parse_cell(row[5], rown, "t_in_c", origin);
            require_finite(*r.t_in_c, "t_in_c", rown, origin);
        }
        r.x_e_out = parse_cell(row[6], rown, "x_e_out", origin);
        r.chf_kw_m2 = parse_cell(row[7], rown, "chf_kw_m2", origin);

        require_positive_finite(r.d_m, "d_m", rown, origin);
        require_positive_finite(r.l_m, "l_m", rown, origin);
        require_positive_finite(r.p_mpa, "p_mpa", rown, origin);
        require_positive_finite(r.g_kg_m2_s, "g_kg_m2_s", rown, origin);
        require_positive_finite(r.chf_kw_m2, "chf_kw_m2", rown, origin);
        require_finite(r.x_e_out, "x_e_out", rown, origin);
        if (!std::isfinite(r.dh_sub_kj_kg) || r.dh_sub_kj_kg < 0.0) {
            throw ValidationError(origin + ": row " + std::to_string(rown) +
                                  ": dh_sub_kj_kg must be finite and non-negative, got " +
                                  format_double(r.dh_sub_kj_kg));
        }
        records.push_back(r);
    }

    if (log != nullptr) {
        *log << origin << ": loaded " << records.size() << " records\n";
        if (records.empty()) {
            *log << origin << ": warning: data section is empty\n";
        }
    }
    return records;
}

std::vector<ChfRecord> load_records_csv(const std::string& path, std::ostream* log) {
    return records_from_csv_text(read_text_file(path), path, log);
}

void write_records_csv(const std::string& path, const std::vector<ChfRecord>& records) {
    CsvTable table;
    table.header.assign(kRecordHeader, kRecordHeader + kRecordCols);
    for (const ChfRecord& r : records) {
        table.rows.push_back({format_double(r.d_m), format_double(r.l_m),
                              format_double(r.p_mpa), format_double(r.g_kg_m2_s),
                              format_double(r.dh_sub_kj_kg),
                              r.t_in_c ? format_double(*r.t_in_c) : std::string(),
                              format_double(r.x_e_out), format_double(r.chf_kw_m2)});
    }
    write_csv(path, table);
}

std::vector<ChfRecord> synth_generate(std::size_t n, std::uint64_t seed,
                                      BaseModelKind base, double noise_rel) {
    if (base == BaseModelKind::NoBase) {
        throw ValidationError("synth_generate requires a base correlation");
    }
    if (!(noise_rel >= 0.0)) {
        throw ValidationError("noise_rel must be non-negative, got " +
                              format_double(noise_rel));
    }
    if (n == 0) return {};

    const SaturationTable& table = SaturationTable::builtin();
    Rng rng(seed);
    std::vector<ChfRecord> out;
    out.reserve(n);
    std::size_t draws = 0;
    const std::size_t budget = 100 * n;
    while (out.size() < n) {
        if (draws >= budget) {
            throw RunError("synthetic generation accepted " + std::to_string(out.size()) +
                           " of " + std::to_string(draws) +
                           " draws (acceptance below 1%); parameter ranges are "
                           "misconfigured for the dryout threshold");
        }
        ++draws;
        ChfRecord r;
        r.d_m = rng.uniform(ValidityRanges::d_min_m, ValidityRanges::d_max_m);
        r.l_m = rng.uniform(ValidityRanges::l_min_m, ValidityRanges::l_max_m);
        r.p_mpa = rng.uniform(ValidityRanges::p_min_mpa, ValidityRanges::p_max_mpa);
        r.g_kg_m2_s = rng.uniform(ValidityRanges::g_min, ValidityRanges::g_max);
        r.dh_sub_kj_kg = rng.uniform(10.0, 800.0);

        double q = 0.0;
        try {
            q = hbm_solve(base, r, table).chf_kw_m2;
        } catch (const RunError&) {
            continue;
        }
        double x_e = quality_from_heat_balance(q, r, table);
        if (x_e < 0.2) continue;

        double factor = 1.0 + rng.normal(0.0, noise_rel);
        if (factor < 1e-3) factor = 1e-3;
        r.x_e_out = x_e;
        r.chf_kw_m2 = q * factor;
        out.push_back(r);
    }
    return out;
}

}  // namespace chf
