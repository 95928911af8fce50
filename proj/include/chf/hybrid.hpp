#pragma once

#include <cstdint>
#include <functional>
#include <mutex>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "chf/bnn.hpp"
#include "chf/correlations.hpp"
#include "chf/dataset.hpp"
#include "chf/dgp.hpp"
#include "chf/ensemble.hpp"
#include "chf/evalsuite.hpp"
#include "chf/nncore.hpp"
#include "chf/prediction.hpp"
#include "chf/record.hpp"

namespace chf {

/// Which regression backend an experiment trains.
enum class Method { Ensemble, Bnn, Dgp };

std::string_view to_string(Method method);
Method method_from_string(std::string_view name);

/// Training-data richness: the full training partition, or only its first
/// few points.
enum class Scenario { Plentiful, Limited };

std::string_view to_string(Scenario scenario);
Scenario scenario_from_string(std::string_view name);

/// One record's journey through the residual pipeline.
struct HybridSample {
    std::size_t record_index = 0;      ///< into the source record array
    double measured_kw_m2 = 0.0;       ///< y
    double base_estimate_kw_m2 = 0.0;  ///< base-model CHF, 0 when no base is used
    double residual_kw_m2 = 0.0;       ///< y minus the base estimate, exactly
    bool has_prediction = false;
    double predicted_residual_kw_m2 = 0.0;
    double final_prediction_kw_m2 = 0.0;  ///< base estimate plus predicted residual
};

/// Thread-safe memo of heat-balance base estimates keyed by a content hash
/// of the record fields and the correlation name. Read-mostly: concurrent
/// experiments insert under a mutex and reuse each other's values.
class HbmCache {
 public:
    /// Cached hbm_solve result for the record under the given correlation.
    double base_estimate(BaseModelKind base, const ChfRecord& record);
    std::size_t size() const;

 private:
    mutable std::mutex mutex_;
    std::unordered_map<std::string, double> values_;
};

/// Residual targets for a record array, order preserved. Records whose
/// base estimate failed are listed separately and carry a zero sample.
struct ResidualDataset {
    std::vector<HybridSample> samples;
    std::vector<std::size_t> failed_indices;
    std::vector<std::string> failure_messages;
};

/// Base estimates via the heat balance and residuals per definition; with
/// no base model the estimate is 0 and the residual is the measured CHF.
/// Per-record solver failures are collected; more than 1% of the records
/// failing aborts with an error naming the first offenders.
ResidualDataset make_residual_dataset(const std::vector<ChfRecord>& records,
                                      BaseModelKind base, HbmCache* cache = nullptr);

/// Everything one experiment needs: backend, base model, data scenario,
/// seeds, and the backend hyperparameters.
struct ExperimentConfig {
    Method method = Method::Ensemble;
    BaseModelKind base = BaseModelKind::NoBase;
    Scenario scenario = Scenario::Plentiful;
    std::size_t limited_n = 9;  ///< training points kept in the limited scenario
    ScalerScope scaler_scope = ScalerScope::Full;
    std::uint64_t train_seed = 0;
    std::uint64_t sample_seed = 0;

    MlpConfig mlp;  ///< ensemble member architecture
    int n_members = 20;
    int n_threads = 1;  ///< ensemble member training pool
    BnnConfig bnn;
    int bnn_samples = 200;
    DgpConfig dgp;
    TrainConfig train;  ///< shared optimizer settings; its seed field is
                        ///< overridden by train_seed

    /// "method_base_scenario", e.g. "ensemble_biasi_limited".
    std::string name() const;
};

/// One experiment's outputs: per-point predictions in physical units,
/// metrics on the final CHF, calibration artifacts, and a manifest that
/// records every seed and decision flag.
struct ExperimentResult {
    ExperimentConfig config;
    std::vector<std::size_t> test_indices;
    std::vector<HybridSample> test_samples;
    std::vector<PredictionSet> predictions;  ///< final CHF, kW/m^2
    MetricsReport metrics;
    std::optional<CalibrationCurve> calibration;  ///< absent when any std is 0
    RstdDistribution rstd;
    std::vector<std::size_t> hbm_failed;  ///< record indices dropped from the split
    std::string model_json;               ///< trained backend, serialized
    std::string manifest_json;
};

/// Trains on physical-unit features and residual targets (standardized
/// internally via the scaler) and returns de-standardized residual
/// predictions for the test block. run_experiment uses a backend dispatch
/// by default; tests can substitute stubs.
using ResidualRunner = std::function<std::vector<PredictionSet>(
    const ExperimentConfig& config, const Matrix& x_train,
    const std::vector<double>& r_train, const Matrix& x_val,
    const std::vector<double>& r_val, const Matrix& x_test,
    const StandardScaler& scaler, std::string* model_json)>;

/// Full residual-learning pass: base estimates, residual targets with
/// their own scaler, backend training on the scenario's training
/// partition, residual prediction on the test partition, per-sample base
/// addition, and metrics on the final CHF. Errors carry a stage tag.
ExperimentResult run_experiment(const ExperimentConfig& config,
                                const std::vector<ChfRecord>& records,
                                const DatasetSplit& split, HbmCache* cache = nullptr,
                                const ResidualRunner* runner = nullptr);

/// The comparison-table header shared by run_suite and the report command.
extern const char* const kComparisonHeader;

/// One row of a suite: configuration plus either a result or an error.
struct SuiteRun {
    ExperimentConfig config;
    bool ok = false;
    std::string error;
    ExperimentResult result;
};

/// Hyperparameters shared by every run of a suite.
struct SuiteOptions {
    double f_train = 0.8;
    double f_val = 0.1;
    double f_test = 0.1;
    std::size_t limited_n = 9;
    ScalerScope scaler_scope = ScalerScope::Full;
    MlpConfig mlp;
    int n_members = 20;
    int n_threads = 1;
    BnnConfig bnn;
    int bnn_samples = 200;
    DgpConfig dgp;
    TrainConfig train;
    int bnn_epochs = 0;   ///< 0 keeps train.epochs
    int dgp_epochs = 0;   ///< 0 keeps train.epochs
    double dgp_lr0 = 0.0; ///< 0 keeps train.lr0
    int n_jobs = 1;
};

/// All 18 runs of a suite (3 methods x 3 bases x 2 scenarios) over one
/// shared split, plus the cross-run comparison table.
struct SuiteResult {
    DatasetSplit split;
    std::vector<SuiteRun> runs;
    std::string comparison_csv;
    std::string manifest_json;
};

/// The fixed method-major run order used by run_suite and the CLI.
std::vector<ExperimentConfig> suite_configs(std::uint64_t master_seed,
                                            const SuiteOptions& options);

/// Execute every method x base x scenario combination over one shared
/// split derived from the master seed. Individual failures are recorded
/// and the suite continues; reruns with the same master seed and data are
/// bit-identical.
SuiteResult run_suite(const std::vector<ChfRecord>& records, std::uint64_t master_seed,
                      const SuiteOptions& options = {}, HbmCache* cache = nullptr,
                      const ResidualRunner* runner = nullptr);

/// Content hash of a record array: field bytes in order, IEEE-754 bits.
std::string dataset_hash(const std::vector<ChfRecord>& records);

}  // namespace chf
