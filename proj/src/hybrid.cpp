#include "chf/hybrid.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstring>
#include <sstream>
#include <thread>
#include <utility>

#include <json.hpp>

#include "chf/csv.hpp"
#include "chf/errors.hpp"
#include "chf/rng.hpp"
#include "chf/sha1.hpp"

namespace chf {

namespace {

void append_double_bits(std::string& out, double v) {
    char buf[sizeof(double)];
    std::memcpy(buf, &v, sizeof(double));
    out.append(buf, sizeof(double));
}

std::string record_bytes(const ChfRecord& r) {
    std::string out;
    out.reserve(9 * sizeof(double));
    append_double_bits(out, r.d_m);
    append_double_bits(out, r.l_m);
    append_double_bits(out, r.p_mpa);
    append_double_bits(out, r.g_kg_m2_s);
    append_double_bits(out, r.dh_sub_kj_kg);
    append_double_bits(out, r.t_in_c.has_value() ? 1.0 : 0.0);
    append_double_bits(out, r.t_in_c.value_or(0.0));
    append_double_bits(out, r.x_e_out);
    append_double_bits(out, r.chf_kw_m2);
    return out;
}

/// Re-throws any failure from fn as a RunError tagged with the stage name.
template <typename F>
auto stage(const std::string& run_name, const char* stage_name, F&& fn)
    -> decltype(fn()) {
    try {
        return fn();
    } catch (const std::exception& e) {
        throw RunError("experiment " + run_name + ", " + stage_name +
                       " stage: " + e.what());
    }
}

Matrix rows_at(const Matrix& x, const std::vector<std::size_t>& idx) {
    Matrix out(idx.size(), x.cols());
    for (std::size_t i = 0; i < idx.size(); ++i) {
        for (std::size_t c = 0; c < x.cols(); ++c) out(i, c) = x(idx[i], c);
    }
    return out;
}

std::vector<double> values_at(const std::vector<double>& y,
                              const std::vector<std::size_t>& idx) {
    std::vector<double> out(idx.size());
    for (std::size_t i = 0; i < idx.size(); ++i) out[i] = y[idx[i]];
    return out;
}

std::vector<PredictionSet> dispatch_backend(const ExperimentConfig& cfg,
                                            const Matrix& x_train,
                                            const std::vector<double>& r_train,
                                            const Matrix& x_val,
                                            const std::vector<double>& r_val,
                                            const Matrix& x_test,
                                            const StandardScaler& scaler,
                                            std::string* model_json) {
    TrainConfig tc = cfg.train;
    tc.seed = cfg.train_seed;
    const int dim = static_cast<int>(x_train.cols());
    switch (cfg.method) {
        case Method::Ensemble: {
            MlpConfig mc = cfg.mlp;
            mc.input_dim = dim;
            mc.output_dim = 1;
            EnsembleModel model =
                train_ensemble(mc, tc, x_train, r_train, x_val, r_val, scaler,
                               cfg.base, cfg.train_seed, cfg.n_members, cfg.n_threads);
            if (model_json != nullptr) *model_json = model.to_json();
            return predict_ensemble(model, x_test);
        }
        case Method::Bnn: {
            BnnConfig bc = cfg.bnn;
            bc.input_dim = dim;
            bc.seed = cfg.train_seed;
            BnnModel model =
                bnn_train(bc, tc, x_train, r_train, x_val, r_val, scaler, cfg.base);
            if (model_json != nullptr) *model_json = model.to_json();
            return bnn_predict(model, x_test, cfg.bnn_samples, cfg.sample_seed);
        }
        case Method::Dgp: {
            DgpConfig dc = cfg.dgp;
            dc.input_dim = dim;
            dc.seed = cfg.train_seed;
            DgpModel model =
                dgp_train(dc, tc, x_train, r_train, x_val, r_val, scaler, cfg.base);
            if (model_json != nullptr) *model_json = model.to_json();
            return dgp_predict(model, x_test, dc.mc_predict, cfg.sample_seed);
        }
    }
    throw ValidationError("unknown Method value");
}

nlohmann::ordered_json train_config_json(const TrainConfig& tc) {
    nlohmann::ordered_json j;
    j["epochs"] = tc.epochs;
    j["lr0"] = tc.lr0;
    j["decay_rate"] = tc.decay_rate;
    j["decay_epochs"] = tc.decay_epochs;
    j["batch_size"] = tc.batch_size;
    return j;
}

nlohmann::ordered_json config_json(const ExperimentConfig& cfg) {
    nlohmann::ordered_json j;
    j["method"] = std::string(to_string(cfg.method));
    j["base"] = std::string(to_string(cfg.base));
    j["scenario"] = std::string(to_string(cfg.scenario));
    j["limited_n"] = cfg.limited_n;
    j["scaler_scope"] = std::string(to_string(cfg.scaler_scope));
    j["train"] = train_config_json(cfg.train);
    switch (cfg.method) {
        case Method::Ensemble: {
            nlohmann::ordered_json e;
            e["hidden_widths"] = cfg.mlp.hidden_widths;
            e["activation"] = std::string(to_string(cfg.mlp.activation));
            e["n_members"] = cfg.n_members;
            e["n_threads"] = cfg.n_threads;
            j["ensemble"] = std::move(e);
            break;
        }
        case Method::Bnn: {
            nlohmann::ordered_json b;
            b["hidden_widths"] = cfg.bnn.hidden_widths;
            b["activation"] = std::string(to_string(cfg.bnn.activation));
            b["scale_floor"] = cfg.bnn.scale_floor;
            b["kl_scale"] = cfg.bnn.kl_scale;
            b["fixed_scale"] = cfg.bnn.fixed_scale;
            b["n_samples"] = cfg.bnn_samples;
            j["bnn"] = std::move(b);
            break;
        }
        case Method::Dgp: {
            nlohmann::ordered_json d;
            d["max_inducing"] = cfg.dgp.max_inducing;
            d["mc_train"] = cfg.dgp.mc_train;
            d["mc_predict"] = cfg.dgp.mc_predict;
            d["jitter"] = cfg.dgp.jitter;
            d["init_noise_var"] = cfg.dgp.init_noise_var;
            j["dgp"] = std::move(d);
            break;
        }
    }
    return j;
}

}  // namespace

std::string_view to_string(Method method) {
    switch (method) {
        case Method::Ensemble: return "ensemble";
        case Method::Bnn: return "bnn";
        case Method::Dgp: return "dgp";
    }
    throw ValidationError("unknown Method value");
}

Method method_from_string(std::string_view name) {
    if (name == "ensemble") return Method::Ensemble;
    if (name == "bnn") return Method::Bnn;
    if (name == "dgp") return Method::Dgp;
    throw ValidationError("unknown method name: " + std::string(name));
}

std::string_view to_string(Scenario scenario) {
    switch (scenario) {
        case Scenario::Plentiful: return "plentiful";
        case Scenario::Limited: return "limited";
    }
    throw ValidationError("unknown Scenario value");
}

Scenario scenario_from_string(std::string_view name) {
    if (name == "plentiful") return Scenario::Plentiful;
    if (name == "limited") return Scenario::Limited;
    throw ValidationError("unknown scenario name: " + std::string(name));
}

double HbmCache::base_estimate(BaseModelKind base, const ChfRecord& record) {
    std::string key = sha1_hex(std::string(to_string(base)) + ":" + record_bytes(record));
    {
        std::lock_guard<std::mutex> lock(mutex_);
        auto it = values_.find(key);
        if (it != values_.end()) return it->second;
    }
    const double value = hbm_solve(base, record).chf_kw_m2;
    std::lock_guard<std::mutex> lock(mutex_);
    return values_.emplace(std::move(key), value).first->second;
}

std::size_t HbmCache::size() const {
    std::lock_guard<std::mutex> lock(mutex_);
    return values_.size();
}

ResidualDataset make_residual_dataset(const std::vector<ChfRecord>& records,
                                      BaseModelKind base, HbmCache* cache) {
    ResidualDataset out;
    out.samples.reserve(records.size());
    for (std::size_t i = 0; i < records.size(); ++i) {
        const ChfRecord& rec = records[i];
        HybridSample s;
        s.record_index = i;
        s.measured_kw_m2 = rec.chf_kw_m2;
        if (base == BaseModelKind::NoBase) {
            s.base_estimate_kw_m2 = 0.0;
            s.residual_kw_m2 = rec.chf_kw_m2;
        } else {
            try {
                s.base_estimate_kw_m2 = cache != nullptr
                                            ? cache->base_estimate(base, rec)
                                            : hbm_solve(base, rec).chf_kw_m2;
                s.residual_kw_m2 = rec.chf_kw_m2 - s.base_estimate_kw_m2;
            } catch (const std::exception& e) {
                out.failed_indices.push_back(i);
                out.failure_messages.emplace_back(e.what());
                s.base_estimate_kw_m2 = 0.0;
                s.residual_kw_m2 = 0.0;
            }
        }
        out.samples.push_back(s);
    }
    if (!records.empty() &&
        100.0 * static_cast<double>(out.failed_indices.size()) >
            static_cast<double>(records.size())) {
        std::string msg = "base-model estimation failed for " +
                          std::to_string(out.failed_indices.size()) + " of " +
                          std::to_string(records.size()) + " records (> 1%):";
        const std::size_t shown = std::min<std::size_t>(out.failed_indices.size(), 5);
        for (std::size_t k = 0; k < shown; ++k) {
            msg += " [" + std::to_string(out.failed_indices[k]) + "] " +
                   out.failure_messages[k] + ";";
        }
        throw RunError(msg);
    }
    return out;
}

std::string ExperimentConfig::name() const {
    return std::string(to_string(method)) + "_" + std::string(to_string(base)) + "_" +
           std::string(to_string(scenario));
}

std::string dataset_hash(const std::vector<ChfRecord>& records) {
    std::string bytes;
    bytes.reserve(records.size() * 9 * sizeof(double));
    for (const auto& r : records) bytes += record_bytes(r);
    return sha1_hex(bytes);
}

const char* const kComparisonHeader =
    "method,base,scenario,mu_error_pct,max_error_pct,mean_rstd_pct,max_rstd_pct,"
    "rrmse_pct,f_gt10_pct,r2";

ExperimentResult run_experiment(const ExperimentConfig& config,
                                const std::vector<ChfRecord>& records,
                                const DatasetSplit& split, HbmCache* cache,
                                const ResidualRunner* runner) {
    const std::string run_name = config.name();
    ExperimentResult out;
    out.config = config;

    // base estimates and residual targets
    ResidualDataset residuals = stage(run_name, "base", [&] {
        return make_residual_dataset(records, config.base, cache);
    });
    out.hbm_failed = residuals.failed_indices;

    // drop failed records from every partition, then apply the scenario
    std::vector<bool> failed(records.size(), false);
    for (std::size_t i : residuals.failed_indices) failed[i] = true;
    std::vector<std::size_t> keep_pos(records.size(), 0);
    std::vector<std::size_t> surviving_orig;
    std::vector<ChfRecord> surviving;
    std::vector<double> res_targets;
    surviving.reserve(records.size());
    for (std::size_t i = 0; i < records.size(); ++i) {
        if (failed[i]) continue;
        keep_pos[i] = surviving.size();
        surviving_orig.push_back(i);
        surviving.push_back(records[i]);
        res_targets.push_back(residuals.samples[i].residual_kw_m2);
    }
    auto remap = [&](const std::vector<std::size_t>& idx) {
        std::vector<std::size_t> out_idx;
        out_idx.reserve(idx.size());
        for (std::size_t i : idx) {
            if (!failed[i]) out_idx.push_back(keep_pos[i]);
        }
        return out_idx;
    };
    DatasetSplit eff = split;
    eff.train_idx = remap(split.train_idx);
    eff.val_idx = remap(split.val_idx);
    eff.test_idx = remap(split.test_idx);
    if (config.scenario == Scenario::Limited) {
        eff = limit_train(eff, config.limited_n);
    }
    if (eff.train_idx.empty() || eff.test_idx.empty()) {
        throw RunError("experiment " + run_name +
                       ", split stage: empty training or test partition");
    }

    // residual targets get their own scaler over the configured scope
    Matrix x_all = stage(run_name, "scaling",
                         [&] { return features_from_records(surviving); });
    StandardScaler scaler = stage(run_name, "scaling", [&] {
        return fit_scaler(x_all, res_targets, feature_names(), config.scaler_scope,
                          &eff);
    });

    Matrix x_train = rows_at(x_all, eff.train_idx);
    std::vector<double> r_train = values_at(res_targets, eff.train_idx);
    Matrix x_val = rows_at(x_all, eff.val_idx);
    std::vector<double> r_val = values_at(res_targets, eff.val_idx);
    Matrix x_test = rows_at(x_all, eff.test_idx);

    std::vector<PredictionSet> res_preds = stage(run_name, "training", [&] {
        if (runner != nullptr) {
            return (*runner)(config, x_train, r_train, x_val, r_val, x_test, scaler,
                             &out.model_json);
        }
        return dispatch_backend(config, x_train, r_train, x_val, r_val, x_test, scaler,
                                &out.model_json);
    });
    if (res_preds.size() != eff.test_idx.size()) {
        throw RunError("experiment " + run_name + ", prediction stage: " +
                       std::to_string(res_preds.size()) + " predictions for " +
                       std::to_string(eff.test_idx.size()) + " test points");
    }

    // add the base estimate to every sample (a constant shift per point)
    std::vector<double> y_true;
    stage(run_name, "assembly", [&] {
        out.predictions.reserve(res_preds.size());
        out.test_samples.reserve(res_preds.size());
        out.test_indices.reserve(res_preds.size());
        for (std::size_t j = 0; j < res_preds.size(); ++j) {
            const std::size_t row = eff.test_idx[j];
            const ChfRecord& rec = surviving[row];
            const std::size_t orig = surviving_orig[row];
            const double base_est = residuals.samples[orig].base_estimate_kw_m2;
            PredictionSet final_set;
            if (!res_preds[j].samples.empty()) {
                std::vector<double> shifted = res_preds[j].samples;
                for (double& s : shifted) s += base_est;
                final_set = prediction_from_samples(std::move(shifted));
            } else {
                final_set = prediction_from_moments(res_preds[j].mean + base_est,
                                                    res_preds[j].std_dev);
            }
            HybridSample hs;
            hs.record_index = orig;
            hs.measured_kw_m2 = rec.chf_kw_m2;
            hs.base_estimate_kw_m2 = base_est;
            hs.residual_kw_m2 = rec.chf_kw_m2 - base_est;
            hs.has_prediction = true;
            hs.final_prediction_kw_m2 = final_set.mean;
            hs.predicted_residual_kw_m2 = final_set.mean - base_est;
            out.test_indices.push_back(orig);
            out.test_samples.push_back(hs);
            y_true.push_back(rec.chf_kw_m2);
            out.predictions.push_back(std::move(final_set));
        }
        return 0;
    });

    // analysis targets the final CHF in physical units
    out.metrics = stage(run_name, "metrics",
                        [&] { return metrics(y_true, out.predictions); });
    const bool all_positive_std =
        std::all_of(out.predictions.begin(), out.predictions.end(),
                    [](const PredictionSet& p) { return p.std_dev > 0.0; });
    if (all_positive_std) {
        out.calibration = stage(run_name, "metrics", [&] {
            return calibration_curve(y_true, out.predictions);
        });
    }
    out.rstd = stage(run_name, "metrics",
                     [&] { return rstd_distribution(out.predictions, 30, false); });

    // manifest: configuration, every seed, decision flags, hashes, metrics
    nlohmann::ordered_json man;
    man["run"] = run_name;
    man["config"] = config_json(config);
    nlohmann::ordered_json seeds;
    seeds["train_seed"] = config.train_seed;
    seeds["sample_seed"] = config.sample_seed;
    seeds["split_seed"] = split.seed;
    if (config.method == Method::Ensemble) {
        auto members = nlohmann::ordered_json::array();
        for (int i = 0; i < config.n_members; ++i) {
            members.push_back(config.train_seed + static_cast<std::uint64_t>(i));
        }
        seeds["member_seeds"] = std::move(members);
    }
    man["seeds"] = std::move(seeds);
    nlohmann::ordered_json ds;
    ds["n_records"] = records.size();
    ds["hash"] = dataset_hash(records);
    ds["split_sizes"] = {eff.train_idx.size(), eff.val_idx.size(), eff.test_idx.size()};
    man["dataset"] = std::move(ds);
    nlohmann::ordered_json dec;
    dec["residual_targets_standardized"] = true;
    dec["per_sample_base_addition"] = true;
    if (config.method == Method::Bnn) dec["weight_sampling"] = "reparameterization";
    man["decisions"] = std::move(dec);
    man["hbm_failures"] = out.hbm_failed;
    man["content_hash"] = git_blob_sha1(man["dataset"]["hash"].get<std::string>() + "\n" +
                                        man["config"].dump() + "\n" +
                                        man["seeds"].dump());
    man["metrics"] = nlohmann::ordered_json::parse(metrics_to_json(out.metrics));
    if (out.calibration.has_value()) {
        man["miscalibration_area"] = out.calibration->miscalibration_area;
    }
    out.manifest_json = man.dump(2) + "\n";
    return out;
}

std::vector<ExperimentConfig> suite_configs(std::uint64_t master_seed,
                                            const SuiteOptions& options) {
    std::vector<ExperimentConfig> configs;
    configs.reserve(18);
    std::uint64_t run_index = 0;
    for (Method method : {Method::Ensemble, Method::Bnn, Method::Dgp}) {
        for (BaseModelKind base :
             {BaseModelKind::NoBase, BaseModelKind::Biasi, BaseModelKind::Bowring}) {
            for (Scenario scenario : {Scenario::Plentiful, Scenario::Limited}) {
                ExperimentConfig cfg;
                cfg.method = method;
                cfg.base = base;
                cfg.scenario = scenario;
                cfg.limited_n = options.limited_n;
                cfg.scaler_scope = options.scaler_scope;
                cfg.train_seed = derive_seed(master_seed, SeedStream::train, run_index);
                cfg.sample_seed =
                    derive_seed(master_seed, SeedStream::sampling, run_index);
                cfg.mlp = options.mlp;
                cfg.n_members = options.n_members;
                cfg.n_threads = options.n_threads;
                cfg.bnn = options.bnn;
                cfg.bnn_samples = options.bnn_samples;
                cfg.dgp = options.dgp;
                cfg.train = options.train;
                if (method == Method::Bnn && options.bnn_epochs > 0) {
                    cfg.train.epochs = options.bnn_epochs;
                }
                if (method == Method::Dgp) {
                    if (options.dgp_epochs > 0) cfg.train.epochs = options.dgp_epochs;
                    if (options.dgp_lr0 > 0.0) cfg.train.lr0 = options.dgp_lr0;
                }
                configs.push_back(std::move(cfg));
                ++run_index;
            }
        }
    }
    return configs;
}

SuiteResult run_suite(const std::vector<ChfRecord>& records, std::uint64_t master_seed,
                      const SuiteOptions& options, HbmCache* cache,
                      const ResidualRunner* runner) {
    SuiteResult out;
    out.split = shuffle_split(records.size(), options.f_train, options.f_val,
                              options.f_test, derive_seed(master_seed,
                                                          SeedStream::shuffle, 0));
    HbmCache local_cache;
    if (cache == nullptr) cache = &local_cache;

    const std::vector<ExperimentConfig> configs = suite_configs(master_seed, options);
    out.runs.resize(configs.size());
    for (std::size_t i = 0; i < configs.size(); ++i) out.runs[i].config = configs[i];

    const auto work = [&](std::size_t i) {
        SuiteRun& run = out.runs[i];
        try {
            run.result = run_experiment(run.config, records, out.split, cache, runner);
            run.ok = true;
        } catch (const std::exception& e) {
            run.ok = false;
            run.error = e.what();
        }
    };
    const int n_jobs = std::max(1, options.n_jobs);
    if (n_jobs == 1 || configs.size() < 2) {
        for (std::size_t i = 0; i < configs.size(); ++i) work(i);
    } else {
        std::atomic<std::size_t> next{0};
        std::vector<std::thread> pool;
        const std::size_t width =
            std::min<std::size_t>(static_cast<std::size_t>(n_jobs), configs.size());
        pool.reserve(width);
        for (std::size_t t = 0; t < width; ++t) {
            pool.emplace_back([&]() {
                for (;;) {
                    const std::size_t i = next.fetch_add(1);
                    if (i >= configs.size()) return;
                    work(i);
                }
            });
        }
        for (std::thread& t : pool) t.join();
    }

    std::ostringstream csv;
    csv << kComparisonHeader << "\n";
    for (const SuiteRun& run : out.runs) {
        const ExperimentConfig& cfg = run.config;
        if (run.ok) {
            const MetricsReport& m = run.result.metrics;
            csv << to_string(cfg.method) << ',' << to_string(cfg.base) << ','
                << to_string(cfg.scenario) << ',' << format_double(m.mu_error) << ','
                << format_double(m.max_error) << ','
                << (m.mean_rstd.has_value() ? format_double(*m.mean_rstd) : "") << ','
                << (m.max_rstd.has_value() ? format_double(*m.max_rstd) : "") << ','
                << format_double(m.rrmse) << ',' << format_double(m.f_gt10) << ','
                << format_double(m.r2) << "\n";
        }
    }
    out.comparison_csv = csv.str();

    nlohmann::ordered_json man;
    man["master_seed"] = master_seed;
    man["dataset_hash"] = dataset_hash(records);
    nlohmann::ordered_json sp;
    sp["seed"] = out.split.seed;
    sp["sizes"] = {out.split.train_idx.size(), out.split.val_idx.size(),
                   out.split.test_idx.size()};
    man["split"] = std::move(sp);
    auto runs = nlohmann::ordered_json::array();
    for (const SuiteRun& run : out.runs) {
        nlohmann::ordered_json r;
        r["name"] = run.config.name();
        r["ok"] = run.ok;
        if (run.ok) {
            nlohmann::ordered_json inner =
                nlohmann::ordered_json::parse(run.result.manifest_json);
            r["content_hash"] = inner["content_hash"];
            r["metrics"] = inner["metrics"];
        } else {
            r["error"] = run.error;
        }
        runs.push_back(std::move(r));
    }
    man["runs"] = std::move(runs);
    out.manifest_json = man.dump(2) + "\n";
    return out;
}

}  // namespace chf
