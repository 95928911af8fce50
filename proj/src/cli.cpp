#include "chf/cli.hpp"

#include <algorithm>
#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <thread>

#include <CLI11.hpp>
#include <json.hpp>

#include "chf/bnn.hpp"
#include "chf/csv.hpp"
#include "chf/dataset.hpp"
#include "chf/dgp.hpp"
#include "chf/ensemble.hpp"
#include "chf/errors.hpp"
#include "chf/evalsuite.hpp"
#include "chf/hybrid.hpp"
#include "chf/nncore.hpp"
#include "chf/rng.hpp"

namespace fs = std::filesystem;

namespace chf {

namespace {

std::string ensure_newline(std::string text) {
    if (text.empty() || text.back() != '\n') text.push_back('\n');
    return text;
}

std::string trim(const std::string& s) {
    std::size_t a = s.find_first_not_of(" \t\r");
    if (a == std::string::npos) return "";
    std::size_t b = s.find_last_not_of(" \t\r");
    return s.substr(a, b - a + 1);
}

// ---------------------------------------------------------------------------
// key=value config files
// ---------------------------------------------------------------------------

/// Flattened "section.key" -> value map. Values stay strings; each command
/// converts and validates the keys it understands.
using ConfigMap = std::map<std::string, std::string>;

ConfigMap parse_config_text(const std::string& text, const std::string& origin) {
    ConfigMap values;
    std::string section;
    std::istringstream in(text);
    std::string raw;
    std::size_t line_no = 0;
    while (std::getline(in, raw)) {
        ++line_no;
        const std::string line = trim(raw);
        if (line.empty() || line[0] == '#' || line[0] == ';') continue;
        const std::string where = origin + ":" + std::to_string(line_no);
        if (line.front() == '[') {
            if (line.back() != ']' || line.size() < 3) {
                throw SchemaError(where + ": malformed section header '" + line + "'");
            }
            section = trim(line.substr(1, line.size() - 2));
            if (section.empty()) {
                throw SchemaError(where + ": empty section name");
            }
            continue;
        }
        const std::size_t eq = line.find('=');
        if (eq == std::string::npos) {
            throw SchemaError(where + ": expected key = value, got '" + line + "'");
        }
        const std::string key = trim(line.substr(0, eq));
        const std::string value = trim(line.substr(eq + 1));
        if (key.empty()) throw SchemaError(where + ": empty key");
        if (value.empty()) throw SchemaError(where + ": empty value for '" + key + "'");
        if (section.empty()) {
            throw SchemaError(where + ": key '" + key + "' outside any [section]");
        }
        const std::string full = section + "." + key;
        if (values.count(full) != 0) {
            throw SchemaError(where + ": duplicate key '" + full + "'");
        }
        values[full] = value;
    }
    return values;
}

/// Typed, consume-as-you-go view over a ConfigMap. finish() rejects any
/// key no command asked for.
class ConfigReader {
  public:
    ConfigReader(ConfigMap values, std::string origin)
        : values_(std::move(values)), origin_(std::move(origin)) {}

    bool has(const std::string& key) const { return values_.count(key) != 0; }

    std::optional<std::string> take(const std::string& key) {
        auto it = values_.find(key);
        if (it == values_.end()) return std::nullopt;
        std::string v = it->second;
        values_.erase(it);
        return v;
    }

    std::string take_required(const std::string& key) {
        auto v = take(key);
        if (!v.has_value()) {
            throw SchemaError(origin_ + ": missing required key '" + key + "'");
        }
        return *v;
    }

    double take_double(const std::string& key, double fallback) {
        auto v = take(key);
        if (!v.has_value()) return fallback;
        return to_double(key, *v);
    }

    int take_int(const std::string& key, int fallback) {
        auto v = take(key);
        if (!v.has_value()) return fallback;
        return to_int(key, *v);
    }

    std::optional<std::uint64_t> take_u64(const std::string& key) {
        auto v = take(key);
        if (!v.has_value()) return std::nullopt;
        try {
            std::size_t pos = 0;
            const std::uint64_t parsed = std::stoull(*v, &pos);
            if (pos != v->size()) throw std::invalid_argument("trailing characters");
            return parsed;
        } catch (const std::exception&) {
            throw SchemaError(origin_ + ": key '" + key + "' is not an unsigned integer: '" +
                              *v + "'");
        }
    }

    std::vector<int> take_widths(const std::string& key, std::vector<int> fallback) {
        auto v = take(key);
        if (!v.has_value()) return fallback;
        std::vector<int> widths;
        std::istringstream in(*v);
        std::string item;
        while (std::getline(in, item, ',')) {
            widths.push_back(to_int(key, trim(item)));
        }
        if (widths.empty()) {
            throw SchemaError(origin_ + ": key '" + key + "' has no entries");
        }
        return widths;
    }

    /// Every key a command did not consume is unknown.
    void finish() const {
        if (values_.empty()) return;
        std::string list;
        for (const auto& [k, v] : values_) {
            if (!list.empty()) list += ", ";
            list += k;
        }
        throw SchemaError(origin_ + ": unknown keys: " + list);
    }

    const std::string& origin() const { return origin_; }

  private:
    double to_double(const std::string& key, const std::string& v) const {
        try {
            std::size_t pos = 0;
            const double parsed = std::stod(v, &pos);
            if (pos != v.size()) throw std::invalid_argument("trailing characters");
            return parsed;
        } catch (const std::exception&) {
            throw SchemaError(origin_ + ": key '" + key + "' is not a number: '" + v + "'");
        }
    }

    int to_int(const std::string& key, const std::string& v) const {
        try {
            std::size_t pos = 0;
            const long parsed = std::stol(v, &pos);
            if (pos != v.size()) throw std::invalid_argument("trailing characters");
            return static_cast<int>(parsed);
        } catch (const std::exception&) {
            throw SchemaError(origin_ + ": key '" + key + "' is not an integer: '" + v + "'");
        }
    }

    ConfigMap values_;
    std::string origin_;
};

// ---------------------------------------------------------------------------
// config resolution shared by train and suite
// ---------------------------------------------------------------------------

struct DatasetSpec {
    std::string records_path;
    std::string split_path;  ///< train only; empty means derive from seed
    double f_train = 0.8;
    double f_val = 0.1;
    double f_test = 0.1;
    ScalerScope scope = ScalerScope::Full;
};

DatasetSpec resolve_dataset(ConfigReader& cfg, bool allow_split_path) {
    DatasetSpec spec;
    spec.records_path = cfg.take_required("dataset.records");
    if (auto split = cfg.take("dataset.split"); split.has_value()) {
        if (!allow_split_path) {
            throw SchemaError(cfg.origin() +
                              ": dataset.split is not accepted here; the suite derives "
                              "its split from the master seed");
        }
        spec.split_path = *split;
    }
    spec.f_train = cfg.take_double("dataset.f_train", spec.f_train);
    spec.f_val = cfg.take_double("dataset.f_val", spec.f_val);
    spec.f_test = cfg.take_double("dataset.f_test", spec.f_test);
    if (auto scope = cfg.take("dataset.scaler_scope"); scope.has_value()) {
        spec.scope = scaler_scope_from_string(*scope);
    }
    return spec;
}

struct SeedPlan {
    bool from_master = false;
    std::uint64_t master = 0;
    std::uint64_t split = 0;
    std::uint64_t train = 0;
    std::uint64_t sample = 0;
};

/// Either seeds.master alone, or seeds.split + seeds.train + seeds.sample.
/// The master fanout is applied per run index by the caller.
SeedPlan resolve_seeds(ConfigReader& cfg, bool require_master) {
    SeedPlan plan;
    const auto master = cfg.take_u64("seeds.master");
    const auto split = cfg.take_u64("seeds.split");
    const auto train = cfg.take_u64("seeds.train");
    const auto sample = cfg.take_u64("seeds.sample");
    const bool any_explicit = split.has_value() || train.has_value() || sample.has_value();
    if (master.has_value() && any_explicit) {
        throw SchemaError(cfg.origin() +
                          ": seeds.master cannot be combined with explicit seeds");
    }
    if (master.has_value()) {
        plan.from_master = true;
        plan.master = *master;
        plan.split = derive_seed(plan.master, SeedStream::shuffle, 0);
        plan.train = derive_seed(plan.master, SeedStream::train, 0);
        plan.sample = derive_seed(plan.master, SeedStream::sampling, 0);
        return plan;
    }
    if (require_master) {
        throw SchemaError(cfg.origin() + ": the suite needs seeds.master");
    }
    if (!split.has_value() || !train.has_value() || !sample.has_value()) {
        throw SchemaError(cfg.origin() +
                          ": give either seeds.master or all of seeds.split, "
                          "seeds.train, seeds.sample");
    }
    plan.split = *split;
    plan.train = *train;
    plan.sample = *sample;
    return plan;
}

struct HyperSpec {
    TrainConfig train;
    std::vector<int> hidden_widths = std::vector<int>(7, 64);
    Activation activation = Activation::Swish;
    int n_members = 20;
    int n_threads = 1;
    std::vector<int> bnn_hidden_widths = {64, 64, 64, 64};
    double scale_floor = 1e-4;
    double kl_scale = 1.0;
    double fixed_scale = 0.0;
    int bnn_samples = 200;
    int bnn_epochs = 0;
    int dgp_epochs = 0;
    double dgp_lr0 = 0.0;
    int max_inducing = 128;
    int mc_train = 5;
    int mc_predict = 50;
    double jitter = 1e-6;
    double init_noise_var = 0.1;
};

HyperSpec resolve_hyper(ConfigReader& cfg, bool allow_method_overrides) {
    HyperSpec h;
    h.train.epochs = cfg.take_int("hyperparameters.epochs", h.train.epochs);
    h.train.lr0 = cfg.take_double("hyperparameters.lr0", h.train.lr0);
    h.train.decay_rate = cfg.take_double("hyperparameters.decay_rate", h.train.decay_rate);
    h.train.decay_epochs =
        cfg.take_int("hyperparameters.decay_epochs", h.train.decay_epochs);
    h.train.batch_size = cfg.take_int("hyperparameters.batch_size", h.train.batch_size);
    h.hidden_widths = cfg.take_widths("hyperparameters.hidden_widths", h.hidden_widths);
    if (auto act = cfg.take("hyperparameters.activation"); act.has_value()) {
        h.activation = activation_from_string(*act);
    }
    h.n_members = cfg.take_int("hyperparameters.n_members", h.n_members);
    h.n_threads = cfg.take_int("hyperparameters.n_threads", h.n_threads);
    h.bnn_hidden_widths =
        cfg.take_widths("hyperparameters.bnn_hidden_widths", h.bnn_hidden_widths);
    h.scale_floor = cfg.take_double("hyperparameters.scale_floor", h.scale_floor);
    h.kl_scale = cfg.take_double("hyperparameters.kl_scale", h.kl_scale);
    h.fixed_scale = cfg.take_double("hyperparameters.fixed_scale", h.fixed_scale);
    h.bnn_samples = cfg.take_int("hyperparameters.bnn_samples", h.bnn_samples);
    if (allow_method_overrides) {
        h.bnn_epochs = cfg.take_int("hyperparameters.bnn_epochs", h.bnn_epochs);
        h.dgp_epochs = cfg.take_int("hyperparameters.dgp_epochs", h.dgp_epochs);
        h.dgp_lr0 = cfg.take_double("hyperparameters.dgp_lr0", h.dgp_lr0);
    }
    h.max_inducing = cfg.take_int("hyperparameters.max_inducing", h.max_inducing);
    h.mc_train = cfg.take_int("hyperparameters.mc_train", h.mc_train);
    h.mc_predict = cfg.take_int("hyperparameters.mc_predict", h.mc_predict);
    h.jitter = cfg.take_double("hyperparameters.jitter", h.jitter);
    h.init_noise_var =
        cfg.take_double("hyperparameters.init_noise_var", h.init_noise_var);
    return h;
}

void apply_hyper(ExperimentConfig& cfg, const HyperSpec& h) {
    cfg.train = h.train;
    cfg.mlp.hidden_widths = h.hidden_widths;
    cfg.mlp.activation = h.activation;
    cfg.n_members = h.n_members;
    cfg.n_threads = h.n_threads;
    cfg.bnn.hidden_widths = h.bnn_hidden_widths;
    cfg.bnn.activation = h.activation;
    cfg.bnn.scale_floor = h.scale_floor;
    cfg.bnn.kl_scale = h.kl_scale;
    cfg.bnn.fixed_scale = h.fixed_scale;
    cfg.bnn_samples = h.bnn_samples;
    cfg.dgp.max_inducing = h.max_inducing;
    cfg.dgp.mc_train = h.mc_train;
    cfg.dgp.mc_predict = h.mc_predict;
    cfg.dgp.jitter = h.jitter;
    cfg.dgp.init_noise_var = h.init_noise_var;
}

std::string resolve_out_dir(const std::string& flag, const std::string& config_value) {
    if (!flag.empty()) return flag;
    if (!config_value.empty()) return config_value;
    if (const char* env = std::getenv("CHF_HYBRID_OUT"); env != nullptr && *env != '\0') {
        return env;
    }
    return ".";
}

// ---------------------------------------------------------------------------
// run artifacts
// ---------------------------------------------------------------------------

void write_run_artifacts(const fs::path& dir, const ExperimentResult& res,
                         const std::vector<ChfRecord>& records) {
    fs::create_directories(dir);
    std::vector<double> y_true;
    y_true.reserve(res.test_samples.size());
    for (const HybridSample& hs : res.test_samples) y_true.push_back(hs.measured_kw_m2);

    write_text_file((dir / "manifest.json").string(), res.manifest_json);
    write_text_file((dir / "model.json").string(), ensure_newline(res.model_json));
    write_prediction_csv((dir / "predictions.csv").string(), y_true, res.predictions);
    write_text_file((dir / "metrics.json").string(),
                    ensure_newline(metrics_to_json(res.metrics)));
    if (res.calibration.has_value()) {
        write_calibration_csv((dir / "calibration.csv").string(), *res.calibration);
    }
    write_rstd_hist_csv((dir / "rstd_hist.csv").string(), res.rstd);
    write_rstd_kde_csv((dir / "rstd_kde.csv").string(), res.rstd);
    write_parity_csv((dir / "parity.csv").string(),
                     parity_export(y_true, res.predictions));
    std::vector<ChfRecord> test_records;
    test_records.reserve(res.test_indices.size());
    for (std::size_t idx : res.test_indices) test_records.push_back(records.at(idx));
    write_records_csv((dir / "test_records.csv").string(), test_records);
}

void print_run_summary(std::ostream& out, const std::string& name,
                       const ExperimentResult& res) {
    out << name << ": " << res.predictions.size() << " test points, mu_error "
        << format_double(res.metrics.mu_error) << "%, rrmse "
        << format_double(res.metrics.rrmse) << "%, r2 "
        << format_double(res.metrics.r2) << "\n";
}

// ---------------------------------------------------------------------------
// synth
// ---------------------------------------------------------------------------

struct SynthArgs {
    std::size_t n = 1000;
    std::uint64_t seed = 0;
    std::string base = "biasi";
    double noise = 0.05;
    std::string out_path;
};

void cmd_synth(const SynthArgs& args, std::ostream& out) {
    const BaseModelKind base = base_model_from_string(args.base);
    const std::vector<ChfRecord> records =
        synth_generate(args.n, args.seed, base, args.noise);
    const fs::path path(args.out_path);
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    write_records_csv(path.string(), records);
    out << "wrote " << records.size() << " synthetic records (base " << args.base
        << ", noise " << format_double(args.noise) << ", seed " << args.seed << ") to "
        << path.string() << "\n";
}

// ---------------------------------------------------------------------------
// prepare
// ---------------------------------------------------------------------------

struct PrepareArgs {
    std::string input;
    std::string out_dir;
    std::uint64_t seed = 0;
    double f_train = 0.8;
    double f_val = 0.1;
    double f_test = 0.1;
    FilterCriteria criteria;
    std::string scaler_scope = "full";
};

void cmd_prepare(const PrepareArgs& args, std::ostream& out) {
    args.criteria.validate();
    const ScalerScope scope = scaler_scope_from_string(args.scaler_scope);
    const std::vector<ChfRecord> all = load_records_csv(args.input, &out);

    out << "filter criteria:\n"
        << "  diameter_m in [" << format_double(args.criteria.d_min_m) << ", "
        << format_double(args.criteria.d_max_m) << "]\n"
        << "  heated_length_m in [" << format_double(args.criteria.l_min_m) << ", "
        << format_double(args.criteria.l_max_m) << "]\n"
        << "  pressure_mpa in [" << format_double(args.criteria.p_min_mpa) << ", "
        << format_double(args.criteria.p_max_mpa) << "]\n"
        << "  mass_flux_kg_m2_s in [" << format_double(args.criteria.g_min) << ", "
        << format_double(args.criteria.g_max) << "]\n"
        << "  outlet_quality >= " << format_double(args.criteria.min_outlet_quality)
        << "\n";

    FilterCounts counts;
    const std::vector<ChfRecord> kept = filter_do(all, args.criteria, &counts);
    out << "records: " << all.size() << " read, " << counts.kept << " kept, "
        << counts.removed << " removed\n"
        << "removed by criterion (a record may fail several):\n"
        << "  diameter: " << counts.by_diameter << "\n"
        << "  heated_length: " << counts.by_heated_length << "\n"
        << "  pressure: " << counts.by_pressure << "\n"
        << "  mass_flux: " << counts.by_mass_flux << "\n"
        << "  outlet_quality: " << counts.by_outlet_quality << "\n";

    const DatasetSplit split =
        shuffle_split(kept.size(), args.f_train, args.f_val, args.f_test, args.seed);
    out << "split seed " << args.seed << ": " << split.train_idx.size() << " train, "
        << split.val_idx.size() << " val, " << split.test_idx.size() << " test\n";

    const Matrix x = features_from_records(kept);
    const std::vector<double> y = target_from_records(kept);
    const StandardScaler scaler = fit_scaler(x, y, feature_names(), scope, &split);

    const fs::path dir(resolve_out_dir(args.out_dir, ""));
    fs::create_directories(dir);
    const fs::path filtered = dir / "filtered.csv";
    const fs::path split_path = dir / "split.json";
    const fs::path scaler_path = dir / "scaler.json";
    write_records_csv(filtered.string(), kept);
    write_split_json(split_path.string(), split);
    write_text_file(scaler_path.string(), ensure_newline(scaler.to_json()));
    out << "wrote " << filtered.string() << "\n"
        << "wrote " << split_path.string() << "\n"
        << "wrote " << scaler_path.string() << "\n";
}

// ---------------------------------------------------------------------------
// train
// ---------------------------------------------------------------------------

struct TrainArgs {
    std::string config_path;
    std::string replay_manifest;
    std::string records_override;
    std::string split_override;
    std::string out_override;
};

/// Rebuild the experiment configuration a manifest records.
ExperimentConfig config_from_manifest(const nlohmann::json& man, const std::string& origin) {
    ExperimentConfig cfg;
    try {
        const nlohmann::json& c = man.at("config");
        cfg.method = method_from_string(c.at("method").get<std::string>());
        cfg.base = base_model_from_string(c.at("base").get<std::string>());
        cfg.scenario = scenario_from_string(c.at("scenario").get<std::string>());
        cfg.limited_n = c.at("limited_n").get<std::size_t>();
        cfg.scaler_scope = scaler_scope_from_string(c.at("scaler_scope").get<std::string>());
        const nlohmann::json& t = c.at("train");
        cfg.train.epochs = t.at("epochs").get<int>();
        cfg.train.lr0 = t.at("lr0").get<double>();
        cfg.train.decay_rate = t.at("decay_rate").get<double>();
        cfg.train.decay_epochs = t.at("decay_epochs").get<int>();
        cfg.train.batch_size = t.at("batch_size").get<int>();
        switch (cfg.method) {
            case Method::Ensemble: {
                const nlohmann::json& e = c.at("ensemble");
                cfg.mlp.hidden_widths = e.at("hidden_widths").get<std::vector<int>>();
                cfg.mlp.activation =
                    activation_from_string(e.at("activation").get<std::string>());
                cfg.n_members = e.at("n_members").get<int>();
                cfg.n_threads = e.at("n_threads").get<int>();
                break;
            }
            case Method::Bnn: {
                const nlohmann::json& b = c.at("bnn");
                cfg.bnn.hidden_widths = b.at("hidden_widths").get<std::vector<int>>();
                cfg.bnn.activation =
                    activation_from_string(b.at("activation").get<std::string>());
                cfg.bnn.scale_floor = b.at("scale_floor").get<double>();
                cfg.bnn.kl_scale = b.at("kl_scale").get<double>();
                cfg.bnn.fixed_scale = b.value("fixed_scale", 0.0);
                cfg.bnn_samples = b.at("n_samples").get<int>();
                break;
            }
            case Method::Dgp: {
                const nlohmann::json& d = c.at("dgp");
                cfg.dgp.max_inducing = d.at("max_inducing").get<int>();
                cfg.dgp.mc_train = d.at("mc_train").get<int>();
                cfg.dgp.mc_predict = d.at("mc_predict").get<int>();
                cfg.dgp.jitter = d.at("jitter").get<double>();
                cfg.dgp.init_noise_var = d.at("init_noise_var").get<double>();
                break;
            }
        }
        const nlohmann::json& s = man.at("seeds");
        cfg.train_seed = s.at("train_seed").get<std::uint64_t>();
        cfg.sample_seed = s.at("sample_seed").get<std::uint64_t>();
    } catch (const nlohmann::json::exception& e) {
        throw SchemaError(origin + ": " + e.what());
    }
    return cfg;
}

void check_split_bounds(const DatasetSplit& split, std::size_t n_records,
                        const std::string& origin) {
    const auto check = [&](const std::vector<std::size_t>& idx) {
        for (std::size_t i : idx) {
            if (i >= n_records) {
                throw ValidationError(origin + ": split index " + std::to_string(i) +
                                      " out of range for " + std::to_string(n_records) +
                                      " records");
            }
        }
    };
    check(split.train_idx);
    check(split.val_idx);
    check(split.test_idx);
}

void cmd_train(const TrainArgs& args, std::ostream& out) {
    ExperimentConfig cfg;
    std::string records_path;
    std::string split_path;
    std::string config_out_dir;
    DatasetSpec ds;
    SeedPlan seeds;
    bool replay = false;
    std::string expected_hash;
    std::optional<std::uint64_t> expected_split_seed;

    if (!args.replay_manifest.empty()) {
        replay = true;
        if (args.records_override.empty() || args.split_override.empty()) {
            throw SchemaError("--replay needs --records and --split");
        }
        nlohmann::json man;
        try {
            man = nlohmann::json::parse(read_text_file(args.replay_manifest));
        } catch (const nlohmann::json::exception& e) {
            throw SchemaError(args.replay_manifest + ": " + e.what());
        }
        cfg = config_from_manifest(man, args.replay_manifest);
        try {
            expected_hash = man.at("dataset").at("hash").get<std::string>();
            expected_split_seed = man.at("seeds").at("split_seed").get<std::uint64_t>();
        } catch (const nlohmann::json::exception& e) {
            throw SchemaError(args.replay_manifest + ": " + e.what());
        }
        records_path = args.records_override;
        split_path = args.split_override;
    } else {
        if (args.config_path.empty()) {
            throw SchemaError("train needs --config or --replay");
        }
        ConfigReader reader(
            parse_config_text(read_text_file(args.config_path), args.config_path),
            args.config_path);
        ds = resolve_dataset(reader, /*allow_split_path=*/true);
        cfg.method = method_from_string(reader.take_required("method.name"));
        cfg.base = base_model_from_string(reader.take_required("base.name"));
        cfg.scenario = scenario_from_string(reader.take_required("scenario.name"));
        cfg.limited_n = static_cast<std::size_t>(
            reader.take_int("scenario.limited_n", static_cast<int>(cfg.limited_n)));
        seeds = resolve_seeds(reader, /*require_master=*/false);
        const HyperSpec hyper = resolve_hyper(reader, /*allow_method_overrides=*/false);
        if (auto dir = reader.take("output.dir"); dir.has_value()) config_out_dir = *dir;
        reader.finish();
        apply_hyper(cfg, hyper);
        cfg.scaler_scope = ds.scope;
        cfg.train_seed = seeds.train;
        cfg.sample_seed = seeds.sample;
        records_path = ds.records_path;
        split_path = ds.split_path;
        if (args.records_override.size() + args.split_override.size() != 0) {
            throw SchemaError("--records/--split are only for --replay");
        }
    }

    const std::vector<ChfRecord> records = load_records_csv(records_path, &out);
    if (replay) {
        const std::string actual_hash = dataset_hash(records);
        if (actual_hash != expected_hash) {
            throw ValidationError("replay dataset hash mismatch: manifest has " +
                                  expected_hash + ", " + records_path + " has " +
                                  actual_hash);
        }
    }

    DatasetSplit split;
    if (!split_path.empty()) {
        split = read_split_json(split_path);
        check_split_bounds(split, records.size(), split_path);
        if (expected_split_seed.has_value() && split.seed != *expected_split_seed) {
            throw ValidationError("replay split seed mismatch: manifest has " +
                                  std::to_string(*expected_split_seed) + ", " +
                                  split_path + " has " + std::to_string(split.seed));
        }
    } else {
        split = shuffle_split(records.size(), ds.f_train, ds.f_val, ds.f_test, seeds.split);
    }

    const ExperimentResult res = run_experiment(cfg, records, split);
    const fs::path out_dir(resolve_out_dir(args.out_override, config_out_dir));
    const fs::path run_dir = out_dir / cfg.name();
    write_run_artifacts(run_dir, res, records);
    print_run_summary(out, cfg.name(), res);
    out << "wrote " << run_dir.string() << "/\n";
}

// ---------------------------------------------------------------------------
// suite
// ---------------------------------------------------------------------------

struct SuiteArgs {
    std::string config_path;
    std::string out_override;
    int jobs = 0;  ///< 0 means logical cores
};

void cmd_suite(const SuiteArgs& args, std::ostream& out) {
    ConfigReader reader(
        parse_config_text(read_text_file(args.config_path), args.config_path),
        args.config_path);
    for (const char* key : {"method.name", "base.name", "scenario.name"}) {
        if (reader.has(key)) {
            throw SchemaError(args.config_path + ": '" + key +
                              "' is not accepted; the suite runs every method, base, "
                              "and scenario");
        }
    }
    const DatasetSpec ds = resolve_dataset(reader, /*allow_split_path=*/false);
    SuiteOptions options;
    options.limited_n = static_cast<std::size_t>(
        reader.take_int("scenario.limited_n", static_cast<int>(options.limited_n)));
    const SeedPlan seeds = resolve_seeds(reader, /*require_master=*/true);
    const HyperSpec hyper = resolve_hyper(reader, /*allow_method_overrides=*/true);
    std::string config_out_dir;
    if (auto dir = reader.take("output.dir"); dir.has_value()) config_out_dir = *dir;
    reader.finish();

    options.f_train = ds.f_train;
    options.f_val = ds.f_val;
    options.f_test = ds.f_test;
    options.scaler_scope = ds.scope;
    options.train = hyper.train;
    options.mlp.hidden_widths = hyper.hidden_widths;
    options.mlp.activation = hyper.activation;
    options.n_members = hyper.n_members;
    options.n_threads = hyper.n_threads;
    options.bnn.hidden_widths = hyper.bnn_hidden_widths;
    options.bnn.activation = hyper.activation;
    options.bnn.scale_floor = hyper.scale_floor;
    options.bnn.kl_scale = hyper.kl_scale;
    options.bnn.fixed_scale = hyper.fixed_scale;
    options.bnn_samples = hyper.bnn_samples;
    options.bnn_epochs = hyper.bnn_epochs;
    options.dgp_epochs = hyper.dgp_epochs;
    options.dgp_lr0 = hyper.dgp_lr0;
    options.dgp.max_inducing = hyper.max_inducing;
    options.dgp.mc_train = hyper.mc_train;
    options.dgp.mc_predict = hyper.mc_predict;
    options.dgp.jitter = hyper.jitter;
    options.dgp.init_noise_var = hyper.init_noise_var;
    options.n_jobs = args.jobs > 0
                         ? args.jobs
                         : std::max(1u, std::thread::hardware_concurrency());

    const std::vector<ChfRecord> records = load_records_csv(ds.records_path, &out);
    const SuiteResult suite = run_suite(records, seeds.master, options);

    const fs::path out_dir(resolve_out_dir(args.out_override, config_out_dir));
    fs::create_directories(out_dir);
    write_text_file((out_dir / "comparison.csv").string(), suite.comparison_csv);
    write_text_file((out_dir / "suite_manifest.json").string(), suite.manifest_json);
    write_split_json((out_dir / "split.json").string(), suite.split);

    std::size_t failed = 0;
    for (const SuiteRun& run : suite.runs) {
        const std::string name = run.config.name();
        if (run.ok) {
            write_run_artifacts(out_dir / name, run.result, records);
            print_run_summary(out, name, run.result);
        } else {
            ++failed;
            out << name << ": FAILED: " << run.error << "\n";
        }
    }
    out << "wrote " << (out_dir / "comparison.csv").string() << "\n"
        << "wrote " << (out_dir / "suite_manifest.json").string() << "\n";
    if (failed > 0) {
        throw RunError(std::to_string(failed) + " of " +
                       std::to_string(suite.runs.size()) + " suite runs failed");
    }
}

// ---------------------------------------------------------------------------
// report
// ---------------------------------------------------------------------------

struct ReportArgs {
    std::string runs_dir;
    std::string out_dir;
    bool bwr = false;
};

struct ReportRow {
    std::string method;
    std::string base;
    std::string scenario;
    nlohmann::json metrics;
};

int method_order(const std::string& m) {
    if (m == "ensemble") return 0;
    if (m == "bnn") return 1;
    if (m == "dgp") return 2;
    return 3;
}

int base_order(const std::string& b) {
    if (b == "none") return 0;
    if (b == "biasi") return 1;
    if (b == "bowring") return 2;
    return 3;
}

int scenario_order(const std::string& s) {
    if (s == "plentiful") return 0;
    if (s == "limited") return 1;
    return 2;
}

std::string metric_cell(const nlohmann::json& metrics, const char* key) {
    if (!metrics.contains(key) || metrics[key].is_null()) return "";
    return format_double(metrics[key].get<double>());
}

void cmd_report(const ReportArgs& args, std::ostream& out) {
    const fs::path runs_dir(args.runs_dir);
    if (!fs::is_directory(runs_dir)) {
        throw IoError("runs directory not found: " + runs_dir.string());
    }
    const fs::path out_dir(args.out_dir.empty() ? runs_dir : fs::path(args.out_dir));
    fs::create_directories(out_dir);

    // expected run names come from the suite manifest when present
    std::vector<std::string> expected;
    const fs::path suite_manifest = runs_dir / "suite_manifest.json";
    if (fs::exists(suite_manifest)) {
        try {
            const nlohmann::json man =
                nlohmann::json::parse(read_text_file(suite_manifest.string()));
            for (const nlohmann::json& run : man.at("runs")) {
                expected.push_back(run.at("name").get<std::string>());
            }
        } catch (const nlohmann::json::exception& e) {
            throw SchemaError(suite_manifest.string() + ": " + e.what());
        }
    }

    std::vector<std::pair<std::string, fs::path>> found;
    for (const fs::directory_entry& entry : fs::directory_iterator(runs_dir)) {
        if (!entry.is_directory()) continue;
        const fs::path dir = entry.path();
        if (fs::exists(dir / "manifest.json") && fs::exists(dir / "metrics.json")) {
            found.emplace_back(dir.filename().string(), dir);
        }
    }
    std::sort(found.begin(), found.end());

    std::vector<std::string> missing;
    for (const std::string& name : expected) {
        const bool present =
            std::any_of(found.begin(), found.end(),
                        [&](const auto& f) { return f.first == name; });
        if (!present) missing.push_back(name);
    }
    if (!missing.empty()) {
        std::string list;
        for (const std::string& name : missing) {
            if (!list.empty()) list += ", ";
            list += name;
        }
        throw MissingRunsError("missing runs under " + runs_dir.string() + ": " + list);
    }
    if (found.empty()) {
        throw MissingRunsError("no completed runs under " + runs_dir.string());
    }

    std::vector<ReportRow> rows;
    for (const auto& [name, dir] : found) {
        ReportRow row;
        try {
            const nlohmann::json man =
                nlohmann::json::parse(read_text_file((dir / "manifest.json").string()));
            row.method = man.at("config").at("method").get<std::string>();
            row.base = man.at("config").at("base").get<std::string>();
            row.scenario = man.at("config").at("scenario").get<std::string>();
            row.metrics =
                nlohmann::json::parse(read_text_file((dir / "metrics.json").string()));
        } catch (const nlohmann::json::exception& e) {
            throw SchemaError(dir.string() + ": " + e.what());
        }
        rows.push_back(std::move(row));
    }
    std::sort(rows.begin(), rows.end(), [](const ReportRow& a, const ReportRow& b) {
        return std::make_tuple(method_order(a.method), base_order(a.base),
                               scenario_order(a.scenario)) <
               std::make_tuple(method_order(b.method), base_order(b.base),
                               scenario_order(b.scenario));
    });

    std::ostringstream csv;
    csv << kComparisonHeader << "\n";
    for (const ReportRow& row : rows) {
        csv << row.method << ',' << row.base << ',' << row.scenario << ','
            << metric_cell(row.metrics, "mu_error") << ','
            << metric_cell(row.metrics, "max_error") << ','
            << metric_cell(row.metrics, "mean_rstd") << ','
            << metric_cell(row.metrics, "max_rstd") << ','
            << metric_cell(row.metrics, "rrmse") << ','
            << metric_cell(row.metrics, "f_gt10") << ','
            << metric_cell(row.metrics, "r2") << "\n";
    }
    const fs::path comparison = out_dir / "comparison.csv";
    write_text_file(comparison.string(), csv.str());
    out << "wrote " << comparison.string() << " (" << rows.size() << " runs)\n";

    if (!args.bwr) return;
    for (const auto& [name, dir] : found) {
        const fs::path records_path = dir / "test_records.csv";
        const fs::path preds_path = dir / "predictions.csv";
        if (!fs::exists(records_path) || !fs::exists(preds_path)) {
            out << name << ": no test records exported, skipping BWR slice\n";
            continue;
        }
        const std::vector<ChfRecord> test_records =
            load_records_csv(records_path.string());
        const CsvTable preds_table = read_csv(preds_path.string());
        if (preds_table.rows.size() != test_records.size()) {
            throw SchemaError(name + ": " + std::to_string(test_records.size()) +
                              " test records vs " +
                              std::to_string(preds_table.rows.size()) + " predictions");
        }
        std::vector<double> y_true;
        std::vector<PredictionSet> preds;
        std::vector<ChfRecord> kept;
        for (std::size_t i = 0; i < test_records.size(); ++i) {
            if (!bwr_window(test_records[i])) continue;
            const std::vector<std::string>& row = preds_table.rows[i];
            y_true.push_back(parse_cell(row.at(1), i, "y_true_kw_m2", preds_path.string()));
            preds.push_back(prediction_from_moments(
                parse_cell(row.at(2), i, "y_pred_mean_kw_m2", preds_path.string()),
                parse_cell(row.at(3), i, "y_pred_std_kw_m2", preds_path.string())));
            kept.push_back(test_records[i]);
        }
        const double pct = test_records.empty()
                               ? 0.0
                               : 100.0 * static_cast<double>(kept.size()) /
                                     static_cast<double>(test_records.size());
        out << name << ": " << kept.size() << " of " << test_records.size()
            << " test points in the BWR pressure window (" << format_double(pct)
            << "%)\n";
        if (kept.empty()) continue;
        write_parity_csv((out_dir / (name + ".bwr_parity.csv")).string(),
                         parity_export(y_true, preds));
        write_prediction_csv((out_dir / (name + ".bwr_predictions.csv")).string(),
                             y_true, preds);
    }
}

// ---------------------------------------------------------------------------
// argv wiring
// ---------------------------------------------------------------------------

int dispatch(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
    CLI::App app{"hybrid correlation + machine-learning pipeline for critical heat flux"};
    app.require_subcommand(1);

    SynthArgs synth;
    CLI::App* synth_cmd = app.add_subcommand(
        "synth", "generate a synthetic record set from a base correlation");
    synth_cmd->add_option("--n", synth.n, "number of records")->required();
    synth_cmd->add_option("--seed", synth.seed, "generator seed");
    synth_cmd->add_option("--base", synth.base, "base correlation (none, biasi, bowring)");
    synth_cmd->add_option("--noise", synth.noise, "relative noise level");
    synth_cmd->add_option("--out", synth.out_path, "output CSV path")->required();

    PrepareArgs prep;
    CLI::App* prep_cmd = app.add_subcommand(
        "prepare", "filter a record CSV, fix the split, and fit the scaler");
    prep_cmd->add_option("--input", prep.input, "record CSV to prepare")->required();
    prep_cmd->add_option("--out", prep.out_dir,
                         "output directory (default: CHF_HYBRID_OUT or .)");
    prep_cmd->add_option("--seed", prep.seed, "split shuffle seed");
    prep_cmd->add_option("--f-train", prep.f_train, "training fraction");
    prep_cmd->add_option("--f-val", prep.f_val, "validation fraction");
    prep_cmd->add_option("--f-test", prep.f_test, "test fraction");
    prep_cmd->add_option("--d-min", prep.criteria.d_min_m, "diameter lower bound, m");
    prep_cmd->add_option("--d-max", prep.criteria.d_max_m, "diameter upper bound, m");
    prep_cmd->add_option("--l-min", prep.criteria.l_min_m, "heated length lower bound, m");
    prep_cmd->add_option("--l-max", prep.criteria.l_max_m, "heated length upper bound, m");
    prep_cmd->add_option("--p-min", prep.criteria.p_min_mpa, "pressure lower bound, MPa");
    prep_cmd->add_option("--p-max", prep.criteria.p_max_mpa, "pressure upper bound, MPa");
    prep_cmd->add_option("--g-min", prep.criteria.g_min, "mass flux lower bound, kg/m2s");
    prep_cmd->add_option("--g-max", prep.criteria.g_max, "mass flux upper bound, kg/m2s");
    prep_cmd->add_option("--min-quality", prep.criteria.min_outlet_quality,
                         "outlet quality lower bound");
    prep_cmd->add_option("--scaler-scope", prep.scaler_scope,
                         "standardization scope (full, train_only)");

    TrainArgs train;
    CLI::App* train_cmd =
        app.add_subcommand("train", "run one experiment from a config file");
    train_cmd->add_option("--config", train.config_path, "key=value run configuration");
    train_cmd->add_option("--replay", train.replay_manifest,
                          "manifest to reproduce instead of a config");
    train_cmd->add_option("--records", train.records_override,
                          "record CSV for --replay");
    train_cmd->add_option("--split", train.split_override, "split JSON for --replay");
    train_cmd->add_option("--out", train.out_override, "output directory override");

    SuiteArgs suite;
    CLI::App* suite_cmd = app.add_subcommand(
        "suite", "run all method x base x scenario experiments on one split");
    suite_cmd->add_option("--config", suite.config_path, "key=value suite configuration")
        ->required();
    suite_cmd->add_option("--out", suite.out_override, "output directory override");
    suite_cmd->add_option("--jobs", suite.jobs,
                          "worker pool size (default: logical cores)");

    ReportArgs report;
    CLI::App* report_cmd = app.add_subcommand(
        "report", "aggregate finished runs into the comparison table");
    report_cmd->add_option("--runs", report.runs_dir, "directory of run outputs")
        ->required();
    report_cmd->add_option("--out", report.out_dir,
                           "output directory (default: the runs directory)");
    report_cmd->add_flag("--bwr-filter", report.bwr,
                         "also export parity tables for the reactor pressure window");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        out << app.help();
        return 0;
    } catch (const CLI::ParseError& e) {
        err << "error: " << e.what() << "\n";
        return 2;
    }

    try {
        if (synth_cmd->parsed()) {
            cmd_synth(synth, out);
        } else if (prep_cmd->parsed()) {
            cmd_prepare(prep, out);
        } else if (train_cmd->parsed()) {
            cmd_train(train, out);
        } else if (suite_cmd->parsed()) {
            cmd_suite(suite, out);
        } else if (report_cmd->parsed()) {
            cmd_report(report, out);
        }
    } catch (const IoError& e) {
        err << "error: " << e.what() << "\n";
        return 1;
    } catch (const SchemaError& e) {
        err << "error: " << e.what() << "\n";
        return 2;
    } catch (const ValidationError& e) {
        err << "error: " << e.what() << "\n";
        return 3;
    } catch (const MissingRunsError& e) {
        err << "error: " << e.what() << "\n";
        return 5;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << "\n";
        return 4;
    }
    return 0;
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    std::vector<std::string> full;
    full.reserve(args.size() + 1);
    full.push_back("chf_hybrid");
    full.insert(full.end(), args.begin(), args.end());
    std::vector<const char*> argv;
    argv.reserve(full.size());
    for (const std::string& s : full) argv.push_back(s.c_str());
    return dispatch(static_cast<int>(argv.size()), argv.data(), out, err);
}

int run_cli(int argc, char** argv) { return dispatch(argc, argv, std::cout, std::cerr); }

}  // namespace chf
