#include "chf/ensemble.hpp"

#include <atomic>
#include <set>
#include <string>
#include <thread>
#include <utility>

#include <json.hpp>

#include "chf/errors.hpp"

namespace chf {

namespace {

void check_feature_width(const StandardScaler& scaler, const Matrix& x,
                         const std::string& where) {
    if (x.cols() != scaler.means.size()) {
        throw ValidationError(where + ": input has " + std::to_string(x.cols()) +
                              " features, scaler was fit on " +
                              std::to_string(scaler.means.size()));
    }
}

}  // namespace

EnsembleModel train_ensemble_seeded(const MlpConfig& config, const TrainConfig& tc,
                                    const Matrix& x, const std::vector<double>& y,
                                    const Matrix& x_val, const std::vector<double>& y_val,
                                    const StandardScaler& scaler, BaseModelKind base,
                                    const std::vector<std::uint64_t>& seeds,
                                    int n_threads) {
    config.validate();
    tc.validate();
    if (seeds.empty()) {
        throw ValidationError("train_ensemble: no member seeds given");
    }
    std::set<std::uint64_t> unique_seeds(seeds.begin(), seeds.end());
    if (unique_seeds.size() != seeds.size()) {
        throw ValidationError("train_ensemble: member seeds must be pairwise distinct");
    }
    if (x.rows() == 0 || x.rows() != y.size()) {
        throw ValidationError("train_ensemble: " + std::to_string(x.rows()) +
                              " feature rows vs " + std::to_string(y.size()) + " targets");
    }
    check_feature_width(scaler, x, "train_ensemble");
    if (x_val.rows() > 0) check_feature_width(scaler, x_val, "train_ensemble (validation)");

    const Matrix xs = scaler.transform(x);
    const std::vector<double> ys = scaler.transform_target(y);
    const Matrix xvs = x_val.rows() > 0 ? scaler.transform(x_val) : x_val;
    const std::vector<double> yvs = scaler.transform_target(y_val);

    const std::size_t n = seeds.size();
    EnsembleModel model;
    model.member_seeds = seeds;
    model.scaler = scaler;
    model.base = base;
    model.members.reserve(n);
    std::vector<TrainConfig> tcs(n, tc);
    for (std::size_t i = 0; i < n; ++i) {
        MlpConfig ci = config;
        ci.seed = seeds[i];
        tcs[i].seed = seeds[i];
        model.members.emplace_back(ci);
    }

    std::vector<std::string> failures(n);
    std::atomic<std::size_t> next{0};
    auto worker = [&]() {
        for (std::size_t i = next.fetch_add(1); i < n; i = next.fetch_add(1)) {
            try {
                train_mlp(model.members[i], xs, ys, xvs, yvs, tcs[i]);
            } catch (const std::exception& e) {
                failures[i] = e.what();
            }
        }
    };

    int threads = n_threads < 1 ? 1 : n_threads;
    if (threads > static_cast<int>(n)) threads = static_cast<int>(n);
    if (threads == 1) {
        worker();
    } else {
        std::vector<std::thread> pool;
        pool.reserve(threads);
        for (int t = 0; t < threads; ++t) pool.emplace_back(worker);
        for (auto& th : pool) th.join();
    }

    std::string failed;
    for (std::size_t i = 0; i < n; ++i) {
        if (failures[i].empty()) continue;
        if (!failed.empty()) failed += "; ";
        failed += "member " + std::to_string(i) + ": " + failures[i];
    }
    if (!failed.empty()) {
        throw RunError("ensemble training failed: " + failed);
    }
    return model;
}

EnsembleModel train_ensemble(const MlpConfig& config, const TrainConfig& tc,
                             const Matrix& x, const std::vector<double>& y,
                             const Matrix& x_val, const std::vector<double>& y_val,
                             const StandardScaler& scaler, BaseModelKind base,
                             std::uint64_t base_seed, int n_members, int n_threads) {
    if (n_members < 2) {
        throw ValidationError("train_ensemble: need at least 2 members, got " +
                              std::to_string(n_members));
    }
    std::vector<std::uint64_t> seeds(static_cast<std::size_t>(n_members));
    for (int i = 0; i < n_members; ++i) {
        seeds[static_cast<std::size_t>(i)] = base_seed + static_cast<std::uint64_t>(i);
    }
    return train_ensemble_seeded(config, tc, x, y, x_val, y_val, scaler, base, seeds,
                                 n_threads);
}

std::vector<PredictionSet> predict_ensemble(const EnsembleModel& model, const Matrix& x) {
    if (model.members.empty()) {
        throw ValidationError("predict_ensemble: model has no members");
    }
    check_feature_width(model.scaler, x, "predict_ensemble");
    const Matrix xs = model.scaler.transform(x);
    const std::size_t n_points = xs.rows();
    const std::size_t n_members = model.members.size();

    Matrix outputs(n_points, n_members);
    for (std::size_t m = 0; m < n_members; ++m) {
        const Matrix pred = model.members[m].forward(xs);
        for (std::size_t p = 0; p < n_points; ++p) {
            outputs(p, m) = model.scaler.inverse_target_mean(pred(p, 0));
        }
    }

    std::vector<PredictionSet> sets;
    sets.reserve(n_points);
    for (std::size_t p = 0; p < n_points; ++p) {
        std::vector<double> samples(n_members);
        for (std::size_t m = 0; m < n_members; ++m) samples[m] = outputs(p, m);
        sets.push_back(prediction_from_samples(std::move(samples)));
    }
    return sets;
}

std::string EnsembleModel::to_json() const {
    nlohmann::ordered_json j;
    j["kind"] = "ensemble";
    j["base"] = std::string(to_string(base));
    j["member_seeds"] = member_seeds;
    j["scaler"] = nlohmann::ordered_json::parse(scaler.to_json());
    auto members_json = nlohmann::ordered_json::array();
    for (const auto& m : members) {
        members_json.push_back(nlohmann::ordered_json::parse(m.to_json()));
    }
    j["members"] = std::move(members_json);
    return j.dump(2);
}

EnsembleModel EnsembleModel::from_json(const std::string& text, const std::string& origin) {
    try {
        nlohmann::json j = nlohmann::json::parse(text);
        if (j.at("kind").get<std::string>() != "ensemble") {
            throw SchemaError(origin + ": not an ensemble model file");
        }
        EnsembleModel model;
        model.base = base_model_from_string(j.at("base").get<std::string>());
        model.member_seeds = j.at("member_seeds").get<std::vector<std::uint64_t>>();
        model.scaler = StandardScaler::from_json(j.at("scaler").dump(), origin);
        for (const auto& mj : j.at("members")) {
            model.members.push_back(Mlp::from_json(mj.dump(), origin));
        }
        if (model.members.size() != model.member_seeds.size()) {
            throw SchemaError(origin + ": " + std::to_string(model.members.size()) +
                              " members vs " + std::to_string(model.member_seeds.size()) +
                              " seeds");
        }
        return model;
    } catch (const nlohmann::json::exception& e) {
        throw SchemaError(origin + ": " + e.what());
    }
}

}  // namespace chf
