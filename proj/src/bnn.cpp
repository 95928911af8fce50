#include "chf/bnn.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>
#include <utility>

#include <json.hpp>

#include "chf/csv.hpp"
#include "chf/errors.hpp"
#include "chf/rng.hpp"

namespace chf {

namespace {

double softplus(double x) {
    return x > 0.0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x));
}

double sigmoid(double x) {
    if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
    const double e = std::exp(x);
    return e / (1.0 + e);
}

constexpr double kHalfLog2Pi = 0.91893853320467274178;  // 0.5 * log(2 * pi)

double gaussian_nll_mean(const std::vector<double>& mean, const std::vector<double>& scale,
                         const std::vector<double>& y) {
    double total = 0.0;
    for (std::size_t i = 0; i < y.size(); ++i) {
        const double z = (y[i] - mean[i]) / scale[i];
        total += std::log(scale[i]) + 0.5 * z * z + kHalfLog2Pi;
    }
    return total / static_cast<double>(y.size());
}

void check_feature_width(const StandardScaler& scaler, const Matrix& x,
                         const std::string& where) {
    if (x.cols() != scaler.means.size()) {
        throw ValidationError(where + ": input has " + std::to_string(x.cols()) +
                              " features, scaler was fit on " +
                              std::to_string(scaler.means.size()));
    }
}

}  // namespace

double kl_gaussian(const std::vector<double>& post_mean, const std::vector<double>& post_std,
                   double prior_mean, double prior_std) {
    if (post_mean.size() != post_std.size()) {
        throw ValidationError("kl_gaussian: " + std::to_string(post_mean.size()) +
                              " means vs " + std::to_string(post_std.size()) + " stds");
    }
    if (prior_std <= 0.0) {
        throw ValidationError("kl_gaussian: prior std must be positive");
    }
    double total = 0.0;
    for (std::size_t i = 0; i < post_mean.size(); ++i) {
        const double sq = post_std[i];
        if (sq <= 0.0) {
            throw ValidationError("kl_gaussian: posterior std at index " +
                                  std::to_string(i) + " is not positive");
        }
        const double dm = post_mean[i] - prior_mean;
        total += std::log(prior_std / sq) +
                 (sq * sq + dm * dm) / (2.0 * prior_std * prior_std) - 0.5;
    }
    return total;
}

void BnnConfig::validate() const {
    if (hidden_widths.empty()) {
        throw ValidationError("bnn config: no hidden layers given");
    }
    for (int w : hidden_widths) {
        if (w <= 0) {
            throw ValidationError("bnn config: hidden width must be positive, got " +
                                  std::to_string(w));
        }
    }
    if (input_dim <= 0) {
        throw ValidationError("bnn config: input_dim must be positive");
    }
    if (!(scale_floor > 0.0) || !std::isfinite(scale_floor)) {
        throw ValidationError("bnn config: scale_floor must be positive and finite");
    }
    if (kl_scale < 0.0 || !std::isfinite(kl_scale)) {
        throw ValidationError("bnn config: kl_scale must be nonnegative and finite");
    }
    if (fixed_scale < 0.0 || !std::isfinite(fixed_scale)) {
        throw ValidationError("bnn config: fixed_scale must be nonnegative and finite");
    }
}

void Bnn::build_layout() {
    std::vector<std::size_t> dims;
    dims.push_back(static_cast<std::size_t>(config_.input_dim));
    for (int w : config_.hidden_widths) dims.push_back(static_cast<std::size_t>(w));
    dims.push_back(2);  // head: predicted mean and raw likelihood scale

    std::size_t offset = 0;
    noise_count_ = 0;
    for (std::size_t l = 0; l + 1 < dims.size(); ++l) {
        const std::size_t in = dims[l], out = dims[l + 1];
        in_.push_back(in);
        out_.push_back(out);
        wmu_off_.push_back(offset);
        offset += out * in;
        bmu_off_.push_back(offset);
        offset += out;
        wrho_off_.push_back(offset);
        offset += out * in;
        brho_off_.push_back(offset);
        offset += out;
        noise_off_.push_back(noise_count_);
        noise_count_ += out * in + out;
    }
    params_.assign(offset, 0.0);
}

Bnn::Bnn(const BnnConfig& config) : config_(config) {
    config_.validate();
    build_layout();
    Rng rng(config_.seed);
    const double rho0 = std::log(std::expm1(0.05));
    for (std::size_t l = 0; l < in_.size(); ++l) {
        const std::size_t in = in_[l], out = out_[l];
        const double bound =
            std::sqrt(6.0 / static_cast<double>(in + out)) / 10.0;
        for (std::size_t i = 0; i < out * in; ++i) {
            params_[wmu_off_[l] + i] = rng.uniform(-bound, bound);
        }
        for (std::size_t i = 0; i < out * in; ++i) params_[wrho_off_[l] + i] = rho0;
        for (std::size_t i = 0; i < out; ++i) params_[brho_off_[l] + i] = rho0;
    }
}

namespace {

/// Realized weights and intermediate activations of one reparameterized pass.
struct BnnCache {
    std::vector<Matrix> wreal;              ///< per layer, out x in
    std::vector<std::vector<double>> breal;  ///< per layer
    std::vector<Matrix> pre;                 ///< per layer, batch x out
    std::vector<Matrix> act;                 ///< act[0] is the input batch
};

}  // namespace

void Bnn::forward(const Matrix& x, const std::vector<double>& noise,
                  std::vector<double>& mean, std::vector<double>& scale) const {
    if (x.cols() != static_cast<std::size_t>(config_.input_dim)) {
        throw ValidationError("bnn forward: input has " + std::to_string(x.cols()) +
                              " columns, network expects " +
                              std::to_string(config_.input_dim));
    }
    if (noise.size() != noise_count_) {
        throw ValidationError("bnn forward: " + std::to_string(noise.size()) +
                              " noise draws given, network needs " +
                              std::to_string(noise_count_));
    }
    const std::size_t n_layers = in_.size();
    Matrix act = x;
    for (std::size_t l = 0; l < n_layers; ++l) {
        const std::size_t in = in_[l], out = out_[l];
        const double* wmu = params_.data() + wmu_off_[l];
        const double* wrho = params_.data() + wrho_off_[l];
        const double* bmu = params_.data() + bmu_off_[l];
        const double* brho = params_.data() + brho_off_[l];
        const double* ew = noise.data() + noise_off_[l];
        const double* eb = ew + out * in;

        Matrix next(act.rows(), out);
        for (std::size_t r = 0; r < act.rows(); ++r) {
            const double* a = act.row(r);
            for (std::size_t o = 0; o < out; ++o) {
                double z = bmu[o] + softplus(brho[o]) * eb[o];
                const double* wm = wmu + o * in;
                const double* wr = wrho + o * in;
                const double* en = ew + o * in;
                for (std::size_t i = 0; i < in; ++i) {
                    z += (wm[i] + softplus(wr[i]) * en[i]) * a[i];
                }
                next(r, o) = l + 1 < n_layers ? activate(config_.activation, z) : z;
            }
        }
        act = std::move(next);
    }
    const std::size_t n = act.rows();
    mean.resize(n);
    scale.resize(n);
    for (std::size_t r = 0; r < n; ++r) {
        mean[r] = act(r, 0);
        scale[r] = config_.fixed_scale > 0.0
                       ? config_.fixed_scale
                       : softplus(act(r, 1)) + config_.scale_floor;
    }
}

double Bnn::kl_total() const {
    double total = 0.0;
    for (std::size_t l = 0; l < in_.size(); ++l) {
        const std::size_t wn = out_[l] * in_[l], bn = out_[l];
        for (std::size_t i = 0; i < wn; ++i) {
            const double mu = params_[wmu_off_[l] + i];
            const double sq = softplus(params_[wrho_off_[l] + i]);
            total += -std::log(sq) + 0.5 * (sq * sq + mu * mu) - 0.5;
        }
        for (std::size_t i = 0; i < bn; ++i) {
            const double mu = params_[bmu_off_[l] + i];
            const double sq = softplus(params_[brho_off_[l] + i]);
            total += -std::log(sq) + 0.5 * (sq * sq + mu * mu) - 0.5;
        }
    }
    return total;
}

double Bnn::elbo_loss(const Matrix& x, const std::vector<double>& y, std::size_t n_total,
                      const std::vector<double>& noise, std::vector<double>* grad,
                      double* nll_term, double* kl_term) const {
    if (x.rows() == 0) throw ValidationError("elbo_loss: empty batch");
    if (x.rows() != y.size()) {
        throw ValidationError("elbo_loss: " + std::to_string(x.rows()) + " rows vs " +
                              std::to_string(y.size()) + " targets");
    }
    if (x.cols() != static_cast<std::size_t>(config_.input_dim)) {
        throw ValidationError("elbo_loss: input has " + std::to_string(x.cols()) +
                              " columns, network expects " +
                              std::to_string(config_.input_dim));
    }
    if (noise.size() != noise_count_) {
        throw ValidationError("elbo_loss: " + std::to_string(noise.size()) +
                              " noise draws given, network needs " +
                              std::to_string(noise_count_));
    }
    if (n_total == 0) throw ValidationError("elbo_loss: n_total must be positive");

    const std::size_t n_layers = in_.size();
    const std::size_t batch = x.rows();

    BnnCache cache;
    cache.act.push_back(x);
    for (std::size_t l = 0; l < n_layers; ++l) {
        const std::size_t in = in_[l], out = out_[l];
        const double* wmu = params_.data() + wmu_off_[l];
        const double* wrho = params_.data() + wrho_off_[l];
        const double* bmu = params_.data() + bmu_off_[l];
        const double* brho = params_.data() + brho_off_[l];
        const double* ew = noise.data() + noise_off_[l];
        const double* eb = ew + out * in;

        Matrix wreal(out, in);
        for (std::size_t i = 0; i < out * in; ++i) {
            wreal.data()[i] = wmu[i] + softplus(wrho[i]) * ew[i];
        }
        std::vector<double> breal(out);
        for (std::size_t o = 0; o < out; ++o) breal[o] = bmu[o] + softplus(brho[o]) * eb[o];

        Matrix pre = matmul_a_bt(cache.act.back(), wreal);
        for (std::size_t r = 0; r < batch; ++r) {
            for (std::size_t o = 0; o < out; ++o) pre(r, o) += breal[o];
        }
        Matrix act(batch, out);
        if (l + 1 < n_layers) {
            for (std::size_t i = 0; i < pre.size(); ++i) {
                act.data()[i] = activate(config_.activation, pre.data()[i]);
            }
        } else {
            act = pre;
        }
        cache.wreal.push_back(std::move(wreal));
        cache.breal.push_back(std::move(breal));
        cache.pre.push_back(std::move(pre));
        cache.act.push_back(std::move(act));
    }

    const Matrix& head = cache.act.back();
    const double inv_batch = 1.0 / static_cast<double>(batch);
    double nll = 0.0;
    Matrix delta(batch, 2);
    for (std::size_t r = 0; r < batch; ++r) {
        const double m = head(r, 0);
        const double raw = head(r, 1);
        const double s = config_.fixed_scale > 0.0 ? config_.fixed_scale
                                                   : softplus(raw) + config_.scale_floor;
        const double z = (y[r] - m) / s;
        nll += (std::log(s) + 0.5 * z * z + kHalfLog2Pi) * inv_batch;
        if (grad != nullptr) {
            delta(r, 0) = (m - y[r]) / (s * s) * inv_batch;
            const double ds = (1.0 / s - (y[r] - m) * (y[r] - m) / (s * s * s)) * inv_batch;
            delta(r, 1) = config_.fixed_scale > 0.0 ? 0.0 : ds * sigmoid(raw);
        }
    }

    const double kl_weight = config_.kl_scale / static_cast<double>(n_total);
    const double kl = kl_weight * kl_total();
    const double loss = nll + kl;
    if (nll_term != nullptr) *nll_term = nll;
    if (kl_term != nullptr) *kl_term = kl;
    if (!std::isfinite(loss)) {
        throw RunError("elbo_loss diverged (non-finite loss)");
    }
    if (grad == nullptr) return loss;

    grad->assign(params_.size(), 0.0);
    Matrix cur = std::move(delta);
    for (std::size_t l = n_layers; l-- > 0;) {
        const std::size_t in = in_[l], out = out_[l];
        const Matrix gw = matmul_at_b(cur, cache.act[l]);
        std::vector<double> gb(out, 0.0);
        for (std::size_t r = 0; r < batch; ++r) {
            for (std::size_t o = 0; o < out; ++o) gb[o] += cur(r, o);
        }
        double* gwmu = grad->data() + wmu_off_[l];
        double* gwrho = grad->data() + wrho_off_[l];
        double* gbmu = grad->data() + bmu_off_[l];
        double* gbrho = grad->data() + brho_off_[l];
        const double* wrho = params_.data() + wrho_off_[l];
        const double* brho = params_.data() + brho_off_[l];
        const double* ew = noise.data() + noise_off_[l];
        const double* eb = ew + out * in;
        for (std::size_t i = 0; i < out * in; ++i) {
            gwmu[i] += gw.data()[i];
            gwrho[i] += gw.data()[i] * ew[i] * sigmoid(wrho[i]);
        }
        for (std::size_t o = 0; o < out; ++o) {
            gbmu[o] += gb[o];
            gbrho[o] += gb[o] * eb[o] * sigmoid(brho[o]);
        }
        if (l > 0) {
            Matrix prev = matmul(cur, cache.wreal[l]);
            const Matrix& pre_prev = cache.pre[l - 1];
            for (std::size_t i = 0; i < prev.size(); ++i) {
                prev.data()[i] *= activate_grad(config_.activation, pre_prev.data()[i]);
            }
            cur = std::move(prev);
        }
    }

    // KL gradient over every variational parameter.
    for (std::size_t l = 0; l < n_layers; ++l) {
        const std::size_t wn = out_[l] * in_[l], bn = out_[l];
        for (std::size_t i = 0; i < wn; ++i) {
            const double mu = params_[wmu_off_[l] + i];
            const double rho = params_[wrho_off_[l] + i];
            const double sq = softplus(rho);
            (*grad)[wmu_off_[l] + i] += kl_weight * mu;
            (*grad)[wrho_off_[l] + i] += kl_weight * (sq - 1.0 / sq) * sigmoid(rho);
        }
        for (std::size_t i = 0; i < bn; ++i) {
            const double mu = params_[bmu_off_[l] + i];
            const double rho = params_[brho_off_[l] + i];
            const double sq = softplus(rho);
            (*grad)[bmu_off_[l] + i] += kl_weight * mu;
            (*grad)[brho_off_[l] + i] += kl_weight * (sq - 1.0 / sq) * sigmoid(rho);
        }
    }
    return loss;
}

std::string Bnn::to_json() const {
    nlohmann::ordered_json j;
    j["hidden_widths"] = config_.hidden_widths;
    j["activation"] = std::string(to_string(config_.activation));
    j["input_dim"] = config_.input_dim;
    j["scale_floor"] = config_.scale_floor;
    j["kl_scale"] = config_.kl_scale;
    j["fixed_scale"] = config_.fixed_scale;
    j["seed"] = config_.seed;
    j["params"] = params_;
    return j.dump();
}

Bnn Bnn::from_json(const std::string& text, const std::string& origin) {
    try {
        nlohmann::json j = nlohmann::json::parse(text);
        BnnConfig config;
        config.hidden_widths = j.at("hidden_widths").get<std::vector<int>>();
        config.activation = activation_from_string(j.at("activation").get<std::string>());
        config.input_dim = j.at("input_dim").get<int>();
        config.scale_floor = j.at("scale_floor").get<double>();
        config.kl_scale = j.at("kl_scale").get<double>();
        config.fixed_scale = j.at("fixed_scale").get<double>();
        config.seed = j.at("seed").get<std::uint64_t>();
        Bnn net(config);
        auto params = j.at("params").get<std::vector<double>>();
        if (params.size() != net.param_count()) {
            throw SchemaError(origin + ": weight file holds " +
                              std::to_string(params.size()) + " parameters, network needs " +
                              std::to_string(net.param_count()));
        }
        net.params() = std::move(params);
        return net;
    } catch (const nlohmann::json::exception& e) {
        throw SchemaError(origin + ": " + e.what());
    }
}

BnnHistory bnn_fit(Bnn& net, const Matrix& x_train, const std::vector<double>& y_train,
                   const Matrix& x_val, const std::vector<double>& y_val,
                   const TrainConfig& tc) {
    tc.validate();
    if (x_train.rows() == 0) throw ValidationError("training set is empty");
    if (x_train.rows() != y_train.size()) {
        throw ValidationError("bnn_fit: " + std::to_string(x_train.rows()) +
                              " training rows vs " + std::to_string(y_train.size()) +
                              " targets");
    }
    if (x_val.rows() != y_val.size()) {
        throw ValidationError("bnn_fit: " + std::to_string(x_val.rows()) +
                              " validation rows vs " + std::to_string(y_val.size()) +
                              " targets");
    }

    const std::size_t n = x_train.rows();
    const std::size_t d = x_train.cols();
    std::size_t bs = tc.batch_size == 0 ? n
                                        : std::min<std::size_t>(
                                              static_cast<std::size_t>(tc.batch_size), n);
    Rng shuffle_rng(derive_seed(tc.seed, SeedStream::shuffle));
    Rng noise_rng(derive_seed(tc.seed, SeedStream::sampling, 0));
    Adam adam;
    BnnHistory history;
    std::vector<double> noise(net.noise_count());
    std::vector<double> grad;
    std::vector<double> mean, scale;

    for (int epoch = 0; epoch < tc.epochs; ++epoch) {
        double lr = learning_rate(tc, epoch);
        std::vector<std::size_t> perm = shuffled_indices(n, shuffle_rng);
        for (std::size_t start = 0; start < n; start += bs) {
            std::size_t count = std::min(bs, n - start);
            Matrix xb(count, d);
            std::vector<double> yb(count);
            for (std::size_t i = 0; i < count; ++i) {
                const double* src = x_train.row(perm[start + i]);
                std::copy(src, src + d, xb.row(i));
                yb[i] = y_train[perm[start + i]];
            }
            for (double& e : noise) e = noise_rng.normal();
            net.elbo_loss(xb, yb, n, noise, &grad);
            adam.step(net.params(), grad, lr);
        }

        Rng eval_rng(derive_seed(tc.seed, SeedStream::sampling,
                                 1 + static_cast<std::uint64_t>(epoch)));
        for (double& e : noise) e = eval_rng.normal();
        double nll = 0.0, kl = 0.0;
        double elbo = net.elbo_loss(x_train, y_train, n, noise, nullptr, &nll, &kl);
        double val_nll = std::numeric_limits<double>::quiet_NaN();
        if (x_val.rows() > 0) {
            net.forward(x_val, noise, mean, scale);
            val_nll = gaussian_nll_mean(mean, scale, y_val);
        }
        history.elbo.push_back(elbo);
        history.nll.push_back(nll);
        history.kl.push_back(kl);
        history.val_nll.push_back(val_nll);
        history.lr.push_back(lr);

        bool finite = std::isfinite(elbo) && (x_val.rows() == 0 || std::isfinite(val_nll));
        if (finite) {
            for (double p : net.params()) {
                if (!std::isfinite(p)) {
                    finite = false;
                    break;
                }
            }
        }
        if (!finite) {
            throw RunError("bnn training diverged at epoch " + std::to_string(epoch) +
                           " (elbo " + format_double(elbo) + ")");
        }
    }
    return history;
}

void write_bnn_history_csv(const std::string& path, const BnnHistory& history) {
    CsvTable t;
    t.header = {"epoch", "elbo", "nll", "kl", "val_nll", "lr"};
    for (std::size_t e = 0; e < history.elbo.size(); ++e) {
        t.rows.push_back({std::to_string(e), format_double(history.elbo[e]),
                          format_double(history.nll[e]), format_double(history.kl[e]),
                          format_double(history.val_nll[e]), format_double(history.lr[e])});
    }
    write_csv(path, t);
}

BnnModel bnn_train(const BnnConfig& config, const TrainConfig& tc, const Matrix& x,
                   const std::vector<double>& y, const Matrix& x_val,
                   const std::vector<double>& y_val, const StandardScaler& scaler,
                   BaseModelKind base, BnnHistory* history) {
    check_feature_width(scaler, x, "bnn_train");
    if (x_val.rows() > 0) check_feature_width(scaler, x_val, "bnn_train (validation)");
    if (x.rows() != y.size()) {
        throw ValidationError("bnn_train: " + std::to_string(x.rows()) +
                              " feature rows vs " + std::to_string(y.size()) + " targets");
    }

    const Matrix xs = scaler.transform(x);
    const std::vector<double> ys = scaler.transform_target(y);
    const Matrix xvs = x_val.rows() > 0 ? scaler.transform(x_val) : x_val;
    const std::vector<double> yvs = scaler.transform_target(y_val);

    Bnn net(config);
    BnnHistory h = bnn_fit(net, xs, ys, xvs, yvs, tc);
    if (history != nullptr) *history = std::move(h);
    return BnnModel{std::move(net), scaler, base, tc.seed};
}

std::vector<PredictionSet> bnn_predict(const BnnModel& model, const Matrix& x,
                                       int n_samples, std::uint64_t sample_seed) {
    if (n_samples < 2) {
        throw ValidationError("bnn_predict: need at least 2 samples, got " +
                              std::to_string(n_samples));
    }
    check_feature_width(model.scaler, x, "bnn_predict");
    const Matrix xs = model.scaler.transform(x);
    const std::size_t d = xs.cols();

    std::vector<PredictionSet> sets;
    sets.reserve(xs.rows());
    std::vector<double> noise(model.net.noise_count());
    std::vector<double> mean, scale;
    for (std::size_t p = 0; p < xs.rows(); ++p) {
        Rng rng(derive_seed(sample_seed, SeedStream::sampling, p));
        Matrix xrow(1, d);
        std::copy(xs.row(p), xs.row(p) + d, xrow.row(0));
        std::vector<double> samples(static_cast<std::size_t>(n_samples));
        for (int s = 0; s < n_samples; ++s) {
            for (double& e : noise) e = rng.normal();
            model.net.forward(xrow, noise, mean, scale);
            const double draw = mean[0] + scale[0] * rng.normal();
            samples[static_cast<std::size_t>(s)] = model.scaler.inverse_target_mean(draw);
        }
        sets.push_back(prediction_from_samples(std::move(samples)));
    }
    return sets;
}

std::string BnnModel::to_json() const {
    nlohmann::ordered_json j;
    j["kind"] = "bnn";
    j["base"] = std::string(to_string(base));
    j["train_seed"] = train_seed;
    j["scaler"] = nlohmann::ordered_json::parse(scaler.to_json());
    j["net"] = nlohmann::ordered_json::parse(net.to_json());
    return j.dump(2);
}

BnnModel BnnModel::from_json(const std::string& text, const std::string& origin) {
    try {
        nlohmann::json j = nlohmann::json::parse(text);
        if (j.at("kind").get<std::string>() != "bnn") {
            throw SchemaError(origin + ": not a bnn model file");
        }
        return BnnModel{Bnn::from_json(j.at("net").dump(), origin),
                        StandardScaler::from_json(j.at("scaler").dump(), origin),
                        base_model_from_string(j.at("base").get<std::string>()),
                        j.at("train_seed").get<std::uint64_t>()};
    } catch (const nlohmann::json::exception& e) {
        throw SchemaError(origin + ": " + e.what());
    }
}

}  // namespace chf
