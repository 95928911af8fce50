#include "chf/nncore.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "chf/csv.hpp"
#include "chf/errors.hpp"
#include "chf/rng.hpp"
#include "json.hpp"

namespace chf {

std::string_view to_string(Activation a) {
    switch (a) {
        case Activation::Relu: return "relu";
        case Activation::Tanh: return "tanh";
        case Activation::Sigmoid: return "sigmoid";
        case Activation::Swish: return "swish";
    }
    throw ValidationError("unknown Activation value");
}

Activation activation_from_string(std::string_view name) {
    if (name == "relu") return Activation::Relu;
    if (name == "tanh") return Activation::Tanh;
    if (name == "sigmoid") return Activation::Sigmoid;
    if (name == "swish") return Activation::Swish;
    throw ValidationError("unknown activation '" + std::string(name) +
                          "'; expected relu, tanh, sigmoid or swish");
}

namespace {

double sigmoid(double z) { return 1.0 / (1.0 + std::exp(-z)); }

}  // namespace

double activate(Activation a, double z) {
    switch (a) {
        case Activation::Relu: return z > 0.0 ? z : 0.0;
        case Activation::Tanh: return std::tanh(z);
        case Activation::Sigmoid: return sigmoid(z);
        case Activation::Swish: return z * sigmoid(z);
    }
    throw ValidationError("unknown Activation value");
}

double activate_grad(Activation a, double z) {
    switch (a) {
        case Activation::Relu: return z > 0.0 ? 1.0 : 0.0;
        case Activation::Tanh: {
            double t = std::tanh(z);
            return 1.0 - t * t;
        }
        case Activation::Sigmoid: {
            double s = sigmoid(z);
            return s * (1.0 - s);
        }
        case Activation::Swish: {
            double s = sigmoid(z);
            return s + z * s * (1.0 - s);
        }
    }
    throw ValidationError("unknown Activation value");
}

void MlpConfig::validate() const {
    if (hidden_widths.empty()) {
        throw ValidationError("network needs at least one hidden layer");
    }
    for (int w : hidden_widths) {
        if (w <= 0) {
            throw ValidationError("hidden width must be positive, got " +
                                  std::to_string(w));
        }
    }
    if (input_dim <= 0 || output_dim <= 0) {
        throw ValidationError("input and output dimensions must be positive");
    }
}

void Mlp::build_layout() {
    std::vector<std::size_t> dims;
    dims.push_back(static_cast<std::size_t>(config_.input_dim));
    for (int w : config_.hidden_widths) dims.push_back(static_cast<std::size_t>(w));
    dims.push_back(static_cast<std::size_t>(config_.output_dim));

    std::size_t offset = 0;
    for (std::size_t l = 0; l + 1 < dims.size(); ++l) {
        in_.push_back(dims[l]);
        out_.push_back(dims[l + 1]);
        w_off_.push_back(offset);
        offset += dims[l] * dims[l + 1];
        b_off_.push_back(offset);
        offset += dims[l + 1];
    }
    params_.assign(offset, 0.0);
}

Mlp::Mlp(const MlpConfig& config) : config_(config) {
    config_.validate();
    build_layout();
    Rng rng(config_.seed);
    for (std::size_t l = 0; l < in_.size(); ++l) {
        double bound = std::sqrt(6.0 / static_cast<double>(in_[l] + out_[l]));
        for (std::size_t k = 0; k < in_[l] * out_[l]; ++k) {
            params_[w_off_[l] + k] = rng.uniform(-bound, bound);
        }
    }
}

Matrix Mlp::forward(const Matrix& x) const {
    Cache cache;
    return forward(x, cache);
}

Matrix Mlp::forward(const Matrix& x, Cache& cache) const {
    if (x.cols() != static_cast<std::size_t>(config_.input_dim)) {
        throw ValidationError("network expects " + std::to_string(config_.input_dim) +
                              " input features, got " + std::to_string(x.cols()));
    }
    cache.pre.clear();
    cache.act.clear();
    cache.act.push_back(x);
    const std::size_t n = x.rows();
    for (std::size_t l = 0; l < in_.size(); ++l) {
        const Matrix& a_prev = cache.act.back();
        const double* w = params_.data() + w_off_[l];
        const double* b = params_.data() + b_off_[l];
        Matrix z(n, out_[l]);
        for (std::size_t i = 0; i < n; ++i) {
            const double* ai = a_prev.row(i);
            double* zi = z.row(i);
            for (std::size_t o = 0; o < out_[l]; ++o) {
                const double* wo = w + o * in_[l];
                double acc = b[o];
                for (std::size_t k = 0; k < in_[l]; ++k) acc += wo[k] * ai[k];
                zi[o] = acc;
            }
        }
        bool last = l + 1 == in_.size();
        Matrix a = z;
        if (!last) {
            for (std::size_t i = 0; i < a.size(); ++i) {
                a.data()[i] = activate(config_.activation, z.data()[i]);
            }
        }
        cache.pre.push_back(std::move(z));
        cache.act.push_back(std::move(a));
    }
    return cache.act.back();
}

std::vector<double> Mlp::backward(const Cache& cache, const Matrix& grad_out) const {
    if (cache.act.size() != in_.size() + 1) {
        throw ValidationError("backward called without a matching forward cache");
    }
    const std::size_t n = grad_out.rows();
    if (grad_out.cols() != out_.back() || n != cache.act.back().rows()) {
        throw ValidationError("output gradient shape does not match the forward pass");
    }

    std::vector<double> grad(params_.size(), 0.0);
    Matrix delta = grad_out;
    for (std::size_t li = in_.size(); li-- > 0;) {
        const Matrix& a_prev = cache.act[li];
        double* gw = grad.data() + w_off_[li];
        double* gb = grad.data() + b_off_[li];
        for (std::size_t i = 0; i < n; ++i) {
            const double* di = delta.row(i);
            const double* ai = a_prev.row(i);
            for (std::size_t o = 0; o < out_[li]; ++o) {
                double d = di[o];
                if (d == 0.0) continue;
                double* gwo = gw + o * in_[li];
                for (std::size_t k = 0; k < in_[li]; ++k) gwo[k] += d * ai[k];
                gb[o] += d;
            }
        }
        if (li == 0) break;

        const double* w = params_.data() + w_off_[li];
        const Matrix& z_prev = cache.pre[li - 1];
        Matrix next(n, in_[li]);
        for (std::size_t i = 0; i < n; ++i) {
            const double* di = delta.row(i);
            double* ni = next.row(i);
            for (std::size_t o = 0; o < out_[li]; ++o) {
                double d = di[o];
                if (d == 0.0) continue;
                const double* wo = w + o * in_[li];
                for (std::size_t k = 0; k < in_[li]; ++k) ni[k] += d * wo[k];
            }
            const double* zi = z_prev.row(i);
            for (std::size_t k = 0; k < in_[li]; ++k) {
                ni[k] *= activate_grad(config_.activation, zi[k]);
            }
        }
        delta = std::move(next);
    }
    return grad;
}

std::string Mlp::to_json() const {
    nlohmann::ordered_json j;
    j["hidden_widths"] = config_.hidden_widths;
    j["activation"] = std::string(to_string(config_.activation));
    j["input_dim"] = config_.input_dim;
    j["output_dim"] = config_.output_dim;
    j["seed"] = config_.seed;
    j["params"] = params_;
    return j.dump();
}

Mlp Mlp::from_json(const std::string& text, const std::string& origin) {
    try {
        nlohmann::json j = nlohmann::json::parse(text);
        MlpConfig config;
        config.hidden_widths = j.at("hidden_widths").get<std::vector<int>>();
        config.activation = activation_from_string(j.at("activation").get<std::string>());
        config.input_dim = j.at("input_dim").get<int>();
        config.output_dim = j.at("output_dim").get<int>();
        config.seed = j.at("seed").get<std::uint64_t>();
        Mlp mlp(config);
        auto params = j.at("params").get<std::vector<double>>();
        if (params.size() != mlp.param_count()) {
            throw SchemaError(origin + ": weight file holds " +
                              std::to_string(params.size()) + " parameters, network needs " +
                              std::to_string(mlp.param_count()));
        }
        mlp.params() = std::move(params);
        return mlp;
    } catch (const nlohmann::json::exception& e) {
        throw SchemaError(origin + ": " + e.what());
    }
}

double mse_loss(const Matrix& pred, const std::vector<double>& targets, Matrix* grad) {
    if (pred.cols() != 1) {
        throw ValidationError("mse_loss expects a single prediction column, got " +
                              std::to_string(pred.cols()));
    }
    if (pred.rows() != targets.size()) {
        throw ValidationError("mse_loss: " + std::to_string(pred.rows()) +
                              " predictions vs " + std::to_string(targets.size()) +
                              " targets");
    }
    if (targets.empty()) throw ValidationError("mse_loss: empty input");

    double n = static_cast<double>(targets.size());
    double loss = 0.0;
    if (grad != nullptr) *grad = Matrix(pred.rows(), 1);
    for (std::size_t i = 0; i < targets.size(); ++i) {
        double d = pred(i, 0) - targets[i];
        loss += d * d;
        if (grad != nullptr) (*grad)(i, 0) = 2.0 * d / n;
    }
    return loss / n;
}

void Adam::step(std::vector<double>& params, const std::vector<double>& grad, double lr) {
    if (params.size() != grad.size()) {
        throw ValidationError("Adam: " + std::to_string(params.size()) +
                              " parameters vs " + std::to_string(grad.size()) +
                              " gradients");
    }
    if (m_.empty()) {
        m_.assign(params.size(), 0.0);
        v_.assign(params.size(), 0.0);
    }
    ++t_;
    double c1 = 1.0 - std::pow(beta1, static_cast<double>(t_));
    double c2 = 1.0 - std::pow(beta2, static_cast<double>(t_));
    for (std::size_t i = 0; i < params.size(); ++i) {
        m_[i] = beta1 * m_[i] + (1.0 - beta1) * grad[i];
        v_[i] = beta2 * v_[i] + (1.0 - beta2) * grad[i] * grad[i];
        params[i] -= lr * (m_[i] / c1) / (std::sqrt(v_[i] / c2) + eps);
    }
}

void TrainConfig::validate() const {
    if (epochs <= 0) throw ValidationError("epochs must be positive");
    if (!(lr0 >= 0.0) || !std::isfinite(lr0)) {
        throw ValidationError("lr0 must be finite and non-negative");
    }
    if (!(decay_rate > 0.0 && decay_rate <= 1.0)) {
        throw ValidationError("decay_rate must lie in (0, 1]");
    }
    if (decay_epochs <= 0) throw ValidationError("decay_epochs must be positive");
    if (batch_size < 0) throw ValidationError("batch_size must be non-negative");
}

double learning_rate(const TrainConfig& tc, int epoch) {
    return tc.lr0 * std::pow(tc.decay_rate,
                             static_cast<double>(epoch) /
                                 static_cast<double>(tc.decay_epochs));
}

TrainHistory train_mlp(Mlp& mlp, const Matrix& x_train, const std::vector<double>& y_train,
                       const Matrix& x_val, const std::vector<double>& y_val,
                       const TrainConfig& tc) {
    tc.validate();
    if (x_train.rows() == 0) throw ValidationError("training set is empty");
    if (x_train.rows() != y_train.size()) {
        throw ValidationError("train_mlp: " + std::to_string(x_train.rows()) +
                              " training rows vs " + std::to_string(y_train.size()) +
                              " targets");
    }
    if (x_val.rows() != y_val.size()) {
        throw ValidationError("train_mlp: " + std::to_string(x_val.rows()) +
                              " validation rows vs " + std::to_string(y_val.size()) +
                              " targets");
    }

    const std::size_t n = x_train.rows();
    const std::size_t d = x_train.cols();
    std::size_t bs = tc.batch_size == 0 ? n
                                        : std::min<std::size_t>(
                                              static_cast<std::size_t>(tc.batch_size), n);
    Rng shuffle_rng(derive_seed(tc.seed, SeedStream::shuffle));
    Adam adam;
    TrainHistory history;

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
            Mlp::Cache cache;
            Matrix pred = mlp.forward(xb, cache);
            Matrix grad_out;
            mse_loss(pred, yb, &grad_out);
            std::vector<double> grad = mlp.backward(cache, grad_out);
            adam.step(mlp.params(), grad, lr);
        }

        double train_loss = mse_loss(mlp.forward(x_train), y_train);
        double val_loss = std::numeric_limits<double>::quiet_NaN();
        if (x_val.rows() > 0) val_loss = mse_loss(mlp.forward(x_val), y_val);
        history.train_loss.push_back(train_loss);
        history.val_loss.push_back(val_loss);
        history.lr.push_back(lr);

        bool finite = std::isfinite(train_loss) &&
                      (x_val.rows() == 0 || std::isfinite(val_loss));
        if (finite) {
            for (double p : mlp.params()) {
                if (!std::isfinite(p)) {
                    finite = false;
                    break;
                }
            }
        }
        if (!finite) {
            throw RunError("training diverged at epoch " + std::to_string(epoch) +
                           " (train loss " + format_double(train_loss) + ")");
        }
    }
    return history;
}

void write_loss_history_csv(const std::string& path, const TrainHistory& history) {
    CsvTable t;
    t.header = {"epoch", "train_loss", "val_loss", "lr"};
    for (std::size_t e = 0; e < history.train_loss.size(); ++e) {
        t.rows.push_back({std::to_string(e), format_double(history.train_loss[e]),
                          format_double(history.val_loss[e]), format_double(history.lr[e])});
    }
    write_csv(path, t);
}

std::vector<double> finite_difference_gradient(
    const std::function<double(const std::vector<double>&)>& f,
    std::vector<double> params, double h) {
    std::vector<double> grad(params.size());
    for (std::size_t i = 0; i < params.size(); ++i) {
        double orig = params[i];
        params[i] = orig + h;
        double up = f(params);
        params[i] = orig - h;
        double down = f(params);
        params[i] = orig;
        grad[i] = (up - down) / (2.0 * h);
    }
    return grad;
}

double gradient_check_ratio(const std::vector<double>& analytic,
                            const std::vector<double>& numeric, double rtol,
                            double atol) {
    if (analytic.size() != numeric.size()) {
        throw ValidationError("gradient_check_ratio: vectors differ in length");
    }
    double worst = 0.0;
    for (std::size_t i = 0; i < analytic.size(); ++i) {
        double scale = rtol * std::max(std::abs(analytic[i]), std::abs(numeric[i])) + atol;
        worst = std::max(worst, std::abs(analytic[i] - numeric[i]) / scale);
    }
    return worst;
}

TuneResult tune(const TuneSpace& space, const TuneOptions& options,
                const Matrix& x_train, const std::vector<double>& y_train,
                const Matrix& x_val, const std::vector<double>& y_val) {
    auto require_nonempty = [](bool ok, const char* what) {
        if (!ok) throw ValidationError(std::string("tuning space has no ") + what);
    };
    require_nonempty(!space.depths.empty(), "depths");
    require_nonempty(!space.widths.empty(), "widths");
    require_nonempty(!space.activations.empty(), "activations");
    require_nonempty(!space.lr0s.empty(), "learning rates");
    require_nonempty(!space.batch_sizes.empty(), "batch sizes");
    if (options.budget < 1) throw ValidationError("tuner budget must be positive");
    if (options.rungs < 0) throw ValidationError("tuner rungs must be non-negative");
    if (options.rung0_epochs < 1) {
        throw ValidationError("tuner first-rung epochs must be positive");
    }
    if (options.budget < (1L << options.rungs)) {
        throw ValidationError("tuner budget " + std::to_string(options.budget) +
                              " cannot survive " + std::to_string(options.rungs) +
                              " halvings; needs at least 2^" +
                              std::to_string(options.rungs));
    }
    if (x_val.rows() == 0) {
        throw ValidationError("tuner needs a nonempty validation set");
    }

    Rng cfg_rng(derive_seed(options.seed, SeedStream::tuner));
    auto pick_int = [&](const std::vector<int>& v) {
        return v[static_cast<std::size_t>(cfg_rng.uniform_int(v.size()))];
    };

    TuneResult result;
    result.trials.resize(static_cast<std::size_t>(options.budget));
    for (int t = 0; t < options.budget; ++t) {
        TuneTrial& trial = result.trials[static_cast<std::size_t>(t)];
        trial.trial = t;
        int depth = pick_int(space.depths);
        trial.mlp.hidden_widths.clear();
        for (int l = 0; l < depth; ++l) trial.mlp.hidden_widths.push_back(pick_int(space.widths));
        trial.mlp.activation =
            space.activations[cfg_rng.uniform_int(space.activations.size())];
        trial.mlp.input_dim = static_cast<int>(x_train.cols());
        trial.mlp.output_dim = 1;
        trial.mlp.seed = derive_seed(options.seed, SeedStream::init,
                                     static_cast<std::uint64_t>(t));
        trial.tc.lr0 = space.lr0s[cfg_rng.uniform_int(space.lr0s.size())];
        trial.tc.batch_size = pick_int(space.batch_sizes);
        trial.tc.decay_rate = options.decay_rate;
        trial.tc.decay_epochs = options.decay_epochs;
        trial.tc.seed = derive_seed(options.seed, SeedStream::train,
                                    static_cast<std::uint64_t>(t));
    }

    std::vector<int> survivors(static_cast<std::size_t>(options.budget));
    std::iota(survivors.begin(), survivors.end(), 0);
    for (int rung = 0; rung <= options.rungs; ++rung) {
        int epochs = options.rung0_epochs << rung;
        for (int idx : survivors) {
            TuneTrial& trial = result.trials[static_cast<std::size_t>(idx)];
            trial.tc.epochs = epochs;
            trial.rung = rung;
            trial.epochs = epochs;
            try {
                Mlp mlp(trial.mlp);
                TrainHistory h = train_mlp(mlp, x_train, y_train, x_val, y_val, trial.tc);
                trial.val_loss = h.val_loss.back();
            } catch (const RunError&) {
                trial.val_loss = std::numeric_limits<double>::infinity();
            }
        }
        auto by_loss = [&](int a, int b) {
            double la = result.trials[static_cast<std::size_t>(a)].val_loss;
            double lb = result.trials[static_cast<std::size_t>(b)].val_loss;
            if (la != lb) return la < lb;
            return a < b;
        };
        std::sort(survivors.begin(), survivors.end(), by_loss);
        if (rung < options.rungs) {
            survivors.resize((survivors.size() + 1) / 2);
        }
    }

    const TuneTrial& best = result.trials[static_cast<std::size_t>(survivors.front())];
    if (!std::isfinite(best.val_loss)) {
        throw RunError("every tuning trial diverged");
    }
    result.best_mlp = best.mlp;
    result.best_tc = best.tc;
    result.best_val_loss = best.val_loss;
    return result;
}

}  // namespace chf
