#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <string_view>
#include <vector>

#include "chf/matrix.hpp"

namespace chf {

enum class Activation { Relu, Tanh, Sigmoid, Swish };

std::string_view to_string(Activation a);
Activation activation_from_string(std::string_view name);

double activate(Activation a, double z);
double activate_grad(Activation a, double z);

struct MlpConfig {
    std::vector<int> hidden_widths;
    Activation activation = Activation::Swish;
    int input_dim = 5;
    int output_dim = 1;
    std::uint64_t seed = 0;

    void validate() const;
};

/// Dense feed-forward network with a linear output layer. Parameters live
/// in one flat vector laid out [W0, b0, W1, b1, ...] with row-major weight
/// blocks (rows = layer outputs), which keeps the optimizer, serialization
/// and finite-difference checks simple.
class Mlp {
  public:
    /// Glorot-uniform weights from the config seed, zero biases.
    explicit Mlp(const MlpConfig& config);

    const MlpConfig& config() const { return config_; }
    std::vector<double>& params() { return params_; }
    const std::vector<double>& params() const { return params_; }
    std::size_t param_count() const { return params_.size(); }
    std::size_t layer_count() const { return in_.size(); }

    Matrix forward(const Matrix& x) const;

    /// Intermediate values kept for the backward pass: act[0] is the input,
    /// act[l+1] the output of dense layer l, pre[l] its pre-activation.
    struct Cache {
        std::vector<Matrix> pre;
        std::vector<Matrix> act;
    };

    Matrix forward(const Matrix& x, Cache& cache) const;

    /// Gradient of the loss with respect to every parameter, given
    /// dL/doutput and the cache of the matching forward call.
    std::vector<double> backward(const Cache& cache, const Matrix& grad_out) const;

    std::string to_json() const;
    static Mlp from_json(const std::string& text, const std::string& origin);

  private:
    void build_layout();

    MlpConfig config_;
    std::vector<std::size_t> in_, out_;     ///< per dense layer
    std::vector<std::size_t> w_off_, b_off_;
    std::vector<double> params_;
};

/// Mean squared error over an (n x 1) prediction column; optionally its
/// gradient with respect to the predictions.
double mse_loss(const Matrix& pred, const std::vector<double>& targets,
                Matrix* grad = nullptr);

/// Adam with bias correction; state sized lazily to the parameter vector.
struct Adam {
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;

    void step(std::vector<double>& params, const std::vector<double>& grad, double lr);

  private:
    std::vector<double> m_, v_;
    long t_ = 0;
};

struct TrainConfig {
    int epochs = 250;
    double lr0 = 1e-3;
    double decay_rate = 0.96;
    int decay_epochs = 1;   ///< epochs per decay step
    int batch_size = 64;    ///< 0 means full batch
    std::uint64_t seed = 0;

    void validate() const;
};

/// lr0 * decay_rate^(epoch / decay_epochs), epoch counted from 0.
double learning_rate(const TrainConfig& tc, int epoch);

struct TrainHistory {
    std::vector<double> train_loss;
    std::vector<double> val_loss;  ///< NaN when no validation data given
    std::vector<double> lr;
};

/// Minibatch Adam on the mean squared error, batch order reshuffled each
/// epoch from the training seed. Aborts with a divergence error when any
/// recorded loss or parameter stops being finite.
TrainHistory train_mlp(Mlp& mlp, const Matrix& x_train, const std::vector<double>& y_train,
                       const Matrix& x_val, const std::vector<double>& y_val,
                       const TrainConfig& tc);

void write_loss_history_csv(const std::string& path, const TrainHistory& history);

/// Central finite differences of a scalar function of a flat parameter
/// vector; the reference oracle for every analytic gradient in the suite.
std::vector<double> finite_difference_gradient(
    const std::function<double(const std::vector<double>&)>& f,
    std::vector<double> params, double h);

/// Largest |a - b| / (rtol * max(|a|, |b|) + atol) over both vectors; a
/// result <= 1 means every component agrees within the tolerances.
double gradient_check_ratio(const std::vector<double>& analytic,
                            const std::vector<double>& numeric, double rtol,
                            double atol);

/// Discrete search space for the tuner; every list must be nonempty.
struct TuneSpace {
    std::vector<int> depths;
    std::vector<int> widths;
    std::vector<Activation> activations;
    std::vector<double> lr0s;
    std::vector<int> batch_sizes;
};

struct TuneOptions {
    int budget = 8;        ///< random configurations sampled
    int rungs = 2;         ///< halvings; budget must be >= 2^rungs
    int rung0_epochs = 10; ///< epochs at the first rung, doubled per rung
    std::uint64_t seed = 0;
    double decay_rate = 0.96;
    int decay_epochs = 1;
};

struct TuneTrial {
    int trial = 0;
    int rung = 0;      ///< last rung this trial was trained at
    int epochs = 0;
    double val_loss = 0.0;
    MlpConfig mlp;
    TrainConfig tc;
};

struct TuneResult {
    MlpConfig best_mlp;
    TrainConfig best_tc;
    double best_val_loss = 0.0;
    std::vector<TuneTrial> trials;
};

/// Synchronous successive halving over random draws from the space:
/// every sampled configuration trains at the first rung, the better half
/// (ceil) is retrained from scratch at double the epochs each rung, and
/// the survivor with the lowest validation loss wins. Diverging trials
/// score infinity rather than aborting the search.
TuneResult tune(const TuneSpace& space, const TuneOptions& options,
                const Matrix& x_train, const std::vector<double>& y_train,
                const Matrix& x_val, const std::vector<double>& y_val);

}  // namespace chf
