#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "chf/correlations.hpp"
#include "chf/dataset.hpp"
#include "chf/matrix.hpp"
#include "chf/nncore.hpp"
#include "chf/prediction.hpp"
#include "chf/rng.hpp"

namespace chf {

/// Squared-exponential kernel with one lengthscale per input dimension.
struct RbfKernel {
    double variance = 1.0;
    std::vector<double> lengthscales;
};

/// variance * exp(-1/2 sum_d ((x_d - y_d) / l_d)^2).
double rbf_eval(const RbfKernel& kernel, const std::vector<double>& x,
                const std::vector<double>& y);

/// One output GP of a layer: non-whitened variational posterior
/// q(u) = N(mean, cov_chol cov_chol^T) over the inducing outputs.
struct SvgpGp {
    std::vector<double> mean;
    Matrix cov_chol;  ///< lower triangular, positive diagonal
};

/// Sparse variational GP layer: one kernel and one inducing set shared by
/// all of the layer's output GPs. Inducing inputs are chosen at
/// initialization and stay fixed during training.
struct SvgpLayer {
    Matrix inducing;  ///< M x input dim
    RbfKernel kernel;
    std::vector<SvgpGp> gps;
    double jitter = 1e-6;
};

/// Posterior predictive of every output GP at the given inputs: mean and
/// variance per point and output, variance clamped at zero (values below
/// -1e-10 before the clamp are reported to stderr once per call).
/// Cholesky failures escalate the jitter by 10 twice before giving up.
void layer_predict(const SvgpLayer& layer, const Matrix& h, Matrix& mean, Matrix& var);

/// KL of one GP's variational posterior against its N(0, Kmm) prior.
double layer_kl(const SvgpLayer& layer, std::size_t gp_index);

struct DgpConfig {
    int input_dim = 5;
    int max_inducing = 128;  ///< M = min(max_inducing, training points)
    int mc_train = 5;        ///< layer-1 samples per training step
    int mc_predict = 50;     ///< layer-1 samples per prediction
    double jitter = 1e-6;
    double init_noise_var = 0.1;  ///< standardized targets have unit variance
    std::uint64_t seed = 0;

    void validate() const;
};

/// k-means++ style seeding: the first center uniform over rows, each
/// further center drawn with probability proportional to its squared
/// distance from the nearest chosen center.
Matrix kmeanspp_inducing(const Matrix& x, std::size_t m, Rng& rng);

/// Two sparse variational GP layers with a Gaussian likelihood. Layer 1
/// carries one GP per input dimension and adds its input as an identity
/// skip, layer 2 reduces to a single output. Trainable state is the two
/// kernels, every GP's variational mean and covariance factor, and the
/// likelihood noise variance; inducing inputs stay fixed.
struct Dgp {
    DgpConfig config;
    SvgpLayer layer1;
    SvgpLayer layer2;
    double noise_var = 1e-2;

    /// Inducing points seeded from the rows of x_init (standardized units);
    /// both layers start from the same points since layer 1 initializes to
    /// the identity map.
    Dgp(const DgpConfig& config, const Matrix& x_init);

    /// Flat trainable-parameter vector: per layer the log kernel variance,
    /// log lengthscales, then per GP the variational state in whitened
    /// coordinates (mean and row-major lower covariance factor relative to
    /// the prior Cholesky, diagonal stored as logs); the log likelihood
    /// noise variance last. The stored posterior stays non-whitened;
    /// params()/set_params() convert through the current prior Cholesky,
    /// which keeps optimizer steps well scaled on ill-conditioned Gram
    /// matrices.
    std::vector<double> params() const;
    void set_params(const std::vector<double>& flat);
    std::size_t param_count() const;

    /// Normal draws consumed by one ELBO evaluation: mc * batch * input_dim.
    std::size_t noise_count(std::size_t batch, int mc) const;

    /// Negative per-point ELBO: layer-1 outputs are sampled mc times via
    /// the given noise (reparameterized), the Gaussian expectation over
    /// layer 2 is analytic, and the KL of both layers is apportioned as
    /// KL_total / n_total. Optional outputs: the gradient with respect to
    /// params() and the two terms separately (loss = fit + kl exactly).
    double elbo_loss(const Matrix& x, const std::vector<double>& y, std::size_t n_total,
                     const std::vector<double>& noise, int mc,
                     std::vector<double>* grad = nullptr, double* fit_term = nullptr,
                     double* kl_term = nullptr) const;

    std::string to_json() const;
    static Dgp from_json(const std::string& text, const std::string& origin);
};

/// Per-epoch training record; loss = fit + kl for every row.
struct DgpHistory {
    std::vector<double> loss;
    std::vector<double> fit;
    std::vector<double> kl;
    std::vector<double> val_fit;  ///< NaN when no validation data given
    std::vector<double> lr;
};

void write_dgp_history_csv(const std::string& path, const DgpHistory& history);

/// Minibatch Adam on the sampled ELBO in standardized space, fresh layer-1
/// draws each step, epoch-end losses on a dedicated per-epoch draw.
/// Divergence aborts with the epoch in the error.
DgpHistory dgp_fit(Dgp& net, const Matrix& x_train, const std::vector<double>& y_train,
                   const Matrix& x_val, const std::vector<double>& y_val,
                   const TrainConfig& tc);

/// Trained two-layer GP plus the scaler that maps it back to physical
/// units, mirroring EnsembleModel and BnnModel.
struct DgpModel {
    Dgp net;
    StandardScaler scaler;
    BaseModelKind base = BaseModelKind::NoBase;
    std::uint64_t train_seed = 0;

    std::string to_json() const;
    static DgpModel from_json(const std::string& text, const std::string& origin);
};

/// Standardizes physical-unit data with the given scaler, seeds the
/// inducing points from the standardized inputs, and fits the network.
DgpModel dgp_train(const DgpConfig& config, const TrainConfig& tc, const Matrix& x,
                   const std::vector<double>& y, const Matrix& x_val,
                   const std::vector<double>& y_val, const StandardScaler& scaler,
                   BaseModelKind base, DgpHistory* history = nullptr);

/// Moment-based prediction: per point, mc_samples layer-1 draws feed the
/// analytic layer-2 posterior; the reported variance is the mean layer-2
/// variance plus the spread of the layer-2 means plus the likelihood
/// noise. No samples are retained. Every point draws from its own seed
/// derived from (sample_seed, point index).
std::vector<PredictionSet> dgp_predict(const DgpModel& model, const Matrix& x,
                                       int mc_samples = 50,
                                       std::uint64_t sample_seed = 0);

}  // namespace chf
