#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "chf/correlations.hpp"
#include "chf/dataset.hpp"
#include "chf/matrix.hpp"
#include "chf/nncore.hpp"
#include "chf/prediction.hpp"

namespace chf {

/// KL divergence between diagonal Gaussians, summed over components:
/// sum of log(sp/sq) + (sq^2 + (mq - mp)^2) / (2 sp^2) - 1/2.
double kl_gaussian(const std::vector<double>& post_mean,
                   const std::vector<double>& post_std, double prior_mean = 0.0,
                   double prior_std = 1.0);

struct BnnConfig {
    std::vector<int> hidden_widths = {64, 64, 64, 64};
    Activation activation = Activation::Swish;
    int input_dim = 5;
    double scale_floor = 1e-4;  ///< lower bound on the likelihood scale, standardized units
    double kl_scale = 1.0;      ///< weight on the KL term; 0 turns off the prior
    double fixed_scale = 0.0;   ///< when > 0 the likelihood scale is pinned to this value
    std::uint64_t seed = 0;

    void validate() const;
};

/// Mean-field variational MLP with standard-normal priors on every weight
/// and bias. Each dense layer carries a mean and a rho for each parameter,
/// with posterior std = softplus(rho); the head emits two outputs per
/// point, the predicted mean and the raw likelihood scale. All variational
/// parameters live in one flat vector laid out per layer as
/// [W_mean, b_mean, W_rho, b_rho] so one optimizer state covers the model.
class Bnn {
  public:
    /// Posterior means from Glorot-uniform draws shrunk by 10, rhos set so
    /// softplus(rho) is 0.05: a small perturbation around the prior mean.
    explicit Bnn(const BnnConfig& config);

    const BnnConfig& config() const { return config_; }
    std::vector<double>& params() { return params_; }
    const std::vector<double>& params() const { return params_; }
    std::size_t param_count() const { return params_.size(); }
    std::size_t layer_count() const { return in_.size(); }

    /// Normal draws needed for one reparameterized weight realization.
    std::size_t noise_count() const { return noise_count_; }

    /// Deterministic forward pass through the weight realization
    /// mean + softplus(rho) * noise; per point the head mean and the
    /// floored likelihood scale, both in standardized units.
    void forward(const Matrix& x, const std::vector<double>& noise,
                 std::vector<double>& mean, std::vector<double>& scale) const;

    /// KL of the full posterior against the N(0,1) prior.
    double kl_total() const;

    /// Single-draw negative ELBO: mean Gaussian negative log likelihood
    /// over the batch plus kl_scale * KL_total / n_total. Optional outputs:
    /// the gradient with respect to the flat parameters and the two loss
    /// terms separately (loss = nll_term + kl_term exactly).
    double elbo_loss(const Matrix& x, const std::vector<double>& y,
                     std::size_t n_total, const std::vector<double>& noise,
                     std::vector<double>* grad = nullptr, double* nll_term = nullptr,
                     double* kl_term = nullptr) const;

    std::string to_json() const;
    static Bnn from_json(const std::string& text, const std::string& origin);

  private:
    void build_layout();

    BnnConfig config_;
    std::vector<std::size_t> in_, out_;  ///< per dense layer (head included)
    std::vector<std::size_t> wmu_off_, bmu_off_, wrho_off_, brho_off_;
    std::vector<std::size_t> noise_off_;  ///< per layer offset into the noise vector
    std::vector<double> params_;
    std::size_t noise_count_ = 0;
};

/// Per-epoch training record; elbo = nll + kl for every row.
struct BnnHistory {
    std::vector<double> elbo;
    std::vector<double> nll;
    std::vector<double> kl;
    std::vector<double> val_nll;  ///< NaN when no validation data given
    std::vector<double> lr;
};

void write_bnn_history_csv(const std::string& path, const BnnHistory& history);

/// Minibatch Adam on the single-draw ELBO in standardized space, one fresh
/// reparameterization draw per step. Epoch-end losses are evaluated on a
/// dedicated per-epoch draw. Divergence aborts with the epoch in the error.
BnnHistory bnn_fit(Bnn& net, const Matrix& x_train, const std::vector<double>& y_train,
                   const Matrix& x_val, const std::vector<double>& y_val,
                   const TrainConfig& tc);

/// Trained variational network plus the scaler that maps it back to
/// physical units, mirroring EnsembleModel.
struct BnnModel {
    Bnn net;
    StandardScaler scaler;
    BaseModelKind base = BaseModelKind::NoBase;
    std::uint64_t train_seed = 0;

    std::string to_json() const;
    static BnnModel from_json(const std::string& text, const std::string& origin);
};

/// Standardizes physical-unit data with the given scaler and fits the
/// variational network on it; the scaler travels with the model.
BnnModel bnn_train(const BnnConfig& config, const TrainConfig& tc, const Matrix& x,
                   const std::vector<double>& y, const Matrix& x_val,
                   const std::vector<double>& y_val, const StandardScaler& scaler,
                   BaseModelKind base, BnnHistory* history = nullptr);

/// Posterior-predictive sampling: per point, n_samples weight realizations,
/// each with one likelihood-noise draw added, de-standardized to kW/m^2 and
/// aggregated like an ensemble. Every point draws from its own seed derived
/// from (sample_seed, point index) so results are independent of prediction
/// order and batching.
std::vector<PredictionSet> bnn_predict(const BnnModel& model, const Matrix& x,
                                       int n_samples = 200,
                                       std::uint64_t sample_seed = 0);

}  // namespace chf
