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

/// Committee of identically configured MLPs differing only in their seeds.
/// The scaler used at training time travels with the model so predictions
/// come back in physical units.
struct EnsembleModel {
    std::vector<Mlp> members;
    std::vector<std::uint64_t> member_seeds;
    StandardScaler scaler;
    BaseModelKind base = BaseModelKind::NoBase;

    std::string to_json() const;
    static EnsembleModel from_json(const std::string& text, const std::string& origin);
};

/// Member i trains with seed base_seed + i, used both for its weight
/// initialization and its batch shuffling. Inputs and targets arrive in
/// physical units and are standardized with the given scaler. Requires at
/// least two members; per-member divergence is collected and reported as
/// one error naming every failed member.
EnsembleModel train_ensemble(const MlpConfig& config, const TrainConfig& tc,
                             const Matrix& x, const std::vector<double>& y,
                             const Matrix& x_val, const std::vector<double>& y_val,
                             const StandardScaler& scaler, BaseModelKind base,
                             std::uint64_t base_seed, int n_members = 20,
                             int n_threads = 1);

/// train_ensemble with an explicit seed list; seeds must be pairwise
/// distinct. A single member is accepted here so degenerate committees can
/// be exercised in tests.
EnsembleModel train_ensemble_seeded(const MlpConfig& config, const TrainConfig& tc,
                                    const Matrix& x, const std::vector<double>& y,
                                    const Matrix& x_val, const std::vector<double>& y_val,
                                    const StandardScaler& scaler, BaseModelKind base,
                                    const std::vector<std::uint64_t>& seeds,
                                    int n_threads = 1);

/// Per point, every member's de-standardized output in kW/m^2 becomes one
/// sample; mean and population standard deviation aggregate the committee.
std::vector<PredictionSet> predict_ensemble(const EnsembleModel& model, const Matrix& x);

}  // namespace chf
