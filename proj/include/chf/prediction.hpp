#pragma once

#include <vector>

namespace chf {

/// Uncertainty-carrying prediction for one test point, physical units
/// (kW/m^2). samples holds raw committee or posterior draws when the
/// backend produces them; moment-based backends fill mean and std directly.
struct PredictionSet {
    std::vector<double> samples;
    double mean = 0.0;
    double std_dev = 0.0;
    double rstd = 0.0;       ///< percent, 100 * std / |mean|
    double lo_2sigma = 0.0;  ///< mean - 2 std
    double hi_2sigma = 0.0;  ///< mean + 2 std
};

/// Aggregate raw samples into a PredictionSet. The standard deviation uses
/// divisor n, treating the draws as samples from the predictive distribution.
PredictionSet prediction_from_samples(std::vector<double> samples);

/// Build a PredictionSet from precomputed moments; no samples retained.
PredictionSet prediction_from_moments(double mean, double std_dev);

}  // namespace chf
