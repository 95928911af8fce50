#pragma once

#include <optional>
#include <string>
#include <vector>

#include "chf/prediction.hpp"

namespace chf {

/// Standard normal CDF.
double normal_cdf(double z);

/// Inverse standard normal CDF on (0, 1), absolute error below 1e-9.
double normal_quantile(double p);

/// Linear-interpolation quantile of a sample (same convention as the
/// common default in numeric packages). q in [0, 1].
double sample_quantile(std::vector<double> values, double q);

/// Summary metrics over a test set. Percentages on a 0..100 scale. The
/// rStd aggregates are present only when the predictions carry
/// uncertainty; serialized reports record the rStd convention used.
struct MetricsReport {
    double mu_error = 0.0;   ///< percent, mean absolute relative error
    double max_error = 0.0;  ///< percent
    std::optional<double> mean_rstd;  ///< percent
    std::optional<double> max_rstd;   ///< percent
    double rrmse = 0.0;      ///< percent, root mean square relative error
    double f_gt10 = 0.0;     ///< percent of points with |relative error| strictly above 10%
    double r2 = 0.0;
};

/// Serialize a report as a JSON object (field names match the struct).
std::string metrics_to_json(const MetricsReport& report);

/// Score point predictions without uncertainty; rStd aggregates absent.
MetricsReport metrics(const std::vector<double>& y_true,
                      const std::vector<double>& y_pred);

/// Score uncertainty-carrying predictions.
MetricsReport metrics(const std::vector<double>& y_true,
                      const std::vector<PredictionSet>& preds);

/// Observed vs expected cumulative fractions of standardized residuals
/// z = (y - mean) / std against the standard normal.
struct CalibrationCurve {
    std::vector<double> expected_p;
    std::vector<double> observed_p;
    double miscalibration_area = 0.0;
};

/// Build the calibration curve on the probability grid j / (grid_size + 1),
/// j = 1..grid_size; the area is the trapezoidal integral of
/// |observed - expected| over that grid.
CalibrationCurve calibration_curve(const std::vector<double>& y_true,
                                   const std::vector<PredictionSet>& preds,
                                   int grid_size = 100);

/// Histogram and Gaussian KDE of per-point rStd values.
struct RstdDistribution {
    std::vector<double> bin_edges;  ///< bins + 1 equal-width edges from 0
    std::vector<int> counts;
    int outliers_removed = 0;       ///< points beyond Q3 + 1.5 IQR, when dropped
    std::vector<double> kde_x;      ///< percent, 256 grid points
    std::vector<double> kde_density;
};

/// KDE bandwidth follows Silverman's rule; outliers beyond Q3 + 1.5 IQR
/// are removed from both histogram and KDE when requested.
RstdDistribution rstd_distribution(const std::vector<PredictionSet>& preds,
                                   int bins, bool drop_outliers);

struct ParityPoint {
    double y_true = 0.0;
    double mean = 0.0;
    double lo_2sigma = 0.0;
    double hi_2sigma = 0.0;
    double rstd = 0.0;
    bool inside_band = false;  ///< |relative error| <= band
};

/// Measured vs predicted scatter data with 2-sigma intervals and the
/// error-band flag, plus the shared axis range for identity/band lines.
struct ParityTable {
    std::vector<ParityPoint> points;
    double error_band_pct = 10.0;
    double axis_min = 0.0;
    double axis_max = 0.0;
};

ParityTable parity_export(const std::vector<double>& y_true,
                          const std::vector<PredictionSet>& preds,
                          double error_band_pct = 10.0);

/// Plot-data CSV writers.
void write_calibration_csv(const std::string& path, const CalibrationCurve& curve);
void write_rstd_hist_csv(const std::string& path, const RstdDistribution& dist);
void write_rstd_kde_csv(const std::string& path, const RstdDistribution& dist);
void write_parity_csv(const std::string& path, const ParityTable& table);
void write_prediction_csv(const std::string& path, const std::vector<double>& y_true,
                          const std::vector<PredictionSet>& preds);

/// Minimal standalone SVG renderings of the plot data.
std::string svg_calibration(const CalibrationCurve& curve);
std::string svg_rstd(const RstdDistribution& dist);
std::string svg_parity(const ParityTable& table);

}  // namespace chf
