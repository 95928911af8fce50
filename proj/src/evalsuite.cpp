#include "chf/evalsuite.hpp"

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <numeric>
#include <sstream>

#include "chf/csv.hpp"
#include "chf/errors.hpp"
#include "json.hpp"

namespace chf {

namespace {

constexpr double kSqrt2 = 1.4142135623730951;
constexpr double kSqrt2Pi = 2.5066282746310002;

std::string join_indices(const std::vector<std::size_t>& idx) {
    std::ostringstream os;
    for (std::size_t i = 0; i < idx.size(); ++i) {
        if (i > 0) os << ", ";
        if (i == 8) {
            os << "... (" << idx.size() << " total)";
            break;
        }
        os << idx[i];
    }
    return os.str();
}

}  // namespace

double normal_cdf(double z) { return 0.5 * std::erfc(-z / kSqrt2); }

double normal_quantile(double p) {
    if (!(p > 0.0 && p < 1.0)) {
        throw ValidationError("normal_quantile: p must lie in (0, 1), got " +
                              format_double(p));
    }
    // Rational approximation (Acklam), then one Halley step against the
    // erfc-based CDF, which brings the absolute error near machine epsilon.
    static constexpr double a[6] = {-3.969683028665376e+01, 2.209460984245205e+02,
                                    -2.759285104469687e+02, 1.383577518672690e+02,
                                    -3.066479806614716e+01, 2.506628277459239e+00};
    static constexpr double b[5] = {-5.447609879822406e+01, 1.615858368580409e+02,
                                    -1.556989798598866e+02, 6.680131188771972e+01,
                                    -1.328068155288572e+01};
    static constexpr double c[6] = {-7.784894002430293e-03, -3.223964580411365e-01,
                                    -2.400758277161838e+00, -2.549732539343734e+00,
                                    4.374664141464968e+00,  2.938163982698783e+00};
    static constexpr double d[4] = {7.784695709041462e-03, 3.224671290700398e-01,
                                    2.445134137142996e+00, 3.754408661907416e+00};
    constexpr double p_low = 0.02425;

    double x = 0.0;
    if (p < p_low) {
        double q = std::sqrt(-2.0 * std::log(p));
        x = (((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
            ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
    } else if (p <= 1.0 - p_low) {
        double q = p - 0.5;
        double r = q * q;
        x = (((((a[0] * r + a[1]) * r + a[2]) * r + a[3]) * r + a[4]) * r + a[5]) * q /
            (((((b[0] * r + b[1]) * r + b[2]) * r + b[3]) * r + b[4]) * r + 1.0);
    } else {
        double q = std::sqrt(-2.0 * std::log(1.0 - p));
        x = -(((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
            ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
    }

    double e = normal_cdf(x) - p;
    double u = e * kSqrt2Pi * std::exp(0.5 * x * x);
    x = x - u / (1.0 + 0.5 * x * u);
    return x;
}

double sample_quantile(std::vector<double> values, double q) {
    if (values.empty()) throw ValidationError("sample_quantile: empty sample");
    if (!(q >= 0.0 && q <= 1.0)) {
        throw ValidationError("sample_quantile: q must lie in [0, 1], got " +
                              format_double(q));
    }
    std::sort(values.begin(), values.end());
    double pos = q * static_cast<double>(values.size() - 1);
    auto lo = static_cast<std::size_t>(pos);
    if (lo + 1 >= values.size()) return values.back();
    double frac = pos - static_cast<double>(lo);
    return values[lo] + frac * (values[lo + 1] - values[lo]);
}

PredictionSet prediction_from_moments(double mean, double std_dev) {
    PredictionSet p;
    p.mean = mean;
    p.std_dev = std_dev;
    p.rstd = 100.0 * std_dev / std::abs(mean);
    p.lo_2sigma = mean - 2.0 * std_dev;
    p.hi_2sigma = mean + 2.0 * std_dev;
    return p;
}

PredictionSet prediction_from_samples(std::vector<double> samples) {
    if (samples.empty()) throw ValidationError("prediction_from_samples: no samples");
    double n = static_cast<double>(samples.size());
    double mean = std::accumulate(samples.begin(), samples.end(), 0.0) / n;
    double ss = 0.0;
    for (double s : samples) ss += (s - mean) * (s - mean);
    PredictionSet p = prediction_from_moments(mean, std::sqrt(ss / n));
    p.samples = std::move(samples);
    return p;
}

namespace {

MetricsReport metrics_impl(const std::vector<double>& y_true,
                           const std::vector<double>& y_pred,
                           const std::vector<double>* rstds) {
    if (y_true.size() != y_pred.size()) {
        throw ValidationError("metrics: " + std::to_string(y_true.size()) +
                              " measured values vs " + std::to_string(y_pred.size()) +
                              " predictions");
    }
    if (y_true.size() < 2) {
        throw ValidationError("metrics: need at least 2 points, got " +
                              std::to_string(y_true.size()));
    }
    std::vector<std::size_t> bad;
    for (std::size_t i = 0; i < y_true.size(); ++i) {
        if (!(y_true[i] > 0.0)) bad.push_back(i);
    }
    if (!bad.empty()) {
        throw ValidationError(
            "metrics: measured values must be strictly positive; offending indices: " +
            join_indices(bad));
    }

    double n = static_cast<double>(y_true.size());
    double sum_abs = 0.0, sum_sq = 0.0, max_abs = 0.0, ss_res = 0.0;
    std::size_t n_gt10 = 0;
    for (std::size_t i = 0; i < y_true.size(); ++i) {
        double e = (y_pred[i] - y_true[i]) / y_true[i];
        double ae = std::abs(e);
        sum_abs += ae;
        sum_sq += e * e;
        max_abs = std::max(max_abs, ae);
        if (ae > 0.10) ++n_gt10;
        ss_res += (y_pred[i] - y_true[i]) * (y_pred[i] - y_true[i]);
    }
    double y_bar = std::accumulate(y_true.begin(), y_true.end(), 0.0) / n;
    double ss_tot = 0.0;
    for (double y : y_true) ss_tot += (y - y_bar) * (y - y_bar);
    if (ss_tot == 0.0) {
        throw ValidationError("metrics: measured values have zero variance, r2 undefined");
    }

    MetricsReport r;
    r.mu_error = 100.0 * sum_abs / n;
    r.max_error = 100.0 * max_abs;
    r.rrmse = 100.0 * std::sqrt(sum_sq / n);
    r.f_gt10 = 100.0 * static_cast<double>(n_gt10) / n;
    r.r2 = 1.0 - ss_res / ss_tot;
    if (rstds != nullptr) {
        r.mean_rstd = std::accumulate(rstds->begin(), rstds->end(), 0.0) /
                      static_cast<double>(rstds->size());
        r.max_rstd = *std::max_element(rstds->begin(), rstds->end());
    }
    return r;
}

}  // namespace

MetricsReport metrics(const std::vector<double>& y_true,
                      const std::vector<double>& y_pred) {
    return metrics_impl(y_true, y_pred, nullptr);
}

MetricsReport metrics(const std::vector<double>& y_true,
                      const std::vector<PredictionSet>& preds) {
    std::vector<double> means(preds.size());
    std::vector<double> rstds(preds.size());
    for (std::size_t i = 0; i < preds.size(); ++i) {
        means[i] = preds[i].mean;
        rstds[i] = preds[i].rstd;
    }
    return metrics_impl(y_true, means, &rstds);
}

std::string metrics_to_json(const MetricsReport& report) {
    nlohmann::ordered_json j;
    j["mu_error"] = report.mu_error;
    j["max_error"] = report.max_error;
    if (report.mean_rstd) j["mean_rstd"] = *report.mean_rstd;
    if (report.max_rstd) j["max_rstd"] = *report.max_rstd;
    j["rrmse"] = report.rrmse;
    j["f_gt10"] = report.f_gt10;
    j["r2"] = report.r2;
    if (report.mean_rstd) {
        j["rstd_convention"] = "100*std/abs(mean)";
        j["std_convention"] = "population";
    }
    return j.dump(2);
}

CalibrationCurve calibration_curve(const std::vector<double>& y_true,
                                   const std::vector<PredictionSet>& preds,
                                   int grid_size) {
    if (y_true.size() != preds.size()) {
        throw ValidationError("calibration_curve: " + std::to_string(y_true.size()) +
                              " measured values vs " + std::to_string(preds.size()) +
                              " predictions");
    }
    if (preds.empty()) throw ValidationError("calibration_curve: no points");
    if (grid_size < 2) {
        throw ValidationError("calibration_curve: grid_size must be at least 2, got " +
                              std::to_string(grid_size));
    }
    std::vector<double> u(preds.size());
    for (std::size_t i = 0; i < preds.size(); ++i) {
        if (!(preds[i].std_dev > 0.0)) {
            throw ValidationError("calibration_curve: prediction " + std::to_string(i) +
                                  " has non-positive std, uncertainty is degenerate");
        }
        u[i] = normal_cdf((y_true[i] - preds[i].mean) / preds[i].std_dev);
    }
    std::sort(u.begin(), u.end());

    CalibrationCurve curve;
    curve.expected_p.resize(static_cast<std::size_t>(grid_size));
    curve.observed_p.resize(static_cast<std::size_t>(grid_size));
    double n = static_cast<double>(u.size());
    for (int j = 1; j <= grid_size; ++j) {
        double p = static_cast<double>(j) / (static_cast<double>(grid_size) + 1.0);
        auto count = std::upper_bound(u.begin(), u.end(), p) - u.begin();
        curve.expected_p[static_cast<std::size_t>(j - 1)] = p;
        curve.observed_p[static_cast<std::size_t>(j - 1)] =
            static_cast<double>(count) / n;
    }

    double area = 0.0;
    for (std::size_t j = 0; j + 1 < curve.expected_p.size(); ++j) {
        double d0 = std::abs(curve.observed_p[j] - curve.expected_p[j]);
        double d1 = std::abs(curve.observed_p[j + 1] - curve.expected_p[j + 1]);
        area += 0.5 * (d0 + d1) * (curve.expected_p[j + 1] - curve.expected_p[j]);
    }
    curve.miscalibration_area = area;
    return curve;
}

RstdDistribution rstd_distribution(const std::vector<PredictionSet>& preds, int bins,
                                   bool drop_outliers) {
    if (preds.empty()) throw ValidationError("rstd_distribution: no points");
    if (bins < 1) {
        throw ValidationError("rstd_distribution: bins must be positive, got " +
                              std::to_string(bins));
    }
    std::vector<double> values(preds.size());
    for (std::size_t i = 0; i < preds.size(); ++i) values[i] = preds[i].rstd;

    RstdDistribution dist;
    if (drop_outliers) {
        double q1 = sample_quantile(values, 0.25);
        double q3 = sample_quantile(values, 0.75);
        double cutoff = q3 + 1.5 * (q3 - q1);
        std::vector<double> kept;
        kept.reserve(values.size());
        for (double v : values) {
            if (v <= cutoff) kept.push_back(v);
        }
        dist.outliers_removed = static_cast<int>(values.size() - kept.size());
        values = std::move(kept);
    }

    double v_max = *std::max_element(values.begin(), values.end());
    if (!(v_max > 0.0)) v_max = 1.0;
    dist.bin_edges.resize(static_cast<std::size_t>(bins) + 1);
    for (int k = 0; k <= bins; ++k) {
        dist.bin_edges[static_cast<std::size_t>(k)] =
            v_max * static_cast<double>(k) / static_cast<double>(bins);
    }
    dist.counts.assign(static_cast<std::size_t>(bins), 0);
    for (double v : values) {
        auto idx = static_cast<long>(v / v_max * static_cast<double>(bins));
        idx = std::clamp<long>(idx, 0, bins - 1);
        ++dist.counts[static_cast<std::size_t>(idx)];
    }

    double n = static_cast<double>(values.size());
    double mean = std::accumulate(values.begin(), values.end(), 0.0) / n;
    double ss = 0.0;
    for (double v : values) ss += (v - mean) * (v - mean);
    double sigma = n > 1.0 ? std::sqrt(ss / (n - 1.0)) : 0.0;
    double iqr_scaled =
        (sample_quantile(values, 0.75) - sample_quantile(values, 0.25)) / 1.34;
    double spread = (sigma > 0.0 && iqr_scaled > 0.0) ? std::min(sigma, iqr_scaled)
                                                      : std::max(sigma, iqr_scaled);
    double h = 0.9 * spread * std::pow(n, -0.2);
    if (!(h > 0.0)) h = std::max(1e-9, 1e-3 * std::max(1.0, std::abs(values[0])));

    double v_min = *std::min_element(values.begin(), values.end());
    double grid_lo = v_min - 4.0 * h;
    double grid_hi = *std::max_element(values.begin(), values.end()) + 4.0 * h;
    constexpr int kKdePoints = 256;
    dist.kde_x.resize(kKdePoints);
    dist.kde_density.resize(kKdePoints);
    for (int k = 0; k < kKdePoints; ++k) {
        double x = grid_lo + (grid_hi - grid_lo) * static_cast<double>(k) /
                                 static_cast<double>(kKdePoints - 1);
        double dsum = 0.0;
        for (double v : values) {
            double uu = (x - v) / h;
            dsum += std::exp(-0.5 * uu * uu);
        }
        dist.kde_x[static_cast<std::size_t>(k)] = x;
        dist.kde_density[static_cast<std::size_t>(k)] = dsum / (n * h * kSqrt2Pi);
    }
    return dist;
}

ParityTable parity_export(const std::vector<double>& y_true,
                          const std::vector<PredictionSet>& preds,
                          double error_band_pct) {
    if (y_true.size() != preds.size()) {
        throw ValidationError("parity_export: " + std::to_string(y_true.size()) +
                              " measured values vs " + std::to_string(preds.size()) +
                              " predictions");
    }
    if (preds.empty()) throw ValidationError("parity_export: no points");

    ParityTable table;
    table.error_band_pct = error_band_pct;
    double band = error_band_pct / 100.0;
    double lo = y_true[0], hi = y_true[0];
    table.points.resize(preds.size());
    for (std::size_t i = 0; i < preds.size(); ++i) {
        ParityPoint& pt = table.points[i];
        pt.y_true = y_true[i];
        pt.mean = preds[i].mean;
        pt.lo_2sigma = preds[i].lo_2sigma;
        pt.hi_2sigma = preds[i].hi_2sigma;
        pt.rstd = preds[i].rstd;
        pt.inside_band = std::abs((preds[i].mean - y_true[i]) / y_true[i]) <= band;
        lo = std::min({lo, y_true[i], preds[i].mean});
        hi = std::max({hi, y_true[i], preds[i].mean});
    }
    table.axis_min = lo;
    table.axis_max = hi;
    return table;
}

void write_calibration_csv(const std::string& path, const CalibrationCurve& curve) {
    CsvTable t;
    t.header = {"expected_p", "observed_p"};
    for (std::size_t j = 0; j < curve.expected_p.size(); ++j) {
        t.rows.push_back({format_double(curve.expected_p[j]),
                          format_double(curve.observed_p[j])});
    }
    write_csv(path, t);
}

void write_rstd_hist_csv(const std::string& path, const RstdDistribution& dist) {
    CsvTable t;
    t.header = {"bin_lo_pct", "bin_hi_pct", "count"};
    for (std::size_t k = 0; k < dist.counts.size(); ++k) {
        t.rows.push_back({format_double(dist.bin_edges[k]),
                          format_double(dist.bin_edges[k + 1]),
                          std::to_string(dist.counts[k])});
    }
    write_csv(path, t);
}

void write_rstd_kde_csv(const std::string& path, const RstdDistribution& dist) {
    CsvTable t;
    t.header = {"rstd_pct", "density"};
    for (std::size_t k = 0; k < dist.kde_x.size(); ++k) {
        t.rows.push_back({format_double(dist.kde_x[k]),
                          format_double(dist.kde_density[k])});
    }
    write_csv(path, t);
}

void write_parity_csv(const std::string& path, const ParityTable& table) {
    CsvTable t;
    t.header = {"series",          "x_kw_m2",  "y_kw_m2", "lo_2sigma_kw_m2",
                "hi_2sigma_kw_m2", "rstd_pct", "inside_band"};
    for (const ParityPoint& pt : table.points) {
        t.rows.push_back({"point", format_double(pt.y_true), format_double(pt.mean),
                          format_double(pt.lo_2sigma), format_double(pt.hi_2sigma),
                          format_double(pt.rstd), pt.inside_band ? "1" : "0"});
    }
    double band = table.error_band_pct / 100.0;
    for (double x : {table.axis_min, table.axis_max}) {
        t.rows.push_back({"identity", format_double(x), format_double(x),
                          format_double(x), format_double(x), "0", "1"});
    }
    for (double x : {table.axis_min, table.axis_max}) {
        double y = (1.0 - band) * x;
        t.rows.push_back({"band_lo", format_double(x), format_double(y),
                          format_double(y), format_double(y), "0", "1"});
    }
    for (double x : {table.axis_min, table.axis_max}) {
        double y = (1.0 + band) * x;
        t.rows.push_back({"band_hi", format_double(x), format_double(y),
                          format_double(y), format_double(y), "0", "1"});
    }
    write_csv(path, t);
}

void write_prediction_csv(const std::string& path, const std::vector<double>& y_true,
                          const std::vector<PredictionSet>& preds) {
    if (y_true.size() != preds.size()) {
        throw ValidationError("write_prediction_csv: " + std::to_string(y_true.size()) +
                              " measured values vs " + std::to_string(preds.size()) +
                              " predictions");
    }
    CsvTable t;
    t.header = {"point_id",  "y_true_kw_m2", "y_pred_mean_kw_m2", "y_pred_std_kw_m2",
                "rstd_pct",  "lo_2sigma",    "hi_2sigma"};
    for (std::size_t i = 0; i < preds.size(); ++i) {
        t.rows.push_back({std::to_string(i), format_double(y_true[i]),
                          format_double(preds[i].mean), format_double(preds[i].std_dev),
                          format_double(preds[i].rstd), format_double(preds[i].lo_2sigma),
                          format_double(preds[i].hi_2sigma)});
    }
    write_csv(path, t);
}

namespace {

/// Bare-bones SVG chart canvas with margins and linear axes.
class SvgCanvas {
  public:
    SvgCanvas(double x_lo, double x_hi, double y_lo, double y_hi)
        : x_lo_(x_lo), x_hi_(x_hi), y_lo_(y_lo), y_hi_(y_hi) {
        body_ << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << kW
              << "\" height=\"" << kH << "\" viewBox=\"0 0 " << kW << " " << kH
              << "\">\n<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n"
              << "<rect x=\"" << kM << "\" y=\"" << kM << "\" width=\"" << kW - 2 * kM
              << "\" height=\"" << kH - 2 * kM
              << "\" fill=\"none\" stroke=\"black\"/>\n";
    }

    double px(double x) const {
        return kM + (x - x_lo_) / (x_hi_ - x_lo_) * (kW - 2 * kM);
    }
    double py(double y) const {
        return kH - kM - (y - y_lo_) / (y_hi_ - y_lo_) * (kH - 2 * kM);
    }

    void polyline(const std::vector<double>& xs, const std::vector<double>& ys,
                  const std::string& color, double width = 1.5) {
        body_ << "<polyline fill=\"none\" stroke=\"" << color << "\" stroke-width=\""
              << width << "\" points=\"";
        for (std::size_t i = 0; i < xs.size(); ++i) {
            body_ << px(xs[i]) << "," << py(ys[i]) << " ";
        }
        body_ << "\"/>\n";
    }

    void circle(double x, double y, const std::string& color, double r = 2.5) {
        body_ << "<circle cx=\"" << px(x) << "\" cy=\"" << py(y) << "\" r=\"" << r
              << "\" fill=\"" << color << "\" fill-opacity=\"0.6\"/>\n";
    }

    void vline(double x0, double y0, double y1, const std::string& color) {
        body_ << "<line x1=\"" << px(x0) << "\" y1=\"" << py(y0) << "\" x2=\""
              << px(x0) << "\" y2=\"" << py(y1) << "\" stroke=\"" << color
              << "\" stroke-width=\"0.8\"/>\n";
    }

    void bar(double x0, double x1, double height, const std::string& color) {
        double top = py(height);
        body_ << "<rect x=\"" << px(x0) << "\" y=\"" << top << "\" width=\""
              << px(x1) - px(x0) << "\" height=\"" << py(0.0) - top << "\" fill=\""
              << color << "\" stroke=\"black\" stroke-width=\"0.4\"/>\n";
    }

    void label(const std::string& text) {
        body_ << "<text x=\"" << kW / 2 << "\" y=\"" << kM - 8
              << "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"13\">"
              << text << "</text>\n";
    }

    std::string finish() {
        body_ << "</svg>\n";
        return body_.str();
    }

  private:
    static constexpr double kW = 640.0;
    static constexpr double kH = 480.0;
    static constexpr double kM = 48.0;
    double x_lo_, x_hi_, y_lo_, y_hi_;
    std::ostringstream body_;
};

}  // namespace

std::string svg_calibration(const CalibrationCurve& curve) {
    SvgCanvas canvas(0.0, 1.0, 0.0, 1.0);
    canvas.label("calibration: observed vs expected cumulative probability");
    canvas.polyline({0.0, 1.0}, {0.0, 1.0}, "gray", 1.0);
    canvas.polyline(curve.expected_p, curve.observed_p, "steelblue");
    return canvas.finish();
}

std::string svg_rstd(const RstdDistribution& dist) {
    double n_total = 0.0;
    for (int c : dist.counts) n_total += c;
    double width = dist.bin_edges[1] - dist.bin_edges[0];
    double y_max = 0.0;
    std::vector<double> density(dist.counts.size());
    for (std::size_t k = 0; k < dist.counts.size(); ++k) {
        density[k] = n_total > 0.0 && width > 0.0
                         ? static_cast<double>(dist.counts[k]) / (n_total * width)
                         : 0.0;
        y_max = std::max(y_max, density[k]);
    }
    for (double dd : dist.kde_density) y_max = std::max(y_max, dd);
    if (y_max <= 0.0) y_max = 1.0;

    double x_lo = std::min(0.0, dist.kde_x.front());
    double x_hi = std::max(dist.bin_edges.back(), dist.kde_x.back());
    SvgCanvas canvas(x_lo, x_hi, 0.0, 1.08 * y_max);
    canvas.label("rStd distribution (histogram density and KDE)");
    for (std::size_t k = 0; k < dist.counts.size(); ++k) {
        canvas.bar(dist.bin_edges[k], dist.bin_edges[k + 1], density[k], "lightsteelblue");
    }
    canvas.polyline(dist.kde_x, dist.kde_density, "firebrick");
    return canvas.finish();
}

std::string svg_parity(const ParityTable& table) {
    double pad = 0.05 * (table.axis_max - table.axis_min);
    if (pad <= 0.0) pad = 1.0;
    double lo = table.axis_min - pad;
    double hi = table.axis_max + pad;
    SvgCanvas canvas(lo, hi, lo, hi);
    canvas.label("parity: predicted vs measured with 2-sigma intervals");
    double band = table.error_band_pct / 100.0;
    canvas.polyline({lo, hi}, {lo, hi}, "gray", 1.0);
    canvas.polyline({lo, hi}, {(1.0 - band) * lo, (1.0 - band) * hi}, "silver", 0.8);
    canvas.polyline({lo, hi}, {(1.0 + band) * lo, (1.0 + band) * hi}, "silver", 0.8);
    for (const ParityPoint& pt : table.points) {
        canvas.vline(pt.y_true, pt.lo_2sigma, pt.hi_2sigma, "salmon");
        canvas.circle(pt.y_true, pt.mean, pt.inside_band ? "steelblue" : "darkorange");
    }
    return canvas.finish();
}

}  // namespace chf
