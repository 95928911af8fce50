#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "chf/errors.hpp"
#include "chf/evalsuite.hpp"
#include "chf/rng.hpp"

using namespace chf;

namespace {

std::vector<PredictionSet> moment_preds(const std::vector<double>& means,
                                        const std::vector<double>& stds) {
    std::vector<PredictionSet> preds;
    for (std::size_t i = 0; i < means.size(); ++i)
        preds.push_back(prediction_from_moments(means[i], stds[i]));
    return preds;
}

std::string read_file(const std::filesystem::path& path) {
    std::ifstream in(path);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

}  // namespace

TEST_CASE("prediction_from_samples computes population moments") {
    const auto p = prediction_from_samples({1.0, 3.0});
    CHECK(p.mean == doctest::Approx(2.0));
    CHECK(p.std_dev == doctest::Approx(1.0));
    CHECK(p.rstd == doctest::Approx(50.0));
    CHECK(p.lo_2sigma == doctest::Approx(0.0));
    CHECK(p.hi_2sigma == doctest::Approx(4.0));
    CHECK(p.samples.size() == 2);
}

TEST_CASE("uniform over-prediction fixes the error metrics exactly") {
    std::vector<double> y_true, y_pred;
    for (int i = 1; i <= 20; ++i) {
        y_true.push_back(100.0 * i);
        y_pred.push_back(110.0 * i);
    }
    const auto report = metrics(y_true, y_pred);
    CHECK(report.mu_error == doctest::Approx(10.0).epsilon(1e-12));
    CHECK(report.rrmse == doctest::Approx(10.0).epsilon(1e-12));
    CHECK(report.max_error == doctest::Approx(10.0).epsilon(1e-12));
    // 10% error is not strictly above the threshold
    CHECK(report.f_gt10 == 0.0);
    CHECK_FALSE(report.mean_rstd.has_value());
    CHECK_FALSE(report.max_rstd.has_value());
}

TEST_CASE("r2 is one for perfect predictions and zero for the constant mean") {
    const std::vector<double> y = {50.0, 80.0, 120.0, 200.0, 330.0};
    CHECK(metrics(y, y).r2 == doctest::Approx(1.0));
    CHECK(metrics(y, y).mu_error == doctest::Approx(0.0));

    double mean = 0.0;
    for (double v : y) mean += v;
    mean /= static_cast<double>(y.size());
    const std::vector<double> constant(y.size(), mean);
    CHECK(metrics(y, constant).r2 == doctest::Approx(0.0).epsilon(1e-12));
}

TEST_CASE("f_gt10 counts only points strictly above ten percent") {
    const std::vector<double> y_true = {100.0, 100.0, 100.0, 100.0};
    const std::vector<double> y_pred = {110.0, 110.1, 89.9, 95.0};
    const auto report = metrics(y_true, y_pred);
    CHECK(report.f_gt10 == doctest::Approx(50.0));
}

TEST_CASE("rrmse dominates mean error on random vectors") {
    Rng rng(20240816);
    for (int trial = 0; trial < 200; ++trial) {
        std::vector<double> y_true, y_pred;
        for (int i = 0; i < 50; ++i) {
            const double t = rng.uniform(100.0, 5000.0);
            y_true.push_back(t);
            y_pred.push_back(t * (1.0 + rng.normal(0.0, 0.15)));
        }
        const auto report = metrics(y_true, y_pred);
        CHECK(report.rrmse >= report.mu_error - 1e-12);
        CHECK(report.max_error >= report.mu_error - 1e-12);
    }
}

TEST_CASE("uncertainty metrics aggregate per-point rstd") {
    const std::vector<double> y_true = {100.0, 200.0};
    const auto preds = moment_preds({100.0, 200.0}, {5.0, 30.0});
    const auto report = metrics(y_true, preds);
    REQUIRE(report.mean_rstd.has_value());
    REQUIRE(report.max_rstd.has_value());
    CHECK(*report.mean_rstd == doctest::Approx(10.0));
    CHECK(*report.max_rstd == doctest::Approx(15.0));
    CHECK(report.mu_error == doctest::Approx(0.0));
}

TEST_CASE("metrics reject degenerate input") {
    CHECK_THROWS_AS(metrics({1.0, 2.0}, std::vector<double>{1.0}), ValidationError);
    CHECK_THROWS_AS(metrics({}, std::vector<double>{}), ValidationError);
    CHECK_THROWS_AS(metrics({0.0}, std::vector<double>{1.0}), ValidationError);
}

TEST_CASE("metrics json uses the frozen key set") {
    const std::vector<double> y_true = {100.0, 200.0};
    const auto preds = moment_preds({101.0, 198.0}, {5.0, 6.0});
    const auto text = metrics_to_json(metrics(y_true, preds));
    for (const char* key :
         {"\"mu_error\"", "\"max_error\"", "\"mean_rstd\"", "\"max_rstd\"", "\"rrmse\"",
          "\"f_gt10\"", "\"r2\"", "\"rstd_convention\"", "\"std_convention\""}) {
        CHECK(text.find(key) != std::string::npos);
    }
    CHECK(text.find("100*std/abs(mean)") != std::string::npos);
    CHECK(text.find("population") != std::string::npos);
}

TEST_CASE("normal cdf and quantile invert each other") {
    CHECK(normal_cdf(0.0) == doctest::Approx(0.5).epsilon(1e-12));
    CHECK(normal_quantile(0.5) == doctest::Approx(0.0).epsilon(1e-9));
    CHECK(normal_quantile(0.975) == doctest::Approx(1.959963985).epsilon(1e-7));
    for (double p : {0.001, 0.01, 0.1, 0.25, 0.5, 0.77, 0.95, 0.999}) {
        CHECK(normal_cdf(normal_quantile(p)) == doctest::Approx(p).epsilon(1e-9));
    }
    CHECK_THROWS_AS(normal_quantile(0.0), ValidationError);
    CHECK_THROWS_AS(normal_quantile(1.0), ValidationError);
}

TEST_CASE("sample quantile interpolates linearly") {
    const std::vector<double> values = {4.0, 1.0, 3.0, 2.0};
    CHECK(sample_quantile(values, 0.0) == doctest::Approx(1.0));
    CHECK(sample_quantile(values, 1.0) == doctest::Approx(4.0));
    CHECK(sample_quantile(values, 0.5) == doctest::Approx(2.5));
    CHECK(sample_quantile(values, 1.0 / 3.0) == doctest::Approx(2.0));
}

TEST_CASE("calibration area is near zero for exact-quantile residuals") {
    // place each observation at the z value whose CDF matches its rank
    const int n = 100;
    std::vector<double> y_true;
    std::vector<PredictionSet> preds;
    for (int i = 1; i <= n; ++i) {
        const double u = (i - 0.5) / n;
        const double z = normal_quantile(u);
        y_true.push_back(1000.0 + 50.0 * z);
        preds.push_back(prediction_from_moments(1000.0, 50.0));
    }
    const auto curve = calibration_curve(y_true, preds);
    REQUIRE(curve.expected_p.size() == 100);
    CHECK(curve.expected_p.front() == doctest::Approx(1.0 / 101.0));
    CHECK(curve.expected_p.back() == doctest::Approx(100.0 / 101.0));
    CHECK(curve.miscalibration_area < 0.02);
}

TEST_CASE("inflated and deflated uncertainty bend the calibration curve in opposite directions") {
    const int n = 400;
    std::vector<double> y_true;
    Rng rng(777);
    for (int i = 0; i < n; ++i) y_true.push_back(1000.0 + 50.0 * rng.normal());

    const std::vector<PredictionSet> inflated =
        moment_preds(std::vector<double>(n, 1000.0), std::vector<double>(n, 150.0));
    const std::vector<PredictionSet> deflated =
        moment_preds(std::vector<double>(n, 1000.0), std::vector<double>(n, 50.0 / 3.0));

    const auto curve_inflated = calibration_curve(y_true, inflated);
    const auto curve_deflated = calibration_curve(y_true, deflated);

    // index 74 is the grid point at p = 75/101
    const std::size_t j = 74;
    CHECK(curve_inflated.observed_p[j] > curve_inflated.expected_p[j]);
    CHECK(curve_deflated.observed_p[j] < curve_deflated.expected_p[j]);
    CHECK(curve_inflated.miscalibration_area > 0.05);
    CHECK(curve_deflated.miscalibration_area > 0.05);
}

TEST_CASE("rstd distribution bins values and can drop outliers") {
    std::vector<PredictionSet> preds;
    // rstd values 1..10 percent plus one extreme outlier at 90 percent
    for (int i = 1; i <= 10; ++i)
        preds.push_back(prediction_from_moments(100.0, static_cast<double>(i)));
    preds.push_back(prediction_from_moments(100.0, 90.0));

    const auto keep_all = rstd_distribution(preds, 8, false);
    REQUIRE(keep_all.bin_edges.size() == 9);
    CHECK(keep_all.bin_edges.front() == doctest::Approx(0.0));
    CHECK(keep_all.outliers_removed == 0);
    int total = 0;
    for (int c : keep_all.counts) total += c;
    CHECK(total == 11);
    CHECK(keep_all.kde_x.size() == 256);
    CHECK(keep_all.kde_density.size() == 256);

    const auto dropped = rstd_distribution(preds, 8, true);
    CHECK(dropped.outliers_removed == 1);
    total = 0;
    for (int c : dropped.counts) total += c;
    CHECK(total == 10);
    CHECK(dropped.bin_edges.back() < keep_all.bin_edges.back());

    // KDE integrates to roughly one over its grid
    double integral = 0.0;
    for (std::size_t i = 1; i < dropped.kde_x.size(); ++i) {
        const double dx = dropped.kde_x[i] - dropped.kde_x[i - 1];
        integral += 0.5 * (dropped.kde_density[i] + dropped.kde_density[i - 1]) * dx;
    }
    CHECK(integral == doctest::Approx(1.0).epsilon(0.15));
}

TEST_CASE("parity export flags points inside the error band") {
    const std::vector<double> y_true = {100.0, 200.0, 300.0};
    const auto preds = moment_preds({105.0, 260.0, 300.0}, {5.0, 10.0, 15.0});
    const auto table = parity_export(y_true, preds);
    CHECK(table.error_band_pct == doctest::Approx(10.0));
    REQUIRE(table.points.size() == 3);
    CHECK(table.points[0].inside_band);
    CHECK_FALSE(table.points[1].inside_band);
    CHECK(table.points[2].inside_band);
    CHECK(table.points[1].lo_2sigma == doctest::Approx(240.0));
    CHECK(table.points[1].hi_2sigma == doctest::Approx(280.0));
    CHECK(table.axis_min <= 100.0);
    CHECK(table.axis_max >= 300.0);

    const auto tight = parity_export(y_true, preds, 1.0);
    CHECK_FALSE(tight.points[0].inside_band);
    CHECK(tight.points[2].inside_band);
}

TEST_CASE("plot csv writers emit frozen headers") {
    const auto dir = std::filesystem::temp_directory_path() / "chf_evalsuite_test";
    std::filesystem::create_directories(dir);

    const std::vector<double> y_true = {100.0, 210.0, 290.0, 405.0};
    const auto preds = moment_preds({105.0, 200.0, 300.0, 400.0}, {5.0, 8.0, 12.0, 16.0});

    const auto curve = calibration_curve(y_true, preds, 10);
    const auto cal_path = dir / "calibration.csv";
    write_calibration_csv(cal_path.string(), curve);
    CHECK(read_file(cal_path).rfind("expected_p,observed_p\n", 0) == 0);

    const auto dist = rstd_distribution(preds, 4, false);
    const auto hist_path = dir / "rstd_hist.csv";
    write_rstd_hist_csv(hist_path.string(), dist);
    CHECK(read_file(hist_path).rfind("bin_lo_pct,bin_hi_pct,count\n", 0) == 0);

    const auto kde_path = dir / "rstd_kde.csv";
    write_rstd_kde_csv(kde_path.string(), dist);
    CHECK(read_file(kde_path).rfind("rstd_pct,density\n", 0) == 0);

    const auto table = parity_export(y_true, preds);
    const auto parity_path = dir / "parity.csv";
    write_parity_csv(parity_path.string(), table);
    const auto parity_text = read_file(parity_path);
    CHECK(parity_text.rfind("series,x_kw_m2,y_kw_m2,lo_2sigma_kw_m2,hi_2sigma_kw_m2,"
                            "rstd_pct,inside_band\n",
                            0) == 0);
    CHECK(parity_text.find("point,") != std::string::npos);

    const auto pred_path = dir / "predictions.csv";
    write_prediction_csv(pred_path.string(), y_true, preds);
    const auto pred_text = read_file(pred_path);
    CHECK(pred_text.rfind("point_id,y_true_kw_m2,y_pred_mean_kw_m2,y_pred_std_kw_m2,"
                          "rstd_pct,lo_2sigma,hi_2sigma\n",
                          0) == 0);
    CHECK(pred_text.find("\n0,") != std::string::npos);
    CHECK(pred_text.find("\n3,") != std::string::npos);

    std::filesystem::remove_all(dir);
}

TEST_CASE("svg renderings are self-contained documents") {
    const std::vector<double> y_true = {100.0, 210.0, 290.0};
    const auto preds = moment_preds({105.0, 200.0, 300.0}, {5.0, 8.0, 12.0});
    const auto svg1 = svg_calibration(calibration_curve(y_true, preds, 10));
    const auto svg2 = svg_rstd(rstd_distribution(preds, 4, false));
    const auto svg3 = svg_parity(parity_export(y_true, preds));
    for (const auto& svg : {svg1, svg2, svg3}) {
        CHECK(svg.find("<svg") != std::string::npos);
        CHECK(svg.find("</svg>") != std::string::npos);
    }
}
