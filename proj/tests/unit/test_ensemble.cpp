#include <doctest.h>

#include <cmath>
#include <string>
#include <vector>

#include "chf/ensemble.hpp"
#include "chf/errors.hpp"
#include "chf/rng.hpp"

using namespace chf;

namespace {

struct Problem {
    Matrix x;
    std::vector<double> y;
    Matrix x_val;
    std::vector<double> y_val;
    StandardScaler scaler;
};

Problem make_problem(std::size_t n_train = 40, std::size_t n_val = 10) {
    Problem p;
    Rng rng(314159);
    const auto fill = [&rng](Matrix& x, std::vector<double>& y, std::size_t n) {
        x = Matrix(n, 2);
        y.clear();
        for (std::size_t i = 0; i < n; ++i) {
            x(i, 0) = rng.uniform(0.0, 2.0);
            x(i, 1) = rng.uniform(-1.0, 1.0);
            y.push_back(500.0 + 200.0 * x(i, 0) - 80.0 * x(i, 1) + rng.normal(0.0, 5.0));
        }
    };
    fill(p.x, p.y, n_train);
    fill(p.x_val, p.y_val, n_val);
    p.scaler = fit_scaler(p.x, p.y, {"a", "b"}, ScalerScope::Full);
    return p;
}

MlpConfig small_config() {
    MlpConfig cfg;
    cfg.hidden_widths = {8};
    cfg.activation = Activation::Tanh;
    cfg.input_dim = 2;
    return cfg;
}

TrainConfig short_training() {
    TrainConfig tc;
    tc.epochs = 40;
    tc.lr0 = 0.02;
    tc.batch_size = 0;
    return tc;
}

}  // namespace

TEST_CASE("members get consecutive seeds from the base seed") {
    const auto p = make_problem();
    const auto model = train_ensemble(small_config(), short_training(), p.x, p.y, p.x_val,
                                      p.y_val, p.scaler, BaseModelKind::NoBase, 1000, 3);
    REQUIRE(model.members.size() == 3);
    REQUIRE(model.member_seeds.size() == 3);
    CHECK(model.member_seeds[0] == 1000);
    CHECK(model.member_seeds[1] == 1001);
    CHECK(model.member_seeds[2] == 1002);
    CHECK(model.base == BaseModelKind::NoBase);

    // distinct seeds produce distinct trained members
    CHECK(model.members[0].params() != model.members[1].params());
}

TEST_CASE("committee training requires at least two members") {
    const auto p = make_problem(20, 5);
    CHECK_THROWS_AS(train_ensemble(small_config(), short_training(), p.x, p.y, p.x_val,
                                   p.y_val, p.scaler, BaseModelKind::NoBase, 1, 1),
                    ValidationError);
}

TEST_CASE("seeded training accepts one member but rejects duplicate seeds") {
    const auto p = make_problem(20, 5);
    const auto solo =
        train_ensemble_seeded(small_config(), short_training(), p.x, p.y, p.x_val,
                              p.y_val, p.scaler, BaseModelKind::NoBase, {42});
    CHECK(solo.members.size() == 1);

    CHECK_THROWS_AS(
        train_ensemble_seeded(small_config(), short_training(), p.x, p.y, p.x_val,
                              p.y_val, p.scaler, BaseModelKind::NoBase, {7, 7}),
        ValidationError);
    CHECK_THROWS_AS(
        train_ensemble_seeded(small_config(), short_training(), p.x, p.y, p.x_val,
                              p.y_val, p.scaler, BaseModelKind::NoBase, {}),
        ValidationError);
}

TEST_CASE("serial and parallel training produce bitwise identical committees") {
    const auto p = make_problem();
    const auto serial =
        train_ensemble(small_config(), short_training(), p.x, p.y, p.x_val, p.y_val,
                       p.scaler, BaseModelKind::NoBase, 500, 4, 1);
    const auto parallel =
        train_ensemble(small_config(), short_training(), p.x, p.y, p.x_val, p.y_val,
                       p.scaler, BaseModelKind::NoBase, 500, 4, 4);
    REQUIRE(serial.members.size() == parallel.members.size());
    for (std::size_t i = 0; i < serial.members.size(); ++i) {
        CHECK(serial.members[i].params() == parallel.members[i].params());
    }

    const auto pred_serial = predict_ensemble(serial, p.x_val);
    const auto pred_parallel = predict_ensemble(parallel, p.x_val);
    for (std::size_t i = 0; i < pred_serial.size(); ++i) {
        CHECK(pred_serial[i].mean == pred_parallel[i].mean);
        CHECK(pred_serial[i].std_dev == pred_parallel[i].std_dev);
    }
}

TEST_CASE("predictions return physical units with population spread") {
    const auto p = make_problem();
    const auto model = train_ensemble(small_config(), short_training(), p.x, p.y, p.x_val,
                                      p.y_val, p.scaler, BaseModelKind::NoBase, 4);
    const auto preds = predict_ensemble(model, p.x_val);
    REQUIRE(preds.size() == p.x_val.rows());
    for (std::size_t i = 0; i < preds.size(); ++i) {
        const auto& pr = preds[i];
        REQUIRE(pr.samples.size() == 4);

        // moments recomputed from the committee samples, divisor n
        double mean = 0.0;
        for (double s : pr.samples) mean += s;
        mean /= 4.0;
        double var = 0.0;
        for (double s : pr.samples) var += (s - mean) * (s - mean);
        var /= 4.0;
        CHECK(pr.mean == doctest::Approx(mean).epsilon(1e-12));
        CHECK(pr.std_dev == doctest::Approx(std::sqrt(var)).epsilon(1e-9));
        CHECK(pr.lo_2sigma == doctest::Approx(pr.mean - 2.0 * pr.std_dev));
        CHECK(pr.hi_2sigma == doctest::Approx(pr.mean + 2.0 * pr.std_dev));

        // the fit should land in the right physical neighborhood
        CHECK(pr.mean > 100.0);
        CHECK(pr.mean < 1200.0);
    }
}

TEST_CASE("divergence error names every failed member") {
    const auto p = make_problem(20, 5);
    TrainConfig tc = short_training();
    tc.lr0 = 1e160;
    try {
        train_ensemble(small_config(), tc, p.x, p.y, p.x_val, p.y_val, p.scaler,
                       BaseModelKind::NoBase, 0, 3);
        FAIL("expected a divergence error");
    } catch (const RunError& e) {
        const std::string what = e.what();
        CHECK(what.find("member 0") != std::string::npos);
        CHECK(what.find("member 1") != std::string::npos);
        CHECK(what.find("member 2") != std::string::npos);
    }
}

TEST_CASE("ensemble json round trips") {
    const auto p = make_problem(20, 5);
    const auto model =
        train_ensemble(small_config(), short_training(), p.x, p.y, p.x_val, p.y_val,
                       p.scaler, BaseModelKind::Biasi, 11, 2);
    const auto back = EnsembleModel::from_json(model.to_json(), "roundtrip");
    REQUIRE(back.members.size() == model.members.size());
    for (std::size_t i = 0; i < back.members.size(); ++i) {
        CHECK(back.members[i].params() == model.members[i].params());
    }
    CHECK(back.member_seeds == model.member_seeds);
    CHECK(back.base == model.base);
    CHECK(back.scaler.means == model.scaler.means);
    CHECK(back.scaler.target_std == model.scaler.target_std);

    const auto before = predict_ensemble(model, p.x_val);
    const auto after = predict_ensemble(back, p.x_val);
    for (std::size_t i = 0; i < before.size(); ++i) {
        CHECK(before[i].mean == after[i].mean);
    }

    CHECK_THROWS_AS(EnsembleModel::from_json("{}", "broken"), SchemaError);
}
