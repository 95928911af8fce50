#include <doctest.h>

#include <cmath>
#include <string>
#include <vector>

#include "chf/bnn.hpp"
#include "chf/errors.hpp"
#include "chf/rng.hpp"

using namespace chf;

namespace {

constexpr double kHalfLog2Pi = 0.91893853320467274178;

BnnConfig tiny_config(std::uint64_t seed = 1) {
    BnnConfig cfg;
    cfg.hidden_widths = {1};
    cfg.activation = Activation::Tanh;
    cfg.input_dim = 1;
    cfg.seed = seed;
    return cfg;
}

BnnConfig small_config(std::uint64_t seed = 1) {
    BnnConfig cfg;
    cfg.hidden_widths = {6, 6};
    cfg.activation = Activation::Swish;
    cfg.input_dim = 2;
    cfg.seed = seed;
    return cfg;
}

}  // namespace

TEST_CASE("gaussian kl identities") {
    CHECK(kl_gaussian({0.0}, {1.0}) == doctest::Approx(0.0).epsilon(1e-12));
    CHECK(kl_gaussian({1.0}, {1.0}) == doctest::Approx(0.5));
    // components add
    CHECK(kl_gaussian({1.0, 1.0}, {1.0, 1.0}) == doctest::Approx(1.0));
    // closed form against a wider prior
    const double sq = 0.5, mq = 2.0, sp = 2.0;
    const double expected =
        std::log(sp / sq) + (sq * sq + mq * mq) / (2.0 * sp * sp) - 0.5;
    CHECK(kl_gaussian({mq}, {sq}, 0.0, sp) == doctest::Approx(expected));

    // non-negative for random parameters
    Rng rng(5);
    for (int i = 0; i < 200; ++i) {
        const double m = rng.normal(0.0, 3.0);
        const double s = std::exp(rng.normal(0.0, 1.0));
        CHECK(kl_gaussian({m}, {s}) >= -1e-12);
    }

    CHECK_THROWS_AS(kl_gaussian({0.0}, {-1.0}), ValidationError);
    CHECK_THROWS_AS(kl_gaussian({0.0, 0.0}, {1.0}), ValidationError);
}

TEST_CASE("initialization lays out mean and rho blocks per layer") {
    const Bnn net(tiny_config(3));
    // layers 1->1 and 1->2: (1+1+1+1) + (2+2+2+2) parameters
    REQUIRE(net.param_count() == 12);
    CHECK(net.layer_count() == 2);
    // weight noise plus bias noise per realization: (1+1) + (2+2)
    CHECK(net.noise_count() == 6);

    const auto& p = net.params();
    const double rho0 = std::log(std::expm1(0.05));
    // layer 0: [w_mean, b_mean, w_rho, b_rho]
    CHECK(p[1] == 0.0);
    CHECK(p[2] == doctest::Approx(rho0).epsilon(1e-12));
    CHECK(p[3] == doctest::Approx(rho0).epsilon(1e-12));
    // head: [w_mean x2, b_mean x2, w_rho x2, b_rho x2]
    CHECK(p[6] == 0.0);
    CHECK(p[7] == 0.0);
    for (std::size_t i = 8; i < 12; ++i)
        CHECK(p[i] == doctest::Approx(rho0).epsilon(1e-12));
    // posterior std at init is softplus(rho0)
    CHECK(std::log1p(std::exp(rho0)) == doctest::Approx(0.05).epsilon(1e-12));

    // deterministic in the seed
    const Bnn again(tiny_config(3));
    CHECK(again.params() == net.params());
    const Bnn other(tiny_config(4));
    CHECK(other.params() != net.params());
}

TEST_CASE("config validation rejects bad scale settings") {
    BnnConfig cfg = tiny_config();
    cfg.scale_floor = 0.0;
    CHECK_THROWS_AS(cfg.validate(), ValidationError);
    cfg = tiny_config();
    cfg.fixed_scale = -1.0;
    CHECK_THROWS_AS(cfg.validate(), ValidationError);
    cfg = tiny_config();
    cfg.hidden_widths = {};
    CHECK_THROWS_AS(cfg.validate(), ValidationError);
}

TEST_CASE("forward respects the scale floor and pins the fixed scale") {
    const Bnn net(small_config(9));
    Rng rng(12);
    std::vector<double> noise(net.noise_count());
    for (double& e : noise) e = rng.normal();

    Matrix x(3, 2);
    for (std::size_t r = 0; r < 3; ++r)
        for (std::size_t c = 0; c < 2; ++c) x(r, c) = rng.normal();

    std::vector<double> mean, scale;
    net.forward(x, noise, mean, scale);
    REQUIRE(mean.size() == 3);
    REQUIRE(scale.size() == 3);
    for (double s : scale) CHECK(s >= small_config().scale_floor);

    // same noise gives the same realization, different noise a different one
    std::vector<double> mean2, scale2;
    net.forward(x, noise, mean2, scale2);
    CHECK(mean == mean2);
    std::vector<double> other_noise = noise;
    other_noise[0] += 1.0;
    net.forward(x, other_noise, mean2, scale2);
    CHECK(mean != mean2);

    BnnConfig pinned = small_config(9);
    pinned.fixed_scale = 0.7;
    const Bnn pinned_net(pinned);
    pinned_net.forward(x, noise, mean, scale);
    for (double s : scale) CHECK(s == 0.7);
}

TEST_CASE("kl_total matches the sum of per-parameter gaussian kls") {
    const Bnn net(tiny_config(21));
    const auto& p = net.params();
    // gather (mean, softplus(rho)) pairs per the layer layout
    std::vector<double> means = {p[0], p[1], p[4], p[5], p[6], p[7]};
    std::vector<double> rhos = {p[2], p[3], p[8], p[9], p[10], p[11]};
    std::vector<double> stds;
    for (double r : rhos) stds.push_back(std::log1p(std::exp(r)));
    CHECK(net.kl_total() == doctest::Approx(kl_gaussian(means, stds)).epsilon(1e-12));
}

TEST_CASE("elbo decomposes exactly and reduces to half mse plus a constant") {
    BnnConfig cfg = small_config(31);
    cfg.kl_scale = 0.0;
    cfg.fixed_scale = 1.0;
    const Bnn net(cfg);

    Rng rng(77);
    Matrix x(8, 2);
    std::vector<double> y;
    for (std::size_t r = 0; r < 8; ++r) {
        x(r, 0) = rng.normal();
        x(r, 1) = rng.normal();
        y.push_back(rng.normal());
    }
    std::vector<double> noise(net.noise_count());
    for (double& e : noise) e = rng.normal();

    double nll_term = 0.0, kl_term = 0.0;
    const double loss = net.elbo_loss(x, y, y.size(), noise, nullptr, &nll_term, &kl_term);
    CHECK(loss == nll_term + kl_term);
    CHECK(kl_term == 0.0);

    std::vector<double> mean, scale;
    net.forward(x, noise, mean, scale);
    double mse = 0.0;
    for (std::size_t i = 0; i < y.size(); ++i)
        mse += (y[i] - mean[i]) * (y[i] - mean[i]);
    mse /= static_cast<double>(y.size());
    CHECK(loss == doctest::Approx(0.5 * mse + kHalfLog2Pi).epsilon(1e-12));

    // perfect targets leave only the normalization constant
    const double perfect = net.elbo_loss(x, mean, mean.size(), noise);
    CHECK(perfect == doctest::Approx(kHalfLog2Pi).epsilon(1e-12));

    // with the prior enabled the kl term scales as kl_scale * KL / n_total
    BnnConfig with_prior = small_config(31);
    with_prior.fixed_scale = 1.0;
    with_prior.kl_scale = 2.0;
    const Bnn prior_net(with_prior);
    const double direct_kl = prior_net.kl_total();
    prior_net.elbo_loss(x, y, 100, noise, nullptr, &nll_term, &kl_term);
    CHECK(kl_term == doctest::Approx(2.0 * direct_kl / 100.0).epsilon(1e-12));
}

TEST_CASE("elbo gradient agrees with finite differences under frozen noise") {
    const Bnn net(small_config(41));
    Rng rng(99);
    Matrix x(6, 2);
    std::vector<double> y;
    for (std::size_t r = 0; r < 6; ++r) {
        x(r, 0) = rng.normal();
        x(r, 1) = rng.normal();
        y.push_back(0.3 * x(r, 0) - 0.2 * x(r, 1));
    }
    std::vector<double> noise(net.noise_count());
    for (double& e : noise) e = rng.normal();

    std::vector<double> analytic;
    net.elbo_loss(x, y, y.size(), noise, &analytic);
    REQUIRE(analytic.size() == net.param_count());

    const auto f = [&](const std::vector<double>& params) {
        Bnn probe(small_config(41));
        probe.params() = params;
        return probe.elbo_loss(x, y, y.size(), noise);
    };
    const auto numeric = finite_difference_gradient(f, net.params(), 1e-5);
    CHECK(gradient_check_ratio(analytic, numeric, 1e-3, 1e-6) <= 1.0);
}

TEST_CASE("fit history rows satisfy elbo = nll + kl and training is deterministic") {
    Rng rng(314);
    Matrix x(24, 2);
    std::vector<double> y;
    for (std::size_t r = 0; r < 24; ++r) {
        x(r, 0) = rng.normal();
        x(r, 1) = rng.normal();
        y.push_back(0.8 * x(r, 0) - 0.1 * x(r, 1) + 0.05 * rng.normal());
    }

    TrainConfig tc;
    tc.epochs = 20;
    tc.lr0 = 0.01;
    tc.batch_size = 8;
    tc.seed = 6;

    Bnn a(small_config(51));
    const auto ha = bnn_fit(a, x, y, Matrix(), {}, tc);
    REQUIRE(ha.elbo.size() == 20);
    for (std::size_t e = 0; e < ha.elbo.size(); ++e) {
        CHECK(ha.elbo[e] == ha.nll[e] + ha.kl[e]);
    }
    CHECK(std::isnan(ha.val_nll.back()));
    CHECK(ha.elbo.back() < ha.elbo.front());

    Bnn b(small_config(51));
    const auto hb = bnn_fit(b, x, y, Matrix(), {}, tc);
    CHECK(a.params() == b.params());
    CHECK(ha.elbo == hb.elbo);
}

TEST_CASE("posterior prediction is seeded per point and needs two samples") {
    Rng rng(27);
    Matrix x(30, 1);
    std::vector<double> y;
    for (std::size_t r = 0; r < 30; ++r) {
        x(r, 0) = rng.uniform(0.0, 4.0);
        y.push_back(100.0 + 25.0 * x(r, 0) + rng.normal(0.0, 1.0));
    }
    const StandardScaler scaler = fit_scaler(x, y, {"f"}, ScalerScope::Full);

    BnnConfig cfg = tiny_config(61);
    cfg.hidden_widths = {8};
    TrainConfig tc;
    tc.epochs = 30;
    tc.lr0 = 0.02;
    tc.batch_size = 0;
    tc.seed = 3;
    const BnnModel model = bnn_train(cfg, tc, x, y, Matrix(), {}, scaler,
                                     BaseModelKind::NoBase);
    CHECK(model.train_seed == tc.seed);

    CHECK_THROWS_AS(bnn_predict(model, x, 1, 0), ValidationError);

    const auto preds = bnn_predict(model, x, 50, 1234);
    REQUIRE(preds.size() == 30);
    for (const auto& p : preds) {
        CHECK(p.samples.size() == 50);
        CHECK(p.std_dev > 0.0);
        CHECK(std::isfinite(p.mean));
    }

    // bitwise repeatable for the same sampling seed
    const auto again = bnn_predict(model, x, 50, 1234);
    for (std::size_t i = 0; i < preds.size(); ++i) {
        CHECK(preds[i].samples == again[i].samples);
    }

    // a fresh sampling seed draws different posterior realizations
    const auto other = bnn_predict(model, x, 50, 1235);
    CHECK(preds[0].samples != other[0].samples);

    // each row position owns its noise stream, so a single-row call
    // reproduces the first row of the batch call
    Matrix first(1, 1);
    first(0, 0) = x(0, 0);
    const auto solo = bnn_predict(model, first, 50, 1234);
    CHECK(solo[0].samples == preds[0].samples);
}

TEST_CASE("variational network json round trips") {
    const Bnn net(small_config(71));
    const Bnn back = Bnn::from_json(net.to_json(), "roundtrip");
    CHECK(back.params() == net.params());
    CHECK(back.config().hidden_widths == net.config().hidden_widths);
    CHECK(back.config().fixed_scale == net.config().fixed_scale);
    CHECK_THROWS_AS(Bnn::from_json("{}", "broken"), SchemaError);

    Rng rng(8);
    Matrix x(20, 1);
    std::vector<double> y;
    for (std::size_t r = 0; r < 20; ++r) {
        x(r, 0) = rng.uniform(0.0, 2.0);
        y.push_back(10.0 + 5.0 * x(r, 0) + 0.1 * rng.normal());
    }
    const StandardScaler scaler = fit_scaler(x, y, {"f"}, ScalerScope::Full);
    BnnConfig cfg = tiny_config(81);
    TrainConfig tc;
    tc.epochs = 5;
    tc.lr0 = 0.01;
    tc.seed = 2;
    tc.batch_size = 0;
    const BnnModel model = bnn_train(cfg, tc, x, y, Matrix(), {}, scaler,
                                     BaseModelKind::Bowring);
    const BnnModel back_model = BnnModel::from_json(model.to_json(), "roundtrip");
    CHECK(back_model.net.params() == model.net.params());
    CHECK(back_model.base == model.base);
    CHECK(back_model.train_seed == model.train_seed);

    const auto before = bnn_predict(model, x, 20, 7);
    const auto after = bnn_predict(back_model, x, 20, 7);
    for (std::size_t i = 0; i < before.size(); ++i) {
        CHECK(before[i].samples == after[i].samples);
    }
}
