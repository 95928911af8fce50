#include <doctest.h>

#include <cmath>
#include <string>
#include <vector>

#include "chf/dgp.hpp"
#include "chf/errors.hpp"
#include "chf/rng.hpp"

using namespace chf;

namespace {

std::vector<double> matrix_row(const Matrix& m, std::size_t r) {
    return std::vector<double>(m.row(r), m.row(r) + m.cols());
}

Matrix kernel_gram(const RbfKernel& kernel, const Matrix& z, double jitter) {
    Matrix k(z.rows(), z.rows());
    for (std::size_t i = 0; i < z.rows(); ++i) {
        for (std::size_t j = 0; j < z.rows(); ++j) {
            k(i, j) = rbf_eval(kernel, matrix_row(z, i), matrix_row(z, j));
        }
        k(i, i) += jitter;
    }
    return k;
}

Matrix column(const std::vector<double>& values) {
    Matrix x(values.size(), 1);
    for (std::size_t i = 0; i < values.size(); ++i) x(i, 0) = values[i];
    return x;
}

DgpConfig tiny_config(std::uint64_t seed = 1) {
    DgpConfig cfg;
    cfg.input_dim = 1;
    cfg.max_inducing = 4;
    cfg.mc_train = 2;
    cfg.mc_predict = 8;
    cfg.seed = seed;
    return cfg;
}

struct Toy {
    Matrix x;
    std::vector<double> y;
};

Toy toy_problem(std::size_t n, std::uint64_t seed) {
    Toy t;
    Rng rng(seed);
    t.x = Matrix(n, 1);
    for (std::size_t i = 0; i < n; ++i) {
        t.x(i, 0) = rng.uniform(-2.0, 2.0);
        t.y.push_back(std::sin(2.0 * t.x(i, 0)) + 0.05 * rng.normal());
    }
    return t;
}

}  // namespace

TEST_CASE("rbf kernel closed form") {
    RbfKernel kernel;
    kernel.variance = 1.5;
    kernel.lengthscales = {0.5, 2.0};

    CHECK(rbf_eval(kernel, {0.3, -1.0}, {0.3, -1.0}) == doctest::Approx(1.5));
    CHECK(rbf_eval(kernel, {1.0, 0.0}, {0.0, 0.0}) ==
          doctest::Approx(1.5 * std::exp(-0.5 * 4.0)));
    CHECK(rbf_eval(kernel, {0.0, 2.0}, {0.0, 0.0}) ==
          doctest::Approx(1.5 * std::exp(-0.5 * 1.0)));
    // symmetry and monotone decay
    CHECK(rbf_eval(kernel, {1.0, 2.0}, {0.0, 0.5}) ==
          rbf_eval(kernel, {0.0, 0.5}, {1.0, 2.0}));
    CHECK(rbf_eval(kernel, {0.1, 0.0}, {0.0, 0.0}) >
          rbf_eval(kernel, {0.2, 0.0}, {0.0, 0.0}));

    CHECK_THROWS_AS(rbf_eval(kernel, {1.0}, {0.0, 0.0}), ValidationError);
}

TEST_CASE("a posterior equal to the prior predicts the prior marginals") {
    SvgpLayer layer;
    layer.inducing = column({-2.0, -0.5, 0.4, 1.3, 2.2});
    layer.kernel.variance = 2.0;
    layer.kernel.lengthscales = {1.1};
    layer.jitter = 1e-6;

    SvgpGp gp;
    gp.mean.assign(5, 0.0);
    gp.cov_chol = cholesky(kernel_gram(layer.kernel, layer.inducing, layer.jitter));
    layer.gps.push_back(gp);

    const Matrix h = column({-3.0, -0.5, 0.05, 1.7, 10.0});
    Matrix mean, var;
    layer_predict(layer, h, mean, var);
    REQUIRE(mean.rows() == 5);
    REQUIRE(mean.cols() == 1);
    for (std::size_t r = 0; r < 5; ++r) {
        CHECK(mean(r, 0) == doctest::Approx(0.0).epsilon(1e-12));
        CHECK(var(r, 0) == doctest::Approx(2.0).epsilon(1e-9));
    }

    CHECK(layer_kl(layer, 0) == doctest::Approx(0.0).epsilon(1e-9));
    CHECK_THROWS_AS(layer_kl(layer, 1), ValidationError);
}

TEST_CASE("a shrunk posterior pins the prediction at an inducing point") {
    SvgpLayer layer;
    layer.inducing = column({-1.0, 0.0, 1.0});
    layer.kernel.variance = 1.0;
    layer.kernel.lengthscales = {0.7};
    layer.jitter = 1e-9;

    SvgpGp gp;
    gp.mean = {0.5, -0.3, 0.8};
    gp.cov_chol = Matrix(3, 3);
    for (std::size_t i = 0; i < 3; ++i) gp.cov_chol(i, i) = 1e-6;
    layer.gps.push_back(gp);

    Matrix mean, var;
    layer_predict(layer, layer.inducing, mean, var);
    for (std::size_t r = 0; r < 3; ++r) {
        CHECK(mean(r, 0) == doctest::Approx(gp.mean[r]).epsilon(1e-4));
        CHECK(var(r, 0) >= 0.0);
        CHECK(var(r, 0) < 1e-4);
    }

    // a certain posterior makes the kl strictly positive
    CHECK(layer_kl(layer, 0) > 1.0);
}

TEST_CASE("predictions are invariant under inducing-point permutation") {
    SvgpLayer layer;
    layer.inducing = column({0.0, 1.0, 2.5, 4.0});
    layer.kernel.variance = 1.4;
    layer.kernel.lengthscales = {0.9};
    layer.jitter = 1e-8;

    SvgpGp gp;
    gp.mean = {0.3, -0.2, 0.5, 0.1};
    gp.cov_chol = Matrix(4, 4);
    const double diag[4] = {0.5, 0.4, 0.6, 0.3};
    for (std::size_t i = 0; i < 4; ++i) gp.cov_chol(i, i) = diag[i];
    gp.cov_chol(1, 0) = 0.1;
    gp.cov_chol(2, 1) = -0.15;
    gp.cov_chol(3, 0) = 0.05;
    layer.gps.push_back(gp);

    const Matrix h = column({-0.5, 0.7, 3.3});
    Matrix mean, var;
    layer_predict(layer, h, mean, var);

    // reverse the inducing order and conjugate the posterior to match
    const std::size_t perm[4] = {3, 2, 1, 0};
    SvgpLayer rev = layer;
    Matrix s = matmul_a_bt(gp.cov_chol, gp.cov_chol);
    Matrix s_perm(4, 4);
    for (std::size_t i = 0; i < 4; ++i) {
        rev.inducing(i, 0) = layer.inducing(perm[i], 0);
        rev.gps[0].mean[i] = gp.mean[perm[i]];
        for (std::size_t j = 0; j < 4; ++j) s_perm(i, j) = s(perm[i], perm[j]);
    }
    rev.gps[0].cov_chol = cholesky(s_perm);

    Matrix mean_rev, var_rev;
    layer_predict(rev, h, mean_rev, var_rev);
    for (std::size_t r = 0; r < 3; ++r) {
        CHECK(mean_rev(r, 0) == doctest::Approx(mean(r, 0)).epsilon(1e-8));
        CHECK(var_rev(r, 0) == doctest::Approx(var(r, 0)).epsilon(1e-8));
    }

    // the kl is a function of the distribution, not the ordering
    CHECK(layer_kl(rev, 0) == doctest::Approx(layer_kl(layer, 0)).epsilon(1e-8));
}

TEST_CASE("duplicate inducing points survive on jitter but fail once it is exhausted") {
    SvgpLayer layer;
    layer.inducing = column({1.0, 1.0, 2.0});
    layer.kernel.variance = 1.0;
    layer.kernel.lengthscales = {1.0};
    layer.jitter = 1e-6;

    SvgpGp gp;
    gp.mean = {0.1, 0.1, -0.2};
    gp.cov_chol = Matrix(3, 3);
    for (std::size_t i = 0; i < 3; ++i) gp.cov_chol(i, i) = 0.1;
    layer.gps.push_back(gp);

    const Matrix h = column({1.5});
    Matrix mean, var;
    layer_predict(layer, h, mean, var);
    CHECK(std::isfinite(mean(0, 0)));
    CHECK(var(0, 0) >= 0.0);

    layer.jitter = 1e-18;
    CHECK_THROWS_AS(layer_predict(layer, h, mean, var), RunError);
}

TEST_CASE("construction seeds both layers from the same inducing set") {
    const Toy t = toy_problem(10, 5);
    const Dgp net(tiny_config(3), t.x);

    CHECK(net.layer1.gps.size() == 1);
    CHECK(net.layer2.gps.size() == 1);
    CHECK(net.layer1.inducing.rows() == 4);
    CHECK(net.layer1.inducing == net.layer2.inducing);
    CHECK(net.noise_var == tiny_config().init_noise_var);
    CHECK(net.layer1.jitter == tiny_config().jitter);

    // every inducing point is one of the training rows
    for (std::size_t i = 0; i < net.layer1.inducing.rows(); ++i) {
        bool found = false;
        for (std::size_t r = 0; r < t.x.rows(); ++r) {
            if (net.layer1.inducing(i, 0) == t.x(r, 0)) found = true;
        }
        CHECK(found);
    }

    // fewer points than max_inducing uses them all
    const Toy small = toy_problem(3, 6);
    const Dgp small_net(tiny_config(3), small.x);
    CHECK(small_net.layer1.inducing.rows() == 3);

    // deterministic in the config seed
    const Dgp again(tiny_config(3), t.x);
    CHECK(again.layer1.inducing == net.layer1.inducing);
    CHECK(again.params() == net.params());
    const Dgp other(tiny_config(4), t.x);
    CHECK(other.layer1.inducing != net.layer1.inducing);
}

TEST_CASE("kmeanspp spreads centers over distinct rows") {
    Matrix x(6, 1);
    for (std::size_t i = 0; i < 6; ++i) x(i, 0) = static_cast<double>(i) * 10.0;
    Rng rng(9);
    const Matrix z = kmeanspp_inducing(x, 4, rng);
    REQUIRE(z.rows() == 4);
    for (std::size_t i = 0; i < 4; ++i) {
        for (std::size_t j = i + 1; j < 4; ++j) {
            CHECK(z(i, 0) != z(j, 0));
        }
    }
    Rng rng2(9);
    CHECK_THROWS_AS(kmeanspp_inducing(x, 7, rng2), ValidationError);
}

TEST_CASE("flat parameters round trip through the whitened coordinates") {
    const Toy t = toy_problem(10, 11);
    Dgp net(tiny_config(5), t.x);

    const auto p = net.params();
    CHECK(p.size() == net.param_count());
    // layers hold log variance + log lengthscale + mean(4) + tril(10) each,
    // plus the log noise variance
    CHECK(p.size() == 2 * (1 + 1 + 4 + 10) + 1);

    Dgp copy = net;
    copy.set_params(p);
    const auto p2 = copy.params();
    REQUIRE(p2.size() == p.size());
    for (std::size_t i = 0; i < p.size(); ++i) {
        CHECK(p2[i] == doctest::Approx(p[i]).epsilon(1e-9));
    }
    CHECK(copy.noise_var == doctest::Approx(net.noise_var).epsilon(1e-12));

    std::vector<double> wrong(p.size() + 1, 0.0);
    CHECK_THROWS_AS(net.set_params(wrong), ValidationError);
}

TEST_CASE("elbo splits exactly into fit and kl and matches finite differences") {
    const Toy t = toy_problem(10, 21);
    Dgp net(tiny_config(7), t.x);

    Matrix x(5, 1);
    std::vector<double> y;
    for (std::size_t i = 0; i < 5; ++i) {
        x(i, 0) = t.x(i, 0);
        y.push_back(t.y[i]);
    }
    const int mc = 2;
    REQUIRE(net.noise_count(5, mc) == 10);
    Rng rng(33);
    std::vector<double> noise(net.noise_count(5, mc));
    for (double& e : noise) e = rng.normal();

    double fit = 0.0, kl = 0.0;
    std::vector<double> analytic;
    const double loss = net.elbo_loss(x, y, 40, noise, mc, &analytic, &fit, &kl);
    CHECK(loss == fit + kl);
    CHECK(kl > 0.0);
    REQUIRE(analytic.size() == net.param_count());

    const auto f = [&](const std::vector<double>& params) {
        Dgp probe = net;
        probe.set_params(params);
        return probe.elbo_loss(x, y, 40, noise, mc);
    };
    const auto numeric = finite_difference_gradient(f, net.params(), 1e-5);
    CHECK(gradient_check_ratio(analytic, numeric, 1e-3, 1e-6) <= 1.0);

    CHECK_THROWS_AS(net.elbo_loss(x, y, 40, noise, 0), ValidationError);
    std::vector<double> short_noise(3, 0.0);
    CHECK_THROWS_AS(net.elbo_loss(x, y, 40, short_noise, mc), ValidationError);
}

TEST_CASE("fitting drives the loss down deterministically") {
    const Toy t = toy_problem(24, 41);
    DgpConfig cfg = tiny_config(13);
    cfg.max_inducing = 8;

    TrainConfig tc;
    tc.epochs = 25;
    tc.lr0 = 0.02;
    tc.batch_size = 0;
    tc.seed = 17;

    Dgp a(cfg, t.x);
    const auto ha = dgp_fit(a, t.x, t.y, Matrix(), {}, tc);
    REQUIRE(ha.loss.size() == 25);
    for (std::size_t e = 0; e < ha.loss.size(); ++e) {
        CHECK(ha.loss[e] == ha.fit[e] + ha.kl[e]);
    }
    CHECK(std::isnan(ha.val_fit.back()));
    CHECK(ha.loss.back() < ha.loss.front());

    Dgp b(cfg, t.x);
    const auto hb = dgp_fit(b, t.x, t.y, Matrix(), {}, tc);
    CHECK(a.params() == b.params());
    CHECK(ha.loss == hb.loss);
}

TEST_CASE("moment predictions are reproducible and carry the likelihood noise") {
    const Toy t = toy_problem(30, 51);
    const StandardScaler scaler = fit_scaler(t.x, t.y, {"f"}, ScalerScope::Full);

    DgpConfig cfg = tiny_config(15);
    cfg.max_inducing = 8;
    TrainConfig tc;
    tc.epochs = 20;
    tc.lr0 = 0.02;
    tc.batch_size = 0;
    tc.seed = 19;
    const DgpModel model =
        dgp_train(cfg, tc, t.x, t.y, Matrix(), {}, scaler, BaseModelKind::NoBase);
    CHECK(model.train_seed == tc.seed);

    const auto preds = dgp_predict(model, t.x, 16, 777);
    REQUIRE(preds.size() == 30);
    const double noise_floor =
        std::sqrt(model.net.noise_var) * model.scaler.target_std;
    for (const auto& p : preds) {
        CHECK(p.samples.empty());
        CHECK(std::isfinite(p.mean));
        CHECK(p.std_dev >= noise_floor * (1.0 - 1e-12));
        CHECK(p.hi_2sigma == doctest::Approx(p.mean + 2.0 * p.std_dev));
    }

    const auto again = dgp_predict(model, t.x, 16, 777);
    for (std::size_t i = 0; i < preds.size(); ++i) {
        CHECK(preds[i].mean == again[i].mean);
        CHECK(preds[i].std_dev == again[i].std_dev);
    }

    const auto other_seed = dgp_predict(model, t.x, 16, 778);
    CHECK(preds[0].mean != other_seed[0].mean);

    // per-point seeding makes the first row independent of the batch tail
    Matrix first(1, 1);
    first(0, 0) = t.x(0, 0);
    const auto solo = dgp_predict(model, first, 16, 777);
    CHECK(solo[0].mean == preds[0].mean);
    CHECK(solo[0].std_dev == preds[0].std_dev);

    CHECK_THROWS_AS(dgp_predict(model, t.x, 0, 1), ValidationError);
}

TEST_CASE("dgp json round trips") {
    const Toy t = toy_problem(10, 61);
    const Dgp net(tiny_config(23), t.x);
    const Dgp back = Dgp::from_json(net.to_json(), "roundtrip");
    CHECK(back.params() == net.params());
    CHECK(back.layer1.inducing == net.layer1.inducing);
    CHECK(back.noise_var == net.noise_var);
    CHECK(back.config.max_inducing == net.config.max_inducing);
    CHECK_THROWS_AS(Dgp::from_json("{}", "broken"), SchemaError);

    const StandardScaler scaler = fit_scaler(t.x, t.y, {"f"}, ScalerScope::Full);
    TrainConfig tc;
    tc.epochs = 5;
    tc.lr0 = 0.01;
    tc.batch_size = 0;
    tc.seed = 2;
    const DgpModel model =
        dgp_train(tiny_config(23), tc, t.x, t.y, Matrix(), {}, scaler,
                  BaseModelKind::Biasi);
    const DgpModel back_model = DgpModel::from_json(model.to_json(), "roundtrip");
    CHECK(back_model.net.params() == model.net.params());
    CHECK(back_model.base == model.base);
    CHECK(back_model.train_seed == model.train_seed);

    const auto before = dgp_predict(model, t.x, 8, 5);
    const auto after = dgp_predict(back_model, t.x, 8, 5);
    for (std::size_t i = 0; i < before.size(); ++i) {
        CHECK(before[i].mean == after[i].mean);
        CHECK(before[i].std_dev == after[i].std_dev);
    }
}
