#include "chf/dgp.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <string>
#include <utility>

#include <json.hpp>

#include "chf/csv.hpp"
#include "chf/errors.hpp"

namespace chf {

namespace {

constexpr double kHalfLog2Pi = 0.91893853320467274178;  // 0.5 * log(2 * pi)
constexpr double kSampleVarFloor = 1e-12;  ///< floor under layer-1 variances before sqrt

double sq(double v) { return v * v; }

/// K(A, B) for row-per-point inputs.
Matrix cross_kernel(const RbfKernel& kernel, const Matrix& a, const Matrix& b) {
    const std::size_t d = kernel.lengthscales.size();
    Matrix k(a.rows(), b.rows());
    for (std::size_t i = 0; i < a.rows(); ++i) {
        const double* ra = a.row(i);
        for (std::size_t j = 0; j < b.rows(); ++j) {
            const double* rb = b.row(j);
            double acc = 0.0;
            for (std::size_t t = 0; t < d; ++t) {
                acc += sq((ra[t] - rb[t]) / kernel.lengthscales[t]);
            }
            k(i, j) = kernel.variance * std::exp(-0.5 * acc);
        }
    }
    return k;
}

/// Cholesky of kraw + jitter I, escalating the jitter by 10 twice.
Matrix chol_with_jitter(const Matrix& kraw, double base_jitter, double* used) {
    double j = base_jitter;
    for (int attempt = 0; attempt < 3; ++attempt) {
        Matrix kj = kraw;
        for (std::size_t i = 0; i < kj.rows(); ++i) kj(i, i) += j;
        try {
            Matrix l = cholesky(kj);
            if (used != nullptr) *used = j;
            return l;
        } catch (const RunError&) {
            j *= 10.0;
        }
    }
    throw RunError("gp layer: cholesky failed after jitter escalation to " +
                   format_double(j / 10.0));
}

/// Everything about one layer that depends only on its parameters.
struct LayerCtx {
    Matrix kraw;   ///< kernel matrix over the inducing points, no jitter
    Matrix lm;     ///< chol(kraw + jitter I)
    double used_jitter = 0.0;
    std::vector<std::vector<double>> beta;  ///< per gp: Kmm^-1 mean
};

LayerCtx make_ctx(const SvgpLayer& layer) {
    LayerCtx ctx;
    ctx.kraw = cross_kernel(layer.kernel, layer.inducing, layer.inducing);
    ctx.lm = chol_with_jitter(ctx.kraw, layer.jitter, &ctx.used_jitter);
    const std::size_t m = ctx.kraw.rows();
    ctx.beta.reserve(layer.gps.size());
    for (const auto& gp : layer.gps) {
        Matrix b(m, 1);
        for (std::size_t i = 0; i < m; ++i) b(i, 0) = gp.mean[i];
        solve_lower_inplace(ctx.lm, b);
        solve_lower_transpose_inplace(ctx.lm, b);
        std::vector<double> bv(m);
        for (std::size_t i = 0; i < m; ++i) bv[i] = b(i, 0);
        ctx.beta.push_back(std::move(bv));
    }
    return ctx;
}

/// One layer evaluated on one batch of inputs.
struct LayerEval {
    Matrix kmn;             ///< M x B
    Matrix a;               ///< Kmm^-1 Kmn, M x B
    Matrix mu;              ///< B x W
    Matrix var;             ///< B x W, clamped at 0
    Matrix mask;            ///< B x W, 1 where the variance was not clamped
    std::vector<Matrix> t;  ///< per gp: L_d^T A, M x B
    std::size_t negative_clamps = 0;  ///< entries below -1e-10 before the clamp
};

LayerEval eval_layer(const SvgpLayer& layer, const LayerCtx& ctx, const Matrix& h) {
    const std::size_t m = layer.inducing.rows();
    const std::size_t b = h.rows();
    const std::size_t w = layer.gps.size();
    LayerEval ev;
    ev.kmn = cross_kernel(layer.kernel, layer.inducing, h);
    Matrix v = ev.kmn;
    solve_lower_inplace(ctx.lm, v);
    ev.a = v;
    solve_lower_transpose_inplace(ctx.lm, ev.a);

    std::vector<double> prior_reduction(b, 0.0);
    for (std::size_t i = 0; i < b; ++i) {
        double acc = 0.0;
        for (std::size_t p = 0; p < m; ++p) acc += sq(v(p, i));
        prior_reduction[i] = acc;
    }

    ev.mu = Matrix(b, w);
    ev.var = Matrix(b, w);
    ev.mask = Matrix(b, w);
    ev.t.reserve(w);
    for (std::size_t d = 0; d < w; ++d) {
        const SvgpGp& gp = layer.gps[d];
        Matrix td = matmul_at_b(gp.cov_chol, ev.a);
        for (std::size_t i = 0; i < b; ++i) {
            double mu = 0.0;
            for (std::size_t p = 0; p < m; ++p) mu += ev.a(p, i) * gp.mean[p];
            double var = layer.kernel.variance - prior_reduction[i];
            for (std::size_t p = 0; p < m; ++p) var += sq(td(p, i));
            ev.mu(i, d) = mu;
            if (var >= 0.0) {
                ev.var(i, d) = var;
                ev.mask(i, d) = 1.0;
            } else {
                if (var < -1e-10) ++ev.negative_clamps;
                ev.var(i, d) = 0.0;
                ev.mask(i, d) = 0.0;
            }
        }
        ev.t.push_back(std::move(td));
    }
    return ev;
}

double kl_one_gp(const SvgpLayer& layer, const LayerCtx& ctx, std::size_t d) {
    const std::size_t m = layer.inducing.rows();
    const SvgpGp& gp = layer.gps[d];
    Matrix ls = gp.cov_chol;
    solve_lower_inplace(ctx.lm, ls);
    double trace = 0.0;
    for (std::size_t i = 0; i < ls.size(); ++i) trace += sq(ls.data()[i]);
    double maha = 0.0;
    for (std::size_t i = 0; i < m; ++i) maha += gp.mean[i] * ctx.beta[d][i];
    double logdet_gap = 0.0;
    for (std::size_t i = 0; i < m; ++i) {
        logdet_gap += std::log(ctx.lm(i, i)) - std::log(gp.cov_chol(i, i));
    }
    return 0.5 * (trace + maha - static_cast<double>(m)) + logdet_gap;
}

/// The stored posterior re-expressed against the prior factor: the model keeps
/// q(u) = N(m, S) directly, but the optimizer works on v with u = Lm v, where
/// the KL to the prior is the standard-normal form and stays well conditioned
/// no matter how close to singular Kmm is.
struct WhiteGp {
    std::vector<double> mean;  ///< Lm^-1 m
    Matrix chol;               ///< Lm^-1 L_S, lower triangular
};

WhiteGp whiten_gp(const Matrix& lm, const SvgpGp& gp) {
    const std::size_t m = lm.rows();
    Matrix mv(m, 1);
    for (std::size_t i = 0; i < m; ++i) mv(i, 0) = gp.mean[i];
    solve_lower_inplace(lm, mv);
    WhiteGp w;
    w.mean.resize(m);
    for (std::size_t i = 0; i < m; ++i) w.mean[i] = mv(i, 0);
    w.chol = gp.cov_chol;
    solve_lower_inplace(lm, w.chol);
    return w;
}

/// KL(q || prior) in whitened coordinates, equal to the value kl_one_gp
/// computes from the stored parameters.
double kl_white(const WhiteGp& w) {
    const std::size_t m = w.chol.rows();
    double acc = 0.0;
    double logdet = 0.0;
    for (std::size_t i = 0; i < m; ++i) {
        for (std::size_t j = 0; j <= i; ++j) acc += sq(w.chol(i, j));
        acc += sq(w.mean[i]);
        logdet += std::log(w.chol(i, i));
    }
    return 0.5 * (acc - static_cast<double>(m)) - logdet;
}

/// Reverse-mode Cholesky: adjoint of Kmm given the adjoint of Lm = chol(Kmm).
/// Returns the symmetrized full-matrix adjoint.
Matrix chol_backward(const Matrix& lm, const Matrix& glm) {
    const std::size_t m = lm.rows();
    Matrix p = matmul_at_b(lm, glm);
    for (std::size_t i = 0; i < m; ++i) {
        p(i, i) *= 0.5;
        for (std::size_t j = i + 1; j < m; ++j) p(i, j) = 0.0;
    }
    solve_lower_transpose_inplace(lm, p);
    Matrix pt = transpose(p);
    solve_lower_transpose_inplace(lm, pt);
    Matrix x = transpose(pt);
    Matrix out(m, m);
    for (std::size_t i = 0; i < m; ++i) {
        for (std::size_t j = 0; j < m; ++j) out(i, j) = 0.5 * (x(i, j) + x(j, i));
    }
    return out;
}

/// acc += scale * u v^T.
void add_outer(Matrix& acc, double scale, const std::vector<double>& u,
               const std::vector<double>& v) {
    for (std::size_t p = 0; p < u.size(); ++p) {
        const double s = scale * u[p];
        for (std::size_t q = 0; q < v.size(); ++q) acc(p, q) += s * v[q];
    }
}

/// Columns of a scaled by g: out(p, i) = a(p, i) * g[i].
Matrix scale_cols(const Matrix& a, const std::vector<double>& g) {
    Matrix out = a;
    for (std::size_t p = 0; p < a.rows(); ++p) {
        for (std::size_t i = 0; i < a.cols(); ++i) out(p, i) *= g[i];
    }
    return out;
}

std::vector<double> matvec(const Matrix& a, const std::vector<double>& x) {
    std::vector<double> out(a.rows(), 0.0);
    for (std::size_t p = 0; p < a.rows(); ++p) {
        double acc = 0.0;
        for (std::size_t i = 0; i < a.cols(); ++i) acc += a(p, i) * x[i];
        out[p] = acc;
    }
    return out;
}

/// Gradient buffers for one layer, flat-packed later.
struct LayerGrad {
    double g_logvar = 0.0;
    std::vector<double> g_logls;
    Matrix gkmm;
    std::vector<std::vector<double>> g_m;
    std::vector<Matrix> g_l;

    LayerGrad(std::size_t din, std::size_t m, std::size_t w)
        : g_logls(din, 0.0), gkmm(m, m) {
        g_m.assign(w, std::vector<double>(m, 0.0));
        g_l.assign(w, Matrix(m, m));
    }
};

/// Chain dL/dKmn into the kernel log-parameters and, optionally, the
/// layer inputs.
void chain_kmn(const SvgpLayer& layer, const Matrix& gkmn, const Matrix& kmn,
               const Matrix& h, LayerGrad& lg, Matrix* gh) {
    const std::size_t m = layer.inducing.rows();
    const std::size_t b = h.rows();
    const std::size_t d = layer.kernel.lengthscales.size();
    for (std::size_t p = 0; p < m; ++p) {
        const double* zp = layer.inducing.row(p);
        for (std::size_t i = 0; i < b; ++i) {
            const double gk = gkmn(p, i) * kmn(p, i);
            if (gk == 0.0) continue;
            lg.g_logvar += gkmn(p, i) * kmn(p, i);
            const double* hi = h.row(i);
            for (std::size_t t = 0; t < d; ++t) {
                const double diff = zp[t] - hi[t];
                const double l2 = sq(layer.kernel.lengthscales[t]);
                lg.g_logls[t] += gk * sq(diff) / l2;
                if (gh != nullptr) (*gh)(i, t) += gk * diff / l2;
            }
        }
    }
}

/// Chain the accumulated dL/dKmm into the kernel log-parameters.
void chain_kmm(const SvgpLayer& layer, const LayerCtx& ctx, LayerGrad& lg) {
    const std::size_t m = layer.inducing.rows();
    const std::size_t d = layer.kernel.lengthscales.size();
    for (std::size_t p = 0; p < m; ++p) {
        const double* zp = layer.inducing.row(p);
        for (std::size_t q = 0; q < m; ++q) {
            const double gk = lg.gkmm(p, q) * ctx.kraw(p, q);
            if (gk == 0.0) continue;
            lg.g_logvar += gk;
            const double* zq = layer.inducing.row(q);
            for (std::size_t t = 0; t < d; ++t) {
                lg.g_logls[t] += gk * sq(zp[t] - zq[t]) / sq(layer.kernel.lengthscales[t]);
            }
        }
    }
}

std::size_t tril_count(std::size_t m) { return m * (m + 1) / 2; }

nlohmann::ordered_json matrix_to_json(const Matrix& m) {
    auto rows = nlohmann::ordered_json::array();
    for (std::size_t i = 0; i < m.rows(); ++i) {
        auto row = nlohmann::ordered_json::array();
        for (std::size_t j = 0; j < m.cols(); ++j) row.push_back(m(i, j));
        rows.push_back(std::move(row));
    }
    return rows;
}

Matrix matrix_from_json(const nlohmann::json& j, const std::string& origin) {
    if (!j.is_array() || j.empty()) throw SchemaError(origin + ": expected a matrix");
    const std::size_t rows = j.size();
    const std::size_t cols = j.at(0).size();
    Matrix m(rows, cols);
    for (std::size_t i = 0; i < rows; ++i) {
        if (j.at(i).size() != cols) {
            throw SchemaError(origin + ": ragged matrix rows");
        }
        for (std::size_t c = 0; c < cols; ++c) m(i, c) = j.at(i).at(c).get<double>();
    }
    return m;
}

nlohmann::ordered_json layer_to_json(const SvgpLayer& layer) {
    nlohmann::ordered_json j;
    j["inducing"] = matrix_to_json(layer.inducing);
    j["kernel_variance"] = layer.kernel.variance;
    j["kernel_lengthscales"] = layer.kernel.lengthscales;
    j["jitter"] = layer.jitter;
    auto gps = nlohmann::ordered_json::array();
    for (const auto& gp : layer.gps) {
        nlohmann::ordered_json g;
        g["mean"] = gp.mean;
        g["cov_chol"] = matrix_to_json(gp.cov_chol);
        gps.push_back(std::move(g));
    }
    j["gps"] = std::move(gps);
    return j;
}

SvgpLayer layer_from_json(const nlohmann::json& j, const std::string& origin) {
    SvgpLayer layer;
    layer.inducing = matrix_from_json(j.at("inducing"), origin);
    layer.kernel.variance = j.at("kernel_variance").get<double>();
    layer.kernel.lengthscales = j.at("kernel_lengthscales").get<std::vector<double>>();
    layer.jitter = j.at("jitter").get<double>();
    for (const auto& g : j.at("gps")) {
        SvgpGp gp;
        gp.mean = g.at("mean").get<std::vector<double>>();
        gp.cov_chol = matrix_from_json(g.at("cov_chol"), origin);
        if (gp.mean.size() != layer.inducing.rows() ||
            gp.cov_chol.rows() != layer.inducing.rows() ||
            gp.cov_chol.cols() != layer.inducing.rows()) {
            throw SchemaError(origin + ": gp parameter sizes do not match " +
                              std::to_string(layer.inducing.rows()) + " inducing points");
        }
        layer.gps.push_back(std::move(gp));
    }
    return layer;
}

}  // namespace

double rbf_eval(const RbfKernel& kernel, const std::vector<double>& x,
                const std::vector<double>& y) {
    if (x.size() != kernel.lengthscales.size() || y.size() != kernel.lengthscales.size()) {
        throw ValidationError("rbf_eval: inputs of size " + std::to_string(x.size()) +
                              " and " + std::to_string(y.size()) + " against " +
                              std::to_string(kernel.lengthscales.size()) + " lengthscales");
    }
    double acc = 0.0;
    for (std::size_t t = 0; t < x.size(); ++t) {
        acc += sq((x[t] - y[t]) / kernel.lengthscales[t]);
    }
    return kernel.variance * std::exp(-0.5 * acc);
}

void layer_predict(const SvgpLayer& layer, const Matrix& h, Matrix& mean, Matrix& var) {
    if (h.cols() != layer.inducing.cols()) {
        throw ValidationError("layer_predict: input has " + std::to_string(h.cols()) +
                              " columns, layer expects " +
                              std::to_string(layer.inducing.cols()));
    }
    LayerCtx ctx = make_ctx(layer);
    LayerEval ev = eval_layer(layer, ctx, h);
    if (ev.negative_clamps > 0) {
        std::fprintf(stderr,
                     "layer_predict: clamped %zu predictive variances below -1e-10\n",
                     ev.negative_clamps);
    }
    mean = std::move(ev.mu);
    var = std::move(ev.var);
}

double layer_kl(const SvgpLayer& layer, std::size_t gp_index) {
    if (gp_index >= layer.gps.size()) {
        throw ValidationError("layer_kl: gp index " + std::to_string(gp_index) +
                              " out of range for " + std::to_string(layer.gps.size()) +
                              " gps");
    }
    LayerCtx ctx = make_ctx(layer);
    return kl_one_gp(layer, ctx, gp_index);
}

void DgpConfig::validate() const {
    if (input_dim <= 0) throw ValidationError("dgp config: input_dim must be positive");
    if (max_inducing <= 0) {
        throw ValidationError("dgp config: max_inducing must be positive");
    }
    if (mc_train <= 0 || mc_predict <= 0) {
        throw ValidationError("dgp config: sample counts must be positive");
    }
    if (!(jitter > 0.0) || !std::isfinite(jitter)) {
        throw ValidationError("dgp config: jitter must be positive and finite");
    }
    if (!(init_noise_var > 0.0) || !std::isfinite(init_noise_var)) {
        throw ValidationError("dgp config: init_noise_var must be positive and finite");
    }
}

Matrix kmeanspp_inducing(const Matrix& x, std::size_t m, Rng& rng) {
    const std::size_t n = x.rows();
    if (m == 0 || m > n) {
        throw ValidationError("kmeanspp_inducing: need 1 <= m <= " + std::to_string(n) +
                              ", got " + std::to_string(m));
    }
    const std::size_t d = x.cols();
    Matrix centers(m, d);
    std::vector<double> d2(n, std::numeric_limits<double>::infinity());
    std::vector<bool> chosen(n, false);

    std::size_t idx = static_cast<std::size_t>(rng.uniform_int(n));
    std::copy(x.row(idx), x.row(idx) + d, centers.row(0));
    chosen[idx] = true;

    for (std::size_t c = 1; c < m; ++c) {
        const double* prev = centers.row(c - 1);
        double total = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            double dist = 0.0;
            const double* xi = x.row(i);
            for (std::size_t t = 0; t < d; ++t) dist += sq(xi[t] - prev[t]);
            if (dist < d2[i]) d2[i] = dist;
            total += d2[i];
        }
        if (total > 0.0) {
            double u = rng.uniform() * total;
            idx = n - 1;
            double acc = 0.0;
            for (std::size_t i = 0; i < n; ++i) {
                acc += d2[i];
                if (u < acc) {
                    idx = i;
                    break;
                }
            }
        } else {
            // all remaining points coincide with a center; take any unused row
            idx = 0;
            while (idx < n && chosen[idx]) ++idx;
            if (idx == n) idx = 0;
        }
        std::copy(x.row(idx), x.row(idx) + d, centers.row(c));
        chosen[idx] = true;
        d2[idx] = 0.0;
    }
    return centers;
}

Dgp::Dgp(const DgpConfig& config_in, const Matrix& x_init) : config(config_in) {
    config.validate();
    if (x_init.rows() == 0) {
        throw ValidationError("dgp: no inputs given for inducing-point placement");
    }
    if (x_init.cols() != static_cast<std::size_t>(config.input_dim)) {
        throw ValidationError("dgp: initialization inputs have " +
                              std::to_string(x_init.cols()) + " columns, config expects " +
                              std::to_string(config.input_dim));
    }
    const std::size_t m =
        std::min<std::size_t>(static_cast<std::size_t>(config.max_inducing), x_init.rows());
    Rng rng(config.seed);
    Matrix z = kmeanspp_inducing(x_init, m, rng);

    const std::size_t d = static_cast<std::size_t>(config.input_dim);
    auto make_layer = [&](std::size_t width, const Matrix& cov_init) {
        SvgpLayer layer;
        layer.inducing = z;
        layer.kernel.variance = 1.0;
        layer.kernel.lengthscales.assign(d, 1.0);
        layer.jitter = config.jitter;
        layer.gps.assign(width, SvgpGp{});
        for (auto& gp : layer.gps) {
            gp.mean.assign(m, 0.0);
            gp.cov_chol = cov_init;
        }
        return layer;
    };
    // Both layers start with the posterior proportional to the prior,
    // S = c^2 Kmm, which keeps the KL trace term at c^2 M even when Kmm is
    // badly conditioned. The inner layer uses a small c so the identity skip
    // is nearly deterministic at the start; the output layer starts at the
    // prior itself, so its KL is zero and predictions start at prior width.
    RbfKernel init_kernel{1.0, std::vector<double>(d, 1.0)};
    Matrix kraw = cross_kernel(init_kernel, z, z);
    Matrix prior_chol = chol_with_jitter(kraw, config.jitter, nullptr);
    Matrix scaled_chol = prior_chol;
    for (std::size_t i = 0; i < m; ++i) {
        for (std::size_t j = 0; j <= i; ++j) scaled_chol(i, j) *= 0.1;
    }
    layer1 = make_layer(d, scaled_chol);
    layer2 = make_layer(1, prior_chol);
    noise_var = config.init_noise_var;
}

std::size_t Dgp::param_count() const {
    const std::size_t d = static_cast<std::size_t>(config.input_dim);
    const std::size_t m1 = layer1.inducing.rows();
    const std::size_t m2 = layer2.inducing.rows();
    std::size_t total = 1 + d + layer1.gps.size() * (m1 + tril_count(m1));
    total += 1 + d + layer2.gps.size() * (m2 + tril_count(m2));
    return total + 1;
}

std::vector<double> Dgp::params() const {
    std::vector<double> flat;
    flat.reserve(param_count());
    for (const SvgpLayer* layer : {&layer1, &layer2}) {
        flat.push_back(std::log(layer->kernel.variance));
        for (double l : layer->kernel.lengthscales) flat.push_back(std::log(l));
        Matrix kraw = cross_kernel(layer->kernel, layer->inducing, layer->inducing);
        Matrix lm = chol_with_jitter(kraw, layer->jitter, nullptr);
        for (const auto& gp : layer->gps) {
            WhiteGp w = whiten_gp(lm, gp);
            flat.insert(flat.end(), w.mean.begin(), w.mean.end());
            for (std::size_t i = 0; i < w.chol.rows(); ++i) {
                for (std::size_t j = 0; j < i; ++j) flat.push_back(w.chol(i, j));
                flat.push_back(std::log(w.chol(i, i)));
            }
        }
    }
    flat.push_back(std::log(noise_var));
    return flat;
}

void Dgp::set_params(const std::vector<double>& flat) {
    if (flat.size() != param_count()) {
        throw ValidationError("dgp set_params: " + std::to_string(flat.size()) +
                              " values given, model has " + std::to_string(param_count()));
    }
    std::size_t k = 0;
    for (SvgpLayer* layer : {&layer1, &layer2}) {
        layer->kernel.variance = std::exp(flat[k++]);
        for (double& l : layer->kernel.lengthscales) l = std::exp(flat[k++]);
        Matrix kraw = cross_kernel(layer->kernel, layer->inducing, layer->inducing);
        Matrix lm = chol_with_jitter(kraw, layer->jitter, nullptr);
        const std::size_t m = lm.rows();
        for (auto& gp : layer->gps) {
            std::vector<double> wmean(m);
            for (double& v : wmean) v = flat[k++];
            Matrix wchol(m, m);
            for (std::size_t i = 0; i < m; ++i) {
                for (std::size_t j = 0; j < i; ++j) wchol(i, j) = flat[k++];
                wchol(i, i) = std::exp(flat[k++]);
            }
            for (std::size_t i = 0; i < m; ++i) {
                double acc = 0.0;
                for (std::size_t j = 0; j <= i; ++j) acc += lm(i, j) * wmean[j];
                gp.mean[i] = acc;
            }
            for (std::size_t i = 0; i < m; ++i) {
                for (std::size_t j = 0; j <= i; ++j) {
                    double acc = 0.0;
                    for (std::size_t p = j; p <= i; ++p) acc += lm(i, p) * wchol(p, j);
                    gp.cov_chol(i, j) = acc;
                }
                for (std::size_t j = i + 1; j < m; ++j) gp.cov_chol(i, j) = 0.0;
            }
        }
    }
    noise_var = std::exp(flat[k++]);
}

std::size_t Dgp::noise_count(std::size_t batch, int mc) const {
    return static_cast<std::size_t>(mc) * batch * static_cast<std::size_t>(config.input_dim);
}

double Dgp::elbo_loss(const Matrix& x, const std::vector<double>& y, std::size_t n_total,
                      const std::vector<double>& noise, int mc, std::vector<double>* grad,
                      double* fit_term, double* kl_term) const {
    const std::size_t b = x.rows();
    const std::size_t d = static_cast<std::size_t>(config.input_dim);
    if (b == 0) throw ValidationError("dgp elbo: empty batch");
    if (x.cols() != d) {
        throw ValidationError("dgp elbo: input has " + std::to_string(x.cols()) +
                              " columns, model expects " + std::to_string(d));
    }
    if (y.size() != b) {
        throw ValidationError("dgp elbo: " + std::to_string(b) + " rows vs " +
                              std::to_string(y.size()) + " targets");
    }
    if (n_total == 0) throw ValidationError("dgp elbo: n_total must be positive");
    if (mc < 1) throw ValidationError("dgp elbo: mc must be at least 1");
    if (noise.size() != noise_count(b, mc)) {
        throw ValidationError("dgp elbo: " + std::to_string(noise.size()) +
                              " noise draws given, evaluation needs " +
                              std::to_string(noise_count(b, mc)));
    }

    const std::size_t m1 = layer1.inducing.rows();
    const std::size_t m2 = layer2.inducing.rows();
    LayerCtx ctx1 = make_ctx(layer1);
    LayerCtx ctx2 = make_ctx(layer2);
    LayerEval ev1 = eval_layer(layer1, ctx1, x);

    std::vector<WhiteGp> white1, white2;
    for (const auto& gp : layer1.gps) white1.push_back(whiten_gp(ctx1.lm, gp));
    for (const auto& gp : layer2.gps) white2.push_back(whiten_gp(ctx2.lm, gp));

    double kl_total = 0.0;
    for (const auto& w : white1) kl_total += kl_white(w);
    for (const auto& w : white2) kl_total += kl_white(w);
    const double klw = 1.0 / static_cast<double>(n_total);
    const double kl_val = klw * kl_total;

    const double inv_bmc = 1.0 / (static_cast<double>(b) * static_cast<double>(mc));
    const double log_noise_term = kHalfLog2Pi + 0.5 * std::log(noise_var);

    const bool want_grad = grad != nullptr;
    LayerGrad lg1(d, m1, layer1.gps.size());
    LayerGrad lg2(d, m2, layer2.gps.size());
    Matrix gmu1(b, d), gv1(b, d);
    Matrix u2acc(m2, 1);       // sum over samples of A2 Gmu2
    Matrix p2acc(m2, m2);      // sum over samples of A2 diag(Gv2) A2^T
    double g_lognoise = 0.0;
    double fit = 0.0;

    std::vector<double> sd(b * d);

    for (int s = 0; s < mc; ++s) {
        const double* eps = noise.data() + static_cast<std::size_t>(s) * b * d;
        Matrix h(b, d);
        for (std::size_t i = 0; i < b; ++i) {
            for (std::size_t t = 0; t < d; ++t) {
                const double varv = std::max(ev1.var(i, t), kSampleVarFloor);
                const double s_it = std::sqrt(varv);
                sd[i * d + t] = s_it;
                h(i, t) = x(i, t) + ev1.mu(i, t) + s_it * eps[i * d + t];
            }
        }
        LayerEval ev2 = eval_layer(layer2, ctx2, h);

        std::vector<double> gmu2(b, 0.0), gv2(b, 0.0);
        for (std::size_t i = 0; i < b; ++i) {
            const double mu = ev2.mu(i, 0);
            const double var = ev2.var(i, 0);
            const double q = sq(y[i] - mu) + var;
            fit += (log_noise_term + q / (2.0 * noise_var)) * inv_bmc;
            if (want_grad) {
                gmu2[i] = (mu - y[i]) / noise_var * inv_bmc;
                gv2[i] = ev2.mask(i, 0) != 0.0 ? inv_bmc / (2.0 * noise_var) : 0.0;
                g_lognoise += (0.5 - q / (2.0 * noise_var)) * inv_bmc;
            }
        }
        if (!want_grad) continue;

        // layer-2 adjoints for this sample
        std::vector<double> au = matvec(ev2.a, gmu2);
        for (std::size_t p = 0; p < m2; ++p) u2acc(p, 0) += au[p];
        Matrix as = scale_cols(ev2.a, gv2);
        Matrix p2 = matmul_a_bt(as, ev2.a);
        for (std::size_t i = 0; i < p2.size(); ++i) p2acc.data()[i] += p2.data()[i];

        // c = Kmm^-1 S A via two triangular solves of L (S A = L (L^T A))
        Matrix c = matmul(layer2.gps[0].cov_chol, ev2.t[0]);
        solve_lower_inplace(ctx2.lm, c);
        solve_lower_transpose_inplace(ctx2.lm, c);

        Matrix gkmn(m2, b);
        for (std::size_t p = 0; p < m2; ++p) {
            for (std::size_t i = 0; i < b; ++i) {
                gkmn(p, i) = gmu2[i] * ctx2.beta[0][p] +
                             2.0 * gv2[i] * (c(p, i) - ev2.a(p, i));
            }
        }
        // dL/dKmm from this sample: + A diag(gv2) A^T - (As C^T + C As^T),
        // the -(A gmu2) beta^T part is accumulated via u2acc after the loop
        Matrix acs = matmul_a_bt(as, c);
        for (std::size_t p = 0; p < m2; ++p) {
            for (std::size_t q = 0; q < m2; ++q) {
                lg2.gkmm(p, q) += p2(p, q) - acs(p, q) - acs(q, p);
            }
        }
        for (std::size_t i = 0; i < b; ++i) {
            lg2.g_logvar += gv2[i] * layer2.kernel.variance;  // kxx term
        }

        Matrix gh(b, d);
        chain_kmn(layer2, gkmn, ev2.kmn, h, lg2, &gh);

        // into the layer-1 sample path
        for (std::size_t i = 0; i < b; ++i) {
            for (std::size_t t = 0; t < d; ++t) {
                gmu1(i, t) += gh(i, t);
                if (ev1.mask(i, t) != 0.0 && ev1.var(i, t) > kSampleVarFloor) {
                    gv1(i, t) += gh(i, t) * eps[i * d + t] / (2.0 * sd[i * d + t]);
                }
            }
        }
    }

    const double loss = fit + kl_val;
    if (fit_term != nullptr) *fit_term = fit;
    if (kl_term != nullptr) *kl_term = kl_val;
    if (!std::isfinite(loss)) {
        throw RunError("dgp elbo diverged (non-finite loss)");
    }
    if (!want_grad) return loss;

    // finish layer 2: mean, covariance factor, and the mean part of dL/dKmm
    {
        std::vector<double> u(m2);
        for (std::size_t p = 0; p < m2; ++p) u[p] = u2acc(p, 0);
        for (std::size_t p = 0; p < m2; ++p) lg2.g_m[0][p] += u[p];
        add_outer(lg2.gkmm, -1.0, u, ctx2.beta[0]);
        Matrix gl = matmul(p2acc, layer2.gps[0].cov_chol);
        for (std::size_t p = 0; p < m2; ++p) {
            for (std::size_t q = 0; q <= p; ++q) lg2.g_l[0](p, q) += 2.0 * gl(p, q);
        }
    }

    // layer-1 backward with the accumulated mean/variance adjoints
    Matrix gkmn1(m1, b);
    for (std::size_t g = 0; g < layer1.gps.size(); ++g) {
        std::vector<double> gmu(b), gv(b);
        for (std::size_t i = 0; i < b; ++i) {
            gmu[i] = gmu1(i, g);
            gv[i] = ev1.mask(i, g) != 0.0 ? gv1(i, g) : 0.0;
        }
        std::vector<double> u = matvec(ev1.a, gmu);
        for (std::size_t p = 0; p < m1; ++p) lg1.g_m[g][p] += u[p];
        add_outer(lg1.gkmm, -1.0, u, ctx1.beta[g]);

        Matrix as = scale_cols(ev1.a, gv);
        Matrix p1 = matmul_a_bt(as, ev1.a);
        Matrix gl = matmul(p1, layer1.gps[g].cov_chol);
        for (std::size_t p = 0; p < m1; ++p) {
            for (std::size_t q = 0; q <= p; ++q) lg1.g_l[g](p, q) += 2.0 * gl(p, q);
        }

        Matrix c = matmul(layer1.gps[g].cov_chol, ev1.t[g]);
        solve_lower_inplace(ctx1.lm, c);
        solve_lower_transpose_inplace(ctx1.lm, c);

        for (std::size_t p = 0; p < m1; ++p) {
            for (std::size_t i = 0; i < b; ++i) {
                gkmn1(p, i) += gmu[i] * ctx1.beta[g][p] +
                               2.0 * gv[i] * (c(p, i) - ev1.a(p, i));
            }
        }
        Matrix acs = matmul_a_bt(as, c);
        for (std::size_t p = 0; p < m1; ++p) {
            for (std::size_t q = 0; q < m1; ++q) {
                lg1.gkmm(p, q) += p1(p, q) - acs(p, q) - acs(q, p);
            }
        }
        for (std::size_t i = 0; i < b; ++i) {
            lg1.g_logvar += gv[i] * layer1.kernel.variance;
        }
    }
    chain_kmn(layer1, gkmn1, ev1.kmn, x, lg1, nullptr);

    // The fit term reaches the kernel parameters through the stored mean and
    // covariance factor as well, because those are Lm times the whitened
    // coordinates the optimizer holds fixed: m = Lm v_m, L_S = Lm V_L.
    const LayerCtx* ctxs[2] = {&ctx1, &ctx2};
    const std::vector<WhiteGp>* whites[2] = {&white1, &white2};
    LayerGrad* lgs_mut[2] = {&lg1, &lg2};
    const SvgpLayer* layers[2] = {&layer1, &layer2};
    for (int li = 0; li < 2; ++li) {
        const Matrix& lm = ctxs[li]->lm;
        const std::size_t m = lm.rows();
        LayerGrad& lg = *lgs_mut[li];
        Matrix glm(m, m);
        for (std::size_t g = 0; g < layers[li]->gps.size(); ++g) {
            const WhiteGp& w = (*whites[li])[g];
            for (std::size_t p = 0; p < m; ++p) {
                for (std::size_t q = 0; q <= p; ++q) {
                    double acc = lg.g_m[g][p] * w.mean[q];
                    for (std::size_t j = 0; j <= q; ++j) {
                        acc += lg.g_l[g](p, j) * w.chol(q, j);
                    }
                    glm(p, q) += acc;
                }
            }
        }
        Matrix gk = chol_backward(lm, glm);
        for (std::size_t i = 0; i < gk.size(); ++i) lg.gkmm.data()[i] += gk.data()[i];
    }
    chain_kmm(layer1, ctx1, lg1);
    chain_kmm(layer2, ctx2, lg2);

    // pack in params() order: whitened variational gradients plus the
    // standard-normal KL terms, which do not touch the kernel parameters
    grad->assign(param_count(), 0.0);
    std::size_t k = 0;
    for (int li = 0; li < 2; ++li) {
        const LayerGrad& lg = *lgs_mut[li];
        const SvgpLayer& layer = *layers[li];
        const Matrix& lm = ctxs[li]->lm;
        const std::size_t m = lm.rows();
        (*grad)[k++] = lg.g_logvar;
        for (std::size_t t = 0; t < d; ++t) (*grad)[k++] = lg.g_logls[t];
        for (std::size_t g = 0; g < layer.gps.size(); ++g) {
            const WhiteGp& w = (*whites[li])[g];
            for (std::size_t p = 0; p < m; ++p) {
                double acc = klw * w.mean[p];
                for (std::size_t q = p; q < m; ++q) acc += lm(q, p) * lg.g_m[g][q];
                (*grad)[k++] = acc;
            }
            for (std::size_t i = 0; i < m; ++i) {
                for (std::size_t j = 0; j <= i; ++j) {
                    double acc = 0.0;
                    for (std::size_t q = i; q < m; ++q) acc += lm(q, i) * lg.g_l[g](q, j);
                    if (j < i) {
                        (*grad)[k++] = acc + klw * w.chol(i, j);
                    } else {
                        acc += klw * (w.chol(i, i) - 1.0 / w.chol(i, i));
                        (*grad)[k++] = acc * w.chol(i, i);
                    }
                }
            }
        }
    }
    (*grad)[k++] = g_lognoise;
    return loss;
}

std::string Dgp::to_json() const {
    nlohmann::ordered_json j;
    j["input_dim"] = config.input_dim;
    j["max_inducing"] = config.max_inducing;
    j["mc_train"] = config.mc_train;
    j["mc_predict"] = config.mc_predict;
    j["jitter"] = config.jitter;
    j["init_noise_var"] = config.init_noise_var;
    j["seed"] = config.seed;
    j["noise_var"] = noise_var;
    j["layer1"] = layer_to_json(layer1);
    j["layer2"] = layer_to_json(layer2);
    return j.dump();
}

Dgp Dgp::from_json(const std::string& text, const std::string& origin) {
    try {
        nlohmann::json j = nlohmann::json::parse(text);
        DgpConfig config;
        config.input_dim = j.at("input_dim").get<int>();
        config.max_inducing = j.at("max_inducing").get<int>();
        config.mc_train = j.at("mc_train").get<int>();
        config.mc_predict = j.at("mc_predict").get<int>();
        config.jitter = j.at("jitter").get<double>();
        config.init_noise_var = j.at("init_noise_var").get<double>();
        config.seed = j.at("seed").get<std::uint64_t>();
        SvgpLayer l1 = layer_from_json(j.at("layer1"), origin);
        SvgpLayer l2 = layer_from_json(j.at("layer2"), origin);
        if (l1.gps.size() != static_cast<std::size_t>(config.input_dim) ||
            l2.gps.size() != 1) {
            throw SchemaError(origin + ": layer widths do not match the configuration");
        }
        // rebuild through the constructor to validate, then overwrite state
        Matrix seed_points = l1.inducing;
        Dgp model(config, seed_points);
        model.layer1 = std::move(l1);
        model.layer2 = std::move(l2);
        model.noise_var = j.at("noise_var").get<double>();
        if (!(model.noise_var > 0.0)) {
            throw SchemaError(origin + ": noise_var must be positive");
        }
        return model;
    } catch (const nlohmann::json::exception& e) {
        throw SchemaError(origin + ": " + e.what());
    }
}

DgpHistory dgp_fit(Dgp& net, const Matrix& x_train, const std::vector<double>& y_train,
                   const Matrix& x_val, const std::vector<double>& y_val,
                   const TrainConfig& tc) {
    tc.validate();
    if (x_train.rows() == 0) throw ValidationError("training set is empty");
    if (x_train.rows() != y_train.size()) {
        throw ValidationError("dgp_fit: " + std::to_string(x_train.rows()) +
                              " training rows vs " + std::to_string(y_train.size()) +
                              " targets");
    }
    if (x_val.rows() != y_val.size()) {
        throw ValidationError("dgp_fit: " + std::to_string(x_val.rows()) +
                              " validation rows vs " + std::to_string(y_val.size()) +
                              " targets");
    }

    const std::size_t n = x_train.rows();
    const std::size_t d = x_train.cols();
    std::size_t bs = tc.batch_size == 0 ? n
                                        : std::min<std::size_t>(
                                              static_cast<std::size_t>(tc.batch_size), n);
    Rng shuffle_rng(derive_seed(tc.seed, SeedStream::shuffle));
    Rng noise_rng(derive_seed(tc.seed, SeedStream::sampling, 0));
    Adam adam;
    DgpHistory history;
    std::vector<double> flat = net.params();
    std::vector<double> grad;
    const int mc = net.config.mc_train;

    for (int epoch = 0; epoch < tc.epochs; ++epoch) {
        double lr = learning_rate(tc, epoch);
        std::vector<std::size_t> perm = shuffled_indices(n, shuffle_rng);
        for (std::size_t start = 0; start < n; start += bs) {
            std::size_t count = std::min(bs, n - start);
            Matrix xb(count, d);
            std::vector<double> yb(count);
            for (std::size_t i = 0; i < count; ++i) {
                const double* src = x_train.row(perm[start + i]);
                std::copy(src, src + d, xb.row(i));
                yb[i] = y_train[perm[start + i]];
            }
            std::vector<double> noise(net.noise_count(count, mc));
            for (double& e : noise) e = noise_rng.normal();
            net.elbo_loss(xb, yb, n, noise, mc, &grad);
            adam.step(flat, grad, lr);
            net.set_params(flat);
        }

        Rng eval_rng(derive_seed(tc.seed, SeedStream::sampling,
                                 1 + static_cast<std::uint64_t>(epoch)));
        std::vector<double> noise(net.noise_count(n, mc));
        for (double& e : noise) e = eval_rng.normal();
        double fit = 0.0, kl = 0.0;
        double loss = net.elbo_loss(x_train, y_train, n, noise, mc, nullptr, &fit, &kl);
        double val_fit = std::numeric_limits<double>::quiet_NaN();
        if (x_val.rows() > 0) {
            std::vector<double> vnoise(net.noise_count(x_val.rows(), mc));
            for (double& e : vnoise) e = eval_rng.normal();
            net.elbo_loss(x_val, y_val, n, vnoise, mc, nullptr, &val_fit, nullptr);
        }
        history.loss.push_back(loss);
        history.fit.push_back(fit);
        history.kl.push_back(kl);
        history.val_fit.push_back(val_fit);
        history.lr.push_back(lr);

        bool finite = std::isfinite(loss) && (x_val.rows() == 0 || std::isfinite(val_fit));
        if (finite) {
            for (double p : flat) {
                if (!std::isfinite(p)) {
                    finite = false;
                    break;
                }
            }
        }
        if (!finite) {
            throw RunError("dgp training diverged at epoch " + std::to_string(epoch) +
                           " (loss " + format_double(loss) + ")");
        }
    }
    return history;
}

void write_dgp_history_csv(const std::string& path, const DgpHistory& history) {
    CsvTable t;
    t.header = {"epoch", "loss", "fit", "kl", "val_fit", "lr"};
    for (std::size_t e = 0; e < history.loss.size(); ++e) {
        t.rows.push_back({std::to_string(e), format_double(history.loss[e]),
                          format_double(history.fit[e]), format_double(history.kl[e]),
                          format_double(history.val_fit[e]), format_double(history.lr[e])});
    }
    write_csv(path, t);
}

DgpModel dgp_train(const DgpConfig& config, const TrainConfig& tc, const Matrix& x,
                   const std::vector<double>& y, const Matrix& x_val,
                   const std::vector<double>& y_val, const StandardScaler& scaler,
                   BaseModelKind base, DgpHistory* history) {
    if (x.cols() != scaler.means.size()) {
        throw ValidationError("dgp_train: input has " + std::to_string(x.cols()) +
                              " features, scaler was fit on " +
                              std::to_string(scaler.means.size()));
    }
    if (x.rows() != y.size()) {
        throw ValidationError("dgp_train: " + std::to_string(x.rows()) +
                              " feature rows vs " + std::to_string(y.size()) + " targets");
    }
    const Matrix xs = scaler.transform(x);
    const std::vector<double> ys = scaler.transform_target(y);
    const Matrix xvs = x_val.rows() > 0 ? scaler.transform(x_val) : x_val;
    const std::vector<double> yvs = scaler.transform_target(y_val);

    Dgp net(config, xs);
    DgpHistory h = dgp_fit(net, xs, ys, xvs, yvs, tc);
    if (history != nullptr) *history = std::move(h);
    return DgpModel{std::move(net), scaler, base, tc.seed};
}

std::vector<PredictionSet> dgp_predict(const DgpModel& model, const Matrix& x,
                                       int mc_samples, std::uint64_t sample_seed) {
    if (mc_samples < 1) {
        throw ValidationError("dgp_predict: need at least 1 sample, got " +
                              std::to_string(mc_samples));
    }
    if (x.cols() != model.scaler.means.size()) {
        throw ValidationError("dgp_predict: input has " + std::to_string(x.cols()) +
                              " features, scaler was fit on " +
                              std::to_string(model.scaler.means.size()));
    }
    const Dgp& net = model.net;
    const Matrix xs = model.scaler.transform(x);
    const std::size_t b = xs.rows();
    const std::size_t d = xs.cols();
    const std::size_t m2 = net.layer2.inducing.rows();

    LayerCtx ctx1 = make_ctx(net.layer1);
    LayerCtx ctx2 = make_ctx(net.layer2);
    LayerEval ev1 = eval_layer(net.layer1, ctx1, xs);
    const SvgpGp& gp2 = net.layer2.gps[0];

    std::vector<PredictionSet> sets;
    sets.reserve(b);
    const std::size_t n_mc = static_cast<std::size_t>(mc_samples);
    std::vector<double> mus(n_mc), vars(n_mc);
    Matrix h(1, d);
    for (std::size_t p = 0; p < b; ++p) {
        Rng rng(derive_seed(sample_seed, SeedStream::sampling, p));
        for (std::size_t s = 0; s < n_mc; ++s) {
            for (std::size_t t = 0; t < d; ++t) {
                const double varv = std::max(ev1.var(p, t), kSampleVarFloor);
                h(0, t) = xs(p, t) + ev1.mu(p, t) + std::sqrt(varv) * rng.normal();
            }
            Matrix kmn = cross_kernel(net.layer2.kernel, net.layer2.inducing, h);
            Matrix v = kmn;
            solve_lower_inplace(ctx2.lm, v);
            Matrix a = v;
            solve_lower_transpose_inplace(ctx2.lm, a);
            double mu = 0.0, red = 0.0;
            for (std::size_t q = 0; q < m2; ++q) {
                mu += a(q, 0) * gp2.mean[q];
                red += sq(v(q, 0));
            }
            double var = net.layer2.kernel.variance - red;
            // + || L^T a ||^2
            for (std::size_t i = 0; i < m2; ++i) {
                double acc = 0.0;
                for (std::size_t q = i; q < m2; ++q) acc += gp2.cov_chol(q, i) * a(q, 0);
                var += sq(acc);
            }
            mus[s] = mu;
            vars[s] = std::max(var, 0.0);
        }
        double mean = 0.0;
        for (double v : mus) mean += v;
        mean /= static_cast<double>(n_mc);
        double between = 0.0, within = 0.0;
        for (std::size_t s = 0; s < n_mc; ++s) {
            between += sq(mus[s] - mean);
            within += vars[s];
        }
        between /= static_cast<double>(n_mc);
        within /= static_cast<double>(n_mc);
        const double total_std = std::sqrt(within + between + net.noise_var);
        sets.push_back(prediction_from_moments(
            model.scaler.inverse_target_mean(mean),
            model.scaler.inverse_target_std(total_std)));
    }
    return sets;
}

std::string DgpModel::to_json() const {
    nlohmann::ordered_json j;
    j["kind"] = "dgp";
    j["base"] = std::string(to_string(base));
    j["train_seed"] = train_seed;
    j["scaler"] = nlohmann::ordered_json::parse(scaler.to_json());
    j["net"] = nlohmann::ordered_json::parse(net.to_json());
    return j.dump(2);
}

DgpModel DgpModel::from_json(const std::string& text, const std::string& origin) {
    try {
        nlohmann::json j = nlohmann::json::parse(text);
        if (j.at("kind").get<std::string>() != "dgp") {
            throw SchemaError(origin + ": not a dgp model file");
        }
        return DgpModel{Dgp::from_json(j.at("net").dump(), origin),
                        StandardScaler::from_json(j.at("scaler").dump(), origin),
                        base_model_from_string(j.at("base").get<std::string>()),
                        j.at("train_seed").get<std::uint64_t>()};
    } catch (const nlohmann::json::exception& e) {
        throw SchemaError(origin + ": " + e.what());
    }
}

}  // namespace chf
