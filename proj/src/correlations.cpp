#include "chf/correlations.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "chf/csv.hpp"
#include "chf/errors.hpp"
#include "chf/evalsuite.hpp"

namespace chf {

std::string_view to_string(BaseModelKind kind) {
    switch (kind) {
        case BaseModelKind::NoBase: return "none";
        case BaseModelKind::Biasi: return "biasi";
        case BaseModelKind::Bowring: return "bowring";
    }
    throw ValidationError("unknown BaseModelKind value");
}

BaseModelKind base_model_from_string(std::string_view name) {
    if (name == "none") return BaseModelKind::NoBase;
    if (name == "biasi") return BaseModelKind::Biasi;
    if (name == "bowring") return BaseModelKind::Bowring;
    throw ValidationError("unknown base model '" + std::string(name) +
                          "'; expected one of none, biasi, bowring");
}

namespace {

void check_range(const char* name, double value, double lo, double hi,
                 const char* unit) {
    if (!(value >= lo && value <= hi)) {
        throw ValidationError(std::string(name) + " = " + format_double(value) + " " +
                              unit + " outside validity range [" + format_double(lo) +
                              ", " + format_double(hi) + "] " + unit);
    }
}

void check_biasi_inputs(double d_m, double p_mpa, double g_kg_m2_s) {
    check_range("diameter", d_m, ValidityRanges::d_min_m, ValidityRanges::d_max_m, "m");
    check_range("pressure", p_mpa, ValidityRanges::p_min_mpa, ValidityRanges::p_max_mpa,
                "MPa");
    check_range("mass_flux", g_kg_m2_s, ValidityRanges::g_min, ValidityRanges::g_max,
                "kg/(m^2 s)");
}

/// Biasi et al. (1967) round-tube dryout correlation as printed in
/// Todreas & Kazimi, Nuclear Systems I. Native units: D in cm, p in bar,
/// G in g/(cm^2 s), flux in W/cm^2. Two branches; prediction is their max.
double biasi_native_w_cm2(const BiasiNative& in, double x, BiasiBranch* branch) {
    double n = in.d_cm >= 1.0 ? 0.4 : 0.6;
    double fp = 0.7249 + 0.099 * in.p_bar * std::exp(-0.032 * in.p_bar);
    double hp = -1.159 + 0.149 * in.p_bar * std::exp(-0.019 * in.p_bar) +
                9.0 * in.p_bar / (10.0 + in.p_bar * in.p_bar);
    double dn = std::pow(in.d_cm, n);
    double g16 = std::pow(in.g_g_cm2_s, 1.0 / 6.0);
    double q_lq = 1.883e3 / (dn * g16) * (fp / g16 - x);
    double q_hq = 3.78e3 * hp / (dn * std::pow(in.g_g_cm2_s, 0.6)) * (1.0 - x);
    if (branch != nullptr) {
        *branch = q_lq >= q_hq ? BiasiBranch::LowQuality : BiasiBranch::HighQuality;
    }
    return std::max(q_lq, q_hq);
}

}  // namespace

BiasiNative biasi_native_from_si(double d_m, double p_mpa, double g_kg_m2_s) {
    return BiasiNative{100.0 * d_m, 10.0 * p_mpa, g_kg_m2_s / 10.0};
}

void biasi_si_from_native(const BiasiNative& n, double& d_m, double& p_mpa,
                          double& g_kg_m2_s) {
    d_m = n.d_cm / 100.0;
    p_mpa = n.p_bar / 10.0;
    g_kg_m2_s = 10.0 * n.g_g_cm2_s;
}

BowringNative bowring_native_from_si(double d_m, double l_m, double p_mpa,
                                     double g_kg_m2_s, double dh_sub_kj_kg) {
    return BowringNative{d_m, l_m, p_mpa, g_kg_m2_s, 1000.0 * dh_sub_kj_kg};
}

void bowring_si_from_native(const BowringNative& n, double& d_m, double& l_m,
                            double& p_mpa, double& g_kg_m2_s, double& dh_sub_kj_kg) {
    d_m = n.d_m;
    l_m = n.l_m;
    p_mpa = n.p_mpa;
    g_kg_m2_s = n.g_kg_m2_s;
    dh_sub_kj_kg = n.dh_sub_j_kg / 1000.0;
}

double biasi_chf(double d_m, double p_mpa, double g_kg_m2_s, double quality,
                 BiasiBranch* branch) {
    check_biasi_inputs(d_m, p_mpa, g_kg_m2_s);
    if (!std::isfinite(quality)) {
        throw ValidationError("quality must be finite, got " + format_double(quality));
    }
    double q = 10.0 * biasi_native_w_cm2(biasi_native_from_si(d_m, p_mpa, g_kg_m2_s),
                                         quality, branch);
    if (!std::isfinite(q) || q <= 0.0) {
        throw RunError("Biasi correlation produced a non-positive value " +
                       format_double(q) + " kW/m^2 at quality " + format_double(quality));
    }
    return q;
}

double bowring_chf(double d_m, double l_m, double p_mpa, double g_kg_m2_s,
                   double dh_sub_kj_kg, const SaturationTable& table) {
    check_range("diameter", d_m, ValidityRanges::d_min_m, ValidityRanges::d_max_m, "m");
    check_range("heated_length", l_m, ValidityRanges::l_min_m, ValidityRanges::l_max_m,
                "m");
    check_range("pressure", p_mpa, ValidityRanges::p_min_mpa, ValidityRanges::p_max_mpa,
                "MPa");
    check_range("mass_flux", g_kg_m2_s, ValidityRanges::g_min, ValidityRanges::g_max,
                "kg/(m^2 s)");
    if (!(dh_sub_kj_kg >= 0.0)) {
        throw ValidationError("inlet_subcooling must be non-negative, got " +
                              format_double(dh_sub_kj_kg) + " kJ/kg");
    }

    // Bowring (1972) correlation as printed in Todreas & Kazimi, Nuclear
    // Systems I. SI units with enthalpies in J/kg and flux in W/m^2; the
    // pressure-family coefficients switch at the 6.895 MPa reference.
    BowringNative in = bowring_native_from_si(d_m, l_m, p_mpa, g_kg_m2_s, dh_sub_kj_kg);
    double pr = in.p_mpa / 6.895;
    double f1 = 0.0, f1_over_f2 = 0.0, f3 = 0.0;
    if (pr < 1.0) {
        f1 = (std::pow(pr, 18.942) * std::exp(20.89 * (1.0 - pr)) + 0.917) / 1.917;
        f1_over_f2 = (std::pow(pr, 1.316) * std::exp(2.444 * (1.0 - pr)) + 0.309) / 1.309;
        f3 = (std::pow(pr, 17.023) * std::exp(16.658 * (1.0 - pr)) + 0.667) / 1.667;
    } else {
        f1 = std::pow(pr, -0.368) * std::exp(0.648 * (1.0 - pr));
        f1_over_f2 = std::pow(pr, -0.448) * std::exp(0.245 * (1.0 - pr));
        f3 = std::pow(pr, 0.219);
    }
    double f2 = f1 / f1_over_f2;
    double f4 = f3 * std::pow(pr, 1.649);
    double n = 2.0 - 0.5 * pr;

    double hfg = 1000.0 * table.h_fg(in.p_mpa);
    double a = 2.317 * (hfg * in.d_m * in.g_kg_m2_s / 4.0) * f1 /
               (1.0 + 0.0143 * f2 * std::sqrt(in.d_m) * in.g_kg_m2_s);
    double c = 0.077 * f3 * in.d_m * in.g_kg_m2_s /
               (1.0 + 0.347 * f4 * std::pow(in.g_kg_m2_s / 1356.0, n));
    double q_w_m2 = (a + 0.25 * in.d_m * in.g_kg_m2_s * in.dh_sub_j_kg) / (c + in.l_m);
    double q = q_w_m2 / 1000.0;
    if (!std::isfinite(q) || q <= 0.0) {
        throw RunError("Bowring correlation produced a non-positive value " +
                       format_double(q) + " kW/m^2");
    }
    return q;
}

double quality_from_heat_balance(double heat_flux_kw_m2, const ChfRecord& record,
                                 const SaturationTable& table) {
    if (!(heat_flux_kw_m2 > 0.0)) {
        throw ValidationError("heat flux must be positive, got " +
                              format_double(heat_flux_kw_m2) + " kW/m^2");
    }
    double hfg = table.h_fg(record.p_mpa);
    return 4.0 * heat_flux_kw_m2 * record.l_m / (record.d_m * record.g_kg_m2_s * hfg) -
           record.dh_sub_kj_kg / hfg;
}

HbmResult hbm_fixed_point(const std::function<double(double)>& chf_of_quality,
                          const ChfRecord& record, const SaturationTable& table,
                          const HbmOptions& options) {
    if (!(options.bracket_lo_kw_m2 > 0.0) ||
        !(options.bracket_hi_kw_m2 > options.bracket_lo_kw_m2)) {
        throw ValidationError("heat balance bracket must satisfy 0 < lo < hi, got [" +
                              format_double(options.bracket_lo_kw_m2) + ", " +
                              format_double(options.bracket_hi_kw_m2) + "]");
    }
    if (options.probes < 2) {
        throw ValidationError("heat balance probe count must be at least 2, got " +
                              std::to_string(options.probes));
    }

    auto g_of = [&](double q) {
        return q - chf_of_quality(quality_from_heat_balance(q, record, table));
    };

    double lo = options.bracket_lo_kw_m2;
    double hi = options.bracket_hi_kw_m2;
    int probes = options.probes;
    std::vector<double> qs(static_cast<std::size_t>(probes));
    std::vector<double> gs(static_cast<std::size_t>(probes));
    for (int k = 0; k < probes; ++k) {
        qs[static_cast<std::size_t>(k)] =
            lo * std::pow(hi / lo, static_cast<double>(k) / (probes - 1));
        gs[static_cast<std::size_t>(k)] = g_of(qs[static_cast<std::size_t>(k)]);
    }

    int brackets = 0;
    double a = -1.0, b = -1.0, g_a = 0.0;
    for (int k = 0; k < probes; ++k) {
        auto ku = static_cast<std::size_t>(k);
        if (gs[ku] == 0.0) {
            ++brackets;
            if (a < 0.0) {
                a = b = qs[ku];
                g_a = 0.0;
            }
        } else if (k + 1 < probes && gs[ku] * gs[ku + 1] < 0.0) {
            ++brackets;
            if (a < 0.0) {
                a = qs[ku];
                b = qs[ku + 1];
                g_a = gs[ku];
            }
        }
    }
    if (a < 0.0) {
        throw RunError("heat balance found no sign change of q - f(q) scanning [" +
                       format_double(lo) + ", " + format_double(hi) + "] kW/m^2 with " +
                       std::to_string(probes) + " probes");
    }

    // Bisect the bracket two orders tighter than the requested residual
    // tolerance so the returned flux closes the balance with margin.
    double width_tol = options.rel_tol * 1e-2;
    double mid = 0.5 * (a + b);
    bool converged = false;
    int iterations = 0;
    for (; iterations < options.max_iterations; ++iterations) {
        mid = 0.5 * (a + b);
        if (b - a <= width_tol * mid) {
            converged = true;
            break;
        }
        double gm = g_of(mid);
        if (g_a * gm <= 0.0) {
            b = mid;
        } else {
            a = mid;
            g_a = gm;
        }
    }
    if (!converged) {
        double res = std::abs(g_of(mid)) / mid;
        throw RunError("heat balance bisection exceeded " +
                       std::to_string(options.max_iterations) +
                       " iterations; last relative residual " + format_double(res));
    }

    HbmResult result;
    result.chf_kw_m2 = chf_of_quality(quality_from_heat_balance(mid, record, table));
    result.iterations = iterations;
    result.brackets_found = brackets;
    return result;
}

HbmResult hbm_solve(BaseModelKind kind, const ChfRecord& record,
                    const SaturationTable& table, const HbmOptions& options) {
    if (kind == BaseModelKind::NoBase) {
        throw ValidationError("heat balance solve requires a base correlation");
    }
    if (kind == BaseModelKind::Bowring) {
        HbmResult r;
        r.chf_kw_m2 = bowring_chf(record.d_m, record.l_m, record.p_mpa,
                                  record.g_kg_m2_s, record.dh_sub_kj_kg, table);
        return r;
    }

    check_biasi_inputs(record.d_m, record.p_mpa, record.g_kg_m2_s);
    check_range("heated_length", record.l_m, ValidityRanges::l_min_m,
                ValidityRanges::l_max_m, "m");
    BiasiNative native = biasi_native_from_si(record.d_m, record.p_mpa,
                                              record.g_kg_m2_s);
    auto biasi_of_quality = [&](double x) {
        return 10.0 * biasi_native_w_cm2(native, x, nullptr);
    };
    return hbm_fixed_point(biasi_of_quality, record, table, options);
}

MetricsReport baseline_metrics(BaseModelKind kind, const std::vector<ChfRecord>& records,
                               const SaturationTable& table, const HbmOptions& options) {
    std::vector<double> y_true(records.size());
    std::vector<double> y_pred(records.size());
    for (std::size_t i = 0; i < records.size(); ++i) {
        try {
            y_pred[i] = hbm_solve(kind, records[i], table, options).chf_kw_m2;
        } catch (const ValidationError& e) {
            throw ValidationError("record " + std::to_string(i) + ": " + e.what());
        } catch (const RunError& e) {
            throw RunError("record " + std::to_string(i) + ": " + e.what());
        }
        y_true[i] = records[i].chf_kw_m2;
    }
    return metrics(y_true, y_pred);
}

}  // namespace chf
