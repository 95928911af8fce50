#pragma once

#include <functional>
#include <string>
#include <string_view>
#include <vector>

#include "chf/properties.hpp"
#include "chf/record.hpp"

namespace chf {

struct MetricsReport;

/// Physics base model feeding the residual learner. NoBase means the ML
/// model regresses CHF directly.
enum class BaseModelKind { NoBase, Biasi, Bowring };

std::string_view to_string(BaseModelKind kind);
BaseModelKind base_model_from_string(std::string_view name);

/// Which Biasi branch produced the returned value.
enum class BiasiBranch { LowQuality, HighQuality };

/// Closed parameter ranges inside which the correlations are exercised.
/// Shared with the dataset filter defaults.
struct ValidityRanges {
    static constexpr double d_min_m = 0.003;
    static constexpr double d_max_m = 0.0375;
    static constexpr double l_min_m = 0.20;
    static constexpr double l_max_m = 3.70;
    static constexpr double p_min_mpa = 0.27;
    static constexpr double p_max_mpa = 14.0;
    static constexpr double g_min = 136.0;
    static constexpr double g_max = 6000.0;
};

/// Biasi native units: the published correlation works in cm, bar and
/// g/(cm^2 s). Conversion to and from SI is kept in one place so the
/// round trip can be asserted.
struct BiasiNative {
    double d_cm = 0.0;
    double p_bar = 0.0;
    double g_g_cm2_s = 0.0;
};

BiasiNative biasi_native_from_si(double d_m, double p_mpa, double g_kg_m2_s);
void biasi_si_from_native(const BiasiNative& n, double& d_m, double& p_mpa,
                          double& g_kg_m2_s);

/// Bowring native units: SI with enthalpies in J/kg and flux in W/m^2.
struct BowringNative {
    double d_m = 0.0;
    double l_m = 0.0;
    double p_mpa = 0.0;
    double g_kg_m2_s = 0.0;
    double dh_sub_j_kg = 0.0;
};

BowringNative bowring_native_from_si(double d_m, double l_m, double p_mpa,
                                     double g_kg_m2_s, double dh_sub_kj_kg);
void bowring_si_from_native(const BowringNative& n, double& d_m, double& l_m,
                            double& p_mpa, double& g_kg_m2_s, double& dh_sub_kj_kg);

/// Biasi round-tube dryout CHF, kW/m^2. Larger of the low-quality and
/// high-quality branches; the winner is reported through `branch` when given.
double biasi_chf(double d_m, double p_mpa, double g_kg_m2_s, double quality,
                 BiasiBranch* branch = nullptr);

/// Bowring round-tube CHF in inlet-conditions form, kW/m^2.
double bowring_chf(double d_m, double l_m, double p_mpa, double g_kg_m2_s,
                   double dh_sub_kj_kg,
                   const SaturationTable& table = SaturationTable::builtin());

/// Equilibrium outlet quality from the channel energy balance,
/// x_e = 4 q" L / (D G h_fg) - dh_sub / h_fg.
double quality_from_heat_balance(double heat_flux_kw_m2, const ChfRecord& record,
                                 const SaturationTable& table = SaturationTable::builtin());

struct HbmOptions {
    double bracket_lo_kw_m2 = 1.0;
    double bracket_hi_kw_m2 = 20000.0;
    int probes = 64;
    double rel_tol = 1e-6;
    int max_iterations = 200;
};

struct HbmResult {
    double chf_kw_m2 = 0.0;
    int iterations = 0;       ///< bisection steps taken
    int brackets_found = 0;   ///< sign changes seen in the probe scan
};

/// Heat-balance-consistent CHF for an arbitrary quality-to-flux map:
/// the fixed point q* = chf_of_quality(x_e(q*)). Exposed separately from
/// hbm_solve so the solver can be exercised against stub correlations.
HbmResult hbm_fixed_point(const std::function<double(double)>& chf_of_quality,
                          const ChfRecord& record,
                          const SaturationTable& table = SaturationTable::builtin(),
                          const HbmOptions& options = {});

/// Base-model CHF estimate for a record. Biasi is iterated through the
/// energy balance; Bowring's inlet-conditions form is quality independent
/// and evaluated directly.
HbmResult hbm_solve(BaseModelKind kind, const ChfRecord& record,
                    const SaturationTable& table = SaturationTable::builtin(),
                    const HbmOptions& options = {});

/// Evaluate hbm_solve over a record set and score predictions against the
/// measured CHF. Uncertainty fields of the report are absent.
MetricsReport baseline_metrics(BaseModelKind kind, const std::vector<ChfRecord>& records,
                               const SaturationTable& table = SaturationTable::builtin(),
                               const HbmOptions& options = {});

}  // namespace chf
