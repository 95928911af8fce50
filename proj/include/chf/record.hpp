#pragma once

#include <optional>

namespace chf {

/// One dryout measurement: round-tube geometry, operating state, and the
/// measured critical heat flux. Field names follow the CSV schema.
struct ChfRecord {
    double d_m = 0.0;            ///< inner diameter, m
    double l_m = 0.0;            ///< heated length, m
    double p_mpa = 0.0;          ///< outlet pressure, MPa
    double g_kg_m2_s = 0.0;      ///< mass flux, kg/(m^2 s)
    double dh_sub_kj_kg = 0.0;   ///< inlet subcooling, kJ/kg
    std::optional<double> t_in_c;///< inlet temperature, degrees C, when recorded
    double x_e_out = 0.0;        ///< outlet equilibrium quality
    double chf_kw_m2 = 0.0;      ///< measured critical heat flux, kW/m^2
};

}  // namespace chf
