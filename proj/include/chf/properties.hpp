#pragma once

#include <string_view>
#include <vector>

namespace chf {

/// One knot of the saturation line.
struct SaturationRow {
    double pressure_mpa = 0.0;
    double t_sat_c = 0.0;
    double h_f_kj_kg = 0.0;
    double h_g_kj_kg = 0.0;
    double h_fg_kj_kg = 0.0;
};

/// Saturated-water properties over 0.1 to 20 MPa, linearly interpolated in
/// pressure between tabulated knots. Read-only after construction.
class SaturationTable {
  public:
    /// The embedded table, parsed once and shared.
    static const SaturationTable& builtin();

    /// Parse a table from CSV text with the sat_table schema; validates
    /// ordering and the physical invariants of each row.
    static SaturationTable from_csv_text(std::string_view text, const std::string& origin);

    /// Row interpolated at the given pressure; exact at knots.
    SaturationRow saturation_props(double pressure_mpa) const;

    double h_f(double pressure_mpa) const { return saturation_props(pressure_mpa).h_f_kj_kg; }
    double h_g(double pressure_mpa) const { return saturation_props(pressure_mpa).h_g_kj_kg; }
    double h_fg(double pressure_mpa) const { return saturation_props(pressure_mpa).h_fg_kj_kg; }
    double t_sat(double pressure_mpa) const { return saturation_props(pressure_mpa).t_sat_c; }

    double min_pressure() const { return rows_.front().pressure_mpa; }
    double max_pressure() const { return rows_.back().pressure_mpa; }
    const std::vector<SaturationRow>& rows() const { return rows_; }

  private:
    std::vector<SaturationRow> rows_;
    void validate(const std::string& origin) const;
};

/// Inlet enthalpy from saturation and subcooling: h_f(P) - dh_sub, kJ/kg.
double subcooling_to_inlet_enthalpy(double pressure_mpa, double dh_sub_kj_kg,
                                    const SaturationTable& table = SaturationTable::builtin());

}  // namespace chf
