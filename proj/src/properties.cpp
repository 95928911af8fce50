#include "chf/properties.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "chf/csv.hpp"
#include "chf/errors.hpp"
#include "chf/sat_table_data.hpp"

namespace chf {

namespace {

constexpr double kCriticalPressureMpa = 22.064;

std::string range_message(double p, double lo, double hi) {
    return "pressure " + format_double(p) + " MPa outside table range [" +
           format_double(lo) + ", " + format_double(hi) + "] MPa";
}

}  // namespace

const SaturationTable& SaturationTable::builtin() {
    static const SaturationTable table =
        from_csv_text(sat_table_csv(), "embedded sat_table.csv");
    return table;
}

SaturationTable SaturationTable::from_csv_text(std::string_view text,
                                               const std::string& origin) {
    const CsvTable csv = parse_csv(std::string(text), origin);
    const std::vector<std::string> expected = {"pressure_mpa", "t_sat_c", "h_f_kj_kg",
                                               "h_g_kj_kg", "h_fg_kj_kg"};
    if (csv.header != expected) {
        throw SchemaError(origin + ": unexpected header for a saturation table");
    }
    SaturationTable table;
    table.rows_.reserve(csv.rows.size());
    for (std::size_t r = 0; r < csv.rows.size(); ++r) {
        SaturationRow row;
        row.pressure_mpa = parse_cell(csv.rows[r][0], r + 2, expected[0], origin);
        row.t_sat_c = parse_cell(csv.rows[r][1], r + 2, expected[1], origin);
        row.h_f_kj_kg = parse_cell(csv.rows[r][2], r + 2, expected[2], origin);
        row.h_g_kj_kg = parse_cell(csv.rows[r][3], r + 2, expected[3], origin);
        row.h_fg_kj_kg = parse_cell(csv.rows[r][4], r + 2, expected[4], origin);
        table.rows_.push_back(row);
    }
    table.validate(origin);
    return table;
}

void SaturationTable::validate(const std::string& origin) const {
    if (rows_.size() < 2) throw ValidationError(origin + ": table needs at least 2 rows");
    for (std::size_t i = 0; i < rows_.size(); ++i) {
        const SaturationRow& r = rows_[i];
        const std::string at = origin + ": row " + std::to_string(i + 2);
        if (!std::isfinite(r.pressure_mpa) || r.pressure_mpa <= 0.0) {
            throw ValidationError(at + ": non-positive pressure");
        }
        if (std::fabs(r.h_fg_kj_kg - (r.h_g_kj_kg - r.h_f_kj_kg)) > 0.1) {
            throw ValidationError(at + ": h_fg inconsistent with h_g - h_f");
        }
        if (r.pressure_mpa < kCriticalPressureMpa && !(r.h_fg_kj_kg > 0.0)) {
            throw ValidationError(at + ": h_fg not positive below the critical pressure");
        }
        if (i > 0) {
            const SaturationRow& prev = rows_[i - 1];
            if (!(r.pressure_mpa > prev.pressure_mpa)) {
                throw ValidationError(at + ": pressures not strictly increasing");
            }
            if (!(r.t_sat_c > prev.t_sat_c) || !(r.h_f_kj_kg > prev.h_f_kj_kg)) {
                throw ValidationError(at + ": t_sat and h_f must increase with pressure");
            }
            if (!(r.h_fg_kj_kg < prev.h_fg_kj_kg)) {
                throw ValidationError(at + ": h_fg must decrease with pressure");
            }
        }
    }
}

SaturationRow SaturationTable::saturation_props(double pressure_mpa) const {
    const double lo = rows_.front().pressure_mpa;
    const double hi = rows_.back().pressure_mpa;
    if (!std::isfinite(pressure_mpa) || pressure_mpa < lo || pressure_mpa > hi) {
        throw ValidationError(range_message(pressure_mpa, lo, hi));
    }
    const auto it = std::lower_bound(
        rows_.begin(), rows_.end(), pressure_mpa,
        [](const SaturationRow& row, double p) { return row.pressure_mpa < p; });
    if (it->pressure_mpa == pressure_mpa) return *it;

    const SaturationRow& b = *it;
    const SaturationRow& a = *(it - 1);
    const double w = (pressure_mpa - a.pressure_mpa) / (b.pressure_mpa - a.pressure_mpa);
    SaturationRow out;
    out.pressure_mpa = pressure_mpa;
    out.t_sat_c = a.t_sat_c + w * (b.t_sat_c - a.t_sat_c);
    out.h_f_kj_kg = a.h_f_kj_kg + w * (b.h_f_kj_kg - a.h_f_kj_kg);
    out.h_g_kj_kg = a.h_g_kj_kg + w * (b.h_g_kj_kg - a.h_g_kj_kg);
    out.h_fg_kj_kg = a.h_fg_kj_kg + w * (b.h_fg_kj_kg - a.h_fg_kj_kg);
    return out;
}

double subcooling_to_inlet_enthalpy(double pressure_mpa, double dh_sub_kj_kg,
                                    const SaturationTable& table) {
    if (!(dh_sub_kj_kg >= 0.0)) {
        throw ValidationError("inlet subcooling must be non-negative, got " +
                              format_double(dh_sub_kj_kg) + " kJ/kg");
    }
    return table.h_f(pressure_mpa) - dh_sub_kj_kg;
}

}  // namespace chf
