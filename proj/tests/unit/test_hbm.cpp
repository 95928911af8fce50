#include <doctest.h>

#include <cmath>

#include "chf/correlations.hpp"
#include "chf/errors.hpp"
#include "chf/rng.hpp"

using namespace chf;

namespace {

ChfRecord reference_record() {
    ChfRecord rec;
    rec.d_m = 0.01;
    rec.l_m = 2.0;
    rec.p_mpa = 7.0;
    rec.g_kg_m2_s = 2000.0;
    rec.dh_sub_kj_kg = 300.0;
    return rec;
}

}  // namespace

TEST_CASE("fixed point of a constant map is the constant") {
    const HbmResult res =
        hbm_fixed_point([](double) { return 1234.5; }, reference_record());
    CHECK(res.chf_kw_m2 == doctest::Approx(1234.5).epsilon(1e-8));
    CHECK(res.brackets_found >= 1);
}

TEST_CASE("solved flux closes the heat balance loop") {
    const ChfRecord rec = reference_record();
    const HbmResult res = hbm_solve(BaseModelKind::Biasi, rec);
    const double x_e = quality_from_heat_balance(res.chf_kw_m2, rec);
    const double back = biasi_chf(rec.d_m, rec.p_mpa, rec.g_kg_m2_s, x_e);
    CHECK(std::abs(res.chf_kw_m2 - back) / res.chf_kw_m2 < 1e-6);
}

TEST_CASE("bowring base is quality independent and direct") {
    const ChfRecord rec = reference_record();
    const HbmResult res = hbm_solve(BaseModelKind::Bowring, rec);
    const double direct =
        bowring_chf(rec.d_m, rec.l_m, rec.p_mpa, rec.g_kg_m2_s, rec.dh_sub_kj_kg);
    CHECK(res.chf_kw_m2 == doctest::Approx(direct).epsilon(1e-12));
}

TEST_CASE("no base model is rejected by the solver") {
    CHECK_THROWS_AS(hbm_solve(BaseModelKind::NoBase, reference_record()),
                    ValidationError);
}

TEST_CASE("tighter tolerance costs more bisection steps") {
    const ChfRecord rec = reference_record();
    HbmOptions loose;
    loose.rel_tol = 1e-3;
    HbmOptions tight;
    tight.rel_tol = 1e-9;
    const HbmResult a = hbm_solve(BaseModelKind::Biasi, rec, SaturationTable::builtin(),
                                  loose);
    const HbmResult b = hbm_solve(BaseModelKind::Biasi, rec, SaturationTable::builtin(),
                                  tight);
    CHECK(b.iterations > a.iterations);
    CHECK(std::abs(a.chf_kw_m2 - b.chf_kw_m2) / b.chf_kw_m2 < 1e-3);
}

TEST_CASE("a map with no crossing raises a run error") {
    // constant above the whole bracket: q - f(q) never changes sign
    HbmOptions opt;
    opt.bracket_hi_kw_m2 = 100.0;
    CHECK_THROWS_AS(
        hbm_fixed_point([](double) { return 1.0e6; }, reference_record(),
                        SaturationTable::builtin(), opt),
        RunError);
}

TEST_CASE("solver options are validated") {
    HbmOptions opt;
    opt.probes = 1;
    CHECK_THROWS_AS(hbm_solve(BaseModelKind::Biasi, reference_record(),
                              SaturationTable::builtin(), opt),
                    ValidationError);
    opt = HbmOptions{};
    opt.bracket_lo_kw_m2 = -1.0;
    CHECK_THROWS_AS(hbm_solve(BaseModelKind::Biasi, reference_record(),
                              SaturationTable::builtin(), opt),
                    ValidationError);
}

TEST_CASE("random in-range records close the loop") {
    Rng rng(20260816ULL);
    int solved = 0;
    for (int i = 0; i < 50; ++i) {
        ChfRecord rec;
        rec.d_m = 0.004 + rng.uniform() * 0.03;
        rec.l_m = 0.5 + rng.uniform() * 3.0;
        rec.p_mpa = 1.0 + rng.uniform() * 12.0;
        rec.g_kg_m2_s = 300.0 + rng.uniform() * 4000.0;
        rec.dh_sub_kj_kg = rng.uniform() * 500.0;
        HbmResult res;
        try {
            res = hbm_solve(BaseModelKind::Biasi, rec);
        } catch (const RunError&) {
            continue;  // a record may genuinely have no dryout crossing
        }
        const double x_e = quality_from_heat_balance(res.chf_kw_m2, rec);
        const double back = biasi_chf(rec.d_m, rec.p_mpa, rec.g_kg_m2_s, x_e);
        CHECK(std::abs(res.chf_kw_m2 - back) / res.chf_kw_m2 <= 1e-6);
        ++solved;
    }
    CHECK(solved > 30);
}
