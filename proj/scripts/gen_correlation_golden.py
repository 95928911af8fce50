#!/usr/bin/env python3
"""Generate frozen golden values for the CHF correlation tests.

Hand evaluation of the Biasi and Bowring correlations as printed in
Todreas & Kazimi, "Nuclear Systems I", written independently of the C++
implementation so transcription slips on either side show up as test
failures.  Latent heat comes from data/sat_table.csv with the same linear
pressure interpolation the library uses, keeping both sides on one
property source.

Writes tests/assets/correlation_golden.csv at 10 significant digits; the
tests compare at 1e-6 relative, demonstrating 6-figure agreement.
"""

import math
import os

ROOT = os.path.dirname(os.path.dirname(os.path.abspath(__file__)))


def load_sat_table():
    rows = []
    with open(os.path.join(ROOT, "data", "sat_table.csv")) as f:
        header = f.readline().strip()
        assert header == "pressure_mpa,t_sat_c,h_f_kj_kg,h_g_kj_kg,h_fg_kj_kg"
        for line in f:
            rows.append([float(c) for c in line.strip().split(",")])
    return rows


SAT = load_sat_table()


def h_fg(p_mpa):
    assert SAT[0][0] <= p_mpa <= SAT[-1][0]
    for (p0, *_, fg0), (p1, *_, fg1) in zip(SAT, SAT[1:]):
        if p0 <= p_mpa <= p1:
            w = (p_mpa - p0) / (p1 - p0)
            return fg0 + w * (fg1 - fg0)
    raise AssertionError


# Biasi et al. correlation, native units: D in cm, p in bar, G in g/(cm^2 s),
# flux in W/cm^2.  Two branches; the prediction is their maximum.

def biasi_w_cm2(d_cm, p_bar, g_gcm2s, x):
    n = 0.4 if d_cm >= 1.0 else 0.6
    fp = 0.7249 + 0.099 * p_bar * math.exp(-0.032 * p_bar)
    hp = -1.159 + 0.149 * p_bar * math.exp(-0.019 * p_bar) \
        + 9.0 * p_bar / (10.0 + p_bar * p_bar)
    q_lq = 1.883e3 / (d_cm ** n * g_gcm2s ** (1.0 / 6.0)) \
        * (fp / g_gcm2s ** (1.0 / 6.0) - x)
    q_hq = 3.78e3 * hp / (d_cm ** n * g_gcm2s ** 0.6) * (1.0 - x)
    return max(q_lq, q_hq), ("low_quality" if q_lq >= q_hq else "high_quality")


def biasi_kw_m2(d_m, p_mpa, g_kg_m2s, x):
    q, branch = biasi_w_cm2(100.0 * d_m, 10.0 * p_mpa, g_kg_m2s / 10.0, x)
    return 10.0 * q, branch


# Bowring correlation, SI units with the 6.895 MPa reference pressure.
# A and C are dimensional groups; D in m, G in kg/(m^2 s), enthalpies in
# J/kg, L in m, flux in W/m^2.

def bowring_w_m2(d_m, l_m, p_mpa, g_kg_m2s, dh_sub_j_kg):
    pr = p_mpa / 6.895
    if pr < 1.0:
        f1 = (pr ** 18.942 * math.exp(20.89 * (1.0 - pr)) + 0.917) / 1.917
        f1_over_f2 = (pr ** 1.316 * math.exp(2.444 * (1.0 - pr)) + 0.309) / 1.309
        f3 = (pr ** 17.023 * math.exp(16.658 * (1.0 - pr)) + 0.667) / 1.667
    else:
        f1 = pr ** -0.368 * math.exp(0.648 * (1.0 - pr))
        f1_over_f2 = pr ** -0.448 * math.exp(0.245 * (1.0 - pr))
        f3 = pr ** 0.219
    f2 = f1 / f1_over_f2
    f4 = f3 * pr ** 1.649
    n = 2.0 - 0.5 * pr
    hfg = 1000.0 * h_fg(p_mpa)
    a = 2.317 * (hfg * d_m * g_kg_m2s / 4.0) * f1 \
        / (1.0 + 0.0143 * f2 * math.sqrt(d_m) * g_kg_m2s)
    c = 0.077 * f3 * d_m * g_kg_m2s \
        / (1.0 + 0.347 * f4 * (g_kg_m2s / 1356.0) ** n)
    return (a + 0.25 * d_m * g_kg_m2s * dh_sub_j_kg) / (c + l_m)


def bowring_kw_m2(d_m, l_m, p_mpa, g_kg_m2s, dh_sub_kj_kg):
    return bowring_w_m2(d_m, l_m, p_mpa, g_kg_m2s, 1000.0 * dh_sub_kj_kg) / 1000.0


def quality(q_kw_m2, l_m, d_m, g_kg_m2s, dh_sub_kj_kg, p_mpa):
    hfg = h_fg(p_mpa)
    return 4.0 * q_kw_m2 * l_m / (d_m * g_kg_m2s * hfg) - dh_sub_kj_kg / hfg


def hbm_biasi(d_m, l_m, p_mpa, g_kg_m2s, dh_sub_kj_kg):
    """Fixed point of q = biasi(x_e(q)), solved by plain bisection."""
    def g_of(q):
        return q - biasi_kw_m2(d_m, p_mpa, g_kg_m2s,
                               quality(q, l_m, d_m, g_kg_m2s, dh_sub_kj_kg, p_mpa))[0]
    lo, hi = 1.0, 20000.0
    probes = [lo * (hi / lo) ** (k / 63.0) for k in range(64)]
    a = b = None
    for p0, p1 in zip(probes, probes[1:]):
        if g_of(p0) == 0.0:
            a = b = p0
            break
        if g_of(p0) * g_of(p1) < 0.0:
            a, b = p0, p1
            break
    assert a is not None, "no bracket"
    for _ in range(400):
        mid = 0.5 * (a + b)
        if b - a <= 1e-12 * mid:
            break
        if g_of(a) * g_of(mid) <= 0.0:
            b = mid
        else:
            a = mid
    mid = 0.5 * (a + b)
    return biasi_kw_m2(d_m, p_mpa, g_kg_m2s,
                       quality(mid, l_m, d_m, g_kg_m2s, dh_sub_kj_kg, p_mpa))[0]


def main():
    rows = []

    def add(case, corr, d=None, l=None, p=None, g=None, dh=None, x=None, chf=None):
        fmt = lambda v: "" if v is None else f"{v:.10g}"
        rows.append(",".join([case, corr, fmt(d), fmt(l), fmt(p), fmt(g),
                              fmt(dh), fmt(x), fmt(chf)]))

    # Biasi, both diameter classes and both branches.
    branches = set()
    for case, d, p, g, x in [
        ("biasi_ref", 0.008, 7.0, 2000.0, 0.4),
        ("biasi_low_quality", 0.008, 7.0, 2000.0, 0.25),
        ("biasi_high_quality", 0.008, 7.0, 2000.0, 0.8),
        ("biasi_wide_tube", 0.02, 7.0, 2000.0, 0.4),
        ("biasi_exp_boundary", 0.01, 7.0, 2000.0, 0.4),
        ("biasi_low_pressure", 0.008, 0.5, 1000.0, 0.3),
        ("biasi_high_pressure", 0.012, 14.0, 3000.0, 0.5),
        ("biasi_low_flux", 0.0075, 5.0, 300.0, 0.45),
    ]:
        q, br = biasi_kw_m2(d, p, g, x)
        assert q > 0.0 and math.isfinite(q), (case, q)
        branches.add(br)
        add(case, "biasi", d=d, p=p, g=g, x=x, chf=q)
    assert branches == {"low_quality", "high_quality"}

    # Bowring, below / at / above the reference-pressure seam.
    for case, d, l, p, g, dh in [
        ("bowring_ref", 0.01, 2.0, 6.895, 1500.0, 200.0),
        ("bowring_low_pressure", 0.01, 2.0, 3.0, 1500.0, 200.0),
        ("bowring_high_pressure", 0.01, 2.0, 12.0, 1500.0, 200.0),
        ("bowring_long_tube", 0.02, 3.7, 7.0, 2500.0, 450.0),
        ("bowring_low_flow", 0.005, 1.0, 4.5, 300.0, 50.0),
    ]:
        q = bowring_kw_m2(d, l, p, g, dh)
        assert q > 0.0 and math.isfinite(q), (case, q)
        add(case, "bowring", d=d, l=l, p=p, g=g, dh=dh, chf=q)

    # Continuity across the seam, recorded for reference.
    q_below = bowring_kw_m2(0.01, 2.0, 6.894, 1500.0, 200.0)
    q_above = bowring_kw_m2(0.01, 2.0, 6.896, 1500.0, 200.0)
    assert abs(q_above - q_below) / q_below < 0.005
    add("bowring_seam_below", "bowring", d=0.01, l=2.0, p=6.894, g=1500.0,
        dh=200.0, chf=q_below)
    add("bowring_seam_above", "bowring", d=0.01, l=2.0, p=6.896, g=1500.0,
        dh=200.0, chf=q_above)

    # Heat-balance quality: chf column is the input flux, x_e the output.
    for case, q, l, d, g, dh, p in [
        ("quality_ref", 1500.0, 2.0, 0.01, 2000.0, 300.0, 7.0),
        ("quality_shallow", 800.0, 1.0, 0.008, 1500.0, 100.0, 4.0),
    ]:
        x = quality(q, l, d, g, dh, p)
        add(case, "quality", d=d, l=l, p=p, g=g, dh=dh, x=x, chf=q)

    # Closed-loop heat balance: subcooling constructed so the fixed point
    # lands exactly on the biasi_ref case (x_e(q*) = 0.4).
    q_ref, _ = biasi_kw_m2(0.008, 7.0, 2000.0, 0.4)
    l_ref = 2.0
    dh_ref = 4.0 * q_ref * l_ref / (0.008 * 2000.0) - 0.4 * h_fg(7.0)
    assert dh_ref > 0.0
    x_check = quality(q_ref, l_ref, 0.008, 2000.0, dh_ref, 7.0)
    assert abs(x_check - 0.4) < 1e-12
    q_loop = hbm_biasi(0.008, l_ref, 7.0, 2000.0, dh_ref)
    assert abs(q_loop - q_ref) / q_ref < 1e-9, (q_loop, q_ref)
    add("hbm_closed_loop", "hbm_biasi", d=0.008, l=l_ref, p=7.0, g=2000.0,
        dh=dh_ref, chf=q_ref)

    q_gen = hbm_biasi(0.012, 3.0, 10.0, 1500.0, 350.0)
    assert q_gen > 0.0
    add("hbm_generic", "hbm_biasi", d=0.012, l=3.0, p=10.0, g=1500.0,
        dh=350.0, chf=q_gen)

    out_dir = os.path.join(ROOT, "tests", "assets")
    os.makedirs(out_dir, exist_ok=True)
    path = os.path.join(out_dir, "correlation_golden.csv")
    with open(path, "w") as f:
        f.write("case,correlation,d_m,l_m,p_mpa,g_kg_m2_s,dh_sub_kj_kg,x_e,chf_kw_m2\n")
        f.write("\n".join(rows) + "\n")
    print(f"wrote {len(rows)} golden cases to {path}")
    for r in rows:
        print("  " + r)


if __name__ == "__main__":
    main()
