"""Acceptance suite, one test per criterion.

Each test prints one ``criterion N PASS|PARTIAL|FAIL`` line; the lines are
repeated in the terminal summary.  ``PARTIAL`` marks a criterion whose
evaluated checks all pass while some checks need point files the repository
does not ship (see ``MDSHAPE_FORMAT_DIR``).

NLI integrals of the large scenarios are persisted under ``.mdshape_cache``
at the repository root unless ``MDSHAPE_CACHE_DIR`` points elsewhere; a cold
run computes them (several minutes), later runs reuse them.
"""
import math
import os
import time
from dataclasses import replace
from pathlib import Path

import numpy as np
import pytest

from mdshape import ssfm
from mdshape.awgn import (AirEvaluator, AwgnChannelSpec, gmi_awgn, mi_awgn, required_snr,
                          shannon_required_snr, spectral_efficiency)
from mdshape.config import load_scenario
from mdshape.formats import UnknownFormatError, get_format
from mdshape.nli import (COMPONENTS, GaussianCumulants, eta_total, gaussian_eta,
                         optimal_launch_power, snr_sweep)
from mdshape.report import compare_formats, evaluate_format, gaussian_report

ROOT = Path(__file__).resolve().parents[1]
os.environ.setdefault("MDSHAPE_CACHE_DIR", str(ROOT / ".mdshape_cache"))

# Reference table: SE 6 formats run over the multi-span link, SE 10 over the single span.
# name -> (MI req dB, GMI req dB, SNR_eff dB)
TABLE_SE6 = {
    "pm8qam": (7.502, 8.117, 10.995),
    "hepta2-8": (7.215, 7.830, 11.090),
    "c4-64": (6.901, 8.835, 11.078),
    "dsq2-8": (7.332, 7.752, 11.005),
    "gs-awgn-4d-64": (7.242, 7.417, 10.962),
    "4d-64prs": (7.257, 7.421, 11.166),
    "ps16qam-6.4": (None, None, 10.741),
    "gaussian": (None, None, 10.705),
}
TABLE_SE10 = {
    "pm32qam": (12.686, 13.091, 13.119),
    "gs-awgn-2d-32": (12.472, 12.572, 12.841),
    "c4-1024": (12.184, 14.614, 12.846),
    "4d-os1024": (12.291, 12.502, 12.767),
    "nl-4d-1024": (12.417, 12.586, 13.085),
    "ps64qam-10.4": (None, None, 12.265),
    "gaussian": (None, None, 12.143),
}
SCENARIOS = ("reduced", "fig3", "multispan", "singlespan")
MATRIX_FORMATS = ("gaussian", "pmqpsk", "pm8qam", "pm16qam", "pm32qam", "pc32-asym",
                  "ps16qam-6.4", "ps64qam-10.4")


def _user_format(name):
    try:
        return get_format(name)
    except UnknownFormatError:
        return None


def _breakdown(name, sc):
    if name == "gaussian":
        return gaussian_eta(sc.link, sc.wdm)
    return eta_total(get_format(name), sc.link, sc.wdm)


def test_c1_shannon_anchors(criterion):
    criterion.begin(1, "Shannon anchors")
    t = time.perf_counter()
    a = shannon_required_snr(6, 0.8)
    b = shannon_required_snr(10, 0.8)
    dt = time.perf_counter() - t
    criterion.check(abs(a - 6.312) <= 1e-3, f"SE 6: {a:.4f} dB (6.312)")
    criterion.check(abs(b - 11.761) <= 1e-3, f"SE 10: {b:.4f} dB (11.761)")
    criterion.check(dt < 1.0, f"{dt * 1e3:.2f} ms")
    criterion.done()


def test_c2_awgn_required_snr(criterion):
    criterion.begin(2, "AWGN required SNR")
    for name, table in (("pm8qam", TABLE_SE6), ("pm32qam", TABLE_SE10)):
        c = get_format(name)
        for metric, ref in zip(("MI", "GMI"), table[name][:2]):
            got = required_snr(c, metric, 0.8, tol_db=0.005)
            criterion.check(abs(got - ref) <= 0.05, f"{name} {metric} {got:.3f} ({ref})")
    criterion.done()


def test_c3_capacity_gap_trend(criterion):
    criterion.begin(3, "capacity-gap trend")
    gap = {}
    for name in ("pmqpsk", "pm8qam", "pm16qam", "pm32qam", "pm64qam"):
        c = get_format(name)
        se = spectral_efficiency(c, 0.8)
        gap[name] = required_snr(c, "MI", 0.8, tol_db=0.005) - shannon_required_snr(se, 0.8)
    criterion.check(all(g > 0 for g in gap.values()),
                    "gaps " + ", ".join(f"{k} {v:.3f}" for k, v in gap.items()))
    # 32QAM is the cross format between the squares 16QAM and 64QAM
    criterion.check(gap["pm16qam"] > gap["pm32qam"] < gap["pm64qam"],
                    "cross 32QAM below both square neighbours")
    criterion.check(gap["pmqpsk"] < gap["pm16qam"] < gap["pm64qam"],
                    "square gaps grow with cardinality")
    pairs = [("gs-awgn-4d-64", "pm8qam", TABLE_SE6), ("4d-64prs", "pm8qam", TABLE_SE6),
             ("gs-awgn-2d-32", "pm32qam", TABLE_SE10), ("4d-os1024", "pm32qam", TABLE_SE10),
             ("nl-4d-1024", "pm32qam", TABLE_SE10)]
    for user, base, table in pairs:
        c = _user_format(user)
        if c is None:
            criterion.skip(f"{user} point file not supplied")
            continue
        got = required_snr(c, "GMI", 0.8, tol_db=0.005)
        ref = table[user][1]
        criterion.check(abs(got - ref) <= 0.05 and got < table[base][1],
                        f"{user} GMI {got:.3f} ({ref}) < {base} {table[base][1]}")
    criterion.done()


def test_c4_model_consistency(criterion):
    criterion.begin(4, "model-internal consistency")
    sc = load_scenario("reduced")
    g = eta_total(GaussianCumulants(np.eye(2)), sc.link, sc.wdm)
    worst = max(abs(g.components[p][c]["mod_dependent"]) for p in ("x", "y") for c in COMPONENTS)
    criterion.check(worst <= 1e-9 * g.eta, f"GN limit max format term {worst / g.eta:.1e} rel")
    for name in ("pmqpsk", "pm8qam", "pm16qam", "pm32qam", "pm64qam"):
        c = get_format(name)
        a = eta_total(c, sc.link, sc.wdm).eta
        b = eta_total(c, sc.link, sc.wdm, path="egn").eta
        criterion.check(abs(a - b) <= 1e-9 * abs(a), f"{name} 4D vs EGN {abs(a - b) / a:.1e} rel")
    criterion.done()


@pytest.fixture(scope="module")
def oracle_runs():
    """RP1 Monte Carlo runs shared by criteria 5 and 10."""
    sc = load_scenario("reduced")
    sim = replace(sc.sim, runs=2)
    out = {}
    for name, filters in (("pmqpsk", ("all", "x1")), ("pm16qam", ("all",)),
                          ("pc32-asym", ("all", "x1"))):
        c = get_format(name)
        for filt in filters:
            r = ssfm.rp1_oracle(c, sc.link, sc.wdm, sim, filt)
            b = eta_total(c, sc.link, sc.wdm, channels=list(r.channels))
            out[name, filt] = (r, b)
    return out


def test_c5_oracle_equivalence(criterion, oracle_runs):
    criterion.begin(5, "RP1 oracle equivalence")
    for (name, filt), (r, b) in oracle_runs.items():
        rel = r.eta / b.eta - 1
        criterion.check(abs(rel) <= 0.03,
                        f"{name} {filt} {r.eta:.1f}+-{r.stderr:.1f} vs {b.eta:.1f} ({rel:+.2%})")
        if filt == "x1":
            share = b.x1["x"][1] + b.x1["y"][1]
            rel = r.xpm["eta"] / share - 1
            criterion.check(abs(rel) <= 0.03, f"{name} XPM {r.xpm['eta']:.1f} vs {share:.1f} ({rel:+.2%})")
    criterion.done()


def test_c6_ssfm_agreement(criterion):
    criterion.begin(6, "SSFM agreement on reduced")
    sc = load_scenario("reduced")
    c = get_format("pmqpsk")
    bd = eta_total(c, sc.link, sc.wdm)
    p_opt, _ = optimal_launch_power(None, sc.link, sc.wdm, breakdown=bd)
    for dp in (-2, -1, 0, 1, 2):
        p = p_opt + dp
        m = ssfm.simulate_snr(c, sc.link, sc.wdm, sc.sim, p)
        model = float(snr_sweep(bd, sc.link, sc.wdm, [p])[0])
        criterion.check(abs(m.snr_db - model) <= 0.3,
                        f"P_opt{dp:+d} dB: {m.snr_db:.3f}+-{m.stderr_db:.3f} vs {model:.3f}")
    criterion.done()


def test_c7_ledger_identities(criterion):
    criterion.begin(7, "ledger identities")
    rows = []
    for scn, names in (("multispan", ("pm8qam", "ps16qam-6.4")), ("singlespan", ("pm32qam", "ps64qam-10.4")),
                       ("reduced", ("pmqpsk", "pm16qam", "pc32-asym"))):
        for metric in ("MI", "GMI"):
            rows += compare_formats([get_format(n) for n in names] + ["gaussian"], scn, metric)
    worst = max(abs(r.delta_tot_db - (r.delta_eff_db - r.delta_req_db)) for r in rows)
    criterion.check(worst <= 1e-9, f"{len(rows)} rows, max identity error {worst:.1e}")
    g = gaussian_report("multispan", 6.0)
    criterion.check((g.delta_req_db, g.delta_eff_db, g.delta_tot_db) == (0.0, 0.0, 0.0),
                    "Gaussian self-row all zero")
    criterion.done()


def test_c8_table_values(criterion):
    criterion.begin(8, "reference effective SNR and quoted gains")
    for scn, table in (("multispan", TABLE_SE6), ("singlespan", TABLE_SE10)):
        sc = load_scenario(scn)
        for name, (_, _, ref) in table.items():
            if name != "gaussian" and _user_format(name) is None:
                criterion.skip(f"{name} point file not supplied")
                continue
            if name == "gaussian":
                bd = gaussian_eta(sc.link, sc.wdm)
            else:
                bd = eta_total(get_format(name), sc.link, sc.wdm)
            got = optimal_launch_power(None, sc.link, sc.wdm, breakdown=bd)[1]
            criterion.check(abs(got - ref) <= 0.3, f"{scn} {name} {got:.3f} ({ref})")
    for user, base, scns, ref in (("4d-64prs", "pm8qam", ("multispan",), 0.9),
                                  ("nl-4d-1024", "pm32qam", ("multispan", "singlespan"), 0.5)):
        c = _user_format(user)
        if c is None:
            criterion.skip(f"{user} vs {base} gain needs the {user} point file")
            continue
        for scn in scns:
            a = evaluate_format(c, scn, "GMI").delta_tot_db
            b = evaluate_format(get_format(base), scn, "GMI").delta_tot_db
            criterion.check(abs((a - b) - ref) <= 0.15, f"{scn} {user} - {base} {a - b:.3f} ({ref})")
    criterion.done()


def test_c9_closed_form_optimum(criterion):
    criterion.begin(9, "closed-form optimum vs grid search")
    errs, bad = [], []
    grid = np.round(np.arange(-10.0, 15.0 + 1e-9, 0.01), 2)
    for scn in SCENARIOS:
        sc = load_scenario(scn)
        for name in MATRIX_FORMATS:
            bd = _breakdown(name, sc)
            p_opt, s_opt = optimal_launch_power(None, sc.link, sc.wdm, breakdown=bd)
            snr = snr_sweep(bd, sc.link, sc.wdm, grid)
            err = abs(grid[np.argmax(snr)] - p_opt)
            errs.append(err)
            if err > 0.01 or snr.max() > s_opt + 1e-9:
                bad.append(f"{scn} {name} grid {grid[np.argmax(snr)]:.2f} vs {p_opt:.3f} dBm")
    criterion.check(not bad, f"{len(errs)} pairs, max |grid - closed form| {max(errs):.4f} dB"
                    + (" ; " + "; ".join(bad) if bad else ""))
    criterion.done()


def test_c10_estimator_hygiene(criterion, oracle_runs):
    criterion.begin(10, "estimator hygiene")
    viol, n = [], 0
    for name in ("qpsk", "8qam", "16qam", "32qam", "64qam", "pm8qam"):
        c = get_format(name)
        for snr in (0.0, 5.0, 10.0, 15.0, 20.0):
            spec = AwgnChannelSpec(snr, c.dims)
            mi = mi_awgn(c, spec, estimator="monte_carlo", samples=200_000, seed=11)
            gmi = gmi_awgn(c, spec, samples=200_000, seed=11, estimator="monte_carlo")
            se = math.hypot(mi.estimator_stderr, gmi.estimator_stderr)
            n += 1
            if gmi.rate > mi.rate + 3 * se:
                viol.append(f"{name}@{snr:g}")
    criterion.check(not viol, f"GMI <= MI + 3 stderr in {n - len(viol)}/{n} cases {' '.join(viol)}")
    bad = []
    for name in ("qpsk", "8qam", "16qam", "32qam", "64qam", "pm16qam", "pc32-asym"):
        ev = AirEvaluator(get_format(name), "MI")
        r = np.array([ev.rate(s)[0] for s in np.arange(-10.0, 30.01, 0.5)])
        if np.any(np.diff(r) < -1e-12):
            bad.append(name)
    criterion.check(not bad, f"MI monotone over -10..30 dB {'; violations: ' + ' '.join(bad) if bad else ''}")
    for (name, filt), (r, _) in oracle_runs.items():
        if filt == "all":
            criterion.check(r.eps_rel_change <= 0.01, f"{name} eps/2 change {r.eps_rel_change:.1e}")
    criterion.done()
