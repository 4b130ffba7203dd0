"""Compiled vs numpy kernel timings.

Run with ``python benchmarks/bench_kernels.py``; both backends are imported
directly, so ``MDSHAPE_PURE_PYTHON`` has no effect here.  Each kernel is
also checked for agreement between the two implementations.
"""
from __future__ import annotations

import argparse
import sys
import timeit

import numpy as np

from mdshape import _kernels_py as py
from mdshape.config import load_scenario
from mdshape.formats import get_format
from mdshape.nli import get_integrals

try:
    from mdshape import _kernels as cy
except ImportError:
    cy = None


def _time(fn, repeat):
    return min(timeit.repeat(fn, number=1, repeat=repeat))


def bench_air(samples: int, repeat: int):
    c = get_format("pm16qam")
    rng = np.random.default_rng(1)
    idx = rng.integers(0, c.M, samples)
    y = c.points[idx] + 0.3 * rng.standard_normal((samples, c.dims))
    logp = np.log(c.probs)
    bits = c.label_bits()
    args = (y, idx, c.points, logp, bits, 1 / (2 * 0.09))
    ref = py.air_terms(*args)
    out = {"numpy": _time(lambda: py.air_terms(*args), repeat)}
    if cy is not None:
        got = cy.air_terms(*args)
        err = max(np.max(np.abs(a - b)) for a, b in zip(ref, got))
        out["cython"] = _time(lambda: cy.air_terms(*args), repeat)
        out["max_abs_diff"] = float(err)
    return out


def bench_tables(points: int, repeat: int):
    sc = load_scenario("reduced")
    G = get_integrals(sc.link, sc.wdm).k.G
    tabs = G._tables
    w = np.random.default_rng(2).uniform(-G.K * G.P, G.K * G.P, points)
    pytabs = tuple(np.asarray(t) if isinstance(t, np.ndarray) else t for t in tabs)
    ref = py.two_scale_eval(w, 2, *pytabs)
    out = {"numpy": _time(lambda: py.two_scale_eval(w, 2, *pytabs), repeat)}
    if cy is not None:
        got = cy.two_scale_eval(w, 2, *tabs)
        out["cython"] = _time(lambda: cy.two_scale_eval(w, 2, *tabs), repeat)
        out["max_rel_diff"] = float(np.max(np.abs(got - ref)) / np.max(np.abs(ref)))
    return out


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--samples", type=int, default=200_000)
    ap.add_argument("--points", type=int, default=1_000_000)
    ap.add_argument("--repeat", type=int, default=3)
    a = ap.parse_args(argv)
    if cy is None:
        print("compiled extension not built; numpy timings only", file=sys.stderr)
    print(f"{'kernel':<16}{'numpy s':>10}{'cython s':>10}{'speedup':>9}{'diff':>11}")
    for name, res in (("air_terms", bench_air(a.samples, a.repeat)),
                      ("two_scale_eval", bench_tables(a.points, a.repeat))):
        c = res.get("cython", float("nan"))
        diff = res.get("max_abs_diff", res.get("max_rel_diff", float("nan")))
        print(f"{name:<16}{res['numpy']:>10.4f}{c:>10.4f}{res['numpy'] / c:>9.2f}{diff:>11.2e}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
