"""Shaping-gain accounting against the Gaussian baseline and an NLI-aware optimizer.

Every row compares a format with circular Gaussian symbols at the same
spectral efficiency: the linear gap ``delta_req`` (required SNR over the
Shannon bound), the nonlinear gain ``delta_eff`` (optimum effective SNR over
the GN-model optimum) and their combination ``delta_tot = -delta_req + delta_eff``.
"""
from __future__ import annotations

import csv
import hashlib
import io
import json
import logging
import math
from dataclasses import asdict, dataclass, field

import numpy as np

from . import __version__
from .awgn import (DEFAULT_NODES, AirEvaluator, NonConvergenceError, required_snr, shannon_required_snr,
                   spectral_efficiency)
from .config import Scenario, ase_power, load_scenario
from .constellation import Constellation, ConstellationError, check_circular, entropy
from .nli import eta_total, gaussian_eta, get_integrals, optimal_launch_power, optimum_from

logger = logging.getLogger(__name__)

CSV_COLUMNS = ("format", "se_bits_4d", "metric", "target", "snr_req_db", "p_opt_dbm",
               "snr_eff_db", "delta_req_db", "delta_eff_db", "delta_tot_db", "scenario",
               "caveats")
IDENTITY_TOL = 1e-9
PS_CAVEAT = "ps-iid-nli"
GAUSSIAN = "gaussian"


@dataclass(frozen=True)
class SnrReport:
    """One format on one scenario; all SNR quantities in dB, powers in dBm."""

    format: str
    se_bits_4d: float
    metric: str
    target: float
    snr_req_db: float
    p_opt_dbm: float
    snr_eff_db: float
    delta_req_db: float
    delta_eff_db: float
    delta_tot_db: float
    scenario: str
    caveats: tuple = field(default=())

    def __post_init__(self):
        self.check_identity()

    def check_identity(self) -> None:
        if abs(self.delta_tot_db - (self.delta_eff_db - self.delta_req_db)) > IDENTITY_TOL:
            raise ArithmeticError(f"{self.format}: delta_tot != -delta_req + delta_eff")

    def row(self) -> dict:
        d = asdict(self)
        d["caveats"] = ";".join(self.caveats)
        return d


def _scenario(s) -> Scenario:
    return load_scenario(s) if isinstance(s, str) else s


def gaussian_baseline(link, wdm, se: float, target: float = 0.8) -> tuple[float, float]:
    """``(snr_req_c, snr_eff_gauss)`` in dB: Shannon bound and GN-model optimum.

    :param se: spectral efficiency in bits per 4D symbol
    :param target: normalized rate the SE corresponds to
    """
    snr_req = shannon_required_snr(se, target)
    _, snr_eff = optimal_launch_power(None, link, wdm, breakdown=gaussian_eta(link, wdm))
    return snr_req, snr_eff


def gaussian_report(scenario, se: float, metric: str = "MI", target: float = 0.8) -> SnrReport:
    """The baseline row itself; all deltas are zero by construction."""
    sc = _scenario(scenario)
    bd = gaussian_eta(sc.link, sc.wdm)
    p_opt, snr_eff = optimal_launch_power(None, sc.link, sc.wdm, breakdown=bd)
    return SnrReport(GAUSSIAN, se, metric.upper(), target, shannon_required_snr(se, target),
                     p_opt, snr_eff, 0.0, 0.0, 0.0, sc.id)


_REQ_CACHE: dict = {}


def _fingerprint(c: Constellation) -> str:
    h = hashlib.sha1(np.ascontiguousarray(c.points).tobytes())
    h.update(np.ascontiguousarray(c.probs).tobytes())
    if c.labels is not None:
        h.update(np.ascontiguousarray(c.labels).tobytes())
    return h.hexdigest()


def cached_required_snr(c: Constellation, metric: str, target: float, rate_loss: float = 0.0,
                        **kw) -> float:
    """:func:`required_snr` memoized on the point set, metric and settings."""
    key = (_fingerprint(c), metric.upper(), target, rate_loss, tuple(sorted(kw.items())))
    if key not in _REQ_CACHE:
        _REQ_CACHE[key] = required_snr(c, metric, target, rate_loss=rate_loss, **kw)
    return _REQ_CACHE[key]


def evaluate_format(c: Constellation, scenario, metric: str = "MI", target: float = 0.8,
                    rate_loss: float = 0.0, path: str = "4d", **req_kw) -> SnrReport:
    """Required SNR, model optimum and both gaps for one format.

    :param c: constellation
    :param scenario: :class:`Scenario` or a scenario id / file path
    :param rate_loss: matcher rate loss in bits per N-dim symbol (shaped formats)
    :param path: ``"4d"`` or ``"egn"`` NLI evaluation
    :param req_kw: forwarded to :func:`mdshape.awgn.required_snr`
    """
    sc = _scenario(scenario)
    metric = metric.upper()
    se = spectral_efficiency(c, target, rate_loss)
    snr_req = cached_required_snr(c, metric, target, rate_loss, **req_kw)
    snr_c, snr_g = gaussian_baseline(sc.link, sc.wdm, se, target)
    bd = eta_total(c, sc.link, sc.wdm, path=path)
    p_opt, snr_eff = optimal_launch_power(c, sc.link, sc.wdm, breakdown=bd)
    d_req = snr_req - snr_c
    d_eff = snr_eff - snr_g
    caveats = []
    if not c.is_uniform:
        caveats.append(PS_CAVEAT)
        caveats.append("ccdm-rate-loss" if rate_loss else "ideal-mb")
    if path != "4d":
        caveats.append(f"path-{path}")
    rep = SnrReport(c.name, se, metric, target, snr_req, p_opt, snr_eff, d_req, d_eff,
                    -d_req + d_eff, sc.id, tuple(caveats))
    logger.info("%s on %s: req %.3f dB, eff %.3f dB, tot %+.3f dB", c.name, sc.id,
                snr_req, snr_eff, rep.delta_tot_db)
    return rep


def compare_formats(formats, scenario, metric: str = "MI", target: float = 0.8,
                    rate_losses: dict | None = None, **kw) -> list[SnrReport]:
    """Evaluate several formats and sort by ``delta_tot`` (best first, ties by name).

    :param formats: constellations; the string ``"gaussian"`` adds the baseline
        row at the SE of the first constellation
    :param rate_losses: optional ``name -> rate loss`` map
    """
    rate_losses = rate_losses or {}
    rows = [evaluate_format(c, scenario, metric, target, rate_losses.get(c.name, 0.0), **kw)
            for c in formats if not isinstance(c, str)]
    if any(isinstance(c, str) and c == GAUSSIAN for c in formats):
        se = rows[0].se_bits_4d if rows else 8.0
        rows.append(gaussian_report(scenario, se, metric, target))
    return sorted(rows, key=lambda r: (-r.delta_tot_db, r.format))


def _cell(key: str, v):
    if not isinstance(v, float):
        return v
    return f"{v:.3f}" if key.endswith(("_db", "_dbm")) else f"{v:.6g}"


def to_csv(rows) -> str:
    buf = io.StringIO()
    w = csv.DictWriter(buf, fieldnames=CSV_COLUMNS, lineterminator="\n")
    w.writeheader()
    for r in rows:
        r.check_identity()
        d = r.row()
        w.writerow({k: _cell(k, v) for k, v in d.items()})
    return buf.getvalue()


def to_json(rows, scenarios=(), extra: dict | None = None) -> str:
    """JSON mirror of the CSV with the scenario configurations echoed."""
    scen = {}
    for s in scenarios:
        sc = _scenario(s)
        scen[sc.id] = dict(sc.to_dict(), config_hash=sc.config_hash())
    doc = {"version": __version__, "columns": list(CSV_COLUMNS),
           "rows": [dict(r.row(), caveats=list(r.caveats)) for r in rows], "scenarios": scen}
    if extra:
        doc.update(extra)
    return json.dumps(doc, indent=2, default=lambda o: o.item() if isinstance(o, np.generic) else str(o))


# ----------------------------------------------------------------------------
# optimizer

def _rotate(pts: np.ndarray, k: int) -> np.ndarray:
    """Multiply every quadrature pair by ``j**k``."""
    out = pts.copy()
    for _ in range(k % 4):
        re, im = out[:, 0::2].copy(), out[:, 1::2].copy()
        out[:, 0::2], out[:, 1::2] = -im, re
    return out


def rotation_orbits(c: Constellation, tol: float = 1e-9) -> np.ndarray | None:
    """``(M/4, 4)`` indices with ``points[o[k]] = j**k points[o[0]]``, or ``None``.

    A format closed under the joint quarter turn of all quadrature pairs,
    with equal probability along each orbit, keeps zero odd moments and
    zero pseudo-covariance under any perturbation of the orbit leaders.
    """
    pts = c.points
    if c.M % 4:
        return None
    scale = max(1.0, float(np.abs(pts).max()))
    rot = _rotate(pts, 1)
    d = np.linalg.norm(rot[:, None, :] - pts[None, :, :], axis=2) if c.M <= 4096 else None
    if d is None:
        return None
    nxt = np.argmin(d, axis=1)
    if np.any(d[np.arange(c.M), nxt] > tol * scale):
        return None
    seen = np.zeros(c.M, bool)
    orbits = []
    for i in range(c.M):
        if seen[i]:
            continue
        o = [i]
        for _ in range(3):
            o.append(int(nxt[o[-1]]))
        if len(set(o)) != 4 or nxt[o[-1]] != i:
            return None
        if np.ptp(c.probs[o]) > 1e-12:
            return None
        seen[o] = True
        orbits.append(o)
    return np.array(orbits)


@dataclass
class OptimizationResult:
    constellation: Constellation
    objective: list
    accepted: int
    evaluations: int
    snr_db: list
    stopped: str


class _Objective:
    """Metric at the optimum effective SNR (or a fixed SNR when no link is given)."""

    def __init__(self, init: Constellation, scenario, metric: str, snr_db, seed: int,
                 estimator: str, samples: int, nodes: int):
        self.init = init
        self.sc = None if scenario is None else _scenario(scenario)
        self.metric = metric
        self.snr_db = snr_db
        self.seed = seed
        self.estimator = estimator
        self.samples = samples
        self.nodes = nodes
        self.evals = 0
        if self.sc is not None:
            self.integrals = get_integrals(self.sc.link, self.sc.wdm)
            self.s2 = 2 * ase_power(self.sc.link, self.sc.wdm.symbol_rate)

    def snr(self, c: Constellation) -> float:
        if self.sc is None:
            return self.snr_db
        eta = eta_total(c, self.sc.link, self.sc.wdm, integrals=self.integrals).eta
        return 10 * math.log10(optimum_from(self.s2, eta)[1])

    def __call__(self, c: Constellation) -> tuple[float, float]:
        """``(-loss, snr_db)``; the probabilities are fixed, so ordering by
        ``-loss`` equals ordering by the metric without its rounding floor."""
        self.evals += 1
        snr = self.snr(c)
        ev = AirEvaluator(c, self.metric, self.estimator, self.samples, self.seed, self.nodes)
        return -ev.loss(snr), snr


def project(pts: np.ndarray, probs: np.ndarray, energy: float) -> np.ndarray:
    """Remove the mean and scale onto ``E[|X|^2] = energy``."""
    pts = pts - probs @ pts
    e = float(probs @ np.sum(pts**2, axis=1))
    return pts * math.sqrt(energy / e)


def optimize_constellation(init: Constellation, scenario=None, metric: str = "MI",
                           budget: int = 20, seed: int = 0, snr_db: float | None = None,
                           step: float = 0.05, min_step: float = 1e-4, fd_step: float = 1e-4,
                           estimator: str = "auto", samples: int = 200_000,
                           nodes: int = DEFAULT_NODES, full: bool = False):
    """Finite-difference ascent of the metric evaluated at the optimum effective SNR.

    Each iteration estimates the coordinate gradient by central differences,
    moves along it by ``step`` (in units of the per-dimension RMS amplitude),
    projects onto the power constraint and accepts the move only if the
    objective improves; otherwise the step is halved.  Without a scenario
    the metric is evaluated at the fixed ``snr_db`` (AWGN only).

    On a link the NLI model needs circular formats, so only the leaders of
    the quarter-turn orbits are free; AWGN-only runs move every point.

    :param init: starting constellation
    :param scenario: :class:`Scenario`, id, or ``None`` for AWGN only
    :param budget: number of gradient iterations; 0 returns ``init``
    :param seed: seed of the Monte Carlo estimator where one is used
    :param full: return an :class:`OptimizationResult` instead of the constellation
    """
    metric = metric.upper()
    if metric == "GMI" and init.labels is None:
        raise ConstellationError(f"{init.name}: GMI optimization needs labels")
    if scenario is None and snr_db is None:
        raise ValueError("AWGN-only optimization needs snr_db")
    if budget < 0:
        raise ValueError("budget must be non-negative")
    energy = init.dims / 2.0
    if budget == 0:
        res = OptimizationResult(init, [], 0, 0, [], "budget")
        return res if full else init

    orbits = None
    if scenario is not None:
        issues = check_circular(init, tol=1e-7)
        orbits = rotation_orbits(init)
        if issues or orbits is None:
            raise ConstellationError(
                f"{init.name}: NLI-aware optimization needs a format closed under the joint "
                "quarter turn of both polarizations")

    def expand(theta):
        if orbits is None:
            return theta
        out = np.empty((init.M, init.dims))
        for k in range(4):
            out[orbits[:, k]] = _rotate(theta, k)
        return out

    def leaders(pts):
        return pts if orbits is None else pts[orbits[:, 0]]

    probs = init.probs
    obj = _Objective(init, scenario, metric, snr_db, seed, estimator, samples, nodes)

    def build(theta):
        return init.with_points(project(expand(theta), probs, energy))

    theta = leaders(project(init.points, probs, energy))
    cur = build(theta)
    try:
        f_cur, s_cur = obj(cur)
    except (ArithmeticError, ValueError, NonConvergenceError) as e:
        raise RuntimeError(f"objective failed at the initial point: {e}") from e
    h_ent = entropy(init) if metric == "MI" else float(init.m)
    history, snrs = [h_ent + f_cur], [s_cur]
    accepted = 0
    rms = math.sqrt(energy * 2 / init.dims)
    h = fd_step * rms
    stopped = "budget"
    for it in range(budget):
        if step < min_step:
            stopped = "step"
            break
        try:
            g = np.zeros_like(theta)
            for idx in np.ndindex(theta.shape):
                tp, tm = theta.copy(), theta.copy()
                tp[idx] += h
                tm[idx] -= h
                g[idx] = (obj(build(tp))[0] - obj(build(tm))[0]) / (2 * h)
            gn = float(np.linalg.norm(g))
            if gn == 0 or not math.isfinite(gn):
                stopped = "flat"
                break
            while step >= min_step:
                cand_theta = leaders(project(expand(theta + step * rms * g / gn), probs, energy))
                cand = build(cand_theta)
                f_new, s_new = obj(cand)
                if f_new > f_cur:
                    theta, cur, f_cur = cand_theta, cand, f_new
                    history.append(h_ent + f_cur)
                    snrs.append(s_new)
                    accepted += 1
                    step *= 1.5
                    break
                step /= 2
        except (ArithmeticError, ValueError, NonConvergenceError, ConstellationError) as e:
            logger.warning("objective failed at iteration %d (%s); keeping last accepted point",
                           it, e)
            stopped = "error"
            break
        logger.info("iteration %d: objective %.6f at %.3f dB, step %.3g", it, f_cur, snrs[-1], step)
    else:
        stopped = "budget"
    if step < min_step and stopped == "budget":
        stopped = "step"
    out = cur.with_points(cur.points, name=f"{init.name}-opt")
    res = OptimizationResult(out, history, accepted, obj.evals, snrs, stopped)
    return res if full else out
