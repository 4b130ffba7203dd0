"""Mutual information, generalized mutual information and required SNR over AWGN.

SNR is the average energy per two real dimensions over the complex noise
variance, so each real dimension sees ``sigma^2 = E_2D / (2 SNR)``.
"""
from __future__ import annotations

import io
import logging
import math
from dataclasses import dataclass

import numpy as np
from numpy.polynomial.hermite import hermgauss

from . import kernels
from .constellation import Constellation, ConstellationError, entropy, split_polarizations

logger = logging.getLogger(__name__)

LN2 = math.log(2.0)
SNR_BRACKET_DB = (-10.0, 40.0)
DEFAULT_TOL_DB = 0.02
DEFAULT_NODES = 10
DEFAULT_SAMPLES = 10**6
GH_MAX_SAMPLES = 3_000_000


class NonConvergenceError(RuntimeError):
    """A numerical search failed to reach its target."""


@dataclass(frozen=True)
class AwgnChannelSpec:
    snr_db: float
    dims: int = 2

    def __post_init__(self):
        if not math.isfinite(self.snr_db):
            raise ValueError("snr_db must be finite")


@dataclass(frozen=True)
class RatePoint:
    rate: float
    normalized: float
    estimator_stderr: float


def es_2d(c: Constellation) -> float:
    return c.mean_energy() * 2.0 / c.dims


def noise_variance(c: Constellation, snr_db: float) -> float:
    """Per-real-dimension noise variance at ``snr_db``."""
    return es_2d(c) / (2.0 * 10.0 ** (snr_db / 10.0))


class _Plan:
    """Fixed transmit indices, unit noise and weights reused across SNR values."""

    def __init__(self, c: Constellation, estimator: str, samples: int, seed: int, nodes: int):
        N, M = c.dims, c.M
        self.c = c
        self.logp = np.log(np.where(c.probs > 0, c.probs, 1e-300))
        self.bits = c.label_bits() if c.labels is not None else np.zeros((M, 0), np.int8)
        self.points = np.ascontiguousarray(c.points)
        self.estimator = estimator
        if estimator == "gauss_hermite":
            x, w = hermgauss(nodes)
            grids = np.meshgrid(*([x] * N), indexing="ij")
            z = np.stack([g.ravel() for g in grids], axis=1) * math.sqrt(2.0)
            wz = np.ones(z.shape[0])
            for g in np.meshgrid(*([w] * N), indexing="ij"):
                wz = wz * g.ravel()
            wz /= math.pi ** (N / 2)
            keep = c.probs > 0
            ii = np.repeat(np.flatnonzero(keep), z.shape[0])
            self.idx = ii
            self.z = np.tile(z, (int(keep.sum()), 1))
            self.weights = np.repeat(c.probs[keep], z.shape[0]) * np.tile(wz, int(keep.sum()))
        elif estimator == "monte_carlo":
            if samples < 10**4:
                raise ValueError("monte_carlo needs at least 1e4 samples")
            rng = np.random.default_rng(seed)
            self.idx = rng.choice(M, size=samples, p=c.probs)
            self.z = rng.standard_normal((samples, N))
            self.weights = None
        else:
            raise ValueError(f"unknown estimator {estimator!r}")

    def terms(self, sigma2: float):
        y = self.points[self.idx] + math.sqrt(sigma2) * self.z
        return kernels.air_terms(y, self.idx, self.points, self.logp, self.bits, 1.0 / (2.0 * sigma2))

    def expect(self, v):
        """Mean (bits) and its standard error."""
        if self.weights is not None:
            return float(np.dot(self.weights, v)) / LN2, 0.0
        return float(v.mean()) / LN2, float(v.std(ddof=1) / math.sqrt(v.size)) / LN2


def _choose_estimator(c: Constellation, estimator: str, nodes: int) -> str:
    if estimator != "auto":
        if estimator == "gauss_hermite" and c.dims > 4:
            raise ValueError("gauss_hermite supports N <= 4")
        return estimator
    if c.dims <= 4 and c.M * nodes**c.dims <= GH_MAX_SAMPLES:
        return "gauss_hermite"
    return "monte_carlo"


class AirEvaluator:
    """MI/GMI of one constellation at many SNRs with common random numbers.

    Polarization-multiplexed products are evaluated per polarization and
    summed, which is exact for the MI and, when labels concatenate, for the GMI.

    :param c: constellation
    :param metric: ``"MI"`` or ``"GMI"``
    :param estimator: ``"auto"``, ``"gauss_hermite"`` or ``"monte_carlo"``
    """

    def __init__(self, c: Constellation, metric: str = "MI", estimator: str = "auto",
                 samples: int = DEFAULT_SAMPLES, seed: int = 0, nodes: int = DEFAULT_NODES,
                 factorize: bool = True):
        metric = metric.upper()
        if metric not in ("MI", "GMI"):
            raise ValueError(f"metric must be MI or GMI, got {metric!r}")
        if metric == "GMI" and c.labels is None:
            raise ConstellationError(f"{c.name}: GMI needs a labeling (nolabel format)")
        self.c = c
        self.metric = metric
        self.es2d = es_2d(c)
        parts = None
        if factorize:
            sp = split_polarizations(c)
            if sp is not None and (metric == "MI" or (sp[0].labels is not None and sp[1].labels is not None)):
                parts = sp
        self.parts = parts if parts is not None else (c,)
        self.plans = []
        for k, part in enumerate(self.parts):
            est = _choose_estimator(part, estimator, nodes)
            self.plans.append(_Plan(part, est, samples, seed + 7919 * k, nodes))
        self.entropies = [entropy(p) for p in self.parts]
        logger.debug("AIR %s %s: %d part(s), estimators %s", c.name, metric, len(self.parts),
                     [p.estimator for p in self.plans])

    def _cond(self, snr_db: float) -> tuple[float, float]:
        sigma2 = self.es2d / (2.0 * 10.0 ** (snr_db / 10.0))
        total, var = 0.0, 0.0
        for plan in self.plans:
            hx, hb = plan.terms(sigma2)
            cond, se = plan.expect(hx if self.metric == "MI" else hb)
            total += cond
            var += se * se
        return total, var

    def rate(self, snr_db: float) -> tuple[float, float]:
        """Rate in bits per N-dim symbol and its standard error."""
        cond, var = self._cond(snr_db)
        total = sum(self.entropies) - cond
        if self.metric == "GMI":
            total = max(0.0, total)
        return total, math.sqrt(var)

    def loss(self, snr_db: float) -> float:
        """Entropy minus the metric, resolved below the rounding of the rate itself."""
        return self._cond(snr_db)[0]

    def point(self, snr_db: float) -> RatePoint:
        r, se = self.rate(snr_db)
        return RatePoint(r, normalized_rate(r, self.c, clip=True), se)


def mi_awgn(c: Constellation, chan: AwgnChannelSpec, estimator: str = "auto",
            samples: int = DEFAULT_SAMPLES, seed: int = 0, nodes: int = DEFAULT_NODES) -> RatePoint:
    """Mutual information in bits per N-dim symbol."""
    _check_normalized(c)
    return AirEvaluator(c, "MI", estimator, samples, seed, nodes).point(chan.snr_db)


def gmi_awgn(c: Constellation, chan: AwgnChannelSpec, samples: int = DEFAULT_SAMPLES,
             seed: int = 0, estimator: str = "auto", nodes: int = DEFAULT_NODES) -> RatePoint:
    """Generalized mutual information ``max(0, H(B) - sum_i H(B_i|Y))``."""
    _check_normalized(c)
    return AirEvaluator(c, "GMI", estimator, samples, seed, nodes).point(chan.snr_db)


def _check_normalized(c: Constellation, tol: float = 1e-6) -> None:
    if abs(c.mean_energy() / (c.dims / 2) - 1.0) > tol:
        raise ConstellationError(f"{c.name}: constellation is not normalized "
                                 f"(energy per 2D = {c.mean_energy() * 2 / c.dims:.6g})")


def normalized_rate(rate: float, c: Constellation, clip: bool = False) -> float:
    """``R* = 1 - (H(X) - R) / m``."""
    h = entropy(c)
    if not clip and (rate < -1e-12 or rate > h + 1e-9):
        raise ValueError(f"rate {rate} outside [0, H(X)={h}]")
    return 1.0 - (h - rate) / c.m


def target_rate(c: Constellation, target_normalized: float) -> float:
    """Rate in bits per N-dim symbol that gives the normalized target."""
    return entropy(c) - c.m * (1.0 - target_normalized)


def spectral_efficiency(c: Constellation, target_normalized: float, rate_loss: float = 0.0) -> float:
    """Bits per 4D symbol whose fraction ``target_normalized`` equals the net rate."""
    net = target_rate(c, target_normalized) - rate_loss
    return net / target_normalized * 4.0 / c.dims


def required_snr(c: Constellation, metric: str = "MI", target_normalized: float = 0.8,
                 tol_db: float = DEFAULT_TOL_DB, estimator: str = "auto",
                 samples: int = DEFAULT_SAMPLES, seed: int = 0, nodes: int = DEFAULT_NODES,
                 rate_loss: float = 0.0, bracket=SNR_BRACKET_DB) -> float:
    """Smallest SNR (dB) at which the normalized metric reaches the target.

    :param rate_loss: bits per N-dim symbol subtracted from the metric
        (distribution-matcher loss for shaped formats)
    :raises NonConvergenceError: target not reached at the upper bracket edge
    """
    if tol_db <= 0:
        raise ValueError("tol_db must be positive")
    if target_normalized <= 0:
        return float("-inf")
    _check_normalized(c)
    ev = AirEvaluator(c, metric, estimator, samples, seed, nodes)
    need = target_rate(c, target_normalized)

    def f(snr):
        return ev.rate(snr)[0] - rate_loss - need

    lo, hi = bracket
    f_hi = f(hi)
    if f_hi < 0:
        raise NonConvergenceError(
            f"{c.name}: {metric} saturates below target R*={target_normalized} at {hi} dB "
            f"(short by {-f_hi:.4g} bit)")
    if f(lo) >= 0:
        return float(lo)
    while hi - lo > tol_db:
        mid = 0.5 * (lo + hi)
        if f(mid) >= 0:
            hi = mid
        else:
            lo = mid
    # linear interpolation inside the final bracket
    flo, fhi = f(lo), f(hi)
    snr = lo + (hi - lo) * (-flo) / (fhi - flo) if fhi != flo else 0.5 * (lo + hi)
    logger.info("required SNR %s %s R*=%.3f: %.4f dB", c.name, metric, target_normalized, snr)
    return float(snr)


def shannon_required_snr(se_bits_per_4d: float, target_normalized: float) -> float:
    """Required SNR of the Gaussian input: per-2D rate ``r = se R*/2``."""
    if se_bits_per_4d <= 0:
        raise ValueError("spectral efficiency must be positive")
    r = se_bits_per_4d * target_normalized / 2.0
    if r <= 0:
        return float("-inf")
    return 10.0 * math.log10(2.0**r - 1.0)


def delta_snr_req(c: Constellation, metric: str = "MI", target_normalized: float = 0.8,
                  rate_loss: float = 0.0, **kw) -> float:
    """Gap in dB between the required SNR and the Shannon bound at equal SE."""
    se = spectral_efficiency(c, target_normalized, rate_loss)
    return required_snr(c, metric, target_normalized, rate_loss=rate_loss, **kw) \
        - shannon_required_snr(se, target_normalized)


def parse_grid(text: str) -> np.ndarray:
    """Parse ``start:step:stop`` (inclusive stop)."""
    parts = text.split(":")
    if len(parts) != 3:
        raise ValueError(f"grid {text!r} must be start:step:stop")
    try:
        start, step, stop = (float(p) for p in parts)
    except ValueError:
        raise ValueError(f"grid {text!r} has a non-numeric field") from None
    if step <= 0 or stop < start:
        raise ValueError(f"grid {text!r} must have step > 0 and stop >= start")
    n = int(math.floor((stop - start) / step + 1e-9)) + 1
    return start + step * np.arange(n)


def rates_csv(rows) -> str:
    """CSV with columns ``format,metric,snr_db,rate,normalized,stderr``."""
    buf = io.StringIO()
    buf.write("format,metric,snr_db,rate,normalized,stderr\n")
    for name, metric, snr, rp in rows:
        buf.write(f"{name},{metric},{snr:.3f},{rp.rate:.6f},{rp.normalized:.6f},{rp.estimator_stderr:.3g}\n")
    return buf.getvalue()
