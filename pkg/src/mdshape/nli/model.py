"""NLI coefficient, effective SNR and optimum launch power.

The NLI variance of polarization ``q`` after matched filtering and
least-squares phase derotation is ``sigma^2_q = eta_q P^3`` with ``P`` the
channel power over both polarizations.  ``eta_q`` is assembled from the
partition weights of :mod:`mdshape.nli.weights` and the integrals of
:mod:`mdshape.nli.integrals`:

* second-order (GN-like) terms, which depend on the covariance only, form
  the modulation-independent part;
* fourth- and sixth-order cumulant terms form the modulation-dependent part;
* the mean-field term ``beta u_qbar`` of formats with cross-polarization
  covariance and the projection onto the transmitted symbol are included,
  split the same way.

Every term is attributed to SCI (channel of interest only), XCI (channel of
interest and one interferer) or MCI (everything else).
"""
from __future__ import annotations

import dataclasses
import hashlib
import itertools
import json
import logging
import math
import os
import threading
import warnings
from dataclasses import dataclass, field
from functools import lru_cache
from pathlib import Path

import numpy as np

from ..config import LinkConfig, WdmConfig, ase_power
from .integrals import KernelIntegrals
from .weights import GaussianCumulants, MomentCumulants, all_weights, as_cumulants, projection_weight

logger = logging.getLogger(__name__)

MANAKOV = 8.0 / 9.0
COMPONENTS = ("SCI", "XCI", "MCI")
PARTS = ("mod_independent", "mod_dependent")
POLS = ("x", "y")
Q_CLASSES = ("q11", "q33", "q13", "q31")

CACHE_DIR_ENV = "MDSHAPE_CACHE_DIR"

_cache: dict = {}
_cache_lock = threading.Lock()


@lru_cache(maxsize=1)
def _code_digest() -> str:
    # cached values are only as good as the code that produced them
    h = hashlib.sha256()
    for name in ("integrals.py", "kernel.py"):
        h.update(Path(__file__).with_name(name).read_bytes())
    return h.hexdigest()[:16]


def store_path(link: LinkConfig, wdm: WdmConfig, tol: float) -> Path | None:
    """File backing the integrals of a link and grid, if a cache directory is configured."""
    root = os.environ.get(CACHE_DIR_ENV)
    if not root:
        return None
    ident = json.dumps({"link": dataclasses.asdict(link), "rs": wdm.symbol_rate,
                        "spacing": wdm.spacing, "span": [min(wdm.offsets), max(wdm.offsets)],
                        "tol": tol, "code": _code_digest()}, sort_keys=True)
    return Path(root) / f"integrals-{hashlib.sha256(ident.encode()).hexdigest()[:16]}.json"


def get_integrals(link: LinkConfig, wdm: WdmConfig, tol: float = 2e-3) -> KernelIntegrals:
    """Shared integral cache for a link and channel grid (launch power ignored).

    Values persist across processes when ``MDSHAPE_CACHE_DIR`` is set.
    """
    key = (link, wdm.symbol_rate, wdm.spacing, min(wdm.offsets), max(wdm.offsets), tol)
    with _cache_lock:
        ki = _cache.get(key)
    if ki is None:
        ki = KernelIntegrals.for_link(link, wdm, tol=tol, store=store_path(link, wdm, tol))
        with _cache_lock:
            ki = _cache.setdefault(key, ki)
    return ki


def classify(channels) -> str:
    s = set(channels)
    if s == {0}:
        return "SCI"
    if 0 in s and len(s) == 2:
        return "XCI"
    return "MCI"


@dataclass
class NliBreakdown:
    """NLI coefficients (1/W^2) of both polarizations and their decomposition.

    ``components[pol][component][part]`` holds the contributions,
    ``mu[d] = (mu1, mu2, mu3)`` the cross-phase integrals of interferer ``d``
    and ``x1[pol][d]`` its cross-phase share of ``eta``.
    """

    eta_x: float
    eta_y: float
    components: dict
    mu: dict = field(default_factory=dict)
    x1: dict = field(default_factory=dict)
    format: str = ""
    path: str = "4d"
    channels: tuple = ()

    @property
    def eta(self) -> float:
        return self.eta_x + self.eta_y

    def pol_eta(self, pol: str) -> float:
        return self.eta_x if pol == "x" else self.eta_y

    def component(self, name: str, pol: str | None = None) -> float:
        pols = POLS if pol is None else (pol,)
        return sum(sum(self.components[p][name].values()) for p in pols)

    def part(self, name: str, pol: str | None = None) -> float:
        pols = POLS if pol is None else (pol,)
        return sum(self.components[p][c][name] for p in pols for c in COMPONENTS)

    @property
    def symmetric(self) -> bool:
        return bool(abs(self.eta_x - self.eta_y) <= 1e-9 * max(abs(self.eta_x), abs(self.eta_y)))

    def to_dict(self) -> dict:
        return {"format": self.format, "path": self.path, "channels": list(self.channels),
                "eta_x": self.eta_x, "eta_y": self.eta_y, "eta": self.eta,
                "eta_x_equals_eta_y": self.symmetric, "components": self.components,
                "mu": {str(k): list(v) for k, v in self.mu.items()},
                "x1": {p: {str(k): v for k, v in d.items()} for p, d in self.x1.items()}}


def _allowed(ki: KernelIntegrals, s: int) -> bool:
    # output band of the triplet overlaps the channel of interest
    return abs(s * ki.delta) < 2.0 - 1e-12


def eta_total(c, link: LinkConfig, wdm: WdmConfig, channels=None, path: str = "4d",
              integrals: KernelIntegrals | None = None) -> NliBreakdown:
    """NLI coefficient of a format on a link.

    :param c: constellation, or a cumulant source such as
        :class:`~mdshape.nli.weights.GaussianCumulants`
    :param channels: offsets of the channels present (default: the full grid);
        must contain 0
    :param path: ``"4d"`` keeps cross-polarization cumulants, ``"egn"``
        drops them (independent polarizations)
    """
    if path not in ("4d", "egn"):
        raise ValueError(f"path must be '4d' or 'egn', got {path!r}")
    if wdm.rolloff > 0:
        warnings.warn("NLI model assumes rectangular spectra; roll-off is ignored", stacklevel=2)
    src = as_cumulants(c, independent_pols=(path == "egn"))
    offsets = list(wdm.offsets)
    active = sorted(set(offsets if channels is None else channels))
    if 0 not in active or not set(active) <= set(offsets):
        raise ValueError(f"channels {active} must include 0 and lie within {offsets}")
    ki = integrals or get_integrals(link, wdm)
    g = MANAKOV * link.gamma_si
    g2 = g * g
    K0 = ki.K0()
    comps = {p: {k: {part: 0.0 for part in PARTS} for k in COMPONENTS} for p in POLS}
    x1 = {p: {} for p in POLS}
    mu = {d: link_mu(ki, d) for d in active if d != 0}
    p4 = None
    for q, pol in enumerate(POLS):
        acc = comps[pol]
        W = {k: complex(v) for k, v in all_weights(src, q).items()}
        w_gn = (W["gn_direct"] + W["gn_swap"]).real
        w_q = sum(W[k] for k in Q_CLASSES).real
        for t in itertools.product(active, repeat=3):
            if w_gn and _allowed(ki, t[0] - t[1] + t[2]):
                acc[classify(t)]["mod_independent"] += g2 * w_gn * ki.gn(*t)
        for cc, d in itertools.product(active, repeat=2):
            if w_q and _allowed(ki, cc):
                acc[classify((cc, d))]["mod_dependent"] += g2 * w_q * ki.quad4(cc, d)
            if W["q22"].real and _allowed(ki, 2 * cc - d):
                acc[classify((cc, d))]["mod_dependent"] += g2 * W["q22"].real * ki.quad22(cc, d)
        if W["s6"].real:
            for cc in active:
                if _allowed(ki, cc):
                    acc[classify((cc,))]["mod_dependent"] += g2 * W["s6"].real * ki.sixth(cc)
        for d in mu:
            x1[pol][d] = g2 * (w_gn * (ki.gn(d, d, 0) + ki.gn(0, d, d)) + w_q * ki.quad4(0, d))

        # mean field beta u_qbar and projection onto u_q
        qb = 1 - q
        cqq = src.covariance(q, q).real
        cbb = src.covariance(qb, qb).real
        cbq = src.covariance(qb, q)
        beta = 1j * g * K0 * src.covariance(q, qb)
        w4_cross = projection_weight(src, q, qb)
        w4_self = projection_weight(src, q, q)
        if (w4_cross or w4_self) and p4 is None:
            p4 = ki.projection()
        X = 1j * g * w4_cross * p4 if w4_cross else 0j
        A = 1j * g * w4_self * p4 if w4_self else 0j
        if cqq <= 0:
            raise ValueError(f"polarization {pol} carries no power")
        acc["SCI"]["mod_dependent"] -= abs(A) ** 2 / cqq
        if beta:
            for cc in active:
                k1 = classify((0, cc))
                acc[k1]["mod_dependent"] += 2 * (np.conj(beta) * X).real
                acc[k1]["mod_dependent"] -= 2 * (np.conj(A) * beta * cbq).real / cqq
                for c2 in active:
                    k2 = classify((0, cc, c2))
                    acc[k2]["mod_independent"] += abs(beta) ** 2 * (cbb - abs(cbq) ** 2 / cqq)
    ki.flush()
    etas = [sum(v for comp in comps[p].values() for v in comp.values()) for p in POLS]
    name = getattr(src, "name", type(src).__name__)
    if min(etas) <= 0:
        raise ArithmeticError(f"{name}: non-positive NLI coefficient {etas}")
    return NliBreakdown(etas[0], etas[1], comps, mu, x1, name, path, tuple(active))


def link_mu(ki: KernelIntegrals, d: int) -> tuple[float, float, float]:
    """Cross-phase integrals of interferer ``d``.

    ``mu1`` is scaled so that the Gaussian cross-phase term of a format with
    unit power per polarization reads ``4 mu1``; ``mu2`` is the
    fourth-order integral; ``mu3`` belongs to pseudo-cumulant terms, which
    vanish for the circular formats the model accepts.
    """
    return 1.5 * ki.gn(d, d, 0), ki.quad4(0, d), 0.0


def link_integrals(link: LinkConfig, wdm: WdmConfig, channel_offset: int) -> tuple[float, float, float]:
    """``(mu1, mu2, mu3)`` for one interfering channel."""
    if channel_offset == 0 or channel_offset not in wdm.offsets:
        raise ValueError(f"channel offset {channel_offset} is not an interferer of {wdm.offsets}")
    return link_mu(get_integrals(link, wdm), channel_offset)


def phi_coefficients(moments) -> tuple[float, float, float, float]:
    """``(Phi, Phi1, Phi2, Phi3)`` of the x-polarization cross-phase term.

    Interferer and channel of interest share the format, so
    ``Phi = E{|a_x|^2} E{|b_x|^2}^2``.
    """
    src = MomentCumulants(moments)
    W = all_weights(src, 0)
    phi = float(moments.ax2) ** 3
    w_gn = (W["gn_direct"] + W["gn_swap"]).real
    w_q = sum(W[k] for k in Q_CLASSES).real
    return phi, (2.0 * w_gn / 1.5) / phi - 4.0, w_q / phi, 0.0


def xpm_term(moments, integrals, phi: float) -> float:
    """Cross-phase NLI of one interferer on the x polarization.

    ``(4 mu1 - 8 mu3) Phi + (Phi1 mu1 + Phi2 mu2 + Phi3 mu3) Phi`` in units of
    ``gamma'^2`` and of the format's own power scale.
    """
    mu1, mu2, mu3 = integrals
    _, f1, f2, f3 = phi_coefficients(moments)
    return (4 * mu1 - 8 * mu3) * phi + (f1 * mu1 + f2 * mu2 + f3 * mu3) * phi


def gaussian_eta(link: LinkConfig, wdm: WdmConfig, channels=None) -> NliBreakdown:
    """GN-model coefficient (circular Gaussian symbols, independent polarizations)."""
    return eta_total(GaussianCumulants(np.eye(2)), link, wdm, channels)


def _total_ase(link: LinkConfig, wdm: WdmConfig) -> float:
    return 2.0 * ase_power(link, wdm.symbol_rate)


def snr_from(power_w: float, sigma2_ase: float, eta: float) -> float:
    """``P / (sigma2_ase + eta P^3)`` (linear)."""
    if not power_w > 0:
        raise ValueError(f"launch power must be positive, got {power_w!r}")
    return power_w / (sigma2_ase + eta * power_w**3)


def effective_snr(c, link: LinkConfig, wdm: WdmConfig, p_dbm: float,
                  breakdown: NliBreakdown | None = None) -> float:
    """Effective SNR in dB: total signal power over total ASE plus NLI power."""
    if not math.isfinite(p_dbm):
        raise ValueError("launch power must be finite")
    bd = breakdown or eta_total(c, link, wdm)
    p = 1e-3 * 10 ** (p_dbm / 10)
    return 10 * math.log10(snr_from(p, _total_ase(link, wdm), bd.eta))


def optimum_from(sigma2_ase: float, eta: float) -> tuple[float, float]:
    """Closed-form optimum ``(P_opt W, SNR_opt linear)``."""
    if not (eta > 0 and sigma2_ase > 0):
        raise ValueError("eta and ASE power must be positive")
    p = (sigma2_ase / (2 * eta)) ** (1 / 3)
    snr = p / (1.5 * sigma2_ase)
    assert abs(eta * p**3 - sigma2_ase / 2) <= 1e-9 * sigma2_ase
    assert abs(snr - snr_from(p, sigma2_ase, eta)) <= 1e-9 * snr
    return p, snr


def optimal_launch_power(c, link: LinkConfig, wdm: WdmConfig,
                         breakdown: NliBreakdown | None = None) -> tuple[float, float]:
    """``(P_opt dBm, SNR_eff at P_opt dB)``."""
    bd = breakdown or eta_total(c, link, wdm)
    p, snr = optimum_from(_total_ase(link, wdm), bd.eta)
    return 10 * math.log10(p / 1e-3), 10 * math.log10(snr)


def snr_sweep(bd: NliBreakdown, link: LinkConfig, wdm: WdmConfig, powers_dbm) -> np.ndarray:
    s2 = _total_ase(link, wdm)
    p = 1e-3 * 10 ** (np.asarray(powers_dbm, float) / 10)
    return 10 * np.log10(p / (s2 + bd.eta * p**3))


def is_unimodal(values) -> bool:
    d = np.sign(np.diff(np.asarray(values, float)))
    d = d[d != 0]
    return int(np.sum(d[1:] != d[:-1])) <= 1 and (d.size == 0 or d[0] > 0 or np.all(d < 0))
