"""N-dimensional constellations: storage, normalization and statistics.

A constellation is the triple (points, labels, probabilities).  Real
dimensions are paired into complex quadratures: dims 0-1 carry the
x-polarization, dims 2-3 the y-polarization.
"""
from __future__ import annotations

import itertools
import logging
import math
from dataclasses import dataclass, field
from functools import lru_cache
from pathlib import Path

import numpy as np
from scipy.optimize import brentq
from scipy.special import gammaln

logger = logging.getLogger(__name__)

PROB_TOL = 1e-9
MEAN_TOL = 1e-9
ENERGY_MERGE_TOL = 1e-9
LOW_ENERGY_FRACTION = 0.75
HIGH_ENERGY_FRACTION = 1.25


class ConstellationError(ValueError):
    """Raised when a constellation violates a structural invariant."""


@dataclass(frozen=True, eq=False)
class Constellation:
    """Point set with binary labels and a probability mass function.

    :param points: ``(M, N)`` real coordinates
    :param labels: ``(M,)`` integer labels with ``m`` significant bits, or
        ``None`` for formats without a labeling (MI only)
    :param probs: ``(M,)`` probabilities
    :param name: display name
    :param m: label width in bits
    """

    points: np.ndarray
    labels: np.ndarray | None
    probs: np.ndarray
    name: str = "unnamed"
    m: int = 0
    partial: bool = field(default=False, repr=False)

    def __post_init__(self):
        pts = np.array(self.points, dtype=float)
        if pts.ndim == 1:
            pts = pts[:, None]
        probs = np.array(self.probs, dtype=float).ravel()
        lab = None if self.labels is None else np.array(self.labels, dtype=np.int64).ravel()
        M, N = pts.shape
        m = self.m if self.m else (math.ceil(math.log2(M)) if M > 1 else 0)
        _validate(pts, lab, probs, m, self.partial)
        for arr in (pts, probs) + ((lab,) if lab is not None else ()):
            arr.setflags(write=False)
        object.__setattr__(self, "points", pts)
        object.__setattr__(self, "probs", probs)
        object.__setattr__(self, "labels", lab)
        object.__setattr__(self, "m", int(m))

    @property
    def M(self) -> int:
        return self.points.shape[0]

    @property
    def dims(self) -> int:
        return self.points.shape[1]

    @property
    def has_labels(self) -> bool:
        return self.labels is not None

    @property
    def is_uniform(self) -> bool:
        return bool(np.allclose(self.probs, 1.0 / self.M, rtol=0, atol=1e-12))

    def complex_pols(self) -> np.ndarray:
        """Return ``(M, N//2)`` complex symbols, one column per quadrature pair."""
        return self.points[:, 0::2] + 1j * self.points[:, 1::2]

    def label_bits(self) -> np.ndarray:
        """``(M, m)`` 0/1 matrix, most significant bit first."""
        if self.labels is None:
            raise ConstellationError(f"{self.name}: constellation has no labeling")
        shifts = np.arange(self.m - 1, -1, -1)
        return ((self.labels[:, None] >> shifts[None, :]) & 1).astype(np.int8)

    def mean_energy(self) -> float:
        return float(np.sum(self.probs * np.sum(self.points**2, axis=1)))

    def pol_energies(self) -> np.ndarray:
        """Average energy of each quadrature pair."""
        a = self.complex_pols()
        return np.sum(self.probs[:, None] * np.abs(a) ** 2, axis=0)

    def with_probs(self, probs, name: str | None = None) -> "Constellation":
        return Constellation(self.points, self.labels, probs, name or self.name, self.m, self.partial)

    def with_points(self, points, name: str | None = None) -> "Constellation":
        return Constellation(points, self.labels, self.probs, name or self.name, self.m, self.partial)


def _validate(pts, lab, probs, m, partial):
    M, N = pts.shape
    if N % 2:
        raise ConstellationError(f"dimension N={N} must be even")
    if not np.all(np.isfinite(pts)):
        raise ConstellationError("coordinates contain NaN or Inf")
    if probs.shape != (M,):
        raise ConstellationError(f"expected {M} probabilities, got {probs.size}")
    if not np.all(np.isfinite(probs)) or np.any(probs < 0):
        raise ConstellationError("probabilities must be finite and nonnegative")
    mass = probs.sum()
    if abs(mass - 1.0) > PROB_TOL:
        raise ConstellationError(f"probability mass {mass:.6g} ≠ 1")
    if lab is None:
        return
    if lab.shape != (M,):
        raise ConstellationError(f"expected {M} labels, got {lab.size}")
    if np.any(lab < 0) or np.any(lab >= (1 << m)):
        raise ConstellationError(f"labels must fit in m={m} bits")
    if np.unique(lab).size != M:
        raise ConstellationError("labels are not distinct")
    if (1 << m) != M and not partial:
        raise ConstellationError(f"M={M} is not 2^m with m={m}; pass partial=True to allow")


# ----------------------------------------------------------------------------
# point-file IO

def load_constellation(path, format: str = "pointfile", name: str | None = None,
                       partial: bool = False) -> Constellation:
    """Read a point file.

    Line 1 holds ``N M m``; each following line ``x1 .. xN label prob``.
    A label of ``-`` on every line marks an unlabeled format.  ``#`` starts
    a comment.

    :param path: file path
    :param format: only ``"pointfile"`` is supported
    :param partial: accept ``M < 2**m`` (shaped subsets)
    """
    if format != "pointfile":
        raise ValueError(f"unsupported constellation format {format!r}")
    path = Path(path)
    text = path.read_text(encoding="utf-8")
    return parse_pointfile(text, name=name or path.stem, partial=partial)


def parse_pointfile(text: str, name: str = "unnamed", partial: bool = False) -> Constellation:
    rows = []
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if line:
            rows.append((lineno, line.split()))
    if not rows:
        raise ConstellationError("empty point file")
    lineno, head = rows[0]
    try:
        N, M, m = (int(t) for t in head)
    except ValueError:
        raise ConstellationError(f"line {lineno}: header must be 'N M m'") from None
    body = rows[1:]
    if len(body) != M:
        raise ConstellationError(f"header declares M={M} points, found {len(body)}")
    pts = np.empty((M, N))
    probs = np.empty(M)
    labels = []
    for i, (lineno, tok) in enumerate(body):
        if len(tok) != N + 2:
            raise ConstellationError(f"line {lineno}: expected {N + 2} fields, got {len(tok)}")
        try:
            pts[i] = [float(t) for t in tok[:N]]
            probs[i] = float(tok[N + 1])
        except ValueError:
            raise ConstellationError(f"line {lineno}: malformed number") from None
        lab = tok[N]
        if lab == "-":
            labels.append(None)
        elif len(lab) == m and set(lab) <= {"0", "1"}:
            labels.append(int(lab, 2))
        else:
            raise ConstellationError(f"line {lineno}: label {lab!r} is not a {m}-bit string")
    if all(lb is None for lb in labels):
        lab_arr = None
    elif any(lb is None for lb in labels):
        raise ConstellationError("labels must be given for all points or none")
    else:
        lab_arr = np.array(labels)
    return Constellation(pts, lab_arr, probs, name=name, m=m, partial=partial or lab_arr is None)


def format_pointfile(c: Constellation) -> str:
    out = [f"{c.dims} {c.M} {c.m}"]
    for i in range(c.M):
        coords = " ".join(repr(float(v)) for v in c.points[i])
        lab = "-" if c.labels is None else format(int(c.labels[i]), f"0{c.m}b")
        out.append(f"{coords} {lab} {float(c.probs[i])!r}")
    return "\n".join(out) + "\n"


def save_constellation(c: Constellation, path) -> None:
    Path(path).write_text(format_pointfile(c), encoding="utf-8")


# ----------------------------------------------------------------------------
# builders

def gray_code(n: int) -> np.ndarray:
    k = np.arange(n)
    return k ^ (k >> 1)


def square_qam(M: int, name: str | None = None) -> Constellation:
    """Gray-labeled square QAM on odd-integer coordinates."""
    side = int(round(math.sqrt(M)))
    if side * side != M or side & (side - 1):
        raise ValueError(f"M={M} is not a square power of two")
    lv = np.arange(-side + 1, side, 2, dtype=float)
    g = gray_code(side)
    bits = int(math.log2(side))
    pts, lab = [], []
    for i, xi in enumerate(lv):
        for q, yq in enumerate(lv):
            pts.append((xi, yq))
            lab.append((g[i] << bits) | g[q])
    return Constellation(np.array(pts), np.array(lab), np.full(M, 1.0 / M), name or f"{M}QAM")


def pm_product(cx: Constellation, cy: Constellation | None = None, name: str | None = None) -> Constellation:
    """Polarization-multiplexed product; labels concatenate x bits then y bits."""
    cy = cx if cy is None else cy
    if cx.dims != 2 or cy.dims != 2:
        raise ValueError("pm_product expects two 2D constellations")
    ix, iy = np.meshgrid(np.arange(cx.M), np.arange(cy.M), indexing="ij")
    ix, iy = ix.ravel(), iy.ravel()
    pts = np.hstack([cx.points[ix], cy.points[iy]])
    probs = cx.probs[ix] * cy.probs[iy]
    probs = probs / probs.sum()
    lab = None
    if cx.labels is not None and cy.labels is not None:
        lab = (cx.labels[ix] << cy.m) | cy.labels[iy]
    return Constellation(pts, lab, probs, name or f"PM-{cx.name}", cx.m + cy.m,
                         partial=cx.partial or cy.partial)


def split_polarizations(c: Constellation):
    """Factor a 4D format into independent x and y 2D formats.

    Returns ``(cx, cy)`` when the points form a Cartesian product with
    product probabilities, otherwise ``None``.  The labeling is checked
    separately by :func:`labels_factor`.
    """
    if c.dims != 4:
        return None
    ux, inv_x = np.unique(np.round(c.points[:, :2], 10), axis=0, return_inverse=True)
    uy, inv_y = np.unique(np.round(c.points[:, 2:], 10), axis=0, return_inverse=True)
    inv_x, inv_y = inv_x.ravel(), inv_y.ravel()
    if ux.shape[0] * uy.shape[0] != c.M:
        return None
    grid = np.full((ux.shape[0], uy.shape[0]), -1)
    grid[inv_x, inv_y] = np.arange(c.M)
    if np.any(grid < 0):
        return None
    P = c.probs[grid]
    pxm, pym = P.sum(1), P.sum(0)
    if not np.allclose(P, np.outer(pxm, pym), rtol=0, atol=1e-12):
        return None
    lx = ly = None
    if c.labels is not None and labels_factor(c, grid):
        ly_bits = int(round(math.log2(uy.shape[0])))
        lx = c.labels[grid[:, 0]] >> ly_bits
        ly = c.labels[grid[0, :]] & ((1 << ly_bits) - 1)
    mx = int(round(math.log2(ux.shape[0]))) if lx is not None else 0
    my = int(round(math.log2(uy.shape[0]))) if ly is not None else 0
    cx = Constellation(ux, lx, pxm, f"{c.name}[x]", mx, partial=lx is None)
    cy = Constellation(uy, ly, pym, f"{c.name}[y]", my, partial=ly is None)
    return cx, cy


def labels_factor(c: Constellation, grid: np.ndarray) -> bool:
    nx, ny = grid.shape
    if nx & (nx - 1) or ny & (ny - 1):
        return False
    by = int(round(math.log2(ny)))
    lab = c.labels[grid]
    hi = lab >> by
    lo = lab & ((1 << by) - 1)
    return bool(np.all(hi == hi[:, :1]) and np.all(lo == lo[:1, :]))


# ----------------------------------------------------------------------------
# normalization and statistics

def normalize_unit_energy_per_pol(c: Constellation, remove_mean: bool = False) -> Constellation:
    """Scale every quadrature pair to unit average energy.

    For ``N = 2`` the total energy becomes 1; for ``N = 4`` each polarization
    is rescaled independently, which changes the shape of formats whose
    polarizations carry unequal power.
    """
    pts = np.array(c.points)
    mean = c.probs @ pts
    scale = max(1.0, float(np.max(np.abs(pts))))
    if np.any(np.abs(mean) > MEAN_TOL * scale):
        if not remove_mean:
            raise ConstellationError(f"{c.name}: nonzero mean {mean}; pass remove_mean=True")
        pts = pts - mean
    tmp = c.with_points(pts)
    e = tmp.pol_energies()
    if np.any(e <= 0):
        raise ConstellationError(f"{c.name}: zero-energy polarization cannot be normalized")
    pts = pts / np.repeat(np.sqrt(e), 2)[None, :]
    return c.with_points(pts)


def normalize_total_energy(c: Constellation, energy_per_pol: float = 1.0) -> Constellation:
    """Scale jointly so that the mean energy equals ``energy_per_pol`` times N/2."""
    target = energy_per_pol * c.dims / 2
    return c.with_points(c.points * math.sqrt(target / c.mean_energy()))


def entropy(c_or_probs) -> float:
    """Entropy in bits of a constellation or a probability vector."""
    p = c_or_probs.probs if isinstance(c_or_probs, Constellation) else np.asarray(c_or_probs, float)
    p = p[p > 0]
    return float(-np.sum(p * np.log2(p)))


@dataclass(frozen=True)
class ModulationMoments:
    """Per-polarization and cross-polarization moments of a normalized format."""

    ax2: float
    ax4: float
    ax6: float
    ay2: float
    ay4: float
    ay6: float
    ax2ay2: float
    ax_ayc: complex
    ax2_ayc2: complex
    ax4ay2: float
    ax2ay4: float

    def as_dict(self) -> dict:
        return {k: getattr(self, k) for k in self.__dataclass_fields__}


def pol_symbols(c: Constellation) -> tuple[np.ndarray, np.ndarray]:
    """Return x and y complex symbols; a 2D format is reused for y."""
    a = c.complex_pols()
    if a.shape[1] == 1:
        return a[:, 0], None
    if a.shape[1] != 2:
        raise ConstellationError(f"{c.name}: moments need N = 2 or 4, got N = {c.dims}")
    return a[:, 0], a[:, 1]


def moments(c: Constellation) -> ModulationMoments:
    """Exact probability-weighted moments.

    For ``N = 2`` the y-polarization is an independent copy of x.
    """
    p = c.probs
    ax, ay = pol_symbols(c)
    Ex = lambda v: float(np.sum(p * v))
    x2 = np.abs(ax) ** 2
    if ay is None:
        mx2, mx4, mx6 = Ex(x2), Ex(x2**2), Ex(x2**3)
        mean = complex(np.sum(p * ax))
        return ModulationMoments(mx2, mx4, mx6, mx2, mx4, mx6, mx2 * mx2, abs(mean) ** 2,
                                 abs(complex(np.sum(p * ax**2))) ** 2, mx4 * mx2, mx2 * mx4)
    y2 = np.abs(ay) ** 2
    return ModulationMoments(
        Ex(x2), Ex(x2**2), Ex(x2**3), Ex(y2), Ex(y2**2), Ex(y2**3), Ex(x2 * y2),
        complex(np.sum(p * ax * np.conj(ay))), complex(np.sum(p * ax**2 * np.conj(ay) ** 2)),
        Ex(x2**2 * y2), Ex(x2 * y2**2))


def joint_moment(c: Constellation, comps) -> complex:
    """E over the format of a product of polarization components.

    :param comps: sequence of ``(pol, conj)`` with ``pol`` in {0, 1}
    """
    ax, ay = pol_symbols(c)
    pols = (ax, ax if ay is None else ay)
    if ay is None and len({p for p, _ in comps}) > 1:
        # independent copy: factor over polarizations
        out = 1.0 + 0j
        for pol in (0, 1):
            sub = [(0, cj) for p, cj in comps if p == pol]
            out *= joint_moment(c, sub)
        return out
    prod = np.ones(c.M, dtype=complex)
    for pol, cj in comps:
        v = pols[pol]
        prod = prod * (np.conj(v) if cj else v)
    return complex(np.sum(c.probs * prod))


@lru_cache(maxsize=None)
def set_partitions(n: int) -> tuple:
    """All set partitions of ``range(n)`` as tuples of tuples."""
    if n == 0:
        return ((),)
    out = []
    for part in set_partitions(n - 1):
        out.append(part + ((n - 1,),))
        for i in range(len(part)):
            out.append(part[:i] + (part[i] + (n - 1,),) + part[i + 1:])
    return tuple(out)


def cumulant_from_moments(mom, n: int) -> complex:
    """Joint cumulant of ``n`` variables given ``mom(subset_tuple)``."""
    total = 0j
    for part in set_partitions(n):
        k = len(part)
        term = (-1) ** (k - 1) * math.factorial(k - 1)
        for blk in part:
            term *= mom(tuple(sorted(blk)))
        total += term
    return total


def check_circular(c: Constellation, tol: float = 1e-9) -> list[str]:
    """List the symmetry assumptions of the NLI model that ``c`` violates.

    The model keeps only conjugation-balanced cumulants, which requires
    zero odd moments and zero pseudo-covariances.
    """
    issues = []
    scale = max(c.pol_energies().max(), 1e-300)
    comps_all = [(p, cj) for p in (0, 1) for cj in (False, True)]
    for order in (1, 3):
        for combo in itertools.combinations_with_replacement(comps_all, order):
            if abs(joint_moment(c, combo)) > tol * scale ** (order / 2):
                issues.append(f"odd moment {combo} nonzero")
                break
    for combo in itertools.combinations_with_replacement([(0, False), (1, False)], 2):
        if abs(joint_moment(c, combo)) > tol * scale:
            issues.append(f"pseudo-covariance {combo} nonzero")
    return issues


# ----------------------------------------------------------------------------
# probabilistic shaping

def maxwell_boltzmann_ps(base: Constellation, target_entropy: float,
                         name: str | None = None) -> Constellation:
    """Maxwell-Boltzmann probabilities ``p ∝ exp(-λ‖x‖²)`` at a target entropy.

    :param base: uniform base format
    :param target_entropy: bits per N-dim symbol, below ``log2 M``
    """
    hmax = math.log2(base.M)
    if target_entropy >= hmax:
        raise ValueError(f"target entropy {target_entropy} >= log2 M = {hmax}; no shaping needed")
    e = np.sum(base.points**2, axis=1)
    e = e / np.sum(e) * base.M

    def probs_at(lam):
        z = -lam * (e - e.min())
        p = np.exp(z)
        return p / p.sum()

    hmin = entropy(probs_at(1e3))
    if target_entropy <= hmin + 1e-9:
        raise ValueError(f"target entropy {target_entropy} below reachable minimum {hmin:.4f}")
    lo, hi = 0.0, 1.0
    while entropy(probs_at(hi)) > target_entropy:
        hi *= 2
    lam = brentq(lambda l: entropy(probs_at(l)) - target_entropy, lo, hi, xtol=1e-15, rtol=1e-15)
    probs = probs_at(lam)
    logger.debug("MB shaping %s: lambda=%.6g H=%.9f", base.name, lam, entropy(probs))
    return base.with_probs(probs, name or f"PS-{base.name}-{target_entropy:g}")


def quantize_ntype(dist, n: int) -> np.ndarray:
    """Integer composition ``k`` with ``sum(k) = n`` close to ``n * dist`` in KL divergence.

    Largest-remainder rounding followed by single-unit swaps while the
    divergence ``D(k/n || dist)`` decreases.
    """
    p = np.asarray(dist, float)
    if n < 1:
        raise ValueError("blocklength n must be >= 1")
    if p.size == 0:
        raise ValueError("empty distribution")
    p = p / p.sum()
    raw = n * p
    k = np.floor(raw).astype(np.int64)
    rem = n - k.sum()
    if rem:
        order = np.argsort(-(raw - k), kind="stable")
        k[order[:rem]] += 1

    def kl(kk):
        q = kk / n
        m = q > 0
        return float(np.sum(q[m] * np.log(q[m] / p[m]))) if np.all(p[m] > 0) else np.inf

    best = kl(k)
    improved = True
    while improved:
        improved = False
        for i in np.flatnonzero(k > 0):
            for j in range(p.size):
                if i == j or p[j] == 0:
                    continue
                k[i] -= 1
                k[j] += 1
                d = kl(k)
                if d < best - 1e-15:
                    best = d
                    improved = True
                    break
                k[i] += 1
                k[j] -= 1
            if improved:
                break
    return k


def ccdm_rate_loss(dist, n: int) -> float:
    """Rate loss of a constant-composition matcher in bits per amplitude.

    ``R_L = H(dist) - log2(n! / prod k_i!) / n`` with ``k`` the quantized type.
    """
    p = np.asarray(dist, float)
    if p.size == 0:
        raise ValueError("empty distribution")
    if n < 1:
        raise ValueError("blocklength n must be >= 1")
    k = quantize_ntype(p, n)
    log2_mult = (gammaln(n + 1) - np.sum(gammaln(k + 1))) / math.log(2)
    return float(entropy(p / p.sum()) - log2_mult / n)


def amplitude_distribution(c: Constellation) -> tuple[np.ndarray, np.ndarray]:
    """Marginal distribution of ``|x_1|`` (first real dimension)."""
    amp = np.round(np.abs(c.points[:, 0]), 12)
    levels, inv = np.unique(amp, return_inverse=True)
    mass = np.bincount(inv.ravel(), weights=c.probs, minlength=levels.size)
    return levels, mass


# ----------------------------------------------------------------------------
# energy histogram

@dataclass(frozen=True)
class EnergyHistogram:
    energies: np.ndarray
    masses: np.ndarray
    groups: tuple
    mean_energy: float

    def to_csv(self) -> str:
        lines = ["energy,probability,group"]
        for e, p, g in zip(self.energies, self.masses, self.groups):
            lines.append(f"{e:.12g},{p:.12g},{g}")
        return "\n".join(lines) + "\n"


def energy_distribution(c: Constellation) -> EnergyHistogram:
    """Distinct symbol energies with merged probabilities and low/medium/high groups."""
    e = np.sum(c.points**2, axis=1)
    order = np.argsort(e, kind="stable")
    es, ps = e[order], c.probs[order]
    energies, masses = [], []
    for ei, pi in zip(es, ps):
        if energies and abs(ei - energies[-1]) <= ENERGY_MERGE_TOL:
            masses[-1] += pi
        else:
            energies.append(float(ei))
            masses.append(float(pi))
    energies, masses = np.array(energies), np.array(masses)
    Es = c.mean_energy()
    groups = tuple("low" if x < LOW_ENERGY_FRACTION * Es else
                   "high" if x > HIGH_ENERGY_FRACTION * Es else "medium" for x in energies)
    return EnergyHistogram(energies, masses, groups, Es)
