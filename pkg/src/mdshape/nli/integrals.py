"""Reduced frequency integrals of the perturbative NLI model.

Frequencies are normalized to the symbol rate.  Channel ``c`` occupies
``B_c = [c*delta - 1/2, c*delta + 1/2]`` with ``delta`` the spacing over the
symbol rate, and the channel of interest is ``B_0``.  Every integral is
reduced analytically to at most two dimensions using the running integrals
of the link kernel (``G1 = int K``, ``H2 = int int |K|^2``), then evaluated
with composite Gauss-Legendre panels that are graded towards the points
where the kernel argument vanishes.  Resolution is doubled until the
relative change drops below ``tol``.
"""
from __future__ import annotations

import json
import logging
import math
import os
import tempfile
import threading
import time
from functools import cached_property, lru_cache
from pathlib import Path

import numpy as np

from .. import kernels
from ..awgn import NonConvergenceError
from .kernel import LinkKernel

logger = logging.getLogger(__name__)

GL_ORDER = 8
A_TINY = 1e-9  # below this scale factor the kernel argument is treated as zero
# the class-22 integrand oscillates in both outer variables; it is refined to
# the 1% bound required of the link integrals rather than the default tolerance
Q22_TOL = 1e-2
Q22_MAX_LEVEL = 3
# integrals below this fraction of the self-channel GN integral only need
# absolute accuracy relative to it
FLOOR = 1e-3
# bump when a change alters cached integral values
STORE_VERSION = 1
STORE_INTERVAL_S = 5.0


@lru_cache(maxsize=None)
def _gl(order: int = GL_ORDER):
    x, w = np.polynomial.legendre.leggauss(order)
    return 0.5 * (x + 1), 0.5 * w


def panel_rule(edges: np.ndarray):
    """Nodes and weights of composite Gauss-Legendre on sorted panel edges."""
    x, w = _gl()
    h = np.diff(edges)
    nodes = edges[:-1, None] + h[:, None] * x[None, :]
    return nodes.ravel(), (h[:, None] * w[None, :]).ravel()


def graded_edges(lo: float, hi: float, n: int, breaks=(), singular=(), levels: int = 8,
                 ratio: float = 0.2, fine=None) -> np.ndarray:
    """Panel edges on ``[lo, hi]``: about ``n`` uniform panels split at ``breaks``
    and geometrically refined towards each point in ``singular``.

    :param fine: optional ``(half_width, h)``; panels no wider than ``h``
        inside ``[-half_width, half_width]``
    """
    pts = sorted({lo, hi, *[b for b in breaks if lo < b < hi]})
    sing = [s for s in singular if lo - 1e-12 <= s <= hi + 1e-12]
    total = hi - lo
    out = []
    for a, b in zip(pts[:-1], pts[1:]):
        k = max(2, int(math.ceil(n * (b - a) / total)))
        e = list(np.linspace(a, b, k + 1))
        if any(abs(a - s) < 1e-12 for s in sing):
            e += [a + (e[1] - a) * ratio**j for j in range(1, levels + 1)]
        if any(abs(b - s) < 1e-12 for s in sing):
            e += [b - (b - e[-2]) * ratio**j for j in range(1, levels + 1)]
        out += e
    if fine is not None:
        A, h = fine
        a, b = max(lo, -A), min(hi, A)
        if b > a:
            out += list(np.linspace(a, b, int(math.ceil((b - a) / h)) + 1))
    e = np.asarray(out)
    tol = 1e-12 * max(1.0, hi - lo)
    # snap round-off neighbours onto exact break and singular points
    for x in (*pts, *sing):
        e[np.abs(e - x) < tol] = x
    e = np.unique(e)
    return e[np.concatenate([[True], np.diff(e) > tol])]


@lru_cache(maxsize=None)
def unit_template(n: int, levels: int, ratio: float = 0.2):
    """Rule on ``[0, 1]`` graded towards both ends."""
    e = list(np.linspace(0.0, 1.0, n + 1))
    h = 1.0 / n
    e += [h * ratio**j for j in range(1, levels + 1)]
    e += [1 - h * ratio**j for j in range(1, levels + 1)]
    return panel_rule(np.unique(np.asarray(e)))


def _intersect(a0, a1, b0, b1):
    return np.maximum(a0, b0), np.minimum(a1, b1)


def refine(fn, tol: float, start: int = 0, max_level: int = 5, what: str = "integral",
           atol: float = 0.0):
    """Evaluate ``fn(level)`` at increasing levels until two agree within ``tol``
    (relative) or ``atol`` (absolute)."""
    prev = fn(start)
    for level in range(start + 1, max_level + 1):
        cur = fn(level)
        err = abs(cur - prev)
        if err <= max(tol * abs(cur), atol) or err < 1e-300:
            return cur
        prev = cur
    raise NonConvergenceError(f"{what} not converged at level {max_level}: estimate {cur!r}, "
                              f"last change {err:.3g} ({err / max(abs(cur), 1e-300):.2%})")


class KernelIntegrals:
    """Cached NLI integrals for one link and channel grid.

    :param kernel: link kernel with tables covering the grid
    :param delta: channel spacing over symbol rate
    :param tol: relative refinement tolerance
    """

    def __init__(self, kernel, delta: float, tol: float = 2e-3, max_level: int = 5,
                 store: str | os.PathLike | None = None):
        # ``kernel`` may be a zero-argument factory so that a fully cached
        # grid never builds the tables
        self._kernel = kernel
        self.delta = float(delta)
        self.tol = tol
        self.max_level = max_level
        self._cache: dict = {}
        self._lock = threading.Lock()
        self.store = Path(store) if store is not None else None
        self._dirty = False
        self._saved_at = time.monotonic()
        if self.store is not None:
            self._load()

    @cached_property
    def k(self) -> LinkKernel:
        return self._kernel() if callable(self._kernel) else self._kernel

    @classmethod
    def for_link(cls, link, wdm, offsets=None, **kw) -> "KernelIntegrals":
        offsets = wdm.offsets if offsets is None else offsets
        delta = wdm.spacing / wdm.symbol_rate
        span = (max(offsets) - min(offsets)) * delta + 1.0
        wmax = (span + 2.0) ** 2

        def build():
            return LinkKernel(link.alpha, link.beta2, link.span_length, link.num_spans,
                              wdm.symbol_rate, wmax)
        return cls(build, delta, **kw)

    # on-disk store: one JSON object per link and grid, complex values as [re, im]

    def _load(self) -> None:
        try:
            doc = json.loads(self.store.read_text())
        except FileNotFoundError:
            return
        except (OSError, ValueError) as e:
            logger.warning("ignoring unreadable integral cache %s: %s", self.store, e)
            return
        if doc.get("version") != STORE_VERSION:
            return
        for k, v in doc.get("values", []):
            key = tuple(k)
            self._cache[key] = complex(*v) if isinstance(v, list) else float(v)
        logger.debug("loaded %d integrals from %s", len(self._cache), self.store)

    def flush(self) -> None:
        """Write new values to the store (atomic replace; last writer wins)."""
        if self.store is None or not self._dirty:
            return
        with self._lock:
            vals = [[list(k), [v.real, v.imag] if isinstance(v, complex) else v]
                    for k, v in self._cache.items()]
            self._dirty = False
        self.store.parent.mkdir(parents=True, exist_ok=True)
        fd, tmp = tempfile.mkstemp(dir=self.store.parent, suffix=".tmp")
        with os.fdopen(fd, "w") as fh:
            json.dump({"version": STORE_VERSION, "values": vals}, fh, default=int)
        os.replace(tmp, self.store)
        self._saved_at = time.monotonic()

    def _refine(self, fn, key, tol, max_level=None, what=None):
        atol = 0.0
        if key != ("gn", 0, 0, 0):
            atol = tol * FLOOR * self.gn(0, 0, 0)
        return refine(fn, tol, max_level=max_level or self.max_level, what=what or str(key), atol=atol)

    def K0(self) -> complex:
        """Kernel at zero argument, cached with the integrals."""
        return self._cached(("K0",), lambda: complex(self.k.K0))

    def _cached(self, key, fn):
        with self._lock:
            if key in self._cache:
                return self._cache[key]
        t0 = time.perf_counter()
        val = fn()
        logger.debug("%s = %.6g (%.2fs)", key, val if np.isrealobj(val) else abs(val),
                     time.perf_counter() - t0)
        if isinstance(val, (complex, np.complexfloating)):
            val = complex(val)
        elif np.isrealobj(val):
            val = float(val)
        with self._lock:
            self._cache.setdefault(key, val)
            self._dirty = True
        if self.store is not None and time.monotonic() - self._saved_at > STORE_INTERVAL_S:
            self.flush()
        return val

    def _fine(self, xbar: float, level: int):
        """Resolution near a vanishing scale factor ``a``: there ``K(a x)`` with
        ``|x| <= xbar`` is not averaged over the phased-array period ``P`` and
        its peaks, of width ``P / N_s``, must be resolved in ``a``."""
        P = self.k.G.P
        width = P / max(self.k.N, 1)
        return 3.0 * P, width / (2.0 * xbar) / 2**level

    def band(self, c):
        return c * self.delta - 0.5, c * self.delta + 0.5

    # --- GN-type: |K|^2 over two free frequencies ---------------------------------
    def gn(self, c1: int, c2: int, c3: int) -> float:
        """``int |K(w)|^2`` over ``f1 in B_c1, f2 in B_c2, f3 in B_c3, f1-f2+f3 in B_0``."""
        key = ("gn",) + ((c3, c2, c1) if (c3, c2, c1) < (c1, c2, c3) else (c1, c2, c3))
        return self._cached(key, lambda: self._refine(lambda l: self._gn(*key[1:], l), key, self.tol,
                                                      what=f"GN{key[1:]}"))

    def _gn(self, c1, c2, c3, level):
        d = self.delta
        lo = max((c1 - c2) * d - 1, -c3 * d - 1)
        hi = min((c1 - c2) * d + 1, -c3 * d + 1)
        if hi <= lo:
            return 0.0
        n = 24 * 2**level
        xbar = max(abs(c3 - c2), abs(c1 - c2)) * d + 1.0
        e = graded_edges(lo, hi, n, breaks=((c1 - c2) * d, -c3 * d, 0.0), singular=(0.0,),
                         levels=6 + 2 * level, fine=self._fine(xbar, level))
        a, wa = panel_rule(e)
        b1lo, b1hi = self.band(c1)
        b2lo, b2hi = self.band(c2)
        b3lo, b3hi = self.band(c3)
        p0, p1 = _intersect(b2lo, b2hi, b1lo - a, b1hi - a)
        q0, q1 = _intersect(b3lo, b3hi, -0.5 - a, 0.5 - a)
        ok = (p1 > p0) & (q1 > q0)
        H2 = self.k.H2
        f = (H2(a * (q1 - p0)) - H2(a * (q1 - p1)) - H2(a * (q0 - p0)) + H2(a * (q0 - p1))).real / (a * a)
        tiny = np.abs(a) < A_TINY
        f = np.where(tiny, self.k.K0**2 * (p1 - p0) * (q1 - q0), f)
        return float(np.sum(np.where(ok, f, 0.0) * wa))

    # --- fourth-order: pair + 4-block --------------------------------------------
    def quad4(self, c: int, d: int) -> float:
        """``int db int df1 |int df2 K((f1-f2) b)|^2`` with ``f1 in B_c`` and
        ``f2, f2+b in B_d``; shared by the pair classes 11, 33, 13 and 31."""
        key = ("q", c, d)
        return self._cached(key, lambda: self._refine(lambda l: self._quad4(c, d, l), key, self.tol,
                                                      what=f"Q{key[1:]}"))

    def _quad4(self, c, d, level):
        dl = self.delta
        lo, hi = max(-1.0, -c * dl - 1), min(1.0, -c * dl + 1)
        if hi <= lo:
            return 0.0
        xbar = abs(c - d) * dl + 1.0
        e = graded_edges(lo, hi, 16 * 2**level, breaks=(0.0, -c * dl), singular=(0.0,),
                         levels=6 + 2 * level, fine=self._fine(xbar, level))
        b, wb = panel_rule(e)
        b = b[:, None]
        clo, chi = self.band(c)
        dlo, dhi = self.band(d)
        n0, n1 = _intersect(clo, chi, -0.5 - b, 0.5 - b)
        q0, q1 = _intersect(dlo, dhi, dlo - b, dhi - b)
        t, wt = unit_template(8 * 2**level, 5 + 2 * level)
        total = np.zeros(b.shape[0])
        G1 = self.k.G1
        # inner pieces split where the kernel argument vanishes
        cuts = np.sort(np.concatenate([n0, n1, np.clip(q0, n0, n1), np.clip(q1, n0, n1)], axis=1), axis=1)
        for j in range(3):
            a0, a1 = cuts[:, j:j + 1], cuts[:, j + 1:j + 2]
            L = np.maximum(a1 - a0, 0.0)
            f1 = a0 + L * t[None, :]
            J = (G1(b * (f1 - q0)) - G1(b * (f1 - q1))) / b
            total += np.sum(np.abs(J) ** 2 * wt[None, :], axis=1) * L[:, 0]
        total = np.where((q1 > q0)[:, 0] & (n1 > n0)[:, 0], total, 0.0)
        return float(np.sum(total * wb))

    def quad22(self, c: int, d: int) -> float:
        """Class 22: ``int df2 int dS |int dt K((S/2-f2)^2 - t^2)|^2`` with
        ``S/2 +- t in B_c``, ``f2 in B_d``, ``S - f2 in B_0``."""
        key = ("q22", c, d)
        return self._cached(key, lambda: self._refine(
            lambda l: self._quad22(c, d, l), key, max(self.tol, Q22_TOL),
            max_level=min(self.max_level, Q22_MAX_LEVEL), what=f"Q22{key[1:]}"))

    def _quad22(self, c, d, level):
        dl = self.delta
        dlo, dhi = self.band(d)
        slo, shi = 2 * c * dl - 1, 2 * c * dl + 1
        lo, hi = max(dlo, slo - 0.5), min(dhi, shi + 0.5)
        if hi <= lo:
            return 0.0
        e2 = graded_edges(lo, hi, 6 * 2**level, breaks=(slo - 0.5, shi + 0.5))
        f2, w2 = panel_rule(e2)
        t, wt = unit_template(6 * 2**level, 3 + level)
        f2 = f2[:, None]
        s0, s1 = np.maximum(slo, f2 - 0.5), np.minimum(shi, f2 + 0.5)
        total = 0.0
        nt = 128 * 2**level
        # the inner |t| range shrinks to zero at S = 2 c delta +- 1 and kinks at 2 c delta
        mid = np.clip(2 * c * dl, s0, s1)
        for a0, a1 in ((s0, mid), (mid, s1)):
            L = np.maximum(a1 - a0, 0.0)
            S = a0 + L * t[None, :]
            m = S / 2 - f2
            tau = np.maximum(0.5 - np.abs(S / 2 - c * dl), 0.0)
            J = self.path_integral(m * m, tau, nt)
            total += np.sum(np.sum(np.abs(J) ** 2 * wt[None, :], axis=1) * L[:, 0] * w2)
        return float(total)

    def path_integral(self, m2, tau, nt):
        """``2 int_0^tau K(m2 - t^2) dt`` by exact kernel integrals on ``nt`` segments."""
        return kernels.path_integral(self.k.G1, self.k.G2, self.k.K, np.asarray(m2, float),
                                     np.asarray(tau, float), int(nt), self.k.G.P / 32)

    # --- sixth order and projection ----------------------------------------------
    def _j_self(self, c, f, level):
        """``J_c(f) = int K((f1-f2)(f3-f2))`` over ``f1,f2,f3 in B_c`` with ``f1-f2+f3 = f``."""
        clo, chi = self.band(c)
        f = np.asarray(f, float)[:, None]
        a0, a1 = f - chi, f - clo
        t, wt = unit_template(8 * 2**level, 5 + 2 * level)
        out = np.zeros(f.shape[0], complex)
        G1 = self.k.G1
        mid = np.clip(0.0, a0, a1)
        for s0, s1 in ((a0, mid), (mid, a1)):
            L = np.maximum(s1 - s0, 0.0)
            a = s0 + L * t[None, :]
            blo = np.maximum(f - chi, f - a - chi)
            bhi = np.minimum(f - clo, f - a - clo)
            J = np.where(bhi > blo, (G1(a * bhi) - G1(a * blo)) / a, 0.0)
            out += np.sum(J * wt[None, :], axis=1) * L[:, 0]
        return out

    def _f_rule(self, c, level):
        clo, chi = self.band(c)
        lo, hi = max(-0.5, clo - 1.0), min(0.5, chi + 1.0)
        if hi <= lo:
            return None
        e = graded_edges(lo, hi, 12 * 2**level, breaks=(clo, chi), singular=(clo, chi),
                         levels=4 + level)
        return panel_rule(e)

    def sixth(self, c: int) -> float:
        """``int_{B_0} |J_c(f)|^2 df``."""
        key = ("s6", c)

        def at(level):
            rule = self._f_rule(c, level)
            if rule is None:
                return 0.0
            f, wf = rule
            return float(np.sum(np.abs(self._j_self(c, f, level)) ** 2 * wf))
        return self._cached(key, lambda: self._refine(at, ("s6", c), self.tol))

    def projection(self) -> complex:
        """``int_{B_0} J_0(f) df``."""
        def at(level):
            f, wf = self._f_rule(0, level)
            return complex(np.sum(self._j_self(0, f, level) * wf))
        return self._cached(("p4",), lambda: self._refine(at, ("p4",), self.tol))
