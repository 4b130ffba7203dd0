"""Link kernel of the first-order perturbation model and its running integrals.

With normalized frequencies (units of the symbol rate) the four-wave-mixing
efficiency of a triplet depends only on ``w = (f1 - f2)(f3 - f2)``:

    K(w) = (1 - exp((-alpha + j theta) L)) / (alpha - j theta) * sum_s exp(j s theta L)

with ``theta = -4 pi^2 beta2 Rs^2 w``.  ``K`` is the product of a smooth
factor ``g(w) = 1/(alpha - j theta)`` and a factor that is periodic in
``x = theta L``.  Running integrals are computed on two scales: a fine
piecewise-linear table near ``w = 0`` and, further out, exact one-period
tables of the periodic factor combined with a local quadratic model of ``g``.
"""
from __future__ import annotations

import logging
import math

import numpy as np

from .. import kernels

logger = logging.getLogger(__name__)


class PLCumulative:
    """First and second running integrals of a piecewise-linear function.

    :param x0: first node
    :param h: node spacing
    :param f: node values (real or complex)
    :param origin: abscissa where both integrals vanish (must be a node)
    """

    def __init__(self, x0: float, h: float, f: np.ndarray, origin: float | None = None):
        self.x0, self.h = float(x0), float(h)
        self.f = np.asarray(f)
        n = self.f.size
        f = self.f
        i0 = 0
        if origin is not None:
            i0 = int(round((origin - x0) / h))
            if not 0 <= i0 < n or abs(x0 + i0 * h - origin) > 1e-9 * max(1.0, abs(origin)):
                raise ValueError("origin must coincide with a node")
        inc1 = h * 0.5 * (f[:-1] + f[1:])
        # accumulate outwards from the origin so values near it keep relative precision
        F1 = np.zeros(n, dtype=np.result_type(f, float))
        F1[i0 + 1:] = np.cumsum(inc1[i0:])
        F1[:i0] = -np.cumsum(inc1[:i0][::-1])[::-1]
        up = h * F1[:-1] + h * h * (f[:-1] / 3.0 + f[1:] / 6.0)
        down = -h * F1[1:] + h * h * (f[1:] / 3.0 + f[:-1] / 6.0)  # F2[i] - F2[i+1]
        F2 = np.zeros_like(F1)
        F2[i0 + 1:] = np.cumsum(up[i0:])
        F2[:i0] = np.cumsum(down[:i0][::-1])[::-1]
        self.F1, self.F2 = F1, F2

    @property
    def x1(self) -> float:
        return self.x0 + (self.f.size - 1) * self.h

    def _cell(self, x):
        t = (np.asarray(x, float) - self.x0) / self.h
        i = np.clip(np.floor(t).astype(np.int64), 0, self.f.size - 2)
        return i, (t - i) * self.h

    def value(self, x):
        i, s = self._cell(x)
        return self.f[i] + (self.f[i + 1] - self.f[i]) * (s / self.h)

    def first(self, x):
        i, s = self._cell(x)
        f0 = self.f[i]
        return self.F1[i] + s * (f0 + (self.f[i + 1] - f0) * s / (2 * self.h))

    def second(self, x):
        i, s = self._cell(x)
        f0 = self.f[i]
        return self.F2[i] + s * (self.F1[i] + s * (f0 / 2 + (self.f[i + 1] - f0) * s / (6 * self.h)))


class TwoScaleCumulative:
    """Running integrals of ``f(w) = g(w) p(kappa w)`` with ``p`` 2π-periodic.

    :param g: callable returning ``(g, g', g'')`` at given abscissae
    :param p: callable on ``x`` (periodic with period 2π)
    :param kappa: phase per unit ``w`` (rad)
    :param wmax: half-width of the supported range
    :param wcore: half-width of the fine central table
    :param pts_per_period: resolution of the periodic tables
    """

    def __init__(self, g, p, kappa: float, wmax: float, wcore: float, pts_per_period: int):
        self.g, self.p = g, p
        self.P = 2 * math.pi / abs(kappa)
        P = self.P
        self.k0 = max(1, int(math.ceil(wcore / P)))
        self.wcore = self.k0 * P
        self.K = max(self.k0, int(math.ceil(wmax / P)) + 1)
        n = int(pts_per_period)
        h = P / n
        ncore = 2 * self.k0 * n + 1
        wc = -self.wcore + h * np.arange(ncore)
        fc = g(wc)[0] * p(kappa * wc)
        self.core = PLCumulative(-self.wcore, h, fc, origin=0.0)
        v = h * np.arange(n + 1)
        base = p(kappa * v)
        self.per = [PLCumulative(0.0, h, base * (v - P / 2) ** j) for j in range(3)]
        self.kappa = kappa
        self._build_outer()

    def _build_outer(self):
        P, k0, K = self.P, self.k0, self.K
        kk = np.arange(-K, K)
        mid = (kk + 0.5) * P
        g0, g1, g2 = self.g(mid)
        c = [g0, g1, 0.5 * g2]
        I1 = [t.first(P) for t in self.per]
        I2 = [t.second(P) for t in self.per]
        inc1 = c[0] * I1[0] + c[1] * I1[1] + c[2] * I1[2]
        inc2b = c[0] * I2[0] + c[1] * I2[1] + c[2] * I2[2]
        C1 = np.zeros(2 * K + 1, dtype=np.result_type(inc1, complex if np.iscomplexobj(inc1) else float))
        C2 = np.zeros_like(C1)
        ip = K + k0  # index of period starting at +wcore
        C1[ip] = self.core.first(self.wcore)
        C2[ip] = self.core.second(self.wcore)
        for i in range(ip, 2 * K):
            C1[i + 1] = C1[i] + inc1[i]
            C2[i + 1] = C2[i] + C1[i] * P + inc2b[i]
        im = K - k0
        C1[im] = self.core.first(-self.wcore)
        C2[im] = self.core.second(-self.wcore)
        for i in range(im - 1, -1, -1):
            C1[i] = C1[i + 1] - inc1[i]
            C2[i] = C2[i + 1] - C1[i] * P - inc2b[i]
        self.C1, self.C2, self.coef = C1, C2, c
        per = self.per
        self.real = not np.iscomplexobj(C1)
        z = (lambda a: np.ascontiguousarray(a, complex)) if kernels.BACKEND == "cython" else np.asarray
        self._tables = (self.core.x0, self.core.h, z(self.core.f), z(self.core.F1), z(self.core.F2),
                        per[0].h, z(np.stack([t.f for t in per])), z(np.stack([t.F1 for t in per])),
                        z(np.stack([t.F2 for t in per])), z(C1), z(C2), z(np.stack(c)),
                        self.P, self.K, self.wcore)

    def _eval(self, w, order):
        out = kernels.two_scale_eval(w, order, *self._tables)
        return out.real if self.real and np.iscomplexobj(out) else out

    def value(self, w):
        w = np.asarray(w, float)
        return self.g(w)[0] * self.p(self.kappa * w)

    def first(self, w):
        return self._eval(w, 1)

    def second(self, w):
        return self._eval(w, 2)


def dirichlet(x: np.ndarray, n: int) -> np.ndarray:
    """``sum_{s<n} exp(j s x)``."""
    x = np.asarray(x, float)
    half = np.sin(0.5 * x)
    small = np.abs(half) < 1e-9
    ratio = np.sin(0.5 * n * x) / np.where(small, 1.0, half)
    return np.where(small, float(n), np.exp(0.5j * (n - 1) * x) * ratio)


def dirichlet_power(x: np.ndarray, n: int) -> np.ndarray:
    x = np.asarray(x, float)
    half = np.sin(0.5 * x)
    small = np.abs(half) < 1e-9
    ratio = np.sin(0.5 * n * x) / np.where(small, 1.0, half)
    return np.where(small, float(n * n), ratio * ratio)


class LinkKernel:
    """Kernel ``K(w)`` of a homogeneous multi-span link in normalized units.

    :param alpha: power attenuation (1/m)
    :param beta2: group-velocity dispersion (s^2/m)
    :param span_length: span length (m)
    :param num_spans: number of identical spans
    :param symbol_rate: normalization rate (Hz)
    :param wmax: largest ``|w|`` that will be queried
    """

    def __init__(self, alpha: float, beta2: float, span_length: float, num_spans: int,
                 symbol_rate: float, wmax: float, resolution: int = 64):
        self.alpha, self.beta2, self.L, self.N = alpha, beta2, span_length, int(num_spans)
        self.Rs = symbol_rate
        self.b = -4 * math.pi**2 * beta2 * symbol_rate**2  # theta per unit w (rad/m)
        if self.b == 0:
            raise ValueError("dispersionless links are not supported by the kernel tables")
        self.kappa = self.b * self.L
        self.leff = -math.expm1(-alpha * span_length) / alpha
        self.rho = math.exp(-alpha * span_length)
        self.K0 = self.N * self.leff
        period = 2 * math.pi / abs(self.kappa)
        lorentz = alpha / abs(self.b)
        wcore = min(max(60 * lorentz, 24 * period), max(wmax, 24 * period))
        pts = max(256, resolution * self.N)
        a, b, N, rho = alpha, self.b, self.N, self.rho

        def g_k(w):
            d = a - 1j * b * w
            return 1 / d, 1j * b / d**2, -2 * b * b / d**3

        def p_k(x):
            return (1 - rho * np.exp(1j * x)) * dirichlet(x, N)

        def g_k2(w):
            q = a * a + b * b * w * w
            return 1 / q, -2 * b * b * w / q**2, (6 * b**4 * w * w - 2 * b * b * a * a) / q**3

        def p_k2(x):
            return (1 + rho * rho - 2 * rho * np.cos(x)) * dirichlet_power(x, N)

        self.wmax = float(wmax)
        self.G = TwoScaleCumulative(g_k, p_k, self.kappa, wmax, wcore, pts)
        self.H = TwoScaleCumulative(g_k2, p_k2, self.kappa, wmax, wcore, pts)
        logger.debug("kernel tables: period %.3g, core %.3g, %d pts/period, wmax %.3g",
                     period, self.G.wcore, pts, wmax)

    def K(self, w):
        w = np.asarray(w, float)
        th = self.b * w
        d = self.alpha - 1j * th
        return (1 - self.rho * np.exp(1j * th * self.L)) / d * dirichlet(th * self.L, self.N)

    def K2(self, w):
        return np.abs(self.K(w)) ** 2

    def G1(self, w):
        """``int_0^w K``."""
        return self.G.first(w)

    def G2(self, w):
        """``int_0^w int_0^u K``."""
        return self.G.second(w)

    def H1(self, w):
        return self.H.first(w)

    def H2(self, w):
        """``int_0^w int_0^u |K|^2``."""
        return self.H.second(w)
