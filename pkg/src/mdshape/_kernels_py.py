"""Pure numpy implementations of the hot kernels.

Used when the compiled extension is unavailable or disabled through
``MDSHAPE_PURE_PYTHON=1``.  Signatures match :mod:`mdshape._kernels`.
"""
from __future__ import annotations

import numpy as np

CHUNK = 4096


def air_terms(y, idx, points, logp, bits, inv2s2):
    """Per-sample conditional-entropy terms in nats.

    :param y: ``(S, N)`` received samples
    :param idx: ``(S,)`` index of the transmitted point
    :param points: ``(M, N)`` constellation
    :param logp: ``(M,)`` log prior
    :param bits: ``(M, m)`` 0/1 label matrix or an empty ``(M, 0)`` array
    :param inv2s2: ``1 / (2 sigma^2)``
    :returns: ``(hx, hb)`` with ``hx = -log P(x|y)`` and
        ``hb = -sum_i log P(b_i|y)``
    """
    y = np.ascontiguousarray(y, float)
    idx = np.asarray(idx, np.int64)
    S = y.shape[0]
    hx = np.empty(S)
    hb = np.zeros(S)
    B = np.asarray(bits, float)
    m = B.shape[1]
    x2 = np.sum(points**2, axis=1)
    for s0 in range(0, S, CHUNK):
        ys = y[s0:s0 + CHUNK]
        ii = idx[s0:s0 + CHUNK]
        d2 = np.sum(ys**2, axis=1)[:, None] - 2.0 * ys @ points.T + x2[None, :]
        l = logp[None, :] - inv2s2 * d2
        mx = l.max(axis=1, keepdims=True)
        e = np.exp(l - mx)
        den = mx[:, 0] + np.log(e.sum(axis=1))
        rows = np.arange(ys.shape[0])
        li = l[rows, ii]
        # log1p form keeps the tail probability when it is below the rounding of 1
        top = li >= mx[:, 0]
        oth = e.sum(axis=1, where=np.arange(e.shape[1])[None, :] != ii[:, None])
        hx[s0:s0 + CHUNK] = np.where(top, np.log1p(oth), den - li)
        if m:
            s1 = e @ B
            s0_ = e @ (1.0 - B)
            own = B[ii]
            own_sum = np.where(own > 0.5, s1, s0_)
            with np.errstate(divide="ignore"):
                num = mx + np.log(own_sum)
            num = np.maximum(num, li[:, None])
            hb[s0:s0 + CHUNK] = np.sum(den[:, None] - num, axis=1)
    return hx, hb


def pl_eval(x0, h, f, F1, F2, x, order):
    """Value (order 0) or first/second running integral of a piecewise-linear table."""
    t = (np.asarray(x, float) - x0) / h
    i = np.clip(np.floor(t).astype(np.int64), 0, f.size - 2)
    s = (t - i) * h
    f0 = f[i]
    df = f[i + 1] - f0
    if order == 0:
        return f0 + df * (s / h)
    if order == 1:
        return F1[i] + s * (f0 + df * s / (2 * h))
    return F2[i] + s * (F1[i] + s * (f0 / 2 + df * s / (6 * h)))


def two_scale_eval(w, order, core_x0, core_h, core_f, core_F1, core_F2,
                   per_h, per_f, per_F1, per_F2, C1, C2, coef, P, K, wcore):
    """Running integral (order 1 or 2) of a two-scale table at ``w``.

    Inside ``|w| <= wcore`` the central table is used; outside, the value at
    the start of the period plus the local quadratic model of the smooth
    factor applied to the one-period tables ``per_*[j]``.
    """
    w = np.asarray(w, float)
    k = np.clip(np.floor(w / P).astype(np.int64), -K, K - 1)
    idx = k + K
    y = w - k * P
    out = C1[idx] if order == 1 else C2[idx] + C1[idx] * y
    for j in range(3):
        out = out + coef[j][idx] * pl_eval(0.0, per_h, per_f[j], per_F1[j], per_F2[j], y, order)
    core = np.abs(w) <= wcore
    if np.any(core):
        inner = pl_eval(core_x0, core_h, core_f, core_F1, core_F2, np.where(core, w, 0.0), order)
        out = np.where(core, inner, out)
    return out


def path_integral(G1, G2, K, m2, tau, nt, dw_min=0.0):
    """Integral of ``K(m2 - t^2)`` over ``t in [-tau, tau]`` for many ``(m2, tau)``.

    On each of ``nt`` uniform segments in ``t`` the Jacobian ``dt/dw`` is
    replaced by a linear function of ``w`` (secant slope plus the secant of
    its derivative), which is integrated against the kernel exactly through
    its first and second running integrals.  Segments spanning less than
    ``dw_min`` in ``w`` skip the slope term, whose moment would be lost to
    cancellation; a midpoint value is used where the ``w`` range vanishes.

    :param G1: running integral of the kernel (vectorized callable)
    :param G2: second running integral of the kernel
    :param K: kernel (vectorized callable)
    :returns: complex array shaped like ``m2``
    """
    m2 = np.asarray(m2, float)
    tau = np.broadcast_to(np.asarray(tau, float), m2.shape)
    shape = m2.shape
    m2 = m2.ravel()
    tau = tau.ravel()
    u = np.linspace(0.0, 1.0, nt + 1)
    out = np.empty(m2.size, dtype=complex)
    blk = max(1, 200000 // (nt + 1))
    for s in range(0, m2.size, blk):
        t = tau[s:s + blk, None] * u[None, :]
        w = m2[s:s + blk, None] - t * t
        g1 = G1(w)
        g2 = G2(w)
        w0, w1 = w[:, :-1], w[:, 1:]
        dw = w1 - w0
        dt = np.diff(t, axis=1)
        small = np.abs(dw) < 1e-13
        dws = np.where(small, 1.0, dw)
        # dt/dw = -1/(2t); slope of that between the segment ends, zero on the first segment
        with np.errstate(divide="ignore", invalid="ignore"):
            jp = -0.5 / t
            slope = np.where((t[:, :-1] > 0) & (np.abs(dw) > dw_min), (jp[:, 1:] - jp[:, :-1]) / dws, 0.0)
        wm = 0.5 * (w0 + w1)
        mom = (w1 - wm) * g1[:, 1:] - (w0 - wm) * g1[:, :-1] - (g2[:, 1:] - g2[:, :-1])
        seg = (g1[:, 1:] - g1[:, :-1]) / dws * dt + slope * mom
        if np.any(small):
            seg[small] = K(wm[small]) * dt[small]
        out[s:s + blk] = 2.0 * seg.sum(axis=1)
    return out.reshape(shape)
