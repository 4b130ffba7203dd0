"""Moment weights of the perturbative NLI terms.

The first-order NLI field at the receiver is a sum of products
``a_p(f1) a_p*(f2) a_q(f3)`` over the polarization index ``p``.  Its
variance pairs one such product with the conjugate of another, giving six
symbol slots::

    1: (p, -)   2: (p, *)   3: (q, -)   1': (p', *)   2': (p', -)   3': (q, *)

For circularly symmetric formats only cumulant blocks with as many
conjugated as plain slots survive.  Blocks that join slots of the same
product (``{1,2}``, ``{2,3}``, ``{1',2'}``, ``{2',3'}``) only shift the mean
field and are handled separately.  What remains are the eight partition
classes listed in :data:`PARTITIONS`; their weights
``W_q = sum_{p,p'} prod_B kappa_B`` are computed from the joint cumulants of
the unit-energy format.
"""
from __future__ import annotations

import itertools
from functools import lru_cache

import numpy as np

from ..constellation import (Constellation, ConstellationError, check_circular,
                             cumulant_from_moments, joint_moment)

SLOTS = ("1", "2", "3", "1'", "2'", "3'")

#: partition class -> blocks of slots; the kernel integral attached to each
#: class is selected in :mod:`mdshape.nli.model`
PARTITIONS = {
    "gn_direct": (("1", "1'"), ("2", "2'"), ("3", "3'")),
    "gn_swap": (("1", "3'"), ("3", "1'"), ("2", "2'")),
    "q11": (("1", "1'"), ("2", "3", "2'", "3'")),
    "q33": (("3", "3'"), ("1", "2", "1'", "2'")),
    "q13": (("1", "3'"), ("3", "2", "1'", "2'")),
    "q31": (("3", "1'"), ("1", "2", "3'", "2'")),
    "q22": (("2", "2'"), ("1", "3", "1'", "3'")),
    "s6": (SLOTS,),
}
GN_CLASSES = ("gn_direct", "gn_swap")


def _slot_comp(slot: str, p: int, pp: int, q: int):
    return {"1": (p, False), "2": (p, True), "3": (q, False),
            "1'": (pp, True), "2'": (pp, False), "3'": (q, True)}[slot]


class FormatCumulants:
    """Joint cumulants of a format's polarization components.

    :param c: constellation (scaled internally to unit total energy)
    :param independent_pols: zero every cumulant that mixes polarizations,
        which is the dual-polarization EGN treatment
    """

    def __init__(self, c: Constellation, independent_pols: bool = False, tol: float = 1e-9):
        issues = check_circular(c, tol=1e-7)
        if issues:
            raise ConstellationError(
                f"{c.name}: NLI model requires zero-mean circular formats ({'; '.join(issues)})")
        self.c = c
        self.energy = c.mean_energy() if c.dims > 2 else 2 * c.mean_energy()
        self.independent = independent_pols
        self.name = c.name + (" [indep. pol]" if independent_pols else "")

    @lru_cache(maxsize=None)
    def _moment(self, comps: tuple) -> complex:
        return joint_moment(self.c, comps) / self.energy ** (len(comps) / 2)

    @lru_cache(maxsize=None)
    def cumulant(self, comps: tuple) -> complex:
        comps = tuple(sorted(comps))
        if self.independent and len({p for p, _ in comps}) > 1:
            return 0j
        if sum(cj for _, cj in comps) * 2 != len(comps):
            return 0j
        return cumulant_from_moments(lambda idx: self._moment(tuple(comps[i] for i in idx)), len(comps))

    def covariance(self, i: int, j: int) -> complex:
        """``E[a_i a_j*]`` of the unit-energy format."""
        return self.cumulant(((i, False), (j, True)))


class GaussianCumulants:
    """Circular Gaussian symbols with a given 2x2 covariance ``E[a_i a_j*]``."""

    def __init__(self, cov, name: str = "gaussian"):
        cov = np.asarray(cov, complex)
        if cov.shape != (2, 2) or not np.allclose(cov, cov.conj().T):
            raise ValueError("covariance must be a Hermitian 2x2 matrix")
        self.cov = cov / np.real(np.trace(cov))
        self.name = name
        self.independent = False

    def cumulant(self, comps: tuple) -> complex:
        if len(comps) != 2:
            return 0j
        (i, ci), (j, cj) = comps
        if ci == cj:
            return 0j
        return complex(self.cov[j, i] if ci else self.cov[i, j])

    def covariance(self, i: int, j: int) -> complex:
        return complex(self.cov[i, j])


class MomentCumulants:
    """Cumulants up to fourth order rebuilt from a :class:`ModulationMoments` vector.

    The vector has no entries for moments such as ``E{|a_x|^2 a_x a_y*}``;
    those are taken as zero.  Moments are used as given (no renormalization).
    """

    def __init__(self, mom, name: str = "moments"):
        self.m = mom
        self.name = name
        self.independent = False

    def _moment(self, comps) -> complex:
        key = [0, 0, 0, 0]  # x, x*, y, y*
        for p, cj in comps:
            key[2 * p + int(cj)] += 1
        m = self.m
        table = {
            (0, 0, 0, 0): 1.0,
            (1, 1, 0, 0): m.ax2, (0, 0, 1, 1): m.ay2,
            (1, 0, 0, 1): m.ax_ayc, (0, 1, 1, 0): np.conj(m.ax_ayc),
            (2, 2, 0, 0): m.ax4, (0, 0, 2, 2): m.ay4, (1, 1, 1, 1): m.ax2ay2,
            (2, 0, 0, 2): m.ax2_ayc2, (0, 2, 2, 0): np.conj(m.ax2_ayc2),
            (3, 3, 0, 0): m.ax6, (0, 0, 3, 3): m.ay6,
            (2, 2, 1, 1): m.ax4ay2, (1, 1, 2, 2): m.ax2ay4,
        }
        return complex(table.get(tuple(key), 0.0))

    @lru_cache(maxsize=None)
    def cumulant(self, comps: tuple) -> complex:
        comps = tuple(sorted(comps))
        if sum(cj for _, cj in comps) * 2 != len(comps):
            return 0j
        return cumulant_from_moments(lambda idx: self._moment([comps[i] for i in idx]), len(comps))

    def covariance(self, i: int, j: int) -> complex:
        return self.cumulant(((i, False), (j, True)))


def as_cumulants(c, independent_pols: bool = False):
    if isinstance(c, Constellation):
        return FormatCumulants(c, independent_pols)
    if independent_pols and not getattr(c, "independent", False):
        raise ValueError("independent-polarization path needs a Constellation")
    return c


def partition_weight(src, name: str, q: int) -> complex:
    """``sum_{p,p'} prod_B kappa_B`` for one partition class and output pol ``q``."""
    total = 0j
    for p, pp in itertools.product((0, 1), repeat=2):
        term = 1 + 0j
        for blk in PARTITIONS[name]:
            term *= src.cumulant(tuple(_slot_comp(s, p, pp, q) for s in blk))
            if term == 0:
                break
        total += term
    return total


def projection_weight(src, q: int, r: int) -> complex:
    """``sum_p kappa(a_p, a_p*, a_q, a_r*)``, the fourth-order overlap with ``a_r``."""
    return sum(src.cumulant(((p, False), (p, True), (q, False), (r, True))) for p in (0, 1))


def all_weights(src, q: int) -> dict:
    return {name: partition_weight(src, name, q) for name in PARTITIONS}
