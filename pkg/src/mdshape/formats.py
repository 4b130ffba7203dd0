"""Built-in format library and lookup of user-supplied point files."""
from __future__ import annotations

import logging
import math
import os
from functools import lru_cache
from pathlib import Path

import numpy as np

from .constellation import (Constellation, load_constellation, maxwell_boltzmann_ps,
                            normalize_unit_energy_per_pol, pm_product, save_constellation,
                            square_qam)

logger = logging.getLogger(__name__)

DATA_DIR = Path(__file__).with_name("formats_data")
USER_DIR_ENV = "MDSHAPE_FORMAT_DIR"

# formats the library knows about but cannot ship; files come from the user
EXTERNAL_FORMATS = {
    "4d-64prs": 4, "c4-16": 4, "c4-64": 4, "c4-1024": 4, "gs-awgn-4d-64": 4,
    "dsq2-8": 2, "hepta2-8": 2, "gs-awgn-2d-32": 2, "4d-os1024": 4, "nl-4d-1024": 4,
    "so-pm-qpsk": 4,
}

SHIPPED = ("qpsk", "8qam", "16qam", "32qam", "64qam",
           "pmqpsk", "pm8qam", "pm16qam", "pm32qam", "pm64qam", "pc32-asym")

# probabilistically shaped formats: name -> (base, entropy in bits per 4D)
SHAPED = {
    "ps16qam-6.4": ("pm16qam", 6.4),
    "ps64qam-8.8": ("pm64qam", 8.8),
    "ps64qam-10.4": ("pm64qam", 10.4),
}


class UnknownFormatError(KeyError):
    pass


def star_8qam() -> Constellation:
    """4+4 star 8QAM with outer/inner radius ratio (1+sqrt 3)/sqrt 2."""
    r2 = (1 + math.sqrt(3)) / math.sqrt(2)
    ang_in = np.deg2rad([0, 90, 180, 270])
    ang_out = np.deg2rad([45, 135, 225, 315])
    pts = np.concatenate([np.c_[np.cos(ang_in), np.sin(ang_in)],
                          r2 * np.c_[np.cos(ang_out), np.sin(ang_out)]])
    pts[np.abs(pts) < 1e-15] = 0.0
    labels = np.array([0, 6, 5, 3, 4, 7, 1, 2])
    return Constellation(pts, labels, np.full(8, 1 / 8), "8QAM")


_CROSS32 = """
-3 -5 00000; -1 -5 00001; 1 -5 10001; 3 -5 10000;
-5 -3 00100; -3 -3 01100; -1 -3 01000; 1 -3 11000; 3 -3 11100; 5 -3 10100;
-5 -1 00101; -3 -1 01101; -1 -1 01001; 1 -1 11001; 3 -1 11101; 5 -1 10101;
-5 1 00111; -3 1 01111; -1 1 01011; 1 1 11011; 3 1 11111; 5 1 10111;
-5 3 00110; -3 3 01110; -1 3 01010; 1 3 11010; 3 3 11110; 5 3 10110;
-3 5 00010; -1 5 00011; 1 5 10011; 3 5 10010
"""


def cross_32qam() -> Constellation:
    """Cross 32QAM (6x6 grid minus corners) with a folded Gray labeling."""
    rows = [r.split() for r in _CROSS32.replace("\n", " ").split(";") if r.strip()]
    pts = np.array([[float(a), float(b)] for a, b, _ in rows])
    labels = np.array([int(l, 2) for _, _, l in rows])
    return Constellation(pts, labels, np.full(32, 1 / 32), "32QAM")


def qpsk() -> Constellation:
    return square_qam(4, "QPSK")


def polarization_correlated_32(rings=((0.8, 1.6), (1.4, 0.9))) -> Constellation:
    """Two 4D shells of QPSK x QPSK whose per-polarization radii are tied.

    The energies of the two polarizations are correlated and unequal, so the
    cross-polarization cumulants of the NLI model do not vanish.
    """
    q = np.array([[1, 1], [-1, 1], [-1, -1], [1, -1]], float) / math.sqrt(2.0)
    pts = [np.concatenate([ra * qx, rb * qy]) for ra, rb in rings for qx in q for qy in q]
    pts = np.array(pts)
    pts *= math.sqrt(2.0 / np.mean(np.sum(pts**2, axis=1)))
    n = len(pts)
    return Constellation(pts, np.arange(n), np.full(n, 1 / n), "PC32-asym")


def build_shipped(name: str) -> Constellation:
    base2d = {"qpsk": qpsk, "8qam": star_8qam, "16qam": lambda: square_qam(16, "16QAM"),
              "32qam": cross_32qam, "64qam": lambda: square_qam(64, "64QAM")}
    if name in base2d:
        return normalize_unit_energy_per_pol(base2d[name]())
    if name.startswith("pm") and name[2:] in base2d:
        c2 = base2d[name[2:]]()
        return normalize_unit_energy_per_pol(pm_product(c2, c2, f"PM-{c2.name}"))
    if name == "pc32-asym":
        return polarization_correlated_32()
    raise UnknownFormatError(name)


def write_library(directory: Path = DATA_DIR) -> None:
    directory.mkdir(parents=True, exist_ok=True)
    for name in SHIPPED:
        save_constellation(build_shipped(name), directory / f"{name}.txt")


def available_formats() -> list[str]:
    names = set(SHIPPED) | set(SHAPED) | {"gaussian"}
    udir = os.environ.get(USER_DIR_ENV)
    if udir and Path(udir).is_dir():
        names |= {p.stem.lower() for p in Path(udir).glob("*.txt")}
    return sorted(names)


@lru_cache(maxsize=64)
def _cached(name: str, udir: str | None) -> Constellation:
    if udir:
        for p in Path(udir).glob("*.txt"):
            if p.stem.lower() == name:
                c = load_constellation(p, name=p.stem)
                logger.info("loaded user format %s from %s", name, p)
                return c
    if name in SHIPPED:
        path = DATA_DIR / f"{name}.txt"
        c = load_constellation(path, name=name) if path.exists() else build_shipped(name)
        return c
    if name in SHAPED:
        base, h = SHAPED[name]
        return normalize_unit_energy_per_pol(maxwell_boltzmann_ps(get_format(base), h, name=name))
    if name in EXTERNAL_FORMATS:
        raise UnknownFormatError(
            f"format {name!r} is not shipped; place its point file at "
            f"${USER_DIR_ENV}/{name}.txt (coordinates from the public database)")
    raise UnknownFormatError(f"unknown format {name!r}; available: {', '.join(available_formats())}")


def get_format(name: str) -> Constellation:
    """Resolve a library name, a user format, or a point-file path."""
    p = Path(name)
    if p.suffix and p.exists():
        return load_constellation(p)
    key = name.lower()
    if key.startswith("pm-") and key[3:] in ("qpsk", "8qam", "16qam", "32qam", "64qam"):
        key = "pm" + key[3:]
    return _cached(key, os.environ.get(USER_DIR_ENV))
