import math

import numpy as np
import pytest

from mdshape.constellation import (Constellation, ConstellationError, ccdm_rate_loss,
                                   check_circular, energy_distribution, entropy,
                                   format_pointfile, load_constellation,
                                   maxwell_boltzmann_ps, moments, normalize_unit_energy_per_pol,
                                   parse_pointfile, pm_product, quantize_ntype, save_constellation,
                                   split_polarizations, square_qam)
from mdshape.formats import get_format

QPSK_FILE = """# QPSK
2 4 2
1 1 00 0.25
-1 1 01 0.25
-1 -1 11 0.25
1 -1 10 0.25
"""


def test_pointfile_round_trip(tmp_path):
    c = parse_pointfile(QPSK_FILE, "qpsk")
    assert (c.dims, c.M, c.m) == (2, 4, 2)
    p = tmp_path / "q.txt"
    save_constellation(c, p)
    d = load_constellation(p)
    assert np.array_equal(c.points, d.points)
    assert np.array_equal(c.labels, d.labels)
    assert np.array_equal(c.probs, d.probs)


def test_probability_mass_rejected():
    bad = QPSK_FILE.replace("0.25\n-1 -1", "0.23\n-1 -1")
    with pytest.raises(ConstellationError, match="probability mass 0.98"):
        parse_pointfile(bad)


@pytest.mark.parametrize("text, msg", [
    ("3 2 1\n0 0 0 0 0.5\n1 1 1 1 0.5\n", "even"),
    ("2 2 1\n0 0 0 0.5\n1 1 0 0.5\n", "distinct"),
    ("2 2 1\n0 nan 0 0.5\n1 1 1 0.5\n", "NaN"),
    ("2 2 1\n0 x 0 0.5\n1 1 1 0.5\n", "malformed"),
    ("2 3 1\n0 0 0 0.5\n1 1 1 0.5\n", "declares"),
])
def test_pointfile_errors(text, msg):
    with pytest.raises(ConstellationError, match=msg):
        parse_pointfile(text)


def test_pm16qam_product_zero_mean():
    c = pm_product(square_qam(16))
    assert (c.dims, c.M) == (4, 256)
    assert np.allclose(c.probs @ c.points, 0, atol=1e-12)


def test_normalize_scaling_and_idempotence():
    c = Constellation(3 * np.array([[1, 0], [0, 1], [-1, 0], [0, -1.0]]), None, np.full(4, 0.25))
    n = normalize_unit_energy_per_pol(c)
    assert np.allclose(np.abs(n.complex_pols()), 1)
    n2 = normalize_unit_energy_per_pol(n)
    assert np.allclose(n.points, n2.points, atol=1e-12)


def test_normalize_asymmetric_pols():
    q = np.array([[1, 1], [-1, 1], [-1, -1], [1, -1]]) / math.sqrt(2)
    pts = np.hstack([math.sqrt(0.8) * q[np.repeat(np.arange(4), 4)],
                     math.sqrt(1.2) * q[np.tile(np.arange(4), 4)]])
    c = Constellation(pts, None, np.full(16, 1 / 16))
    assert np.allclose(c.pol_energies(), [0.8, 1.2])
    assert np.allclose(normalize_unit_energy_per_pol(c).pol_energies(), [1, 1], atol=1e-12)


def test_normalize_zero_energy_pol():
    pts = np.array([[1, 0, 0, 0], [-1, 0, 0, 0.0]])
    with pytest.raises(ConstellationError, match="zero-energy"):
        normalize_unit_energy_per_pol(Constellation(pts, None, [0.5, 0.5]))


def test_moments_kurtosis():
    m = moments(get_format("pmqpsk"))
    assert m.ax4 / m.ax2**2 == pytest.approx(1.0, abs=1e-12)
    m16 = moments(normalize_unit_energy_per_pol(square_qam(16)))
    assert m16.ax4 / m16.ax2**2 == pytest.approx(132 / 100, abs=1e-12)


def test_moments_factor_for_pm_product():
    m = moments(get_format("pm16qam"))
    assert m.ax2ay2 == pytest.approx(m.ax2 * m.ay2, rel=1e-12)
    assert abs(m.ax_ayc) < 1e-12
    assert m.ax2ay2 <= math.sqrt(m.ax4 * m.ay4) + 1e-12


def test_entropy():
    assert entropy(np.full(64, 1 / 64)) == 6.0
    assert entropy([1.0]) == 0.0
    p = np.random.default_rng(0).dirichlet(np.ones(8))
    assert entropy(p) == pytest.approx(entropy(p[::-1]), abs=1e-12)


def test_maxwell_boltzmann_targets():
    base = get_format("pm16qam")
    c = maxwell_boltzmann_ps(base, 6.4)
    assert entropy(c) == pytest.approx(6.4, abs=1e-6)
    near = maxwell_boltzmann_ps(base, 8 - 1e-6)
    assert np.ptp(near.probs) < 1e-3
    assert entropy(maxwell_boltzmann_ps(get_format("pm64qam"), 8.8)) == pytest.approx(8.8, abs=1e-6)
    with pytest.raises(ValueError):
        maxwell_boltzmann_ps(base, 8.0)


def test_mb_monotone_in_lambda():
    e = np.sum(get_format("16qam").points ** 2, axis=1)

    def h(lam):
        p = np.exp(-lam * e)
        return entropy(p / p.sum())
    assert h(0.1) > h(0.5) > h(1.0)


def test_ccdm_rate_loss():
    assert ccdm_rate_loss([0.5, 0.5], 4) == pytest.approx(1 - math.log2(6) / 4, abs=1e-12)
    assert ccdm_rate_loss(np.full(4, 0.25), 10000) < 0.01
    assert ccdm_rate_loss([1.0], 7) == pytest.approx(0.0, abs=1e-12)
    p = np.array([0.4, 0.3, 0.2, 0.1])
    losses = [ccdm_rate_loss(p, n) for n in (16, 32, 64, 128, 256)]
    assert all(a >= b - 1e-12 for a, b in zip(losses, losses[1:]))
    assert all(x >= -1e-12 for x in losses)
    with pytest.raises(ValueError):
        ccdm_rate_loss(p, 0)
    with pytest.raises(ValueError):
        ccdm_rate_loss([], 4)
    assert quantize_ntype(p, 10).sum() == 10


def test_energy_histogram_pm16qam():
    h = energy_distribution(get_format("pm16qam"))
    assert np.allclose(h.energies, [0.4, 1.2, 2.0, 2.8, 3.6])
    # per-pol levels 0.2/1.0/1.8 with masses 1/4, 1/2, 1/4
    assert np.allclose(h.masses, [1 / 16, 4 / 16, 6 / 16, 4 / 16, 1 / 16])
    assert h.masses.sum() == pytest.approx(1)
    assert float(h.energies @ h.masses) == pytest.approx(get_format("pm16qam").mean_energy(), abs=1e-9)
    assert h.to_csv().splitlines()[0] == "energy,probability,group"


def test_energy_histogram_constant_modulus():
    h = energy_distribution(get_format("pmqpsk"))
    assert h.energies.size == 1 and h.energies[0] == pytest.approx(2.0)


def test_split_and_circularity():
    cx, cy = split_polarizations(get_format("pm8qam"))
    assert cx.M == cy.M == 8
    assert split_polarizations(get_format("pc32-asym")) is None
    assert check_circular(get_format("pc32-asym")) == []
    off = Constellation(np.array([[1, 0], [-0.5, 0.5], [-0.5, -0.5]]), None, np.full(3, 1 / 3),
                        partial=True)
    assert check_circular(off)


def test_pointfile_text_is_stable():
    c = get_format("qpsk")
    assert parse_pointfile(format_pointfile(c)).points.tolist() == c.points.tolist()
