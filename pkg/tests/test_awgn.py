import math

import numpy as np
import pytest
from scipy.integrate import quad

from mdshape.awgn import (AirEvaluator, AwgnChannelSpec, NonConvergenceError, gmi_awgn, mi_awgn,
                          normalized_rate, parse_grid, rates_csv, required_snr,
                          shannon_required_snr, spectral_efficiency)
from mdshape.constellation import Constellation, ConstellationError, entropy
from mdshape.formats import get_format

BPSK = Constellation(np.array([[1.0, 0], [-1, 0]]), np.array([0, 1]), [0.5, 0.5], "bpsk")


def bpsk_mi_oracle(s2):
    """Fine 1D integration of the BPSK MI with real noise variance ``s2``."""
    f = lambda y: (math.exp(-(y - 1) ** 2 / (2 * s2)) / math.sqrt(2 * math.pi * s2)
                   * (1 - math.log2(1 + math.exp(-2 * y / s2))))
    return quad(f, -40, 40, limit=400, epsabs=1e-12)[0]


def test_qpsk_saturates():
    assert mi_awgn(get_format("qpsk"), AwgnChannelSpec(60.0, 2)).rate == pytest.approx(2.0, abs=1e-3)


def test_bpsk_against_integration_oracle():
    # table convention: sigma^2 = E_2D / (2 SNR) per real dimension
    assert mi_awgn(BPSK, AwgnChannelSpec(0.0, 2)).rate == pytest.approx(bpsk_mi_oracle(0.5), abs=2e-3)
    # per-real-dimension SNR of 0 dB is -3.01 dB in the table convention
    snr = -10 * math.log10(2)
    assert bpsk_mi_oracle(1.0) == pytest.approx(0.4859, abs=2e-3)
    assert mi_awgn(BPSK, AwgnChannelSpec(snr, 2)).rate == pytest.approx(0.4859, abs=2e-3)


def test_pm8qam_rates_at_table_snr():
    c = get_format("pm8qam")
    assert mi_awgn(c, AwgnChannelSpec(7.502, 4)).rate == pytest.approx(4.80, abs=0.02)
    assert gmi_awgn(c, AwgnChannelSpec(8.117, 4)).rate == pytest.approx(4.80, abs=0.02)


@pytest.mark.parametrize("snr", [-5.0, 0.0, 5.0, 10.0])
def test_gray_qpsk_gmi_equals_mi(snr):
    c = get_format("qpsk")
    mi = mi_awgn(c, AwgnChannelSpec(snr, 2)).rate
    assert gmi_awgn(c, AwgnChannelSpec(snr, 2), samples=200_000).rate == pytest.approx(mi, abs=5e-3)


def test_gmi_clamped_at_low_snr():
    for name in ("8qam", "16qam", "pm32qam"):
        r = gmi_awgn(get_format(name), AwgnChannelSpec(-20.0, 2), samples=50_000).rate
        assert 0.0 <= r <= 0.05


def test_gmi_rejects_unlabeled():
    c = Constellation(get_format("qpsk").points, None, np.full(4, 0.25), partial=True)
    with pytest.raises(ConstellationError):
        gmi_awgn(c, AwgnChannelSpec(5.0, 2))


def test_normalized_rate_algebra():
    u = Constellation(np.random.default_rng(0).standard_normal((4096, 4)), None,
                      np.full(4096, 1 / 4096), partial=True)
    assert normalized_rate(9.6, u) == pytest.approx(0.8, abs=1e-12)
    assert normalized_rate(entropy(u), u) == 1.0
    ps = get_format("ps64qam-8.8")
    assert normalized_rate(6.4, ps) == pytest.approx(1 - (8.8 - 6.4) / 12, abs=1e-9)


def test_shannon_anchors():
    assert shannon_required_snr(6, 0.8) == pytest.approx(6.312, abs=1e-3)
    assert shannon_required_snr(10, 0.8) == pytest.approx(11.761, abs=1e-3)
    assert shannon_required_snr(2, 1.0) == pytest.approx(0.0, abs=1e-12)
    with pytest.raises(ValueError):
        shannon_required_snr(0, 0.8)


def test_required_snr_edges():
    c = get_format("qpsk")
    assert required_snr(c, target_normalized=0.0) == float("-inf")
    with pytest.raises(NonConvergenceError):
        required_snr(c, target_normalized=1.0, rate_loss=0.01)
    with pytest.raises(ValueError):
        required_snr(c, tol_db=0)


def test_required_snr_brackets_target():
    c = get_format("16qam")
    tol = 0.02
    s = required_snr(c, "MI", 0.8, tol_db=tol)
    ev = AirEvaluator(c, "MI")
    need = 0.8 * c.m
    assert ev.rate(s + tol)[0] >= need >= ev.rate(s - tol)[0]
    assert required_snr(c, "MI", 0.8, tol_db=tol) == s


def test_gauss_hermite_matches_monte_carlo():
    c = get_format("pm8qam")
    gh = mi_awgn(c, AwgnChannelSpec(6.0, 4), estimator="gauss_hermite").rate
    mc = mi_awgn(c, AwgnChannelSpec(6.0, 4), estimator="monte_carlo", samples=10**6, seed=3).rate
    assert gh == pytest.approx(mc, abs=0.01)


def test_pm_mi_is_twice_2d():
    for snr in (2.0, 8.0):
        r4 = mi_awgn(get_format("pm16qam"), AwgnChannelSpec(snr, 4)).rate
        r2 = mi_awgn(get_format("16qam"), AwgnChannelSpec(snr, 2)).rate
        assert r4 == pytest.approx(2 * r2, abs=1e-9)


def test_mi_monotone():
    ev = AirEvaluator(get_format("32qam"), "MI")
    r = [ev.rate(s)[0] for s in np.arange(-5, 30.5, 0.5)]
    assert np.all(np.diff(r) >= -1e-12)


def test_loss_resolves_saturated_rate():
    ev = AirEvaluator(get_format("qpsk"), "MI", nodes=32)
    # the rate rounds to log2 M, the loss stays positive and decreasing
    assert ev.rate(20.0)[0] == pytest.approx(2.0, abs=1e-15)
    l1, l2 = ev.loss(20.0), ev.loss(21.0)
    assert 0 < l2 < l1 < 1e-10
    assert ev.rate(8.0)[0] == pytest.approx(2.0 - ev.loss(8.0), abs=1e-12)


def test_spectral_efficiency():
    assert spectral_efficiency(get_format("pm8qam"), 0.8) == pytest.approx(6.0)
    assert spectral_efficiency(get_format("32qam"), 0.8) == pytest.approx(10.0)
    assert spectral_efficiency(get_format("ps16qam-6.4"), 0.8) == pytest.approx(6.0, abs=1e-6)


def test_grid_parsing_and_csv():
    assert np.allclose(parse_grid("0:0.5:2"), [0, 0.5, 1, 1.5, 2])
    assert np.allclose(parse_grid("-4:0.5:-3"), [-4, -3.5, -3])
    for bad in ("0:0.5", "a:1:2", "0:0:1", "2:1:0"):
        with pytest.raises(ValueError):
            parse_grid(bad)
    ev = AirEvaluator(get_format("qpsk"))
    text = rates_csv([("qpsk", "MI", 3.0, ev.point(3.0))])
    assert text.splitlines()[0] == "format,metric,snr_db,rate,normalized,stderr"
    assert text.splitlines()[1].startswith("qpsk,MI,3.000,")
