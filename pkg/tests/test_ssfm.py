import math
from dataclasses import replace

import numpy as np
import pytest

from mdshape import ssfm
from mdshape.config import ConfigError, LinkConfig, SimConfig, WdmConfig, ase_power
from mdshape.formats import get_format

LINK = LinkConfig(span_length_km=50, num_spans=2, alpha_db_km=0.2, dispersion=17, gamma=1.3, nf_db=5)
ONE = WdmConfig(num_channels=1, symbol_rate_gbaud=32, spacing_ghz=50, launch_power_dbm=0)
THREE = replace(ONE, num_channels=3)
SIM = SimConfig(symbols_per_run=1024, trim=64, seed=5)
QPSK = get_format("pmqpsk")


def _pow_db(x):
    return 10 * math.log10(x)


@pytest.mark.parametrize("p_dbm", [-2, -1, 0, 1, 2])
def test_channel_power_tracks_launch_power(p_dbm):
    wdm = ONE.with_power(p_dbm)
    grid, _ = ssfm.generate_wdm_signal(QPSK, wdm, SIM)
    assert abs(_pow_db(grid.power()) - _pow_db(wdm.launch_power)) <= 0.01


def test_out_of_band_power():
    wdm = replace(ONE, rolloff=0.1)
    grid, _ = ssfm.generate_wdm_signal(get_format("pm16qam"), wdm, SIM)
    psd = np.sum(np.abs(np.fft.fft(grid.samples, axis=1)) ** 2, axis=0)
    f = np.abs(grid.freqs())
    edge = (1 + wdm.rolloff) * wdm.symbol_rate / 2
    out = psd[f > edge * (1 + 1e-9)]
    assert out.max() <= 1e-4 * psd[f < edge].max()


def test_eleven_channel_band():
    wdm = WdmConfig(num_channels=11, symbol_rate_gbaud=32, spacing_ghz=100)
    grid, sent = ssfm.generate_wdm_signal(QPSK, wdm, SIM)
    assert sorted(sent) == list(range(-5, 6))
    psd = np.sum(np.abs(np.fft.fft(grid.samples, axis=1)) ** 2, axis=0)
    f = grid.freqs()[psd > 1e-12 * psd.max()]
    df = grid.sample_rate / grid.samples.shape[1]
    assert f.max() - f.min() == pytest.approx(10 * wdm.spacing + wdm.symbol_rate, abs=2 * df)
    # the whole comb fits the grid with margin for the mixing products
    assert grid.sample_rate >= 2 * (f.max() - f.min())


def test_aliasing_rejected():
    with pytest.raises(ValueError, match="alias"):
        ssfm.generate_wdm_signal(QPSK, THREE, replace(SIM, samples_per_symbol=2))


def test_linear_propagation_is_all_pass():
    grid, _ = ssfm.generate_wdm_signal(QPSK, THREE, SIM)
    out = ssfm.propagate(grid, LINK, SIM, nonlinear=False)
    a = np.abs(np.fft.fft(grid.samples, axis=1))
    b = np.abs(np.fft.fft(out.samples, axis=1))
    assert np.max(np.abs(a - b)) <= 1e-10 * np.max(a)


def test_cw_tone_keeps_modulus():
    grid, _ = ssfm.generate_wdm_signal(QPSK, ONE, SIM)
    cw = grid.copy(np.full_like(grid.samples, math.sqrt(ONE.launch_power / 2)))
    out = ssfm.propagate(cw, replace(LINK, gamma=20.0), SIM)
    assert np.max(np.abs(np.abs(out.samples) - np.abs(cw.samples))) <= 1e-9 * np.abs(cw.samples).max()
    assert np.ptp(np.angle(out.samples[0] / cw.samples[0])) < 1e-9


def test_energy_conserved_per_span():
    grid, _ = ssfm.generate_wdm_signal(QPSK, THREE.with_power(6), SIM)
    out = ssfm.propagate(grid, replace(LINK, num_spans=1), SIM)
    assert out.power() == pytest.approx(grid.power(), rel=1e-9)


def test_propagation_is_deterministic():
    grid, _ = ssfm.generate_wdm_signal(QPSK, ONE, SIM)
    a = ssfm.propagate(grid, LINK, SIM, ase=True, rng=np.random.default_rng(3))
    b = ssfm.propagate(grid, LINK, SIM, ase=True, rng=np.random.default_rng(3))
    assert np.array_equal(a.samples, b.samples)


def test_step_rule():
    steps = ssfm.span_steps(LINK, SIM, 1e-2)
    assert steps.sum() == pytest.approx(LINK.span_length)
    ssfm._check_step_rule(SIM, steps, LINK, 1e-2)
    with pytest.raises(ValueError, match="step"):
        ssfm._check_step_rule(SIM, np.array([LINK.span_length]), LINK, 1e-2)
    uni = ssfm.span_steps(LINK, replace(SIM, step_rule="uniform"), 1e-2)
    assert np.allclose(uni, uni[0]) and uni.sum() == pytest.approx(LINK.span_length)
    with pytest.raises(ConfigError):
        SimConfig(step_rule="adaptive")


def test_back_to_back_identity():
    grid, sent = ssfm.generate_wdm_signal(QPSK, THREE, SIM)
    for o in sent:
        y = ssfm.receiver_dsp(grid, sent=sent, offset=o)
        assert np.max(np.abs(y - sent[o])) <= 1e-9


def test_linear_link_then_cdc_is_identity():
    grid, sent = ssfm.generate_wdm_signal(QPSK, THREE, SIM)
    out = ssfm.propagate(grid, LINK, SIM, nonlinear=False)
    y = ssfm.receiver_dsp(out, LINK, sent, 0)
    assert np.max(np.abs(y - sent[0])) <= 1e-6


def test_global_phase_removed():
    grid, sent = ssfm.generate_wdm_signal(QPSK, ONE, SIM)
    rot = grid.copy(grid.samples * np.exp(1j * math.pi / 7))
    assert np.max(np.abs(ssfm.receiver_dsp(rot, sent=sent) - sent[0])) <= 1e-9
    with pytest.raises(ValueError):
        ssfm.receiver_dsp(rot, sent=sent[0][:-1])
    with pytest.raises(ValueError):
        ssfm.receiver_dsp(rot, offset=3)


def test_measure_known_awgn():
    rng = np.random.default_rng(0)
    x = QPSK.complex_pols()[rng.integers(0, QPSK.M, 2**16)]
    s2 = 0.05  # complex variance per polarization
    y = x + math.sqrt(s2 / 2) * (rng.standard_normal(x.shape) + 1j * rng.standard_normal(x.shape))
    m = ssfm.measure_effective_snr(x, y)
    assert m.snr_db == pytest.approx(_pow_db(2.0 / (2 * s2)), abs=0.05)
    assert 0 < m.stderr_db < 0.05
    assert ssfm.measure_effective_snr(x, x).snr_db == ssfm.SNR_CAP_DB
    with pytest.raises(ValueError):
        ssfm.measure_effective_snr(x, y[:-1])


def test_ase_loading_matches_model():
    sim = replace(SIM, symbols_per_run=2**15, trim=256)
    m = ssfm.simulate_snr(QPSK, LINK, ONE, sim, 0.0, ase=True, nonlinear=False)
    expect = _pow_db(ONE.launch_power / (2 * ase_power(LINK, ONE.symbol_rate)))
    assert m.snr_db == pytest.approx(expect, abs=0.05)


def test_rp1_first_order_purity_and_methods():
    sim = replace(SIM, symbols_per_run=2048)
    eps = ssfm.rp1_oracle(QPSK, LINK, THREE, sim)
    assert eps.eps_rel_change < ssfm.RP1_EPS_TOL
    direct = ssfm.rp1_oracle(QPSK, LINK, THREE, sim, method="direct")
    assert direct.eta == pytest.approx(eps.eta, rel=0.01)
    sci = ssfm.rp1_oracle(QPSK, LINK, THREE, sim, "sci")
    assert sci.channels == (0,) and 0 < sci.eta < eps.eta
    x1 = ssfm.rp1_oracle(QPSK, LINK, THREE, sim, "x1")
    assert x1.channels == (0, 1) and 0 < x1.xpm["eta"] < x1.eta


def test_rp1_errors():
    with pytest.raises(ValueError):
        ssfm.rp1_oracle(QPSK, LINK, THREE, SIM, "x9")
    with pytest.raises(ValueError):
        ssfm.rp1_oracle(QPSK, LINK, THREE, SIM, method="exact")
    with pytest.raises(ValueError):
        ssfm.rp1_oracle(QPSK, LINK, THREE, SIM, channels=[1])
    with pytest.raises(ssfm.OracleError):
        ssfm.rp1_oracle(QPSK, LINK, THREE.with_power(10), SIM, eps=30.0)


def test_gaussian_symbols_have_unit_energy():
    a = ssfm.GaussianSymbols().draw(np.random.default_rng(1), 2**16)
    assert np.mean(np.abs(a) ** 2, axis=0) == pytest.approx([1, 1], abs=0.02)
    assert ssfm.symbol_energy(ssfm.GaussianSymbols()) == 2.0
