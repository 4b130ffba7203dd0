"""Split-step Manakov simulation of a WDM link, receiver DSP and the RP1 oracle.

Signals are periodic over the simulation window: every channel is built in
the frequency domain from the DFT of its symbol block, so there are no
filter transients and channel offsets are rounded to whole frequency bins.
The dispersion operator is ``exp(j beta2/2 omega^2 z)``; the nonlinear step
applies ``exp(j 8/9 gamma (|A_x|^2 + |A_y|^2) h)``.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field, replace

import numpy as np

from .awgn import NonConvergenceError
from .config import H_PLANCK, LinkConfig, SimConfig, WdmConfig
from .constellation import Constellation, ConstellationError

logger = logging.getLogger(__name__)

MANAKOV = 8.0 / 9.0
SNR_CAP_DB = 60.0
# total first-order nonlinear phase targeted by the epsilon oracle (rad)
RP1_PHASE = 1e-2
RP1_EPS_TOL = 0.01


class OracleError(RuntimeError):
    """The perturbation oracle detected higher-order contamination."""


@dataclass
class FieldGrid:
    """Dual-polarization baseband field on a periodic time grid.

    :param samples: ``(2, T)`` complex field in sqrt(W)
    :param sample_rate: Hz
    :param symbol_rate: Hz
    :param sps: samples per symbol
    :param bins: channel offset -> frequency-bin shift of its center
    :param scale: field amplitude per unit symbol amplitude
    :param rolloff: roll-off of the transmit pulse
    """

    samples: np.ndarray
    sample_rate: float
    center_frequency: float
    symbol_rate: float
    sps: int
    bins: dict
    scale: float
    rolloff: float = 0.0
    distance: float = 0.0

    @property
    def nsym(self) -> int:
        return self.samples.shape[1] // self.sps

    def freqs(self) -> np.ndarray:
        return np.fft.fftfreq(self.samples.shape[1], 1.0 / self.sample_rate)

    def power(self) -> float:
        return float(np.mean(np.sum(np.abs(self.samples) ** 2, axis=0)))

    def copy(self, samples=None) -> "FieldGrid":
        return replace(self, samples=self.samples.copy() if samples is None else samples,
                       bins=dict(self.bins))


class GaussianSymbols:
    """Circular Gaussian symbols with unit energy per polarization."""

    name = "gaussian"

    def pol_energies(self) -> np.ndarray:
        return np.ones(2)

    def draw(self, rng: np.random.Generator, n: int) -> np.ndarray:
        return (rng.standard_normal((n, 2)) + 1j * rng.standard_normal((n, 2))) / math.sqrt(2.0)


def draw_symbols(src, n: int, rng: np.random.Generator) -> np.ndarray:
    """``(n, 2)`` complex symbols (x, y) drawn i.i.d. from a format.

    A 2D format is drawn independently for each polarization.
    """
    if isinstance(src, GaussianSymbols):
        return src.draw(rng, n)
    a = src.complex_pols()
    if a.shape[1] == 1:
        idx = rng.choice(src.M, size=(n, 2), p=src.probs)
        return a[idx, 0]
    if a.shape[1] != 2:
        raise ConstellationError(f"{src.name}: simulation needs N = 2 or 4, got N = {src.dims}")
    return a[rng.choice(src.M, size=n, p=src.probs)]


def symbol_energy(src) -> float:
    """Mean energy of one (x, y) symbol pair."""
    e = np.asarray(src.pol_energies(), float)
    return float(2 * e[0] if e.size == 1 else e.sum())


def channel_rng(seed: int, run: int, offset: int) -> np.random.Generator:
    # offsets can be negative; shift into the non-negative range SeedSequence needs
    return np.random.default_rng(np.random.SeedSequence([seed, run, offset + 10_000]))


def rrc_spectrum(f: np.ndarray, symbol_rate: float, rolloff: float) -> np.ndarray:
    """Root-raised-cosine amplitude response with unit gain at DC.

    For zero roll-off a bin falling exactly on the band edge gets ``sqrt(1/2)``
    so that the two edges together pass it once.
    """
    af = np.abs(np.asarray(f, float)) / symbol_rate
    lo, hi = (1 - rolloff) / 2, (1 + rolloff) / 2
    h = np.where(af < lo - 1e-12, 1.0, 0.0)
    if rolloff == 0:
        h = np.where(np.abs(af - lo) <= 1e-12, math.sqrt(0.5), h)
    else:
        band = (af > lo) & (af <= hi)
        h = np.where(band, np.sqrt(0.5 * (1 + np.cos(math.pi / rolloff * (af - lo)))), h)
    return h


def samples_per_symbol(wdm: WdmConfig, sim: SimConfig) -> int:
    """At least two samples per Hz of occupied band, as a power of two."""
    if sim.samples_per_symbol:
        return int(sim.samples_per_symbol)
    band = (wdm.num_channels - 1) * wdm.spacing + wdm.symbol_rate * (1 + wdm.rolloff)
    return 1 << max(1, math.ceil(math.log2(2 * band / wdm.symbol_rate)))


def generate_wdm_signal(c, wdm: WdmConfig, sim: SimConfig, run: int = 0, channels=None,
                        center_frequency: float | None = None):
    """Build the transmitted WDM field.

    :param c: constellation or :class:`GaussianSymbols`
    :param run: run index, part of every channel's seed
    :param channels: offsets to transmit (default: all); symbols of a channel
        do not depend on which other channels are present
    :returns: ``(grid, sent)`` with ``sent[offset]`` the ``(nsym, 2)`` symbols
    """
    n = sim.symbols_per_run
    sps = samples_per_symbol(wdm, sim)
    T = n * sps
    fs = sps * wdm.symbol_rate
    offsets = list(wdm.offsets) if channels is None else sorted(set(channels))
    if not set(offsets) <= set(wdm.offsets):
        raise ValueError(f"channels {offsets} are not on the grid {wdm.offsets}")
    edge = max(abs(o) for o in offsets) * wdm.spacing + wdm.symbol_rate * (1 + wdm.rolloff) / 2
    if edge >= fs / 2:
        raise ValueError(f"WDM band edge {edge / 1e9:.1f} GHz aliases on a {fs / 1e9:.1f} GHz grid")
    f = np.fft.fftfreq(T, 1.0 / fs)
    H = sps * rrc_spectrum(f, wdm.symbol_rate, wdm.rolloff)
    scale = math.sqrt(wdm.launch_power / symbol_energy(c))
    spec = np.zeros((2, T), complex)
    sent, bins = {}, {}
    for o in offsets:
        a = draw_symbols(c, n, channel_rng(sim.seed, run, o))
        sent[o] = a
        shift = int(round(o * wdm.spacing * n / wdm.symbol_rate))
        bins[o] = shift
        A = np.fft.fft(a, axis=0).T
        spec += np.roll(np.tile(A, (1, sps)) * H[None, :], shift, axis=1)
    field_t = scale * np.fft.ifft(spec, axis=1)
    cf = center_frequency if center_frequency is not None else 299792458.0 / 1550e-9
    grid = FieldGrid(field_t, fs, cf, wdm.symbol_rate, sps, bins, scale, wdm.rolloff)
    return grid, sent


def span_steps(link: LinkConfig, sim: SimConfig, power_w: float) -> np.ndarray:
    """Step lengths of one span.

    ``log_spaced`` steps carry equal nonlinear phase for the mean power
    ``power_w``; ``uniform`` steps meet the bound at the span input.  Both
    are capped at ``sim.max_step_m``.
    """
    L, a = link.span_length, link.alpha
    g = MANAKOV * link.gamma_si
    if sim.step_rule == "uniform":
        n = max(1, math.ceil(g * power_w * L / sim.max_nl_phase_per_step),
                math.ceil(L / sim.max_step_m))
        return np.full(n, L / n)
    n = max(1, math.ceil(g * power_w * link.effective_length / sim.max_nl_phase_per_step))
    k = np.arange(n + 1) / n
    z = -np.log1p(-k * -math.expm1(-a * L)) / a
    z[-1] = L
    out = []
    for h in np.diff(z):
        m = max(1, math.ceil(h / sim.max_step_m))
        out.extend([h / m] * m)
    return np.array(out)


class _Linear:
    """Cached dispersion and loss operators per step length."""

    def __init__(self, grid: FieldGrid, link: LinkConfig):
        w = 2 * math.pi * grid.freqs()
        self.d = 0.5 * link.beta2 * w * w
        self.alpha = link.alpha
        self._cache = {}

    def __call__(self, h: float) -> np.ndarray:
        key = round(h, 9)
        op = self._cache.get(key)
        if op is None:
            op = np.exp(-0.5 * self.alpha * h + 1j * self.d * h)
            if len(self._cache) < 64:
                self._cache[key] = op
        return op


def _check_step_rule(sim: SimConfig, steps: np.ndarray, link: LinkConfig, power_w: float):
    g = MANAKOV * link.gamma_si
    z0 = np.concatenate([[0.0], np.cumsum(steps)[:-1]])
    phase = g * power_w * np.exp(-link.alpha * z0) * steps
    if np.any(steps > sim.max_step_m * (1 + 1e-9)) or np.any(phase > sim.max_nl_phase_per_step * 1.05):
        raise ValueError("step-size rule violated")


def propagate(grid: FieldGrid, link: LinkConfig, sim: SimConfig, nonlinear: bool = True,
              ase: bool = False, rng: np.random.Generator | None = None,
              gamma_scale: float = 1.0, power_w: float | None = None,
              first_order: bool = False):
    """Propagate through all spans with symmetric split steps.

    :param gamma_scale: factor on the nonlinear coefficient (the step rule
        always uses the physical value)
    :param power_w: mean launch power for the step rule (default: measured)
    :param first_order: also return the first-order perturbation field,
        propagated alongside the linear solution (``nonlinear`` is then
        ignored and the returned main field is the linear one)
    :returns: output grid, or ``(linear grid, perturbation grid)``
    """
    p = grid.power() if power_w is None else power_w
    steps = span_steps(link, sim, p)
    _check_step_rule(sim, steps, link, p)
    lin = _Linear(grid, link)
    g = MANAKOV * link.gamma_si * gamma_scale
    gain = math.exp(0.5 * link.alpha * link.span_length)
    if ase:
        rng = rng or np.random.default_rng(sim.seed + 7919)
        nf = 10 ** (link.nf_db / 10)
        psd = (link.gain - 1) * H_PLANCK * link.center_frequency * nf / 2
        var_bin = grid.samples.shape[1] * psd * grid.sample_rate
    Af = np.fft.fft(grid.samples, axis=1)
    Df = np.zeros_like(Af) if first_order else None
    half = steps / 2
    for _ in range(link.num_spans):
        pending = half[0]
        for k, h in enumerate(steps):
            op = lin(pending)
            Af *= op
            if first_order:
                Df *= op
            if nonlinear or first_order:
                A = np.fft.ifft(Af, axis=1)
                inten = np.sum(A.real**2 + A.imag**2, axis=0)
                if first_order:
                    Df += np.fft.fft(1j * g * h * inten * A, axis=1)
                else:
                    Af = np.fft.fft(A * np.exp(1j * g * h * inten), axis=1)
            pending = half[k] + (half[k + 1] if k + 1 < len(steps) else 0.0)
        Af *= lin(pending) * gain
        if first_order:
            Df *= lin(pending) * gain
        if ase:
            Af += math.sqrt(var_bin / 2) * (rng.standard_normal(Af.shape) + 1j * rng.standard_normal(Af.shape))
    dist = grid.distance + link.num_spans * link.span_length
    out = grid.copy(np.fft.ifft(Af, axis=1))
    out.distance = dist
    if not first_order:
        return out
    pert = grid.copy(np.fft.ifft(Df, axis=1))
    pert.distance = dist
    return out, pert


def receiver_dsp(grid: FieldGrid, link: LinkConfig | None = None, sent=None, offset: int = 0,
                 derotate: bool = True, normalize: bool = True) -> np.ndarray:
    """Recover the symbols of one channel.

    Ideal dispersion compensation over the propagated distance, matched
    filtering, sampling at the symbol instants and, when ``sent`` is given,
    one least-squares phase rotation per polarization.

    :param sent: transmitted symbols, either the ``(nsym, 2)`` array of this
        channel or the dictionary returned by :func:`generate_wdm_signal`
    :returns: ``(nsym, 2)`` complex symbols in format units (field units if
        ``normalize`` is false)
    """
    Af = np.fft.fft(grid.samples, axis=1)
    f = grid.freqs()
    if link is not None and grid.distance > 0:
        w = 2 * math.pi * f
        Af *= np.exp(-1j * 0.5 * link.beta2 * w * w * grid.distance)
    if offset not in grid.bins:
        raise ValueError(f"channel {offset} is not present")
    Af = np.roll(Af, -grid.bins[offset], axis=1)
    Af *= rrc_spectrum(f, grid.symbol_rate, grid.rolloff)[None, :]
    y = np.fft.ifft(Af, axis=1)[:, ::grid.sps].T
    if normalize:
        y = y / grid.scale
    if sent is not None:
        a = sent[offset] if isinstance(sent, dict) else np.asarray(sent)
        if a.shape != y.shape:
            raise ValueError(f"sent symbols {a.shape} do not match received {y.shape}")
        if derotate:
            ref = a if normalize else a * grid.scale
            rot = np.sum(y * np.conj(ref), axis=0)
            y = y * np.exp(-1j * np.angle(rot))[None, :]
    return y


@dataclass
class SnrMeasurement:
    snr_db: float
    stderr_db: float
    symbols: int
    runs: int = 1
    per_pol_db: tuple = ()

    def to_dict(self) -> dict:
        return {"snr_db": self.snr_db, "stderr_db": self.stderr_db, "symbols": self.symbols,
                "runs": self.runs, "per_pol_db": list(self.per_pol_db)}


def _ratio_db(num: float, den: float) -> float:
    return SNR_CAP_DB if den <= 0 else min(SNR_CAP_DB, 10 * math.log10(num / den))


def measure_effective_snr(sent, received, trim: int = 0, blocks: int = 8) -> SnrMeasurement:
    """``E||X||^2 / E||Y - X||^2`` over 4D symbols.

    :param sent: ``(n, 2)`` array or a list of per-run arrays
    :param received: matching array(s)
    :param trim: symbols discarded at each end of every run
    :param blocks: batches per run for the standard error
    """
    xs = [sent] if isinstance(sent, np.ndarray) else list(sent)
    ys = [received] if isinstance(received, np.ndarray) else list(received)
    if len(xs) != len(ys):
        raise ValueError("sent and received hold different numbers of runs")
    sig, err, bs, be = np.zeros(2), np.zeros(2), [], []
    n = 0
    for x, y in zip(xs, ys):
        x, y = np.asarray(x), np.asarray(y)
        if x.shape != y.shape:
            raise ValueError(f"shape mismatch {x.shape} vs {y.shape}")
        if trim:
            x, y = x[trim:-trim], y[trim:-trim]
        if x.shape[0] < 16:
            raise ValueError("too few symbols after trimming")
        s = np.abs(x) ** 2
        e = np.abs(y - x) ** 2
        sig += s.sum(axis=0)
        err += e.sum(axis=0)
        n += x.shape[0]
        for part in np.array_split(np.arange(x.shape[0]), blocks):
            bs.append(s[part].sum())
            be.append(e[part].sum())
    snr = _ratio_db(sig.sum(), err.sum())
    bs, be = np.array(bs), np.array(be)
    if err.sum() <= 0 or len(bs) < 2:
        stderr = 0.0
    else:
        # delta method on the ratio of batch sums
        r = bs.sum() / be.sum()
        resid = bs - r * be
        var = np.sum(resid**2) / (len(bs) - 1) * len(bs) / be.sum() ** 2
        stderr = 10 / math.log(10) * math.sqrt(var) / r
    per = tuple(_ratio_db(sig[q], err[q]) for q in range(2))
    return SnrMeasurement(snr, stderr, n, len(xs), per)


def simulate_snr(c, link: LinkConfig, wdm: WdmConfig, sim: SimConfig, p_dbm: float | None = None,
                 ase: bool = True, nonlinear: bool = True) -> SnrMeasurement:
    """End-to-end effective SNR of the center channel averaged over ``sim.runs``."""
    if p_dbm is not None:
        wdm = wdm.with_power(p_dbm)
    xs, ys = [], []
    for run in range(sim.runs):
        grid, sent = generate_wdm_signal(c, wdm, sim, run, center_frequency=link.center_frequency)
        rng = np.random.default_rng(np.random.SeedSequence([sim.seed, run, 1]))
        out = propagate(grid, link, sim, nonlinear=nonlinear, ase=ase, rng=rng,
                        power_w=wdm.launch_power * len(sent))
        xs.append(sent[0])
        ys.append(receiver_dsp(out, link, sent, 0))
    m = measure_effective_snr(xs, ys, trim=sim.trim)
    logger.info("SSFM %s at %.2f dBm: SNR %.3f +- %.3f dB", getattr(c, "name", c),
                wdm.launch_power_dbm, m.snr_db, m.stderr_db)
    return m


@dataclass
class OracleResult:
    """First-order NLI coefficient estimated by perturbation Monte Carlo.

    ``eta`` sums both polarizations (1/W^2); ``stderr`` is its standard
    error.  For the ``x1`` filter ``xpm`` holds the share of the neighbor
    (difference of the two-channel and single-channel perturbation fields).
    """

    eta: float
    eta_x: float
    eta_y: float
    stderr: float
    channels: tuple
    method: str
    symbols: int
    eps: float = 0.0
    eps_rel_change: float = 0.0
    xpm: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return dict(self.__dict__, channels=list(self.channels))


def _rp1_field(grid, link, sim, power_w, method, eps):
    if method == "direct":
        _, pert = propagate(grid, link, sim, power_w=power_w, first_order=True)
        return pert
    plus = propagate(grid, link, sim, gamma_scale=eps, power_w=power_w)
    minus = propagate(grid, link, sim, gamma_scale=-eps, power_w=power_w)
    return plus.copy((plus.samples - minus.samples) / (2 * eps))


def _residual(d: np.ndarray, a: np.ndarray) -> np.ndarray:
    """Remove the least-squares projection of each polarization on its symbols."""
    lam = np.sum(d * np.conj(a), axis=0) / np.sum(np.abs(a) ** 2, axis=0)
    return d - lam[None, :] * a


def _eta_stats(res_list, p3, blocks=8):
    parts = np.concatenate([np.array([np.mean(np.abs(r[b]) ** 2, axis=0)
                                      for b in np.array_split(np.arange(r.shape[0]), blocks)])
                            for r in res_list])
    ex, ey = parts.mean(axis=0) / p3
    tot = parts.sum(axis=1) / p3
    return float(ex), float(ey), float(tot.std(ddof=1) / math.sqrt(len(tot)))


def rp1_oracle(c, link: LinkConfig, wdm: WdmConfig, sim: SimConfig, pairing_filter: str = "all",
               neighbor: int = 1, channels=None, method: str = "epsilon",
               eps: float | None = None, check_eps: bool = True) -> OracleResult:
    """Monte Carlo estimate of the first-order NLI coefficient of the center channel.

    The perturbation field is isolated either by a central difference of two
    noiseless propagations with the nonlinear coefficient scaled to ``+eps``
    and ``-eps`` (``method="epsilon"``), or by propagating the first-order
    field directly (``method="direct"``).  After dispersion compensation and
    matched filtering the projection on the transmitted symbols is removed
    per polarization, as the receiver's phase derotation does, and the
    residual power is divided by ``P^3``.

    :param pairing_filter: ``all``, ``sci`` (channel of interest alone) or
        ``x1`` (channel of interest plus ``neighbor``)
    :param channels: explicit channel subset, overrides ``pairing_filter``
    :param check_eps: compare against ``eps/2`` on the first run
    :raises OracleError: if the ``eps/2`` estimate differs by more than 1%
    """
    if method not in ("epsilon", "direct"):
        raise ValueError(f"method must be 'epsilon' or 'direct', got {method!r}")
    if channels is None:
        channels = {"all": list(wdm.offsets), "sci": [0], "x1": [0, neighbor]}.get(pairing_filter)
        if channels is None:
            raise ValueError(f"unknown pairing filter {pairing_filter!r}")
    channels = sorted(set(channels))
    if 0 not in channels:
        raise ValueError("the channel of interest (offset 0) must be transmitted")
    P = wdm.launch_power
    ptot = P * len(wdm.offsets)  # step rule follows the full load
    g = MANAKOV * link.gamma_si
    if eps is None:
        eps = RP1_PHASE / (g * ptot * link.effective_length * link.num_spans)
    res, res_x1 = [], []
    rel = 0.0
    for run in range(sim.runs):
        grid, sent = generate_wdm_signal(c, wdm, sim, run, channels, link.center_frequency)
        a = sent[0] * grid.scale
        d = receiver_dsp(_rp1_field(grid, link, sim, ptot, method, eps), link, offset=0,
                         normalize=False)
        r = _residual(d, a)
        res.append(r)
        if run == 0 and check_eps and method == "epsilon":
            d2 = receiver_dsp(_rp1_field(grid, link, sim, ptot, method, eps / 2), link, offset=0,
                              normalize=False)
            p1 = np.mean(np.abs(r) ** 2)
            p2 = np.mean(np.abs(_residual(d2, a)) ** 2)
            rel = abs(p2 - p1) / p1
            if rel > RP1_EPS_TOL:
                raise OracleError(f"eps={eps:.3g}: eps/2 changes eta by {rel:.2%}; "
                                  "second-order terms contaminate the estimate")
        if len(channels) == 2 and channels != [0] and pairing_filter == "x1":
            g0, s0 = generate_wdm_signal(c, wdm, sim, run, [0], link.center_frequency)
            d0 = receiver_dsp(_rp1_field(g0, link, sim, ptot, method, eps), link, offset=0,
                              normalize=False)
            res_x1.append(_residual(d - d0, a))
    p3 = P**3
    ex, ey, se = _eta_stats(res, p3)
    xpm = {}
    if res_x1:
        xx, xy, xse = _eta_stats(res_x1, p3)
        xpm = {"neighbor": neighbor, "eta_x": xx, "eta_y": xy, "eta": xx + xy, "stderr": xse}
    out = OracleResult(ex + ey, ex, ey, se, tuple(channels), method,
                       sim.runs * sim.symbols_per_run, eps, rel, xpm)
    logger.info("RP1 %s %s: eta %.4g +- %.2g (eps check %.2e)", getattr(c, "name", c),
                channels, out.eta, se, rel)
    return out


def snr_sweep(c, link, wdm, sim, powers_dbm, ase=True) -> list[SnrMeasurement]:
    return [simulate_snr(c, link, wdm, sim, p, ase=ase) for p in powers_dbm]


def scaled(sim: SimConfig, **kw) -> SimConfig:
    return replace(sim, **kw)


__all__ = ["FieldGrid", "GaussianSymbols", "OracleError", "OracleResult", "SnrMeasurement",
           "generate_wdm_signal", "propagate", "receiver_dsp", "measure_effective_snr",
           "simulate_snr", "rp1_oracle", "rrc_spectrum", "span_steps", "samples_per_symbol",
           "draw_symbols", "snr_sweep", "NonConvergenceError"]
