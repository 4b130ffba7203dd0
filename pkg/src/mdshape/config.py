"""Link, WDM and simulation configuration plus the scenario library.

Scenario files are INI documents with ``[scenario]``, ``[link]``, ``[wdm]``
and optional ``[sim]`` sections whose keys mirror the dataclass fields.
"""
from __future__ import annotations

import configparser
import dataclasses
import hashlib
import json
import logging
import math
import os
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

logger = logging.getLogger(__name__)

H_PLANCK = 6.62607015e-34
C_LIGHT = 299792458.0
REF_WAVELENGTH = 1550e-9
DB_PER_NEPER = 10.0 * math.log10(math.e)


class ConfigError(ValueError):
    """Invalid or unresolvable configuration."""


def _positive(name: str, value: float) -> None:
    if not (isinstance(value, (int, float)) and math.isfinite(value) and value > 0):
        raise ConfigError(f"{name} must be positive and finite, got {value!r}")


@dataclass(frozen=True)
class LinkConfig:
    """Homogeneous multi-span link with lumped amplifiers that exactly undo span loss.

    :param span_length_km: span length
    :param num_spans: number of spans
    :param alpha_db_km: attenuation
    :param dispersion: D in ps/nm/km at the reference wavelength
    :param gamma: nonlinear coefficient in 1/W/km
    :param nf_db: amplifier noise figure
    :param center_frequency: optical carrier (Hz)
    """

    span_length_km: float = 80.0
    num_spans: int = 1
    alpha_db_km: float = 0.2
    dispersion: float = 17.0
    gamma: float = 1.3
    nf_db: float = 5.0
    center_frequency: float = C_LIGHT / REF_WAVELENGTH

    def __post_init__(self):
        for name in ("span_length_km", "alpha_db_km", "dispersion", "gamma", "center_frequency"):
            _positive(name, getattr(self, name))
        if int(self.num_spans) != self.num_spans or self.num_spans < 1:
            raise ConfigError(f"num_spans must be an integer >= 1, got {self.num_spans!r}")
        if not math.isfinite(self.nf_db):
            raise ConfigError("nf_db must be finite")

    @property
    def span_length(self) -> float:
        return self.span_length_km * 1e3

    @property
    def alpha(self) -> float:
        """Power attenuation in 1/m."""
        return self.alpha_db_km / DB_PER_NEPER / 1e3

    @property
    def beta2(self) -> float:
        """Group-velocity dispersion in s^2/m from D at 1550 nm."""
        d_si = self.dispersion * 1e-6  # ps/nm/km -> s/m^2
        return -d_si * REF_WAVELENGTH**2 / (2 * math.pi * C_LIGHT)

    @property
    def gamma_si(self) -> float:
        return self.gamma * 1e-3

    @property
    def gain(self) -> float:
        return 10.0 ** (self.alpha_db_km * self.span_length_km / 10.0)

    @property
    def effective_length(self) -> float:
        return -math.expm1(-self.alpha * self.span_length) / self.alpha


@dataclass(frozen=True)
class WdmConfig:
    """WDM comb with the channel of interest at index ``num_channels // 2``.

    :param symbol_rate_gbaud: symbol rate
    :param spacing_ghz: channel spacing
    :param rolloff: raised-cosine roll-off of the spectrum
    :param launch_power_dbm: per-channel power (both polarizations)
    """

    num_channels: int = 1
    symbol_rate_gbaud: float = 32.0
    spacing_ghz: float = 50.0
    rolloff: float = 0.0
    launch_power_dbm: float = 0.0

    def __post_init__(self):
        if int(self.num_channels) != self.num_channels or self.num_channels < 1:
            raise ConfigError(f"num_channels must be an integer >= 1, got {self.num_channels!r}")
        _positive("symbol_rate_gbaud", self.symbol_rate_gbaud)
        _positive("spacing_ghz", self.spacing_ghz)
        if not 0.0 <= self.rolloff <= 1.0:
            raise ConfigError(f"rolloff must be in [0, 1], got {self.rolloff!r}")
        if self.num_channels > 1 and self.spacing_ghz < self.symbol_rate_gbaud * (1 + self.rolloff) - 1e-9:
            raise ConfigError("channel spacing is smaller than the occupied bandwidth")

    @property
    def symbol_rate(self) -> float:
        return self.symbol_rate_gbaud * 1e9

    @property
    def spacing(self) -> float:
        return self.spacing_ghz * 1e9

    @property
    def coi_index(self) -> int:
        return self.num_channels // 2

    @property
    def offsets(self) -> list[int]:
        """Channel indices relative to the channel of interest."""
        return [k - self.coi_index for k in range(self.num_channels)]

    @property
    def launch_power(self) -> float:
        return 1e-3 * 10.0 ** (self.launch_power_dbm / 10.0)

    def with_power(self, dbm: float) -> "WdmConfig":
        return dataclasses.replace(self, launch_power_dbm=float(dbm))


@dataclass(frozen=True)
class SimConfig:
    """Split-step simulation settings.

    ``max_nl_phase_per_step`` bounds the nonlinear phase of every step at
    the mean launch power of the whole comb; ``max_step_m`` additionally
    caps the step length.
    """

    symbols_per_run: int = 2**14
    runs: int = 1
    seed: int = 1
    step_rule: str = "log_spaced"
    max_nl_phase_per_step: float = 5e-4
    max_step_m: float = 1000.0
    samples_per_symbol: int = 0
    trim: int = 256

    def __post_init__(self):
        if self.step_rule not in ("uniform", "log_spaced"):
            raise ConfigError(f"step_rule must be uniform or log_spaced, got {self.step_rule!r}")
        if self.symbols_per_run < 2 * self.trim + 16 or self.symbols_per_run & (self.symbols_per_run - 1):
            raise ConfigError("symbols_per_run must be a power of two well above the trimmed edges")
        if self.runs < 1:
            raise ConfigError("runs must be >= 1")
        _positive("max_nl_phase_per_step", self.max_nl_phase_per_step)
        _positive("max_step_m", self.max_step_m)
        if self.samples_per_symbol < 0 or self.trim < 0:
            raise ConfigError("samples_per_symbol and trim must be non-negative")


@dataclass(frozen=True)
class Scenario:
    id: str
    link: LinkConfig
    wdm: WdmConfig
    sim: SimConfig = field(default_factory=SimConfig)
    description: str = ""

    def to_dict(self) -> dict:
        return {"id": self.id, "description": self.description,
                "link": dataclasses.asdict(self.link), "wdm": dataclasses.asdict(self.wdm),
                "sim": dataclasses.asdict(self.sim)}

    def config_hash(self) -> str:
        blob = json.dumps(self.to_dict(), sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()[:12]


def ase_power(link: LinkConfig, bandwidth: float) -> float:
    """ASE power per polarization in ``bandwidth`` accumulated over the link.

    ``N_s (G - 1) h nu (NF / 2) B`` with ``NF`` in linear units.
    """
    if bandwidth < 0:
        raise ValueError("bandwidth must be non-negative")
    nf = 10.0 ** (link.nf_db / 10.0)
    return link.num_spans * (link.gain - 1.0) * H_PLANCK * link.center_frequency * nf / 2.0 * bandwidth


def _coerce(cls, section: configparser.SectionProxy):
    types = {f.name: f.type for f in dataclasses.fields(cls)}
    kw = {}
    for key, raw in section.items():
        if key not in types:
            raise ConfigError(f"unknown key {key!r} in [{section.name}]")
        t = types[key]
        try:
            if t in ("int", int):
                kw[key] = int(raw)
            elif t in ("float", float):
                kw[key] = float(raw)
            else:
                kw[key] = raw.strip()
        except ValueError:
            raise ConfigError(f"[{section.name}] {key} = {raw!r} is not a valid {t}") from None
    return cls(**kw)


def parse_scenario(text: str, default_id: str = "custom") -> Scenario:
    cp = configparser.ConfigParser()
    try:
        cp.read_string(text)
    except configparser.Error as e:
        raise ConfigError(f"malformed scenario file: {e}") from None
    for sec in ("link", "wdm"):
        if not cp.has_section(sec):
            raise ConfigError(f"scenario file lacks a [{sec}] section")
    meta = cp["scenario"] if cp.has_section("scenario") else {}
    sim = _coerce(SimConfig, cp["sim"]) if cp.has_section("sim") else SimConfig()
    return Scenario(id=meta.get("id", default_id), link=_coerce(LinkConfig, cp["link"]),
                    wdm=_coerce(WdmConfig, cp["wdm"]), sim=sim,
                    description=meta.get("description", ""))


def builtin_scenarios() -> list[str]:
    root = resources.files("mdshape") / "scenarios"
    return sorted(p.name[:-4] for p in root.iterdir() if p.name.endswith(".ini"))


def load_scenario(name_or_path: str) -> Scenario:
    """Load a built-in scenario by id or a scenario file by path."""
    p = Path(name_or_path)
    if p.suffix == ".ini" or os.sep in name_or_path:
        if not p.is_file():
            raise ConfigError(f"scenario file {name_or_path} not found")
        return parse_scenario(p.read_text(), default_id=p.stem)
    res = resources.files("mdshape") / "scenarios" / f"{name_or_path}.ini"
    if not res.is_file():
        raise ConfigError(f"unknown scenario {name_or_path!r}; available: {', '.join(builtin_scenarios())}")
    return parse_scenario(res.read_text(), default_id=name_or_path)
