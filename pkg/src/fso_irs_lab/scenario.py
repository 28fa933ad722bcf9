"""Scenario files: TOML documents describing one experiment.

Every section is optional and defaults to the reference system.  Numeric
keys may carry a ``_db`` suffix, in which case the value is read in decibels
and converted to a linear ratio (``threshold_db = 0`` is ``threshold = 1``).

Example::

    experiment = "outage_vs_snr"
    name = "lp-7cm"

    [beam]
    waist = 2.5e-3

    [irs]
    side = 0.07
    profile = "LP"

    [channel]
    threshold_db = 0

    [sweep]
    variable = "snr_db"
    start = -10
    stop = 60
    points = 71
"""
from __future__ import annotations

import dataclasses
import math
import sys
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

if sys.version_info >= (3, 11):
    import tomllib
else:  # pragma: no cover - exercised on 3.10
    import tomli as tomllib

from . import defaults
from .errors import FsoIrsError, ScenarioError
from .geometry import BeamParams, IrsConfig, LensConfig, LinkGeometry
from .turbulence_channel import ChannelParams

EXPERIMENTS = ("gml_vs_size", "outage_vs_snr", "outage_vs_position", "regime_map",
               "oracle_validation")

_SECTIONS = {
    "beam": {"wavelength", "waist"},
    "geometry": {"l_tr", "d3", "x", "d1"},
    "irs": {"side", "lx", "ly", "profile", "focal"},
    "lens": {"radius"},
    "channel": {"attenuation_db_per_m", "cn2", "responsivity", "total_power", "noise_psd_dbm_per_mhz",
                "bandwidth", "threshold"},
    "oracle": {"points", "model"},
}
_SWEEP_KEYS = {"variable", "start", "stop", "points", "scale"}
_TOP_KEYS = {"experiment", "name", "sweep", "sweep_lens", "sweep_irs", *_SECTIONS}


@dataclass(frozen=True)
class Sweep:
    """Grid of one swept variable."""

    variable: str
    start: float
    stop: float
    points: int
    scale: str = "linear"

    def __post_init__(self) -> None:
        if self.points < 1 or self.stop < self.start:
            raise ScenarioError(f"sweep over {self.variable!r} is empty "
                                f"(start={self.start}, stop={self.stop}, points={self.points})")
        if self.scale not in ("linear", "log"):
            raise ScenarioError(f"sweep scale must be 'linear' or 'log', got {self.scale!r}")
        if self.scale == "log" and self.start <= 0:
            raise ScenarioError("a log sweep needs a positive start value")

    def values(self) -> np.ndarray:
        if self.scale == "log":
            return np.logspace(math.log10(self.start), math.log10(self.stop), self.points)
        return np.linspace(self.start, self.stop, self.points)


@dataclass(frozen=True)
class Scenario:
    experiment: str
    name: str
    beam: BeamParams
    geometry: LinkGeometry
    irs: IrsConfig
    lens: LensConfig
    channel: ChannelParams
    sweeps: dict = field(default_factory=dict)
    oracle: dict = field(default_factory=dict)

    def resolved(self) -> dict:
        """Flat view of every parameter after defaults, for run manifests."""
        out = {"experiment": self.experiment, "name": self.name}
        for key in ("beam", "irs", "lens", "channel"):
            for f in dataclasses.fields(getattr(self, key)):
                v = getattr(getattr(self, key), f.name)
                out[f"{key}.{f.name}"] = getattr(v, "value", v)
        out.update({"geometry.l_tr": self.geometry.l_tr, "geometry.d3": self.geometry.d3,
                    "geometry.d1": self.geometry.d1, "geometry.x": self.geometry.x_o})
        for k, s in self.sweeps.items():
            out[f"{k}"] = f"{s.variable} {s.start}..{s.stop} x{s.points} ({s.scale})"
        out.update({f"oracle.{k}": v for k, v in self.oracle.items()})
        return out


def _normalise(section: str, raw: dict, allowed: set[str]) -> dict:
    out = {}
    for key, value in raw.items():
        base = key
        if key.endswith("_db") and key[:-3] in allowed:
            base = key[:-3]
            if not isinstance(value, (int, float)):
                raise ScenarioError(f"{section}.{key}: expected a number, got {value!r}")
            value = 10.0 ** (value / 10.0)
        if base not in allowed:
            raise ScenarioError(f"unknown key {section}.{key}; allowed: {sorted(allowed)}")
        if base in out:
            raise ScenarioError(f"{section}.{base} given twice (with and without a suffix)")
        out[base] = value
    return out


def _sweep(name: str, raw) -> Sweep:
    if not isinstance(raw, dict):
        raise ScenarioError(f"[{name}] must be a table")
    unknown = set(raw) - _SWEEP_KEYS
    if unknown:
        raise ScenarioError(f"unknown key(s) in [{name}]: {sorted(unknown)}")
    try:
        return Sweep(str(raw["variable"]), float(raw["start"]), float(raw["stop"]),
                     int(raw["points"]), str(raw.get("scale", "linear")))
    except KeyError as exc:
        raise ScenarioError(f"[{name}] is missing {exc.args[0]!r}") from None


def parse_scenario(text: str, source: str = "<string>") -> Scenario:
    """Parse and validate a scenario document.

    Raises
    ------
    ScenarioError
        With the offending key (or TOML line/column) and, for physics
        errors, the violated invariant.
    """
    try:
        doc = tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        raise ScenarioError(f"{source}: {exc}") from None
    unknown = set(doc) - _TOP_KEYS
    if unknown:
        raise ScenarioError(f"{source}: unknown top-level key(s) {sorted(unknown)}")
    experiment = doc.get("experiment")
    if experiment not in EXPERIMENTS:
        raise ScenarioError(f"{source}: experiment must be one of {EXPERIMENTS}, got {experiment!r}")
    sec = {name: _normalise(name, doc.get(name, {}), keys) for name, keys in _SECTIONS.items()}
    try:
        beam = BeamParams(**sec["beam"])
        g = sec["geometry"]
        l_tr = float(g.get("l_tr", defaults.LOS_DISTANCE))
        d3 = float(g.get("d3", defaults.END_TO_END))
        if "x" in g and "d1" in g:
            raise ScenarioError("geometry: give either x or d1, not both")
        if "d1" in g:
            geometry = LinkGeometry.from_d1(float(g["d1"]), l_tr, d3)
        else:
            geometry = LinkGeometry.from_x(float(g.get("x", defaults.SURFACE_X)), l_tr, d3)
        i = sec["irs"]
        side = float(i.get("side", defaults.IRS_SIDE))
        irs = IrsConfig(float(i.get("lx", side)), float(i.get("ly", side)),
                        i.get("profile", "LP"), i.get("focal"))
        lens = LensConfig(**sec["lens"])
        c = dict(sec["channel"])
        psd = c.pop("noise_psd_dbm_per_mhz", defaults.NOISE_PSD_DBM_PER_MHZ)
        bw = c.pop("bandwidth", defaults.BANDWIDTH)
        if "threshold" in c:
            c["threshold_snr"] = c.pop("threshold")
        channel = ChannelParams(noise_variance=defaults.noise_variance(psd, bw), **c)
    except ScenarioError:
        raise
    except (FsoIrsError, TypeError, ValueError) as exc:
        raise ScenarioError(f"{source}: invalid parameters: {exc}") from None
    sweeps = {k: _sweep(k, doc[k]) for k in ("sweep", "sweep_lens", "sweep_irs") if k in doc}
    needs = {"gml_vs_size": ("sweep",), "outage_vs_snr": ("sweep",),
             "outage_vs_position": ("sweep",), "regime_map": ("sweep_lens", "sweep_irs"),
             "oracle_validation": ()}[experiment]
    for k in needs:
        if k not in sweeps:
            raise ScenarioError(f"{source}: experiment {experiment!r} needs a [{k}] table")
    return Scenario(experiment, str(doc.get("name", Path(source).stem)), beam, geometry, irs,
                    lens, channel, sweeps, sec["oracle"])


def load_scenario(path) -> Scenario:
    p = Path(path)
    try:
        text = p.read_text()
    except OSError as exc:
        raise ScenarioError(f"cannot read scenario {p}: {exc}") from None
    return parse_scenario(text, str(p))
