"""Figure-level experiments shared by the command line and the acceptance suite.

Each function returns plain dataclasses / arrays; writing CSV files is left to
:mod:`fso_irs_lab.cli`.
"""
from __future__ import annotations

import math
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy import ndimage

from . import defaults
from .geometry import BeamParams, IrsConfig, LensConfig, LinkGeometry, Profile
from .gml_models import (Regime, g1, g2, g3, gml_piecewise, regime_boundaries, relay_gml)
from .special_functions import GammaGammaParams
from .turbulence_channel import (ChannelParams, GainPair, LinkBudget, atmospheric_loss, gains_irs,
                         gains_relay, link_params, outage_irs, outage_relay)
from .wave_optics_oracle import numerical_gml, reflected_field_erf_form, reflected_field_quadrature

REGIME_LABELS = ("quadratic", "linear", "saturation")


def _quiet(fn, *args, **kw):
    """Evaluate a closed form without its out-of-regime warnings (maps and
    sweeps evaluate every formula everywhere on purpose)."""
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        return fn(*args, **kw)


# --------------------------------------------------------------------------
# Regime map
# --------------------------------------------------------------------------
@dataclass(frozen=True)
class RegimeMap:
    """Normalised errors ``E_i = |G_i - h|/max(G_i, h)`` over a size grid.

    ``errors[i, j, r]`` refers to lens area ``sigma_lens[i]``, surface area
    ``sigma_irs[j]`` and closed form ``r`` (0: quadratic, 1: linear,
    2: saturation).  ``best`` holds the index of the smallest error.
    """

    sigma_lens: np.ndarray
    sigma_irs: np.ndarray
    errors: np.ndarray
    oracle: np.ndarray
    failures: int = 0

    @property
    def best(self) -> np.ndarray:
        return np.argmin(self.errors, axis=2)

    def fraction_within(self, tol: float = 0.05) -> float:
        return float(np.mean(self.errors.min(axis=2) <= tol))

    def ordered(self) -> bool:
        """Best-regime label never decreases with surface area along any row."""
        return bool(np.all(np.diff(self.best, axis=1) >= 0))

    def components(self) -> dict[str, int]:
        """Number of 4-connected regions per best-regime label."""
        best = self.best
        return {name: int(ndimage.label(best == r)[1]) for r, name in enumerate(REGIME_LABELS)}

    def contiguous(self) -> bool:
        comps = self.components()
        return self.ordered() and all(n <= 1 for n in comps.values())


def _map_cell(args) -> tuple[float, float, float, float]:
    geometry, beam, sigma_lens, sigma_irs, profile, focal = args
    lens = LensConfig.from_area(sigma_lens)
    irs = IrsConfig.square(math.sqrt(sigma_irs), profile, focal)
    try:
        h = numerical_gml(geometry, beam, irs, lens, evaluator="erf")
    except Exception:  # oracle budget or convergence failure: reported, not fatal
        return math.nan, math.nan, math.nan, math.nan
    closed = (_quiet(g1, geometry, beam, irs, lens).raw,
              _quiet(g2, geometry, beam, irs).raw,
              _quiet(g3, irs.profile, geometry, beam, lens, focal).raw)
    return (h, *(abs(c - h) / max(c, h) for c in closed))


def regime_map(sigma_lens: Sequence[float], sigma_irs: Sequence[float],
               geometry: LinkGeometry | None = None, beam: BeamParams = BeamParams(),
               profile: "Profile | str" = Profile.LP, focal: float | None = None,
               jobs: int = 1) -> RegimeMap:
    """Compare the three closed forms with the erf-form oracle on a grid."""
    geometry = geometry or LinkGeometry.reference()
    sl = np.asarray(sigma_lens, dtype=float)
    si = np.asarray(sigma_irs, dtype=float)
    tasks = [(geometry, beam, a, s, profile, focal) for a in sl for s in si]
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            cells = list(pool.map(_map_cell, tasks, chunksize=max(1, len(tasks) // (8 * jobs))))
    else:
        cells = [_map_cell(t) for t in tasks]
    arr = np.array(cells).reshape(len(sl), len(si), 4)
    failures = int(np.isnan(arr[..., 0]).sum())
    errors = np.where(np.isnan(arr[..., 1:]), np.inf, arr[..., 1:])
    return RegimeMap(sl, si, errors, arr[..., 0], failures)


# Axis ranges of the default map: each regime gets at least a decade of room
# on both sides of its boundaries at the reference placement.
MAP_SIGMA_LENS = (1e-4, 1e-1)
MAP_SIGMA_IRS = (1e-8, 1e1)


def default_regime_map(n: int = 40, jobs: int = 1) -> RegimeMap:
    return regime_map(np.logspace(*np.log10(MAP_SIGMA_LENS), n),
                      np.logspace(*np.log10(MAP_SIGMA_IRS), n), jobs=jobs)


# --------------------------------------------------------------------------
# GML versus surface size
# --------------------------------------------------------------------------
@dataclass(frozen=True)
class GmlRow:
    length: float
    profile: str
    numerical: float
    piecewise: float
    regime: str
    g1: float
    g2: float
    g3: float


def gml_vs_size(lengths: Sequence[float], profiles: Sequence[str] = ("LP", "QP", "FP", "mir"),
                geometry: LinkGeometry | None = None, beam: BeamParams = BeamParams(),
                lens: LensConfig = LensConfig(), focal: float = defaults.END_TO_END / 4,
                numerical: bool = True) -> list[GmlRow]:
    """Numerical and closed-form GML of square surfaces of side ``L``."""
    geometry = geometry or LinkGeometry.reference()
    rows = []
    for prof in profiles:
        p = Profile.parse(prof)
        f = focal if p is Profile.QP else None
        for L in lengths:
            irs = IrsConfig.square(L, p, f)
            pw = _quiet(gml_piecewise, geometry, beam, irs, lens)
            num = numerical_gml(geometry, beam, irs, lens, evaluator="erf") if numerical else math.nan
            rows.append(GmlRow(float(L), p.value, num, pw.value, pw.regime.value,
                               _quiet(g1, geometry, beam, irs, lens).raw,
                               _quiet(g2, geometry, beam, irs).raw,
                               _quiet(g3, p, geometry, beam, lens, f).raw))
    return rows


def boundary_table(profiles: Sequence[str] = ("LP", "QP", "FP", "mir"),
                   geometry: LinkGeometry | None = None, beam: BeamParams = BeamParams(),
                   lens: LensConfig = LensConfig(), focal: float = defaults.END_TO_END / 4):
    geometry = geometry or LinkGeometry.reference()
    out = {}
    for prof in profiles:
        p = Profile.parse(prof)
        out[p.value] = regime_boundaries(p, geometry, beam, lens, focal if p is Profile.QP else None)
    return out


# --------------------------------------------------------------------------
# Outage
# --------------------------------------------------------------------------
@dataclass(frozen=True)
class LinkModel:
    """Both link types at one placement, ready for outage evaluation."""

    irs_budget: LinkBudget
    irs_params: GammaGammaParams
    relay_budgets: tuple[LinkBudget, LinkBudget]
    relay_params: tuple[GammaGammaParams, GammaGammaParams]
    threshold: float

    def pout_irs(self, gamma_bar: float) -> float:
        return outage_irs(gamma_bar, self.irs_budget, self.irs_params, self.threshold)

    def pout_relay(self, gamma_bar: float) -> float:
        return outage_relay(gamma_bar, self.relay_budgets, self.relay_params, self.threshold)

    def gains_irs(self) -> GainPair:
        return gains_irs(self.irs_budget, self.irs_params, self.threshold)

    def gains_relay(self) -> GainPair:
        return gains_relay(self.relay_budgets, self.relay_params, self.threshold)


def irs_gml(geometry: LinkGeometry, beam: BeamParams, irs: IrsConfig, lens: LensConfig,
            model: str = "numerical") -> float:
    """GML from the lens-integrated field (``"numerical"``) or the piecewise
    closed form (``"analytical"``)."""
    if model == "numerical":
        return numerical_gml(geometry, beam, irs, lens, evaluator="erf")
    if model == "analytical":
        return _quiet(gml_piecewise, geometry, beam, irs, lens).value
    raise ValueError(f"unknown GML model {model!r}")


def link_model(geometry: LinkGeometry, beam: BeamParams, irs: IrsConfig,
               lens: LensConfig = LensConfig(), channel: ChannelParams = ChannelParams(),
               model: str = "numerical", h_gml: float | None = None) -> LinkModel:
    """IRS hop over ``d3`` and a two-hop relay at the same ellipse point."""
    kappa = channel.attenuation_db_per_m
    zeta = channel.responsivity
    h = irs_gml(geometry, beam, irs, lens, model) if h_gml is None else h_gml
    irs_budget = LinkBudget(atmospheric_loss(geometry.d3, kappa), h, 1.0, zeta)
    legs = (geometry.d1, geometry.d2)
    relay_budgets = tuple(LinkBudget(atmospheric_loss(d, kappa), relay_gml(d, beam, lens), 0.5, zeta)
                          for d in legs)
    return LinkModel(irs_budget, link_params(geometry.d3, beam, channel), relay_budgets,
                     tuple(link_params(d, beam, channel) for d in legs), channel.threshold_snr)


def diversity_ratio(geometry: LinkGeometry | None = None, beam: BeamParams = BeamParams(),
                    channel: ChannelParams = ChannelParams()) -> float:
    """``D_rel/D_irs = min(rho1, rho2)/rho3`` for a relay at the surface position."""
    geometry = geometry or LinkGeometry.reference()
    rho = [link_params(d, beam, channel).rho for d in (geometry.d1, geometry.d2, geometry.d3)]
    return min(rho[0], rho[1]) / rho[2]


SNR_GRID_DB = (-10.0, 80.0)


def snr_grid(fast: bool = False) -> np.ndarray:
    step = 5.0 if fast else 1.0
    lo, hi = SNR_GRID_DB
    return np.arange(lo, hi + step / 2, step)


def crossover_snr_db(link: LinkModel, lo_db: float = -30.0, hi_db: float = 80.0) -> float | None:
    """Transmit SNR (dB) at which the IRS and relay outage curves cross."""
    from scipy.optimize import brentq

    def diff(s):
        g = 10 ** (s / 10)
        return math.log(link.pout_irs(g)) - math.log(max(link.pout_relay(g), 1e-300))

    grid = np.linspace(lo_db, hi_db, 221)
    vals = [diff(s) for s in grid]
    for a, b, va, vb in zip(grid[:-1], grid[1:], vals[:-1], vals[1:]):
        if va * vb < 0:
            return brentq(diff, a, b, xtol=1e-9)
    return None


# --------------------------------------------------------------------------
# Placement sweeps
# --------------------------------------------------------------------------
@dataclass(frozen=True)
class PositionRow:
    x: float
    d1: float
    gml: float
    pout: float
    regime: str


def _position_row(args) -> PositionRow:
    x, beam, irs, lens, channel, model, l_tr, d3 = args
    gamma_bar = channel.transmit_snr
    g = LinkGeometry.from_x(float(x), l_tr, d3)
    if irs is None:
        lm = link_model(g, beam, IrsConfig.square(1.0), lens, channel, h_gml=1.0)
        return PositionRow(float(x), g.d1, math.nan, lm.pout_relay(gamma_bar), "relay")
    h = irs_gml(g, beam, irs, lens, model)
    lm = link_model(g, beam, irs, lens, channel, h_gml=h)
    reg = _quiet(gml_piecewise, g, beam, irs, lens).regime.value
    return PositionRow(float(x), g.d1, h, lm.pout_irs(gamma_bar), reg)


def outage_vs_position(xs: Sequence[float], beam: BeamParams, irs: IrsConfig | None,
                       lens: LensConfig = LensConfig(), channel: ChannelParams = ChannelParams(),
                       model: str = "numerical", l_tr: float = defaults.LOS_DISTANCE,
                       d3: float = defaults.END_TO_END, jobs: int = 1) -> list[PositionRow]:
    """Outage at the channel's transmit SNR along the ellipse; ``irs=None``
    gives the relay link.  Rows come back in the order of ``xs``."""
    tasks = [(x, beam, irs, lens, channel, model, l_tr, d3) for x in xs]
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            return list(pool.map(_position_row, tasks))
    return [_position_row(t) for t in tasks]


def position_grid(fast: bool = False, l_tr: float = defaults.LOS_DISTANCE,
                  d3: float = defaults.END_TO_END) -> np.ndarray:
    """Uniform ``d1`` grid mapped to ``x``, pulled in from the degenerate end points."""
    from .placement import admissible_d1, x_from_d1
    lo, hi = admissible_d1(l_tr, d3)
    return np.array([x_from_d1(d, l_tr, d3) for d in np.linspace(lo, hi, 41 if fast else 401)])


# --------------------------------------------------------------------------
# Oracle cross-validation
# --------------------------------------------------------------------------
@dataclass(frozen=True)
class OracleCase:
    name: str
    side: float
    profile: str
    wavelength: float = defaults.WAVELENGTH
    focal: float | None = None


ORACLE_CASES = (
    OracleCase("LP-3cm", 0.03, "LP"),
    OracleCase("QP-3cm", 0.03, "QP", focal=defaults.FOCAL_DISTANCE),
    OracleCase("FP-3cm", 0.03, "FP"),
    OracleCase("mir-3cm", 0.03, "mir"),
    # a metre-scale surface needs a longer wavelength to keep the direct
    # integral within the desk-scale oscillation budget
    OracleCase("LP-1m-10um", 1.0, "LP", wavelength=10e-6),
)


@dataclass(frozen=True)
class OracleReport:
    case: OracleCase
    rms: float
    max_phase: float
    n_points: int
    points: np.ndarray = field(repr=False)


def lens_points(n: int, radius: float, seed: int = 0) -> np.ndarray:
    """``n`` points uniformly distributed over the lens disc."""
    rng = np.random.Generator(np.random.Philox(seed))
    r = radius * np.sqrt(rng.uniform(size=n))
    t = rng.uniform(0, 2 * math.pi, size=n)
    return np.column_stack([r * np.cos(t), r * np.sin(t)])


def oracle_agreement(case: OracleCase, n_points: int = 50, seed: int = 0,
                     geometry: LinkGeometry | None = None,
                     lens: LensConfig = LensConfig()) -> OracleReport:
    """Relative RMS difference ``||E_quad - E_erf|| / ||E_quad||`` over lens points."""
    geometry = geometry or LinkGeometry.reference()
    beam = BeamParams(wavelength=case.wavelength)
    irs = IrsConfig.square(case.side, case.profile, case.focal)
    pts = lens_points(n_points, lens.radius, seed)
    e_erf = np.array([reflected_field_erf_form(x, y, geometry, beam, irs) for x, y in pts])
    e_q = np.array([reflected_field_quadrature(x, y, geometry, beam, irs) for x, y in pts])
    rms = float(np.sqrt(np.mean(np.abs(e_erf - e_q) ** 2) / np.mean(np.abs(e_q) ** 2)))
    phase = float(np.max(np.abs(np.angle(e_erf / e_q))))
    return OracleReport(case, rms, phase, n_points, pts)
