"""Where to put the surface, mirror or relay on the constant-distance ellipse.

Closed-form optima are expressed through ``d1`` and mapped to ``(x_o, z_o)``
with :func:`~fso_irs_lab.geometry.ellipse_position`.  Every closed form has an
independent check in :func:`grid_search_verify`, an exhaustive scan of a
user-supplied objective over the admissible ``d1`` range.
"""
from __future__ import annotations

import csv
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy import optimize, special

from . import defaults
from .errors import ConvergenceError, DomainError
from .geometry import (BeamParams, IrsConfig, LensConfig, LinkGeometry, Profile,
                       ellipse_position)
from .gml_models import Regime, g1, g2, g3, gml_piecewise

PLATEAU_TOL = 1e-3
GRID_POINTS = 2001
SCAN_POINTS = 512


@dataclass(frozen=True)
class PlacementResult:
    """Optimal placement on the ellipse.

    Attributes
    ----------
    d1 : tuple of float
        Optimal Tx-to-surface distances; several entries for tied optima.
    points : tuple of (x_o, z_o)
        The same optima as ellipse coordinates.
    regime : Regime or None
        Power-scaling regime the optimum refers to.
    objective : float
        Objective value at the (first) optimum; ``nan`` when not evaluated.
    interval : (x_lo, x_hi) or None
        Range of ``x_o`` over which the objective is optimal (plateau).
    diagnostics : dict
        Solver details: bracket, iterations, residual, grid step, notes.
    """

    d1: tuple[float, ...]
    points: tuple[tuple[float, float], ...]
    regime: Regime | None = None
    objective: float = math.nan
    interval: tuple[float, float] | None = None
    diagnostics: dict = field(default_factory=dict)

    @property
    def x(self) -> float:
        """Representative abscissa: plateau midpoint or the first optimum."""
        if self.interval is not None:
            return 0.5 * (self.interval[0] + self.interval[1])
        return self.points[0][0]

    @property
    def xs(self) -> tuple[float, ...]:
        return tuple(p[0] for p in self.points)


def _result(d1s: Sequence[float], l_tr: float, d3: float, **kw) -> PlacementResult:
    d1s = tuple(float(d) for d in d1s)
    return PlacementResult(d1s, tuple(ellipse_position(d, l_tr, d3) for d in d1s), **kw)


def admissible_d1(l_tr: float = defaults.LOS_DISTANCE, d3: float = defaults.END_TO_END,
                  margin: float = defaults.ELLIPSE_MARGIN) -> tuple[float, float]:
    """``d1`` range on the ellipse, pulled in by ``margin*d3`` from the end points
    where the surface would lie on the Tx--Rx axis."""
    eps = margin * d3
    return 0.5 * (d3 - l_tr) + eps, 0.5 * (d3 + l_tr) - eps


def x_from_d1(d1: float, l_tr: float, d3: float) -> float:
    return (d1 - 0.5 * d3) * d3 / l_tr


# --------------------------------------------------------------------------
# Closed forms
# --------------------------------------------------------------------------
def quadratic_regime_d1(l_tr: float = defaults.LOS_DISTANCE,
                        d3: float = defaults.END_TO_END) -> tuple[tuple[float, ...], bool]:
    """Metasurface optima ``d1 = d3/2 +- sqrt(2 rho1)/4`` with ``rho1 = 3 L^2 - d3^2``.

    Returns the optima and a flag that is true when the interior extrema do
    not exist (``rho1 < 0``) or leave the ellipse, in which case the
    admissible end points are returned instead.
    """
    lo, hi = admissible_d1(l_tr, d3)
    rho1 = 3 * l_tr**2 - d3**2
    if rho1 >= 0:
        off = math.sqrt(2 * rho1) / 4
        cands = (0.5 * d3 - off, 0.5 * d3 + off)
        if lo <= cands[0] and cands[1] <= hi:
            return cands, False
    return (lo, hi), True


def linear_regime_d1(l_tr: float = defaults.LOS_DISTANCE, d3: float = defaults.END_TO_END) -> float:
    """Metasurface optimum ``d1 = (5 d3 - rho2)/8`` with ``rho2 = sqrt(d3^2 + 24 L^2)``."""
    rho2 = math.sqrt(d3**2 + 24 * l_tr**2)
    lo, _ = admissible_d1(l_tr, d3)
    return max(lo, (5 * d3 - rho2) / 8)


def printed_z_quadratic(l_tr: float, d3: float) -> float:
    """The elevation quoted alongside the quadratic-regime optimum,
    ``H_e*sqrt(1 - rho1/L^2)``; kept for comparison with the ellipse value."""
    he = 0.5 * math.sqrt(d3**2 - l_tr**2)
    rho1 = 3 * l_tr**2 - d3**2
    return he * math.sqrt(max(0.0, 1 - rho1 / l_tr**2))


def printed_z_linear(l_tr: float, d3: float) -> float:
    """Quoted elevation of the linear-regime optimum,
    ``H_e*[1 - (d3^2 + 12 L^2 - rho2 d3)/(8 L^2)]``."""
    he = 0.5 * math.sqrt(d3**2 - l_tr**2)
    rho2 = math.sqrt(d3**2 + 24 * l_tr**2)
    return he * (1 - (d3**2 + 12 * l_tr**2 - rho2 * d3) / (8 * l_tr**2))


def _omegas(d1: float, d3: float, beam: BeamParams, focal: float) -> tuple[float, float]:
    """Far-field QP receive widths as functions of ``d1``."""
    zr = beam.rayleigh_range
    d2 = d3 - d1
    pre = beam.wavelength / (math.pi * beam.waist)
    w1 = pre * math.sqrt(zr**2 * d2**4 / d1**4 + d1**4 / (4 * focal**2))
    w2 = pre * math.sqrt(zr**2 * d2**2 / d1**2 + d2**2 * d1**2 / (4 * focal**2))
    return w1, w2


def qp_stationarity_residual(d1: float, focal: float, d3: float, beam: BeamParams,
                             lens: LensConfig) -> float:
    """Stationarity condition of the QP saturation GML exactly as quoted.

    ``erf(sqrt(pi)/2 a/w1)/erf(sqrt(pi)/2 a/w2) (w1/w2)^4
    exp(-pi a^2/2 (1/w1^2 - 1/w2^2)) (d1^8 - 4 d3 zR^2 d2^3 f^2)
    - 2 zR^2 d1^2 f^2 d2 d3 + d1^6 d2 (d3 - 2 d1)/2``, divided by ``d3^8`` so
    that the value is dimensionless.
    """
    zr, a = beam.rayleigh_range, lens.radius
    d2 = d3 - d1
    w1, w2 = _omegas(d1, d3, beam, focal)
    c = math.sqrt(math.pi) / 2 * a
    ratio = special.erf(c / w1) / special.erf(c / w2) * (w1 / w2) ** 4
    expo = math.exp(-math.pi * a**2 / 2 * (1 / w1**2 - 1 / w2**2))
    value = (ratio * expo * (d1**8 - 4 * d3 * zr**2 * d2**3 * focal**2)
             - 2 * zr**2 * d1**2 * focal**2 * d2 * d3 + 0.5 * d1**6 * d2 * (d3 - 2 * d1))
    # every term has dimension length^8
    return value / d3**8


def qp_gradient(d1: float, focal: float, d3: float, beam: BeamParams, lens: LensConfig) -> float:
    """Sign-faithful derivative of ``log[erf(c/w1) erf(c/w2)]`` w.r.t. ``d1``,
    ``c = sqrt(pi/2) a``, with the same far-field widths as
    :func:`qp_stationarity_residual`.  Its root is the QP optimum of that
    width model."""
    zr = beam.rayleigh_range
    d2 = d3 - d1
    w1, w2 = _omegas(d1, d3, beam, focal)
    pre2 = (beam.wavelength / (math.pi * beam.waist)) ** 2
    dw1sq = pre2 * (-4 * zr**2 * d2**3 * d3 / d1**5 + d1**3 / focal**2)
    dw2sq = pre2 * (-2 * d2 * (zr**2 / d1**2 + d1**2 / (4 * focal**2))
                    + d2**2 * (-2 * zr**2 / d1**3 + d1 / (2 * focal**2)))
    c = math.sqrt(math.pi / 2) * lens.radius

    def term(w: float, dwsq: float) -> float:
        # d/dd1 log erf(c/w) = -(2/sqrt(pi)) e^{-c^2/w^2} c/(2 w^3) dw^2/dd1 / erf(c/w)
        u = c / w
        return -math.exp(-u * u) * u * dwsq / (math.sqrt(math.pi) * w * w * special.erf(u))

    return term(w1, dw1sq) + term(w2, dw2sq)


def fp_stationarity_residual(d1: float, d3: float, beam: BeamParams, lens: LensConfig) -> float:
    """``2 K e^{-t^2 K^4} erf(t K) + e^{-t^2 K^2} erf(t K^2)`` with
    ``K = d1/(d3 - d1)`` and ``t = sqrt(pi/2) a/w0``.

    Both terms are positive for ``K > 0``, so there is no root; the FP
    optimum is a plateau found by :func:`grid_search_verify`.
    """
    if d1 == d3:
        raise DomainError("d1 must differ from d3")
    kap = d1 / (d3 - d1)
    t = math.sqrt(math.pi / 2) * lens.radius / beam.waist
    return (2 * kap * math.exp(-t**2 * kap**4) * special.erf(t * kap)
            + math.exp(-t**2 * kap**2) * special.erf(t * kap**2))


def find_roots(residual: Callable[[float], float], lo: float, hi: float,
               scan: int = SCAN_POINTS, xtol: float = 1e-10) -> list[tuple[float, dict]]:
    """All sign changes of ``residual`` on ``[lo, hi]`` located by a uniform
    pre-scan and refined with Brent's bracketed method.

    Raises
    ------
    ConvergenceError
        When the scan finds no sign change; the message lists the range of
        residual values seen.
    """
    xs = np.linspace(lo, hi, scan)
    vals = np.array([residual(x) for x in xs])
    roots = []
    for i in np.flatnonzero(np.sign(vals[:-1]) * np.sign(vals[1:]) < 0):
        root, info = optimize.brentq(residual, xs[i], xs[i + 1], xtol=xtol, rtol=1e-15,
                                     full_output=True)
        roots.append((root, {"bracket": (float(xs[i]), float(xs[i + 1])),
                             "iterations": info.iterations,
                             "residual": float(residual(root))}))
    if not roots:
        raise ConvergenceError(
            f"no sign change in [{lo}, {hi}] over {scan} samples "
            f"(residual between {vals.min():.3e} and {vals.max():.3e})")
    return roots


# --------------------------------------------------------------------------
# Grid verifier
# --------------------------------------------------------------------------
@dataclass(frozen=True)
class GmlObjective:
    """Picklable ``d1 -> GML`` objective for the grid verifier.

    ``model`` selects ``"g1"``, ``"g2"``, ``"g3"``, ``"piecewise"`` or
    ``"numerical"`` (separable erf-form field integrated over the lens).
    """

    irs: IrsConfig
    model: str = "piecewise"
    beam: BeamParams = BeamParams()
    lens: LensConfig = LensConfig()
    l_tr: float = defaults.LOS_DISTANCE
    d3: float = defaults.END_TO_END

    def __call__(self, d1: float) -> float:
        g = LinkGeometry.from_d1(d1, self.l_tr, self.d3)
        m = self.model
        if m == "g1":
            return g1(g, self.beam, self.irs, self.lens).value
        if m == "g2":
            return g2(g, self.beam, self.irs).value
        if m == "g3":
            return g3(self.irs.profile, g, self.beam, self.lens, self.irs.focal).value
        if m == "piecewise":
            return gml_piecewise(g, self.beam, self.irs, self.lens).value
        if m == "numerical":
            from .wave_optics_oracle import numerical_gml
            return numerical_gml(g, self.beam, self.irs, self.lens, evaluator="erf")
        raise DomainError(f"unknown objective model {m!r}")


def _evaluate(objective: Callable[[float], float], d1s: np.ndarray, jobs: int) -> np.ndarray:
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            return np.array(list(pool.map(objective, d1s, chunksize=max(1, len(d1s) // (4 * jobs)))))
    return np.array([objective(d) for d in d1s])


def grid_search_verify(objective: Callable[[float], float], l_tr: float = defaults.LOS_DISTANCE,
                       d3: float = defaults.END_TO_END, resolution: int = GRID_POINTS,
                       tol_plateau: float = PLATEAU_TOL, maximize: bool = True,
                       jobs: int = 1, regime: Regime | None = None) -> PlacementResult:
    """Exhaustive scan of ``objective(d1)`` over the admissible range.

    Returns every local optimum whose value ties the global optimum to
    ``1e-9`` relative (symmetric optima), and the ``x_o`` interval around the
    global optimum on which the objective stays within ``tol_plateau``
    (relative) of it.  ``diagnostics`` holds the grid, the values and the
    grid step in ``x`` so callers can compare with a closed form to within
    one cell.  With ``jobs > 1`` the objective must be picklable.
    """
    lo, hi = admissible_d1(l_tr, d3)
    d1s = np.linspace(lo, hi, resolution)
    vals = _evaluate(objective, d1s, jobs)
    score = vals if maximize else -vals
    best = score.max()
    ibest = int(np.argmax(score))
    tie = np.abs(score - best) <= 1e-9 * max(abs(best), 1e-300)
    # local optima among the ties (a flat run counts once, at its first cell)
    peaks = [i for i in np.flatnonzero(tie) if i == 0 or not tie[i - 1]]
    near = np.abs(vals - vals[ibest]) <= tol_plateau * abs(vals[ibest])
    # contiguous plateau containing the best cell
    i0 = ibest
    while i0 > 0 and near[i0 - 1]:
        i0 -= 1
    i1 = ibest
    while i1 < resolution - 1 and near[i1 + 1]:
        i1 += 1
    xs = (d1s - 0.5 * d3) * d3 / l_tr
    diag = {"d1_grid": d1s, "values": vals, "cell_x": float(xs[1] - xs[0]),
            "cell_d1": float(d1s[1] - d1s[0]), "tol_plateau": tol_plateau,
            "plateau_d1": (float(d1s[i0]), float(d1s[i1]))}
    return _result([d1s[i] for i in peaks], l_tr, d3, regime=regime, objective=float(vals[ibest]),
                   interval=(float(xs[i0]), float(xs[i1])), diagnostics=diag)


# --------------------------------------------------------------------------
# Optima
# --------------------------------------------------------------------------
def _regime(regime: "Regime | str | int") -> Regime:
    if isinstance(regime, int):
        return list(Regime)[regime - 1]
    return Regime(regime)


def optimal_irs_position(profile: "Profile | str", regime: "Regime | str | int",
                         l_tr: float = defaults.LOS_DISTANCE, d3: float = defaults.END_TO_END,
                         beam: BeamParams = BeamParams(), lens: LensConfig = LensConfig(),
                         focal: float | None = None,
                         fp_objective: Callable[[float], float] | None = None,
                         resolution: int = GRID_POINTS, jobs: int = 1) -> PlacementResult:
    """Optimal metasurface position for a given power-scaling regime.

    Quadratic regime: the symmetric pair ``d1 = d3/2 +- sqrt(2 rho1)/4``.
    Linear regime: ``d1 = (5 d3 - rho2)/8``.  Saturation: ``d1 = d3/2`` for
    LP, the root of :func:`qp_stationarity_residual` for QP (the root with
    the largest saturation GML when several exist) and, for FP, the plateau
    of ``fp_objective`` (default: the saturation GML) found by grid search.
    """
    prof = Profile.parse(profile)
    reg = _regime(regime)
    if prof is Profile.MIRROR:
        return optimal_mirror_position(reg, l_tr, d3, beam, lens)
    if reg is Regime.QUADRATIC:
        d1s, fallback = quadratic_regime_d1(l_tr, d3)
        return _result(d1s, l_tr, d3, regime=reg,
                       diagnostics={"endpoint_fallback": fallback,
                                    "printed_z": printed_z_quadratic(l_tr, d3)})
    if reg is Regime.LINEAR:
        return _result([linear_regime_d1(l_tr, d3)], l_tr, d3, regime=reg,
                       diagnostics={"printed_z": printed_z_linear(l_tr, d3)})
    if prof is Profile.LP:
        return _result([0.5 * d3], l_tr, d3, regime=reg)
    lo, hi = admissible_d1(l_tr, d3)
    if prof is Profile.QP:
        if focal is None or not focal > 0:
            raise DomainError("the quadratic profile needs a positive focal parameter")
        roots = find_roots(lambda d: qp_stationarity_residual(d, focal, d3, beam, lens), lo, hi)
        sat = GmlObjective(IrsConfig.square(1.0, prof, focal), "g3", beam, lens, l_tr, d3)
        root, info = max(roots, key=lambda r: sat(r[0]))
        info["all_roots"] = [r for r, _ in roots]
        return _result([root], l_tr, d3, regime=reg, objective=sat(root), diagnostics=info)
    objective = fp_objective or GmlObjective(IrsConfig.square(1.0, prof), "g3", beam, lens,
                                             l_tr, d3)
    res = grid_search_verify(objective, l_tr, d3, resolution, jobs=jobs, regime=reg)
    res.diagnostics["condition_interval_x"] = (0.0, x_from_d1(hi, l_tr, d3))
    return res


def optimal_mirror_position(regime: "Regime | str | int", l_tr: float = defaults.LOS_DISTANCE,
                            d3: float = defaults.END_TO_END, beam: BeamParams = BeamParams(),
                            lens: LensConfig = LensConfig()) -> PlacementResult:
    """Optimal mirror position.

    Quadratic regime: both (margin-clamped) end points, which tie.  Linear
    regime: the end point nearest the transmitter (minimal ``d1``).
    Saturation: the GML does not depend on the position; the whole ellipse
    is returned as the interval with ``diagnostics["flat"] = True``.
    """
    reg = _regime(regime)
    lo, hi = admissible_d1(l_tr, d3)
    if reg is Regime.QUADRATIC:
        return _result([lo, hi], l_tr, d3, regime=reg)
    if reg is Regime.LINEAR:
        return _result([lo], l_tr, d3, regime=reg)
    return _result([0.5 * d3], l_tr, d3, regime=reg,
                   interval=(x_from_d1(lo, l_tr, d3), x_from_d1(hi, l_tr, d3)),
                   diagnostics={"flat": True})


def optimal_relay_position(l_tr: float = defaults.LOS_DISTANCE,
                           d3: float = defaults.END_TO_END) -> PlacementResult:
    """A decode-and-forward relay is best equidistant from both terminals,
    ``(x_o, z_o) = (0, H_e)``, which maximises the diversity of the weaker hop."""
    if not d3 > l_tr > 0:
        raise DomainError(f"need d3 > L_tr > 0, got d3={d3}, L_tr={l_tr}")
    return _result([0.5 * d3], l_tr, d3)


@dataclass(frozen=True)
class RelayDiversityObjective:
    """``d1 -> min(rho1, rho2)/2``: diversity of the relay chain (picklable)."""

    beam: BeamParams = BeamParams()
    cn2: float = defaults.CN2
    d3: float = defaults.END_TO_END

    def __call__(self, d1: float) -> float:
        from .turbulence_channel import gg_params, rytov_variance
        rho = [gg_params(rytov_variance(d, self.beam, self.cn2)).rho for d in (d1, self.d3 - d1)]
        return min(rho) / 2


# --------------------------------------------------------------------------
# Output
# --------------------------------------------------------------------------
def write_placement_csv(path, result: PlacementResult, regime_label: str,
                        pout: Sequence[float] | None = None, l_tr: float = defaults.LOS_DISTANCE,
                        d3: float = defaults.END_TO_END, manifest: dict | None = None) -> None:
    """Write a grid-search result as ``x_m, d1_m, objective, pout, regime, is_optimal``."""
    d1s = result.diagnostics["d1_grid"]
    vals = result.diagnostics["values"]
    lo_d1, hi_d1 = result.diagnostics["plateau_d1"]
    with open(path, "w", newline="") as fh:
        for key, value in (manifest or {}).items():
            fh.write(f"# {key}: {value}\n")
        w = csv.writer(fh)
        w.writerow(["x_m", "d1_m", "objective", "pout", "regime", "is_optimal"])
        for i, (d1, v) in enumerate(zip(d1s, vals)):
            p = "" if pout is None else f"{pout[i]:.10e}"
            opt = int(lo_d1 <= d1 <= hi_d1)
            w.writerow([f"{x_from_d1(d1, l_tr, d3):.6f}", f"{d1:.6f}", f"{v:.10e}", p,
                        regime_label, opt])
