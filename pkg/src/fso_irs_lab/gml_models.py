"""Closed-form geometric-and-misalignment loss (GML) of surface-assisted links.

The received power fraction passes through three scaling regimes as the
surface area ``Sigma_irs`` grows:

* quadratic: the surface is small compared with both the incident footprint
  and the lens-plane beam, so it acts as a coherent plane-wave aperture
  (``G1 ~ Sigma_irs**2``);
* linear: the lens captures the whole reflected beam, which carries the power
  intercepted by the surface (``G2 ~ Sigma_irs``);
* saturation: the surface intercepts the entire incident beam and the lens
  size limits the collected power (``G3`` independent of ``Sigma_irs``).

All expressions use the equal-area square lens of side ``a*sqrt(pi)``.
Mirrors reuse the metasurface expressions with both angles replaced by the
specular angle ``(theta_i + theta_r)/2`` and a zero phase profile.
"""
from __future__ import annotations

import cmath
import enum
import math
from dataclasses import dataclass
from typing import NamedTuple

from scipy import special

from . import special_functions as sf
from .errors import DomainError
from .geometry import (
    BeamParams,
    IrsConfig,
    LensConfig,
    LinkGeometry,
    Profile,
    beamwidth,
    curvature_radius,
    incident_footprint,
)

__all__ = [
    "Regime",
    "GmlEvaluation",
    "RegimeBoundaries",
    "LinearRegimeCoefficients",
    "SaturationWidths",
    "LinkGains",
    "link_gains",
    "linear_regime_coefficients",
    "erf_difference_moment",
    "saturation_widths",
    "linear_regime_widths",
    "g1_tilde",
    "g1",
    "g1_mirror",
    "g2_tilde",
    "g2_bar",
    "g2",
    "g2_mirror",
    "g3",
    "regime_boundaries",
    "gml_piecewise",
    "relay_gml",
    "qp_equivalent_focal",
    "qp_lp_matching_focal",
]

#: Ratio used to test "much smaller than" preconditions.
SMALL_RATIO = 0.1
#: Ratio used to test "much larger than" preconditions.
LARGE_RATIO = 10.0


class Regime(str, enum.Enum):
    QUADRATIC = "quadratic"
    LINEAR = "linear"
    SATURATION = "saturation"


@dataclass(frozen=True)
class GmlEvaluation:
    """A closed-form GML value with its provenance.

    Attributes
    ----------
    value : float
        Power fraction in ``[0, 1]``.  Formulas evaluated far outside their
        regime can exceed the passivity bound; such values are clipped to 1
        and a warning is attached.
    regime : Regime
    formula_id : str
        Short identifier of the expression used, e.g. ``"G1"`` or ``"G3_QP"``.
    w_rx_x, w_rx_y : float
        Equivalent lens-plane beam widths of the regime (m).
    warnings : tuple of str
        Violated validity conditions.  Values are still returned because the
        regime maps deliberately evaluate formulas outside their domain.
    raw : float
        The formula value before clipping.
    """

    value: float
    regime: Regime
    formula_id: str
    w_rx_x: float = math.nan
    w_rx_y: float = math.nan
    warnings: tuple[str, ...] = ()
    raw: float = math.nan

    @property
    def rx_area(self) -> float:
        """Equivalent receive footprint ``pi*w_rx_x*w_rx_y`` (m^2)."""
        return math.pi * self.w_rx_x * self.w_rx_y

    @property
    def valid(self) -> bool:
        return not self.warnings


def _evaluation(value: float, regime: Regime, formula_id: str, wx: float, wy: float,
                warnings: list[str]) -> GmlEvaluation:
    raw = float(value)
    if value > 1.0:
        warnings = warnings + [f"{formula_id}={value:.6g} exceeds 1; clipped"]
        value = 1.0
    return GmlEvaluation(float(max(value, 0.0)), regime, formula_id, float(wx), float(wy),
                         tuple(warnings), raw)


class LinkGains(NamedTuple):
    """Beamforming-style factorisation ``G1 = 16 pi^2 Sigma^2 s s'/lambda^4 g_LS g_PD``.

    ``g_LS = 2*pi*w0**2/(4*pi*d1**2)`` is the source gain seen from the
    surface and ``g_PD = pi*a**2/(4*pi*d2**2)`` the lens collection gain.
    """

    g_ls: float
    g_pd: float


def link_gains(geometry: LinkGeometry, beam: BeamParams, lens: LensConfig) -> LinkGains:
    g_ls = 2 * math.pi * beam.waist**2 / (4 * math.pi * geometry.d1**2)
    g_pd = math.pi * lens.radius**2 / (4 * math.pi * geometry.d2**2)
    return LinkGains(g_ls, g_pd)


def _sines(geometry: LinkGeometry, profile: Profile) -> tuple[float, float]:
    ti, tr = geometry.effective_angles(profile)
    return abs(math.sin(ti)), abs(math.sin(tr))


# --------------------------------------------------------------------------
# Regime 1
# --------------------------------------------------------------------------
def _sinc_power_bracket(u: float) -> float:
    """``u*Si(u) + cos(u) - 1``; series below ``u = 1e-2`` to avoid cancellation."""
    if u < 1e-2:
        u2 = u * u
        return u2 / 2 - u2 * u2 / 72 + u2**3 / 3600
    return u * sf.sine_integral(u) + math.cos(u) - 1.0


def _quadratic_widths(geometry: LinkGeometry, beam: BeamParams, irs: IrsConfig,
                      profile: Profile) -> tuple[float, float]:
    _, sr = _sines(geometry, profile)
    wx = 2 * geometry.d2 / (beam.k * sr * irs.lx)
    wy = 2 * geometry.d2 / (beam.k * irs.ly)
    return wx, wy


def _quadratic_regime_checks(geometry: LinkGeometry, beam: BeamParams, irs: IrsConfig,
                      profile: Profile) -> list[str]:
    fp = incident_footprint(geometry, beam, geometry.effective_angles(profile)[0])
    limits_x = [fp.w_in_x]
    limits_y = [fp.w_in_y]
    if profile in (Profile.LP, Profile.MIRROR):
        fresnel = math.sqrt(2 * geometry.d1 * geometry.d2 / (beam.k * geometry.d3))
        limits_x.append(fresnel)
        limits_y.append(fresnel)
    elif profile is Profile.QP:
        qp = math.sqrt(4 * irs.focal / beam.k)
        limits_x.append(qp)
        limits_y.append(qp)
    out = []
    if irs.lx > SMALL_RATIO * min(limits_x) or irs.ly > SMALL_RATIO * min(limits_y):
        out.append("surface not small against the incident footprint / Fresnel size")
    return out


def g1_tilde(geometry: LinkGeometry, beam: BeamParams, irs: IrsConfig,
             lens: LensConfig) -> GmlEvaluation:
    """Plane-wave aperture GML with the sinc-squared lens integral.

    ``C1*[u_x Si(u_x) + cos(u_x) - 1]*[u_y Si(u_y) + cos(u_y) - 1]`` with
    ``u_i = a*sqrt(pi)/w_rx_i``, ``w_rx_x = 2*d2/(k*sin(theta_r)*L_x)``,
    ``w_rx_y = 2*d2/(k*L_y)`` and
    ``C1 = 8*d2**2*lambda**2*sin(theta_i)/(pi**6*a**2*w(d1)**2*sin(theta_r))``.
    The value does not depend on the phase profile.
    """
    geometry.require_oblique()
    prof = irs.profile
    si, sr = _sines(geometry, prof)
    w = beamwidth(geometry.d1, beam)
    a = lens.radius
    wx, wy = _quadratic_widths(geometry, beam, irs, prof)
    c1 = 8 * geometry.d2**2 * beam.wavelength**2 * si / (math.pi**6 * a**2 * w**2 * sr)
    ux = a * math.sqrt(math.pi) / wx
    uy = a * math.sqrt(math.pi) / wy
    value = c1 * _sinc_power_bracket(ux) * _sinc_power_bracket(uy)
    return _evaluation(value, Regime.QUADRATIC, "G1_tilde", wx, wy,
                       _quadratic_regime_checks(geometry, beam, irs, prof))


def _g1_value(geometry: LinkGeometry, beam: BeamParams, area: float, lens: LensConfig,
              sin_product: float) -> float:
    gains = link_gains(geometry, beam, lens)
    return 16 * math.pi**2 * area**2 * sin_product / beam.wavelength**4 * gains.g_ls * gains.g_pd


def g1(geometry: LinkGeometry, beam: BeamParams, irs: IrsConfig,
       lens: LensConfig) -> GmlEvaluation:
    """Quadratic-regime GML ``16 pi^2 Sigma^2 |sin ti||sin tr|/lambda^4 g_LS g_PD``.

    For a mirror the specular angle replaces both sines (see :func:`g1_mirror`).
    """
    if irs.profile is Profile.MIRROR:
        return g1_mirror(geometry, beam, irs, lens)
    si, sr = _sines(geometry, irs.profile)
    wx, wy = _quadratic_widths(geometry, beam, irs, irs.profile)
    warn = _quadratic_regime_checks(geometry, beam, irs, irs.profile)
    if lens.area > SMALL_RATIO * math.pi * wx * wy:
        warn.append("lens not small against the receive footprint")
    if geometry.d1 < LARGE_RATIO * beam.rayleigh_range:
        warn.append("surface inside the Rayleigh range of the source")
    value = _g1_value(geometry, beam, irs.area, lens, si * sr)
    return _evaluation(value, Regime.QUADRATIC, "G1", wx, wy, warn)


def g1_mirror(geometry: LinkGeometry, beam: BeamParams, irs: IrsConfig,
              lens: LensConfig) -> GmlEvaluation:
    """Quadratic-regime GML of a rotated mirror, ``sin(theta_mir)**2`` in place of
    ``sin(ti)*sin(tr)``."""
    s = abs(math.sin(geometry.theta_mirror))
    mirror = IrsConfig(irs.lx, irs.ly, Profile.MIRROR)
    wx, wy = _quadratic_widths(geometry, beam, mirror, Profile.MIRROR)
    warn = _quadratic_regime_checks(geometry, beam, mirror, Profile.MIRROR)
    fp = incident_footprint(geometry, beam, geometry.theta_mirror)
    fresnel = 2 * geometry.d1 * geometry.d2 / (beam.k * geometry.d3)
    if irs.area > SMALL_RATIO * min(fp.area, fresnel):
        warn.append("mirror not small against the footprint / Fresnel area")
    value = _g1_value(geometry, beam, irs.area, lens, s * s)
    return _evaluation(value, Regime.QUADRATIC, "G1_mir", wx, wy, sorted(set(warn)))


# --------------------------------------------------------------------------
# Regime 2
# --------------------------------------------------------------------------
@dataclass(frozen=True)
class LinearRegimeCoefficients:
    """Complex coefficients of the linear-regime (Owen's T) expression.

    ``b`` is the quadratic coefficient of the surface integrand along one
    axis, ``B = Re(b)``, ``b_tilde = b*conj(b)/(b + conj(b))``,
    ``zeta1 = sqrt(b)*L/2`` and ``zeta2 = j*sqrt(conj(b))/(2*sqrt(B))``.
    Index 0 is the x axis and index 1 the y axis.
    """

    b: tuple[complex, complex]
    lengths: tuple[float, float]

    @property
    def B(self) -> tuple[float, float]:
        return (self.b[0].real, self.b[1].real)

    @property
    def b_tilde(self) -> tuple[float, float]:
        return tuple((bi * bi.conjugate() / (2 * bi.real)).real for bi in self.b)

    @property
    def zeta1(self) -> tuple[complex, complex]:
        return tuple(cmath.sqrt(bi) * L / 2 for bi, L in zip(self.b, self.lengths))

    @property
    def zeta2(self) -> tuple[complex, complex]:
        return tuple(1j * cmath.sqrt(bi.conjugate()) / (2 * math.sqrt(bi.real)) for bi in self.b)


def linear_regime_coefficients(geometry: LinkGeometry, beam: BeamParams,
                           irs: IrsConfig) -> LinearRegimeCoefficients:
    """Quadratic coefficients ``b_x``, ``b_y`` for the configured profile.

    LP (and the mirror at its specular angle):
    ``b_x = si^2/w^2 + j k si^2/(2R) + j k sr^2/(2 d2)``,
    ``b_y = 1/w^2 + j k/(2R) + j k/(2 d2)``; QP:
    ``b_x = si^2/w^2 + j k sr^2/(4f)``, ``b_y = 1/w^2 + j k/(4f)``;
    FP: ``b_x = si^2/w^2``, ``b_y = 1/w^2``.
    """
    prof = irs.profile
    si, sr = _sines(geometry, prof)
    w = beamwidth(geometry.d1, beam)
    R = curvature_radius(geometry.d1, beam)
    k = beam.k
    d2 = geometry.d2
    if prof in (Profile.LP, Profile.MIRROR):
        bx = si**2 / w**2 + 1j * k * si**2 / (2 * R) + 1j * k * sr**2 / (2 * d2)
        by = 1 / w**2 + 1j * k / (2 * R) + 1j * k / (2 * d2)
    elif prof is Profile.QP:
        inv = 0.0 if math.isinf(irs.focal) else 1.0 / (4 * irs.focal)
        bx = si**2 / w**2 + 1j * k * sr**2 * inv
        by = 1 / w**2 + 1j * k * inv
    else:
        bx = complex(si**2 / w**2)
        by = complex(1 / w**2)
    return LinearRegimeCoefficients((complex(bx), complex(by)), (irs.lx, irs.ly))


class OwenTerms(NamedTuple):
    a: complex
    c1: complex
    c2: complex
    degenerate: bool


def _owen_arguments(z1: complex, z2: complex, tol: float = 1e-9) -> OwenTerms:
    """Arguments of the Owen's T terms for one erf-difference moment.

    When ``1 + 2 z2^2 + 2 conj(z2)^2`` vanishes (as it does identically for
    the physical coefficients, since ``Re(b)/B = 1``) the ``c1`` terms are
    0/0 with limit 0 and ``c2`` diverges; the limits ``c1 = 0`` and
    ``c2 = -inf * sign`` are returned with ``degenerate=True``.
    """
    z1c = z1.conjugate()
    z2c = z2.conjugate()
    radicand = 1 + 2 * z2 * z2 + 2 * z2c * z2c
    a = math.sqrt(2) * z1 / cmath.sqrt(1 + 2 * z2 * z2)
    ratio = z1 / z1c
    num1 = z1c * (1 + 2 * z2 * z2 - 2 * ratio * abs(z2) ** 2)
    num2 = -z1c * (1 + 2 * z2 * z2 + 2 * ratio * abs(z2) ** 2)
    scale = 1 + 4 * abs(z2) ** 2
    if abs(radicand) <= tol * scale:
        direction = (num2 / z1).real
        c2 = complex(-math.inf if direction < 0 else math.inf)
        return OwenTerms(a, 0j, c2, True)
    den = z1 * cmath.sqrt(radicand)
    return OwenTerms(a, num1 / den, num2 / den, False)


def erf_difference_moment(z1: complex, z2: complex) -> float:
    """``int phi(x)*|erf(z1 + z2 x) - erf(-z1 + z2 x)|^2 dx`` via Owen's T.

    ``phi`` is the standard normal density.  The value is
    ``-8T(a, c1) - 8T(a*, c1*) + 8T(a, c2) + 8T(a*, c2*) + 4``, exact for
    real ``z1``, ``z2`` and for the physical coefficient family (where it
    reduces to ``4*erf(a/sqrt(2))``).  For generic complex arguments the
    real-argument identity can be off by the branch constant and must not be
    used.
    """
    t = _owen_arguments(complex(z1), complex(z2))

    def pair(h: complex) -> complex:
        if h == 0:
            return 0j
        return sf.owen_t(t.a, h) + sf.owen_t(t.a.conjugate(), h.conjugate())

    total = -8 * pair(t.c1) + 8 * pair(t.c2) + 4
    return float(total.real)


def linear_regime_widths(geometry: LinkGeometry, beam: BeamParams,
                         irs: IrsConfig) -> tuple[float, float]:
    """Equivalent lens-plane widths in the linear regime (m).

    ``w_x = 2*sqrt(2)*d2*sqrt(b_tilde_x)/(k*|sin(theta_r)|)`` and
    ``w_y = 2*sqrt(2)*d2*sqrt(b_tilde_y)/k``: the ``1/e^2`` intensity radius
    of ``exp(-c^2/(4b))`` with ``c = k*sin(theta_r)*x_p/d2``.  They coincide
    with the saturation-regime widths.
    """
    coef = linear_regime_coefficients(geometry, beam, irs)
    _, sr = _sines(geometry, irs.profile)
    btx, bty = coef.b_tilde
    k = beam.k
    d2 = geometry.d2
    return (2 * math.sqrt(2) * d2 * math.sqrt(btx) / (k * sr),
            2 * math.sqrt(2) * d2 * math.sqrt(bty) / k)


def g2_tilde(geometry: LinkGeometry, beam: BeamParams, irs: IrsConfig,
             lens: LensConfig) -> GmlEvaluation:
    """Linear-regime GML with an unbounded lens, via Owen's T.

    ``(1/16)*[8T(a1, c21) + 8T(a1*, c21*) + 4]*[8T(a2, c22) + 8T(a2*, c22*) + 4]``
    """
    geometry.require_oblique()
    coef = linear_regime_coefficients(geometry, beam, irs)
    moments = [erf_difference_moment(z1, z2) for z1, z2 in zip(coef.zeta1, coef.zeta2)]
    value = moments[0] * moments[1] / 16.0
    wx, wy = linear_regime_widths(geometry, beam, irs)
    warn = []
    if lens.radius < LARGE_RATIO * min(wx, wy):
        warn.append("lens not large against the receive footprint")
    return _evaluation(value, Regime.LINEAR, "G2_tilde", wx, wy, warn)


def g2_bar(geometry: LinkGeometry, beam: BeamParams, irs: IrsConfig) -> GmlEvaluation:
    """``erf(L_x sin(ti)/(sqrt(2) w)) * erf(L_y/(sqrt(2) w))``: intercepted power."""
    si, _ = _sines(geometry, irs.profile)
    w = beamwidth(geometry.d1, beam)
    value = (sf.erf_complex(irs.lx * si / (math.sqrt(2) * w)).real
             * sf.erf_complex(irs.ly / (math.sqrt(2) * w)).real)
    wx, wy = linear_regime_widths(geometry, beam, irs)
    warn = []
    fp = incident_footprint(geometry, beam, geometry.effective_angles(irs.profile)[0])
    if irs.area > SMALL_RATIO * fp.area:
        warn.append("surface not small against the incident footprint")
    return _evaluation(value, Regime.LINEAR, "G2_bar", wx, wy, warn)


def _g2(geometry: LinkGeometry, beam: BeamParams, irs: IrsConfig, s: float,
        formula_id: str) -> GmlEvaluation:
    gains = link_gains(geometry, beam, LensConfig())
    value = 4 * math.pi * irs.area * s / beam.wavelength**2 * gains.g_ls
    wx, wy = linear_regime_widths(geometry, beam, irs)
    fp = incident_footprint(geometry, beam, geometry.effective_angles(irs.profile)[0])
    warn = []
    if irs.lx > SMALL_RATIO * fp.w_in_x or irs.ly > SMALL_RATIO * fp.w_in_y:
        warn.append("surface not small against the incident footprint")
    return _evaluation(value, Regime.LINEAR, formula_id, wx, wy, warn)


def g2(geometry: LinkGeometry, beam: BeamParams, irs: IrsConfig) -> GmlEvaluation:
    """Linear-regime GML ``4 pi Sigma |sin ti|/lambda^2 * g_LS``."""
    if irs.profile is Profile.MIRROR:
        return g2_mirror(geometry, beam, irs)
    return _g2(geometry, beam, irs, abs(math.sin(geometry.theta_i)), "G2")


def g2_mirror(geometry: LinkGeometry, beam: BeamParams, irs: IrsConfig) -> GmlEvaluation:
    """Linear-regime GML of a mirror, with ``sin(theta_mir)``."""
    mirror = IrsConfig(irs.lx, irs.ly, Profile.MIRROR)
    return _g2(geometry, beam, mirror, abs(math.sin(geometry.theta_mirror)), "G2_mir")


# --------------------------------------------------------------------------
# Regime 3
# --------------------------------------------------------------------------
@dataclass(frozen=True)
class SaturationWidths:
    """Diffraction (``Lambda1 = 2 d2/(k w^2)``) and divergence (``Lambda2 = d2/R``)
    factors with the resulting saturation-regime lens-plane widths."""

    lambda1: float
    lambda2: float
    w_x: float
    w_y: float


def saturation_widths(profile: "Profile | str", geometry: LinkGeometry, beam: BeamParams,
                      focal: float | None = None) -> SaturationWidths:
    """Equivalent lens-plane widths when the surface captures the whole beam.

    LP: ``w_x = w*(sr/si)*sqrt((L1*s)^2 + (L2*s + 1)^2)`` with
    ``s = si^2/sr^2`` and ``w_y = w*sqrt(L1^2 + (L2 + 1)^2)``;
    QP: ``w_x = w*(sr/si)*sqrt((s*L1)^2 + (d2/(2f))^2)``,
    ``w_y = w*sqrt(L1^2 + (d2/(2f))^2)``;
    FP: ``w_x = 2*d2*si/(k*w*sr)``, ``w_y = 2*d2/(k*w)``;
    mirror: ``w*sqrt(L1^2 + (L2 + 1)^2)`` on both axes.
    """
    prof = Profile.parse(profile)
    si, sr = _sines(geometry, prof)
    w = beamwidth(geometry.d1, beam)
    R = curvature_radius(geometry.d1, beam)
    k = beam.k
    d2 = geometry.d2
    l1 = 2 * d2 / (k * w**2)
    l2 = d2 / R
    if prof in (Profile.LP, Profile.MIRROR):
        s = si**2 / sr**2
        wx = w * (sr / si) * math.hypot(l1 * s, l2 * s + 1)
        wy = w * math.hypot(l1, l2 + 1)
    elif prof is Profile.QP:
        if focal is None or not focal > 0:
            raise DomainError("the quadratic profile needs a positive focal parameter")
        q = 0.0 if math.isinf(focal) else d2 / (2 * focal)
        s = si**2 / sr**2
        wx = w * (sr / si) * math.hypot(s * l1, q)
        wy = w * math.hypot(l1, q)
    else:
        wx = 2 * d2 * si / (k * w * sr)
        wy = 2 * d2 / (k * w)
    return SaturationWidths(l1, l2, wx, wy)


def g3(profile: "Profile | str", geometry: LinkGeometry, beam: BeamParams, lens: LensConfig,
       focal: float | None = None, irs: IrsConfig | None = None) -> GmlEvaluation:
    """Saturation-regime GML ``erf(sqrt(pi/2) a/w_x) * erf(sqrt(pi/2) a/w_y)``.

    Parameters
    ----------
    irs : IrsConfig, optional
        Only used to check that the surface is large against the incident
        footprint; the value itself does not depend on the surface size.
    """
    prof = Profile.parse(profile)
    geometry.require_oblique()
    sw = saturation_widths(prof, geometry, beam, focal)
    c = math.sqrt(math.pi / 2) * lens.radius
    value = special.erf(c / sw.w_x) * special.erf(c / sw.w_y)
    warn = []
    if irs is not None:
        fp = incident_footprint(geometry, beam, geometry.effective_angles(prof)[0])
        if irs.area < LARGE_RATIO * fp.area:
            warn.append("surface not large against the incident footprint")
    fid = "G3_mir" if prof is Profile.MIRROR else f"G3_{prof.value}"
    return _evaluation(value, Regime.SATURATION, fid, sw.w_x, sw.w_y, warn)


# --------------------------------------------------------------------------
# Piecewise law
# --------------------------------------------------------------------------
@dataclass(frozen=True)
class RegimeBoundaries:
    """Surface areas at which the scaling regime changes (m^2).

    Attributes
    ----------
    s1 : float
        Quadratic-to-linear boundary ``lambda^2 d2^2/(pi a^2 |sin tr|)``.
    s2 : float
        Linear-to-saturation boundary ``pi G3 w^2/(2 |sin ti|)``.
    s3 : float
        Quadratic-to-saturation boundary
        ``sqrt(G3) lambda d2 w/(a sqrt(2 sin ti sin tr))`` (two-regime branch).
    three_regime : bool
        ``G3 >= 2 d2^2 w0^2 |sin ti|/(d1^2 a^2 |sin tr|)``; when false the
        linear regime is skipped.
    g3 : float
    """

    profile: Profile
    s1: float
    s2: float
    s3: float
    three_regime: bool
    g3: float


def regime_boundaries(profile: "Profile | str", geometry: LinkGeometry, beam: BeamParams,
                      lens: LensConfig, focal: float | None = None) -> RegimeBoundaries:
    prof = Profile.parse(profile)
    si, sr = _sines(geometry, prof)
    w = beamwidth(geometry.d1, beam)
    a = lens.radius
    d1, d2 = geometry.d1, geometry.d2
    lam = beam.wavelength
    # G3 is well defined for any surface size; evaluate it first.
    gsat = g3(prof, geometry, beam, lens, focal).value
    s1 = lam**2 * d2**2 / (math.pi * a**2 * sr)
    s2 = math.pi * gsat * w**2 / (2 * si)
    s3 = math.sqrt(gsat) * lam * d2 * w / (a * math.sqrt(2 * si * sr))
    threshold = 2 * d2**2 * beam.waist**2 * si / (d1**2 * a**2 * sr)
    return RegimeBoundaries(prof, s1, s2, s3, gsat >= threshold, gsat)


def gml_piecewise(geometry: LinkGeometry, beam: BeamParams, irs: IrsConfig,
                  lens: LensConfig) -> GmlEvaluation:
    """Piecewise quadratic / linear / saturation GML for the configured profile.

    Three-regime branch: ``G1`` for ``Sigma < S1``, ``G2`` for
    ``S1 <= Sigma <= S2``, ``G3`` above.  Two-regime branch: ``G1`` up to
    ``S3`` and ``G3`` above.  Comparisons are strict, with no blending.
    """
    prof = irs.profile
    bd = regime_boundaries(prof, geometry, beam, lens, irs.focal)
    sigma = irs.area
    if bd.three_regime:
        if sigma < bd.s1:
            return g1(geometry, beam, irs, lens)
        if sigma <= bd.s2:
            return g2(geometry, beam, irs)
        return g3(prof, geometry, beam, lens, irs.focal, irs)
    if sigma <= bd.s3:
        return g1(geometry, beam, irs, lens)
    return g3(prof, geometry, beam, lens, irs.focal, irs)


# --------------------------------------------------------------------------
# Relay and profile equivalences
# --------------------------------------------------------------------------
def relay_gml(d: float, beam: BeamParams, lens: LensConfig) -> float:
    """Collected fraction of a perpendicular Gaussian beam,
    ``erf(sqrt(pi/2) a/w(d))^2``."""
    if not d > 0:
        raise DomainError("hop distance must be positive")
    w = beamwidth(d, beam)
    return float(special.erf(math.sqrt(math.pi / 2) * lens.radius / w) ** 2)


def qp_equivalent_focal(geometry: LinkGeometry, beam: BeamParams) -> float | None:
    """Quoted closed-form focal parameter for LP-like QP behaviour in saturation.

    ``f = k w^2 sr^2/(2 sqrt(2) si sqrt(si^2 - 2 sr^2))``; ``None`` when
    ``si^2 <= 2 sr^2`` and no real focal parameter exists.

    The value is kept as quoted.  Evaluated through :func:`g3` and the field
    oracle it yields a QP surface close to the focusing (FP) limit rather than
    the LP one, because ``d2/(2f)`` becomes small.  Use
    :func:`qp_lp_matching_focal` for the focal parameter that reproduces the
    LP saturation GML.
    """
    si, sr = abs(geometry.sin_i), abs(geometry.sin_r)
    radicand = si**2 - 2 * sr**2
    if radicand <= 0:
        return None
    w = beamwidth(geometry.d1, beam)
    return beam.k * w**2 * sr**2 / (2 * math.sqrt(2) * si * math.sqrt(radicand))


def qp_lp_matching_focal(geometry: LinkGeometry, beam: BeamParams, lens: LensConfig) -> float:
    """Focal parameter at which ``G3_QP`` equals ``G3_LP``, found by root finding.

    ``G3_QP`` grows monotonically with ``f`` from 0 towards the FP value, so
    a single crossing exists whenever ``G3_LP`` lies below the FP value.

    Raises
    ------
    DomainError
        If ``G3_LP`` is not below the focusing limit.
    """
    from scipy.optimize import brentq

    target = g3(Profile.LP, geometry, beam, lens).value
    top = g3(Profile.FP, geometry, beam, lens).value
    if not target < top:
        raise DomainError("LP saturation GML already equals the focusing limit")
    fun = lambda f: g3(Profile.QP, geometry, beam, lens, f).value - target
    hi = geometry.d3
    while fun(hi) < 0:
        hi *= 10
    return float(brentq(fun, 1e-9 * geometry.d3, hi, xtol=1e-12 * geometry.d3))
