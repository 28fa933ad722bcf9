"""Numerical field oracle for surface-assisted Gaussian-beam links.

Two tiers are provided.

* :func:`reflected_field_quadrature` integrates the Huygens kernel over the
  surface with the exact point-to-point distance.  It needs a dense grid
  (at least 12 nodes per phase cycle), so it is restricted to surfaces whose
  residual phase spans at most ``max_cycles`` cycles.  Desk-scale runs may
  enlarge the wavelength to stay inside that budget.
* :func:`reflected_field_erf_form` evaluates the same integral under the
  quadratic (Fresnel) expansion of the distance, where it separates into two
  one-dimensional Gaussian integrals with closed-form error-function values.

Both tiers share no code with :mod:`fso_irs_lab.gml_models`; they are the
reference that the closed forms are tested against.
"""
from __future__ import annotations

import csv
import math
import warnings
from dataclasses import dataclass
from typing import Iterable, NamedTuple

import numpy as np
from scipy import integrate, special

from . import defaults
from .errors import ConvergenceError, DomainError, OscillationBudgetError
from .geometry import (
    BeamParams,
    IrsConfig,
    LensConfig,
    LinkGeometry,
    Profile,
    beamwidth,
    curvature_radius,
)

__all__ = [
    "LinkPower",
    "PhaseProfile",
    "FieldSample",
    "FpIntensity",
    "build_phase_profile",
    "incident_field",
    "incident_phase",
    "gaussian_segment_integral",
    "reflected_field_quadrature",
    "reflected_field_erf_form",
    "fp_intensity",
    "numerical_gml",
    "numerical_relay_gml",
    "exact_receive_width",
    "field_map",
    "write_field_map",
]


@dataclass(frozen=True)
class LinkPower:
    """Transmit power, medium impedance and power-split index ``n``.

    ``n = 1`` for the surface-assisted link (the whole power feeds one beam)
    and ``n = 2`` for each relay hop.
    """

    power: float = defaults.TOTAL_POWER
    impedance: float = defaults.IMPEDANCE
    n: int = 1

    def amplitude(self, width: float) -> float:
        """Peak field amplitude ``sqrt(4*eta*P/(n*pi*w**2))``."""
        return math.sqrt(4.0 * self.impedance * self.power / (self.n * math.pi * width**2))


class FieldSample(NamedTuple):
    """Field at a lens point and the matching intensity ``|E|^2/(2*eta)``."""

    x_p2: float
    y_p2: float
    field: complex
    intensity: float


class FpIntensity(NamedTuple):
    intensity: float
    in_expansion_regime: bool


# --------------------------------------------------------------------------
# Phase profiles
# --------------------------------------------------------------------------
@dataclass(frozen=True)
class PhaseProfile:
    """Phase imposed by the surface, ``Phi_irs(x, y)`` in radians.

    For ``LP``/``QP`` (and the mirror, whose profile is zero) the phase is the
    polynomial ``k*(phi_x2*x**2 + phi_y2*y**2 + phi_x*x + phi_y*y + phi_0)``.
    For ``FP`` it cancels the incident phase and the path to the lens centre.

    Attributes
    ----------
    kind : Profile
    phi_x, phi_y, phi_x2, phi_y2, phi_0 : float
        Polynomial coefficients (dimensionless, 1/m, or m as appropriate).
    lens_center : tuple of float or None
        Target point ``(-d2*cos(theta_r), 0, d2*sin(theta_r))`` for ``FP``.
    theta_i, theta_r : float
        Angles the profile was designed for (the specular angle for a mirror).
    """

    kind: Profile
    phi_x: float = 0.0
    phi_y: float = 0.0
    phi_x2: float = 0.0
    phi_y2: float = 0.0
    phi_0: float = 0.0
    lens_center: tuple[float, float, float] | None = None
    theta_i: float = 0.0
    theta_r: float = 0.0
    k: float = 0.0
    d1: float = 0.0
    rayleigh_range: float = 0.0
    curvature: float = math.inf

    def polynomial_phase(self, x, y):
        return self.k * (self.phi_x2 * x**2 + self.phi_y2 * y**2 + self.phi_x * x
                         + self.phi_y * y + self.phi_0)

    def __call__(self, x, y):
        """Evaluate ``Phi_irs`` on surface coordinates."""
        if self.kind is Profile.FP:
            xo, yo, zo = self.lens_center
            dist = np.sqrt((xo - x) ** 2 + (yo - y) ** 2 + zo**2)
            psi = self.k * (self.d1 - x * math.cos(self.theta_i)
                            + x**2 * math.sin(self.theta_i) ** 2 / (2 * self.curvature)
                            + y**2 / (2 * self.curvature)) - math.atan(self.d1 / self.rayleigh_range)
            return -psi - self.k * dist
        return self.polynomial_phase(x, y)


def build_phase_profile(kind: "Profile | str", geometry: LinkGeometry, beam: BeamParams,
                        focal: float | None = None, phi_0: float = 0.0) -> PhaseProfile:
    """Design the surface phase for a link geometry.

    Parameters
    ----------
    kind : {"LP", "QP", "FP", "mir"}
    geometry : LinkGeometry
    beam : BeamParams
    focal : float, optional
        Focal parameter for ``QP``; ``math.inf`` gives the curvature-cancelling
        terms only.
    phi_0 : float
        Constant phase, irrelevant for intensities.

    Returns
    -------
    PhaseProfile
    """
    kind = Profile.parse(kind)
    ti, tr = geometry.effective_angles(kind)
    R = curvature_radius(geometry.d1, beam)
    common = dict(theta_i=ti, theta_r=tr, k=beam.k, d1=geometry.d1,
                  rayleigh_range=beam.rayleigh_range, curvature=R, phi_0=phi_0)
    # Gradient that redirects the beam from the Tx azimuth (0) to the Rx azimuth (pi).
    phi_x = (math.cos(ti) * math.cos(geometry.phi_i) + math.cos(tr) * math.cos(geometry.phi_r))
    phi_y = (math.cos(ti) * math.sin(geometry.phi_i) + math.cos(tr) * math.sin(geometry.phi_r))
    if kind in (Profile.LP, Profile.MIRROR):
        if kind is Profile.MIRROR:
            phi_x = phi_y = 0.0
        return PhaseProfile(kind, phi_x=phi_x, phi_y=phi_y, **common)
    if kind is Profile.QP:
        if focal is None or not focal > 0:
            raise DomainError("the quadratic profile needs a positive focal parameter")
        inv4f = 0.0 if math.isinf(focal) else 1.0 / (4.0 * focal)
        si2, sr2 = math.sin(ti) ** 2, math.sin(tr) ** 2
        d2 = geometry.d2
        phi_x2 = -si2 / (2 * R) - sr2 / (2 * d2) + sr2 * inv4f
        phi_y2 = -1.0 / (2 * R) - 1.0 / (2 * d2) + inv4f
        return PhaseProfile(kind, phi_x=phi_x, phi_y=phi_y, phi_x2=phi_x2, phi_y2=phi_y2,
                            **common)
    if kind is Profile.FP:
        center = (-geometry.d2 * math.cos(tr), 0.0, geometry.d2 * math.sin(tr))
        return PhaseProfile(kind, lens_center=center, **common)
    raise DomainError(f"unsupported profile {kind}")  # pragma: no cover


# --------------------------------------------------------------------------
# Incident field
# --------------------------------------------------------------------------
def incident_phase(x, y, geometry: LinkGeometry, beam: BeamParams, theta_i: float | None = None):
    """Phase ``psi_in`` of the incident beam on the surface plane."""
    ti = geometry.theta_i if theta_i is None else theta_i
    R = curvature_radius(geometry.d1, beam)
    return beam.k * (geometry.d1 - x * math.cos(ti) + x**2 * math.sin(ti) ** 2 / (2 * R)
                     + y**2 / (2 * R)) - math.atan(geometry.d1 / beam.rayleigh_range)


def incident_field(x, y, geometry: LinkGeometry, beam: BeamParams,
                   link: LinkPower = LinkPower(), theta_i: float | None = None):
    """Gaussian field incident on the surface at ``(x, y)``.

    ``C_l*sqrt(|sin(theta_i)|)*exp(-x**2/w_in_x**2 - y**2/w_in_y**2 - j*psi_in)``
    """
    ti = geometry.theta_i if theta_i is None else theta_i
    geometry.require_oblique()
    w = beamwidth(geometry.d1, beam)
    si = math.sin(ti)
    amp = link.amplitude(w) * math.sqrt(abs(si))
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    return amp * np.exp(-(x * si / w) ** 2 - (y / w) ** 2
                        - 1j * incident_phase(x, y, geometry, beam, ti))


# --------------------------------------------------------------------------
# Erf-form field
# --------------------------------------------------------------------------
_GL_NODES, _GL_WEIGHTS = np.polynomial.legendre.leggauss(32)


def gaussian_segment_integral(b: complex, c, half: float):
    """``int_{-half}^{half} exp(-b*x**2 - j*c*x) dx`` for ``Re(b) > 0``.

    The closed form ``sqrt(pi/b)/2*exp(-c**2/(4b))*[erf(u+) - erf(u-)]`` is
    evaluated through the Faddeeva function so that the large
    ``exp(-c**2/(4b))`` and ``erf`` factors never appear separately.  Short,
    slowly varying segments use 32-point Gauss-Legendre instead, which avoids
    the cancellation between two nearly equal end-point terms.

    Parameters
    ----------
    b : complex
        Quadratic coefficient with positive real part.
    c : float or array_like
        Linear phase coefficient (rad/m).
    half : float
        Half length of the segment (m).
    """
    b = complex(b)
    if not b.real > 0:
        raise DomainError("Gaussian segment integral needs Re(b) > 0")
    c = np.asarray(c, dtype=float)
    out = np.empty(c.shape, dtype=complex)
    smooth = np.abs(c) * half + abs(b) * half**2 <= 6.0
    if np.any(smooth):
        xs = half * _GL_NODES
        cs = c[smooth][..., None]
        vals = np.exp(-b * xs**2 - 1j * cs * xs) @ (half * _GL_WEIGHTS)
        out[smooth] = vals
    rough = ~smooth
    if np.any(rough):
        cr = c[rough]
        sb = np.sqrt(b)
        shift = 1j * cr / (2 * sb)
        u_hi = sb * half + shift
        u_lo = -sb * half + shift
        s_hi = np.where(u_hi.real >= 0, 1.0, -1.0)
        s_lo = np.where(u_lo.real >= 0, 1.0, -1.0)
        # exp(-c^2/(4b)) * erf(u) = s*exp(-c^2/(4b)) - s*exp(-b*x^2 - j*c*x)*w(j*s*u)
        gauss = np.exp(-cr**2 / (4 * b))
        end_hi = np.exp(-b * half**2 - 1j * cr * half)
        end_lo = np.exp(-b * half**2 + 1j * cr * half)
        diff = ((s_hi - s_lo) * gauss
                - s_hi * end_hi * special.wofz(1j * s_hi * u_hi)
                + s_lo * end_lo * special.wofz(1j * s_lo * u_lo))
        out[rough] = math.sqrt(math.pi) / (2 * sb) * diff
    return complex(out) if out.ndim == 0 else out


@dataclass(frozen=True)
class _SeparableField:
    """Fresnel-expanded field ``K * F(b_x, c_x(x_p)) * F(b_y, c_y(y_p))``."""

    amplitude: complex
    b_x: complex
    b_y: complex
    cx_offset: float   # c_x = cx_offset + cx_slope * x_p
    cx_slope: float
    cy_offset: float
    cy_slope: float
    half_x: float
    half_y: float
    k: float
    d2: float

    def fx(self, xp):
        return gaussian_segment_integral(self.b_x, self.cx_offset + self.cx_slope * np.asarray(xp),
                                         self.half_x)

    def fy(self, yp):
        return gaussian_segment_integral(self.b_y, self.cy_offset + self.cy_slope * np.asarray(yp),
                                         self.half_y)

    def field(self, xp, yp):
        xp = np.asarray(xp, dtype=float)
        yp = np.asarray(yp, dtype=float)
        lens_phase = np.exp(-1j * self.k * (xp**2 + yp**2) / (2 * self.d2))
        return self.amplitude * lens_phase * self.fx(xp) * self.fy(yp)


def _separable_field(profile: PhaseProfile, geometry: LinkGeometry, beam: BeamParams,
                     irs: IrsConfig, link: LinkPower) -> _SeparableField:
    ti, tr = profile.theta_i, profile.theta_r
    si, sr = math.sin(ti), math.sin(tr)
    ci, cr = math.cos(ti), math.cos(tr)
    d1, d2 = geometry.d1, geometry.d2
    k = beam.k
    w = beamwidth(d1, beam)
    R = curvature_radius(d1, beam)
    amp0 = link.amplitude(w) * math.sqrt(abs(si)) * math.sqrt(sr) / (1j * beam.wavelength * d2)
    if profile.kind is Profile.FP:
        # The focusing profile removes the incident curvature and the
        # surface-to-lens path; only the Gaussian taper and the first-order
        # lens-offset term remain.
        b_x = complex(si**2 / w**2)
        b_y = complex(1.0 / w**2)
        amp = amp0
        cx0 = cy0 = 0.0
    else:
        # quadratic phase collected from incidence, propagation and the surface
        qx = si**2 / (2 * R) + sr**2 / (2 * d2) + profile.phi_x2
        qy = 1.0 / (2 * R) + 1.0 / (2 * d2) + profile.phi_y2
        b_x = si**2 / w**2 + 1j * k * qx
        b_y = 1.0 / w**2 + 1j * k * qy
        global_phase = k * d1 - math.atan(d1 / beam.rayleigh_range) + k * profile.phi_0 + k * d2
        amp = amp0 * np.exp(-1j * global_phase)
        # residual linear phase: incidence (-cos ti), propagation (+cos tr), surface gradient
        cx0 = k * (profile.phi_x - ci + cr)
        cy0 = k * profile.phi_y
    return _SeparableField(amp, b_x, b_y, cx0, k * sr / d2, cy0, k / d2,
                           0.5 * irs.lx, 0.5 * irs.ly, k, d2)


def _profile_for(irs: IrsConfig, geometry: LinkGeometry, beam: BeamParams,
                 profile: PhaseProfile | None) -> PhaseProfile:
    if profile is not None:
        return profile
    return build_phase_profile(irs.profile, geometry, beam, irs.focal)


def reflected_field_erf_form(x_p2, y_p2, geometry: LinkGeometry, beam: BeamParams,
                             irs: IrsConfig, profile: PhaseProfile | None = None,
                             link: LinkPower = LinkPower()):
    """Reflected field at lens points under the Fresnel expansion.

    Exact for the polynomial profiles (LP, QP, mirror) once the distance is
    expanded to second order; for ``FP`` it is the first-order expansion in
    the lens offset.  The returned field carries the lens-plane phase
    ``exp(-j*k*(x**2 + y**2)/(2*d2))`` and the constant propagation phase so
    that it can be compared point by point with the direct quadrature.

    Parameters
    ----------
    x_p2, y_p2 : float or array_like
        Lens-plane coordinates (m).
    geometry, beam, irs
        Link description.  The profile is taken from ``irs`` unless given.

    Returns
    -------
    complex or ndarray
    """
    geometry.require_oblique()
    prof = _profile_for(irs, geometry, beam, profile)
    fld = _separable_field(prof, geometry, beam, irs, link)
    out = fld.field(x_p2, y_p2)
    return complex(out) if np.ndim(out) == 0 else out


def fp_intensity(x_p2: float, y_p2: float, geometry: LinkGeometry, beam: BeamParams,
                 irs: IrsConfig, link: LinkPower = LinkPower()) -> FpIntensity:
    """Received intensity behind a focusing surface.

    ``I = C_r2*exp(-2x**2/wx**2 - 2y**2/wy**2)*|D_x|**2*|D_y|**2`` with
    ``C_r2 = P*pi*w**2*sin(theta_r)/(8*lambda**2*d2**2*sin(theta_i))``,
    ``D_i = erf(L_i/(2 w_in_i) + j p_i/w_i) - erf(-L_i/(2 w_in_i) + j p_i/w_i)``
    and receive widths ``wx = 2*d2*sin(theta_i)/(k*w*sin(theta_r))``,
    ``wy = 2*d2/(k*w)``.  For a large surface ``D -> 2`` and ``I(0) = 16*C_r2``.

    The product ``exp(-p**2/w**2)*D`` is evaluated with the overflow-free
    Gaussian segment integral.  The flag reports whether the lens point is
    inside the first-order expansion regime (``|r_p2| <= 0.01*d2``).
    """
    geometry.require_oblique()
    si, sr = geometry.sin_i, geometry.sin_r
    d2 = geometry.d2
    w = beamwidth(geometry.d1, beam)
    k = beam.k
    c_r2 = link.power * math.pi * w**2 * sr / (8 * beam.wavelength**2 * d2**2 * si)
    fx = gaussian_segment_integral(si**2 / w**2, k * sr * x_p2 / d2, 0.5 * irs.lx)
    fy = gaussian_segment_integral(1.0 / w**2, k * y_p2 / d2, 0.5 * irs.ly)
    # exp(-p^2/w_rx^2) * D = F * 2*sqrt(b)/sqrt(pi)
    dx = abs(fx) * 2 * si / (math.sqrt(math.pi) * w)
    dy = abs(fy) * 2 / (math.sqrt(math.pi) * w)
    ok = math.hypot(x_p2, y_p2) <= 0.01 * d2
    return FpIntensity(float(c_r2 * dx**2 * dy**2), ok)


# --------------------------------------------------------------------------
# Direct quadrature
# --------------------------------------------------------------------------
def _gl_rule(lo: float, hi: float, n_points: int):
    """Composite 16-point Gauss-Legendre rule with about ``n_points`` nodes."""
    n16 = max(1, int(math.ceil(n_points / 16)))
    x16, w16 = np.polynomial.legendre.leggauss(16)
    edges = np.linspace(lo, hi, n16 + 1)
    half = 0.5 * np.diff(edges)
    mid = 0.5 * (edges[1:] + edges[:-1])
    nodes = (mid[:, None] + half[:, None] * x16[None, :]).ravel()
    weights = (half[:, None] * w16[None, :]).ravel()
    return nodes, weights


@dataclass(frozen=True)
class QuadratureSettings:
    """Controls for the direct surface quadrature.

    Attributes
    ----------
    rtol : float
        Stop when doubling the node count changes the field by less than this.
    samples_per_cycle : float
        Minimum nodes per phase cycle in each dimension.
    max_cycles : float
        Largest residual phase excursion (cycles, per dimension) accepted.
    max_levels : int
        Number of node doublings before giving up.
    taper_cutoff : float
        The surface is truncated at this many incident widths, where the
        Gaussian amplitude is below ``exp(-cutoff**2)``.
    """

    rtol: float = 1e-6
    samples_per_cycle: float = 12.0
    max_cycles: float = 1e4
    max_levels: int = 6
    taper_cutoff: float = 6.5
    chunk: int = 2_000_000


def _phase_cycles(profile: PhaseProfile, geometry: LinkGeometry, beam: BeamParams,
                  x_p2: float, y_p2: float, hx: float, hy: float) -> tuple[float, float]:
    """Upper bound on the residual phase excursion across the surface (cycles)."""
    k = beam.k
    ti, tr = profile.theta_i, profile.theta_r
    sr = math.sin(tr)
    d2 = geometry.d2
    R = curvature_radius(geometry.d1, beam)
    if profile.kind is Profile.FP:
        qx = qy = 0.0
        lx = ly = 0.0
    else:
        qx = math.sin(ti) ** 2 / (2 * R) + sr**2 / (2 * d2) + profile.phi_x2
        qy = 1 / (2 * R) + 1 / (2 * d2) + profile.phi_y2
        lx = profile.phi_x - math.cos(ti) + math.cos(tr)
        ly = profile.phi_y
    # the Fresnel expansion error (cubic terms) is added as a safety margin
    cubic = 1.0 / (2 * d2**2)
    cx = k * (abs(lx + sr * x_p2 / d2) * 2 * hx + abs(qx) * hx**2 + cubic * hx**3)
    cy = k * (abs(ly + y_p2 / d2) * 2 * hy + abs(qy) * hy**2 + cubic * hy**3)
    return cx / (2 * math.pi), cy / (2 * math.pi)


def reflected_field_quadrature(x_p2: float, y_p2: float, geometry: LinkGeometry,
                               beam: BeamParams, irs: IrsConfig,
                               profile: PhaseProfile | None = None,
                               link: LinkPower = LinkPower(),
                               settings: QuadratureSettings = QuadratureSettings()) -> complex:
    """Huygens integral over the surface with the exact propagation distance.

    ``E_r = C_r * int E_in(r) exp(-j k |r_o - r|) exp(-j Phi_irs(r)) dr`` with
    ``C_r = sqrt(sin(theta_r))/(j*lambda*d2)`` and the lens point mapped to
    surface coordinates by ``r_o = (r_p2 + (0, 0, d2)) R_rot``.

    Large, mutually cancelling phase terms (incidence tilt, redirection
    gradient, distance to the lens) are evaluated in a cancellation-free form;
    the remaining phase is integrated with composite Gauss-Legendre rules whose
    node count is doubled until the relative change drops below
    ``settings.rtol``.

    Raises
    ------
    OscillationBudgetError
        If the residual phase spans more than ``settings.max_cycles`` cycles in
        either dimension.
    ConvergenceError
        If refinement does not converge within ``settings.max_levels``.
    """
    geometry.require_oblique()
    prof = _profile_for(irs, geometry, beam, profile)
    ti, tr = prof.theta_i, prof.theta_r
    si, sr = math.sin(ti), math.sin(tr)
    ci, cr = math.cos(ti), math.cos(tr)
    k = beam.k
    d1, d2 = geometry.d1, geometry.d2
    w = beamwidth(d1, beam)
    R = curvature_radius(d1, beam)
    hx = min(0.5 * irs.lx, settings.taper_cutoff * w / si)
    hy = min(0.5 * irs.ly, settings.taper_cutoff * w)
    cyc_x, cyc_y = _phase_cycles(prof, geometry, beam, x_p2, y_p2, hx, hy)
    if max(cyc_x, cyc_y) > settings.max_cycles:
        raise OscillationBudgetError(
            f"residual phase spans {cyc_x:.3g} x {cyc_y:.3g} cycles, budget "
            f"{settings.max_cycles:g}; enlarge the wavelength or shrink the surface"
        )

    # lens point in surface coordinates
    xo = -x_p2 * sr - d2 * cr
    yo = -y_p2
    zo = d2 * sr - x_p2 * cr
    ro2 = xo**2 + yo**2 + zo**2
    ro = math.sqrt(ro2)
    amp = link.amplitude(w) * math.sqrt(abs(si)) * math.sqrt(sr) / (1j * beam.wavelength * d2)
    if prof.kind is Profile.FP:
        tx, ty, tz = prof.lens_center
        rt2 = tx**2 + ty**2 + tz**2
        rt = math.sqrt(rt2)
        # the profile cancels the incident phase, leaving k*(|r_o - r| - |r~ - r|)
        base = ro - rt
    else:
        base = d1 + ro + prof.phi_0 - math.atan(d1 / beam.rayleigh_range) / k

    def integrand(x, y):
        r2 = x * x + y * y
        # |r_o - r| - |r_o| without cancellation
        dist = np.sqrt(ro2 - 2 * (xo * x + yo * y) + r2)
        delta_o = (r2 - 2 * (xo * x + yo * y)) / (dist + ro)
        taper = np.exp(-(x * si / w) ** 2 - (y / w) ** 2)
        if prof.kind is Profile.FP:
            dt = np.sqrt(rt2 - 2 * (tx * x + ty * y) + r2)
            delta_t = (r2 - 2 * (tx * x + ty * y)) / (dt + rt)
            phase = k * (delta_o - delta_t)
        else:
            # -psi_in (variable part) - k*delta_o - Phi_irs (variable part);
            # the linear parts are grouped so their large terms cancel first.
            lin = (prof.phi_x - ci) * x + prof.phi_y * y
            quad = (x * si) ** 2 / (2 * R) + y**2 / (2 * R) + prof.phi_x2 * x**2 + prof.phi_y2 * y**2
            phase = k * (lin + delta_o + quad)
        return taper * np.exp(-1j * phase)

    nx = max(32, int(settings.samples_per_cycle * cyc_x) + 1)
    ny = max(32, int(settings.samples_per_cycle * cyc_y) + 1)
    prev = None
    for _ in range(settings.max_levels + 1):
        xs, wx = _gl_rule(-hx, hx, nx)
        ys, wy = _gl_rule(-hy, hy, ny)
        total = 0j
        rows = max(1, settings.chunk // len(ys))
        for i in range(0, len(xs), rows):
            xb = xs[i:i + rows, None]
            total += (wx[i:i + rows, None] * integrand(xb, ys[None, :]) * wy[None, :]).sum()
        value = amp * np.exp(-1j * k * base) * total
        if prev is not None and abs(value - prev) <= settings.rtol * max(abs(value), 1e-300):
            return complex(value)
        if prev is not None and abs(value) < 1e-300 and abs(prev) < 1e-300:
            return complex(value)
        prev = value
        nx *= 2
        ny *= 2
    raise ConvergenceError(
        f"surface quadrature did not reach rtol={settings.rtol} after "
        f"{settings.max_levels} refinements ({cyc_x:.3g} x {cyc_y:.3g} cycles)"
    )


# --------------------------------------------------------------------------
# GML by lens-plane integration
# --------------------------------------------------------------------------
def _quad(fun, lo, hi, points=None, epsrel=1e-9, limit=400) -> float:
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", integrate.IntegrationWarning)
        pts = None
        if points is not None:
            pts = [p for p in points if lo < p < hi] or None
        return integrate.quad(fun, lo, hi, points=pts, epsabs=0.0, epsrel=epsrel,
                              limit=limit)[0]


def numerical_gml(geometry: LinkGeometry, beam: BeamParams, irs: IrsConfig, lens: LensConfig,
                  lens_shape: str = "disc", evaluator: str = "auto",
                  link: LinkPower = LinkPower(),
                  settings: QuadratureSettings = QuadratureSettings(),
                  lens_nodes: int = 24) -> float:
    """GML ``1/(2*eta*P) * int_lens |E_r|**2`` by numerical integration.

    Parameters
    ----------
    lens_shape : {"disc", "square"}
        Physical disc of radius ``a`` or the equal-area square of side
        ``a*sqrt(pi)`` used by the closed forms.
    evaluator : {"auto", "erf", "quadrature"}
        ``"erf"`` integrates the separable Fresnel field with adaptive 1-D
        quadrature (all profiles, including the mirror through its specular
        angle and ``FP`` through its first-order expansion).  ``"quadrature"``
        evaluates the direct Huygens integral on a Gauss-Legendre lens grid of
        ``lens_nodes`` nodes per dimension and is meant for desk-scale checks.

    Returns
    -------
    float
        Fraction of the transmitted power collected by the lens, in ``[0, 1]``.
    """
    geometry.require_oblique()
    if lens_shape not in ("disc", "square"):
        raise DomainError(f"lens_shape must be 'disc' or 'square', got {lens_shape!r}")
    prof = build_phase_profile(irs.profile, geometry, beam, irs.focal)
    norm = 1.0 / (2 * link.impedance * link.power)
    if evaluator in ("auto", "erf"):
        fld = _separable_field(prof, geometry, beam, irs, link)
        K = abs(fld.amplitude) ** 2
        gx = lambda x: np.abs(fld.fx(x)) ** 2
        gy = lambda y: np.abs(fld.fy(y)) ** 2
        # |F|^2 is the power spectrum of a Gaussian window of half length h, so
        # its finest lens-plane feature is about pi/(slope*h); panels are a
        # fraction of that.
        sx = math.pi / (fld.cx_slope * fld.half_x)
        sy = math.pi / (fld.cy_slope * fld.half_y)
        prev = None
        for level in range(4):
            frac = 0.5 / 2**level
            val = norm * K * _separable_lens_integral(gx, gy, lens, lens_shape,
                                                      frac * sx, frac * sy)
            if prev is not None and abs(val - prev) <= 1e-9 * abs(val):
                break
            prev = val
        else:
            raise ConvergenceError("lens-plane integral did not converge")
        return float(val)
    if evaluator == "quadrature":
        def field(x, y):
            return reflected_field_quadrature(x, y, geometry, beam, irs, prof, link, settings)
        return float(norm * _lens_integral(lambda x, y: abs(field(x, y)) ** 2, lens,
                                           lens_shape, lens_nodes))
    raise DomainError(f"unknown evaluator {evaluator!r}")


def _panel_rule(lo: float, hi: float, width: float):
    """Composite 16-point Gauss-Legendre nodes with panels at most ``width`` wide."""
    return _gl_rule(lo, hi, 16 * max(1, int(math.ceil((hi - lo) / width))))


def _separable_lens_integral(gx, gy, lens: LensConfig, lens_shape: str,
                             step_x: float, step_y: float) -> float:
    """``int_lens gx(x)*gy(y)`` for even, vectorised ``gx`` and ``gy``."""
    if lens_shape == "square":
        A = lens.square_half_side
        xs, wx = _panel_rule(0.0, A, step_x)
        ys, wy = _panel_rule(0.0, A, step_y)
        return 4.0 * float(wx @ gx(xs)) * float(wy @ gy(ys))
    from scipy.interpolate import CubicSpline

    a = lens.radius
    # inner antiderivative G(Y) = int_0^Y gy, from a spline on a fine grid
    n = 16 * max(1, int(math.ceil(a / step_y))) + 1
    grid = np.linspace(0.0, a, n)
    G = CubicSpline(grid, gy(grid)).antiderivative()
    # x = a*sin(t) removes the square-root edge of the disc
    ts, wt = _panel_rule(0.0, 0.5 * math.pi, step_x / a)
    xs = a * np.sin(ts)
    vals = gx(xs) * G(a * np.cos(ts)) * a * np.cos(ts)
    return 4.0 * float(wt @ vals)


def _lens_integral(intensity, lens: LensConfig, lens_shape: str, nodes: int) -> float:
    """Tensor Gauss-Legendre integral of ``intensity(x, y)`` over the lens."""
    t, wt = np.polynomial.legendre.leggauss(nodes)
    total = 0.0
    if lens_shape == "square":
        A = lens.square_half_side
        for xi, wi in zip(A * t, A * wt):
            for yj, wj in zip(A * t, A * wt):
                total += wi * wj * intensity(xi, yj)
        return total
    a = lens.radius
    # polar rule: Gauss-Legendre in r (weight r) and in angle
    for ri, wri in zip(0.5 * a * (t + 1), 0.5 * a * wt):
        for th, wth in zip(math.pi * (t + 1), math.pi * wt):
            total += wri * wth * ri * intensity(ri * math.cos(th), ri * math.sin(th))
    return total


def numerical_relay_gml(d: float, beam: BeamParams, lens: LensConfig,
                        lens_shape: str = "square") -> float:
    """Power fraction of a relay hop collected by a perpendicular lens.

    Integrates ``|E|**2/(eta*P)`` of the Gaussian beam with ``n = 2`` (half
    the total power feeds each hop) over the lens at distance ``d``.
    """
    if not d > 0:
        raise DomainError("hop distance must be positive")
    w = beamwidth(d, beam)
    # |E|^2/(eta*P) = 2/(pi*w^2)*exp(-2 r^2/w^2) for n = 2 (power per hop P/2)
    peak = 2.0 / (math.pi * w**2)
    g = lambda s: math.exp(-2.0 * s * s / w**2)
    if lens_shape == "square":
        A = lens.square_half_side
        one = _quad(g, -A, A, [0.0], epsrel=1e-12)
        return float(peak * one * one)
    if lens_shape == "disc":
        a = lens.radius
        inner = lambda x: g(x) * 2.0 * _quad(g, 0.0, math.sqrt(max(a * a - x * x, 0.0)),
                                             epsrel=1e-12)
        return float(peak * 2.0 * _quad(inner, 0.0, a, epsrel=1e-11))
    raise DomainError(f"lens_shape must be 'disc' or 'square', got {lens_shape!r}")


def exact_receive_width(geometry: LinkGeometry, beam: BeamParams, irs: IrsConfig,
                        axis: str = "x") -> float:
    """Equivalent receive width from the half-power full width ``W_F``.

    ``w = W_F/sqrt(2*ln 2)``, which reproduces ``w`` for a Gaussian
    ``exp(-2 p**2/w**2)``.  Diagnostic only: it locates the first half-power
    crossing of the Fresnel field along one lens axis.
    """
    from scipy import optimize

    prof = build_phase_profile(irs.profile, geometry, beam, irs.focal)
    fld = _separable_field(prof, geometry, beam, irs, LinkPower())
    f = fld.fx if axis == "x" else fld.fy
    slope = fld.cx_slope if axis == "x" else fld.cy_slope
    peak = abs(f(0.0)) ** 2
    g = lambda p: abs(f(p)) ** 2 - 0.5 * peak
    step = 0.05 / slope
    hi = step
    for _ in range(200):
        if g(hi) < 0:
            break
        hi *= 1.5
    else:  # pragma: no cover - beam wider than any search range
        raise ConvergenceError("half-power point not bracketed")
    x_half = optimize.brentq(g, 0.0, hi, xtol=1e-12 * hi)
    return 2 * x_half / math.sqrt(2 * math.log(2))


# --------------------------------------------------------------------------
# Field maps
# --------------------------------------------------------------------------
def field_map(xs: Iterable[float], ys: Iterable[float], geometry: LinkGeometry,
              beam: BeamParams, irs: IrsConfig, evaluator: str = "erf",
              link: LinkPower = LinkPower()) -> list[FieldSample]:
    """Sample the received field on a rectangular lens-plane grid."""
    prof = build_phase_profile(irs.profile, geometry, beam, irs.focal)
    rows = []
    for x in xs:
        for y in ys:
            if evaluator == "erf":
                e = reflected_field_erf_form(x, y, geometry, beam, irs, prof, link)
            elif evaluator == "quadrature":
                e = reflected_field_quadrature(x, y, geometry, beam, irs, prof, link)
            else:
                raise DomainError(f"unknown evaluator {evaluator!r}")
            rows.append(FieldSample(float(x), float(y), complex(e),
                                    abs(e) ** 2 / (2 * link.impedance)))
    return rows


def write_field_map(path, samples: Iterable[FieldSample]) -> None:
    """Write ``x_p2, y_p2, Re(E), Im(E), I`` rows to a CSV file."""
    with open(path, "w", newline="") as fh:
        wr = csv.writer(fh)
        wr.writerow(["x_p2", "y_p2", "Re(E)", "Im(E)", "I"])
        for s in samples:
            wr.writerow([repr(s.x_p2), repr(s.y_p2), repr(s.field.real), repr(s.field.imag),
                         repr(s.intensity)])
