"""Placement geometry and Gaussian-beam propagation.

The transmitter sits at ``(-L_tr/2, 0)`` and the receiver at ``(+L_tr/2, 0)``.
A reflecting surface (or relay) is placed on the upper half of the ellipse of
constant path length ``d1 + d2 = d3`` whose foci are the two terminals.  The
surface normal points along ``+z`` and the beam arrives from the Tx side, so
the elevation angles are measured between the surface plane and the lines of
sight to the terminals.
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

from . import defaults
from .errors import DegenerateGeometryError, DomainError

__all__ = [
    "BeamParams",
    "LinkGeometry",
    "Profile",
    "IrsConfig",
    "LensConfig",
    "Footprint",
    "ellipse_position",
    "angles_from_position",
    "beamwidth",
    "curvature_radius",
    "incident_footprint",
    "fresnel_min_distance",
]


# --------------------------------------------------------------------------
# Beam
# --------------------------------------------------------------------------
@dataclass(frozen=True)
class BeamParams:
    """Fundamental-mode Gaussian beam launched from its waist.

    Parameters
    ----------
    wavelength : float
        Free-space wavelength in metres.
    waist : float
        Waist radius ``w_o`` in metres; must exceed the wavelength.
    """

    wavelength: float = defaults.WAVELENGTH
    waist: float = defaults.BEAM_WAIST

    def __post_init__(self) -> None:
        if not self.wavelength > 0:
            raise DomainError(f"wavelength must be positive, got {self.wavelength}")
        if not self.waist > self.wavelength:
            raise DomainError(
                f"beam waist {self.waist} m must exceed the wavelength {self.wavelength} m"
            )

    @property
    def k(self) -> float:
        """Wavenumber ``2*pi/lambda`` in rad/m."""
        return 2.0 * math.pi / self.wavelength

    @property
    def rayleigh_range(self) -> float:
        """Rayleigh range ``pi*w_o**2/lambda`` in metres."""
        return math.pi * self.waist**2 / self.wavelength

    def width(self, z):
        return beamwidth(z, self)

    def curvature(self, z):
        return curvature_radius(z, self)

    def far_field_width(self, z):
        """Asymptotic width ``lambda*z/(pi*w_o)`` valid for ``z >> z_R``."""
        return self.wavelength * np.asarray(z, dtype=float) / (math.pi * self.waist)


def beamwidth(z, beam: BeamParams):
    """Beam radius ``w(z) = w_o*sqrt(1 + (z/z_R)**2)``.

    Parameters
    ----------
    z : float or array_like
        Propagation distance from the waist (m), non-negative.
    beam : BeamParams

    Returns
    -------
    float or ndarray
    """
    z = np.asarray(z, dtype=float)
    if np.any(z < 0):
        raise DomainError("propagation distance must be non-negative")
    w = beam.waist * np.sqrt(1.0 + (z / beam.rayleigh_range) ** 2)
    return float(w) if w.ndim == 0 else w


def curvature_radius(z, beam: BeamParams):
    """Wavefront radius of curvature ``R(z) = z*(1 + (z_R/z)**2)``.

    At the waist the wavefront is flat and ``math.inf`` is returned, which is
    the distinct signal for the infinite-curvature case.
    """
    z = np.asarray(z, dtype=float)
    if np.any(z < 0):
        raise DomainError("propagation distance must be non-negative")
    zr = beam.rayleigh_range
    with np.errstate(divide="ignore"):
        r = np.where(z > 0, z + zr**2 / np.where(z > 0, z, 1.0), np.inf)
    return float(r) if r.ndim == 0 else r


# --------------------------------------------------------------------------
# Link geometry
# --------------------------------------------------------------------------
def _check_ellipse(l_tr: float, d3: float) -> None:
    if not (d3 > l_tr > 0):
        raise DomainError(f"need d3 > L_tr > 0, got d3={d3}, L_tr={l_tr}")


def ellipse_position(d1: float, l_tr: float, d3: float) -> tuple[float, float]:
    """Surface centre ``(x_o, z_o)`` for a Tx-to-surface distance ``d1``.

    Parameters
    ----------
    d1 : float
        Distance from the transmitter, in ``[(d3 - L_tr)/2, (d3 + L_tr)/2]``.
    l_tr, d3 : float
        Tx--Rx line-of-sight distance and constant path length.

    Returns
    -------
    (x_o, z_o) : tuple of float
        Point on the upper half-ellipse.

    Raises
    ------
    DomainError
        If ``d1`` lies outside the admissible range (``z_o`` would be imaginary).
    """
    _check_ellipse(l_tr, d3)
    lo, hi = 0.5 * (d3 - l_tr), 0.5 * (d3 + l_tr)
    tol = 1e-12 * d3
    if not (lo - tol <= d1 <= hi + tol):
        raise DomainError(f"d1={d1} outside admissible range [{lo}, {hi}]")
    d1 = min(max(d1, lo), hi)
    d2 = d3 - d1
    he = 0.5 * math.sqrt(d3**2 - l_tr**2)
    diff = d1**2 - d2**2
    x_o = diff / (2.0 * l_tr)
    z_o = he * math.sqrt(max(0.0, 1.0 - diff**2 / (d3**2 * l_tr**2)))
    return x_o, z_o


def angles_from_position(x_o: float, z_o: float, l_tr: float, d3: float,
                         rtol: float = 1e-5) -> tuple[float, float, float, float]:
    """Elevation angles and distances of a point on the ellipse.

    Parameters
    ----------
    x_o, z_o : float
        Surface centre.  ``z_o`` must be non-negative.
    l_tr, d3 : float
        Ellipse parameters.
    rtol : float
        Relative tolerance on the ellipse equation.  The default accepts
        positions quoted to a centimetre on a kilometre-scale ellipse.

    Returns
    -------
    theta_i, theta_r, d1, d2 : float
        Elevations of the Tx and Rx seen from the surface, measured from the
        horizontal pointing away from each terminal, so ``sin(theta_i) =
        z_o/d1`` and the angle is obtuse when the surface lies beyond the
        terminal.  On the degenerate end points (``z_o = 0``) the sines
        vanish; callers that need ``sin(theta) > 0`` raise
        :class:`DegenerateGeometryError`.
    """
    _check_ellipse(l_tr, d3)
    if z_o < 0:
        raise DomainError("only the upper half-ellipse (z_o >= 0) is modelled")
    resid = x_o**2 / d3**2 + z_o**2 / (d3**2 - l_tr**2) - 0.25
    if abs(resid) > 0.25 * rtol:
        raise DomainError(f"point ({x_o}, {z_o}) is off the ellipse (residual {resid:.3e})")
    d1 = math.hypot(x_o + 0.5 * l_tr, z_o)
    d2 = math.hypot(x_o - 0.5 * l_tr, z_o)
    theta_i = math.atan2(z_o, x_o + 0.5 * l_tr)
    theta_r = math.atan2(z_o, 0.5 * l_tr - x_o)
    return theta_i, theta_r, d1, d2


class Profile(str, enum.Enum):
    """Surface technology and phase profile.

    ``LP``, ``QP`` and ``FP`` are metasurface phase profiles (linear,
    quadratic, focusing); ``MIRROR`` is a mechanically rotated mirror.
    """

    LP = "LP"
    QP = "QP"
    FP = "FP"
    MIRROR = "mir"

    @classmethod
    def parse(cls, value: "str | Profile") -> "Profile":
        if isinstance(value, cls):
            return value
        key = str(value).strip()
        for member in cls:
            if key.upper() == member.value.upper() or key.upper() == member.name:
                return member
        raise DomainError(f"unknown profile {value!r}")

    @property
    def technology(self) -> str:
        return "mirror" if self is Profile.MIRROR else "metamaterial"


@dataclass(frozen=True)
class LinkGeometry:
    """Surface placed on the constant-distance ellipse.

    Construct with :meth:`from_d1`, :meth:`from_x` or :meth:`from_position`;
    all derived quantities follow from ``(l_tr, d3, d1)`` so ``d1 + d2 = d3``
    holds exactly.

    Attributes
    ----------
    l_tr, d3, d1 : float
        Line-of-sight distance, path length and Tx-to-surface distance (m).
    d2, x_o, z_o, theta_i, theta_r, h_e : float
        Derived surface-to-Rx distance, centre coordinates, elevation angles
        (rad) and ellipse semi-minor axis.
    """

    l_tr: float
    d3: float
    d1: float
    d2: float = field(init=False)
    x_o: float = field(init=False)
    z_o: float = field(init=False)
    theta_i: float = field(init=False)
    theta_r: float = field(init=False)
    h_e: float = field(init=False)
    phi_i: float = field(init=False, default=0.0)
    phi_r: float = field(init=False, default=math.pi)

    def __post_init__(self) -> None:
        x_o, z_o = ellipse_position(self.d1, self.l_tr, self.d3)
        d2 = self.d3 - self.d1
        set_ = object.__setattr__
        set_(self, "d2", d2)
        set_(self, "x_o", x_o)
        set_(self, "z_o", z_o)
        set_(self, "h_e", 0.5 * math.sqrt(self.d3**2 - self.l_tr**2))
        # Elevations are measured from the horizontal pointing away from the
        # terminal, so they turn obtuse once the surface passes beyond it.
        set_(self, "theta_i", math.atan2(z_o, x_o + 0.5 * self.l_tr))
        set_(self, "theta_r", math.atan2(z_o, 0.5 * self.l_tr - x_o))

    # constructors ----------------------------------------------------------
    @classmethod
    def from_d1(cls, d1: float, l_tr: float = defaults.LOS_DISTANCE,
                d3: float = defaults.END_TO_END) -> "LinkGeometry":
        return cls(l_tr=l_tr, d3=d3, d1=d1)

    @classmethod
    def from_x(cls, x_o: float, l_tr: float = defaults.LOS_DISTANCE,
               d3: float = defaults.END_TO_END) -> "LinkGeometry":
        """Point on the upper half-ellipse with abscissa ``x_o``.

        Uses ``d1 - d2 = 2*L_tr*x_o/d3``, which follows from
        ``x_o = (d1**2 - d2**2)/(2*L_tr)`` and ``d1 + d2 = d3``.
        """
        _check_ellipse(l_tr, d3)
        if abs(x_o) > 0.5 * d3 * (1 + 1e-12):
            raise DomainError(f"|x_o|={abs(x_o)} exceeds the semi-major axis {d3 / 2}")
        return cls(l_tr=l_tr, d3=d3, d1=0.5 * d3 + x_o * l_tr / d3)

    @classmethod
    def from_position(cls, x_o: float, z_o: float, l_tr: float = defaults.LOS_DISTANCE,
                      d3: float = defaults.END_TO_END, rtol: float = 1e-5) -> "LinkGeometry":
        """Validate ``(x_o, z_o)`` against the ellipse and snap onto it."""
        angles_from_position(x_o, z_o, l_tr, d3, rtol=rtol)
        return cls.from_x(x_o, l_tr, d3)

    @classmethod
    def reference(cls) -> "LinkGeometry":
        """Reference placement at ``x_o = 200 m`` on the 1 km / 800 m ellipse."""
        return cls.from_x(defaults.SURFACE_X)

    # derived ---------------------------------------------------------------
    @property
    def d1_range(self) -> tuple[float, float]:
        return 0.5 * (self.d3 - self.l_tr), 0.5 * (self.d3 + self.l_tr)

    @property
    def is_degenerate(self) -> bool:
        """True on the ellipse end points, where the surface meets the Tx--Rx axis."""
        return self.z_o <= 1e-12 * self.d3

    @property
    def sin_i(self) -> float:
        return math.sin(self.theta_i)

    @property
    def sin_r(self) -> float:
        return math.sin(self.theta_r)

    @property
    def theta_mirror(self) -> float:
        """Specular angle ``(theta_i + theta_r)/2`` seen by a rotated mirror."""
        return 0.5 * (self.theta_i + self.theta_r)

    @property
    def mirror_rotation(self) -> float:
        """Mirror elevation rotation ``|theta_r - theta_i|/2`` (rad)."""
        return 0.5 * abs(self.theta_r - self.theta_i)

    def effective_angles(self, profile: "Profile | str") -> tuple[float, float]:
        """``(theta_i, theta_r)`` as seen by the surface.

        A rotated mirror reflects specularly, so both angles become
        :attr:`theta_mirror`; metasurfaces keep the geometric angles.
        """
        if Profile.parse(profile) is Profile.MIRROR:
            t = self.theta_mirror
            return t, t
        return self.theta_i, self.theta_r

    def require_oblique(self) -> None:
        if self.is_degenerate or self.theta_i <= 0 or self.theta_r <= 0:
            raise DegenerateGeometryError(
                f"grazing incidence at d1={self.d1}: the surface lies on the Tx-Rx axis"
            )


# --------------------------------------------------------------------------
# Surface and lens
# --------------------------------------------------------------------------
@dataclass(frozen=True)
class IrsConfig:
    """Rectangular reflecting surface.

    Parameters
    ----------
    lx, ly : float
        Side lengths (m).
    profile : Profile or str
        ``"LP"``, ``"QP"``, ``"FP"`` or ``"mir"``.
    focal : float, optional
        Focal parameter ``f`` (m); required for the quadratic profile.
    """

    lx: float = defaults.IRS_SIDE
    ly: float = defaults.IRS_SIDE
    profile: Profile = Profile.LP
    focal: float | None = None

    def __post_init__(self) -> None:
        object.__setattr__(self, "profile", Profile.parse(self.profile))
        if not (self.lx > 0 and self.ly > 0):
            raise DomainError(f"surface sides must be positive, got {self.lx} x {self.ly}")
        if self.profile is Profile.QP and not (self.focal is not None and self.focal > 0):
            raise DomainError("the quadratic profile needs a positive focal parameter")

    @classmethod
    def square(cls, side: float, profile: "Profile | str" = Profile.LP,
               focal: float | None = None) -> "IrsConfig":
        return cls(lx=side, ly=side, profile=Profile.parse(profile), focal=focal)

    @property
    def area(self) -> float:
        return self.lx * self.ly

    @property
    def technology(self) -> str:
        return self.profile.technology


@dataclass(frozen=True)
class LensConfig:
    """Circular receive lens of radius ``a``."""

    radius: float = defaults.LENS_RADIUS

    def __post_init__(self) -> None:
        if not self.radius > 0:
            raise DomainError(f"lens radius must be positive, got {self.radius}")

    @classmethod
    def from_area(cls, area: float) -> "LensConfig":
        return cls(math.sqrt(area / math.pi))

    @property
    def area(self) -> float:
        return math.pi * self.radius**2

    @property
    def square_half_side(self) -> float:
        """Half side ``a*sqrt(pi)/2`` of the equal-area square."""
        return 0.5 * self.radius * math.sqrt(math.pi)


class Footprint(NamedTuple):
    w_in_x: float
    w_in_y: float
    area: float


def incident_footprint(geometry: LinkGeometry, beam: BeamParams,
                       theta_i: float | None = None) -> Footprint:
    """Beam footprint on the surface plane.

    ``w_in_x = w(d1)/sin(theta_i)``, ``w_in_y = w(d1)`` and
    ``A_in = pi*w_in_x*w_in_y``.  ``theta_i`` overrides the geometric angle
    (used for the rotated mirror).

    Raises
    ------
    DegenerateGeometryError
        At grazing incidence.
    """
    th = geometry.theta_i if theta_i is None else theta_i
    if th <= 0 or geometry.is_degenerate:
        raise DegenerateGeometryError("grazing incidence: footprint is unbounded")
    w = beamwidth(geometry.d1, beam)
    wx = w / math.sin(th)
    return Footprint(wx, w, math.pi * wx * w)


def fresnel_min_distance(irs: IrsConfig, footprint: Footprint, beam: BeamParams) -> float:
    """Smallest distance where the quadratic (Fresnel) kernel expansion holds.

    ``d_n = sqrt((x_e**2 + y_e**2)*(x_e + y_e)/(4*lambda))`` with
    ``x_e = min(L_x/2, w_in_x)`` and ``y_e = min(L_y/2, w_in_y)``.  Formulas
    built on the Fresnel expansion should only be trusted for
    ``d2 >= 10*d_n``.
    """
    xe = min(0.5 * irs.lx, footprint.w_in_x)
    ye = min(0.5 * irs.ly, footprint.w_in_y)
    return math.sqrt((xe**2 + ye**2) * (xe + ye) / (4.0 * beam.wavelength))
