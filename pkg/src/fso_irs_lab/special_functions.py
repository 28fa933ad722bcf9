"""Special functions used by the closed-form loss models and the fading layer.

Elementary special functions (error function, sine integral, Gamma, Bessel K,
normal CDF) are thin, validated wrappers around :mod:`scipy.special`.  The
complex-argument Owen's T function and the Gamma-Gamma distribution function
are implemented here.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np
from scipy import integrate, special

from .errors import ConvergenceError, DomainError

__all__ = [
    "erf_complex",
    "sine_integral",
    "owen_t",
    "normal_cdf",
    "gamma_fn",
    "bessel_k",
    "GammaGammaParams",
    "gamma_gamma_pdf",
    "gamma_gamma_cdf",
    "gamma_gamma_cdf_leading",
]

ERF_ARG_LIMIT = 30.0
OWEN_POLE_CLEARANCE = 0.1


def erf_complex(z):
    """Error function of a real or complex argument.

    Parameters
    ----------
    z : complex or array_like
        Argument with ``|z| < 30``.  Beyond that radius ``erf`` grows like
        ``exp(-z**2)`` in the imaginary directions and overflows double
        precision, so the call is refused instead of returning garbage.

    Returns
    -------
    complex or ndarray
    """
    za = np.asarray(z, dtype=complex)
    if np.any(~np.isfinite(za)) or np.any(np.abs(za) >= ERF_ARG_LIMIT):
        raise DomainError(f"erf argument outside |z| < {ERF_ARG_LIMIT}")
    out = special.erf(za)
    return complex(out) if out.ndim == 0 else out


def sine_integral(x):
    """Sine integral ``Si(x) = int_0^x sin(t)/t dt`` (odd in ``x``)."""
    xa = np.asarray(x, dtype=float)
    if np.any(~np.isfinite(xa)):
        raise DomainError("sine integral needs a finite argument")
    si = special.sici(xa)[0]
    return float(si) if si.ndim == 0 else si


def normal_cdf(x):
    """Standard normal distribution function ``Phi(x)``."""
    out = special.ndtr(np.asarray(x, dtype=float))
    return float(out) if out.ndim == 0 else out


def gamma_fn(x: float) -> float:
    """Gamma function of a real argument.

    Raises
    ------
    DomainError
        At the poles ``x = 0, -1, -2, ...``.
    """
    if x <= 0 and float(x).is_integer():
        raise DomainError(f"Gamma function has a pole at {x}")
    return float(special.gamma(x))


def bessel_k(nu: float, x: float) -> float:
    """Modified Bessel function of the second kind ``K_nu(x)`` for ``x > 0``."""
    if not x > 0:
        raise DomainError(f"K_nu(x) needs x > 0, got {x}")
    return float(special.kv(nu, x))


# --------------------------------------------------------------------------
# Owen's T with complex arguments
# --------------------------------------------------------------------------
def _segment_pole_distance(h: complex) -> float:
    """Distance from the poles ``t = +-j`` to the segment ``[0, h]``."""
    best = math.inf
    hh = abs(h) ** 2
    for pole in (1j, -1j):
        s = 0.0 if hh == 0 else min(1.0, max(0.0, (pole * h.conjugate()).real / hh))
        best = min(best, abs(pole - s * h))
    return best


def _quad_complex(fun, lo: float, hi: float, epsabs: float, epsrel: float, limit: int = 500):
    with warnings.catch_warnings():
        warnings.simplefilter("error", integrate.IntegrationWarning)
        try:
            re, _ = integrate.quad(lambda s: fun(s).real, lo, hi, epsabs=epsabs,
                                   epsrel=epsrel, limit=limit)
            im, _ = integrate.quad(lambda s: fun(s).imag, lo, hi, epsabs=epsabs,
                                   epsrel=epsrel, limit=limit)
        except integrate.IntegrationWarning as exc:
            raise ConvergenceError(f"Owen's T quadrature did not converge: {exc}") from exc
    return complex(re, im)


def owen_t(a: complex, h: complex, epsabs: float = 1e-14, epsrel: float = 1e-12) -> complex:
    """Owen's T function continued to complex arguments.

    ``T(a, h) = 1/(2*pi) * int_0^h exp(-a**2*(1 + t**2)/2)/(1 + t**2) dt``

    The integral is taken along the straight segment from 0 to ``h``.  The
    integrand is entire in ``t`` apart from poles at ``t = +-j``, so the
    result is the analytic continuation of the real function provided the
    segment keeps clear of the poles.

    Parameters
    ----------
    a : complex
        Gaussian argument (Owen's ``h`` in his own notation).
    h : complex
        Upper limit; ``+-inf`` (real) is accepted.

    Raises
    ------
    DomainError
        If the segment passes within 0.1 of ``+-j``.
    ConvergenceError
        If the adaptive quadrature fails.
    """
    a = complex(a)
    h = complex(h)
    if math.isinf(h.real) and h.imag == 0.0:
        sign = 1.0 if h.real > 0 else -1.0
        if a.imag == 0.0:
            return complex(sign * 0.5 * (1.0 - normal_cdf(abs(a.real))))
        a2 = a * a
        if a2.real <= 0:
            raise DomainError("T(a, inf) diverges unless Re(a^2) > 0")
        val = _quad_complex(lambda t: np.exp(-0.5 * a2 * (1 + t * t)) / (1 + t * t),
                            0.0, np.inf, epsabs, epsrel)
        return sign * val / (2 * math.pi)
    if h == 0:
        return 0j
    if _segment_pole_distance(h) < OWEN_POLE_CLEARANCE:
        raise DomainError(f"integration segment 0 -> {h} passes too close to a pole at +-j")
    a2 = a * a

    def integrand(s: float) -> complex:
        t = s * h
        q = 1.0 + t * t
        return np.exp(-0.5 * a2 * q) / q

    return h * _quad_complex(integrand, 0.0, 1.0, epsabs, epsrel) / (2 * math.pi)


# --------------------------------------------------------------------------
# Gamma-Gamma distribution
# --------------------------------------------------------------------------
@dataclass(frozen=True)
class GammaGammaParams:
    """Gamma-Gamma fading parameters.

    Attributes
    ----------
    alpha, beta : float
        Large- and small-scale eddy parameters, both positive.
    """

    alpha: float
    beta: float

    def __post_init__(self) -> None:
        if not (self.alpha > 0 and self.beta > 0):
            raise DomainError(f"alpha and beta must be positive, got {self.alpha}, {self.beta}")

    @property
    def rho(self) -> float:
        """``min(alpha, beta)``: sets the diversity order."""
        return min(self.alpha, self.beta)

    @property
    def tau(self) -> float:
        return max(self.alpha, self.beta)


def gamma_gamma_pdf(x, p: GammaGammaParams):
    """Gamma-Gamma density via the Bessel-K form.

    ``f(x) = 2*(ab)^((a+b)/2)/(G(a)G(b)) * x^((a+b)/2 - 1) * K_{a-b}(2*sqrt(ab*x))``
    """
    x = np.asarray(x, dtype=float)
    a, b = p.alpha, p.beta
    ab = a * b
    out = np.zeros_like(x)
    pos = x > 0
    xp = x[pos]
    arg = 2.0 * np.sqrt(ab * xp)
    # kve keeps the exponential scaling out of the Bessel evaluation.
    logk = np.log(special.kve(a - b, arg)) - arg
    logf = (math.log(2.0) + 0.5 * (a + b) * math.log(ab) - special.gammaln(a)
            - special.gammaln(b) + (0.5 * (a + b) - 1.0) * np.log(xp) + logk)
    out[pos] = np.exp(logf)
    return float(out) if out.ndim == 0 else out


_SERIES_TERMS = 400
_SERIES_MAX_CANCELLATION = 1e3


def _gg_cdf_series(z: float, a: float, b: float) -> tuple[float, float]:
    """Residue series of ``G^{2,1}_{1,3}(z | 1; a, b, 0)/(G(a)G(b))``.

    Valid when ``a - b`` is not an integer.  Returns the value and the ratio
    of the largest term to the result, which measures cancellation.
    """
    nu = a - b
    pref = math.pi / (math.sin(math.pi * nu) * math.gamma(a) * math.gamma(b))
    logz = math.log(z)
    n = np.arange(_SERIES_TERMS, dtype=float)
    # log|z^{b+n}/(n! G(1-nu+n) (b+n))| with the sign of G(1-nu+n) tracked.
    g1 = special.gammaln(1 - nu + n)
    s1 = special.gammasgn(1 - nu + n)
    g2 = special.gammaln(1 + nu + n)
    s2 = special.gammasgn(1 + nu + n)
    log_t1 = (b + n) * logz - special.gammaln(n + 1) - g1 - np.log(b + n)
    log_t2 = (a + n) * logz - special.gammaln(n + 1) - g2 - np.log(a + n)
    t1 = s1 * np.exp(log_t1)
    t2 = s2 * np.exp(log_t2)
    terms = t1 - t2
    total = pref * math.fsum(terms)
    scale = abs(pref) * max(np.max(np.abs(t1)), np.max(np.abs(t2)))
    if not (abs(terms[-1]) * abs(pref) < 1e-17 * max(scale, 1e-300)):
        return total, math.inf
    return total, scale / max(abs(total), 1e-300)


def _gg_cdf_mixture(x: float, a: float, b: float) -> float:
    """CDF as a Gamma mixture: ``E_X[P(Y <= x/X)]`` with unit-mean Gamma factors.

    ``X ~ Gamma(a, 1/a)``, ``Y ~ Gamma(b, 1/b)``; the conditional CDF of
    ``Y`` is the regularised incomplete Gamma function.  The outer integral is
    taken over ``t = log(u)`` with break points at ``u = b*x`` (where the
    conditional CDF turns over) and ``u = 1`` (the bulk of ``X``).
    """
    log_norm = a * math.log(a) - special.gammaln(a)

    def weight(t: float) -> float:
        # density of X at u = e^t times the Jacobian du/dt = u
        return math.exp(log_norm + a * t - a * math.exp(t))

    lower = x <= 1.0
    cond = special.gammainc if lower else special.gammaincc

    t_knee = math.log(b * x)

    def integrand(t: float) -> float:
        # b*x/u formed in log space: e^{-t} alone overflows for tiny x
        return weight(t) * cond(b, math.exp(t_knee - t))

    # X has negligible mass outside [t_lo, t_hi].
    t_lo = min(t_knee, 0.0) - 60.0 / max(a, 1e-3)
    t_hi = math.log(60.0 / a + 1.0) + 3.0
    cuts = sorted({t_lo, min(t_knee, 0.0), max(t_knee, 0.0), t_hi})
    total = 0.0
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", integrate.IntegrationWarning)
        for lo, hi in zip(cuts[:-1], cuts[1:]):
            if hi > lo:
                total += integrate.quad(integrand, lo, hi, epsabs=0.0, epsrel=1e-13,
                                        limit=400)[0]
    return float(total if lower else 1.0 - total)


def gamma_gamma_cdf(x: float, p: GammaGammaParams) -> float:
    """Distribution function of a unit-mean Gamma-Gamma variate.

    Equals ``G^{2,1}_{1,3}(alpha*beta*x | 1; alpha, beta, 0)/(G(alpha)G(beta))``.
    The residue (power) series is used while it is well conditioned; near
    integer ``alpha - beta`` (where the series degenerates) or for large
    arguments the equivalent Gamma-mixture integral is evaluated instead.

    Parameters
    ----------
    x : float
        Non-negative argument.
    p : GammaGammaParams

    Returns
    -------
    float
        Probability in ``[0, 1]``.
    """
    if np.isnan(x) or x < 0:
        raise DomainError(f"Gamma-Gamma CDF needs x >= 0, got {x}")
    if x == 0:
        return 0.0
    if x == np.inf:
        return 1.0
    a, b = p.alpha, p.beta
    z = a * b * x
    nu = a - b
    value = None
    if abs(math.sin(math.pi * nu)) > 1e-3 and z < 50.0:
        try:
            total, cancel = _gg_cdf_series(z, a, b)
        except (OverflowError, FloatingPointError):  # pragma: no cover - defensive
            cancel = math.inf
        if cancel < _SERIES_MAX_CANCELLATION and 0.0 <= total <= 1.0:
            value = total
    if value is None:
        value = _gg_cdf_mixture(x, a, b)
    return min(1.0, max(0.0, value))


def gamma_gamma_cdf_leading(x: float, p: GammaGammaParams) -> float:
    """Leading small-argument term ``G(tau-rho)(ab*x)^rho/(rho*G(a)*G(b))``.

    Raises
    ------
    DomainError
        When ``alpha == beta``, where ``G(tau - rho)`` has a pole.
    """
    rho, tau = p.rho, p.tau
    if tau == rho:
        raise DomainError("alpha == beta: perturb one parameter (Gamma pole at 0)")
    return math.exp(special.gammaln(tau - rho) + rho * math.log(p.alpha * p.beta * x)
                    - math.log(rho) - special.gammaln(p.alpha) - special.gammaln(p.beta))
