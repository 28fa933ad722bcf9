"""Atmospheric channel: path loss, Gamma-Gamma fading, outage and its asymptote.

The end-to-end SNR of a link is ``gamma_bar * gamma_tilde * h_a**2`` where
``gamma_bar = P_tot / sigma_n**2`` is the transmit SNR, ``gamma_tilde`` the
deterministic factor collected in :class:`LinkBudget` and ``h_a`` a
unit-mean Gamma-Gamma variate.  An outage occurs when the SNR falls below
``gamma_th``.
"""
from __future__ import annotations

import csv
import math
import warnings
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy import special

from . import defaults
from .errors import DomainError
from .geometry import BeamParams
from .special_functions import GammaGammaParams, gamma_gamma_cdf

# Gamma-Gamma parameters are capped here when the Rytov variance is so small
# that the plane-wave formulas overflow (essentially no scintillation).
PARAM_CAP = 1e6

PARAMETERIZATION = "plane-wave Rytov (alpha: 0.49/1.11, beta: 0.51/0.69)"


@dataclass(frozen=True)
class ChannelParams:
    """Physical constants of the optical channel.

    Attributes
    ----------
    attenuation_db_per_m : float
        Attenuation coefficient kappa in dB/m.
    cn2 : float
        Refractive-index structure constant in m^(-2/3).
    responsivity : float
        Photodetector responsivity zeta in A/W.
    total_power : float
        Transmit power budget in W.
    noise_variance : float
        Receiver noise power ``N0 * B``.
    threshold_snr : float
        Linear SNR threshold gamma_th.
    """

    attenuation_db_per_m: float = defaults.ATTENUATION_DB_PER_M
    cn2: float = defaults.CN2
    responsivity: float = defaults.RESPONSIVITY
    total_power: float = defaults.TOTAL_POWER
    noise_variance: float = defaults.noise_variance()
    threshold_snr: float = 10.0 ** (defaults.THRESHOLD_SNR_DB / 10.0)

    def __post_init__(self) -> None:
        for name in ("attenuation_db_per_m", "cn2", "responsivity", "total_power",
                     "noise_variance", "threshold_snr"):
            if not getattr(self, name) > 0:
                raise DomainError(f"{name} must be positive, got {getattr(self, name)}")

    @property
    def transmit_snr(self) -> float:
        """``P_tot / sigma_n**2``."""
        return self.total_power / self.noise_variance

    def with_threshold_db(self, threshold_db: float) -> "ChannelParams":
        return ChannelParams(self.attenuation_db_per_m, self.cn2, self.responsivity,
                             self.total_power, self.noise_variance,
                             10.0 ** (threshold_db / 10.0))


@dataclass(frozen=True)
class LinkBudget:
    """Deterministic part of one hop.

    ``gamma_tilde = coefficient * zeta**2 * h_gml**2 * h_p**2`` with
    coefficient 1 for a single IRS hop and 1/2 for each leg of a relay link
    (the power budget is split evenly between the two transmitters).
    """

    h_p: float
    h_gml: float
    coefficient: float = 1.0
    responsivity: float = 1.0

    def __post_init__(self) -> None:
        if not 0.0 < self.h_p <= 1.0:
            raise DomainError(f"h_p must lie in (0, 1], got {self.h_p}")
        if self.h_gml < 0 or self.coefficient <= 0:
            raise DomainError("h_gml must be non-negative and the coefficient positive")

    @property
    def gamma_tilde(self) -> float:
        return self.coefficient * (self.responsivity * self.h_gml * self.h_p) ** 2

    def average_snr(self, gamma_bar: float) -> float:
        return gamma_bar * self.gamma_tilde


@dataclass(frozen=True)
class GainPair:
    """High-SNR outage asymptote ``P_out ~ (coding * gamma_bar)**(-diversity)``."""

    diversity: float
    coding: float

    def asymptote(self, gamma_bar):
        return (self.coding * np.asarray(gamma_bar, dtype=float)) ** (-self.diversity)


def atmospheric_loss(d: float, attenuation_db_per_m: float = defaults.ATTENUATION_DB_PER_M) -> float:
    """Beer-Lambert path loss ``10**(-kappa*d/10)``."""
    if d < 0:
        raise DomainError(f"distance must be non-negative, got {d}")
    return 10.0 ** (-attenuation_db_per_m * d / 10.0)


def rytov_variance(d: float, beam: BeamParams, cn2: float = defaults.CN2) -> float:
    """Plane-wave Rytov variance ``1.23 Cn2 k^(7/6) d^(11/6)``."""
    if d <= 0:
        raise DomainError(f"distance must be positive, got {d}")
    return 1.23 * cn2 * beam.k ** (7.0 / 6.0) * d ** (11.0 / 6.0)


def _shape(sigma2: float, a: float, b: float, power: float) -> float:
    s = math.sqrt(sigma2)
    exponent = a * sigma2 / (1.0 + b * s ** 2.4) ** power
    return 1.0 / math.expm1(exponent) if exponent > 0 else math.inf


def gg_params(sigma2: float) -> GammaGammaParams:
    """Gamma-Gamma parameters for a plane wave with Rytov variance ``sigma2``.

    Values above :data:`PARAM_CAP` are capped with a warning; they only
    occur for vanishing turbulence where fading is negligible anyway.
    """
    if not sigma2 > 0:
        raise DomainError(f"Rytov variance must be positive, got {sigma2}")
    alpha = _shape(sigma2, 0.49, 1.11, 7.0 / 6.0)
    beta = _shape(sigma2, 0.51, 0.69, 5.0 / 6.0)
    if alpha > PARAM_CAP or beta > PARAM_CAP:
        warnings.warn(f"Rytov variance {sigma2:.3g} gives Gamma-Gamma parameters above "
                      f"{PARAM_CAP:g}; capping", RuntimeWarning, stacklevel=2)
        alpha, beta = min(alpha, PARAM_CAP), min(beta, PARAM_CAP)
    return GammaGammaParams(alpha, beta)


def link_params(d: float, beam: BeamParams, channel: ChannelParams = ChannelParams()) -> GammaGammaParams:
    """Gamma-Gamma parameters of a hop of length ``d``."""
    return gg_params(rytov_variance(d, beam, channel.cn2))


def _check_snr(gamma_bar: float) -> None:
    if not gamma_bar > 0:
        raise DomainError(f"transmit SNR must be positive, got {gamma_bar}")


def _hop_outage(gamma_bar: float, budget: LinkBudget, p: GammaGammaParams,
                threshold: float) -> float:
    mean = budget.average_snr(gamma_bar)
    if mean == 0:
        return 1.0
    return gamma_gamma_cdf(math.sqrt(threshold / mean), p)


def outage_irs(gamma_bar: float, budget: LinkBudget, p: GammaGammaParams,
               threshold: float = 1.0) -> float:
    """Outage probability of the single IRS-assisted hop."""
    _check_snr(gamma_bar)
    return _hop_outage(gamma_bar, budget, p, threshold)


def outage_relay(gamma_bar: float, budgets: Sequence[LinkBudget],
                 params: Sequence[GammaGammaParams], threshold: float = 1.0) -> float:
    """Outage of a decode-and-forward chain: any hop in outage breaks the link."""
    _check_snr(gamma_bar)
    if len(budgets) != len(params) or not budgets:
        raise DomainError("need one Gamma-Gamma parameter set per hop")
    # 1 - prod(1 - F_i) without cancellation when every F_i is tiny.
    log_survive = 0.0
    for budget, p in zip(budgets, params):
        f = _hop_outage(gamma_bar, budget, p, threshold)
        if f >= 1.0:
            return 1.0
        log_survive += math.log1p(-f)
    return -math.expm1(log_survive)


def _log_leading_constant(p: GammaGammaParams) -> float:
    """``log[G(tau-rho) / (G(tau) G(rho+1))]``; raises at the ``alpha == beta`` pole."""
    rho, tau = p.rho, p.tau
    if math.isclose(rho, tau, rel_tol=1e-12):
        raise DomainError("alpha == beta puts Gamma(tau - rho) on its pole; "
                          "perturb one of the parameters slightly")
    return special.gammaln(tau - rho) - special.gammaln(tau) - special.gammaln(rho + 1.0)


def gains_irs(budget: LinkBudget, p: GammaGammaParams, threshold: float = 1.0) -> GainPair:
    """Diversity ``rho/2`` and coding gain of the IRS hop."""
    rho, tau = p.rho, p.tau
    diversity = rho / 2.0
    log_c = (math.log(budget.gamma_tilde / (threshold * (tau * rho) ** 2))
             - _log_leading_constant(p) / diversity)
    return GainPair(diversity, math.exp(log_c))


def _leg_coding(budget: LinkBudget, p: GammaGammaParams, threshold: float, mu: float) -> float:
    rho, tau = p.rho, p.tau
    log_inner = _log_leading_constant(p) + rho * math.log(tau * rho / mu)
    return budget.gamma_tilde / threshold * math.exp(-2.0 / rho * log_inner)


def gains_relay(budgets: Sequence[LinkBudget], params: Sequence[GammaGammaParams],
                threshold: float = 1.0, mu: Sequence[float] | None = None) -> GainPair:
    """Diversity and coding gain of the relay chain.

    The hop with the smallest ``rho`` dominates; hops that tie combine as
    ``C = (sum C_i**(-D))**(-1/D)``.  ``mu`` is the per-hop normalisation in
    the coding-gain expression; the default of one makes
    ``P_out * (C*gamma_bar)**D -> 1``.
    """
    if len(budgets) != len(params) or not budgets:
        raise DomainError("need one Gamma-Gamma parameter set per hop")
    mu = [1.0] * len(budgets) if mu is None else list(mu)
    rhos = [p.rho for p in params]
    diversity = min(rhos) / 2.0
    coding = [_leg_coding(b, p, threshold, m) for b, p, m in zip(budgets, params, mu)]
    dominant = [c for c, r in zip(coding, rhos) if math.isclose(r / 2.0, diversity, rel_tol=1e-12)]
    total = sum(c ** (-diversity) for c in dominant)
    return GainPair(diversity, total ** (-1.0 / diversity))


def sample_gamma_gamma(p: GammaGammaParams, size: int, seed: int = 0,
                       chunks: int = 1) -> np.ndarray:
    """Draw unit-mean Gamma-Gamma variates as the product of two Gamma draws.

    The stream is split into ``chunks`` independent Philox generators spawned
    from one seed, so chunked draws are reproducible for a given seed and
    chunk count regardless of how the chunks are scheduled.
    """
    children = np.random.SeedSequence(seed).spawn(chunks)
    sizes = np.full(chunks, size // chunks)
    sizes[: size % chunks] += 1
    parts = []
    for child, n in zip(children, sizes):
        rng = np.random.Generator(np.random.Philox(child))
        x = rng.gamma(p.alpha, 1.0 / p.alpha, n)
        y = rng.gamma(p.beta, 1.0 / p.beta, n)
        parts.append(x * y)
    return np.concatenate(parts)


def monte_carlo_cdf(x: Sequence[float], p: GammaGammaParams, size: int = 10**7,
                    seed: int = 0) -> tuple[np.ndarray, np.ndarray]:
    """Empirical CDF at ``x`` and its binomial standard error."""
    draws = np.sort(sample_gamma_gamma(p, size, seed, chunks=8))
    x = np.asarray(x, dtype=float)
    est = np.searchsorted(draws, x, side="right") / size
    se = np.sqrt(np.maximum(est * (1.0 - est), 1.0 / size) / size)
    return est, se


@dataclass(frozen=True)
class OutageRow:
    snr_db: float
    pout_irs: float
    pout_relay: float
    pout_irs_asym: float
    pout_relay_asym: float


def outage_sweep(snr_db: Sequence[float], irs_budget: LinkBudget, irs_params: GammaGammaParams,
                 relay_budgets: Sequence[LinkBudget], relay_params: Sequence[GammaGammaParams],
                 threshold: float = 1.0) -> list[OutageRow]:
    """Exact and asymptotic outage of both link types over an SNR grid (dB)."""
    g_irs = gains_irs(irs_budget, irs_params, threshold)
    g_rel = gains_relay(relay_budgets, relay_params, threshold)
    rows = []
    for s in snr_db:
        gb = 10.0 ** (s / 10.0)
        rows.append(OutageRow(float(s),
                              outage_irs(gb, irs_budget, irs_params, threshold),
                              outage_relay(gb, relay_budgets, relay_params, threshold),
                              float(g_irs.asymptote(gb)), float(g_rel.asymptote(gb))))
    return rows


def snr_for_outage(target: float, outage, lo_db: float = -200.0, hi_db: float = 300.0) -> float:
    """Transmit SNR in dB at which the monotone ``outage(gamma_bar)`` equals ``target``."""
    from scipy.optimize import brentq

    def f(s_db: float) -> float:
        return math.log(max(outage(10.0 ** (s_db / 10.0)), 1e-300)) - math.log(target)

    return brentq(f, lo_db, hi_db, xtol=1e-9)


def write_outage_csv(path, rows: Sequence[OutageRow], manifest: dict | None = None) -> None:
    with open(path, "w", newline="") as fh:
        for key, value in (manifest or {}).items():
            fh.write(f"# {key}: {value}\n")
        w = csv.writer(fh)
        w.writerow(["snr_db", "pout_irs", "pout_relay", "pout_irs_asym", "pout_relay_asym"])
        for r in rows:
            w.writerow([f"{r.snr_db:.6g}", f"{r.pout_irs:.10e}", f"{r.pout_relay:.10e}",
                        f"{r.pout_irs_asym:.10e}", f"{r.pout_relay_asym:.10e}"])
