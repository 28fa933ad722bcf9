"""Gamma-Gamma channel, outage of both link types and their high-SNR asymptotes."""
import csv
import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from fso_irs_lab.errors import DomainError
from fso_irs_lab.geometry import BeamParams
from fso_irs_lab.special_functions import GammaGammaParams, gamma_gamma_cdf, gamma_gamma_cdf_leading
from fso_irs_lab.turbulence_channel import (
    ChannelParams,
    LinkBudget,
    OutageRow,
    atmospheric_loss,
    gains_irs,
    gains_relay,
    gg_params,
    link_params,
    monte_carlo_cdf,
    outage_irs,
    outage_relay,
    outage_sweep,
    rytov_variance,
    sample_gamma_gamma,
    snr_for_outage,
    write_outage_csv,
)

P = GammaGammaParams(4.2, 1.4)
Q = GammaGammaParams(6.0, 2.5)


def test_atmospheric_loss():
    assert atmospheric_loss(1000.0, 0.43e-3) == pytest.approx(10 ** (-0.043))
    assert atmospheric_loss(0.0) == 1.0
    with pytest.raises(DomainError):
        atmospheric_loss(-1.0)


def test_rytov_and_shape_parameters():
    beam = BeamParams()
    s2 = rytov_variance(1000.0, beam, 5e-14)
    assert s2 == pytest.approx(1.23 * 5e-14 * beam.k ** (7 / 6) * 1000.0 ** (11 / 6))
    p = gg_params(s2)
    s = math.sqrt(s2)
    alpha = 1 / math.expm1(0.49 * s2 / (1 + 1.11 * s**2.4) ** (7 / 6))
    beta = 1 / math.expm1(0.51 * s2 / (1 + 0.69 * s**2.4) ** (5 / 6))
    assert (p.alpha, p.beta) == pytest.approx((alpha, beta), rel=1e-12)


def test_shorter_hops_fade_less():
    beam = BeamParams()
    rho = [link_params(d, beam).rho for d in (340.0, 660.0, 1000.0)]
    assert rho[0] > rho[1] > rho[2]


def test_tiny_turbulence_is_capped():
    with pytest.warns(RuntimeWarning):
        p = gg_params(1e-12)
    assert p.alpha <= 1e6 and p.beta <= 1e6


def test_channel_validation_and_snr():
    ch = ChannelParams()
    assert ch.transmit_snr == pytest.approx(ch.total_power / ch.noise_variance)
    assert ch.with_threshold_db(10.0).threshold_snr == pytest.approx(10.0)
    with pytest.raises(DomainError):
        ChannelParams(cn2=0.0)


def test_budget():
    b = LinkBudget(0.9, 0.3, 0.5, 0.8)
    assert b.gamma_tilde == pytest.approx(0.5 * (0.8 * 0.3 * 0.9) ** 2)
    with pytest.raises(DomainError):
        LinkBudget(1.5, 0.3)


@given(st.floats(-20, 60))
def test_irs_outage_is_cdf_of_normalised_threshold(snr_db):
    b = LinkBudget(0.9, 0.3)
    gb = 10 ** (snr_db / 10)
    want = gamma_gamma_cdf(math.sqrt(2.0 / (gb * b.gamma_tilde)), P)
    assert outage_irs(gb, b, P, 2.0) == pytest.approx(want, rel=1e-12)


@given(st.floats(-20, 40))
def test_relay_outage_any_hop(snr_db):
    legs = (LinkBudget(0.95, 0.5, 0.5), LinkBudget(0.9, 0.4, 0.5))
    gb = 10 ** (snr_db / 10)
    f = [gamma_gamma_cdf(math.sqrt(1 / (gb * b.gamma_tilde)), p) for b, p in zip(legs, (P, Q))]
    want = 1 - (1 - f[0]) * (1 - f[1])
    assert outage_relay(gb, legs, (P, Q)) == pytest.approx(want, rel=1e-9, abs=1e-15)


def test_relay_outage_tiny_values_do_not_underflow():
    legs = (LinkBudget(0.95, 0.5, 0.5), LinkBudget(0.9, 0.4, 0.5))
    v = outage_relay(1e20, legs, (Q, Q))
    assert 0 < v < 1e-20
    assert v == pytest.approx(float(gains_relay(legs, (Q, Q)).asymptote(1e20)), rel=1e-3)


def test_zero_gml_is_certain_outage():
    assert outage_irs(1e3, LinkBudget(0.9, 0.0), P) == 1.0
    assert outage_relay(1e3, (LinkBudget(0.9, 0.0), LinkBudget(0.9, 0.5)), (P, Q)) == 1.0


def test_invalid_snr():
    with pytest.raises(DomainError):
        outage_irs(0.0, LinkBudget(0.9, 0.3), P)


def test_irs_gains_from_leading_term():
    b = LinkBudget(0.9, 0.3)
    th = 1.5
    g = gains_irs(b, P, th)
    assert g.diversity == pytest.approx(P.rho / 2)
    for gb in (1e6, 1e9):
        lead = gamma_gamma_cdf_leading(math.sqrt(th / (gb * b.gamma_tilde)), P)
        assert float(g.asymptote(gb)) == pytest.approx(lead, rel=1e-10)


def test_irs_asymptote_is_tight_at_high_snr():
    b = LinkBudget(0.9, 0.3)
    g = gains_irs(b, P)
    gb = 1e10
    assert outage_irs(gb, b, P) / float(g.asymptote(gb)) == pytest.approx(1.0, rel=1e-2)


def test_relay_gains_dominant_hop():
    legs = (LinkBudget(0.95, 0.5, 0.5), LinkBudget(0.9, 0.4, 0.5))
    g = gains_relay(legs, (P, Q))
    assert g.diversity == pytest.approx(min(P.rho, Q.rho) / 2)
    gb = 1e12
    assert outage_relay(gb, legs, (P, Q)) / float(g.asymptote(gb)) == pytest.approx(1.0, rel=1e-2)


def test_relay_gains_tied_hops_combine():
    legs = (LinkBudget(0.95, 0.5, 0.5), LinkBudget(0.9, 0.4, 0.5))
    g = gains_relay(legs, (Q, Q))
    one = [gains_relay((leg,), (Q,)).coding for leg in legs]
    d = Q.rho / 2
    assert g.coding == pytest.approx((one[0] ** -d + one[1] ** -d) ** (-1 / d))


def test_gains_at_equal_parameters_rejected():
    with pytest.raises(DomainError):
        gains_irs(LinkBudget(0.9, 0.3), GammaGammaParams(3.0, 3.0))


class TestMonteCarlo:
    def test_reproducible_and_unit_mean(self):
        a = sample_gamma_gamma(P, 200_000, seed=5, chunks=4)
        b = sample_gamma_gamma(P, 200_000, seed=5, chunks=4)
        assert np.array_equal(a, b)
        assert a.mean() == pytest.approx(1.0, abs=0.02)
        assert not np.array_equal(a, sample_gamma_gamma(P, 200_000, seed=6, chunks=4))

    def test_cdf_estimate(self):
        x = [0.3, 1.0, 2.0]
        est, se = monte_carlo_cdf(x, P, size=400_000, seed=1)
        exact = np.array([gamma_gamma_cdf(v, P) for v in x])
        assert np.all(np.abs(est - exact) < 4 * se)


def test_sweep_and_inverse(tmp_path):
    b = LinkBudget(0.9, 0.3)
    legs = (LinkBudget(0.95, 0.5, 0.5), LinkBudget(0.9, 0.4, 0.5))
    rows = outage_sweep([0.0, 20.0, 40.0], b, P, legs, (P, Q))
    assert [r.snr_db for r in rows] == [0.0, 20.0, 40.0]
    assert rows[0].pout_irs > rows[1].pout_irs > rows[2].pout_irs
    s = snr_for_outage(1e-2, lambda gb: outage_irs(gb, b, P))
    assert outage_irs(10 ** (s / 10), b, P) == pytest.approx(1e-2, rel=1e-6)
    path = tmp_path / "o.csv"
    write_outage_csv(path, rows, {"seed": 0})
    lines = open(path).read().splitlines()
    assert lines[0] == "# seed: 0"
    body = list(csv.reader(lines[1:]))
    assert body[0] == ["snr_db", "pout_irs", "pout_relay", "pout_irs_asym", "pout_relay_asym"]
    assert float(body[2][1]) == pytest.approx(rows[1].pout_irs, rel=1e-9)
    assert isinstance(rows[0], OutageRow)
