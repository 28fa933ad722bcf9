"""Field oracle: closed-form Gaussian segments, power conservation, tier agreement."""
import csv
import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy import integrate, special

from fso_irs_lab.errors import DomainError, OscillationBudgetError
from fso_irs_lab.geometry import BeamParams, IrsConfig, LensConfig, LinkGeometry, beamwidth
from fso_irs_lab.wave_optics_oracle import (
    LinkPower,
    QuadratureSettings,
    build_phase_profile,
    exact_receive_width,
    field_map,
    fp_intensity,
    gaussian_segment_integral,
    incident_field,
    numerical_gml,
    numerical_relay_gml,
    reflected_field_erf_form,
    reflected_field_quadrature,
    write_field_map,
)


def _direct_segment(b, c, half):
    f = lambda x: np.exp(-b * x * x - 1j * c * x)
    re, _ = integrate.quad(lambda x: f(x).real, -half, half, limit=400, epsabs=1e-15, epsrel=1e-11)
    im, _ = integrate.quad(lambda x: f(x).imag, -half, half, limit=400, epsabs=1e-15, epsrel=1e-11)
    return re + 1j * im


@pytest.mark.filterwarnings("ignore::scipy.integrate.IntegrationWarning")
@given(st.floats(0.1, 50), st.floats(-20, 20), st.floats(-30, 30), st.floats(0.01, 3))
def test_gaussian_segment_matches_direct_quadrature(br, bi, c, half):
    b = complex(br, bi)
    got = complex(gaussian_segment_integral(b, c, half))
    want = _direct_segment(b, c, half)
    assert abs(got - want) <= 1e-8 * max(abs(want), 1e-6)


def test_gaussian_segment_infinite_limit():
    b, c = 2.0 + 1.0j, 3.0
    want = np.sqrt(np.pi / b) * np.exp(-c * c / (4 * b))
    assert complex(gaussian_segment_integral(b, c, 50.0)) == pytest.approx(complex(want), rel=1e-12)


def test_lp_gradient_redirects_beam(geometry, beam):
    prof = build_phase_profile("LP", geometry, beam)
    assert prof.phi_x == pytest.approx(math.cos(geometry.theta_i) - math.cos(geometry.theta_r))
    assert prof.phi_y == pytest.approx(0.0, abs=1e-15)
    mir = build_phase_profile("mir", geometry, beam)
    assert mir.phi_x == mir.phi_y == 0.0


def test_qp_requires_focal(geometry, beam):
    with pytest.raises(DomainError):
        build_phase_profile("QP", geometry, beam)


def test_incident_power_on_surface_plane(geometry, beam):
    """The tilted Gaussian footprint carries the full transmit power."""
    link = LinkPower(power=0.4)
    w = beamwidth(geometry.d1, beam)
    si = geometry.sin_i
    e0 = abs(incident_field(0.0, 0.0, geometry, beam, link)) ** 2 / (2 * link.impedance)
    gx, _ = integrate.quad(lambda x: abs(incident_field(x, 0.0, geometry, beam, link)) ** 2,
                           -8 * w / si, 8 * w / si, limit=200)
    gy, _ = integrate.quad(lambda y: abs(incident_field(0.0, y, geometry, beam, link)) ** 2,
                           -8 * w, 8 * w, limit=200)
    # separable Gaussian: total = gx*gy/|E(0,0)|^2 / (2 eta)
    total = gx * gy / (2 * link.impedance * e0 * 2 * link.impedance)
    assert total == pytest.approx(0.4, rel=1e-8)


@pytest.mark.parametrize("profile, focal", [("LP", None), ("QP", 250.0), ("mir", None)])
def test_erf_form_matches_direct_quadrature(geometry, beam, profile, focal):
    irs = IrsConfig.square(0.02, profile, focal)
    for x, y in [(0.0, 0.0), (0.04, -0.03)]:
        e1 = reflected_field_erf_form(x, y, geometry, beam, irs)
        e2 = reflected_field_quadrature(x, y, geometry, beam, irs)
        assert abs(e1 - e2) <= 1e-2 * abs(e2)


def test_quadrature_refuses_oscillatory_surface(geometry, beam):
    tight = QuadratureSettings(max_cycles=5.0)
    with pytest.raises(OscillationBudgetError):
        reflected_field_quadrature(0.0, 0.0, geometry, beam, IrsConfig.square(1.0, "LP"),
                                   settings=tight)


def test_gml_small_surface_scales_with_area_squared(geometry, beam, lens):
    # lens-plane pattern width ~ lambda d2 / L is metres, far wider than the lens
    g_a = numerical_gml(geometry, beam, IrsConfig.square(5e-5), lens, evaluator="erf")
    g_b = numerical_gml(geometry, beam, IrsConfig.square(1e-4), lens, evaluator="erf")
    assert g_b / g_a == pytest.approx(16.0, rel=1e-3)


@pytest.mark.parametrize("profile, focal", [("LP", None), ("QP", 250.0), ("FP", None), ("mir", None)])
def test_gml_is_passive(geometry, beam, lens, profile, focal):
    g = numerical_gml(geometry, beam, IrsConfig.square(1.0, profile, focal), lens, evaluator="erf")
    assert 0.0 < g <= 1.0


def _surface_capture(geometry, beam, side):
    """Fraction of the incident power intercepted by a square surface."""
    w = beamwidth(geometry.d1, beam)
    h = math.sqrt(2) * side / 2
    return special.erf(h * geometry.sin_i / w) * special.erf(h / w)


def test_fp_large_lens_collects_all_reflected_power(geometry, beam):
    g = numerical_gml(geometry, beam, IrsConfig.square(1.0, "FP"), LensConfig(0.5), evaluator="erf")
    assert g == pytest.approx(_surface_capture(geometry, beam, 1.0), rel=1e-4)


def test_fp_intensity_centre(geometry, beam):
    """``I(0) = 16 C_r2`` scaled by the squared edge factors of the finite surface."""
    irs = IrsConfig.square(1.0, "FP")
    res = fp_intensity(0.0, 0.0, geometry, beam, irs)
    w = beamwidth(geometry.d1, beam)
    c_r2 = 0.4 * math.pi * w**2 * geometry.sin_r / (
        8 * beam.wavelength**2 * geometry.d2**2 * geometry.sin_i)
    assert res.in_expansion_regime
    w_in_x = w / geometry.sin_i
    edge = special.erf(0.5 / w_in_x) * special.erf(0.5 / w)
    assert res.intensity == pytest.approx(16 * c_r2 * edge**2, rel=1e-9)


@pytest.mark.parametrize("d", [100.0, 500.0, 1000.0])
def test_relay_gml_square_lens(beam, lens, d):
    w = beamwidth(d, beam)
    want = special.erf(math.sqrt(math.pi / 2) * lens.radius / w) ** 2
    assert numerical_relay_gml(d, beam, lens) == pytest.approx(want, rel=1e-9)


def test_relay_gml_disc_lens(beam, lens):
    d = 500.0
    w = beamwidth(d, beam)
    want = 1 - math.exp(-2 * lens.radius**2 / w**2)
    assert numerical_relay_gml(d, beam, lens, "disc") == pytest.approx(want, rel=1e-9)


def test_exact_receive_width_fp(geometry, beam):
    irs = IrsConfig.square(1.0, "FP")
    w = beamwidth(geometry.d1, beam)
    want = 2 * geometry.d2 / (beam.k * w)
    assert exact_receive_width(geometry, beam, irs, "y") == pytest.approx(want, rel=1e-3)


def test_field_map_roundtrip(tmp_path, geometry, beam):
    irs = IrsConfig.square(0.02)
    samples = field_map([0.0, 0.01], [0.0], geometry, beam, irs)
    path = tmp_path / "field.csv"
    write_field_map(path, samples)
    rows = list(csv.reader(open(path)))
    assert rows[0] == ["x_p2", "y_p2", "Re(E)", "Im(E)", "I"]
    assert len(rows) == 3
    assert float(rows[1][4]) == pytest.approx(samples[0].intensity)
    with pytest.raises(DomainError):
        field_map([0.0], [0.0], geometry, beam, irs, evaluator="nope")
