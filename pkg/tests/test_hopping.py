import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from hkcross.classical import integrate_trajectory
from hkcross.errors import DegenerateCrossingError, DegenerateWidthError, TruncationError
from hkcross.hopping import (crossing_params, detect_first_crossing, gamma_flat,
                             gaussian_transfer_factor, hop_continue, hop_jacobian, hopped_width,
                             nominal_tau, transfer_amplitude, transfer_gaussian_closed_form,
                             transfer_polarization, transfer_quadrature)
from hkcross.model import ShiftedPhaseCrossing
from hkcross.wavepacket import GaussianTerm, coherent_state, poly_eval

MODEL = ShiftedPhaseCrossing(1.0, 0.5)


def closed_form_profile(gamma, y, mu, a, b):
    """Transfer of e^{i gamma y^2/2} written as a Gaussian with the flat width."""
    g = gamma_flat(gamma, mu, a, b)[0, 0]
    return gaussian_transfer_factor(gamma, mu, a, b) * np.exp(0.5j * g * y * y)


def test_crossing_time_model_a():
    tr = integrate_trajectory(MODEL, 1, 0.0, [-1.0, 0.0], 2.0, 1e-3)
    t_flat, zeta = detect_first_crossing(MODEL, 1, tr)
    assert t_flat == pytest.approx(1.0, abs=1e-9)
    assert np.allclose(zeta, [0.0, -1.0], atol=1e-9)


def test_no_crossing_when_moving_away():
    tr = integrate_trajectory(MODEL, 1, 0.0, [1.0, 0.0], 2.0, 1e-2)
    assert detect_first_crossing(MODEL, 1, tr) is None


def test_crossing_params_model_a():
    ev = crossing_params(MODEL, 1.0, [0.0, -1.0])
    assert ev.mu_flat == pytest.approx(0.5)
    assert np.allclose(ev.alpha_flat, 0.0)
    assert np.allclose(ev.beta_flat, -1.0)
    assert ev.tau == pytest.approx(np.sqrt(4j * np.pi))
    assert ev.tau == pytest.approx(2 * np.sqrt(np.pi) * np.exp(0.25j * np.pi))
    assert ev.outgoing_mode == 2
    js = ev.to_json()
    assert js["t_flat"] == 1.0 and js["incoming_mode"] == 1


def test_gamma_flat_examples():
    assert gamma_flat(1j, 0.5, 0.0, -1.0)[0, 0] == pytest.approx(-1 + 1j)
    assert gamma_flat(1j, 1.0, 1.0, 0.0)[0, 0] == pytest.approx(1j + 1 / (2 + 1j))
    assert gamma_flat(1j, 1.0, 1.0, 0.0)[0, 0] == pytest.approx(0.4 + 0.8j)


def test_hopped_width_model_a():
    ev = crossing_params(MODEL, 1.0, [0.0, -1.0])
    assert hopped_width(1j, ev)[0, 0] == pytest.approx(2 + 1j)
    # read the width off the transferred profile computed by quadrature
    y = np.array([0.0, 0.05])
    _, a, b = ev.signed()
    num = transfer_quadrature(GaussianTerm([0.0, 0.0], 1j, 1.0), y, ev.kernel_mu, a, b)
    assert 2 * np.log(num[1] / num[0]) / (1j * y[1] ** 2) == pytest.approx(2 + 1j, rel=1e-8)
    out = transfer_gaussian_closed_form(coherent_state([0.0, -1.0], polarization=[1, 0]), ev, MODEL)
    assert out.width[0, 0] == pytest.approx(2 + 1j)
    # the transferred polarization lies in the outgoing eigenspace
    pi2 = MODEL.projector(1.0, [0.0, -1.0], 2)
    assert np.allclose(pi2 @ out.polarization, out.polarization)


def test_hop_jacobian_symplectic():
    ev = crossing_params(MODEL, 1.0, [0.0, -1.0])
    G = hop_jacobian(ev)
    assert np.linalg.det(G) == pytest.approx(1.0)
    J = np.array([[0, 1], [-1, 0]])
    assert np.allclose(G.T @ J @ G, J)


@settings(max_examples=25, deadline=None)
@given(mu=st.floats(0.2, 2.0), sgn=st.sampled_from([-1.0, 1.0]), a=st.floats(-1.5, 1.5),
       b=st.floats(-1.5, 1.5), gr=st.floats(-1, 1), gi=st.floats(0.3, 2))
def test_quadrature_matches_closed_form(mu, sgn, a, b, gr, gi):
    mu = sgn * mu
    gam = complex(gr, gi)
    try:
        g = gamma_flat(gam, mu, a, b)[0, 0]
    except DegenerateWidthError:
        return
    if g.imag <= 1e-3:
        return
    y = np.linspace(-4, 4, 81)
    prof = GaussianTerm([0.0, 0.0], gam, 1.0)
    num = transfer_quadrature(prof, y, mu, a, b)
    ref = closed_form_profile(gam, y, mu, a, b)
    assert np.linalg.norm(num - ref) <= 1e-6 * np.linalg.norm(ref)


def test_quadrature_alpha_zero_fresnel():
    mu, b = 0.7, -1.3
    y = np.linspace(-3, 3, 61)
    prof = GaussianTerm([0.0, 0.0], 1j, 1.0, poly={(0,): 1.0, (2,): 0.3})
    num = transfer_quadrature(prof, y, mu, 0.0, b)
    ref = poly_eval(prof.poly, y[None]) * np.exp(-0.5 * y * y) * np.sqrt(1j * np.pi / mu) \
        * np.exp(-1j * b * b * y * y / (4 * mu))
    assert np.linalg.norm(num - ref) <= 1e-6 * np.linalg.norm(ref)


def test_transfer_amplitude_model_a():
    ev = crossing_params(MODEL, 1.0, [0.0, -1.0])
    # quadratic coefficient A = -mu/2 = -1/4; int e^{iAs^2} ds = sqrt(pi/|A|) e^{-i pi/4}
    fresnel = np.sqrt(np.pi / 0.25) * np.exp(-0.25j * np.pi)
    assert transfer_amplitude(1j, ev) == pytest.approx(-0.5j * fresnel)
    s = np.linspace(-150, 150, 600001)
    damped = np.trapezoid(np.exp((-0.25j - 1e-3) * s * s), s)
    assert damped == pytest.approx(fresnel, rel=5e-3)


def test_transfer_polarization_in_range():
    ev = crossing_params(MODEL, 1.0, [0.0, -1.0])
    V = np.array([1.0, np.exp(0.5j)]) / np.sqrt(2)
    W = transfer_polarization(ev, V, MODEL)
    assert np.linalg.norm(W) > 0
    assert np.allclose(MODEL.projector(1.0, [0.0, -1.0], 1) @ W, 0, atol=1e-14)


def test_hop_continue_linear_flow():
    ev = crossing_params(MODEL, 1.0, [0.0, -1.0])
    tr, off = hop_continue(MODEL, ev, 2.0, 1e-3, incoming_action=0.25)
    # h2 = xi - x: x' = 1, xi' = 1
    assert np.allclose(tr.z[-1], [1.0, 0.0], atol=1e-12)
    assert off == 0.25


def test_degenerate_cases():
    class Flat(ShiftedPhaseCrossing):
        def mu_flat(self, t, z):
            return np.zeros(np.shape(z)[:-1])

    with pytest.raises(DegenerateCrossingError):
        crossing_params(Flat(1.0, 0.5), 1.0, [0.0, -1.0])
    with pytest.raises(DegenerateWidthError):
        gamma_flat(1j, 0.0, 0.0, 1.0)
    with pytest.raises(TruncationError):
        transfer_quadrature(GaussianTerm([0.0, 0.0], 1j, 1.0), np.zeros(3), 0.0, 0.0, 1.0)


@settings(max_examples=30, deadline=None)
@given(mu=st.floats(1e-3, 1e3))
def test_tau_scaling(mu):
    assert nominal_tau(mu) * np.sqrt(mu) == pytest.approx(np.sqrt(2j * np.pi), rel=1e-12)


def test_nominal_tau_array():
    mu = np.array([0.5, 2.0])
    assert np.allclose(nominal_tau(mu), np.sqrt(2j * np.pi / mu))
