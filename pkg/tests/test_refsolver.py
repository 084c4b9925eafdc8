import numpy as np
import pytest

from hkcross.errors import InvalidInputError, ResolutionError
from hkcross.model import MatrixPotentialSchrodinger, ScalarHarmonic, ShiftedPhaseCrossing
from hkcross.refsolver import (GridState, error_norms, grid_x, mode_masses, project_mode,
                               required_points, strang_evolve)
from hkcross.wavepacket import l2_norm

from helpers import coherent, harmonic_exact


def free_packet(x, eps, z0, t):
    q0, p0 = z0
    w = 1 + 1j * t
    y = x - q0 - p0 * t
    S = 0.5 * p0 * p0 * t
    return ((np.pi * eps) ** -0.25 / np.sqrt(w)
            * np.exp(1j * S / eps + 1j * p0 * y / eps - y * y / (2 * eps * w)))


def test_free_dispersion():
    eps = 1 / 64
    x = grid_x(-6, 6, 4096)
    z0 = (-0.5, 0.8)
    out = strang_evolve(ScalarHarmonic(0.0), GridState(-6, 6, coherent(x, eps, z0), eps), 0.5)
    assert l2_norm(out.psi[0] - free_packet(x, eps, z0, 0.5), x) <= 1e-6


def test_harmonic_closed_form_and_mass():
    eps = 1 / 64
    x = grid_x(-4, 4, 2048)
    mon = {}
    out = strang_evolve(ScalarHarmonic(1.0), GridState(-4, 4, coherent(x, eps, (1.0, 0.0)), eps),
                        np.pi / 2, dt=eps / 40, monitor=mon)
    assert l2_norm(out.psi[0] - harmonic_exact(x, eps, (1.0, 0.0), np.pi / 2), x) < 1e-5
    assert mon["mass_drift"] <= 1e-8
    assert mon["boundary_mass"] < 1e-12


def test_model_a_theta_zero_characteristics():
    eps, k, t = 1 / 128, 1.3, 0.6
    x = grid_x(-4, 4, 4096)
    u0 = coherent(x, eps, (-1.0, 0.0))
    w0 = 0.4j * coherent(x, eps, (-0.5, 0.3))
    psi0 = np.stack([u0 + w0, u0 - w0]) / np.sqrt(2)
    out = strang_evolve(ShiftedPhaseCrossing(k, 0.0), GridState(-4, 4, psi0, eps), t)
    ph = k * (x * t - 0.5 * t * t) / eps
    u = coherent(x - t, eps, (-1.0, 0.0)) * np.exp(-1j * ph)
    w = 0.4j * coherent(x - t, eps, (-0.5, 0.3)) * np.exp(1j * ph)
    exact = np.stack([u + w, u - w]) / np.sqrt(2)
    assert l2_norm(out.psi - exact, x) <= 1e-8


def test_dt_order_two_model_b():
    eps = 1 / 32
    model = MatrixPotentialSchrodinger(1.0, 0.5, 1.0, 0.0)
    x = grid_x(-5, 5, 1024)
    psi0 = np.stack([coherent(x, eps, (-1.0, 0.5)), np.zeros_like(x)]) + 0j
    st = GridState(-5, 5, psi0, eps)
    sols = [strang_evolve(model, st, 1.0, dt=dt).psi for dt in (0.04, 0.02, 0.01)]
    e1 = l2_norm(sols[0] - sols[1], x)
    e2 = l2_norm(sols[1] - sols[2], x)
    assert np.log2(e1 / e2) == pytest.approx(2.0, abs=0.1)


def test_mode_masses_and_projection():
    eps = 1 / 64
    model = ShiftedPhaseCrossing(1.0, 0.5)
    x = grid_x(-4, 4, 2048)
    V = np.array([1.0, np.exp(0.5j)]) / np.sqrt(2)
    st = GridState(-4, 4, V[:, None] * coherent(x, eps, (-1.0, 0.0))[None], eps)
    m = mode_masses(model, st)
    assert m.sum() == pytest.approx(st.mass(), rel=1e-12)
    assert m[0] > 0.99
    p2 = project_mode(model, st, 2)
    assert st.dx * np.sum(np.abs(p2) ** 2) == pytest.approx(m[1], rel=1e-12)


def test_resolution_and_validation():
    eps = 1 / 64
    x = grid_x(-4, 4, 64)
    st = GridState(-4, 4, coherent(x, eps, (0.0, 0.0)), eps)
    with pytest.raises(ResolutionError):
        strang_evolve(ScalarHarmonic(), st, 0.1, p_max=2.0)
    with pytest.raises(InvalidInputError):
        GridState(-4, 4, np.zeros(100), eps)
    with pytest.raises(InvalidInputError):
        strang_evolve(ShiftedPhaseCrossing(), st, 0.1)
    assert required_points(eps, 8.0, 2.0) >= 8.0 * 4 * 2.0 / (np.pi * eps)


def test_error_norms_needs_same_grid():
    eps = 1 / 64
    a = GridState(-4, 4, np.zeros(64), eps)
    b = GridState(-4, 4, np.zeros(128), eps)
    with pytest.raises(InvalidInputError):
        error_norms(a, b)
    l2, s1 = error_norms(a, a)
    assert l2 == 0 and s1 == 0
