"""Shared experiment drivers for the tests (cached, deterministic)."""
from functools import lru_cache

import numpy as np

from hkcross.bargmann import QuadratureGrid
from hkcross.ivr import IvrRun
from hkcross.model import ScalarHarmonic, ShiftedPhaseCrossing
from hkcross.refsolver import GridState, grid_x, strang_evolve
from hkcross.wavepacket import l2_norm

K, THETA = 1.0, 0.5
Z0 = (-1.0, 0.0)
T_CROSS = 2.0
CROSS_EPS = (2.0 ** -6, 2.0 ** -8, 2.0 ** -10)
HARM_EPS = (1 / 64, 1 / 128, 1 / 256)


def coherent(x, eps, z):
    q, p = z
    return (np.pi * eps) ** -0.25 * np.exp(-(x - q) ** 2 / (2 * eps) + 1j * p * (x - q) / eps)


def slope(eps, vals):
    return float(np.polyfit(np.log(eps), np.log(vals), 1)[0])


def crossing_grid(eps, scale=1):
    n = (2 ** 13 if eps > 2 ** -9 else 2 ** 15) * scale
    return -4.0, 4.0, n


def crossing_data(model, x, eps):
    """Coherent state at Z0 projected pointwise onto mode 1."""
    V0 = np.array([1.0, np.exp(-1j * THETA * Z0[0])]) / np.sqrt(2)
    z = np.stack([x, np.zeros_like(x)], axis=-1)
    pi1 = model.projector(0.0, z, 1)
    return np.einsum("nij,j->in", pi1, V0) * coherent(x, eps, Z0)[None], V0


@lru_cache(maxsize=None)
def crossing_reference(eps, grid_scale=1, theta=THETA):
    model = ShiftedPhaseCrossing(K, theta)
    a, b, n = crossing_grid(eps, grid_scale)
    x = grid_x(a, b, n)
    psi0, _ = crossing_data(model, x, eps)
    mon = {}
    ref = strang_evolve(model, GridState(a, b, psi0, eps), T_CROSS, monitor=mon)
    return x, psi0, ref, mon


@lru_cache(maxsize=None)
def crossing_ivr(eps, quad_scale=1, grid_scale=1, theta=THETA):
    """Fields of every IVR flavour at T_CROSS plus the correction alone."""
    model = ShiftedPhaseCrossing(K, theta)
    x, psi0, ref, _ = crossing_reference(eps, grid_scale, theta)
    quad = QuadratureGrid.around(Z0, eps, spacing=0.5 / quad_scale)
    run = IvrRun(model, eps, x, psi0, None, quad)
    out = {}
    for flavor in ("thawed", "frozen"):
        out[flavor] = run.total_field(T_CROSS, flavor, correction=False).field
        out[flavor + "+hop"] = run.total_field(T_CROSS, flavor, correction=True).field
        out[flavor + ":corr"] = run.correction_field(T_CROSS, flavor).field
    out["meta"] = dict(run.meta)
    return out


def crossing_errors(eps, method, quad_scale=1, grid_scale=1):
    x, _, ref, _ = crossing_reference(eps, grid_scale)
    fld = crossing_ivr(eps, quad_scale, grid_scale)[method]
    return l2_norm(fld - ref.psi, x)


@lru_cache(maxsize=None)
def harmonic_fields(eps, quad_scale=1, grid_scale=1):
    """Thawed/frozen IVR and the closed form for the harmonic oscillator at t = pi/2."""
    model = ScalarHarmonic(1.0)
    z0 = (1.0, 0.0)
    x = grid_x(-4.0, 4.0, 2 ** 12 * grid_scale)
    phi = coherent(x, eps, z0)
    quad = QuadratureGrid.around(z0, eps, spacing=0.5 / quad_scale)
    run = IvrRun(model, eps, x, phi, [1.0], quad)
    t = np.pi / 2
    th = run.total_field(t, "thawed").field[0]
    fr = run.total_field(t, "frozen").field[0]
    exact = harmonic_exact(x, eps, z0, t)
    return x, th, fr, exact


def harmonic_exact(x, eps, z0, t, omega=1.0):
    """Exact harmonic evolution of a coherent state (width i stays i when omega = 1)."""
    q0, p0 = z0
    c, s = np.cos(omega * t), np.sin(omega * t)
    q = q0 * c + p0 / omega * s
    p = -q0 * omega * s + p0 * c
    # action S = int p dq - h dt along the centre
    S = 0.5 * (p * q - p0 * q0)
    phase = -0.5 * omega * t      # det^{-1/2}(A + i B) = e^{-i omega t / 2}
    return np.exp(1j * S / eps + 1j * phase) * coherent(x, eps, (q, p))
