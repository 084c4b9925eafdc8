"""Strang-splitting reference solver on a periodic 1-D grid.

Model A (``eps D_x + k x M(x)``): the transport part is an exact translation.
Translations by ``dt`` compose exactly, so the splitting
``P(dt/2) T(dt) P(dt/2)`` is run in the co-moving frame ``y = x - (t - t0)``
where ``T`` is the identity and ``P`` is evaluated at ``y + t``; the
accumulated translation is applied once, spectrally, at the end.

Schrodinger-type models (``-eps^2/2 d_x^2 + V(x)``): kinetic multiplier
``exp(-i dt eps k^2 / 2)`` between half potential steps.

Pointwise 2 x 2 exponentials use closed forms, never series.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, replace

import numpy as np

from .errors import InvalidInputError, ResolutionError
from .model import MatrixPotentialSchrodinger, Model, ScalarHarmonic, ShiftedPhaseCrossing
from .wavepacket import l2_norm, sigma_k_norm

DEFAULT_N = 2 ** 13
DEFAULT_DOMAIN = (-8.0, 8.0)
BOUNDARY_TOL = 1e-10


@dataclass
class GridState:
    x_min: float
    x_max: float
    psi: np.ndarray   # (m, n) complex
    eps: float
    t: float = 0.0

    def __post_init__(self):
        self.psi = np.atleast_2d(np.asarray(self.psi, dtype=complex))
        n = self.psi.shape[-1]
        if n < 2 or n & (n - 1):
            raise InvalidInputError("grid size must be a power of two")
        if self.eps <= 0:
            raise InvalidInputError("eps must be positive")

    @property
    def n(self) -> int:
        return self.psi.shape[-1]

    @property
    def dx(self) -> float:
        return (self.x_max - self.x_min) / self.n

    @property
    def x(self) -> np.ndarray:
        return self.x_min + self.dx * np.arange(self.n)

    @property
    def k(self) -> np.ndarray:
        return 2 * np.pi * np.fft.fftfreq(self.n, d=self.dx)

    def mass(self) -> float:
        return float(self.dx * np.sum(np.abs(self.psi) ** 2))

    def same_grid(self, other: "GridState") -> bool:
        return (self.n == other.n and self.x_min == other.x_min and self.x_max == other.x_max
                and self.eps == other.eps and self.psi.shape == other.psi.shape)

    def to_csv(self, path):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            head = ["x"]
            for j in range(self.psi.shape[0]):
                head += [f"re_psi{j + 1}", f"im_psi{j + 1}"]
            w.writerow(head)
            for i, xv in enumerate(self.x):
                row = [repr(float(xv))]
                for j in range(self.psi.shape[0]):
                    row += [repr(float(self.psi[j, i].real)), repr(float(self.psi[j, i].imag))]
                w.writerow(row)


def grid_x(x_min: float, x_max: float, n: int) -> np.ndarray:
    return x_min + (x_max - x_min) / n * np.arange(n)


def required_points(eps: float, length: float, p_max: float, safety: float = 4.0,
                    minimum: int = DEFAULT_N) -> int:
    """Smallest power of two with ``eps * k_max >= safety * p_max``."""
    need = safety * p_max * length / (np.pi * eps)
    n = max(minimum, 2)
    while n < need:
        n *= 2
    return n


def check_resolution(state: GridState, p_max: float | None, safety: float = 4.0):
    kmax = np.pi / state.dx
    if p_max is not None:
        if state.eps * kmax < safety * p_max * (1 - 1e-12):
            raise ResolutionError(
                f"grid too coarse: eps*k_max = {state.eps * kmax:.3g} < {safety}*p_max = "
                f"{safety * p_max:.3g}")
        return
    spec = np.sum(np.abs(np.fft.fft(state.psi, axis=-1)) ** 2, axis=0)
    top = np.abs(state.k) > 0.75 * kmax
    if spec[top].sum() > 1e-20 * spec.sum():
        raise ResolutionError("initial field has spectral content near the Nyquist frequency")


def boundary_mass(psi, x_min, x_max, x, frac: float = 0.05) -> float:
    """Mass within ``frac`` of the domain width from either end of the periodic box."""
    L = x_max - x_min
    u = (x - x_min) % L
    band = (u < frac * L) | (u > (1 - frac) * L)
    dx = L / x.size
    return float(dx * np.sum(np.abs(psi[:, band]) ** 2))


def hermitian_exp(V, tau: float):
    """``exp(-i tau V)`` pointwise for Hermitian V of shape ``(..., m, m)`` with m <= 2."""
    V = np.asarray(V)
    m = V.shape[-1]
    if m == 1:
        return np.exp(-1j * tau * V)
    a = 0.5 * (V[..., 0, 0] + V[..., 1, 1]).real
    bz = 0.5 * (V[..., 0, 0] - V[..., 1, 1]).real
    bx = V[..., 0, 1].real
    by = -V[..., 0, 1].imag
    nb = np.sqrt(bx * bx + by * by + bz * bz)
    c = np.cos(tau * nb)
    sinc = tau * np.sinc(tau * nb / np.pi)   # sin(tau nb)/nb without 0/0
    U = np.empty(V.shape, dtype=complex)
    U[..., 0, 0] = c - 1j * sinc * bz
    U[..., 1, 1] = c + 1j * sinc * bz
    U[..., 0, 1] = -1j * sinc * (bx - 1j * by)
    U[..., 1, 0] = -1j * sinc * (bx + 1j * by)
    return np.exp(-1j * tau * a)[..., None, None] * U


def _apply(U, psi):
    if U.shape[-1] == 1:
        return (U[:, 0, 0] * psi[0])[None]
    return np.stack([U[:, 0, 0] * psi[0] + U[:, 0, 1] * psi[1],
                     U[:, 1, 0] * psi[0] + U[:, 1, 1] * psi[1]])


def _transport_kicks_numpy(psi, y, k, th, eps, dt, n_steps, ja, jb):
    """Kicks ja..jb-1 of the co-moving splitting (kick j at shift j*dt, weight dt or dt/2)."""
    for j in range(ja, jb):
        h = dt / 2 if j in (0, n_steps) else dt
        a = k * (y + j * dt) * h / eps
        c, s = np.cos(a), np.sin(a)
        e = np.exp(1j * th * (y + j * dt))
        p0 = c * psi[0] - 1j * s * e * psi[1]
        p1 = c * psi[1] - 1j * s * np.conj(e) * psi[0]
        psi[0], psi[1] = p0, p1


try:
    import numba

    @numba.njit(cache=True)
    def _transport_kicks_jit(psi, y, k, th, eps, dt, n_steps, ja, jb):
        delta = k * dt * dt / eps
        cd, sd = math.cos(delta), math.sin(delta)
        w = complex(math.cos(th * dt), math.sin(th * dt))
        for i in range(y.size):
            p0 = psi[0, i]
            p1 = psi[1, i]
            # full-step angle and phase at kick ja, advanced by recurrence
            a = k * (y[i] + ja * dt) * dt / eps
            c, s = math.cos(a), math.sin(a)
            e = complex(math.cos(th * (y[i] + ja * dt)), math.sin(th * (y[i] + ja * dt)))
            for j in range(ja, jb):
                if j == 0 or j == n_steps:
                    ah = k * (y[i] + j * dt) * dt / (2 * eps)
                    cc, ss = math.cos(ah), math.sin(ah)
                else:
                    cc, ss = c, s
                q0 = cc * p0 - 1j * ss * e * p1
                q1 = cc * p1 - 1j * ss * e.conjugate() * p0
                p0, p1 = q0, q1
                c, s = c * cd - s * sd, s * cd + c * sd
                e = e * w
            psi[0, i] = p0
            psi[1, i] = p1

    _transport_kicks = _transport_kicks_jit
except ImportError:  # pragma: no cover
    _transport_kicks = _transport_kicks_numpy


def _evolve_transport(model: ShiftedPhaseCrossing, st: GridState, t_end: float, n_steps: int,
                      monitor: list):
    span = t_end - st.t
    dt = span / n_steps
    y = st.x
    psi = np.ascontiguousarray(st.psi.copy())
    L = st.x_max - st.x_min
    n_chunks = min(20, n_steps + 1)
    edges = np.linspace(0, n_steps + 1, n_chunks + 1).astype(int)
    u = (y - st.x_min) % L
    for ja, jb in zip(edges[:-1], edges[1:]):
        _transport_kicks(psi, y, model.k, model.theta, st.eps, dt, n_steps, int(ja), int(jb))
        if monitor is not None:
            # lab-frame box edge sits at y = x_min - shift (periodically)
            edge = (-(jb - 1) * dt) % L
            dist = np.abs(u - edge)
            dist = np.minimum(dist, L - dist)
            band = dist < 0.05 * L
            monitor.append(float(st.dx * np.sum(np.abs(psi[:, band]) ** 2)))
    # accumulated translation x -> x - span
    return np.fft.ifft(np.exp(-1j * st.k * span) * np.fft.fft(psi, axis=-1), axis=-1)


def _evolve_schrodinger(model: Model, st: GridState, t_end: float, n_steps: int, monitor: list):
    dt = (t_end - st.t) / n_steps
    eps = st.eps
    V = model.potential(st.x)
    U_half = hermitian_exp(V, dt / (2 * eps))
    U_full = hermitian_exp(V, dt / eps)
    kin = np.exp(-1j * dt * eps * st.k ** 2 / 2)
    psi = _apply(U_half, st.psi)
    check_every = max(1, n_steps // 20)
    for j in range(1, n_steps + 1):
        psi = np.fft.ifft(kin * np.fft.fft(psi, axis=-1), axis=-1)
        psi = _apply(U_full if j < n_steps else U_half, psi)
        if monitor is not None and (j % check_every == 0 or j == n_steps):
            monitor.append(boundary_mass(psi, st.x_min, st.x_max, st.x))
    return psi


def strang_evolve(model: Model, state: GridState, t_end: float, dt: float | None = None,
                  p_max: float | None = None, monitor: dict | None = None) -> GridState:
    """Evolve ``state`` to ``t_end`` with Strang splitting.

    ``dt`` defaults to ``eps/20`` and is shortened so that ``t_end`` is hit
    exactly.  ``p_max`` (largest expected momentum) enables the resolution
    assertion ``eps * k_max >= 4 p_max``.  Boundary-band masses and the mass
    drift are written to ``monitor`` when a dict is given.
    """
    if state.psi.shape[0] != model.m:
        raise InvalidInputError("field has the wrong number of components")
    dt = state.eps / 20 if dt is None else float(dt)
    if dt <= 0:
        raise InvalidInputError("dt must be positive")
    check_resolution(state, p_max)
    span = t_end - state.t
    if span == 0:
        return replace(state, psi=state.psi.copy())
    if span < 0:
        raise InvalidInputError("backward evolution is not supported")
    n_steps = max(1, int(math.ceil(span / dt - 1e-9)))
    bands: list = []
    mass0 = state.mass()
    if isinstance(model, ShiftedPhaseCrossing):
        psi = _evolve_transport(model, state, t_end, n_steps, bands)
    elif isinstance(model, (MatrixPotentialSchrodinger, ScalarHarmonic)) or hasattr(model, "potential"):
        psi = _evolve_schrodinger(model, state, t_end, n_steps, bands)
    else:
        raise InvalidInputError(f"no reference solver for model {model.name}")
    out = GridState(state.x_min, state.x_max, psi, state.eps, float(t_end))
    if monitor is not None:
        monitor["boundary_mass"] = max(bands + [monitor.get("boundary_mass", 0.0)])
        drift = abs(out.mass() - mass0) / mass0 if mass0 > 0 else 0.0
        monitor["mass_drift"] = max(drift, monitor.get("mass_drift", 0.0))
        monitor["steps"] = monitor.get("steps", 0) + n_steps
    return out


def mode_masses(model: Model, state: GridState) -> np.ndarray:
    """Mass carried by each adiabatic mode, via the pointwise projectors pi_l(x)."""
    z = np.stack([state.x, np.zeros(state.n)], axis=-1)
    pis = model.projectors(state.t, z)
    out = []
    for l in range(pis.shape[-3]):
        comp = np.einsum("nij,jn->in", pis[:, l], state.psi)
        out.append(state.dx * np.sum(np.abs(comp) ** 2))
    return np.array(out)


def project_mode(model: Model, state: GridState, mode: int) -> np.ndarray:
    z = np.stack([state.x, np.zeros(state.n)], axis=-1)
    pi = model.projector(state.t, z, mode)
    return np.einsum("nij,jn->in", pi, state.psi)


def error_norms(a: GridState, b: GridState, k: int = 1):
    """(L2, Sigma^k) norms of ``a - b``."""
    if not a.same_grid(b):
        raise InvalidInputError("grids differ")
    diff = a.psi - b.psi
    return l2_norm(diff, a.x), sigma_k_norm(diff, a.x, a.eps, k)
