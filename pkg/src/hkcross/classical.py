"""Classical trajectories, actions, stability matrices and parallel transport.

The state (z, S, F[, R]) is advanced by one coupled classical RK4 step:

    z' = J grad h,   S' = p . dq/dt - h,   F' = J Hess(h) F,   i R' = H_adia R.

Everything is vectorised over a leading batch axis so that all quadrature
nodes of an IVR can be pushed through the same loop.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .errors import DivergenceError, InvalidInputError
from .model import Model, symplectic_j

DEFAULT_STEP = 1e-3


@dataclass
class FlowState:
    """Batched classical state; arrays carry a leading batch axis of length N."""

    z: np.ndarray          # (N, 2d)
    S: np.ndarray          # (N,)
    F: np.ndarray          # (N, 2d, 2d)
    R: np.ndarray | None = None  # (N, m, m) complex

    def copy(self) -> "FlowState":
        return FlowState(self.z.copy(), self.S.copy(), self.F.copy(),
                         None if self.R is None else self.R.copy())

    def take(self, idx) -> "FlowState":
        return FlowState(self.z[idx], self.S[idx], self.F[idx],
                         None if self.R is None else self.R[idx])

    def put(self, idx, other: "FlowState"):
        self.z[idx] = other.z
        self.S[idx] = other.S
        self.F[idx] = other.F
        if self.R is not None:
            self.R[idx] = other.R

    def finite(self) -> np.ndarray:
        ok = np.isfinite(self.z).all(-1) & np.isfinite(self.S) & np.isfinite(self.F).all((-1, -2))
        if self.R is not None:
            ok &= np.isfinite(self.R).all((-1, -2))
        return ok


def initial_state(model: Model, z0, transport: bool = True) -> FlowState:
    z0 = np.atleast_2d(np.asarray(z0, dtype=float))
    n, dd = z0.shape
    F = np.broadcast_to(np.eye(dd), (n, dd, dd)).copy()
    R = np.broadcast_to(np.eye(model.m, dtype=complex), (n, model.m, model.m)).copy() \
        if transport else None
    return FlowState(z0.copy(), np.zeros(n), F, R)


def vector_field(model: Model, mode: int, t, st: FlowState):
    d = model.d
    g = model.grad_h(t, st.z, mode)
    H = model.hess_h(t, st.z, mode)
    J = symplectic_j(d)
    zdot = g @ J.T
    Sdot = np.sum(st.z[:, d:] * g[:, d:], axis=-1) - model.h(t, st.z, mode)
    Fdot = (J @ H) @ st.F
    Rdot = None
    if st.R is not None:
        Rdot = -1j * model.adiabatic_generator(t, st.z, mode) @ st.R
    return zdot, Sdot, Fdot, Rdot


def _axpy(st: FlowState, h, k) -> FlowState:
    h = np.asarray(h, dtype=float)
    hz = h[..., None] if h.ndim else h
    hm = h[..., None, None] if h.ndim else h
    return FlowState(st.z + hz * k[0], st.S + h * k[1], st.F + hm * k[2],
                     None if st.R is None else st.R + hm * k[3])


def rk4_step(model: Model, mode: int, t, st: FlowState, h) -> FlowState:
    """One classical RK4 step of size ``h`` (scalar or per-node array)."""
    h = np.asarray(h, dtype=float)
    k1 = vector_field(model, mode, t, st)
    k2 = vector_field(model, mode, t + h / 2, _axpy(st, h / 2, k1))
    k3 = vector_field(model, mode, t + h / 2, _axpy(st, h / 2, k2))
    k4 = vector_field(model, mode, t + h, _axpy(st, h, k3))
    comb = [None if a is None else (a + 2 * b + 2 * c + e) / 6
            for a, b, c, e in zip(k1, k2, k3, k4)]
    return _axpy(st, h, comb)


def step_schedule(t0, t_end, step: float):
    """Number of steps and per-node step sizes for a batch with possibly per-node start times.

    Scalar ``t0`` gives full steps of size ``step`` and a shortened last step;
    array ``t0`` gives equal per-node steps no longer than ``step``.
    """
    if step <= 0:
        raise InvalidInputError("step must be positive")
    t0 = np.asarray(t0, dtype=float)
    span = np.asarray(t_end, dtype=float) - t0
    if t0.ndim == 0 and np.ndim(t_end) == 0:
        span = float(span)
        n_full = int(math.floor(abs(span) / step + 1e-12))
        sizes = [math.copysign(step, span)] * n_full
        rest = span - sum(sizes)
        if abs(rest) > 1e-14:
            sizes.append(rest)
        return sizes
    n = max(1, int(math.ceil(np.max(np.abs(span)) / step - 1e-12)))
    return [span / n] * n


def integrate_batch(model: Model, mode: int, t0, st: FlowState, t_end, step: float = DEFAULT_STEP,
                    callbacks: Sequence[Callable] = (), record: bool = False):
    """Advance ``st`` from ``t0`` (scalar or per-node) to ``t_end``.

    Each callback is called as ``cb(t_old, st_old, t_new, st_new)`` after every
    step.  Returns the final state, or ``(state, times, states)`` with
    ``record=True``.
    """
    t = np.asarray(t0, dtype=float).copy()
    times, states = [t.copy()], [st.copy()]
    for h in step_schedule(t0, t_end, step):
        new = rk4_step(model, mode, t, st, h)
        t_new = t + h
        if not new.finite().all():
            bad = int(np.flatnonzero(~new.finite())[0])
            raise DivergenceError("non-finite classical state",
                                  last_time=float(np.ravel(t)[bad if t.ndim else 0]), node=bad)
        for cb in callbacks:
            cb(t, st, t_new, new)
        t, st = t_new, new
        if record:
            times.append(t.copy())
            states.append(st.copy())
    if record:
        return st, times, states
    return st


# ----------------------------------------------------------------------------
# single-trajectory records
# ----------------------------------------------------------------------------

@dataclass
class TrajectoryRecord:
    mode: int
    t0: float
    step: float
    t: np.ndarray        # (n,)
    z: np.ndarray        # (n, 2d)
    S: np.ndarray        # (n,)
    F: np.ndarray        # (n, 2d, 2d)
    R: np.ndarray | None = field(default=None, repr=False)

    @property
    def samples(self):
        return list(zip(self.t, self.z, self.S, self.F))

    def state(self, i: int = -1, transport: bool = False) -> FlowState:
        R = self.R[i:i + 1 or None] if (transport and self.R is not None) else None
        sl = slice(i, i + 1 or None)
        return FlowState(self.z[sl].copy(), self.S[sl].copy(), self.F[sl].copy(),
                         None if R is None else R.copy())

    def symplectic_defect(self) -> np.ndarray:
        d2 = self.z.shape[1]
        J = symplectic_j(d2 // 2)
        defect = np.einsum("nji,jk,nkl->nil", self.F, J, self.F) - J
        return np.max(np.abs(defect), axis=(1, 2))

    def to_csv(self, path):
        d = self.z.shape[1] // 2
        head = ["t"] + [f"q{j}" for j in range(d)] + [f"p{j}" for j in range(d)] + ["S"] + \
               [f"F{i}{j}" for i in range(2 * d) for j in range(2 * d)]
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(head)
            for t, z, S, F in self.samples:
                w.writerow([repr(float(t))] + [repr(float(v)) for v in z] + [repr(float(S))]
                           + [repr(float(v)) for v in F.ravel()])


@dataclass
class TransportRecord:
    t: np.ndarray
    R: np.ndarray   # (n, m, m)

    @property
    def samples(self):
        return list(zip(self.t, self.R))

    def unitarity_defect(self) -> np.ndarray:
        m = self.R.shape[-1]
        RR = np.conj(np.swapaxes(self.R, -1, -2)) @ self.R
        return np.max(np.abs(RR - np.eye(m)), axis=(1, 2))


def integrate_trajectory(model: Model, mode: int, t0: float, z0, t_end: float,
                         step: float = DEFAULT_STEP, transport: bool = False) -> TrajectoryRecord:
    """Integrate one trajectory of mode ``mode`` and keep every step."""
    z0 = model.check_z(z0)
    if mode not in range(1, model.n_modes + 1):
        raise InvalidInputError(f"mode {mode} not available")
    st = initial_state(model, z0.reshape(1, -1), transport=transport)
    _, times, states = integrate_batch(model, mode, float(t0), st, float(t_end), step, record=True)
    return TrajectoryRecord(
        mode=mode, t0=float(t0), step=float(step),
        t=np.array([float(t) for t in times]),
        z=np.array([s.z[0] for s in states]),
        S=np.array([s.S[0] for s in states]),
        F=np.array([s.F[0] for s in states]),
        R=np.array([s.R[0] for s in states]) if transport else None,
    )


def parallel_transport(model: Model, mode: int, traj: TrajectoryRecord) -> TransportRecord:
    """Transport matrix R along a recorded trajectory, on the same time grid."""
    if traj.mode != mode:
        raise InvalidInputError("trajectory was integrated for another mode")
    if traj.R is not None:
        return TransportRecord(traj.t.copy(), traj.R.copy())
    Rs = [np.eye(model.m, dtype=complex)]
    for i in range(len(traj.t) - 1):
        st = FlowState(traj.z[i:i + 1].copy(), traj.S[i:i + 1].copy(), traj.F[i:i + 1].copy(),
                       Rs[-1][None].copy())
        new = rk4_step(model, mode, traj.t[i], st, traj.t[i + 1] - traj.t[i])
        if not new.finite().all():
            raise DivergenceError("non-finite transport matrix", last_time=float(traj.t[i]))
        Rs.append(new.R[0])
    return TransportRecord(traj.t.copy(), np.array(Rs))
