"""Crossing detection and the transfer of a wave packet between the two modes.

Hop data at a crossing point (t_b, zeta_b) on the incoming trajectory:

* ``mu = (d_t f + {v, f}) / 2`` (``f = (h1 - h2)/2``, ``v = (h1 + h2)/2``),
* ``(alpha, beta) = J grad f``,
* ``tau = sqrt(2 i pi / mu)`` (principal root), kept as the nominal
  transition coefficient,
* ``W1`` the polarisation-change matrix.

The transferred packet is built from the scalar transfer operator

    T phi(y) = int exp(i (c - alpha.beta/2) s^2) exp(i s beta.y) phi(y - s alpha) ds

evaluated with ``c = -mu/2`` (the coefficient obtained from first-order
time-dependent perturbation theory through a transversal crossing), together
with the prefactor ``-i/2`` and the polarisation ``W1^* V`` (1 -> 2).  On
Gaussians this gives the width ``G[Gamma]`` with the hop Jacobian
``G = I - (J grad f)(grad f)^T / mu``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .classical import (DEFAULT_STEP, FlowState, TrajectoryRecord, integrate_trajectory,
                        rk4_step)
from .errors import (DegenerateCrossingError, DegenerateWidthError, InvalidInputError,
                     TangencyError, TruncationError, WellPreparedViolation)
from .model import Model, symplectic_j
from .wavepacket import GaussianTerm, is_siegel, poly_eval

F_TOL = 1e-9
T_TOL = 1e-10
MU_TOL = 1e-10


@dataclass
class CrossingEvent:
    t_flat: float
    zeta_flat: np.ndarray
    mu_flat: float
    alpha_flat: np.ndarray
    beta_flat: np.ndarray
    tau: complex
    w_transfer: np.ndarray
    incoming_mode: int = 1
    gamma_flat: np.ndarray | None = None
    extra: dict = field(default_factory=dict)

    @property
    def outgoing_mode(self) -> int:
        return 2 if self.incoming_mode == 1 else 1

    def signed(self):
        """(mu, alpha, beta) of the gap 'incoming minus outgoing'."""
        s = 1.0 if self.incoming_mode == 1 else -1.0
        return s * self.mu_flat, s * self.alpha_flat, s * self.beta_flat

    @property
    def kernel_mu(self) -> float:
        """Quadratic coefficient used in the transfer kernel."""
        return -0.5 * self.signed()[0]

    def to_json(self) -> dict:
        def cx(a):
            a = np.asarray(a)
            if np.iscomplexobj(a):
                return np.stack([a.real, a.imag], -1).tolist()
            return a.tolist()
        out = {
            "t_flat": float(self.t_flat),
            "zeta_flat": cx(self.zeta_flat),
            "mu_flat": float(self.mu_flat),
            "alpha_flat": cx(self.alpha_flat),
            "beta_flat": cx(self.beta_flat),
            "tau": [float(np.real(self.tau)), float(np.imag(self.tau))],
            "w_transfer": cx(np.asarray(self.w_transfer, dtype=complex)),
            "incoming_mode": int(self.incoming_mode),
        }
        if self.gamma_flat is not None:
            out["gamma_flat"] = cx(np.asarray(self.gamma_flat, dtype=complex))
        return out


# ----------------------------------------------------------------------------
# detection
# ----------------------------------------------------------------------------

def _gap(model: Model, t, z):
    return model.gap(t, z)


def bisect_crossing(model: Model, mode: int, t_start, st: FlowState, h,
                    f_tol: float = F_TOL, t_tol: float = T_TOL, max_iter: int = 80):
    """Locate the zero of f inside ``[t_start, t_start + h]`` for a batch of brackets.

    Every trial point is reached by one RK4 step of the trial length from the
    bracket start, so no interpolation is involved.  Returns ``(t_flat, state)``.
    """
    t_start = np.asarray(t_start, dtype=float)
    h = np.broadcast_to(np.asarray(h, dtype=float), t_start.shape).copy()
    f0 = _gap(model, t_start, st.z)
    lo = np.zeros_like(h)
    hi = h.copy()
    mid_state = st
    mid = hi.copy()
    for _ in range(max_iter):
        mid = 0.5 * (lo + hi)
        mid_state = rk4_step(model, mode, t_start, st, mid)
        fm = _gap(model, t_start + mid, mid_state.z)
        same = np.sign(fm) == np.sign(f0)
        lo = np.where(same, mid, lo)
        hi = np.where(same, hi, mid)
        if np.all((np.abs(fm) <= f_tol) & (np.abs(hi - lo) <= t_tol)):
            break
    # a bracket that starts on the crossing set (f0 within tolerance) has its zero there
    at_start = np.abs(f0) <= f_tol
    if np.any(at_start):
        out = mid_state.copy()
        idx = np.flatnonzero(at_start)
        out.put(idx, st.take(idx))
        return np.where(at_start, t_start, t_start + mid), out
    return t_start + mid, mid_state


class CrossingScanner:
    """Step callback that records, per node, the first sign change of f.

    After integration ``found`` flags nodes with a crossing, ``bracket_t``,
    ``bracket_h`` and ``bracket_state`` hold the bracketing step and
    ``n_crossings`` counts every sign change seen.  ``tangency=False`` turns
    off the two-small-samples check, for batches that start on the crossing
    set and may take very short steps.
    """

    def __init__(self, model: Model, n: int, transport: bool = True, tangency: bool = True):
        self.model = model
        self.tangency = tangency
        self.found = np.zeros(n, dtype=bool)
        self.n_crossings = np.zeros(n, dtype=int)
        self.bracket_t = np.zeros(n)
        self.bracket_h = np.zeros(n)
        self.bracket_state = None
        self.zero_run = np.zeros(n, dtype=int)
        self.last_nonzero_sign = None
        self.transport = transport

    def __call__(self, t_old, st_old, t_new, st_new):
        f_old = _gap(self.model, t_old, st_old.z)
        f_new = _gap(self.model, t_new, st_new.z)
        if self.last_nonzero_sign is None:
            # a start on the crossing set (hopped trajectories) has no sign yet
            self.last_nonzero_sign = np.where(np.abs(f_old) > F_TOL, np.sign(f_old), 0.0)
        zero = np.abs(f_new) <= F_TOL
        self.zero_run = np.where(zero, self.zero_run + 1, 0)
        if self.tangency and np.any(self.zero_run >= 2):
            raise TangencyError("gap vanishes at consecutive samples without changing sign",
                                node=int(np.flatnonzero(self.zero_run >= 2)[0]))
        sgn = np.where(zero, 0.0, np.sign(f_new))
        changed = (sgn != 0) & (self.last_nonzero_sign != 0) & (sgn != self.last_nonzero_sign)
        self.last_nonzero_sign = np.where(sgn != 0, sgn, self.last_nonzero_sign)
        new = changed & ~self.found
        self.n_crossings += changed
        if np.any(new):
            if self.bracket_state is None:
                n = self.found.size
                m = st_old.R.shape[-1] if st_old.R is not None else 1
                dd = st_old.z.shape[-1]
                self.bracket_state = FlowState(np.zeros((n, dd)), np.zeros(n),
                                               np.zeros((n, dd, dd)),
                                               np.zeros((n, m, m), dtype=complex)
                                               if st_old.R is not None else None)
            idx = np.flatnonzero(new)
            self.bracket_state.put(idx, st_old.take(idx))
            to = np.broadcast_to(t_old, self.found.shape)
            tn = np.broadcast_to(t_new, self.found.shape)
            self.bracket_t[idx] = to[idx]
            self.bracket_h[idx] = (tn - to)[idx]
            self.found |= new

    def refine(self, mode: int):
        """Bisection for every found node; returns ``(idx, t_flat, state_at_t_flat)``."""
        idx = np.flatnonzero(self.found)
        if idx.size == 0:
            return idx, np.zeros(0), None
        tb, st = bisect_crossing(self.model, mode, self.bracket_t[idx],
                                 self.bracket_state.take(idx), self.bracket_h[idx])
        return idx, tb, st


def detect_first_crossing(model: Model, mode: int, traj: TrajectoryRecord):
    """First sign change of f along a recorded trajectory, refined by bisection.

    Returns ``None`` when f keeps its sign, otherwise ``(t_flat, zeta_flat)``.
    """
    if model.n_modes == 1:
        return None
    f = _gap(model, traj.t, traj.z)
    zero = np.abs(f) <= F_TOL
    if np.any(zero[1:] & zero[:-1]):
        raise TangencyError("gap vanishes at consecutive samples")
    s = np.sign(f)
    for i in range(len(f) - 1):
        if s[i] != 0 and s[i + 1] != 0 and s[i] != s[i + 1]:
            st = traj.state(i)
            tb, stb = bisect_crossing(model, mode, np.array([traj.t[i]]), st,
                                      np.array([traj.t[i + 1] - traj.t[i]]))
            return float(tb[0]), stb.z[0].copy()
        if s[i + 1] == 0 and i + 2 < len(f) and s[i] != 0 and s[i + 2] != 0 and s[i] != s[i + 2]:
            return float(traj.t[i + 1]), traj.z[i + 1].copy()
    return None


# ----------------------------------------------------------------------------
# hop parameters
# ----------------------------------------------------------------------------

def nominal_tau(mu):
    return np.sqrt(2j * np.pi / np.asarray(mu, dtype=complex))


def crossing_params(model: Model, t_flat: float, zeta_flat, incoming_mode: int = 1) -> CrossingEvent:
    z = model.check_z(zeta_flat)
    mu = float(model.mu_flat(t_flat, z))
    if abs(mu) <= MU_TOL:
        raise DegenerateCrossingError("d_t f + {v, f} vanishes at the crossing", t=t_flat)
    nJ = symplectic_j(model.d) @ model.grad_gap(t_flat, z)
    d = model.d
    return CrossingEvent(
        t_flat=float(t_flat), zeta_flat=np.array(z, dtype=float), mu_flat=mu,
        alpha_flat=nJ[:d].copy(), beta_flat=nJ[d:].copy(), tau=complex(nominal_tau(mu)),
        w_transfer=np.asarray(model.coupling_w1(t_flat, z), dtype=complex),
        incoming_mode=incoming_mode)


def gamma_flat(gamma_in, mu: float, alpha, beta):
    """Rank-one width update ``G - (b - G a)(b - G a)^T / (2 mu - a.b + a.G a)``."""
    g = np.atleast_2d(np.asarray(gamma_in, dtype=complex))
    a = np.atleast_1d(np.asarray(alpha, dtype=float))
    b = np.atleast_1d(np.asarray(beta, dtype=float))
    u = b - g @ a
    den = 2 * mu - a @ b + a @ g @ a
    if abs(den) < 1e-14:
        raise DegenerateWidthError("vanishing denominator in the width update")
    return g - np.outer(u, u) / den


def hopped_width(gamma_in, event: CrossingEvent):
    """Width of the transferred packet at the hop time (= G[Gamma_in])."""
    mu, a, b = event.signed()
    return gamma_flat(gamma_in, -0.5 * mu, a, b)


def hop_jacobian(event: CrossingEvent) -> np.ndarray:
    """``G = I - (J grad f)(grad f)^T / mu`` for the incoming-minus-outgoing gap."""
    mu, a, b = event.signed()
    n = np.concatenate([a, b])
    grad = np.concatenate([-b, a])
    return np.eye(n.size) - np.outer(n, grad) / mu


def _kernel_a(gamma, mu, alpha, beta):
    g = np.atleast_2d(np.asarray(gamma, dtype=complex))
    a = np.atleast_1d(alpha)
    return mu - a @ np.atleast_1d(beta) / 2 + a @ g @ a / 2


def gaussian_transfer_factor(gamma_in, mu: float, alpha, beta) -> complex:
    """``int exp(i A s^2) ds = sqrt(pi / (-i A))`` for the Gaussian profile (principal root)."""
    A = _kernel_a(gamma_in, mu, alpha, beta)
    if abs(A) < 1e-14:
        raise DegenerateWidthError("vanishing quadratic coefficient in the transfer integral")
    return complex(np.sqrt(np.pi / (-1j * A)))


def transfer_amplitude(gamma_in, event: CrossingEvent) -> complex:
    """Scalar factor multiplying the incoming amplitude (without sqrt(eps))."""
    mu, a, b = event.signed()
    return -0.5j * gaussian_transfer_factor(gamma_in, -0.5 * mu, a, b)


def transfer_polarization(event: CrossingEvent, pol, model: Model | None = None):
    W = np.asarray(event.w_transfer, dtype=complex)
    M = np.conj(W.T) if event.incoming_mode == 1 else W
    out = M @ np.asarray(pol, dtype=complex)
    if model is not None:
        out = model.projector(event.t_flat, event.zeta_flat, event.outgoing_mode) @ out
    return out


def transfer_gaussian_closed_form(incoming: GaussianTerm, event: CrossingEvent,
                                  model: Model | None = None) -> GaussianTerm:
    """Transferred Gaussian at the hop time (the sqrt(eps) factor is left to the caller)."""
    if incoming.poly is not None:
        raise InvalidInputError("closed-form transfer needs a pure Gaussian")
    g_out = hopped_width(incoming.width, event)
    if not is_siegel(g_out, tol=1e-10):
        raise DegenerateWidthError("transferred width left the Siegel half-space")
    amp = incoming.scalar_amp * transfer_amplitude(incoming.width, event)
    return GaussianTerm(event.zeta_flat, g_out, amp, incoming.action_phase,
                        transfer_polarization(event, incoming.polarization, model))


def transfer_quadrature(profile, y, mu: float, alpha, beta, n_nodes: int = 4001,
                        tail: float = 1e-12) -> np.ndarray:
    """Scalar transfer operator applied to a Gaussian-type profile, by quadrature (d = 1).

    ``profile`` is a :class:`GaussianTerm` (only its width and polynomial are
    used, as the unit-scale profile ``poly(y) e^{i Gamma y^2/2}``).  The
    integration contour is rotated onto the steepest-descent ray of the
    quadratic phase, which is legitimate because the integrand is entire, and
    is truncated where the Gaussian envelope drops below ``tail``.
    """
    y = np.asarray(y, dtype=float)
    g = complex(np.atleast_2d(profile.width)[0, 0])
    a = float(np.atleast_1d(alpha)[0])
    b = float(np.atleast_1d(beta)[0])
    A = mu - a * b / 2 + a * a * g / 2
    if abs(A) < 1e-12:
        raise TruncationError("quadratic phase vanishes; the transfer integral does not converge")
    phi = 0.5 * (np.pi / 2 - np.angle(A))
    rot = np.exp(1j * phi)
    lin = np.max(np.abs(b - g * a) * np.abs(y)) if y.size else 0.0
    L = -math.log(tail)
    R = (lin + math.sqrt(lin * lin + 4 * abs(A) * L)) / (2 * abs(A)) + 1.0
    r = np.linspace(-R, R, n_nodes)
    s = rot * r
    w = np.full(n_nodes, r[1] - r[0])
    w[0] *= 0.5
    w[-1] *= 0.5
    arg = y[None, :] - s[:, None] * a
    vals = np.exp(1j * (mu - a * b / 2) * s[:, None] ** 2 + 1j * s[:, None] * b * y[None, :]
                  + 0.5j * g * arg ** 2)
    if profile.poly is not None:
        vals = vals * poly_eval(profile.poly, arg[None])
    edge = np.max(np.abs(vals[[0, -1]])) if y.size else 0.0
    peak = np.max(np.abs(vals)) if y.size else 1.0
    if edge > 1e3 * tail * max(peak, 1.0):
        raise TruncationError("transfer integrand not negligible at the truncation radius")
    return rot * (w @ vals)


# ----------------------------------------------------------------------------
# continuation on the outgoing mode
# ----------------------------------------------------------------------------

def hop_continue(model: Model, event: CrossingEvent, t_end: float, step: float = DEFAULT_STEP,
                 incoming_action: float = 0.0, transport: bool = True):
    """Trajectory on the outgoing mode from (t_flat, zeta_flat) and the chained action offset.

    The total action at time t is ``S_offset + traj.S`` where ``S_offset`` is
    the incoming action at the hop time.  A further crossing on the outgoing
    trajectory raises :class:`WellPreparedViolation`.
    """
    traj = integrate_trajectory(model, event.outgoing_mode, event.t_flat, event.zeta_flat,
                                t_end, step, transport=transport)
    if len(traj.t) > 1:
        f = model.gap(traj.t[1:], traj.z[1:])
        s = np.sign(f[np.abs(f) > F_TOL])
        if s.size and np.any(s != s[0]):
            raise WellPreparedViolation("outgoing trajectory crosses again", t_flat=event.t_flat)
    return traj, float(incoming_action)
