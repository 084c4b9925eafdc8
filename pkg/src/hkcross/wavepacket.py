"""Gaussian wave packets.

Conventions
-----------
``WP_z(u)(x) = eps^{-d/4} exp(i p.(x-q)/eps) u((x-q)/sqrt(eps))`` and
``g^Gamma(y) = c_Gamma exp(i Gamma y.y / 2)`` with ``c_Gamma`` normalising in
L^2.  The coherent state ``g^eps_z`` is ``WP_z(g^{iI})``.

Widths follow the metaplectic rule ``Gamma = (C + D Gamma0)(A + B Gamma0)^{-1}``
and amplitudes pick up ``det^{-1/2}(A + B Gamma0)``; square roots are followed
by continuity with :class:`BranchTracker`.
"""
from __future__ import annotations

import itertools
import math
import warnings
from dataclasses import dataclass, field, replace

import numpy as np

from .errors import BranchError, CausticError, InvalidInputError, UnsupportedDegreeError

MAX_POLY_DEGREE = 6
SINGULAR_TOL = 1e-12


class ResolutionWarning(UserWarning):
    pass


# ----------------------------------------------------------------------------
# width matrices and square-root branches
# ----------------------------------------------------------------------------

def is_siegel(gamma, tol: float = 1e-12) -> bool:
    g = np.atleast_2d(np.asarray(gamma, dtype=complex))
    if np.max(np.abs(g - g.T)) > tol * max(1.0, np.max(np.abs(g))):
        return False
    return bool(np.linalg.eigvalsh(0.5 * (g.imag + g.imag.T)).min() > 0)


def blocks(F):
    """Split ``(..., 2d, 2d)`` into the d x d blocks A, B, C, D."""
    F = np.asarray(F)
    d = F.shape[-1] // 2
    return F[..., :d, :d], F[..., :d, d:], F[..., d:, :d], F[..., d:, d:]


def coherent_norm(gamma) -> complex:
    """Positive normalisation ``pi^{-d/4} det^{1/4}(Im Gamma)``."""
    g = np.atleast_2d(np.asarray(gamma, dtype=complex))
    d = g.shape[0]
    return np.pi ** (-d / 4) * np.linalg.det(g.imag) ** 0.25


class BranchTracker:
    """Follows a square root continuously along a sequence of radicands.

    Works elementwise on arrays.  The first call (with no seed) takes the
    principal root.
    """

    def __init__(self, seed=None, max_jump: float = np.pi / 2):
        self.prev = None if seed is None else np.asarray(seed, dtype=complex)
        self.max_jump = max_jump

    def root(self, radicand):
        r = np.sqrt(np.asarray(radicand, dtype=complex))
        if self.prev is None:
            self.prev = r
            return r
        flip = np.abs(r - self.prev) > np.abs(-r - self.prev)
        r = np.where(flip, -r, r)
        jump = np.abs(np.angle(r / np.where(self.prev == 0, 1, self.prev)))
        if np.any(jump >= self.max_jump):
            raise BranchError("square-root argument jumped by more than pi/2 in one step",
                              jump=float(np.max(jump)))
        self.prev = r
        return r

    def copy(self) -> "BranchTracker":
        out = BranchTracker(max_jump=self.max_jump)
        out.prev = None if self.prev is None else np.array(self.prev)
        return out


def _det(M):
    M = np.asarray(M)
    if M.shape[-1] == 1:
        return M[..., 0, 0]
    return np.linalg.det(M)


def width_denominator(gamma0, F):
    """``A + B Gamma0`` for a batch of stability matrices."""
    A, B, _, _ = blocks(F)
    return A + B @ np.asarray(gamma0, dtype=complex)


def propagate_width_batch(gamma0, F):
    """Widths ``(C + D Gamma0)(A + B Gamma0)^{-1}`` and radicands ``det(A + B Gamma0)``."""
    g0 = np.asarray(gamma0, dtype=complex)
    A, B, C, D = blocks(F)
    den = A + B @ g0
    num = C + D @ g0
    det = _det(den)
    if np.any(np.abs(det) < SINGULAR_TOL):
        raise CausticError("A + B Gamma0 is singular")
    if den.shape[-1] == 1:
        gam = num / den
    else:
        gam = np.swapaxes(np.linalg.solve(np.swapaxes(den, -1, -2), np.swapaxes(num, -1, -2)),
                          -1, -2)
        gam = 0.5 * (gam + np.swapaxes(gam, -1, -2))
    return gam, det


def propagate_width(gamma0, F, branch: BranchTracker | None = None):
    """Propagate a width by the stability matrix ``F``.

    Returns ``(Gamma, det_root)`` with ``det_root = det^{-1/2}(A + B Gamma0)``,
    its branch chosen nearest to the tracker's previous value.
    """
    gamma0 = np.atleast_2d(np.asarray(gamma0, dtype=complex))
    gam, det = propagate_width_batch(gamma0, np.asarray(F, dtype=float))
    branch = branch if branch is not None else BranchTracker(seed=1.0)
    root = branch.root(det)
    return gam, 1.0 / root


def hk_radicand(F):
    A, B, C, D = blocks(F)
    d = A.shape[-1]
    return _det(A + D + 1j * (C - B)) / 2.0 ** d


def hk_prefactor(F, branch: BranchTracker | None = None):
    """Herman-Kluk prefactor ``2^{-d/2} det^{1/2}(A + D + i(C - B))``."""
    rad = hk_radicand(np.asarray(F, dtype=float))
    if np.any(np.abs(rad) < SINGULAR_TOL):
        raise CausticError("A + D + i(C - B) is singular")
    branch = branch if branch is not None else BranchTracker(seed=1.0)
    return branch.root(rad)


# ----------------------------------------------------------------------------
# polynomials in d variables, stored as {multi-index: coefficient}
# ----------------------------------------------------------------------------

def poly_degree(P) -> int:
    return max((sum(k) for k, c in P.items() if c != 0), default=0)


def poly_add(P, Q, b=1.0):
    out = dict(P)
    for k, c in Q.items():
        out[k] = out.get(k, 0) + b * c
    return out


def poly_scale(P, a):
    return {k: a * c for k, c in P.items()}


def poly_mul(P, Q):
    out = {}
    for k1, c1 in P.items():
        for k2, c2 in Q.items():
            k = tuple(a + b for a, b in zip(k1, k2))
            out[k] = out.get(k, 0) + c1 * c2
    return out


def poly_deriv(P, j: int):
    out = {}
    for k, c in P.items():
        if k[j] > 0:
            kk = list(k)
            kk[j] -= 1
            kk = tuple(kk)
            out[kk] = out.get(kk, 0) + k[j] * c
    return out


def poly_eval(P, y):
    """Evaluate on points ``y`` of shape ``(d, ...)``."""
    y = np.asarray(y)
    out = np.zeros(y.shape[1:], dtype=complex)
    for k, c in P.items():
        term = c
        for j, e in enumerate(k):
            if e:
                term = term * y[j] ** e
        out = out + term
    return out


def poly_one(d: int):
    return {(0,) * d: 1.0 + 0j}


def _unit(d, j):
    k = [0] * d
    k[j] = 1
    return tuple(k)


def _apply_letter(P, letter: int, gamma, d: int):
    """Apply y_j (letter j < d) or D_j = -i d/dy_j (letter d + j) to P g^Gamma; returns new P."""
    if letter < d:
        return poly_mul(P, {_unit(d, letter): 1.0})
    j = letter - d
    out = poly_scale(poly_deriv(P, j), -1j)
    for k in range(d):
        if gamma[j, k] != 0:
            out = poly_add(out, poly_mul(P, {_unit(d, k): gamma[j, k]}))
    return out


def weyl_monomial_apply(alpha, P, gamma):
    """Weyl quantisation (eps = 1) of the phase-space monomial z^alpha applied to P g^Gamma."""
    d = len(alpha) // 2
    letters = [i for i, e in enumerate(alpha) for _ in range(e)]
    if not letters:
        return dict(P)
    perms = list(itertools.permutations(letters))
    out = {}
    for perm in perms:
        Q = dict(P)
        for letter in reversed(perm):
            Q = _apply_letter(Q, letter, gamma, d)
        out = poly_add(out, Q)
    return {k: c / len(perms) for k, c in out.items() if c != 0}


# ----------------------------------------------------------------------------
# Gaussian terms
# ----------------------------------------------------------------------------

@dataclass(frozen=True)
class GaussianTerm:
    """``e^{iS/eps} * scalar_amp * WP_z(poly * e^{i Gamma y.y/2}) * polarization``.

    ``scalar_amp`` already contains the normalisation constant of the profile.
    """

    center: np.ndarray
    width: np.ndarray
    scalar_amp: complex = 1.0
    action_phase: float = 0.0
    polarization: np.ndarray = field(default_factory=lambda: np.ones(1, dtype=complex))
    poly: dict | None = None

    def __post_init__(self):
        c = np.asarray(self.center, dtype=float).ravel()
        w = np.atleast_2d(np.asarray(self.width, dtype=complex))
        if w.shape != (c.size // 2, c.size // 2):
            raise InvalidInputError("width does not match the phase-space dimension")
        if not np.isfinite(self.action_phase):
            raise InvalidInputError("non-finite action")
        object.__setattr__(self, "center", c)
        object.__setattr__(self, "width", w)
        object.__setattr__(self, "polarization",
                           np.atleast_1d(np.asarray(self.polarization, dtype=complex)))

    @property
    def d(self) -> int:
        return self.center.size // 2

    @property
    def q(self):
        return self.center[: self.d]

    @property
    def p(self):
        return self.center[self.d:]

    def with_(self, **kw) -> "GaussianTerm":
        return replace(self, **kw)


def coherent_state(z, d: int = 1, polarization=None) -> GaussianTerm:
    """Normalised coherent state ``g^eps_z`` (width iI)."""
    gam = 1j * np.eye(d)
    pol = np.ones(1) if polarization is None else polarization
    return GaussianTerm(np.asarray(z, dtype=float), gam, coherent_norm(gam), 0.0, pol)


def weyl_poly_apply(P: dict, term: GaussianTerm) -> GaussianTerm:
    """Apply the eps = 1 Weyl quantisation of the phase-space polynomial ``P``.

    ``P`` maps multi-indices of length 2d (powers of y_1..y_d, eta_1..eta_d)
    to coefficients; the result is exact.
    """
    d = term.d
    base = term.poly if term.poly is not None else poly_one(d)
    degP = poly_degree(P)
    if degP > 3 or degP + poly_degree(base) > MAX_POLY_DEGREE:
        raise UnsupportedDegreeError("polynomial degree above the supported order")
    out = {}
    for alpha, c in P.items():
        if len(alpha) != 2 * d:
            raise InvalidInputError("phase-space multi-index has the wrong length")
        if c == 0:
            continue
        out = poly_add(out, weyl_monomial_apply(alpha, base, term.width), c)
    return term.with_(poly={k: v for k, v in out.items()})


def linear_forms_power(F, alpha):
    """Phase-space polynomial ``(F z)^alpha`` as a dict."""
    F = np.asarray(F)
    n = F.shape[0]
    out = {(0,) * n: 1.0}
    for i, e in enumerate(alpha):
        lin = {_unit(n, j): F[i, j] for j in range(n) if F[i, j] != 0}
        for _ in range(e):
            out = poly_mul(out, lin)
    return out


# ----------------------------------------------------------------------------
# grids and evaluation
# ----------------------------------------------------------------------------

def _as_axes(grid, d):
    if d == 1:
        x = np.asarray(grid[0] if isinstance(grid, (tuple, list)) else grid, dtype=float)
        return [x]
    if not isinstance(grid, (tuple, list)) or len(grid) != d:
        raise InvalidInputError("need one axis per dimension")
    return [np.asarray(a, dtype=float) for a in grid]


def check_resolution(axes, eps: float, center=None, meta: dict | None = None) -> bool:
    ok = True
    for j, x in enumerate(axes):
        dx = float(x[1] - x[0]) if x.size > 1 else np.inf
        if dx > np.sqrt(eps) / 4:
            ok = False
        if center is not None:
            reach = 8 * np.sqrt(eps)
            if x[0] > center[j] - reach or x[-1] < center[j] + reach:
                ok = False
    if not ok:
        msg = "grid does not resolve the wave packet (spacing > sqrt(eps)/4 or short span)"
        if meta is not None:
            meta.setdefault("warnings", []).append(msg)
        else:
            warnings.warn(msg, ResolutionWarning, stacklevel=3)
    return ok


def evaluate_on_grid(term: GaussianTerm, eps: float, grid, meta: dict | None = None) -> np.ndarray:
    """Values of ``term`` on a grid; returns shape ``(m,) + grid shape``."""
    if eps <= 0:
        raise InvalidInputError("eps must be positive")
    d = term.d
    axes = _as_axes(grid, d)
    check_resolution(axes, eps, term.q, meta)
    X = np.meshgrid(*axes, indexing="ij") if d > 1 else [axes[0]]
    se = math.sqrt(eps)
    y = np.stack([(X[j] - term.q[j]) / se for j in range(d)])
    quad = np.einsum("i...,ij,j...->...", y, term.width, y)
    phase = 1j * (np.einsum("i,i...->...", term.p, y) * se / eps + 0.5 * quad)
    prof = np.exp(phase)
    if term.poly is not None:
        prof = prof * poly_eval(term.poly, y)
    scal = term.scalar_amp * np.exp(1j * term.action_phase / eps) * eps ** (-d / 4)
    return term.polarization.reshape((-1,) + (1,) * d) * (scal * prof)[None]


def sum_gaussians_1d(x, eps: float, q, p, gamma, amp, pol, chunk: int = 64,
                     cutoff: float = 12.0) -> np.ndarray:
    """Sum of many d = 1 Gaussian wave packets on a grid.

    ``amp`` must already contain ``e^{iS/eps}`` and all prefactors; ``pol`` is
    ``(N, m)``.  Each packet is only evaluated where its modulus exceeds
    ``exp(-cutoff^2/2)`` relative to its peak.
    """
    x = np.asarray(x, dtype=float)
    q = np.asarray(q, dtype=float)
    p = np.asarray(p, dtype=float)
    gamma = np.asarray(gamma, dtype=complex)
    amp = np.asarray(amp, dtype=complex) * eps ** (-0.25)
    pol = np.asarray(pol, dtype=complex)
    m = pol.shape[1]
    out = np.zeros((m, x.size), dtype=complex)
    keep = amp != 0
    if not np.any(keep):
        return out
    q, p, gamma, amp, pol = q[keep], p[keep], gamma[keep], amp[keep], pol[keep]
    order = np.argsort(q, kind="stable")
    q, p, gamma, amp, pol = q[order], p[order], gamma[order], amp[order], pol[order]
    halfw = cutoff * np.sqrt(eps / gamma.imag)
    for s in range(0, q.size, chunk):
        sl = slice(s, s + chunk)
        lo = np.searchsorted(x, np.min(q[sl] - halfw[sl]))
        hi = np.searchsorted(x, np.max(q[sl] + halfw[sl]), side="right")
        if hi <= lo:
            continue
        xs = x[lo:hi]
        y = xs[None, :] - q[sl, None]
        ph = 1j * (p[sl, None] * y + 0.5 * gamma[sl, None] * y * y) / eps
        vals = amp[sl, None] * np.exp(ph)
        out[:, lo:hi] += pol[sl].T @ vals
    return out


# ----------------------------------------------------------------------------
# norms
# ----------------------------------------------------------------------------

def l2_norm(field, x) -> float:
    f = np.asarray(field)
    dens = np.abs(f) ** 2
    if dens.ndim > 1:
        dens = dens.reshape(-1, dens.shape[-1]).sum(0)
    return float(np.sqrt(np.trapezoid(dens, x)))


def eps_derivative(field, x, eps: float):
    """``eps d/dx`` with the fourth-order centred stencil (periodic wrap)."""
    f = np.asarray(field)
    dx = float(x[1] - x[0])
    df = (-np.roll(f, -2, -1) + 8 * np.roll(f, -1, -1) - 8 * np.roll(f, 1, -1)
          + np.roll(f, 2, -1)) / (12 * dx)
    return eps * df


def sigma_k_norm(field, x, eps: float, k: int = 0) -> float:
    """``max_{a+b<=k} ||x^a (eps d_x)^b f||`` on a uniform 1-D grid."""
    if k not in (0, 1, 2):
        raise InvalidInputError("k must be 0, 1 or 2")
    x = np.asarray(x, dtype=float)
    f = np.asarray(field)
    derivs = [f]
    for _ in range(k):
        derivs.append(eps_derivative(derivs[-1], x, eps))
    best = 0.0
    for b in range(k + 1):
        for a in range(k + 1 - b):
            best = max(best, l2_norm(x ** a * derivs[b], x))
    return best
