"""Matrix-valued Hamiltonian symbols and their pointwise eigendata.

A model provides the symbol H(t, z) = H0(t, z) + eps H1(t, z) on phase space
z = (x, xi) in R^d x R^d together with the two smooth eigenvalue branches
h_1, h_2 of H0 and the matching spectral projectors pi_1, pi_2.

All model methods are vectorised: ``z`` has shape ``(..., 2d)`` and ``t`` is a
float or an array broadcasting against ``z[..., 0]``.  Derivatives default to
central finite differences with step ``1e-4 * <z>``; the built-in models
override them with closed forms.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache
from typing import Callable, Mapping

import numpy as np

from .errors import InvalidInputError

FD_STEP = 1e-4


@lru_cache(maxsize=None)
def _symplectic_j(d: int) -> np.ndarray:
    eye = np.eye(d)
    zero = np.zeros((d, d))
    J = np.block([[zero, eye], [-eye, zero]])
    J.flags.writeable = False
    return J


def symplectic_j(d: int) -> np.ndarray:
    """The matrix J = [[0, I], [-I, 0]] (read-only, cached)."""
    return _symplectic_j(int(d))


def japanese_bracket(z: np.ndarray) -> np.ndarray:
    return np.sqrt(1.0 + np.sum(z * z, axis=-1))


def poisson(grad_a: np.ndarray, grad_b: np.ndarray) -> np.ndarray:
    """{a, b} = grad_xi a . grad_x b - grad_x a . grad_xi b for scalar symbols."""
    d = grad_a.shape[-1] // 2
    return (np.sum(grad_a[..., d:] * grad_b[..., :d], axis=-1)
            - np.sum(grad_a[..., :d] * grad_b[..., d:], axis=-1))


def poisson_scalar_matrix(grad_a: np.ndarray, grad_p: np.ndarray) -> np.ndarray:
    """{a, P} for scalar a (gradient ``(..., 2d)``) and matrix P (gradient ``(..., 2d, m, m)``)."""
    d = grad_a.shape[-1] // 2
    ga = grad_a[..., :, None, None]
    return np.sum(ga[..., d:, :, :] * grad_p[..., :d, :, :]
                  - ga[..., :d, :, :] * grad_p[..., d:, :, :], axis=-3)


def poisson_matrix(grad_a: np.ndarray, grad_b: np.ndarray) -> np.ndarray:
    """{A, B} for matrix symbols, keeping the operator order A then B."""
    d = grad_a.shape[-3] // 2
    out = 0
    for j in range(d):
        out = out + grad_a[..., d + j, :, :] @ grad_b[..., j, :, :] \
            - grad_a[..., j, :, :] @ grad_b[..., d + j, :, :]
    return out


def _dagger(a: np.ndarray) -> np.ndarray:
    return np.conj(np.swapaxes(a, -1, -2))


class Model:
    """Base class for symbols H0 + eps H1 with (at most) two eigenvalue branches.

    Subclasses implement :meth:`symbol`, :meth:`eigenvalues` and
    :meth:`projectors`.  Everything else has a finite-difference default.
    """

    d: int = 1
    m: int = 2
    name: str = "model"

    @property
    def n_modes(self) -> int:
        return 1 if self.m == 1 else 2

    # -- to be provided -------------------------------------------------
    def symbol(self, t, z):
        """Return ``(H0, H1)`` with shape ``(..., m, m)``."""
        raise NotImplementedError

    def eigenvalues(self, t, z) -> np.ndarray:
        """Eigenvalue branches, shape ``(..., n_modes)`` ordered by mode label."""
        raise NotImplementedError

    def projectors(self, t, z) -> np.ndarray:
        """Spectral projectors, shape ``(..., n_modes, m, m)``."""
        raise NotImplementedError

    # -- helpers ----------------------------------------------------------
    def check_z(self, z) -> np.ndarray:
        z = np.asarray(z, dtype=float)
        if z.shape[-1] != 2 * self.d:
            raise InvalidInputError(
                f"phase-space point has {z.shape[-1]} components, model needs {2 * self.d}")
        return z

    def h(self, t, z, mode: int) -> np.ndarray:
        return self.eigenvalues(t, z)[..., mode - 1]

    def projector(self, t, z, mode: int) -> np.ndarray:
        return self.projectors(t, z)[..., mode - 1, :, :]

    def _steps(self, z):
        return FD_STEP * japanese_bracket(z)

    def _fd(self, fun, t, z, scale=1.0):
        """Central differences of ``fun(t, z)`` in every z direction; adds an axis at -ndim(fun)."""
        z = np.asarray(z, dtype=float)
        hstep = scale * self._steps(z)
        out = []
        for j in range(2 * self.d):
            e = np.zeros(2 * self.d)
            e[j] = 1.0
            dz = hstep[..., None] * e
            fp = np.asarray(fun(t, z + dz))
            fm = np.asarray(fun(t, z - dz))
            hb = hstep.reshape(hstep.shape + (1,) * (fp.ndim - hstep.ndim))
            out.append((fp - fm) / (2 * hb))
        base = np.asarray(z[..., 0]).ndim
        return np.stack(out, axis=base)

    def _fd_t(self, fun, t, z):
        ht = FD_STEP * (1.0 + np.abs(t))
        fp = np.asarray(fun(t + ht, z))
        fm = np.asarray(fun(t - ht, z))
        ht = np.asarray(ht)
        ht = ht.reshape(ht.shape + (1,) * (fp.ndim - ht.ndim))
        return (fp - fm) / (2 * ht)

    # -- derivative defaults ---------------------------------------------
    def grad_h(self, t, z, mode: int) -> np.ndarray:
        return self._fd(lambda s, y: self.h(s, y, mode), t, z)

    def hess_h(self, t, z, mode: int) -> np.ndarray:
        hs = self._fd(lambda s, y: self.grad_h(s, y, mode), t, z)
        return 0.5 * (hs + np.swapaxes(hs, -1, -2))

    def d3_h(self, t, z, mode: int) -> np.ndarray:
        """Third derivatives, shape ``(..., 2d, 2d, 2d)``."""
        return self._fd(lambda s, y: self.hess_h(s, y, mode), t, z, scale=10.0)

    def dt_h(self, t, z, mode: int) -> np.ndarray:
        return self._fd_t(lambda s, y: self.h(s, y, mode), t, z)

    def grad_projector(self, t, z, mode: int) -> np.ndarray:
        """Shape ``(..., 2d, m, m)``."""
        return self._fd(lambda s, y: self.projector(s, y, mode), t, z)

    def dt_projector(self, t, z, mode: int) -> np.ndarray:
        return self._fd_t(lambda s, y: self.projector(s, y, mode), t, z)

    def grad_H0(self, t, z) -> np.ndarray:
        return self._fd(lambda s, y: self.symbol(s, y)[0], t, z)

    # -- derived quantities ----------------------------------------------
    def gap(self, t, z) -> np.ndarray:
        """Half gap f = (h1 - h2) / 2 (zero for scalar models)."""
        if self.n_modes == 1:
            return np.zeros(np.shape(np.asarray(z)[..., 0]))
        ev = self.eigenvalues(t, z)
        return 0.5 * (ev[..., 0] - ev[..., 1])

    def grad_gap(self, t, z) -> np.ndarray:
        if self.n_modes == 1:
            return np.zeros(np.shape(z))
        return 0.5 * (self.grad_h(t, z, 1) - self.grad_h(t, z, 2))

    def adiabatic_generator(self, t, z, mode: int) -> np.ndarray:
        """Self-adjoint generator of parallel transport along ``mode``.

        Diagonal block  pi (H1 + {H0, pi}/(2i)) pi, off-diagonal block
        pi_perp (i d_t pi + i {h, pi}) pi plus its adjoint.
        """
        z = np.asarray(z, dtype=float)
        H0, H1 = self.symbol(t, z)
        if self.m == 1:
            return np.asarray(H1, dtype=complex)
        pi = self.projector(t, z, mode)
        eye = np.eye(self.m)
        perp = eye - pi
        gpi = self.grad_projector(t, z, mode)
        diag = pi @ (H1 + poisson_matrix(self.grad_H0(t, z), gpi) / 2j) @ pi
        off = perp @ (1j * self.dt_projector(t, z, mode)
                      + 1j * poisson_scalar_matrix(self.grad_h(t, z, mode), gpi)) @ pi
        return diag + off + _dagger(off)

    def coupling_w1(self, t, z) -> np.ndarray:
        """W1 = pi1 H1 pi2 + i pi1 (d_t pi1 + {h1 + h2, pi1}/2) pi2."""
        z = np.asarray(z, dtype=float)
        if self.m == 1:
            return np.zeros(np.shape(z)[:-1] + (1, 1), dtype=complex)
        _, H1 = self.symbol(t, z)
        pis = self.projectors(t, z)
        pi1, pi2 = pis[..., 0, :, :], pis[..., 1, :, :]
        gsum = self.grad_h(t, z, 1) + self.grad_h(t, z, 2)
        inner = self.dt_projector(t, z, 1) + 0.5 * poisson_scalar_matrix(
            gsum, self.grad_projector(t, z, 1))
        return pi1 @ H1 @ pi2 + 1j * pi1 @ inner @ pi2

    def mu_flat(self, t, z) -> np.ndarray:
        """(d_t f + {v, f}) / 2."""
        gv = 0.5 * (self.grad_h(t, z, 1) + self.grad_h(t, z, 2))
        dtf = 0.5 * (self.dt_h(t, z, 1) - self.dt_h(t, z, 2))
        return 0.5 * (dtf + poisson(gv, self.grad_gap(t, z)))

    @property
    def spec(self) -> "ModelSpec":
        raise NotImplementedError


# ----------------------------------------------------------------------------
# built-in models
# ----------------------------------------------------------------------------

class ShiftedPhaseCrossing(Model):
    """Model A: H0 = xi I + k x M(x), M(x) = [[0, e^{i theta x}], [e^{-i theta x}, 0]].

    Quantised this is eps D_x + k x M(x).  Eigenvalues xi +- k x, crossing on
    {x = 0}; the projectors rotate with x at rate theta.
    """

    d = 1
    m = 2
    name = "shifted-phase-crossing"

    def __init__(self, k: float = 1.0, theta: float = 0.0):
        if not k > 0:
            raise InvalidInputError("model A requires k > 0")
        self.k = float(k)
        self.theta = float(theta)

    @property
    def spec(self):
        return ModelSpec("shifted-phase-crossing", {"k": self.k, "theta": self.theta})

    def coupling_matrix(self, x):
        """M(x) with shape ``x.shape + (2, 2)``."""
        x = np.asarray(x, dtype=float)
        e = np.exp(1j * self.theta * x)
        M = np.zeros(x.shape + (2, 2), dtype=complex)
        M[..., 0, 1] = e
        M[..., 1, 0] = np.conj(e)
        return M

    def _dM(self, x):
        x = np.asarray(x, dtype=float)
        e = np.exp(1j * self.theta * x)
        dM = np.zeros(x.shape + (2, 2), dtype=complex)
        dM[..., 0, 1] = 1j * self.theta * e
        dM[..., 1, 0] = np.conj(dM[..., 0, 1])
        return dM

    def symbol(self, t, z):
        z = self.check_z(z)
        x, xi = z[..., 0], z[..., 1]
        H0 = xi[..., None, None] * np.eye(2) + self.k * x[..., None, None] * self.coupling_matrix(x)
        return H0, np.zeros_like(H0)

    def eigenvalues(self, t, z):
        z = self.check_z(z)
        x, xi = z[..., 0], z[..., 1]
        return np.stack([xi + self.k * x, xi - self.k * x], axis=-1)

    def projectors(self, t, z):
        z = self.check_z(z)
        M = self.coupling_matrix(z[..., 0])
        eye = np.eye(2)
        return np.stack([0.5 * (eye + M), 0.5 * (eye - M)], axis=-3)

    def grad_h(self, t, z, mode):
        z = self.check_z(z)
        s = 1.0 if mode == 1 else -1.0
        out = np.empty(z.shape)
        out[..., 0] = s * self.k
        out[..., 1] = 1.0
        return out

    def hess_h(self, t, z, mode):
        z = self.check_z(z)
        return np.zeros(z.shape + (2,))

    def d3_h(self, t, z, mode):
        z = self.check_z(z)
        return np.zeros(z.shape + (2, 2))

    def dt_h(self, t, z, mode):
        return np.zeros(np.shape(z)[:-1])

    def grad_projector(self, t, z, mode):
        z = self.check_z(z)
        s = 0.5 if mode == 1 else -0.5
        out = np.zeros(z.shape[:-1] + (2, 2, 2), dtype=complex)
        out[..., 0, :, :] = s * self._dM(z[..., 0])
        return out

    def dt_projector(self, t, z, mode):
        return np.zeros(np.shape(z)[:-1] + (2, 2), dtype=complex)

    def adiabatic_generator(self, t, z, mode: int) -> np.ndarray:
        # dM/dx = i theta sigma3 M and sigma3 swaps the eigenspaces, so the
        # generator is -theta/2 sigma3 on both modes
        shape = np.shape(z)[:-1]
        out = np.zeros(shape + (2, 2), dtype=complex)
        out[..., 0, 0] = -0.5 * self.theta
        out[..., 1, 1] = 0.5 * self.theta
        return out

    def grad_H0(self, t, z):
        z = self.check_z(z)
        x = z[..., 0]
        out = np.zeros(z.shape[:-1] + (2, 2, 2), dtype=complex)
        out[..., 0, :, :] = self.k * (self.coupling_matrix(x) + x[..., None, None] * self._dM(x))
        out[..., 1, :, :] = np.eye(2)
        return out


class MatrixPotentialSchrodinger(Model):
    """Model B: H0 = (xi^2/2 + v0(x)) I + kappa x R(theta x).

    ``R(phi) = [[cos phi, sin phi], [sin phi, -cos phi]]`` and
    ``v0(x) = omega^2 x^2 / 2 + tilt x``.  The gap 2 kappa |x| closes linearly
    on {x = 0}; crossings are generic wherever xi != 0.
    """

    d = 1
    m = 2
    name = "matrix-potential-schrodinger"

    def __init__(self, kappa: float = 1.0, theta: float = 0.5, omega: float = 1.0,
                 tilt: float = 0.0):
        if not kappa > 0:
            raise InvalidInputError("model B requires kappa > 0")
        self.kappa = float(kappa)
        self.theta = float(theta)
        self.omega = float(omega)
        self.tilt = float(tilt)

    @property
    def spec(self):
        return ModelSpec("matrix-potential-schrodinger",
                         {"kappa": self.kappa, "theta": self.theta,
                          "omega": self.omega, "tilt": self.tilt})

    def v0(self, x):
        return 0.5 * self.omega ** 2 * x * x + self.tilt * x

    def dv0(self, x):
        return self.omega ** 2 * x + self.tilt

    def rotation(self, x):
        x = np.asarray(x, dtype=float)
        c, s = np.cos(self.theta * x), np.sin(self.theta * x)
        R = np.empty(x.shape + (2, 2))
        R[..., 0, 0], R[..., 0, 1] = c, s
        R[..., 1, 0], R[..., 1, 1] = s, -c
        return R

    def _dR(self, x):
        x = np.asarray(x, dtype=float)
        c, s = np.cos(self.theta * x), np.sin(self.theta * x)
        R = np.empty(x.shape + (2, 2))
        R[..., 0, 0], R[..., 0, 1] = -s, c
        R[..., 1, 0], R[..., 1, 1] = c, s
        return self.theta * R

    def potential(self, x):
        """Matrix potential V(x) on a position grid, shape ``x.shape + (2, 2)``."""
        x = np.asarray(x, dtype=float)
        return (self.v0(x)[..., None, None] * np.eye(2)
                + self.kappa * x[..., None, None] * self.rotation(x))

    def symbol(self, t, z):
        z = self.check_z(z)
        x, xi = z[..., 0], z[..., 1]
        H0 = 0.5 * (xi * xi)[..., None, None] * np.eye(2) + self.potential(x)
        return H0.astype(complex), np.zeros(H0.shape, dtype=complex)

    def eigenvalues(self, t, z):
        z = self.check_z(z)
        x, xi = z[..., 0], z[..., 1]
        v = 0.5 * xi * xi + self.v0(x)
        return np.stack([v + self.kappa * x, v - self.kappa * x], axis=-1)

    def projectors(self, t, z):
        z = self.check_z(z)
        R = self.rotation(z[..., 0])
        eye = np.eye(2)
        return np.stack([0.5 * (eye + R), 0.5 * (eye - R)], axis=-3).astype(complex)

    def grad_h(self, t, z, mode):
        z = self.check_z(z)
        s = 1.0 if mode == 1 else -1.0
        out = np.empty(z.shape)
        out[..., 0] = self.dv0(z[..., 0]) + s * self.kappa
        out[..., 1] = z[..., 1]
        return out

    def hess_h(self, t, z, mode):
        z = self.check_z(z)
        out = np.zeros(z.shape + (2,))
        out[..., 0, 0] = self.omega ** 2
        out[..., 1, 1] = 1.0
        return out

    def d3_h(self, t, z, mode):
        z = self.check_z(z)
        return np.zeros(z.shape + (2, 2))

    def dt_h(self, t, z, mode):
        return np.zeros(np.shape(z)[:-1])

    def grad_projector(self, t, z, mode):
        z = self.check_z(z)
        s = 0.5 if mode == 1 else -0.5
        out = np.zeros(z.shape[:-1] + (2, 2, 2), dtype=complex)
        out[..., 0, :, :] = s * self._dR(z[..., 0])
        return out

    def dt_projector(self, t, z, mode):
        return np.zeros(np.shape(z)[:-1] + (2, 2), dtype=complex)

    def grad_H0(self, t, z):
        z = self.check_z(z)
        x, xi = z[..., 0], z[..., 1]
        out = np.zeros(z.shape[:-1] + (2, 2, 2), dtype=complex)
        out[..., 0, :, :] = (self.dv0(x)[..., None, None] * np.eye(2)
                             + self.kappa * (self.rotation(x) + x[..., None, None] * self._dR(x)))
        out[..., 1, :, :] = xi[..., None, None] * np.eye(2)
        return out


class ScalarHarmonic(Model):
    """Model C: h = p^2/2 + omega^2 q^2/2 (+ optional cubic and quartic terms).

    The anharmonic coefficients default to zero; they exist so that the
    order-sqrt(eps) cubic correction can be exercised on a scalar problem.
    """

    d = 1
    m = 1
    name = "scalar-harmonic"

    def __init__(self, omega: float = 1.0, cubic: float = 0.0, quartic: float = 0.0):
        self.omega = float(omega)
        self.cubic = float(cubic)
        self.quartic = float(quartic)

    @property
    def spec(self):
        return ModelSpec("scalar-harmonic", {"omega": self.omega, "cubic": self.cubic,
                                             "quartic": self.quartic})

    @property
    def is_quadratic(self) -> bool:
        return self.cubic == 0.0 and self.quartic == 0.0

    def scalar_potential(self, x):
        x = np.asarray(x, dtype=float)
        return 0.5 * self.omega ** 2 * x * x + self.cubic * x ** 3 + self.quartic * x ** 4

    def potential(self, x):
        return self.scalar_potential(x)[..., None, None]

    def symbol(self, t, z):
        z = self.check_z(z)
        h = 0.5 * z[..., 1] ** 2 + self.scalar_potential(z[..., 0])
        H0 = h[..., None, None].astype(complex)
        return H0, np.zeros_like(H0)

    def eigenvalues(self, t, z):
        z = self.check_z(z)
        return (0.5 * z[..., 1] ** 2 + self.scalar_potential(z[..., 0]))[..., None]

    def projectors(self, t, z):
        z = self.check_z(z)
        return np.ones(z.shape[:-1] + (1, 1, 1), dtype=complex)

    def grad_h(self, t, z, mode=1):
        z = self.check_z(z)
        x = z[..., 0]
        out = np.empty(z.shape)
        out[..., 0] = self.omega ** 2 * x + 3 * self.cubic * x * x + 4 * self.quartic * x ** 3
        out[..., 1] = z[..., 1]
        return out

    def hess_h(self, t, z, mode=1):
        z = self.check_z(z)
        x = z[..., 0]
        out = np.zeros(z.shape + (2,))
        out[..., 0, 0] = self.omega ** 2 + 6 * self.cubic * x + 12 * self.quartic * x * x
        out[..., 1, 1] = 1.0
        return out

    def d3_h(self, t, z, mode=1):
        z = self.check_z(z)
        out = np.zeros(z.shape + (2, 2))
        out[..., 0, 0, 0] = 6 * self.cubic + 24 * self.quartic * z[..., 0]
        return out

    def dt_h(self, t, z, mode=1):
        return np.zeros(np.shape(z)[:-1])

    def grad_projector(self, t, z, mode=1):
        return np.zeros(np.shape(z)[:-1] + (2, 1, 1), dtype=complex)

    def dt_projector(self, t, z, mode=1):
        return np.zeros(np.shape(z)[:-1] + (1, 1), dtype=complex)

    def grad_H0(self, t, z):
        return self.grad_h(t, z)[..., None, None].astype(complex)


class ScalarFunctionModel(Model):
    """Scalar symbol given by a Python callable ``h(t, z)``; derivatives by finite differences."""

    m = 1

    def __init__(self, h: Callable, d: int = 1, name: str = "scalar-function"):
        self._h = h
        self.d = int(d)
        self.name = name

    def symbol(self, t, z):
        z = self.check_z(z)
        H0 = np.asarray(self._h(t, z), dtype=complex)[..., None, None]
        return H0, np.zeros_like(H0)

    def eigenvalues(self, t, z):
        z = self.check_z(z)
        return np.asarray(self._h(t, z), dtype=float)[..., None]

    def projectors(self, t, z):
        z = self.check_z(z)
        return np.ones(z.shape[:-1] + (1, 1, 1), dtype=complex)

    def grad_projector(self, t, z, mode=1):
        return np.zeros(np.shape(z)[:-1] + (2 * self.d, 1, 1), dtype=complex)

    def dt_projector(self, t, z, mode=1):
        return np.zeros(np.shape(z)[:-1] + (1, 1), dtype=complex)

    @property
    def spec(self):
        return ModelSpec("scalar-function", {"name": self.name}, d=self.d, m=1)


# ----------------------------------------------------------------------------
# specs and pointwise records
# ----------------------------------------------------------------------------

_KINDS = {
    "shifted-phase-crossing": (ShiftedPhaseCrossing, 2),
    "matrix-potential-schrodinger": (MatrixPotentialSchrodinger, 2),
    "scalar-harmonic": (ScalarHarmonic, 1),
}
_ALIASES = {"A": "shifted-phase-crossing", "B": "matrix-potential-schrodinger",
            "C": "scalar-harmonic"}


@dataclass(frozen=True)
class ModelSpec:
    """Immutable description of a built-in model."""

    kind: str
    params: Mapping = field(default_factory=dict)
    d: int = 1
    m: int | None = None

    def __post_init__(self):
        kind = _ALIASES.get(self.kind, self.kind)
        object.__setattr__(self, "kind", kind)
        object.__setattr__(self, "params", dict(self.params))
        if kind in _KINDS:
            m = _KINDS[kind][1]
            if self.m is not None and self.m != m:
                raise InvalidInputError(f"{kind} has m={m}")
            object.__setattr__(self, "m", m)
            if self.d != 1:
                raise InvalidInputError("built-in models are one-dimensional")

    def build(self) -> Model:
        return build_model(self)


def build_model(spec: ModelSpec) -> Model:
    if spec.kind not in _KINDS:
        raise InvalidInputError(f"unknown model kind {spec.kind!r}")
    cls = _KINDS[spec.kind][0]
    try:
        return cls(**spec.params)
    except TypeError as exc:
        raise InvalidInputError(f"bad parameters for {spec.kind}: {exc}") from None


def _as_model(model) -> Model:
    return build_model(model) if isinstance(model, ModelSpec) else model


@dataclass
class ModeLocal:
    h1: float
    h2: float
    pi1: np.ndarray
    pi2: np.ndarray
    f: float
    v: float
    grad_h: dict
    hess_h: dict
    grad_f: np.ndarray
    dt_f: float
    w1: np.ndarray
    h1_adia: dict


@dataclass
class CouplingData:
    dtf_plus_bracket: float
    grad_f_J: np.ndarray
    w1: np.ndarray
    h1_adia: dict


def eval_symbol(model, t: float, z) -> tuple[np.ndarray, np.ndarray]:
    model = _as_model(model)
    z = model.check_z(z)
    H0, H1 = model.symbol(t, z)
    return np.asarray(H0, dtype=complex), np.asarray(H1, dtype=complex)


def eigendecompose(model, t: float, z) -> ModeLocal:
    """Eigendata of H0 at one phase-space point."""
    model = _as_model(model)
    z = model.check_z(z)
    ev = model.eigenvalues(t, z)
    pis = model.projectors(t, z)
    modes = range(1, model.n_modes + 1)
    if model.n_modes == 1:
        h1, h2 = float(ev[0]), float(ev[0])
        pi1 = pis[0]
        pi2 = np.zeros_like(pi1)
    else:
        h1, h2 = float(ev[0]), float(ev[1])
        pi1, pi2 = pis[0], pis[1]
    grad_f = model.grad_gap(t, z)
    if model.n_modes == 1:
        dt_f = 0.0
    else:
        dt_f = float(0.5 * (model.dt_h(t, z, 1) - model.dt_h(t, z, 2)))
    return ModeLocal(
        h1=h1, h2=h2, pi1=pi1, pi2=pi2,
        f=0.5 * (h1 - h2) if model.n_modes == 2 else 0.0,
        v=0.5 * (h1 + h2),
        grad_h={k: model.grad_h(t, z, k) for k in modes},
        hess_h={k: model.hess_h(t, z, k) for k in modes},
        grad_f=grad_f, dt_f=dt_f,
        w1=model.coupling_w1(t, z),
        h1_adia={k: model.adiabatic_generator(t, z, k) for k in modes},
    )


def crossing_coupling_data(model, t: float, z) -> CouplingData:
    model = _as_model(model)
    z = model.check_z(z)
    modes = range(1, model.n_modes + 1)
    return CouplingData(
        dtf_plus_bracket=float(2 * model.mu_flat(t, z)) if model.n_modes == 2 else 0.0,
        grad_f_J=symplectic_j(model.d) @ model.grad_gap(t, z),
        w1=model.coupling_w1(t, z),
        h1_adia={k: model.adiabatic_generator(t, z, k) for k in modes},
    )
