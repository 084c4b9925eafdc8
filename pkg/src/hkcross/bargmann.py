"""Discrete Bargmann transform and Gaussian frame reconstruction (d = 1).

``B[f](z) = (2 pi eps)^{-1/2} <g^eps_z, f>`` and the frame identity
``f = (2 pi eps)^{-1/2} int B[f](z) g^eps_z dz`` are discretised on a uniform
rectangular phase-space grid with weights ``dz^2``.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass

import numpy as np

from .errors import InvalidInputError
from .wavepacket import check_resolution, sum_gaussians_1d

DEFAULT_SPACING = 0.5   # in units of sqrt(eps)
DEFAULT_MARGIN = 6.0    # in units of sqrt(eps)


@dataclass(frozen=True)
class QuadratureGrid:
    """Uniform phase-space grid ``q_axis x p_axis`` with weight ``spacing**2`` per node."""

    q_axis: np.ndarray
    p_axis: np.ndarray
    spacing: float

    @classmethod
    def around(cls, center, eps: float, spacing: float = DEFAULT_SPACING,
               margin: float = DEFAULT_MARGIN, extent=(0.0, 0.0)) -> "QuadratureGrid":
        """Box centred at ``center``: half-widths ``extent + margin*sqrt(eps)``.

        ``spacing`` and ``margin`` are measured in units of sqrt(eps); ``extent``
        is the half-size of the data's own localisation region.
        """
        if eps <= 0:
            raise InvalidInputError("eps must be positive")
        if not 0 < spacing <= 1.0:
            raise InvalidInputError("quadrature spacing must lie in (0, 1] * sqrt(eps)")
        se = math.sqrt(eps)
        dz = spacing * se
        axes = []
        for c, ext in zip(center, extent):
            half = ext + margin * se
            n = int(math.ceil(half / dz - 1e-9))
            axes.append(c + dz * np.arange(-n, n + 1))
        return cls(axes[0], axes[1], dz)

    @property
    def nodes(self) -> np.ndarray:
        Q, P = np.meshgrid(self.q_axis, self.p_axis, indexing="ij")
        return np.stack([Q.ravel(), P.ravel()], axis=-1)

    @property
    def weight(self) -> float:
        return self.spacing ** 2

    @property
    def shape(self):
        return (self.q_axis.size, self.p_axis.size)

    def __len__(self):
        return self.q_axis.size * self.p_axis.size

    def check(self, eps: float):
        if self.spacing > math.sqrt(eps) * (1 + 1e-12):
            raise InvalidInputError("quadrature spacing exceeds sqrt(eps)")


@dataclass
class BargmannField:
    values: np.ndarray          # (N,) or (N, m), node order of grid.nodes
    eps: float
    grid: QuadratureGrid

    def weighted_norm(self) -> float:
        v = self.values
        return float(np.sqrt(self.grid.weight * np.sum(np.abs(v) ** 2)))

    def to_csv(self, path):
        nodes = self.grid.nodes
        vals = self.values.reshape(len(nodes), -1)
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            head = ["q", "p"]
            for j in range(vals.shape[1]):
                head += [f"re_B{j + 1}", f"im_B{j + 1}"]
            w.writerow(head)
            for z, v in zip(nodes, vals):
                row = [repr(float(z[0])), repr(float(z[1]))]
                for c in v:
                    row += [repr(float(c.real)), repr(float(c.imag))]
                w.writerow(row)


def coherent_overlaps(f, x, eps: float, grid: QuadratureGrid, cutoff: float = 12.0,
                      meta: dict | None = None) -> np.ndarray:
    """``<g^eps_z, f>`` at every node by trapezoid quadrature.

    ``f`` is ``(n,)`` or ``(m, n)``; the result is ``(N,)`` or ``(N, m)``.
    """
    x = np.asarray(x, dtype=float)
    f = np.asarray(f, dtype=complex)
    scalar = f.ndim == 1
    F = f[None] if scalar else f
    check_resolution([x], eps, meta=meta)
    wts = np.full(x.size, x[1] - x[0])
    wts[0] *= 0.5
    wts[-1] *= 0.5
    norm = (np.pi * eps) ** -0.25
    half = cutoff * math.sqrt(eps)
    out = np.zeros((grid.q_axis.size, grid.p_axis.size, F.shape[0]), dtype=complex)
    for i, q in enumerate(grid.q_axis):
        lo = np.searchsorted(x, q - half)
        hi = np.searchsorted(x, q + half, side="right")
        if hi <= lo:
            continue
        y = x[lo:hi] - q
        gauss = norm * np.exp(-y * y / (2 * eps)) * wts[lo:hi]
        osc = np.exp(-1j * np.outer(grid.p_axis, y) / eps)
        out[i] = (osc * gauss) @ F[:, lo:hi].T
    out = out.reshape(-1, F.shape[0])
    return out[:, 0] if scalar else out


def bargmann_transform(f, x, eps: float, grid: QuadratureGrid,
                       meta: dict | None = None) -> BargmannField:
    grid.check(eps)
    vals = (2 * np.pi * eps) ** -0.5 * coherent_overlaps(f, x, eps, grid, meta=meta)
    return BargmannField(vals, eps, grid)


def frame_reconstruct(B: BargmannField, x, eps: float | None = None) -> np.ndarray:
    """Gaussian frame synthesis ``(2 pi eps)^{-1/2} sum_z w B(z) g_z(x)``."""
    eps = B.eps if eps is None else eps
    nodes = B.grid.nodes
    vals = B.values
    scalar = vals.ndim == 1
    V = vals[:, None] if scalar else vals
    n = len(nodes)
    coef = (2 * np.pi * eps) ** -0.5 * B.grid.weight * np.pi ** -0.25
    out = sum_gaussians_1d(x, eps, nodes[:, 0], nodes[:, 1], np.full(n, 1j),
                           np.full(n, coef, dtype=complex), V)
    return out[0] if scalar else out


def freq_localization_profile(f, x, eps: float, radii, grid: QuadratureGrid | None = None,
                              center=(0.0, 0.0), powers=(1, 2, 4)):
    """Tail table ``(R, sup_{|z - center| > R} |B f(z)| <z>^N for N in powers)``.

    ``<z>`` is taken about the origin.  Without an explicit grid, one covering
    ``max(radii) + 4 sqrt(eps)`` around ``center`` is used.
    """
    radii = [float(r) for r in radii]
    if grid is None:
        ext = max(radii) + 4 * math.sqrt(eps)
        grid = QuadratureGrid.around(center, eps, margin=0.0, extent=(ext, ext))
    B = bargmann_transform(f, x, eps, grid)
    nodes = grid.nodes
    mod = np.abs(B.values)
    if mod.ndim > 1:
        mod = np.sqrt(np.sum(mod ** 2, axis=-1))
    dist = np.linalg.norm(nodes - np.asarray(center, dtype=float), axis=-1)
    jb = np.sqrt(1.0 + np.sum(nodes ** 2, axis=-1))
    rows = []
    for R in radii:
        mask = dist > R
        row = [R]
        for N in powers:
            row.append(float(np.max(mod[mask] * jb[mask] ** N)) if np.any(mask) else 0.0)
        rows.append(tuple(row))
    return rows
