"""Thawed and frozen Gaussian initial-value representations with hopping corrections (d = 1).

For initial data ``V(x) phi(x)`` the approximations are phase-space sums over
quadrature nodes z,

    J_l(t) = (2 pi eps)^{-1} sum_z dz^2 e^{i S_l / eps} <g_z, phi> V_l(z) G_l(z),

with ``V_l = R_l pi_l(t0, z) V(z)`` and ``G_l`` either the thawed Gaussian of
width ``F_l[i]`` and amplitude ``c_i det^{-1/2}(A + iB)`` or the frozen
coherent state times the Herman-Kluk prefactor.  Nodes whose mode-1
trajectory meets the crossing set before ``t`` also carry a transferred
Gaussian on mode 2 (multiplied by sqrt(eps) on assembly).

:class:`IvrRun` integrates every node once and serves all flavours and
times; the module-level functions are thin wrappers.
"""
from __future__ import annotations

import math
import time as _time
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .bargmann import QuadratureGrid, coherent_overlaps
from .classical import DEFAULT_STEP, FlowState, initial_state, integrate_batch
from .errors import CausticError, InvalidInputError, WellPreparedViolation
from .hopping import CrossingScanner
from .model import Model
from .wavepacket import (BranchTracker, blocks, coherent_norm, hk_radicand, l2_norm,
                         sum_gaussians_1d)

CAUSTIC_FRACTION = 1e-3
_DET_TOL = 1e-12


@dataclass
class IvrResult:
    field: np.ndarray            # (m, n)
    x: np.ndarray
    meta: dict = field(default_factory=dict)

    def norm(self) -> float:
        return l2_norm(self.field, self.x)


def time_average(fields: Sequence, times, chi) -> np.ndarray:
    """Trapezoid-in-time average ``int chi(t) field(t) dt``.

    ``fields`` may hold arrays or :class:`IvrResult` objects on one grid.  A
    single sample returns ``chi[0] * field``.
    """
    arrs = [f.field if isinstance(f, IvrResult) else np.asarray(f) for f in fields]
    if any(a.shape != arrs[0].shape for a in arrs):
        raise InvalidInputError("fields live on different grids")
    if isinstance(fields[0], IvrResult):
        x0 = fields[0].x
        if any(not np.array_equal(f.x, x0) for f in fields if isinstance(f, IvrResult)):
            raise InvalidInputError("fields live on different grids")
    chi = np.asarray(chi, dtype=float)
    times = np.asarray(times, dtype=float)
    if len(arrs) != chi.size or chi.size != times.size:
        raise InvalidInputError("need one weight and one time per field")
    if len(arrs) == 1:
        return chi[0] * arrs[0]
    stack = np.stack(arrs)
    return np.trapezoid(chi.reshape((-1,) + (1,) * (stack.ndim - 1)) * stack, times, axis=0)


def bump_weights(times, t_a: float, t_b: float) -> np.ndarray:
    """Smooth compactly supported weight on (t_a, t_b), normalised by the trapezoid rule."""
    times = np.asarray(times, dtype=float)
    u = (times - t_a) / (t_b - t_a)
    w = np.zeros_like(u)
    inside = (u > 0) & (u < 1)
    w[inside] = np.exp(-1.0 / (u[inside] * (1 - u[inside])))
    tot = np.trapezoid(w, times) if times.size > 1 else w.sum()
    return w / tot if tot > 0 else w


class _RootTracker:
    """Continuous det^{1/2} of the thawed and Herman-Kluk radicands along a batch."""

    def __init__(self, n: int, gamma0, base_F=None, scanner: CrossingScanner | None = None,
                 seed_th=None, seed_hk=None):
        self.gamma0 = np.broadcast_to(np.asarray(gamma0, dtype=complex), (n,)).copy()
        self.base_F = base_F
        self.th = BranchTracker(seed=np.ones(n, complex) if seed_th is None else seed_th)
        self.hk = BranchTracker(seed=np.ones(n, complex) if seed_hk is None else seed_hk)
        self.scanner = scanner
        self.caustic = np.zeros(n, dtype=bool)
        self.th_at_bracket = np.ones(n, complex)
        self.hk_at_bracket = np.ones(n, complex)

    def radicands(self, F):
        if self.base_F is not None:
            F = F @ self.base_F
        A, B, _, _ = blocks(F)
        rad_th = A[:, 0, 0] + B[:, 0, 0] * self.gamma0
        return rad_th, hk_radicand(F)

    def _root(self, tracker, rad):
        bad = np.abs(rad) < _DET_TOL
        self.caustic |= bad
        rad = np.where(bad, tracker.prev ** 2, rad)
        return tracker.root(rad)

    def __call__(self, t_old, st_old, t_new, st_new):
        if self.scanner is not None:
            before = self.scanner.found.copy()
            self.scanner(t_old, st_old, t_new, st_new)
            new = self.scanner.found & ~before
            self.th_at_bracket[new] = self.th.prev[new]
            self.hk_at_bracket[new] = self.hk.prev[new]
        rth, rhk = self.radicands(st_new.F)
        self._root(self.th, rth)
        self._root(self.hk, rhk)


@dataclass
class _Snapshot:
    t: float
    state: FlowState
    root_th: np.ndarray      # det^{1/2}(A + B Gamma0)
    root_hk: np.ndarray      # 2^{-1/2} det^{1/2}(A + D + i(C - B))


@dataclass
class _HopData:
    """Per-node hop data for the nodes that cross (index into the node list)."""

    idx: np.ndarray
    t_flat: np.ndarray
    zeta: np.ndarray
    S_in: np.ndarray
    gamma_in: np.ndarray
    amp_th: np.ndarray        # incoming thawed amplitude c_i det^{-1/2}(A1 + iB1) at t_flat
    hk_in: np.ndarray         # HK root of the incoming flow at t_flat
    F_in: np.ndarray
    mu: np.ndarray
    alpha: np.ndarray
    beta: np.ndarray
    gamma_flat: np.ndarray
    transfer: np.ndarray      # -i/2 sqrt(pi / (-i A)) (thawed)
    tau_eff: np.ndarray       # -i sqrt(pi / (2 i mu)) (frozen)
    G: np.ndarray             # hop Jacobians
    hk_hop: np.ndarray        # HK root of G F_in, continued from hk_in
    pol: np.ndarray           # transferred polarisation at t_flat (outgoing eigenspace)


def _constant_polarization(v, m):
    v = np.asarray(v, dtype=complex).ravel()
    if v.size != m:
        raise InvalidInputError(f"polarisation needs {m} components")
    return lambda z: np.broadcast_to(v, (len(z), m))


class IvrRun:
    """Shared node integration for thawed/frozen IVRs and their hopping corrections.

    Parameters
    ----------
    model : Model
        Built-in or user model with d = 1.
    eps : float
    x : array
        Uniform spatial grid for the initial data and the output fields.
    phi : array
        Scalar initial profile on ``x``.
    polarization : array or callable
        Constant m-vector or ``V(z) -> (N, m)``.
    quadrature : QuadratureGrid
    t0 : float
    step : float
        RK4 step for all trajectories.
    """

    def __init__(self, model: Model, eps: float, x, phi, polarization, quadrature: QuadratureGrid,
                 t0: float = 0.0, step: float = DEFAULT_STEP):
        if model.d != 1:
            raise InvalidInputError("the IVR assembly is implemented for d = 1")
        if eps <= 0:
            raise InvalidInputError("eps must be positive")
        quadrature.check(eps)
        self.model = model
        self.eps = float(eps)
        self.x = np.asarray(x, dtype=float)
        self.phi = np.asarray(phi, dtype=complex)
        self.quad = quadrature
        self.t0 = float(t0)
        self.step = float(step)
        self.nodes = quadrature.nodes
        self.meta: dict = {"warnings": [], "node_count": len(self.nodes)}
        if self.phi.ndim == 2:
            # vector data: V(z) <g_z, phi> replaced by <g_z, phi> in C^m
            if polarization is not None:
                raise InvalidInputError("vector-valued data takes no separate polarisation")
            V = coherent_overlaps(self.phi, self.x, self.eps, quadrature, meta=self.meta)
            self.coef = np.ones(len(self.nodes), dtype=complex)
        else:
            self.coef = coherent_overlaps(self.phi, self.x, self.eps, quadrature, meta=self.meta)
            pol = polarization if callable(polarization) else \
                _constant_polarization(polarization, model.m)
            V = np.asarray(pol(self.nodes), dtype=complex).reshape(len(self.nodes), model.m)
        pis = model.projectors(self.t0, self.nodes)
        self.pol0 = {l: np.einsum("nij,nj->ni", pis[:, l - 1], V)
                     for l in range(1, model.n_modes + 1)}
        self.weight = quadrature.weight / (2 * np.pi * self.eps) * coherent_norm(1j)
        self._snaps: dict = {}
        self._hops: _HopData | None = None
        self._hop_cache: dict = {}
        self._hop_state = None
        self._scan: dict = {}
        self.timings: dict = {}

    # ------------------------------------------------------------------
    def active(self, mode: int) -> np.ndarray:
        return (np.abs(self.coef) > 0) & (np.linalg.norm(self.pol0[mode], axis=1) > 1e-300)

    def evolve(self, mode: int, times: Sequence[float]):
        """Integrate the nodes of ``mode`` to every time in ``times`` (ascending)."""
        times = sorted(float(t) for t in times)
        if times and times[0] < self.t0:
            raise InvalidInputError("times before t0 are not supported")
        snaps = self._snaps.setdefault(mode, {})
        todo = [t for t in times if t not in snaps]
        if not todo:
            return
        tic = _time.perf_counter()
        n = len(self.nodes)
        if mode in self._scan:
            t_cur, st, trk = self._scan[mode]
        else:
            st = initial_state(self.model, self.nodes, transport=True)
            scanner = CrossingScanner(self.model, n) if self.model.n_modes == 2 else None
            trk = _RootTracker(n, 1j, scanner=scanner)
            t_cur = self.t0
        for t in todo:
            if t < t_cur:
                raise InvalidInputError("request times in ascending order")
            if t > t_cur:
                st = integrate_batch(self.model, mode, t_cur, st, t, self.step, callbacks=[trk])
                t_cur = t
            snaps[t] = _Snapshot(t, st.copy(), trk.th.prev.copy(), trk.hk.prev.copy())
        self._scan[mode] = (t_cur, st, trk)
        self._check_caustics(trk.caustic)
        if trk.scanner is not None:
            act = self.active(mode)
            if np.any(trk.scanner.n_crossings[act] >= 2):
                raise WellPreparedViolation(
                    f"a mode-{mode} trajectory meets the crossing set twice",
                    node=int(np.flatnonzero((trk.scanner.n_crossings >= 2) & act)[0]))
        self.timings[f"mode{mode}"] = self.timings.get(f"mode{mode}", 0.0) + \
            _time.perf_counter() - tic

    def _check_caustics(self, mask):
        count = int(np.sum(mask & (np.abs(self.coef) > 0)))
        self.meta["caustic_nodes"] = max(self.meta.get("caustic_nodes", 0), count)
        if count > CAUSTIC_FRACTION * len(self.nodes):
            raise CausticError(f"{count} caustic nodes exceed the tolerated fraction")
        if count:
            self.meta["warnings"].append(f"{count} caustic nodes zeroed")

    # ------------------------------------------------------------------
    def mode_field(self, mode: int, t: float, flavor: str = "thawed") -> IvrResult:
        self.evolve(mode, [t])
        snap = self._snaps[mode][float(t)]
        st = snap.state
        pol = np.einsum("nij,nj->ni", st.R, self.pol0[mode])
        caustic = self._scan[mode][2].caustic
        base = self.weight * self.coef * np.exp(1j * st.S / self.eps)
        if flavor == "thawed":
            A, B, C, D = (b[:, 0, 0] for b in blocks(st.F))
            den = A + 1j * B
            gam = (C + 1j * D) / den
            amp = base / snap.root_th
        elif flavor == "frozen":
            gam = np.full(len(self.nodes), 1j)
            amp = base * snap.root_hk
        else:
            raise InvalidInputError(f"unknown flavour {flavor!r}")
        amp = np.where(caustic, 0, amp)
        fld = sum_gaussians_1d(self.x, self.eps, st.z[:, 0], st.z[:, 1], gam, amp, pol)
        return IvrResult(fld, self.x, {"mode": mode, "flavor": flavor, "t": float(t),
                                       "node_count": len(self.nodes)})

    # ------------------------------------------------------------------
    def _prepare_hops(self, t_max: float):
        """Locate first crossings of mode-1 trajectories up to ``t_max`` and build hop data."""
        if getattr(self, "_hops_tmax", -np.inf) >= t_max:
            return self._hops
        self.evolve(1, [t_max])
        trk = self._scan[1][2]
        scanner = trk.scanner
        act = self.active(1)
        found = scanner.found & act
        idx_all, tb, st = scanner.refine(1)
        keep = found[idx_all]
        idx, tb = idx_all[keep], tb[keep]
        st = st.take(np.flatnonzero(keep)) if st is not None else None
        model = self.model
        if idx.size == 0:
            self._hops = None
            self._hops_tmax = self._scan[1][0]
            return None
        z = st.z
        F = st.F
        A, B, C, D = (b[:, 0, 0] for b in blocks(F))
        g_in = (C + 1j * D) / (A + 1j * B)
        # continue the incoming roots from the bracket start to t_flat
        th = BranchTracker(seed=trk.th_at_bracket[idx]).root(A + 1j * B)
        hk = BranchTracker(seed=trk.hk_at_bracket[idx]).root(hk_radicand(F))
        amp_th = 1.0 / th
        mu = model.mu_flat(tb, z)
        if np.any(np.abs(mu) <= 1e-10):
            from .errors import DegenerateCrossingError
            raise DegenerateCrossingError("degenerate crossing at a quadrature node")
        gf = model.grad_gap(tb, z)
        alpha, beta = gf[:, 1], -gf[:, 0]
        u = beta - g_in * alpha
        den = mu + alpha * beta - alpha * g_in * alpha
        gflat = g_in + u * u / den
        Akern = -0.5 * mu - 0.5 * alpha * beta + 0.5 * alpha * alpha * g_in
        transfer = -0.5j * np.sqrt(np.pi / (-1j * Akern))
        tau_eff = -1j * np.sqrt(np.pi / (2j * mu))
        n = np.stack([alpha, beta], -1)
        grad = np.stack([-beta, alpha], -1)
        G = np.eye(2)[None] - n[:, :, None] * grad[:, None, :] / mu[:, None, None]
        # HK root of G F_in by continuation along G_s = I - s n grad^T / mu
        hk_tr = BranchTracker(seed=hk)
        for s in np.linspace(0, 1, 65)[1:]:
            Gs = np.eye(2)[None] - s * n[:, :, None] * grad[:, None, :] / mu[:, None, None]
            hk_tr.root(hk_radicand(Gs @ F))
        W = model.coupling_w1(tb, z)
        pi2 = model.projector(tb, z, 2)
        v1 = np.einsum("nij,nj->ni", st.R, self.pol0[1][idx])
        pol = np.einsum("nij,nkj,nk->ni", pi2, np.conj(W), v1)
        self._hops = _HopData(idx=idx, t_flat=tb, zeta=z, S_in=st.S, gamma_in=g_in, amp_th=amp_th,
                              hk_in=hk, F_in=F, mu=mu, alpha=alpha, beta=beta, gamma_flat=gflat,
                              transfer=transfer, tau_eff=tau_eff, G=G, hk_hop=hk_tr.prev.copy(),
                              pol=pol)
        self._hops_tmax = self._scan[1][0]
        self._hop_cache = {}
        self._hop_state = None
        self.meta["crossing_nodes"] = int(idx.size)
        self.meta["t_flat_min"] = float(tb.min())
        self.meta["t_flat_max"] = float(tb.max())
        return self._hops

    def _continue_hops(self, t: float):
        """Outgoing-mode states at time ``t`` for the nodes with t_flat <= t.

        Ascending requests continue the previous batch; nodes whose hop time
        falls in the new interval join it from their own t_flat.
        """
        key = float(t)
        if key in self._hop_cache:
            return self._hop_cache[key]
        hops = self._hops
        H = hops.idx.size
        hs = self._hop_state
        if hs is None or t < hs["t"]:
            hs = {"t": -np.inf, "state": initial_state(self.model, hops.zeta, transport=True),
                  "th": np.ones(H, complex), "hk": hops.hk_hop.copy(),
                  "caustic": np.zeros(H, dtype=bool), "started": np.zeros(H, dtype=bool)}
            self._hop_state = hs
        sel = np.flatnonzero(hops.t_flat <= t)
        if sel.size == 0:
            self._hop_cache[key] = None
            return None
        t0 = np.where(hs["started"][sel], hs["t"], hops.t_flat[sel])
        if np.any(t0 < t):
            base_F = hops.G[sel] @ hops.F_in[sel]
            scanner = CrossingScanner(self.model, sel.size, tangency=False)
            trk = _RootTracker(sel.size, hops.gamma_flat[sel], base_F=base_F, scanner=scanner,
                               seed_th=hs["th"][sel].copy(), seed_hk=hs["hk"][sel].copy())
            st = integrate_batch(self.model, 2, t0, hs["state"].take(sel), t, self.step,
                                 callbacks=[trk])
            if np.any(scanner.found):
                raise WellPreparedViolation(
                    "a hopped trajectory meets the crossing set again",
                    node=int(hops.idx[sel][np.flatnonzero(scanner.found)[0]]))
            hs["state"].put(sel, st)
            hs["th"][sel] = trk.th.prev
            hs["hk"][sel] = trk.hk.prev
            hs["caustic"][sel] |= trk.caustic
        hs["started"][sel] = True
        hs["t"] = float(t)
        caustic = hs["caustic"][sel].copy()
        if np.any(caustic):
            self._check_caustics(np.isin(np.arange(len(self.nodes)), hops.idx[sel][caustic]))
        out = (sel, hs["state"].take(sel), hs["th"][sel].copy(), hs["hk"][sel].copy(), caustic)
        self._hop_cache[key] = out
        return out

    def correction_field(self, t: float, flavor: str = "thawed", check_quotient: bool = True
                         ) -> IvrResult:
        """The transferred term at time t, without the sqrt(eps) factor."""
        m = self.model.m
        empty = IvrResult(np.zeros((m, self.x.size), complex), self.x,
                          {"t": float(t), "flavor": flavor, "hopped_nodes": 0})
        if self.model.n_modes == 1 or not np.any(self.active(1)):
            return empty
        hops = self._prepare_hops(float(t))
        if hops is None:
            return empty
        cont = self._continue_hops(t)
        if cont is None:
            return empty
        sel, st, root_th2, root_hk12, caustic = cont
        idx = hops.idx[sel]
        pol = np.einsum("nij,nj->ni", st.R, hops.pol[sel])
        phase = np.exp(1j * (hops.S_in[sel] + st.S) / self.eps)
        base = self.weight * self.coef[idx] * phase
        F12 = st.F @ hops.G[sel] @ hops.F_in[sel]
        if flavor == "thawed":
            A, B, C, D = (b[:, 0, 0] for b in blocks(st.F))
            g0 = hops.gamma_flat[sel]
            gam = (C + D * g0) / (A + B * g0)
            amp = base * hops.amp_th[sel] * hops.transfer[sel] / root_th2
        elif flavor == "frozen":
            gam = np.full(sel.size, 1j)
            a12 = hops.tau_eff[sel] * root_hk12
            if check_quotient:
                self._check_prefactor_forms(F12, a12, hops.tau_eff[sel])
            amp = base * a12
        else:
            raise InvalidInputError(f"unknown flavour {flavor!r}")
        amp = np.where(caustic, 0, amp)
        fld = sum_gaussians_1d(self.x, self.eps, st.z[:, 0], st.z[:, 1], gam, amp, pol)
        return IvrResult(fld, self.x, {"t": float(t), "flavor": flavor,
                                       "hopped_nodes": int(sel.size)})

    @staticmethod
    def _check_prefactor_forms(F12, a12, tau):
        """Both determinant-quotient forms of the transitional prefactor agree with a12."""
        A, B, C, D = (b[:, 0, 0] for b in blocks(F12))
        g12 = (C + 1j * D) / (A + 1j * B)
        q1 = (C - 1j * D - 1j * (A - 1j * B)) / (C - 1j * D - g12 * (A - 1j * B))
        q2 = (A + D + 1j * (C - B)) / (D + 1j * C - 1j * g12 * (A - 1j * B))
        if np.max(np.abs(q1 - q2)) > 1e-8 * max(1.0, np.max(np.abs(q1))):
            raise CausticError("transitional prefactor forms disagree")
        # |tau sqrt(q) det^{-1/2}(A + iB)| must equal |a12|
        alt = np.abs(tau) * np.sqrt(np.abs(q1)) / np.sqrt(np.abs(A + 1j * B))
        if np.max(np.abs(alt - np.abs(a12))) > 1e-8 * max(1.0, np.max(np.abs(a12))):
            raise CausticError("transitional prefactor inconsistent with the hopped flow")

    # ------------------------------------------------------------------
    def total_field(self, t: float, flavor: str = "thawed", correction: bool = True
                    ) -> IvrResult:
        tic = _time.perf_counter()
        fld = np.zeros((self.model.m, self.x.size), complex)
        for mode in range(1, self.model.n_modes + 1):
            if np.any(self.active(mode)):
                fld += self.mode_field(mode, t, flavor).field
        hopped = 0
        if correction and self.model.n_modes == 2:
            corr = self.correction_field(t, flavor)
            fld += math.sqrt(self.eps) * corr.field
            hopped = corr.meta["hopped_nodes"]
        meta = dict(self.meta)
        meta.update({"t": float(t), "flavor": flavor, "correction": bool(correction),
                     "hopped_nodes": hopped, "runtime_s": _time.perf_counter() - tic})
        return IvrResult(fld, self.x, meta)


# ----------------------------------------------------------------------------
# functional interface
# ----------------------------------------------------------------------------

@dataclass(frozen=True)
class IvrConfig:
    flavor: str
    include_correction: bool
    eps: float
    quadrature: QuadratureGrid
    t0: float
    t: float
    x: np.ndarray
    phi: np.ndarray
    polarization: object
    step: float = DEFAULT_STEP

    def __post_init__(self):
        if self.flavor not in ("thawed", "frozen"):
            raise InvalidInputError("flavor must be thawed or frozen")
        if self.t < self.t0:
            raise InvalidInputError("t must not precede t0")
        if self.quadrature.spacing > math.sqrt(self.eps) * (1 + 1e-12):
            raise InvalidInputError("quadrature spacing exceeds sqrt(eps)")


def _run(model, cfg: IvrConfig) -> IvrRun:
    return IvrRun(model, cfg.eps, cfg.x, cfg.phi, cfg.polarization, cfg.quadrature, cfg.t0,
                  cfg.step)


def ivr_mode(model: Model, cfg: IvrConfig, mode: int) -> IvrResult:
    return _run(model, cfg).mode_field(mode, cfg.t, cfg.flavor)


def ivr_correction(model: Model, cfg: IvrConfig, source_mode: int = 1) -> IvrResult:
    if source_mode != 1:
        raise InvalidInputError("only 1 -> 2 corrections are implemented")
    return _run(model, cfg).correction_field(cfg.t, cfg.flavor)


def propagate_initial_data(model: Model, cfg: IvrConfig) -> IvrResult:
    return _run(model, cfg).total_field(cfg.t, cfg.flavor, cfg.include_correction)
