"""One Gaussian wave packet through a single crossing, to order sqrt(eps).

The result is a short list of :class:`GaussianTerm`: the two adiabatic
packets and, after the hop time, the transferred packet on mode 2 (with its
sqrt(eps) factor already in ``scalar_amp``).  Optionally the same-mode
sqrt(eps) polynomial correction is added as extra terms.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

from .classical import DEFAULT_STEP, TrajectoryRecord, integrate_trajectory
from .errors import CollarError, InvalidInputError, WellPreparedViolation
from .hopping import F_TOL, crossing_params, detect_first_crossing, hop_continue, \
    transfer_gaussian_closed_form
from .model import Model
from .wavepacket import (BranchTracker, GaussianTerm, coherent_norm, evaluate_on_grid,
                         linear_forms_power, poly_add, propagate_width_batch, weyl_poly_apply)

COLLAR_FACTOR = 10.0


@dataclass
class SingleWpResult:
    terms: list
    labels: list
    eps: float
    t: float
    t_flat: float | None = None
    diagnostics: dict = field(default_factory=dict)

    def term(self, label: str) -> GaussianTerm | None:
        for lab, term in zip(self.labels, self.terms):
            if lab == label:
                return term
        return None

    def evaluate(self, x, labels=None, meta: dict | None = None) -> np.ndarray:
        """Sum of the selected terms on ``x``, shape ``(m, n)``.

        ``labels`` selects packets; correction terms follow the packet named
        after their last colon.
        """
        x = np.asarray(x, dtype=float)
        out = None
        for lab, term in zip(self.labels, self.terms):
            if labels is not None and lab not in labels and lab.split(":")[-1] not in labels:
                continue
            val = evaluate_on_grid(term, self.eps, x, meta=meta)
            out = val if out is None else out + val
        if out is None:
            m = self.terms[0].polarization.size if self.terms else 1
            out = np.zeros((m, x.size), dtype=complex)
        return out

    def to_json(self) -> str:
        def cx(a):
            a = np.asarray(a, dtype=complex)
            return np.stack([a.real, a.imag], axis=-1).tolist()

        rows = []
        for lab, t in zip(self.labels, self.terms):
            rows.append({"label": lab, "center": t.center.tolist(), "width": cx(t.width),
                         "amplitude": cx(t.scalar_amp), "phase": float(t.action_phase),
                         "polarization": cx(t.polarization),
                         "poly": None if t.poly is None else
                         [[list(k), cx(v)] for k, v in sorted(t.poly.items())]})
        return json.dumps({"eps": self.eps, "t": self.t, "t_flat": self.t_flat,
                           "terms": rows, "diagnostics": self.diagnostics}, indent=2)


def _det_roots(gamma0, F) -> tuple[np.ndarray, np.ndarray]:
    """Widths and continuous det^{1/2}(A + B Gamma0) along a sampled flow."""
    gam, det = propagate_width_batch(gamma0, F)
    tr = BranchTracker(seed=1.0)
    roots = np.array([tr.root(dv) for dv in det])
    return gam, roots


def _adiabatic_packet(model: Model, traj: TrajectoryRecord, gamma0, amp0, pol0,
                      phase0: float = 0.0) -> GaussianTerm:
    gam, roots = _det_roots(gamma0, traj.F)
    pol = traj.R[-1] @ pol0
    return GaussianTerm(traj.z[-1], gam[-1], amp0 / roots[-1], phase0 + traj.S[-1], pol)


def _generator_gradient(model: Model, t, z, mode, h=1e-5):
    z = np.asarray(z, dtype=float)
    out = []
    for j in range(z.size):
        e = np.zeros_like(z)
        e[j] = h
        out.append((model.adiabatic_generator(t, z + e, mode)
                    - model.adiabatic_generator(t, z - e, mode)) / (2 * h))
    return np.array(out)


def b1_terms(model: Model, traj: TrajectoryRecord, term: GaussianTerm, pol0, eps: float):
    """Same-mode sqrt(eps) correction applied to the adiabatic packet ``term``.

    Cubic part: ``-i int 1/6 d^3h(z_s)[F(s,t) Z]^3 ds``; transport part:
    ``-i int R(t) R(s)^* (grad H^adia(z_s) . F(s,t) Z) R(s) pol0 ds``, both
    by the trapezoid rule over the stored samples.  Returned terms carry the
    sqrt(eps) factor.
    """
    n = 2 * model.d
    Ft_inv = np.linalg.inv(traj.F[-1])
    ts = traj.t
    w = np.zeros(ts.size)
    if ts.size > 1:
        dt = np.diff(ts)
        w[:-1] += dt / 2
        w[1:] += dt / 2
    cubic: dict = {}
    U = np.zeros((n, model.m), dtype=complex)
    Rt = traj.R[-1]
    for i, (t, z) in enumerate(zip(ts, traj.z)):
        if w[i] == 0:
            continue
        Fst = traj.F[i] @ Ft_inv
        T = np.asarray(model.d3_h(t, z, traj.mode))
        for a in range(n):
            for b in range(n):
                for c in range(n):
                    if T[a, b, c] == 0:
                        continue
                    alpha = [0] * n
                    for k in (a, b, c):
                        alpha[k] += 1
                    cubic = poly_add(cubic, linear_forms_power(Fst, alpha),
                                     -1j * w[i] * T[a, b, c] / 6)
        if model.m > 1:
            dH = _generator_gradient(model, t, z, traj.mode)
            Rs = traj.R[i]
            vec = np.einsum("jab,b->ja", dH, Rs @ pol0)          # (n, m)
            vec = (Rt @ np.conj(Rs.T) @ vec.T).T
            U += -1j * w[i] * Fst.T @ vec
    se = math.sqrt(eps)
    out = []
    cubic = {k: v for k, v in cubic.items() if abs(v) > 0}
    if cubic:
        t1 = weyl_poly_apply(cubic, term)
        out.append(("b1:cubic", t1.with_(scalar_amp=t1.scalar_amp * se)))
    for k in range(n):
        if np.max(np.abs(U[k])) == 0:
            continue
        alpha = tuple(1 if j == k else 0 for j in range(n))
        tk = weyl_poly_apply({alpha: 1.0}, term)
        out.append((f"b1:transport{k}", tk.with_(scalar_amp=tk.scalar_amp * se, polarization=U[k])))
    return out


def slaved_terms(model: Model, t: float, term: GaussianTerm, mode: int, eps: float):
    """First-order projector correction ``sqrt(eps) Op(grad pi_l(z_t) . Z)`` on a mode packet.

    The mode-l packet is really ``Op(pi_l)`` applied to the polarised
    Gaussian; expanding the projector about the centre gives this linear term,
    which lies in the other eigenspace.
    """
    if model.m == 1:
        return []
    gp = np.asarray(model.grad_projector(t, term.center, mode))
    se = math.sqrt(eps)
    n = 2 * model.d
    out = []
    for k in range(n):
        v = gp[k] @ term.polarization
        if np.max(np.abs(v)) == 0:
            continue
        alpha = tuple(1 if j == k else 0 for j in range(n))
        tk = weyl_poly_apply({alpha: 1.0}, term)
        out.append((f"slaved{k}", tk.with_(scalar_amp=tk.scalar_amp * se, polarization=v)))
    return out


def single_wp_propagate(model: Model, eps: float, z0, V0, gamma0=None, t0: float = 0.0,
                        t_end: float = 1.0, step: float = DEFAULT_STEP, collar: float | None = None,
                        strict_collar: bool = False, include_b1: bool = False,
                        include_slaved: bool = True) -> SingleWpResult:
    """Propagate ``V0 * WP_z0(c e^{i Gamma0 y^2/2})`` to ``t_end``.

    Parameters
    ----------
    collar : float, optional
        Half-width of the excluded window around the hop time (default
        ``10 sqrt(eps)``).  Inside it the result is flagged, or rejected with
        ``strict_collar``.
    include_b1 : bool
        Add the same-mode sqrt(eps) polynomial correction.
    include_slaved : bool
        Add the linearised projector term of every packet (labels
        ``slaved*``).  Needed for O(eps) accuracy whenever the eigenvectors
        vary across the packet.
    """
    if eps <= 0:
        raise InvalidInputError("eps must be positive")
    if t_end < t0:
        raise InvalidInputError("t_end must not precede t0")
    z0 = model.check_z(z0)
    d = model.d
    gamma0 = 1j * np.eye(d) if gamma0 is None else np.atleast_2d(np.asarray(gamma0, complex))
    V0 = np.asarray(V0, dtype=complex).ravel()
    if V0.size != model.m:
        raise InvalidInputError(f"polarisation needs {model.m} components")
    if model.n_modes == 2 and abs(float(model.gap(t0, z0))) <= F_TOL:
        raise InvalidInputError("initial centre lies on the crossing set")
    amp0 = coherent_norm(gamma0)
    pis = model.projectors(t0, z0)
    terms, labels = [], []
    diag: dict = {"warnings": []}
    t_flat = None

    traj1 = integrate_trajectory(model, 1, t0, z0, t_end, step, transport=True)
    pol1 = pis[0] @ V0
    term1 = _adiabatic_packet(model, traj1, gamma0, amp0, pol1)
    terms.append(term1)
    labels.append("mode1")
    if include_b1:
        for lab, t in b1_terms(model, traj1, term1, pol1, eps):
            terms.append(t)
            labels.append(lab + ":mode1")
    diag["symplectic_defect"] = float(np.max(traj1.symplectic_defect()))

    if model.n_modes == 2:
        pol2 = pis[1] @ V0
        if np.linalg.norm(pol2) > 1e-13 * np.linalg.norm(V0):
            traj2 = integrate_trajectory(model, 2, t0, z0, t_end, step, transport=True)
            term2 = _adiabatic_packet(model, traj2, gamma0, amp0, pol2)
            terms.append(term2)
            labels.append("mode2")
            if include_b1:
                for lab, t in b1_terms(model, traj2, term2, pol2, eps):
                    terms.append(t)
                    labels.append(lab + ":mode2")

        f = model.gap(traj1.t, traj1.z)
        s = np.sign(f[np.abs(f) > F_TOL])
        changes = int(np.sum(s[1:] != s[:-1])) if s.size > 1 else 0
        if changes > 1:
            raise WellPreparedViolation("mode-1 trajectory crosses more than once", n=changes)
        hit = detect_first_crossing(model, 1, traj1)
        if hit is not None and np.linalg.norm(pol1) > 1e-13 * np.linalg.norm(V0):
            t_flat, zeta = hit
            ev = crossing_params(model, t_flat, zeta, 1)
            diag["event"] = ev.to_json()
            delta = COLLAR_FACTOR * math.sqrt(eps) if collar is None else float(collar)
            diag["collar"] = delta
            diag["in_collar"] = bool(abs(t_end - t_flat) < delta)
            if diag["in_collar"]:
                msg = f"t_end within {delta:.3g} of the hop time {t_flat:.6g}"
                if strict_collar:
                    raise CollarError(msg, t_flat=t_flat, t_end=t_end)
                diag["warnings"].append(msg)
            pre = integrate_trajectory(model, 1, t0, z0, t_flat, step, transport=True)
            incoming = _adiabatic_packet(model, pre, gamma0, amp0, pol1)
            moved = transfer_gaussian_closed_form(incoming, ev, model)
            post, s_off = hop_continue(model, ev, t_end, step, incoming.action_phase)
            gam, roots = _det_roots(moved.width, post.F)
            pol = post.R[-1] @ moved.polarization
            term12 = GaussianTerm(post.z[-1], gam[-1],
                                  math.sqrt(eps) * moved.scalar_amp / roots[-1],
                                  s_off + post.S[-1], pol)
            terms.append(term12)
            labels.append("transfer")
            pi2 = model.projector(t_end, post.z[-1], 2)
            diag["transfer_range_defect"] = float(np.linalg.norm(pi2 @ pol - pol))
    if include_slaved and model.n_modes == 2:
        for lab, term in list(zip(labels, terms)):
            if lab in ("mode1", "mode2", "transfer"):
                mode = 1 if lab == "mode1" else 2
                for sl, st in slaved_terms(model, t_end, term, mode, eps):
                    terms.append(st)
                    labels.append(f"{sl}:{lab}")
    return SingleWpResult(terms, labels, float(eps), float(t_end), t_flat, diag)
