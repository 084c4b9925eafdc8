import json

import numpy as np
import pytest

from hkcross.errors import CollarError, InvalidInputError
from hkcross.model import ScalarHarmonic, ShiftedPhaseCrossing
from hkcross.refsolver import GridState, grid_x, strang_evolve
from hkcross.singlewp import single_wp_propagate
from hkcross.wavepacket import evaluate_on_grid, l2_norm

from helpers import coherent, harmonic_exact, slope

X = grid_x(-4, 4, 4096)
V0 = np.array([1.0, np.exp(0.5j)]) / np.sqrt(2)


def test_harmonic_closed_form():
    eps = 1 / 64
    r = single_wp_propagate(ScalarHarmonic(1.0), eps, (1.0, 0.0), [1.0], t_end=np.pi / 2)
    got = r.evaluate(X)[0]
    assert l2_norm(got - harmonic_exact(X, eps, (1.0, 0.0), np.pi / 2), X) <= 1e-8
    assert r.labels == ["mode1"]
    assert r.diagnostics["symplectic_defect"] < 1e-10


def test_theta_zero_no_transfer():
    r = single_wp_propagate(ShiftedPhaseCrossing(1.0, 0.0), 1 / 64, (-1.0, 0.0), [1.0, 1.0],
                            t_end=2.0)
    assert r.t_flat == pytest.approx(1.0, abs=1e-9)
    assert np.allclose(r.term("transfer").polarization, 0)


def test_theta_zero_characteristics():
    eps, k, t = 1 / 64, 1.0, 2.0
    V = np.array([1.0, 1.0]) / np.sqrt(2)
    r = single_wp_propagate(ShiftedPhaseCrossing(k, 0.0), eps, (-1.0, 0.0), V, t_end=t)
    exact = V[:, None] * (coherent(X - t, eps, (-1.0, 0.0))
                          * np.exp(-1j * k * (X * t - 0.5 * t * t) / eps))[None]
    assert l2_norm(r.evaluate(X) - exact, X) <= 1e-8


def test_crossing_terms_and_masses():
    eps = 1 / 256
    r = single_wp_propagate(ShiftedPhaseCrossing(1.0, 0.5), eps, (-1.0, 0.0), V0, t_end=2.0)
    assert "transfer" in r.labels and "mode2" not in r.labels
    assert r.diagnostics["transfer_range_defect"] < 1e-12
    assert not r.diagnostics["in_collar"]
    m2 = l2_norm(r.evaluate(X, labels=["transfer"]), X) ** 2
    # transferred mass is of order eps and below the total
    assert 0 < m2 < 1.0
    assert m2 / eps == pytest.approx(0.25 * np.pi * 0.5 ** 2, rel=0.1)


def test_collar():
    eps = 1 / 64
    model = ShiftedPhaseCrossing(1.0, 0.5)
    r = single_wp_propagate(model, eps, (-1.0, 0.0), V0, t_end=1.5)
    assert r.diagnostics["in_collar"] and r.diagnostics["warnings"]
    with pytest.raises(CollarError):
        single_wp_propagate(model, eps, (-1.0, 0.0), V0, t_end=1.5, strict_collar=True)
    r = single_wp_propagate(model, eps, (-1.0, 0.0), V0, t_end=1.5, collar=0.1, strict_collar=True)
    assert not r.diagnostics["in_collar"]


def test_json_roundtrip():
    r = single_wp_propagate(ShiftedPhaseCrossing(1.0, 0.5), 1 / 64, (-1.0, 0.0), V0, t_end=2.5)
    d = json.loads(r.to_json())
    assert [t["label"] for t in d["terms"]] == r.labels
    assert d["t_flat"] == pytest.approx(1.0)
    assert d["diagnostics"]["event"]["mu_flat"] == pytest.approx(0.5)


def test_input_validation():
    m = ShiftedPhaseCrossing(1.0, 0.5)
    with pytest.raises(InvalidInputError):
        single_wp_propagate(m, 0.0, (-1.0, 0.0), V0)
    with pytest.raises(InvalidInputError):
        single_wp_propagate(m, 0.01, (-1.0, 0.0), [1.0])
    with pytest.raises(InvalidInputError):
        single_wp_propagate(m, 0.01, (0.0, 0.0), V0)
    with pytest.raises(InvalidInputError):
        single_wp_propagate(m, 0.01, (-1.0, 0.0), V0, t0=1.0, t_end=0.5)


def test_cubic_correction_rate():
    model = ScalarHarmonic(1.0, 0.3, 0.0)
    eps_list = [1 / 64, 1 / 128, 1 / 256]
    plain, corrected = [], []
    for eps in eps_list:
        ref = strang_evolve(model, GridState(-4, 4, coherent(X, eps, (0.5, 0.0)), eps), 1.0).psi[0]
        r = single_wp_propagate(model, eps, (0.5, 0.0), [1.0], t_end=1.0, include_b1=True)
        assert "b1:cubic:mode1" in r.labels
        plain.append(l2_norm(evaluate_on_grid(r.term("mode1"), eps, X)[0] - ref, X))
        corrected.append(l2_norm(r.evaluate(X)[0] - ref, X))
    assert slope(eps_list, plain) == pytest.approx(0.5, abs=0.1)
    assert slope(eps_list, corrected) == pytest.approx(1.0, abs=0.1)
