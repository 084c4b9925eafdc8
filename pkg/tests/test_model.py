import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from hkcross.errors import InvalidInputError
from hkcross.model import (MatrixPotentialSchrodinger, Model, ModelSpec, ScalarHarmonic,
                           ShiftedPhaseCrossing, build_model, crossing_coupling_data,
                           eigendecompose, poisson, symplectic_j)

coord = st.floats(-3, 3, allow_nan=False)


class FdOnly(Model):
    """Wraps a model and hides its analytic derivatives."""

    def __init__(self, inner):
        self.inner = inner
        self.d, self.m = inner.d, inner.m

    def symbol(self, t, z):
        return self.inner.symbol(t, z)

    def eigenvalues(self, t, z):
        return self.inner.eigenvalues(t, z)

    def projectors(self, t, z):
        return self.inner.projectors(t, z)


def test_symbol_example():
    H0, H1 = ShiftedPhaseCrossing(1.0, 0.0).symbol(0.0, [2.0, 3.0])
    assert np.allclose(H0, [[3, 2], [2, 3]])
    assert np.allclose(H1, 0)


def test_eigen_example():
    m = ShiftedPhaseCrossing(1.0, 0.0)
    z = [1.0, 0.0]
    assert np.allclose(m.eigenvalues(0, z), [1, -1])
    assert np.allclose(m.projector(0, z, 1), 0.5 * np.ones((2, 2)))
    assert m.gap(0, z) == pytest.approx(1.0)
    assert m.gap(0, [0.0, 0.7]) == pytest.approx(0.0)


def test_symplectic_j():
    J = symplectic_j(1)
    assert np.array_equal(J, [[0, 1], [-1, 0]])
    assert np.array_equal(J @ J, -np.eye(2))


@pytest.mark.parametrize("model", [ShiftedPhaseCrossing(1.0, 0.5),
                                   MatrixPotentialSchrodinger(1.0, 0.5, 1.0, 0.2)])
@settings(max_examples=25, deadline=None)
@given(x=coord, xi=coord)
def test_projector_identities(model, x, xi):
    z = np.array([x, xi])
    P = model.projectors(0.0, z)
    H0, _ = model.symbol(0.0, z)
    h = model.eigenvalues(0.0, z)
    assert np.allclose(P[0] @ P[0], P[0], atol=1e-12)
    assert np.allclose(P[0] @ P[1], 0, atol=1e-12)
    assert np.allclose(P[0] + P[1], np.eye(2), atol=1e-12)
    assert np.allclose(P[0], P[0].conj().T, atol=1e-12)
    assert np.allclose(h[0] * P[0] + h[1] * P[1], H0, atol=1e-12)


@pytest.mark.parametrize("model", [ShiftedPhaseCrossing(1.3, 0.5),
                                   MatrixPotentialSchrodinger(0.8, 0.7, 1.2, 0.3),
                                   ScalarHarmonic(1.0, 0.1, 0.05)])
def test_analytic_derivatives_match_fd(model):
    fd = FdOnly(model)
    rng = np.random.default_rng(3)
    z = rng.uniform(-1.5, 1.5, size=(5, 2))
    for mode in range(1, model.n_modes + 1):
        assert np.allclose(model.grad_h(0, z, mode), fd.grad_h(0, z, mode), atol=1e-6)
        assert np.allclose(model.hess_h(0, z, mode), fd.hess_h(0, z, mode), atol=1e-4)
        assert np.allclose(model.grad_projector(0, z, mode), fd.grad_projector(0, z, mode),
                           atol=1e-6)
    assert np.allclose(model.grad_H0(0, z), fd.grad_H0(0, z), atol=1e-6)


def test_generator_closed_form_matches_general_formula():
    m = ShiftedPhaseCrossing(1.0, 0.5)
    z = np.array([[-0.7, 0.3], [0.4, -1.0]])
    for mode in (1, 2):
        general = Model.adiabatic_generator(m, 0.0, z, mode)
        assert np.allclose(m.adiabatic_generator(0.0, z, mode), general, atol=1e-12)
        assert np.allclose(general, np.conj(np.swapaxes(general, -1, -2)), atol=1e-12)


def test_mu_flat_model_a():
    m = ShiftedPhaseCrossing(1.0, 0.5)
    z = np.random.default_rng(0).normal(size=(7, 2))
    # with the half-gap convention mu = k/2
    assert np.allclose(m.mu_flat(0, z), 0.5)
    gv = np.array([0.0, 1.0])
    assert poisson(gv, m.grad_gap(0, z[0])) == pytest.approx(1.0)


def test_w1_scales_with_theta():
    z = np.array([0.0, 0.0])
    w = [np.linalg.norm(ShiftedPhaseCrossing(1.0, th).coupling_w1(0, z)) for th in (0.0, 0.5, 1.0)]
    assert w[0] < 1e-14
    assert w[1] > 0
    assert w[2] / w[1] == pytest.approx(2.0, rel=1e-10)
    # the transfer term maps mode 2 into mode 1
    W = ShiftedPhaseCrossing(1.0, 0.5).coupling_w1(0, z)
    P = ShiftedPhaseCrossing(1.0, 0.5).projectors(0, z)
    assert np.allclose(P[0] @ W @ P[1], W)


def test_eigendecompose_records():
    m = ShiftedPhaseCrossing(1.0, 0.5)
    loc = eigendecompose(m, 0.0, [0.5, 0.2])
    assert loc.h1 == pytest.approx(0.7) and loc.h2 == pytest.approx(-0.3)
    assert loc.f == pytest.approx(0.5) and loc.v == pytest.approx(0.2)
    cd = crossing_coupling_data(m, 0.0, [0.0, 0.2])
    assert cd.dtf_plus_bracket == pytest.approx(1.0)
    assert np.allclose(cd.grad_f_J, [0.0, -1.0])


def test_spec_roundtrip_and_errors():
    for m in (ShiftedPhaseCrossing(2.0, 0.1), MatrixPotentialSchrodinger(), ScalarHarmonic(2.0)):
        assert type(build_model(m.spec)) is type(m)
        assert build_model(m.spec).spec == m.spec
    assert ModelSpec("A").kind == "shifted-phase-crossing"
    with pytest.raises(InvalidInputError):
        ModelSpec("nope").build()
    with pytest.raises(InvalidInputError):
        ModelSpec("A", {"bogus": 1}).build()
    with pytest.raises(InvalidInputError):
        ModelSpec("C", m=2)
    with pytest.raises(InvalidInputError):
        ShiftedPhaseCrossing(k=0.0)
    with pytest.raises(InvalidInputError):
        ShiftedPhaseCrossing().check_z([1.0, 2.0, 3.0])
