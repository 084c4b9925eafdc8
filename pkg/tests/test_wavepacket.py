import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from hkcross.errors import BranchError, CausticError, InvalidInputError, UnsupportedDegreeError
from hkcross.wavepacket import (BranchTracker, GaussianTerm, coherent_norm, coherent_state,
                                evaluate_on_grid, hk_prefactor, is_siegel, l2_norm,
                                linear_forms_power, poly_eval, propagate_width, sigma_k_norm,
                                sum_gaussians_1d, weyl_poly_apply)


def rot(t):
    return np.array([[np.cos(t), np.sin(t)], [-np.sin(t), np.cos(t)]])


def spectral_d(f, x):
    k = 2 * np.pi * np.fft.fftfreq(x.size, d=x[1] - x[0])
    return np.fft.ifft(1j * k * np.fft.fft(f))


def test_siegel():
    assert is_siegel(1j)
    assert is_siegel(-1 + 1j)
    assert not is_siegel(1.0 + 0j)
    assert not is_siegel(-1j)
    assert not is_siegel(np.array([[1j, 1], [0, 1j]]))


@pytest.mark.parametrize("t", [0.3, 1.0, 2.5])
def test_width_fixed_point_under_rotation(t):
    g, a = propagate_width(1j, rot(t))
    assert complex(g[0, 0]) == pytest.approx(1j)


def test_shear_width():
    k = 0.7
    g, _ = propagate_width(1j, np.array([[1.0, 0.0], [-k, 1.0]]))
    assert complex(g[0, 0]) == pytest.approx(-k + 1j)


def test_hk_prefactor_continuous_on_rotation():
    br = BranchTracker(seed=1.0)
    for t in np.linspace(0, 3 * np.pi, 400):
        a = hk_prefactor(rot(t), br)
        assert complex(a) == pytest.approx(np.exp(-0.5j * t), abs=1e-12)
        assert abs(a) == pytest.approx(1.0)


def test_branch_tracker_jump_and_caustic():
    br = BranchTracker(seed=1.0)
    br.root(1.0)
    with pytest.raises(BranchError):
        br.root(-1.0)
    with pytest.raises(CausticError):
        propagate_width(1j, np.array([[0.0, 0.0], [0.0, 1.0]]))


def test_coherent_value_and_norm():
    eps = 1 / 64
    x = np.linspace(-3, 3, 4001)
    g = evaluate_on_grid(coherent_state([0.0, 0.0]), eps, x)[0]
    assert g[2000] == pytest.approx(eps ** -0.25 * np.pi ** -0.25)
    assert l2_norm(g, x) == pytest.approx(1.0, abs=1e-10)
    assert sigma_k_norm(g, x, eps, 1) == pytest.approx(1.0, abs=1e-8)
    assert l2_norm(x * g, x) ** 2 == pytest.approx(eps / 2, rel=1e-8)


@settings(max_examples=20, deadline=None)
@given(gr=st.floats(-1, 1), gi=st.floats(0.3, 2), q=st.floats(-1, 1), p=st.floats(-1, 1))
def test_norm_matches_coherent_norm(gr, gi, q, p):
    eps = 0.01
    gam = complex(gr, gi)
    term = GaussianTerm([q, p], gam, coherent_norm(gam))
    x = np.linspace(-4, 4, 8001)
    assert l2_norm(evaluate_on_grid(term, eps, x), x) == pytest.approx(1.0, rel=1e-8)


def test_sum_gaussians_matches_direct():
    eps = 0.02
    x = np.linspace(-3, 3, 3001)
    rng = np.random.default_rng(1)
    n = 40
    q, p = rng.uniform(-1, 1, n), rng.uniform(-1, 1, n)
    gam = rng.uniform(-0.5, 0.5, n) + 1j * rng.uniform(0.5, 1.5, n)
    amp = rng.normal(size=n) + 1j * rng.normal(size=n)
    pol = rng.normal(size=(n, 2)) + 0j
    fast = sum_gaussians_1d(x, eps, q, p, gam, amp, pol, chunk=7)
    slow = sum(evaluate_on_grid(GaussianTerm([q[i], p[i]], gam[i], amp[i], 0.0, pol[i]), eps, x)
               for i in range(n))
    assert np.max(np.abs(fast - slow)) < 1e-10 * np.max(np.abs(slow))


def test_weyl_xi_on_gaussian():
    term = coherent_state([0.0, 0.0])
    out = weyl_poly_apply({(0, 1): 1.0}, term)
    assert out.poly == {(1,): 1j}


@pytest.mark.parametrize("P,op", [
    ({(1, 1): 1.0}, "xD"),
    ({(0, 2): 1.0}, "DD"),
    ({(2, 1): 1.0}, "xxD"),
    ({(0, 3): 1.0, (1, 0): 0.5}, "DDD+x/2"),
])
def test_weyl_action_matches_numeric(P, op):
    # eps = 1 and centre 0, so y = x and eta = -i d/dx
    x = np.linspace(-20, 20, 2 ** 12, endpoint=False)
    term = GaussianTerm([0.0, 0.0], -0.3 + 0.8j, 1.0, poly={(0,): 1.0, (1,): 0.4})
    f = evaluate_on_grid(term, 1.0, x)[0]

    def D(u):
        return -1j * spectral_d(u, x)

    ref = {"xD": 0.5 * (x * D(f) + D(x * f)),
           "DD": D(D(f)),
           "xxD": 0.5 * (x * x * D(f) + D(x * x * f)),
           "DDD+x/2": D(D(D(f))) + 0.5 * x * f}[op]
    got = evaluate_on_grid(weyl_poly_apply(P, term), 1.0, x)[0]
    assert np.max(np.abs(got - ref)) < 1e-8 * np.max(np.abs(ref))


def test_weyl_degree_limit():
    term = coherent_state([0.0, 0.0])
    with pytest.raises(UnsupportedDegreeError):
        weyl_poly_apply({(4, 0): 1.0}, term)
    with pytest.raises(InvalidInputError):
        weyl_poly_apply({(1, 0, 0): 1.0}, term)


def test_linear_forms_power():
    F = np.array([[1.0, 2.0], [0.0, 3.0]])
    P = linear_forms_power(F, (2, 1))
    y = np.array([[0.3], [-0.7]])
    a, b = F @ y[:, 0]
    assert poly_eval(P, y)[0] == pytest.approx(a * a * b)


def test_evaluate_rejects_bad_eps():
    with pytest.raises(InvalidInputError):
        evaluate_on_grid(coherent_state([0.0, 0.0]), 0.0, np.linspace(-1, 1, 10))
