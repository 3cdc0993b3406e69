import numpy as np
import pytest
from hypothesis import given, strategies as st
from hypothesis.extra import numpy as hnp

from levicore import calc, examples, hypersurface


def _herm(a):
    return a + a.conj().T


finite = st.floats(-3, 3, allow_nan=False, allow_infinity=False)
small_cplx = hnp.arrays(np.complex128, (2,), elements=st.complex_numbers(max_magnitude=1.0))


def test_ball_gradient_and_hessian():
    f = examples.ball().f
    val, g, B = calc.jet_data(f, np.array([1.0, 0.0], complex))
    assert val == pytest.approx(0.0)
    assert np.allclose(g, [1.0, 0.0])
    assert np.allclose(B, np.eye(2))


@pytest.mark.parametrize("name", ["ball", "ellipsoid", "quartic", "worm", "dimple"])
def test_jet_matches_finite_differences(name):
    f = examples.make_domain(name).f
    pts = hypersurface.sample_boundary(f, "random", 20, seed=7).positions()
    _, g, B = calc.jet_data(f, pts)
    g_fd = calc.grad10_fd(f, pts)
    B_fd = calc.hess_mixed_fd(f, pts)
    assert np.max(np.abs(g - g_fd) / (1 + np.abs(g))) < 1e-6
    assert np.max(np.abs(B - B_fd) / (1 + np.abs(B))) < 1e-5


@given(small_cplx)
def test_mixed_hessian_is_hermitian(p):
    f = examples.worm().f
    B = calc.hess_mixed(f, p + np.array([1.2, 0.3]))
    assert np.allclose(B, B.conj().T, atol=1e-10)


def test_log_of_nonpositive_real_raises():
    f = examples.worm().f
    with pytest.raises(calc.EvaluationError):
        calc.evaluate(f, np.array([0.0, 0.0], complex))


def test_eig_herm_orders_eigenvalues():
    vals, vecs = calc.eig_herm(np.diag([3.0, 1.0]).astype(complex))
    assert np.allclose(vals, [1.0, 3.0])
    assert abs(abs(vecs[1, 0]) - 1) < 1e-12


def test_sup_ratio_simple():
    assert calc.sup_ratio(np.diag([1.0, 0.0]), np.diag([2.0, 1.0])) == pytest.approx(0.5)


def test_sup_ratio_infinite_on_kernel_of_denominator():
    assert calc.sup_ratio(np.diag([1.0, 1.0]), np.diag([1.0, 0.0])) == np.inf


def test_sup_ratio_rejects_indefinite_denominator():
    with pytest.raises(calc.InvalidFormError):
        calc.sup_ratio(np.eye(2), np.diag([1.0, -1.0]))


@given(hnp.arrays(np.complex128, (3, 3), elements=st.complex_numbers(max_magnitude=2.0)),
       st.floats(0.1, 5.0))
def test_sup_ratio_scales_linearly(a, t):
    A = a @ a.conj().T
    B = A + np.eye(3)
    r = calc.sup_ratio(A, B)
    assert calc.sup_ratio(t * A, B) == pytest.approx(t * r, rel=1e-6, abs=1e-9)
    assert 0 <= r < 1


@given(hnp.arrays(np.complex128, (4, 2), elements=st.complex_numbers(max_magnitude=1.0)))
def test_principal_angles_of_subspace_with_itself(a):
    if np.linalg.matrix_rank(a, tol=1e-6) < 2 or np.linalg.cond(a) > 1e6:
        return
    ang = calc.principal_angles(a, a @ np.array([[1, 2], [0, 1]]))
    assert np.max(ang) < 1e-6


def test_kernel_basis_rank():
    H = np.diag([0.0, 1e-14, 2.0]).astype(complex)
    K = calc.kernel_basis(H, 1e-6)
    assert K.shape == (3, 2)
    assert np.allclose(K.conj().T @ K, np.eye(2))


def test_kernel_basis_rejects_negative_when_psd_required():
    with pytest.raises(calc.NotSemidefiniteError):
        calc.kernel_basis(np.diag([-1.0, 1.0]).astype(complex), 1e-6)
