import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from sfde_lab.grid import (
    DirichletLaplacian,
    Domain1D,
    DomainMismatch,
    GridFunction,
    apply_laplacian,
    from_sine_coefficients,
    galerkin_project,
    h1_norm,
    h_minus1_inner,
    h_minus1_norm,
    inv_neg_laplacian,
    l2_inner,
    l2_norm,
    lp_norm,
    operator_certificate,
    random_selection,
    sine_coefficients,
    smooth_initial,
    solve_resolvent,
    subgradient_certificate,
    subgradient_check,
    varphi_energy,
)

N = 31
vecs = arrays(np.float64, N, elements=st.floats(-10, 10, allow_nan=False))


@pytest.fixture(scope="module")
def L():
    return DirichletLaplacian(Domain1D(N))


def test_domain_validation():
    with pytest.raises(ValueError):
        Domain1D(0)
    with pytest.raises(ValueError):
        Domain1D(5, a=1.0, b=1.0)
    d = Domain1D(3, a=-1.0, b=1.0)
    assert d.h == 0.5
    np.testing.assert_array_equal(d.x, [-0.5, 0.0, 0.5])


def test_grid_function_shape_and_domain(tmp_path):
    d = Domain1D(4)
    with pytest.raises(DomainMismatch):
        GridFunction(d, np.zeros(5))
    with pytest.raises(ValueError):
        GridFunction(d, [0, 0, np.inf, 0])
    g = GridFunction.from_function(d, lambda x: x ** 2)
    g.to_csv(tmp_path / "g.csv")
    back = GridFunction.from_csv(tmp_path / "g.csv", d)
    np.testing.assert_array_equal(back.values, g.values)
    with pytest.raises(DomainMismatch):
        DirichletLaplacian(Domain1D(5)).values(g)


def test_eigenvalues_closed_form(L):
    h = 1.0 / (N + 1)
    assert L.eigenvalues[0] == pytest.approx(4 / h ** 2 * np.sin(np.pi * h / 2) ** 2, rel=1e-15)
    for k in (1, 7, N):
        v = L.eigenvector(k)
        np.testing.assert_allclose(-apply_laplacian(L, v), L.eigenvalues[k - 1] * v,
                                   atol=1e-10 * L.eigenvalues[k - 1])
        assert l2_norm(L, v) == pytest.approx(1.0, rel=1e-14)
    with pytest.raises(ValueError):
        L.eigenvector(N + 1)


def test_sine_modes_orthonormal(L):
    V = np.array([L.eigenvector(k) for k in range(1, N + 1)])
    G = L.h * V @ V.T
    np.testing.assert_allclose(G, np.eye(N), atol=1e-13)


def test_h_minus1_norm_of_mode(L):
    # ||e_k||^2_{H^-1} = 1/lambda_k for a unit mode
    v = L.eigenvector(3)
    assert h_minus1_norm(L, v) ** 2 == pytest.approx(1.0 / L.eigenvalues[2], rel=1e-12)


def test_duality_on_mode(L):
    v = L.eigenvector(2)
    assert h_minus1_norm(L, -apply_laplacian(L, v)) == pytest.approx(h1_norm(L, v), rel=1e-12)


def test_resolvent_lam_zero_is_identity(L, rng):
    f = rng.standard_normal(N)
    np.testing.assert_array_equal(solve_resolvent(L, 0.0, f), f)
    with pytest.raises(ValueError):
        solve_resolvent(L, -1.0, f)


def test_resolvent_on_mode(L):
    v = L.eigenvector(5)
    lam = 0.01
    np.testing.assert_allclose(solve_resolvent(L, lam, v), v / (1 + lam * L.eigenvalues[4]), atol=1e-14)


def test_lp_norm_rejects_small_p(L):
    with pytest.raises(ValueError):
        lp_norm(L, np.ones(N), 0.5)


def test_varphi_energy_mass(L):
    assert varphi_energy(L, 0.0, -np.ones(N)) == pytest.approx(N * L.h)
    assert varphi_energy(L, 1.0, 2 * np.ones(N)) == pytest.approx(2 * N * L.h)


def test_galerkin_projection(L, rng):
    u = rng.standard_normal(N)
    p = galerkin_project(L, u, 4)
    c = sine_coefficients(L, p)
    assert np.max(np.abs(c[4:])) < 1e-12
    np.testing.assert_allclose(galerkin_project(L, p, 4), p, atol=1e-12)
    np.testing.assert_array_equal(galerkin_project(L, u, N), u)
    with pytest.raises(ValueError):
        galerkin_project(L, u, 0)


def test_sine_coefficients_of_mode(L):
    c = sine_coefficients(L, L.eigenvector(6))
    expected = np.zeros(N)
    expected[5] = 1.0
    np.testing.assert_allclose(c, expected, atol=1e-13)


def test_smooth_initial_is_resolvent(L, rng):
    x0 = rng.standard_normal(N)
    np.testing.assert_allclose(smooth_initial(L, x0, 10), solve_resolvent(L, 0.1, x0))


def test_operator_certificate_passes():
    for n in (15, 127):
        rep = operator_certificate(DirichletLaplacian(Domain1D(n)), seed=1)
        assert rep.passed, [c.to_dict() for c in rep.failures()]
        assert set(rep.checks) >= {"eigen_identity", "duality", "resolvent_contraction_h_minus1",
                                   "resolvent_contraction_l1", "resolvent_contraction_l2"}


@pytest.mark.parametrize("m", [0.0, 0.5])
def test_subgradient_certificate_passes(m):
    rep = subgradient_certificate(DirichletLaplacian(Domain1D(127)), m, 100, seed=3)
    assert rep.passed


def test_subgradient_precondition_reported(L):
    u = np.ones(N)
    w = np.zeros(N)  # not a selection of Sgn(1) = {1}
    rep = subgradient_check(L, 0.0, u, w, [np.zeros(N)])
    assert not rep.passed
    assert rep.checks["precondition_selection"].worst_point["node"] == 0


def test_random_selection_in_interval(rng):
    u = np.array([0.0, 1.0, -2.0, 0.0])
    w = random_selection(0.0, u, rng)
    assert w[1] == 1.0 and w[2] == -1.0
    assert np.all(np.abs(w) <= 1.0)


def test_wrong_length_rejected(L):
    with pytest.raises(DomainMismatch):
        l2_norm(L, np.ones(N + 1))


# -- properties -----------------------------------------------------------------

@given(vecs, vecs)
def test_h_minus1_inner_symmetric(u, v):
    L = DirichletLaplacian(Domain1D(N))
    a, b = h_minus1_inner(L, u, v), h_minus1_inner(L, v, u)
    assert a == pytest.approx(b, rel=1e-9, abs=1e-9)


@given(vecs)
def test_inverse_laplacian_round_trip(u):
    L = DirichletLaplacian(Domain1D(N))
    np.testing.assert_allclose(-apply_laplacian(L, inv_neg_laplacian(L, u)), u, atol=1e-8 * (1 + np.abs(u).max()))


@given(vecs, st.floats(1e-4, 10.0))
def test_resolvent_contracts_every_norm(u, lam):
    L = DirichletLaplacian(Domain1D(N))
    Ju = solve_resolvent(L, lam, u)
    tol = 1e-12 * (1 + np.abs(u).max())
    assert h_minus1_norm(L, Ju) <= h_minus1_norm(L, u) + tol
    for p in (1.0, 1.5, 2.0, 4.0):
        assert lp_norm(L, Ju, p) <= lp_norm(L, u, p) + tol


@given(vecs)
def test_sine_transform_isometry(u):
    L = DirichletLaplacian(Domain1D(N))
    c = sine_coefficients(L, u)
    assert np.dot(c, c) == pytest.approx(l2_inner(L, u, u), rel=1e-10, abs=1e-12)
    np.testing.assert_allclose(from_sine_coefficients(L, c), u, atol=1e-10)


@given(vecs)
def test_poincare_inequality(u):
    # ||u||_{H^-1} <= ||u||_{L2} / sqrt(lambda_1) <= ||u||_{H^1_0} / lambda_1
    L = DirichletLaplacian(Domain1D(N))
    lam1 = L.eigenvalues[0]
    assert h_minus1_norm(L, u) <= l2_norm(L, u) / np.sqrt(lam1) * (1 + 1e-12) + 1e-14
    assert l2_norm(L, u) <= h1_norm(L, u) / np.sqrt(lam1) * (1 + 1e-12) + 1e-14
