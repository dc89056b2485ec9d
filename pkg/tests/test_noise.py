import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from sfde_lab.grid import Domain1D, DomainMismatch
from sfde_lab.noise import (
    Additive,
    GeneralLipschitz,
    LinearMultiplicative,
    WienerPath,
    apply_B,
    coarsen,
    hs_norm_sq,
    n_modes,
    path_for,
    path_seed,
    sample_path,
)


def test_sample_path_reproducible():
    a = sample_path(7, 1e-3, 200, 2)
    b = sample_path(7, 1e-3, 200, 2)
    assert a.same_as(b)
    assert not a.same_as(sample_path(8, 1e-3, 200, 2))
    np.testing.assert_array_equal(a.values[0], [0.0, 0.0])


def test_sample_path_validation():
    with pytest.raises(ValueError):
        sample_path(0, 0.0, 10, 1)
    with pytest.raises(ValueError):
        sample_path(0, 1e-3, 0, 1)
    with pytest.raises(ValueError):
        sample_path(0, 1e-3, 10, -1)
    with pytest.raises(ValueError):
        WienerPath(0, 1e-3, np.zeros(5))


def test_path_values_read_only():
    p = sample_path(1, 1e-2, 10, 1)
    with pytest.raises(ValueError):
        p.values[1, 0] = 3.0


def test_increment_variance():
    p = sample_path(3, 1e-3, 200_000, 1)
    assert np.var(p.increments) == pytest.approx(1e-3, rel=0.02)
    assert p.T == pytest.approx(200.0)


def test_path_seed_distinct_and_stable():
    seeds = [path_seed(2024, i) for i in range(100)]
    assert len(set(seeds)) == 100
    assert seeds == [path_seed(2024, i) for i in range(100)]
    assert all(0 <= s < 2 ** 63 for s in seeds)


def test_coarsen_sums_increments():
    p = sample_path(5, 1e-3, 120, 2)
    c = coarsen(p, 4)
    np.testing.assert_allclose(c.increments, p.increments.reshape(30, 4, 2).sum(axis=1), atol=1e-15)
    assert c.dt_fine == pytest.approx(4e-3)
    assert coarsen(p, 1) is p
    with pytest.raises(ValueError):
        coarsen(p, 7)


@given(st.sampled_from([(2, 3), (3, 2), (2, 2), (4, 5), (1, 6)]))
def test_coarsen_composition_bitwise(factors):
    a, b = factors
    p = sample_path(11, 1e-4, 240 * 5, 3)
    if p.n_steps % (a * b):
        return
    twice = coarsen(coarsen(p, a), b)
    once = coarsen(p, a * b)
    np.testing.assert_array_equal(twice.values, once.values)


def test_path_for_requires_multiple():
    p = sample_path(0, 1e-3, 100, 1)
    assert path_for(p, 5e-3).n_steps == 20
    with pytest.raises(ValueError):
        path_for(p, 1.5e-3)


def test_save_load_and_csv(tmp_path):
    p = sample_path(9, 1e-2, 8, 2)
    p.save(tmp_path / "p.npz")
    q = WienerPath.load(tmp_path / "p.npz")
    assert p.same_as(q)
    p.to_csv(tmp_path / "p.csv")
    lines = (tmp_path / "p.csv").read_text().splitlines()
    assert lines[1] == "step,dbeta_1,dbeta_2"
    assert len(lines) == 2 + 8


def test_additive_ignores_state():
    d = Domain1D(5)
    B = Additive(d, [np.ones(5), np.arange(5.0)])
    inc = B.apply(0.0, np.full(5, 100.0), [0.5, 2.0])
    np.testing.assert_allclose(inc, 0.5 + 2.0 * np.arange(5.0))
    assert B.lipschitz == 0.0
    with pytest.raises(DomainMismatch):
        Additive(d, np.ones(6))
    with pytest.raises(ValueError):
        B.apply(0.0, np.zeros(5), [1.0])


def test_linear_multiplicative_apply_and_zero_fixed_point():
    d = Domain1D(7)
    B = LinearMultiplicative(d, [np.ones(7)])
    X = np.linspace(-1, 1, 7)
    np.testing.assert_allclose(B.apply(0.0, X, [0.3]), 0.3 * X)
    np.testing.assert_array_equal(B.apply(0.0, np.zeros(7), [0.3]), np.zeros(7))
    assert B.hs_norm_sq(X) == pytest.approx(d.h * np.sum(X ** 2))


def test_c1_budget_certificate():
    d = Domain1D(127)
    B = LinearMultiplicative.from_functions(d, [lambda x: np.ones_like(x), lambda x: np.sin(np.pi * x)],
                                            c1_budget=2.0)
    assert B.c1_bound_sq == pytest.approx(2.0, rel=1e-12)
    assert B.lipschitz == B.c1_bound_sq
    # a budget already met leaves the coefficients untouched
    small = LinearMultiplicative.from_functions(d, [lambda x: 0.1 * np.ones_like(x)], c1_budget=2.0)
    np.testing.assert_array_equal(small.coeffs, 0.1)


def test_linear_multiplicative_rejects_bad_coeffs():
    d = Domain1D(3)
    with pytest.raises(DomainMismatch):
        LinearMultiplicative(d, np.ones((1, 4)))
    with pytest.raises(ValueError):
        LinearMultiplicative(d, [[1.0, np.nan, 1.0]])


def test_general_lipschitz_contract():
    B = GeneralLipschitz(1, lambda t, X, dW: X * dW[0], lipschitz=1.0)
    np.testing.assert_allclose(B.apply(0.0, np.ones(3), [2.0]), 2.0)
    with pytest.raises(NotImplementedError):
        B.hs_norm_sq(np.ones(3))
    assert B.describe()["lipschitz"] == 1.0


def test_none_model_helpers():
    assert n_modes(None) == 0
    assert hs_norm_sq(None, np.ones(3)) == 0.0
    np.testing.assert_array_equal(apply_B(None, 0.0, np.ones(3), np.zeros(0)), np.zeros(3))
    with pytest.raises(ValueError):
        apply_B(None, 0.0, np.ones(3), [1.0])


@given(st.floats(-5, 5), st.floats(-5, 5), st.floats(-3, 3))
def test_linear_multiplicative_is_linear(a, b, dw):
    d = Domain1D(9)
    B = LinearMultiplicative(d, [np.sin(np.pi * d.x)])
    X, Y = np.cos(d.x), d.x ** 2
    lhs = B.apply(0.0, a * X + b * Y, [dw])
    rhs = a * B.apply(0.0, X, [dw]) + b * B.apply(0.0, Y, [dw])
    np.testing.assert_allclose(lhs, rhs, atol=1e-12)
