import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from sfde_lab.scalar import (
    DeltaSmoothing,
    PowerNonlinearity,
    YosidaRegularization,
    dphi_reg,
    huber,
    lipschitz_constant,
    min_section_norm,
    moreau_psi,
    phi_reg,
    phi_set,
    potential_gap_bound,
    psi,
    psi_reg,
    reg_kind,
    resolvent_scalar,
    sharp_growth_constant,
    smoothed_dphi_delta,
    smoothed_phi_delta,
    smoothed_psi_delta,
    verify_scalar_inequalities,
    yosida_phi,
)

M_VALUES = [0.0, 0.25, 0.5, 0.75, 1.0]
ms = st.sampled_from(M_VALUES)
rs = st.floats(-50.0, 50.0, allow_nan=False)
epss = st.floats(1e-4, 10.0)


def test_power_nonlinearity_rejects_out_of_range():
    with pytest.raises(ValueError):
        PowerNonlinearity(1.5)
    with pytest.raises(ValueError):
        PowerNonlinearity(-0.1)


def test_regularization_parameters_must_be_positive():
    with pytest.raises(ValueError):
        YosidaRegularization(0.0)
    with pytest.raises(ValueError):
        DeltaSmoothing(-1.0)


def test_phi_set_is_full_interval_at_zero_for_sign():
    lo, hi = phi_set(0.0, 0.0)
    assert (lo, hi) == (-1.0, 1.0)
    assert phi_set(0.0, 2.0) == (1.0, 1.0)
    assert min_section_norm(0.0, 0.0) == 0.0


def test_psi_values():
    assert psi(0.0, -3.0) == 3.0
    assert psi(1.0, 2.0) == 2.0
    assert psi(0.5, 4.0) == pytest.approx(8.0 / 1.5)


# closed forms used as oracles below:
#   m = 0: J r = sign(r) max(|r| - eps, 0) (soft threshold)
#   m = 1: J r = r / (1 + eps)
#   m = 1/2: sqrt(J r) = (-eps + sqrt(eps^2 + 4r)) / 2 for r > 0

def test_resolvent_soft_threshold():
    r = np.array([-2.0, -0.3, 0.0, 0.1, 0.5, 3.0])
    np.testing.assert_array_equal(resolvent_scalar(0.0, 0.5, r), [-1.5, 0.0, 0.0, 0.0, 0.0, 2.5])


def test_resolvent_linear():
    assert resolvent_scalar(1.0, 0.25, 5.0) == pytest.approx(4.0, rel=1e-15)


def test_resolvent_square_root_oracle():
    eps, r = 0.1, 2.0
    q = (-eps + np.sqrt(eps * eps + 4 * r)) / 2
    assert resolvent_scalar(0.5, eps, r) == pytest.approx(q * q, rel=1e-14)
    assert resolvent_scalar(0.5, eps, -r) == pytest.approx(-q * q, rel=1e-14)


def test_moreau_psi_frozen_value():
    # (r - s)^2 / (2 eps) + s^1.5 / 1.5 with s from the square-root oracle
    assert moreau_psi(0.5, 0.1, 2.0) == pytest.approx(1.7890713883610017, rel=1e-13)


def test_yosida_phi_inside_threshold_is_linear():
    assert yosida_phi(0.0, 0.5, 0.2) == pytest.approx(0.4, rel=1e-15)
    assert yosida_phi(0.0, 0.5, 7.0) == pytest.approx(1.0, rel=1e-15)


def test_huber_matches_envelope_on_grid():
    r = np.linspace(-5, 5, 1001)
    for eps in (1.0, 1e-1, 1e-2, 1e-3):
        np.testing.assert_allclose(moreau_psi(0.0, eps, r), huber(eps, r), rtol=0, atol=1e-12)


def test_smoothed_psi_tiny_argument_keeps_relative_accuracy():
    # exact series: r^2 / (2 sqrt(delta)) for m = 0 when r^2 << delta
    assert smoothed_psi_delta(0.0, 1e-2, 1e-9) == pytest.approx(5e-18, rel=1e-12)


def test_smoothed_exact_for_m_one():
    r = np.linspace(-3, 3, 61)
    np.testing.assert_allclose(smoothed_psi_delta(1.0, 0.3, r), 0.5 * r * r, atol=1e-14)
    np.testing.assert_allclose(smoothed_phi_delta(1.0, 0.3, r), r, atol=1e-15)


def test_reg_kind_none_only_for_linear():
    with pytest.raises(ValueError):
        reg_kind(0.5, None)
    assert reg_kind(1.0, None)[1] == 0.0


def test_lipschitz_constants():
    assert lipschitz_constant(0.0, YosidaRegularization(0.25)) == 4.0
    assert lipschitz_constant(0.0, DeltaSmoothing(1e-2)) == pytest.approx(10.0)
    assert lipschitz_constant(1.0, None) == 1.0


def test_potential_gap_bound_forms():
    assert potential_gap_bound(0.5, YosidaRegularization(0.1)) == (0.1, pytest.approx(0.15))
    c0, c1 = potential_gap_bound(0.0, DeltaSmoothing(1e-2))
    assert c0 == pytest.approx(0.2) and c1 == 0.0
    assert potential_gap_bound(1.0, None) == (0.0, 0.0)


def test_sharp_growth_constant():
    assert sharp_growth_constant(0.0) == 2.0
    assert sharp_growth_constant(0.5) == 2.25
    assert sharp_growth_constant(1.0) == 4.0


@pytest.mark.parametrize("m", M_VALUES)
def test_certificate_all_but_growth_pass(m):
    r = np.arange(-500, 501) * 0.01
    pair = np.linspace(-5, 5, 41)
    regs = [YosidaRegularization(e) for e in (1.0, 1e-2)] + [DeltaSmoothing(d) for d in (1.0, 1e-3)]
    rep = verify_scalar_inequalities(m, regs, r, pair)
    failed = {c.name.split("[")[0] for c in rep.failures()}
    expected = {"d_growth"} if m < np.sqrt(2) - 1 else set()
    assert failed == expected
    assert all(c.passed for c in rep.checks.values() if c.name.startswith("d_growth_sharp"))


def test_growth_ratio_tends_to_two_near_zero():
    # phi'^d r^2 / psi^d -> 2 as r -> 0 regardless of m
    for m in (0.0, 0.5):
        r = 1e-6
        ratio = smoothed_dphi_delta(m, 1.0, r) * r * r / smoothed_psi_delta(m, 1.0, r)
        assert ratio == pytest.approx(2.0, rel=1e-6)


def test_certificate_rejects_bad_input():
    with pytest.raises(ValueError):
        verify_scalar_inequalities(0.0, DeltaSmoothing(1.0), [])
    with pytest.raises(ValueError):
        verify_scalar_inequalities(0.0, DeltaSmoothing(1.0), [np.nan])
    with pytest.raises(TypeError):
        verify_scalar_inequalities(0.0, [object()], [0.0])


# -- properties -----------------------------------------------------------------

@given(ms, epss, rs)
def test_resolvent_solves_inclusion(m, eps, r):
    s = resolvent_scalar(m, eps, r)
    lo, hi = phi_set(m, s)
    w = (r - s) / eps
    scale = 1.0 + abs(r)
    assert lo - 1e-9 * scale / eps <= w <= hi + 1e-9 * scale / eps


@given(ms, epss, rs, rs)
def test_resolvent_is_nonexpansive(m, eps, a, b):
    ja, jb = resolvent_scalar(m, eps, a), resolvent_scalar(m, eps, b)
    assert abs(ja - jb) <= abs(a - b) * (1 + 1e-12) + 1e-12


@given(ms, epss, rs, rs)
def test_yosida_phi_monotone(m, eps, a, b):
    assert (yosida_phi(m, eps, a) - yosida_phi(m, eps, b)) * (a - b) >= -1e-10 * (1 + a * a + b * b)


@given(ms, epss, rs)
def test_envelope_sandwich(m, eps, r):
    env = moreau_psi(m, eps, r)
    s = resolvent_scalar(m, eps, r)
    assert psi(m, s) <= env * (1 + 1e-12) + 1e-12
    assert env <= psi(m, r) * (1 + 1e-12) + 1e-12


@given(ms, st.floats(1e-4, 10.0), rs)
def test_delta_smoothing_error_bound(m, delta, r):
    gap = abs(smoothed_psi_delta(m, delta, r) - psi(m, r))
    assert gap <= 2.0 / (m + 1.0) * delta ** (0.5 * (m + 1.0)) * (1 + 1e-10) + 1e-12


@given(ms, st.sampled_from(["yosida", "delta"]), st.floats(1e-3, 1.0), rs)
def test_dispatch_consistent_with_derivative(m, kind, p, r):
    reg = YosidaRegularization(p) if kind == "yosida" else DeltaSmoothing(p)
    h = 1e-6 * (1 + abs(r))
    fd = (psi_reg(m, reg, r + h) - psi_reg(m, reg, r - h)) / (2 * h)
    assert phi_reg(m, reg, r) == pytest.approx(fd, rel=1e-4, abs=1e-5 * (1 + abs(r)) / p)
    assert dphi_reg(m, reg, r) >= 0.0
