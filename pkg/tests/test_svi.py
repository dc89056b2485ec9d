import json

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from sfde_lab import diagnostics as dg
from sfde_lab.grid import DirichletLaplacian, Domain1D
from sfde_lab.noise import LinearMultiplicative, sample_path
from sfde_lab.scalar import DeltaSmoothing
from sfde_lab.solver import SolverConfig, simulate
from sfde_lab.svi import (
    CallbackDrift,
    ConstantDrift,
    RegularizedDrift,
    ZeroDrift,
    make_test_ensemble,
    make_test_process,
    selection_inequality_check,
    selection_slack_ladder,
    svi_residual,
)

T, DT = 0.05, 1e-3


@pytest.fixture(scope="module")
def dom():
    return Domain1D(31)


@pytest.fixture(scope="module")
def x0(dom):
    return 3 * np.sin(2 * np.pi * dom.x) + 1.5 * np.sin(np.pi * dom.x)


@pytest.fixture(scope="module")
def noise(dom):
    return LinearMultiplicative.from_functions(
        dom, [lambda x: np.ones_like(x), lambda x: np.sin(np.pi * x)], c1_budget=2.0)


@pytest.fixture(scope="module")
def cfg(dom, noise):
    return SolverConfig(0.0, DT, T, dom, regularization=DeltaSmoothing(1.25e-2), noise=noise)


@pytest.fixture(scope="module")
def paths():
    return [sample_path(s, DT, int(round(T / DT)), 2) for s in dg.ensemble_seeds(7, 12)]


@pytest.fixture(scope="module")
def X(cfg, x0, paths):
    return [simulate(cfg, x0, p) for p in paths]


def test_zero_drift_without_noise_is_constant(dom):
    cfg = SolverConfig(1.0, DT, T, dom)
    z0 = np.cos(dom.x)
    Z = make_test_process(ZeroDrift(), z0, None, cfg)
    assert np.all(Z.states == z0)


def test_constant_drift_integrates_exactly(dom):
    cfg = SolverConfig(1.0, DT, T, dom)
    z0, c = np.sin(np.pi * dom.x), -np.sin(np.pi * dom.x)
    Z = make_test_process(ConstantDrift(c), z0, None, cfg)
    np.testing.assert_allclose(Z.states, z0 + Z.times[:, None] * c, atol=1e-14)


def test_regularized_drift_reproduces_x_bitwise(cfg, x0, paths, X):
    Z = make_test_process(RegularizedDrift(cfg), x0, paths[0], cfg)
    np.testing.assert_array_equal(Z.states, X[0].states)
    assert Z.path_seed == X[0].path_seed


def test_identity_defects(cfg, x0, paths):
    for spec in (ZeroDrift(), ConstantDrift(np.ones(cfg.domain.n)),
                 RegularizedDrift(cfg.with_(regularization=DeltaSmoothing(0.1))),
                 CallbackDrift(lambda t, z: -z)):
        Z = make_test_process(spec, x0, paths[1], cfg)
        assert np.max(Z.identity_defects()) < 1e-8


def test_test_process_needs_every_step(cfg, x0, paths):
    with pytest.raises(ValueError):
        make_test_process(ZeroDrift(), x0, paths[0], cfg.with_(record_every=5))
    with pytest.raises(ValueError):
        make_test_process(RegularizedDrift(cfg.with_(dt=5e-4)), x0, paths[0], cfg)


def test_residual_nonnegative_for_identical_processes(cfg, x0, paths, X):
    Z = make_test_ensemble(RegularizedDrift(cfg), x0, paths, cfg)
    rep = svi_residual(X, Z, C=0.0)
    assert np.all(rep.margins >= 0.0)
    assert rep.passed and rep.min_C == 0.0


def test_residual_rejects_uncoupled(cfg, x0, paths, X):
    Z = make_test_ensemble(ZeroDrift(), x0, paths[::-1], cfg)
    with pytest.raises(ValueError):
        svi_residual(X, Z, C=1.0)
    with pytest.raises(ValueError):
        svi_residual(X, Z[:3], C=1.0)


@pytest.mark.parametrize("name,spec,z0", [
    ("zero", ZeroDrift(), "zero"),
    ("constant", ConstantDrift(None), "sine"),
    ("regularized", RegularizedDrift(None), "x0"),
])
def test_residual_within_tolerance(cfg, x0, paths, X, dom, name, spec, z0):
    s = np.sin(np.pi * dom.x)
    z = {"zero": np.zeros(dom.n), "sine": s, "x0": x0}[z0]
    if name == "constant":
        spec = ConstantDrift(-s)
    if name == "regularized":
        spec = RegularizedDrift(cfg.with_(regularization=DeltaSmoothing(0.1)))
    Z = make_test_ensemble(spec, z, paths, cfg)
    rep = svi_residual(X, Z, C=cfg.noise.lipschitz)
    assert rep.passed, float(np.min(rep.margins + rep.tolerance))
    assert rep.a == pytest.approx(10 * (1 + np.mean([np.sum(x.states[0] ** 2) * dom.h for x in X])))


@given(st.floats(0.0, 5.0), st.floats(0.0, 5.0))
def test_margins_monotone_in_C(c1, c2):
    dom = Domain1D(15)
    noise = LinearMultiplicative(dom, [np.ones(dom.n)])
    cfg = SolverConfig(0.0, 1e-3, 0.01, dom, regularization=DeltaSmoothing(1e-2), noise=noise)
    x0 = np.sin(np.pi * dom.x)
    ps = [sample_path(s, 1e-3, 10, 1) for s in (1, 2, 3)]
    X = [simulate(cfg, x0, p) for p in ps]
    Z = make_test_ensemble(ZeroDrift(), 0.5 * x0, ps, cfg)
    lo, hi = sorted((c1, c2))
    a = svi_residual(X, Z, C=lo).margins
    b = svi_residual(X, Z, C=hi).margins
    assert np.all(b >= a)


def test_deterministic_heat_flow_against_modes(dom):
    # m = 1, no noise, X and Z heat flows from different two-mode data
    L = DirichletLaplacian(dom)
    cfg = SolverConfig(1.0, 1e-3, 0.1, dom)
    x0 = L.eigenvector(1) + 0.5 * L.eigenvector(2)
    z0 = 0.3 * L.eigenvector(1) - L.eigenvector(3)
    X = simulate(cfg, x0)
    Z = make_test_process(RegularizedDrift(cfg), z0, None, cfg)
    q = 1.0 / (1.0 + cfg.dt * L.eigenvalues)
    n = np.arange(X.n_records)[:, None]
    exact = (q[0] ** n) * L.eigenvector(1) + 0.5 * (q[1] ** n) * L.eigenvector(2)
    np.testing.assert_allclose(X.states, exact, atol=1e-12)
    rep = svi_residual([X], [Z], C=0.0)
    assert rep.passed


def test_selection_identity_has_zero_margin_floor(cfg, X):
    rep = selection_inequality_check(X[0], X[0])
    assert rep.passed
    assert rep.checks["selection_inequality"].min_margin >= 0.0


def test_selection_exact_for_linear(dom):
    cfg = SolverConfig(1.0, 1e-3, 0.05, dom)
    X = simulate(cfg, np.sin(np.pi * dom.x))
    Z = np.random.default_rng(0).standard_normal(X.states.shape)
    rep = selection_inequality_check(X, Z)
    assert rep.context["max_slack"] == 0.0
    assert rep.passed


def test_selection_random_z_within_slack(cfg, X):
    Z = np.random.default_rng(1).standard_normal(X[0].states.shape) * 2.0
    rep = selection_inequality_check(X[0], Z, m=0.0)
    assert rep.passed


def test_selection_shape_and_eta_errors(cfg, X):
    with pytest.raises(ValueError):
        selection_inequality_check(X[0].states, X[0].states, cfg=cfg)
    with pytest.raises(ValueError):
        selection_inequality_check(X[0], X[0].states[:-1])


def test_selection_slack_linear_in_eps(cfg, X, x0):
    Zs = np.zeros_like(X[0].states)
    reports, fit = selection_slack_ladder(X[0].states, Zs, cfg, [1e-1, 1e-2, 1e-3, 1e-4])
    assert all(r.passed for r in reports)
    assert fit.slope >= 0.9


def test_report_serialization(cfg, x0, paths, X, tmp_path):
    Z = make_test_ensemble(ZeroDrift(), np.zeros(cfg.domain.n), paths, cfg)
    rep = svi_residual(X, Z, C=2.0)
    rep.to_json(tmp_path / "r.json")
    d = json.loads((tmp_path / "r.json").read_text())
    assert d["C"] == 2.0 and len(d["margins"]) == len(rep.times)
    rep.to_csv(tmp_path / "r.csv")
    assert (tmp_path / "r.csv").read_text().splitlines()[0] == "t,lhs,rhs,margin,halfwidth,tolerance"
