"""Experiment configurations and runners behind the command line.

A runner takes a resolved configuration and returns an :class:`Outcome`:
the artifacts as bytes (so they can be hashed before anything touches disk),
the list of enabled assertions with their verdicts, and the per-path seeds.
"""

import copy
import csv
import hashlib
import io
import json
import math
from dataclasses import dataclass, field

import numpy as np
from jsonschema import Draft202012Validator

from . import diagnostics as diag
from . import svi
from .grid import (
    DirichletLaplacian,
    Domain1D,
    h_minus1_norm,
    l2_norm,
    operator_certificate,
    smooth_initial,
    subgradient_certificate,
)
from .noise import Additive, LinearMultiplicative
from .scalar import (
    DeltaSmoothing,
    PowerNonlinearity,
    YosidaRegularization,
    huber,
    moreau_psi,
    verify_scalar_inequalities,
)
from .solver import SolverConfig, laplacian, simulate

KINDS = ("scalar-verify", "simulate", "converge", "contraction", "svi-check")


class ConfigError(ValueError):
    def __init__(self, message, path=()):
        super().__init__(message)
        self.path = list(path)


# -- schema ------------------------------------------------------------------------

_NUM = {"type": "number"}
_POS = {"type": "number", "exclusiveMinimum": 0}
_POS_LIST = {"type": "array", "items": _POS, "minItems": 1}


def _obj(props, required=()):
    return {"type": "object", "properties": props, "required": list(required),
            "additionalProperties": False}


_FIELD = _obj({
    "constant": _NUM,
    "modes": {"type": "array", "items": {"type": "array", "prefixItems": [
        {"type": "integer", "minimum": 1}, _NUM], "minItems": 2, "maxItems": 2}},
    "basis": {"enum": ["sine", "eigen"]},
})

_REG = {"oneOf": [
    {"type": "null"},
    _obj({"type": {"const": "delta"}, "delta": _POS}, ["type", "delta"]),
    _obj({"type": {"const": "yosida"}, "eps_y": _POS}, ["type", "eps_y"]),
]}

_TEST_PROCESS = _obj({
    "name": {"type": "string"},
    "type": {"enum": ["zero", "constant", "regularized"]},
    "z0": {"oneOf": [{"const": "x0"}, _FIELD]},
    "c": _FIELD,
    "regularization": _REG,
    "eps_visc": {"type": "number", "minimum": 0},
}, ["type"])

SCHEMA = _obj({
    "kind": {"enum": list(KINDS)},
    "seed": {"type": "integer", "minimum": 0},
    "paths": {"type": "integer", "minimum": 1},
    "threads": {"type": "integer", "minimum": 1},
    "output": {"type": "string"},
    "grid": _obj({"n": {"type": "integer", "minimum": 1}, "a": _NUM, "b": _NUM}),
    "solver": _obj({
        "m": {"type": "number", "minimum": 0, "maximum": 1},
        "dt": _POS, "T": _POS,
        "eps_visc": {"type": "number", "minimum": 0},
        "regularization": _REG,
        "scheme": {"enum": ["implicit", "imex"]},
        "newton_tol": _POS,
        "newton_max_iter": {"type": "integer", "minimum": 1},
        "record_every": {"type": "integer", "minimum": 1},
    }),
    "noise": _obj({
        "variant": {"enum": ["none", "additive", "linear_multiplicative"]},
        "fields": {"type": "array", "items": _FIELD},
        "c1_budget": {"oneOf": [{"type": "null"}, _POS]},
    }),
    "initial": _FIELD,
    "initial_smoothing": {"oneOf": [{"type": "null"}, {"type": "integer", "minimum": 1}]},
    "ladder": _obj({"axis": {"enum": ["delta", "eps_y", "eps_visc", "eps", "dt"]}, "values": _POS_LIST}),
    "scalar": _obj({
        "m_values": {"type": "array", "items": {"type": "number", "minimum": 0, "maximum": 1}},
        "eps_values": _POS_LIST, "delta_values": _POS_LIST,
        "r_min": _NUM, "r_max": _NUM, "r_step": _POS,
        "pair_points": {"type": "integer", "minimum": 1},
        "huber_tol": _POS,
        "operators": _obj({"n_values": {"type": "array", "items": {"type": "integer", "minimum": 1}},
                           "samples": {"type": "integer", "minimum": 1}, "tol": _POS}),
        "subgradient": _obj({"m_values": {"type": "array", "items": {"type": "number", "minimum": 0, "maximum": 1}},
                             "n": {"type": "integer", "minimum": 1},
                             "triples": {"type": "integer", "minimum": 1}, "tol": _POS}),
    }),
    "contraction": _obj({
        "perturbation": _FIELD, "scales": _POS_LIST,
        "K": {"oneOf": [{"type": "null"}, {"type": "number", "minimum": 0}]},
        "tol": {"type": "number", "minimum": 0},
        "ratio_band": {"type": "array", "items": _POS, "minItems": 2, "maxItems": 2},
    }),
    "svi": _obj({
        "C": {"oneOf": [{"type": "null"}, {"type": "number", "minimum": 0}]},
        "test_processes": {"type": "array", "items": _TEST_PROCESS, "minItems": 1},
        "selection_eps": _POS_LIST,
        "selection_slope_min": _NUM,
    }),
    "assertions": _obj({
        "dissipation": {"type": "boolean"},
        "linear_oracle": {"type": "boolean"},
        "imex_gap": {"type": "boolean"},
        "slope_min": _NUM, "slope_max": _NUM, "r2_min": _NUM,
    }),
})

_VALIDATOR = Draft202012Validator(SCHEMA)

_BASE = {
    "seed": 2024,
    "paths": 1,
    "threads": 1,
    "grid": {"n": 127, "a": 0.0, "b": 1.0},
    "solver": {"m": 0.0, "dt": 2e-4, "T": 0.25, "eps_visc": 0.0,
               "regularization": {"type": "delta", "delta": 1.25e-2},
               "scheme": "implicit", "newton_tol": 1e-10, "newton_max_iter": 500,
               "record_every": 1},
    "noise": {"variant": "linear_multiplicative",
              "fields": [{"constant": 1.0}, {"modes": [[1, 1.0]]}],
              "c1_budget": 2.0},
    "initial": {"modes": [[2, 3.0], [1, 1.5]]},
    "initial_smoothing": None,
}

DEFAULTS = {
    "scalar-verify": {
        "scalar": {"m_values": [0.0, 0.25, 0.5, 0.75, 1.0],
                   "eps_values": [1.0, 1e-1, 1e-2, 1e-3],
                   "delta_values": [1.0, 1e-1, 1e-2, 1e-3],
                   "r_min": -5.0, "r_max": 5.0, "r_step": 0.01, "pair_points": 101,
                   "huber_tol": 1e-12,
                   "operators": {"n_values": [15, 127, 511], "samples": 20, "tol": 1e-9},
                   "subgradient": {"m_values": [0.0, 0.5], "n": 127, "triples": 100, "tol": 1e-9}},
    },
    "simulate": {
        "assertions": {"dissipation": False, "linear_oracle": False, "imex_gap": False},
    },
    "converge": {
        "paths": 64,
        "solver": {"record_every": 5},
        "ladder": {"axis": "delta", "values": [1e-1, 5e-2, 2.5e-2, 1.25e-2]},
        "assertions": {"slope_min": 0.4, "slope_max": 1.1, "r2_min": 0.9},
    },
    "contraction": {
        "paths": 64,
        "solver": {"record_every": 5},
        "contraction": {"perturbation": {"modes": [[3, 1.0]]}, "scales": [0.1, 0.2, 0.4],
                        "K": None, "tol": 0.0, "ratio_band": [0.5, 2.0]},
    },
    "svi-check": {
        "paths": 64,
        "svi": {"C": None,
                "test_processes": [
                    {"name": "zero", "type": "zero", "z0": {}},
                    {"name": "constant", "type": "constant", "z0": {"modes": [[1, 1.0]]},
                     "c": {"modes": [[1, -1.0]]}},
                    {"name": "regularized", "type": "regularized", "z0": "x0",
                     "regularization": {"type": "delta", "delta": 1e-1}},
                ],
                "selection_eps": [1e-1, 1e-2, 1e-3, 1e-4],
                "selection_slope_min": 0.9},
    },
}


# values replaced wholesale rather than merged key by key
_ATOMIC = frozenset({"initial", "perturbation", "regularization", "z0", "c"})


def _merge(base, over):
    out = copy.deepcopy(base)
    for k, v in over.items():
        if isinstance(v, dict) and isinstance(out.get(k), dict) and k not in _ATOMIC:
            out[k] = _merge(out[k], v)
        else:
            out[k] = copy.deepcopy(v)
    return out


def validate(raw):
    errors = sorted(_VALIDATOR.iter_errors(raw), key=lambda e: list(e.absolute_path))
    if errors:
        e = errors[0]
        msg = e.message
        if e.validator == "additionalProperties":
            extra = sorted(set(e.instance) - set(e.schema.get("properties", {})))
            msg = f"unknown key(s) {', '.join(map(repr, extra))}"
        where = "/".join(str(p) for p in e.absolute_path) or "<root>"
        raise ConfigError(f"{where}: {msg}", e.absolute_path)


def resolve(raw, kind=None, seed=None, threads=None):
    """Validate a user configuration and fill in the kind's defaults."""
    if not isinstance(raw, dict):
        raise ConfigError("configuration must be a JSON object")
    validate(raw)
    cfg_kind = raw.get("kind")
    if kind is not None and cfg_kind is not None and cfg_kind != kind:
        raise ConfigError(f"config kind {cfg_kind!r} does not match subcommand {kind!r}", ["kind"])
    kind = kind or cfg_kind
    if kind is None:
        raise ConfigError("no experiment kind given", ["kind"])
    resolved = _merge(_merge(_BASE, DEFAULTS[kind]), raw)
    resolved["kind"] = kind
    if seed is not None:
        resolved["seed"] = int(seed)
    if threads is not None:
        resolved["threads"] = int(threads)
    resolved.pop("output", None)
    validate(resolved)
    _check_semantics(resolved)
    return resolved


def _check_semantics(c):
    g = c["grid"]
    if not g["b"] > g["a"]:
        raise ConfigError("grid: need b > a", ["grid"])
    try:
        build_solver(c)
    except (ValueError, TypeError) as exc:
        raise ConfigError(f"solver: {exc}", ["solver"]) from exc
    lad = c.get("ladder")
    if c["kind"] == "converge" and len(lad["values"]) < 3:
        raise ConfigError("ladder: a rate fit needs at least 3 levels", ["ladder", "values"])


def config_hash(resolved):
    """SHA-256 of the canonical JSON form (threads excluded: they never change results)."""
    c = {k: v for k, v in resolved.items() if k != "threads"}
    return hashlib.sha256(canonical_json(c).encode()).hexdigest()


def canonical_json(obj):
    return json.dumps(_clean(obj), sort_keys=True, separators=(",", ":"))


def dump_json(obj):
    return (json.dumps(_clean(obj), sort_keys=True, indent=2) + "\n").encode()


def _clean(obj):
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _clean(obj.tolist())
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        x = float(obj)
        return x if math.isfinite(x) else str(x)
    return obj


def csv_bytes(header, rows):
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([repr(float(v)) if isinstance(v, (float, np.floating)) else v for v in row])
    return buf.getvalue().encode()


# -- builders ------------------------------------------------------------------------

def build_domain(c):
    g = c["grid"]
    return Domain1D(int(g["n"]), float(g["a"]), float(g["b"]))


def build_field(spec, domain):
    """``constant + sum amp * mode_k`` on the interior nodes.

    ``basis = "sine"`` uses ``sin(k pi (x - a)/L)``; ``"eigen"`` the
    L2_h-normalized eigenvectors.
    """
    L = laplacian(domain)
    out = np.full(domain.n, float(spec.get("constant", 0.0)))
    normalized = spec.get("basis", "sine") == "eigen"
    for k, amp in spec.get("modes", []):
        if k > domain.n:
            raise ConfigError(f"mode {k} exceeds the {domain.n} grid modes")
        out = out + float(amp) * L.eigenvector(int(k), normalized=normalized)
    return out


def build_initial(c, domain):
    """The initial datum, optionally replaced by ``(I - Lap_h/n)^{-1} x0``."""
    x0 = build_field(c["initial"], domain)
    n = c.get("initial_smoothing")
    return x0 if n is None else smooth_initial(laplacian(domain), x0, n)


def build_regularization(spec):
    if spec is None:
        return None
    if spec["type"] == "delta":
        return DeltaSmoothing(float(spec["delta"]))
    return YosidaRegularization(float(spec["eps_y"]))


def build_noise(c, domain):
    nz = c["noise"]
    if nz["variant"] == "none" or not nz.get("fields"):
        return None
    fields = [build_field(f, domain) for f in nz["fields"]]
    if nz["variant"] == "additive":
        return Additive(domain, fields)
    model = LinearMultiplicative(domain, fields)
    budget = nz.get("c1_budget")
    if budget is not None and model.c1_bound_sq > budget:
        model = LinearMultiplicative(domain, np.array(fields) * np.sqrt(budget / model.c1_bound_sq))
    return model


def build_solver(c):
    domain = build_domain(c)
    s = c["solver"]
    return SolverConfig(
        m=float(s["m"]), dt=float(s["dt"]), T=float(s["T"]), domain=domain,
        eps_visc=float(s["eps_visc"]), regularization=build_regularization(s["regularization"]),
        scheme=s["scheme"], noise=build_noise(c, domain), newton_tol=float(s["newton_tol"]),
        newton_max_iter=int(s["newton_max_iter"]), record_every=int(s["record_every"]))


def seeds_for(c):
    """Per-path seeds of an experiment (none for the certificate suite)."""
    if c["kind"] == "scalar-verify":
        return []
    return diag.ensemble_seeds(c["seed"], c["paths"])


# -- outcome -------------------------------------------------------------------------

@dataclass
class Outcome:
    kind: str
    artifacts: dict = field(default_factory=dict)
    assertions: list = field(default_factory=list)
    seeds: list = field(default_factory=list)

    @property
    def passed(self):
        return all(a["passed"] for a in self.assertions)

    def check(self, name, passed, **detail):
        self.assertions.append({"name": name, "passed": bool(passed), **_clean(detail)})

    def failures(self):
        return [a for a in self.assertions if not a["passed"]]


def plan(c):
    """Resolved parameters and a cost estimate, without simulating."""
    kind = c["kind"]
    lines = [f"experiment: {kind}", f"config sha256: {config_hash(c)}"]
    if kind == "scalar-verify":
        s = c["scalar"]
        n_r = int(round((s["r_max"] - s["r_min"]) / s["r_step"])) + 1
        lines += [f"m values: {s['m_values']}", f"eps values: {s['eps_values']}",
                  f"delta values: {s['delta_values']}",
                  f"r grid: [{s['r_min']}, {s['r_max']}] step {s['r_step']} ({n_r} points)",
                  f"pair grid: {s['pair_points']} points",
                  f"operator suite on n = {s['operators']['n_values']}",
                  f"subgradient triples: {s['subgradient']['triples']} for m = {s['subgradient']['m_values']}",
                  "cost: no time stepping"]
        return "\n".join(lines)
    cfg = build_solver(c)
    d = cfg.describe()
    lines += [f"grid: n={d['n']} on [{d['a']}, {d['b']}], h={cfg.domain.h:.6g}",
              f"solver: m={d['m']} scheme={d['scheme']} dt={d['dt']} T={d['T']} steps={cfg.n_steps}"
              f" eps_visc={d['eps_visc']} record_every={d['record_every']}",
              f"regularization: {d['regularization']}",
              f"noise: {d['noise']}",
              f"paths: {c['paths']} (base seed {c['seed']}), threads: {c['threads']}"]
    levels = 1
    if kind == "converge":
        lad = c["ladder"]
        sim = diag.ladder_with_partner(lad["values"])
        levels = len(sim)
        lines.append(f"ladder axis {lad['axis']}: fitted levels {lad['values']}, simulated {sim}")
        lines.append("coupling: every level of path p is driven by the identical Brownian path p")
    elif kind == "contraction":
        ct = c["contraction"]
        levels = 1 + len(ct["scales"])
        lines.append(f"perturbation scales: {ct['scales']} (each run against the unperturbed datum)")
        lines.append("coupling: both initial data share Brownian path p")
    elif kind == "svi-check":
        tps = c["svi"]["test_processes"]
        levels = 1 + len(tps)
        lines.append("test processes: " + ", ".join(t.get("name", t["type"]) for t in tps))
        lines.append(f"selection ladder eps: {c['svi']['selection_eps']}")
        lines.append("coupling: X and every Z share Brownian path p")
    lines.append(f"cost: {cfg.n_steps} steps x {c['paths']} paths x {levels} levels"
                 f" = {cfg.n_steps * c['paths'] * levels} steps")
    return "\n".join(lines)


def run(c):
    kind = c["kind"]
    return {"scalar-verify": run_scalar, "simulate": run_simulate, "converge": run_converge,
            "contraction": run_contraction, "svi-check": run_svi}[kind](c)


# -- runners -------------------------------------------------------------------------

def run_scalar(c):
    s = c["scalar"]
    out = Outcome("scalar-verify")
    n_r = int(round((s["r_max"] - s["r_min"]) / s["r_step"])) + 1
    r = np.linspace(s["r_min"], s["r_max"], n_r)
    pair = np.linspace(s["r_min"], s["r_max"], s["pair_points"])
    regs = ([YosidaRegularization(float(e)) for e in s["eps_values"]]
            + [DeltaSmoothing(float(d)) for d in s["delta_values"]])
    cert = {}
    for m in s["m_values"]:
        rep = verify_scalar_inequalities(PowerNonlinearity(float(m)), regs, r, pair)
        cert[f"m={m:g}"] = rep.to_dict()
        out.check(f"scalar_inequalities[m={m:g}]", rep.passed,
                  failures=[f.name for f in rep.failures()])
    huber_err = {}
    for e in s["eps_values"]:
        err = float(np.max(np.abs(np.asarray(moreau_psi(0.0, float(e), r)) - huber(float(e), r))))
        huber_err[f"eps={e:g}"] = err
    worst = max(huber_err.values())
    out.check("huber_equivalence", worst <= s["huber_tol"], max_abs_error=worst)
    ops = {}
    for n in s["operators"]["n_values"]:
        rep = operator_certificate(DirichletLaplacian(Domain1D(int(n))), seed=c["seed"],
                                   n_samples=s["operators"]["samples"], tol=s["operators"]["tol"])
        ops[f"n={n}"] = rep.to_dict()
        out.check(f"operator_suite[n={n}]", rep.passed, failures=[f.name for f in rep.failures()])
    sub = {}
    sg = s["subgradient"]
    for m in sg["m_values"]:
        rep = subgradient_certificate(DirichletLaplacian(Domain1D(int(sg["n"]))), float(m),
                                      sg["triples"], seed=c["seed"], tol=sg["tol"])
        sub[f"m={m:g}"] = rep.to_dict()
        out.check(f"subgradient[m={m:g}]", rep.passed,
                  min_margin=rep.checks["subgradient_inequality"].min_margin)
    out.artifacts["certificate.json"] = dump_json({
        "scalar": cert, "huber_max_abs_error": huber_err, "operators": ops, "subgradient": sub})
    return out


def _traj_csv(tr):
    x = tr.config.domain.x
    return csv_bytes(["t", "x", "value"],
                     ((t, xj, v) for t, row in zip(tr.times, tr.states) for xj, v in zip(x, row)))


def run_simulate(c):
    cfg = build_solver(c)
    out = Outcome("simulate", seeds=seeds_for(c))
    x0 = build_initial(c, cfg.domain)
    ens = diag.run_ensemble(cfg, x0, out.seeds, threads=c["threads"])
    L = laplacian(cfg.domain)
    for i, tr in enumerate(ens.trajectories):
        out.artifacts[f"trajectory_{i:03d}.csv"] = _traj_csv(tr)
    stats = diag.energy_statistics(ens)
    out.artifacts["energy_statistics.csv"] = csv_bytes(
        ["t", "a", "b", "c", "a_halfwidth", "b_halfwidth", "c_halfwidth"],
        zip(stats["times"], stats["a"], stats["b"], stats["c"],
            stats["a_halfwidth"], stats["b_halfwidth"], stats["c_halfwidth"]))
    tr0 = ens.trajectories[0]
    summaries = [tr.summary() for tr in ens.trajectories]
    out.artifacts["norms.csv"] = csv_bytes(
        ["path", "t", "h_minus1_norm", "l2_norm", "energy"],
        ((i, t, hm, l2, en) for i, s in enumerate(summaries)
         for t, hm, l2, en in zip(s["times"], s["h_minus1_norm"], s["l2_norm"], s["energy"])))
    a = c["assertions"]
    summary = {"comparator_h_minus1": stats["comparator_h_minus1"],
               "comparator_energy": stats["comparator_energy"],
               "l2_sup_statistic": diag.l2_sup_statistic(ens),
               "trajectories": summaries}
    if a.get("dissipation"):
        tol = cfg.newton_tol
        worst_h = max(float(np.max(np.diff(s["h_minus1_norm"]))) for s in summaries)
        worst_e = max(float(np.max(np.diff(s["energy"]))) for s in summaries)
        out.check("dissipation_h_minus1", worst_h <= tol, max_increase=worst_h, tol=tol)
        out.check("dissipation_energy", worst_e <= tol, max_increase=worst_e, tol=tol)
    if a.get("linear_oracle"):
        modes = c["initial"].get("modes", [])
        k = int(modes[0][0]) if len(modes) == 1 else 1
        lam = L.eigenvalues[k - 1]
        steps = np.round(tr0.times / cfg.dt)
        exact = (1.0 + cfg.dt * lam) ** (-steps[:, None]) * x0[None, :]
        err = float(np.max(np.abs(tr0.states - exact)))
        out.check("linear_oracle", err <= 1e-10, max_abs_error=err, eigenvalue=lam)
    if a.get("imex_gap"):
        other = cfg.with_(scheme="imex" if cfg.scheme == "implicit" else "implicit")
        tr1 = simulate(other, x0, diag.make_path(cfg, out.seeds[0]))
        gap = max(l2_norm(L, d) for d in tr0.states - tr1.states)
        bound = 10.0 * cfg.dt * l2_norm(L, x0)
        out.check("imex_gap", gap <= bound, max_l2_gap=gap, bound=bound)
    out.artifacts["summary.json"] = dump_json({"summary": summary, "assertions": out.assertions})
    return out


def run_converge(c):
    cfg = build_solver(c)
    out = Outcome("converge", seeds=seeds_for(c))
    x0 = build_initial(c, cfg.domain)
    lad = c["ladder"]
    a = c["assertions"]
    sim_values = diag.ladder_with_partner(lad["values"])
    try:
        fit = diag.run_stability_experiment(cfg, lad["axis"], lad["values"], x0, out.seeds,
                                            threads=c["threads"])
    except diag.DegenerateFit as exc:
        out.check("rate_fit", False, error=str(exc))
        out.artifacts["ratefit.json"] = dump_json({"error": str(exc), "assertions": out.assertions})
        return out
    out.check("slope_band", a["slope_min"] <= fit.slope <= a["slope_max"],
              slope=fit.slope, band=[a["slope_min"], a["slope_max"]])
    out.check("r2", fit.r2 >= a["r2_min"], r2=fit.r2, minimum=a["r2_min"])
    out.artifacts["ratefit.json"] = dump_json({
        **fit.to_dict(), "axis": lad["axis"], "simulated_values": sim_values,
        "assertions": out.assertions})
    out.artifacts["levels.csv"] = csv_bytes(
        ["param", "error", "halfwidth"],
        ((p, e, h) for (p, e), h in zip(fit.levels, fit.halfwidths)))
    out.artifacts["sup_errors.csv"] = csv_bytes(
        ["path"] + [f"level_{p!r}" for p in lad["values"]],
        ([i, *row] for i, row in enumerate(fit.per_path)))
    return out


def run_contraction(c):
    cfg = build_solver(c)
    out = Outcome("contraction", seeds=seeds_for(c))
    x0 = build_initial(c, cfg.domain)
    ct = c["contraction"]
    v = build_field(ct["perturbation"], cfg.domain)
    base = diag.run_ensemble(cfg, x0, out.seeds, threads=c["threads"])
    L = laplacian(cfg.domain)
    results = []
    for s in ct["scales"]:
        other = diag.run_ensemble(cfg, x0 + float(s) * v, out.seeds, threads=c["threads"])
        r = diag.contraction_check(base, other, 0.0, ct["tol"])
        results.append((float(s), r))
    K = ct["K"]
    if K is None:
        K = max(r["K_min"] for _, r in results)
    rows, levels = [], []
    q0 = None
    lo, hi = ct["ratio_band"]
    for s, r in results:
        weighted = np.exp(-K * r["times"]) * r["mean_sq_diff"]
        i = int(np.argmax(weighted))
        bound = (1.0 + ct["tol"]) * r["initial_sq_diff"]
        margin = bound - weighted[i]
        q = r["sup_sq_diff"] / r["initial_sq_diff"]
        q0 = q if q0 is None else q0
        levels.append({"scale": s, "initial_distance": float(np.sqrt(r["initial_sq_diff"])),
                       "sup_mean_sq_diff": r["sup_sq_diff"], "quadratic_ratio": q,
                       "ratio_to_first": q / q0, "K_min": r["K_min"],
                       "weighted_margin": float(margin), "halfwidth": float(r["halfwidth_t"][i])})
        out.check(f"quadratic_scaling[scale={s:g}]", lo <= q / q0 <= hi, ratio_to_first=q / q0)
        out.check(f"weighted_bound[scale={s:g}]", margin >= -r["halfwidth_t"][i],
                  K=K, margin=margin, halfwidth=r["halfwidth_t"][i])
        rows.append(r["mean_sq_diff"])
    out.check("finite_K", math.isfinite(K), K=K)
    out.artifacts["contraction.json"] = dump_json({
        "K": K, "levels": levels, "h_minus1_norm_perturbation": h_minus1_norm(L, v),
        "assertions": out.assertions})
    times = base.times
    out.artifacts["contraction.csv"] = csv_bytes(
        ["t"] + [f"mean_sq_diff_scale_{s!r}" for s, _ in results],
        ([t, *vals] for t, vals in zip(times, np.array(rows).T)))
    return out


def run_svi(c):
    cfg = build_solver(c).with_(record_every=1)
    out = Outcome("svi-check", seeds=seeds_for(c))
    x0 = build_initial(c, cfg.domain)
    sv = c["svi"]
    C = sv["C"]
    if C is None:
        C = 0.0 if cfg.noise is None else float(cfg.noise.lipschitz)
    X = diag.run_ensemble(cfg, x0, out.seeds, threads=c["threads"])
    paths = [diag.make_path(cfg, s) for s in out.seeds]
    reports = {}
    for i, tp in enumerate(sv["test_processes"]):
        name = tp.get("name", f"{tp['type']}_{i}")
        z0 = x0 if tp.get("z0", {}) == "x0" else build_field(tp.get("z0", {}), cfg.domain)
        if tp["type"] == "zero":
            spec = svi.ZeroDrift()
        elif tp["type"] == "constant":
            spec = svi.ConstantDrift(build_field(tp.get("c", {}), cfg.domain))
        else:
            reg = build_regularization(tp.get("regularization", c["solver"]["regularization"]))
            spec = svi.RegularizedDrift(cfg.with_(regularization=reg,
                                                  eps_visc=float(tp.get("eps_visc", cfg.eps_visc))))
        Z = svi.make_test_ensemble(spec, z0, paths, cfg)
        rep = svi.svi_residual(X, Z, C)
        out.check(f"svi_residual[{name}]", rep.passed,
                  worst_margin_over_tolerance=float(np.min(rep.margins + rep.tolerance)),
                  min_C=rep.min_C, min_C_within_tolerance=rep.min_C_within_tolerance)
        reports[name] = rep.to_dict()
        rep_rows = zip(rep.times, rep.lhs, rep.rhs, rep.margins, rep.halfwidths, rep.tolerance)
        out.artifacts[f"svi_{name}.csv"] = csv_bytes(
            ["t", "lhs", "rhs", "margin", "halfwidth", "tolerance"], rep_rows)
        sel = [svi.selection_inequality_check(x, z) for x, z in zip(X.trajectories, Z)]
        worst = min(r.checks["selection_inequality"].min_margin for r in sel)
        out.check(f"selection_inequality[{name}]", all(r.passed for r in sel), worst_margin=worst)
        ladder_reports, fit = svi.selection_slack_ladder(
            X.trajectories[0].states, Z[0].states, cfg, sv["selection_eps"])
        out.check(f"selection_ladder[{name}]", all(r.passed for r in ladder_reports),
                  worst_margin=min(r.checks["selection_inequality"].min_margin for r in ladder_reports))
        out.check(f"selection_slack_slope[{name}]", fit.slope >= sv["selection_slope_min"],
                  slope=fit.slope)
        reports[name]["selection"] = {"worst_margin": worst,
                                      "ladder": [r.to_dict() for r in ladder_reports],
                                      "slack_fit": fit.to_dict()}
        del Z
    out.artifacts["svi_report.json"] = dump_json({"C": C, "reports": reports,
                                                  "assertions": out.assertions})
    return out
