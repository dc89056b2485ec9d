"""``sfde-lab`` command line: run experiments, print plans, replay provenance.

Exit codes: 0 when every enabled assertion passes, 1 on an assertion failure,
a solver breakdown or a replay mismatch, 2 on configuration or provenance errors. Diagnostics go to
stdout (results) and stderr (errors) as one JSON object each.
"""

import argparse
import hashlib
import json
import os
import platform
import sys
import tempfile
from pathlib import Path

import numpy as np
import scipy

from . import __version__, experiments
from .experiments import ConfigError
from .kernels import BACKEND
from .solver import SimulationError

PROVENANCE = "provenance.json"
OUT_ENV = "SFDE_LAB_OUT"


class ReplayMismatch(RuntimeError):
    pass


class MissingArtifact(FileNotFoundError):
    pass


def sha256(data):
    return hashlib.sha256(data).hexdigest()


def versions():
    return {"sfde_lab": __version__, "numpy": np.__version__, "scipy": scipy.__version__,
            "python": platform.python_version(), "backend": BACKEND}


def load_config(path):
    if path is None:
        return {}
    try:
        with open(path) as fh:
            return json.load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config is not valid JSON: {exc}") from exc


def out_dir(args, raw):
    env = os.environ.get(OUT_ENV)
    if env:
        return Path(env)
    if args.out:
        return Path(args.out)
    return Path(raw.get("output", "sfde_out"))


def provenance(resolved, outcome):
    return {
        "kind": resolved["kind"],
        "config": resolved,
        "config_sha256": experiments.config_hash(resolved),
        "base_seed": resolved.get("seed"),
        "seeds": outcome.seeds,
        "versions": versions(),
        "artifacts": {name: sha256(data) for name, data in sorted(outcome.artifacts.items())},
        "passed": outcome.passed,
    }


def write_outputs(directory, resolved, outcome):
    directory.mkdir(parents=True, exist_ok=True)
    for name, data in sorted(outcome.artifacts.items()):
        (directory / name).write_bytes(data)
    prov = provenance(resolved, outcome)
    (directory / PROVENANCE).write_bytes(experiments.dump_json(prov))
    return prov


def emit(obj, stream=None):
    stream = stream or sys.stdout
    stream.write(experiments.canonical_json(obj) + "\n")


def cmd_run(args):
    raw = load_config(args.config)
    resolved = experiments.resolve(raw, kind=args.command, seed=args.seed, threads=args.threads)
    outcome = experiments.run(resolved)
    directory = out_dir(args, raw)
    prov = write_outputs(directory, resolved, outcome)
    emit({"kind": resolved["kind"], "passed": outcome.passed, "out": str(directory),
          "config_sha256": prov["config_sha256"], "assertions": outcome.assertions})
    return 0 if outcome.passed else 1


def cmd_describe(args):
    raw = load_config(args.config)
    resolved = experiments.resolve(raw, kind=args.kind, seed=args.seed, threads=args.threads)
    print(experiments.plan(resolved))
    return 0


def replay(prov_path, out=None):
    """Re-run a recorded experiment; return the list of artifact names checked.

    Raises :class:`MissingArtifact` if a recorded artifact is absent next to
    the provenance file and :class:`ReplayMismatch` if the configuration hash,
    the seeds or any artifact byte differ.
    """
    prov_path = Path(prov_path)
    try:
        prov = json.loads(prov_path.read_text())
        resolved = prov["config"]
        recorded = prov["artifacts"]
    except (OSError, ValueError, KeyError, TypeError) as exc:
        raise ConfigError(f"unreadable provenance {prov_path}: {exc}") from exc
    base = prov_path.parent
    for name in sorted(recorded):
        if not (base / name).is_file():
            raise MissingArtifact(f"artifact {name!r} listed in the provenance is missing from {base}")
    if experiments.config_hash(resolved) != prov.get("config_sha256"):
        raise ReplayMismatch("provenance mismatch: configuration or seed differs from its recorded hash")
    resolved = experiments.resolve(resolved)
    if experiments.seeds_for(resolved) != prov.get("seeds", []):
        raise ReplayMismatch("provenance mismatch: recorded path seeds do not derive from the base seed")
    bad = [n for n in sorted(recorded) if sha256((base / n).read_bytes()) != recorded[n]]
    if bad:
        raise ReplayMismatch(f"provenance mismatch: artifacts modified on disk: {bad}")
    outcome = experiments.run(resolved)
    fresh = {n: sha256(d) for n, d in outcome.artifacts.items()}
    diff = sorted(set(fresh) ^ set(recorded)) + sorted(
        n for n in set(fresh) & set(recorded) if fresh[n] != recorded[n])
    if out is not None:
        write_outputs(Path(out), resolved, outcome)
    if diff:
        raise ReplayMismatch(f"replay produced different artifacts: {diff}")
    return sorted(recorded)


def cmd_replay(args):
    out = os.environ.get(OUT_ENV) or args.out
    if out is None:
        out = tempfile.mkdtemp(prefix="sfde_replay_")
    names = replay(args.provenance, out)
    emit({"replay": str(args.provenance), "identical": True, "artifacts": names, "out": str(out)})
    return 0


def build_parser():
    p = argparse.ArgumentParser(prog="sfde-lab", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp):
        sp.add_argument("--config", metavar="PATH", help="JSON experiment configuration")
        sp.add_argument("--seed", type=int, metavar="N", help="override the base seed")
        sp.add_argument("--threads", type=int, metavar="N", help="cap on worker threads over paths")

    for kind in experiments.KINDS:
        sp = sub.add_parser(kind, help=f"run the {kind} experiment")
        common(sp)
        sp.add_argument("--out", metavar="DIR", help=f"output directory (${OUT_ENV} takes precedence)")
    sp = sub.add_parser("describe", help="print the resolved plan without simulating")
    common(sp)
    sp.add_argument("kind", nargs="?", choices=experiments.KINDS,
                    help="experiment kind when the config does not name one")
    sp = sub.add_parser("replay", help="re-run from a provenance file and compare bytes")
    sp.add_argument("provenance", metavar="PROVENANCE")
    sp.add_argument("--out", metavar="DIR", help="where to write the replayed artifacts")
    return p


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        if args.command == "describe":
            return cmd_describe(args)
        if args.command == "replay":
            return cmd_replay(args)
        return cmd_run(args)
    except ConfigError as exc:
        emit({"error": "config", "message": str(exc), "path": [str(p) for p in exc.path]}, sys.stderr)
        return 2
    except MissingArtifact as exc:
        emit({"error": "missing_artifact", "message": str(exc)}, sys.stderr)
        return 2
    except ReplayMismatch as exc:
        emit({"error": "mismatch", "message": str(exc)}, sys.stderr)
        return 1
    except SimulationError as exc:
        emit({"error": "simulation", "message": str(exc), "step": exc.step}, sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
