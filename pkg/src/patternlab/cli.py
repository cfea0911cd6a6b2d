"""Config-driven batch front end: ``patternlab <subcommand> --config file.toml --out dir``."""
from __future__ import annotations

import argparse
import hashlib
import json
import os
import platform
import sys
import time
from pathlib import Path

import jsonschema
import numpy as np
import scipy

try:
    import tomllib
except ModuleNotFoundError:  # python < 3.11
    import tomli as tomllib

from . import __version__
from .coupling import EscapedBasin, NonConvergence
from .dynamics import (
    GapViolation,
    NonHermitian,
    Resonant,
    SweepSpec,
    assemble,
    respond,
    spectrum,
    sweep,
)
from .groupoid import NotComposable
from .pattern import QuasiRotation, classify, generate, is_relatively_dense, is_separated, separation_radius
from .scenario import (
    SWEEP_PARAMETERS,
    KernelFactory,
    PatternFamily,
    generator_from_config,
    seed_from_config,
    separation_from_config,
    window_from_config,
)
from .transversal import WindowMetricParams, circle_embedding_check, estimate_transversal

EXIT_OK, EXIT_SCHEMA, EXIT_NUMERICAL = 0, 1, 2
NUMERICAL_ERRORS = (NonConvergence, EscapedBasin, Resonant, GapViolation, NonHermitian, NotComposable,
                    np.linalg.LinAlgError, ArithmeticError)

_num = {"type": "number"}
_vec = {"type": "array", "items": _num, "minItems": 2, "maxItems": 3}
_mat = {"type": "array", "items": {"type": "array", "items": _num}}
_iso = {"type": "object", "additionalProperties": False,
        "properties": {"v": _vec, "angle": _num, "reflect": {"type": "boolean"},
                       "rotvec": _vec, "r": _mat}}

SCHEMA = {
    "type": "object",
    "additionalProperties": False,
    "required": ["dim", "generator", "window"],
    "properties": {
        "dim": {"enum": [2, 3]},
        "seed": {"type": "integer"},
        "workers": {"type": "integer", "minimum": 1},
        "output": {"type": "string"},
        "generator": {
            "type": "object",
            "required": ["kind"],
            "properties": {"kind": {"enum": ["wallpaper", "quasirotation", "disordered", "explicit"]}},
            "oneOf": [
                {"additionalProperties": False, "required": ["group", "lattice_vectors"],
                 "properties": {"kind": {"const": "wallpaper"}, "group": {"enum": ["p1", "p2", "p4"]},
                                "lattice_vectors": _mat, "seed_offset": _iso}},
                {"additionalProperties": False, "required": ["step"],
                 "properties": {"kind": {"const": "quasirotation"}, "step": _iso, "phase": _num}},
                {"additionalProperties": False, "required": ["base", "epsilon_t", "epsilon_angle"],
                 "properties": {"kind": {"const": "disordered"},
                                "base": {"type": "object", "additionalProperties": False,
                                         "required": ["group", "lattice_vectors"],
                                         "properties": {"group": {"enum": ["p1", "p2", "p4"]},
                                                        "lattice_vectors": _mat, "seed_offset": _iso}},
                                "epsilon_t": {"type": "number", "minimum": 0},
                                "epsilon_angle": {"type": "number", "minimum": 0},
                                "rng_seed": {"type": "integer"}}},
                {"additionalProperties": False, "required": ["points"],
                 "properties": {"kind": {"const": "explicit"}, "points": {"type": "array", "items": _iso}}},
            ],
        },
        "window": {"type": "object", "additionalProperties": False, "required": ["radius"],
                   "properties": {"radius": {"type": "number", "exclusiveMinimum": 0},
                                  "radius_rotation": {"type": "number", "exclusiveMinimum": 0}}},
        "separation": {"type": "object", "additionalProperties": False, "required": ["u_radius", "k_radius"],
                       "properties": {"u_radius": {"type": "number", "exclusiveMinimum": 0},
                                      "k_radius": {"type": "number", "exclusiveMinimum": 0}}},
        "resonator": {"type": "object", "additionalProperties": False, "required": ["mass", "stiffness"],
                      "properties": {"mass": _mat, "stiffness": _mat,
                                     "frozen": {"type": "array", "items": {"type": "boolean"}},
                                     "dipoles": {"type": "array", "items": {
                                         "type": "object", "additionalProperties": False,
                                         "required": ["offset", "moment"],
                                         "properties": {"offset": _vec, "moment": _vec}}}}},
        "kernel": {"type": "object", "additionalProperties": False, "required": ["type"],
                   "properties": {"type": {"enum": ["dipole", "tabulated"]},
                                  "strength": _num, "cutoff": {"type": "number", "exclusiveMinimum": 0},
                                  "fd_step": {"type": "number", "exclusiveMinimum": 0},
                                  "file": {"type": "string"},
                                  "match_tolerance": {"type": "number", "exclusiveMinimum": 0},
                                  "interpolation": {"enum": ["nearest", "none"]},
                                  "hermitian_closure": {"type": "boolean"}}},
        "analysis": {
            "type": "object", "additionalProperties": False,
            "properties": {
                "transversal": {"type": "object", "additionalProperties": False, "required": ["window_radius"],
                                "properties": {"window_radius": {"type": "number", "exclusiveMinimum": 0},
                                               "boundary_slack": {"type": "number", "exclusiveMinimum": 0},
                                               "merge_tol": {"type": "number", "exclusiveMinimum": 0},
                                               "circle_check": {"type": "boolean"}}},
                "spectrum": {"type": "object", "additionalProperties": False,
                             "properties": {"interior": {"type": "boolean"},
                                            "symmetrize": {"type": "boolean"}}},
                "respond": {"type": "object", "additionalProperties": False, "required": ["omega"],
                            "properties": {"omega": _num,
                                           "drive": {"oneOf": [{"enum": ["uniform", "random"]},
                                                               {"type": "array", "items": _num}]}}},
                "sweep": {"type": "object", "additionalProperties": False,
                          "required": ["parameter", "start", "stop", "points"],
                          "properties": {"parameter": {"enum": list(SWEEP_PARAMETERS)},
                                         "start": _num, "stop": _num,
                                         "points": {"type": "integer", "minimum": 1},
                                         "interior": {"type": "boolean"}}},
            },
        },
    },
}


class ConfigError(ValueError):
    pass


def load_config(path) -> dict:
    try:
        with open(path, "rb") as fh:
            cfg = tomllib.load(fh)
    except (OSError, tomllib.TOMLDecodeError) as exc:
        raise ConfigError(f"cannot read config: {exc}") from exc
    errors = sorted(jsonschema.Draft202012Validator(SCHEMA).iter_errors(cfg), key=lambda e: list(e.path))
    if errors:
        raise ConfigError("; ".join(f"{'/'.join(map(str, e.path)) or '<root>'}: {e.message}" for e in errors))
    return cfg


def validate_config(cfg: dict) -> dict:
    """Physical sanity checks beyond the schema; no computation."""
    errors, warnings = [], []
    dim = cfg["dim"]
    try:
        generator_from_config(cfg["generator"], dim)
    except (ValueError, TypeError, KeyError) as exc:
        errors.append(f"generator: {exc}")
    res = cfg.get("resonator")
    if res is not None:
        for name in ("mass", "stiffness"):
            m = np.asarray(res[name], dtype=float)
            if m.ndim != 2 or m.shape[0] != m.shape[1]:
                errors.append(f"resonator.{name} must be a square matrix")
            elif not np.allclose(m, m.T) or np.linalg.eigvalsh(m).min() <= 0:
                errors.append(f"resonator.{name} must be symmetric positive definite")
        if not errors:
            try:
                seed_from_config(res, dim)
            except ValueError as exc:
                errors.append(f"resonator: {exc}")
    kernel = cfg.get("kernel")
    if kernel is not None:
        if kernel["type"] == "dipole" and res is None:
            errors.append("dipole kernel needs a [resonator] block")
        if kernel["type"] == "tabulated" and "file" not in kernel:
            errors.append("tabulated kernel needs a file")
        cutoff = kernel.get("cutoff", 2.5)
        if kernel["type"] == "dipole" and cutoff >= cfg["window"]["radius"]:
            warnings.append("coupling range is not smaller than the window radius: no interior sites")
    analysis = cfg.get("analysis", {})
    if any(k in analysis for k in ("spectrum", "respond", "sweep")) and kernel is None:
        errors.append("spectral analyses need a [kernel] block")
    tr = analysis.get("transversal")
    if tr and tr["window_radius"] >= cfg["window"]["radius"]:
        warnings.append("transversal window radius is not smaller than the pattern window")
    sw = analysis.get("sweep")
    if sw and sw["stop"] < sw["start"]:
        errors.append("sweep stop < start")
    return {"errors": errors, "warnings": warnings}


def _sha256(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


class Runner:
    def __init__(self, cfg: dict, out: Path, workers: int, seed: int):
        self.cfg, self.out, self.workers, self.seed = cfg, out, workers, seed
        self.dim = cfg["dim"]
        self.files: list[str] = []
        self.timings: dict[str, float] = {}
        self._pattern = None

    def _write(self, name: str, text: str) -> None:
        (self.out / name).write_text(text)
        self.files.append(name)

    def _json(self, name: str, obj) -> None:
        self._write(name, json.dumps(obj, indent=2, sort_keys=True) + "\n")

    def _timed(self, name, fn):
        t = time.perf_counter()
        fn()
        self.timings[name] = time.perf_counter() - t

    def pattern(self):
        if self._pattern is None:
            spec = generator_from_config(self.cfg["generator"], self.dim)
            self._pattern = generate(spec, window_from_config(self.cfg["window"]))
        return self._pattern

    def kernel(self, p):
        return KernelFactory(self.cfg.get("resonator"), self.cfg["kernel"], self.dim)(0.0, p)

    def generate(self):
        self._json("pattern.json", self.pattern().to_json())

    def classify(self):
        p = self.pattern()
        if "separation" not in self.cfg:
            raise ConfigError("classify needs a [separation] block")
        u, k = separation_from_config(self.cfg["separation"])
        sep = is_separated(p, u)
        witness = None
        if sep.witness is not None:
            witness = [int(sep.witness[0]), int(sep.witness[1])]
        self._json("classification.json", {
            "classification": classify(p, u, k).value, "points": len(p),
            "separated": bool(sep), "witness": witness,
            "relatively_dense": bool(is_relatively_dense(p, k)),
            "separation_radius": separation_radius(p) if len(p) > 1 else None})

    def transversal(self):
        p = self.pattern()
        tcfg = self.cfg.get("analysis", {}).get("transversal")
        if tcfg is None:
            raise ConfigError("transversal needs an [analysis.transversal] block")
        params = WindowMetricParams(tcfg["window_radius"], tcfg.get("boundary_slack"))
        est = estimate_transversal(p, params, tcfg.get("merge_tol", 1e-6), workers=self.workers)
        report = {"window_radius": params.window_radius, "boundary_slack": params.boundary_slack,
                  "merge_tol": est.merge_tol, "aligned": len(est.aligned),
                  "cluster_count": est.cluster_count, "cluster_sizes": est.sizes}
        if tcfg.get("circle_check", True) and isinstance(p.provenance, QuasiRotation) and p.dim == 2:
            report["circle_check"] = circle_embedding_check(p, params, estimate=est).to_json()
        self._json("transversal_report.json", report)

    def _dynamical(self):
        p = self.pattern()
        scfg = self.cfg.get("analysis", {}).get("spectrum", {})
        return assemble(self.kernel(p), p, symmetrize=scfg.get("symmetrize", False))

    def spectrum(self):
        scfg = self.cfg.get("analysis", {}).get("spectrum", {})
        S = spectrum(self._dynamical(), interior=scfg.get("interior", False))
        lines = ["index,eigenvalue"] + [f"{i},{float(e)!r}" for i, e in enumerate(S.eigenvalues)]
        self._write("spectrum.csv", "\n".join(lines) + "\n")

    def respond(self):
        rcfg = self.cfg.get("analysis", {}).get("respond")
        if rcfg is None:
            raise ConfigError("respond needs an [analysis.respond] block")
        D = self._dynamical()
        drive = rcfg.get("drive", "uniform")
        if drive == "uniform":
            f = np.ones(D.size)
        elif drive == "random":
            f = np.random.default_rng(self.seed).normal(size=D.size)
        else:
            f = np.asarray(drive, dtype=float)
            if f.shape != (D.size,):
                raise ConfigError(f"drive must have {D.size} entries")
        seed = seed_from_config(self.cfg["resonator"], self.dim) if "resonator" in self.cfg else None
        if seed is not None and seed.n_dof != D.n_dof:
            seed = None
        self._json("response.json", respond(D, seed, f, float(rcfg["omega"])).to_json())

    def sweep(self):
        scfg = self.cfg.get("analysis", {}).get("sweep")
        if scfg is None:
            raise ConfigError("sweep needs an [analysis.sweep] block")
        values = tuple(np.linspace(scfg["start"], scfg["stop"], scfg["points"]).tolist())
        param = scfg["parameter"]
        spec = SweepSpec(param, values,
                         PatternFamily(self.cfg["generator"], self.cfg["window"], self.dim, param),
                         KernelFactory(self.cfg.get("resonator"), self.cfg["kernel"], self.dim, param),
                         interior=scfg.get("interior", False))
        table = sweep(spec, self.workers)
        self._write("sweep.csv", table.to_csv())
        if table.failures:
            self._json("sweep_failures.json", {repr(k): v for k, v in table.failures.items()})

    def manifest(self, command: str, config_path: str):
        self._json("manifest.json", {
            "command": command, "config_path": str(config_path), "config": self.cfg,
            "seed": self.seed, "workers": self.workers,
            "versions": {"patternlab": __version__, "python": platform.python_version(),
                         "numpy": np.__version__, "scipy": scipy.__version__},
            "timings": self.timings,
            "outputs": {name: _sha256(self.out / name) for name in self.files},
        })


STAGES = ("generate", "classify", "transversal", "spectrum", "respond", "sweep")


def _stages_for(command: str, cfg: dict) -> list[str]:
    if command != "run":
        return [command]
    analysis = cfg.get("analysis", {})
    out = ["generate"]
    if "separation" in cfg:
        out.append("classify")
    for name in ("transversal", "spectrum", "respond", "sweep"):
        if name in analysis:
            out.append(name)
    if "kernel" in cfg and "spectrum" not in out and "sweep" not in analysis:
        out.append("spectrum")
    return out


_NEEDS = {"classify": ("separation", None), "transversal": ("analysis", "transversal"),
          "respond": ("analysis", "respond"), "sweep": ("analysis", "sweep"),
          "spectrum": ("kernel", None)}


def _missing_blocks(stages: list[str], cfg: dict) -> list[str]:
    out = []
    for st in stages:
        if st not in _NEEDS:
            continue
        top, inner = _NEEDS[st]
        block = cfg.get(top)
        if block is None or (inner is not None and inner not in block):
            out.append(f"{st} needs a [{top}{'.' + inner if inner else ''}] block")
        if st in ("respond", "sweep") and "kernel" not in cfg:
            out.append(f"{st} needs a [kernel] block")
    return out


def _error(payload: dict, code: int) -> int:
    print(json.dumps(payload), file=sys.stderr)
    return code


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(prog="patternlab", description=__doc__)
    sub = ap.add_subparsers(dest="command", required=True)
    for name in STAGES + ("run", "validate"):
        sp = sub.add_parser(name)
        sp.add_argument("--config", required=True)
        if name != "validate":
            sp.add_argument("--out", default=None)
            sp.add_argument("--workers", type=int, default=None)
            sp.add_argument("--seed", type=int, default=None)
    args = ap.parse_args(argv)

    try:
        cfg = load_config(args.config)
    except ConfigError as exc:
        return _error({"error": "schema", "message": str(exc)}, EXIT_SCHEMA)
    report = validate_config(cfg)
    if args.command == "validate":
        print(json.dumps(report, indent=2))
        return EXIT_SCHEMA if report["errors"] else EXIT_OK
    if report["errors"]:
        return _error({"error": "schema", "message": "; ".join(report["errors"])}, EXIT_SCHEMA)

    workers = args.workers or int(os.environ.get("PATTERNLAB_WORKERS", cfg.get("workers", 1)))
    seed = args.seed if args.seed is not None else cfg.get("seed", 0)
    out = Path(args.out or cfg.get("output", "patternlab_out"))
    stages = _stages_for(args.command, cfg)
    missing = _missing_blocks(stages, cfg)
    if missing:
        return _error({"error": "schema", "message": "; ".join(missing)}, EXIT_SCHEMA)
    runner = Runner(cfg, out, max(1, workers), seed)
    try:
        out.mkdir(parents=True, exist_ok=True)
        for stage in stages:
            runner._timed(stage, getattr(runner, stage))
        runner.manifest(args.command, args.config)
    except ConfigError as exc:
        return _error({"error": "schema", "message": str(exc)}, EXIT_SCHEMA)
    except NUMERICAL_ERRORS as exc:
        payload = {"error": "numerical", "type": type(exc).__name__, "message": str(exc)}
        (out / "error.json").write_text(json.dumps(payload, indent=2) + "\n")
        return _error(payload, EXIT_NUMERICAL)
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
