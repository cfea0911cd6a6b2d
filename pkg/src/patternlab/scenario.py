"""Builders from plain config dicts, and picklable pattern/kernel factories for sweeps."""
from __future__ import annotations

import dataclasses
from dataclasses import dataclass

import numpy as np

from .algebra import CouplingKernel, TabulatedKernel
from .coupling import CouplingModel, DipoleDipole, SeedResonator
from .isometry import Isometry, rotation2, rotation3, rotvec_to_matrix
from .pattern import (
    BallTimesO,
    Disordered,
    Explicit,
    Pattern,
    QuasiRotation,
    Wallpaper,
    Window,
    generate,
)

SWEEP_PARAMETERS = ("phase", "theta", "strength")


def isometry_from_config(cfg: dict, dim: int) -> Isometry:
    """{v, angle, reflect} in the plane, {v, rotvec} in space, or {v, r} in general."""
    v = np.asarray(cfg.get("v", np.zeros(dim)), dtype=float)
    if "r" in cfg:
        return Isometry.from_json({"v": v.tolist(), "r": cfg["r"]})
    if dim == 2:
        return Isometry.planar(v, float(cfg.get("angle", 0.0)), bool(cfg.get("reflect", False)))
    r = rotvec_to_matrix(cfg.get("rotvec", [0.0, 0.0, 0.0]))
    if cfg.get("reflect", False):
        r = -r
    return Isometry(v, r)


def generator_from_config(cfg: dict, dim: int):
    kind = cfg["kind"]
    if kind == "wallpaper":
        return Wallpaper(cfg["group"], tuple(map(tuple, cfg["lattice_vectors"])),
                         isometry_from_config(cfg.get("seed_offset", {}), 2))
    if kind == "quasirotation":
        return QuasiRotation(isometry_from_config(cfg["step"], dim), float(cfg.get("phase", 0.0)))
    if kind == "disordered":
        base = generator_from_config(dict(cfg["base"], kind="wallpaper"), 2)
        return Disordered(base, float(cfg["epsilon_t"]), float(cfg["epsilon_angle"]),
                          int(cfg.get("rng_seed", 0)))
    if kind == "explicit":
        return Explicit(tuple(isometry_from_config(q, dim) for q in cfg["points"]))
    raise ValueError(f"unknown generator kind {kind!r}")


def window_from_config(cfg: dict) -> Window:
    rr = cfg.get("radius_rotation")
    return Window(float(cfg["radius"]), np.inf if rr is None else float(rr))


def separation_from_config(cfg: dict) -> tuple[BallTimesO, BallTimesO]:
    return BallTimesO(float(cfg["u_radius"])), BallTimesO(float(cfg["k_radius"]))


def seed_from_config(cfg: dict, dim: int) -> SeedResonator:
    return SeedResonator.from_config(cfg, dim)


def rotate_in_place(p: Pattern, phi: float) -> Pattern:
    """Turn every resonator by phi about its own center (about z in space)."""
    r = rotation2(phi) if p.dim == 2 else rotation3([0, 0, 1], phi)
    g = Isometry(np.zeros(p.dim), r.T)
    vs = p.vs @ g.r.T
    rs = np.einsum("ij,njk->nik", g.r, p.rs)
    return Pattern(vs, rs, p.window, p.provenance, p.labels)


@dataclass(frozen=True)
class PatternFamily:
    """Pattern as a function of one sweep parameter."""
    generator: dict
    window: dict
    dim: int
    parameter: str

    def __call__(self, value: float) -> Pattern:
        spec = generator_from_config(self.generator, self.dim)
        window = window_from_config(self.window)
        if self.parameter == "phase":
            if isinstance(spec, QuasiRotation):
                return generate(dataclasses.replace(spec, phase=float(value)), window)
            return rotate_in_place(generate(spec, window), float(value))
        if self.parameter == "theta":
            if not isinstance(spec, QuasiRotation) or self.dim != 2:
                raise ValueError("theta sweeps need a planar quasirotation generator")
            step = Isometry(spec.step.v, rotation2(float(value)))
            return generate(dataclasses.replace(spec, step=step), window)
        return generate(spec, window)


@dataclass(frozen=True)
class KernelFactory:
    resonator: dict | None
    kernel: dict
    dim: int
    parameter: str = ""

    def __call__(self, value: float, pattern: Pattern) -> CouplingKernel:
        cfg = self.kernel
        if cfg["type"] == "tabulated":
            return TabulatedKernel.load(cfg["file"], match_tolerance=float(cfg.get("match_tolerance", 1e-6)),
                                        interpolation=cfg.get("interpolation", "nearest"),
                                        hermitian_closure=bool(cfg.get("hermitian_closure", False)))
        seed = seed_from_config(self.resonator, self.dim)
        strength = float(value) if self.parameter == "strength" else float(cfg.get("strength", 1.0))
        pot = DipoleDipole.from_seed(seed, strength, float(cfg.get("cutoff", 2.5)))
        return CouplingModel(seed, pot, fd_rel=float(cfg.get("fd_step", 1e-3))).kernel(pattern)
