"""Dynamical matrices on l^2(L, C^N): assembly, spectra, responses, band projections, sweeps.

Rows are ordered site-major: row ``i * N + a`` is dof ``a`` of site ``i``.
"""
from __future__ import annotations

import csv
import io
import os
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy.linalg import eigh, solve
from scipy.spatial import cKDTree

from .algebra import CouplingKernel, regular_matrix
from .coupling import SeedResonator, mass_scaling
from .isometry import EQUAL_TOL, compose, inverse
from .pattern import Pattern, translate_pattern

HERMITIAN_TOL = 1e-12
RESONANCE_TOL = 1e-8
GAP_TOL = 1e-8


class NonHermitian(ValueError):
    pass


class Resonant(ArithmeticError):
    pass


class GapViolation(ValueError):
    pass


def interior_mask(p: Pattern, coupling_range: float) -> np.ndarray:
    """Sites at distance >= coupling_range from the window boundary."""
    dt, _ = p.window.offsets(p.vs, p.rs)
    return dt + coupling_range <= p.window.radius_translation + 1e-12


@dataclass(eq=False)
class DynamicalMatrix:
    pattern: Pattern
    n_dof: int
    matrix: np.ndarray
    coupling_range: float
    interior: np.ndarray = None

    def __post_init__(self):
        n = len(self.pattern) * self.n_dof
        if self.matrix.shape != (n, n):
            raise ValueError(f"matrix shape {self.matrix.shape} does not match {n} rows")
        if self.interior is None:
            self.interior = interior_mask(self.pattern, self.coupling_range)

    @property
    def size(self) -> int:
        return self.matrix.shape[0]

    def index(self, site: int, dof: int) -> int:
        return site * self.n_dof + dof

    def site_dof(self, row: int) -> tuple[int, int]:
        return divmod(row, self.n_dof)

    def hermiticity_error(self) -> float:
        return float(np.max(np.abs(self.matrix - self.matrix.conj().T))) if self.size else 0.0

    def block(self, i: int, j: int) -> np.ndarray:
        N = self.n_dof
        return self.matrix[i * N:(i + 1) * N, j * N:(j + 1) * N]

    def row_interior(self) -> np.ndarray:
        return np.repeat(self.interior, self.n_dof)


def _check_hermitian(D: DynamicalMatrix, symmetrize: bool) -> DynamicalMatrix:
    err = D.hermiticity_error()
    scale = max(1.0, float(np.max(np.abs(D.matrix)))) if D.size else 1.0
    if err > HERMITIAN_TOL * scale:
        if not symmetrize:
            raise NonHermitian(f"kernel is not hermitian: |D - D^dagger| = {err:.3e}")
        warnings.warn(f"symmetrizing a non-hermitian dynamical matrix (error {err:.3e})")
        D.matrix = 0.5 * (D.matrix + D.matrix.conj().T)
    return D


def assemble(k: CouplingKernel, p: Pattern, symmetrize: bool = False) -> DynamicalMatrix:
    """D_L = sum_{x,x'} w_{e, x'x^-1}(x.L) (x) |x><x'|, block (x, x') = k(x' x^-1, x.p)."""
    n, N = len(p), k.n_dof
    out = np.zeros((n * N, n * N), dtype=complex)
    if n:
        pos = p.positions()
        tree = cKDTree(pos)
        for i in range(n):
            x = p[i]
            xp = translate_pattern(x, p)
            for j in tree.query_ball_point(pos[i], k.coupling_range + EQUAL_TOL):
                out[i * N:(i + 1) * N, j * N:(j + 1) * N] = k.evaluate(compose(p[j], inverse(x)), xp)
    return _check_hermitian(DynamicalMatrix(p, N, out, k.coupling_range), symmetrize)


def represent(k: CouplingKernel, p: Pattern) -> DynamicalMatrix:
    """Left-regular representation pi_L(f) on l^2(L, C^N); p must contain the identity."""
    return DynamicalMatrix(p, k.n_dof, regular_matrix(k, p), k.coupling_range)


def from_blocks(blocks: dict, p: Pattern, n_dof: int, coupling_range: float) -> DynamicalMatrix:
    """Direct assembly from site-indexed blocks {(i, j): w_ij}, bypassing kernels."""
    n, N = len(p), n_dof
    out = np.zeros((n * N, n * N), dtype=complex)
    for (i, j), m in blocks.items():
        out[i * N:(i + 1) * N, j * N:(j + 1) * N] = m
    return DynamicalMatrix(p, N, out, coupling_range)


@dataclass
class SpectrumResult:
    eigenvalues: np.ndarray
    eigenvectors: np.ndarray | None = None
    interior_filtered: bool = False
    interior_weights: np.ndarray | None = None
    degeneracy_tol: float = 1e-9

    def __len__(self) -> int:
        return len(self.eigenvalues)

    def degeneracies(self) -> list[tuple[int, int]]:
        """(start, multiplicity) of eigenvalue clusters closer than degeneracy_tol."""
        ev = self.eigenvalues
        out, start = [], 0
        for i in range(1, len(ev) + 1):
            if i == len(ev) or ev[i] - ev[i - 1] > self.degeneracy_tol:
                out.append((start, i - start))
                start = i
        return out

    def gaps(self, min_width: float = 0.0) -> list[tuple[float, float]]:
        ev = self.eigenvalues
        d = np.diff(ev)
        return [(float(ev[i]), float(ev[i + 1])) for i in np.flatnonzero(d > min_width)]


def spectrum(D: DynamicalMatrix, vectors: bool = False, interior: bool = False,
             interior_threshold: float = 0.5) -> SpectrumResult:
    """Dense self-adjoint eigensolve.

    With ``interior=True`` only eigenpairs carrying at least
    ``interior_threshold`` of their weight on interior sites are kept, which
    suppresses edge modes of the open boundary.
    """
    if D.size == 0:
        return SpectrumResult(np.zeros(0), np.zeros((0, 0)) if vectors else None, interior)
    m = D.matrix
    herm = 0.5 * (m + m.conj().T)
    real = not np.iscomplexobj(herm) or np.max(np.abs(herm.imag)) == 0.0
    a = herm.real if real else herm
    need = vectors or interior
    if need:
        w, v = eigh(a, driver="ev")
    else:
        w, v = eigh(a, eigvals_only=True, driver="ev"), None
    order = np.argsort(w, kind="stable")
    w = w[order]
    if v is not None:
        v = v[:, order]
    weights = None
    if interior:
        weights = np.sum(np.abs(v[D.row_interior()]) ** 2, axis=0)
        keep = weights >= interior_threshold
        w, v, weights = w[keep], v[:, keep], weights[keep]
    return SpectrumResult(w, v if vectors else None, interior, weights)


def residuals(D: DynamicalMatrix, S: SpectrumResult) -> np.ndarray:
    if S.eigenvectors is None:
        raise ValueError("spectrum was computed without eigenvectors")
    v = S.eigenvectors
    return np.linalg.norm(D.matrix @ v - v * S.eigenvalues, axis=0)


@dataclass
class ResponseResult:
    omega: float
    xi: np.ndarray
    residual: float

    def to_json(self) -> dict:
        xi = self.xi
        if np.iscomplexobj(xi) and np.any(xi.imag != 0):
            vals = [[float(z.real), float(z.imag)] for z in xi]
        else:
            vals = [float(z) for z in np.real(xi)]
        return {"omega": self.omega, "xi": vals, "residual": self.residual}


def respond(D: DynamicalMatrix, seed: SeedResonator | None, drive, omega: float,
            eigenvalues: np.ndarray | None = None) -> ResponseResult:
    """Solve (D - omega^2) xi = (M0^{-1/2} per site) f."""
    f = np.asarray(drive)
    if f.shape != (D.size,):
        raise ValueError(f"drive must have {D.size} entries")
    n = len(D.pattern)
    if seed is None:
        scaled = f.astype(complex) if np.iscomplexobj(f) else f.astype(float)
    else:
        if seed.n_dof != D.n_dof:
            raise ValueError("seed/dynamical-matrix dof mismatch")
        s = mass_scaling(seed)
        scaled = (f.reshape(n, D.n_dof) @ s.T).reshape(-1)
    w2 = omega ** 2
    ev = spectrum(D).eigenvalues if eigenvalues is None else eigenvalues
    if len(ev) and np.min(np.abs(ev - w2)) <= RESONANCE_TOL:
        raise Resonant(f"omega^2 = {w2:.6g} is within {RESONANCE_TOL} of an eigenvalue")
    A = D.matrix - w2 * np.eye(D.size)
    if np.max(np.abs(A.imag)) == 0.0:
        A = A.real
    xi = solve(A, scaled, assume_a="her")
    res = float(np.linalg.norm(A @ xi - scaled))
    return ResponseResult(float(omega), xi, res)


@dataclass
class BandProjection:
    gap: tuple
    projector: np.ndarray
    rank: int

    def idempotency_error(self) -> float:
        P = self.projector
        return float(np.max(np.abs(P @ P - P))) if P.size else 0.0

    def hermiticity_error(self) -> float:
        P = self.projector
        return float(np.max(np.abs(P - P.conj().T))) if P.size else 0.0


def band_projection(S: SpectrumResult, gap: tuple) -> BandProjection:
    """Projector onto the eigenvalues strictly inside ``gap = (a, b)``."""
    a, b = map(float, gap)
    if not a < b:
        raise ValueError("need a < b")
    if S.eigenvectors is None:
        raise ValueError("band projection needs eigenvectors")
    if S.interior_filtered:
        raise ValueError("band projection needs the full spectrum")
    ev = S.eigenvalues
    if np.any(np.abs(ev - a) <= GAP_TOL) or np.any(np.abs(ev - b) <= GAP_TOL):
        raise GapViolation(f"eigenvalues touch the boundary of ({a}, {b})")
    sel = (ev > a) & (ev < b)
    v = S.eigenvectors[:, sel]
    return BandProjection((a, b), v @ v.conj().T, int(sel.sum()))


# -- sweeps ------------------------------------------------------------------

@dataclass(frozen=True)
class SweepSpec:
    """``family(value)`` builds the pattern, ``kernel_factory(value, pattern)`` the kernel.

    Both must be picklable (module-level functions or functools.partial) for
    parallel runs.
    """
    parameter: str
    values: tuple
    family: Callable[[float], Pattern]
    kernel_factory: Callable[[float, Pattern], CouplingKernel]
    interior: bool = False

    def __post_init__(self):
        vals = tuple(float(v) for v in self.values)
        if not vals:
            raise ValueError("empty sweep grid")
        if any(b < a for a, b in zip(vals, vals[1:])):
            raise ValueError("sweep grid must be sorted")
        object.__setattr__(self, "values", vals)


@dataclass
class SweepTable:
    parameter: str
    values: tuple
    spectra: list
    failures: dict = field(default_factory=dict)

    def rows(self):
        for value, ev in zip(self.values, self.spectra):
            if ev is None:
                continue
            for i, e in enumerate(ev):
                yield value, i, float(e)

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["param", "index", "eigenvalue"])
        for value, i, e in self.rows():
            w.writerow([repr(float(value)), i, repr(e)])
        return buf.getvalue()


def _sweep_point(spec: SweepSpec, value: float):
    try:
        p = spec.family(value)
        D = assemble(spec.kernel_factory(value, p), p)
        return spectrum(D, interior=spec.interior).eigenvalues, None
    except Exception as exc:  # recorded per point, the sweep goes on
        return None, f"{type(exc).__name__}: {exc}"


def _limit_threads():
    for var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS"):
        os.environ[var] = "1"


def sweep(spec: SweepSpec, workers: int = 1) -> SweepTable:
    """Spectrum at every grid value; results are merged in grid order."""
    values = spec.values
    if workers > 1:
        with ProcessPoolExecutor(workers, initializer=_limit_threads) as ex:
            results = list(ex.map(_sweep_point, [spec] * len(values), values))
    else:
        results = [_sweep_point(spec, v) for v in values]
    spectra = [r[0] for r in results]
    failures = {v: r[1] for v, r in zip(values, results) if r[1] is not None}
    return SweepTable(spec.parameter, values, spectra, failures)
