"""Compactly supported M_N(C)-valued kernels on the canonical groupoid.

A kernel ``f(g, L)`` is evaluated on groupoid elements: ``L`` is a pattern
containing the identity and ``g`` a point of ``L``.  Supports are balls
B_R x O(d) around the identity, so the coupling range is a translation
length.  The algebra operations are

    (f1 * f2)(g, L) = sum_{g' in L} f1(g g'^-1, g'.L) f2(g', L)
    f^*(g, L)       = f(g^-1, g.L)^dagger
    rho(f)(L)       = f(e, L)
    <f1|f2>(L)      = sum_{g in L} f1(g, L)^dagger f2(g, L)
"""
from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np
from scipy.spatial import cKDTree

from .groupoid import GroupoidElement, act
from .isometry import EQUAL_TOL, Isometry, compose, distance_arrays, inverse
from .pattern import Pattern, translate_pattern


class CouplingKernel:
    n_dof: int
    coupling_range: float

    def __init__(self, n_dof: int, coupling_range: float):
        if n_dof < 1:
            raise ValueError("n_dof must be positive")
        self.n_dof = int(n_dof)
        self.coupling_range = float(coupling_range)

    def _evaluate(self, g: Isometry, L: Pattern) -> np.ndarray:
        raise NotImplementedError

    def evaluate(self, g: Isometry, L: Pattern) -> np.ndarray:
        if np.linalg.norm(g.v) > self.coupling_range + EQUAL_TOL:
            return np.zeros((self.n_dof, self.n_dof), dtype=complex)
        return np.asarray(self._evaluate(g, L), dtype=complex)

    def __call__(self, g: Isometry, L: Pattern) -> np.ndarray:
        return self.evaluate(g, L)

    def __mul__(self, c) -> "CouplingKernel":
        return FunctionKernel(lambda g, L: c * self.evaluate(g, L), self.n_dof, self.coupling_range)

    __rmul__ = __mul__

    def __add__(self, other: "CouplingKernel") -> "CouplingKernel":
        _check_dof(self, other)
        return FunctionKernel(lambda g, L: self.evaluate(g, L) + other.evaluate(g, L),
                              self.n_dof, max(self.coupling_range, other.coupling_range))

    def __matmul__(self, other: "CouplingKernel") -> "CouplingKernel":
        return convolve(self, other)


def _check_dof(a: CouplingKernel, b: CouplingKernel) -> None:
    if a.n_dof != b.n_dof:
        raise ValueError(f"dof mismatch: {a.n_dof} vs {b.n_dof}")


class FunctionKernel(CouplingKernel):
    def __init__(self, fn: Callable[[Isometry, Pattern], np.ndarray], n_dof: int, coupling_range: float):
        super().__init__(n_dof, coupling_range)
        self.fn = fn

    def _evaluate(self, g, L):
        return self.fn(g, L)


class DeltaKernel(CouplingKernel):
    """The unit: I_N on the unit space, zero elsewhere."""

    def __init__(self, n_dof: int):
        super().__init__(n_dof, 0.0)

    def _evaluate(self, g, L):
        if np.linalg.norm(g.v) + np.linalg.norm(g.r - np.eye(g.dim)) <= EQUAL_TOL:
            return np.eye(self.n_dof, dtype=complex)
        return np.zeros((self.n_dof, self.n_dof), dtype=complex)


class TabulatedKernel(CouplingKernel):
    """Kernel given by sampled (g, matrix) pairs; independent of L.

    ``interpolation="nearest"`` returns the entry closest to g in group
    distance when it lies within ``match_tolerance``; ``"none"`` demands an
    exact match (1e-12).
    """

    def __init__(self, entries: Sequence[tuple[Isometry, np.ndarray]], match_tolerance: float = 1e-6,
                 interpolation: str = "nearest", hermitian_closure: bool = False,
                 coupling_range: float | None = None):
        if not entries:
            raise ValueError("no entries")
        if interpolation not in ("nearest", "none"):
            raise ValueError("interpolation must be 'nearest' or 'none'")
        entries = [(g, np.atleast_2d(np.asarray(m, dtype=complex))) for g, m in entries]
        if hermitian_closure:
            extra = []
            # involutions (g^-1 = g) must carry hermitian matrices themselves
            entries = [(g, 0.5 * (m + m.conj().T)) if inverse(g).allclose(g, 1e-12) else (g, m)
                       for g, m in entries]
            for g, m in entries:
                gi = inverse(g)
                if not any(h.allclose(gi, 1e-12) for h, _ in entries + extra):
                    extra.append((gi, m.conj().T))
            entries = entries + extra
        n = entries[0][1].shape[0]
        reach = max(np.linalg.norm(g.v) for g, _ in entries)
        if coupling_range is None:
            coupling_range = reach
        elif reach > coupling_range + EQUAL_TOL:
            raise ValueError("entries outside the coupling range")
        super().__init__(n, coupling_range)
        self.entries = entries
        self.match_tolerance = match_tolerance if interpolation == "nearest" else 1e-12
        self.interpolation = interpolation
        self._vs = np.stack([g.v for g, _ in entries])
        self._rs = np.stack([g.r for g, _ in entries])
        self._ms = np.stack([m for _, m in entries])

    def _evaluate(self, g, L):
        d = distance_arrays(self._vs, self._rs, g.v, g.r)
        i = int(np.argmin(d))
        if d[i] <= self.match_tolerance:
            return self._ms[i]
        return np.zeros((self.n_dof, self.n_dof), dtype=complex)

    def to_json(self) -> list[dict]:
        return [{"g": g.to_json(), "m": [[[z.real, z.imag] for z in row] for row in m]}
                for g, m in self.entries]

    @classmethod
    def from_json(cls, obj: list[dict], **kw) -> "TabulatedKernel":
        entries = []
        for e in obj:
            m = np.asarray(e["m"], dtype=float)
            entries.append((Isometry.from_json(e["g"]), m[..., 0] + 1j * m[..., 1]))
        return cls(entries, **kw)

    def save(self, path) -> None:
        with open(path, "w") as fh:
            json.dump(self.to_json(), fh)

    @classmethod
    def load(cls, path, **kw) -> "TabulatedKernel":
        with open(path) as fh:
            return cls.from_json(json.load(fh), **kw)


def support(L: Pattern, radius: float) -> np.ndarray:
    """Indices of points of L within translation distance ``radius`` of e."""
    return np.flatnonzero(np.linalg.norm(L.vs, axis=1) <= radius + EQUAL_TOL)


class ConvolutionKernel(CouplingKernel):
    def __init__(self, f1: CouplingKernel, f2: CouplingKernel):
        _check_dof(f1, f2)
        super().__init__(f1.n_dof, f1.coupling_range + f2.coupling_range)
        self.f1, self.f2 = f1, f2

    def _evaluate(self, g, L):
        out = np.zeros((self.n_dof, self.n_dof), dtype=complex)
        for k in support(L, self.f2.coupling_range):
            gp = L[k]
            right = self.f2.evaluate(gp, L)
            if not right.any():
                continue
            out += self.f1.evaluate(compose(g, inverse(gp)), translate_pattern(gp, L)) @ right
        return out

    def tainted(self, g: Isometry, L: Pattern) -> bool:
        """True when the sum may have lost terms to the window boundary."""
        c = L.window.center_position(L.dim)
        avail = L.window.radius_translation - np.linalg.norm(c)
        return np.linalg.norm(g.v) + self.coupling_range > avail


class StarKernel(CouplingKernel):
    def __init__(self, f: CouplingKernel):
        super().__init__(f.n_dof, f.coupling_range)
        self.f = f

    def _evaluate(self, g, L):
        return self.f.evaluate(inverse(g), translate_pattern(g, L)).conj().T


def convolve(f1: CouplingKernel, f2: CouplingKernel) -> ConvolutionKernel:
    return ConvolutionKernel(f1, f2)


def star(f: CouplingKernel) -> CouplingKernel:
    if isinstance(f, StarKernel):
        return f.f
    return StarKernel(f)


def restrict(f: CouplingKernel, L: Pattern) -> np.ndarray:
    if not L.contains_identity():
        raise ValueError("pattern does not contain the identity")
    return f.evaluate(Isometry.identity(L.dim), L)


def inner_product(f1: CouplingKernel, f2: CouplingKernel, L: Pattern) -> np.ndarray:
    """<f1|f2>(L), conjugate-linear in f1."""
    _check_dof(f1, f2)
    if not L.contains_identity():
        raise ValueError("pattern does not contain the identity")
    out = np.zeros((f1.n_dof, f1.n_dof), dtype=complex)
    for k in support(L, min(f1.coupling_range, f2.coupling_range)):
        g = L[k]
        out += f1.evaluate(g, L).conj().T @ f2.evaluate(g, L)
    return out


def regular_matrix(f: CouplingKernel, L: Pattern) -> np.ndarray:
    """Left-regular representation of f on l^2(L, C^N) as a dense matrix.

    Column g' holds pi_L(f)(alpha (x) |g'>) = sum_g f(g.(g', L)) alpha (x) |g>,
    i.e. block (g, g') = f(g.(g', L)) with g.(g', L) = (g' g^-1, g.L).
    The groupoid action is evaluated through the groupoid operations.
    """
    if not L.contains_identity():
        raise ValueError("pattern does not contain the identity")
    n, N = len(L), f.n_dof
    out = np.zeros((n * N, n * N), dtype=complex)
    tree = cKDTree(L.positions())
    for i in range(n):
        h = GroupoidElement(L[i], L)
        for j in tree.query_ball_point(L.positions()[i], f.coupling_range + EQUAL_TOL):
            e = act(h, GroupoidElement(L[j], L), check=False)
            out[i * N:(i + 1) * N, j * N:(j + 1) * N] = f.evaluate(e.g, e.pattern)
    return out


@dataclass
class AlgebraElementSample:
    kernel: CouplingKernel
    transversal_sample: list

    def __post_init__(self):
        if not self.transversal_sample:
            raise ValueError("empty sample")
        for L in self.transversal_sample:
            if not L.contains_identity():
                raise ValueError("sample patterns must contain the identity")


def identity_ball(L: Pattern, radius: float) -> Pattern:
    from .pattern import Window
    idx = support(L, radius)
    return Pattern(L.vs[idx], L.rs[idx], Window(radius), L.provenance,
                   tuple(L.labels[i] for i in idx))


def norm_estimate(f: CouplingKernel, sample, window_sizes: Sequence[float]):
    """Operator norm of truncated left-regular matrices, maximised over the sample.

    Returns (estimate at the largest window, table of (size, max norm)).
    """
    patterns = sample.transversal_sample if isinstance(sample, AlgebraElementSample) else list(sample)
    if not patterns:
        raise ValueError("empty sample")
    table = []
    for s in sorted(window_sizes):
        best = 0.0
        for L in patterns:
            m = regular_matrix(f, identity_ball(L, s))
            best = max(best, float(np.linalg.norm(m, 2)) if m.size else 0.0)
        table.append((float(s), best))
    return table[-1][1], table
