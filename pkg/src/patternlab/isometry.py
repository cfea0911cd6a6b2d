"""Euclidean isometries (v, r) in R^d x| O(d) for d in {2, 3}.

Composition follows the semidirect-product rule
``(v1, r1)(v2, r2) = (v1 + r1 v2, r1 r2)``.  Rotation parts are stored as
full orthogonal matrices so proper and improper elements share one code path.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

ORTHO_DRIFT = 1e-12
JSON_ORTHO_TOL = 1e-6
EQUAL_TOL = 1e-9


def rotation2(angle: float) -> np.ndarray:
    c, s = np.cos(angle), np.sin(angle)
    return np.array([[c, -s], [s, c]])


def rotation3(axis, angle: float) -> np.ndarray:
    """Rodrigues rotation about ``axis`` by ``angle``."""
    axis = np.asarray(axis, dtype=float)
    n = np.linalg.norm(axis)
    if n == 0.0:
        return np.eye(3)
    k = axis / n
    K = np.array([[0.0, -k[2], k[1]], [k[2], 0.0, -k[0]], [-k[1], k[0], 0.0]])
    return np.eye(3) + np.sin(angle) * K + (1.0 - np.cos(angle)) * (K @ K)


def rotvec_to_matrix(omega) -> np.ndarray:
    omega = np.asarray(omega, dtype=float)
    return rotation3(omega, np.linalg.norm(omega))


def polar_project(r: np.ndarray) -> np.ndarray:
    """Nearest orthogonal matrix (polar factor)."""
    u, _, vt = np.linalg.svd(r)
    return u @ vt


def _orthonormalize(r: np.ndarray) -> np.ndarray:
    drift = np.max(np.abs(r @ r.T - np.eye(r.shape[0])))
    if drift > ORTHO_DRIFT:
        return polar_project(r)
    return r


@dataclass(frozen=True, eq=False)
class Isometry:
    v: np.ndarray
    r: np.ndarray

    def __post_init__(self):
        v = np.array(self.v, dtype=float).reshape(-1)
        r = np.array(self.r, dtype=float)
        d = v.shape[0]
        if d not in (2, 3) or r.shape != (d, d):
            raise ValueError(f"bad isometry shapes v={v.shape} r={r.shape}")
        v.setflags(write=False)
        r.setflags(write=False)
        object.__setattr__(self, "v", v)
        object.__setattr__(self, "r", r)

    @property
    def dim(self) -> int:
        return self.v.shape[0]

    @property
    def det(self) -> float:
        return float(np.linalg.det(self.r))

    @property
    def proper(self) -> bool:
        return self.det > 0

    @classmethod
    def identity(cls, dim: int) -> "Isometry":
        return cls(np.zeros(dim), np.eye(dim))

    @classmethod
    def translation(cls, v) -> "Isometry":
        v = np.asarray(v, dtype=float)
        return cls(v, np.eye(v.shape[0]))

    @classmethod
    def planar(cls, v, angle: float = 0.0, reflect: bool = False) -> "Isometry":
        """2D element: rotation by ``angle``, optionally preceded by the swap reflection."""
        r = rotation2(angle)
        if reflect:
            r = r @ np.array([[0.0, 1.0], [1.0, 0.0]])
        return cls(v, r)

    @classmethod
    def random(cls, dim: int, rng: np.random.Generator, scale: float = 1.0,
               improper: bool | None = None) -> "Isometry":
        q, rr = np.linalg.qr(rng.normal(size=(dim, dim)))
        q = q * np.sign(np.diag(rr))
        if improper is not None:
            want = -1.0 if improper else 1.0
            if np.sign(np.linalg.det(q)) != want:
                q[:, 0] = -q[:, 0]
        return cls(rng.uniform(-scale, scale, size=dim), q)

    def __matmul__(self, other: "Isometry") -> "Isometry":
        return compose(self, other)

    def inverse(self) -> "Isometry":
        return inverse(self)

    def act(self, p) -> np.ndarray:
        return act_on_point(self, p)

    def angle(self) -> float:
        """In-plane rotation angle of a 2D element (of r, or of r p for improper r)."""
        if self.dim != 2:
            raise ValueError("angle() is defined for d=2 only")
        r = self.r if self.proper else self.r @ np.array([[0.0, 1.0], [1.0, 0.0]])
        return float(np.arctan2(r[1, 0], r[0, 0]))

    def allclose(self, other: "Isometry", tol: float = EQUAL_TOL) -> bool:
        return self.dim == other.dim and group_distance(self, other) <= tol

    def to_json(self) -> dict:
        return {"dim": self.dim, "v": self.v.tolist(), "r": self.r.tolist()}

    @classmethod
    def from_json(cls, obj: dict) -> "Isometry":
        r = np.asarray(obj["r"], dtype=float)
        v = np.asarray(obj["v"], dtype=float)
        if "dim" in obj and (v.shape != (obj["dim"],) or r.shape != (obj["dim"],) * 2):
            raise ValueError("dim does not match v/r shapes")
        dev = np.max(np.abs(r @ r.T - np.eye(r.shape[0])))
        if dev > JSON_ORTHO_TOL:
            raise ValueError(f"rotation part is not orthogonal (deviation {dev:.2e})")
        return cls(v, _orthonormalize(r))

    def __repr__(self) -> str:
        return f"Isometry(v={self.v.tolist()}, r={self.r.tolist()})"


@dataclass(frozen=True)
class GroupMetricParams:
    translation_weight: float = 1.0
    rotation_weight: float = 1.0

    def __post_init__(self):
        if not (self.translation_weight > 0 and self.rotation_weight > 0):
            raise ValueError("metric weights must be strictly positive")


DEFAULT_METRIC = GroupMetricParams()


def _check_dims(a: Isometry, b: Isometry) -> None:
    if a.dim != b.dim:
        raise ValueError(f"dimension mismatch: {a.dim} vs {b.dim}")


def compose(a: Isometry, b: Isometry) -> Isometry:
    _check_dims(a, b)
    return Isometry(a.v + a.r @ b.v, _orthonormalize(a.r @ b.r))


def inverse(a: Isometry) -> Isometry:
    rt = a.r.T
    return Isometry(-rt @ a.v, rt)


def act_on_point(a: Isometry, p) -> np.ndarray:
    p = np.asarray(p, dtype=float)
    if p.shape[-1] != a.dim:
        raise ValueError(f"dimension mismatch: point {p.shape[-1]} vs isometry {a.dim}")
    return p @ a.r.T + a.v


def right_translate(g: Isometry, x: Isometry) -> Isometry:
    """The right action ``g . x = x g^-1``."""
    return compose(x, inverse(g))


def group_distance(a: Isometry, b: Isometry, params: GroupMetricParams = DEFAULT_METRIC) -> float:
    _check_dims(a, b)
    return float(params.translation_weight * np.linalg.norm(a.v - b.v)
                 + params.rotation_weight * np.linalg.norm(a.r - b.r))


# Batched helpers over stacked arrays vs (n, d), rs (n, d, d).

def compose_arrays(v1, r1, v2, r2):
    v = v1 + np.einsum("...ij,...j->...i", r1, v2)
    r = np.einsum("...ij,...jk->...ik", r1, r2)
    return v, r


def inverse_arrays(v, r):
    rt = np.swapaxes(r, -1, -2)
    return -np.einsum("...ij,...j->...i", rt, v), rt


def distance_arrays(v1, r1, v2, r2, params: GroupMetricParams = DEFAULT_METRIC):
    dv = np.linalg.norm(v1 - v2, axis=-1)
    dr = np.sqrt(np.sum((r1 - r2) ** 2, axis=(-2, -1)))
    return params.translation_weight * dv + params.rotation_weight * dr
