"""Finite-window patterns in Iso(E^d) and their generators.

A pattern element ``x`` is the frame map of a resonator: it sends laboratory
coordinates to the resonator's co-moving coordinates, so the resonator sits
at ``x^-1 . 0`` with orientation ``r_x^T``.  With this convention the right
action ``g . x = x g^-1`` moves every resonator rigidly by ``g``.
"""
from __future__ import annotations

import enum
import itertools
from dataclasses import dataclass, field
from typing import Sequence, Union

import numpy as np
from scipy.spatial import cKDTree
from scipy.spatial.transform import Rotation

from .isometry import (
    EQUAL_TOL,
    Isometry,
    compose_arrays,
    distance_arrays,
    inverse,
    inverse_arrays,
    right_translate,
    rotation2,
    rotation3,
)


@dataclass(frozen=True)
class Window:
    radius_translation: float
    radius_rotation: float = np.inf
    center: Isometry | None = None

    def __post_init__(self):
        if not (self.radius_translation > 0 and self.radius_rotation > 0):
            raise ValueError("window radii must be positive")

    def centered(self, dim: int) -> Isometry:
        return self.center if self.center is not None else Isometry.identity(dim)

    def offsets(self, vs: np.ndarray, rs: np.ndarray):
        """Translation and rotation offsets of elements relative to the center.

        Both quantities are invariant under a common right translation of the
        elements and the center.
        """
        c = self.centered(vs.shape[-1])
        rel_v, _ = compose_arrays(vs, rs, *inverse_arrays(c.v, c.r))
        dt = np.linalg.norm(rel_v, axis=-1)
        dr = np.sqrt(np.sum((rs - c.r) ** 2, axis=(-2, -1)))
        return dt, dr

    def contains(self, vs: np.ndarray, rs: np.ndarray, shrink: float = 0.0) -> np.ndarray:
        dt, dr = self.offsets(vs, rs)
        return (dt <= self.radius_translation - shrink + 1e-12) & (dr <= self.radius_rotation + 1e-12)

    def moved(self, g: Isometry) -> "Window":
        c = self.centered(g.dim)
        return Window(self.radius_translation, self.radius_rotation, right_translate(g, c))

    def center_position(self, dim: int) -> np.ndarray:
        c = self.centered(dim)
        return -c.r.T @ c.v

    def to_json(self) -> dict:
        out = {"radius_translation": self.radius_translation,
               "radius_rotation": None if np.isinf(self.radius_rotation) else self.radius_rotation}
        if self.center is not None:
            out["center"] = self.center.to_json()
        return out

    @classmethod
    def from_json(cls, obj: dict) -> "Window":
        rr = obj.get("radius_rotation")
        center = obj.get("center")
        return cls(float(obj["radius_translation"]), np.inf if rr is None else float(rr),
                   Isometry.from_json(center) if center else None)


# -- generator specs ---------------------------------------------------------

WALLPAPER_POINT_GROUPS = {"p1": 1, "p2": 2, "p4": 4}


@dataclass(frozen=True)
class Wallpaper:
    group: str
    lattice_vectors: tuple
    seed_offset: Isometry

    def __post_init__(self):
        if self.group not in WALLPAPER_POINT_GROUPS:
            raise ValueError(f"unsupported wallpaper group {self.group!r}")
        a = np.asarray(self.lattice_vectors, dtype=float)
        if a.shape != (2, 2) or abs(np.linalg.det(a)) < 1e-12:
            raise ValueError("need two linearly independent 2D lattice vectors")
        if self.seed_offset.dim != 2:
            raise ValueError("wallpaper patterns live in Iso(E^2)")
        if self.group == "p4":
            rot = rotation2(np.pi / 2) @ a.T
            coeffs = np.linalg.solve(a.T, rot)
            if np.max(np.abs(coeffs - np.round(coeffs))) > 1e-9:
                raise ValueError("p4 needs a lattice invariant under quarter turns")
        object.__setattr__(self, "lattice_vectors", tuple(map(tuple, a)))


@dataclass(frozen=True)
class QuasiRotation:
    """Resonator n is translated by n*t and turned in place by r^n (then by ``phase``)."""
    step: Isometry
    phase: float = 0.0


@dataclass(frozen=True)
class Disordered:
    base: Wallpaper
    epsilon_t: float
    epsilon_angle: float
    rng_seed: int = 0

    def __post_init__(self):
        if self.epsilon_t < 0 or self.epsilon_angle < 0:
            raise ValueError("disorder amplitudes must be nonnegative")


@dataclass(frozen=True)
class Explicit:
    points: tuple

    def __post_init__(self):
        object.__setattr__(self, "points", tuple(self.points))


GeneratorSpec = Union[Wallpaper, QuasiRotation, Disordered, Explicit]


@dataclass(frozen=True, eq=False)
class Pattern:
    vs: np.ndarray
    rs: np.ndarray
    window: Window
    provenance: GeneratorSpec | None = None
    labels: tuple = field(default=())

    def __post_init__(self):
        vs = np.array(self.vs, dtype=float)
        rs = np.array(self.rs, dtype=float)
        if vs.ndim != 2:
            raise ValueError("vs must have shape (n, d)")
        if rs.shape != vs.shape + (vs.shape[1],):
            raise ValueError("vs/rs shape mismatch")
        vs.setflags(write=False)
        rs.setflags(write=False)
        object.__setattr__(self, "vs", vs)
        object.__setattr__(self, "rs", rs)
        labels = tuple(self.labels) if self.labels else tuple(range(len(vs)))
        if len(labels) != len(vs):
            raise ValueError("one label per point")
        object.__setattr__(self, "labels", labels)

    @classmethod
    def from_points(cls, points: Sequence[Isometry], window: Window, provenance=None,
                    labels=()) -> "Pattern":
        if not points:
            d = window.centered(2).dim
            return cls(np.zeros((0, d)), np.zeros((0, d, d)), window, provenance, ())
        return cls(np.stack([p.v for p in points]), np.stack([p.r for p in points]),
                   window, provenance, labels)

    @property
    def dim(self) -> int:
        return self.vs.shape[1]

    def __len__(self) -> int:
        return self.vs.shape[0]

    def __getitem__(self, i: int) -> Isometry:
        return Isometry(self.vs[i], self.rs[i])

    @property
    def points(self) -> list[Isometry]:
        return [self[i] for i in range(len(self))]

    def positions(self) -> np.ndarray:
        """Physical resonator centers ``x^-1 . 0``."""
        return -np.einsum("nji,nj->ni", self.rs, self.vs)

    def orientations(self) -> np.ndarray:
        return np.swapaxes(self.rs, 1, 2)

    def translation_norms(self) -> np.ndarray:
        return np.linalg.norm(self.vs, axis=1)

    def find(self, g: Isometry, tol: float = EQUAL_TOL) -> int | None:
        """Index of the point equal to ``g`` within ``tol`` group distance."""
        if len(self) == 0:
            return None
        d = distance_arrays(self.vs, self.rs, g.v, g.r)
        i = int(np.argmin(d))
        return i if d[i] <= tol else None

    def contains_identity(self, tol: float = EQUAL_TOL) -> bool:
        return self.find(Isometry.identity(self.dim), tol) is not None

    def identity_index(self, tol: float = EQUAL_TOL) -> int:
        i = self.find(Isometry.identity(self.dim), tol)
        if i is None:
            raise ValueError("pattern does not contain the identity")
        return i

    def subset(self, mask) -> "Pattern":
        idx = np.flatnonzero(mask)
        return Pattern(self.vs[idx], self.rs[idx], self.window, self.provenance,
                       tuple(self.labels[i] for i in idx))

    def restricted(self, radius: float) -> "Pattern":
        """Sub-pattern inside a smaller window with the same center."""
        w = Window(radius, self.window.radius_rotation, self.window.center)
        sub = self.subset(w.contains(self.vs, self.rs))
        return Pattern(sub.vs, sub.rs, w, self.provenance, sub.labels)

    def validate(self, tol: float = EQUAL_TOL) -> None:
        if len(self) and not np.all(self.window.contains(self.vs, self.rs)):
            raise ValueError("pattern has points outside its window")
        if len(self) > 1:
            pairs = cKDTree(self.positions()).query_pairs(tol)
            for i, j in pairs:
                if distance_arrays(self.vs[i], self.rs[i], self.vs[j], self.rs[j]) <= tol:
                    raise ValueError(f"duplicate points {i} and {j}")

    def to_json(self) -> dict:
        return {"dim": self.dim, "window": self.window.to_json(),
                "provenance": spec_to_json(self.provenance),
                "points": [self[i].to_json() for i in range(len(self))],
                "labels": [list(l) if isinstance(l, tuple) else l for l in self.labels]}

    @classmethod
    def from_json(cls, obj: dict) -> "Pattern":
        pts = [Isometry.from_json(p) for p in obj["points"]]
        labels = tuple(tuple(l) if isinstance(l, list) else l for l in obj.get("labels", ()))
        window = Window.from_json(obj["window"])
        if window.center is None and obj.get("dim") == 3:
            window = Window(window.radius_translation, window.radius_rotation, Isometry.identity(3))
        p = cls.from_points(pts, window, spec_from_json(obj.get("provenance")), labels)
        return p


def translate_pattern(g: Isometry, p: Pattern) -> Pattern:
    """``g . p = {x g^-1}`` with the window moved along."""
    if g.dim != p.dim:
        raise ValueError("dimension mismatch")
    gi = inverse(g)
    vs, rs = compose_arrays(p.vs, p.rs, gi.v, gi.r)
    return Pattern(vs, rs, p.window.moved(g), p.provenance, p.labels)


# -- generation --------------------------------------------------------------

def _point_group(group: str) -> list[np.ndarray]:
    k = WALLPAPER_POINT_GROUPS[group]
    return [rotation2(2 * np.pi * j / k) for j in range(k)]


def _lattice_range(a: np.ndarray, reach: float) -> int:
    smin = np.linalg.svd(a, compute_uv=False).min()
    return int(np.ceil(reach / smin)) + 1


def _zigzag(n: int) -> int:
    return 2 * n if n >= 0 else -2 * n - 1


def _wallpaper_placements(spec: Wallpaper, window: Window, dim: int):
    """Yield (label, placement) for group elements gamma o seed near the window."""
    a = np.asarray(spec.lattice_vectors)
    s = spec.seed_offset
    reach = window.radius_translation + np.linalg.norm(window.center_position(dim)) + np.linalg.norm(s.v)
    m = _lattice_range(a, reach)
    for n1, n2 in itertools.product(range(-m, m + 1), repeat=2):
        t = n1 * a[0] + n2 * a[1]
        for k, rot in enumerate(_point_group(spec.group)):
            yield (n1, n2, k), Isometry(t, rot) @ s


def _disorder_offset(spec: Disordered, label) -> Isometry:
    n1, n2, k = label
    rng = np.random.default_rng([spec.rng_seed, _zigzag(n1), _zigzag(n2), k])
    # uniform in the disc: radius ~ sqrt(U)
    rad = spec.epsilon_t * np.sqrt(rng.uniform())
    phi = rng.uniform(0.0, 2 * np.pi)
    ang = rng.uniform(-spec.epsilon_angle, spec.epsilon_angle)
    return Isometry(rad * np.array([np.cos(phi), np.sin(phi)]), rotation2(ang))


def _quasi_placements(spec: QuasiRotation, window: Window, dim: int):
    t = spec.step.v
    tn = np.linalg.norm(t)
    reach = window.radius_translation + np.linalg.norm(window.center_position(dim))
    m = int(np.ceil(reach / tn)) + 1 if tn > 0 else 0
    rphase = rotation2(spec.phase) if dim == 2 else _phase3(spec)
    for n in range(-m, m + 1):
        rn = np.linalg.matrix_power(spec.step.r, n) if n >= 0 else np.linalg.matrix_power(spec.step.r.T, -n)
        yield n, Isometry(n * t, rn @ rphase)


def _phase3(spec: QuasiRotation) -> np.ndarray:
    if spec.phase == 0:
        return np.eye(3)
    axis = Rotation.from_matrix(spec.step.r if spec.step.proper else -spec.step.r).as_rotvec()
    return rotation3(axis if np.linalg.norm(axis) > 0 else [0, 0, 1], spec.phase)


def generate(spec: GeneratorSpec, window: Window) -> Pattern:
    """All elements of the generated architecture that fall inside ``window``."""
    if isinstance(spec, Explicit):
        dim = spec.points[0].dim if spec.points else window.centered(2).dim
        pts = list(spec.points)
        labels = list(range(len(pts)))
        placements = None
    elif isinstance(spec, Wallpaper):
        dim = 2
        items = list(_wallpaper_placements(spec, window, dim))
        labels = [l for l, _ in items]
        placements = [p for _, p in items]
    elif isinstance(spec, Disordered):
        dim = 2
        items = list(_wallpaper_placements(spec.base, window, dim))
        labels = [l for l, _ in items]
        placements = [p @ _disorder_offset(spec, l) for l, p in items]
    elif isinstance(spec, QuasiRotation):
        dim = spec.step.dim
        items = list(_quasi_placements(spec, window, dim))
        labels = [l for l, _ in items]
        placements = [p for _, p in items]
    else:
        raise TypeError(f"unknown generator spec {type(spec).__name__}")

    if window.center is not None and window.center.dim != dim:
        raise ValueError("window/generator dimension mismatch")
    if placements is not None:
        pts = [inverse(p) for p in placements]
    if not pts:
        return Pattern(np.zeros((0, dim)), np.zeros((0, dim, dim)), window, spec, ())
    vs = np.stack([p.v for p in pts])
    rs = np.stack([p.r for p in pts])
    keep = window.contains(vs, rs)
    idx = np.flatnonzero(keep)
    return Pattern(vs[idx], rs[idx], window, spec, tuple(labels[i] for i in idx))


# -- separation and density --------------------------------------------------

@dataclass(frozen=True)
class BallTimesO:
    """The set B_radius x O(d)."""
    radius: float

    def __post_init__(self):
        if not self.radius > 0:
            raise ValueError("radius must be positive")


@dataclass(frozen=True)
class ExplicitSet:
    """Group-distance neighbourhood of a finite sample of isometries."""
    sample: tuple
    radius: float

    def __post_init__(self):
        if not self.radius > 0:
            raise ValueError("radius must be positive")
        if not self.sample:
            raise ValueError("empty sample")
        object.__setattr__(self, "sample", tuple(self.sample))


SeparationSpec = Union[BallTimesO, ExplicitSet]


def set_contains(s: SeparationSpec, vs: np.ndarray, rs: np.ndarray) -> np.ndarray:
    """Vectorised membership test of elements (vs, rs) in the set ``s``."""
    if isinstance(s, BallTimesO):
        return np.linalg.norm(vs, axis=-1) < s.radius
    sv = np.stack([e.v for e in s.sample])
    sr = np.stack([e.r for e in s.sample])
    d = distance_arrays(vs[..., None, :], rs[..., None, :, :], sv, sr)
    return np.min(d, axis=-1) < s.radius


def _set_reach(s: SeparationSpec) -> float:
    """Radius of a ball around the origin containing every position of the set."""
    if isinstance(s, BallTimesO):
        return s.radius
    return max(np.linalg.norm(e.v) for e in s.sample) + s.radius


@dataclass(frozen=True)
class SeparationResult:
    separated: bool
    witness: tuple | None = None

    def __bool__(self) -> bool:
        return self.separated


def separation_radius(p: Pattern) -> float:
    """Largest rho with p (B_rho x O(d))-separated: half the minimal center distance."""
    if len(p) < 2:
        return np.inf
    d, _ = cKDTree(p.positions()).query(p.positions(), k=2)
    return float(d[:, 1].min() / 2)


def is_separated(p: Pattern, u: SeparationSpec) -> SeparationResult:
    """Check |p ∩ g.U| <= 1 for every g.

    For U = B_rho x O(d) this is exact: distinct x, y violate it iff y x^-1 lies
    in U U^-1 = B_2rho x O(d), i.e. iff their centers are closer than 2 rho.
    For an explicit set the check tries every g moving some point of p onto
    some sample element, which finds all violations realised at such g.
    """
    if len(p) == 0:
        raise ValueError("pattern is empty")
    if len(p) == 1:
        return SeparationResult(True)
    if isinstance(u, BallTimesO):
        pos = p.positions()
        tree = cKDTree(pos)
        d, j = tree.query(pos, k=2)
        i = int(np.argmin(d[:, 1]))
        if d[i, 1] < 2 * u.radius - EQUAL_TOL:
            return SeparationResult(False, (i, int(j[i, 1]), float(d[i, 1])))
        return SeparationResult(True)
    for i in range(len(p)):
        xi = p[i]
        for s in u.sample:
            g = inverse(xi) @ s
            vs, rs = compose_arrays(p.vs, p.rs, g.v, g.r)
            hit = np.flatnonzero(set_contains(u, vs, rs))
            if len(hit) > 1:
                return SeparationResult(False, (int(hit[0]), int(hit[1]), g))
    return SeparationResult(True)


def _rotation_grid(s: SeparationSpec, dim: int) -> list[np.ndarray]:
    if isinstance(s, BallTimesO):
        # g . (B x O(d)) only depends on the translation part of g
        return [np.eye(dim)]
    if dim == 2:
        step = s.radius / (4 * np.sqrt(2))
        n = max(int(np.ceil(2 * np.pi / step)), 4)
        refl = np.array([[0.0, 1.0], [1.0, 0.0]])
        rots = [rotation2(2 * np.pi * k / n) for k in range(n)]
        return rots + [r @ refl for r in rots]
    rots = list(Rotation.random(256, random_state=0).as_matrix())
    return rots + [-r for r in rots]


def density_grid(p: Pattern, k: SeparationSpec) -> tuple[np.ndarray, list[np.ndarray]]:
    """Translation grid points (spacing radius/4) whose test set stays inside the window."""
    d = p.dim
    reach = _set_reach(k)
    inner = p.window.radius_translation - reach
    if inner < 0:
        return np.zeros((0, d)), []
    c = p.window.center_position(d)
    h = k.radius / 4
    n = int(np.floor(inner / h))
    axes = [np.arange(-n, n + 1) * h] * d
    grid = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, d)
    grid = grid[np.linalg.norm(grid, axis=1) <= inner] + c
    return grid, _rotation_grid(k, d)


def is_relatively_dense(p: Pattern, k: SeparationSpec) -> bool:
    """Grid check of |p ∩ g.K| >= 1 over boundary-safe g."""
    if len(p) == 0:
        return False
    centers, rots = density_grid(p, k)
    if len(centers) == 0:
        return False
    for rot in rots:
        # g = (center, rot): the positions of g.K are center + rot . (positions of K),
        # and x lies in g.K = K g^-1 iff x g lies in K
        vs, rs = compose_arrays(p.vs[None, :, :], p.rs[None, :, :, :],
                                centers[:, None, :], np.broadcast_to(rot, (len(centers), 1, p.dim, p.dim)))
        inside = set_contains(k, vs, rs)
        if not np.all(inside.any(axis=1)):
            return False
    return True


class Classification(enum.Enum):
    DELONE = "Delone"
    UNIFORMLY_SEPARATED = "UniformlySeparated"
    NEITHER = "Neither"


def classify(p: Pattern, u: SeparationSpec, k: SeparationSpec) -> Classification:
    if len(p) == 0 or not is_separated(p, u):
        return Classification.NEITHER
    if is_relatively_dense(p, k):
        return Classification.DELONE
    return Classification.UNIFORMLY_SEPARATED


# -- JSON --------------------------------------------------------------------

def spec_to_json(spec) -> dict | None:
    if spec is None:
        return None
    if isinstance(spec, Wallpaper):
        return {"kind": "wallpaper", "group": spec.group,
                "lattice_vectors": [list(v) for v in spec.lattice_vectors],
                "seed_offset": spec.seed_offset.to_json()}
    if isinstance(spec, QuasiRotation):
        return {"kind": "quasirotation", "step": spec.step.to_json(), "phase": spec.phase}
    if isinstance(spec, Disordered):
        return {"kind": "disordered", "base": spec_to_json(spec.base), "epsilon_t": spec.epsilon_t,
                "epsilon_angle": spec.epsilon_angle, "rng_seed": spec.rng_seed}
    if isinstance(spec, Explicit):
        return {"kind": "explicit", "points": [q.to_json() for q in spec.points]}
    raise TypeError(type(spec).__name__)


def spec_from_json(obj: dict | None):
    if obj is None:
        return None
    kind = obj["kind"]
    if kind == "wallpaper":
        return Wallpaper(obj["group"], tuple(map(tuple, obj["lattice_vectors"])),
                         Isometry.from_json(obj["seed_offset"]))
    if kind == "quasirotation":
        return QuasiRotation(Isometry.from_json(obj["step"]), float(obj.get("phase", 0.0)))
    if kind == "disordered":
        return Disordered(spec_from_json(obj["base"]), float(obj["epsilon_t"]),
                          float(obj["epsilon_angle"]), int(obj.get("rng_seed", 0)))
    if kind == "explicit":
        return Explicit(tuple(Isometry.from_json(q) for q in obj["points"]))
    raise ValueError(f"unknown generator kind {kind!r}")
