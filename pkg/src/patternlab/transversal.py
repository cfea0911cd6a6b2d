"""Finite-sample estimate of the standard transversal of a pattern.

Every resonator is moved to the origin in turn (``x . p`` for ``x`` in ``p``)
and the aligned patterns are compared with a window distance that mimics
Fell convergence on a bounded region: each point near the origin must be
matched by a point of the other pattern, in both directions.
"""
from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import connected_components
from scipy.spatial import cKDTree
from scipy.stats import spearmanr

from .isometry import DEFAULT_METRIC, GroupMetricParams, distance_arrays
from .pattern import Pattern, QuasiRotation, translate_pattern


@dataclass(frozen=True)
class AlignedPattern:
    base: Pattern
    aligned_at: int
    pattern: Pattern


@dataclass(frozen=True)
class WindowMetricParams:
    window_radius: float
    boundary_slack: float | None = None
    metric: GroupMetricParams = DEFAULT_METRIC

    def __post_init__(self):
        if self.boundary_slack is None:
            object.__setattr__(self, "boundary_slack", 0.1 * self.window_radius)
        if not (0 < self.boundary_slack < self.window_radius):
            raise ValueError("need 0 < boundary_slack < window_radius")

    @property
    def inner_radius(self) -> float:
        return self.window_radius - self.boundary_slack


def align_at(p: Pattern, i: int) -> AlignedPattern:
    if not 0 <= i < len(p):
        raise IndexError(f"index {i} out of range for pattern of {len(p)} points")
    return AlignedPattern(p, i, translate_pattern(p[i], p))


class _Matcher:
    """Nearest-point queries in group distance against a fixed pattern."""

    def __init__(self, p: Pattern, metric: GroupMetricParams):
        self.p = p
        self.metric = metric
        self.tree = cKDTree(p.vs) if len(p) else None

    def nearest(self, vs: np.ndarray, rs: np.ndarray) -> np.ndarray:
        if len(vs) == 0:
            return np.zeros(0)
        if self.tree is None:
            return np.full(len(vs), np.inf)
        # group distance >= weighted translation distance: the k translation-nearest
        # candidates settle the minimum unless the k-th one could still beat it
        p, m = self.p, self.metric
        k = min(8, len(p))
        dt, j = self.tree.query(vs, k=k)
        dt, j = dt.reshape(len(vs), k), j.reshape(len(vs), k)
        full = distance_arrays(vs[:, None, :], rs[:, None, :, :], p.vs[j], p.rs[j], m)
        out = full.min(axis=1)
        unsure = np.flatnonzero((k < len(p)) & (m.translation_weight * dt[:, -1] < out))
        for a in unsure:
            cand = np.asarray(self.tree.query_ball_point(vs[a], out[a] / m.translation_weight + 1e-15))
            out[a] = distance_arrays(vs[a], rs[a], p.vs[cand], p.rs[cand], m).min()
        return out


def _inner(p: Pattern, radius: float) -> tuple[np.ndarray, np.ndarray]:
    mask = np.linalg.norm(p.vs, axis=1) <= radius + 1e-12
    return p.vs[mask], p.rs[mask]


def _one_sided(a_inner, matcher_b: _Matcher) -> float:
    vs, rs = a_inner
    if len(vs) == 0:
        return 0.0
    return float(matcher_b.nearest(vs, rs).max())


def window_distance(a: Pattern, b: Pattern, params: WindowMetricParams) -> float:
    """Symmetrised worst matching error over the ball of radius window_radius - slack."""
    if a.dim != b.dim:
        raise ValueError("dimension mismatch")
    r = params.inner_radius
    ma, mb = _Matcher(a, params.metric), _Matcher(b, params.metric)
    return max(_one_sided(_inner(a, r), mb), _one_sided(_inner(b, r), ma))


def interior_indices(p: Pattern, radius: float) -> np.ndarray:
    """Points whose ``radius``-neighbourhood lies inside the pattern's window."""
    dt, _ = p.window.offsets(p.vs, p.rs)
    return np.flatnonzero(dt + radius <= p.window.radius_translation + 1e-12)


@dataclass
class TransversalEstimate:
    aligned: list
    cluster_assignment: np.ndarray
    pairwise_distances: np.ndarray
    merge_tol: float

    @property
    def cluster_count(self) -> int:
        return int(self.cluster_assignment.max()) + 1 if len(self.cluster_assignment) else 0

    @property
    def sizes(self) -> list[int]:
        return np.bincount(self.cluster_assignment, minlength=self.cluster_count).tolist()

    @property
    def representatives(self) -> list[AlignedPattern]:
        first = {}
        for k, c in enumerate(self.cluster_assignment):
            first.setdefault(int(c), k)
        return [self.aligned[first[c]] for c in range(self.cluster_count)]

    @property
    def indices(self) -> list[int]:
        return [a.aligned_at for a in self.aligned]


def pairwise_window_distances(patterns: list[Pattern], params: WindowMetricParams,
                              workers: int = 1) -> np.ndarray:
    n = len(patterns)
    r = params.inner_radius
    matchers = [_Matcher(p, params.metric) for p in patterns]
    inners = [_inner(p, r) for p in patterns]

    def row(i):
        return [_one_sided(inners[i], matchers[j]) if j != i else 0.0 for j in range(n)]

    if workers > 1:
        with ThreadPoolExecutor(workers) as ex:
            one = np.array(list(ex.map(row, range(n))))
    else:
        one = np.array([row(i) for i in range(n)]).reshape(n, n)
    return np.maximum(one, one.T)


def single_linkage(dist: np.ndarray, tol: float) -> np.ndarray:
    """Cluster labels of single-linkage clustering cut at ``tol``, numbered by first appearance."""
    if len(dist) == 0:
        return np.zeros(0, dtype=int)
    _, lab = connected_components(csr_matrix(dist <= tol), directed=False)
    order = {}
    return np.array([order.setdefault(l, len(order)) for l in lab], dtype=int)


def estimate_transversal(p: Pattern, params: WindowMetricParams, merge_tol: float = 1e-6,
                         indices=None, workers: int = 1) -> TransversalEstimate:
    """Cluster the aligned patterns ``x . p``.

    By default only resonators whose whole comparison window lies inside the
    pattern's window are aligned; the others would see truncation artefacts.
    """
    if len(p) == 0:
        raise ValueError("pattern is empty")
    if indices is None:
        indices = interior_indices(p, params.window_radius)
    aligned = [align_at(p, int(i)) for i in indices]
    dist = pairwise_window_distances([a.pattern for a in aligned], params, workers)
    return TransversalEstimate(aligned, single_linkage(dist, merge_tol), dist, merge_tol)


def circle_distance(a) -> np.ndarray:
    a = np.mod(np.asarray(a, dtype=float), 2 * np.pi)
    return np.minimum(a, 2 * np.pi - a)


@dataclass
class CircleEmbeddingReport:
    labels: np.ndarray
    pairs: np.ndarray
    circle: np.ndarray
    window: np.ndarray
    delta1: float
    slope: float
    delta2: float
    violations: np.ndarray
    decile_agreement: float
    rank_correlation: float

    @property
    def passed(self) -> bool:
        return len(self.violations) == 0 and self.decile_agreement == 1.0

    def to_json(self) -> dict:
        return {"delta1": self.delta1, "slope": self.slope, "delta2": self.delta2,
                "violations": len(self.violations), "decile_agreement": self.decile_agreement,
                "rank_correlation": self.rank_correlation, "passed": self.passed}


def circle_embedding_check(p: Pattern, params: WindowMetricParams, indices=None,
                           estimate: TransversalEstimate | None = None,
                           safety: float = 2.0) -> CircleEmbeddingReport:
    """Compare window distances of aligned patterns with circle distances of (m - n) theta.

    delta1 is the 10% quantile of the circle distances over distinct pairs;
    the slope C is the median ratio window/circle over those pairs, and any
    pair with circle distance below delta1 and window distance above
    ``safety * C * delta1`` is flagged.
    """
    spec = p.provenance
    if not isinstance(spec, QuasiRotation) or p.dim != 2:
        raise ValueError("circle embedding check needs a planar QuasiRotation pattern")
    theta = spec.step.angle()
    if estimate is None:
        estimate = estimate_transversal(p, params, indices=indices)
    labels = np.array([p.labels[i] for i in estimate.indices], dtype=float)
    n = len(labels)
    iu, ju = np.triu_indices(n, 1)
    circ = circle_distance((labels[iu] - labels[ju]) * theta)
    win = estimate.pairwise_distances[iu, ju]

    delta1 = float(np.quantile(circ, 0.1))
    small = circ <= delta1
    pos = small & (circ > 0)
    slope = float(np.median(win[pos] / circ[pos])) if pos.any() else 0.0
    delta2 = safety * slope * delta1
    viol = np.flatnonzero(small & (win > delta2))
    wthr = np.quantile(win, 0.1)
    agree = float(np.mean(win[small] <= wthr + 1e-12)) if small.any() else 1.0

    rho = float(spearmanr(circ, win).statistic) if n > 2 else 1.0
    return CircleEmbeddingReport(labels, np.stack([iu, ju], 1), circ, win, delta1, slope,
                                 delta2, viol, agree, rho)
