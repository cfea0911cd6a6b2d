"""The canonical groupoid of a pattern: pairs (g, L) with g in L.

s(g, L) = (e, L),  r(g, L) = (e, g.L),  (g, L)^-1 = (g^-1, g.L),
(g', g.L)(g, L) = (g' g, L).
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .isometry import EQUAL_TOL, Isometry, compose, inverse
from .pattern import Pattern, translate_pattern
from .transversal import WindowMetricParams, window_distance

COMPOSABLE_TOL = 1e-9


class NotComposable(ValueError):
    def __init__(self, message: str, distance: float, radius: float):
        super().__init__(message)
        self.distance = distance
        self.radius = radius


@dataclass(frozen=True, eq=False)
class GroupoidElement:
    g: Isometry
    pattern: Pattern

    def __post_init__(self):
        if self.pattern.find(self.g) is None:
            raise ValueError("g is not a point of the pattern")

    @classmethod
    def unit(cls, pattern: Pattern) -> "GroupoidElement":
        return cls(Isometry.identity(pattern.dim), pattern)

    def __matmul__(self, other: "GroupoidElement") -> "GroupoidElement":
        return compose_elements(self, other)


def source(e: GroupoidElement) -> GroupoidElement:
    return GroupoidElement.unit(e.pattern)


def range_(e: GroupoidElement) -> GroupoidElement:
    return GroupoidElement.unit(translate_pattern(e.g, e.pattern))


def invert(e: GroupoidElement) -> GroupoidElement:
    return GroupoidElement(inverse(e.g), translate_pattern(e.g, e.pattern))


def _available_radius(p: Pattern) -> float:
    """Radius of the largest identity-centred ball covered by the pattern's window."""
    c = p.window.center_position(p.dim)
    return p.window.radius_translation - float(np.linalg.norm(c))


def same_pattern(a: Pattern, b: Pattern, tol: float = COMPOSABLE_TOL) -> tuple[bool, float, float]:
    """Compare two patterns on the largest identity-centred ball both windows cover."""
    if a is b:
        return True, 0.0, np.inf
    if len(a) == len(b) and np.array_equal(a.vs, b.vs) and np.array_equal(a.rs, b.rs):
        return True, 0.0, np.inf
    radius = min(_available_radius(a), _available_radius(b))
    if radius <= 0:
        return False, np.inf, radius
    d = window_distance(a, b, WindowMetricParams(radius))
    return d <= tol, d, radius


def compose_elements(a: GroupoidElement, b: GroupoidElement, check: bool = True) -> GroupoidElement:
    """(a.g, a.L)(b.g, b.L) = (a.g b.g, b.L), defined when a.L = b.g . b.L."""
    if check:
        ok, d, radius = same_pattern(a.pattern, translate_pattern(b.g, b.pattern))
        if not ok:
            raise NotComposable(f"patterns differ by window distance {d:.3e} "
                                f"on radius {radius:.3g}", d, radius)
    return GroupoidElement(compose(a.g, b.g), b.pattern)


def act(h: GroupoidElement, e: GroupoidElement, check: bool = True) -> GroupoidElement:
    """The action h.(g', L) = (g' h^-1, h.L) of a same-source element on the fiber."""
    return compose_elements(e, invert(h), check=check)


def range_fiber(p: Pattern, coupling_range: float) -> list[GroupoidElement]:
    """Elements (g, p) with g within translation distance ``coupling_range`` of e.

    The groupoid is built over patterns that contain the identity, so the
    source fiber over p is p itself; the cut-off keeps it finite.
    """
    if not p.contains_identity():
        raise ValueError("pattern lacks the identity")
    idx = np.flatnonzero(np.linalg.norm(p.vs, axis=1) <= coupling_range + EQUAL_TOL)
    return [GroupoidElement(p[i], p) for i in idx]


def packing_bound(coupling_range: float, rho: float, dim: int) -> float:
    """Upper bound on the fiber size for a (B_rho x O(d))-separated pattern."""
    return (1 + coupling_range / rho) ** dim


def fiber_to_json(fiber: list[GroupoidElement]) -> list[dict]:
    return [e.g.to_json() for e in fiber]
