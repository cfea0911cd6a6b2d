import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from patternlab.isometry import (
    GroupMetricParams,
    Isometry,
    act_on_point,
    compose,
    group_distance,
    inverse,
    polar_project,
    right_translate,
    rotation2,
    rotation3,
)

seeds = st.integers(0, 2**32 - 1)
dims = st.sampled_from([2, 3])


def rand(dim, seed, improper=None):
    return Isometry.random(dim, np.random.default_rng(seed), scale=5.0, improper=improper)


def close(a, b, tol=1e-12):
    return np.allclose(a.v, b.v, atol=tol) and np.allclose(a.r, b.r, atol=tol)


def test_compose_semidirect_rule():
    a = Isometry.planar([1.0, 0.0], np.pi / 2)
    b = Isometry.planar([0.0, 1.0], np.pi / 2)
    c = a @ b
    assert np.allclose(c.v, [0.0, 0.0]) and np.allclose(c.r, rotation2(np.pi), atol=1e-15)


def test_inverse_formula():
    g = Isometry([1.0, 2.0, 3.0], rotation3([0, 0, 1], 0.7))
    gi = inverse(g)
    assert np.allclose(gi.v, -g.r.T @ g.v)
    assert close(compose(g, gi), Isometry.identity(3))


@settings(max_examples=200, deadline=None)
@given(dims, seeds, seeds, seeds)
def test_associativity(dim, s1, s2, s3):
    a, b, c = rand(dim, s1), rand(dim, s2), rand(dim, s3)
    assert close((a @ b) @ c, a @ (b @ c))


@settings(max_examples=200, deadline=None)
@given(dims, seeds, st.booleans())
def test_inverse_both_sides(dim, s, improper):
    g = rand(dim, s, improper)
    e = Isometry.identity(dim)
    assert close(g @ g.inverse(), e) and close(g.inverse() @ g, e)
    assert close(g.inverse().inverse(), g)


@settings(max_examples=200, deadline=None)
@given(dims, seeds, seeds, seeds)
def test_right_action_axioms(dim, s1, s2, s3):
    g, h, x = rand(dim, s1), rand(dim, s2), rand(dim, s3)
    # (gh).x = g.(h.x) and e.x = x
    assert close(right_translate(g @ h, x), right_translate(g, right_translate(h, x)))
    assert close(right_translate(Isometry.identity(dim), x), x)


@settings(max_examples=100, deadline=None)
@given(dims, seeds, seeds, seeds)
def test_point_action_is_homomorphism(dim, s1, s2, s3):
    a, b = rand(dim, s1), rand(dim, s2)
    p = np.random.default_rng(s3).normal(size=(4, dim))
    assert np.allclose(act_on_point(a @ b, p), act_on_point(a, act_on_point(b, p)))


@settings(max_examples=100, deadline=None)
@given(dims, seeds, seeds, seeds)
def test_metric_left_invariant(dim, s1, s2, s3):
    a, b, g = rand(dim, s1), rand(dim, s2), rand(dim, s3)
    assert group_distance(g @ a, g @ b) == pytest.approx(group_distance(a, b), abs=1e-12)


def test_metric_examples():
    e = Isometry.identity(2)
    assert group_distance(e, e) == 0.0
    assert group_distance(e, Isometry.translation([3.0, 4.0])) == pytest.approx(5.0)
    # a half turn differs from the identity by 2 sqrt(2) in Hilbert-Schmidt norm
    half = Isometry.planar([0.0, 0.0], np.pi)
    assert group_distance(e, half) == pytest.approx(2 * np.sqrt(2))
    w = GroupMetricParams(2.0, 0.5)
    assert group_distance(e, half, w) == pytest.approx(np.sqrt(2))
    with pytest.raises(ValueError):
        GroupMetricParams(0.0, 1.0)


def test_dimension_mismatch():
    with pytest.raises(ValueError):
        compose(Isometry.identity(2), Isometry.identity(3))
    with pytest.raises(ValueError):
        Isometry([0.0, 0.0], np.eye(3))


def test_improper_sector():
    refl = Isometry.planar([0.0, 0.0], 0.0, reflect=True)
    assert not refl.proper and (refl @ refl).proper
    assert close(refl @ refl, Isometry.identity(2))


def test_drift_is_projected_away():
    r = rotation3([1, 2, 3], 0.4)
    g = Isometry(np.zeros(3), r)
    for _ in range(10000):
        g = g @ Isometry(np.zeros(3), r)
    assert np.max(np.abs(g.r @ g.r.T - np.eye(3))) < 1e-12


def test_json_roundtrip_and_rejection(rng):
    g = Isometry.random(3, rng, improper=True)
    h = Isometry.from_json(json.loads(json.dumps(g.to_json())))
    assert close(g, h, 0.0)
    bad = g.to_json()
    bad["r"][0][0] += 1e-3
    with pytest.raises(ValueError):
        Isometry.from_json(bad)
    # small deviations are re-orthogonalised
    ok = g.to_json()
    ok["r"][0][0] += 1e-8
    r = Isometry.from_json(ok).r
    assert np.max(np.abs(r @ r.T - np.eye(3))) < 1e-14


def test_polar_project_is_nearest_orthogonal(rng):
    r0 = rotation3([0, 1, 0], 1.0)
    r = r0 + 1e-6 * rng.normal(size=(3, 3))
    q = polar_project(r)
    assert np.allclose(q @ q.T, np.eye(3), atol=1e-14)
    assert np.linalg.norm(q - r) <= np.linalg.norm(r0 - r) + 1e-15


def test_planar_angle():
    assert Isometry.planar([0, 0], 0.8).angle() == pytest.approx(0.8)
    with pytest.raises(ValueError):
        Isometry.identity(3).angle()
