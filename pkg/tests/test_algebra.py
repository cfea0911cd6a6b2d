import json

import numpy as np
import pytest
from conftest import central_alignment, chain
from hypothesis import given, settings
from hypothesis import strategies as st

from patternlab.algebra import (
    AlgebraElementSample,
    DeltaKernel,
    FunctionKernel,
    TabulatedKernel,
    convolve,
    identity_ball,
    inner_product,
    norm_estimate,
    regular_matrix,
    restrict,
    star,
    support,
)
from patternlab.isometry import Isometry
from patternlab.pattern import Window, generate

N = 2


@pytest.fixture(scope="module")
def big(p2_spec, p4_spec, quasi_spec):
    return {
        "p2": central_alignment(generate(p2_spec, Window(8.0)), 6.0),
        "p4": central_alignment(generate(p4_spec, Window(9.0)), 7.0),
        "quasi": central_alignment(generate(quasi_spec, Window(12.5)), 9.0),
    }


def env_kernel(rng, reach=1.2, n=N):
    """A kernel that depends on g through position and orientation, and on L through its neighbourhood."""
    c = rng.normal(size=(4, n, n)) + 1j * rng.normal(size=(4, n, n))

    def fn(g, L):
        near = np.linalg.norm(L.vs, axis=1) <= 1.5
        s = float(np.sum(L.rs[near, 0, 0]))
        return c[0] + c[1] * g.v[0] + c[2] * g.r[0, 1] + c[3] * np.cos(s)

    return FunctionKernel(fn, n, reach)


def close(a, b, tol=1e-10):
    return np.max(np.abs(a - b)) <= tol * max(1.0, np.max(np.abs(b)))


def points(L, r):
    return [L[i] for i in support(L, r)]


def test_unit(big, rng):
    L = big["p4"]
    f = env_kernel(rng)
    d = DeltaKernel(N)
    for g in points(L, 1.2):
        assert close(convolve(d, f).evaluate(g, L), f.evaluate(g, L))
        assert close(convolve(f, d).evaluate(g, L), f.evaluate(g, L))
    assert np.allclose(restrict(d, L), np.eye(N))


def test_chain_convolution_by_hand():
    rng = np.random.default_rng(0)
    a, b, c = (rng.normal(size=(2, 2)) for _ in range(3))

    def table(v):
        return {1: a, -1: b, 0: c}.get(int(round(v)), np.zeros((2, 2)))

    f1 = FunctionKernel(lambda g, L: table(g.v[0]), 2, 1.0)
    f2 = FunctionKernel(lambda g, L: table(g.v[0]).T, 2, 1.0)
    L = chain(21)
    e = Isometry.identity(2)
    # (f1*f2)(g) = sum_h f1(g h^-1) f2(h) over h in {-1, 0, 1}
    expect_e = b @ a.T + c @ c.T + a @ b.T
    expect_1 = a @ c.T + c @ a.T
    expect_2 = a @ a.T
    conv = convolve(f1, f2)
    assert np.allclose(conv.evaluate(e, L), expect_e)
    assert np.allclose(conv.evaluate(Isometry.translation([1.0, 0.0]), L), expect_1)
    assert np.allclose(conv.evaluate(Isometry.translation([2.0, 0.0]), L), expect_2)
    assert not conv.evaluate(Isometry.translation([3.0, 0.0]), L).any()


@settings(max_examples=6, deadline=None)
@given(st.sampled_from(["p2", "p4", "quasi"]), st.integers(0, 2**31))
def test_associativity(big, name, seed):
    rng = np.random.default_rng(seed)
    L = big[name]
    f1, f2, f3 = (env_kernel(rng, 1.1) for _ in range(3))
    left = convolve(convolve(f1, f2), f3)
    right = convolve(f1, convolve(f2, f3))
    for g in points(L, 1.1)[:4]:
        assert close(left.evaluate(g, L), right.evaluate(g, L))


@settings(max_examples=6, deadline=None)
@given(st.sampled_from(["p2", "p4", "quasi"]), st.integers(0, 2**31))
def test_star_laws(big, name, seed):
    rng = np.random.default_rng(seed)
    L = big[name]
    f1, f2 = env_kernel(rng), env_kernel(rng)
    lhs = star(convolve(f1, f2))
    rhs = convolve(star(f2), star(f1))
    for g in points(L, 1.2):
        assert close(lhs.evaluate(g, L), rhs.evaluate(g, L))
        assert close(star(star(f1)).evaluate(g, L), f1.evaluate(g, L))
    # inner product against rho(f1* * f2)
    assert close(inner_product(f1, f2, L), restrict(convolve(star(f1), f2), L))
    ip = inner_product(f1, f1, L)
    assert close(ip, ip.conj().T)
    assert np.linalg.eigvalsh(ip).min() >= -1e-10


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 2**31))
def test_tabulated_inner_product_is_psd(families, seed):
    rng = np.random.default_rng(seed)
    L = families["p4"]
    entries = [(g, rng.normal(size=(3, 3)) + 1j * rng.normal(size=(3, 3))) for g in points(L, 2.3)]
    f = TabulatedKernel(entries)
    assert np.linalg.eigvalsh(inner_product(f, f, L)).min() >= -1e-10


def hopping(t=1.0):
    return FunctionKernel(lambda g, L: np.array([[t]]) if abs(np.linalg.norm(g.v) - 1) < 1e-9 else np.zeros((1, 1)),
                          1, 1.0)


def test_norm_of_unit_and_homogeneity(big):
    sample = AlgebraElementSample(DeltaKernel(1), [big["p4"]])
    value, table = norm_estimate(DeltaKernel(1), sample, [1.0, 3.0])
    assert value == pytest.approx(1.0) and len(table) == 2
    L = chain(201)
    n1, _ = norm_estimate(hopping(), [L], [100.0])
    n3, _ = norm_estimate(hopping(-3.0 + 0j), [L], [100.0])
    assert n3 == pytest.approx(3 * n1)


def test_chain_norm_converges():
    L = chain(201)
    value, table = norm_estimate(hopping(), [L], [10.0, 50.0, 100.0])
    # a truncated chain of n sites has norm 2 cos(pi/(n+1))
    for (s, v) in table:
        n = len(support(L, s))
        assert v == pytest.approx(2 * np.cos(np.pi / (n + 1)), abs=1e-12)
    assert abs(value - 2.0) < 1e-3
    assert [v for _, v in table] == sorted(v for _, v in table)


def test_c_star_identity_surrogate(big, rng):
    L = big["p4"]
    f = env_kernel(rng, 1.1)
    ff = convolve(star(f), f)
    nf, _ = norm_estimate(f, [L], [5.0])
    nff, _ = norm_estimate(ff, [L], [5.0])
    assert abs(nff - nf**2) <= 0.02 * nf**2


def test_submultiplicative(big, rng):
    L = big["p2"]
    f1, f2 = env_kernel(rng), env_kernel(rng)
    a, _ = norm_estimate(f1, [L], [4.0])
    b, _ = norm_estimate(f2, [L], [4.0])
    ab, _ = norm_estimate(convolve(f1, f2), [L], [4.0])
    assert ab <= a * b * 1.02


def test_support_arithmetic(big, rng):
    f1, f2 = env_kernel(rng, 1.2), env_kernel(rng, 0.9)
    conv = convolve(f1, f2)
    assert conv.coupling_range == pytest.approx(2.1)
    L = big["p2"]
    far = [g for g in points(L, 4.0) if np.linalg.norm(g.v) > 2.1 + 1e-6]
    assert far and all(not conv.evaluate(g, L).any() for g in far)
    assert not conv.tainted(Isometry.identity(2), L)
    assert conv.tainted(Isometry.translation([7.0, 0.0]), L)
    assert (f1 + f2).coupling_range == pytest.approx(1.2)


def test_linear_structure(big, rng):
    L = big["quasi"]
    f1, f2 = env_kernel(rng), env_kernel(rng)
    g = points(L, 1.2)[1]
    assert close((2j * f1 + f2).evaluate(g, L), 2j * f1.evaluate(g, L) + f2.evaluate(g, L))
    assert close((f1 @ f2).evaluate(g, L), convolve(f1, f2).evaluate(g, L))


def test_tabulated_roundtrip_and_matching(families, tmp_path, rng):
    L = families["p2"]
    entries = []
    for g in points(L, 1.5):
        # one representative per {g, g^-1}; closure supplies the other half
        if not any(h.inverse().allclose(g, 1e-9) and not h.allclose(g, 1e-9) for h, _ in entries):
            entries.append((g, rng.normal(size=(2, 2)) + 1j * rng.normal(size=(2, 2))))
    assert len(entries) < len(points(L, 1.5))
    f = TabulatedKernel(entries, hermitian_closure=True)
    path = tmp_path / "k.json"
    f.save(path)
    json.loads(path.read_text())
    h = TabulatedKernel.load(path)
    for g in points(L, 1.5):
        assert np.array_equal(h.evaluate(g, L), f.evaluate(g, L))
        # closure makes the kernel self-adjoint on a crystal
        assert close(star(f).evaluate(g, L), f.evaluate(g, L))
    g = points(L, 1.5)[1]
    nudged = Isometry(g.v + 1e-8, g.r)
    assert f.evaluate(nudged, L).any()
    exact = TabulatedKernel(entries, interpolation="none")
    assert not exact.evaluate(Isometry(g.v + 1e-8, g.r), L).any()
    with pytest.raises(ValueError):
        TabulatedKernel(entries, coupling_range=0.5)


def test_regular_matrix_of_unit(big):
    L = identity_ball(big["quasi"], 4.0)
    assert np.allclose(regular_matrix(DeltaKernel(2), L), np.eye(2 * len(L)))
