import functools

import numpy as np
import pytest
from conftest import central_alignment, chain
from oracles import tridiagonal_chain_eigs

from patternlab.algebra import DeltaKernel, FunctionKernel, TabulatedKernel, restrict, star, support
from patternlab.coupling import CouplingModel, DipoleDipole, SeedResonator
from patternlab.dynamics import (
    GapViolation,
    NonHermitian,
    Resonant,
    SweepSpec,
    assemble,
    band_projection,
    from_blocks,
    represent,
    residuals,
    respond,
    spectrum,
    sweep,
)
from patternlab.isometry import Isometry
from patternlab.pattern import Window, generate, translate_pattern
from patternlab.scenario import KernelFactory, PatternFamily


def chain_kernel(onsite=2.0, hop=-0.7):
    def fn(g, L):
        d = np.linalg.norm(g.v)
        if d < 1e-9:
            return np.array([[onsite]])
        return np.array([[hop]]) if abs(d - 1) < 1e-9 else np.zeros((1, 1))
    return FunctionKernel(fn, 1, 1.0)


def tab_kernel(L, rng, n=2, reach=1.6, closure=True):
    entries = []
    for i in support(L, reach):
        g = L[i]
        if not any(h.inverse().allclose(g, 1e-9) and not h.allclose(g, 1e-9) for h, _ in entries):
            entries.append((g, rng.normal(size=(n, n)) + 1j * rng.normal(size=(n, n))))
    return TabulatedKernel(entries, hermitian_closure=closure)


def test_unit_gives_identity(families):
    D = assemble(DeltaKernel(3), families["quasi"])
    assert np.array_equal(D.matrix, np.eye(D.size))
    assert np.allclose(spectrum(D).eigenvalues, 1.0)


@pytest.mark.parametrize("n", [3, 40])
def test_chain_spectrum(n):
    S = spectrum(assemble(chain_kernel(), chain(n)), vectors=True)
    assert np.allclose(S.eigenvalues, tridiagonal_chain_eigs(n, 2.0, -0.7), atol=1e-13)
    assert residuals(assemble(chain_kernel(), chain(n)), S).max() < 1e-13


def test_three_sites_by_hand():
    ev = spectrum(assemble(chain_kernel(1.0, 1.0), chain(3))).eigenvalues
    assert np.allclose(ev, [1 - np.sqrt(2), 1.0, 1 + np.sqrt(2)], atol=1e-15)


@pytest.mark.parametrize("name", ["p2", "p4"])
def test_represent_matches_assemble(families, name, rng):
    L = families[name]
    f = tab_kernel(L, rng)
    A, R = assemble(f, L), represent(f, L)
    assert np.max(np.abs(A.matrix - R.matrix)) <= 1e-12
    assert A.hermiticity_error() <= 1e-12


def test_representation_of_star(families, rng):
    L = families["quasi"]
    c = rng.normal(size=(3, 2, 2)) + 1j * rng.normal(size=(3, 2, 2))
    f = FunctionKernel(lambda g, M: c[0] + c[1] * g.v[0] + c[2] * g.r[0, 1], 2, 2.2)
    R, Rs = represent(f, L).matrix, represent(star(f), L).matrix
    assert np.max(np.abs(R.conj().T - Rs)) <= 1e-12


def test_non_hermitian_kernel_is_rejected(families, rng):
    L = families["p4"]
    f = tab_kernel(L, rng, closure=False)
    with pytest.raises(NonHermitian):
        assemble(f, L)
    with pytest.warns(UserWarning):
        D = assemble(f, L, symmetrize=True)
    assert D.hermiticity_error() == 0.0


def test_trace_identity(families, rng):
    L = families["p2"]
    f = tab_kernel(L, rng)
    D = assemble(f, L)
    expect = sum(np.trace(restrict(f, translate_pattern(L[i], L))) for i in range(len(L)))
    assert np.trace(D.matrix) == pytest.approx(expect, abs=1e-10)
    assert np.sum(spectrum(D).eigenvalues) == pytest.approx(expect.real, abs=1e-9)


def test_response_against_eigen_expansion(families, rng):
    L = families["p4"]
    D = assemble(tab_kernel(L, rng), L)
    S = spectrum(D, vectors=True)
    f = rng.normal(size=D.size)
    w = 0.5 * (S.eigenvalues[10] + S.eigenvalues[11])
    r = respond(D, None, f, np.sqrt(abs(w)) if w > 0 else 0.0)
    w2 = r.omega ** 2
    v = S.eigenvectors
    expect = v @ ((v.conj().T @ f) / (S.eigenvalues - w2))
    assert np.allclose(r.xi, expect, atol=1e-9)
    assert r.residual < 1e-10


def test_response_scales_with_mass(families):
    L = families["p4"]
    seed = SeedResonator(2, np.diag([4.0, 4.0, 1.0]), np.eye(3))
    D = assemble(DeltaKernel(3) * 2.0, L)
    f = np.ones(D.size)
    r = respond(D, seed, f, 1.0)
    # (2 - 1) xi = M0^-1/2 f
    assert np.allclose(r.xi.reshape(-1, 3), [0.5, 0.5, 1.0])


def test_resonance_and_divergence():
    L = chain(9)
    D = assemble(chain_kernel(), L)
    S = spectrum(D, vectors=True)
    lam = S.eigenvalues[4]
    f = S.eigenvectors[:, 4] + 0.1
    with pytest.raises(Resonant):
        respond(D, None, f, np.sqrt(lam))
    amps = []
    for dist in (1e-3, 1e-4, 1e-5):
        amps.append(np.linalg.norm(respond(D, None, f, np.sqrt(lam + dist)).xi) * dist)
    # |xi| ~ |<v|f>| / dist near a simple eigenvalue
    assert np.allclose(amps, abs(S.eigenvectors[:, 4] @ f), rtol=1e-2)


def test_band_projection(families, rng):
    L = families["p2"]
    D = assemble(tab_kernel(L, rng), L)
    S = spectrum(D, vectors=True)
    ev = S.eigenvalues
    gap = (0.5 * (ev[4] + ev[5]), 0.5 * (ev[20] + ev[21]))
    P = band_projection(S, gap)
    assert P.rank == 16
    assert P.idempotency_error() < 1e-12 and P.hermiticity_error() < 1e-12
    assert np.max(np.abs(P.projector @ D.matrix - D.matrix @ P.projector)) < 1e-10
    assert np.trace(P.projector).real == pytest.approx(16)
    with pytest.raises(GapViolation):
        band_projection(S, (ev[4], gap[1]))
    with pytest.raises(ValueError):
        band_projection(spectrum(D), gap)


def test_interior_filter_drops_edge_modes():
    L = chain(30)
    D = assemble(chain_kernel(), L)
    S = spectrum(D, interior=True)
    assert 0 < len(S) <= 30 and np.all(S.interior_weights >= 0.5)


def constant_family(value, L):
    return L


def failing_kernel(value, pattern):
    if value > 0.5:
        raise ValueError("no kernel here")
    return chain_kernel()


def test_sweep_constant_and_failures():
    L = chain(7)
    fam = functools.partial(constant_family, L=L)
    table = sweep(SweepSpec("x", (0.0, 0.25, 1.0), fam, failing_kernel))
    assert list(table.failures) == [1.0] and "no kernel here" in table.failures[1.0]
    assert np.array_equal(table.spectra[0], table.spectra[1])
    assert table.to_csv().splitlines()[0] == "param,index,eigenvalue"
    assert len(table.to_csv().splitlines()) == 1 + 14
    with pytest.raises(ValueError):
        SweepSpec("x", (1.0, 0.0), fam, failing_kernel)
    with pytest.raises(ValueError):
        SweepSpec("x", (), fam, failing_kernel)


QUASI = {"kind": "quasirotation", "step": {"v": [1.0, 0.0], "angle": 1.8944516501989659}}
RESONATOR = {"mass": [[1.0]], "stiffness": [[1.0]], "frozen": [True, True, False],
             "dipoles": [{"offset": [0.0, 0.0], "moment": [1.0, 0.0, 0.0]}]}


def test_phase_sweep_is_periodic_and_worker_independent():
    fam = PatternFamily(QUASI, {"radius": 6.5}, 2, "phase")
    kf = KernelFactory(RESONATOR, {"type": "dipole", "strength": 0.05, "cutoff": 3.0}, 2)
    spec = SweepSpec("phase", (0.0, 1.0, 2 * np.pi), fam, kf)
    one = sweep(spec, workers=1)
    assert not one.failures
    assert np.allclose(one.spectra[0], one.spectra[2], atol=1e-9)
    assert sweep(spec, workers=2).to_csv() == one.to_csv()


def test_spectrum_invariant_under_global_motion(p4_spec, rng):
    seed = SeedResonator(2, np.eye(3), np.diag([4.0, 4.0, 1.0]),
                         (((0.05, 0.0), (0.0, 0.0, 1.0)), ((-0.05, 0.0), (1.0, 0.0, 0.0))))
    model = CouplingModel(seed, DipoleDipole.from_seed(seed, 0.01, 2.5))
    p = central_alignment(generate(p4_spec, Window(3.0)), 0.5)
    g = Isometry.random(2, rng, scale=4.0, improper=True)
    q = translate_pattern(g, p)
    a = spectrum(assemble(model.kernel(p), p)).eigenvalues
    b = spectrum(assemble(model.kernel(q), q)).eigenvalues
    assert np.max(np.abs(a - b)) <= 1e-8


def test_from_blocks_matches_reduced_kernel(p4_spec):
    seed = SeedResonator(2, np.eye(3), np.diag([4.0, 4.0, 1.0]),
                         (((0.05, 0.0), (0.0, 0.0, 1.0)),))
    p = central_alignment(generate(p4_spec, Window(3.0)), 0.5)
    k = CouplingModel(seed, DipoleDipole.from_seed(seed, 0.01, 2.5)).kernel(p)
    D = from_blocks(k.blocks, p, 3, k.coupling_range)
    assert np.array_equal(assemble(k, p).matrix, D.matrix)
