"""Equivariant coupling models: equilibria, coupling matrices W and reduced w.

Site displacements use a co-moving chart: a resonator placed at ``P = x^-1``
is displaced to ``P o (dt, exp(omega))``.  The chart has N = 3 dofs in the
plane (tx, ty, theta) and N = 6 in space; dofs can be frozen.

Pair energies are evaluated in the frame of the first site, so they depend
on the relative element ``x_a x_b^-1`` only.  Planar systems are embedded in
space (z = 0, rotations about z) for the dipole fields.
"""
from __future__ import annotations

from collections import OrderedDict
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy.linalg import LinAlgError, eigh, lu_factor, lu_solve
from scipy.spatial import cKDTree
from scipy.spatial.transform import Rotation

from .algebra import CouplingKernel
from .isometry import EQUAL_TOL, Isometry, compose, compose_arrays, inverse, inverse_arrays
from .pattern import Pattern, translate_pattern


class NonConvergence(RuntimeError):
    pass


class EscapedBasin(RuntimeError):
    pass


def chart_size(dim: int) -> int:
    return 3 if dim == 2 else 6


def _check_pd(name: str, m: np.ndarray) -> None:
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        raise ValueError(f"{name} must be square")
    if not np.allclose(m, m.T, atol=1e-12):
        raise ValueError(f"{name} must be symmetric")
    if np.linalg.eigvalsh(m).min() <= 0:
        raise ValueError(f"{name} must be positive definite")


@dataclass(frozen=True, eq=False)
class SeedResonator:
    dim: int
    mass_matrix: np.ndarray
    onsite_stiffness: np.ndarray
    dipole_moments: tuple = ()
    frozen: tuple = ()

    def __post_init__(self):
        if self.dim not in (2, 3):
            raise ValueError("dim must be 2 or 3")
        n = chart_size(self.dim)
        frozen = tuple(bool(f) for f in self.frozen) if self.frozen else (False,) * n
        if len(frozen) != n:
            raise ValueError(f"frozen mask needs {n} entries")
        if all(frozen):
            raise ValueError("all dofs frozen")
        object.__setattr__(self, "frozen", frozen)
        m0 = np.atleast_2d(np.asarray(self.mass_matrix, dtype=float))
        v0 = np.atleast_2d(np.asarray(self.onsite_stiffness, dtype=float))
        for name, m in (("mass_matrix", m0), ("onsite_stiffness", v0)):
            if m.shape != (self.n_dof, self.n_dof):
                raise ValueError(f"{name} must be {self.n_dof}x{self.n_dof}")
            _check_pd(name, m)
        object.__setattr__(self, "mass_matrix", m0)
        object.__setattr__(self, "onsite_stiffness", v0)
        dips = []
        for off, mom in self.dipole_moments:
            off = np.asarray(off, dtype=float)
            mom = np.asarray(mom, dtype=float)
            if off.shape != (self.dim,) or mom.shape != (3,):
                raise ValueError("dipole needs a dim-vector offset and a 3-vector moment")
            dips.append((off, mom))
        object.__setattr__(self, "dipole_moments", tuple(dips))

    @property
    def n_dof(self) -> int:
        return int(sum(not f for f in self.frozen))

    @property
    def free(self) -> np.ndarray:
        return np.flatnonzero(~np.array(self.frozen))

    def step_scales(self, length: float) -> np.ndarray:
        """Finite-difference step per free dof: lengths for translations, radians for angles."""
        full = np.where(np.arange(chart_size(self.dim)) < self.dim, length, 1.0)
        return full[self.free]

    def expand(self, q: np.ndarray) -> np.ndarray:
        """Free-dof displacements (..., n_dof) -> full chart (..., 3|6)."""
        q = np.asarray(q, dtype=float)
        out = np.zeros(q.shape[:-1] + (chart_size(self.dim),))
        out[..., self.free] = q
        return out

    @classmethod
    def from_config(cls, cfg: dict, dim: int) -> "SeedResonator":
        return cls(dim, np.asarray(cfg["mass"], dtype=float), np.asarray(cfg["stiffness"], dtype=float),
                   tuple((d["offset"], d["moment"]) for d in cfg.get("dipoles", [])),
                   tuple(cfg.get("frozen", ())))


# -- rigid displacements -----------------------------------------------------

def _exp_rot(omega: np.ndarray, dim: int) -> np.ndarray:
    """Batched exp of chart angles: (..., 1) -> rot2, (..., 3) -> rot3."""
    if dim == 2:
        th = omega[..., 0]
        c, s = np.cos(th), np.sin(th)
        return np.stack([np.stack([c, -s], -1), np.stack([s, c], -1)], -2)
    flat = omega.reshape(-1, 3)
    return Rotation.from_rotvec(flat).as_matrix().reshape(omega.shape[:-1] + (3, 3))


def _displace(v, r, q, dim):
    """Placement (v, r) composed with the chart displacement q (full chart)."""
    return compose_arrays(v, r, q[..., :dim], _exp_rot(q[..., dim:], dim))


def _embed(v, r, dim):
    if dim == 3:
        return v, r
    v3 = np.concatenate([v, np.zeros(v.shape[:-1] + (1,))], -1)
    r3 = np.zeros(r.shape[:-2] + (3, 3))
    r3[..., :2, :2] = r
    r3[..., 2, 2] = 1.0
    return v3, r3


def _rotate(vecs: np.ndarray, r: np.ndarray) -> np.ndarray:
    """Rows of ``vecs`` (k, 3) mapped by every r (..., 3, 3): result (..., k, 3)."""
    out = vecs[:, 0, None] * r[..., None, :, 0]
    for j in (1, 2):
        out = out + vecs[:, j, None] * r[..., None, :, j]
    return out


def _dipole_sum(va, ra, vb, rb, dipoles, dim, det_a=None, det_b=None) -> np.ndarray:
    """Point-dipole interaction between two rigid bodies with placements a, b.

    Moments are pseudo-vectors: an improper placement r maps m to det(r) r m.
    """
    va, ra = _embed(va, ra, dim)
    vb, rb = _embed(vb, rb, dim)
    offs = np.array([np.append(o, 0.0) if dim == 2 else o for o, _ in dipoles])
    moms = np.array([m for _, m in dipoles])
    det_a = np.linalg.det(ra) if det_a is None else det_a
    det_b = np.linalg.det(rb) if det_b is None else det_b
    pa = va[..., None, :] + _rotate(offs, ra)
    pb = vb[..., None, :] + _rotate(offs, rb)
    ma = np.asarray(det_a)[..., None, None] * _rotate(moms, ra)
    mb = np.asarray(det_b)[..., None, None] * _rotate(moms, rb)
    d = pb[..., None, :, :] - pa[..., :, None, :]
    r2 = np.sum(d * d, -1)
    if np.any(r2 < 1e-24):
        raise ValueError("coincident dipole positions")
    ma, mb = ma[..., :, None, :], mb[..., None, :, :]
    e = (np.sum(ma * mb, -1) - 3 * np.sum(ma * d, -1) * np.sum(mb * d, -1) / r2) / (r2 * np.sqrt(r2))
    return e.sum(axis=(-2, -1))


def dipole_pair_energy(x: Isometry, xp: Isometry, q, qp, dipoles, strength: float = 1.0) -> float:
    """Dipole energy of two displaced resonators, computed in the laboratory frame.

    ``q`` and ``qp`` are full-chart displacements; ``dipoles`` is a sequence of
    (seed-frame offset, moment pseudo-vector).
    """
    dim = x.dim
    pa, pb = inverse(x), inverse(xp)
    va, ra = _displace(pa.v, pa.r, np.asarray(q, dtype=float), dim)
    vb, rb = _displace(pb.v, pb.r, np.asarray(qp, dtype=float), dim)
    return float(strength * _dipole_sum(va, ra, vb, rb, dipoles, dim))


# -- potentials --------------------------------------------------------------

class PairPotential:
    """Pairwise-additive potential V_L with a coupling cutoff.

    ``pair_energy`` works in the frame of site a: its inputs are the relative
    elements ``x_a x_b^-1`` (stacked) and full-chart displacements.
    """
    cutoff: float

    def pair_energy(self, rel_v, rel_r, qa, qb) -> np.ndarray:
        raise NotImplementedError

    def site_energy(self, vs, rs, q) -> np.ndarray | None:
        """Optional single-site term in the laboratory frame."""
        return None

    def evaluate(self, x: Isometry, xp: Isometry, q, qp) -> float:
        rel = compose(x, inverse(xp))
        return float(self.pair_energy(rel.v[None], rel.r[None], np.asarray(q, float)[None],
                                      np.asarray(qp, float)[None])[0])


@dataclass(frozen=True, eq=False)
class ZeroPotential(PairPotential):
    cutoff: float = 0.0

    def pair_energy(self, rel_v, rel_r, qa, qb):
        return np.zeros(qa.shape[:-1])


@dataclass(frozen=True, eq=False)
class DipoleDipole(PairPotential):
    dipoles: tuple
    strength: float = 1.0
    cutoff: float = 2.5

    @classmethod
    def from_seed(cls, seed: SeedResonator, strength: float = 1.0, cutoff: float = 2.5) -> "DipoleDipole":
        return cls(seed.dipole_moments, strength, cutoff)

    def pair_energy(self, rel_v, rel_r, qa, qb):
        dim = rel_v.shape[-1]
        va, ra = qa[..., :dim], _exp_rot(qa[..., dim:], dim)
        vb, rb = _displace(rel_v, rel_r, qb, dim)
        det_b = np.sign(np.linalg.det(rel_r))
        return self.strength * _dipole_sum(va, ra, vb, rb, self.dipoles, dim, 1.0, det_b)


@dataclass(frozen=True, eq=False)
class TabulatedPair(PairPotential):
    """Quadratic pair energy 1/2 z^T K z, z = (q_a, q_b), with K looked up by relative element."""
    entries: tuple
    cutoff: float
    match_tolerance: float = 1e-6

    def pair_energy(self, rel_v, rel_r, qa, qb):
        z = np.concatenate([qa, qb], -1)
        K = np.zeros((len(rel_v), z.shape[-1], z.shape[-1]))
        for k in range(len(rel_v)):
            for g, m in self.entries:
                if np.linalg.norm(g.v - rel_v[k]) + np.linalg.norm(g.r - rel_r[k]) <= self.match_tolerance:
                    K[k] = m
                    break
        return 0.5 * np.einsum("...i,...ij,...j->...", z, K, z)


@dataclass(frozen=True, eq=False)
class ExternalField(PairPotential):
    """A pair potential plus the Zeeman energy -m.B of each dipole in a fixed laboratory field.

    The field singles out a laboratory frame, so this model is not equivariant.
    """
    base: PairPotential
    field: tuple
    dipoles: tuple

    @property
    def cutoff(self) -> float:
        return self.base.cutoff

    def pair_energy(self, rel_v, rel_r, qa, qb):
        return self.base.pair_energy(rel_v, rel_r, qa, qb)

    def site_energy(self, vs, rs, q):
        dim = vs.shape[-1]
        pv, pr = inverse_arrays(vs, rs)
        _, r = _displace(pv, pr, q, dim)
        _, r3 = _embed(np.zeros(r.shape[:-2] + (dim,)), r, dim)
        det = np.linalg.det(r3)
        b = np.asarray(self.field, dtype=float)
        out = np.zeros(r.shape[:-2])
        for _, m in self.dipoles:
            out -= det * ((r3 @ m) @ b)
        return out


# -- finite differences ------------------------------------------------------

def _stacked(fn, z: np.ndarray, shifts: np.ndarray) -> np.ndarray:
    """fn evaluated at z + shift for every shift in one batched call: (K, P)."""
    return fn(z[None, :, :] + shifts[:, None, :])


def _fd_gradient(fn, z: np.ndarray, steps: np.ndarray) -> np.ndarray:
    """Fourth-order central gradient of a batched scalar function of z (P, k)."""
    m = z.shape[1]
    e = np.diag(steps)
    vals = _stacked(fn, z, np.concatenate([2 * e, e, -e, -2 * e]))
    p2, p1, m1, m2 = vals.reshape(4, m, -1)
    return ((-p2 + 8 * p1 - 8 * m1 + m2) / (12 * steps[:, None])).T


def _fd_hessian2(fn, z: np.ndarray, steps: np.ndarray) -> np.ndarray:
    m = z.shape[1]
    a, b = np.triu_indices(m)
    ea, eb = np.diag(steps)[a], np.diag(steps)[b]
    vals = _stacked(fn, z, np.concatenate([ea + eb, ea - eb, -ea + eb, -ea - eb]))
    pp, pm, mp, mm = vals.reshape(4, len(a), -1)
    val = (pp - pm - mp + mm) / (4 * steps[a] * steps[b])[:, None]
    H = np.zeros((z.shape[0], m, m))
    H[:, a, b] = val.T
    H[:, b, a] = val.T
    return H


def fd_hessian(fn, z: np.ndarray, steps: np.ndarray, richardson: bool = True):
    """Central mixed-difference Hessian, optionally Richardson-extrapolated.

    Returns (hessian, error estimate) where the estimate is the largest change
    introduced by the extrapolation.
    """
    h1 = _fd_hessian2(fn, z, steps)
    if not richardson:
        return h1, np.nan
    h2 = _fd_hessian2(fn, z, steps / 2)
    h = (4 * h2 - h1) / 3
    return h, float(np.max(np.abs(h - h2))) if h.size else 0.0


def fd_hessian4(fn, z: np.ndarray, steps: np.ndarray) -> np.ndarray:
    """Fourth-order mixed stencil (tensor product of 4-point first differences)."""
    m = z.shape[1]
    w = {-2: 1.0, -1: -8.0, 1: 8.0, 2: -1.0}
    H = np.zeros((z.shape[0], m, m))
    for a in range(m):
        for b in range(a, m):
            acc = 0.0
            for i, wi in w.items():
                for j, wj in w.items():
                    e = np.zeros(m)
                    e[a] += i * steps[a]
                    e[b] += j * steps[b]
                    acc = acc + wi * wj * fn(z + e)
            H[:, a, b] = H[:, b, a] = acc / (144 * steps[a] * steps[b])
    return H


# -- the model ---------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class CouplingMatrixSet:
    pattern: Pattern
    pairs: dict
    equilibrium_offsets: np.ndarray
    coupling_range: float
    fd_error: float = 0.0

    @property
    def n_dof(self) -> int:
        return self.equilibrium_offsets.shape[1]

    def block(self, i: int, j: int) -> np.ndarray:
        z = self.pairs.get((i, j))
        return z if z is not None else np.zeros((self.n_dof, self.n_dof))

    def dense(self) -> np.ndarray:
        n, N = len(self.pattern), self.n_dof
        out = np.zeros((n * N, n * N))
        for (i, j), m in self.pairs.items():
            out[i * N:(i + 1) * N, j * N:(j + 1) * N] = m
        return out


def characteristic_length(p: Pattern) -> float:
    if len(p) < 2:
        return 1.0
    d, _ = cKDTree(p.positions()).query(p.positions(), k=2)
    return float(d[:, 1].min())


def bonds(p: Pattern, cutoff: float) -> np.ndarray:
    """Site pairs (i < j) whose nominal distance is within ``cutoff``."""
    if len(p) < 2 or cutoff <= 0:
        return np.zeros((0, 2), dtype=int)
    pairs = cKDTree(p.positions()).query_pairs(cutoff + EQUAL_TOL, output_type="ndarray")
    return pairs[np.lexsort((pairs[:, 1], pairs[:, 0]))] if len(pairs) else np.zeros((0, 2), dtype=int)


class _Energy:
    """Total potential 1/2 sum q V0 q + sum_bonds E + sum_sites S over free dofs."""

    def __init__(self, p: Pattern, seed: SeedResonator, pot: PairPotential, fd_rel: float):
        if p.dim != seed.dim:
            raise ValueError("pattern/seed dimension mismatch")
        self.p, self.seed, self.pot = p, seed, pot
        self.length = characteristic_length(p)
        self.steps = seed.step_scales(self.length) * fd_rel
        self.bonds = bonds(p, pot.cutoff)
        a, b = self.bonds[:, 0], self.bonds[:, 1]
        self.rel_v, self.rel_r = compose_arrays(p.vs[a], p.rs[a], *inverse_arrays(p.vs[b], p.rs[b]))
        self.n, self.N = len(p), seed.n_dof

    def pair_fn(self, z):
        N = self.N
        return self.pot.pair_energy(self.rel_v, self.rel_r, self.seed.expand(z[..., :N]),
                                    self.seed.expand(z[..., N:]))

    def site_fn(self, q):
        out = self.pot.site_energy(self.p.vs, self.p.rs, self.seed.expand(q))
        return np.zeros(q.shape[:-1]) if out is None else out

    def _z(self, Q):
        return np.concatenate([Q[self.bonds[:, 0]], Q[self.bonds[:, 1]]], 1)

    def value(self, Q) -> float:
        v0 = self.seed.onsite_stiffness
        total = 0.5 * np.einsum("ni,ij,nj->", Q, v0, Q) + self.site_fn(Q).sum()
        if len(self.bonds):
            total += self.pair_fn(self._z(Q)).sum()
        return float(total)

    def gradient(self, Q) -> np.ndarray:
        N = self.N
        G = Q @ self.seed.onsite_stiffness
        G = G + _fd_gradient(self.site_fn, Q, self.steps)
        if len(self.bonds):
            g = _fd_gradient(self.pair_fn, self._z(Q), np.tile(self.steps, 2))
            np.add.at(G, self.bonds[:, 0], g[:, :N])
            np.add.at(G, self.bonds[:, 1], g[:, N:])
        return G

    def hessian_blocks(self, Q, richardson: bool = True):
        """Second derivatives of the coupling part: site blocks (n,N,N) and bond blocks (P,2N,2N)."""
        site, e1 = fd_hessian(self.site_fn, Q, self.steps, richardson)
        if len(self.bonds):
            pair, e2 = fd_hessian(self.pair_fn, self._z(Q), np.tile(self.steps, 2), richardson)
        else:
            pair, e2 = np.zeros((0, 2 * self.N, 2 * self.N)), 0.0
        return site, pair, max(e1, e2)

    def dense_hessian(self, Q, richardson: bool = False):
        n, N = self.n, self.N
        site, pair, _ = self.hessian_blocks(Q, richardson)
        H = np.zeros((n, N, n, N))
        idx = np.arange(n)
        H[idx, :, idx, :] += site + self.seed.onsite_stiffness
        a, b = self.bonds[:, 0], self.bonds[:, 1]
        np.add.at(H, (a, slice(None), a, slice(None)), pair[:, :N, :N])
        np.add.at(H, (b, slice(None), b, slice(None)), pair[:, N:, N:])
        np.add.at(H, (a, slice(None), b, slice(None)), pair[:, :N, N:])
        np.add.at(H, (b, slice(None), a, slice(None)), pair[:, N:, :N])
        return H.reshape(n * N, n * N)


def find_equilibrium(p: Pattern, seed: SeedResonator, pot: PairPotential, max_iter: int = 50,
                     gtol: float = 1e-10, trust: float = 0.2, fd_rel: float = 1e-3) -> np.ndarray:
    """Damped Newton iteration for the minimum of the total potential near q = 0.

    ``trust`` bounds each site's displacement in units of the nearest-neighbour
    distance (translations) and radians (angles).
    """
    en = _Energy(p, seed, pot, fd_rel)
    n, N = en.n, en.N
    Q = np.zeros((n, N))
    scale = seed.step_scales(en.length)
    fac, last = None, np.inf
    for it in range(max_iter + 1):
        G = en.gradient(Q)
        gn = float(np.linalg.norm(G))
        if gn <= gtol:
            return Q
        if it == max_iter:
            break
        # reuse the factorised Hessian while it still contracts the gradient quickly
        if fac is None or gn > 0.5 * last:
            try:
                fac = lu_factor(en.dense_hessian(Q), check_finite=True)
            except (LinAlgError, ValueError) as exc:
                raise NonConvergence(f"Hessian factorisation failed: {exc}") from exc
        last = gn
        s = -lu_solve(fac, G.reshape(-1)).reshape(n, N)
        if not np.all(np.isfinite(s)):
            raise NonConvergence("singular Hessian")
        slope = float(np.sum(G * s))
        if slope >= 0:
            raise NonConvergence("Newton direction is not a descent direction")
        alpha, u0 = 1.0, en.value(Q)
        if gn > 1e-6:
            while en.value(Q + alpha * s) > u0 + 1e-4 * alpha * slope and alpha > 1e-8:
                alpha *= 0.5
        Q = Q + alpha * s
        if np.max(np.linalg.norm(Q / scale, axis=1)) > trust:
            raise EscapedBasin("equilibrium search left the trust region around q = 0")
    raise NonConvergence(f"gradient norm {gn:.3e} after {max_iter} iterations")


def coupling_matrices(p: Pattern, seed: SeedResonator, pot: PairPotential, fd_rel: float = 1e-3,
                      equilibrium: np.ndarray | None = None) -> CouplingMatrixSet:
    """W_{x,x'} = delta V0 + d^2 V / dq_x dq_x' at the equilibrium."""
    Q = find_equilibrium(p, seed, pot, fd_rel=fd_rel) if equilibrium is None else equilibrium
    en = _Energy(p, seed, pot, fd_rel)
    N = en.N
    site, pair, err = en.hessian_blocks(Q)
    diag = site + seed.onsite_stiffness
    pairs: dict = {}
    for k, (a, b) in enumerate(en.bonds):
        diag[a] += pair[k, :N, :N]
        diag[b] += pair[k, N:, N:]
        pairs[(int(a), int(b))] = pair[k, :N, N:].copy()
        pairs[(int(b), int(a))] = pair[k, N:, :N].copy()
    for i in range(en.n):
        pairs[(i, i)] = diag[i]
    return CouplingMatrixSet(p, pairs, Q, pot.cutoff, err)


def mass_scaling(seed: SeedResonator) -> np.ndarray:
    """M0^{-1/2}."""
    w, v = eigh(seed.mass_matrix)
    if w.min() <= 0:
        raise ValueError("mass matrix is not positive definite")
    return (v / np.sqrt(w)) @ v.T


def reduced_blocks(W: CouplingMatrixSet, seed: SeedResonator) -> dict:
    s = mass_scaling(seed)
    return {k: s @ m @ s for k, m in W.pairs.items()}


class ReducedKernel(CouplingKernel):
    """f(g, L) = w_{e,g}(L) on the orbit of the pattern the matrices were computed on.

    For L = x . P the identity of L is the site x of P, recovered from the
    moved window center, and g in L is the site g x.
    """

    def __init__(self, W: CouplingMatrixSet, seed: SeedResonator):
        super().__init__(W.n_dof, W.coupling_range)
        self.W = W
        self.blocks = reduced_blocks(W, seed)

    def site_of(self, L: Pattern) -> Isometry:
        P = self.W.pattern
        if len(L) != len(P):
            raise ValueError("pattern is not a translate of the coupling pattern")
        return compose(inverse(L.window.centered(L.dim)), P.window.centered(P.dim))

    def _evaluate(self, g, L):
        P = self.W.pattern
        x = self.site_of(L)
        i = P.find(x)
        j = P.find(compose(g, x))
        if i is None or j is None:
            raise ValueError("groupoid element not in the coupling pattern's orbit")
        m = self.blocks.get((i, j))
        return np.zeros((self.n_dof, self.n_dof)) if m is None else m


def reduce(W: CouplingMatrixSet, seed: SeedResonator) -> ReducedKernel:
    return ReducedKernel(W, seed)


@dataclass(eq=False)
class CouplingModel:
    """Seed + potential: produces W for any pattern, with a small cache."""
    seed: SeedResonator
    potential: PairPotential
    fd_rel: float = 1e-3
    cache_size: int = 16
    _cache: OrderedDict = field(default_factory=OrderedDict, repr=False)

    def matrices(self, p: Pattern) -> CouplingMatrixSet:
        key = (p.vs.tobytes(), p.rs.tobytes())
        hit = self._cache.get(key)
        if hit is not None:
            self._cache.move_to_end(key)
            return hit
        W = coupling_matrices(p, self.seed, self.potential, self.fd_rel)
        self._cache[key] = W
        if len(self._cache) > self.cache_size:
            self._cache.popitem(last=False)
        return W

    def kernel(self, p: Pattern) -> ReducedKernel:
        return reduce(self.matrices(p), self.seed)


class ModelKernel(CouplingKernel):
    """w_{e,g}(L) computed from the physics on L itself (no equivariance assumed)."""

    def __init__(self, model: CouplingModel):
        super().__init__(model.seed.n_dof, model.potential.cutoff)
        self.model = model
        self._scale = mass_scaling(model.seed)

    def bond_matrix(self, L: Pattern, i: int, j: int) -> np.ndarray:
        return self._scale @ self.model.matrices(L).block(i, j) @ self._scale

    def _evaluate(self, g, L):
        j = L.find(g)
        if j is None:
            raise ValueError("g is not a point of L")
        return self.bond_matrix(L, L.identity_index(), j)


@dataclass(frozen=True)
class EquivarianceReport:
    max_deviation: float
    threshold: float
    trials: int

    @property
    def passed(self) -> bool:
        return self.max_deviation <= self.threshold

    def __float__(self) -> float:
        return self.max_deviation


def check_equivariance(k: ModelKernel, p: Pattern, trials: int = 100, rng=None,
                       threshold: float = 1e-8, scale: float | None = None,
                       group_elements: Sequence[Isometry] | None = None) -> EquivarianceReport:
    """max over random g and bonds of |w_{g.x, g.x'}(g.p) - w_{x,x'}(p)|.

    translate_pattern keeps the point order, so bond (i, j) of g.p is the
    image of bond (i, j) of p.
    """
    rng = np.random.default_rng(rng)
    scale = p.window.radius_translation if scale is None else scale
    gs = list(group_elements) if group_elements is not None else [
        Isometry.random(p.dim, rng, scale=scale, improper=bool(rng.integers(2))) for _ in range(trials)]
    worst = 0.0
    base = k.model.matrices(p)
    for g in gs:
        gp = translate_pattern(g, p)
        for (i, j) in base.pairs:
            dev = np.max(np.abs(k.bond_matrix(gp, i, j) - k.bond_matrix(p, i, j)))
            worst = max(worst, float(dev))
    return EquivarianceReport(worst, threshold, len(gs))
