"""Shadowing, periodic closing, Markov partitions, coding and spectral pieces."""

from __future__ import annotations

import itertools
import json
from dataclasses import dataclass, field
from math import gcd
from typing import Optional

import numpy as np
from scipy import sparse
from scipy.sparse.csgraph import connected_components
from scipy.sparse.linalg import spsolve

from .errors import (EmptyIntersection, InadmissibleWord, NewtonDiverged, RefinementExplosion,
                     SmallnessChainViolated)
from .srb import _backward_points, _frames_along
from .systems import CAT_A, CAT_AINV, CAT_ES, CAT_EU, CAT_LAMBDA, SystemSpec, _skew_g, \
    _skew_g_preimages

REFINEMENT_BUDGET = 4096


# ---------------------------------------------------------------- shadowing


@dataclass
class PseudoOrbit:
    points: np.ndarray
    alpha: float
    periodic: bool = False
    defect: float = field(init=False)

    def __post_init__(self):
        self.points = np.asarray(self.points, dtype=float)
        self.defect = float("nan")

    def measure(self, sys: SystemSpec) -> float:
        P = self.points
        img = np.asarray(sys.map_eval(P))
        nxt = np.roll(P, -1, axis=0) if self.periodic else P[1:]
        d = sys.distance(img if self.periodic else img[:-1], nxt)
        self.defect = float(np.max(d)) if d.size else 0.0
        if self.defect > self.alpha:
            raise ValueError(f"defect {self.defect:.3g} exceeds declared α = {self.alpha}")
        return self.defect


@dataclass
class ShadowResult:
    points: np.ndarray
    beta: float
    newton_steps: int
    residual: float


def _boundary_rows(sys, x, which):
    """Rows selecting the stable ('s') or unstable ('u') coefficients at x."""
    prov = sys.known_splitting
    if prov is not None:
        U, S = prov(x)
    else:
        B = _backward_points(sys, x[None, :], 40)
        U = _frames_along(sys, B, sys.unstable_dim)[0, 0]
        S = np.linalg.svd(U.T)[2][U.shape[1]:].T
    Minv = np.linalg.inv(np.hstack([U, S]))
    du = U.shape[1]
    return Minv[du:] if which == "s" else Minv[:du]


def _newton_system(sys, Y, periodic, rows0, rowsN):
    """Sparse Jacobian and residual for one pseudo-orbit Y (n, d)."""
    n, d = Y.shape
    FY = np.asarray(sys.map_eval(Y))
    DF = np.asarray(sys.deriv_eval(Y))
    if periodic:
        R = sys.displacement(FY, np.roll(Y, -1, axis=0))
        eqs = n
    else:
        R = sys.displacement(FY[:-1], Y[1:])
        eqs = n - 1
    rows, cols, vals = [], [], []
    for i in range(eqs):
        j = (i + 1) % n
        r0 = i * d
        for a in range(d):
            for b in range(d):
                if DF[i, a, b] != 0.0:
                    rows.append(r0 + a)
                    cols.append(i * d + b)
                    vals.append(-DF[i, a, b])
            rows.append(r0 + a)
            cols.append(j * d + a)
            vals.append(1.0)
    rhs = [-R.ravel()]
    extra = eqs * d
    if not periodic:
        for Mrows, idx in ((rows0, 0), (rowsN, n - 1)):
            for a in range(Mrows.shape[0]):
                for b in range(d):
                    rows.append(extra + a)
                    cols.append(idx * d + b)
                    vals.append(Mrows[a, b])
            extra += Mrows.shape[0]
            rhs.append(np.zeros(Mrows.shape[0]))
    J = sparse.csr_matrix((vals, (rows, cols)), shape=(extra, n * d))
    return J, np.concatenate(rhs), float(np.max(np.abs(R))) if R.size else 0.0


def shadow(sys: SystemSpec, pseudo: PseudoOrbit, beta_target: float, max_newton: int = 10,
           tol: float = 1e-13, extend_backward: int = 0) -> ShadowResult:
    """True orbit β-close to a pseudo-orbit by Newton on the sequence space.

    Finite segments fix the stable coefficients of the correction at the
    first point and the unstable coefficients at the last; periodic ones
    solve the cyclic system.
    """
    X = np.asarray(pseudo.points, dtype=float)
    if np.isnan(pseudo.defect):
        pseudo.measure(sys)
    pre = 0
    if extend_backward and not pseudo.periodic:
        B = _backward_points(sys, X[:1], extend_backward)[0, ::-1][:-1]
        X = np.vstack([B, X])
        pre = extend_backward
    Y = X.copy()
    n, d = Y.shape
    rows0 = rowsN = None
    if not pseudo.periodic:
        rows0 = _boundary_rows(sys, Y[0], "s")
        rowsN = _boundary_rows(sys, Y[-1], "u")
    res = np.inf
    for it in range(1, max_newton + 1):
        J, rhs, res = _newton_system(sys, Y, pseudo.periodic, rows0, rowsN)
        if res < tol:
            it -= 1
            break
        delta = spsolve(J.tocsc(), rhs) if J.shape[0] == J.shape[1] else \
            sparse.linalg.lsqr(J, rhs, atol=1e-15, btol=1e-15)[0]
        if not np.all(np.isfinite(delta)):
            raise NewtonDiverged("non-finite Newton update")
        Y = sys.wrap(Y + delta.reshape(n, d))
    else:
        _, _, res = _newton_system(sys, Y, pseudo.periodic, rows0, rowsN)
    Y = Y[pre:]
    beta = float(np.max(sys.distance(Y, np.asarray(pseudo.points))))
    if res > 1e-9 or beta > beta_target:
        raise NewtonDiverged(f"shadow β = {beta:.3g} (target {beta_target}), residual {res:.2e}",
                             beta=beta, residual=res)
    return ShadowResult(Y, beta, it, float(res))


def _cyclic_newton_batch(sys, Y, steps=12, tol=1e-13):
    """Cyclic Newton for many short pseudo-orbits Y (m, n, d) at once."""
    m, n, d = Y.shape
    N = n * d
    for _ in range(steps):
        FY = np.asarray(sys.map_eval(Y.reshape(-1, d))).reshape(m, n, d)
        DF = np.asarray(sys.deriv_eval(Y.reshape(-1, d))).reshape(m, n, d, d)
        R = sys.displacement(FY, np.roll(Y, -1, axis=1))
        if np.max(np.abs(R)) < tol:
            break
        J = np.zeros((m, N, N))
        for i in range(n):
            j = (i + 1) % n
            J[:, i * d:(i + 1) * d, i * d:(i + 1) * d] -= DF[:, i]
            J[:, i * d:(i + 1) * d, j * d:(j + 1) * d] += np.eye(d)
        delta = np.linalg.solve(J, -R.reshape(m, N, 1))[..., 0]
        Y = sys.wrap(Y + delta.reshape(m, n, d))
    FY = np.asarray(sys.map_eval(Y.reshape(-1, d))).reshape(m, n, d)
    R = np.max(np.abs(sys.displacement(FY, np.roll(Y, -1, axis=1))), axis=(1, 2))
    return Y, R


def close_periodic(sys: SystemSpec, x, n: int, eps: float, alpha: Optional[float] = None):
    """Periodic point y with fⁿ(y) = y near x, from the cyclic pseudo-orbit of x."""
    x = np.asarray(x, dtype=float)
    orb = [x]
    for _ in range(n - 1):
        orb.append(np.asarray(sys.map_eval(orb[-1])))
    ret = float(sys.distance(sys.map_eval(orb[-1]), x))
    if alpha is not None and ret >= alpha:
        raise NewtonDiverged(f"return defect {ret:.3g} ≥ α = {alpha}")
    Y, R = _cyclic_newton_batch(sys, np.stack(orb)[None])
    y = Y[0, 0]
    z = y.copy()
    for _ in range(n):
        z = sys.map_eval(z)
    if R[0] > 1e-9 or sys.distance(z, y) > 1e-10 or sys.distance(x, y) >= eps:
        raise NewtonDiverged(f"closing failed: |fⁿy−y| = {sys.distance(z, y):.2e}, "
                             f"|y−x| = {sys.distance(x, y):.3g}")
    return y


def periodic_points_by_closing(sys: SystemSpec, n: int, seeds, return_tol: float = 0.25,
                               dedupe_tol: float = 1e-7, chunk: int = 4096):
    """Distinct fⁿ-fixed points from cyclic closings of near-returning seeds."""
    seeds = np.atleast_2d(np.asarray(seeds, dtype=float))
    d = seeds.shape[1]
    orb = np.empty((seeds.shape[0], n, d))
    orb[:, 0] = seeds
    for i in range(1, n):
        orb[:, i] = sys.map_eval(orb[:, i - 1])
    ret = sys.distance(sys.map_eval(orb[:, -1]), seeds)
    orb = orb[ret < return_tol]
    found = []
    for a in range(0, orb.shape[0], chunk):
        Y, R = _cyclic_newton_batch(sys, orb[a:a + chunk])
        found.append(Y[R < 1e-10, 0])
    P = np.concatenate(found) if found else np.empty((0, d))
    # exact period check (fⁿ(y) = y) and deduplication on a rounded key
    Z = P.copy()
    for _ in range(n):
        Z = sys.map_eval(Z)
    P = P[sys.distance(Z, P) < 1e-9]
    key = np.round(sys.wrap(P + dedupe_tol) / dedupe_tol).astype(np.int64)
    _, idx = np.unique(key, axis=0, return_index=True)
    return P[np.sort(idx)]


def cat_periodic_points(n: int) -> np.ndarray:
    """All fixed points of Aⁿ on the torus, from (Aⁿ − I)x ∈ ℤ²."""
    An = np.linalg.matrix_power(CAT_A.astype(np.int64), n)
    M = An - np.eye(2, dtype=np.int64)
    det = int(round(abs(np.linalg.det(M))))
    Minv = np.linalg.inv(M.astype(float))
    # x = M⁻¹k for k over a fundamental domain of Mℤ²; scan a covering box
    corners = np.array([[0, 0], [1, 0], [0, 1], [1, 1]]) @ M.T
    lo, hi = corners.min(axis=0), corners.max(axis=0)
    ks = np.stack(np.meshgrid(np.arange(lo[0], hi[0] + 1), np.arange(lo[1], hi[1] + 1),
                              indexing="ij"), axis=-1).reshape(-1, 2)
    X = ks @ Minv.T
    X = X - np.floor(X + 1e-12)
    key = np.round(X * det).astype(np.int64) % det
    _, idx = np.unique(key, axis=0, return_index=True)
    pts = X[np.sort(idx)]
    return np.column_stack([pts, np.zeros(len(pts))])


def cat_periodic_count(n: int) -> int:
    return int(round(CAT_LAMBDA ** n + CAT_LAMBDA ** (-n) - 2))


# ---------------------------------------------------------------- partitions


@dataclass
class TransitionMatrix:
    A: np.ndarray
    irreducible: bool
    aperiodic: bool

    @property
    def spectral_radius(self) -> float:
        return float(np.max(np.abs(np.linalg.eigvals(self.A.astype(float)))))


class MarkovPartition:
    """Finite cover by rectangles with a membership classifier.

    Subclasses provide rectangle membership, fiber samplers, boundary
    samplers and coding; shared checks live in module functions.
    """

    beta: float = np.inf
    kind = "abstract"

    @property
    def size(self) -> int:
        raise NotImplementedError

    def classify(self, X, margin=None):
        """Rectangle id per point, −1 when within ``margin`` of a boundary."""
        raise NotImplementedError

    def member(self, i, X, margin=0.0):
        raise NotImplementedError

    def sample_interior(self, i, m, rng):
        raise NotImplementedError

    def diameters(self):
        raise NotImplementedError

    def code_batch(self, words, center_index):
        """code() over the rows of ``words``: (points (N, d), diameters (N,))."""
        out = [self.code(w, center_index) for w in np.asarray(words)]
        return np.array([o[0] for o in out]), np.array([o[1] for o in out])

    def to_json(self) -> str:
        A = transition_matrix_exact(self) if hasattr(self, "exact_transitions") else None
        return json.dumps({"kind": self.kind, "size": self.size, "beta": self.beta,
                           "diameters": [float(v) for v in self.diameters()],
                           "matrix": None if A is None else A.A.astype(int).tolist()})


# ---- fat-cat: rectangles cut by stable/unstable segments through 0


def _ray_hits(P, e, seg_dir, lo, hi, kmax):
    """Least t > 0 with P + t e on {σ seg_dir : lo ≤ σ ≤ hi} + ℤ² (e ⊥ seg_dir)."""
    P = np.atleast_2d(P)
    best = np.full(P.shape[0], np.inf)
    sigma = np.full(P.shape[0], np.nan)
    rng = np.arange(-kmax, kmax + 1)
    for k0 in rng:
        for k1 in rng:
            D = np.array([k0, k1], dtype=float)[None, :] - P
            t = D @ e
            s = -(D @ seg_dir)
            ok = (t > 1e-14) & (s >= lo) & (s <= hi) & (t < best)
            best = np.where(ok, t, best)
            sigma = np.where(ok, s, sigma)
    return best, sigma


class CatPartition(MarkovPartition):
    """Cat-map rectangles with sides along Eᵘ and Eˢ.

    Level 0 is cut by S = [−sm, sp]·Eˢ and U = [−um, up]·Eᵘ through the fixed
    point; level r consists of the nonempty two-sided cylinders
    ⋂_{|t|≤r} f^{−t} R_{w_t} of the level-0 rectangles, whose boundary lies
    on f^{−r}S ∪ fʳU.
    """

    kind = "cat-boxes"

    def __init__(self, corners, sizes, s_range, u_range, base=None, words=None):
        self.corners = np.asarray(corners, dtype=float)
        self.sizes = np.asarray(sizes, dtype=float)
        self.s_lo, self.s_hi = -s_range[0], s_range[1]
        self.u_lo, self.u_hi = -u_range[0], u_range[1]
        self.kmax = int(np.ceil(max(list(s_range) + list(u_range)))) + 3
        self.base = base
        self.words = words
        self.level = 0 if words is None else (len(words[0]) - 1) // 2
        self._lookup = None if words is None else {tuple(w): i for i, w in enumerate(words)}
        self.beta = float(np.max(self.diameters()))

    @classmethod
    def from_segments(cls, s_range, u_range, n_probe=4096, seed=0):
        """Rectangles of the complement of S ∪ U, found by casting rays from probes."""
        lo_s, hi_s, lo_u, hi_u = -s_range[0], s_range[1], -u_range[0], u_range[1]
        kmax = int(np.ceil(max(list(s_range) + list(u_range)))) + 3
        rng = np.random.default_rng(seed)
        corners, sizes = [], []
        area = 0.0
        for _ in range(64):
            P = rng.random((n_probe, 2))
            up, dn, rt, lt = _four_hits(P, lo_s, hi_s, lo_u, hi_u, kmax)
            C = P - dn[:, None] * CAT_EU[None] - lt[:, None] * CAT_ES[None]
            C = C - np.floor(C)
            ab = np.stack([up + dn, rt + lt], axis=1)
            for c, sz in zip(C, ab):
                if not np.all(np.isfinite(sz)):
                    continue
                if any(np.allclose(sz, s2, atol=1e-9) and
                       np.max(np.abs((c - c2) - np.round(c - c2))) < 1e-9
                       for c2, s2 in zip(corners, sizes)):
                    continue
                corners.append(c)
                sizes.append(sz)
                area += sz[0] * sz[1]
            if abs(area - 1.0) < 1e-9:
                break
        if abs(area - 1.0) > 1e-6:
            raise RefinementExplosion(f"rectangles cover area {area:.6f} ≠ 1")
        corners = np.array(corners)
        order = np.lexsort((corners[:, 1], corners[:, 0]))
        return cls(corners[order], np.array(sizes)[order], s_range, u_range)

    @property
    def size(self):
        return len(self.corners)

    def diameters(self):
        return np.hypot(self.sizes[:, 0], self.sizes[:, 1])

    def _coords(self, i, X):
        """Box coordinates of X relative to rectangle i, for all nearby lifts."""
        X = np.atleast_2d(X)[:, :2]
        D = X - self.corners[i][None]
        D = D - np.floor(D)
        out = []
        for k0 in range(-2, 1):
            for k1 in range(-2, 1):
                W = D + np.array([k0, k1])
                out.append(np.stack([W @ CAT_EU, W @ CAT_ES], axis=1))
        return np.stack(out, axis=1)

    def _box_margin(self, i, X):
        """Signed distance to the edges of rectangle i (best lift)."""
        c = self._coords(i, X)
        a, b = self.sizes[i]
        m = np.minimum.reduce([c[..., 0], a - c[..., 0], c[..., 1], b - c[..., 1]])
        return m.max(axis=1)

    def member(self, i, X, margin=0.0):
        return self._box_margin(i, X) > margin

    def classify(self, X, margin=None):
        X = np.atleast_2d(X)
        margin = 1e-4 * self.beta if margin is None else margin
        if self.base is None:
            up, dn, rt, lt = _four_hits(X[:, :2], self.s_lo, self.s_hi, self.u_lo, self.u_hi,
                                        self.kmax)
            C = X[:, :2] - dn[:, None] * CAT_EU[None] - lt[:, None] * CAT_ES[None]
            C = C - np.floor(C)
            ids = np.full(X.shape[0], -1)
            for i, (c, sz) in enumerate(zip(self.corners, self.sizes)):
                dc = C - c[None]
                dc = np.abs(dc - np.round(dc)).max(axis=1)
                hit = (dc < 1e-8) & (np.abs(up + dn - sz[0]) < 1e-8) & \
                      (np.abs(rt + lt - sz[1]) < 1e-8)
                ids[hit] = i
            ids[np.minimum.reduce([up, dn, rt, lt]) <= margin] = -1
            return ids
        r = self.level
        cols = []
        Y = X[:, :2].copy()
        for _ in range(r):
            Y = Y @ CAT_AINV.T
            Y = Y - np.floor(Y)
        for t in range(2 * r + 1):
            cols.append(self.base.classify(np.column_stack([Y, np.zeros(len(Y))]), 0.0))
            Y = Y @ CAT_A.T
            Y = Y - np.floor(Y)
        W = np.stack(cols, axis=1)
        ids = np.array([self._lookup.get(tuple(w), -1) if np.all(w >= 0) else -1 for w in W])
        for i in np.unique(ids[ids >= 0]):
            sel = np.flatnonzero(ids == i)
            near = self._box_margin(i, X[sel]) <= margin
            ids[sel[near]] = -1
        return ids

    def sample_interior(self, i, m, rng, margin=None):
        margin = 1e-4 * self.beta if margin is None else margin
        a, b = self.sizes[i]
        u = rng.uniform(margin, a - margin, m)
        s = rng.uniform(margin, b - margin, m)
        P = self.corners[i][None] + u[:, None] * CAT_EU[None] + s[:, None] * CAT_ES[None]
        return np.column_stack([P - np.floor(P), np.zeros(m)])

    def _fiber(self, i, x, m, axis):
        c = self._coords(i, x[None])[0]
        a, b = self.sizes[i]
        inside = np.flatnonzero((c[:, 0] >= 0) & (c[:, 0] <= a) & (c[:, 1] >= 0) & (c[:, 1] <= b))
        if inside.size == 0:
            return np.empty((0, 3))
        pos = c[inside[0], axis]
        length = (a, b)[axis]
        e = (CAT_EU, CAT_ES)[axis]
        t = np.linspace(-pos, length - pos, m + 2)[1:-1]
        P = x[None, :2] + t[:, None] * e[None]
        return np.column_stack([P - np.floor(P), np.zeros(m)])

    def u_fiber(self, i, x, m):
        """Samples of Wᵘ(x, Rᵢ): the Eᵘ segment through x across the box."""
        return self._fiber(i, x, m, 0)

    def s_fiber(self, i, x, m):
        return self._fiber(i, x, m, 1)

    def boundary_samples(self, m, rng):
        s = rng.uniform(self.s_lo, self.s_hi, m)
        u = rng.uniform(self.u_lo, self.u_hi, m)
        S = s[:, None] * CAT_ES[None]
        U = u[:, None] * CAT_EU[None]
        z = np.zeros((m, 1))
        return np.hstack([S - np.floor(S), z]), np.hstack([U - np.floor(U), z])

    def on_stable_boundary(self, X, tol=1e-9):
        return self._on_segment(X, CAT_ES, CAT_EU, self.s_lo, self.s_hi, tol)

    def on_unstable_boundary(self, X, tol=1e-9):
        return self._on_segment(X, CAT_EU, CAT_ES, self.u_lo, self.u_hi, tol)

    def _on_segment(self, X, e, n, lo, hi, tol):
        X = np.atleast_2d(X)[:, :2]
        ok = np.zeros(X.shape[0], dtype=bool)
        r = np.arange(-self.kmax, self.kmax + 1)
        K = np.stack(np.meshgrid(r, r, indexing="ij"), axis=-1).reshape(-1, 2)
        for k in K:
            W = X - k
            ok |= (np.abs(W @ n) < tol) & (W @ e >= lo - tol) & (W @ e <= hi + tol)
        return ok

    def refine(self):
        """Next level: cylinders over one more step in each time direction."""
        base = self if self.base is None else self.base
        r = self.level + 1
        A = transition_matrix_exact(base).A
        words = [[i] for i in range(base.size)]
        for _ in range(2 * r):
            words = [w + [j] for w in words for j in np.flatnonzero(A[w[-1]])]
        corners, sizes, kept = [], [], []
        for w in words:
            try:
                c, a, b = base._box(w, r)
            except EmptyIntersection:
                continue
            corners.append(c - np.floor(c))
            sizes.append((a, b))
            kept.append(w)
        if len(kept) > REFINEMENT_BUDGET:
            raise RefinementExplosion(f"{len(kept)} rectangles exceed the budget")
        L = CAT_LAMBDA ** r
        return CatPartition(corners, sizes, (-base.s_lo * L, base.s_hi * L),
                            (-base.u_lo * L, base.u_hi * L), base=base,
                            words=[tuple(int(v) for v in w) for w in kept])

    def exact_transitions(self):
        """A_ij = 1 iff f(int Rᵢ) ∩ int Rⱼ ≠ ∅, from box overlaps in the lift.

        Also returns the largest number of overlap components of one pair.
        """
        m = self.size
        comps = np.zeros((m, m), dtype=np.int16)
        L = CAT_LAMBDA
        kr = int(np.ceil(L * self.sizes[:, 0].max() + self.sizes[:, 0].max())) + 2
        ks = np.array(list(itertools.product(range(-kr, kr + 1), repeat=2)), dtype=float)
        a, b = self.sizes[:, 0][None], self.sizes[:, 1][None]
        for i in range(m):
            ci = CAT_A @ self.corners[i]
            ai, bi = L * self.sizes[i, 0], self.sizes[i, 1] / L
            D = self.corners[None, :, :] + ks[:, None, :] - ci[None, None, :]
            du = D @ CAT_EU
            ds = D @ CAT_ES
            ou = np.minimum(ai, du + a) - np.maximum(0.0, du)
            os_ = np.minimum(bi, ds + b) - np.maximum(0.0, ds)
            comps[i] = ((ou > 1e-12) & (os_ > 1e-12)).sum(axis=0)
        return (comps > 0).astype(np.int8), int(comps.max())

    def _sweep(self, word, forward):
        """Box of the points whose orbit follows ``word``, at the time of its last symbol.

        Forward sweeps map by A (u-extent grows, s shrinks); backward sweeps
        take the word in reverse and map by A⁻¹.
        """
        L = CAT_LAMBDA
        M, gu, gs = (CAT_A, L, 1.0 / L) if forward else (CAT_AINV, 1.0 / L, L)
        base = self.corners[word[0]].copy()
        a, b = self.sizes[word[0]]
        for t in range(1, len(word)):
            base = M @ base
            base = base - np.floor(base)
            a, b = gu * a, gs * b
            j = word[t]
            D = self.corners[j] - base
            kr = int(np.ceil(a + b + self.sizes[j].sum())) + 2
            c = _overlap(D, a, b, self.sizes[j], kr)
            if c is None:
                raise EmptyIntersection(f"no intersection at symbol {t}")
            lu, hu, ls, hs = c
            base = base + lu * CAT_EU + ls * CAT_ES
            base = base - np.floor(base)
            a, b = hu - lu, hs - ls
        return base, a, b

    def _box(self, word, center_index):
        """Corner and extents of ⋂ f^{−j} R_{a_j} at the time of the center symbol."""
        word = [int(v) for v in word]
        c = center_index
        p0, a0, b0 = self._sweep(word[:c + 1], True)
        p1, a1, b1 = self._sweep(word[c:][::-1], False)
        kr = int(np.ceil(a0 + b0 + a1 + b1)) + 2
        hit = _overlap(p1 - p0, a0, b0, (a1, b1), kr)
        if hit is None:
            raise EmptyIntersection("past and future boxes do not meet")
        lu, hu, ls, hs = hit
        corner = p0 + lu * CAT_EU + ls * CAT_ES
        return corner - np.floor(corner), hu - lu, hs - ls

    def code(self, word, center_index):
        """Center and diameter of ⋂ f^{−j} R_{a_j}, by box intersection in the lift."""
        c, a, b = self._box(word, center_index)
        P = c + 0.5 * a * CAT_EU + 0.5 * b * CAT_ES
        P = P - np.floor(P)
        return np.array([P[0], P[1], 0.0]), float(np.hypot(a, b))


def _overlap(D, a, b, size_j, kr):
    """Intersection of [0,a]×[0,b] with the box of extents size_j at offset D + k, k ∈ ℤ².

    Coordinates are (Eᵘ, Eˢ). Returns (lo_u, hi_u, lo_s, hi_s) for the unique
    overlapping lift, None if none overlaps; several lifts mean a defect.
    """
    r = np.arange(-kr, kr + 1, dtype=float)
    K = np.stack(np.meshgrid(r, r, indexing="ij"), axis=-1).reshape(-1, 2)
    Dk = np.asarray(D)[None] + K
    du, ds = Dk @ CAT_EU, Dk @ CAT_ES
    lu, hu = np.maximum(0.0, du), np.minimum(a, du + size_j[0])
    ls, hs = np.maximum(0.0, ds), np.minimum(b, ds + size_j[1])
    hit = np.flatnonzero((hu - lu > 1e-15) & (hs - ls > 1e-15))
    if hit.size == 0:
        return None
    if hit.size > 1:
        raise EmptyIntersection("disconnected cylinder (partition defect)")
    h = hit[0]
    return lu[h], hu[h], ls[h], hs[h]


def _four_hits(P, lo_s, hi_s, lo_u, hi_u, kmax):
    up, _ = _ray_hits(P, CAT_EU, CAT_ES, lo_s, hi_s, kmax)
    dn, _ = _ray_hits(P, -CAT_EU, CAT_ES, lo_s, hi_s, kmax)
    rt, _ = _ray_hits(P, CAT_ES, CAT_EU, lo_u, hi_u, kmax)
    lt, _ = _ray_hits(P, -CAT_ES, CAT_EU, lo_u, hi_u, kmax)
    return up, dn, rt, lt


def cat_segment_partition(s_seed=(0.875, 0.875), u_seed=(0.875, 0.875)) -> CatPartition:
    """Cat partition whose S and U segment ends terminate on the other segment.

    Seeds give initial lengths (minus side, plus side); a zero seed keeps
    that half-segment empty. The default seeds give 7 rectangles whose
    images meet each rectangle in at most one box.
    """
    sm, sp = s_seed
    um, up = u_seed
    kmax = 8

    def extend(length, sign, e, other, lo, hi):
        if length == 0.0:
            return 0.0
        t, _ = _ray_hits((sign * length * e)[None], sign * e, other, lo, hi, kmax)
        return length + t[0]

    sm = extend(sm, -1.0, CAT_ES, CAT_EU, -um, up)
    sp = extend(sp, 1.0, CAT_ES, CAT_EU, -um, up)
    um = extend(um, -1.0, CAT_EU, CAT_ES, -sm, sp)
    up = extend(up, 1.0, CAT_EU, CAT_ES, -sm, sp)
    return CatPartition.from_segments((sm, sp), (um, up))


class BoxGridPartition(MarkovPartition):
    """Axis-aligned k×k boxes on the torus (a non-Markov negative control)."""

    kind = "grid-boxes"

    def __init__(self, k: int):
        self.k = k
        self.beta = float(np.sqrt(2.0) / k)

    @property
    def size(self):
        return self.k * self.k

    def diameters(self):
        return np.full(self.size, self.beta)

    def classify(self, X, margin=None):
        X = np.atleast_2d(X)[:, :2]
        margin = 1e-4 * self.beta if margin is None else margin
        g = X * self.k
        cell = np.floor(g).astype(int) % self.k
        frac = g - np.floor(g)
        ids = cell[:, 0] * self.k + cell[:, 1]
        near = np.any((frac < margin * self.k) | (frac > 1 - margin * self.k), axis=1)
        ids[near] = -1
        return ids

    def member(self, i, X, margin=0.0):
        return self.classify(X, margin) == i

    def sample_interior(self, i, m, rng, margin=None):
        a, b = divmod(i, self.k)
        P = (np.column_stack([a + rng.random(m), b + rng.random(m)])) / self.k
        return np.column_stack([P, np.zeros(m)])

    def _fiber(self, i, x, m, e):
        t = np.linspace(-2.0 / self.k, 2.0 / self.k, 8 * m)
        P = x[None, :2] + t[:, None] * e[None]
        P = np.column_stack([P - np.floor(P), np.zeros(len(t))])
        ids = self.classify(P, 0.0)
        # component of the segment through t = 0
        zero = np.argmin(np.abs(t))
        same = ids == i
        lo = zero
        while lo > 0 and same[lo - 1]:
            lo -= 1
        hi = zero
        while hi < len(t) - 1 and same[hi + 1]:
            hi += 1
        return P[lo:hi + 1]

    def u_fiber(self, i, x, m):
        return self._fiber(i, x, m, CAT_EU)

    def s_fiber(self, i, x, m):
        return self._fiber(i, x, m, CAT_ES)

    def boundary_samples(self, m, rng):
        t = rng.random(m)
        j = rng.integers(0, self.k, m) / self.k
        S = np.column_stack([j, t, np.zeros(m)])
        U = np.column_stack([t, j, np.zeros(m)])
        return S, U

    def on_stable_boundary(self, X, tol=1e-9):
        X = np.atleast_2d(X)[:, :2] * self.k
        return np.abs(X[:, 0] - np.round(X[:, 0])) < tol * self.k

    def on_unstable_boundary(self, X, tol=1e-9):
        X = np.atleast_2d(X)[:, :2] * self.k
        return np.abs(X[:, 1] - np.round(X[:, 1])) < tol * self.k


# ---- solenoid family: two-sided binary cylinders


class SkewCoding:
    """Symbolic coordinates of the solenoid-family attractor.

    Forward digits are the itinerary of θ under g relative to [0,½), [½,1);
    backward digits select the inverse branch at each past step.
    """

    def __init__(self, sys: SystemSpec):
        self.sys = sys
        self.lam = float(sys.metadata["lambda_c"])
        self.warp = float(sys.metadata["warp"])
        self.radius = 0.5 / (1.0 - self.lam)

    def branch(self, th, b):
        th = np.asarray(th, dtype=float)
        if self.warp == 0.0:
            return (th + b) / 2.0
        pre = _skew_g_preimages(th, self.warp)
        return np.where(np.asarray(b) == 1, pre[..., 1], pre[..., 0])

    def theta_interval(self, digits):
        """Endpoints of the θ-cylinder for forward digits d₀…d_{M−1}."""
        digits = np.atleast_2d(digits)
        lo = np.zeros(digits.shape[0])
        hi = np.ones(digits.shape[0])
        for j in range(digits.shape[1] - 1, -1, -1):
            lo = self.branch(lo, digits[:, j])
            hi = self.branch(hi, digits[:, j])
        return lo, hi

    def forward_digits(self, th, M):
        th = np.asarray(th, dtype=float).copy()
        out = np.empty(th.shape + (M,), dtype=np.int8)
        for j in range(M):
            out[..., j] = th >= 0.5
            g = _skew_g(th, self.warp)
            th = g - np.floor(g)
        return out

    def forward_margin(self, th, M):
        th = np.asarray(th, dtype=float).copy()
        worst = np.full(th.shape, np.inf)
        scale = 1.0
        for j in range(M):
            d = np.minimum(np.minimum(th, 1.0 - th), np.abs(th - 0.5))
            worst = np.minimum(worst, d / scale)
            scale *= 2.0 + abs(self.warp)
            g = _skew_g(th, self.warp)
            th = g - np.floor(g)
        return worst

    def backward_digits(self, X, K):
        X = np.atleast_2d(X)
        if K == 0:
            return np.empty((X.shape[0], 0), dtype=np.int8), np.full(X.shape[0], np.inf)
        B = self.sys.backward_orbit(X, K)
        th = B[:, 1:, 0]
        digits = (th >= 0.5).astype(np.int8)
        d = np.minimum(np.minimum(th, 1.0 - th), np.abs(th - 0.5))
        scale = self.lam ** np.arange(1, K + 1)
        return digits, np.min(d * np.maximum(scale, 1e-300)[None] / self.lam, axis=1)

    def point(self, th, back_digits, tail_z=None):
        """Point with angle θ, given past branch digits; z from the fiber series."""
        th = np.atleast_1d(np.asarray(th, dtype=float))
        back_digits = np.atleast_2d(back_digits)
        K = back_digits.shape[1]
        thetas = [th]
        for i in range(K):
            thetas.append(self.branch(thetas[-1], back_digits[:, i]))
        z = np.zeros((th.size, 2)) if tail_z is None else np.asarray(tail_z, float)
        for i in range(K, 0, -1):
            t = thetas[i]
            z = self.lam * z + 0.5 * np.stack([np.cos(2 * np.pi * t), np.sin(2 * np.pi * t)],
                                              axis=1)
        return np.column_stack([th, z])


class CylinderPartition(MarkovPartition):
    """Rectangles R(b₋K … b_{k−1}) of points with that two-sided binary itinerary."""

    kind = "skew-cylinders"

    def __init__(self, sys: SystemSpec, K: int, k: int):
        if k < 1:
            raise ValueError("at least one forward digit is required")
        self.sys = sys
        self.K, self.k = K, k
        self.coding = SkewCoding(sys)
        if self.size > REFINEMENT_BUDGET:
            raise RefinementExplosion(f"{self.size} rectangles exceed the budget "
                                      f"{REFINEMENT_BUDGET}")
        self.beta = float(np.max(self.diameters()))

    @property
    def size(self):
        return 1 << (self.K + self.k)

    def bits(self, i):
        n = self.K + self.k
        return np.array([(i >> (n - 1 - t)) & 1 for t in range(n)], dtype=np.int8)

    def _ids_from_digits(self, back, fwd):
        """back[:, i] is b₋₍ᵢ₊₁₎, fwd[:, j] is b_j."""
        bits = np.concatenate([back[:, ::-1], fwd], axis=1).astype(np.int64)
        n = bits.shape[1]
        return bits @ (1 << np.arange(n - 1, -1, -1))

    def diameters(self, m=64, seed=0):
        """Sampled diameters of each rectangle's fiber-product hull."""
        rng = np.random.default_rng(seed)
        out = np.empty(self.size)
        for i in range(self.size):
            P = self.sample_interior(i, m, rng, margin=0.0, corners=True)
            D = np.linalg.norm(self.sys.displacement(P[:, None], P[None]), axis=2)
            out[i] = D.max()
        return out

    def classify(self, X, margin=None):
        X = np.atleast_2d(X)
        margin = 1e-4 * getattr(self, "beta", 1.0) if margin is None else margin
        fwd = self.coding.forward_digits(X[:, 0], self.k)
        back, bmarg = self.coding.backward_digits(X, self.K)
        ids = self._ids_from_digits(back, fwd)
        fm = self.coding.forward_margin(X[:, 0], self.k)
        ids[(fm <= margin) | (bmarg <= margin)] = -1
        return ids

    def member(self, i, X, margin=0.0):
        return self.classify(X, margin) == i

    def sample_interior(self, i, m, rng, margin=None, corners=False):
        bits = self.bits(i)
        back = bits[:self.K][::-1]
        fwd = bits[self.K:]
        lo, hi = self.coding.theta_interval(fwd[None])
        th = lo[0] + (hi[0] - lo[0]) * rng.random(m)
        if corners:
            th[:2] = [lo[0], hi[0] - 1e-15]
        deep = 40
        extra = rng.integers(0, 2, size=(m, deep))
        D = np.concatenate([np.broadcast_to(back, (m, self.K)), extra], axis=1)
        return self.coding.point(th, D)

    def u_fiber(self, i, x, m):
        """Wᵘ(x, R): x's strand over the θ-cylinder of R."""
        bits = self.bits(i)
        lo, hi = self.coding.theta_interval(bits[self.K:][None])
        th = np.linspace(lo[0], hi[0], m + 2)[1:-1]
        back, _ = self.coding.backward_digits(x[None], 40)
        return self.coding.point(th, np.broadcast_to(back[0], (m, back.shape[1])))

    def s_fiber(self, i, x, m, rng=None):
        """Wˢ(x, R): attractor points over θ(x) with R's past digits."""
        rng = np.random.default_rng(0) if rng is None else rng
        bits = self.bits(i)
        back = bits[:self.K][::-1]
        extra = rng.integers(0, 2, size=(m, 40))
        D = np.concatenate([np.broadcast_to(back, (m, self.K)), extra], axis=1)
        return self.coding.point(np.full(m, x[0]), D)

    def u_fibers(self, ids, X, m):
        """Batched u_fiber: (N, m, 3) strand samples."""
        ids = np.asarray(ids)
        fwd = np.stack([self.bits(i)[self.K:] for i in ids])
        lo, hi = self.coding.theta_interval(fwd)
        t = np.linspace(0.0, 1.0, m + 2)[1:-1]
        th = lo[:, None] + (hi - lo)[:, None] * t[None]
        back, _ = self.coding.backward_digits(X, 40)
        D = np.repeat(back, m, axis=0)
        return self.coding.point(th.ravel(), D).reshape(len(ids), m, -1)

    def s_fibers(self, ids, X, m, rng=None):
        rng = np.random.default_rng(0) if rng is None else rng
        ids = np.asarray(ids)
        back = np.stack([self.bits(i)[:self.K][::-1] for i in ids])
        N = len(ids)
        D = np.concatenate([np.repeat(back, m, axis=0),
                            rng.integers(0, 2, size=(N * m, 40))], axis=1)
        th = np.repeat(np.atleast_2d(X)[:, 0], m)
        return self.coding.point(th, D).reshape(N, m, -1)

    def boundary_samples(self, m, rng):
        """Stable boundary: fibers over θ-cut points.

        The unstable boundary is empty. Past-digit cuts sit over θ₀ = 0,
        which is already a stable cut, and the transversal Cantor set makes
        the cylinders clopen across strands.
        """
        cuts = np.unique(np.concatenate([self.coding.theta_interval(
            self.bits(i)[self.K:][None])[0] for i in range(self.size)]))
        th = rng.choice(cuts, m)
        S = self.coding.point(th, rng.integers(0, 2, size=(m, 40)))
        return S, np.empty((0, 3))

    def on_stable_boundary(self, X, tol=1e-9):
        return self.coding.forward_margin(np.atleast_2d(X)[:, 0], self.k) < tol

    def on_unstable_boundary(self, X, tol=1e-9):
        return np.zeros(np.atleast_2d(X).shape[0], dtype=bool)

    def exact_transitions(self):
        n = self.K + self.k
        mask = (1 << (n - 1)) - 1
        ids = np.arange(self.size)
        A = ((ids[None, :] >> 1) == (ids[:, None] & mask)).astype(np.int8)
        return A, 1

    def code_batch(self, words, center_index):
        return _cylinder_code_batch(self, words, center_index)

    def code(self, word, center_index):
        """Center and diameter certificate of ⋂ f^{−j} R_{a_j}."""
        word = list(word)
        n = self.K + self.k
        # binary digit at absolute time t from the rectangle used at position p
        digits = {}
        for p, a in enumerate(word):
            bits = self.bits(a)
            for q in range(n):
                t = (p - center_index) + (q - self.K)
                if t in digits and digits[t] != bits[q]:
                    raise InadmissibleWord(f"symbols disagree at time {t}")
                digits[t] = int(bits[q])
        fwd = [digits[t] for t in range(0, max(digits) + 1)]
        back = [digits[t] for t in range(-1, min(digits) - 1, -1)]
        lo, hi = self.coding.theta_interval(np.array(fwd)[None])
        mid = 0.5 * (lo + hi)
        P = self.coding.point(mid, np.array(back)[None])[0]
        # certificate: θ extent, strand spread over the interval, unknown deep past
        ends = self.coding.point(np.array([lo[0], hi[0]]),
                                 np.broadcast_to(np.array(back), (2, len(back))))
        spread = float(np.max(np.linalg.norm(self.sys.displacement(P[None], ends), axis=1)))
        tail = 2.0 * self.coding.radius * self.coding.lam ** len(back)
        return P, float(np.hypot(hi[0] - lo[0], 0.0) + 2 * spread + tail)


def _cylinder_code_batch(part, words, center_index):
    words = np.asarray(words, dtype=np.int64)
    N, m = words.shape
    n = part.K + part.k
    first = np.stack([part.bits(int(a)) for a in words[:, 0]]) if N else np.empty((0, n))
    bits = np.concatenate([first, words[:, 1:] & 1], axis=1).astype(np.int8)
    split = center_index + part.K
    fwd, back = bits[:, split:], bits[:, :split][:, ::-1]
    lo, hi = part.coding.theta_interval(fwd)
    P = part.coding.point(0.5 * (lo + hi), back)
    spread = np.zeros(N)
    for end in (lo, hi):
        E = part.coding.point(end, back)
        spread = np.maximum(spread, np.linalg.norm(part.sys.displacement(P, E), axis=1))
    tail = 2.0 * part.coding.radius * part.coding.lam ** back.shape[1]
    return P, (hi - lo) + 2.0 * spread + tail


def _solenoid_depths(sys, beta):
    """Smallest (K, k) whose cylinder diameters fall below β."""
    for total in range(1, 13):
        for k in range(1, total + 1):
            K = total - k
            try:
                part = CylinderPartition(sys, K, k)
            except RefinementExplosion:
                raise
            if part.beta < beta:
                return part
    raise RefinementExplosion(f"no cylinder partition with diameter < {beta} within budget")


def build_markov_partition(sys: SystemSpec, gamma: float, alpha: float, beta: float,
                           seed: int = 0, trials: int = 8) -> MarkovPartition:
    """Markov partition of diameter < β for the cat and solenoid-family built-ins.

    The smallness chain γ < α/2, α-pseudo-orbits β/2-shadowed, β below the
    expansivity scale is checked before the geometric construction.
    """
    if gamma >= alpha / 2:
        raise SmallnessChainViolated(f"γ = {gamma} must be < α/2 = {alpha / 2}")
    eps_exp = float(sys.metadata.get("expansivity_scale", 0.25))
    if beta >= eps_exp:
        raise SmallnessChainViolated(f"β = {beta} must be < expansivity scale {eps_exp}")
    rng = np.random.default_rng(seed)
    from .systems import attractor_sample
    X = attractor_sample(sys, trials, 200, seed=seed)
    for x in X:
        orb = [x]
        for _ in range(49):
            y = np.asarray(sys.map_eval(orb[-1]))
            noise = rng.normal(size=sys.dim)
            if sys.name == "fat-cat":
                noise[2] = 0.0
            orb.append(sys.wrap(y + 0.5 * alpha * noise / np.linalg.norm(noise)))
        try:
            shadow(sys, PseudoOrbit(np.array(orb), alpha), beta / 2)
        except NewtonDiverged as e:
            raise SmallnessChainViolated(f"α = {alpha} pseudo-orbits not β/2-shadowed: {e}")
    if sys.name == "fat-cat":
        part = cat_segment_partition()
        while part.beta >= beta:
            part = part.refine()
            if part.size > REFINEMENT_BUDGET:
                raise RefinementExplosion(f"{part.size} rectangles exceed the budget")
    elif "lambda_c" in sys.metadata:
        part = _solenoid_depths(sys, beta)
    else:
        raise NotImplementedError(f"no partition construction for {sys.name}")
    part.gamma, part.alpha = gamma, alpha
    return part


# -------------------------------------------------------------- checks


def transition_matrix(sys: SystemSpec, partition: MarkovPartition, samples: int = 256,
                      seed: int = 0) -> TransitionMatrix:
    """A_ij = 1 iff a sampled interior point of Rᵢ maps into int Rⱼ."""
    rng = np.random.default_rng(seed)
    m = partition.size
    A = np.zeros((m, m), dtype=np.int8)
    for i in range(m):
        P = partition.sample_interior(i, samples, rng)
        ids = partition.classify(np.asarray(sys.map_eval(P)))
        ids = ids[ids >= 0]
        A[i, np.unique(ids)] = 1
    return _with_flags(A)


def transition_matrix_exact(partition) -> TransitionMatrix:
    A, _ = partition.exact_transitions()
    return _with_flags(A)


def _with_flags(A):
    dec = spectral_decomposition(A)
    irreducible = len(dec["components"]) == 1 and not dec["wandering"]
    aperiodic = irreducible and dec["components"][0]["period"] == 1
    return TransitionMatrix(np.asarray(A, dtype=np.int8), irreducible, aperiodic)


def verify_markov(sys: SystemSpec, partition: MarkovPartition, n_samples: int = 10000,
                  fiber_points: int = 16, seed: int = 0, tol: float = 1e-9) -> dict:
    """Sampled disjointness, fiber inclusions and boundary invariance."""
    rng = np.random.default_rng(seed)
    from .systems import attractor_sample
    if sys.name == "fat-cat":
        X = np.column_stack([rng.random((n_samples, 2)), np.zeros(n_samples)])
    else:
        X = attractor_sample(sys, n_samples, 100, seed=seed)
    margin = 1e-4 * partition.beta if np.isfinite(partition.beta) else 1e-6
    ids = partition.classify(X, margin)
    # (a) interiors: no sample lies in two interiors
    overlap = []
    if hasattr(partition, "corners"):
        sub = X[:min(n_samples, 2000)]
        cnt = np.zeros(sub.shape[0], dtype=int)
        for i in range(partition.size):
            cnt += partition.member(i, sub, margin)
        overlap = np.flatnonzero(cnt > 1).tolist()
    uncovered = int(np.sum(ids < 0))
    # (b) inclusions at interior samples
    fx = np.asarray(sys.map_eval(X))
    jds = partition.classify(fx, margin)
    good = np.flatnonzero((ids >= 0) & (jds >= 0))
    u_viol, s_viol = [], []
    inv = sys.known_inverse
    if hasattr(partition, "u_fibers"):
        u_viol, s_viol = _batched_inclusions(sys, partition, X, fx, ids, jds, good,
                                             fiber_points, tol)
        good_loop = []
    else:
        good_loop = good
    for idx in good_loop:
        i, j = int(ids[idx]), int(jds[idx])
        Wu = partition.u_fiber(j, fx[idx], fiber_points)
        if Wu.shape[0]:
            pre = np.asarray(inv(Wu)) if inv is not None else None
            if sys.name != "fat-cat":
                # preimages along the strand of x
                B = sys.backward_orbit(Wu, 1)[:, 1]
                pre = B
            ok = partition.member(i, pre, -tol) | _near_member(partition, i, pre, tol)
            if not np.all(ok):
                u_viol.append(int(idx))
        Ws = partition.s_fiber(i, X[idx], fiber_points)
        if Ws.shape[0]:
            img = np.asarray(sys.map_eval(Ws))
            ok = partition.member(j, img, -tol) | _near_member(partition, j, img, tol)
            if not np.all(ok):
                s_viol.append(int(idx))
    # (c) boundary invariance: f(∂ˢ) ⊂ ∂ˢ and f⁻¹(∂ᵘ) ⊂ ∂ᵘ
    m_b = min(n_samples, 2000)
    Sb, Ub = partition.boundary_samples(m_b, rng)
    fs = np.asarray(sys.map_eval(Sb))
    bs_viol = np.flatnonzero(~partition.on_stable_boundary(fs, 1e-8)).tolist()
    if Ub.shape[0] == 0:
        fu = Ub
    elif inv is not None and sys.name == "fat-cat":
        fu = np.asarray(inv(Ub))
    else:
        fu = sys.backward_orbit(Ub, 1)[:, 1]
    bu_viol = np.flatnonzero(~partition.on_unstable_boundary(fu, 1e-8)).tolist()
    total = len(overlap) + len(u_viol) + len(s_viol) + len(bs_viol) + len(bu_viol)
    return {
        "samples": int(n_samples),
        "interior_samples": int(good.size),
        "boundary_excluded": uncovered,
        "overlap_violations": overlap[:20],
        "unstable_inclusion_violations": u_viol[:20],
        "stable_inclusion_violations": s_viol[:20],
        "stable_boundary_violations": bs_viol[:20],
        "unstable_boundary_violations": bu_viol[:20],
        "counts": {"overlap": len(overlap), "unstable_inclusion": len(u_viol),
                   "stable_inclusion": len(s_viol), "stable_boundary": len(bs_viol),
                   "unstable_boundary": len(bu_viol)},
        "violations": int(total),
        "pass": total == 0,
    }


def _batched_inclusions(sys, partition, X, fx, ids, jds, good, m, tol):
    """Fiber inclusion checks for partitions whose classifier is exact on closures."""
    u_viol, s_viol = [], []
    for a in range(0, good.size, 1024):
        sel = good[a:a + 1024]
        i, j = ids[sel], jds[sel]
        Wu = partition.u_fibers(j, fx[sel], m)
        pre = sys.backward_orbit(Wu.reshape(-1, Wu.shape[-1]), 1)[:, 1]
        ok = (partition.classify(pre, -tol).reshape(len(sel), m) == i[:, None]).all(axis=1)
        u_viol.extend(sel[~ok].tolist())
        Ws = partition.s_fibers(i, X[sel], m)
        img = np.asarray(sys.map_eval(Ws.reshape(-1, Ws.shape[-1])))
        ok = (partition.classify(img, -tol).reshape(len(sel), m) == j[:, None]).all(axis=1)
        s_viol.extend(sel[~ok].tolist())
    return [int(v) for v in u_viol], [int(v) for v in s_viol]


def _near_member(partition, i, X, tol):
    """Closure membership: inside Rᵢ after a tol-sized nudge toward its interior."""
    if hasattr(partition, "corners"):
        c = partition._coords(i, X)
        a, b = partition.sizes[i]
        ok = (c[..., 0] > -tol) & (c[..., 0] < a + tol) & (c[..., 1] > -tol) & (c[..., 1] < b + tol)
        return np.any(ok, axis=1)
    if isinstance(partition, CylinderPartition):
        ids = partition.classify(X, 0.0)
        return ids == i
    return np.zeros(np.atleast_2d(X).shape[0], dtype=bool)


def itinerary(sys: SystemSpec, partition: MarkovPartition, x, n: int, margin=None):
    """Symbols a₋ₙ…aₙ of x (−1 where the orbit touches a boundary)."""
    x = np.asarray(x, dtype=float)
    B = _backward_points(sys, x[None], n)[0][::-1]
    F = [x]
    for _ in range(n):
        F.append(np.asarray(sys.map_eval(F[-1])))
    pts = np.vstack([B[:-1], np.array(F)])
    return partition.classify(pts, margin)


def coding_map(sys: SystemSpec, partition: MarkovPartition, word, A: Optional[np.ndarray] = None,
               center_index: Optional[int] = None, check_semiconjugacy: bool = True):
    """π(a₋ₙ…aₙ) and its diameter certificate."""
    word = [int(a) for a in word]
    if any(a < 0 or a >= partition.size for a in word):
        raise InadmissibleWord("symbol outside the alphabet")
    if A is None:
        A = transition_matrix_exact(partition).A
    for a, b in zip(word[:-1], word[1:]):
        if not A[a, b]:
            raise InadmissibleWord(f"transition {a}→{b} not allowed")
    n = (len(word) - 1) // 2 if center_index is None else center_index
    P, diam = partition.code(word, n)
    semi = None
    if check_semiconjugacy and len(word) >= 3 and n + 1 < len(word):
        Q, _ = partition.code(word[1:], n)
        semi = float(sys.distance(sys.map_eval(P), Q))
    return P, diam, semi


# ----------------------------------------------------- spectral decomposition


def spectral_decomposition(A) -> dict:
    """Transitive components, their periods, and cyclic classes of a 0/1 matrix."""
    A = np.asarray(A) != 0
    m = A.shape[0]
    ncomp, labels = connected_components(sparse.csr_matrix(A), directed=True,
                                         connection="strong")
    comps, wandering = [], []
    for c in range(ncomp):
        states = np.flatnonzero(labels == c)
        sub = A[np.ix_(states, states)]
        if states.size == 1 and not sub[0, 0]:
            wandering.append(int(states[0]))
            continue
        # BFS levels; period = gcd of level differences across edges
        level = -np.ones(states.size, dtype=int)
        level[0] = 0
        queue = [0]
        g = 0
        while queue:
            u = queue.pop(0)
            for v in np.flatnonzero(sub[u]):
                if level[v] < 0:
                    level[v] = level[u] + 1
                    queue.append(v)
                else:
                    g = gcd(g, abs(level[u] + 1 - level[v]))
        g = max(g, 1)
        classes = [states[(level % g) == r].tolist() for r in range(g)]
        comps.append({"states": states.tolist(), "period": int(g), "cyclic_classes": classes})
    return {"components": comps, "wandering": wandering, "size": int(m)}
