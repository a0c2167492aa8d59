"""Unstable Jacobians, the SRB conditional density and empirical SRB measures."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from .cocycle import kato_gap, orthonormal
from .errors import (BackwardOrbitFailure, InsufficientSupport, NotOnPatch, OrbitEscapesBasin,
                     PlaneMissesBasin, RankDeficient, SrbkitError)
from .graph_transform import GraphPatch, unstable_manifold
from .systems import (SystemSpec, advance_batch, inverse_on_attractor, seed_rng_state)

DISC_NODES = 257
SETTLE = 40


# ------------------------------------------------------------ observables


@dataclass(frozen=True)
class TrigObservable:
    """φ(x) = cos(2π K·x + phase); Birkhoff sums use the compiled kernel."""

    K: tuple
    phase: float = 0.0
    name: str = ""

    def __call__(self, X):
        X = np.atleast_2d(X)
        return np.cos(2 * np.pi * X @ np.asarray(self.K, dtype=float) + self.phase)


@dataclass(frozen=True)
class ConstantObservable:
    c: float

    def __call__(self, X):
        return np.full(np.atleast_2d(X).shape[0], float(self.c))


def default_observables(sys: SystemSpec):
    """Three trig observables mixing angular and transverse coordinates."""
    d = sys.dim
    e = [np.eye(d)[i] for i in range(min(d, 3))]
    obs = [TrigObservable(tuple(e[0]), 0.3, "cos(2πx0+0.3)")]
    if d >= 2:
        obs.append(TrigObservable(tuple(e[1]), 0.7, "cos(2πx1+0.7)"))
        obs.append(TrigObservable(tuple(e[0] + e[-1]), 1.1, "cos(2π(x0+x_last)+1.1)"))
    return obs


# -------------------------------------------------------------- Jacobian


def unstable_jacobian(sys: SystemSpec, x, Eu) -> float:
    """|det(Q′ᵀ Df Eu)| with Q′ an orthonormal basis of Df·Eu."""
    Eu = np.asarray(Eu, dtype=float)
    if Eu.ndim == 1:
        Eu = Eu[:, None]
    A = np.asarray(sys.deriv_eval(np.asarray(x, dtype=float))) @ Eu
    s = np.linalg.svd(A, compute_uv=False)
    if s[-1] <= 1e-14 * max(s[0], 1.0):
        raise RankDeficient("Df·Eᵘ is rank deficient", smallest=float(s[-1]))
    Q = np.linalg.qr(A)[0]
    return float(abs(np.linalg.det(Q.T @ A)))


def _backward_points(sys, Z, depth):
    Z = np.atleast_2d(np.asarray(Z, dtype=float))
    if sys.backward_orbit is not None:
        return np.asarray(sys.backward_orbit(Z, depth))
    out = np.empty((Z.shape[0], depth + 1, sys.dim))
    try:
        for i, z in enumerate(Z):
            out[i] = inverse_on_attractor(sys, z, depth).points
    except SrbkitError as exc:
        raise BackwardOrbitFailure(str(exc)) from exc
    return out


def _frames_along(sys, paths, du):
    """Eᵘ frames at paths[:, k] by forward transport from the deepest point."""
    r, K1, d = paths.shape
    K = K1 - 1
    rng = np.random.default_rng(0)
    V = np.broadcast_to(np.linalg.qr(rng.standard_normal((d, du)))[0], (r, d, du)).copy()
    D = np.asarray(sys.deriv_eval(paths.reshape(-1, d))).reshape(r, K1, d, d)
    U = np.empty((r, K1, d, du))
    U[:, K] = V
    for k in range(K, 0, -1):
        V = np.linalg.qr(D[:, k] @ V)[0]
        U[:, k - 1] = V
    return U


def _stable_frames_along(sys, paths, du, settle: int = SETTLE):
    """Eˢ frames at paths[:, k] by adjoint transport from settle steps past paths[:, 0]."""
    r, K1, d = paths.shape
    K = K1 - 1
    fwd = np.empty((r, settle, d))
    cur = paths[:, 0]
    for j in range(settle):
        cur = np.asarray(sys.map_eval(cur))
        fwd[:, j] = cur
    chain = np.concatenate([paths[:, ::-1], fwd], axis=1)
    L = chain.shape[1]
    D = np.asarray(sys.deriv_eval(chain.reshape(-1, d))).reshape(r, L, d, d)
    rng = np.random.default_rng(1)
    C = np.broadcast_to(np.linalg.qr(rng.standard_normal((d, du)))[0], (r, d, du)).copy()
    out = np.empty((r, K1, d, d - du))
    for j in range(L - 1, -1, -1):
        C = np.linalg.qr(np.swapaxes(D[:, j], 1, 2) @ C)[0]
        if j <= K:
            out[:, K - j] = np.linalg.qr(C, mode="complete")[0][:, :, du:]
    return out


def leaf_backward_paths(sys: SystemSpec, Z, depth: int, refs=None, ref_index=None,
                        settle: int = SETTLE, newton_steps: int = 3):
    """Backward orbits of points sharing local unstable leaves with reference points.

    Each reference gets a stabilized backward orbit; every other point is
    pulled back by local Newton inverses seeded on its reference's path and
    projected onto the reference's unstable tangent after each step, which
    suppresses the backward growth of stable-direction round-off.
    """
    Z = np.atleast_2d(np.asarray(Z, dtype=float))
    m = Z.shape[0]
    if refs is None:
        refs = Z[m // 2][None, :]
        ref_index = np.zeros(m, dtype=int)
    refs = np.atleast_2d(np.asarray(refs, dtype=float))
    ref_index = np.asarray(ref_index, dtype=int)
    du = sys.unstable_dim
    R = _backward_points(sys, refs, depth + settle)
    if not np.all(np.isfinite(R)):
        raise BackwardOrbitFailure("non-finite backward orbit")
    U = _frames_along(sys, R, du)
    S = _stable_frames_along(sys, R, du)
    Minv = np.linalg.inv(np.concatenate([U, S], axis=3))
    out = np.empty((m, depth + 1, sys.dim))
    out[:, 0] = Z
    cur = Z.copy()
    for k in range(1, depth + 1):
        base = R[ref_index, k]
        Db = np.asarray(sys.deriv_eval(base))
        y = base + np.linalg.solve(Db, sys.displacement(R[ref_index, k - 1], cur)[..., None])[..., 0]
        for _ in range(newton_steps):
            r = sys.displacement(cur, sys.map_eval(y))
            y = y - np.linalg.solve(np.asarray(sys.deriv_eval(y)), r[..., None])[..., 0]
        Uk = U[ref_index, k]
        off = sys.displacement(base, y)
        # slide along Eˢ onto the reference's unstable tangent
        coef = np.einsum("mud,md->mu", Minv[ref_index, k][:, :du, :], off)
        y = base + np.einsum("mdu,mu->md", Uk, coef)
        y = sys.wrap(y)
        out[:, k] = y
        cur = y
    if not np.all(np.isfinite(out)):
        raise BackwardOrbitFailure("leaf pull-back diverged")
    return out, R, U


def backward_log_jacobians(sys: SystemSpec, Z, N: int, settle: int = SETTLE, refs=None,
                           ref_index=None):
    """log Jᵘ(z₋ₖ), k = 1..N, for points on the leaves of the reference points.

    Returns (logJ of shape (m, N), paths of shape (m, N+1, d)). The unstable
    direction at z₋ₖ is the reference frame carried onto the node's path by
    transport from the reference's depth N+settle.
    """
    Z = np.atleast_2d(np.asarray(Z, dtype=float))
    m = Z.shape[0]
    paths, R, U = leaf_backward_paths(sys, Z, N, refs, ref_index, settle)
    if ref_index is None:
        ref_index = np.zeros(m, dtype=int)
    ref_index = np.asarray(ref_index, dtype=int)
    # frame at depth N taken from the reference; the transport over the
    # remaining N steps aligns it with the node's own Eᵘ
    V = U[ref_index, N].copy()
    logJ = np.empty((m, N))
    for k in range(N, 0, -1):
        D = np.asarray(sys.deriv_eval(paths[:, k]))
        V, Rm = np.linalg.qr(D @ V)
        logJ[:, k - 1] = np.log(np.abs(np.prod(np.diagonal(Rm, axis1=1, axis2=2), axis=1)))
    return logJ, paths


# ------------------------------------------------------------------ discs


@dataclass
class UnstableDisc:
    """Embedded unstable disc with quadrature for normalized Lebesgue measure."""

    points: np.ndarray
    weights: np.ndarray
    params: np.ndarray
    arclength: Optional[np.ndarray] = None
    anchor: Optional[np.ndarray] = None
    patch: Optional[GraphPatch] = None
    speed: Optional[np.ndarray] = None

    @property
    def size(self):
        return self.points.shape[0]

    @classmethod
    def from_patch(cls, sys: SystemSpec, patch: GraphPatch, nodes: int = DISC_NODES,
                   radius: Optional[float] = None):
        ev = patch.evaluator
        if ev is None or patch.kind != "u":
            raise ValueError("an unstable patch with an evaluator is required")
        c = ev.charts
        r = patch.radius if radius is None else radius
        du = c.du
        axes = [np.linspace(-r, r, nodes) for _ in range(du)]
        mesh = np.meshgrid(*axes, indexing="ij")
        X = np.stack([mm.ravel() for mm in mesh], axis=1)
        vals, D = ev.evaluate(X)
        Linv = c.Linv[ev.anchor]
        T = Linv[:, :du][None] + Linv[:, du:][None] @ D
        vol = np.sqrt(np.abs(np.linalg.det(np.swapaxes(T, 1, 2) @ T)))
        tw = np.ones(nodes)
        tw[0] = tw[-1] = 0.5
        w = vol.copy()
        for ax in range(du):
            idx = np.unravel_index(np.arange(X.shape[0]), (nodes,) * du)[ax]
            w *= tw[idx]
        pts = c.embed(ev.anchor, np.hstack([X, vals]))
        arc = None
        if du == 1:
            seg = np.linalg.norm(sys.displacement(pts[:-1], pts[1:]), axis=1)
            arc = np.concatenate([[0.0], np.cumsum(seg)])
            arc -= np.interp(0.0, X[:, 0], arc)
        return cls(pts, w / w.sum(), X, arc, c.points[ev.anchor].copy(), patch, vol)

    @classmethod
    def from_curve(cls, sys: SystemSpec, points, params=None, anchor_index=None):
        """Disc from ordered points along a one-dimensional unstable curve."""
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        seg = np.linalg.norm(sys.displacement(pts[:-1], pts[1:]), axis=1)
        arc = np.concatenate([[0.0], np.cumsum(seg)])
        w = np.zeros(pts.shape[0])
        w[:-1] += 0.5 * seg
        w[1:] += 0.5 * seg
        if w.sum() <= 0:
            w[:] = 1.0
        par = arc.copy() if params is None else np.asarray(params, dtype=float).reshape(-1, 1)
        if par.ndim == 1:
            par = par[:, None]
        a = pts.shape[0] // 2 if anchor_index is None else anchor_index
        speed = None
        if pts.shape[0] > 2:
            speed = np.abs(np.gradient(arc, par[:, 0], edge_order=2))
        return cls(pts, w / w.sum(), par, arc, pts[a].copy(), None, speed)

    def grow(self, sys: SystemSpec, steps: int, nodes: Optional[int] = None):
        """fᵏ(L) resampled uniformly in arclength (dᵤ = 1).

        The curve is first refined 16-fold by interpolation; the refined
        points sit off Wᵘ by O(spacing²) and that offset contracts under f.
        """
        m = nodes or self.size
        base = np.linspace(0, 1, self.size)
        fine = np.linspace(0, 1, 16 * m)
        cols = []
        for j in range(sys.dim):
            c = self.points[:, j]
            if j in sys.angle_mask:
                c = np.unwrap(c, period=1.0)
            cols.append(np.interp(fine, base, c))
        P = sys.wrap(np.stack(cols, axis=1))
        for _ in range(steps):
            P = np.asarray(sys.map_eval(P))
        seg = np.linalg.norm(sys.displacement(P[:-1], P[1:]), axis=1)
        arc = np.concatenate([[0.0], np.cumsum(seg)])
        tgt = np.linspace(0, arc[-1], m)
        idx = np.clip(np.searchsorted(arc, tgt), 1, len(arc) - 1)
        t = (tgt - arc[idx - 1]) / np.maximum(arc[idx] - arc[idx - 1], 1e-300)
        pts = sys.wrap(P[idx - 1] + t[:, None] * sys.displacement(P[idx - 1], P[idx]))
        return UnstableDisc.from_curve(sys, pts)


def unstable_disc(sys: SystemSpec, x, nodes: int = DISC_NODES, radius: Optional[float] = None,
                  grow_steps: int = 0, **kw) -> UnstableDisc:
    """Quadrature disc on the local unstable manifold of x."""
    patch = unstable_manifold(sys, x, **kw)
    disc = UnstableDisc.from_patch(sys, patch, nodes, radius)
    if grow_steps:
        disc = disc.grow(sys, grow_steps, nodes)
    return disc


def unstable_leaf_point(sys: SystemSpec, x, target_distance: float, depth: int = 30,
                        sign: float = 1.0, splitting=None):
    """A point y on Wᵘ(x) at Euclidean distance ≈ target from x.

    Perturbs x₋depth along Eᵘ and pushes forward; the stable error
    contracts over the depth steps.
    """
    bwd = inverse_on_attractor(sys, x, depth)
    deep = bwd.points[-1]
    prov = splitting or sys.known_splitting
    if prov is not None:
        Eu = prov(deep)[0][:, 0]
    else:
        from .cocycle import unstable_subspace
        Eu = unstable_subspace(sys, inverse_on_attractor(sys, deep, 40)).Eu_basis[:, 0]

    def push(s):
        y = sys.wrap(deep + sign * s * Eu)
        for _ in range(depth):
            y = sys.map_eval(y)
        return y

    lo, hi = 0.0, 1e-12
    while sys.distance(x, push(hi)) < target_distance and hi < 1.0:
        lo, hi = hi, hi * 2
    for _ in range(80):
        mid = 0.5 * (lo + hi)
        if sys.distance(x, push(mid)) < target_distance:
            lo = mid
        else:
            hi = mid
    return push(0.5 * (lo + hi))


# ---------------------------------------------------------- cocycle ratio


def _transverse_growth(sys, x, y, steps, settle):
    """Offset of y₋steps from the unstable tangent of x₋steps, pulled back without projection.

    On the leaf the offset shrinks with the squared backward distance; off
    the leaf it is amplified by the backward expansion of the stable part.
    """
    R = _backward_points(sys, x[None, :], steps + settle)
    U = _frames_along(sys, R, sys.unstable_dim)[0]
    R = R[0]
    cur = y.copy()
    worst = 0.0
    for k in range(1, steps + 1):
        yk = R[k] + np.linalg.solve(sys.deriv_eval(R[k]), sys.displacement(R[k - 1], cur))
        for _ in range(4):
            r = sys.displacement(cur, sys.map_eval(yk))
            yk = yk - np.linalg.solve(sys.deriv_eval(yk), r)
        off = sys.displacement(R[k], yk)
        tr = off - U[k] @ (U[k].T @ off)
        worst = float(np.linalg.norm(tr))
        cur = yk
    return worst


@dataclass
class CocycleRatio:
    value: float
    tail_bound: float
    C: float
    lip_logJ: float
    backward_distances: np.ndarray

    @property
    def within_bounds(self):
        return 1.0 / self.C <= self.value <= self.C


def cocycle_ratio(sys: SystemSpec, x, y, N: int, patch: Optional[GraphPatch] = None,
                  settle: int = SETTLE) -> CocycleRatio:
    """∏_{k=1}^{N} Jᵘ(x₋ₖ)/Jᵘ(y₋ₖ) with a tail bound and distortion constant."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if patch is not None and patch.evaluator is not None:
        ev = patch.evaluator
        w = ev.charts.to_chart(ev.anchor, y)[0]
        du = ev.charts.du
        if np.any(np.abs(w[:du]) > patch.radius * (1 + 1e-9)):
            raise NotOnPatch("y lies outside the patch domain")
        h = ev.evaluate(w[None, :du])[0][0]
        if np.linalg.norm(w[du:] - h) > 1e-8 * max(1.0, patch.radius):
            raise NotOnPatch("y is off the local unstable manifold",
                             offset=float(np.linalg.norm(w[du:] - h)))
    if patch is None:
        off = _transverse_growth(sys, x, y, min(N, 10), settle)
        if off > 1e-6:
            raise NotOnPatch("y is not on the local unstable leaf of x", transverse=off)
    logJ, P = backward_log_jacobians(sys, np.stack([x, y]), N, settle, refs=x[None, :],
                                     ref_index=np.zeros(2, dtype=int))
    d = np.linalg.norm(sys.displacement(P[0, : N + 1], P[1, : N + 1]), axis=1)
    diff = logJ[0] - logJ[1]
    val = float(np.exp(np.sum(diff)))
    ok = d[1:] > 1e-13
    lip = float(np.max(np.abs(diff[ok]) / d[1:][ok])) if np.any(ok) else 0.0
    tail_d = d[max(N - 5, 1): N + 1]
    r = float(np.max(tail_d[1:] / np.maximum(tail_d[:-1], 1e-300))) if tail_d.size > 1 else 0.5
    r = min(r, 0.99)
    tail = lip * d[N] * r / (1 - r)
    C = float(np.exp(lip * np.sum(d[1:]) + tail))
    return CocycleRatio(val, float(np.expm1(tail)), C, lip, d)


# ---------------------------------------------------------------- density


@dataclass
class DensityProfile:
    """Density of the SRB conditional on a disc.

    ``values`` is relative to the disc's normalized Lebesgue measure;
    ``param_values`` is relative to the disc parameter (chart coordinate).
    """

    values: np.ndarray
    param_values: np.ndarray
    N: int
    certificate: float
    arclength: Optional[np.ndarray] = None
    params: Optional[np.ndarray] = None

    def to_rows(self):
        a = self.arclength if self.arclength is not None else np.arange(self.values.size)
        return [(float(s), float(h)) for s, h in zip(a, self.values)]


def _density_from_logJ(disc, logJ, ref):
    logh = np.sum(logJ[ref][None, :] - logJ, axis=1)
    h = np.exp(logh - logh.max())
    return h / np.sum(h * disc.weights)


def _param_density(disc, h):
    if disc.params.shape[1] != 1 or disc.speed is None:
        return h.copy()
    t = disc.params[:, 0]
    # λ_L(dt) ∝ (ds/dt) dt, so the density in t is h·ds/dt
    q = h * disc.speed
    norm = np.trapezoid(q, t)
    return q / abs(norm) if norm != 0 else q


def srb_density(sys: SystemSpec, disc: UnstableDisc, N: int = 60,
                settle: int = SETTLE) -> DensityProfile:
    """h(z) ∝ ∏_{k≥1} Jᵘ(y₋ₖ)/Jᵘ(z₋ₖ) truncated at N, normalized over the disc."""
    ref = int(np.argmin(np.linalg.norm(sys.displacement(disc.anchor, disc.points), axis=1))) \
        if disc.anchor is not None else disc.size // 2
    logJ, _ = backward_log_jacobians(sys, disc.points, N, settle, refs=disc.points[ref][None, :],
                                     ref_index=np.zeros(disc.size, dtype=int))
    h = _density_from_logJ(disc, logJ, ref)
    h_half = _density_from_logJ(disc, logJ[:, : max(N // 2, 1)], ref)
    cert = float(np.max(np.abs(h - h_half)))
    if not np.all(h > 0) or not np.all(np.isfinite(h)):
        raise BackwardOrbitFailure("density is not positive and finite")
    return DensityProfile(h, _param_density(disc, h), N, cert, disc.arclength, disc.params)


# -------------------------------------------------------- empirical measure


@dataclass
class EmpiricalMeasure:
    points: np.ndarray
    weights: np.ndarray
    provenance: dict = field(default_factory=dict)
    node_index: Optional[np.ndarray] = None
    step_index: Optional[np.ndarray] = None

    def integrate(self, phi):
        return float(np.sum(self.weights * np.asarray(phi(self.points))))

    def to_rows(self):
        return [tuple(map(float, p)) + (float(w),) for p, w in zip(self.points, self.weights)]


def empirical_srb(sys: SystemSpec, disc: UnstableDisc, n: int,
                  samples_per_step: Optional[int] = None, seed: int = 0) -> EmpiricalMeasure:
    """(1/n)Σ_{k<n} fᵏλ_L realized by pushing quadrature nodes forward."""
    if n < 1:
        raise ValueError("n >= 1 required")
    if samples_per_step is not None and samples_per_step != disc.size:
        if samples_per_step > disc.size:
            raise ValueError("samples_per_step exceeds the disc's node count")
        idx = np.round(np.linspace(0, disc.size - 1, samples_per_step)).astype(int)
        nodes, w = disc.points[idx], disc.weights[idx] / disc.weights[idx].sum()
    else:
        idx = np.arange(disc.size)
        nodes, w = disc.points, disc.weights
    m = nodes.shape[0]
    st = seed_rng_state(seed, m)
    X = np.ascontiguousarray(nodes.copy())
    pts = np.empty((n, m, sys.dim))
    for k in range(n):
        pts[k] = X
        if k + 1 < n:
            X = advance_batch(sys, X, 1, rng_state=st)
            if not np.all(sys.in_basin(X)):
                raise OrbitEscapesBasin(f"{sys.name}: pushed node left the basin", step=k + 1)
    weights = np.broadcast_to(w / n, (n, m)).reshape(-1).copy()
    return EmpiricalMeasure(
        pts.reshape(-1, sys.dim), weights,
        {"disc_nodes": disc.size, "n": n, "samples_per_step": m, "seed": seed},
        node_index=np.tile(idx, n), step_index=np.repeat(np.arange(n), m))


def push_forward(sys: SystemSpec, mu: EmpiricalMeasure, seed: int = 1) -> EmpiricalMeasure:
    X = advance_batch(sys, mu.points, 1, seed=seed)
    return EmpiricalMeasure(X, mu.weights.copy(), dict(mu.provenance, pushed=True))


def cell_masses(sys: SystemSpec, mu: EmpiricalMeasure, bins: int = 8, coords=None):
    """Masses of the bins^k cells of the basin box over the chosen coordinates."""
    coords = list(range(min(sys.dim, 3))) if coords is None else list(coords)
    lo, hi = sys.basin_lo[coords], sys.basin_hi[coords]
    u = (mu.points[:, coords] - lo) / (hi - lo)
    idx = np.clip(np.floor(u * bins).astype(int), 0, bins - 1)
    flat = np.ravel_multi_index(idx.T, (bins,) * len(coords))
    return np.bincount(flat, weights=mu.weights, minlength=bins ** len(coords))


def total_variation(a, b):
    return 0.5 * float(np.sum(np.abs(np.asarray(a) - np.asarray(b))))


def angular_marginal(mu: EmpiricalMeasure, coord: int = 0, bins: int = 64):
    idx = np.clip(np.floor(mu.points[:, coord] * bins).astype(int), 0, bins - 1)
    return np.bincount(idx, weights=mu.weights, minlength=bins)


# --------------------------------------------------------------- Birkhoff


def birkhoff_average(sys: SystemSpec, x, phi: Callable, n: int, seed: int = 0,
                     exact: bool = False) -> float:
    """(1/n)Σ_{i<n} φ(fⁱx); ``exact`` forces plain composition of map_eval."""
    if n < 1:
        raise ValueError("n >= 1 required")
    return float(birkhoff_batch(sys, np.atleast_2d(x), [phi], n, seed, exact)[0, 0])


def birkhoff_batch(sys: SystemSpec, X, phis: Sequence[Callable], n: int, seed: int = 0,
                   exact: bool = False) -> np.ndarray:
    """Birkhoff averages of several observables from many starting points; (m, len(phis))."""
    X = np.ascontiguousarray(np.atleast_2d(np.asarray(X, dtype=float)).copy())
    if not np.all(sys.in_basin(X)):
        raise OrbitEscapesBasin(f"{sys.name}: start point outside basin", step=0)
    m = X.shape[0]
    out = np.empty((m, len(phis)))
    trig = [isinstance(p, TrigObservable) for p in phis]
    if not exact and sys.birkhoff_trig is not None and all(trig):
        K = np.array([p.K for p in phis], dtype=float)
        ph = np.array([p.phase for p in phis], dtype=float)
        st = seed_rng_state(seed, m)
        Y = X.copy()
        sums = np.asarray(sys.birkhoff_trig(Y, int(n), st, K, ph))
        if not np.all(sys.in_basin(Y)):
            raise OrbitEscapesBasin(f"{sys.name}: orbit left the basin")
        return sums / n
    sums = np.zeros((m, len(phis)))
    st = None if exact else seed_rng_state(seed, m)
    for i in range(n):
        for j, p in enumerate(phis):
            sums[:, j] += np.asarray(p(X), dtype=float)
        if i + 1 < n:
            X = np.asarray(sys.map_eval(X)) if exact else advance_batch(sys, X, 1, rng_state=st)
            if not np.all(sys.in_basin(X)):
                raise OrbitEscapesBasin(f"{sys.name}: orbit left the basin", step=i + 1)
    out[:] = sums / n
    return out


# ------------------------------------------------ conditional density check


def _pieces(sys, mu, x, eps, rho, Eu):
    """Maximal runs of consecutive pushed nodes inside V_{x,ε}."""
    disp = sys.displacement(x, mu.points)
    along = disp @ Eu
    trans = np.linalg.norm(disp - np.outer(along, Eu), axis=1)
    inside = (np.abs(along) <= rho) & (trans <= eps)
    if mu.node_index is None or mu.step_index is None:
        sel = np.flatnonzero(inside)
        return [(sel, False)] if sel.size else []
    out = []
    order = np.lexsort((mu.node_index, mu.step_index))
    ins = inside[order]
    step = mu.step_index[order]
    nidx = mu.node_index[order]
    n_nodes = int(mu.node_index.max()) + 1
    brk = np.flatnonzero(np.diff(np.concatenate([[0], ins.astype(int), [0]])))
    for a, b in zip(brk[::2], brk[1::2]):
        # split runs at step changes
        s = step[a:b]
        cuts = np.flatnonzero(np.diff(s)) + 1
        for lo, hi in zip(np.concatenate([[0], cuts]), np.concatenate([cuts, [b - a]])):
            run = order[a + lo: a + hi]
            first, last = nidx[a + lo], nidx[a + hi - 1]
            # a run that ends at the curve's end is cut by ∂L, not by ∂V
            touches = first == 0 or last == n_nodes - 1
            # a run shorter than the window interior touches the boundary of V
            pa = along[run]
            clipped = not (pa.min() < -rho * 0.9 and pa.max() > rho * 0.9)
            out.append((run, touches or clipped))
    return out


def conditional_density_check(sys: SystemSpec, mu: EmpiricalMeasure, x, eps: float,
                              rho: float, bins: int = 32, N: int = 30,
                              min_support: int = 100_000, min_per_piece: Optional[int] = None,
                              Eu=None) -> dict:
    """Per-piece histograms of μ on V_{x,ε} against the SRB density on each piece."""
    x = np.asarray(x, dtype=float)
    if Eu is None:
        prov = sys.known_splitting
        if prov is None:
            raise ValueError("an unstable direction at x is required")
        Eu = prov(x)[0][:, 0]
    Eu = np.asarray(Eu, dtype=float).ravel()
    Eu = Eu / np.linalg.norm(Eu)
    pieces = _pieces(sys, mu, x, eps, rho, Eu)
    support = int(sum(p[0].size for p in pieces))
    if support == 0:
        raise InsufficientSupport("no support points near x", support=0)
    min_per_piece = 16 * bins if min_per_piece is None else min_per_piece
    edges = np.linspace(-rho, rho, bins + 1)
    degenerate = support < 2 or (mu.points.shape[0] < 2)
    rows = []
    tot_mass = 0.0
    acc = 0.0
    agg_emp = np.zeros(bins)
    agg_pred = np.zeros(bins)
    for run, boundary in pieces:
        if boundary and not degenerate:
            continue
        if run.size < min_per_piece and not degenerate:
            continue
        P = mu.points[run]
        w = mu.weights[run]
        s = sys.displacement(x, P) @ Eu
        emp = np.histogram(s, bins=edges, weights=w)[0]
        mass = float(emp.sum())
        if mass <= 0:
            continue
        emp = emp / mass
        order = np.argsort(s)
        if run.size >= 3:
            disc = UnstableDisc.from_curve(sys, P[order], params=s[order])
            prof = srb_density(sys, disc, N)
            centers = 0.5 * (edges[:-1] + edges[1:])
            dens = np.interp(centers, s[order], prof.param_values)
        else:
            dens = np.ones(bins)
        pred = dens / dens.sum()
        l1 = float(np.sum(np.abs(emp - pred)))
        rows.append({"points": int(run.size), "mass": mass, "l1": l1})
        tot_mass += mass
        acc += mass * l1
        agg_emp += mass * emp
        agg_pred += mass * pred
    if support < min_support and not degenerate:
        raise InsufficientSupport(f"only {support} support points near x", support=support)
    if not rows:
        raise InsufficientSupport("no interior piece has enough points", support=support)
    l1 = acc / tot_mass
    return {
        "support": support,
        "pieces_used": len(rows),
        "pieces_total": len(pieces),
        "l1": l1,
        "l1_aggregate": float(np.sum(np.abs(agg_emp - agg_pred)) / tot_mass),
        "singular": bool(l1 > 1.5),
        "bins": bins,
        "pieces": rows,
    }


# ------------------------------------------------------------ observability


def perturbed_plane(E, delta, seed=0):
    """A subspace at Kato gap ≈ δ/2 from span(E)."""
    E = orthonormal(E)
    d, k = E.shape
    if k == d:
        return E.copy()
    rng = np.random.default_rng(seed)
    Nc = np.linalg.qr(np.hstack([E, rng.standard_normal((d, d - k))]))[0][:, k:]
    M = Nc @ rng.standard_normal((d - k, k))
    target = 0.5 * delta
    lo, hi = 0.0, 10.0
    for _ in range(60):
        t = 0.5 * (lo + hi)
        if kato_gap(E, orthonormal(E + t * M)) < target:
            lo = t
        else:
            hi = t
    return orthonormal(E + lo * M)


def observability_test(sys: SystemSpec, mu_ref: EmpiricalMeasure, transversal, phis,
                       n: int, tol: float, n_points: int = 1000, seed: int = 0,
                       kato_delta: float = 0.05) -> dict:
    """Fraction of Lebesgue-sampled points on a plane with Birkhoff averages near ∫φ dμ."""
    x0, E, offset = transversal
    x0 = np.asarray(x0, dtype=float)
    E = orthonormal(np.asarray(E, dtype=float).reshape(sys.dim, -1))
    targets = np.array([mu_ref.integrate(p) for p in phis])
    rng = np.random.default_rng(seed)

    def run(plane, salt):
        U = rng.uniform(-offset, offset, size=(4 * n_points, plane.shape[1]))
        X = sys.wrap(x0 + U @ plane.T)
        X = X[sys.in_basin(X)]
        if X.shape[0] == 0:
            raise PlaneMissesBasin("the sampled plane misses the basin")
        X = X[:n_points]
        avg = birkhoff_batch(sys, X, phis, n, seed=seed + salt)
        err = np.abs(avg - targets[None, :])
        ok = err < tol
        return {
            "fraction": float(np.mean(np.all(ok, axis=1))),
            "per_observable": [float(v) for v in np.mean(ok, axis=0)],
            "max_error": float(err.max()),
            "points": int(X.shape[0]),
        }

    base = run(E, 0)
    E2 = perturbed_plane(E, kato_delta, seed + 17)
    pert = run(E2, 1)
    pert["kato_gap"] = float(kato_gap(E, E2))
    return {
        "targets": targets.tolist(),
        "fraction": base["fraction"],
        "base": base,
        "perturbed": pert,
        "n": n,
        "tol": tol,
    }


# ----------------------------------------------- angular marginal oracle


def ulam_circle_density(g: Callable, bins: int = 4096, sub: int = 8) -> np.ndarray:
    """Invariant density of a degree-d circle map from an Ulam transfer matrix.

    ``g`` is a lift on [0, 1) with increasing values; each source bin is
    split into ``sub`` linear pieces whose images are distributed over the
    target bins by overlap length.
    """
    from scipy.sparse import coo_matrix

    edges = np.linspace(0, 1, bins * sub + 1)
    G = g(edges)
    rows, cols, vals = [], [], []
    for j in range(bins * sub):
        a, b = G[j], G[j + 1]
        lo, hi = int(np.floor(a * bins)), int(np.floor(b * bins))
        src = j // sub
        for t in range(lo, hi + 1):
            left = max(a, t / bins)
            right = min(b, (t + 1) / bins)
            if right > left:
                rows.append(t % bins)
                cols.append(src)
                vals.append((right - left) / (b - a) / sub)
    P = coo_matrix((vals, (rows, cols)), shape=(bins, bins)).tocsr()
    v = np.full(bins, 1.0 / bins)
    for _ in range(2000):
        nv = P @ v
        nv /= nv.sum()
        if np.max(np.abs(nv - v)) < 1e-15:
            v = nv
            break
        v = nv
    return v * bins


def srb_angular_marginal(sys: SystemSpec, disc: UnstableDisc, n_push: int = 10,
                         N: int = 30, windows: int = 32, bins: int = 4096,
                         fine_nodes: int = 1 << 15) -> dict:
    """Angular marginal assembled from srb_density on the pieces of fⁿ(L).

    Piece masses come from pushing λ_L forward; the shape of the density on
    each piece comes from the backward cocycle. Returns the marginal on
    ``bins`` equal bins of the circle coordinate.
    """
    base = disc.grow(sys, 0, fine_nodes)
    P = base.points.copy()
    w = base.weights
    for _ in range(n_push):
        P = np.asarray(sys.map_eval(P))
    th = P[:, 0]
    win = np.floor(th * windows).astype(int) % windows
    cut = np.flatnonzero(np.diff(win) != 0) + 1
    starts = np.concatenate([[0], cut])
    stops = np.concatenate([cut, [P.shape[0]]])
    piece_of = np.repeat(np.arange(starts.size), stops - starts)
    logJ, _ = backward_log_jacobians(sys, P, N, refs=P[starts], ref_index=piece_of)
    centers = (np.arange(bins) + 0.5) / bins
    rho = np.zeros(bins)
    used_mass = 0.0
    for a, b in zip(starts, stops):
        if b - a < 3:
            continue
        mass = float(w[a:b].sum())
        seg = P[a:b]
        t = np.unwrap(seg[:, 0], period=1.0)
        logh = np.sum(logJ[a][None, :] - logJ[a:b], axis=1)
        h_arc = np.exp(logh)
        s = np.concatenate([[0.0], np.cumsum(np.linalg.norm(
            sys.displacement(seg[:-1], seg[1:]), axis=1))])
        q = h_arc * np.abs(np.gradient(s, t))
        order = np.argsort(t)
        t, q = t[order], q[order]
        lo_w = win[a] / windows
        hi_w = lo_w + 1.0 / windows
        # extend to the window edges by the end values; pieces span one window
        sel = (centers >= lo_w) & (centers < hi_w)
        tt = t - np.floor(t[0] * windows) / windows + lo_w
        dens = np.interp(centers[sel], tt, q)
        Z = np.sum(dens) / bins
        if Z <= 0:
            continue
        rho[sel] += mass * dens / Z
        used_mass += mass
    rho /= max(used_mass, 1e-300)
    return {"density": rho, "used_mass": used_mass, "pieces": int(len(starts))}


def warped_circle_lift(a: float):
    return lambda t: 2 * t + (a / (2 * np.pi)) * np.sin(2 * np.pi * t)
