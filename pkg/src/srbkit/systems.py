"""Dynamical-system abstraction and the built-in desk-scale instances."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
from scipy.spatial import cKDTree

from . import kernels
from .errors import BranchAmbiguous, NoPreimageFound, OrbitEscapesBasin

TWO_PI = 2.0 * np.pi
GOLDEN = (1.0 + np.sqrt(5.0)) / 2.0
CAT_LAMBDA = (3.0 + np.sqrt(5.0)) / 2.0
BASIN_TOL = 1e-12


@dataclass(frozen=True)
class SystemSpec:
    """A C² injective map with derivative, basin box and attractor access.

    ``map_eval`` and ``deriv_eval`` accept a single point of shape (d,) or a
    batch of shape (m, d). Coordinates flagged in ``angle_mask`` live in
    [0, 1) and are compared with the wrapped metric; derivatives are taken
    in the universal cover.
    """

    name: str
    dim: int
    map_eval: Callable
    deriv_eval: Callable
    basin_lo: np.ndarray
    basin_hi: np.ndarray
    unstable_dim: int
    angle_mask: tuple = ()
    known_splitting: Optional[Callable] = None
    known_inverse: Optional[Callable] = None
    backward_orbit: Optional[Callable] = None
    advance: Optional[Callable] = None
    birkhoff_trig: Optional[Callable] = None
    metadata: dict = field(default_factory=dict)

    @property
    def angles(self):
        m = np.zeros(self.dim, dtype=bool)
        m[list(self.angle_mask)] = True
        return m

    def wrap(self, x):
        x = np.array(x, dtype=float, copy=True)
        if self.angle_mask:
            idx = list(self.angle_mask)
            x[..., idx] = x[..., idx] - np.floor(x[..., idx])
        return x

    def displacement(self, x, y):
        """y − x, with angle differences wrapped into [−½, ½)."""
        d = np.asarray(y, dtype=float) - np.asarray(x, dtype=float)
        if self.angle_mask:
            idx = list(self.angle_mask)
            d[..., idx] = d[..., idx] - np.round(d[..., idx])
        return d

    def distance(self, x, y):
        return np.linalg.norm(self.displacement(x, y), axis=-1)

    def in_basin(self, x, tol=BASIN_TOL):
        x = np.asarray(x, dtype=float)
        return np.all((x >= self.basin_lo - tol) & (x <= self.basin_hi + tol), axis=-1)

    @property
    def basin_diameter(self):
        return float(np.linalg.norm(self.basin_hi - self.basin_lo))


@dataclass
class OrbitSegment:
    points: np.ndarray
    derivative_frames: Optional[np.ndarray] = None


@dataclass
class BackwardOrbit:
    """points[k] is x₋ₖ; points[0] is the (possibly re-synthesized) anchor."""

    anchor: np.ndarray
    points: np.ndarray
    residuals: np.ndarray

    @property
    def depth(self):
        return self.points.shape[0] - 1

    @property
    def anchor_offset(self):
        return float(np.linalg.norm(self.points[0] - self.anchor))


# ---------------------------------------------------------------- operations


def iterate(sys: SystemSpec, x, n: int, with_derivatives: bool = False) -> OrbitSegment:
    """Exact forward composition x, f(x), …, fⁿ(x)."""
    if n < 0:
        raise ValueError("n must be non-negative")
    x = np.asarray(x, dtype=float)
    if not sys.in_basin(x):
        raise OrbitEscapesBasin(f"{sys.name}: start point outside basin", step=0)
    pts = np.empty((n + 1, sys.dim))
    pts[0] = x
    for k in range(n):
        pts[k + 1] = sys.map_eval(pts[k])
        if not sys.in_basin(pts[k + 1]):
            raise OrbitEscapesBasin(f"{sys.name}: iterate {k + 1} left the basin", step=k + 1)
    frames = None
    if with_derivatives:
        frames = np.asarray(sys.deriv_eval(pts))
    return OrbitSegment(pts, frames)


def seed_rng_state(seed: int, m: int) -> np.ndarray:
    """Per-trajectory xorshift states derived from one 64-bit seed."""
    ss = np.random.SeedSequence(int(seed) % (1 << 64))
    st = ss.generate_state(m, dtype=np.uint64)
    st[st == 0] = np.uint64(0x9E3779B97F4A7C15)
    return st


def advance_batch(sys: SystemSpec, X, n: int, seed: int = 0, rng_state=None):
    """Advance many points n steps with the fast kernel when available.

    For maps that discard low-order bits (the doubling circle factor) the
    kernel re-randomizes them from ``seed``; this models Lebesgue-typical
    real initial conditions and is only used for ensemble statistics.
    """
    X = np.ascontiguousarray(np.array(X, dtype=float, copy=True))
    if sys.advance is not None:
        if rng_state is None:
            rng_state = seed_rng_state(seed, X.shape[0])
        sys.advance(X, int(n), rng_state)
        return X
    for _ in range(n):
        X = np.asarray(sys.map_eval(X))
    return X


def _check_cloud(sys, X):
    bad = ~sys.in_basin(X)
    if np.any(bad):
        raise OrbitEscapesBasin(f"{sys.name}: {int(bad.sum())} points left the basin")


def attractor_sample(sys: SystemSpec, count: int, burn_in: int, seed: int = 0,
                     return_predecessors: bool = False):
    """{f^burn_in(uᵢ)} for seeded uniform basin points uᵢ."""
    if count < 1 or burn_in < 0:
        raise ValueError("count >= 1 and burn_in >= 0 required")
    rng = np.random.default_rng(seed)
    U = rng.uniform(sys.basin_lo, sys.basin_hi, size=(count, sys.dim))
    U = sys.wrap(U)
    if burn_in == 0:
        return (U, None) if return_predecessors else U
    st = seed_rng_state(seed + 1, count)
    prev = advance_batch(sys, U, burn_in - 1, rng_state=st)
    _check_cloud(sys, prev)
    X = advance_batch(sys, prev, 1, rng_state=st)
    _check_cloud(sys, X)
    return (X, prev) if return_predecessors else X


def attractor_epsilon(sys: SystemSpec, burn_in: int) -> float:
    """Upper bound (contraction)^burn_in · diam(U) on the distance to Λ."""
    c = sys.metadata.get("transverse_contraction", 1.0)
    return float(c ** burn_in * sys.basin_diameter)


_NEWTON_SEEDS = {}


def _newton_seed_cloud(sys):
    key = id(sys)
    if key not in _NEWTON_SEEDS:
        X, prev = attractor_sample(sys, 400, 20, seed=12345, return_predecessors=True)
        _NEWTON_SEEDS[key] = (cKDTree(X), prev)
    return _NEWTON_SEEDS[key]


def newton_preimage(sys: SystemSpec, y, tol=1e-10, max_iter=50, n_seeds=8):
    """Damped Newton on f(x) = y seeded from stored predecessors."""
    tree, prev = _newton_seed_cloud(sys)
    _, idx = tree.query(y, k=min(n_seeds, prev.shape[0]))
    found = []
    for j in np.atleast_1d(idx):
        x = prev[j].copy()
        r = sys.displacement(y, sys.map_eval(x))
        rn = np.linalg.norm(r)
        for _ in range(max_iter):
            if rn <= tol:
                break
            step = np.linalg.solve(sys.deriv_eval(x), -r)
            t = 1.0
            while t > 1e-6:
                xn = sys.wrap(x + t * step)
                rr = sys.displacement(y, sys.map_eval(xn))
                if np.linalg.norm(rr) < rn:
                    break
                t *= 0.5
            x, r, rn = xn, rr, np.linalg.norm(rr)
        if rn <= tol:
            if all(np.linalg.norm(sys.displacement(x, q)) > 1e-6 for q in found):
                found.append(x)
    if not found:
        raise NoPreimageFound(f"{sys.name}: Newton failed from all seeds")
    if len(found) > 1:
        raise BranchAmbiguous(f"{sys.name}: {len(found)} distinct preimages")
    return found[0]


def inverse_on_attractor(sys: SystemSpec, y, depth: int, inverse_tolerance: float = 1e-10):
    """Backward orbit x₀, x₋₁, …, x₋depth of an attractor point."""
    y = np.asarray(y, dtype=float)
    if sys.backward_orbit is not None:
        pts = sys.backward_orbit(y[None, :], depth)[0]
    else:
        pts = np.empty((depth + 1, sys.dim))
        pts[0] = y
        for k in range(1, depth + 1):
            if sys.known_inverse is not None:
                pts[k] = sys.known_inverse(pts[k - 1])
            else:
                pts[k] = newton_preimage(sys, pts[k - 1], tol=inverse_tolerance)
    if depth > 0:
        res = np.linalg.norm(sys.displacement(pts[:-1], sys.map_eval(pts[1:])), axis=1)
    else:
        res = np.zeros(0)
    if np.any(res > inverse_tolerance):
        raise NoPreimageFound(f"{sys.name}: backward residual {res.max():.2e}")
    return BackwardOrbit(anchor=y, points=pts, residuals=res)


def verify_hyperbolicity(sys: SystemSpec, splitting, lam0: float, mode: str = "uniform",
                         points=None, n_samples: int = 10_000, seed: int = 0,
                         norm_provider=None):
    """One-step expansion/contraction rates on a splitting field.

    ``splitting(x)`` returns (Eu basis, Ecs basis). When ``norm_provider``
    is given it maps x to a Gram matrix and rates are measured in that
    (adapted) norm instead of the Euclidean one.
    """
    if points is None:
        points = attractor_sample(sys, n_samples, 40, seed=seed)
    min_u = np.inf
    max_s = -np.inf
    wit_u = wit_s = None
    for x in points:
        Eu, Es = splitting(x)
        D = sys.deriv_eval(x)
        if norm_provider is None:
            gu = _min_gain(D @ Eu, Eu)
            gs = _max_gain(D @ Es, Es)
        else:
            G0 = norm_provider(x)
            G1 = norm_provider(sys.map_eval(x))
            gu = _min_gain(D @ Eu, Eu, G1, G0)
            gs = _max_gain(D @ Es, Es, G1, G0)
        if gu < min_u:
            min_u, wit_u = gu, x
        if gs > max_s:
            max_s, wit_s = gs, x
    bound_s = 1.0 if mode == "partial" else np.exp(-lam0)
    pass_u = min_u >= np.exp(lam0) * (1 - 1e-12)
    pass_s = max_s <= bound_s * (1 + 1e-12)
    return {
        "lambda0": lam0,
        "mode": mode,
        "min_unstable_gain": float(min_u),
        "max_centerstable_gain": float(max_s),
        "required_unstable_gain": float(np.exp(lam0)),
        "allowed_centerstable_gain": float(bound_s),
        "pass": bool(pass_u and pass_s),
        "unstable_witness": None if wit_u is None else wit_u.tolist(),
        "centerstable_witness": None if wit_s is None else wit_s.tolist(),
    }


def _gram_sqrt(G):
    w, V = np.linalg.eigh(G)
    return (V * np.sqrt(w)) @ V.T


def _gains(img, src, G1=None, G0=None):
    if G1 is not None:
        img = _gram_sqrt(G1) @ img
        src = _gram_sqrt(G0) @ src
    # generalized singular values of img relative to src
    Q, R = np.linalg.qr(src)
    M = img @ np.linalg.inv(R)
    return np.linalg.svd(M, compute_uv=False)


def _min_gain(img, src, G1=None, G0=None):
    return float(_gains(img, src, G1, G0).min())


def _max_gain(img, src, G1=None, G0=None):
    return float(_gains(img, src, G1, G0).max())


# ------------------------------------------------------ solenoid family


def _skew_g(th, warp):
    return 2.0 * th + (warp / TWO_PI) * np.sin(TWO_PI * th)


def _skew_gprime(th, warp):
    return 2.0 + warp * np.cos(TWO_PI * th)


def _skew_g_preimages(th, warp):
    """Both lifts t ∈ [0,1) with g(t) ≡ th mod 1; returns (m, 2)."""
    th = np.asarray(th, dtype=float)
    out = np.empty(th.shape + (2,))
    for j in (0, 1):
        target = th + j
        t = target / 2.0
        if warp != 0.0:
            for _ in range(60):
                step = (_skew_g(t, warp) - target) / _skew_gprime(t, warp)
                t = t - step
                if np.all(np.abs(step) < 1e-17):
                    break
        out[..., j] = t - np.floor(t)
    return out


def _skew_map(lam_c, warp):
    def f(x):
        x = np.asarray(x, dtype=float)
        th = x[..., 0]
        out = np.empty_like(x)
        nt = _skew_g(th, warp)
        out[..., 0] = nt - np.floor(nt)
        out[..., 1] = lam_c * x[..., 1] + 0.5 * np.cos(TWO_PI * th)
        out[..., 2] = lam_c * x[..., 2] + 0.5 * np.sin(TWO_PI * th)
        return out

    def Df(x):
        x = np.asarray(x, dtype=float)
        th = x[..., 0]
        D = np.zeros(x.shape[:-1] + (3, 3))
        D[..., 0, 0] = _skew_gprime(th, warp)
        D[..., 1, 0] = -np.pi * np.sin(TWO_PI * th)
        D[..., 2, 0] = np.pi * np.cos(TWO_PI * th)
        D[..., 1, 1] = lam_c
        D[..., 2, 2] = lam_c
        return D

    return f, Df




def _skew_inverse_step(x, lam_c, warp):
    x = np.atleast_2d(np.asarray(x, dtype=float))
    cand = _skew_g_preimages(x[:, 0], warp)
    best = None
    for j in (0, 1):
        t = cand[:, j]
        z = (x[:, 1:] - 0.5 * np.stack([np.cos(TWO_PI * t), np.sin(TWO_PI * t)], axis=1)) / lam_c
        nz = np.linalg.norm(z, axis=1)
        if best is None:
            best = (t, z, nz)
        else:
            pick = nz < best[2]
            best = (np.where(pick, t, best[0]), np.where(pick[:, None], z, best[1]),
                    np.minimum(nz, best[2]))
    return np.column_stack([best[0], best[1]])


def _skew_backward(lam_c, warp):
    radius = 0.5 / (1.0 - lam_c)
    # fiber errors grow by 1/λc per backward step; beyond this depth the
    # branch choice is no longer resolved by the anchor's digits
    reliable = int(np.floor(-np.log(1e-4 / 1e-16) / np.log(lam_c)))

    def backward(Y, depth):
        Y = np.atleast_2d(np.asarray(Y, dtype=float))
        m = Y.shape[0]
        out = np.empty((m, depth + 1, 3))
        out[:, 0] = Y
        cur = Y.copy()
        for k in range(1, depth + 1):
            nxt = _skew_inverse_step(cur, lam_c, warp)
            if k > reliable:
                nz = np.linalg.norm(nxt[:, 1:], axis=1)
                s = np.where(nz > radius, radius / np.maximum(nz, 1e-300), 1.0)
                nxt[:, 1:] *= s[:, None]
            out[:, k] = nxt
            cur = nxt
        # rebuild fibers forward from the deepest point (stable direction)
        for k in range(depth, 0, -1):
            t = out[:, k, 0]
            out[:, k - 1, 1] = lam_c * out[:, k, 1] + 0.5 * np.cos(TWO_PI * t)
            out[:, k - 1, 2] = lam_c * out[:, k, 2] + 0.5 * np.sin(TWO_PI * t)
        return out

    return backward


def skew_unstable_slope(thetas_backward, lam_c, warp):
    """w(x) with Eᵘ(x) = span(1, w(x)); thetas_backward[..., k-1] = θ₋ₖ."""
    th = np.asarray(thetas_backward, dtype=float)
    K = th.shape[-1]
    w = np.zeros(th.shape[:-1] + (2,))
    # w(x) = (c(θ₋₁) + λc w(x₋₁)) / g'(θ₋₁), summed from the deepest term
    for k in range(K, 0, -1):
        t = th[..., k - 1]
        c = np.pi * np.stack([-np.sin(TWO_PI * t), np.cos(TWO_PI * t)], axis=-1)
        w = (c + lam_c * w) / _skew_gprime(t, warp)[..., None]
    return w


def _skew_splitting(lam_c, warp, backward):
    depth = 40
    Es = np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]])

    def split(x):
        x = np.asarray(x, dtype=float)
        pts = backward(x[None, :], depth)[0]
        w = skew_unstable_slope(pts[1:, 0], lam_c, warp)
        v = np.array([1.0, w[0], w[1]])
        return (v / np.linalg.norm(v))[:, None], Es.copy()

    return split


def _skew_system(name, lam_c, warp):
    f, Df = _skew_map(lam_c, warp)
    backward = _skew_backward(lam_c, warp)
    refresh = warp == 0.0

    def adv(X, n, st):
        kernels.skew_advance(X, n, lam_c, warp, refresh, st)

    def birk(X, n, st, K, phase):
        return kernels.skew_birkhoff(X, n, lam_c, warp, refresh, st,
                                     np.ascontiguousarray(K, dtype=float),
                                     np.ascontiguousarray(phase, dtype=float))

    gmin, gmax = 2.0 - abs(warp), 2.0 + abs(warp)
    meta = {
        "lambda_c": lam_c,
        "warp": warp,
        "fiber_radius": 0.5 / (1.0 - lam_c),
        "transverse_contraction": lam_c,
        "circle_derivative_range": [gmin, gmax],
        "exponents": ([[float(np.log(2.0)), 1], [float(np.log(lam_c)), 2]] if warp == 0.0
                      else [["acim average of log g'", 1], [float(np.log(lam_c)), 2]]),
        "documented_lambda0": float(np.log(1.6)) if warp == 0.0 else float(np.log(1.2)),
        "chart_lambda": 0.6 if warp == 0.0 else 0.35,
        "formula": ("f(θ,z) = (g(θ) mod 1, λc·z + ½(cos2πθ, sin2πθ)), "
                    "g(θ) = 2θ + (a/2π)·sin2πθ"),
    }
    return SystemSpec(
        name=name, dim=3, map_eval=f, deriv_eval=Df,
        basin_lo=np.array([0.0, -1.0, -1.0]), basin_hi=np.array([1.0, 1.0, 1.0]),
        unstable_dim=1, angle_mask=(0,),
        known_splitting=_skew_splitting(lam_c, warp, backward),
        known_inverse=lambda y: _skew_inverse_step(y, lam_c, warp)[0] if np.ndim(y) == 1
        else _skew_inverse_step(y, lam_c, warp),
        backward_orbit=backward, advance=adv, birkhoff_trig=birk, metadata=meta,
    )


def solenoid(lam_c: float = 0.25) -> SystemSpec:
    """Smale–Williams solenoid over the doubling map."""
    return _skew_system("solenoid", lam_c, 0.0)


def warped_solenoid(a: float = 0.5, lam_c: float = 0.25) -> SystemSpec:
    """Solenoid over g(θ)=2θ+(a/2π)sin2πθ; nonconstant unstable Jacobian."""
    if not 0.0 < abs(a) < 1.0:
        raise ValueError("warp amplitude must satisfy 0 < |a| < 1")
    return _skew_system("warped-solenoid", lam_c, float(a))


# ------------------------------------------------------------- fat cat

CAT_A = np.array([[2.0, 1.0], [1.0, 1.0]])
CAT_AINV = np.array([[1.0, -1.0], [-1.0, 2.0]])
CAT_EU = np.array([GOLDEN, 1.0]) / np.hypot(GOLDEN, 1.0)
CAT_ES = np.array([-1.0, GOLDEN]) / np.hypot(GOLDEN, 1.0)


def fat_cat(c: float = 0.2) -> SystemSpec:
    """Cat map (x,y) ↦ (2x+y, x+y) mod 1 crossed with z ↦ c·z."""

    def f(x):
        x = np.asarray(x, dtype=float)
        out = np.empty_like(x)
        nx = 2.0 * x[..., 0] + x[..., 1]
        ny = x[..., 0] + x[..., 1]
        out[..., 0] = nx - np.floor(nx)
        out[..., 1] = ny - np.floor(ny)
        out[..., 2] = c * x[..., 2]
        return out

    D0 = np.zeros((3, 3))
    D0[:2, :2] = CAT_A
    D0[2, 2] = c

    def Df(x):
        x = np.asarray(x, dtype=float)
        return np.broadcast_to(D0, x.shape[:-1] + (3, 3)).copy()

    def inv(y):
        y = np.asarray(y, dtype=float)
        out = np.empty_like(y)
        nx = y[..., 0] - y[..., 1]
        ny = -y[..., 0] + 2.0 * y[..., 1]
        out[..., 0] = nx - np.floor(nx)
        out[..., 1] = ny - np.floor(ny)
        out[..., 2] = y[..., 2] / c
        return out

    def backward(Y, depth):
        Y = np.atleast_2d(np.asarray(Y, dtype=float))
        out = np.empty((Y.shape[0], depth + 1, 3))
        out[:, 0] = Y
        for k in range(1, depth + 1):
            out[:, k] = inv(out[:, k - 1])
            out[:, k, 2] = 0.0
        # the attractor is the z = 0 torus; rebuild z forward from there
        if depth > 0:
            out[:, :, 2] = 0.0
        return out

    Eu = np.array([[CAT_EU[0]], [CAT_EU[1]], [0.0]])
    Es = np.array([[CAT_ES[0], 0.0], [CAT_ES[1], 0.0], [0.0, 1.0]])

    def adv(X, n, st):
        kernels.cat_advance(X, n, c)

    def birk(X, n, st, K, phase):
        return kernels.cat_birkhoff(X, n, c, np.ascontiguousarray(K, dtype=float),
                                    np.ascontiguousarray(phase, dtype=float))

    meta = {
        "c": c,
        "matrix": CAT_A.tolist(),
        "lambda_max": CAT_LAMBDA,
        "transverse_contraction": max(c, 1.0 / CAT_LAMBDA),
        "exponents": [[float(np.log(CAT_LAMBDA)), 1], [float(-np.log(CAT_LAMBDA)), 1],
                      [float(np.log(c)), 1]],
        "documented_lambda0": float(np.log(CAT_LAMBDA)) - 1e-9,
        "chart_lambda": 0.9,
        "formula": "(x,y,z) ↦ (2x+y mod 1, x+y mod 1, c·z)",
    }
    return SystemSpec(
        name="fat-cat", dim=3, map_eval=f, deriv_eval=Df,
        basin_lo=np.array([0.0, 0.0, -1.0]), basin_hi=np.array([1.0, 1.0, 1.0]),
        unstable_dim=1, angle_mask=(0, 1),
        known_splitting=lambda x: (Eu.copy(), Es.copy()),
        known_inverse=inv, backward_orbit=backward, advance=adv, birkhoff_trig=birk,
        metadata=meta,
    )


# ------------------------------------------------------------ galerkin


def galerkin_rd(n_modes: int = 16, lam: float = 12.0, T: float = 0.5, dt: float = 1e-3,
                bound: float = 10.0) -> SystemSpec:
    """Time-T map of the sine-Galerkin truncation of u_t = u_xx + λu − u³."""

    def f(a):
        a = np.asarray(a, dtype=float)
        if a.ndim == 1:
            return kernels.galerkin_flow(a, T, dt, lam, False)[0]
        return np.array([kernels.galerkin_flow(r, T, dt, lam, False)[0] for r in a])

    def Df(a):
        a = np.asarray(a, dtype=float)
        if a.ndim == 1:
            return kernels.galerkin_flow(a, T, dt, lam, True)[1]
        return np.array([kernels.galerkin_flow(r, T, dt, lam, True)[1] for r in a])

    k = np.arange(1, n_modes + 1, dtype=float)
    hi = bound / k
    rates = (lam - k ** 2) * T
    meta = {
        "n_modes": n_modes, "lambda": lam, "T": T, "dt": dt,
        "linear_rates_at_origin": rates.tolist(),
        "unstable_dim_at_origin": int(np.sum(rates > 0)),
        "transverse_contraction": float(np.exp((lam - 16.0) * T)),
        "chart_lambda": 0.5 * float(rates.max()),
        "formula": "RK4 time-T map of the sine-Galerkin system",
    }
    return SystemSpec(
        name="galerkin-rd", dim=n_modes, map_eval=f, deriv_eval=Df,
        basin_lo=-hi, basin_hi=hi, unstable_dim=int(np.sum(rates > 0)),
        metadata=meta,
    )


# -------------------------------------------------------------- linear


def linear(matrix, name: str = "linear", box: float = 1e6) -> SystemSpec:
    """Linear map x ↦ Mx on ℝᵈ (test model, no attractor)."""
    M = np.array(matrix, dtype=float)
    d = M.shape[0]
    Minv = np.linalg.inv(M)
    ev = np.abs(np.diag(M)) if np.allclose(M, np.diag(np.diag(M))) else np.abs(np.linalg.eigvals(M))
    du = int(np.sum(ev > 1.0))
    split = None
    if np.allclose(M, np.diag(np.diag(M))):
        order = np.argsort(-np.abs(np.diag(M)), kind="stable")
        I = np.eye(d)
        Eu = I[:, order[:du]] if du > 0 else np.zeros((d, 0))
        Es = I[:, order[du:]]
        split = lambda x: (Eu.copy(), Es.copy())  # noqa: E731

    def backward(Y, depth):
        Y = np.atleast_2d(np.asarray(Y, dtype=float))
        out = np.empty((Y.shape[0], depth + 1, d))
        out[:, 0] = Y
        for k in range(1, depth + 1):
            out[:, k] = out[:, k - 1] @ Minv.T
        return out

    return SystemSpec(
        name=name, dim=d, map_eval=lambda x: np.asarray(x, dtype=float) @ M.T,
        deriv_eval=lambda x: np.broadcast_to(M, np.shape(x)[:-1] + (d, d)).copy(),
        basin_lo=-box * np.ones(d), basin_hi=box * np.ones(d), unstable_dim=max(du, 1),
        known_splitting=split, known_inverse=lambda y: np.asarray(y, dtype=float) @ Minv.T,
        backward_orbit=backward, metadata={"matrix": M.tolist(), "transverse_contraction": 1.0},
    )


BUILTINS = {
    "solenoid": solenoid,
    "warped-solenoid": warped_solenoid,
    "fat-cat": fat_cat,
    "galerkin-rd": galerkin_rd,
}


def make_system(name: str, **params) -> SystemSpec:
    if name == "linear":
        return linear(**params)
    if name not in BUILTINS:
        raise KeyError(f"unknown system {name!r}")
    return BUILTINS[name](**params)
