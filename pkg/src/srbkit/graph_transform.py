"""Charts along orbits, graph transforms and local invariant manifolds."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
from scipy.interpolate import RegularGridInterpolator

from .errors import ConditionsViolated, FixedPointDiverged, LeftClass, NotConverged
from .systems import BackwardOrbit, OrbitSegment, SystemSpec, inverse_on_attractor

GRID_POINTS = 17
PICARD_CAP = 200
PICARD_TOL = 1e-12
FIT_FLOOR = 1e-13


def _sym_inv_sqrt(G):
    w, V = np.linalg.eigh(G)
    return (V / np.sqrt(w)) @ V.T


def _orth(B):
    return np.linalg.qr(np.asarray(B, dtype=float))[0]


def _numeric_splittings(sys, ext, du):
    """Eᵘ by forward frame transport, Eˢ by adjoint transport, along ext."""
    D = np.asarray(sys.deriv_eval(ext))
    n = ext.shape[0]
    rng = np.random.default_rng(0)
    W = _orth(rng.standard_normal((sys.dim, du)))
    U = [None] * n
    for j in range(n):
        U[j] = W
        W = _orth(D[j] @ W)
    C = _orth(rng.standard_normal((sys.dim, du)))
    S = [None] * n
    for j in range(n - 1, -1, -1):
        C = _orth(D[j].T @ C)
        Q = np.linalg.qr(C, mode="complete")[0]
        S[j] = Q[:, du:]
    return U, S


@dataclass
class ChartSequence:
    """Charts Φᵢ(w) = pᵢ + Lᵢ⁻¹w and connecting maps gᵢ = Λᵢ + Gᵢ."""

    sys: SystemSpec
    points: np.ndarray
    Linv: np.ndarray
    L: np.ndarray
    du: int
    radii: np.ndarray
    lam1: float
    delta1: float
    delta2: float
    Lam_u: np.ndarray
    Lam_s: np.ndarray
    ell: np.ndarray = None
    lprime: np.ndarray = None
    metric: str = "adapted"
    linear_from: Optional[int] = None
    report: dict = field(default_factory=dict)

    @property
    def n_steps(self):
        return self.points.shape[0] - 1

    @property
    def ds(self):
        return self.sys.dim - self.du

    def Lam(self, i):
        d = self.sys.dim
        M = np.zeros((d, d))
        M[: self.du, : self.du] = self.Lam_u[i]
        M[self.du:, self.du:] = self.Lam_s[i]
        return M

    def _linear(self, i):
        return self.linear_from is not None and i >= self.linear_from

    def g(self, i, W):
        """Connecting map in chart coordinates; W has shape (m, d)."""
        W = np.atleast_2d(W)
        if self._linear(i):
            return W @ self.Lam(i).T
        y = self.points[i] + W @ self.Linv[i].T
        fy = self.sys.map_eval(y)
        return self.sys.displacement(self.points[i + 1], fy) @ self.L[i + 1].T

    def Dg(self, i, W):
        W = np.atleast_2d(W)
        if self._linear(i):
            return np.broadcast_to(self.Lam(i), (W.shape[0],) + self.Lam(i).shape)
        y = self.points[i] + W @ self.Linv[i].T
        D = np.asarray(self.sys.deriv_eval(y))
        return self.L[i + 1] @ D @ self.Linv[i]

    def G(self, i, W):
        W = np.atleast_2d(W)
        return self.g(i, W) - W @ self.Lam(i).T

    def DG(self, i, W):
        return self.Dg(i, W) - self.Lam(i)

    def embed(self, i, W):
        return self.sys.wrap(self.points[i] + np.atleast_2d(W) @ self.Linv[i].T)

    def to_chart(self, i, Y):
        return self.sys.displacement(self.points[i], np.atleast_2d(Y)) @ self.L[i].T

    def with_linear_tail(self, N):
        """Copy whose connecting maps are replaced by Λᵢ from index N on."""
        c = ChartSequence(**{k: getattr(self, k) for k in self.__dataclass_fields__})
        c.linear_from = N
        return c

    def sample_ball(self, i, r, m=64, seed=0):
        rng = np.random.default_rng(seed + 1000 * i)
        d = self.sys.dim
        W = rng.uniform(-r, r, size=(m, d))
        if d <= 4:
            corners = np.array(np.meshgrid(*[[-r, r]] * d, indexing="ij")).reshape(d, -1).T
        else:
            corners = r * rng.choice([-1.0, 1.0], size=(d, d))
        return np.vstack([np.zeros((1, d)), corners, W])


def _as_points(orbit):
    if isinstance(orbit, BackwardOrbit):
        return orbit.points[::-1].copy()
    if isinstance(orbit, OrbitSegment):
        return orbit.points.copy()
    return np.atleast_2d(np.asarray(orbit, dtype=float)).copy()


def _opnorm(M):
    return np.linalg.norm(M, ord=2, axis=(-2, -1))


def build_charts(sys: SystemSpec, orbit, splitting: Optional[Callable] = None,
                 lam1: float = 0.6, delta1: float = 0.0, delta2: float = 0.05,
                 metric: str = "adapted", lyap_N: int = 60, r_max: float = 0.05,
                 extension=None, strict: bool = True, n_samples: int = 64) -> ChartSequence:
    """Charts satisfying conditions (I)–(IV) along an orbit segment.

    With ``metric='adapted'`` each Lᵢ is an isometry from the truncated
    Lyapunov inner product (so (I) holds by construction); with
    ``metric='euclidean'`` Lᵢ⁻¹ = [Eᵘ | Eˢ] with orthonormal block bases.
    Radii are the largest values (up to ``r_max``) keeping the sampled
    ‖DGᵢ‖ below δ₂, smoothed to vary by at most e^{δ₁} per step.
    """
    pts = _as_points(orbit)
    n = pts.shape[0] - 1
    du = sys.unstable_dim
    d = sys.dim
    N = lyap_N if metric == "adapted" else 0
    if extension is None:
        bwd = inverse_on_attractor(sys, pts[0], N).points[1:][::-1] if N > 0 else np.zeros((0, d))
        fwd = np.empty((N + 1, d))
        cur = pts[-1]
        for k in range(N + 1):
            cur = sys.map_eval(cur)
            fwd[k] = cur
    else:
        bwd, fwd = extension
        bwd = np.asarray(bwd, dtype=float).reshape(-1, d)
        fwd = np.asarray(fwd, dtype=float).reshape(-1, d)
    ext = np.vstack([bwd, pts, fwd])
    off = bwd.shape[0]
    prov = splitting or sys.known_splitting
    if prov is not None:
        U, S = [], []
        for p in ext:
            Eu, Es = prov(p)
            U.append(_orth(Eu))
            S.append(_orth(Es))
    else:
        U, S = _numeric_splittings(sys, ext, du)
    D = np.asarray(sys.deriv_eval(ext))
    Linv = np.empty((n + 1, d, d))
    for i in range(n + 1):
        J = off + i
        if metric == "adapted":
            Gu = np.eye(du)
            M = np.eye(du)
            for m in range(1, min(N, J) + 1):
                C = U[J - m + 1].T @ D[J - m] @ U[J - m]
                M = np.linalg.solve(C, M)
                Gu += np.exp(2 * m * lam1) * (M.T @ M)
            Gs = np.eye(d - du)
            M = np.eye(d - du)
            for m in range(1, min(N, len(ext) - 1 - J) + 1):
                C = S[J + m].T @ D[J + m - 1] @ S[J + m - 1]
                M = C @ M
                Gs += np.exp(2 * m * lam1) * (M.T @ M)
            Linv[i] = np.hstack([U[J] @ _sym_inv_sqrt(Gu), S[J] @ _sym_inv_sqrt(Gs)])
        elif metric == "euclidean":
            Linv[i] = np.hstack([U[J], S[J]])
        else:
            raise ValueError("metric must be 'adapted' or 'euclidean'")
    L = np.linalg.inv(Linv)
    Lam_u = np.empty((n, du, du))
    Lam_s = np.empty((n, d - du, d - du))
    for i in range(n):
        B = L[i + 1] @ D[off + i] @ Linv[i]
        Lam_u[i] = B[:du, :du]
        Lam_s[i] = B[du:, du:]
    charts = ChartSequence(sys=sys, points=pts, Linv=Linv, L=L, du=du,
                           radii=np.full(n + 1, r_max), lam1=lam1, delta1=delta1,
                           delta2=delta2, Lam_u=Lam_u, Lam_s=Lam_s, metric=metric)
    _fit_radii_and_constants(charts, r_max, n_samples)
    rep = verify_charts(charts, n_samples=n_samples)
    charts.report = rep
    if strict and not rep["pass"]:
        raise ConditionsViolated(f"chart condition {rep['failed_condition']} fails at step "
                                 f"{rep['failed_step']}", **{k: rep[k] for k in
                                                             ("failed_condition", "failed_step")})
    return charts


def _dg_ok(charts, i, r, n_samples):
    W = charts.sample_ball(i, r, n_samples)
    nrm = _opnorm(charts.DG(i, W)).max()
    if charts.delta2 == 0.0:
        return nrm <= 1e-12, nrm
    return nrm < charts.delta2, nrm


def _fit_radii_and_constants(charts, r_max, n_samples):
    n = charts.n_steps
    rstar = np.empty(max(n, 1))
    for i in range(n):
        ok, _ = _dg_ok(charts, i, r_max, n_samples)
        if ok:
            rstar[i] = r_max
            continue
        lo, hi = np.log(r_max) - 14.0, np.log(r_max)
        if not _dg_ok(charts, i, np.exp(lo), n_samples)[0]:
            rstar[i] = 0.0
            continue
        for _ in range(18):
            mid = 0.5 * (lo + hi)
            if _dg_ok(charts, i, np.exp(mid), n_samples)[0]:
                lo = mid
            else:
                hi = mid
        rstar[i] = np.exp(lo)
    if n == 0:
        rstar[0] = r_max
    idx = np.arange(n + 1)
    rs = np.append(rstar[:n], rstar[n - 1] if n > 0 else r_max)
    # r_i = min_j r*_j e^{δ₁|i−j|} keeps neighbouring ratios within e^{±δ₁}
    charts.radii = np.min(rs[None, :] * np.exp(charts.delta1 * np.abs(idx[:, None] - idx[None, :])),
                          axis=1)
    ell = np.zeros(n + 1)
    lp = np.zeros(n + 1)
    rng = np.random.default_rng(7)
    for i in range(n):
        r = charts.radii[i]
        W = charts.sample_ball(i, r, n_samples)
        W2 = W + rng.uniform(-r, r, size=W.shape) * 0.1
        dG = _opnorm(charts.DG(i, W) - charts.DG(i, W2))
        dist = np.linalg.norm(W - W2, axis=1)
        ell[i] = 1.5 * float(np.max(dG / np.maximum(dist, 1e-300))) + 1e-12
        lp[i] = 1.01 * float(_opnorm(charts.Dg(i, W)).max())
    ell[n] = ell[n - 1] if n > 0 else 0.0
    lp[n] = lp[n - 1] if n > 0 else 0.0
    sm = np.exp(-charts.delta1 * np.abs(idx[:, None] - idx[None, :]))
    charts.ell = np.max(ell[None, :] * sm, axis=1) * (1 + 1e-9)
    charts.lprime = np.max(lp[None, :] * sm, axis=1)


def verify_charts(charts: ChartSequence, n_samples: int = 64) -> dict:
    """Numerical check of conditions (I)–(IV); returns a report."""
    n = charts.n_steps
    bound = np.exp(-charts.lam1) * (1 + 1e-10)
    rows = []
    failed = (None, None)
    for i in range(n):
        inv_u = float(_opnorm(np.linalg.inv(charts.Lam_u[i])))
        lam_s = float(_opnorm(charts.Lam_s[i]))
        r, r1 = charts.radii[i], charts.radii[i + 1]
        G0 = float(np.linalg.norm(charts.G(i, np.zeros((1, charts.sys.dim)))))
        ok_dg, dgn = _dg_ok(charts, i, r, n_samples)
        ok_I = inv_u <= bound and lam_s <= bound
        ok_II = (G0 < charts.delta2 * r1 or (charts.delta2 == 0 and G0 <= 1e-12)) and ok_dg and r > 1e-12
        W = charts.sample_ball(i, r, n_samples)
        rng = np.random.default_rng(11 + i)
        W2 = W + rng.uniform(-r, r, size=W.shape) * 0.1
        lip = float(np.max(_opnorm(charts.DG(i, W) - charts.DG(i, W2))
                           / np.maximum(np.linalg.norm(W - W2, axis=1), 1e-300)))
        ok_III = lip < charts.ell[i] + 1e-15 and (
            charts.ell[i + 1] * np.exp(-charts.delta1) <= charts.ell[i] * (1 + 1e-9)
            <= charts.ell[i + 1] * np.exp(charts.delta1) * (1 + 1e-8))
        dgn_full = float(_opnorm(charts.Dg(i, W)).max())
        ok_IV = dgn_full <= charts.lprime[i] * (1 + 1e-12)
        rows.append({"step": i, "inv_Lam_u": inv_u, "Lam_s": lam_s, "G0": G0, "DG": float(dgn),
                     "lip_DG": lip, "Dg": dgn_full, "radius": float(r),
                     "I": bool(ok_I), "II": bool(ok_II), "III": bool(ok_III), "IV": bool(ok_IV)})
        if failed[0] is None:
            for name, ok in (("I", ok_I), ("II", ok_II), ("III", ok_III), ("IV", ok_IV)):
                if not ok:
                    failed = (name, i)
                    break
    return {
        "pass": failed[0] is None,
        "failed_condition": failed[0],
        "failed_step": failed[1],
        "measured_delta2": max((row["DG"] for row in rows), default=0.0),
        "steps": rows,
    }


# ---------------------------------------------------------------- patches


@dataclass
class GraphPatch:
    """Graph over a box in one chart factor, sampled on a tensor grid.

    ``kind='u'`` stores h: Ẽᵘ → Ẽˢ, ``kind='s'`` stores h: Ẽˢ → Ẽᵘ.
    """

    index: int
    radius: float
    axes: list
    values: np.ndarray
    derivs: np.ndarray
    kind: str = "u"
    evaluator: Optional[object] = None
    certificate: float = 0.0

    @property
    def base_dim(self):
        return len(self.axes)

    @property
    def nodes(self):
        mesh = np.meshgrid(*self.axes, indexing="ij")
        return np.stack([m.ravel() for m in mesh], axis=1)

    def flat_values(self):
        return self.values.reshape(-1, self.values.shape[-1])

    def flat_derivs(self):
        return self.derivs.reshape((-1,) + self.derivs.shape[-2:])

    def _interp(self, data, X):
        f = RegularGridInterpolator(self.axes, data, method="linear", bounds_error=False,
                                    fill_value=None)
        return f(np.atleast_2d(X))

    def __call__(self, X):
        return self._interp(self.values, X)

    def deriv(self, X):
        shp = self.derivs.shape
        flat = self.derivs.reshape(shp[: self.base_dim] + (-1,))
        out = self._interp(flat, X)
        return out.reshape((-1,) + shp[self.base_dim:])

    def lip_estimate(self):
        dnorm = float(_opnorm(self.flat_derivs()).max())
        fd = 0.0
        for ax in range(self.base_dim):
            dv = np.diff(self.values, axis=ax)
            h = np.diff(self.axes[ax])
            shape = [1] * self.values.ndim
            shape[ax] = -1
            fd = max(fd, float(np.max(np.linalg.norm(dv / h.reshape(shape), axis=-1))))
        return max(dnorm, fd)

    def class_report(self):
        v0 = float(np.linalg.norm(self(np.zeros((1, self.base_dim)))[0]))
        lip = self.lip_estimate()
        return {"v0": v0, "lip": lip, "in_class": bool(v0 <= 0.5 * self.radius and lip <= 0.1)}


def _grid_axes(r, k, n=GRID_POINTS):
    return [np.linspace(-r, r, n) for _ in range(k)]


def make_patch(charts, index, values_fn, radius=None, kind="u", n=GRID_POINTS):
    """Tabulate a graph (function returning values and derivatives)."""
    du, ds = charts.du, charts.ds
    k = du if kind == "u" else ds
    o = ds if kind == "u" else du
    r = charts.radii[index] if radius is None else radius
    axes = _grid_axes(r, k, n)
    mesh = np.meshgrid(*axes, indexing="ij")
    X = np.stack([m.ravel() for m in mesh], axis=1)
    vals, ders = values_fn(X)
    shape = tuple(len(a) for a in axes)
    return GraphPatch(index, float(r), axes, np.asarray(vals).reshape(shape + (o,)),
                      np.asarray(ders).reshape(shape + (o, k)), kind)


def affine_patch(charts, index, c, A=None, radius=None):
    """v(ξ) = c + Aξ as an unstable-type patch."""
    ds, du = charts.ds, charts.du
    c = np.broadcast_to(np.asarray(c, dtype=float), (ds,))
    A = np.zeros((ds, du)) if A is None else np.asarray(A, dtype=float).reshape(ds, du)

    def fn(X):
        return c + X @ A.T, np.broadcast_to(A, (X.shape[0], ds, du))

    return make_patch(charts, index, fn, radius)


def random_patch(charts, index, rng, radius=None, lip=0.08, offset=0.4):
    """Random member of the class: |v(0)| ≤ offset·r, Lip ≤ lip."""
    ds, du = charts.ds, charts.du
    r = charts.radii[index] if radius is None else radius
    c = rng.uniform(-1, 1, ds)
    c *= offset * r * rng.uniform(0.2, 1.0) / max(np.linalg.norm(c), 1e-300)
    A = rng.uniform(-1, 1, (ds, du))
    A *= 0.5 * lip / max(_opnorm(A), 1e-300)
    freq = rng.uniform(0.5, 2.0, du) * np.pi / r
    amp = rng.uniform(-1, 1, ds)
    amp *= 0.4 * lip / max(np.linalg.norm(amp) * np.linalg.norm(freq), 1e-300)

    def fn(X):
        ph = X @ freq
        vals = c + X @ A.T + np.sin(ph)[:, None] * amp
        ders = A[None] + (np.cos(ph)[:, None, None] * amp[None, :, None]) * freq[None, None, :]
        return vals, ders

    return make_patch(charts, index, fn, r)


def graph_transform_step(charts: ChartSequence, i: int, v: GraphPatch,
                         check_class: bool = True, check_expansion: bool = True) -> GraphPatch:
    """v′ = Tᵢ(v): the graph of gᵢ(graph v) over the grid of chart i+1."""
    du, ds = charts.du, charts.ds
    Lu_inv = np.linalg.inv(charts.Lam_u[i])
    r1 = charts.radii[i + 1]
    axes = _grid_axes(r1, du, len(v.axes[0]))
    mesh = np.meshgrid(*axes, indexing="ij")
    T = np.stack([m.ravel() for m in mesh], axis=1)
    xi = T @ Lu_inv.T
    for it in range(PICARD_CAP):
        W = np.hstack([xi, v(xi)])
        new = (T - charts.G(i, W)[:, :du]) @ Lu_inv.T
        delta = float(np.max(np.abs(new - xi)))
        xi = new
        if not np.all(np.isfinite(xi)):
            break
        if delta < PICARD_TOL:
            break
    else:
        raise FixedPointDiverged(f"Picard iteration did not settle at step {i}", residual=delta)
    if not np.all(np.isfinite(xi)) or delta >= PICARD_TOL:
        raise FixedPointDiverged(f"Picard iteration diverged at step {i}")
    W = np.hstack([xi, v(xi)])
    gw = charts.g(i, W)
    vals = gw[:, du:]
    Dv = v.deriv(xi)
    Dg = charts.Dg(i, W)
    top = Dg[:, :du, :du] + Dg[:, :du, du:] @ Dv
    bot = Dg[:, du:, :du] + Dg[:, du:, du:] @ Dv
    ders = bot @ np.linalg.inv(top)
    shape = tuple(len(a) for a in axes)
    out = GraphPatch(i + 1, float(r1), axes, vals.reshape(shape + (ds,)),
                     ders.reshape(shape + (ds, du)), "u")
    if check_expansion:
        lo = np.exp(charts.lam1) - 1.1 * charts.delta2
        pu = gw[:, :du]
        a, b = pu[:-1], pu[1:]
        num = np.linalg.norm(b - a, axis=1)
        den = np.linalg.norm(xi[1:] - xi[:-1], axis=1)
        ok = num >= lo * den * (1 - 1e-9)
        out.certificate = float(np.min(num / np.maximum(den, 1e-300)))
        if not np.all(ok):
            raise LeftClass(f"expansion estimate fails at step {i}", ratio=out.certificate)
    if check_class:
        rep = out.class_report()
        if not rep["in_class"]:
            raise LeftClass(f"image graph leaves the class at step {i + 1}", **rep)
    return out


def c0_distance(v1: GraphPatch, v2: GraphPatch) -> float:
    return float(np.max(np.linalg.norm(v1.flat_values() - v2.flat_values(), axis=-1)))


def c1_distance(v1: GraphPatch, v2: GraphPatch) -> float:
    return float(np.max(_opnorm(v1.flat_derivs() - v2.flat_derivs())))


def _decay_exponent(dists):
    d = np.asarray(dists, dtype=float)
    k = np.arange(1, d.size + 1)
    sel = d > FIT_FLOOR
    if np.sum(sel) < 2:
        return float("inf")
    slope = np.polyfit(k[sel], np.log(d[sel]), 1)[0]
    return float(-slope)


def convergence_diagnostics(charts: ChartSequence, v1: GraphPatch, v2: GraphPatch, n: int,
                            fit_tolerance: float = 0.05, inclination_graph=None) -> dict:
    """Distances ‖T₀ᵏv¹ − T₀ᵏv²‖ in C⁰ and C¹ for k = 1..n and decay fits."""
    a, b = v1, v2
    rows = []
    for k in range(n):
        a = graph_transform_step(charts, k, a, check_class=False, check_expansion=False)
        b = graph_transform_step(charts, k, b, check_class=False, check_expansion=False)
        rows.append((k + 1, c0_distance(a, b), c1_distance(a, b)))
    rows = np.array(rows)
    e0 = _decay_exponent(rows[:, 1])
    e1 = _decay_exponent(rows[:, 2])
    need0 = charts.lam1 - 2 * charts.delta2 - fit_tolerance
    need1 = 0.9 * charts.lam1 - fit_tolerance
    out = {
        "table": rows,
        "c0_exponent": e0,
        "c1_exponent": e1,
        "c0_required": need0,
        "c1_required": need1,
        "pass": bool(e0 >= need0 and e1 >= need1),
    }
    if inclination_graph is not None:
        w = inclination_graph
        sups = []
        for k in range(n):
            w = graph_transform_step(charts, k, w, check_class=False, check_expansion=False)
        D = _opnorm(w.flat_derivs())
        R = np.max(np.abs(w.nodes), axis=1)
        for j in range(5):
            rad = w.radius * 2.0 ** (-j)
            sups.append(float(D[R <= rad + 1e-15].max()))
        out["inclination_sups"] = sups
    return out


# --------------------------------------------------- exact local manifolds


class LocalManifold:
    """Pointwise evaluation of iterated graph transforms by a path sweep.

    Unstable type: the graph at chart ``stop`` obtained from ``seed`` at
    chart ``start`` after stop−start transforms. Stable type: the graph at
    chart ``start`` determined by the maps gᵢ, start ≤ i < stop, with the
    zero graph imposed at ``stop``. Values are exact up to the sweep
    tolerance; derivatives follow the chain rule along each path.
    """

    def __init__(self, charts: ChartSequence, kind: str, start: int = 0,
                 stop: Optional[int] = None, seed: Optional[Callable] = None,
                 tol: float = 1e-13, max_sweeps: int = 200):
        self.charts = charts
        self.kind = kind
        self.start = start
        self.stop = charts.n_steps if stop is None else stop
        self.seed = seed
        self.tol = tol
        self.max_sweeps = max_sweeps
        self.anchor = self.stop if kind == "u" else self.start

    def _seed(self, X):
        o = self.charts.ds if self.kind == "u" else self.charts.du
        k = X.shape[1]
        if self.seed is None:
            return np.zeros((X.shape[0], o)), np.zeros((X.shape[0], o, k))
        return self.seed(X)

    def evaluate(self, X, return_paths=False):
        c = self.charts
        du = c.du
        X = np.atleast_2d(np.asarray(X, dtype=float))
        m = X.shape[0]
        n = self.stop - self.start
        idx = list(range(self.start, self.stop))
        Luinv = [np.linalg.inv(c.Lam_u[i]) for i in idx]
        xi = np.zeros((n + 1, m, du))
        eta = np.zeros((n + 1, m, c.ds))
        scale = max(float(np.max(np.abs(X))), 1e-300)
        if self.kind == "u":
            xi[n] = X
            for k in range(n - 1, -1, -1):
                xi[k] = xi[k + 1] @ Luinv[k].T
        else:
            eta[0] = X
        for sweep in range(self.max_sweeps):
            old_x, old_e = xi.copy(), eta.copy()
            if self.kind == "u":
                eta[0] = self._seed(xi[0])[0]
            for k in range(n):
                W = np.concatenate([xi[k], eta[k]], axis=1)
                eta[k + 1] = c.g(idx[k], W)[:, du:]
            if self.kind == "s":
                xi[n] = self._seed(eta[n])[0]
            for k in range(n - 1, -1, -1):
                W = np.concatenate([xi[k], eta[k]], axis=1)
                xi[k] = (xi[k + 1] - c.G(idx[k], W)[:, :du]) @ Luinv[k].T
            if self.kind == "u":
                xi[n] = X
            change = max(float(np.max(np.abs(xi - old_x))), float(np.max(np.abs(eta - old_e))))
            if not np.isfinite(change):
                raise NotConverged("path sweep diverged")
            if change <= self.tol * max(scale, c.radii[self.anchor]):
                break
        else:
            raise NotConverged(f"path sweep did not converge (change {change:.2e})")
        if self.kind == "u":
            D = self._seed(xi[0])[1]
            for k in range(n):
                Dg = c.Dg(idx[k], np.concatenate([xi[k], eta[k]], axis=1))
                top = Dg[:, :du, :du] + Dg[:, :du, du:] @ D
                bot = Dg[:, du:, :du] + Dg[:, du:, du:] @ D
                D = bot @ np.linalg.inv(top)
            vals = eta[n]
        else:
            D = self._seed(eta[n])[1]
            for k in range(n - 1, -1, -1):
                Dg = c.Dg(idx[k], np.concatenate([xi[k], eta[k]], axis=1))
                A = Dg[:, :du, :du] - D @ Dg[:, du:, :du]
                B = D @ Dg[:, du:, du:] - Dg[:, :du, du:]
                D = np.linalg.solve(A, B)
            vals = xi[0]
        if return_paths:
            return vals, D, (xi, eta)
        return vals, D

    def chart_points(self, X):
        """Full chart coordinates (ξ, η) of graph points over base coords X."""
        X = np.atleast_2d(np.asarray(X, dtype=float))
        vals, _ = self.evaluate(X)
        if self.kind == "u":
            return np.hstack([X, vals])
        return np.hstack([vals, X])

    def embed(self, X):
        return self.charts.embed(self.anchor, self.chart_points(X))

    def patch(self, radius=None, n=GRID_POINTS):
        c = self.charts
        r = c.radii[self.anchor] if radius is None else radius
        p = make_patch(c, self.anchor, self.evaluate, r, kind=self.kind, n=n)
        p.evaluator = self
        return p


def _default_lambda(sys):
    return float(sys.metadata.get("chart_lambda", 0.5))


def unstable_manifold(sys: SystemSpec, x, depth: int = 40, radius: Optional[float] = None,
                      lam1: Optional[float] = None, delta2: float = 0.05,
                      metric: str = "adapted", splitting=None, check_depth: int = 5,
                      tol: float = 1e-6, r_max: float = 0.05) -> GraphPatch:
    """Local unstable manifold at x as a graph over Ẽᵘ of the anchor chart."""
    lam1 = _default_lambda(sys) if lam1 is None else lam1
    bwd = inverse_on_attractor(sys, x, depth + check_depth)
    charts = build_charts(sys, bwd, splitting=splitting, lam1=lam1, delta2=delta2,
                          metric=metric, r_max=r_max)
    n_all = charts.n_steps
    r = charts.radii[n_all] if radius is None else radius
    deep = LocalManifold(charts, "u", start=0, stop=n_all)
    shallow = LocalManifold(charts, "u", start=check_depth, stop=n_all)
    p_deep = deep.patch(r)
    p_sh = shallow.patch(r)
    cert = max(c0_distance(p_deep, p_sh), c1_distance(p_deep, p_sh))
    if cert >= tol:
        raise NotConverged(f"C¹ change {cert:.2e} between depths", certificate=cert)
    p_sh.certificate = cert
    p_sh.evaluator = shallow
    return p_sh


def stable_manifold(sys: SystemSpec, x, depth: int = 40, radius: Optional[float] = None,
                    lam1: Optional[float] = None, delta2: float = 0.05,
                    metric: str = "adapted", splitting=None, check_depth: int = 5,
                    tol: float = 1e-6, r_max: float = 0.05) -> GraphPatch:
    """Local stable manifold at x as a graph over Ẽˢ of the anchor chart."""
    lam1 = _default_lambda(sys) if lam1 is None else lam1
    fwd = np.empty((depth + check_depth + 1, sys.dim))
    fwd[0] = x
    for k in range(depth + check_depth):
        fwd[k + 1] = sys.map_eval(fwd[k])
    charts = build_charts(sys, fwd, splitting=splitting, lam1=lam1, delta2=delta2,
                          metric=metric, r_max=r_max)
    r = charts.radii[0] if radius is None else radius
    deep = LocalManifold(charts, "s", start=0, stop=charts.n_steps)
    shallow = LocalManifold(charts, "s", start=0, stop=depth)
    p_deep = deep.patch(r)
    p_sh = shallow.patch(r)
    cert = max(c0_distance(p_deep, p_sh), c1_distance(p_deep, p_sh))
    if cert >= tol:
        raise NotConverged(f"C¹ change {cert:.2e} between depths", certificate=cert)
    p_deep.certificate = cert
    return p_deep


def stable_contraction_check(charts: ChartSequence, patch: GraphPatch, n_pairs: int = 20,
                             seed: int = 0) -> float:
    """Largest observed |πˢg(x) − πˢg(y)| / |πˢx − πˢy| over pairs on the patch."""
    rng = np.random.default_rng(seed)
    ev = patch.evaluator
    i = ev.start
    E = rng.uniform(-patch.radius, patch.radius, size=(2 * n_pairs, charts.ds))
    W = ev.chart_points(E)
    gw = charts.g(i, W)[:, charts.du:]
    a, b = slice(0, n_pairs), slice(n_pairs, 2 * n_pairs)
    num = np.linalg.norm(gw[a] - gw[b], axis=1)
    den = np.linalg.norm(E[a] - E[b], axis=1)
    return float(np.max(num / den))


def finite_determination_check(charts_a: ChartSequence, charts_b: ChartSequence,
                               N_values=(5, 10, 15, 20), radius: Optional[float] = None,
                               lam_fit: Optional[float] = None, fit_slack: float = 0.05) -> dict:
    """C¹ distance of the stable graphs at chart 0 for two chart sequences.

    ``charts_b`` may be None, in which case it is ``charts_a`` with the
    connecting maps replaced by their linear parts from index N on.
    """
    rows = []
    for N in N_values:
        cb = charts_a.with_linear_tail(N) if charts_b is None else charts_b
        r = charts_a.radii[0] if radius is None else radius
        pa = LocalManifold(charts_a, "s", 0, charts_a.n_steps).patch(r)
        pb = LocalManifold(cb, "s", 0, cb.n_steps).patch(r)
        rows.append((N, max(c0_distance(pa, pb), c1_distance(pa, pb))))
    rows = np.array(rows, dtype=float)
    lam = charts_a.lam1 if lam_fit is None else lam_fit
    sel = rows[:, 1] > FIT_FLOOR
    if np.sum(sel) >= 2:
        rate = float(-np.polyfit(rows[sel, 0], np.log(rows[sel, 1]), 1)[0])
    else:
        rate = float("inf")
    return {"table": rows, "rate": rate, "required": 0.9 * lam - fit_slack,
            "pass": bool(rate >= 0.9 * lam - fit_slack)}
