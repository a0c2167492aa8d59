"""Bracket, stable holonomy between unstable discs, and distortion bounds."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .errors import (ChartConditionsViolated, InsufficientPairs, KBudgetExceeded,
                     NoIntersection, TooFar)
from .graph_transform import ChartSequence, GraphPatch, LocalManifold, unstable_manifold
from .srb import UnstableDisc, _backward_points, _frames_along
from .systems import SystemSpec

SLIDE_TOL = 1e-13


@dataclass(frozen=True)
class BracketConfig:
    eps: float = 0.05
    delta: float = 0.05
    tol: float = 1e-12
    backward_depth: int = 30
    forward_steps: Optional[int] = None
    c_lip: float = 1.0 / 40.0


def _forward_steps(sys, scale, forward_steps=None):
    if forward_steps is not None:
        return int(forward_steps)
    c = float(sys.metadata.get("transverse_contraction", 0.5))
    c = min(max(c, 1e-3), 0.95)
    return int(np.clip(np.ceil(np.log(SLIDE_TOL / max(scale, 1e-300)) / np.log(c)), 4, 80))


def _unstable_frames_forward(sys, X, n, settle=40):
    """Orbit X..fⁿX and Eᵘ frames along it, vectorized over rows of X."""
    X = np.atleast_2d(X)
    m, d = X.shape
    du = sys.unstable_dim
    B = _backward_points(sys, X, settle)
    U = _frames_along(sys, B, du)[:, 0]
    orbit = np.empty((m, n + 1, d))
    frames = np.empty((m, n + 1, d, du))
    orbit[:, 0] = X
    frames[:, 0] = U
    cur = X.copy()
    for k in range(1, n + 1):
        D = np.asarray(sys.deriv_eval(cur))
        U = np.linalg.qr(D @ U)[0]
        cur = np.asarray(sys.map_eval(cur))
        orbit[:, k] = cur
        frames[:, k] = U
    return orbit, frames


def slide_to_stable(sys: SystemSpec, targets, curve: Callable, s0, n: int,
                    stride: int = 4, newton: int = 8):
    """Parameters s with curve(s) on the local stable leaf of each target.

    ``curve`` maps (m, du) parameters to points (m, d) and tangents
    (m, d, du). The unstable component of fⁿ(curve(s)) − fⁿ(target) is
    driven to zero by Newton with tangents transported by Df, raising n in
    strides so each solve starts in its linear regime. Returns (s, residual)
    with the residual pulled back by the accumulated expansion.
    """
    T = np.atleast_2d(np.asarray(targets, dtype=float))
    s = np.atleast_2d(np.asarray(s0, dtype=float)).copy()
    m = T.shape[0]
    du = sys.unstable_dim
    orbit, frames = _unstable_frames_forward(sys, T, n)
    res = np.full(m, np.inf)

    def F(svals, k):
        Q, Tq = curve(svals)
        for _ in range(k):
            Tq = np.asarray(sys.deriv_eval(Q)) @ Tq
            Q = np.asarray(sys.map_eval(Q))
        disp = sys.displacement(orbit[:, k], Q)
        U = frames[:, k]
        return (np.einsum("mdu,md->mu", U, disp),
                np.swapaxes(U, 1, 2) @ Tq)

    ks = list(range(0, n + 1, stride))
    if ks[-1] != n:
        ks.append(n)
    for k in ks:
        for _ in range(newton):
            f0, J = F(s, k)
            step = np.linalg.solve(J, f0[..., None])[..., 0]
            s = s - step
            if np.max(np.abs(step)) < 1e-15 * max(1e-3, float(np.max(np.abs(s)))):
                break
        f0, J = F(s, k)
        gain = np.abs(np.linalg.det(J)) ** (1.0 / du)
        res = np.linalg.norm(f0, axis=1) / np.maximum(gain, 1e-300)
    return s, res


def patch_curve(patch: GraphPatch) -> Callable:
    """Points and tangents of an unstable patch over its base coordinates."""
    ev = patch.evaluator
    c = ev.charts
    Linv = c.Linv[ev.anchor]
    du = c.du

    def curve(S):
        S = np.atleast_2d(np.asarray(S, dtype=float))
        vals, D = ev.evaluate(S)
        Tq = Linv[:, :du][None] + Linv[:, du:][None] @ D
        return c.embed(ev.anchor, np.hstack([S, vals])), Tq

    return curve


def _leaf_curve(sys, y, reach, max_push=12):
    """Curve on Wᵘ(y) through y reaching at least ``reach`` on both sides.

    The local patch at y is short (its chart radius is measured in the
    adapted norm); when needed the patch at y₋ₖ is pushed forward k steps,
    which stretches it along the same leaf. Returns (curve, radius).
    """
    k = 0
    while True:
        anchor = y if k == 0 else sys.backward_orbit(y[None, :], k)[0, k]
        patch = unstable_manifold(sys, anchor)
        base = patch_curve(patch)
        ends = np.array([[-patch.radius], [patch.radius]]) if patch.base_dim == 1 else \
            np.vstack([np.diag(np.full(patch.base_dim, r)) for r in (-patch.radius,
                                                                      patch.radius)])
        P = base(ends)[0]
        for _ in range(k):
            P = sys.map_eval(P)
        got = float(np.min(sys.distance(y, P)))
        if got >= reach or k >= max_push or sys.backward_orbit is None:
            break
        k += max(1, int(np.ceil(np.log(reach / max(got, 1e-12)) / np.log(2.0))))
        k = min(k, max_push)
    if k == 0:
        return base, patch.radius

    def curve(S, base=base, k=k):
        Q, Tq = base(S)
        for _ in range(k):
            Tq = np.asarray(sys.deriv_eval(Q)) @ Tq
            Q = np.asarray(sys.map_eval(Q))
        return Q, Tq

    return curve, patch.radius


def bracket(sys: SystemSpec, x, y, cfg: BracketConfig = BracketConfig(),
            return_report: bool = False, unstable_patch: Optional[GraphPatch] = None):
    """[x, y] = Wˢ_ε(x) ∩ Wᵘ_ε(y).

    Wᵘ_ε(y) is the path-sweep graph at y; the point on it whose forward
    orbit tracks x is found by :func:`slide_to_stable`.
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    dist = float(sys.distance(x, y))
    if dist >= cfg.delta:
        raise TooFar(f"|x−y| = {dist:.3g} ≥ δ = {cfg.delta}", distance=dist)
    if dist == 0.0:
        out = x.copy()
        return (out, {"residual_s": 0.0, "residual_u": 0.0, "param": [0.0] * sys.unstable_dim,
                      "steps": 0}) if return_report else out
    if unstable_patch is not None:
        curve, radius = patch_curve(unstable_patch), unstable_patch.radius
    else:
        curve, radius = _leaf_curve(sys, y, 2.0 * dist)
    n = _forward_steps(sys, dist, cfg.forward_steps)
    s, res = slide_to_stable(sys, x[None, :], curve, np.zeros((1, sys.unstable_dim)), n)
    if not np.isfinite(res[0]) or np.max(np.abs(s)) > radius:
        raise NoIntersection("no transversal intersection inside the local patches")
    z = curve(s)[0][0]
    rep = {"residual_s": float(res[0]), "residual_u": 0.0, "param": s[0].tolist(), "steps": n}
    return (z, rep) if return_report else z


# ------------------------------------------------------------- expansivity


def _separation_step(sys, x, y, eps, K_max):
    fx, fy = np.asarray(x, float), np.asarray(y, float)
    fwd = None
    for k in range(1, K_max + 1):
        fx, fy = sys.map_eval(fx), sys.map_eval(fy)
        if sys.distance(fx, fy) > eps:
            fwd = k
            break
    B = _backward_points(sys, np.stack([x, y]), K_max)
    d = np.linalg.norm(sys.displacement(B[0], B[1]), axis=1)
    idx = np.flatnonzero(d[1:] > eps)
    bwd = int(idx[0]) + 1 if idx.size else None
    return fwd, bwd, d


def expansivity_check(sys: SystemSpec, pairs, eps: float, K_max: int = 60,
                      lam: Optional[float] = None, delta: Optional[float] = None) -> dict:
    """Least |k| with |fᵏx − fᵏy| > ε per pair, plus the converse closeness estimate."""
    lam = float(sys.metadata.get("chart_lambda", 0.5)) if lam is None else lam
    alpha = np.exp(-lam)
    delta = eps if delta is None else delta
    rows = []
    violations = 0
    for x, y in pairs:
        x = np.asarray(x, float)
        y = np.asarray(y, float)
        if sys.distance(x, y) == 0.0:
            rows.append({"identity": True, "k": None, "forward": None, "backward": None})
            continue
        fwd, bwd, _ = _separation_step(sys, x, y, eps, K_max)
        if fwd is None and bwd is None:
            raise KBudgetExceeded(f"pair did not separate within |k| ≤ {K_max}")
        cands = [v for v in (fwd, -bwd if bwd is not None else None) if v is not None]
        k = min(cands, key=abs)
        d0 = float(sys.distance(x, y))
        if d0 > eps:
            k = 0
        # closeness window: largest N with separation ≤ δ for all |k| ≤ N
        if d0 > delta:
            rows.append({"identity": False, "k": int(k), "forward": fwd, "backward": bwd,
                         "close_window": None, "alpha_N": None, "converse_ok": True})
            continue
        fd, bd, _ = _separation_step(sys, x, y, delta, K_max)
        N = min(v - 1 for v in (fd, bd) if v is not None) if (fd or bd) else K_max
        bound = alpha ** N
        ok = d0 < bound
        violations += (not ok)
        rows.append({"identity": False, "k": int(k), "forward": fwd, "backward": bwd,
                     "close_window": int(N), "alpha_N": float(bound), "converse_ok": bool(ok)})
    return {"pairs": rows, "violations": int(violations), "alpha": float(alpha),
            "identity_pairs": int(sum(r["identity"] for r in rows))}


# ---------------------------------------------------------------- holonomy


def disc_curve(sys: SystemSpec, disc: UnstableDisc) -> Callable:
    """Points and tangents of a disc by parameter (exact for patch discs)."""
    if disc.patch is not None and disc.patch.evaluator is not None:
        return patch_curve(disc.patch)
    t = disc.params[:, 0]
    order = np.argsort(t)
    t = t[order]
    P = disc.points[order]
    cols = []
    for j in range(sys.dim):
        c = P[:, j]
        cols.append(np.unwrap(c, period=1.0) if j in sys.angle_mask else c)
    C = np.stack(cols, axis=1)
    slope = np.diff(C, axis=0) / np.diff(t)[:, None]

    def curve(S):
        S = np.atleast_2d(S)[:, 0]
        pts = sys.wrap(np.stack([np.interp(S, t, C[:, j]) for j in range(sys.dim)], axis=1))
        seg = np.clip(np.searchsorted(t, S) - 1, 0, t.size - 2)
        return pts, slope[seg][:, :, None]

    return curve


@dataclass
class HolonomyReport:
    source_params: np.ndarray
    target_params: np.ndarray
    source_points: np.ndarray
    target_points: np.ndarray
    residuals: np.ndarray
    dropped: int = 0
    displacement_ok: bool = True
    max_contraction_ratio: float = 0.0
    cells: dict = field(default_factory=dict)

    def to_rows(self):
        return [tuple(map(float, np.concatenate([a, b, p, q]))) for a, b, p, q in
                zip(self.source_params, self.target_params, self.source_points,
                    self.target_points)]


def holonomy_map(sys: SystemSpec, D1: UnstableDisc, D2: UnstableDisc, base_params=None,
                 n_base: int = 2000, cfg: BracketConfig = BracketConfig(),
                 contraction_check_steps: int = 6) -> HolonomyReport:
    """Pairs (p, T(p)) with T(p) = Wˢ_loc(p) ∩ D₂ for base points p on D₁."""
    c1 = disc_curve(sys, D1)
    c2 = disc_curve(sys, D2)
    t1 = D1.params[:, 0]
    if base_params is None:
        lo, hi = float(t1.min()), float(t1.max())
        base_params = np.linspace(lo, hi, n_base + 2)[1:-1]
    S1 = np.asarray(base_params, dtype=float).reshape(-1, 1)
    P = c1(S1)[0]
    scale = float(np.max(sys.distance(D1.anchor, D2.points))) if D1.anchor is not None else 0.1
    n = _forward_steps(sys, max(scale, 1e-12), cfg.forward_steps)
    # initial guess: closest node of D₂ to each base point
    dmat = np.linalg.norm(sys.displacement(P[:, None, :], D2.points[None, :, :]), axis=2)
    s0 = D2.params[np.argmin(dmat, axis=1)]
    S2, res = slide_to_stable(sys, P, c2, s0, n)
    lo2, hi2 = float(D2.params[:, 0].min()), float(D2.params[:, 0].max())
    good = np.isfinite(res) & (S2[:, 0] >= lo2 - 1e-12) & (S2[:, 0] <= hi2 + 1e-12) \
        & (res < 1e-8)
    Q = c2(S2)[0]
    rep = HolonomyReport(S1[good], S2[good], P[good], Q[good], res[good],
                         dropped=int(np.sum(~good)))
    if np.any(good):
        # stable contraction of the displacement under f
        A, B = P[good], Q[good]
        d0 = np.maximum(np.linalg.norm(sys.displacement(A, B), axis=1), 1e-300)
        worst = 0.0
        rate = float(sys.metadata.get("transverse_contraction", 0.5))
        for k in range(1, contraction_check_steps + 1):
            A, B = sys.map_eval(A), sys.map_eval(B)
            dk = np.linalg.norm(sys.displacement(A, B), axis=1)
            worst = max(worst, float(np.max((dk / d0) ** (1.0 / k))))
        rep.max_contraction_ratio = worst
        rep.displacement_ok = bool(worst <= min(1.0, 1.5 * rate + 0.2))
    return rep


def _curve_arclength(sys, curve, params, refine: int = 8):
    """Arclength of a curve at sorted parameter values (refined polyline)."""
    t = np.asarray(params, dtype=float)
    fine = np.concatenate([np.linspace(a, b, refine, endpoint=False)
                           for a, b in zip(t[:-1], t[1:])] + [t[-1:]])
    P = curve(fine[:, None])[0]
    seg = np.linalg.norm(sys.displacement(P[:-1], P[1:]), axis=1)
    arc = np.concatenate([[0.0], np.cumsum(seg)])
    return arc[::refine]


def holonomy_jacobian(sys: SystemSpec, report: HolonomyReport, D1: UnstableDisc,
                      D2: UnstableDisc, cell_width: float, measure: str = "arclength",
                      min_pairs: int = 1000) -> dict:
    """Ratios of image-cell to source-cell measure along the matched pairs.

    ``measure='arclength'`` uses Euclidean arclength on each disc;
    ``measure='param'`` uses the discs' parameters and ``measure='angle'``
    the first angular coordinate.
    """
    n = report.source_params.shape[0]
    if n < min_pairs:
        raise InsufficientPairs(f"{n} matched pairs < {min_pairs}", pairs=n)
    order = np.argsort(report.source_params[:, 0])
    s1 = report.source_params[order, 0]
    s2 = report.target_params[order, 0]
    if measure == "arclength":
        a1 = _curve_arclength(sys, disc_curve(sys, D1), s1)
        o2 = np.argsort(s2)
        a2s = _curve_arclength(sys, disc_curve(sys, D2), s2[o2])
        a2 = np.empty_like(a2s)
        a2[o2] = a2s
    elif measure == "param":
        a1, a2 = s1 - s1[0], s2
    elif measure == "angle":
        if not sys.angle_mask:
            raise ValueError("measure 'angle' needs an angular coordinate")
        j = sys.angle_mask[0]
        P = report.source_points[order]
        Q = report.target_points[order]
        a1 = np.concatenate([[0.0], np.cumsum(np.abs(sys.displacement(P[:-1], P[1:])[:, j]))])
        a2 = np.concatenate([[0.0], np.cumsum(sys.displacement(Q[:-1], Q[1:])[:, j])])
    else:
        raise ValueError("measure must be 'arclength', 'param' or 'angle'")
    edges = np.arange(a1[0], a1[-1] + 1e-15, cell_width)
    if edges.size < 2:
        raise InsufficientPairs("cell width exceeds the matched range")
    # interpolate the matched position map at the cell edges
    b = np.interp(edges, a1, a2)
    ratios = np.abs(np.diff(b)) / np.diff(edges)
    C = float(max(ratios.max(), 1.0 / ratios.min()))
    return {"ratios": ratios, "C": C, "max_over_min": float(ratios.max() / ratios.min()),
            "cells": int(ratios.size), "cell_width": float(cell_width), "measure": measure}


# ------------------------------------------------------- Jacobian ratios


def _vol(T):
    return np.sqrt(np.abs(np.linalg.det(np.swapaxes(T, -1, -2) @ T)))


def _step_factors(charts, W0, T0, n):
    """Per-step volume factors of tangent frames transported along chart orbits."""
    W, T = W0.copy(), T0.copy()
    out = np.empty((W.shape[0], n))
    for k in range(n):
        D = charts.Dg(k, W)
        T1 = D @ T
        out[:, k] = _vol(T1) / _vol(T)
        W = charts.g(k, W)
        T = T1
    return out


def _graph_seed(v: GraphPatch):
    return lambda X: (v(X), v.deriv(X))


def jacobian_ratio_bounds(charts: ChartSequence, v, n: int, n_pairs: int = 64,
                          seed: int = 0, fit_floor: float = 1e-13) -> dict:
    """Distortion of |det Dgⁿ| on transported graph tangents.

    ``v`` is one graph (same-graph pairs, pulled back from chart n) or a
    pair of graphs (pairs on a common stable leaf, pushed forward from
    chart 0). Per-step factor ratios are fitted against the step index.
    """
    if charts.report and not charts.report.get("pass", True):
        raise ChartConditionsViolated("chart conditions (I)–(IV) are not met")
    if n > charts.n_steps:
        raise ValueError("n exceeds the chart sequence")
    du = charts.du
    rng = np.random.default_rng(seed)
    if isinstance(v, GraphPatch):
        ev = LocalManifold(charts, "u", start=0, stop=n, seed=_graph_seed(v))
        r = charts.radii[n]
        X = rng.uniform(-r, r, size=(2 * n_pairs, du))
        _, _, (xi, eta) = ev.evaluate(X, return_paths=True)
        W0 = np.concatenate([xi[0], eta[0]], axis=1)
        T0 = np.concatenate([np.broadcast_to(np.eye(du), (W0.shape[0], du, du)),
                             v.deriv(xi[0])], axis=1)
        fac = _step_factors(charts, W0, T0, n)
        a, b = fac[:n_pairs], fac[n_pairs:]
        # index by backward depth j = n − k: pairs converge as j grows
        per_step = np.abs(np.log(a / b))[:, ::-1]
        kind = "same-graph"
    else:
        v1, v2 = v
        r = charts.radii[0]
        tiny = r * np.exp(-1.2 * n * float(np.max(np.abs(np.log(
            np.abs(np.linalg.eigvals(charts.Lam_u[0]))))) + 1e-12))
        X = rng.uniform(-tiny, tiny, size=(n_pairs, du))
        W1 = np.concatenate([X, v1(X)], axis=1)

        def pts2(S):
            S = np.atleast_2d(S)
            return np.concatenate([S, v2(S)], axis=1)

        # partner on graph v2 whose forward chart orbit tracks W1
        eye = np.broadcast_to(np.eye(du), (n_pairs, du, du))
        S = X.copy()
        for _ in range(60):
            A, B = W1.copy(), pts2(S)
            Tb = np.concatenate([eye, v2.deriv(S)], axis=1)
            for k in range(n):
                Tb = charts.Dg(k, B) @ Tb
                A = charts.g(k, A)
                B = charts.g(k, B)
            step = np.linalg.solve(Tb[:, :du, :], (B - A)[:, :du, None])[..., 0]
            S = S - step
            if np.max(np.abs(step)) < 1e-15 * max(tiny, 1e-300):
                break
        W2 = pts2(S)
        T1 = np.concatenate([np.broadcast_to(np.eye(du), (n_pairs, du, du)), v1.deriv(X)], axis=1)
        T2 = np.concatenate([np.broadcast_to(np.eye(du), (n_pairs, du, du)), v2.deriv(S)], axis=1)
        a = _step_factors(charts, W1, T1, n)
        b = _step_factors(charts, W2, T2, n)
        per_step = np.abs(np.log(a / b))
        kind = "stable-leaf"
    cum = np.exp(np.sum(np.log(a / b), axis=1))
    C = float(max(cum.max(), 1.0 / cum.min()))
    worst = per_step.max(axis=0)
    k = np.arange(1, n + 1)
    sel = worst > fit_floor
    slope = float(np.polyfit(k[sel], np.log(worst[sel]), 1)[0]) if np.sum(sel) >= 3 else -np.inf
    return {
        "kind": kind,
        "ratios": cum,
        "C": C,
        "per_step_log_ratio": worst,
        "slope": slope,
        "required_slope": -0.9 * charts.lam1,
        "slope_ok": bool(slope <= -0.9 * charts.lam1),
    }
