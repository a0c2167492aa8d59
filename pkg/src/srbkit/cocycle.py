"""Lyapunov spectra, Oseledets subspaces, subspace gaps and adapted norms."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .errors import (DegenerateCocycle, DimensionMismatch, InsufficientPairs,
                     NotConverged, TailNotConverged)
from .systems import (SystemSpec, advance_batch, attractor_sample, inverse_on_attractor,
                      seed_rng_state)

CLUSTER_TOL = 0.02


@dataclass
class LyapunovSpectrum:
    entries: list  # [(rate, multiplicity)], strictly decreasing
    raw: np.ndarray  # unclustered exponents, decreasing

    @property
    def dim(self):
        return int(sum(m for _, m in self.entries))

    def flat(self):
        return np.repeat([e for e, _ in self.entries], [m for _, m in self.entries])


@dataclass
class Splitting:
    Eu_basis: np.ndarray
    Ecs_basis: Optional[np.ndarray] = None
    proj_u: Optional[np.ndarray] = None
    proj_cs: Optional[np.ndarray] = None
    Ec_basis: Optional[np.ndarray] = None
    certificate: float = 0.0


@dataclass
class AdaptedNorm:
    gram: np.ndarray
    K: float
    tail_estimate: float
    checks: dict = field(default_factory=dict)

    def norm(self, p):
        p = np.asarray(p, dtype=float)
        return np.sqrt(np.einsum("...i,ij,...j->...", p, self.gram, p))


def orthonormal(B):
    Q, _ = np.linalg.qr(np.asarray(B, dtype=float))
    return Q


def make_splitting(Eu, Ecs, certificate=0.0) -> Splitting:
    """Splitting with the oblique projectors of ℝᵈ = Eᵘ ⊕ Eᶜˢ."""
    Eu = orthonormal(Eu)
    Ecs = orthonormal(Ecs)
    P = np.hstack([Eu, Ecs])
    Pinv = np.linalg.inv(P)
    du = Eu.shape[1]
    proj_u = Eu @ Pinv[:du]
    return Splitting(Eu, Ecs, proj_u, np.eye(P.shape[0]) - proj_u, certificate=certificate)


def cluster_exponents(raw, tol=CLUSTER_TOL):
    """Merge sorted exponents closer than ``tol`` (single linkage)."""
    raw = np.sort(np.asarray(raw, dtype=float))[::-1]
    groups = [[raw[0]]]
    for v in raw[1:]:
        if groups[-1][-1] - v < tol:
            groups[-1].append(v)
        else:
            groups.append([v])
    return [(float(np.mean(g)), len(g)) for g in groups]


def statistics_orbit(sys: SystemSpec, x, n: int, seed: int = 0):
    """Orbit x₀..x_{n−1} for time averages (low bits refreshed if needed)."""
    pts = np.empty((n, sys.dim))
    cur = np.array(x, dtype=float)[None, :]
    st = seed_rng_state(seed, 1)
    for k in range(n):
        pts[k] = cur[0]
        cur = advance_batch(sys, cur, 1, rng_state=st)
    return pts


def lyapunov_spectrum(sys: SystemSpec, x, n: int = 10_000, reorth_every: int = 1,
                      burn_in: int = 100, seed: int = 0, cluster_tol: float = CLUSTER_TOL,
                      orbit=None) -> LyapunovSpectrum:
    """QR-cocycle exponents along the forward orbit of x."""
    if n < 100:
        raise ValueError("n >= 100 required")
    if orbit is None:
        orbit = statistics_orbit(sys, x, n + burn_in, seed=seed)
    D = np.asarray(sys.deriv_eval(orbit))
    d = sys.dim
    Q = np.eye(d)
    sums = np.zeros(d)
    acc = np.eye(d)
    count = 0
    for k in range(orbit.shape[0]):
        acc = D[k] @ acc
        count += 1
        if count < reorth_every and k != orbit.shape[0] - 1:
            continue
        Q, R = np.linalg.qr(acc @ Q)
        diag = np.abs(np.diag(R))
        if np.any(diag < 1e-300) or not np.all(np.isfinite(diag)):
            raise DegenerateCocycle(f"R diagonal underflow at step {k}")
        s = np.sign(np.diag(R))
        Q = Q * s
        if k >= burn_in:
            sums += np.log(diag)
        acc = np.eye(d)
        count = 0
    raw = np.sort(sums / (orbit.shape[0] - burn_in))[::-1]
    return LyapunovSpectrum(cluster_exponents(raw, cluster_tol), raw)


def _push_frame(mats, W):
    for M in mats:
        W, _ = np.linalg.qr(M @ W)
    return W


def unstable_subspace(sys: SystemSpec, bwd, du: Optional[int] = None, seed: int = 0,
                      tol: float = 1e-9) -> Splitting:
    """Eᵘ at the anchor by pushing a random frame forward along a backward orbit."""
    du = du or sys.unstable_dim
    pts = bwd.points
    n = pts.shape[0] - 1
    if n < 2:
        raise NotConverged("backward orbit too short")
    rng = np.random.default_rng(seed)
    W0 = np.linalg.qr(rng.standard_normal((sys.dim, du)))[0]
    D = np.asarray(sys.deriv_eval(pts[1:][::-1]))  # Df at x₋ₙ … x₋₁
    Wa = _push_frame(D, W0)
    Wb = _push_frame(D[1:], W0)
    gap = kato_gap(Wa, Wb)
    if gap > tol:
        raise NotConverged(f"unstable frame gap {gap:.2e} > {tol:.0e}", gap=gap)
    return Splitting(Eu_basis=Wa, certificate=float(gap))


def stable_subspace(sys: SystemSpec, x, n: int = 40, du: Optional[int] = None,
                    seed: int = 0, tol: float = 1e-9, orbit=None) -> Splitting:
    """Eᶜˢ at x as the annihilator of the adjoint-expanding coframe."""
    du = du or sys.unstable_dim
    if orbit is None:
        orbit = np.empty((n + 1, sys.dim))
        orbit[0] = x
        for k in range(n):
            orbit[k + 1] = sys.map_eval(orbit[k])
    D = np.asarray(sys.deriv_eval(orbit[:-1]))
    rng = np.random.default_rng(seed)
    W0 = np.linalg.qr(rng.standard_normal((sys.dim, du)))[0]
    DT = [M.T for M in D[::-1]]
    Wa = _push_frame(DT, W0)
    Wb = _push_frame(DT[1:], W0)
    gap = kato_gap(Wa, Wb)
    if gap > tol:
        raise NotConverged(f"stable coframe gap {gap:.2e} > {tol:.0e}", gap=gap)
    Q, _ = np.linalg.qr(Wa, mode="complete")
    Ecs = Q[:, du:]
    return Splitting(Eu_basis=np.zeros((sys.dim, 0)), Ecs_basis=Ecs, certificate=float(gap))


def kato_gap(E, F) -> float:
    """Gap between subspaces: max of the two sup–inf unit-sphere distances.

    For unit v ∈ E the nearest unit w ∈ F is the normalized projection, so
    the one-sided term is 2 sin(θ/2) with θ the largest principal angle
    (√2 when dim E > dim F).
    """
    E = np.asarray(E, dtype=float)
    F = np.asarray(F, dtype=float)
    if E.ndim == 1:
        E = E[:, None]
    if F.ndim == 1:
        F = F[:, None]
    if E.shape[0] != F.shape[0]:
        raise DimensionMismatch(f"ambient {E.shape[0]} vs {F.shape[0]}")
    if E.shape[1] == 0 or F.shape[1] == 0:
        raise ValueError("subspaces must be nonzero")
    QE, QF = orthonormal(E), orthonormal(F)

    def one_side(QA, QB):
        if QA.shape[1] > QB.shape[1]:
            return np.sqrt(2.0)
        # largest principal-angle sine, then 2 sin(θ/2) without cancellation
        sn = min(1.0, float(np.linalg.norm(QA - QB @ (QB.T @ QA), 2)))
        return np.sqrt(2.0) * sn / np.sqrt(1.0 + np.sqrt(1.0 - sn * sn))

    return float(max(one_side(QE, QF), one_side(QF, QE)))


# ----------------------------------------------------------- adapted norm


def _splitting_at(sys, x, splitting):
    prov = splitting or sys.known_splitting
    if prov is None:
        raise ValueError("a splitting provider is required")
    Eu, Es = prov(x)
    return orthonormal(Eu), orthonormal(Es)


def _adapted_blocks(sys, x, lam, N, splitting, bwd_points=None):
    """Gram blocks in (Eᵘ, Eˢ) coordinates plus their tail estimates."""
    x = np.asarray(x, dtype=float)
    if bwd_points is None:
        bwd_points = inverse_on_attractor(sys, x, N).points
    fwd = np.empty((N + 2, sys.dim))
    fwd[0] = x
    for k in range(N + 1):
        fwd[k + 1] = sys.map_eval(fwd[k])
    U = [_splitting_at(sys, p, splitting)[0] for p in bwd_points[: N + 1]]
    S = [_splitting_at(sys, p, splitting)[1] for p in fwd[: N + 2]]
    du, ds = U[0].shape[1], S[0].shape[1]
    # backward restricted inverses: Df(x₋ₖ) U_k = U_{k−1} C_k
    Gu = np.eye(du)
    M = np.eye(du)
    last_u = 1.0
    terms_u = [1.0]
    for k in range(1, N + 1):
        C = U[k - 1].T @ sys.deriv_eval(bwd_points[k]) @ U[k]
        M = np.linalg.solve(C, M)
        T = np.exp(2 * k * lam) * (M.T @ M)
        Gu += T
        last_u = float(np.linalg.norm(T, 2))
        terms_u.append(last_u)
    Gs = np.eye(ds)
    Mf = np.eye(ds)
    terms_s = [1.0]
    for k in range(1, N + 1):
        Dk = S[k].T @ sys.deriv_eval(fwd[k - 1]) @ S[k - 1]
        Mf = Dk @ Mf
        T = np.exp(2 * k * lam) * (Mf.T @ Mf)
        Gs += T
        terms_s.append(float(np.linalg.norm(T, 2)))
    tails = []
    for terms, G in ((terms_u, Gu), (terms_s, Gs)):
        # per-step ratio averaged over the last few terms; single steps fluctuate
        m = min(10, len(terms) - 1)
        r = (terms[-1] / terms[-1 - m]) ** (1.0 / m) if terms[-1 - m] > 0 else 0.0
        if r >= 1.0:
            raise TailNotConverged(f"series terms not decaying (ratio {r:.3f})", ratio=r)
        tails.append(terms[-1] * r / (1.0 - r) / float(np.linalg.norm(G, 2)))
    return U[0], S[0], Gu, Gs, max(tails)


def _assemble_gram(U, S, Gu, Gs):
    P = np.hstack([U, S])
    Pinv = np.linalg.inv(P)
    B = np.zeros((P.shape[1], P.shape[1]))
    du = U.shape[1]
    B[:du, :du] = Gu
    B[du:, du:] = Gs
    G = Pinv.T @ B @ Pinv
    return 0.5 * (G + G.T)


def lyapunov_norm(sys: SystemSpec, x, lam: float, delta0: float = 0.0, N: int = 60,
                  splitting=None, n_vectors: int = 100, seed: int = 0) -> AdaptedNorm:
    """Adapted inner product from truncated Lyapunov series at x.

    Also verifies one-step expansion on Eᵘ, contraction on Eˢ and the
    comparison (√3/3)|p| ≤ |p|' ≤ K|p| on random vectors.
    """
    x = np.asarray(x, dtype=float)
    bwd = inverse_on_attractor(sys, x, N + 1).points
    U, S, Gu, Gs, tail = _adapted_blocks(sys, bwd[0], lam, N, splitting, bwd[: N + 1])
    G = _assemble_gram(U, S, Gu, Gs)
    fx = sys.map_eval(bwd[0])
    bwd_f = np.vstack([fx[None, :], bwd[:N]])
    U1, S1, Gu1, Gs1, _ = _adapted_blocks(sys, fx, lam, N, splitting, bwd_f)
    G1 = _assemble_gram(U1, S1, Gu1, Gs1)
    rng = np.random.default_rng(seed)
    D = sys.deriv_eval(bwd[0])
    slack = np.exp(-2 * delta0)

    def qn(Gm, v):
        return float(np.sqrt(v @ Gm @ v))

    worst_u, worst_s = np.inf, 0.0
    for _ in range(n_vectors):
        a = rng.standard_normal(U.shape[1])
        u = U @ a
        worst_u = min(worst_u, qn(G1, D @ u) / qn(G, u))
        b = rng.standard_normal(S.shape[1])
        v = S @ b
        worst_s = max(worst_s, qn(G1, D @ v) / qn(G, v))
    lower_ok = True
    K = float(np.sqrt(np.linalg.eigvalsh(G).max()))
    for _ in range(n_vectors):
        p = rng.standard_normal(sys.dim)
        r = qn(G, p) / np.linalg.norm(p)
        lower_ok &= r >= np.sqrt(3) / 3 - 1e-12
        lower_ok &= r <= K * (1 + 1e-12)
    checks = {
        "min_unstable_ratio": worst_u,
        "max_stable_ratio": worst_s,
        "unstable_bound_ok": bool(worst_u ** 2 >= np.exp(2 * lam) * slack),
        "stable_bound_ok": bool(worst_s ** 2 <= np.exp(-2 * lam) / slack),
        "comparison_ok": bool(lower_ok),
    }
    return AdaptedNorm(gram=G, K=K, tail_estimate=float(tail), checks=checks)


# --------------------------------------------------------------- Hölder


def _field(sys, which, splitting):
    prov = splitting or sys.known_splitting

    def E(x):
        Eu, Es = prov(x)
        return Eu if which == "u" else Es

    return E


def holder_exponent_estimate(sys: SystemSpec, which: str = "s", n_pairs: int = 400,
                             seed: int = 0, splitting=None, points=None,
                             fit_tolerance: float = 0.05, spectrum=None,
                             lipschitz_inverse: Optional[float] = None):
    """Empirical Hölder exponent of Eᵘ or Eˢ against the predicted bound.

    Pairs are bucketed by distance decade; the exponent is the median of
    slopes between consecutive bucket medians. ``beta_star`` uses measured
    exponents and a = (1+1e-3)·sup‖Df‖·max(1, Lip)^α with α = 1, δ = 0.
    """
    if which not in ("u", "s"):
        raise ValueError("which must be 'u' or 's'")
    if points is None:
        points = attractor_sample(sys, max(2000, n_pairs), 40, seed=seed)
    E = _field(sys, which, splitting)
    rng = np.random.default_rng(seed + 7)
    if spectrum is None:
        spectrum = lyapunov_spectrum(sys, points[0], n=4000, seed=seed)
    lam_top = float(spectrum.flat()[0])
    decades = [1e-1, 1e-2, 1e-3, 1e-4]
    per = max(1, n_pairs // len(decades))
    n_back = 10
    rows = []
    for r in decades:
        idx = rng.choice(points.shape[0], size=per, replace=points.shape[0] < per)
        for i in idx:
            # a nearby attractor point: perturb the past and push forward
            past = inverse_on_attractor(sys, points[i], n_back).points
            base = past[0]
            eta = rng.standard_normal(sys.dim)
            eta *= r * np.exp(-n_back * max(lam_top, 1e-3)) / np.linalg.norm(eta)
            y = sys.wrap(past[n_back] + eta)
            for _ in range(n_back):
                y = sys.map_eval(y)
            dist = float(np.linalg.norm(sys.displacement(base, y)))
            if dist <= 0.0:
                continue
            rows.append((r, dist, kato_gap(E(base), E(y))))
    if len(rows) < 8:
        raise InsufficientPairs(f"only {len(rows)} pairs found")
    rows = np.array(rows)
    gaps = rows[:, 2]
    if np.all(gaps < 1e-14):
        beta = float("inf")
    else:
        meds = []
        for r in decades:
            sel = (rows[:, 0] == r) & (gaps > 1e-14)
            if np.sum(sel) >= 3:
                meds.append((np.log(np.median(rows[sel, 1])), np.log(np.median(rows[sel, 2]))))
        slopes = [(meds[i + 1][1] - meds[i][1]) / (meds[i + 1][0] - meds[i][0])
                  for i in range(len(meds) - 1)]
        beta = float(np.median(slopes)) if slopes else float("nan")
    # predicted lower bound
    flat = spectrum.flat()
    du = sys.unstable_dim
    lam1, lam2 = float(flat[du - 1]), float(flat[du])
    norms = np.linalg.norm(np.asarray(sys.deriv_eval(points[:2000])), ord=2, axis=(1, 2))
    sup_df = float(norms.max())
    if which == "u":
        if lipschitz_inverse is None:
            inv_norms = [np.linalg.norm(np.linalg.inv(M), 2)
                         for M in np.asarray(sys.deriv_eval(points[:500]))]
            lipschitz_inverse = float(max(inv_norms))
        a = 1.001 * sup_df * max(lipschitz_inverse, 1.0)
        beta_star = (lam1 - lam2) / (np.log(a) - lam1)
    else:
        a = 1.001 * sup_df * max(1.0, sup_df)
        beta_star = (lam1 - lam2) / (np.log(a) - lam2)
    return {
        "which": which,
        "beta_empirical": beta,
        "beta_star": float(beta_star),
        "lambda1": lam1,
        "lambda2": lam2,
        "a": float(a),
        "n_pairs": int(rows.shape[0]),
        "pass": bool(beta >= beta_star - fit_tolerance),
        "pairs": rows,
    }
