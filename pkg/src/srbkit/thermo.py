"""Subshifts of finite type, Gibbs measures, pressure and entropy checks."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy import sparse

from .errors import EntropyNotConverged, PartitionNotMixing, ReducibleChain
from .srb import EmpiricalMeasure, _backward_points, _frames_along
from .symbolic import MarkovPartition, spectral_decomposition, transition_matrix_exact
from .systems import SystemSpec

POWER_TOL = 1e-13
POWER_MAX_ITER = 200_000


# ------------------------------------------------------------------ types


class SFT:
    """One-sided subshift Σ_A with the metric d_β(x, y) = β^{first disagreement}."""

    def __init__(self, A, beta: float = 0.5):
        A = (np.asarray(A) != 0).astype(np.int8)
        if A.ndim != 2 or A.shape[0] != A.shape[1]:
            raise ValueError("transition matrix must be square")
        if not 0.0 < beta < 1.0:
            raise ValueError("β must lie in (0, 1)")
        self.A = A
        self.beta = float(beta)
        self.decomposition = spectral_decomposition(A)
        comps = self.decomposition["components"]
        self.irreducible = len(comps) == 1 and not self.decomposition["wandering"]
        self.mixing = self.irreducible and comps[0]["period"] == 1

    @property
    def n(self) -> int:
        return self.A.shape[0]

    def blocks(self, length: int) -> np.ndarray:
        """All admissible words of the given length, in lexicographic order."""
        if length == 0:
            return np.empty((1, 0), dtype=np.int64)
        W = np.arange(self.n, dtype=np.int64)[:, None]
        for _ in range(length - 1):
            succ = [np.flatnonzero(self.A[i]) for i in range(self.n)]
            cnt = np.array([len(succ[i]) for i in W[:, -1]])
            nxt = np.concatenate([succ[i] for i in W[:, -1]]) if W.shape[0] else \
                np.empty(0, dtype=np.int64)
            W = np.column_stack([np.repeat(W, cnt, axis=0), nxt])
        return W

    def count(self, length: int) -> int:
        if length == 0:
            return 1
        v = np.ones(self.n, dtype=float)
        for _ in range(length - 1):
            v = self.A.astype(float) @ v
        return int(round(v.sum()))

    def admissible(self, word) -> bool:
        word = np.asarray(word, dtype=np.int64)
        if word.size and (word.min() < 0 or word.max() >= self.n):
            return False
        return bool(np.all(self.A[word[:-1], word[1:]])) if word.size > 1 else True

    def distance(self, x, y) -> float:
        x, y = np.asarray(x), np.asarray(y)
        m = min(x.size, y.size)
        diff = np.flatnonzero(x[:m] != y[:m])
        return float(self.beta ** diff[0]) if diff.size else 0.0

    def sample_words(self, length: int, count: int, rng) -> np.ndarray:
        """Random admissible words (uniform first symbol, uniform successor)."""
        W = np.empty((count, length), dtype=np.int64)
        W[:, 0] = rng.integers(0, self.n, count)
        succ = [np.flatnonzero(self.A[i]) for i in range(self.n)]
        for t in range(1, length):
            for i in range(self.n):
                sel = np.flatnonzero(W[:, t - 1] == i)
                if sel.size:
                    W[sel, t] = rng.choice(succ[i], sel.size)
        return W


@dataclass
class Potential:
    """k-step potential: a value on every admissible k-block.

    ``b`` and ``alpha`` certify var_j φ ≤ b·alphaʲ for j ≥ k, which holds
    with b = 0 since the potential is locally constant at depth k.
    """

    k: int
    blocks: np.ndarray
    values: np.ndarray
    b: float = 0.0
    alpha: float = 0.5
    _index: dict = field(init=False, repr=False)

    def __post_init__(self):
        self.blocks = np.asarray(self.blocks, dtype=np.int64).reshape(-1, self.k)
        self.values = np.asarray(self.values, dtype=float).reshape(-1)
        if self.blocks.shape[0] != self.values.size:
            raise ValueError("one value per block required")
        if not np.all(np.isfinite(self.values)):
            raise ValueError("potential values must be finite")
        self._index = {tuple(w): i for i, w in enumerate(self.blocks.tolist())}

    @classmethod
    def from_function(cls, sft: SFT, k: int, fn) -> "Potential":
        B = sft.blocks(k)
        return cls(k, B, np.asarray(fn(B), dtype=float))

    @classmethod
    def constant(cls, sft: SFT, c: float = 0.0, k: int = 1) -> "Potential":
        B = sft.blocks(k)
        return cls(k, B, np.full(B.shape[0], float(c)))

    @classmethod
    def random(cls, sft: SFT, k: int, rng, scale: float = 1.0) -> "Potential":
        B = sft.blocks(k)
        return cls(k, B, scale * rng.standard_normal(B.shape[0]))

    def lookup(self, words) -> np.ndarray:
        """φ of the first k symbols of each row."""
        words = np.atleast_2d(np.asarray(words, dtype=np.int64))[:, :self.k]
        try:
            return self.values[[self._index[tuple(w)] for w in words.tolist()]]
        except KeyError as exc:
            raise ValueError(f"block {exc.args[0]} is not in the potential's table") from None

    def birkhoff(self, words) -> np.ndarray:
        """Σ φ(σⁱw) over the windows of length k contained in each word."""
        words = np.atleast_2d(np.asarray(words, dtype=np.int64))
        m = words.shape[1]
        S = np.zeros(words.shape[0])
        for i in range(max(m - self.k + 1, 0)):
            S += self.lookup(words[:, i:i + self.k])
        return S

    def shifted(self, c: float) -> "Potential":
        return Potential(self.k, self.blocks.copy(), self.values + c, self.b, self.alpha)

    def var(self, j: int) -> float:
        """sup |φ(x) − φ(y)| over words agreeing on their first j symbols."""
        if j >= self.k:
            return 0.0
        keys = [tuple(w) for w in self.blocks[:, :j].tolist()]
        groups = {}
        for key, v in zip(keys, self.values):
            lo, hi = groups.get(key, (np.inf, -np.inf))
            groups[key] = (min(lo, v), max(hi, v))
        return float(max(hi - lo for lo, hi in groups.values()))


@dataclass
class GibbsData:
    pressure: float
    states: np.ndarray
    right: np.ndarray
    left: np.ndarray
    stationary: np.ndarray
    stochastic: sparse.csr_matrix
    words: np.ndarray
    masses: np.ndarray
    entropy: float
    integral: float
    iterations: int
    c1: Optional[float] = None
    c2: Optional[float] = None
    _state_index: dict = field(default=None, repr=False)

    @property
    def state_length(self) -> int:
        return self.states.shape[1]

    def _state_ids(self, words):
        if self._state_index is None:
            self._state_index = {tuple(w): i for i, w in enumerate(self.states.tolist())}
        return np.array([self._state_index[tuple(w)] for w in words.tolist()], dtype=np.int64)

    def cylinder_mass(self, words) -> np.ndarray:
        """μ[w₀…w_{m−1}] for admissible words of any common length m ≥ 0."""
        words = np.atleast_2d(np.asarray(words, dtype=np.int64))
        N, m = words.shape
        L = self.state_length
        if m == 0:
            return np.ones(N)
        if m < L:
            pref = {}
            for s, p in zip(self.states[:, :m].tolist(), self.stationary):
                pref[tuple(s)] = pref.get(tuple(s), 0.0) + p
            return np.array([pref.get(tuple(w), 0.0) for w in words.tolist()])
        ids = self._state_ids(words[:, :L])
        mass = self.stationary[ids].copy()
        P = self.stochastic
        for t in range(1, m - L + 1):
            nxt = self._state_ids(words[:, t:t + L])
            mass *= np.asarray(P[ids, nxt]).ravel()
            ids = nxt
        return mass

    def consistency_error(self) -> float:
        """max |μ[w] − Σ_c μ[wc]| over the stored cylinders, plus |total − 1|."""
        m = self.words.shape[1]
        parents = {}
        for w, p in zip(self.words[:, :m - 1].tolist(), self.masses):
            parents[tuple(w)] = parents.get(tuple(w), 0.0) + p
        keys = np.array(list(parents.keys()), dtype=np.int64).reshape(len(parents), m - 1)
        direct = self.cylinder_mass(keys)
        err = float(np.max(np.abs(direct - np.array(list(parents.values())))))
        return max(err, abs(float(self.masses.sum()) - 1.0))

    def to_dict(self) -> dict:
        return {"pressure": self.pressure, "entropy": self.entropy, "integral": self.integral,
                "c1": self.c1, "c2": self.c2, "states": int(self.states.shape[0]),
                "iterations": int(self.iterations)}


# --------------------------------------------------------------- pressure


def _transfer_matrix(sft: SFT, phi: Potential):
    """Block transfer matrix over admissible L-blocks, L = max(k−1, 1)."""
    L = max(phi.k - 1, 1)
    states = sft.blocks(L)
    ext = sft.blocks(L + 1)
    index = {tuple(w): i for i, w in enumerate(states.tolist())}
    rows = np.array([index[tuple(w)] for w in ext[:, :L].tolist()], dtype=np.int64)
    cols = np.array([index[tuple(w)] for w in ext[:, 1:].tolist()], dtype=np.int64)
    vals = phi.lookup(ext[:, :phi.k])
    return states, ext, rows, cols, vals


def _perron(M, start=None, tol=POWER_TOL, max_iter=POWER_MAX_ITER, shift=0.0):
    """Positive eigenvector of an irreducible nonnegative matrix by power iteration."""
    n = M.shape[0]
    v = np.ones(n) if start is None else np.abs(np.asarray(start, dtype=float)) + 1e-300
    v = v / v.sum()
    for it in range(1, max_iter + 1):
        w = M @ v + shift * v
        s = w.sum()
        if not np.isfinite(s) or s <= 0:
            raise ReducibleChain("power iteration lost positivity")
        w = w / s
        if np.max(np.abs(w - v)) <= tol * np.max(w):
            return w, it
        v = w
    raise ReducibleChain(f"power iteration did not converge in {max_iter} steps")


def _component_pressures(sft: SFT, phi: Potential):
    out = []
    for comp in sft.decomposition["components"]:
        S = np.asarray(comp["states"])
        sub = SFT(sft.A[np.ix_(S, S)], sft.beta)
        B = sub.blocks(phi.k)
        data = pressure_gibbs(sub, Potential(phi.k, B, phi.lookup(S[B])))
        out.append({"states": S.tolist(), "period": comp["period"],
                    "pressure": data.pressure})
    return out


def pressure_gibbs(sft: SFT, phi: Potential, start=None, tol: float = POWER_TOL) -> GibbsData:
    """Pressure, Perron vectors and the Gibbs (Markov) measure of a k-step potential."""
    if not sft.irreducible:
        raise ReducibleChain("transition matrix is reducible; pressures per component attached",
                             components=_component_pressures(sft, phi))
    expected = {tuple(w) for w in sft.blocks(phi.k).tolist()}
    if expected != set(phi._index):
        raise ValueError("potential table must cover exactly the admissible k-blocks")
    states, ext, rows, cols, vals = _transfer_matrix(sft, phi)
    n = states.shape[0]
    vmax = float(vals.max())
    M = sparse.csr_matrix((np.exp(vals - vmax), (rows, cols)), shape=(n, n))
    # periodic chains: iterate M + I, which has the same Perron vectors
    shift = 0.0 if sft.mixing else 1.0
    r, it_r = _perron(M, start, tol, shift=shift)
    lft, it_l = _perron(M.T.tocsr(), start, tol, shift=shift)
    rho = float(lft @ (M @ r)) / float(lft @ r)
    P = np.log(rho) + vmax
    # stochastic matrix of the equilibrium state
    pv = np.exp(vals - vmax) * r[cols] / (rho * r[rows])
    Pm = sparse.csr_matrix((pv, (rows, cols)), shape=(n, n))
    pi = lft * r
    pi = pi / pi.sum()
    masses = pi[rows] * pv
    with np.errstate(divide="ignore"):
        logp = np.where(pv > 0, np.log(np.where(pv > 0, pv, 1.0)), 0.0)
    h = float(-np.sum(masses * logp))
    integral = float(np.sum(masses * vals))
    return GibbsData(pressure=float(P), states=states, right=r, left=lft, stationary=pi,
                     stochastic=Pm, words=ext, masses=masses, entropy=h, integral=integral,
                     iterations=max(it_r, it_l))


def gibbs_bounds_check(gibbs: GibbsData, sft: SFT, phi: Potential, max_len: int,
                       sample: int = 10_000, seed: int = 0) -> dict:
    """Observed range of μ[x₀…x_m] / exp(−P·(terms) + Σφ(σⁱx)) for m = 0..max_len.

    The number of terms is the number of complete k-windows in the word.
    A drift-free band has per-length bounds that stop moving for large m.
    """
    rng = np.random.default_rng(seed)
    rows = []
    for m in range(0, max_len + 1):
        length = m + 1
        W = sft.blocks(length) if sft.count(length) <= sample else \
            sft.sample_words(length, sample, rng)
        mass = gibbs.cylinder_mass(W)
        terms = max(length - phi.k + 1, 0)
        log_ratio = np.log(mass) + gibbs.pressure * terms - phi.birkhoff(W)
        rows.append((m, float(np.exp(log_ratio.min())), float(np.exp(log_ratio.max())),
                     W.shape[0]))
    c1 = min(r[1] for r in rows)
    c2 = max(r[2] for r in rows)
    # the band stops moving once every (first, last) block pair is realized;
    # judge drift over the upper half of the lengths
    settled = [r for r in rows if r[0] >= max(phi.k, max_len // 2)]
    if len(settled) >= 2:
        lo = np.log([r[1] for r in settled])
        hi = np.log([r[2] for r in settled])
        drift = float(max(np.ptp(lo), np.ptp(hi)))
        slope = float(np.polyfit([r[0] for r in settled], hi - lo, 1)[0])
    else:
        drift, slope = 0.0, 0.0
    gibbs.c1, gibbs.c2 = c1, c2
    return {"c1": c1, "c2": c2, "per_length": rows, "drift": drift, "band_slope": slope,
            "bounded": bool(np.isfinite(c1) and np.isfinite(c2) and c1 > 0),
            "drift_free": bool(abs(slope) < 1e-6 and drift < 1e-6)}


def _stationary(Q, tol=1e-15):
    pi, _ = _perron(Q.T.tocsr(), None, tol, shift=1.0)
    return pi / pi.sum()


def markov_entropy(pi, Q) -> float:
    Q = sparse.coo_matrix(Q)
    p = Q.data
    return float(-np.sum(pi[Q.row] * p * np.log(np.where(p > 0, p, 1.0))))


def entropy_and_variational(gibbs: GibbsData, sft: SFT, phi: Potential, n_perturb: int = 20,
                            scale: float = 0.5, seed: int = 0) -> dict:
    """h + ∫φ = P for the equilibrium state; h_ν + ∫φ dν ≤ P for perturbed Markov ν."""
    identity = gibbs.entropy + gibbs.integral - gibbs.pressure
    rng = np.random.default_rng(seed)
    states, ext, rows, cols, vals = _transfer_matrix(sft, phi)
    n = states.shape[0]
    base = np.asarray(gibbs.stochastic[rows, cols]).ravel()
    perturbed = []
    for _ in range(n_perturb):
        q = base * np.exp(scale * rng.standard_normal(base.size))
        rs = np.bincount(rows, weights=q, minlength=n)
        q = q / rs[rows]
        Q = sparse.csr_matrix((q, (rows, cols)), shape=(n, n))
        pi = _stationary(Q)
        h = markov_entropy(pi, Q)
        integ = float(np.sum(pi[rows] * q * vals))
        perturbed.append({"entropy": h, "integral": integ, "free_energy": h + integ,
                          "gap": gibbs.pressure - (h + integ)})
    return {
        "entropy": gibbs.entropy, "integral": gibbs.integral, "pressure": gibbs.pressure,
        "identity_residual": float(identity),
        "identity_ok": bool(abs(identity) < 1e-10),
        "perturbed": perturbed,
        "inequality_ok": bool(all(p["free_energy"] <= gibbs.pressure + 1e-12 for p in perturbed)),
    }


def bernoulli_entropy(p) -> np.ndarray:
    p = np.asarray(p, dtype=float)
    with np.errstate(divide="ignore", invalid="ignore"):
        t = -p * np.log(p) - (1 - p) * np.log(1 - p)
    return np.where((p == 0) | (p == 1), 0.0, t)


# ------------------------------------------------------ SRB as equilibrium


def log_unstable_jacobians(sys: SystemSpec, X, depth: int = 40) -> np.ndarray:
    """log Jᵘ at each row of X, with Eᵘ from forward transport along backward orbits."""
    X = np.atleast_2d(np.asarray(X, dtype=float))
    du = sys.unstable_dim
    out = np.empty(X.shape[0])
    for a in range(0, X.shape[0], 4096):
        paths = _backward_points(sys, X[a:a + 4096], depth)
        U = _frames_along(sys, paths, du)[:, 0]
        D = np.asarray(sys.deriv_eval(paths[:, 0]))
        R = np.linalg.qr(D @ U, mode="r")
        out[a:a + 4096] = np.log(np.abs(np.prod(np.diagonal(R, axis1=-2, axis2=-1), axis=-1)))
    return out


def partition_contraction(sys: SystemSpec) -> float:
    """Per-step shrink factor of refined cylinders (slowest of the two directions)."""
    meta = sys.metadata
    if "lambda_max" in meta:
        return 1.0 / float(meta["lambda_max"])
    if "circle_derivative_range" in meta:
        return max(1.0 / float(meta["circle_derivative_range"][0]),
                   float(meta.get("transverse_contraction", 0.0)))
    raise ValueError(f"no contraction rate known for {sys.name}")


@dataclass
class EquilibriumResult:
    pressure: float
    tolerance: float
    passed: bool
    gibbs: GibbsData
    potential: Potential
    measure: EmpiricalMeasure
    center_index: int
    k: int

    def to_dict(self) -> dict:
        return {"k": self.k, "pressure": self.pressure, "tolerance": self.tolerance,
                "pass": self.passed, "entropy": self.gibbs.entropy,
                "integral": self.gibbs.integral, "cylinders": int(self.gibbs.words.shape[0])}


def srb_via_equilibrium(sys: SystemSpec, partition: MarkovPartition, k: int,
                        center_index: Optional[int] = None,
                        tolerance: Optional[float] = None) -> EquilibriumResult:
    """Pressure of φ* = −log Jᵘ∘π on k-blocks and its equilibrium state pushed to phase space.

    φ*(a₀…a_{k−1}) is −log Jᵘ at π of the block coded with the given center
    (default ⌊k/2⌋). Shifting the evaluation time changes φ* by a coboundary
    and leaves the pressure unchanged.
    """
    T = transition_matrix_exact(partition)
    if not T.aperiodic:
        raise PartitionNotMixing("partition transition matrix is not mixing")
    sft = SFT(T.A)
    c = k // 2 if center_index is None else int(center_index)
    B = sft.blocks(k)
    pts, _ = partition.code_batch(B, c)
    phi = Potential(k, B, -log_unstable_jacobians(sys, pts))
    alpha_c = partition_contraction(sys)
    phi.b, phi.alpha = float(np.ptp(phi.values)), alpha_c
    gibbs = pressure_gibbs(sft, phi)
    tol = 0.5 * alpha_c ** k if tolerance is None else tolerance
    mass = gibbs.cylinder_mass(B)
    mu = EmpiricalMeasure(pts, mass / mass.sum(), {"source": "equilibrium", "k": k,
                                                   "center_index": c})
    return EquilibriumResult(gibbs.pressure, float(tol), bool(abs(gibbs.pressure) < tol),
                             gibbs, phi, mu, c, k)


# --------------------------------------------------------- entropy checks


def _itineraries(sys, partition, X, length):
    cols = []
    Y = np.asarray(X, dtype=float)
    for t in range(length):
        cols.append(partition.classify(Y, 0.0))
        if t + 1 < length:
            Y = np.asarray(sys.map_eval(Y))
    return np.stack(cols, axis=1)


def _block_entropy(I, w):
    if I.shape[1] == 0:
        return 0.0
    _, inv = np.unique(I, axis=0, return_inverse=True)
    p = np.bincount(inv.ravel(), weights=w)
    p = p[p > 0] / w.sum()
    return float(-np.sum(p * np.log(p)))


def positive_exponent_sum(sys: SystemSpec, X, weights, n: int = 200, depth: int = 40) -> float:
    """μ-average of (1/n) log|det Dfⁿ|Eᵘ| over the weighted sample."""
    X = np.atleast_2d(np.asarray(X, dtype=float))
    w = np.asarray(weights, dtype=float)
    du = sys.unstable_dim
    total = np.zeros(X.shape[0])
    for a in range(0, X.shape[0], 4096):
        Y = X[a:a + 4096]
        paths = _backward_points(sys, Y, depth)
        V = _frames_along(sys, paths, du)[:, 0]
        acc = np.zeros(Y.shape[0])
        for _ in range(n):
            D = np.asarray(sys.deriv_eval(Y))
            V, R = np.linalg.qr(D @ V)
            acc += np.log(np.abs(np.prod(np.diagonal(R, axis1=-2, axis2=-1), axis=-1)))
            Y = np.asarray(sys.map_eval(Y))
        total[a:a + 4096] = acc / n
    return float(np.sum(w * total) / w.sum())


def ruelle_pesin_check(sys: SystemSpec, mu, partition: MarkovPartition, depth: int,
                       srb_candidate: bool = True, tolerance: float = 0.02,
                       drift_tol: Optional[float] = None, n_exponent: int = 200,
                       exponent_sample: int = 2000, seed: int = 0) -> dict:
    """Entropy by cylinder-entropy increments vs ∫Σλ⁺ dμ.

    ``mu`` is any weighted sample (points, weights). Boundary hits keep the
    symbol −1, which carries no mass for non-atomic measures.
    """
    X = np.atleast_2d(np.asarray(mu.points, dtype=float))
    w = np.asarray(mu.weights, dtype=float)
    if depth < 3:
        raise ValueError("depth >= 3 required")
    I = _itineraries(sys, partition, X, depth + 1)
    H = [_block_entropy(I[:, :m], w) for m in range(depth - 3, depth + 2)]
    inc = np.diff(H)
    h = float(inc[-1])
    drift = float(np.ptp(inc[-2:]))
    drift_tol = tolerance if drift_tol is None else drift_tol
    if drift > drift_tol:
        raise EntropyNotConverged(f"entropy increments still drifting by {drift:.3g}",
                                  increments=inc.tolist())
    rng = np.random.default_rng(seed)
    if X.shape[0] > exponent_sample:
        idx = rng.choice(X.shape[0], exponent_sample, replace=False, p=w / w.sum())
        Xs, ws = X[idx], np.ones(exponent_sample)
    else:
        Xs, ws = X, w
    lam = positive_exponent_sum(sys, Xs, ws, n_exponent)
    gap = lam - h
    return {
        "entropy": h, "increments": inc.tolist(), "block_entropies": H,
        "exponent_sum": lam, "gap": float(gap),
        "ruelle_ok": bool(h <= lam + tolerance),
        "pesin_ok": bool(abs(gap) < tolerance) if srb_candidate else None,
        "srb_candidate": bool(srb_candidate),
    }
