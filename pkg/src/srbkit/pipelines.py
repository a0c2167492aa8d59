"""Pipelines run by the CLI. Each returns a :class:`Report` of checked bounds."""

from __future__ import annotations

import numpy as np

from . import cocycle, graph_transform as gt, holonomy as hol, srb, symbolic as sym, thermo
from .errors import SrbkitError
from .io import Report
from .systems import SystemSpec, attractor_sample, inverse_on_attractor, make_system

SEED_MOD = 2 ** 32


def _seed(cfg) -> int:
    # the numpy generators downstream take 32-bit seeds
    return int(cfg["seed"]) % SEED_MOD


def _systems(cfg):
    return [make_system(e["name"], **e["params"]) for e in cfg["system"]]


def _is_linear(sys: SystemSpec) -> bool:
    return sys.name in ("linear", "fat-cat")


def _is_skew(sys: SystemSpec) -> bool:
    return "lambda_c" in sys.metadata


def _base_point(sys, seed, burn_in=30):
    if sys.name == "linear":
        return np.zeros(sys.dim)
    return attractor_sample(sys, 1, burn_in, seed=seed)[0]


def _fixed_point(sys):
    if _is_skew(sys):
        return np.array([0.0, 0.5 / (1.0 - sys.metadata["lambda_c"]), 0.0])
    return np.zeros(sys.dim)


def _exponent_oracle(sys):
    """Exact exponents with multiplicity, or None when no closed form exists."""
    if sys.name == "linear":
        return np.sort(np.log(np.abs(np.linalg.eigvals(np.array(sys.metadata["matrix"])))))[::-1]
    if _is_skew(sys):
        lc = sys.metadata["lambda_c"]
        a = sys.metadata["warp"]
        if a == 0.0:
            top = np.log(2.0)
        else:
            # acim of the circle factor, integrated against log g′
            rho = srb.ulam_circle_density(srb.warped_circle_lift(a))
            th = (np.arange(rho.size) + 0.5) / rho.size
            top = float(np.mean(rho * np.log(2.0 + a * np.cos(2 * np.pi * th))))
        return np.array([top, np.log(lc), np.log(lc)])
    if sys.name == "fat-cat":
        return np.array([e for e, m in sys.metadata["exponents"] for _ in range(m)])
    return None


# ----------------------------------------------------------------- lyapunov


def run_lyapunov(cfg, rep: Report):
    p = cfg["params"]
    rows = []
    for sys in _systems(cfg):
        x = _base_point(sys, _seed(cfg), 100)
        spec = cocycle.lyapunov_spectrum(sys, x, n=p["n"], burn_in=p["burn_in"], seed=_seed(cfg))
        raw = np.asarray(spec.raw)
        truth = _exponent_oracle(sys)
        rep.values[sys.name] = {"exponents": raw, "clusters": spec.flat()}
        for i, v in enumerate(raw):
            rows.append((sys.name, i, v, truth[i] if truth is not None else float("nan")))
        if truth is None:
            continue
        tol = p["tolerance"] if p["tolerance"] is not None else \
            (1e-4 if sys.name in ("fat-cat", "linear") else 1e-3)
        err = float(np.max(np.abs(raw - np.sort(truth)[::-1])))
        rep.values[sys.name]["oracle"] = truth
        rep.check("lyapunov-exponents", err, "<=", tol, sys.name)
    rep.table("exponents", ["system", "index", "exponent", "oracle"], rows)


# ----------------------------------------------------------------- manifold


def run_manifold(cfg, rep: Report):
    p = cfg["params"]
    rows = []
    for sys in _systems(cfg):
        s = _seed(cfg)
        x = _base_point(sys, s)
        lam1 = p["lam1"] if p["lam1"] is not None else sys.metadata.get("chart_lambda", 0.5)
        if sys.name == "linear":
            orbit = np.zeros((p["orbit_length"] + 1, sys.dim))
            ext = (np.zeros((0, sys.dim)), np.zeros((0, sys.dim)))
        else:
            orbit, ext = inverse_on_attractor(sys, x, p["orbit_length"]), None
        ch = gt.build_charts(sys, orbit, lam1=lam1, delta2=p["delta2"], metric=p["metric"],
                             strict=False, extension=ext)
        ok = bool(ch.report["pass"])
        rep.check("chart-conditions", ok, "==", True, sys.name,
                  note=f"failed condition {ch.report.get('failed_condition')}" if not ok else "")
        if not ok:
            continue
        steps = min(p["steps"], ch.n_steps)
        rng = np.random.default_rng(s)
        e0, e1 = [], []
        for k in range(p["pairs"]):
            v1, v2 = gt.random_patch(ch, 0, rng), gt.random_patch(ch, 0, rng)
            d = gt.convergence_diagnostics(ch, v1, v2, steps)
            e0.append(d["c0_exponent"])
            e1.append(d["c1_exponent"])
            rows += [(sys.name, k, int(r[0]), r[1], r[2]) for r in d["table"]]
        c0, c1 = min(e0), min(e1)
        rep.values[sys.name] = {"lam1": lam1, "delta2": p["delta2"], "steps": steps,
                                "c0_exponents": e0, "c1_exponents": e1,
                                "radius": float(ch.radii[0])}
        rep.check("graph-transform-c0-rate", c0, ">=", lam1 - 2 * p["delta2"] - 0.05, sys.name)
        rep.check("graph-transform-c1-rate", c1, ">=", 0.9 * lam1, sys.name)
    rep.table("graph_distances", ["system", "pair", "step", "c0", "c1"], rows)


# -------------------------------------------------------------- srb density


def _density(cfg, rep: Report):
    p = cfg["params"]
    rows, marg = [], []
    for sys in _systems(cfg):
        x = _base_point(sys, _seed(cfg) + 1)
        disc = srb.unstable_disc(sys, x, nodes=p["nodes"])
        prof = srb.srb_density(sys, disc, p["N"])
        rows += [(sys.name, float(a), float(h), float(q))
                 for a, h, q in zip(disc.arclength, prof.values, prof.param_values)]
        vals = {"certificate": prof.certificate, "N": p["N"]}
        if _is_skew(sys) and sys.metadata["warp"] != 0.0:
            a = sys.metadata["warp"]
            am = srb.srb_angular_marginal(sys, disc.grow(sys, p["grow"]), n_push=p["n_push"],
                                          N=min(p["N"], 30), windows=p["windows"],
                                          bins=p["bins"])
            ac = srb.ulam_circle_density(srb.warped_circle_lift(a), bins=p["bins"])
            l1 = float(np.sum(np.abs(am["density"] - ac)) / p["bins"])
            vals["marginal_l1"] = l1
            step = max(p["bins"] // 256, 1)
            marg += [(sys.name, (i + 0.5) / p["bins"], am["density"][i], ac[i])
                     for i in range(0, p["bins"], step)]
            rep.check("srb-density", l1, "<", p["l1_tolerance"], sys.name)
        else:
            q = prof.param_values
            dev = float(np.max(np.abs(q / np.mean(q) - 1.0)))
            vals["uniform_deviation"] = dev
            rep.check("srb-density-uniform", dev, "<=", p["uniform_tolerance"], sys.name)
        rep.values[sys.name] = vals
    rep.table("density", ["system", "arclength", "density", "param_density"], rows)
    if marg:
        rep.table("angular_marginal", ["system", "theta", "density", "transfer_oracle"], marg)


def _charts_for(sys, x, n):
    if sys.name == "linear":
        orbit = np.zeros((n + 1, sys.dim))
        ext = (np.zeros((0, sys.dim)), np.zeros((0, sys.dim)))
        lam = float(np.log(np.max(np.abs(np.diag(np.array(sys.metadata["matrix"]))))))
        return gt.build_charts(sys, orbit, lam1=lam, delta2=0.0, metric="euclidean",
                               extension=ext)
    orbit = np.empty((n + 1, sys.dim))
    orbit[0] = x
    for k in range(n):
        orbit[k + 1] = sys.map_eval(orbit[k])
    return gt.build_charts(sys, orbit, lam1=sys.metadata["chart_lambda"])


def _distortion(cfg, rep: Report):
    p = cfg["params"]
    rows = []
    for sys in _systems(cfg):
        s = _seed(cfg)
        ratios, Cs = [], []
        for j in range(p["leaf_pairs"]):
            x = _base_point(sys, s + 11 + j)
            dist = p["leaf_distances"][j % len(p["leaf_distances"])]
            y = srb.unstable_leaf_point(sys, x, dist, sign=1.0 if j % 2 == 0 else -1.0)
            cr = srb.cocycle_ratio(sys, x, y, p["N"])
            ratios.append(cr.value)
            Cs.append(cr.C)
            rows.append((sys.name, "cocycle", j, cr.value, cr.C))
        x = _base_point(sys, s + 3)
        ch = _charts_for(sys, x, p["chart_steps"])
        rng = np.random.default_rng(s)
        if _is_linear(sys):
            # parallel affine graphs: a linear map keeps them parallel, so the
            # determinant ratios are exactly one
            r = ch.radii[0]
            A = rng.uniform(-0.05, 0.05, (ch.ds, ch.du))
            v1 = gt.affine_patch(ch, 0, rng.uniform(-0.2, 0.2, ch.ds) * r, A)
            v2 = gt.affine_patch(ch, 0, rng.uniform(-0.2, 0.2, ch.ds) * r, A)
        else:
            v1, v2 = gt.random_patch(ch, 0, rng), gt.random_patch(ch, 0, rng)
        det_slopes = {}
        for kind, v in (("same-graph", v1), ("stable-leaf", (v1, v2))):
            r = hol.jacobian_ratio_bounds(ch, v, p["chart_steps"], seed=s)
            ratios += list(np.asarray(r["ratios"]).ravel())
            Cs.append(r["C"])
            det_slopes[kind] = {"C": r["C"], "slope": r["slope"],
                                "required_slope": r["required_slope"]}
            rows += [(sys.name, kind, i, float(v), r["C"])
                     for i, v in enumerate(np.asarray(r["ratios"]).ravel())]
        ratios = np.asarray(ratios, dtype=float)
        C = float(max(np.max(np.maximum(ratios, 1.0 / ratios)), max(Cs)))
        spread = float(np.max(np.abs(ratios - 1.0)))
        rep.values[sys.name] = {"C": C, "max_abs_ratio_minus_one": spread,
                                "determinant": det_slopes}
        if _is_linear(sys):
            rep.check("cocycle-distortion", spread, "<=", p["linear_tolerance"], sys.name)
        else:
            rep.check("cocycle-distortion", C, "<", p["distortion_bound"], sys.name)
        rep.check("determinant-distortion", det_slopes["same-graph"]["C"], "<",
                  p["distortion_bound"], sys.name)
        rep.check("stable-determinant-distortion", det_slopes["stable-leaf"]["C"], "<",
                  p["distortion_bound"], sys.name)
    rep.table("distortion", ["system", "kind", "index", "ratio", "C"], rows)


def run_srb_density(cfg, rep: Report):
    if cfg["params"]["mode"] == "distortion":
        _distortion(cfg, rep)
    else:
        _density(cfg, rep)


# --------------------------------------------------------------- empirical


def run_empirical(cfg, rep: Report):
    p = cfg["params"]
    rows, cells = [], []
    for sys in _systems(cfg):
        s = _seed(cfg)
        d1 = srb.unstable_disc(sys, _base_point(sys, s + 1))
        mu = srb.empirical_srb(sys, d1, p["n"], seed=s)
        m = srb.angular_marginal(mu, bins=p["bins"])
        if _is_skew(sys) and sys.metadata["warp"] != 0.0:
            rho = srb.ulam_circle_density(srb.warped_circle_lift(sys.metadata["warp"]))
            ref = rho.reshape(p["bins"], -1).mean(axis=1) / p["bins"]
        else:
            ref = np.full(p["bins"], 1.0 / p["bins"])
        dev = float(np.max(np.abs(m - ref)))
        rows += [(sys.name, b, m[b], ref[b]) for b in range(p["bins"])]
        a = d1.grow(sys, p["grow"], p["grow_nodes"])
        b = srb.unstable_disc(sys, _base_point(sys, s + 9)).grow(sys, p["grow"], p["grow_nodes"])
        c1 = srb.cell_masses(sys, srb.empirical_srb(sys, a, p["tv_n"], seed=s), p["cells"])
        c2 = srb.cell_masses(sys, srb.empirical_srb(sys, b, p["tv_n"], seed=s + 5), p["cells"])
        tv = srb.total_variation(c1, c2)
        cells += [(sys.name, i, c1[i], c2[i]) for i in range(c1.size)]
        rep.values[sys.name] = {"marginal_max_mass_deviation": dev,
                                "marginal_max_relative_deviation": float(np.max(np.abs(m / ref - 1))),
                                "two_disc_tv": tv}
        rep.check("empirical-marginal", dev, "<=", p["marginal_tolerance"], sys.name)
        rep.check("empirical-uniqueness", tv, "<=", p["tv_tolerance"], sys.name)
    rep.table("marginal", ["system", "bin", "mass", "reference"], rows)
    rep.table("cells", ["system", "cell", "mass_disc_1", "mass_disc_2"], cells)


# ---------------------------------------------------------------- holonomy


def _nearby_attractor_point(sys, x, seed, min_dist=0.005):
    X = attractor_sample(sys, 4000, 200, seed=seed)
    d = sys.distance(x, X)
    d[d < min_dist] = np.inf
    return X[int(np.argmin(d))]


def run_holonomy(cfg, rep: Report):
    p = cfg["params"]
    rows = []
    for sys in _systems(cfg):
        s = _seed(cfg)
        x = attractor_sample(sys, 1, 200, seed=s + 1)[0]
        y = _nearby_attractor_point(sys, x, s + 3)
        D1, D2 = srb.unstable_disc(sys, x), srb.unstable_disc(sys, y)
        hr = hol.holonomy_map(sys, D1, D2, n_base=p["n_base"])
        s1 = np.sort(hr.source_params[:, 0])
        length = float(hol._curve_arclength(sys, hol.disc_curve(sys, D1), s1)[-1]) \
            if s1.size > 1 else 0.0
        width = length / p["cells"] if length > 0 else 1.0
        vals = {"pairs": int(hr.source_params.shape[0]), "dropped": hr.dropped,
                "distance": float(sys.distance(x, y)),
                "max_residual": float(hr.residuals.max()) if hr.residuals.size else None,
                "cell_width": width}
        rep.values[sys.name] = vals
        n_pairs = int(hr.source_params.shape[0])
        if n_pairs < p["min_pairs"]:
            rep.check("holonomy-absolute-continuity", n_pairs, ">=", p["min_pairs"], sys.name,
                      note="too few matched pairs")
            continue
        J1 = hol.holonomy_jacobian(sys, hr, D1, D2, width, min_pairs=p["min_pairs"])
        J2 = hol.holonomy_jacobian(sys, hr, D1, D2, width / 2, min_pairs=p["min_pairs"])
        for J in (J1, J2):
            rows += [(sys.name, J["cell_width"], i, r) for i, r in enumerate(J["ratios"])]
        vals.update({"C": J1["C"], "max_over_min": J1["max_over_min"],
                     "C_halved": J2["C"], "max_over_min_halved": J2["max_over_min"]})
        if _is_linear(sys):
            dev = float(max(np.max(np.abs(J1["ratios"] - 1)), np.max(np.abs(J2["ratios"] - 1))))
            vals["max_abs_ratio_minus_one"] = dev
            rep.check("holonomy-absolute-continuity", dev, "<=", p["unit_tolerance"], sys.name)
        else:
            rep.check("holonomy-absolute-continuity", J1["max_over_min"], "<", p["ratio_bound"],
                      sys.name)
            change = abs(J2["C"] / J1["C"] - 1.0)
            vals["halving_change"] = change
            rep.check("holonomy-cell-stability", change, "<=", p["halving_tolerance"], sys.name)
    rep.table("holonomy_ratios", ["system", "cell_width", "cell", "ratio"], rows)


# ------------------------------------------------------------------ shadow


def _period_oracle(sys, n):
    if sys.name == "fat-cat":
        return sym.cat_periodic_count(n)
    if _is_skew(sys):
        return 2 ** n - 1
    return None


def run_shadow(cfg, rep: Report):
    p = cfg["params"]
    rows = []
    for sys in _systems(cfg):
        s = _seed(cfg)
        rng = np.random.default_rng(s)
        orb = [attractor_sample(sys, 1, 10, seed=s)[0]]
        for _ in range(p["length"] - 1):
            y = np.asarray(sys.map_eval(orb[-1]))
            nz = rng.normal(size=sys.dim)
            if sys.name == "fat-cat":
                nz[2] = 0.0
            orb.append(sys.wrap(y + p["alpha"] * rng.random() * nz / np.linalg.norm(nz)))
        try:
            r = sym.shadow(sys, sym.PseudoOrbit(np.array(orb), p["alpha"]), p["beta"],
                           max_newton=p["max_newton"])
            beta, steps = r.beta, r.newton_steps
        except SrbkitError as e:
            beta, steps = float("inf"), p["max_newton"] + 1
            rep.values.setdefault(sys.name, {})["shadow_error"] = e.code
        rep.values.setdefault(sys.name, {}).update({"shadow_beta": beta, "newton_steps": steps})
        rep.check("shadowing", beta, "<=", p["beta"], sys.name)
        rep.check("shadowing", steps, "<=", p["max_newton"], sys.name,
                  label="newton-steps")
        counts = {}
        for n in p["periods"]:
            truth = _period_oracle(sys, n)
            if truth is None:
                continue
            m = p["closing_seeds"]
            if sys.name == "fat-cat":
                seeds = np.column_stack([rng.random((m, 2)), np.zeros(m)])
            else:
                seeds = attractor_sample(sys, m, 60, seed=s + n)
            found = sym.periodic_points_by_closing(sys, n, seeds, return_tol=p["return_tol"])
            counts[n] = len(found)
            rows.append((sys.name, n, len(found), truth))
            rep.check("periodic-closing", len(found) - truth, "==", 0, sys.name,
                      label=f"period-{n}")
        rep.values[sys.name]["periodic_counts"] = counts
    rep.table("periodic_counts", ["system", "period", "found", "expected"], rows)


# ------------------------------------------------------------------ markov


def _expansion_floor(sys):
    if sys.name == "fat-cat":
        return sys.metadata["lambda_max"]
    return sys.metadata["circle_derivative_range"][0]


def run_markov(cfg, rep: Report):
    p = cfg["params"]
    rows = []
    for sys in _systems(cfg):
        s = _seed(cfg)
        part = sym.build_markov_partition(sys, p["gamma"], p["alpha"], p["beta"], seed=s)
        v = sym.verify_markov(sys, part, p["samples"], seed=s)
        T = sym.transition_matrix_exact(part)
        Ts = sym.transition_matrix(sys, part, seed=s)
        entropy = float(np.log(T.spectral_radius))
        truth = float(np.log(sys.metadata["lambda_max"])) if sys.name == "fat-cat" \
            else float(np.log(2.0))
        # coding certificates on random admissible words of growing length
        rng = np.random.default_rng(s)
        L = p["coding_lengths"]
        logd = []
        for n in L:
            ds = []
            for _ in range(8):
                w = [int(rng.integers(part.size))]
                for _ in range(2 * n):
                    w.append(int(rng.choice(np.flatnonzero(T.A[w[-1]]))))
                _, diam, _ = sym.coding_map(sys, part, w, A=T.A, check_semiconjugacy=False)
                ds.append(diam)
            logd.append(float(np.log(np.median(ds))))
            rows.append((sys.name, n, float(np.median(ds))))
        rate = float(-np.polyfit(L, logd, 1)[0])
        predicted = float(min(np.log(_expansion_floor(sys)),
                              -np.log(sys.metadata["transverse_contraction"])))
        rep.values[sys.name] = {"rectangles": part.size, "beta": part.beta,
                                "violations": v["counts"], "interior_samples": v["interior_samples"],
                                "sampled_matches_exact": bool(np.array_equal(Ts.A, T.A)),
                                "irreducible": T.irreducible, "aperiodic": T.aperiodic,
                                "entropy": entropy, "coding_rate": rate,
                                "predicted_rate": predicted}
        rep.check("markov-partition", v["violations"], "==", 0, sys.name)
        rep.check("coding-diameter", rate, ">=", predicted - p["rate_slack"], sys.name)
        rep.check("partition-entropy", abs(entropy - truth), "<=", p["entropy_tolerance"],
                  sys.name)
    rep.table("coding_diameters", ["system", "half_length", "median_diameter"], rows)


# ------------------------------------------------------------------- gibbs


def run_gibbs(cfg, rep: Report):
    p = cfg["params"]
    sft = thermo.SFT(np.array(p["matrix"]))
    rng = np.random.default_rng(_seed(cfg))
    if p["potential"] == "constant":
        phi = thermo.Potential.constant(sft, 0.0)
        oracle = float(np.log(np.max(np.abs(np.linalg.eigvals(sft.A.astype(float))))))
    else:
        phi = thermo.Potential.random(sft, p["potential_k"], rng, scale=p["potential_scale"])
        states, ext, r, c, vals = thermo._transfer_matrix(sft, phi)
        M = np.zeros((states.shape[0],) * 2)
        M[r, c] = np.exp(vals)
        oracle = float(np.log(np.max(np.abs(np.linalg.eigvals(M)))))
    g = thermo.pressure_gibbs(sft, phi)
    b = thermo.gibbs_bounds_check(g, sft, phi, p["max_len"], seed=_seed(cfg))
    e = thermo.entropy_and_variational(g, sft, phi, p["perturbations"], seed=_seed(cfg))
    worst = max(q["free_energy"] for q in e["perturbed"]) - g.pressure
    rep.values["shift"] = {"pressure": g.pressure, "oracle": oracle, "c1": b["c1"], "c2": b["c2"],
                           "drift": b["drift"], "band_slope": b["band_slope"],
                           "entropy": g.entropy, "integral": g.integral,
                           "power_iterations": g.iterations}
    rep.check("pressure", abs(g.pressure - oracle), "<=", p["pressure_tolerance"])
    rep.check("gibbs-band", b["drift_free"] and b["bounded"], "==", True)
    rep.check("variational-identity", abs(e["identity_residual"]), "<=", p["identity_tolerance"])
    rep.check("variational-inequality", worst, "<=", 1e-12)
    rep.table("gibbs_band", ["length", "lower", "upper", "words"],
              [(m + 1, lo, hi, n) for m, lo, hi, n in b["per_length"]])
    L = min(p["max_len"], 10)
    W = sft.blocks(L)
    mass = g.cylinder_mass(W)
    ratio = mass / np.exp(-g.pressure * max(L - phi.k + 1, 0) + phi.birkhoff(W))
    rep.table("cylinders", ["word", "mass", "gibbs_ratio"],
              [("".join(map(str, w)), m, r) for w, m, r in zip(W.tolist(), mass, ratio)])
    rep.table("perturbed", ["index", "entropy", "integral", "free_energy"],
              [(i, q["entropy"], q["integral"], q["free_energy"])
               for i, q in enumerate(e["perturbed"])])


# ------------------------------------------------------------- equilibrium


def _partition_for(sys, depths):
    if sys.name == "fat-cat":
        return sym.cat_segment_partition()
    return sym.CylinderPartition(sys, *depths)


def run_equilibrium(cfg, rep: Report):
    p = cfg["params"]
    rows = []
    for sys in _systems(cfg):
        s = _seed(cfg)
        part = _partition_for(sys, p["partition_depths"])
        r = thermo.srb_via_equilibrium(sys, part, p["k"])
        bound = p["pressure_bound"] if p["pressure_bound"] is not None else \
            (1e-12 if _is_linear(sys) else 1e-3)
        x = _base_point(sys, s + 5, 60)
        mu = srb.empirical_srb(sys, srb.unstable_disc(sys, x), p["empirical_n"], seed=s)
        a = srb.cell_masses(sys, r.measure, p["cells"])
        b = srb.cell_masses(sys, mu, p["cells"])
        tv = srb.total_variation(a, b)
        rep.values[sys.name] = dict(r.to_dict(), pressure_bound=bound, tv=tv,
                                    rectangles=part.size)
        rows += [(sys.name, i, a[i], b[i]) for i in range(a.size)]
        rep.check("equilibrium-pressure", abs(r.pressure), "<", bound, sys.name)
        rep.check("equilibrium-pushforward", tv, "<=", p["tv_tolerance"], sys.name)
    rep.table("equilibrium_cells", ["system", "cell", "equilibrium_mass", "empirical_mass"], rows)


# ----------------------------------------------------------- entropy check


def run_entropy_check(cfg, rep: Report):
    p = cfg["params"]
    rows = []
    for sys in _systems(cfg):
        s = _seed(cfg)
        part = sym.cat_segment_partition() if sys.name == "fat-cat" \
            else sym.CylinderPartition(sys, 0, 1)
        depth = p["depth"] if p["depth"] is not None else (5 if sys.name == "fat-cat" else 10)
        x = _base_point(sys, s + 5, 60)
        mu = srb.empirical_srb(sys, srb.unstable_disc(sys, x), p["empirical_n"], seed=s)
        r = thermo.ruelle_pesin_check(sys, mu, part, depth, tolerance=p["gap_tolerance"],
                                      seed=s)
        vals = {"depth": depth, "entropy": r["entropy"], "exponent_sum": r["exponent_sum"],
                "gap": r["gap"], "increments": r["increments"]}
        rows.append((sys.name, "srb-candidate", r["entropy"], r["exponent_sum"], r["gap"]))
        rep.check("pesin-equality", abs(r["gap"]), "<", p["gap_tolerance"], sys.name)
        if p["atom"]:
            atom = srb.EmpiricalMeasure(_fixed_point(sys)[None, :], np.ones(1))
            ra = thermo.ruelle_pesin_check(sys, atom, part, depth, srb_candidate=False, seed=s)
            vals["atom"] = {"entropy": ra["entropy"], "exponent_sum": ra["exponent_sum"],
                            "gap": ra["gap"]}
            rows.append((sys.name, "fixed-point-atom", ra["entropy"], ra["exponent_sum"],
                         ra["gap"]))
            rep.check("ruelle-inequality", ra["gap"], ">", p["ruelle_gap"], sys.name)
        rep.values[sys.name] = vals
    rep.table("entropy", ["system", "measure", "entropy", "exponent_sum", "gap"], rows)


# ----------------------------------------------------------- observability


def run_observability(cfg, rep: Report):
    p = cfg["params"]
    rows = []
    for sys in _systems(cfg):
        s = _seed(cfg)
        x = _base_point(sys, s + 1)
        mu = srb.empirical_srb(sys, srb.unstable_disc(sys, x), p["reference_n"], seed=s)
        E = sys.known_splitting(x)[0] if sys.known_splitting is not None else \
            cocycle.unstable_subspace(sys, inverse_on_attractor(sys, x, 60))
        r = srb.observability_test(sys, mu, (x, E, p["offset"]), srb.default_observables(sys),
                                   p["n"], p["tolerance"], n_points=p["points"], seed=s,
                                   kato_delta=p["kato_delta"])
        rep.values[sys.name] = {"targets": r["targets"], "base": r["base"],
                                "perturbed": r["perturbed"]}
        rows.append((sys.name, "plane", r["base"]["fraction"], r["base"]["max_error"], 0.0))
        rows.append((sys.name, "perturbed-plane", r["perturbed"]["fraction"],
                     r["perturbed"]["max_error"], r["perturbed"]["kato_gap"]))
        rep.check("observability", r["base"]["fraction"], ">=", p["fraction"], sys.name)
        rep.check("observability-perturbed", r["perturbed"]["fraction"], ">=", p["fraction"],
                  sys.name)
    rep.table("observability", ["system", "plane", "fraction", "max_error", "kato_gap"], rows)


# ------------------------------------------------------------------ hoelder


def run_hoelder(cfg, rep: Report):
    p = cfg["params"]
    rows = []
    for sys in _systems(cfg):
        s = _seed(cfg)
        which = [p["which"]] + (["u"] if p["report_unstable"] and p["which"] != "u" else [])
        for wh in which:
            r = cocycle.holder_exponent_estimate(sys, wh, n_pairs=p["pairs"], seed=s,
                                                 fit_tolerance=p["fit_slack"])
            rows += [(sys.name, wh, row[0], row[1], row[2]) for row in r["pairs"]]
            rep.values[f"{sys.name}/{wh}"] = {k: r[k] for k in
                                              ("beta_empirical", "beta_star", "lambda1",
                                               "lambda2", "a", "n_pairs")}
            if wh == p["which"]:
                kind = "hoelder-stable" if wh == "s" else "hoelder-unstable"
                rep.check(kind, r["beta_empirical"], ">=", r["beta_star"] - p["fit_slack"],
                          sys.name)
    rep.table("hoelder_pairs", ["system", "field", "scale", "distance", "kato_gap"], rows)


RUNNERS = {
    "lyapunov": run_lyapunov,
    "manifold": run_manifold,
    "srb-density": run_srb_density,
    "empirical": run_empirical,
    "holonomy": run_holonomy,
    "shadow": run_shadow,
    "markov": run_markov,
    "gibbs": run_gibbs,
    "equilibrium": run_equilibrium,
    "entropy-check": run_entropy_check,
    "observability": run_observability,
    "hoelder": run_hoelder,
}


def run(cfg: dict) -> Report:
    rep = Report(cfg["pipeline"])
    RUNNERS[cfg["pipeline"]](cfg, rep)
    return rep
