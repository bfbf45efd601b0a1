"""The acceptance suite: every headline guarantee checked at its stated
tolerance, one registry entry per criterion.

Each check reports the measured left/right sides of its worst inequality, the
slack, and its runtime; `run_all` powers both the pytest acceptance module
and the command-line `verify` subcommand.
"""

from __future__ import annotations

import math
import time
from collections import OrderedDict
from dataclasses import dataclass, field

import numpy as np

from . import charts as chartsmod
from . import laxoleinik as lox
from . import orbits
from . import shadowing as shad
from . import systems

SCHEMA_VERSION = 1


@dataclass
class CheckResult:
    name: str
    claim: str
    passed: bool
    lhs: float
    rhs: float
    runtime: float
    details: dict = field(default_factory=dict)

    @property
    def slack(self) -> float:
        return self.rhs - self.lhs

    def line(self) -> str:
        tag = "PASS" if self.passed else "FAIL"
        return (f"{tag} {self.name}: lhs={self.lhs:.6g} rhs={self.rhs:.6g} "
                f"slack={self.slack:.3g} [{self.runtime:.2f}s]")

    def to_dict(self) -> dict:
        return {"name": self.name, "claim": self.claim, "passed": bool(self.passed),
                "lhs": self.lhs, "rhs": self.rhs, "slack": self.slack,
                "runtime": self.runtime,
                "details": {k: _plain(v) for k, v in self.details.items()}}


def _plain(v):
    if isinstance(v, (np.floating, np.integer)):
        return v.item()
    if isinstance(v, np.ndarray):
        return v.tolist()
    if isinstance(v, dict):
        return {k: _plain(x) for k, x in v.items()}
    if isinstance(v, (list, tuple)):
        return [_plain(x) for x in v]
    return v


class Context(dict):
    """Shared lazily-built artifacts reused across checks."""

    def cat(self):
        return self.setdefault("cat", systems.cat_map())

    def cat_charts(self):
        if "cat_charts" not in self:
            fam, vc = chartsmod.build_charts(self.cat())
            self["cat_charts"] = (fam, chartsmod.derive_constants(vc, self.cat(), fam))
        return self["cat_charts"]

    def pert(self):
        return self.setdefault("pert", systems.perturbed_cat_map(1e-3, 7))

    def pert_charts(self):
        if "pert_charts" not in self:
            p = self.pert()
            fam, vc = chartsmod.build_charts(p)
            self["pert_charts"] = (fam, chartsmod.derive_constants(vc, p, fam))
        return self["pert_charts"]

    def gms_solve(self):
        if "gms_solve" not in self:
            g = systems.golden_mean_shift(8)
            obs = systems.observable_library("edgecost:default", g)
            ebar = orbits.min_mean_cycle(g, obs)
            grid = lox.ShiftGrid(g)
            cinfo = lox.find_stable_C(g, obs, ebar.value)
            prob = lox.LaxOleinikProblem(g, obs, grid, ebar.value,
                                         C=cinfo["recommended"], tol=1e-10)
            t0 = time.perf_counter()
            res = lox.solve_calibrated(prob)
            self["gms_solve"] = (g, obs, grid, prob, res, time.perf_counter() - t0)
        return self["gms_solve"]

    def cat_solve(self, q):
        key = f"cat_solve_{q}"
        if key not in self:
            cat = self.cat()
            cc = systems.observable_library("coscos", cat)
            ebar = orbits.estimate_ebar(cat, cc, "auto")
            grid = lox.TorusGrid(cat, q)
            prob = lox.LaxOleinikProblem(cat, cc, grid, ebar.value, C=cc.lip,
                                         tol=1e-8, max_iter=100)
            t0 = time.perf_counter()
            res = lox.solve_calibrated(prob, strict=False)
            self[key] = (prob, res, time.perf_counter() - t0)
        return self[key]

    def warm_jit(self):
        if "warm" not in self:
            cat = self.cat()
            cc = systems.observable_library("coscos", cat)
            grid = lox.TorusGrid(cat, 8)
            prob = lox.LaxOleinikProblem(cat, cc, grid, 0.0, C=cc.lip)
            lox.apply_T(np.zeros(grid.n_points), prob)
            self["warm"] = True


# ---------------------------------------------------------------------------
# criteria

def check_calibration_fixed_point(ctx: Context) -> CheckResult:
    t0 = time.perf_counter()
    _, _, _, prob, res, solve_time = ctx.gms_solve()
    rt = time.perf_counter() - t0
    passed = res.converged and res.residual <= 1e-10 and solve_time < 5.0
    return CheckResult(
        name="calibration_fixed_point",
        claim="depth-8 golden-mean solve with the exact cycle value reaches "
              "sup-residual 1e-10 within 5 s",
        passed=passed, lhs=res.residual, rhs=1e-10, runtime=rt,
        details={"C": prob.C, "phibar": prob.phibar, "solve_seconds": solve_time,
                 "iterations": res.iterations_fix_phase})


def check_subaction_inequality(ctx: Context) -> CheckResult:
    ctx.warm_jit()
    t0 = time.perf_counter()
    _, _, _, sprob, sres, _ = ctx.gms_solve()
    s_shift = lox.subaction_check(sres.u, sprob)["min_slack_grid"]
    prob256, res256, t256 = ctx.cat_solve(256)
    prob512, res512, t512 = ctx.cat_solve(512)
    sub256 = lox.subaction_check(res256.u, prob256, n_probe=100_000, seed=42)
    sub512 = lox.subaction_check(res512.u, prob512, n_probe=100_000, seed=42)
    rt = time.perf_counter() - t0
    bound256 = -(prob256.C + prob256.observable.lip) * prob256.grid.mesh
    bound512 = -(prob512.C + prob512.observable.lip) * prob512.grid.mesh
    d256 = sub256["defect_probe"]
    d512 = sub512["defect_probe"]
    shrink_ok = d512 <= d256 / 1.8 + 1e-12
    passed = (s_shift >= -1e-12
              and sub256["min_slack_probe"] >= bound256
              and sub512["min_slack_probe"] >= bound512
              and shrink_ok and (t256 + t512) < 60.0)
    return CheckResult(
        name="subaction_inequality",
        claim="subaction slack nonnegative on the exact shift space; on the "
              "cat lattice the off-grid defect stays within (C+Lip)h and "
              "shrinks by 1.8x from q=256 to q=512 within 60 s",
        passed=passed, lhs=sub256["min_slack_probe"], rhs=bound256, runtime=rt,
        details={"shift_min_slack": s_shift, "defect_256": d256,
                 "defect_512": d512, "shrink_ratio": (d256 / d512 if d512 > 0 else math.inf),
                 "bound_256": bound256, "bound_512": bound512,
                 "solve_seconds": t256 + t512})


def check_lipschitz_bound(ctx: Context) -> CheckResult:
    t0 = time.perf_counter()
    _, _, _, sprob, sres, _ = ctx.gms_solve()
    lip_shift = sres.u.lipschitz_sampled()
    prob256, res256, _ = ctx.cat_solve(256)
    lip_cat = res256.u.lipschitz_sampled(n_pairs=100_000, seed=7)
    _, dc = ctx.cat_charts()
    theory = dc.K_lambda * prob256.observable.lip
    rt = time.perf_counter() - t0
    passed = (lip_shift <= sprob.C + 1e-9
              and lip_cat <= prob256.C + 1e-9
              and lip_cat <= theory)
    return CheckResult(
        name="lipschitz_bound",
        claim="sampled Lipschitz ratio of the returned subaction stays below "
              "the distortion constant (strictly on the exact shift metric) "
              "and below the semi-explicit theory bound",
        passed=passed, lhs=lip_cat, rhs=prob256.C + 1e-9, runtime=rt,
        details={"lip_shift": lip_shift, "C_shift": sprob.C,
                 "lip_cat": lip_cat, "C_cat": prob256.C,
                 "theory_bound": theory})


def check_shadowing_batch(ctx: Context) -> CheckResult:
    cat = ctx.cat()
    fam, dc = ctx.cat_charts()
    t0 = time.perf_counter()
    worst_gap = 0.0
    worst_defect = 0.0
    all_ok = True
    rng = np.random.default_rng(0)
    for seed in range(100):
        po = shad.make_pseudo_orbit(cat, rng.random(2), 200, 1e-4, seed=seed)
        res = shad.shadow(po, fam, dc)
        rep = shad.verify_shadowing_bounds(po, res, dc, cat)
        all_ok = all_ok and rep["passed"]
        oracle = shad.shadow_exact_linear(po, cat)
        worst_gap = max(worst_gap, float(np.max(cat.dist_many(res.p, oracle.p))))
        worst_defect = max(worst_defect, res.true_orbit_defect)
    rt = time.perf_counter() - t0
    passed = all_ok and worst_gap <= 1e-8 and rt < 30.0
    return CheckResult(
        name="improved_shadowing",
        claim="100 seeded pseudo-orbits (n=200, noise 1e-4): pointwise, summed "
              "and max bounds hold with the derived constants and the shadow "
              "orbit matches the exact linear oracle to 1e-8, within 30 s",
        passed=passed, lhs=worst_gap, rhs=1e-8, runtime=rt,
        details={"bounds_all_pass": all_ok, "worst_oracle_gap": worst_gap,
                 "worst_true_orbit_defect": worst_defect,
                 "K_as": dc.K_as, "lam_as": dc.lam_as})


def check_periodic_shadowing(ctx: Context) -> CheckResult:
    cat = ctx.cat()
    fam, dc = ctx.cat_charts()
    t0 = time.perf_counter()
    base = [o for o in orbits.periodic_points(cat, 4) if o.period == 4]
    worst_resid = 0.0
    worst_gap = 0.0
    all_ok = True
    for seed in range(20):
        x0 = base[seed % len(base)].float_points()[0]
        po = shad.make_pseudo_orbit(cat, x0, 12, 1e-5, seed=seed, periodic=True)
        res = shad.shadow_periodic(po, fam, dc)
        worst_resid = max(worst_resid, res.period_residual)
        all_ok = all_ok and res.all_bounds_pass
        p_oracle = shad.periodic_point_exact_linear(po)
        worst_gap = max(worst_gap, cat.dist(res.p[0], p_oracle))
    rt = time.perf_counter() - t0
    passed = all_ok and worst_resid <= 1e-10 and worst_gap <= 1e-8
    return CheckResult(
        name="periodic_shadowing",
        claim="20 seeded periodic pseudo-orbits (n=12, noise 1e-5): the true "
              "periodic point closes to 1e-10, the summed bound holds with "
              "K_APS, and the exact periodic linear solve agrees to 1e-8",
        passed=passed, lhs=worst_resid, rhs=1e-10, runtime=rt,
        details={"worst_period_residual": worst_resid,
                 "worst_oracle_gap": worst_gap, "bounds_all_pass": all_ok,
                 "K_aps": dc.K_aps})


def check_graph_transform_contraction(ctx: Context) -> CheckResult:
    p = ctx.pert()
    fam, dc = ctx.pert_charts()
    t0 = time.perf_counter()
    rng = np.random.default_rng(6)
    worst = 0.0
    for k in range(100):
        x = rng.random(2)
        lm = fam.local_map(x, p.f(x))
        G1 = _random_graph(dc, rng)
        G2 = _random_graph(dc, rng)
        T1 = chartsmod.graph_transform(G1, lm, dc)
        T2 = chartsmod.graph_transform(G2, lm, dc)
        worst = max(worst, T1.sup_dist(T2) / G1.sup_dist(G2))
    rt = time.perf_counter() - t0
    bound = dc.contraction + 1e-3
    return CheckResult(
        name="graph_transform_contraction",
        claim="100 random admissible graph pairs under the perturbed map "
              "contract by at most sigma_s + 2 eta up to interpolation slack",
        passed=worst <= bound, lhs=worst, rhs=bound, runtime=rt,
        details={"contraction_constant": dc.contraction})


def _random_graph(hc, rng):
    n = 2 * chartsmod.DEFAULT_NODES_PER_RADIUS + 1
    slopes = rng.uniform(-hc.alpha, hc.alpha, n - 1) * (2.0 * hc.rho / (n - 1))
    vals = np.concatenate([[0.0], np.cumsum(slopes)])
    vals += rng.uniform(-hc.rho / 2, hc.rho / 2) - vals[(n - 1) // 2]
    return chartsmod.PLGraph(rho=hc.rho, values=np.clip(vals, -hc.rho, hc.rho))


def check_unstable_manifold(ctx: Context) -> CheckResult:
    cat = ctx.cat()
    fam_c, dc_c = ctx.cat_charts()
    p = ctx.pert()
    fam_p, dc_p = ctx.pert_charts()
    t0 = time.perf_counter()
    chain = [np.array([0.3, 0.3])]
    for _ in range(12):
        chain.append(cat.f(chain[-1]))
    G_lin, _ = chartsmod.local_unstable_manifold(fam_c, chain)
    lin_sup = float(np.max(np.abs(G_lin.values)))
    xf = systems.fixed_point(p, (0.01, 0.01))
    _, diffs = chartsmod.unstable_manifold_at_fixed_point(fam_p, xf, 60)
    rates = [diffs[i + 1] / diffs[i] for i in range(len(diffs) - 1) if diffs[i] > 1e-10]
    worst_rate = max(rates) if rates else 0.0
    rt = time.perf_counter() - t0
    bound = dc_p.contraction + 1e-3
    passed = (lin_sup <= 1e-12 and worst_rate <= bound and diffs[59] <= 1e-9)
    return CheckResult(
        name="unstable_manifold",
        claim="the exact cat map yields the zero graph to 1e-12; perturbed-map "
              "iterates converge geometrically at rate at most sigma_s + 2 eta "
              "with successive difference below 1e-9 by depth 60",
        passed=passed, lhs=worst_rate, rhs=bound, runtime=rt,
        details={"linear_sup": lin_sup, "final_diff": float(diffs[59]),
                 "measured_rates_max": worst_rate})


def check_livsic_lower_bound(ctx: Context) -> CheckResult:
    cat = ctx.cat()
    _, dc = ctx.cat_charts()
    cc = systems.observable_library("coscos", cat)
    t0 = time.perf_counter()
    grid = lox.TorusGrid(cat, 64)
    C_theory = dc.K_lambda * cc.lip
    prob = lox.LaxOleinikProblem(cat, cc, grid, 0.0, C=C_theory)
    rep = lox.livsic_lower_bound(prob, n_max=50, constants=dc)
    # negative control: C = 0 with an inflated reference value makes the
    # minimal chain sums decrease linearly at slope (min phi - phibar_run)
    phibar_run = 0.5
    prob0 = lox.LaxOleinikProblem(cat, cc, grid, phibar_run, C=0.0)
    rep0 = lox.livsic_lower_bound(prob0, n_max=50)
    expected_slope = float(np.min(prob0.phi_vals)) - phibar_run
    rt = time.perf_counter() - t0
    passed = (rep["bound_holds"] and rep["stabilized"]
              and abs(rep0["slope"] - expected_slope) <= 1e-9
              and not rep0["criterion_ok"])
    return CheckResult(
        name="livsic_lower_bound",
        claim="value iteration at the theory constant stays above "
              "-Lip(phi) delta_AS for n <= 50; the C=0 control with an "
              "inflated reference decreases at slope min(phi) - phibar and is "
              "flagged as a criterion failure",
        passed=passed, lhs=float(rep["I"].min()), rhs=rep["bound"], runtime=rt,
        details={"I_final": float(rep["I"][-1]), "bound": rep["bound"],
                 "control_slope": rep0["slope"],
                 "control_expected_slope": expected_slope,
                 "C_theory": C_theory})


def check_brute_force_equivalence(ctx: Context) -> CheckResult:
    cat = ctx.cat()
    cc = systems.observable_library("coscos", cat)
    t0 = time.perf_counter()
    grid = lox.TorusGrid(cat, 8)
    prob = lox.LaxOleinikProblem(cat, cc, grid, 0.0, C=1.3)
    N = grid.n_points
    E = np.empty((N, N))
    for i in range(N):
        E[i] = (prob.phi_vals[i] - prob.phibar
                + prob.C * systems.torus_dist(grid.fpoints[i], grid.points))
    gaps = []
    for n in range(1, 5):
        V = np.zeros(N)
        for _ in range(n):
            V, _ = lox.apply_T(V, prob)
        brute = math.inf
        for x0 in range(N):
            if n == 1:
                brute = min(brute, float(E[x0].min()))
                continue
            stage = E[x0][:, None] + E              # paths x0 -> x1 -> x2
            for _ in range(n - 2):
                stage = stage[:, :, None] + E[None, :, :]
                stage = stage.reshape(-1, N)
            brute = min(brute, float(stage.min()))
        gaps.append(abs(float(V.min()) - brute))
    # exact cycle-mean enumeration on the golden-mean graph
    g = systems.golden_mean_shift(6)
    rng = np.random.default_rng(13)
    mmc_gap = 0.0
    for _ in range(25):
        w = rng.normal(size=3)
        obs = systems.observable_library(f"edgecost:{w[0]},{w[1]},{w[2]}", g)
        got = orbits.min_mean_cycle(g, obs).value
        exact = min(w[0], (w[1] + w[2]) / 2.0)
        mmc_gap = max(mmc_gap, abs(got - exact))
    rt = time.perf_counter() - t0
    passed = max(gaps) == 0.0 and mmc_gap == 0.0
    return CheckResult(
        name="brute_force_equivalence",
        claim="value iteration equals exhaustive minimization over all grid "
              "paths (q=8, n<=4) and the cycle-mean oracle equals the "
              "exhaustive simple-cycle minimum, exactly",
        passed=passed, lhs=max(max(gaps), mmc_gap), rhs=0.0, runtime=rt,
        details={"path_gaps": gaps, "mmc_gap": mmc_gap})


def check_periodic_point_census(ctx: Context) -> CheckResult:
    cat = ctx.cat()
    t0 = time.perf_counter()
    worst = 0
    counts = {}
    for n in range(1, 13):
        det_count = orbits.periodic_point_count(n)
        trace_count = _lucas_trace(n) - 2
        pts = orbits.periodic_points(cat, n, group=False)
        counts[n] = det_count
        ok = det_count == trace_count == len(pts) == len(set(pts))
        if not ok:
            worst = n
    rt = time.perf_counter() - t0
    return CheckResult(
        name="periodic_point_census",
        claim="cat-map periodic point counts match |det(A^n - I)| and the "
              "trace identity for n <= 12 in exact arithmetic",
        passed=worst == 0, lhs=float(worst), rhs=0.0, runtime=rt,
        details={"counts": counts})


def _lucas_trace(n: int) -> int:
    An = orbits.cat_power_int(n)
    return An[0][0] + An[1][1]


CHECKS = OrderedDict([
    ("calibration_fixed_point", check_calibration_fixed_point),
    ("subaction_inequality", check_subaction_inequality),
    ("lipschitz_bound", check_lipschitz_bound),
    ("improved_shadowing", check_shadowing_batch),
    ("periodic_shadowing", check_periodic_shadowing),
    ("graph_transform_contraction", check_graph_transform_contraction),
    ("unstable_manifold", check_unstable_manifold),
    ("livsic_lower_bound", check_livsic_lower_bound),
    ("brute_force_equivalence", check_brute_force_equivalence),
    ("periodic_point_census", check_periodic_point_census),
])


def run_check(name: str, ctx: Context = None) -> CheckResult:
    ctx = ctx if ctx is not None else Context()
    return CHECKS[name](ctx)


def run_all(only: str = None, ctx: Context = None, echo=print):
    ctx = ctx if ctx is not None else Context()
    results = []
    for name, fn in CHECKS.items():
        if only and only not in name:
            continue
        res = fn(ctx)
        results.append(res)
        if echo:
            echo(res.line())
    return results
