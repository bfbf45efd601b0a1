"""Command-line front end: solve, shadow, periodic, ebar, manifold, verify.

Configuration is a single JSON document; every command-line flag overrides the
config key of the same name.  Outputs are headers-first CSV and JSON documents
with a schema_version field; identical config and seed produce byte-identical
files.  Failure paths exit nonzero with a single-line machine-parsable prefix:
"error:" for configuration problems (exit 1), "fail:" for computational
failures such as divergence or violated bounds (exit 2).
"""

from __future__ import annotations

import argparse
import json
import sys

import numpy as np

from . import charts as chartsmod
from . import laxoleinik as lox
from . import orbits
from . import shadowing as shad
from . import systems
from . import verify as verifymod

SCHEMA_VERSION = 1


class ConfigError(ValueError):
    pass


# allowed config keys per command: name -> (type, default)
_COMMON = {
    "system": (str, None),
    "observable": (str, None),
    "seed": (int, 0),
    "out": (str, None),
    "json": (str, None),
    "threads": (int, None),
    "gnuplot": (bool, False),
}
SCHEMAS = {
    "solve": {**_COMMON, "grid": (int, 256), "C": ((float, str), "auto"),
              "phibar": ((float, str), "auto"), "tol": (float, 1e-10),
              "max_iter": (int, 20000), "constants": (dict, None)},
    "shadow": {**_COMMON, "len": (int, 200), "noise": (float, 1e-4),
               "periodic": (bool, False), "s_max": (int, 12),
               "orbit_csv": (str, None), "nodes": (int, None),
               "constants": (dict, None)},
    "periodic": {**_COMMON, "n": (int, 6)},
    "ebar": {**_COMMON, "phibar": ((float, str), "auto"), "n": (int, 512),
             "samples": (int, 1024)},
    "manifold": {**_COMMON, "n": (int, 60), "constants": (dict, None)},
    "verify": {**_COMMON, "only": (str, None)},
}


def _validate(cmd: str, cfg: dict) -> dict:
    schema = SCHEMAS[cmd]
    unknown = set(cfg) - set(schema) - {"command"}
    if unknown:
        raise ConfigError(f"unknown config keys for {cmd}: {sorted(unknown)}")
    out = {}
    for key, (typ, default) in schema.items():
        val = cfg.get(key, default)
        if val is not None and not isinstance(typ, tuple) and typ in (int, float):
            try:
                val = typ(val)
            except (TypeError, ValueError):
                raise ConfigError(f"config key {key!r} must be {typ.__name__}")
        out[key] = val
    return out


def _need(cfg, key):
    if cfg.get(key) is None:
        raise ConfigError(f"missing required config key {key!r}")
    return cfg[key]


def _np_safe(v):
    if isinstance(v, (np.bool_,)):
        return bool(v)
    if isinstance(v, (np.floating, np.integer)):
        return v.item()
    if isinstance(v, np.ndarray):
        return v.tolist()
    raise TypeError(f"not JSON serializable: {type(v)}")


def _dump_json(path, obj):
    text = json.dumps(obj, sort_keys=True, indent=2, default=_np_safe) + "\n"
    if path:
        with open(path, "w") as fh:
            fh.write(text)
    return text


def _gnuplot_script(csv_path, columns, title):
    gp = csv_path + ".gp"
    with open(gp, "w") as fh:
        fh.write(f'set datafile separator ","\nset key off\nset title "{title}"\n')
        fh.write(f'plot "{csv_path}" using {columns} with points pt 7 ps 0.3\n')
    return gp


def _constants_from_cfg(cfg):
    over = cfg.get("constants") or {}
    allowed = {"sigma_u", "sigma_s", "eta", "rho"}
    bad = set(over) - allowed
    if bad:
        raise ConfigError(f"unknown constants overrides: {sorted(bad)}")
    return chartsmod.HyperbolicConstants(**over)


def _resolve_phibar(system, obs, policy, seed, charts=None):
    if isinstance(policy, str) and not policy.startswith("auto"):
        try:
            return orbits.EbarEstimate(value=float(policy), method="fixed")
        except ValueError:
            raise ConfigError(f"bad phibar policy {policy!r}")
    return orbits.estimate_ebar(system, obs, policy, seed=seed, charts=charts)


# ---------------------------------------------------------------------------
# commands

def cmd_solve(cfg) -> int:
    system = systems.parse_system(_need(cfg, "system"))
    obs = systems.observable_library(_need(cfg, "observable"), system)

    derived = None
    charts_pair = None
    if system.kind == "torus":
        fam, vc = chartsmod.build_charts(system, _constants_from_cfg(cfg))
        derived = chartsmod.derive_constants(vc, system, fam)
        charts_pair = (fam, derived)
        grid = lox.TorusGrid(system, cfg["grid"])
    else:
        grid = lox.ShiftGrid(system)
    ebar = _resolve_phibar(system, obs, cfg["phibar"], cfg["seed"], charts_pair)

    C = cfg["C"]
    if C == "auto":
        C = lox.find_stable_C(system, obs, ebar.value)["recommended"]
    elif C == "theory":
        if derived is None:
            raise ConfigError("the theory distortion constant needs a torus system")
        C = derived.K_lambda * obs.lip
    else:
        try:
            C = float(C)
        except (TypeError, ValueError):
            raise ConfigError(f"bad C policy {C!r}")

    prob = lox.LaxOleinikProblem(system, obs, grid, ebar.value, C=C,
                                 tol=cfg["tol"], max_iter=cfg["max_iter"])
    try:
        res = lox.solve_calibrated(prob)
    except lox.DivergenceError as err:
        report = {"schema_version": SCHEMA_VERSION, "status": "divergence",
                  "slope": err.slope, "witness": err.witness,
                  "C": C, "phibar": ebar.value}
        _dump_json(cfg["json"], report)
        print(f"fail: divergence at C={C:g} (slope {err.slope:.3e}); "
              f"witness written" if cfg["json"] else
              f"fail: divergence at C={C:g} (slope {err.slope:.3e})")
        return 2
    except lox.MaxIterationsError as err:
        print(f"fail: {err}")
        return 2

    sub = lox.subaction_check(res.u, prob,
                              K_lambda=None if derived is None else derived.K_lambda)
    report = {"schema_version": SCHEMA_VERSION, "status": "ok",
              "system": system.sid, "observable": obs.name,
              "phibar": ebar.value, "phibar_method": ebar.method,
              "C": C, **res.report_dict(),
              "subaction": {k: v for k, v in sub.items() if not isinstance(v, np.ndarray)}}
    if derived is not None:
        report["constants"] = derived.to_flat_dict()
    _dump_json(cfg["json"], report)
    if cfg["out"]:
        res.u.to_csv(cfg["out"])
        if cfg["gnuplot"]:
            cols = "1:2:3" if grid.kind == "torus" else "0:2"
            _gnuplot_script(cfg["out"], cols, "calibrated subaction")
    ok = res.converged and sub["passed"]
    print(f"ok: residual {res.residual:.3e}, min slack {sub['min_slack_grid']:.3e}"
          if ok else "fail: residuals above tolerance")
    return 0 if ok else 2


def cmd_shadow(cfg) -> int:
    system = systems.parse_system(_need(cfg, "system"))
    if system.kind != "torus":
        raise ConfigError("shadowing runs on torus systems")
    fam, vc = chartsmod.build_charts(system, _constants_from_cfg(cfg))
    dc = chartsmod.derive_constants(vc, system, fam)

    try:
        if cfg["orbit_csv"]:
            po = shad.load_pseudo_orbit_csv(cfg["orbit_csv"], system,
                                            periodic=cfg["periodic"])
        elif cfg["periodic"]:
            n = cfg["len"]
            x0 = _periodic_start(system, n, fam, dc)
            po = shad.make_pseudo_orbit(system, x0, n, cfg["noise"],
                                        seed=cfg["seed"], periodic=True, constants=dc)
        else:
            rng = np.random.default_rng(cfg["seed"])
            po = shad.make_pseudo_orbit(system, rng.random(2), cfg["len"],
                                        cfg["noise"], seed=cfg["seed"], constants=dc)
        if cfg["periodic"]:
            res = shad.shadow_periodic(po, fam, dc, s_max=cfg["s_max"],
                                       n_nodes=cfg["nodes"])
        else:
            res = shad.shadow(po, fam, dc, n_nodes=cfg["nodes"])
    except shad.ShadowingError as err:
        print(f"fail: {err}")
        return 2
    doc = res.to_json_dict()
    _dump_json(cfg["json"], doc)
    if cfg["out"]:
        po.save_csv(cfg["out"])
        if cfg["gnuplot"]:
            _gnuplot_script(cfg["out"], "1:2", "pseudo-orbit")
    ok = res.all_bounds_pass and res.true_orbit_defect <= 1e-10
    if cfg["periodic"]:
        ok = ok and res.period_residual <= 1e-10
    worst = min(b.slack for b in res.bounds)
    print(f"ok: bounds hold (min slack {worst:.3e})" if ok
          else "fail: shadowing bound violated")
    return 0 if ok else 2


def _periodic_start(system, n, fam, dc):
    if system.is_linear_cat:
        for o in orbits.periodic_points(systems.cat_map(), n):
            return o.float_points()[0]
    pts = orbits.periodic_points_perturbed(system, n, fam, dc, max_orbits=1)
    if not pts:
        raise ConfigError(f"no periodic point of period {n} found")
    return pts[0]


def cmd_periodic(cfg) -> int:
    system = systems.parse_system(_need(cfg, "system"))
    obs = None
    if cfg["observable"]:
        obs = systems.observable_library(cfg["observable"], system)
    n = cfg["n"]
    if system.kind == "shift":
        orbs = orbits.shift_periodic_orbits(system, n)
    elif system.is_linear_cat:
        orbs = []
        for P in range(1, n + 1):
            orbs.extend(o for o in orbits.periodic_points(system, P) if o.period == P)
    else:
        raise ConfigError("periodic enumeration needs the exact cat map or a shift")
    rows = []
    for o in orbs:
        mean = o.birkhoff_mean(obs) if obs else float("nan")
        if o.kind == "torus":
            x = o.float_points()[0]
            rows.append((o.period, repr(float(x[0])), repr(float(x[1])), repr(mean)))
        else:
            rows.append((o.period, o.points[0], "", repr(mean)))
    if cfg["out"]:
        import csv as csvmod
        with open(cfg["out"], "w", newline="") as fh:
            w = csvmod.writer(fh)
            w.writerow(["period", "x1", "x2", "birkhoff_mean"])
            w.writerows(rows)
    _dump_json(cfg["json"], {"schema_version": SCHEMA_VERSION,
                             "orbits": len(rows),
                             "points": int(sum(r[0] for r in rows))})
    print(f"ok: {len(rows)} orbits up to period {n}")
    return 0


def cmd_ebar(cfg) -> int:
    system = systems.parse_system(_need(cfg, "system"))
    obs = systems.observable_library(_need(cfg, "observable"), system)
    est = _resolve_phibar(system, obs, cfg["phibar"], cfg["seed"])
    sweep = orbits.sweep_min(system, obs, n=cfg["n"], samples=cfg["samples"],
                             seed=cfg["seed"])
    cert = None
    if isinstance(est.certificate, orbits.PeriodicOrbit):
        cert = {"period": est.certificate.period,
                "cycle": "".join(est.certificate.cycle) if est.certificate.cycle else None}
    doc = {"schema_version": SCHEMA_VERSION, "value": est.value,
           "method": est.method, "certificate": cert,
           "sweep_bracket": sweep.value, "meta": est.meta}
    _dump_json(cfg["json"], doc)
    print(f"ok: phibar {est.value:.12g} ({est.method}), sweep bracket {sweep.value:.6g}")
    return 0


def cmd_manifold(cfg) -> int:
    system = systems.parse_system(_need(cfg, "system"))
    if system.kind != "torus":
        raise ConfigError("unstable manifolds live on the torus systems")
    fam, vc = chartsmod.build_charts(system, _constants_from_cfg(cfg))
    xf = systems.fixed_point(system, (0.01, 0.01))
    G, diffs = chartsmod.unstable_manifold_at_fixed_point(fam, xf, cfg["n"])
    rates = [float(diffs[i + 1] / diffs[i]) for i in range(len(diffs) - 1)
             if diffs[i] > 1e-10]
    doc = {"schema_version": SCHEMA_VERSION, "fixed_point": xf.tolist(),
           "depth": cfg["n"], "final_diff": float(diffs[-1]),
           "max_rate": max(rates) if rates else 0.0,
           "rate_bound": vc.contraction, "slope": G.slope(),
           "slope_bound": vc.alpha}
    _dump_json(cfg["json"], doc)
    if cfg["out"]:
        G.to_csv(cfg["out"])
        if cfg["gnuplot"]:
            _gnuplot_script(cfg["out"], "1:2", "local unstable manifold")
    ok = doc["final_diff"] <= 1e-9 and (not rates or max(rates) <= vc.contraction + 1e-3)
    print(f"ok: converged, final diff {doc['final_diff']:.3e}" if ok
          else "fail: manifold iteration did not certify")
    return 0 if ok else 2


def cmd_verify(cfg) -> int:
    results = verifymod.run_all(only=cfg["only"])
    doc = {"schema_version": SCHEMA_VERSION,
           "checks": [r.to_dict() for r in results],
           "passed": all(r.passed for r in results)}
    _dump_json(cfg["json"], doc)
    if not results:
        print("error: no checks match the filter")
        return 1
    failed = [r.name for r in results if not r.passed]
    print("ok: all checks passed" if not failed
          else f"fail: {len(failed)} checks failed: {failed}")
    return 0 if not failed else 2


COMMANDS = {"solve": cmd_solve, "shadow": cmd_shadow, "periodic": cmd_periodic,
            "ebar": cmd_ebar, "manifold": cmd_manifold, "verify": cmd_verify}


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise ConfigError(message)


def _build_parser():
    ap = _Parser(
        prog="ergopt",
        description="calibrated subactions and quantitative shadowing "
                    "for hyperbolic maps")
    sub = ap.add_subparsers(dest="command", required=True, parser_class=_Parser)
    for cmd, schema in SCHEMAS.items():
        p = sub.add_parser(cmd)
        p.add_argument("--config", help="JSON config file; flags override it")
        for key, (typ, default) in schema.items():
            flag = "--" + key.replace("_", "-")
            if typ is bool:
                p.add_argument(flag, action="store_true", default=None)
            elif typ is dict:
                p.add_argument(flag, type=json.loads, default=None)
            elif isinstance(typ, tuple):
                p.add_argument(flag, type=str, default=None)
            else:
                p.add_argument(flag, type=typ, default=None)
    return ap


def main(argv=None) -> int:
    try:
        ap = _build_parser()
        args = vars(ap.parse_args(argv))
    except ConfigError as err:
        print(f"error: {err}")
        return 1
    cmd = args.pop("command")
    cfg_path = args.pop("config", None)
    cfg = {}
    try:
        if cfg_path:
            with open(cfg_path) as fh:
                cfg = json.load(fh)
            if not isinstance(cfg, dict):
                raise ConfigError("config must be a JSON object")
            if cfg.get("command") not in (None, cmd):
                raise ConfigError("config command disagrees with the subcommand")
        for key, val in args.items():
            if val is not None:
                cfg[key] = val
        cfg = _validate(cmd, cfg)
        if cfg.get("threads"):
            import numba
            numba.set_num_threads(max(1, cfg["threads"]))
        return COMMANDS[cmd](cfg)
    except (ConfigError, ValueError, OSError, json.JSONDecodeError) as err:
        print(f"error: {err}")
        return 1
    except chartsmod.InfeasibleConstantsError as err:
        print(f"fail: {err}")
        return 2


if __name__ == "__main__":
    sys.exit(main())
