"""Command-line front end.

Every command reads a JSON config (validated against the bundled schema),
writes ``*.json``/``*.csv`` files into ``--out`` and exits with status 0
only if every enabled assertion passed.
"""
from __future__ import annotations

import argparse
import csv
import itertools
import json
import logging
import os
import sys
from dataclasses import dataclass, field
from importlib import resources

import jsonschema
import numpy as np

from .errors import BudgetError, ConfigError, PropertyOneViolation
from .fourier import TrigPoly
from .lindstedt import compute_series, zero_mode_alpha
from .smalldiv import GOLDEN, Frequency, build_scales, bryuno_partial

log = logging.getLogger("lindtorus")

DEFAULTS = {
    "omega": "golden2",
    "f": "standard",
    "K": 3,
    "K_tree": 3,
    "K_resum": 2,
    "n_max": 8,
    "M_max": 20,
    "epsilon": [1e-3, 5e-4, 2.5e-4, -1e-3, -5e-4, -2.5e-4],
    "eps_max": 0.05,
    "beta0": [0.3, 1.1, 2.5],
    "x_samples": 20,
    "grid": {"roots": 2048, "residual": 32},
    "ode": {"T": 10.0, "h": 1e-3, "eps_pair": [0.01, 0.005]},
    "tolerances": {"vanish": 1e-10, "identity": 1e-9, "r_range": 1e-6, "newton": 1e-12},
    "flags": {"regularised": True, "convex_sign_flip": False},
}


def load_schema():
    return json.loads(resources.files("lindtorus").joinpath("config_schema.json").read_text())


def _merge(base, over):
    out = dict(base)
    for k, v in over.items():
        if isinstance(v, dict) and isinstance(out.get(k), dict):
            out[k] = _merge(out[k], v)
        else:
            out[k] = v
    return out


@dataclass
class RunConfig:
    raw: dict
    freq: Frequency
    f: TrigPoly
    scales: object
    threads: int = 1
    extra: dict = field(default_factory=dict)

    def __getitem__(self, key):
        return self.raw[key]

    @property
    def d(self):
        return self.f.d


def load_config(data: dict, threads: int = 1) -> RunConfig:
    """Validate ``data`` (schema and module preconditions) and build objects.

    All problems are collected and raised together as one ``ConfigError``.
    """
    problems = [f"{'/'.join(str(p) for p in e.absolute_path) or '<root>'}: {e.message}"
                for e in jsonschema.Draft202012Validator(load_schema()).iter_errors(data)]
    if problems:
        raise ConfigError(problems)
    cfg = _merge(DEFAULTS, data)
    omega = (1.0, GOLDEN) if cfg["omega"] == "golden2" else tuple(float(w) for w in cfg["omega"])
    d = len(omega)
    if "d" in cfg and cfg["d"] != d:
        problems.append(f"d: {cfg['d']} does not match omega of length {d}")
    f = None
    if cfg["f"] == "standard":
        if d != 2:
            problems.append("f: the standard example needs d = 2")
        else:
            f = TrigPoly.standard_example()
    else:
        try:
            f = TrigPoly.from_records(cfg["f"], d=d)
        except ValueError as exc:
            problems.append(f"f: {exc}")
    if any(abs(e) > cfg["eps_max"] for e in cfg["epsilon"]):
        problems.append(f"epsilon: values must satisfy |eps| <= eps_max = {cfg['eps_max']}")
    if cfg["flags"]["regularised"] and cfg["K_resum"] > cfg["K_tree"]:
        problems.append("K_resum: must not exceed K_tree")
    if threads < 1:
        problems.append("--threads: must be positive")
    freq = scales = None
    if not problems:
        try:
            freq = Frequency(omega, M_max=cfg["M_max"])
            scales = build_scales(freq, cfg["n_max"])
        except (ValueError, BudgetError) as exc:
            problems.append(f"omega/M_max/n_max: {exc}")
    if problems:
        raise ConfigError(problems)
    return RunConfig(cfg, freq, f, scales, threads)


# --------------------------------------------------------------------------
# assertion bookkeeping

class Checks:
    def __init__(self):
        self.items = []

    def add(self, name, passed, **info):
        self.items.append({"check": name, "pass": bool(passed), **info})
        return bool(passed)

    def extend(self, reports, prefix=""):
        for r in reports:
            r = dict(r)
            r["check"] = prefix + r["check"]
            self.items.append(r)

    @property
    def ok(self):
        return all(i["pass"] for i in self.items)

    def failed(self):
        return [i["check"] for i in self.items if not i["pass"]]


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, (np.bool_,)):
        return bool(obj)
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, np.floating):
        return float(obj)
    if isinstance(obj, (complex, np.complexfloating)):
        return [float(obj.real), float(obj.imag)]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    return obj


def write_json(path, payload):
    # json uses repr for floats: shortest string that round-trips exactly
    with open(path, "w") as fh:
        json.dump(_jsonable(payload), fh, indent=1, allow_nan=True)
        fh.write("\n")


def write_csv(path, header, rows):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for r in rows:
            w.writerow([repr(float(v)) if isinstance(v, (float, np.floating)) else v for v in r])


# --------------------------------------------------------------------------
# commands

def cmd_smalldiv(cfg: RunConfig, out):
    fr, sc = cfg.freq, cfg.scales
    chk = Checks()
    al = list(fr.alpha_table)
    chk.add("alpha_non_increasing", all(al[i + 1] <= al[i] for i in range(len(al) - 1)))
    chk.add("m0_is_zero", sc.m_seq[0] == 0)
    chk.add("m_recursion", all(sc.m_seq[n + 1] == sc.m_seq[n] + sc.p_seq[n] + 1 for n in range(len(sc.p_seq))))
    payload = {
        "omega": list(fr.omega), "M_max": fr.M_max,
        "alpha": al, "argmin": [list(v) for v in fr.argmin_table],
        "bryuno_partial": [bryuno_partial(fr, M) for M in range(fr.M_max + 1)],
        "m_seq": list(sc.m_seq), "p_seq": list(sc.p_seq), "n_max": sc.n_max,
        "halving_failures": list(sc.halving_failures), "checks": chk.items,
    }
    write_json(os.path.join(out, "smalldiv.json"), payload)
    write_csv(os.path.join(out, "alpha.csv"), ["m", "alpha", "argmin"],
              [(m, a, " ".join(map(str, nu))) for m, (a, nu) in enumerate(zip(al, fr.argmin_table))])
    return chk


def _table(cfg, K=None):
    return compute_series(cfg.f, cfg.freq, cfg["K"] if K is None else K)


def cmd_series(cfg: RunConfig, out):
    from .torus import assemble
    tab = _table(cfg)
    chk = Checks()
    tol = cfg["tolerances"]["vanish"]
    for k in range(0, tab.K + 1):
        sc = tab.scales[k] if k < len(tab.scales) else 1.0
        za = max(p.max_abs() for p in zero_mode_alpha(tab, k))
        chk.add("zero_mode_alpha_cancellation", za <= tol * max(sc, 1.0), k=k, max_coefficient=za)
        g = tab.G(k)
        chk.add("zero_mode_beta_mean_zero", abs(g[0]) <= 1e-12 * max(sc, 1.0), k=k, harmonic0=abs(g[0]))
    with open(os.path.join(out, "series.json"), "w") as fh:
        fh.write(tab.to_json())
    with open(os.path.join(out, "series.csv"), "w") as fh:
        fh.write(tab.to_csv())
    if cfg["epsilon"]:
        fields = []
        for e in cfg["epsilon"]:
            for b0 in cfg["beta0"]:
                fields.append(assemble(tab, e, b0).to_dict())
        write_json(os.path.join(out, "fields.json"), {"fields": fields})
    write_json(os.path.join(out, "series_checks.json"), {"checks": chk.items})
    return chk


def _standard_x(ce, k, n, count):
    return ce.sample_x(k, n, count, np.random.default_rng(1000 * k + n))


def run_tree_suites(cfg: RunConfig, chk: Checks):
    from . import trees as T
    tab = _table(cfg, max(cfg["K"], cfg["K_tree"] + 1))
    te = T.TreeEnumerator(cfg.f, cfg.scales)
    ce = T.ClusterEnumerator(cfg.f, cfg.scales)
    Kt = cfg["K_tree"]
    tol = cfg["tolerances"]["identity"]
    betas = cfg["beta0"]
    d = cfg.d
    # oracle equivalence
    for k in range(1, Kt + 1):
        ref_scale = max((p.max_abs() for kk, _, _, p in tab.entries() if kk == k), default=1.0)
        worst = 0.0
        for nu in itertools.product(range(-3, 4), repeat=d):
            if not 0 < sum(map(abs, nu)) <= 3:
                continue
            for h in range(d + 1):
                diff = te.sum_trees(k, nu, h) - tab.entry(k, nu, h)
                worst = max(worst, max((abs(diff.eval(b)) for b in betas), default=0.0))
        chk.add("tree_sum_matches_recursion", worst <= 1e-10 * ref_scale, k=k, max_deviation=worst)
    for k in range(1, Kt + 1):
        chk.extend(T.verify_zero_mode_link(k, tab, ce, betas, tol=tol))
    report = []
    for k in range(1, Kt + 1):
        for n in range(0, min(4, cfg.scales.n_max) + 1):
            xs = _standard_x(ce, k, n, cfg["x_samples"])
            chk.extend(T.verify_transpose_symmetries(k, ce, n, xs, betas[0], tol=tol))
            chk.extend(T.verify_derivative_zeros(k, ce, n, betas[0], tol=tol))
    for k in range(2, Kt + 1):
        res = T.decomposition_check(k, ce, 1, [0.01, 0.03, 0.1], betas[0])
        chk.add("self_energy_decomposition", res <= 1e-8, k=k, residual=res)
        report.append(T.slope_identity_report(k, tab, ce, betas[0]))
    cnt = T.counting_check_trees(te, Kt)
    chk.add("tree_counting_bound", not cnt["violations"], checked=cnt["checked"], violations=cnt["violations"])
    cc = T.counting_check_clusters(ce, Kt, range(0, min(4, cfg.scales.n_max) + 1), xs_per_scale=21)
    chk.add("cluster_counting_bound", not cc["violations"], checked=cc["checked"], violations=cc["violations"])
    return {"slope_identity": report}


def run_resum_suites(cfg: RunConfig, chk: Checks):
    from . import resum as R
    from .trees import ClusterEnumerator
    tol = cfg["tolerances"]["identity"]
    Kr = cfg["K_resum"]
    b0 = cfg["beta0"][0]
    d = cfg.d
    st = R.build_resum(cfg.f, cfg.freq, cfg.scales, Kr, beta0=b0, symbolic=True)
    ce = ClusterEnumerator(cfg.f, cfg.scales)
    for n in range(0, min(4, cfg.scales.n_max) + 1):
        xs = _standard_x(ce, 2, n, cfg["x_samples"])
        chk.extend(R.check_matrix_symmetries(st, n, xs, tol=tol))
    rat = R.block_order_ratios(st, min(4, cfg.scales.n_max), 1e-4)
    ok = _ratio_bounded(rat["alpha_alpha_over_x2"]) and _ratio_bounded(rat["beta_alpha_over_x"])
    chk.add("resummed_block_orders", ok, ratios=rat)
    rng = np.random.default_rng(7)
    worst = 0.0
    for i in range(100):
        dd = 2 + i % 2
        B = R.random_class_member(dd, rng)
        res = R.class_closure_check(B, rng.uniform(0.05, 1.0, 5), dd)
        worst = max(worst, res["inverse_deviation"])
    chk.add("class_closure_under_inversion", worst <= 1e-10, max_deviation=worst)
    # re-expansion
    K = cfg["K"]
    tab = _table(cfg, K + 1)
    nus = [nu for nu in itertools.product(range(-3, 4), repeat=d) if 0 < sum(map(abs, nu)) <= 3]
    worst = 0.0
    for b in cfg["beta0"][:2]:
        sym = R.build_resum(cfg.f, cfg.freq, cfg.scales, K, beta0=b, symbolic=True)
        rt = R.resummed_coeffs(sym, K, nus)
        for k in range(1, K + 1):
            ref_scale = max(max(abs(tab.entry(k, nu, h).eval(b)) for h in range(d + 1)) for nu in nus) or 1.0
            for nu in nus:
                ref = np.array([tab.entry(k, nu, h).eval(b) for h in range(d + 1)])
                worst = max(worst, float(np.abs(rt.eps_order(nu, k) - ref).max()) / ref_scale)
    chk.add("resummed_reexpansion", worst <= 1e-8, max_relative_deviation=worst)
    eps = 1e-5
    num = R.build_resum(cfg.f, cfg.freq, cfg.scales, Kr, eps=eps, beta0=b0)
    det = R.determinant_monitor(num, min(4, cfg.scales.n_max), [1e-3, 3e-3, 1e-2, 3e-2])
    return {"determinant_monitor": {"eps": eps, "rows": det}}


def _ratio_bounded(r, factor=2.0):
    r = np.asarray(r, float)
    if r.max() <= 1e-12:
        return True
    return bool(r[0] <= factor * r[-1] + 1e-12)


def cmd_identity_suites(cfg: RunConfig, out):
    chk = Checks()
    extra = run_tree_suites(cfg, chk)
    extra.update(run_resum_suites(cfg, chk))
    write_json(os.path.join(out, "identity_report.json"), {"checks": chk.items, "diagnostics": extra})
    return chk


def cmd_self_energy(cfg: RunConfig, out):
    from . import resum as R
    from .trees import ClusterEnumerator
    ce = ClusterEnumerator(cfg.f, cfg.scales)
    b0 = cfg["beta0"][0]
    rows = []
    for k in range(1, cfg["K_tree"] + 1):
        for n in range(-1, min(4, cfg.scales.n_max) + 1):
            xs = _standard_x(ce, k, max(n, 0), cfg["x_samples"])
            J = ce.cumulative(k, xs, n, b0)
            for i, x in enumerate(xs):
                rows.append({"k": k, "n": n, "x": float(x), "value": J.value[i], "d1": J.d1[i], "d2": J.d2[i]})
    st = R.build_resum(cfg.f, cfg.freq, cfg.scales, cfg["K_resum"], beta0=b0, symbolic=True)
    grid = np.linspace(-0.05, 0.05, 11)
    write_json(os.path.join(out, "self_energy.json"),
               {"beta0": b0, "plain": rows, "resummed": R.dump_state(st, grid, range(0, 3))})
    return Checks()


def _bifurcation(cfg, tab):
    from .torus import classify_condition, solve_bifurcation
    from .trees import ClusterEnumerator
    regime = classify_condition(tab, cluster_enum=ClusterEnumerator(cfg.f, cfg.scales), K_tree=cfg["K_tree"],
                                tol=cfg["tolerances"]["vanish"])
    res = solve_bifurcation(tab, eps_list=cfg["epsilon"], regime=regime, grid=cfg["grid"]["roots"],
                            tol=cfg["tolerances"]["newton"])
    return regime, res


def cmd_bifurcation(cfg: RunConfig, out):
    tab = _table(cfg)
    regime, res = _bifurcation(cfg, tab)
    chk = Checks()
    if regime.kind == "Condition2":
        chk.add("at_least_two_roots", len(res.roots) >= 2, roots=len(res.roots))
        signs = [r.slope_sign for r in res.roots]
        alt = all(signs[i] != signs[(i + 1) % len(signs)] for i in range(len(signs))) if len(signs) > 1 else False
        chk.add("alternating_root_signs", alt)
        for br in res.branches:
            chk.add("newton_branch_converged", br["converged"], eps=br["eps"], root=br["root_index"],
                    residual=br["G_residual"])
        for e in cfg["epsilon"]:
            if e != 0:
                chk.add("selected_branch_exists", res.selected(e) is not None, eps=e)
    write_json(os.path.join(out, "bifurcation.json"), {"regime": regime.to_dict(), **res.to_dict(), "checks": chk.items})
    write_csv(os.path.join(out, "branches.csv"), ["eps", "beta0", "root_index", "selected", "G_residual"],
              [(b["eps"], b["beta0"], b["root_index"], int(b["selected"]), b["G_residual"]) for b in res.branches])
    return chk


def cmd_torus(cfg: RunConfig, out):
    from . import resum as R
    from .torus import assemble, verify_ode, verify_residual
    tab = _table(cfg)
    regime, res = _bifurcation(cfg, tab)
    chk = Checks()
    sols = []
    flip = cfg["flags"]["convex_sign_flip"]
    if regime.kind != "Condition2":
        write_json(os.path.join(out, "torus.json"), {"regime": regime.to_dict(), "solutions": [],
                                                    "note": "no bifurcation root to build a torus on"})
        return chk
    for e in cfg["epsilon"]:
        br = res.selected(e)
        if br is None:
            chk.add("selected_branch_exists", False, eps=e)
            continue
        sol = assemble(tab, e, br["beta0"], regime=regime.kind)
        rr = verify_residual(sol, cfg.f, grid=cfg["grid"]["residual"], sign_flip=flip)
        entry = {"solution": sol.to_dict(), "residuals": rr}
        if abs(abs(e) - 1e-3) < 1e-15 and cfg["K"] == 3:
            chk.add("residual_tolerance", rr["r_range"] <= cfg["tolerances"]["r_range"], eps=e, r_range=rr["r_range"])
        chk.add("alpha_average_residual", rr["r_bif_alpha"] <= 1e-9 * max(1.0, rr["r_total"]), eps=e)
        if cfg["flags"]["regularised"]:
            try:
                st = R.build_resum(cfg.f, cfg.freq, cfg.scales, cfg["K_resum"], eps=e, beta0=br["beta0"],
                                   regularised=True, k0=res.k0, convex_sign_flip=flip)
                xis = [st.xi(n) for n in range(cfg.scales.n_max + 1)]
                entry["xi"] = xis
                entry["delta"] = [st.delta(n) for n in range(cfg.scales.n_max + 1)]
                chk.add("regularisation_inactive_at_root", all(x == 1.0 for x in xis), eps=e)
            except PropertyOneViolation as exc:
                chk.add("regularised_propagators_finite", False, eps=e, error=str(exc))
        sols.append(entry)
    ode = {}
    pair = cfg["ode"]["eps_pair"]
    devs = []
    for e in [0.0] + list(pair):
        b0 = res.roots[0].beta0 if e == 0 else None
        if e != 0:
            extra = _bifurcation_single(tab, res, e, cfg)
            if extra is None:
                chk.add("ode_branch_exists", False, eps=e)
                continue
            b0 = extra
        sol = assemble(tab, e, b0)
        r = verify_ode(sol, cfg.f, T=cfg["ode"]["T"], h=cfg["ode"]["h"])
        ode[repr(e)] = r
        devs.append(r["deviation"])
    if len(devs) == 3:
        chk.add("ode_unperturbed_exact", devs[0] <= 1e-10, deviation=devs[0])
        ratio = devs[1] / devs[2] if devs[2] > 0 else float("inf")
        need = 2 ** (cfg["K"] + 0.5) * 0.7
        chk.add("ode_deviation_scaling", ratio >= need, ratio=ratio, required=need)
    write_json(os.path.join(out, "torus.json"), {"regime": regime.to_dict(), "k0": res.k0, "solutions": sols,
                                                "ode": ode, "checks": chk.items})
    return chk


def _bifurcation_single(tab, res, e, cfg):
    from .torus import newton_branch
    best = None
    for rt in res.roots:
        br = newton_branch(tab, res.k0, tab.K, rt.beta0, e, tol=cfg["tolerances"]["newton"])
        if br["converged"] and br["eps_dG"] <= 0:
            best = br["beta0"]
            break
    return best


def cmd_verify(cfg: RunConfig, out):
    total = Checks()
    for name, fun in (("smalldiv", cmd_smalldiv), ("series", cmd_series), ("verify-lemmas", cmd_identity_suites),
                      ("bifurcation", cmd_bifurcation), ("torus", cmd_torus)):
        c = fun(cfg, out)
        total.add(name, c.ok, failed=c.failed())
    write_json(os.path.join(out, "verify.json"), {"checks": total.items})
    return total


COMMANDS = {
    "smalldiv": cmd_smalldiv,
    "series": cmd_series,
    "verify-lemmas": cmd_identity_suites,
    "self-energy": cmd_self_energy,
    "bifurcation": cmd_bifurcation,
    "torus": cmd_torus,
    "verify": cmd_verify,
}


def build_parser():
    p = argparse.ArgumentParser(prog="lindtorus", description="Lindstedt series for lower-dimensional tori.")
    p.add_argument("command", choices=sorted(COMMANDS))
    p.add_argument("--config", help="JSON config file (defaults apply when omitted)")
    p.add_argument("--out", default=".", help="output directory")
    p.add_argument("--threads", type=int, default=1, help="worker cap; results do not depend on it")
    p.add_argument("-v", "--verbose", action="store_true")
    return p


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    os.makedirs(args.out, exist_ok=True)
    err_path = os.path.join(args.out, "error.json")
    try:
        data = {}
        if args.config:
            with open(args.config) as fh:
                data = json.load(fh)
        cfg = load_config(data, threads=args.threads)
        chk = COMMANDS[args.command](cfg, args.out)
    except ConfigError as exc:
        write_json(err_path, {"error": "config", "problems": exc.problems})
        print(json.dumps({"error": "config", "problems": exc.problems}), file=sys.stderr)
        return 2
    except (BudgetError, PropertyOneViolation, json.JSONDecodeError, OSError) as exc:
        write_json(err_path, {"error": type(exc).__name__, "message": str(exc)})
        print(json.dumps({"error": type(exc).__name__, "message": str(exc)}), file=sys.stderr)
        return 2
    if not chk.ok:
        report = {"error": "assertion", "failed": chk.failed(),
                  "details": [i for i in chk.items if not i["pass"]]}
        write_json(err_path, report)
        print(json.dumps(_jsonable({"error": "assertion", "failed": chk.failed()})), file=sys.stderr)
        return 1
    print(json.dumps({"command": args.command, "checks": len(chk.items), "status": "ok"}))
    return 0


if __name__ == "__main__":
    sys.exit(main())
