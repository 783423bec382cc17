"""Command-line entry point: ``corrclust <command> [flags]``.

Every command writes a JSON document carrying ``"schema": 1`` to ``--output``
(or stdout). Exit status is 0 when all runtime checks pass, 1 when a
guarantee check fails, 2 on usage errors and 3 on bad input or solver failure.
"""

from __future__ import annotations

import argparse
import json
import math
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from . import instances, oracle, relaxation, rounding
from .core import ALL, L_SIDE, parse_q
from .errors import (AuditError, ContractError, InfeasibleError, ParseError,
                     SizeGuardError, SolverError, UnsupportedError)

SCHEMA = 1
EXIT_OK, EXIT_CHECK, EXIT_USAGE, EXIT_INPUT = 0, 1, 2, 3
# ratio slack allowed for the piecewise-linear objective at default resolution
PWL_SLACK = 0.05


@dataclass(frozen=True)
class RunConfig:
    command: str
    input: str | None = None
    q: float = 1.0
    mode: str = "general"
    seed: int = 0
    trials: int = 1
    breakpoints: int = 16
    tol: float = 1e-6
    output: str | None = None

    def __post_init__(self):
        parse_q(self.q)
        if self.trials < 1:
            raise ContractError("trials must be >= 1")

    def solver_config(self, **kw) -> relaxation.SolverConfig:
        return relaxation.SolverConfig(breakpoints=self.breakpoints, tol=self.tol, **kw)


def _q_arg(text: str) -> float:
    try:
        return parse_q(text)
    except (ContractError, ValueError) as exc:
        raise argparse.ArgumentTypeError(f"q must be a number >= 1 or 'inf' ({exc})") from None


def _positive_int(text: str) -> int:
    value = int(text)
    if value < 1:
        raise argparse.ArgumentTypeError("must be >= 1")
    return value


def _jsonable(obj):
    if isinstance(obj, dict):
        return {k: _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        return "inf" if math.isinf(v) else v
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, np.bool_):
        return bool(obj)
    return obj


def _emit(doc: dict, output: str | None) -> None:
    text = json.dumps(_jsonable({"schema": SCHEMA, **doc}), indent=1, allow_nan=False)
    if output:
        with open(output, "w") as fh:
            fh.write(text + "\n")
    else:
        sys.stdout.write(text + "\n")


def _q_out(q: float):
    return "inf" if math.isinf(q) else q


def trial_seed(master: int, index: int) -> int:
    """Sub-seed for trial ``index``; independent of scheduling order."""
    return int(np.random.SeedSequence([master, index]).generate_state(1, np.uint64)[0])


def _workers(trials: int) -> int:
    cap = os.environ.get("CORRCLUST_THREADS")
    limit = int(cap) if cap else (os.cpu_count() or 1)
    return max(1, min(trials, limit))


def _ratio(num: float, den: float) -> float:
    """``num / den`` with 0/0 = 1."""
    if den > 0:
        return num / den
    return 1.0 if num <= 1e-12 else math.inf


def _solution_doc(sol: relaxation.FractionalSolution) -> dict:
    return json.loads(sol.to_json())


def _load_solution(args, g, q):
    if getattr(args, "solution", None):
        with open(args.solution) as fh:
            sol = relaxation.FractionalSolution.from_json(fh.read())
        if sol.n != g.n:
            raise ContractError("solution and graph sizes differ")
        return sol
    cfg = _cfg(args)
    return relaxation.solve(g, cfg.solver_config(use_z=args.use_z, scope=_lp_scope(cfg.mode)), q=q)


def _lp_scope(mode: str) -> str:
    # the bipartite guarantee compares against the one-sided relaxation
    return L_SIDE if mode == "bipartite" else ALL


def _cfg(args) -> RunConfig:
    return RunConfig(
        command=args.command,
        input=getattr(args, "input", None),
        q=getattr(args, "q", 1.0),
        mode=getattr(args, "mode", "general"),
        seed=getattr(args, "seed", 0),
        trials=getattr(args, "trials", 1),
        breakpoints=getattr(args, "breakpoints", 16),
        tol=getattr(args, "tol", 1e-6),
        output=getattr(args, "output", None),
    )


# -- commands ----------------------------------------------------------------

def cmd_solve(args) -> int:
    cfg = _cfg(args)
    g = instances.read_graph(cfg.input)
    scope = L_SIDE if args.scope == "L" else ALL
    sol = relaxation.solve(g, cfg.solver_config(use_z=args.use_z, lazy_triangles=args.lazy, scope=scope), q=cfg.q)
    bad = relaxation.check_feasible(sol, g)
    doc = _solution_doc(sol)
    doc["feasible"] = not bad
    _emit(doc, cfg.output)
    if cfg.output:
        print(f"value={sol.value:.10g} lower_bound={sol.lower_bound:.10g}")
    return EXIT_OK if not bad else EXIT_CHECK


def _round_once(g, sol, cfg: RunConfig, seed: int):
    if cfg.mode == "general":
        return rounding.round_general(g, sol, cfg.q, seed, strict=False)
    if cfg.mode == "complete":
        return rounding.round_complete(g, sol, strict=False)[0]
    return rounding.round_bipartite(g, sol, strict=False)[0]


def cmd_round(args) -> int:
    cfg = _cfg(args)
    g = instances.read_graph(cfg.input)
    if cfg.mode == "bipartite" and g.bipartition is None:
        raise ContractError("bipartite mode needs a bipartition in the graph header")
    sol = _load_solution(args, g, cfg.q)
    trials = cfg.trials if cfg.mode == "general" else 1
    seeds = [trial_seed(cfg.seed, i) for i in range(trials)]
    with ThreadPoolExecutor(max_workers=_workers(trials)) as pool:
        reports = list(pool.map(lambda s: _round_once(g, sol, cfg, s), seeds))
    objectives = [r.objective for r in reports]
    best = int(np.argmin(objectives))
    doc = reports[best].to_dict()
    doc.pop("schema", None)
    doc["q"] = _q_out(cfg.q)
    doc["mode"] = cfg.mode
    doc["lp"] = {"value": sol.value, "lower_bound": sol.lower_bound, "branches": sol.branches}
    doc["ratio_to_lp"] = _ratio(reports[best].objective, sol.value)
    if trials > 1:
        doc["trials"] = {"count": trials, "seed": cfg.seed, "objectives": objectives,
                         "best_index": best, "mean_objective": float(np.mean(objectives))}
    ok = all(r.ok for r in reports)
    doc["ok"] = ok
    _emit(doc, cfg.output)
    return EXIT_OK if ok else EXIT_CHECK


def cmd_exact(args) -> int:
    cfg = _cfg(args)
    g = instances.read_graph(cfg.input)
    scope = L_SIDE if args.scope == "L" else ALL
    if args.st:
        res = oracle.opt_st_cut(g, q=cfg.q)
    else:
        res = oracle.opt_clustering(g, cfg.q, scope)
    _emit({"q": _q_out(cfg.q), "value": res.value, "clusters": res.best.clusters(),
           "enumerated": res.enumerated}, cfg.output)
    return EXIT_OK


def cmd_gap(args) -> int:
    q = args.q
    if math.isinf(q):
        raise UnsupportedError("the gap construction is defined for finite q")
    g = instances.gen_gap(args.a, args.b)
    sol, formula = instances.gap_fractional(args.a, args.b, q)
    doc = {"a": args.a, "b": args.b, "q": q, "n": g.n, "edges": g.num_edges,
           "lp_formula_value": formula}
    checks = {
        "formula_matches_solution": abs(sol.value - formula) <= 1e-9 * max(1.0, formula),
        "fractional_feasible": not relaxation.check_feasible(sol, g),
    }
    if args.solve:
        lp = relaxation.solve(g, relaxation.SolverConfig(breakpoints=args.breakpoints), q=q)
        doc["lp_solver_value"] = lp.value
    cut = oracle.opt_st_cut(g, q=q)
    doc["opt_oracle_value"] = cut.value
    doc["ratio"] = cut.value / formula
    checks["ratio_at_least_one"] = doc["ratio"] >= 1 - 1e-9
    doc["checks"] = checks
    _emit(doc, args.output)
    return EXIT_OK if all(checks.values()) else EXIT_CHECK


def cmd_reduce(args) -> int:
    with open(args.cnf) as fh:
        f = instances.parse_dimacs(fh.read())
    g = instances.reduce_3sat(f)
    if args.graph:
        instances.write_graph(g, args.graph)
    doc = {"num_vars": f.num_vars, "num_clauses": f.m, "vertices": g.n, "edges": g.num_edges,
           "infinite_edges": len(g.infinite),
           "expected_vertices": 2 + 4 * f.num_vars + 5 * f.m,
           "expected_edges": 6 * f.num_vars + 8 * f.m}
    ok = doc["vertices"] == doc["expected_vertices"] and doc["edges"] == doc["expected_edges"]
    if args.verify:
        cut = oracle.opt_st_cut(g, q=math.inf)
        sat = oracle.sat_brute_force(f)
        doc["cut_value"] = cut.value
        doc["satisfiable"] = sat is not None
        doc["equivalence"] = (sat is not None) == (cut.value == 1) and (sat is not None or cut.value >= 2)
        ok = ok and doc["equivalence"]
    doc["ok"] = ok
    _emit(doc, args.output)
    return EXIT_OK if ok else EXIT_CHECK


def cmd_gen(args) -> int:
    if args.kind == "random":
        g = instances.gen_random(args.n, args.p_plus, args.p_edge, seed=args.seed)
    elif args.kind == "bipartite":
        g = instances.gen_bipartite(args.left, args.right, args.p_plus, seed=args.seed)
    elif args.kind == "planted":
        g = instances.gen_planted([int(s) for s in args.sizes.split(",")], args.flip, seed=args.seed)
    else:
        g = instances.gen_gap(args.a, args.b)
    text = instances.format_graph(g)
    if args.output:
        with open(args.output, "w") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)
    return EXIT_OK


def cmd_verify(args) -> int:
    """Solve, round and compare against the exact optimum."""
    cfg = _cfg(args)
    g = instances.read_graph(cfg.input)
    scope = _lp_scope(cfg.mode)
    sol = relaxation.solve(g, cfg.solver_config(scope=scope), q=cfg.q)
    opt = oracle.opt_clustering(g, cfg.q, scope)
    report = _round_once(g, sol, cfg, trial_seed(cfg.seed, 0))
    checks = dict(report.checks)
    checks["lower_bound_sound"] = sol.lower_bound <= opt.value + 1e-7
    if cfg.mode != "general":
        checks["profit_nonnegative"] = report.audit.ok
        checks["ratio_within_bound"] = report.objective <= 5 * (1 + PWL_SLACK) * opt.value + 1e-9
    ratio = _ratio(report.objective, opt.value)
    doc = {"q": _q_out(cfg.q), "mode": cfg.mode, "objective": report.objective, "opt": opt.value,
           "ratio": ratio, "per_vertex_ratio": report.ratio_per_vertex,
           "lp_value": sol.value, "lower_bound": sol.lower_bound, "checks": checks}
    ok = all(checks.values())
    doc["ok"] = ok
    _emit(doc, cfg.output)
    return EXIT_OK if ok else EXIT_CHECK


# -- parser ------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="corrclust", description="Correlation clustering with l_q objectives")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, q=True, mode=False):
        sp.add_argument("--output", "-o", help="write the JSON document here instead of stdout")
        if q:
            sp.add_argument("--q", type=_q_arg, default=1.0, help="norm exponent (>= 1) or 'inf'")
        if mode:
            sp.add_argument("--mode", choices=("general", "complete", "bipartite"), default="general")
            sp.add_argument("--seed", type=int, default=0)

    def solver(sp):
        sp.add_argument("--breakpoints", type=int, default=16)
        sp.add_argument("--tol", type=float, default=1e-6)

    sp = sub.add_parser("solve", help="solve the relaxation")
    sp.add_argument("--input", "-i", required=True)
    common(sp)
    solver(sp)
    sp.add_argument("--use-z", action="store_true", help="full program with the z_u variables")
    sp.add_argument("--lazy", action="store_true", help="add triangle constraints lazily")
    sp.add_argument("--scope", choices=("all", "L"), default="all", help="'L' for the one-sided bipartite objective")
    sp.set_defaults(func=cmd_solve)

    sp = sub.add_parser("round", help="solve (or load) and round")
    sp.add_argument("--input", "-i", required=True)
    sp.add_argument("--solution", help="solution JSON from 'solve'")
    common(sp, mode=True)
    solver(sp)
    sp.add_argument("--trials", type=_positive_int, default=1)
    sp.add_argument("--use-z", action="store_true")
    sp.set_defaults(func=cmd_round)

    sp = sub.add_parser("exact", help="exact optimum by enumeration")
    sp.add_argument("--input", "-i", required=True)
    common(sp)
    sp.add_argument("--scope", choices=("all", "L"), default="all")
    sp.add_argument("--st", action="store_true", help="minimum s-t cut between the header terminals")
    sp.set_defaults(func=cmd_exact)

    sp = sub.add_parser("gap", help="integrality gap instance G_{a,b}")
    sp.add_argument("--a", type=_positive_int, required=True)
    sp.add_argument("--b", type=_positive_int, required=True)
    common(sp)
    sp.add_argument("--solve", action="store_true", help="also solve the relaxation numerically")
    sp.add_argument("--breakpoints", type=int, default=16)
    sp.set_defaults(func=cmd_gap)

    sp = sub.add_parser("reduce", help="3SAT to True-False cut reduction")
    sp.add_argument("--cnf", required=True, help="DIMACS input")
    sp.add_argument("--graph", help="write the reduction graph here")
    sp.add_argument("--verify", action="store_true", help="check the SAT/cut equivalence exhaustively")
    common(sp, q=False)
    sp.set_defaults(func=cmd_reduce)

    sp = sub.add_parser("gen", help="generate an instance file")
    sp.add_argument("kind", choices=("random", "bipartite", "planted", "gap"))
    sp.add_argument("--n", type=int, default=8)
    sp.add_argument("--p-plus", type=float, default=0.5)
    sp.add_argument("--p-edge", type=float, default=1.0)
    sp.add_argument("--left", type=int, default=4)
    sp.add_argument("--right", type=int, default=4)
    sp.add_argument("--sizes", default="3,3")
    sp.add_argument("--flip", type=float, default=0.0)
    sp.add_argument("--a", type=_positive_int, default=2)
    sp.add_argument("--b", type=_positive_int, default=2)
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--output", "-o")
    sp.set_defaults(func=cmd_gen)

    sp = sub.add_parser("verify", help="solve, round and compare with the exact optimum")
    sp.add_argument("--input", "-i", required=True)
    common(sp, mode=True)
    solver(sp)
    sp.set_defaults(func=cmd_verify)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except AuditError as exc:
        print(f"corrclust: check failed: {exc}", file=sys.stderr)
        return EXIT_CHECK
    except (ParseError, ContractError, UnsupportedError, SizeGuardError, InfeasibleError,
            SolverError, OSError) as exc:
        print(f"corrclust: error: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
