"""Command-line front end.

Every table is written as CSV (stdout unless ``--out``).  Exit status is 0
on success, 1 on invalid input and 2 when a numerical procedure fails to
converge.
"""

from __future__ import annotations

import argparse
import csv
import io
import sys
import time
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from . import bilevel, levelk
from .evaluate import InformantEvaluator, NotSisiError, SizeGuardError
from .model import (
    GameInstance,
    InstanceError,
    counterexample_instance,
    dumps_instance,
    generate_instance,
    load_instance,
    parse_informant_set,
    validate_instance,
)
from .qri import select_informants_by_w, solve_qri
from .select import SELECTORS, budget_tradeoff, make_evaluator

EXIT_OK, EXIT_INVALID, EXIT_NONCONVERGED = 0, 1, 2


class CliError(Exception):
    def __init__(self, message: str, code: int = EXIT_INVALID):
        super().__init__(message)
        self.code = code


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # usage errors count as invalid input
        self.print_usage(sys.stderr)
        self.exit(EXIT_INVALID, f"{self.prog}: error: {message}\n")


# ---------------------------------------------------------------- helpers


def _fmt(v):
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    if isinstance(v, (list, tuple, frozenset, set)):
        return " ".join(str(x) for x in v)
    return v


def write_csv(rows: Sequence[dict], out: str | None, header: Sequence[str] | None = None) -> None:
    header = list(header or (rows[0].keys() if rows else []))
    buf = io.StringIO()
    wr = csv.DictWriter(buf, fieldnames=header, lineterminator="\n", extrasaction="ignore")
    wr.writeheader()
    for row in rows:
        wr.writerow({k: _fmt(v) for k, v in row.items()})
    if out:
        try:
            Path(out).write_text(buf.getvalue())
        except OSError as exc:
            raise CliError(f"cannot write {out}: {exc}") from exc
    else:
        sys.stdout.write(buf.getvalue())


def with_means(rows: list[dict], group: Sequence[str], skip: Iterable[str] = ("seed",)) -> list[dict]:
    """Append one arithmetic-mean row per ``group`` key; ``seed`` reads ``mean``."""
    skip = set(skip)
    groups: dict[tuple, list[dict]] = {}
    for row in rows:
        if row.get("error"):
            continue
        groups.setdefault(tuple(row[g] for g in group), []).append(row)
    out = list(rows)
    for key, members in groups.items():
        agg = {"seed": "mean", **dict(zip(group, key))}
        for col, val in members[0].items():
            if col in agg or col in skip or col == "error":
                continue
            if isinstance(val, (int, float, np.floating)) and not isinstance(val, bool):
                agg[col] = float(np.mean([m[col] for m in members]))
        out.append(agg)
    return out


def _int_list(text: str) -> list[int]:
    out: list[int] = []
    for part in text.split(","):
        part = part.strip()
        if ".." in part:
            a, b = part.split("..")
            out.extend(range(int(a), int(b) + 1))
        elif part:
            out.append(int(part))
    if not out:
        raise argparse.ArgumentTypeError("empty integer list")
    return out


def _checked(inst: GameInstance) -> GameInstance:
    problems = validate_instance(inst)
    if problems:
        raise CliError("invalid instance:\n" + "\n".join(f"  {p}" for p in problems))
    return inst


def _load(path: str) -> GameInstance:
    if path == "counterexample":
        return counterexample_instance()
    try:
        return _checked(load_instance(path))
    except InstanceError as exc:
        raise CliError(str(exc)) from exc


def _positive(name: str, value, allow_zero: bool = False):
    if value is None:
        return
    if value < 0 or (value == 0 and not allow_zero):
        raise CliError(f"--{name} must be {'non-negative' if allow_zero else 'positive'}")


def _gen_from(args, seed: int, n_attackers: int | None = None) -> GameInstance:
    return _checked(
        generate_instance(
            seed,
            args.nx,
            n_attackers if n_attackers is not None else args.ny,
            args.n,
            args.r,
            args.k,
            sum_pv_cap=args.sum_pv_cap,
            attack_prob=args.p,
            lam=args.lam,
        )
    )


def _add_gen_flags(p: argparse.ArgumentParser, nx=6, ny=8, n=6, r=3, k=4, p_default=None):
    p.add_argument("--nx", type=int, default=nx, help="number of potential informants")
    p.add_argument("--ny", type=int, default=ny, help="number of attackers")
    p.add_argument("--n", type=int, default=n, help="number of targets")
    p.add_argument("--r", type=int, default=r, help="defensive resources")
    p.add_argument("--k", type=int, default=k, help="recruitment budget")
    p.add_argument("--sum-pv-cap", type=float, default=None, help="rescale attack probabilities so they sum to at most this")
    p.add_argument("--p", type=float, default=p_default, help="constant attack probability for every attacker")
    p.add_argument("--lam", type=float, default=2.0, help="quantal response precision")


def _validate_gen_flags(args):
    for name in ("nx", "k"):
        _positive(name, getattr(args, name), allow_zero=True)
    for name in ("ny", "n", "r"):
        _positive(name, getattr(args, name))
    _positive("lam", args.lam, allow_zero=True)
    if args.p is not None and not 0.0 <= args.p <= 1.0:
        raise CliError("--p must lie in [0, 1]")
    _positive("sum-pv-cap", args.sum_pv_cap)


def _eval_params(args) -> dict:
    params: dict = {}
    if args.method == "ctrunc":
        if args.C is None:
            raise CliError("--method ctrunc needs --C")
        params["C"] = args.C
    elif args.method == "sampled":
        params.update(T=args.T, seed=args.seed)
    elif args.method == "montecarlo":
        params.update(episodes=args.episodes, seed=args.seed)
    return params


def _add_eval_flags(p: argparse.ArgumentParser, default="exact"):
    p.add_argument("--method", choices=["exact", "ctrunc", "sampled", "sisi", "montecarlo"], default=default)
    p.add_argument("--C", type=int, default=None, help="truncation size for ctrunc")
    p.add_argument("--T", type=int, default=100, help="samples for the sampled evaluator")
    p.add_argument("--episodes", type=int, default=100_000, help="Monte-Carlo episodes")


# ---------------------------------------------------------------- commands


def cmd_gen(args) -> int:
    _validate_gen_flags(args)
    try:
        inst = _gen_from(args, args.seed)
    except InstanceError as exc:
        raise CliError(str(exc)) from exc
    text = dumps_instance(inst)
    if args.out:
        try:
            Path(args.out).write_text(text)
        except OSError as exc:
            raise CliError(f"cannot write {args.out}: {exc}") from exc
    else:
        sys.stdout.write(text)
    return EXIT_OK


def cmd_eval(args) -> int:
    inst = _load(args.instance)
    try:
        members = parse_informant_set(inst, args.u)
    except (KeyError, ValueError) as exc:
        raise CliError(f"bad informant set: {exc}") from exc
    ev = InformantEvaluator(inst)
    params = _eval_params(args)
    start = time.perf_counter()
    try:
        if args.method == "exact":
            res = ev.exact(members)
        elif args.method == "ctrunc":
            res = ev.truncated(members, params["C"])
        elif args.method == "sampled":
            res = ev.sampled(members, params["T"], params["seed"])
        elif args.method == "sisi":
            res = ev.sisi(members)
        else:
            res = ev.monte_carlo(members, params["episodes"], params["seed"])
    except (NotSisiError, SizeGuardError) as exc:
        raise CliError(str(exc)) from exc
    elapsed = time.perf_counter() - start
    names = sorted(inst.graph.informants[u] for u in members)
    print(f"value {float(res.value)!r}")
    print(f"method {res.method}")
    if res.error_bound is not None:
        print(f"error_bound {float(res.error_bound)!r}")
    for key, val in res.diagnostics.items():
        print(f"{key} {val}")
    if args.out:
        write_csv(
            [{"informants": names, "method": res.method, "value": res.value,
              "error_bound": "" if res.error_bound is None else res.error_bound,
              "samples": "" if res.sample_count is None else res.sample_count,
              "seed": "" if res.seed is None else res.seed, "seconds": elapsed}],
            args.out,
        )
    return EXIT_OK


def selection_rows(args, seeds: Iterable[int], ny_values: Sequence[int]) -> list[dict]:
    rows = []
    params = _eval_params(args)
    for ny in ny_values:
        for seed in seeds:
            try:
                inst = _gen_from(args, seed, ny)
                values = {}
                for name in args.selectors:
                    fn = make_evaluator(inst, args.method, **dict(params))
                    start = time.perf_counter()
                    res = SELECTORS[name](inst, fn)
                    elapsed = time.perf_counter() - start
                    if name == "greedy":
                        res.value = make_evaluator(inst, args.method, **dict(params))(res.chosen)
                    values[name] = res.value
                    rows.append({"seed": seed, "ny": ny, "selector": name, "value": res.value,
                                 "seconds": elapsed, "evaluations": res.evaluations_used,
                                 "chosen": sorted(inst.graph.informants[u] for u in res.chosen)})
                ref = values.get("esa")
                for row in rows[-len(args.selectors):]:
                    row["rel_error"] = abs(ref - row["value"]) / abs(ref) if ref not in (None, 0.0) else float("nan")
            except (InstanceError, CliError, SizeGuardError) as exc:
                rows.append({"seed": seed, "ny": ny, "error": str(exc)})
    return rows


SELECT_HEADER = ["seed", "ny", "selector", "value", "rel_error", "seconds", "evaluations", "chosen", "error"]


def cmd_select(args) -> int:
    bad = [s for s in args.selectors if s not in SELECTORS]
    if bad:
        raise CliError(f"unknown selector(s): {', '.join(bad)}")
    if args.instance:
        inst = _load(args.instance)
        fn = make_evaluator(inst, args.method, **_eval_params(args))
        rows = []
        for name in args.selectors:
            start = time.perf_counter()
            res = SELECTORS[name](inst, fn)
            if name == "greedy":
                res.value = fn(res.chosen)
            rows.append({"seed": "", "ny": inst.graph.n_attackers, "selector": name, "value": res.value,
                         "seconds": time.perf_counter() - start, "evaluations": res.evaluations_used,
                         "chosen": sorted(inst.graph.informants[u] for u in res.chosen)})
        write_csv(rows, args.out, SELECT_HEADER)
        return EXIT_OK
    _validate_gen_flags(args)
    rows = selection_rows(args, range(args.seed, args.seed + args.seeds), args.ny_list or [args.ny])
    write_csv(with_means(rows, ["ny", "selector"]), args.out, SELECT_HEADER)
    return EXIT_OK


def _trace_rows(trace: levelk.LevelTrace) -> list[dict]:
    rows = []
    for lvl, q in enumerate(trace.q_seq):
        row = {"level": lvl}
        row.update({f"q{i + 1}": float(v) for i, v in enumerate(q)})
        rows.append(row)
    return rows


def _level_problem(args):
    """Return ``(x0, marginal map, payoffs, lam, fixed-point map)`` for the requested setup."""
    if args.instance:
        inst = _load(args.instance)
        lam = inst.lam if args.lam is None else args.lam
        inst = inst.with_params(lam=lam)
        members = parse_informant_set(inst, args.u)
        routine = levelk.solve_routine(inst)

        def marginal(q):
            return levelk.marginal_strategy_general(inst, members, q, routine)

        return routine.x0, marginal, inst.payoffs, lam
    x0, tips, w, payoffs = levelk.oscillation_setup()
    if args.w is not None:
        w = args.w
    lam = 3.0 if args.lam is None else args.lam
    return x0, (lambda q: levelk.marginal_strategy_single(x0, tips, w, q)), payoffs, lam


def _add_level_flags(p):
    p.add_argument("--instance", help="instance file (default: the two-target oscillation example)")
    p.add_argument("--u", default="", help="comma-separated recruited informant ids")
    p.add_argument("--lam", type=float, default=None, help="override the precision parameter")
    p.add_argument("--w", type=float, default=None, help="tip probability for the built-in example")


def cmd_levelk(args) -> int:
    x0, marginal, payoffs, lam = _level_problem(args)
    trace = levelk.iterate_levels(x0, marginal, payoffs, lam, kmax=args.kmax)
    rows = _trace_rows(trace)
    status = "converged" if trace.converged else ("cycle" if trace.cycle is not None else "not-converged")
    for row in rows:
        row["status"] = status
    write_csv(rows, args.out)
    print(f"# {status} after {trace.levels} levels, residual {trace.residual!r}", file=sys.stderr)
    return EXIT_OK if trace.converged or trace.cycle is not None else EXIT_NONCONVERGED


def cmd_fixedpoint(args) -> int:
    if not 0.0 < args.damping <= 1.0:
        raise CliError("--damping must lie in (0, 1]")
    x0, marginal, payoffs, lam = _level_problem(args)
    from .model import quantal_response

    res = levelk.solve_fixed_point(
        lambda q: quantal_response(marginal(q), payoffs, lam),
        quantal_response(x0, payoffs, lam),
        args.damping,
        args.tol,
        args.max_iter,
    )
    row = {f"q{i + 1}": float(v) for i, v in enumerate(res.q)}
    row.update(residual=res.residual, converged=res.converged, iterations=res.iterations, final_damping=res.damping)
    write_csv([row], args.out)
    return EXIT_OK if res.converged else EXIT_NONCONVERGED


def bilevel_rows(args, seeds: Iterable[int]) -> list[dict]:
    rows = []
    for seed in seeds:
        for r in args.r_list:
            for k in args.k_list:
                try:
                    inst = _checked(generate_instance(seed, args.nx, 1, args.n, r, k, attack_prob=1.0, lam=args.lam))
                    _, w = select_informants_by_w(inst.graph, k)
                    start = time.perf_counter()
                    sol = bilevel.outer_optimize(inst.payoffs, r, inst.lam, w, 1.0, restarts=args.restarts, seed=seed)
                    elapsed = time.perf_counter() - start
                    base, _, _ = bilevel.level0_pair(inst.payoffs, r, inst.lam, w, 1.0)
                    members = select_informants_by_w(inst.graph, k)[0]
                    vs_level0 = InformantEvaluator(inst).exact(members).value
                    row = {"seed": seed, "r": r, "k": k, "w": w, "bilevel": sol.def_eu,
                           "level0_pair_vs_inf": base, "level0_pair_vs_level0": vs_level0,
                           "sum_xhat": float(sol.x_hat.sum()), "seconds": elapsed}
                    if args.compare_qri:
                        row["qri"] = solve_qri(inst.payoffs, r, inst.lam, w).objective
                    rows.append(row)
                except (InstanceError, CliError, ValueError, RuntimeError) as exc:
                    rows.append({"seed": seed, "r": r, "k": k, "error": str(exc)})
    return rows


def cmd_bilevel(args) -> int:
    rows = bilevel_rows(args, range(args.seed, args.seed + args.seeds))
    header = ["seed", "r", "k", "w", "bilevel", "level0_pair_vs_inf", "level0_pair_vs_level0"]
    header += (["qri"] if args.compare_qri else []) + ["sum_xhat", "seconds", "error"]
    write_csv(with_means(rows, ["r", "k"]), args.out, header)
    return EXIT_OK


def qri_rows(args, seeds: Iterable[int]) -> list[dict]:
    rows = []
    for seed in seeds:
        for r in args.r_list:
            for k in args.k_list:
                try:
                    inst = _checked(generate_instance(seed, args.nx, 1, args.n, r, k, attack_prob=1.0, lam=args.lam))
                    _, w = select_informants_by_w(inst.graph, k)
                    start = time.perf_counter()
                    sol = solve_qri(inst.payoffs, r, inst.lam, w, K=args.K)
                    rows.append({"seed": seed, "r": r, "k": k, "w": w, "objective": sol.objective,
                                 "surrogate": sol.surrogate_level, "seconds": time.perf_counter() - start})
                except (InstanceError, CliError, ValueError, RuntimeError) as exc:
                    rows.append({"seed": seed, "r": r, "k": k, "error": str(exc)})
    return rows


def cmd_qri(args) -> int:
    rows = qri_rows(args, range(args.seed, args.seed + args.seeds))
    write_csv(with_means(rows, ["r", "k"]), args.out, ["seed", "r", "k", "w", "objective", "surrogate", "seconds", "error"])
    return EXIT_OK


def cmd_tradeoff(args) -> int:
    inst = _load(args.instance)
    if args.selector not in SELECTORS:
        raise CliError(f"unknown selector {args.selector}")
    try:
        table = budget_tradeoff(inst, args.budget, args.cost_r, args.cost_k, args.method, args.selector, **_eval_params(args))
    except ValueError as exc:
        raise CliError(str(exc)) from exc
    best = table.best
    rows = [dict(row, best=row is best) for row in table.rows]
    for row in rows:
        row["chosen"] = [inst.graph.informants[u] for u in row["chosen"]]
    write_csv(rows, args.out, ["k", "r", "value", "chosen", "best"])
    return EXIT_OK


def _evaluator_rows(args, seeds: Iterable[int]) -> list[dict]:
    """Runtime and relative error of each evaluator inside exhaustive selection."""
    rows = []
    for ny in args.ny_list:
        for seed in seeds:
            inst = _gen_from(args, seed, ny)
            ref = None
            for method, params in (("exact", {}), ("ctrunc", {"C": args.C or 6}), ("sampled", {"T": args.T, "seed": seed})):
                fn = make_evaluator(inst, method, **params)
                start = time.perf_counter()
                res = SELECTORS["esa"](inst, fn)
                elapsed = time.perf_counter() - start
                true_val = InformantEvaluator(inst).exact(res.chosen).value
                ref = true_val if ref is None else ref
                rows.append({"seed": seed, "ny": ny, "method": method, "value": true_val, "seconds": elapsed,
                             "rel_error": abs(ref - true_val) / abs(ref) if ref else 0.0})
    return rows


EXPERIMENTS = ("selection", "evaluators", "level-inf", "qri", "bilevel-vs-qri")


def cmd_experiment(args) -> int:
    seeds = range(args.seed, args.seed + args.seeds)
    if args.name == "selection":
        args.selectors = ["esa", "gsa", "greedy"]
        args.method = "exact"
        rows = with_means(selection_rows(args, seeds, args.ny_list), ["ny", "selector"])
        header = SELECT_HEADER
    elif args.name == "evaluators":
        rows = with_means(_evaluator_rows(args, seeds), ["ny", "method"])
        header = ["seed", "ny", "method", "value", "rel_error", "seconds"]
    elif args.name in ("level-inf", "bilevel-vs-qri"):
        args.compare_qri = args.name == "bilevel-vs-qri"
        rows = with_means(bilevel_rows(args, seeds), ["r", "k"])
        header = ["seed", "r", "k", "w", "bilevel", "level0_pair_vs_inf", "level0_pair_vs_level0"]
        header += (["qri"] if args.compare_qri else []) + ["sum_xhat", "seconds", "error"]
    else:
        rows = with_means(qri_rows(args, seeds), ["r", "k"])
        header = ["seed", "r", "k", "w", "objective", "surrogate", "seconds", "error"]
    write_csv(rows, args.out, header)
    return EXIT_OK


# ---------------------------------------------------------------- parser


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="greensec", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def common(p, seeds: int | None = None):
        p.add_argument("--seed", type=int, default=0)
        if seeds is not None:
            p.add_argument("--seeds", type=int, default=seeds, help="number of consecutive seeds")
        p.add_argument("--out", default=None, help="output path (default stdout)")

    p = sub.add_parser("gen", help="generate a random instance")
    _add_gen_flags(p)
    common(p)
    p.set_defaults(func=cmd_gen)

    p = sub.add_parser("eval", help="defender utility of a recruited set")
    p.add_argument("instance", help="instance file, or 'counterexample' for the built-in counterexample")
    p.add_argument("--u", default="", help="comma-separated informant ids")
    _add_eval_flags(p)
    common(p)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("select", help="choose informants (single instance or seeded batch)")
    p.add_argument("--instance", default=None)
    p.add_argument("--selectors", type=lambda s: s.split(","), default=["esa", "gsa", "greedy"])
    p.add_argument("--ny-list", type=_int_list, default=None, help="attacker counts to sweep, e.g. 2..8")
    _add_gen_flags(p)
    _add_eval_flags(p)
    common(p, seeds=30)
    p.set_defaults(func=cmd_select)

    p = sub.add_parser("levelk", help="trace the level-k attack distributions")
    _add_level_flags(p)
    p.add_argument("--kmax", type=int, default=5000)
    common(p)
    p.set_defaults(func=cmd_levelk)

    p = sub.add_parser("fixedpoint", help="level-infinity attack distribution by damped iteration")
    _add_level_flags(p)
    p.add_argument("--damping", type=float, default=0.5)
    p.add_argument("--tol", type=float, default=1e-10)
    p.add_argument("--max-iter", type=int, default=10_000)
    common(p)
    p.set_defaults(func=cmd_fixedpoint)

    def sweep_flags(p, seeds=30):
        p.add_argument("--nx", type=int, default=6)
        p.add_argument("--n", type=int, default=6)
        p.add_argument("--lam", type=float, default=2.0)
        p.add_argument("--r-list", type=_int_list, default=[1, 2, 3, 4, 5, 6])
        p.add_argument("--k-list", type=_int_list, default=[0, 1, 2, 3, 4, 5, 6])
        common(p, seeds=seeds)

    p = sub.add_parser("bilevel", help="optimal strategy against a level-infinity attacker, swept over (r, k)")
    sweep_flags(p, seeds=10)
    p.add_argument("--restarts", type=int, default=bilevel.DEFAULT_RESTARTS)
    p.add_argument("--compare-qri", action="store_true")
    p.set_defaults(func=cmd_bilevel)

    p = sub.add_parser("qri", help="informant-aware attacker strategy, swept over (r, k)")
    sweep_flags(p)
    p.add_argument("--K", type=int, default=10)
    p.set_defaults(func=cmd_qri)

    p = sub.add_parser("tradeoff", help="split a budget between resources and informants")
    p.add_argument("instance")
    p.add_argument("--budget", type=float, required=True)
    p.add_argument("--cost-r", type=float, required=True)
    p.add_argument("--cost-k", type=float, required=True)
    p.add_argument("--selector", default="esa")
    _add_eval_flags(p)
    common(p)
    p.set_defaults(func=cmd_tradeoff)

    p = sub.add_parser("experiment", help="qualitative reproductions of the experiment tables")
    p.add_argument("name", choices=EXPERIMENTS)
    _add_gen_flags(p, ny=8, n=6, r=3, k=4)
    p.add_argument("--ny-list", type=_int_list, default=[2, 4, 6, 8])
    p.add_argument("--r-list", type=_int_list, default=[2, 4, 6])
    p.add_argument("--k-list", type=_int_list, default=[0, 2, 4, 6])
    p.add_argument("--restarts", type=int, default=bilevel.DEFAULT_RESTARTS)
    p.add_argument("--K", type=int, default=10)
    p.add_argument("--C", type=int, default=6)
    p.add_argument("--T", type=int, default=100)
    common(p, seeds=5)
    p.set_defaults(func=cmd_experiment)
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except CliError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.code
    except InstanceError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID


if __name__ == "__main__":
    sys.exit(main())
