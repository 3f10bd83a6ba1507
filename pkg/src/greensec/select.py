"""Choosing which informants to recruit."""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from typing import Callable, Iterable

import numpy as np

from .evaluate import InformantEvaluator
from .model import GameInstance, quantal_response
from .tips import report_intensity

Evaluator = Callable[[frozenset[int]], float]
MAX_ESA_INFORMANTS = 20


@dataclass
class SelectionResult:
    chosen: frozenset[int]
    value: float
    evaluations_used: int
    method: str


class CountingEvaluator:
    """Memoising wrapper that counts distinct evaluator calls."""

    def __init__(self, fn: Evaluator):
        self.fn = fn
        self.cache: dict[frozenset[int], float] = {}

    def __call__(self, informants: Iterable[int]) -> float:
        key = frozenset(informants)
        if key not in self.cache:
            self.cache[key] = float(self.fn(key))
        return self.cache[key]

    @property
    def calls(self) -> int:
        return len(self.cache)


def make_evaluator(inst: GameInstance, method: str = "exact", **params) -> Evaluator:
    """Build ``U -> DefEU(U)`` for a named evaluation method.

    ``method`` is one of exact, ctrunc (needs ``C``), sampled (``T``,
    ``seed``), sisi or montecarlo (``episodes``, ``seed``).
    """
    ev = params.pop("evaluator", None) or InformantEvaluator(inst)
    if method == "exact":
        return lambda U: ev.exact(U).value
    if method in ("ctrunc", "cTruncated"):
        C = params["C"]
        return lambda U: ev.truncated(U, C, params.get("c_prime"), params.get("Q")).value
    if method == "sampled":
        T, seed = params.get("T", 100), params.get("seed", 0)
        return lambda U: ev.sampled(U, T, seed).value
    if method == "sisi":
        return lambda U: ev.sisi(U).value
    if method in ("montecarlo", "monteCarlo"):
        eps, seed = params.get("episodes", 100_000), params.get("seed", 0)
        return lambda U: ev.monte_carlo(U, eps, seed).value
    raise ValueError(f"unknown evaluation method {method!r}")


def _lex_key(members: frozenset[int]) -> tuple[int, ...]:
    return tuple(sorted(members))


def select_exhaustive(inst: GameInstance, evaluator: Evaluator) -> SelectionResult:
    """Best set of at most ``k`` informants by full enumeration.

    Ties go to the lexicographically smallest sorted member tuple.
    """
    nx, k = inst.graph.n_informants, inst.recruit_budget
    if nx > MAX_ESA_INFORMANTS:
        raise ValueError(f"{nx} informants exceeds exhaustive search guard {MAX_ESA_INFORMANTS}")
    ev = CountingEvaluator(evaluator)
    best: frozenset[int] | None = None
    best_val = -math.inf
    for size in range(0, min(k, nx) + 1):
        for combo in itertools.combinations(range(nx), size):
            U = frozenset(combo)
            val = ev(U)
            if val > best_val or (val == best_val and _lex_key(U) < _lex_key(best)):
                best, best_val = U, val
    return SelectionResult(best, best_val, ev.calls, "esa")


def select_gsa(inst: GameInstance, evaluator: Evaluator) -> SelectionResult:
    """Recursive search branching on the two best single additions at each level."""
    nx = inst.graph.n_informants
    k = min(inst.recruit_budget, nx)
    ev = CountingEvaluator(evaluator)
    best: list = [None, -math.inf]

    def ranked_additions(cur: frozenset[int]) -> list[int]:
        cands = [u for u in range(nx) if u not in cur]
        return sorted(cands, key=lambda u: (-ev(cur | {u}), u))

    def search(cur: frozenset[int]):
        if len(cur) == k:
            val = ev(cur)
            if val > best[1] or (val == best[1] and _lex_key(cur) < _lex_key(best[0])):
                best[0], best[1] = cur, val
            return
        for u in ranked_additions(cur)[:2]:
            search(cur | {u})

    search(frozenset())
    return SelectionResult(best[0], best[1], ev.calls, "gsa")


def tip_probability(inst: GameInstance, informants: Iterable[int]) -> float:
    """Probability of receiving at least one tip."""
    wt = report_intensity(inst, informants)
    return 1.0 - float(np.prod(1.0 - wt * inst.graph.attack_prob))


def select_greedy_baseline(inst: GameInstance, evaluator: Evaluator | None = None) -> SelectionResult:
    """Greedily add the informant that most raises the chance of any tip."""
    nx = inst.graph.n_informants
    cur: frozenset[int] = frozenset()
    for _ in range(min(inst.recruit_budget, nx)):
        cands = [u for u in range(nx) if u not in cur]
        u = max(cands, key=lambda c: (tip_probability(inst, cur | {c}), -c))
        cur = cur | {u}
    value = float(evaluator(cur)) if evaluator is not None else tip_probability(inst, cur)
    return SelectionResult(cur, value, 1 if evaluator is not None else 0, "greedyBaseline")


SELECTORS = {"esa": select_exhaustive, "gsa": select_gsa, "greedy": select_greedy_baseline}


@dataclass
class TradeoffTable:
    rows: list[dict] = field(default_factory=list)

    @property
    def best(self) -> dict:
        return max(self.rows, key=lambda row: (row["value"], -row["k"], -row["r"]))


def budget_tradeoff(
    inst: GameInstance,
    budget: float,
    cost_resource: float,
    cost_informant: float,
    method: str = "exact",
    selector: str = "esa",
    **params,
) -> TradeoffTable:
    """Value of every affordable (k, r) split of a budget.

    Each feasible pair gets its own routine patrol and recruited set.
    """
    if cost_resource <= 0 or cost_informant <= 0:
        raise ValueError("costs must be positive")
    table = TradeoffTable()
    nx, n = inst.graph.n_informants, inst.n
    max_r = int(budget // cost_resource)
    for r in range(0, min(max_r, n) + 1):
        max_k = int((budget - r * cost_resource + 1e-12) // cost_informant)
        for k in range(0, min(max_k, nx) + 1):
            if r == 0:
                # nothing to send on a tip, so informants are worthless
                q = quantal_response(np.zeros(n), inst.payoffs, inst.lam)
                value = float(inst.graph.attack_prob.sum() * np.dot(q, inst.payoffs.pd))
                chosen: frozenset[int] = frozenset()
            else:
                sub = inst.with_params(resources=r, recruit_budget=k)
                fn = make_evaluator(sub, method, **dict(params))
                res = SELECTORS[selector](sub, fn)
                value, chosen = res.value, res.chosen
            table.rows.append({"k": k, "r": r, "value": value, "chosen": sorted(chosen)})
    return table
