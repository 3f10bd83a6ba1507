"""Shared optimization machinery.

Dense LP solving, a monotone bisection driver, secant piecewise-linear
tables for ``exp(-b*y)`` and ``y*exp(-b*y)``, and an exact best-first
search over per-target fill-order patterns of segmented programs.
"""

from __future__ import annotations

import heapq
import itertools
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy.optimize import linprog

FEAS_TOL = 1e-8
BISECT_TOL = 1e-6
BISECT_MAX_ITER = 200


class BracketError(ValueError):
    """The bisection predicate does not bracket a threshold."""


class LPError(RuntimeError):
    """An LP that must be solvable came back infeasible or unbounded."""


@dataclass
class LinearProgram:
    """``maximize c @ x`` subject to equalities, ``<=`` inequalities and bounds."""

    c: np.ndarray
    a_eq: np.ndarray | None = None
    b_eq: np.ndarray | None = None
    a_ub: np.ndarray | None = None
    b_ub: np.ndarray | None = None
    bounds: Sequence[tuple[float | None, float | None]] | None = None

    def __post_init__(self):
        self.c = np.asarray(self.c, dtype=float).reshape(-1)
        nv = len(self.c)
        for a, b in (("a_eq", "b_eq"), ("a_ub", "b_ub")):
            mat, rhs = getattr(self, a), getattr(self, b)
            if mat is None:
                continue
            mat = np.atleast_2d(np.asarray(mat, dtype=float))
            rhs = np.asarray(rhs, dtype=float).reshape(-1)
            if mat.shape[1] != nv or mat.shape[0] != len(rhs):
                raise ValueError(f"{a}/{b} dimensions inconsistent with {nv} variables")
            setattr(self, a, mat)
            setattr(self, b, rhs)
        if self.bounds is None:
            self.bounds = [(0.0, None)] * nv
        if len(self.bounds) != nv:
            raise ValueError("one bound pair per variable required")
        for lo, hi in self.bounds:
            if lo is not None and hi is not None and lo > hi:
                raise ValueError(f"bound lo={lo} > hi={hi}")


@dataclass
class LPResult:
    status: str  # "optimal" | "infeasible" | "unbounded"
    value: float = float("nan")
    x: np.ndarray | None = None

    @property
    def ok(self) -> bool:
        return self.status == "optimal"


def solve_lp(lp: LinearProgram) -> LPResult:
    """Solve ``lp`` with the HiGHS dual simplex (deterministic)."""
    res = linprog(
        -lp.c,
        A_ub=lp.a_ub,
        b_ub=lp.b_ub,
        A_eq=lp.a_eq,
        b_eq=lp.b_eq,
        bounds=lp.bounds,
        method="highs-ds",
        options={"primal_feasibility_tolerance": 1e-10, "dual_feasibility_tolerance": 1e-10},
    )
    if res.status == 2:
        return LPResult("infeasible")
    if res.status == 3:
        return LPResult("unbounded")
    if res.status != 0:
        raise LPError(f"LP solver failed: {res.message}")
    return LPResult("optimal", float(-res.fun), np.asarray(res.x))


def bisect_level(
    feasible_at: Callable[[float], bool],
    lo: float,
    hi: float,
    tol: float = BISECT_TOL,
    max_iter: int = BISECT_MAX_ITER,
) -> float:
    """Largest level at which a monotone predicate still holds, to within ``tol``.

    ``feasible_at`` must be true below the threshold and false above it.
    If it already holds at ``hi`` then ``hi`` is returned.
    """
    if lo > hi:
        raise BracketError(f"lo={lo} > hi={hi}")
    if lo == hi:
        return lo
    if not feasible_at(lo):
        raise BracketError(f"predicate false at lower end {lo}")
    if feasible_at(hi):
        return hi
    for _ in range(max_iter):
        if hi - lo <= tol:
            break
        mid = 0.5 * (lo + hi)
        if feasible_at(mid):
            lo = mid
        else:
            hi = mid
    return lo


# ---------------------------------------------------------------- PWL tables


@dataclass(frozen=True)
class PwlApprox:
    """Secant slopes of ``exp(-b y)`` (gamma) and ``y exp(-b y)`` (mu) on ``K`` equal segments of ``[0, 1]``."""

    K: int
    beta: np.ndarray
    gamma: np.ndarray = field(repr=False)
    mu: np.ndarray = field(repr=False)

    @classmethod
    def build(cls, beta, K: int) -> "PwlApprox":
        if K < 1:
            raise ValueError("K must be >= 1")
        beta = np.asarray(beta, dtype=float).reshape(-1)
        pts = np.arange(K + 1) / K
        f1 = np.exp(-np.outer(beta, pts))
        f2 = pts[None, :] * f1
        gamma = np.diff(f1, axis=1) * K
        mu = np.diff(f2, axis=1) * K
        return cls(K, beta, gamma, mu)

    @property
    def breakpoints(self) -> np.ndarray:
        return np.arange(self.K + 1) / self.K

    def segments(self, y) -> np.ndarray:
        """Fill-order decomposition of each ``y_i`` into ``K`` segment amounts."""
        y = np.clip(np.asarray(y, dtype=float).reshape(-1), 0.0, 1.0)
        w = 1.0 / self.K
        starts = np.arange(self.K) * w
        return np.clip(y[:, None] - starts[None, :], 0.0, w)

    def f1(self, y) -> np.ndarray:
        return 1.0 + (self.gamma * self.segments(y)).sum(axis=1)

    def f2(self, y) -> np.ndarray:
        return (self.mu * self.segments(y)).sum(axis=1)


def fill_order_patterns(K: int) -> list[tuple[np.ndarray, np.ndarray]]:
    """All feasible fill patterns of one target's ``K`` segments.

    Pattern ``m`` (0-based) has segments ``< m`` full, segment ``m`` anywhere
    in ``[0, 1/K]`` and later segments empty.  Returned as (lower, upper)
    bound arrays on the segment amounts.
    """
    if K < 1:
        raise ValueError("K must be >= 1")
    w = 1.0 / K
    out = []
    for m in range(K):
        lo = np.zeros(K)
        hi = np.zeros(K)
        lo[:m] = w
        hi[: m + 1] = w
        out.append((lo, hi))
    return out


# ---------------------------------------------------------------- segmented search


@dataclass
class SegmentedProgram:
    """``minimize const + sum seg_cost[i,j] y[i,j] + extra_cost @ e``.

    Subject to ``sum_j y[i,j] == link[i] @ e`` for every target, extra
    ``a_ub @ e <= b_ub`` rows, bounds on ``e``, ``0 <= y[i,j] <= 1/K`` and
    left-to-right fill order of each row of ``y``.
    """

    seg_cost: np.ndarray
    link: np.ndarray
    extra_cost: np.ndarray
    extra_bounds: list[tuple[float, float]]
    a_ub: np.ndarray | None = None
    b_ub: np.ndarray | None = None
    const: float = 0.0

    @property
    def shape(self) -> tuple[int, int]:
        return self.seg_cost.shape


@dataclass
class SegmentedSolution:
    value: float
    y: np.ndarray
    extra: np.ndarray
    nodes: int
    certified_min: bool


def _node_lp(prog: SegmentedProgram, lo: np.ndarray, hi: np.ndarray) -> LinearProgram:
    n, K = prog.shape
    m = prog.link.shape[1]
    nv = n * K + m
    c = -np.concatenate([prog.seg_cost.reshape(-1), prog.extra_cost])
    a_eq = np.zeros((n, nv))
    for i in range(n):
        a_eq[i, i * K : (i + 1) * K] = 1.0
        a_eq[i, n * K :] = -prog.link[i]
    a_ub = None
    if prog.a_ub is not None:
        a_ub = np.hstack([np.zeros((prog.a_ub.shape[0], n * K)), prog.a_ub])
    bounds = list(zip(lo.reshape(-1), hi.reshape(-1))) + list(prog.extra_bounds)
    return LinearProgram(c, a_eq, np.zeros(n), a_ub, prog.b_ub, bounds)


def _fill_violation(row: np.ndarray, width: float) -> float:
    """How badly a row breaks fill order (0 when it is a valid pattern)."""
    worst = 0.0
    for j in range(len(row) - 1):
        gap = width - row[j]
        if gap > FEAS_TOL:
            tail = row[j + 1 :].sum()
            worst = max(worst, min(gap, tail))
    return worst


def solve_segmented(prog: SegmentedProgram, stop_below: float | None = None, max_nodes: int = 100_000) -> SegmentedSolution:
    """Exact minimum of a segmented program by best-first pattern search.

    Node bounds come from the LP with fill order dropped on unfixed targets.
    With ``stop_below`` the search returns as soon as a feasible point at or
    below that level is known, and discards nodes whose bound lies above it;
    ``certified_min`` then tells whether the value is the true minimum.
    """
    n, K = prog.shape
    width = 1.0 / K
    patterns = fill_order_patterns(K)
    counter = itertools.count()

    best_val = np.inf
    best_y = best_e = None
    nodes = 0
    early = False

    def repack(y_rows: np.ndarray) -> np.ndarray:
        tot = y_rows.sum(axis=1)
        starts = np.arange(K) * width
        return np.clip(tot[:, None] - starts[None, :], 0.0, width)

    heap: list = [(-np.inf, next(counter), {})]
    while heap:
        bound, _, fixed = heapq.heappop(heap)
        if bound >= best_val - 1e-12:
            continue
        if stop_below is not None and bound > stop_below:
            continue
        nodes += 1
        if nodes > max_nodes:
            raise LPError("pattern search node limit exceeded")
        lo = np.zeros((n, K))
        hi = np.full((n, K), width)
        for i, mi in fixed.items():
            lo[i], hi[i] = patterns[mi]
        res = solve_lp(_node_lp(prog, lo, hi))
        if res.status == "infeasible":
            continue
        if not res.ok:
            raise LPError(f"segmented node LP {res.status}")
        node_val = prog.const - res.value
        y = res.x[: n * K].reshape(n, K)
        e = res.x[n * K :]
        if node_val >= best_val - 1e-12:
            continue

        # repacking keeps every row total, so it is always feasible
        y_pack = repack(y)
        pack_val = prog.const + float((prog.seg_cost * y_pack).sum() + prog.extra_cost @ e)
        if pack_val < best_val:
            best_val, best_y, best_e = pack_val, y_pack, e.copy()
        if stop_below is not None and best_val <= stop_below:
            early = True
            break

        viol = [(_fill_violation(y[i], width), i) for i in range(n) if i not in fixed]
        worst, branch_on = max(viol, default=(0.0, -1))
        if worst <= FEAS_TOL:
            continue  # relaxation optimum is itself a valid pattern
        for mi in range(K):
            child = dict(fixed)
            child[branch_on] = mi
            heapq.heappush(heap, (node_val, next(counter), child))

    if best_y is None:
        return SegmentedSolution(np.inf, np.zeros((n, K)), np.zeros(prog.link.shape[1]), nodes, True)
    return SegmentedSolution(best_val, best_y, best_e, nodes, certified_min=not early and stop_below is None)
