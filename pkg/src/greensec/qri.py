"""Defender strategies against informant-aware quantal-response attackers.

The attacker sees effective coverage ``y = (1-w) x + w z`` where ``x`` is the
default patrol and ``z`` the probability of acting on a tip.  The optimal
``(x, z)`` is found by bisection on the achievable utility level, each level
checked exactly on the piecewise-linear surrogate by pattern search.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .model import SocialGraph, TargetPayoffs, quantal_response
from .optim import (
    BISECT_TOL,
    PwlApprox,
    SegmentedProgram,
    SegmentedSolution,
    bisect_level,
    solve_segmented,
)

DEFAULT_K = 10


@dataclass(frozen=True)
class QriStrategy:
    x: np.ndarray
    z: np.ndarray
    y: np.ndarray
    w: float
    objective: float
    surrogate_level: float
    checks: int = 0


def qri_attack_distribution(x, z, w: float, payoffs: TargetPayoffs, lam: float) -> np.ndarray:
    y = (1.0 - w) * np.asarray(x, dtype=float) + w * np.asarray(z, dtype=float)
    return quantal_response(y, payoffs, lam)


def qri_objective(y, payoffs: TargetPayoffs, lam: float) -> float:
    """Defender's expected utility per attack when the attacker faces effective coverage ``y``."""
    y = np.asarray(y, dtype=float)
    q = quantal_response(y, payoffs, lam)
    return float(np.dot(q, payoffs.gain * y + payoffs.pd))


def feasibility_map(y, w: float, r: float, tol: float = 1e-12) -> bool:
    """Whether some ``x, z`` in the unit box with ``sum(x) <= r`` realise ``y``."""
    y = np.asarray(y, dtype=float)
    if np.any(y < -tol) or np.any(y > 1 + tol):
        return False
    if w >= 1.0:
        return True
    need = np.maximum(0.0, (y - w) / (1.0 - w))
    return bool(need.sum() <= r + tol)


def select_informants_by_w(graph: SocialGraph, k: int, attacker: int = 0) -> tuple[frozenset[int], float]:
    """Top-``k`` informants by intensity towards one attacker, and the resulting tip probability."""
    wmat = graph.intensity_matrix()
    col = wmat[:, attacker] if graph.n_attackers else np.zeros(graph.n_informants)
    order = sorted(range(graph.n_informants), key=lambda u: (-col[u], u))
    chosen = frozenset(order[: max(0, k)])
    w = 1.0 - float(np.prod([1.0 - col[u] for u in chosen])) if chosen else 0.0
    return chosen, w


def _level_program(delta: float, payoffs: TargetPayoffs, lam: float, w: float, r: float, pwl: PwlApprox) -> SegmentedProgram:
    n = payoffs.n
    theta = np.exp(lam * (payoffs.ra - payoffs.ra.max()))
    alpha = payoffs.gain
    scale = theta * (delta - payoffs.pd)
    seg_cost = scale[:, None] * pwl.gamma - (theta * alpha)[:, None] * pwl.mu
    # extras are [x_0..x_{n-1}, z_0..z_{n-1}]
    link = np.zeros((n, 2 * n))
    link[np.arange(n), np.arange(n)] = 1.0 - w
    link[np.arange(n), n + np.arange(n)] = w
    a_ub = np.concatenate([np.ones(n), np.zeros(n)])[None, :]
    return SegmentedProgram(
        seg_cost=seg_cost,
        link=link,
        extra_cost=np.zeros(2 * n),
        extra_bounds=[(0.0, 1.0)] * (2 * n),
        a_ub=a_ub,
        b_ub=np.array([float(r)]),
        const=float(scale.sum()),
    )


def solve_qri(
    payoffs: TargetPayoffs,
    resources: float,
    lam: float,
    w: float,
    K: int = DEFAULT_K,
    tol: float = BISECT_TOL,
) -> QriStrategy:
    """Near-optimal ``(x, z)`` against an informant-aware attacker.

    ``surrogate_level`` is the optimal value of the piecewise-linear
    surrogate found by bisection; ``objective`` is the exact utility of the
    returned strategy.
    """
    if not 0.0 <= w <= 1.0:
        raise ValueError("w must lie in [0, 1]")
    n = payoffs.n
    pwl = PwlApprox.build(lam * (payoffs.ra - payoffs.pa), K)
    witness: dict[str, SegmentedSolution] = {}
    checks = 0

    def achievable(delta: float) -> bool:
        nonlocal checks
        checks += 1
        sol = solve_segmented(_level_program(delta, payoffs, lam, w, resources, pwl), stop_below=0.0)
        if sol.value <= 0.0:
            witness["best"] = sol
            return True
        return False

    lo = float(payoffs.pd.min())
    hi = float(payoffs.rd.max())
    level = bisect_level(achievable, lo, hi, tol=tol)
    sol = witness["best"]
    y = np.clip(sol.y.sum(axis=1), 0.0, 1.0)
    x = np.clip(sol.extra[:n], 0.0, 1.0)
    z = np.clip(sol.extra[n:], 0.0, 1.0)
    if w == 0.0:
        z = x.copy()
    elif w == 1.0:
        x = np.zeros(n)
    return QriStrategy(x, z, y, float(w), qri_objective(y, payoffs, lam), level, checks)
