"""Optimal defender strategy against a level-infinity attacker.

The outer problem searches over the marginal coverage ``x_hat``; fixing it
fixes the attacker's response ``q = QR(x_hat)`` and the tip probabilities,
so the best tip-conditioned strategies realising ``x_hat`` solve an LP.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from typing import Callable, Iterable

import numpy as np

from .levelk import greedy_tip_strategies, marginal_strategy_single, solve_fixed_point_single
from .model import GameInstance, TargetPayoffs, quantal_response
from .optim import LinearProgram, LPError, solve_lp
from .routine import solve_routine_payoffs
from .tips import reported_set_prob, tip_context

GRAD_STEP = 1e-4
DEFAULT_RESTARTS = 8


@dataclass
class InnerSolution:
    value: float
    x0: np.ndarray
    tip_strategies: np.ndarray
    q: np.ndarray


@dataclass
class BiLevelSolution:
    x_hat: np.ndarray
    x0: np.ndarray
    tip_strategies: np.ndarray
    q: np.ndarray
    def_eu: float
    outer_iterations: int
    start_values: list[float]


def no_tip_posterior(w: float, p: float) -> float:
    den = 1.0 - w * p
    return 0.0 if den <= 0.0 else (1.0 - w) * p / den


def tip_probabilities(q, w: float, p: float = 1.0) -> tuple[float, np.ndarray]:
    """Probability of no tip, and of a tip naming each target."""
    q = np.asarray(q, dtype=float)
    return 1.0 - w * p, w * p * q


def expected_attack_mass(tips, q, w: float, p: float = 1.0) -> np.ndarray:
    """Expected number of attacks on each target given the tip counts."""
    t = np.asarray(tips, dtype=float)
    q = np.asarray(q, dtype=float)
    return t + (1.0 - t.sum()) * no_tip_posterior(w, p) * q


def strategy_value(x0, tip_strategies, q, w: float, payoffs: TargetPayoffs, p: float = 1.0) -> float:
    """Defender utility of a routine + tip-response pair against attack distribution ``q``."""
    x0 = np.asarray(x0, dtype=float)
    tips = np.asarray(tip_strategies, dtype=float)
    n = payoffs.n
    pr0, pr = tip_probabilities(q, w, p)
    total = pr0 * float(np.dot(expected_attack_mass(np.zeros(n), q, w, p), payoffs.pd + x0 * payoffs.gain))
    for j in range(n):
        if pr[j] > 0:
            total += pr[j] * (payoffs.pd[j] + tips[j, j] * payoffs.gain[j])
    return float(total)


def project_capped(x, r: float) -> np.ndarray:
    """Euclidean projection onto ``{x in [0,1]^n : sum(x) <= r}``."""
    x = np.asarray(x, dtype=float)
    y = np.clip(x, 0.0, 1.0)
    if y.sum() <= r:
        return y
    lo, hi = x.min() - 1.0, x.max()
    for _ in range(100):
        tau = 0.5 * (lo + hi)
        if np.clip(x - tau, 0.0, 1.0).sum() > r:
            lo = tau
        else:
            hi = tau
    return np.clip(x - hi, 0.0, 1.0)


def inner_lp(x_hat, payoffs: TargetPayoffs, r: float, lam: float, w: float, p: float = 1.0) -> InnerSolution:
    """Best tip-conditioned strategies whose marginal equals ``x_hat``."""
    x_hat = np.asarray(x_hat, dtype=float)
    n = payoffs.n
    if np.any(x_hat < -1e-9) or np.any(x_hat > 1 + 1e-9) or x_hat.sum() > r + 1e-9:
        raise ValueError("x_hat outside the feasible marginal region")
    q = quantal_response(x_hat, payoffs, lam)
    pr0, pr = tip_probabilities(q, w, p)
    probs = np.concatenate([[pr0], pr])
    d0 = expected_attack_mass(np.zeros(n), q, w, p)
    # block 0 is the no-tip strategy, block 1+j answers a tip on target j
    c = np.zeros((n + 1, n))
    c[0] = pr0 * d0 * payoffs.gain
    c[1 + np.arange(n), np.arange(n)] = pr * payoffs.gain
    const = pr0 * float(np.dot(d0, payoffs.pd)) + float(np.dot(pr, payoffs.pd))
    nv = (n + 1) * n
    a_eq = np.zeros((n, nv))
    for b in range(n + 1):
        a_eq[np.arange(n), b * n + np.arange(n)] = probs[b]
    a_ub = np.zeros((n + 1, nv))
    for b in range(n + 1):
        a_ub[b, b * n : (b + 1) * n] = 1.0
    lp = LinearProgram(c.reshape(-1), a_eq, x_hat, a_ub, np.full(n + 1, float(r)), [(0.0, 1.0)] * nv)
    res = solve_lp(lp)
    if not res.ok:
        raise LPError(f"inner LP {res.status}")
    blocks = np.clip(res.x.reshape(n + 1, n), 0.0, 1.0)
    for b in range(n + 1):
        if probs[b] == 0.0:
            blocks[b] = x_hat  # unreachable tip state; any feasible answer works
    return InnerSolution(res.value + const, blocks[0], blocks[1:], q)


def level0_pair(payoffs: TargetPayoffs, r: int, lam: float, w: float, p: float = 1.0, damping: float = 0.5):
    """Routine patrol and greedy tip answers tuned for level-0, played against level-infinity.

    Returns ``(value, x_hat, q)`` at the fixed point reached from the level-0 response.
    """
    x0 = solve_routine_payoffs(payoffs, r, lam).x0
    tips = greedy_tip_strategies(payoffs, r)
    fp = solve_fixed_point_single(x0, tips, w, payoffs, lam, p, damping=damping)
    value = strategy_value(x0, tips, fp.q, w, payoffs, p)
    return value, marginal_strategy_single(x0, tips, w, fp.q, p), fp.q


def _gradient(f: Callable[[np.ndarray], float], x: np.ndarray, r: float, h: float) -> np.ndarray:
    g = np.zeros_like(x)
    slack = r - x.sum()
    for i in range(len(x)):
        up = min(h, 1.0 - x[i], max(slack, 0.0))
        down = min(h, x[i])
        if up + down <= 0.0:
            continue
        xp, xm = x.copy(), x.copy()
        xp[i] += up
        xm[i] -= down
        g[i] = (f(xp) - f(xm)) / (up + down)
    return g


def _ascend(f, x: np.ndarray, r: float, max_iter: int = 200, h: float = GRAD_STEP) -> tuple[np.ndarray, float, int]:
    """Projected gradient ascent with backtracking; local optimum only."""
    fx = f(x)
    step = 1.0
    it = 0
    for it in range(1, max_iter + 1):
        g = _gradient(f, x, r, h)
        if np.abs(g).max() < 1e-9:
            break
        improved = False
        s = step
        for _ in range(40):
            cand = project_capped(x + s * g, r)
            fc = f(cand)
            if fc > fx + 1e-12:
                improved = True
                break
            s *= 0.5
        if not improved:
            break
        gain = fc - fx
        x, fx = cand, fc
        step = min(4.0 * s, 10.0)
        if gain < 1e-10:
            break
    return x, fx, it


def outer_optimize(
    payoffs: TargetPayoffs,
    r: int,
    lam: float,
    w: float,
    p: float = 1.0,
    restarts: int = DEFAULT_RESTARTS,
    seed: int = 0,
    extra_starts: Iterable[np.ndarray] = (),
    max_iter: int = 200,
) -> BiLevelSolution:
    """Multi-start local search over the marginal coverage.

    Starts are the routine patrol, the marginal induced by the level-0
    strategy pair at its level-infinity fixed point, any ``extra_starts``,
    and random points, ``restarts`` in total (more if extras are given).
    """
    n = payoffs.n

    def f(xh):
        return inner_lp(xh, payoffs, r, lam, w, p).value

    rng = np.random.default_rng(seed)
    starts = [solve_routine_payoffs(payoffs, r, lam).x0]
    if n > 1:
        starts.append(level0_pair(payoffs, r, lam, w, p)[1])
    starts.extend(np.asarray(s, dtype=float) for s in extra_starts)
    while len(starts) < restarts:
        starts.append(project_capped(rng.random(n) * min(1.0, r / n) * 2.0, r))
    best = None
    values = []
    total_it = 0
    for s in starts:
        x, fx, it = _ascend(f, project_capped(s, r), r, max_iter)
        total_it += it
        values.append(fx)
        if best is None or fx > best[1]:
            best = (x, fx)
    x_hat = best[0]
    sol = inner_lp(x_hat, payoffs, r, lam, w, p)
    return BiLevelSolution(x_hat, sol.x0, sol.tip_strategies, sol.q, sol.value, total_it, values)


def bilevel_for_instance(inst: GameInstance, informants: Iterable[int] | None = None, **kw) -> BiLevelSolution:
    """Single-attacker bi-level solve using the first attacker's tip probability."""
    from .qri import select_informants_by_w

    g = inst.graph
    if informants is None:
        _, w = select_informants_by_w(g, inst.recruit_budget)
    else:
        col = g.intensity_matrix()[:, 0]
        w = 1.0 - float(np.prod([1.0 - col[u] for u in informants]))
    return outer_optimize(inst.payoffs, inst.resources, inst.lam, w, float(g.attack_prob[0]), **kw)


# ---------------------------------------------------------------- multiple attackers


@dataclass
class TipType:
    reported: frozenset[int]
    counts: tuple[int, ...]
    prob: float
    mass: np.ndarray


def _tip_types(inst: GameInstance, informants: Iterable[int], q: np.ndarray) -> tuple[list[TipType], float, np.ndarray]:
    ctx = tip_context(inst, informants)
    n = inst.n
    reach = list(ctx.reachable)
    none_prob = reported_set_prob(ctx, [])
    none_mass = ctx.unreported_mass([]) * q
    out = []
    for size in range(1, len(reach) + 1):
        for combo in itertools.combinations(reach, size):
            pv = reported_set_prob(ctx, combo)
            if pv == 0.0:
                continue
            s = ctx.unreported_mass(combo)
            for counts in _compositions(size, n):
                mult = math.factorial(size) / math.prod(math.factorial(c) for c in counts)
                pr = pv * mult * math.prod(q[i] ** c for i, c in enumerate(counts))
                if pr > 0:
                    out.append(TipType(frozenset(combo), counts, pr, np.asarray(counts, float) + s * q))
    return out, none_prob, none_mass


def _compositions(total: int, parts: int):
    if parts == 1:
        yield (total,)
        return
    for first in range(total, -1, -1):
        for rest in _compositions(total - first, parts - 1):
            yield (first,) + rest


def inner_lp_multi(inst: GameInstance, informants: Iterable[int], x_hat, top: int = 50) -> float:
    """Approximate inner value with several attackers.

    Only the ``top`` most likely tip types get their own strategy; every
    other tip type falls back to the routine patrol.
    """
    x_hat = np.asarray(x_hat, dtype=float)
    pay = inst.payoffs
    n, r = inst.n, inst.resources
    q = quantal_response(x_hat, pay, inst.lam)
    types, none_prob, none_mass = _tip_types(inst, informants, q)
    types.sort(key=lambda t: -t.prob)
    own, rest = types[:top], types[top:]
    # the routine patrol carries the no-tip state and every dropped tip type
    blocks = [(none_prob + sum(t.prob for t in rest), none_prob * none_mass + sum((t.prob * t.mass for t in rest), np.zeros(n)))]
    blocks += [(t.prob, t.prob * t.mass) for t in own]
    nb = len(blocks)
    c = np.concatenate([wm * pay.gain for _, wm in blocks])
    const = float(sum(np.dot(wm, pay.pd) for _, wm in blocks))
    a_eq = np.zeros((n, nb * n))
    a_ub = np.zeros((nb, nb * n))
    for b, (pb, _) in enumerate(blocks):
        a_eq[np.arange(n), b * n + np.arange(n)] = pb
        a_ub[b, b * n : (b + 1) * n] = 1.0
    res = solve_lp(LinearProgram(c, a_eq, x_hat, a_ub, np.full(nb, float(r)), [(0.0, 1.0)] * (nb * n)))
    if not res.ok:
        raise LPError(f"multi-attacker inner LP {res.status}")
    return res.value + const
