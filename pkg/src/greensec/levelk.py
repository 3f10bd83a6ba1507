"""Level-k attackers, the induced marginal strategy and level-infinity fixed points."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Iterable

import numpy as np

from .evaluate import InformantEvaluator
from .model import GameInstance, TargetPayoffs, quantal_response
from .routine import RoutineSolution, solve_routine
from .tips import greedy_allocate

CONVERGE_TOL = 1e-8
CYCLE_TOL = 1e-8

MarginalMap = Callable[[np.ndarray], np.ndarray]


@dataclass
class LevelTrace:
    q_seq: list[np.ndarray] = field(default_factory=list)
    x_hat_seq: list[np.ndarray] = field(default_factory=list)
    converged: bool = False
    residual: float = float("inf")
    cycle: tuple[np.ndarray, np.ndarray] | None = None

    @property
    def levels(self) -> int:
        return len(self.q_seq) - 1

    @property
    def final(self) -> np.ndarray:
        return self.q_seq[-1]


@dataclass
class ContractionReport:
    passed: bool
    thresholds: np.ndarray
    max_cover: np.ndarray

    @property
    def margins(self) -> np.ndarray:
        """Slack per target; negative entries break the condition."""
        return self.thresholds - self.max_cover


@dataclass
class FixedPointResult:
    q: np.ndarray
    residual: float
    converged: bool
    iterations: int
    damping: float


def greedy_tip_strategies(payoffs: TargetPayoffs, r: int) -> np.ndarray:
    """Row ``i`` is the cover vector used after a tip that the lone attacker hits target ``i``."""
    n = payoffs.n
    out = np.zeros((n, n))
    q_dummy = np.full(n, 1.0 / n)
    for i in range(n):
        counts = np.zeros(n, dtype=int)
        counts[i] = 1
        out[i, greedy_allocate(counts, q_dummy, 0.0, payoffs, r)] = 1.0
    return out


def marginal_strategy_single(x0, tip_strategies, w: float, q, p: float = 1.0) -> np.ndarray:
    """Marginal coverage against a single attacker reported with probability ``w`` when he attacks."""
    x0 = np.asarray(x0, dtype=float)
    tips = np.asarray(tip_strategies, dtype=float)
    q = np.asarray(q, dtype=float)
    if tips.shape != (len(x0), len(x0)) or len(q) != len(x0):
        raise ValueError("dimension mismatch between x0, tip strategies and q")
    wp = w * p
    return (1.0 - wp) * x0 + wp * (q @ tips)


def marginal_strategy_general(inst: GameInstance, informants: Iterable[int], q, routine: RoutineSolution | None = None) -> np.ndarray:
    """Exact marginal coverage with greedy tip response, for attack distribution ``q``."""
    ev = InformantEvaluator(inst, routine=routine, q=np.asarray(q, dtype=float))
    return ev.marginal_coverage(informants)


def iterate_levels(
    x0,
    marginal: MarginalMap,
    payoffs: TargetPayoffs,
    lam: float,
    kmax: int = 5000,
    cycle_window: int = 4,
    tol: float = CONVERGE_TOL,
) -> LevelTrace:
    """Run ``q <- QR(MS(q))`` from the level-0 response to ``x0``.

    Stops when successive levels differ by less than ``tol`` in L1, or when
    the last ``cycle_window`` levels alternate between two distributions.
    """
    q = quantal_response(x0, payoffs, lam)
    trace = LevelTrace(q_seq=[q])
    steps: list[float] = []
    for _ in range(kmax):
        x_hat = marginal(q)
        q_next = quantal_response(x_hat, payoffs, lam)
        trace.x_hat_seq.append(x_hat)
        trace.q_seq.append(q_next)
        trace.residual = float(np.abs(q_next - q).sum())
        steps.append(trace.residual)
        q = q_next
        if trace.residual < tol:
            trace.converged = True
            break
        seq = trace.q_seq
        if len(seq) > cycle_window + 1:
            tail = seq[-(cycle_window + 1):]
            period2 = all(np.abs(tail[j] - tail[j - 2]).sum() < CYCLE_TOL for j in range(2, len(tail)))
            # a slowly converging oscillation also looks periodic; require the step size to have stalled
            stalled = steps[-1] >= steps[-cycle_window] * (1.0 - 1e-6)
            if period2 and stalled:
                trace.cycle = (seq[-2].copy(), seq[-1].copy())
                break
    return trace


def iterate_levels_single(x0, tip_strategies, w: float, payoffs: TargetPayoffs, lam: float, p: float = 1.0, **kw) -> LevelTrace:
    return iterate_levels(x0, lambda q: marginal_strategy_single(x0, tip_strategies, w, q, p), payoffs, lam, **kw)


def iterate_levels_instance(inst: GameInstance, informants: Iterable[int], routine: RoutineSolution | None = None, **kw) -> LevelTrace:
    routine = routine if routine is not None else solve_routine(inst)
    members = frozenset(informants)
    return iterate_levels(
        routine.x0,
        lambda q: marginal_strategy_general(inst, members, q, routine),
        inst.payoffs,
        inst.lam,
        **kw,
    )


def contraction_check(tip_strategies, payoffs: TargetPayoffs, lam: float, L: float) -> ContractionReport:
    """Sufficient condition for the level-k map to be an L-contraction in L1."""
    tips = np.asarray(tip_strategies, dtype=float)
    n = payoffs.n
    max_cover = tips.max(axis=0)
    spread = payoffs.ra - payoffs.pa
    with np.errstate(divide="ignore"):
        thresholds = np.where(lam * spread > 0, L / (n * lam * spread), np.inf)
    return ContractionReport(bool(np.all(max_cover <= thresholds)), thresholds, max_cover)


def solve_fixed_point(
    g: Callable[[np.ndarray], np.ndarray],
    q_init,
    damping: float = 1.0,
    tol: float = 1e-10,
    max_iter: int = 10_000,
) -> FixedPointResult:
    """Damped iteration ``q <- (1-a) q + a g(q)``; ``a`` halves whenever the residual grows."""
    if not 0.0 < damping <= 1.0:
        raise ValueError("damping must lie in (0, 1]")
    q = np.asarray(q_init, dtype=float)
    alpha = damping
    gq = g(q)
    res = float(np.abs(gq - q).sum())
    best_q, best_res = q, res
    it = 0
    for it in range(1, max_iter + 1):
        if res <= tol:
            break
        q = (1.0 - alpha) * q + alpha * gq
        gq = g(q)
        new_res = float(np.abs(gq - q).sum())
        if new_res > res:
            alpha = max(alpha * 0.5, 1e-6)
        res = new_res
        if res < best_res:
            best_q, best_res = q, res
    return FixedPointResult(best_q, best_res, best_res <= tol, it, alpha)


def solve_fixed_point_single(
    x0,
    tip_strategies,
    w: float,
    payoffs: TargetPayoffs,
    lam: float,
    p: float = 1.0,
    damping: float = 1.0,
    tol: float = 1e-10,
    max_iter: int = 10_000,
) -> FixedPointResult:
    """Level-infinity attack distribution for fixed routine and tip strategies."""

    def g(q):
        return quantal_response(marginal_strategy_single(x0, tip_strategies, w, q, p), payoffs, lam)

    return solve_fixed_point(g, quantal_response(x0, payoffs, lam), damping, tol, max_iter)


def oscillation_setup() -> tuple[np.ndarray, np.ndarray, float, TargetPayoffs]:
    """Two-target example whose level sequence converges at lambda=2.9 and oscillates at 3.0.

    Returns ``(x0, tip_strategies, w, payoffs)``; defender payoffs do not
    affect the attacker dynamics and are set to +-1.
    """
    payoffs = TargetPayoffs([1.0, 1.0], [-1.0, -1.0], [0.6, 0.8], [-0.8, -0.6])
    return np.array([0.5, 0.5]), np.eye(2), 0.5, payoffs
