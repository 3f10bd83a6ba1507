"""Routine (tip-free) patrol optimal against a quantal-response attacker."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .model import GameInstance, TargetPayoffs, quantal_response, single_attack_utility
from .qri import DEFAULT_K, solve_qri
from .tips import top_r


@dataclass(frozen=True)
class RoutineSolution:
    x0: np.ndarray
    def_eu0: float
    q0: np.ndarray


def solve_routine_payoffs(payoffs: TargetPayoffs, resources: int, lam: float, K: int = DEFAULT_K) -> RoutineSolution:
    if resources <= 0:
        x0 = np.zeros(payoffs.n)
    elif lam == 0.0:
        # unresponsive attacker: cover the targets with the largest gains
        x0 = np.zeros(payoffs.n)
        x0[top_r(list(payoffs.gain), int(min(resources, payoffs.n)))] = 1.0
    else:
        x0 = solve_qri(payoffs, resources, lam, w=0.0, K=K).x
    q0 = quantal_response(x0, payoffs, lam)
    return RoutineSolution(x0, single_attack_utility(x0, q0, payoffs), q0)


def solve_routine(inst: GameInstance, K: int = DEFAULT_K) -> RoutineSolution:
    return solve_routine_payoffs(inst.payoffs, inst.resources, inst.lam, K)
