"""Tip posteriors, reported-set probabilities, expected gains and greedy resource allocation."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .model import GameInstance, TargetPayoffs


@dataclass(frozen=True)
class TipContext:
    """Everything about a recruited set ``U`` that tip calculations need.

    ``reachable`` lists the attackers adjacent to some recruited informant,
    ``report`` holds the per-attacker reporting probability given an attack,
    and ``posterior_unreported`` the attack probability of an attacker who
    was not reported.
    """

    informants: frozenset[int]
    reachable: tuple[int, ...]
    attack_prob: np.ndarray
    report: np.ndarray
    posterior_unreported: np.ndarray

    @property
    def report_prob(self) -> np.ndarray:
        """Probability each attacker shows up in the reported set."""
        return self.report * self.attack_prob

    def unreported_mass(self, reported: Iterable[int]) -> float:
        """Expected number of attacks from attackers outside ``reported``."""
        mask = np.ones(len(self.attack_prob), dtype=bool)
        mask[list(reported)] = False
        return float(self.posterior_unreported[mask].sum())


def report_intensity(inst: GameInstance, informants: Iterable[int]) -> np.ndarray:
    """Per-attacker probability of being reported given he attacks."""
    wmat = inst.graph.intensity_matrix()
    members = sorted(set(informants))
    if not members:
        return np.zeros(inst.graph.n_attackers)
    return 1.0 - np.prod(1.0 - wmat[members], axis=0)


def posterior_attack_prob(p: float, report: float, reported: bool, reachable: bool = True) -> float:
    """Probability attacker attacks given whether he was reported."""
    if reported:
        return 1.0
    if not reachable:
        return p
    num = (1.0 - report) * p
    den = num + 1.0 - p
    if den <= 0.0:
        return 0.0  # certain attacker, certain report, no report seen
    return num / den


def tip_context(inst: GameInstance, informants: Iterable[int]) -> TipContext:
    members = frozenset(informants)
    adj = inst.graph.adjacency()
    reachable = tuple(int(v) for v in np.flatnonzero(adj[sorted(members)].any(axis=0))) if members else ()
    report = report_intensity(inst, members)
    p = inst.graph.attack_prob
    post = np.array([posterior_attack_prob(p[v], report[v], False, v in reachable) for v in range(len(p))])
    return TipContext(members, reachable, p, report, post)


def reported_set_prob(ctx: TipContext, reported: Iterable[int]) -> float:
    rep = set(reported)
    rp = ctx.report_prob
    out = 1.0
    for v in ctx.reachable:
        out *= rp[v] if v in rep else 1.0 - rp[v]
    return out


def expected_mass(t_i, q_i, unreported: float):
    return t_i + q_i * unreported


def expected_gain(t_i, q_i, unreported: float, gain_i):
    """Gain from covering a target with ``t_i`` reported attacks."""
    return expected_mass(t_i, q_i, unreported) * gain_i


def expected_utility_covered(t_i, q_i, unreported: float, rd_i):
    return expected_mass(t_i, q_i, unreported) * rd_i


def expected_utility_uncovered(t_i, q_i, unreported: float, pd_i):
    return expected_mass(t_i, q_i, unreported) * pd_i


def top_r(gains: Sequence[float], r: int) -> list[int]:
    """Indices of the ``r`` largest gains; equal gains go to the lower index."""
    order = sorted(range(len(gains)), key=lambda i: (-gains[i], i))
    return sorted(order[: max(0, r)])


def tip_gains(counts: Sequence[int], q: np.ndarray, unreported: float, payoffs: TargetPayoffs) -> np.ndarray:
    counts = np.asarray(counts, dtype=float)
    return expected_gain(counts, q, unreported, payoffs.gain)


def greedy_allocate(counts: Sequence[int], q: np.ndarray, unreported: float, payoffs: TargetPayoffs, r: int) -> list[int]:
    """Targets to cover given per-target reported counts.

    ``unreported`` is the expected number of attacks by attackers not in the
    reported set; each target receives a ``q_i`` share of it.
    """
    return top_r(list(tip_gains(counts, q, unreported, payoffs)), r)


def allocation_utility(covered: Iterable[int], counts: Sequence[int], q: np.ndarray, unreported: float, payoffs: TargetPayoffs) -> float:
    """Total expected defender utility of a cover set given the tips."""
    cov = set(covered)
    total = 0.0
    for i in range(payoffs.n):
        if i in cov:
            total += expected_utility_covered(counts[i], q[i], unreported, payoffs.rd[i])
        else:
            total += expected_utility_uncovered(counts[i], q[i], unreported, payoffs.pd[i])
    return float(total)


def sample_reported_set(ctx: TipContext, rng: np.random.Generator) -> frozenset[int]:
    rp = ctx.report_prob
    draws = rng.random(len(ctx.reachable))
    return frozenset(v for v, u in zip(ctx.reachable, draws) if u < rp[v])
