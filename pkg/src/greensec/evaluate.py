"""Defender utility of a recruited informant set.

``InformantEvaluator`` fixes an instance together with the attack
distribution ``q`` and the per-attack routine utility, then evaluates
DefEU(U) by full enumeration of reported sets (EDPA), truncated
enumeration, sampling of reported sets, the size-only enumeration valid
when every recruited edge reports with certainty, or plain simulation.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable

import numpy as np

from .model import GameInstance, TargetPayoffs
from .routine import RoutineSolution, solve_routine
from .tips import TipContext, expected_gain, tip_context

MAX_ENUM = 20
MC_CHUNK = 100_000


class SizeGuardError(ValueError):
    """An enumeration would exceed the configured size guard."""


class NotSisiError(ValueError):
    """A recruited edge does not report with certainty."""


@dataclass
class EvaluationResult:
    value: float
    method: str
    error_bound: float | None = None
    sample_count: int | None = None
    seed: int | None = None
    diagnostics: dict = field(default_factory=dict)


def truncation_bound(C: float, c_prime: float, size_y: int, Q: float) -> float:
    """Error bound of truncated enumeration when at most ``c_prime`` attacks are expected."""
    if C <= c_prime:
        raise ValueError("bound needs C > C'")
    d = C - c_prime
    return Q * math.exp(-2.0 * d * d / size_y) * (C + 1.0 / (1.0 - math.exp(-4.0 * d / size_y)))


def _log_weights(q: float, upto: int) -> np.ndarray:
    """``q**k / k!`` for ``k = 0..upto`` computed through logs."""
    out = np.zeros(upto + 1)
    out[0] = 1.0
    if q <= 0.0:
        return out
    k = np.arange(1, upto + 1)
    out[1:] = np.exp(k * math.log(q) - np.array([math.lgamma(j + 1) for j in k]))
    return out


def cover_rank_prob(i: int, t_i: int, m: int, unreported: float, q: np.ndarray, payoffs: TargetPayoffs, r: int) -> float:
    """Joint probability that the other ``m - t_i`` reported attackers all
    fall on targets other than ``i`` (each with probability ``q_j``) and
    that ``i`` then ranks among the ``r`` targets with the largest expected
    gain.  A target beats ``i`` when its gain is strictly larger, or equal
    with a smaller index.
    """
    if r <= 0:
        return 0.0
    rest = m - t_i
    g_i = expected_gain(t_i, q[i], unreported, payoffs.gain[i])
    f = np.zeros((r, rest + 1))
    f[0, 0] = 1.0
    counts = np.arange(rest + 1)
    for j in range(payoffs.n):
        if j == i:
            continue
        wts = _log_weights(q[j], rest)
        g_j = expected_gain(counts, q[j], unreported, payoffs.gain[j])
        beats = (g_j > g_i) | ((g_j == g_i) & (j < i))
        new = np.zeros_like(f)
        for a in range(rest + 1):
            if wts[a] == 0.0:
                continue
            shifted = wts[a] * f[:, : rest + 1 - a]
            if beats[a]:
                new[1:, a:] += shifted[:-1]
            else:
                new[:, a:] += shifted
        f = new
    return float(math.exp(math.lgamma(rest + 1)) * f[:, rest].sum())


def cover_rank_table(m: int, unreported: float, q: np.ndarray, payoffs: TargetPayoffs, r: int) -> np.ndarray:
    """``cover_rank_prob`` for every target ``i`` and tip count ``t = 0..m`` at once.

    Entry ``[i, t]`` equals ``cover_rank_prob(i, t, m, unreported, q, payoffs, r)``;
    the dynamic programme runs over a batch of all ``(i, t)`` pairs.
    """
    n = payoffs.n
    if r <= 0:
        return np.zeros((n, m + 1))
    counts = np.arange(m + 1)
    gains = expected_gain(counts[None, :], q[:, None], unreported, payoffs.gain[:, None])  # [target, count]
    weights = np.stack([_log_weights(q[j], m) for j in range(n)])  # [target, count]
    tgt = np.repeat(np.arange(n), m + 1)  # batch member b <-> (i, t)
    tips = np.tile(counts, n)
    g_self = gains[tgt, tips]
    rows = min(r, n)
    f = np.zeros((n * (m + 1), rows, m + 1))
    f[:, 0, 0] = 1.0
    for j in range(n):
        beats = (gains[j][None, :] > g_self[:, None]) | ((gains[j][None, :] == g_self[:, None]) & (j < tgt)[:, None])
        wj = np.broadcast_to(weights[j], beats.shape).copy()
        wj[tgt == j] = 0.0
        wj[tgt == j, 0] = 1.0  # the candidate itself receives no further attackers
        beats[tgt == j] = False
        wb = np.where(beats, wj, 0.0)
        wn = wj - wb
        new = np.zeros_like(f)
        for a in range(m + 1):
            if not wj[:, a].any():
                continue
            src = f[:, :, : m + 1 - a]
            new[:, :, a:] += wn[:, a, None, None] * src
            if rows > 1:
                new[:, 1:, a:] += wb[:, a, None, None] * src[:, :-1]
        f = new
    rest = m - tips
    fact = np.exp(np.array([math.lgamma(k + 1) for k in rest]))
    out = fact * f[np.arange(len(tgt)), :, rest].sum(axis=1)
    return out.reshape(n, m + 1)


class InformantEvaluator:
    """DefEU(U) evaluator for a fixed instance and attack distribution.

    ``q`` and ``def_eu0`` default to the routine solution; passing a
    level-k distribution (and its single-attack utility) evaluates against
    level-k attackers instead.
    """

    def __init__(
        self,
        inst: GameInstance,
        routine: RoutineSolution | None = None,
        q: np.ndarray | None = None,
        def_eu0: float | None = None,
        max_enum: int = MAX_ENUM,
    ):
        self.inst = inst
        self.routine = routine if routine is not None else solve_routine(inst)
        self.q = np.asarray(q if q is not None else self.routine.q0, dtype=float)
        self.def_eu0 = float(def_eu0 if def_eu0 is not None else self.routine.def_eu0)
        self.max_enum = max_enum
        self._terms: dict[tuple[int, float], tuple[float, np.ndarray]] = {}
        self._contexts: dict[frozenset, TipContext] = {}

    # ------------------------------------------------------------ pieces

    def context(self, informants: Iterable[int]) -> TipContext:
        key = frozenset(informants)
        if key not in self._contexts:
            self._contexts[key] = tip_context(self.inst, key)
        return self._contexts[key]

    def informed_terms(self, m: int, unreported: float) -> tuple[float, np.ndarray]:
        """Expected utility and per-target cover probability given ``m`` tips.

        Conditional on the reported set having size ``m`` and the given
        unreported attack mass; the utility already sums over targets.
        """
        key = (m, unreported)
        hit = self._terms.get(key)
        if hit is not None:
            return hit
        pay, q, r = self.inst.payoffs, self.q, self.inst.resources
        t = np.arange(m + 1)
        p_rank = cover_rank_table(m, unreported, q, pay, r)
        binom = np.array([math.comb(m, k) for k in t], dtype=float)
        with np.errstate(divide="ignore", invalid="ignore"):
            w = binom[None, :] * np.where(t[None, :] == 0, 1.0, q[:, None] ** t[None, :])
            miss = np.where((m - t)[None, :] == 0, 1.0, (1.0 - q[:, None]) ** (m - t)[None, :])
        mass = t[None, :] + q[:, None] * unreported
        eu_u = mass * pay.pd[:, None]
        eg = mass * pay.gain[:, None]
        util = float((w * (miss * eu_u + p_rank * eg)).sum())
        cover = (w * p_rank).sum(axis=1)
        self._terms[key] = (util, cover)
        return util, cover

    def _subset_table(self, ctx: TipContext, bits: np.ndarray):
        """Probability, size and unreported mass for each row of a reported-set bit matrix."""
        reach = list(ctx.reachable)
        rp = ctx.report_prob[reach]
        probs = np.prod(np.where(bits, rp, 1.0 - rp), axis=1) if reach else np.ones(len(bits))
        sizes = bits.sum(axis=1)
        total = ctx.posterior_unreported.sum()
        mass = total - bits.astype(float) @ ctx.posterior_unreported[reach] if reach else np.full(len(bits), total)
        return probs, sizes, mass

    def _all_subsets(self, ctx: TipContext) -> np.ndarray:
        nv = len(ctx.reachable)
        if nv > self.max_enum:
            raise SizeGuardError(f"{nv} reachable attackers exceeds enumeration guard {self.max_enum}")
        codes = np.arange(2**nv)
        return ((codes[:, None] >> np.arange(nv)[None, :]) & 1).astype(bool)

    def _enumerate(self, ctx: TipContext, max_size: int | None = None) -> tuple[float, np.ndarray]:
        bits = self._all_subsets(ctx)
        probs, sizes, mass = self._subset_table(ctx, bits)
        value = 0.0
        cover = np.zeros(self.inst.n)
        x0 = self.routine.x0
        for pv, m, s in zip(probs, sizes, mass):
            if max_size is not None and m >= max_size:
                continue
            if m == 0:
                value += pv * s * self.def_eu0
                cover += pv * x0
                continue
            if pv == 0.0:
                continue
            util, cov = self.informed_terms(int(m), float(s))
            value += pv * util
            cover += pv * cov
        return value, cover

    # ------------------------------------------------------------ evaluators

    def exact(self, informants: Iterable[int]) -> EvaluationResult:
        ctx = self.context(informants)
        value, _ = self._enumerate(ctx)
        return EvaluationResult(value, "exact", diagnostics={"reachable": len(ctx.reachable)})

    def truncated(self, informants: Iterable[int], C: int, c_prime: float | None = None, Q: float | None = None) -> EvaluationResult:
        """Enumeration restricted to reported sets smaller than ``C``.

        The error bound is attached when the expected number of attacks
        is at most ``c_prime < C`` (``c_prime`` defaults to that expectation).
        """
        if C < 1:
            raise ValueError("C must be >= 1")
        ctx = self.context(informants)
        value, _ = self._enumerate(ctx, max_size=C)
        pay = self.inst.payoffs
        total_p = float(self.inst.graph.attack_prob.sum())
        if c_prime is None:
            c_prime = total_p
        if Q is None:
            Q = float(max(np.abs(pay.rd).max(), np.abs(pay.pd).max()))
        bound = None
        if total_p <= c_prime + 1e-12 and c_prime < C:
            bound = truncation_bound(C, c_prime, self.inst.graph.n_attackers, Q)
        return EvaluationResult(value, "cTruncated", error_bound=bound, diagnostics={"C": C, "c_prime": c_prime, "Q": Q})

    def sampled(self, informants: Iterable[int], T: int, seed: int | None = None) -> EvaluationResult:
        """Average of the exact conditional utility over ``T`` sampled reported sets."""
        if T < 1:
            raise ValueError("T must be >= 1")
        ctx = self.context(informants)
        rng = np.random.default_rng(seed)
        reach = list(ctx.reachable)
        bits = rng.random((T, len(reach))) < ctx.report_prob[reach]
        _, sizes, mass = self._subset_table(ctx, bits)
        vals = np.empty(T)
        for k, (m, s) in enumerate(zip(sizes, mass)):
            vals[k] = s * self.def_eu0 if m == 0 else self.informed_terms(int(m), float(s))[0]
        std = float(vals.std(ddof=1)) if T > 1 else 0.0
        return EvaluationResult(float(vals.mean()), "sampled", sample_count=T, seed=seed, diagnostics={"std": std, "stderr": std / math.sqrt(T)})

    def sisi(self, informants: Iterable[int]) -> EvaluationResult:
        """Polynomial-time evaluation when every recruited edge has intensity 1."""
        members = frozenset(informants)
        for (u, v), w in self.inst.graph.edges.items():
            if u in members and w != 1.0:
                raise NotSisiError(f"edge ({self.inst.graph.informants[u]}, {self.inst.graph.attackers[v]}) has w={w}")
        ctx = self.context(members)
        p = self.inst.graph.attack_prob
        reach = list(ctx.reachable)
        poly = np.array([1.0])
        for v in reach:
            poly = np.convolve(poly, [1.0 - p[v], p[v]])
        outside = float(np.delete(p, reach).sum()) if reach else float(p.sum())
        value = poly[0] * outside * self.def_eu0
        for t0 in range(1, len(poly)):
            if poly[t0] == 0.0:
                continue
            value += poly[t0] * self.informed_terms(t0, outside)[0]
        return EvaluationResult(float(value), "sisi", diagnostics={"size_distribution": poly.tolist()})

    def monte_carlo(self, informants: Iterable[int], episodes: int, seed: int | None = None) -> EvaluationResult:
        """Simulate the tip/patrol process directly and average realised payoffs."""
        if episodes < 1:
            raise ValueError("episodes must be >= 1")
        ctx = self.context(informants)
        pay, q, r = self.inst.payoffs, self.q, self.inst.resources
        n, ny = pay.n, len(ctx.attack_prob)
        rng = np.random.default_rng(seed)
        cdf = np.cumsum(q)
        cdf[-1] = 1.0
        x0 = self.routine.x0
        total = 0.0
        total_sq = 0.0
        done = 0
        while done < episodes:
            E = min(MC_CHUNK, episodes - done)
            attack = rng.random((E, ny)) < ctx.attack_prob
            tgt = np.searchsorted(cdf, rng.random((E, ny)), side="right")
            tgt = np.minimum(tgt, n - 1)
            reported = attack & (rng.random((E, ny)) < ctx.report)
            informed = reported.any(axis=1)
            onehot = tgt[:, :, None] == np.arange(n)[None, None, :]
            counts = (onehot & reported[:, :, None]).sum(axis=1)
            mass = ctx.posterior_unreported.sum() - reported.astype(float) @ ctx.posterior_unreported
            gains = expected_gain(counts, q[None, :], mass[:, None], pay.gain[None, :])
            order = np.argsort(-gains, axis=1, kind="stable")
            ranks = np.empty_like(order)
            np.put_along_axis(ranks, order, np.arange(n)[None, :].repeat(E, axis=0), axis=1)
            tip_cover = ranks < r
            routine_cover = rng.random((E, n)) < x0
            covered = np.where(informed[:, None], tip_cover, routine_cover)
            hit = np.take_along_axis(covered, tgt, axis=1)
            payoff = np.where(hit, pay.rd[tgt], pay.pd[tgt])
            per_ep = np.where(attack, payoff, 0.0).sum(axis=1)
            total += per_ep.sum()
            total_sq += (per_ep**2).sum()
            done += E
        mean = total / episodes
        var = max(0.0, total_sq / episodes - mean**2) * episodes / max(1, episodes - 1)
        stderr = math.sqrt(var / episodes)
        return EvaluationResult(mean, "monteCarlo", sample_count=episodes, seed=seed, diagnostics={"std": math.sqrt(var), "stderr": stderr})

    def marginal_coverage(self, informants: Iterable[int]) -> np.ndarray:
        """Per-target marginal coverage when tips are answered greedily."""
        ctx = self.context(informants)
        _, cover = self._enumerate(ctx)
        return cover


def eval_exact(inst: GameInstance, informants: Iterable[int], **kw) -> EvaluationResult:
    return InformantEvaluator(inst, **kw).exact(informants)


def eval_truncated(inst: GameInstance, informants: Iterable[int], C: int, c_prime: float | None = None, Q: float | None = None, **kw) -> EvaluationResult:
    return InformantEvaluator(inst, **kw).truncated(informants, C, c_prime, Q)


def eval_sampled(inst: GameInstance, informants: Iterable[int], T: int, seed: int | None = None, **kw) -> EvaluationResult:
    return InformantEvaluator(inst, **kw).sampled(informants, T, seed)


def eval_sisi(inst: GameInstance, informants: Iterable[int], **kw) -> EvaluationResult:
    return InformantEvaluator(inst, **kw).sisi(informants)


def eval_monte_carlo(inst: GameInstance, informants: Iterable[int], episodes: int, seed: int | None = None, **kw) -> EvaluationResult:
    return InformantEvaluator(inst, **kw).monte_carlo(informants, episodes, seed)
