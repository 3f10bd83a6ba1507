"""Game data types, validation, the quantal response map and the random instance generator."""

from __future__ import annotations

import json
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np

EPS_TOL = 1e-9
PAYOFF_SCALE = 2.0
DEFAULT_LAMBDA = 2.0


class InstanceError(ValueError):
    """Raised when an instance cannot be built or loaded."""


@dataclass(frozen=True)
class TargetPayoffs:
    """Per-target payoff vectors.

    ``rd``/``pd`` are the defender's reward (covered) and penalty (uncovered);
    ``ra``/``pa`` are the attacker's reward (uncovered) and penalty (covered).
    """

    rd: np.ndarray
    pd: np.ndarray
    ra: np.ndarray
    pa: np.ndarray

    def __post_init__(self):
        for name in ("rd", "pd", "ra", "pa"):
            arr = np.asarray(getattr(self, name), dtype=float).reshape(-1)
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)
        if not (len(self.rd) == len(self.pd) == len(self.ra) == len(self.pa)):
            raise InstanceError("payoff vectors must have equal length")

    @property
    def n(self) -> int:
        return len(self.rd)

    @property
    def gain(self) -> np.ndarray:
        """Defender's gain from covering each target, ``rd - pd``."""
        return self.rd - self.pd

    def subset(self, idx: Sequence[int]) -> "TargetPayoffs":
        idx = list(idx)
        return TargetPayoffs(self.rd[idx], self.pd[idx], self.ra[idx], self.pa[idx])


@dataclass(frozen=True)
class SocialGraph:
    """Bipartite informant/attacker graph.

    ``edges`` maps ``(informant_index, attacker_index)`` to the reporting
    intensity; ``attack_prob[v]`` is the probability attacker ``v`` attacks.
    """

    informants: tuple[str, ...]
    attackers: tuple[str, ...]
    edges: Mapping[tuple[int, int], float]
    attack_prob: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "informants", tuple(self.informants))
        object.__setattr__(self, "attackers", tuple(self.attackers))
        object.__setattr__(self, "edges", dict(self.edges))
        p = np.asarray(self.attack_prob, dtype=float).reshape(-1)
        p.setflags(write=False)
        object.__setattr__(self, "attack_prob", p)

    @property
    def n_informants(self) -> int:
        return len(self.informants)

    @property
    def n_attackers(self) -> int:
        return len(self.attackers)

    def intensity_matrix(self) -> np.ndarray:
        """Dense ``|X| x |Y|`` intensity matrix (0 where no edge)."""
        w = np.zeros((self.n_informants, self.n_attackers))
        for (u, v), val in self.edges.items():
            if 0 <= u < self.n_informants and 0 <= v < self.n_attackers:
                w[u, v] = val
        return w

    def adjacency(self) -> np.ndarray:
        a = np.zeros((self.n_informants, self.n_attackers), dtype=bool)
        for u, v in self.edges:
            if 0 <= u < self.n_informants and 0 <= v < self.n_attackers:
                a[u, v] = True
        return a

    def informant_index(self, ident: str) -> int:
        try:
            return self.informants.index(ident)
        except ValueError:
            raise InstanceError(f"unknown informant id {ident!r}") from None


@dataclass(frozen=True)
class GameInstance:
    payoffs: TargetPayoffs
    graph: SocialGraph
    resources: int
    recruit_budget: int
    lam: float = DEFAULT_LAMBDA

    @property
    def n(self) -> int:
        return self.payoffs.n

    def with_params(self, **kw) -> "GameInstance":
        return replace(self, **kw)


@dataclass(frozen=True)
class Violation:
    field: str
    message: str

    def __str__(self):
        return f"{self.field}: {self.message}"


def validate_instance(inst: GameInstance) -> list[Violation]:
    """Return every invariant violation; an empty list means the instance is well formed."""
    out: list[Violation] = []
    pay = inst.payoffs
    if pay.n < 1:
        out.append(Violation("n", "need at least one target"))
    for i in range(pay.n):
        if not pay.rd[i] > 0:
            out.append(Violation(f"targets[{i}].rd", "defender reward must be > 0"))
        if not pay.pd[i] < 0:
            out.append(Violation(f"targets[{i}].pd", "defender penalty must be < 0"))
        if not pay.ra[i] > 0:
            out.append(Violation(f"targets[{i}].ra", "attacker reward must be > 0"))
        if not pay.pa[i] < 0:
            out.append(Violation(f"targets[{i}].pa", "attacker penalty must be < 0"))
    if int(inst.resources) != inst.resources or inst.resources < 1:
        out.append(Violation("r", "resources must be an integer >= 1"))
    if int(inst.recruit_budget) != inst.recruit_budget or inst.recruit_budget < 0:
        out.append(Violation("k", "recruit budget must be an integer >= 0"))
    if not (inst.lam >= 0):
        out.append(Violation("lambda", "precision must be >= 0"))

    g = inst.graph
    if len(set(g.informants)) != len(g.informants):
        out.append(Violation("informants", "duplicate informant ids"))
    if len(set(g.attackers)) != len(g.attackers):
        out.append(Violation("attackers", "duplicate attacker ids"))
    if len(g.attack_prob) != g.n_attackers:
        out.append(Violation("attackers", "one attack probability per attacker required"))
    for v, p in enumerate(g.attack_prob):
        if not 0.0 <= p <= 1.0:
            out.append(Violation(f"attackers[{v}].p", "probability outside [0,1]"))
    for (u, v), w in g.edges.items():
        if not 0 <= u < g.n_informants:
            out.append(Violation(f"edges[{u},{v}]", "dangling edge: unknown informant"))
        if not 0 <= v < g.n_attackers:
            out.append(Violation(f"edges[{u},{v}]", "dangling edge: unknown attacker"))
        if not 0.0 <= w <= 1.0:
            out.append(Violation(f"edges[{u},{v}]", "intensity outside [0,1]"))
    return out


def attacker_utilities(belief: np.ndarray, payoffs: TargetPayoffs) -> np.ndarray:
    belief = np.asarray(belief, dtype=float)
    return belief * payoffs.pa + (1.0 - belief) * payoffs.ra


def quantal_response(belief, payoffs: TargetPayoffs, lam: float) -> np.ndarray:
    """Softmax attack distribution against a believed coverage vector."""
    u = lam * attacker_utilities(belief, payoffs)
    u = u - u.max()
    e = np.exp(u)
    return e / e.sum()


def single_attack_utility(x, q, payoffs: TargetPayoffs) -> float:
    x = np.asarray(x, dtype=float)
    q = np.asarray(q, dtype=float)
    return float(np.dot(q, x * payoffs.rd + (1.0 - x) * payoffs.pd))


# ---------------------------------------------------------------- generation


def generate_instance(
    seed: int,
    n_informants: int,
    n_attackers: int,
    n_targets: int,
    resources: int,
    recruit_budget: int,
    sum_pv_cap: float | None = None,
    attack_prob: float | None = None,
    payoff_scale: float = PAYOFF_SCALE,
    lam: float = DEFAULT_LAMBDA,
    max_intensity: float = 0.2,
) -> GameInstance:
    """Draw a random instance following the experimental protocol.

    Informant degrees are uniform on ``1..|Y|`` with uniformly random
    neighbour sets, intensities ``U[0, max_intensity]``, attack
    probabilities ``U[0.4, 1]`` (or rescaled uniform weights capped by
    ``sum_pv_cap``), and payoffs uniform on ``(0, Q]`` / ``[-Q, 0)``.
    ``attack_prob`` overrides every ``p_v`` with a constant.
    """
    if n_attackers < 1:
        raise InstanceError("empty graph: need at least one attacker")
    if n_targets < 1:
        raise InstanceError("need at least one target")
    rng = np.random.default_rng(seed)

    edges: dict[tuple[int, int], float] = {}
    for u in range(n_informants):
        d = int(rng.integers(1, n_attackers + 1))
        nbrs = np.sort(rng.choice(n_attackers, size=d, replace=False))
        for v in nbrs:
            edges[(u, int(v))] = float(max_intensity * rng.random())

    if sum_pv_cap is not None:
        t = rng.random(n_attackers)
        p = np.minimum(1.0, sum_pv_cap * t / t.sum())
    else:
        p = rng.uniform(0.4, 1.0, size=n_attackers)
    if attack_prob is not None:
        p = np.full(n_attackers, float(attack_prob))

    def pos():
        return payoff_scale * (1.0 - rng.random(n_targets))

    rd, ra = pos(), pos()
    pd, pa = -pos(), -pos()
    payoffs = TargetPayoffs(rd, pd, ra, pa)
    graph = SocialGraph(
        informants=tuple(f"u{i + 1}" for i in range(n_informants)),
        attackers=tuple(f"v{i + 1}" for i in range(n_attackers)),
        edges=edges,
        attack_prob=p,
    )
    return GameInstance(payoffs, graph, int(resources), int(recruit_budget), float(lam))


# ---------------------------------------------------------------- file format


def instance_to_dict(inst: GameInstance) -> dict:
    pay, g = inst.payoffs, inst.graph
    return {
        "targets": [
            {"rd": float(pay.rd[i]), "pd": float(pay.pd[i]), "ra": float(pay.ra[i]), "pa": float(pay.pa[i])}
            for i in range(pay.n)
        ],
        "informants": list(g.informants),
        "attackers": [{"id": a, "p": float(g.attack_prob[v])} for v, a in enumerate(g.attackers)],
        "edges": [
            {"u": g.informants[u], "v": g.attackers[v], "w": float(w)}
            for (u, v), w in sorted(g.edges.items())
        ],
        "r": int(inst.resources),
        "k": int(inst.recruit_budget),
        "lambda": float(inst.lam),
    }


def instance_from_dict(doc: Mapping) -> GameInstance:
    try:
        targets = doc["targets"]
        informants = [str(u) for u in doc["informants"]]
        attackers = doc["attackers"]
        att_ids = [str(a["id"]) for a in attackers]
        inf_pos = {u: i for i, u in enumerate(informants)}
        att_pos = {a: i for i, a in enumerate(att_ids)}
        edges: dict[tuple[int, int], float] = {}
        for e in doc.get("edges", []):
            # unknown ids are kept as out-of-range indices so validation reports them
            u = inf_pos.get(str(e["u"]), -1)
            v = att_pos.get(str(e["v"]), -1)
            edges[(u, v)] = float(e["w"])
        payoffs = TargetPayoffs(
            [t["rd"] for t in targets],
            [t["pd"] for t in targets],
            [t["ra"] for t in targets],
            [t["pa"] for t in targets],
        )
        graph = SocialGraph(tuple(informants), tuple(att_ids), edges, [a["p"] for a in attackers])
        return GameInstance(payoffs, graph, doc["r"], doc.get("k", 0), float(doc.get("lambda", DEFAULT_LAMBDA)))
    except (KeyError, TypeError) as exc:
        raise InstanceError(f"malformed instance document: {exc}") from exc


def dumps_instance(inst: GameInstance) -> str:
    return json.dumps(instance_to_dict(inst), indent=2) + "\n"


def save_instance(inst: GameInstance, path: str | Path) -> None:
    path = Path(path)
    try:
        path.write_text(dumps_instance(inst))
    except OSError as exc:
        raise InstanceError(f"cannot write instance to {path}: {exc}") from exc


def load_instance(path: str | Path) -> GameInstance:
    path = Path(path)
    try:
        doc = json.loads(path.read_text())
    except OSError as exc:
        raise InstanceError(f"cannot read instance {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise InstanceError(f"{path}: invalid JSON: {exc}") from exc
    return instance_from_dict(doc)


def parse_informant_set(inst: GameInstance, spec: str | Iterable[str]) -> frozenset[int]:
    """Map a comma separated list (or iterable) of informant ids to indices."""
    if isinstance(spec, str):
        spec = [s for s in (t.strip() for t in spec.split(",")) if s]
    return frozenset(inst.graph.informant_index(s) for s in spec)


def counterexample_instance() -> GameInstance:
    """The two-informant, three-attacker counterexample to submodularity."""
    payoffs = TargetPayoffs([1.0, 2.0], [-1e-8, -1e-8], [1.0, 1.0], [-1.0, -1.0])
    graph = SocialGraph(("u1", "u2"), ("v1", "v2", "v3"), {(0, 1): 1.0, (1, 2): 1.0}, [1.0, 1.0, 1.0])
    return GameInstance(payoffs, graph, resources=1, recruit_budget=2, lam=0.0)
