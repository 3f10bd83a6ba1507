"""Independent reference computations used only by the tests.

Nothing here calls the package's evaluation, allocation or optimisation
code; every oracle works from the model definitions directly, by brute
force where possible.
"""

from __future__ import annotations

import itertools
import math

import numpy as np


def softmax_response(belief, ra, pa, lam):
    u = lam * (np.asarray(belief) * np.asarray(pa) + (1 - np.asarray(belief)) * np.asarray(ra))
    u = u - u.max(axis=-1, keepdims=True)
    e = np.exp(u)
    return e / e.sum(axis=-1, keepdims=True)


# ---------------------------------------------------------------- tips / evaluation


def intensity(inst, members):
    out = np.zeros(inst.graph.n_attackers)
    for v in range(inst.graph.n_attackers):
        miss = 1.0
        for (u, vv), w in inst.graph.edges.items():
            if vv == v and u in members:
                miss *= 1.0 - w
        out[v] = 1.0 - miss
    return out


def best_allocation_value(counts, q, unreported, rd, pd, r):
    """Maximum total expected utility over every set of at most ``r`` covered targets."""
    n = len(counts)
    mass = np.asarray(counts, float) + np.asarray(q) * unreported
    best = -math.inf
    for size in range(0, min(r, n) + 1):
        for cov in itertools.combinations(range(n), size):
            val = sum(mass[i] * (rd[i] if i in cov else pd[i]) for i in range(n))
            best = max(best, val)
    return best


def brute_defeu(inst, members, q, def_eu0):
    """DefEU(U) by enumerating reported sets and every placement of reported attackers."""
    members = frozenset(members)
    pay, g = inst.payoffs, inst.graph
    n, r = pay.n, inst.resources
    wt = intensity(inst, members)
    reach = [v for v in range(g.n_attackers) if any(u in members and vv == v for (u, vv) in g.edges)]
    p = g.attack_prob
    total = 0.0
    for size in range(len(reach) + 1):
        for rep in itertools.combinations(reach, size):
            prob = 1.0
            for v in reach:
                prob *= wt[v] * p[v] if v in rep else 1.0 - wt[v] * p[v]
            if prob == 0.0:
                continue
            unrep = 0.0
            for v in range(g.n_attackers):
                if v in rep:
                    continue
                if v in reach:
                    num = (1 - wt[v]) * p[v]
                    den = num + 1 - p[v]
                    unrep += 0.0 if den <= 0 else num / den
                else:
                    unrep += p[v]
            if size == 0:
                total += prob * unrep * def_eu0
                continue
            inner = 0.0
            for place in itertools.product(range(n), repeat=size):
                w = math.prod(q[t] for t in place)
                counts = np.bincount(place, minlength=n)
                inner += w * best_allocation_value(counts, q, unrep, pay.rd, pay.pd, r)
            total += prob * inner
    return total


def brute_cover_rank(i, t_i, m, unreported, q, gain, r):
    """Probability that the other reported attackers avoid ``i`` and ``i`` ranks in the top ``r``."""
    n = len(q)
    others = [j for j in range(n) if j != i]
    g_i = (t_i + q[i] * unreported) * gain[i]
    total = 0.0
    for place in itertools.product(others, repeat=m - t_i):
        w = math.prod(q[t] for t in place)
        counts = np.bincount(np.array(place, dtype=int), minlength=n) if place else np.zeros(n, int)
        better = 0
        for j in others:
            g_j = (counts[j] + q[j] * unreported) * gain[j]
            if g_j > g_i or (g_j == g_i and j < i):
                better += 1
        if better < r:
            total += w
    return total


# ---------------------------------------------------------------- linear programming


def vertex_lp(c, a_ub=None, b_ub=None, a_eq=None, b_eq=None, lo=None, hi=None, tol=1e-9):
    """Maximise ``c @ x`` over a bounded polytope by enumerating all basic solutions.

    Only suitable for a handful of variables.  Returns ``(value, x)`` or
    ``None`` if infeasible.
    """
    c = np.asarray(c, float)
    nv = len(c)
    rows, rhs = [], []
    eq_rows, eq_rhs = [], []
    if a_ub is not None:
        rows += list(np.atleast_2d(a_ub))
        rhs += list(b_ub)
    if a_eq is not None:
        eq_rows += list(np.atleast_2d(a_eq))
        eq_rhs += list(b_eq)
    lo = np.zeros(nv) if lo is None else np.asarray(lo, float)
    hi = np.asarray(hi, float)
    for k in range(nv):
        e = np.zeros(nv)
        e[k] = 1.0
        rows += [e, -e]
        rhs += [hi[k], -lo[k]]
    A = np.array(rows)
    b = np.array(rhs)
    E = np.array(eq_rows).reshape(-1, nv)
    f = np.array(eq_rhs)
    need = nv - len(E)
    best = None
    for combo in itertools.combinations(range(len(A)), need):
        M = np.vstack([E, A[list(combo)]]) if len(E) else A[list(combo)]
        v = np.concatenate([f, b[list(combo)]]) if len(E) else b[list(combo)]
        if abs(np.linalg.det(M)) < 1e-12:
            continue
        x = np.linalg.solve(M, v)
        if np.all(A @ x <= b + tol) and (not len(E) or np.allclose(E @ x, f, atol=tol)):
            val = float(c @ x)
            if best is None or val > best[0] + 1e-12:
                best = (val, x)
    return best


# ---------------------------------------------------------------- grid searches


def grid_routine(rd, pd, ra, pa, lam, r, step=0.01):
    """Best two-target coverage on a grid with ``x1 + x2 <= r``."""
    g = np.arange(0, 1 + 1e-12, step)
    x1, x2 = np.meshgrid(g, g, indexing="ij")
    keep = x1 + x2 <= r + 1e-12
    X = np.stack([x1[keep], x2[keep]], axis=1)
    Q = softmax_response(X, ra, pa, lam)
    vals = (Q * (X * np.asarray(rd) + (1 - X) * np.asarray(pd))).sum(axis=1)
    k = int(np.argmax(vals))
    return float(vals[k]), X[k]


def grid_qri(rd, pd, ra, pa, lam, r, w, step=0.01):
    """Best two-target ``(x, z)`` on a grid; the attacker faces ``(1-w)x + wz``."""
    g = np.arange(0, 1 + 1e-12, step)
    x1, x2 = np.meshgrid(g, g, indexing="ij")
    keep = x1 + x2 <= r + 1e-12
    X = np.stack([x1[keep], x2[keep]], axis=1)
    Z = np.stack(np.meshgrid(g, g, indexing="ij"), axis=-1).reshape(-1, 2)
    rd, pd = np.asarray(rd), np.asarray(pd)
    best = -math.inf
    for start in range(0, len(X), 200):
        Y = (1 - w) * X[start : start + 200, None, :] + w * Z[None, :, :]
        Q = softmax_response(Y, ra, pa, lam)
        vals = (Q * (Y * rd + (1 - Y) * pd)).sum(axis=-1)
        best = max(best, float(vals.max()))
    return best


# ---------------------------------------------------------------- MILP reference


def milp_segmented(prog):
    """Solve a segmented program as a mixed-integer LP with explicit fill-order binaries."""
    from scipy.optimize import Bounds, LinearConstraint, milp

    n, K = prog.seg_cost.shape
    ne = len(prog.extra_cost)
    width = 1.0 / K
    # variables: y (n*K), extras (ne), h (n*(K-1)) with h[i,j]=1 => segment j full
    ny, nh = n * K, n * (K - 1)
    nv = ny + ne + nh
    c = np.concatenate([prog.seg_cost.reshape(-1), prog.extra_cost, np.zeros(nh)])
    A, lo_b, hi_b = [], [], []
    for i in range(n):
        row = np.zeros(nv)
        row[i * K : (i + 1) * K] = 1.0
        row[ny : ny + ne] -= prog.link[i]
        A.append(row)
        lo_b.append(0.0)
        hi_b.append(0.0)
        for j in range(K - 1):
            hidx = ny + ne + i * (K - 1) + j
            # h_ij / K <= y_ij  and  y_i(j+1) <= h_ij / K
            row = np.zeros(nv)
            row[hidx] = width
            row[i * K + j] = -1.0
            A.append(row)
            lo_b.append(-np.inf)
            hi_b.append(0.0)
            row = np.zeros(nv)
            row[i * K + j + 1] = 1.0
            row[hidx] = -width
            A.append(row)
            lo_b.append(-np.inf)
            hi_b.append(0.0)
    if prog.a_ub is not None:
        for row_e, b in zip(np.atleast_2d(prog.a_ub), prog.b_ub):
            row = np.zeros(nv)
            row[ny : ny + ne] = row_e
            A.append(row)
            lo_b.append(-np.inf)
            hi_b.append(b)
    lb = np.concatenate([np.zeros(ny), [b[0] for b in prog.extra_bounds], np.zeros(nh)])
    ub = np.concatenate([np.full(ny, width), [b[1] for b in prog.extra_bounds], np.ones(nh)])
    integrality = np.concatenate([np.zeros(ny + ne), np.ones(nh)])
    res = milp(c, constraints=LinearConstraint(np.array(A), lo_b, hi_b), integrality=integrality, bounds=Bounds(lb, ub))
    assert res.status == 0, res.message
    return float(res.fun) + prog.const
