"""Independent reference implementations used only by the tests.

Each oracle takes a different route from the library code it checks:
enumeration instead of convolution, exact rational flow instead of quantized
Dinic, an LP instead of network simplex, BFS instead of closed forms.
"""

from __future__ import annotations

import itertools
import math
from collections import deque
from fractions import Fraction

import numpy as np
from scipy.optimize import linprog


# -- enumeration ------------------------------------------------------------
def enumerate_walk(group, atoms, n):
    """Law of ``s_1 ... s_n`` by summing over all increment strings."""
    out = {}
    for word in itertools.product(atoms, repeat=n):
        g = group.identity
        p = 1.0
        for s, m in word:
            g = group.mul(g, s)
            p *= m
        out[g] = out.get(g, 0.0) + p
    return out


def enumerate_pair_law(group, atoms, rho, n):
    """Law of ``(X_n, Y_n)`` over all (increment, mask, fresh increment) strings."""
    one = []
    for s, p in atoms:
        for keep, pk in ((True, 1.0 - rho), (False, rho)):
            for r, q in atoms:
                if keep and r != s:
                    continue
                one.append((s, s if keep else r, p * pk * (1.0 if keep else q)))
    # merge duplicate (s, t) pairs: the kept branch fires once per s
    merged = {}
    for s, t, w in one:
        merged[(s, t)] = merged.get((s, t), 0.0) + w
    out = {}
    for word in itertools.product(list(merged.items()), repeat=n):
        x, y = group.identity, group.identity
        p = 1.0
        for (s, t), w in word:
            x = group.mul(x, s)
            y = group.mul(y, t)
            p *= w
        out[(x, y)] = out.get((x, y), 0.0) + p
    return out


def enumerate_pair_law_raw(group, atoms, rho, n):
    """Same law, summing every (s, mask, s') outcome separately (no merging)."""
    out = {}
    step = list(itertools.product(atoms, (False, True), atoms))
    for word in itertools.product(step, repeat=n):
        x, y = group.identity, group.identity
        p = 1.0
        for (s, ps), masked, (r, pr) in word:
            x = group.mul(x, s)
            y = group.mul(y, r if masked else s)
            p *= ps * pr * (rho if masked else 1.0 - rho)
        out[(x, y)] = out.get((x, y), 0.0) + p
    return out


def entropy_bits(masses):
    return -math.fsum(m * math.log2(m) for m in masses if m > 0)


# -- Cayley graph -----------------------------------------------------------
def bfs_ball(group, gens, radius):
    """``{g: d(e, g)}`` for the right Cayley graph, up to ``radius``."""
    dist = {group.identity: 0}
    q = deque([group.identity])
    while q:
        g = q.popleft()
        if dist[g] == radius:
            continue
        for s in gens:
            h = group.mul(g, s)
            if h not in dist:
                dist[h] = dist[g] + 1
                q.append(h)
    return dist


def bfs_within(group, gens, inside):
    """Cayley-graph distances restricted to vertices satisfying ``inside``."""
    dist = {group.identity: 0}
    q = deque([group.identity])
    while q:
        g = q.popleft()
        for s in gens:
            h = group.mul(g, s)
            if h not in dist and inside(h):
                dist[h] = dist[g] + 1
                q.append(h)
    return dist


# -- transport --------------------------------------------------------------
def max_flow_edmonds_karp(cap, s, t):
    """Shortest augmenting paths on a dense capacity matrix of Fractions."""
    n = len(cap)
    flow = [[Fraction(0)] * n for _ in range(n)]
    total = Fraction(0)
    while True:
        parent = [-1] * n
        parent[s] = s
        q = deque([s])
        while q and parent[t] < 0:
            u = q.popleft()
            for v in range(n):
                if parent[v] < 0 and cap[u][v] - flow[u][v] > 0:
                    parent[v] = u
                    q.append(v)
        if parent[t] < 0:
            return total
        push = None
        v = t
        while v != s:
            u = parent[v]
            r = cap[u][v] - flow[u][v]
            push = r if push is None else min(push, r)
            v = u
        v = t
        while v != s:
            u = parent[v]
            flow[u][v] += push
            flow[v][u] -= push
            v = u
        total += push


def u_s_oracle(a, b, s, dist):
    """``1 - max close-pair flow`` in exact rational arithmetic.

    ``a``, ``b`` are lists of ``(point, mass)``.
    """
    if s <= 0:
        return 1.0
    na, nb = len(a), len(b)
    n = na + nb + 2
    src, sink = na + nb, na + nb + 1
    cap = [[Fraction(0)] * n for _ in range(n)]
    big = Fraction(2)
    for i, (_, m) in enumerate(a):
        cap[src][i] = Fraction(m)
    for j, (_, m) in enumerate(b):
        cap[na + j][sink] = Fraction(m)
    for i, (x, _) in enumerate(a):
        for j, (y, _) in enumerate(b):
            if dist(x, y) < s:
                cap[i][na + j] = big
    total = Fraction(sum(Fraction(m) for _, m in a))
    return float(1 - max_flow_edmonds_karp(cap, src, sink) / total)


def w1_lp(a, b, dist):
    """Earth mover distance as a dense transportation LP (HiGHS)."""
    na, nb = len(a), len(b)
    c = np.array([dist(x, y) for x, _ in a for y, _ in b], dtype=float)
    A = np.zeros((na + nb, na * nb))
    for i in range(na):
        A[i, i * nb:(i + 1) * nb] = 1
    for j in range(nb):
        A[na + j, j::nb] = 1
    rhs = np.array([m for _, m in a] + [m for _, m in b])
    res = linprog(c, A_eq=A, b_eq=rhs, bounds=(0, None), method="highs")
    assert res.success, res.message
    return float(res.fun)


def w1_vertices(a, b, dist):
    """Earth mover distance by enumerating basic feasible solutions.

    Every vertex of the transportation polytope is supported on a spanning
    forest of ``na + nb - 1`` cells; solve each such square system.
    """
    na, nb = len(a), len(b)
    cells = [(i, j) for i in range(na) for j in range(nb)]
    A = np.zeros((na + nb, na * nb))
    for i in range(na):
        A[i, i * nb:(i + 1) * nb] = 1
    for j in range(nb):
        A[na + j, j::nb] = 1
    rhs = np.array([m for _, m in a] + [m for _, m in b])
    cost = np.array([dist(a[i][0], b[j][0]) for i, j in cells], dtype=float)
    k = na + nb - 1
    best = math.inf
    rows = list(range(k))  # one balance row is redundant
    for basis in itertools.combinations(range(len(cells)), k):
        sub = A[np.ix_(rows, basis)]
        if abs(np.linalg.det(sub)) < 1e-9:
            continue
        x = np.linalg.solve(sub, rhs[rows])
        if x.min() < -1e-12:
            continue
        full = np.zeros(len(cells))
        full[list(basis)] = x
        if np.abs(A @ full - rhs).max() > 1e-9:
            continue
        best = min(best, float(cost @ full))
    return best


# -- free group -------------------------------------------------------------
def free_group_mean_length(n, rank=2):
    """``E|X_n|`` for the simple walk on ``F_rank`` via the reduced-length chain:
    from 0 always to 1; from ``k > 0`` up with ``(2r-1)/2r``, down with ``1/2r``."""
    up = (2 * rank - 1) / (2 * rank)
    p = np.zeros(n + 2)
    p[0] = 1.0
    for _ in range(n):
        q = np.zeros_like(p)
        q[1] += p[0]
        q[2:] += up * p[1:-1]
        q[:-2] += (1 - up) * p[1:-1]
        p = q
    return float((np.arange(len(p)) * p).sum())


# -- refresh recursion ------------------------------------------------------
def refresh_series(rho, d0, terms=10_000):
    """One level down: a slot stays unrefreshed iff each of its geometric number
    ``K >= 1`` of visits (``P(K = k) = q^(k-1)(1-q)``, ``q = 1/d0``) is unrefreshed."""
    q = 1.0 / d0
    miss = math.fsum((1 - rho) ** k * q ** (k - 1) * (1 - q) for k in range(1, terms))
    return 1.0 - miss
