"""Monte Carlo sampling of noised walk pairs and the estimators built on them.

Random streams: replicate ``r`` lives in block ``r // BLOCK`` (row ``r % BLOCK``),
and each block draws from ``SeedSequence(seed, spawn_key=(stream, block))``.
Blocks are independent, so results never depend on how many threads run them.

Every replicate carries three endpoints: ``X = s_1...s_n``, ``Y`` (masked
increments replaced by fresh ones) and ``X' = r_1...r_n`` built only from the
fresh increments, which is independent of ``X``.
"""

from __future__ import annotations

import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from functools import singledispatch
from typing import Callable

import numpy as np
from numba import njit

from .groups import (DirectProduct, Dihedral, FiniteGroup, FreeGroup, Group, Lamplighter,
                     Lattice)

BLOCK = 256
STREAM_PAIR = 0


class SamplerError(ValueError):
    pass


@dataclass(frozen=True)
class EstimateResult:
    """Point estimate with its standard error (sample std / sqrt(reps))."""

    mean: float
    stderr: float
    reps: int
    seed: int
    label: str = ""
    unit: str = ""
    extra: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        if self.reps < 2:
            raise SamplerError("an estimate needs at least two replicates")

    def interval(self, z: float = 3.0) -> tuple[float, float]:
        return self.mean - z * self.stderr, self.mean + z * self.stderr


def estimate(values, seed: int, label: str = "", unit: str = "", **extra) -> EstimateResult:
    v = np.asarray(values, dtype=float)
    if v.size < 2:
        raise SamplerError("an estimate needs at least two replicates")
    return EstimateResult(float(v.mean()), float(v.std(ddof=1) / math.sqrt(v.size)),
                          int(v.size), seed, label, unit, extra)


def ratio_estimate(a, b, seed: int, label: str = "", **extra) -> EstimateResult:
    """``mean(a) / mean(b)`` over paired replicates, delta-method error."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    mb = b.mean()
    if mb == 0:
        raise SamplerError("degenerate denominator (zero spread)")
    r = a.mean() / mb
    se = float((a - r * b).std(ddof=1) / math.sqrt(a.size) / abs(mb))
    return EstimateResult(float(r), se, int(a.size), seed, label, "", extra)


# ---------------------------------------------------------------------------
def threads() -> int:
    raw = os.environ.get("GROUPNOISE_THREADS")
    if raw:
        try:
            return max(1, int(raw))
        except ValueError:
            raise SamplerError(f"GROUPNOISE_THREADS={raw!r} is not an integer") from None
    return os.cpu_count() or 1


def block_rng(seed: int, block: int, stream: int = STREAM_PAIR) -> np.random.Generator:
    ss = np.random.SeedSequence(int(seed) % 2**64, spawn_key=(stream, block))
    return np.random.Generator(np.random.PCG64(ss))


def map_blocks(fn: Callable, reps: int, seed: int, stream: int = STREAM_PAIR) -> list:
    """``[fn(rng, rows) for each block]`` in block order; ``rows`` replicates are kept."""
    if reps < 1:
        raise SamplerError("reps must be >= 1")
    nblocks = (reps + BLOCK - 1) // BLOCK
    jobs = [(b, min(BLOCK, reps - b * BLOCK)) for b in range(nblocks)]

    def run(job):
        b, rows = job
        return fn(block_rng(seed, b, stream), rows)

    workers = min(threads(), nblocks)
    if workers <= 1:
        return [run(j) for j in jobs]
    with ThreadPoolExecutor(workers) as pool:
        return list(pool.map(run, jobs))


class AtomTable:
    """Indexable atoms of a step measure with a sampler for atom indices."""

    def __init__(self, mu):
        items = sorted(mu.items(), key=lambda gm: mu.group.format(gm[0]))
        self.group = mu.group
        self.elems = [g for g, _ in items]
        self.probs = np.array([m for _, m in items])
        self.uniform = bool(np.all(self.probs == self.probs[0]))
        self.cdf = np.cumsum(self.probs)
        self.cdf[-1] = 1.0

    def __len__(self):
        return len(self.elems)

    def draw(self, rng, shape):
        if self.uniform:
            return rng.integers(0, len(self.elems), size=shape, dtype=np.int64)
        return np.searchsorted(self.cdf, rng.random(shape), side="right").astype(np.int64)


def draw_block(table: AtomTable, rng, n: int, rows: int):
    """Increments, refresh uniforms and fresh increments for one full block.

    Shapes never depend on ``rho`` or ``rows``, so masks ``u < rho`` are nested
    across ``rho`` and a replicate's draws do not depend on the replicate count.
    """
    idx = table.draw(rng, (BLOCK, n))
    u = rng.random((BLOCK, n))
    ridx = table.draw(rng, (BLOCK, n))
    return idx[:rows], u[:rows], ridx[:rows]


# ---------------------------------------------------------------------------
@dataclass
class WalkSample:
    """One replicate: increments, mask, fresh increments and both endpoints."""

    increments: list
    mask: np.ndarray
    refreshed: list
    x: object
    y: object

    @property
    def y_increments(self) -> list:
        return [r if m else s for s, m, r in zip(self.increments, self.mask, self.refreshed)]


def sample_pair(mu, rho: float, n: int, seed: int, replicate: int = 0) -> WalkSample:
    """Replicate ``replicate`` of the increment stream behind the estimators.

    Lattice estimators draw atom counts instead of increments (same law,
    different stream), so their replicates are not reproduced here.
    """
    _check_rho(rho)
    table = AtomTable(mu)
    rng = block_rng(seed, replicate // BLOCK)
    idx, u, ridx = draw_block(table, rng, n, BLOCK)
    row = replicate % BLOCK
    inc = [table.elems[i] for i in idx[row]]
    ref = [table.elems[i] for i in ridx[row]]
    mask = u[row] < rho
    g = mu.group
    x = g.product(inc)
    y = g.product([r if m else s for s, m, r in zip(inc, mask, ref)])
    return WalkSample(inc, mask, ref, x, y)


def _check_rho(rho):
    if not 0.0 <= rho <= 1.0:
        raise SamplerError(f"rho={rho} outside [0, 1]")


# ---------------------------------------------------------------------------
# Batch folds: left-to-right products of many increment rows at once.

class Fold:
    """Batch arithmetic for one group: ``fold`` turns an ``(B, n)`` array of atom
    indices into endpoint states; ``dist``/``length`` act on states."""

    def __init__(self, group: Group, elems: list):
        self.group = group
        self.elems = elems

    def fold(self, idx):
        g = self.group
        return [g.product(self.elems[i] for i in row) for row in idx]

    def dist(self, a, b):
        d = self.group.distance
        return np.array([d(x, y) for x, y in zip(a, b)], dtype=float)

    def length(self, a):
        ln = self.group.length
        return np.array([ln(x) for x in a], dtype=float)

    def elements(self, a) -> list:
        return list(a)

    def event(self, name: str, a, b):
        if name == "always":
            return np.ones(len(self.elements(a)), dtype=bool)
        if name == "equal":
            return self.dist(a, b) == 0
        raise SamplerError(f"event {name!r} is not available on {self.group}")

    def pairs(self, rng, n, rho, rows):
        """``(X, Y, X')`` states for one block."""
        table = self.table
        idx, u, ridx = draw_block(table, rng, n, rows)
        yidx = np.where(u < rho, ridx, idx)
        return self.fold(idx), self.fold(yidx), self.fold(ridx)


@singledispatch
def make_fold(group, elems) -> Fold:
    return Fold(group, elems)


class LatticeFold(Fold):
    def __init__(self, group, elems):
        super().__init__(group, elems)
        self.vec = np.array(elems, dtype=np.int64).reshape(len(elems), group.d)

    def fold(self, idx):
        out = np.zeros((idx.shape[0], self.group.d), dtype=np.int64)
        for k in range(self.group.d):
            out[:, k] = self.vec[:, k][idx].sum(axis=1)
        return out

    def dist(self, a, b):
        return np.abs(a - b).sum(axis=1).astype(float)

    def length(self, a):
        return np.abs(a).sum(axis=1).astype(float)

    def elements(self, a):
        return [tuple(int(x) for x in row) for row in a]

    def pairs(self, rng, n, rho, rows):
        # The endpoint only depends on atom counts, so draw those directly:
        # K ~ Bin(n, rho) refreshed slots, multinomial counts for the kept,
        # original and fresh increments in the refreshed slots.
        p = self.table.probs
        k = rng.binomial(n, rho, size=BLOCK)
        keep = rng.multinomial(n - k, p)
        old = rng.multinomial(k, p)
        new = rng.multinomial(k, p)
        indep = rng.multinomial(np.full(BLOCK, n), p)
        v = self.vec
        x = (keep + old) @ v
        y = (keep + new) @ v
        x2 = indep @ v
        return x[:rows], y[:rows], x2[:rows]


make_fold.register(Lattice, LatticeFold)


class DihedralFold(Fold):
    def __init__(self, group, elems):
        super().__init__(group, elems)
        self.k = np.array([e[0] for e in elems], dtype=np.int64)
        self.e = np.array([e[1] for e in elems], dtype=np.int64)

    def fold(self, idx):
        rows = idx.shape[0]
        if idx.shape[1] == 0:
            return np.zeros(rows, np.int64), np.ones(rows, np.int64)
        eps = self.e[idx]
        upto = np.cumprod(eps, axis=1)
        before = np.concatenate([np.ones((rows, 1), np.int64), upto[:, :-1]], axis=1)
        return (before * self.k[idx]).sum(axis=1), upto[:, -1]

    @staticmethod
    def _position(k, e):
        return np.where(e == 1, -2 * k, -2 * k + 1)

    def dist(self, a, b):
        (k1, e1), (k2, e2) = a, b
        return np.abs(self._position(e1 * (k2 - k1), e1 * e2)).astype(float)

    def length(self, a):
        return np.abs(self._position(*a)).astype(float)

    def elements(self, a):
        return [(int(k), int(e)) for k, e in zip(*a)]

    def event(self, name, a, b):
        if name == "same-sheet":
            return a[1] == b[1]
        return super().event(name, a, b)


make_fold.register(Dihedral, DihedralFold)


@njit(cache=True, nogil=True)
def _finite_fold(table, ident, idx, atoms):
    out = np.empty(idx.shape[0], np.int64)
    for r in range(idx.shape[0]):
        x = ident
        for t in range(idx.shape[1]):
            x = table[x, atoms[idx[r, t]]]
        out[r] = x
    return out


class FiniteFold(Fold):
    def __init__(self, group, elems):
        super().__init__(group, elems)
        self.t = np.ascontiguousarray(group._t, dtype=np.int64)
        self.atoms = np.array(elems, dtype=np.int64)
        self.inv = np.array(group._inverses, dtype=np.int64)
        self.len = np.array([group.length(g) for g in range(group.order)], dtype=float)

    def fold(self, idx):
        return _finite_fold(self.t, self.group.identity, np.ascontiguousarray(idx), self.atoms)

    def dist(self, a, b):
        return self.len[self.t[self.inv[a], b]]

    def length(self, a):
        return self.len[a]

    def elements(self, a):
        return [int(x) for x in a]


make_fold.register(FiniteGroup, FiniteFold)


@njit(cache=True, nogil=True)
def _free_fold(idx, words, wlen):
    rows, n = idx.shape
    cap = n * words.shape[1] + 1
    stack = np.zeros((rows, cap), np.int8)
    top = np.zeros(rows, np.int64)
    for r in range(rows):
        h = 0
        for t in range(n):
            a = idx[r, t]
            for q in range(wlen[a]):
                x = words[a, q]
                if h > 0 and stack[r, h - 1] == -x:
                    h -= 1
                else:
                    stack[r, h] = x
                    h += 1
        top[r] = h
    return stack, top


@njit(cache=True, nogil=True)
def _free_dist(sa, la, sb, lb):
    out = np.empty(la.shape[0], np.float64)
    for r in range(la.shape[0]):
        m = min(la[r], lb[r])
        c = 0
        while c < m and sa[r, c] == sb[r, c]:
            c += 1
        out[r] = la[r] + lb[r] - 2 * c
    return out


class FreeFold(Fold):
    def __init__(self, group, elems):
        super().__init__(group, elems)
        if group.rank > 127:
            raise SamplerError("batch free-group folding supports rank <= 127")
        width = max(1, max(len(w) for w in elems))
        self.words = np.zeros((len(elems), width), np.int8)
        self.wlen = np.array([len(w) for w in elems], np.int64)
        for i, w in enumerate(elems):
            self.words[i, :len(w)] = w

    def fold(self, idx):
        return _free_fold(np.ascontiguousarray(idx), self.words, self.wlen)

    def dist(self, a, b):
        return _free_dist(a[0], a[1], b[0], b[1])

    def length(self, a):
        return a[1].astype(float)

    def elements(self, a):
        s, h = a
        return [tuple(int(x) for x in s[r, :h[r]]) for r in range(len(h))]

    def event(self, name, a, b):
        if name == "first-letter":
            (sa, la), (sb, lb) = a, b
            fa = np.where(la > 0, sa[:, 0], 0)
            fb = np.where(lb > 0, sb[:, 0], 0)
            return fa == fb
        return super().event(name, a, b)


make_fold.register(FreeGroup, FreeFold)


@njit(cache=True, nogil=True)
def _lamp_fold(idx, lamp_off, lamp_val, moves, half):
    rows, n = idx.shape
    lamps = np.zeros((rows, 2 * half + 1), np.uint8)
    pos = np.zeros(rows, np.int64)
    for r in range(rows):
        p = 0
        for t in range(n):
            a = idx[r, t]
            for q in range(lamp_off[a], lamp_off[a + 1]):
                lamps[r, half + p + lamp_val[q]] ^= 1
            p += moves[a]
        pos[r] = p
    return lamps, pos


@njit(cache=True, nogil=True)
def _lamp_dist(la, pa, lb, pb, half):
    # shortest tour from pa to pb that toggles every lamp where the configurations differ
    out = np.empty(pa.shape[0], np.float64)
    for r in range(pa.shape[0]):
        lo = min(pa[r], pb[r])
        hi = max(pa[r], pb[r])
        cnt = 0
        for j in range(la.shape[1]):
            if la[r, j] != lb[r, j]:
                x = j - half
                cnt += 1
                if x < lo:
                    lo = x
                if x > hi:
                    hi = x
        left = (pa[r] - lo) + (hi - pb[r])
        right = (hi - pa[r]) + (pb[r] - lo)
        out[r] = cnt + (hi - lo) + min(left, right)
    return out


class LamplighterFold(Fold):
    def __init__(self, group, elems):
        super().__init__(group, elems)
        vals, offs = [], [0]
        for f, _ in elems:
            vals.extend(sorted(f))
            offs.append(len(vals))
        self.lamp_val = np.array(vals, np.int64)
        self.lamp_off = np.array(offs, np.int64)
        self.moves = np.array([t for _, t in elems], np.int64)
        self.reach = max(abs(int(m)) for m in self.moves)
        self.spread = max([abs(v) for v in vals] + [0])

    def _half(self, n):
        return n * self.reach + self.spread + 1

    def fold(self, idx):
        half = self._half(idx.shape[1])
        lamps, pos = _lamp_fold(np.ascontiguousarray(idx), self.lamp_off, self.lamp_val,
                                self.moves, half)
        return lamps, pos, half

    def dist(self, a, b):
        return _lamp_dist(a[0], a[1], b[0], b[1], a[2])

    def length(self, a):
        zero = np.zeros_like(a[0])
        return _lamp_dist(zero, np.zeros_like(a[1]), a[0], a[1], a[2])

    def elements(self, a):
        lamps, pos, half = a
        return [(frozenset(int(j - half) for j in np.flatnonzero(lamps[r])), int(pos[r]))
                for r in range(len(pos))]


make_fold.register(Lamplighter, LamplighterFold)


class ProductFold(Fold):
    def __init__(self, group, elems):
        super().__init__(group, elems)
        left = sorted(set(e[0] for e in elems), key=group.left.format)
        right = sorted(set(e[1] for e in elems), key=group.right.format)
        self.li = np.array([left.index(e[0]) for e in elems], np.int64)
        self.ri = np.array([right.index(e[1]) for e in elems], np.int64)
        self.lf = make_fold(group.left, left)
        self.rf = make_fold(group.right, right)

    def fold(self, idx):
        return self.lf.fold(self.li[idx]), self.rf.fold(self.ri[idx])

    def dist(self, a, b):
        return self.lf.dist(a[0], b[0]) + self.rf.dist(a[1], b[1])

    def length(self, a):
        return self.lf.length(a[0]) + self.rf.length(a[1])

    def elements(self, a):
        return list(zip(self.lf.elements(a[0]), self.rf.elements(a[1])))


make_fold.register(DirectProduct, ProductFold)


def fold_for(mu) -> Fold:
    table = AtomTable(mu)
    f = make_fold(mu.group, table.elems)
    f.table = table
    return f


# ---------------------------------------------------------------------------
def pair_statistics(mu, rho: float, n: int, reps: int, seed: int, stat: Callable) -> np.ndarray:
    """Concatenate ``stat(fold, X, Y, X')`` over all replicates in replicate order."""
    _check_rho(rho)
    if n < 0:
        raise SamplerError("n must be >= 0")
    fold = fold_for(mu)

    def block(rng, rows):
        x, y, x2 = fold.pairs(rng, n, rho, rows)
        return np.asarray(stat(fold, x, y, x2))

    return np.concatenate(map_blocks(block, reps, seed), axis=-1)


def _min_reps(reps, floor=100):
    if reps < floor:
        raise SamplerError(f"reps must be >= {floor}")


def mean_distance(mu, rho, n: int, reps: int, seed: int) -> EstimateResult:
    """``E d(X_n, Y_n^rho)``, or ``E d(X_n, X'_n)`` when ``rho == "independent"``."""
    _min_reps(reps)
    indep = rho == "independent"
    r = 1.0 if indep else float(rho)
    vals = pair_statistics(mu, r, n, reps, seed,
                           lambda f, x, y, x2: f.dist(x, x2 if indep else y))
    label = "E d(X,X')" if indep else "E d(X,Y)"
    return estimate(vals, seed, label, "steps")


def distance_ns_ratio(mu, rho: float, n: int, reps: int, seed: int) -> EstimateResult:
    """``E d(X_n, Y_n^rho) / E d(X_n, X'_n)`` on paired replicates."""
    _min_reps(reps)
    vals = pair_statistics(mu, rho, n, reps, seed,
                           lambda f, x, y, x2: np.stack([f.dist(x, y), f.dist(x, x2)]))
    return ratio_estimate(vals[0], vals[1], seed, "distance ratio",
                          numerator=float(vals[0].mean()), denominator=float(vals[1].mean()))


def tv_event_lower_bound(mu, rho: float, n: int, event, reps: int, seed: int) -> EstimateResult:
    """Conservative l1 lower bound ``2 (|pi(A) - mu^2(A)| - 2 se)``, floored at 0.

    ``event`` is a name (``always``, ``equal``, ``first-letter``, ``same-sheet``)
    or a predicate on a pair of group elements.
    """
    if reps < 2:
        raise SamplerError("reps must be >= 2")

    def stat(f, x, y, x2):
        if callable(event):
            ex = f.elements(x)
            a = np.array([bool(event(p, q)) for p, q in zip(ex, f.elements(y))])
            b = np.array([bool(event(p, q)) for p, q in zip(ex, f.elements(x2))])
        else:
            a = f.event(event, x, y)
            b = f.event(event, x, x2)
        return a.astype(float) - b.astype(float)

    diff = pair_statistics(mu, rho, n, reps, seed, stat)
    d = estimate(diff, seed)
    bound = max(0.0, 2.0 * (abs(d.mean) - 2.0 * d.stderr))
    return EstimateResult(bound, 2.0 * d.stderr, d.reps, seed, "tv event bound", "",
                          {"difference": d.mean, "difference_se": d.stderr})


def speed_estimate(mu, n: int, reps: int, seed: int) -> EstimateResult:
    """``E d(e, X_n) / n``."""
    _min_reps(reps)
    if n < 1:
        raise SamplerError("speed needs n >= 1")
    vals = pair_statistics(mu, 0.0, n, reps, seed, lambda f, x, y, x2: f.length(x))
    return estimate(vals / n, seed, "speed", "steps per step")


def endpoint_samples(mu, rho: float, n: int, reps: int, seed: int) -> list:
    """``[(X, Y), ...]`` as group elements (for histograms at small n)."""
    fold = fold_for(mu)

    def block(rng, rows):
        x, y, _ = fold.pairs(rng, n, rho, rows)
        return list(zip(fold.elements(x), fold.elements(y)))

    out = []
    for part in map_blocks(block, reps, seed):
        out.extend(part)
    return out
