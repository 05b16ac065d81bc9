"""Lamplighter range statistics and the Grigorchuk inverted orbit.

Lamplighter: the switch-walk-switch walk projects to a simple walk on Z; a lamp
is refreshed when one of its visit times carries a refreshed increment. Visit
time ``t >= 1`` is tied to increment ``t`` and time 0 to increment 1, so a site
with local time ``L`` is refreshed with probability ``1 - (1 - rho)^L``.

Grigorchuk group: boundary points are eventually-1 rays. In the kernels a ray
is a ``uint64`` with bit ``i`` set iff letter ``i`` is 0, so ``1^inf`` is 0.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np
from numba import njit

from .groups import Lamplighter
from .measures import convolve, uniform
from .sampler import BLOCK, EstimateResult, block_rng, estimate, map_blocks, ratio_estimate

STREAM_LAMP = 1
STREAM_GRIG = 2
LETTERS = "ebcd"  # directed factor h, uniform
ROOTED = "ea"  # rooted factor sigma, uniform


class WreathError(ValueError):
    pass


def sws_measure():
    """Switch-walk-switch: ``unif{e, switch} * unif{move, move^-1} * unif{e, switch}``."""
    g = Lamplighter()
    switch = g.generators["switch"]
    move = g.generators["move"]
    mu1 = uniform(g, [g.identity, switch])
    mu2 = uniform(g, [move, g.inverse(move)])
    return convolve(convolve(mu1, mu2), mu1)


# ---------------------------------------------------------------------------
@dataclass
class LamplighterTrace:
    positions: np.ndarray  # x_0 .. x_n of the projected walk
    mask: np.ndarray  # refresh mask over increments 1..n
    loc: dict  # site -> list of visit times
    range: set
    refreshed: set

    @property
    def n(self) -> int:
        return len(self.positions) - 1


def _increment_of_time(t: int) -> int:
    """0-based increment index tied to visit time ``t``."""
    return max(t, 1) - 1


def refreshed_sites(positions: Sequence[int], mask: Sequence[bool]) -> set:
    """Sites with at least one visit time whose increment was refreshed."""
    return {int(x) for t, x in enumerate(positions) if len(mask) and mask[_increment_of_time(t)]}


def _draw_lamp(rng, n, rows):
    steps = rng.integers(0, 2, size=(BLOCK, n), dtype=np.int8)
    u = rng.random((BLOCK, n))
    return steps[:rows], u[:rows]


def _positions(steps):
    pos = np.zeros((steps.shape[0], steps.shape[1] + 1), dtype=np.int64)
    np.cumsum(2 * steps.astype(np.int64) - 1, axis=1, out=pos[:, 1:])
    return pos


def lamplighter_trace(rho: float, n: int, seed: int, replicate: int = 0) -> LamplighterTrace:
    """Replicate ``replicate`` of the stream behind :func:`lamplighter_range_stats`."""
    _check_rho(rho)
    steps, u = _draw_lamp(block_rng(seed, replicate // BLOCK, STREAM_LAMP), n, BLOCK)
    row = replicate % BLOCK
    pos = _positions(steps[row:row + 1])[0]
    mask = u[row] < rho
    loc: dict = {}
    for t, x in enumerate(pos):
        loc.setdefault(int(x), []).append(t)
    return LamplighterTrace(pos, mask, loc, set(loc), refreshed_sites(pos, mask))


@njit(cache=True, nogil=True)
def _range_counts(pos, u, rhos):
    rows, m = pos.shape
    n = m - 1
    nr = rhos.shape[0]
    rng_size = np.empty(rows, np.float64)
    ref = np.zeros((nr, rows), np.float64)
    stamp = np.zeros(2 * n + 3, np.int64)
    tag = 0
    for r in range(rows):
        lo = 0
        hi = 0
        for t in range(m):
            x = pos[r, t]
            lo = min(lo, x)
            hi = max(hi, x)
        rng_size[r] = hi - lo + 1
        if n == 0:
            continue
        for k in range(nr):
            tag += 1
            c = 0
            for t in range(m):
                i = t - 1 if t > 0 else 0
                if u[r, i] < rhos[k]:
                    x = pos[r, t] + n + 1
                    if stamp[x] != tag:
                        stamp[x] = tag
                        c += 1
            ref[k, r] = c
    return rng_size, ref


def _range_samples(rhos, n, reps, seed):
    rhos = np.asarray(rhos, dtype=float)
    for r in rhos:
        _check_rho(r)
    if n < 0:
        raise WreathError("n must be >= 0")

    def block(rng, rows):
        steps, u = _draw_lamp(rng, n, rows)
        if n == 0:
            u = np.ones((rows, 1))
        size, ref = _range_counts(_positions(steps), np.ascontiguousarray(u), rhos)
        return np.vstack([size[None, :], ref])

    return np.concatenate(map_blocks(block, reps, seed, STREAM_LAMP), axis=1)


def lamplighter_range_stats(rho, n: int, reps: int, seed: int):
    """``(E|R_n|, E|R_n^ref|)``; a list of such pairs when ``rho`` is a sequence."""
    if reps < 100:
        raise WreathError("reps must be >= 100")
    many = isinstance(rho, (list, tuple, np.ndarray))
    rhos = list(rho) if many else [rho]
    s = _range_samples(rhos, n, reps, seed)
    size = estimate(s[0], seed, "E|R_n|", "sites")
    out = [(size, estimate(s[1 + k], seed, "E|R_n^ref|", "sites", rho=r))
           for k, r in enumerate(rhos)]
    return out if many else out[0]


def entropy_ns_ratio_lamplighter(rho: float, n: int, reps: int, seed: int) -> EstimateResult:
    """``E|R_n^ref| / E|R_n|`` with the relative size ``log2(n) / E|R_n|`` of the
    additive entropy error reported as ``extra["correction"]``."""
    if reps < 100:
        raise WreathError("reps must be >= 100")
    s = _range_samples([rho], n, reps, seed)
    res = ratio_estimate(s[1], s[0], seed, "E|R^ref|/E|R|")
    mean_range = float(s[0].mean())
    res.extra.update(range=mean_range, refreshed=float(s[1].mean()),
                     correction=math.log2(max(n, 2)) / mean_range)
    return res


def _check_rho(rho):
    if not 0.0 <= rho <= 1.0:
        raise WreathError(f"rho={rho} outside [0, 1]")


# ---------------------------------------------------------------------------
@dataclass(frozen=True)
class BoundaryPoint:
    """Ray ``prefix + 1^inf`` of the binary tree; trailing 1s are trimmed."""

    prefix: tuple = ()

    def __post_init__(self):
        p = tuple(int(x) for x in self.prefix)
        if any(x not in (0, 1) for x in p):
            raise WreathError("letters must be 0 or 1")
        while p and p[-1] == 1:
            p = p[:-1]
        object.__setattr__(self, "prefix", p)

    def __str__(self):
        return "".join(map(str, self.prefix)) + "1^inf"

    def letter(self, i: int) -> int:
        return self.prefix[i] if i < len(self.prefix) else 1

    def to_mask(self) -> int:
        m = 0
        for i, x in enumerate(self.prefix):
            if x == 0:
                m |= 1 << i
        return m

    @classmethod
    def from_mask(cls, m: int) -> "BoundaryPoint":
        bits = []
        i = 0
        while m >> i:
            bits.append(0 if (m >> i) & 1 else 1)
            i += 1
        return cls(tuple(bits))


ORIGIN = BoundaryPoint()

# sections of b, c, d: (state after reading 0, state after reading 1)
_SECTIONS = {"b": ("a", "c"), "c": ("a", "d"), "d": ("e", "b")}


def grig_apply(p: BoundaryPoint, g: str) -> BoundaryPoint:
    """Image of ``p`` under a generator of the first Grigorchuk group.

    ``a`` swaps the first letter; ``b = (a, c)``, ``c = (a, d)``, ``d = (e, b)``.
    A directed generator reading the all-1 tail acts trivially from there on.
    """
    if g not in ("e", "a", "b", "c", "d"):
        raise WreathError(f"unknown generator {g!r}")
    bits = list(p.prefix)
    state = g
    i = 0
    while state != "e":
        if state == "a":
            if i < len(bits):
                bits[i] ^= 1
            else:
                bits.extend([1] * (i - len(bits)) + [0])
            break
        if i >= len(bits):
            break
        state = _SECTIONS[state][bits[i]]
        i += 1
    return BoundaryPoint(tuple(bits))


def grig_act(p: BoundaryPoint, word: Iterable[str]) -> BoundaryPoint:
    """Right action: ``p . (g1 g2 ...) = (p . g1) . g2 ...``."""
    for g in word:
        p = grig_apply(p, g)
    return p


def inverted_orbit(word: Sequence[str], mask: Sequence[bool] | None = None):
    """``O(w) = {o} u {o . w_t ... w_n}`` for ``o = 1^inf``.

    With a mask, also return the points ``o . w_t ... w_n`` with ``mask[t]`` set
    (points receiving a refreshed lamp write); otherwise the second value is None.
    """
    if mask is not None and len(mask) != len(word):
        raise WreathError("mask and word lengths differ")
    orbit = {ORIGIN}
    hit = set() if mask is not None else None
    for t in range(len(word)):
        q = grig_act(ORIGIN, word[t:])
        orbit.add(q)
        if mask is not None and mask[t]:
            hit.add(q)
    return orbit, hit


@njit(cache=True, inline="always")
def _act_directed(x, state):
    # state 0, 1, 2 = b, c, d; walk the leading 1-letters, then a or identity
    if x == 0:
        return x
    i = 0
    while (x >> np.uint64(i)) & np.uint64(1) == 0:
        i += 1
    if (state + i) % 3 != 2:
        x ^= np.uint64(1) << np.uint64(i + 1)
    return x


@njit(cache=True, nogil=True)
def _orbit_counts(h, sig, u, rhos):
    """Per replicate |O| and |O^ref| (one per rho) for increments ``h_t sigma_t``."""
    rows, n = h.shape
    nr = rhos.shape[0]
    size = np.empty(rows, np.float64)
    ref = np.zeros((nr, rows), np.float64)
    overflow = False
    P = np.zeros(n, np.uint64)
    buf = np.zeros(n + 1, np.uint64)
    top = np.uint64(1) << np.uint64(62)
    for r in range(rows):
        for t in range(n):
            P[t] = 0
            ht = h[r, t]
            st = sig[r, t]
            for j in range(t + 1):
                x = P[j]
                if ht > 0:
                    x = _act_directed(x, ht - 1)
                if st == 1:
                    x ^= np.uint64(1)
                if x >= top:
                    overflow = True
                P[j] = x
        for j in range(n):
            buf[j] = P[j]
        buf[n] = 0
        s = np.sort(buf)
        c = 1
        for j in range(1, n + 1):
            if s[j] != s[j - 1]:
                c += 1
        size[r] = c
        for k in range(nr):
            m = 0
            for j in range(n):
                if u[r, j] < rhos[k]:
                    buf[m] = P[j]
                    m += 1
            if m:
                s = np.sort(buf[:m])
                c = 1
                for j in range(1, m):
                    if s[j] != s[j - 1]:
                        c += 1
                ref[k, r] = c
    return size, ref, overflow


def _draw_grig(rng, n, rows):
    h = rng.integers(0, 4, size=(BLOCK, n), dtype=np.int64)
    sig = rng.integers(0, 2, size=(BLOCK, n), dtype=np.int64)
    u = rng.random((BLOCK, n))
    return h[:rows], sig[:rows], u[:rows]


def grigorchuk_increments(n: int, seed: int, replicate: int = 0):
    """``(word, mask_uniforms)`` of one replicate: the letter word
    ``h_1 sigma_1 ... h_n sigma_n`` and the refresh uniforms of the increments."""
    h, sig, u = _draw_grig(block_rng(seed, replicate // BLOCK, STREAM_GRIG), n, BLOCK)
    row = replicate % BLOCK
    word = []
    for t in range(n):
        word += [LETTERS[h[row, t]], ROOTED[sig[row, t]]]
    return word, u[row]


@dataclass(frozen=True)
class OrbitStats:
    n: int
    rho: float
    mean_orbit: float
    se_orbit: float
    mean_ref: float
    se_ref: float
    reps: int
    seed: int
    h_lambda: float = 1.0

    @property
    def bound(self) -> float:
        """Entropy lower bound ``rho * H(mu_Lambda) * E|O|`` in bits."""
        return lemma_entropy_lower_bound(self.rho, self.h_lambda, self.mean_orbit)


def grigorchuk_orbit_stats(rhos, n: int, reps: int, seed: int) -> list[OrbitStats]:
    """Inverted-orbit statistics of the switch-walk walk on ``Z/2 wr_S G``.

    Increments are ``lambda h sigma`` with ``lambda`` uniform in Z/2 (1 bit),
    ``h`` uniform in ``{e, b, c, d}`` and ``sigma`` uniform in ``{e, a}``; the
    lamp of increment ``t`` lands at ``o . h_t sigma_t ... h_n sigma_n``.
    All ``rhos`` share replicates, so their refreshed sets are nested.
    """
    rhos = [float(r) for r in rhos]
    for r in rhos:
        _check_rho(r)
    if n < 0:
        raise WreathError("n must be >= 0")
    if reps < 2:
        raise WreathError("reps must be >= 2")
    rv = np.array(rhos)

    def block(rng, rows):
        h, sig, u = _draw_grig(rng, n, rows)
        size, ref, overflow = _orbit_counts(h, sig, u, rv)
        if overflow:
            raise WreathError("orbit point deeper than 62 levels")
        return np.vstack([size[None, :], ref])

    s = np.concatenate(map_blocks(block, reps, seed, STREAM_GRIG), axis=1)
    size = estimate(s[0], seed)
    out = []
    for k, r in enumerate(rhos):
        ref = estimate(s[1 + k], seed)
        out.append(OrbitStats(n, r, size.mean, size.stderr, ref.mean, ref.stderr, reps, seed))
    return out


def lemma_entropy_lower_bound(rho: float, h_lambda: float, mean_orbit: float) -> float:
    """``rho * H(mu_Lambda) * E|O(X_n)|`` (bits)."""
    if not 0.0 <= rho <= 1.0 or h_lambda < 0 or mean_orbit < 0:
        raise WreathError("inputs must be non-negative with rho <= 1")
    return rho * h_lambda * mean_orbit


@dataclass(frozen=True)
class RefreshRecursion:
    rho1: float
    steps: int  # iterations of the map needed to reach >= 1/2
    path: tuple


def refresh_map(rho: float, d0: int) -> float:
    return 1.0 - (1.0 - rho) / (1.0 + rho / (d0 - 1))


def refresh_recursion(rho: float, d0: int, max_steps: int = 10**6) -> RefreshRecursion:
    """Refresh parameter one level down, and how many levels reach ``>= 1/2``."""
    if not 0.0 < rho < 1.0:
        raise WreathError(f"rho={rho} must lie in (0, 1)")
    if d0 < 2:
        raise WreathError("d0 must be >= 2")
    path = [rho]
    r = rho
    while r < 0.5:
        if len(path) > max_steps:
            raise WreathError("refresh recursion did not reach 1/2")
        r = refresh_map(r, d0)
        path.append(r)
    return RefreshRecursion(refresh_map(rho, d0), len(path) - 1, tuple(path))
