"""Finitely supported probability measures on groups and on pairs of groups.

Two storage forms share one interface (``group``, ``items()``, ``mass(g)``,
``total()``, ``support_size``):

* :class:`SparseMeasure` -- a dict ``element -> mass``; works for every group.
* :class:`GridMeasure` -- a dense array over an affine encoding (lattices,
  ``D_inf``, finite groups and their products, lattice dimension <= 2).
  Produced by :func:`nth_convolution` when the group allows it.

Entropies are in bits throughout.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Hashable, Iterable, Iterator, Mapping, Sequence

import numpy as np

from . import _grid
from .groups import DirectProduct, Group, GroupError

MASS_TOL = 1e-12
DEFAULT_BUDGET = 50_000_000


class MeasureError(ValueError):
    pass


class BudgetExceeded(RuntimeError):
    """The atom budget would be exceeded; ``step`` is the last completed step."""

    def __init__(self, message, step=None, atoms=None):
        super().__init__(message)
        self.step = step
        self.atoms = atoms


# ---------------------------------------------------------------------------
class SparseMeasure:
    """Probability measure stored as ``{element: mass}``.

    Zero atoms are dropped; a total differing from 1 by more than ``1e-9`` is an
    error, smaller drift is renormalised away.
    """

    __slots__ = ("group", "atoms", "_total")

    def __init__(self, group: Group, atoms: Mapping[Hashable, float], *, validate=True):
        clean = {}
        for g, m in atoms.items():
            m = float(m)
            if not math.isfinite(m) or m < 0:
                raise MeasureError(f"invalid mass {m!r} at {g!r}")
            if m > 0:
                if validate:
                    group.validate(g)
                clean[g] = clean.get(g, 0.0) + m
        if not clean:
            raise MeasureError("measure has no atoms")
        total = math.fsum(clean.values())
        if abs(total - 1.0) > 1e-9:
            raise MeasureError(f"total mass {total!r} is not 1")
        if total != 1.0:
            clean = {g: m / total for g, m in clean.items()}
        self.group = group
        self.atoms = clean
        self._total = math.fsum(clean.values())

    @classmethod
    def from_weights(cls, group: Group, weights: Mapping[Hashable, float]) -> "SparseMeasure":
        total = math.fsum(weights.values())
        if total <= 0:
            raise MeasureError("weights must have positive total")
        return cls(group, {g: w / total for g, w in weights.items()})

    @classmethod
    def _trusted(cls, group, atoms):
        self = object.__new__(cls)
        total = math.fsum(atoms.values())
        if abs(total - 1.0) > 1e-9:
            raise MeasureError(f"total mass drifted to {total!r}")
        if total != 1.0:
            atoms = {g: m / total for g, m in atoms.items()}
        self.group = group
        self.atoms = atoms
        self._total = math.fsum(atoms.values())
        return self

    def __repr__(self):
        return f"SparseMeasure({self.group}, {len(self.atoms)} atoms)"

    def __len__(self):
        return len(self.atoms)

    @property
    def support_size(self) -> int:
        return len(self.atoms)

    def items(self) -> Iterator[tuple[Hashable, float]]:
        return iter(self.atoms.items())

    def support(self):
        return list(self.atoms)

    def mass(self, g) -> float:
        return self.atoms.get(g, 0.0)

    def total(self) -> float:
        return self._total

    def to_sparse(self) -> "SparseMeasure":
        return self


class PairMeasure(SparseMeasure):
    """Sparse measure on a direct product ``G1 x G2``."""

    __slots__ = ()

    def __init__(self, group: Group, atoms, *, validate=True):
        if not isinstance(group, DirectProduct):
            raise MeasureError("pair measures live on a direct product")
        super().__init__(group, atoms, validate=validate)

    def marginal(self, which: str = "first") -> SparseMeasure:
        return marginal(self, which)


def _sparse(group, atoms) -> SparseMeasure:
    cls = PairMeasure if isinstance(group, DirectProduct) else SparseMeasure
    return cls._trusted(group, atoms)


# ---------------------------------------------------------------------------
class GridMeasure:
    """Dense measure over an affine encoding.

    ``data`` has shape ``(sheets, *box)`` with ``len(box) == group.affine.dim``;
    ``data[s, i, j]`` is the mass of ``group.decode(s, origin + (i, j))``.
    """

    def __init__(self, group: Group, data: np.ndarray, origin: Sequence[int], *, lost=0.0):
        code = group.affine
        if code is None or code.dim > 2:
            raise MeasureError(f"{group} has no usable dense encoding")
        if data.ndim != 1 + code.dim or data.shape[0] != code.n_sheets:
            raise MeasureError("data shape does not match the encoding")
        if np.any(data < 0):
            raise MeasureError("negative mass")
        total = float(data.sum())
        if abs(total - 1.0) > 1e-9:
            raise MeasureError(f"total mass {total!r} is not 1")
        self.group = group
        self.data = data / total if total != 1.0 else data
        self.origin = tuple(int(o) for o in origin)
        self.lost = lost

    def __repr__(self):
        return f"GridMeasure({self.group}, box={self.data.shape})"

    @property
    def support_size(self) -> int:
        return int(np.count_nonzero(self.data))

    def __len__(self):
        return self.support_size

    def total(self) -> float:
        return float(self.data.sum())

    def items(self):
        nz = np.nonzero(self.data)
        vals = self.data[nz]
        for idx, m in zip(zip(*nz), vals):
            vec = tuple(int(o + i) for o, i in zip(self.origin, idx[1:]))
            yield self.group.decode(int(idx[0]), vec), float(m)

    def support(self):
        return [g for g, _ in self.items()]

    def mass(self, g) -> float:
        sheet, vec = self.group.encode(g)
        idx = tuple(v - o for v, o in zip(vec, self.origin))
        if any(i < 0 or i >= n for i, n in zip(idx, self.data.shape[1:])):
            return 0.0
        return float(self.data[(sheet,) + idx])

    def to_sparse(self) -> SparseMeasure:
        return _sparse(self.group, dict(self.items()))

    def _as3(self):
        d = self.data
        if d.ndim == 1:
            return d[:, None, None], (0, 0)
        if d.ndim == 2:
            return d[:, None, :], (0, self.origin[0])
        return d, self.origin

    @classmethod
    def _from3(cls, group, data3, origin2, lost=0.0):
        dim = group.affine.dim
        if dim == 0:
            return cls(group, data3[:, 0, 0].copy(), (), lost=lost)
        if dim == 1:
            return cls(group, data3[:, 0, :], (origin2[1],), lost=lost)
        return cls(group, data3, origin2, lost=lost)

    @classmethod
    def from_measure(cls, xi) -> "GridMeasure":
        if isinstance(xi, GridMeasure):
            return xi
        group = xi.group
        code = group.affine
        enc = [(group.encode(g), m) for g, m in xi.items()]
        dim = code.dim
        if dim:
            lo = [min(v[k] for (_, v), _ in enc) for k in range(dim)]
            hi = [max(v[k] for (_, v), _ in enc) for k in range(dim)]
        else:
            lo, hi = [], []
        data = np.zeros((code.n_sheets,) + tuple(h - l + 1 for l, h in zip(lo, hi)))
        for (s, v), m in enc:
            data[(s,) + tuple(x - l for x, l in zip(v, lo))] += m
        return cls(group, data, lo)


def dense_capable(group: Group) -> bool:
    code = group.affine
    return code is not None and code.dim <= 2


# ---------------------------------------------------------------------------
def dirac(group: Group, g=None) -> SparseMeasure:
    return _sparse(group, {group.identity if g is None else g: 1.0})


def uniform(group: Group, elements: Iterable | None = None) -> SparseMeasure:
    elems = list(group.elements() if elements is None else elements)
    if not elems:
        raise MeasureError("uniform measure on an empty set")
    return SparseMeasure(group, {g: 1.0 / len(elems) for g in elems})


def simple_measure(group: Group) -> SparseMeasure:
    """Uniform on the symmetric generating set."""
    return uniform(group, group.symmetric_generators())


def lazy_measure(group: Group) -> SparseMeasure:
    """Uniform on the identity and the symmetric generating set."""
    return uniform(group, [group.identity] + group.symmetric_generators())


def product_measure(a, b):
    """``a x b`` on the direct product of their groups."""
    group = DirectProduct(a.group, b.group)
    if isinstance(a, GridMeasure) and isinstance(b, GridMeasure) and dense_capable(group):
        da, db = a.data, b.data
        outer = np.multiply.outer(da, db)  # (S1, *v1, S2, *v2)
        outer = np.moveaxis(outer, da.ndim, 1)  # (S1, S2, *v1, *v2)
        data = outer.reshape((da.shape[0] * db.shape[0],) + outer.shape[2:])
        return GridMeasure(group, data, a.origin + b.origin, lost=a.lost + b.lost)
    atoms = {(x, y): p * q for x, p in a.items() for y, q in b.items()}
    return _sparse(group, atoms)


def convolve(a, b, budget: int = DEFAULT_BUDGET):
    """``(a*b)(z) = sum_{xy=z} a(x) b(y)``.

    A dense left factor with a sparse right factor uses the grid kernel.
    """
    if a.group != b.group:
        raise GroupError(f"cannot convolve measures on {a.group} and {b.group}")
    if isinstance(a, GridMeasure) and not isinstance(b, GridMeasure):
        walk = _walk_from(a)
        tr = _grid.Transitions(a.group, list(b.items()))
        walk.step(tr)
        data, origin = walk.snapshot()
        return GridMeasure._from3(a.group, data, origin, lost=a.lost + walk.lost)
    la, lb = a.support_size, b.support_size
    if la * lb > budget:
        raise BudgetExceeded(f"{la} x {lb} products exceed the atom budget {budget}",
                             atoms=la * lb)
    mul = a.group.mul
    out: dict = {}
    for x, p in a.items():
        for y, q in b.items():
            z = mul(x, y)
            out[z] = out.get(z, 0.0) + p * q
    return _sparse(a.group, out)


def noise_step_measure(mu, rho: float) -> PairMeasure:
    """One-step pair law ``(1 - rho) mu_diag + rho mu x mu``."""
    if not 0.0 <= rho <= 1.0:
        raise MeasureError(f"rho={rho} outside [0, 1]")
    group = DirectProduct(mu.group, mu.group)
    atoms = {}
    items = list(mu.items())
    for x, p in items:
        for y, q in items:
            m = rho * p * q
            if x == y:
                m += (1.0 - rho) * p
            if m > 0:
                atoms[(x, y)] = m
    return PairMeasure._trusted(group, atoms)


def _walk_from(xi: GridMeasure):
    data3, origin2 = xi._as3()
    live = data3.reshape(data3.shape[0], -1).any(axis=1)
    return _grid.GridWalk(data3.shape[0], xi.group.affine.dim, data3, origin2, live)


def convolution_powers(step, checkpoints: Iterable[int], budget: int = DEFAULT_BUDGET,
                       dense: bool | None = None):
    """Yield ``(n, step^{*n})`` for each checkpoint, iterating ``pi_n = pi_{n-1} * step``.

    ``dense=None`` picks the grid engine whenever the group has an encoding.
    """
    ns = sorted(set(int(n) for n in checkpoints))
    if not ns:
        return
    if ns[0] < 0:
        raise MeasureError("n must be >= 0")
    group = step.group
    use_dense = dense_capable(group) if dense is None else dense
    if use_dense and not dense_capable(group):
        raise MeasureError(f"{group} has no dense encoding")
    step_atoms = list(step.items())
    if use_dense:
        start = GridMeasure.from_measure(dirac(group))
        walk = _walk_from(start)
        tr = _grid.Transitions(group, step_atoms)
        t = 0
        for n in ns:
            while t < n:
                walk.step(tr)
                t += 1
                if walk.cells() > budget:
                    raise BudgetExceeded(
                        f"dense box of {walk.cells()} cells exceeds the atom budget {budget} "
                        f"at step {t}", step=t - 1, atoms=walk.cells())
            data, origin = walk.snapshot()
            yield n, GridMeasure._from3(group, data, origin, lost=walk.lost)
        return
    cur = dirac(group)
    t = 0
    small = SparseMeasure._trusted(group, dict(step_atoms))
    for n in ns:
        while t < n:
            try:
                cur = convolve(cur, small, budget)
            except BudgetExceeded as exc:
                raise BudgetExceeded(f"{exc} at step {t + 1}", step=t, atoms=exc.atoms) from None
            t += 1
        yield n, cur


def nth_convolution(step, n: int, budget: int = DEFAULT_BUDGET, dense: bool | None = None):
    """``step^{*n}``; ``n = 0`` gives the Dirac mass at the identity."""
    if n < 0:
        raise MeasureError("n must be >= 0")
    for _, m in convolution_powers(step, [n], budget, dense):
        return m


# ---------------------------------------------------------------------------
def _masses(xi) -> np.ndarray:
    if isinstance(xi, GridMeasure):
        d = xi.data
        return d[d > 0]
    return np.fromiter((m for _, m in xi.items()), dtype=float)


def entropy(xi) -> float:
    """Shannon entropy in bits."""
    m = _masses(xi)
    m = m[m > 0]
    return float(-(m * np.log2(m)).sum())


def _aligned(a: GridMeasure, b: GridMeasure):
    dim = a.data.ndim - 1
    lo = [min(a.origin[k], b.origin[k]) for k in range(dim)]
    hi = [max(a.origin[k] + a.data.shape[k + 1], b.origin[k] + b.data.shape[k + 1])
          for k in range(dim)]
    shape = (a.data.shape[0],) + tuple(h - l for l, h in zip(lo, hi))
    out = []
    for m in (a, b):
        arr = np.zeros(shape)
        sl = (slice(None),) + tuple(slice(o - l, o - l + n)
                                    for o, l, n in zip(m.origin, lo, m.data.shape[1:]))
        arr[sl] = m.data
        out.append(arr)
    return out


def l1_distance(a, b) -> float:
    """``sum_x |a(x) - b(x)|`` in ``[0, 2]``."""
    if a.group != b.group:
        raise GroupError("measures on different groups")
    if isinstance(a, GridMeasure) and isinstance(b, GridMeasure):
        x, y = _aligned(a, b)
        return float(np.abs(x - y).sum())
    if isinstance(a, GridMeasure) and dense_capable(b.group):
        return l1_distance(a, GridMeasure.from_measure(b))
    if isinstance(b, GridMeasure) and dense_capable(a.group):
        return l1_distance(GridMeasure.from_measure(a), b)
    a, b = a.to_sparse(), b.to_sparse()
    keys = set(a.atoms) | set(b.atoms)
    return math.fsum(abs(a.mass(k) - b.mass(k)) for k in keys)


def overlap(a, b) -> float:
    """``sum_x min(a(x), b(x))``."""
    if isinstance(a, GridMeasure) and isinstance(b, GridMeasure):
        x, y = _aligned(a, b)
        return float(np.minimum(x, y).sum())
    a, b = a.to_sparse(), b.to_sparse()
    small, big = (a, b) if a.support_size <= b.support_size else (b, a)
    return math.fsum(min(m, big.mass(g)) for g, m in small.items())


def marginal(pi, which: str = "first"):
    """Projection of a measure on ``G1 x G2`` to one factor."""
    group = pi.group
    if not isinstance(group, DirectProduct):
        raise MeasureError("marginal needs a measure on a direct product")
    if which not in ("first", "second"):
        raise MeasureError("which must be 'first' or 'second'")
    if isinstance(pi, GridMeasure):
        g1, g2 = group.left, group.right
        s1, s2 = g1.affine.n_sheets, g2.affine.n_sheets
        d1, d2 = g1.affine.dim, g2.affine.dim
        box = pi.data.shape[1:]
        arr = pi.data.reshape((s1, s2) + box)
        if which == "first":
            out = arr.sum(axis=(1,) + tuple(range(2 + d1, 2 + d1 + d2)))
            return GridMeasure(g1, out, pi.origin[:d1], lost=pi.lost)
        out = arr.sum(axis=(0,) + tuple(range(2, 2 + d1)))
        return GridMeasure(g2, out, pi.origin[d1:], lost=pi.lost)
    k = 0 if which == "first" else 1
    target = group.left if k == 0 else group.right
    out: dict = {}
    for g, m in pi.items():
        out[g[k]] = out.get(g[k], 0.0) + m
    return _sparse(target, out)


def pushforward(xi, f: Callable, target: Group) -> SparseMeasure:
    out: dict = {}
    for g, m in xi.items():
        h = f(g)
        out[h] = out.get(h, 0.0) + m
    return _sparse(target, out)


def conditional_entropy_exact(mu, rho: float, n: int, budget: int = DEFAULT_BUDGET,
                              dense: bool | None = None) -> float:
    """``H(Y_n | X_n) = H(pi_n^rho) - H(mu_n)`` in bits."""
    pi_n = nth_convolution(noise_step_measure(mu, rho), n, budget, dense)
    mu_n = nth_convolution(mu, n, budget, dense)
    return entropy(pi_n) - entropy(mu_n)


@dataclass(frozen=True)
class HomogeneityBound:
    """Greedy value of the homogeneity supremum and the one-atom gap: the true
    supremum lies in ``[value, value + gap]``."""

    value: float
    gap: float


def _greedy(masses: np.ndarray, gains: np.ndarray, eps: float, norm: float) -> HomogeneityBound:
    order = np.lexsort((masses, -gains))
    m = masses[order]
    c = m * gains[order]
    cum = np.cumsum(m)
    k = int(np.searchsorted(cum, eps * (1 + 1e-12) + 1e-15, side="right"))
    value = float(c[:k].sum()) / norm
    gap = float(c[k:].max()) / norm if k < len(c) else 0.0
    return HomogeneityBound(min(value, 1.0), gap)


def entropy_homogeneity(xi, eps: float) -> HomogeneityBound:
    """Share of the entropy carried by the least likely atoms of total mass <= eps."""
    if not 0.0 <= eps <= 1.0:
        raise MeasureError("eps must lie in [0, 1]")
    m = _masses(xi)
    info = -np.log2(m)
    h = float((m * info).sum())
    if h <= 0:
        raise MeasureError("zero-entropy measure")
    return _greedy(m, info, eps, h)


def spread_homogeneity(xi, eps: float) -> HomogeneityBound:
    """Share of the mean pair distance carried by the farthest pairs of mass <= eps."""
    if not 0.0 <= eps <= 1.0:
        raise MeasureError("eps must lie in [0, 1]")
    group = xi.group
    if not isinstance(group, DirectProduct):
        raise MeasureError("spread homogeneity needs a pair measure")
    dist = group.left.distance
    pairs = list(xi.items())
    m = np.array([p for _, p in pairs])
    d = np.array([dist(x, y) for (x, y), _ in pairs], dtype=float)
    mean = float((m * d).sum())
    if mean <= 0:
        raise MeasureError("zero-spread measure")
    return _greedy(m, d, eps, mean)


def asymptotic_entropy_profile(mu, n_list: Iterable[int], budget: int = DEFAULT_BUDGET,
                               dense: bool | None = None) -> list[tuple[int, float]]:
    """``[(n, H(mu_n)/n), ...]``."""
    out = []
    for n, mu_n in convolution_powers(mu, n_list, budget, dense):
        if n == 0:
            raise MeasureError("profile needs n >= 1")
        out.append((n, entropy(mu_n) / n))
    return out


# ---------------------------------------------------------------------------
def write_atoms(xi, path) -> None:
    """One line per atom: canonical element, TAB, mass with 17 significant digits."""
    group = xi.group
    rows = sorted((group.format(g), m) for g, m in xi.items())
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for enc, m in rows:
            fh.write(f"{enc}\t{m:.16e}\n")


def read_atoms(group: Group, path) -> SparseMeasure:
    atoms = {}
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            try:
                enc, mass = line.rsplit("\t", 1) if "\t" in line else line.rsplit(None, 1)
                g = group.parse(enc)
                atoms[g] = atoms.get(g, 0.0) + float(mass)
            except (ValueError, GroupError) as exc:
                raise MeasureError(f"{path}:{lineno}: {exc}") from None
    return SparseMeasure(group, atoms)
