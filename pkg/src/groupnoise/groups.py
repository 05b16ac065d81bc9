"""Normal-form arithmetic and word metrics for the supported groups.

Elements are plain hashable normal forms; the group object interprets them:

=================  ===========================================================
group              normal form
=================  ===========================================================
``Lattice(d)``     tuple of ``d`` ints
``FiniteGroup``    int index into the multiplication table
``Dihedral()``     ``(k, eps)``: the isometry ``x -> eps*x + k`` of the line
``Lamplighter()``  ``(frozenset of lit lamps, lighter position)``
``FreeGroup(r)``   reduced tuple of nonzero ints, ``+i``/``-i`` for ``x_i^{+-1}``
``DirectProduct``  ``(g1, g2)``
=================  ===========================================================

Groups whose right multiplication is a translation on an integer grid, up to a
finite "sheet" permutation, also expose an :class:`AffineCode`; the dense
convolution engine relies on it.
"""

from __future__ import annotations

import json
from collections import deque
from dataclasses import dataclass, field
from functools import cached_property
from typing import Hashable, Iterable, Sequence

import numpy as np

INT64_MAX = 2**63 - 1


class GroupError(ValueError):
    """Invalid element, invalid group data, or elements from different groups."""


def _checked(v: int) -> int:
    if not -INT64_MAX - 1 <= v <= INT64_MAX:
        raise OverflowError(f"coordinate {v} leaves the 64-bit range")
    return v


@dataclass(frozen=True)
class AffineCode:
    """Encoding ``g <-> (sheet, vec)`` in which right multiplication by a fixed
    element ``s`` maps ``(sheet, vec)`` to ``(sheet', vec + shift)`` with
    ``sheet'`` and ``shift`` depending only on ``(sheet, s)``."""

    n_sheets: int
    dim: int


class Group:
    """Base class; subclasses are frozen dataclasses so equality is structural."""

    name = "group"

    # -- arithmetic -----------------------------------------------------
    @property
    def identity(self) -> Hashable:
        raise NotImplementedError

    def mul(self, a, b):
        raise NotImplementedError

    def inverse(self, a):
        raise NotImplementedError

    def validate(self, a) -> None:
        """Raise :class:`GroupError` unless ``a`` is a normal form of this group."""
        raise NotImplementedError

    def power(self, a, k: int):
        if k < 0:
            a, k = self.inverse(a), -k
        out = self.identity
        for _ in range(k):
            out = self.mul(out, a)
        return out

    def product(self, word: Iterable) -> Hashable:
        out = self.identity
        for s in word:
            out = self.mul(out, s)
        return out

    # -- generators and metric -----------------------------------------
    @property
    def generators(self) -> dict[str, Hashable]:
        raise NotImplementedError

    def symmetric_generators(self) -> list:
        """Generators together with their inverses, without duplicates or identity."""
        out = []
        for g in self.generators.values():
            for h in (g, self.inverse(g)):
                if h != self.identity and h not in out:
                    out.append(h)
        return out

    def length(self, g) -> int:
        raise NotImplementedError

    def distance(self, a, b) -> int:
        """Left-invariant word distance ``|a^{-1} b|``."""
        return self.length(self.mul(self.inverse(a), b))

    # -- text encoding --------------------------------------------------
    def to_json(self, g):
        raise NotImplementedError

    def from_json(self, obj):
        raise NotImplementedError

    def format(self, g) -> str:
        return json.dumps(self.to_json(g), separators=(",", ":"))

    def parse(self, text: str):
        g = self.from_json(json.loads(text))
        self.validate(g)
        return g

    # -- dense encoding (optional) -------------------------------------
    affine: AffineCode | None = None

    def encode(self, g) -> tuple[int, tuple[int, ...]]:
        raise GroupError(f"{self} has no affine encoding")

    def decode(self, sheet: int, vec: Sequence[int]):
        raise GroupError(f"{self} has no affine encoding")

    def right_shift(self, sheet: int, s) -> tuple[int, tuple[int, ...]]:
        raise GroupError(f"{self} has no affine encoding")

    @property
    def order(self) -> int | None:
        return None

    def elements(self) -> list:
        raise GroupError(f"{self} is infinite")


# ---------------------------------------------------------------------------
@dataclass(frozen=True)
class Lattice(Group):
    d: int = 1

    def __post_init__(self):
        if self.d < 1:
            raise GroupError("lattice dimension must be >= 1")

    def __str__(self):
        return "Z" if self.d == 1 else f"Z^{self.d}"

    @property
    def identity(self):
        return (0,) * self.d

    def mul(self, a, b):
        return tuple(_checked(x + y) for x, y in zip(a, b))

    def inverse(self, a):
        return tuple(-x for x in a)

    def validate(self, a):
        if not (isinstance(a, tuple) and len(a) == self.d
                and all(isinstance(x, (int, np.integer)) for x in a)):
            raise GroupError(f"{a!r} is not an element of {self}")

    @property
    def generators(self):
        names = "xyzw"
        out = {}
        for i in range(self.d):
            e = [0] * self.d
            e[i] = 1
            out[names[i] if self.d <= 4 else f"e{i + 1}"] = tuple(e)
        return out

    def length(self, g):
        return sum(abs(x) for x in g)

    def to_json(self, g):
        return list(g)

    def from_json(self, obj):
        return tuple(int(x) for x in obj)

    @property
    def affine(self):
        return AffineCode(1, self.d)

    def encode(self, g):
        return 0, tuple(g)

    def decode(self, sheet, vec):
        return tuple(int(x) for x in vec)

    def right_shift(self, sheet, s):
        return 0, tuple(s)


# ---------------------------------------------------------------------------
@dataclass(frozen=True, eq=False)
class FiniteGroup(Group):
    """Group given by an explicit multiplication table ``table[a][b] = a*b``.

    ``gens`` lists generator indices; the word metric uses them and their
    inverses. Defaults to every non-identity element.
    """

    table: tuple[tuple[int, ...], ...]
    gens: tuple[int, ...] | None = None
    labels: tuple[str, ...] | None = None
    title: str = ""

    def __post_init__(self):
        t = np.asarray(self.table, dtype=np.int64)
        m = t.shape[0]
        if t.ndim != 2 or t.shape != (m, m) or m < 1:
            raise GroupError("multiplication table must be square")
        if t.min() < 0 or t.max() >= m:
            raise GroupError("table entries out of range")
        rng = np.arange(m)
        for row in t:
            if not np.array_equal(np.sort(row), rng):
                raise GroupError("table rows are not permutations (not a Latin square)")
        for col in t.T:
            if not np.array_equal(np.sort(col), rng):
                raise GroupError("table columns are not permutations (not a Latin square)")
        ids = [e for e in range(m) if np.array_equal(t[e], rng) and np.array_equal(t[:, e], rng)]
        if not ids:
            raise GroupError("table has no identity row/column")
        # associativity: (ab)c == a(bc) for all triples
        left = t[t[:, :, None], rng[None, None, :]]
        right = t[rng[:, None, None], t[None, :, :]]
        if not np.array_equal(left, right):
            raise GroupError("table is not associative")
        object.__setattr__(self, "_id", int(ids[0]))
        object.__setattr__(self, "_t", t)
        gens = self.gens
        if gens is None:
            gens = tuple(g for g in range(m) if g != ids[0])
        if any(not 0 <= g < m for g in gens):
            raise GroupError("generator index out of range")
        object.__setattr__(self, "gens", tuple(int(g) for g in gens))

    def __eq__(self, other):
        return (isinstance(other, FiniteGroup) and self.table == other.table
                and self.gens == other.gens)

    def __hash__(self):
        return hash((self.table, self.gens))

    def __str__(self):
        return self.title or f"Finite({self.order})"

    @classmethod
    def cyclic(cls, m: int, gens: Sequence[int] = (1,)) -> "FiniteGroup":
        if m < 1:
            raise GroupError("cyclic order must be >= 1")
        table = tuple(tuple((a + b) % m for b in range(m)) for a in range(m))
        gens = tuple(g % m for g in gens) if m > 1 else ()
        return cls(table, gens=gens, title=f"Z/{m}")

    @classmethod
    def from_file(cls, path, gens: Sequence[int] | None = None) -> "FiniteGroup":
        """Read a table file: the order ``m`` on the first line, then ``m`` rows."""
        with open(path, encoding="utf-8") as fh:
            lines = [ln.split() for ln in fh if ln.strip() and not ln.lstrip().startswith("#")]
        if not lines:
            raise GroupError(f"{path}: empty table file")
        try:
            m = int(lines[0][0])
            rows = tuple(tuple(int(x) for x in ln) for ln in lines[1:])
        except ValueError as exc:
            raise GroupError(f"{path}: {exc}") from None
        if len(rows) != m or any(len(r) != m for r in rows):
            raise GroupError(f"{path}: expected {m} rows of {m} entries")
        return cls(rows, gens=tuple(gens) if gens is not None else None, title=f"table:{path}")

    @property
    def order(self):
        return len(self.table)

    def elements(self):
        return list(range(self.order))

    @property
    def identity(self):
        return self._id

    def mul(self, a, b):
        return self.table[a][b]

    @cached_property
    def _inverses(self):
        return tuple(int(np.flatnonzero(self._t[a] == self._id)[0]) for a in range(self.order))

    def inverse(self, a):
        return self._inverses[a]

    def validate(self, a):
        if not (isinstance(a, (int, np.integer)) and 0 <= a < self.order):
            raise GroupError(f"{a!r} is not an element of {self}")

    @property
    def generators(self):
        labels = self.labels or tuple(f"g{g}" for g in self.gens)
        return dict(zip(labels, self.gens))

    @cached_property
    def _lengths(self):
        dist = bfs_distances(self, self.symmetric_generators())
        if len(dist) != self.order:
            raise GroupError(f"generators {self.gens} do not generate {self}")
        return dist

    def length(self, g):
        return self._lengths[g]

    def to_json(self, g):
        return int(g)

    def from_json(self, obj):
        return int(obj)

    @property
    def affine(self):
        return AffineCode(self.order, 0)

    def encode(self, g):
        return int(g), ()

    def decode(self, sheet, vec):
        return int(sheet)

    def right_shift(self, sheet, s):
        return self.table[sheet][s], ()


# ---------------------------------------------------------------------------
@dataclass(frozen=True)
class Dihedral(Group):
    """Infinite dihedral group ``<a, b | a^2, b^2>`` acting on the integer line.

    ``(k, e)`` is ``x -> e*x + k``; composition ``(k1,e1)(k2,e2) = (k1+e1*k2, e1*e2)``,
    ``a = (0, -1)`` and ``b = (1, -1)``.
    """

    def __str__(self):
        return "D_inf"

    @property
    def identity(self):
        return (0, 1)

    def mul(self, a, b):
        return (_checked(a[0] + a[1] * b[0]), a[1] * b[1])

    def inverse(self, a):
        return (-a[1] * a[0], a[1])

    def validate(self, a):
        if not (isinstance(a, tuple) and len(a) == 2 and isinstance(a[0], (int, np.integer))
                and a[1] in (1, -1)):
            raise GroupError(f"{a!r} is not an element of D_inf")

    @property
    def generators(self):
        return {"a": (0, -1), "b": (1, -1)}

    def length(self, g):
        return abs(dihedral_position(g))

    def to_json(self, g):
        return [g[0], g[1]]

    def from_json(self, obj):
        return (int(obj[0]), int(obj[1]))

    @property
    def affine(self):
        return AffineCode(2, 1)

    def encode(self, g):
        return (0 if g[1] == 1 else 1), (g[0],)

    def decode(self, sheet, vec):
        return (int(vec[0]), 1 if sheet == 0 else -1)

    def right_shift(self, sheet, s):
        eps = 1 if sheet == 0 else -1
        return (0 if eps * s[1] == 1 else 1), (eps * s[0],)


def dihedral_position(g) -> int:
    """Vertex of ``g`` on the line Cayley graph of ``D_inf`` w.r.t. ``{a, b}``.

    ``(ab)^k -> 2k`` and ``(ab)^k a -> 2k+1``; adjacent elements map to adjacent
    integers.
    """
    if not (isinstance(g, tuple) and len(g) == 2 and g[1] in (1, -1)):
        raise GroupError(f"{g!r} is not a dihedral element")
    k, eps = g
    return -2 * k if eps == 1 else -2 * k + 1


def dihedral_from_position(p: int):
    if p % 2 == 0:
        return (-p // 2, 1)
    return (-(p - 1) // 2, -1)


# ---------------------------------------------------------------------------
@dataclass(frozen=True)
class Lamplighter(Group):
    """``Z/2 wr Z``; ``(f, t)(f', t') = (f + f'(. - t), t + t')``: the switch
    toggles the lamp under the lighter."""

    def __str__(self):
        return "lamplighter"

    @property
    def identity(self):
        return (frozenset(), 0)

    def mul(self, a, b):
        f, t = a
        g, u = b
        return (f.symmetric_difference(x + t for x in g), _checked(t + u))

    def inverse(self, a):
        f, t = a
        return (frozenset(x - t for x in f), -t)

    def validate(self, a):
        if not (isinstance(a, tuple) and len(a) == 2 and isinstance(a[0], frozenset)
                and isinstance(a[1], (int, np.integer))
                and all(isinstance(x, (int, np.integer)) for x in a[0])):
            raise GroupError(f"{a!r} is not a lamplighter element")

    @property
    def generators(self):
        return {"switch": (frozenset({0}), 0), "move": (frozenset(), 1)}

    def length(self, g):
        lamps, y = g
        if not lamps:
            return abs(y)
        lo = min(min(lamps), 0, y)
        hi = max(max(lamps), 0, y)
        # start at 0, cover [lo, hi], end at y; one switch per lit lamp
        tour = (hi - lo) + min(-lo + (hi - y), hi + (y - lo))
        return tour + len(lamps)

    def to_json(self, g):
        return [sorted(g[0]), g[1]]

    def from_json(self, obj):
        return (frozenset(int(x) for x in obj[0]), int(obj[1]))


# ---------------------------------------------------------------------------
@dataclass(frozen=True)
class FreeGroup(Group):
    rank: int = 2

    def __post_init__(self):
        if self.rank < 1:
            raise GroupError("free rank must be >= 1")

    def __str__(self):
        return f"F{self.rank}"

    @property
    def identity(self):
        return ()

    def mul(self, a, b):
        i = 0
        while i < len(a) and i < len(b) and a[-1 - i] == -b[i]:
            i += 1
        return a[:len(a) - i] + b[i:]

    def inverse(self, a):
        return tuple(-x for x in reversed(a))

    def validate(self, a):
        if not isinstance(a, tuple) or any(
                not isinstance(x, (int, np.integer)) or x == 0 or abs(x) > self.rank for x in a):
            raise GroupError(f"{a!r} is not a word over {self}")
        if any(a[i] == -a[i + 1] for i in range(len(a) - 1)):
            raise GroupError(f"{a!r} is not reduced")

    @property
    def generators(self):
        names = "xyzw" if self.rank <= 4 else None
        return {(names[i] if names else f"x{i + 1}"): (i + 1,) for i in range(self.rank)}

    def length(self, g):
        return len(g)

    def to_json(self, g):
        return list(g)

    def from_json(self, obj):
        return tuple(int(x) for x in obj)


def free_reduce(letters: Iterable[int]) -> tuple[int, ...]:
    """Freely reduce a sequence of letters ``+-i`` by cancelling ``x x^{-1}`` pairs."""
    stack: list[int] = []
    for x in letters:
        if x == 0:
            raise GroupError("0 is not a letter")
        if stack and stack[-1] == -x:
            stack.pop()
        else:
            stack.append(x)
    return tuple(stack)


# ---------------------------------------------------------------------------
@dataclass(frozen=True)
class DirectProduct(Group):
    left: Group
    right: Group

    def __str__(self):
        if self.left == self.right:
            return f"{self.left}^2" if not isinstance(self.left, DirectProduct) else f"({self.left})^2"
        return f"{self.left} x {self.right}"

    @property
    def identity(self):
        return (self.left.identity, self.right.identity)

    def mul(self, a, b):
        return (self.left.mul(a[0], b[0]), self.right.mul(a[1], b[1]))

    def inverse(self, a):
        return (self.left.inverse(a[0]), self.right.inverse(a[1]))

    def validate(self, a):
        if not (isinstance(a, tuple) and len(a) == 2):
            raise GroupError(f"{a!r} is not a pair")
        self.left.validate(a[0])
        self.right.validate(a[1])

    @property
    def generators(self):
        out = {}
        for k, g in self.left.generators.items():
            out[f"{k}.1"] = (g, self.right.identity)
        for k, g in self.right.generators.items():
            out[f"{k}.2"] = (self.left.identity, g)
        return out

    def length(self, g):
        return self.left.length(g[0]) + self.right.length(g[1])

    def distance(self, a, b):
        return self.left.distance(a[0], b[0]) + self.right.distance(a[1], b[1])

    def to_json(self, g):
        return [self.left.to_json(g[0]), self.right.to_json(g[1])]

    def from_json(self, obj):
        return (self.left.from_json(obj[0]), self.right.from_json(obj[1]))

    @property
    def order(self):
        a, b = self.left.order, self.right.order
        return a * b if a is not None and b is not None else None

    def elements(self):
        return [(x, y) for x in self.left.elements() for y in self.right.elements()]

    @property
    def affine(self):
        a, b = self.left.affine, self.right.affine
        if a is None or b is None:
            return None
        return AffineCode(a.n_sheets * b.n_sheets, a.dim + b.dim)

    def encode(self, g):
        s1, v1 = self.left.encode(g[0])
        s2, v2 = self.right.encode(g[1])
        return s1 * self.right.affine.n_sheets + s2, tuple(v1) + tuple(v2)

    def decode(self, sheet, vec):
        n2 = self.right.affine.n_sheets
        d1 = self.left.affine.dim
        return (self.left.decode(sheet // n2, vec[:d1]), self.right.decode(sheet % n2, vec[d1:]))

    def right_shift(self, sheet, s):
        n2 = self.right.affine.n_sheets
        t1, d1 = self.left.right_shift(sheet // n2, s[0])
        t2, d2 = self.right.right_shift(sheet % n2, s[1])
        return t1 * n2 + t2, tuple(d1) + tuple(d2)


def product_group(g1: Group, g2: Group) -> DirectProduct:
    """Direct product with component-wise law and the sum word metric."""
    return DirectProduct(g1, g2)


def pair_group(g: Group) -> DirectProduct:
    return DirectProduct(g, g)


# ---------------------------------------------------------------------------
def bfs_distances(group: Group, gens: Sequence, radius: int | None = None,
                  source=None) -> dict:
    """Graph distances from ``source`` (default identity) in the right Cayley graph.

    Explores the ball of the given radius (everything, for finite groups).
    """
    start = group.identity if source is None else source
    dist = {start: 0}
    queue = deque([start])
    while queue:
        g = queue.popleft()
        r = dist[g]
        if radius is not None and r >= radius:
            continue
        for s in gens:
            h = group.mul(g, s)
            if h not in dist:
                dist[h] = r + 1
                queue.append(h)
    return dist


def quotient_map(source: Group, kind: str, m: int = 2):
    """Homomorphisms used for contraction checks.

    ``"sign"``: ``D_inf -> Z/2`` (parity of word length).
    ``"mod"``: ``Z^d -> (Z/m)^d`` coordinatewise, returned as a tuple.
    """
    if kind == "sign":
        if not isinstance(source, Dihedral):
            raise GroupError("sign quotient needs D_inf")
        return FiniteGroup.cyclic(2), (lambda g: 0 if g[1] == 1 else 1)
    if kind == "mod":
        if not isinstance(source, Lattice):
            raise GroupError("mod quotient needs a lattice")
        target = FiniteGroup.cyclic(m)
        for _ in range(source.d - 1):
            target = DirectProduct(target, FiniteGroup.cyclic(m))

        def f(g):
            out = g[0] % m
            for x in g[1:]:
                out = (out, x % m)
            return out

        return target, f
    raise GroupError(f"unknown quotient {kind!r}")


_NAMED = {
    "z": lambda: Lattice(1),
    "d_inf": Dihedral,
    "dinf": Dihedral,
    "lamplighter": Lamplighter,
}


def parse_group(text: str) -> Group:
    """Parse group names such as ``Z``, ``Z^2``, ``Z/5``, ``D_inf``, ``F2``,
    ``lamplighter``, ``table:path``, ``S3``, ``D4`` and products ``A x B``."""
    raw = text.strip()
    if " x " in raw:
        parts = [p for p in raw.split(" x ")]
        g = parse_group(parts[0])
        for p in parts[1:]:
            g = DirectProduct(g, parse_group(p))
        return g
    low = raw.lower()
    if low.endswith("^2") and not low.startswith("z^"):
        inner = parse_group(raw[:-2].strip("()"))
        return DirectProduct(inner, inner)
    if low in _NAMED:
        return _NAMED[low]()
    if low.startswith("z^"):
        return Lattice(int(low[2:]))
    if low.startswith("z/"):
        return FiniteGroup.cyclic(int(low[2:]))
    if low.startswith("f") and low[1:].isdigit():
        return FreeGroup(int(low[1:]))
    if low.startswith("table:"):
        return FiniteGroup.from_file(raw[6:])
    if low == "s3":
        return symmetric_group_3()
    if low == "d4":
        return dihedral_group_4()
    raise GroupError(f"unknown group {text!r}")


def _perm_group(perms: list[tuple[int, ...]], gens: Sequence[int], title: str) -> FiniteGroup:
    index = {p: i for i, p in enumerate(perms)}
    # composition: apply p then q
    table = tuple(tuple(index[tuple(q[p[x]] for x in range(len(p)))] for q in perms) for p in perms)
    return FiniteGroup(table, gens=tuple(gens), title=title)


def symmetric_group_3() -> FiniteGroup:
    from itertools import permutations
    perms = list(permutations(range(3)))
    return _perm_group(perms, [perms.index((1, 0, 2)), perms.index((1, 2, 0))], "S3")


def dihedral_group_4() -> FiniteGroup:
    """Symmetries of the square: rotation and reflection generators."""
    rot = (1, 2, 3, 0)
    ref = (0, 3, 2, 1)
    perms = [(0, 1, 2, 3)]
    frontier = [perms[0]]
    while frontier:
        p = frontier.pop()
        for s in (rot, ref):
            q = tuple(s[p[x]] for x in range(4))
            if q not in perms:
                perms.append(q)
                frontier.append(q)
    return _perm_group(perms, [perms.index(rot), perms.index(ref)], "D4")
