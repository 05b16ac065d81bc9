"""Dense right-convolution on groups with an affine encoding.

A measure is held in a buffer ``(sheets, I, J)``; lattice coordinates live on
the trailing axes (a 1-d lattice uses ``I == 1``). Right multiplication by a
step atom sends sheet ``src`` to ``tgt`` and translates by ``(di, dj)``.

Each row keeps its own live column span ``[lo, hi)``; cells outside it are
garbage and never read. Values below ``flush`` are dropped as they appear
(their total is tracked), which keeps the arithmetic free of subnormals.
"""

from __future__ import annotations

import numpy as np
from numba import njit

TINY = np.finfo(np.float64).tiny


@njit(cache=True, fastmath=True)
def _axpy(dst, src, w, j0, j1, d):
    for j in range(j0, j1):
        dst[j] += w * src[j - d]


@njit(cache=True, fastmath=True)
def _tap2(dst, src, w0, w1, j0, j1, d):
    for j in range(j0, j1):
        dst[j] += w0 * src[j - d] + w1 * src[j - d - 1]


@njit(cache=True, fastmath=True)
def _tap3(dst, src, w0, w1, w2, j0, j1, d):
    for j in range(j0, j1):
        dst[j] += w0 * src[j - d] + w1 * src[j - d - 1] + w2 * src[j - d - 2]


@njit(cache=True)
def _window(row, orow, d0, w0, w1, w2, oj0, oj1):
    # fused where every shift reads inside [oj0, oj1), single taps at the edges
    if w1 == 0.0 and w2 == 0.0:
        _axpy(row, orow, w0, oj0 + d0, oj1 + d0, d0)
        return
    width = 2 if w2 == 0.0 else 3
    c0 = oj0 + d0 + width - 1
    c1 = oj1 + d0
    if c0 < c1:
        if width == 2:
            _tap2(row, orow, w0, w1, c0, c1, d0)
        else:
            _tap3(row, orow, w0, w1, w2, c0, c1, d0)
    for k in range(width):
        wk = w0 if k == 0 else (w1 if k == 1 else w2)
        if wk == 0.0:
            continue
        d = d0 + k
        a = oj0 + d
        b = oj1 + d
        if c0 < c1:
            _axpy(row, orow, wk, a, min(b, c0), d)
            _axpy(row, orow, wk, max(a, c1), b, d)
        else:
            _axpy(row, orow, wk, a, b, d)


@njit(cache=True)
def _step(old, olo, ohi, live, oi0, oi1, new, nlo, nhi, ni0, ni1,
          starts, src, di, dj, dspan, w, flush):
    n_sheets = new.shape[0]
    live_out = np.zeros(n_sheets, np.bool_)
    lost = 0.0
    cells = 0
    ei0 = ni1
    ei1 = ni0 - 1
    for t in range(n_sheets):
        k0 = starts[t]
        k1 = starts[t + 1]
        for i in range(ni0, ni1):
            nlo[t, i] = 0
            nhi[t, i] = 0
        any_src = False
        for k in range(k0, k1):
            if live[src[k]]:
                any_src = True
        if not any_src:
            continue
        for i in range(ni0, ni1):
            a = 1 << 62
            b = -(1 << 62)
            for k in range(k0, k1):
                s = src[k]
                si = i - di[k]
                if not live[s] or si < oi0 or si >= oi1 or olo[s, si] >= ohi[s, si]:
                    continue
                a = min(a, olo[s, si] + dj[k])
                b = max(b, ohi[s, si] + dj[k] + dspan[k])
            if a >= b:
                continue
            row = new[t, i]
            row[a:b] = 0.0
            for k in range(k0, k1):
                s = src[k]
                si = i - di[k]
                if not live[s] or si < oi0 or si >= oi1 or olo[s, si] >= ohi[s, si]:
                    continue
                _window(row, old[s, si], dj[k], w[k, 0], w[k, 1], w[k, 2],
                        olo[s, si], ohi[s, si])
            lo = b
            hi = a - 1
            for j in range(a, b):
                v = row[j]
                if v != 0.0:
                    if v < flush:
                        lost += v
                        row[j] = 0.0
                    else:
                        if j < lo:
                            lo = j
                        hi = j
            if hi >= lo:
                nlo[t, i] = lo
                nhi[t, i] = hi + 1
                cells += hi + 1 - lo
                live_out[t] = True
                if i < ei0:
                    ei0 = i
                if i > ei1:
                    ei1 = i
    return lost, live_out, ei0, ei1 + 1, cells


class Transitions:
    """Right-multiplication table of a step measure, grouped by target sheet.

    Atoms sharing (target, source, row shift) are packed into windows of up to
    three consecutive column shifts ``dj, dj+1, dj+2`` applied in one pass.
    """

    def __init__(self, group, atoms):
        code = group.affine
        taps = {}
        for sheet in range(code.n_sheets):
            for s, mass in atoms:
                tgt, shift = group.right_shift(sheet, s)
                shift = tuple(shift)
                if code.dim == 0:
                    d = (0, 0)
                elif code.dim == 1:
                    d = (0, shift[0])
                else:
                    d = shift
                col = taps.setdefault((tgt, sheet, d[0]), {})
                col[d[1]] = col.get(d[1], 0.0) + mass
        rows = []
        for key in sorted(taps):
            shifts = sorted(taps[key])
            while shifts:
                d0 = shifts[0]
                ws = [taps[key].get(d0 + k, 0.0) for k in range(3)]
                width = max(k for k in range(3) if ws[k] > 0) + 1
                shifts = [x for x in shifts if x > d0 + 2]
                rows.append(key + (d0, width - 1, ws))
        all_dj = [x for col in taps.values() for x in col]
        self.n_sheets = code.n_sheets
        tg = np.array([r[0] for r in rows], dtype=np.int64)
        self.starts = np.searchsorted(tg, np.arange(code.n_sheets + 1)).astype(np.int64)
        self.src = np.array([r[1] for r in rows], dtype=np.int64)
        self.di = np.array([r[2] for r in rows], dtype=np.int64)
        self.dj = np.array([r[3] for r in rows], dtype=np.int64)
        self.dspan = np.array([r[4] for r in rows], dtype=np.int64)
        self.w = np.array([r[5] for r in rows], dtype=np.float64).reshape(-1, 3)
        self.flush = TINY / min(m for _, m in atoms)
        self.di_range = (int(self.di.min()), int(self.di.max()))
        self.dj_range = (min(all_dj), max(all_dj))


class GridWalk:
    """Double-buffered state for iterated right-convolution.

    ``box`` holds buffer indices ``(i0, i1, j0, j1)`` bounding every live row
    span; buffer index 0 sits at lattice coordinate ``base``. Only axes
    carrying lattice coordinates get padding.
    """

    def __init__(self, n_sheets, dim, data3, origin2, live):
        self.n_sheets = n_sheets
        self.pad = (32 if dim == 2 else 0, 32 if dim >= 1 else 0)
        _, I, J = data3.shape
        pi, pj = self.pad
        self.cap = (I + 2 * pi, J + 2 * pj)
        self.base = (origin2[0] - pi, origin2[1] - pj)
        self.a = np.zeros((n_sheets,) + self.cap)
        self.b = np.zeros((n_sheets,) + self.cap)
        self.a[:, pi:pi + I, pj:pj + J] = data3
        self.lo = np.zeros((n_sheets, self.cap[0]), dtype=np.int64)
        self.hi = np.zeros((n_sheets, self.cap[0]), dtype=np.int64)
        self.live = np.asarray(live, dtype=np.bool_).copy()
        for s in range(n_sheets):
            if self.live[s]:
                self.lo[s, pi:pi + I] = pj
                self.hi[s, pi:pi + I] = pj + J
        self.blo = np.zeros_like(self.lo)
        self.bhi = np.zeros_like(self.hi)
        self.box = (pi, pi + I, pj, pj + J)
        self._cells = int(self.live.sum()) * I * J
        self.lost = 0.0

    def _ensure(self, need):
        i0, i1, j0, j1 = need
        ci, cj = self.cap
        if i0 >= 0 and j0 >= 0 and i1 <= ci and j1 <= cj:
            return
        oi0, oi1, oj0, oj1 = self.box
        pi = (i1 - i0) // 2 + self.pad[0] if self.pad[0] else 0
        pj = (j1 - j0) // 2 + self.pad[1] if self.pad[1] else 0
        new_cap = (i1 - i0 + 2 * pi, j1 - j0 + 2 * pj)
        ni0 = pi + (oi0 - i0)
        nj0 = pj + (oj0 - j0)
        a = np.zeros((self.n_sheets,) + new_cap)
        a[:, ni0:ni0 + oi1 - oi0, nj0:nj0 + oj1 - oj0] = self.a[:, oi0:oi1, oj0:oj1]
        lo = np.zeros((self.n_sheets, new_cap[0]), dtype=np.int64)
        hi = np.zeros_like(lo)
        lo[:, ni0:ni0 + oi1 - oi0] = self.lo[:, oi0:oi1] + (nj0 - oj0)
        hi[:, ni0:ni0 + oi1 - oi0] = self.hi[:, oi0:oi1] + (nj0 - oj0)
        empty = lo >= hi
        lo[empty] = 0
        hi[empty] = 0
        self.base = (self.base[0] + oi0 - ni0, self.base[1] + oj0 - nj0)
        self.a, self.b = a, np.zeros_like(a)
        self.lo, self.hi = lo, hi
        self.blo, self.bhi = np.zeros_like(lo), np.zeros_like(hi)
        self.cap = new_cap
        self.box = (ni0, ni0 + oi1 - oi0, nj0, nj0 + oj1 - oj0)

    def step(self, tr: Transitions):
        oi0, oi1, oj0, oj1 = self.box
        need = (oi0 + tr.di_range[0], oi1 + tr.di_range[1],
                oj0 + tr.dj_range[0], oj1 + tr.dj_range[1])
        self._ensure(need)
        oi0, oi1, _, _ = self.box
        ni0, ni1 = oi0 + tr.di_range[0], oi1 + tr.di_range[1]
        lost, live, ei0, ei1, cells = _step(
            self.a, self.lo, self.hi, self.live, oi0, oi1,
            self.b, self.blo, self.bhi, ni0, ni1,
            tr.starts, tr.src, tr.di, tr.dj, tr.dspan, tr.w, tr.flush)
        if ei1 <= ei0:
            raise FloatingPointError("all mass underflowed")
        self.lost += lost
        self.a, self.b = self.b, self.a
        self.lo, self.blo = self.blo, self.lo
        self.hi, self.bhi = self.bhi, self.hi
        self.live = live
        rows = slice(ei0, ei1)
        used = self.hi[:, rows] > self.lo[:, rows]
        j0 = int(self.lo[:, rows][used].min())
        j1 = int(self.hi[:, rows][used].max())
        self.box = (ei0, ei1, j0, j1)
        self._cells = cells

    def cells(self) -> int:
        """Number of cells inside live row spans."""
        return self._cells

    def snapshot(self):
        """Copy of the active box as ``(data3, origin2)``; cells outside row spans are zero."""
        i0, i1, j0, j1 = self.box
        data = np.zeros((self.n_sheets, i1 - i0, j1 - j0))
        for s in range(self.n_sheets):
            if not self.live[s]:
                continue
            for r in range(i0, i1):
                lo, hi = self.lo[s, r], self.hi[s, r]
                if lo < hi:
                    data[s, r - i0, lo - j0:hi - j0] = self.a[s, r, lo:hi]
        return data, (self.base[0] + i0, self.base[1] + j0)
