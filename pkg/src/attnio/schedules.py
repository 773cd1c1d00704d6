"""Trace generators for the tiled schedules and the two exact-attention baselines.

Approximate schedules emit both products, first ``H = U2^T V`` and then
``U1 H``. The approximate denominator is not part of the traces (see
``iosim.reference_output``). Each generator reads its tile sizes from
``planner.plan_geometry`` so its I/O count matches ``planner.analytic_cost``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from itertools import combinations
from typing import Callable, Iterator

from .featuremap import MonomialBasis, enumerate_basis
from .iosim import (
    COMPUTE,
    EVICT,
    GENERATED,
    INPUT,
    LOAD,
    OUTPUT,
    PARTIAL,
    STORE,
    Registry,
    ScheduleMeta,
    TraceOp,
    ValueId,
)
from .planner import (
    DenseGeometry,
    FlashGeometry,
    GroupedGeometry,
    NaiveGeometry,
    Params,
    blocks,
    plan_geometry,
)


# --- group partition and tile assignment ------------------------------------

@dataclass(frozen=True)
class GroupPartition:
    """Contiguous column groups of size ``s`` over ``d`` indices (last may be short).

    Group ids are 0-based.
    """

    d: int
    s: int

    def __post_init__(self):
        if self.d < 1 or self.s < 1:
            raise ValueError("need d >= 1 and s >= 1")

    @property
    def m(self) -> int:
        return -(-self.d // self.s)

    @property
    def groups(self) -> list[range]:
        return [range(i * self.s, min(self.d, (i + 1) * self.s)) for i in range(self.m)]

    def group_of(self, var: int) -> int:
        return var // self.s


def assign_tile(m, part: GroupPartition, g: int) -> tuple[int, ...]:
    """First g-subset of groups (lexicographic) covering the monomial's support.

    The touched groups are padded with the smallest untouched group ids. With
    fewer than ``g`` groups there is one aggregation tile holding all of them.
    """
    exps = m.exponents if hasattr(m, "exponents") else m
    touched = sorted({part.group_of(v) for v, e in enumerate(exps) if e})
    if part.m < g:
        return tuple(range(part.m))
    assert len(touched) <= g, "support touches more than g groups"
    pad = [x for x in range(part.m) if x not in touched][: g - len(touched)]
    return tuple(sorted(touched + pad))


@dataclass(frozen=True)
class TileStep:
    """One aggregation step of an output tile: a combination and the U1 columns it owns."""

    combo: tuple[int, ...]
    columns: tuple[int, ...]
    variables: tuple[int, ...]


def aggregation_steps(basis: MonomialBasis, part: GroupPartition, g: int) -> list[TileStep]:
    owned: dict[tuple[int, ...], list[int]] = {}
    for a, mono in enumerate(basis.monomials):
        owned.setdefault(assign_tile(mono, part, g), []).append(a)
    combos = list(combinations(range(part.m), g)) if part.m >= g else [tuple(range(part.m))]
    groups = part.groups
    steps = []
    for k in combos:
        variables = tuple(v for G in k for v in groups[G])
        steps.append(TileStep(k, tuple(owned.get(k, ())), variables))
    return steps


# --- schedule objects --------------------------------------------------------

@dataclass(frozen=True)
class Schedule:
    """A re-iterable trace plus everything needed to simulate and replay it."""

    kind: str
    params: Params
    geometry: object
    registry: Registry
    meta: ScheduleMeta
    _emit: Callable[[], Iterator[TraceOp]]

    def ops(self) -> Iterator[TraceOp]:
        return self._emit()

    def __iter__(self):
        return self._emit()


def _ids(kind: str, tag: str, rows: int, cols: int) -> list[list[ValueId]]:
    return [[ValueId(kind, tag, i, c) for c in range(cols)] for i in range(rows)]


def _registry(n: int, d: int, out_tag: str) -> Registry:
    inputs = frozenset(ValueId(INPUT, t, i, c) for t in "QKV" for i in range(n) for c in range(d))
    outputs = tuple((OUTPUT, out_tag, i, c) for i in range(n) for c in range(d))
    return Registry(inputs=inputs, outputs=outputs)


def _loads(cells):
    return [TraceOp(LOAD, x) for x in cells]


def _evicts(cells):
    return [TraceOp(EVICT, x) for x in cells]


# --- approximate-attention generators ---------------------------------------

class _Approx:
    """Shared state and micro-steps for the U1 (U2^T V) schedules."""

    def __init__(self, p: Params):
        self.p = p
        n, d = p.n, p.d
        self.basis = enumerate_basis(d, p.g)
        self.vars = [m.variables for m in self.basis.monomials]
        self.Q = _ids(INPUT, "Q", n, d)
        self.K = _ids(INPUT, "K", n, d)
        self.V = _ids(INPUT, "V", n, d)
        self.hver: dict[tuple[int, int], int] = {}
        self.over: dict[tuple[int, int], int] = {}

    def h_id(self, a, c):
        return ValueId(PARTIAL, "H", a, c, self.hver[(a, c)])

    def o_id(self, i, c):
        return ValueId(OUTPUT, "O", i, c, self.over[(i, c)])

    def first_update(self, cols, strip, rows_c):
        """Generate U2 for one monomial over a strip and fold it into H(a, c)."""
        out = []
        K, V, hver = self.K, self.V, self.hver
        for a in cols:
            va = self.vars[a]
            batch = [ValueId(GENERATED, "U2", j, a) for j in strip]
            for j, u in zip(strip, batch):
                out.append(TraceOp(COMPUTE, u, tuple(K[j][v] for v in va)))
            for c in rows_c:
                key = (a, c)
                vals = tuple(batch) + tuple(V[j][c] for j in strip)
                if key in hver:
                    prev = ValueId(PARTIAL, "H", a, c, hver[key])
                    hver[key] += 1
                    ins = (prev,) + vals
                else:
                    hver[key] = 0
                    ins = vals
                out.append(TraceOp(COMPUTE, ValueId(PARTIAL, "H", a, c, hver[key]), ins))
            out.extend(_evicts(batch))
        return out

    def second_update(self, i, cols, rows_c):
        """Generate U1 for one row over ``cols`` and fold it into O(i, c)."""
        out = []
        Qi, over = self.Q[i], self.over
        batch = [ValueId(GENERATED, "U1", i, a) for a in cols]
        for a, u in zip(cols, batch):
            out.append(TraceOp(COMPUTE, u, tuple(Qi[v] for v in self.vars[a])))
        for c in rows_c:
            key = (i, c)
            vals = tuple(batch) + tuple(self.h_id(a, c) for a in cols)
            if key in over:
                prev = ValueId(OUTPUT, "O", i, c, over[key])
                over[key] += 1
                ins = (prev,) + vals
            else:
                over[key] = 0
                ins = vals
            out.append(TraceOp(COMPUTE, ValueId(OUTPUT, "O", i, c, over[key]), ins))
        out.extend(_evicts(batch))
        return out

    def h_tile(self, cols, cs):
        return [self.h_id(a, c) for a in cols for c in cs]

    def o_tile(self, rows, cs):
        return [self.o_id(i, c) for i in rows for c in cs]


def _dense_ops(p: Params, geo: DenseGeometry) -> Iterator[TraceOp]:
    st = _Approx(p)
    n, d, r = p.n, p.d, len(st.basis)
    if n == 0:
        return
    col_blocks = [range(c0, c0 + w) for c0, w in blocks(d, geo.tw)]
    strips = [range(j0, j0 + h) for j0, h in blocks(n, geo.h)]
    mono_blocks = [range(a0, a0 + b) for a0, b in blocks(r, geo.b)]
    allcols = range(d)

    # H = U2^T V
    for A in mono_blocks:
        for C in col_blocks:
            for J in strips:
                tiles = [st.K[j][v] for j in J for v in allcols] + [st.V[j][c] for j in J for c in C]
                yield from _loads(tiles)
                yield from st.first_update(A, J, C)
                yield from _evicts(tiles)
            h = st.h_tile(A, C)
            yield from (TraceOp(STORE, x) for x in h)
            yield from _evicts(h)

    # O = U1 H
    if geo.cols_outer:
        assert len(mono_blocks) == 1
        A = mono_blocks[0]
        for C in col_blocks:
            h = st.h_tile(A, C)
            yield from _loads(h)
            for R in strips:
                q = [st.Q[i][v] for i in R for v in allcols]
                yield from _loads(q)
                for i in R:
                    yield from st.second_update(i, A, C)
                o = st.o_tile(R, C)
                yield from (TraceOp(STORE, x) for x in o)
                yield from _evicts(o + q)
            yield from _evicts(h)
        return
    for R in strips:
        q = [st.Q[i][v] for i in R for v in allcols]
        yield from _loads(q)
        for C in col_blocks:
            for A in mono_blocks:
                h = st.h_tile(A, C)
                yield from _loads(h)
                for i in R:
                    yield from st.second_update(i, A, C)
                yield from _evicts(h)
            o = st.o_tile(R, C)
            yield from (TraceOp(STORE, x) for x in o)
            yield from _evicts(o)
        yield from _evicts(q)


def _grouped_ops(p: Params, geo: GroupedGeometry) -> Iterator[TraceOp]:
    st = _Approx(p)
    n, d, g = p.n, p.d, p.g
    if n == 0:
        return
    part = GroupPartition(d, geo.s)
    steps = aggregation_steps(st.basis, part, g)
    col_blocks = [range(c0, c0 + w) for c0, w in blocks(d, geo.tw)]
    strips = [range(j0, j0 + h) for j0, h in blocks(n, geo.h)]

    def subtiles(cols):
        if not geo.chunk:
            return [cols]
        return [cols[x:x + geo.chunk] for x in range(0, len(cols), geo.chunk)]

    # H = U2^T V, one aggregation tile of rows of H at a time
    for step in steps:
        subs = subtiles(step.columns)
        spilled = len(subs) > 1
        for C in col_blocks:
            for jdx, J in enumerate(strips):
                tiles = [st.K[j][v] for j in J for v in step.variables] + [st.V[j][c] for j in J for c in C]
                yield from _loads(tiles)
                if not spilled:
                    yield from st.first_update(step.columns, J, C)
                else:
                    for sub in subs:
                        if jdx:
                            yield from _loads(st.h_tile(sub, C))
                        yield from st.first_update(sub, J, C)
                        h = st.h_tile(sub, C)
                        yield from (TraceOp(STORE, x) for x in h)
                        yield from _evicts(h)
                yield from _evicts(tiles)
            if not spilled:
                h = st.h_tile(step.columns, C)
                yield from (TraceOp(STORE, x) for x in h)
                yield from _evicts(h)

    # O = U1 H, output tile resident across all aggregation steps
    for R in strips:
        for C in col_blocks:
            for step in steps:
                q = [st.Q[i][v] for i in R for v in step.variables]
                yield from _loads(q)
                for sub in subtiles(step.columns):
                    h = st.h_tile(sub, C)
                    yield from _loads(h)
                    for i in R:
                        yield from st.second_update(i, sub, C)
                    yield from _evicts(h)
                yield from _evicts(q)
            o = st.o_tile(R, C)
            yield from (TraceOp(STORE, x) for x in o)
            yield from _evicts(o)


# --- exact-attention baselines ----------------------------------------------

def _flash_ops(p: Params, geo: FlashGeometry) -> Iterator[TraceOp]:
    """Query block resident, key/value blocks streamed, online softmax per row."""
    n, d = p.n, p.d
    Q, K, V = _ids(INPUT, "Q", n, d), _ids(INPUT, "K", n, d), _ids(INPUT, "V", n, d)
    cols = range(d)
    key_blocks = [range(j0, j0 + w) for j0, w in blocks(n, geo.bc)]
    for r0, br in blocks(n, geo.br):
        R = range(r0, r0 + br)
        q = [x for i in R for x in Q[i]]
        yield from _loads(q)
        ver = dict.fromkeys(R, 0)
        for i in R:
            yield TraceOp(COMPUTE, ValueId(PARTIAL, "m", i, 0))
            yield TraceOp(COMPUTE, ValueId(PARTIAL, "l", i, 0))
            for c in cols:
                yield TraceOp(COMPUTE, ValueId(OUTPUT, "F", i, c))
        for J in key_blocks:
            kv = [x for j in J for x in K[j]] + [x for j in J for x in V[j]]
            yield from _loads(kv)
            krows = [tuple(K[j]) for j in J]
            vcols = [tuple(V[j][c] for j in J) for c in cols]
            for i in R:
                v = ver[i]
                m_old = ValueId(PARTIAL, "m", i, 0, v)
                qi = tuple(Q[i])
                S = tuple([ValueId(PARTIAL, "S", i, j) for j in J])
                yield from [TraceOp(COMPUTE, s, qi + kr) for s, kr in zip(S, krows)]
                for c in cols:
                    yield TraceOp(
                        COMPUTE,
                        ValueId(OUTPUT, "F", i, c, v + 1),
                        (ValueId(OUTPUT, "F", i, c, v), m_old) + S + vcols[c],
                    )
                yield TraceOp(COMPUTE, ValueId(PARTIAL, "l", i, 0, v + 1), (ValueId(PARTIAL, "l", i, 0, v), m_old) + S)
                yield TraceOp(COMPUTE, ValueId(PARTIAL, "m", i, 0, v + 1), (m_old,) + S)
                ver[i] = v + 1
                yield from _evicts(S)
            yield from _evicts(kv)
        for i in R:
            v = ver[i]
            l_fin = ValueId(PARTIAL, "l", i, 0, v)
            for c in cols:
                f = ValueId(OUTPUT, "F", i, c, v + 1)
                yield TraceOp(COMPUTE, f, (ValueId(OUTPUT, "F", i, c, v), l_fin))
                yield TraceOp(STORE, f)
                yield TraceOp(EVICT, f)
            yield TraceOp(EVICT, l_fin)
            yield TraceOp(EVICT, ValueId(PARTIAL, "m", i, 0, v))
        yield from _evicts(q)


def _naive_ops(p: Params, geo: NaiveGeometry) -> Iterator[TraceOp]:
    """Scores materialised in slow memory, two-pass row softmax, then P V."""
    n, d, t = p.n, p.d, geo.t
    Q, K, V = _ids(INPUT, "Q", n, d), _ids(INPUT, "K", n, d), _ids(INPUT, "V", n, d)
    row_blocks = [range(x0, x0 + w) for x0, w in blocks(n, t)]
    col_blocks = [range(x0, x0 + w) for x0, w in blocks(d, t)]

    # S = Q K^T / sqrt(d)
    for R in row_blocks:
        for J in row_blocks:
            for step, D in enumerate(col_blocks):
                tiles = [Q[i][c] for i in R for c in D] + [K[j][c] for j in J for c in D]
                yield from _loads(tiles)
                for i in R:
                    for j in J:
                        ins = tuple(Q[i][c] for c in D) + tuple(K[j][c] for c in D)
                        if step:
                            ins = (ValueId(PARTIAL, "S", i, j, step - 1),) + ins
                        yield TraceOp(COMPUTE, ValueId(PARTIAL, "S", i, j, step), ins)
                yield from _evicts(tiles)
            s = [ValueId(PARTIAL, "S", i, j, len(col_blocks) - 1) for i in R for j in J]
            yield from (TraceOp(STORE, x) for x in s)
            yield from _evicts(s)

    # P = row softmax of S
    last = len(col_blocks) - 1
    chunks = [range(x0, x0 + w) for x0, w in blocks(n, geo.chunk)]
    for i in range(n):
        yield TraceOp(COMPUTE, ValueId(PARTIAL, "m", i, 0))
        yield TraceOp(COMPUTE, ValueId(PARTIAL, "l", i, 0))
        for v, J in enumerate(chunks):
            s = tuple(ValueId(PARTIAL, "S", i, j, last) for j in J)
            yield from _loads(s)
            m_old = ValueId(PARTIAL, "m", i, 0, v)
            yield TraceOp(COMPUTE, ValueId(PARTIAL, "l", i, 0, v + 1), (ValueId(PARTIAL, "l", i, 0, v), m_old) + s)
            yield TraceOp(COMPUTE, ValueId(PARTIAL, "m", i, 0, v + 1), (m_old,) + s)
            yield from _evicts(s)
        m_fin = ValueId(PARTIAL, "m", i, 0, len(chunks))
        l_fin = ValueId(PARTIAL, "l", i, 0, len(chunks))
        for J in chunks:
            s = [ValueId(PARTIAL, "S", i, j, last) for j in J]
            yield from _loads(s)
            P = [ValueId(PARTIAL, "P", i, j) for j in J]
            for sv, pv in zip(s, P):
                yield TraceOp(COMPUTE, pv, (sv, m_fin, l_fin))
            yield from (TraceOp(STORE, x) for x in P)
            yield from _evicts(s + P)
        yield TraceOp(EVICT, m_fin)
        yield TraceOp(EVICT, l_fin)

    # A = P V
    P = _ids(PARTIAL, "P", n, n)
    for R in row_blocks:
        for C in col_blocks:
            for step, J in enumerate(row_blocks):
                tiles = [P[i][j] for i in R for j in J] + [V[j][c] for j in J for c in C]
                yield from _loads(tiles)
                for i in R:
                    for c in C:
                        ins = tuple(P[i][j] for j in J) + tuple(V[j][c] for j in J)
                        if step:
                            ins = (ValueId(OUTPUT, "A", i, c, step - 1),) + ins
                        yield TraceOp(COMPUTE, ValueId(OUTPUT, "A", i, c, step), ins)
                yield from _evicts(tiles)
            a = [ValueId(OUTPUT, "A", i, c, len(row_blocks) - 1) for i in R for c in C]
            yield from (TraceOp(STORE, x) for x in a)
            yield from _evicts(a)


# --- public constructors -----------------------------------------------------

_FAMILY = {"flash": ("flash", "F", _flash_ops), "naive": ("naive", "A", _naive_ops)}


def build_schedule(kind: str, p: Params) -> Schedule:
    """Plan ``kind`` on ``p`` (PlanningError if infeasible) and wrap its trace."""
    geo = plan_geometry(kind, p)
    if kind in _FAMILY:
        family, tag, emit = _FAMILY[kind]
    else:
        family, tag = "approx", "O"
        emit = _dense_ops if isinstance(geo, DenseGeometry) else _grouped_ops
    registry = _registry(p.n, p.d, tag)
    meta = ScheduleMeta(kind=kind, family=family, n=p.n, d=p.d, g=p.g, outputs=registry.outputs)
    return Schedule(kind, p, geo, registry, meta, lambda: emit(p, geo))


def schedule_case1(p: Params) -> Schedule:
    return build_schedule("case1", p)


def schedule_keylemma(p: Params, w: int | None = None) -> Schedule:
    if w is not None:
        p = Params(p.n, p.d, p.g, p.M, w)
    return build_schedule("keylemma", p)


def schedule_case3_special(p: Params) -> Schedule:
    return build_schedule("case3special", p)


def schedule_generic_square(p: Params) -> Schedule:
    return build_schedule("generic-square", p)


def schedule_generic_wide(p: Params) -> Schedule:
    return build_schedule("generic-wide", p)


def schedule_flash_baseline(p: Params) -> Schedule:
    return build_schedule("flash", p)


def schedule_naive_baseline(p: Params) -> Schedule:
    return build_schedule("naive", p)
