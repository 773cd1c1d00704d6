"""Two-level memory machine that checks and counts schedule traces.

The machine has a fast memory holding at most ``M`` values and an unbounded
slow memory. A trace is a stream of ``TraceOp`` records:

* ``LOAD id``: copy a value from slow memory into fast memory (1 I/O).
* ``STORE id``: copy a resident value to slow memory (1 I/O).
* ``COMPUTE out <- ins``: every input must be resident; ``out`` becomes resident.
* ``EVICT id``: drop a value from fast memory (free).

Partial sums are first-class values. ``COMPUTE`` whose first input is an
earlier version of the same cell updates it in place and needs no new slot.
Partial versions may be stored and reloaded like any other value.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable, NamedTuple

from .errors import (
    CapacityExceeded,
    LoadOfUnmaterialized,
    MissingOutput,
    OperandNotResident,
)

INPUT = "input"
GENERATED = "generated"
PARTIAL = "partial"
OUTPUT = "output"
KINDS = (INPUT, GENERATED, PARTIAL, OUTPUT)

LOAD = "L"
STORE = "S"
COMPUTE = "C"
EVICT = "E"


class ValueId(NamedTuple):
    kind: str
    tag: str
    row: int
    col: int
    version: int = 0

    @property
    def base(self) -> tuple[str, str, int, int]:
        return (self.kind, self.tag, self.row, self.col)

    def __str__(self):
        return f"{self.kind}:{self.tag}:{self.row}:{self.col}:{self.version}"


class TraceOp(NamedTuple):
    op: str
    id: ValueId
    ins: tuple[ValueId, ...] = ()


@dataclass(frozen=True)
class Registry:
    """Values present in slow memory at start, and the cells that must end there."""

    inputs: frozenset[ValueId] = frozenset()
    outputs: tuple[tuple[str, str, int, int], ...] = ()


@dataclass
class IoStats:
    loads: int = 0
    stores: int = 0
    computes: int = 0
    evicts: int = 0
    peak_resident: int = 0
    warnings: int = 0

    @property
    def total_io(self) -> int:
        return self.loads + self.stores

    def as_dict(self) -> dict:
        return {
            "loads": self.loads,
            "stores": self.stores,
            "computes": self.computes,
            "peak_resident": self.peak_resident,
            "total_io": self.total_io,
            "warnings": self.warnings,
        }


def _same_cell(a: ValueId, b: ValueId) -> bool:
    return a[:4] == b[:4]


def simulate(trace: Iterable[TraceOp], M: int, registry: Registry = Registry()) -> IoStats:
    """Execute ``trace`` on a machine with fast capacity ``M`` and count I/O.

    Raises a ``SimulationError`` subclass on the first illegal step. EVICT of a
    non-resident value and LOAD of an already resident one are tolerated and
    counted in ``warnings``.
    """
    if M < 2:
        raise ValueError("fast memory capacity must be at least 2")
    resident: set[ValueId] = set()
    slow: set[ValueId] = set(registry.inputs)
    latest: dict[tuple, int] = {}
    loads = stores = computes = evicts = warnings = peak = 0
    add = resident.add
    for step, (code, vid, ins) in enumerate(trace):
        if code == COMPUTE:
            if ins:
                if not resident.issuperset(ins):
                    missing = next(x for x in ins if x not in resident)
                    raise OperandNotResident(f"COMPUTE {vid} needs {missing}", step)
                first = ins[0]
                if first[2:4] == vid[2:4] and first[:2] == vid[:2] and first[4] != vid[4]:
                    # in-place update of a resident partial value
                    resident.discard(first)
                    add(vid)
                    computes += 1
                    if vid[0] == OUTPUT:
                        latest[vid[:4]] = vid[4]
                    continue
            if vid not in resident:
                if len(resident) >= M:
                    raise CapacityExceeded(f"COMPUTE {vid} with {len(resident)}/{M} resident", step)
                add(vid)
                if len(resident) > peak:
                    peak = len(resident)
            computes += 1
            if vid[0] == OUTPUT:
                latest[vid[:4]] = vid[4]
        elif code == EVICT:
            if vid in resident:
                resident.remove(vid)
                evicts += 1
            else:
                warnings += 1
        elif code == LOAD:
            if vid in resident:
                warnings += 1
                continue
            if vid not in slow:
                raise LoadOfUnmaterialized(f"LOAD {vid} was never stored", step)
            if len(resident) >= M:
                raise CapacityExceeded(f"LOAD {vid} with {len(resident)}/{M} resident", step)
            add(vid)
            loads += 1
            if len(resident) > peak:
                peak = len(resident)
        elif code == STORE:
            if vid not in resident:
                raise OperandNotResident(f"STORE {vid} is not resident", step)
            slow.add(vid)
            stores += 1
        else:
            raise ValueError(f"unknown trace op {code!r} at step {step}")
    for base in registry.outputs:
        version = latest.get(base)
        if version is None or ValueId(*base, version) not in slow:
            raise MissingOutput(f"output {':'.join(map(str, base))} never stored in final form")
    return IoStats(loads, stores, computes, evicts, peak, warnings)


# --- trace text format -------------------------------------------------------

def format_id(vid: ValueId) -> str:
    return str(vid)


def parse_id(text: str) -> ValueId:
    kind, tag, row, col, ver = text.strip().split(":")
    if kind not in KINDS:
        raise ValueError(f"unknown value kind {kind!r}")
    return ValueId(kind, tag, int(row), int(col), int(ver))


def format_op(op: TraceOp) -> str:
    if op.op == COMPUTE:
        return f"C {op.id} <- {','.join(map(str, op.ins))}"
    return f"{op.op} {op.id}"


def parse_op(line: str) -> TraceOp:
    code, rest = line.strip().split(" ", 1)
    if code == COMPUTE:
        out, _, ins = rest.partition("<-")
        ins = ins.strip()
        return TraceOp(COMPUTE, parse_id(out), tuple(parse_id(x) for x in ins.split(",")) if ins else ())
    if code not in (LOAD, STORE, EVICT):
        raise ValueError(f"unknown trace op {code!r}")
    return TraceOp(code, parse_id(rest))


def dump_trace(trace: Iterable[TraceOp], fh) -> int:
    count = 0
    for op in trace:
        fh.write(format_op(op) + "\n")
        count += 1
    return count


def load_trace(lines: Iterable[str]) -> list[TraceOp]:
    return [parse_op(ln) for ln in lines if ln.strip()]


# --- numeric replay ----------------------------------------------------------

@dataclass(frozen=True)
class ScheduleMeta:
    """What replay needs to know about the trace's origin.

    ``family`` is ``"approx"`` (U1 (U2^T V), output tag ``O``), ``"flash"``
    (streamed exact attention, output tag ``F``) or ``"naive"`` (materialised
    scores, output tag ``A``).
    """

    kind: str
    family: str
    n: int
    d: int
    g: int = 0
    outputs: tuple = field(default=(), repr=False)


class _Evaluator:
    """Arithmetic meaning of each value tag."""

    def __init__(self, meta: ScheduleMeta):
        self.inv_sqrt_d = 1.0 / math.sqrt(meta.d) if meta.d else 1.0
        self.exps = None
        if meta.family == "approx":
            from .featuremap import enumerate_basis, q_coefficients
            from .polyapprox import PolyApprox, taylor_coeffs

            basis = enumerate_basis(meta.d, meta.g)
            P = PolyApprox(g=meta.g, coeffs=taylor_coeffs(meta.g))
            self.exps = basis.exponents.tolist()
            self.qcoef = q_coefficients(P, basis).tolist()

    def __call__(self, out: ValueId, ins, vals) -> float:
        tag = out.tag
        if tag == "U1" or tag == "U2":
            e = self.exps[out.col]
            acc = self.qcoef[out.col] if tag == "U1" else 1.0
            scale = self.inv_sqrt_d if tag == "U1" else 1.0
            for x in ins:
                acc *= (vals[x] * scale) ** e[x.col]
            return acc
        if not ins:
            return -math.inf if tag == "m" else 0.0
        prev, rest = (vals[ins[0]], ins[1:]) if _same_cell(ins[0], out) else (0.0, ins)
        if tag in ("H", "O", "A", "S"):
            half = len(rest) // 2
            s = math.fsum(vals[a] * vals[b] for a, b in zip(rest[:half], rest[half:]))
            return prev + (s * self.inv_sqrt_d if tag == "S" else s)
        if tag == "m":
            return max(prev, max(vals[x] for x in rest))
        if tag == "l":
            m_old = vals[rest[0]]
            scores = [vals[x] for x in rest[1:]]
            m_new = max(m_old, max(scores))
            scale = math.exp(m_old - m_new) if m_old > -math.inf else 0.0
            return prev * scale + math.fsum(math.exp(s - m_new) for s in scores)
        if tag == "P":
            s, m, l = (vals[x] for x in ins)
            return math.exp(s - m) / l
        if tag == "F":
            if len(rest) == 1 and rest[0].tag == "l":
                return prev / vals[rest[0]]
            m_old = vals[rest[0]]
            body = rest[1:]
            half = len(body) // 2
            scores = [vals[x] for x in body[:half]]
            m_new = max(m_old, max(scores))
            scale = math.exp(m_old - m_new) if m_old > -math.inf else 0.0
            return prev * scale + math.fsum(
                math.exp(s - m_new) * vals[v] for s, v in zip(scores, body[half:])
            )
        raise ValueError(f"no replay semantics for tag {tag!r}")


def reference_output(problem, meta: ScheduleMeta):
    """Oracle matrix the trace's outputs are compared against."""
    from .core import matmul_ref

    if meta.family == "approx":
        from .featuremap import enumerate_basis, expand_k, expand_q
        from .polyapprox import PolyApprox, taylor_coeffs

        basis = enumerate_basis(meta.d, meta.g)
        P = PolyApprox(g=meta.g, coeffs=taylor_coeffs(meta.g))
        U1 = expand_q(problem.Q / math.sqrt(meta.d), P, basis)
        U2 = expand_k(problem.K, basis)
        return matmul_ref(U1, matmul_ref(U2.T, problem.V))
    from .attention import exact_attention

    return exact_attention(problem.Q, problem.K, problem.V).output


def replay_check(trace: Iterable[TraceOp], problem, meta: ScheduleMeta, tol: float = 1e-9) -> bool:
    """Run the trace's arithmetic and compare the stored outputs with the oracle.

    Returns False when the arithmetic cannot be carried out (a value used
    before it exists), when an output was never stored, or when any entry
    differs from the oracle by more than ``tol * (1 + |ref|)``.
    """
    if not meta.outputs:
        for _ in trace:
            pass
        return True
    vals: dict[ValueId, float] = {}
    if problem is not None:
        for tag, mat in (("Q", problem.Q), ("K", problem.K), ("V", problem.V)):
            for i, row in enumerate(mat.tolist()):
                for c, x in enumerate(row):
                    vals[ValueId(INPUT, tag, i, c)] = x
    evaluate = _Evaluator(meta)
    stored: dict[tuple, tuple[int, float]] = {}
    try:
        for code, vid, ins in trace:
            if code == COMPUTE:
                vals[vid] = evaluate(vid, ins, vals)
            elif code == STORE:
                prev = stored.get(vid.base)
                if prev is None or vid.version >= prev[0]:
                    stored[vid.base] = (vid.version, vals[vid])
    except (KeyError, ValueError, ZeroDivisionError):
        return False
    ref = reference_output(problem, meta)
    for base in meta.outputs:
        got = stored.get(base)
        if got is None:
            return False
        want = float(ref[base[2], base[3]])
        if not abs(got[1] - want) <= tol * (1.0 + abs(want)):
            return False
    return True
