"""Case classification, tile geometry and closed-form I/O counts.

Every schedule generator and ``analytic_cost`` read their tile sizes from the
same geometry record built here, so the closed forms can be compared with
simulated traces for exact integer equality. The closed forms never build a
trace; they tally loads and stores per tile from block counts.

Concrete regime thresholds (the asymptotic statements leave constants free):

* Case I   iff d * r <= M / 4
* Case II  iff M >= ceil((4e)**(g+1))
* Case III iff M > 16 g**2
* Case IV  otherwise
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass
from enum import Enum
from itertools import combinations

from .errors import PlanningError
from .featuremap import tau

APPROX_KINDS = ("case1", "keylemma", "case3special", "generic-square", "generic-wide")
BASELINE_KINDS = ("flash", "naive")
KINDS = APPROX_KINDS + BASELINE_KINDS

FOUR_E = 4.0 * math.e


class CaseLabel(str, Enum):
    I = "I"
    II = "II"
    III = "III"
    IV = "IV"


@dataclass(frozen=True)
class Params:
    n: int
    d: int
    g: int
    M: int
    w: int | None = None

    def __post_init__(self):
        if self.n < 0 or self.d < 1 or self.g < 0 or self.M < 2:
            raise ValueError(f"invalid parameters {self}")

    @property
    def r(self) -> int:
        return tau(self.d, self.g)


def ceil_div(a: int, b: int) -> int:
    return -(-a // b)


def blocks(total: int, size: int) -> list[tuple[int, int]]:
    """(start, length) pairs covering range(total) in chunks of ``size``."""
    return [(s, min(size, total - s)) for s in range(0, total, size)]


def case2_threshold(g: int) -> float:
    try:
        return math.ceil(FOUR_E ** (g + 1))
    except OverflowError:
        return math.inf


def classify_case(d: int, g: int, M: int) -> CaseLabel:
    if d * tau(d, g) <= M / 4:
        return CaseLabel.I
    if M >= case2_threshold(g):
        return CaseLabel.II
    if M > 16 * g * g:
        return CaseLabel.III
    return CaseLabel.IV


def _int_root(M: int, k: int) -> float:
    root = M ** (1.0 / k)
    near = round(root)
    return float(near) if near**k == M else root


def choose_w(g: int, M: int, d: int) -> int:
    """Generating-set size max(g, floor(g * M**(1/(g+1)) / (4e))), at most d."""
    w = max(g, math.floor(g * _int_root(M, g + 1) / FOUR_E))
    w = min(w, d)
    if w < g or w * tau(w, g) > M / 4:
        raise PlanningError(f"no generating set size fits: w={w}, g={g}, M={M}, d={d}")
    return w


# --- geometry records --------------------------------------------------------

@dataclass(frozen=True)
class DenseGeometry:
    """Full Q/K rows per block; U1 columns processed in consecutive blocks of ``b``.

    ``cols_outer`` keeps one H tile resident while sweeping all row blocks
    (used when a single H tile covers every monomial).
    """

    kind: str
    h: int
    tw: int
    b: int
    cols_outer: bool


@dataclass(frozen=True)
class GroupedGeometry:
    """Aggregation over g-subsets of column groups of size ``s``.

    ``chunk`` caps the number of monomials per H sub-tile (0 means no cap).
    """

    kind: str
    h: int
    tw: int
    s: int
    m: int
    chunk: int

    def groups(self, d: int) -> list[range]:
        return [range(i * self.s, min(d, (i + 1) * self.s)) for i in range(self.m)]


@dataclass(frozen=True)
class FlashGeometry:
    kind: str
    br: int
    bc: int


@dataclass(frozen=True)
class NaiveGeometry:
    kind: str
    t: int
    chunk: int


def _require(cond: bool, msg: str):
    if not cond:
        raise PlanningError(msg)


def dense_peak(p: Params, geo: DenseGeometry) -> int:
    h, tw, b = min(geo.h, max(p.n, 1)), min(geo.tw, p.d), min(geo.b, p.r)
    second = h * p.d + b * tw + h * tw + b
    first = h * p.d + h * tw + b * tw + h
    return max(first, second)


def grouped_peak(p: Params, geo: GroupedGeometry) -> int:
    h, tw = min(geo.h, max(p.n, 1)), min(geo.tw, p.d)
    union = min(p.g * geo.s, p.d)
    width = tau(union, p.g)
    if geo.chunk:
        width = min(width, geo.chunk)
    second = h * union + width * tw + h * tw + width
    first = h * union + h * tw + width * tw + h
    return max(first, second)


def flash_peak(p: Params, geo: FlashGeometry) -> int:
    return 2 * geo.br * p.d + 2 * geo.br + 2 * geo.bc * p.d + geo.bc


def plan_geometry(kind: str, p: Params):
    """Tile geometry for ``kind`` or PlanningError if it cannot run within M."""
    M, d, g = p.M, p.d, p.g
    if kind == "case1":
        _require(classify_case(d, g, M) is CaseLabel.I, "case1 needs Case I parameters")
        r = p.r
        c0 = min(1.0, M / (4 * d * r))
        geo = DenseGeometry(kind, h=M // (4 * d), tw=max(1, math.floor(c0 * d)), b=r, cols_outer=True)
        _require(geo.h >= 1 and dense_peak(p, geo) <= M, "case1 tiles do not fit")
        return geo
    if kind in ("generic-square", "generic-wide"):
        if kind == "generic-square":
            t = math.isqrt(M) // 4
            geo = DenseGeometry(kind, h=t, tw=min(t, d), b=t, cols_outer=False)
        else:
            t = M // (4 * d)
            geo = DenseGeometry(kind, h=t, tw=d, b=t, cols_outer=False)
        _require(geo.h >= 1, f"{kind}: tile side is zero for M={M}, d={d}")
        _require(dense_peak(p, geo) <= M, f"{kind}: tiles need {dense_peak(p, geo)} > M={M} slots")
        return geo
    if kind == "keylemma":
        w = p.w if p.w is not None else choose_w(g, M, d)
        _require(1 <= g <= w <= d, f"keylemma needs g <= w <= d (w={w})")
        _require(w * tau(w, g) <= M / 4, f"keylemma needs w*tau(w) <= M/4 (w={w})")
        s = max(1, w // g)
        geo = GroupedGeometry(kind, h=M // (4 * w), tw=min(w, d), s=s, m=ceil_div(d, s), chunk=0)
        _require(geo.h >= 1 and grouped_peak(p, geo) <= M, "keylemma tiles do not fit")
        return geo
    if kind == "case3special":
        _require(classify_case(d, g, M) is CaseLabel.III, "case3special needs Case III parameters")
        _require(1 <= g <= d, "case3special needs g <= d")
        h = M // (4 * g)
        _require(h >= 1, "case3special needs M >= 4g")
        geo = GroupedGeometry(kind, h=h, tw=min(g, d), s=1, m=d, chunk=h)
        _require(grouped_peak(p, geo) <= M, "case3special tiles do not fit")
        return geo
    if kind == "flash":
        _require(M >= 4 * d, "flash needs M >= 4d")
        br = min(M // (4 * d), d)
        bc = (M - 2 * br * d - 2 * br) // (2 * d + 1)
        _require(bc >= 1, f"flash: no room for a key block at M={M}, d={d}")
        return FlashGeometry(kind, br=br, bc=bc)
    if kind == "naive":
        _require(M >= 16, "naive needs M >= 16")
        return NaiveGeometry(kind, t=math.isqrt(M) // 2, chunk=(M - 2) // 2)
    raise PlanningError(f"unknown schedule kind {kind!r}")


# --- closed-form counts ------------------------------------------------------

def _combo_count(m: int, g: int) -> int:
    return math.comb(m, g) if m >= g else 1


def _union_total(geo: GroupedGeometry, d: int, g: int) -> int:
    # every group sits in C(m-1, g-1) of the g-subsets
    if geo.m < g:
        return d
    return math.comb(geo.m - 1, g - 1) * d


def _exact_support_count(sizes: list[int], g: int) -> int:
    """Monomials of degree <= g touching every one of the given groups."""
    k = len(sizes)
    total = 0
    for mask in range(1 << k):
        width = sum(sizes[i] for i in range(k) if mask >> i & 1)
        sign = -1 if (k - bin(mask).count("1")) % 2 else 1
        total += sign * math.comb(width + g, g)
    return total


def tile_widths(geo: GroupedGeometry, d: int, g: int) -> dict[tuple[int, ...], int]:
    """Number of monomials owned by each g-subset of groups, counted by support pattern."""
    sizes = [len(G) for G in geo.groups(d)]
    m = geo.m
    if m < g:
        return {tuple(range(m)): tau(d, g)}
    widths = {}
    for combo in combinations(range(m), g):
        count = 0
        for j in range(g + 1):
            for T in combinations(combo, j):
                pad = [x for x in range(m) if x not in T][: g - j]
                if tuple(sorted(T + tuple(pad))) == combo:
                    count += _exact_support_count([sizes[x] for x in T], g)
        widths[combo] = count
    return widths


def analytic_cost(kind: str, p: Params, geo=None) -> int:
    """Exact loads + stores the schedule for ``kind`` emits on ``p``."""
    if geo is None:
        geo = plan_geometry(kind, p)
    n, d, g = p.n, p.d, p.g
    if n == 0:
        return 0
    if isinstance(geo, DenseGeometry):
        r = p.r
        rb, cb, ab = ceil_div(n, geo.h), ceil_div(d, geo.tw), ceil_div(r, geo.b)
        if geo.cols_outer:
            second = r * d + cb * n * d + n * d
        else:
            second = n * d + rb * r * d + n * d
        first = ab * cb * n * d + ab * n * d + r * d
        return first + second
    if isinstance(geo, GroupedGeometry):
        r = p.r
        rb, cb = ceil_div(n, geo.h), ceil_div(d, geo.tw)
        union = _union_total(geo, d, g)
        second = cb * n * union + rb * r * d + n * d
        first = cb * n * union + _combo_count(geo.m, g) * n * d
        if geo.chunk:
            strips = ceil_div(n, geo.h)
            for width in tile_widths(geo, d, g).values():
                spilled = ceil_div(width, geo.chunk) > 1
                first += width * d * (2 * strips - 1 if spilled else 1)
        else:
            first += r * d
        return first + second
    if isinstance(geo, FlashGeometry):
        return 2 * n * d + 2 * n * d * ceil_div(n, geo.br)
    if isinstance(geo, NaiveGeometry):
        t = geo.t
        scores = 2 * d * n * ceil_div(n, t) + n * n
        softmax = 3 * n * n
        values = ceil_div(d, t) * n * n + ceil_div(n, t) * n * d + n * d
        return scores + softmax + values
    raise PlanningError(f"unknown geometry {geo!r}")


def lower_bound(case: CaseLabel, p: Params) -> float:
    """Regime lower bound evaluated with constant 1 (asymptotic; reporting only)."""
    n, d, g, M = p.n, p.d, p.g, p.M
    case = CaseLabel(case)
    if case is CaseLabel.I:
        return float(n * d)
    r = p.r
    if case is CaseLabel.II:
        return n * r * d * g / M ** (g / (g + 1))
    if case is CaseLabel.III:
        return n * r * d * g / M
    return n * r * d / math.sqrt(M)


def hypothesis_ok(case: CaseLabel, p: Params) -> bool:
    """Cases III and IV state their lower bounds only for d >= 5g."""
    return CaseLabel(case) in (CaseLabel.I, CaseLabel.II) or p.d >= 5 * p.g


@dataclass(frozen=True)
class CostReport:
    schedule: str
    case: str
    predicted_io: int
    lower_bound: float
    hypothesis_ok: bool

    def to_json(self) -> str:
        return json.dumps(asdict(self))


def cost_report(kind: str, p: Params) -> CostReport:
    case = classify_case(p.d, p.g, p.M)
    return CostReport(
        schedule=kind,
        case=case.value,
        predicted_io=analytic_cost(kind, p),
        lower_bound=lower_bound(case, p),
        hypothesis_ok=hypothesis_ok(case, p),
    )


def applicable_kinds(p: Params, kinds=KINDS) -> list[str]:
    out = []
    for kind in kinds:
        try:
            plan_geometry(kind, p)
        except PlanningError:
            continue
        out.append(kind)
    return out


def best_kind(p: Params) -> str:
    """Approximate-attention schedule with the smallest predicted I/O."""
    options = applicable_kinds(p, APPROX_KINDS)
    if not options:
        raise PlanningError(f"no approximate-attention schedule fits {p}")
    return min(options, key=lambda k: analytic_cost(k, p))
