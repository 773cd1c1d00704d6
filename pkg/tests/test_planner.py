import json
import math

import pytest

from attnio.errors import PlanningError
from attnio.featuremap import enumerate_basis, tau
from attnio.planner import (
    KINDS,
    CaseLabel,
    Params,
    analytic_cost,
    applicable_kinds,
    best_kind,
    choose_w,
    classify_case,
    cost_report,
    hypothesis_ok,
    lower_bound,
    plan_geometry,
    GroupedGeometry,
    _int_root,
    tile_widths,
)
from attnio.schedules import GroupPartition, aggregation_steps


def test_classify_examples():
    assert classify_case(4, 2, 256) is CaseLabel.I
    assert classify_case(16, 2, 2048) is CaseLabel.II
    assert classify_case(64, 8, 512) is CaseLabel.IV
    assert classify_case(10, 2, 512) is CaseLabel.III


def test_classify_boundaries():
    # d r = 60 -> Case I needs M >= 240
    assert classify_case(4, 2, 240) is CaseLabel.I
    assert classify_case(4, 2, 239) is not CaseLabel.I
    # ceil((4e)^3) = 1286
    assert classify_case(16, 2, 1286) is CaseLabel.II
    assert classify_case(16, 2, 1285) is CaseLabel.III
    # 16 g^2 = 64 for g = 2
    assert classify_case(16, 2, 65) is CaseLabel.III
    assert classify_case(16, 2, 64) is CaseLabel.IV


def test_classify_is_total():
    labels = {classify_case(d, g, M) for d in range(1, 20) for g in range(1, 6) for M in range(8, 5000, 37)}
    assert labels == set(CaseLabel)


def test_choose_w_examples():
    assert choose_w(2, 4096, 100) == 2
    assert choose_w(2, 32768, 100) == 5
    assert 5 * tau(5, 2) <= 32768 / 4
    assert choose_w(1, 400, 100) == 1
    assert choose_w(2, 32768, 3) == 3


def test_integer_roots_are_exact():
    # 4096 ** (1/3) is 15.999... in floating point
    assert _int_root(4096, 3) == 16.0
    assert _int_root(32768, 3) == 32.0
    assert _int_root(4000, 3) == pytest.approx(4000 ** (1 / 3))


def test_choose_w_infeasible():
    with pytest.raises(PlanningError):
        choose_w(2, 40, 4)


def test_lower_bound_examples():
    assert lower_bound(CaseLabel.I, Params(32, 4, 2, 256)) == 128
    p = Params(64, 16, 2, 2048)
    assert p.r == 153
    assert lower_bound(CaseLabel.II, p) == pytest.approx(64 * 153 * 16 * 2 / 2048 ** (2 / 3), rel=1e-12)
    assert lower_bound(CaseLabel.II, p) == pytest.approx(1942.9788876090768, rel=1e-12)
    p4 = Params(16, 8, 2, 64)
    assert lower_bound(CaseLabel.IV, p4) == pytest.approx(16 * 45 * 8 / 8)
    assert not hypothesis_ok(CaseLabel.IV, p4)
    assert lower_bound(CaseLabel.III, Params(32, 10, 2, 512)) == pytest.approx(32 * 66 * 10 * 2 / 512)
    assert hypothesis_ok(CaseLabel.III, Params(32, 10, 2, 512))


def test_cost_report_json():
    rep = json.loads(cost_report("case1", Params(32, 4, 2, 256)).to_json())
    assert set(rep) == {"case", "schedule", "predicted_io", "lower_bound", "hypothesis_ok"}
    assert rep == {"case": "I", "schedule": "case1", "predicted_io": 632, "lower_bound": 128.0, "hypothesis_ok": True}


# expected counts derived by hand from the tile geometry
HAND_COUNTS = [
    ("case1", Params(32, 4, 2, 256), 4 * 32 * 4 + 2 * 15 * 4),
    ("generic-square", Params(16, 4, 2, 1024), 248 + 316),
    ("generic-wide", Params(16, 8, 2, 128), 1696 + 3432),
    ("keylemma", Params(64, 16, 2, 32768, 5), 32144 + 59792),
    ("case3special", Params(32, 10, 2, 512), 15380 + 29460),
    ("case3special", Params(40, 6, 3, 200), 6552 + 4800 + 4800 + 20 * 6 * 5 + 64 * 6),
    ("flash", Params(256, 8, 2, 1024), 2 * 256 * 8 + 2 * 256 * 8 * 32),
    ("flash", Params(512, 8, 2, 1024), 2 * 512 * 8 + 2 * 512 * 8 * 64),
    ("naive", Params(64, 4, 2, 256), 4096 + 4096 + 3 * 4096 + 4096 + 2048 + 256),
]


@pytest.mark.parametrize("kind,p,want", HAND_COUNTS, ids=[f"{k}-{p.n}-{p.d}-{p.M}" for k, p, _ in HAND_COUNTS])
def test_analytic_hand_counts(kind, p, want):
    assert analytic_cost(kind, p) == want


@pytest.mark.parametrize("kind", KINDS)
def test_analytic_empty_problem(kind):
    p = Params(0, 4, 2, 256)
    if kind in applicable_kinds(p):
        assert analytic_cost(kind, p) == 0


def test_flash_doubling_ratio():
    a = analytic_cost("flash", Params(256, 8, 2, 1024))
    b = analytic_cost("flash", Params(512, 8, 2, 1024))
    assert abs(b / a - 4) <= 0.2


@pytest.mark.parametrize(
    "kind,p",
    [
        ("case1", Params(8, 10, 2, 256)),
        ("case3special", Params(8, 4, 2, 256)),
        ("keylemma", Params(8, 4, 2, 2048, 5)),
        ("keylemma", Params(8, 16, 2, 256, 5)),
        ("generic-square", Params(8, 4, 2, 15)),
        ("flash", Params(8, 8, 2, 31)),
        ("naive", Params(8, 4, 2, 15)),
        ("bogus", Params(8, 4, 2, 256)),
    ],
)
def test_infeasible_geometry(kind, p):
    with pytest.raises(PlanningError):
        plan_geometry(kind, p)


def test_params_validation():
    with pytest.raises(ValueError):
        Params(-1, 4, 2, 64)
    with pytest.raises(ValueError):
        Params(4, 0, 2, 64)


def test_monotone_in_M():
    Ms = list(range(16, 1200, 7)) + [2**k for k in range(11, 17)]
    for kind in KINDS:
        for n, d, g in [(64, 4, 2), (32, 10, 2), (40, 6, 3), (64, 16, 2), (100, 5, 1)]:
            costs = []
            for M in Ms:
                try:
                    costs.append(analytic_cost(kind, Params(n, d, g, M)))
                except PlanningError:
                    pass
            assert costs == sorted(costs, reverse=True), (kind, n, d, g)


@pytest.mark.parametrize("d,g,s", [(6, 3, 1), (10, 2, 1), (9, 2, 2), (7, 3, 2), (5, 3, 1), (2, 3, 1)])
def test_tile_widths_match_assignment(d, g, s):
    geo = GroupedGeometry("keylemma", h=1, tw=1, s=s, m=-(-d // s), chunk=0)
    steps = aggregation_steps(enumerate_basis(d, g), GroupPartition(d, s), g)
    assert tile_widths(geo, d, g) == {st.combo: len(st.columns) for st in steps}


def test_best_kind_prefers_cheapest():
    p = Params(64, 4, 2, 512)
    kind = best_kind(p)
    assert analytic_cost(kind, p) == min(analytic_cost(k, p) for k in applicable_kinds(p, KINDS[:5]))
    with pytest.raises(PlanningError):
        best_kind(Params(8, 40, 4, 16))
