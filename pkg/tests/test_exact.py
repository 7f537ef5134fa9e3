import numpy as np
import pytest

import reference_data as ref
from consecdesign.design import DesignMeasure, ExactDesign, ProblemSpec, enumerate_blocks
from consecdesign.errors import EmptyDesign, Inestimable, NotNested
from consecdesign.exact import (
    efficiency,
    find_multiplier,
    nest_reduce,
    nested_sequence,
    repair_chain,
    round_measure,
    verify_chain,
)


def _design(v, k, blocks):
    return ExactDesign.from_blocks(ProblemSpec(v, k), blocks)


def _table_measure(v, k, masses):
    return DesignMeasure.from_support(enumerate_blocks(ProblemSpec(v, k)), masses, normalize=True)


def scan_totals(measure, c_max, step):
    """Dense grid over the multiplier: the set of block totals it ever hits."""
    w = measure.weights[measure.weights >= 1e-9]
    cs = np.arange(step, c_max, step)
    return set(np.floor(np.outer(cs, w) + 0.5).sum(axis=1).astype(int))


def test_round_point_mass():
    cat = enumerate_blocks(ProblemSpec(5, 3))
    d = round_measure(DesignMeasure.point_mass(cat, (1, 2, 3)), 5)
    assert d.counts() == {(1, 2, 3): 5}
    with pytest.raises(EmptyDesign):
        round_measure(DesignMeasure.uniform(cat), 1.0)


def test_round_half_up():
    cat = enumerate_blocks(ProblemSpec(3, 2))
    m = DesignMeasure(cat, [0.25, 0.5, 0.25])
    assert round_measure(m, 2).counts() == {(1, 2): 1, (1, 3): 1, (2, 3): 1}


def test_example1_rounding(optimal):
    rep = optimal(6, 2).report
    d = round_measure(rep.measure, 14.2)
    assert d == _design(6, 2, ref.EX1)
    assert efficiency(d, rep.phi) == pytest.approx(0.9650, abs=2e-4)


def test_example2_rounding(optimal):
    rep = optimal(7, 5).report
    d = round_measure(rep.measure, 9)
    assert d == _design(7, 5, ref.EX2)


def test_example3_rounding_on_published_masses():
    d = round_measure(_table_measure(12, 4, ref.EXAMPLE3_MASSES), 12.3)
    assert d == _design(12, 4, ref.EX3)


def test_example3_rounding_on_computed_measure(optimal):
    d = round_measure(optimal(12, 4).report.measure, 12.3)
    assert d == _design(12, 4, ref.EX3)


@pytest.mark.parametrize(
    "masses, v, k, c_lo, c_hi, lo_blocks, hi_blocks",
    [
        (ref.TABLE3_V9, 9, 4, 13.2978, 13.2979, ref.EX5_D9, ref.EX5_D11),
        (ref.TABLE4_V10, 10, 5, 14.1376, 14.1377, ref.EX6_D12, ref.EX6_D14),
    ],
)
def test_published_multipliers_straddle_a_jump(masses, v, k, c_lo, c_hi, lo_blocks, hi_blocks):
    # The printed multipliers were derived from the 4-decimal table masses.
    m = _table_measure(v, k, masses)
    assert round_measure(m, c_lo) == _design(v, k, lo_blocks)
    assert round_measure(m, c_hi) == _design(v, k, hi_blocks)


def test_find_multiplier_point_mass():
    cat = enumerate_blocks(ProblemSpec(4, 2))
    res = find_multiplier(DesignMeasure.point_mass(cat, (2, 3)), 7)
    assert res.achievable
    assert res.design.counts() == {(2, 3): 7}
    assert round(res.c * 1.0) == 7


@pytest.mark.parametrize("v,k,b,lo,hi", [(6, 3, 11, 10, 12), (9, 4, 10, 9, 11), (10, 5, 13, 12, 14)])
def test_find_multiplier_gaps(optimal, v, k, b, lo, hi):
    m = optimal(v, k).report.measure
    res = find_multiplier(m, b)
    assert not res.achievable
    assert (res.lower_b, res.upper_b) == (lo, hi)
    assert res.lower_c < res.jump_c < res.upper_c
    assert res.lower_design.b == lo and res.upper_design.b == hi
    # independent check: no multiplier on a fine grid reaches b
    assert b not in scan_totals(m, res.upper_c + 1, 1e-4)


@pytest.mark.parametrize("v,k", [(6, 2), (6, 3), (9, 4), (10, 5), (7, 5)])
def test_breakpoint_search_matches_dense_scan(optimal, v, k):
    m = optimal(v, k).report.measure
    seen = scan_totals(m, 40.0, 2e-4)
    for b in range(1, 30):
        res = find_multiplier(m, b)
        if b in seen:
            assert res.achievable, b
        if res.achievable:
            assert res.design.b == b
            assert round_measure(m, res.c) == res.design


def test_jump_multipliers_near_published(optimal):
    # Published multipliers come from 4-decimal masses; ours from full precision.
    for (v, k, b), published in {(6, 3, 11): 10.69285, (9, 4, 10): 13.29785, (10, 5, 13): 14.13765}.items():
        res = find_multiplier(optimal(v, k).report.measure, b)
        assert res.jump_c == pytest.approx(published, rel=1e-3)


def test_monotone_rounding(optimal):
    m = optimal(9, 4).report.measure
    prev = None
    for c in np.linspace(5, 40, 400):
        d = round_measure(m, c)
        if prev is not None:
            assert d.contains(prev)
        prev = d


def test_rounding_support_subset(optimal):
    m = optimal(10, 5).report.measure
    support = {b.treatments for b, _ in m.support(1e-9)}
    for c in (10, 14.1, 18, 55.5):
        assert set(round_measure(m, c).counts()) <= support


def test_efficiency_examples(optimal):
    d = _design(3, 2, [(1, 2), (1, 3), (2, 3)])
    assert efficiency(d, optimal(3, 2).report.phi) == pytest.approx(7.4641016 / 8, abs=1e-7)


def test_efficiency_limit(optimal):
    rep = optimal(7, 5).report
    d = round_measure(rep.measure, 1e6)
    assert efficiency(d, rep.phi) == pytest.approx(1.0, abs=1e-4)
    assert efficiency(d, rep.phi) <= 1 + 1e-10


def test_nest_reduce_examples(optimal):
    phi = optimal(6, 3).report.phi
    d12, d10 = _design(6, 3, ref.EX4_D12), _design(6, 3, ref.EX4_D10)
    d11 = nest_reduce(d12, d10, 11, phi)
    assert d11 in [_design(6, 3, opt) for opt in ref.EX4_D11_OPTIONS]
    assert efficiency(d11, phi) == pytest.approx(0.9578, abs=2e-4)
    assert nest_reduce(d12, d10, 12, phi) == d12

    phi = optimal(10, 5).report.phi
    d14, d12 = _design(10, 5, ref.EX6_D14), _design(10, 5, ref.EX6_D12)
    d13 = nest_reduce(d14, d12, 13, phi)
    assert d13 in [_design(10, 5, opt) for opt in ref.EX6_D13_OPTIONS]
    assert efficiency(d13, phi) == pytest.approx(0.9911, abs=2e-4)


def test_nest_reduce_rejects_non_nested(optimal):
    phi = optimal(6, 3).report.phi
    with pytest.raises(NotNested):
        nest_reduce(_design(6, 3, ref.EX4_D10), _design(6, 3, [(1, 5, 6)]), 9, phi)


@pytest.mark.parametrize(
    "v,k,targets,designs,effs",
    [
        (10, 5, [10, 13, 16], [ref.EX6_D10, ref.EX6_D13_OPTIONS, ref.EX6_D16], [0.9951, 0.9911, 0.9942]),
        (9, 4, [9, 10, 11], [ref.EX5_D9, ref.EX5_D10_OPTIONS, ref.EX5_D11], [0.9902, 0.9777, 0.9731]),
        (6, 3, [10, 11, 12], [ref.EX4_D10, ref.EX4_D11_OPTIONS, ref.EX4_D12], [0.9547, 0.9578, 0.9785]),
    ],
)
def test_nested_sequence_examples(optimal, v, k, targets, designs, effs):
    rep = optimal(v, k).report
    links = nested_sequence(rep.measure, targets, rep.phi)
    assert [link.b for link in links] == targets
    assert verify_chain([link.design for link in links])
    for link, expected, eff in zip(links, designs, effs):
        options = expected if isinstance(expected[0], list) else [expected]
        assert link.design in [_design(v, k, o) for o in options]
        assert link.efficiency == pytest.approx(eff, abs=2e-4)


def test_nested_sequence_single_target(optimal):
    rep = optimal(7, 5).report
    (link,) = nested_sequence(rep.measure, [9], rep.phi)
    assert link.source == "rounded"
    assert link.design == round_measure(rep.measure, link.c)


def test_nested_sequence_chains_everywhere(optimal):
    for (v, k) in [(6, 2), (6, 3), (8, 4), (9, 4), (10, 5)]:
        rep = optimal(v, k).report
        targets = list(range(v, 3 * v, 3))
        links = nested_sequence(rep.measure, targets, rep.phi)
        assert [link.b for link in links] == targets
        assert verify_chain([link.design for link in links])
        assert all(link.efficiency <= 1 + 1e-10 for link in links)


def test_nested_sequence_propagates_inestimable(optimal):
    # four 2-blocks cannot connect six treatments
    rep = optimal(6, 2).report
    with pytest.raises(Inestimable):
        nested_sequence(rep.measure, [4, 8], rep.phi)


def test_repair_chain():
    spec = ProblemSpec(4, 2)
    small = ExactDesign.from_blocks(spec, [(1, 2), (1, 2), (3, 4)])
    big = ExactDesign.from_blocks(spec, [(1, 3), (2, 4), (2, 3), (1, 4)])
    fixed = repair_chain([small, big], 16.2195)
    assert fixed[0] is small
    assert fixed[1].b == 4
    assert fixed[1].contains(small)
    assert verify_chain(fixed)
    ok = ExactDesign.from_blocks(spec, [(1, 2), (1, 2), (3, 4), (2, 3)])
    assert repair_chain([small, ok], 16.2195)[1] is ok
    with pytest.raises(NotNested):
        repair_chain([big, small], 16.2195)


def test_targets_must_ascend(optimal):
    rep = optimal(6, 3).report
    with pytest.raises(ValueError):
        nested_sequence(rep.measure, [12, 10], rep.phi)
