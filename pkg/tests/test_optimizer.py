import math

import numpy as np
import pytest

from consecdesign.design import DesignMeasure, ProblemSpec, criterion, enumerate_blocks
from consecdesign.errors import Inestimable, MaxItersExceeded
from consecdesign.optimizer import (
    PHASE_BINARY,
    PHASE_FULL,
    PHASE_RESTART,
    OptimizerConfig,
    certificate,
    multiplicative_step,
    optimize,
)

V3 = ProblemSpec(3, 2)
# closed form for v=3, k=2: masses a, 1-2a, a with a = (3 - sqrt 3)/3, phi = 4 + 2 sqrt 3
A_V3 = (3 - math.sqrt(3)) / 3
PHI_V3 = 4 + 2 * math.sqrt(3)


def grid_min_phi_v3(step: float) -> float:
    """Brute force over the 2-simplex; V_j are the closed forms for v=3."""
    n = round(1 / step)
    i, j = np.meshgrid(np.arange(n + 1), np.arange(n + 1), indexing="ij")
    keep = i + j <= n
    p12, p13 = i[keep] * step, j[keep] * step
    p23 = 1 - p12 - p13
    # M = 1/2 [[p12 + p13, p13], [p13, p13 + p23]]
    a, b, c = (p12 + p13) / 2, p13 / 2, (p13 + p23) / 2
    det = a * c - b * b
    ok = det > 1e-15
    return float(((a + c)[ok] / det[ok]).min())


def grid_min_phi_v4(step: float) -> float:
    """Brute force for v=4, k=2 over reversal-symmetric measures.

    The criterion is convex and invariant under i -> v+1-i, so averaging any
    measure with its mirror image never increases it; the minimum over the
    symmetric slice is the global minimum.  The slice is parameterised by
    p12 = p34 = a, p13 = p24 = b, p14 = c, p23 = d.
    """
    cat = enumerate_blocks(ProblemSpec(4, 2))
    V = {blk.treatments: cat.V[j] for j, blk in enumerate(cat)}
    n = round(1 / step)
    best = np.inf
    for A in range(n // 2 + 1):
        Bs = np.arange(0, (n - 2 * A) // 2 + 1)
        for B in Bs:
            rest = n - 2 * A - 2 * B
            C = np.arange(rest + 1)
            D = rest - C
            a, b, c, d = A * step, B * step, C * step, D * step
            M = (
                a * (V[(1, 2)] + V[(3, 4)])
                + b * (V[(1, 3)] + V[(2, 4)])
                + c[:, None, None] * V[(1, 4)]
                + d[:, None, None] * V[(2, 3)]
            )
            det = np.linalg.det(M)
            ok = det > 1e-12
            if ok.any():
                phi = np.trace(np.linalg.inv(M[ok]), axis1=1, axis2=2)
                best = min(best, float(phi.min()))
    return best


def test_closed_form_v3(optimal):
    rep = optimal(3, 2).report
    assert rep.phi == pytest.approx(PHI_V3, abs=1e-9)
    w = dict((b.treatments, x) for b, x in rep.measure.support())
    assert w[(1, 2)] == pytest.approx(A_V3, abs=1e-6)
    assert w[(2, 3)] == pytest.approx(A_V3, abs=1e-6)
    assert w[(1, 3)] == pytest.approx(1 - 2 * A_V3, abs=1e-6)


def test_grid_oracle_v3(optimal):
    rep = optimal(3, 2).report
    grid = grid_min_phi_v3(1e-3)
    assert abs(grid - rep.phi) <= 1e-3
    # the certified value cannot beat any feasible measure by more than tol
    assert rep.phi <= grid + 1e-10


def test_step_preserves_sum_and_symmetry():
    cat = enumerate_blocks(V3)
    m1 = multiplicative_step(DesignMeasure.uniform(cat))
    assert abs(m1.weights.sum() - 1) <= 1e-13
    assert m1.weights[0] == pytest.approx(m1.weights[2], abs=1e-15)
    assert criterion(m1) < 8.0


def test_step_fixed_point_at_optimum():
    cat = enumerate_blocks(V3)
    m = DesignMeasure(cat, [A_V3, 1 - 2 * A_V3, A_V3])
    np.testing.assert_allclose(multiplicative_step(m).weights, m.weights, atol=1e-12)


def test_step_requires_estimable_measure():
    cat = enumerate_blocks(V3)
    with pytest.raises(Inestimable):
        multiplicative_step(DesignMeasure.point_mass(cat, (1, 2)))


def test_certificate_examples():
    cat = enumerate_blocks(V3)
    table = DesignMeasure.from_support(cat, {(1, 2): 0.4226, (1, 3): 0.1548, (2, 3): 0.4226}, normalize=True)
    viol, _ = certificate(table, cat)
    # Four printed decimals leave each mass up to 5e-5 off the optimum, and the
    # certificate magnifies that ~60x; bound it by the worst such perturbation.
    slack = max(
        certificate(DesignMeasure(cat, [A_V3 + da, 1 - 2 * (A_V3 + da), A_V3 + da]), cat)[0]
        for da in (-5e-5, 5e-5)
    )
    assert 0 < viol <= slack
    viol, worst = certificate(DesignMeasure.uniform(cat), cat)
    assert viol > 0
    # uniform over-weights {1,3}; the deficient blocks tie and the lower index wins
    assert worst == 0


def test_certificate_of_sub_catalog_measure(optimal):
    rep = optimal(10, 5).report
    full = enumerate_blocks(ProblemSpec(10, 5))
    viol, _ = certificate(rep.measure, full)
    assert viol <= 1e-10


def test_optimizer_config_validation():
    with pytest.raises(ValueError):
        OptimizerConfig(tol=0)
    with pytest.raises(ValueError):
        OptimizerConfig(max_iters=0)


def test_max_iters_exceeded():
    with pytest.raises(MaxItersExceeded):
        optimize(ProblemSpec(7, 5), OptimizerConfig(max_iters=50))


def test_phases(optimal):
    assert optimal(3, 2).report.phase == PHASE_BINARY
    assert optimal(10, 5).report.phase == PHASE_BINARY
    rep = optimal(7, 5).report
    assert rep.phase == PHASE_RESTART
    assert rep.binary_violation > 1e-10


def test_binary_first_off_agrees():
    with_bf = optimize(ProblemSpec(6, 3))
    without = optimize(ProblemSpec(6, 3), OptimizerConfig(binary_first=False))
    assert without.phase == PHASE_FULL
    assert without.phi == pytest.approx(with_bf.phi, abs=1e-9)


def test_grid_oracle_v4(optimal):
    rep = optimal(4, 2).report
    grid = grid_min_phi_v4(2e-3)
    assert abs(grid - rep.phi) <= 5e-3
    assert rep.phi <= grid + 1e-10


def test_report_support_is_pruned(optimal):
    rep = optimal(7, 5).report
    assert all(w > rep.report_prune for _, w in rep.support())
    blocks = {b.treatments for b, _ in rep.support()}
    assert (1, 2, 2, 3, 4) in blocks and (4, 5, 6, 6, 7) in blocks
