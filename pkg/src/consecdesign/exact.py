"""From design measures to exact designs.

Rounding ``f_j = [c * p_j]`` is a nondecreasing step function of the
multiplier ``c``; it only changes at the breakpoints ``(m + 1/2) / p_j``.
Enumerating those breakpoints settles exactly which block totals ``b`` are
reachable, which a grid over ``c`` cannot do (some intervals are narrower
than 1e-4).
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .design import (
    Block,
    DesignMeasure,
    ExactDesign,
    ProblemSpec,
    exact_W,
)
from .errors import EmptyDesign, Inestimable, NoDeletableBlock, NotNested, SingularMatrix
from .numerics import inverse_array

__all__ = [
    "ExactDesign",
    "MultiplierResult",
    "NestedDesign",
    "round_measure",
    "find_multiplier",
    "design_criterion",
    "efficiency",
    "nest_reduce",
    "nested_sequence",
    "verify_chain",
    "repair_chain",
]

DUST = 1e-9
# Efficiencies this close count as tied (mirror-image deletions differ by roundoff).
EFFICIENCY_TIE = 1e-12
# Breakpoints closer than this (relative) are one breakpoint.  Mirror-image
# blocks have equal masses up to roundoff, and their breakpoints would
# otherwise bracket a spurious sliver interval ~1e-14 wide.
BREAKPOINT_MERGE_RTOL = 1e-9


def _clean_weights(measure: DesignMeasure) -> np.ndarray:
    w = np.array(measure.weights, dtype=float)
    w[w < DUST] = 0.0
    return w


def _round_counts(w: np.ndarray, c: float) -> np.ndarray:
    # half rounds up
    return np.floor(c * w + 0.5).astype(np.int64)


def _design_from_counts(measure: DesignMeasure, counts: np.ndarray) -> ExactDesign:
    nz = np.flatnonzero(counts)
    if nz.size == 0:
        raise EmptyDesign("every block rounds to zero; increase the multiplier")
    cat = measure.catalog
    return ExactDesign(measure.spec, tuple((cat[j], int(counts[j])) for j in nz))


def round_measure(measure: DesignMeasure, c: float) -> ExactDesign:
    """Exact design with ``f_j`` the integer nearest to ``c * p_j``."""
    if not c > 0:
        raise ValueError(f"multiplier must be positive, got {c}")
    return _design_from_counts(measure, _round_counts(_clean_weights(measure), c))


@dataclass(frozen=True, eq=False)
class MultiplierResult:
    """Outcome of a multiplier search for ``b`` blocks.

    When ``achievable`` is false, ``lower_*`` and ``upper_*`` describe the
    achievable totals on either side of the jump over ``b``; ``jump_c`` is the
    breakpoint where the total skips past ``b``.  ``lower_b`` is None when
    nothing below ``b`` is reachable.
    """

    b: int
    achievable: bool
    c: Optional[float] = None
    design: Optional[ExactDesign] = None
    lower_b: Optional[int] = None
    lower_c: Optional[float] = None
    lower_design: Optional[ExactDesign] = None
    upper_b: Optional[int] = None
    upper_c: Optional[float] = None
    upper_design: Optional[ExactDesign] = None
    jump_c: Optional[float] = None


def _breakpoints(w: np.ndarray, c_max: float) -> np.ndarray:
    points = []
    for pj in w[w > 0]:
        m = np.arange(0, int(np.floor(c_max * pj - 0.5)) + 1)
        points.append((m + 0.5) / pj)
    if not points:
        return np.empty(0)
    raw = np.sort(np.concatenate(points))
    merged = [raw[0]]
    for x in raw[1:]:
        if x - merged[-1] > BREAKPOINT_MERGE_RTOL * x:
            merged.append(x)
    return np.array(merged)


def find_multiplier(measure: DesignMeasure, b: int) -> MultiplierResult:
    """Search for a multiplier whose rounding yields exactly ``b`` blocks.

    The returned multiplier is the midpoint of the (unique) interval of
    ``c`` values producing ``b`` blocks; interval midpoints keep well clear of
    rounding ties.
    """
    if b < 1:
        raise ValueError(f"b must be >= 1, got {b}")
    w = _clean_weights(measure)
    if not (w > 0).any():
        raise ValueError("measure has no weight above the dust threshold")
    c_max = (b + 1) / w.max()
    bps = _breakpoints(w, c_max)
    # Intervals (0, bp0), (bp0, bp1), ..., (bp_last, upper); the total is
    # constant on each, evaluated at the midpoint.
    upper = max(c_max, bps[-1] * (1 + 1e-6)) if bps.size else c_max
    edges = np.concatenate(([0.0], bps, [upper]))
    mids = (edges[:-1] + edges[1:]) / 2.0
    totals = np.array([_round_counts(w, c).sum() for c in mids])

    hit = np.flatnonzero(totals == b)
    if hit.size:
        c = float(mids[hit[0]])
        return MultiplierResult(
            b=b, achievable=True, c=c, design=_design_from_counts(measure, _round_counts(w, c))
        )

    above = int(np.flatnonzero(totals > b)[0])
    below = above - 1
    lower_b = int(totals[below])
    lower_c = float(mids[below]) if lower_b > 0 else None
    upper_c = float(mids[above])
    return MultiplierResult(
        b=b,
        achievable=False,
        lower_b=lower_b if lower_b > 0 else None,
        lower_c=lower_c,
        lower_design=round_measure(measure, lower_c) if lower_c is not None else None,
        upper_b=int(totals[above]),
        upper_c=upper_c,
        upper_design=round_measure(measure, upper_c),
        jump_c=float(edges[above]),
    )


def design_criterion(design: ExactDesign) -> float:
    """``tr M(p_exact)^-1 = b * tr W^-1`` for an exact design."""
    W = exact_W(design)
    return design.b * float(np.trace(inverse_array(W.entries)))


def efficiency(design: ExactDesign, optimal_phi: float) -> float:
    """A-efficiency relative to the optimal approximate criterion value."""
    if not optimal_phi > 0:
        raise ValueError("optimal_phi must be positive")
    return optimal_phi / design_criterion(design)


def _safe_efficiency(design: ExactDesign, optimal_phi: float) -> float:
    try:
        return efficiency(design, optimal_phi)
    except (Inestimable, SingularMatrix):
        return 0.0


def nest_reduce(
    larger: ExactDesign,
    smaller_reference: Optional[ExactDesign],
    target_b: int,
    optimal_phi: float,
) -> ExactDesign:
    """Delete blocks from ``larger`` one at a time until ``target_b`` remain.

    Only blocks held in excess of ``smaller_reference`` are candidates; each
    step removes the one whose deletion leaves the most efficient design,
    ties going to the lexicographically smallest block.
    """
    if target_b > larger.b:
        raise ValueError(f"target {target_b} exceeds the larger design's {larger.b} blocks")
    if smaller_reference is not None:
        if smaller_reference.spec != larger.spec:
            raise NotNested("designs belong to different (v, k)")
        if not larger.contains(smaller_reference):
            raise NotNested("reference design is not contained in the larger design")
        if target_b < smaller_reference.b:
            raise ValueError(
                f"target {target_b} is below the reference design's {smaller_reference.b} blocks"
            )
        floor = smaller_reference.counts()
    else:
        floor = {}

    current = larger.counts()
    for _ in range(larger.b - target_b):
        best = None
        for key in sorted(current):
            if current[key] <= floor.get(key, 0):
                continue
            trial = dict(current)
            trial[key] -= 1
            eff = _safe_efficiency(ExactDesign.from_counts(larger.spec, trial), optimal_phi)
            if eff > 0 and (best is None or eff > best[0] + EFFICIENCY_TIE):
                best = (eff, key)
        if best is None:
            raise NoDeletableBlock(
                f"no block can be removed from a {sum(current.values())}-block design "
                "without breaking nesting or estimability"
            )
        current[best[1]] -= 1
    return ExactDesign.from_counts(larger.spec, current)


@dataclass(frozen=True, eq=False)
class NestedDesign:
    """One link of a nested chain.

    ``source`` is "rounded" (direct rounding at multiplier ``c``), "reduced"
    (deletion from the next achievable size) or "repaired" (rebuilt to restore
    containment of its predecessor).
    """

    design: ExactDesign
    efficiency: float
    source: str
    c: Optional[float] = None

    @property
    def b(self) -> int:
        return self.design.b


def verify_chain(designs: Sequence[ExactDesign]) -> bool:
    return all(nxt.contains(prev) for prev, nxt in zip(designs, designs[1:]))


def _entrywise_max(a: ExactDesign, b: ExactDesign) -> ExactDesign:
    ca, cb = a.counts(), b.counts()
    return ExactDesign.from_counts(a.spec, {t: max(ca.get(t, 0), cb.get(t, 0)) for t in ca | cb})


def nested_sequence(
    measure: DesignMeasure, b_targets: Sequence[int], optimal_phi: float
) -> list[NestedDesign]:
    """Efficient exact designs for ascending block budgets, each nested in the next."""
    targets = [int(b) for b in b_targets]
    if not targets:
        raise ValueError("no targets given")
    if any(b2 <= b1 for b1, b2 in zip(targets, targets[1:])):
        raise ValueError(f"targets must be strictly ascending: {targets}")

    links: list[NestedDesign] = []
    for b in targets:
        res = find_multiplier(measure, b)
        if res.achievable:
            links.append(NestedDesign(res.design, efficiency(res.design, optimal_phi), "rounded", res.c))
            continue
        design = nest_reduce(res.upper_design, res.lower_design, b, optimal_phi)
        links.append(NestedDesign(design, efficiency(design, optimal_phi), "reduced"))

    repaired = repair_chain([link.design for link in links], optimal_phi)
    for i, design in enumerate(repaired):
        if design is not links[i].design:
            links[i] = NestedDesign(design, efficiency(design, optimal_phi), "repaired")
    return links


def repair_chain(designs: Sequence[ExactDesign], optimal_phi: float) -> list[ExactDesign]:
    """Restore containment along a chain, keeping each design's block count.

    A design that does not contain its predecessor is replaced by the
    entrywise maximum of the two, trimmed back to its own size by
    ``nest_reduce`` with the predecessor as the floor.  Designs that already
    nest are returned as the same objects.
    """
    out = list(designs)
    for i in range(1, len(out)):
        prev, cur = out[i - 1], out[i]
        if cur.contains(prev):
            continue
        if cur.b < prev.b:
            raise NotNested(f"a {cur.b}-block design cannot contain a {prev.b}-block one")
        merged = _entrywise_max(prev, cur)
        if merged.b > cur.b:
            merged = nest_reduce(merged, prev, cur.b, optimal_phi)
        out[i] = merged
    if not verify_chain(out):
        raise NotNested("could not build a nested chain")
    return out
