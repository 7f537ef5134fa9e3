"""Multiplicative algorithm for A-optimal design measures.

Each sweep rescales every weight by ``tr(M^-1 V_j M^-1) / tr(M^-1)``.  The
sweep stops once no block has a directional-derivative excess above ``tol``,
which certifies the criterion value to within ``tol`` of the optimum.

With ``binary_first`` the iteration is run on the binary blocks only, and the
result is checked against the full catalog.  If some nonbinary block violates
the certificate the iteration restarts from the uniform measure on the full
catalog.  A zero weight is a fixed point of the update, so warm-starting from
the binary solution could never move mass onto nonbinary blocks.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from .design import (
    Block,
    BlockCatalog,
    DesignMeasure,
    ProblemSpec,
    enumerate_blocks,
    moment_array,
)
from .errors import Inestimable, MaxItersExceeded, SingularMatrix
from .numerics import inverse_array

logger = logging.getLogger(__name__)

PHASE_BINARY = "binary-sufficient"
PHASE_RESTART = "full-restart"
PHASE_FULL = "full"

IterationCallback = Callable[[int, np.ndarray, float], None]


@dataclass(frozen=True)
class OptimizerConfig:
    tol: float = 1e-10
    max_iters: int = 1_000_000
    binary_first: bool = True
    report_prune: float = 1e-6

    def __post_init__(self):
        if not 0.0 < self.tol < 1.0:
            raise ValueError(f"tol must lie in (0, 1), got {self.tol}")
        if self.max_iters < 1:
            raise ValueError(f"max_iters must be >= 1, got {self.max_iters}")
        if self.report_prune < 0:
            raise ValueError("report_prune must be nonnegative")


@dataclass(frozen=True, eq=False)
class OptimizationReport:
    """Terminal measure of a certified run.

    ``max_violation`` is always taken over the full catalog, whichever
    catalog the iteration ran on.  ``max_ascent`` is the largest single-sweep
    increase of the criterion seen during the run (nonpositive when every
    sweep descended).
    """

    measure: DesignMeasure
    phi: float
    iterations: int
    max_violation: float
    worst_block: Block
    phase: str
    max_ascent: float
    binary_violation: Optional[float] = None
    report_prune: float = 1e-6

    @property
    def spec(self) -> ProblemSpec:
        return self.measure.spec

    def support(self) -> list[tuple[Block, float]]:
        return self.measure.support(self.report_prune)


def _sweep_quantities(catalog: BlockCatalog, weights: np.ndarray) -> tuple[float, np.ndarray]:
    """Return ``phi`` and the per-block sandwich traces for one sweep."""
    try:
        inv = inverse_array(moment_array(catalog, weights))
    except SingularMatrix as exc:
        raise Inestimable("moment matrix is singular") from exc
    phi = float(np.trace(inv))
    sandwich = catalog.V_flat @ (inv @ inv).ravel()
    return phi, sandwich


def multiplicative_step(measure: DesignMeasure) -> DesignMeasure:
    phi, sandwich = _sweep_quantities(measure.catalog, measure.weights)
    return DesignMeasure(measure.catalog, measure.weights * sandwich / phi)


def certificate(measure: DesignMeasure, full_catalog: BlockCatalog | None = None) -> tuple[float, int]:
    """Largest ``tr(M^-1 V_j M^-1) - tr(M^-1)`` over ``full_catalog`` and its index.

    The measure may live on a sub-catalog; its moment matrix is the same on
    either.  Ties go to the lowest index.
    """
    if full_catalog is None:
        full_catalog = measure.catalog
    if full_catalog.spec != measure.spec:
        raise ValueError("catalogs belong to different (v, k)")
    try:
        inv = inverse_array(moment_array(measure.catalog, measure.weights))
    except SingularMatrix as exc:
        raise Inestimable("moment matrix is singular") from exc
    phi = float(np.trace(inv))
    excess = full_catalog.V_flat @ (inv @ inv).ravel() - phi
    worst = int(np.argmax(excess))
    return float(excess[worst]), worst


def _iterate(
    catalog: BlockCatalog,
    config: OptimizerConfig,
    callback: Optional[IterationCallback] = None,
) -> tuple[np.ndarray, float, int, float, np.ndarray]:
    """Run the update from the uniform measure on ``catalog`` until certified there.

    Returns (weights, phi, sweeps, max_ascent, excess) where ``excess`` holds
    the terminal per-block certificate values on ``catalog``.
    """
    p = np.full(len(catalog), 1.0 / len(catalog))
    prev_phi = np.inf
    max_ascent = -np.inf
    for it in range(config.max_iters + 1):
        phi, sandwich = _sweep_quantities(catalog, p)
        if it > 0:
            max_ascent = max(max_ascent, phi - prev_phi)
        prev_phi = phi
        if callback is not None:
            callback(it, p, phi)
        excess = sandwich - phi
        if float(np.max(excess)) <= config.tol:
            return p, phi, it, max_ascent, excess
        if it == config.max_iters:
            break
        p = p * sandwich / phi
    raise MaxItersExceeded(
        f"no certificate within {config.max_iters} sweeps "
        f"(v={catalog.spec.v}, k={catalog.spec.k}, phi={prev_phi:.10g})"
    )


def optimize(
    spec: ProblemSpec,
    config: OptimizerConfig | None = None,
    callback: Optional[IterationCallback] = None,
) -> OptimizationReport:
    """Certified A-optimal design measure for ``spec``.

    ``callback(iteration, weights, phi)`` sees every iterate, in both phases.
    """
    config = config or OptimizerConfig()
    full = enumerate_blocks(spec, binary_only=False)
    binary_violation = None
    sweeps = 0
    ascent = -np.inf

    if config.binary_first:
        binary = enumerate_blocks(spec, binary_only=True)
        p, phi, n, ascent, binary_excess = _iterate(binary, config, callback)
        sweeps += n
        # Binary blocks were certified inside the loop; re-deriving M from the
        # embedded weights reorders the sums and may move them by ~1e-14, so
        # only the nonbinary blocks get a fresh evaluation.
        inv = inverse_array(moment_array(binary, p))
        excess = full.V_flat @ (inv @ inv).ravel() - phi
        excess[[full.position(b) for b in binary]] = binary_excess
        worst = int(np.argmax(excess))
        violation = float(excess[worst])
        measure = DesignMeasure(binary, p).embed(full)
        binary_violation = violation
        logger.info("binary phase: phi=%.10f sweeps=%d full violation=%.3e", phi, n, violation)
        if violation <= config.tol:
            return OptimizationReport(
                measure=measure,
                phi=phi,
                iterations=sweeps,
                max_violation=violation,
                worst_block=full[worst],
                phase=PHASE_BINARY,
                max_ascent=ascent,
                binary_violation=binary_violation,
                report_prune=config.report_prune,
            )
        phase = PHASE_RESTART
    else:
        phase = PHASE_FULL

    p, phi, n, full_ascent, excess = _iterate(full, config, callback)
    sweeps += n
    measure = DesignMeasure(full, p)
    worst = int(np.argmax(excess))
    violation = float(excess[worst])
    logger.info("full catalog: phi=%.10f sweeps=%d violation=%.3e", phi, n, violation)
    return OptimizationReport(
        measure=measure,
        phi=phi,
        iterations=sweeps,
        max_violation=violation,
        worst_block=full[worst],
        phase=phase,
        max_ascent=max(ascent, full_ascent),
        binary_violation=binary_violation,
        report_prune=config.report_prune,
    )
