"""Monte Carlo check of the fixed-effects block model.

Observations follow ``y = tau[treatment] + beta[block] + eps`` with i.i.d.
normal errors.  Block effects are absorbed by centering within blocks, which
leaves the reduced normal equations ``C tau = Q``; the consecutive contrasts
are then recovered as ``L tau_hat = W^-1 T Q``, a fixed linear map of ``y``.

Every replicate draws from its own PCG64 stream seeded by
``SeedSequence([seed, replicate_index])``, so results do not depend on how
replicates are scheduled across threads.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .design import (
    ExactDesign,
    build_contrasts,
    exact_W,
    information_from_blocks,
    information_from_incidence,
)
from .numerics import SymMatrix, inverse_array


@dataclass(frozen=True)
class SimulationConfig:
    sigma: float = 1.0
    replicates: int = 10_000
    seed: int = 0
    tau: Optional[Sequence[float]] = None
    block_effects: Optional[Sequence[float]] = None

    def __post_init__(self):
        if not self.sigma > 0:
            raise ValueError(f"sigma must be positive, got {self.sigma}")
        if self.replicates < 1:
            raise ValueError(f"replicates must be >= 1, got {self.replicates}")
        if not 0 <= int(self.seed) < 2**64:
            raise ValueError("seed must fit in 64 unsigned bits")


@dataclass(frozen=True, eq=False)
class CovarianceReport:
    empirical_cov: SymMatrix
    theoretical_cov: SymMatrix
    max_rel_deviation: float
    bias: np.ndarray
    replicates: int
    seed: int
    sigma: float


@dataclass(frozen=True, eq=False)
class _Model:
    """Per-design quantities shared by all replicates."""

    mean: np.ndarray  # expected response per unit
    estimator: np.ndarray  # (v-1) x n map from responses to L tau_hat
    true_contrasts: np.ndarray
    W: SymMatrix


def _unit_layout(design: ExactDesign) -> tuple[np.ndarray, np.ndarray]:
    treatments, blocks = [], []
    for col, block in enumerate(design.blocks()):
        treatments.extend(t - 1 for t in block.treatments)
        blocks.extend([col] * block.k)
    return np.array(treatments), np.array(blocks)


def _default_tau(v: int) -> np.ndarray:
    return np.arange(1, v + 1, dtype=float)


def _default_block_effects(b: int) -> np.ndarray:
    return np.array([1.0 if i % 2 == 0 else -1.0 for i in range(b)])


def _build_model(design: ExactDesign, config: SimulationConfig) -> _Model:
    v, k, b = design.spec.v, design.spec.k, design.b
    tau = _default_tau(v) if config.tau is None else np.asarray(config.tau, dtype=float)
    beta = (
        _default_block_effects(b)
        if config.block_effects is None
        else np.asarray(config.block_effects, dtype=float)
    )
    if tau.shape != (v,):
        raise ValueError(f"tau must have {v} entries")
    if beta.shape != (b,):
        raise ValueError(f"block_effects must have {b} entries")

    trt, blk = _unit_layout(design)
    n = trt.size
    X = np.zeros((n, v))
    X[np.arange(n), trt] = 1.0
    # within-block centering operator P = I - Z Z' / k
    Z = np.zeros((n, b))
    Z[np.arange(n), blk] = 1.0
    P = np.eye(n) - Z @ Z.T / k

    contrasts = build_contrasts(design.spec)
    W = exact_W(design)
    estimator = inverse_array(W.entries) @ contrasts.T @ X.T @ P
    return _Model(
        mean=tau[trt] + beta[blk],
        estimator=estimator,
        true_contrasts=contrasts.L @ tau,
        W=W,
    )


def least_squares_information(design: ExactDesign) -> SymMatrix:
    """``X' P X``: treatment information after absorbing block effects."""
    trt, blk = _unit_layout(design)
    n, v = trt.size, design.spec.v
    X = np.zeros((n, v))
    X[np.arange(n), trt] = 1.0
    Z = np.zeros((n, design.b))
    Z[np.arange(n), blk] = 1.0
    P = np.eye(n) - Z @ Z.T / design.spec.k
    return SymMatrix(X.T @ P @ X)


def information_discrepancy(design: ExactDesign) -> float:
    """Largest entrywise disagreement among the three ways of forming C."""
    a = information_from_incidence(design).entries
    b = information_from_blocks(design).entries
    c = least_squares_information(design).entries
    return float(max(np.abs(a - b).max(), np.abs(a - c).max(), np.abs(b - c).max()))


def noiseless_estimate(design: ExactDesign, config: SimulationConfig) -> np.ndarray:
    """``L tau_hat`` for an error-free response; equals ``L tau`` when connected."""
    model = _build_model(design, config)
    return model.estimator @ model.mean


def _noise(config: SimulationConfig, replicate_index: int, n: int) -> np.ndarray:
    rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence([int(config.seed), replicate_index])))
    return config.sigma * rng.standard_normal(n)


def simulate_once(design: ExactDesign, config: SimulationConfig, replicate_index: int) -> np.ndarray:
    """Estimated consecutive contrasts from one simulated experiment."""
    model = _build_model(design, config)
    y = model.mean + _noise(config, replicate_index, model.mean.size)
    return model.estimator @ y


def _simulate_range(model: _Model, config: SimulationConfig, start: int, stop: int) -> np.ndarray:
    n = model.mean.size
    noise = np.empty((stop - start, n))
    for row, r in enumerate(range(start, stop)):
        noise[row] = _noise(config, r, n)
    return (model.mean + noise) @ model.estimator.T


def simulate(design: ExactDesign, config: SimulationConfig, workers: int = 1) -> np.ndarray:
    """All replicates as an (R, v-1) array, row r from stream r."""
    model = _build_model(design, config)
    R = config.replicates
    workers = max(1, int(workers))
    if workers == 1:
        return _simulate_range(model, config, 0, R)
    edges = np.linspace(0, R, workers + 1).astype(int)
    with ThreadPoolExecutor(max_workers=workers) as pool:
        parts = list(
            pool.map(lambda ab: _simulate_range(model, config, ab[0], ab[1]), zip(edges[:-1], edges[1:]))
        )
    return np.concatenate(parts, axis=0)


def covariance_check(design: ExactDesign, config: SimulationConfig, workers: int = 1) -> CovarianceReport:
    """Compare the empirical covariance of the estimates with ``sigma^2 W^-1``."""
    model = _build_model(design, config)
    est = simulate(design, config, workers=workers)
    theoretical = config.sigma**2 * inverse_array(model.W.entries)
    if est.shape[0] > 1:
        empirical = np.atleast_2d(np.cov(est, rowvar=False))
    else:
        empirical = np.zeros_like(theoretical)
    dev = np.abs(empirical - theoretical).max() / np.abs(theoretical).max()
    return CovarianceReport(
        empirical_cov=SymMatrix(empirical),
        theoretical_cov=SymMatrix(theoretical),
        max_rel_deviation=float(dev),
        bias=est.mean(axis=0) - model.true_contrasts,
        replicates=config.replicates,
        seed=int(config.seed),
        sigma=config.sigma,
    )
