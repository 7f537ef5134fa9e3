"""Contrasts, block catalogs, and the information matrices built on them.

Treatments are labelled ``1..v``.  A block is a multiset of ``k`` labels,
kept in canonical nondecreasing order; the multiplicity vector ``h`` is
derived from it on demand.  Blocks holding a single treatment carry no
information about the consecutive contrasts and are never admitted.
"""

from __future__ import annotations

import itertools
from collections import Counter
from dataclasses import dataclass, field
from functools import cached_property
from math import comb
from typing import Iterable, Mapping

import numpy as np

from .errors import Inestimable, SingularMatrix
from .numerics import SymMatrix, inverse_array, triple_product

MAX_V = 30
WEIGHT_SUM_TOL = 1e-12


@dataclass(frozen=True)
class ProblemSpec:
    v: int
    k: int

    def __post_init__(self):
        if not (isinstance(self.v, (int, np.integer)) and isinstance(self.k, (int, np.integer))):
            raise TypeError("v and k must be integers")
        if self.v < 3 or self.v > MAX_V:
            raise ValueError(f"v must satisfy 3 <= v <= {MAX_V}, got {self.v}")
        if not 2 <= self.k < self.v:
            raise ValueError(f"block size must satisfy 2 <= k < v, got k={self.k}, v={self.v}")

    @property
    def dim(self) -> int:
        """Number of consecutive contrasts, v - 1."""
        return self.v - 1


@dataclass(frozen=True, eq=False)
class ContrastOperator:
    """``L`` holds the rows ``tau_{i+1} - tau_i``; ``T = (LL')^-1 L``."""

    v: int
    L: np.ndarray
    T: np.ndarray


def build_contrasts(spec: ProblemSpec) -> ContrastOperator:
    v = spec.v
    L = np.zeros((v - 1, v))
    for i in range(v - 1):
        L[i, i] = -1.0
        L[i, i + 1] = 1.0
    T = inverse_array(L @ L.T) @ L
    L.setflags(write=False)
    T.setflags(write=False)
    return ContrastOperator(v=v, L=L, T=T)


@dataclass(frozen=True, order=True)
class Block:
    """A block as a sorted tuple of 1-based treatment labels."""

    treatments: tuple[int, ...]
    v: int = field(compare=False)

    def __post_init__(self):
        labels = tuple(sorted(int(t) for t in self.treatments))
        if len(labels) < 2:
            raise ValueError("a block needs at least two units")
        if labels[0] < 1 or labels[-1] > self.v:
            raise ValueError(f"treatment labels must lie in 1..{self.v}: {labels}")
        if labels[0] == labels[-1]:
            raise ValueError(f"single-treatment block {labels} carries no contrast information")
        object.__setattr__(self, "treatments", labels)

    @classmethod
    def from_multiplicities(cls, h: Iterable[int]) -> "Block":
        h = [int(x) for x in h]
        if any(x < 0 for x in h):
            raise ValueError("multiplicities must be nonnegative")
        labels = tuple(i + 1 for i, n in enumerate(h) for _ in range(n))
        return cls(labels, len(h))

    @property
    def k(self) -> int:
        return len(self.treatments)

    @property
    def h(self) -> np.ndarray:
        out = np.zeros(self.v, dtype=int)
        for t in self.treatments:
            out[t - 1] += 1
        return out

    @property
    def is_binary(self) -> bool:
        return len(set(self.treatments)) == len(self.treatments)

    def reversed(self) -> "Block":
        """Image under the relabelling i -> v + 1 - i."""
        return Block(tuple(self.v + 1 - t for t in self.treatments), self.v)

    def __str__(self) -> str:
        return " ".join(str(t) for t in self.treatments)


def block_info(block: Block, spec: ProblemSpec) -> SymMatrix:
    """Single-block information matrix ``C_j = H_j - h_j h_j' / k``."""
    if block.v != spec.v or block.k != spec.k:
        raise ValueError(f"block {block} does not fit (v={spec.v}, k={spec.k})")
    h = block.h.astype(float)
    return SymMatrix(np.diag(h) - np.outer(h, h) / spec.k)


def block_V(block: Block, contrasts: ContrastOperator) -> SymMatrix:
    """``V_j = T C_j T'``, the block's contribution on the contrast scale."""
    spec = ProblemSpec(contrasts.v, block.k)
    return triple_product(contrasts.T, block_info(block, spec))


@dataclass(frozen=True, eq=False)
class BlockCatalog:
    """Lexicographically ordered candidate blocks for one (v, k)."""

    spec: ProblemSpec
    blocks: tuple[Block, ...]
    binary_only: bool

    def __len__(self) -> int:
        return len(self.blocks)

    def __iter__(self):
        return iter(self.blocks)

    def __getitem__(self, i: int) -> Block:
        return self.blocks[i]

    @cached_property
    def index(self) -> dict[tuple[int, ...], int]:
        return {b.treatments: i for i, b in enumerate(self.blocks)}

    def position(self, block: Block | Iterable[int]) -> int:
        key = block.treatments if isinstance(block, Block) else tuple(sorted(block))
        try:
            return self.index[key]
        except KeyError:
            raise KeyError(f"block {key} is not in this catalog") from None

    @cached_property
    def contrasts(self) -> ContrastOperator:
        return build_contrasts(self.spec)

    @cached_property
    def V(self) -> np.ndarray:
        """Stacked ``V_j`` matrices, shape (B, v-1, v-1), read-only."""
        T = self.contrasts.T
        k = self.spec.k
        out = np.empty((len(self.blocks), self.spec.dim, self.spec.dim))
        for j, block in enumerate(self.blocks):
            h = block.h.astype(float)
            Th = T @ h
            # T H T' - (T h)(T h)' / k, using H diagonal
            out[j] = (T * h) @ T.T - np.outer(Th, Th) / k
            out[j] = (out[j] + out[j].T) / 2.0
        out.setflags(write=False)
        return out

    @cached_property
    def V_flat(self) -> np.ndarray:
        return self.V.reshape(len(self.blocks), -1)

    @cached_property
    def reversal(self) -> np.ndarray:
        """Permutation ``perm`` with ``blocks[perm[j]] == blocks[j].reversed()``."""
        return np.array([self.position(b.reversed()) for b in self.blocks], dtype=int)


def enumerate_blocks(spec: ProblemSpec, binary_only: bool = False) -> BlockCatalog:
    labels = range(1, spec.v + 1)
    if binary_only:
        raw = itertools.combinations(labels, spec.k)
    else:
        raw = itertools.combinations_with_replacement(labels, spec.k)
    blocks = tuple(Block(t, spec.v) for t in raw if t[0] != t[-1])
    return BlockCatalog(spec=spec, blocks=blocks, binary_only=binary_only)


def catalog_size(v: int, k: int, binary_only: bool = False) -> int:
    return comb(v, k) if binary_only else comb(v + k - 1, k) - v


@dataclass(frozen=True, eq=False)
class DesignMeasure:
    """Probability weights over the blocks of a catalog."""

    catalog: BlockCatalog
    weights: np.ndarray

    def __post_init__(self):
        w = np.array(self.weights, dtype=float)
        if w.shape != (len(self.catalog),):
            raise ValueError(f"expected {len(self.catalog)} weights, got shape {w.shape}")
        if (w < 0).any() or not np.isfinite(w).all():
            raise ValueError("weights must be finite and nonnegative")
        if abs(w.sum() - 1.0) > WEIGHT_SUM_TOL:
            raise ValueError(f"weights sum to {w.sum()!r}, not 1")
        w.setflags(write=False)
        object.__setattr__(self, "weights", w)

    @classmethod
    def uniform(cls, catalog: BlockCatalog) -> "DesignMeasure":
        return cls(catalog, np.full(len(catalog), 1.0 / len(catalog)))

    @classmethod
    def from_support(
        cls,
        catalog: BlockCatalog,
        masses: Mapping[Block | tuple[int, ...], float],
        normalize: bool = False,
    ) -> "DesignMeasure":
        """Place masses on named blocks; ``normalize`` rescales rounded inputs."""
        w = np.zeros(len(catalog))
        for block, mass in masses.items():
            w[catalog.position(block)] += float(mass)
        if normalize:
            w = w / w.sum()
        return cls(catalog, w)

    @classmethod
    def point_mass(cls, catalog: BlockCatalog, block) -> "DesignMeasure":
        return cls.from_support(catalog, {block: 1.0})

    @property
    def spec(self) -> ProblemSpec:
        return self.catalog.spec

    def support(self, threshold: float = 0.0) -> list[tuple[Block, float]]:
        return [
            (self.catalog[j], float(w))
            for j, w in enumerate(self.weights)
            if w > threshold
        ]

    def embed(self, catalog: BlockCatalog) -> "DesignMeasure":
        """The same measure expressed on a (super-)catalog."""
        if catalog is self.catalog:
            return self
        w = np.zeros(len(catalog))
        for j, block in enumerate(self.catalog):
            if self.weights[j] > 0:
                w[catalog.position(block)] = self.weights[j]
        return DesignMeasure(catalog, w)

    def reversed(self) -> "DesignMeasure":
        w = np.empty_like(self.weights)
        w[self.catalog.reversal] = self.weights
        return DesignMeasure(self.catalog, w)


def moment_array(catalog: BlockCatalog, weights: np.ndarray) -> np.ndarray:
    d = catalog.spec.dim
    if weights.all():
        m = weights @ catalog.V_flat
    else:
        # Sum over the support only, so a measure gives the same M bit for bit
        # whether it sits on the binary catalog or is embedded in the full one.
        idx = np.flatnonzero(weights)
        m = weights[idx] @ catalog.V_flat[idx]
    m = m.reshape(d, d)
    return (m + m.T) / 2.0


def moment_matrix(measure: DesignMeasure) -> SymMatrix:
    """``M(p) = sum_j p_j V_j``."""
    return SymMatrix(moment_array(measure.catalog, measure.weights))


def criterion(measure: DesignMeasure) -> float:
    """A-criterion ``tr M(p)^-1``; raises Inestimable for disconnected support."""
    try:
        inv = inverse_array(moment_array(measure.catalog, measure.weights))
    except SingularMatrix as exc:
        raise Inestimable("moment matrix is singular for this measure") from exc
    return float(np.trace(inv))


@dataclass(frozen=True, eq=False)
class ExactDesign:
    """Distinct blocks with positive integer multiplicities, in catalog order."""

    spec: ProblemSpec
    entries: tuple[tuple[Block, int], ...]

    def __post_init__(self):
        entries = tuple(sorted((b, int(f)) for b, f in self.entries))
        seen = set()
        for block, f in entries:
            if f < 1:
                raise ValueError(f"multiplicity of {block} must be >= 1, got {f}")
            if block.v != self.spec.v or block.k != self.spec.k:
                raise ValueError(f"block {block} does not fit (v={self.spec.v}, k={self.spec.k})")
            if block.treatments in seen:
                raise ValueError(f"duplicate block {block}")
            seen.add(block.treatments)
        if not entries:
            raise ValueError("an exact design needs at least one block")
        object.__setattr__(self, "entries", entries)

    @classmethod
    def from_blocks(cls, spec: ProblemSpec, blocks: Iterable[Iterable[int]]) -> "ExactDesign":
        """Build from a flat list of blocks, repeats allowed."""
        counts = Counter(tuple(sorted(b)) for b in blocks)
        return cls(spec, tuple((Block(t, spec.v), n) for t, n in counts.items()))

    @classmethod
    def from_counts(cls, spec: ProblemSpec, counts: Mapping) -> "ExactDesign":
        entries = []
        for block, n in counts.items():
            if n <= 0:
                continue
            if not isinstance(block, Block):
                block = Block(tuple(block), spec.v)
            entries.append((block, int(n)))
        return cls(spec, tuple(entries))

    @property
    def b(self) -> int:
        return sum(f for _, f in self.entries)

    def counts(self) -> dict[tuple[int, ...], int]:
        return {block.treatments: f for block, f in self.entries}

    def multiplicity(self, block: Block | tuple[int, ...]) -> int:
        key = block.treatments if isinstance(block, Block) else tuple(sorted(block))
        return self.counts().get(key, 0)

    def blocks(self) -> list[Block]:
        """Flat block list with repeats."""
        return [block for block, f in self.entries for _ in range(f)]

    def contains(self, other: "ExactDesign") -> bool:
        """True when every block of ``other`` appears here at least as often."""
        mine = self.counts()
        return all(mine.get(t, 0) >= n for t, n in other.counts().items())

    def as_measure(self, catalog: BlockCatalog) -> DesignMeasure:
        b = self.b
        return DesignMeasure.from_support(
            catalog, {block: f / b for block, f in self.entries}, normalize=True
        )

    def __eq__(self, other) -> bool:
        if not isinstance(other, ExactDesign):
            return NotImplemented
        return self.spec == other.spec and self.counts() == other.counts()

    def __hash__(self):
        return hash((self.spec, tuple(sorted(self.counts().items()))))

    def __str__(self) -> str:
        return ", ".join("{" + ",".join(map(str, b.treatments)) + "}" for b in self.blocks())


def incidence_matrix(design: ExactDesign) -> np.ndarray:
    """Treatment-by-block incidence ``N`` (v x b), blocks in listed order."""
    blocks = design.blocks()
    N = np.zeros((design.spec.v, len(blocks)))
    for col, block in enumerate(blocks):
        N[:, col] = block.h
    return N


def information_from_incidence(design: ExactDesign) -> SymMatrix:
    """``C = R - N N' / k`` straight from the incidence matrix."""
    N = incidence_matrix(design)
    R = np.diag(N.sum(axis=1))
    return SymMatrix(R - N @ N.T / design.spec.k)


def information_from_blocks(design: ExactDesign) -> SymMatrix:
    """``C = sum_j f_j C_j``."""
    C = np.zeros((design.spec.v, design.spec.v))
    for block, f in design.entries:
        C += f * block_info(block, design.spec).entries
    return SymMatrix(C)


def exact_W(design: ExactDesign) -> SymMatrix:
    """``W = (LL')^-1 L C L' (LL')^-1 = T C T'`` for an exact design."""
    contrasts = build_contrasts(design.spec)
    W = triple_product(contrasts.T, information_from_blocks(design))
    try:
        inverse_array(W.entries)
    except SingularMatrix as exc:
        raise Inestimable(f"design does not connect all {design.spec.v} treatments") from exc
    return W
