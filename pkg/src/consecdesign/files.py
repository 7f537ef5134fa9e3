"""On-disk measure and design documents.

Both are single JSON objects with a ``format`` tag and a ``version`` field.
Floats are written with ``repr`` precision, so a write/read cycle returns
the same weights bit for bit.
"""

from __future__ import annotations

import json
from pathlib import Path
from typing import Any, Optional

from . import __version__
from .design import Block, DesignMeasure, ExactDesign, ProblemSpec, enumerate_blocks
from .errors import DesignError
from .optimizer import OptimizationReport, certificate

MEASURE_FORMAT = "consecdesign/measure"
DESIGN_FORMAT = "consecdesign/design"
FORMAT_VERSION = 1
FILE_SUM_TOL = 1e-9
STALE_FACTOR = 10.0


class FileFormatError(DesignError):
    pass


def _write(path: Path | str, doc: dict[str, Any]) -> None:
    Path(path).write_text(json.dumps(doc, indent=2) + "\n")


def _read(path: Path | str, fmt: str) -> dict[str, Any]:
    try:
        doc = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise FileFormatError(f"{path}: not valid JSON ({exc})") from exc
    if doc.get("format") != fmt:
        raise FileFormatError(f"{path}: expected format {fmt!r}, found {doc.get('format')!r}")
    if doc.get("version") != FORMAT_VERSION:
        raise FileFormatError(f"{path}: unsupported version {doc.get('version')!r}")
    return doc


def measure_document(report: OptimizationReport, tol: float = 1e-10) -> dict[str, Any]:
    spec = report.spec
    support = report.measure.support(0.0)
    return {
        "format": MEASURE_FORMAT,
        "version": FORMAT_VERSION,
        "tool_version": __version__,
        "v": spec.v,
        "k": spec.k,
        "blocks": [list(b.treatments) for b, _ in support],
        "weights": [w for _, w in support],
        "phi": report.phi,
        "max_violation": report.max_violation,
        "tol": tol,
        "phase": report.phase,
        "iterations": report.iterations,
    }


def write_measure(path, report: OptimizationReport, tol: float = 1e-10) -> None:
    _write(path, measure_document(report, tol))


class LoadedMeasure:
    """A measure read back from disk, together with its recorded metadata."""

    def __init__(self, measure: DesignMeasure, phi: float, max_violation: float, tol: float, doc: dict):
        self.measure = measure
        self.phi = phi
        self.max_violation = max_violation
        self.tol = tol
        self.doc = doc

    @property
    def spec(self) -> ProblemSpec:
        return self.measure.spec


def read_measure(path, check: bool = True) -> LoadedMeasure:
    """Load a measure file, re-certifying it unless ``check`` is false.

    Files whose recomputed certificate exceeds ten times their recorded
    tolerance are rejected as stale or hand-edited.
    """
    doc = _read(path, MEASURE_FORMAT)
    try:
        spec = ProblemSpec(int(doc["v"]), int(doc["k"]))
        blocks, weights = doc["blocks"], [float(w) for w in doc["weights"]]
    except (KeyError, TypeError, ValueError) as exc:
        raise FileFormatError(f"{path}: malformed measure ({exc})") from exc
    if len(blocks) != len(weights):
        raise FileFormatError(f"{path}: {len(blocks)} blocks but {len(weights)} weights")
    total = sum(weights)
    if abs(total - 1.0) > FILE_SUM_TOL:
        raise FileFormatError(f"{path}: weights sum to {total!r}")

    catalog = enumerate_blocks(spec)
    masses = {}
    for treatments, w in zip(blocks, weights):
        try:
            block = Block(tuple(treatments), spec.v)
            catalog.position(block)
        except (KeyError, ValueError) as exc:
            raise FileFormatError(f"{path}: invalid block {treatments} for v={spec.v}, k={spec.k}") from exc
        masses[block] = w
    measure = DesignMeasure.from_support(catalog, masses, normalize=abs(total - 1.0) > 1e-12)

    tol = float(doc.get("tol", 1e-10))
    loaded = LoadedMeasure(measure, float(doc["phi"]), float(doc["max_violation"]), tol, doc)
    if check:
        violation, worst = certificate(measure, catalog)
        if violation > STALE_FACTOR * tol:
            raise FileFormatError(
                f"{path}: certificate fails (violation {violation:.3e} at block {catalog[worst]}); "
                "re-run optimize"
            )
    return loaded


def design_document(design: ExactDesign, efficiency: Optional[float] = None, **extra) -> dict[str, Any]:
    doc = {
        "format": DESIGN_FORMAT,
        "version": FORMAT_VERSION,
        "tool_version": __version__,
        "v": design.spec.v,
        "k": design.spec.k,
        "blocks": [list(b.treatments) for b, _ in design.entries],
        "multiplicities": [f for _, f in design.entries],
        "b": design.b,
    }
    if efficiency is not None:
        doc["efficiency"] = efficiency
    doc.update(extra)
    return doc


def write_design(path, design: ExactDesign, efficiency: Optional[float] = None, **extra) -> None:
    _write(path, design_document(design, efficiency, **extra))


def read_design(path) -> ExactDesign:
    doc = _read(path, DESIGN_FORMAT)
    try:
        spec = ProblemSpec(int(doc["v"]), int(doc["k"]))
        blocks, mult = doc["blocks"], [int(f) for f in doc["multiplicities"]]
        b = int(doc["b"])
    except (KeyError, TypeError, ValueError) as exc:
        raise FileFormatError(f"{path}: malformed design ({exc})") from exc
    if len(blocks) != len(mult):
        raise FileFormatError(f"{path}: {len(blocks)} blocks but {len(mult)} multiplicities")
    if sum(mult) != b:
        raise FileFormatError(f"{path}: multiplicities add to {sum(mult)}, not b={b}")
    try:
        return ExactDesign(spec, tuple((Block(tuple(t), spec.v), f) for t, f in zip(blocks, mult)))
    except ValueError as exc:
        raise FileFormatError(f"{path}: {exc}") from exc
