"""Command-line entry point.

Exit codes: 0 success, 2 usage error, 3 requested block count not
achievable by rounding, 4 numerical failure.
"""

from __future__ import annotations

import csv
import functools
import json
import logging
import os
import sys
from pathlib import Path

import click

from .design import ProblemSpec
from .errors import DesignError, EmptyDesign, Inestimable
from .exact import efficiency, find_multiplier, nested_sequence, round_measure
from .files import FileFormatError, read_design, read_measure, write_design, write_measure
from .optimizer import OptimizerConfig, optimize
from .verify import SimulationConfig, covariance_check

EXIT_USAGE = 2
EXIT_NOT_ACHIEVABLE = 3
EXIT_NUMERICAL = 4
THREADS_ENV = "CONSECDESIGN_THREADS"


def _guard(func):
    """Map library exceptions onto the documented exit codes."""

    @functools.wraps(func)
    def wrapper(*args, **kwargs):
        try:
            return func(*args, **kwargs)
        except (FileFormatError, EmptyDesign) as exc:
            click.echo(f"error: {exc}", err=True)
            sys.exit(EXIT_USAGE)
        except DesignError as exc:
            click.echo(f"numerical failure: {exc}", err=True)
            sys.exit(EXIT_NUMERICAL)

    return wrapper


def _spec(v: int, k: int) -> ProblemSpec:
    try:
        return ProblemSpec(v, k)
    except ValueError as exc:
        raise click.UsageError(str(exc)) from exc


def _print_support(pairs) -> None:
    width = max(len(str(b)) for b, _ in pairs)
    for block, mass in pairs:
        click.echo(f"{str(block):<{width}}  {mass:.4f}")


def _print_design(design, eff=None) -> None:
    for block, f in design.entries:
        click.echo(f"{block}  x{f}")
    line = f"b = {design.b}"
    if eff is not None:
        line += f"  efficiency = {eff:.4f}"
    click.echo(line)


def _default_threads() -> int:
    try:
        return max(1, int(os.environ.get(THREADS_ENV, "1")))
    except ValueError:
        return 1


@click.group()
@click.option("-v", "--verbose", is_flag=True, help="Log optimizer progress to stderr.")
@click.version_option(package_name="consecdesign")
def main(verbose: bool) -> None:
    """A-optimal block designs for consecutive treatment comparisons."""
    logging.basicConfig(level=logging.INFO if verbose else logging.WARNING, stream=sys.stderr)


@main.command("optimize")
@click.option("--v", "v", type=int, required=True, help="Number of treatments.")
@click.option("--k", "k", type=int, required=True, help="Block size.")
@click.option("--tol", type=float, default=1e-10, show_default=True)
@click.option("--max-iters", type=int, default=1_000_000, show_default=True)
@click.option("--binary-first/--no-binary-first", default=True, show_default=True)
@click.option("-o", "--output", type=click.Path(dir_okay=False, path_type=Path))
@_guard
def cmd_optimize(v, k, tol, max_iters, binary_first, output):
    """Compute the A-optimal design measure for V treatments in blocks of K."""
    spec = _spec(v, k)
    try:
        config = OptimizerConfig(tol=tol, max_iters=max_iters, binary_first=binary_first)
    except ValueError as exc:
        raise click.UsageError(str(exc)) from exc
    report = optimize(spec, config)
    click.echo(f"v = {v}, k = {k}")
    click.echo("Block  Mass")
    _print_support(report.support())
    click.echo(f"phi = {report.phi:.4f}")
    click.echo(f"certificate gap = {report.max_violation:.3e} (tol {tol:g})")
    click.echo(f"phase = {report.phase}, iterations = {report.iterations}")
    if output:
        write_measure(output, report, tol)
        click.echo(f"wrote {output}")


@main.command("round")
@click.argument("measure_file", type=click.Path(exists=True, dir_okay=False, path_type=Path))
@click.option("--b", "b", type=int, help="Requested number of blocks.")
@click.option("--c", "c", type=float, help="Multiplier applied to the masses.")
@click.option("-o", "--output", type=click.Path(dir_okay=False, path_type=Path))
@click.option(
    "--no-check",
    is_flag=True,
    help="Skip re-certifying the measure on load (needed for non-optimal inputs such as point masses).",
)
@_guard
def cmd_round(measure_file, b, c, output, no_check):
    """Round a design measure to an exact design, by block count or multiplier."""
    if (b is None) == (c is None):
        raise click.UsageError("give exactly one of --b or --c")
    loaded = read_measure(measure_file, check=not no_check)
    if c is not None:
        if c <= 0:
            raise click.UsageError("--c must be positive")
        design = round_measure(loaded.measure, c)
    else:
        if b < 1:
            raise click.UsageError("--b must be >= 1")
        res = find_multiplier(loaded.measure, b)
        if not res.achievable:
            click.echo(f"b = {b} is not achievable by rounding")
            if res.lower_b is not None:
                click.echo(f"nearest below: b = {res.lower_b} (c = {res.lower_c:.4f})")
            click.echo(f"nearest above: b = {res.upper_b} (c = {res.upper_c:.4f})")
            click.echo(f"jump at c = {res.jump_c:.6f}")
            sys.exit(EXIT_NOT_ACHIEVABLE)
        design, c = res.design, res.c
    try:
        eff = efficiency(design, loaded.phi)
    except Inestimable:
        eff = None
        click.echo("note: the rounded design does not connect all treatments; no efficiency", err=True)
    click.echo(f"c = {c:.4f}")
    _print_design(design, eff)
    if output:
        write_design(output, design, eff, multiplier=c)
        click.echo(f"wrote {output}")


@main.command("eff")
@click.argument("design_file", type=click.Path(exists=True, dir_okay=False, path_type=Path))
@click.option("--measure", "measure_file", type=click.Path(exists=True, dir_okay=False, path_type=Path))
@click.option("--phi", type=float, help="Optimal criterion value, instead of a measure file.")
@_guard
def cmd_eff(design_file, measure_file, phi):
    """A-efficiency of an exact design relative to the optimal measure."""
    if (measure_file is None) == (phi is None):
        raise click.UsageError("give exactly one of --measure or --phi")
    design = read_design(design_file)
    if measure_file is not None:
        loaded = read_measure(measure_file)
        if loaded.spec != design.spec:
            raise click.UsageError(
                f"design is for (v={design.spec.v}, k={design.spec.k}) but measure is for "
                f"(v={loaded.spec.v}, k={loaded.spec.k})"
            )
        phi = loaded.phi
    elif phi <= 0:
        raise click.UsageError("--phi must be positive")
    click.echo(f"{efficiency(design, phi):.4f}")


@main.command("nest")
@click.argument("measure_file", type=click.Path(exists=True, dir_okay=False, path_type=Path))
@click.option("--targets", required=True, help="Ascending block counts, comma separated.")
@click.option("-d", "--outdir", type=click.Path(file_okay=False, path_type=Path), default=Path("."))
@_guard
def cmd_nest(measure_file, targets, outdir):
    """Build a chain of nested exact designs for several block budgets."""
    try:
        b_targets = [int(t) for t in targets.split(",") if t.strip()]
    except ValueError as exc:
        raise click.UsageError(f"bad --targets: {targets}") from exc
    if not b_targets or any(b2 <= b1 for b1, b2 in zip(b_targets, b_targets[1:])):
        raise click.UsageError("--targets must be strictly ascending")
    if b_targets[0] < 1:
        raise click.UsageError("targets must be >= 1")
    loaded = read_measure(measure_file)
    links = nested_sequence(loaded.measure, b_targets, loaded.phi)

    outdir.mkdir(parents=True, exist_ok=True)
    summary = []
    for link in links:
        path = outdir / f"design_b{link.b}.json"
        write_design(path, link.design, link.efficiency, source=link.source, multiplier=link.c)
        click.echo(f"d({link.b}) [{link.source}] efficiency = {link.efficiency:.4f}")
        click.echo(f"  {link.design}")
        summary.append({"b": link.b, "efficiency": link.efficiency, "source": link.source, "file": path.name})
    report = {"targets": b_targets, "chain_verified": True, "designs": summary}
    (outdir / "chain.json").write_text(json.dumps(report, indent=2) + "\n")
    click.echo("chain verified: every design is contained in its successor")


@main.command("verify")
@click.argument("design_file", type=click.Path(exists=True, dir_okay=False, path_type=Path))
@click.option("--sigma", type=float, default=1.0, show_default=True)
@click.option("--reps", type=int, default=100_000, show_default=True)
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--threads", type=int, default=None, help=f"Worker threads (default ${THREADS_ENV} or 1).")
@click.option("--json", "json_out", type=click.Path(dir_okay=False, path_type=Path))
@_guard
def cmd_verify(design_file, sigma, reps, seed, threads, json_out):
    """Simulate the design and compare the contrast covariance with theory."""
    design = read_design(design_file)
    try:
        config = SimulationConfig(sigma=sigma, replicates=reps, seed=seed)
    except ValueError as exc:
        raise click.UsageError(str(exc)) from exc
    rep = covariance_check(design, config, workers=threads or _default_threads())
    click.echo(f"seed = {seed}, replicates = {reps}, sigma = {sigma:g}")
    click.echo("theoretical covariance:")
    for row in rep.theoretical_cov.entries:
        click.echo("  " + " ".join(f"{x:9.4f}" for x in row))
    click.echo("empirical covariance:")
    for row in rep.empirical_cov.entries:
        click.echo("  " + " ".join(f"{x:9.4f}" for x in row))
    click.echo(f"max relative deviation = {rep.max_rel_deviation:.4f}")
    if json_out:
        doc = {
            "seed": seed,
            "replicates": reps,
            "sigma": sigma,
            "theoretical_cov": rep.theoretical_cov.entries.tolist(),
            "empirical_cov": rep.empirical_cov.entries.tolist(),
            "max_rel_deviation": rep.max_rel_deviation,
            "bias": rep.bias.tolist(),
        }
        json_out.write_text(json.dumps(doc, indent=2) + "\n")


@main.command("tables")
@click.option("--k", "k", type=click.IntRange(2, 5), required=True)
@click.option("--vmax", type=int, required=True)
@click.option("--tol", type=float, default=1e-10, show_default=True)
@click.option("-o", "--output", type=click.Path(dir_okay=False, path_type=Path))
@_guard
def cmd_tables(k, vmax, tol, output):
    """Tabulate optimal measures for v = K+1 .. VMAX as CSV (v, phi, block, mass)."""
    if vmax <= k:
        raise click.UsageError("--vmax must exceed --k")
    _spec(vmax, k)
    config = OptimizerConfig(tol=tol)
    rows = []
    for v in range(k + 1, vmax + 1):
        report = optimize(ProblemSpec(v, k), config)
        click.echo(f"v = {v}: phi = {report.phi:.4f} ({report.phase})", err=True)
        for block, mass in report.support():
            rows.append((v, f"{report.phi:.4f}", str(block), f"{mass:.4f}"))
    stream = open(output, "w", newline="") if output else sys.stdout
    try:
        writer = csv.writer(stream)
        writer.writerow(["v", "phi", "block", "mass"])
        writer.writerows(rows)
    finally:
        if output:
            stream.close()


if __name__ == "__main__":
    main()
