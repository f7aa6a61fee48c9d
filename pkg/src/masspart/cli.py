import json
import sys
from contextlib import contextmanager
from functools import partial
from pathlib import Path
from typing import List, Optional

import numpy as np
import typer
from rich.console import Console
from rich.progress import BarColumn, Progress, TextColumn, TimeElapsedColumn
from rich.table import Table

from . import __version__
from .campaign import (
    EXCURSION_COLUMNS,
    REPRESENTATIONS,
    excursion_row,
    get_representation,
    occupation_row,
    resolve_params,
    run_replicas,
    run_representation,
)
from .config import (
    APPROX_GATE,
    DEFAULT_POINTS,
    DEFAULT_WORKERS,
    EXACT_GATE,
    OCCUPATION_RESIDUAL,
    SEED_ENVVAR,
    RunConfig,
    parse_seed,
)
from .errors import InvalidParameterError, MasspartError
from .excursion import lamperti_cdf
from .export import provenance, write_matrix_csv, write_matrix_json, write_report_json
from .log import setup_logging
from .representations import ram_sequences
from .stattest import check_assumption1, ks_one_sample, ks_two_sample
from .suite import failing_tests, run_suite

app = typer.Typer(help="masspart CLI - Poisson-Dirichlet / RAM sampling and certification.")
console = Console(stderr=True)

EXIT_OK, EXIT_FAIL, EXIT_USAGE, EXIT_IO = 0, 1, 2, 3
DEFAULT_SEED = "0xC0FFEE"
COMPONENTS = ("atom1", "atom2", "total")


@contextmanager
def _exit_on_error(verbose=False):
    """Map library errors to exit codes: 2 for usage, 3 for I/O."""
    try:
        yield
    except MasspartError as exc:
        if verbose:
            console.print_exception()
        console.print(f"[bold red]Error:[/bold red] {exc}")
        raise typer.Exit(EXIT_USAGE)
    except OSError as exc:
        console.print(f"[bold red]I/O error:[/bold red] {exc}")
        raise typer.Exit(EXIT_IO)


@contextmanager
def _progress(label, enabled=True):
    """Yield a ``progress_callback(done, total)`` backed by a rich progress bar."""
    if not enabled:
        yield None
        return
    with Progress(
        TextColumn("[bold blue]{task.description}"),
        BarColumn(),
        TextColumn("{task.completed}/{task.total}"),
        TimeElapsedColumn(),
        console=console,
        transient=True,
    ) as bar:
        task_id = bar.add_task(label, total=None)

        def update(done, total, *_):
            bar.update(task_id, completed=done, total=total)

        yield update


def _params_or_default(alpha, a1, c, theta):
    if a1 is None and c is None and theta is None:
        theta = 0.0
    return resolve_params(alpha, a1, c, theta)


def _record(name, params, seed, **extra):
    return provenance(
        representation=name,
        params=f"alpha={params.alpha!r},a1={params.a1!r},c={params.c!r}" if params else None,
        seed=f"{seed:#x}",
        **extra,
    )


def _write_matrix(config, rows, columns, record):
    if config.output_format == "json":
        write_matrix_json(config.output_path, rows, columns, record)
    else:
        write_matrix_csv(config.output_path, rows, columns, record)


@app.command()
def sample(
    representation: str = typer.Argument(..., help="Representation name, e.g. ram-stick, pd-stable, xi-thinned"),
    alpha: float = typer.Option(0.5, help="alpha (discount / stability index)"),
    a1: Optional[float] = typer.Option(None, help="RAM a1 (with --c)"),
    c: Optional[float] = typer.Option(None, help="RAM c (with --a1)"),
    theta: Optional[float] = typer.Option(None, help="PD theta (instead of --a1/--c); default 0"),
    k: int = typer.Option(5, "-k", "--k", help="Number of atoms per replica"),
    replicas: int = typer.Option(1000, "-n", "--replicas", help="Number of replicas"),
    points: int = typer.Option(DEFAULT_POINTS, help="Truncation depth of approximate samplers"),
    seed: str = typer.Option(DEFAULT_SEED, envvar=SEED_ENVVAR, help="Master seed (decimal or 0x hex)"),
    workers: int = typer.Option(DEFAULT_WORKERS, help="Worker processes (default: CPU count)"),
    fmt: str = typer.Option("csv", "--format", help="csv or json"),
    out: Optional[Path] = typer.Option(None, "--out", help="Output file (stdout if omitted)"),
    verbose: bool = typer.Option(False, "-v", "--verbose"),
    log_file: Optional[Path] = typer.Option(None, help="Append log records to this file"),
):
    """Sample a replicas x k atom matrix (plus the mass beyond the k-th atom)."""
    setup_logging(verbose, log_file, console)
    with _exit_on_error(verbose):
        config = RunConfig(master_seed=parse_seed(seed), replicas=replicas, workers=workers,
                           output_format=fmt, output_path=out, points=points)
        params = _params_or_default(alpha, a1, c, theta)
        get_representation(representation)
        with _progress(f"Sampling {representation}", out is not None) as callback:
            rows = run_representation(representation, params, k, config.replicas, config.master_seed,
                                      points=config.points, workers=config.workers, progress_callback=callback)
        columns = [f"atom{j}" for j in range(1, k + 1)] + ["residual"]
        _write_matrix(config, rows, columns, _record(representation, params, config.master_seed, k=k))
    if out is not None:
        console.print(f"[bold green]Wrote {replicas} replicas of {representation} to {out}[/bold green]")


@app.command()
def equiv(
    rep_a: str = typer.Argument(..., help="First representation"),
    rep_b: str = typer.Argument(..., help="Second representation"),
    alpha: float = typer.Option(0.5),
    a1: Optional[float] = typer.Option(None),
    c: Optional[float] = typer.Option(None),
    theta: Optional[float] = typer.Option(None),
    alpha_b: Optional[float] = typer.Option(None, help="alpha for the second representation"),
    a1_b: Optional[float] = typer.Option(None),
    c_b: Optional[float] = typer.Option(None),
    theta_b: Optional[float] = typer.Option(None),
    component: str = typer.Option("atom1", help="atom1, atom2 or total (mass of the first k atoms)"),
    k: int = typer.Option(2, "-k", "--k"),
    replicas: int = typer.Option(20000, "-n", "--replicas"),
    points: int = typer.Option(DEFAULT_POINTS),
    seed: str = typer.Option(DEFAULT_SEED, envvar=SEED_ENVVAR),
    workers: int = typer.Option(DEFAULT_WORKERS),
    significance: Optional[float] = typer.Option(None, help="Gate (default 1e-3 exact, 1e-2 approximate)"),
    out: Optional[Path] = typer.Option(None, "--out"),
    verbose: bool = typer.Option(False, "-v", "--verbose"),
    log_file: Optional[Path] = typer.Option(None),
):
    """Two-sample KS test of a size-biased component across two representations."""
    setup_logging(verbose, log_file, console)
    with _exit_on_error(verbose):
        if component not in COMPONENTS:
            raise typer.BadParameter(f"component must be one of {', '.join(COMPONENTS)}")
        config = RunConfig(master_seed=parse_seed(seed), replicas=replicas, workers=workers,
                           significance=significance, points=points)
        params_a = _params_or_default(alpha, a1, c, theta)
        if any(v is not None for v in (alpha_b, a1_b, c_b, theta_b)):
            if theta_b is None and a1_b is None and c_b is None:
                if a1 is None and c is None:
                    theta_b = params_a.a1 - params_a.alpha
                else:
                    a1_b, c_b = a1, c
            params_b = resolve_params(alpha if alpha_b is None else alpha_b, a1_b, c_b, theta_b)
        else:
            params_b = params_a
        k = max(k, 2) if component == "atom2" else k
        reps = [get_representation(rep_a), get_representation(rep_b)]
        gate = config.gate(EXACT_GATE if all(r.exact for r in reps) else APPROX_GATE)

        samples = []
        for lane, (rep, params) in enumerate(zip(reps, (params_a, params_b)), start=1):
            with _progress(f"Sampling {rep.name}") as callback:
                rows = run_representation(rep.name, params, k, config.replicas, config.master_seed, lane=lane,
                                          points=config.points, workers=config.workers, size_biased=True,
                                          progress_callback=callback)
            samples.append(1.0 - rows[:, k] if component == "total" else rows[:, COMPONENTS.index(component)])
        report = ks_two_sample(samples[0], samples[1], gate, f"seed={config.master_seed:#x} lanes=1,2",
                               f"{rep_a} vs {rep_b} {component}")
        payload = {"provenance": _record(f"{rep_a},{rep_b}", params_a, config.master_seed,
                                         params_b=f"alpha={params_b.alpha!r},a1={params_b.a1!r},c={params_b.c!r}"),
                   **report.to_dict()}
        if out is not None:
            write_report_json(out, payload)

    table = Table(title=f"{rep_a} vs {rep_b} ({component})")
    table.add_column("Statistic", justify="right")
    table.add_column("p-value", justify="right")
    table.add_column("Gate", justify="right")
    table.add_column("Result", style="magenta")
    table.add_row(f"{report.statistic:.5f}", f"{report.p_value:.3g}", f"{gate:.3g}",
                  "[green]PASS[/green]" if report.passed else "[red]FAIL[/red]")
    console.print(table)
    if out is None:
        sys.stdout.write(json.dumps(payload, indent=4) + "\n")
    raise typer.Exit(EXIT_OK if report.passed else EXIT_FAIL)


@app.command()
def excursion(
    method: str = typer.Option("constructive", help="constructive or closed"),
    alpha: float = typer.Option(0.5),
    k: int = typer.Option(50, "-k", "--k", help="eta' atoms for the closed form"),
    replicas: int = typer.Option(1000, "-n", "--replicas"),
    points: int = typer.Option(DEFAULT_POINTS),
    seed: str = typer.Option(DEFAULT_SEED, envvar=SEED_ENVVAR),
    workers: int = typer.Option(DEFAULT_WORKERS),
    fmt: str = typer.Option("csv", "--format"),
    out: Optional[Path] = typer.Option(None, "--out"),
    verbose: bool = typer.Option(False, "-v", "--verbose"),
    log_file: Optional[Path] = typer.Option(None),
):
    """Sample excursion septuples (e, l, b, a, g, d, delta) and log(delta)."""
    setup_logging(verbose, log_file, console)
    with _exit_on_error(verbose):
        config = RunConfig(master_seed=parse_seed(seed), replicas=replicas, workers=workers,
                           output_format=fmt, output_path=out, points=points)
        task = partial(excursion_row, method, alpha, k, config.points)
        if method not in ("constructive", "closed"):
            raise InvalidParameterError(f"unknown excursion method {method!r}; use constructive or closed")
        if not 0.0 < alpha < 1.0:
            raise InvalidParameterError(f"alpha must lie in (0, 1), got {alpha!r}")
        with _progress(f"Excursions ({method})", out is not None) as callback:
            rows = run_replicas(task, config.replicas, config.master_seed, workers=config.workers,
                                progress_callback=callback)
        record = provenance(method=method, alpha=alpha, seed=f"{config.master_seed:#x}", k=k, points=points)
        _write_matrix(config, rows, EXCURSION_COLUMNS, record)
    if out is not None:
        console.print(f"[bold green]Wrote {replicas} {method} excursion tuples to {out}[/bold green]")


@app.command()
def arcsine(
    alpha: float = typer.Option(0.5),
    replicas: int = typer.Option(20000, "-n", "--replicas"),
    seed: str = typer.Option(DEFAULT_SEED, envvar=SEED_ENVVAR),
    workers: int = typer.Option(DEFAULT_WORKERS),
    significance: Optional[float] = typer.Option(None),
    tolerance: float = typer.Option(OCCUPATION_RESIDUAL, help="Truncation residual of eta'"),
    out: Optional[Path] = typer.Option(None, "--out"),
    verbose: bool = typer.Option(False, "-v", "--verbose"),
    log_file: Optional[Path] = typer.Option(None),
):
    """KS test of the occupation fraction against the generalized arcsine law."""
    setup_logging(verbose, log_file, console)
    with _exit_on_error(verbose):
        config = RunConfig(master_seed=parse_seed(seed), replicas=replicas, workers=workers,
                           significance=significance)
        if not 0.0 < alpha < 1.0:
            raise InvalidParameterError(f"alpha must lie in (0, 1), got {alpha!r}")
        with _progress("Occupation fractions") as callback:
            rows = run_replicas(partial(occupation_row, alpha, tolerance), config.replicas, config.master_seed,
                                workers=config.workers, progress_callback=callback)
        report = ks_one_sample(rows[:, 0], partial(lamperti_cdf, alpha), config.gate(EXACT_GATE),
                               f"seed={config.master_seed:#x} lane=0", f"occupation fraction alpha={alpha}")
        payload = {"provenance": provenance(alpha=alpha, seed=f"{config.master_seed:#x}", tolerance=tolerance),
                   "max_residual": float(np.max(rows[:, 1])), **report.to_dict()}
        if out is not None:
            write_report_json(out, payload)
    status = "[green]PASS[/green]" if report.passed else "[red]FAIL[/red]"
    console.print(f"Occupation fraction: D={report.statistic:.5f} p={report.p_value:.3g} {status}")
    if out is None:
        sys.stdout.write(json.dumps(payload, indent=4) + "\n")
    raise typer.Exit(EXIT_OK if report.passed else EXIT_FAIL)


@app.command("check-assumption")
def check_assumption(
    alpha: float = typer.Option(0.5),
    a1: Optional[float] = typer.Option(None),
    c: Optional[float] = typer.Option(None),
    theta: Optional[float] = typer.Option(None),
    terms: int = typer.Option(10000, help="Number of sequence terms to check"),
    sequences: Optional[Path] = typer.Option(None, help='JSON file {"a": [...], "b": [...]} instead of RAM params'),
    out: Optional[Path] = typer.Option(None, "--out"),
    verbose: bool = typer.Option(False, "-v", "--verbose"),
):
    """Diagnose stick-breaking admissibility of (a_j, b_j) sequences."""
    setup_logging(verbose, None, console)
    with _exit_on_error(verbose):
        if sequences is not None:
            data = json.loads(sequences.read_text(encoding="utf-8"))
            report = check_assumption1(data["a"], data["b"])
            source = {"sequences": str(sequences)}
        else:
            params = _params_or_default(alpha, a1, c, theta)
            a_seq, b_seq, _ = ram_sequences(params, terms)
            report = check_assumption1(a_seq, b_seq, alpha=params.alpha, c=params.c)
            source = {"params": f"alpha={params.alpha!r},a1={params.a1!r},c={params.c!r}"}
        payload = {"provenance": provenance(**source), **report.to_dict()}
        if out is not None:
            write_report_json(out, payload)

    table = Table(title="Stick-breaking admissibility")
    table.add_column("Quantity", style="cyan")
    table.add_column("Value", justify="right")
    table.add_row("terms checked", str(report.n_checked))
    table.add_row("condition (i)", "[green]holds[/green]" if report.cond_i_ok else f"[red]fails at j={report.first_violation}[/red]")
    table.add_row("partial sum (ii)", f"{report.partial_sum_ii[-1][1]:.6g}")
    table.add_row("pi_j a_j at last j", f"{report.pi_a_iii[-1][1]:.3g}")
    table.add_row("fitted exponent", f"{report.trend_exponent:.4f} (rms {report.trend_residual:.2g})")
    if report.theoretical_exponent is not None:
        table.add_row("predicted exponent", f"{report.theoretical_exponent:.4f}")
    table.add_row("log-linear decay", "yes" if report.log_linear else "no")
    console.print(table)
    if out is None:
        sys.stdout.write(json.dumps(payload, indent=4) + "\n")
    raise typer.Exit(EXIT_OK if report.cond_i_ok else EXIT_FAIL)


@app.command()
def suite(
    seed: str = typer.Option(DEFAULT_SEED, envvar=SEED_ENVVAR),
    replicas: int = typer.Option(100_000, "-n", "--replicas"),
    points: int = typer.Option(DEFAULT_POINTS),
    workers: int = typer.Option(DEFAULT_WORKERS),
    significance: Optional[float] = typer.Option(None, help="Override the base gate of every KS test"),
    group: Optional[List[int]] = typer.Option(None, help="Run only these groups (repeatable)"),
    out: Optional[Path] = typer.Option(None, "--out"),
    verbose: bool = typer.Option(False, "-v", "--verbose"),
    log_file: Optional[Path] = typer.Option(None),
):
    """Run the full certification suite under one master seed."""
    setup_logging(verbose, log_file, console)
    with _exit_on_error(verbose):
        config = RunConfig(master_seed=parse_seed(seed), replicas=replicas, workers=workers,
                           significance=significance, points=points)
        with _progress("Suite") as callback:
            payload = run_suite(config, group or None, callback)
        if out is not None:
            write_report_json(out, payload)

    table = Table(title=f"masspart {__version__} suite (seed {config.master_seed:#x})")
    table.add_column("#", justify="right")
    table.add_column("Group", style="cyan")
    table.add_column("Tests", justify="right")
    table.add_column("Time (s)", justify="right")
    table.add_column("Status", style="magenta")
    for g in payload["groups"]:
        table.add_row(str(g["group"]), g["title"], str(len(g["reports"])), f"{g['elapsed_seconds']:.1f}",
                      "[green]PASS[/green]" if g["passed"] else "[red]FAIL[/red]")
    console.print(table)
    for number, name in failing_tests(payload):
        console.print(f"[red]FAILED[/red] group {number}: {name}")
    if out is None:
        sys.stdout.write(json.dumps(payload, indent=4) + "\n")
    raise typer.Exit(EXIT_OK if payload["passed"] else EXIT_FAIL)


@app.command("list")
def list_representations():
    """List the available representations."""
    table = Table(title="Representations")
    table.add_column("Name", style="cyan")
    table.add_column("Exact", justify="center")
    table.add_column("Description")
    for rep in REPRESENTATIONS.values():
        table.add_row(rep.name, "yes" if rep.exact else "approx", rep.summary)
    console.print(table)


def main():
    app()


if __name__ == "__main__":
    main()
