#!/usr/bin/env python3
"""
cbfland CLI - multi-UAV landing simulator with CBF safety filtering

Runs landing scenarios in which every UAV descends onto its (possibly
moving) UGV pad while a quadratic-program safety filter keeps the landing
and inter-UAV barriers nonnegative, writes the results as CSV/JSON, runs the
built-in validation suites and sweeps barrier/filter gains.

Exit codes: 0 completed, 1 scenario/config/I-O error or failed validation,
3 run halted (QP infeasible or non-finite state), 4 invariant breach.
"""

from pathlib import Path
from typing import Any, Dict, List, Optional

import typer
from rich.console import Console
from rich.panel import Panel
from rich.progress import BarColumn, Progress, SpinnerColumn, TaskProgressColumn, TextColumn
from rich.table import Table
from rich.text import Text

from . import __version__
from .config.loader import CbfLandSettings, load_config, validate_config
from .config.scenario import SCENARIO_DIR, Fidelity
from .core.pipeline import RunPipeline, parse_grid, run_sweep
from .core.validation import Fault, run_validation
from .logs.logger import get_logger, setup_logging

app = typer.Typer(
    name="cbfland",
    help="🛬 cbfland - multi-UAV landing simulator with CBF safety filtering",
    add_completion=False,
    rich_markup_mode="rich",
)
console = Console()


def version_callback(value: bool):
    """Show version information."""
    if value:
        console.print(f"[bold blue]cbfland[/bold blue] version [green]{__version__}[/green]")
        raise typer.Exit()


@app.callback()
def main(
    version: Optional[bool] = typer.Option(
        None, "--version", "-V",
        callback=version_callback,
        is_eager=True,
        help="Show version and exit",
    )
):
    """🛬 cbfland - multi-UAV landing simulator with CBF safety filtering

    Simulates UAVs landing on static or moving UGVs while a quadratic-program
    safety filter enforces landing and collision-avoidance barriers.
    """


def _settings(verbose: bool) -> CbfLandSettings:
    """Load settings.json and configure logging; exits 1 on a broken config."""
    try:
        settings = load_config()
    except ValueError as e:
        console.print(f"[red]❌ Configuration error: {e}[/red]")
        raise typer.Exit(1)

    issues = validate_config(settings)
    if issues:
        console.print("[yellow]⚠️  Configuration issues detected:[/yellow]")
        for issue in issues:
            console.print(f"  • {issue}")

    logging_config = settings.logging.model_dump()
    if verbose:
        logging_config["level"] = "INFO"
    setup_logging(logging_config)
    return settings


def _fmt(value: Any, spec: str = ".4g") -> str:
    if value is None:
        return "-"
    if isinstance(value, float):
        return format(value, spec)
    return str(value)


def _parse_fidelity(fidelity: Optional[str]) -> Optional[str]:
    if fidelity is None:
        return None
    try:
        return Fidelity.parse(fidelity).value
    except ValueError:
        console.print(f"[red]❌ Unknown fidelity {fidelity!r}; use kinematic or full[/red]")
        raise typer.Exit(1)


def _show_run_summary(result: Dict[str, Any]) -> None:
    metrics = result["metrics"]
    table = Table(title=f"Run summary: {metrics['scenario']} ({metrics['fidelity']})")
    table.add_column("Metric", style="cyan")
    table.add_column("Value", style="white")
    touchdowns = ", ".join(f"UAV {e['uav']} @ {e['time']:.2f} s" for e in metrics["touchdowns"]) or "none"
    table.add_row("Ticks", str(metrics["ticks"]))
    table.add_row("Touchdowns", touchdowns)
    table.add_row("min h_l after crossing", _fmt(metrics["min_lcbf_after_crossing"]))
    table.add_row("min h_s", _fmt(metrics["min_scbf"]))
    table.add_row("min UAV distance [m]", _fmt(metrics["min_distance"]))
    table.add_row("max |u* - u_nom| [m/s]", _fmt(metrics["max_deviation"]))
    table.add_row("max KKT residual", _fmt(metrics["max_kkt_residual"], ".2e"))
    table.add_row("control sharing held", "yes" if metrics["sharing_ok_all"] else "no")
    console.print(table)


@app.command()
def run(
    scenario: str = typer.Argument(..., help="Scenario file, or the name of a bundled scenario"),
    fidelity: Optional[str] = typer.Option(
        None, "--fidelity", "-f",
        help="kinematic or full (defaults to the scenario's setting)",
    ),
    out: Optional[Path] = typer.Option(
        None, "--out", "-o",
        help="Output directory (default: <output.base_dir>/<scenario name>)",
    ),
    verbose: bool = typer.Option(False, "--verbose", "-v", help="Log progress at INFO level"),
):
    """🚁 Simulate a landing scenario and write its result files

    Writes states.csv, barriers.csv, inputs.csv, landing_errors.csv,
    margins.csv, metrics.json (and attitude.csv for full dynamics).

    Examples:
        cbfland run scenario1
        cbfland run scenarios/scenario2.cfg --fidelity full --out results/s2
    """
    settings = _settings(verbose)
    fidelity = _parse_fidelity(fidelity)
    logger = get_logger("cbfland.cli")
    out_dir = out if out is not None else Path(settings.output.base_dir) / Path(scenario).stem

    header = Text()
    header.append("🛬 cbfland run\n", style="bold blue")
    header.append(f"Scenario: {scenario}\n", style="green")
    header.append(f"Fidelity: {fidelity or 'from scenario'}\n", style="yellow")
    header.append(f"Output: {out_dir}", style="cyan")
    console.print(Panel(header, title="[bold]Starting Simulation[/bold]", border_style="blue"))

    with Progress(
        SpinnerColumn(),
        TextColumn("[progress.description]{task.description}"),
        BarColumn(),
        TaskProgressColumn(),
        console=console,
        transient=True,
    ) as progress:
        task = progress.add_task("[cyan]Preparing...", total=100)
        pipeline = RunPipeline(
            settings,
            progress_callback=lambda desc, pct: progress.update(task, completed=pct, description=f"[cyan]{desc}"),
        )
        result = pipeline.run(scenario, out_dir, fidelity=fidelity)

    status = result["status"]
    logger.info("run_command_finished", scenario=scenario, status=status)

    if status == "error":
        console.print(f"[red]❌ {result['error']}[/red]")
        for issue in result.get("issues", []):
            console.print(f"  • {issue}")
        raise typer.Exit(result["exit_code"])

    _show_run_summary(result)
    console.print(f"[cyan]📂 Results written to {out_dir}[/cyan]")

    if status == "halted":
        halt = result["halt"]
        row = f", row {halt['row_name']}" if halt.get("row_name") else ""
        console.print(
            f"[red]❌ Run halted at tick {halt['tick']} (t = {halt['time']:.3f} s){row}: "
            f"{halt['message']}[/red]"
        )
    elif status == "breach":
        breach = result["breach"]
        console.print(
            f"[red]❌ Invariant breach: {breach['barrier']} = {breach['value']:.3e} "
            f"at tick {breach['tick']} (t = {breach['time']:.3f} s)[/red]"
        )
    else:
        console.print("[green]✅ Run completed with every barrier invariant intact[/green]")
    raise typer.Exit(result["exit_code"])


@app.command()
def validate(
    qp_tol: Optional[float] = typer.Option(
        None, "--qp-tol",
        help="Solver tolerance used by the QP oracle check",
    ),
    inject_fault: Optional[List[str]] = typer.Option(
        None, "--inject-fault",
        help="Deliberate defect to check the suites catch it: lcbf-gradient-sign",
    ),
    verbose: bool = typer.Option(False, "--verbose", "-v", help="Log progress at INFO level"),
):
    """🧪 Run the built-in validation suites

    Gradient finite differences, QP against an active-set oracle, pair-row
    bijectivity, rotation round trips, peak shaping and CSV round trip.
    """
    settings = _settings(verbose)
    faults = []
    for name in inject_fault or []:
        try:
            faults.append(Fault(name))
        except ValueError:
            console.print(f"[red]❌ Unknown fault {name!r}; known: "
                          f"{', '.join(f.value for f in Fault)}[/red]")
            raise typer.Exit(1)
    if qp_tol is not None and not qp_tol > 0:
        console.print("[red]❌ --qp-tol must be positive[/red]")
        raise typer.Exit(1)

    with console.status("[cyan]Running validation suites..."):
        results = run_validation(settings.validation, qp_tol=qp_tol, faults=faults)

    table = Table(title="Validation")
    table.add_column("Check", style="cyan")
    table.add_column("Samples", justify="right")
    table.add_column("Worst", justify="right")
    table.add_column("Tolerance", justify="right")
    table.add_column("Result")
    table.add_column("Detail", style="dim")
    for r in results:
        table.add_row(
            r.name, str(r.samples), _fmt(r.worst, ".2e"), _fmt(r.tolerance, ".0e"),
            "[green]pass[/green]" if r.passed else "[red]FAIL[/red]", r.detail,
        )
    console.print(table)

    failed = [r.name for r in results if not r.passed]
    if failed:
        console.print(f"[red]❌ {len(failed)} check(s) failed: {', '.join(failed)}[/red]")
        raise typer.Exit(1)
    console.print("[green]✅ All checks passed[/green]")


@app.command()
def sweep(
    scenario: str = typer.Argument(..., help="Scenario file, or the name of a bundled scenario"),
    grid: str = typer.Option(
        "", "--grid", "-g",
        help='Parameter grid, e.g. "alpha=1,2,4;beta=1;rho=10;sigma=2"',
    ),
    out: Optional[Path] = typer.Option(
        None, "--out", "-o",
        help="Output directory (default: <output.base_dir>/sweep)",
    ),
    fidelity: Optional[str] = typer.Option(None, "--fidelity", "-f", help="kinematic or full"),
    workers: Optional[int] = typer.Option(None, "--workers", "-w", min=1, help="Concurrent runs"),
    verbose: bool = typer.Option(False, "--verbose", "-v", help="Log progress at INFO level"),
):
    """📈 Run a scenario over a grid of alpha, beta, rho and sigma values

    One run per grid cell, each in its own cell_NNN directory, and a
    summary.csv with one row per cell. Failing cells are recorded and the
    sweep carries on.
    """
    settings = _settings(verbose)
    fidelity = _parse_fidelity(fidelity)
    try:
        cells = parse_grid(grid)
    except ValueError as e:
        console.print(f"[red]❌ Invalid grid: {e}[/red]")
        raise typer.Exit(1)
    out_dir = out if out is not None else Path(settings.output.base_dir) / "sweep"

    console.print(f"[blue]📈 Sweeping {scenario} over {len(cells)} cell(s) into {out_dir}[/blue]")
    with console.status("[cyan]Running sweep..."):
        result = run_sweep(scenario, cells, out_dir, settings, fidelity=fidelity, max_workers=workers)

    if result["status"] == "error":
        console.print(f"[red]❌ {result['error']}[/red]")
        for issue in result.get("issues", []):
            console.print(f"  • {issue}")
        raise typer.Exit(result["exit_code"])

    table = Table(title="Sweep summary")
    for column in ("cell", "alpha", "beta", "rho_l", "rho_s", "sigma", "status",
                   "last_touchdown", "min_lcbf_after_crossing", "min_scbf", "min_distance"):
        table.add_column(column, justify="right" if column != "status" else "left")
    for row in result["rows"]:
        table.add_row(*(_fmt(row[c]) for c in (
            "cell", "alpha", "beta", "rho_l", "rho_s", "sigma", "status",
            "last_touchdown", "min_lcbf_after_crossing", "min_scbf", "min_distance",
        )))
    console.print(table)
    console.print(f"[cyan]📋 Summary written to {result['summary_file']}[/cyan]")
    if result["failed_cells"]:
        console.print(f"[yellow]⚠️  Cells not completed safely: {result['failed_cells']}[/yellow]")


@app.command()
def status():
    """📊 Show configuration and bundled scenarios"""
    console.print("[blue]📊 cbfland status[/blue]")
    try:
        settings = load_config()
    except ValueError as e:
        console.print(f"[red]❌ Configuration error: {e}[/red]")
        raise typer.Exit(1)

    issues = validate_config(settings)
    if issues:
        for issue in issues:
            console.print(f"[yellow]⚠️  {issue}[/yellow]")
    else:
        console.print("[green]✅ Configuration valid[/green]")
    console.print(f"[cyan]📂 Output base directory: {settings.output.base_dir}[/cyan]")
    console.print(f"[cyan]🧵 Sweep workers: {settings.sweep.max_workers}[/cyan]")

    scenarios = sorted(SCENARIO_DIR.glob("*.cfg"))
    if not scenarios:
        console.print(f"[red]❌ No bundled scenarios in {SCENARIO_DIR}[/red]")
    for path in scenarios:
        console.print(f"[green]✅ Bundled scenario: {path.stem}[/green]")


if __name__ == "__main__":
    app()
