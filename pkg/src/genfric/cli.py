"""CLI interface for genfric."""

import json
import logging
from collections.abc import Iterator
from contextlib import contextmanager
from pathlib import Path
from typing import Annotated, Any, NoReturn

import typer
from rich.console import Console
from rich.logging import RichHandler
from rich.table import Table

from genfric import __version__
from genfric.battery import BatteryReport, run_battery
from genfric.config import RunConfig, get_preset_path, list_presets, load_config
from genfric.dualnorm import duality_residuals, solve_dual
from genfric.errors import (
    ConfigError,
    DegenerateStateError,
    DimensionError,
    DualSolverError,
    IntegrationError,
    SearchSpaceTooLargeError,
    TrajectoryFormatError,
)
from genfric.output import CsvWriter, JsonWriter, read_trajectory, render_plot
from genfric.output.json_writer import (
    rho_summary,
    support_summary,
    sweep_summary,
    system_summary,
    trajectory_summary,
)
from genfric.sim.motion import Termination, integrate
from genfric.sim.sweep import epsilon_sweep
from genfric.support import h_eval

EXIT_VALIDATION = 1
EXIT_NUMERICAL = 2

MAIN_EPILOG = """
[bold]Commands at a glance:[/bold]

  [cyan]simulate[/cyan]      Integrate the damped motion, write CSV/JSON/SVG
  [cyan]support-eval[/cyan]  Evaluate the limit support function at support.z
  [cyan]rho-eval[/cyan]      Solve for rho and its gradient at state.initial
  [cyan]sweep[/cyan]         eps -> 0 convergence sweep with continuity probes
  [cyan]check[/cyan]         Run the invariant battery (exit 2 on any violation)
  [cyan]plot[/cyan]          Render a trajectory CSV as SVG

[bold]Exit codes:[/bold] 0 success, 1 invalid config or input, 2 numerical failure.

[bold]Quick Start:[/bold]

  genfric init --preset two-oscillators -o run.toml
  genfric simulate -c run.toml
  genfric check -c run.toml
"""

app = typer.Typer(
    name="genfric",
    help="Damp coupled linear oscillators with generalized dry-friction feedback.",
    no_args_is_help=True,
    epilog=MAIN_EPILOG,
    rich_markup_mode="rich",
)

presets_app = typer.Typer(help="Inspect the bundled example configs.")
app.add_typer(presets_app, name="presets")

# Set by the --quiet callback
_quiet_mode: bool = False

console = Console()
# Status lines and logs go to stderr so stdout stays clean for --json
stderr_console = Console(stderr=True)


def version_callback(value: bool) -> None:
    """Print version and exit."""
    if value:
        print(f"genfric {__version__}")
        raise typer.Exit()


def plain_callback(value: bool) -> None:
    """Enable plain text mode (no Rich formatting)."""
    global console, stderr_console
    if value:
        console = Console(force_terminal=False, no_color=True, highlight=False)
        stderr_console = Console(stderr=True, force_terminal=False, no_color=True, highlight=False)


def quiet_callback(value: bool) -> None:
    """Enable quiet mode (suppress status messages)."""
    global _quiet_mode
    _quiet_mode = value


def configure_logging(verbose: bool) -> None:
    """Route library logging through a RichHandler on stderr."""
    if verbose:
        level = logging.DEBUG
    elif _quiet_mode:
        level = logging.ERROR
    else:
        level = logging.WARNING
    handler = RichHandler(console=stderr_console, show_path=False, show_time=False)
    logging.basicConfig(level=level, format="%(message)s", handlers=[handler], force=True)


def status_print(message: str, *, is_json_output: bool = False) -> None:
    """Print a status message to stderr unless quiet or emitting JSON."""
    if _quiet_mode or is_json_output:
        return
    stderr_console.print(message)


def _fail(message: str, code: int) -> NoReturn:
    stderr_console.print(f"[red]{message}[/red]")
    raise typer.Exit(code)


@contextmanager
def handle_errors() -> Iterator[None]:
    """Map library exceptions onto the exit-code contract."""
    try:
        yield
    except ConfigError as e:
        _fail(f"Config error: {e}", EXIT_VALIDATION)
    except TrajectoryFormatError as e:
        _fail(f"Trajectory error: {e}", EXIT_VALIDATION)
    except (DualSolverError, IntegrationError) as e:
        _fail(f"Numerical failure: {e}", EXIT_NUMERICAL)
    except (DimensionError, DegenerateStateError, SearchSpaceTooLargeError, ValueError) as e:
        _fail(f"Invalid input: {e}", EXIT_VALIDATION)


@app.callback()
def main(
    version: Annotated[
        bool | None,
        typer.Option("--version", "-v", callback=version_callback, is_eager=True),
    ] = None,
    plain: Annotated[
        bool,
        typer.Option(
            "--plain",
            "--no-rich",
            callback=plain_callback,
            is_eager=True,
            help="Disable Rich formatting (for CI/piping).",
        ),
    ] = False,
    quiet: Annotated[
        bool,
        typer.Option(
            "--quiet",
            "-q",
            callback=quiet_callback,
            is_eager=True,
            help="Suppress status messages. JSON output is always clean.",
        ),
    ] = False,
    verbose: Annotated[
        bool,
        typer.Option("--verbose", help="Show solver and stepper debug logs."),
    ] = False,
) -> None:
    """genfric: generalized dry-friction damping of linear oscillators."""
    configure_logging(verbose)


ConfigOption = Annotated[
    Path,
    typer.Option("--config", "-c", help="Run config TOML file"),
]
OutOption = Annotated[
    Path | None,
    typer.Option("--out", "-o", help="Output directory (overrides output.directory)"),
]
JsonOption = Annotated[
    bool,
    typer.Option("--json", help="Also print the JSON summary to stdout"),
]


def _load(path: Path) -> RunConfig:
    try:
        return load_config(path)
    except ConfigError as e:
        _fail(f"Config error: {e}", EXIT_VALIDATION)


def _out_dir(cfg: RunConfig, out: Path | None) -> Path:
    return out if out is not None else Path(cfg.output.directory)


def _emit(kind: str, data: dict[str, Any], path: Path, json_output: bool) -> None:
    writer = JsonWriter()
    writer.write(kind, data, path)
    if json_output:
        typer.echo(writer.format(kind, data), nl=False)
    status_print(f"[dim]Summary written: {path}[/dim]", is_json_output=json_output)


SIMULATE_EXAMPLES = """
[bold]Examples:[/bold]

  [dim]$ genfric simulate -c run.toml[/dim]
  [dim]$ genfric simulate -c run.toml -o results/ --json[/dim]

Writes <stem>.csv (columns t,x1,y1,...,u,sigma,rho,h_res,energy), <stem>.json
and, unless output.plot = false, <stem>.svg.
"""


@app.command(epilog=SIMULATE_EXAMPLES)
def simulate(
    config: ConfigOption,
    out: OutOption = None,
    json_output: JsonOption = False,
) -> None:
    """Integrate the regularized closed loop from state.initial."""
    cfg = _load(config)
    out_dir = _out_dir(cfg, out)
    with handle_errors():
        sys = cfg.oscillators()
        status_print(
            f"[bold]Simulating[/bold] N={sys.n} up to t={cfg.sim.t_max:g}",
            is_json_output=json_output,
        )
        traj = integrate(sys, cfg.state.initial, cfg.sim_config())
        if not traj.samples:
            _fail("Numerical failure: dual solver failed before the first sample", EXIT_NUMERICAL)

        stem = cfg.output.stem
        csv_path = CsvWriter().write(traj, out_dir / f"{stem}.csv")
        status_print(f"[dim]Trajectory written: {csv_path}[/dim]", is_json_output=json_output)
        if cfg.output.plot:
            svg_path = render_plot(traj, out_dir / f"{stem}.svg")
            status_print(f"[dim]Plot written: {svg_path}[/dim]", is_json_output=json_output)
        summary = trajectory_summary(sys, traj)
        _emit("simulate", summary, out_dir / f"{stem}.json", json_output)

    if not json_output:
        table = Table(title="Simulation")
        table.add_column("Quantity", style="cyan")
        table.add_column("Value")
        for key in ("reason", "t_end", "samples", "rho_initial", "rho_final", "energy_dissipated"):
            value = summary[key]
            table.add_row(key, f"{value:.6g}" if isinstance(value, float) else str(value))
        console.print(table)
    if traj.reason is Termination.SOLVER_FAILURE:
        _fail("Numerical failure: dual solver failed mid-trajectory", EXIT_NUMERICAL)


@app.command("support-eval")
def support_eval(
    config: ConfigOption,
    out: OutOption = None,
    json_output: JsonOption = False,
) -> None:
    """Evaluate the limit support function at support.z."""
    cfg = _load(config)
    if cfg.support.z is None:
        _fail("Config error: support.z is required for support-eval", EXIT_VALIDATION)
    with handle_errors():
        value = h_eval(
            cfg.support.z,
            cfg.quadrature,
            force_quadrature=cfg.support.force_quadrature,
        )
        data = {
            "system": system_summary(cfg.oscillators()),
            **support_summary(cfg.support.z, value),
        }
        path = _out_dir(cfg, out) / f"{cfg.output.stem}-support.json"
        _emit("support-eval", data, path, json_output)
    if not json_output:
        console.print(f"H(z) = {value.value:.10f}  (error estimate {value.estimated_error:.2e})")


@app.command("rho-eval")
def rho_eval(
    config: ConfigOption,
    out: OutOption = None,
    json_output: JsonOption = False,
) -> None:
    """Solve for rho, z_opt and d rho/dx at state.initial."""
    cfg = _load(config)
    with handle_errors():
        sys = cfg.oscillators()
        spec = cfg.quadrature
        sol = solve_dual(
            sys, cfg.state.initial, tol=cfg.solver.tol, max_iter=cfg.solver.max_iter, spec=spec
        )
        residuals = duality_residuals(sys, cfg.state.initial, sol, spec)
        data = {
            "system": system_summary(sys),
            **rho_summary(cfg.state.initial, sol, residuals),
        }
        _emit("rho-eval", data, _out_dir(cfg, out) / f"{cfg.output.stem}-rho.json", json_output)
    if not json_output:
        console.print(f"rho = {sol.rho:.10g}  (kkt residual {sol.kkt_residual:.2e})")
    if not sol.converged:
        _fail(f"Numerical failure: dual solver residual {sol.kkt_residual:.3e}", EXIT_NUMERICAL)


@app.command()
def sweep(
    config: ConfigOption,
    out: OutOption = None,
    json_output: JsonOption = False,
) -> None:
    """Integrate every eps in sweep.ladder and compare the trajectories."""
    cfg = _load(config)
    with handle_errors():
        sys = cfg.oscillators()
        status_print(
            f"[bold]Sweeping[/bold] eps over {cfg.sweep.ladder}", is_json_output=json_output
        )
        report = epsilon_sweep(
            sys,
            cfg.state.initial,
            cfg.sweep_config(),
            cfg.sweep.ladder,
            ratio=cfg.sweep.ratio,
            probe_sizes=cfg.sweep.probe_sizes,
            probe_epsilon=cfg.sweep.probe_epsilon,
            grid_max_points=cfg.sweep.grid_max_points,
        )
        data = {"system": system_summary(sys), **sweep_summary(report)}
        _emit("sweep", data, _out_dir(cfg, out) / f"{cfg.output.stem}-sweep.json", json_output)

    if not json_output:
        table = Table(title="eps sweep")
        table.add_column("eps_k -> eps_k+1", style="cyan")
        table.add_column("d_k")
        for k, d in enumerate(report.distances):
            table.add_row(f"{report.ladder[k]:g} -> {report.ladder[k + 1]:g}", f"{d:.3e}")
        console.print(table)
        if report.cauchy:
            verdict = "[green]contracting[/green]"
        else:
            verdict = "[yellow]not contracting[/yellow]"
        console.print(f"Cauchy test (ratio {report.ratio:g}): {verdict}")
        for p in report.probes:
            console.print(
                f"probe delta={p.delta:g}: deviation {p.deviation:.3e}, gain {p.gain:.3g}"
            )


def _print_battery(report: BatteryReport) -> None:
    table = Table(title="Invariant battery")
    table.add_column("Check", style="cyan")
    table.add_column("Result")
    for c in report.checks:
        table.add_row(c.name, "[green]pass[/green]" if c.passed else "[red]FAIL[/red]")
    console.print(table)
    if report.resonance.get("resonant"):
        console.print(f"[yellow]Resonant frequencies[/yellow]: {report.resonance['minimal']}")


@app.command()
def check(
    config: ConfigOption,
    out: OutOption = None,
    json_output: JsonOption = False,
) -> None:
    """Run the invariant battery; exits 2 when any check fails."""
    cfg = _load(config)
    with handle_errors():
        status_print("[bold]Running invariant battery[/bold]", is_json_output=json_output)
        report = run_battery(cfg)
        data = {
            "system": system_summary(cfg.oscillators()),
            "passed": report.passed,
            "failures": report.failures,
            "resonance": report.resonance,
            "checks": {c.name: {"passed": c.passed, **c.detail} for c in report.checks},
        }
        _emit("check", data, _out_dir(cfg, out) / f"{cfg.output.stem}-check.json", json_output)
    if not json_output:
        _print_battery(report)
    if not report.passed:
        _fail(f"Invariant violations: {', '.join(report.failures)}", EXIT_NUMERICAL)


@app.command()
def plot(
    input_file: Annotated[
        Path,
        typer.Option("--input", "-i", help="Trajectory CSV written by simulate"),
    ],
    out: Annotated[
        Path | None,
        typer.Option("--out", "-o", help="SVG path (default: input with .svg suffix)"),
    ] = None,
) -> None:
    """Render a trajectory CSV as a deterministic SVG."""
    target = out if out is not None else input_file.with_suffix(".svg")
    if target.is_dir():
        target = target / f"{input_file.stem}.svg"
    with handle_errors():
        traj = read_trajectory(input_file)
        path = render_plot(traj, target)
    status_print(f"[dim]Plot written: {path}[/dim]")


CONFIG_TEMPLATE = """\
# genfric run config
# Generated by: genfric init
#
# Flat [section] tables of key = value pairs. Unknown keys are rejected.
# Run with: genfric simulate -c <this-file>

[system]
omegas = [1.0, 1.4142135623730951]   # eigenfrequencies, all > 0

[state]
initial = [4.0, 8.0, -3.0, 9.0]      # x1, y1, x2, y2, ...

[quadrature]
nodes_per_axis = 64                  # >= 2
scheme = "chebyshev-gauss"           # or "uniform-angle"

[solver]
tol = 1e-8
max_iter = 200
# reuse_delta = 0.0                  # reuse the previous z_opt within this relative move

[control]
# epsilon = 1e-3                     # default: epsilon_scale * rho(initial)
epsilon_scale = 1e-3
smoother = "saturation"              # or "tanh"
amplitude = 1.0                      # 0 < amplitude <= 1

# Remove this section for a single-stage run
[stages]
rho_hi = 10.0
rho_lo = 1.0
a_mid = 0.5

[sim]
t_max = 50.0
h_init = 1e-3
h_max = 0.1
rtol = 1e-9
atol = 1e-12
# stall_window = 6.283               # default: 2 pi / min(omegas)
stall_delta = 1e-6
record_stride = 1

[sweep]
ladder = [1e-1, 1e-2, 1e-3, 1e-4]
ratio = 0.9
probe_sizes = [1e-6]
t_max = 3.0

[resonance]
bound = 10

[support]
z = [1.0, 1.0]

[output]
directory = "out"
stem = "run"
plot = true
"""


@app.command()
def init(
    output: Annotated[
        Path,
        typer.Option("--output", "-o", help="Config file to create"),
    ] = Path("genfric.toml"),
    preset: Annotated[
        str | None,
        typer.Option("--preset", "-p", help="Start from a bundled preset"),
    ] = None,
    force: Annotated[
        bool,
        typer.Option("--force", "-f", help="Overwrite an existing file"),
    ] = False,
) -> None:
    """Write a commented run config to start from."""
    if output.exists() and not force:
        _fail(f"{output} already exists (use --force to overwrite)", EXIT_VALIDATION)
    if preset is not None:
        path = get_preset_path(preset)
        if path is None:
            known = ", ".join(name for name, _ in list_presets())
            _fail(f"Unknown preset '{preset}'. Available: {known}", EXIT_VALIDATION)
        text = path.read_text()
    else:
        text = CONFIG_TEMPLATE
    output.parent.mkdir(parents=True, exist_ok=True)
    output.write_text(text)
    status_print(f"[green]Created {output}[/green]")


@presets_app.command("list")
def presets_list(
    json_output: Annotated[
        bool,
        typer.Option("--json", help="Output as JSON for programmatic parsing"),
    ] = False,
) -> None:
    """List bundled example configs."""
    rows = []
    for name, path in list_presets():
        try:
            cfg = load_config(path)
            rows.append({"name": name, "omegas": cfg.system.omegas, "n": len(cfg.system.omegas)})
        except ConfigError as e:
            rows.append({"name": name, "error": str(e)})

    if json_output:
        typer.echo(json.dumps(rows, indent=2))
        return

    table = Table(title="Bundled presets")
    table.add_column("Name", style="cyan")
    table.add_column("N")
    table.add_column("Frequencies")
    for row in rows:
        if "error" in row:
            table.add_row(row["name"], "[red]error[/red]", row["error"])
        else:
            omegas = ", ".join(f"{w:.6g}" for w in row["omegas"])
            table.add_row(row["name"], str(row["n"]), omegas)
    console.print(table)


@presets_app.command("show")
def presets_show(
    name: Annotated[str, typer.Argument(help="Preset name")],
) -> None:
    """Print a bundled preset."""
    path = get_preset_path(name)
    if path is None:
        known = ", ".join(n for n, _ in list_presets())
        _fail(f"Unknown preset '{name}'. Available: {known}", EXIT_VALIDATION)
    typer.echo(path.read_text(), nl=False)

