"""Run configuration: TOML files of flat ``[section]`` tables, validated with pydantic.

Every section is optional except ``[system]`` and ``[state]``. Unknown sections
and keys are rejected. Errors are reported as :class:`ConfigError` with the
line of the offending entry.
"""

from __future__ import annotations

import importlib.resources
import re

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib
from pathlib import Path

from pydantic import (
    BaseModel,
    ConfigDict,
    Field,
    ValidationError,
    field_validator,
    model_validator,
)

from genfric.control import ControlLaw, StagePolicy
from genfric.errors import ConfigError
from genfric.model import DEFAULT_MAX_SEARCH_SIZE, OscillatorSystem
from genfric.sim.motion import SimConfig, SolverLimits, SolverSettings, StepSettings
from genfric.sim.sweep import DEFAULT_GRID_MAX_POINTS, DEFAULT_RATIO, validate_ladder
from genfric.support import QuadratureSpec


class _Section(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)


class SystemSection(_Section):
    """Oscillator frequencies."""

    omegas: list[float] = Field(min_length=1)

    @field_validator("omegas")
    @classmethod
    def validate_omegas(cls, v: list[float]) -> list[float]:
        """Every frequency must be positive."""
        for w in v:
            if not w > 0 or w == float("inf"):
                raise ValueError(f"every omega must be positive and finite, got {w}")
        return v


class StateSection(_Section):
    """Initial state (x1, y1, ..., xN, yN)."""

    initial: list[float] = Field(min_length=2)


class SweepSection(_Section):
    """eps ladder for the convergence sweep; t_max overrides [sim] t_max."""

    ladder: list[float] = Field(default_factory=lambda: [1e-1, 1e-2, 1e-3, 1e-4])
    ratio: float = Field(default=DEFAULT_RATIO, gt=0, le=1)
    probe_sizes: list[float] = Field(default_factory=lambda: [1e-6])
    probe_epsilon: float | None = Field(default=None, gt=0)
    grid_max_points: int = Field(default=DEFAULT_GRID_MAX_POINTS, ge=2)
    t_max: float | None = Field(default=None, gt=0)

    @field_validator("ladder")
    @classmethod
    def check_ladder(cls, v: list[float]) -> list[float]:
        """At least three positive, non-increasing widths."""
        return validate_ladder(v)

    @field_validator("probe_sizes")
    @classmethod
    def validate_probes(cls, v: list[float]) -> list[float]:
        if any(d <= 0 for d in v):
            raise ValueError("probe sizes must be positive")
        return v


class ResonanceSection(_Section):
    bound: int = Field(default=10, ge=1)
    tolerance: float | None = Field(default=None, gt=0)
    max_search_size: int = Field(default=DEFAULT_MAX_SEARCH_SIZE, ge=1)


class SupportSection(_Section):
    """Reduced momentum evaluated by ``support-eval``."""

    z: list[float] | None = None
    force_quadrature: bool = False


class CheckSection(_Section):
    """Invariant battery settings."""

    samples: int = Field(default=20, ge=1)
    seed: int = 0
    residual_tol: float = Field(default=1e-6, gt=0)
    hamiltonian_tol: float = Field(default=1e-5, gt=0)
    sweep: bool = True


class OutputSection(_Section):
    directory: str = "out"
    stem: str = "run"
    plot: bool = True


class RunConfig(_Section):
    """Complete configuration for one genfric run."""

    system: SystemSection
    state: StateSection
    quadrature: QuadratureSpec = Field(default_factory=QuadratureSpec)
    solver: SolverLimits = Field(default_factory=SolverLimits)
    control: ControlLaw = Field(default_factory=ControlLaw)
    stages: StagePolicy | None = None
    sim: StepSettings = Field(default_factory=StepSettings)
    sweep: SweepSection = Field(default_factory=SweepSection)
    resonance: ResonanceSection = Field(default_factory=ResonanceSection)
    support: SupportSection = Field(default_factory=SupportSection)
    check: CheckSection = Field(default_factory=CheckSection)
    output: OutputSection = Field(default_factory=OutputSection)

    @model_validator(mode="after")
    def check_dimensions(self) -> RunConfig:
        """State and z lengths must match the number of frequencies."""
        n = len(self.system.omegas)
        if len(self.state.initial) != 2 * n:
            raise ValueError(
                f"state.initial has {len(self.state.initial)} entries, expected 2N = {2 * n}"
            )
        if self.support.z is not None and len(self.support.z) != n:
            raise ValueError(f"support.z has {len(self.support.z)} entries, expected N = {n}")
        return self

    def oscillators(self) -> OscillatorSystem:
        return OscillatorSystem(tuple(self.system.omegas))

    def sim_config(self) -> SimConfig:
        """SimConfig assembled from [sim], [control], [stages], [solver], [quadrature]."""
        solver = SolverSettings(**self.solver.model_dump(), quadrature=self.quadrature)
        return SimConfig(
            **self.sim.model_dump(),
            law=self.control,
            stages=self.stages,
            solver=solver,
        )

    def sweep_config(self) -> SimConfig:
        """SimConfig for sweep rungs ([sweep] t_max replaces [sim] t_max)."""
        cfg = self.sim_config()
        if self.sweep.t_max is not None:
            cfg = cfg.model_copy(update={"t_max": self.sweep.t_max})
        return cfg


_LINE_RE = re.compile(r"line (\d+)")
_HEADER_RE = re.compile(r"^\s*\[\s*([A-Za-z0-9_\-\.]+)\s*\]")
_KEY_RE = re.compile(r"^\s*([A-Za-z0-9_\-]+)\s*=")


def _locate(text: str, loc: tuple) -> int | None:
    """Line of the entry a pydantic error location points at, if it can be found."""
    parts = [str(p) for p in loc if isinstance(p, str)]
    if not parts:
        return None
    section, key = parts[0], parts[1] if len(parts) > 1 else None
    current = None
    header_line = None
    for lineno, line in enumerate(text.splitlines(), start=1):
        header = _HEADER_RE.match(line)
        if header:
            current = header.group(1)
            if current == section:
                header_line = lineno
            continue
        if current != section:
            continue
        if key is None:
            return header_line
        match = _KEY_RE.match(line)
        if match and match.group(1) == key:
            return lineno
    return header_line


def _format_validation(err: ValidationError) -> tuple[str, tuple]:
    first = err.errors()[0]
    loc = tuple(first.get("loc", ()))
    where = ".".join(str(p) for p in loc if isinstance(p, str))
    msg = first.get("msg", "invalid value")
    msg = msg.removeprefix("Value error, ")
    return (f"{where}: {msg}" if where else msg), loc


def parse_config(text: str, source: str | None = None) -> RunConfig:
    """Parse and validate run-config text.

    Args:
        text: TOML text with flat [section] tables
        source: Optional file name used in messages

    Returns:
        Validated RunConfig

    Raises:
        ConfigError: On a syntax error, duplicate key, unknown key or
            violated constraint (the first one found, with its line)
    """
    prefix = f"{source}: " if source else ""
    try:
        data = tomllib.loads(text)
    except tomllib.TOMLDecodeError as e:
        line = getattr(e, "lineno", None)
        if line is None:
            match = _LINE_RE.search(str(e))
            line = int(match.group(1)) if match else None
        raise ConfigError(f"{prefix}invalid syntax: {e}", line=line) from None

    try:
        return RunConfig.model_validate(data)
    except ValidationError as e:
        message, loc = _format_validation(e)
        raise ConfigError(f"{prefix}{message}", line=_locate(text, loc)) from None
    except ValueError as e:
        raise ConfigError(f"{prefix}{e}") from None


def load_config(path: Path) -> RunConfig:
    """Load and validate a run-config file.

    Raises:
        ConfigError: If the file cannot be read or does not validate
    """
    try:
        text = Path(path).read_text()
    except OSError as e:
        raise ConfigError(f"cannot read {path}: {e.strerror or e}") from None
    return parse_config(text, source=str(path))


def _bundled_presets() -> dict[str, Path]:
    presets = {}
    try:
        for item in importlib.resources.files("genfric.presets").iterdir():
            if item.name.endswith(".toml"):
                presets[item.name[:-5]] = Path(str(item))
    except (ModuleNotFoundError, TypeError):
        pass
    return presets


def list_presets() -> list[tuple[str, Path]]:
    """Bundled example configs as sorted (name, path) pairs."""
    return sorted(_bundled_presets().items())


def get_preset_path(name: str) -> Path | None:
    """Path of a bundled preset, or None when no preset has that name."""
    return _bundled_presets().get(name)


def load_preset(name: str) -> RunConfig:
    """Load a bundled preset by name.

    Raises:
        ConfigError: If no preset has that name
    """
    path = get_preset_path(name)
    if path is None:
        known = ", ".join(n for n, _ in list_presets()) or "none"
        raise ConfigError(f"unknown preset '{name}' (available: {known})")
    return load_config(path)
