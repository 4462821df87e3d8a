"""Deterministic SVG plots of a trajectory: phase portraits, rho(t) and E(t)."""

import io
from pathlib import Path

import matplotlib
from matplotlib.figure import Figure

from genfric.errors import TrajectoryFormatError
from genfric.output.files import atomic_write
from genfric.sim.motion import Trajectory

# Fixed salt and no date metadata keep repeated renders byte-identical
_SVG_RC = {"svg.hashsalt": "genfric", "svg.fonttype": "path", "path.simplify": False}

PANEL_SIZE = (4.0, 3.5)


def plot_svg(traj: Trajectory) -> bytes:
    """Render ``traj`` as SVG bytes.

    Raises:
        TrajectoryFormatError: If the trajectory has no samples
    """
    if not traj.samples:
        raise TrajectoryFormatError("Cannot plot an empty trajectory")
    n = traj.n
    t = traj.times
    states = traj.states
    single = len(traj.samples) == 1

    with matplotlib.rc_context(_SVG_RC):
        fig = Figure(figsize=(PANEL_SIZE[0] * max(n, 2), 2 * PANEL_SIZE[1]))
        grid = fig.add_gridspec(2, 2 * n)
        for i in range(n):
            ax = fig.add_subplot(grid[0, 2 * i : 2 * i + 2])
            x, y = states[:, 2 * i], states[:, 2 * i + 1]
            if not single:
                ax.plot(x, y, linewidth=0.8, color="tab:blue")
            ax.plot(x[:1], y[:1], marker="o", linestyle="none", color="tab:red")
            ax.set_xlabel(f"x{i + 1}")
            ax.set_ylabel(f"y{i + 1}")
            ax.set_title(f"oscillator {i + 1}")

        for col, name, label in ((0, "rho", "rho(t)"), (1, "energy", "E(t)")):
            ax = fig.add_subplot(grid[1, col * n : (col + 1) * n])
            ax.plot(t, traj.column(name), marker="o" if single else None, linewidth=0.8)
            ax.set_xlabel("t")
            ax.set_title(label)

        fig.tight_layout()
        buf = io.BytesIO()
        fig.savefig(buf, format="svg", metadata={"Date": None})
    return buf.getvalue()


def render_plot(traj: Trajectory, path: Path) -> Path:
    """Atomically write the SVG plot of ``traj`` to ``path``."""
    return atomic_write(path, plot_svg(traj))
