"""Trajectory CSV: ``t,x1,y1,...,xN,yN,u,sigma,rho,h_res,energy``."""

import csv
import io
from pathlib import Path

import numpy as np

from genfric.errors import TrajectoryFormatError
from genfric.output.files import atomic_write
from genfric.sim.motion import Sample, Trajectory

TAIL_COLUMNS = ("u", "sigma", "rho", "h_res", "energy")


def trajectory_header(n: int) -> list[str]:
    """Column names for an N-oscillator trajectory."""
    cols = ["t"]
    for i in range(1, n + 1):
        cols.extend([f"x{i}", f"y{i}"])
    cols.extend(TAIL_COLUMNS)
    return cols


def _fmt(v: float) -> str:
    return f"{v:.17g}"


class CsvWriter:
    """Formats trajectories as CSV with 17 significant digits."""

    def format(self, traj: Trajectory) -> str:
        """Render ``traj`` after re-validating its sample invariants.

        Raises:
            TrajectoryFormatError: If the trajectory violates an invariant
        """
        traj.validate()
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(trajectory_header(traj.n))
        for s in traj.samples:
            row = [s.t, *s.state, s.u, s.sigma, s.rho, s.h_res, s.energy]
            writer.writerow([_fmt(float(v)) for v in row])
        return buf.getvalue()

    def write(self, traj: Trajectory, path: Path) -> Path:
        """Atomically write ``traj`` to ``path``."""
        return atomic_write(path, self.format(traj))


def read_trajectory(path: Path) -> Trajectory:
    """Load a trajectory CSV written by :class:`CsvWriter`.

    Frequencies are not stored in the file; the returned trajectory carries
    placeholder omegas of 1 and is meant for plotting and comparison.

    Raises:
        TrajectoryFormatError: If the file is missing, empty or malformed
    """
    try:
        text = Path(path).read_text()
    except OSError as e:
        raise TrajectoryFormatError(f"Cannot read trajectory file {path}: {e}") from None
    rows = list(csv.reader(io.StringIO(text)))
    if not rows:
        raise TrajectoryFormatError(f"{path}: empty file")
    header = rows[0]
    width = len(header)
    n = (width - 1 - len(TAIL_COLUMNS)) // 2
    if n < 1 or header != trajectory_header(n):
        raise TrajectoryFormatError(f"{path}: unexpected header {','.join(header)}")

    samples = []
    for lineno, row in enumerate(rows[1:], start=2):
        if not row:
            continue
        if len(row) != width:
            raise TrajectoryFormatError(
                f"{path}:{lineno}: expected {width} fields, got {len(row)}"
            )
        try:
            values = [float(v) for v in row]
        except ValueError:
            raise TrajectoryFormatError(f"{path}:{lineno}: non-numeric field") from None
        t, state, tail = values[0], values[1 : 1 + 2 * n], values[1 + 2 * n :]
        u, sigma, rho, h_res, e = tail
        samples.append(
            Sample(t=t, state=np.array(state), u=u, sigma=sigma, rho=rho, h_res=h_res, energy=e)
        )

    traj = Trajectory(omegas=(1.0,) * n, samples=samples)
    traj.validate()
    return traj
