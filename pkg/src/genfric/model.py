"""Oscillator system model: block matrices, coordinate maps, energy, resonances.

States and momenta are flat float arrays ordered as N pairs,
``(x1, y1, ..., xN, yN)`` and ``(xi1, eta1, ..., xiN, etaN)``.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
from numpy.typing import ArrayLike, NDArray

from genfric.errors import DimensionError, SearchSpaceTooLargeError

FloatArray = NDArray[np.float64]

# Largest lattice the resonance search may enumerate (number of integer vectors)
DEFAULT_MAX_SEARCH_SIZE = 2_000_000


@dataclass(frozen=True)
class OscillatorSystem:
    """N independent oscillators driven by one scalar control.

    Attributes:
        omegas: Eigenfrequencies, all strictly positive
    """

    omegas: tuple[float, ...]

    def __post_init__(self) -> None:
        omegas = tuple(float(w) for w in self.omegas)
        if not omegas:
            raise ValueError("An oscillator system needs at least one frequency")
        for w in omegas:
            if not math.isfinite(w) or w <= 0:
                raise ValueError(f"Frequencies must be positive and finite, got {w}")
        object.__setattr__(self, "omegas", omegas)

    @property
    def n(self) -> int:
        """Number of oscillators."""
        return len(self.omegas)

    @property
    def dim(self) -> int:
        """Phase-space dimension 2N."""
        return 2 * len(self.omegas)

    @cached_property
    def omega(self) -> FloatArray:
        """Frequencies as an array."""
        return np.asarray(self.omegas, dtype=np.float64)

    @cached_property
    def A(self) -> FloatArray:  # noqa: N802
        """Block-diagonal drift matrix with blocks [[0, 1], [-w^2, 0]]."""
        a = np.zeros((self.dim, self.dim))
        for i, w in enumerate(self.omegas):
            a[2 * i, 2 * i + 1] = 1.0
            a[2 * i + 1, 2 * i] = -(w**2)
        return a

    @cached_property
    def B(self) -> FloatArray:  # noqa: N802
        """Control vector stacking (0, 1) per block."""
        b = np.zeros(self.dim)
        b[1::2] = 1.0
        return b

    @cached_property
    def a_norm(self) -> float:
        """Spectral norm of A (max over blocks of max(1, w^2))."""
        return float(max(max(1.0, w**2) for w in self.omegas))

    def check(self, v: ArrayLike, what: str = "state") -> FloatArray:
        """Coerce a vector to a float array of length 2N.

        Raises:
            DimensionError: If the length is wrong or entries are not finite
        """
        arr = np.asarray(v, dtype=np.float64).reshape(-1)
        if arr.shape[0] != self.dim:
            raise DimensionError(
                f"{what} has length {arr.shape[0]}, expected {self.dim} for N={self.n}"
            )
        if not np.all(np.isfinite(arr)):
            raise DimensionError(f"{what} has non-finite entries")
        return arr

    def scaled(self, factor: float) -> OscillatorSystem:
        """Return the system with every frequency multiplied by ``factor``."""
        return OscillatorSystem(tuple(w * factor for w in self.omegas))


def pairs(v: FloatArray) -> FloatArray:
    """View a flat 2N vector as an (N, 2) array of pairs."""
    return v.reshape(-1, 2)


def drift(sys: OscillatorSystem, s: ArrayLike) -> FloatArray:
    """Uncontrolled velocity A·x: pairs (y_i, -w_i^2 x_i)."""
    xy = pairs(sys.check(s))
    out = np.empty_like(xy)
    out[:, 0] = xy[:, 1]
    out[:, 1] = -(sys.omega**2) * xy[:, 0]
    return out.reshape(-1)


def z_map(sys: OscillatorSystem, p: ArrayLike) -> FloatArray:
    """Reduced momentum coordinates z_i = sqrt(eta_i^2 + xi_i^2 / w_i^2)."""
    xe = pairs(sys.check(p, "momentum"))
    return np.hypot(xe[:, 1], xe[:, 0] / sys.omega)


def energy(sys: OscillatorSystem, s: ArrayLike) -> float:
    """Mechanical energy 1/2 sum (y_i^2 + w_i^2 x_i^2)."""
    xy = pairs(sys.check(s))
    return 0.5 * float(np.sum(xy[:, 1] ** 2 + (sys.omega * xy[:, 0]) ** 2))


def flow(sys: OscillatorSystem, s: ArrayLike, t: float) -> FloatArray:
    """Free motion e^{At} x, block by block in closed form."""
    xy = pairs(sys.check(s))
    w = sys.omega
    c, sn = np.cos(w * t), np.sin(w * t)
    out = np.empty_like(xy)
    out[:, 0] = xy[:, 0] * c + xy[:, 1] * sn / w
    out[:, 1] = xy[:, 1] * c - w * xy[:, 0] * sn
    return out.reshape(-1)


def costate_flow(sys: OscillatorSystem, p: ArrayLike, t: float) -> FloatArray:
    """Adjoint rotation e^{A*t} p; preserves every z_i."""
    xe = pairs(sys.check(p, "momentum"))
    w = sys.omega
    c, sn = np.cos(w * t), np.sin(w * t)
    out = np.empty_like(xe)
    out[:, 0] = xe[:, 0] * c - w * xe[:, 1] * sn
    out[:, 1] = xe[:, 1] * c + xe[:, 0] * sn / w
    return out.reshape(-1)


@dataclass
class ResonanceReport:
    """Outcome of the integer-relation search sum m_i w_i ~ 0.

    Attributes:
        resonant: Whether any witness was found
        witnesses: Sign-normalized relations, sorted by (l1, linf, lexicographic)
        bound: Search bound M on |m_i|
        tolerance: Acceptance threshold on |sum m_i w_i|
    """

    resonant: bool
    witnesses: list[tuple[int, ...]] = field(default_factory=list)
    bound: int = 1
    tolerance: float = 0.0

    @property
    def minimal(self) -> list[tuple[int, ...]]:
        """Primitive witnesses (gcd 1), i.e. not multiples of a shorter relation."""
        return [m for m in self.witnesses if math.gcd(*m) == 1]


def default_resonance_tolerance(sys: OscillatorSystem, bound: int) -> float:
    """Relative tolerance 1e-9 * max|w| * M."""
    return 1e-9 * max(sys.omegas) * bound


def detect_resonance(
    sys: OscillatorSystem,
    bound: int,
    tolerance: float | None = None,
    max_search_size: int = DEFAULT_MAX_SEARCH_SIZE,
) -> ResonanceReport:
    """Exhaustively search for integer relations among the frequencies.

    Every nonzero m with |m_i| <= bound is tried once up to sign; the first
    nonzero entry of each witness is positive.

    Args:
        sys: The oscillator system
        bound: Search bound M >= 1
        tolerance: Acceptance threshold; defaults to 1e-9 * max|w| * M
        max_search_size: Cap on (2M+1)^N

    Raises:
        ValueError: If bound < 1 or tolerance <= 0
        SearchSpaceTooLargeError: If N * log(2M+1) exceeds log(max_search_size)
    """
    if bound < 1:
        raise ValueError(f"Search bound must be >= 1, got {bound}")
    if tolerance is None:
        tolerance = default_resonance_tolerance(sys, bound)
    if tolerance <= 0:
        raise ValueError(f"Resonance tolerance must be positive, got {tolerance}")
    if sys.n * math.log(2 * bound + 1) > math.log(max_search_size):
        raise SearchSpaceTooLargeError(
            f"Lattice of (2*{bound}+1)^{sys.n} vectors exceeds cap {max_search_size}"
        )

    values = range(-bound, bound + 1)
    lattice = np.array(list(itertools.product(values, repeat=sys.n)), dtype=np.int64)
    hits = np.abs(lattice @ sys.omega) <= tolerance

    witnesses = []
    for m in lattice[hits]:
        nz = np.flatnonzero(m)
        # zero vector, and the negative half of each +/- pair
        if nz.size == 0 or m[nz[0]] < 0:
            continue
        witnesses.append(tuple(int(v) for v in m))

    witnesses.sort(key=lambda m: (sum(map(abs, m)), max(map(abs, m)), tuple(-v for v in m)))
    return ResonanceReport(
        resonant=bool(witnesses),
        witnesses=witnesses,
        bound=bound,
        tolerance=tolerance,
    )
