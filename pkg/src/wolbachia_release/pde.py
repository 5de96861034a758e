"""Finite-difference simulation of ``p_t = sigma Lap p + f(p)`` in 1D and 2D.

Each step applies the reaction explicitly and then solves the implicit
diffusion problem exactly in the cosine basis, which diagonalises the
reflecting (zero-flux) 3-point Laplacian.  For ``dt <= 1 / max|f'|`` the
reaction map is monotone and keeps [0, theta_plus] invariant, and the
implicit solve is a positive contraction, so both the invariant region and
the comparison principle hold at the discrete level.
"""
from __future__ import annotations

import enum
import math
import warnings
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.fft import dctn, idctn

from .bubble import energy
from .exceptions import DomainError, UnstableStep
from .reaction import ReactionCurve
from .release import ReleaseProfile, initial_frequency

DELTA_TOL = 1e-3
ROUNDING_SLACK = 1e-12


@dataclass(frozen=True)
class SimGrid:
    dimension: int
    half_width: float
    nodes: int

    def __post_init__(self):
        if self.dimension not in (1, 2):
            raise DomainError("dimension must be 1 or 2")
        if self.nodes < 16:
            raise DomainError("need at least 16 nodes per axis")
        if self.half_width <= 0:
            raise DomainError("half-width must be positive")

    @property
    def dx(self) -> float:
        return 2.0 * self.half_width / (self.nodes - 1)

    @property
    def axis(self) -> np.ndarray:
        return np.linspace(-self.half_width, self.half_width, self.nodes)

    @property
    def shape(self) -> tuple[int, ...]:
        return (self.nodes,) * self.dimension

    def coordinates(self) -> np.ndarray:
        """Node positions with a trailing axis of length ``dimension``."""
        mesh = np.meshgrid(*([self.axis] * self.dimension), indexing="ij")
        return np.stack(mesh, axis=-1)

    def central_window(self) -> tuple[slice, ...]:
        inside = np.flatnonzero(np.abs(self.axis) <= 0.25 * self.half_width)
        sl = slice(int(inside[0]), int(inside[-1]) + 1)
        return (sl,) * self.dimension


@dataclass
class SimState:
    grid: SimGrid
    p: np.ndarray
    t: float
    sigma: float
    dt: float
    curve: ReactionCurve = field(repr=False)
    clip_events: int = 0


class Classification(str, enum.Enum):
    INVASION = "Invasion"
    EXTINCTION = "Extinction"
    UNDECIDED = "Undecided"


@dataclass
class Outcome:
    classification: Classification
    decided_at: float | None
    center_value: float
    energy_trace: list = field(default_factory=list)


@dataclass
class Trajectory:
    times: list
    snapshots: list
    energies: list
    outcome: Outcome
    final: SimState


def max_stable_dt(curve: ReactionCurve) -> float:
    return 1.0 / curve.max_abs_f_prime()


def default_dt(curve: ReactionCurve, grid: SimGrid, sigma: float) -> float:
    return min(0.5 * max_stable_dt(curve), grid.dx**2 / (4.0 * sigma))


def _clip(p: np.ndarray, top: float) -> tuple[np.ndarray, int]:
    low = p < 0.0
    high = p > top
    n = int(np.count_nonzero(low) + np.count_nonzero(high))
    if n:
        p = np.clip(p, 0.0, top)
    return p, n


def init_state(grid: SimGrid, initial, curve: ReactionCurve, sigma: float,
               dt: float | None = None) -> SimState:
    """Sample the initial frequency on the grid.

    ``initial`` may be a constant, an array of the grid's shape, a callable
    of the coordinates (shape ``(..., d)``) or a :class:`ReleaseProfile`,
    whose own background density converts released density to frequency.
    """
    if sigma <= 0:
        raise DomainError("sigma must be positive")
    dt = default_dt(curve, grid, sigma) if dt is None else float(dt)
    if not 0 < dt <= max_stable_dt(curve):
        raise UnstableStep(f"dt={dt} exceeds 1/max|f'| = {max_stable_dt(curve):.6g}")
    if isinstance(initial, ReleaseProfile):
        if initial.dimension != grid.dimension:
            raise DomainError("release profile and grid dimensions differ")
        p = initial_frequency(initial, grid.coordinates())
    elif callable(initial):
        p = np.asarray(initial(grid.coordinates()), dtype=float)
    elif np.ndim(initial) == 0:
        p = np.full(grid.shape, float(initial))
    else:
        p = np.array(initial, dtype=float)
    if p.shape != grid.shape:
        raise DomainError(f"initial field has shape {p.shape}, expected {grid.shape}")
    p, n = _clip(p, curve.theta_plus)
    if n > 1e-3 * p.size:
        warnings.warn(f"{n} initial values clipped into [0, theta_plus]", RuntimeWarning,
                      stacklevel=2)
    return SimState(grid, p, 0.0, float(sigma), dt, curve, n)


def _symbol(grid: SimGrid, sigma: float, dt: float) -> np.ndarray:
    n = grid.nodes
    k = np.arange(n)
    eig = -4.0 / grid.dx**2 * np.sin(0.5 * math.pi * k / (n - 1)) ** 2
    total = eig
    if grid.dimension == 2:
        total = eig[:, None] + eig[None, :]
    return 1.0 / (1.0 - dt * sigma * total)


class _Stepper:
    def __init__(self, state: SimState):
        self.symbol = _symbol(state.grid, state.sigma, state.dt)
        self.top = state.curve.theta_plus

    def __call__(self, state: SimState) -> SimState:
        p = state.p + state.dt * state.curve.f(state.p)
        p = idctn(dctn(p, type=1) * self.symbol, type=1)
        lo = float(p.min())
        hi = float(p.max())
        if lo < -ROUNDING_SLACK or hi > self.top + ROUNDING_SLACK:
            raise UnstableStep(f"invariant region violated: range [{lo}, {hi}]")
        if lo < 0.0 or hi > self.top:
            p = np.clip(p, 0.0, self.top)
        return replace(state, p=p, t=state.t + state.dt)


def step(state: SimState) -> SimState:
    """One reaction-then-implicit-diffusion step."""
    if state.dt > max_stable_dt(state.curve):
        raise UnstableStep("dt exceeds 1/max|f'|")
    return _Stepper(state)(state)


def classify(state: SimState, delta: float = DELTA_TOL) -> Classification:
    window = state.p[state.grid.central_window()]
    if float(window.min()) >= state.curve.theta_plus - delta:
        return Classification.INVASION
    if float(state.p.max()) <= delta:
        return Classification.EXTINCTION
    return Classification.UNDECIDED


def scheme_energy(state: SimState) -> float:
    return energy(state.p, state.grid.dx, state.curve, state.sigma, gradient="forward")


def simulate(state: SimState, T: float, snapshot_times=(), energy_every: int = 1,
             stop_on_decision: bool = True, delta: float = DELTA_TOL) -> Trajectory:
    """Integrate up to time ``T`` and classify the outcome.

    Snapshots are taken at the first step reaching each requested time.
    With ``stop_on_decision`` the run ends as soon as the state is
    classified.
    """
    if T <= 0:
        raise DomainError("horizon must be positive")
    if state.dt > max_stable_dt(state.curve):
        raise UnstableStep("dt exceeds 1/max|f'|")
    stepper = _Stepper(state)
    pending = sorted(float(t) for t in snapshot_times)
    times, snaps = [], []
    energies = [(state.t, scheme_energy(state))]
    n_steps = int(math.ceil((T - state.t) / state.dt - 1e-9))
    decided = classify(state, delta)
    decided_at = state.t if decided is not Classification.UNDECIDED else None

    def snapshot(s):
        while pending and pending[0] <= s.t + 1e-9 * s.dt:
            times.append(s.t)
            snaps.append(s.p.copy())
            pending.pop(0)

    snapshot(state)
    for i in range(n_steps):
        if decided_at is not None and stop_on_decision:
            break
        state = stepper(state)
        snapshot(state)
        if (i + 1) % energy_every == 0:
            energies.append((state.t, scheme_energy(state)))
        decided = classify(state, delta)
        if decided is not Classification.UNDECIDED and decided_at is None:
            decided_at = state.t
    if energies[-1][0] != state.t:
        energies.append((state.t, scheme_energy(state)))
    if decided_at is None:
        decided = Classification.UNDECIDED
    center = float(state.p[tuple(n // 2 for n in state.p.shape)])
    outcome = Outcome(decided, decided_at, center, energies)
    return Trajectory(times, snaps, energies, outcome, state)


def energy_trace(trajectory, curve: ReactionCurve, sigma: float, dx: float) -> list:
    """``(t, E)`` pairs for the recorded snapshots of a trajectory."""
    return [(t, energy(p, dx, curve, sigma, gradient="forward"))
            for t, p in zip(trajectory.times, trajectory.snapshots)]
