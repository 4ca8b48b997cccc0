"""Switched affine systems and their sampled flows.

Modes are affine vector fields x' = A x + b.  The flow over a sampling
period is evaluated in closed form through the matrix exponential of the
augmented (n+1) x (n+1) matrix [[A, b], [0, 0]], so there is no
integrator truncation error to budget against the grid radius.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import expm


class InvalidInputError(ValueError):
    """Raised when a dynamics operation receives non-finite or ill-shaped data."""


def _as_finite_array(x, name: str) -> np.ndarray:
    a = np.asarray(x, dtype=float)
    if not np.all(np.isfinite(a)):
        raise InvalidInputError(f"{name} contains non-finite entries")
    return a


@dataclass(frozen=True)
class AffineMode:
    """One mode of a switched system: x' = A x + b."""

    A: np.ndarray
    b: np.ndarray

    def __post_init__(self):
        A = _as_finite_array(self.A, "A")
        b = _as_finite_array(self.b, "b").reshape(-1)
        if A.ndim != 2 or A.shape[0] != A.shape[1]:
            raise InvalidInputError(f"A must be square, got shape {A.shape}")
        if b.shape[0] != A.shape[0]:
            raise InvalidInputError(
                f"b has dimension {b.shape[0]}, A has dimension {A.shape[0]}"
            )
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "b", b)

    @property
    def n(self) -> int:
        return self.A.shape[0]

    def transition_pair(self, tau: float) -> tuple[np.ndarray, np.ndarray]:
        """(Phi, psi) with x(tau) = Phi x0 + psi, via the augmented exponential."""
        if tau < 0:
            raise InvalidInputError(f"tau must be nonnegative, got {tau}")
        n = self.n
        aug = np.zeros((n + 1, n + 1))
        aug[:n, :n] = self.A
        aug[:n, n] = self.b
        E = expm(aug * tau)
        return E[:n, :n], E[:n, n]


@dataclass(frozen=True)
class SwitchedSystem:
    """Finite family of affine modes over a shared state space R^n.

    Modes are indexed 1..m; `mode(p)` resolves the 1-based index.
    """

    modes: tuple[AffineMode, ...]

    def __post_init__(self):
        modes = tuple(self.modes)
        if not modes:
            raise InvalidInputError("a switched system needs at least one mode")
        n = modes[0].n
        for i, m in enumerate(modes):
            if m.n != n:
                raise InvalidInputError(
                    f"mode {i + 1} has dimension {m.n}, expected {n}"
                )
        object.__setattr__(self, "modes", modes)

    @property
    def n(self) -> int:
        return self.modes[0].n

    @property
    def m(self) -> int:
        return len(self.modes)

    def mode(self, p: int) -> AffineMode:
        if not 1 <= p <= self.m:
            raise InvalidInputError(f"mode index {p} outside 1..{self.m}")
        return self.modes[p - 1]


@dataclass(frozen=True)
class SampledSwitchingSignal:
    """Mode sequence applied one mode per sampling period of length tau_s."""

    sequence: tuple[int, ...]
    tau_s: float

    def __post_init__(self):
        if self.tau_s <= 0:
            raise InvalidInputError(f"tau_s must be positive, got {self.tau_s}")
        object.__setattr__(self, "sequence", tuple(int(p) for p in self.sequence))

    def __len__(self) -> int:
        return len(self.sequence)


@dataclass(frozen=True)
class Trajectory:
    """Sampled trajectory: states[k] is the state at time k * tau_s."""

    times: np.ndarray
    states: np.ndarray
    signal: SampledSwitchingSignal = field(repr=False)

    def __len__(self) -> int:
        return len(self.times)


def exact_affine_flow(mode: AffineMode, x0, tau: float) -> np.ndarray:
    """Closed-form solution of x' = A x + b at time tau from x0."""
    x0 = _as_finite_array(x0, "x0").reshape(-1)
    if x0.shape[0] != mode.n:
        raise InvalidInputError(
            f"x0 has dimension {x0.shape[0]}, mode has dimension {mode.n}"
        )
    Phi, psi = mode.transition_pair(float(tau))
    return Phi @ x0 + psi


def rk4_flow(mode: AffineMode, x0, tau: float, substeps: int = 64) -> np.ndarray:
    """Classical fixed-step RK4 integration of x' = A x + b.

    Kept as an independent cross-check for the exact flow and as the
    extension point for non-affine vector fields.
    """
    x = _as_finite_array(x0, "x0").reshape(-1).copy()
    tau = float(tau)
    if tau < 0:
        raise InvalidInputError(f"tau must be nonnegative, got {tau}")
    if substeps < 1:
        raise InvalidInputError(f"substeps must be >= 1, got {substeps}")
    if tau == 0.0:
        return x
    h = tau / substeps
    f = lambda y: mode.A @ y + mode.b
    for _ in range(substeps):
        k1 = f(x)
        k2 = f(x + 0.5 * h * k1)
        k3 = f(x + 0.5 * h * k2)
        k4 = f(x + h * k3)
        x = x + (h / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4)
    return x


def simulate_switched(
    system: SwitchedSystem, x0, signal: SampledSwitchingSignal
) -> Trajectory:
    """Sample-aligned switched trajectory under the given mode sequence."""
    x = _as_finite_array(x0, "x0").reshape(-1)
    if x.shape[0] != system.n:
        raise InvalidInputError(
            f"x0 has dimension {x.shape[0]}, system has dimension {system.n}"
        )
    states = [x]
    for p in signal.sequence:
        x = exact_affine_flow(system.mode(p), x, signal.tau_s)
        states.append(x)
    times = signal.tau_s * np.arange(len(states))
    return Trajectory(times=times, states=np.array(states), signal=signal)
