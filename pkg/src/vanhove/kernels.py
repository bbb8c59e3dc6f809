"""Discretized spectral kernels over a truncated continuous energy spectrum.

A Hamiltonian with continuous spectrum gets a finite energy grid with
quadrature weights.  Observables and states are stored as a pair of
kernels: a singular (diagonal, one energy variable) part and a regular
(two energy variables) part.  The pairing (rho|O) is the weighted trace

    (rho|O) = sum_i w_i rho(w_i) O(w_i)
            + sum_ij w_i w_j rho(w_i, w_j) O(w_j, w_i)

which is the discrete mean value of O in the state rho.  All values are
immutable after construction; physicality (positivity, normalization,
hermiticity) is never enforced at construction so that non-physical test
kernels remain representable.  Use :func:`validate_state` to check it.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import GridMismatchError

WEIGHT_SUM_RTOL = 1e-12
HERMITICITY_TOL = 1e-12
NORMALIZATION_TOL = 1e-10
POSITIVITY_FLOOR = -1e-12
# Kernel amplitude at the spectrum cutoff above which truncation at
# omega_max is considered unsafe for the experiment.
CUTOFF_MASS_TOL = 1e-10


def _frozen(values, dtype) -> np.ndarray:
    out = np.array(values, dtype=dtype)
    out.setflags(write=False)
    return out


@dataclass(frozen=True)
class EnergyGrid:
    """Strictly increasing energy samples on [points[0], omega_max] with
    positive quadrature weights summing to the interval length."""

    points: np.ndarray
    weights: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "points", _frozen(self.points, float))
        object.__setattr__(self, "weights", _frozen(self.weights, float))
        p, w = self.points, self.weights
        if p.ndim != 1 or w.shape != p.shape or p.size < 2:
            raise ValueError("grid needs matching 1-d points and weights, n >= 2")
        if not np.all(np.diff(p) > 0):
            raise ValueError("grid points must be strictly increasing")
        if p[0] < 0:
            raise ValueError("grid points must be nonnegative energies")
        if not np.all(w > 0):
            raise ValueError("quadrature weights must be positive")
        span = p[-1] - p[0]
        if abs(w.sum() - span) > WEIGHT_SUM_RTOL * max(span, 1.0):
            raise ValueError(
                f"weights sum to {w.sum()!r}, expected interval length {span!r}"
            )

    @property
    def omega_max(self) -> float:
        return float(self.points[-1])

    @property
    def size(self) -> int:
        return self.points.size

    @property
    def min_spacing(self) -> float:
        return float(np.min(np.diff(self.points)))

    def __eq__(self, other):
        if self is other:
            return True
        if not isinstance(other, EnergyGrid):
            return NotImplemented
        return np.array_equal(self.points, other.points) and np.array_equal(
            self.weights, other.weights
        )

    __hash__ = None


def _clenshaw_curtis(n: int) -> tuple[np.ndarray, np.ndarray]:
    """Clenshaw-Curtis nodes and weights on [-1, 1], ascending, n points."""
    big_n = n - 1
    theta = np.pi * np.arange(n) / big_n
    j = np.arange(1, big_n // 2 + 1)
    if j.size:
        b = np.where(2 * j == big_n, 1.0, 2.0)
        s = (b / (4 * j**2 - 1)) @ np.cos(2.0 * np.outer(j, theta))
    else:
        s = np.zeros(n)
    w = (2.0 / big_n) * (1.0 - s)
    w[0] /= 2.0
    w[-1] /= 2.0
    return -np.cos(theta), w


def make_grid(omega_max: float, n: int, scheme: str = "uniform") -> EnergyGrid:
    """Build an energy grid on [0, omega_max].

    Parameters
    ----------
    omega_max : float
        Upper spectrum cutoff, > 0.
    n : int
        Number of grid points, >= 2.
    scheme : {"uniform", "chebyshev"}
        "uniform" uses trapezoid weights; "chebyshev" uses Clenshaw-Curtis
        nodes and weights (faster convergence for smooth kernels).
    """
    if not np.isfinite(omega_max) or omega_max <= 0:
        raise ValueError(f"omega_max must be positive, got {omega_max}")
    if n < 2:
        raise ValueError(f"need at least 2 grid points, got {n}")
    if scheme == "uniform":
        points = np.linspace(0.0, omega_max, n)
        h = omega_max / (n - 1)
        weights = np.full(n, h)
        weights[0] = weights[-1] = h / 2.0
    elif scheme == "chebyshev":
        x, w = _clenshaw_curtis(n)
        points = (x + 1.0) * (omega_max / 2.0)
        points[0] = 0.0
        points[-1] = omega_max
        weights = w * (omega_max / 2.0)
    else:
        raise ValueError(f"unknown quadrature scheme {scheme!r}")
    return EnergyGrid(points, weights)


@dataclass(frozen=True)
class SingularKernel:
    """Diagonal kernel channel: one complex sample f(w_i) per grid point."""

    grid: EnergyGrid
    values: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "values", _frozen(self.values, complex))
        if self.values.shape != (self.grid.size,):
            raise ValueError(
                f"singular kernel has {self.values.shape}, grid has {self.grid.size} points"
            )
        if not np.all(np.isfinite(self.values)):
            raise ValueError("singular kernel contains non-finite entries")


@dataclass(frozen=True)
class RegularKernel:
    """Smooth two-energy kernel f(w_i, w_j) sampled on grid x grid."""

    grid: EnergyGrid
    values: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "values", _frozen(self.values, complex))
        n = self.grid.size
        if self.values.shape != (n, n):
            raise ValueError(
                f"regular kernel has shape {self.values.shape}, expected {(n, n)}"
            )
        if not np.all(np.isfinite(self.values)):
            raise ValueError("regular kernel contains non-finite entries")

    def hermiticity_defect(self) -> float:
        return float(np.max(np.abs(self.values - self.values.conj().T)))


def zero_singular(grid: EnergyGrid) -> SingularKernel:
    return SingularKernel(grid, np.zeros(grid.size, dtype=complex))


def zero_regular(grid: EnergyGrid) -> RegularKernel:
    return RegularKernel(grid, np.zeros((grid.size, grid.size), dtype=complex))


@dataclass(frozen=True)
class Observable:
    """Observable |O) = singular (commuting-with-H) part + regular part.

    With ``self_adjoint=True`` the constructor enforces real diagonal
    samples and a Hermitian regular kernel within 1e-12.
    """

    singular: SingularKernel
    regular: RegularKernel
    self_adjoint: bool = False

    def __post_init__(self):
        if self.singular.grid != self.regular.grid:
            raise GridMismatchError("observable parts live on different grids")
        if self.self_adjoint:
            im = float(np.max(np.abs(self.singular.values.imag)))
            if im > HERMITICITY_TOL:
                raise ValueError(
                    f"self-adjoint observable has complex diagonal (max |Im| = {im:.3e})"
                )
            defect = self.regular.hermiticity_defect()
            if defect > HERMITICITY_TOL:
                raise ValueError(
                    f"self-adjoint observable has non-Hermitian regular part "
                    f"(defect {defect:.3e})"
                )

    @property
    def grid(self) -> EnergyGrid:
        return self.singular.grid


@dataclass(frozen=True)
class StateFunctional:
    """State (rho| = diagonal density rho(w) + interference kernel rho(w,w').

    Constructor only checks shapes; see :func:`validate_state` for the
    physicality invariants (positivity, normalization, hermiticity).
    """

    singular: SingularKernel
    regular: RegularKernel

    def __post_init__(self):
        if self.singular.grid != self.regular.grid:
            raise GridMismatchError("state parts live on different grids")

    @property
    def grid(self) -> EnergyGrid:
        return self.singular.grid


def identity_observable(grid: EnergyGrid) -> Observable:
    """The identity: O(w) = 1, no regular part."""
    return Observable(
        SingularKernel(grid, np.ones(grid.size, dtype=complex)),
        zero_regular(grid),
        self_adjoint=True,
    )


def hamiltonian_observable(grid: EnergyGrid) -> Observable:
    """The Hamiltonian in its own eigenbasis: O(w) = w, no regular part."""
    return Observable(
        SingularKernel(grid, grid.points.astype(complex)),
        zero_regular(grid),
        self_adjoint=True,
    )


def pair(state: StateFunctional, obs: Observable) -> complex:
    """Mean value (rho|O) as a weighted trace over both kernel channels.

    Pure singular-regular cross terms vanish identically (the two channels
    are orthogonal), so the result is the diagonal quadrature plus the
    double-quadrature trace of the regular kernels.  Summation uses
    numpy's pairwise reduction, so results are bit-reproducible.
    """
    if state.grid != obs.grid:
        raise GridMismatchError("state and observable live on different grids")
    w = state.grid.weights
    diag = np.sum(w * state.singular.values * obs.singular.values)
    cross = w @ (state.regular.values * obs.regular.values.T) @ w
    return complex(diag + cross)


@dataclass(frozen=True)
class Violation:
    invariant: str
    residual: float
    tolerance: float


@dataclass(frozen=True)
class ValidationReport:
    """Outcome of :func:`validate_state`: one entry per violated invariant,
    plus the kernel amplitude at the spectrum cutoff (truncation diagnostic,
    never a violation)."""

    violations: tuple[Violation, ...]
    cutoff_amplitude: float

    @property
    def ok(self) -> bool:
        return not self.violations

    @property
    def cutoff_safe(self) -> bool:
        return self.cutoff_amplitude < CUTOFF_MASS_TOL

    def as_dict(self) -> dict:
        return {
            "ok": self.ok,
            "violations": [
                {
                    "invariant": v.invariant,
                    "residual": v.residual,
                    "tolerance": v.tolerance,
                }
                for v in self.violations
            ],
            "cutoff_amplitude": self.cutoff_amplitude,
            "cutoff_safe": self.cutoff_safe,
        }


def validate_state(state: StateFunctional) -> ValidationReport:
    """Check the state invariants; diagnostic only, never raises.

    Checks: rho(w) real, rho(w) >= 0 (within -1e-12), (rho|I) = 1 within
    1e-10, and hermiticity of the regular kernel within 1e-12.
    """
    out: list[Violation] = []
    w = state.grid.weights
    rho_s = state.singular.values

    im = float(np.max(np.abs(rho_s.imag)))
    if im > HERMITICITY_TOL:
        out.append(Violation("singular-real", im, HERMITICITY_TOL))

    neg = float(np.min(rho_s.real))
    if neg < POSITIVITY_FLOOR:
        out.append(Violation("singular-nonnegative", -neg, -POSITIVITY_FLOOR))

    norm_residual = abs(float(np.sum(w * rho_s.real)) - 1.0)
    if norm_residual > NORMALIZATION_TOL:
        out.append(Violation("normalization", norm_residual, NORMALIZATION_TOL))

    defect = state.regular.hermiticity_defect()
    if defect > HERMITICITY_TOL:
        out.append(Violation("hermiticity", defect, HERMITICITY_TOL))

    r = state.regular.values
    cutoff = max(
        float(np.abs(rho_s[-1])),
        float(np.max(np.abs(r[-1, :]))),
        float(np.max(np.abs(r[:, -1]))),
    )
    return ValidationReport(tuple(out), cutoff)
