"""Unitary evolution, dephasing profiles, and the weak (equilibrium) limit.

Evolution acts only on the regular kernel: every entry picks up the phase
exp(-i (w_i - w_j) t).  For integrable regular kernels the off-diagonal
contribution to any mean value decays (Riemann-Lebesgue), leaving the
purely singular weak-limit state.  On a finite grid the decay is only
valid below the recurrence time 2*pi / min spacing; callers should window
their assertions accordingly.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .kernels import RegularKernel, Observable, StateFunctional, pair, zero_regular

IMAG_TOL = 1e-10


def evolve(state: StateFunctional, t: float) -> StateFunctional:
    """Advance the state by time t (hbar = 1).

    The singular part is returned bit-for-bit unchanged; the regular part
    is multiplied entrywise by exp(-i (w_i - w_j) t).  Phases are computed
    directly from the energy differences at each call, so there is no
    accumulated drift for long times.
    """
    if not np.isfinite(t):
        raise ValueError(f"evolution time must be finite, got {t}")
    points = state.grid.points
    phase = np.exp(-1j * t * np.subtract.outer(points, points))
    return StateFunctional(
        state.singular,
        RegularKernel(state.grid, state.regular.values * phase),
    )


def weak_limit(state: StateFunctional) -> StateFunctional:
    """Equilibrium functional: singular part kept, regular part dropped.

    For every observable, pairing against the result equals the
    t -> infinity limit of the evolving mean value.
    """
    return StateFunctional(state.singular, zero_regular(state.grid))


def expectation(state: StateFunctional, obs: Observable, t: float) -> float:
    """Mean value of ``obs`` at time ``t``; equals pair(evolve(state, t), obs).

    Returns the real part.  When the observable is flagged self-adjoint the
    imaginary part must be below 1e-10, otherwise the inputs are treated as
    non-physical and the check is skipped.
    """
    value = pair(evolve(state, t), obs)
    if obs.self_adjoint and abs(value.imag) > IMAG_TOL:
        raise ValueError(
            f"expectation of a self-adjoint observable has |Im| = {abs(value.imag):.3e}"
        )
    return value.real


@dataclass(frozen=True)
class DecayProfile:
    """Split of the evolving mean value into its constant diagonal term and
    the magnitude of the oscillatory off-diagonal term, per time sample."""

    times: np.ndarray
    offdiag_abs: np.ndarray
    diag_value: float
    expectations: np.ndarray

    def __post_init__(self):
        for name in ("times", "offdiag_abs", "expectations"):
            arr = np.array(getattr(self, name), dtype=float)
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)

    def to_csv(self, path) -> None:
        """Write columns t, offdiag_abs, expectation (17 significant digits)."""
        with open(path, "w", newline="") as fh:
            fh.write("t,offdiag_abs,expectation\n")
            for t, off, ex in zip(self.times, self.offdiag_abs, self.expectations):
                fh.write(f"{t:.16e},{off:.16e},{ex:.16e}\n")


def decay_profile(
    state: StateFunctional, obs: Observable, times
) -> DecayProfile:
    """Off-diagonal decay of <O>(t) over the given time samples.

    Evaluates the same quantity as pair(evolve(state, t), obs) for every t,
    but with the time-independent contraction C_ij = w_i w_j rho_ij O_ji
    factored out, so each sample costs one phase vector instead of one
    matrix exponential:  offdiag(t) = v(t)^T C conj(v(t)), v_i = e^{-i w_i t}.
    """
    times = np.asarray(times, dtype=float)
    if times.size == 0:
        raise ValueError("need at least one time sample")
    if not np.all(np.isfinite(times)):
        raise ValueError("time samples must be finite")

    grid = state.grid
    w = grid.weights
    diag_c = pair(weak_limit(state), obs)
    if obs.self_adjoint and abs(diag_c.imag) > IMAG_TOL:
        raise ValueError(
            f"diagonal term of a self-adjoint observable has |Im| = {abs(diag_c.imag):.3e}"
        )
    diag = diag_c.real

    contraction = (w[:, None] * state.regular.values) * (w[:, None] * obs.regular.values).T
    offdiag = np.empty(times.size, dtype=complex)
    for k, t in enumerate(times):
        v = np.exp(-1j * t * grid.points)
        offdiag[k] = v @ contraction @ v.conj()

    return DecayProfile(
        times=times,
        offdiag_abs=np.abs(offdiag),
        diag_value=diag,
        expectations=diag + offdiag.real,
    )


def decoherence_time(profile: DecayProfile, threshold: float) -> float | None:
    """First time after which |offdiag| stays below threshold * |offdiag(0)|.

    Sustained crossing, not first touch: oscillatory envelopes (e.g. from
    lorentzian kernels) ring back above the threshold.  Returns None when
    the initial off-diagonal term vanishes or the level is never held.
    """
    if not 0.0 < threshold < 1.0:
        raise ValueError(f"threshold must lie in (0, 1), got {threshold}")
    base = profile.offdiag_abs[0]
    if base == 0.0:
        return None
    target = threshold * base
    # suffix maximum: profile stays below target from index k onward
    suffix_max = np.maximum.accumulate(profile.offdiag_abs[::-1])[::-1]
    held = np.nonzero(suffix_max <= target)[0]
    if held.size == 0:
        return None
    return float(profile.times[held[0]])


def recurrence_time(grid) -> float:
    """Quasi-period 2*pi / (min energy spacing) of the discretized spectrum."""
    return 2.0 * np.pi / grid.min_spacing


def fit_gaussian_envelope(
    profile: DecayProfile, floor_rel: float = 1e-12
) -> tuple[float, float]:
    """Least-squares fit of log offdiag_abs = intercept - rate * t^2.

    Samples below floor_rel * max are excluded (dominated by roundoff).
    Returns (rate, intercept).
    """
    off = profile.offdiag_abs
    mask = off > floor_rel * off.max()
    if mask.sum() < 3:
        raise ValueError("not enough samples above the noise floor to fit")
    t2 = profile.times[mask] ** 2
    coeffs = np.polyfit(t2, np.log(off[mask]), 1)
    return -float(coeffs[0]), float(coeffs[1])
