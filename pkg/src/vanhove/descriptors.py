"""Declarative kernel families for experiment configs.

A descriptor is a plain dict with a "type" key.  Supported families:

    {"type": "gaussian", "mu": 5.0, "sigma": 0.5, "amplitude": 1.0}
    {"type": "lorentzian", "center": 5.0, "gamma": 0.5, "amplitude": 1.0}
    {"type": "uniform"}
    {"type": "point", "omega": 2.0}
    {"type": "table", "path": "kernel.csv"}

Singular kernels are f(w); regular kernels use the separable Hermitian
form f(w) f(w') of the same profile (for gaussian that is
amplitude * exp(-((w-mu)^2 + (w'-mu)^2) / (2 sigma^2))).  "point" puts
unit quadrature mass on the nearest grid point.  CSV tables must sample
every grid point: header ``omega,re,im`` for singular kernels and
``omega,omega_prime,re,im`` for regular ones.
"""
from __future__ import annotations

import csv
from pathlib import Path

import numpy as np

from .errors import ConfigError
from .kernels import (
    EnergyGrid,
    Observable,
    RegularKernel,
    SingularKernel,
    StateFunctional,
    zero_regular,
    zero_singular,
)

_MATCH_RTOL = 1e-9


def _profile(points: np.ndarray, desc: dict) -> np.ndarray:
    kind = desc.get("type")
    if kind == "gaussian":
        mu, sigma = float(desc["mu"]), float(desc["sigma"])
        amp = float(desc.get("amplitude", 1.0))
        if sigma <= 0:
            raise ValueError("gaussian descriptor needs sigma > 0")
        return amp * np.exp(-((points - mu) ** 2) / (2.0 * sigma**2))
    if kind == "lorentzian":
        center, gamma = float(desc["center"]), float(desc["gamma"])
        amp = float(desc.get("amplitude", 1.0))
        if gamma <= 0:
            raise ValueError("lorentzian descriptor needs gamma > 0")
        return amp / (1.0 + ((points - center) / gamma) ** 2)
    if kind == "uniform":
        return np.ones_like(points)
    raise ValueError(f"unsupported kernel descriptor type {kind!r}")


def singular_from_descriptor(grid: EnergyGrid, desc: dict) -> SingularKernel:
    kind = desc.get("type")
    if kind == "point":
        omega = float(desc["omega"])
        k = int(np.argmin(np.abs(grid.points - omega)))
        values = np.zeros(grid.size, dtype=complex)
        values[k] = 1.0 / grid.weights[k]
        return SingularKernel(grid, values)
    if kind == "table":
        return _singular_from_csv(grid, Path(desc["path"]))
    return SingularKernel(grid, _profile(grid.points, desc).astype(complex))


def regular_from_descriptor(grid: EnergyGrid, desc: dict) -> RegularKernel:
    kind = desc.get("type")
    if kind == "point":
        omega = float(desc["omega"])
        k = int(np.argmin(np.abs(grid.points - omega)))
        values = np.zeros((grid.size, grid.size), dtype=complex)
        values[k, k] = 1.0 / grid.weights[k] ** 2
        return RegularKernel(grid, values)
    if kind == "table":
        return _regular_from_csv(grid, Path(desc["path"]))
    profile = _profile(grid.points, desc)
    amp = float(desc.get("amplitude", 1.0))
    # separable product f(w) f(w'); keep a single amplitude factor overall
    if amp != 0.0:
        outer = np.outer(profile, profile) / amp
    else:
        outer = np.zeros((grid.size, grid.size))
    return RegularKernel(grid, outer.astype(complex))


def state_from_descriptors(
    grid: EnergyGrid,
    singular: dict,
    regular: dict | None = None,
    normalize: bool = True,
) -> StateFunctional:
    """Build a state; ``normalize`` rescales the diagonal so (rho|I) = 1."""
    sing = singular_from_descriptor(grid, singular)
    if normalize:
        total = float(np.sum(grid.weights * sing.values.real))
        if total <= 0:
            raise ValueError("cannot normalize a state with nonpositive mass")
        sing = SingularKernel(grid, sing.values / total)
    reg = (
        regular_from_descriptor(grid, regular)
        if regular is not None
        else zero_regular(grid)
    )
    return StateFunctional(sing, reg)


def observable_from_descriptors(
    grid: EnergyGrid,
    singular: dict | None = None,
    regular: dict | None = None,
    self_adjoint: bool = True,
) -> Observable:
    sing = (
        singular_from_descriptor(grid, singular)
        if singular is not None
        else zero_singular(grid)
    )
    reg = (
        regular_from_descriptor(grid, regular)
        if regular is not None
        else zero_regular(grid)
    )
    return Observable(sing, reg, self_adjoint=self_adjoint)


def _read_rows(path: Path, header: list[str]) -> list[list[float]]:
    if not path.exists():
        raise ConfigError(f"kernel table not found: {path}")
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            first = next(reader)
        except StopIteration:
            raise ConfigError(f"kernel table {path} is empty") from None
        if [c.strip() for c in first] != header:
            raise ConfigError(
                f"kernel table {path} has header {first}, expected {header}"
            )
        try:
            return [[float(c) for c in row] for row in reader if row]
        except ValueError as exc:
            raise ConfigError(f"kernel table {path}: {exc}") from None


def _grid_index(grid: EnergyGrid, omega: float, path: Path) -> int:
    k = int(np.argmin(np.abs(grid.points - omega)))
    scale = max(abs(grid.omega_max), 1.0)
    if abs(grid.points[k] - omega) > _MATCH_RTOL * scale:
        raise ConfigError(f"table {path}: omega={omega!r} is not a grid point")
    return k


def _singular_from_csv(grid: EnergyGrid, path: Path) -> SingularKernel:
    values = np.full(grid.size, np.nan, dtype=complex)
    for omega, re, im in _read_rows(path, ["omega", "re", "im"]):
        values[_grid_index(grid, omega, path)] = re + 1j * im
    if np.any(np.isnan(values)):
        raise ConfigError(f"table {path} does not cover every grid point")
    return SingularKernel(grid, values)


def _regular_from_csv(grid: EnergyGrid, path: Path) -> RegularKernel:
    values = np.full((grid.size, grid.size), np.nan, dtype=complex)
    for omega, omega_p, re, im in _read_rows(
        path, ["omega", "omega_prime", "re", "im"]
    ):
        i = _grid_index(grid, omega, path)
        j = _grid_index(grid, omega_p, path)
        values[i, j] = re + 1j * im
    if np.any(np.isnan(values)):
        raise ConfigError(f"table {path} does not cover the full grid square")
    return RegularKernel(grid, values)
