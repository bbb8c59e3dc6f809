"""Phase-space images of kernel data and mollified classical densities.

The singular part of an observable transforms to a function of the
classical Hamiltonian field: O_S -> O(H(q, p)).  Energy shells become
densities peaked on the level sets H(q, p) = w0; Dirac deltas are
represented by Gaussian mollifiers of explicit width epsilon (the finite
stand-in for the hbar -> 0 peak width).

Functions of H alone are not integrable over the full (q, p) plane, so
all masses and expectations here use the energy-integration prescription:
phase cells are binned by their H value (bin width epsilon / 2), fields
are averaged per bin, and the averages are integrated over H only.
"""
from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np

from .errors import DegenerateSupportError, DomainMismatchError, GridMismatchError
from .kernels import SingularKernel

DEGENERATE_MASS_TOL = 1e-6
_WPF_HEADER = struct.Struct("<4sII4f4x")
_WPF_MAGIC = b"WPF1"


@dataclass(frozen=True)
class PhaseGrid:
    """Uniform rectangular (q, p) window; hbar = 1 so cells carry action."""

    q_range: tuple[float, float]
    p_range: tuple[float, float]
    nq: int
    np: int

    def __post_init__(self):
        object.__setattr__(self, "q_range", tuple(map(float, self.q_range)))
        object.__setattr__(self, "p_range", tuple(map(float, self.p_range)))
        if self.nq < 2 or self.np < 2:
            raise ValueError("phase grid needs nq, np >= 2")
        if self.q_range[1] <= self.q_range[0] or self.p_range[1] <= self.p_range[0]:
            raise ValueError("phase grid ranges must be non-degenerate")

    @property
    def q(self) -> np.ndarray:
        return np.linspace(self.q_range[0], self.q_range[1], self.nq)

    @property
    def p(self) -> np.ndarray:
        return np.linspace(self.p_range[0], self.p_range[1], self.np)

    @property
    def dq(self) -> float:
        return (self.q_range[1] - self.q_range[0]) / (self.nq - 1)

    @property
    def dp(self) -> float:
        return (self.p_range[1] - self.p_range[0]) / (self.np - 1)

    @property
    def cell_area(self) -> float:
        return self.dq * self.dp

    @property
    def cell_diagonal(self) -> float:
        return float(np.hypot(self.dq, self.dp))

    def meshes(self) -> tuple[np.ndarray, np.ndarray]:
        return np.meshgrid(self.q, self.p, indexing="ij")


@dataclass(frozen=True)
class PhaseField:
    """Real scalar field sampled on a PhaseGrid, shape (nq, np)."""

    grid: PhaseGrid
    values: np.ndarray

    def __post_init__(self):
        values = np.array(self.values, dtype=float)
        values.setflags(write=False)
        object.__setattr__(self, "values", values)
        if values.shape != (self.grid.nq, self.grid.np):
            raise ValueError(
                f"field shape {values.shape} does not match grid "
                f"{(self.grid.nq, self.grid.np)}"
            )
        if not np.all(np.isfinite(values)):
            raise ValueError("phase field contains non-finite entries")

    @classmethod
    def from_function(cls, grid: PhaseGrid, fn) -> "PhaseField":
        qm, pm = grid.meshes()
        return cls(grid, np.asarray(fn(qm, pm), dtype=float))


def harmonic_field(grid: PhaseGrid) -> PhaseField:
    return PhaseField.from_function(grid, lambda q, p: 0.5 * (q**2 + p**2))


def kinetic_field(grid: PhaseGrid) -> PhaseField:
    return PhaseField.from_function(grid, lambda q, p: 0.5 * p**2)


def momentum_field(grid: PhaseGrid) -> PhaseField:
    return PhaseField.from_function(grid, lambda q, p: p + 0.0 * q)


def coordinate_field(grid: PhaseGrid) -> PhaseField:
    return PhaseField.from_function(grid, lambda q, p: q + 0.0 * p)


@dataclass(frozen=True)
class MollifierPolicy:
    """Gaussian width used in place of Dirac deltas (energy units)."""

    epsilon: float

    def __post_init__(self):
        if not self.epsilon > 0:
            raise ValueError(f"mollifier width must be positive, got {self.epsilon}")

    @classmethod
    def default_for(cls, hfield: PhaseField) -> "MollifierPolicy":
        """Width resolved by about 5 cells: 5 x median |grad H| x cell diagonal."""
        return cls(5.0 * _field_resolution(hfield))


def _field_resolution(field: PhaseField) -> float:
    gq, gp = np.gradient(field.values, field.grid.dq, field.grid.dp)
    med = float(np.median(np.hypot(gq, gp)))
    return max(med * field.grid.cell_diagonal, 1e-300)


@dataclass(frozen=True)
class ClassicalDensity:
    """Nonnegative phase-space density with unit mass under the H-binned
    prescription; keeps the Hamiltonian field it was built against."""

    field: PhaseField
    mollifier_width: float
    hfield: PhaseField

    def __post_init__(self):
        if self.field.grid != self.hfield.grid:
            raise GridMismatchError("density and Hamiltonian field grids differ")
        if float(np.min(self.field.values)) < -1e-12:
            raise ValueError("classical density has negative values")

    def h_mass(self) -> float:
        """Total mass under the H-binned energy integration."""
        lo, width, nbins = _bin_layout(self.hfield.values, self.mollifier_width)
        means = _bin_means(self.hfield.values, self.field.values, lo, width, nbins)
        return float(means.sum() * width)

    def edge_fraction(self) -> float:
        """Share of plain phase-area mass sitting on the window border;
        large values mean the level sets leak out of the window."""
        v = self.field.values
        total = float(v.sum())
        if total == 0.0:
            return 0.0
        interior = float(v[1:-1, 1:-1].sum())
        return max((total - interior) / total, 0.0)


def _bin_layout(hvalues: np.ndarray, epsilon: float) -> tuple[float, float, int]:
    lo = float(hvalues.min())
    hi = float(hvalues.max())
    width = 0.5 * float(epsilon)
    nbins = max(1, int(np.ceil((hi - lo) / width))) if hi > lo else 1
    return lo, width, nbins


def _bin_means(hvalues, values, lo, width, nbins) -> np.ndarray:
    idx = np.clip(((hvalues - lo) / width).astype(np.int64).ravel(), 0, nbins - 1)
    counts = np.bincount(idx, minlength=nbins)
    sums = np.bincount(idx, weights=values.ravel(), minlength=nbins)
    return np.where(counts > 0, sums / np.maximum(counts, 1), 0.0)


def _binned_mass(hfield: PhaseField, values: np.ndarray, epsilon: float) -> float:
    lo, width, nbins = _bin_layout(hfield.values, epsilon)
    return float(_bin_means(hfield.values, values, lo, width, nbins).sum() * width)


def wigner_singular(obs_singular: SingularKernel, hfield: PhaseField) -> PhaseField:
    """Compose diagonal kernel samples with the Hamiltonian field.

    Linear interpolation between energy grid points; H values outside the
    sampled energy interval map to 0 (level sets may exit the window).
    """
    vals = obs_singular.values
    if float(np.max(np.abs(vals.imag))) > 1e-12:
        raise ValueError("cannot map a complex diagonal kernel to phase space")
    points = obs_singular.grid.points
    h = hfield.values
    if float(h.max()) < points[0] or float(h.min()) > points[-1]:
        raise DomainMismatchError(
            "Hamiltonian field values lie entirely outside the energy grid"
        )
    out = np.interp(h, points, vals.real, left=0.0, right=0.0)
    return PhaseField(hfield.grid, out)


def _check_epsilon(policy: MollifierPolicy, fields) -> None:
    for f in fields:
        res = _field_resolution(f)
        if policy.epsilon <= res:
            raise ValueError(
                f"mollifier width {policy.epsilon:.3e} does not resolve the "
                f"cell-induced energy resolution {res:.3e}; refine the grid "
                f"or widen epsilon"
            )


def shell_density(
    omega0: float, hfield: PhaseField, policy: MollifierPolicy
) -> ClassicalDensity:
    """Mollified energy-shell density exp(-(H - w0)^2 / 2 eps^2), normalized
    to unit mass under the H-binned prescription."""
    h = hfield.values
    if not (float(h.min()) <= omega0 <= float(h.max())):
        raise DomainMismatchError(
            f"shell energy {omega0} is unreachable on this window "
            f"(H spans [{h.min():.6g}, {h.max():.6g}])"
        )
    _check_epsilon(policy, [hfield])
    raw = np.exp(-((h - omega0) ** 2) / (2.0 * policy.epsilon**2))
    mass = _binned_mass(hfield, raw, policy.epsilon)
    return ClassicalDensity(
        PhaseField(hfield.grid, raw / mass), policy.epsilon, hfield
    )


def classical_state_density(
    rho_singular: SingularKernel, hfield: PhaseField, policy: MollifierPolicy
) -> ClassicalDensity:
    """Statistical ensemble of shell densities weighted by w_i rho(w_i).

    Energies outside the window's H range contribute nothing; the missing
    weight shows up as h_mass() < 1 (leakage diagnostic).
    """
    if float(np.max(np.abs(rho_singular.values.imag))) > 1e-10:
        raise ValueError("state diagonal must be real to form a classical density")
    _check_epsilon(policy, [hfield])
    grid_w = rho_singular.grid.weights
    omegas = rho_singular.grid.points
    rho = rho_singular.values.real
    h = hfield.values
    lo_h, hi_h = float(h.min()), float(h.max())
    lo, width, nbins = _bin_layout(h, policy.epsilon)

    out = np.zeros_like(h)
    for i in range(omegas.size):
        coeff = grid_w[i] * rho[i]
        if coeff == 0.0 or not (lo_h <= omegas[i] <= hi_h):
            continue
        raw = np.exp(-((h - omegas[i]) ** 2) / (2.0 * policy.epsilon**2))
        mass = float(_bin_means(h, raw, lo, width, nbins).sum() * width)
        out += (coeff / mass) * raw
    return ClassicalDensity(PhaseField(hfield.grid, out), policy.epsilon, hfield)


def classical_expectation(rho_field: ClassicalDensity, obs_field: PhaseField) -> float:
    """Energy-space mean value: bin both fields by H, average per bin,
    integrate the product over H only (never over the conjugate variable)."""
    if rho_field.field.grid != obs_field.grid:
        raise GridMismatchError("density and observable field grids differ")
    h = rho_field.hfield.values
    lo, width, nbins = _bin_layout(h, rho_field.mollifier_width)
    rho_means = _bin_means(h, rho_field.field.values, lo, width, nbins)
    obs_means = _bin_means(h, obs_field.values, lo, width, nbins)
    return float((rho_means * obs_means).sum() * width)


def multi_invariant_density(
    l_values, L_fields: list[PhaseField], policy: MollifierPolicy
) -> ClassicalDensity:
    """Product of mollified constraints prod_i delta(L_i - l_i), renormalized.

    The first field plays the role of the Hamiltonian for the integration
    prescription; with a single H field this reduces to shell_density.

    Raises
    ------
    DegenerateSupportError
        If the constraints have numerically empty intersection (raw binned
        mass below 1e-6), e.g. inconsistent level values.
    """
    l_values = [float(v) for v in np.atleast_1d(l_values)]
    if len(l_values) != len(L_fields) or not L_fields:
        raise ValueError(
            f"need matching nonempty lists, got {len(l_values)} values "
            f"for {len(L_fields)} fields"
        )
    grid = L_fields[0].grid
    for f in L_fields[1:]:
        if f.grid != grid:
            raise GridMismatchError("invariant fields live on different grids")
    _check_epsilon(policy, L_fields)

    raw = np.ones((grid.nq, grid.np))
    for lv, f in zip(l_values, L_fields):
        raw *= np.exp(-((f.values - lv) ** 2) / (2.0 * policy.epsilon**2))
    hfield = L_fields[0]
    mass = _binned_mass(hfield, raw, policy.epsilon)
    if mass < DEGENERATE_MASS_TOL:
        raise DegenerateSupportError(
            f"constraint product has raw mass {mass:.3e}; "
            f"level values {l_values} have empty intersection",
            raw_mass=mass,
        )
    return ClassicalDensity(
        PhaseField(grid, raw / mass), policy.epsilon, hfield
    )


def mass_within(
    density: ClassicalDensity, field: PhaseField, center: float, halfwidth: float
) -> float:
    """H-binned mass restricted to cells with |field - center| <= halfwidth.

    Restricted and complementary masses add up to h_mass() exactly (masked
    cells contribute zero to the same bin averages)."""
    masked = np.where(
        np.abs(field.values - center) <= halfwidth, density.field.values, 0.0
    )
    return _binned_mass(density.hfield, masked, density.mollifier_width)


def liouville_residual(density, hfield: PhaseField) -> float:
    """Normalized Poisson bracket |{H, rho}| as a constant-of-motion check.

    Central differences on interior cells; the max of |dH/dq drho/dp -
    dH/dp drho/dq| is normalized by the max of |grad H| |grad rho|.  Exact
    functions of H give 0 up to second-order discretization error; a
    constant density gives 0 exactly.
    """
    field = density.field if isinstance(density, ClassicalDensity) else density
    if field.grid != hfield.grid:
        raise GridMismatchError("density and Hamiltonian field grids differ")
    if field.grid.nq < 3 or field.grid.np < 3:
        raise ValueError("need at least one interior cell")
    h, r = hfield.values, field.values
    dq, dp = field.grid.dq, field.grid.dp

    hq = (h[2:, 1:-1] - h[:-2, 1:-1]) / (2 * dq)
    hp = (h[1:-1, 2:] - h[1:-1, :-2]) / (2 * dp)
    rq = (r[2:, 1:-1] - r[:-2, 1:-1]) / (2 * dq)
    rp = (r[1:-1, 2:] - r[1:-1, :-2]) / (2 * dp)

    bracket = np.abs(hq * rp - hp * rq)
    scale = np.hypot(hq, hp) * np.hypot(rq, rp)
    denom = float(scale.max())
    if denom == 0.0:
        return 0.0
    return float(bracket.max()) / denom


def free_flight_ridge(density: ClassicalDensity, etas) -> np.ndarray:
    """Ridge coordinate of the density transported by the free flow
    q -> q + p * eta, one entry per eta.

    For each eta the position marginal of the transported density is
    accumulated (mass leaving the window is dropped) and its peak located
    with parabolic sub-cell refinement.  A density peaked near (a0, l)
    yields a ridge a(eta) ~ a0 + l * eta.
    """
    grid = density.field.grid
    q, p = grid.q, grid.p
    values = density.field.values
    etas = np.atleast_1d(np.asarray(etas, dtype=float))
    out = np.empty(etas.size)
    for k, eta in enumerate(etas):
        marginal = np.zeros(grid.nq)
        for j in range(grid.np):
            col = values[:, j]
            if not col.any():
                continue
            marginal += np.interp(q, q + p[j] * eta, col, left=0.0, right=0.0)
        i = int(np.argmax(marginal))
        out[k] = q[i] + _parabolic_offset(marginal, i) * grid.dq
    return out


def _parabolic_offset(y: np.ndarray, i: int) -> float:
    if i == 0 or i == y.size - 1:
        return 0.0
    denom = y[i - 1] - 2.0 * y[i] + y[i + 1]
    if denom == 0.0:
        return 0.0
    return 0.5 * (y[i - 1] - y[i + 1]) / denom


def write_phase_field(field: PhaseField, path) -> None:
    """Dense binary dump: 32-byte header (magic WPF1, nq, np, float32
    ranges) then row-major little-endian float64 samples."""
    grid = field.grid
    header = _WPF_HEADER.pack(
        _WPF_MAGIC,
        grid.nq,
        grid.np,
        grid.q_range[0],
        grid.q_range[1],
        grid.p_range[0],
        grid.p_range[1],
    )
    with open(path, "wb") as fh:
        fh.write(header)
        fh.write(np.ascontiguousarray(field.values, dtype="<f8").tobytes())


def read_phase_field(path) -> PhaseField:
    with open(path, "rb") as fh:
        raw = fh.read(_WPF_HEADER.size)
        magic, nq, np_, q0, q1, p0, p1 = _WPF_HEADER.unpack(raw)
        if magic != _WPF_MAGIC:
            raise ValueError(f"{path}: not a phase-field file (magic {magic!r})")
        data = np.frombuffer(fh.read(), dtype="<f8").reshape(nq, np_)
    grid = PhaseGrid((q0, q1), (p0, p1), nq, np_)
    return PhaseField(grid, data)


def phase_field_to_csv(field: PhaseField, path) -> None:
    """Rows q,p,value with 17 significant digits, q-major order."""
    q, p = field.grid.q, field.grid.p
    with open(path, "w", newline="") as fh:
        fh.write("q,p,value\n")
        for i in range(field.grid.nq):
            for j in range(field.grid.np):
                fh.write(f"{q[i]:.16e},{p[j]:.16e},{field.values[i, j]:.16e}\n")
