"""Flat Robertson-Walker minisuperspace model, end to end.

The Hamiltonian constraint at leading semiclassical order reduces the
geometry to a Hamilton-Jacobi problem: the scale factor follows
da/deta = +/- sqrt(2 V(a)) in conformal time, with the Jacobi function
accumulating dS/deta = 2 V(a).  Once a leaves the potential's support the
geometry freezes and the conformally coupled scalar field becomes a bank
of oscillators with constant frequencies Omega^2 = m^2 a_out^2 + k^2.

A truncated occupation basis of those oscillators carries the quantum
state.  Dephasing between energy shells leaves a block-diagonal
equilibrium state; per-shell diagonalization gives the pointer spectrum;
mollified phase-space densities built from the pointer probabilities
resolve into an ensemble of weighted linear trajectories.
"""
from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from itertools import product

import numpy as np
from scipy.integrate import solve_ivp

from .errors import (
    DegenerateSupportError,
    GridMismatchError,
    IncompatibleBasisError,
    InvalidPotentialError,
    NotEquilibratedError,
)
from .pointer import PointerBasis, ShellState, pointer_state
from .wigner import (
    ClassicalDensity,
    MollifierPolicy,
    PhaseField,
    coordinate_field,
    multi_invariant_density,
)

DEFAULT_EPS_SHELL = 1e-9
IMAG_TOL = 1e-10
CROSS_BLOCK_TOL = 1e-10
# geometry counts as frozen when |dOmega/deta| / Omega^2 stays below this
ADIABATICITY_BOUND = 1e-3


# ---------------------------------------------------------------------------
# geometry: potential and scale-factor solution


@dataclass(frozen=True)
class Potential:
    """Nonnegative potential with bounded support [0, a1].

    Families: "constant" (V = lam on the support), "quadratic-cap"
    (V = lam (1 - (a/a1)^2) on the support), "table" (linear interpolation
    of samples).  V vanishes for a > a1.
    """

    family: str
    a1: float
    lam: float = 0.0
    table_a: np.ndarray | None = None
    table_v: np.ndarray | None = None

    def __post_init__(self):
        if self.a1 <= 0:
            raise ValueError(f"support bound a1 must be positive, got {self.a1}")
        if self.family in ("constant", "quadratic-cap"):
            if self.lam < 0:
                raise InvalidPotentialError(
                    f"energy density must be nonnegative, got {self.lam}"
                )
        elif self.family == "table":
            ta = np.array(self.table_a, dtype=float)
            tv = np.array(self.table_v, dtype=float)
            if ta.ndim != 1 or ta.shape != tv.shape or ta.size < 2:
                raise ValueError("table potential needs matching 1-d a and V samples")
            if not np.all(np.diff(ta) > 0):
                raise ValueError("table potential abscissae must be increasing")
            if np.any(tv < 0):
                raise InvalidPotentialError("table potential has negative values")
            ta.setflags(write=False)
            tv.setflags(write=False)
            object.__setattr__(self, "table_a", ta)
            object.__setattr__(self, "table_v", tv)
        else:
            raise ValueError(f"unknown potential family {self.family!r}")

    def value(self, a):
        """V(a); zero beyond the support bound."""
        a = np.asarray(a, dtype=float)
        if self.family == "constant":
            v = np.full_like(a, self.lam)
        elif self.family == "quadratic-cap":
            v = self.lam * (1.0 - (a / self.a1) ** 2)
        else:
            v = np.interp(a, self.table_a, self.table_v)
        v = np.where(a > self.a1, 0.0, v)
        if np.any(v < 0):
            raise InvalidPotentialError("potential evaluated negative inside support")
        return v if v.ndim else float(v)


def constant_potential(lam: float, a1: float) -> Potential:
    return Potential("constant", a1=a1, lam=lam)


def quadratic_cap_potential(lam: float, a1: float) -> Potential:
    return Potential("quadratic-cap", a1=a1, lam=lam)


def table_potential(a_samples, v_samples, a1: float | None = None) -> Potential:
    a_samples = np.asarray(a_samples, dtype=float)
    bound = float(a_samples[-1]) if a1 is None else float(a1)
    return Potential("table", a1=bound, table_a=a_samples, table_v=v_samples)


@dataclass(frozen=True)
class ScaleFactorSolution:
    """Sampled a(eta) and Jacobi function S(eta) along one branch.

    The Jacobi function carries the same sign as the motion, so it grows
    monotonically along the path: dS/deta = 2 V(a).  After the scale factor
    reaches the edge of the potential's support it is held exactly constant
    and ``freeze_eta`` records when.
    """

    branch: int
    a0: float
    eta_samples: np.ndarray
    a_samples: np.ndarray
    s_samples: np.ndarray
    freeze_eta: float | None

    def __post_init__(self):
        for name in ("eta_samples", "a_samples", "s_samples"):
            arr = np.array(getattr(self, name), dtype=float)
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            fh.write("eta,a,S\n")
            for eta, a, s in zip(self.eta_samples, self.a_samples, self.s_samples):
                fh.write(f"{eta:.16e},{a:.16e},{s:.16e}\n")


def solve_scale_factor(
    potential: Potential,
    a0: float,
    branch: int,
    eta_max: float,
    tol: float = 1e-10,
    n_samples: int = 513,
) -> ScaleFactorSolution:
    """Integrate da/deta = branch * sqrt(2 V(a)) with adaptive error control.

    The right-hand side evaluates the potential clamped to its support, so
    the expanding branch crosses a1 cleanly and is frozen exactly at a1
    from the detected crossing time on.  The contracting branch freezes the
    same way if it reaches a = 0.
    """
    if branch not in (1, -1):
        raise ValueError(f"branch must be +1 or -1, got {branch}")
    if not 0.0 <= a0 <= potential.a1:
        raise ValueError(f"a0 must lie in [0, a1] = [0, {potential.a1}], got {a0}")
    if tol <= 0 or eta_max <= 0:
        raise ValueError("need tol > 0 and eta_max > 0")

    a1 = potential.a1
    etas = np.linspace(0.0, eta_max, n_samples)
    boundary = a1 if branch == 1 else 0.0

    if a0 == boundary:
        s0 = 0.0
        return ScaleFactorSolution(
            branch, a0, etas, np.full_like(etas, boundary),
            np.full_like(etas, s0), freeze_eta=0.0,
        )

    def rhs(_eta, y):
        v = potential.value(min(max(y[0], 0.0), a1))
        root = np.sqrt(2.0 * v)
        return (branch * root, 2.0 * v)

    def hit_boundary(_eta, y):
        return y[0] - boundary

    hit_boundary.terminal = True
    hit_boundary.direction = float(branch)

    sol = solve_ivp(
        rhs,
        (0.0, eta_max),
        (a0, 0.0),
        method="DOP853",
        rtol=tol,
        atol=tol * 1e-2,
        dense_output=True,
        events=hit_boundary,
    )
    if not sol.success:
        raise RuntimeError(f"scale-factor integration failed: {sol.message}")

    freeze_eta = float(sol.t_events[0][0]) if sol.t_events[0].size else None
    a_out = np.empty_like(etas)
    s_out = np.empty_like(etas)
    live = etas <= (freeze_eta if freeze_eta is not None else eta_max)
    if np.any(live):
        dense = sol.sol(etas[live])
        a_out[live], s_out[live] = dense[0], dense[1]
    if freeze_eta is not None:
        s_frozen = float(sol.sol(freeze_eta)[1])
        a_out[~live] = boundary
        s_out[~live] = s_frozen
    return ScaleFactorSolution(branch, a0, etas, a_out, s_out, freeze_eta)


# ---------------------------------------------------------------------------
# scalar-field sector at the frozen geometry


def mode_frequency(k: float, a: float, m: float) -> float:
    """Oscillator frequency sqrt(m^2 a^2 + k^2) of one field mode."""
    return float(np.sqrt((m * a) ** 2 + k**2))


@dataclass(frozen=True)
class ModeSet:
    """Finite sample of field-mode moduli evaluated at the frozen scale."""

    k_values: np.ndarray
    m: float
    a_out: float

    def __post_init__(self):
        k = np.array(self.k_values, dtype=float)
        k.setflags(write=False)
        object.__setattr__(self, "k_values", k)
        if k.ndim != 1 or k.size == 0:
            raise ValueError("need a nonempty 1-d list of mode moduli")
        if np.any(k <= 0) or np.any(np.diff(k) <= 0):
            raise ValueError("mode moduli must be distinct, positive and sorted")
        if self.m < 0 or self.a_out <= 0:
            raise ValueError("need m >= 0 and a_out > 0")

    def frequencies(self) -> np.ndarray:
        return np.sqrt((self.m * self.a_out) ** 2 + self.k_values**2)


def sqrt_prime_modes(count: int, scale: float = 1.0) -> np.ndarray:
    """k_j = scale * sqrt(p_j) over the first primes; pairwise frequency
    differences are then incommensurate, which keeps the discrete shell
    spectrum from recurring early in dephasing experiments."""
    primes: list[int] = []
    candidate = 2
    while len(primes) < count:
        if all(candidate % p for p in primes):
            primes.append(candidate)
        else:
            candidate += 1
            continue
        candidate += 1
    return scale * np.sqrt(np.array(primes, dtype=float))


def adiabaticity_ratio(mode_set: ModeSet, potential: Potential) -> float:
    """max over modes of |dOmega/deta| / Omega^2 at the frozen scale; the
    geometry is treated as constant only when this is small."""
    freqs = mode_set.frequencies()
    da = np.sqrt(2.0 * potential.value(mode_set.a_out))
    d_omega = (mode_set.m**2 * mode_set.a_out / freqs) * da
    return float(np.max(d_omega / freqs**2))


@dataclass(frozen=True)
class FockBasis:
    """Occupation-number vectors with per-mode occupancy <= n_max and total
    energy <= omega_cut, sorted by (energy, lexicographic occupations).

    Each vector's energy is the exact dot product of its occupations with
    the mode frequencies; the occupation tuple itself serves as the
    residual degeneracy label.  ``truncated_count`` reports how many
    vectors of the occupancy box failed the energy cut.
    """

    mode_set: ModeSet
    occupations: tuple
    energies: np.ndarray
    labels: tuple
    truncated_count: int = 0

    def __post_init__(self):
        e = np.array(self.energies, dtype=float)
        e.setflags(write=False)
        object.__setattr__(self, "energies", e)
        object.__setattr__(self, "occupations", tuple(map(tuple, self.occupations)))
        object.__setattr__(self, "labels", tuple(self.labels))
        if not (len(self.occupations) == e.size == len(self.labels)):
            raise ValueError("occupations, energies and labels must align")

    @property
    def size(self) -> int:
        return self.energies.size

    def recomputed_energies(self) -> np.ndarray:
        freqs = self.mode_set.frequencies()
        return np.array([np.dot(occ, freqs) for occ in self.occupations])

    def shells(self, eps_shell: float = DEFAULT_EPS_SHELL) -> list[tuple[float, np.ndarray]]:
        """Group indices whose energies agree within eps_shell (gap-based
        binning of the sorted spectrum); returns (shell energy, indices)."""
        e = self.energies
        groups: list[tuple[float, np.ndarray]] = []
        start = 0
        for i in range(1, e.size + 1):
            if i == e.size or e[i] - e[i - 1] > eps_shell:
                groups.append((float(e[start]), np.arange(start, i)))
                start = i
        return groups


def enumerate_fock(
    mode_set: ModeSet, n_max: int, omega_cut: float | None = None
) -> FockBasis:
    """Enumerate the truncated occupation basis.

    ``n_max`` caps the occupancy of each mode; ``omega_cut`` (None for no
    cut) drops vectors whose total energy exceeds it.  The vacuum always
    survives.
    """
    if n_max < 1:
        raise ValueError(f"n_max must be >= 1, got {n_max}")
    if omega_cut is not None and omega_cut < 0:
        raise ValueError(f"omega_cut must be >= 0, got {omega_cut}")
    freqs = mode_set.frequencies()
    cut = np.inf if omega_cut is None else float(omega_cut)
    kept: list[tuple[tuple[int, ...], float]] = []
    dropped = 0
    for occ in product(range(n_max + 1), repeat=freqs.size):
        energy = float(np.dot(occ, freqs))
        if energy <= cut:
            kept.append((occ, energy))
        else:
            dropped += 1
    kept.sort(key=lambda item: (item[1], item[0]))
    occupations = tuple(occ for occ, _ in kept)
    energies = np.array([e for _, e in kept])
    return FockBasis(
        mode_set=mode_set,
        occupations=occupations,
        energies=energies,
        labels=occupations,
        truncated_count=dropped,
    )


# ---------------------------------------------------------------------------
# states over the truncated basis


@dataclass(frozen=True)
class CosmoState:
    """Hermitian, trace-one density matrix over a FockBasis, viewed as
    energy-shell blocks plus cross-shell (interference) blocks."""

    basis: FockBasis
    matrix: np.ndarray
    eps_shell: float = DEFAULT_EPS_SHELL

    def __post_init__(self):
        mat = np.array(self.matrix, dtype=complex)
        mat.setflags(write=False)
        object.__setattr__(self, "matrix", mat)
        d = self.basis.size
        if mat.shape != (d, d):
            raise IncompatibleBasisError(
                f"matrix is {mat.shape}, basis has {d} vectors"
            )
        defect = float(np.max(np.abs(mat - mat.conj().T)))
        if defect > 1e-12:
            raise ValueError(f"state matrix hermiticity defect {defect:.3e}")
        trace = complex(np.trace(mat))
        if abs(trace - 1.0) > 1e-10:
            raise ValueError(f"state matrix trace {trace!r}, expected 1")
        object.__setattr__(self, "_shells", tuple(self.basis.shells(self.eps_shell)))

    @property
    def shells(self) -> tuple:
        return self._shells

    def shell_energies(self) -> np.ndarray:
        """Per-index energy using each shell's representative value, so that
        intra-shell phase differences vanish identically."""
        e = np.empty(self.basis.size)
        for energy, idx in self._shells:
            e[idx] = energy
        return e

    def cross_block_magnitude(self) -> float:
        mask = np.zeros(self.matrix.shape, dtype=bool)
        for _, idx in self._shells:
            mask[np.ix_(idx, idx)] = True
        off = np.where(mask, 0.0, np.abs(self.matrix))
        return float(off.max())

    def min_eigenvalue(self) -> float:
        return float(np.linalg.eigvalsh(self.matrix)[0])


def uniform_cosmo_state(basis: FockBasis, eps_shell: float = DEFAULT_EPS_SHELL) -> CosmoState:
    d = basis.size
    return CosmoState(basis, np.eye(d, dtype=complex) / d, eps_shell)


def random_cosmo_state(
    basis: FockBasis,
    rng: np.random.Generator,
    coherence: float = 1.0,
    eps_shell: float = DEFAULT_EPS_SHELL,
) -> CosmoState:
    """Random positive trace-one matrix; ``coherence`` in [0, 1] scales the
    off-diagonal part (convex mix with the diagonal, so positivity holds)."""
    if not 0.0 <= coherence <= 1.0:
        raise ValueError("coherence must lie in [0, 1]")
    d = basis.size
    amp = rng.standard_normal((d, d)) + 1j * rng.standard_normal((d, d))
    rho = amp @ amp.conj().T
    rho /= np.trace(rho).real
    mixed = coherence * rho + (1.0 - coherence) * np.diag(np.diag(rho))
    mixed = 0.5 * (mixed + mixed.conj().T)
    return CosmoState(basis, mixed, eps_shell)


def cosmo_expectation(state: CosmoState, obs: np.ndarray, t: float) -> float:
    """<O>(t): shell-diagonal blocks contribute constants, cross-shell
    blocks rotate by exp(-i (w - w') t) with the shell energies."""
    obs = np.asarray(obs, dtype=complex)
    d = state.basis.size
    if obs.shape != (d, d):
        raise IncompatibleBasisError(f"observable is {obs.shape}, basis has {d}")
    e = state.shell_energies()
    phases = np.exp(-1j * t * np.subtract.outer(e, e))
    value = complex(np.sum((state.matrix * phases) * obs.T))
    if abs(value.imag) > IMAG_TOL:
        raise ValueError(
            f"expectation has |Im| = {abs(value.imag):.3e}; "
            "observable is not Hermitian within tolerance"
        )
    return value.real


def cosmo_weak_limit(state: CosmoState) -> CosmoState:
    """Drop every cross-shell block; shell blocks and the trace are kept
    exactly.  Idempotent."""
    out = np.zeros_like(state.matrix)
    for _, idx in state.shells:
        block = np.ix_(idx, idx)
        out[block] = state.matrix[block]
    return CosmoState(state.basis, out, state.eps_shell)


def diagonalize_remaining(state: CosmoState) -> list[PointerBasis]:
    """Pointer bases of every energy shell of an equilibrated state.

    Raises
    ------
    NotEquilibratedError
        If cross-shell blocks above 1e-10 remain; apply cosmo_weak_limit
        first.
    """
    cross = state.cross_block_magnitude()
    if cross > CROSS_BLOCK_TOL:
        raise NotEquilibratedError(
            f"cross-shell blocks of magnitude {cross:.3e} remain"
        )
    shells = [
        ShellState(
            omega=energy,
            labels=tuple(state.basis.labels[i] for i in idx),
            block=state.matrix[np.ix_(idx, idx)],
        )
        for energy, idx in state.shells
    ]
    return pointer_state(shells)


# ---------------------------------------------------------------------------
# trajectory ensemble


@dataclass(frozen=True)
class TrajectoryEntry:
    l_values: tuple
    a0: float
    probability: float
    degenerate: bool = False


@dataclass(frozen=True)
class TrajectoryEnsemble:
    """Weighted classical trajectories a(eta) = l * eta + a0; probabilities
    are the pointer eigenvalues spread uniformly over the reference points."""

    entries: tuple

    def __post_init__(self):
        object.__setattr__(self, "entries", tuple(self.entries))
        total = sum(e.probability for e in self.entries)
        if any(e.probability < 0 for e in self.entries):
            raise ValueError("trajectory probabilities must be nonnegative")
        if abs(total - 1.0) > 1e-10:
            raise ValueError(f"trajectory probabilities sum to {total!r}, expected 1")

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            fh.write("component,l_values,a0,probability\n")
            for i, e in enumerate(self.entries):
                ls = ";".join(f"{v:.16e}" for v in e.l_values)
                fh.write(f"{i},{ls},{e.a0:.16e},{e.probability:.16e}\n")


def trajectory_ensemble(
    pointer: list[PointerBasis],
    invariant_fields: list[PhaseField],
    policy: MollifierPolicy,
    a0_points,
    label_values=None,
    threads: int = 1,
) -> tuple[TrajectoryEnsemble, ClassicalDensity]:
    """Resolve pointer spectra into weighted, mollified trajectory densities.

    Every (shell, pointer label, reference point) triple becomes one
    component with probability eigenvalue / len(a0_points); its density is
    the mollified constraint product over the invariant fields at the
    component's l values times a coordinate factor pinning q = a0.
    Components whose constraints have empty support are flagged degenerate
    and excluded from the summed density (their probability is kept).

    ``label_values(shell_index, eigen_index, basis) -> sequence`` supplies
    the numeric invariants per component; by default a single invariant
    field takes l = (shell energy,).
    """
    if not invariant_fields:
        raise ValueError("need at least one invariant field")
    grid = invariant_fields[0].grid
    for f in invariant_fields[1:]:
        if f.grid != grid:
            raise GridMismatchError("invariant fields live on different grids")
    a0_points = [float(a) for a in np.atleast_1d(a0_points)]
    if not a0_points:
        raise ValueError("need at least one reference coordinate")

    if label_values is None:
        if len(invariant_fields) != 1:
            raise ValueError(
                "label_values must be supplied when there is more than one "
                "invariant field"
            )
        label_values = lambda _si, _ei, basis: (basis.omega,)
    elif not callable(label_values):
        mapping = dict(label_values)
        label_values = lambda si, ei, _basis: mapping[(si, ei)]

    total = sum(float(pb.eigenvalues.sum()) for pb in pointer)
    if abs(total - 1.0) > 1e-8:
        raise ValueError(
            f"pointer spectra carry total weight {total!r}; expected a "
            "trace-one equilibrium state"
        )

    qfield = coordinate_field(grid)
    fields = list(invariant_fields) + [qfield]
    uniform = 1.0 / len(a0_points)

    jobs = []
    for si, pb in enumerate(pointer):
        for ei, eig in enumerate(pb.eigenvalues):
            lv = tuple(float(x) for x in label_values(si, ei, pb))
            if len(lv) != len(invariant_fields):
                raise ValueError(
                    f"component ({si}, {ei}) got {len(lv)} l values for "
                    f"{len(invariant_fields)} invariant fields"
                )
            prob = max(float(eig), 0.0) * uniform
            for a0 in a0_points:
                jobs.append((lv, a0, prob))

    def build(job):
        lv, a0, prob = job
        if prob == 0.0:
            return TrajectoryEntry(lv, a0, prob), None
        try:
            comp = multi_invariant_density(list(lv) + [a0], fields, policy)
        except DegenerateSupportError:
            return TrajectoryEntry(lv, a0, prob, degenerate=True), None
        return TrajectoryEntry(lv, a0, prob), prob * comp.field.values

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(build, jobs))
    else:
        results = [build(job) for job in jobs]

    acc = np.zeros((grid.nq, grid.np))
    entries = []
    for entry, contribution in results:
        entries.append(entry)
        if contribution is not None:
            acc += contribution

    density = ClassicalDensity(
        PhaseField(grid, acc), policy.epsilon, invariant_fields[0]
    )
    return TrajectoryEnsemble(tuple(entries)), density
