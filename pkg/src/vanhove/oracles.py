"""Slow reference computations used to cross-check the fast paths.

These deliberately avoid the production code paths: the pairing oracle
contracts kernels with explicit Python loops, and the time-evolution
oracle conjugates the density matrix with a dense matrix exponential.
Keep them independent; they are the second route of the oracle checks.
"""
from __future__ import annotations

import numpy as np
from scipy.linalg import expm

ORACLE_SIZE_LIMIT = 4096


def dense_pair_oracle(state, obs) -> complex:
    """Explicit-loop contraction of both kernel channels."""
    n = state.grid.size
    if n > ORACLE_SIZE_LIMIT:
        raise ValueError(
            f"oracle refuses instances above dimension {ORACLE_SIZE_LIMIT}, got {n}"
        )
    w = state.grid.weights
    rho_s, obs_s = state.singular.values, obs.singular.values
    rho_r, obs_r = state.regular.values, obs.regular.values
    total = 0j
    for i in range(n):
        total += w[i] * rho_s[i] * obs_s[i]
    for i in range(n):
        for j in range(n):
            total += w[i] * w[j] * rho_r[i, j] * obs_r[j, i]
    return total


def conjugation_expectation_oracle(
    matrix: np.ndarray, energies: np.ndarray, obs: np.ndarray, t: float
) -> float:
    """Tr(e^{-iHt} rho e^{iHt} O) with H = diag(energies), via a dense
    matrix exponential."""
    d = matrix.shape[0]
    if d > ORACLE_SIZE_LIMIT:
        raise ValueError(
            f"oracle refuses instances above dimension {ORACLE_SIZE_LIMIT}, got {d}"
        )
    h = np.diag(np.asarray(energies, dtype=complex))
    u = expm(-1j * t * h)
    rho_t = u @ matrix @ u.conj().T
    value = complex(np.trace(rho_t @ obs))
    return value.real
