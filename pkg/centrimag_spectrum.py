"""Spin-rotation spectrum of a Hund's case (b) triplet rotor in a magnetic field.

The Hamiltonian

    H = gamma N.S - lambda (N.S)^2 / (N(N+1)) - g muB S.B

is block diagonal in the lab projection m of J = N + S. Each block is built in
the coupled basis |(N, S=1) J, m>, J in {N-1, N, N+1}, and diagonalized with
``scipy.linalg.eigh``. The three fine-structure branches are labelled by their
B = 0 parentage (J = N+1 <-> S_N = +1, J = N <-> 0, J = N-1 <-> -1) and followed
adiabatically up to the requested field.

An independent brute-force spectrum in the uncoupled product basis
|N m_N>|S m_S> is kept as the reference for the recoupling algebra.
"""
from __future__ import annotations

import logging
import math
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
from numpy.typing import NDArray
from scipy.linalg import LinAlgError, eigh
from scipy.optimize import linear_sum_assignment
from sympy.physics.wigner import wigner_3j, wigner_6j

from centrimag_constants import UNIVERSAL, MolecularConstants, convert_energy
from centrimag_errors import EmptyBlockError, NumericalError, RejectedInputError

logger = logging.getLogger(__name__)

SPIN = 1

BRANCH_PLUS = "plus"
BRANCH_ZERO = "zero"
BRANCH_MINUS = "minus"
BRANCHES = (BRANCH_PLUS, BRANCH_ZERO, BRANCH_MINUS)

METHOD_APPROXIMATE = "approximate-eq2"
METHOD_EXACT = "exact-spectrum"

# m values used for the m-dependence diagnostic of the exact frequencies
_SPREAD_M_MAX = 4


# ---------------------------------------------------------------------------
# Domain types
# ---------------------------------------------------------------------------


@dataclass(frozen=True, slots=True)
class RotorFieldConfig:
    """Rotational level N in a field B (tesla) along +z; ``inverted`` flips B."""

    N: int
    B: float
    inverted: bool = False

    def __post_init__(self) -> None:
        if int(self.N) != self.N or self.N < 1:
            raise RejectedInputError(f"rotational quantum number must be an integer >= 1, got {self.N}")
        if not math.isfinite(self.B) or self.B < 0.0:
            raise RejectedInputError(f"field magnitude must be finite and >= 0 T, got {self.B}")
        if self.N % 2 == 0:
            warnings.warn(
                f"N={self.N} is even; only odd N exist in 16O2", UserWarning, stacklevel=3
            )

    @property
    def signed_field(self) -> float:
        return -self.B if self.inverted else self.B

    def with_field(self, B: float) -> "RotorFieldConfig":
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", UserWarning)
            return RotorFieldConfig(self.N, B, self.inverted)


@dataclass(frozen=True, slots=True, eq=False)
class SpectrumBlock:
    m: int
    J_values: Tuple[int, ...]
    energies: NDArray[np.float64]
    weights: NDArray[np.float64]  # weights[i, k]: weight of J_values[i] in eigenvector k
    branches: Tuple[str, ...]

    def energy(self, branch: str) -> Optional[float]:
        if branch not in self.branches:
            return None
        return float(self.energies[self.branches.index(branch)])


@dataclass(frozen=True, slots=True, eq=False)
class SpinRotationSpectrum:
    config: RotorFieldConfig
    constants: MolecularConstants
    blocks: Tuple[SpectrumBlock, ...]
    branch_map: Dict[Tuple[int, int], str] = field(default_factory=dict)  # (m, k) -> branch

    @property
    def total_states(self) -> int:
        return sum(len(block.energies) for block in self.blocks)

    def block(self, m: int) -> SpectrumBlock:
        for block in self.blocks:
            if block.m == m:
                return block
        raise EmptyBlockError(f"no block with m={m} for N={self.config.N}")

    def energies_by_branch(self, m: int) -> Dict[str, float]:
        block = self.block(m)
        return {branch: float(e) for branch, e in zip(block.branches, block.energies)}

    def all_energies(self) -> NDArray[np.float64]:
        return np.sort(np.concatenate([block.energies for block in self.blocks]))

    def to_rows(self) -> List[Tuple[int, str, float, float]]:
        rows = []
        for block in self.blocks:
            for branch, energy in zip(block.branches, block.energies):
                rows.append(
                    (block.m, branch, float(energy), convert_energy(float(energy), "joule", "gigahertz"))
                )
        return rows


@dataclass(frozen=True, slots=True)
class PrecessionFrequencies:
    """Branch precession frequencies (rad/s), reported as magnitudes."""

    omega_plus: float
    omega_minus: float
    method: str
    m_spread: Optional[float] = None

    def __post_init__(self) -> None:
        if self.omega_plus < 0.0 or self.omega_minus < 0.0:
            raise RejectedInputError("precession frequencies are magnitudes and must be >= 0")

    @property
    def max_omega(self) -> float:
        return max(self.omega_plus, self.omega_minus)

    @property
    def quarter_period_plus(self) -> float:
        return math.inf if self.omega_plus == 0.0 else math.pi / (2.0 * self.omega_plus)

    @property
    def quarter_period_minus(self) -> float:
        return math.inf if self.omega_minus == 0.0 else math.pi / (2.0 * self.omega_minus)

    def to_dict(self) -> dict:
        return {
            "method": self.method,
            "omega_plus_rad_per_s": self.omega_plus,
            "omega_minus_rad_per_s": self.omega_minus,
            "quarter_period_plus_s": self.quarter_period_plus,
            "quarter_period_minus_s": self.quarter_period_minus,
            "m_spread": self.m_spread,
        }


# ---------------------------------------------------------------------------
# Matrix elements
# ---------------------------------------------------------------------------


def spin_rotation_product(N: int, J: int) -> float:
    """Eigenvalue of N.S in the coupled state |(N, S=1) J>."""
    return (J * (J + 1) - N * (N + 1) - SPIN * (SPIN + 1)) / 2.0


def zero_field_energies(N: int, constants: MolecularConstants) -> Dict[str, float]:
    """Closed-form B = 0 energies of the three branches (joule)."""
    gamma, lam = constants.gamma, constants.lambda_
    return {
        BRANCH_PLUS: gamma * N - lam * N / (N + 1),
        BRANCH_ZERO: -gamma - lam / (N * (N + 1)),
        BRANCH_MINUS: -gamma * (N + 1) - lam * (N + 1) / N,
    }


@lru_cache(maxsize=None)
def spin_z_element(N: int, J_bra: int, J_ket: int, m: int) -> float:
    """<(N S) J_bra m| S_z |(N S) J_ket m> for S = 1.

    Wigner-Eckart theorem for the q = 0 component, with the reduced element of
    S obtained by treating N as a spectator in the coupled state.
    """
    if abs(J_bra - J_ket) > 1 or abs(m) > J_bra or abs(m) > J_ket:
        return 0.0
    s = SPIN
    three_j = wigner_3j(J_bra, 1, J_ket, -m, 0, m)
    if three_j == 0:
        return 0.0
    six_j = wigner_6j(s, J_bra, N, J_ket, s, 1)
    reduced = (
        (-1) ** (N + s + J_ket + 1)
        * math.sqrt((2 * J_ket + 1) * (2 * J_bra + 1))
        * float(six_j)
        * math.sqrt(s * (s + 1) * (2 * s + 1))
    )
    return float((-1) ** (J_bra - m) * float(three_j) * reduced)


def _block_J_values(N: int, m: int) -> Tuple[int, ...]:
    return tuple(J for J in (N - 1, N, N + 1) if J >= 0 and J >= abs(m))


def _block_parts(config: RotorFieldConfig, m: int, constants: MolecularConstants):
    """Field-free diagonal and Zeeman-per-tesla parts of one block."""
    N = config.N
    if abs(m) > N + 1:
        raise EmptyBlockError(f"|m|={abs(m)} exceeds N+1={N + 1}; the block is empty")
    J_values = _block_J_values(N, m)
    size = len(J_values)
    h0 = np.zeros((size, size))
    zeeman = np.zeros((size, size))
    for i, J in enumerate(J_values):
        ns = spin_rotation_product(N, J)
        h0[i, i] = constants.gamma * ns - constants.lambda_ * ns**2 / (N * (N + 1))
    prefactor = -constants.g_factor * UNIVERSAL.mu_B
    for i, J_bra in enumerate(J_values):
        for k in range(i, size):
            element = prefactor * spin_z_element(N, J_bra, J_values[k], m)
            zeeman[i, k] = element
            zeeman[k, i] = element
    return J_values, h0, zeeman


def build_hamiltonian_block(
    config: RotorFieldConfig, m: int, constants: MolecularConstants | None = None
) -> NDArray[np.float64]:
    """Hamiltonian block (joule) for projection m in the coupled J basis."""
    constants = constants or MolecularConstants.oxygen()
    _, h0, zeeman = _block_parts(config, m, constants)
    return h0 + config.signed_field * zeeman


# ---------------------------------------------------------------------------
# Diagonalization with adiabatic branch tracking
# ---------------------------------------------------------------------------


def _eigh(matrix: NDArray[np.float64], m: int) -> Tuple[NDArray[np.float64], NDArray[np.float64]]:
    try:
        return eigh(matrix)
    except LinAlgError as exc:
        raise NumericalError(f"eigen-solver failed for block m={m}: {exc}") from exc


def _solve_block(
    config: RotorFieldConfig, m: int, constants: MolecularConstants, tracking_steps: int
) -> SpectrumBlock:
    N = config.N
    J_values, h0, zeeman = _block_parts(config, m, constants)
    parent = {N + 1: BRANCH_PLUS, N: BRANCH_ZERO, N - 1: BRANCH_MINUS}

    # B = 0: eigenvectors are the pure J states
    energies, vectors = _eigh(h0, m)
    labels = [parent[J_values[int(np.argmax(np.abs(vectors[:, k])))]] for k in range(len(J_values))]

    field_target = config.signed_field
    if field_target != 0.0:
        for step in range(1, tracking_steps + 1):
            new_energies, new_vectors = _eigh(h0 + field_target * step / tracking_steps * zeeman, m)
            overlap = np.abs(vectors.T @ new_vectors) ** 2
            rows, cols = linear_sum_assignment(-overlap)
            new_labels = [""] * len(labels)
            for r, c in zip(rows, cols):
                new_labels[c] = labels[r]
            energies, vectors, labels = new_energies, new_vectors, new_labels

    return SpectrumBlock(
        m=m,
        J_values=J_values,
        energies=energies,
        weights=np.abs(vectors) ** 2,
        branches=tuple(labels),
    )


def diagonalize(
    config: RotorFieldConfig,
    constants: MolecularConstants | None = None,
    *,
    tracking_steps: int = 16,
    max_workers: int | None = None,
    m_values: Sequence[int] | None = None,
) -> SpinRotationSpectrum:
    """Diagonalize every m block (or the given subset) of the spectrum."""
    constants = constants or MolecularConstants.oxygen()
    if tracking_steps < 1:
        raise RejectedInputError("tracking_steps must be >= 1")
    N = config.N
    ms = list(m_values) if m_values is not None else list(range(-(N + 1), N + 2))

    def solve(m: int) -> SpectrumBlock:
        return _solve_block(config, m, constants, tracking_steps)

    if max_workers and max_workers > 1 and len(ms) > 1:
        with ThreadPoolExecutor(max_workers=max_workers) as pool:
            blocks = tuple(pool.map(solve, ms))
    else:
        blocks = tuple(solve(m) for m in ms)

    branch_map = {
        (block.m, k): branch for block in blocks for k, branch in enumerate(block.branches)
    }
    logger.debug("diagonalized N=%d B=%g T: %d blocks", N, config.signed_field, len(blocks))
    return SpinRotationSpectrum(config=config, constants=constants, blocks=blocks, branch_map=branch_map)


# ---------------------------------------------------------------------------
# Brute-force reference in the uncoupled basis
# ---------------------------------------------------------------------------


def _angular_momentum_operators(j: int) -> Tuple[NDArray, NDArray, NDArray]:
    """J_z, J_+, J_- for angular momentum j in the basis m = j, j-1, ..., -j."""
    ms = np.arange(j, -j - 1, -1, dtype=float)
    jz = np.diag(ms)
    jp = np.zeros((len(ms), len(ms)))
    for k in range(1, len(ms)):
        m = ms[k]
        jp[k - 1, k] = math.sqrt(j * (j + 1) - m * (m + 1))
    return jz, jp, jp.T.copy()


def brute_force_hamiltonian(
    config: RotorFieldConfig, constants: MolecularConstants | None = None
) -> NDArray[np.float64]:
    """Full 3(2N+1)-dimensional Hamiltonian in the |N m_N>|S m_S> basis."""
    constants = constants or MolecularConstants.oxygen()
    N = config.N
    nz, np_, nm = _angular_momentum_operators(N)
    sz, sp_, sm = _angular_momentum_operators(SPIN)
    n_dim = 2 * N + 1
    ns = np.kron(nz, sz) + 0.5 * (np.kron(np_, sm) + np.kron(nm, sp_))
    zeeman = np.kron(np.eye(n_dim), sz)
    hamiltonian = (
        constants.gamma * ns
        - constants.lambda_ * (ns @ ns) / (N * (N + 1))
        - constants.g_factor * UNIVERSAL.mu_B * config.signed_field * zeeman
    )
    return 0.5 * (hamiltonian + hamiltonian.T)


def brute_force_spectrum(
    config: RotorFieldConfig, constants: MolecularConstants | None = None
) -> NDArray[np.float64]:
    return np.sort(eigh(brute_force_hamiltonian(config, constants), eigvals_only=True))


def oracle_deviation(config: RotorFieldConfig, constants: MolecularConstants | None = None) -> float:
    """Largest eigenvalue mismatch between block and brute-force spectra,
    relative to the largest |eigenvalue|."""
    constants = constants or MolecularConstants.oxygen()
    coupled = diagonalize(config, constants).all_energies()
    reference = brute_force_spectrum(config, constants)
    if coupled.shape != reference.shape:
        raise NumericalError(
            f"state count mismatch: {coupled.size} coupled vs {reference.size} uncoupled"
        )
    scale = float(np.max(np.abs(reference)))
    return float(np.max(np.abs(coupled - reference)) / scale)


# ---------------------------------------------------------------------------
# Precession frequencies
# ---------------------------------------------------------------------------


def frequencies_approximate(
    config: RotorFieldConfig, constants: MolecularConstants | None = None
) -> PrecessionFrequencies:
    """Larmor frequency of a spin locked to N: muB |g| B / (hbar N)."""
    constants = constants or MolecularConstants.oxygen()
    omega = UNIVERSAL.mu_B * constants.abs_g * config.B / (UNIVERSAL.hbar * config.N)
    return PrecessionFrequencies(omega_plus=omega, omega_minus=omega, method=METHOD_APPROXIMATE)


def _branch_splitting(blocks: Dict[int, SpectrumBlock], branch: str, m: int) -> Optional[float]:
    lower = blocks[m].energy(branch) if m in blocks else None
    upper = blocks[m + 1].energy(branch) if (m + 1) in blocks else None
    if lower is None or upper is None:
        return None
    return abs(upper - lower) / UNIVERSAL.hbar


def frequencies_exact(
    config: RotorFieldConfig,
    constants: MolecularConstants | None = None,
    *,
    tracking_steps: int = 16,
) -> PrecessionFrequencies:
    """Branch frequencies from the m = 0 / m = 1 splitting of the exact spectrum."""
    constants = constants or MolecularConstants.oxygen()
    N = config.N
    if config.B == 0.0:
        return PrecessionFrequencies(0.0, 0.0, METHOD_EXACT, m_spread=0.0)

    m_top = max(1, min(_SPREAD_M_MAX, N - 1) + 1)
    spectrum = diagonalize(config, constants, tracking_steps=tracking_steps, m_values=range(0, m_top + 1))
    blocks = {block.m: block for block in spectrum.blocks}

    omegas: Dict[str, float] = {}
    spreads: List[float] = []
    for branch in (BRANCH_PLUS, BRANCH_MINUS):
        omega = _branch_splitting(blocks, branch, 0)
        if omega is None:
            # N = 1: the J = 0 level has no Zeeman splitting
            logger.warning("branch %s has no m=1 state for N=%d; reporting 0", branch, N)
            omega = 0.0
        omegas[branch] = omega
        samples = [
            value
            for m in range(0, m_top)
            if (value := _branch_splitting(blocks, branch, m)) is not None
        ]
        if len(samples) > 1 and np.mean(samples) > 0.0:
            spreads.append(float((max(samples) - min(samples)) / np.mean(samples)))

    return PrecessionFrequencies(
        omega_plus=omegas[BRANCH_PLUS],
        omega_minus=omegas[BRANCH_MINUS],
        method=METHOD_EXACT,
        m_spread=max(spreads) if spreads else 0.0,
    )


def frequencies(
    config: RotorFieldConfig, constants: MolecularConstants | None = None, method: str = METHOD_EXACT
) -> PrecessionFrequencies:
    if method == METHOD_EXACT:
        return frequencies_exact(config, constants)
    if method == METHOD_APPROXIMATE:
        return frequencies_approximate(config, constants)
    raise RejectedInputError(f"unknown frequency method {method!r}")


def track_branches(
    config: RotorFieldConfig,
    fields: Sequence[float],
    constants: MolecularConstants | None = None,
) -> List[PrecessionFrequencies]:
    """Exact branch frequencies over a sweep of field magnitudes."""
    return [frequencies_exact(config.with_field(B), constants) for B in fields]
