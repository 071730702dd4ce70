"""Ferromagnetic Heisenberg chain: Hamiltonian, Gibbs states and thermal metrology.

Units: k_B = 1 and hbar = 1; temperatures and rates are quoted in units of the
exchange coupling J, energies in J, times in 1/J.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .errors import ResourceLimitError, ValidationError
from .linalg import Spectrum, eig_hermitian

MAX_SITES = 10

SIGMA_X = np.array([[0.0, 1.0], [1.0, 0.0]], dtype=complex)
SIGMA_Y = np.array([[0.0, -1.0j], [1.0j, 0.0]], dtype=complex)
SIGMA_Z = np.array([[1.0, 0.0], [0.0, -1.0]], dtype=complex)
IDENTITY_2 = np.eye(2, dtype=complex)


@dataclass(frozen=True)
class ChainParams:
    """Chain size and ferromagnetic exchange coupling (J > 0)."""

    n_sites: int
    coupling: float = 1.0

    def __post_init__(self) -> None:
        if self.n_sites < 2:
            raise ValidationError(f"need at least 2 sites, got {self.n_sites}")
        if self.n_sites > MAX_SITES:
            raise ResourceLimitError(
                f"n_sites={self.n_sites} exceeds the {MAX_SITES}-site memory guard"
            )
        if not self.coupling > 0.0:
            raise ValidationError(f"coupling must be positive, got {self.coupling}")

    @property
    def dim(self) -> int:
        return 2 ** self.n_sites


def site_operator(op: np.ndarray, site: int, n_sites: int) -> np.ndarray:
    """Embed a single-qubit operator at ``site`` (1-based, site 1 = MSB)."""
    if not 1 <= site <= n_sites:
        raise ValidationError(f"site {site} outside [1, {n_sites}]")
    left = np.eye(2 ** (site - 1), dtype=complex)
    right = np.eye(2 ** (n_sites - site), dtype=complex)
    return np.kron(np.kron(left, op), right)


def total_sigma_z(n_sites: int) -> np.ndarray:
    return sum(site_operator(SIGMA_Z, j, n_sites) for j in range(1, n_sites + 1))


def build_hamiltonian(params: ChainParams) -> np.ndarray:
    """Open-boundary Heisenberg Hamiltonian -J sum_j sigma_j . sigma_{j+1}."""
    n = params.n_sites
    h = np.zeros((params.dim, params.dim), dtype=complex)
    for j in range(1, n):
        for pauli in (SIGMA_X, SIGMA_Y, SIGMA_Z):
            h -= params.coupling * (
                site_operator(pauli, j, n) @ site_operator(pauli, j + 1, n)
            )
    return h


def symmetry_adapted_spectrum(params: ChainParams, degeneracy_tol: float = 1e-9) -> Spectrum:
    """Chain spectrum with degenerate eigenspaces resolved into total-sigma_z sectors.

    The chain commutes with the total magnetization, so degenerate eigenspaces
    can be split into joint eigenvectors of (H, sum_j sigma_z^j).  Eigenvector
    phases are fixed deterministically (largest-magnitude component made real
    positive), giving a reproducible basis for the dissipative channels.
    """
    spec = eig_hermitian(build_hamiltonian(params))
    eps = spec.eigenvalues.copy()
    v = spec.eigenvectors.copy()
    sz = total_sigma_z(params.n_sites)
    scale = max(1.0, float(abs(eps[-1] - eps[0])))
    i, d = 0, len(eps)
    while i < d:
        j = i + 1
        while j < d and eps[j] - eps[i] <= degeneracy_tol * scale:
            j += 1
        if j - i > 1:
            block = v[:, i:j]
            _, rot = np.linalg.eigh(block.conj().T @ sz @ block)
            v[:, i:j] = block @ rot
        i = j
    for k in range(d):
        lead = int(np.argmax(np.abs(v[:, k])))
        phase = v[lead, k] / abs(v[lead, k])
        v[:, k] = v[:, k] / phase
    return Spectrum(eigenvalues=eps, eigenvectors=v)


@lru_cache(maxsize=32)
def _cached_spectrum(n_sites: int, coupling: float) -> Spectrum:
    return symmetry_adapted_spectrum(ChainParams(n_sites, coupling))


def chain_spectrum(params: ChainParams) -> Spectrum:
    """Cached symmetry-adapted spectrum for the given chain."""
    return _cached_spectrum(params.n_sites, params.coupling)


def boltzmann_weights(eigenvalues: np.ndarray, temperature: float) -> tuple[np.ndarray, float]:
    """Normalized Gibbs weights and log partition function.

    The exponent is always shifted by the ground energy, which is exact after
    normalization and avoids overflow at any temperature.
    """
    if not temperature > 0.0:
        raise ValidationError(f"temperature must be positive, got {temperature}")
    e0 = float(np.min(eigenvalues))
    w = np.exp(-(eigenvalues - e0) / temperature)
    z_shifted = float(np.sum(w))
    log_z = float(np.log(z_shifted) - e0 / temperature)
    return w / z_shifted, log_z


@dataclass(frozen=True)
class ThermalProbe:
    """Gibbs state of the chain at temperature T together with its spectrum."""

    params: ChainParams
    temperature: float
    spectrum: Spectrum
    gibbs: np.ndarray
    log_partition_function: float

    @property
    def partition_function(self) -> float:
        # may overflow to inf below T ~ 1e-2 J; log_partition_function is exact
        return float(np.exp(self.log_partition_function))


def gibbs_state(params: ChainParams, temperature: float) -> ThermalProbe:
    """Thermal probe exp(-H/T)/Z for the chain (k_B = 1)."""
    spec = chain_spectrum(params)
    w, log_z = boltzmann_weights(spec.eigenvalues, temperature)
    v = spec.eigenvectors
    rho = (v * w) @ v.conj().T
    rho = 0.5 * (rho + rho.conj().T)
    return ThermalProbe(
        params=params,
        temperature=temperature,
        spectrum=spec,
        gibbs=rho,
        log_partition_function=log_z,
    )


def energy_moments(probe: ThermalProbe) -> tuple[float, float]:
    """Thermal mean energy and energy variance.

    The variance uses the shifted two-pass form sum_l w_l (eps_l - <H>)^2,
    which stays accurate when the fluctuations are many orders of magnitude
    below the mean energy scale (deep low-temperature regime).
    """
    eps = probe.spectrum.eigenvalues
    w, _ = boltzmann_weights(eps, probe.temperature)
    mean = float(np.sum(eps * w))
    var = float(np.sum(w * (eps - mean) ** 2))
    return mean, max(var, 0.0)


def qfi_thermal(probe: ThermalProbe) -> float:
    """Thermal quantum Fisher information (Delta H)^2 / T^4 for temperature."""
    _, var = energy_moments(probe)
    return var / probe.temperature ** 4


def heat_capacity(probe: ThermalProbe) -> float:
    """Heat capacity (Delta H)^2 / T^2 = dT<H>."""
    _, var = energy_moments(probe)
    return var / probe.temperature ** 2


def default_temperature_grid(coupling: float = 1.0, n_points: int = 400) -> np.ndarray:
    """Temperature scan grid (0.01 J to 2 J) used for peak searches and priors."""
    return np.linspace(0.01 * coupling, 2.0 * coupling, n_points)


def find_t_star(params: ChainParams, temperature_grid: np.ndarray | None = None) -> float:
    """Temperature maximizing the thermal QFI.

    Coarse grid argmax (ties resolved toward smaller T by the ascending scan)
    followed by one local refinement pass across the neighbouring grid cells.
    """
    if temperature_grid is None:
        temperature_grid = default_temperature_grid(params.coupling)
    grid = np.asarray(temperature_grid, dtype=float)
    if grid.size == 0:
        raise ValidationError("temperature grid is empty")
    spec = chain_spectrum(params)

    def q_at(t: float) -> float:
        return qfi_thermal(gibbs_state(params, t))

    # eigenvalues are shared; evaluate on the vectorized weights directly
    eps = spec.eigenvalues
    def q_fast(t: float) -> float:
        w, _ = boltzmann_weights(eps, t)
        mean = float(np.sum(eps * w))
        var = float(np.sum(w * (eps - mean) ** 2))
        return var / t ** 4

    values = np.array([q_fast(t) for t in grid])
    best = int(np.argmax(values))
    if grid.size == 1:
        return float(grid[0])
    lo = grid[max(best - 1, 0)]
    hi = grid[min(best + 1, grid.size - 1)]
    fine = np.linspace(lo, hi, 41)
    fine_values = np.array([q_fast(t) for t in fine])
    return float(fine[int(np.argmax(fine_values))])
