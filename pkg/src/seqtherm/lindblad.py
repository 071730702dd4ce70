"""Microscopic thermal master equation for the chain and its propagators.

Each site couples to the bath through sigma_x, decomposed over Bohr transition
frequencies of the chain Hamiltonian.  Downward transitions carry the flat rate
kappa, upward ones the detailed-balance rate kappa exp(-omega/T), which makes
the Gibbs state stationary by construction.

The dissipator treats every eigenpair transition as an individual decay
channel (in the symmetry-adapted eigenbasis).  Grouping degenerate-gap pairs
into a single collective operator would conserve the global spin-flip parity
prod_j sigma_x^j and the probe would then never thermalize from generic
states; the per-channel form removes that obstruction while leaving the Gibbs
state exactly stationary.

Density matrices are vectorized column-wise: vec(A rho B) = (B^T kron A) vec(rho).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.linalg

from .chain import SIGMA_X, site_operator
from .errors import NumericalError, ResourceLimitError, ValidationError
from .linalg import Spectrum

OMEGA_TOL = 1e-9
MAX_SUPEROP_SITES = 5
MAX_UNITARY_SITES = 8
PROPAGATE_PSD_FLOOR = -1e-6
TRACE_PRESERVATION_TOL = 1e-9


@dataclass(frozen=True)
class BohrTransition:
    """Positive Bohr frequency with the eigenindex pairs (m, n), eps_m - eps_n = omega."""

    omega: float
    pairs: tuple[tuple[int, int], ...]


def vec(rho: np.ndarray) -> np.ndarray:
    return rho.flatten(order="F")


def unvec(v: np.ndarray, dim: int) -> np.ndarray:
    return v.reshape((dim, dim), order="F")


def bohr_frequencies(spectrum: Spectrum, omega_tol: float = OMEGA_TOL) -> list[BohrTransition]:
    """Positive energy gaps of the spectrum, grouped within ``omega_tol``, ascending."""
    if not omega_tol > 0.0:
        raise ValidationError(f"omega_tol must be positive, got {omega_tol}")
    eps = spectrum.eigenvalues
    d = len(eps)
    raw: list[tuple[float, tuple[int, int]]] = []
    for m in range(d):
        for n in range(d):
            gap = float(eps[m] - eps[n])
            if gap > omega_tol:
                raw.append((gap, (m, n)))
    raw.sort(key=lambda item: item[0])
    groups: list[BohrTransition] = []
    current: list[tuple[int, int]] = []
    current_omega = None
    for gap, pair in raw:
        if current_omega is None or gap - current_omega > omega_tol:
            if current:
                groups.append(BohrTransition(current_omega, tuple(current)))
            current_omega, current = gap, [pair]
        else:
            current.append(pair)
    if current:
        groups.append(BohrTransition(current_omega, tuple(current)))
    return groups


def _sigma_x_eigenbasis(spectrum: Spectrum, site: int, n_sites: int) -> np.ndarray:
    v = spectrum.eigenvectors
    return v.conj().T @ site_operator(SIGMA_X, site, n_sites) @ v


def build_jump_operators(
    spectrum: Spectrum, site: int, transitions: list[BohrTransition]
) -> dict[float, np.ndarray]:
    """Gap-resolved jump operators A_site(omega) summed over degenerate pairs.

    A(omega) collects every |eps_n><eps_n| sigma_x^site |eps_m><eps_m| whose gap
    matches omega, so sum_omega (A + A^dagger) plus the zero-gap block of
    sigma_x^site reconstructs sigma_x^site exactly.
    """
    d = spectrum.dim
    n_sites = int(round(np.log2(d)))
    if not 1 <= site <= n_sites:
        raise ValidationError(f"site {site} outside [1, {n_sites}]")
    x_eig = _sigma_x_eigenbasis(spectrum, site, n_sites)
    v = spectrum.eigenvectors
    out: dict[float, np.ndarray] = {}
    for tr in transitions:
        a_eig = np.zeros((d, d), dtype=complex)
        for (m, n) in tr.pairs:
            a_eig[n, m] = x_eig[n, m]
        out[tr.omega] = v @ a_eig @ v.conj().T
    return out


def zero_gap_block(spectrum: Spectrum, site: int, omega_tol: float = OMEGA_TOL) -> np.ndarray:
    """The |gap| <= omega_tol block of sigma_x^site in the energy eigenbasis."""
    d = spectrum.dim
    n_sites = int(round(np.log2(d)))
    eps = spectrum.eigenvalues
    x_eig = _sigma_x_eigenbasis(spectrum, site, n_sites)
    mask = np.abs(eps[:, None] - eps[None, :]) <= omega_tol
    v = spectrum.eigenvectors
    return v @ (x_eig * mask) @ v.conj().T


@dataclass(frozen=True)
class ThermalChannel:
    """Single eigenpair decay channel: omega > 0 and A = |n><n| sigma_x |m><m|."""

    site: int
    omega: float
    operator: np.ndarray


def thermal_channels(
    spectrum: Spectrum, n_sites: int, omega_tol: float = OMEGA_TOL
) -> list[ThermalChannel]:
    """All per-site, per-eigenpair downward channels with omega > omega_tol."""
    eps = spectrum.eigenvalues
    v = spectrum.eigenvectors
    d = spectrum.dim
    channels: list[ThermalChannel] = []
    for site in range(1, n_sites + 1):
        x_eig = _sigma_x_eigenbasis(spectrum, site, n_sites)
        for m in range(d):
            for n in range(d):
                gap = float(eps[m] - eps[n])
                if gap > omega_tol and abs(x_eig[n, m]) > 1e-14:
                    a = np.outer(v[:, n], v[:, m].conj()) * x_eig[n, m]
                    channels.append(ThermalChannel(site=site, omega=gap, operator=a))
    return channels


def _dissipator_superop(b: np.ndarray, identity: np.ndarray) -> np.ndarray:
    bdb = b.conj().T @ b
    return (
        np.kron(b.conj(), b)
        - 0.5 * np.kron(identity, bdb)
        - 0.5 * np.kron(bdb.T, identity)
    )


class SuperoperatorBlocks:
    """Temperature-independent pieces of the generator, assembled once.

    L(kappa, T) = L_H + kappa * (L_down + sum_omega exp(-omega/T) L_up(omega)),
    so rebuilding the generator at a shifted temperature costs a handful of
    scaled matrix additions instead of a full reassembly.
    """

    def __init__(self, spectrum: Spectrum, n_sites: int, omega_tol: float = OMEGA_TOL):
        if n_sites > MAX_SUPEROP_SITES:
            raise ResourceLimitError(
                f"superoperator needs dim 4^{n_sites}; guard is {MAX_SUPEROP_SITES} sites"
            )
        d = spectrum.dim
        identity = np.eye(d, dtype=complex)
        h = (spectrum.eigenvectors * spectrum.eigenvalues) @ spectrum.eigenvectors.conj().T
        self.dim = d
        self.hamiltonian_part = -1j * (np.kron(identity, h) - np.kron(h.T, identity))
        self.down_part = np.zeros((d * d, d * d), dtype=complex)
        up: dict[float, np.ndarray] = {}
        for ch in thermal_channels(spectrum, n_sites, omega_tol):
            self.down_part += _dissipator_superop(ch.operator, identity)
            key = round(ch.omega / omega_tol) * omega_tol
            if key not in up:
                up[key] = np.zeros((d * d, d * d), dtype=complex)
            up[key] += _dissipator_superop(ch.operator.conj().T, identity)
        self.up_parts = up

    def generator(self, kappa: float, temperature: float) -> np.ndarray:
        l_total = self.hamiltonian_part + kappa * self.down_part
        for omega, block in self.up_parts.items():
            l_total = l_total + (kappa * np.exp(-omega / temperature)) * block
        return l_total


@dataclass
class LindbladModel:
    """Thermal generator for one (chain, kappa, T) triple with cached propagators.

    ``jump_operators[site][omega]`` holds the gap-summed operators for
    inspection; the generator itself uses the finer per-pair channels.  The
    propagator cache maps evolution times to exp(L t); repeated calls with the
    same time reuse the cached matrix and are bit-identical.
    """

    spectrum: Spectrum
    n_sites: int
    kappa: float
    temperature: float
    transitions: list[BohrTransition]
    jump_operators: dict[int, dict[float, np.ndarray]]
    liouvillian: np.ndarray | None
    _propagators: dict[float, np.ndarray] = field(default_factory=dict)

    @property
    def dim(self) -> int:
        return self.spectrum.dim

    def rate(self, omega: float) -> float:
        """KMS rate: kappa for omega > 0, kappa exp(omega/T) for omega < 0."""
        if omega >= 0.0:
            return self.kappa
        return self.kappa * float(np.exp(omega / self.temperature))

    def stationary_state(self) -> np.ndarray:
        from .chain import boltzmann_weights

        w, _ = boltzmann_weights(self.spectrum.eigenvalues, self.temperature)
        v = self.spectrum.eigenvectors
        rho = (v * w) @ v.conj().T
        return 0.5 * (rho + rho.conj().T)

    def apply_generator(self, rho: np.ndarray) -> np.ndarray:
        if self.kappa == 0.0:
            h = (self.spectrum.eigenvectors * self.spectrum.eigenvalues) @ \
                self.spectrum.eigenvectors.conj().T
            return -1j * (h @ rho - rho @ h)
        return unvec(self.liouvillian @ vec(rho), self.dim)

    def _propagator(self, t: float) -> np.ndarray:
        key = float(t)
        if key not in self._propagators:
            if self.kappa == 0.0:
                phases = np.exp(-1j * self.spectrum.eigenvalues * t)
                v = self.spectrum.eigenvectors
                self._propagators[key] = (v * phases) @ v.conj().T
            else:
                self._propagators[key] = scipy.linalg.expm(self.liouvillian * t)
        return self._propagators[key]


def build_liouvillian(
    spectrum: Spectrum,
    kappa: float,
    temperature: float,
    *,
    omega_tol: float = OMEGA_TOL,
    blocks: SuperoperatorBlocks | None = None,
) -> LindbladModel:
    """Assemble the thermal Lindblad model for the given rate and temperature.

    kappa = 0 selects the closed-system path: the generator reduces to the bare
    commutator and propagation uses unitary conjugation in dimension 2^N
    (feasible up to 8 sites) instead of the 4^N superoperator.
    """
    if not temperature > 0.0:
        raise ValidationError(f"temperature must be positive, got {temperature}")
    if kappa < 0.0:
        raise ValidationError(f"kappa must be non-negative, got {kappa}")
    n_sites = int(round(np.log2(spectrum.dim)))
    transitions = bohr_frequencies(spectrum, omega_tol)
    jumps = {
        site: build_jump_operators(spectrum, site, transitions)
        for site in range(1, n_sites + 1)
    }
    if kappa == 0.0:
        if n_sites > MAX_UNITARY_SITES:
            raise ResourceLimitError(
                f"unitary path guard is {MAX_UNITARY_SITES} sites, got {n_sites}"
            )
        liouvillian = None
    else:
        if blocks is None:
            blocks = SuperoperatorBlocks(spectrum, n_sites, omega_tol)
        liouvillian = blocks.generator(kappa, temperature)
    return LindbladModel(
        spectrum=spectrum,
        n_sites=n_sites,
        kappa=kappa,
        temperature=temperature,
        transitions=transitions,
        jump_operators=jumps,
        liouvillian=liouvillian,
    )


def propagate(model: LindbladModel, rho0: np.ndarray, t: float) -> np.ndarray:
    """Evolve a state for time t under the model, with per-time propagator caching."""
    if t < 0.0:
        raise ValidationError(f"time must be non-negative, got {t}")
    if t == 0.0:
        return rho0.copy()
    p = model._propagator(t)
    if model.kappa == 0.0:
        out = p @ rho0 @ p.conj().T
    else:
        out = unvec(p @ vec(rho0), model.dim)
    tr = float(np.trace(out).real)
    if abs(tr - 1.0) > TRACE_PRESERVATION_TOL:
        raise NumericalError(f"trace drifted to {tr} after t={t}")
    wmin = float(np.min(np.linalg.eigvalsh(0.5 * (out + out.conj().T))))
    if wmin < PROPAGATE_PSD_FLOOR:
        raise NumericalError(
            f"propagated state eigenvalue {wmin:.3e} signals an instability at t={t}"
        )
    return out


def thermalization_time_t95(
    model: LindbladModel,
    rho0: np.ndarray,
    t_max: float,
    dt: float,
    threshold: float = 0.95,
) -> float | None:
    """Earliest grid time with fidelity(rho(t), rho_th) >= threshold, else None.

    Steps with the cached dt-propagator; by the semigroup property this equals
    propagation to each grid time directly.
    """
    from .linalg import fidelity

    if not dt > 0.0 or not t_max > 0.0:
        raise ValidationError("dt and t_max must be positive")
    target = model.stationary_state()
    if fidelity(rho0, target) >= threshold:
        return 0.0
    step = model._propagator(dt)
    rho = rho0.copy()
    t = 0.0
    while t < t_max:
        if model.kappa == 0.0:
            rho = step @ rho @ step.conj().T
        else:
            rho = unvec(step @ vec(rho), model.dim)
        rho = rho / np.trace(rho).real
        t += dt
        if fidelity(rho, target) >= threshold:
            return t
    return None
