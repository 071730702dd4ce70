"""Dense complex linear algebra for small quantum registers.

Hermitian eigendecomposition, operator functions, Uhlmann fidelity, von Neumann
entropy and partial traces over qubit registers.  Everything operates on plain
``numpy`` arrays; density matrices are validated with :func:`check_density_matrix`
at operation boundaries rather than wrapped in classes.

Qubit ordering convention: site 1 is the most significant bit of the
computational-basis index, site N the least significant.  All functions are
pure and safe for concurrent callers.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Iterable

import numpy as np

from .errors import NumericalError, ValidationError

HERMITICITY_TOL = 1e-10
TRACE_TOL = 1e-10
PSD_FLOOR = -1e-9
ENTROPY_EIGENVALUE_FLOOR = 1e-14


@dataclass(frozen=True)
class Spectrum:
    """Eigendecomposition of a Hermitian operator.

    ``eigenvalues`` are ascending and real; ``eigenvectors`` holds the matching
    orthonormal eigenvectors as columns, so ``V @ diag(w) @ V.conj().T``
    reconstructs the operator.
    """

    eigenvalues: np.ndarray
    eigenvectors: np.ndarray

    @property
    def dim(self) -> int:
        return len(self.eigenvalues)


def _as_square_matrix(m: np.ndarray, name: str = "matrix") -> np.ndarray:
    m = np.asarray(m)
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        raise ValidationError(f"{name} must be square, got shape {m.shape}")
    if not np.all(np.isfinite(m)):
        raise ValidationError(f"{name} has non-finite entries")
    return m.astype(complex, copy=False)


def hermiticity_defect(m: np.ndarray) -> float:
    """Relative Frobenius distance from the Hermitian part."""
    scale = max(1.0, float(np.linalg.norm(m)))
    return float(np.linalg.norm(m - m.conj().T)) / scale


def eig_hermitian(m: np.ndarray) -> Spectrum:
    """Eigendecomposition of a Hermitian matrix with ascending eigenvalues.

    Raises ValidationError for non-Hermitian input (relative defect above
    1e-10) and NumericalError if the solver fails to converge or the spectral
    reconstruction misses the input by more than 1e-10 relative.
    """
    m = _as_square_matrix(m)
    if hermiticity_defect(m) > HERMITICITY_TOL:
        raise ValidationError(
            f"matrix is not Hermitian to {HERMITICITY_TOL:g} "
            f"(defect {hermiticity_defect(m):.3e})"
        )
    try:
        w, v = np.linalg.eigh(m)
    except np.linalg.LinAlgError as exc:
        raise NumericalError(f"eigh failed to converge for dim {m.shape[0]}") from exc
    norm = float(np.linalg.norm(m))
    if norm > 0.0:
        recon = (v * w) @ v.conj().T
        defect = float(np.linalg.norm(recon - m)) / norm
        if defect > HERMITICITY_TOL:
            raise NumericalError(
                f"spectral reconstruction defect {defect:.3e} for dim {m.shape[0]}"
            )
    return Spectrum(eigenvalues=w, eigenvectors=v)


def operator_function(s: Spectrum, f: Callable[[float], complex]) -> np.ndarray:
    """Apply a scalar function to a Hermitian operator through its spectrum.

    Returns ``V diag(f(w)) V^dagger``.  Raises NumericalError if ``f`` returns a
    non-finite value for any eigenvalue.
    """
    vals = np.array([f(float(x)) for x in s.eigenvalues], dtype=complex)
    if not np.all(np.isfinite(vals)):
        bad = s.eigenvalues[~np.isfinite(vals)]
        raise NumericalError(f"operator function non-finite at eigenvalues {bad}")
    v = s.eigenvectors
    return (v * vals) @ v.conj().T


def check_density_matrix(rho: np.ndarray, name: str = "state") -> np.ndarray:
    """Validate Hermiticity, unit trace and positivity of a density matrix."""
    rho = _as_square_matrix(rho, name)
    if hermiticity_defect(rho) > HERMITICITY_TOL:
        raise ValidationError(f"{name} is not Hermitian to {HERMITICITY_TOL:g}")
    tr = complex(np.trace(rho))
    if abs(tr - 1.0) > TRACE_TOL:
        raise ValidationError(f"{name} has trace {tr}, expected 1 to {TRACE_TOL:g}")
    wmin = float(np.min(np.linalg.eigvalsh(rho)))
    if wmin < PSD_FLOOR:
        raise ValidationError(
            f"{name} has eigenvalue {wmin:.3e} below the PSD floor {PSD_FLOOR:g}"
        )
    return rho


def _psd_eigs(rho: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    # eigenvalues in [PSD_FLOOR, 0) are eigensolver round-off; clip to zero
    w, v = np.linalg.eigh(rho)
    return np.clip(w, 0.0, None), v


def fidelity(a: np.ndarray, b: np.ndarray) -> float:
    """Uhlmann fidelity ``(Tr sqrt(sqrt(a) b sqrt(a)))^2`` between two states."""
    a = check_density_matrix(a, "first state")
    b = check_density_matrix(b, "second state")
    if a.shape != b.shape:
        raise ValidationError(f"dimension mismatch: {a.shape} vs {b.shape}")
    w, v = _psd_eigs(a)
    sqrt_a = (v * np.sqrt(w)) @ v.conj().T
    inner = np.clip(np.linalg.eigvalsh(sqrt_a @ b @ sqrt_a), 0.0, None)
    val = float(np.sum(np.sqrt(inner)) ** 2)
    return min(max(val, 0.0), 1.0)


def von_neumann_entropy(rho: np.ndarray) -> float:
    """Entropy ``-Tr rho ln rho`` in nats; eigenvalues below 1e-14 contribute 0."""
    rho = check_density_matrix(rho)
    w, _ = _psd_eigs(rho)
    w = w[w > ENTROPY_EIGENVALUE_FLOOR]
    return float(-np.sum(w * np.log(w)))


def partial_trace(rho: np.ndarray, keep: Iterable[int], n_sites: int | None = None) -> np.ndarray:
    """Trace out all qubits except ``keep`` (1-based site indices, site 1 = MSB).

    The result orders the kept sites by ascending site index.  Keeping every
    site returns the input unchanged.
    """
    rho = _as_square_matrix(rho, "state")
    dim = rho.shape[0]
    n = int(round(np.log2(dim))) if n_sites is None else n_sites
    if 2 ** n != dim:
        raise ValidationError(f"state dim {dim} is not 2^{n}")
    keep = sorted(set(int(k) for k in keep))
    if not keep:
        raise ValidationError("keep-set must not be empty")
    if keep[0] < 1 or keep[-1] > n:
        raise ValidationError(f"site indices {keep} outside [1, {n}]")
    if len(keep) == n:
        return rho.copy()
    tensor = rho.reshape((2,) * (2 * n))
    # axis j-1 is site j's row index, axis n+j-1 its column index
    row_idx = list(range(n))
    col_idx = list(range(n, 2 * n))
    for site in range(1, n + 1):
        if site not in keep:
            col_idx[site - 1] = row_idx[site - 1]
    out_idx = [row_idx[s - 1] for s in keep] + [col_idx[s - 1] for s in keep]
    reduced = np.einsum(tensor, row_idx + col_idx, out_idx)
    d_keep = 2 ** len(keep)
    return reduced.reshape((d_keep, d_keep))


def random_density_matrix(dim: int, rng: np.random.Generator) -> np.ndarray:
    """Full-rank random state from the Ginibre ensemble (tests and benchmarks)."""
    g = rng.normal(size=(dim, dim)) + 1j * rng.normal(size=(dim, dim))
    rho = g @ g.conj().T
    return rho / np.trace(rho).real
