"""Dense complex-matrix kernel: tensor products, partial traces, matrix
functions, eigendecompositions and norms.

Conventions used throughout the package:

* Matrices are plain ``numpy.ndarray`` objects with dtype ``complex128``.
* Single-level kets are ``|0> = (0, 1)^T`` and ``|1> = (1, 0)^T``; the
  computational label ``j`` of a d-level system is the unit vector with a 1
  at index ``d - 1 - j`` (see :func:`ket`).  A unit test pins this.
* Composite systems are ordered plant-first: the joint index of
  ``(i_P, i_C)`` flattens as ``i_P * d_C + i_C``, i.e. ``kron(plant, ctrl)``.
"""

from __future__ import annotations

import numpy as np
import scipy.linalg

# Default tolerances.  All check functions accept overrides.
HERM_TOL = 1e-12      # relative hermiticity tolerance
TRACE_TOL = 1e-10     # absolute unit-trace tolerance
PSD_TOL = 1e-10       # absolute negative-eigenvalue tolerance

sigma_x = np.array([[0.0, 1.0], [1.0, 0.0]], dtype=complex)
sigma_y = np.array([[0.0, -1.0j], [1.0j, 0.0]], dtype=complex)
sigma_z = np.array([[1.0, 0.0], [0.0, -1.0]], dtype=complex)


def as_cmatrix(a) -> np.ndarray:
    """Coerce input to a 2-D complex ndarray."""
    m = np.asarray(a, dtype=complex)
    if m.ndim != 2:
        raise ValueError(f"expected a 2-D matrix, got ndim={m.ndim}")
    return m


def ket(j: int, d: int) -> np.ndarray:
    """Computational basis ket ``|j>`` of a d-level system.

    ``|j>`` has its single 1 at vector index ``d - 1 - j``, so for a qubit
    ``|0> = (0, 1)^T`` and ``|1> = (1, 0)^T``.  Multi-level labels compose
    under :func:`kron`: ``ket(0, 2) ⊗ ket(1, 2) == ket(1, 4)``.
    """
    if not 0 <= j < d:
        raise ValueError(f"label {j} out of range for dimension {d}")
    v = np.zeros(d, dtype=complex)
    v[d - 1 - j] = 1.0
    return v


def basis_kets(d: int) -> list[np.ndarray]:
    """All computational kets ``|0>, ..., |d-1>`` in label order."""
    return [ket(j, d) for j in range(d)]


def proj(v: np.ndarray) -> np.ndarray:
    """Rank-one projector ``|v><v|``."""
    v = np.asarray(v, dtype=complex)
    return np.outer(v, v.conj())


def outer(u: np.ndarray, v: np.ndarray) -> np.ndarray:
    """Rank-one operator ``|u><v|``."""
    return np.outer(np.asarray(u, dtype=complex), np.asarray(v, dtype=complex).conj())


def kron(a, b) -> np.ndarray:
    """Tensor product with plant-first index flattening."""
    return np.kron(as_cmatrix(a), as_cmatrix(b))


def maxabs(a) -> float:
    """Entrywise max-abs, the metric behind all tolerance comparisons."""
    a = np.asarray(a)
    return float(np.abs(a).max()) if a.size else 0.0


def close(a, b, tol: float = 1e-12) -> bool:
    """Tolerance-parameterized equality: max-abs difference below ``tol``."""
    return maxabs(np.asarray(a) - np.asarray(b)) <= tol


def dagger(a) -> np.ndarray:
    return np.asarray(a).conj().T


def is_hermitian(a, tol: float = HERM_TOL) -> bool:
    """True if ``max-abs(A - A^dag) <= tol * max-abs(A)`` (absolute for A ~ 0)."""
    a = as_cmatrix(a)
    scale = max(maxabs(a), 1.0)
    return maxabs(a - a.conj().T) <= tol * scale


def hermitize(a) -> np.ndarray:
    """Nearest Hermitian matrix ``(A + A^dag) / 2``."""
    a = as_cmatrix(a)
    return 0.5 * (a + a.conj().T)


def require_hermitian(a, tol: float = HERM_TOL, what: str = "matrix") -> np.ndarray:
    a = as_cmatrix(a)
    if not is_hermitian(a, tol):
        dev = maxabs(a - a.conj().T)
        raise ValueError(f"{what} is not Hermitian (max |A - A^dag| = {dev:.3e})")
    return a


def check_density(rho, trace_tol: float = TRACE_TOL, psd_tol: float = PSD_TOL,
                  herm_tol: float = HERM_TOL) -> np.ndarray:
    """Validate a density matrix: Hermitian, unit trace, positive semidefinite.

    Returns the input coerced to complex; raises ``ValueError`` listing every
    violated property.
    """
    rho = as_cmatrix(rho)
    problems = []
    if rho.shape[0] != rho.shape[1]:
        raise ValueError(f"density matrix must be square, got {rho.shape}")
    if not is_hermitian(rho, herm_tol):
        problems.append(f"not Hermitian (dev {maxabs(rho - rho.conj().T):.3e})")
    tr = complex(np.trace(rho))
    if abs(tr - 1.0) > trace_tol:
        problems.append(f"trace {tr:.12g} not within {trace_tol:g} of 1")
    lo = float(np.linalg.eigvalsh(hermitize(rho)).min())
    if lo < -psd_tol:
        problems.append(f"minimum eigenvalue {lo:.3e} below -{psd_tol:g}")
    if problems:
        raise ValueError("invalid density matrix: " + "; ".join(problems))
    return rho


def partial_trace(x, dims: tuple[int, int], over: str = "controller") -> np.ndarray:
    """Partial trace of a plant-first composite operator.

    ``dims = (d_P, d_C)``; ``over`` selects the traced factor, ``"controller"``
    returning the d_P x d_P reduction and ``"plant"`` the d_C x d_C one.
    Linear and trace-preserving.
    """
    x = as_cmatrix(x)
    d_p, d_c = dims
    n = d_p * d_c
    if x.shape != (n, n):
        raise ValueError(f"operator shape {x.shape} does not match dims {dims}")
    t = x.reshape(d_p, d_c, d_p, d_c)
    if over == "controller":
        return np.einsum("ikjk->ij", t)
    if over == "plant":
        return np.einsum("kikj->ij", t)
    raise ValueError(f"unknown subsystem tag {over!r}")


def expm(a) -> np.ndarray:
    """Matrix exponential (scaling-and-squaring, Pade approximant)."""
    return scipy.linalg.expm(as_cmatrix(a))


def eig_hermitian(h, tol: float = HERM_TOL) -> tuple[np.ndarray, np.ndarray]:
    """Eigendecomposition ``h = V diag(w) V^dag`` of a Hermitian matrix.

    Eigenvalues come back real and ascending.  Each eigenvector is phase-fixed
    so its first nonzero component is real positive, which makes the
    decomposition reproducible run to run.  Raises on non-Hermitian input.
    """
    h = require_hermitian(h, tol)
    w, v = np.linalg.eigh(h)
    scale = maxabs(v)
    for k in range(v.shape[1]):
        col = v[:, k]
        nz = np.flatnonzero(np.abs(col) > 1e-12 * scale)
        if nz.size:
            phase = col[nz[0]] / abs(col[nz[0]])
            v[:, k] = col / phase
    return w, v


def eig_general(m) -> tuple[np.ndarray, np.ndarray]:
    """Eigenvalues and right eigenvectors of a general square matrix.

    Contract is residual-based: ``|m v - w v| <= 1e-8 |m|`` per pair on
    well-conditioned input.
    """
    m = as_cmatrix(m)
    if m.shape[0] != m.shape[1]:
        raise ValueError(f"expected a square matrix, got {m.shape}")
    return np.linalg.eig(m)


def singular_values(x) -> np.ndarray:
    """Singular values via the eigenvalues of ``x^dag x`` clamped at zero."""
    x = as_cmatrix(x)
    w = np.linalg.eigvalsh(x.conj().T @ x)
    return np.sqrt(np.clip(w.real, 0.0, None))


def trace_norm(x) -> float:
    """Sum of singular values (Schatten 1-norm)."""
    x = as_cmatrix(x)
    if x.shape[0] != x.shape[1]:
        raise ValueError(f"trace norm expects a square matrix, got {x.shape}")
    return float(singular_values(x).sum())


def spectral_norm(x) -> float:
    """Largest singular value (operator norm)."""
    return float(singular_values(x).max())


def random_unit_vector(d: int, rng: np.random.Generator) -> np.ndarray:
    """Haar-distributed unit vector."""
    v = rng.standard_normal(d) + 1j * rng.standard_normal(d)
    return v / np.linalg.norm(v)


def random_density(d: int, rng: np.random.Generator, rank: int | None = None) -> np.ndarray:
    """Random full-rank (or rank-limited) density matrix, Wishart construction."""
    r = d if rank is None else rank
    g = rng.standard_normal((d, r)) + 1j * rng.standard_normal((d, r))
    rho = g @ g.conj().T
    return rho / np.trace(rho).real


def random_cmatrix(d: int, rng: np.random.Generator) -> np.ndarray:
    """Random dense complex matrix with entries ~ N(0,1) + i N(0,1)."""
    return rng.standard_normal((d, d)) + 1j * rng.standard_normal((d, d))
