"""Spectral certification of feedback protocols.

Certifies the convergence hypotheses of a protocol numerically: steady-state
kernel of the feedback generator, uniqueness within the density set, the
stability (Hurwitz) property of the generator restricted to the traceless
subspace, a constructive decay envelope ``|exp(R t)| <= K exp(-alpha t)``,
and a sandwich estimate of the noise superoperator norm induced by the trace
norm.  The assembled certificate carries the asymptotic error bound

    bound_value = K * |noise|_upper / (gamma * alpha),

with the gain divided out of the feedback generator before (K, alpha) are
computed, so they do not depend on gamma.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import scipy.linalg

from . import liouville, qmat
from .liouville import LindbladGenerator
from .protocol import FeedbackProtocol

DEFAULT_SEED = 945731
DEFAULT_KERNEL_RTOL = 1e-10


class NotHurwitzError(ValueError):
    """The restricted generator has spectrum touching the closed right half-plane."""


class CertificationError(RuntimeError):
    """Protocol failed certification; carries the partial certificate."""

    def __init__(self, message: str, certificate: "SpectralCertificate"):
        super().__init__(message)
        self.certificate = certificate


@dataclass
class TracelessRestriction:
    """A superoperator restricted to the trace-zero subspace.

    ``matrix`` is the restriction in a Hilbert-Schmidt-orthonormal Hermitian
    basis.  ``basis``/``op_dim`` tie the coordinates back to actual operators;
    synthetic restrictions used in closed-form tests may omit them, in which
    case norm estimates fall back to the coordinate spectral norm.
    """

    dim: int
    matrix: np.ndarray
    basis: np.ndarray | None = None   # stacked (dim, d, d) Hermitian matrices
    op_dim: int | None = None


def traceless_basis(d: int) -> np.ndarray:
    """Hilbert-Schmidt-orthonormal Hermitian basis of the traceless subspace.

    Generalized Gell-Mann construction: symmetric and antisymmetric
    off-diagonal pairs followed by diagonal ladder elements; d^2 - 1 matrices
    stacked along the first axis.  For d = 2 this is the Pauli set over
    sqrt(2).
    """
    mats = []
    for j in range(d):
        for k in range(j + 1, d):
            m = np.zeros((d, d), dtype=complex)
            m[j, k] = m[k, j] = 1.0 / math.sqrt(2.0)
            mats.append(m)
            m = np.zeros((d, d), dtype=complex)
            m[j, k] = -1j / math.sqrt(2.0)
            m[k, j] = 1j / math.sqrt(2.0)
            mats.append(m)
    for l in range(1, d):
        m = np.zeros((d, d), dtype=complex)
        for i in range(l):
            m[i, i] = 1.0
        m[l, l] = -l
        mats.append(m / math.sqrt(l * (l + 1)))
    return np.array(mats)


def restrict_traceless(g: LindbladGenerator) -> TracelessRestriction:
    """Restriction of a generator to the traceless subspace.

    Entry ``R[i, j]`` is the Hilbert-Schmidt pairing of basis element ``i``
    with the generator applied to element ``j``.  The matrix is real for
    Hermiticity-preserving generators and is stored real when the imaginary
    residue is negligible.
    """
    d = g.dim
    basis = traceless_basis(d)
    n = basis.shape[0]
    r = np.empty((n, n), dtype=complex)
    bconj = basis.conj()
    for j in range(n):
        lb = g.apply(basis[j])
        r[:, j] = np.einsum("ijk,jk->i", bconj, lb)
    if qmat.maxabs(r.imag) <= 1e-12 * max(qmat.maxabs(r.real), 1.0):
        r = r.real.copy()
    return TracelessRestriction(dim=n, matrix=r, basis=basis, op_dim=d)


def kernel(g: LindbladGenerator, rank_rtol: float = DEFAULT_KERNEL_RTOL
           ) -> tuple[int, list[np.ndarray]]:
    """Numerical null space of the vectorized generator.

    Singular values below ``rank_rtol`` times the largest count as zero.
    Basis matrices are Hermitized and rescaled to unit trace when that is
    possible without destroying them, so a one-dimensional kernel comes back
    as the steady state itself.
    """
    m = g.vectorized()
    u, sv, vh = np.linalg.svd(m)
    smax = sv[0] if sv.size else 0.0
    if smax == 0.0:
        null_idx = list(range(m.shape[0]))
    else:
        null_idx = [i for i in range(sv.size) if sv[i] < rank_rtol * smax]
    basis = []
    for i in null_idx:
        b = liouville.unvec(vh[i].conj(), g.dim)
        bh = qmat.hermitize(b)
        if np.linalg.norm(bh) > 1e-8 * np.linalg.norm(b):
            b = bh
        tr = complex(np.trace(b))
        if abs(tr) > 1e-8 * np.linalg.norm(b):
            b = b / tr
        else:
            b = b / np.linalg.norm(b)
        basis.append(b)
    return len(null_idx), basis


def unique_density_steady(g: LindbladGenerator,
                          rank_rtol: float = DEFAULT_KERNEL_RTOL,
                          psd_tol: float = 1e-8,
                          spectral_tol: float = 1e-9
                          ) -> tuple[bool, np.ndarray | None]:
    """Decide whether the generator has a unique attracting steady state.

    Requires: one-dimensional kernel, a kernel element that rescales to a
    valid density matrix, and a restricted spectrum strictly inside the open
    left half-plane (no purely imaginary eigenvalues).
    """
    dim_k, basis = kernel(g, rank_rtol)
    if dim_k != 1:
        return False, None
    rho = basis[0]
    if abs(np.trace(rho) - 1.0) > 1e-8:
        return False, None
    lo = float(np.linalg.eigvalsh(qmat.hermitize(rho)).min())
    if lo < -psd_tol:
        return False, None
    r = restrict_traceless(g)
    lam = np.linalg.eigvals(r.matrix)
    scale = max(1.0, float(np.abs(lam).max()))
    if lam.real.max() >= -spectral_tol * scale:
        return False, None
    return True, qmat.hermitize(rho)


# ---------------------------------------------------------------------------
# Induced trace-norm estimation
# ---------------------------------------------------------------------------

def _batched_polar(y: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Polar unitary factors and trace norms of a stack of matrices."""
    w, s, qh = np.linalg.svd(y)
    return w @ qh, s.sum(axis=-1)


def _make_superop(s):
    """Normalize the three accepted superoperator forms to batched callables.

    Returns (apply, adjoint, d, orthogonal_probes, upper_bound) where apply
    and adjoint act on stacks (b, d, d) of matrices and the adjoint is with
    respect to the Hilbert-Schmidt inner product.
    """
    if isinstance(s, LindbladGenerator):
        d = s.dim
        h = s.hamiltonian
        ops = s.couplings
        ldl = [op.conj().T @ op for op in ops]

        def apply(x):
            out = np.zeros_like(x)
            if h is not None:
                out += -1j * (h @ x - x @ h)
            for op, q in zip(ops, ldl):
                out += op @ x @ op.conj().T - 0.5 * (q @ x + x @ q)
            return out

        def adjoint(z):
            out = np.zeros_like(z)
            if h is not None:
                out += 1j * (h @ z - z @ h)
            for op, q in zip(ops, ldl):
                out += op.conj().T @ z @ op - 0.5 * (q @ z + z @ q)
            return out

        upper = 2.0 * sum(qmat.spectral_norm(op) ** 2 for op in ops)
        if h is not None:
            upper += 2.0 * qmat.spectral_norm(h)
        return apply, adjoint, d, False, upper

    if isinstance(s, TracelessRestriction):
        if s.basis is None or s.op_dim is None:
            raise ValueError("restriction has no operator basis attached")
        basis = s.basis
        bconj = basis.conj()
        r = s.matrix
        d = s.op_dim

        def apply(x):
            c = np.einsum("ijk,bjk->bi", bconj, x, optimize=True)
            return np.einsum("bi,ijk->bjk", c @ r.T, basis, optimize=True)

        def adjoint(z):
            c = np.einsum("ijk,bjk->bi", bconj, z, optimize=True)
            return np.einsum("bi,ijk->bjk", c @ r.conj(), basis, optimize=True)

        upper = d * float(np.linalg.norm(r, 2))
        return apply, adjoint, d, True, upper

    m = qmat.as_cmatrix(s)
    n2 = m.shape[0]
    d = int(round(math.sqrt(n2)))
    if d * d != n2 or m.shape[1] != n2:
        raise ValueError(f"superoperator matrix must be d^2 x d^2, got {m.shape}")

    def to_vec(x):       # column stacking, batched
        return x.transpose(0, 2, 1).reshape(x.shape[0], n2)

    def from_vec(v):
        return v.reshape(v.shape[0], d, d).transpose(0, 2, 1)

    def apply(x):
        return from_vec(to_vec(x) @ m.T)

    def adjoint(z):
        return from_vec(to_vec(z) @ m.conj())

    upper = d * float(np.linalg.norm(m, 2))
    return apply, adjoint, d, False, upper


def _normalize_rows(v: np.ndarray) -> np.ndarray:
    n = np.linalg.norm(v, axis=1, keepdims=True)
    n[n < 1e-300] = 1.0
    return v / n


def _rank_one_max(apply, adjoint, d: int, orthogonal: bool,
                  restarts: int, seed: int, iters: int) -> float:
    """Alternating maximization of ``|S(u v^dag)|_1`` over unit probes.

    Rank-one probes are extreme points of the trace-norm unit ball; with
    ``orthogonal`` they are constrained to u perpendicular to v so every probe
    is traceless.  The whole restart batch is iterated simultaneously.
    """
    rng = np.random.default_rng(seed)
    u = _normalize_rows(rng.standard_normal((restarts, d)) + 1j * rng.standard_normal((restarts, d)))
    v = rng.standard_normal((restarts, d)) + 1j * rng.standard_normal((restarts, d))
    if orthogonal:
        v = v - u * np.einsum("bi,bi->b", u.conj(), v)[:, None]
    v = _normalize_rows(v)
    best = 0.0
    for _ in range(iters):
        x = u[:, :, None] * v.conj()[:, None, :]
        z, f = _batched_polar(apply(x))
        new_best = float(f.max())
        g = adjoint(z)
        u = _normalize_rows(np.einsum("bij,bj->bi", g, v))
        v_new = np.einsum("bji,bj->bi", g.conj(), u)
        if orthogonal:
            v_new = v_new - u * np.einsum("bi,bi->b", u.conj(), v_new)[:, None]
        v = _normalize_rows(v_new)
        if new_best <= best * (1.0 + 1e-10):
            best = max(best, new_best)
            break
        best = new_best
    x = u[:, :, None] * v.conj()[:, None, :]
    _, f = _batched_polar(apply(x))
    return max(best, float(f.max()))


def induced_trace_norm_estimate(s, restarts: int = 32, seed: int = DEFAULT_SEED,
                                iters: int = 60) -> tuple[float, float]:
    """Sandwich estimate of the superoperator norm induced by the trace norm.

    ``s`` may be a structured generator, a vectorized superoperator matrix
    (column stacking), or a traceless restriction.  The lower value is the
    best rank-one probe found by deterministic multi-restart alternating
    maximization; the upper value is an analytic bound (term-wise triangle
    inequality for structured generators, Hilbert-Schmidt conversion
    otherwise).
    """
    apply, adjoint, d, orthogonal, upper = _make_superop(s)
    if upper == 0.0:
        return 0.0, 0.0
    lower = _rank_one_max(apply, adjoint, d, orthogonal, restarts, seed, iters)
    return lower, upper


def restriction_norm_estimate(r: TracelessRestriction, propagator: np.ndarray,
                              restarts: int = 16, seed: int = DEFAULT_SEED,
                              iters: int = 60) -> float:
    """Norm estimate of ``exp(R t)`` given as its coordinate matrix.

    With an operator basis attached this is the rank-one traceless probe
    estimate of the induced trace norm; synthetic restrictions fall back to
    the coordinate spectral norm.
    """
    if r.basis is None or r.op_dim is None:
        return float(np.linalg.norm(propagator, 2))
    lifted = TracelessRestriction(dim=r.dim, matrix=propagator,
                                  basis=r.basis, op_dim=r.op_dim)
    apply, adjoint, d, orthogonal, _ = _make_superop(lifted)
    return _rank_one_max(apply, adjoint, d, orthogonal, restarts, seed, iters)


def decay_pair(r: TracelessRestriction, time_grid,
               eps_alpha: float = 1e-6, slack: float = 1.05,
               restarts: int = 16, seed: int = DEFAULT_SEED) -> tuple[float, float]:
    """Constructive decay envelope for a Hurwitz restriction.

    ``alpha`` is the negated spectral abscissa minus a safety margin;
    ``K`` is the grid maximum of the norm estimate of ``exp(R t)`` times
    ``exp(alpha t)``, inflated by the declared slack, so the envelope holds at
    every grid point by construction.
    """
    lam = np.linalg.eigvals(r.matrix)
    abscissa = float(lam.real.max())
    if abscissa >= 0.0:
        raise NotHurwitzError(f"restriction is not Hurwitz (abscissa {abscissa:.3e})")
    alpha = -abscissa - eps_alpha
    if alpha <= 0.0:
        raise NotHurwitzError(
            f"safety margin {eps_alpha:g} exceeds the stability margin {-abscissa:.3e}")
    peak = 0.0
    for t in np.asarray(time_grid, dtype=float):
        if t < 0:
            raise ValueError("time grid must be nonnegative")
        est = restriction_norm_estimate(r, scipy.linalg.expm(r.matrix * t),
                                        restarts=restarts, seed=seed)
        peak = max(peak, est * math.exp(alpha * t))
    return slack * peak, alpha


@dataclass
class SpectralCertificate:
    """Certified quantities entering the asymptotic error bound."""

    kernel_dim: int
    steady_state: np.ndarray | None
    abscissa_alpha: float
    prefactor_K: float
    is_unique_density_steady: bool
    noise_norm_estimate: float
    noise_norm_upper: float
    gamma: float
    bound_value: float

    def to_report(self) -> str:
        """Key-value text report, one field per line."""
        lines = [
            f"kernel_dim: {self.kernel_dim}",
            f"is_unique_density_steady: {str(self.is_unique_density_steady).lower()}",
            f"abscissa_alpha: {self.abscissa_alpha:.17g}",
            f"prefactor_K: {self.prefactor_K:.17g}",
            f"noise_norm_estimate: {self.noise_norm_estimate:.17g}",
            f"noise_norm_upper: {self.noise_norm_upper:.17g}",
            f"gamma: {self.gamma:.17g}",
            f"bound_value: {self.bound_value:.17g}",
        ]
        return "\n".join(lines) + "\n"


def certify(p: FeedbackProtocol, noise: LindbladGenerator | None,
            time_grid=None, restarts: int = 32, seed: int = DEFAULT_SEED,
            eps_alpha: float = 1e-6, slack: float = 1.05,
            strict: bool = True) -> SpectralCertificate:
    """Assemble the spectral certificate for a protocol and a noise generator.

    The feedback generator is reduced to unit gain first, so the certified
    (K, alpha) pair is gain-independent and the bound scales exactly as
    1/gamma.  With ``strict`` (default) a protocol whose steady state is not
    unique raises :class:`CertificationError` carrying the partial
    certificate; pass ``strict=False`` to get the partial certificate back.
    """
    gu = p.unit_gain_generator()
    dim_k, _ = kernel(gu)
    unique, steady = unique_density_steady(gu)
    if noise is None:
        noise_lo, noise_up = 0.0, 0.0
    else:
        noise_lo, noise_up = induced_trace_norm_estimate(noise, restarts=restarts, seed=seed)
    if unique:
        r = restrict_traceless(gu)
        grid = np.linspace(0.0, 20.0, 200) if time_grid is None else time_grid
        k_pref, alpha = decay_pair(r, grid, eps_alpha=eps_alpha, slack=slack,
                                   restarts=max(8, restarts // 2), seed=seed)
        bound = k_pref * noise_up / (p.gamma * alpha)
        return SpectralCertificate(
            kernel_dim=dim_k, steady_state=steady,
            abscissa_alpha=alpha, prefactor_K=k_pref,
            is_unique_density_steady=True,
            noise_norm_estimate=noise_lo, noise_norm_upper=noise_up,
            gamma=p.gamma, bound_value=bound)
    r = restrict_traceless(gu)
    lam = np.linalg.eigvals(r.matrix)
    partial = SpectralCertificate(
        kernel_dim=dim_k, steady_state=steady,
        abscissa_alpha=-float(lam.real.max()) - eps_alpha, prefactor_K=float("nan"),
        is_unique_density_steady=False,
        noise_norm_estimate=noise_lo, noise_norm_upper=noise_up,
        gamma=p.gamma, bound_value=float("nan"))
    if strict:
        raise CertificationError(
            f"steady state is not unique (kernel dimension {dim_k})", partial)
    return partial
