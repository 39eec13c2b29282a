"""Structured Lindblad generators and their vectorized superoperator form.

A generator holds a Hamiltonian ``H`` and coupling operators ``L_k`` and acts
on a matrix ``X`` as

    apply(X) = -i [H, X] + sum_k ( L_k X L_k^dag
                                   - 1/2 L_k^dag L_k X - 1/2 X L_k^dag L_k ).

Vectorization uses COLUMN stacking, ``vec(A X B) = (B^T kron A) vec(X)``, so

    matrix = -i (I kron H - H^T kron I)
             + sum_k [ conj(L_k) kron L_k
                       - 1/2 I kron (L_k^dag L_k) - 1/2 (L_k^dag L_k)^T kron I ].

Generators are immutable after construction; the vectorized matrix is cached
lazily (idempotent assignment, safe to share across threads).
"""

from __future__ import annotations

import numpy as np
import scipy.linalg

from . import qmat


def vec(x: np.ndarray) -> np.ndarray:
    """Column-stacking vectorization."""
    return np.asarray(x, dtype=complex).reshape(-1, order="F")


def unvec(v: np.ndarray, d: int) -> np.ndarray:
    """Inverse of :func:`vec` for a d x d matrix."""
    return np.asarray(v, dtype=complex).reshape((d, d), order="F")


class LindbladGenerator:
    """Generator built from a Hamiltonian and a list of coupling operators.

    ``hamiltonian`` may be None (purely dissipative).  All operators must be
    square with a common dimension.
    """

    def __init__(self, hamiltonian: np.ndarray | None, couplings: list[np.ndarray],
                 dim: int | None = None):
        ops = list(couplings)
        if hamiltonian is None and not ops and dim is None:
            raise ValueError("cannot infer dimension of an empty generator; pass dim")
        if hamiltonian is not None:
            hamiltonian = qmat.require_hermitian(hamiltonian, what="hamiltonian")
            d = hamiltonian.shape[0]
        elif ops:
            d = qmat.as_cmatrix(ops[0]).shape[0]
        else:
            d = dim
        if dim is not None and dim != d:
            raise ValueError(f"declared dim {dim} does not match operators ({d})")
        self.dim = d
        self.hamiltonian = None if hamiltonian is None else hamiltonian.copy()
        self.couplings = []
        for k, op in enumerate(ops):
            op = qmat.as_cmatrix(op)
            if op.shape != (d, d):
                raise ValueError(f"coupling {k} has shape {op.shape}, expected {(d, d)}")
            self.couplings.append(op.copy())
        # precomputed per-coupling L^dag L, reused on every apply
        self._ldl = [op.conj().T @ op for op in self.couplings]
        self._vectorized: np.ndarray | None = None

    def apply(self, x: np.ndarray) -> np.ndarray:
        """Action of the generator on a matrix."""
        x = np.asarray(x, dtype=complex)
        out = np.zeros_like(x)
        if self.hamiltonian is not None:
            h = self.hamiltonian
            out += -1j * (h @ x - x @ h)
        for op, ldl in zip(self.couplings, self._ldl):
            out += op @ x @ op.conj().T - 0.5 * (ldl @ x + x @ ldl)
        return out

    def vectorized(self) -> np.ndarray:
        """Cached d^2 x d^2 matrix acting on column-stacked vec(X)."""
        if self._vectorized is None:
            d = self.dim
            eye = np.eye(d, dtype=complex)
            m = np.zeros((d * d, d * d), dtype=complex)
            if self.hamiltonian is not None:
                h = self.hamiltonian
                m += -1j * (np.kron(eye, h) - np.kron(h.T, eye))
            for op, ldl in zip(self.couplings, self._ldl):
                m += np.kron(op.conj(), op)
                m -= 0.5 * (np.kron(eye, ldl) + np.kron(ldl.T, eye))
            self._vectorized = m
        return self._vectorized

    def scaled(self, gamma: float) -> "LindbladGenerator":
        """Gain-scaled copy: H -> gamma H, L_k -> sqrt(gamma) L_k."""
        if gamma <= 0:
            raise ValueError(f"gain must be positive, got {gamma}")
        h = None if self.hamiltonian is None else gamma * self.hamiltonian
        root = np.sqrt(gamma)
        return LindbladGenerator(h, [root * op for op in self.couplings], dim=self.dim)

    def __add__(self, other: "LindbladGenerator") -> "LindbladGenerator":
        if not isinstance(other, LindbladGenerator):
            return NotImplemented
        if self.dim != other.dim:
            raise ValueError(f"dimension mismatch: {self.dim} vs {other.dim}")
        if self.hamiltonian is None:
            h = other.hamiltonian
        elif other.hamiltonian is None:
            h = self.hamiltonian
        else:
            h = self.hamiltonian + other.hamiltonian
        return LindbladGenerator(h, self.couplings + other.couplings, dim=self.dim)


def make_generator(hamiltonian: np.ndarray | None, couplings: list[np.ndarray],
                   dim: int | None = None) -> LindbladGenerator:
    """Construct a generator; omitted Hamiltonian means zero."""
    return LindbladGenerator(hamiltonian, couplings, dim=dim)


def zero_generator(dim: int) -> LindbladGenerator:
    return LindbladGenerator(None, [], dim=dim)


def vectorize(g: LindbladGenerator) -> np.ndarray:
    """Vectorized superoperator matrix of a generator (column stacking)."""
    return g.vectorized()


def gen_scale(g: LindbladGenerator, gamma: float) -> LindbladGenerator:
    """Scale a generator by a positive gain; apply becomes gamma times the original."""
    return g.scaled(gamma)


def gen_add(a: LindbladGenerator, b: LindbladGenerator) -> LindbladGenerator:
    """Sum of two generators: Hamiltonians add, coupling lists concatenate."""
    return a + b


def embed_plant(op: np.ndarray, d_c: int) -> np.ndarray:
    """Plant operator on the composite: ``op kron I_C``."""
    op = qmat.as_cmatrix(op)
    if op.shape[0] != op.shape[1]:
        raise ValueError(f"expected a square operator, got {op.shape}")
    return np.kron(op, np.eye(d_c, dtype=complex))


def embed_controller(op: np.ndarray, d_p: int) -> np.ndarray:
    """Controller operator on the composite: ``I_P kron op``."""
    op = qmat.as_cmatrix(op)
    if op.shape[0] != op.shape[1]:
        raise ValueError(f"expected a square operator, got {op.shape}")
    return np.kron(np.eye(d_p, dtype=complex), op)


def semigroup_step(g, t: float) -> np.ndarray:
    """Propagator ``exp(matrix * t)`` of a generator or vectorized matrix."""
    if t < 0:
        raise ValueError(f"semigroup step requires t >= 0, got {t}")
    m = g.vectorized() if isinstance(g, LindbladGenerator) else qmat.as_cmatrix(g)
    return scipy.linalg.expm(m * t)
