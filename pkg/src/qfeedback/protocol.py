"""Coherent feedback protocol construction and rotating-frame machinery.

The built-in design couples a d_P-level plant to a two-level controller.
With plant basis ``{|p_0>, ..., |p_{d_P-1}>}`` (``|p_0>`` the target state)
and controller basis ``{|c_0>, |c_1>}``, the protocol at gain ``gamma`` is

    L_C      = sqrt(gamma) |c_0><c_1|                     (controller drain)
    H_int(0) = gamma * ( sum_k |p_k, c_1><p_{k+1}, c_0| + adjoint ),

a ladder that walks plant excitations down toward ``|p_0>`` while the drain
resets the controller.  ``|p_0, c_0>`` is a dark state of the whole
dissipative part, and the interaction Hamiltonian is carried along the plant
frame as ``H_int(t) = U_P(t) H_int(0) U_P(t)^dag`` with
``U_P(t) = exp(-i (H_P kron I_C) t)``.

Protocols not produced by :func:`build_design` can be assembled directly from
an interaction Hamiltonian and controller couplings; downstream certification
decides whether they actually meet the convergence hypotheses.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import liouville, qmat


def default_completion(phi0: np.ndarray) -> np.ndarray:
    """Orthonormal plant basis starting at ``phi0``.

    Gram-Schmidt over the computational kets with ``phi0`` prepended; columns
    are the basis vectors.  Deterministic, so designs are reproducible.
    """
    phi0 = np.asarray(phi0, dtype=complex)
    d = phi0.shape[0]
    nrm = np.linalg.norm(phi0)
    if abs(nrm - 1.0) > 1e-10:
        raise ValueError(f"target state must be a unit vector, norm was {nrm:.12g}")
    cols = [phi0 / nrm]
    for cand in qmat.basis_kets(d):
        v = cand.copy()
        for b in cols:
            v -= b * (b.conj() @ v)
        n = np.linalg.norm(v)
        if n > 1e-8:
            cols.append(v / n)
    if len(cols) != d:
        raise ValueError("failed to complete an orthonormal basis")
    return np.column_stack(cols)


def _check_orthonormal(basis: np.ndarray, tol: float, what: str) -> np.ndarray:
    basis = qmat.as_cmatrix(basis)
    gram = basis.conj().T @ basis
    dev = qmat.maxabs(gram - np.eye(basis.shape[1]))
    if dev > tol:
        raise ValueError(f"{what} is not orthonormal (Gram deviation {dev:.3e})")
    return basis


@dataclass(frozen=True)
class FeedbackProtocol:
    """A coherent feedback protocol on a plant-controller composite.

    ``h_int0`` lives on the composite; ``controller_couplings`` are composite
    operators of the form ``I_P kron L`` (acting nontrivially on the
    controller only).  ``plant_basis`` / ``controller_basis`` store basis
    vectors as matrix columns, the first column being the dark-state factor.
    """

    d_p: int
    d_c: int
    h_int0: np.ndarray
    controller_couplings: list[np.ndarray]
    gamma: float
    plant_basis: np.ndarray
    controller_basis: np.ndarray

    def __post_init__(self):
        if self.gamma <= 0:
            raise ValueError(f"gain must be positive, got {self.gamma}")
        n = self.d_p * self.d_c
        qmat.require_hermitian(self.h_int0, what="interaction hamiltonian")
        if self.h_int0.shape != (n, n):
            raise ValueError(f"interaction hamiltonian shape {self.h_int0.shape}, expected {(n, n)}")
        for k, op in enumerate(self.controller_couplings):
            if op.shape != (n, n):
                raise ValueError(f"coupling {k} has shape {op.shape}, expected {(n, n)}")
            if not coupling_is_controller_local(op, self.d_p, self.d_c):
                raise ValueError(f"coupling {k} does not act on the controller factor only")

    @property
    def dim(self) -> int:
        return self.d_p * self.d_c

    def feedback_generator(self) -> liouville.LindbladGenerator:
        """Feedback generator at time zero, gain included."""
        return liouville.LindbladGenerator(self.h_int0, self.controller_couplings)

    def unit_gain_generator(self) -> liouville.LindbladGenerator:
        """Feedback generator with the gain divided out (H/gamma, L/sqrt(gamma))."""
        return self.feedback_generator().scaled(1.0 / self.gamma)

    def phi0(self) -> np.ndarray:
        return self.plant_basis[:, 0]


def coupling_is_controller_local(op: np.ndarray, d_p: int, d_c: int,
                                 tol: float = 1e-12) -> bool:
    """True if ``op == I_P kron (controller block)``.

    The controller block is reconstructed by the normalized plant-side partial
    trace; locality then reduces to an exact tensor factorization check.
    """
    block = qmat.partial_trace(op, (d_p, d_c), over="plant") / d_p
    return qmat.close(op, liouville.embed_controller(block, d_p), tol)


def build_design(phi0: np.ndarray, gamma: float,
                 plant_basis: np.ndarray | None = None,
                 controller_basis: np.ndarray | None = None) -> FeedbackProtocol:
    """Construct the ladder-and-drain protocol for an arbitrary plant dimension.

    ``plant_basis`` columns must be orthonormal with the first column equal to
    ``phi0``; omitted, the deterministic completion of ``phi0`` is used.  The
    controller is two-level.
    """
    phi0 = np.asarray(phi0, dtype=complex)
    d_p = phi0.shape[0]
    if d_p < 2:
        raise ValueError(f"plant dimension must be at least 2, got {d_p}")
    if gamma <= 0:
        raise ValueError(f"gain must be positive, got {gamma}")
    if plant_basis is None:
        plant_basis = default_completion(phi0)
    else:
        plant_basis = _check_orthonormal(plant_basis, 1e-10, "plant basis")
        if plant_basis.shape != (d_p, d_p):
            raise ValueError(f"plant basis shape {plant_basis.shape}, expected {(d_p, d_p)}")
        if not qmat.close(plant_basis[:, 0], phi0, 1e-10):
            raise ValueError("first plant basis vector must equal the target state")
    if controller_basis is None:
        controller_basis = np.column_stack(qmat.basis_kets(2))
    else:
        controller_basis = _check_orthonormal(controller_basis, 1e-10, "controller basis")
        if controller_basis.shape != (2, 2):
            raise ValueError("built-in design uses a two-level controller")

    c0, c1 = controller_basis[:, 0], controller_basis[:, 1]
    drain = np.sqrt(gamma) * qmat.outer(c0, c1)
    ladder = np.zeros((2 * d_p, 2 * d_p), dtype=complex)
    for k in range(d_p - 1):
        lhs = np.kron(plant_basis[:, k], c1)
        rhs = np.kron(plant_basis[:, k + 1], c0)
        ladder += np.outer(lhs, rhs.conj())
    h_int0 = gamma * (ladder + ladder.conj().T)
    return FeedbackProtocol(
        d_p=d_p, d_c=2,
        h_int0=h_int0,
        controller_couplings=[liouville.embed_controller(drain, d_p)],
        gamma=gamma,
        plant_basis=plant_basis,
        controller_basis=controller_basis,
    )


def custom_protocol(h_int0: np.ndarray, controller_ops: list[np.ndarray],
                    d_p: int, d_c: int, gamma: float = 1.0,
                    plant_basis: np.ndarray | None = None,
                    controller_basis: np.ndarray | None = None) -> FeedbackProtocol:
    """Wrap user-supplied interaction Hamiltonian and controller couplings.

    ``controller_ops`` are given on the controller factor (d_C x d_C) and are
    embedded here.  Bases default to the computational ones.
    """
    if plant_basis is None:
        plant_basis = np.column_stack(qmat.basis_kets(d_p))
    if controller_basis is None:
        controller_basis = np.column_stack(qmat.basis_kets(d_c))
    return FeedbackProtocol(
        d_p=d_p, d_c=d_c,
        h_int0=qmat.as_cmatrix(h_int0),
        controller_couplings=[liouville.embed_controller(op, d_p) for op in controller_ops],
        gamma=gamma,
        plant_basis=plant_basis,
        controller_basis=controller_basis,
    )


class FrameMap:
    """Unitary frame generated by a static Hamiltonian.

    Caches one Hermitian eigendecomposition of ``h_frame`` and evaluates
    ``U(t) = V exp(-i w t) V^dag`` by diagonal phase multiplication, so
    per-step frame changes cost two small matrix products.
    """

    def __init__(self, h_frame: np.ndarray):
        self.h_frame = qmat.require_hermitian(h_frame, what="frame hamiltonian")
        self._w, self._v = qmat.eig_hermitian(self.h_frame)
        self._vh = self._v.conj().T

    @property
    def dim(self) -> int:
        return self.h_frame.shape[0]

    def unitary(self, t: float) -> np.ndarray:
        """``U(t) = exp(-i h_frame t)``."""
        phases = np.exp(-1j * self._w * t)
        return (self._v * phases) @ self._vh

    def conjugate(self, x: np.ndarray, t: float, direction: str = "forward") -> np.ndarray:
        """Frame change of a matrix: forward ``U x U^dag``, inverse ``U^dag x U``."""
        u = self.unitary(t)
        if direction == "forward":
            return u @ x @ u.conj().T
        if direction == "inverse":
            return u.conj().T @ x @ u
        raise ValueError(f"unknown direction {direction!r}")


def composite_frame(h_plant: np.ndarray, d_c: int) -> FrameMap:
    """Frame of the plant Hamiltonian embedded on the composite."""
    return FrameMap(liouville.embed_plant(h_plant, d_c))


def h_int_at(p: FeedbackProtocol, f: FrameMap, t: float) -> np.ndarray:
    """Interaction Hamiltonian carried to time ``t`` by the plant frame."""
    u = f.unitary(t)
    return u @ p.h_int0 @ u.conj().T


def steady_candidate(p: FeedbackProtocol) -> np.ndarray:
    """Dark product state ``|p_0><p_0| kron |c_0><c_0|`` of the design."""
    return np.kron(qmat.proj(p.plant_basis[:, 0]), qmat.proj(p.controller_basis[:, 0]))
