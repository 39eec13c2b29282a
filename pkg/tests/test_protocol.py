import numpy as np
import pytest

from qfeedback import liouville, propagate, protocol, qmat


@pytest.fixture(scope="module")
def design():
    return protocol.build_design(qmat.ket(0, 4), 5.0)


@pytest.fixture(scope="module")
def frame():
    h_plant = np.kron(qmat.sigma_x, qmat.sigma_x)
    return protocol.composite_frame(h_plant, 2)


def _chain_matrix(d):
    m = np.zeros((d, d), dtype=complex)
    for k in range(1, d):
        m[k, k - 1] = 1.0
    return m


def test_build_design_matches_explicit_two_qubit_form(design):
    # the d_P = 4 ladder written out directly in the computational bases
    a = _chain_matrix(4)
    up = qmat.outer(qmat.ket(1, 2), qmat.ket(0, 2))
    down = qmat.outer(qmat.ket(0, 2), qmat.ket(1, 2))
    expected = 5.0 * (np.kron(a, up) + np.kron(a.conj().T, down))
    assert qmat.maxabs(design.h_int0 - expected) <= 1e-12
    expected_l = np.sqrt(5.0) * np.kron(np.eye(4), down)
    assert qmat.maxabs(design.controller_couplings[0] - expected_l) <= 1e-12


def test_build_design_dark_state_identities(design):
    dark = np.kron(qmat.ket(0, 4), qmat.ket(0, 2))
    coupling = design.controller_couplings[0]
    assert np.linalg.norm(coupling @ dark) <= 1e-12
    op = -1j * design.h_int0 - 0.5 * coupling.conj().T @ coupling
    assert np.linalg.norm(op @ dark) <= 1e-12


def test_build_design_minimal_plant():
    p = protocol.build_design(qmat.ket(0, 2), 1.0)
    lhs = np.kron(qmat.ket(0, 2), qmat.ket(1, 2))
    rhs = np.kron(qmat.ket(1, 2), qmat.ket(0, 2))
    expected = np.outer(lhs, rhs.conj())
    expected = expected + expected.conj().T
    assert qmat.maxabs(p.h_int0 - expected) <= 1e-12
    assert qmat.is_hermitian(p.h_int0)


def test_build_design_validation():
    with pytest.raises(ValueError):
        protocol.build_design(np.array([1.0 + 0j]), 1.0)   # plant too small
    with pytest.raises(ValueError):
        protocol.build_design(qmat.ket(0, 4), 0.0)          # gain must be positive
    bad_basis = np.eye(4, dtype=complex)
    bad_basis[0, 0] = 2.0
    with pytest.raises(ValueError, match="orthonormal"):
        protocol.build_design(qmat.ket(0, 4), 1.0, plant_basis=bad_basis)
    with pytest.raises(ValueError, match="first plant basis"):
        protocol.build_design(qmat.ket(1, 4), 1.0,
                              plant_basis=np.column_stack(qmat.basis_kets(4)))


def test_default_completion_is_orthonormal():
    rng = np.random.default_rng(51)
    phi0 = qmat.random_unit_vector(5, rng)
    basis = protocol.default_completion(phi0)
    assert qmat.maxabs(basis.conj().T @ basis - np.eye(5)) <= 1e-10
    assert qmat.maxabs(basis[:, 0] - phi0) <= 1e-12


def test_h_int_at(design, frame):
    assert qmat.maxabs(protocol.h_int_at(design, frame, 0.0) - design.h_int0) <= 1e-14
    ht = protocol.h_int_at(design, frame, 0.7)
    assert qmat.is_hermitian(ht, 1e-10)
    w0, _ = qmat.eig_hermitian(design.h_int0)
    wt, _ = qmat.eig_hermitian(ht)
    assert np.max(np.abs(w0 - wt)) <= 1e-9


def test_h_int_at_identity_frame(design):
    f = protocol.composite_frame(np.eye(4, dtype=complex), 2)
    for t in (0.0, 0.5, 2.0):
        assert qmat.maxabs(protocol.h_int_at(design, f, t) - design.h_int0) <= 1e-12


def test_frame_conjugate_roundtrip_and_isometry(frame):
    rng = np.random.default_rng(52)
    x = qmat.random_cmatrix(8, rng)
    assert qmat.maxabs(frame.conjugate(x, 0.0) - x) <= 1e-14
    fwd = frame.conjugate(x, 1.3, "forward")
    back = frame.conjugate(fwd, 1.3, "inverse")
    assert qmat.maxabs(back - x) <= 1e-12
    assert abs(qmat.trace_norm(fwd) - qmat.trace_norm(x)) <= 1e-10


def test_frame_unitarity_and_group_property(frame):
    for t in (0.0, 0.4, 2.7):
        u = frame.unitary(t)
        assert qmat.maxabs(u @ u.conj().T - np.eye(8)) <= 1e-10
    s, t = 0.6, 1.9
    assert qmat.maxabs(frame.unitary(s + t) - frame.unitary(s) @ frame.unitary(t)) <= 1e-10


def test_steady_candidate(design):
    sigma = protocol.steady_candidate(design)
    assert abs(np.trace(sigma) - 1.0) <= 1e-12
    assert abs(np.trace(sigma @ sigma) - 1.0) <= 1e-12
    expected = qmat.proj(np.kron(qmat.ket(0, 4), qmat.ket(0, 2)))
    assert qmat.maxabs(sigma - expected) <= 1e-14
    g = design.feedback_generator()
    assert qmat.trace_norm(g.apply(sigma)) <= 1e-12


def test_coupling_locality(design):
    rng = np.random.default_rng(53)
    coupling = design.controller_couplings[0]
    for _ in range(20):
        a = liouville.embed_plant(qmat.random_cmatrix(4, rng), 2)
        assert qmat.maxabs(coupling @ a - a @ coupling) <= 1e-12
    assert protocol.coupling_is_controller_local(coupling, 4, 2)
    not_local = np.kron(qmat.random_cmatrix(4, rng), np.eye(2))
    assert not protocol.coupling_is_controller_local(not_local + coupling, 4, 2)


def test_custom_protocol_accepts_degenerate_designs():
    p = protocol.custom_protocol(np.zeros((8, 8)), [np.zeros((2, 2))], 4, 2, gamma=2.0)
    assert p.dim == 8
    assert qmat.maxabs(p.controller_couplings[0]) == 0.0


def test_rotating_frame_equivalence(design, frame):
    # the frame-transformed trajectory of the driven system obeys the
    # autonomous feedback equation; both sides integrated independently
    h_plant = np.kron(qmat.sigma_x, qmat.sigma_x)
    eq = propagate.MasterEquation(h_plant, 2, feedback=design)
    rng = np.random.default_rng(54)
    sigma0 = qmat.random_density(8, rng)
    times = np.array([0.5, 1.0, 2.0])
    traj = propagate.integrate(eq, sigma0, (0.0, 2.0), None, times, rtol=1e-10, atol=1e-12)
    fb_vec = design.feedback_generator().vectorized()
    for t, sigma_t in zip(traj.times, traj.states):
        theta = frame.conjugate(sigma_t, t, "inverse")
        expected = liouville.unvec(
            liouville.semigroup_step(fb_vec, t) @ liouville.vec(sigma0), 8)
        assert qmat.maxabs(theta - expected) <= 1e-7


def test_propagator_identity(design, frame):
    # integrated transition matrix of the driven flow matches the analytic
    # frame-exponential-frame composition
    h_plant = np.kron(qmat.sigma_x, qmat.sigma_x)
    eq = propagate.MasterEquation(h_plant, 2, feedback=design)
    fb_vec = design.feedback_generator().vectorized()

    def f_mat(t, yflat):
        g = yflat.reshape(64, 64)
        return (eq.vectorized_at(t) @ g).reshape(-1)

    for s, t in ((0.0, 1.0), (0.5, 2.0)):
        stats = {"steps": 0, "rejected": 0, "nfev": 0}
        y, _ = propagate._integrate_segment(
            f_mat, s, t, np.eye(64, dtype=complex).reshape(-1),
            np.array([t]), 1e-9, 1e-11, stats, lambda tt, yy: yy)
        integrated = y.reshape(64, 64)
        us = frame.unitary(s)
        ut = frame.unitary(t)
        analytic = (np.kron(ut.conj(), ut)
                    @ liouville.semigroup_step(fb_vec, t - s)
                    @ np.kron(us.conj(), us).conj().T)
        assert qmat.maxabs(integrated - analytic) <= 1e-7


def test_invariance_under_perfect_conditions(design):
    h_plant = np.kron(qmat.sigma_x, qmat.sigma_x)
    eq = propagate.MasterEquation(h_plant, 2, feedback=design)
    sigma0 = protocol.steady_candidate(design)
    traj = propagate.integrate(eq, sigma0, (0.0, 5.0), None, np.linspace(0, 5, 200))
    propagate.error_signal(traj, h_plant, qmat.ket(0, 4))
    assert traj.errors.max() < 1e-8
