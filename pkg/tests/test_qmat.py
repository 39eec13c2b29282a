import numpy as np
import pytest

from qfeedback import qmat


def test_ket_convention_pinned():
    # single-qubit kets: |0> = (0,1)^T, |1> = (1,0)^T
    assert np.array_equal(qmat.ket(0, 2), np.array([0, 1], dtype=complex))
    assert np.array_equal(qmat.ket(1, 2), np.array([1, 0], dtype=complex))
    # labels compose under kron: |0>|0> -> label 0 of dim 4, |0>|1> -> label 1
    assert np.array_equal(np.kron(qmat.ket(0, 2), qmat.ket(0, 2)), qmat.ket(0, 4))
    assert np.array_equal(np.kron(qmat.ket(0, 2), qmat.ket(1, 2)), qmat.ket(1, 4))
    assert np.array_equal(np.kron(qmat.ket(1, 2), qmat.ket(1, 2)), qmat.ket(3, 4))
    with pytest.raises(ValueError):
        qmat.ket(4, 4)


def test_kron_identity_case():
    assert qmat.close(qmat.kron(np.eye(2), np.eye(2)), np.eye(4), 0.0)


def test_kron_pauli_antidiagonal():
    xx = qmat.kron(qmat.sigma_x, qmat.sigma_x)
    assert qmat.close(xx, np.fliplr(np.eye(4)), 0.0)


def test_kron_mixed_product_oracle():
    rng = np.random.default_rng(11)
    for _ in range(100):
        a, b, c, d = (qmat.random_cmatrix(2, rng) for _ in range(4))
        lhs = qmat.kron(a, b) @ qmat.kron(c, d)
        rhs = qmat.kron(a @ c, b @ d)
        assert qmat.maxabs(lhs - rhs) <= 1e-12


def _partial_trace_loops(x, d_p, d_c, over):
    """Index-summation oracle, independent of the reshape implementation."""
    if over == "controller":
        out = np.zeros((d_p, d_p), dtype=complex)
        for i in range(d_p):
            for j in range(d_p):
                for k in range(d_c):
                    out[i, j] += x[i * d_c + k, j * d_c + k]
    else:
        out = np.zeros((d_c, d_c), dtype=complex)
        for i in range(d_c):
            for j in range(d_c):
                for k in range(d_p):
                    out[i, j] += x[k * d_c + i, k * d_c + j]
    return out


def test_partial_trace_product_state():
    rng = np.random.default_rng(12)
    a = qmat.random_cmatrix(4, rng)
    b = qmat.random_cmatrix(2, rng)
    got = qmat.partial_trace(qmat.kron(a, b), (4, 2), over="controller")
    assert qmat.maxabs(got - np.trace(b) * a) <= 1e-12
    got_p = qmat.partial_trace(qmat.kron(a, b), (4, 2), over="plant")
    assert qmat.maxabs(got_p - np.trace(a) * b) <= 1e-12


def test_partial_trace_maximally_mixed():
    got = qmat.partial_trace(np.eye(8) / 8, (4, 2), over="controller")
    assert qmat.maxabs(got - np.eye(4) / 4) <= 1e-14


def test_partial_trace_bell_state_oracle():
    # (|0,0> + |1,1>)(<0,0| + <1,1|) / 2 on C2 x C2 reduces to I/2
    v = (np.kron(qmat.ket(0, 2), qmat.ket(0, 2))
         + np.kron(qmat.ket(1, 2), qmat.ket(1, 2))) / np.sqrt(2)
    rho = qmat.proj(v)
    expected = _partial_trace_loops(rho, 2, 2, "controller")
    got = qmat.partial_trace(rho, (2, 2), over="controller")
    assert qmat.maxabs(got - expected) <= 1e-14
    assert qmat.maxabs(got - np.eye(2) / 2) <= 1e-14


def test_partial_trace_agrees_with_loop_oracle():
    rng = np.random.default_rng(13)
    for _ in range(20):
        x = qmat.random_cmatrix(8, rng)
        for over in ("controller", "plant"):
            assert qmat.maxabs(qmat.partial_trace(x, (4, 2), over)
                               - _partial_trace_loops(x, 4, 2, over)) <= 1e-12


def test_partial_trace_preserves_trace_and_positivity():
    rng = np.random.default_rng(14)
    for _ in range(100):
        rho = qmat.random_density(8, rng)
        red = qmat.partial_trace(rho, (4, 2), over="controller")
        assert abs(np.trace(red) - np.trace(rho)) <= 1e-12
        assert np.linalg.eigvalsh(qmat.hermitize(red)).min() >= -1e-10


def test_partial_trace_trace_norm_contraction():
    rng = np.random.default_rng(15)
    for _ in range(100):
        x = qmat.random_cmatrix(8, rng)
        assert (qmat.trace_norm(qmat.partial_trace(x, (4, 2), "controller"))
                <= qmat.trace_norm(x) + 1e-10)


def test_partial_trace_dimension_mismatch():
    with pytest.raises(ValueError):
        qmat.partial_trace(np.eye(6), (4, 2), over="controller")


def test_expm_zero_and_pauli_rotation():
    assert qmat.close(qmat.expm(np.zeros((3, 3))), np.eye(3), 1e-15)
    got = qmat.expm(-1j * np.pi / 2 * qmat.sigma_x)
    assert qmat.maxabs(got - (-1j) * qmat.sigma_x) <= 1e-14


def test_expm_inverse_pair():
    rng = np.random.default_rng(16)
    for _ in range(20):
        m = qmat.random_cmatrix(8, rng)
        m *= 2.0 / qmat.spectral_norm(m)
        assert qmat.maxabs(qmat.expm(m) @ qmat.expm(-m) - np.eye(8)) <= 1e-10


def test_expm_commuting_sum():
    rng = np.random.default_rng(17)
    for _ in range(20):
        m = qmat.random_cmatrix(6, rng)
        a = 0.3 * m
        b = 0.1 * m @ m  # commutes with a
        lhs = qmat.expm(a + b)
        rhs = qmat.expm(a) @ qmat.expm(b)
        assert qmat.maxabs(lhs - rhs) <= 1e-10 * max(1.0, qmat.maxabs(lhs))


def test_expm_skew_hermitian_unitary():
    rng = np.random.default_rng(18)
    h = qmat.hermitize(qmat.random_cmatrix(8, rng))
    u = qmat.expm(-1j * h)
    assert qmat.maxabs(u @ u.conj().T - np.eye(8)) <= 1e-10


def test_eig_hermitian_pauli_spectrum():
    w, v = qmat.eig_hermitian(qmat.sigma_z)
    assert np.allclose(w, [-1.0, 1.0])
    assert qmat.maxabs(v @ v.conj().T - np.eye(2)) <= 1e-10


def test_eig_hermitian_xx_char_poly_oracle():
    xx = np.kron(qmat.sigma_x, qmat.sigma_x)
    w, _ = qmat.eig_hermitian(xx)
    roots = np.sort(np.roots(np.poly(xx)).real)
    assert np.allclose(w, roots, atol=1e-10)
    assert np.allclose(w, [-1, -1, 1, 1], atol=1e-12)


def test_eig_hermitian_reconstruction():
    rng = np.random.default_rng(19)
    for _ in range(20):
        h = qmat.hermitize(qmat.random_cmatrix(8, rng))
        w, v = qmat.eig_hermitian(h)
        assert np.all(np.diff(w) >= -1e-14)
        assert qmat.maxabs(h - (v * w) @ v.conj().T) <= 1e-12 * qmat.maxabs(h)


def test_eig_hermitian_phase_convention():
    h = qmat.hermitize(qmat.random_cmatrix(5, np.random.default_rng(20)))
    _, v = qmat.eig_hermitian(h)
    for k in range(5):
        col = v[:, k]
        nz = np.flatnonzero(np.abs(col) > 1e-9)
        first = col[nz[0]]
        assert first.real > 0 and abs(first.imag) <= 1e-12


def test_eig_hermitian_rejects_non_hermitian():
    with pytest.raises(ValueError):
        qmat.eig_hermitian(np.array([[0, 1], [0, 0]], dtype=complex))


def test_eig_general_diagonal_and_nilpotent():
    w, _ = qmat.eig_general(np.diag([1.0, 2 + 3j]))
    assert sorted(w, key=lambda z: z.real) == pytest.approx([1.0, 2 + 3j])
    w, _ = qmat.eig_general(np.array([[0, 1], [0, 0]], dtype=complex))
    assert np.allclose(w, 0.0)


def test_eig_general_companion_oracle():
    rng = np.random.default_rng(21)
    m = qmat.random_cmatrix(10, rng)
    w, v = qmat.eig_general(m)
    # residual contract
    for i in range(10):
        assert np.linalg.norm(m @ v[:, i] - w[i] * v[:, i]) <= 1e-8 * qmat.spectral_norm(m)
    # eigenvalue multiset matches characteristic polynomial roots
    roots = np.roots(np.poly(m))
    got = np.sort_complex(w)
    exp = np.sort_complex(roots)
    assert np.max(np.abs(got - exp)) <= 1e-6


def test_trace_norm_basics():
    assert qmat.trace_norm(np.eye(4)) == pytest.approx(4.0, abs=1e-12)
    assert qmat.trace_norm(qmat.outer(qmat.ket(0, 2), qmat.ket(1, 2))) == pytest.approx(1.0, abs=1e-12)


def test_trace_norm_density_difference_bounds():
    rng = np.random.default_rng(22)
    for _ in range(100):
        a = qmat.random_density(4, rng)
        b = qmat.random_density(4, rng)
        tn = qmat.trace_norm(a - b)
        assert -1e-12 <= tn <= 2.0 + 1e-10


def test_check_density():
    rng = np.random.default_rng(23)
    rho = qmat.random_density(4, rng)
    qmat.check_density(rho)
    with pytest.raises(ValueError, match="trace"):
        qmat.check_density(2 * rho)
    with pytest.raises(ValueError, match="Hermitian"):
        qmat.check_density(rho + 1e-3 * qmat.random_cmatrix(4, rng))
    with pytest.raises(ValueError, match="eigenvalue"):
        bad = rho - 0.5 * np.eye(4) / 4
        qmat.check_density(bad / np.trace(bad))


def test_close_is_tolerance_parameterized():
    a = np.eye(2)
    assert qmat.close(a, a + 1e-13, tol=1e-12)
    assert not qmat.close(a, a + 1e-11, tol=1e-12)
