import io

import numpy as np
import pytest

from qfeedback import liouville, propagate, protocol, qmat, spectra
from qfeedback.liouville import LindbladGenerator

H_PLANT = np.kron(qmat.sigma_x, qmat.sigma_x)
PHI0 = qmat.ket(0, 4)
UNIT_ALPHA = 0.2499990   # stability margin of the built-in design at unit gain


@pytest.fixture(scope="module")
def design():
    return protocol.build_design(PHI0, 5.0)


@pytest.fixture(scope="module")
def noise_gen():
    lower = qmat.outer(qmat.ket(0, 2), qmat.ket(1, 2))
    ops = [0.5 * np.kron(lower, np.eye(2)),
           0.5 * np.kron(np.eye(2), qmat.sigma_z),
           0.5 * np.kron(qmat.sigma_x, lower)]
    return LindbladGenerator(None, [liouville.embed_plant(op, 2) for op in ops])


@pytest.fixture(scope="module")
def mixed_init():
    plant = (0.8 * qmat.proj(qmat.ket(0, 4)) + 0.1 * qmat.proj(qmat.ket(1, 4))
             + 0.05 * qmat.proj(qmat.ket(2, 4)) + 0.05 * qmat.proj(qmat.ket(3, 4)))
    ctrl = 0.9 * qmat.proj(qmat.ket(0, 2)) + 0.1 * qmat.proj(qmat.ket(1, 2))
    return np.kron(plant, ctrl)


def test_desired_state_basics():
    assert qmat.maxabs(propagate.desired_state(H_PLANT, PHI0, 0.0) - qmat.proj(PHI0)) <= 1e-14
    # the two-excitation flip: at t = pi/2 the target reaches the top state
    got = propagate.desired_state(H_PLANT, PHI0, np.pi / 2)
    assert qmat.maxabs(got - qmat.proj(qmat.ket(3, 4))) <= 1e-12
    for t in (0.3, 0.9, 2.2):
        rho = propagate.desired_state(H_PLANT, PHI0, t)
        assert abs(np.trace(rho @ rho) - 1.0) <= 1e-10
        p00 = (PHI0.conj() @ rho @ PHI0).real
        assert abs(p00 - np.cos(t) ** 2) <= 1e-12


def test_desired_state_spectral_oracle():
    # independent route: dense matrix exponential
    for t in (0.4, 1.7):
        u = qmat.expm(-1j * H_PLANT * t)
        expected = qmat.proj(u @ PHI0)
        assert qmat.maxabs(propagate.desired_state(H_PLANT, PHI0, t) - expected) <= 1e-12


def test_integrate_matches_vectorized_exponential():
    # time-independent case against the exact propagator
    rng = np.random.default_rng(71)
    g = LindbladGenerator(qmat.hermitize(qmat.random_cmatrix(4, rng)),
                          [0.6 * qmat.random_cmatrix(4, rng)])
    rho0 = qmat.random_density(4, rng)
    t_end = 1.5
    traj = propagate.integrate(g, rho0, (0.0, t_end), None, np.array([t_end]))
    expected = liouville.unvec(liouville.semigroup_step(g, t_end) @ liouville.vec(rho0), 4)
    assert qmat.maxabs(traj.states[-1] - expected) <= 1e-8


def test_integrate_pure_unitary_preserves_purity():
    rng = np.random.default_rng(72)
    g = LindbladGenerator(qmat.hermitize(qmat.random_cmatrix(4, rng)), [])
    psi = qmat.random_unit_vector(4, rng)
    traj = propagate.integrate(g, qmat.proj(psi), (0.0, 3.0), None, np.linspace(0, 3, 30))
    for s in traj.states:
        assert abs(np.trace(s @ s).real - 1.0) <= 1e-9


def test_integrate_invariance_scenario(design):
    eq = propagate.MasterEquation(H_PLANT, 2, feedback=design)
    traj = propagate.integrate(eq, protocol.steady_candidate(design),
                               (0.0, 5.0), None, np.linspace(0, 5, 100))
    propagate.error_signal(traj, H_PLANT, PHI0)
    assert traj.errors.max() < 1e-6
    assert traj.meta["steps"] > 0
    assert traj.meta["max_trace_drift"] < 1e-12


def test_integrator_order_tolerance_halving():
    rng = np.random.default_rng(73)
    g = LindbladGenerator(qmat.hermitize(qmat.random_cmatrix(4, rng)),
                          [0.5 * qmat.random_cmatrix(4, rng)])
    rho0 = qmat.random_density(4, rng)
    t_end = 2.0
    exact = liouville.unvec(liouville.semigroup_step(g, t_end) @ liouville.vec(rho0), 4)
    errs = []
    rtol = 1e-4
    for _ in range(9):
        traj = propagate.integrate(g, rho0, (0.0, t_end), None, np.array([t_end]),
                                   rtol=rtol, atol=rtol * 1e-2)
        errs.append(qmat.maxabs(traj.states[-1] - exact))
        rtol /= 2
    for a, b in zip(errs, errs[1:]):
        assert b <= a * (1 + 1e-9) + 1e-13   # floor guard at roundoff level


def test_decoherence_channel_properties():
    kraus = propagate.decoherence_channel([2, 2, 2])
    assert len(kraus) == 8
    acc = sum(k.conj().T @ k for k in kraus)
    assert qmat.maxabs(acc - np.eye(8)) <= 1e-14
    rng = np.random.default_rng(74)
    diag = np.diag(rng.uniform(0, 1, size=8))
    diag /= np.trace(diag)
    assert qmat.maxabs(propagate.apply_channel(diag, kraus) - diag) <= 1e-14
    plus = qmat.proj(np.full(8, 1 / np.sqrt(8), dtype=complex))
    out = propagate.apply_channel(plus, kraus)
    assert qmat.maxabs(out - np.diag(np.diag(out))) <= 1e-14
    for _ in range(20):
        rho = qmat.random_density(8, rng)
        once = propagate.apply_channel(rho, kraus)
        twice = propagate.apply_channel(once, kraus)
        assert qmat.maxabs(twice - once) <= 1e-12
        assert abs(np.trace(once) - 1.0) <= 1e-10
        assert np.linalg.eigvalsh(qmat.hermitize(once)).min() >= -1e-10


def test_event_application_and_jump(design):
    eq = propagate.MasterEquation(H_PLANT, 2, feedback=design)
    noise = propagate.NoiseModel(
        transient_events=[(1.0, propagate.decoherence_channel([2, 2, 2]))])
    grid = np.linspace(0, 3, 61)
    traj = propagate.integrate(eq, protocol.steady_candidate(design), (0.0, 3.0),
                               noise, grid)
    propagate.error_signal(traj, H_PLANT, PHI0)
    d = traj.errors
    t = traj.times
    assert d[t < 1.0].max() < 1e-8
    at_event = d[t == 1.0][0]           # event samples are post-channel
    assert at_event > 0.1
    assert d[-1] < at_event             # recovery under way
    # analytic jump size: decohering kills the two-excitation coherence
    assert at_event == pytest.approx(abs(np.cos(1.0) * np.sin(1.0)), abs=1e-6)


def test_event_at_span_start_hits_initial_state(design):
    eq = propagate.MasterEquation(H_PLANT, 2, feedback=design)
    plus = qmat.proj(np.full(8, 1 / np.sqrt(8), dtype=complex))
    noise = propagate.NoiseModel(
        transient_events=[(0.0, propagate.decoherence_channel([2, 2, 2]))])
    traj = propagate.integrate(eq, plus, (0.0, 0.5), noise, np.array([0.0, 0.5]))
    first = traj.states[0]
    # the start-time channel decoheres the initial state before anything moves
    assert qmat.maxabs(first - np.diag(np.diag(first))) <= 1e-12
    assert traj.times[0] == 0.0


def test_invalid_kraus_rejected_before_start(design):
    eq = propagate.MasterEquation(H_PLANT, 2, feedback=design)
    bad = [np.eye(8) * 0.9]
    noise = propagate.NoiseModel(transient_events=[(0.5, bad)])
    with pytest.raises(ValueError, match="trace-preserving"):
        propagate.integrate(eq, protocol.steady_candidate(design), (0.0, 1.0),
                            noise, np.array([1.0]))


def test_event_times_must_increase():
    kraus = propagate.decoherence_channel([2, 2, 2])
    noise = propagate.NoiseModel(transient_events=[(1.0, kraus), (0.5, kraus)])
    with pytest.raises(ValueError, match="increasing"):
        noise.validate(8)


def test_integration_failure_diagnostics(design):
    eq = propagate.MasterEquation(H_PLANT, 2, feedback=design)
    with pytest.raises(propagate.IntegrationError):
        # failure threshold below roundoff level must trip immediately
        propagate.integrate(eq, protocol.steady_candidate(design), (0.0, 1.0),
                            None, np.linspace(0, 1, 20),
                            renorm_tol=0.0, fail_tol=1e-17)


def test_error_signal_extremes():
    zero = LindbladGenerator(None, [], dim=4)
    rho0 = qmat.proj(PHI0)
    traj = propagate.integrate(zero, rho0, (0.0, 0.5), None, np.array([0.5]),
                               dims=(4, 1))
    propagate.error_signal(traj, np.zeros((4, 4)), PHI0)
    assert traj.errors.max() <= 1e-10
    propagate.error_signal(traj, np.zeros((4, 4)), qmat.ket(3, 4))
    assert traj.errors[-1] == pytest.approx(1.0, abs=1e-10)


def test_theorem2_recovery_random_states(design):
    # recovery from arbitrary composite states injected at arbitrary times
    eq = propagate.MasterEquation(H_PLANT, 2, feedback=design)
    rng = np.random.default_rng(75)
    horizon = 40.0 / (design.gamma * UNIT_ALPHA)
    for i in range(10):
        sigma0 = qmat.random_density(8, rng)
        t0 = (0.0, 1.0, 3.0)[i % 3]
        t_end = t0 + horizon
        traj = propagate.integrate(eq, sigma0, (t0, t_end), None, np.array([t_end]),
                                   rtol=1e-7, atol=1e-9)
        propagate.error_signal(traj, H_PLANT, PHI0)
        assert traj.errors[-1] < 1e-3


def test_correlated_noise_suppressed(mixed_init):
    # plant-controller correlated coupling, excitation direction
    p = protocol.build_design(PHI0, 10.0)
    raise_c = qmat.outer(qmat.ket(1, 2), qmat.ket(0, 2))
    corr = 0.25 * np.kron(np.kron(np.eye(2), qmat.sigma_x), raise_c)
    gen = LindbladGenerator(None, [corr])
    cert = spectra.certify(p, gen)
    noise = propagate.NoiseModel(persistent=gen)
    eq = propagate.MasterEquation(H_PLANT, 2, feedback=p, noise=noise)
    traj, plat = propagate.run_to_plateau(eq, mixed_init, noise, H_PLANT, PHI0,
                                          0.0, 40.0 / (10.0 * UNIT_ALPHA),
                                          grid_points=300)
    assert plat <= cert.bound_value - 1e-9
    assert plat > 1e-4   # this direction keeps pumping the controller


def test_plateau_and_tail_fraction(design, noise_gen, mixed_init):
    noise = propagate.NoiseModel(persistent=noise_gen)
    eq = propagate.MasterEquation(H_PLANT, 2, feedback=design, noise=noise)
    traj, plat = propagate.run_to_plateau(eq, mixed_init, noise, H_PLANT, PHI0,
                                          0.0, 40.0 / (5.0 * UNIT_ALPHA),
                                          grid_points=300)
    assert plat == propagate.plateau(traj, 0.2)
    assert plat == pytest.approx(2.0 * max(
        traj.errors[traj.times >= traj.times[-1] - 0.2 * (traj.times[-1] - traj.times[0])]))
    with pytest.raises(ValueError):
        propagate.plateau(traj, 0.0)
    assert 0 < plat < 2.0


def test_uncertainty_term_bound():
    op = np.kron(np.kron(qmat.sigma_x, qmat.sigma_z), qmat.sigma_x)
    term = propagate.sinusoidal_uncertainty(op, 0.05, 2.0)
    for t in np.linspace(0, 5, 23):
        h = term.h_of_t(t)
        # commutator superoperator norm is at most twice the operator norm
        assert 2.0 * qmat.spectral_norm(h) <= 0.05 + 1e-12


def test_outcome_probabilities():
    basis = qmat.basis_kets(4)
    p = propagate.outcome_probabilities(qmat.proj(qmat.ket(0, 4)), basis)
    assert np.allclose(p, [1, 0, 0, 0], atol=1e-12)
    rho = propagate.desired_state(H_PLANT, PHI0, np.pi / 4)
    p = propagate.outcome_probabilities(rho, basis)
    assert np.allclose(p, [0.5, 0, 0, 0.5], atol=1e-12)
    assert p.sum() == pytest.approx(1.0, abs=1e-9)


def test_outcome_probabilities_tv_bound(design, noise_gen, mixed_init):
    noise = propagate.NoiseModel(persistent=noise_gen)
    eq = propagate.MasterEquation(H_PLANT, 2, feedback=design, noise=noise)
    grid = np.linspace(0, 2, 21)
    traj = propagate.integrate(eq, mixed_init, (0.0, 2.0), noise, grid)
    propagate.error_signal(traj, H_PLANT, PHI0)
    basis = qmat.basis_kets(4)
    for t, ps, d in zip(traj.times, traj.plant_states, traj.errors):
        p = propagate.outcome_probabilities(ps, basis)
        q = propagate.outcome_probabilities(propagate.desired_state(H_PLANT, PHI0, t), basis)
        assert np.abs(p - q).sum() <= 2.0 * d + 1e-9


def test_export_csv_format_and_determinism(design):
    eq = propagate.MasterEquation(H_PLANT, 2, feedback=design)
    grid = np.linspace(0, 1, 11)
    outs = []
    for _ in range(2):
        traj = propagate.integrate(eq, protocol.steady_candidate(design),
                                   (0.0, 1.0), None, grid)
        propagate.error_signal(traj, H_PLANT, PHI0)
        buf = io.StringIO()
        propagate.export_csv(traj, buf, include_probabilities=True)
        outs.append(buf.getvalue())
    assert outs[0] == outs[1]
    lines = outs[0].strip().splitlines()
    assert lines[0] == "t,D,trace_drift,min_eig,p_00,p_01,p_10,p_11"
    assert len(lines) == 12
    row = lines[1].split(",")
    assert len(row) == 8
    assert float(row[0]) == 0.0
    assert float(row[4]) == pytest.approx(1.0, abs=1e-12)


def test_trajectory_plant_states_consistent(design):
    eq = propagate.MasterEquation(H_PLANT, 2, feedback=design)
    traj = propagate.integrate(eq, protocol.steady_candidate(design),
                               (0.0, 1.0), None, np.linspace(0, 1, 5))
    for s, ps in zip(traj.states, traj.plant_states):
        assert qmat.maxabs(qmat.partial_trace(s, (4, 2), "controller") - ps) <= 1e-12
