"""Time-dependent master-equation integration, transient channel events and
the error signal against the desired unitary trajectory.

The integrator is an adaptive embedded Dormand-Prince 5(4) pair working on
the structured right-hand side (matrix triple products, never the d^2 x d^2
superoperator product).  Output times and channel-event times are landed on
exactly by step clipping; dense interpolation is not needed.  Statistics
(accepted steps, rejected steps, function evaluations) are recorded in the
trajectory metadata.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from . import liouville, protocol as protocol_mod, qmat


class IntegrationError(RuntimeError):
    """Integration failed; carries diagnostics in ``meta``."""

    def __init__(self, message: str, meta: dict | None = None):
        super().__init__(message)
        self.meta = meta or {}


@dataclass(frozen=True)
class UncertaintyTerm:
    """Bounded time-dependent Hamiltonian perturbation.

    ``h_of_t`` returns the perturbation Hamiltonian at a time; ``bound`` is
    the declared induced-trace-norm bound of the resulting commutator
    superoperator, valid for all times.
    """

    h_of_t: Callable[[float], np.ndarray]
    bound: float


def sinusoidal_uncertainty(op: np.ndarray, bound: float, frequency: float) -> UncertaintyTerm:
    """Perturbation ``(bound/2) sin(w t) op / |op|`` with induced norm <= bound."""
    op = qmat.require_hermitian(op, what="uncertainty operator")
    unit = op / qmat.spectral_norm(op)
    amp = 0.5 * bound

    def h_of_t(t: float) -> np.ndarray:
        return (amp * math.sin(frequency * t)) * unit

    return UncertaintyTerm(h_of_t=h_of_t, bound=bound)


@dataclass
class NoiseModel:
    """Persistent generator, scheduled transient channels, model uncertainty.

    ``transient_events`` is a list of ``(time, kraus_ops)`` pairs with strictly
    increasing times; each Kraus set must satisfy ``sum K^dag K = I``.
    """

    persistent: liouville.LindbladGenerator | None = None
    transient_events: list[tuple[float, list[np.ndarray]]] = field(default_factory=list)
    uncertainty: UncertaintyTerm | None = None

    def validate(self, dim: int, kraus_tol: float = 1e-10) -> None:
        if self.persistent is not None and self.persistent.dim != dim:
            raise ValueError(f"persistent noise dimension {self.persistent.dim}, expected {dim}")
        prev = -math.inf
        for i, (t_a, kraus) in enumerate(self.transient_events):
            if t_a < 0:
                raise ValueError(f"event {i} has negative time {t_a}")
            if t_a <= prev:
                raise ValueError(f"event times must be strictly increasing (event {i})")
            prev = t_a
            acc = np.zeros((dim, dim), dtype=complex)
            for k in kraus:
                k = qmat.as_cmatrix(k)
                if k.shape != (dim, dim):
                    raise ValueError(f"event {i}: Kraus operator shape {k.shape}, expected {(dim, dim)}")
                acc += k.conj().T @ k
            dev = qmat.maxabs(acc - np.eye(dim))
            if dev > kraus_tol:
                raise ValueError(f"event {i}: Kraus set not trace-preserving (deviation {dev:.3e})")


def empty_noise() -> NoiseModel:
    return NoiseModel()


class MasterEquation:
    """Right-hand side of the composite dynamics.

    Static content (plant drift, feedback dissipator, persistent noise) is
    vectorized once; the rotating interaction Hamiltonian and any uncertainty
    term are applied structurally per evaluation.
    """

    def __init__(self, plant_h: np.ndarray, d_c: int,
                 feedback: protocol_mod.FeedbackProtocol | None = None,
                 frame: protocol_mod.FrameMap | None = None,
                 noise: NoiseModel | None = None):
        self.plant_h = qmat.require_hermitian(plant_h, what="plant hamiltonian")
        self.d_p = self.plant_h.shape[0]
        self.d_c = d_c
        self.dim = self.d_p * d_c
        self.feedback = feedback
        self.noise = noise if noise is not None else empty_noise()
        self.noise.validate(self.dim)
        if feedback is not None and (feedback.d_p, feedback.d_c) != (self.d_p, d_c):
            raise ValueError("protocol dimensions do not match the plant/controller split")
        self.frame = frame if frame is not None else protocol_mod.composite_frame(self.plant_h, d_c)

        static = liouville.LindbladGenerator(
            liouville.embed_plant(self.plant_h, d_c),
            list(feedback.controller_couplings) if feedback is not None else [],
        )
        if self.noise.persistent is not None:
            static = static + self.noise.persistent
        self._static_gen = static
        self._m_static = static.vectorized()
        self._h_int0 = None if feedback is None else feedback.h_int0

    @property
    def dims(self) -> tuple[int, int]:
        return (self.d_p, self.d_c)

    def dynamic_hamiltonian(self, t: float) -> np.ndarray | None:
        """Rotating interaction Hamiltonian plus uncertainty at time ``t``."""
        h = None
        if self._h_int0 is not None:
            u = self.frame.unitary(t)
            h = u @ self._h_int0 @ u.conj().T
        if self.noise.uncertainty is not None:
            h_unc = self.noise.uncertainty.h_of_t(t)
            h = h_unc if h is None else h + h_unc
        return h

    def apply(self, t: float, sigma: np.ndarray) -> np.ndarray:
        n = self.dim
        return liouville.unvec(self.apply_flat(t, liouville.vec(sigma)), n)

    def apply_flat(self, t: float, y: np.ndarray) -> np.ndarray:
        out = self._m_static @ y
        h = self.dynamic_hamiltonian(t)
        if h is not None:
            n = self.dim
            s = y.reshape((n, n), order="F")
            c = h @ s
            c -= s @ h
            out = out + (-1j) * c.reshape(-1, order="F")
        return out

    def generator_at(self, t: float) -> liouville.LindbladGenerator:
        """Structured snapshot with the dynamic Hamiltonian frozen at ``t``."""
        h = liouville.embed_plant(self.plant_h, self.d_c)
        hdyn = self.dynamic_hamiltonian(t)
        if hdyn is not None:
            h = h + hdyn
        couplings = list(self.feedback.controller_couplings) if self.feedback is not None else []
        if self.noise.persistent is not None:
            if self.noise.persistent.hamiltonian is not None:
                h = h + self.noise.persistent.hamiltonian
            couplings = couplings + list(self.noise.persistent.couplings)
        return liouville.LindbladGenerator(qmat.hermitize(h), couplings)

    def vectorized_at(self, t: float) -> np.ndarray:
        """Full superoperator matrix at time ``t`` (oracle / propagator use)."""
        m = self._m_static.copy()
        h = self.dynamic_hamiltonian(t)
        if h is not None:
            eye = np.eye(self.dim, dtype=complex)
            m += -1j * (np.kron(eye, h) - np.kron(h.T, eye))
        return m


@dataclass
class Trajectory:
    """Sampled composite trajectory with reductions and diagnostics.

    ``errors`` holds the half trace distance D(t) to the desired plant
    trajectory once :func:`error_signal` has run.  ``meta`` carries integrator
    statistics and per-sample diagnostics (trace drift, minimum eigenvalue).
    """

    times: np.ndarray
    states: list[np.ndarray]
    plant_states: list[np.ndarray]
    errors: np.ndarray | None = None
    meta: dict = field(default_factory=dict)


# Dormand-Prince 5(4) tableau; the fifth-order solution propagates and the
# last row is first-same-as-last.
_DP_C = np.array([0.0, 1 / 5, 3 / 10, 4 / 5, 8 / 9, 1.0, 1.0])
_DP_A = [
    np.array([]),
    np.array([1 / 5]),
    np.array([3 / 40, 9 / 40]),
    np.array([44 / 45, -56 / 15, 32 / 9]),
    np.array([19372 / 6561, -25360 / 2187, 64448 / 6561, -212 / 729]),
    np.array([9017 / 3168, -355 / 33, 46732 / 5247, 49 / 176, -5103 / 18656]),
    np.array([35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84]),
]
_DP_B = np.array([35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84, 0.0])
_DP_E = np.array([71 / 57600, 0.0, -71 / 16695, 71 / 1920, -17253 / 339200, 22 / 525, -1 / 40])

_SAFETY = 0.9
_MIN_FACTOR = 0.2
_MAX_FACTOR = 5.0


def _error_norm(err: np.ndarray, y0: np.ndarray, y1: np.ndarray,
                rtol: float, atol: float) -> float:
    scale = atol + rtol * np.maximum(np.abs(y0), np.abs(y1))
    return float(np.sqrt(np.mean(np.abs(err / scale) ** 2)))


def _initial_step(f, t0: float, y0: np.ndarray, f0: np.ndarray,
                  rtol: float, atol: float, t_bound: float) -> float:
    scale = atol + rtol * np.abs(y0)
    d0 = float(np.sqrt(np.mean(np.abs(y0 / scale) ** 2)))
    d1 = float(np.sqrt(np.mean(np.abs(f0 / scale) ** 2)))
    h0 = 1e-6 if d0 < 1e-5 or d1 < 1e-5 else 0.01 * d0 / d1
    h0 = min(h0, abs(t_bound - t0))
    y1 = y0 + h0 * f0
    f1 = f(t0 + h0, y1)
    d2 = float(np.sqrt(np.mean(np.abs((f1 - f0) / scale) ** 2))) / h0
    if max(d1, d2) <= 1e-15:
        h1 = max(1e-6, h0 * 1e-3)
    else:
        h1 = (0.01 / max(d1, d2)) ** 0.2
    return min(100 * h0, h1, abs(t_bound - t0))


def _integrate_segment(f, t_start: float, t_end: float, y0: np.ndarray,
                       sample_times: np.ndarray, rtol: float, atol: float,
                       stats: dict, on_sample, h_start: float | None = None,
                       max_steps: int = 2_000_000) -> tuple[np.ndarray, float]:
    """Advance ``y' = f(t, y)`` from t_start to t_end, landing exactly on
    every entry of ``sample_times`` (which must end with t_end) and calling
    ``on_sample(t, y) -> y`` at each landing.  Returns the final state and the
    last step-size suggestion so a follow-on segment can resume smoothly.
    """
    t = t_start
    y = y0
    k = np.empty((7, y0.size), dtype=complex)
    k[0] = f(t, y)
    stats["nfev"] += 1
    if h_start is None:
        h_try = _initial_step(f, t, y, k[0], rtol, atol, t_end)
        stats["nfev"] += 1
    else:
        h_try = min(h_start, t_end - t)
    idx = 0
    while idx < sample_times.size:
        t_target = float(sample_times[idx])
        if t_target - t <= 1e-14 * max(1.0, abs(t)):
            y = on_sample(t_target, y)
            idx += 1
            continue
        h = min(h_try, t_target - t)
        landing = h >= t_target - t
        if h < 1e-14 * max(1.0, abs(t)):
            raise IntegrationError(f"step size underflow at t={t!r}", dict(stats))
        # six fresh stages; stage 7 is the FSAL evaluation at the new point
        for i in range(1, 7):
            yi = y + h * (k[:i].T @ _DP_A[i])
            k[i] = f(t + _DP_C[i] * h, yi)
        stats["nfev"] += 6
        y_new = y + h * (k.T @ _DP_B)
        err = h * (k.T @ _DP_E)
        en = _error_norm(err, y, y_new, rtol, atol)
        if en <= 1.0:
            t = t_target if landing else t + h
            y = y_new
            k[0] = k[6]
            stats["steps"] += 1
            factor = _MAX_FACTOR if en == 0.0 else min(_MAX_FACTOR, _SAFETY * en ** -0.2)
            h_try = h * max(_MIN_FACTOR, factor)
            if landing:
                y = on_sample(t, y)
                k[0] = f(t, y)  # state may have been adjusted at the sample
                stats["nfev"] += 1
                idx += 1
        else:
            stats["rejected"] += 1
            h_try = h * max(_MIN_FACTOR, min(1.0, _SAFETY * en ** -0.2))
        if stats["steps"] + stats["rejected"] > max_steps:
            raise IntegrationError(f"step limit exceeded at t={t!r}", dict(stats))
    return y, h_try


def apply_channel(sigma: np.ndarray, kraus: list[np.ndarray]) -> np.ndarray:
    """Apply a CPTP channel ``sigma -> sum_k K sigma K^dag``."""
    out = np.zeros_like(np.asarray(sigma, dtype=complex))
    for k in kraus:
        out += k @ sigma @ k.conj().T
    return out


def decoherence_channel(dims: list[int]) -> list[np.ndarray]:
    """Complete set of computational-basis projectors of a composite."""
    n = int(np.prod(dims))
    eye = np.eye(n, dtype=complex)
    return [np.outer(eye[:, i], eye[:, i].conj()) for i in range(n)]


def integrate(gen_t, sigma0: np.ndarray, span: tuple[float, float],
              noise: NoiseModel | None, grid: np.ndarray,
              rtol: float = 1e-9, atol: float = 1e-11,
              dims: tuple[int, int] | None = None,
              renorm_tol: float = 1e-8, fail_tol: float = 1e-6) -> Trajectory:
    """Integrate the composite master equation over ``span``.

    ``gen_t`` is either a :class:`MasterEquation` or a time-independent
    :class:`~qfeedback.liouville.LindbladGenerator`; persistent noise and
    uncertainty must already be part of it.  ``noise`` contributes the
    scheduled transient channels, applied after landing exactly on their
    times.  Samples are recorded at every grid time and every event time
    (post-channel).  Trace drift beyond ``renorm_tol`` is left untouched and
    recorded; drift or negativity beyond ``fail_tol`` aborts with diagnostics.
    """
    t0, t1 = float(span[0]), float(span[1])
    if not t0 < t1:
        raise ValueError(f"need t0 < t1, got span {span}")
    # positivity of the entry state is policed at the same threshold used
    # in flight, so a trajectory can be resumed from its own samples
    sigma0 = qmat.check_density(sigma0, psd_tol=fail_tol)
    n = sigma0.shape[0]

    if isinstance(gen_t, liouville.LindbladGenerator):
        m = gen_t.vectorized()
        f = lambda t, y: m @ y
        if dims is None:
            dims = (gen_t.dim, 1)
    else:
        if gen_t.dim != n:
            raise ValueError(f"generator dimension {gen_t.dim} does not match state ({n})")
        f = gen_t.apply_flat
        if dims is None:
            dims = gen_t.dims
    d_p, d_c = dims
    if d_p * d_c != n:
        raise ValueError(f"dims {dims} do not match state dimension {n}")

    noise = noise if noise is not None else empty_noise()
    noise.validate(n)
    events = [(t_a, kr) for (t_a, kr) in noise.transient_events if t0 <= t_a <= t1]

    grid = np.asarray(grid, dtype=float)
    if grid.size and (grid.min() < t0 - 1e-12 or grid.max() > t1 + 1e-12):
        raise ValueError("output grid must lie within the integration span")
    sample_set = np.unique(np.concatenate([grid, [t_a for t_a, _ in events], [t1]]))

    stats = {"steps": 0, "rejected": 0, "nfev": 0}
    times: list[float] = []
    states: list[np.ndarray] = []
    drifts: list[float] = []
    min_eigs: list[float] = []
    event_map = {t_a: kr for t_a, kr in events}

    def record(t: float, y: np.ndarray) -> np.ndarray:
        if t in event_map:
            s = liouville.unvec(y, n)
            s = apply_channel(s, event_map.pop(t))
            y = liouville.vec(s)
        s = liouville.unvec(y, n)
        tr = np.trace(s).real
        drift = abs(tr - 1.0)
        lo = float(np.linalg.eigvalsh(qmat.hermitize(s)).min())
        if drift > fail_tol or lo < -fail_tol:
            raise IntegrationError(
                f"state left the density set at t={t!r} "
                f"(trace drift {drift:.3e}, min eigenvalue {lo:.3e})",
                {**stats, "t": t, "trace_drift": drift, "min_eig": lo})
        if 0 < drift < renorm_tol:
            s = s / tr
            y = liouville.vec(s)
        times.append(t)
        states.append(s)
        drifts.append(drift)
        min_eigs.append(lo)
        return y

    y = liouville.vec(sigma0)
    if sample_set.size and abs(sample_set[0] - t0) <= 1e-14 * max(1.0, abs(t0)):
        # an event scheduled exactly at the start hits the initial state here
        y = record(t0, y)
        sample_set = sample_set[1:]

    _integrate_segment(f, t0, t1, y, sample_set, rtol, atol, stats, record)

    meta = {
        **stats,
        "rtol": rtol, "atol": atol,
        "trace_drift": np.array(drifts),
        "min_eig": np.array(min_eigs),
        "max_trace_drift": max(drifts) if drifts else 0.0,
        "min_eig_overall": min(min_eigs) if min_eigs else 0.0,
    }
    plant_states = [qmat.partial_trace(s, (d_p, d_c), over="controller") for s in states]
    return Trajectory(times=np.array(times), states=states,
                      plant_states=plant_states, meta=meta)


class DesiredTrajectory:
    """Pure target trajectory generated by the plant Hamiltonian alone."""

    def __init__(self, h_plant: np.ndarray, phi0: np.ndarray):
        self.frame = protocol_mod.FrameMap(h_plant)
        phi0 = np.asarray(phi0, dtype=complex)
        if abs(np.linalg.norm(phi0) - 1.0) > 1e-10:
            raise ValueError("target state must be a unit vector")
        self.phi0 = phi0

    def state(self, t: float) -> np.ndarray:
        v = self.frame.unitary(t) @ self.phi0
        return np.outer(v, v.conj())


def desired_state(h_plant: np.ndarray, phi0: np.ndarray, t: float) -> np.ndarray:
    """Target plant state at time ``t`` (pure, purity 1)."""
    return DesiredTrajectory(h_plant, phi0).state(t)


def error_signal(traj: Trajectory, h_plant: np.ndarray, phi0: np.ndarray) -> list[tuple[float, float]]:
    """Half trace distance between the reduced plant state and the target.

    Fills ``traj.errors`` and returns ``(t, D(t))`` pairs.
    """
    if not len(traj.times):
        raise ValueError("trajectory is empty")
    desired = DesiredTrajectory(h_plant, phi0)
    ds = [0.5 * qmat.trace_norm(ps - desired.state(t))
          for t, ps in zip(traj.times, traj.plant_states)]
    traj.errors = np.array(ds)
    return list(zip(traj.times.tolist(), ds))


def plateau(traj: Trajectory, tail_fraction: float = 0.2) -> float:
    """Max full trace-norm error over the trailing fraction of the window.

    This is the finite-horizon stand-in for the asymptotic error bound; note
    it uses the full norm, twice the half-distance stored in ``errors``.
    """
    if traj.errors is None:
        raise ValueError("run error_signal before asking for the plateau")
    if not 0 < tail_fraction <= 1:
        raise ValueError(f"tail fraction must be in (0, 1], got {tail_fraction}")
    t0, t1 = traj.times[0], traj.times[-1]
    cut = t1 - tail_fraction * (t1 - t0)
    mask = traj.times >= cut
    return float(2.0 * traj.errors[mask].max())


def run_to_plateau(eq: MasterEquation, sigma0: np.ndarray, noise: NoiseModel | None,
                   h_plant: np.ndarray, phi0: np.ndarray,
                   t_start: float, window: float, grid_points: int = 500,
                   tail_fraction: float = 0.2, rel_change: float = 0.05,
                   extend_factor: float = 1.5, max_extensions: int = 8,
                   rtol: float = 1e-9, atol: float = 1e-11) -> tuple[Trajectory, float]:
    """Integrate until the tail maximum stabilizes, extending the horizon.

    The window starts at ``window`` and is multiplied by ``extend_factor``
    until the plateau estimate changes by less than ``rel_change`` between
    consecutive extensions (or both estimates are negligibly small).
    """
    spacing = window / max(grid_points - 1, 1)
    t_end = t_start + window
    grid = np.linspace(t_start, t_end, grid_points)
    traj = integrate(eq, sigma0, (t_start, t_end), noise, grid, rtol=rtol, atol=atol)
    error_signal(traj, h_plant, phi0)
    value = plateau(traj, tail_fraction)
    for ext in range(max_extensions):
        new_end = t_start + (t_end - t_start) * extend_factor
        n_extra = max(2, int(round((new_end - t_end) / spacing)) + 1)
        grid_ext = np.linspace(t_end, new_end, n_extra)[1:]
        tail = integrate(eq, traj.states[-1], (t_end, new_end),
                         _remaining_events(noise, t_end), grid_ext, rtol=rtol, atol=atol)
        traj = _concat(traj, tail)
        error_signal(traj, h_plant, phi0)
        t_end = new_end
        new_value = plateau(traj, tail_fraction)
        converged = (abs(new_value - value) <= rel_change * max(new_value, value)
                     or max(new_value, value) < 1e-9)
        value = new_value
        if converged:
            traj.meta["extensions"] = ext + 1
            return traj, value
    traj.meta["extensions"] = max_extensions
    traj.meta["plateau_converged"] = False
    return traj, value


def _remaining_events(noise: NoiseModel | None, after: float) -> NoiseModel:
    if noise is None:
        return empty_noise()
    return NoiseModel(persistent=None,
                      transient_events=[(t, k) for t, k in noise.transient_events if t > after],
                      uncertainty=None)


def _concat(a: Trajectory, b: Trajectory) -> Trajectory:
    meta = dict(a.meta)
    for key in ("steps", "rejected", "nfev"):
        meta[key] = a.meta.get(key, 0) + b.meta.get(key, 0)
    meta["trace_drift"] = np.concatenate([a.meta["trace_drift"], b.meta["trace_drift"]])
    meta["min_eig"] = np.concatenate([a.meta["min_eig"], b.meta["min_eig"]])
    meta["max_trace_drift"] = max(a.meta["max_trace_drift"], b.meta["max_trace_drift"])
    meta["min_eig_overall"] = min(a.meta["min_eig_overall"], b.meta["min_eig_overall"])
    return Trajectory(times=np.concatenate([a.times, b.times]),
                      states=a.states + b.states,
                      plant_states=a.plant_states + b.plant_states,
                      meta=meta)


def outcome_probabilities(state: np.ndarray, basis: list[np.ndarray]) -> np.ndarray:
    """Measurement outcome probabilities ``<b_i| state |b_i>``."""
    state = qmat.as_cmatrix(state)
    return np.array([float((b.conj() @ state @ b).real) for b in basis])


def export_csv(traj: Trajectory, path, include_probabilities: bool = False) -> None:
    """Write the sampled trajectory as CSV with 17 significant digits.

    Columns: ``t,D,trace_drift,min_eig`` plus ``p_00,p_01,p_10,p_11`` when
    requested (two-qubit plant reductions in the computational basis).
    """
    if traj.errors is None:
        raise ValueError("run error_signal before exporting")
    header = "t,D,trace_drift,min_eig"
    rows = []
    basis = None
    if include_probabilities:
        d_p = traj.plant_states[0].shape[0]
        if d_p != 4:
            raise ValueError("probability columns expect a two-qubit plant")
        header += ",p_00,p_01,p_10,p_11"
        basis = qmat.basis_kets(4)
    drift = traj.meta["trace_drift"]
    min_eig = traj.meta["min_eig"]
    for i, t in enumerate(traj.times):
        cells = [t, traj.errors[i], drift[i], min_eig[i]]
        if basis is not None:
            cells.extend(outcome_probabilities(traj.plant_states[i], basis))
        rows.append(",".join(f"{c:.17g}" for c in cells))
    text = header + "\n" + "\n".join(rows) + "\n"
    if hasattr(path, "write"):
        path.write(text)
    else:
        with open(path, "w") as fh:
            fh.write(text)
