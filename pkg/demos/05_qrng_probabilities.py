#!/usr/bin/env python3
"""Measurement statistics of the plant used as a random-number source.

Measuring the freely evolving two-qubit plant in the computational basis at
time t yields outcome probabilities set by the target trajectory (cos^2 /
sin^2 weights on |00> and |11> for the exchange Hamiltonian).  Persistent
noise skews those statistics; feedback restores them.  The total-variation
distance between measured and ideal distributions is bounded by twice the
trace-distance error, so suppressing D(t) directly protects the generator.
"""

import numpy as np

from qfeedback import liouville, propagate, protocol, qmat

h_plant = np.kron(qmat.sigma_x, qmat.sigma_x)
phi0 = qmat.ket(0, 4)
basis = qmat.basis_kets(4)
labels = ["00", "01", "10", "11"]

lower = qmat.outer(qmat.ket(0, 2), qmat.ket(1, 2))
noise_gen = liouville.LindbladGenerator(None, [
    liouville.embed_plant(0.5 * np.kron(lower, np.eye(2)), 2),
    liouville.embed_plant(0.5 * np.kron(np.eye(2), qmat.sigma_z), 2),
    liouville.embed_plant(0.5 * np.kron(qmat.sigma_x, lower), 2),
])
noise = propagate.NoiseModel(persistent=noise_gen)

plant0 = (0.8 * qmat.proj(qmat.ket(0, 4)) + 0.1 * qmat.proj(qmat.ket(1, 4))
          + 0.05 * qmat.proj(qmat.ket(2, 4)) + 0.05 * qmat.proj(qmat.ket(3, 4)))
ctrl0 = 0.9 * qmat.proj(qmat.ket(0, 2)) + 0.1 * qmat.proj(qmat.ket(1, 2))
sigma0 = np.kron(plant0, ctrl0)

t_measure = 12.0 + np.pi / 4      # late enough for transients to settle
grid = np.linspace(0.0, t_measure, 300)

print("ideal distribution at the measurement time:")
ideal = propagate.outcome_probabilities(
    propagate.desired_state(h_plant, phi0, t_measure), basis)
print("   " + "  ".join(f"p_{l}={p:.4f}" for l, p in zip(labels, ideal)))

print(f"\n{'gamma':>6} {'D(t_m)':>10} {'TV to ideal':>12}  distribution")
for gamma in (0.0, 5.0, 20.0):
    design = protocol.build_design(phi0, gamma) if gamma > 0 else None
    eq = propagate.MasterEquation(h_plant, 2, feedback=design, noise=noise)
    traj = propagate.integrate(eq, sigma0, (0.0, t_measure), noise, grid)
    propagate.error_signal(traj, h_plant, phi0)
    probs = propagate.outcome_probabilities(traj.plant_states[-1], basis)
    tv = float(np.abs(probs - ideal).sum())
    d = float(traj.errors[-1])
    dist = "  ".join(f"{p:.4f}" for p in probs)
    print(f"{gamma:6g} {d:10.4f} {tv:12.4f}  [{dist}]")
    assert tv <= 2 * d + 1e-9     # total variation is controlled by D

print("\nfeedback pulls the outcome statistics back towards the ideal ones;")
print("the total-variation error is always within twice the trace distance.")
