#!/usr/bin/env python3
"""Replacing the continuously rotating interaction Hamiltonian by a
piecewise-constant one.

A physical implementation may only manage a Hamiltonian that is constant on
short time slices.  Freezing the rotating interaction Hamiltonian on n
uniform cells and propagating each cell exactly gives dynamics that converge
to the continuous ones as n grows: first order for left-endpoint sampling,
second order for midpoint sampling.

Outputs: demos/output/discretize_left.csv, discretize_midpoint.csv.
"""

import os

import numpy as np

from qfeedback import discretize, liouville, propagate, protocol, qmat

OUT = os.path.join(os.path.dirname(__file__), "output")
os.makedirs(OUT, exist_ok=True)

h_plant = np.kron(qmat.sigma_x, qmat.sigma_x)
phi0 = qmat.ket(0, 4)
design = protocol.build_design(phi0, 5.0)

lower = qmat.outer(qmat.ket(0, 2), qmat.ket(1, 2))
noise = propagate.NoiseModel(persistent=liouville.LindbladGenerator(None, [
    liouville.embed_plant(0.5 * np.kron(lower, np.eye(2)), 2),
    liouville.embed_plant(0.5 * np.kron(np.eye(2), qmat.sigma_z), 2),
    liouville.embed_plant(0.5 * np.kron(qmat.sigma_x, lower), 2),
]))

plant0 = (0.8 * qmat.proj(qmat.ket(0, 4)) + 0.1 * qmat.proj(qmat.ket(1, 4))
          + 0.05 * qmat.proj(qmat.ket(2, 4)) + 0.05 * qmat.proj(qmat.ket(3, 4)))
ctrl0 = 0.9 * qmat.proj(qmat.ket(0, 2)) + 0.1 * qmat.proj(qmat.ket(1, 2))
sigma0 = np.kron(plant0, ctrl0)

cells = [32, 64, 128, 256, 512]
for rule in ("left", "midpoint"):
    print(f"== {rule}-sampled cells over [0, 2] ==")
    rows = discretize.convergence_table(design, h_plant, sigma0, (0.0, 2.0),
                                        noise, cells, cell_rule=rule)
    print(f"{'n':>6} {'terminal error':>16} {'observed order':>16}")
    for n, err, order in rows:
        print(f"{n:6d} {err:16.6e} {order:16.3f}")
    path = os.path.join(OUT, f"discretize_{rule}.csv")
    discretize.export_table_csv(rows, path)
    print(f"wrote {path}\n")

print("midpoint sampling needs far fewer slices for the same accuracy,")
print("the expected payoff of a second-order rule.")
