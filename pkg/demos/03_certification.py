#!/usr/bin/env python3
"""Anatomy of a spectral certificate.

The asymptotic error bound rests on four certified quantities, each computed
here step by step for the built-in two-qubit-plant design:

  1. kernel of the feedback generator  -> unique steady state (the dark
     product state),
  2. restriction to the traceless subspace -> all eigenvalues strictly in
     the left half-plane (spectral abscissa),
  3. a constructive decay envelope |exp(R t)| <= K exp(-alpha t),
  4. a sandwich estimate of the noise superoperator norm.

Degenerate protocols (drain removed, or ladder removed) are certified too,
to show how the uniqueness test refuses them.
"""

import numpy as np

from qfeedback import liouville, protocol, qmat, spectra

phi0 = qmat.ket(0, 4)
design = protocol.build_design(phi0, 5.0)
unit = design.unit_gain_generator()

print("== 1. steady-state kernel ==")
dim, basis = spectra.kernel(unit)
print(f"kernel dimension: {dim}")
print(f"distance of kernel element to the dark product state: "
      f"{qmat.trace_norm(basis[0] - protocol.steady_candidate(design)):.2e}")

print("\n== 2. traceless restriction ==")
restriction = spectra.restrict_traceless(unit)
lam = np.linalg.eigvals(restriction.matrix)
print(f"restricted dimension: {restriction.dim} (= 8^2 - 1)")
print(f"spectral abscissa: {lam.real.max():.6f} (strictly negative)")

print("\n== 3. decay envelope ==")
k_pref, alpha = spectra.decay_pair(restriction, np.linspace(0, 20, 200))
print(f"K = {k_pref:.4f}, alpha = {alpha:.6f}")
print("K > 1 reflects genuine transient growth of the non-normal restriction")

print("\n== 4. noise norm sandwich ==")
lower = qmat.outer(qmat.ket(0, 2), qmat.ket(1, 2))
noise_gen = liouville.LindbladGenerator(None, [
    liouville.embed_plant(0.5 * np.kron(lower, np.eye(2)), 2),
    liouville.embed_plant(0.5 * np.kron(np.eye(2), qmat.sigma_z), 2),
    liouville.embed_plant(0.5 * np.kron(qmat.sigma_x, lower), 2),
])
lo, up = spectra.induced_trace_norm_estimate(noise_gen)
print(f"rank-one probe lower bound: {lo:.4f}")
print(f"term-wise analytic upper bound: {up:.4f}")

print("\n== assembled certificate (gain 5) ==")
cert = spectra.certify(design, noise_gen)
print(cert.to_report())

print("== degenerate protocols are refused ==")
for label, h_int, drain in (
        ("drain removed", design.h_int0, np.zeros((2, 2))),
        ("ladder removed", np.zeros((8, 8)), np.sqrt(5.0) * lower)):
    p_bad = protocol.custom_protocol(h_int, [drain], 4, 2, gamma=5.0)
    partial = spectra.certify(p_bad, noise_gen, strict=False)
    print(f"{label:15s}: kernel dim = {partial.kernel_dim:2d}, "
          f"unique steady state = {partial.is_unique_density_steady}")
