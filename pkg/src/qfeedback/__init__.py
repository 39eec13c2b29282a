"""Noise suppression via coherent quantum feedback: simulation and
certification toolkit for finite-dimensional open quantum systems.

Modules
-------
qmat
    Dense complex-matrix kernel (tensor products, partial trace, matrix
    functions, norms).
liouville
    Structured Lindblad generators and their vectorized superoperators.
protocol
    Coherent feedback protocol construction and rotating-frame machinery.
spectra
    Steady-state kernel, Hurwitz restriction, decay envelopes, induced-norm
    estimates and the assembled spectral certificate.
propagate
    Adaptive integration of the time-dependent master equation, transient
    channel events, error signal and plateau estimation.
discretize
    Piecewise-constant interaction-Hamiltonian convergence study.
scenario / cli
    Config-driven bench harness (`qfeedback-bench`).
"""

from . import discretize, liouville, propagate, protocol, qmat, scenario, spectra

__all__ = ["discretize", "liouville", "propagate", "protocol", "qmat",
           "scenario", "spectra"]
__version__ = "0.1.0"
