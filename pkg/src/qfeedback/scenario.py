"""Scenario configuration: parsing, validation and system assembly.

Configs are JSON documents (conventionally ``.cfg``) with nested sections
for the plant, controller, protocol, noise, initial state and run controls.
Complex matrices are written entrywise as ``[re, im]`` pairs; Hamiltonians
and operators may instead name a Pauli-string preset such as ``"pauli_xx"``
(tensor product of I, X, Y, Z over the qubits of the subsystem) or
``"identity"``.  Validation errors carry the dotted path of the offending
field.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

from . import liouville, propagate, protocol as protocol_mod, qmat


class ConfigError(ValueError):
    """Invalid configuration; ``path`` names the offending field."""

    def __init__(self, path: str, message: str):
        super().__init__(f"{path}: {message}")
        self.path = path


_PAULI = {"i": np.eye(2, dtype=complex), "x": qmat.sigma_x,
          "y": qmat.sigma_y, "z": qmat.sigma_z}


def load_config(path) -> dict:
    with open(path) as fh:
        try:
            return json.load(fh)
        except json.JSONDecodeError as exc:
            raise ConfigError(str(path), f"not valid JSON ({exc})") from exc


def dump_config(cfg: dict, path) -> None:
    with open(path, "w") as fh:
        json.dump(cfg, fh, indent=2, sort_keys=False)
        fh.write("\n")


def matrix_to_spec(m: np.ndarray) -> list:
    """Entrywise ``[re, im]`` representation of a complex matrix."""
    return [[[float(v.real), float(v.imag)] for v in row] for row in np.asarray(m, dtype=complex)]


def _parse_matrix(spec, dim: int | None, path: str) -> np.ndarray:
    if isinstance(spec, str):
        return _parse_preset(spec, dim, path)
    if isinstance(spec, dict) and "matrix" in spec:
        spec = spec["matrix"]
    if not isinstance(spec, list):
        raise ConfigError(path, "expected a preset name or a matrix literal")
    try:
        arr = np.array([[complex(c[0], c[1]) for c in row] for row in spec])
    except (TypeError, IndexError) as exc:
        raise ConfigError(path, f"matrix entries must be [re, im] pairs ({exc})") from exc
    if arr.ndim != 2 or arr.shape[0] != arr.shape[1]:
        raise ConfigError(path, f"matrix must be square, got shape {arr.shape}")
    if dim is not None and arr.shape[0] != dim:
        raise ConfigError(path, f"matrix dimension {arr.shape[0]}, expected {dim}")
    return arr


def _parse_preset(name: str, dim: int | None, path: str) -> np.ndarray:
    if name == "identity":
        if dim is None:
            raise ConfigError(path, "preset 'identity' needs a known dimension")
        return np.eye(dim, dtype=complex)
    if name == "zero":
        if dim is None:
            raise ConfigError(path, "preset 'zero' needs a known dimension")
        return np.zeros((dim, dim), dtype=complex)
    if name.startswith("pauli_"):
        letters = name[len("pauli_"):]
        if not letters or any(c not in _PAULI for c in letters):
            raise ConfigError(path, f"unknown Pauli string in preset {name!r}")
        m = _PAULI[letters[0]]
        for c in letters[1:]:
            m = np.kron(m, _PAULI[c])
        if dim is not None and m.shape[0] != dim:
            raise ConfigError(path, f"preset {name!r} has dimension {m.shape[0]}, expected {dim}")
        return m
    raise ConfigError(path, f"unknown preset {name!r}")


def _label_to_index(label, d: int, path: str) -> int:
    """Computational label to integer: plain int, or a qubit bit string."""
    if isinstance(label, int):
        j = label
    elif isinstance(label, str):
        n_qubits = int(round(math.log2(d)))
        if 2 ** n_qubits != d or len(label) != n_qubits or any(c not in "01" for c in label):
            raise ConfigError(path, f"label {label!r} is not a {n_qubits}-bit string")
        j = int(label, 2)
    else:
        raise ConfigError(path, f"expected an integer or bit-string label, got {label!r}")
    if not 0 <= j < d:
        raise ConfigError(path, f"label {label!r} out of range for dimension {d}")
    return j


def _parse_vector(spec, d: int, path: str) -> np.ndarray:
    if isinstance(spec, dict) and "ket" in spec:
        return qmat.ket(_label_to_index(spec["ket"], d, path + ".ket"), d)
    if isinstance(spec, dict) and "vector" in spec:
        try:
            v = np.array([complex(c[0], c[1]) for c in spec["vector"]])
        except (TypeError, IndexError) as exc:
            raise ConfigError(path + ".vector", f"entries must be [re, im] pairs ({exc})") from exc
        if v.shape != (d,):
            raise ConfigError(path + ".vector", f"length {v.shape[0]}, expected {d}")
        n = np.linalg.norm(v)
        if abs(n - 1.0) > 1e-10:
            raise ConfigError(path + ".vector", f"not a unit vector (norm {n:.12g})")
        return v
    raise ConfigError(path, "expected {'ket': label} or {'vector': [[re,im],...]}")


def _parse_diag_mixture(spec: dict, d: int, path: str) -> np.ndarray:
    rho = np.zeros((d, d), dtype=complex)
    total = 0.0
    for label, w in spec.items():
        if not isinstance(w, (int, float)) or w < 0:
            raise ConfigError(path, f"weight for {label!r} must be a nonnegative number")
        j = _label_to_index(label, d, path)
        rho += w * qmat.proj(qmat.ket(j, d))
        total += w
    if abs(total - 1.0) > 1e-10:
        raise ConfigError(path, f"weights sum to {total:.12g}, expected 1")
    return rho


def _parse_state(spec, d_p: int, d_c: int, path: str) -> np.ndarray:
    if isinstance(spec, dict) and "product" in spec:
        prod = spec["product"]
        parts = []
        for key, d in (("plant", d_p), ("controller", d_c)):
            sub = prod.get(key)
            if sub is None:
                raise ConfigError(f"{path}.product.{key}", "missing factor")
            if "diag" in sub:
                parts.append(_parse_diag_mixture(sub["diag"], d, f"{path}.product.{key}.diag"))
            elif "ket" in sub:
                parts.append(qmat.proj(qmat.ket(_label_to_index(sub["ket"], d, f"{path}.product.{key}.ket"), d)))
            else:
                raise ConfigError(f"{path}.product.{key}", "expected 'diag' or 'ket'")
        rho = np.kron(parts[0], parts[1])
    elif isinstance(spec, dict) and "matrix" in spec:
        rho = _parse_matrix(spec, d_p * d_c, path + ".matrix")
    else:
        raise ConfigError(path, "expected {'product': ...} or {'matrix': ...}")
    try:
        qmat.check_density(rho)
    except ValueError as exc:
        raise ConfigError(path, str(exc)) from exc
    return rho


@dataclass
class RunParams:
    t_end: float | str = "auto"
    grid_points: int = 500
    rtol: float = 1e-9
    atol: float = 1e-11
    seed: int = 0
    tail_fraction: float = 0.2
    gamma_sweep: list[float] = field(default_factory=list)


@dataclass
class Scenario:
    """A fully assembled system ready to certify and integrate."""

    plant_h: np.ndarray
    phi0: np.ndarray
    d_p: int
    d_c: int
    protocol: protocol_mod.FeedbackProtocol | None
    noise: propagate.NoiseModel
    sigma0: np.ndarray
    run: RunParams
    csv_name: str
    report_name: str
    pass_conditions: list[dict]
    sweep_pass_conditions: list[dict]
    gamma: float


def _require(cfg: dict, key: str, path: str):
    if key not in cfg:
        raise ConfigError(f"{path}.{key}" if path else key, "missing required field")
    return cfg[key]


def build_scenario(cfg: dict, gamma_override: float | None = None) -> Scenario:
    """Validate a config dict and build the scenario it describes.

    ``gamma_override`` replaces the protocol gain (0 meaning feedback off),
    which is how sweeps reuse one config.
    """
    plant = _require(cfg, "plant", "")
    d_p = _require(plant, "dim", "plant")
    if not isinstance(d_p, int) or d_p < 2:
        raise ConfigError("plant.dim", f"must be an integer >= 2, got {d_p!r}")
    plant_h = _parse_matrix(_require(plant, "hamiltonian", "plant"), d_p, "plant.hamiltonian")
    if not qmat.is_hermitian(plant_h):
        raise ConfigError("plant.hamiltonian", "matrix is not Hermitian")
    phi0 = _parse_vector(_require(plant, "phi0", "plant"), d_p, "plant.phi0")

    ctrl = cfg.get("controller", {"dim": 2})
    d_c = ctrl.get("dim", 2)
    if not isinstance(d_c, int) or d_c < 2:
        raise ConfigError("controller.dim", f"must be an integer >= 2, got {d_c!r}")

    proto_cfg = _require(cfg, "protocol", "")
    design = proto_cfg.get("design", "builtin")
    gamma = float(proto_cfg.get("gamma", 1.0)) if gamma_override is None else float(gamma_override)
    if gamma < 0:
        raise ConfigError("protocol.gamma", f"must be nonnegative, got {gamma}")
    proto = None
    if gamma > 0:
        if design == "builtin":
            if d_c != 2:
                raise ConfigError("controller.dim", "built-in design needs a two-level controller")
            proto = protocol_mod.build_design(phi0, gamma)
        elif design == "custom":
            h_int0 = _parse_matrix(_require(proto_cfg, "h_int0", "protocol"),
                                   d_p * d_c, "protocol.h_int0")
            if not qmat.is_hermitian(h_int0):
                raise ConfigError("protocol.h_int0", "matrix is not Hermitian")
            raw = _require(proto_cfg, "controller_couplings", "protocol")
            ops = [_parse_matrix(spec, d_c, f"protocol.controller_couplings[{i}]")
                   for i, spec in enumerate(raw)]
            proto = protocol_mod.custom_protocol(h_int0, ops, d_p, d_c, gamma=gamma)
        elif design == "none":
            proto = None
        else:
            raise ConfigError("protocol.design", f"unknown design {design!r}")

    noise_cfg = cfg.get("noise", {})
    couplings = []
    for i, spec in enumerate(noise_cfg.get("persistent", [])):
        where = spec.get("on", "plant") if isinstance(spec, dict) else "plant"
        path = f"noise.persistent[{i}]"
        if where == "plant":
            op = _parse_matrix(spec.get("matrix", spec) if isinstance(spec, dict) else spec, d_p, path)
            couplings.append(liouville.embed_plant(op, d_c))
        elif where == "composite":
            couplings.append(_parse_matrix(spec.get("matrix", spec), d_p * d_c, path))
        else:
            raise ConfigError(path + ".on", f"expected 'plant' or 'composite', got {where!r}")
    persistent = liouville.LindbladGenerator(None, couplings) if couplings else None

    events = []
    for i, spec in enumerate(noise_cfg.get("transient", [])):
        path = f"noise.transient[{i}]"
        t_a = spec.get("time")
        if not isinstance(t_a, (int, float)) or t_a < 0:
            raise ConfigError(path + ".time", f"must be a nonnegative number, got {t_a!r}")
        if spec.get("channel") == "decohere":
            kraus = propagate.decoherence_channel([d_p, d_c])
        elif "kraus" in spec:
            kraus = [_parse_matrix(k, d_p * d_c, f"{path}.kraus[{j}]")
                     for j, k in enumerate(spec["kraus"])]
        else:
            raise ConfigError(path, "expected channel 'decohere' or a 'kraus' list")
        events.append((float(t_a), kraus))

    uncertainty = None
    if "uncertainty" in noise_cfg and noise_cfg["uncertainty"]:
        u = noise_cfg["uncertainty"]
        bound = u.get("bound")
        if not isinstance(bound, (int, float)) or bound <= 0:
            raise ConfigError("noise.uncertainty.bound", f"must be a positive number, got {bound!r}")
        freq = float(u.get("frequency", 1.0))
        op = _parse_matrix(u.get("operator", "identity"), d_p * d_c, "noise.uncertainty.operator")
        if not qmat.is_hermitian(op):
            raise ConfigError("noise.uncertainty.operator", "matrix is not Hermitian")
        uncertainty = propagate.sinusoidal_uncertainty(op, float(bound), freq)

    noise = propagate.NoiseModel(persistent=persistent, transient_events=events,
                                 uncertainty=uncertainty)
    try:
        noise.validate(d_p * d_c)
    except ValueError as exc:
        raise ConfigError("noise", str(exc)) from exc

    sigma0 = _parse_state(_require(cfg, "initial_state", ""), d_p, d_c, "initial_state")

    run_cfg = cfg.get("run", {})
    t_end = run_cfg.get("t_end", "auto")
    if not (t_end == "auto" or (isinstance(t_end, (int, float)) and t_end > 0)):
        raise ConfigError("run.t_end", f"expected 'auto' or a positive number, got {t_end!r}")
    run = RunParams(
        t_end=t_end,
        grid_points=int(run_cfg.get("grid_points", 500)),
        rtol=float(run_cfg.get("rtol", 1e-9)),
        atol=float(run_cfg.get("atol", 1e-11)),
        seed=int(run_cfg.get("seed", 0)),
        tail_fraction=float(run_cfg.get("tail_fraction", 0.2)),
        gamma_sweep=[float(g) for g in run_cfg.get("gamma_sweep", [])],
    )
    if run.grid_points < 2:
        raise ConfigError("run.grid_points", "need at least two output points")

    outputs = cfg.get("outputs", {})
    return Scenario(
        plant_h=plant_h, phi0=phi0, d_p=d_p, d_c=d_c,
        protocol=proto, noise=noise, sigma0=sigma0, run=run,
        csv_name=outputs.get("csv", "trajectory.csv"),
        report_name=outputs.get("report", "report.txt"),
        pass_conditions=cfg.get("pass_conditions", []),
        sweep_pass_conditions=cfg.get("sweep_pass_conditions", []),
        gamma=gamma,
    )
