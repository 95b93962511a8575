"""Experiment presets, ensemble orchestration and CSV/JSON output.

An experiment is described by an :class:`ExperimentConfig`, normally built
from a YAML file merged over a named preset.  :func:`run_experiment` runs
it and returns the per-trajectory results together with a JSON-ready
summary; :func:`write_outputs` persists both.

Trajectories are processed in fixed-size chunks of consecutive indices.
Each trajectory draws its noise from its own stream keyed by
``(seed, index, channel)``, and the chunk layout does not depend on the
number of worker threads, so output files are byte-identical for any
degree of parallelism.
"""

from __future__ import annotations

import ast
import enum
import json
import math
import operator
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import yaml

from .core import (
    SIGMA_MINUS,
    SIGMA_PLUS,
    SIGMA_X,
    SIGMA_Y,
    SIGMA_Z,
    JumpChannel,
    bloch_coords,
    bloch_state,
    expect,
    expect_vec,
    heisenberg_hamiltonian,
    normalize,
    projector,
    purity_defect,
    qubit_orthogonal,
    singlet_product_state,
)
from .feedback import (
    dual_channel_qubit,
    empirical_stability_probe,
    lyapunov_criterion,
    run_groundstate_flow,
    state_agnostic_step,
)
from .gradient import potential_V
from .hamiltonian import check_formulation_equivalence, stratonovich_step
from .sde import WienerStream, ito_sme_step, ito_sse_step, record_increments
from .stats import describe, fit_exponential

SCHEMA_PATH = Path(__file__).with_name("schemas") / "summary.schema.json"
FORMAT_VERSION = 1


class ConfigError(ValueError):
    """The experiment configuration is invalid."""


class InvariantViolation(RuntimeError):
    """A numerical invariant (finiteness, purity) broke down during a run."""


class ExperimentKind(enum.Enum):
    SIMULATE = "simulate"
    EQUIVALENCE = "equivalence"
    BORN_CHECK = "born-check"
    FEEDBACK_GS = "feedback-gs"
    STATE_PREP = "state-prep"
    STABILITY_SCAN = "stability-scan"


# ---------------------------------------------------------------------------
# presets

PRESETS = {
    "fig3": {
        "experiment": "feedback-gs",
        "n_values": [4, 6, 8, 10],
        "offset": 18.0,
        "gamma": 0.4,
        "T": 2.0,
        "n_steps": 300,
    },
    "fig4": {
        "experiment": "state-prep",
        "channels": [{"op": "sigma_plus", "gamma": 4.0}, {"op": "sigma_minus", "gamma": 1.0}],
        "target": {"theta": "pi/4", "phi": "pi/4"},
        "psi0": "one",
        "T": 8.0,
        "n_steps": 800,
        "n_traj": 50,
        "seed": 2024,
    },
    "born": {
        "experiment": "born-check",
        "channels": [{"op": "sigma_z", "gamma": 1.0}],
        "p0": 0.7,
        "n_traj": 2000,
        "dt": 2e-3,
        "variance_tol": 1e-6,
        "max_T": 40.0,
        "check_every": 500,
        "seed": 1,
    },
    "equivalence_sigma_z": {
        "experiment": "equivalence",
        "h0": {"x": 0.5},
        "channels": [{"op": "sigma_z", "gamma": 1.0}],
        "psi0": {"theta": "pi/3", "phi": "pi/5"},
        "T": 1.0,
        "dt_values": [1e-2, 5e-3, 2.5e-3],
        "n_traj": 256,
        "seed": 7,
    },
    "equivalence_sigma_minus": {
        "experiment": "equivalence",
        "h0": {"x": 0.5},
        "channels": [{"op": "sigma_minus", "gamma": 1.0}],
        "psi0": {"theta": "pi/3", "phi": "pi/5"},
        "T": 1.0,
        "dt_values": [1e-2, 5e-3, 2.5e-3],
        "n_traj": 256,
        "seed": 7,
    },
    "stability_grid": {
        "experiment": "stability-scan",
        "delta_gammas": [-3.0, 0.5, 3.0],
        "thetas": ["pi/4", "pi/2", "3*pi/4"],
        "phi": "pi/4",
        "base_gamma": 1.0,
        "epsilon": 1e-3,
        "n_traj": 2000,
        "T": 1.5,
        "dt": 5e-3,
        "seed": 11,
    },
    "pure_measurement": {
        "experiment": "simulate",
        "scheme": "stratonovich",
        "channels": [{"op": "sigma_z", "gamma": 1.0}],
        "psi0": {"theta": "pi/3", "phi": 0.0},
        "T": 2.0,
        "n_steps": 2000,
        "n_traj": 20,
        "seed": 3,
    },
}

DEFAULT_PRESET = {
    ExperimentKind.SIMULATE: "pure_measurement",
    ExperimentKind.EQUIVALENCE: "equivalence_sigma_z",
    ExperimentKind.BORN_CHECK: "born",
    ExperimentKind.FEEDBACK_GS: "fig3",
    ExperimentKind.STATE_PREP: "fig4",
    ExperimentKind.STABILITY_SCAN: "stability_grid",
}

# keys that affect where or how fast a run executes, never its numbers
RUNTIME_KEYS = ("out", "workers", "max_csv")

NAMED_OPERATORS = {
    "sigma_minus": SIGMA_MINUS,
    "sigma_plus": SIGMA_PLUS,
    "sigma_z": SIGMA_Z,
    "sigma_x": SIGMA_X,
    "sigma_y": SIGMA_Y,
}


# ---------------------------------------------------------------------------
# parsing helpers

_BINOPS = {ast.Add: operator.add, ast.Sub: operator.sub, ast.Mult: operator.mul, ast.Div: operator.truediv}


def parse_real(value):
    """A number, or an arithmetic expression in ``pi`` such as ``"3*pi/4"``."""
    if isinstance(value, (int, float)) and not isinstance(value, bool):
        return float(value)
    if not isinstance(value, str):
        raise ConfigError(f"expected a number, got {value!r}")

    def ev(node):
        if isinstance(node, ast.Expression):
            return ev(node.body)
        if isinstance(node, ast.Constant) and isinstance(node.value, (int, float)):
            return float(node.value)
        if isinstance(node, ast.Name) and node.id == "pi":
            return math.pi
        if isinstance(node, ast.UnaryOp) and isinstance(node.op, (ast.USub, ast.UAdd)):
            v = ev(node.operand)
            return -v if isinstance(node.op, ast.USub) else v
        if isinstance(node, ast.BinOp) and type(node.op) in _BINOPS:
            return _BINOPS[type(node.op)](ev(node.left), ev(node.right))
        raise ConfigError(f"cannot parse number {value!r}")

    try:
        return ev(ast.parse(value, mode="eval"))
    except SyntaxError as exc:
        raise ConfigError(f"cannot parse number {value!r}") from exc


def load_matrix_file(path):
    """Read a JSON matrix stored row-major as ``[[[re, im], ...], ...]``."""
    try:
        with open(path) as fh:
            data = json.load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read matrix file {path}: {exc.strerror}") from exc
    except ValueError as exc:
        raise ConfigError(f"{path}: not valid JSON") from exc
    try:
        arr = np.asarray(data, dtype=float)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{path}: matrix entries must be [re, im] pairs") from exc
    if arr.ndim != 3 or arr.shape[-1] != 2 or arr.shape[0] != arr.shape[1]:
        raise ConfigError(f"{path}: expected a square array of [re, im] pairs, got shape {arr.shape}")
    m = arr[..., 0] + 1j * arr[..., 1]
    if not np.all(np.isfinite(m)):
        raise ConfigError(f"{path}: non-finite entries")
    return m


def save_matrix_file(path, m):
    m = np.asarray(m, dtype=complex)
    data = [[[float(z.real), float(z.imag)] for z in row] for row in m]
    with open(path, "w") as fh:
        json.dump(data, fh)


def parse_operator(spec, base_dir=None):
    """``sigma_*`` names, ``matrix:<file>`` or ``hermitian:<file>``."""
    if not isinstance(spec, str):
        raise ConfigError(f"operator spec must be a string, got {spec!r}")
    if spec in NAMED_OPERATORS:
        return NAMED_OPERATORS[spec].copy()
    kind, sep, path = spec.partition(":")
    if not sep or kind not in ("matrix", "hermitian"):
        raise ConfigError(f"unknown operator {spec!r}")
    p = Path(path)
    if base_dir is not None and not p.is_absolute():
        p = Path(base_dir) / p
    m = load_matrix_file(p)
    if kind == "hermitian" and np.linalg.norm(m - m.conj().T) > 1e-12 * max(1.0, np.linalg.norm(m)):
        raise ConfigError(f"{spec}: matrix is not Hermitian")
    return m


def parse_channels(specs, base_dir=None):
    if not isinstance(specs, list):
        raise ConfigError("channels must be a list")
    out = []
    for s in specs:
        if not isinstance(s, dict) or "op" not in s:
            raise ConfigError(f"channel entries need an 'op' key: {s!r}")
        gamma = parse_real(s.get("gamma", 1.0))
        if not gamma > 0:
            raise ConfigError(f"channel rate must be > 0, got {gamma}")
        out.append(JumpChannel(parse_operator(s["op"], base_dir), gamma))
    return out


def parse_h0(spec, dim, base_dir=None):
    """``None``, Pauli coefficients ``{x:, y:, z:}`` (qubit) or an operator spec."""
    if spec is None:
        return None
    if isinstance(spec, dict):
        if dim != 2:
            raise ConfigError("Pauli-coefficient H0 needs a qubit")
        unknown = set(spec) - {"x", "y", "z"}
        if unknown:
            raise ConfigError(f"unknown H0 keys {sorted(unknown)}")
        return sum(
            parse_real(spec.get(k, 0.0)) * m for k, m in (("x", SIGMA_X), ("y", SIGMA_Y), ("z", SIGMA_Z))
        )
    m = parse_operator(spec, base_dir)
    if np.linalg.norm(m - m.conj().T) > 1e-12 * max(1.0, np.linalg.norm(m)):
        raise ConfigError("H0 must be Hermitian")
    return m


def parse_state(spec, dim):
    """``"zero"``, ``"one"``, Bloch angles ``{theta:, phi:}`` or an amplitude list."""
    if spec == "zero":
        v = np.zeros(dim, complex)
        v[0] = 1
        return v
    if spec == "one":
        if dim != 2:
            raise ConfigError("'one' is a qubit state")
        return np.array([0, 1], dtype=complex)
    if isinstance(spec, dict):
        if dim != 2:
            raise ConfigError("Bloch angles need a qubit")
        return bloch_state(parse_real(spec.get("theta", 0.0)), parse_real(spec.get("phi", 0.0)))
    if isinstance(spec, list):
        amps = np.array([complex(*a) if isinstance(a, list) else complex(parse_real(a)) for a in spec])
        if amps.shape != (dim,):
            raise ConfigError(f"state has {len(amps)} amplitudes, expected {dim}")
        if np.linalg.norm(amps) == 0:
            raise ConfigError("state vector is zero")
        return normalize(amps)
    raise ConfigError(f"cannot parse state {spec!r}")


# ---------------------------------------------------------------------------
# configuration


@dataclass
class ExperimentConfig:
    """Validated view of a raw configuration mapping.

    ``params`` keeps the full merged mapping (echoed in the summary); the
    common run parameters are lifted into attributes.
    """

    experiment: ExperimentKind
    params: dict
    T: float | None = None
    n_steps: int | None = None
    n_traj: int = 1
    seed: int = 0
    out: str | None = None
    save_every: int = 1
    workers: int = 1
    chunk_size: int = 64
    base_dir: str | None = None

    @classmethod
    def from_mapping(cls, raw, base_dir=None):
        raw = dict(raw)
        preset = raw.pop("preset", None)
        merged = {}
        if preset is not None:
            if preset not in PRESETS:
                raise ConfigError(f"unknown preset {preset!r}; known: {sorted(PRESETS)}")
            merged.update(PRESETS[preset])
        merged.update(raw)
        if "experiment" not in merged:
            raise ConfigError("missing 'experiment'")
        try:
            kind = ExperimentKind(merged["experiment"])
        except ValueError as exc:
            raise ConfigError(f"unknown experiment {merged['experiment']!r}") from exc
        if preset is not None:
            merged["preset"] = preset

        T = merged.get("T")
        if T is not None:
            T = parse_real(T)
            if not T > 0:
                raise ConfigError("T must be > 0")
        n_steps = merged.get("n_steps")
        if merged.get("dt") is not None and T is not None and kind is not ExperimentKind.BORN_CHECK:
            dt = parse_real(merged["dt"])
            if not dt > 0:
                raise ConfigError("dt must be > 0")
            n_steps = int(round(T / dt))
            if abs(n_steps * dt - T) > 1e-9 * T:
                raise ConfigError(f"dt={dt} does not divide T={T}")
            merged["n_steps"] = n_steps
        if n_steps is not None:
            if int(n_steps) != n_steps or n_steps < 1:
                raise ConfigError("n_steps must be an integer >= 1")
            n_steps = int(n_steps)
        ints = {}
        for key, default, low in (("n_traj", 1, 1), ("save_every", 1, 1), ("workers", 1, 1), ("chunk_size", 64, 1)):
            v = merged.get(key, default)
            if isinstance(v, bool) or not isinstance(v, int) or v < low:
                raise ConfigError(f"{key} must be an integer >= {low}")
            ints[key] = v
        seed = merged.get("seed", 0)
        if isinstance(seed, bool) or not isinstance(seed, int) or not 0 <= seed < 2**64:
            raise ConfigError("seed must be an unsigned 64-bit integer")
        cfg = cls(kind, merged, T, n_steps, seed=seed, out=merged.get("out"), base_dir=base_dir, **ints)
        cfg._validate()
        return cfg

    def _need(self, *keys):
        for k in keys:
            if self.params.get(k) is None:
                raise ConfigError(f"{self.experiment.value} needs '{k}'")

    def _validate(self):
        kind = self.experiment
        if kind in (ExperimentKind.SIMULATE, ExperimentKind.STATE_PREP, ExperimentKind.FEEDBACK_GS):
            if self.T is None or self.n_steps is None:
                raise ConfigError(f"{kind.value} needs T and n_steps (or dt)")
        if kind in (ExperimentKind.SIMULATE, ExperimentKind.STATE_PREP, ExperimentKind.EQUIVALENCE):
            self._need("channels", "psi0")
            self.channels()
        if kind is ExperimentKind.SIMULATE:
            if self.params.get("scheme", "stratonovich") not in SCHEMES:
                raise ConfigError(f"unknown scheme; choose from {sorted(SCHEMES)}")
        if kind is ExperimentKind.STATE_PREP:
            self._need("target")
            if not self.channels():
                raise ConfigError("state-prep needs at least one channel")
        if kind is ExperimentKind.EQUIVALENCE:
            self._need("dt_values")
            if self.T is None:
                raise ConfigError("equivalence needs T")
        if kind is ExperimentKind.FEEDBACK_GS:
            self._need("n_values", "gamma")
            for n in self.params["n_values"]:
                if not isinstance(n, int) or n < 2 or n > 12 or n % 2:
                    raise ConfigError("n_values must be even integers in [2, 12]")
            if not parse_real(self.params["gamma"]) > 0:
                raise ConfigError("gamma must be > 0")
        if kind is ExperimentKind.BORN_CHECK:
            self._need("p0", "dt", "channels")
            p0 = parse_real(self.params["p0"])
            if not 0 <= p0 <= 1:
                raise ConfigError("p0 must lie in [0, 1]")
            if len(self.channels()) != 1 or np.linalg.norm(self.channels()[0].B) > 0:
                raise ConfigError("born-check needs exactly one Hermitian qubit channel")
        if kind is ExperimentKind.STABILITY_SCAN:
            self._need("delta_gammas", "thetas", "epsilon", "T", "n_steps")
            eps = parse_real(self.params["epsilon"])
            if not 0 < eps <= 0.1:
                raise ConfigError("epsilon must lie in (0, 0.1]")

    def channels(self):
        return parse_channels(self.params.get("channels", []), self.base_dir)

    @property
    def dt(self):
        return self.T / self.n_steps

    def echo(self):
        """JSON-friendly copy of the merged configuration without runtime-only keys."""
        params = {k: v for k, v in self.params.items() if k not in RUNTIME_KEYS}
        return json.loads(json.dumps(params, default=str))


def load_config(path=None, experiment=None, overrides=None):
    """Build a config from a YAML file and/or the experiment's default preset.

    ``overrides`` (e.g. from command-line flags) win over the file, which
    wins over the preset.  When no file is given the default preset of
    ``experiment`` is used.
    """
    raw = {}
    base_dir = None
    if path is not None:
        if not Path(path).is_file():
            raise ConfigError(f"config file {path} not found")
        with open(path) as fh:
            try:
                raw = yaml.safe_load(fh) or {}
            except yaml.YAMLError as exc:
                raise ConfigError(f"{path}: {exc}") from exc
        if not isinstance(raw, dict):
            raise ConfigError(f"{path}: top level must be a mapping")
        base_dir = str(Path(path).resolve().parent)
    if experiment is not None:
        kind = ExperimentKind(experiment)
        if "experiment" in raw and raw["experiment"] != kind.value:
            raise ConfigError(f"config is for {raw['experiment']!r}, command is {kind.value!r}")
        raw.setdefault("experiment", kind.value)
        if path is None or ("preset" not in raw and not _self_contained(raw)):
            raw.setdefault("preset", DEFAULT_PRESET[kind])
    for k, v in (overrides or {}).items():
        if v is not None:
            raw[k] = v
    return ExperimentConfig.from_mapping(raw, base_dir)


def _self_contained(raw):
    """Whether a config file carries its own model rather than relying on a preset."""
    return any(k in raw for k in ("channels", "n_values", "delta_gammas"))


# ---------------------------------------------------------------------------
# results


@dataclass
class TrajectoryResult:
    index: int
    times: np.ndarray
    observables: dict = field(default_factory=dict)
    seed: int = 0
    terminal_state_summary: dict = field(default_factory=dict)

    def columns(self):
        return ["t"] + list(self.observables)

    def to_csv(self, path):
        data = np.column_stack([self.times] + [np.asarray(v, dtype=float) for v in self.observables.values()])
        np.savetxt(path, data, delimiter=",", header=",".join(self.columns()), comments="", fmt="%.17g")


@dataclass
class ExperimentOutput:
    config: ExperimentConfig
    trajectories: list
    results: dict

    def summary(self):
        terminal = {name: describe(v) for name, v in self.results.get("_terminal", {}).items()}
        results = {k: v for k, v in self.results.items() if k != "_terminal"}
        return {
            "format_version": FORMAT_VERSION,
            "experiment": self.config.experiment.value,
            "config": self.config.echo(),
            "seeds": {"master_seed": self.config.seed, "trajectories": [t.index for t in self.trajectories]},
            "terminal": terminal,
            "results": _jsonable(results),
        }


def _jsonable(x):
    if isinstance(x, dict):
        return {str(k): _jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_jsonable(v) for v in x]
    if isinstance(x, np.ndarray):
        return _jsonable(x.tolist())
    if isinstance(x, (np.bool_, bool)):
        return bool(x)
    if isinstance(x, (np.integer,)):
        return int(x)
    if isinstance(x, (float, np.floating)):
        x = float(x)
        return x if math.isfinite(x) else str(x)
    return x


# ---------------------------------------------------------------------------
# ensemble plumbing


def _chunks(n_traj, size):
    return [list(range(s, min(s + size, n_traj))) for s in range(0, n_traj, size)]


def _map_chunks(fn, cfg, n_traj):
    chunks = _chunks(n_traj, cfg.chunk_size)
    if cfg.workers > 1 and len(chunks) > 1:
        with ThreadPoolExecutor(cfg.workers) as pool:
            parts = list(pool.map(fn, chunks))
    else:
        parts = [fn(c) for c in chunks]
    return [r for part in parts for r in part]


def _check_states(rho, what):
    if not np.all(np.isfinite(rho)):
        raise InvariantViolation(f"{what}: non-finite state")
    if np.max(purity_defect(rho)) > 1e-6:
        raise InvariantViolation(f"{what}: purity defect {np.max(purity_defect(rho)):.3g} exceeds 1e-6")


def _dominant(rho, basis):
    """Index of the basis vector carrying the most weight, and that weight."""
    pops = np.einsum("ia,ij,ja->a", basis.conj(), rho, basis).real
    j = int(np.argmax(pops))
    return {"dominant_index": j, "dominant_weight": float(pops[j])}


def _save_grid(n_steps, save_every):
    idx = np.arange(0, n_steps + 1, save_every)
    if idx[-1] != n_steps:
        idx = np.append(idx, n_steps)
    return idx


# ---------------------------------------------------------------------------
# SIMULATE


def _scheme_sse(state, H0, channels, dt, dW):
    return ito_sse_step(state, H0, channels, dt, dW)


def _scheme_sme(state, H0, channels, dt, dW):
    return ito_sme_step(state, H0, channels, dt, dW, check=False)


def _scheme_strato(state, H0, channels, dt, dW):
    return stratonovich_step(state, H0, channels, dt, dW)


SCHEMES = {"ito_sse": _scheme_sse, "ito_sme": _scheme_sme, "stratonovich": _scheme_strato}


def _observe(rho, H0, channels, target):
    obs = {}
    if rho.shape[-1] == 2:
        b = bloch_coords(rho)
        obs.update(mx=b[..., 0], my=b[..., 1], mz=b[..., 2])
    if H0 is not None:
        obs["energy"] = expect(H0, rho)
    for a, ch in enumerate(channels):
        obs[f"V_{a}"] = potential_V(ch, rho)
    if target is not None:
        obs["infidelity"] = 1 - expect(target, rho)
    return obs


def _run_batch(cfg, H0, channels, psi0, target, indices, step):
    """Shared loop for SIMULATE and STATE_PREP; ``step(rho_or_psi, dW)``."""
    n, dt, n_steps = len(indices), cfg.dt, cfg.n_steps
    gammas = [ch.gamma for ch in channels]
    keep = _save_grid(n_steps, cfg.save_every)
    streams = [WienerStream(cfg.seed, dt, gammas, k) for k in indices] if channels else None
    dW_all = np.stack([s.draw(n_steps) for s in streams]) if channels else np.zeros((n, 0, n_steps))
    vector = cfg.params.get("scheme") == "ito_sse"
    d = len(psi0)
    state = np.broadcast_to(psi0 if vector else projector(psi0), (n,) + ((d,) if vector else (d, d))).copy()
    series = {}
    y = np.zeros((n, len(channels)))
    y_series = np.zeros((len(keep), n, len(channels)))

    def record(slot, state):
        rho = projector(state) if vector else state
        for name, v in _observe(rho, H0, channels, target).items():
            series.setdefault(name, np.zeros((len(keep), n)))[slot] = v
        y_series[slot] = y

    slot = 0
    record(0, state)
    slot = 1
    for k in range(n_steps):
        dW = dW_all[:, :, k]
        rho = projector(state) if vector else state
        y = y + record_increments(channels, rho, dt, dW)
        state = step(state, dW)
        if slot < len(keep) and keep[slot] == k + 1:
            if not vector:
                _check_states(state, f"step {k + 1}")
            record(slot, state)
            slot += 1
    if not np.all(np.isfinite(state)):
        raise InvariantViolation("non-finite state at the end of the run")
    times = keep * dt
    rho_end = projector(state) if vector else state
    basis = np.linalg.eigh(channels[0].A if channels else (H0 if H0 is not None else np.eye(d)))[1]
    out = []
    for i, idx in enumerate(indices):
        obs = {name: v[:, i] for name, v in series.items()}
        for a in range(len(channels)):
            obs[f"y_{a}"] = y_series[:, i, a]
        out.append(TrajectoryResult(idx, times, obs, cfg.seed, _dominant(rho_end[i], basis)))
    return out


def run_simulate(cfg):
    channels = cfg.channels()
    d = channels[0].dim if channels else 2
    H0 = parse_h0(cfg.params.get("h0"), d, cfg.base_dir)
    psi0 = parse_state(cfg.params["psi0"], d)
    target = cfg.params.get("target")
    Q = projector(parse_state(target, d)) if target is not None else None
    stepper = SCHEMES[cfg.params.get("scheme", "stratonovich")]

    def chunk(indices):
        return _run_batch(cfg, H0, channels, psi0, Q, indices, lambda s, dW: stepper(s, H0, channels, cfg.dt, dW))

    trajs = _map_chunks(chunk, cfg, cfg.n_traj)
    terminal = {name: [t.observables[name][-1] for t in trajs] for name in trajs[0].observables}
    results = {"_terminal": terminal, "dominant_index_counts": _count([t.terminal_state_summary["dominant_index"] for t in trajs])}
    return ExperimentOutput(cfg, trajs, results)


def _count(values):
    out = {}
    for v in sorted(values):
        out[str(v)] = out.get(str(v), 0) + 1
    return out


# ---------------------------------------------------------------------------
# STATE_PREP


def run_state_prep(cfg):
    channels = cfg.channels()
    d = channels[0].dim
    psi0 = parse_state(cfg.params["psi0"], d)
    Q = projector(parse_state(cfg.params["target"], d))

    def chunk(indices):
        return _run_batch(
            cfg, None, channels, psi0, Q, indices, lambda s, dW: state_agnostic_step(s, channels, Q, cfg.dt, dW)
        )

    trajs = _map_chunks(chunk, cfg, cfg.n_traj)
    infid = np.array([t.observables["infidelity"][-1] for t in trajs])
    results = {
        "_terminal": {"infidelity": infid},
        "mean_infidelity": float(infid.mean()),
        "median_infidelity": float(np.median(infid)),
    }
    if d == 2:
        q = parse_state(cfg.params["target"], d)
        rep = lyapunov_criterion(channels, q)
        results["lyapunov"] = {"criterion": rep.lyapunov_sum, "verdict": rep.stable, "timescale": rep.timescale_estimate}
    return ExperimentOutput(cfg, trajs, results)


# ---------------------------------------------------------------------------
# FEEDBACK_GS


def run_feedback_gs(cfg):
    gamma = parse_real(cfg.params["gamma"])
    offset = parse_real(cfg.params.get("offset", 0.0))
    keep = _save_grid(cfg.n_steps, cfg.save_every)
    trajs, per_n = [], {}
    for i, n in enumerate(cfg.params["n_values"]):
        H0 = heisenberg_hamiltonian(n, offset)
        run = run_groundstate_flow(H0, singlet_product_state(n), gamma, cfg.T, cfg.n_steps)
        err = np.abs(run["energy_error"])
        floor = np.finfo(float).eps * np.linalg.norm(H0, 2)
        try:
            fit = fit_exponential(run["times"], err, floor=floor)
            fit_info = {"rate": fit.rate, "r_squared": fit.r_squared, "n_points": fit.n_points}
        except ValueError as exc:
            fit_info = {"error": str(exc)}
        obs = {k: run[k][keep] for k in ("energy", "energy_error", "h0_sq", "ground_population")}
        trajs.append(TrajectoryResult(i, run["times"][keep], obs, cfg.seed, {"n": n, "E0": run["E0"]}))
        per_n[str(n)] = {
            "E0": run["E0"],
            "terminal_energy_error": float(err[-1]),
            "terminal_ground_population": float(run["ground_population"][-1]),
            "h0_sq_non_increasing": bool(np.all(np.diff(run["h0_sq"]) <= 1e-12)),
            "fit": fit_info,
        }
    results = {
        "_terminal": {"energy_error": [v["terminal_energy_error"] for v in per_n.values()]},
        "per_n": per_n,
        "max_terminal_energy_error": max(v["terminal_energy_error"] for v in per_n.values()),
    }
    return ExperimentOutput(cfg, trajs, results)


# ---------------------------------------------------------------------------
# EQUIVALENCE


def run_equivalence(cfg):
    channels = cfg.channels()
    d = channels[0].dim if channels else 2
    H0 = parse_h0(cfg.params.get("h0"), d, cfg.base_dir)
    psi0 = parse_state(cfg.params["psi0"], d)
    dt_values = [parse_real(x) for x in cfg.params["dt_values"]]
    try:
        rep = check_formulation_equivalence(H0, channels, psi0, cfg.T, dt_values, cfg.seed, n_paths=cfg.n_traj)
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    trajs = [
        TrajectoryResult(p, np.array(rep.dt_values), {"max_trace_distance": rep.per_path[:, p]}, cfg.seed)
        for p in range(rep.per_path.shape[1])
    ]
    results = {
        "dt_values": rep.dt_values,
        "max_trace_distance": rep.max_trace_distance,
        "estimated_order": rep.estimated_order,
        "monotone": rep.monotone,
    }
    return ExperimentOutput(cfg, trajs, results)


# ---------------------------------------------------------------------------
# BORN_CHECK


def run_born_check(cfg):
    """Pure measurement of a Hermitian qubit observable until every trajectory collapses."""
    (ch,) = cfg.channels()
    p0 = parse_real(cfg.params["p0"])
    dt = parse_real(cfg.params["dt"])
    tol = parse_real(cfg.params.get("variance_tol", 1e-6))
    max_steps = int(round(parse_real(cfg.params.get("max_T", 40.0)) / dt))
    every = int(cfg.params.get("check_every", 500))
    w, v = np.linalg.eigh(ch.A)
    top = v[:, -1]  # eigenvector of the largest eigenvalue plays the role of |0>
    psi0 = np.sqrt(p0) * top + np.sqrt(1 - p0) * v[:, 0]
    A2 = ch.A @ ch.A

    def chunk(indices):
        n = len(indices)
        streams = [WienerStream(cfg.seed, dt, [ch.gamma], k) for k in indices]
        psi = np.broadcast_to(psi0, (n, 2)).copy()
        collapse_step = np.full(n, -1)
        steps = 0
        marks, means = [0], [expect_vec(ch.A, psi)]
        while steps < max_steps:
            dW = np.stack([s.draw(every) for s in streams])
            for k in range(every):
                psi = ito_sse_step(psi, None, [ch], dt, dW[:, :, k])
            steps += every
            m = expect_vec(ch.A, psi)
            var = expect_vec(A2, psi) - m**2
            collapse_step[(var < tol) & (collapse_step < 0)] = steps
            marks.append(steps)
            means.append(m)
            if np.all(collapse_step >= 0):
                break
        if not np.all(np.isfinite(psi)):
            raise InvariantViolation("non-finite state")
        pops = np.abs(psi @ top.conj()) ** 2
        means = np.array(means)
        times = np.array(marks) * dt
        return [
            TrajectoryResult(
                idx,
                times,
                {"mean_A": means[:, i]},
                cfg.seed,
                {"collapsed": bool(collapse_step[i] >= 0), "collapse_time": float(collapse_step[i] * dt), "p_top": float(pops[i])},
            )
            for i, idx in enumerate(indices)
        ]

    trajs = _map_chunks(chunk, cfg, cfg.n_traj)
    collapsed = np.array([t.terminal_state_summary["collapsed"] for t in trajs])
    to_top = np.array([t.terminal_state_summary["p_top"] > 0.5 for t in trajs])
    frac = float(to_top.mean())
    n = len(trajs)
    tol_frac = 4 * math.sqrt(p0 * (1 - p0) / n)
    results = {
        "_terminal": {"collapse_time": [t.terminal_state_summary["collapse_time"] for t in trajs]},
        "p0": p0,
        "all_collapsed": bool(collapsed.all()),
        "fraction_top": frac,
        "tolerance": tol_frac,
        "within_tolerance": bool(abs(frac - p0) <= tol_frac),
    }
    if not collapsed.all():
        raise InvariantViolation(f"{int((~collapsed).sum())} trajectories did not collapse within max_T")
    return ExperimentOutput(cfg, trajs, results)


# ---------------------------------------------------------------------------
# STABILITY_SCAN


def stability_cell(delta_gamma, theta, phi, base_gamma, epsilon, n_traj, T, dt, seed):
    """Analytic criterion and Monte Carlo rate for one dual-channel qubit setting."""
    if delta_gamma >= 0:
        gp, gm = base_gamma + delta_gamma, base_gamma
    else:
        gp, gm = base_gamma, base_gamma - delta_gamma
    channels = dual_channel_qubit(gp, gm)
    q = bloch_state(theta, phi)
    rep = lyapunov_criterion(channels, q, qubit_orthogonal(q))
    cell = {
        "delta_gamma": delta_gamma,
        "theta": theta,
        "phi": phi,
        "gamma_plus": gp,
        "gamma_minus": gm,
        "criterion": rep.lyapunov_sum,
        "verdict": rep.stable,
        "predicted_rate": 2 * rep.lyapunov_sum,
    }
    probe = None
    if rep.stable != "marginal":
        probe = empirical_stability_probe(channels, q, epsilon, n_traj, T, dt, seed)
        ratio = probe["rate"] / (2 * rep.lyapunov_sum)
        cell.update(
            fitted_rate=probe["rate"],
            r_squared=probe["r_squared"],
            sign_agrees=probe["sign_agrees"],
            rate_ratio=ratio,
            within_factor_3=bool(1 / 3 <= ratio <= 3),
        )
    return cell, probe


def run_stability_scan(cfg):
    p = cfg.params
    phi = parse_real(p.get("phi", 0.0))
    base = parse_real(p.get("base_gamma", 1.0))
    eps = parse_real(p["epsilon"])
    settings = [(parse_real(dg), parse_real(th)) for dg in p["delta_gammas"] for th in p["thetas"]]

    def one(i):
        dg, th = settings[i]
        return stability_cell(dg, th, phi, base, eps, cfg.n_traj, cfg.T, cfg.dt, cfg.seed)

    if cfg.workers > 1:
        with ThreadPoolExecutor(cfg.workers) as pool:
            cells = list(pool.map(one, range(len(settings))))
    else:
        cells = [one(i) for i in range(len(settings))]
    trajs = []
    for i, (cell, probe) in enumerate(cells):
        if probe is not None:
            trajs.append(TrajectoryResult(i, probe["times"], {"mean_eps": probe["mean_eps"]}, cfg.seed, {}))
    checked = [c for c, _ in cells if c["verdict"] != "marginal"]
    results = {
        "cells": [c for c, _ in cells],
        "all_signs_agree": all(c["sign_agrees"] for c in checked),
        "all_within_factor_3": all(c["within_factor_3"] for c in checked),
    }
    return ExperimentOutput(cfg, trajs, results)


# ---------------------------------------------------------------------------
# entry points

RUNNERS = {
    ExperimentKind.SIMULATE: run_simulate,
    ExperimentKind.EQUIVALENCE: run_equivalence,
    ExperimentKind.BORN_CHECK: run_born_check,
    ExperimentKind.FEEDBACK_GS: run_feedback_gs,
    ExperimentKind.STATE_PREP: run_state_prep,
    ExperimentKind.STABILITY_SCAN: run_stability_scan,
}


def run_experiment(cfg):
    """Run ``cfg`` and return an :class:`ExperimentOutput` (nothing is written)."""
    return RUNNERS[cfg.experiment](cfg)


def write_outputs(output, out_dir, max_csv=None):
    """Write ``traj_<idx>.csv`` files and ``summary.json``; returns the summary."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    trajs = sorted(output.trajectories, key=lambda t: t.index)
    limit = len(trajs) if max_csv is None else max_csv
    for t in trajs[:limit]:
        t.to_csv(out_dir / f"traj_{t.index}.csv")
    summary = output.summary()
    summary["seeds"]["trajectories"] = [t.index for t in trajs]
    tmp = out_dir / "summary.json.tmp"
    with open(tmp, "w") as fh:
        json.dump(summary, fh, indent=2, sort_keys=True, allow_nan=False)
        fh.write("\n")
    os.replace(tmp, out_dir / "summary.json")
    return summary


def load_schema():
    with open(SCHEMA_PATH) as fh:
        return json.load(fh)
