"""Stochastic Hamiltonians that reproduce monitored pure-state dynamics.

For a channel ``C = A + B`` (Hermitian plus anti-Hermitian part) and record
increment ``dy = 2 gamma <A> dt + dW``, the Stratonovich dynamics is the
Liouville equation ``d rho = -i [dH, rho]`` with

    dH    = dH_SB + i [dH_DB, rho]
    dH_SB = H0 dt - i gamma/2 {A, B} dt + i B dy
    dH_DB = -gamma A^2 dt - gamma/2 [A, B] dt + A dy

Several channels contribute additively (``H0`` is counted once).
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field

import numpy as np

from .core import (
    DEFAULT_TOL_PURITY,
    DimensionError,
    ParameterError,
    anticommutator,
    check_pure,
    commutator,
    dagger,
    hermitize,
    projector,
    trace_distance,
)
from .sde import heun_liouville_step, ito_sme_step, record_increments, sample_noise_path


class Driver(enum.Enum):
    BY_DY = "dy"
    BY_DW = "dW"


def _scalar(x):
    """Broadcast a (batched) scalar against trailing matrix axes."""
    return np.asarray(x)[..., None, None]


@dataclass
class GeneratorIncrement:
    """``dO = M dt + sum_a Sigma_a d(driver)_a``."""

    deterministic: np.ndarray
    stochastic: list = field(default_factory=list)
    driver: Driver = Driver.BY_DY

    def assemble(self, dt, increments):
        increments = np.asarray(increments, dtype=float)
        out = self.deterministic * dt
        for a, sigma in enumerate(self.stochastic):
            out = out + sigma * _scalar(increments[..., a])
        return out


def _check_dim(channel, *ops):
    for op in ops:
        if op is not None and np.shape(op)[-1] != channel.dim:
            raise DimensionError(f"dimension mismatch: channel {channel.dim}, operator {np.shape(op)[-1]}")


def build_H_SB(channel, H0, dt, dy):
    """Single-bracket increment ``H0 dt - i gamma/2 {A,B} dt + i B dy``."""
    _check_dim(channel, H0)
    A, B = channel.A, channel.B
    out = -0.5j * channel.gamma * anticommutator(A, B) * dt + 1j * B * _scalar(dy)
    if H0 is not None:
        out = out + H0 * dt
    return out


def build_H_DB(channel, dt, dy):
    """Double-bracket increment ``-gamma A^2 dt - gamma/2 [A,B] dt + A dy``."""
    A, B = channel.A, channel.B
    return -channel.gamma * (A @ A) * dt - 0.5 * channel.gamma * commutator(A, B) * dt + A * _scalar(dy)


def build_H_M(channel, rho, dy_rate, tol_purity=DEFAULT_TOL_PURITY):
    """Measurement Hamiltonian ``i([A, rho] + B) dy/dt``."""
    rho = check_pure(rho, tol_purity)
    _check_dim(channel, rho)
    return 1j * (commutator(channel.A, rho) + channel.B) * _scalar(dy_rate)


def build_H_D(channel, rho, tol_purity=DEFAULT_TOL_PURITY):
    """Dissipation Hamiltonian ``-i gamma/2 ([{A, C}_c, rho] + (C^2 - C^dag^2)/2)``."""
    rho = check_pure(rho, tol_purity)
    _check_dim(channel, rho)
    C, A = channel.C, channel.A
    ac = A @ C
    sym = ac + dagger(ac)
    return -0.5j * channel.gamma * (commutator(sym, rho) + 0.5 * (C @ C - dagger(C) @ dagger(C)))


def liouville_increment(channels, H0, rho):
    """Drift and per-channel ``dy`` coefficients of the Liouville generator at ``rho``."""
    d = rho.shape[-1]
    M = np.zeros_like(rho) if H0 is None else np.broadcast_to(H0, rho.shape).astype(complex)
    sigmas = []
    for ch in channels:
        if ch.dim != d:
            raise DimensionError(f"channel has dimension {ch.dim}, state has {d}")
        A, B = ch.A, ch.B
        db_drift = -ch.gamma * (A @ A) - 0.5 * ch.gamma * commutator(A, B)
        M = M - 0.5j * ch.gamma * anticommutator(A, B) + 1j * commutator(db_drift, rho)
        sigmas.append(1j * B + 1j * commutator(A, rho))
    return GeneratorIncrement(M, sigmas, Driver.BY_DY)


def liouville_hamiltonian(channels, H0, rho, dt, dy, tol_purity=DEFAULT_TOL_PURITY, check=True):
    """``dH = sum_a (dH_SB + i [dH_DB, rho])`` with ``H0 dt`` counted once."""
    if check:
        rho = check_pure(rho, tol_purity)
    return hermitize(liouville_increment(list(channels), H0, rho).assemble(dt, dy))


def measurement_generator(channels, H0):
    """Generator for ``heun_liouville_step``; ``data = (dt, dW)``.

    The record entering ``dH`` is computed from the state the generator is
    evaluated at (the midpoint in the corrector), plus the shared ``dW``.
    """
    channels = list(channels)

    def generator(rho, data):
        dt, dW = data
        dy = record_increments(channels, rho, dt, dW)
        return liouville_hamiltonian(channels, H0, rho, dt, dy, check=False)

    return generator


def stratonovich_step(rho, H0, channels, dt, dW, unitary=True):
    return heun_liouville_step(rho, measurement_generator(channels, H0), (dt, dW), unitary=unitary)


def final_strato_increment(channel, H0, rho, dt, dy):
    """Direct term-by-term expansion of the Stratonovich increment (single channel)."""
    A, B, g = channel.A, channel.B, channel.gamma
    dyx = _scalar(dy)

    def dbl(x):
        return commutator(commutator(x, rho), rho)

    out = (
        -g * dbl(A @ A) * dt
        + dbl(A) * dyx
        - 0.5 * g * dbl(commutator(A, B)) * dt
        - 0.5 * g * commutator(anticommutator(A, B), rho) * dt
        + commutator(B, rho) * dyx
    )
    if H0 is not None:
        out = out - 1j * commutator(H0, rho) * dt
    return out


# ---------------------------------------------------------------------------
# equivalence study


@dataclass
class EquivalenceReport:
    dt_values: list
    max_trace_distance: list  # mean over paths of the per-path max over time
    estimated_order: float
    per_path: np.ndarray  # (n_dt, n_paths)

    @property
    def monotone(self):
        d = np.asarray(self.max_trace_distance)
        return bool(np.all(np.diff(d) < 0))


def _n_steps(T, dt):
    n = T / dt
    if abs(n - round(n)) > 1e-9 * max(1.0, n) or round(n) < 1:
        raise ParameterError(f"dt={dt} does not divide T={T}")
    return int(round(n))


def run_pair(H0, channels, psi0, dt, increments):
    """Run the Ito SME chain and the Liouville chain on the same increments.

    ``increments`` has shape ``(n_paths, n_channels, n_steps)``.  Returns the
    trace-distance series, shape ``(n_paths, n_steps + 1)``.
    """
    n_paths, _, n_steps = increments.shape
    rho0 = np.broadcast_to(projector(psi0), (n_paths,) + (len(psi0),) * 2).copy()
    rho_ito = rho0.copy()
    rho_str = rho0.copy()
    dist = np.zeros((n_paths, n_steps + 1))
    for k in range(n_steps):
        dW = increments[:, :, k]
        rho_ito = ito_sme_step(rho_ito, H0, channels, dt, dW, check=False)
        rho_str = stratonovich_step(rho_str, H0, channels, dt, dW)
        dist[:, k + 1] = trace_distance(rho_ito, rho_str)
    return dist


def check_formulation_equivalence(H0, channels, psi0, T, dt_values, seed, n_paths=256):
    """Pathwise comparison of the Ito SME and the Liouville formulation.

    For every ``dt`` both chains are driven by the same Brownian paths
    (sampled on the finest grid and summed up for coarser ones).  The
    reported error for each ``dt`` is the path-average of
    ``max_t trace_distance``; the estimated strong order is the slope of
    ``log(error)`` against ``log(dt)``.
    """
    channels = list(channels)
    dt_values = sorted((float(x) for x in dt_values), reverse=True)
    if len(dt_values) < 2:
        raise ParameterError("need at least two dt values")
    d = len(psi0)
    if H0 is not None and np.shape(H0)[-1] != d:
        raise DimensionError("H0 and psi0 dimensions differ")
    dt_min = dt_values[-1]
    n_fine = _n_steps(T, dt_min)
    for dt in dt_values:
        _n_steps(T, dt)
        if abs(dt / dt_min - round(dt / dt_min)) > 1e-9:
            raise ParameterError("dt values must be integer multiples of the finest one")
    gammas = [ch.gamma for ch in channels] or [1.0]
    paths = [sample_noise_path(seed, dt_min, n_fine, gammas, trajectory=p) for p in range(n_paths)]
    per_path = []
    for dt in dt_values:
        factor = int(round(dt / dt_min))
        inc = np.stack([p.coarsen(factor).increments for p in paths])
        if not channels:
            inc = inc[:, :0, :]
        per_path.append(run_pair(H0, channels, psi0, dt, inc).max(axis=1))
    per_path = np.array(per_path)
    errors = per_path.mean(axis=1)
    with np.errstate(divide="ignore"):
        slope = np.polyfit(np.log(dt_values), np.log(np.maximum(errors, 1e-300)), 1)[0]
    return EquivalenceReport(dt_values, errors.tolist(), float(slope), per_path)
