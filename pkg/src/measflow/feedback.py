"""Feedback protocols built on the Hamiltonian form of monitored dynamics.

Two protocols are covered:

* noise-cancelling feedback with ``A = H0``, which leaves the deterministic
  double-bracket flow ``d rho/dt = -i[H0, rho] - gamma [[H0^2, rho], rho]``
  whose stable fixed point is the ground state of ``H0``;
* state-agnostic feedback towards a pure target ``Q``, giving
  ``d rho = [[dH_DB, rho - Q], rho]`` summed over channels.
"""

from __future__ import annotations

import enum
import warnings
from dataclasses import dataclass

import numpy as np

from .core import (
    DEFAULT_TOL_PURITY,
    SIGMA_MINUS,
    SIGMA_PLUS,
    JumpChannel,
    ParameterError,
    StateError,
    check_pure,
    commutator,
    expect,
    expect_vec,
    fix_state,
    normalize,
    projector,
    purify,
    purity_defect,
    qubit_orthogonal,
)
from .hamiltonian import build_H_DB
from .sde import heun_liouville_step, record_increments, sample_noise_batch
from .stats import fit_exponential


class FeedbackKind(enum.Enum):
    NONE = "none"
    NOISE_CANCEL_GS = "noise_cancel_gs"
    STATE_AGNOSTIC = "state_agnostic"


@dataclass
class FeedbackSpec:
    kind: FeedbackKind = FeedbackKind.NONE
    target: np.ndarray | None = None

    def __post_init__(self):
        if self.kind is FeedbackKind.STATE_AGNOSTIC:
            if self.target is None:
                raise ParameterError("state-agnostic feedback needs a target")
            check_pure(self.target, name="target")


# ---------------------------------------------------------------------------
# ground-state double-bracket flow


def db_groundstate_rhs(state, H0, gamma, H0_sq=None):
    """Right-hand side of the flow for a state vector or a density matrix."""
    H0_sq = H0 @ H0 if H0_sq is None else H0_sq
    if state.ndim == 1:
        h2 = H0_sq @ state
        return -1j * (H0 @ state) - gamma * (h2 - np.vdot(state, h2).real * state)
    return -1j * commutator(H0, state) - gamma * commutator(commutator(H0_sq, state), state)


def db_groundstate_step(state, H0, gamma, dt, H0_sq=None, purity_tol=1e-9):
    """One classical RK4 step of the feedback-induced double-bracket flow.

    ``state`` may be a normalized vector (the flow then reads
    ``dpsi/dt = -i H0 psi - gamma (H0^2 - <H0^2>) psi``) or a pure density
    matrix.  Vectors are renormalized; matrices are Hermitized,
    trace-fixed, and re-projected onto the pure states when the purity
    defect exceeds ``purity_tol``.
    """
    H0_sq = H0 @ H0 if H0_sq is None else H0_sq

    def f(x):
        return db_groundstate_rhs(x, H0, gamma, H0_sq)

    k1 = f(state)
    k2 = f(state + 0.5 * dt * k1)
    k3 = f(state + 0.5 * dt * k2)
    k4 = f(state + dt * k3)
    out = state + dt / 6 * (k1 + 2 * k2 + 2 * k3 + k4)
    if out.ndim == 1:
        return normalize(out)
    out = fix_state(out)
    if purity_defect(out) > purity_tol:
        out = purify(out)
    return out


def ground_projector(H0, rtol=1e-9):
    w, v = np.linalg.eigh(H0)
    tol = rtol * max(1.0, np.abs(w).max())
    vecs = v[:, np.abs(w - w[0]) <= tol]
    return w[0], vecs @ vecs.conj().T


def run_groundstate_flow(H0, psi0, gamma, T, n_steps):
    """Integrate the flow from ``psi0`` and record energy diagnostics.

    Returns a dict of arrays: ``times``, ``energy``, ``energy_error``
    (``<H0> - E0``), ``h0_sq`` and ``ground_population``, plus the final
    state and ``E0``.
    """
    E0, P0 = ground_projector(H0)
    psi = normalize(psi0)
    if expect_vec(P0, psi) < 1e-14:
        warnings.warn("initial state has no overlap with the ground space; convergence is not guaranteed")
    H0_sq = H0 @ H0
    dt = T / n_steps
    energy = np.empty(n_steps + 1)
    h0_sq = np.empty(n_steps + 1)
    pop = np.empty(n_steps + 1)

    def record(k, x):
        energy[k] = expect_vec(H0, x)
        h0_sq[k] = expect_vec(H0_sq, x)
        pop[k] = expect_vec(P0, x)

    record(0, psi)
    for k in range(n_steps):
        psi = db_groundstate_step(psi, H0, gamma, dt, H0_sq)
        record(k + 1, psi)
    return {
        "times": np.linspace(0.0, T, n_steps + 1),
        "energy": energy,
        "energy_error": energy - E0,
        "h0_sq": h0_sq,
        "ground_population": pop,
        "E0": float(E0),
        "state": psi,
    }


@dataclass
class PopulationRates:
    energies: np.ndarray
    populations: np.ndarray
    rates: np.ndarray  # d<Pi_j>/dt
    relative_rates: np.ndarray  # d log<Pi_j>/dt = -2 gamma (E_j^2 - <H0^2>)


def eigenspaces(H0, rtol=1e-9):
    """Eigenvalues with degenerate ones grouped, and the matching projectors."""
    w, v = np.linalg.eigh(H0)
    tol = rtol * max(1.0, np.abs(w).max())
    groups = [[0]]
    for j in range(1, len(w)):
        if abs(w[j] - w[groups[-1][0]]) <= tol:
            groups[-1].append(j)
        else:
            groups.append([j])
    energies = np.array([w[g].mean() for g in groups])
    projectors = [v[:, g] @ v[:, g].conj().T for g in groups]
    return energies, projectors


def population_rates(rho, H0, gamma, rtol=1e-9):
    """Analytic rates ``d<Pi_j>/dt = -2 gamma <Pi_j> (E_j^2 - <H0^2>)``."""
    if rho.ndim == 1:
        rho = projector(rho)
    energies, projectors = eigenspaces(H0, rtol)
    pops = np.array([expect(P, rho) for P in projectors])
    h2 = expect(H0 @ H0, rho)
    rel = -2 * gamma * (energies**2 - h2)
    return PopulationRates(energies, pops, pops * rel, rel)


# ---------------------------------------------------------------------------
# state-agnostic feedback


def state_agnostic_increment(rho, channels, Q, dt, dy):
    """``[[dH_DB, rho - Q], rho]`` summed over channels, evaluated at ``rho``."""
    dy = np.asarray(dy, dtype=float)
    dH = sum(build_H_DB(ch, dt, dy[..., a]) for a, ch in enumerate(channels))
    return commutator(commutator(dH, rho - Q), rho)


def state_agnostic_generator(channels, Q):
    """Liouville generator ``dH = i [dH_DB, rho - Q]``; ``data = (dt, dW)``.

    The record ``dy_a = 2 gamma_a <A_a> dt + dW_a`` is evaluated at the state
    handed to the generator.
    """
    channels = list(channels)

    def generator(rho, data):
        dt, dW = data
        dy = record_increments(channels, rho, dt, dW)
        dH = sum(build_H_DB(ch, dt, dy[..., a]) for a, ch in enumerate(channels))
        return 1j * commutator(dH, rho - Q)

    return generator


def state_agnostic_step(rho, channels, Q, dt, dW, tol_purity=DEFAULT_TOL_PURITY, check=True):
    """Stratonovich midpoint step of the state-agnostic feedback dynamics."""
    if check:
        Q = check_pure(Q, tol_purity, "Q")
    return heun_liouville_step(rho, state_agnostic_generator(channels, Q), (dt, dW))


def run_state_agnostic(channels, Q, psi0, T, n_steps, seed, n_traj, trajectories=None):
    """Batch of feedback trajectories; returns ``times``, states ``(n_traj, n_steps+1, d, d)``
    and the record increments ``(n_traj, n_channels, n_steps)``."""
    channels = list(channels)
    Q = check_pure(Q, name="Q")
    dt = T / n_steps
    trajectories = range(n_traj) if trajectories is None else trajectories
    dW = sample_noise_batch(seed, dt, n_steps, [ch.gamma for ch in channels], trajectories)
    n = len(dW)
    d = len(psi0)
    rho = np.broadcast_to(projector(psi0), (n, d, d)).copy()
    states = np.empty((n, n_steps + 1, d, d), dtype=complex)
    dy = np.empty_like(dW)
    states[:, 0] = rho
    gen = state_agnostic_generator(channels, Q)
    for k in range(n_steps):
        dy[:, :, k] = record_increments(channels, rho, dt, dW[:, :, k])
        rho = heun_liouville_step(rho, gen, (dt, dW[:, :, k]))
        states[:, k + 1] = rho
    return {"times": np.linspace(0.0, T, n_steps + 1), "states": states, "dW": dW, "dy": dy}


# ---------------------------------------------------------------------------
# stability


@dataclass
class StabilityReport:
    lyapunov_sum: float
    stable: str  # "stable" | "unstable" | "marginal"
    timescale_estimate: float


def lyapunov_criterion(channels, q, q_perp=None, margin=1e-10):
    """Linear stability of the target ``|q>`` under state-agnostic feedback.

    Evaluates ``sum_a gamma_a sum_Z (<Z>_q - <Z>_{q_perp})`` with
    ``Z in {A_a^2, [A_a, B_a]/2}``; negative means stable.  For qubits the
    orthogonal state is built analytically; in higher dimension the caller
    chooses the direction ``q_perp`` and the number is the rate for that
    direction only.
    """
    q = normalize(np.asarray(q, dtype=complex))
    if q_perp is None:
        if len(q) != 2:
            raise ParameterError("q_perp must be supplied for dimension > 2")
        q_perp = qubit_orthogonal(q)
    q_perp = normalize(np.asarray(q_perp, dtype=complex))
    if abs(np.vdot(q, q_perp)) > 1e-10:
        raise StateError("q_perp is not orthogonal to q")
    total = 0.0
    for ch in channels:
        Z = ch.A @ ch.A + 0.5 * ch.AB_commutator
        total += ch.gamma * (expect_vec(Z, q) - expect_vec(Z, q_perp))
    total = float(total)
    if total < -margin:
        verdict = "stable"
    elif total > margin:
        verdict = "unstable"
    else:
        verdict = "marginal"
    timescale = np.inf if total == 0 else 1.0 / abs(total)
    return StabilityReport(total, verdict, float(timescale))


def dual_channel_qubit(gamma_plus, gamma_minus):
    """Pumping (``sigma_plus``) and damping (``sigma_minus``) channels; zero rates are dropped."""
    channels = []
    if gamma_plus > 0:
        channels.append(JumpChannel(SIGMA_PLUS, gamma_plus))
    if gamma_minus > 0:
        channels.append(JumpChannel(SIGMA_MINUS, gamma_minus))
    return channels


def perturbed_state(q, q_perp, eps, phase=0.0):
    return np.sqrt(1 - eps) * q + np.sqrt(eps) * np.exp(1j * phase) * q_perp


def empirical_stability_probe(
    channels, q, epsilon, n_traj, T, dt, seed, q_perp=None, eps_max=0.05, margin=1e-10
):
    """Monte Carlo estimate of the growth rate of ``eps(t) = 1 - Tr(Q rho_t)``.

    Trajectories start at overlap ``1 - epsilon`` with the target and run the
    state-agnostic feedback.  The exponential rate of the ensemble mean of
    ``eps`` is fitted over the stretch before it leaves the linear regime
    (``eps_max``) or reaches round-off.  The linearized dynamics predicts a
    rate of twice the Lyapunov sum.
    """
    if not 0 <= epsilon <= 0.1:
        raise ParameterError("epsilon must lie in [0, 0.1]")
    q = normalize(np.asarray(q, dtype=complex))
    if q_perp is None:
        q_perp = qubit_orthogonal(q)
    analytic = lyapunov_criterion(channels, q, q_perp, margin)
    Q = projector(q)
    n_steps = int(round(T / dt))
    psi0 = perturbed_state(q, q_perp, epsilon)
    run = run_state_agnostic(channels, Q, psi0, T, n_steps, seed, n_traj)
    eps = 1 - expect(Q, run["states"])
    mean_eps = eps.mean(axis=0)
    times = run["times"]
    out = {
        "times": times,
        "mean_eps": mean_eps,
        "criterion": analytic.lyapunov_sum,
        "verdict": analytic.stable,
        "predicted_rate": 2 * analytic.lyapunov_sum,
    }
    if epsilon == 0:
        out.update(rate=0.0, r_squared=1.0, n_points=len(times), sign_agrees=analytic.stable == "marginal")
        return out
    over = np.nonzero(mean_eps > eps_max)[0]
    stop = over[0] if over.size else len(times)
    fit = fit_exponential(times[:stop], mean_eps[:stop], floor=1e-15)
    sign = "stable" if fit.rate < 0 else "unstable"
    out.update(rate=fit.rate, r_squared=fit.r_squared, n_points=fit.n_points, sign_agrees=sign == analytic.stable)
    return out
