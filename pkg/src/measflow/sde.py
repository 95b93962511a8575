"""Wiener paths, measurement records and the basic steppers.

Three discretizations are provided:

* ``ito_sse_step``: Euler-Maruyama on the stochastic Schroedinger equation,
* ``ito_sme_step``: Euler-Maruyama on the stochastic master equation,
* ``heun_liouville_step``: a midpoint predictor-corrector for Liouville
  equations ``d rho = -i [dH, rho]`` read in the Stratonovich sense.

Noise follows the convention ``dW_a^2 = gamma_a dt``.  Per-channel increments
arrive as arrays whose last axis indexes the channel; any leading axes are
batch axes matching the state.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np

from .core import (
    DEFAULT_TOL_PURITY,
    DimensionError,
    ParameterError,
    anticommutator,
    as_operator,
    check_pure,
    commutator,
    conj_anticommutator,
    dagger,
    expect,
    expect_vec,
    expm_hermitian,
    fix_state,
    frob,
    hermitize,
    normalize,
    purify,
)


class SchemeKind(enum.Enum):
    ITO_EULER_SSE = "ito_euler_sse"
    ITO_EULER_SME = "ito_euler_sme"
    STRATONOVICH_HEUN_LIOUVILLE = "stratonovich_heun_liouville"


# ---------------------------------------------------------------------------
# noise


def _check_rates(dt, gammas):
    if not dt > 0:
        raise ParameterError(f"dt must be > 0, got {dt!r}")
    gammas = np.atleast_1d(np.asarray(gammas, dtype=float))
    if np.any(~np.isfinite(gammas)) or np.any(gammas <= 0):
        raise ParameterError(f"all rates must be > 0, got {gammas}")
    return gammas


class WienerStream:
    """Reproducible increments for one trajectory.

    Each channel owns a Philox stream seeded by
    ``(master_seed, trajectory, channel)``; the ``k``-th draw of that stream
    is the increment of step ``k``.  Results therefore do not depend on how
    trajectories are scheduled.
    """

    def __init__(self, seed, dt, gammas, trajectory=0):
        self.gammas = _check_rates(dt, gammas)
        self.dt = float(dt)
        self.seed = int(seed)
        self.trajectory = int(trajectory)
        self._gens = [
            np.random.Generator(np.random.Philox(np.random.SeedSequence([self.seed, self.trajectory, a])))
            for a in range(len(self.gammas))
        ]
        self.position = 0

    def draw(self, n_steps):
        """Next ``n_steps`` increments, shape ``(n_channels, n_steps)``."""
        out = np.empty((len(self.gammas), n_steps))
        for a, (gen, g) in enumerate(zip(self._gens, self.gammas)):
            out[a] = gen.standard_normal(n_steps) * np.sqrt(g * self.dt)
        self.position += n_steps
        return out


@dataclass
class NoisePath:
    dt: float
    increments: np.ndarray  # (n_channels, n_steps)
    gammas: np.ndarray

    @property
    def n_steps(self):
        return self.increments.shape[-1]

    @property
    def n_channels(self):
        return self.increments.shape[0]

    def coarsen(self, factor):
        """Same Brownian path on a grid ``factor`` times coarser."""
        factor = int(factor)
        if factor < 1 or self.n_steps % factor:
            raise ParameterError(f"cannot coarsen {self.n_steps} steps by {factor}")
        inc = self.increments.reshape(self.n_channels, -1, factor).sum(axis=-1)
        return NoisePath(self.dt * factor, inc, self.gammas)


def sample_noise_path(seed, dt, n_steps, gammas, trajectory=0):
    if int(n_steps) < 1:
        raise ParameterError("n_steps must be >= 1")
    stream = WienerStream(seed, dt, gammas, trajectory)
    return NoisePath(float(dt), stream.draw(int(n_steps)), stream.gammas)


def sample_noise_batch(seed, dt, n_steps, gammas, trajectories):
    """Stacked increments for several trajectories, shape ``(n_traj, n_channels, n_steps)``."""
    return np.stack([sample_noise_path(seed, dt, n_steps, gammas, k).increments for k in trajectories])


@dataclass
class MeasurementRecord:
    increments: np.ndarray  # (..., n_channels, n_steps)

    @property
    def accumulated(self):
        """Running sums ``y_a(t_k)`` including ``y_a(0) = 0``."""
        inc = self.increments
        zero = np.zeros(inc.shape[:-1] + (1,))
        return np.concatenate([zero, np.cumsum(inc, axis=-1)], axis=-1)


def record_increment(channel, rho, dt, dW):
    """``dy = 2 gamma <A> dt + dW``."""
    return 2 * channel.gamma * expect(channel.A, rho) * dt + dW


def record_increments(channels, rho, dt, dW):
    """Record increments for all channels; last axis of the result indexes channels."""
    dW = np.asarray(dW, dtype=float)
    if not channels:
        return dW
    means = np.stack([2 * ch.gamma * expect(ch.A, rho) for ch in channels], axis=-1)
    return means * dt + dW


# ---------------------------------------------------------------------------
# Ito steppers


def _check_dims(d, H0, channels):
    if H0 is not None and np.shape(H0)[-1] != d:
        raise DimensionError(f"H0 has dimension {np.shape(H0)[-1]}, state has {d}")
    for ch in channels:
        if ch.dim != d:
            raise DimensionError(f"channel has dimension {ch.dim}, state has {d}")


def _channel_noise(dW, channels):
    dW = np.asarray(dW, dtype=float)
    if dW.shape[-1:] != (len(channels),):
        raise DimensionError(f"expected {len(channels)} increments on the last axis, got {dW.shape}")
    return dW


def lindbladian(rho, H0, channels):
    """``-i[H0, rho] + sum_a gamma_a (C rho C^dag - 1/2 {C^dag C, rho})``."""
    out = np.zeros_like(rho) if H0 is None else -1j * commutator(H0, rho)
    for ch in channels:
        c = ch.C
        out = out + ch.gamma * (c @ rho @ dagger(c) - 0.5 * anticommutator(dagger(c) @ c, rho))
    return out


def sme_diffusion(rho, channel):
    """``{C - <A>, rho}_c``, the noise coefficient of one channel."""
    m = expect(channel.A, rho)
    d = rho.shape[-1]
    shifted = channel.C - m[..., None, None] * np.eye(d)
    return conj_anticommutator(shifted, rho)


def _apply(op, psi):
    """``op @ psi`` for a stack of state vectors along the last axis."""
    return psi @ np.swapaxes(op, -1, -2)


def ito_sse_step(psi, H0, channels, dt, dW, renormalize=True):
    """Euler-Maruyama step of the nonlinear stochastic Schroedinger equation.

    ``dpsi = -i H_e psi dt + sum_a (C_a - m_a) psi dW_a`` with
    ``H_e = H0 - i/2 sum_a gamma_a (C^dag C - 2 m C + m^2)`` and
    ``m_a = <psi|A_a|psi>``.  The continuous equation conserves the norm;
    the discrete step does not, so the result is renormalized unless
    ``renormalize`` is False.
    """
    psi = np.asarray(psi, dtype=complex)
    d = psi.shape[-1]
    channels = list(channels)
    _check_dims(d, H0, channels)
    dW = _channel_noise(dW, channels)
    drift = np.zeros_like(psi) if H0 is None else -1j * _apply(H0, psi)
    noise = np.zeros_like(psi)
    for a, ch in enumerate(channels):
        m = expect_vec(ch.A, psi)[..., None]
        cpsi = _apply(ch.C, psi)
        cdc_psi = _apply(dagger(ch.C) @ ch.C, psi)
        drift = drift - 0.5 * ch.gamma * (cdc_psi - 2 * m * cpsi + m**2 * psi)
        noise = noise + (cpsi - m * psi) * dW[..., a, None]
    out = psi + drift * dt + noise
    return normalize(out) if renormalize else out


def ito_sme_step(rho, H0, channels, dt, dW, renormalize=True, tol_purity=DEFAULT_TOL_PURITY, check=True):
    """Euler-Maruyama step of ``d rho = L(rho) dt + sum_a {C_a - <A_a>, rho}_c dW_a``.

    With ``renormalize`` the output is Hermitized, restored to unit trace
    and projected back onto the pure states (dominant eigenvector).  The raw
    step keeps the trace to O(dt^2) but its purity defect is of order
    ``|dW^2 - gamma dt|``, i.e. O(dt) per step.
    """
    rho = as_operator(rho, "rho")
    if check:
        check_pure(rho, tol_purity)
    channels = list(channels)
    _check_dims(rho.shape[-1], H0, channels)
    dW = _channel_noise(dW, channels)
    out = rho + lindbladian(rho, H0, channels) * dt
    for a, ch in enumerate(channels):
        out = out + sme_diffusion(rho, ch) * dW[..., a, None, None]
    if renormalize:
        out = purify(fix_state(out))
    return out


# ---------------------------------------------------------------------------
# Stratonovich Liouville stepper


class GeneratorContractError(ValueError):
    """A Liouville generator returned a non-Hermitian increment."""


def _checked(dH):
    dH = np.asarray(dH, dtype=complex)
    scale = np.maximum(frob(dH), 1e-300)
    if np.any(frob(dH - dagger(dH)) > 1e-10 * np.maximum(scale, 1.0)):
        raise GeneratorContractError("generator increment is not Hermitian")
    return hermitize(dH)


def liouville_update(rho, dH, unitary=True):
    if unitary:
        u = expm_hermitian(dH)
        return u @ rho @ dagger(u)
    return rho - 1j * commutator(dH, rho)


def heun_liouville_step(rho, generator, data=None, unitary=True, repurify=True):
    """One midpoint step of ``d rho = -i [dH(rho), rho]``.

    ``generator(rho, data)`` returns the Hermitian increment ``dH`` for the
    given state (``data`` carries the step's ``dt``/noise and is passed
    through untouched).  The predictor is ``rho~ = rho - i[dH(rho), rho]``;
    the corrector evaluates ``dH`` at the midpoint ``(rho + rho~)/2``
    (projected back onto the pure states when ``repurify``) and applies it
    to ``rho`` as ``exp(-i dH_mid)``, or as the explicit-midpoint increment
    ``-i [dH_mid, mid]`` when ``unitary`` is False.  Evaluating at the midpoint is what makes the scheme
    consistent with the Stratonovich reading of the noise.  With
    ``unitary`` both updates are exact unitaries, so purity is kept to
    round-off.
    """
    rho = as_operator(rho, "rho")
    dH0 = _checked(generator(rho, data))
    pred = liouville_update(rho, dH0, unitary)
    mid = 0.5 * (rho + pred)
    mid = purify(mid) if repurify else fix_state(mid)
    dH_mid = _checked(generator(mid, data))
    if unitary:
        out = liouville_update(rho, dH_mid, unitary=True)
    else:
        out = rho - 1j * commutator(dH_mid, mid)
    return fix_state(out)


def hamiltonian_generator(H0):
    """Deterministic generator ``dH = H0 dt``; ``data`` is the step ``dt``."""
    return lambda rho, dt: H0 * dt
