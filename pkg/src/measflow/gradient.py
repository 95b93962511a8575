"""Riemannian gradients on the unitary orbit of a pure state.

Tangent vectors at ``sigma`` have the form ``T = [X, sigma]`` with ``X``
anti-Hermitian.  The orbit metric pulls back the Hilbert-Schmidt product of
the generators, ``<[X, sigma], [Y, sigma]>_O = Re Tr(X^dag Y)``, with ``X`` and
``Y`` taken orthogonal to the stabilizer of ``sigma``.  For pure ``sigma``
that generator is recovered from the tangent as ``X = [T, sigma]``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import (
    DEFAULT_TOL_PURITY,
    ParameterError,
    as_operator,
    check_hermitian,
    check_pure,
    commutator,
    dagger,
    expect,
    expm_hermitian,
    trace,
)


@dataclass(frozen=True)
class PotentialValue:
    """``F(sigma) dt = drift_part dt + diffusion_part dW``."""

    drift_part: float
    diffusion_part: float


def orbit_gradient(O, sigma, tol_purity=DEFAULT_TOL_PURITY, check=True):
    """Gradient of ``F(sigma) = Tr(O sigma)`` on the orbit: ``[[O, sigma], sigma]``."""
    if check:
        O = check_hermitian(O, "O")
        sigma = check_pure(sigma, tol_purity, "sigma")
    return commutator(commutator(O, sigma), sigma)


def tangent_generator(T, sigma):
    """Stabilizer-free generator ``X`` with ``[X, sigma] = T`` (pure ``sigma``)."""
    return commutator(T, sigma)


def orbit_inner(T1, T2, sigma):
    X1 = tangent_generator(T1, sigma)
    X2 = tangent_generator(T2, sigma)
    return trace(dagger(X1) @ X2).real


def orbit_norm_sq(T, sigma):
    return orbit_inner(T, T, sigma)


def potential_value(M, Sigma, sigma):
    return PotentialValue(float(expect(M, sigma)), float(expect(Sigma, sigma)))


def directional_derivative_check(O, sigma, X, tau_values=(1e-3, 1e-4)):
    """Central finite differences of ``Tr(O sigma(tau))`` along ``e^{tau X} sigma e^{-tau X}``.

    Returns a dict with the analytic derivative ``Tr(O [X, sigma])``, the
    finite-difference estimates per ``tau`` and their absolute/relative
    errors, plus a Richardson-extrapolated estimate built from the first two
    ``tau`` values.  ``scaled_error`` divides the absolute error by
    ``scale = ||O||_op ||[X, sigma]||_1``, an upper bound on the derivative,
    which stays meaningful when the derivative itself is close to zero.
    """
    O = as_operator(O, "O")
    X = as_operator(X, "X")
    if np.linalg.norm(X + dagger(X)) > 1e-12 * max(1.0, np.linalg.norm(X)):
        raise ParameterError("X must be anti-Hermitian")
    T = commutator(X, sigma)
    exact = float(np.trace(O @ T).real)
    bound = float(np.linalg.norm(O, 2) * np.linalg.norm(T, "nuc"))
    # e^{tau X} = exp(-i * (i X) * tau) with iX Hermitian
    H = 1j * X

    def F(tau):
        u = expm_hermitian(H, scale=-1j * tau)
        return float(np.trace(O @ u @ sigma @ dagger(u)).real)

    estimates = []
    for tau in tau_values:
        if tau > 1e-3:
            raise ParameterError("tau values must be <= 1e-3")
        estimates.append((F(tau) - F(-tau)) / (2 * tau))
    estimates = np.array(estimates)
    abs_err = np.abs(estimates - exact)
    scale = max(abs(exact), 1e-300)
    report = {
        "exact": exact,
        "tau": list(tau_values),
        "estimates": estimates.tolist(),
        "abs_error": abs_err.tolist(),
        "rel_error": (abs_err / scale).tolist(),
        "scale": bound,
        "scaled_error": (abs_err / max(bound, 1e-300)).tolist(),
    }
    if len(tau_values) >= 2:
        r = (tau_values[0] / tau_values[1]) ** 2
        report["richardson"] = float((r * estimates[1] - estimates[0]) / (r - 1))
    return report


# ---------------------------------------------------------------------------
# measurement potentials


def potential_K(channel, rho):
    """``K(sigma) = Tr(A sigma)``."""
    return expect(channel.A, rho)


def variance_operator(channel, rho):
    """``(A - <A>)^2`` with the mean taken in ``rho``."""
    d = channel.dim
    m = expect(channel.A, rho)
    dA = channel.A - m[..., None, None] * np.eye(d)
    return dA @ dA


def potential_V(channel, rho):
    """``<(A - <A>)^2> + 1/2 <[A, B]>``."""
    return expect(variance_operator(channel, rho), rho) + 0.5 * expect(channel.AB_commutator, rho)


def grad_V(channel, rho):
    """Orbit gradient of ``V_t(sigma) = Tr(dA_t^2 sigma) + 1/2 Tr([A,B] sigma)`` at ``rho``."""
    O = variance_operator(channel, rho) + 0.5 * channel.AB_commutator
    return commutator(commutator(O, rho), rho)


def grad_K(channel, rho):
    return commutator(commutator(channel.A, rho), rho)


def uncertainty_terms(channel, rho):
    """``<dA^2>``, ``<dB^2>`` and the Robertson term ``|<[A,B]>|^2 / 4``."""
    d = channel.dim
    eye = np.eye(d)
    mA = np.einsum("...ij,...ji->...", channel.A, rho)
    mB = np.einsum("...ij,...ji->...", channel.B, rho)
    dA = channel.A - mA[..., None, None] * eye
    dB = channel.B - mB[..., None, None] * eye
    var_a = np.einsum("...ij,...ji->...", dA @ dA, rho).real
    var_b = np.einsum("...ij,...ji->...", dB @ dB, rho).real
    robertson = np.abs(np.einsum("...ij,...ji->...", channel.AB_commutator, rho)) ** 2 / 4
    return {"var_A": var_a, "var_B": var_b, "robertson": robertson}


def variance_flow_check(rhos, dW, channel, dt):
    """Compare measured changes of ``<dA^2>`` with the variance law.

    ``rhos`` is a pure-measurement trajectory (``B = 0``, no ``H0``), shape
    ``(..., n_steps + 1, d, d)``, and ``dW`` the matching increments, shape
    ``(..., n_steps)``.  The predicted change over each step is
    ``-gamma ||grad V||_O^2 dt + <grad V, grad K>_O dW`` evaluated at the
    step midpoint ``(rho_k + rho_{k+1}) / 2``.
    """
    if np.linalg.norm(channel.B) > 1e-14:
        raise ParameterError("variance law check needs a Hermitian jump operator (B = 0)")
    V = expect(variance_operator(channel, rhos), rhos)
    measured = np.diff(V, axis=-1)
    mid = 0.5 * (rhos[..., 1:, :, :] + rhos[..., :-1, :, :])
    gv = grad_V(channel, mid)
    gk = grad_K(channel, mid)
    predicted = -channel.gamma * orbit_norm_sq(gv, mid) * dt + orbit_inner(gv, gk, mid) * dW
    residual = measured - predicted
    return {
        "V": V,
        "measured": measured,
        "predicted": predicted,
        "residual": residual,
        "mean_abs_residual": float(np.mean(np.abs(residual))),
    }


# ---------------------------------------------------------------------------
# feedback landscape


def landscape_quadratic_form(channels, Q, delta_rho, tol_purity=DEFAULT_TOL_PURITY):
    """``Tr(Q [[Y, delta], delta])`` with ``Y = sum_a gamma_a (A_a^2 + [A_a, B_a]/2)``.

    A single channel may be passed directly.  Negative values mark a
    direction in which the target is stable in expectation.
    """
    if not isinstance(channels, (list, tuple)):
        channels = [channels]
    Q = check_pure(Q, tol_purity, "Q")
    delta_rho = as_operator(delta_rho, "delta_rho")
    if np.any(np.abs(trace(delta_rho)) > 1e-12 * max(1.0, float(np.max(np.abs(delta_rho))))):
        raise ParameterError("delta_rho must be traceless")
    Y = sum(ch.gamma * (ch.A @ ch.A + 0.5 * ch.AB_commutator) for ch in channels)
    return float(np.trace(Q @ commutator(commutator(Y, delta_rho), delta_rho)).real)


def tangent_perturbation(Q, rng):
    """Random traceless Hermitian direction tangent to the orbit at ``Q``."""
    d = Q.shape[-1]
    x = rng.normal(size=(d, d)) + 1j * rng.normal(size=(d, d))
    X = 0.5 * (x - dagger(x))
    return commutator(X, Q)
