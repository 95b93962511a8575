"""Dense operator algebra, state helpers and model builders.

Operators and states are plain complex numpy arrays. Every routine that
takes a state or operator broadcasts over leading batch axes, so a stack
of ``(n_traj, d, d)`` density matrices can be pushed through the same code
as a single ``(d, d)`` matrix.

Conventions
-----------
* ``|0>`` is the ``+1`` eigenvector of ``sigma_z``; ``sigma_minus = |1><0|``.
* Qubit 0 is the leftmost Kronecker factor.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

SIGMA_X = np.array([[0, 1], [1, 0]], dtype=complex)
SIGMA_Y = np.array([[0, -1j], [1j, 0]], dtype=complex)
SIGMA_Z = np.array([[1, 0], [0, -1]], dtype=complex)
IDENTITY_2 = np.eye(2, dtype=complex)
SIGMA_MINUS = (SIGMA_X - 1j * SIGMA_Y) / 2
SIGMA_PLUS = (SIGMA_X + 1j * SIGMA_Y) / 2

HERMITIAN_RTOL = 1e-12
DEFAULT_TOL_PURITY = 1e-10


class DimensionError(ValueError):
    """Operator or state shapes are incompatible."""


class ParameterError(ValueError):
    """A scalar parameter is outside its admissible range."""


class StateError(ValueError):
    """A state violates a required invariant (normalization, purity, ...)."""


# ---------------------------------------------------------------------------
# basic algebra


def dagger(x):
    return np.conj(np.swapaxes(x, -1, -2))


def commutator(x, y):
    return x @ y - y @ x


def anticommutator(x, y):
    return x @ y + y @ x


def conj_anticommutator(x, y):
    """``{X, Y}_c = XY + Y^dag X^dag``, twice the Hermitian part of ``XY``."""
    xy = x @ y
    return xy + dagger(xy)


def commutator_superop(q, x):
    """Apply ``C_Q(X) = [X, Q]``."""
    q = np.asarray(q)
    x = np.asarray(x)
    if q.shape[-2:] != x.shape[-2:]:
        raise DimensionError(f"shape mismatch {x.shape} vs {q.shape}")
    return commutator(x, q)


def hermitize(x):
    return 0.5 * (x + dagger(x))


def trace(x):
    return np.trace(x, axis1=-2, axis2=-1)


def expect(op, rho):
    """Real part of ``Tr(op rho)``; broadcasts over leading axes of ``rho``."""
    return np.einsum("...ij,...ji->...", op, rho).real


def expect_vec(op, psi):
    """Real part of ``<psi|op|psi>`` for (batched) state vectors."""
    return np.einsum("...i,...i->...", psi.conj(), psi @ np.swapaxes(op, -1, -2)).real


def frob(x):
    return np.linalg.norm(x, axis=(-2, -1))


def projector(psi):
    psi = np.asarray(psi, dtype=complex)
    return psi[..., :, None] * psi[..., None, :].conj()


def normalize(psi):
    psi = np.asarray(psi, dtype=complex)
    return psi / np.linalg.norm(psi, axis=-1, keepdims=True)


def purity_defect(rho):
    """Frobenius norm of ``rho^2 - rho``."""
    return frob(rho @ rho - rho)


def purify(rho):
    """Project onto the dominant eigenvector, returning a rank-one projector."""
    _, vecs = np.linalg.eigh(hermitize(rho))
    return projector(vecs[..., :, -1])


def fix_state(rho):
    """Hermitize and restore unit trace."""
    rho = hermitize(rho)
    return rho / trace(rho).real[..., None, None]


def trace_distance(rho1, rho2):
    """``0.5 * ||rho1 - rho2||_1`` for Hermitian arguments."""
    w = np.linalg.eigvalsh(hermitize(rho1 - rho2))
    return 0.5 * np.abs(w).sum(axis=-1)


def expm_hermitian(h, scale=-1j):
    """``exp(scale * h)`` for Hermitian ``h`` through its eigendecomposition."""
    w, v = np.linalg.eigh(hermitize(h))
    return (v * np.exp(scale * w)[..., None, :]) @ dagger(v)


# ---------------------------------------------------------------------------
# validation


def as_operator(x, name="operator"):
    x = np.asarray(x, dtype=complex)
    if x.ndim < 2 or x.shape[-1] != x.shape[-2]:
        raise DimensionError(f"{name} must be square, got shape {x.shape}")
    if not np.all(np.isfinite(x)):
        raise DimensionError(f"{name} has non-finite entries")
    return x


def is_hermitian(x, rtol=HERMITIAN_RTOL):
    scale = np.maximum(frob(x), 1.0)
    return bool(np.all(frob(x - dagger(x)) <= rtol * scale))


def check_hermitian(x, name="operator"):
    x = as_operator(x, name)
    if not is_hermitian(x):
        raise ParameterError(f"{name} is not Hermitian")
    return x


def check_pure(rho, tol=DEFAULT_TOL_PURITY, name="state"):
    rho = as_operator(rho, name)
    if np.any(np.abs(trace(rho) - 1) > 1e-10):
        raise StateError(f"{name} does not have unit trace")
    if np.any(purity_defect(rho) > tol):
        raise StateError(f"{name} is not pure within {tol:g}")
    return rho


# ---------------------------------------------------------------------------
# jump channels


@dataclass(frozen=True, eq=False)
class JumpChannel:
    """Jump operator ``C`` with rate ``gamma`` and its split ``C = A + B``.

    ``A`` is the Hermitian and ``B`` the anti-Hermitian part; both are cached
    at construction.
    """

    C: np.ndarray
    gamma: float
    A: np.ndarray = field(init=False, repr=False)
    B: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        c = as_operator(self.C, "jump operator")
        if c.ndim != 2:
            raise DimensionError("jump operator must be a single matrix")
        gamma = float(self.gamma)
        if not np.isfinite(gamma) or gamma <= 0:
            raise ParameterError(f"rate gamma must be > 0, got {self.gamma!r}")
        a = (c + dagger(c)) / 2
        object.__setattr__(self, "C", c)
        object.__setattr__(self, "gamma", gamma)
        object.__setattr__(self, "A", a)
        object.__setattr__(self, "B", c - a)

    @property
    def dim(self):
        return self.C.shape[0]

    @property
    def AB_commutator(self):
        return commutator(self.A, self.B)

    @property
    def AB_anticommutator(self):
        return anticommutator(self.A, self.B)


def decompose_jump(C, gamma):
    return JumpChannel(C, gamma)


# ---------------------------------------------------------------------------
# double brackets


def double_bracket(op, rho, tol_purity=DEFAULT_TOL_PURITY, check=True):
    """``[[op, rho], rho]``.

    For a pure ``rho`` this equals ``{op, rho} - 2 <op> rho``.
    """
    op = as_operator(op, "operator")
    if check:
        check_pure(rho, tol_purity)
    return commutator(commutator(op, rho), rho)


def double_bracket_anticomm(op, rho):
    """Same quantity through ``{op, rho} - 2 Tr(op rho) rho`` (pure ``rho`` only)."""
    m = np.einsum("...ij,...ji->...", op, rho)
    return anticommutator(op, rho) - 2 * m[..., None, None] * rho


# ---------------------------------------------------------------------------
# model builders


def pauli_string(ops, n=None):
    """Kronecker product of single-qubit operators, qubit 0 leftmost.

    ``ops`` is either a full list of 2x2 matrices or a mapping
    ``{site: matrix}`` together with the chain length ``n``.
    """
    if isinstance(ops, dict):
        ops = [ops.get(k, IDENTITY_2) for k in range(n)]
    out = np.ones((1, 1), dtype=complex)
    for op in ops:
        out = np.kron(out, op)
    return out


def heisenberg_hamiltonian(n, offset=0.0):
    """Open-chain Heisenberg model ``sum_i X_i X_{i+1} + Y_i Y_{i+1} + Z_i Z_{i+1}``.

    A constant ``offset * I`` is added (a positive offset makes the spectrum
    positive, which the ground-state feedback flow needs).
    """
    if int(n) != n or n < 2 or n > 12 or n % 2:
        raise ParameterError(f"n must be an even integer in [2, 12], got {n!r}")
    n = int(n)
    bond = sum(np.kron(p, p) for p in (SIGMA_X, SIGMA_Y, SIGMA_Z))
    dim = 2**n
    h = np.zeros((dim, dim), dtype=complex)
    for i in range(n - 1):
        left = np.eye(2**i)
        right = np.eye(2 ** (n - i - 2))
        h += np.kron(np.kron(left, bond), right)
    h += offset * np.eye(dim)
    return h


def singlet_product_state(n):
    """``2^(-n/4) (|10> - |01>)^(x n/2)``."""
    if int(n) != n or n < 2 or n % 2:
        raise ParameterError(f"n must be a positive even integer, got {n!r}")
    pair = np.array([0, -1, 1, 0], dtype=complex) / np.sqrt(2)
    psi = np.ones(1, dtype=complex)
    for _ in range(int(n) // 2):
        psi = np.kron(psi, pair)
    return psi


def bloch_state(theta, phi):
    """``cos(theta/2)|0> + exp(i phi) sin(theta/2)|1>``."""
    return np.array([np.cos(theta / 2), np.exp(1j * phi) * np.sin(theta / 2)], dtype=complex)


def qubit_orthogonal(q):
    """The qubit state orthogonal to ``q`` (unique up to a global phase).

    For ``q = bloch_state(theta, phi)`` this returns
    ``sin(theta/2)|0> - exp(i phi) cos(theta/2)|1>``.
    """
    q = normalize(q)
    a, b = q[..., 0], q[..., 1]
    perp = np.stack([np.conj(b), -np.conj(a)], axis=-1)
    # fix the phase so that the first component is real and non-negative
    phase = np.exp(-1j * np.angle(np.where(np.abs(perp[..., 0]) > 1e-15, perp[..., 0], 1.0)))
    return perp * phase[..., None]


def bloch_coords(rho):
    """``(m_x, m_y, m_z)`` with ``m_i = Tr(sigma_i rho)``, stacked on the last axis."""
    rho = np.asarray(rho)
    if rho.shape[-2:] != (2, 2):
        raise DimensionError("Bloch coordinates need a 2x2 state")
    return np.stack([expect(s, rho) for s in (SIGMA_X, SIGMA_Y, SIGMA_Z)], axis=-1)


# ---------------------------------------------------------------------------
# random instances (tests, property checks)


def random_pure_state(dim, rng, size=None):
    shape = (dim,) if size is None else (*np.atleast_1d(size), dim)
    psi = rng.normal(size=shape) + 1j * rng.normal(size=shape)
    return normalize(psi)


def random_operator(dim, rng):
    return rng.normal(size=(dim, dim)) + 1j * rng.normal(size=(dim, dim))


def random_hermitian(dim, rng):
    return hermitize(random_operator(dim, rng))


def random_antihermitian(dim, rng):
    x = random_operator(dim, rng)
    return 0.5 * (x - dagger(x))
