import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from measflow.core import (
    DimensionError,
    JumpChannel,
    ParameterError,
    StateError,
    bloch_coords,
    bloch_state,
    commutator_superop,
    conj_anticommutator,
    decompose_jump,
    double_bracket,
    double_bracket_anticomm,
    expect,
    heisenberg_hamiltonian,
    pauli_string,
    projector,
    purify,
    qubit_orthogonal,
    singlet_product_state,
    trace_distance,
)

from oracles import (
    KET0,
    KET1,
    SMINUS,
    SX,
    SY,
    SZ,
    dm,
    heisenberg_by_bits,
    rand_herm,
    rand_op,
    rand_pure,
    random_instances,
)


# ---------------------------------------------------------------------------
# jump channels


def test_lowering_operator_split():
    ch = decompose_jump(SMINUS, 1.0)
    assert np.allclose(ch.A, SX / 2, atol=1e-15)
    assert np.allclose(ch.B, -1j * SY / 2, atol=1e-15)


def test_hermitian_jump_has_no_antihermitian_part():
    ch = decompose_jump(SZ, 2.0)
    assert np.array_equal(ch.A, SZ)
    assert np.array_equal(ch.B, np.zeros((2, 2)))


def test_position_plus_i_momentum_split(rng):
    X, P = rand_herm(rng, 5), rand_herm(rng, 5)
    ch = decompose_jump(X + 1j * P, 0.3)
    assert np.allclose(ch.A, X, atol=1e-14)
    assert np.allclose(ch.B, 1j * P, atol=1e-14)


@pytest.mark.parametrize("d", [2, 3, 6])
def test_split_invariants(rng, d):
    ch = JumpChannel(rand_op(rng, d), 0.7)
    assert np.max(np.abs(ch.A + ch.B - ch.C)) <= 4 * np.finfo(float).eps * np.max(np.abs(ch.C))
    assert np.linalg.norm(ch.A - ch.A.conj().T) <= 1e-14
    assert np.linalg.norm(ch.B + ch.B.conj().T) <= 1e-14


@pytest.mark.parametrize("gamma", [0.0, -1.0, np.nan])
def test_rejects_bad_rate(gamma):
    with pytest.raises(ParameterError):
        decompose_jump(SZ, gamma)


def test_rejects_bad_matrices():
    with pytest.raises(DimensionError):
        decompose_jump(np.ones((2, 3)), 1.0)
    with pytest.raises(DimensionError):
        decompose_jump(np.array([[np.inf, 0], [0, 1]]), 1.0)


def test_zero_jump_operator_is_accepted():
    ch = decompose_jump(np.zeros((3, 3)), 1.0)
    assert not ch.A.any() and not ch.B.any()


# ---------------------------------------------------------------------------
# commutator superoperator and double brackets


def test_commutator_superop_examples(rng):
    rho = rand_pure(rng, 4)
    assert np.allclose(commutator_superop(rho, rho), 0, atol=1e-15)
    assert np.allclose(commutator_superop(SZ, SX), -2j * SY)
    with pytest.raises(DimensionError):
        commutator_superop(np.eye(2), np.eye(3))


def _C(q, x, k):
    for _ in range(k):
        x = x @ q - q @ x
    return x


def test_commutator_periodicity_on_pure_states():
    worst3 = worst4 = 0.0
    for d, rng in random_instances(11, 200):
        rho, X = rand_pure(rng, d), rand_op(rng, d)
        worst3 = max(worst3, np.linalg.norm(_C(rho, X, 3) - _C(rho, X, 1)))
        worst4 = max(worst4, np.linalg.norm(_C(rho, X, 4) - _C(rho, X, 2)))
        assert np.allclose(commutator_superop(rho, X), X @ rho - rho @ X, atol=1e-14)
    assert worst3 <= 1e-11 and worst4 <= 1e-11


def test_double_bracket_examples():
    assert np.allclose(double_bracket(SX, dm(KET0)), SX, atol=1e-15)
    assert np.allclose(double_bracket(SZ, dm(KET1)), 0, atol=1e-15)


def test_double_bracket_dual_formula():
    for d, rng in random_instances(12, 200):
        O, rho = rand_herm(rng, d), rand_pure(rng, d)
        mean = np.trace(O @ rho).real
        ref = O @ rho + rho @ O - 2 * mean * rho
        assert np.linalg.norm(double_bracket(O, rho) - ref) <= 1e-12 * max(1, np.linalg.norm(O))
        assert np.linalg.norm(double_bracket_anticomm(O, rho) - ref) <= 1e-12 * max(1, np.linalg.norm(O))


def test_double_bracket_rejects_mixed_state():
    with pytest.raises(StateError):
        double_bracket(SX, np.eye(2) / 2)


def test_diffusion_identity():
    for d, rng in random_instances(13, 200):
        ch = JumpChannel(rand_op(rng, d), 1.0)
        rho = rand_pure(rng, d)
        m = np.trace(ch.A @ rho).real
        lhs = conj_anticommutator(ch.C - m * np.eye(d), rho)
        rhs = (ch.A @ rho - rho @ ch.A + ch.B) @ rho - rho @ (ch.A @ rho - rho @ ch.A + ch.B)
        assert np.linalg.norm(lhs - rhs) <= 1e-11


# ---------------------------------------------------------------------------
# model builders


def test_pauli_string_ordering():
    zi = pauli_string({0: SZ}, 2)
    assert np.allclose(np.diag(zi), [1, 1, -1, -1])


def test_heisenberg_two_sites_spectrum():
    w = np.linalg.eigvalsh(heisenberg_hamiltonian(2, 0.0))
    assert np.allclose(w, [-3, 1, 1, 1], atol=1e-13)


@pytest.mark.parametrize("n", [2, 4, 6, 8])
def test_heisenberg_matches_bit_oracle(n):
    H = heisenberg_hamiltonian(n, 1.5)
    assert np.array_equal(H, H.conj().T)
    assert np.allclose(H, heisenberg_by_bits(n, 1.5), atol=1e-13)


def test_heisenberg_offset_spectrum_positive():
    assert np.linalg.eigvalsh(heisenberg_hamiltonian(4, 18.0))[0] > 0


@pytest.mark.parametrize("n", [2, 4, 6])
def test_heisenberg_ground_state_non_degenerate(n):
    w = np.linalg.eigvalsh(heisenberg_hamiltonian(n, 0.0))
    assert w[1] - w[0] > 1e-8


@pytest.mark.parametrize("n", [3, 0, 14, 2.5])
def test_heisenberg_rejects_bad_size(n):
    with pytest.raises(ParameterError):
        heisenberg_hamiltonian(n)


def test_singlet_pair():
    psi = singlet_product_state(2)
    ref = (np.kron(KET1, KET0) - np.kron(KET0, KET1)) / np.sqrt(2)
    assert np.allclose(psi, ref)
    assert np.isclose(np.vdot(psi, np.kron(SZ, SZ) @ psi).real, -1)


def test_singlet_product_overlaps_ground_state():
    psi = singlet_product_state(4)
    assert np.isclose(np.linalg.norm(psi), 1, atol=1e-14)
    _, v = np.linalg.eigh(heisenberg_by_bits(4))
    assert abs(np.vdot(v[:, 0], psi)) > 0.1


def test_singlet_rejects_odd():
    with pytest.raises(ParameterError):
        singlet_product_state(5)


def test_bloch_state_examples():
    assert np.allclose(bloch_state(0, 0.3), KET0)
    psi = bloch_state(np.pi, 0.0)
    assert np.isclose(abs(np.vdot(KET1, psi)), 1)
    plus = bloch_state(np.pi / 2, 0)
    assert np.allclose(plus, [2**-0.5, 2**-0.5])
    assert np.isclose(np.vdot(plus, SX @ plus).real, 1)


def test_bloch_coords_examples():
    assert np.allclose(bloch_coords(dm(KET0)), [0, 0, 1])
    assert np.allclose(bloch_coords(dm([1, 1])), [1, 0, 0])
    th = ph = np.pi / 4
    ref = [np.sin(th) * np.cos(ph), np.sin(th) * np.sin(ph), np.cos(th)]
    assert np.allclose(bloch_coords(projector(bloch_state(th, ph))), ref, atol=1e-15)
    with pytest.raises(DimensionError):
        bloch_coords(np.eye(3) / 3)


@given(st.floats(0, np.pi), st.floats(-2 * np.pi, 2 * np.pi))
def test_bloch_vector_unit_length_and_orthogonal_partner(theta, phi):
    q = bloch_state(theta, phi)
    m = bloch_coords(projector(q))
    assert abs(np.linalg.norm(m) - 1) <= 1e-10
    perp = qubit_orthogonal(q)
    assert abs(np.vdot(q, perp)) <= 1e-12
    if 1e-6 < theta < np.pi - 1e-6:
        ref = np.array([np.sin(theta / 2), -np.exp(1j * phi) * np.cos(theta / 2)])
        assert np.allclose(perp, ref, atol=1e-12)


@given(st.integers(2, 6), st.integers(0, 2**32 - 1))
def test_purify_and_trace_distance_properties(d, seed):
    rng = np.random.default_rng(seed)
    r1, r2 = rand_pure(rng, d), rand_pure(rng, d)
    td = trace_distance(r1, r2)
    assert 0 <= td <= 1 + 1e-12
    assert np.isclose(td, trace_distance(r2, r1))
    # pure states: trace distance = sqrt(1 - fidelity)
    assert np.isclose(td, np.sqrt(max(0.0, 1 - np.trace(r1 @ r2).real)), atol=1e-7)
    noisy = r1 + 1e-6 * rand_herm(rng, d)
    assert np.allclose(purify(noisy), r1, atol=1e-5)
    assert np.isclose(expect(np.eye(d), r1), 1)
