import numpy as np
import pytest

from measflow.core import (
    DimensionError,
    JumpChannel,
    ParameterError,
    StateError,
    bloch_state,
    expect,
    projector,
    purity_defect,
    trace,
)
from measflow.hamiltonian import liouville_hamiltonian
from measflow.sde import (
    GeneratorContractError,
    MeasurementRecord,
    NoisePath,
    WienerStream,
    hamiltonian_generator,
    heun_liouville_step,
    ito_sme_step,
    ito_sse_step,
    lindbladian,
    record_increment,
    record_increments,
    sample_noise_batch,
    sample_noise_path,
)

from oracles import KET0, SMINUS, SX, SZ, dm, evolve_exact, ket, rand_herm, rand_op, rand_pure

PSI0 = bloch_state(np.pi / 3, np.pi / 5)
H0 = 0.5 * SX


def slope(xs, ys):
    return np.polyfit(np.log(xs), np.log(np.abs(ys)), 1)[0]


# ---------------------------------------------------------------------------
# noise


def test_noise_is_deterministic_per_seed():
    a = sample_noise_path(42, 0.01, 500, [1.0, 2.0])
    b = sample_noise_path(42, 0.01, 500, [1.0, 2.0])
    c = sample_noise_path(43, 0.01, 500, [1.0, 2.0])
    assert np.array_equal(a.increments, b.increments)
    assert not np.array_equal(a.increments, c.increments)
    assert a.n_steps == 500 and a.n_channels == 2


def test_noise_moments():
    n, dt, gamma = 10**5, 0.01, 2.5
    inc = sample_noise_path(1, dt, n, [gamma]).increments[0]
    sd = np.sqrt(gamma * dt)
    assert abs(inc.mean()) <= 4 * sd / np.sqrt(n)
    assert abs(inc.var() / (gamma * dt) - 1) <= 0.05


def test_channels_are_independent():
    n = 10**5
    inc = sample_noise_path(2, 1.0, n, [1.0, 1.0, 1.0]).increments
    corr = np.corrcoef(inc)
    assert np.all(np.abs(corr[np.triu_indices(3, 1)]) <= 4 / np.sqrt(n))


def test_streams_do_not_depend_on_chunking_or_batching():
    whole = WienerStream(9, 0.01, [1.0, 3.0], trajectory=5).draw(1000)
    s = WienerStream(9, 0.01, [1.0, 3.0], trajectory=5)
    parts = np.concatenate([s.draw(1), s.draw(299), s.draw(700)], axis=1)
    assert np.array_equal(whole, parts)
    batch = sample_noise_batch(9, 0.01, 1000, [1.0, 3.0], [3, 4, 5])
    assert np.array_equal(batch[2], whole)


def test_coarsening_sums_increments():
    p = sample_noise_path(4, 0.001, 12, [1.0])
    q = p.coarsen(4)
    assert q.dt == pytest.approx(0.004)
    assert np.allclose(q.increments[0], p.increments[0].reshape(3, 4).sum(axis=1))
    with pytest.raises(ParameterError):
        p.coarsen(5)


@pytest.mark.parametrize("dt,gammas", [(0.0, [1.0]), (-1e-3, [1.0]), (1e-3, [0.0]), (1e-3, [1.0, -2.0])])
def test_noise_rejects_bad_parameters(dt, gammas):
    with pytest.raises(ParameterError):
        sample_noise_path(0, dt, 10, gammas)


def test_noise_rejects_empty_path():
    with pytest.raises(ParameterError):
        sample_noise_path(0, 0.1, 0, [1.0])


# ---------------------------------------------------------------------------
# measurement record


def test_record_increment_examples():
    ch = JumpChannel(SX, 1.0)
    assert record_increment(ch, dm(KET0), 0.01, 0.3) == pytest.approx(0.3)
    # <sigma_z> = 0.5 at theta = pi/3
    ch = JumpChannel(SZ, 1.0)
    rho = projector(bloch_state(np.pi / 3, 0.0))
    assert record_increment(ch, rho, 0.01, 0.0) == pytest.approx(0.01)


def test_record_mean_tracks_expectation():
    ch = JumpChannel(SMINUS, 1.7)
    rho = rand_pure(np.random.default_rng(0), 2)
    dt, n = 0.01, 10**4
    dW = sample_noise_path(5, dt, n, [ch.gamma]).increments[0]
    rates = record_increment(ch, rho, dt, dW) / dt
    target = 2 * ch.gamma * expect(ch.A, rho)
    assert abs(rates.mean() - target) <= 4 * rates.std(ddof=1) / np.sqrt(n)


def test_accumulated_record():
    inc = np.array([[0.1, 0.2, -0.3]])
    assert np.allclose(MeasurementRecord(inc).accumulated, [[0.0, 0.1, 0.3, 0.0]])


def test_record_increments_batches_over_channels():
    chans = [JumpChannel(SZ, 1.0), JumpChannel(SMINUS, 2.0)]
    rho = np.stack([dm(KET0), projector(PSI0)])
    dW = np.array([[0.1, 0.2], [0.3, 0.4]])
    dy = record_increments(chans, rho, 0.01, dW)
    for b in range(2):
        for a in range(2):
            assert dy[b, a] == pytest.approx(record_increment(chans[a], rho[b], 0.01, dW[b, a]))


# ---------------------------------------------------------------------------
# Ito SSE


def test_sse_eigenstate_is_fixed_point():
    ch = [JumpChannel(SZ, 1.0)]
    for dW in (-0.3, 0.0, 0.7):
        out = ito_sse_step(KET0, None, ch, 0.01, np.array([dW]))
        assert np.allclose(out, KET0, atol=1e-15)


def test_sse_without_channels_matches_exact_evolution():
    # asymmetric spectrum: with eigenvalues +-E renormalized Euler is accidentally second order
    H = 0.5 * SX + 0.3 * SZ + 0.2 * np.eye(2)
    errs = []
    for n in (100, 200, 400):
        dt = 1.0 / n
        psi = PSI0
        for _ in range(n):
            psi = ito_sse_step(psi, H, [], dt, np.zeros(0))
        errs.append(np.linalg.norm(dm(psi) - evolve_exact(H, dm(PSI0), 1.0)))
    assert slope([100, 200, 400], errs) == pytest.approx(-1, abs=0.1)


def _sse_norm_defect(dt, x, C=SZ):
    out = ito_sse_step(PSI0, H0, [JumpChannel(C, 1.0)], dt, np.array([x * np.sqrt(dt)]), renormalize=False)
    return np.linalg.norm(out) ** 2 - 1


@pytest.mark.parametrize("C", [SZ, SMINUS])
def test_sse_norm_defect_scaling(C):
    """Pathwise the raw step misses the norm by (<C^dag C> - m^2)(dW^2 - gamma dt), i.e. O(dt).
    Averaged over dW the defect is O(dt^2); the mean is computed exactly with
    Gauss-Hermite quadrature, since the defect is a polynomial in dW."""
    dts = [1e-2, 1e-3, 1e-4]
    x, w = np.polynomial.hermite_e.hermegauss(6)
    w = w / w.sum()
    pathwise = [_sse_norm_defect(dt, 0.7, C) for dt in dts]
    mean = [sum(wi * _sse_norm_defect(dt, xi, C) for xi, wi in zip(x, w)) for dt in dts]
    assert slope(dts, pathwise) == pytest.approx(1.0, abs=0.1)
    assert slope(dts, mean) >= 1.5
    # the leading pathwise term
    ch = JumpChannel(C, 1.0)
    rho = projector(PSI0)
    coeff = expect(C.conj().T @ C, rho) - expect(ch.A, rho) ** 2
    dt = 1e-7
    assert _sse_norm_defect(dt, 0.7, C) == pytest.approx(coeff * (0.49 - 1) * dt, rel=1e-2)


def test_sse_and_sme_agree_to_three_halves_order():
    ch = [JumpChannel(SZ, 1.0)]
    dts = [1e-2, 1e-3, 1e-4]
    diffs = []
    for dt in dts:
        dW = np.array([0.7 * np.sqrt(dt)])
        diffs.append(np.linalg.norm(dm(ito_sse_step(PSI0, H0, ch, dt, dW)) - ito_sme_step(projector(PSI0), H0, ch, dt, dW)))
    assert slope(dts, diffs) >= 1.4


def test_sse_dimension_checks():
    with pytest.raises(DimensionError):
        ito_sse_step(np.ones(3) / np.sqrt(3), None, [JumpChannel(SZ, 1.0)], 0.01, np.zeros(1))
    with pytest.raises(DimensionError):
        ito_sse_step(PSI0, np.eye(3), [], 0.01, np.zeros(0))
    with pytest.raises(DimensionError):
        ito_sse_step(PSI0, None, [JumpChannel(SZ, 1.0)], 0.01, np.zeros(2))


# ---------------------------------------------------------------------------
# Ito SME


def test_sme_raw_step_keeps_trace(rng):
    for d in (2, 3, 5):
        chans = [JumpChannel(rand_op(rng, d), 0.8), JumpChannel(rand_herm(rng, d), 0.3)]
        rho = rand_pure(rng, d)
        out = ito_sme_step(rho, rand_herm(rng, d), chans, 1e-2, rng.normal(size=2) * 0.1, renormalize=False)
        assert abs(trace(out) - 1) <= 1e-13


def test_sme_eigenprojector_is_fixed_point():
    out = ito_sme_step(dm(KET0), None, [JumpChannel(SZ, 1.0)], 0.01, np.array([0.37]), renormalize=False)
    assert np.array_equal(out, dm(KET0))


def test_sme_mean_step_is_lindblad(rng):
    ch = [JumpChannel(SMINUS, 1.3)]
    rho = rand_pure(rng, 2)
    dt, n = 0.01, 10**4
    dW = sample_noise_path(8, dt, n, [1.3]).increments[0][:, None]
    steps = ito_sme_step(np.broadcast_to(rho, (n, 2, 2)), H0, ch, dt, dW, renormalize=False) - rho
    ref = lindbladian(rho, H0, ch) * dt
    for part in (np.real, np.imag):
        x = part(steps)
        se = x.std(axis=0, ddof=1) / np.sqrt(n)
        assert np.all(np.abs(x.mean(axis=0) - part(ref)) <= 4 * se + 1e-15)


def test_sme_output_is_valid_state(rng):
    rho = rand_pure(rng, 3)
    out = ito_sme_step(rho, rand_herm(rng, 3), [JumpChannel(rand_op(rng, 3), 1.0)], 0.01, np.array([0.2]))
    assert abs(trace(out) - 1) <= 1e-12
    assert np.linalg.norm(out - out.conj().T) <= 1e-12
    assert purity_defect(out) <= 1e-12


def test_sme_rejects_mixed_input():
    with pytest.raises(StateError):
        ito_sme_step(np.eye(2) / 2, None, [JumpChannel(SZ, 1.0)], 0.01, np.array([0.0]))


def test_zero_operator_channel_contributes_nothing(rng):
    rho = rand_pure(rng, 2)
    one = ito_sme_step(rho, H0, [JumpChannel(SMINUS, 1.0)], 0.01, np.array([0.05]), renormalize=False)
    two = ito_sme_step(
        rho, H0, [JumpChannel(SMINUS, 1.0), JumpChannel(np.zeros((2, 2)), 1.0)], 0.01, np.array([0.05, 0.3]), renormalize=False
    )
    assert np.allclose(one, two, atol=1e-15)


def test_vanishing_rate_channel_reduces_to_single_channel(rng):
    rho = rand_pure(rng, 2)
    one = ito_sme_step(rho, H0, [JumpChannel(SMINUS, 1.0)], 0.01, np.array([0.05]), renormalize=False)
    two = ito_sme_step(
        rho, H0, [JumpChannel(SMINUS, 1.0), JumpChannel(SZ, 1e-14)], 0.01, np.array([0.05, 0.0]), renormalize=False
    )
    assert np.allclose(one, two, atol=1e-14)


# ---------------------------------------------------------------------------
# midpoint Liouville stepper


def test_heun_constant_generator():
    rho0 = projector(PSI0)
    exact = evolve_exact(SZ, rho0, 1.0)
    errs = []
    for n in (50, 100, 200):
        rho_u, rho_e = rho0, rho0
        gen = hamiltonian_generator(SZ)
        for _ in range(n):
            rho_u = heun_liouville_step(rho_u, gen, 1.0 / n)
            rho_e = heun_liouville_step(rho_e, gen, 1.0 / n, unitary=False)
        assert np.linalg.norm(rho_u - exact) <= 1e-12
        errs.append(np.linalg.norm(rho_e - exact))
    assert slope([50, 100, 200], errs) == pytest.approx(-2, abs=0.15)


def test_heun_zero_generator(rng):
    rho = rand_pure(rng, 4)
    out = heun_liouville_step(rho, lambda r, d: np.zeros((4, 4)), None)
    assert np.allclose(out, rho, atol=1e-15)


def test_heun_rejects_non_hermitian_generator():
    with pytest.raises(GeneratorContractError):
        heun_liouville_step(dm(KET0), lambda r, d: 1j * SZ * 0.01, None)


def _liouville_chain(chans, dt):
    def gen(rho, dW):
        return liouville_hamiltonian(chans, H0, rho, dt, record_increments(chans, rho, dt, dW), check=False)

    return gen


def test_purity_and_trace_along_trajectories():
    """T = 1 with dt = 1e-3 on a shared path: the unitary Liouville chain and
    the SSE keep purity without any projection; the SME is re-projected each step."""
    dt, n = 1e-3, 1000
    chans = [JumpChannel(SMINUS, 1.0), JumpChannel(SZ, 0.5)]
    path = sample_noise_path(21, dt, n, [c.gamma for c in chans]).increments
    gen = _liouville_chain(chans, dt)
    rho_l = rho_s = projector(PSI0)
    psi = PSI0
    worst_l = worst_s = worst_t = 0.0
    for k in range(n):
        rho_l = heun_liouville_step(rho_l, gen, path[:, k], repurify=False)
        rho_s = ito_sme_step(rho_s, H0, chans, dt, path[:, k], check=False)
        psi = ito_sse_step(psi, H0, chans, dt, path[:, k])
        worst_l = max(worst_l, purity_defect(rho_l))
        worst_s = max(worst_s, purity_defect(rho_s))
        worst_t = max(worst_t, abs(trace(rho_l) - 1), abs(trace(rho_s) - 1), abs(np.linalg.norm(psi) - 1))
    assert worst_l <= 1e-6
    assert worst_s <= 1e-12
    assert worst_t <= 1e-12


def test_raw_sme_loses_purity_at_first_order():
    """Without re-projection the Euler-Maruyama SME drifts off the pure states
    by O(dt) per step, so cumulative drift is far above the O(dt^{3/2}) level."""
    ch = [JumpChannel(SZ, 1.0)]
    dt = 1e-3
    path = sample_noise_path(3, dt, 1000, [1.0]).increments
    rho = projector(PSI0)
    worst = 0.0
    for k in range(1000):
        rho = ito_sme_step(rho, H0, ch, dt, path[:, k], renormalize=False, check=False)
        worst = max(worst, purity_defect(rho))
    assert worst > 1e-3


def test_liouville_and_ito_chains_converge_together():
    from measflow.hamiltonian import check_formulation_equivalence

    rep = check_formulation_equivalence(H0, [JumpChannel(SZ, 1.0)], PSI0, 1.0, [1e-2, 5e-3, 2.5e-3, 1.25e-3], 3)
    assert rep.monotone
    assert rep.estimated_order >= 0.4


def test_liouville_chain_is_isospectral():
    dt, n = 1e-3, 1000
    chans = [JumpChannel(SMINUS, 1.0)]
    path = sample_noise_path(4, dt, n, [1.0]).increments
    gen = _liouville_chain(chans, dt)
    rho = projector(ket([1, 1j]))
    worst = 0.0
    for k in range(n):
        rho = heun_liouville_step(rho, gen, path[:, k], repurify=False)
        worst = max(worst, np.abs(np.linalg.eigvalsh(rho) - [0, 1]).max())
    assert worst <= 1e-8
