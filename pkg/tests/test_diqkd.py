import math

import numpy as np
import pytest

from cqentropy import bb84, bounds, diqkd, minentropy, qmath
from cqentropy.diqkd import TSIRELSON, MeasurementAngles, SingleRoundSpectrum
from cqentropy.errors import InvalidDistribution, OutOfRange

PHI_PLUS = np.array([1, 0, 0, 1], dtype=complex) / np.sqrt(2)
SX = np.array([[0, 1], [1, 0]], dtype=complex)
SZ = np.diag([1.0, -1.0]).astype(complex)


def params(omega=0.85, n=10**6, k=10**6, eps_t=1e-10, eps_g=1e-10, leak=0.0):
    return diqkd.DiqkdParams(n, k, omega, leak, bounds.FailureBudget.for_diqkd(eps_t, eps_g))


def random_spectrum(rng):
    return SingleRoundSpectrum(*rng.dirichlet(np.full(4, 0.6)))


class TestDecompose:
    def test_standard(self):
        dec = diqkd.chsh_decompose(diqkd.STANDARD_ANGLES)
        assert dec.lambda_plus == pytest.approx(0.5)
        assert dec.lambda_minus == pytest.approx(0.5)

    def test_product_measurement(self):
        dec = diqkd.chsh_decompose(MeasurementAngles(0.3, 0.0))
        assert dec.lambda_plus == pytest.approx(1.0)
        assert dec.lambda_minus == pytest.approx(0.0, abs=1e-15)

    def test_matches_assembled_operator(self):
        a = MeasurementAngles(math.pi / 8, math.pi / 6)
        s = a.chsh_operator()
        # S = (1/2) sum T_pq sigma_p sigma_q, so S^dag S has eigenvalues (sqrt L+ +- sqrt L-)^2 / 4
        ev = qmath.eig_hermitian(s.conj().T @ s).eigenvalues
        dec = diqkd.chsh_decompose(a)
        rp, rm = math.sqrt(dec.lambda_plus), math.sqrt(dec.lambda_minus)
        expected = sorted([(rp - rm) ** 2 / 4] * 2 + [(rp + rm) ** 2 / 4] * 2)
        assert np.allclose(ev, expected, atol=1e-10)

    def test_random_angles_against_svd(self):
        rng = np.random.default_rng(1)
        for _ in range(100):
            a = MeasurementAngles(*rng.uniform(-math.pi, math.pi, 2))
            sv = np.linalg.svd(a.correlation_matrix(), compute_uv=False)
            dec = diqkd.chsh_decompose(a)
            assert np.allclose(sv**2, [dec.lambda_plus, dec.lambda_minus], atol=1e-10)

    def test_correlation_matrix_expands_operator(self):
        a = MeasurementAngles(0.4, -1.1)
        t = a.correlation_matrix()
        paulis = (SZ, SX)
        rebuilt = sum(0.5 * t[p, q] * np.kron(paulis[p], paulis[q]) for p in range(2) for q in range(2))
        assert np.allclose(rebuilt, a.chsh_operator(), atol=1e-14)

    def test_rotated_frame(self):
        rng = np.random.default_rng(2)
        for _ in range(30):
            a = MeasurementAngles(*rng.uniform(-math.pi, math.pi, 2))
            va, vb = diqkd.rotated_frame(a)
            u = np.kron(va, vb)
            dec = diqkd.chsh_decompose(a)
            target = 0.5 * (math.sqrt(dec.lambda_plus) * np.kron(SZ, SZ) + math.sqrt(dec.lambda_minus) * np.kron(SX, SX))
            assert np.allclose(u.conj().T @ a.chsh_operator() @ u, target, atol=1e-12)

    def test_invalid_decomposition(self):
        with pytest.raises(OutOfRange):
            diqkd.ChshDecomposition(0.7, 0.7)


class TestWinningFreq:
    def test_tsirelson(self):
        dec = diqkd.chsh_decompose(diqkd.STANDARD_ANGLES)
        assert diqkd.winning_freq(SingleRoundSpectrum(1, 0, 0, 0), dec) == pytest.approx(TSIRELSON, abs=1e-12)
        assert TSIRELSON == pytest.approx(0.853553, abs=1e-6)

    def test_uniform(self):
        dec = diqkd.chsh_decompose(MeasurementAngles(0.2, 0.9))
        assert diqkd.winning_freq(SingleRoundSpectrum(0.25, 0.25, 0.25, 0.25), dec) == pytest.approx(0.5)

    def test_matches_operator_expectation(self):
        rng = np.random.default_rng(3)
        for _ in range(200):
            spec = random_spectrum(rng)
            a = MeasurementAngles(*rng.uniform(-math.pi, math.pi, 2))
            va, vb = diqkd.rotated_frame(a)
            u = np.kron(va, vb)
            rho = u @ spec.density_matrix() @ u.conj().T
            direct = 0.5 + 0.5 * np.trace(a.chsh_operator() @ rho).real
            assert diqkd.winning_freq(spec, diqkd.chsh_decompose(a)) == pytest.approx(direct, abs=1e-12)

    def test_game_accounting(self):
        # win probability from Born-rule tables of the four settings
        rng = np.random.default_rng(4)
        for _ in range(50):
            spec = random_spectrum(rng)
            a = MeasurementAngles(*rng.uniform(-math.pi, math.pi, 2))
            va, vb = diqkd.rotated_frame(a)
            u = np.kron(va, vb)
            rho = u @ spec.density_matrix() @ u.conj().T
            ops = a.operators()
            win = 0.0
            for ka in (0, 1):
                for kb in (0, 1):
                    table = diqkd.outcome_table(rho, ops[ka], ops[2 + kb])
                    win += 0.25 * sum(table[x, y] for x in (0, 1) for y in (0, 1) if (x ^ y) == (ka & kb))
            assert diqkd.winning_freq(spec, diqkd.chsh_decompose(a)) == pytest.approx(win, abs=1e-10)

    def test_never_beats_tsirelson(self):
        rng = np.random.default_rng(5)
        for _ in range(2000):
            dec = diqkd.chsh_decompose(MeasurementAngles(*rng.uniform(-math.pi, math.pi, 2)))
            assert diqkd.winning_freq(random_spectrum(rng), dec) <= TSIRELSON + 1e-12


class TestPhaseError:
    def test_tsirelson(self):
        assert diqkd.phase_error_from_omega(TSIRELSON) == 0.0

    def test_classical(self):
        assert diqkd.phase_error_from_omega(0.75) == 0.5
        assert diqkd.phase_error_from_omega(0.5) == 0.5
        assert diqkd.phase_error_from_omega(0.1) == 0.5

    def test_example(self):
        assert diqkd.phase_error_from_omega(0.84) == pytest.approx(0.5 * (1 - math.sqrt(0.8496)), abs=1e-12)
        assert diqkd.phase_error_from_omega(0.84) == pytest.approx(0.0391, abs=1e-4)

    def test_above_tsirelson(self):
        assert diqkd.phase_error_from_omega(0.9) == 0.0
        assert diqkd.phase_error_from_omega(1.0) == 0.0

    def test_monotone(self):
        grid = np.linspace(0.75, TSIRELSON, 500)
        vals = [diqkd.phase_error_from_omega(w) for w in grid]
        assert all(a >= b for a, b in zip(vals, vals[1:]))

    def test_out_of_range(self):
        with pytest.raises(OutOfRange):
            diqkd.phase_error_from_omega(1.2)

    def test_sound_for_phase_mass(self):
        rng = np.random.default_rng(6)
        checked = 0
        for _ in range(3000):
            spec = random_spectrum(rng)
            w = diqkd.winning_freq(spec, diqkd.chsh_decompose(MeasurementAngles(*rng.uniform(-math.pi, math.pi, 2))))
            if w > 0.75:
                checked += 1
                assert spec.phase_mass <= diqkd.phase_error_from_omega(w) + 1e-9
        assert checked > 20


class TestSingleRoundHmin:
    def test_examples(self):
        assert diqkd.single_round_hmin(SingleRoundSpectrum(1, 0, 0, 0)) == pytest.approx(1.0)
        assert diqkd.single_round_hmin(SingleRoundSpectrum(0.5, 0, 0, 0.5)) == pytest.approx(1.0)
        assert diqkd.single_round_hmin(SingleRoundSpectrum(0.5, 0.5, 0, 0)) == pytest.approx(0.0, abs=1e-12)

    def test_matches_marginalized_bell_spectrum(self):
        rng = np.random.default_rng(7)
        for _ in range(100):
            spec = random_spectrum(rng)
            lam = spec.as_array().reshape(2, 2)  # lam[j, i] with index order 00, 10, 01, 11
            w = np.zeros((2, 2))
            for i in (0, 1):
                for j in (0, 1):
                    w[i ^ j, i] += lam[j, i]
            assert diqkd.single_round_hmin(spec) == pytest.approx(bb84.marginalize_spectrum(bb84.BellSpectrum(w)), abs=1e-12)

    @pytest.mark.parametrize("theta", [0.0, 0.3, math.pi / 4, 1.2, math.pi / 2])
    def test_lower_bounds_exact_value_at_any_angle(self, theta):
        # Alice measures cos t Z + sin t X on the purified Bell-diagonal state
        rng = np.random.default_rng(int(theta * 100))
        op = math.cos(theta) * SZ + math.sin(theta) * SX
        basis = qmath.eig_hermitian(op).eigenvectors
        paulis = [np.eye(2), SZ, SX, SX @ SZ]
        for _ in range(20):
            spec = random_spectrum(rng)
            psi = np.stack([np.kron(np.eye(2), p) @ PHI_PLUS for p in paulis], axis=-1)
            psi = (psi * np.sqrt(spec.as_array())).reshape(2, 2, 4)  # (a, b, e)
            conds = []
            for x in (0, 1):
                wvec = np.einsum("a,abe->be", basis[:, x].conj(), psi)
                conds.append(wvec.T @ wvec.conj())
            state = minentropy.CQState.from_subnormalized(np.stack(conds))
            exact = -math.log2(minentropy.helstrom(state))
            assert exact >= diqkd.single_round_hmin(spec) - 1e-9

    def test_werner(self):
        spec = SingleRoundSpectrum.werner(0.1)
        assert spec.as_array() == pytest.approx([0.925, 0.025, 0.025, 0.025])
        assert 0.0 < diqkd.single_round_hmin(spec) < 1.0

    def test_invalid(self):
        with pytest.raises(InvalidDistribution):
            SingleRoundSpectrum(0.5, 0.5, 0.5, -0.5)


class TestKeyLength:
    def test_omega_hat_example(self):
        p = params()
        assert diqkd.omega_hat(p) == pytest.approx(0.83969, abs=1e-5)
        assert diqkd.omega_hat(p) == pytest.approx(
            0.85 - bounds.chsh_statistical_penalty(10**6, 1e-10) - bounds.serfling_delta_diqkd(10**6, 10**6, 1e-10), abs=1e-15
        )

    def test_omega_hat_clamped(self):
        assert diqkd.omega_hat(params(omega=0.001, n=10, k=10)) == 0.0

    def test_classical_gives_zero(self):
        rep = diqkd.diqkd_key_length(params(omega=0.76))
        assert rep.ell == 0
        assert rep.e_hat == 0.5

    def test_tsirelson_large_n(self):
        rep = diqkd.diqkd_key_length(params(omega=1.0, n=10**12, k=10**12))
        assert rep.terms["rate"] > 0.99

    def test_full_chain(self):
        n = 10**6
        p = diqkd.DiqkdParams.with_auto_leak(n, n, 0.85, 0.05, bounds.FailureBudget.for_diqkd(1e-10, 1e-10), efficiency=1.0)
        rep = diqkd.diqkd_key_length(p)
        e = diqkd.phase_error_from_omega(0.85 - 0.006917 - 0.003393)
        assert rep.e_hat == pytest.approx(0.0401, abs=2e-4)
        assert rep.e_hat == pytest.approx(e, abs=1e-5)
        fraction = 1 - bounds.binary_entropy(0.0401) - bounds.binary_entropy(0.05)
        assert rep.terms["rate"] == pytest.approx(fraction, abs=2e-3)
        assert rep.terms["key_rounds"] == 4 * n
        assert rep.delta_sec <= p.budget.eps_sec

    def test_monotone_in_omega(self):
        ells = [diqkd.diqkd_key_length(params(omega=w, leak=1e5)).ell for w in np.linspace(0.7, 1.0, 61)]
        assert all(a <= b for a, b in zip(ells, ells[1:]))
        assert ells[-1] > 0

    def test_budget_required(self):
        with pytest.raises(OutOfRange):
            diqkd.DiqkdParams(10, 10, 0.8, 0.0, bounds.FailureBudget(eps_smooth=1e-10))


class TestSimulator:
    def test_tsirelson(self):
        s = diqkd.simulate_chsh(40_000, SingleRoundSpectrum(1, 0, 0, 0), diqkd.STANDARD_ANGLES, seed=1)
        assert abs(s.omega - TSIRELSON) <= 3 * math.sqrt(TSIRELSON * (1 - TSIRELSON) / 40_000)
        assert sum(m for m, _ in s.counts.values()) == 40_000

    def test_uniform(self):
        s = diqkd.simulate_chsh(40_000, SingleRoundSpectrum(0.25, 0.25, 0.25, 0.25), diqkd.STANDARD_ANGLES, seed=2)
        assert abs(s.omega - 0.5) <= 3 * math.sqrt(0.25 / 40_000)

    def test_werner_matches_prediction(self):
        rng = np.random.default_rng(3)
        for t in range(5):
            spec = SingleRoundSpectrum.werner(float(rng.uniform(0, 0.5)))
            angles = MeasurementAngles(*rng.uniform(-math.pi, math.pi, 2))
            w = diqkd.winning_freq(spec, diqkd.chsh_decompose(angles))
            s = diqkd.simulate_chsh(50_000, spec, angles, seed=30 + t)
            assert abs(s.omega - w) <= 3.5 * math.sqrt(w * (1 - w) / 50_000)

    def test_qber(self):
        s = diqkd.simulate_chsh(1000, SingleRoundSpectrum(1, 0, 0, 0), diqkd.STANDARD_ANGLES, seed=4, key_rounds=5000)
        assert s.qber == 0.0
        assert diqkd.simulate_chsh(1000, SingleRoundSpectrum(1, 0, 0, 0), diqkd.STANDARD_ANGLES, seed=4).qber is None

    def test_deterministic(self):
        spec = SingleRoundSpectrum.werner(0.1)
        a = diqkd.simulate_chsh(2000, spec, diqkd.STANDARD_ANGLES, seed=7)
        assert a == diqkd.simulate_chsh(2000, spec, diqkd.STANDARD_ANGLES, seed=7)

    def test_too_few_rounds(self):
        with pytest.raises(OutOfRange):
            diqkd.simulate_chsh(3, SingleRoundSpectrum(1, 0, 0, 0), diqkd.STANDARD_ANGLES, seed=0)
