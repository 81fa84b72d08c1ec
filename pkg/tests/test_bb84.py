import math

import numpy as np
import pytest
from scipy.optimize import brentq

from cqentropy import bb84, bounds, minentropy
from cqentropy.bb84 import BellSpectrum, Bb84Params
from cqentropy.errors import InvalidDistribution, OutOfRange, TooLarge


def params(n=10**4, k=10**4, e_x=0.02, e_z=0.02, leak=None, eps=1e-10, eps_cor=1e-15):
    budget = bounds.FailureBudget(eps_smooth=eps, eps_cor=eps_cor)
    if leak is None:
        return Bb84Params.with_auto_leak(n, k, e_x, e_z, budget)
    return Bb84Params(n, k, e_x, e_z, leak, budget)


class TestParams:
    def test_auto_leak(self):
        p = params(n=1000, e_x=0.05)
        assert p.leak_ec == pytest.approx(1.16 * 1000 * bounds.binary_entropy(0.05))

    @pytest.mark.parametrize("kw", [{"e_x": 0.6}, {"e_z": -0.01}, {"n": 0}, {"k": 2.5}, {"leak": -1.0}])
    def test_invalid(self, kw):
        with pytest.raises(OutOfRange):
            params(**kw)

    def test_integral_float_counts(self):
        assert params(n=1e8, k=1e8).n == 10**8


class TestEHat:
    def test_example(self):
        assert bb84.bb84_e_hat(params()) == pytest.approx(0.08787, abs=1e-5)
        assert bb84.bb84_e_hat(params()) == pytest.approx(0.02 + bounds.serfling_delta(10**4, 10**4, 1e-10), abs=1e-15)

    def test_eps_near_one(self):
        p = params(e_z=0.03, eps=0.2499999)
        assert bb84.bb84_e_hat(p) == pytest.approx(0.03 + bounds.serfling_delta(p.n, p.k, 0.2499999))
        assert bounds.serfling_delta(10**4, 10**4, 1 - 1e-12) < 1e-7

    def test_clamped(self):
        assert bb84.bb84_e_hat(params(n=10, k=10, e_z=0.49)) == 0.5


class TestKeyLength:
    def test_clamped_gives_zero(self):
        rep = bb84.bb84_key_length(params(n=10, k=10, e_z=0.49))
        assert rep.ell == 0
        assert rep.delta_sec == 0.0

    def test_large_n(self):
        n = 10**8
        p = Bb84Params(n, n, 0.05, 0.05, n * bounds.binary_entropy(0.05), bounds.FailureBudget.from_eps_sec(1e-9))
        rep = bb84.bb84_key_length(p)
        assert rep.ell / n == pytest.approx(1 - 2 * bounds.binary_entropy(0.05), abs=1e-2)
        assert rep.terms["rate"] == rep.ell / n
        assert rep.hmin_smooth == pytest.approx(n * (1 - bounds.binary_entropy(rep.e_hat)))

    def test_asymptotic_threshold(self):
        e = brentq(lambda x: 1 - 2 * bounds.binary_entropy(x), 0.01, 0.5)
        assert e == pytest.approx(0.1100, abs=1e-4)

    def test_formula(self):
        p = params(n=10**6, k=10**5, e_x=0.01, e_z=0.01)
        rep = bb84.bb84_key_length(p)
        rhs = (
            p.n * (1 - bounds.binary_entropy(rep.e_hat))
            - p.leak_ec
            - math.log2(2 / (p.budget.eps_sec**2 * p.budget.eps_cor))
        )
        assert rep.ell == math.floor(rhs)
        assert 0 < rep.delta_sec <= p.budget.eps_sec

    def test_report_dict(self):
        d = bb84.bb84_key_length(params()).to_dict()
        assert set(d) >= {"hmin_smooth", "e_hat", "ell", "delta_sec", "terms"}

    def test_monotone_in_e_z(self):
        ells = [bb84.bb84_key_length(params(n=10**6, k=10**5, e_z=e, leak=1e4)).ell for e in np.linspace(0, 0.1, 21)]
        assert all(a >= b for a, b in zip(ells, ells[1:]))

    def test_monotone_in_leak(self):
        ells = [bb84.bb84_key_length(params(n=10**6, k=10**5, leak=leak)).ell for leak in np.linspace(0, 5e5, 21)]
        assert all(a >= b for a, b in zip(ells, ells[1:]))

    def test_monotone_in_n(self):
        ells = [bb84.bb84_key_length(params(n=n, k=10**5, leak=0.0)).ell for n in np.logspace(3, 8, 21).astype(int)]
        assert all(a <= b for a, b in zip(ells, ells[1:]))

    def test_ell_at_most_n(self):
        rep = bb84.bb84_key_length(params(n=10**6, k=10**9, e_x=0.0, e_z=0.0, leak=0.0))
        assert rep.ell <= 10**6


class TestBellSpectrum:
    def test_from_mapping(self):
        s = BellSpectrum.from_mapping({("01", "10"): 0.5, ("00", "00"): 0.5})
        assert s.n_pairs == 2
        assert s.weights[1, 2] == 0.5

    def test_mixed_lengths(self):
        with pytest.raises(InvalidDistribution):
            BellSpectrum.from_mapping({("0", "1"): 0.5, ("00", "00"): 0.5})

    def test_not_normalized(self):
        with pytest.raises(InvalidDistribution):
            BellSpectrum(np.full((2, 2), 0.3))

    def test_product(self):
        s = BellSpectrum.product(np.array([[0.7, 0.1], [0.1, 0.1]]), 3)
        assert s.n_pairs == 3
        assert s.weights[0, 0] == pytest.approx(0.343)


class TestExactBound:
    def test_perfect_pairs(self):
        for n in (1, 3, 6):
            w = np.zeros((2**n, 2**n))
            w[0, 0] = 1.0
            assert bb84.bell_measure_x_hmin(BellSpectrum(w)) == pytest.approx(n)
            assert bb84.marginalize_spectrum(BellSpectrum(w)) == pytest.approx(n)

    def test_uniform_i_gives_zero(self):
        n = 3
        w = np.zeros((2**n, 2**n))
        w[:, 0] = 1 / 2**n
        assert bb84.bell_measure_x_hmin(BellSpectrum(w)) == pytest.approx(0.0, abs=1e-12)

    def test_too_large(self):
        w = np.zeros((2**7, 2**7))
        w[0, 0] = 1
        with pytest.raises(TooLarge):
            bb84.bell_measure_x_hmin(BellSpectrum(w))

    def test_branch_additivity(self):
        rng = np.random.default_rng(3)
        for _ in range(200):
            s = BellSpectrum.random(int(rng.integers(1, 4)), rng, concentration=float(rng.uniform(0.2, 2)))
            exact = 2.0 ** -bb84.bell_measure_x_hmin(s)
            assert bb84.branch_guess_probs(s).sum() == pytest.approx(exact, abs=1e-9)

    def test_marginal_is_lower_bound(self):
        rng = np.random.default_rng(4)
        for _ in range(500):
            s = BellSpectrum.random(int(rng.integers(1, 5)), rng, concentration=float(rng.uniform(0.1, 3)))
            assert bb84.marginalize_spectrum(s) <= bb84.bell_measure_x_hmin(s) + 1e-9

    def test_product_equality(self):
        rng = np.random.default_rng(5)
        for _ in range(50):
            size = 2 ** int(rng.integers(1, 4))
            lam, mu = rng.dirichlet(np.ones(size)), rng.dirichlet(np.ones(size))
            s = BellSpectrum(np.outer(lam, mu))
            assert bb84.marginalize_spectrum(s) == pytest.approx(bb84.bell_measure_x_hmin(s), abs=1e-9)

    def test_iid_additive(self):
        per = np.array([[0.85, 0.05], [0.06, 0.04]])
        one = bb84.bell_measure_x_hmin(BellSpectrum.product(per, 1))
        for n in (2, 4, 6):
            assert bb84.bell_measure_x_hmin(BellSpectrum.product(per, n)) == pytest.approx(n * one, abs=1e-9)


class TestExplicitState:
    @pytest.mark.parametrize("n", [1, 2])
    def test_matches_povm_search(self, n):
        rng = np.random.default_rng(10 + n)
        for _ in range(3):
            s = BellSpectrum.random(n, rng)
            state = bb84.explicit_cq_state(s)
            assert minentropy.povm_search(state, restarts=3) == pytest.approx(2.0 ** -bb84.bell_measure_x_hmin(s), abs=1e-6)

    def test_single_pair_helstrom(self):
        rng = np.random.default_rng(7)
        for _ in range(20):
            s = BellSpectrum.random(1, rng)
            state = bb84.explicit_cq_state(s)
            assert minentropy.helstrom(state) == pytest.approx(2.0 ** -bb84.bell_measure_x_hmin(s), abs=1e-9)

    def test_z_basis_transposes(self):
        rng = np.random.default_rng(8)
        for _ in range(3):
            s = BellSpectrum.random(2, rng)
            state = bb84.explicit_cq_state(s, key_basis="z")
            swapped = BellSpectrum(s.weights.T)
            assert minentropy.povm_search(state, restarts=3) == pytest.approx(2.0 ** -bb84.bell_measure_x_hmin(swapped), abs=1e-6)

    def test_uniform_key(self):
        s = BellSpectrum.random(2, np.random.default_rng(0))
        assert np.allclose(bb84.explicit_cq_state(s).probs, 0.25)

    def test_bad_basis(self):
        with pytest.raises(OutOfRange):
            bb84.explicit_cq_state(BellSpectrum(np.eye(2) / 2), key_basis="y")


class TestSimulator:
    def test_noiseless(self):
        s = bb84.simulate_bb84(5000, 0.0, seed=1)
        assert s.e_x == 0.0 and s.e_z == 0.0 and s.phase_error == 0.0

    def test_fully_depolarized(self):
        s = bb84.simulate_bb84(40_000, 1.0, seed=2)
        assert s.e_x == pytest.approx(0.5, abs=0.02)
        assert s.e_z == pytest.approx(0.5, abs=0.02)

    def test_counts_consistent(self):
        s = bb84.simulate_bb84(10_000, 0.1, seed=3)
        c = s.counts
        assert c["pairs"] == 10_000
        assert c["n_x"] + c["n_z"] <= 10_000
        assert s.e_z == c["err_z"] / c["n_z"]
        assert c["n_x"] == pytest.approx(2500, abs=4 * math.sqrt(10_000 * 0.25 * 0.75))

    def test_deterministic(self):
        assert bb84.simulate_bb84(1000, 0.05, seed=9) == bb84.simulate_bb84(1000, 0.05, seed=9)
        assert bb84.simulate_bb84(1000, 0.05, seed=9) != bb84.simulate_bb84(1000, 0.05, seed=10)

    def test_unbiased(self):
        q, trials = 0.08, 300
        ez = np.array([bb84.simulate_bb84(10**4, q, seed=100 + t).e_z for t in range(trials)])
        assert abs(ez.mean() - q / 2) <= 3 * ez.std(ddof=1) / math.sqrt(trials)

    def test_invalid(self):
        with pytest.raises(OutOfRange):
            bb84.simulate_bb84(100, 1.5, seed=0)
        with pytest.raises(OutOfRange):
            bb84.simulate_bb84(0, 0.1, seed=0)


def test_entropy_bounds_binomial_tail():
    for n in range(1, 21):
        for e in np.linspace(0.0, 0.5, 11):
            assert n * bounds.binary_entropy(e) >= bounds.binomial_tail_log(n, e) - 1e-12
