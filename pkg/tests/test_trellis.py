"""Tests for the log-domain BCJR and the Gaussian NLE helpers."""

import itertools

import numpy as np
import pytest
from scipy.special import logsumexp

from ep_shortening.errors import NumericalError
from ep_shortening.messages import GaussianMessageVec
from ep_shortening.modulation import enumerate_transformed_alphabet, make_constellation
from ep_shortening.trellis import (
    GaussianBranchMetric,
    Trellis,
    clip_log_pmf,
    gaussian_nle_metric,
    maxstar,
    nle_project,
    run_bcjr,
)


def random_messages(length: int, seed: int) -> GaussianMessageVec:
    rng = np.random.default_rng(seed)
    return GaussianMessageVec(
        rng.standard_normal(2 * length), rng.uniform(0.3, 1.5, 2 * length)
    )


def brute_force_marginals(messages, constellation, taps, n_symbols, real_only):
    """Exact symbol posteriors by enumerating every transmitted sequence."""
    steps = messages.half
    log_probs = []
    sequences = list(itertools.product(range(constellation.order), repeat=n_symbols))
    for sequence in sequences:
        outputs = np.convolve(constellation.points[list(sequence)], taps)
        metric = (messages.mean[:steps] - outputs.real) ** 2 / messages.var[:steps]
        if not real_only:
            residual = messages.mean[steps:] - outputs.imag
            metric = metric + residual**2 / messages.var[steps:]
        log_probs.append(-0.5 * metric.sum())

    log_probs = np.array(log_probs)
    log_probs -= logsumexp(log_probs)
    indices = np.array(sequences)
    marginals = np.zeros((n_symbols, constellation.order))
    for position in range(n_symbols):
        for symbol in range(constellation.order):
            marginals[position, symbol] = np.exp(
                logsumexp(log_probs[indices[:, position] == symbol])
            )
    return marginals


class TestMaxstar:
    """Test cases for maxstar and clip_log_pmf."""

    def test_scalar_value(self):
        """Test log(e^1 + e^2)."""
        assert maxstar(1.0, 2.0) == pytest.approx(2.3132616875182228, abs=1e-14)

    def test_equal_arguments(self):
        """Test log(2 e^a)."""
        assert maxstar(0.5, 0.5) == pytest.approx(0.5 + np.log(2.0))

    def test_negative_infinity(self):
        """Test zero-probability terms."""
        assert maxstar(-np.inf, 3.0) == 3.0
        assert maxstar(-np.inf, -np.inf) == -np.inf

    def test_arrays(self):
        """Test elementwise evaluation."""
        result = maxstar(np.array([0.0, 1.0]), np.array([0.0, -np.inf]))

        np.testing.assert_allclose(result, [np.log(2.0), 1.0])

    def test_clip_log_pmf(self):
        """Test values are clamped to the maximum minus the clip and normalized."""
        result = clip_log_pmf(np.array([0.0, -100.0]), 16.0)

        np.testing.assert_allclose(
            result, np.array([0.0, -16.0]) - np.log1p(np.exp(-16.0))
        )
        assert np.exp(result).sum() == pytest.approx(1.0)


class TestTrellis:
    """Test cases for the trellis topology."""

    def test_counts(self):
        """Test state and branch counts."""
        trellis = Trellis(order=4, memory=2, n_steps=10)

        assert trellis.n_states == 16
        assert trellis.n_branches == 64

    def test_branch_indexing(self):
        """Test branch 5 = (1, 0, 1) of a binary trellis with memory 2."""
        trellis = Trellis(order=2, memory=2, n_steps=4)

        assert trellis.prev_state[5] == 2
        assert trellis.next_state[5] == 1
        assert trellis.newest_symbol[5] == 1

    def test_states_consistent_with_tuples(self):
        """Test each branch leaves its oldest nu symbols and enters its newest nu."""
        pam4 = make_constellation("pam", 4)
        alphabet = enumerate_transformed_alphabet(pam4, np.ones(3))
        trellis = Trellis(order=4, memory=2, n_steps=1)

        for branch, tuple_ in enumerate(alphabet.tuples):
            assert trellis.prev_state[branch] == tuple_[0] * 4 + tuple_[1]
            assert trellis.next_state[branch] == tuple_[1] * 4 + tuple_[2]
            assert trellis.newest_symbol[branch] == tuple_[2]

    def test_memoryless(self):
        """Test a trellis with memory 0 has a single state."""
        trellis = Trellis(order=8, memory=0, n_steps=3)

        assert trellis.n_states == 1
        np.testing.assert_array_equal(trellis.prev_state, np.zeros(8))
        np.testing.assert_array_equal(trellis.next_state, np.zeros(8))


class TestRunBcjr:
    """Test cases for run_bcjr."""

    def run(
        self, constellation, taps, n_symbols, seed, max_log=False, keep_branches=True
    ):
        taps = np.asarray(taps, dtype=complex)
        alphabet = enumerate_transformed_alphabet(constellation, taps)
        nu = len(taps) - 1
        messages = random_messages(n_symbols + nu, seed)
        trellis = Trellis(order=constellation.order, memory=nu, n_steps=n_symbols + nu)
        metric = GaussianBranchMetric(messages, alphabet, n_symbols)
        output = run_bcjr(
            trellis, metric, max_log=max_log, llr_clip=1e3, keep_branches=keep_branches
        )
        return messages, alphabet, output

    @pytest.mark.parametrize(
        "name,order,taps,n_symbols",
        [
            ("pam", 2, [0.8, 0.5, 0.3], 8),
            ("pam", 4, [1.0, -0.6], 5),
            ("qam", 4, [0.7, 0.4 - 0.5j, 0.2j], 5),
        ],
    )
    def test_matches_brute_force(self, name, order, taps, n_symbols):
        """Test exact symbol posteriors against full enumeration."""
        constellation = make_constellation(name, order)
        messages, alphabet, output = self.run(
            constellation, taps, n_symbols, seed=order
        )

        expected = brute_force_marginals(
            messages,
            constellation,
            np.asarray(taps, dtype=complex),
            n_symbols,
            alphabet.is_real,
        )

        np.testing.assert_allclose(output.symbol_pmfs[:n_symbols], expected, atol=1e-9)

    def test_random_complex_taps(self):
        """Test a random complex target on 4-QAM."""
        rng = np.random.default_rng(11)
        taps = rng.standard_normal(2) + 1j * rng.standard_normal(2)
        qam4 = make_constellation("qam", 4)
        messages, alphabet, output = self.run(qam4, taps, 6, seed=3)

        expected = brute_force_marginals(messages, qam4, taps, 6, real_only=False)

        np.testing.assert_allclose(output.symbol_pmfs[:6], expected, atol=1e-9)

    def test_branch_pmfs_marginalize_to_symbols(self):
        """Test branch posteriors sum to the symbol posteriors."""
        pam4 = make_constellation("pam", 4)
        _, _, output = self.run(pam4, [0.9, 0.4], 6, seed=5)

        np.testing.assert_allclose(output.branch_pmfs.sum(axis=1), 1.0)
        by_newest = output.branch_pmfs.reshape(-1, 4, 4).sum(axis=1)
        np.testing.assert_allclose(by_newest, output.symbol_pmfs, atol=1e-12)

    def test_branch_pmfs_are_not_clipped(self):
        """Test a certain sequence projects to the floor despite the symbol clip."""
        pam2 = make_constellation("pam", 2)
        taps = np.array([1.0, 0.5], dtype=complex)
        alphabet = enumerate_transformed_alphabet(pam2, taps)
        outputs = np.convolve(pam2.points[[0, 1, 1, 0]], taps)
        messages = GaussianMessageVec(
            np.concatenate([outputs.real, np.zeros(5)]), np.full(10, 1e-3)
        )
        trellis = Trellis(order=2, memory=1, n_steps=5)

        output = run_bcjr(trellis, GaussianBranchMetric(messages, alphabet, 4))
        moments, clamps = nle_project(output.branch_pmfs, alphabet, 4)

        clipped = np.exp(-16.0) / (1.0 + np.exp(-16.0))
        np.testing.assert_allclose(output.symbol_pmfs[:4].min(axis=1), clipped)
        np.testing.assert_allclose(moments.var[:5], 1e-7)
        np.testing.assert_allclose(moments.mean[:5], outputs.real)
        assert clamps == 5

    def test_recomputed_branches_match(self):
        """Test dropping the branch store does not change the result."""
        pam4 = make_constellation("pam", 4)
        _, _, kept = self.run(pam4, [0.9, 0.4], 6, seed=5)
        _, _, dropped = self.run(pam4, [0.9, 0.4], 6, seed=5, keep_branches=False)

        np.testing.assert_allclose(dropped.symbol_pmfs, kept.symbol_pmfs)
        assert dropped.branch_pmfs is None
        assert dropped.workspace.gamma is None

    def test_max_log_rows_normalized(self):
        """Test max-log posteriors are probability vectors."""
        pam8 = make_constellation("pam", 8)
        _, _, output = self.run(pam8, [0.8, 0.6], 10, seed=1, max_log=True)

        np.testing.assert_allclose(output.symbol_pmfs.sum(axis=1), 1.0)
        assert np.all(output.symbol_pmfs >= 0)

    def test_memoryless_demapper(self):
        """Test nu = 0 reduces to the symbol-wise Gaussian demapper."""
        pam4 = make_constellation("pam", 4)
        _, _, output = self.run(pam4, [1.0], 7, seed=2)
        messages = random_messages(7, 2)

        logits = -0.5 * (messages.mean[:7, None] - pam4.points.real[None, :]) ** 2
        logits = logits / messages.var[:7, None]
        expected = np.exp(logits - logsumexp(logits, axis=1, keepdims=True))

        np.testing.assert_allclose(output.symbol_pmfs, expected, atol=1e-12)

    def test_uninformative_messages(self):
        """Test huge variances give uniform posteriors."""
        pam4 = make_constellation("pam", 4)
        alphabet = enumerate_transformed_alphabet(pam4, np.array([1.0, 0.5]))
        messages = GaussianMessageVec(np.zeros(12), np.full(12, 1e12))

        output = run_bcjr(
            Trellis(order=4, memory=1, n_steps=6),
            GaussianBranchMetric(messages, alphabet, 5),
        )

        np.testing.assert_allclose(output.symbol_pmfs, 0.25, atol=1e-9)

    def test_confident_messages(self):
        """Test tight messages on the noiseless outputs recover the symbols."""
        pam4 = make_constellation("pam", 4)
        taps = np.array([1.0, 0.5])
        alphabet = enumerate_transformed_alphabet(pam4, taps)
        truth = np.array([0, 3, 1, 2, 2])
        outputs = np.convolve(pam4.points[truth], taps).real
        messages = GaussianMessageVec(
            np.concatenate([outputs, np.zeros(6)]), np.full(12, 1e-4)
        )

        output = run_bcjr(
            Trellis(order=4, memory=1, n_steps=6),
            GaussianBranchMetric(messages, alphabet, 5),
        )

        np.testing.assert_array_equal(np.argmax(output.symbol_pmfs[:5], axis=1), truth)
        assert np.all(output.symbol_pmfs[np.arange(5), truth] > 0.99)

    def test_shift_invariance(self):
        """Test a constant offset in every branch metric changes nothing."""
        pam4 = make_constellation("pam", 4)
        alphabet = enumerate_transformed_alphabet(pam4, np.array([1.0, 0.5]))
        metric = GaussianBranchMetric(random_messages(6, 8), alphabet, 5)
        trellis = Trellis(order=4, memory=1, n_steps=6)

        base = run_bcjr(trellis, metric)
        shifted = run_bcjr(trellis, lambda step: metric(step) + 37.0 * (step + 1))

        np.testing.assert_allclose(shifted.symbol_pmfs, base.symbol_pmfs, atol=1e-12)

    def test_non_finite_metric(self):
        """Test a NaN branch metric reports its step."""
        trellis = Trellis(order=2, memory=1, n_steps=5)

        def metric(step):
            return np.full(4, np.nan) if step == 3 else np.zeros(4)

        with pytest.raises(NumericalError, match="Non-finite branch metric") as excinfo:
            run_bcjr(trellis, metric)

        assert excinfo.value.step == 3


class TestGaussianHelpers:
    """Test cases for the branch metric and the NLE projection."""

    def setup_method(self) -> None:
        """Set up test fixtures."""
        self.pam2 = make_constellation("pam", 2)
        self.alphabet = enumerate_transformed_alphabet(self.pam2, np.array([1.0, 0.5]))

    def test_branch_metric_values(self):
        """Test the quadratic metric at an interior step."""
        messages = GaussianMessageVec(
            np.array([0.0, 0.5, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0]), np.full(8, 2.0)
        )
        metric = GaussianBranchMetric(messages, self.alphabet, 3)

        np.testing.assert_allclose(
            metric(1), -0.25 * (0.5 - np.array([-1.5, 0.5, -0.5, 1.5])) ** 2
        )

    def test_branch_metric_clamps_real_only(self):
        """Test imaginary variances are ignored for real alphabets."""
        var = np.array([1.0, 1e-9, 1.0, 1.0, 1e-9, 1e-9, 1e-9, 1e-9])
        metric = GaussianBranchMetric(
            GaussianMessageVec(np.zeros(8), var), self.alphabet, 3
        )

        assert metric.clamp_events == 1
        assert metric.var[1] == pytest.approx(1e-7)

    def test_single_step_metric(self):
        """Test the one-step helper returns the metric and the clamp count."""
        var = np.array([1.0, 1e-9, 1.0, 1.0, 1.0, 1.0, 1.0, 1.0])
        messages = GaussianMessageVec(np.zeros(8), var)

        values, clamps = gaussian_nle_metric(messages, self.alphabet, 1, 3)

        assert clamps == 1
        assert values.shape == (4,)

    def test_projection_moments(self):
        """Test uniform branches give the alphabet mean and variance."""
        branch_pmfs = np.full((4, 4), 0.25)

        moments, clamps = nle_project(branch_pmfs, self.alphabet, 3)

        assert moments.mean[1] == pytest.approx(0.0)
        assert moments.var[1] == pytest.approx(1.25)
        assert moments.var[0] == pytest.approx(1.0)
        assert moments.var[3] == pytest.approx(0.25)
        np.testing.assert_allclose(moments.mean[4:], 0.0)
        np.testing.assert_allclose(moments.var[4:], 1e-7)
        assert clamps == 0

    def test_projection_counts_degenerate_steps(self):
        """Test delta branch posteriors hit the variance floor."""
        branch_pmfs = np.zeros((4, 4))
        branch_pmfs[:, 1] = 1.0

        moments, clamps = nle_project(branch_pmfs, self.alphabet, 3)

        assert clamps == 4
        np.testing.assert_allclose(moments.var[:4], 1e-7)
        assert moments.mean[1] == pytest.approx(0.5)
