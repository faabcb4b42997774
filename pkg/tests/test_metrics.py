"""Tests for SER, SMI and the complexity ledger."""

import math
from unittest.mock import Mock

import numpy as np
import pytest

from ep_shortening.channel import build_real_channel, load_cir
from ep_shortening.errors import InvalidArgumentError
from ep_shortening.metrics import (
    bcjr_complexity,
    complexity_trajectory,
    count_complexity,
    full_bcjr_complexity,
    le_complexity,
    ser,
    smi,
)
from ep_shortening.models import ComplexityLedger, EpConfig
from ep_shortening.modulation import make_constellation


class TestSymbolMetrics:
    """Test cases for ser and smi."""

    def setup_method(self) -> None:
        """Set up test fixtures."""
        self.pam2 = make_constellation("pam", 2)
        self.pam8 = make_constellation("pam", 8)
        self.pmfs = np.array([[0.9, 0.1], [0.2, 0.8], [0.6, 0.4]])
        self.truth = np.array([0, 1, 1])

    def test_ser(self):
        """Test one wrong decision out of three."""
        assert ser(self.pmfs, self.truth) == pytest.approx(1 / 3)

    def test_ser_ties_go_to_lower_index(self):
        """Test argmax tie breaking."""
        assert ser(np.array([[0.5, 0.5]]), np.array([0])) == 0.0

    def test_smi(self):
        """Test the per-symbol log-probability average."""
        expected = 1.0 + np.mean(np.log2([0.9, 0.8, 0.4]))

        assert smi(self.pmfs, self.truth, self.pam2) == pytest.approx(expected)

    def test_smi_perfect_and_uniform(self):
        """Test the capacity and zero limits."""
        truth = np.arange(8)

        assert smi(np.eye(8), truth, self.pam8) == pytest.approx(3.0)
        uniform = np.full((8, 8), 1 / 8)
        assert smi(uniform, truth, self.pam8) == pytest.approx(0.0, abs=1e-12)

    def test_smi_clipped_at_zero(self):
        """Test confidently wrong posteriors do not go negative."""
        pmfs = np.array([[0.0, 1.0], [0.0, 1.0]])

        assert smi(pmfs, np.array([0, 0]), self.pam2) == 0.0

    def test_smi_averages_frames(self):
        """Test a stack of frames is averaged after per-frame clipping."""
        perfect = np.array([[1.0, 0.0], [0.0, 1.0]])
        uniform = np.full((2, 2), 0.5)

        value = smi(np.stack([perfect, uniform]), np.array([[0, 1], [0, 1]]), self.pam2)

        assert value == pytest.approx(0.5)

    def test_shape_mismatch(self):
        """Test posteriors and truth must agree."""
        with pytest.raises(InvalidArgumentError, match="do not match"):
            ser(self.pmfs, np.array([0, 1]))
        with pytest.raises(InvalidArgumentError, match="do not match"):
            smi(self.pmfs, np.array([0, 1]), self.pam2)


class TestComplexity:
    """Test cases for the complexity ledger."""

    def setup_method(self) -> None:
        """Set up test fixtures."""
        self.pam8 = make_constellation("pam", 8)
        self.qam16 = make_constellation("qam", 16)
        self.channel = Mock(memory=4)

    def design_with(self, nu: int, taps=None) -> Mock:
        return Mock(taps=np.ones(nu + 1) if taps is None else np.asarray(taps))

    def test_ledger_arithmetic(self):
        """Test addition, scaling and the weighted number."""
        ledger = ComplexityLedger(additions=1, multiplications=2, jacobian_logs=3)
        total = ledger + ComplexityLedger(
            additions=1, multiplications=1, jacobian_logs=1
        )

        assert total.n_c == 2 + 2 * 3 + 2 * 4
        assert ledger.scaled(2).n_c == 2 * ledger.n_c

    def test_full_bcjr_pam8_memory4(self):
        """Test 18 weighted operations on each of 8^5 branches."""
        ledger = bcjr_complexity(8, 4)

        assert ledger.n_c == 589_824
        assert ledger.additions == 6 * 8**5
        assert ledger.multiplications == 3 * 8**5
        assert ledger.jacobian_logs == 3 * 8**5

    def test_full_bcjr_reference(self):
        """Test the baseline on the Proakis-C model."""
        channel = build_real_channel(load_cir("proakis-c"), 16, 30.0)

        assert full_bcjr_complexity(channel, self.pam8).n_c == 589_824

    def test_memoryless_demapper(self):
        """Test nu = 0 keeps only the metric, marginalization and normalization rows."""
        for order in (2, 4, 8):
            assert bcjr_complexity(order, 0).n_c == 10 * order

    def test_complex_outputs_double_branch_metric(self):
        """Test complex outputs add one branch-metric row per branch."""
        real = bcjr_complexity(16, 1)
        complex_ = bcjr_complexity(16, 1, complex_outputs=True)

        assert complex_.n_c - real.n_c == 7 * 16**2

    def test_le_window(self):
        """Test w = 3L + 1 taps and the w^3 inverse."""
        assert le_complexity(4, with_inverse=False).n_c == 12 + 2 * 13
        assert le_complexity(4, with_inverse=True).multiplications == 13 + 13**3
        two_components = le_complexity(4, with_inverse=False, components=2)
        assert two_components.n_c == 2 * (12 + 2 * 13)

    def test_single_pass_composition(self):
        """Test N_It = 0, nu = 0: LE, cavity and the demapper."""
        config = EpConfig(nu=0, iterations=0)

        ledger = count_complexity(config, self.channel, self.design_with(0), self.pam8)

        assert ledger.n_c == (12 + 2 * 13) + (2 + 2 * 6) + 10 * 8

    def test_trajectory_length_and_monotone(self):
        """Test one cumulative entry per pass, strictly increasing."""
        config = EpConfig(nu=2, iterations=4)

        trajectory = complexity_trajectory(
            config, self.channel, self.design_with(2), self.pam8
        )

        assert len(trajectory) == 5
        values = [entry.n_c for entry in trajectory]
        assert all(b > a for a, b in zip(values[:-1], values[1:]))

    def test_diagonal_init_costs_more(self):
        """Test the first-pass inverse is only skipped with the mismatched start."""
        design = self.design_with(1)
        mismatched = count_complexity(
            EpConfig(nu=1, iterations=0), self.channel, design, self.pam8
        )
        diagonal = count_complexity(
            EpConfig(nu=1, iterations=0, mismatched_init=False),
            self.channel,
            design,
            self.pam8,
        )

        assert diagonal.n_c - mismatched.n_c == 2 * 13**3

    def test_grows_with_memory(self):
        """Test a longer target costs more."""
        values = [
            count_complexity(
                EpConfig(nu=nu, iterations=4),
                self.channel,
                self.design_with(nu),
                self.pam8,
            ).n_c
            for nu in range(4)
        ]

        assert all(b > a for a, b in zip(values[:-1], values[1:]))
        assert values[-1] < 589_824 * 5

    def test_complex_target_doubles_components(self):
        """Test QAM counts both real components."""
        real = count_complexity(
            EpConfig(nu=1, iterations=0), self.channel, self.design_with(1), self.pam8
        )
        qam = count_complexity(
            EpConfig(nu=1, iterations=0), self.channel, self.design_with(1), self.qam16
        )

        assert qam.n_c > real.n_c
        assert math.isfinite(qam.n_c)
