"""
Tests for the min-sum decoder and the error boundary distance.
"""
import itertools

import numpy as np
import pytest
from numpy.testing import assert_allclose, assert_array_equal

from qcts.decoder import awgn_llr, decode, error_boundary_distance, failure_indicator, transmit
from qcts.decoder_models import ChannelModel, DecoderConfig, FailureCriterion
from qcts.models import ExponentMatrix, SupportVector
from qcts.qc_core import is_codeword
from qcts.search_models import SearchMode, SearchStrategy
from qcts.transforms import shift, shift_array
from qcts.ts_search import solve
from tests.conftest import random_exponent_matrix


def min_weight_codeword(E: ExponentMatrix) -> SupportVector:
    for w in range(1, E.length + 1):
        for combo in itertools.combinations(range(E.length), w):
            x = SupportVector.from_indices(combo, E.length)
            if is_codeword(E, x):
                return x
    raise AssertionError("code has no nonzero codeword")


class TestConfig:
    @pytest.mark.parametrize("factor", [0.0, -0.5, 1.5])
    def test_normalization_range(self, factor):
        with pytest.raises(ValueError):
            DecoderConfig(normalization=factor)

    def test_defaults(self):
        cfg = DecoderConfig()
        assert cfg.iterations == 20
        assert cfg.failure == FailureCriterion.NOT_TRANSMITTED

    def test_awgn_llr(self):
        assert_array_equal(awgn_llr(np.array([1.0, -0.5]), 0.5), [8.0, -4.0])
        with pytest.raises(ValueError):
            awgn_llr(np.ones(2), 0.0)


class TestDecode:
    def test_clean_channel_converges_immediately(self, reference_matrix):
        out = decode(reference_matrix, np.full(reference_matrix.length, 4.0), DecoderConfig())
        assert out.converged
        assert out.iterations == 1
        assert not out.hard.any()

    def test_corrects_single_error(self, reference_matrix):
        y = np.ones(reference_matrix.length)
        y[777] = -0.4
        out = decode(reference_matrix, awgn_llr(y, 0.8), DecoderConfig())
        assert out.converged
        assert not out.hard.any()

    def test_rejects_bad_llr(self, small_code):
        with pytest.raises(ValueError):
            decode(small_code, np.ones(5), DecoderConfig())
        bad = np.ones(small_code.length)
        bad[0] = np.nan
        with pytest.raises(ValueError):
            decode(small_code, bad, DecoderConfig())

    def test_history_starts_with_channel_decision(self, small_code):
        llr = np.ones(small_code.length)
        llr[[0, 4]] = -2.0
        out = decode(small_code, llr, DecoderConfig(iterations=5, early_exit=False, track_history=True))
        assert out.history[0] == (0, 4)
        assert len(out.history) == 6
        assert len(out.unsatisfied) == 5

    def test_shift_equivariance(self, rng):
        E = random_exponent_matrix(rng, 3, 6, 8)
        cfg = DecoderConfig(iterations=10, early_exit=False)
        for _ in range(1000):
            llr = rng.normal(1.0, 1.2, size=E.length)
            s = int(rng.integers(1, E.z))
            base = decode(E, llr, cfg)
            shifted = decode(E, shift_array(llr, s, E.cols, E.z), cfg)
            assert_array_equal(shifted.hard, shift_array(base.hard, s, E.cols, E.z))
            assert shifted.unsatisfied == base.unsatisfied

    def test_soft_values_shift_with_the_input(self, rng):
        E = random_exponent_matrix(rng, 3, 6, 8)
        cfg = DecoderConfig(iterations=10, early_exit=False)
        for _ in range(200):
            llr = rng.normal(1.0, 1.2, size=E.length)
            s = int(rng.integers(1, E.z))
            base = decode(E, llr, cfg)
            shifted = decode(E, shift_array(llr, s, E.cols, E.z), cfg)
            assert_allclose(shifted.soft, shift_array(base.soft, s, E.cols, E.z), rtol=0, atol=1e-9)

    def test_single_iteration_without_check_messages_is_channel_decision(self, rng):
        # every check has degree 1, so no extrinsic message reaches a variable
        E = ExponentMatrix(rows=2, cols=2, z=4, entries=((0, -1), (-1, 3)))
        for _ in range(50):
            llr = rng.normal(0.5, 1.5, size=E.length)
            out = decode(E, llr, DecoderConfig(iterations=1, early_exit=False))
            assert_array_equal(out.hard, (llr < 0).astype(np.uint8))
            assert_allclose(out.soft, llr)

    def test_history_baseline_is_sign_of_llr(self, rng):
        E = random_exponent_matrix(rng, 3, 6, 8)
        for _ in range(50):
            llr = rng.normal(0.5, 1.5, size=E.length)
            out = decode(E, llr, DecoderConfig(iterations=1, track_history=True))
            assert out.history[0] == tuple(np.flatnonzero(llr < 0).tolist())

    def test_transmit_is_seeded(self):
        channel = ChannelModel(sigma=0.7)
        a = transmit(channel, 16, np.random.default_rng(5))
        b = transmit(channel, 16, np.random.default_rng(5))
        assert_array_equal(a, b)


class TestFailure:
    def test_codeword_output_depends_on_criterion(self, small_code):
        x = min_weight_codeword(small_code)
        channel = ChannelModel(sigma=0.8)
        y = np.ones(small_code.length)
        y[list(x.support)] = -1.0
        nontx = DecoderConfig(failure=FailureCriterion.NOT_TRANSMITTED)
        noncode = DecoderConfig(failure=FailureCriterion.NON_CODEWORD)
        assert failure_indicator(small_code, y, nontx, channel) == 1
        assert failure_indicator(small_code, y, noncode, channel) == 0

    def test_clean_word_succeeds(self, small_code):
        channel = ChannelModel(sigma=0.8)
        assert failure_indicator(small_code, np.ones(small_code.length), DecoderConfig(), channel) == 0

    def test_shift_invariance(self, rng):
        E = random_exponent_matrix(rng, 3, 6, 8)
        channel = ChannelModel(sigma=0.9)
        for criterion in FailureCriterion:
            cfg = DecoderConfig(iterations=10, failure=criterion)
            for _ in range(100):
                y = transmit(channel, E.length, rng)
                s = int(rng.integers(1, E.z))
                shifted = shift_array(y, s, E.cols, E.z)
                assert failure_indicator(E, shifted, cfg, channel) == failure_indicator(E, y, cfg, channel)

    def test_trapped_on_searched_absorbing_set(self, small_code):
        strategy = SearchStrategy(mode=SearchMode.EXHAUSTIVE, w_max=small_code.length, v_scale=0.0)
        db = solve(small_code, DecoderConfig(), strategy)
        assert db.records
        channel = ChannelModel(sigma=0.8)
        c = channel.transmitted(small_code.length)
        for record in db.records:
            assert record.v == 0
            for mu in (2.0, 3.0):
                y = c - mu * record.support.dense()
                assert failure_indicator(small_code, y, DecoderConfig(), channel) == 1


class TestBoundaryDistance:
    def test_codeword_boundary_is_the_midpoint(self, small_code):
        x = min_weight_codeword(small_code)
        result = error_boundary_distance(small_code, x, DecoderConfig(), ChannelModel(sigma=1.0))
        assert not result.unbounded
        assert 0.5 < result.t <= 0.5 + 2e-3
        assert x.weight <= result.d2 <= x.weight * 1.01

    def test_unbounded_when_ray_too_short(self, small_code):
        x = min_weight_codeword(small_code)
        result = error_boundary_distance(small_code, x, DecoderConfig(), ChannelModel(sigma=1.0), t_max=0.4)
        assert result.unbounded
        assert result.d2 == float("inf")

    def test_zero_support_rejected(self, small_code):
        with pytest.raises(ValueError):
            error_boundary_distance(
                small_code, SupportVector.zero(small_code.length), DecoderConfig(), ChannelModel(sigma=1.0)
            )

    def test_constant_over_the_orbit(self, rng, small_code):
        cfg, channel = DecoderConfig(), ChannelModel(sigma=1.0)
        supports = [min_weight_codeword(small_code)]
        supports += [
            SupportVector.from_unsorted(rng.choice(small_code.length, size=w, replace=False), small_code.length)
            for w in (1, 2, 3)
        ]
        for x in supports:
            base = error_boundary_distance(small_code, x, cfg, channel)
            for s in range(1, small_code.z):
                moved = error_boundary_distance(small_code, shift(x, s, small_code.cols, small_code.z), cfg, channel)
                assert moved.unbounded == base.unbounded
                assert moved.d2 == pytest.approx(base.d2)

    def test_halving_tolerance_stays_within_previous_tolerance(self, small_code):
        x = min_weight_codeword(small_code)
        cfg, channel = DecoderConfig(), ChannelModel(sigma=1.0)
        tol = 1e-2
        coarse = error_boundary_distance(small_code, x, cfg, channel, tol=tol)
        fine = error_boundary_distance(small_code, x, cfg, channel, tol=tol / 2)
        assert abs(fine.t - coarse.t) <= tol
        # d2 = 4*w*t^2 has slope 8*w*t on the bracket
        slope = 8 * x.weight * max(fine.t, coarse.t)
        assert abs(fine.d2 - coarse.d2) <= slope * tol
