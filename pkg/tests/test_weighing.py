"""
Tests for the importance-sampling estimator.
"""
import math

import numpy as np
import pytest
from numpy.testing import assert_allclose, assert_array_equal

import qcts.weighing as weighing
from qcts.decoder_models import DecoderConfig
from qcts.errors import RuntimeFailure
from qcts.models import ExponentMatrix, SupportVector
from qcts.search_models import DatabaseHeader, SearchMode, SearchStrategy, TsDatabase
from qcts.transforms import canonical_indices, key_bytes, shift_indices
from qcts.ts_search import solve
from qcts.weighing import (
    build_tables, draw_samples, estimate_pf, make_ensemble, reference_delta, sample_bias_point,
    sample_generator, table_disjointness, weight_denominator_naive, weight_denominator_tabular,
    weight_numerator
)
from qcts.weighing_models import BiasEnsemble, BiasMode, Denominator, WeightPolicy

# Column weight 3 everywhere, so low-weight supports stay near the failure boundary.
WEIGHING_CODE = ExponentMatrix(
    rows=3, cols=6, z=5, entries=((0, 1, 2, 3, 4, 0), (0, 2, 4, 1, 3, 1), (0, 3, 1, 4, 2, 3))
)


def random_ensemble(rng, p, n, z, mu=1.7, sigma=0.8, max_weight=6) -> BiasEnsemble:
    supports, keys = [], set()
    while len(supports) < p:
        idx = np.sort(rng.choice(n * z, size=int(rng.integers(1, max_weight + 1)), replace=False))
        key = key_bytes(canonical_indices(idx, z)[0])
        if key in keys:
            continue
        keys.add(key)
        supports.append(SupportVector.from_indices(idx, n * z))
    return BiasEnsemble(supports=supports, mu=mu, sigma=sigma, n=n, z=z)


def basis_ensemble(mu=0.5, sigma=0.8, p=2) -> BiasEnsemble:
    db = solve(WEIGHING_CODE, DecoderConfig(), SearchStrategy(mode=SearchMode.EXHAUSTIVE, w_max=2, v_scale=3.0))
    return make_ensemble(db, mu, sigma, p_max=p)


class TestEnsemble:
    def test_equivalent_supports_rejected(self):
        a = SupportVector(length=8, support=(0, 1))
        b = SupportVector(length=8, support=(1, 2))
        with pytest.raises(ValueError, match="non-equivalent"):
            BiasEnsemble(supports=[a, b], mu=1.0, sigma=1.0, n=2, z=4)

    def test_zero_support_rejected(self):
        with pytest.raises(ValueError):
            BiasEnsemble(supports=[SupportVector.zero(8)], mu=1.0, sigma=1.0, n=2, z=4)

    def test_length_mismatch_rejected(self):
        with pytest.raises(ValueError):
            BiasEnsemble(supports=[SupportVector(length=9, support=(0,))], mu=1.0, sigma=1.0, n=2, z=4)

    def test_make_ensemble_prefers_low_v(self):
        ens = basis_ensemble(p=3)
        assert ens.p == 3
        assert (ens.n, ens.z) == (6, 5)

    def test_make_ensemble_from_empty_database(self):
        header = DatabaseHeader(rows=1, cols=2, z=4, matrix_digest="0" * 16, strategy="exhaustive")
        with pytest.raises(ValueError):
            make_ensemble(TsDatabase(header=header), 1.0, 1.0)


class TestTables:
    def test_single_bit_geometry(self):
        ens = BiasEnsemble(supports=[SupportVector(length=24, support=(9,))], mu=1.0, sigma=1.0, n=3, z=8)
        tables = build_tables(ens, 3, 8)
        assert_array_equal(tables.j1_indices(0, 0), [0])
        assert tables.j2_indices(0, 0).size == 7

    def test_tables_recompute_from_ensemble(self, rng):
        ens = random_ensemble(rng, 3, 4, 9)
        tables = build_tables(ens, 4, 9)
        for k in range(3):
            for l in range(3):
                B = ens.supports[l].array()
                for j in range(9):
                    A = shift_indices(ens.supports[k].array(), j, 9)
                    assert_array_equal(tables.t1_set(k, l, j), np.setdiff1d(A, B))
                    assert_array_equal(tables.t2_set(k, l, j), np.setdiff1d(B, A))
                    assert tables.j1[k, l, j] == bool(np.intersect1d(A, B).size)

    def test_shift_identity(self, rng):
        for _ in range(10):
            z = int(rng.integers(2, 12))
            ens = random_ensemble(rng, 3, 3, z)
            tables = build_tables(ens, 3, z)
            for k in range(3):
                for l in range(3):
                    for j in range(z):
                        lhs = shift_indices(tables.t1_set(k, l, j), z - j, z)
                        assert_array_equal(lhs, tables.t2_set(l, k, (z - j) % z))

    def test_disjointness_on_sparse_ensemble(self, rng):
        ens = random_ensemble(rng, 4, 20, 32, max_weight=4)
        share = table_disjointness(build_tables(ens, 20, 32))
        assert 0.5 < share <= 1.0

    def test_length_mismatch(self, rng):
        ens = random_ensemble(rng, 1, 3, 4)
        with pytest.raises(ValueError):
            build_tables(ens, 3, 5)


class TestSampling:
    def test_noiseless_limit(self):
        ens = BiasEnsemble(supports=[SupportVector(length=6, support=(1, 4))], mu=1.7, sigma=1e-9, n=2, z=3)
        y, xi = sample_bias_point(ens, 0, sample_generator(1, 0))
        assert_allclose(y, [1.0, -0.7, 1.0, 1.0, -0.7, 1.0], atol=1e-6)

    def test_seeded(self, rng):
        ens = random_ensemble(rng, 2, 3, 4)
        a = sample_bias_point(ens, 5, sample_generator(7, 5))
        b = sample_bias_point(ens, 5, sample_generator(7, 5))
        assert_array_equal(a[0], b[0])
        assert not np.array_equal(a[0], sample_bias_point(ens, 5, sample_generator(7, 6))[0])

    def test_mean_is_bias_point(self, rng):
        ens = random_ensemble(rng, 2, 3, 4, sigma=0.9)
        trials = 4000
        total = np.zeros(ens.length)
        for t in range(trials):
            total += sample_bias_point(ens, 1, sample_generator(3, t))[0]
        expected = np.ones(ens.length)
        expected[ens.supports[1].array()] -= ens.mu
        assert np.all(np.abs(total / trials - expected) <= 4 * 0.9 / math.sqrt(trials))


class TestWeights:
    def test_numerator_at_bias_point_is_exp_delta(self, rng):
        ens = random_ensemble(rng, 2, 3, 4)
        xi = np.zeros(ens.length)
        xi[ens.supports[0].array()] = ens.mu
        assert weight_numerator(ens, 0, xi, 0.3) == pytest.approx(math.exp(0.3), rel=1e-12)

    def test_numerator_matches_received_word(self, rng):
        ens = random_ensemble(rng, 2, 3, 4)
        y, xi = sample_bias_point(ens, 1, sample_generator(0, 1))
        direct = math.exp(-float(np.sum((y - 1.0) ** 2)) / (2 * ens.sigma ** 2) + 0.1)
        assert weight_numerator(ens, 1, xi, 0.1) == pytest.approx(direct, rel=1e-12)

    def test_degenerate_group_has_single_kernel(self):
        ens = BiasEnsemble(supports=[SupportVector(length=3, support=(0, 2))], mu=1.0, sigma=0.7, n=3, z=1)
        xi = np.array([0.2, -0.1, 0.4])
        expected = math.exp(-float(xi @ xi) / (2 * 0.49))
        assert weight_denominator_naive(ens, 0, xi, 0.0) == pytest.approx(expected, rel=1e-12)
        tables = build_tables(ens, 3, 1)
        assert weight_denominator_tabular(ens, tables, 0, xi, 0.0) == pytest.approx(expected, rel=1e-12)

    def test_tabular_matches_naive(self, rng):
        configs = 0
        while configs < 1000:
            p = int(rng.integers(1, 5))
            z = int(rng.integers(1, 33))
            n = int(rng.integers(1, max(2, 256 // z) + 1))
            if n * z > 256 or n * z < 6:
                continue
            ens = random_ensemble(rng, p, n, z, mu=float(rng.uniform(0.5, 2.5)), sigma=float(rng.uniform(0.5, 1.2)))
            tables = build_tables(ens, n, z)
            for _ in range(20):
                l = int(rng.integers(p))
                xi = rng.normal(0.0, ens.sigma, size=ens.length)
                delta = reference_delta(ens, xi)
                naive = weight_denominator_naive(ens, l, xi, delta)
                tabular = weight_denominator_tabular(ens, tables, l, xi, delta)
                assert abs(tabular - naive) <= 1e-9 * naive
                configs += 1

    def test_symmetric_under_relabeling(self, rng):
        ens = random_ensemble(rng, 3, 4, 6)
        swapped = BiasEnsemble(
            supports=[ens.supports[2], ens.supports[0], ens.supports[1]], mu=ens.mu, sigma=ens.sigma, n=4, z=6
        )
        xi = rng.normal(0.0, ens.sigma, size=ens.length)
        assert weight_denominator_naive(ens, 0, xi, 0.0) == pytest.approx(
            weight_denominator_naive(swapped, 1, xi, 0.0), rel=1e-12
        )

    def test_weight_independent_of_delta(self, rng):
        ens = random_ensemble(rng, 3, 5, 8)
        tables = build_tables(ens, 5, 8)
        for _ in range(100):
            xi = rng.normal(0.0, ens.sigma, size=ens.length)
            weights = []
            for delta in (reference_delta(ens, xi), reference_delta(ens, xi) - 3.0):
                R = weight_numerator(ens, 1, xi, delta)
                S = weight_denominator_tabular(ens, tables, 1, xi, delta)
                weights.append(ens.z * ens.p * R / S)
            assert weights[0] == pytest.approx(weights[1], rel=1e-12)

    def test_overflow_raises(self, rng):
        ens = random_ensemble(rng, 1, 3, 4)
        xi = np.zeros(ens.length)
        with pytest.raises(RuntimeFailure):
            weight_numerator(ens, 0, xi, 1e4)
        with pytest.raises(RuntimeFailure):
            weight_denominator_naive(ens, 0, xi, 1e4)


class TestEstimate:
    def test_rejects_zero_samples(self):
        with pytest.raises(ValueError):
            estimate_pf(WEIGHING_CODE, basis_ensemble(), DecoderConfig(), 0, seed=1)

    def test_longer_run_extends_shorter(self):
        ens = basis_ensemble()
        short = draw_samples(WEIGHING_CODE, ens, DecoderConfig(), 300, seed=4)
        long = draw_samples(WEIGHING_CODE, ens, DecoderConfig(), 600, seed=4, threads=3)
        assert_array_equal(long.values[:300], short.values)
        assert_array_equal(long.failed[:300], short.failed)

    def test_oracle_denominator_agrees(self):
        ens = basis_ensemble(mu=1.7)
        tab = estimate_pf(WEIGHING_CODE, ens, DecoderConfig(), 400, seed=9)
        naive = estimate_pf(WEIGHING_CODE, ens, DecoderConfig(), 400, seed=9, denominator=Denominator.NAIVE)
        assert naive.estimate == pytest.approx(tab.estimate, rel=1e-9)
        assert tab.per_point and sum(pt.samples for pt in tab.per_point) == 400

    def test_forced_failure_self_normalizes(self):
        ens = basis_ensemble()
        result = estimate_pf(WEIGHING_CODE, ens, DecoderConfig(), 4000, seed=2, force_failure=True)
        assert result.failures == 4000
        assert abs(result.estimate - 1.0) <= 3 * result.stderr

    def test_abort_policy(self, monkeypatch):
        monkeypatch.setattr(weighing, "reference_delta", lambda ens, xi: 1e4)
        with pytest.raises(RuntimeFailure, match="Sample 0"):
            estimate_pf(WEIGHING_CODE, basis_ensemble(), DecoderConfig(), 10, seed=1)

    def test_skip_policy(self, monkeypatch):
        calls = {"count": 0}
        original = weighing.reference_delta

        def every_third(ens, xi):
            calls["count"] += 1
            return 1e4 if calls["count"] % 3 == 0 else original(ens, xi)

        monkeypatch.setattr(weighing, "reference_delta", every_third)
        result = estimate_pf(WEIGHING_CODE, basis_ensemble(), DecoderConfig(), 30, seed=1, policy=WeightPolicy.SKIP)
        assert result.skipped == list(range(2, 30, 3))
        assert result.used_samples == 20

    def test_all_skipped_raises(self, monkeypatch):
        monkeypatch.setattr(weighing, "reference_delta", lambda ens, xi: 1e4)
        with pytest.raises(RuntimeFailure, match="Every sample"):
            estimate_pf(WEIGHING_CODE, basis_ensemble(), DecoderConfig(), 10, seed=1, policy=WeightPolicy.SKIP)

    def test_matrix_mismatch(self, small_code):
        with pytest.raises(ValueError):
            estimate_pf(small_code, basis_ensemble(), DecoderConfig(), 10, seed=1)

    @pytest.mark.slow
    def test_reduced_and_full_orbit_agree(self):
        ens = basis_ensemble(mu=1.2, sigma=0.75)
        reduced = estimate_pf(WEIGHING_CODE, ens, DecoderConfig(), 100_000, seed=21, threads=4)
        full = estimate_pf(WEIGHING_CODE, ens, DecoderConfig(), 100_000, seed=22, bias=BiasMode.FULL_ORBIT, threads=4)
        combined = math.hypot(reduced.stderr, full.stderr)
        assert abs(reduced.estimate - full.estimate) <= 3 * combined

    @pytest.mark.slow
    def test_agrees_with_plain_monte_carlo(self):
        ens = basis_ensemble(mu=0.8, sigma=0.9)
        plain = estimate_pf(WEIGHING_CODE, ens, DecoderConfig(), 20_000, seed=31, bias=BiasMode.PLAIN, threads=4)
        assert plain.estimate > 1e-3
        biased = estimate_pf(WEIGHING_CODE, ens, DecoderConfig(), 20_000, seed=32, threads=4)
        combined = math.hypot(plain.stderr, biased.stderr)
        assert abs(plain.estimate - biased.estimate) <= 3 * combined

    @pytest.mark.slow
    def test_stable_across_seeds(self):
        ens = basis_ensemble(mu=1.7, sigma=0.6, p=1)
        first = estimate_pf(WEIGHING_CODE, ens, DecoderConfig(), 20_000, seed=41, threads=4)
        second = estimate_pf(WEIGHING_CODE, ens, DecoderConfig(), 20_000, seed=42, threads=4)
        assert first.estimate > 0 and second.estimate > 0
        assert abs(first.estimate - second.estimate) <= 3 * math.hypot(first.stderr, second.stderr)
