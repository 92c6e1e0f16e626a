from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from kqislice.core import (
    FEATURE_NAMES,
    Comparator,
    KpiVector,
    KqiId,
    KqiVector,
    RadioConditions,
    SliceConfig,
    ZeroVarianceError,
    feature_vector,
    kfold_split,
    r_squared,
    train_test_split,
    unpack_features,
)


def exact_r2(actual, predicted) -> float:
    """Rational-arithmetic reference for the coefficient of determination."""
    a = [Fraction(v).limit_denominator(10**6) for v in actual]
    p = [Fraction(v).limit_denominator(10**6) for v in predicted]
    mean = sum(a) / len(a)
    ss_tot = sum((v - mean) ** 2 for v in a)
    ss_res = sum((u - v) ** 2 for u, v in zip(a, p))
    return float(1 - ss_res / ss_tot)


class TestRSquared:
    def test_identity(self):
        assert r_squared([1, 2, 3], [1, 2, 3]) == 1.0

    def test_mean_predictor(self):
        assert r_squared([1, 2, 3], [2, 2, 2]) == pytest.approx(0.0, abs=1e-12)

    def test_four_point_case_matches_exact_arithmetic(self):
        actual, predicted = [1, 2, 3, 4], [1.1, 1.9, 3.2, 3.8]
        # SS_res = 0.01 + 0.01 + 0.04 + 0.04 = 0.10, SS_tot = 5.0
        assert exact_r2(actual, predicted) == pytest.approx(0.98, abs=1e-15)
        assert r_squared(actual, predicted) == pytest.approx(0.98, abs=1e-12)

    def test_length_mismatch(self):
        with pytest.raises(ValueError, match="mismatch"):
            r_squared([1, 2, 3], [1, 2])

    def test_zero_variance_is_a_distinct_error(self):
        with pytest.raises(ZeroVarianceError):
            r_squared([2, 2, 2], [1, 2, 3])

    @given(
        st.lists(st.integers(-1000, 1000), min_size=2, max_size=30).filter(lambda v: len(set(v)) > 1),
        st.data(),
    )
    def test_matches_rational_reference(self, actual, data):
        predicted = data.draw(st.lists(st.integers(-1000, 1000), min_size=len(actual), max_size=len(actual)))
        assert r_squared(actual, predicted) == pytest.approx(exact_r2(actual, predicted), rel=1e-9, abs=1e-9)

    @given(st.lists(st.floats(-1e3, 1e3), min_size=2, max_size=30).filter(lambda v: np.ptp(v) > 1e-3))
    def test_never_exceeds_one(self, actual):
        rng = np.random.default_rng(len(actual))
        predicted = np.asarray(actual) + rng.normal(size=len(actual))
        assert r_squared(actual, predicted) <= 1.0


class TestKFold:
    def test_leave_one_out(self):
        folds = kfold_split(10, 10, seed=3)
        assert sorted(int(f[0]) for f in folds) == list(range(10))
        assert all(len(f) == 1 for f in folds)

    def test_uneven_sizes(self):
        folds = kfold_split(7, 3, seed=1)
        assert sorted(len(f) for f in folds) == [2, 2, 3]
        assert sorted(np.concatenate(folds).tolist()) == list(range(7))

    def test_reference_size_and_determinism(self):
        a = kfold_split(800, 10, seed=42)
        b = kfold_split(800, 10, seed=42)
        assert [len(f) for f in a] == [80] * 10
        assert all(np.array_equal(x, y) for x, y in zip(a, b))

    @pytest.mark.parametrize("n,k", [(5, 1), (3, 4), (0, 2)])
    def test_invalid(self, n, k):
        with pytest.raises(ValueError):
            kfold_split(n, k, 0)

    @settings(max_examples=200)
    @given(st.integers(2, 50).flatmap(lambda n: st.tuples(st.just(n), st.integers(2, n))), st.integers(0, 2**32 - 1))
    def test_partition(self, nk, seed):
        n, k = nk
        folds = kfold_split(n, k, seed)
        assert len(folds) == k
        sizes = [len(f) for f in folds]
        assert max(sizes) - min(sizes) <= 1
        assert sorted(np.concatenate(folds).tolist()) == list(range(n))


class TestTrainTestSplit:
    def test_reference_sizes(self, random_rows):
        rows = (random_rows * 14)[:800]
        train, test = train_test_split(rows, 0.7, 42)
        assert (len(train), len(test)) == (560, 240)

    def test_halving_is_disjoint(self, random_rows):
        rows = random_rows[:10]
        train, test = train_test_split(rows, 0.5, 1)
        assert (len(train), len(test)) == (5, 5)
        assert not {id(r) for r in train} & {id(r) for r in test}

    def test_deterministic(self, random_rows):
        assert train_test_split(random_rows, 0.7, 9) == train_test_split(random_rows, 0.7, 9)

    @pytest.mark.parametrize("frac", [0.0, 1.0, -0.1])
    def test_invalid_fraction(self, random_rows, frac):
        with pytest.raises(ValueError):
            train_test_split(random_rows, frac, 0)


class TestDomainTypes:
    def test_shares_must_sum_to_one(self):
        with pytest.raises(ValueError, match="sum"):
            KqiVector(1.0, 2.0, 0.2, 0.2, 0.05, 0.05)

    def test_negative_initial_time_rejected(self):
        with pytest.raises(ValueError):
            KqiVector(-1.0, 2.0, 1.0, 0.0, 0.0, 0.0)

    @pytest.mark.parametrize("rsrp,rsrq,rssi", [(-141, -10, -60), (-90, -2, -60), (-90, -10, -10)])
    def test_radio_ranges(self, rsrp, rsrq, rssi):
        with pytest.raises(ValueError):
            RadioConditions(rsrp, rsrq, rssi)

    def test_prb_mapping(self):
        assert [SliceConfig(i, bw).prb_count for i, bw in enumerate((5, 10, 15, 20))] == [25, 50, 75, 100]
        with pytest.raises(ValueError):
            SliceConfig(0, 7.0)

    def test_kqi_bounds(self):
        assert KqiId.ShareQ720.bounds == (0.0, 1.0)
        assert KqiId.InitialTime.clamp(-3.0) == 0.0
        assert KqiId.ShareQ1440.clamp(1.2) == 1.0
        with pytest.raises(ValueError, match="unknown KQI"):
            KqiId.parse("Stalls")

    def test_comparator(self):
        assert Comparator.parse(">=").holds(4.0, 4.0)
        assert not Comparator.LE.holds(4.1, 4.0)
        with pytest.raises(ValueError):
            Comparator.parse(">")

    @given(
        st.floats(-140, -44),
        st.floats(-24, -3),
        st.floats(-120, -20),
        st.floats(0, 200),
        st.floats(-20, 40),
        st.sampled_from([1.4, 3.0, 5.0, 10.0, 15.0, 20.0]),
    )
    def test_feature_round_trip(self, rsrp, rsrq, rssi, mac, sinr, bw):
        radio, kpi, cfg = RadioConditions(rsrp, rsrq, rssi), KpiVector(mac, sinr), SliceConfig(0, bw)
        x = feature_vector(radio, kpi, cfg)
        assert len(x) == len(FEATURE_NAMES)
        assert unpack_features(x) == (radio, kpi, bw)
