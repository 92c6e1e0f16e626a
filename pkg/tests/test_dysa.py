import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from kqislice.core import RSRP_RANGE, Comparator, KqiId, SliceConfig, feature_matrix, target_vector
from kqislice.dysa import (
    KqiTarget,
    SecurityMargin,
    TraceFormatError,
    alpha_from_training,
    is_compliant,
    load_trace,
    max_residual,
    residual_quantile,
    run_monitor,
    save_timeline,
    save_trace,
    select_config,
    threshold,
    timeline_header,
)
from kqislice.modsys import DEFAULT_HYPERPARAMS, RegressorKind, fit
from kqislice.netsim import radio_from_rsrp

CATALOG = tuple(SliceConfig(i, bw) for i, bw in enumerate((5.0, 10.0, 15.0, 20.0)))
EXCELLENT = radio_from_rsrp(-88.0, 0.3)
FLOOR = radio_from_rsrp(RSRP_RANGE[0], 0.3)
TPUT4 = KqiTarget(KqiId.AvgThroughput, Comparator.GE, 4.0)
HD90 = KqiTarget(KqiId.ShareQ1440, Comparator.GE, 0.9)


class TestMargin:
    def test_perfect_model_has_zero_alpha(self, random_rows):
        hp = DEFAULT_HYPERPARAMS.replace(max_depth=None, min_leaf=1)
        x, y = feature_matrix(random_rows), target_vector(random_rows, KqiId.AvgThroughput)
        model = fit(RegressorKind.DTR, x, y, hp, KqiId.AvgThroughput)
        assert alpha_from_training(model, random_rows) == 0.0
        assert max_residual(model, random_rows) == 0.0

    def test_percentile_rule(self):
        assert residual_quantile([1] * 9 + [9], 0.9) == 9.0
        assert residual_quantile([1] * 9 + [9], 0.5) == 1.0
        assert residual_quantile(range(1, 101), 0.9) == 91.0

    @pytest.mark.parametrize("p", [0.0, 1.0, 1.5])
    def test_percentile_open_interval(self, p):
        with pytest.raises(ValueError):
            residual_quantile([1.0, 2.0], p)

    @settings(max_examples=200)
    @given(st.lists(st.floats(0, 100), min_size=1, max_size=50), st.floats(0.01, 0.99))
    def test_quantile_is_an_observed_residual_above_the_share(self, res, p):
        q = residual_quantile(res, p)
        assert q in res
        n = len(res)
        assert sum(r <= q for r in res) > p * n or q == max(res)
        assert sum(r < q for r in res) <= p * n

    def test_negative_alpha_rejected(self):
        with pytest.raises(ValueError):
            SecurityMargin({KqiId.AvgThroughput: -0.1})


class TestThreshold:
    def test_ge_target(self):
        m = SecurityMargin({KqiId.AvgThroughput: 0.5})
        assert threshold(5.0, TPUT4, m) == 4.5 and is_compliant(4.5, TPUT4)
        assert threshold(4.2, TPUT4, m) == pytest.approx(3.7) and not is_compliant(3.7, TPUT4)

    def test_le_target_adds_margin(self):
        target = KqiTarget(KqiId.InitialTime, Comparator.LE, 2.0)
        m = SecurityMargin({KqiId.InitialTime: 0.5})
        assert threshold(1.6, target, m) == 2.1 and not is_compliant(2.1, target)

    def test_zero_margin_is_identity(self):
        assert threshold(5.0, TPUT4, SecurityMargin()) == 5.0

    @given(st.floats(0, 50), st.floats(0, 5), st.floats(0, 5))
    def test_margin_only_makes_compliance_harder(self, est, a1, a2):
        lo, hi = sorted((a1, a2))
        for target in (TPUT4, KqiTarget(KqiId.InitialTime, Comparator.LE, 2.0)):
            strict = is_compliant(threshold(est, target, SecurityMargin({target.kqi: hi})), target)
            lenient = is_compliant(threshold(est, target, SecurityMargin({target.kqi: lo})), target)
            assert not strict or lenient


class TestSelectConfig:
    def test_single_compliant_config(self, reference_registry):
        assert select_config([TPUT4], EXCELLENT, reference_registry, CATALOG[3:], SecurityMargin()) == CATALOG[3]

    def test_closest_of_two(self, reference_registry):
        pair = CATALOG[2:]
        chosen = select_config([TPUT4], EXCELLENT, reference_registry, pair, SecurityMargin())
        est = {c: reference_registry.model(KqiId.AvgThroughput).predict(_x(c)) for c in pair}
        assert all(v >= 4.0 for v in est.values())
        slack = {c: v - 4.0 for c, v in est.items()}
        assert chosen == min(pair, key=lambda c: (slack[c], c.bandwidth))

    def test_slack_tie_goes_to_lower_id(self, reference_registry):
        # Identical configurations under different ids give identical slack.
        target = KqiTarget(KqiId.AvgThroughput, Comparator.GE, 0.0)
        same = (SliceConfig(9, 20.0), SliceConfig(2, 20.0))
        assert select_config([target], EXCELLENT, reference_registry, same, SecurityMargin()).config_id == 2

    def test_slack_tie_goes_to_smaller_bandwidth(self):
        from kqislice.modsys import ModelRegistry, Selection

        # A constant estimate gives every configuration the same slack.
        x = np.random.default_rng(0).normal(size=(10, 6))
        flat = fit(RegressorKind.DTR, x, np.full(10, 5.0), target=KqiId.AvgThroughput)
        registry = ModelRegistry(1, (RegressorKind.DTR,), {KqiId.AvgThroughput: Selection(flat, 1.0)}, {})
        chosen = select_config([TPUT4], EXCELLENT, registry, (CATALOG[3], CATALOG[2]), SecurityMargin())
        assert chosen == CATALOG[2]

    def test_floor_radio_has_no_hd_config(self, reference_registry):
        assert select_config([HD90], FLOOR, reference_registry, CATALOG, SecurityMargin()) is None

    def test_missing_model(self, reference_registry):
        from kqislice.modsys import ModelRegistry

        empty = ModelRegistry(1, (), {}, {})
        with pytest.raises(KeyError):
            select_config([TPUT4], EXCELLENT, empty, CATALOG, SecurityMargin())


def _x(config, radio=EXCELLENT):
    from kqislice.netsim import serving_features

    return serving_features(radio, config)


def _trace(levels):
    return [(float(i), r) for i, r in enumerate(levels)]


class TestMonitor:
    def test_constant_trace_never_reconfigures(self, reference_registry):
        tl = run_monitor(_trace([EXCELLENT] * 10), [TPUT4], reference_registry, CATALOG, SecurityMargin())
        assert tl.reconfigurations == 0
        assert len({s.config for s in tl.samples}) == 1
        assert all(s.compliant for s in tl.samples)

    def test_two_level_trace_reconfigures_once(self, reference_registry):
        margin = SecurityMargin(reference_registry.margins)
        trace = _trace([EXCELLENT] * 5 + [FLOOR] * 8)
        tl = run_monitor(trace, [TPUT4], reference_registry, CATALOG, margin, reconfig_time=2.0, hysteresis=3)
        assert tl.reconfigurations == 1
        event = tl.events[0]
        assert event.time == 7.0  # third consecutive floor sample
        assert event.to_config == CATALOG[3]
        assert all(s.alarm for s in tl.samples[5:])
        assert [s.reconfiguring for s in tl.samples[7:10]] == [True, True, False]
        assert not any(s.compliant for s in tl.samples[5:])

    def test_short_dips_are_filtered(self, reference_registry):
        trace = _trace([EXCELLENT] * 3 + [FLOOR] * 2 + [EXCELLENT] * 3 + [FLOOR] * 2)
        tl = run_monitor(trace, [TPUT4], reference_registry, CATALOG, SecurityMargin(), hysteresis=3)
        assert tl.reconfigurations == 0

    @settings(max_examples=60, deadline=None)
    @given(st.lists(st.sampled_from([-88.0, -100.0, -108.0, -140.0]), min_size=1, max_size=25))
    def test_more_hysteresis_never_adds_reconfigurations(self, reference_registry, levels):
        trace = _trace([radio_from_rsrp(r, 0.3) for r in levels])
        counts = [
            run_monitor(trace, [TPUT4], reference_registry, CATALOG, SecurityMargin(), hysteresis=h).reconfigurations
            for h in (1, 2, 3, 5)
        ]
        assert counts == sorted(counts, reverse=True)

    def test_invalid(self, reference_registry):
        with pytest.raises(ValueError):
            run_monitor([], [TPUT4], reference_registry, CATALOG, SecurityMargin())
        with pytest.raises(ValueError):
            run_monitor(_trace([EXCELLENT]), [TPUT4], reference_registry, CATALOG, SecurityMargin(), hysteresis=0)


class TestFiles:
    def test_trace_round_trip(self, tmp_path):
        trace = _trace([EXCELLENT, FLOOR, radio_from_rsrp(-97.3, 0.5)])
        path = tmp_path / "t.csv"
        save_trace(trace, path)
        assert load_trace(path) == trace

    @pytest.mark.parametrize(
        "body,line",
        [
            ("0,-90,-10,-60\n1,abc,-10,-60\n", 3),
            ("0,-90,-10,-60\n0,-90,-10,-60\n", 3),
            ("0,-90,-10\n", 2),
            ("0,-30,-10,-60\n", 2),
        ],
    )
    def test_trace_errors_carry_line(self, tmp_path, body, line):
        path = tmp_path / "t.csv"
        path.write_text("time_s,rsrp_dbm,rsrq_db,rssi_dbm\n" + body)
        with pytest.raises(TraceFormatError, match=f"line {line}"):
            load_trace(path)

    def test_empty_trace(self, tmp_path):
        path = tmp_path / "t.csv"
        path.write_text("time_s,rsrp_dbm,rsrq_db,rssi_dbm\n")
        with pytest.raises(TraceFormatError, match="no samples"):
            load_trace(path)

    def test_timeline_csv(self, reference_registry, tmp_path):
        tl = run_monitor(_trace([EXCELLENT] * 3), [TPUT4, HD90], reference_registry, CATALOG, SecurityMargin())
        path = tmp_path / "tl.csv"
        save_timeline(tl, [TPUT4, HD90], path)
        lines = path.read_text().splitlines()
        assert lines[0].split(",") == timeline_header([TPUT4, HD90])
        assert len(lines) == 4
