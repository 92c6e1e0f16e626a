import json
import math

import numpy as np
import pytest

from kqislice.core import KqiId, feature_matrix, target_vector
from kqislice.modsys import (
    ALL_KINDS,
    DEFAULT_HYPERPARAMS,
    FitError,
    RegressorKind,
    cross_validate,
    load_registry,
    pick_best,
    registry_from_dict,
    registry_to_dict,
    retrain,
    save_registry,
    select_best,
    write_score_table,
)
from kqislice.modsys import selection
from kqislice.modsys.selection import cross_validate_arrays

MEMORIZE = DEFAULT_HYPERPARAMS.replace(max_depth=None, min_leaf=1)


class TestCrossValidation:
    def test_reference_fold_count(self, reference_rows):
        res = cross_validate(RegressorKind.LR, reference_rows, KqiId.AvgThroughput, 10, 42)
        assert len(res.fold_scores) == 10 and res.skipped_folds == ()

    def test_deterministic(self, random_rows):
        a = cross_validate(RegressorKind.SVM_G, random_rows, KqiId.InitialTime, 5, 3)
        b = cross_validate(RegressorKind.SVM_G, random_rows, KqiId.InitialTime, 5, 3)
        assert a == b

    def test_duplicated_learnable_target(self):
        x = np.repeat(np.arange(10.0), 10)[:, None]
        y = x[:, 0] ** 2
        res = cross_validate_arrays(RegressorKind.DTR, x, y, 10, 42, MEMORIZE)
        assert res.mean == 1.0

    def test_constant_fold_is_skipped(self):
        # Constant targets leave every fold without variance to score.
        x = np.arange(12.0)[:, None]
        y = np.zeros(12)
        res = cross_validate_arrays(RegressorKind.LR, x, y, 3, 0)
        assert res.fold_scores == () and res.skipped_folds == (0, 1, 2)
        assert math.isnan(res.mean)

    def test_too_small(self, random_rows):
        with pytest.raises(ValueError):
            cross_validate(RegressorKind.LR, random_rows[:3], KqiId.InitialTime, 5, 0)


class TestPickBest:
    def test_argmax(self):
        assert pick_best({RegressorKind.LR: 0.5, RegressorKind.GPR: 0.9}) is RegressorKind.GPR

    def test_tie_goes_to_earlier_kind(self):
        assert pick_best({RegressorKind.GPR: 0.8, RegressorKind.DTR: 0.8}) is RegressorKind.DTR
        assert pick_best({RegressorKind.SVM_Q: 0.8, RegressorKind.SVM_G: 0.8}) is RegressorKind.SVM_G

    def test_nan_ignored(self):
        assert pick_best({RegressorKind.LR: math.nan, RegressorKind.SWLR: -3.0}) is RegressorKind.SWLR
        assert pick_best({RegressorKind.LR: math.nan}) is None

    def test_identical_tables_select_earlier_kind(self, random_rows, monkeypatch):
        def same_score(kind, x, y, k, seed, hp, target):
            return selection.CVResult((0.5,), ())

        monkeypatch.setattr(selection, "cross_validate_arrays", same_score)
        reg = select_best(random_rows, [RegressorKind.GPR, RegressorKind.SWLR], k=5, seed=0)
        assert all(sel.model.kind is RegressorKind.SWLR for sel in reg.selected.values())


class TestSelectBest:
    def test_lr_only(self, random_rows):
        reg = select_best(random_rows, [RegressorKind.LR], k=5, seed=1)
        assert set(reg.selected) == set(KqiId)
        assert all(sel.model.kind is RegressorKind.LR for sel in reg.selected.values())
        assert list(reg.scores) == [RegressorKind.LR]

    def test_winner_refit_on_all_rows(self, random_rows):
        reg = select_best(random_rows, [RegressorKind.LR], k=5, seed=1, targets=[KqiId.AvgThroughput])
        model = reg.model(KqiId.AvgThroughput)
        x, y = feature_matrix(random_rows), target_vector(random_rows, KqiId.AvgThroughput)
        expected = np.linalg.lstsq(np.column_stack([np.ones(len(y)), x]), y, rcond=None)[0]
        probe = x[:5]
        np.testing.assert_allclose(model.predict_many(probe), expected[0] + probe @ expected[1:], rtol=1e-9)

    def test_failure_names_target(self, random_rows, monkeypatch):
        def broken(*args, **kwargs):
            raise FitError("singular")

        monkeypatch.setattr(selection, "cross_validate_arrays", broken)
        with pytest.raises(FitError, match="ShareQ720"):
            select_best(random_rows, [RegressorKind.LR], k=5, targets=[KqiId.ShareQ720])

    def test_retrain_bumps_version(self, random_rows):
        reg = select_best(random_rows, [RegressorKind.LR], k=5, targets=[KqiId.InitialTime])
        again = retrain(reg, random_rows, k=5)
        assert again.version == reg.version + 1
        assert set(again.selected) == {KqiId.InitialTime}

    def test_missing_model(self, random_rows):
        reg = select_best(random_rows, [RegressorKind.LR], k=5, targets=[KqiId.InitialTime])
        with pytest.raises(KeyError, match="ShareQ360"):
            reg.model(KqiId.ShareQ360)


class TestPersistence:
    def test_json_round_trip(self, random_rows, tmp_path):
        reg = select_best(random_rows, ALL_KINDS, k=5, seed=2)
        path = tmp_path / "reg.json"
        save_registry(reg, path)
        loaded = load_registry(path)
        assert registry_to_dict(loaded) == registry_to_dict(reg)
        x = feature_matrix(random_rows)
        for kqi in KqiId:
            np.testing.assert_array_equal(loaded.model(kqi).predict_many(x), reg.model(kqi).predict_many(x))
            assert loaded.model(kqi).predict(x[0]) == reg.model(kqi).predict(x[0])

    def test_nan_scores_survive(self, random_rows, tmp_path):
        reg = select_best(random_rows, [RegressorKind.LR], k=5, targets=[KqiId.InitialTime])
        reg.scores[RegressorKind.LR][KqiId.InitialTime] = math.nan
        d = json.loads(json.dumps(registry_to_dict(reg)))
        assert math.isnan(registry_from_dict(d).scores[RegressorKind.LR][KqiId.InitialTime])

    def test_rejects_foreign_files(self):
        with pytest.raises(ValueError, match="format"):
            registry_from_dict({"format": "something-else"})

    def test_rejects_feature_order_change(self, random_rows):
        d = registry_to_dict(select_best(random_rows, [RegressorKind.LR], k=5, targets=[KqiId.InitialTime]))
        d["feature_names"] = list(reversed(d["feature_names"]))
        with pytest.raises(ValueError, match="feature order"):
            registry_from_dict(d)

    def test_score_table_shape(self, random_rows, tmp_path):
        reg = select_best(random_rows, [RegressorKind.LR, RegressorKind.DTR], k=5)
        path = tmp_path / "scores.csv"
        write_score_table(reg, path)
        lines = path.read_text().splitlines()
        assert lines[0] == "kind," + ",".join(k.value for k in KqiId)
        assert [ln.split(",")[0] for ln in lines[1:]] == ["LR", "DTR"]


class TestServingDomain:
    def test_bounds_recorded_and_inputs_clipped(self, random_rows):
        reg = select_best(random_rows, [RegressorKind.LR], k=5, targets=[KqiId.AvgThroughput])
        x = feature_matrix(random_rows)
        lo, hi = reg.feature_bounds
        np.testing.assert_array_equal(lo, x.min(axis=0))
        np.testing.assert_array_equal(hi, x.max(axis=0))
        far = x[0].copy()
        far[0] = -140.0
        edge = x[0].copy()
        edge[0] = lo[0]
        model = reg.model(KqiId.AvgThroughput)
        assert reg.predict(KqiId.AvgThroughput, far) == model.predict(edge)
        assert reg.predict(KqiId.AvgThroughput, x[3]) == model.predict(x[3])

    def test_bounds_survive_json(self, random_rows):
        reg = select_best(random_rows, [RegressorKind.LR], k=5, targets=[KqiId.AvgThroughput])
        assert registry_from_dict(json.loads(json.dumps(registry_to_dict(reg)))).feature_bounds == reg.feature_bounds
