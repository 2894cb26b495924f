import numpy as np
import pytest

from coughscreen import pipeline, synth
from coughscreen.splits import build_nested_plan

LR_GRID = ({"C": 0.05, "class_weight": "balanced", "solver": "lbfgs"},
           {"C": 0.01, "class_weight": None, "solver": "lbfgs"})


def small_dataset(seed=0, n=60, s_audio=1.0, s_clinical=1.0):
    cfg = synth.SyntheticConfig(n_coughers=n, prevalence=0.3, coughs_mean=5,
                                coughs_std=2, coughs_min=3, coughs_max=8,
                                signal_strength_audio=s_audio,
                                signal_strength_clinical=s_clinical, seed=seed)
    return synth.generate_synthetic(cfg)


@pytest.fixture(scope="module")
def table():
    return pipeline.build_feature_table(small_dataset())


@pytest.fixture(scope="module")
def results_and_plan(table):
    cfg = pipeline.RunConfig(seed=42, grid=LR_GRID)
    return pipeline.run_nested(table, "LR", "fused", cfg)


class TestRunNested:
    def test_ten_fold_results(self, results_and_plan):
        results, _ = results_and_plan
        assert len(results) == 10
        assert [r.fold for r in results] == list(range(10))

    def test_fold_sizes(self, results_and_plan, table):
        results, _ = results_and_plan
        sizes = [r.n_test_coughers for r in results]
        assert sum(sizes) == len(table.all_coughers)
        assert max(sizes) - min(sizes) <= 2

    def test_every_test_cougher_scored_exactly_once(self, results_and_plan, table):
        results, _ = results_and_plan
        seen = [c for r in results for c in r.test_cg_ids]
        assert sorted(seen) == table.all_coughers

    def test_probabilities_in_unit_interval(self, results_and_plan):
        results, _ = results_and_plan
        for r in results:
            for arr in (r.test_wf_raw, r.test_wf_cal, r.test_cg_raw, r.test_cg_cal,
                        r.oof_probs):
                assert np.all((arr >= 0) & (arr <= 1))

    def test_scaler_audit_within_tuning(self, results_and_plan):
        results, _ = results_and_plan
        for r in results:
            assert r.audit["scaler_fit_within_tuning"]
            assert r.audit["boundaries_disjoint"]

    def test_best_params_from_grid(self, results_and_plan):
        results, _ = results_and_plan
        for r in results:
            assert r.best_params in [dict(c) for c in LR_GRID]

    def test_thresholds_in_unit_interval(self, results_and_plan):
        results, _ = results_and_plan
        for r in results:
            assert 0.0 <= r.tau_w <= 1.0
            assert 0.0 <= r.tau_s <= 1.0

    def test_conformal_reported_per_alpha(self, results_and_plan):
        results, _ = results_and_plan
        for r in results:
            assert set(r.conformal) == {0.10, 0.05}
            for a, block in r.conformal.items():
                assert 0.0 <= block["coverage"] <= 1.0
                assert 0.0 <= block["mean_size"] <= 2.0

    def test_unknown_family_rejected(self, table):
        with pytest.raises(ValueError):
            pipeline.run_nested(table, "SVM", "audio", pipeline.RunConfig())

    def test_unknown_mode_rejected(self, table):
        with pytest.raises(ValueError):
            pipeline.run_nested(table, "LR", "spectro", pipeline.RunConfig())


class TestDeterminism:
    def test_same_config_same_results(self, table):
        cfg = pipeline.RunConfig(seed=7, grid=LR_GRID[:1])
        a, _ = pipeline.run_nested(table, "LR", "audio", cfg)
        b, _ = pipeline.run_nested(table, "LR", "audio", cfg)
        for ra, rb in zip(a, b):
            np.testing.assert_array_equal(ra.test_wf_cal, rb.test_wf_cal)
            assert ra.tau_w == rb.tau_w
            assert ra.conformal == rb.conformal

    def test_jobs_do_not_change_numbers(self, table):
        cfg = pipeline.RunConfig(seed=7, grid=LR_GRID[:1])
        serial, _ = pipeline.run_nested(table, "LR", "audio", cfg, jobs=1)
        parallel, _ = pipeline.run_nested(table, "LR", "audio", cfg, jobs=3)
        for ra, rb in zip(serial, parallel):
            np.testing.assert_array_equal(ra.test_wf_cal, rb.test_wf_cal)
            np.testing.assert_array_equal(ra.test_cg_cal, rb.test_cg_cal)
            assert ra.best_params == rb.best_params

    def test_recording_order_invariance(self):
        coughers = small_dataset(seed=3, n=40)
        cfg = pipeline.RunConfig(seed=11, grid=LR_GRID[:1], k_outer=4, k_inner=3,
                                 calib_frac=0.2)
        fwd, _ = pipeline.run_nested(pipeline.build_feature_table(coughers),
                                     "LR", "fused", cfg)
        rev, _ = pipeline.run_nested(pipeline.build_feature_table(coughers[::-1]),
                                     "LR", "fused", cfg)
        for ra, rb in zip(fwd, rev):
            np.testing.assert_array_equal(ra.test_cg_cal, rb.test_cg_cal)
            assert ra.test_cg_ids == rb.test_cg_ids


class TestNoTestDependence:
    def test_dropping_test_cougher_keeps_training_artifacts(self, table):
        cfg = pipeline.RunConfig(seed=5, grid=LR_GRID)
        ids = table.all_coughers
        plan = build_nested_plan(ids, [table.cougher_label[c] for c in ids],
                                 [table.cougher_rec_count[c] for c in ids],
                                 k_outer=10, k_inner=5, calib_frac=0.15, master_seed=5)
        fp = plan.folds[0]
        full = pipeline.run_fold(table, fp, "LR", "fused", cfg)
        reduced_plan = type(fp)(fold=fp.fold, test=fp.test[1:], calib=fp.calib,
                                tuning=fp.tuning, inner=fp.inner)
        reduced = pipeline.run_fold(table, reduced_plan, "LR", "fused", cfg)
        assert full.best_params == reduced.best_params
        assert full.tau_w == reduced.tau_w
        assert full.tau_s == reduced.tau_s
        np.testing.assert_array_equal(full.oof_probs, reduced.oof_probs)
        for a in (0.10, 0.05):
            assert full.conformal[a]["qhat"] == reduced.conformal[a]["qhat"]


class TestGbdtPath:
    def test_gbdt_through_pipeline(self, table):
        grid = ({"depth": 3, "iterations": 15, "learning_rate": 0.1,
                 "l2_leaf_reg": 3.0, "subsample": 0.9, "rsm": 0.9,
                 "class_weights": "balanced"},)
        cfg = pipeline.RunConfig(seed=13, grid=grid, k_outer=4, k_inner=3,
                                 calib_frac=0.2)
        results, _ = pipeline.run_nested(table, "GBDT", "fused", cfg)
        assert len(results) == 4
        for r in results:
            assert np.isfinite(r.cougher.roc_auc)
            assert r.best_params["iterations"] == 15


class TestFoldResultSerialization:
    def test_roundtrip_through_dict(self, results_and_plan):
        results, _ = results_and_plan
        doc = results[0].to_dict()
        back = pipeline.FoldResult.from_dict(doc)
        assert back.fold == results[0].fold
        assert back.best_params == results[0].best_params
        np.testing.assert_allclose(back.test_cg_cal, results[0].test_cg_cal)
        assert back.conformal == results[0].conformal
