"""Nested cougher-disjoint evaluation: grid search, calibration, conformal, metrics.

Per outer fold the protocol is:

1. carve a disjoint calibration subset out of the outer training pool;
2. grid search on the remaining (tuning) coughers via the inner grouped
   5-fold split, selecting hyperparameters by mean UAR at fold-wise Youden
   thresholds on raw inner-fold probabilities;
3. collect out-of-fold probabilities on the tuning pool at the selected
   hyperparameters and fit the isotonic calibrator on them;
4. train the final model on the full tuning pool;
5. score the calibration subset (calibrated) to pick the waveform and
   cougher thresholds by Youden and the conformal quantile per alpha;
6. score the untouched test fold: thresholded metrics, ROC/PR areas,
   Brier/ECE before and after calibration, conformal sets, and selective
   correctness — all at both waveform and cougher level where defined.

Scalers and models only ever see tuning rows (inner-train rows during the
grid search); every boundary is re-asserted at run time and a violation
aborts the run with ``LeakageError``.
"""

from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field

import numpy as np

from . import calibration, conformal, metrics, models
from .data import BINARY_CLINICAL_INDICES, N_AUDIO_FEATURES, apply_scaler, fit_scaler, fuse
from .features import extract
from .splits import LeakageError, NestedPlan, assert_cougher_disjoint, build_nested_plan, model_seed

FAMILIES = ("LR", "GBDT")
FEATURE_MODES = ("audio", "fused")
DEFAULT_ALPHAS = (0.10, 0.05)


@dataclass(frozen=True)
class RunConfig:
    alphas: tuple = DEFAULT_ALPHAS
    calib_frac: float = 0.15
    ece_bins: int = 10
    seed: int = 42
    k_outer: int = 10
    k_inner: int = 5
    grid: tuple | None = None  # optional reduced candidate list for desk-scale runs
    scale_binary_clinical: bool = True

    def candidates(self, family: str) -> list:
        if self.grid is not None:
            return [dict(c) for c in self.grid]
        return models.grid_candidates(family)


@dataclass
class FeatureTable:
    """Per-recording feature rows plus cougher bookkeeping, extracted once."""

    recording_ids: list
    cougher_ids: np.ndarray
    labels: np.ndarray
    audio: np.ndarray
    clinical: np.ndarray
    cougher_label: dict
    cougher_rec_count: dict

    @property
    def all_coughers(self) -> list:
        return sorted(self.cougher_label)


def build_feature_table(coughers) -> FeatureTable:
    """Extract the 261-value audio vector and clinical encoding per recording."""
    rec_ids, cids, labels, audio_rows, clinical_rows = [], [], [], [], []
    cougher_label, rec_count = {}, {}
    for c in sorted(coughers, key=lambda c: c.id):
        cougher_label[c.id] = c.tb_label
        rec_count[c.id] = len(c.recordings)
        clin = c.clinical.to_vector()
        for rec in sorted(c.recordings, key=lambda r: r.id):
            rec_ids.append(rec.id)
            cids.append(c.id)
            labels.append(c.tb_label)
            audio_rows.append(extract(rec.waveform))
            clinical_rows.append(clin)
    return FeatureTable(
        recording_ids=rec_ids,
        cougher_ids=np.asarray(cids),
        labels=np.asarray(labels, dtype=int),
        audio=np.vstack(audio_rows),
        clinical=np.vstack(clinical_rows),
        cougher_label=cougher_label,
        cougher_rec_count=rec_count,
    )


def _design_matrix(table: FeatureTable, feature_mode: str):
    if feature_mode == "audio":
        return table.audio, ()
    if feature_mode == "fused":
        passthrough = tuple(N_AUDIO_FEATURES + i for i in BINARY_CLINICAL_INDICES)
        return fuse(table.audio, table.clinical), passthrough
    raise ValueError(f"unknown feature_mode {feature_mode!r}")


def _rows_for(table: FeatureTable, coughers) -> np.ndarray:
    return np.flatnonzero(np.isin(table.cougher_ids, list(coughers)))


def _cougher_level(table, rows, probs):
    """Aggregate waveform probabilities to (ids, mean prob, label) per cougher."""
    ids, agg = metrics.aggregate_cougher(probs, table.cougher_ids[rows])
    labels = np.array([table.cougher_label[c] for c in ids], dtype=int)
    return ids, agg, labels


@dataclass
class FoldResult:
    fold: int
    family: str
    feature_mode: str
    best_params: dict
    best_inner_uar: float
    tau_w: float
    tau_s: float
    waveform: metrics.MetricSuite
    cougher: metrics.MetricSuite
    brier_raw_wf: float
    brier_cal_wf: float
    ece_raw_wf: float
    ece_cal_wf: float
    brier_raw_cg: float
    brier_cal_cg: float
    ece_raw_cg: float
    ece_cal_cg: float
    conformal: dict  # alpha -> {qhat, coverage, mean_size, singleton_rate, empty_rate}
    selective: dict  # alpha -> selective_metrics output
    n_test_coughers: int
    n_calib_coughers: int
    n_tuning_coughers: int
    oof_recording_ids: list = field(default_factory=list)
    oof_probs: np.ndarray | None = None
    test_recording_ids: list = field(default_factory=list)
    test_wf_raw: np.ndarray | None = None
    test_wf_cal: np.ndarray | None = None
    test_wf_labels: np.ndarray | None = None
    test_cg_ids: list = field(default_factory=list)
    test_cg_raw: np.ndarray | None = None
    test_cg_cal: np.ndarray | None = None
    test_cg_labels: np.ndarray | None = None
    test_sets: dict = field(default_factory=dict)  # alpha -> {has_pos, has_neg}
    audit: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        def clean(v):
            if isinstance(v, float) and math.isnan(v):
                return None
            if isinstance(v, np.ndarray):
                return v.tolist()
            if isinstance(v, np.generic):
                return v.item()
            if isinstance(v, dict):
                return {str(k): clean(x) for k, x in v.items()}
            if isinstance(v, (list, tuple)):
                return [clean(x) for x in v]
            return v

        doc = {k: v for k, v in self.__dict__.items()}
        doc["waveform"] = asdict(self.waveform)
        doc["cougher"] = asdict(self.cougher)
        return clean(doc)

    @classmethod
    def from_dict(cls, doc: dict) -> "FoldResult":
        def suite(d):
            vals = {k: (math.nan if v is None else v) for k, v in d.items()}
            return metrics.MetricSuite(**vals)

        def num(v):
            return math.nan if v is None else v

        def fkeys(d, value=lambda v: v):
            return {float(k): value(v) for k, v in d.items()}

        kwargs = dict(doc)
        kwargs["waveform"] = suite(doc["waveform"])
        kwargs["cougher"] = suite(doc["cougher"])
        for name in ("tau_w", "tau_s", "brier_raw_wf", "brier_cal_wf", "ece_raw_wf",
                     "ece_cal_wf", "brier_raw_cg", "brier_cal_cg", "ece_raw_cg",
                     "ece_cal_cg", "best_inner_uar"):
            kwargs[name] = num(doc[name])
        kwargs["conformal"] = fkeys(doc["conformal"],
                                    lambda v: {k: num(x) for k, x in v.items()})
        kwargs["selective"] = fkeys(doc["selective"],
                                    lambda v: {k: num(x) for k, x in v.items()})
        for name in ("oof_probs", "test_wf_raw", "test_wf_cal", "test_cg_raw",
                     "test_cg_cal"):
            kwargs[name] = np.asarray(doc[name], dtype=np.float64)
        for name in ("test_wf_labels", "test_cg_labels"):
            kwargs[name] = np.asarray(doc[name], dtype=int)
        kwargs["test_sets"] = fkeys(doc["test_sets"],
                                    lambda v: {k: np.asarray(x, dtype=bool)
                                               for k, x in v.items()})
        return cls(**kwargs)


def run_fold(table: FeatureTable, fold_plan, family: str, feature_mode: str,
             cfg: RunConfig) -> FoldResult:
    """Execute steps (1)-(7) of the protocol for one outer fold."""
    test_c, calib_c, tuning_c = fold_plan.test, fold_plan.calib, fold_plan.tuning
    assert_cougher_disjoint(test=test_c, calib=calib_c, tuning=tuning_c)

    X_all, passthrough = _design_matrix(table, feature_mode)
    if not cfg.scale_binary_clinical and feature_mode == "fused":
        scaler_passthrough = passthrough
    else:
        scaler_passthrough = ()
    y_all = table.labels
    tuning_rows = _rows_for(table, tuning_c)
    calib_rows = _rows_for(table, calib_c)
    test_rows = _rows_for(table, test_c)
    seed_inner = model_seed(cfg.seed, fold_plan.fold, 0)
    seed_final = model_seed(cfg.seed, fold_plan.fold, 1)

    # Inner grid search; out-of-fold probabilities are cached per candidate so
    # the winning candidate's OOF scores are reused for the calibrator.
    candidates = cfg.candidates(family)
    inner_folds = []
    for j in range(fold_plan.inner.k):
        val_c = fold_plan.inner.fold_members(j)
        train_c = sorted(set(tuning_c) - set(val_c))
        assert_cougher_disjoint(inner_train=train_c, inner_val=val_c, test=test_c,
                                calib=calib_c)
        inner_folds.append((_rows_for(table, train_c), _rows_for(table, val_c)))

    tuning_pos = {row: i for i, row in enumerate(tuning_rows)}
    best_idx, best_uar, best_oof = -1, -math.inf, None
    for ci, cand in enumerate(candidates):
        oof = np.full(tuning_rows.size, np.nan)
        uars = []
        for train_rows, val_rows in inner_folds:
            scaler = fit_scaler(X_all[train_rows], fitted_on=f"fold{fold_plan.fold}/inner",
                                passthrough_cols=scaler_passthrough)
            model = models.fit_model(family, cand, apply_scaler(scaler, X_all[train_rows]),
                                     y_all[train_rows], seed=seed_inner)
            probs = models.predict_model(model, apply_scaler(scaler, X_all[val_rows]))
            _, j_stat = calibration.youden_threshold(probs, y_all[val_rows])
            uars.append((1.0 + j_stat) / 2.0)
            for row, p in zip(val_rows, probs):
                oof[tuning_pos[row]] = p
        mean_uar = float(np.mean(uars))
        if mean_uar > best_uar:
            best_idx, best_uar, best_oof = ci, mean_uar, oof
    best_params = dict(candidates[best_idx])
    if np.isnan(best_oof).any():
        raise RuntimeError("out-of-fold probabilities missing for some tuning rows")

    iso = calibration.fit_isotonic(best_oof, y_all[tuning_rows])

    scaler_final = fit_scaler(X_all[tuning_rows], fitted_on=f"fold{fold_plan.fold}/tuning",
                              passthrough_cols=scaler_passthrough)
    model_final = models.fit_model(family, best_params,
                                   apply_scaler(scaler_final, X_all[tuning_rows]),
                                   y_all[tuning_rows], seed=seed_final)

    # Calibration subset: thresholds and conformal quantiles.
    calib_raw = models.predict_model(model_final, apply_scaler(scaler_final, X_all[calib_rows]))
    calib_cal = calibration.apply_isotonic(iso, calib_raw)
    tau_w, _ = calibration.youden_threshold(calib_cal, y_all[calib_rows])
    _, calib_cg_cal, calib_cg_labels = _cougher_level(table, calib_rows, calib_cal)
    tau_s, _ = calibration.youden_threshold(calib_cg_cal, calib_cg_labels)
    conf = conformal.fit_conformal(calib_cg_cal, calib_cg_labels, cfg.alphas)

    # Untouched outer test fold.
    test_raw = models.predict_model(model_final, apply_scaler(scaler_final, X_all[test_rows]))
    test_cal = calibration.apply_isotonic(iso, test_raw)
    y_test = y_all[test_rows]
    wf_suite = metrics.full_suite(test_cal, y_test, tau_w)

    cg_ids, cg_raw, cg_labels = _cougher_level(table, test_rows, test_raw)
    cg_ids2, cg_cal, _ = _cougher_level(table, test_rows, test_cal)
    assert list(cg_ids) == list(cg_ids2)
    cg_suite = metrics.full_suite(cg_cal, cg_labels, tau_s)

    conf_out, sel_out, sets_out = {}, {}, {}
    point_preds = (cg_cal >= tau_s).astype(int)
    for alpha in cfg.alphas:
        sets = conf.prediction_sets(cg_cal, alpha)
        ev = conformal.evaluate_sets(sets, cg_labels)
        ev["qhat"] = conf.quantiles[float(alpha)]
        conf_out[float(alpha)] = ev
        sel_out[float(alpha)] = conformal.selective_metrics(point_preds, sets, cg_labels)
        sets_out[float(alpha)] = {
            "has_pos": np.array([1 in s.labels for s in sets]),
            "has_neg": np.array([0 in s.labels for s in sets]),
        }

    audit = {
        "boundaries_disjoint": True,
        "scaler_fit_coughers": sorted(set(table.cougher_ids[tuning_rows])),
        "scaler_fit_within_tuning": set(table.cougher_ids[tuning_rows]) <= set(tuning_c),
        "outer_positive_rates": None,  # filled by run_nested
    }
    if not audit["scaler_fit_within_tuning"]:
        raise LeakageError(f"fold {fold_plan.fold}: scaler saw rows outside the tuning pool")

    return FoldResult(
        fold=fold_plan.fold, family=family, feature_mode=feature_mode,
        best_params=best_params, best_inner_uar=best_uar,
        tau_w=tau_w, tau_s=tau_s, waveform=wf_suite, cougher=cg_suite,
        brier_raw_wf=calibration.brier(test_raw, y_test),
        brier_cal_wf=calibration.brier(test_cal, y_test),
        ece_raw_wf=calibration.ece(test_raw, y_test, cfg.ece_bins),
        ece_cal_wf=calibration.ece(test_cal, y_test, cfg.ece_bins),
        brier_raw_cg=calibration.brier(cg_raw, cg_labels),
        brier_cal_cg=calibration.brier(cg_cal, cg_labels),
        ece_raw_cg=calibration.ece(cg_raw, cg_labels, cfg.ece_bins),
        ece_cal_cg=calibration.ece(cg_cal, cg_labels, cfg.ece_bins),
        conformal=conf_out, selective=sel_out,
        n_test_coughers=len(test_c), n_calib_coughers=len(calib_c),
        n_tuning_coughers=len(tuning_c),
        oof_recording_ids=[table.recording_ids[r] for r in tuning_rows],
        oof_probs=best_oof,
        test_recording_ids=[table.recording_ids[r] for r in test_rows],
        test_wf_raw=test_raw, test_wf_cal=test_cal, test_wf_labels=y_test,
        test_cg_ids=list(cg_ids), test_cg_raw=cg_raw, test_cg_cal=cg_cal,
        test_cg_labels=cg_labels, test_sets=sets_out, audit=audit,
    )


def _run_fold_star(args):
    return run_fold(*args)


def run_nested(dataset, family: str, feature_mode: str, cfg: RunConfig,
               jobs: int = 1, plan: NestedPlan | None = None):
    """Run the full nested protocol; returns (fold_results, plan).

    ``dataset`` is either a list of coughers or an already-built
    FeatureTable. Outer folds are independent and can fan out over a
    process pool; numerical results do not depend on ``jobs``.
    """
    if family not in FAMILIES:
        raise ValueError(f"family must be one of {FAMILIES}, got {family!r}")
    if feature_mode not in FEATURE_MODES:
        raise ValueError(f"feature_mode must be one of {FEATURE_MODES}, got {feature_mode!r}")
    table = dataset if isinstance(dataset, FeatureTable) else build_feature_table(dataset)
    if plan is None:
        ids = table.all_coughers
        plan = build_nested_plan(ids, [table.cougher_label[c] for c in ids],
                                 [table.cougher_rec_count[c] for c in ids],
                                 cfg.k_outer, cfg.k_inner, cfg.calib_frac, cfg.seed)
    args = [(table, fp, family, feature_mode, cfg) for fp in plan.folds]
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(_run_fold_star, args))
    else:
        results = [run_fold(*a) for a in args]
    results.sort(key=lambda r: r.fold)
    rates = plan.outer.positive_rates(table.cougher_label)
    for r in results:
        r.audit["outer_positive_rates"] = rates
    return results, plan
