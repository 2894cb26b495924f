"""Experiment configuration and the end-to-end run front door."""

from __future__ import annotations

import platform
import sys
import time
from dataclasses import asdict, dataclass, field

import numpy as np
import scipy

from . import __version__
from .data import load_manifest
from .pipeline import (DEFAULT_ALPHAS, FAMILIES, FEATURE_MODES, RunConfig,
                       build_feature_table, run_nested)
from .reports import RunReport, aggregate_folds, emit_plots, write_report
from .synth import SyntheticConfig, generate_synthetic


class ConfigError(ValueError):
    """Invalid experiment configuration."""


_SYNTH_KEYS = {"n_coughers", "prevalence", "coughs_mean", "coughs_std", "coughs_min",
               "coughs_max", "signal_strength_audio", "signal_strength_clinical", "seed"}


@dataclass
class ExperimentConfig:
    manifest: str | None = None
    audio_root: str | None = None
    synthetic: dict | None = None
    family: str = "both"  # LR | GBDT | both
    feature_mode: str = "both"  # audio | fused | both
    alphas: tuple = DEFAULT_ALPHAS
    calib_frac: float = 0.15
    ece_bins: int = 10
    seed: int = 42
    k_outer: int = 10
    k_inner: int = 5
    out: str = "runs"
    jobs: int = 1
    scale_binary_clinical: bool = True
    grids: dict = field(default_factory=dict)  # family -> reduced candidate list

    def validate(self) -> None:
        if (self.manifest is None) == (self.synthetic is None):
            raise ConfigError("exactly one data source is required: "
                              "'manifest' or 'synthetic'")
        if self.family not in FAMILIES + ("both",):
            raise ConfigError(f"family must be LR, GBDT, or both, got {self.family!r}")
        if self.feature_mode not in FEATURE_MODES + ("both",):
            raise ConfigError(f"feature_mode must be audio, fused, or both, "
                              f"got {self.feature_mode!r}")
        for a in self.alphas:
            if not 0.0 < float(a) < 1.0:
                raise ConfigError(f"alpha {a} outside (0, 1)")
        if not 0.0 < self.calib_frac <= 0.5:
            raise ConfigError("calib_frac must lie in (0, 0.5]")
        if self.ece_bins < 1:
            raise ConfigError("ece_bins must be >= 1")
        if self.k_outer < 2 or self.k_inner < 2:
            raise ConfigError("k_outer and k_inner must be >= 2")
        if self.jobs < 1:
            raise ConfigError("jobs must be >= 1")
        if self.synthetic is not None:
            unknown = set(self.synthetic) - _SYNTH_KEYS
            if unknown:
                raise ConfigError(f"unknown synthetic config keys: {sorted(unknown)}")
        for fam in self.grids:
            if fam not in FAMILIES:
                raise ConfigError(f"grid override for unknown family {fam!r}")

    @classmethod
    def from_dict(cls, doc: dict) -> "ExperimentConfig":
        known = {f.name for f in cls.__dataclass_fields__.values()}  # type: ignore[attr-defined]
        unknown = set(doc) - known
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        cfg = cls(**doc)
        if isinstance(cfg.alphas, list):
            cfg.alphas = tuple(float(a) for a in cfg.alphas)
        cfg.validate()
        return cfg

    def families(self) -> tuple:
        return FAMILIES if self.family == "both" else (self.family,)

    def feature_modes(self) -> tuple:
        return FEATURE_MODES if self.feature_mode == "both" else (self.feature_mode,)

    def synthetic_config(self) -> SyntheticConfig:
        doc = dict(self.synthetic or {})
        doc.setdefault("seed", self.seed)
        try:
            return SyntheticConfig(**doc)
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc

    def run_config(self, family: str) -> RunConfig:
        grid = self.grids.get(family)
        return RunConfig(alphas=tuple(float(a) for a in self.alphas),
                         calib_frac=self.calib_frac, ece_bins=self.ece_bins,
                         seed=self.seed, k_outer=self.k_outer, k_inner=self.k_inner,
                         grid=tuple(grid) if grid else None,
                         scale_binary_clinical=self.scale_binary_clinical)


def environment_info() -> dict:
    return {
        "python": sys.version.split()[0],
        "numpy": np.__version__,
        "scipy": scipy.__version__,
        "coughscreen": __version__,
        "platform": platform.platform(),
    }


def run_experiment(cfg: ExperimentConfig, write: bool = True,
                   progress=None) -> RunReport:
    """Execute every requested (family, feature_mode) block and assemble the report.

    With ``write=True`` the report files are emitted atomically under
    ``cfg.out``. The returned report is byte-stable for a fixed config.
    """
    cfg.validate()
    t0 = time.monotonic()
    say = progress or (lambda msg: None)

    if cfg.manifest is not None:
        say(f"loading manifest {cfg.manifest}")
        coughers = load_manifest(cfg.manifest, cfg.audio_root)
    else:
        say("generating synthetic dataset")
        coughers = generate_synthetic(cfg.synthetic_config())
    say(f"extracting features for {sum(len(c.recordings) for c in coughers)} recordings")
    table = build_feature_table(coughers)

    blocks = {}
    plan = None
    for family in cfg.families():
        run_cfg = cfg.run_config(family)
        for mode in cfg.feature_modes():
            say(f"running {family} / {mode}")
            results, plan = run_nested(table, family, mode, run_cfg,
                                       jobs=cfg.jobs, plan=plan)
            blocks[(family, mode)] = {
                "folds": results,
                "aggregates": aggregate_folds(results, run_cfg.alphas),
            }

    config_echo = asdict(cfg)
    # out and jobs are execution details: they never affect the numbers and
    # must not break byte-identity of reports across --jobs settings
    execution = {"out": config_echo.pop("out"), "jobs": config_echo.pop("jobs")}
    report = RunReport(config=config_echo, blocks=blocks, plan=plan,
                       alphas=tuple(float(a) for a in cfg.alphas),
                       environment={**environment_info(), **execution},
                       wall_clock_s=time.monotonic() - t0)
    if write:
        written = write_report(report, cfg.out)
        say(f"wrote {len(written)} report files to {cfg.out}")
    return report


__all__ = ["ConfigError", "ExperimentConfig", "environment_info", "run_experiment",
           "emit_plots"]
