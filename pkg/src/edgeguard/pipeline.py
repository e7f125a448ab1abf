"""The trained detector: normalizer -> autoencoder -> forest -> fusion -> threshold.

Training follows the fixed order normalize, fit AE on benign rows, encode,
fit the forest on benign latents. Calibration then sets the global fusion
weight and the threshold on a held-out set.
"""

from __future__ import annotations

import json
import logging
import math
import os
from dataclasses import asdict, dataclass, field
from typing import Sequence

import numpy as np

from . import autoencoder as ae
from . import iforest
from .errors import DimensionError, LabelError, ModelFormatError, ParameterError, PipelineConsistencyError
from .features import FEATURES, FlowRecord
from .fusion import (FusionState, ScoreGaussianFit, ThresholdState, alpha_star, fuse,
                     optimize_threshold, quantile_threshold)
from .preprocess import NormalizationMode, fit_normalizer, format_params, parse_params, transform

logger = logging.getLogger(__name__)

SCORE_VARIANTS = ("classic", "leafmass")
BUNDLE_FILES = {"normalizer": "normalizer.txt", "autoencoder": "autoencoder.json",
                "forest": "forest.txt", "pipeline": "pipeline.json"}


@dataclass
class PipelineConfig:
    mode: str = NormalizationMode.FULL_COMPOSITE.value
    ae: ae.AEHyper = field(default_factory=ae.AEHyper)
    n_trees: int = 100
    subsample: int = 256
    score_variant: str = "classic"
    rho: float = 0.0
    mu_lr: float = 0.0
    lam_fp: float = 0.0
    eps_fp: float = 0.01
    rho_tail: float = 0.0
    risk_quantile: float = 0.99
    seed: int = 0

    def __post_init__(self):
        self.mode = NormalizationMode(self.mode).value
        if self.score_variant not in SCORE_VARIANTS:
            raise ParameterError(f"score_variant must be one of {SCORE_VARIANTS}")
        if not 0 < self.risk_quantile <= 1:
            raise ParameterError("risk_quantile must lie in (0, 1]")

    def to_dict(self) -> dict:
        out = asdict(self)
        out["ae"] = asdict(self.ae)
        return out

    @classmethod
    def from_dict(cls, data: dict) -> "PipelineConfig":
        data = dict(data)
        data["ae"] = ae.AEHyper(**data.get("ae", {}))
        return cls(**data)


@dataclass(frozen=True)
class Detection:
    decision: str
    F: float
    e: float
    s: float
    margin: float

    @property
    def malicious(self) -> bool:
        return self.decision == "malicious"


@dataclass
class Pipeline:
    schema: tuple
    config: PipelineConfig
    normalizer: object
    autoencoder: ae.AEParams
    forest: iforest.IsolationForestModel
    fusion: FusionState = field(default_factory=FusionState)
    tau: float | None = None
    risk_cutoff: float | None = None
    feature_scale: np.ndarray | None = None
    train_report: ae.TrainReport | None = None
    calibration: dict | None = None

    def __post_init__(self):
        self.schema = tuple(self.schema)
        self.check_consistency()

    # -- structure -------------------------------------------------------------

    def check_consistency(self):
        d = len(self.schema)
        if self.normalizer.n_features != d:
            raise PipelineConsistencyError(
                f"normalizer has {self.normalizer.n_features} features, schema has {d}")
        if self.normalizer.names is not None and tuple(self.normalizer.names) != self.schema:
            raise PipelineConsistencyError("normalizer feature names differ from the schema")
        if self.autoencoder.input_dim != d:
            raise PipelineConsistencyError(f"autoencoder expects {self.autoencoder.input_dim} inputs, schema has {d}")
        if self.forest.n_features != self.autoencoder.latent_dim:
            raise PipelineConsistencyError(
                f"forest expects {self.forest.n_features} latent dims, AE produces {self.autoencoder.latent_dim}")

    @property
    def calibrated(self) -> bool:
        return self.tau is not None

    @property
    def mode(self) -> NormalizationMode:
        return NormalizationMode(self.config.mode)

    def _matrix(self, X) -> np.ndarray:
        if isinstance(X, FlowRecord):
            X = X.vector(self.schema)
        elif isinstance(X, (list, tuple)) and X and isinstance(X[0], FlowRecord):
            X = np.array([r.vector(self.schema) for r in X])
        X = np.asarray(X, dtype=float)
        X = np.atleast_2d(X)
        if X.ndim != 2 or X.shape[1] != len(self.schema):
            raise PipelineConsistencyError(
                f"input has {X.shape[-1]} columns but the pipeline schema has {len(self.schema)}")
        return X

    # -- scoring ---------------------------------------------------------------

    def normalize(self, X) -> np.ndarray:
        return transform(self._matrix(X), self.normalizer, self.mode)

    def forest_score(self, Z_latent) -> np.ndarray:
        if self.config.score_variant == "leafmass":
            return iforest.score_leafmass(Z_latent, self.forest)
        return iforest.score_classic(Z_latent, self.forest)

    def components_normalized(self, Xn) -> tuple[np.ndarray, np.ndarray]:
        """(e, s) for rows already in normalized feature space."""
        Xn = np.atleast_2d(np.asarray(Xn, dtype=float))
        e = ae.reconstruction_error(Xn, self.autoencoder)
        s = self.forest_score(ae.encode(Xn, self.autoencoder))
        return np.atleast_1d(e), np.atleast_1d(s)

    def fused_normalized(self, Xn) -> np.ndarray:
        e, s = self.components_normalized(Xn)
        return np.atleast_1d(fuse(e, s, self.fusion))

    def score_batch(self, X) -> dict:
        e, s = self.components_normalized(self.normalize(X))
        F = np.atleast_1d(fuse(e, s, self.fusion))
        out = {"e": e, "s": s, "F": F}
        if self.calibrated:
            out["malicious"] = F > self.tau
            out["margin"] = np.abs(F - self.tau)
        return out

    def predict(self, X) -> np.ndarray:
        self._require_calibrated()
        return (self.score_batch(X)["F"] > self.tau).astype(int)

    def detect(self, x) -> Detection:
        """Classify one flow: malicious iff ``F > tau`` strictly."""
        self._require_calibrated()
        r = self.score_batch(x)
        if r["F"].size != 1:
            raise DimensionError("detect expects a single flow")
        F = float(r["F"][0])
        return Detection("malicious" if F > self.tau else "benign", F, float(r["e"][0]),
                         float(r["s"][0]), abs(F - self.tau))

    def _require_calibrated(self):
        if not self.calibrated:
            raise PipelineConsistencyError("pipeline has no threshold; run calibration first")

    # -- persistence -----------------------------------------------------------

    def save(self, directory, include_forest: bool = True) -> dict:
        os.makedirs(directory, exist_ok=True)
        paths = {k: os.path.join(directory, v) for k, v in BUNDLE_FILES.items()}
        _write(paths["normalizer"], format_params(self.normalizer))
        _write(paths["autoencoder"], ae.format_model(self.autoencoder))
        if include_forest:
            _write(paths["forest"], iforest.format_forest(self.forest))
        meta = {
            "format": "edgeguard-pipeline", "version": 1,
            "schema": list(self.schema),
            "config": self.config.to_dict(),
            "fusion": self.fusion.to_dict(),
            "tau": self.tau,
            "risk_cutoff": self.risk_cutoff,
            "feature_scale": None if self.feature_scale is None else [float(v) for v in self.feature_scale],
            "calibration": self.calibration,
        }
        _write(paths["pipeline"], json.dumps(meta, indent=2, sort_keys=True) + "\n")
        return paths


def _write(path, text):
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(text)


def _read(path):
    try:
        with open(path, encoding="utf-8") as fh:
            return fh.read()
    except FileNotFoundError:
        raise PipelineConsistencyError(f"bundle file missing: {path}") from None


def load_pipeline(directory) -> Pipeline:
    meta = json.loads(_read(os.path.join(directory, BUNDLE_FILES["pipeline"])))
    if meta.get("format") != "edgeguard-pipeline" or meta.get("version") != 1:
        raise ModelFormatError("unsupported pipeline metadata")
    scale = meta.get("feature_scale")
    return Pipeline(
        schema=tuple(meta["schema"]),
        config=PipelineConfig.from_dict(meta["config"]),
        normalizer=parse_params(_read(os.path.join(directory, BUNDLE_FILES["normalizer"]))),
        autoencoder=ae.parse_model(_read(os.path.join(directory, BUNDLE_FILES["autoencoder"]))),
        forest=iforest.parse_forest(_read(os.path.join(directory, BUNDLE_FILES["forest"]))),
        fusion=FusionState.from_dict(meta["fusion"]),
        tau=meta.get("tau"),
        risk_cutoff=meta.get("risk_cutoff"),
        feature_scale=None if scale is None else np.array(scale),
        calibration=meta.get("calibration"),
    )


# -- training / calibration ----------------------------------------------------


def train_pipeline(X_benign, config: PipelineConfig | None = None,
                   schema: Sequence[str] = FEATURES) -> Pipeline:
    """Fit normalizer, autoencoder and forest on benign rows."""
    config = config or PipelineConfig()
    X = np.asarray(X_benign, dtype=float)
    if X.ndim != 2 or X.shape[1] != len(schema):
        raise PipelineConsistencyError(f"training matrix shape {X.shape} does not match schema of {len(schema)}")
    if X.shape[0] < 2:
        raise DimensionError("need at least two benign training rows")
    normalizer = fit_normalizer(X, names=schema)
    Xn = transform(X, normalizer, config.mode)
    hyper = config.ae
    params, report = ae.train(Xn, hyper)
    Z = ae.encode(Xn, params)
    n = min(config.subsample, Z.shape[0])
    forest = iforest.fit_forest(Z, m=config.n_trees, n=n, seed=config.seed)
    var_z = float(np.mean(Z.var(axis=0)))
    fusion = FusionState(alpha=0.5, mu_lr=config.mu_lr, rho=config.rho, var_z=var_z)
    scale = Xn.std(axis=0)
    scale = np.where(scale > 0, scale, 1.0)
    logger.info("trained pipeline on %d rows (mode=%s, final AE loss %.4g)", X.shape[0], config.mode,
                report.final_loss)
    return Pipeline(tuple(schema), config, normalizer, params, forest, fusion,
                    feature_scale=scale, train_report=report)


def calibrate(pipeline: Pipeline, X_cal, y_cal=None) -> Pipeline:
    """Set the global fusion weight and the decision threshold in place.

    alpha comes from the means of e and s over the benign calibration rows,
    so it reflects score scales under normal traffic and does not depend on
    how many attacks the calibration set happens to hold. With attack labels the
    threshold minimises the threshold objective; without them it is the
    (1 - eps_fp) quantile of benign fused scores.
    """
    cfg = pipeline.config
    X_cal = pipeline._matrix(X_cal)
    y = np.zeros(X_cal.shape[0], dtype=int) if y_cal is None else np.asarray(y_cal, dtype=int)
    if y.shape[0] != X_cal.shape[0]:
        raise DimensionError("calibration labels and rows differ in length")
    e, s = pipeline.components_normalized(pipeline.normalize(X_cal))
    state = pipeline.fusion
    if not np.any(y == 0):
        raise LabelError("calibration needs benign rows")
    e_bar, s_bar = float(e[y == 0].mean()), float(s[y == 0].mean())
    state.alpha = alpha_star(e_bar, s_bar, state)
    supervised = 0 < y.sum() < y.size
    log_lr = 0.0
    if supervised and state.mu_lr:
        fit = ScoreGaussianFit.from_scores(fuse(e, s, state), y)
        state.fit = fit
        log_lr = float(np.mean(fit.log_likelihood_ratio(fuse(e, s, state))))
        state.alpha = alpha_star(e_bar, s_bar, state, log_lr)
    F = np.atleast_1d(fuse(e, s, state))
    info = {"alpha": state.alpha, "log_lr": log_lr, "rows": int(y.size), "attacks": int(y.sum())}
    if supervised:
        result = optimize_threshold(F, y, ThresholdState(lam_fp=cfg.lam_fp, eps_fp=cfg.eps_fp,
                                                         rho_tail=cfg.rho_tail))
        pipeline.tau = result.tau
        info.update(method="objective", objective=result.objective, f1=result.f1, fpr=result.fpr)
        if state.fit is None and min(y.sum(), y.size - y.sum()) >= 2:
            state.fit = ScoreGaussianFit.from_scores(F, y)
    else:
        pipeline.tau = quantile_threshold(F[y == 0], cfg.eps_fp)
        info.update(method="benign-quantile", eps_fp=cfg.eps_fp)
    pipeline.risk_cutoff = float(np.quantile(F, cfg.risk_quantile))
    info.update(tau=pipeline.tau, risk_cutoff=pipeline.risk_cutoff)
    pipeline.calibration = info
    logger.info("calibrated: alpha=%.4f tau=%.6g (%s)", state.alpha, pipeline.tau, info["method"])
    return pipeline


def fit_pipeline(X_benign, X_cal, y_cal=None, config: PipelineConfig | None = None,
                 schema: Sequence[str] = FEATURES) -> Pipeline:
    return calibrate(train_pipeline(X_benign, config, schema), X_cal, y_cal)


def component_thresholds(pipeline: Pipeline, X_cal, y_cal) -> dict:
    """Optimised thresholds for the AE-only and forest-only detectors."""
    e, s = pipeline.components_normalized(pipeline.normalize(X_cal))
    cfg = pipeline.config
    ts = ThresholdState(lam_fp=cfg.lam_fp, eps_fp=cfg.eps_fp, rho_tail=cfg.rho_tail)
    return {"ae": optimize_threshold(e, y_cal, ts).tau, "forest": optimize_threshold(s, y_cal, ts).tau}


def model_bytes(pipeline: Pipeline) -> int:
    """Approximate in-memory footprint of the model parameters."""
    weights = pipeline.autoencoder.n_weights()
    nodes = sum(t.n_nodes for t in pipeline.forest.trees)
    stats = 6 * len(pipeline.schema)
    return 8 * (weights + stats) + nodes * (8 + 8 + 8 + 8 + 8 + 8)


def is_finite_pipeline(pipeline: Pipeline) -> bool:
    p = pipeline.autoencoder
    return all(np.all(np.isfinite(a)) for a in (p.W_enc, p.b_enc, p.W_dec, p.b_dec)) and math.isfinite(
        pipeline.fusion.alpha)
