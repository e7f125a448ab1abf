"""Composite feature normalization and its empirical Lipschitz check."""

from __future__ import annotations

import enum
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import DegenerateInputError, DimensionError, ModelFormatError, ParameterError

STAT_NAMES = ("mu", "sigma", "min", "max", "median", "iqr")


class NormalizationMode(str, enum.Enum):
    RAW = "raw"
    ZSCORE = "zscore"
    MINMAX = "minmax"
    ROBUST = "robust"
    MINMAX_PLUS_LOG = "minmax_plus_log"
    FULL_COMPOSITE = "full_composite"


@dataclass(frozen=True)
class NormalizationParams:
    """Per-column statistics plus the global composite weights.

    ``sigma`` is the population standard deviation and ``iqr`` uses
    linear-interpolation quantiles.
    """

    mu: np.ndarray
    sigma: np.ndarray
    min: np.ndarray
    max: np.ndarray
    median: np.ndarray
    iqr: np.ndarray
    eps: float = 1e-8
    delta: float = 0.05
    eta: float = 0.05
    names: tuple[str, ...] | None = None

    def __post_init__(self):
        if self.eps <= 0:
            raise ParameterError("eps must be > 0")
        if np.any(self.sigma < 0) or np.any(self.iqr < 0) or np.any(self.max < self.min):
            raise ParameterError("invalid normalization statistics")

    @property
    def n_features(self) -> int:
        return self.mu.shape[0]

    def with_weights(self, delta=None, eta=None) -> "NormalizationParams":
        return NormalizationParams(
            self.mu, self.sigma, self.min, self.max, self.median, self.iqr,
            eps=self.eps,
            delta=self.delta if delta is None else delta,
            eta=self.eta if eta is None else eta,
            names=self.names,
        )


def fit_normalizer(X, eps: float = 1e-8, delta: float = 0.05, eta: float = 0.05,
                   names: Sequence[str] | None = None) -> NormalizationParams:
    X = np.asarray(X, dtype=float)
    if X.ndim != 2 or X.shape[0] == 0:
        raise DimensionError(f"expected a non-empty n x d matrix, got shape {X.shape}")
    q1, med, q3 = np.quantile(X, [0.25, 0.5, 0.75], axis=0)
    return NormalizationParams(
        mu=X.mean(axis=0),
        sigma=X.std(axis=0),
        min=X.min(axis=0),
        max=X.max(axis=0),
        median=med,
        iqr=q3 - q1,
        eps=eps,
        delta=delta,
        eta=eta,
        names=tuple(names) if names is not None else None,
    )


def _safe_ratio(num: np.ndarray, den: np.ndarray) -> np.ndarray:
    # zero-denominator columns map to 0
    out = np.zeros_like(num)
    ok = np.broadcast_to(den > 0, num.shape)
    with np.errstate(over="ignore"):
        np.divide(num, np.broadcast_to(den, num.shape), out=out, where=ok)
    return out


def transform(X, params: NormalizationParams, mode=NormalizationMode.FULL_COMPOSITE) -> np.ndarray:
    mode = NormalizationMode(mode)
    X = np.asarray(X, dtype=float)
    squeeze = X.ndim == 1
    X = np.atleast_2d(X)
    if X.shape[1] != params.n_features:
        raise DimensionError(f"expected {params.n_features} columns, got {X.shape[1]}")

    if mode is NormalizationMode.RAW:
        out = X.copy()
    elif mode is NormalizationMode.ZSCORE:
        out = (X - params.mu) / (params.sigma + params.eps)
    elif mode is NormalizationMode.ROBUST:
        out = _safe_ratio(X - params.median, params.iqr)
    else:
        out = _safe_ratio(X - params.min, params.max - params.min)
        if mode in (NormalizationMode.MINMAX_PLUS_LOG, NormalizationMode.FULL_COMPOSITE):
            out = out + params.delta * np.log1p(np.abs(X - params.mu) / (params.sigma + params.eps))
        if mode is NormalizationMode.FULL_COMPOSITE:
            out = out + params.eta * _safe_ratio(X - params.median, params.iqr)
    return out[0] if squeeze else out


def empirical_lipschitz(params: NormalizationParams, X, pair_count: int = 1000, seed: int = 0,
                        mode=NormalizationMode.ZSCORE) -> dict:
    """Largest observed ||T(a) - T(b)|| / ||a - b|| over random row pairs.

    Returns the estimate together with the analytic z-score constant
    ``1 / (sigma_min + eps)`` for reference.
    """
    X = np.asarray(X, dtype=float)
    if X.ndim != 2 or X.shape[0] < 2:
        raise DimensionError("need at least two rows")
    if np.all(X == X[0]):
        raise DegenerateInputError("all rows are identical")
    rng = np.random.default_rng(seed)
    i = rng.integers(0, X.shape[0], size=pair_count)
    j = rng.integers(0, X.shape[0], size=pair_count)
    dx = np.linalg.norm(X[i] - X[j], axis=1)
    keep = dx > 0
    if not np.any(keep):
        raise DegenerateInputError("every sampled pair was a duplicate")
    T = transform(X, params, mode)
    dt = np.linalg.norm(T[i[keep]] - T[j[keep]], axis=1)
    return {
        "estimate": float(np.max(dt / dx[keep])),
        "analytic_zscore": float(1.0 / (np.min(params.sigma) + params.eps)),
        "pairs_used": int(keep.sum()),
    }


# -- key/value persistence ---------------------------------------------------
#
#   # edgeguard-normalizer v1
#   eps = 1e-08
#   delta = 0.05
#   eta = 0.05
#   <feature> = <mu> <sigma> <min> <max> <median> <iqr>


def format_params(params: NormalizationParams) -> str:
    names = params.names or tuple(f"f{j}" for j in range(params.n_features))
    lines = ["# edgeguard-normalizer v1", f"eps = {params.eps!r}", f"delta = {params.delta!r}",
             f"eta = {params.eta!r}"]
    for j, name in enumerate(names):
        stats = " ".join(repr(float(getattr(params, s)[j])) for s in STAT_NAMES)
        lines.append(f"{name} = {stats}")
    return "\n".join(lines) + "\n"


def parse_params(text: str) -> NormalizationParams:
    lines = text.splitlines()
    if not lines or not lines[0].startswith("# edgeguard-normalizer"):
        raise ModelFormatError("not a normalizer file")
    version = lines[0].split()[-1]
    if version != "v1":
        raise ModelFormatError(f"unsupported normalizer version {version}")
    scalars = {}
    names, rows = [], []
    for line in lines[1:]:
        if not line.strip() or line.startswith("#"):
            continue
        key, _, value = (part.strip() for part in line.partition("="))
        if key in ("eps", "delta", "eta"):
            scalars[key] = float(value)
        else:
            stats = [float(v) for v in value.split()]
            if len(stats) != len(STAT_NAMES):
                raise ModelFormatError(f"feature {key!r} needs {len(STAT_NAMES)} statistics")
            names.append(key)
            rows.append(stats)
    cols = np.array(rows, dtype=float).reshape(-1, len(STAT_NAMES)).T
    return NormalizationParams(*cols, names=tuple(names), **scalars)
