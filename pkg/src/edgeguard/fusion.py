"""Score fusion, threshold optimisation and the Gaussian decision analysis.

The fused score is ``F = alpha * e + (1 - alpha) * s`` with higher values
meaning "more anomalous"; a flow is malicious when ``F > tau`` strictly.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import DegenerateInputError, DimensionError, LabelError, ParameterError

DENOMINATOR_GUARD = 1e-12


@dataclass(frozen=True)
class ScoreGaussianFit:
    mu0: float
    sigma0: float
    pi0: float
    mu1: float
    sigma1: float
    pi1: float

    def __post_init__(self):
        if not (self.sigma0 > 0 and self.sigma1 > 0):
            raise ParameterError("class standard deviations must be > 0")
        if not (0 < self.pi0 < 1 and 0 < self.pi1 < 1) or abs(self.pi0 + self.pi1 - 1) > 1e-12:
            raise ParameterError("priors must lie in (0, 1) and sum to 1")

    @classmethod
    def from_scores(cls, scores, labels) -> "ScoreGaussianFit":
        scores, labels = _scores_labels(scores, labels)
        s0, s1 = scores[labels == 0], scores[labels == 1]
        if s0.size < 2 or s1.size < 2:
            raise LabelError("a Gaussian fit needs at least two scores per class")
        pi1 = s1.size / scores.size
        return cls(float(s0.mean()), float(s0.std(ddof=1)), 1.0 - pi1,
                   float(s1.mean()), float(s1.std(ddof=1)), pi1)

    def swapped(self) -> "ScoreGaussianFit":
        return ScoreGaussianFit(self.mu1, self.sigma1, self.pi1, self.mu0, self.sigma0, self.pi0)

    def error_probability(self, tau: float) -> float:
        """Exact Bayes error of thresholding two Gaussians at ``tau``."""
        fa = 0.5 * math.erfc((tau - self.mu0) / (self.sigma0 * math.sqrt(2)))
        md = 0.5 * math.erfc((self.mu1 - tau) / (self.sigma1 * math.sqrt(2)))
        return self.pi0 * fa + self.pi1 * md

    def log_likelihood_ratio(self, F):
        """``log p(F | attack) - log p(F | benign)``."""
        F = np.asarray(F, dtype=float)
        z0 = (F - self.mu0) / self.sigma0
        z1 = (F - self.mu1) / self.sigma1
        return 0.5 * (z0 ** 2 - z1 ** 2) + math.log(self.sigma0 / self.sigma1)

    def to_dict(self) -> dict:
        return {k: float(getattr(self, k)) for k in ("mu0", "sigma0", "pi0", "mu1", "sigma1", "pi1")}


@dataclass
class FusionState:
    alpha: float = 0.5
    mu_lr: float = 0.0
    rho: float = 0.0
    var_z: float = 0.0
    invert_if_score: bool = False
    fit: ScoreGaussianFit | None = None

    def __post_init__(self):
        if not math.isfinite(self.alpha):
            raise ParameterError("alpha must be finite")
        self.alpha = min(1.0, max(0.0, float(self.alpha)))
        if self.var_z < 0:
            raise ParameterError("var_z must be >= 0")
        if self.rho < 0:
            raise ParameterError("rho must be >= 0")

    def to_dict(self) -> dict:
        return {"alpha": self.alpha, "mu_lr": self.mu_lr, "rho": self.rho, "var_z": self.var_z,
                "invert_if_score": self.invert_if_score,
                "fit": self.fit.to_dict() if self.fit else None}

    @classmethod
    def from_dict(cls, data: dict) -> "FusionState":
        fit = data.get("fit")
        return cls(data["alpha"], data["mu_lr"], data["rho"], data["var_z"], data["invert_if_score"],
                   ScoreGaussianFit(**fit) if fit else None)


@dataclass
class ThresholdState:
    tau: float = 0.0
    lam_fp: float = 0.0
    eps_fp: float = 0.01
    rho_tail: float = 0.0
    eta: float = 0.01
    history: list = field(default_factory=list)

    def __post_init__(self):
        if self.eta <= 0:
            raise ParameterError("eta must be > 0")
        if self.lam_fp < 0 or self.rho_tail < 0:
            raise ParameterError("lam_fp and rho_tail must be >= 0")


def fuse(e, s, state: FusionState):
    """Convex combination of reconstruction error and forest score."""
    e = np.asarray(e, dtype=float)
    s = np.asarray(s, dtype=float)
    if state.invert_if_score:
        s = 1.0 - s
    out = state.alpha * e + (1.0 - state.alpha) * s
    return float(out) if out.ndim == 0 else out


def alpha_star(e, s, state: FusionState, log_lr: float = 0.0) -> float:
    """Closed-form fusion weight, clamped to [0, 1]."""
    if state.invert_if_score:
        s = 1.0 - s
    den = s + e + state.rho * state.var_z
    if den < DENOMINATOR_GUARD:
        raise DegenerateInputError(f"alpha denominator {den!r} is below {DENOMINATOR_GUARD}")
    return min(1.0, max(0.0, (s - state.mu_lr * log_lr) / den))


# -- threshold search ----------------------------------------------------------


@dataclass
class ThresholdResult:
    tau: float
    objective: float
    f1: float
    fpr: float
    candidates: np.ndarray
    objectives: np.ndarray

    def sweep_rows(self):
        return [(float(t), float(o)) for t, o in zip(self.candidates, self.objectives)]


def _scores_labels(scores, labels):
    scores = np.asarray(scores, dtype=float).ravel()
    labels = np.asarray(labels).ravel()
    if scores.shape != labels.shape:
        raise DimensionError(f"{scores.size} scores but {labels.size} labels")
    if not np.all(np.isin(labels, (0, 1))):
        raise LabelError("labels must be 0 (benign) or 1 (attack)")
    return scores, labels.astype(int)


def candidate_thresholds(scores) -> np.ndarray:
    """Midpoints between distinct sorted scores plus one sentinel on each side."""
    u = np.unique(np.asarray(scores, dtype=float))
    if u.size < 2:
        raise DegenerateInputError("all scores are identical; no threshold separates them")
    span = u[-1] - u[0]
    return np.concatenate(([u[0] - span], (u[:-1] + u[1:]) / 2.0, [u[-1] + span]))


def threshold_objective(tau, scores, labels, config: ThresholdState):
    """Negative F1 + FP hinge penalty + tail mass, for one or many ``tau``.

    Predictions are ``score > tau``. FP(tau) is the false-positive rate and
    the tail mass is the empirical survival fraction of all scores.
    """
    scores, labels = _scores_labels(scores, labels)
    taus = np.atleast_1d(np.asarray(tau, dtype=float))
    pos_sorted = np.sort(scores[labels == 1])
    neg_sorted = np.sort(scores[labels == 0])
    npos, nneg = pos_sorted.size, neg_sorted.size
    tp = npos - np.searchsorted(pos_sorted, taus, side="right")
    fp = nneg - np.searchsorted(neg_sorted, taus, side="right")
    f1 = np.where(tp > 0, 2.0 * tp / np.maximum(tp + fp + npos, 1), 0.0)
    fpr = fp / nneg if nneg else np.zeros_like(taus)
    tail = (tp + fp) / scores.size
    obj = -f1 + config.lam_fp * np.maximum(0.0, fpr - config.eps_fp) ** 2 + config.rho_tail * tail
    if np.ndim(tau) == 0:
        return float(obj[0]), float(f1[0]), float(fpr[0])
    return obj, f1, fpr


def optimize_threshold(scores, labels, config: ThresholdState | None = None) -> ThresholdResult:
    """Minimise the threshold objective over all score midpoints.

    Ties in the objective go to the larger threshold.
    """
    config = config or ThresholdState()
    scores, labels = _scores_labels(scores, labels)
    if labels.min() == labels.max():
        raise LabelError("threshold optimisation needs both benign and attack scores")
    cands = candidate_thresholds(scores)
    obj, f1, fpr = threshold_objective(cands, scores, labels, config)
    best = np.flatnonzero(obj == obj.min())[-1]
    return ThresholdResult(float(cands[best]), float(obj[best]), float(f1[best]), float(fpr[best]),
                           cands, obj)


def quantile_threshold(benign_scores, eps_fp: float = 0.01) -> float:
    """Unsupervised threshold: the (1 - eps_fp) quantile of benign scores."""
    benign_scores = np.asarray(benign_scores, dtype=float)
    if benign_scores.size == 0:
        raise DimensionError("no benign calibration scores")
    if not 0 <= eps_fp < 1:
        raise ParameterError("eps_fp must lie in [0, 1)")
    return float(np.quantile(benign_scores, 1.0 - eps_fp))


def smoothed_objective_and_grad(tau: float, scores, labels, config: ThresholdState, width: float):
    """Logistic-smoothed threshold objective and its derivative in ``tau``."""
    scores, labels = _scores_labels(scores, labels)
    npos = labels.sum()
    nneg = labels.size - npos
    if npos == 0 or nneg == 0:
        raise LabelError("batch must contain both classes")
    u = (scores - tau) / width
    p = 0.5 * (1.0 + np.tanh(0.5 * u))  # logistic, overflow-free
    dp = -p * (1.0 - p) / width
    tp, fp = float(np.sum(p * labels)), float(np.sum(p * (1 - labels)))
    dtp, dfp = float(np.sum(dp * labels)), float(np.sum(dp * (1 - labels)))
    den = tp + fp + npos
    f1 = 2.0 * tp / den
    df1 = 2.0 * (dtp * den - tp * (dtp + dfp)) / den ** 2
    hinge = max(0.0, fp / nneg - config.eps_fp)
    loss = -f1 + config.lam_fp * hinge ** 2 + config.rho_tail * float(p.mean())
    grad = -df1 + 2.0 * config.lam_fp * hinge * dfp / nneg + config.rho_tail * float(dp.mean())
    return loss, grad


def threshold_update_step(state: ThresholdState, scores, labels, width: float | None = None) -> float:
    """One gradient step on the smoothed objective; updates ``state`` in place."""
    scores = np.asarray(scores, dtype=float)
    if width is None:
        span = float(scores.max() - scores.min()) if scores.size else 0.0
        if span <= 0:
            raise DegenerateInputError("score range is zero; smoothing width undefined")
        width = 0.01 * span
    _, grad = smoothed_objective_and_grad(state.tau, scores, labels, state, width)
    state.history.append(state.tau)
    state.tau = state.tau - state.eta * grad
    return state.tau


# -- Gaussian analysis ---------------------------------------------------------


def tau_star_gaussian(fit: ScoreGaussianFit) -> float:
    """Bayes-optimal threshold for two Gaussian score classes.

    Solves ``pi0 * N(tau; mu0, s0) = pi1 * N(tau; mu1, s1)``; of the two roots
    the one with the lower error probability is returned.
    """
    mu0, s0, pi0, mu1, s1, pi1 = fit.mu0, fit.sigma0, fit.pi0, fit.mu1, fit.sigma1, fit.pi1
    dv = s1 ** 2 - s0 ** 2
    if abs(dv) <= 1e-10:
        if mu0 == mu1:
            raise DegenerateInputError("equal means and variances: the classes cannot be separated")
        var = 0.5 * (s0 ** 2 + s1 ** 2)
        return 0.5 * (mu0 + mu1) + var * math.log(pi0 / pi1) / (mu1 - mu0)
    k = math.log(pi0 * s1 / (pi1 * s0))
    disc = (mu1 - mu0) ** 2 + 2.0 * dv * k
    if disc < 0:
        raise DegenerateInputError("weighted class densities never cross; no finite optimum")
    centre = mu0 * s1 ** 2 - mu1 * s0 ** 2
    root = s0 * s1 * math.sqrt(disc)
    roots = ((centre + root) / dv, (centre - root) / dv)
    return min(roots, key=fit.error_probability)


def error_bounds(tau: float, fit: ScoreGaussianFit, eps_target: float = 0.01) -> dict:
    """Sub-Gaussian false-alarm / miss bounds at threshold ``tau``.

    A bound is vacuous (reported as 1) when ``tau`` lies on the wrong side of
    the corresponding class mean.
    """
    fa_vacuous = tau < fit.mu0
    md_vacuous = tau > fit.mu1
    fa = 1.0 if fa_vacuous else math.exp(-(tau - fit.mu0) ** 2 / (2 * fit.sigma0 ** 2))
    md = 1.0 if md_vacuous else math.exp(-(fit.mu1 - tau) ** 2 / (2 * fit.sigma1 ** 2))
    need = math.sqrt(2 * (fit.sigma0 ** 2 + fit.sigma1 ** 2) * math.log(1 / eps_target))
    return {
        "FA_bound": fa,
        "MD_bound": md,
        "Pe_bound": fit.pi0 * fa + fit.pi1 * md,
        "separability_ok": (fit.mu1 - fit.mu0) > need,
        "FA_vacuous": fa_vacuous,
        "MD_vacuous": md_vacuous,
    }
