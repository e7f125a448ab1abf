"""Lipschitz bookkeeping, certified radii and a one-step gradient attack.

Everything here works in the pipeline's normalized feature space: that is
where the autoencoder and forest live, and where distances are measured.
Norms are L2 throughout.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from . import autoencoder as ae
from .errors import DegenerateInputError, DimensionError, ParameterError

INFLATION = 1.5
FD_STEP = 1e-3


@dataclass(frozen=True)
class RobustnessCert:
    L_e: float
    L_s: float
    L_F: float
    margin: float
    radius: float
    sigma_noise: float
    misclass_bound: float


def lipschitz_fusion(alpha: float, L_e: float, L_s: float) -> float:
    if not 0 <= alpha <= 1:
        raise ParameterError("alpha must lie in [0, 1]")
    if L_e < 0 or L_s < 0:
        raise ParameterError("Lipschitz constants must be >= 0")
    return alpha * L_e + (1 - alpha) * L_s


def certified_radius(F_x: float, tau: float, L_F: float) -> float:
    """``|F_x - tau| / L_F``; infinite when the score is constant (L_F = 0)."""
    if L_F < 0:
        raise ParameterError("L_F must be >= 0")
    margin = abs(F_x - tau)
    if L_F == 0:
        return math.inf
    return margin / L_F


def gaussian_certificate(margin: float, L_F: float, sigma: float) -> float:
    """Upper bound on the decision-flip probability under N(0, sigma^2 I) noise."""
    if sigma <= 0 or L_F <= 0:
        raise ParameterError("sigma and L_F must be > 0")
    return min(1.0, math.exp(-margin ** 2 / (2 * L_F ** 2 * sigma ** 2)))


# -- empirical Lipschitz estimates ---------------------------------------------


def _fd_gradient(score_fn, X, steps) -> np.ndarray:
    """Central differences along every coordinate, vectorised over rows."""
    n, d = X.shape
    probes = np.concatenate([X + np.eye(d)[j] * steps[j] for j in range(d)]
                            + [X - np.eye(d)[j] * steps[j] for j in range(d)])
    vals = np.asarray(score_fn(probes), dtype=float).reshape(2 * d, n)
    return ((vals[:d] - vals[d:]) / (2 * steps[:, None])).T


def sample_pairs(samples, pair_count: int = 1000, seed: int = 0, scale=None, score_fn=None):
    """Point pairs for slope estimation.

    Random pairs of samples, plus one local pair ``(x, x + h u)`` per sample
    with ``h = 1e-3 * scale`` per feature. ``u`` is a random unit direction,
    or the finite-difference gradient direction when ``score_fn`` is given.
    """
    X = np.asarray(samples, dtype=float)
    if X.ndim != 2 or X.shape[0] < 2:
        raise DimensionError("need at least two samples")
    n, d = X.shape
    rng = np.random.default_rng(seed)
    if scale is None:
        scale = X.std(axis=0)
    scale = np.where(np.asarray(scale, dtype=float) > 0, scale, 1.0)
    steps = FD_STEP * scale
    i = rng.integers(0, n, size=pair_count)
    j = rng.integers(0, n, size=pair_count)
    u = rng.normal(size=(n, d))
    if score_fn is not None:
        g = _fd_gradient(score_fn, X, steps)
        has_g = np.linalg.norm(g, axis=1) > 0
        u[has_g] = g[has_g]
    u /= np.linalg.norm(u, axis=1, keepdims=True)
    A = np.concatenate([X[i], X])
    B = np.concatenate([X[j], X + steps * u])
    keep = np.any(A != B, axis=1)
    if not np.any(keep):
        raise DegenerateInputError("every sampled pair is degenerate")
    return A[keep], B[keep]


def lipschitz_on_pairs(score_fn: Callable, A, B) -> float:
    fa = np.asarray(score_fn(A), dtype=float)
    fb = np.asarray(score_fn(B), dtype=float)
    dist = np.linalg.norm(A - B, axis=1)
    ok = dist > 0
    return float(np.max(np.abs(fa[ok] - fb[ok]) / dist[ok])) if np.any(ok) else 0.0


def empirical_lipschitz_component(score_fn: Callable, samples, pair_count: int = 1000, seed: int = 0,
                                  scale=None) -> float:
    """Largest finite-difference slope of ``score_fn`` over sampled pairs."""
    A, B = sample_pairs(samples, pair_count, seed, scale, score_fn)
    return lipschitz_on_pairs(score_fn, A, B)


def estimate_pipeline_lipschitz(pipeline, Xn, pair_count: int = 2000, seed: int = 0,
                                inflation: float = INFLATION) -> dict:
    """Slopes of e, s and F on one shared pair set, plus the inflated L_F."""
    Xn = np.asarray(Xn, dtype=float)
    e_fn = lambda Z: pipeline.components_normalized(Z)[0]  # noqa: E731
    s_fn = lambda Z: pipeline.components_normalized(Z)[1]  # noqa: E731
    scale = pipeline.feature_scale
    Ae, Be = sample_pairs(Xn, pair_count, seed, scale, e_fn)
    As, Bs = sample_pairs(Xn, pair_count, seed, scale, s_fn)
    A, B = np.concatenate([Ae, As[pair_count:]]), np.concatenate([Be, Bs[pair_count:]])
    L_e = lipschitz_on_pairs(e_fn, A, B)
    L_s = lipschitz_on_pairs(s_fn, A, B)
    L_fused = lipschitz_on_pairs(pipeline.fused_normalized, A, B)
    alpha = pipeline.fusion.alpha
    return {
        "L_e": L_e,
        "L_s": L_s,
        "L_F_direct": L_fused,
        "L_F_bound": lipschitz_fusion(alpha, L_e, L_s),
        "L_F": inflation * lipschitz_fusion(alpha, L_e, L_s),
        "inflation": inflation,
        "pairs": int(A.shape[0]),
    }


def certify(pipeline, Xn, L_e: float, L_s: float, sigma_noise: float, inflation: float = 1.0) -> list:
    """Per-row certificates with ``L_F = inflation * (alpha L_e + (1 - alpha) L_s)``."""
    L_e, L_s = inflation * L_e, inflation * L_s
    L_F = lipschitz_fusion(pipeline.fusion.alpha, L_e, L_s)
    F = pipeline.fused_normalized(Xn)
    out = []
    for f in F:
        margin = abs(float(f) - pipeline.tau)
        bound = gaussian_certificate(margin, L_F, sigma_noise) if L_F > 0 else 0.0
        out.append(RobustnessCert(L_e, L_s, L_F, margin, certified_radius(f, pipeline.tau, L_F),
                                  sigma_noise, bound))
    return out


# -- fuzzing -------------------------------------------------------------------


def uniform_ball(rng: np.random.Generator, count: int, d: int, radius: float) -> np.ndarray:
    """Points strictly inside the L2 ball of the given radius."""
    u = rng.normal(size=(count, d))
    u /= np.linalg.norm(u, axis=1, keepdims=True)
    r = radius * rng.random(count) ** (1.0 / d)
    return u * r[:, None]


def fuzz_flips(pipeline, x_norm, radius: float, count: int = 10_000, seed: int = 0) -> int:
    """Decision flips among ``count`` perturbations inside ``radius``."""
    x_norm = np.asarray(x_norm, dtype=float)
    if not math.isfinite(radius):
        radius = 1.0
    rng = np.random.default_rng(seed)
    base = pipeline.fused_normalized(x_norm)[0] > pipeline.tau
    F = pipeline.fused_normalized(x_norm + uniform_ball(rng, count, x_norm.size, radius))
    return int(np.sum((F > pipeline.tau) != base))


def gaussian_flip_rate(pipeline, x_norm, sigma: float, draws: int = 10_000, seed: int = 0) -> float:
    x_norm = np.asarray(x_norm, dtype=float)
    rng = np.random.default_rng(seed)
    base = pipeline.fused_normalized(x_norm)[0] > pipeline.tau
    F = pipeline.fused_normalized(x_norm + sigma * rng.normal(size=(draws, x_norm.size)))
    return float(np.mean((F > pipeline.tau) != base))


# -- gradient attack -----------------------------------------------------------


@dataclass(frozen=True)
class AttackResult:
    delta: np.ndarray
    F_before: float
    F_after: float
    gap: float
    flat: bool


def score_gradients(pipeline, x_norm) -> tuple[np.ndarray, np.ndarray]:
    """(grad e, grad s) at one normalized point.

    grad e is analytic; the forest score is piecewise constant, so grad s is a
    central difference with step 1e-3 of each feature's scale.
    """
    x_norm = np.asarray(x_norm, dtype=float)
    grad_e = ae.error_input_gradient(x_norm, pipeline.autoencoder)
    scale = pipeline.feature_scale if pipeline.feature_scale is not None else np.ones(x_norm.size)
    s_fn = lambda Z: pipeline.components_normalized(Z)[1]  # noqa: E731
    grad_s = _fd_gradient(s_fn, x_norm[None, :], FD_STEP * scale)[0]
    return np.asarray(grad_e, dtype=float), grad_s


def adversarial_perturb(pipeline, x_norm, eps: float, L_F: float | None = None,
                        unweighted: bool = False) -> AttackResult:
    """One normalized-gradient step of length ``eps`` that lowers the score.

    By default the step descends the fused score with the calibrated alpha;
    ``unweighted`` descends ``e + s`` instead.
    """
    if eps < 0:
        raise ParameterError("eps must be >= 0")
    x_norm = np.asarray(x_norm, dtype=float)
    F0 = float(pipeline.fused_normalized(x_norm)[0])
    gap = F0 - (L_F or 0.0) * eps
    if eps == 0:
        return AttackResult(np.zeros_like(x_norm), F0, F0, gap, False)
    grad_e, grad_s = score_gradients(pipeline, x_norm)
    if unweighted:
        g = grad_e + grad_s
    else:
        a = pipeline.fusion.alpha
        sign = -1.0 if pipeline.fusion.invert_if_score else 1.0
        g = a * grad_e + (1 - a) * sign * grad_s
    norm = float(np.linalg.norm(g))
    if norm == 0 or not math.isfinite(norm):
        return AttackResult(np.zeros_like(x_norm), F0, F0, gap, True)
    delta = -eps * g / norm
    F1 = float(pipeline.fused_normalized(x_norm + delta)[0])
    return AttackResult(delta, F0, F1, gap, False)


def robustness_sweep(pipeline, Xn, epsilons: Sequence[float], L_F: float) -> list[dict]:
    """Attack every currently-malicious row at each budget.

    A row counts as evaded at budget eps when a single step of any swept
    budget not larger than eps pushes it to benign, which makes the success
    rate non-decreasing in eps.
    """
    Xn = np.atleast_2d(np.asarray(Xn, dtype=float))
    F = pipeline.fused_normalized(Xn)
    targets = np.flatnonzero(F > pipeline.tau)
    radii = np.array([certified_radius(f, pipeline.tau, L_F) for f in F[targets]])
    evaded = np.zeros(targets.size, dtype=bool)
    rows = []
    for eps in sorted(float(e) for e in epsilons):
        inside_flips = 0
        floor_violations = 0
        flips_now = np.zeros(targets.size, dtype=bool)
        for k, idx in enumerate(targets):
            res = adversarial_perturb(pipeline, Xn[idx], eps, L_F)
            flips_now[k] = res.F_after <= pipeline.tau
            if flips_now[k] and eps < radii[k]:
                inside_flips += 1
            if res.F_after < res.gap - 1e-12:
                floor_violations += 1
        evaded |= flips_now
        rows.append({
            "epsilon": eps,
            "targets": int(targets.size),
            "attack_success_rate": float(evaded.mean()) if targets.size else 0.0,
            "step_success_rate": float(flips_now.mean()) if targets.size else 0.0,
            "certified_coverage": float(np.mean(radii > eps)) if targets.size else 0.0,
            "flips_inside_radius": inside_flips,
            "floor_violations": floor_violations,
        })
    return rows
