"""Independent reference computations used by the tests."""

import math
from fractions import Fraction

import numpy as np

from edgeguard import autoencoder as ae


def principal_angles(A, B) -> np.ndarray:
    """Principal angles between the column spans of A and B (radians)."""
    qa, _ = np.linalg.qr(A)
    qb, _ = np.linalg.qr(B)
    cos = np.linalg.svd(qa.T @ qb, compute_uv=False)
    return np.arccos(np.clip(cos, -1.0, 1.0))


def top_pca_basis(X, k):
    Xc = X - X.mean(axis=0)
    w, V = np.linalg.eigh(Xc.T @ Xc / (X.shape[0] - 1))
    return V[:, np.argsort(w)[::-1][:k]]


def two_factor_data(seed, n=500, d=6, scales=(3.0, 2.0), noise=0.1):
    rng = np.random.default_rng(seed)
    A, _ = np.linalg.qr(rng.normal(size=(d, 2)))
    X = (rng.normal(size=(n, 2)) * np.array(scales)) @ A.T + noise * rng.normal(size=(n, d))
    return X - X.mean(axis=0)


def numeric_gradients(X, params, hyper, step=1e-5):
    """Central differences of the composite loss for every trainable block."""
    blocks = ["W_enc", "b_enc", "b_dec"] + ([] if params.tied else ["W_dec"])
    out = {}
    for name in blocks:
        base = getattr(params, name)
        g = np.zeros_like(base)
        for idx in np.ndindex(base.shape):
            vals = []
            for sign in (1.0, -1.0):
                p = params.copy()
                arr = getattr(p, name)
                arr[idx] += sign * step
                if p.tied and name == "W_enc":
                    p.W_dec = p.W_enc.T
                vals.append(ae.composite_loss(X, p, hyper))
            g[idx] = (vals[0] - vals[1]) / (2 * step)
        out[name] = g
    return out


def max_relative_error(analytic: dict, numeric: dict) -> float:
    worst = 0.0
    for name, n in numeric.items():
        a = analytic[name]
        scale = max(float(np.max(np.abs(n))), float(np.max(np.abs(a))), 1e-8)
        worst = max(worst, float(np.max(np.abs(a - n))) / scale)
    return worst


def brute_force_threshold(scores, labels, lam_fp, eps_fp, rho_tail):
    """Loop over sorted-unique midpoints and both sentinels with plain Python counting."""
    u = sorted(set(float(s) for s in scores))
    span = u[-1] - u[0]
    cands = [u[0] - span] + [(a + b) / 2 for a, b in zip(u, u[1:])] + [u[-1] + span]
    npos = sum(1 for y in labels if y == 1)
    nneg = len(labels) - npos
    best = None
    for tau in cands:
        tp = sum(1 for s, y in zip(scores, labels) if s > tau and y == 1)
        fp = sum(1 for s, y in zip(scores, labels) if s > tau and y == 0)
        f1 = 2 * tp / (tp + fp + npos) if tp else 0.0
        fpr = fp / nneg
        obj = -f1 + lam_fp * max(0.0, fpr - eps_fp) ** 2 + rho_tail * (tp + fp) / len(scores)
        if best is None or obj <= best[1]:
            best = (tau, obj)
    return best


def exact_harmonic(n: int) -> Fraction:
    return sum((Fraction(1, i) for i in range(1, n + 1)), Fraction(0))


def gaussian_tail(x: float) -> float:
    return 0.5 * math.erfc(x / math.sqrt(2))
