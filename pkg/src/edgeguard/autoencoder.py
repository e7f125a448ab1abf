"""Single-hidden-layer autoencoder trained on benign flows.

Forward pass::

    z     = act(W_enc x + b_enc)
    x_hat = act(W_dec z + b_dec) + gamma_align * tanh(Tr(W_enc W_dec))

The trace shift is a scalar broadcast onto every output coordinate. Shapes:
``W_enc`` is k x d, ``W_dec`` is d x k, so ``Tr(W_enc W_dec)`` is the
Frobenius inner product of ``W_enc`` and ``W_dec^T``.

Composite training loss (all weights default to small values, see AEHyper)::

    MSE                                   mean over batch and coordinates
    + lam      * ||W_enc||_F^2
    + beta     * (||mean z||^2 + ||cov z - I||_F^2)      moment-matching KL
    + gamma_jac* mean_i ||d x_hat / d z (z_i)||_F^2      exact decoder Jacobian
    + gamma_align * tanh(Tr(W_enc W_dec))
    + eta_align   * ||W_enc W_dec - I_k||_F^2
"""

from __future__ import annotations

import json
import logging
import math
from dataclasses import dataclass, field, replace

import numpy as np

from .errors import DimensionError, DomainError, ModelFormatError, ParameterError, TrainingDivergedError

logger = logging.getLogger(__name__)

ACTIVATIONS = ("tanh", "sigmoid", "identity")
MODEL_FORMAT = "edgeguard-ae"
MODEL_VERSION = 1
DIVERGENCE_LIMIT = 1e12


def _act(name, a):
    if name == "tanh":
        return np.tanh(a)
    if name == "sigmoid":
        return 0.5 * (1.0 + np.tanh(0.5 * a))
    return a


def _act_derivs(name, a):
    """Value, first and second derivative of the activation at ``a``."""
    if name == "tanh":
        t = np.tanh(a)
        d1 = 1.0 - t * t
        return t, d1, -2.0 * t * d1
    if name == "sigmoid":
        s = 0.5 * (1.0 + np.tanh(0.5 * a))
        d1 = s * (1.0 - s)
        return s, d1, d1 * (1.0 - 2.0 * s)
    return a, np.ones_like(a), np.zeros_like(a)


@dataclass
class AEParams:
    W_enc: np.ndarray
    b_enc: np.ndarray
    W_dec: np.ndarray
    b_dec: np.ndarray
    activation: str = "tanh"
    tied: bool = False
    gamma_align: float = 0.0

    def __post_init__(self):
        if self.activation not in ACTIVATIONS:
            raise ParameterError(f"activation must be one of {ACTIVATIONS}")
        k, d = self.W_enc.shape
        if self.tied:
            self.W_dec = self.W_enc.T
        if self.W_dec.shape != (d, k) or self.b_enc.shape != (k,) or self.b_dec.shape != (d,):
            raise DimensionError(
                f"inconsistent AE shapes: W_enc {self.W_enc.shape}, W_dec {self.W_dec.shape}, "
                f"b_enc {self.b_enc.shape}, b_dec {self.b_dec.shape}"
            )
        for name in ("W_enc", "b_enc", "W_dec", "b_dec"):
            if not np.all(np.isfinite(getattr(self, name))):
                raise DomainError(f"{name} contains non-finite entries")

    @property
    def input_dim(self) -> int:
        return self.W_enc.shape[1]

    @property
    def latent_dim(self) -> int:
        return self.W_enc.shape[0]

    def copy(self) -> "AEParams":
        # tied models rebuild W_dec as a view of the copied W_enc
        return AEParams(self.W_enc.copy(), self.b_enc.copy(), self.W_dec.copy(), self.b_dec.copy(),
                        self.activation, self.tied, self.gamma_align)

    def n_weights(self) -> int:
        return self.W_enc.size + self.b_enc.size + (0 if self.tied else self.W_dec.size) + self.b_dec.size


@dataclass
class AEHyper:
    latent_dim: int = 4
    lam: float = 1e-4
    beta: float = 1e-3
    gamma_jac: float = 1e-4
    gamma_align: float = 0.0
    eta_align: float = 0.0
    learning_rate: float = 0.05
    schedule: str = "constant"
    epochs: int = 40
    batch_size: int = 64
    seed: int = 0
    activation: str = "tanh"
    tied: bool = False

    def __post_init__(self):
        for name in ("lam", "beta", "gamma_jac", "gamma_align", "eta_align"):
            if getattr(self, name) < 0:
                raise ParameterError(f"{name} must be >= 0")
        if self.learning_rate < 0:
            raise ParameterError("learning_rate must be >= 0")
        if self.schedule not in ("constant", "1/t"):
            raise ParameterError("schedule must be 'constant' or '1/t'")
        if self.latent_dim < 1 or self.epochs < 0 or self.batch_size < 1:
            raise ParameterError("latent_dim, batch_size must be >= 1 and epochs >= 0")
        if self.activation not in ACTIVATIONS:
            raise ParameterError(f"activation must be one of {ACTIVATIONS}")

    def rate(self, epoch: int) -> float:
        """Step size for 1-based ``epoch``."""
        if self.schedule == "1/t":
            return self.learning_rate / epoch
        return self.learning_rate


@dataclass
class TrainReport:
    losses: list = field(default_factory=list)
    final_loss: float = math.nan
    epochs_run: int = 0
    descent_violations: int = 0
    flags: list = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "losses": [float(v) for v in self.losses],
            "final_loss": float(self.final_loss),
            "epochs_run": self.epochs_run,
            "descent_violations": self.descent_violations,
            "flags": list(self.flags),
        }


def init_params(d: int, k: int, activation: str = "tanh", tied: bool = False, seed: int = 0,
                gamma_align: float = 0.0) -> AEParams:
    rng = np.random.default_rng(seed)
    bound = 1.0 / math.sqrt(d)
    W_enc = rng.uniform(-bound, bound, size=(k, d))
    W_dec = W_enc.T if tied else rng.uniform(-bound, bound, size=(d, k))
    return AEParams(W_enc, np.zeros(k), W_dec, np.zeros(d), activation, tied, gamma_align)


def _trace_align(params: AEParams) -> float:
    return float(np.sum(params.W_enc * params.W_dec.T))


def _check_input(X, d):
    X = np.asarray(X, dtype=float)
    if X.shape[-1] != d:
        raise DimensionError(f"expected {d} features, got {X.shape[-1]}")
    if not np.all(np.isfinite(X)):
        raise DomainError("input contains NaN or Inf")
    return X


def ae_forward(x, params: AEParams):
    """Return ``(z, x_hat)``; accepts a single vector or an n x d batch."""
    x = _check_input(x, params.input_dim)
    z = _act(params.activation, x @ params.W_enc.T + params.b_enc)
    x_hat = _act(params.activation, z @ params.W_dec.T + params.b_dec)
    if params.gamma_align:
        x_hat = x_hat + params.gamma_align * math.tanh(_trace_align(params))
    return z, x_hat


def encode(X, params: AEParams) -> np.ndarray:
    return ae_forward(X, params)[0]


def reconstruction_error(x, params: AEParams):
    """Mean squared error over coordinates; scalar for a vector, array for a batch."""
    x = _check_input(x, params.input_dim)
    _, x_hat = ae_forward(x, params)
    return np.mean((x - x_hat) ** 2, axis=-1)


def error_input_gradient(x, params: AEParams) -> np.ndarray:
    """Analytic gradient of ``reconstruction_error`` with respect to the input."""
    x = _check_input(x, params.input_dim)
    squeeze = x.ndim == 1
    X = np.atleast_2d(x)
    _, _, _, _, cache = _forward_cache(X, params)
    r = cache["x_hat"] - X
    d = X.shape[1]
    g_out = 2.0 * r / d
    g_a2 = g_out * cache["d2"]
    g_a1 = (g_a2 @ params.W_dec) * cache["d1"]
    grad = -g_out + g_a1 @ params.W_enc
    return grad[0] if squeeze else grad


def _forward_cache(X, params):
    a1 = X @ params.W_enc.T + params.b_enc
    z, d1, _ = _act_derivs(params.activation, a1)
    a2 = z @ params.W_dec.T + params.b_dec
    out, d2, dd2 = _act_derivs(params.activation, a2)
    T = _trace_align(params)
    shift = params.gamma_align * math.tanh(T) if params.gamma_align else 0.0
    x_hat = out + shift
    return a1, z, a2, x_hat, {"d1": d1, "d2": d2, "dd2": dd2, "x_hat": x_hat, "T": T}


def loss_and_grad(batch, params: AEParams, hyper: AEHyper):
    """Composite loss, its gradient per parameter block, and diagnostic flags."""
    X = _check_input(batch, params.input_dim)
    X = np.atleast_2d(X)
    b, d = X.shape
    k = params.latent_dim
    if b < 1:
        raise DimensionError("batch must contain at least one row")
    W_enc, W_dec = params.W_enc, params.W_dec
    a1, z, a2, x_hat, cache = _forward_cache(X, params)
    d1, d2, dd2, T = cache["d1"], cache["d2"], cache["dd2"], cache["T"]
    flags = []

    gW_enc = np.zeros_like(W_enc)
    gW_dec = np.zeros_like(W_dec)
    g_T = 0.0

    # reconstruction
    r = x_hat - X
    loss = float(np.mean(r * r))
    g_out = 2.0 * r / (b * d)
    g_a2 = g_out * d2
    if params.gamma_align:
        g_T += float(np.sum(g_out)) * params.gamma_align * (1.0 - math.tanh(T) ** 2)

    # weight penalty
    if hyper.lam:
        loss += hyper.lam * float(np.sum(W_enc * W_enc))
        gW_enc += 2.0 * hyper.lam * W_enc

    # moment-matching KL surrogate on the latent batch
    g_z = np.zeros_like(z)
    if hyper.beta:
        m = z.mean(axis=0)
        loss += hyper.beta * float(m @ m)
        g_z += hyper.beta * 2.0 * m / b
        if b > 1:
            zc = z - m
            C = zc.T @ zc / (b - 1)
            D = C - np.eye(k)
            loss += hyper.beta * float(np.sum(D * D))
            g_z += hyper.beta * 4.0 * zc @ D / (b - 1)
        else:
            flags.append("single-row batch: covariance term skipped")

    # decoder Jacobian smoothness, d x_hat/dz = diag(act'(a2)) W_dec
    if hyper.gamma_jac:
        row_sq = np.sum(W_dec * W_dec, axis=1)
        s2 = d2 * d2
        loss += hyper.gamma_jac * float(np.mean(s2 @ row_sq))
        gW_dec += hyper.gamma_jac * 2.0 * W_dec * s2.mean(axis=0)[:, None]
        g_a2 = g_a2 + hyper.gamma_jac * 2.0 * d2 * dd2 * row_sq / b

    # manifold alignment
    if hyper.gamma_align:
        loss += hyper.gamma_align * math.tanh(T)
        g_T += hyper.gamma_align * (1.0 - math.tanh(T) ** 2)
    if hyper.eta_align:
        M = W_enc @ W_dec - np.eye(k)
        loss += hyper.eta_align * float(np.sum(M * M))
        gW_enc += hyper.eta_align * 2.0 * M @ W_dec.T
        gW_dec += hyper.eta_align * 2.0 * W_enc.T @ M

    # backprop through decoder then encoder
    gW_dec += g_a2.T @ z
    gb_dec = g_a2.sum(axis=0)
    g_z = g_z + g_a2 @ W_dec
    g_a1 = g_z * d1
    gW_enc += g_a1.T @ X
    gb_enc = g_a1.sum(axis=0)
    if g_T:
        gW_enc += g_T * W_dec.T
        gW_dec += g_T * W_enc.T

    grads = {"W_enc": gW_enc, "b_enc": gb_enc, "b_dec": gb_dec}
    if params.tied:
        grads["W_enc"] = gW_enc + gW_dec.T
    else:
        grads["W_dec"] = gW_dec
    return loss, grads, flags


def composite_loss(batch, params: AEParams, hyper: AEHyper) -> float:
    loss, _, flags = loss_and_grad(batch, params, hyper)
    for flag in flags:
        logger.debug(flag)
    return loss


def _apply_step(params: AEParams, grads, rate: float) -> AEParams:
    W_enc = params.W_enc - rate * grads["W_enc"]
    W_dec = W_enc.T if params.tied else params.W_dec - rate * grads["W_dec"]
    return AEParams(W_enc, params.b_enc - rate * grads["b_enc"], W_dec,
                    params.b_dec - rate * grads["b_dec"], params.activation, params.tied,
                    params.gamma_align)


def train(X_benign, hyper: AEHyper | None = None, params: AEParams | None = None):
    """Mini-batch gradient descent on the composite loss.

    Deterministic for a fixed ``hyper.seed``: initialisation and the batch
    order per epoch both derive from it. The recorded per-epoch loss is the
    full-data composite loss after the epoch, preceded by the initial loss.
    """
    hyper = hyper or AEHyper()
    X = np.asarray(X_benign, dtype=float)
    if X.ndim != 2 or X.shape[0] == 0:
        raise DimensionError("training data must be a non-empty matrix")
    X = _check_input(X, X.shape[1])
    n, d = X.shape
    if params is None:
        params = init_params(d, hyper.latent_dim, hyper.activation, hyper.tied, hyper.seed,
                             hyper.gamma_align)
    else:
        params = replace(params.copy(), gamma_align=hyper.gamma_align)
    rng = np.random.default_rng(hyper.seed + 1)
    report = TrainReport()
    loss = composite_loss(X, params, hyper)
    report.losses.append(loss)
    if n == 1 and hyper.beta:
        report.flags.append("single-row batch: covariance term skipped")

    for epoch in range(1, hyper.epochs + 1):
        rate = hyper.rate(epoch)
        order = rng.permutation(n)
        for start in range(0, n, hyper.batch_size):
            rows = order[start:start + hyper.batch_size]
            _, grads, _ = loss_and_grad(X[rows], params, hyper)
            with np.errstate(over="ignore", invalid="ignore"):
                params = _apply_step(params, grads, rate) if rate else params
        with np.errstate(over="ignore", invalid="ignore"):
            try:
                loss = composite_loss(X, params, hyper)
            except DomainError:
                loss = math.nan
        if not math.isfinite(loss) or loss > DIVERGENCE_LIMIT:
            raise TrainingDivergedError(epoch, loss)
        if loss > report.losses[-1]:
            report.descent_violations += 1
        report.losses.append(loss)
        report.epochs_run = epoch
    report.final_loss = report.losses[-1]
    logger.debug("AE training done: %d epochs, final loss %.6g", report.epochs_run, report.final_loss)
    return params, report


# -- diagnostics -------------------------------------------------------------


def spectral_diagnostics(params: AEParams) -> dict:
    """Singular-value summary of the encoder and decoder weights.

    ``r_spectral`` normalises every singular value of both matrices by their
    common mean before summing squares.
    """
    sv_enc = np.linalg.svd(params.W_enc, compute_uv=False)
    sv_dec = np.linalg.svd(params.W_dec, compute_uv=False)
    lam_max = float(sv_enc.max())
    lam_min = float(sv_enc.min())
    cond = math.inf if lam_min == 0 else lam_max / lam_min
    mean_sv = float(np.concatenate([sv_enc, sv_dec]).mean())
    r_spectral = math.inf if mean_sv == 0 else float(np.sum((sv_enc / mean_sv) ** 2) + np.sum((sv_dec / mean_sv) ** 2))
    return {
        "lambda_max": lam_max,
        "lambda_min": lam_min,
        "condition_number": cond,
        "r_spectral": r_spectral,
        "frobenius": float(math.sqrt(np.sum(params.W_enc ** 2))),
        "singular_values_enc": sv_enc.tolist(),
        "singular_values_dec": sv_dec.tolist(),
    }


def latent_information_bound(params: AEParams, cov_x) -> float:
    """Upper bound on I(x; z) in nats for the linearised encoder.

    Computes ``0.5 * log det(I + cov_x W_enc^T W_enc)``; the activation is
    ignored.
    """
    cov_x = np.asarray(cov_x, dtype=float)
    d = params.input_dim
    if cov_x.shape != (d, d):
        raise DimensionError(f"covariance must be {d} x {d}")
    if not np.allclose(cov_x, cov_x.T, atol=1e-10):
        raise DomainError("covariance must be symmetric")
    if np.linalg.eigvalsh(cov_x).min() < -1e-10:
        raise DomainError("covariance must be positive semidefinite")
    sign, logdet = np.linalg.slogdet(np.eye(d) + cov_x @ params.W_enc.T @ params.W_enc)
    if sign <= 0:
        raise DomainError("log-determinant undefined for this covariance")
    return 0.5 * float(logdet)


# -- model file --------------------------------------------------------------


def format_model(params: AEParams) -> str:
    """JSON container: shapes, activation tag, tied flag, row-major payloads."""
    doc = {
        "format": MODEL_FORMAT,
        "version": MODEL_VERSION,
        "input_dim": params.input_dim,
        "latent_dim": params.latent_dim,
        "activation": params.activation,
        "tied": params.tied,
        "gamma_align": params.gamma_align,
        "W_enc": params.W_enc.ravel().tolist(),
        "b_enc": params.b_enc.tolist(),
        "W_dec": None if params.tied else params.W_dec.ravel().tolist(),
        "b_dec": params.b_dec.tolist(),
    }
    return json.dumps(doc, indent=1) + "\n"


def parse_model(text: str) -> AEParams:
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ModelFormatError(f"AE model file is not valid JSON: {exc}") from None
    if doc.get("format") != MODEL_FORMAT:
        raise ModelFormatError("not an AE model file")
    if doc.get("version") != MODEL_VERSION:
        raise ModelFormatError(f"unsupported AE model version {doc.get('version')}")
    d, k = doc["input_dim"], doc["latent_dim"]
    W_enc = np.array(doc["W_enc"], dtype=float).reshape(k, d)
    W_dec = W_enc.T if doc["tied"] else np.array(doc["W_dec"], dtype=float).reshape(d, k)
    return AEParams(W_enc, np.array(doc["b_enc"], dtype=float), W_dec,
                    np.array(doc["b_dec"], dtype=float), doc["activation"], doc["tied"],
                    doc.get("gamma_align", 0.0))
