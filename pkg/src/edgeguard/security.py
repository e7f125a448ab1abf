"""Response policy (allow / quarantine / blacklist) and its Markov-chain model."""

from __future__ import annotations

import bisect
import enum
import json
import math
from dataclasses import asdict, dataclass, field

import numpy as np

from .errors import NonUniqueEquilibriumError, ParameterError, ValidityError

ROW_TOL = 1e-12


class SecurityState(str, enum.Enum):
    ALLOWED = "Allowed"
    QUARANTINED = "Quarantined"
    BLACKLISTED = "Blacklisted"


STATE_ORDER = (SecurityState.ALLOWED, SecurityState.QUARANTINED, SecurityState.BLACKLISTED)


@dataclass(frozen=True)
class TransitionParams:
    """``p_m``/``p_r``: Allowed -> Quarantined/Blacklisted; ``a``/``b``: Quarantined ->
    Allowed/Blacklisted; ``g``: Blacklisted -> Quarantined."""

    p_m: float
    p_r: float
    a: float
    b: float
    g: float


def build_transition_matrix(params: TransitionParams) -> np.ndarray:
    p_m, p_r, a, b, g = params.p_m, params.p_r, params.a, params.b, params.g
    P = np.array([
        [1.0 - p_m - p_r, p_m, p_r],
        [a, 1.0 - a - b, b],
        [0.0, g, 1.0 - g],
    ])
    validate_stochastic(P)
    return P


def validate_stochastic(P) -> np.ndarray:
    P = np.asarray(P, dtype=float)
    if P.ndim != 2 or P.shape[0] != P.shape[1]:
        raise ValidityError(f"transition matrix must be square, got shape {P.shape}")
    if not np.all(np.isfinite(P)) or np.any(P < 0) or np.any(P > 1):
        raise ValidityError("transition probabilities must lie in [0, 1]")
    sums = P.sum(axis=1)
    bad = np.flatnonzero(np.abs(sums - 1.0) > ROW_TOL)
    if bad.size:
        raise ValidityError(f"row {int(bad[0])} sums to {sums[bad[0]]!r}, not 1")
    return P


def stationary_distribution(P) -> np.ndarray:
    """Solve ``pi P = pi``, ``sum(pi) = 1`` directly.

    The chain must have a single eigenvalue at 1 and no other eigenvalue on
    the unit circle; otherwise the equilibrium is not unique (or the chain
    is periodic and frequencies do not converge).
    """
    P = validate_stochastic(P)
    k = P.shape[0]
    eig = np.linalg.eigvals(P)
    on_circle = np.abs(np.abs(eig) - 1.0) < 1e-9
    if on_circle.sum() != 1:
        raise NonUniqueEquilibriumError(
            f"{int(on_circle.sum())} eigenvalues on the unit circle; equilibrium is not unique")
    A = P.T - np.eye(k)
    A[-1, :] = 1.0
    rhs = np.zeros(k)
    rhs[-1] = 1.0
    pi = np.linalg.solve(A, rhs)
    pi = np.clip(pi, 0.0, None)
    return pi / math.fsum(pi)


def simulate_chain(P, steps: int, seed: int = 0, start: int = 0) -> np.ndarray:
    """Visit counts per state over ``steps`` transitions."""
    P = validate_stochastic(P)
    rng = np.random.default_rng(seed)
    cum = np.cumsum(P, axis=1)
    cum[:, -1] = 1.0
    rows = [list(row) for row in cum]
    counts = [0] * P.shape[0]
    state = start
    for u in rng.random(steps).tolist():
        state = bisect.bisect_right(rows[state], u)
        counts[state] += 1
    return np.array(counts, dtype=np.int64)


def total_variation(p, q) -> float:
    return 0.5 * float(np.sum(np.abs(np.asarray(p, dtype=float) - np.asarray(q, dtype=float))))


@dataclass(frozen=True)
class CostWeights:
    w_m: float = 0.0
    w_r: float = 0.0
    w_b: float = 0.0
    C_m: float = 0.0
    C_r: float = 0.0
    C_b: float = 0.0

    def __post_init__(self):
        if any(v < 0 for v in asdict(self).values()):
            raise ParameterError("cost weights and costs must be >= 0")


def security_cost(weights: CostWeights) -> float:
    return weights.w_m * weights.C_m + weights.w_r * weights.C_r + weights.w_b * weights.C_b


# -- device registry -------------------------------------------------------------


@dataclass(frozen=True)
class AuditEntry:
    timestamp: float
    device: str
    decision: str
    risk: float
    old_state: str
    new_state: str

    def to_json(self) -> str:
        return json.dumps(asdict(self), sort_keys=True)


@dataclass
class DeviceRegistry:
    """Per-device response state; one writer at a time.

    Blacklisted is absorbing: only :meth:`reset` (an administrative action)
    returns a device to Allowed.
    """

    risk_cutoff: float = math.inf
    states: dict = field(default_factory=dict)
    log: list = field(default_factory=list)
    _clock: int = 0

    def state_of(self, device: str) -> SecurityState:
        return self.states.setdefault(device, SecurityState.ALLOWED)

    def apply_decision(self, device: str, decision: str, risk: float, timestamp: float | None = None):
        if decision not in ("benign", "malicious"):
            raise ParameterError(f"decision must be 'benign' or 'malicious', got {decision!r}")
        old = self.state_of(device)
        if old is SecurityState.BLACKLISTED:
            new = old
        elif decision == "benign":
            new = SecurityState.ALLOWED
        elif risk >= self.risk_cutoff:
            new = SecurityState.BLACKLISTED
        else:
            new = SecurityState.QUARANTINED
        self.states[device] = new
        if timestamp is None:
            timestamp = float(self._clock)
        self._clock += 1
        entry = AuditEntry(float(timestamp), device, decision, float(risk), old.value, new.value)
        self.log.append(entry)
        return new, entry

    def reset(self, device: str):
        self.states[device] = SecurityState.ALLOWED

    def counts(self) -> dict:
        out = {s.value: 0 for s in STATE_ORDER}
        for s in self.states.values():
            out[s.value] += 1
        return out

    def write_log(self, path) -> None:
        """Write the full audit log as JSON lines."""
        with open(path, "w", encoding="utf-8") as fh:
            for entry in self.log:
                fh.write(entry.to_json() + "\n")
