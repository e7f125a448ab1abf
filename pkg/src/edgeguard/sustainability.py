"""Operation-count energy model, carbon coupling and efficiency ratios."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import DimensionError, DomainError, ParameterError

JOULES_PER_KWH = 3.6e6

# grams CO2e per kWh
GAMMA_PRESETS = {
    "default": 1.7,
    "per_joule_1e-4": 1.0e-4 * JOULES_PER_KWH,  # 1e-4 g/J expressed per kWh
}


@dataclass(frozen=True)
class EnergyModel:
    kappa1: float = 2e-9
    kappa2: float = 2e-9
    c_cpu: float = 1e-27
    c_mem: float = 1e-9
    gamma_carbon: float = GAMMA_PRESETS["default"]

    def __post_init__(self):
        for name in ("kappa1", "kappa2", "c_cpu", "c_mem", "gamma_carbon"):
            value = getattr(self, name)
            if not (value >= 0 and math.isfinite(value)):
                raise ParameterError(f"{name} must be a finite value >= 0")


@dataclass
class EnergyReport:
    ae_ops: float
    if_ops: float
    energy_joules: float
    carbon_g: float
    wall_time_s: float = 0.0
    power_samples: list | None = field(default=None)

    def to_dict(self) -> dict:
        return {"ae_ops": self.ae_ops, "if_ops": self.if_ops, "energy_joules": self.energy_joules,
                "carbon_g": self.carbon_g, "wall_time_s": self.wall_time_s}


def _check_counts(**counts):
    for name, value in counts.items():
        if value < 0:
            raise DomainError(f"{name} must be >= 0, got {value!r}")


def ae_ops(N: float, d: float, L: float) -> float:
    _check_counts(N=N, d=d, L=L)
    return float(N) * d * L


def if_ops(m: float, n: float) -> float:
    _check_counts(m=m, n=n)
    if m > 0 and n < 1:
        raise DomainError("forest term needs n >= 1 when m > 0")
    return float(m) * n * math.log2(n) if m > 0 else 0.0


def energy_total(N, d, L, m, n, model: EnergyModel | None = None) -> float:
    """``kappa1 * N d L + kappa2 * m n log2 n`` joules."""
    model = model or EnergyModel()
    return model.kappa1 * ae_ops(N, d, L) + model.kappa2 * if_ops(m, n)


def energy_report(N, d, L, m, n, model: EnergyModel | None = None, wall_time_s: float = 0.0) -> EnergyReport:
    model = model or EnergyModel()
    a, f = ae_ops(N, d, L), if_ops(m, n)
    joules = model.kappa1 * a + model.kappa2 * f
    return EnergyReport(a, f, joules, carbon(joules, model.gamma_carbon), wall_time_s)


def energy_integral(times, watts) -> float:
    """Trapezoidal integral of a sampled power series, in joules."""
    t = np.asarray(times, dtype=float)
    w = np.asarray(watts, dtype=float)
    if t.shape != w.shape or t.ndim != 1:
        raise DimensionError("times and watts must be 1-D series of equal length")
    if t.size < 2:
        raise DomainError("need at least two power samples")
    if np.any(np.diff(t) <= 0):
        raise DomainError("timestamps must be strictly increasing")
    return float(np.trapezoid(w, t))


def carbon(energy_joules, gamma_carbon: float = GAMMA_PRESETS["default"]):
    """Grams CO2e for the given energy at ``gamma_carbon`` g/kWh."""
    e = np.asarray(energy_joules, dtype=float)
    if np.any(e < 0):
        raise DomainError("energy must be >= 0")
    out = e / JOULES_PER_KWH * gamma_carbon
    return float(out) if out.ndim == 0 else out


def optimal_frequency(N: float, c_cpu: float, T: float) -> float:
    """``(N / (3 C T)) ** (1/3)``.

    This is the stationary point of ``C f^3 T - N ln f``: dynamic power
    grows with ``f^3`` while completing ``N`` operations gets cheaper with
    frequency at a logarithmic rate.
    """
    if N <= 0 or c_cpu <= 0 or T <= 0:
        raise DomainError("N, c_cpu and T must all be > 0")
    return (N / (3.0 * c_cpu * T)) ** (1.0 / 3.0)


def frequency_objective(f, N: float, c_cpu: float, T: float):
    f = np.asarray(f, dtype=float)
    return c_cpu * f ** 3 * T - N * np.log(f)


def efficiency_ratios(f1: float, accuracy: float, energy: float, cpu_frac: float, mem: float) -> dict:
    """Psi = F1 / E, Phi = E / F1, Gamma = accuracy / (cpu * memory)."""
    if energy <= 0 or f1 <= 0 or cpu_frac <= 0 or mem <= 0:
        raise DomainError("ratio denominators (E, F1, cpu, memory) must be > 0")
    return {"psi": f1 / energy, "phi": energy / f1, "gamma": accuracy / (cpu_frac * mem)}


def resource_allocation_optimum(r, accuracy, energy, lam_p: float = 1.0, lam_e: float = 1.0) -> dict:
    """Grid point minimising ``lam_e E(r) - lam_p P(r)``.

    Also reports ``(lam_p / lam_e) dP/dE`` at the optimum, estimated from
    the sampled curves, as a diagnostic.
    """
    r = np.asarray(r, dtype=float)
    P = np.asarray(accuracy, dtype=float)
    E = np.asarray(energy, dtype=float)
    if not (r.shape == P.shape == E.shape) or r.ndim != 1:
        raise DimensionError("r, accuracy and energy must share one 1-D grid")
    if r.size < 3:
        raise DimensionError("need at least three grid points")
    if np.any(np.diff(r) <= 0):
        raise DimensionError("r grid must be strictly increasing")
    objective = lam_e * E - lam_p * P
    k = int(np.argmin(objective))
    dP = np.gradient(P, r)[k]
    dE = np.gradient(E, r)[k]
    ratio = (lam_p / lam_e) * dP / dE if dE != 0 and lam_e else math.nan
    return {"r_star": float(r[k]), "index": k, "objective": float(objective[k]), "derivative_ratio": float(ratio)}
