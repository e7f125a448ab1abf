"""Seeded synthetic flow generator.

Benign traffic is a mixture of three behaviour profiles (telemetry, web,
streaming). Each attack family has its own profile. A profile fixes the
log-normal packet count and duration, a Gaussian bytes-per-packet, the
inbound packet fraction and a categorical over TCP flag masks; every other
field is derived so records are internally consistent
(``pkts_in + pkts_out == pkts_total``, ``pkt_rate == pkts_total / duration``,
``bytes_total == pkts_total * bytes_per_pkt``).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Mapping, Sequence

import numpy as np

from .errors import ParameterError
from .features import FAMILIES, FlowRecord

ACK, PSH, SYN, RST, FIN = 0x10, 0x08, 0x02, 0x04, 0x01


@dataclass(frozen=True)
class Profile:
    log_pkts: float
    log_pkts_sd: float
    log_dur: float
    log_dur_sd: float
    bpp: float
    bpp_sd: float
    in_frac: float
    flags: tuple[int, ...]
    flag_p: tuple[float, ...]


BENIGN_PROFILES = (
    # (weight, profile)
    (0.45, Profile(math.log(12), 0.30, math.log(2.0), 0.30, 180, 20, 0.50, (ACK | PSH, ACK), (0.7, 0.3))),
    (0.40, Profile(math.log(40), 0.40, math.log(5.0), 0.40, 700, 100, 0.65,
                   (ACK | PSH, ACK | FIN, ACK | PSH | FIN), (0.6, 0.2, 0.2))),
    (0.15, Profile(math.log(300), 0.30, math.log(30.0), 0.30, 1200, 80, 0.85, (ACK | PSH, ACK), (0.8, 0.2))),
)

ATTACK_PROFILES = {
    "DoS": Profile(math.log(200), 0.30, math.log(0.5), 0.30, 60, 5, 0.98, (SYN,), (1.0,)),
    "DDoS": Profile(math.log(500), 0.30, math.log(0.4), 0.30, 60, 5, 0.98, (SYN, SYN | ACK), (0.8, 0.2)),
    "reconnaissance": Profile(math.log(2), 0.20, math.log(0.05), 0.50, 58, 4, 0.50,
                              (SYN, RST | ACK), (0.6, 0.4)),
    "information-theft": Profile(math.log(1500), 0.30, math.log(120.0), 0.30, 1400, 40, 0.10,
                                 (ACK | PSH,), (1.0,)),
    "keylogging": Profile(math.log(30), 0.30, math.log(300.0), 0.30, 90, 10, 0.20, (ACK | PSH,), (1.0,)),
}

# attacks are pulled toward this profile when severity < 1
_REFERENCE = BENIGN_PROFILES[1][1]


def _blend(profile: Profile, severity: float) -> Profile:
    if severity == 1.0:
        return profile
    ref = _REFERENCE

    def lerp(a, b):
        return a + severity * (b - a)

    return replace(
        profile,
        log_pkts=lerp(ref.log_pkts, profile.log_pkts),
        log_dur=lerp(ref.log_dur, profile.log_dur),
        bpp=lerp(ref.bpp, profile.bpp),
        in_frac=lerp(ref.in_frac, profile.in_frac),
    )


def _sample(profile: Profile, count: int, rng: np.random.Generator, label: str, family, devices) -> list:
    total = np.maximum(1, np.rint(np.exp(rng.normal(profile.log_pkts, profile.log_pkts_sd, count))))
    duration = np.exp(rng.normal(profile.log_dur, profile.log_dur_sd, count))
    bpp = np.clip(rng.normal(profile.bpp, profile.bpp_sd, count), 40.0, 1500.0)
    pkts_in = rng.binomial(total.astype(int), min(max(profile.in_frac, 0.0), 1.0)).astype(float)
    flags = rng.choice(profile.flags, size=count, p=profile.flag_p)
    device = rng.choice(devices, size=count)
    out = []
    for i in range(count):
        out.append(FlowRecord(
            pkts_total=float(total[i]),
            bytes_total=float(total[i] * bpp[i]),
            duration=float(duration[i]),
            pkt_rate=float(total[i] / duration[i]),
            pkts_in=float(pkts_in[i]),
            pkts_out=float(total[i] - pkts_in[i]),
            bytes_per_pkt=float(bpp[i]),
            flags=int(flags[i]),
            label=label,
            family=family,
            device=str(device[i]),
        ))
    return out


def generate_flows(
    n_benign: int,
    n_attack: int = 0,
    seed: int = 0,
    families: Sequence[str] = FAMILIES,
    severity: Mapping[str, float] | None = None,
    n_devices: int = 20,
    shuffle: bool = True,
) -> list[FlowRecord]:
    """Labelled synthetic flows; attacks are split evenly across ``families``.

    ``severity`` (default 1 per family) moves a family's centre along the
    line from a benign reference profile (0) to its full profile (1).
    """
    if n_benign < 0 or n_attack < 0:
        raise ParameterError("row counts must be >= 0")
    if n_attack and not families:
        raise ParameterError("attack rows requested but no families given")
    unknown = [f for f in families if f not in ATTACK_PROFILES]
    if unknown:
        raise ParameterError(f"unknown attack families: {unknown}")
    severity = dict(severity or {})
    rng = np.random.default_rng(seed)
    benign_devices = np.array([f"dev{i:02d}" for i in range(n_devices)])
    bad_devices = benign_devices[: max(1, n_devices // 5)]

    weights = np.array([w for w, _ in BENIGN_PROFILES])
    per_profile = rng.multinomial(n_benign, weights / weights.sum())
    records = []
    for (_, profile), count in zip(BENIGN_PROFILES, per_profile):
        records += _sample(profile, int(count), rng, "benign", None, benign_devices)
    if n_attack:
        split = np.full(len(families), n_attack // len(families))
        split[: n_attack % len(families)] += 1
        for family, count in zip(families, split):
            profile = _blend(ATTACK_PROFILES[family], float(severity.get(family, 1.0)))
            records += _sample(profile, int(count), rng, "attack", family, bad_devices)
    if shuffle:
        records = [records[i] for i in rng.permutation(len(records))]
    return records
