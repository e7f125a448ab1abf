"""Multi-node edge-cluster harness.

A labelled flow stream is split across logical nodes. Each node sees a
seeded Poisson arrival process and serves flows one at a time; service time
is the modeled per-flow cost divided by the node's speed factor, with a
small per-flow log-normal jitter. Telemetry is aggregated into fixed windows
of simulated time. Detection itself runs through the shared, frozen
pipeline.
"""

from __future__ import annotations

import csv
import dataclasses
import io
import json
import logging
import math
import os
import time
import zlib
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from . import stats
from .errors import EdgeGuardError, ManifestError, ParameterError, PipelineConsistencyError
from .features import FEATURES, FlowRecord, labels_of, read_flow_csv, records_to_matrix
from .fusion import FusionState
from .metrics import detection_metrics
from .pipeline import Pipeline, PipelineConfig, calibrate, model_bytes, train_pipeline
from .security import DeviceRegistry
from .sustainability import EnergyModel, carbon, efficiency_ratios, energy_total
from .synthetic import generate_flows

logger = logging.getLogger(__name__)

PARTITION_RULES = ("round_robin", "hash_by_device")
AE_LAYERS = 3  # input, bottleneck and output layers
TELEMETRY_METRICS = ("latency_ms", "throughput", "cpu_proxy", "mem_proxy", "energy_j")


@dataclass(frozen=True)
class ScheduleEntry:
    family: str
    start: int
    end: int  # exclusive


@dataclass(frozen=True)
class ScenarioManifest:
    dataset: str | None = None
    node_count: int = 1
    partition: str = "round_robin"
    speed_factors: tuple = (1.0,)
    schedule: tuple = ()
    seed: int = 0
    window_s: float = 1.0
    arrival_rate: float = 10.0
    deterministic: bool = True
    seconds_per_op: float = 2.5e-5
    jitter: float = 0.05
    synthetic_benign: int = 900
    synthetic_attack: int = 100
    energy: EnergyModel = field(default_factory=EnergyModel)

    def __post_init__(self):
        if self.node_count < 1:
            raise ManifestError("node_count must be >= 1")
        if self.partition not in PARTITION_RULES:
            raise ManifestError(f"unknown partition rule {self.partition!r}; expected one of {PARTITION_RULES}")
        speeds = tuple(float(s) for s in self.speed_factors)
        if len(speeds) == 1 and self.node_count > 1:
            speeds = speeds * self.node_count
        if len(speeds) != self.node_count:
            raise ManifestError(f"{len(speeds)} speed factors for {self.node_count} nodes")
        if any(not (s > 0 and math.isfinite(s)) for s in speeds):
            raise ManifestError("speed factors must be finite and > 0")
        object.__setattr__(self, "speed_factors", speeds)
        if self.window_s <= 0 or self.arrival_rate <= 0 or self.seconds_per_op <= 0 or self.jitter < 0:
            raise ManifestError("window_s, arrival_rate and seconds_per_op must be > 0 and jitter >= 0")
        entries = sorted(self.schedule, key=lambda e: (e.start, e.end))
        for e in entries:
            if e.start < 0 or e.end <= e.start:
                raise ManifestError(f"invalid schedule range {e.family} [{e.start}, {e.end})")
        for prev, cur in zip(entries, entries[1:]):
            if cur.start < prev.end:
                raise ManifestError(
                    f"schedule ranges overlap: {prev.family} [{prev.start}, {prev.end}) and "
                    f"{cur.family} [{cur.start}, {cur.end})")
        object.__setattr__(self, "schedule", tuple(entries))


# -- manifest file -----------------------------------------------------------------
#
#   # edgeguard scenario v1
#   dataset = flows.csv           (relative to the manifest; "synthetic" generates flows)
#   nodes = 10
#   partition = round_robin
#   speed = 1.0 x9, 0.5           (comma list, "value xN" repeats)
#   schedule = DoS 0 500; DDoS 500 1000
#   seed = 7
#   window_s = 1.0
#   arrival_rate = 10
#   deterministic = true
#   kappa1 = 2e-9
#   kappa2 = 2e-9
#   gamma_carbon = 1.7

_INT_KEYS = {"nodes": "node_count", "seed": "seed", "synthetic_benign": "synthetic_benign",
             "synthetic_attack": "synthetic_attack"}
_FLOAT_KEYS = {"window_s", "arrival_rate", "seconds_per_op", "jitter"}
_ENERGY_KEYS = {"kappa1", "kappa2", "gamma_carbon", "c_cpu", "c_mem"}


def _parse_speeds(text: str) -> tuple:
    out = []
    for item in text.split(","):
        item = item.strip()
        if not item:
            continue
        value, _, reps = item.partition("x")
        out += [float(value)] * (int(reps) if reps.strip() else 1)
    return tuple(out)


def _parse_schedule(text: str) -> tuple:
    entries = []
    for item in text.split(";"):
        parts = item.split()
        if not parts:
            continue
        if len(parts) != 3:
            raise ManifestError(f"schedule entry must be 'family start end', got {item.strip()!r}")
        entries.append(ScheduleEntry(parts[0], int(parts[1]), int(parts[2])))
    return tuple(entries)


def parse_manifest(text: str, base_dir: str = ".") -> ScenarioManifest:
    kwargs: dict = {}
    energy: dict = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = (p.strip() for p in line.partition("="))
        if not sep:
            raise ManifestError(f"line {lineno}: expected 'key = value'")
        try:
            if key == "dataset":
                kwargs["dataset"] = value if value == "synthetic" else os.path.join(base_dir, value)
            elif key in _INT_KEYS:
                kwargs[_INT_KEYS[key]] = int(value)
            elif key == "partition":
                kwargs["partition"] = value
            elif key == "speed":
                kwargs["speed_factors"] = _parse_speeds(value)
            elif key == "schedule":
                kwargs["schedule"] = _parse_schedule(value)
            elif key in _FLOAT_KEYS:
                kwargs[key] = float(value)
            elif key == "deterministic":
                if value.lower() not in ("true", "false", "1", "0", "yes", "no"):
                    raise ManifestError(f"line {lineno}: deterministic must be true or false")
                kwargs["deterministic"] = value.lower() in ("true", "1", "yes")
            elif key in _ENERGY_KEYS:
                energy[key] = float(value)
            else:
                raise ManifestError(f"line {lineno}: unknown key {key!r}")
        except ValueError as exc:
            raise ManifestError(f"line {lineno}: {exc}") from None
    if energy:
        try:
            kwargs["energy"] = EnergyModel(**energy)
        except ParameterError as exc:
            raise ManifestError(str(exc)) from None
    return ScenarioManifest(**kwargs)


def load_manifest(path) -> ScenarioManifest:
    try:
        with open(path, encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        raise ManifestError(f"cannot read manifest: {exc}") from None
    return parse_manifest(text, os.path.dirname(os.path.abspath(path)))


def manifest_records(manifest: ScenarioManifest) -> list[FlowRecord]:
    if manifest.dataset in (None, "synthetic"):
        return generate_flows(manifest.synthetic_benign, manifest.synthetic_attack, seed=manifest.seed)
    return read_flow_csv(manifest.dataset)


# -- simulation --------------------------------------------------------------------


def partition(records: Sequence[FlowRecord], node_count: int, rule: str) -> np.ndarray:
    """Node index per flow."""
    if rule == "round_robin":
        return np.arange(len(records)) % node_count
    if rule == "hash_by_device":
        return np.array([zlib.crc32((r.device or "").encode()) % node_count for r in records], dtype=int)
    raise ManifestError(f"unknown partition rule {rule!r}")


def flow_ops(pipeline: Pipeline) -> tuple[float, float]:
    """Abstract inference operations per flow: (autoencoder, forest)."""
    d = len(pipeline.schema)
    n = pipeline.forest.subsample_size
    return float(d * AE_LAYERS), float(len(pipeline.forest.trees) * math.log2(n))


@dataclass
class NodeTelemetry:
    node: int
    speed: float
    window_ids: list = field(default_factory=list)
    flows: list = field(default_factory=list)
    latency_ms: list = field(default_factory=list)
    throughput: list = field(default_factory=list)
    cpu_proxy: list = field(default_factory=list)
    mem_proxy: list = field(default_factory=list)
    energy_j: list = field(default_factory=list)
    carbon_g: list = field(default_factory=list)
    flow_latency_ms: list = field(default_factory=list)

    def summary(self) -> dict:
        out = {"node": self.node, "speed": self.speed, "windows": len(self.window_ids),
               "flows": int(sum(self.flows))}
        for name in TELEMETRY_METRICS + ("carbon_g",):
            values = getattr(self, name)
            out[f"{name}_mean"] = float(np.mean(values)) if values else math.nan
        out["energy_j_total"] = float(math.fsum(self.energy_j))
        out["carbon_g_total"] = float(math.fsum(self.carbon_g))
        return out


@dataclass
class ClusterReport:
    scenario: dict
    detection: list
    telemetry: list
    anova: dict
    tukey: dict
    energy: dict
    efficiency: list
    security: dict
    schedule: list
    leave_family_out: list = field(default_factory=list)

    def to_dict(self) -> dict:
        return _clean(dataclasses.asdict(self))

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"

    def to_text(self) -> str:
        """Human-readable summary with a fixed section order."""
        out = io.StringIO()
        out.write("# edgeguard cluster report v1\n\n[scenario]\n")
        for k in sorted(self.scenario):
            out.write(f"{k} = {self.scenario[k]}\n")
        out.write("\n[detection]\n")
        out.write(_csv_text(self.detection))
        out.write("\n[telemetry]\n")
        out.write(_csv_text(self.telemetry))
        out.write("\n[anova]\n")
        out.write(_csv_text([dict(metric=m, **(v or {"status": "n/a"})) for m, v in self.anova.items()]))
        out.write("\n[tukey]\n")
        for metric, grouping in self.tukey.items():
            out.write(f"{metric}: {grouping}\n")
        out.write("\n[energy]\n")
        for k in sorted(self.energy):
            out.write(f"{k} = {self.energy[k]}\n")
        out.write("\n[efficiency]\n")
        out.write(_csv_text(self.efficiency))
        out.write("\n[security]\n")
        for k in sorted(self.security):
            out.write(f"{k} = {self.security[k]}\n")
        out.write("\n[schedule]\n")
        out.write(_csv_text(self.schedule))
        if self.leave_family_out:
            out.write("\n[leave_family_out]\n")
            out.write(_csv_text(self.leave_family_out))
        return out.getvalue()

    def write(self, directory) -> list[str]:
        os.makedirs(directory, exist_ok=True)
        files = {
            "report.json": self.to_json(),
            "report.txt": self.to_text(),
            "detection.csv": _csv_text(self.detection),
            "telemetry.csv": _csv_text(self.telemetry),
            "anova.csv": _csv_text([dict(metric=m, **(v or {})) for m, v in self.anova.items()]),
            "tukey.csv": _csv_text([{"metric": m, "node": n, "subset": s}
                                    for m, g in self.tukey.items() if isinstance(g, dict)
                                    for n, s in g.items()]),
            "efficiency.csv": _csv_text(self.efficiency),
        }
        if self.leave_family_out:
            files["leave_family_out.csv"] = _csv_text(self.leave_family_out)
        paths = []
        for name, text in files.items():
            path = os.path.join(directory, name)
            with open(path, "w", encoding="utf-8", newline="") as fh:
                fh.write(text)
            paths.append(path)
        return paths


def _clean(obj):
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        return None if not math.isfinite(v) else v
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, np.bool_):
        return bool(obj)
    return obj


def _csv_text(rows: list) -> str:
    if not rows:
        return ""
    out = io.StringIO()
    fields = list(rows[0].keys())
    for row in rows[1:]:
        fields += [k for k in row if k not in fields]
    writer = csv.DictWriter(out, fieldnames=fields, lineterminator="\n")
    writer.writeheader()
    for row in rows:
        writer.writerow({k: _fmt(row.get(k)) for k in fields})
    return out.getvalue()


def _fmt(v):
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return "" if v is None else v


def _simulate_node(node: int, speed: float, idx: np.ndarray, manifest: ScenarioManifest,
                   pipeline: Pipeline, X: np.ndarray, mem_model: int):
    """Serve the node's flows in order; returns telemetry and per-flow finish times."""
    rng = np.random.default_rng([manifest.seed, node])
    count = idx.size
    arrivals = np.cumsum(rng.exponential(1.0 / manifest.arrival_rate, size=count))
    ae_per_flow, if_per_flow = flow_ops(pipeline)
    base = manifest.seconds_per_op * (ae_per_flow + if_per_flow)
    if manifest.deterministic:
        service = base / speed * np.exp(manifest.jitter * rng.standard_normal(count))
    else:
        service = np.empty(count)
    finish = np.empty(count)
    clock = 0.0
    windows_of = np.empty(count, dtype=int)
    if not manifest.deterministic:
        # wall-clock: time each flow through the full pipeline
        for k, row in enumerate(idx):
            t0 = time.perf_counter()
            pipeline.score_batch(X[row:row + 1])
            service[k] = (time.perf_counter() - t0) / speed
    for k in range(count):
        start = max(arrivals[k], clock)
        clock = start + service[k]
        finish[k] = clock
        windows_of[k] = int(clock // manifest.window_s)

    tel = NodeTelemetry(node, speed, flow_latency_ms=(service * 1000.0).tolist())
    d = len(pipeline.schema)
    model = manifest.energy
    for w in np.unique(windows_of):
        mask = windows_of == w
        n_w = int(mask.sum())
        joules = model.kappa1 * n_w * ae_per_flow + model.kappa2 * n_w * if_per_flow
        tel.window_ids.append(int(w))
        tel.flows.append(n_w)
        tel.latency_ms.append(float(service[mask].mean() * 1000.0))
        tel.throughput.append(n_w / manifest.window_s)
        tel.cpu_proxy.append(float(service[mask].sum() / manifest.window_s))
        tel.mem_proxy.append(float(mem_model + n_w * d * 8))
        tel.energy_j.append(joules)
        tel.carbon_g.append(carbon(joules, model.gamma_carbon))
    return tel, finish


def _group_stats(groups: list, names: list):
    usable = [(g, n) for g, n in zip(groups, names) if len(g) >= 2]
    if len(usable) < 2:
        return None, "fewer than two nodes with two or more observations"
    gs, ns = [g for g, _ in usable], [n for _, n in usable]
    try:
        anova = stats.one_way_anova(gs).to_dict()
    except EdgeGuardError as exc:
        return None, str(exc)
    try:
        tk = stats.tukey_hsd(gs, names=ns).letters if len(gs) <= 12 else "n/a (more than 12 nodes)"
    except EdgeGuardError as exc:
        tk = f"n/a ({exc})"
    return anova, tk


def run_scenario(manifest: ScenarioManifest, pipeline: Pipeline,
                 records: Sequence[FlowRecord] | None = None) -> ClusterReport:
    pipeline._require_calibrated()
    unknown = [c for c in pipeline.schema if c not in FEATURES]
    if unknown:
        raise PipelineConsistencyError(f"pipeline schema has columns absent from flow records: {unknown}")
    records = list(records) if records is not None else manifest_records(manifest)
    if not records:
        raise ManifestError("scenario dataset is empty")
    for e in manifest.schedule:
        if e.end > len(records):
            raise ManifestError(f"schedule range {e.family} [{e.start}, {e.end}) exceeds {len(records)} flows")
    X = records_to_matrix(records, pipeline.schema)
    y = labels_of(records)
    scores = pipeline.score_batch(X)
    F, pred = scores["F"], scores["malicious"].astype(int)
    nodes = partition(records, manifest.node_count, manifest.partition)
    mem_model = model_bytes(pipeline)

    detection, telemetry, tels, finish_all = [], [], [], np.empty(len(records))
    for node in range(manifest.node_count):
        idx = np.flatnonzero(nodes == node)
        row = {"node": node, "flows": int(idx.size)}
        if idx.size:
            m = detection_metrics(y[idx], pred[idx], F[idx])
            row.update(m)
            tel, finish = _simulate_node(node, manifest.speed_factors[node], idx, manifest, pipeline,
                                         X, mem_model)
            finish_all[idx] = finish
        else:
            tel = NodeTelemetry(node, manifest.speed_factors[node])
        detection.append(row)
        tels.append(tel)
        telemetry.append(tel.summary())

    anova, tukey = {}, {}
    names = [f"node{t.node}" for t in tels]
    for metric in TELEMETRY_METRICS:
        groups = [t.flow_latency_ms if metric == "latency_ms" else getattr(t, metric) for t in tels]
        anova[metric], tukey[metric] = _group_stats(groups, names)

    all_e = [v for t in tels for v in t.energy_j]
    all_c = [v for t in tels for v in t.carbon_g]
    try:
        r_ec = stats.pearson(all_e, all_c)
    except EdgeGuardError:
        r_ec = math.nan
    energy = {
        "pearson_energy_carbon": r_ec,
        "total_energy_j": float(math.fsum(all_e)),
        "total_carbon_g": float(math.fsum(all_c)),
        "gamma_carbon": manifest.energy.gamma_carbon,
        "kappa1": manifest.energy.kappa1,
        "kappa2": manifest.energy.kappa2,
        "training_energy_j": energy_total(0, 0, 0, len(pipeline.forest.trees), pipeline.forest.subsample_size,
                                          manifest.energy),
    }

    efficiency = []
    for row, tel in zip(detection, tels):
        summ = tel.summary()
        entry = {"node": row["node"]}
        try:
            entry.update(efficiency_ratios(row.get("f1", 0.0), row.get("accuracy", 0.0),
                                           summ["energy_j_total"], summ["cpu_proxy_mean"],
                                           summ["mem_proxy_mean"] / 1e6))
        except (EdgeGuardError, KeyError):
            entry.update(psi=math.nan, phi=math.nan, gamma=math.nan)
        efficiency.append(entry)

    # replay decisions in completion order through the response policy
    registry = DeviceRegistry(risk_cutoff=pipeline.risk_cutoff if pipeline.risk_cutoff is not None else math.inf)
    for i in sorted(range(len(records)), key=lambda i: (finish_all[i], i)):
        registry.apply_decision(records[i].device or f"flow{i}", "malicious" if pred[i] else "benign",
                                float(F[i]), timestamp=float(finish_all[i]))
    security = dict(registry.counts())
    security["audit_entries"] = len(registry.log)
    security["risk_cutoff"] = registry.risk_cutoff

    schedule = []
    for e in manifest.schedule:
        sl = slice(e.start, e.end)
        schedule.append({"family": e.family, "start": e.start, "end": e.end, "flows": e.end - e.start,
                         "attacks": int(y[sl].sum()), "detected": int((pred[sl] & y[sl]).sum()),
                         "flagged": int(pred[sl].sum())})

    scenario = {
        "nodes": manifest.node_count, "partition": manifest.partition, "seed": manifest.seed,
        "flows": len(records), "window_s": manifest.window_s, "arrival_rate": manifest.arrival_rate,
        "deterministic": manifest.deterministic, "latency_mode": "modeled" if manifest.deterministic else "wall-clock",
        "speed_factors": " ".join(repr(s) for s in manifest.speed_factors),
        "tau": pipeline.tau, "alpha": pipeline.fusion.alpha,
    }
    report = ClusterReport(scenario, detection, telemetry, anova,
                           {k: v for k, v in tukey.items()}, energy, efficiency, security, schedule)
    report.registry = registry  # not serialised; lets callers write the audit log
    return report


# -- protocols ---------------------------------------------------------------------


def _split_benign(n: int, seed: int, fractions=(0.6, 0.2)):
    perm = np.random.default_rng(seed).permutation(n)
    a = int(round(fractions[0] * n))
    b = a + int(round(fractions[1] * n))
    return perm[:a], perm[a:b], perm[b:]


def leave_family_out(records: Sequence[FlowRecord], config: PipelineConfig | None = None,
                     families: Sequence[str] | None = None, seed: int = 0) -> list[dict]:
    """Hold out each attack family in turn.

    The autoencoder and forest see benign rows only, so they are fitted once
    and shared by every rotation; each rotation recalibrates alpha and tau on
    benign calibration rows plus the remaining families and is evaluated on
    the benign hold-out plus the withheld family.
    """
    config = config or PipelineConfig(seed=seed)
    records = list(records)
    X = records_to_matrix(records, FEATURES)
    y = labels_of(records)
    fam = np.array([r.family if r.label == "attack" else "" for r in records], dtype=object)
    present = sorted({f for f in fam if f})
    families = list(families) if families is not None else present
    benign = np.flatnonzero(y == 0)
    tr, cal, hold = (benign[part] for part in _split_benign(benign.size, seed))
    base = train_pipeline(X[tr], config)
    rows = []
    for family in families:
        test_attacks = np.flatnonzero(fam == family)
        if test_attacks.size == 0:
            logger.warning("family %r has no rows; skipped", family)
            continue
        other = np.flatnonzero((y == 1) & (fam != family))
        cal_idx = np.concatenate([cal, other])
        rotation = dataclasses.replace(base, fusion=FusionState(mu_lr=config.mu_lr, rho=config.rho,
                                                                var_z=base.fusion.var_z),
                                       tau=None, risk_cutoff=None, calibration=None)
        calibrate(rotation, X[cal_idx], y[cal_idx])
        test_idx = np.concatenate([hold, test_attacks])
        r = rotation.score_batch(X[test_idx])
        m = detection_metrics(y[test_idx], r["malicious"].astype(int), r["F"])
        rows.append({"family": family, "train_families": len({f for f in fam[other]}),
                     "calibration": rotation.calibration["method"],
                     **{k: m[k] for k in ("accuracy", "precision", "recall", "f1", "roc_auc")}})
    return rows


def pareto_sweep(configs: Sequence[PipelineConfig], X_train, X_cal, y_cal, X_test, y_test,
                 lam_e: float = 0.0, energy_model: EnergyModel | None = None) -> list[dict]:
    """F1 against modeled energy for each configuration.

    Energy is ``kappa1 N d L + kappa2 m n log2 n`` with ``N`` the number of
    evaluated flows.
    """
    energy_model = energy_model or EnergyModel()
    X_test = np.asarray(X_test, dtype=float)
    rows = []
    for i, cfg in enumerate(configs):
        p = calibrate(train_pipeline(X_train, cfg), X_cal, y_cal)
        pred = p.predict(X_test)
        f1 = detection_metrics(y_test, pred)["f1"]
        e = energy_total(X_test.shape[0], X_test.shape[1], AE_LAYERS, cfg.n_trees,
                         min(cfg.subsample, np.asarray(X_train).shape[0]), energy_model)
        rows.append({"config": i, "latent_dim": cfg.ae.latent_dim, "n_trees": cfg.n_trees,
                     "subsample": cfg.subsample, "f1": f1, "energy_j": e, "objective": f1 - lam_e * e})
    for row in rows:
        row["dominated"] = any(
            o["f1"] >= row["f1"] and o["energy_j"] <= row["energy_j"]
            and (o["f1"] > row["f1"] or o["energy_j"] < row["energy_j"])
            for o in rows)
    best = max(range(len(rows)), key=lambda k: (rows[k]["objective"], -k)) if rows else None
    for k, row in enumerate(rows):
        row["optimal"] = k == best
    return rows
