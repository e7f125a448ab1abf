"""``edgeguard`` command-line interface.

Exit status: 0 success, 1 other error, 2 input/parse error, 3 training
divergence, 4 a hard assertion failed (e.g. a decision flip inside a
certified radius).
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import logging
import math
import os
import sys
from typing import Sequence

import numpy as np

from . import autoencoder as ae
from .errors import (DomainError, EdgeGuardError, LabelError, ManifestError, ModelFormatError, ParseError,
                     SchemaError, TrainingDivergedError)
from .features import labels_of, parse_flow_csv, read_flow_csv, records_to_matrix, write_flow_csv
from .fusion import optimize_threshold, ThresholdState
from .metrics import detection_metrics
from .pipeline import Pipeline, PipelineConfig, calibrate, load_pipeline, train_pipeline
from .preprocess import NormalizationMode
from .robustness import (certified_radius, estimate_pipeline_lipschitz, fuzz_flips, gaussian_certificate,
                         gaussian_flip_rate, robustness_sweep)
from .simulator import ClusterReport, load_manifest, run_scenario
from .sustainability import EnergyModel
from .synthetic import generate_flows

logger = logging.getLogger("edgeguard")

EXIT_OK, EXIT_ERROR, EXIT_INPUT, EXIT_DIVERGED, EXIT_ASSERT = 0, 1, 2, 3, 4


class HardAssertionError(EdgeGuardError):
    pass


# -- config handling ---------------------------------------------------------------


def _coerce(template, text: str):
    if isinstance(template, bool):
        if text.lower() not in ("true", "false", "1", "0"):
            raise ParseError(f"expected a boolean, got {text!r}")
        return text.lower() in ("true", "1")
    if isinstance(template, int):
        return int(text)
    if isinstance(template, float):
        return float(text)
    return text


def parse_overrides(lines: Sequence[str]) -> dict:
    """Flat ``key = value`` pairs; blank lines and ``#`` comments ignored."""
    out = {}
    for lineno, raw in enumerate(lines, start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = (p.strip() for p in line.partition("="))
        if not sep or not key:
            raise ParseError(f"expected 'key = value', got {raw.strip()!r}", line=lineno)
        out[key] = value
    return out


def build_config(overrides: dict) -> PipelineConfig:
    cfg = PipelineConfig()
    top = {f.name for f in dataclasses.fields(PipelineConfig)} - {"ae"}
    ae_fields = {f.name for f in dataclasses.fields(ae.AEHyper)}
    top_kw, ae_kw = {}, {}
    for key, value in overrides.items():
        name = key[3:] if key.startswith("ae.") else key
        try:
            if key in top:
                top_kw[key] = _coerce(getattr(cfg, key), value)
            elif name in ae_fields:
                ae_kw[name] = _coerce(getattr(cfg.ae, name), value)
            else:
                raise ParseError(f"unknown configuration key {key!r}")
        except ValueError:
            raise ParseError(f"bad value {value!r} for {key!r}") from None
    hyper = dataclasses.replace(cfg.ae, **ae_kw)
    return dataclasses.replace(cfg, ae=hyper, **top_kw)


def config_from_args(args) -> PipelineConfig:
    overrides = {}
    if getattr(args, "config", None):
        with open(args.config, encoding="utf-8") as fh:
            overrides.update(parse_overrides(fh.read().splitlines()))
    overrides.update(parse_overrides(getattr(args, "set", None) or []))
    if getattr(args, "mode", None):
        overrides["mode"] = args.mode
    if args.seed is not None:
        overrides["seed"] = str(args.seed)
        overrides["ae.seed"] = str(args.seed)
    return build_config(overrides)


def _write(path: str, text: str) -> None:
    os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(text)


def _json(obj) -> str:
    def clean(v):
        if isinstance(v, dict):
            return {str(k): clean(x) for k, x in v.items()}
        if isinstance(v, (list, tuple)):
            return [clean(x) for x in v]
        if isinstance(v, (float, np.floating)):
            return float(v) if math.isfinite(v) else None
        if isinstance(v, np.integer):
            return int(v)
        if isinstance(v, np.bool_):
            return bool(v)
        return v

    return json.dumps(clean(obj), indent=2, sort_keys=True) + "\n"


def _table(rows: list, columns: Sequence[str]) -> str:
    def fmt(v):
        if isinstance(v, float):
            return f"{v:.4f}"
        return str(v)

    cells = [[fmt(r.get(c, "")) for c in columns] for r in rows]
    widths = [max(len(c), *(len(row[i]) for row in cells)) if cells else len(c) for i, c in enumerate(columns)]
    lines = ["  ".join(c.ljust(w) for c, w in zip(columns, widths))]
    lines += ["  ".join(v.ljust(w) for v, w in zip(row, widths)) for row in cells]
    return "\n".join(lines) + "\n"


def _labelled(path):
    records = read_flow_csv(path)
    if not records:
        raise ParseError("input has a header but no flow rows", line=2)
    return records_to_matrix(records), labels_of(records), records


# -- commands ----------------------------------------------------------------------


def cmd_synth(args) -> int:
    records = generate_flows(args.benign, args.attack, seed=args.seed or 0)
    write_flow_csv(args.out, records)
    print(f"wrote {len(records)} flows ({args.benign} benign, {args.attack} attack) to {args.out}")
    return EXIT_OK


def cmd_train(args) -> int:
    cfg = config_from_args(args)
    X, y, _ = _labelled(args.csv)
    if y.any():
        logger.info("dropping %d attack rows; training uses benign traffic only", int(y.sum()))
        X = X[y == 0]
    pipeline = train_pipeline(X, cfg)
    pipeline.save(args.out)
    report = {"seed": cfg.seed, "rows": int(X.shape[0]), "config": cfg.to_dict(),
              "train_report": pipeline.train_report.to_dict()}
    _write(os.path.join(args.out, "train_report.json"), _json(report))
    summary = (f"trained on {X.shape[0]} benign rows, mode={cfg.mode}, seed={cfg.seed}\n"
               f"autoencoder final loss {pipeline.train_report.final_loss:.6g} after "
               f"{pipeline.train_report.epochs_run} epochs\n"
               f"forest: {cfg.n_trees} trees, subsample {pipeline.forest.subsample_size}\n")
    _write(os.path.join(args.out, "summary.txt"), summary)
    sys.stdout.write(summary)
    return EXIT_OK


def cmd_calibrate(args) -> int:
    pipeline = load_pipeline(args.model)
    X, y, _ = _labelled(args.csv)
    calibrate(pipeline, X, y if y.any() else None)
    out = args.out or args.model
    pipeline.save(out)
    cal = dict(pipeline.calibration, seed=pipeline.config.seed)
    F = pipeline.score_batch(X)["F"]
    if 0 < y.sum() < y.size:
        cfg = pipeline.config
        sweep = optimize_threshold(F, y, ThresholdState(lam_fp=cfg.lam_fp, eps_fp=cfg.eps_fp,
                                                        rho_tail=cfg.rho_tail))
        rows = ["tau,objective"] + [f"{t!r},{o!r}" for t, o in sweep.sweep_rows()]
        _write(os.path.join(out, "threshold_sweep.csv"), "\n".join(rows) + "\n")
    if pipeline.fusion.fit is not None:
        cal["fit"] = pipeline.fusion.fit.to_dict()
    _write(os.path.join(out, "calibration.json"), _json(cal))
    summary = f"alpha = {pipeline.fusion.alpha:.6g}\ntau = {pipeline.tau:.6g} ({cal['method']})\n"
    _write(os.path.join(out, "calibration.txt"), summary)
    sys.stdout.write(summary)
    return EXIT_OK


def cmd_detect(args) -> int:
    pipeline = load_pipeline(args.model)
    stream = sys.stdin if args.csv in (None, "-") else open(args.csv, encoding="utf-8")
    out = open(args.out, "w", encoding="utf-8") if args.out else sys.stdout
    counts = {"benign": 0, "malicious": 0}
    try:
        header = stream.readline()
        if not header.strip():
            raise ParseError("empty input, expected a header line", line=1)
        try:
            parse_flow_csv(header, pipeline.schema)
        except SchemaError as exc:
            raise SchemaError(f"line 1: {exc}") from None
        lineno = 1
        for line in stream:
            lineno += 1
            if not line.strip():
                continue
            try:
                (record,) = parse_flow_csv(header + line, pipeline.schema)
            except (ParseError, SchemaError) as exc:
                message = str(exc)
                if message.startswith("line "):
                    message = message.split(": ", 1)[1]
                raise ParseError(message, line=lineno) from None
            d = pipeline.detect(record)
            counts[d.decision] += 1
            out.write(json.dumps({"line": lineno, "decision": d.decision, "F": d.F, "e": d.e, "s": d.s,
                                  "margin": d.margin, "device": record.device}) + "\n")
            out.flush()
    finally:
        if stream is not sys.stdin:
            stream.close()
        if out is not sys.stdout:
            out.close()
    sys.stderr.write(f"{counts['malicious']} malicious, {counts['benign']} benign\n")
    return EXIT_OK


def cmd_simulate(args) -> int:
    pipeline = load_pipeline(args.model)
    manifest = load_manifest(args.manifest)
    changes = {}
    if args.nodes is not None:
        changes["node_count"] = args.nodes
        if len(set(manifest.speed_factors)) == 1:
            changes["speed_factors"] = (manifest.speed_factors[0],)
    if args.deterministic_latency:
        changes["deterministic"] = True
    if args.seed is not None:
        changes["seed"] = args.seed
    energy = {k: v for k, v in (("gamma_carbon", args.gamma_carbon), ("kappa1", args.kappa1),
                                ("kappa2", args.kappa2)) if v is not None}
    if energy:
        changes["energy"] = dataclasses.replace(manifest.energy, **energy)
    manifest = dataclasses.replace(manifest, **changes)
    report = run_scenario(manifest, pipeline)
    out = args.out or "simulation"
    report.write(out)
    report.registry.write_log(os.path.join(out, "audit.jsonl"))
    sys.stdout.write(_table(report.detection, ["node", "flows", "accuracy", "precision", "recall", "f1"]))
    lat = report.anova.get("latency_ms")
    if lat:
        sys.stdout.write(f"latency ANOVA: F = {lat['F']:.4g}, p = {lat['p']:.3g}\n")
    sys.stdout.write(f"energy-carbon Pearson r = {report.energy['pearson_energy_carbon']}\n")
    return EXIT_OK


def _ablation_split(y: np.ndarray, seed: int):
    """Benign: 60% train, 20% calibration, 20% test; attacks: half calibration, half test."""
    rng = np.random.default_rng(seed)
    benign = rng.permutation(np.flatnonzero(y == 0))
    attack = rng.permutation(np.flatnonzero(y == 1))
    a, b = int(0.6 * benign.size), int(0.8 * benign.size)
    half = attack.size // 2
    return benign[:a], np.concatenate([benign[a:b], attack[:half]]), np.concatenate([benign[b:], attack[half:]])


def ablate_norm(X, y, base: PipelineConfig) -> list[dict]:
    if y.min() == y.max():
        raise LabelError("ablation needs both benign and attack rows")
    tr, cal, te = _ablation_split(y, base.seed)
    rows = []
    for mode in NormalizationMode:
        cfg = dataclasses.replace(base, mode=mode.value)
        row = {"mode": mode.value, "status": "ok"}
        try:
            p = calibrate(train_pipeline(X[tr], cfg), X[cal], y[cal])
            r = p.score_batch(X[te])
            if not np.all(np.isfinite(r["F"])):
                raise TrainingDivergedError(cfg.ae.epochs, math.inf)
            m = detection_metrics(y[te], r["malicious"].astype(int), r["F"])
            row.update(f1=m["f1"], roc_auc=m["roc_auc"], alpha=p.fusion.alpha)
        except (TrainingDivergedError, DomainError) as exc:
            row.update(status=f"diverged: {exc}", f1=0.0, roc_auc=0.5, alpha=math.nan)
        rows.append(row)
    return rows


def cmd_ablate(args) -> int:
    cfg = config_from_args(args)
    X, y, _ = _labelled(args.csv)
    rows = ablate_norm(X, y, cfg)
    out = args.out or "ablation"
    _write(os.path.join(out, "ablation.json"), _json({"seed": cfg.seed, "rows": rows}))
    csv_lines = ["mode,f1,roc_auc,alpha,status"] + [
        f"{r['mode']},{r['f1']!r},{r['roc_auc']!r},{r['alpha']!r},{r['status']}" for r in rows]
    _write(os.path.join(out, "ablation.csv"), "\n".join(csv_lines) + "\n")
    text = _table(rows, ["mode", "f1", "roc_auc", "alpha", "status"])
    _write(os.path.join(out, "summary.txt"), text)
    sys.stdout.write(text)
    return EXIT_OK


def cmd_robustness(args) -> int:
    pipeline = load_pipeline(args.model)
    X, y, _ = _labelled(args.csv)
    Xn = pipeline.normalize(X)
    seed = args.seed if args.seed is not None else pipeline.config.seed
    rng = np.random.default_rng(seed)
    L = estimate_pipeline_lipschitz(pipeline, Xn, pair_count=args.pairs, seed=seed)
    L_F = L["L_F"]
    pts = rng.choice(Xn.shape[0], size=min(args.points, Xn.shape[0]), replace=False)
    F = pipeline.fused_normalized(Xn[pts])
    per_point, fuzz_total = [], 0
    for k, i in enumerate(pts):
        radius = certified_radius(F[k], pipeline.tau, L_F)
        flips = fuzz_flips(pipeline, Xn[i], radius, args.perturbations, seed=seed + k)
        fuzz_total += flips
        margin = abs(F[k] - pipeline.tau)
        sigma = radius / 2 if math.isfinite(radius) and radius > 0 else 1e-3
        cert = gaussian_certificate(margin, L_F, sigma)
        rate = gaussian_flip_rate(pipeline, Xn[i], sigma, args.noise_draws, seed=seed + 10_000 + k)
        per_point.append({"row": int(i), "F": float(F[k]), "margin": margin, "radius": radius,
                          "fuzz_flips": flips, "sigma": sigma, "certificate": cert, "mc_flip_rate": rate})
    eps = sorted(set(args.epsilon or [0.0, 0.01, 0.05, 0.1]))
    sweep = robustness_sweep(pipeline, Xn[pts], eps, L_F)
    inside = sum(r["flips_inside_radius"] for r in sweep) + fuzz_total
    floor = sum(r["floor_violations"] for r in sweep)
    result = {"seed": seed, "lipschitz": L, "points": per_point, "sweep": sweep,
              "flips_inside_radius": inside, "floor_violations": floor}
    out = args.out or "robustness"
    _write(os.path.join(out, "robustness.json"), _json(result))
    lines = ["row,F,margin,radius,fuzz_flips,sigma,certificate,mc_flip_rate"] + [
        ",".join(repr(p[c]) if isinstance(p[c], float) else str(p[c])
                 for c in ("row", "F", "margin", "radius", "fuzz_flips", "sigma", "certificate", "mc_flip_rate"))
        for p in per_point]
    _write(os.path.join(out, "robustness_points.csv"), "\n".join(lines) + "\n")
    text = (f"L_e = {L['L_e']:.4g}, L_s = {L['L_s']:.4g}, inflated L_F = {L_F:.4g}\n"
            + _table(sweep, ["epsilon", "targets", "attack_success_rate", "certified_coverage",
                             "flips_inside_radius", "floor_violations"])
            + f"decision flips inside certified radii: {inside}\n")
    _write(os.path.join(out, "summary.txt"), text)
    sys.stdout.write(text)
    if inside:
        raise HardAssertionError(f"{inside} decision flip(s) observed inside certified radii")
    return EXIT_OK


def cmd_report(args) -> int:
    sections = []
    for directory in args.inputs:
        for name, title in (("report.json", "simulation"), ("ablation.json", "normalization ablation"),
                            ("robustness.json", "robustness"), ("calibration.json", "calibration"),
                            ("train_report.json", "training")):
            path = os.path.join(directory, name)
            if not os.path.exists(path):
                continue
            with open(path, encoding="utf-8") as fh:
                data = json.load(fh)
            sections.append(_summarise(title, directory, data))
    if not sections:
        raise ParseError(f"no result files found in {', '.join(args.inputs)}")
    text = "\n".join(sections)
    if args.out:
        _write(os.path.join(args.out, "report.md"), text)
        _write(os.path.join(args.out, "report.json"), _json({"sections": len(sections), "inputs": args.inputs}))
    sys.stdout.write(text)
    return EXIT_OK


def _summarise(title, directory, data) -> str:
    head = f"## {title} ({directory})\n\n"
    if title == "simulation":
        body = _table(data["detection"], ["node", "flows", "accuracy", "f1", "roc_auc"])
        body += f"\nenergy-carbon r = {data['energy']['pearson_energy_carbon']}\n"
    elif title == "normalization ablation":
        body = _table(data["rows"], ["mode", "f1", "roc_auc", "status"])
    elif title == "robustness":
        body = _table(data["sweep"], ["epsilon", "attack_success_rate", "certified_coverage",
                                      "flips_inside_radius"])
    elif title == "calibration":
        body = f"alpha = {data['alpha']}\ntau = {data['tau']}\nmethod = {data['method']}\n"
    else:
        body = f"rows = {data['rows']}\nfinal loss = {data['train_report']['final_loss']}\n"
    return head + "```\n" + body + "```\n"


# -- entry point -------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=None)
    common.add_argument("--out", default=None)
    common.add_argument("--config", default=None, help="key = value file of pipeline settings")
    common.add_argument("--set", action="append", metavar="KEY=VALUE", help="override one setting")
    common.add_argument("-v", "--verbose", action="store_true")

    parser = argparse.ArgumentParser(prog="edgeguard", description="Hybrid autoencoder + isolation forest flow detector")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", parents=[common], help="write a synthetic labelled flow CSV")
    p.add_argument("--benign", type=int, default=5000)
    p.add_argument("--attack", type=int, default=0)
    p.set_defaults(func=cmd_synth, out_required=True)

    p = sub.add_parser("train", parents=[common], help="train normalizer, autoencoder and forest")
    p.add_argument("csv")
    p.add_argument("--mode", choices=[m.value for m in NormalizationMode])
    p.set_defaults(func=cmd_train, out_required=True)

    p = sub.add_parser("calibrate", parents=[common], help="set fusion weight and threshold")
    p.add_argument("csv")
    p.add_argument("--model", required=True)
    p.set_defaults(func=cmd_calibrate)

    p = sub.add_parser("detect", parents=[common], help="classify flows (CSV file or stdin)")
    p.add_argument("csv", nargs="?", default="-")
    p.add_argument("--model", required=True)
    p.set_defaults(func=cmd_detect)

    p = sub.add_parser("simulate", parents=[common], help="run a multi-node scenario")
    p.add_argument("--model", required=True)
    p.add_argument("--manifest", required=True)
    p.add_argument("--nodes", type=int)
    p.add_argument("--deterministic-latency", action="store_true")
    p.add_argument("--gamma-carbon", type=float)
    p.add_argument("--kappa1", type=float)
    p.add_argument("--kappa2", type=float)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("ablate-norm", parents=[common], help="compare normalization modes")
    p.add_argument("csv")
    p.add_argument("--mode", help=argparse.SUPPRESS)
    p.set_defaults(func=cmd_ablate)

    p = sub.add_parser("robustness", parents=[common], help="certified-radius and attack audit")
    p.add_argument("csv")
    p.add_argument("--model", required=True)
    p.add_argument("--epsilon", type=float, action="append")
    p.add_argument("--points", type=int, default=100)
    p.add_argument("--perturbations", type=int, default=10_000)
    p.add_argument("--noise-draws", type=int, default=10_000)
    p.add_argument("--pairs", type=int, default=2000)
    p.set_defaults(func=cmd_robustness)

    p = sub.add_parser("report", parents=[common], help="summarise result directories")
    p.add_argument("inputs", nargs="+")
    p.set_defaults(func=cmd_report)
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    if getattr(args, "out_required", False) and not args.out:
        parser.error(f"{args.command} requires --out")
    try:
        return args.func(args)
    except TrainingDivergedError as exc:
        sys.stderr.write(f"error: {exc}\n")
        return EXIT_DIVERGED
    except HardAssertionError as exc:
        sys.stderr.write(f"assertion failed: {exc}\n")
        return EXIT_ASSERT
    except (ParseError, SchemaError, DomainError, ManifestError, ModelFormatError, LabelError) as exc:
        sys.stderr.write(f"error: {exc}\n")
        return EXIT_INPUT
    except (EdgeGuardError, OSError) as exc:
        sys.stderr.write(f"error: {exc}\n")
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
