"""Re-score the saved models of a finished run directory.

Reads manifest.json to rebuild the dataset and split, loads every model
under models/ together with its assembly sidecar (.json), regenerates the
matching windows, and writes metrics_eval.csv with the same columns as the
original metrics.csv. Lets a run be audited without retraining.
"""

from __future__ import annotations

import json
from pathlib import Path

from .arch import FrameworkId
from .data import EnergyVector, vector_index
from .errors import MissingResultsError
from .experiment import (
    METRIC_CSV_COLUMNS,
    ExperimentConfig,
    MetricRow,
    _load_dataset,
    _write_csv,
)
from .fed import build_fed_nodes
from .metrics import evaluate_report, network_total
from .network import load_network
from .optim import predict_batched
from .windows import SplitMode, SplitSpec, assemble_input, split

_WEATHER = {"temperature", "solar"}


def _config_from_manifest(run: Path) -> ExperimentConfig:
    manifest_path = run / "manifest.json"
    if not manifest_path.exists():
        raise MissingResultsError(f"no manifest.json under {run}")
    raw = json.loads(manifest_path.read_text(encoding="utf-8"))["config"]
    for key in ("frameworks", "vectors", "buildings"):
        raw[key] = tuple(raw[key])
    return ExperimentConfig(**raw)


def _splits(parts):
    return (("train", parts.train), ("validation", parts.validation),
            ("test", parts.test))


def evaluate_run(run_dir) -> Path:
    run = Path(run_dir)
    cfg = _config_from_manifest(run)
    ds = _load_dataset(cfg)
    bounds_plain = split(ds, SplitSpec(SplitMode.TRAIN_TEST, cfg.calendar_months))
    sidecars = sorted((run / "models").glob("*.json")) if (run / "models").is_dir() else []
    if not sidecars:
        raise MissingResultsError(f"no saved models under {run}/models")

    rows: list[MetricRow] = []
    totals: dict[tuple[str, str, str], list] = {}
    for sidecar in sidecars:
        meta = json.loads(sidecar.read_text(encoding="utf-8"))
        net = load_network(sidecar.with_suffix(".npz"))
        framework = FrameworkId(meta["framework"])
        bounds = bounds_plain
        if framework is FrameworkId.SINGLE_VALIDATED:
            bounds = split(ds, SplitSpec(SplitMode.TRAIN_VAL_TEST,
                                         cfg.calendar_months))
        train_samples = bounds.sample_range(bounds.train)

        if framework is FrameworkId.FED_LOCAL:
            vector = EnergyVector(meta["vector"])
            nodes = build_fed_nodes(ds, vector, bounds, num_nodes=cfg.num_nodes)
            trained = set(meta.get("node_ids", [n.node_id for n in nodes]))
            for node in nodes:
                if node.node_id not in trained:
                    continue
                for split_name, ws in (("train", node.train),
                                       ("validation", node.validation),
                                       ("test", node.test)):
                    if ws is None or ws.count == 0:
                        continue
                    pred = predict_batched(net, ws.inputs).ravel()
                    actual = ws.targets.ravel()
                    rows.append(MetricRow(framework.value, vector.value,
                                          f"node_{node.node_id}", split_name,
                                          vector.value,
                                          evaluate_report(pred, actual)))
                    totals.setdefault((framework.value, vector.value, split_name),
                                      []).append((pred, actual))
            continue

        if framework in (FrameworkId.ALL_JOINT, FrameworkId.PER_VECTOR):
            run_vector = meta["vector"]
            target = EnergyVector(run_vector) if run_vector else EnergyVector.ELECTRIC
            ws_full = assemble_input(ds, framework, target,
                                     add_temperature=cfg.add_temperature,
                                     add_solar=cfg.add_solar, minmax=cfg.minmax,
                                     train_samples=train_samples)
            parts = bounds.apply(ws_full)
            report_vectors = ([EnergyVector(v) for v in cfg.vectors]
                              if run_vector is None else [target])
            for split_name, ws in _splits(parts):
                if ws is None or ws.count == 0:
                    continue
                pred = predict_batched(net, ws.inputs)
                actual = ws.targets
                for vector in report_vectors:
                    buildings = sorted(ds.nonzero_buildings(vector))
                    if framework is FrameworkId.ALL_JOINT:
                        cols = [b * 3 + vector_index(vector) for b in buildings]
                    else:
                        cols = list(buildings)
                    for col, b in zip(cols, buildings):
                        rows.append(MetricRow(
                            framework.value, vector.value, f"building_{b}",
                            split_name, "",
                            evaluate_report(pred[:, col], actual[:, col])))
                        totals.setdefault(
                            (framework.value, vector.value, split_name),
                            []).append((pred[:, col], actual[:, col]))
            continue

        vector = EnergyVector(meta["vector"])
        building = meta["building"]
        channels = meta["channels"]
        vector_channels = [EnergyVector(c) for c in channels if c not in _WEATHER]
        add_temp = "temperature" in channels
        add_sol = "solar" in channels
        width = len(vector_channels) + add_temp + add_sol
        ws_full = assemble_input(
            ds, FrameworkId.MULTI_CHANNEL if width > 1 else FrameworkId.SINGLE,
            vector, building=building,
            channels=vector_channels if width > 1 else None,
            add_temperature=add_temp, add_solar=add_sol,
            minmax=meta.get("minmax", False), train_samples=train_samples)
        parts = bounds.apply(ws_full)
        for split_name, ws in _splits(parts):
            if ws is None or ws.count == 0:
                continue
            pred = predict_batched(net, ws.inputs).ravel()
            actual = ws.targets.ravel()
            rows.append(MetricRow(framework.value, vector.value,
                                  f"building_{building}", split_name,
                                  "+".join(channels),
                                  evaluate_report(pred, actual)))
            totals.setdefault((framework.value, vector.value, split_name),
                              []).append((pred, actual))

    for (fw, vector, split_name), series in sorted(totals.items()):
        pred = network_total([p for p, _ in series])
        actual = network_total([a for _, a in series])
        rows.append(MetricRow(fw, vector, "total", split_name, "",
                              evaluate_report(pred, actual)))

    out = run / "metrics_eval.csv"
    _write_csv(out, METRIC_CSV_COLUMNS, [r.csv_row() for r in rows])
    return out
