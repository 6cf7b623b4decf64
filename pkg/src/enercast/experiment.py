"""Config-driven experiment runner.

`ExperimentConfig` describes one batch run: which forecaster frameworks,
which energy vectors, which data (a demand CSV or the synthetic
generator), and the training budget. `run_experiment` trains everything
requested and writes a result bundle under the output directory:

- manifest.json         config (with hash), versions, dataset and split info
- metrics.csv           one row per (framework, vector, scope, split)
- summary.csv           one row per framework, vector x split x {SNR, NRMSE}
- predictions_*.csv     test-split overlays (Timestamp, Actual, Predicted)
- history_*.csv         training curves per trained model
- corr_*.csv            correlation tables fitted on the training days
- fed_rounds_*.csv      federated round log (fed_local runs)
- models/*.npz + .json  trained networks with their assembly metadata

Scopes are `building_<i>` for per-building models, `node_<i>` for
federated aggregation nodes, and `total` for the network-wide sum.
Buildings with no consumption of a vector are never trained; they predict
zero and are included in totals (adding nothing to either side).

`epoch_sweep` reuses one training trajectory per model, snapshotting at
each requested epoch budget: because mini-batch order is seeded per epoch,
the snapshot at epoch E is bit-identical to a fresh run capped at E.
Everything written here is byte-deterministic for a fixed config and
environment; wall-clock only ever appears in history ElapsedSeconds.
"""

from __future__ import annotations

import csv
import dataclasses
import hashlib
import json
import math
import platform
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from .arch import FrameworkId, NetworkSpec
from .data import EnergyVector, MultiEnergyDataset, load_csv, vector_index
from .errors import ConfigError, MissingResultsError
from .estimators import spec_for_architecture
from .featsel import (
    cross_building_correlation,
    next_prev_correlation_matrix,
    select_input_channels,
)
from .fed import build_fed_nodes, federated_train
from .metrics import MetricReport, evaluate_report, network_total
from .network import Network, save_network
from .optim import (
    TrainConfig,
    TrainHistory,
    TrainLoop,
    capture_input_mean,
    evaluate_loss,
    predict_batched,
    train,
)
from .synth import SynthConfig, generate
from .windows import (
    PartitionedWindows,
    SplitBounds,
    SplitMode,
    SplitSpec,
    assemble_input,
    split,
)

METRIC_CSV_COLUMNS = ("Framework", "Vector", "Scope", "Split",
                      "Channels") + MetricReport.CSV_COLUMNS
SWEEP_CSV_COLUMNS = ("Framework", "Vector", "Budget", "SnrDb", "Nrmse", "TrainMse")
PREDICTION_COLUMNS = ("Timestamp", "Actual", "Predicted")


# --- configuration ----------------------------------------------------------


@dataclass(frozen=True)
class ExperimentConfig:
    """Everything one run needs; field names double as config-file keys."""

    out_dir: str = "run"
    frameworks: tuple[str, ...] = ("single",)
    vectors: tuple[str, ...] = ("electric", "heat", "gas")
    buildings: tuple[int, ...] = ()     # empty tuple = every non-zero building
    data: str = ""                      # demand CSV path; empty = synthetic
    synth_days: int = 90
    synth_buildings: int = 39
    synth_seed: int = 0
    weather: bool = True
    calendar_months: bool = True
    epochs: int = 400
    batch_size: int = 700
    learning_rate: float = 0.01
    gradient_threshold: float = math.inf
    seed: int = 0
    log_every: int = 50
    filters: int = 0                    # 0 = architecture default
    kernel_height: int = 0              # 0 = architecture default
    corr_threshold: float = 0.3
    add_temperature: bool = False
    add_solar: bool = False
    minmax: bool = False
    num_nodes: int = 20
    sync_period: int = 1
    workers: int = 1


_BOOL_WORDS = {"true": True, "1": True, "yes": True, "on": True,
               "false": False, "0": False, "no": False, "off": False}


def _coerce(name: str, kind, raw: str):
    raw = raw.strip()
    if kind is bool:
        try:
            return _BOOL_WORDS[raw.lower()]
        except KeyError:
            raise ConfigError(f"{name}: expected a boolean, got {raw!r}") from None
    if kind is int:
        try:
            return int(raw)
        except ValueError:
            raise ConfigError(f"{name}: expected an integer, got {raw!r}") from None
    if kind is float:
        try:
            return float(raw)
        except ValueError:
            raise ConfigError(f"{name}: expected a number, got {raw!r}") from None
    if kind is str:
        return raw
    # remaining fields are tuples of str or int
    items = [part.strip() for part in raw.split(",") if part.strip()]
    if name == "buildings":
        try:
            return tuple(int(i) for i in items)
        except ValueError:
            raise ConfigError(f"buildings: expected integers, got {raw!r}") from None
    return tuple(items)


def parse_config_text(text: str, base: ExperimentConfig | None = None) -> ExperimentConfig:
    """Parse `key = value` lines (# comments, blank lines allowed) into a
    config, overriding `base` (or the defaults)."""
    defaults = base or ExperimentConfig()
    typed = {f.name: type(getattr(defaults, f.name))
             for f in dataclasses.fields(ExperimentConfig)}
    overrides = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected key = value, got {line!r}")
        key, _, value = line.partition("=")
        key = key.strip()
        if key not in typed:
            raise ConfigError(f"line {lineno}: unknown config key {key!r}")
        overrides[key] = _coerce(key, typed[key], value)
    return dataclasses.replace(defaults, **overrides)


def load_config(path, base: ExperimentConfig | None = None) -> ExperimentConfig:
    return parse_config_text(Path(path).read_text(encoding="utf-8"), base)


def apply_overrides(cfg: ExperimentConfig, pairs: dict[str, str]) -> ExperimentConfig:
    """Apply raw `key=value` string overrides (e.g. from command flags)."""
    overrides = {}
    for key, raw in pairs.items():
        if not hasattr(cfg, key):
            raise ConfigError(f"unknown config key {key!r}")
        overrides[key] = _coerce(key, type(getattr(cfg, key)), raw)
    return dataclasses.replace(cfg, **overrides)


def validate_config(cfg: ExperimentConfig) -> None:
    for fw in cfg.frameworks:
        try:
            FrameworkId(fw)
        except ValueError:
            valid = ", ".join(f.value for f in FrameworkId)
            raise ConfigError(f"unknown framework {fw!r}; valid: {valid}") from None
    if not cfg.frameworks:
        raise ConfigError("frameworks must not be empty")
    for v in cfg.vectors:
        try:
            EnergyVector(v)
        except ValueError:
            valid = ", ".join(e.value for e in EnergyVector)
            raise ConfigError(f"unknown energy vector {v!r}; valid: {valid}") from None
    if not cfg.vectors:
        raise ConfigError("vectors must not be empty")
    if any(b < 0 for b in cfg.buildings):
        raise ConfigError("building indices must be >= 0")
    for name in ("epochs", "batch_size", "num_nodes", "sync_period", "workers"):
        if getattr(cfg, name) < 1:
            raise ConfigError(f"{name} must be >= 1")
    for name in ("synth_days", "synth_buildings"):
        if not cfg.data and getattr(cfg, name) < 1:
            raise ConfigError(f"{name} must be >= 1")
    if cfg.learning_rate <= 0:
        raise ConfigError("learning_rate must be positive")
    if cfg.gradient_threshold <= 0:
        raise ConfigError("gradient_threshold must be positive (inf disables clipping)")
    if not math.isfinite(cfg.corr_threshold):
        raise ConfigError("corr_threshold must be finite")
    if cfg.log_every < 1:
        raise ConfigError("log_every must be >= 1")
    if (cfg.add_temperature or cfg.add_solar) and not cfg.data and not cfg.weather:
        raise ConfigError("weather channels requested but synthetic weather is disabled")


def config_hash(cfg: ExperimentConfig) -> str:
    blob = json.dumps(dataclasses.asdict(cfg), sort_keys=True, default=str)
    return hashlib.sha256(blob.encode()).hexdigest()


# --- shared plumbing --------------------------------------------------------


def _load_dataset(cfg: ExperimentConfig) -> MultiEnergyDataset:
    if cfg.data:
        return load_csv(cfg.data)
    return generate(SynthConfig(num_buildings=cfg.synth_buildings,
                                num_days=cfg.synth_days, weather=cfg.weather),
                    seed=cfg.synth_seed)


def _train_config(cfg: ExperimentConfig) -> TrainConfig:
    return TrainConfig(max_epochs=cfg.epochs, batch_size=cfg.batch_size,
                       learning_rate=cfg.learning_rate,
                       gradient_threshold=cfg.gradient_threshold,
                       shuffle_seed=cfg.seed, log_every=cfg.log_every)


def _spec_args(cfg: ExperimentConfig) -> dict:
    return {"filters": cfg.filters or None,
            "kernel_height": cfg.kernel_height or None}


def _requested_buildings(cfg: ExperimentConfig, ds: MultiEnergyDataset,
                         vector: EnergyVector) -> list[int]:
    nonzero = ds.nonzero_buildings(vector)
    if not cfg.buildings:
        return list(nonzero)
    bad = [b for b in cfg.buildings if b >= ds.num_buildings]
    if bad:
        raise ConfigError(f"buildings {bad} out of range (dataset has "
                          f"{ds.num_buildings})")
    return [b for b in cfg.buildings if b in set(nonzero)]


@dataclass
class MetricRow:
    framework: str
    vector: str
    scope: str
    split: str
    channels: str
    report: MetricReport

    def csv_row(self) -> tuple[str, ...]:
        return (self.framework, self.vector, self.scope, self.split,
                self.channels) + self.report.csv_row()


def _write_csv(path: Path, columns, rows) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(columns)
        w.writerows(rows)


def _central_job(args):
    """Train one network (used directly or via the worker pool)."""
    spec, seed, parts, tc, validated = args
    net = Network(spec, seed=seed)
    net, history = train(net, parts.train, tc,
                         parts.validation if validated else None)
    if validated and history.best_network is not None:
        return history.best_network, history
    return net, history


def _run_jobs(jobs: list, workers: int) -> list:
    if workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            return list(pool.map(_central_job, jobs))
    return [_central_job(j) for j in jobs]


class _SplitSeries:
    """Accumulates per-scope prediction series to build network totals."""

    def __init__(self):
        self.preds: list[np.ndarray] = []
        self.actuals: list[np.ndarray] = []
        self.target_index: np.ndarray | None = None

    def add(self, pred, actual, target_index=None) -> None:
        self.preds.append(np.asarray(pred, dtype=np.float64).reshape(-1))
        self.actuals.append(np.asarray(actual, dtype=np.float64).reshape(-1))
        if target_index is not None:
            self.target_index = target_index

    def totals(self) -> tuple[np.ndarray, np.ndarray]:
        return network_total(self.preds), network_total(self.actuals)


class _Runner:
    def __init__(self, cfg: ExperimentConfig, ds: MultiEnergyDataset,
                 bounds_default: SplitBounds, out: Path):
        self.cfg = cfg
        self.ds = ds
        self.bounds_default = bounds_default
        self.out = out
        self.rows: list[MetricRow] = []
        self.stamps = ds.timestamps()
        self._corr_cache: dict[EnergyVector, object] = {}

    # -- helpers ------------------------------------------------------------

    def _bounds_for(self, framework: FrameworkId) -> SplitBounds:
        if framework is FrameworkId.SINGLE_VALIDATED:
            return split(self.ds, SplitSpec(SplitMode.TRAIN_VAL_TEST,
                                            self.cfg.calendar_months))
        return self.bounds_default

    def _corr(self, vector: EnergyVector):
        if vector not in self._corr_cache:
            table = next_prev_correlation_matrix(
                self.ds, vector, days=self.bounds_default.train[1])
            self._corr_cache[vector] = table
            table.to_csv(self.out / f"corr_next_prev_{vector.value}.csv")
        return self._corr_cache[vector]

    def _save_model(self, name: str, net: Network, meta: dict) -> None:
        models = self.out / "models"
        models.mkdir(exist_ok=True)
        save_network(net, models / f"{name}.npz")
        (models / f"{name}.json").write_text(
            json.dumps(meta, sort_keys=True, indent=2) + "\n", encoding="utf-8")

    def _write_history(self, name: str, history: TrainHistory) -> None:
        history.to_csv(self.out / f"history_{name}.csv")

    def _write_predictions(self, name: str, target_index: np.ndarray,
                           actual: np.ndarray, pred: np.ndarray) -> None:
        rows = [(self.stamps[int(t)].isoformat(), repr(float(a)), repr(float(p)))
                for t, a, p in zip(target_index, actual, pred)]
        _write_csv(self.out / f"predictions_{name}.csv", PREDICTION_COLUMNS, rows)

    def _report_series(self, framework: str, vector: str, scope: str,
                       split_name: str, channels: str,
                       pred, actual) -> None:
        self.rows.append(MetricRow(framework, vector, scope, split_name, channels,
                                   evaluate_report(pred, actual)))

    # -- per-building frameworks ---------------------------------------------

    def run_per_building(self, framework: FrameworkId) -> None:
        cfg = self.cfg
        bounds = self._bounds_for(framework)
        validated = framework is FrameworkId.SINGLE_VALIDATED
        train_samples = bounds.sample_range(bounds.train)
        for vector_name in cfg.vectors:
            vector = EnergyVector(vector_name)
            buildings = _requested_buildings(cfg, self.ds, vector)
            plans = []
            for b in buildings:
                if framework is FrameworkId.MULTI_CHANNEL:
                    channels = select_input_channels(
                        self._corr(vector), b, vector, self.ds.meta[b],
                        threshold=cfg.corr_threshold,
                        add_temperature=cfg.add_temperature,
                        add_solar=cfg.add_solar)
                    vector_channels = [EnergyVector(c) for c in channels
                                       if c in EnergyVector._value2member_map_]
                    add_temp = "temperature" in channels
                    add_sol = "solar" in channels
                    width = len(vector_channels) + add_temp + add_sol
                    if width < 2:
                        continue  # nothing coupled past the threshold
                    if width > 3:
                        raise ConfigError(
                            f"building {b} {vector.value}: {width} input channels "
                            f"selected but the side-by-side architecture takes at "
                            f"most 3; raise corr_threshold or drop weather flags")
                else:
                    vector_channels = [vector]
                    add_temp = cfg.add_temperature
                    add_sol = cfg.add_solar
                    channels = [vector.value] + (["temperature"] if add_temp else []) \
                        + (["solar"] if add_sol else [])
                    if framework in (FrameworkId.SINGLE, FrameworkId.SINGLE_VALIDATED) \
                            and (add_temp or add_sol):
                        width = 1 + add_temp + add_sol
                    else:
                        width = 1
                plans.append((b, channels, vector_channels, add_temp, add_sol, width))
            if framework is FrameworkId.MULTI_CHANNEL and not plans:
                raise ConfigError(
                    f"no requested building has a second {vector.value}-coupled "
                    f"channel with correlation >= {cfg.corr_threshold}; "
                    f"use the 'single' framework instead")

            jobs = []
            parts_list = []
            for b, channels, vector_channels, add_temp, add_sol, width in plans:
                ws = assemble_input(
                    self.ds,
                    FrameworkId.MULTI_CHANNEL if width > 1 else FrameworkId.SINGLE,
                    vector, building=b,
                    channels=vector_channels if width > 1 else None,
                    add_temperature=add_temp, add_solar=add_sol,
                    minmax=cfg.minmax, train_samples=train_samples)
                parts = bounds.apply(ws)
                arch_name = "multi_channel" if width > 1 else "single"
                spec = spec_for_architecture(
                    arch_name, (ws.inputs.height, ws.inputs.width, ws.inputs.channels),
                    1, **_spec_args(cfg))
                jobs.append((spec, cfg.seed, parts, _train_config(cfg), validated))
                parts_list.append(parts)
            results = _run_jobs(jobs, cfg.workers)

            totals: dict[str, _SplitSeries] = {}
            for (b, channels, *_), parts, (net, history) in zip(plans, parts_list, results):
                scope = f"building_{b}"
                name = f"{framework.value}_{vector.value}_{scope}"
                chan_text = "+".join(channels)
                self._write_history(name, history)
                self._save_model(name, net, {
                    "framework": framework.value, "vector": vector.value,
                    "building": b, "channels": channels,
                    "minmax": cfg.minmax})
                for split_name, ws_part in (("train", parts.train),
                                            ("validation", parts.validation),
                                            ("test", parts.test)):
                    if ws_part is None or ws_part.count == 0:
                        continue
                    pred = predict_batched(net, ws_part.inputs).ravel()
                    actual = ws_part.targets.ravel()
                    self._report_series(framework.value, vector.value, scope,
                                        split_name, chan_text, pred, actual)
                    acc = totals.setdefault(split_name, _SplitSeries())
                    acc.add(pred, actual, ws_part.target_index)
                    if split_name == "test":
                        self._write_predictions(name, ws_part.target_index,
                                                actual, pred)
            for split_name, acc in totals.items():
                pred, actual = acc.totals()
                self._report_series(framework.value, vector.value, "total",
                                    split_name, "", pred, actual)
                if split_name == "test":
                    self._write_predictions(
                        f"{framework.value}_{vector.value}_total",
                        acc.target_index, actual, pred)

    # -- whole-network frameworks ---------------------------------------------

    def run_joint(self, framework: FrameworkId) -> None:
        cfg = self.cfg
        bounds = self.bounds_default
        train_samples = bounds.sample_range(bounds.train)
        vectors = [EnergyVector(v) for v in cfg.vectors]
        runs = [(None, "joint")] if framework is FrameworkId.ALL_JOINT else \
            [(v, f"{v.value}") for v in vectors]
        for run_vector, tag in runs:
            ws = assemble_input(self.ds, framework,
                                run_vector or EnergyVector.ELECTRIC,
                                add_temperature=cfg.add_temperature,
                                add_solar=cfg.add_solar,
                                minmax=cfg.minmax, train_samples=train_samples)
            parts = bounds.apply(ws)
            spec = spec_for_architecture(
                framework.value,
                (ws.inputs.height, ws.inputs.width, ws.inputs.channels),
                ws.targets.shape[1], **_spec_args(cfg))
            (net, history), = _run_jobs(
                [(spec, cfg.seed, parts, _train_config(cfg), False)], 1)
            name = f"{framework.value}_{tag}"
            self._write_history(name, history)
            self._save_model(name, net, {
                "framework": framework.value,
                "vector": None if run_vector is None else run_vector.value,
                "building": None, "channels": [], "minmax": cfg.minmax})
            report_vectors = vectors if run_vector is None else [run_vector]
            for split_name, ws_part in (("train", parts.train),
                                        ("validation", parts.validation),
                                        ("test", parts.test)):
                if ws_part is None or ws_part.count == 0:
                    continue
                pred = predict_batched(net, ws_part.inputs)
                actual = ws_part.targets
                for vector in report_vectors:
                    cols, buildings = self._joint_columns(framework, vector)
                    requested = set(_requested_buildings(cfg, self.ds, vector))
                    total = _SplitSeries()
                    for col, b in zip(cols, buildings):
                        if b in requested:
                            self._report_series(framework.value, vector.value,
                                                f"building_{b}", split_name, "",
                                                pred[:, col], actual[:, col])
                        total.add(pred[:, col], actual[:, col], ws_part.target_index)
                    tpred, tactual = total.totals()
                    self._report_series(framework.value, vector.value, "total",
                                        split_name, "", tpred, tactual)
                    if split_name == "test":
                        self._write_predictions(
                            f"{framework.value}_{vector.value}_total",
                            total.target_index, tactual, tpred)

    def _joint_columns(self, framework: FrameworkId,
                       vector: EnergyVector) -> tuple[list[int], list[int]]:
        """(output column, building) pairs for a vector's non-zero buildings."""
        buildings = sorted(self.ds.nonzero_buildings(vector))
        if framework is FrameworkId.ALL_JOINT:
            cols = [b * 3 + vector_index(vector) for b in buildings]
        else:
            cols = list(buildings)
        return cols, buildings

    # -- federated --------------------------------------------------------------

    def run_fed(self) -> None:
        cfg = self.cfg
        bounds = self.bounds_default
        framework = FrameworkId.FED_LOCAL
        for vector_name in cfg.vectors:
            vector = EnergyVector(vector_name)
            nodes = build_fed_nodes(self.ds, vector, bounds,
                                    num_nodes=cfg.num_nodes)
            spec = spec_for_architecture("local", (48, 1, 1), 1, **_spec_args(cfg))
            result = federated_train(spec, nodes, _train_config(cfg),
                                     sync_period=cfg.sync_period, seed=cfg.seed)
            result.round_log_csv(self.out / f"fed_rounds_{vector.value}.csv")
            name = f"{framework.value}_{vector.value}_global"
            self._save_model(name, result.global_net, {
                "framework": framework.value, "vector": vector.value,
                "building": None, "channels": [vector.value],
                "minmax": cfg.minmax,
                "node_ids": result.node_ids,
                "excluded_node_ids": result.excluded_node_ids})
            trained = set(result.node_ids)
            totals: dict[str, _SplitSeries] = {}
            for node in nodes:
                if node.node_id not in trained:
                    continue
                scope = f"node_{node.node_id}"
                for split_name, ws_part in (("train", node.train),
                                            ("validation", node.validation),
                                            ("test", node.test)):
                    if ws_part is None or ws_part.count == 0:
                        continue
                    pred = predict_batched(result.global_net, ws_part.inputs).ravel()
                    actual = ws_part.targets.ravel()
                    self._report_series(framework.value, vector.value, scope,
                                        split_name, vector.value, pred, actual)
                    acc = totals.setdefault(split_name, _SplitSeries())
                    acc.add(pred, actual, ws_part.target_index)
                    if split_name == "test":
                        self._write_predictions(
                            f"{framework.value}_{vector.value}_{scope}",
                            ws_part.target_index, actual, pred)
            for split_name, acc in totals.items():
                pred, actual = acc.totals()
                self._report_series(framework.value, vector.value, "total",
                                    split_name, "", pred, actual)
                if split_name == "test":
                    self._write_predictions(
                        f"{framework.value}_{vector.value}_total",
                        acc.target_index, actual, pred)


# --- entry points -----------------------------------------------------------


def _manifest(cfg: ExperimentConfig, ds: MultiEnergyDataset,
              bounds: SplitBounds) -> dict:
    return {
        "config": dataclasses.asdict(cfg),
        "config_hash": config_hash(cfg),
        "seed": cfg.seed,
        "versions": {"package": __version__, "numpy": np.__version__,
                     "python": platform.python_version()},
        "dataset": {"source": cfg.data or "synthetic",
                    "buildings": ds.num_buildings, "days": ds.num_days,
                    "start": ds.start.isoformat(),
                    "weather": ds.temperature is not None},
        "split": {"train_days": list(bounds.train),
                  "validation_days": None if bounds.validation is None
                  else list(bounds.validation),
                  "test_days": list(bounds.test)},
    }


def run_experiment(cfg: ExperimentConfig) -> Path:
    """Run everything the config asks for; returns the output directory."""
    validate_config(cfg)
    ds = _load_dataset(cfg)
    bounds = split(ds, SplitSpec(SplitMode.TRAIN_TEST, cfg.calendar_months))
    out = Path(cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    (out / "manifest.json").write_text(
        json.dumps(_manifest(cfg, ds, bounds), indent=2, sort_keys=True) + "\n",
        encoding="utf-8")

    runner = _Runner(cfg, ds, bounds, out)
    for fw_name in cfg.frameworks:
        framework = FrameworkId(fw_name)
        if framework in (FrameworkId.SINGLE, FrameworkId.SINGLE_VALIDATED,
                         FrameworkId.MULTI_CHANNEL):
            runner.run_per_building(framework)
        elif framework in (FrameworkId.ALL_JOINT, FrameworkId.PER_VECTOR):
            runner.run_joint(framework)
        else:
            runner.run_fed()

    _write_csv(out / "metrics.csv", METRIC_CSV_COLUMNS,
               [r.csv_row() for r in runner.rows])
    _write_summary(out, cfg, runner.rows)
    return out


def _write_summary(out: Path, cfg: ExperimentConfig, rows: list[MetricRow]) -> None:
    """One row per framework; columns = vector x split x {SNR, NRMSE} of the
    network totals."""
    splits = ["train", "validation", "test"]
    present = {(r.framework, r.vector, r.split): r.report
               for r in rows if r.scope == "total"}
    used_splits = [s for s in splits if any(k[2] == s for k in present)]
    columns = ["Framework"]
    for vector in cfg.vectors:
        for s in used_splits:
            columns += [f"{vector}_{s}_snr_db", f"{vector}_{s}_nrmse"]
    out_rows = []
    for fw in cfg.frameworks:
        row = [fw]
        for vector in cfg.vectors:
            for s in used_splits:
                rep = present.get((fw, vector, s))
                row += ["" if rep is None else repr(rep.snr_db),
                        "" if rep is None else repr(rep.nrmse)]
        out_rows.append(row)
    _write_csv(out / "summary.csv", columns, out_rows)


def epoch_sweep(cfg: ExperimentConfig, budgets) -> Path:
    """Score test SNR/NRMSE (network totals) after each epoch budget.

    One training trajectory per model is snapshotted at every budget, which
    is bit-identical to separate runs capped at each budget because batch
    order is seeded per epoch. Budget 0 scores the untrained network.
    """
    budgets = sorted({int(b) for b in budgets})
    if not budgets:
        raise ConfigError("epoch budget list must not be empty")
    if budgets[0] < 0:
        raise ConfigError("epoch budgets must be >= 0")
    validate_config(cfg)
    unsupported = {FrameworkId.FED_LOCAL.value}
    for fw in cfg.frameworks:
        if fw in unsupported:
            raise ConfigError(f"epoch sweep does not support {fw!r}")

    ds = _load_dataset(cfg)
    bounds = split(ds, SplitSpec(SplitMode.TRAIN_TEST, cfg.calendar_months))
    out = Path(cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    (out / "manifest.json").write_text(
        json.dumps({**_manifest(cfg, ds, bounds), "epoch_budgets": budgets},
                   indent=2, sort_keys=True) + "\n", encoding="utf-8")

    train_samples = bounds.sample_range(bounds.train)
    sweep_rows = []
    for fw_name in cfg.frameworks:
        framework = FrameworkId(fw_name)
        for vector_name in cfg.vectors:
            vector = EnergyVector(vector_name)
            assemblies = _sweep_assemblies(cfg, ds, framework, vector,
                                           train_samples)
            snap_preds: dict[int, _SplitSeries] = {b: _SplitSeries() for b in budgets}
            train_mse: dict[int, float] = {b: 0.0 for b in budgets}
            for ws, spec, cols in assemblies:
                parts = bounds.apply(ws)
                snaps = _train_snapshots(spec, cfg, parts, budgets)
                for budget, net in snaps.items():
                    pred = predict_batched(net, parts.test.inputs)
                    snap_preds[budget].add(pred[:, cols].sum(axis=1),
                                           parts.test.targets[:, cols].sum(axis=1))
                    train_mse[budget] += evaluate_loss(net, parts.train.inputs,
                                                       parts.train.targets)
            for budget in budgets:
                pred, actual = snap_preds[budget].totals()
                rep = evaluate_report(pred, actual)
                sweep_rows.append((framework.value, vector.value, str(budget),
                                   repr(rep.snr_db), repr(rep.nrmse),
                                   repr(train_mse[budget])))
    _write_csv(out / "sweep.csv", SWEEP_CSV_COLUMNS, sweep_rows)
    return out


def _sweep_assemblies(cfg: ExperimentConfig, ds: MultiEnergyDataset,
                      framework: FrameworkId, vector: EnergyVector,
                      train_samples) -> list:
    """(WindowSet, NetworkSpec, aggregate columns) triples for one
    framework x vector sweep; the columns select this vector's non-zero
    buildings from the model output."""
    out = []
    if framework in (FrameworkId.ALL_JOINT, FrameworkId.PER_VECTOR):
        ws = assemble_input(ds, framework, vector,
                            add_temperature=cfg.add_temperature,
                            add_solar=cfg.add_solar, minmax=cfg.minmax,
                            train_samples=train_samples)
        spec = spec_for_architecture(
            framework.value, (ws.inputs.height, ws.inputs.width, ws.inputs.channels),
            ws.targets.shape[1], **_spec_args(cfg))
        buildings = sorted(ds.nonzero_buildings(vector))
        if framework is FrameworkId.ALL_JOINT:
            cols = [b * 3 + vector_index(vector) for b in buildings]
        else:
            cols = list(buildings)
        out.append((ws, spec, cols))
        return out
    wide = cfg.add_temperature or cfg.add_solar
    for b in _requested_buildings(cfg, ds, vector):
        ws = assemble_input(
            ds,
            FrameworkId.MULTI_CHANNEL if wide else FrameworkId.SINGLE,
            vector, building=b, channels=[vector] if wide else None,
            add_temperature=cfg.add_temperature, add_solar=cfg.add_solar,
            minmax=cfg.minmax, train_samples=train_samples)
        spec = spec_for_architecture(
            "multi_channel" if wide else "single",
            (ws.inputs.height, ws.inputs.width, ws.inputs.channels),
            1, **_spec_args(cfg))
        out.append((ws, spec, [0]))
    return out


def _train_snapshots(spec: NetworkSpec, cfg: ExperimentConfig,
                     parts: PartitionedWindows, budgets: list[int]) -> dict[int, Network]:
    """Train once to max(budgets), cloning the network at each budget."""
    tc = _train_config(cfg)
    tc = dataclasses.replace(tc, max_epochs=max(budgets) or 1)
    net = Network(spec, seed=cfg.seed)
    capture_input_mean(net, parts.train.inputs)
    snaps: dict[int, Network] = {}
    if budgets[0] == 0:
        snaps[0] = net.clone()
    if max(budgets) == 0:
        return snaps
    loop = TrainLoop(net, parts.train.inputs, parts.train.targets, tc)
    wanted = set(budgets)
    for epoch in range(1, tc.max_epochs + 1):
        for _ in range(loop.iters_per_epoch):
            loop.step()
        if epoch in wanted:
            snaps[epoch] = net.clone()
    return snaps


# --- plot data ----------------------------------------------------------------


def emit_plot_data(run_dir) -> list[Path]:
    """Derive plot-ready CSVs from a finished run into <run>/plotdata.

    Overlay files carry (t, actual, predicted) per prediction file; heat-map
    files mirror the long-format correlation tables; loss files carry the
    training curves. Raises MissingResultsError when the run has no
    metrics.csv.
    """
    run = Path(run_dir)
    if not (run / "metrics.csv").exists():
        raise MissingResultsError(f"no metrics.csv under {run}")
    plot = run / "plotdata"
    plot.mkdir(exist_ok=True)
    written: list[Path] = []

    for pred_file in sorted(run.glob("predictions_*.csv")):
        suffix = pred_file.stem[len("predictions_"):]
        target = plot / f"overlay_{suffix}.csv"
        with open(pred_file, newline="", encoding="utf-8") as fh:
            reader = csv.reader(fh)
            next(reader)
            rows = [(str(i), a, p) for i, (_, a, p) in enumerate(reader)]
        _write_csv(target, ("t", "actual", "predicted"), rows)
        written.append(target)

    for corr_file in sorted(run.glob("corr_*.csv")):
        target = plot / f"heatmap_{corr_file.stem[len('corr_'):]}.csv"
        target.write_bytes(corr_file.read_bytes())
        written.append(target)

    for hist_file in sorted(run.glob("history_*.csv")):
        suffix = hist_file.stem[len("history_"):]
        target = plot / f"loss_{suffix}.csv"
        with open(hist_file, newline="", encoding="utf-8") as fh:
            reader = csv.reader(fh)
            next(reader)
            rows = [(r[0], r[3], r[4]) for r in reader]
        _write_csv(target, ("epoch", "minibatch_rmse", "validation_rmse"), rows)
        written.append(target)

    return written


def render_report(run_dir) -> str:
    """Human-readable text summary of a run (also used by the report verb)."""
    run = Path(run_dir)
    metrics = run / "metrics.csv"
    if not metrics.exists():
        raise MissingResultsError(f"no metrics.csv under {run}")
    with open(metrics, newline="", encoding="utf-8") as fh:
        rows = list(csv.DictReader(fh))
    lines = [f"run: {run}", f"metric rows: {len(rows)}"]
    totals = [r for r in rows if r["Scope"] == "total"]
    for r in totals:
        lines.append(
            f"  {r['Framework']:>16} {r['Vector']:>8} {r['Split']:>10}: "
            f"SNR {float(r['SnrDb']):8.3f} dB  NRMSE {float(r['Nrmse']):.5f}  "
            f"{'acceptable' if r['Acceptable'] == 'true' else 'below target'}")
    scoped = [r for r in rows if r["Scope"] != "total" and r["Split"] == "test"]
    if scoped:
        ok = sum(1 for r in scoped if r["Acceptable"] == "true")
        lines.append(f"  per-scope test forecasts meeting targets: {ok}/{len(scoped)}")
    return "\n".join(lines)
