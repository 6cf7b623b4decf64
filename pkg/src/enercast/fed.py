"""Federated training for smart-meter aggregation nodes.

Buildings hang off aggregation nodes; each node sees only the summed
demand of its own members. Training runs one optimiser per node on the
node's local windows, and every `sync_period` local iterations all node
models are replaced by their average. Node 0's model doubles as the
global model (after an average they are all identical).

The average itself (`fedavg`) is computed so that three properties hold
exactly, not just to rounding:

- permutation invariance: the node order cannot change the result, because
  contributions are sorted coordinate-wise before summation;
- fixed point: averaging k identical models returns that model bit-for-bit
  (the sum of zero deltas is zero);
- k=1 identity: a single node round-trips unchanged, which makes one-node
  federated training bitwise equivalent to centralised training.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field

import numpy as np

from .arch import NetworkSpec
from .data import EnergyVector, MultiEnergyDataset
from .errors import EmptyNodeListError, InsufficientDataError, LengthMismatchError
from .network import Network
from .optim import TrainConfig, TrainLoop
from .windows import SplitBounds, WindowSet, make_windows

FED_ROUND_COLUMNS = ("Round", "NodeId", "LocalLoss", "PostAvgDeltaNorm")


def fedavg(weight_vectors: list[np.ndarray]) -> np.ndarray:
    """Average aligned flat weight vectors, order-independently.

    Coordinate-wise sorting fixes the summation order, so any permutation
    of the inputs produces the identical result; summing deltas from the
    smallest contribution makes averaging k equal vectors exact.
    """
    if not weight_vectors:
        raise EmptyNodeListError("no weight vectors to average")
    rows = [np.asarray(v, dtype=np.float64).ravel() for v in weight_vectors]
    size = rows[0].shape[0]
    for i, r in enumerate(rows):
        if r.shape[0] != size:
            raise LengthMismatchError(
                f"weight vector {i} has {r.shape[0]} entries, expected {size}")
    stacked = np.sort(np.stack(rows, axis=0), axis=0)
    base = stacked[0]
    return base + (stacked - base).sum(axis=0) / len(rows)


@dataclass(frozen=True)
class FedNode:
    """One aggregation node: its member buildings and windowed data."""

    node_id: int
    buildings: tuple[int, ...]
    train: WindowSet
    test: WindowSet | None = None
    validation: WindowSet | None = None


def _node_attr(vector: EnergyVector) -> str:
    return {EnergyVector.ELECTRIC: "electric_node",
            EnergyVector.HEAT: "heat_node",
            EnergyVector.GAS: "gas_node"}[vector]


def build_fed_nodes(ds: MultiEnergyDataset, vector: EnergyVector,
                    bounds: SplitBounds, num_nodes: int = 20) -> list[FedNode]:
    """Group the non-zero buildings of one vector into aggregation nodes.

    Building metadata node ids are honoured when present; buildings
    without one are dealt round-robin across `num_nodes` slots. Each
    node's series is the element-wise sum of its members' demand.
    """
    vector = EnergyVector(vector)
    attr = _node_attr(vector)
    groups: dict[int, list[int]] = {}
    unassigned: list[int] = []
    for b in ds.nonzero_buildings(vector):
        node_id = getattr(ds.meta[b], attr)
        if node_id is None:
            unassigned.append(b)
        else:
            groups.setdefault(int(node_id), []).append(b)
    if unassigned:
        if num_nodes < 1:
            raise ValueError("num_nodes must be >= 1")
        taken = max(groups) + 1 if groups else 0
        for i, b in enumerate(unassigned):
            groups.setdefault(taken + i % num_nodes, []).append(b)
    if not groups:
        raise InsufficientDataError(f"no buildings consume {vector.value}")
    nodes = []
    for node_id in sorted(groups):
        members = tuple(sorted(groups[node_id]))
        series = np.sum([ds.get_series(b, vector) for b in members], axis=0)
        parts = bounds.apply(make_windows(series, series))
        nodes.append(FedNode(node_id=node_id, buildings=members,
                             train=parts.train, test=parts.test,
                             validation=parts.validation))
    return nodes


@dataclass(frozen=True)
class FedRoundRecord:
    """One node's view of one synchronisation round."""

    round_index: int
    node_id: int
    local_loss: float
    post_avg_delta_norm: float

    def csv_row(self) -> tuple[str, ...]:
        return (str(self.round_index), str(self.node_id),
                repr(self.local_loss), repr(self.post_avg_delta_norm))


@dataclass
class FedResult:
    """Outcome of a federated run."""

    global_net: Network
    rounds: list[FedRoundRecord]
    node_ids: list[int]
    excluded_node_ids: list[int] = field(default_factory=list)

    @property
    def num_rounds(self) -> int:
        return max((r.round_index for r in self.rounds), default=0)

    def round_log_csv(self, path) -> None:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh)
            w.writerow(FED_ROUND_COLUMNS)
            for rec in self.rounds:
                w.writerow(rec.csv_row())


def federated_train(spec: NetworkSpec, nodes: list[FedNode], cfg: TrainConfig,
                    sync_period: int = 1, seed: int = 0) -> FedResult:
    """Run synchronised-averaging training across aggregation nodes.

    Every node starts from the same broadcast initialisation (and, for
    zero-centered inputs, the average of the nodes' input means). Adam
    moments never leave their node; only model state is averaged.
    Nodes whose training window count is below the batch size sit the run
    out and are reported in `excluded_node_ids`.
    """
    if not nodes:
        raise EmptyNodeListError("no nodes to train")
    if sync_period < 1:
        raise ValueError("sync_period must be >= 1")
    active = [n for n in nodes if n.train.count >= cfg.batch_size]
    excluded = [n.node_id for n in nodes if n.train.count < cfg.batch_size]
    if not active:
        raise InsufficientDataError(
            f"every node has fewer than batch_size={cfg.batch_size} training windows")

    template = Network(spec, seed=seed)
    if spec.input.normalization == "zerocenter":
        means = [n.train.inputs.data.mean(axis=3, keepdims=True) for n in active]
        shape = means[0].shape
        template.set_input_mean(fedavg([m.ravel() for m in means]).reshape(shape))

    nets = [template.clone() for _ in active]
    loops = [TrainLoop(net, node.train.inputs, node.train.targets, cfg)
             for net, node in zip(nets, active)]

    records: list[FedRoundRecord] = []
    round_index = 0
    while any(not loop.finished() for loop in loops):
        round_index += 1
        losses = []
        for loop in loops:
            loss = math.nan
            for _ in range(sync_period):
                if loop.finished():
                    break
                loss = loop.step()
            losses.append(loss)
        flats = [net.flat_state() for net in nets]
        merged = fedavg(flats)
        for node, net, flat, loss in zip(active, nets, flats, losses):
            delta = float(np.linalg.norm(flat - merged))
            net.set_flat_state(merged)
            records.append(FedRoundRecord(round_index=round_index,
                                          node_id=node.node_id,
                                          local_loss=loss,
                                          post_avg_delta_norm=delta))

    return FedResult(global_net=nets[0], rounds=records,
                     node_ids=[n.node_id for n in active],
                     excluded_node_ids=excluded)
