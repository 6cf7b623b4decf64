"""Network architecture descriptions and the stock forecaster family.

A network is described declaratively as a `NetworkSpec` (a validated stack
of layer specs); `network.Network` turns a spec into trainable parameters.
The stock family covers six use cases:

    single            one building, one energy vector in and out
    multi_channel     one building, 2-3 correlated vectors in, one out
    single_validated  `single` trained against a held-out validation slice
    all_joint         every building and vector jointly (117 outputs)
    per_vector        every building for one vector (39 outputs)
    fed_local         one-conv-block local model for federated training

Specs serialize to a layer table (one row per layer) that parses back to an
equal spec, so model files can carry their own architecture.
"""

from __future__ import annotations

import enum
import re
from dataclasses import dataclass

from .errors import BadChannelCountError, ShapeUnderflowError
from .ops import ceil_div


# --- layer specs ---------------------------------------------------------


@dataclass(frozen=True)
class ImageInput:
    height: int
    width: int
    channels: int
    normalization: str = "zerocenter"  # "zerocenter" or "none"


@dataclass(frozen=True)
class Conv2D:
    filters: int
    kernel: tuple[int, int]
    stride: tuple[int, int] = (1, 1)
    padding: str = "same"


@dataclass(frozen=True)
class BatchNorm:
    pass


@dataclass(frozen=True)
class ReLU:
    pass


@dataclass(frozen=True)
class AvgPool:
    pool: tuple[int, int]
    stride: tuple[int, int]


@dataclass(frozen=True)
class FullyConnected:
    units: int


@dataclass(frozen=True)
class RegressionOutput:
    pass


LayerSpec = (
    ImageInput | Conv2D | BatchNorm | ReLU | AvgPool | FullyConnected | RegressionOutput
)


@dataclass(frozen=True)
class NetworkSpec:
    """An ordered, validated layer stack."""

    layers: tuple[LayerSpec, ...]

    def __post_init__(self):
        layers = tuple(self.layers)
        object.__setattr__(self, "layers", layers)
        if len(layers) < 3:
            raise ValueError("a network needs at least input, one mapping layer, output")
        if not isinstance(layers[0], ImageInput):
            raise ValueError("first layer must be ImageInput")
        if not isinstance(layers[-1], RegressionOutput):
            raise ValueError("last layer must be RegressionOutput")
        for i, layer in enumerate(layers):
            if isinstance(layer, ImageInput):
                if i != 0:
                    raise ValueError(f"ImageInput only allowed at position 0, found at {i}")
                if min(layer.height, layer.width, layer.channels) < 1:
                    raise ValueError("input dims must all be >= 1")
                if layer.normalization not in ("zerocenter", "none"):
                    raise ValueError(f"unknown normalization {layer.normalization!r}")
            elif isinstance(layer, RegressionOutput) and i != len(layers) - 1:
                raise ValueError(f"RegressionOutput only allowed last, found at {i}")
            elif isinstance(layer, Conv2D):
                if layer.filters < 1 or min(layer.kernel) < 1 or min(layer.stride) < 1:
                    raise ValueError(f"layer {i}: conv sizes must be >= 1")
                if layer.padding != "same":
                    raise ValueError(f"layer {i}: only 'same' padding is supported")
            elif isinstance(layer, AvgPool):
                if min(layer.pool) < 1 or min(layer.stride) < 1:
                    raise ValueError(f"layer {i}: pool sizes must be >= 1")
            elif isinstance(layer, FullyConnected):
                if layer.units < 1:
                    raise ValueError(f"layer {i}: units must be >= 1")

    def __len__(self) -> int:
        return len(self.layers)

    @property
    def input(self) -> ImageInput:
        return self.layers[0]  # type: ignore[return-value]

    @property
    def output_units(self) -> int:
        h, w, c = activation_shapes(self)[-1]
        return h * w * c


# --- shape inference -----------------------------------------------------


def activation_shapes(spec: NetworkSpec) -> list[tuple[int, int, int]]:
    """Per-layer output shape (height, width, channels), batch axis elided.

    Raises ShapeUnderflowError naming the first layer whose output would
    have a non-positive dimension (a pool window larger than its input).
    """
    shapes: list[tuple[int, int, int]] = []
    h = w = c = 0
    for i, layer in enumerate(spec.layers):
        if isinstance(layer, ImageInput):
            h, w, c = layer.height, layer.width, layer.channels
        elif isinstance(layer, Conv2D):
            h = ceil_div(h, layer.stride[0])
            w = ceil_div(w, layer.stride[1])
            c = layer.filters
        elif isinstance(layer, AvgPool):
            ph, pw = layer.pool
            if ph > h or pw > w:
                raise ShapeUnderflowError(i, f"pool {ph}x{pw} larger than input {h}x{w}")
            h = (h - ph) // layer.stride[0] + 1
            w = (w - pw) // layer.stride[1] + 1
        elif isinstance(layer, FullyConnected):
            h, w, c = 1, 1, layer.units
        # BatchNorm, ReLU, RegressionOutput keep their input shape
        shapes.append((h, w, c))
    return shapes


# --- stock family --------------------------------------------------------


class FrameworkId(str, enum.Enum):
    SINGLE = "single"
    MULTI_CHANNEL = "multi_channel"
    SINGLE_VALIDATED = "single_validated"
    ALL_JOINT = "all_joint"
    PER_VECTOR = "per_vector"
    FED_LOCAL = "fed_local"


def _conv_block(filters: int, kernel_h: int, pool_stride: tuple[int, int]) -> list[LayerSpec]:
    return [
        Conv2D(filters, (kernel_h, 1), (1, 1), "same"),
        BatchNorm(),
        ReLU(),
        AvgPool((1, 1), pool_stride),
    ]


def build_single_net(filters: int = 136, kernel_h: int = 146,
                     blocks: int = 3, window: int = 48) -> NetworkSpec:
    """Single-series next-step forecaster: `blocks` conv blocks, 1 output.

    Defaults give the 15-layer stack whose time axis shrinks 48 -> 12 -> 3
    -> 1 through the stride-4 subsampling pools.
    """
    layers: list[LayerSpec] = [ImageInput(window, 1, 1, "zerocenter")]
    for _ in range(blocks):
        layers += _conv_block(filters, kernel_h, (4, 4))
    layers += [FullyConnected(1), RegressionOutput()]
    return NetworkSpec(tuple(layers))


def build_multi_channel_net(channel_count: int, filters: int = 30,
                            kernel_h: int = 100, window: int = 48) -> NetworkSpec:
    """Forecaster taking 2-3 parallel series side by side, predicting one.

    The extra series ride on the width axis; pooling is disabled (stride 1)
    so the dense head sees the full window at every width column.
    """
    if channel_count not in (2, 3):
        raise BadChannelCountError(
            f"multi-channel nets take 2 or 3 input series, got {channel_count}"
        )
    layers: list[LayerSpec] = [ImageInput(window, channel_count, 1, "zerocenter")]
    for _ in range(3):
        layers += _conv_block(filters, kernel_h, (1, 1))
    layers += [FullyConnected(1), RegressionOutput()]
    return NetworkSpec(tuple(layers))


def build_all_joint_net(num_buildings: int = 39, num_vectors: int = 3,
                        filters: int = 136, kernel_h: int = 146,
                        window: int = 48, extra_channels: int = 0) -> NetworkSpec:
    """Whole-network forecaster: every building and vector in, all out.

    Buildings sit on the width axis, energy vectors on the channel axis;
    pooling subsamples time only, so the building axis survives intact.
    `extra_channels` adds input-only planes (weather broadcast over
    buildings) that don't grow the output.
    """
    layers: list[LayerSpec] = [
        ImageInput(window, num_buildings, num_vectors + extra_channels, "zerocenter")]
    for _ in range(2):
        layers += _conv_block(filters, kernel_h, (4, 1))
    layers += [FullyConnected(num_buildings * num_vectors), RegressionOutput()]
    return NetworkSpec(tuple(layers))


def build_per_vector_net(num_buildings: int = 39, filters: int = 136,
                         kernel_h: int = 146, window: int = 48,
                         extra_channels: int = 0) -> NetworkSpec:
    """One-vector, all-buildings forecaster (one instance per vector)."""
    layers: list[LayerSpec] = [
        ImageInput(window, num_buildings, 1 + extra_channels, "zerocenter")]
    for _ in range(2):
        layers += _conv_block(filters, kernel_h, (4, 1))
    layers += [FullyConnected(num_buildings), RegressionOutput()]
    return NetworkSpec(tuple(layers))


def build_local_net(filters: int = 136, kernel_h: int = 146,
                    window: int = 48) -> NetworkSpec:
    """Single-conv-block variant of the single-series net, sized for
    per-node training in the federated setup."""
    return build_single_net(filters=filters, kernel_h=kernel_h, blocks=1, window=window)


# --- layer-table serialization -------------------------------------------


_KIND_NAMES = {
    ImageInput: "image_input",
    Conv2D: "conv2d",
    BatchNorm: "batchnorm",
    ReLU: "relu",
    AvgPool: "avgpool",
    FullyConnected: "fully_connected",
    RegressionOutput: "regression_output",
}


def _layer_params_text(layer: LayerSpec) -> str:
    if isinstance(layer, ImageInput):
        return f"{layer.height}x{layer.width}x{layer.channels} {layer.normalization}"
    if isinstance(layer, Conv2D):
        return (f"{layer.filters} filters {layer.kernel[0]}x{layer.kernel[1]} "
                f"stride {layer.stride[0]}x{layer.stride[1]} {layer.padding}")
    if isinstance(layer, AvgPool):
        return (f"pool {layer.pool[0]}x{layer.pool[1]} "
                f"stride {layer.stride[0]}x{layer.stride[1]}")
    if isinstance(layer, FullyConnected):
        return f"{layer.units} units"
    return ""


def format_layer_table(spec: NetworkSpec) -> str:
    """Human-readable table, one row per layer, round-trip parseable."""
    shapes = activation_shapes(spec)
    rows = [("#", "layer", "params", "activations")]
    for i, layer in enumerate(spec.layers):
        h, w, c = shapes[i]
        rows.append((str(i + 1), _KIND_NAMES[type(layer)],
                     _layer_params_text(layer), f"{h}x{w}x{c}"))
    widths = [max(len(r[j]) for r in rows) for j in range(4)]
    lines = []
    for r in rows:
        lines.append(" | ".join(r[j].ljust(widths[j]) for j in range(4)).rstrip())
    lines.insert(1, "-+-".join("-" * widths[j] for j in range(4)))
    return "\n".join(lines) + "\n"


def _parse_hw(text: str) -> tuple[int, int]:
    a, b = text.split("x")
    return int(a), int(b)


def parse_layer_table(text: str) -> NetworkSpec:
    """Inverse of format_layer_table."""
    layers: list[LayerSpec] = []
    for raw in text.splitlines():
        line = raw.strip()
        if not line or set(line) <= {"-", "+", " "}:
            continue
        cells = [c.strip() for c in line.split("|")]
        if len(cells) < 3 or cells[0] == "#":
            continue
        kind, params = cells[1], cells[2]
        if kind == "image_input":
            m = re.fullmatch(r"(\d+)x(\d+)x(\d+) (\w+)", params)
            if not m:
                raise ValueError(f"bad image_input params: {params!r}")
            layers.append(ImageInput(int(m[1]), int(m[2]), int(m[3]), m[4]))
        elif kind == "conv2d":
            m = re.fullmatch(r"(\d+) filters (\d+x\d+) stride (\d+x\d+) (\w+)", params)
            if not m:
                raise ValueError(f"bad conv2d params: {params!r}")
            layers.append(Conv2D(int(m[1]), _parse_hw(m[2]), _parse_hw(m[3]), m[4]))
        elif kind == "batchnorm":
            layers.append(BatchNorm())
        elif kind == "relu":
            layers.append(ReLU())
        elif kind == "avgpool":
            m = re.fullmatch(r"pool (\d+x\d+) stride (\d+x\d+)", params)
            if not m:
                raise ValueError(f"bad avgpool params: {params!r}")
            layers.append(AvgPool(_parse_hw(m[1]), _parse_hw(m[2])))
        elif kind == "fully_connected":
            m = re.fullmatch(r"(\d+) units", params)
            if not m:
                raise ValueError(f"bad fully_connected params: {params!r}")
            layers.append(FullyConnected(int(m[1])))
        elif kind == "regression_output":
            layers.append(RegressionOutput())
        else:
            raise ValueError(f"unknown layer kind {kind!r}")
    return NetworkSpec(tuple(layers))
