"""Minimal float32 inference engine for small convolutional networks.

Supports exactly the layer vocabulary the bundled models need: batchnorm,
conv2d (cross-correlation, same/valid padding), maxpool2d, flatten, dense,
with relu/softmax activations folded into the layer that produces them.
Activations are numpy float32 arrays in (height, width, channels) row-major
order; the engine keeps at most the current and next activation alive while
running a network.

Same padding follows the usual asymmetric convention: the total padding
needed to make the output ceil(input / stride) wide is split with the extra
row/column at the bottom/right.

The on-disk weight container (extension ``.twb``) is a JSON header (layer
specs, per-layer weight/activation counts, front-end fingerprint, byte
offsets) followed by raw little-endian float32 tensor blobs. Convolution
weights are stored (filter_row, filter_col, in_channel, out_channel).
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

MAGIC = b"TWB1"
FORMAT_VERSION = 1
BATCHNORM_EPS = 1e-3

LAYER_KINDS = ("batchnorm", "conv2d", "maxpool2d", "flatten", "dense")
ACTIVATIONS = ("none", "relu", "softmax")


class LayerShapeError(ValueError):
    """Input shape is incompatible with a layer's hyperparameters or weights."""


class BundleIntegrityError(ValueError):
    """Declared counts, shapes, or offsets in a weight bundle do not add up."""


class BundleFormatError(ValueError):
    """A weight bundle file cannot be parsed."""


@dataclass(frozen=True)
class LayerSpec:
    """Hyperparameters of one layer; unused fields stay None for other kinds."""

    kind: str
    activation: str = "none"
    filter_rows: int | None = None
    filter_cols: int | None = None
    num_filters: int | None = None
    stride: int = 1
    padding: str = "same"
    pool_rows: int | None = None
    pool_cols: int | None = None
    units: int | None = None

    def __post_init__(self):
        if self.kind not in LAYER_KINDS:
            raise ValueError(f"unknown layer kind {self.kind!r}")
        if self.activation not in ACTIVATIONS:
            raise ValueError(f"unknown activation {self.activation!r}")
        if self.kind == "conv2d":
            for name in ("filter_rows", "filter_cols", "num_filters"):
                if not isinstance(getattr(self, name), int) or getattr(self, name) <= 0:
                    raise ValueError(f"conv2d requires positive {name}")
            if self.stride <= 0:
                raise ValueError("conv2d stride must be positive")
            if self.padding not in ("same", "valid"):
                raise ValueError(f"conv2d padding must be 'same' or 'valid', got {self.padding!r}")
        elif self.kind == "maxpool2d":
            for name in ("pool_rows", "pool_cols"):
                if not isinstance(getattr(self, name), int) or getattr(self, name) < 1:
                    raise ValueError(f"maxpool2d requires {name} >= 1")
        elif self.kind == "dense":
            if not isinstance(self.units, int) or self.units <= 0:
                raise ValueError("dense requires positive units")

    def describe(self) -> str:
        if self.kind == "conv2d":
            return (
                f"r={self.filter_rows} q={self.filter_cols} m={self.num_filters} "
                f"s={self.stride} {self.padding}"
            )
        if self.kind == "maxpool2d":
            return f"{self.pool_rows}x{self.pool_cols}"
        if self.kind == "dense":
            return f"a={self.units}"
        return "-"


def conv2d_spec(filter_rows, filter_cols, num_filters, stride=1, padding="same",
                activation="relu") -> LayerSpec:
    return LayerSpec(
        kind="conv2d",
        activation=activation,
        filter_rows=filter_rows,
        filter_cols=filter_cols,
        num_filters=num_filters,
        stride=stride,
        padding=padding,
    )


def maxpool2d_spec(pool_rows, pool_cols=None) -> LayerSpec:
    if pool_cols is None:
        pool_cols = pool_rows
    return LayerSpec(kind="maxpool2d", pool_rows=pool_rows, pool_cols=pool_cols)


def dense_spec(units, activation="none") -> LayerSpec:
    return LayerSpec(kind="dense", units=units, activation=activation)


def batchnorm_spec(activation="none") -> LayerSpec:
    return LayerSpec(kind="batchnorm", activation=activation)


def flatten_spec() -> LayerSpec:
    return LayerSpec(kind="flatten")


# ---------------------------------------------------------------------------
# Shape and parameter-count algebra (computable from specs alone)
# ---------------------------------------------------------------------------

def _conv_output_hw(in_h: int, in_w: int, spec: LayerSpec) -> tuple[int, int]:
    r, q, s = spec.filter_rows, spec.filter_cols, spec.stride
    if spec.padding == "same":
        return math.ceil(in_h / s), math.ceil(in_w / s)
    if r > in_h or q > in_w:
        raise LayerShapeError(
            f"valid conv2d filter {r}x{q} larger than input {in_h}x{in_w}"
        )
    return (in_h - r) // s + 1, (in_w - q) // s + 1


def output_shape(spec: LayerSpec, in_shape: tuple) -> tuple:
    """Shape produced by ``spec`` on ``in_shape`` ((h, w, c) or flat (n,))."""
    if spec.kind in ("batchnorm",):
        return tuple(in_shape)
    if spec.kind == "conv2d":
        if len(in_shape) != 3:
            raise LayerShapeError(f"conv2d needs a (h, w, c) input, got {in_shape}")
        h, w = _conv_output_hw(in_shape[0], in_shape[1], spec)
        return (h, w, spec.num_filters)
    if spec.kind == "maxpool2d":
        if len(in_shape) != 3:
            raise LayerShapeError(f"maxpool2d needs a (h, w, c) input, got {in_shape}")
        if spec.pool_rows > in_shape[0] or spec.pool_cols > in_shape[1]:
            raise LayerShapeError(
                f"pool {spec.pool_rows}x{spec.pool_cols} larger than input "
                f"{in_shape[0]}x{in_shape[1]}"
            )
        return (in_shape[0] // spec.pool_rows, in_shape[1] // spec.pool_cols, in_shape[2])
    if spec.kind == "flatten":
        return (int(np.prod(in_shape)),)
    if spec.kind == "dense":
        if len(in_shape) != 1:
            raise LayerShapeError(f"dense needs a flat input, got {in_shape}")
        return (spec.units,)
    raise AssertionError(spec.kind)


def weight_count(spec: LayerSpec, in_shape: tuple) -> int:
    """Learned parameters of the layer: conv r*q*c_in*m + m, dense in*a + a,
    batchnorm 4, pooling/flatten 0."""
    if spec.kind == "conv2d":
        c_in = in_shape[2]
        return spec.filter_rows * spec.filter_cols * c_in * spec.num_filters + spec.num_filters
    if spec.kind == "dense":
        return in_shape[0] * spec.units + spec.units
    if spec.kind == "batchnorm":
        return 4
    return 0


def activation_count(spec: LayerSpec, in_shape: tuple) -> int:
    return int(np.prod(output_shape(spec, in_shape)))


@dataclass(frozen=True)
class TableRow:
    name: str
    hyperparameters: str
    alpha: int
    omega: int


def layer_table(input_shape: tuple, specs: list[LayerSpec]) -> list[TableRow]:
    """Per-layer activation/weight counts, starting with the input row.

    The totals over this table (input included) are the network's activation
    and weight budgets. An empty network has no rows at all: its input buffer
    would never be allocated, so it contributes no counts.
    """
    if not specs:
        return []
    rows = [TableRow("input", "-", int(np.prod(input_shape)), 0)]
    shape = tuple(input_shape)
    for spec in specs:
        rows.append(
            TableRow(spec.kind, spec.describe(), activation_count(spec, shape),
                     weight_count(spec, shape))
        )
        shape = output_shape(spec, shape)
    return rows


def format_layer_table(name: str, rows: list[TableRow]) -> str:
    if not rows:
        return f"network: {name}\n(empty network)"
    alpha_total = sum(r.alpha for r in rows)
    omega_total = sum(r.omega for r in rows)
    width = max(len(r.hyperparameters) for r in rows)
    lines = [f"network: {name}"]
    lines.append(f"{'layer':<10} {'hyperparameters':<{width}} {'alpha':>8} {'omega':>8}")
    for r in rows:
        lines.append(f"{r.name:<10} {r.hyperparameters:<{width}} {r.alpha:>8} {r.omega:>8}")
    lines.append(f"{'total':<10} {'':<{width}} {alpha_total:>8} {omega_total:>8}")
    return "\n".join(lines)


# ---------------------------------------------------------------------------
# Layer execution
# ---------------------------------------------------------------------------

def _apply_activation(x: np.ndarray, activation: str) -> np.ndarray:
    if activation == "none":
        return x
    if activation == "relu":
        return np.maximum(x, np.float32(0.0))
    if activation == "softmax":
        if x.ndim != 1:
            raise LayerShapeError("softmax is only defined on flat outputs")
        shifted = x - np.max(x)
        e = np.exp(shifted)
        return (e / np.sum(e)).astype(np.float32)
    raise AssertionError(activation)


def conv2d(x: np.ndarray, spec: LayerSpec, weights: np.ndarray, bias: np.ndarray) -> np.ndarray:
    """Strided cross-correlation with per-filter bias.

    ``weights`` is (filter_rows, filter_cols, in_channels, num_filters) and
    ``bias`` is (num_filters,).
    """
    x = np.asarray(x, dtype=np.float32)
    if x.ndim != 3:
        raise LayerShapeError(f"conv2d needs a (h, w, c) input, got shape {x.shape}")
    h, w, c_in = x.shape
    r, q, m, s = spec.filter_rows, spec.filter_cols, spec.num_filters, spec.stride
    if weights.shape != (r, q, c_in, m):
        raise LayerShapeError(
            f"conv2d weights shape {weights.shape} does not match "
            f"(r={r}, q={q}, c_in={c_in}, m={m})"
        )
    if bias.shape != (m,):
        raise LayerShapeError(f"conv2d bias shape {bias.shape} != ({m},)")

    out_h, out_w = _conv_output_hw(h, w, spec)
    if spec.padding == "same":
        pad_h = max((out_h - 1) * s + r - h, 0)
        pad_w = max((out_w - 1) * s + q - w, 0)
        top, left = pad_h // 2, pad_w // 2
        padded = np.zeros((h + pad_h, w + pad_w, c_in), dtype=np.float32)
        padded[top : top + h, left : left + w] = x
    else:
        padded = x

    out = np.broadcast_to(bias.astype(np.float32), (out_h, out_w, m)).copy()
    for di in range(r):
        for dj in range(q):
            patch = padded[di : di + (out_h - 1) * s + 1 : s,
                           dj : dj + (out_w - 1) * s + 1 : s]
            out += patch @ weights[di, dj]
    return _apply_activation(out, spec.activation)


def maxpool2d(x: np.ndarray, spec: LayerSpec) -> np.ndarray:
    """Non-overlapping max pooling; trailing rows/columns that do not fill a
    whole pool window are discarded."""
    x = np.asarray(x, dtype=np.float32)
    if x.ndim != 3:
        raise LayerShapeError(f"maxpool2d needs a (h, w, c) input, got shape {x.shape}")
    ph, pw = spec.pool_rows, spec.pool_cols
    h, w, c = x.shape
    if ph > h or pw > w:
        raise LayerShapeError(f"pool {ph}x{pw} larger than input {h}x{w}")
    out_h, out_w = h // ph, w // pw
    cropped = x[: out_h * ph, : out_w * pw]
    pooled = cropped.reshape(out_h, ph, out_w, pw, c).max(axis=(1, 3))
    return _apply_activation(pooled, spec.activation)


def dense(x: np.ndarray, spec: LayerSpec, weights: np.ndarray, bias: np.ndarray) -> np.ndarray:
    x = np.asarray(x, dtype=np.float32)
    if x.ndim != 1:
        raise LayerShapeError(f"dense needs a flat input, got shape {x.shape}")
    if weights.shape != (x.shape[0], spec.units):
        raise LayerShapeError(
            f"dense weights shape {weights.shape} does not match ({x.shape[0]}, {spec.units})"
        )
    if bias.shape != (spec.units,):
        raise LayerShapeError(f"dense bias shape {bias.shape} != ({spec.units},)")
    return _apply_activation(x @ weights + bias, spec.activation)


def batchnorm(x: np.ndarray, gamma: float, beta: float, mean: float, variance: float,
              activation: str = "none") -> np.ndarray:
    """Single-group normalization: (x - mean) / sqrt(variance + eps) * gamma + beta."""
    if variance < 0:
        raise LayerShapeError(f"batchnorm variance must be non-negative, got {variance}")
    x = np.asarray(x, dtype=np.float32)
    scale = np.float32(gamma) / np.float32(math.sqrt(variance + BATCHNORM_EPS))
    out = (x - np.float32(mean)) * scale + np.float32(beta)
    return _apply_activation(out, activation)


def flatten(x: np.ndarray) -> np.ndarray:
    return np.ascontiguousarray(x, dtype=np.float32).reshape(-1)


# ---------------------------------------------------------------------------
# Weight bundles
# ---------------------------------------------------------------------------

# Tensor names each layer kind carries, in blob order.
_TENSOR_NAMES = {
    "conv2d": ("weights", "bias"),
    "dense": ("weights", "bias"),
    "batchnorm": ("gamma", "beta", "mean", "variance"),
    "maxpool2d": (),
    "flatten": (),
}


@dataclass(frozen=True)
class BundleLayer:
    spec: LayerSpec
    tensors: dict[str, np.ndarray] = field(default_factory=dict)


@dataclass
class WeightBundle:
    """A network ready to run: ordered layers with weights, plus the front-end
    fingerprint the weights were trained against."""

    name: str
    input_shape: tuple
    fingerprint: dict
    layers: list[BundleLayer]
    metadata: dict = field(default_factory=dict)
    format_version: int = FORMAT_VERSION

    def __post_init__(self):
        self.input_shape = tuple(int(v) for v in self.input_shape)
        for layer in self.layers:
            expected = _TENSOR_NAMES[layer.spec.kind]
            if tuple(layer.tensors.keys()) != expected:
                raise BundleIntegrityError(
                    f"layer {layer.spec.kind} carries tensors {tuple(layer.tensors)}, "
                    f"expected {expected}"
                )
            for arr in layer.tensors.values():
                arr.setflags(write=False)
        self.validate()

    @property
    def specs(self) -> list[LayerSpec]:
        return [layer.spec for layer in self.layers]

    @property
    def output_shape(self) -> tuple:
        shape = self.input_shape
        for spec in self.specs:
            shape = output_shape(spec, shape)
        return shape

    def validate(self):
        """Check declared-vs-actual tensor element counts layer by layer."""
        shape = self.input_shape
        for index, layer in enumerate(self.layers):
            declared = weight_count(layer.spec, shape)
            actual = sum(int(t.size) for t in layer.tensors.values())
            if declared != actual:
                raise BundleIntegrityError(
                    f"layer {index} ({layer.spec.kind}): tensors hold {actual} values "
                    f"but the layer needs {declared}"
                )
            if layer.spec.kind == "conv2d":
                expected = (layer.spec.filter_rows, layer.spec.filter_cols,
                            shape[2], layer.spec.num_filters)
                if layer.tensors["weights"].shape != expected:
                    raise BundleIntegrityError(
                        f"layer {index} (conv2d): weights shape "
                        f"{layer.tensors['weights'].shape} != {expected}"
                    )
            elif layer.spec.kind == "dense":
                expected = (shape[0], layer.spec.units)
                if layer.tensors["weights"].shape != expected:
                    raise BundleIntegrityError(
                        f"layer {index} (dense): weights shape "
                        f"{layer.tensors['weights'].shape} != {expected}"
                    )
            shape = output_shape(layer.spec, shape)

    def table(self) -> list[TableRow]:
        return layer_table(self.input_shape, self.specs)


@dataclass(frozen=True)
class CountReport:
    rows: list[TableRow]
    omega_total: int
    alpha_total: int


def count_params(bundle: WeightBundle) -> CountReport:
    """Per-layer weight/activation counts with totals, verified against the
    tensors actually stored in the bundle."""
    bundle.validate()
    rows = bundle.table()
    return CountReport(
        rows=rows,
        omega_total=sum(r.omega for r in rows),
        alpha_total=sum(r.alpha for r in rows),
    )


def run_network(bundle: WeightBundle, x: np.ndarray) -> np.ndarray:
    """Apply every layer in order and return the final flat vector."""
    x = np.asarray(x, dtype=np.float32)
    if tuple(x.shape) != bundle.input_shape:
        raise LayerShapeError(
            f"input shape {x.shape} does not match bundle input {bundle.input_shape}"
        )
    for index, layer in enumerate(bundle.layers):
        spec = layer.spec
        try:
            if spec.kind == "conv2d":
                x = conv2d(x, spec, layer.tensors["weights"], layer.tensors["bias"])
            elif spec.kind == "maxpool2d":
                x = maxpool2d(x, spec)
            elif spec.kind == "dense":
                x = dense(x, spec, layer.tensors["weights"], layer.tensors["bias"])
            elif spec.kind == "batchnorm":
                t = layer.tensors
                x = batchnorm(x, t["gamma"].item(), t["beta"].item(), t["mean"].item(),
                              t["variance"].item(), activation=spec.activation)
            elif spec.kind == "flatten":
                x = _apply_activation(flatten(x), spec.activation)
        except LayerShapeError as err:
            raise LayerShapeError(f"layer {index} ({spec.kind}): {err}") from err
        if not np.all(np.isfinite(x)):
            raise LayerShapeError(f"layer {index} ({spec.kind}) produced non-finite values")
    if x.ndim != 1:
        x = flatten(x)
    return x


# ---------------------------------------------------------------------------
# Serialization
# ---------------------------------------------------------------------------

_SPEC_FIELDS = ("kind", "activation", "filter_rows", "filter_cols", "num_filters",
                "stride", "padding", "pool_rows", "pool_cols", "units")


def _spec_to_json(spec: LayerSpec) -> dict:
    return {name: getattr(spec, name) for name in _SPEC_FIELDS
            if getattr(spec, name) is not None}


def _spec_from_json(obj: dict) -> LayerSpec:
    unknown = set(obj) - set(_SPEC_FIELDS)
    if unknown:
        raise BundleFormatError(f"unknown layer spec fields {sorted(unknown)}")
    return LayerSpec(**obj)


def save_bundle(bundle: WeightBundle, path):
    header_layers = []
    blobs = []
    offset = 0
    shape = bundle.input_shape
    for layer in bundle.layers:
        tensors = []
        for name, arr in layer.tensors.items():
            raw = np.ascontiguousarray(arr, dtype="<f4").tobytes()
            tensors.append(
                {"name": name, "shape": list(arr.shape), "offset": offset, "count": int(arr.size)}
            )
            blobs.append(raw)
            offset += len(raw)
        header_layers.append(
            {
                "spec": _spec_to_json(layer.spec),
                "omega": weight_count(layer.spec, shape),
                "alpha": activation_count(layer.spec, shape),
                "tensors": tensors,
            }
        )
        shape = output_shape(layer.spec, shape)

    rows = bundle.table()
    header = {
        "format_version": bundle.format_version,
        "name": bundle.name,
        "input_shape": list(bundle.input_shape),
        "front_end": bundle.fingerprint,
        "metadata": bundle.metadata,
        "layers": header_layers,
        "totals": {
            "omega": sum(r.omega for r in rows),
            "alpha": sum(r.alpha for r in rows),
        },
    }
    encoded = json.dumps(header, indent=1, sort_keys=True).encode("utf-8")
    with Path(path).open("wb") as fh:
        fh.write(MAGIC)
        fh.write(len(encoded).to_bytes(4, "little"))
        fh.write(encoded)
        for raw in blobs:
            fh.write(raw)


def load_bundle(path) -> WeightBundle:
    data = Path(path).read_bytes()
    if data[:4] != MAGIC:
        raise BundleFormatError(f"{path}: not a weight bundle (bad magic)")
    header_len = int.from_bytes(data[4:8], "little")
    try:
        header = json.loads(data[8 : 8 + header_len].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as err:
        raise BundleFormatError(f"{path}: corrupt header: {err}") from err
    if header.get("format_version") != FORMAT_VERSION:
        raise BundleFormatError(
            f"{path}: unsupported format version {header.get('format_version')}"
        )
    blob = data[8 + header_len :]

    layers = []
    for index, entry in enumerate(header["layers"]):
        spec = _spec_from_json(entry["spec"])
        tensors = {}
        for t in entry["tensors"]:
            start = t["offset"]
            end = start + 4 * t["count"]
            if end > len(blob):
                raise BundleFormatError(
                    f"{path}: layer {index} tensor {t['name']} overruns the blob"
                )
            arr = np.frombuffer(blob[start:end], dtype="<f4").reshape(t["shape"]).copy()
            tensors[t["name"]] = arr
        layers.append(BundleLayer(spec=spec, tensors=tensors))

    bundle = WeightBundle(
        name=header.get("name", "network"),
        input_shape=tuple(header["input_shape"]),
        fingerprint=header.get("front_end", {}),
        layers=layers,
        metadata=header.get("metadata", {}),
    )

    # Cross-check the header's declared per-layer and total counts.
    rows = bundle.table()
    for index, (entry, row) in enumerate(zip(header["layers"], rows[1:])):
        if entry["omega"] != row.omega or entry["alpha"] != row.alpha:
            raise BundleIntegrityError(
                f"{path}: layer {index} declares omega={entry['omega']} alpha={entry['alpha']} "
                f"but the architecture gives omega={row.omega} alpha={row.alpha}"
            )
    declared = header.get("totals", {})
    omega_total = sum(r.omega for r in rows)
    alpha_total = sum(r.alpha for r in rows)
    if declared.get("omega") != omega_total or declared.get("alpha") != alpha_total:
        raise BundleIntegrityError(
            f"{path}: declared totals {declared} do not match computed "
            f"omega={omega_total} alpha={alpha_total}"
        )
    return bundle
