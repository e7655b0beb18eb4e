"""Network definition, weight binding, and classification.

The classifier is an inverted-residual convolutional backbone with a small
dense head, expressed as an acyclic, topologically ordered list of layers:

  stem conv 3x3/s2 -> 17 bottleneck blocks -> 1x1 conv -> global average
  pool -> dense(128) -> relu6 -> dense(num_classes) -> softmax

Each bottleneck expands channels with a 1x1 convolution (skipped in the
first block, whose expansion factor is 1), filters spatially with a 3x3
depthwise convolution, then projects down through a linear 1x1 convolution;
blocks that keep stride and channel count add their input back through an
explicit ``residual_add`` layer. Channel counts scale with
``width_multiplier`` and round to multiples of 8 (the expansion layers are
exactly ``in_channels * 6``); the final 1x1 width of 1280 scales only for
multipliers above 1.

Parameter tensors bind by name. A convolution, depthwise, or dense layer
``<name>`` owns ``<name>/kernel`` and ``<name>/bias``; its following
``affine`` layer ``<name>/bn`` owns either raw normalization statistics
(``<name>/bn/gamma|beta|mean|variance``, folded here into a per-channel
scale/shift using the archive's epsilon) or the pre-folded
``<name>/bn/scale`` / ``<name>/bn/shift`` pair.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .errors import BindError, ParameterError, ShapeError
from .fmw import WeightArchive
from .tensor import Tensor

ARCH_NAME = "mobilenetv2"
INPUT_SHAPE = (1, 3, 224, 224)
DEFAULT_CLASS_NAMES = ("with_mask", "without_mask")
FOLD_EPS = 1e-3  # recorded in every archive this package writes

# Bottleneck plan: (expansion factor, base output channels, repeats, first stride).
_BOTTLENECK_PLAN = (
    (1, 16, 1, 1),
    (6, 24, 2, 2),
    (6, 32, 3, 2),
    (6, 64, 4, 2),
    (6, 96, 3, 1),
    (6, 160, 3, 2),
    (6, 320, 1, 1),
)

_BN_RAW = ("gamma", "beta", "mean", "variance")
_BN_FOLDED = ("scale", "shift")


def _make_divisible(value: float, divisor: int = 8) -> int:
    """Round to the nearest multiple of ``divisor`` without dropping below 90%."""
    rounded = max(divisor, int(value + divisor / 2) // divisor * divisor)
    if rounded < 0.9 * value:
        rounded += divisor
    return rounded


@dataclass(frozen=True)
class LayerSpec:
    """One node of the network graph."""

    name: str
    kind: str  # conv | depthwise | affine | relu6 | residual_add | gap | dense | softmax
    params: dict = field(default_factory=dict)
    inputs: tuple[str, ...] = ()


@dataclass(frozen=True)
class ModelGraph:
    """The architecture as data: layers in execution (topological) order."""

    arch: str
    input_shape: tuple[int, int, int, int]
    class_names: tuple[str, ...]
    width_multiplier: float
    layers: tuple[LayerSpec, ...]

    @property
    def num_classes(self) -> int:
        return len(self.class_names)


def _validate_graph(graph: ModelGraph) -> None:
    known = {"input"}
    softmax_seen = 0
    for layer in graph.layers:
        if layer.name in known:
            raise ParameterError(f"duplicate layer name {layer.name!r}")
        want = 2 if layer.kind == "residual_add" else 1
        if len(layer.inputs) != want:
            raise ParameterError(
                f"layer {layer.name!r} needs {want} input(s), has {len(layer.inputs)}")
        for src in layer.inputs:
            if src not in known:
                raise ParameterError(
                    f"layer {layer.name!r} references {src!r} before its definition")
        known.add(layer.name)
        softmax_seen += layer.kind == "softmax"
    if softmax_seen != 1 or graph.layers[-1].kind != "softmax":
        raise ParameterError("graph must end in exactly one softmax layer")


def build_mobilenetv2(num_classes: int = 2, width_multiplier: float = 1.0,
                      class_names: tuple[str, ...] | None = None) -> ModelGraph:
    """Construct the classifier graph for the given class count and width."""
    if num_classes < 2:
        raise ParameterError(f"num_classes must be >= 2, got {num_classes}")
    if not (width_multiplier > 0):
        raise ParameterError(f"width_multiplier must be > 0, got {width_multiplier}")
    if class_names is None:
        class_names = (DEFAULT_CLASS_NAMES if num_classes == 2 else
                       tuple(f"class_{i}" for i in range(num_classes)))
    class_names = tuple(class_names)
    if len(class_names) != num_classes or len(set(class_names)) != num_classes:
        raise ParameterError(
            f"need {num_classes} distinct class names, got {class_names!r}")

    layers: list[LayerSpec] = []

    def conv_unit(name: str, out_ch: int, kernel: int, stride: int, src: str,
                  activation: bool = True) -> str:
        layers.append(LayerSpec(name, "conv",
                                {"out_channels": out_ch, "kernel": kernel,
                                 "stride": stride}, (src,)))
        layers.append(LayerSpec(f"{name}/bn", "affine", {}, (name,)))
        last = f"{name}/bn"
        if activation:
            layers.append(LayerSpec(f"{name}/relu", "relu6", {}, (last,)))
            last = f"{name}/relu"
        return last

    def depthwise_unit(name: str, stride: int, src: str) -> str:
        layers.append(LayerSpec(name, "depthwise",
                                {"kernel": 3, "stride": stride}, (src,)))
        layers.append(LayerSpec(f"{name}/bn", "affine", {}, (name,)))
        layers.append(LayerSpec(f"{name}/relu", "relu6", {}, (f"{name}/bn",)))
        return f"{name}/relu"

    stem_ch = _make_divisible(32 * width_multiplier)
    prev = conv_unit("stem/conv", stem_ch, 3, 2, "input")

    in_ch = stem_ch
    index = 0
    for t, base_ch, repeats, first_stride in _BOTTLENECK_PLAN:
        out_ch = _make_divisible(base_ch * width_multiplier)
        for rep in range(repeats):
            stride = first_stride if rep == 0 else 1
            block = f"block{index:02d}"
            entry = prev
            if t != 1:
                prev = conv_unit(f"{block}/expand", in_ch * t, 1, 1, prev)
            prev = depthwise_unit(f"{block}/depthwise", stride, prev)
            prev = conv_unit(f"{block}/project", out_ch, 1, 1, prev,
                             activation=False)
            if stride == 1 and in_ch == out_ch:
                layers.append(LayerSpec(f"{block}/add", "residual_add", {},
                                        (entry, prev)))
                prev = f"{block}/add"
            in_ch = out_ch
            index += 1

    head_ch = _make_divisible(1280 * width_multiplier) if width_multiplier > 1.0 else 1280
    prev = conv_unit("head/conv", head_ch, 1, 1, prev)
    layers.append(LayerSpec("gap", "gap", {}, (prev,)))
    layers.append(LayerSpec("classifier/fc1", "dense", {"units": 128}, ("gap",)))
    layers.append(LayerSpec("classifier/fc1/relu", "relu6", {}, ("classifier/fc1",)))
    layers.append(LayerSpec("classifier/fc2", "dense", {"units": num_classes},
                            ("classifier/fc1/relu",)))
    layers.append(LayerSpec("softmax", "softmax", {}, ("classifier/fc2",)))

    graph = ModelGraph(ARCH_NAME, INPUT_SHAPE, class_names, width_multiplier,
                       tuple(layers))
    _validate_graph(graph)
    return graph


def shape_walk(graph: ModelGraph) -> list[tuple[str, tuple[int, int, int, int]]]:
    """Output shape [n, c, h, w] of every layer, in execution order."""
    shapes: dict[str, tuple[int, int, int, int]] = {"input": graph.input_shape}
    walk = [("input", graph.input_shape)]
    for layer in graph.layers:
        n, c, h, w = shapes[layer.inputs[0]]
        if layer.kind == "conv":
            s = layer.params["stride"]
            out = (n, layer.params["out_channels"], -(-h // s), -(-w // s))
        elif layer.kind == "depthwise":
            s = layer.params["stride"]
            out = (n, c, -(-h // s), -(-w // s))
        elif layer.kind in ("affine", "relu6", "softmax"):
            out = (n, c, h, w)
        elif layer.kind == "residual_add":
            other = shapes[layer.inputs[1]]
            if other != (n, c, h, w):
                raise ShapeError(
                    f"layer {layer.name!r} adds mismatched shapes "
                    f"{(n, c, h, w)} and {other}")
            out = (n, c, h, w)
        elif layer.kind == "gap":
            out = (n, c, 1, 1)
        elif layer.kind == "dense":
            if (h, w) != (1, 1):
                raise ShapeError(
                    f"layer {layer.name!r} needs a pooled [n, c, 1, 1] input, "
                    f"got {(n, c, h, w)}")
            out = (n, layer.params["units"], 1, 1)
        else:
            raise ParameterError(f"unknown layer kind {layer.kind!r}")
        shapes[layer.name] = out
        walk.append((layer.name, out))
    return walk


@dataclass(frozen=True)
class ClassScores:
    """Softmax probabilities for one sample, aligned with the class names."""

    probabilities: tuple[float, ...]
    argmax_label: str

    @property
    def argmax(self) -> int:
        best = 0
        for i, p in enumerate(self.probabilities):
            if p > self.probabilities[best]:
                best = i
        return best


@dataclass
class _BoundParams:
    kernel: np.ndarray | None = None
    bias: np.ndarray | None = None
    scale: np.ndarray | None = None
    shift: np.ndarray | None = None


class Model:
    """A graph with weights bound to it, ready to classify.

    Instances are immutable after construction and safe to share across
    threads.
    """

    def __init__(self, graph: ModelGraph, params: dict[str, _BoundParams]):
        self.graph = graph
        self._params = params
        # Liveness: index of the last layer consuming each value, so the
        # forward pass can drop activations as soon as they are dead.
        last_use: dict[str, int] = {}
        for i, layer in enumerate(graph.layers):
            for src in layer.inputs:
                last_use[src] = i
        self._drop_after: dict[int, list[str]] = {}
        for name, i in last_use.items():
            self._drop_after.setdefault(i, []).append(name)

    @property
    def input_shape(self) -> tuple[int, int, int, int]:
        return self.graph.input_shape

    @property
    def class_names(self) -> tuple[str, ...]:
        return self.graph.class_names

    @property
    def num_classes(self) -> int:
        return self.graph.num_classes

    def _run_layer(self, layer: LayerSpec, values: dict[str, Tensor]) -> Tensor:
        x = values[layer.inputs[0]]
        p = self._params.get(layer.name)
        if layer.kind == "conv":
            return kernels.conv2d(x, Tensor(p.kernel), p.bias,
                                  layer.params["stride"], "same")
        if layer.kind == "depthwise":
            return kernels.depthwise_conv2d(x, Tensor(p.kernel), p.bias,
                                            layer.params["stride"], "same")
        if layer.kind == "affine":
            return kernels.affine_channel(x, p.scale, p.shift)
        if layer.kind == "relu6":
            return kernels.relu6(x)
        if layer.kind == "residual_add":
            return Tensor(x.array + values[layer.inputs[1]].array)
        if layer.kind == "gap":
            return kernels.global_avg_pool(x)
        if layer.kind == "dense":
            return kernels.dense(x, p.kernel, p.bias)
        return kernels.softmax(x)

    def forward(self, inp: Tensor) -> np.ndarray:
        """Class probabilities for a preprocessed batch, as [n, num_classes]."""
        if inp.shape[1:] != self.input_shape[1:]:
            raise ShapeError(
                f"model expects input [n, {self.input_shape[1]}, "
                f"{self.input_shape[2]}, {self.input_shape[3]}], got {inp.shape}")
        values = {"input": inp}
        out = inp
        for i, layer in enumerate(self.graph.layers):
            out = self._run_layer(layer, values)
            values[layer.name] = out
            for dead in self._drop_after.get(i, ()):
                del values[dead]
        return out.array.reshape(inp.n, self.num_classes).copy()

    def forward_trace(self, inp: Tensor) -> list[tuple[str, Tensor]]:
        """Every layer's output for one input, in execution order."""
        if inp.shape[1:] != self.input_shape[1:]:
            raise ShapeError(
                f"model expects input [n, {self.input_shape[1]}, "
                f"{self.input_shape[2]}, {self.input_shape[3]}], got {inp.shape}")
        values = {"input": inp}
        trace = []
        for layer in self.graph.layers:
            out = self._run_layer(layer, values)
            values[layer.name] = out
            trace.append((layer.name, out))
        return trace

    def classify(self, inp: Tensor) -> ClassScores:
        """Scores for a single preprocessed sample of the exact input shape."""
        if inp.shape != self.input_shape:
            raise ShapeError(
                f"classify expects input {self.input_shape}, got {inp.shape}")
        row = self.forward(inp)[0]
        probs = tuple(float(v) for v in row)
        return ClassScores(probs, self.class_names[int(np.argmax(row))])


def classify(model: Model, inp: Tensor) -> ClassScores:
    """Scores for a single preprocessed sample; see :meth:`Model.classify`."""
    return model.classify(inp)


def _fold_batch_norm(gamma, beta, mean, variance, eps: float):
    """Collapse normalization statistics into a per-channel scale and shift."""
    var64 = variance.astype(np.float64)
    scale = gamma.astype(np.float64) / np.sqrt(var64 + eps)
    shift = beta.astype(np.float64) - mean.astype(np.float64) * scale
    return scale.astype(np.float32), shift.astype(np.float32)


def bind(graph: ModelGraph, archive: WeightArchive) -> Model:
    """Attach an archive's tensors to a graph, folding batch norms.

    Every mismatch — wrong architecture metadata, missing or misshapen
    tensors, leftover tensors the graph does not use — raises
    :class:`~maskpipe.errors.BindError` naming the offending layer or tensor.
    """
    if archive.arch != graph.arch:
        raise BindError(f"archive is for arch {archive.arch!r}, model is {graph.arch!r}")
    if tuple(archive.input_shape) != graph.input_shape:
        raise BindError(
            f"archive expects input {tuple(archive.input_shape)}, "
            f"model uses {graph.input_shape}")
    if tuple(archive.class_names) != graph.class_names:
        raise BindError(
            f"archive classes {list(archive.class_names)} do not match "
            f"model classes {list(graph.class_names)}")
    eps = float(archive.eps)
    if not (np.isfinite(eps) and eps >= 0):
        raise BindError(f"archive epsilon must be finite and >= 0, got {eps}")

    remaining = dict(archive.tensors)

    def take(layer_name: str, suffix: str, shape: tuple[int, ...]) -> np.ndarray:
        name = f"{layer_name}/{suffix}"
        if name not in remaining:
            raise BindError(f"layer {layer_name!r}: missing tensor {name!r}")
        arr = remaining.pop(name)
        if tuple(arr.shape) != shape:
            raise BindError(
                f"layer {layer_name!r}: tensor {name!r} has shape "
                f"{tuple(arr.shape)}, expected {shape}")
        return arr

    shapes: dict[str, tuple[int, int, int, int]] = {"input": graph.input_shape}
    params: dict[str, _BoundParams] = {}
    for (name, out_shape), layer in zip(shape_walk(graph)[1:], graph.layers):
        shapes[name] = out_shape
        in_c = shapes[layer.inputs[0]][1]
        out_c = out_shape[1]
        if layer.kind == "conv":
            k = layer.params["kernel"]
            params[name] = _BoundParams(
                kernel=take(name, "kernel", (out_c, in_c, k, k)),
                bias=take(name, "bias", (out_c,)))
        elif layer.kind == "depthwise":
            k = layer.params["kernel"]
            params[name] = _BoundParams(
                kernel=take(name, "kernel", (in_c, 1, k, k)),
                bias=take(name, "bias", (in_c,)))
        elif layer.kind == "dense":
            params[name] = _BoundParams(
                kernel=take(name, "kernel", (out_c, in_c)),
                bias=take(name, "bias", (out_c,)))
        elif layer.kind == "affine":
            have_folded = [s for s in _BN_FOLDED if f"{name}/{s}" in remaining]
            have_raw = [s for s in _BN_RAW if f"{name}/{s}" in remaining]
            if have_folded and have_raw:
                raise BindError(
                    f"layer {name!r}: has both raw and pre-folded "
                    "normalization tensors; supply one set only")
            if have_folded:
                params[name] = _BoundParams(scale=take(name, "scale", (out_c,)),
                                            shift=take(name, "shift", (out_c,)))
            else:
                gamma = take(name, "gamma", (out_c,))
                beta = take(name, "beta", (out_c,))
                mean = take(name, "mean", (out_c,))
                variance = take(name, "variance", (out_c,))
                if np.any(variance < 0):
                    raise BindError(f"layer {name!r}: negative variance")
                scale, shift = _fold_batch_norm(gamma, beta, mean, variance, eps)
                params[name] = _BoundParams(scale=scale, shift=shift)

    if remaining:
        extras = ", ".join(sorted(remaining)[:5])
        raise BindError(
            f"archive holds {len(remaining)} tensors the model does not use: {extras}")
    return Model(graph, params)


def load_model(path) -> Model:
    """Build the graph an archive file describes and bind it."""
    from .fmw import load_archive

    archive = load_archive(path)
    graph = build_mobilenetv2(num_classes=len(archive.class_names),
                              class_names=tuple(archive.class_names))
    return bind(graph, archive)


def _resize_bilinear(img: np.ndarray, out_h: int, out_w: int) -> np.ndarray:
    """Bilinear resample (half-pixel centers) of a float32 [h, w, c] image."""
    h, w = img.shape[:2]
    if (h, w) == (out_h, out_w):
        return img.copy()
    ys = np.clip((np.arange(out_h, dtype=np.float64) + 0.5) * (h / out_h) - 0.5, 0, h - 1)
    xs = np.clip((np.arange(out_w, dtype=np.float64) + 0.5) * (w / out_w) - 0.5, 0, w - 1)
    y0 = np.floor(ys).astype(np.intp)
    x0 = np.floor(xs).astype(np.intp)
    y1 = np.minimum(y0 + 1, h - 1)
    x1 = np.minimum(x0 + 1, w - 1)
    wy = (ys - y0).astype(np.float32)[:, None, None]
    wx = (xs - x0).astype(np.float32)[None, :, None]
    top = img[y0][:, x0] * (1 - wx) + img[y0][:, x1] * wx
    bot = img[y1][:, x0] * (1 - wx) + img[y1][:, x1] * wx
    return (top * (1 - wy) + bot * wy).astype(np.float32)


def preprocess(image: np.ndarray, target: int = 224) -> Tensor:
    """Turn an RGB8 image [h, w, 3] into a model input [1, 3, target, target].

    Resizes bilinearly when needed (an already-sized image passes through
    untouched), then maps pixel values to [-1, 1] via ``x / 127.5 - 1``.
    """
    if not isinstance(image, np.ndarray) or image.ndim != 3 or image.shape[2] != 3:
        shape = getattr(image, "shape", None)
        raise ShapeError(f"expected an RGB image array [h, w, 3], got shape {shape}")
    if image.dtype != np.uint8:
        raise ParameterError(f"expected 8-bit pixels, got dtype {image.dtype}")
    if image.shape[0] < 1 or image.shape[1] < 1:
        raise ParameterError(f"image must have at least one pixel, got {image.shape}")
    resized = _resize_bilinear(image.astype(np.float32), target, target)
    scaled = resized / np.float32(127.5) - np.float32(1.0)
    return Tensor(scaled.transpose(2, 0, 1)[None, ...])


def random_archive(num_classes: int = 2, width_multiplier: float = 1.0,
                   seed: int = 0,
                   class_names: tuple[str, ...] | None = None) -> WeightArchive:
    """A deterministic archive of small random weights, for tests and benchmarks."""
    graph = build_mobilenetv2(num_classes, width_multiplier, class_names)
    rng = np.random.default_rng(seed)
    shapes = dict(shape_walk(graph))
    tensors: dict[str, np.ndarray] = {}
    for layer in graph.layers:
        in_c = shapes[layer.inputs[0]][1]
        out_c = shapes[layer.name][1]
        if layer.kind in ("conv", "depthwise", "dense"):
            if layer.kind == "conv":
                k = layer.params["kernel"]
                shape: tuple[int, ...] = (out_c, in_c, k, k)
            elif layer.kind == "depthwise":
                k = layer.params["kernel"]
                shape = (in_c, 1, k, k)
            else:
                shape = (out_c, in_c)
            fan_in = int(np.prod(shape[1:]))
            std = np.float32((2.0 / max(fan_in, 1)) ** 0.5)
            tensors[f"{layer.name}/kernel"] = (
                rng.standard_normal(shape) * std).astype(np.float32)
            tensors[f"{layer.name}/bias"] = (
                0.01 * rng.standard_normal(out_c)).astype(np.float32)
        elif layer.kind == "affine":
            tensors[f"{layer.name}/gamma"] = (
                1.0 + 0.1 * rng.standard_normal(out_c)).astype(np.float32)
            tensors[f"{layer.name}/beta"] = (
                0.1 * rng.standard_normal(out_c)).astype(np.float32)
            tensors[f"{layer.name}/mean"] = (
                0.1 * rng.standard_normal(out_c)).astype(np.float32)
            tensors[f"{layer.name}/variance"] = (
                1.0 + 0.1 * np.abs(rng.standard_normal(out_c))).astype(np.float32)
    return WeightArchive(arch=graph.arch, input_shape=graph.input_shape,
                         class_names=graph.class_names, eps=FOLD_EPS,
                         tensors=tensors)
