"""Keras model construction and tensor translation to archive layout.

The engine's canonical layout stores convolution kernels as
``(out_channels, in_channels, kh, kw)``, depthwise kernels as
``(channels, 1, kh, kw)`` and dense kernels as ``(out, in)``.  Keras uses
``(kh, kw, in, out)``, ``(kh, kw, channels, 1)`` and ``(in, out)``
respectively, so every kernel crosses a transpose on the way out and the
inverse on the way back in.  Every kernel in the archive must be paired with
a bias; Keras convolutions here run bias-free, so their archive biases are
written as zeros, and an archive with a non-zero convolution bias cannot be
loaded back into a Keras model.
"""
from __future__ import annotations

import os

import numpy as np

os.environ.setdefault("TF_CPP_MIN_LOG_LEVEL", "2")
import tensorflow as tf  # noqa: E402  (the log level must be set before import)

from .errors import ExportError  # noqa: E402

INPUT_SIZE = 224
HEAD_UNITS = 128

# Inverted-residual stages as (expansion, out_channels, repeats, first_stride).
STAGE_PLAN = (
    (1, 16, 1, 1),
    (6, 24, 2, 2),
    (6, 32, 3, 2),
    (6, 64, 4, 2),
    (6, 96, 3, 1),
    (6, 160, 3, 2),
    (6, 320, 1, 1),
)

BN_PARAMS = ("gamma", "beta", "mean", "variance")


def _make_divisible(value, divisor=8):
    rounded = max(divisor, int(value + divisor / 2) // divisor * divisor)
    if rounded < 0.9 * value:
        rounded += divisor
    return rounded


def block_descriptors(width=1.0):
    """Flattened per-block description: (index, in_ch, expanded_ch, out_ch).

    Block 0 has no expansion unit; its expanded channel count equals its
    input channel count.
    """
    channels = _make_divisible(32 * width)
    blocks = []
    index = 0
    for expansion, base_out, repeats, _stride in STAGE_PLAN:
        out = _make_divisible(base_out * width)
        for _ in range(repeats):
            expanded = channels if index == 0 else channels * expansion
            blocks.append((index, channels, expanded, out))
            channels = out
            index += 1
    return blocks


def head_channels(width=1.0):
    return _make_divisible(1280 * width) if width > 1.0 else 1280


def unit_names(width=1.0):
    """Canonical weighted-unit names in graph order.

    Convolutional units carry kernel, bias and four raw batch-norm
    parameters; the two classifier units carry kernel and bias only.
    """
    names = ["stem/conv"]
    for index, _in_ch, _expanded, _out in block_descriptors(width):
        if index > 0:
            names.append(f"block{index:02d}/expand")
        names.append(f"block{index:02d}/depthwise")
        names.append(f"block{index:02d}/project")
    names.append("head/conv")
    names.extend(["classifier/fc1", "classifier/fc2"])
    return names


def expected_shapes(num_classes, width=1.0):
    """Name -> shape for every tensor a valid export must contain."""
    shapes = {}

    def conv_unit(name, out_ch, in_ch, kh, kw):
        shapes[f"{name}/kernel"] = (out_ch, in_ch, kh, kw)
        shapes[f"{name}/bias"] = (out_ch,)
        for param in BN_PARAMS:
            shapes[f"{name}/bn/{param}"] = (out_ch,)

    stem = _make_divisible(32 * width)
    conv_unit("stem/conv", stem, 3, 3, 3)
    for index, in_ch, expanded, out in block_descriptors(width):
        prefix = f"block{index:02d}"
        if index > 0:
            conv_unit(f"{prefix}/expand", expanded, in_ch, 1, 1)
        shapes[f"{prefix}/depthwise/kernel"] = (expanded, 1, 3, 3)
        shapes[f"{prefix}/depthwise/bias"] = (expanded,)
        for param in BN_PARAMS:
            shapes[f"{prefix}/depthwise/bn/{param}"] = (expanded,)
        conv_unit(f"{prefix}/project", out, expanded, 1, 1)
        penultimate = out
    head = head_channels(width)
    conv_unit("head/conv", head, penultimate, 1, 1)
    shapes["classifier/fc1/kernel"] = (HEAD_UNITS, head)
    shapes["classifier/fc1/bias"] = (HEAD_UNITS,)
    shapes["classifier/fc2/kernel"] = (num_classes, HEAD_UNITS)
    shapes["classifier/fc2/bias"] = (num_classes,)
    return shapes


def _keras_names(unit):
    """Map a canonical conv-unit name to Keras (layer, batch-norm) names."""
    if unit == "stem/conv":
        return "Conv1", "bn_Conv1"
    if unit == "head/conv":
        return "Conv_1", "Conv_1_bn"
    block, part = unit.split("/")
    index = int(block[5:])
    if index == 0:
        return f"expanded_conv_{part}", f"expanded_conv_{part}_BN"
    return f"block_{index}_{part}", f"block_{index}_{part}_BN"


HEAD_LAYERS = (
    "gap",
    "head_dropout",
    "classifier_fc1",
    "classifier_fc1_relu",
    "classifier_fc2",
    "softmax",
)


def build_model(num_classes, width=1.0, dropout=0.2, freeze_backbone=False):
    """MobileNetV2 backbone with a two-layer softmax classifier head."""
    backbone = tf.keras.applications.MobileNetV2(
        weights=None,
        include_top=False,
        input_shape=(INPUT_SIZE, INPUT_SIZE, 3),
        alpha=width,
    )
    x = tf.keras.layers.GlobalAveragePooling2D(name="gap")(backbone.output)
    x = tf.keras.layers.Dropout(dropout, name="head_dropout")(x)
    x = tf.keras.layers.Dense(HEAD_UNITS, name="classifier_fc1")(x)
    x = tf.keras.layers.ReLU(max_value=6.0, name="classifier_fc1_relu")(x)
    x = tf.keras.layers.Dense(num_classes, name="classifier_fc2")(x)
    outputs = tf.keras.layers.Softmax(name="softmax")(x)
    model = tf.keras.Model(backbone.input, outputs, name="mask_classifier")
    if freeze_backbone:
        set_backbone_trainable(model, False)
    return model


def set_backbone_trainable(model, trainable):
    """Toggle every layer except the classifier head."""
    for layer in model.layers:
        if layer.name not in HEAD_LAYERS:
            layer.trainable = trainable


def calibrate_batch_norm(model, batch):
    """Seed batch-norm moving statistics from one representative batch.

    Freshly initialised moving statistics (mean 0, variance 1) never
    renormalise real activations, so signal decays geometrically through a
    deep randomly initialised backbone and the head sees a constant.  One
    training-mode pass with momentum forced to zero overwrites each layer's
    moving statistics with that layer's actual batch statistics, after which
    inference propagates input differences all the way to the classifier.
    """
    bn_layers = [
        layer
        for layer in model.layers
        if isinstance(layer, tf.keras.layers.BatchNormalization)
    ]
    saved = [layer.momentum for layer in bn_layers]
    for layer in bn_layers:
        layer.momentum = 0.0
    try:
        model(tf.convert_to_tensor(batch), training=True)
    finally:
        for layer, momentum in zip(bn_layers, saved):
            layer.momentum = momentum


def _layer(model, name):
    try:
        return model.get_layer(name)
    except ValueError as exc:
        raise ExportError(f"model has no layer named {name!r}") from exc


def export_tensors(model, width=1.0):
    """Translate a Keras model's weights to canonical layout.

    Returns ``(tensors, eps)`` where ``tensors`` is an ordered name -> float32
    array mapping in graph order and ``eps`` is the batch-norm epsilon shared
    by every normalisation layer.
    """
    tensors = {}
    epsilons = set()
    for unit in unit_names(width):
        if unit.startswith("classifier/"):
            layer = _layer(model, unit.replace("/", "_"))
            kernel, bias = layer.get_weights()
            tensors[f"{unit}/kernel"] = kernel.T.astype(np.float32)
            tensors[f"{unit}/bias"] = bias.astype(np.float32)
            continue
        conv_name, bn_name = _keras_names(unit)
        conv = _layer(model, conv_name)
        (kernel,) = conv.get_weights()
        if unit.endswith("/depthwise"):
            canonical = kernel.transpose(2, 3, 0, 1)
        else:
            canonical = kernel.transpose(3, 2, 0, 1)
        tensors[f"{unit}/kernel"] = canonical.astype(np.float32)
        tensors[f"{unit}/bias"] = np.zeros(canonical.shape[0], dtype=np.float32)
        bn = _layer(model, bn_name)
        gamma, beta, mean, variance = bn.get_weights()
        epsilons.add(float(bn.epsilon))
        for param, value in zip(BN_PARAMS, (gamma, beta, mean, variance)):
            tensors[f"{unit}/bn/{param}"] = value.astype(np.float32)
    if len(epsilons) != 1:
        raise ExportError(f"batch-norm layers disagree on epsilon: {sorted(epsilons)}")
    return tensors, epsilons.pop()


def validate_export(tensors, num_classes, width=1.0):
    """Check an export against the architecture's shape table."""
    expected = expected_shapes(num_classes, width)
    for name, shape in expected.items():
        if name not in tensors:
            raise ExportError(f"export is missing tensor {name!r}")
        actual = tuple(tensors[name].shape)
        if actual != shape:
            raise ExportError(f"tensor {name!r} has shape {actual}, expected {shape}")
    extras = [name for name in tensors if name not in expected]
    if extras:
        raise ExportError(f"export contains unexpected tensors: {extras[:3]}")


def import_tensors(model, tensors, width=1.0):
    """Load canonical-layout tensors back into a freshly built Keras model."""
    for unit in unit_names(width):
        if unit.startswith("classifier/"):
            layer = _layer(model, unit.replace("/", "_"))
            kernel = _required(tensors, f"{unit}/kernel")
            bias = _required(tensors, f"{unit}/bias")
            layer.set_weights([kernel.T, bias])
            continue
        conv_name, bn_name = _keras_names(unit)
        kernel = _required(tensors, f"{unit}/kernel")
        bias = _required(tensors, f"{unit}/bias")
        if np.any(bias):
            raise ExportError(
                f"tensor {unit}/bias is non-zero but the backbone convolution has no bias term"
            )
        if unit.endswith("/depthwise"):
            keras_kernel = kernel.transpose(2, 3, 0, 1)
        else:
            keras_kernel = kernel.transpose(2, 3, 1, 0)
        _layer(model, conv_name).set_weights([keras_kernel])
        bn_values = [_required(tensors, f"{unit}/bn/{param}") for param in BN_PARAMS]
        _layer(model, bn_name).set_weights(bn_values)
    return model


def _required(tensors, name):
    if name not in tensors:
        raise ExportError(f"archive is missing tensor {name!r}")
    return tensors[name]
