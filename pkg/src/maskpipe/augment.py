"""Deterministic image augmentation for dataset expansion.

Four primitives over RGB8 images, each preserving the image extent:
horizontal flip, rotation about the center, brightness/contrast scaling,
and a combined translate-plus-shear warp. The geometric operations resample
bilinearly and read black (0) outside the source; exact quarter-turn
rotations of square images (and half-turns of any image) take a lossless
shortcut. Results round half-up back to 8-bit.

An :class:`AugmentPlan` couples a seed with an ordered list of operation
descriptors, serialized as a JSON array of single-key objects::

    [{"flip": true}, {"rotate": 15}, {"color": [1.2, 0.8]},
     {"shift": [0.1, -0.05]}, {"shear": 0.1}]

``color`` carries ``[brightness_scale, contrast_scale]``; ``shift`` carries
``[dx_fraction, dy_fraction]`` of the image extent. :func:`apply_plan`
produces one output per descriptor, each computed independently from the
original image, and the same plan on the same image always produces the
same bytes.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass

import numpy as np

from .errors import ParameterError, ShapeError

_KINDS = ("flip", "rotate", "color", "shift", "shear")
_SEED_MAX = 2**64 - 1


def _check_image(image: np.ndarray) -> np.ndarray:
    if not isinstance(image, np.ndarray) or image.ndim != 3 or image.shape[2] != 3:
        shape = getattr(image, "shape", None)
        raise ShapeError(f"expected an RGB image array [h, w, 3], got shape {shape}")
    if image.dtype != np.uint8:
        raise ParameterError(f"expected 8-bit pixels, got dtype {image.dtype}")
    if image.shape[0] < 1 or image.shape[1] < 1:
        raise ShapeError(f"image has an empty extent: {image.shape}")
    return image


def _finite(value, what: str) -> float:
    try:
        f = float(value)
    except (TypeError, ValueError):
        raise ParameterError(f"{what} must be a number, got {value!r}") from None
    if not math.isfinite(f):
        raise ParameterError(f"{what} must be finite, got {f}")
    return f


def _to_uint8(pixels: np.ndarray) -> np.ndarray:
    """Round half-up and clamp to the 8-bit range."""
    return np.clip(np.floor(pixels + 0.5), 0, 255).astype(np.uint8)


def _warp(image: np.ndarray, inverse: np.ndarray) -> np.ndarray:
    """Resample through a 2x3 output->input affine map, black outside."""
    img = image.astype(np.float32)
    h, w = img.shape[:2]
    xs, ys = np.meshgrid(np.arange(w, dtype=np.float64),
                         np.arange(h, dtype=np.float64))
    xin = inverse[0, 0] * xs + inverse[0, 1] * ys + inverse[0, 2]
    yin = inverse[1, 0] * xs + inverse[1, 1] * ys + inverse[1, 2]
    x0 = np.floor(xin).astype(np.intp)
    y0 = np.floor(yin).astype(np.intp)
    wx = (xin - x0).astype(np.float32)
    wy = (yin - y0).astype(np.float32)

    def tap(yi, xi):
        inside = (yi >= 0) & (yi < h) & (xi >= 0) & (xi < w)
        vals = img[np.clip(yi, 0, h - 1), np.clip(xi, 0, w - 1)]
        return vals * inside[..., None]

    out = (tap(y0, x0) * ((1 - wy) * (1 - wx))[..., None]
           + tap(y0, x0 + 1) * ((1 - wy) * wx)[..., None]
           + tap(y0 + 1, x0) * (wy * (1 - wx))[..., None]
           + tap(y0 + 1, x0 + 1) * (wy * wx)[..., None])
    return _to_uint8(out)


def _center(image: np.ndarray) -> tuple[float, float]:
    h, w = image.shape[:2]
    return (w - 1) / 2.0, (h - 1) / 2.0


def hflip(image: np.ndarray) -> np.ndarray:
    """Mirror left-right: column x maps to w-1-x. Applying it twice restores the original."""
    return np.ascontiguousarray(_check_image(image)[:, ::-1])


def rotate(image: np.ndarray, degrees) -> np.ndarray:
    """Rotate counterclockwise about the image center, keeping the extent.

    Square images at exact multiples of 90 degrees (and any image at
    multiples of 180) rotate as lossless pixel permutations; other angles
    resample bilinearly with corners falling to black.
    """
    img = _check_image(image)
    deg = _finite(degrees, "rotation angle")
    h, w = img.shape[:2]
    if deg % 90.0 == 0.0:
        quarter_turns = int(deg // 90) % 4
        if quarter_turns % 2 == 0 or h == w:
            return np.ascontiguousarray(np.rot90(img, quarter_turns))
    theta = math.radians(deg)
    cos_t, sin_t = math.cos(theta), math.sin(theta)
    cx, cy = _center(img)
    # Output->input map for a visually counterclockwise turn (y axis points down).
    inverse = np.array([
        [cos_t, -sin_t, cx - cos_t * cx + sin_t * cy],
        [sin_t, cos_t, cy - sin_t * cx - cos_t * cy],
    ])
    return _warp(img, inverse)


def adjust_color(image: np.ndarray, brightness_scale, contrast_scale) -> np.ndarray:
    """Scale contrast about the pivot 128, then scale brightness.

    Each channel value becomes
    ``clamp(((x - 128) * contrast_scale + 128) * brightness_scale, 0, 255)``
    rounded to the nearest integer. Scales of (1, 1) leave the image
    untouched; negative scales are rejected.
    """
    img = _check_image(image)
    b = _finite(brightness_scale, "brightness_scale")
    c = _finite(contrast_scale, "contrast_scale")
    if b < 0 or c < 0:
        raise ParameterError(
            f"color scales must be >= 0, got brightness {b}, contrast {c}")
    pixels = ((img.astype(np.float64) - 128.0) * c + 128.0) * b
    return _to_uint8(pixels)


def shift_shear(image: np.ndarray, dx_fraction, dy_fraction, shear_factor) -> np.ndarray:
    """Translate by a fraction of the extent and shear rows horizontally.

    Content moves right by ``dx_fraction * width`` pixels and down by
    ``dy_fraction * height`` pixels (so 0.5 on a 4-wide image is exactly two
    columns); rows then slant by ``shear_factor`` per pixel of distance from
    the vertical center. One bilinear resample performs the combined warp,
    with black filling anything pulled in from outside; (0, 0, 0) is the
    identity.
    """
    img = _check_image(image)
    fdx = _finite(dx_fraction, "dx_fraction")
    fdy = _finite(dy_fraction, "dy_fraction")
    f = _finite(shear_factor, "shear_factor")
    if abs(fdx) > 1 or abs(fdy) > 1:
        raise ParameterError(
            f"shift fractions must lie in [-1, 1], got ({fdx}, {fdy})")
    h, w = img.shape[:2]
    dx = fdx * w
    dy = fdy * h
    _, cy = _center(img)
    inverse = np.array([
        [1.0, -f, f * cy - dx],
        [0.0, 1.0, -dy],
    ])
    return _warp(img, inverse)


@dataclass(frozen=True)
class AugmentOp:
    """One augmentation step: a kind plus its numeric arguments."""

    kind: str
    args: tuple[float, ...] = ()

    def apply(self, image: np.ndarray) -> np.ndarray:
        if self.kind == "flip":
            return hflip(image)
        if self.kind == "rotate":
            return rotate(image, self.args[0])
        if self.kind == "color":
            return adjust_color(image, self.args[0], self.args[1])
        if self.kind == "shift":
            return shift_shear(image, self.args[0], self.args[1], 0.0)
        if self.kind == "shear":
            return shift_shear(image, 0.0, 0.0, self.args[0])
        raise ParameterError(f"unknown augmentation kind {self.kind!r}")

    def descriptor(self) -> dict:
        """The single-key JSON object form of this step."""
        if self.kind == "flip":
            return {"flip": True}
        if self.kind in ("rotate", "shear"):
            return {self.kind: self.args[0]}
        return {self.kind: list(self.args)}


@dataclass(frozen=True)
class AugmentPlan:
    """A seed plus an ordered list of augmentation steps."""

    seed: int = 0
    ops: tuple[AugmentOp, ...] = ()

    def __post_init__(self):
        if not isinstance(self.seed, int) or not (0 <= self.seed <= _SEED_MAX):
            raise ParameterError(
                f"plan seed must be an unsigned 64-bit integer, got {self.seed!r}")
        object.__setattr__(self, "ops", tuple(self.ops))


def op_from_descriptor(desc) -> AugmentOp:
    """Parse one single-key descriptor object into an :class:`AugmentOp`."""
    if not isinstance(desc, dict) or len(desc) != 1:
        raise ParameterError(
            f"augmentation step must be an object with exactly one key, got {desc!r}")
    (kind, value), = desc.items()
    if kind not in _KINDS:
        raise ParameterError(
            f"unknown augmentation {kind!r}; expected one of {', '.join(_KINDS)}")
    if kind == "flip":
        if value is not True:
            raise ParameterError(f"flip takes the literal true, got {value!r}")
        return AugmentOp("flip")
    if kind in ("rotate", "shear"):
        return AugmentOp(kind, (_finite(value, kind),))
    if not isinstance(value, (list, tuple)) or len(value) != 2:
        raise ParameterError(f"{kind} takes a two-number array, got {value!r}")
    return AugmentOp(kind, (_finite(value[0], f"{kind}[0]"),
                            _finite(value[1], f"{kind}[1]")))


def parse_plan(text: str, seed: int = 0) -> AugmentPlan:
    """Decode a JSON descriptor array into an :class:`AugmentPlan`."""
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ParameterError(f"augmentation plan is not valid JSON: {exc}") from exc
    if not isinstance(raw, list):
        raise ParameterError("augmentation plan must be a JSON array")
    return AugmentPlan(seed, tuple(op_from_descriptor(d) for d in raw))


def plan_to_json(plan: AugmentPlan) -> str:
    """Serialize a plan's steps back to the JSON array form parse_plan accepts."""
    return json.dumps([op.descriptor() for op in plan.ops], separators=(",", ":"))


def apply_plan(plan: AugmentPlan, image: np.ndarray) -> list[np.ndarray]:
    """One augmented copy per step, each produced from the original image.

    The list order follows the plan's descriptor order; an empty plan yields
    an empty list. All steps here are fully parameterized, so the plan seed
    never alters the output — it exists to pin down any future randomized
    descriptors.
    """
    src = _check_image(image)
    return [op.apply(src) for op in plan.ops]
