"""Real-time facemask detection.

A from-scratch CPU inference engine for an inverted-residual image
classifier, plus the plumbing around it: weight archives, dataset manifests
and augmentation, temporal decision debouncing, stream detection, and
evaluation reports. Heavy kernels run on a compiled backend when available
and fall back to vectorized numpy otherwise.
"""

from .errors import (BindError, CorruptionError, FormatError, MaskpipeError,
                     ParameterError, ParseError, ShapeError, UnsupportedError)
from .tensor import Tensor
from .fmw import (TensorEntry, WeightArchive, load_archive,
                  load_weight_archive, serialize_archive, write_archive)
from .model import (ClassScores, LayerSpec, Model, ModelGraph, bind,
                    build_mobilenetv2, classify, load_model, preprocess,
                    random_archive, shape_walk)
from .debounce import (LABEL_MASK, LABEL_NOMASK, LABEL_UNCONFIRMED,
                       DebounceState, DecisionEvent, debounce_new,
                       debounce_step)
from .metrics import (ConfusionCounts, binary_rates, build_report, normalize,
                      render_text, report_to_json)
from .dataset import (ManifestEntry, decode_ppm, encode_ppm, load_manifest,
                      parse_manifest, read_ppm, serialize_manifest,
                      split_stats, write_ppm)
from .augment import (AugmentOp, AugmentPlan, adjust_color, apply_plan,
                      hflip, parse_plan, plan_to_json, rotate, shift_shear)
from .pipeline import (bench, detect_stream, evaluate, iter_frames,
                       load_sidecar, write_frs1)

__version__ = "1.0.0"

__all__ = [
    "BindError", "CorruptionError", "FormatError", "MaskpipeError",
    "ParameterError", "ParseError", "ShapeError", "UnsupportedError",
    "Tensor",
    "TensorEntry", "WeightArchive", "load_archive", "load_weight_archive",
    "serialize_archive", "write_archive",
    "ClassScores", "LayerSpec", "Model", "ModelGraph", "bind",
    "build_mobilenetv2", "classify", "load_model", "preprocess",
    "random_archive", "shape_walk",
    "LABEL_MASK", "LABEL_NOMASK", "LABEL_UNCONFIRMED",
    "DebounceState", "DecisionEvent", "debounce_new", "debounce_step",
    "ConfusionCounts", "binary_rates", "build_report", "normalize",
    "render_text", "report_to_json",
    "ManifestEntry", "decode_ppm", "encode_ppm", "load_manifest",
    "parse_manifest", "read_ppm", "serialize_manifest", "split_stats",
    "write_ppm",
    "AugmentOp", "AugmentPlan", "adjust_color", "apply_plan", "hflip",
    "parse_plan", "plan_to_json", "rotate", "shift_shear",
    "bench", "detect_stream", "evaluate", "iter_frames", "load_sidecar",
    "write_frs1",
    "__version__",
]
