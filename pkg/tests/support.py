"""Shared helpers for building deterministic test models."""

import numpy as np

from maskpipe import random_archive


def forced_archive(fc2_bias, seed=11):
    """A random archive whose classifier always yields softmax(fc2_bias).

    Zeroing the final dense kernel makes the output independent of the
    image, so tests can force an always-mask or always-no-mask model.
    """
    archive = random_archive(seed=seed)
    kernel = archive.tensors["classifier/fc2/kernel"]
    archive.tensors["classifier/fc2/kernel"] = np.zeros_like(kernel)
    archive.tensors["classifier/fc2/bias"] = np.asarray(fc2_bias, dtype=np.float32)
    return archive
