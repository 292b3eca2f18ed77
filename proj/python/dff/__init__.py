"""Distilled feature fields: train, render, query and edit from Python.

Thin wrapper over the native module. Poses, configs and edits are dicts;
images come back as float32 arrays of shape (height, width, channels).
"""

import json as _json

from . import _core
from ._core import ConflictError, InputError, LoadError, NotFoundError, StructuralError, decode_fmap, encode_fmap, psnr, ssim

__all__ = [
    "Scene",
    "gen_synthetic",
    "dataset_info",
    "train",
    "psnr",
    "ssim",
    "encode_fmap",
    "decode_fmap",
    "InputError",
    "StructuralError",
    "LoadError",
    "NotFoundError",
    "ConflictError",
]


def gen_synthetic(out, spec=None):
    """Write the synthetic desk dataset (or one built from `spec`) to `out`."""
    _core.gen_synthetic(str(out), _json.dumps(spec) if spec else "")


def dataset_info(path):
    return _json.loads(_core.dataset_info(str(path)))


def train(dataset, out, **config):
    """Train both phases and save the checkpoint; returns the iteration count.

    Keyword arguments are TrainConfig fields, e.g. phase1_iters=200.
    """
    return _core.train(str(dataset), str(out), _json.dumps(config) if config else "")


class Scene:
    """A trained scene loaded from a checkpoint."""

    def __init__(self, checkpoint):
        self._s = _core.Scene(str(checkpoint))

    @property
    def labels(self):
        return list(self._s.labels)

    @property
    def iteration(self):
        return self._s.iteration

    @property
    def feature_dim(self):
        return self._s.feature_dim

    def set_samples(self, coarse, fine):
        self._s.set_samples(coarse, fine)

    def render(self, pose, channels=("rgb",)):
        return self._s.render(_json.dumps(pose), list(channels))

    def query(self, pose, labels, negatives=()):
        """Per-pixel probability that the pixel shows one of `labels`."""
        return self._s.query(_json.dumps(pose), list(labels), list(negatives))

    def render_edit(self, edit, pose):
        return self._s.render_edit(_json.dumps(edit), _json.dumps(pose))

    def segment(self, dataset):
        return _json.loads(self._s.segment(str(dataset)))

    def evaluate(self, dataset):
        return _json.loads(self._s.evaluate(str(dataset)))

    def save(self, path):
        self._s.save(str(path))
