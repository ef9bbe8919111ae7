"""Input validation helpers shared by the estimator layer."""

from __future__ import annotations

import numpy as np

from .errors import ShapeError
from .skeleton import SkeletonSequence

__all__ = ["as_sequence_array", "sequences_from_array", "check_labels"]


def as_sequence_array(X, joints: int | None = None, channels: int | None = None) -> np.ndarray:
    """Coerce input to a float64 (N, J, T, C) array of single-person sequences.

    Accepts an ndarray of shape (N, J, T, C) or a list of single-person
    :class:`SkeletonSequence` with identical shapes.
    """
    if isinstance(X, np.ndarray):
        arr = np.asarray(X, dtype=np.float64)
    else:
        items = list(X)
        if not items:
            raise ShapeError("empty input")
        if isinstance(items[0], SkeletonSequence):
            for seq in items:
                if seq.persons != 1:
                    raise ShapeError("estimator input sequences must be single-person")
            arr = np.stack([seq.person(0) for seq in items])
        else:
            arr = np.asarray(items, dtype=np.float64)
    if arr.ndim != 4:
        raise ShapeError(f"expected (N, J, T, C) data, got shape {arr.shape}")
    if not np.isfinite(arr).all():
        raise ShapeError("input contains non-finite values")
    if joints is not None and arr.shape[1] != joints:
        raise ShapeError(f"expected {joints} joints, got {arr.shape[1]}")
    if channels is not None and arr.shape[3] != channels:
        raise ShapeError(f"expected {channels} channels, got {arr.shape[3]}")
    return arr


def sequences_from_array(arr: np.ndarray, layout_id: str, labels=None) -> list[SkeletonSequence]:
    out = []
    for i in range(arr.shape[0]):
        label = None if labels is None else int(labels[i])
        out.append(SkeletonSequence(data=arr[i][None], layout_id=layout_id, label=label))
    return out


def check_labels(y, n_samples: int) -> np.ndarray:
    y = np.asarray(y)
    if y.ndim != 1 or y.shape[0] != n_samples:
        raise ShapeError(f"labels must be a length-{n_samples} vector, got shape {y.shape}")
    return y
