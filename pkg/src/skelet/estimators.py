"""Scikit-learn style front end: selector, frame sampler, and classifier.

These wrappers adapt the functional core to the fit/transform/predict
conventions so the pipeline composes with the wider ecosystem
(``sklearn.pipeline.Pipeline``, ``clone``, grid search over ``get_params``).
"""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, ClassifierMixin, TransformerMixin

from .diffcore import Tensor
from .errors import ConfigError
from .mapping import contiguous_partition, expressive_partitions
from .network import NetworkConfig, TrainConfig, build_network, forward, train, uniform_sample
from .selection import (
    SelectionConfig,
    compute_stats,
    protocol_keep_indices,
    restrict_layout,
)
from .skeleton import KeypointLayout, SkeletonSequence, expressive_layout, wholebody_layout
from .validation import as_sequence_array, check_labels, sequences_from_array

__all__ = ["ExpressiveKeypointSelector", "UniformFrameSampler", "SkeletonActionClassifier"]


class ExpressiveKeypointSelector(TransformerMixin, BaseEstimator):
    """Drop redundant whole-body keypoints according to a named protocol.

    ``fit`` optionally computes the per-keypoint video/motion statistics of
    the training corpus (exposed as ``stats_``); the transform itself is a
    fixed index selection and needs no fitting.
    """

    def __init__(self, protocol: str = "wo-face", compute_statistics: bool = False):
        self.protocol = protocol
        self.compute_statistics = compute_statistics

    def fit(self, X, y=None):
        keep = protocol_keep_indices(self.protocol)
        self.keep_indices_ = np.asarray(keep, dtype=int)
        self.n_keypoints_out_ = len(keep)
        arr = as_sequence_array(X, joints=133)
        if self.compute_statistics:
            dataset = sequences_from_array(arr, "wholebody")
            self.stats_ = compute_stats(dataset, SelectionConfig(), wholebody_layout())
        return self

    def transform(self, X):
        if not hasattr(self, "keep_indices_"):
            self.fit(X)
        arr = as_sequence_array(X, joints=133)
        return np.ascontiguousarray(arr[:, self.keep_indices_])

    def get_layout(self):
        """The restricted layout matching the transform output."""
        keep = protocol_keep_indices(self.protocol)
        return restrict_layout(wholebody_layout(), keep, f"custom{len(keep)}")


class UniformFrameSampler(TransformerMixin, BaseEstimator):
    """Resample every sequence to a fixed frame count, one frame per split."""

    def __init__(self, target_frames: int = 100, seed: int = 0):
        self.target_frames = target_frames
        self.seed = seed

    def fit(self, X, y=None):
        return self

    def transform(self, X):
        arr = as_sequence_array(X)
        rng = np.random.default_rng(self.seed)
        out = np.empty(arr.shape[:2] + (self.target_frames,) + arr.shape[3:])
        for i in range(arr.shape[0]):
            seq = SkeletonSequence(data=arr[i][None], layout_id=f"custom{arr.shape[1]}")
            out[i] = uniform_sample(seq, self.target_frames, rng).person(0)
        return out


class SkeletonActionClassifier(ClassifierMixin, BaseEstimator):
    """Action classifier over single-person skeleton sequences.

    Builds the grouped-mapping network for the input's joint count and trains
    it with Nesterov SGD.  ``skeleton_transform=False`` fits the fixed-joint
    baseline twin instead.  Joint partitions come from the packaged 65-point
    tables when applicable, otherwise from even contiguous grouping.
    """

    def __init__(
        self,
        channels=(8, 16, 16),
        downsample_blocks=(2, 3),
        joint_schedule=None,
        groups=(1, 2, 4),
        temporal_kernel: int = 5,
        skeleton_transform: bool = True,
        epochs: int = 100,
        batch_size: int = 8,
        learning_rate: float = 0.05,
        momentum: float = 0.9,
        weight_decay: float = 0.0005,
        cosine_annealing: bool = True,
        seed: int = 0,
    ):
        self.channels = channels
        self.downsample_blocks = downsample_blocks
        self.joint_schedule = joint_schedule
        self.groups = groups
        self.temporal_kernel = temporal_kernel
        self.skeleton_transform = skeleton_transform
        self.epochs = epochs
        self.batch_size = batch_size
        self.learning_rate = learning_rate
        self.momentum = momentum
        self.weight_decay = weight_decay
        self.cosine_annealing = cosine_annealing
        self.seed = seed

    def _joint_schedule(self, joints: int) -> tuple[int, ...]:
        if self.joint_schedule is not None:
            schedule = tuple(self.joint_schedule)
            if schedule[0] != joints:
                raise ConfigError(f"joint schedule {schedule} does not start at {joints}")
            return schedule
        stages = len(tuple(self.downsample_blocks)) + 1
        if joints == 65 and stages == 3:
            return (65, 27, 11)
        schedule = [joints]
        for _ in range(stages - 1):
            schedule.append(max(1, schedule[-1] // 2))
        return tuple(schedule)

    def _partitions(self, schedule):
        if schedule == (65, 27, 11):
            return list(expressive_partitions())
        return [contiguous_partition(a, b) for a, b in zip(schedule, schedule[1:])]

    def fit(self, X, y):
        arr = as_sequence_array(X)
        y = check_labels(y, arr.shape[0])
        self.classes_, encoded = np.unique(y, return_inverse=True)
        if len(self.classes_) < 2:
            raise ConfigError("need at least two classes to fit a classifier")
        n, joints, frames, chans = arr.shape
        schedule = self._joint_schedule(joints)
        cfg = NetworkConfig(
            num_classes=len(self.classes_),
            channels=tuple(self.channels),
            downsample_blocks=tuple(self.downsample_blocks),
            joints=schedule,
            groups=tuple(self.groups),
            temporal_kernel=self.temporal_kernel,
            in_channels=chans,
            frames=frames,
        )
        if joints == 65:
            layout = expressive_layout()
        else:
            # Chain layout for toy joint counts: j -> j+1 edges keep the graph connected.
            layout = KeypointLayout(
                layout_id=f"custom{joints}",
                names=tuple(f"kp{i}" for i in range(joints)),
                edges=tuple((i, i + 1) for i in range(joints - 1)),
                regions=("body",) * joints,
            )
        partitions = self._partitions(schedule) if self.skeleton_transform else None
        self.network_ = build_network(
            cfg,
            layout,
            partitions,
            skeleton_transform=self.skeleton_transform,
            seed=self.seed,
        )
        dataset = sequences_from_array(arr, layout.layout_id, encoded)
        tc = TrainConfig(
            epochs=self.epochs,
            batch_size=self.batch_size,
            learning_rate=self.learning_rate,
            momentum=self.momentum,
            weight_decay=self.weight_decay,
            cosine_annealing=self.cosine_annealing,
            seed=self.seed,
        )
        self.history_ = train(self.network_, dataset, tc)
        return self

    def decision_function(self, X):
        arr = as_sequence_array(
            X, joints=self.network_.config.joints[0], channels=self.network_.config.in_channels
        )
        return np.stack([forward(self.network_, Tensor(arr[i])).data for i in range(arr.shape[0])])

    def predict_proba(self, X):
        logits = self.decision_function(X)
        shifted = logits - logits.max(axis=1, keepdims=True)
        exp = np.exp(shifted)
        return exp / exp.sum(axis=1, keepdims=True)

    def predict(self, X):
        return self.classes_[np.argmax(self.decision_function(X), axis=1)]
