"""Keypoint statistics and the whole-body -> expressive keypoint selection.

Two per-keypoint metrics drive the selection.  The video variance of keypoint
i is the population variance, across videos, of the keypoint's per-video mean
position (per-axis variances summed, i.e. mean squared Euclidean deviation).
The motion variance is the population standard deviation, across videos, of
the keypoint's mean per-frame displacement, scaled by a per-region area
coefficient.  Facial points score high on the first metric and low on the
second, which is what marks them as removable.

Frames whose confidence channel is exactly 0 are treated as missing
detections and excluded from both metrics.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import InsufficientDataError, InsufficientFramesError, LayoutError
from .skeleton import (
    EXPRESSIVE_ID,
    FACE_RANGE,
    KeypointLayout,
    SkeletonSequence,
    wholebody_layout,
)

__all__ = [
    "SelectionConfig",
    "KeypointStats",
    "video_variance",
    "motion_variance",
    "compute_stats",
    "select_keypoints",
    "select_expressive",
    "reinsert_dropped",
    "restrict_layout",
    "rank_keypoints",
    "PROTOCOLS",
    "protocol_keep_indices",
]

_REGION_GROUP = {
    "body": "body",
    "face": "face",
    "left_hand": "hand",
    "right_hand": "hand",
    "left_foot": "foot",
    "right_foot": "foot",
}

_DEFAULT_AREA_SCALE = {"body": 1.0, "face": 0.2, "hand": 0.15, "foot": 0.15}


@dataclass
class SelectionConfig:
    """Which indices to drop and how to scale per-region motion."""

    drop_ranges: tuple[tuple[int, int], ...] = (FACE_RANGE,)
    area_scale: dict[str, float] = field(default_factory=lambda: dict(_DEFAULT_AREA_SCALE))

    def __post_init__(self):
        for lo, hi in self.drop_ranges:
            if not (0 <= lo <= hi <= 132):
                raise LayoutError(f"drop range ({lo}, {hi}) outside [0, 132]")
        for name, eps in self.area_scale.items():
            if eps <= 0:
                raise LayoutError(f"area scale for {name!r} must be positive, got {eps}")

    def scale_for(self, region: str) -> float:
        return self.area_scale[_REGION_GROUP[region]]


@dataclass(frozen=True)
class KeypointStats:
    """Per-keypoint metric vectors, aligned with the layout indexing."""

    video_variance: np.ndarray
    motion_variance: np.ndarray

    def __post_init__(self):
        vv = np.asarray(self.video_variance, dtype=np.float64)
        mv = np.asarray(self.motion_variance, dtype=np.float64)
        if vv.shape != mv.shape or vv.ndim != 1:
            raise LayoutError(f"metric shapes disagree: {vv.shape} vs {mv.shape}")
        if (vv < 0).any() or (mv < 0).any():
            raise LayoutError("metrics must be non-negative")
        object.__setattr__(self, "video_variance", vv)
        object.__setattr__(self, "motion_variance", mv)


def _samples(dataset: list[SkeletonSequence]) -> list[np.ndarray]:
    """Flatten each (video, person) pair into one (J, T, C) sample.

    All-zero padded persons are skipped; every remaining person counts as its
    own sample, matching per-person statistics over a multi-person corpus.
    """
    if not dataset:
        return []
    joints = dataset[0].joints
    out = []
    for seq in dataset:
        if seq.joints != joints:
            raise LayoutError(f"mixed joint counts in dataset: {seq.joints} vs {joints}")
        for i in range(seq.persons):
            person = seq.person(i)
            if seq.persons > 1 and not person.any():
                continue
            out.append(person)
    return out


def _valid_mask(person: np.ndarray) -> np.ndarray:
    """(J, T) mask of frames with a detection (confidence > 0, or all if C=2)."""
    if person.shape[2] == 3:
        return person[..., 2] > 0.0
    return np.ones(person.shape[:2], dtype=bool)


def video_variance(dataset: list[SkeletonSequence]) -> np.ndarray:
    """Population variance across videos of each keypoint's per-video mean position."""
    samples = _samples(dataset)
    if len(samples) < 2:
        raise InsufficientDataError(f"video variance needs at least 2 videos, got {len(samples)}")
    means = []
    for person in samples:
        coords = person[..., :2]
        mask = _valid_mask(person)
        counts = np.maximum(mask.sum(axis=1), 1)[:, None]
        means.append((coords * mask[..., None]).sum(axis=1) / counts)
    v = np.stack(means)  # (S, J, 2)
    center = v.mean(axis=0)
    return np.square(v - center).sum(axis=2).mean(axis=0)


def motion_variance(dataset: list[SkeletonSequence], config: SelectionConfig, layout: KeypointLayout) -> np.ndarray:
    """Population std across videos of each keypoint's scaled mean frame-to-frame step."""
    samples = _samples(dataset)
    if len(samples) < 2:
        raise InsufficientDataError(f"motion variance needs at least 2 videos, got {len(samples)}")
    eps = np.array([config.scale_for(layout.region_of(i)) for i in range(layout.total_count)])
    per_video = []
    for person in samples:
        if person.shape[1] < 2:
            raise InsufficientFramesError(f"motion variance needs T >= 2, got T = {person.shape[1]}")
        coords = person[..., :2]
        steps = np.linalg.norm(coords[:, 1:] - coords[:, :-1], axis=2)  # (J, T-1)
        mask = _valid_mask(person)
        pair_ok = mask[:, 1:] & mask[:, :-1]
        counts = np.maximum(pair_ok.sum(axis=1), 1)
        per_video.append((steps * pair_ok).sum(axis=1) / counts / eps)
    m = np.stack(per_video)
    return m.std(axis=0)  # population std, no Bessel correction


def compute_stats(
    dataset: list[SkeletonSequence],
    config: SelectionConfig | None = None,
    layout: KeypointLayout | None = None,
) -> KeypointStats:
    config = config or SelectionConfig()
    layout = layout or wholebody_layout()
    return KeypointStats(
        video_variance=video_variance(dataset),
        motion_variance=motion_variance(dataset, config, layout),
    )


# ---------------------------------------------------------------------------
# Selection

def _keep_from_drop_ranges(total: int, drop_ranges) -> list[int]:
    dropped = set()
    for lo, hi in drop_ranges:
        dropped.update(range(lo, hi + 1))
    return [i for i in range(total) if i not in dropped]


def restrict_layout(layout: KeypointLayout, keep: list[int], layout_id: str) -> KeypointLayout:
    """Restrict a layout to the kept indices, remapping the surviving edges."""
    remap = {old: new for new, old in enumerate(keep)}
    edges = tuple(
        (remap[i], remap[j]) for i, j in layout.edges if i in remap and j in remap
    )
    return KeypointLayout(
        layout_id=layout_id,
        names=tuple(layout.names[i] for i in keep),
        edges=edges,
        regions=tuple(layout.regions[i] for i in keep),
    )


def select_keypoints(seq: SkeletonSequence, keep: list[int], layout_id: str) -> SkeletonSequence:
    """Keep the listed joint indices (original order preserved)."""
    if max(keep, default=-1) >= seq.joints:
        raise LayoutError(f"keep index {max(keep)} exceeds joint count {seq.joints}")
    return SkeletonSequence(
        data=np.ascontiguousarray(seq.data[:, keep]),
        layout_id=layout_id,
        label=seq.label,
    )


def select_expressive(seq: SkeletonSequence, config: SelectionConfig | None = None) -> SkeletonSequence:
    """Drop the facial block from a 133-point sequence, yielding 65 points.

    Body and foot indices 0-22 are retained in place; hand indices 91-132
    shift down to 23-64.
    """
    config = config or SelectionConfig()
    if seq.joints != 133:
        raise LayoutError(f"expressive selection expects 133 joints, got {seq.joints}")
    keep = _keep_from_drop_ranges(133, config.drop_ranges)
    layout_id = EXPRESSIVE_ID if config.drop_ranges == (FACE_RANGE,) else f"custom{len(keep)}"
    return select_keypoints(seq, keep, layout_id)


def reinsert_dropped(seq: SkeletonSequence, total: int, keep: list[int]) -> SkeletonSequence:
    """Inverse padding: place kept joints back at their original indices, zeros elsewhere."""
    if seq.joints != len(keep):
        raise LayoutError(f"sequence has {seq.joints} joints but {len(keep)} keep indices")
    data = np.zeros((seq.persons, total, seq.frames, seq.channels))
    data[:, keep] = seq.data
    return SkeletonSequence(data=data, layout_id=f"padded{total}", label=seq.label)


# ---------------------------------------------------------------------------
# Tab-style selection protocols over the 133-point layout

def _simple_finger_drops() -> list[tuple[int, int]]:
    # Keep each hand root and fingertip; drop the three inner points per finger.
    drops = []
    for root in (91, 112):
        for base in range(root + 1, root + 21, 4):
            drops.append((base, base + 2))
    return drops


PROTOCOLS: dict[str, tuple[tuple[int, int], ...]] = {
    "wholebody": (),
    "wo-face": (FACE_RANGE,),
    "wo-face-feet": (FACE_RANGE, (17, 22)),
    "simple-fingers": (FACE_RANGE, *(_simple_finger_drops())),
    "wo-hands": (FACE_RANGE, (91, 132)),
}


def protocol_keep_indices(protocol: str) -> list[int]:
    if protocol not in PROTOCOLS:
        raise LayoutError(f"unknown selection protocol {protocol!r}; known: {sorted(PROTOCOLS)}")
    return _keep_from_drop_ranges(133, PROTOCOLS[protocol])


# ---------------------------------------------------------------------------
# Ranking report

@dataclass(frozen=True)
class RankRow:
    index: int
    name: str
    video_variance: float
    motion_variance: float
    removal_candidate: bool


def rank_keypoints(
    stats: KeypointStats,
    layout: KeypointLayout | None = None,
    video_percentile: float = 50.0,
    motion_percentile: float = 50.0,
) -> list[RankRow]:
    """Sort keypoints by (video variance desc, motion variance asc).

    Ties keep the original index order.  A keypoint is flagged as a removal
    candidate when its video variance is at or above the given percentile and
    its motion variance at or below the other: consistently displaced across
    videos yet barely moving within them.
    """
    layout = layout or wholebody_layout()
    vv, mv = stats.video_variance, stats.motion_variance
    if len(vv) != layout.total_count:
        raise LayoutError(f"stats length {len(vv)} != layout count {layout.total_count}")
    vv_cut = float(np.percentile(vv, video_percentile))
    mv_cut = float(np.percentile(mv, motion_percentile))
    order = sorted(range(len(vv)), key=lambda i: (-vv[i], mv[i], i))
    return [
        RankRow(
            index=i,
            name=layout.names[i],
            video_variance=float(vv[i]),
            motion_variance=float(mv[i]),
            removal_candidate=bool(vv[i] >= vv_cut and mv[i] <= mv_cut),
        )
        for i in order
    ]


def format_rank_table(rows: list[RankRow]) -> str:
    """Tab-separated report, one keypoint per row."""
    lines = ["index\tname\tvideo_variance\tmotion_variance\tremoval_candidate"]
    for r in rows:
        lines.append(
            f"{r.index}\t{r.name}\t{r.video_variance:.9g}\t{r.motion_variance:.9g}\t"
            f"{int(r.removal_candidate)}"
        )
    return "\n".join(lines)
