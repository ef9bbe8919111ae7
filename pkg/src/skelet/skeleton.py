"""Keypoint layouts, skeleton graphs, and skeleton sequences.

Two layouts ship with the package as versioned edge tables under
``skelet/data``: the 133-point whole-body layout (17 body + 6 foot + 68 face
+ 42 hand points) and the 65-point expressive layout obtained by dropping
the facial block.  Both edge tables are trees, so the expressive graph has
exactly 64 edges forming a single connected component.
"""

from __future__ import annotations

from dataclasses import dataclass
from importlib import resources
from pathlib import Path

import numpy as np

from .errors import IsolatedJointError, LayoutError, ShapeError

__all__ = [
    "KeypointLayout",
    "AdjacencyMatrix",
    "SkeletonSequence",
    "build_adjacency",
    "add_self_links",
    "normalize_adjacency",
    "wholebody_layout",
    "expressive_layout",
    "load_edge_table",
    "save_edge_table",
    "WHOLEBODY_ID",
    "EXPRESSIVE_ID",
    "KNOWN_LAYOUTS",
    "FACE_RANGE",
]

WHOLEBODY_ID = "wholebody"
EXPRESSIVE_ID = "expressive"
KNOWN_LAYOUTS = {WHOLEBODY_ID: 133, EXPRESSIVE_ID: 65}

# Inclusive index range of the facial block inside the 133-point layout.
FACE_RANGE = (23, 90)

REGIONS = ("body", "face", "left_hand", "right_hand", "left_foot", "right_foot")

_BODY_NAMES = [
    "nose", "left_eye", "right_eye", "left_ear", "right_ear",
    "left_shoulder", "right_shoulder", "left_elbow", "right_elbow",
    "left_wrist", "right_wrist", "left_hip", "right_hip",
    "left_knee", "right_knee", "left_ankle", "right_ankle",
]
_FOOT_NAMES = [
    "left_big_toe", "left_small_toe", "left_heel",
    "right_big_toe", "right_small_toe", "right_heel",
]
_FINGERS = ["thumb", "forefinger", "middle_finger", "ring_finger", "pinky_finger"]


def _hand_names(side: str) -> list[str]:
    names = [f"{side}_hand_root"]
    for finger in _FINGERS:
        names += [f"{side}_{finger}{i}" for i in range(1, 5)]
    return names


@dataclass(frozen=True)
class KeypointLayout:
    """Named index map over a keypoint set, with its skeleton edge list."""

    layout_id: str
    names: tuple[str, ...]
    edges: tuple[tuple[int, int], ...]
    regions: tuple[str, ...]

    def __post_init__(self):
        n = self.total_count
        if len(self.regions) != n:
            raise LayoutError(f"{len(self.regions)} region labels for {n} keypoints")
        for r in self.regions:
            if r not in REGIONS:
                raise LayoutError(f"unknown region label {r!r}")
        for i, j in self.edges:
            if i == j:
                raise LayoutError(f"self-edge on keypoint {i}")
            if not (0 <= i < n and 0 <= j < n):
                raise LayoutError(f"edge ({i}, {j}) exceeds keypoint count {n}")

    @property
    def total_count(self) -> int:
        return len(self.names)

    def region_of(self, index: int) -> str:
        return self.regions[index]


@dataclass(frozen=True)
class AdjacencyMatrix:
    """A J x J non-negative coupling matrix over a joint set."""

    values: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values, dtype=np.float64)
        if v.ndim != 2 or v.shape[0] != v.shape[1]:
            raise ShapeError(f"adjacency must be square, got {v.shape}")
        if (v < 0).any():
            raise LayoutError("adjacency entries must be non-negative")
        v = v.copy()
        v.flags.writeable = False
        object.__setattr__(self, "values", v)

    @property
    def joint_count(self) -> int:
        return self.values.shape[0]


@dataclass
class SkeletonSequence:
    """Keypoint coordinates of I persons over T frames: data shape (I, J, T, C).

    C is 2 for (x, y) or 3 for (x, y, confidence); confidence must stay in
    [0, 1].  A confidence of exactly 0 marks a missing detection.
    """

    data: np.ndarray
    layout_id: str = WHOLEBODY_ID
    label: int | None = None

    def __post_init__(self):
        arr = np.asarray(self.data, dtype=np.float64)
        if arr.ndim == 3:
            arr = arr[None]
        if arr.ndim != 4:
            raise ShapeError(f"sequence data must be (I,J,T,C), got shape {arr.shape}")
        if arr.shape[3] not in (2, 3):
            raise ShapeError(f"channel count must be 2 or 3, got {arr.shape[3]}")
        if not np.isfinite(arr).all():
            raise ShapeError("sequence coordinates must be finite")
        if arr.shape[3] == 3:
            conf = arr[..., 2]
            if (conf < 0).any() or (conf > 1).any():
                raise ShapeError("confidence channel must lie in [0, 1]")
        self.data = arr

    @property
    def persons(self) -> int:
        return self.data.shape[0]

    @property
    def joints(self) -> int:
        return self.data.shape[1]

    @property
    def frames(self) -> int:
        return self.data.shape[2]

    @property
    def channels(self) -> int:
        return self.data.shape[3]

    def person(self, i: int) -> np.ndarray:
        """The (J, T, C) slice of one person."""
        return self.data[i]


# ---------------------------------------------------------------------------
# Graph construction

def build_adjacency(layout: KeypointLayout) -> AdjacencyMatrix:
    """Binary symmetric adjacency from the layout's edge list, zero diagonal."""
    n = layout.total_count
    a = np.zeros((n, n), dtype=np.float64)
    seen: set[tuple[int, int]] = set()
    for i, j in layout.edges:
        if i == j or not (0 <= i < n and 0 <= j < n):
            raise LayoutError(f"invalid edge ({i}, {j}) for {n} keypoints")
        key = (min(i, j), max(i, j))
        if key in seen:
            raise LayoutError(f"duplicate edge ({i}, {j})")
        seen.add(key)
        a[i, j] = 1.0
        a[j, i] = 1.0
    return AdjacencyMatrix(a)


def add_self_links(a: AdjacencyMatrix) -> AdjacencyMatrix:
    """Add the identity to a fresh adjacency (zero diagonal required).

    Applying this twice would silently double the self-weight, so a nonzero
    diagonal is rejected.
    """
    if np.diagonal(a.values).any():
        raise LayoutError("adjacency already carries self-links (nonzero diagonal)")
    return AdjacencyMatrix(a.values + np.eye(a.joint_count))


def normalize_adjacency(a: AdjacencyMatrix, method: str = "row") -> AdjacencyMatrix:
    """Degree-normalize a self-linked adjacency.

    ``row`` divides each row by its sum (every row of the result sums to 1);
    ``sym`` applies the symmetric D^-1/2 A D^-1/2 scaling.  Either way the
    support is preserved exactly.
    """
    sums = a.values.sum(axis=1)
    if (sums <= 0).any():
        bad = int(np.argmin(sums))
        raise IsolatedJointError(f"joint {bad} has zero row sum; cannot normalize")
    if method == "row":
        out = a.values / sums[:, None]
    elif method == "sym":
        inv_sqrt = 1.0 / np.sqrt(sums)
        out = a.values * inv_sqrt[:, None] * inv_sqrt[None, :]
    else:
        raise LayoutError(f"unknown normalization method {method!r}")
    return AdjacencyMatrix(out)


# ---------------------------------------------------------------------------
# Edge tables

def load_edge_table(path: str | Path) -> tuple[tuple[int, int], ...]:
    """Read an edge list: one ``i j`` pair per line, ``#`` comments allowed."""
    edges = []
    for lineno, raw in enumerate(Path(path).read_text().splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        parts = line.split()
        if len(parts) != 2:
            raise LayoutError(f"{path}:{lineno}: expected 'i j', got {raw!r}")
        try:
            i, j = int(parts[0]), int(parts[1])
        except ValueError as exc:
            raise LayoutError(f"{path}:{lineno}: non-integer edge {raw!r}") from exc
        edges.append((i, j))
    return tuple(edges)


def save_edge_table(edges, path: str | Path) -> None:
    lines = [f"{i} {j}" for i, j in edges]
    Path(path).write_text("\n".join(lines) + "\n")


def _packaged_edges(name: str) -> tuple[tuple[int, int], ...]:
    ref = resources.files("skelet").joinpath("data", name)
    edges = []
    for raw in ref.read_text().splitlines():
        line = raw.split("#", 1)[0].strip()
        if line:
            i, j = line.split()
            edges.append((int(i), int(j)))
    return tuple(edges)


def _wholebody_names() -> tuple[str, ...]:
    face = [f"face_{i}" for i in range(68)]
    return tuple(_BODY_NAMES + _FOOT_NAMES + face + _hand_names("left") + _hand_names("right"))


def _wholebody_regions() -> tuple[str, ...]:
    regions = ["body"] * 17
    regions += ["left_foot"] * 3 + ["right_foot"] * 3
    regions += ["face"] * 68
    regions += ["left_hand"] * 21 + ["right_hand"] * 21
    return tuple(regions)


def wholebody_layout() -> KeypointLayout:
    """The 133-point whole-body layout with its packaged tree edge table."""
    return KeypointLayout(
        layout_id=WHOLEBODY_ID,
        names=_wholebody_names(),
        edges=_packaged_edges("wholebody133.edges"),
        regions=_wholebody_regions(),
    )


def expressive_layout() -> KeypointLayout:
    """The 65-point layout: whole-body minus the facial block."""
    names = _wholebody_names()
    regions = _wholebody_regions()
    keep = [i for i in range(133) if not (FACE_RANGE[0] <= i <= FACE_RANGE[1])]
    return KeypointLayout(
        layout_id=EXPRESSIVE_ID,
        names=tuple(names[i] for i in keep),
        edges=_packaged_edges("expressive65.edges"),
        regions=tuple(regions[i] for i in keep),
    )
